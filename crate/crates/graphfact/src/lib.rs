pub mod composition_complex;
pub mod error;
pub mod eval_map;
pub mod graded_poly;
pub mod graph_complex;
pub mod homology_engine;
pub mod linalg;
pub mod ls_model;
pub mod pd_algebra;
pub mod poly;
pub mod scalars;
pub mod suites;

pub use error::{Error, Result};
