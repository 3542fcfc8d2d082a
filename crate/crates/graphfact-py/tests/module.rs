//! The module initializes in an embedded interpreter and round-trips values.

use pyo3::prelude::*;
use pyo3::types::PyDict;

#[test]
fn module_exposes_types_and_functions() {
    Python::attach(|py| {
        let m = pyo3::wrap_pymodule!(graphfact_py::graphfact_py)(py);
        let locals = PyDict::new(py);
        locals.set_item("gf", m).unwrap();
        let code = c"
s3 = gf.Algebra.sphere(3)
e = gf.EvalMap(1, s3)
r = (s3.dim, gf.rank([[1, 2], [3, 4]]), e.phi({'arity': 1, 'internal': 1, 'edges': [['1', 'i1']]}, ['x1']))
";
        py.run(code, None, Some(&locals)).unwrap();
        let r: (usize, usize, String) = locals.get_item("r").unwrap().unwrap().extract().unwrap();
        assert_eq!(r, (2, 2, "0".to_string()));
    });
}
