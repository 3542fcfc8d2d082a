//! Python bindings. Rationals cross the boundary as strings (`"3/4"`),
//! polynomials as their text form, graphs and reports as JSON.

use std::sync::Arc;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyString;
use serde_json::Value;

use graphfact::composition_complex::CompositionComplex;
use graphfact::eval_map::EvalMap as CoreEvalMap;
use graphfact::graded_poly::VariableSet;
use graphfact::homology_engine::{self, SectorSpec, SparseMatrix, Split};
use graphfact::pd_algebra::PDAlgebra;
use graphfact::poly::Poly;
use graphfact::scalars::{HbarSeries, Q};
use graphfact::suites::{self, Suite, SuiteConfig};
use graphfact::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_py(py: Python<'_>, v: &Value) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| py_err(e.into()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// A JSON argument given either as text or as a Python object.
fn from_py(obj: &Bound<'_, PyAny>) -> PyResult<Value> {
    let text: String = match obj.cast::<PyString>() {
        Ok(s) => s.to_str()?.to_owned(),
        Err(_) => obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?,
    };
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(format!("bad JSON: {e}")))
}

fn rational(obj: &Bound<'_, PyAny>) -> PyResult<Q> {
    let text = obj.str()?.to_str()?.trim().to_owned();
    text.parse::<Q>().map_err(|_| PyValueError::new_err(format!("not a rational number: {text}")))
}

/// A Poincaré duality algebra standing in for the cohomology of a closed manifold.
#[pyclass(name = "Algebra", module = "graphfact", frozen)]
struct PyAlgebra {
    inner: Arc<PDAlgebra>,
}

#[pymethods]
impl PyAlgebra {
    #[staticmethod]
    fn sphere(n: i64) -> PyResult<Self> {
        if n < 1 {
            return Err(PyValueError::new_err("sphere dimension must be positive"));
        }
        Ok(PyAlgebra { inner: Arc::new(PDAlgebra::sphere(n)) })
    }

    #[staticmethod]
    fn torus() -> Self {
        PyAlgebra { inner: Arc::new(PDAlgebra::torus()) }
    }

    #[staticmethod]
    fn from_json(spec: &Bound<'_, PyAny>) -> PyResult<Self> {
        let v = from_py(spec)?;
        Ok(PyAlgebra { inner: Arc::new(PDAlgebra::from_json_value(&v).map_err(py_err)?) })
    }

    fn to_json(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.to_json_value())
    }

    #[getter]
    fn n(&self) -> i64 {
        self.inner.n()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Basis element names, unit first.
    #[getter]
    fn names(&self) -> Vec<String> {
        (0..self.inner.dim()).map(|i| self.inner.name(i).to_owned()).collect()
    }

    fn degree(&self, i: usize) -> PyResult<i64> {
        self.check(i)?;
        Ok(self.inner.degree(i))
    }

    /// `⟨e_i, e_j⟩` as a rational string.
    fn pairing(&self, i: usize, j: usize) -> PyResult<String> {
        self.check(i)?;
        self.check(j)?;
        Ok(self.inner.pair(i, j).to_string())
    }

    fn __repr__(&self) -> String {
        format!("Algebra(n={}, basis={:?})", self.inner.n(), self.names())
    }
}

impl PyAlgebra {
    fn check(&self, i: usize) -> PyResult<()> {
        if i < self.inner.dim() {
            Ok(())
        } else {
            Err(PyValueError::new_err(format!("basis index {i} out of range")))
        }
    }
}

/// The map `φ` from decorated graphs to multilinear operations on polynomials.
#[pyclass(name = "EvalMap", module = "graphfact", frozen)]
struct PyEvalMap {
    inner: CoreEvalMap,
}

impl PyEvalMap {
    fn graph(&self, graph: &Bound<'_, PyAny>) -> PyResult<(graphfact::graph_complex::Graph, bool)> {
        self.inner.graphs().graph_from_json(&from_py(graph)?).map_err(py_err)
    }
}

#[pymethods]
impl PyEvalMap {
    /// `big_n` pairs of variables `x_i, p_i` over `algebra`.
    #[new]
    fn new(big_n: usize, algebra: &PyAlgebra) -> PyResult<Self> {
        Ok(PyEvalMap { inner: CoreEvalMap::new(big_n, algebra.inner.clone()).map_err(py_err)? })
    }

    /// `φ(graph)(f₁, …, f_r)`; the graph is JSON text or a dict.
    fn phi(&self, py: Python<'_>, graph: &Bound<'_, PyAny>, polys: Vec<String>) -> PyResult<String> {
        let (g, negate) = self.graph(graph)?;
        let table = self.inner.vars().table().clone();
        py.detach(|| {
            let f = polys.iter().map(|s| Poly::<Q>::parse(&table, s)).collect::<graphfact::Result<Vec<_>>>()?;
            let x = self.inner.phi(&g, &f)?;
            Ok(if negate { x.neg() } else { x }.render())
        })
        .map_err(py_err)
    }

    /// `φ_m` for a Maurer–Cartan element `m` with `hbar` coefficients, truncated at `hbar_order`.
    #[pyo3(signature = (m, graph, polys, hbar_order = 2))]
    fn phi_m(&self, py: Python<'_>, m: &str, graph: &Bound<'_, PyAny>, polys: Vec<String>, hbar_order: usize) -> PyResult<String> {
        let (g, negate) = self.graph(graph)?;
        py.detach(|| {
            let vars = self.inner.vars();
            let cut = |p: Poly<HbarSeries>| p.map_coeffs(|c| c.truncate(hbar_order));
            let m = cut(vars.parse::<HbarSeries>(m)?);
            let f = polys.iter().map(|s| vars.parse::<HbarSeries>(s)).collect::<graphfact::Result<Vec<_>>>()?;
            let x = cut(self.inner.phi_m(&m, &g, &f)?);
            Ok(if negate { x.neg() } else { x }.render())
        })
        .map_err(py_err)
    }

    #[getter]
    fn big_n(&self) -> usize {
        self.inner.vars().big_n()
    }
}

/// `{f, g}` in the shifted Poisson algebra on `x₁..x_N, p₁..p_N` for dimension `n`.
#[pyfunction]
fn poisson_bracket(f: &str, g: &str, big_n: usize, n: i64) -> PyResult<String> {
    let vars = VariableSet::new(big_n, n).map_err(py_err)?;
    let f = vars.parse::<Q>(f).map_err(py_err)?;
    let g = vars.parse::<Q>(g).map_err(py_err)?;
    Ok(vars.poisson_bracket(&f, &g).map_err(py_err)?.render())
}

/// Exact rank of a matrix of rationals given as ints, strings or `Fraction`s.
#[pyfunction]
fn rank(rows: Vec<Vec<Bound<'_, PyAny>>>) -> PyResult<usize> {
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    let dense: Vec<Vec<Q>> = rows.iter().map(|r| r.iter().map(rational).collect()).collect::<PyResult<_>>()?;
    if dense.is_empty() || width == 0 {
        return Ok(0);
    }
    Ok(SparseMatrix::from_dense(&dense).rank())
}

/// Run a verification suite and return its report as a dict.
#[pyfunction]
#[pyo3(signature = (
    suite, algebra, big_n = 1, arity = 2, max_internal = 3, max_edges = 4, max_decorations = 2,
    max_weight = 3, samples = 200, hbar_order = 2, seed = 0
))]
#[allow(clippy::too_many_arguments)]
fn run_suite(
    py: Python<'_>,
    suite: &str,
    algebra: &PyAlgebra,
    big_n: usize,
    arity: usize,
    max_internal: usize,
    max_edges: usize,
    max_decorations: usize,
    max_weight: usize,
    samples: usize,
    hbar_order: usize,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let suite: Suite = suite.parse().map_err(py_err)?;
    let mut cfg = SuiteConfig::new(algebra.inner.clone(), big_n);
    cfg.arity = arity;
    cfg.max_internal = max_internal;
    cfg.max_edges = max_edges;
    cfg.max_decorations = max_decorations;
    cfg.max_weight = max_weight;
    cfg.tree_max_internal = cfg.tree_max_internal.min(max_internal);
    cfg.tree_max_edges = cfg.tree_max_edges.min(max_edges);
    cfg.samples = samples;
    cfg.hbar_order = hbar_order;
    cfg.seed = seed;
    let report = py.detach(|| suites::run(suite, &cfg)).map_err(py_err)?;
    to_py(py, &report.to_json())
}

/// Sector homology of `(Graphs_M(arity), δ_split)` compared with the recursion.
#[pyfunction]
#[pyo3(signature = (algebra, arity, max_internal = 3, max_edges = 4, max_decorations = 2))]
fn graph_homology(
    py: Python<'_>,
    algebra: &PyAlgebra,
    arity: usize,
    max_internal: usize,
    max_edges: usize,
    max_decorations: usize,
) -> PyResult<Py<PyAny>> {
    let spec = SectorSpec::new(arity, max_internal, max_edges, max_decorations);
    let report = py
        .detach(|| homology_engine::verify_recursion(&algebra.inner, arity, &spec, Split::Reduced))
        .map_err(py_err)?;
    to_py(py, &report.to_json())
}

/// Harrison homology by (weight, letters) up to the given weight.
#[pyfunction]
fn harrison_homology(py: Python<'_>, algebra: &PyAlgebra, big_n: usize, max_weight: usize) -> PyResult<Vec<(usize, usize, usize, usize)>> {
    let rows = py
        .detach(|| {
            let cc = CompositionComplex::new(big_n, algebra.inner.clone())?;
            homology_engine::harrison_homology(&cc, max_weight)
        })
        .map_err(py_err)?;
    Ok(rows.iter().map(|r| (r.weight, r.letters, r.dim, r.homology)).collect())
}

#[pymodule(name = "graphfact")]
pub fn graphfact_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyAlgebra>()?;
    m.add_class::<PyEvalMap>()?;
    m.add_function(wrap_pyfunction!(poisson_bracket, m)?)?;
    m.add_function(wrap_pyfunction!(rank, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    m.add_function(wrap_pyfunction!(graph_homology, m)?)?;
    m.add_function(wrap_pyfunction!(harrison_homology, m)?)?;
    let names: Vec<&str> = Suite::ALL.iter().map(|s| s.name()).collect();
    m.add("SUITES", names)?;
    Ok(())
}
