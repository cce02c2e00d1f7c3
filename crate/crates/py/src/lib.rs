//! Python module `dynwalk`: laws, walker parameters, cycle simulation,
//! closed forms and the verification suite.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

use dynwalk::closed_forms;
use dynwalk::regeneration::{run_cycles_parallel, write_records_csv, RegenCycleRecord};
use dynwalk::rng::stream;
use dynwalk::walkers::run;

fn err(e: dynwalk::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Serde value to native Python objects via the json module.
fn to_py<T: Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (s,))?.unbind())
}

#[pyclass(name = "ConductanceLaw", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyLaw(dynwalk::ConductanceLaw);

#[pymethods]
impl PyLaw {
    /// `p` is the probability of `a`.
    #[staticmethod]
    #[pyo3(signature = (a, b, p, kappa=None))]
    fn two_point(a: f64, b: f64, p: f64, kappa: Option<f64>) -> PyResult<Self> {
        let law = match kappa {
            Some(k) => dynwalk::ConductanceLaw::two_point_with_kappa(a, b, p, k),
            None => dynwalk::ConductanceLaw::two_point(a, b, p),
        };
        law.map(PyLaw).map_err(err)
    }

    #[staticmethod]
    fn point(value: f64) -> PyResult<Self> {
        dynwalk::ConductanceLaw::point(value).map(PyLaw).map_err(err)
    }

    #[staticmethod]
    fn uniform(lo: f64, hi: f64) -> PyResult<Self> {
        dynwalk::ConductanceLaw::uniform(lo, hi).map(PyLaw).map_err(err)
    }

    #[staticmethod]
    fn discrete(values: Vec<f64>, probs: Vec<f64>, kappa: f64) -> PyResult<Self> {
        if values.len() != probs.len() {
            return Err(PyValueError::new_err("values and probs differ in length"));
        }
        dynwalk::ConductanceLaw::discrete(values.into_iter().zip(probs).collect(), kappa).map(PyLaw).map_err(err)
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.0.kappa()
    }

    fn mean(&self) -> f64 {
        self.0.mean()
    }

    fn capabilities(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.0.validate())
    }

    fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream(seed, 0);
        (0..n).map(|_| self.0.sample(&mut rng)).collect()
    }

    fn __repr__(&self) -> String {
        format!("ConductanceLaw({})", serde_json::to_string(&self.0).unwrap_or_default())
    }
}

#[pyclass(name = "WalkerParams", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyParams(dynwalk::WalkerParams);

#[pymethods]
impl PyParams {
    /// `kind` is one of vbrw, nvbrw, cbrw, tasym.
    #[new]
    #[pyo3(signature = (kind, lam, mu, d, law))]
    fn new(kind: &str, lam: f64, mu: f64, d: usize, law: &PyLaw) -> PyResult<Self> {
        let kind = kind.parse().map_err(err)?;
        dynwalk::WalkerParams::new(kind, lam, mu, d, law.0.clone()).map(PyParams).map_err(err)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.0.kind.name()
    }

    #[getter]
    fn lam(&self) -> f64 {
        self.0.lambda
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.0.mu
    }

    #[getter]
    fn d(&self) -> usize {
        self.0.d
    }

    fn attempt_rate(&self) -> f64 {
        self.0.attempt_rate()
    }

    fn __repr__(&self) -> String {
        let p = &self.0;
        format!("WalkerParams(kind={}, lam={}, mu={}, d={})", p.kind.name(), p.lambda, p.mu, p.d)
    }
}

/// Regeneration cycle records.
#[pyclass(name = "Cycles", frozen)]
struct PyCycles {
    d: usize,
    records: Vec<RegenCycleRecord>,
}

#[pymethods]
impl PyCycles {
    fn __len__(&self) -> usize {
        self.records.len()
    }

    fn tau(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.tau).collect()
    }

    /// Displacement along `axis` (0 is the bias direction).
    #[pyo3(signature = (axis=0))]
    fn dx(&self, axis: usize) -> Vec<i64> {
        self.records.iter().map(|r| r.dx.coord(axis)).collect()
    }

    fn attempts(&self) -> Vec<u64> {
        self.records.iter().map(|r| r.n).collect()
    }

    fn estimate_speed(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &dynwalk::estimate_speed(&self.records).map_err(err)?)
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        write_records_csv(&self.records, self.d, &mut buf).map_err(err)?;
        String::from_utf8(buf).map_err(|e| PyValueError::new_err(e.to_string()))
    }
}

#[pyfunction]
#[pyo3(signature = (params, n, seed, replicas=8))]
fn run_cycles(py: Python<'_>, params: &PyParams, n: usize, seed: u64, replicas: usize) -> PyResult<PyCycles> {
    let p = params.0.clone();
    let records = py.detach(move || run_cycles_parallel(&p, n, seed, replicas)).map_err(err)?;
    Ok(PyCycles { d: params.0.d, records })
}

/// One trajectory up to `horizon` in the memoryless environment; `m` selects a torus.
#[pyfunction]
#[pyo3(signature = (params, horizon, seed, m=None))]
fn simulate(py: Python<'_>, params: &PyParams, horizon: f64, seed: u64, m: Option<i64>) -> PyResult<Py<PyAny>> {
    let p = &params.0;
    let geometry = match m {
        Some(m) => dynwalk::Geometry::torus(p.d, m),
        None => dynwalk::Geometry::lattice(p.d),
    }
    .map_err(err)?;
    let mut env = dynwalk::DynEnvironment::new(geometry, p.mu, p.law.clone(), dynwalk::EnvMode::MemorylessLazy).map_err(err)?;
    let traj = run(p, &mut env, horizon, None, true, &mut stream(seed, 0)).map_err(err)?;
    let d = p.d;
    let out = serde_json::json!({
        "time": traj.events.iter().map(|e| e.time).collect::<Vec<_>>(),
        "position": traj.events.iter().map(|e| e.position.0[..d].to_vec()).collect::<Vec<_>>(),
        "success": traj.events.iter().map(|e| e.success).collect::<Vec<_>>(),
        "final_position": traj.final_position.0[..d].to_vec(),
    });
    to_py(py, &out)
}

#[pyfunction]
fn z_lambda(lam: f64, d: usize) -> f64 {
    closed_forms::z_lambda(lam, d)
}

#[pyfunction]
fn v_asym(law: &PyLaw, mu: f64) -> PyResult<f64> {
    closed_forms::v_asym(&law.0, mu).map_err(err)
}

/// `(zeroth, first)` of the large-bias expansion of the normalized walk's speed.
#[pyfunction]
fn nvbrw_expansion(law: &PyLaw, mu: f64, d: usize) -> PyResult<(f64, f64)> {
    let c = closed_forms::nvbrw_expansion(&law.0, mu, d).map_err(err)?;
    Ok((c.zeroth, c.first))
}

#[pyfunction]
fn alt_first_order(law: &PyLaw, mu: f64) -> PyResult<f64> {
    closed_forms::alt_first_order(&law.0, mu).map_err(err)
}

#[pyfunction]
fn two_point_a(mu: f64, alpha: f64) -> PyResult<f64> {
    closed_forms::two_point_a(mu, alpha).map_err(err)
}

/// `(expected_tau, expected_n)` per cycle of the variable speed walk.
#[pyfunction]
fn vbrw_regen_moments(lam: f64, mu: f64, kappa: f64, d: usize) -> PyResult<(f64, f64)> {
    let m = closed_forms::vbrw_regen_moments(lam, mu, kappa, d).map_err(err)?;
    Ok((m.expected_tau, m.expected_n))
}

/// `(lambda_star, rate)` for the drifted walk with steps −1 and +l.
#[pyfunction]
fn ld_lambda_star(p: f64, l: u32, y: f64) -> PyResult<(f64, f64)> {
    let r = dynwalk::birth_death::ld_lambda_star(p, l, y).map_err(err)?;
    Ok((r.lambda_star, r.rate))
}

/// `n` return times `(tau, steps)` of the batch-birth/linear-death chain.
#[pyfunction]
fn bd_returns(alpha: f64, mu: f64, l: u32, n: usize, seed: u64) -> PyResult<Vec<(f64, u64)>> {
    let p = dynwalk::birth_death::BDParams::new(alpha, mu, l).map_err(err)?;
    let runs = dynwalk::rng::par_samples(seed, n, |r| dynwalk::birth_death::simulate_bd_return(&p, r)).map_err(err)?;
    Ok(runs.into_iter().map(|r| (r.tau, r.steps)).collect())
}

/// Total ordering violations over `paths` monotone coupled pairs (0 expected).
#[pyfunction]
fn monotone_violations(lam: f64, epsilon: f64, mu: f64, law: &PyLaw, horizon: f64, paths: u64, seed: u64) -> PyResult<u64> {
    let mut total = 0;
    for i in 0..paths {
        let pair = dynwalk::couplings::coupled_monotone_d1(lam, epsilon, mu, &law.0, horizon, &mut stream(seed, i)).map_err(err)?;
        total += pair.violations;
    }
    Ok(total)
}

#[pyfunction]
#[pyo3(signature = (seed, quick=true, replicas=8))]
fn verify(py: Python<'_>, seed: u64, quick: bool, replicas: usize) -> PyResult<Py<PyAny>> {
    let suite = py.detach(move || dynwalk::verification::run_suite(seed, quick, replicas)).map_err(err)?;
    to_py(py, &suite)
}

#[pymodule]
#[pyo3(name = "dynwalk")]
fn dynwalk_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", dynwalk::version_string())?;
    m.add_class::<PyLaw>()?;
    m.add_class::<PyParams>()?;
    m.add_class::<PyCycles>()?;
    m.add_function(wrap_pyfunction!(run_cycles, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(z_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(v_asym, m)?)?;
    m.add_function(wrap_pyfunction!(nvbrw_expansion, m)?)?;
    m.add_function(wrap_pyfunction!(alt_first_order, m)?)?;
    m.add_function(wrap_pyfunction!(two_point_a, m)?)?;
    m.add_function(wrap_pyfunction!(vbrw_regen_moments, m)?)?;
    m.add_function(wrap_pyfunction!(ld_lambda_star, m)?)?;
    m.add_function(wrap_pyfunction!(bd_returns, m)?)?;
    m.add_function(wrap_pyfunction!(monotone_violations, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
