//! Python bindings: finite-chain analysis, bounds and plans, convex bodies and experiment runs.

use convexmc::bounds::{self, SamplerPlan};
use convexmc::estimator::replication_rng;
use convexmc::geometry::{make_body, BodyKind, ConvexBody};
use convexmc::samplers::hit_and_run_step;
use convexmc::spectral_lab::{self, DistributionVector, FiniteChain};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn chain(rows: &[Vec<f64>], tol: f64) -> PyResult<FiniteChain> {
    FiniteChain::from_rows(rows, tol).map_err(value_err)
}

/// Spectral report of a reversible transition matrix given as a list of rows.
#[pyfunction]
#[pyo3(signature = (rows, tol = 1e-9))]
fn analyze_chain<'py>(py: Python<'py>, rows: Vec<Vec<f64>>, tol: f64) -> PyResult<Bound<'py, PyDict>> {
    let c = chain(&rows, tol)?;
    let r = spectral_lab::analyze(&c).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("pi", c.pi().as_slice().to_vec())?;
    d.set_item("spectrum", c.spectrum())?;
    d.set_item("lambda", r.lambda)?;
    d.set_item("opnorm2", r.opnorm2)?;
    d.set_item("gap", r.gap)?;
    d.set_item("phi", r.phi)?;
    d.set_item("cheeger_lo", r.cheeger_lo)?;
    d.set_item("cheeger_hi", r.cheeger_hi)?;
    Ok(d)
}

/// `||P^n - S||` on `L_p(pi)` for `p` in {1, 2}.
#[pyfunction]
#[pyo3(signature = (rows, n, p, tol = 1e-9))]
fn power_norm(rows: Vec<Vec<f64>>, n: usize, p: u32, tol: f64) -> PyResult<f64> {
    spectral_lab::power_norm(&chain(&rows, tol)?, n, p).map_err(value_err)
}

/// `(lhs, bound_l1, bound_l2)` for `||nu P^n - pi||_tv`.
#[pyfunction]
#[pyo3(signature = (rows, nu, n, tol = 1e-9))]
fn tv_bounds(rows: Vec<Vec<f64>>, nu: Vec<f64>, n: usize, tol: f64) -> PyResult<(f64, f64, f64)> {
    let nu = DistributionVector::new(nu).map_err(value_err)?;
    let b = spectral_lab::tv_convergence_bounds(&chain(&rows, tol)?, &nu, n).map_err(value_err)?;
    Ok((b.lhs, b.bound_l1, b.bound_l2))
}

/// Fitted `(alpha, M)` and whether the ergodicity implications hold up to `n_max`.
#[pyfunction]
#[pyo3(signature = (rows, n_max, tol = 1e-9))]
fn verify_diagram<'py>(py: Python<'py>, rows: Vec<Vec<f64>>, n_max: usize, tol: f64) -> PyResult<Bound<'py, PyDict>> {
    let r = spectral_lab::verify_diagram(&chain(&rows, tol)?, n_max).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("alpha", r.alpha)?;
    d.set_item("m_fit", r.m_fit)?;
    d.set_item("gap", r.gap)?;
    d.set_item("worst_l1_excess", r.worst_l1_excess)?;
    d.set_item("holds", r.holds())?;
    Ok(d)
}

#[pyfunction]
fn stationary_mse_bound(n: u64, lam: f64) -> PyResult<f64> {
    bounds::stationary_mse_bound(n, lam).map_err(value_err)
}

#[pyfunction]
fn mse_bound(n: u64, n0: u64, lam: f64, gamma: f64, c_nu: f64) -> PyResult<f64> {
    bounds::mse_bound(n, n0, lam, gamma, c_nu).map_err(value_err)
}

#[pyfunction]
fn burn_in(c_nu: f64, gamma: f64) -> PyResult<u128> {
    Ok(bounds::burn_in(c_nu, gamma).map_err(value_err)?.n0)
}

#[pyfunction]
fn cheeger_bracket(phi: f64) -> PyResult<(f64, f64)> {
    bounds::cheeger_bracket(phi).map_err(value_err)
}

#[pyfunction]
fn lower_bound(c: f64, n: u64) -> PyResult<f64> {
    bounds::lower_bound(c, n).map_err(value_err)
}

/// A certified sampler plan.
#[pyclass(name = "Plan", module = "convexmc_py", frozen)]
struct PyPlan {
    inner: SamplerPlan,
}

#[pymethods]
impl PyPlan {
    #[getter]
    fn provenance(&self) -> &str {
        &self.inner.provenance
    }
    #[getter]
    fn n0(&self) -> u128 {
        self.inner.n0
    }
    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }
    #[getter]
    fn gap_lb(&self) -> f64 {
        self.inner.gap_lb
    }
    #[getter]
    fn conductance_lb(&self) -> Option<f64> {
        self.inner.conductance_lb
    }
    #[getter]
    fn c_nu(&self) -> Option<f64> {
        self.inner.c_nu
    }
    #[getter]
    fn delta(&self) -> Option<f64> {
        self.inner.delta
    }
    #[getter]
    fn squared(&self) -> bool {
        self.inner.bound_kind == bounds::BoundKind::SquaredError
    }
    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }
    fn bound(&self, n: u64) -> PyResult<f64> {
        if n == 0 {
            return Err(value_err("n must be at least 1"));
        }
        Ok(self.inner.bound(n))
    }
    #[pyo3(signature = (ns = Vec::new()))]
    fn to_json(&self, ns: Vec<u64>) -> String {
        self.inner.to_json(&ns).to_string()
    }
    fn __repr__(&self) -> String {
        format!("Plan(provenance={:?}, n0={})", self.inner.provenance, self.inner.n0)
    }
}

#[pyfunction]
fn har_plan(d: usize, r: f64) -> PyResult<PyPlan> {
    Ok(PyPlan { inner: bounds::har_plan(d, r).map_err(value_err)? })
}

#[pyfunction]
fn indep_mh_plan(c: f64, vol: f64) -> PyResult<PyPlan> {
    Ok(PyPlan { inner: bounds::indep_mh_plan(c, vol).map_err(value_err)? })
}

#[pyfunction]
fn ball_walk_plan(alpha: f64, d: usize) -> PyResult<PyPlan> {
    Ok(PyPlan { inner: bounds::ball_walk_plan(alpha, d).map_err(value_err)? })
}

/// A convex body containing the unit ball.
#[pyclass(name = "ConvexBody", module = "convexmc_py", frozen)]
struct PyBody {
    inner: ConvexBody,
}

#[pymethods]
impl PyBody {
    #[staticmethod]
    fn ball(dim: usize, radius: f64) -> PyResult<Self> {
        Ok(Self { inner: make_body(BodyKind::Ball(radius), dim).map_err(value_err)? })
    }
    #[staticmethod]
    #[pyo3(name = "box")]
    fn cube(dim: usize, half_width: f64) -> PyResult<Self> {
        Ok(Self { inner: make_body(BodyKind::Box(half_width), dim).map_err(value_err)? })
    }
    #[staticmethod]
    fn ellipsoid(semi_axes: Vec<f64>) -> PyResult<Self> {
        let dim = semi_axes.len();
        Ok(Self { inner: make_body(BodyKind::Ellipsoid(semi_axes), dim).map_err(value_err)? })
    }
    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    #[getter]
    fn outer_radius(&self) -> f64 {
        self.inner.outer_radius()
    }
    #[getter]
    fn volume(&self) -> Option<f64> {
        self.inner.volume()
    }
    fn contains(&self, x: Vec<f64>) -> bool {
        self.inner.contains(&x)
    }
    /// `(t_min, t_max)` of the chord through `x` in unit direction `theta`.
    fn chord(&self, x: Vec<f64>, theta: Vec<f64>) -> PyResult<(f64, f64)> {
        let i = self.inner.chord(&x, &theta).map_err(value_err)?;
        Ok((i.t_min, i.t_max))
    }
    #[pyo3(signature = (n, seed = 0))]
    fn sample_uniform(&self, n: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        let mut rng = replication_rng(seed, 0);
        (0..n).map(|_| Ok(self.inner.uniform_in_body(&mut rng).map_err(value_err)?.0)).collect()
    }
    /// Hit-and-run trajectory of `steps` states after `x0`.
    #[pyo3(signature = (x0, steps, seed = 0))]
    fn hit_and_run(&self, x0: Vec<f64>, steps: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        let mut rng = replication_rng(seed, 0);
        let mut x = x0;
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            x = hit_and_run_step(&self.inner, &x, &mut rng).map_err(value_err)?;
            out.push(x.clone());
        }
        Ok(out)
    }
    fn __repr__(&self) -> String {
        format!("ConvexBody(dim={}, shape={:?})", self.inner.dim(), self.inner.shape())
    }
}

/// Runs an experiment config (the JSON accepted by `convexmc run`) and returns the report JSON.
#[pyfunction]
#[pyo3(signature = (config_json, threads = None))]
fn run_experiment(py: Python<'_>, config_json: &str, threads: Option<usize>) -> PyResult<String> {
    let cfg = convexmc_cli::ExperimentConfig::from_json(config_json).map_err(value_err)?;
    let report = py.detach(|| convexmc_cli::run_experiment(&cfg, threads)).map_err(value_err)?;
    Ok(report.to_json())
}

#[pymodule]
fn convexmc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPlan>()?;
    m.add_class::<PyBody>()?;
    m.add_function(wrap_pyfunction!(analyze_chain, m)?)?;
    m.add_function(wrap_pyfunction!(power_norm, m)?)?;
    m.add_function(wrap_pyfunction!(tv_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(verify_diagram, m)?)?;
    m.add_function(wrap_pyfunction!(stationary_mse_bound, m)?)?;
    m.add_function(wrap_pyfunction!(mse_bound, m)?)?;
    m.add_function(wrap_pyfunction!(burn_in, m)?)?;
    m.add_function(wrap_pyfunction!(cheeger_bracket, m)?)?;
    m.add_function(wrap_pyfunction!(lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(har_plan, m)?)?;
    m.add_function(wrap_pyfunction!(indep_mh_plan, m)?)?;
    m.add_function(wrap_pyfunction!(ball_walk_plan, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
