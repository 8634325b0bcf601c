//! Python bindings. Results come back as plain dicts and lists so they drop straight into
//! numpy or pandas.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use nopo::fluctuations::{self, FluctuationOptions, VminResult};
use nopo::positivep::{self, PositivePOptions};
use nopo::qsd::{self, QsdOptions};
use nopo::semiclassical::SemiclassicalTrajectory;
use nopo::{Error, ModelConfig, ModelParams, Regime};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter(_) | Error::Config(_) | Error::BelowThreshold { .. } | Error::DimensionMismatch { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::BelowThreshold => "below",
        Regime::AtThreshold => "at",
        Regime::AboveThreshold => "above",
    }
}

/// Model parameters in units of the subharmonic damping.
#[pyclass(frozen, skip_from_py_object, name = "Params", module = "nopo")]
#[derive(Clone)]
pub struct PyParams {
    inner: ModelParams,
}

#[pymethods]
impl PyParams {
    /// Build from `gamma3/gamma`, `k/gamma`, `fbar/f_th`, `f1/fbar` and `delta/gamma`.
    #[staticmethod]
    #[pyo3(signature = (gamma3=25.0, k=5e-4, fbar=3.0, f1=0.0, delta=2.0))]
    fn from_ratios(gamma3: f64, k: f64, fbar: f64, f1: f64, delta: f64) -> PyResult<Self> {
        Ok(Self { inner: ModelParams::from_ratios(gamma3, k, fbar, f1, delta).map_err(to_py)? })
    }

    /// Build from the effective nonlinearity `lambda/gamma` instead of `k`.
    #[staticmethod]
    #[pyo3(signature = (lam, gamma3=25.0, fbar=1.0, f1=0.0, delta=2.0))]
    fn from_lambda(lam: f64, gamma3: f64, fbar: f64, f1: f64, delta: f64) -> PyResult<Self> {
        Ok(Self { inner: ModelParams::from_lambda(lam, gamma3, fbar, f1, delta).map_err(to_py)? })
    }

    /// Build from a JSON configuration string (unknown keys are rejected).
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let cfg = ModelConfig::from_json(text).map_err(to_py)?;
        Ok(Self { inner: cfg.to_params().map_err(to_py)? })
    }

    fn with_pump(&self, fbar: f64, f1: f64) -> PyResult<Self> {
        Ok(Self { inner: self.inner.with_pump(fbar, f1).map_err(to_py)? })
    }

    #[getter]
    fn lam(&self) -> f64 {
        self.inner.lambda()
    }

    #[getter]
    fn f_th(&self) -> f64 {
        self.inner.f_th()
    }

    #[getter]
    fn period(&self) -> f64 {
        self.inner.period()
    }

    #[getter]
    fn eps_bar(&self) -> f64 {
        self.inner.eps_bar()
    }

    #[getter]
    fn regime(&self) -> &'static str {
        regime_name(nopo::model::regime_classify(&self.inner))
    }

    fn eps(&self, t: f64) -> f64 {
        self.inner.eps(t)
    }

    fn validity_ratio(&self) -> f64 {
        fluctuations::linearization_validity(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Params(lambda={:.3e}, fbar/f_th={:.4}, regime={})",
            self.inner.lambda(),
            self.inner.pump_ratio(),
            self.regime()
        )
    }
}

fn vmin_dict<'py>(py: Python<'py>, r: &VminResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("v_min", r.v_min)?;
    d.set_item("t0", r.t0)?;
    d.set_item("n0_at_t0", r.n0_at_t0)?;
    d.set_item("inseparable", r.criteria.inseparable)?;
    d.set_item("epr", r.criteria.epr)?;
    d.set_item("regime", regime_name(r.regime))?;
    d.set_item("validity_ratio", r.validity_ratio)?;
    d.set_item("validity_warning", r.validity_warning)?;
    Ok(d)
}

fn means(estimates: &[positivep::Estimate]) -> (Vec<f64>, Vec<f64>) {
    estimates.iter().map(|e| (e.mean, e.stderr)).unzip()
}

/// Periodic photon number over one period: `{"t": [...], "n0": [...]}`.
#[pyfunction]
fn semiclassical<'py>(py: Python<'py>, params: &PyParams) -> PyResult<Bound<'py, PyDict>> {
    let p = params.inner.clone();
    let traj: SemiclassicalTrajectory =
        py.detach(|| fluctuations::semiclassical_reference(&p, &FluctuationOptions::default())).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("t", traj.t_grid)?;
    d.set_item("n0", traj.n0)?;
    Ok(d)
}

/// Linearized variance over one period: `{"t", "V", "n0"}`.
#[pyfunction]
fn variance<'py>(py: Python<'py>, params: &PyParams) -> PyResult<Bound<'py, PyDict>> {
    let p = params.inner.clone();
    let traj = py.detach(|| fluctuations::variance_trajectory(&p, &FluctuationOptions::default())).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("t", traj.t_grid)?;
    d.set_item("V", traj.v)?;
    d.set_item("n0", traj.n0)?;
    Ok(d)
}

/// Periodic variance from the direct integral representation at time `t`.
#[pyfunction]
fn asymptotic_variance(py: Python<'_>, params: &PyParams, t: f64) -> PyResult<f64> {
    let p = params.inner.clone();
    py.detach(|| fluctuations::asymptotic_variance(&p, t)).map_err(to_py)
}

#[pyfunction]
fn find_vmin<'py>(py: Python<'py>, params: &PyParams) -> PyResult<Bound<'py, PyDict>> {
    let p = params.inner.clone();
    let r = py.detach(|| fluctuations::find_vmin(&p)).map_err(to_py)?;
    vmin_dict(py, &r)
}

/// Minimum variance over a grid; failed cells carry an `error` entry instead of results.
#[pyfunction]
fn sweep<'py>(py: Python<'py>, params: &PyParams, fbar: Vec<f64>, levels: Vec<f64>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let p = params.inner.clone();
    let table = py.detach(|| fluctuations::sweep_vmin(&p, &fbar, &levels, &FluctuationOptions::default()));
    table
        .rows
        .iter()
        .map(|row| {
            let d = match &row.result {
                Ok(r) => vmin_dict(py, r)?,
                Err(e) => {
                    let d = PyDict::new(py);
                    d.set_item("error", e.to_string())?;
                    d
                }
            };
            d.set_item("fbar_over_fth", row.fbar_over_fth)?;
            d.set_item("f1_over_fbar", row.f1_over_fbar)?;
            Ok(d)
        })
        .collect()
}

/// Entanglement criteria for the two variances: `{"inseparable", "epr", "sum", "product"}`.
#[pyfunction]
fn classify<'py>(py: Python<'py>, v_plus: f64, v_minus: f64) -> PyResult<Bound<'py, PyDict>> {
    let c = fluctuations::classify_entanglement(v_plus, v_minus);
    let d = PyDict::new(py);
    d.set_item("inseparable", c.inseparable)?;
    d.set_item("epr", c.epr)?;
    d.set_item("sum", c.sum_criterion.value)?;
    d.set_item("product", c.product_criterion.value)?;
    Ok(d)
}

/// Positive-P ensemble on `t_grid`; includes moment-equation residual diagnostics.
#[pyfunction]
#[pyo3(signature = (params, n_traj, t_grid, seed=nopo::ensemble::DEFAULT_SEED, dt=1e-3, relaxation=5.0, workers=None))]
#[allow(clippy::too_many_arguments)]
fn positive_p<'py>(
    py: Python<'py>,
    params: &PyParams,
    n_traj: usize,
    t_grid: Vec<f64>,
    seed: u64,
    dt: f64,
    relaxation: f64,
    workers: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let p = params.inner.clone();
    let opts = PositivePOptions { dt, relaxation, workers, ..PositivePOptions::default() };
    let (m, residuals) = py
        .detach(|| {
            positivep::simulate_ensemble_with(&p, n_traj, &t_grid, seed, &opts).map(|m| {
                let r = positivep::check_moment_equations(&m, &p);
                (m, r)
            })
        })
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("t", &m.t_grid)?;
    for (key, est) in [("V", &m.v), ("n_plus", &m.n_plus), ("R", &m.r), ("Z", &m.z)] {
        let (mean, se) = means(est);
        d.set_item(key, mean)?;
        d.set_item(format!("{key}_stderr"), se)?;
    }
    d.set_item("n_traj", m.n_traj)?;
    d.set_item("discarded", m.discarded)?;
    d.set_item("residual_max_sigma", residuals.max_sigma())?;
    Ok(d)
}

/// QSD ensemble from vacuum on `t_grid`.
#[pyfunction]
#[pyo3(signature = (params, n_traj, t_grid, seed=nopo::ensemble::DEFAULT_SEED, dt=1e-3, relaxation=5.0, n_max=None, workers=None))]
#[allow(clippy::too_many_arguments)]
fn qsd_ensemble<'py>(
    py: Python<'py>,
    params: &PyParams,
    n_traj: usize,
    t_grid: Vec<f64>,
    seed: u64,
    dt: f64,
    relaxation: f64,
    n_max: Option<usize>,
    workers: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let p = params.inner.clone();
    let opts = QsdOptions { dt, relaxation, n_max, workers, ..QsdOptions::default() };
    let e = py.detach(|| qsd::simulate_qsd_ensemble_with(&p, n_traj, &t_grid, seed, &opts)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("t", &e.t_grid)?;
    let (v, v_se) = means(&e.v);
    d.set_item("V", v)?;
    d.set_item("V_stderr", v_se)?;
    d.set_item("n1", means(&e.n1).0)?;
    d.set_item("n2", means(&e.n2).0)?;
    d.set_item("tail_pop", &e.tail_pop)?;
    d.set_item("n_max", e.n_max)?;
    d.set_item("n_traj", e.n_traj)?;
    Ok(d)
}

#[pymodule(name = "nopo")]
mod nopo_module {
    #[pymodule_export]
    use super::{
        asymptotic_variance, classify, find_vmin, positive_p, qsd_ensemble, semiclassical, sweep, variance, PyParams,
    };

    #[allow(non_upper_case_globals)]
    #[pymodule_export]
    const __version__: &str = nopo::VERSION;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regime_names_are_stable() {
        assert_eq!(regime_name(Regime::AboveThreshold), "above");
        assert_eq!(regime_name(Regime::AtThreshold), "at");
        assert_eq!(regime_name(Regime::BelowThreshold), "below");
    }

    #[test]
    fn estimates_split_into_columns() {
        let e = [positivep::Estimate { mean: 1.0, stderr: 0.1 }, positivep::Estimate { mean: 2.0, stderr: 0.2 }];
        assert_eq!(means(&e), (vec![1.0, 2.0], vec![0.1, 0.2]));
    }
}
