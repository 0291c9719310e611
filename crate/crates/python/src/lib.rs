//! Python bindings for the `cogmac` crate.

use cogmac::dual::{self, ConstraintBudget};
use cogmac::fading;
use cogmac::oracle;
use cogmac::policy;
use cogmac::sim::{self, NetworkConfig};
use cogmac::stream::substream;
use cogmac::sweep::{self as sw, SweepTemplate};
use cogmac::Error;
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

create_exception!(
    pycogmac,
    NumericError,
    PyRuntimeError,
    "A solver or quadrature failed to converge."
);

fn to_py(e: Error) -> PyErr {
    if e.is_numeric() {
        NumericError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

/// Fading power-gain distribution with unit mean, e.g. `FadingModel("weibull:4")`.
#[pyclass(frozen, eq, from_py_object, module = "pycogmac")]
#[derive(Clone, Copy, PartialEq)]
pub struct FadingModel(fading::FadingModel);

#[pymethods]
impl FadingModel {
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        spec.parse().map(Self).map_err(to_py)
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.0.family()
    }

    #[getter]
    fn shape(&self) -> Option<f64> {
        self.0.shape()
    }

    fn cdf(&self, x: f64) -> f64 {
        self.0.cdf(x)
    }

    fn sf(&self, x: f64) -> f64 {
        self.0.sf(x)
    }

    fn pdf(&self, x: f64) -> f64 {
        self.0.pdf(x)
    }

    fn quantile(&self, q: f64) -> PyResult<f64> {
        self.0.quantile(q).map_err(to_py)
    }

    /// `n` seeded draws.
    #[pyo3(signature = (n, seed = 0))]
    fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = substream(seed, 0);
        (0..n).map(|_| self.0.sample(&mut rng)).collect()
    }

    /// Class-C constants `(alpha, l, beta, n, tail_eta, gamma)`.
    fn class_c(&self) -> (f64, f64, f64, f64, f64, f64) {
        let t = self.0.class_c();
        (t.alpha, t.l, t.beta, t.n, t.tail_eta, t.gamma)
    }

    fn tail_ratio(&self, x: f64) -> PyResult<f64> {
        fading::tail_ratio(&self.0, &self.0.class_c(), x)
            .map(|r| r.value)
            .map_err(to_py)
    }

    fn origin_ratio(&self, x: f64) -> PyResult<f64> {
        fading::origin_ratio(&self.0, &self.0.class_c(), x).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("FadingModel('{}')", self.0)
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }
}

/// Solved multipliers and threshold.
#[pyclass(frozen, skip_from_py_object, module = "pycogmac")]
#[derive(Clone, Copy)]
pub struct DualSolution(policy::DualSolution);

#[pymethods]
impl DualSolution {
    #[getter]
    fn lambda_(&self) -> f64 {
        self.0.lambda
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.0.mu
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.0.threshold
    }

    #[getter]
    fn p(&self) -> f64 {
        self.0.p
    }

    /// `(power, interference, schedule)` residuals of the solve.
    #[getter]
    fn residuals(&self) -> (f64, f64, f64) {
        let d = self.0.diagnostics;
        (
            d.power_residual,
            d.interference_residual,
            d.schedule_residual,
        )
    }

    fn power(&self, h: f64, g: f64) -> f64 {
        self.0.power(h, g)
    }

    fn schedule(&self, h: f64, g: f64) -> bool {
        self.0.schedule(h, g)
    }

    fn rate(&self, h: f64, g: f64) -> f64 {
        self.0.rate(h, g)
    }

    fn __repr__(&self) -> String {
        format!(
            "DualSolution(lambda={}, mu={}, threshold={}, p={})",
            self.0.lambda, self.0.mu, self.0.threshold, self.0.p
        )
    }
}

/// Monte Carlo estimates with standard errors.
#[pyclass(frozen, get_all, skip_from_py_object, module = "pycogmac")]
#[derive(Clone, Copy)]
pub struct SimStats {
    throughput: f64,
    throughput_stderr: f64,
    p_an: f64,
    p_an_stderr: f64,
    avg_power: f64,
    avg_power_stderr: f64,
    avg_interference: f64,
    avg_interference_stderr: f64,
    slots: u64,
}

impl From<sim::SimStats> for SimStats {
    fn from(s: sim::SimStats) -> Self {
        Self {
            throughput: s.throughput,
            throughput_stderr: s.throughput_stderr,
            p_an: s.p_an,
            p_an_stderr: s.p_an_stderr,
            avg_power: s.avg_power,
            avg_power_stderr: s.avg_power_stderr,
            avg_interference: s.avg_interference,
            avg_interference_stderr: s.avg_interference_stderr,
            slots: s.slots,
        }
    }
}

#[pyclass(frozen, get_all, skip_from_py_object, module = "pycogmac")]
#[derive(Clone, Copy)]
pub struct SweepRow {
    n: usize,
    throughput: f64,
    stderr: f64,
    asymptote: f64,
    lambda_: f64,
    mu: f64,
    threshold: f64,
    p_an: f64,
}

fn network(n: usize, p_ave_db: f64, q_ave_db: f64, p: Option<f64>) -> PyResult<NetworkConfig> {
    let config = NetworkConfig::from_db(n, p_ave_db, q_ave_db).map_err(to_py)?;
    match p {
        Some(p) => config.with_sched_prob(p).map_err(to_py),
        None => Ok(config),
    }
}

#[pyfunction]
fn waterfill(h: f64, g: f64, lambda_: f64, mu: f64) -> f64 {
    policy::waterfill(h, g, lambda_, mu)
}

#[pyfunction]
fn db_to_linear(db: f64) -> f64 {
    sim::db_to_linear(db)
}

/// Multipliers meeting both budgets with equality for `n` users.
#[pyfunction]
#[pyo3(signature = (model_h, model_g, n, p_ave_db = 15.0, q_ave_db = 0.0, p = None))]
fn solve_duals(
    py: Python<'_>,
    model_h: FadingModel,
    model_g: FadingModel,
    n: usize,
    p_ave_db: f64,
    q_ave_db: f64,
    p: Option<f64>,
) -> PyResult<DualSolution> {
    let config = network(n, p_ave_db, q_ave_db, p)?;
    py.detach(|| dual::solve_duals(&config, &model_h.0, &model_g.0))
        .map(DualSolution)
        .map_err(to_py)
}

/// Solve the multipliers and simulate `slots` slots.
#[pyfunction]
#[pyo3(signature = (model_h, model_g, n, p_ave_db = 15.0, q_ave_db = 0.0, p = None, slots = 100_000, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    model_h: FadingModel,
    model_g: FadingModel,
    n: usize,
    p_ave_db: f64,
    q_ave_db: f64,
    p: Option<f64>,
    slots: u64,
    seed: u64,
) -> PyResult<(DualSolution, SimStats)> {
    let config = network(n, p_ave_db, q_ave_db, p)?;
    py.detach(|| {
        let d = dual::solve_duals(&config, &model_h.0, &model_g.0)?;
        let s = sim::estimate(&config, &d, &model_h.0, &model_g.0, slots, seed)?;
        Ok((DualSolution(d), SimStats::from(s)))
    })
    .map_err(to_py)
}

#[pyfunction]
fn asymptote(n: usize, model_h: FadingModel, p_ave: f64) -> PyResult<f64> {
    sw::asymptote(n, &model_h.0, p_ave).map_err(to_py)
}

/// Rows for each `N` in `n_list` with `p = 1/N`; raises on the first failed row.
#[pyfunction]
#[pyo3(signature = (model_h, model_g, n_list, p_ave_db = 15.0, q_ave_db = 0.0, slots = 100_000, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn sweep(
    py: Python<'_>,
    model_h: FadingModel,
    model_g: FadingModel,
    n_list: Vec<usize>,
    p_ave_db: f64,
    q_ave_db: f64,
    slots: u64,
    seed: u64,
) -> PyResult<Vec<SweepRow>> {
    let template = SweepTemplate {
        model_h: model_h.0,
        model_g: model_g.0,
        p_ave: sim::db_to_linear(p_ave_db),
        q_ave: sim::db_to_linear(q_ave_db),
    };
    let report = py.detach(|| sw::sweep(&template, &n_list, slots, seed));
    if let Some((_, e)) = report.failures.into_iter().next() {
        return Err(to_py(e));
    }
    Ok(report
        .rows
        .into_iter()
        .map(|r| SweepRow {
            n: r.n_users,
            throughput: r.throughput,
            stderr: r.stderr,
            asymptote: r.asymptote,
            lambda_: r.lambda,
            mu: r.mu,
            threshold: r.threshold,
            p_an: r.p_an,
        })
        .collect())
}

/// Relaxed and closed-form objectives on a discretized instance:
/// `(relaxed, closed_form, relative_gap)`.
#[pyfunction]
#[pyo3(signature = (model_h, model_g, grid_h = 3, grid_g = 3, power = 0.5, interference = 0.3, p = 0.3))]
#[allow(clippy::too_many_arguments)]
fn oracle_check(
    py: Python<'_>,
    model_h: FadingModel,
    model_g: FadingModel,
    grid_h: usize,
    grid_g: usize,
    power: f64,
    interference: f64,
    p: f64,
) -> PyResult<(f64, f64, f64)> {
    py.detach(|| {
        let budget = ConstraintBudget::new(power, interference)?;
        let d = oracle::discretize(&model_h.0, &model_g.0, grid_h, grid_g)?;
        let c = oracle::compare(&d, &budget, p)?;
        Ok((c.relaxed.objective, c.closed_form.objective, c.gap))
    })
    .map_err(to_py)
}

#[pymodule]
fn pycogmac(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NumericError", m.py().get_type::<NumericError>())?;
    m.add_class::<FadingModel>()?;
    m.add_class::<DualSolution>()?;
    m.add_class::<SimStats>()?;
    m.add_class::<SweepRow>()?;
    m.add_function(wrap_pyfunction!(waterfill, m)?)?;
    m.add_function(wrap_pyfunction!(db_to_linear, m)?)?;
    m.add_function(wrap_pyfunction!(solve_duals, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(asymptote, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_check, m)?)?;
    Ok(())
}
