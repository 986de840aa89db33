//! Python bindings for the capital-share asset-pricing toolkit.
//!
//! The module exposes the main containers and operations: time series
//! construction, OLS and AR(1) fits, Chow-Lin interpolation, the factor
//! family, two-pass risk prices with the block bootstrap, multiplicative
//! GARCH, the B-TVB-SV sampler, and the long-run-risks calculator. Vectors
//! cross the boundary as plain Python lists.

use capshare::btvbsv::{self, GibbsConfig, Hyperparams};
use capshare::calendar::{Frequency, Month, Units};
use capshare::disagg::{self, ChowLinOptions, GridSpec, Objective, SelectedMonth};
use capshare::error::Error;
use capshare::factors;
use capshare::fmb::{self, BootstrapConfig};
use capshare::lrr::{self, LrrParams, SimConfig};
use capshare::mgarch;
use capshare::series::{FactorSet, ReturnPanel, TimeSeries};
use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_frequency(s: &str) -> PyResult<Frequency> {
    match s.to_ascii_lowercase().as_str() {
        "monthly" | "m" => Ok(Frequency::Monthly),
        "quarterly" | "q" => Ok(Frequency::Quarterly),
        other => Err(PyValueError::new_err(format!("unknown frequency {other:?}"))),
    }
}

fn parse_units(s: &str) -> PyResult<Units> {
    match s.to_ascii_lowercase().as_str() {
        "percent" => Ok(Units::Percent),
        "ratio" => Ok(Units::Ratio),
        "level" => Ok(Units::Level),
        other => Err(PyValueError::new_err(format!("unknown units {other:?}"))),
    }
}

/// A calendar-anchored series.
#[pyclass(name = "TimeSeries", from_py_object)]
#[derive(Clone)]
struct PyTimeSeries {
    inner: TimeSeries,
}

#[pymethods]
impl PyTimeSeries {
    #[new]
    #[pyo3(signature = (year, month, values, frequency="monthly", units="ratio"))]
    fn new(
        year: i32,
        month: u32,
        values: Vec<f64>,
        frequency: &str,
        units: &str,
    ) -> PyResult<Self> {
        let inner = TimeSeries::new(
            Month::new(year, month),
            parse_frequency(frequency)?,
            parse_units(units)?,
            values,
        )
        .map_err(err)?;
        Ok(PyTimeSeries { inner })
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    #[getter]
    fn start(&self) -> (i32, u32) {
        (self.inner.start().year(), self.inner.start().month())
    }

    #[getter]
    fn frequency(&self) -> String {
        self.inner.frequency().to_string()
    }

    #[getter]
    fn units(&self) -> String {
        self.inner.units().to_string()
    }

    fn dates(&self) -> Vec<String> {
        (0..self.inner.len()).map(|i| self.inner.date_at(i).to_string()).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "TimeSeries(start={}, frequency={}, len={})",
            self.inner.start(),
            self.inner.frequency(),
            self.inner.len()
        )
    }
}

/// An N-portfolio monthly return panel.
#[pyclass(name = "ReturnPanel", from_py_object)]
#[derive(Clone)]
struct PyReturnPanel {
    inner: ReturnPanel,
}

#[pymethods]
impl PyReturnPanel {
    #[new]
    fn new(year: i32, month: u32, names: Vec<String>, rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let n = rows.len();
        let t = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != t) {
            return Err(PyValueError::new_err("ragged return rows"));
        }
        let returns = DMatrix::from_fn(n, t, |i, s| rows[i][s]);
        let inner = ReturnPanel::new(Month::new(year, month), names, returns).map_err(err)?;
        Ok(PyReturnPanel { inner })
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.names().to_vec()
    }

    #[getter]
    fn n_portfolios(&self) -> usize {
        self.inner.n_portfolios()
    }

    #[getter]
    fn n_periods(&self) -> usize {
        self.inner.n_periods()
    }

    fn __repr__(&self) -> String {
        format!(
            "ReturnPanel(N={}, T={}, start={})",
            self.inner.n_portfolios(),
            self.inner.n_periods(),
            self.inner.start()
        )
    }
}

fn factor_set(
    panel: &ReturnPanel,
    columns: Vec<Vec<f64>>,
    names: Option<Vec<String>>,
) -> PyResult<FactorSet> {
    let k = columns.len();
    if k == 0 {
        return Err(PyValueError::new_err("need at least one factor column"));
    }
    let t = columns[0].len();
    if columns.iter().any(|c| c.len() != t) {
        return Err(PyValueError::new_err("ragged factor columns"));
    }
    let names = names.unwrap_or_else(|| (0..k).map(|j| format!("f{j}")).collect());
    let cols = DMatrix::from_fn(t, k, |i, j| columns[j][i]);
    FactorSet::new(panel.start(), names, cols).map_err(err)
}

/// OLS of y on x columns; returns a dict of the fitted quantities.
#[pyfunction]
#[pyo3(signature = (y, x, intercept=true))]
fn ols_fit<'py>(py: Python<'py>, y: Vec<f64>, x: Vec<Vec<f64>>, intercept: bool) -> PyResult<Bound<'py, PyDict>> {
    let n = y.len();
    let k = x.len();
    if x.iter().any(|c| c.len() != n) {
        return Err(PyValueError::new_err("x columns must match len(y)"));
    }
    let xm = DMatrix::from_fn(n, k, |i, j| x[j][i]);
    let fit = capshare::ols(&y, &xm, intercept).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("coefficients", fit.coefficients)?;
    d.set_item("stderrs", fit.stderrs)?;
    d.set_item("tstats", fit.tstats)?;
    d.set_item("pvalues", fit.pvalues)?;
    d.set_item("r2", fit.r2)?;
    d.set_item("adj_r2", fit.adj_r2)?;
    d.set_item("residuals", fit.residuals)?;
    Ok(d)
}

/// AR(1) fit; returns (rho, rho_stderr, resid_variance).
#[pyfunction]
#[pyo3(signature = (values, intercept=false))]
fn ar1_fit(values: Vec<f64>, intercept: bool) -> PyResult<(f64, f64, f64)> {
    let fit = capshare::regression::ar1_fit_values(&values, intercept).map_err(err)?;
    Ok((fit.rho, fit.rho_stderr, fit.resid_variance))
}

/// Capital share from labour share.
#[pyfunction]
fn capital_share(labour_share: &PyTimeSeries) -> PyResult<PyTimeSeries> {
    Ok(PyTimeSeries { inner: factors::capital_share(&labour_share.inner).map_err(err)? })
}

/// Growth factor over a horizon.
#[pyfunction]
fn ks_growth_factor(ks: &PyTimeSeries, horizon: usize) -> PyResult<PyTimeSeries> {
    Ok(PyTimeSeries { inner: factors::ks_growth_factor(&ks.inner, horizon).map_err(err)? })
}

/// Variability factor (one-step conditional second moment).
#[pyfunction]
fn ks_variability(f_ks: &PyTimeSeries) -> PyResult<PyTimeSeries> {
    Ok(PyTimeSeries { inner: factors::ks_variability(&f_ks.inner).map_err(err)? })
}

/// Chow-Lin interpolation of a quarterly series on a monthly indicator.
#[pyfunction]
#[pyo3(signature = (quarterly, indicator, with_constant=true, element="first", objective="wls"))]
fn chow_lin<'py>(
    py: Python<'py>,
    quarterly: &PyTimeSeries,
    indicator: &PyTimeSeries,
    with_constant: bool,
    element: &str,
    objective: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let opts = ChowLinOptions {
        with_constant,
        element: match element.to_ascii_lowercase().as_str() {
            "first" => SelectedMonth::First,
            "last" => SelectedMonth::Last,
            other => return Err(PyValueError::new_err(format!("element {other:?}"))),
        },
        objective: match objective.to_ascii_lowercase().as_str() {
            "wls" => Objective::Wls,
            "ll" => Objective::LogLikelihood,
            other => return Err(PyValueError::new_err(format!("objective {other:?}"))),
        },
        grid: GridSpec::default(),
    };
    let fit = disagg::chow_lin(&quarterly.inner, &indicator.inner, &opts).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("beta0", fit.beta0)?;
    d.set_item("beta_ind", fit.beta_ind)?;
    d.set_item("rho", fit.rho)?;
    d.set_item("stderrs", fit.stderrs)?;
    d.set_item("aic", fit.aic)?;
    d.set_item("bic", fit.bic)?;
    d.set_item("monthly", PyTimeSeries { inner: fit.monthly })?;
    Ok(d)
}

/// Two-pass risk prices; returns (lambda, fm_stderr, betas, r2_bar).
#[pyfunction]
#[pyo3(signature = (panel, factors, names=None))]
fn fmb_two_pass(
    panel: &PyReturnPanel,
    factors: Vec<Vec<f64>>,
    names: Option<Vec<String>>,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>, f64)> {
    let fs = factor_set(&panel.inner, factors, names)?;
    let res = fmb::fmb(&panel.inner, &fs).map_err(err)?;
    let betas: Vec<Vec<f64>> =
        (0..res.betas.nrows()).map(|i| res.betas.row(i).iter().copied().collect()).collect();
    Ok((res.lambda.clone(), res.fm_stderr(), betas, res.r2_bar))
}

/// Block bootstrap of the two-pass estimator; returns a dict with the
/// point estimates, percentile intervals and draw matrix.
#[pyfunction]
#[pyo3(signature = (panel, factors, n_sims=1000, seed=0, names=None))]
fn fmb_bootstrap<'py>(
    py: Python<'py>,
    panel: &PyReturnPanel,
    factors: Vec<Vec<f64>>,
    n_sims: usize,
    seed: u64,
    names: Option<Vec<String>>,
) -> PyResult<Bound<'py, PyDict>> {
    let fs = factor_set(&panel.inner, factors, names)?;
    let cfg = BootstrapConfig { n_sims, seed, ..Default::default() };
    let boot = fmb::fmb_bootstrap(&panel.inner, &fs, &cfg).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("lambda", boot.point.lambda.clone())?;
    d.set_item("r2_bar", boot.point.r2_bar)?;
    d.set_item("ci95", boot.ci95.clone())?;
    d.set_item("failures", boot.failures)?;
    d.set_item("block_ts", boot.block_ts)?;
    d.set_item("block_cs", boot.block_cs)?;
    let draws: Vec<Vec<f64>> =
        (0..boot.draws.nrows()).map(|r| boot.draws.row(r).iter().copied().collect()).collect();
    d.set_item("draws", draws)?;
    Ok(d)
}

/// Multiplicative GARCH fit; returns a dict of estimates.
#[pyfunction]
fn mgarch_fit<'py>(py: Python<'py>, returns: Vec<f64>, f_ks: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let fit = mgarch::mgarch_fit(&returns, &f_ks).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("beta0", fit.beta0)?;
    d.set_item("lambda0", fit.lambda0)?;
    d.set_item("lambda1", fit.lambda1)?;
    d.set_item("stderrs", fit.stderrs)?;
    d.set_item("loglik", fit.loglik)?;
    d.set_item("converged", fit.converged)?;
    Ok(d)
}

/// Run the B-TVB-SV Gibbs sampler; returns a dict of posterior summaries.
#[pyfunction]
#[pyo3(signature = (panel, factors, n_iter=400, burn=None, thin=2, seed=0, names=None))]
#[allow(clippy::too_many_arguments)]
fn btvbsv_run<'py>(
    py: Python<'py>,
    panel: &PyReturnPanel,
    factors: Vec<Vec<f64>>,
    n_iter: usize,
    burn: Option<usize>,
    thin: usize,
    seed: u64,
    names: Option<Vec<String>>,
) -> PyResult<Bound<'py, PyDict>> {
    let fs = factor_set(&panel.inner, factors, names)?;
    let hp = Hyperparams::defaults(panel.inner.n_portfolios(), fs.n_factors());
    let cfg =
        GibbsConfig { n_iter, burn: burn.unwrap_or(n_iter / 2), thin, seed, prior_only: false };
    let draws = btvbsv::gibbs_run(&panel.inner, &fs, &hp, &cfg).map_err(err)?;
    let probs = btvbsv::break_probabilities(&draws).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("n_draws", draws.n_draws)?;
    d.set_item("lambda_mean", draws.lambda_mean())?;
    let beta_mean: Vec<Vec<Vec<f64>>> = (0..draws.n_portfolios)
        .map(|i| (0..=draws.n_factors).map(|j| draws.beta_mean(i, j)).collect())
        .collect();
    d.set_item("beta_mean", beta_mean)?;
    let kp1 = draws.n_factors + 1;
    let bp: Vec<Vec<Vec<f64>>> = (0..draws.n_portfolios)
        .map(|i| {
            (0..kp1)
                .map(|j| (0..draws.n_periods).map(|t| probs.beta_at(i, j, t)).collect())
                .collect()
        })
        .collect();
    d.set_item("break_prob_beta", bp)?;
    d.set_item("aborted", draws.aborted.clone())?;
    Ok(d)
}

/// Long-run-risks premiums for a factor path; returns a dict.
#[pyfunction]
#[pyo3(signature = (f_ks, ef2, **overrides))]
fn lrr_premiums<'py>(
    py: Python<'py>,
    f_ks: Vec<f64>,
    ef2: f64,
    overrides: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut p = LrrParams::default();
    if let Some(kw) = overrides {
        for (key, value) in kw.iter() {
            let name: String = key.extract()?;
            let v: f64 = value.extract()?;
            match name.as_str() {
                "delta" => p.delta = v,
                "gamma" => p.gamma = v,
                "psi" => p.psi = v,
                "mu" => p.mu = v,
                "mu_d" => p.mu_d = v,
                "rho" => p.rho = v,
                "phi_e" => p.phi_e = v,
                "phi" => p.phi = v,
                "phi_d" => p.phi_d = v,
                "sigma" => p.sigma = v,
                "w_h" => p.w_h = v,
                "kappa1" => p.kappa1 = v,
                "kappa1m" => p.kappa1m = v,
                "rho_ks" => p.rho_ks = v,
                "sigma_xi" => p.sigma_xi = v,
                "sigma_d_dial" => p.sigma_d_dial = v,
                other => {
                    return Err(PyValueError::new_err(format!("unknown parameter {other:?}")))
                }
            }
        }
    }
    let prem = lrr::premiums(&p, &f_ks, ef2).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("conditional_consumption", prem.conditional_consumption)?;
    d.set_item("conditional_equity", prem.conditional_equity.clone())?;
    d.set_item("unconditional_consumption", prem.unconditional_consumption)?;
    d.set_item("unconditional_equity", prem.unconditional_equity)?;
    Ok(d)
}

/// Simulate the long-run-risks system; returns a dict of paths.
#[pyfunction]
#[pyo3(signature = (n_periods, seed=0))]
fn lrr_simulate<'py>(py: Python<'py>, n_periods: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let p = LrrParams::default();
    let paths = lrr::simulate_system(&p, &SimConfig::new(n_periods, seed)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("x", paths.x)?;
    d.set_item("g", paths.g)?;
    d.set_item("g_d", paths.g_d)?;
    d.set_item("f_ks", paths.f_ks)?;
    d.set_item("rm_excess", paths.rm_excess)?;
    d.set_item("ra_excess", paths.ra_excess)?;
    Ok(d)
}

/// Geweke convergence z-score of a scalar chain (None if degenerate).
#[pyfunction]
fn geweke_z(chain: Vec<f64>) -> Option<f64> {
    btvbsv::geweke_z(&chain)
}

#[pymodule]
fn capshare_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTimeSeries>()?;
    m.add_class::<PyReturnPanel>()?;
    m.add_function(wrap_pyfunction!(ols_fit, m)?)?;
    m.add_function(wrap_pyfunction!(ar1_fit, m)?)?;
    m.add_function(wrap_pyfunction!(capital_share, m)?)?;
    m.add_function(wrap_pyfunction!(ks_growth_factor, m)?)?;
    m.add_function(wrap_pyfunction!(ks_variability, m)?)?;
    m.add_function(wrap_pyfunction!(chow_lin, m)?)?;
    m.add_function(wrap_pyfunction!(fmb_two_pass, m)?)?;
    m.add_function(wrap_pyfunction!(fmb_bootstrap, m)?)?;
    m.add_function(wrap_pyfunction!(mgarch_fit, m)?)?;
    m.add_function(wrap_pyfunction!(btvbsv_run, m)?)?;
    m.add_function(wrap_pyfunction!(lrr_premiums, m)?)?;
    m.add_function(wrap_pyfunction!(lrr_simulate, m)?)?;
    m.add_function(wrap_pyfunction!(geweke_z, m)?)?;
    Ok(())
}
