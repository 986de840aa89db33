//! Rolling-window multiplicative-heteroskedasticity GARCH.
//!
//! Returns have a constant mean and a log-variance linear in the log
//! squared capital-share factor:
//!
//! ```text
//! r_t = beta0 + eps_t,            eps_t ~ N(0, sigma_t^2)
//! sigma_t^2 = exp(lambda0 + lambda1 * ln(F_t^2))
//! ```
//!
//! Estimated by maximum likelihood with the analytic gradient and a BFGS
//! quasi-Newton iteration with backtracking line search. Standard errors
//! come from the inverse observed information.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::regression::{self, OlsFit};

/// ln(F^2) floor; the transform is undefined at F = 0.
const LOG_F2_GUARD: f64 = 1e-12;

/// A fitted multiplicative GARCH.
#[derive(Debug, Clone)]
pub struct MGarchFit {
    pub beta0: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    /// Standard errors of (beta0, lambda0, lambda1).
    pub stderrs: Vec<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Pin lambda1 (the homoskedastic reduction uses 0).
    pub fix_lambda1: Option<f64>,
    /// Jittered restarts tried before flagging non-convergence.
    pub restarts: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { max_iter: 200, grad_tol: 1e-8, fix_lambda1: None, restarts: 3 }
    }
}

/// Per-observation data: precomputed ln(F_t^2).
fn log_f2(f_ks: &[f64]) -> Vec<f64> {
    f_ks.iter().map(|f| (f * f).max(LOG_F2_GUARD).ln()).collect()
}

/// Gaussian log-likelihood at (beta0, lambda0, lambda1).
pub fn loglik(returns: &[f64], log_f2: &[f64], theta: &[f64; 3]) -> f64 {
    let (b0, l0, l1) = (theta[0], theta[1], theta[2]);
    let mut ll = 0.0;
    for (r, l) in returns.iter().zip(log_f2) {
        let u = l0 + l1 * l;
        let e = r - b0;
        ll += -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * u - 0.5 * e * e * (-u).exp();
    }
    ll
}

/// Analytic gradient of the log-likelihood.
pub fn gradient(returns: &[f64], log_f2: &[f64], theta: &[f64; 3]) -> [f64; 3] {
    let (b0, l0, l1) = (theta[0], theta[1], theta[2]);
    let mut g = [0.0f64; 3];
    for (r, l) in returns.iter().zip(log_f2) {
        let u = l0 + l1 * l;
        let e = r - b0;
        let w = (-u).exp();
        g[0] += e * w;
        let s = 0.5 * (e * e * w - 1.0);
        g[1] += s;
        g[2] += s * l;
    }
    g
}

/// Analytic Hessian of the log-likelihood.
fn hessian(returns: &[f64], log_f2: &[f64], theta: &[f64; 3]) -> DMatrix<f64> {
    let (b0, l0, l1) = (theta[0], theta[1], theta[2]);
    let mut h = DMatrix::zeros(3, 3);
    for (r, l) in returns.iter().zip(log_f2) {
        let u = l0 + l1 * l;
        let e = r - b0;
        let w = (-u).exp();
        let s = e * e * w;
        h[(0, 0)] += -w;
        h[(0, 1)] += -e * w;
        h[(0, 2)] += -e * w * l;
        h[(1, 1)] += -0.5 * s;
        h[(1, 2)] += -0.5 * s * l;
        h[(2, 2)] += -0.5 * s * l * l;
    }
    h[(1, 0)] = h[(0, 1)];
    h[(2, 0)] = h[(0, 2)];
    h[(2, 1)] = h[(1, 2)];
    h
}

struct BfgsOutcome {
    theta: [f64; 3],
    loglik: f64,
    converged: bool,
    iterations: usize,
}

/// BFGS ascent on the log-likelihood. `mask[j] = false` freezes coordinate j.
fn bfgs(
    returns: &[f64],
    lf2: &[f64],
    start: [f64; 3],
    mask: [bool; 3],
    opts: &FitOptions,
) -> Result<BfgsOutcome> {
    let dims: Vec<usize> = (0..3).filter(|&j| mask[j]).collect();
    let d = dims.len();
    let mut theta = start;
    let mut h_inv = DMatrix::identity(d, d);
    let pack = |g: &[f64; 3]| DVector::from_iterator(d, dims.iter().map(|&j| g[j]));

    let mut ll = loglik(returns, lf2, &theta);
    if !ll.is_finite() {
        return Err(Error::NumericalError("log-likelihood not finite at start".into()));
    }
    let mut g = pack(&gradient(returns, lf2, &theta));
    let mut iterations = 0;
    let mut converged = false;
    let scale = 1.0 + returns.len() as f64;

    while iterations < opts.max_iter {
        iterations += 1;
        if g.norm() < opts.grad_tol * scale {
            converged = true;
            break;
        }
        let mut dir = &h_inv * &g;
        if dir.dot(&g) <= 0.0 {
            // Not an ascent direction; reset the curvature estimate.
            h_inv = DMatrix::identity(d, d);
            dir = g.clone();
        }
        // Backtracking line search on the log-likelihood.
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut cand = theta;
            for (r, &j) in dims.iter().enumerate() {
                cand[j] += step * dir[r];
            }
            let cand_ll = loglik(returns, lf2, &cand);
            if cand_ll.is_finite() && cand_ll > ll + 1e-4 * step * dir.dot(&g) {
                let g_new = pack(&gradient(returns, lf2, &cand));
                // BFGS update.
                let s = step * &dir;
                let y = &g_new - &g;
                let sy = s.dot(&y);
                if sy < -1e-12 {
                    // y = grad_new - grad_old for a maximization has s'y < 0;
                    // flip signs to the standard minimization form.
                    let y = -y;
                    let sy = -sy;
                    let rho = 1.0 / sy;
                    let i = DMatrix::identity(d, d);
                    let left = &i - rho * &s * y.transpose();
                    let right = &i - rho * &y * s.transpose();
                    h_inv = &left * &h_inv * &right + rho * &s * s.transpose();
                }
                theta = cand;
                ll = cand_ll;
                g = g_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            converged = g.norm() < opts.grad_tol * scale * 100.0;
            break;
        }
    }
    if g.norm() < opts.grad_tol * scale {
        converged = true;
    }
    Ok(BfgsOutcome { theta, loglik: ll, converged, iterations })
}

/// Fit the multiplicative GARCH by maximum likelihood.
pub fn mgarch_fit(returns: &[f64], f_ks: &[f64]) -> Result<MGarchFit> {
    mgarch_fit_with(returns, f_ks, &FitOptions::default())
}

pub fn mgarch_fit_with(returns: &[f64], f_ks: &[f64], opts: &FitOptions) -> Result<MGarchFit> {
    let t = returns.len();
    if f_ks.len() != t {
        return Err(Error::DimensionError(format!(
            "returns have {t} observations but the factor has {}",
            f_ks.len()
        )));
    }
    if t < 12 {
        return Err(Error::InsufficientData(format!("need at least 12 observations, got {t}")));
    }
    let lf2 = log_f2(f_ks);
    let mean = returns.iter().sum::<f64>() / t as f64;
    let var_ml = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / t as f64;
    if var_ml <= 0.0 {
        return Err(Error::NumericalError("returns have zero variance".into()));
    }
    let mut start = [mean, var_ml.ln(), 0.0];
    let mut mask = [true, true, true];
    if let Some(l1) = opts.fix_lambda1 {
        start[2] = l1;
        mask[2] = false;
    }

    let mut out = bfgs(returns, &lf2, start, mask, opts)?;
    let mut tried = 0;
    while !out.converged && tried < opts.restarts {
        tried += 1;
        // Deterministic jitter around the base start.
        let j = tried as f64;
        let mut s2 = start;
        s2[0] += 0.1 * j * var_ml.sqrt();
        s2[1] += 0.3 * j;
        if mask[2] {
            s2[2] += 0.2 * j;
        }
        let cand = bfgs(returns, &lf2, s2, mask, opts)?;
        if cand.converged || cand.loglik > out.loglik {
            out = cand;
        }
    }

    // Observed information: stderrs from the inverse negative Hessian over
    // the free coordinates.
    let dims: Vec<usize> = (0..3).filter(|&j| mask[j]).collect();
    let h_full = hessian(returns, &lf2, &out.theta);
    let h_free = DMatrix::from_fn(dims.len(), dims.len(), |a, b| -h_full[(dims[a], dims[b])]);
    let mut stderrs = vec![0.0; 3];
    if let Some(inv) = h_free.try_inverse() {
        for (a, &j) in dims.iter().enumerate() {
            stderrs[j] = inv[(a, a)].max(0.0).sqrt();
        }
    }

    Ok(MGarchFit {
        beta0: out.theta[0],
        lambda0: out.theta[1],
        lambda1: out.theta[2],
        stderrs,
        loglik: out.loglik,
        converged: out.converged,
        iterations: out.iterations,
    })
}

/// One fit per trailing window of `window` observations, dated at the
/// window end. Non-converged windows are flagged, not dropped.
pub fn rolling_mgarch(returns: &[f64], f_ks: &[f64], window: usize) -> Result<Vec<MGarchFit>> {
    let t = returns.len();
    if f_ks.len() != t {
        return Err(Error::DimensionError("returns and factor disagree on length".into()));
    }
    if window > t {
        return Err(Error::InsufficientData(format!(
            "window {window} exceeds sample length {t}"
        )));
    }
    (window..=t)
        .into_par_iter()
        .map(|end| mgarch_fit(&returns[end - window..end], &f_ks[end - window..end]))
        .collect()
}

/// (G)ARCH-effect screen: regress `ln(eps_t^2 + guard)` on a constant, its
/// own lag and `F_KS,t`, where `eps` are demeaned returns.
pub fn sanity_check_regression(returns: &[f64], f_ks: &[f64]) -> Result<OlsFit> {
    let t = returns.len();
    if f_ks.len() != t {
        return Err(Error::DimensionError("returns and factor disagree on length".into()));
    }
    if t < 24 {
        return Err(Error::InsufficientData(format!("need at least 24 observations, got {t}")));
    }
    let mean = returns.iter().sum::<f64>() / t as f64;
    let log_e2: Vec<f64> = returns
        .iter()
        .map(|r| {
            let e = r - mean;
            (e * e).max(LOG_F2_GUARD).ln()
        })
        .collect();
    let y = &log_e2[1..];
    let mut x = DMatrix::zeros(t - 1, 2);
    for s in 0..t - 1 {
        x[(s, 0)] = log_e2[s];
        x[(s, 1)] = f_ks[s + 1];
    }
    regression::ols(y, &x, true)
}
