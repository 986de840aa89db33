//! Forward-filter backward-sampler for a random-walk state with diagonal
//! innovation variances and a scalar observation per period.
//!
//! The state obeys `alpha_t = alpha_{t-1} + w_t`, `w_t ~ N(0, diag(W_t))`,
//! observed through `y_t = h_t' alpha_t + v_t`, `v_t ~ N(0, r_t)`. Zero
//! entries in `W_t` pin the matching state component, which is how break
//! indicators enter: the innovation variance at t is `kappa_t * q^2`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub struct StateSpace<'a> {
    /// y_1..y_T.
    pub obs: &'a [f64],
    /// T x d observation coefficients, row t-1 = h_t.
    pub obs_coef: &'a DMatrix<f64>,
    /// Observation variances r_1..r_T.
    pub obs_var: &'a [f64],
    /// T x d diagonal transition variances, row t-1 = diag(W_t).
    pub trans_var: &'a DMatrix<f64>,
    /// Prior mean and diagonal variance of alpha_0.
    pub prior_mean: DVector<f64>,
    pub prior_var: DVector<f64>,
}

struct Forward {
    means: Vec<DVector<f64>>,
    covs: Vec<DMatrix<f64>>,
}

fn forward_filter(ss: &StateSpace) -> Result<Forward> {
    let t_len = ss.obs.len();
    let d = ss.prior_mean.len();
    if ss.obs_coef.nrows() != t_len || ss.trans_var.nrows() != t_len || ss.obs_var.len() != t_len {
        return Err(Error::DimensionError("state space pieces disagree on T".into()));
    }
    let mut means = Vec::with_capacity(t_len + 1);
    let mut covs = Vec::with_capacity(t_len + 1);
    means.push(ss.prior_mean.clone());
    covs.push(DMatrix::from_diagonal(&ss.prior_var));
    for t in 0..t_len {
        let mut r = covs[t].clone();
        for j in 0..d {
            r[(j, j)] += ss.trans_var[(t, j)];
        }
        let h = ss.obs_coef.row(t).transpose();
        let rh = &r * &h;
        let q = h.dot(&rh) + ss.obs_var[t];
        if !(q.is_finite() && q > 0.0) {
            return Err(Error::NumericalError(format!(
                "filter innovation variance {q} at t = {}",
                t + 1
            )));
        }
        let f = h.dot(&means[t]);
        let gain = &rh / q;
        let m = &means[t] + &gain * (ss.obs[t] - f);
        let mut c = r - &gain * rh.transpose();
        // Symmetrize against drift.
        for a in 0..d {
            for b in (a + 1)..d {
                let avg = 0.5 * (c[(a, b)] + c[(b, a)]);
                c[(a, b)] = avg;
                c[(b, a)] = avg;
            }
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalError(format!(
                "filter covariance lost finiteness at t = {}",
                t + 1
            )));
        }
        means.push(m);
        covs.push(c);
    }
    Ok(Forward { means, covs })
}

/// Draw one state path alpha_0..alpha_T; column t of the result is alpha_t.
pub fn sample_path<R: Rng + ?Sized>(ss: &StateSpace, rng: &mut R) -> Result<DMatrix<f64>> {
    let fwd = forward_filter(ss)?;
    let t_len = ss.obs.len();
    let d = ss.prior_mean.len();
    let mut path = DMatrix::zeros(d, t_len + 1);
    let mut current = sample_mvn(&fwd.means[t_len], &fwd.covs[t_len], rng)?;
    path.column_mut(t_len).copy_from(&current);
    for t in (0..t_len).rev() {
        let (mean, cov) = backward_moments(ss, &fwd, t, &current)?;
        let next = current.clone();
        current = sample_mvn(&mean, &cov, rng)?;
        // A zero innovation variance into t+1 pins the component exactly.
        for j in 0..d {
            if ss.trans_var[(t, j)] == 0.0 {
                current[j] = next[j];
            }
        }
        path.column_mut(t).copy_from(&current);
    }
    Ok(path)
}

/// Posterior state means alpha_0..alpha_T from the RTS smoother.
pub fn smoother_means(ss: &StateSpace) -> Result<DMatrix<f64>> {
    let fwd = forward_filter(ss)?;
    let t_len = ss.obs.len();
    let d = ss.prior_mean.len();
    let mut out = DMatrix::zeros(d, t_len + 1);
    let mut next = fwd.means[t_len].clone();
    out.column_mut(t_len).copy_from(&next);
    for t in (0..t_len).rev() {
        let gain = smoother_gain(ss, &fwd, t)?;
        let mean = &fwd.means[t] + &gain * (&next - &fwd.means[t]);
        out.column_mut(t).copy_from(&mean);
        next = mean;
    }
    Ok(out)
}

fn smoother_gain(ss: &StateSpace, fwd: &Forward, t: usize) -> Result<DMatrix<f64>> {
    let d = ss.prior_mean.len();
    let mut pred = fwd.covs[t].clone();
    for j in 0..d {
        pred[(j, j)] += ss.trans_var[(t, j)];
    }
    let inv = invert_spd(&pred)?;
    Ok(&fwd.covs[t] * inv)
}

fn backward_moments(
    ss: &StateSpace,
    fwd: &Forward,
    t: usize,
    next_state: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let gain = smoother_gain(ss, fwd, t)?;
    let mean = &fwd.means[t] + &gain * (next_state - &fwd.means[t]);
    let mut cov = &fwd.covs[t] - &gain * &fwd.covs[t];
    let d = cov.nrows();
    for a in 0..d {
        for b in (a + 1)..d {
            let avg = 0.5 * (cov[(a, b)] + cov[(b, a)]);
            cov[(a, b)] = avg;
            cov[(b, a)] = avg;
        }
    }
    Ok((mean, cov))
}

fn invert_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(chol) = nalgebra::Cholesky::new(m.clone()) {
        return Ok(chol.inverse());
    }
    let d = m.nrows();
    let jitter = 1e-12 * (m.trace().abs() / d as f64).max(1e-300);
    let mut jittered = m.clone();
    for j in 0..d {
        jittered[(j, j)] += jitter;
    }
    nalgebra::Cholesky::new(jittered)
        .map(|c| c.inverse())
        .ok_or_else(|| Error::NumericalError("predicted covariance not positive definite".into()))
}

/// Draw from N(mean, cov) with a possibly singular covariance; negative
/// eigenvalues from roundoff are clamped to zero.
pub fn sample_mvn<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let d = mean.len();
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalError("covariance lost finiteness".into()));
    }
    let eig = cov.clone().symmetric_eigen();
    let max_eig = eig.eigenvalues.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let floor = 1e-12 * max_eig;
    let mut sample = mean.clone();
    for j in 0..d {
        let lam = if eig.eigenvalues[j] > floor { eig.eigenvalues[j] } else { 0.0 };
        if lam > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            let scale = lam.sqrt() * z;
            for a in 0..d {
                sample[a] += eig.eigenvectors[(a, j)] * scale;
            }
        }
    }
    Ok(sample)
}
