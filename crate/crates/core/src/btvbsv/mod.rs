//! Bayesian time-varying-beta model with stochastic volatility and
//! structural-break indicators (B-TVB-SV).
//!
//! Returns load on factors through random-walk betas whose innovations are
//! gated by Bernoulli break indicators; idiosyncratic log variances follow
//! the same break-gated random walk. Risk prices come from a second-stage
//! pricing regression on the sampled betas:
//!
//! ```text
//! r_it = sum_j beta_ij,t F_jt + sigma_it eps_it
//! beta_ij,t = beta_ij,t-1 + kappa_ij,t eta_ij,t     eta ~ N(0, q2_ij)
//! ln sigma2_it = ln sigma2_it-1 + kappa_iv,t ups_it ups ~ N(0, q2_iv)
//! r_it = lambda_0 + sum_j lambda_j beta_ij,t + e_it e ~ N(0, tau2)
//! ```
//!
//! One Gibbs cycle samples states (betas by FFBS, log variances by the
//! ln chi-squared mixture plus FFBS), then break indicators with their
//! probabilities and sizes, then risk prices. Runs are deterministic per
//! seed.

mod breaks;
mod conjugate;
mod diagnostics;
mod ffbs;
mod mixture;
mod store;

pub use breaks::{break_increments, sweep_component, SegmentObs};
pub use conjugate::{sample_beta, sample_inverse_gamma2, sample_mvn_from_precision};
pub use diagnostics::{
    convergence_diagnostics, geweke_z, geweke_z_with, BlockDiagnostics, ConvergenceReport,
};
pub use ffbs::{sample_mvn, sample_path, smoother_means, StateSpace};
pub use mixture::{
    sample_indicator as sample_mixture_indicator, MEANS as MIXTURE_MEANS,
    VARIANCES as MIXTURE_VARIANCES, WEIGHTS as MIXTURE_WEIGHTS,
};
pub use store::{load_draws, save_draws};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::regression;
use crate::series::{align_panel_factors, FactorSet, ReturnPanel};

/// Offset inside `ln((r - beta'F)^2 + offset)` guarding exact zeros.
const LOG_RESID_OFFSET: f64 = 1e-8;
/// Log-variance clamp keeping `exp` in range.
const LNSIG2_CLAMP: f64 = 30.0;

/// Prior hyperparameters. Beta priors are per portfolio and coefficient;
/// everything else is shared.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    /// N x (K+1) prior means for the initial betas.
    pub mu_beta: DMatrix<f64>,
    /// N x (K+1) prior variances for the initial betas.
    pub var_beta: DMatrix<f64>,
    pub mu_lnsig2: f64,
    pub var_lnsig2: f64,
    pub a_beta: f64,
    pub b_beta: f64,
    pub a_v: f64,
    pub b_v: f64,
    pub gamma_beta: f64,
    pub theta_beta: f64,
    pub gamma_v: f64,
    pub theta_v: f64,
    pub lambda_mean: f64,
    pub lambda_var: f64,
    pub psi0: f64,
    pub big_psi0: f64,
}

impl Hyperparams {
    /// Table defaults with flat zero-centered beta priors.
    pub fn defaults(n_portfolios: usize, n_factors: usize) -> Self {
        Hyperparams {
            mu_beta: DMatrix::zeros(n_portfolios, n_factors + 1),
            var_beta: DMatrix::from_element(n_portfolios, n_factors + 1, 100.0),
            mu_lnsig2: 2.0,
            var_lnsig2: 10.0,
            a_beta: 3.2,
            b_beta: 60.0,
            a_v: 1.0,
            b_v: 99.0,
            gamma_beta: 0.5,
            theta_beta: 100.0,
            gamma_v: 0.2,
            theta_v: 50.0,
            lambda_mean: 0.0,
            lambda_var: 1000.0,
            psi0: 0.1,
            big_psi0: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("var_lnsig2", self.var_lnsig2),
            ("a_beta", self.a_beta),
            ("b_beta", self.b_beta),
            ("a_v", self.a_v),
            ("b_v", self.b_v),
            ("gamma_beta", self.gamma_beta),
            ("theta_beta", self.theta_beta),
            ("gamma_v", self.gamma_v),
            ("theta_v", self.theta_v),
            ("lambda_var", self.lambda_var),
            ("psi0", self.psi0),
            ("big_psi0", self.big_psi0),
        ] {
            if v <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "hyperparameter {name} must be positive, got {v}"
                )));
            }
        }
        if self.var_beta.iter().any(|v| *v <= 0.0) {
            return Err(Error::InvalidInput("beta prior variances must be positive".into()));
        }
        Ok(())
    }
}

/// Beta prior means and variances from per-portfolio OLS on the first
/// `training_years` of data; the rest from the table defaults.
pub fn init_priors(
    panel: &ReturnPanel,
    factors: &FactorSet,
    training_years: usize,
) -> Result<Hyperparams> {
    let (panel, factors) = align_panel_factors(panel, factors)?;
    let months = training_years * 12;
    let k = factors.n_factors();
    if panel.n_periods() < months || months < k + 3 {
        return Err(Error::InsufficientData(format!(
            "training window of {months} months unavailable in a {}-month panel",
            panel.n_periods()
        )));
    }
    let train_panel = panel.window(0, months - 1)?;
    let train_factors = factors.window(0, months - 1)?;
    let mut hp = Hyperparams::defaults(panel.n_portfolios(), k);
    for i in 0..panel.n_portfolios() {
        let y: Vec<f64> = train_panel.returns().row(i).iter().copied().collect();
        let fit = regression::ols(&y, train_factors.columns(), true)?;
        for j in 0..=k {
            hp.mu_beta[(i, j)] = fit.coefficients[j];
            hp.var_beta[(i, j)] = (fit.stderrs[j] * fit.stderrs[j]).max(1e-8);
        }
    }
    Ok(hp)
}

/// Run controls. `burn` defaults to half the iterations and `thin` to 5.
#[derive(Debug, Clone, Copy)]
pub struct GibbsConfig {
    pub n_iter: usize,
    pub burn: usize,
    pub thin: usize,
    pub seed: u64,
    /// Drop every likelihood contribution, so the chain samples the joint
    /// prior (prior-predictive mode).
    pub prior_only: bool,
}

impl GibbsConfig {
    pub fn new(n_iter: usize, seed: u64) -> Self {
        GibbsConfig { n_iter, burn: n_iter / 2, thin: 5, seed, prior_only: false }
    }

    fn validate(&self) -> Result<()> {
        if self.n_iter == 0 || self.burn >= self.n_iter || self.thin == 0 {
            return Err(Error::InvalidInput(format!(
                "need n_iter > burn >= 0 and thin >= 1, got n_iter={}, burn={}, thin={}",
                self.n_iter, self.burn, self.thin
            )));
        }
        Ok(())
    }
}

/// Stored (thinned, post-burn) draws, flattened row-major per draw.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub n_portfolios: usize,
    pub n_factors: usize,
    pub n_periods: usize,
    pub n_draws: usize,
    /// draws x (K+1).
    pub lambda: Vec<f64>,
    pub tau2: Vec<f64>,
    /// draws x N x (K+1).
    pub pi_beta: Vec<f64>,
    /// draws x N.
    pub pi_v: Vec<f64>,
    pub q2_beta: Vec<f64>,
    pub q2_v: Vec<f64>,
    /// draws x N x (K+1) x T.
    pub beta: Vec<f64>,
    /// draws x N x T.
    pub lnsig2: Vec<f64>,
    pub k_beta: Vec<u8>,
    pub k_sigma: Vec<u8>,
    pub seed: u64,
    pub n_iter: usize,
    pub burn: usize,
    pub thin: usize,
    /// Risk-price draws that needed a jitter retry.
    pub ridge_events: u64,
    /// Set when a mid-run error aborted sampling; already-stored draws are
    /// kept for inspection.
    pub aborted: Option<String>,
}

impl PosteriorDraws {
    fn with_capacity(n: usize, k: usize, t: usize, cfg: &GibbsConfig) -> Self {
        let cap = (cfg.n_iter - cfg.burn).div_ceil(cfg.thin);
        PosteriorDraws {
            n_portfolios: n,
            n_factors: k,
            n_periods: t,
            n_draws: 0,
            lambda: Vec::with_capacity(cap * (k + 1)),
            tau2: Vec::with_capacity(cap),
            pi_beta: Vec::with_capacity(cap * n * (k + 1)),
            pi_v: Vec::with_capacity(cap * n),
            q2_beta: Vec::with_capacity(cap * n * (k + 1)),
            q2_v: Vec::with_capacity(cap * n),
            beta: Vec::with_capacity(cap * n * (k + 1) * t),
            lnsig2: Vec::with_capacity(cap * n * t),
            k_beta: Vec::with_capacity(cap * n * (k + 1) * t),
            k_sigma: Vec::with_capacity(cap * n * t),
            seed: cfg.seed,
            n_iter: cfg.n_iter,
            burn: cfg.burn,
            thin: cfg.thin,
            ridge_events: 0,
            aborted: None,
        }
    }

    pub fn lambda_at(&self, d: usize, j: usize) -> f64 {
        self.lambda[d * (self.n_factors + 1) + j]
    }
    pub fn tau2_at(&self, d: usize) -> f64 {
        self.tau2[d]
    }
    pub fn pi_beta_at(&self, d: usize, i: usize, j: usize) -> f64 {
        self.pi_beta[(d * self.n_portfolios + i) * (self.n_factors + 1) + j]
    }
    pub fn pi_v_at(&self, d: usize, i: usize) -> f64 {
        self.pi_v[d * self.n_portfolios + i]
    }
    pub fn q2_beta_at(&self, d: usize, i: usize, j: usize) -> f64 {
        self.q2_beta[(d * self.n_portfolios + i) * (self.n_factors + 1) + j]
    }
    pub fn q2_v_at(&self, d: usize, i: usize) -> f64 {
        self.q2_v[d * self.n_portfolios + i]
    }
    pub fn beta_at(&self, d: usize, i: usize, j: usize, t: usize) -> f64 {
        let kp1 = self.n_factors + 1;
        self.beta[((d * self.n_portfolios + i) * kp1 + j) * self.n_periods + t]
    }
    pub fn lnsig2_at(&self, d: usize, i: usize, t: usize) -> f64 {
        self.lnsig2[(d * self.n_portfolios + i) * self.n_periods + t]
    }
    pub fn k_beta_at(&self, d: usize, i: usize, j: usize, t: usize) -> u8 {
        let kp1 = self.n_factors + 1;
        self.k_beta[((d * self.n_portfolios + i) * kp1 + j) * self.n_periods + t]
    }
    pub fn k_sigma_at(&self, d: usize, i: usize, t: usize) -> u8 {
        self.k_sigma[(d * self.n_portfolios + i) * self.n_periods + t]
    }

    /// Posterior mean of a beta path.
    pub fn beta_mean(&self, i: usize, j: usize) -> Vec<f64> {
        (0..self.n_periods)
            .map(|t| {
                (0..self.n_draws).map(|d| self.beta_at(d, i, j, t)).sum::<f64>()
                    / self.n_draws as f64
            })
            .collect()
    }

    /// Posterior mean of the risk prices.
    pub fn lambda_mean(&self) -> Vec<f64> {
        (0..=self.n_factors)
            .map(|j| {
                (0..self.n_draws).map(|d| self.lambda_at(d, j)).sum::<f64>() / self.n_draws as f64
            })
            .collect()
    }
}

/// Empirical break probabilities across draws.
#[derive(Debug, Clone)]
pub struct BreakProbabilities {
    pub n_portfolios: usize,
    pub n_factors: usize,
    pub n_periods: usize,
    /// N x (K+1) x T.
    pub beta: Vec<f64>,
    /// N x T.
    pub sigma: Vec<f64>,
}

impl BreakProbabilities {
    pub fn beta_at(&self, i: usize, j: usize, t: usize) -> f64 {
        self.beta[(i * (self.n_factors + 1) + j) * self.n_periods + t]
    }
    pub fn sigma_at(&self, i: usize, t: usize) -> f64 {
        self.sigma[i * self.n_periods + t]
    }
}

/// Mean of the stored indicators.
pub fn break_probabilities(draws: &PosteriorDraws) -> Result<BreakProbabilities> {
    if draws.n_draws == 0 {
        return Err(Error::InsufficientData("no stored draws".into()));
    }
    let (n, kp1, t_len) = (draws.n_portfolios, draws.n_factors + 1, draws.n_periods);
    let mut beta = vec![0.0; n * kp1 * t_len];
    let mut sigma = vec![0.0; n * t_len];
    for d in 0..draws.n_draws {
        for i in 0..n {
            for j in 0..kp1 {
                for t in 0..t_len {
                    beta[(i * kp1 + j) * t_len + t] += draws.k_beta_at(d, i, j, t) as f64;
                }
            }
            for t in 0..t_len {
                sigma[i * t_len + t] += draws.k_sigma_at(d, i, t) as f64;
            }
        }
    }
    let scale = 1.0 / draws.n_draws as f64;
    beta.iter_mut().for_each(|v| *v *= scale);
    sigma.iter_mut().for_each(|v| *v *= scale);
    Ok(BreakProbabilities {
        n_portfolios: n,
        n_factors: draws.n_factors,
        n_periods: t_len,
        beta,
        sigma,
    })
}

/// Mutable chain state. Paths carry T+1 entries, index 0 being the
/// pre-sample state; indicators gate t = 1..=T.
pub struct GibbsState {
    /// Per portfolio: (K+1) x (T+1).
    pub beta: Vec<DMatrix<f64>>,
    /// Per portfolio: T+1.
    pub lnsig2: Vec<Vec<f64>>,
    /// Per portfolio: (K+1) x T.
    pub k_beta: Vec<DMatrix<u8>>,
    /// Per portfolio: T.
    pub k_sigma: Vec<Vec<u8>>,
    pub q2_beta: DMatrix<f64>,
    pub q2_v: Vec<f64>,
    pub pi_beta: DMatrix<f64>,
    pub pi_v: Vec<f64>,
    pub lambda: DVector<f64>,
    pub tau2: f64,
    /// Per portfolio: mixture component per period.
    pub mix: Vec<Vec<usize>>,
    pub ridge_events: u64,
}

impl GibbsState {
    fn init(n: usize, kp1: usize, t_len: usize, hp: &Hyperparams) -> Self {
        GibbsState {
            beta: (0..n)
                .map(|i| {
                    DMatrix::from_fn(kp1, t_len + 1, |j, _| hp.mu_beta[(i, j)])
                })
                .collect(),
            lnsig2: vec![vec![hp.mu_lnsig2; t_len + 1]; n],
            k_beta: vec![DMatrix::zeros(kp1, t_len); n],
            k_sigma: vec![vec![0u8; t_len]; n],
            q2_beta: DMatrix::from_element(
                n,
                kp1,
                hp.theta_beta / (hp.gamma_beta + 2.0),
            ),
            q2_v: vec![hp.theta_v / (hp.gamma_v + 2.0); n],
            pi_beta: DMatrix::from_element(n, kp1, hp.a_beta / (hp.a_beta + hp.b_beta)),
            pi_v: vec![hp.a_v / (hp.a_v + hp.b_v); n],
            lambda: DVector::zeros(kp1),
            tau2: 1.0,
            mix: vec![vec![4usize; t_len]; n],
            ridge_events: 0,
        }
    }
}

fn design_row(factors: &DMatrix<f64>, t: usize, kp1: usize) -> DVector<f64> {
    let mut x = DVector::zeros(kp1);
    x[0] = 1.0;
    for j in 1..kp1 {
        x[j] = factors[(t, j - 1)];
    }
    x
}

/// Draw new beta and log-variance paths given breaks and sizes.
pub fn sample_states<R: Rng + ?Sized>(
    returns: &DMatrix<f64>,
    factors: &DMatrix<f64>,
    hp: &Hyperparams,
    state: &mut GibbsState,
    prior_only: bool,
    rng: &mut R,
) -> Result<()> {
    let n = returns.nrows();
    let t_len = returns.ncols();
    let kp1 = factors.ncols() + 1;

    for i in 0..n {
        if prior_only {
            // States straight from the prior random walk.
            for j in 0..kp1 {
                let z: f64 = StandardNormal.sample(rng);
                state.beta[i][(j, 0)] =
                    hp.mu_beta[(i, j)] + hp.var_beta[(i, j)].sqrt() * z;
                for t in 1..=t_len {
                    let step = if state.k_beta[i][(j, t - 1)] == 1 {
                        let z: f64 = StandardNormal.sample(rng);
                        state.q2_beta[(i, j)].sqrt() * z
                    } else {
                        0.0
                    };
                    state.beta[i][(j, t)] = state.beta[i][(j, t - 1)] + step;
                }
            }
            let z: f64 = StandardNormal.sample(rng);
            state.lnsig2[i][0] = hp.mu_lnsig2 + hp.var_lnsig2.sqrt() * z;
            for t in 1..=t_len {
                let step = if state.k_sigma[i][t - 1] == 1 {
                    let z: f64 = StandardNormal.sample(rng);
                    state.q2_v[i].sqrt() * z
                } else {
                    0.0
                };
                state.lnsig2[i][t] = state.lnsig2[i][t - 1] + step;
            }
            for t in 0..t_len {
                state.mix[i][t] = mixture::sample_prior_indicator(rng);
            }
            continue;
        }

        // Betas: linear-Gaussian given the volatility path.
        let y: Vec<f64> = returns.row(i).iter().copied().collect();
        let mut coef = DMatrix::zeros(t_len, kp1);
        for t in 0..t_len {
            coef[(t, 0)] = 1.0;
            for j in 1..kp1 {
                coef[(t, j)] = factors[(t, j - 1)];
            }
        }
        let obs_var: Vec<f64> = (1..=t_len).map(|t| state.lnsig2[i][t].exp()).collect();
        let trans = DMatrix::from_fn(t_len, kp1, |t, j| {
            if state.k_beta[i][(j, t)] == 1 {
                state.q2_beta[(i, j)]
            } else {
                0.0
            }
        });
        let ss = StateSpace {
            obs: &y,
            obs_coef: &coef,
            obs_var: &obs_var,
            trans_var: &trans,
            prior_mean: DVector::from_fn(kp1, |j, _| hp.mu_beta[(i, j)]),
            prior_var: DVector::from_fn(kp1, |j, _| hp.var_beta[(i, j)]),
        };
        let path = sample_path(&ss, rng)?;
        state.beta[i].copy_from(&path);

        // Volatilities: mixture indicators, then a scalar FFBS.
        let mut ystar = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let x = design_row(factors, t, kp1);
            let resid = y[t] - x.dot(&state.beta[i].column(t + 1).into_owned());
            ystar.push((resid * resid + LOG_RESID_OFFSET).ln());
        }
        for t in 0..t_len {
            state.mix[i][t] = mixture::sample_indicator(ystar[t], state.lnsig2[i][t + 1], rng);
        }
        let adj_obs: Vec<f64> =
            (0..t_len).map(|t| ystar[t] - mixture::MEANS[state.mix[i][t]]).collect();
        let mix_var: Vec<f64> = (0..t_len).map(|t| mixture::VARIANCES[state.mix[i][t]]).collect();
        let ones = DMatrix::from_element(t_len, 1, 1.0);
        let trans_h = DMatrix::from_fn(t_len, 1, |t, _| {
            if state.k_sigma[i][t] == 1 {
                state.q2_v[i]
            } else {
                0.0
            }
        });
        let ss_h = StateSpace {
            obs: &adj_obs,
            obs_coef: &ones,
            obs_var: &mix_var,
            trans_var: &trans_h,
            prior_mean: DVector::from_element(1, hp.mu_lnsig2),
            prior_var: DVector::from_element(1, hp.var_lnsig2),
        };
        let h_path = sample_path(&ss_h, rng)?;
        for t in 0..=t_len {
            state.lnsig2[i][t] = h_path[(0, t)].clamp(-LNSIG2_CLAMP, LNSIG2_CLAMP);
        }
    }
    Ok(())
}

/// Draw break indicators, probabilities and sizes.
pub fn sample_breaks<R: Rng + ?Sized>(
    returns: &DMatrix<f64>,
    factors: &DMatrix<f64>,
    hp: &Hyperparams,
    state: &mut GibbsState,
    prior_only: bool,
    rng: &mut R,
) -> Result<()> {
    let n = returns.nrows();
    let t_len = returns.ncols();
    let kp1 = factors.ncols() + 1;

    for i in 0..n {
        if prior_only {
            // (kappa, increments) are drawn jointly from their conditional
            // given (pi, q2) so the q2 update below sees increments
            // generated under the same indicators.
            for j in 0..kp1 {
                for t in 1..=t_len {
                    let brk = rng.random::<f64>() < state.pi_beta[(i, j)];
                    state.k_beta[i][(j, t - 1)] = u8::from(brk);
                    let step = if brk {
                        let z: f64 = StandardNormal.sample(rng);
                        state.q2_beta[(i, j)].sqrt() * z
                    } else {
                        0.0
                    };
                    state.beta[i][(j, t)] = state.beta[i][(j, t - 1)] + step;
                }
            }
            for t in 1..=t_len {
                let brk = rng.random::<f64>() < state.pi_v[i];
                state.k_sigma[i][t - 1] = u8::from(brk);
                let step = if brk {
                    let z: f64 = StandardNormal.sample(rng);
                    state.q2_v[i].sqrt() * z
                } else {
                    0.0
                };
                state.lnsig2[i][t] = state.lnsig2[i][t - 1] + step;
            }
        } else {
            // Beta components, one at a time against the others.
            for j in 0..kp1 {
                let obs: Vec<SegmentObs> = (0..t_len)
                    .map(|t| {
                        let x = design_row(factors, t, kp1);
                        let mut partial = returns[(i, t)];
                        for j2 in 0..kp1 {
                            if j2 != j {
                                partial -= x[j2] * state.beta[i][(j2, t + 1)];
                            }
                        }
                        SegmentObs {
                            coef: x[j],
                            var: state.lnsig2[i][t + 1].exp(),
                            y: partial,
                        }
                    })
                    .collect();
                let mut path: Vec<f64> = state.beta[i].row(j).iter().copied().collect();
                let mut k: Vec<u8> = state.k_beta[i].row(j).iter().copied().collect();
                sweep_component(&mut path, &mut k, &obs, state.q2_beta[(i, j)], state.pi_beta[(i, j)], rng);
                for t in 0..=t_len {
                    state.beta[i][(j, t)] = path[t];
                }
                for t in 0..t_len {
                    state.k_beta[i][(j, t)] = k[t];
                }
            }
            // Volatility breaks against the mixture-linearized observations.
            let obs: Vec<SegmentObs> = (0..t_len)
                .map(|t| {
                    let x = design_row(factors, t, kp1);
                    let resid = returns[(i, t)] - x.dot(&state.beta[i].column(t + 1).into_owned());
                    let ystar = (resid * resid + LOG_RESID_OFFSET).ln();
                    SegmentObs {
                        coef: 1.0,
                        var: mixture::VARIANCES[state.mix[i][t]],
                        y: ystar - mixture::MEANS[state.mix[i][t]],
                    }
                })
                .collect();
            let mut path = state.lnsig2[i].clone();
            let mut k = state.k_sigma[i].clone();
            sweep_component(&mut path, &mut k, &obs, state.q2_v[i], state.pi_v[i], rng);
            state.lnsig2[i] = path;
            state.k_sigma[i] = k;
        }

        // Conjugate probability and size updates.
        for j in 0..kp1 {
            let path: Vec<f64> = state.beta[i].row(j).iter().copied().collect();
            let k: Vec<u8> = state.k_beta[i].row(j).iter().copied().collect();
            let (m, ss) = break_increments(&path, &k);
            state.pi_beta[(i, j)] = sample_beta(
                hp.a_beta + m as f64,
                hp.b_beta + (t_len - m) as f64,
                rng,
            )?;
            state.q2_beta[(i, j)] =
                sample_inverse_gamma2(hp.gamma_beta + m as f64, hp.theta_beta + ss, rng)?;
        }
        let (m, ss) = break_increments(&state.lnsig2[i], &state.k_sigma[i]);
        state.pi_v[i] =
            sample_beta(hp.a_v + m as f64, hp.b_v + (t_len - m) as f64, rng)?;
        state.q2_v[i] = sample_inverse_gamma2(hp.gamma_v + m as f64, hp.theta_v + ss, rng)?;
    }
    Ok(())
}

/// Draw tau2 and the risk prices from the second-stage pricing regression
/// of all (i, t) returns on a constant and the sampled betas.
pub fn sample_risk_prices<R: Rng + ?Sized>(
    returns: &DMatrix<f64>,
    hp: &Hyperparams,
    state: &mut GibbsState,
    prior_only: bool,
    rng: &mut R,
) -> Result<()> {
    let n = returns.nrows();
    let t_len = returns.ncols();
    let kp1 = state.lambda.len();

    if prior_only || n == 0 || t_len == 0 {
        state.tau2 = sample_inverse_gamma2(hp.psi0, hp.big_psi0, rng)?;
        for j in 0..kp1 {
            let z: f64 = StandardNormal.sample(rng);
            state.lambda[j] = hp.lambda_mean + hp.lambda_var.sqrt() * z;
        }
        return Ok(());
    }

    // tau2 given the current lambda, then lambda given the new tau2.
    let xtx = {
        let mut m = DMatrix::zeros(kp1, kp1);
        let mut xty = DVector::zeros(kp1);
        let mut ss = 0.0;
        for i in 0..n {
            for t in 0..t_len {
                let mut x = DVector::zeros(kp1);
                x[0] = 1.0;
                for j in 1..kp1 {
                    x[j] = state.beta[i][(j, t + 1)];
                }
                let y = returns[(i, t)];
                let e = y - x.dot(&state.lambda);
                ss += e * e;
                for a in 0..kp1 {
                    xty[a] += x[a] * y;
                    for b in 0..kp1 {
                        m[(a, b)] += x[a] * x[b];
                    }
                }
            }
        }
        state.tau2 = sample_inverse_gamma2(
            hp.psi0 + (n * t_len) as f64,
            hp.big_psi0 + ss,
            rng,
        )?;
        (m, xty)
    };
    let (xtx, xty) = xtx;
    let mut precision = &xtx / state.tau2;
    for j in 0..kp1 {
        precision[(j, j)] += 1.0 / hp.lambda_var;
    }
    let info = &xty / state.tau2
        + DVector::from_element(kp1, hp.lambda_mean / hp.lambda_var);
    let mean = match nalgebra::Cholesky::new(precision.clone()) {
        Some(chol) => chol.solve(&info),
        None => {
            state.ridge_events += 1;
            let mut jittered = precision.clone();
            for j in 0..kp1 {
                jittered[(j, j)] += 1e-8 * (1.0 + jittered[(j, j)].abs());
            }
            precision = jittered.clone();
            nalgebra::Cholesky::new(jittered)
                .ok_or_else(|| {
                    Error::NumericalError("risk-price precision singular after jitter".into())
                })?
                .solve(&info)
        }
    };
    state.lambda = sample_mvn_from_precision(&mean, &precision, rng)?;
    Ok(())
}

fn store_draw(draws: &mut PosteriorDraws, state: &GibbsState) {
    let n = draws.n_portfolios;
    let kp1 = draws.n_factors + 1;
    let t_len = draws.n_periods;
    draws.lambda.extend(state.lambda.iter());
    draws.tau2.push(state.tau2);
    for i in 0..n {
        for j in 0..kp1 {
            draws.pi_beta.push(state.pi_beta[(i, j)]);
            draws.q2_beta.push(state.q2_beta[(i, j)]);
        }
    }
    for i in 0..n {
        draws.pi_v.push(state.pi_v[i]);
        draws.q2_v.push(state.q2_v[i]);
    }
    for i in 0..n {
        for j in 0..kp1 {
            for t in 1..=t_len {
                draws.beta.push(state.beta[i][(j, t)]);
            }
        }
    }
    for i in 0..n {
        for t in 1..=t_len {
            draws.lnsig2.push(state.lnsig2[i][t]);
        }
    }
    for i in 0..n {
        for j in 0..kp1 {
            for t in 0..t_len {
                draws.k_beta.push(state.k_beta[i][(j, t)]);
            }
        }
    }
    for i in 0..n {
        for t in 0..t_len {
            draws.k_sigma.push(state.k_sigma[i][t]);
        }
    }
    draws.n_draws += 1;
    draws.ridge_events = state.ridge_events;
}

/// Run the Gibbs sampler. On a mid-run numerical failure the draws stored
/// so far are returned with `aborted` describing the failing iteration;
/// an error before the first stored draw is returned as `Err`.
pub fn gibbs_run(
    panel: &ReturnPanel,
    factors: &FactorSet,
    hp: &Hyperparams,
    cfg: &GibbsConfig,
) -> Result<PosteriorDraws> {
    cfg.validate()?;
    hp.validate()?;
    let (panel, factors) = align_panel_factors(panel, factors)?;
    let n = panel.n_portfolios();
    let t_len = panel.n_periods();
    let k = factors.n_factors();
    if hp.mu_beta.nrows() != n || hp.mu_beta.ncols() != k + 1 {
        return Err(Error::DimensionError(format!(
            "beta prior is {}x{}, expected {}x{}",
            hp.mu_beta.nrows(),
            hp.mu_beta.ncols(),
            n,
            k + 1
        )));
    }

    let returns = panel.returns().clone();
    let fcols = factors.columns().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = GibbsState::init(n, k + 1, t_len, hp);
    let mut draws = PosteriorDraws::with_capacity(n, k, t_len, cfg);

    for iter in 0..cfg.n_iter {
        let step = sample_states(&returns, &fcols, hp, &mut state, cfg.prior_only, &mut rng)
            .and_then(|_| {
                sample_breaks(&returns, &fcols, hp, &mut state, cfg.prior_only, &mut rng)
            })
            .and_then(|_| {
                sample_risk_prices(&returns, hp, &mut state, cfg.prior_only, &mut rng)
            });
        if let Err(e) = step {
            let msg = format!("iteration {iter}: {e}");
            if draws.n_draws == 0 {
                return Err(Error::NumericalError(msg));
            }
            draws.aborted = Some(msg);
            return Ok(draws);
        }
        if iter >= cfg.burn && (iter - cfg.burn) % cfg.thin == 0 {
            store_draw(&mut draws, &state);
        }
    }
    Ok(draws)
}
