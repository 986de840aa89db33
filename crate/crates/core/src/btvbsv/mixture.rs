//! Ten-component normal mixture approximation to the ln chi-squared(1)
//! distribution, used to linearize the stochastic-volatility observation
//! equation (constants from Omori, Chib, Shephard and Nakajima, 2007).

use rand::Rng;

pub const N_COMPONENTS: usize = 10;

pub const WEIGHTS: [f64; N_COMPONENTS] = [
    0.00609, 0.04775, 0.13057, 0.20674, 0.22715, 0.18842, 0.12047, 0.05591, 0.01575, 0.00115,
];

pub const MEANS: [f64; N_COMPONENTS] = [
    1.92677, 1.34744, 0.73504, 0.02266, -0.85173, -1.97278, -3.46788, -5.55246, -8.68384,
    -14.65000,
];

pub const VARIANCES: [f64; N_COMPONENTS] = [
    0.11265, 0.17788, 0.26768, 0.40611, 0.62699, 0.98583, 1.57469, 2.54498, 4.16591, 7.33342,
];

/// Draw a component index given `ystar = h + ln(eps^2)` and the current h.
pub fn sample_indicator<R: Rng + ?Sized>(ystar: f64, h: f64, rng: &mut R) -> usize {
    let mut logp = [0.0f64; N_COMPONENTS];
    let mut max = f64::NEG_INFINITY;
    for j in 0..N_COMPONENTS {
        let resid = ystar - h - MEANS[j];
        logp[j] = WEIGHTS[j].ln() - 0.5 * (VARIANCES[j].ln() + resid * resid / VARIANCES[j]);
        if logp[j] > max {
            max = logp[j];
        }
    }
    let mut total = 0.0;
    for l in &mut logp {
        *l = (*l - max).exp();
        total += *l;
    }
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (j, l) in logp.iter().enumerate() {
        acc += l;
        if u <= acc {
            return j;
        }
    }
    N_COMPONENTS - 1
}

/// Draw a component from the prior weights.
pub fn sample_prior_indicator<R: Rng + ?Sized>(rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, w) in WEIGHTS.iter().enumerate() {
        acc += w;
        if u <= acc {
            return j;
        }
    }
    N_COMPONENTS - 1
}
