//! Geweke mean-equality convergence diagnostics.

use crate::error::{Error, Result};

use super::PosteriorDraws;

/// Spectral density at frequency zero with a Bartlett window; bandwidth
/// follows the usual `4 (n/100)^{2/9}` rule.
fn spectral_density_zero(chain: &[f64]) -> f64 {
    let n = chain.len();
    let mean = chain.iter().sum::<f64>() / n as f64;
    let gamma = |k: usize| -> f64 {
        (0..n - k).map(|i| (chain[i] - mean) * (chain[i + k] - mean)).sum::<f64>() / n as f64
    };
    let bandwidth = (4.0 * (n as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize;
    let bandwidth = bandwidth.min(n.saturating_sub(1));
    let mut s = gamma(0);
    for k in 1..=bandwidth {
        let w = 1.0 - k as f64 / (bandwidth + 1) as f64;
        s += 2.0 * w * gamma(k);
    }
    s.max(0.0)
}

/// Geweke z-score comparing the first `first` fraction of a chain with the
/// last `last` fraction. `None` for chains without variation.
pub fn geweke_z_with(chain: &[f64], first: f64, last: f64) -> Option<f64> {
    let n = chain.len();
    if n < 20 {
        return None;
    }
    let n1 = ((n as f64) * first).floor() as usize;
    let n2 = ((n as f64) * last).floor() as usize;
    if n1 < 5 || n2 < 5 || n1 + n2 > n {
        return None;
    }
    let a = &chain[..n1];
    let b = &chain[n - n2..];
    let m1 = a.iter().sum::<f64>() / n1 as f64;
    let m2 = b.iter().sum::<f64>() / n2 as f64;
    let s1 = spectral_density_zero(a);
    let s2 = spectral_density_zero(b);
    let denom = s1 / n1 as f64 + s2 / n2 as f64;
    if denom <= 0.0 {
        return None;
    }
    Some((m1 - m2) / denom.sqrt())
}

/// Geweke z with the standard 10% / 50% windows.
pub fn geweke_z(chain: &[f64]) -> Option<f64> {
    geweke_z_with(chain, 0.10, 0.50)
}

/// Per-block rejection rates.
#[derive(Debug, Clone)]
pub struct BlockDiagnostics {
    pub name: String,
    pub n_parameters: usize,
    /// Zero-variance chains, excluded from the rates.
    pub n_excluded: usize,
    pub rejection_rate_5: f64,
    pub rejection_rate_10: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub blocks: Vec<BlockDiagnostics>,
}

fn summarize(name: &str, chains: impl Iterator<Item = Vec<f64>>) -> BlockDiagnostics {
    let mut n_parameters = 0usize;
    let mut n_excluded = 0usize;
    let mut rej5 = 0usize;
    let mut rej10 = 0usize;
    for chain in chains {
        n_parameters += 1;
        match geweke_z(&chain) {
            Some(z) => {
                if z.abs() > 1.959_963_984_540_054 {
                    rej5 += 1;
                }
                if z.abs() > 1.644_853_626_951_472 {
                    rej10 += 1;
                }
            }
            None => n_excluded += 1,
        }
    }
    let used = (n_parameters - n_excluded).max(1);
    BlockDiagnostics {
        name: name.to_string(),
        n_parameters,
        n_excluded,
        rejection_rate_5: rej5 as f64 / used as f64,
        rejection_rate_10: rej10 as f64 / used as f64,
    }
}

/// Geweke rejection rates for the blocks B, K, Sigma, Q and pi.
pub fn convergence_diagnostics(draws: &PosteriorDraws) -> Result<ConvergenceReport> {
    if draws.n_draws < 200 {
        return Err(Error::InsufficientData(format!(
            "need at least 200 stored draws, got {}",
            draws.n_draws
        )));
    }
    let n = draws.n_portfolios;
    let kp1 = draws.n_factors + 1;
    let t_len = draws.n_periods;

    let beta_chains = (0..n).flat_map(move |i| {
        (0..kp1).flat_map(move |j| {
            (0..t_len).map(move |t| (i, j, t))
        })
    });
    let b = summarize(
        "B",
        beta_chains.map(|(i, j, t)| (0..draws.n_draws).map(|d| draws.beta_at(d, i, j, t)).collect()),
    );

    let k_beta = (0..n)
        .flat_map(move |i| (0..kp1).flat_map(move |j| (0..t_len).map(move |t| (i, j, t))))
        .map(|(i, j, t)| {
            (0..draws.n_draws).map(|d| draws.k_beta_at(d, i, j, t) as f64).collect::<Vec<f64>>()
        });
    let k_sigma = (0..n).flat_map(move |i| (0..t_len).map(move |t| (i, t))).map(|(i, t)| {
        (0..draws.n_draws).map(|d| draws.k_sigma_at(d, i, t) as f64).collect::<Vec<f64>>()
    });
    let k = summarize("K", k_beta.chain(k_sigma));

    let sigma = summarize(
        "Sigma",
        (0..n).flat_map(move |i| (0..t_len).map(move |t| (i, t))).map(|(i, t)| {
            (0..draws.n_draws).map(|d| draws.lnsig2_at(d, i, t)).collect::<Vec<f64>>()
        }),
    );

    let q_beta = (0..n).flat_map(move |i| (0..kp1).map(move |j| (i, j))).map(|(i, j)| {
        (0..draws.n_draws).map(|d| draws.q2_beta_at(d, i, j)).collect::<Vec<f64>>()
    });
    let q_v = (0..n).map(|i| (0..draws.n_draws).map(|d| draws.q2_v_at(d, i)).collect::<Vec<f64>>());
    let q = summarize("Q", q_beta.chain(q_v));

    let pi_beta = (0..n).flat_map(move |i| (0..kp1).map(move |j| (i, j))).map(|(i, j)| {
        (0..draws.n_draws).map(|d| draws.pi_beta_at(d, i, j)).collect::<Vec<f64>>()
    });
    let pi_v =
        (0..n).map(|i| (0..draws.n_draws).map(|d| draws.pi_v_at(d, i)).collect::<Vec<f64>>());
    let pi = summarize("pi", pi_beta.chain(pi_v));

    Ok(ConvergenceReport { blocks: vec![b, k, sigma, q, pi] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn iid_chains_have_nominal_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let n_chains = 4000;
        let len = 600;
        let mut rej = 0;
        for _ in 0..n_chains {
            let chain: Vec<f64> = (0..len).map(|_| normal.sample(&mut rng)).collect();
            if geweke_z(&chain).unwrap().abs() > 1.96 {
                rej += 1;
            }
        }
        let rate = rej as f64 / n_chains as f64;
        assert!((0.02..=0.08).contains(&rate), "5% rejection rate {rate}");
    }

    #[test]
    fn constant_chain_is_excluded() {
        assert!(geweke_z(&vec![1.0; 400]).is_none());
    }

    #[test]
    fn drifting_chain_is_rejected() {
        let chain: Vec<f64> = (0..500).map(|i| i as f64 / 100.0).collect();
        let z = geweke_z(&chain).unwrap();
        assert!(z.abs() > 1.96, "drift not flagged, z = {z}");
    }
}
