//! Single-move break-indicator sampling.
//!
//! Between breaks a random-walk-with-breaks state is constant, so the path
//! is a step function. The move at time t redraws the indicator kappa_t
//! together with the segment value it governs: conditioning on the state
//! just before t and the state after the next break, the segment value is
//! integrated out analytically for the kappa_t = 1 branch and pinned to
//! the left neighbor for the kappa_t = 0 branch. This keeps the chain
//! mixing without the degeneracy of conditioning on a fixed path.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const LN_2PI: f64 = 1.8378770664093453;

/// One observation touching the segment: `y ~ N(coef * v, var)`.
#[derive(Debug, Clone, Copy)]
pub struct SegmentObs {
    pub coef: f64,
    pub var: f64,
    pub y: f64,
}

/// Accumulator for a Gaussian quadratic form in the segment value v:
/// sum of `-(P v^2 - 2 b v + c) / 2` over factors.
#[derive(Default, Clone, Copy)]
struct Quad {
    p: f64,
    b: f64,
    c: f64,
}

impl Quad {
    fn add_obs(&mut self, o: &SegmentObs) {
        self.p += o.coef * o.coef / o.var;
        self.b += o.coef * o.y / o.var;
        self.c += o.y * o.y / o.var + (o.var).ln() + LN_2PI;
    }

    fn add_gaussian(&mut self, center: f64, var: f64) {
        self.p += 1.0 / var;
        self.b += center / var;
        self.c += center * center / var + var.ln() + LN_2PI;
    }

    /// log of the integral over v.
    fn log_marginal(&self) -> f64 {
        0.5 * LN_2PI - 0.5 * self.p.ln() + self.b * self.b / (2.0 * self.p) - 0.5 * self.c
    }

    /// log density of all factors evaluated at a fixed v.
    fn log_at(&self, v: f64) -> f64 {
        -0.5 * (self.p * v * v - 2.0 * self.b * v + self.c)
    }
}

/// Sweep the indicators for one state component.
///
/// `path` holds the states alpha_0..alpha_T (length T+1) and is updated in
/// place; `indicators[t-1]` gates the innovation into alpha_t. `obs[s-1]`
/// describes the observation at time s. Returns the number of breaks.
pub fn sweep_component<R: Rng + ?Sized>(
    path: &mut [f64],
    indicators: &mut [u8],
    obs: &[SegmentObs],
    q2: f64,
    pi: f64,
    rng: &mut R,
) -> usize {
    let t_len = indicators.len();
    debug_assert_eq!(path.len(), t_len + 1);
    debug_assert_eq!(obs.len(), t_len);
    let pi = pi.clamp(1e-12, 1.0 - 1e-12);

    for t in 1..=t_len {
        // Segment governed by kappa_t: t ..= t_next - 1.
        let mut t_next = t_len + 1;
        for s in (t + 1)..=t_len {
            if indicators[s - 1] == 1 {
                t_next = s;
                break;
            }
        }
        let left = path[t - 1];

        let mut quad = Quad::default();
        for s in t..t_next.min(t_len + 1) {
            quad.add_obs(&obs[s - 1]);
        }
        if t_next <= t_len {
            quad.add_gaussian(path[t_next], q2);
        }

        // kappa = 1: integrate the segment value against its N(left, q2)
        // prior; kappa = 0: the segment value equals the left state.
        let mut with_prior = quad;
        with_prior.add_gaussian(left, q2);
        let log_m1 = with_prior.log_marginal();
        let log_m0 = quad.log_at(left);

        let log_odds = pi.ln() + log_m1 - (1.0 - pi).ln() - log_m0;
        let p1 = 1.0 / (1.0 + (-log_odds).exp());
        let take_break = rng.random::<f64>() < p1;

        let value = if take_break {
            let post_p = with_prior.p;
            let post_mean = with_prior.b / post_p;
            let z: f64 = StandardNormal.sample(rng);
            post_mean + z / post_p.sqrt()
        } else {
            left
        };
        indicators[t - 1] = u8::from(take_break);
        for s in t..t_next.min(t_len + 1) {
            path[s] = value;
        }
    }
    indicators.iter().map(|&k| k as usize).sum()
}

/// Squared increments at break times, for the q^2 conjugate update.
pub fn break_increments(path: &[f64], indicators: &[u8]) -> (usize, f64) {
    let mut count = 0;
    let mut ss = 0.0;
    for (t, &k) in indicators.iter().enumerate() {
        if k == 1 {
            let d = path[t + 1] - path[t];
            count += 1;
            ss += d * d;
        }
    }
    (count, ss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flat_obs(values: &[f64], var: f64) -> Vec<SegmentObs> {
        values.iter().map(|&y| SegmentObs { coef: 1.0, var, y }).collect()
    }

    #[test]
    fn no_signal_keeps_breaks_rare() {
        // Constant data, strong prior against breaks.
        let t_len = 80;
        let obs = flat_obs(&vec![1.0; t_len], 0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut total = 0usize;
        let sweeps = 200;
        let mut path = vec![1.0; t_len + 1];
        let mut k = vec![0u8; t_len];
        for _ in 0..sweeps {
            total += sweep_component(&mut path, &mut k, &obs, 0.5, 0.01, &mut rng);
        }
        let rate = total as f64 / (sweeps * t_len) as f64;
        assert!(rate < 0.05, "break rate {rate} too high for clean data");
    }

    #[test]
    fn obvious_jump_is_found() {
        // Level shifts 0 -> 3 at t = 41 with small noise.
        let t_len = 80;
        let mut values = vec![0.0; t_len];
        for v in values.iter_mut().skip(40) {
            *v = 3.0;
        }
        let obs = flat_obs(&values, 0.05);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut path = vec![0.0; t_len + 1];
        let mut k = vec![0u8; t_len];
        let mut hits = 0;
        let sweeps = 200;
        let mut post = vec![0usize; t_len];
        for _ in 0..sweeps {
            sweep_component(&mut path, &mut k, &obs, 4.0, 0.02, &mut rng);
            for (t, &kk) in k.iter().enumerate() {
                post[t] += kk as usize;
            }
            if k[40] == 1 {
                hits += 1;
            }
        }
        // The break at t = 41 (index 40) should be on nearly always.
        assert!(hits > sweeps * 9 / 10, "break found in {hits}/{sweeps} sweeps");
        let peak = post.iter().enumerate().max_by_key(|(_, c)| **c).unwrap().0;
        assert!((peak as i64 - 40).abs() <= 1, "posterior peak at {peak}");
    }

    #[test]
    fn increments_accumulate_at_breaks_only() {
        let path = vec![0.0, 0.0, 2.0, 2.0, -1.0];
        let k = vec![0u8, 1, 0, 1];
        let (count, ss) = break_increments(&path, &k);
        assert_eq!(count, 2);
        assert!((ss - (4.0 + 9.0)).abs() < 1e-12);
    }
}
