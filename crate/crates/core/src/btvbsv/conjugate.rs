//! Conjugate draws used by the sampler.
//!
//! The inverse-Gamma-2 family is parameterized by a shape `nu` and scale
//! `s` with density proportional to `x^{-(nu+2)/2} exp(-s / (2x))`, so a
//! prior `(nu0, s0)` with `m` Gaussian increments summing to `ss` updates
//! to `(nu0 + m, s0 + ss)`. The mean is `s / (nu - 2)` whenever `nu > 2`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta as BetaDist, Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};

/// Draw from inverse-Gamma-2(nu, s): the reciprocal of a
/// Gamma(nu/2, rate s/2) variate.
pub fn sample_inverse_gamma2<R: Rng + ?Sized>(nu: f64, s: f64, rng: &mut R) -> Result<f64> {
    if nu <= 0.0 || s <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "inverse-Gamma-2 needs positive shape and scale, got ({nu}, {s})"
        )));
    }
    let gamma = Gamma::new(nu / 2.0, 2.0 / s)
        .map_err(|e| Error::NumericalError(format!("gamma sampler: {e}")))?;
    let g: f64 = gamma.sample(rng);
    Ok(1.0 / g.max(1e-300))
}

pub fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    let dist = BetaDist::new(a, b)
        .map_err(|e| Error::NumericalError(format!("beta sampler: {e}")))?;
    Ok(dist.sample(rng).clamp(1e-12, 1.0 - 1e-12))
}

/// Draw from N(mean, P^{-1}) given the precision matrix P.
pub fn sample_mvn_from_precision<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    precision: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let chol = nalgebra::Cholesky::new(precision.clone()).ok_or_else(|| {
        Error::NumericalError("risk-price precision not positive definite".into())
    })?;
    let d = mean.len();
    let z = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
    // P = L L'; solve L' x = z so that cov(x) = P^{-1}.
    let x = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::NumericalError("triangular solve failed".into()))?;
    Ok(mean + x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn inverse_gamma2_mean_matches_formula() {
        // mean = s / (nu - 2) for nu > 2.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (nu, s) = (8.0, 12.0);
        let n = 200_000;
        let mut acc = 0.0;
        for _ in 0..n {
            acc += sample_inverse_gamma2(nu, s, &mut rng).unwrap();
        }
        let mean = acc / n as f64;
        let expect = s / (nu - 2.0);
        assert!((mean - expect).abs() / expect < 0.02, "{mean} vs {expect}");
    }

    #[test]
    fn beta_conjugate_arithmetic() {
        // Prior Beta(3.2, 60) with 7 breaks out of 536 updates to
        // Beta(10.2, 589); check the posterior mean empirically.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (a, b) = (3.2 + 7.0, 60.0 + 536.0 - 7.0);
        assert_eq!(a, 10.2);
        assert_eq!(b, 589.0);
        let n = 200_000;
        let mut acc = 0.0;
        for _ in 0..n {
            acc += sample_beta(a, b, &mut rng).unwrap();
        }
        let mean = acc / n as f64;
        let expect = a / (a + b);
        assert!((mean - expect).abs() < 5e-4, "{mean} vs {expect}");
    }

    #[test]
    fn mvn_precision_sampling_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let prec = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0]);
        let mean = DVector::from_column_slice(&[1.0, -0.5]);
        let n = 100_000;
        let mut m = DVector::zeros(2);
        let mut cov = DMatrix::zeros(2, 2);
        let mut draws = Vec::with_capacity(n);
        for _ in 0..n {
            let x = sample_mvn_from_precision(&mean, &prec, &mut rng).unwrap();
            m += &x;
            draws.push(x);
        }
        m /= n as f64;
        for x in &draws {
            let d = x - &m;
            cov += &d * d.transpose();
        }
        cov /= (n - 1) as f64;
        let target = prec.try_inverse().unwrap();
        assert!((m[0] - 1.0).abs() < 0.01);
        assert!((m[1] + 0.5).abs() < 0.01);
        for a in 0..2 {
            for b in 0..2 {
                assert!(
                    (cov[(a, b)] - target[(a, b)]).abs() < 0.01,
                    "cov[{a},{b}] {} vs {}",
                    cov[(a, b)],
                    target[(a, b)]
                );
            }
        }
    }
}
