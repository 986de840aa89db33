//! Ordinary least squares and AR(1) estimation.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// A fitted least-squares regression.
///
/// Standard errors come from the classical homoskedastic covariance
/// `s^2 (X'X)^{-1}`. With an intercept, `r2` uses the centered total sum of
/// squares; without one it uses the uncentered version, so `0 <= r2 <= 1`
/// either way.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub tstats: Vec<f64>,
    pub pvalues: Vec<f64>,
    pub r2: f64,
    pub adj_r2: f64,
    pub residuals: Vec<f64>,
    pub fitted: Vec<f64>,
    pub df_resid: usize,
}

/// OLS of `y` on the columns of `x`, optionally prepending an intercept.
/// The intercept, when present, is coefficient 0.
pub fn ols(y: &[f64], x: &DMatrix<f64>, intercept: bool) -> Result<OlsFit> {
    let n = y.len();
    if x.nrows() != n {
        return Err(Error::DimensionError(format!(
            "y has {} rows but X has {}",
            n,
            x.nrows()
        )));
    }
    let k = x.ncols() + usize::from(intercept);
    if n < k + 1 {
        return Err(Error::DimensionError(format!(
            "need at least {} observations for {} coefficients",
            k + 1,
            k
        )));
    }
    let design = if intercept {
        let mut d = DMatrix::zeros(n, k);
        d.column_mut(0).fill(1.0);
        d.view_mut((0, 1), (n, x.ncols())).copy_from(x);
        d
    } else {
        x.clone()
    };
    ols_design(y, &design, intercept)
}

/// OLS with a caller-built design matrix (no implicit intercept column).
pub fn ols_design(y: &[f64], design: &DMatrix<f64>, centered_tss: bool) -> Result<OlsFit> {
    let n = y.len();
    let k = design.ncols();
    if design.nrows() != n {
        return Err(Error::DimensionError("design rows != len(y)".into()));
    }
    if n <= k {
        return Err(Error::DimensionError(format!(
            "{} observations cannot identify {} coefficients",
            n, k
        )));
    }
    let yv = DVector::from_column_slice(y);
    let xtx = design.transpose() * design;
    let chol = cholesky_checked(&xtx, design)?;
    let xty = design.transpose() * &yv;
    let beta = chol.solve(&xty);
    let fitted = design * &beta;
    let resid = &yv - &fitted;

    let df = n - k;
    let ssr: f64 = resid.iter().map(|e| e * e).sum();
    let s2 = ssr / df as f64;
    let cov = chol.inverse() * s2;

    let tss: f64 = if centered_tss {
        let ym = yv.iter().sum::<f64>() / n as f64;
        yv.iter().map(|v| (v - ym) * (v - ym)).sum()
    } else {
        yv.iter().map(|v| v * v).sum()
    };
    let r2 = if tss > 0.0 { 1.0 - ssr / tss } else { 1.0 };
    let adj_r2 = if tss > 0.0 {
        1.0 - (1.0 - r2) * (n as f64 - 1.0) / df as f64
    } else {
        1.0
    };

    let tdist = (df >= 1).then(|| StudentsT::new(0.0, 1.0, df as f64).ok()).flatten();
    let mut stderrs = Vec::with_capacity(k);
    let mut tstats = Vec::with_capacity(k);
    let mut pvalues = Vec::with_capacity(k);
    for j in 0..k {
        let se = cov[(j, j)].max(0.0).sqrt();
        stderrs.push(se);
        let t = if se > 0.0 { beta[j] / se } else { f64::NAN };
        tstats.push(t);
        let p = match (&tdist, t.is_finite()) {
            (Some(d), true) => 2.0 * (1.0 - d.cdf(t.abs())),
            _ => f64::NAN,
        };
        pvalues.push(p);
    }

    Ok(OlsFit {
        coefficients: beta.iter().copied().collect(),
        stderrs,
        tstats,
        pvalues,
        r2,
        adj_r2,
        residuals: resid.iter().copied().collect(),
        fitted: fitted.iter().copied().collect(),
        df_resid: df,
    })
}

fn cholesky_checked(
    xtx: &DMatrix<f64>,
    design: &DMatrix<f64>,
) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    // Relative pivot floor catches numerically rank-deficient designs that
    // Cholesky would happily "factor" into garbage.
    let scale = xtx.diagonal().iter().fold(0.0f64, |a, b| a.max(b.abs()));
    match nalgebra::Cholesky::new(xtx.clone()) {
        Some(chol) => {
            let min_piv = chol.l().diagonal().iter().fold(f64::INFINITY, |a, b| a.min(*b));
            if scale > 0.0 && min_piv * min_piv < 1e-12 * scale {
                Err(Error::SingularDesign(format!(
                    "{}x{} design is rank deficient",
                    design.nrows(),
                    design.ncols()
                )))
            } else {
                Ok(chol)
            }
        }
        None => Err(Error::SingularDesign(format!(
            "{}x{} design is rank deficient",
            design.nrows(),
            design.ncols()
        ))),
    }
}

/// AR(1) fit of a series.
#[derive(Debug, Clone, PartialEq)]
pub struct Ar1Fit {
    pub rho: f64,
    pub rho_stderr: f64,
    pub intercept: Option<f64>,
    /// Unbiased residual variance.
    pub resid_variance: f64,
    pub residuals: Vec<f64>,
}

/// Regress `s[t+1]` on `s[t]`. The constant is excluded by default; pass
/// `intercept = true` to include one.
pub fn ar1_fit(s: &TimeSeries, intercept: bool) -> Result<Ar1Fit> {
    ar1_fit_values(s.values(), intercept)
}

pub fn ar1_fit_values(v: &[f64], intercept: bool) -> Result<Ar1Fit> {
    let n = v.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "AR(1) needs at least 3 observations, got {n}"
        )));
    }
    let y = &v[1..];
    let x = DMatrix::from_column_slice(n - 1, 1, &v[..n - 1]);
    let fit = ols(y, &x, intercept)?;
    let slope_idx = usize::from(intercept);
    Ok(Ar1Fit {
        rho: fit.coefficients[slope_idx],
        rho_stderr: fit.stderrs[slope_idx],
        intercept: intercept.then(|| fit.coefficients[0]),
        resid_variance: fit.residuals.iter().map(|e| e * e).sum::<f64>() / fit.df_resid as f64,
        residuals: fit.residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::{Frequency, Month, Units};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn exact_line_recovers_slope() {
        let x: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let xm = DMatrix::from_column_slice(10, 1, &x);
        let fit = ols(&y, &xm, true).unwrap();
        assert_relative_eq!(fit.coefficients[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(fit.coefficients[1], 2.0, epsilon = 1e-12);
        assert_relative_eq!(fit.r2, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn four_point_normal_equations() {
        // Hand oracle: Sxx = 5, Sxy = 4.5 -> slope 0.9, intercept 0.
        let y = [1.0, 2.0, 2.0, 4.0];
        let x = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let fit = ols(&y, &x, true).unwrap();
        assert_relative_eq!(fit.coefficients[1], 0.9, epsilon = 1e-12);
        assert_relative_eq!(fit.coefficients[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rank_deficient_design_is_rejected() {
        let mut x = DMatrix::zeros(6, 2);
        for i in 0..6 {
            x[(i, 0)] = i as f64;
            x[(i, 1)] = 2.0 * i as f64; // exact collinearity
        }
        let y = vec![0.0; 6];
        assert!(matches!(ols(&y, &x, true), Err(Error::SingularDesign(_))));
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        assert!(matches!(ols(&[1.0, 2.0], &x, true), Err(Error::DimensionError(_))));
    }

    #[test]
    fn residuals_orthogonal_to_design() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let n = 120;
        let x = DMatrix::from_fn(n, 3, |_, _| normal.sample(&mut rng));
        let y: Vec<f64> = (0..n)
            .map(|i| 0.5 + x[(i, 0)] - 2.0 * x[(i, 2)] + normal.sample(&mut rng))
            .collect();
        let fit = ols(&y, &x, true).unwrap();
        let e = DVector::from_column_slice(&fit.residuals);
        let scale = y.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
        for j in 0..3 {
            let dot: f64 = x.column(j).dot(&e);
            assert!(dot.abs() < 1e-8 * scale.max(1.0) * n as f64);
        }
        assert!(e.iter().sum::<f64>().abs() < 1e-8 * scale.max(1.0) * n as f64);
    }

    #[test]
    fn ar1_deterministic_decay() {
        let vals: Vec<f64> = (0..20).map(|t| 0.5f64.powi(t)).collect();
        let s = TimeSeries::new(Month::new(2000, 1), Frequency::Monthly, Units::Ratio, vals)
            .unwrap();
        let fit = ar1_fit(&s, false).unwrap();
        assert_relative_eq!(fit.rho, 0.5, epsilon = 1e-12);
        assert!(fit.resid_variance < 1e-20);
        assert_eq!(fit.residuals.len(), 19);
    }

    #[test]
    fn ar1_scaling_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut v = vec![0.0f64];
        for _ in 0..80 {
            let prev = *v.last().unwrap();
            v.push(0.7 * prev + normal.sample(&mut rng));
        }
        let a = ar1_fit_values(&v, false).unwrap();
        let scaled: Vec<f64> = v.iter().map(|x| -3.25 * x).collect();
        let b = ar1_fit_values(&scaled, false).unwrap();
        assert_relative_eq!(a.rho, b.rho, epsilon = 1e-12);
    }

    #[test]
    fn ar1_constant_series_with_intercept_is_singular() {
        let s = TimeSeries::new(
            Month::new(2000, 1),
            Frequency::Monthly,
            Units::Ratio,
            vec![2.0; 10],
        )
        .unwrap();
        assert!(matches!(ar1_fit(&s, true), Err(Error::SingularDesign(_))));
    }
}
