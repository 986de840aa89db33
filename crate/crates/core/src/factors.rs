//! Construction of the capital-share factor family and the mimicking
//! portfolio projection.

use nalgebra::DMatrix;

use crate::calendar::{Frequency, Units};
use crate::error::{Error, Result};
use crate::regression::{self, OlsFit};
use crate::series::TimeSeries;

/// Capital share from labour share: `KS_t = 1 - LS_t`.
pub fn capital_share(labour_share: &TimeSeries) -> Result<TimeSeries> {
    for (i, v) in labour_share.values().iter().enumerate() {
        if !(0.0..=1.0).contains(v) {
            return Err(Error::InvalidInput(format!(
                "labour share must lie in [0, 1], got {v} at {}",
                labour_share.date_at(i)
            )));
        }
    }
    labour_share.with_values(
        Units::Ratio,
        labour_share.values().iter().map(|v| 1.0 - v).collect(),
    )
}

/// Capital-share growth over `horizon` periods.
///
/// Monthly series return `KS_{t+h} / KS_t - 1`; quarterly series return the
/// raw ratio `KS_{t+h} / KS_t`. The output is dated at `t` and shortens by
/// `horizon` observations.
pub fn ks_growth_factor(ks: &TimeSeries, horizon: usize) -> Result<TimeSeries> {
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    if ks.len() <= horizon {
        return Err(Error::InsufficientData(format!(
            "series of length {} cannot support horizon {horizon}",
            ks.len()
        )));
    }
    for (i, v) in ks.values().iter().enumerate() {
        if *v <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "capital share must be positive, got {v} at {}",
                ks.date_at(i)
            )));
        }
    }
    let subtract_one = match ks.frequency() {
        Frequency::Monthly => 1.0,
        Frequency::Quarterly => 0.0,
    };
    let t = ks.len() - horizon;
    let vals: Vec<f64> = (0..t)
        .map(|i| ks.values()[i + horizon] / ks.values()[i] - subtract_one)
        .collect();
    TimeSeries::new(ks.start(), ks.frequency(), Units::Ratio, vals)
}

/// Options for the variability factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VariabilityOptions {
    /// Drop the innovation-variance term, leaving `(rho F_t)^2` only.
    /// Off by default; exposed for sensitivity checks.
    pub omit_innovation_variance: bool,
}

/// Capital-share variability: the one-step conditional second moment of an
/// AR(1) fitted without intercept, `E(F^2)_t = (rho F_t)^2 + sigma_e^2`.
pub fn ks_variability(f_ks: &TimeSeries) -> Result<TimeSeries> {
    ks_variability_with(f_ks, VariabilityOptions::default())
}

pub fn ks_variability_with(f_ks: &TimeSeries, opts: VariabilityOptions) -> Result<TimeSeries> {
    if f_ks.values().iter().all(|v| *v == 0.0) {
        // Degenerate factor: no dynamics to fit, second moment zero.
        return f_ks.with_values(f_ks.units(), vec![0.0; f_ks.len()]);
    }
    let ar = regression::ar1_fit(f_ks, false)?;
    let base = if opts.omit_innovation_variance { 0.0 } else { ar.resid_variance };
    let vals: Vec<f64> =
        f_ks.values().iter().map(|f| (ar.rho * f) * (ar.rho * f) + base).collect();
    f_ks.with_values(f_ks.units(), vals)
}

/// A factor-mimicking portfolio: project the factor on base returns and
/// lagged instruments, then keep the constant and the base-return part.
#[derive(Debug, Clone)]
pub struct MimickingPortfolio {
    pub fmp: TimeSeries,
    pub fit: OlsFit,
    pub n_base: usize,
}

/// `factor_t = a + b' x_t + c' z_{t-1} + eps`; the mimicking portfolio is
/// `FMP_t = a_hat + b_hat' x_t`. `base_returns` is T x B and `instruments`,
/// when given, is T x Z already lagged by one period.
pub fn mimicking_portfolio(
    factor: &TimeSeries,
    base_returns: &DMatrix<f64>,
    instruments: Option<&DMatrix<f64>>,
) -> Result<MimickingPortfolio> {
    let t = factor.len();
    if base_returns.nrows() != t {
        return Err(Error::DimensionError(format!(
            "factor has {t} rows but base returns have {}",
            base_returns.nrows()
        )));
    }
    if let Some(z) = instruments {
        if z.nrows() != t {
            return Err(Error::DimensionError(format!(
                "factor has {t} rows but instruments have {}",
                z.nrows()
            )));
        }
    }
    let n_base = base_returns.ncols();
    let n_inst = instruments.map_or(0, |z| z.ncols());
    let mut design = DMatrix::zeros(t, n_base + n_inst);
    design.view_mut((0, 0), (t, n_base)).copy_from(base_returns);
    if let Some(z) = instruments {
        design.view_mut((0, n_base), (t, n_inst)).copy_from(z);
    }
    let fit = regression::ols(factor.values(), &design, true)?;
    let fmp_vals: Vec<f64> = (0..t)
        .map(|i| {
            let mut v = fit.coefficients[0];
            for j in 0..n_base {
                v += fit.coefficients[1 + j] * base_returns[(i, j)];
            }
            v
        })
        .collect();
    let fmp = factor.with_values(factor.units(), fmp_vals)?;
    Ok(MimickingPortfolio { fmp, fit, n_base })
}
