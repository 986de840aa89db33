//! Two-pass Fama-MacBeth estimation with a non-overlapping block residual
//! bootstrap, plus rolling-window re-estimation.
//!
//! The bootstrap follows the residual scheme for factor-pricing panels:
//! each replication regenerates the factor path from its fitted AR(1) with
//! time-block-resampled innovations, rebuilds returns from the first-pass
//! fit plus time-block-resampled residuals, reruns both passes, and then
//! re-estimates the second pass once more under a cross-sectional block
//! resample of the pricing errors. Portfolio blocks are drawn once per
//! replication and applied to every period, which preserves the firm
//! effect; time blocks are drawn jointly across portfolios, which preserves
//! cross-sectional correlation.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::calendar::Month;
use crate::error::{Error, Result};
use crate::regression::{self, ar1_fit_values};
use crate::series::{align_panel_factors, FactorSet, ReturnPanel};

/// Result of the two-pass estimation.
#[derive(Debug, Clone)]
pub struct FmbResult {
    /// Time-mean risk prices: constant first, then one per factor (percent).
    pub lambda: Vec<f64>,
    /// T x (K+1) per-period cross-sectional estimates.
    pub lambda_t: DMatrix<f64>,
    /// N x (K+1) first-pass loadings (constant first).
    pub betas: DMatrix<f64>,
    /// Mean adjusted R^2 across periods.
    pub r2_bar: f64,
    pub per_period_r2: Vec<f64>,
}

impl FmbResult {
    /// Classic Fama-MacBeth standard errors: sd(lambda_t) / sqrt(T).
    pub fn fm_stderr(&self) -> Vec<f64> {
        let t = self.lambda_t.nrows() as f64;
        (0..self.lambda_t.ncols())
            .map(|j| {
                let col: Vec<f64> = self.lambda_t.column(j).iter().copied().collect();
                crate::series::sample_std(&col) / t.sqrt()
            })
            .collect()
    }
}

/// Full-sample time-series OLS of each portfolio on a constant and the
/// factors; row i of the result holds portfolio i's loadings.
pub fn first_pass(panel: &ReturnPanel, factors: &FactorSet) -> Result<DMatrix<f64>> {
    let (panel, factors) = align_panel_factors(panel, factors)?;
    let t = panel.n_periods();
    let k = factors.n_factors();
    if t <= k + 2 {
        return Err(Error::InsufficientData(format!(
            "T={t} is too short for {k} factors"
        )));
    }
    let mut betas = DMatrix::zeros(panel.n_portfolios(), k + 1);
    for i in 0..panel.n_portfolios() {
        let y: Vec<f64> = panel.returns().row(i).iter().copied().collect();
        let fit = regression::ols(&y, factors.columns(), true)?;
        for j in 0..=k {
            betas[(i, j)] = fit.coefficients[j];
        }
    }
    Ok(betas)
}

/// Per-period cross-sectional OLS of returns on a constant and the factor
/// loadings (the non-constant columns of `betas`).
pub fn second_pass(panel: &ReturnPanel, betas: &DMatrix<f64>) -> Result<FmbResult> {
    let n = panel.n_portfolios();
    let k = betas.ncols() - 1;
    if betas.nrows() != n {
        return Err(Error::DimensionError(format!(
            "betas have {} rows but panel has {n} portfolios",
            betas.nrows()
        )));
    }
    if n <= k + 2 {
        return Err(Error::InsufficientData(format!(
            "N={n} is too small for {k} factors"
        )));
    }
    let loadings = betas.columns(1, k).into_owned();
    let t = panel.n_periods();
    let mut lambda_t = DMatrix::zeros(t, k + 1);
    let mut per_period_r2 = Vec::with_capacity(t);
    for s in 0..t {
        let y: Vec<f64> = panel.returns().column(s).iter().copied().collect();
        let fit = regression::ols(&y, &loadings, true)?;
        for j in 0..=k {
            lambda_t[(s, j)] = fit.coefficients[j];
        }
        per_period_r2.push(fit.adj_r2);
    }
    let lambda: Vec<f64> =
        (0..=k).map(|j| lambda_t.column(j).iter().sum::<f64>() / t as f64).collect();
    let r2_bar = per_period_r2.iter().sum::<f64>() / t as f64;
    Ok(FmbResult { lambda, lambda_t, betas: betas.clone(), r2_bar, per_period_r2 })
}

/// Both passes in one call.
pub fn fmb(panel: &ReturnPanel, factors: &FactorSet) -> Result<FmbResult> {
    let (panel, factors) = align_panel_factors(panel, factors)?;
    let betas = first_pass(&panel, &factors)?;
    second_pass(&panel, &betas)
}

/// Partition `0..len` into consecutive non-overlapping blocks of
/// `block_len` (last block truncated) and concatenate draws until `len`
/// entries are produced. Returns the index map.
pub fn block_indices<R: Rng + ?Sized>(len: usize, block_len: usize, rng: &mut R) -> Result<Vec<usize>> {
    if block_len == 0 || block_len > len {
        return Err(Error::InvalidBlock(format!(
            "block length {block_len} invalid for series of length {len}"
        )));
    }
    let n_blocks = len.div_ceil(block_len);
    let mut idx = Vec::with_capacity(len + block_len);
    while idx.len() < len {
        let b = rng.random_range(0..n_blocks);
        let lo = b * block_len;
        let hi = ((b + 1) * block_len).min(len);
        idx.extend(lo..hi);
    }
    idx.truncate(len);
    Ok(idx)
}

/// Resample a series by non-overlapping blocks.
pub fn block_resample<R: Rng + ?Sized>(
    series: &[f64],
    block_len: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let idx = block_indices(series.len(), block_len, rng)?;
    Ok(idx.into_iter().map(|i| series[i]).collect())
}

/// Resample the time axis of an N x T matrix by non-overlapping blocks,
/// jointly across rows.
pub fn block_resample_panel<R: Rng + ?Sized>(
    data: &DMatrix<f64>,
    block_len: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let idx = block_indices(data.ncols(), block_len, rng)?;
    let mut out = DMatrix::zeros(data.nrows(), data.ncols());
    for (t, &src) in idx.iter().enumerate() {
        out.column_mut(t).copy_from(&data.column(src));
    }
    Ok(out)
}

/// Bootstrap configuration. `block_ts` defaults to `round(T^(1/5))` and
/// `block_cs` to one portfolio quintile (N/5, at least 1).
#[derive(Debug, Clone)]
pub struct BootstrapConfig {
    pub n_sims: usize,
    pub seed: u64,
    pub block_ts: Option<usize>,
    pub block_cs: Option<usize>,
    /// Rayon pool size; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig { n_sims: 10_000, seed: 0, block_ts: None, block_cs: None, workers: None }
    }
}

/// Point estimates plus the bootstrap distribution of the risk prices and
/// of the cross-sectional fit.
#[derive(Debug, Clone)]
pub struct BootstrapResult {
    pub point: FmbResult,
    /// n_ok x (K+2): risk prices (constant first) then R^2-bar.
    pub draws: DMatrix<f64>,
    /// Percentile (2.5%, 97.5%) bounds per column of `draws`.
    pub ci95: Vec<(f64, f64)>,
    pub n_sims: usize,
    pub block_ts: usize,
    pub block_cs: usize,
    pub seed: u64,
    /// Replications dropped because a pass failed under resampling.
    pub failures: usize,
}

impl BootstrapResult {
    /// Significance stars from percentile intervals: `**` when the 95%
    /// interval excludes zero, `*` when the 90% interval does.
    pub fn stars(&self, col: usize) -> &'static str {
        let d = self.column(col);
        let (lo95, hi95) = percentile_interval(&d, 0.025);
        if lo95 > 0.0 || hi95 < 0.0 {
            return "**";
        }
        let (lo90, hi90) = percentile_interval(&d, 0.05);
        if lo90 > 0.0 || hi90 < 0.0 {
            return "*";
        }
        ""
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        self.draws.column(col).iter().copied().collect()
    }
}

fn percentile_interval(draws: &[f64], tail: f64) -> (f64, f64) {
    (crate::series::quantile(draws, tail), crate::series::quantile(draws, 1.0 - tail))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// RNG for replication `rep` of a run seeded with `seed`. Substreams are
/// keyed on the replication index, so results do not depend on how
/// replications are scheduled across workers.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(rep.wrapping_add(0x517c_c1b7_2722_0a95))))
}

struct BootstrapInputs {
    factor_cols: DMatrix<f64>,        // T x K
    rhos: Vec<f64>,                   // per factor AR(1) slope
    factor_resid: DMatrix<f64>,       // K x (T-1)
    alpha: DVector<f64>,              // first-pass intercepts
    loadings: DMatrix<f64>,           // N x K
    ts_resid: DMatrix<f64>,           // N x T first-pass residuals
    block_ts: usize,
    block_cs: usize,
}

fn one_replication(inp: &BootstrapInputs, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let t = inp.factor_cols.nrows();
    let k = inp.factor_cols.ncols();
    let n = inp.ts_resid.nrows();

    // (a) Regenerate each factor from its fitted AR(1) with jointly
    // block-resampled innovations.
    let resid_idx = block_indices(t - 1, inp.block_ts, rng)?;
    let mut f_star = DMatrix::zeros(t, k);
    for j in 0..k {
        f_star[(0, j)] = inp.factor_cols[(0, j)];
        for s in 1..t {
            let e = inp.factor_resid[(j, resid_idx[s - 1])];
            f_star[(s, j)] = inp.rhos[j] * f_star[(s - 1, j)] + e;
        }
    }

    // (b) Rebuild returns from the first-pass fit and resampled residuals.
    let eps_idx = block_indices(t, inp.block_ts, rng)?;
    let mut returns = DMatrix::zeros(n, t);
    for s in 0..t {
        let src = eps_idx[s];
        for i in 0..n {
            let mut fitted = inp.alpha[i];
            for j in 0..k {
                fitted += inp.loadings[(i, j)] * f_star[(s, j)];
            }
            returns[(i, s)] = fitted + inp.ts_resid[(i, src)];
        }
    }

    // (c) Rerun the first pass and the per-period cross sections.
    let mut betas = DMatrix::zeros(n, k + 1);
    for i in 0..n {
        let y: Vec<f64> = returns.row(i).iter().copied().collect();
        let fit = regression::ols(&y, &f_star, true)?;
        for j in 0..=k {
            betas[(i, j)] = fit.coefficients[j];
        }
    }
    let loadings_star = betas.columns(1, k).into_owned();
    let mut fitted_cs = DMatrix::zeros(n, t);
    let mut resid_cs = DMatrix::zeros(n, t);
    for s in 0..t {
        let y: Vec<f64> = returns.column(s).iter().copied().collect();
        let fit = regression::ols(&y, &loadings_star, true)?;
        for i in 0..n {
            fitted_cs[(i, s)] = fit.fitted[i];
            resid_cs[(i, s)] = fit.residuals[i];
        }
    }

    // Cross-sectional residual blocks, drawn once per replication and
    // applied to every period so each portfolio keeps its error history.
    let cs_idx = block_indices(n, inp.block_cs, rng)?;
    let mut lambda_sum = vec![0.0; k + 1];
    let mut r2_sum = 0.0;
    for s in 0..t {
        let y: Vec<f64> =
            (0..n).map(|i| fitted_cs[(i, s)] + resid_cs[(cs_idx[i], s)]).collect();
        let fit = regression::ols(&y, &loadings_star, true)?;
        for j in 0..=k {
            lambda_sum[j] += fit.coefficients[j];
        }
        r2_sum += fit.adj_r2;
    }
    let mut row = Vec::with_capacity(k + 2);
    for v in lambda_sum {
        row.push(v / t as f64);
    }
    row.push(r2_sum / t as f64);
    Ok(row)
}

/// Non-overlapping block residual bootstrap of the two-pass estimator.
pub fn fmb_bootstrap(
    panel: &ReturnPanel,
    factors: &FactorSet,
    cfg: &BootstrapConfig,
) -> Result<BootstrapResult> {
    let (panel, factors) = align_panel_factors(panel, factors)?;
    if cfg.n_sims == 0 {
        return Err(Error::InvalidInput("n_sims must be positive".into()));
    }
    let t = panel.n_periods();
    let k = factors.n_factors();
    let n = panel.n_portfolios();
    let block_ts = cfg.block_ts.unwrap_or(((t as f64).powf(0.2)).round() as usize).max(1);
    let block_cs = cfg.block_cs.unwrap_or((n / 5).max(1));

    let betas = first_pass(&panel, &factors)?;
    let point = second_pass(&panel, &betas)?;

    // First-pass residual matrix and factor AR(1) fits.
    let mut ts_resid = DMatrix::zeros(n, t);
    for i in 0..n {
        let y: Vec<f64> = panel.returns().row(i).iter().copied().collect();
        let fit = regression::ols(&y, factors.columns(), true)?;
        for s in 0..t {
            ts_resid[(i, s)] = fit.residuals[s];
        }
    }
    let mut rhos = Vec::with_capacity(k);
    let mut factor_resid = DMatrix::zeros(k, t - 1);
    for j in 0..k {
        let col: Vec<f64> = factors.columns().column(j).iter().copied().collect();
        let ar = ar1_fit_values(&col, false)?;
        rhos.push(ar.rho);
        for s in 0..t - 1 {
            factor_resid[(j, s)] = ar.residuals[s];
        }
    }
    let inputs = BootstrapInputs {
        factor_cols: factors.columns().clone(),
        rhos,
        factor_resid,
        alpha: betas.column(0).into_owned(),
        loadings: betas.columns(1, k).into_owned(),
        ts_resid,
        block_ts,
        block_cs,
    };

    let run = |n_threads: Option<usize>| -> Vec<Option<Vec<f64>>> {
        let body = || {
            (0..cfg.n_sims as u64)
                .into_par_iter()
                .map(|rep| {
                    let mut rng = replication_rng(cfg.seed, rep);
                    one_replication(&inputs, &mut rng).ok()
                })
                .collect()
        };
        match n_threads {
            Some(w) => rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .expect("thread pool")
                .install(body),
            None => body(),
        }
    };
    let rows = run(cfg.workers);

    let ok: Vec<&Vec<f64>> = rows.iter().flatten().collect();
    let failures = cfg.n_sims - ok.len();
    if ok.is_empty() {
        return Err(Error::NumericalError("every bootstrap replication failed".into()));
    }
    let draws = DMatrix::from_fn(ok.len(), k + 2, |r, c| ok[r][c]);
    let ci95 = (0..k + 2)
        .map(|c| {
            let col: Vec<f64> = draws.column(c).iter().copied().collect();
            percentile_interval(&col, 0.025)
        })
        .collect();
    Ok(BootstrapResult {
        point,
        draws,
        ci95,
        n_sims: cfg.n_sims,
        block_ts,
        block_cs,
        seed: cfg.seed,
        failures,
    })
}

/// One rolling-window estimate.
#[derive(Debug, Clone)]
pub struct RollingFmbStep {
    pub window_end: Month,
    pub lambda: Vec<f64>,
    pub fm_stderr: Vec<f64>,
    pub betas: DMatrix<f64>,
    pub r2_bar: f64,
}

/// Re-estimate both passes on each trailing window of `window` months.
pub fn rolling_fmb(
    panel: &ReturnPanel,
    factors: &FactorSet,
    window: usize,
) -> Result<Vec<RollingFmbStep>> {
    let (panel, factors) = align_panel_factors(panel, factors)?;
    let t = panel.n_periods();
    if window > t {
        return Err(Error::InsufficientData(format!(
            "window {window} exceeds sample length {t}"
        )));
    }
    let steps: Vec<Result<RollingFmbStep>> = (window..=t)
        .into_par_iter()
        .map(|end| {
            let p = panel.window(end - window, end - 1)?;
            let f = factors.window(end - window, end - 1)?;
            let betas = first_pass(&p, &f)?;
            let res = second_pass(&p, &betas)?;
            Ok(RollingFmbStep {
                window_end: p.date_at(p.n_periods() - 1),
                lambda: res.lambda.clone(),
                fm_stderr: res.fm_stderr(),
                betas,
                r2_bar: res.r2_bar,
            })
        })
        .collect();
    steps.into_iter().collect()
}

/// One row per portfolio for the average-return-versus-beta scatter.
#[derive(Debug, Clone)]
pub struct BetaScatterRow {
    pub portfolio: String,
    pub mean_return: f64,
    /// Loadings on the factors (constant column dropped).
    pub beta: Vec<f64>,
    pub fitted: f64,
}

#[derive(Debug, Clone)]
pub struct BetaScatter {
    pub rows: Vec<BetaScatterRow>,
    /// Cross-sectional OLS coefficients of mean returns on the betas.
    pub coefficients: Vec<f64>,
    pub r2: f64,
}

/// Cross-sectional OLS of mean returns on first-pass betas.
pub fn beta_scatter(panel: &ReturnPanel, betas: &DMatrix<f64>) -> Result<BetaScatter> {
    let n = panel.n_portfolios();
    if betas.nrows() != n {
        return Err(Error::DimensionError("betas and panel disagree on N".into()));
    }
    let k = betas.ncols() - 1;
    let mean_ret: Vec<f64> = (0..n)
        .map(|i| panel.returns().row(i).iter().sum::<f64>() / panel.n_periods() as f64)
        .collect();
    let loadings = betas.columns(1, k).into_owned();
    let fit = regression::ols(&mean_ret, &loadings, true)?;
    let rows = (0..n)
        .map(|i| BetaScatterRow {
            portfolio: panel.names()[i].clone(),
            mean_return: mean_ret[i],
            beta: loadings.row(i).iter().copied().collect(),
            fitted: fit.fitted[i],
        })
        .collect();
    Ok(BetaScatter { rows, coefficients: fit.coefficients.clone(), r2: fit.r2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand_distr::{Distribution, Normal};

    fn make_factors(start: Month, cols: DMatrix<f64>, names: &[&str]) -> FactorSet {
        FactorSet::new(start, names.iter().map(|s| s.to_string()).collect(), cols).unwrap()
    }

    fn ar1_factor(rng: &mut ChaCha8Rng, t: usize, rho: f64, sig: f64) -> Vec<f64> {
        let normal = Normal::new(0.0, sig).unwrap();
        let mut f = vec![0.0f64; t];
        for s in 1..t {
            f[s] = rho * f[s - 1] + normal.sample(rng);
        }
        f
    }

    #[test]
    fn first_pass_exact_loading() {
        let start = Month::new(2000, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = ar1_factor(&mut rng, 40, 0.3, 1.0);
        let cols = DMatrix::from_column_slice(40, 1, &f);
        let returns = DMatrix::from_fn(3, 40, |i, s| match i {
            0 => 2.0 * f[s],
            1 => 1.0 + 0.5 * f[s],
            _ => -f[s],
        });
        let panel = ReturnPanel::new(
            start,
            vec!["a".into(), "b".into(), "c".into()],
            returns,
        )
        .unwrap();
        let betas = first_pass(&panel, &make_factors(start, cols, &["f"])).unwrap();
        assert_relative_eq!(betas[(0, 0)], 0.0, epsilon = 1e-10);
        assert_relative_eq!(betas[(0, 1)], 2.0, epsilon = 1e-10);
        assert_relative_eq!(betas[(1, 0)], 1.0, epsilon = 1e-10);
        assert_relative_eq!(betas[(1, 1)], 0.5, epsilon = 1e-10);
        assert_relative_eq!(betas[(2, 1)], -1.0, epsilon = 1e-10);
    }

    #[test]
    fn first_pass_recovers_simulated_loadings() {
        let start = Month::new(2000, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let t = 600;
        let f = ar1_factor(&mut rng, t, 0.4, 2.0);
        let cols = DMatrix::from_column_slice(t, 1, &f);
        let n = 6;
        let returns = DMatrix::from_fn(n, t, |_, s| 1.0 + 1.5 * f[s] + normal.sample(&mut rng));
        let names = (0..n).map(|i| format!("p{i}")).collect();
        let panel = ReturnPanel::new(start, names, returns).unwrap();
        let factors = make_factors(start, cols, &["f"]);
        let betas = first_pass(&panel, &factors).unwrap();
        for i in 0..n {
            // 2-stderr band around truth; stderr roughly sig/(sqrt(T) sd(F)).
            assert!((betas[(i, 1)] - 1.5).abs() < 0.1, "beta {} off", betas[(i, 1)]);
            assert!((betas[(i, 0)] - 1.0).abs() < 0.2);
        }
    }

    #[test]
    fn second_pass_constant_only_grand_mean() {
        let start = Month::new(2000, 1);
        let returns = DMatrix::from_fn(4, 6, |i, s| (i + s) as f64);
        let names = (0..4).map(|i| format!("p{i}")).collect();
        let panel = ReturnPanel::new(start, names, returns.clone()).unwrap();
        let betas = DMatrix::from_element(4, 1, 1.0);
        let res = second_pass(&panel, &betas).unwrap();
        let grand = returns.iter().sum::<f64>() / 24.0;
        assert_relative_eq!(res.lambda[0], grand, epsilon = 1e-12);
    }

    #[test]
    fn second_pass_exact_pricing_single_period_structure() {
        // r_i = 1 + 2 beta_i in every period: lambda = (1, 2), R^2 = 1.
        let start = Month::new(2000, 1);
        let beta_vals = [0.5, 1.0, 1.5, 2.0, 2.5];
        let returns = DMatrix::from_fn(5, 3, |i, _| 1.0 + 2.0 * beta_vals[i]);
        let names = (0..5).map(|i| format!("p{i}")).collect();
        let panel = ReturnPanel::new(start, names, returns).unwrap();
        let mut betas = DMatrix::zeros(5, 2);
        for i in 0..5 {
            betas[(i, 0)] = 0.3; // irrelevant intercept column
            betas[(i, 1)] = beta_vals[i];
        }
        let res = second_pass(&panel, &betas).unwrap();
        assert_relative_eq!(res.lambda[0], 1.0, epsilon = 1e-10);
        assert_relative_eq!(res.lambda[1], 2.0, epsilon = 1e-10);
        assert!(res.per_period_r2.iter().all(|r| (r - 1.0).abs() < 1e-10));
        // Invariant: lambda equals the time mean of lambda_t.
        for j in 0..2 {
            let m = res.lambda_t.column(j).iter().sum::<f64>() / 3.0;
            assert_relative_eq!(res.lambda[j], m, epsilon = 1e-12);
        }
    }

    #[test]
    fn block_indices_deterministic_trace() {
        // Length 8, block 4, draws (1, 0) -> (x5..x8, x1..x4) in 1-based terms.
        struct Scripted(Vec<u64>, usize);
        impl rand::RngCore for Scripted {
            fn next_u32(&mut self) -> u32 {
                self.next_u64() as u32
            }
            fn next_u64(&mut self) -> u64 {
                let v = self.0[self.1 % self.0.len()];
                self.1 += 1;
                v
            }
            fn fill_bytes(&mut self, dest: &mut [u8]) {
                for b in dest {
                    *b = 0;
                }
            }
        }
        // With 2 blocks, random_range(0..2) reduces a u64; parity of the
        // scripted values is chosen to yield block 1 then block 0.
        let mut rng = Scripted(vec![u64::MAX, 0], 0);
        let idx = block_indices(8, 4, &mut rng).unwrap();
        assert_eq!(idx, vec![4, 5, 6, 7, 0, 1, 2, 3]);
        let data: Vec<f64> = (1..=8).map(|v| v as f64).collect();
        let mut rng = Scripted(vec![u64::MAX, 0], 0);
        let out = block_resample(&data, 4, &mut rng).unwrap();
        assert_eq!(out, vec![5.0, 6.0, 7.0, 8.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn block_len_equal_length_is_identity() {
        let data: Vec<f64> = (0..10).map(|v| v as f64).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = block_resample(&data, 10, &mut rng).unwrap();
        assert_eq!(out, data);
    }

    #[test]
    fn block_len_one_preserves_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let normal = Normal::new(1.0, 2.0).unwrap();
        let data: Vec<f64> = (0..200).map(|_| normal.sample(&mut rng)).collect();
        let sample_mean = data.iter().sum::<f64>() / data.len() as f64;
        let n_resample = 10_000;
        let mut acc = 0.0;
        for _ in 0..n_resample {
            let r = block_resample(&data, 1, &mut rng).unwrap();
            acc += r.iter().sum::<f64>() / r.len() as f64;
        }
        let mean_of_means = acc / n_resample as f64;
        let sd = crate::series::sample_std(&data);
        let se = sd / (data.len() as f64).sqrt() / (n_resample as f64).sqrt();
        assert!(
            (mean_of_means - sample_mean).abs() < 3.0 * se * (data.len() as f64).sqrt().sqrt().max(3.0),
            "law of large numbers violated: {mean_of_means} vs {sample_mean}"
        );
    }

    #[test]
    fn block_resample_rejects_oversized_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            block_resample(&[1.0, 2.0], 3, &mut rng),
            Err(Error::InvalidBlock(_))
        ));
    }

    #[test]
    fn block_resample_preserves_ar1_autocorrelation() {
        // Blocks of 4 keep lag 1..3 autocorrelation near rho^k.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let rho = 0.6;
        let t = 4000;
        let data = {
            let normal = Normal::new(0.0, 1.0).unwrap();
            let mut v = vec![0.0f64; t];
            for s in 1..t {
                v[s] = rho * v[s - 1] + normal.sample(&mut rng);
            }
            v
        };
        let resampled = block_resample(&data, 4, &mut rng).unwrap();
        let acf = |v: &[f64], k: usize| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let var: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
            let cov: f64 = (0..v.len() - k).map(|i| (v[i] - m) * (v[i + k] - m)).sum();
            cov / var
        };
        for k in 1..=3usize {
            // Within a block autocorrelation survives; across boundaries it
            // dies, shrinking lag-k by about (block - k) / block.
            let expect = rho.powi(k as i32) * (4.0 - k as f64) / 4.0;
            let got = acf(&resampled, k);
            assert!(
                (got - expect).abs() < 0.08,
                "lag {k}: got {got}, expected about {expect}"
            );
        }
    }

    fn exact_panel(start: Month, t: usize) -> (ReturnPanel, FactorSet) {
        // Exactly priced panel with an exact AR(1) factor: every bootstrap
        // draw must reproduce the point estimate.
        let f: Vec<f64> = (0..t).map(|s| 2.0 * 0.8f64.powi(s as i32)).collect();
        let beta_vals = [0.5, 0.8, 1.1, 1.4, 1.7, 2.0];
        let returns = DMatrix::from_fn(6, t, |i, s| 1.0 + beta_vals[i] * f[s]);
        let names = (0..6).map(|i| format!("p{i}")).collect();
        let panel = ReturnPanel::new(start, names, returns).unwrap();
        let factors = make_factors(start, DMatrix::from_column_slice(t, 1, &f), &["f"]);
        (panel, factors)
    }

    #[test]
    fn bootstrap_zero_noise_degenerates() {
        let start = Month::new(2000, 1);
        let (panel, factors) = exact_panel(start, 48);
        let cfg = BootstrapConfig { n_sims: 50, seed: 3, ..Default::default() };
        let res = fmb_bootstrap(&panel, &factors, &cfg).unwrap();
        assert_eq!(res.failures, 0);
        for c in 0..2 {
            let (lo, hi) = res.ci95[c];
            assert_relative_eq!(lo, hi, epsilon = 1e-7);
            assert_relative_eq!(lo, res.point.lambda[c], epsilon = 1e-7);
        }
    }

    #[test]
    fn bootstrap_seed_determinism() {
        let start = Month::new(2000, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let t = 90;
        let f = ar1_factor(&mut rng, t, 0.5, 1.5);
        let beta_vals = [0.4, 0.9, 1.3, 1.8, 2.2];
        let returns =
            DMatrix::from_fn(5, t, |i, s| 1.0 + beta_vals[i] * f[s] + normal.sample(&mut rng));
        let names = (0..5).map(|i| format!("p{i}")).collect();
        let panel = ReturnPanel::new(start, names, returns).unwrap();
        let factors = make_factors(start, DMatrix::from_column_slice(t, 1, &f), &["f"]);
        let cfg = |w| BootstrapConfig { n_sims: 64, seed: 11, workers: w, ..Default::default() };
        let a = fmb_bootstrap(&panel, &factors, &cfg(Some(1))).unwrap();
        let b = fmb_bootstrap(&panel, &factors, &cfg(Some(4))).unwrap();
        assert_eq!(a.draws, b.draws, "draws differ across worker counts");
    }

    #[test]
    fn constant_beta_time_mean_identity() {
        // With time-constant betas, the time mean of per-period
        // cross-sectional estimates equals the cross-sectional OLS of
        // time-mean returns on those betas.
        let start = Month::new(2000, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let (n, t) = (8, 50);
        let returns = DMatrix::from_fn(n, t, |i, _| {
            0.5 + 0.3 * i as f64 + normal.sample(&mut rng)
        });
        let names = (0..n).map(|i| format!("p{i}")).collect();
        let panel = ReturnPanel::new(start, names, returns.clone()).unwrap();
        let mut betas = DMatrix::zeros(n, 2);
        for i in 0..n {
            betas[(i, 0)] = 1.0;
            betas[(i, 1)] = 0.2 + 0.15 * i as f64;
        }
        let res = second_pass(&panel, &betas).unwrap();
        let mean_ret: Vec<f64> =
            (0..n).map(|i| returns.row(i).iter().sum::<f64>() / t as f64).collect();
        let loadings = betas.columns(1, 1).into_owned();
        let cs = regression::ols(&mean_ret, &loadings, true).unwrap();
        for j in 0..2 {
            assert_relative_eq!(res.lambda[j], cs.coefficients[j], epsilon = 1e-10);
        }
    }

    #[test]
    fn second_pass_monte_carlo_coverage() {
        // lambda = (1.2, 2.4) with i.i.d. pricing errors: the time-mean
        // estimate lands within 2 Fama-MacBeth stderrs of truth in at
        // least 90% of seeds. Known betas isolate the second pass; with
        // estimated betas the uncorrected FM stderrs omit the common
        // beta-error term (full two-pass inference goes through the
        // bootstrap, whose percentile intervals absorb it).
        let start = Month::new(2000, 1);
        let mut hits0 = 0;
        let mut hits1 = 0;
        let n_seeds = 200;
        for seed in 0..n_seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(4000 + seed);
            let normal = Normal::new(0.0, 1.0).unwrap();
            let (n, t) = (25, 536);
            let betas_true: Vec<f64> =
                (0..n).map(|i| 0.2 + 1.6 * i as f64 / (n - 1) as f64).collect();
            let returns = DMatrix::from_fn(n, t, |i, _| {
                1.2 + 2.4 * betas_true[i] + 2.0 * normal.sample(&mut rng)
            });
            let names = (0..n).map(|i| format!("p{i}")).collect();
            let panel = ReturnPanel::new(start, names, returns).unwrap();
            let mut betas = DMatrix::zeros(n, 2);
            for i in 0..n {
                betas[(i, 0)] = 1.0;
                betas[(i, 1)] = betas_true[i];
            }
            let res = second_pass(&panel, &betas).unwrap();
            let se = res.fm_stderr();
            if (res.lambda[0] - 1.2).abs() <= 2.0 * se[0] {
                hits0 += 1;
            }
            if (res.lambda[1] - 2.4).abs() <= 2.0 * se[1] {
                hits1 += 1;
            }
        }
        assert!(hits0 * 10 >= n_seeds * 9, "lambda0 coverage {hits0}/{n_seeds}");
        assert!(hits1 * 10 >= n_seeds * 9, "lambda_F coverage {hits1}/{n_seeds}");
    }

    #[test]
    fn rolling_stationary_dgp_fluctuates_around_full_sample() {
        let start = Month::new(2000, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let (n, t) = (10, 360);
        let f = ar1_factor(&mut rng, t, 0.4, 1.5);
        let betas_true: Vec<f64> = (0..n).map(|i| 0.5 + 0.1 * i as f64).collect();
        let returns = DMatrix::from_fn(n, t, |i, s| {
            1.0 + 2.0 * betas_true[i] + betas_true[i] * f[s] + 2.0 * normal.sample(&mut rng)
        });
        let names = (0..n).map(|i| format!("p{i}")).collect();
        let panel = ReturnPanel::new(start, names, returns).unwrap();
        let factors = make_factors(start, DMatrix::from_column_slice(t, 1, &f), &["f"]);
        let full = fmb(&panel, &factors).unwrap();
        let steps = rolling_fmb(&panel, &factors, 120).unwrap();
        let mean_rolling: f64 =
            steps.iter().map(|s| s.lambda[1]).sum::<f64>() / steps.len() as f64;
        let se = full.fm_stderr()[1];
        assert!(
            (mean_rolling - full.lambda[1]).abs() < 2.0 * se,
            "rolling mean {mean_rolling} vs full {} (se {se})",
            full.lambda[1]
        );
    }

    #[test]
    fn rolling_betas_transition_after_break() {
        // Loadings double at mid-sample; trailing-window betas should move
        // from the old regime to the new one within one window length.
        let start = Month::new(2000, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let (n, t, window) = (6, 240, 60);
        let f = ar1_factor(&mut rng, t, 0.3, 1.5);
        let returns = DMatrix::from_fn(n, t, |_, s| {
            let b = if s < t / 2 { 1.0 } else { 2.0 };
            1.0 + b * f[s] + 0.5 * normal.sample(&mut rng)
        });
        let names = (0..n).map(|i| format!("p{i}")).collect();
        let panel = ReturnPanel::new(start, names, returns).unwrap();
        let factors = make_factors(start, DMatrix::from_column_slice(t, 1, &f), &["f"]);
        let steps = rolling_fmb(&panel, &factors, window).unwrap();
        // Windows fully inside regime 1, and fully inside regime 2 one
        // window after the break.
        // steps[i] covers months [i, i + window).
        let early = &steps[10];
        let late = &steps[t / 2 + 20];
        let mean_beta = |s: &RollingFmbStep| {
            s.betas.column(1).iter().sum::<f64>() / n as f64
        };
        assert!((mean_beta(early) - 1.0).abs() < 0.15, "early beta {}", mean_beta(early));
        assert!((mean_beta(late) - 2.0).abs() < 0.15, "late beta {}", mean_beta(late));
    }

    #[test]
    fn rolling_window_equal_to_t_is_full_sample() {
        let start = Month::new(2000, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let t = 60;
        let f = ar1_factor(&mut rng, t, 0.4, 1.0);
        let beta_vals = [0.4, 0.9, 1.3, 1.8, 2.2];
        let returns =
            DMatrix::from_fn(5, t, |i, s| 1.0 + beta_vals[i] * f[s] + normal.sample(&mut rng));
        let names = (0..5).map(|i| format!("p{i}")).collect();
        let panel = ReturnPanel::new(start, names, returns).unwrap();
        let factors = make_factors(start, DMatrix::from_column_slice(t, 1, &f), &["f"]);
        let steps = rolling_fmb(&panel, &factors, t).unwrap();
        assert_eq!(steps.len(), 1);
        let full = fmb(&panel, &factors).unwrap();
        for j in 0..2 {
            assert_relative_eq!(steps[0].lambda[j], full.lambda[j], epsilon = 1e-12);
        }
    }

    #[test]
    fn scatter_perfectly_priced_panel() {
        let start = Month::new(2000, 1);
        let (panel, factors) = exact_panel(start, 30);
        let betas = first_pass(&panel, &factors).unwrap();
        let sc = beta_scatter(&panel, &betas).unwrap();
        assert_relative_eq!(sc.r2, 1.0, epsilon = 1e-9);
        for row in &sc.rows {
            assert_relative_eq!(row.fitted, row.mean_return, epsilon = 1e-9);
        }
    }

    #[test]
    fn scatter_three_portfolio_hand_oracle() {
        // Mean returns (1, 2, 4) on betas (0, 1, 3): slope and intercept by
        // normal equations: slope = Sxy/Sxx = 14/14*... computed by hand.
        let start = Month::new(2000, 1);
        let returns = DMatrix::from_fn(3, 4, |i, _| [1.0, 2.0, 4.0][i]);
        let names = vec!["a".into(), "b".into(), "c".into()];
        let panel = ReturnPanel::new(start, names, returns).unwrap();
        let mut betas = DMatrix::zeros(3, 2);
        betas[(0, 1)] = 0.0;
        betas[(1, 1)] = 1.0;
        betas[(2, 1)] = 3.0;
        let sc = beta_scatter(&panel, &betas).unwrap();
        // x mean 4/3, y mean 7/3; Sxx = 0+... hand: Sxx = (16/9)+(1/9)+(25/9)=42/9,
        // Sxy = (4/3)(4/3)+( -1/3)(-1/3)+(5/3)(5/3) = 42/9 -> slope 1, intercept 1.
        assert_relative_eq!(sc.coefficients[1], 1.0, epsilon = 1e-12);
        assert_relative_eq!(sc.coefficients[0], 1.0, epsilon = 1e-12);
    }
}
