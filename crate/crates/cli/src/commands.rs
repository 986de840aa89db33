//! Subcommand implementations. Every command loads its inputs, runs the
//! corresponding library routines, and writes CSV tables plus a run
//! manifest into the output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use capshare::btvbsv::{self, GibbsConfig};
use capshare::calendar::{DateRange, Frequency, Units};
use capshare::disagg::{self, ChowLinOptions, GridSpec, Objective, SelectedMonth};
use capshare::error::{Error, Result};
use capshare::factors::{self, VariabilityOptions};
use capshare::fmb::{self, BootstrapConfig};
use capshare::io::{self, Table};
use capshare::lrr::{self, LrrParams, SimConfig};
use capshare::mgarch;
use capshare::series::{FactorSet, ReturnPanel, TimeSeries};
use capshare::{descriptive_stats, ols};
use nalgebra::DMatrix;

use crate::config::ConfigFile;

/// Everything a finished command hands back for the manifest.
pub struct RunOutput {
    pub params: BTreeMap<String, String>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl RunOutput {
    fn new() -> Self {
        RunOutput { params: BTreeMap::new(), inputs: Vec::new(), outputs: Vec::new() }
    }

    fn param(&mut self, key: &str, value: impl ToString) {
        self.params.insert(key.to_string(), value.to_string());
    }

    fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    fn write(&mut self, out_dir: &Path, name: &str, table: &Table) -> Result<()> {
        let path = out_dir.join(name);
        table.write_csv(&path)?;
        self.outputs.push(path);
        Ok(())
    }
}

/// Load a series from either a plain `DATE,VALUE` file or a table export.
fn load_series_any(path: &Path, units: Units) -> Result<TimeSeries> {
    let text = std::fs::read_to_string(path)?;
    if text.starts_with("# table:") {
        io::table_to_series(&Table::from_csv(&text)?, units)
    } else {
        io::parse_series(&text, units)
    }
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "series".into())
}

fn load_factor_set(paths: &[PathBuf]) -> Result<FactorSet> {
    let series: Vec<(String, TimeSeries)> = paths
        .iter()
        .map(|p| Ok((file_stem(p), load_series_any(p, Units::Percent)?)))
        .collect::<Result<_>>()?;
    let named: Vec<(&str, &TimeSeries)> =
        series.iter().map(|(n, s)| (n.as_str(), s)).collect();
    FactorSet::from_series(&named)
}

fn full_span(s: &TimeSeries) -> DateRange {
    DateRange::new(s.start(), s.end())
}

// ---------------------------------------------------------------------------
// interpolate

pub struct InterpolateArgs {
    pub target: PathBuf,
    pub compensation: PathBuf,
    pub personal_income: PathBuf,
    pub target_is_labour_share: bool,
    pub no_constant: bool,
    pub element: String,
    pub objective: String,
    pub grid_lo: Option<f64>,
    pub grid_hi: Option<f64>,
    pub grid_n: Option<usize>,
}

fn parse_element(s: &str) -> Result<SelectedMonth> {
    match s.to_ascii_lowercase().as_str() {
        "first" => Ok(SelectedMonth::First),
        "last" => Ok(SelectedMonth::Last),
        other => Err(Error::InvalidInput(format!("element must be first or last, got {other}"))),
    }
}

fn parse_objective(s: &str) -> Result<Objective> {
    match s.to_ascii_lowercase().as_str() {
        "wls" => Ok(Objective::Wls),
        "ll" => Ok(Objective::LogLikelihood),
        other => Err(Error::InvalidInput(format!("objective must be wls or ll, got {other}"))),
    }
}

pub fn interpolate(args: &InterpolateArgs, out_dir: &Path) -> Result<RunOutput> {
    let mut run = RunOutput::new();
    run.input(&args.target);
    run.input(&args.compensation);
    run.input(&args.personal_income);

    let raw_target = load_series_any(&args.target, Units::Ratio)?;
    let target = if args.target_is_labour_share {
        factors::capital_share(&raw_target)?
    } else {
        raw_target.clone()
    };
    if target.frequency() != Frequency::Quarterly {
        return Err(Error::FrequencyError("interpolation target must be quarterly".into()));
    }
    let com = load_series_any(&args.compensation, Units::Level)?;
    let pi = load_series_any(&args.personal_income, Units::Level)?;
    let indicator_full = disagg::build_indicator(&com, &pi)?;

    // Trim the indicator to exactly 3 months per target quarter.
    let need = 3 * target.len();
    let lo = indicator_full
        .index_of(target.start())
        .ok_or_else(|| Error::NoOverlap("indicator does not cover the target start".into()))?;
    if lo + need > indicator_full.len() {
        return Err(Error::DimensionError(format!(
            "indicator ends before the target: needs {need} months from {}",
            target.start()
        )));
    }
    let indicator = indicator_full.slice(lo, lo + need - 1)?;

    let grid = GridSpec {
        lo: args.grid_lo.unwrap_or(0.050),
        hi: args.grid_hi.unwrap_or(0.999),
        n: args.grid_n.unwrap_or(100),
    };
    let opts = ChowLinOptions {
        with_constant: !args.no_constant,
        element: parse_element(&args.element)?,
        objective: parse_objective(&args.objective)?,
        grid,
    };
    let fit = disagg::chow_lin(&target, &indicator, &opts)?;

    run.param("target", args.target.display());
    run.param("compensation", args.compensation.display());
    run.param("personal-income", args.personal_income.display());
    run.param("target-is-labour-share", args.target_is_labour_share);
    run.param("no-constant", args.no_constant);
    run.param("element", &args.element);
    run.param("objective", &args.objective);
    run.param("grid-lo", grid.lo);
    run.param("grid-hi", grid.hi);
    run.param("grid-n", grid.n);

    run.write(out_dir, "monthly.csv", &io::series_table("interpolated_monthly", &fit.monthly))?;

    let mut coef = Table::new("chow_lin_coefficients", "ratio").with_labels(
        "parameter",
        match fit.beta0 {
            Some(_) => vec!["beta0".into(), "beta_ind".into(), "rho".into()],
            None => vec!["beta_ind".into(), "rho".into()],
        },
    );
    let mut values: Vec<f64> = Vec::new();
    let mut stderrs: Vec<f64> = Vec::new();
    let mut tstats: Vec<f64> = Vec::new();
    if let Some(b0) = fit.beta0 {
        values.push(b0);
        stderrs.push(fit.stderrs[0]);
        tstats.push(fit.tstats[0]);
    }
    values.push(fit.beta_ind);
    stderrs.push(*fit.stderrs.last().unwrap());
    tstats.push(*fit.tstats.last().unwrap());
    values.push(fit.rho);
    stderrs.push(f64::NAN);
    tstats.push(f64::NAN);
    coef.push_column("value", values);
    coef.push_column("stderr", stderrs);
    coef.push_column("tstat", tstats);
    run.write(out_dir, "coefficients.csv", &coef)?;

    // Information criteria across the eight candidate settings.
    let mut labels = Vec::new();
    let (mut aics, mut bics, mut rhos) = (Vec::new(), Vec::new(), Vec::new());
    for element in [SelectedMonth::First, SelectedMonth::Last] {
        for with_constant in [false, true] {
            for objective in [Objective::Wls, Objective::LogLikelihood] {
                let cand = ChowLinOptions { with_constant, element, objective, grid };
                let label = format!(
                    "{}_opc{}_{}",
                    match element {
                        SelectedMonth::First => "first",
                        SelectedMonth::Last => "last",
                    },
                    u8::from(with_constant),
                    match objective {
                        Objective::Wls => "wls",
                        Objective::LogLikelihood => "ll",
                    }
                );
                match disagg::chow_lin(&target, &indicator, &cand) {
                    Ok(f) => {
                        labels.push(label);
                        aics.push(f.aic);
                        bics.push(f.bic);
                        rhos.push(f.rho);
                    }
                    Err(_) => {
                        labels.push(label);
                        aics.push(f64::NAN);
                        bics.push(f64::NAN);
                        rhos.push(f64::NAN);
                    }
                }
            }
        }
    }
    let mut ic = Table::new("chow_lin_settings_ic", "log-scale").with_labels("setting", labels);
    ic.push_column("aic", aics);
    ic.push_column("bic", bics);
    ic.push_column("rho", rhos);
    run.write(out_dir, "settings_ic.csv", &ic)?;

    if args.target_is_labour_share {
        // Quarterly employee share against the labour share.
        let es_monthly = indicator_full.with_values(
            Units::Ratio,
            indicator_full.values().iter().map(|v| 1.0 - v).collect(),
        )?;
        let lo = es_monthly.index_of(raw_target.start());
        if let Some(lo) = lo {
            let quarters = ((es_monthly.len() - lo) / 3).min(raw_target.len());
            if quarters >= 2 {
                let es_q = TimeSeries::new(
                    raw_target.start(),
                    Frequency::Quarterly,
                    Units::Ratio,
                    (0..quarters).map(|q| es_monthly.values()[lo + 3 * q]).collect(),
                )?;
                let d = disagg::gamma_diagnostic(&es_q, &raw_target.slice(0, quarters - 1)?)?;
                let mut g = Table::new("gamma_diagnostic", "ratio").with_labels(
                    "statistic",
                    ["min", "q1", "median", "mean", "q3", "max", "std"]
                        .iter()
                        .map(|s| s.to_string())
                        .collect(),
                );
                g.push_column("value", vec![d.min, d.q1, d.median, d.mean, d.q3, d.max, d.std]);
                run.write(out_dir, "gamma_diagnostic.csv", &g)?;
            }
        }
    }
    Ok(run)
}

// ---------------------------------------------------------------------------
// factors

pub struct FactorsArgs {
    pub labour_share: Option<PathBuf>,
    pub capital_share: Option<PathBuf>,
    pub horizon: usize,
    pub omit_innovation_variance: bool,
}

pub fn factors_cmd(args: &FactorsArgs, out_dir: &Path) -> Result<RunOutput> {
    let mut run = RunOutput::new();
    let ks = match (&args.labour_share, &args.capital_share) {
        (Some(ls_path), None) => {
            run.input(ls_path);
            run.param("labour-share", ls_path.display());
            let ls = load_series_any(ls_path, Units::Ratio)?;
            factors::capital_share(&ls)?
        }
        (None, Some(ks_path)) => {
            run.input(ks_path);
            run.param("capital-share", ks_path.display());
            load_series_any(ks_path, Units::Ratio)?
        }
        _ => {
            return Err(Error::InvalidInput(
                "provide exactly one of --labour-share or --capital-share".into(),
            ))
        }
    };
    run.param("horizon", args.horizon);
    run.param("omit-innovation-variance", args.omit_innovation_variance);

    let f_ks = factors::ks_growth_factor(&ks, args.horizon)?;
    let variability = factors::ks_variability_with(
        &f_ks,
        VariabilityOptions { omit_innovation_variance: args.omit_innovation_variance },
    )?;
    let ar = capshare::ar1_fit(&f_ks, false)?;

    let f_pct = f_ks.to_percent();
    let var_pct = variability.to_percent();

    run.write(out_dir, "capital_share.csv", &io::series_table("capital_share", &ks))?;
    run.write(out_dir, "f_ks.csv", &io::series_table("f_ks", &f_pct))?;
    run.write(
        out_dir,
        "ks_variability.csv",
        &io::series_table("ks_variability", &var_pct),
    )?;

    let mut stats = Table::new("factor_stats", "percent")
        .with_labels("factor", vec!["F_KS".into(), "E(F2_KS)".into()]);
    let fr = &descriptive_stats(&f_pct, &[full_span(&f_pct)])?[0];
    let vr = &descriptive_stats(&var_pct, &[full_span(&var_pct)])?[0];
    stats.push_column("mean", vec![fr.mean, vr.mean]);
    stats.push_column("median", vec![fr.median, vr.median]);
    stats.push_column("std", vec![fr.std, vr.std]);
    stats.push_column(
        "sharpe",
        vec![fr.sharpe.unwrap_or(f64::NAN), vr.sharpe.unwrap_or(f64::NAN)],
    );
    run.write(out_dir, "factor_stats.csv", &stats)?;

    let mut ar_t = Table::new("f_ks_ar1", "ratio").with_labels(
        "parameter",
        vec!["rho".into(), "rho_stderr".into(), "resid_variance".into()],
    );
    ar_t.push_column("value", vec![ar.rho, ar.rho_stderr, ar.resid_variance]);
    run.write(out_dir, "ar1.csv", &ar_t)?;
    Ok(run)
}

// ---------------------------------------------------------------------------
// fmb family

pub struct FmbArgs {
    pub panel: PathBuf,
    pub factors: Vec<PathBuf>,
}

fn load_panel_and_factors(args: &FmbArgs, run: &mut RunOutput) -> Result<(ReturnPanel, FactorSet)> {
    run.input(&args.panel);
    for f in &args.factors {
        run.input(f);
    }
    run.param("panel", args.panel.display());
    run.param(
        "factors",
        args.factors.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(","),
    );
    let panel = io::load_panel(&args.panel)?;
    let factors = load_factor_set(&args.factors)?;
    Ok((panel, factors))
}

fn beta_table(panel: &ReturnPanel, factors: &FactorSet, betas: &DMatrix<f64>) -> Table {
    let mut t = Table::new("first_pass_betas", "percent")
        .with_labels("portfolio", panel.names().to_vec());
    t.push_column("const", betas.column(0).iter().copied().collect());
    for (j, name) in factors.names().iter().enumerate() {
        t.push_column(name.clone(), betas.column(j + 1).iter().copied().collect());
    }
    t
}

pub fn fmb_cmd(args: &FmbArgs, out_dir: &Path) -> Result<RunOutput> {
    let mut run = RunOutput::new();
    let (panel, factors) = load_panel_and_factors(args, &mut run)?;
    let betas = fmb::first_pass(&panel, &factors)?;
    let res = fmb::second_pass(&panel, &betas)?;

    run.write(out_dir, "betas.csv", &beta_table(&panel, &factors, &betas))?;

    let mut labels = vec!["const".to_string()];
    labels.extend(factors.names().iter().cloned());
    labels.push("R2bar".into());
    let se = res.fm_stderr();
    let mut lam = Table::new("risk_prices", "percent").with_labels("quantity", labels);
    let mut est = res.lambda.clone();
    est.push(res.r2_bar);
    let mut ses: Vec<f64> = se.clone();
    ses.push(f64::NAN);
    let tstats: Vec<f64> = est
        .iter()
        .zip(&ses)
        .map(|(e, s)| if *s > 0.0 { e / s } else { f64::NAN })
        .collect();
    lam.push_column("estimate", est);
    lam.push_column("fm_stderr", ses);
    lam.push_column("tstat", tstats);
    run.write(out_dir, "risk_prices.csv", &lam)?;

    let scatter = fmb::beta_scatter(&panel, &betas)?;
    let mut sc = Table::new("beta_scatter", "percent")
        .with_labels("portfolio", scatter.rows.iter().map(|r| r.portfolio.clone()).collect());
    sc.push_column("mean_return", scatter.rows.iter().map(|r| r.mean_return).collect());
    for (j, name) in factors.names().iter().enumerate() {
        sc.push_column(format!("beta_{name}"), scatter.rows.iter().map(|r| r.beta[j]).collect());
    }
    sc.push_column("fitted", scatter.rows.iter().map(|r| r.fitted).collect());
    sc.push_column("r2", vec![scatter.r2; scatter.rows.len()]);
    run.write(out_dir, "beta_scatter.csv", &sc)?;
    Ok(run)
}

pub struct FmbBootArgs {
    pub base: FmbArgs,
    pub n_sims: usize,
    pub block_ts: Option<usize>,
    pub block_cs: Option<usize>,
    pub export_draws: bool,
}

pub fn fmb_boot(args: &FmbBootArgs, seed: u64, workers: Option<usize>, out_dir: &Path) -> Result<RunOutput> {
    let mut run = RunOutput::new();
    let (panel, factors) = load_panel_and_factors(&args.base, &mut run)?;
    run.param("n-sims", args.n_sims);
    if let Some(b) = args.block_ts {
        run.param("block-ts", b);
    }
    if let Some(b) = args.block_cs {
        run.param("block-cs", b);
    }
    let cfg = BootstrapConfig {
        n_sims: args.n_sims,
        seed,
        block_ts: args.block_ts,
        block_cs: args.block_cs,
        workers,
    };
    let boot = fmb::fmb_bootstrap(&panel, &factors, &cfg)?;

    // One row per quantity in the table layout: constant, factors, R2bar,
    // each with its bootstrap percentile interval and significance stars.
    let mut labels = vec!["const".to_string()];
    labels.extend(factors.names().iter().cloned());
    labels.push("R2bar".into());
    let k = factors.n_factors();
    let mut est = boot.point.lambda.clone();
    est.push(boot.point.r2_bar);
    let ci_lo: Vec<f64> = (0..k + 2).map(|c| boot.ci95[c].0).collect();
    let ci_hi: Vec<f64> = (0..k + 2).map(|c| boot.ci95[c].1).collect();
    let sig: Vec<f64> = (0..k + 2)
        .map(|c| match boot.stars(c) {
            "**" => 0.05,
            "*" => 0.10,
            _ => f64::NAN,
        })
        .collect();
    let mut t = Table::new("risk_prices_bootstrap", "percent").with_labels("quantity", labels);
    t.push_column("estimate", est);
    t.push_column("ci95_lo", ci_lo);
    t.push_column("ci95_hi", ci_hi);
    t.push_column("sig_level", sig);
    run.write(out_dir, "risk_prices.csv", &t)?;

    let mut meta = Table::new("bootstrap_meta", "count").with_labels(
        "field",
        vec!["n_sims".into(), "block_ts".into(), "block_cs".into(), "failures".into()],
    );
    meta.push_column(
        "value",
        vec![boot.n_sims as f64, boot.block_ts as f64, boot.block_cs as f64, boot.failures as f64],
    );
    run.write(out_dir, "bootstrap_meta.csv", &meta)?;

    if args.export_draws {
        run.param("export-draws", true);
        let mut d = Table::new("bootstrap_draws", "percent");
        d.push_column("const", boot.column(0));
        for (j, name) in factors.names().iter().enumerate() {
            d.push_column(name.clone(), boot.column(j + 1));
        }
        d.push_column("R2bar", boot.column(k + 1));
        run.write(out_dir, "bootstrap_draws.csv", &d)?;
    }
    Ok(run)
}

pub struct RollingFmbArgs {
    pub base: FmbArgs,
    pub window: usize,
}

pub fn rolling_fmb(args: &RollingFmbArgs, out_dir: &Path) -> Result<RunOutput> {
    let mut run = RunOutput::new();
    let (panel, factors) = load_panel_and_factors(&args.base, &mut run)?;
    run.param("window", args.window);
    let steps = fmb::rolling_fmb(&panel, &factors, args.window)?;
    let labels: Vec<String> = steps.iter().map(|s| s.window_end.to_string()).collect();
    let mut t = Table::new("rolling_risk_prices", "percent").with_labels("window_end", labels);
    let kp1 = factors.n_factors() + 1;
    let names: Vec<String> = std::iter::once("const".to_string())
        .chain(factors.names().iter().cloned())
        .collect();
    for j in 0..kp1 {
        t.push_column(format!("lambda_{}", names[j]), steps.iter().map(|s| s.lambda[j]).collect());
        t.push_column(
            format!("se_{}", names[j]),
            steps.iter().map(|s| s.fm_stderr[j]).collect(),
        );
    }
    t.push_column("r2_bar", steps.iter().map(|s| s.r2_bar).collect());
    run.write(out_dir, "rolling_lambda.csv", &t)?;
    Ok(run)
}

// ---------------------------------------------------------------------------
// btvbsv

pub struct BtvbsvArgs {
    pub base: FmbArgs,
    pub iters: usize,
    pub burn: Option<usize>,
    pub thin: usize,
    pub training_years: usize,
    pub prior_only: bool,
}

pub fn btvbsv_cmd(args: &BtvbsvArgs, seed: u64, out_dir: &Path) -> Result<RunOutput> {
    let mut run = RunOutput::new();
    let (panel, factors) = load_panel_and_factors(&args.base, &mut run)?;
    run.param("iters", args.iters);
    run.param("thin", args.thin);
    run.param("training-years", args.training_years);
    run.param("prior-only", args.prior_only);
    let burn = args.burn.unwrap_or(args.iters / 2);
    run.param("burn", burn);

    // Priors come from the training window, the chain runs on the rest.
    let hp = btvbsv::init_priors(&panel, &factors, args.training_years)?;
    let months = args.training_years * 12;
    let (est_panel, est_factors) = capshare::align_panel_factors(&panel, &factors)?;
    let t_total = est_panel.n_periods();
    if months + 24 > t_total {
        return Err(Error::InsufficientData(format!(
            "panel has {t_total} aligned months; need at least {} beyond training",
            months + 24
        )));
    }
    let est_panel = est_panel.window(months, t_total - 1)?;
    let est_factors = est_factors.window(months, t_total - 1)?;

    let cfg = GibbsConfig {
        n_iter: args.iters,
        burn,
        thin: args.thin,
        seed,
        prior_only: args.prior_only,
    };
    let draws = btvbsv::gibbs_run(&est_panel, &est_factors, &hp, &cfg)?;

    let draws_dir = out_dir.join("draws");
    btvbsv::save_draws(&draws_dir, &draws)?;
    run.outputs.push(draws_dir.join("manifest.json"));
    run.outputs.push(draws_dir.join("draws.bin"));

    // Risk-price posterior summary.
    let kp1 = est_factors.n_factors() + 1;
    let names: Vec<String> = std::iter::once("const".to_string())
        .chain(est_factors.names().iter().cloned())
        .collect();
    let mut mean = Vec::with_capacity(kp1);
    let mut sd = Vec::with_capacity(kp1);
    let mut lo = Vec::with_capacity(kp1);
    let mut hi = Vec::with_capacity(kp1);
    for j in 0..kp1 {
        let chain: Vec<f64> = (0..draws.n_draws).map(|d| draws.lambda_at(d, j)).collect();
        let m = chain.iter().sum::<f64>() / chain.len() as f64;
        let v = chain.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
            / (chain.len() as f64 - 1.0).max(1.0);
        let mut sorted = chain.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q = |p: f64| sorted[((sorted.len() - 1) as f64 * p).round() as usize];
        mean.push(m);
        sd.push(v.sqrt());
        lo.push(q(0.025));
        hi.push(q(0.975));
    }
    let mut lam = Table::new("btvbsv_risk_prices", "percent").with_labels("quantity", names);
    lam.push_column("post_mean", mean);
    lam.push_column("post_sd", sd);
    lam.push_column("ci95_lo", lo);
    lam.push_column("ci95_hi", hi);
    run.write(out_dir, "risk_prices.csv", &lam)?;

    // Break probabilities in long format.
    let probs = btvbsv::break_probabilities(&draws)?;
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for i in 0..probs.n_portfolios {
        for j in 0..=probs.n_factors {
            for t in 0..probs.n_periods {
                labels.push(format!(
                    "{}|{}|{}",
                    est_panel.names()[i],
                    if j == 0 { "const" } else { est_factors.names()[j - 1].as_str() },
                    est_panel.date_at(t)
                ));
                values.push(probs.beta_at(i, j, t));
            }
        }
    }
    let mut bp = Table::new("break_probabilities_beta", "probability")
        .with_labels("portfolio|factor|date", labels);
    bp.push_column("probability", values);
    run.write(out_dir, "break_probs_beta.csv", &bp)?;

    let mut labels = Vec::new();
    let mut values = Vec::new();
    for i in 0..probs.n_portfolios {
        for t in 0..probs.n_periods {
            labels.push(format!("{}|{}", est_panel.names()[i], est_panel.date_at(t)));
            values.push(probs.sigma_at(i, t));
        }
    }
    let mut bps = Table::new("break_probabilities_sigma", "probability")
        .with_labels("portfolio|date", labels);
    bps.push_column("probability", values);
    run.write(out_dir, "break_probs_sigma.csv", &bps)?;

    // Convergence diagnostics (needs enough stored draws).
    match btvbsv::convergence_diagnostics(&draws) {
        Ok(report) => {
            let mut conv = Table::new("convergence", "rate").with_labels(
                "block",
                report.blocks.iter().map(|b| b.name.clone()).collect(),
            );
            conv.push_column(
                "parameters",
                report.blocks.iter().map(|b| b.n_parameters as f64).collect(),
            );
            conv.push_column(
                "excluded",
                report.blocks.iter().map(|b| b.n_excluded as f64).collect(),
            );
            conv.push_column(
                "rejection_5pct",
                report.blocks.iter().map(|b| b.rejection_rate_5).collect(),
            );
            conv.push_column(
                "rejection_10pct",
                report.blocks.iter().map(|b| b.rejection_rate_10).collect(),
            );
            run.write(out_dir, "convergence.csv", &conv)?;
        }
        Err(Error::InsufficientData(_)) => {}
        Err(e) => return Err(e),
    }
    Ok(run)
}

// ---------------------------------------------------------------------------
// mgarch

pub struct MgarchArgs {
    pub panel: PathBuf,
    pub factor: PathBuf,
    pub window: usize,
    pub portfolio: Option<String>,
}

pub fn mgarch_cmd(args: &MgarchArgs, out_dir: &Path) -> Result<RunOutput> {
    let mut run = RunOutput::new();
    run.input(&args.panel);
    run.input(&args.factor);
    run.param("panel", args.panel.display());
    run.param("factor", args.factor.display());
    run.param("window", args.window);
    let panel = io::load_panel(&args.panel)?;
    let factor = load_series_any(&args.factor, Units::Percent)?;

    // Align the factor with the panel span.
    let f_lo = factor
        .index_of(panel.start())
        .ok_or_else(|| Error::NoOverlap("factor does not cover the panel start".into()))?;
    let t = panel.n_periods().min(factor.len() - f_lo);
    let panel = panel.window(0, t - 1)?;
    let f: Vec<f64> = factor.values()[f_lo..f_lo + t].to_vec();

    // Rolling fit on the selected portfolio or the equal-weighted average.
    let series: Vec<f64> = match &args.portfolio {
        Some(name) => {
            run.param("portfolio", name);
            let i = panel
                .names()
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::InvalidInput(format!("portfolio {name:?} not in panel")))?;
            panel.returns().row(i).iter().copied().collect()
        }
        None => (0..t)
            .map(|s| panel.returns().column(s).iter().sum::<f64>() / panel.n_portfolios() as f64)
            .collect(),
    };
    let path = mgarch::rolling_mgarch(&series, &f, args.window)?;
    let labels: Vec<String> =
        (args.window..=t).map(|end| panel.date_at(end - 1).to_string()).collect();
    let mut rt = Table::new("rolling_mgarch", "percent").with_labels("window_end", labels);
    rt.push_column("beta0", path.iter().map(|p| p.beta0).collect());
    rt.push_column("lambda0", path.iter().map(|p| p.lambda0).collect());
    rt.push_column("lambda1", path.iter().map(|p| p.lambda1).collect());
    rt.push_column("se_beta0", path.iter().map(|p| p.stderrs[0]).collect());
    rt.push_column("se_lambda0", path.iter().map(|p| p.stderrs[1]).collect());
    rt.push_column("se_lambda1", path.iter().map(|p| p.stderrs[2]).collect());
    // Wald 95% band for the variance loading.
    rt.push_column(
        "lambda1_ci_lo",
        path.iter().map(|p| p.lambda1 - 1.96 * p.stderrs[2]).collect(),
    );
    rt.push_column(
        "lambda1_ci_hi",
        path.iter().map(|p| p.lambda1 + 1.96 * p.stderrs[2]).collect(),
    );
    rt.push_column(
        "converged",
        path.iter().map(|p| if p.converged { 1.0 } else { 0.0 }).collect(),
    );
    run.write(out_dir, "rolling_mgarch.csv", &rt)?;

    // Per-portfolio (G)ARCH-effect screen.
    let mut labels = Vec::new();
    let (mut c0, mut p0, mut c1, mut p1, mut c2, mut p2) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for i in 0..panel.n_portfolios() {
        let y: Vec<f64> = panel.returns().row(i).iter().copied().collect();
        let fit = mgarch::sanity_check_regression(&y, &f)?;
        labels.push(panel.names()[i].clone());
        c0.push(fit.coefficients[0]);
        p0.push(fit.pvalues[0]);
        c1.push(fit.coefficients[1]);
        p1.push(fit.pvalues[1]);
        c2.push(fit.coefficients[2]);
        p2.push(fit.pvalues[2]);
    }
    let mut sc = Table::new("sanity_check", "log-variance").with_labels("portfolio", labels);
    sc.push_column("intercept", c0);
    sc.push_column("intercept_p", p0);
    sc.push_column("lag_lnsig2", c1);
    sc.push_column("lag_lnsig2_p", p1);
    sc.push_column("f_ks", c2);
    sc.push_column("f_ks_p", p2);
    run.write(out_dir, "sanity_check.csv", &sc)?;
    Ok(run)
}

// ---------------------------------------------------------------------------
// lrr

pub struct LrrArgs {
    pub params: Option<PathBuf>,
    pub fks: Option<PathBuf>,
    pub ef2: Option<f64>,
    pub simulate: Option<usize>,
}

fn lrr_params_from_config(cfg: &ConfigFile) -> Result<LrrParams> {
    let mut p = LrrParams::default();
    macro_rules! set {
        ($field:ident) => {
            if let Some(v) = cfg.get_f64(stringify!($field))? {
                p.$field = v;
            }
        };
    }
    set!(delta);
    set!(gamma);
    set!(psi);
    set!(mu);
    set!(mu_d);
    set!(rho);
    set!(phi_e);
    set!(phi);
    set!(phi_d);
    set!(sigma);
    set!(w_h);
    set!(kappa1);
    set!(kappa1m);
    set!(rho_ks);
    set!(sigma_xi);
    set!(sigma_d_dial);
    Ok(p)
}

pub fn lrr_cmd(args: &LrrArgs, seed: u64, out_dir: &Path) -> Result<RunOutput> {
    let mut run = RunOutput::new();
    let p = match &args.params {
        Some(path) => {
            run.input(path);
            run.param("params", path.display());
            lrr_params_from_config(&ConfigFile::load(path)?)?
        }
        None => LrrParams::default(),
    };

    // Factor path: from file, or simulated from the system itself.
    let sim = args.simulate.map(|t| {
        run.param("simulate", t);
        lrr::simulate_system(&p, &SimConfig::new(t, seed))
    });
    let (f_path, sim_paths) = match (&args.fks, sim) {
        (Some(path), maybe_sim) => {
            run.input(path);
            run.param("fks", path.display());
            let s = load_series_any(path, Units::Percent)?;
            // Premium algebra runs on the raw growth rate.
            let vals: Vec<f64> = match s.units() {
                Units::Percent => s.values().iter().map(|v| v / 100.0).collect(),
                _ => s.values().to_vec(),
            };
            (vals, maybe_sim.transpose()?)
        }
        (None, Some(sim)) => {
            let sim = sim?;
            (sim.f_ks.clone(), Some(sim))
        }
        (None, None) => {
            return Err(Error::InvalidInput("provide --fks or --simulate".into()))
        }
    };
    let ef2 = args
        .ef2
        .unwrap_or_else(|| f_path.iter().map(|f| f * f).sum::<f64>() / f_path.len() as f64);
    run.param("ef2", ef2);

    let loadings = lrr::loadings(&p)?;
    let prem = lrr::premiums(&p, &f_path, ef2)?;
    let rec = lrr::verify_a2_recursion(&p, &f_path)?;

    let mut lt = Table::new("lrr_loadings", "model").with_labels(
        "quantity",
        [
            "theta", "A1", "A1m", "a2_slope", "a2m_const", "a2m_slope", "lambda_eta",
            "lambda_e", "lambda_re", "lambda_me",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
    );
    lt.push_column(
        "value",
        vec![
            p.theta(),
            loadings.a1,
            loadings.a1m,
            loadings.a2_slope,
            loadings.a2m_const,
            loadings.a2m_slope,
            loadings.lambda_eta,
            loadings.lambda_e,
            loadings.lambda_re,
            loadings.lambda_me,
        ],
    );
    run.write(out_dir, "loadings.csv", &lt)?;

    let cond_eq_mean =
        prem.conditional_equity.iter().sum::<f64>() / prem.conditional_equity.len() as f64;
    let mut pt = Table::new("lrr_premiums", "log-return").with_labels(
        "quantity",
        [
            "conditional_consumption",
            "conditional_equity_mean",
            "unconditional_consumption",
            "unconditional_equity",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
    );
    pt.push_column(
        "value",
        vec![
            prem.conditional_consumption,
            cond_eq_mean,
            prem.unconditional_consumption,
            prem.unconditional_equity,
        ],
    );
    run.write(out_dir, "premiums.csv", &pt)?;

    let mut rt = Table::new("a2_recursion", "model")
        .with_labels("quantity", vec!["max_residual".into(), "max_bound".into()]);
    rt.push_column("value", vec![rec.max_residual, rec.max_bound]);
    run.write(out_dir, "a2_recursion.csv", &rt)?;

    if let Some(sim) = sim_paths {
        let n = sim.rm_excess.len() as f64;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let sd = |v: &[f64]| {
            let m = mean(v);
            (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
        };
        let mut st = Table::new("lrr_sim_moments", "log-return").with_labels(
            "quantity",
            [
                "mean_g",
                "sd_g",
                "mean_gd",
                "sd_gd",
                "mc_unconditional_equity",
                "mc_se",
                "mc_unconditional_consumption",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        );
        st.push_column(
            "value",
            vec![
                mean(&sim.g),
                sd(&sim.g),
                mean(&sim.g_d),
                sd(&sim.g_d),
                mean(&sim.rm_excess),
                sd(&sim.rm_excess) / n.sqrt(),
                mean(&sim.ra_excess),
            ],
        );
        run.write(out_dir, "sim_moments.csv", &st)?;
    }
    Ok(run)
}

// ---------------------------------------------------------------------------
// ols

pub struct OlsArgs {
    pub y: PathBuf,
    pub x: Vec<PathBuf>,
    pub no_intercept: bool,
    pub demean: bool,
}

pub fn ols_cmd(args: &OlsArgs, out_dir: &Path) -> Result<RunOutput> {
    let mut run = RunOutput::new();
    run.input(&args.y);
    run.param("y", args.y.display());
    run.param(
        "x",
        args.x.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(","),
    );
    run.param("no-intercept", args.no_intercept);
    run.param("demean", args.demean);

    let y_series = load_series_any(&args.y, Units::Percent)?;
    let mut xs = Vec::new();
    for p in &args.x {
        run.input(p);
        xs.push((file_stem(p), load_series_any(p, Units::Percent)?));
    }
    // Trim everything to the common span.
    let mut start = y_series.start();
    let mut end = y_series.end();
    for (_, s) in &xs {
        start = start.max(s.start());
        end = end.min(s.end());
    }
    if end < start {
        return Err(Error::NoOverlap("y and x series do not overlap".into()));
    }
    let slice = |s: &TimeSeries| -> Result<Vec<f64>> {
        let lo = s.index_of(start).ok_or_else(|| {
            Error::FrequencyError("series are not on a common grid".into())
        })?;
        let hi = s.index_of(end).unwrap();
        Ok(s.values()[lo..=hi].to_vec())
    };
    let demean = |mut v: Vec<f64>| -> Vec<f64> {
        if args.demean {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter_mut().for_each(|x| *x -= m);
        }
        v
    };
    let y = demean(slice(&y_series)?);
    let t = y.len();
    let mut x = DMatrix::zeros(t, xs.len());
    for (j, (_, s)) in xs.iter().enumerate() {
        let col = demean(slice(s)?);
        for i in 0..t {
            x[(i, j)] = col[i];
        }
    }
    let fit = ols(&y, &x, !args.no_intercept)?;

    let mut labels = Vec::new();
    if !args.no_intercept {
        labels.push("const".to_string());
    }
    labels.extend(xs.iter().map(|(n, _)| n.clone()));
    labels.push("R2".into());
    labels.push("adj_R2".into());
    let mut coefs = fit.coefficients.clone();
    coefs.push(fit.r2);
    coefs.push(fit.adj_r2);
    let mut ses = fit.stderrs.clone();
    ses.extend([f64::NAN, f64::NAN]);
    let mut ts = fit.tstats.clone();
    ts.extend([f64::NAN, f64::NAN]);
    let mut ps = fit.pvalues.clone();
    ps.extend([f64::NAN, f64::NAN]);
    let mut t_out = Table::new("ols", "percent").with_labels("variable", labels);
    t_out.push_column("coefficient", coefs);
    t_out.push_column("stderr", ses);
    t_out.push_column("tstat", ts);
    t_out.push_column("pvalue", ps);
    run.write(out_dir, "ols.csv", &t_out)?;
    Ok(run)
}
