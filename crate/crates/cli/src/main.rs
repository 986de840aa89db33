//! Batch pipeline around the capital-share asset-pricing toolkit. Each
//! subcommand writes CSV tables and a run manifest (inputs, parameters,
//! seed, version, wall time) into the output directory; failures leave a
//! machine-readable `error.json` and a nonzero exit code.

mod commands;
mod config;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use capshare::error::Result;
use commands::*;
use config::ConfigFile;

#[derive(Parser)]
#[command(name = "capshare", version, about = "Capital-share asset-pricing pipeline")]
struct Cli {
    /// RNG seed; every run is reproducible given the manifest.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Flat key=value config file supplying defaults for omitted flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Chow-Lin interpolation of a quarterly series to monthly frequency.
    Interpolate {
        /// Quarterly target series (CSV).
        #[arg(long)]
        target: PathBuf,
        /// Monthly compensation-of-employees series.
        #[arg(long)]
        compensation: PathBuf,
        /// Monthly personal-income series.
        #[arg(long)]
        personal_income: PathBuf,
        /// Treat the target as a labour share: convert to 1 - LS first and
        /// emit the employee-share ratio diagnostic.
        #[arg(long)]
        target_is_labour_share: bool,
        /// Exclude the regression constant.
        #[arg(long)]
        no_constant: bool,
        /// Month the aggregation matrix selects: first or last.
        #[arg(long, default_value = "first")]
        element: String,
        /// Grid-search objective: wls or ll.
        #[arg(long, default_value = "wls")]
        objective: String,
        #[arg(long)]
        grid_lo: Option<f64>,
        #[arg(long)]
        grid_hi: Option<f64>,
        #[arg(long)]
        grid_n: Option<usize>,
    },
    /// Build the capital-share factor family from a labour-share series.
    Factors {
        #[arg(long)]
        labour_share: Option<PathBuf>,
        #[arg(long)]
        capital_share: Option<PathBuf>,
        /// Growth horizon in periods (12 months by default).
        #[arg(long)]
        horizon: Option<usize>,
        /// Drop the innovation-variance term of the variability factor.
        #[arg(long)]
        omit_innovation_variance: bool,
    },
    /// Two-pass risk-price estimation.
    Fmb {
        #[arg(long)]
        panel: PathBuf,
        /// Comma-separated factor series files.
        #[arg(long, value_delimiter = ',')]
        factors: Vec<PathBuf>,
    },
    /// Two-pass estimation with the block residual bootstrap.
    FmbBoot {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long, value_delimiter = ',')]
        factors: Vec<PathBuf>,
        #[arg(long)]
        n_sims: Option<usize>,
        /// Time-axis block length (default: T^(1/5), rounded).
        #[arg(long)]
        block_ts: Option<usize>,
        /// Cross-sectional block length (default: N/5).
        #[arg(long)]
        block_cs: Option<usize>,
        /// Also export the full draw matrix.
        #[arg(long)]
        export_draws: bool,
    },
    /// Rolling-window two-pass estimation.
    RollingFmb {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long, value_delimiter = ',')]
        factors: Vec<PathBuf>,
        #[arg(long)]
        window: Option<usize>,
    },
    /// Bayesian time-varying-beta sampler with stochastic volatility.
    Btvbsv {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long, value_delimiter = ',')]
        factors: Vec<PathBuf>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        burn: Option<usize>,
        #[arg(long)]
        thin: Option<usize>,
        /// Years of data reserved for the beta prior.
        #[arg(long)]
        training_years: Option<usize>,
        /// Sample the joint prior instead of the posterior.
        #[arg(long)]
        prior_only: bool,
    },
    /// Rolling multiplicative GARCH and the (G)ARCH-effect screen.
    Mgarch {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long)]
        factor: PathBuf,
        #[arg(long)]
        window: Option<usize>,
        /// Fit one portfolio instead of the equal-weighted average.
        #[arg(long)]
        portfolio: Option<String>,
    },
    /// Long-run-risks premiums, loadings and simulation check.
    Lrr {
        /// key=value parameter file; omitted keys use the defaults.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Capital-share growth path (CSV series).
        #[arg(long)]
        fks: Option<PathBuf>,
        /// E(F^2) used by the unconditional premium (default: path moment).
        #[arg(long)]
        ef2: Option<f64>,
        /// Simulate the system for this many periods.
        #[arg(long)]
        simulate: Option<usize>,
    },
    /// OLS of one series on others.
    Ols {
        #[arg(long)]
        y: PathBuf,
        #[arg(long, value_delimiter = ',')]
        x: Vec<PathBuf>,
        #[arg(long)]
        no_intercept: bool,
        /// Demean every series before the regression.
        #[arg(long)]
        demean: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Interpolate { .. } => "interpolate",
            Command::Factors { .. } => "factors",
            Command::Fmb { .. } => "fmb",
            Command::FmbBoot { .. } => "fmb-boot",
            Command::RollingFmb { .. } => "rolling-fmb",
            Command::Btvbsv { .. } => "btvbsv",
            Command::Mgarch { .. } => "mgarch",
            Command::Lrr { .. } => "lrr",
            Command::Ols { .. } => "ols",
        }
    }
}

#[derive(Serialize)]
struct Manifest {
    version: String,
    command: String,
    seed: u64,
    workers: Option<usize>,
    params: BTreeMap<String, String>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    wall_time_ms: u128,
}

#[derive(Serialize)]
struct ErrorRecord {
    command: String,
    error: String,
}

fn dispatch(
    cli: &Cli,
    cfg: &ConfigFile,
    seed: u64,
    workers: Option<usize>,
    out: &PathBuf,
) -> Result<RunOutput> {
    match &cli.command {
        Command::Interpolate {
            target,
            compensation,
            personal_income,
            target_is_labour_share,
            no_constant,
            element,
            objective,
            grid_lo,
            grid_hi,
            grid_n,
        } => interpolate(
            &InterpolateArgs {
                target: target.clone(),
                compensation: compensation.clone(),
                personal_income: personal_income.clone(),
                target_is_labour_share: *target_is_labour_share,
                no_constant: *no_constant,
                element: element.clone(),
                objective: objective.clone(),
                grid_lo: grid_lo.or(cfg.get_f64("grid-lo")?),
                grid_hi: grid_hi.or(cfg.get_f64("grid-hi")?),
                grid_n: grid_n.or(cfg.get_usize("grid-n")?),
            },
            out,
        ),
        Command::Factors { labour_share, capital_share, horizon, omit_innovation_variance } => {
            factors_cmd(
                &FactorsArgs {
                    labour_share: labour_share.clone(),
                    capital_share: capital_share.clone(),
                    horizon: horizon.or(cfg.get_usize("horizon")?).unwrap_or(12),
                    omit_innovation_variance: *omit_innovation_variance,
                },
                out,
            )
        }
        Command::Fmb { panel, factors } => {
            fmb_cmd(&FmbArgs { panel: panel.clone(), factors: factors.clone() }, out)
        }
        Command::FmbBoot { panel, factors, n_sims, block_ts, block_cs, export_draws } => fmb_boot(
            &FmbBootArgs {
                base: FmbArgs { panel: panel.clone(), factors: factors.clone() },
                n_sims: n_sims.or(cfg.get_usize("n-sims")?).unwrap_or(10_000),
                block_ts: block_ts.or(cfg.get_usize("block-ts")?),
                block_cs: block_cs.or(cfg.get_usize("block-cs")?),
                export_draws: *export_draws,
            },
            seed,
            workers,
            out,
        ),
        Command::RollingFmb { panel, factors, window } => rolling_fmb(
            &RollingFmbArgs {
                base: FmbArgs { panel: panel.clone(), factors: factors.clone() },
                window: window.or(cfg.get_usize("window")?).unwrap_or(60),
            },
            out,
        ),
        Command::Btvbsv { panel, factors, iters, burn, thin, training_years, prior_only } => {
            btvbsv_cmd(
                &BtvbsvArgs {
                    base: FmbArgs { panel: panel.clone(), factors: factors.clone() },
                    iters: iters.or(cfg.get_usize("iters")?).unwrap_or(2000),
                    burn: burn.or(cfg.get_usize("burn")?),
                    thin: thin.or(cfg.get_usize("thin")?).unwrap_or(5),
                    training_years: training_years
                        .or(cfg.get_usize("training-years")?)
                        .unwrap_or(10),
                    prior_only: *prior_only,
                },
                seed,
                out,
            )
        }
        Command::Mgarch { panel, factor, window, portfolio } => mgarch_cmd(
            &MgarchArgs {
                panel: panel.clone(),
                factor: factor.clone(),
                window: window.or(cfg.get_usize("window")?).unwrap_or(60),
                portfolio: portfolio.clone(),
            },
            out,
        ),
        Command::Lrr { params, fks, ef2, simulate } => lrr_cmd(
            &LrrArgs {
                params: params.clone(),
                fks: fks.clone(),
                ef2: ef2.or(cfg.get_f64("ef2")?),
                simulate: simulate.or(cfg.get_usize("simulate")?),
            },
            seed,
            out,
        ),
        Command::Ols { y, x, no_intercept, demean } => ols_cmd(
            &OlsArgs {
                y: y.clone(),
                x: x.clone(),
                no_intercept: *no_intercept,
                demean: *demean,
            },
            out,
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();

    let cfg = match &cli.config {
        Some(path) => match ConfigFile::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::FAILURE;
            }
        },
        None => ConfigFile::default(),
    };
    let seed = cli.seed.or_else(|| cfg.get("seed").and_then(|s| s.parse().ok())).unwrap_or(0);
    let workers = cli.workers.or_else(|| cfg.get("workers").and_then(|s| s.parse().ok()));
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.get("out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));

    if let Some(w) = workers {
        // Global pool for the rolling loops; the bootstrap builds its own.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }

    match dispatch(&cli, &cfg, seed, workers, &out) {
        Ok(run) => {
            let manifest = Manifest {
                version: env!("CARGO_PKG_VERSION").to_string(),
                command: cli.command.name().to_string(),
                seed,
                workers,
                params: run.params,
                inputs: run.inputs.iter().map(|p| p.display().to_string()).collect(),
                outputs: run.outputs.iter().map(|p| p.display().to_string()).collect(),
                wall_time_ms: started.elapsed().as_millis(),
            };
            let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
            if let Err(e) = std::fs::create_dir_all(&out)
                .and_then(|_| std::fs::write(out.join("manifest.json"), json))
            {
                eprintln!("error: could not write manifest: {e}");
                return ExitCode::FAILURE;
            }
            println!(
                "{} finished in {} ms, outputs in {}",
                cli.command.name(),
                started.elapsed().as_millis(),
                out.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            let record =
                ErrorRecord { command: cli.command.name().to_string(), error: e.to_string() };
            if std::fs::create_dir_all(&out).is_ok() {
                let _ = std::fs::write(
                    out.join("error.json"),
                    serde_json::to_string_pretty(&record).unwrap_or_default(),
                );
            }
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
