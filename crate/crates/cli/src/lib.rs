//! Batch front door: ingest CSV prices, fit a mixture model per asset,
//! couple the assets with a t-copula, choose portfolio weights, and report
//! distortion risk measures. Every command writes artifacts into one
//! output directory and refreshes a checksummed manifest there.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod gbm;
pub mod ingest;
pub mod stages;

use crate::artifacts::Manifest;
use crate::config::{load_config, parse_float_list, InputFile, RunConfig, WeightSpec};
use crate::error::{CliError, CliResult};
use crate::gbm::{run_gbm_check, validate_spec, GbmSpec};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

/// Command-line interface definition.
#[derive(Debug, Parser)]
#[command(
    name = "dprisk",
    version,
    about = "Mixture return models, t-copula coupling, and distortion risk measures"
)]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory for artifacts and the manifest.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Root seed; every random stage derives its stream from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

/// Input and sampler flags shared by `fit` and `pipeline`.
#[derive(Debug, Clone, Default, Args)]
pub struct FitFlags {
    /// Input CSV file (repeatable); replaces the config file's input list.
    #[arg(long, value_name = "FILE")]
    pub input: Vec<PathBuf>,
    /// Date column name applied to the files given with --input.
    #[arg(long, value_name = "NAME")]
    pub date_column: Option<String>,
    /// Comma-separated price column names applied to the files given with
    /// --input (default: every non-date column).
    #[arg(long, value_name = "A,B,...")]
    pub price_columns: Option<String>,
    /// Maximum Gibbs sweeps per chain.
    #[arg(long, value_name = "N")]
    pub sweeps: Option<usize>,
    /// Sweeps discarded before averaging.
    #[arg(long, value_name = "N")]
    pub burn_in: Option<usize>,
    /// Truncation level (number of sticks).
    #[arg(long, value_name = "N")]
    pub truncation: Option<usize>,
    /// Record every n-th sweep.
    #[arg(long, value_name = "N")]
    pub thin: Option<usize>,
}

/// Copula flags shared by `copula` and `pipeline`.
#[derive(Debug, Clone, Default, Args)]
pub struct CopulaFlags {
    /// Degrees of freedom of the t-copula (inf gives the Gaussian copula).
    #[arg(long)]
    pub df: Option<f64>,
}

/// Portfolio flags shared by `portfolio` and `pipeline`.
#[derive(Debug, Clone, Default, Args)]
pub struct PortfolioFlags {
    /// Comma-separated portfolio weights in asset order (normalized).
    #[arg(long, value_name = "W1,W2,...")]
    pub weights: Option<String>,
    /// Mean-variance objective: min-variance, risk-aversion, target-return.
    #[arg(long, value_name = "NAME")]
    pub objective: Option<String>,
    /// Risk-aversion parameter (with --objective risk-aversion).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Target mean return (with --objective target-return).
    #[arg(long)]
    pub target: Option<f64>,
    /// Restrict mean-variance weights to be nonnegative.
    #[arg(long, default_value_t = false)]
    pub long_only: bool,
}

/// Risk flags shared by `risk` and `pipeline`.
#[derive(Debug, Clone, Default, Args)]
pub struct RiskFlags {
    /// Comma-separated tail levels in (0, 1).
    #[arg(long, value_name = "G1,G2,...")]
    pub gammas: Option<String>,
    /// Wang-transform load.
    #[arg(long)]
    pub wang_r: Option<f64>,
    /// Quadrature budget of the distortion integrals.
    #[arg(long, value_name = "N")]
    pub quad: Option<usize>,
    /// Joint-simulation sample size (at least 1000).
    #[arg(long, value_name = "N")]
    pub n_sims: Option<usize>,
}

/// Flags of the martingale verification command.
#[derive(Debug, Clone, Args)]
pub struct GbmFlags {
    /// Drift of the mixture-GBM model.
    #[arg(long, default_value_t = 0.05)]
    pub mu: f64,
    /// Comma-separated mixture weights.
    #[arg(long, default_value = "0.5,0.3,0.2", value_name = "W1,W2,...")]
    pub weights: String,
    /// Comma-separated component volatilities.
    #[arg(long, default_value = "0.1,0.2,0.4", value_name = "S1,S2,...")]
    pub sigmas: String,
    /// Step width in years.
    #[arg(long, default_value_t = 1.0 / 252.0)]
    pub dt: f64,
    /// Number of steps.
    #[arg(long, default_value_t = 252)]
    pub horizon: usize,
    /// Number of simulated paths.
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    /// Export the first N paths as CSV (0 = none).
    #[arg(long, default_value_t = 0, value_name = "N")]
    pub save_paths: usize,
}

/// All subcommands.
#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest prices and fit the mixture model of every asset.
    Fit(FitFlags),
    /// Simulate mixture-GBM paths and verify the martingale property.
    SimulateGbm(GbmFlags),
    /// Fit the t-copula, simulate the joint sample, and project it.
    Copula(CopulaCmd),
    /// Choose portfolio weights (explicit, equal, or mean-variance).
    Portfolio(PortfolioFlags),
    /// Compute the distortion risk report for the portfolio.
    Risk(RiskFlags),
    /// Print the risk report as text.
    Report,
    /// Run fit, copula, portfolio, risk, and report in one go.
    Pipeline(PipelineFlags),
}

/// `copula` takes its own flags plus the simulation size.
#[derive(Debug, Clone, Default, Args)]
pub struct CopulaCmd {
    #[command(flatten)]
    pub copula: CopulaFlags,
    /// Joint-simulation sample size (at least 1000).
    #[arg(long, value_name = "N")]
    pub n_sims: Option<usize>,
}

/// `pipeline` accepts the union of the stage flags.
#[derive(Debug, Clone, Default, Args)]
pub struct PipelineFlags {
    #[command(flatten)]
    pub fit: FitFlags,
    #[command(flatten)]
    pub copula: CopulaFlags,
    #[command(flatten)]
    pub portfolio: PortfolioFlags,
    #[command(flatten)]
    pub risk: RiskFlags,
}

// ---------------------------------------------------------------------------
// Flag resolution
// ---------------------------------------------------------------------------

fn apply_fit_flags(cfg: &mut RunConfig, flags: &FitFlags) -> CliResult<()> {
    if !flags.input.is_empty() {
        let price_columns = flags.price_columns.as_ref().map(|list| {
            list.split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect::<Vec<_>>()
        });
        cfg.inputs = flags
            .input
            .iter()
            .map(|path| InputFile {
                path: path.clone(),
                date_column: flags.date_column.clone(),
                price_columns: price_columns.clone(),
            })
            .collect();
    } else if flags.date_column.is_some() || flags.price_columns.is_some() {
        return Err(CliError::input(
            "--date-column/--price-columns only apply to files given with --input",
        ));
    }
    if let Some(v) = flags.sweeps {
        cfg.dp_shared.max_iter = Some(v);
    }
    if let Some(v) = flags.burn_in {
        cfg.dp_shared.burn_in = Some(v);
    }
    if let Some(v) = flags.truncation {
        cfg.dp_shared.truncation = Some(v);
    }
    if let Some(v) = flags.thin {
        cfg.dp_shared.thin = Some(v);
    }
    Ok(())
}

fn apply_copula_flags(cfg: &mut RunConfig, flags: &CopulaFlags) {
    if let Some(df) = flags.df {
        cfg.df = df;
    }
}

fn apply_portfolio_flags(cfg: &mut RunConfig, flags: &PortfolioFlags) -> CliResult<()> {
    match (&flags.weights, &flags.objective) {
        (Some(_), Some(_)) => {
            return Err(CliError::input(
                "give either --weights or --objective, not both",
            ));
        }
        (Some(w), None) => {
            cfg.weights = WeightSpec::Explicit(parse_float_list(w, "weight")?);
        }
        (None, Some(name)) => {
            cfg.weights = WeightSpec::MeanVariance {
                objective: crate::config::parse_objective(name, flags.lambda, flags.target)?,
                long_only: flags.long_only,
            };
        }
        (None, None) => {
            if flags.lambda.is_some() || flags.target.is_some() || flags.long_only {
                return Err(CliError::input(
                    "--lambda/--target/--long-only need --objective",
                ));
            }
        }
    }
    Ok(())
}

fn apply_risk_flags(cfg: &mut RunConfig, flags: &RiskFlags) -> CliResult<()> {
    if let Some(g) = &flags.gammas {
        cfg.gammas = parse_float_list(g, "tail level")?;
    }
    if let Some(r) = flags.wang_r {
        cfg.wang_r = r;
    }
    if let Some(q) = flags.quad {
        cfg.quad = q;
    }
    if let Some(n) = flags.n_sims {
        cfg.n_sims = n;
    }
    Ok(())
}

/// Builds the run configuration: defaults ← config file ← flags.
pub fn resolve_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match &cli.command {
        Command::Fit(f) => apply_fit_flags(&mut cfg, f)?,
        Command::Copula(c) => {
            apply_copula_flags(&mut cfg, &c.copula);
            if let Some(n) = c.n_sims {
                cfg.n_sims = n;
            }
        }
        Command::Portfolio(p) => apply_portfolio_flags(&mut cfg, p)?,
        Command::Risk(r) => apply_risk_flags(&mut cfg, r)?,
        Command::Pipeline(p) => {
            apply_fit_flags(&mut cfg, &p.fit)?;
            apply_copula_flags(&mut cfg, &p.copula);
            apply_portfolio_flags(&mut cfg, &p.portfolio)?;
            apply_risk_flags(&mut cfg, &p.risk)?;
        }
        Command::SimulateGbm(_) | Command::Report => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// Command execution
// ---------------------------------------------------------------------------

/// Marks the manifest failed at `stage` when `body` errors, so a crashed
/// staged command leaves the same flagged manifest a crashed pipeline
/// does. Non-convergence is not a failure: the fit command records that
/// status itself before returning the error.
fn guarded<T>(
    out: &std::path::Path,
    seed: u64,
    stage: &str,
    body: impl FnOnce() -> CliResult<T>,
) -> CliResult<T> {
    body().inspect_err(|e| {
        if !matches!(e, CliError::NonConvergence(_)) {
            let mut manifest = Manifest::load_or_new(out, seed);
            manifest.status = "failed".into();
            manifest.failed_stage = Some(stage.to_string());
            let _ = manifest.save(out);
        }
    })
}

/// Runs the parsed command; the caller maps errors to exit codes.
pub fn run(cli: &Cli) -> CliResult<()> {
    let cfg = resolve_config(cli)?;
    let out = cfg.out_dir.clone();
    match &cli.command {
        Command::Fit(_) => guarded(&out, cfg.seed, "fit", || {
            let fit = stages::fit_stage(&cfg)?;
            let mut manifest = Manifest::load_or_new(&out, cfg.seed);
            manifest.seed = cfg.seed;
            manifest.failed_stage = None;
            stages::record_fit(&mut manifest, &fit);
            let unconverged = fit.unconverged();
            manifest.status = if unconverged.is_empty() {
                "success".into()
            } else {
                "non_convergence".into()
            };
            manifest.save(&out)?;
            println!(
                "fit: {} assets, {} return rows; artifacts in {}",
                fit.panel.n_assets(),
                fit.panel.n_rows,
                out.display()
            );
            if !unconverged.is_empty() {
                return Err(CliError::NonConvergence(format!(
                    "sampler did not stabilize for: {}; artifacts written and flagged \
                     in the manifest",
                    unconverged.join(", ")
                )));
            }
            Ok(())
        }),
        Command::SimulateGbm(flags) => guarded(&out, cfg.seed, "simulate-gbm", || {
            let spec = GbmSpec {
                mu: flags.mu,
                weights: parse_float_list(&flags.weights, "weight")?,
                sigmas: parse_float_list(&flags.sigmas, "volatility")?,
                dt: flags.dt,
                horizon: flags.horizon,
                n_paths: flags.paths,
                seed: cfg.seed,
                save_paths: flags.save_paths,
            };
            validate_spec(&spec)?;
            let outcome = run_gbm_check(&out, &spec)?;
            let mut manifest = Manifest::load_or_new(&out, cfg.seed);
            manifest.save(&out)?;
            println!(
                "simulate-gbm: {:.2}% of steps within {} standard errors ({}); \
                 martingale_check.json in {}",
                100.0 * outcome.fraction_within_band,
                gbm::BAND_SE,
                if outcome.pass { "pass" } else { "FAIL" },
                out.display()
            );
            Ok(())
        }),
        Command::Copula(_) => guarded(&out, cfg.seed, "copula", || {
            let panel = stages::load_panel(&out)?;
            let marginals = stages::load_marginals(&out, &panel.assets)?;
            let copula = stages::copula_stage(&cfg, &panel, marginals)?;
            let mut manifest = Manifest::load_or_new(&out, cfg.seed);
            manifest.status = "success".into();
            manifest.failed_stage = None;
            stages::record_copula(&mut manifest, &copula);
            manifest.save(&out)?;
            println!(
                "copula: df {}, repaired {}; tau.json, sigma.json, joint_sample.csv, \
                 pca.csv in {}",
                copula.model.df,
                copula.model.repaired,
                out.display()
            );
            Ok(())
        }),
        Command::Portfolio(_) => guarded(&out, cfg.seed, "portfolio", || {
            let panel = stages::load_panel(&out)?;
            let portfolio = stages::portfolio_stage(&cfg, &panel)?;
            let mut manifest = Manifest::load_or_new(&out, cfg.seed);
            manifest.status = "success".into();
            manifest.failed_stage = None;
            manifest.save(&out)?;
            let pairs: Vec<String> = portfolio
                .assets
                .iter()
                .zip(&portfolio.weights)
                .map(|(a, w)| format!("{a}={w:.4}"))
                .collect();
            println!("portfolio: {}; weights.json in {}", pairs.join(", "), out.display());
            Ok(())
        }),
        Command::Risk(_) => guarded(&out, cfg.seed, "risk", || {
            let panel = stages::load_panel(&out)?;
            let marginals = stages::load_marginals(&out, &panel.assets)?;
            let report = if panel.n_assets() >= 2 {
                let model = stages::load_model(&out, marginals)?;
                let portfolio = stages::load_portfolio(&out, &panel.assets)?;
                stages::risk_stage_multi(&cfg, &portfolio, &model)?
            } else {
                stages::risk_stage_single(&cfg, &panel.assets[0], &marginals[0])?
            };
            let mut manifest = Manifest::load_or_new(&out, cfg.seed);
            manifest.status = "success".into();
            manifest.failed_stage = None;
            manifest.save(&out)?;
            println!(
                "risk: {} blocks at levels {:?}; risk_report.json in {}",
                report.blocks.len(),
                report.gammas,
                out.display()
            );
            Ok(())
        }),
        Command::Report => {
            let report = stages::load_report(&out)?;
            print!("{}", report.render_text());
            Ok(())
        }
        Command::Pipeline(_) => {
            let report = stages::run_pipeline(&cfg)?;
            println!("pipeline: success; artifacts in {}", out.display());
            print!("{}", report.render_text());
            Ok(())
        }
    }
}
