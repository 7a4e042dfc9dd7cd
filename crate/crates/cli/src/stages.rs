//! Pipeline stages: fit → copula → portfolio → risk → report. Each stage
//! writes its artifacts into the output directory; staged commands reload
//! what earlier stages wrote, while `pipeline` chains everything in
//! memory. Every random stage derives its seed from the one root seed.

use crate::artifacts::{
    matrix_rows, read_json, read_panel_csv, rows_to_matrix, sanitize_asset, write_density_csv,
    write_json, write_panel_csv, write_pca_csv, HpdStats, IngestCounts, Manifest, MsdStats,
    PcaStats, SigmaDoc, TauDoc, WeightsDoc,
};
use crate::config::{RunConfig, WeightSpec};
use crate::error::{CliError, CliResult};
use crate::ingest::ingest_csv;
use dprisk_core::copula::{
    fit_copula, simulate_joint, simulate_marginal, ConcordanceMatrix, CopulaModel,
};
use dprisk_core::diagnostics::{hpd_interval, kde, mean_square_deviation, DensityGrid, DensitySource};
use dprisk_core::dpmix::{run_blocked_gibbs, DpConfig, GibbsRun, RpmEstimate};
use dprisk_core::market::{compute_log_returns, ReturnPanel};
use dprisk_core::portfolio::{
    mean_variance_weights, portfolio_risk, Portfolio, PortfolioRiskOutput,
};
use dprisk_core::risk::{
    esf, var, wang_measure, EmpiricalDistribution, LossDistribution, RiskBlock, RiskReport,
    REPORT_CONVENTION,
};
use dprisk_core::rng::derive_seed;
use dprisk_core::stats::{mean, std_norm_pdf, variance};
use nalgebra::DMatrix;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

/// Seed-stream salt of asset `j`'s sampler chain: `FIT_SALT + j`.
const FIT_SALT: u64 = 101;
/// Seed-stream salt of the joint simulation.
const SIM_SALT: u64 = 202;
/// Credibility of the highest-density intervals in the manifest (α = 0.1).
const HPD_CREDIBILITY: f64 = 0.9;
/// Fewest recorded sweeps required to report posterior intervals.
const MIN_HPD_SWEEPS: usize = 20;

/// The chain seed of asset `j` under root seed `seed`.
pub fn chain_seed(seed: u64, j: usize) -> u64 {
    derive_seed(seed, FIT_SALT + j as u64)
}

/// The joint-simulation seed under root seed `seed`.
pub fn sim_seed(seed: u64) -> u64 {
    derive_seed(seed, SIM_SALT)
}

// ---------------------------------------------------------------------------
// Fit stage
// ---------------------------------------------------------------------------

/// Everything the fit stage learned about one asset.
pub struct AssetFit {
    pub name: String,
    pub run: GibbsRun,
    pub msd: MsdStats,
    pub hpd: Option<HpdStats>,
}

/// Output of the fit stage.
pub struct FitOutput {
    pub panel: ReturnPanel,
    pub fits: Vec<AssetFit>,
    pub ingest: BTreeMap<String, IngestCounts>,
}

impl FitOutput {
    /// The fitted marginals in panel order.
    pub fn marginals(&self) -> Vec<RpmEstimate> {
        self.fits.iter().map(|f| f.run.rpm.clone()).collect()
    }

    /// Assets whose chains did not meet the stability rule.
    pub fn unconverged(&self) -> Vec<&str> {
        self.fits
            .iter()
            .filter(|f| !f.run.rpm.meta.converged)
            .map(|f| f.name.as_str())
            .collect()
    }
}

/// Builds the sampler configuration of asset `j` from the data-driven
/// defaults plus the shared and per-asset overrides.
fn dp_config_for(cfg: &RunConfig, name: &str, data: &[f64], j: usize) -> CliResult<DpConfig> {
    let mut dp = DpConfig::defaults_for(data, chain_seed(cfg.seed, j))
        .map_err(|e| CliError::Input(format!("asset {name}: {e}")))?;
    cfg.dp_shared.apply(&mut dp);
    if let Some(extra) = cfg.dp_overrides.get(name) {
        extra.apply(&mut dp);
    }
    Ok(dp)
}

/// Per-sweep mixture mean and standard deviation from a recorded trace
/// row: `m = Σ w·μ`, `v = Σ w·(1/φ + μ²) − m²`.
fn mixture_moments(weights: &[f64], means: &[f64], precisions: &[f64]) -> (f64, f64) {
    let m: f64 = weights.iter().zip(means).map(|(w, mu)| w * mu).sum();
    let second: f64 = weights
        .iter()
        .zip(means)
        .zip(precisions)
        .map(|((w, mu), phi)| w * (1.0 / phi + mu * mu))
        .sum();
    (m, (second - m * m).max(0.0).sqrt())
}

/// Highest-density intervals of the posterior mixture mean and volatility
/// over the recorded post-burn-in sweeps; `None` when too few sweeps were
/// recorded.
fn posterior_hpd(run: &GibbsRun) -> CliResult<Option<HpdStats>> {
    let burn_in = run.rpm.meta.burn_in;
    let mut means = Vec::new();
    let mut sds = Vec::new();
    for row in &run.traces.rows {
        if row.iteration <= burn_in {
            continue;
        }
        let (m, s) = mixture_moments(&row.weights, &row.means, &row.precisions);
        means.push(m);
        sds.push(s);
    }
    if means.len() < MIN_HPD_SWEEPS {
        return Ok(None);
    }
    let mean_iv = hpd_interval(&means, HPD_CREDIBILITY)?;
    let sd_iv = hpd_interval(&sds, HPD_CREDIBILITY)?;
    Ok(Some(HpdStats {
        mean: [mean_iv.0, mean_iv.1],
        sd: [sd_iv.0, sd_iv.1],
    }))
}

/// Density benchmark grids of one asset: the kernel estimate of the data,
/// the mixture predictive, and a single-normal fit, all on the kernel
/// estimate's grid.
fn density_grids(
    data: &[f64],
    rpm: &RpmEstimate,
) -> CliResult<(DensityGrid, DensityGrid, DensityGrid)> {
    let kde_fit = kde(data, None)?;
    let xs = kde_fit.grid.xs.clone();
    let rpm_grid = DensityGrid::new(
        xs.clone(),
        xs.iter().map(|&x| rpm.density(x)).collect(),
        DensitySource::Rpm,
    )?;
    let m = mean(data)?;
    let sd = variance(data)?.sqrt().max(1e-9);
    let bs_grid = DensityGrid::new(
        xs.clone(),
        xs.iter().map(|&x| std_norm_pdf((x - m) / sd) / sd).collect(),
        DensitySource::Bs,
    )?;
    Ok((kde_fit.grid, rpm_grid, bs_grid))
}

/// Ingests all configured files, fits the mixture model of every asset
/// (chains run concurrently), and writes `returns.csv`, `rpm_<asset>.json`,
/// `traces_<asset>.csv`, and `density_<asset>.csv`.
pub fn fit_stage(cfg: &RunConfig) -> CliResult<FitOutput> {
    cfg.require_inputs()?;
    let out = &cfg.out_dir;
    fs::create_dir_all(out)?;

    let mut series = Vec::new();
    let mut ingest = BTreeMap::new();
    for input in &cfg.inputs {
        let file = ingest_csv(input)?;
        for s in &file.series {
            if ingest.contains_key(&s.asset_id) {
                return Err(CliError::Input(format!(
                    "duplicate asset name {:?} across input files; rename the column",
                    s.asset_id
                )));
            }
            ingest.insert(
                s.asset_id.clone(),
                IngestCounts {
                    price_rows: s.len(),
                    returns: s.len().saturating_sub(1),
                    dropped_missing: file.dropped_missing,
                    dropped_unparseable: file.dropped_unparseable,
                },
            );
        }
        series.extend(file.series);
    }

    let returns: Vec<_> = series.iter().map(compute_log_returns).collect();
    let panel = ReturnPanel::from_series(&returns)?;

    let mut jobs = Vec::new();
    for (j, name) in panel.assets.iter().enumerate() {
        let data = panel.column(j);
        let dp = dp_config_for(cfg, name, &data, j)?;
        jobs.push((name.clone(), data, dp));
    }
    // Chains are independent; run them on their own threads and join in
    // asset order before anything downstream.
    let runs: Vec<Result<GibbsRun, dprisk_core::CoreError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|(_, data, dp)| scope.spawn(move || run_blocked_gibbs(data, dp)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("chain panicked")).collect()
    });

    write_panel_csv(&out.join("returns.csv"), &panel)?;

    let mut fits = Vec::new();
    for ((name, data, _), run) in jobs.into_iter().zip(runs) {
        let run = run.map_err(|e| match CliError::from(e) {
            CliError::Input(m) => CliError::Input(format!("asset {name}: {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("asset {name}: {m}")),
            CliError::NonConvergence(m) => CliError::NonConvergence(format!("asset {name}: {m}")),
        })?;
        let stem = sanitize_asset(&name);
        write_json(&out.join(format!("rpm_{stem}.json")), &run.rpm)?;
        let mut trace_bytes = Vec::new();
        run.traces
            .write_csv(&mut trace_bytes)
            .map_err(|e| CliError::Input(format!("asset {name}: trace write: {e}")))?;
        fs::write(out.join(format!("traces_{stem}.csv")), trace_bytes)?;

        let (kde_grid, rpm_grid, bs_grid) = density_grids(&data, &run.rpm)
            .map_err(|e| CliError::Input(format!("asset {name}: {e}")))?;
        write_density_csv(
            &out.join(format!("density_{stem}.csv")),
            &[&kde_grid, &rpm_grid, &bs_grid],
        )?;
        let msd = MsdStats {
            rpm_vs_kde: mean_square_deviation(&rpm_grid, &kde_grid)?,
            bs_vs_kde: mean_square_deviation(&bs_grid, &kde_grid)?,
        };
        let hpd = posterior_hpd(&run)?;
        fits.push(AssetFit { name, run, msd, hpd });
    }

    Ok(FitOutput { panel, fits, ingest })
}

/// Copies the fit stage's findings into the manifest.
pub fn record_fit(manifest: &mut Manifest, fit: &FitOutput) {
    manifest.assets = fit.panel.assets.clone();
    manifest.ingest = fit.ingest.clone();
    manifest.converged = fit
        .fits
        .iter()
        .map(|f| (f.name.clone(), f.run.rpm.meta.converged))
        .collect();
    manifest.stats.msd = fit
        .fits
        .iter()
        .map(|f| (f.name.clone(), f.msd.clone()))
        .collect();
    manifest.stats.hpd = fit
        .fits
        .iter()
        .filter_map(|f| f.hpd.clone().map(|h| (f.name.clone(), h)))
        .collect();
}

// ---------------------------------------------------------------------------
// Copula stage
// ---------------------------------------------------------------------------

/// Output of the copula stage.
pub struct CopulaOutput {
    pub model: CopulaModel,
    pub pca: PcaStats,
}

/// Fits the t-copula to the return panel, simulates the joint sample, and
/// writes `tau.json`, `sigma.json`, `joint_sample.csv`, and `pca.csv`.
pub fn copula_stage(
    cfg: &RunConfig,
    panel: &ReturnPanel,
    marginals: Vec<RpmEstimate>,
) -> CliResult<CopulaOutput> {
    let out = &cfg.out_dir;
    fs::create_dir_all(out)?;
    let model = fit_copula(panel, cfg.df, marginals)?;

    let tau = model
        .tau
        .as_ref()
        .expect("fit_copula records the concordance matrix");
    write_json(
        &out.join("tau.json"),
        &TauDoc {
            assets: tau.assets.clone(),
            values: matrix_rows(&tau.values),
        },
    )?;
    write_json(
        &out.join("sigma.json"),
        &SigmaDoc {
            assets: panel.assets.clone(),
            df: SigmaDoc::df_field(model.df),
            repaired: model.repaired,
            values: matrix_rows(&model.correlation),
        },
    )?;

    let sample = simulate_joint(&model, cfg.n_sims, sim_seed(cfg.seed))?;
    write_panel_csv(&out.join("joint_sample.csv"), &sample.panel)?;

    let projection = dprisk_core::copula::pca_projection(panel, &sample.panel)?;
    write_pca_csv(&out.join("pca.csv"), &projection.observed, &projection.simulated)?;
    let pca = PcaStats {
        observed_evr: projection.observed_evr,
        simulated_evr: projection.simulated_evr,
        reduced_rank: projection.reduced_rank,
    };
    Ok(CopulaOutput { model, pca })
}

/// Copies the copula stage's findings into the manifest.
pub fn record_copula(manifest: &mut Manifest, copula: &CopulaOutput) {
    manifest.stats.pca = Some(copula.pca.clone());
    manifest.stats.copula_repaired = Some(copula.model.repaired);
}

// ---------------------------------------------------------------------------
// Portfolio stage
// ---------------------------------------------------------------------------

/// Sample mean vector and covariance matrix (unbiased) of the panel.
fn sample_moments(panel: &ReturnPanel) -> CliResult<(Vec<f64>, DMatrix<f64>)> {
    let p = panel.n_assets();
    let n = panel.n_rows;
    if n < 2 {
        return Err(CliError::input(
            "mean-variance weights need at least two return rows",
        ));
    }
    let columns: Vec<Vec<f64>> = (0..p).map(|j| panel.column(j)).collect();
    let means: Vec<f64> = columns
        .iter()
        .map(|c| mean(c).map_err(CliError::from))
        .collect::<CliResult<_>>()?;
    let mut cov = DMatrix::zeros(p, p);
    for a in 0..p {
        for b in a..p {
            let s: f64 = (0..n)
                .map(|t| (columns[a][t] - means[a]) * (columns[b][t] - means[b]))
                .sum();
            let v = s / (n - 1) as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    Ok((means, cov))
}

/// Resolves the portfolio weights (equal, explicit, or mean-variance) and
/// writes `weights.json`.
pub fn portfolio_stage(cfg: &RunConfig, panel: &ReturnPanel) -> CliResult<Portfolio> {
    let out = &cfg.out_dir;
    fs::create_dir_all(out)?;
    let assets = panel.assets.clone();
    let (portfolio, long_only, repaired) = match &cfg.weights {
        WeightSpec::Equal => (Portfolio::equal_weight(assets)?, None, None),
        WeightSpec::Explicit(w) => {
            if w.len() != panel.n_assets() {
                return Err(CliError::Input(format!(
                    "{} weights given for {} assets",
                    w.len(),
                    panel.n_assets()
                )));
            }
            (Portfolio::normalized(assets, w.clone())?, None, None)
        }
        WeightSpec::MeanVariance { objective, long_only } => {
            let (means, cov) = sample_moments(panel)?;
            let solution = mean_variance_weights(&assets, &means, &cov, *objective, *long_only)?;
            (solution.portfolio, Some(*long_only), Some(solution.repaired))
        }
    };
    write_json(
        &out.join("weights.json"),
        &WeightsDoc {
            assets: portfolio.assets.clone(),
            weights: portfolio.weights.clone(),
            objective: cfg.weights.label().to_string(),
            long_only,
            repaired,
        },
    )?;
    Ok(portfolio)
}

// ---------------------------------------------------------------------------
// Risk stage
// ---------------------------------------------------------------------------

/// Runs the joint simulation and the distortion measures for two or more
/// assets and writes `risk_report.json` and `risk_report.txt`.
pub fn risk_stage_multi(
    cfg: &RunConfig,
    portfolio: &Portfolio,
    model: &CopulaModel,
) -> CliResult<RiskReport> {
    let out: PortfolioRiskOutput = portfolio_risk(
        portfolio,
        model,
        &cfg.gammas,
        cfg.wang_r,
        cfg.quad,
        cfg.n_sims,
        sim_seed(cfg.seed),
    )?;
    write_report(&cfg.out_dir, &out.report)?;
    Ok(out.report)
}

/// Single-asset risk: the marginal's model-implied measures next to the
/// simulated (weight-one) portfolio. Also writes `joint_sample.csv` with
/// the one simulated column.
pub fn risk_stage_single(
    cfg: &RunConfig,
    asset: &str,
    rpm: &RpmEstimate,
) -> CliResult<RiskReport> {
    let draws = simulate_marginal(rpm, cfg.n_sims, sim_seed(cfg.seed))?;
    let sample_panel = ReturnPanel::from_rows(vec![asset.to_string()], draws.clone())?;
    write_panel_csv(&cfg.out_dir.join("joint_sample.csv"), &sample_panel)?;

    let percent = |v: f64| 100.0 * v;
    let mut marginal_var = Vec::new();
    let mut marginal_esf = Vec::new();
    let mut port_var = Vec::new();
    let mut port_esf = Vec::new();
    let dist: &dyn LossDistribution = rpm;
    let empirical = EmpiricalDistribution::new(&draws)?;
    for &g in &cfg.gammas {
        marginal_var.push(vec![percent(var(dist, g)?)]);
        marginal_esf.push(vec![percent(esf(dist, g, cfg.quad)?)]);
        port_var.push(vec![percent(var(&empirical, g)?)]);
        port_esf.push(vec![percent(esf(&empirical, g, cfg.quad)?)]);
    }
    let report = RiskReport {
        convention: REPORT_CONVENTION.to_string(),
        gammas: cfg.gammas.clone(),
        wang_r: cfg.wang_r,
        blocks: vec![
            RiskBlock {
                source: "model marginals".into(),
                columns: vec![asset.to_string()],
                var_percent: marginal_var,
                esf_percent: marginal_esf,
                wang_percent: vec![percent(wang_measure(dist, cfg.wang_r, cfg.quad)?)],
            },
            RiskBlock {
                source: "simulated portfolio".into(),
                columns: vec!["portfolio".into()],
                var_percent: port_var,
                esf_percent: port_esf,
                wang_percent: vec![percent(wang_measure(&empirical, cfg.wang_r, cfg.quad)?)],
            },
        ],
    };
    write_report(&cfg.out_dir, &report)?;
    Ok(report)
}

/// Writes both report artifacts.
fn write_report(out: &Path, report: &RiskReport) -> CliResult<()> {
    fs::create_dir_all(out)?;
    write_json(&out.join("risk_report.json"), report)?;
    fs::write(out.join("risk_report.txt"), report.render_text())?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Artifact loaders for staged commands
// ---------------------------------------------------------------------------

/// Loads the return panel written by the fit stage.
pub fn load_panel(out: &Path) -> CliResult<ReturnPanel> {
    let path = out.join("returns.csv");
    if !path.exists() {
        return Err(CliError::Input(format!(
            "{} not found; run the fit stage first",
            path.display()
        )));
    }
    read_panel_csv(&path)
}

/// Loads and re-validates one fitted marginal.
pub fn load_rpm(out: &Path, asset: &str) -> CliResult<RpmEstimate> {
    let path = out.join(format!("rpm_{}.json", sanitize_asset(asset)));
    if !path.exists() {
        return Err(CliError::Input(format!(
            "{} not found; run the fit stage first",
            path.display()
        )));
    }
    let est: RpmEstimate = read_json(&path)?;
    // Re-impose the construction invariants on the deserialized values.
    let checked = RpmEstimate::from_components(
        est.weights.clone(),
        est.means.clone(),
        est.precisions.clone(),
    )
    .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(RpmEstimate { meta: est.meta, ..checked })
}

/// Loads all marginals in panel order.
pub fn load_marginals(out: &Path, assets: &[String]) -> CliResult<Vec<RpmEstimate>> {
    assets.iter().map(|a| load_rpm(out, a)).collect()
}

/// Loads the copula correlation document and rebuilds the model. The
/// concordance matrix is restored too, so the simulated panel keeps the
/// real asset names exactly as the pipeline flow produces them.
pub fn load_model(out: &Path, marginals: Vec<RpmEstimate>) -> CliResult<CopulaModel> {
    let path = out.join("sigma.json");
    if !path.exists() {
        return Err(CliError::Input(format!(
            "{} not found; run the copula stage first",
            path.display()
        )));
    }
    let doc: SigmaDoc = read_json(&path)?;
    let corr = rows_to_matrix(&doc.values)?;
    let mut model = CopulaModel::new(corr, doc.df_value(), marginals)?;
    model.repaired = doc.repaired;

    let tau_path = out.join("tau.json");
    if !tau_path.exists() {
        return Err(CliError::Input(format!(
            "{} not found; run the copula stage first",
            tau_path.display()
        )));
    }
    let tau: TauDoc = read_json(&tau_path)?;
    model.tau = Some(ConcordanceMatrix {
        assets: tau.assets,
        values: rows_to_matrix(&tau.values)?,
    });
    Ok(model)
}

/// Loads the portfolio written by the portfolio stage, or equal weights
/// when that stage has not run.
pub fn load_portfolio(out: &Path, assets: &[String]) -> CliResult<Portfolio> {
    let path = out.join("weights.json");
    if !path.exists() {
        return Ok(Portfolio::equal_weight(assets.to_vec())?);
    }
    let doc: WeightsDoc = read_json(&path)?;
    if doc.assets != assets {
        return Err(CliError::Input(format!(
            "{}: weights are for assets {:?}, panel has {:?}; re-run the portfolio stage",
            path.display(),
            doc.assets,
            assets
        )));
    }
    Ok(Portfolio::new(doc.assets, doc.weights)?)
}

/// Loads the risk report.
pub fn load_report(out: &Path) -> CliResult<RiskReport> {
    let path = out.join("risk_report.json");
    if !path.exists() {
        return Err(CliError::Input(format!(
            "{} not found; run the risk stage first",
            path.display()
        )));
    }
    read_json(&path)
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

/// Runs every stage in order, writes the manifest last, and maps sampler
/// non-convergence to a dedicated outcome after all artifacts exist. On a
/// stage failure the manifest records which stage failed.
pub fn run_pipeline(cfg: &RunConfig) -> CliResult<RiskReport> {
    fs::create_dir_all(&cfg.out_dir)?;
    let mut manifest = Manifest::new(cfg.seed);
    let result = pipeline_stages(cfg, &mut manifest);
    match result {
        Ok(report) => {
            let unconverged: Vec<String> = manifest
                .converged
                .iter()
                .filter(|(_, ok)| !**ok)
                .map(|(name, _)| name.clone())
                .collect();
            if unconverged.is_empty() {
                manifest.status = "success".into();
                manifest.save(&cfg.out_dir)?;
                Ok(report)
            } else {
                manifest.status = "non_convergence".into();
                manifest.save(&cfg.out_dir)?;
                Err(CliError::NonConvergence(format!(
                    "sampler did not stabilize for: {}; artifacts written and flagged \
                     in the manifest",
                    unconverged.join(", ")
                )))
            }
        }
        Err((stage, e)) => {
            manifest.status = "failed".into();
            manifest.failed_stage = Some(stage);
            // Keep the original error even if the manifest cannot be saved.
            let _ = manifest.save(&cfg.out_dir);
            Err(e)
        }
    }
}

/// The stage chain, tagging errors with the stage that raised them.
fn pipeline_stages(
    cfg: &RunConfig,
    manifest: &mut Manifest,
) -> Result<RiskReport, (String, CliError)> {
    let tag = |stage: &str| {
        let stage = stage.to_string();
        move |e: CliError| (stage, e)
    };

    let fit = fit_stage(cfg).map_err(tag("fit"))?;
    record_fit(manifest, &fit);

    let multi_asset = fit.panel.n_assets() >= 2;
    let model = if multi_asset {
        let copula = copula_stage(cfg, &fit.panel, fit.marginals()).map_err(tag("copula"))?;
        record_copula(manifest, &copula);
        Some(copula.model)
    } else {
        None
    };

    let portfolio = portfolio_stage(cfg, &fit.panel).map_err(tag("portfolio"))?;

    let report = match &model {
        Some(model) => risk_stage_multi(cfg, &portfolio, model).map_err(tag("risk"))?,
        None => {
            risk_stage_single(cfg, &fit.panel.assets[0], &fit.fits[0].run.rpm)
                .map_err(tag("risk"))?
        }
    };
    Ok(report)
}
