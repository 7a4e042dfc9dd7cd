//! Run configuration: a TOML file provides defaults, command-line flags
//! override the file, and built-in defaults fill the rest. One root seed
//! drives every random stage.

use crate::error::{CliError, CliResult};
use dprisk_core::dpmix::DpConfig;
use dprisk_core::portfolio::MeanVarianceObjective;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Default tail levels of the risk report.
pub const DEFAULT_GAMMAS: [f64; 2] = [0.01, 0.05];
/// Default Wang-transform load.
pub const DEFAULT_WANG_R: f64 = 0.5;
/// Default quadrature budget for the distortion integrals.
pub const DEFAULT_QUAD: usize = 4096;
/// Default joint-simulation sample size.
pub const DEFAULT_N_SIMS: usize = 100_000;
/// Default root seed.
pub const DEFAULT_SEED: u64 = 42;
/// Default t-copula degrees of freedom.
pub const DEFAULT_DF: f64 = 10.0;
/// Default output directory.
pub const DEFAULT_OUT_DIR: &str = "dprisk_out";
/// Smallest accepted joint-simulation sample size.
pub const MIN_N_SIMS: usize = 1000;

/// One input file and the columns to read from it.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InputFile {
    /// CSV path.
    pub path: PathBuf,
    /// Header name of the date column; omitted means the rows carry no
    /// date and are indexed by position.
    #[serde(default)]
    pub date_column: Option<String>,
    /// Price columns to ingest; omitted means every non-date column.
    #[serde(default)]
    pub price_columns: Option<Vec<String>>,
}

/// Optional overrides of the data-driven sampler defaults. Every field
/// mirrors the corresponding sampler parameter; the chain seed is always
/// derived from the root seed and cannot be set here.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DpOverrides {
    pub a_alpha: Option<f64>,
    pub b_alpha: Option<f64>,
    pub mu0: Option<f64>,
    pub kappa0: Option<f64>,
    pub nu0: Option<f64>,
    pub sigma0_sq: Option<f64>,
    pub epsilon: Option<f64>,
    pub truncation: Option<usize>,
    pub max_iter: Option<usize>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub stab_window: Option<usize>,
    pub stab_tol: Option<f64>,
}

impl DpOverrides {
    /// Applies the set fields on top of `config`.
    pub fn apply(&self, config: &mut DpConfig) {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { config.$field = v; })*
            };
        }
        set!(
            a_alpha, b_alpha, mu0, kappa0, nu0, sigma0_sq, epsilon, truncation, max_iter,
            burn_in, thin, stab_window, stab_tol
        );
    }

    /// True when no field is set.
    pub fn is_empty(&self) -> bool {
        *self == DpOverrides::default()
    }
}

/// How portfolio weights are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightSpec {
    /// Equal weights over all ingested assets.
    Equal,
    /// Explicit weights in asset order; normalized to sum to one.
    Explicit(Vec<f64>),
    /// Mean-variance weights from the sample moments of the return panel.
    MeanVariance {
        objective: MeanVarianceObjective,
        long_only: bool,
    },
}

impl WeightSpec {
    /// Stable label written to the weights artifact.
    pub fn label(&self) -> &'static str {
        match self {
            WeightSpec::Equal => "equal",
            WeightSpec::Explicit(_) => "explicit",
            WeightSpec::MeanVariance { objective, .. } => match objective {
                MeanVarianceObjective::MinVariance => "min-variance",
                MeanVarianceObjective::RiskAversion(_) => "risk-aversion",
                MeanVarianceObjective::TargetReturn(_) => "target-return",
            },
        }
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub inputs: Vec<InputFile>,
    pub dp_shared: DpOverrides,
    pub dp_overrides: BTreeMap<String, DpOverrides>,
    pub df: f64,
    pub weights: WeightSpec,
    pub gammas: Vec<f64>,
    pub wang_r: f64,
    pub quad: usize,
    pub n_sims: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            dp_shared: DpOverrides::default(),
            dp_overrides: BTreeMap::new(),
            df: DEFAULT_DF,
            weights: WeightSpec::Equal,
            gammas: DEFAULT_GAMMAS.to_vec(),
            wang_r: DEFAULT_WANG_R,
            quad: DEFAULT_QUAD,
            n_sims: DEFAULT_N_SIMS,
            seed: DEFAULT_SEED,
            out_dir: PathBuf::from(DEFAULT_OUT_DIR),
        }
    }
}

impl RunConfig {
    /// Checks the invariants that do not need the data: tail levels in
    /// (0, 1), a sane simulation budget, and a usable copula df.
    pub fn validate(&self) -> CliResult<()> {
        if self.gammas.is_empty() {
            return Err(CliError::input("at least one tail level is required"));
        }
        for &g in &self.gammas {
            if !(g.is_finite() && g > 0.0 && g < 1.0) {
                return Err(CliError::Input(format!(
                    "tail level must lie in (0, 1), got {g}"
                )));
            }
        }
        if !self.wang_r.is_finite() || self.wang_r < 0.0 {
            return Err(CliError::Input(format!(
                "wang_r must be finite and nonnegative, got {}",
                self.wang_r
            )));
        }
        if self.quad < 64 {
            return Err(CliError::Input(format!(
                "quadrature budget must be at least 64, got {}",
                self.quad
            )));
        }
        if self.n_sims < MIN_N_SIMS {
            return Err(CliError::Input(format!(
                "n_sims must be at least {MIN_N_SIMS}, got {}",
                self.n_sims
            )));
        }
        if self.df.is_nan() || self.df <= 2.0 {
            return Err(CliError::Input(format!(
                "copula df must exceed 2 (infinity allowed), got {}",
                self.df
            )));
        }
        if let WeightSpec::Explicit(w) = &self.weights {
            if w.is_empty() || w.iter().any(|v| !v.is_finite()) {
                return Err(CliError::input(
                    "explicit weights must be a nonempty list of finite numbers",
                ));
            }
        }
        if let WeightSpec::MeanVariance { objective, .. } = &self.weights {
            match objective {
                MeanVarianceObjective::RiskAversion(l) if !(l.is_finite() && *l > 0.0) => {
                    return Err(CliError::Input(format!(
                        "risk-aversion lambda must be positive and finite, got {l}"
                    )));
                }
                MeanVarianceObjective::TargetReturn(m) if !m.is_finite() => {
                    return Err(CliError::Input(format!(
                        "target return must be finite, got {m}"
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Invariants that only data-driven commands need.
    pub fn require_inputs(&self) -> CliResult<()> {
        if self.inputs.is_empty() {
            return Err(CliError::input(
                "no input files configured; pass --input or set [input] files in the config",
            ));
        }
        for f in &self.inputs {
            if !f.path.exists() {
                return Err(CliError::Input(format!(
                    "input file not found: {}",
                    f.path.display()
                )));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// TOML file schema
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    input: Option<InputSection>,
    dp: Option<DpSection>,
    copula: Option<CopulaSection>,
    portfolio: Option<PortfolioSection>,
    risk: Option<RiskSection>,
    sim: Option<SimSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InputSection {
    files: Vec<InputFile>,
}

// `flatten` captures the shared sampler overrides; serde cannot combine it
// with `deny_unknown_fields`, so unknown keys under [dp] are ignored while
// the per-asset override tables still reject typos.
#[derive(Debug, Deserialize)]
struct DpSection {
    #[serde(flatten)]
    shared: DpOverrides,
    #[serde(default)]
    overrides: BTreeMap<String, DpOverrides>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CopulaSection {
    df: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PortfolioSection {
    weights: Option<Vec<f64>>,
    mean_variance: Option<MeanVarianceSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeanVarianceSection {
    objective: String,
    lambda: Option<f64>,
    target: Option<f64>,
    #[serde(default)]
    long_only: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RiskSection {
    gammas: Option<Vec<f64>>,
    wang_r: Option<f64>,
    quad: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimSection {
    n_sims: Option<usize>,
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
}

/// Builds a mean-variance objective from its config-file or flag notation.
pub fn parse_objective(
    name: &str,
    lambda: Option<f64>,
    target: Option<f64>,
) -> CliResult<MeanVarianceObjective> {
    match name {
        "min-variance" => Ok(MeanVarianceObjective::MinVariance),
        "risk-aversion" => {
            let l = lambda.ok_or_else(|| {
                CliError::input("objective \"risk-aversion\" needs a lambda value")
            })?;
            Ok(MeanVarianceObjective::RiskAversion(l))
        }
        "target-return" => {
            let m = target.ok_or_else(|| {
                CliError::input("objective \"target-return\" needs a target value")
            })?;
            Ok(MeanVarianceObjective::TargetReturn(m))
        }
        other => Err(CliError::Input(format!(
            "unknown objective {other:?}; expected \"min-variance\", \
             \"risk-aversion\", or \"target-return\""
        ))),
    }
}

/// Reads a TOML config file and lays it over the built-in defaults.
/// Relative input paths are resolved against the config file's directory.
pub fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::default();
    let Some(path) = path else {
        return Ok(cfg);
    };
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Input(format!("cannot read config {}: {e}", path.display()))
    })?;
    let file: FileConfig = toml::from_str(&text)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));

    if let Some(input) = file.input {
        cfg.inputs = input
            .files
            .into_iter()
            .map(|mut f| {
                if f.path.is_relative() {
                    f.path = base.join(&f.path);
                }
                f
            })
            .collect();
    }
    if let Some(dp) = file.dp {
        cfg.dp_shared = dp.shared;
        cfg.dp_overrides = dp.overrides;
    }
    if let Some(copula) = file.copula {
        if let Some(df) = copula.df {
            cfg.df = df;
        }
    }
    if let Some(p) = file.portfolio {
        match (p.weights, p.mean_variance) {
            (Some(_), Some(_)) => {
                return Err(CliError::input(
                    "set either portfolio weights or mean_variance, not both",
                ));
            }
            (Some(w), None) => cfg.weights = WeightSpec::Explicit(w),
            (None, Some(mv)) => {
                cfg.weights = WeightSpec::MeanVariance {
                    objective: parse_objective(&mv.objective, mv.lambda, mv.target)?,
                    long_only: mv.long_only,
                };
            }
            (None, None) => {}
        }
    }
    if let Some(r) = file.risk {
        if let Some(g) = r.gammas {
            cfg.gammas = g;
        }
        if let Some(w) = r.wang_r {
            cfg.wang_r = w;
        }
        if let Some(q) = r.quad {
            cfg.quad = q;
        }
    }
    if let Some(s) = file.sim {
        if let Some(n) = s.n_sims {
            cfg.n_sims = n;
        }
        if let Some(seed) = s.seed {
            cfg.seed = seed;
        }
        if let Some(dir) = s.out_dir {
            cfg.out_dir = if dir.is_relative() { base.join(dir) } else { dir };
        }
    }
    Ok(cfg)
}

/// Parses a comma-separated list of numbers, e.g. `0.4,0.6`.
pub fn parse_float_list(text: &str, what: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Input(format!("cannot parse {what} entry {t:?} as a number")))
        })
        .collect()
}
