//! Market data primitives and the mixture geometric Brownian motion.
//!
//! The continuous model for the cumulative log-return of one asset is
//!
//! ```text
//! r_t = mu * t + sum_i pi_i * sigma_i * B^i_t - (t/2) * sum_i pi_i * sigma_i^2
//! ```
//!
//! with independent Brownian motions `B^i` weighted by mixture weights
//! `pi_i`. Subtracting the deterministic trend `t * (mu - sum_i pi_i *
//! sigma_i^2 / 2)` leaves a martingale, which is the no-arbitrage property
//! checked by [`martingale_residuals`]: across simulated paths, every
//! per-step increment of the compensated process must average to zero
//! within Monte Carlo error.
//!
//! The module also owns the elementary data types: positive price series,
//! their log-return series, and aligned multi-asset return panels.

use crate::error::{CoreError, Result};
use crate::rng::substream;
use crate::stats::all_finite;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// An observed price history for one asset.
///
/// Prices are strictly positive and timestamps strictly increasing; both
/// vectors have the same length, at least two entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    /// Identifier used in reports and artifact names.
    pub asset_id: String,
    /// Observation times in days (only ordering and spacing matter).
    pub timestamps: Vec<f64>,
    /// Observed prices, same length as `timestamps`.
    pub prices: Vec<f64>,
}

impl PriceSeries {
    /// Validates and constructs a price series.
    pub fn new(asset_id: impl Into<String>, timestamps: Vec<f64>, prices: Vec<f64>) -> Result<Self> {
        let asset_id = asset_id.into();
        if timestamps.len() != prices.len() {
            return Err(CoreError::Dimension(format!(
                "asset {asset_id}: {} timestamps vs {} prices",
                timestamps.len(),
                prices.len()
            )));
        }
        if prices.len() < 2 {
            return Err(CoreError::InsufficientData(format!(
                "asset {asset_id}: need at least two prices to form a return"
            )));
        }
        if !all_finite(&timestamps) || !all_finite(&prices) {
            return Err(CoreError::RejectedInput(format!(
                "asset {asset_id}: non-finite timestamp or price"
            )));
        }
        if prices.iter().any(|&p| p <= 0.0) {
            return Err(CoreError::RejectedInput(format!(
                "asset {asset_id}: prices must be strictly positive"
            )));
        }
        if timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CoreError::RejectedInput(format!(
                "asset {asset_id}: timestamps must be strictly increasing"
            )));
        }
        Ok(Self { asset_id, timestamps, prices })
    }

    /// Number of observations.
    pub fn len(&self) -> usize {
        self.prices.len()
    }

    /// True when the series holds no observations (cannot happen for a
    /// validated series; provided for API completeness).
    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }
}

/// One-period log-returns of a [`PriceSeries`].
///
/// Holds one fewer entry than the prices that produced it; timestamps are
/// those of the later observation in each consecutive pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogReturnSeries {
    /// Identifier inherited from the price series.
    pub asset_id: String,
    /// Time of the later observation of each pair.
    pub timestamps: Vec<f64>,
    /// Log-returns `ln(P_{k+1} / P_k)`.
    pub returns: Vec<f64>,
}

impl LogReturnSeries {
    /// Number of returns.
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    /// True when no returns are present.
    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }
}

/// Computes one-period log-returns `ln(P_{k+1}/P_k)` of a validated series.
///
/// The output has exactly `series.len() - 1` entries; reconstructing prices
/// by exponentiating cumulative sums reproduces the input to floating-point
/// accuracy.
pub fn compute_log_returns(series: &PriceSeries) -> LogReturnSeries {
    let returns: Vec<f64> = series
        .prices
        .windows(2)
        .map(|w| (w[1] / w[0]).ln())
        .collect();
    LogReturnSeries {
        asset_id: series.asset_id.clone(),
        timestamps: series.timestamps[1..].to_vec(),
        returns,
    }
}

/// An aligned multi-asset return matrix: one column per asset, one row per
/// date, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnPanel {
    /// Column identifiers.
    pub assets: Vec<String>,
    /// Row-major values; length is `n_rows * assets.len()`.
    pub values: Vec<f64>,
    /// Number of rows.
    pub n_rows: usize,
}

impl ReturnPanel {
    /// Builds a panel from per-asset return series that must all share the
    /// same length (rows are assumed date-aligned by the caller).
    pub fn from_series(series: &[LogReturnSeries]) -> Result<Self> {
        if series.is_empty() {
            return Err(CoreError::InsufficientData("panel with no assets".into()));
        }
        let n = series[0].len();
        if let Some(bad) = series.iter().find(|s| s.len() != n) {
            return Err(CoreError::Dimension(format!(
                "asset {} has {} returns, expected {}",
                bad.asset_id,
                bad.len(),
                n
            )));
        }
        if n == 0 {
            return Err(CoreError::InsufficientData("panel with zero rows".into()));
        }
        let assets: Vec<String> = series.iter().map(|s| s.asset_id.clone()).collect();
        let p = assets.len();
        let mut values = vec![0.0; n * p];
        for (j, s) in series.iter().enumerate() {
            for (i, &r) in s.returns.iter().enumerate() {
                values[i * p + j] = r;
            }
        }
        Ok(Self { assets, values, n_rows: n })
    }

    /// Builds a panel from a row-major value vector.
    pub fn from_rows(assets: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let p = assets.len();
        if p == 0 {
            return Err(CoreError::Dimension("panel needs at least one asset".into()));
        }
        if values.is_empty() || !values.len().is_multiple_of(p) {
            return Err(CoreError::Dimension(format!(
                "value count {} is not a positive multiple of asset count {p}",
                values.len()
            )));
        }
        if !all_finite(&values) {
            return Err(CoreError::RejectedInput("non-finite panel entry".into()));
        }
        let n_rows = values.len() / p;
        Ok(Self { assets, values, n_rows })
    }

    /// Number of assets (columns).
    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    /// One row as a slice.
    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_assets();
        &self.values[i * p..(i + 1) * p]
    }

    /// Copies one column out of the panel.
    pub fn column(&self, j: usize) -> Vec<f64> {
        let p = self.n_assets();
        (0..self.n_rows).map(|i| self.values[i * p + j]).collect()
    }
}

/// Parameters of the mixture geometric Brownian motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureGbmParams {
    /// Drift of the price exponent.
    pub mu: f64,
    /// Mixture weights, a probability vector.
    pub weights: Vec<f64>,
    /// Per-component volatilities, non-negative (zero gives the
    /// deterministic trend line, useful for testing).
    pub sigmas: Vec<f64>,
}

impl MixtureGbmParams {
    /// Tolerance on the weight simplex constraint.
    const SIMPLEX_TOL: f64 = 1e-12;

    /// Validates and constructs the parameter set.
    pub fn new(mu: f64, weights: Vec<f64>, sigmas: Vec<f64>) -> Result<Self> {
        if weights.len() != sigmas.len() {
            return Err(CoreError::Dimension(format!(
                "{} weights vs {} volatilities",
                weights.len(),
                sigmas.len()
            )));
        }
        if weights.is_empty() {
            return Err(CoreError::Dimension("mixture needs at least one component".into()));
        }
        if !all_finite(&weights) || !all_finite(&sigmas) || !mu.is_finite() {
            return Err(CoreError::RejectedInput("non-finite mixture parameter".into()));
        }
        if weights.iter().any(|&w| !(0.0..=1.0).contains(&w)) {
            return Err(CoreError::RejectedInput("weights must lie in [0, 1]".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > Self::SIMPLEX_TOL {
            return Err(CoreError::RejectedInput(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        if sigmas.iter().any(|&s| s < 0.0) {
            return Err(CoreError::RejectedInput("volatilities must be non-negative".into()));
        }
        Ok(Self { mu, weights, sigmas })
    }

    /// Number of mixture components.
    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    /// `sum_i pi_i * sigma_i^2`, the variance-style volatility aggregate
    /// entering the drift compensator.
    pub fn weighted_sigma_sq(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.sigmas)
            .map(|(&w, &s)| w * s * s)
            .sum()
    }

    /// `sum_i pi_i^2 * sigma_i^2`, the per-unit-time variance of the
    /// weighted Brownian sum (weights enter squared because the motions are
    /// independent).
    pub fn diffusion_variance(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.sigmas)
            .map(|(&w, &s)| w * w * s * s)
            .sum()
    }

    /// The compensated drift `mu - weighted_sigma_sq() / 2`: the slope of
    /// the deterministic trend whose removal leaves a martingale.
    pub fn compensated_drift(&self) -> f64 {
        self.mu - 0.5 * self.weighted_sigma_sq()
    }
}

/// A bundle of simulated cumulative log-return paths on a regular grid.
///
/// Row `i` holds path `i` at times `0, dt, ..., horizon * dt`; every path
/// starts at exactly zero.
#[derive(Debug, Clone)]
pub struct SimulatedPaths {
    /// Number of steps after time zero.
    pub horizon: usize,
    /// Number of simulated paths.
    pub n_paths: usize,
    /// Grid spacing in time units.
    pub dt: f64,
    /// Root seed the paths were drawn from.
    pub seed: u64,
    /// Number of mixture components of the generating parameters.
    pub n_components: usize,
    /// Row-major values, `n_paths` rows of `horizon + 1` entries.
    values: Vec<f64>,
}

impl SimulatedPaths {
    /// Path `i` as a slice of length `horizon + 1`.
    pub fn path(&self, i: usize) -> &[f64] {
        let w = self.horizon + 1;
        &self.values[i * w..(i + 1) * w]
    }

    /// Iterator over the value of every path at step `k`.
    pub fn at_step(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        let w = self.horizon + 1;
        self.values.iter().skip(k).step_by(w).copied()
    }
}

/// Per-step summary of the compensated increments across paths.
#[derive(Debug, Clone, Serialize)]
pub struct StepResidual {
    /// Time of the right endpoint of the step.
    pub t: f64,
    /// Cross-path mean of the compensated increment ending at `t`.
    pub mean: f64,
    /// Standard error of that mean.
    pub std_error: f64,
}

impl StepResidual {
    /// True when the mean lies within `k` standard errors of zero. A zero
    /// standard error (deterministic paths) requires an exactly zero mean.
    pub fn within(&self, k: f64) -> bool {
        self.mean.abs() <= k * self.std_error
    }
}

/// Simulates `n_paths` mixture-GBM log-return paths of `horizon` steps of
/// width `dt`.
///
/// Each path uses its own counter-based substream of `seed`, so any subset
/// of paths is reproducible independent of the others. The deterministic
/// trend is evaluated in closed form at each grid time (not accumulated),
/// which keeps the zero-volatility case exactly on the line
/// `r_t = compensated_drift * t`.
pub fn simulate_mixture_gbm(
    params: &MixtureGbmParams,
    horizon: usize,
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<SimulatedPaths> {
    if horizon == 0 || n_paths == 0 {
        return Err(CoreError::Domain(
            "horizon and path count must be positive".into(),
        ));
    }
    if !dt.is_finite() || dt <= 0.0 {
        return Err(CoreError::Domain(format!("step width must be positive, got {dt}")));
    }
    let drift = params.compensated_drift();
    let sqrt_dt = dt.sqrt();
    let scale: Vec<f64> = params
        .weights
        .iter()
        .zip(&params.sigmas)
        .map(|(&w, &s)| w * s * sqrt_dt)
        .collect();
    let w = horizon + 1;
    let mut values = vec![0.0; n_paths * w];
    for i in 0..n_paths {
        let mut rng = substream(seed, i as u64);
        let mut diffusion = 0.0;
        let row = &mut values[i * w..(i + 1) * w];
        for (k, slot) in row.iter_mut().enumerate().skip(1) {
            for &sc in &scale {
                let z: f64 = rng.sample(StandardNormal);
                diffusion += sc * z;
            }
            *slot = drift * (k as f64 * dt) + diffusion;
        }
    }
    Ok(SimulatedPaths {
        horizon,
        n_paths,
        dt,
        seed,
        n_components: params.n_components(),
        values,
    })
}

/// Per-step martingale residuals of simulated paths.
///
/// Subtracts the deterministic trend `t * compensated_drift` from every
/// path and returns, for each step, the cross-path mean and standard error
/// of the increment of the compensated process. For paths truly generated
/// by `params`, every mean is zero in expectation.
pub fn martingale_residuals(
    paths: &SimulatedPaths,
    params: &MixtureGbmParams,
) -> Result<Vec<StepResidual>> {
    if params.n_components() != paths.n_components {
        return Err(CoreError::Dimension(format!(
            "paths were generated with {} components, parameters have {}",
            paths.n_components,
            params.n_components()
        )));
    }
    if paths.n_paths < 2 {
        return Err(CoreError::InsufficientData(
            "need at least two paths for a standard error".into(),
        ));
    }
    let drift = params.compensated_drift();
    let n = paths.n_paths as f64;
    let mut out = Vec::with_capacity(paths.horizon);
    for k in 1..=paths.horizon {
        let t_now = k as f64 * paths.dt;
        let t_prev = (k - 1) as f64 * paths.dt;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for i in 0..paths.n_paths {
            let row = paths.path(i);
            // Compensate with the same expression the simulator used so the
            // deterministic part cancels exactly.
            let d = (row[k] - drift * t_now) - (row[k - 1] - drift * t_prev);
            sum += d;
            sum_sq += d * d;
        }
        let mean = sum / n;
        let var = (sum_sq - n * mean * mean).max(0.0) / (n - 1.0);
        out.push(StepResidual {
            t: t_now,
            mean,
            std_error: (var / n).sqrt(),
        });
    }
    Ok(out)
}
