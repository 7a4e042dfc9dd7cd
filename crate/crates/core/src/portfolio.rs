//! Portfolio construction and aggregation: weight vectors with the sum-to-one
//! invariant, row-wise return aggregation, closed-form mean-variance weight
//! selection (with an optional long-only active-set variant), and a
//! simulation-backed portfolio risk report.

use crate::copula::{simulate_joint, CopulaModel, JointSample};
use crate::error::{CoreError, Result};
use crate::linalg::{require_symmetric, solve_spd};
use crate::market::ReturnPanel;
use crate::risk::{
    esf, var, wang_measure, EmpiricalDistribution, LossDistribution, RiskBlock, RiskReport,
    REPORT_CONVENTION,
};
use crate::stats::all_finite;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Tolerance on the sum-to-one weight invariant.
const WEIGHT_SUM_TOL: f64 = 1e-12;

/// A named weight vector summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio {
    /// Asset identifiers, aligned with `weights`.
    pub assets: Vec<String>,
    /// Portfolio weights; negative entries mean short positions.
    pub weights: Vec<f64>,
}

impl Portfolio {
    /// Builds a portfolio, enforcing dimension agreement, finiteness, and
    /// the sum-to-one invariant.
    pub fn new(assets: Vec<String>, weights: Vec<f64>) -> Result<Self> {
        if assets.is_empty() || assets.len() != weights.len() {
            return Err(CoreError::Dimension(format!(
                "{} assets against {} weights",
                assets.len(),
                weights.len()
            )));
        }
        if !all_finite(&weights) {
            return Err(CoreError::RejectedInput(
                "non-finite portfolio weight".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(CoreError::Domain(format!(
                "portfolio weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self { assets, weights })
    }

    /// Scales a raw weight vector to sum to one, then validates it. Already
    /// normalized input passes through unchanged, so this is idempotent.
    pub fn normalized(assets: Vec<String>, weights: Vec<f64>) -> Result<Self> {
        if !all_finite(&weights) {
            return Err(CoreError::RejectedInput(
                "non-finite portfolio weight".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if sum.abs() < 1e-9 {
            return Err(CoreError::Domain(format!(
                "weights sum to {sum}; cannot normalize"
            )));
        }
        let scaled = if (sum - 1.0).abs() <= WEIGHT_SUM_TOL {
            weights
        } else {
            weights.iter().map(|w| w / sum).collect()
        };
        Self::new(assets, scaled)
    }

    /// Equal weights `1/p` over the given assets.
    pub fn equal_weight(assets: Vec<String>) -> Result<Self> {
        let p = assets.len();
        if p == 0 {
            return Err(CoreError::Dimension("no assets for equal weights".into()));
        }
        Self::normalized(assets, vec![1.0 / p as f64; p])
    }
}

/// Row-wise weighted sums: one portfolio return per panel row.
pub fn portfolio_returns(portfolio: &Portfolio, panel: &ReturnPanel) -> Result<Vec<f64>> {
    let p = portfolio.weights.len();
    if panel.n_assets() != p {
        return Err(CoreError::Dimension(format!(
            "portfolio has {p} weights but the panel has {} assets",
            panel.n_assets()
        )));
    }
    Ok((0..panel.n_rows)
        .map(|i| {
            panel
                .row(i)
                .iter()
                .zip(&portfolio.weights)
                .map(|(r, w)| r * w)
                .sum()
        })
        .collect())
}

// ------------------------------------------------------------ mean-variance

/// Objective for mean-variance weight selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeanVarianceObjective {
    /// Minimize `w' S w` subject to the budget constraint.
    MinVariance,
    /// Minimize `w' S w - (1/lambda) m' w` subject to the budget constraint;
    /// larger `lambda` means more risk-averse.
    RiskAversion(f64),
    /// Minimize variance subject to the budget constraint and `m' w` equal
    /// to the given target.
    TargetReturn(f64),
}

/// Result of mean-variance selection.
#[derive(Debug, Clone)]
pub struct MeanVarianceSolution {
    /// The selected weights.
    pub portfolio: Portfolio,
    /// Whether the covariance matrix had to be projected to positive
    /// definite before solving.
    pub repaired: bool,
}

/// Floors the eigenvalues of a covariance matrix so the weight systems are
/// solvable; flags whether anything was actually clipped.
fn ensure_pd_covariance(cov: &DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    require_symmetric(cov)?;
    let eig = SymmetricEigen::new(cov.clone());
    let max_abs = eig
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()));
    if max_abs == 0.0 {
        return Err(CoreError::Domain("covariance matrix is zero".into()));
    }
    let floor = 1e-10 * max_abs;
    if eig.eigenvalues.iter().all(|&v| v >= floor) {
        return Ok((cov.clone(), false));
    }
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < floor {
            *v = floor;
        }
    }
    let q = eig.eigenvectors;
    let rebuilt = &q * DMatrix::from_diagonal(&vals) * q.transpose();
    let sym = (&rebuilt + rebuilt.transpose()) * 0.5;
    Ok((sym, true))
}

/// Equality-constrained closed forms. All three objectives reduce to linear
/// systems in `S^{-1} 1` and `S^{-1} m` via the KKT conditions.
fn solve_objective(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    objective: &MeanVarianceObjective,
) -> Result<DVector<f64>> {
    let p = cov.nrows();
    let ones = DVector::from_element(p, 1.0);
    let b = solve_spd(cov, &ones)?;
    let sum_b = ones.dot(&b);
    if !sum_b.is_finite() || sum_b.abs() < 1e-14 {
        return Err(CoreError::NotPositiveDefinite(
            "covariance too ill-conditioned for weight selection".into(),
        ));
    }
    match objective {
        MeanVarianceObjective::MinVariance => Ok(&b / sum_b),
        MeanVarianceObjective::RiskAversion(lambda) => {
            if !(lambda.is_finite() && *lambda > 0.0) {
                return Err(CoreError::Domain(format!(
                    "risk aversion must be positive and finite, got {lambda}"
                )));
            }
            let a = solve_spd(cov, mean)?;
            let sum_a = ones.dot(&a);
            let shadow = (1.0 - sum_a / (2.0 * lambda)) / sum_b;
            Ok(a / (2.0 * lambda) + b * shadow)
        }
        MeanVarianceObjective::TargetReturn(m) => {
            if !m.is_finite() {
                return Err(CoreError::Domain(format!(
                    "target return must be finite, got {m}"
                )));
            }
            let a = solve_spd(cov, mean)?;
            let big_a = ones.dot(&b);
            let big_b = ones.dot(&a);
            let big_c = mean.dot(&a);
            let delta = big_a * big_c - big_b * big_b;
            if delta.abs() <= 1e-12 * (1.0 + big_a.abs() * big_c.abs()) {
                // Degenerate frontier: expected returns are collinear with
                // the unit vector, so only one return level is attainable.
                let attainable = big_b / big_a;
                if (m - attainable).abs() <= 1e-9 * (1.0 + m.abs()) {
                    return Ok(&b / sum_b);
                }
                return Err(CoreError::Domain(format!(
                    "target return {m} unattainable: all portfolios on the degenerate frontier return {attainable}"
                )));
            }
            let l1 = (big_c - m * big_b) / delta;
            let l2 = (m * big_a - big_b) / delta;
            Ok(b * l1 + a * l2)
        }
    }
}

/// Active-set iteration for the long-only constraint: solve the equality
/// problem on the free set, drop the most negative weight, repeat. Each
/// round removes one asset, so it terminates in at most `p` rounds.
fn solve_long_only(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    objective: &MeanVarianceObjective,
) -> Result<Vec<f64>> {
    let p = cov.nrows();
    let mut free: Vec<usize> = (0..p).collect();
    loop {
        let w_free = if free.len() == 1 {
            if let MeanVarianceObjective::TargetReturn(m) = objective {
                let mu = mean[free[0]];
                if (mu - m).abs() > 1e-9 * (1.0 + m.abs()) {
                    return Err(CoreError::Domain(format!(
                        "target return {m} unattainable with long-only weights"
                    )));
                }
            }
            DVector::from_element(1, 1.0)
        } else {
            let k = free.len();
            let sub_cov = DMatrix::from_fn(k, k, |i, j| cov[(free[i], free[j])]);
            let sub_mean = DVector::from_iterator(k, free.iter().map(|&j| mean[j]));
            solve_objective(&sub_mean, &sub_cov, objective)?
        };
        if w_free.iter().all(|&v| v >= -1e-12) {
            let mut full = vec![0.0; p];
            for (slot, &j) in free.iter().enumerate() {
                full[j] = w_free[slot].max(0.0);
            }
            return Ok(full);
        }
        let worst = (0..w_free.len())
            .min_by(|&a, &b| w_free[a].total_cmp(&w_free[b]))
            .unwrap();
        free.remove(worst);
    }
}

/// Selects portfolio weights by the requested mean-variance objective.
/// A covariance matrix that is not positive definite is repaired by
/// eigenvalue flooring and the repair is flagged in the result.
pub fn mean_variance_weights(
    assets: &[String],
    mean: &[f64],
    cov: &DMatrix<f64>,
    objective: MeanVarianceObjective,
    long_only: bool,
) -> Result<MeanVarianceSolution> {
    let p = assets.len();
    if p == 0 {
        return Err(CoreError::Dimension("no assets".into()));
    }
    if mean.len() != p || cov.nrows() != p || cov.ncols() != p {
        return Err(CoreError::Dimension(format!(
            "{p} assets, {} means, {}x{} covariance",
            mean.len(),
            cov.nrows(),
            cov.ncols()
        )));
    }
    if !all_finite(mean) || !cov.iter().all(|v| v.is_finite()) {
        return Err(CoreError::RejectedInput(
            "non-finite mean or covariance entry".into(),
        ));
    }
    let (cov_pd, repaired) = ensure_pd_covariance(cov)?;
    let mean_vec = DVector::from_column_slice(mean);
    let raw = if long_only {
        solve_long_only(&mean_vec, &cov_pd, &objective)?
    } else {
        solve_objective(&mean_vec, &cov_pd, &objective)?
            .iter()
            .copied()
            .collect()
    };
    let portfolio = Portfolio::normalized(assets.to_vec(), raw)?;
    Ok(MeanVarianceSolution { portfolio, repaired })
}

// ------------------------------------------------------------------- risk

/// Risk report plus the joint sample it was computed from, returned so the
/// (possibly expensive) simulation can be reused downstream.
#[derive(Debug, Clone)]
pub struct PortfolioRiskOutput {
    /// Per-asset (model-implied) and portfolio (simulated) measures.
    pub report: RiskReport,
    /// The simulated joint panel behind the portfolio block.
    pub sample: JointSample,
}

/// Simulates the copula, aggregates rows into portfolio returns, and reports
/// VaR/ESF/Wang (in percent) for the simulated portfolio next to the
/// model-implied values of each marginal.
pub fn portfolio_risk(
    portfolio: &Portfolio,
    model: &CopulaModel,
    gammas: &[f64],
    wang_r: f64,
    quad: usize,
    n_sims: usize,
    seed: u64,
) -> Result<PortfolioRiskOutput> {
    let p = model.correlation.nrows();
    if portfolio.weights.len() != p {
        return Err(CoreError::Dimension(format!(
            "portfolio has {} weights but the copula is {p}-dimensional",
            portfolio.weights.len()
        )));
    }
    if gammas.is_empty() {
        return Err(CoreError::Domain("at least one loss level is required".into()));
    }
    for &g in gammas {
        if !(g > 0.0 && g < 1.0) {
            return Err(CoreError::Domain(format!(
                "loss level must lie in (0, 1), got {g}"
            )));
        }
    }
    if n_sims < 2 {
        return Err(CoreError::InsufficientData(
            "portfolio risk needs at least two simulated rows".into(),
        ));
    }

    let sample = simulate_joint(model, n_sims, seed)?;
    let rets = portfolio_returns(portfolio, &sample.panel)?;
    let empirical = EmpiricalDistribution::new(&rets)?;

    let n_levels = gammas.len();
    let mut marginal_var = vec![vec![0.0; p]; n_levels];
    let mut marginal_esf = vec![vec![0.0; p]; n_levels];
    let mut marginal_wang = vec![0.0; p];
    for j in 0..p {
        let dist: &dyn LossDistribution = &model.marginals[j];
        for (gi, &g) in gammas.iter().enumerate() {
            marginal_var[gi][j] = 100.0 * var(dist, g)?;
            marginal_esf[gi][j] = 100.0 * esf(dist, g, quad)?;
        }
        marginal_wang[j] = 100.0 * wang_measure(dist, wang_r, quad)?;
    }

    let mut port_var = vec![vec![0.0; 1]; n_levels];
    let mut port_esf = vec![vec![0.0; 1]; n_levels];
    for (gi, &g) in gammas.iter().enumerate() {
        port_var[gi][0] = 100.0 * var(&empirical, g)?;
        port_esf[gi][0] = 100.0 * esf(&empirical, g, quad)?;
    }
    let port_wang = vec![100.0 * wang_measure(&empirical, wang_r, quad)?];

    let report = RiskReport {
        convention: REPORT_CONVENTION.to_string(),
        gammas: gammas.to_vec(),
        wang_r,
        blocks: vec![
            RiskBlock {
                source: "model marginals".into(),
                columns: sample.panel.assets.clone(),
                var_percent: marginal_var,
                esf_percent: marginal_esf,
                wang_percent: marginal_wang,
            },
            RiskBlock {
                source: "simulated portfolio".into(),
                columns: vec!["portfolio".into()],
                var_percent: port_var,
                esf_percent: port_esf,
                wang_percent: port_wang,
            },
        ],
    };
    Ok(PortfolioRiskOutput { report, sample })
}
