//! Cross-asset dependence: rank concordance (Kendall's tau with full tie
//! correction), an elliptical t-copula calibrated by tau inversion, joint
//! simulation through marginal quantile inversion, the Gaussian copula
//! log-density, and a two-component projection used to compare observed
//! and simulated panels.

use crate::dpmix::RpmEstimate;
use crate::error::{CoreError, Result};
use crate::linalg::{min_eigenvalue, nearest_pd_correlation, require_symmetric};
use crate::market::ReturnPanel;
use crate::rng::substream;
use crate::stats::{all_finite, mean, std_norm_quantile, student_t_cdf, variance};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use std::f64::consts::FRAC_PI_2;

/// Minimum number of panel rows accepted when fitting a copula.
const MIN_FIT_ROWS: usize = 10;

/// Degrees of freedom must exceed this for the tau-inversion map to apply.
const MIN_DF: f64 = 2.0;

/// Copula uniforms are clamped inside `[U_CLAMP, 1 - U_CLAMP]` before
/// marginal inversion so boundary draws stay invertible.
const U_CLAMP: f64 = 1e-15;

/// Grid size of the per-marginal quantile cache used in joint simulation.
const CACHE_POINTS: usize = 1025;

/// Eigenvalue threshold below which a correlation matrix is treated as
/// rank-deficient.
const RANK_TOL: f64 = 1e-10;

// --------------------------------------------------------------- concordance

/// Tie-corrected Kendall rank correlation (the tau-b variant) computed in
/// `O(n log n)` by sorting on the first coordinate and counting strict
/// inversions of the second with a bottom-up merge sort.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(CoreError::Dimension(format!(
            "concordance inputs have lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < 2 {
        return Err(CoreError::InsufficientData(
            "concordance needs at least two observations".into(),
        ));
    }
    if !all_finite(x) || !all_finite(y) {
        return Err(CoreError::RejectedInput(
            "non-finite values in concordance input".into(),
        ));
    }
    if x.iter().all(|v| *v == x[0]) {
        return Err(CoreError::ConstantColumn(
            "first concordance input is constant".into(),
        ));
    }
    if y.iter().all(|v| *v == y[0]) {
        return Err(CoreError::ConstantColumn(
            "second concordance input is constant".into(),
        ));
    }

    // Normalize negative zeros so `total_cmp` ordering agrees with `==`
    // equality; otherwise -0.0 and +0.0 split one tie group into two
    // separately sorted blocks and the inversion count drifts.
    let x: Vec<f64> = x.iter().map(|v| v + 0.0).collect();
    let y: Vec<f64> = y.iter().map(|v| v + 0.0).collect();

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));

    let pairs = |k: i64| k * (k - 1) / 2;
    let n0 = pairs(n as i64);

    // Ties in x (n1) and joint ties (n3), scanned over x-groups; within a
    // group the secondary sort key means equal y values are adjacent.
    let mut n1 = 0i64;
    let mut n3 = 0i64;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && x[idx[end]] == x[idx[start]] {
            end += 1;
        }
        n1 += pairs((end - start) as i64);
        let mut run_start = start;
        for k in start + 1..=end {
            if k == end || y[idx[k]] != y[idx[run_start]] {
                n3 += pairs((k - run_start) as i64);
                run_start = k;
            }
        }
        start = end;
    }

    // Ties in y (n2), scanned over the sorted y values.
    let mut ys: Vec<f64> = y.to_vec();
    ys.sort_by(f64::total_cmp);
    let mut n2 = 0i64;
    let mut run_start = 0;
    for k in 1..=n {
        if k == n || ys[k] != ys[run_start] {
            n2 += pairs((k - run_start) as i64);
            run_start = k;
        }
    }

    // Strict inversions of y in x-sorted order are exactly the strictly
    // discordant pairs: equal-x pairs are y-sorted, so they never invert.
    let mut seq: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let swaps = merge_count(&mut seq);

    let numerator = (n0 - n1 - n2 + n3) as f64 - 2.0 * swaps as f64;
    let denominator = (((n0 - n1) as f64) * ((n0 - n2) as f64)).sqrt();
    Ok(numerator / denominator)
}

/// Counts strict inversions while merge-sorting `seq` in place.
fn merge_count(seq: &mut [f64]) -> i64 {
    let n = seq.len();
    if n < 2 {
        return 0;
    }
    let mut buf = vec![0.0; n];
    let mut count = 0i64;
    let mut width = 1;
    while width < n {
        let mut lo = 0;
        while lo + width < n {
            let mid = lo + width;
            let hi = (mid + width).min(n);
            let (mut i, mut j, mut k) = (lo, mid, lo);
            while i < mid && j < hi {
                if seq[i] <= seq[j] {
                    buf[k] = seq[i];
                    i += 1;
                } else {
                    buf[k] = seq[j];
                    j += 1;
                    count += (mid - i) as i64;
                }
                k += 1;
            }
            buf[k..k + (mid - i)].copy_from_slice(&seq[i..mid]);
            let k2 = k + (mid - i);
            buf[k2..k2 + (hi - j)].copy_from_slice(&seq[j..hi]);
            seq[lo..hi].copy_from_slice(&buf[lo..hi]);
            lo = hi;
        }
        width *= 2;
    }
    count
}

/// Maps Kendall's tau to the elliptical-family correlation parameter,
/// `rho = sin(pi * tau / 2)`.
pub fn tau_to_correlation(tau: f64) -> f64 {
    (FRAC_PI_2 * tau).sin()
}

/// Pairwise Kendall-tau matrix over a return panel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcordanceMatrix {
    /// Column identifiers, in panel order.
    pub assets: Vec<String>,
    /// Symmetric tau matrix with unit diagonal.
    pub values: DMatrix<f64>,
}

/// Computes all pairwise tie-corrected Kendall taus of a panel.
pub fn concordance_matrix(panel: &ReturnPanel) -> Result<ConcordanceMatrix> {
    let p = panel.n_assets();
    if p < 2 {
        return Err(CoreError::Dimension(
            "concordance needs at least two assets".into(),
        ));
    }
    if panel.n_rows < 2 {
        return Err(CoreError::InsufficientData(
            "concordance needs at least two rows".into(),
        ));
    }
    let cols: Vec<Vec<f64>> = (0..p).map(|j| panel.column(j)).collect();
    for (j, col) in cols.iter().enumerate() {
        if !all_finite(col) {
            return Err(CoreError::RejectedInput(format!(
                "column {} contains non-finite values",
                panel.assets[j]
            )));
        }
        if col.iter().all(|v| *v == col[0]) {
            return Err(CoreError::ConstantColumn(format!(
                "column {} is constant; concordance is undefined",
                panel.assets[j]
            )));
        }
    }
    let mut values = DMatrix::identity(p, p);
    for i in 0..p {
        for j in i + 1..p {
            let tau = kendall_tau(&cols[i], &cols[j])?;
            values[(i, j)] = tau;
            values[(j, i)] = tau;
        }
    }
    Ok(ConcordanceMatrix {
        assets: panel.assets.clone(),
        values,
    })
}

// --------------------------------------------------------------------- model

/// Elliptical t-copula over mixture marginals.
#[derive(Debug, Clone)]
pub struct CopulaModel {
    /// Positive-definite correlation matrix with unit diagonal.
    pub correlation: DMatrix<f64>,
    /// Degrees of freedom; `> 2`, or infinite for the Gaussian limit.
    pub df: f64,
    /// Marginal return laws, one per column of the correlation matrix.
    pub marginals: Vec<RpmEstimate>,
    /// The concordance matrix a fitted model was calibrated from.
    pub tau: Option<ConcordanceMatrix>,
    /// Whether fitting had to project the correlation onto the
    /// positive-definite cone.
    pub repaired: bool,
}

fn validate_df(df: f64) -> Result<()> {
    if df.is_nan() || df <= MIN_DF {
        return Err(CoreError::Domain(format!(
            "degrees of freedom must exceed {MIN_DF} (or be infinite for the Gaussian limit), got {df}"
        )));
    }
    Ok(())
}

impl CopulaModel {
    /// Builds a model from explicit parameters, validating shape, the unit
    /// diagonal, positive definiteness, and the degrees of freedom.
    pub fn new(
        correlation: DMatrix<f64>,
        df: f64,
        marginals: Vec<RpmEstimate>,
    ) -> Result<Self> {
        validate_df(df)?;
        require_symmetric(&correlation)?;
        let p = correlation.nrows();
        if p < 2 {
            return Err(CoreError::Dimension(
                "copula needs at least two dimensions".into(),
            ));
        }
        if marginals.len() != p {
            return Err(CoreError::Dimension(format!(
                "{} marginals supplied for a {p}-dimensional correlation",
                marginals.len()
            )));
        }
        for i in 0..p {
            if (correlation[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(CoreError::Domain(
                    "correlation matrix must have a unit diagonal".into(),
                ));
            }
        }
        if min_eigenvalue(&correlation)? <= RANK_TOL {
            return Err(CoreError::NotPositiveDefinite(
                "correlation matrix is not positive definite".into(),
            ));
        }
        Ok(Self {
            correlation,
            df,
            marginals,
            tau: None,
            repaired: false,
        })
    }
}

/// Calibrates a t-copula to a return panel: pairwise tau, the sine map to
/// correlations, and an unconditional projection onto the positive-definite
/// correlation matrices (flagged when it actually changed something).
pub fn fit_copula(
    panel: &ReturnPanel,
    df: f64,
    marginals: Vec<RpmEstimate>,
) -> Result<CopulaModel> {
    validate_df(df)?;
    let p = panel.n_assets();
    if p < 2 {
        return Err(CoreError::Dimension(
            "copula fitting needs at least two assets".into(),
        ));
    }
    if panel.n_rows < MIN_FIT_ROWS {
        return Err(CoreError::InsufficientData(format!(
            "copula fitting needs at least {MIN_FIT_ROWS} rows, got {}",
            panel.n_rows
        )));
    }
    if marginals.len() != p {
        return Err(CoreError::Dimension(format!(
            "{} marginals supplied for a {p}-asset panel",
            marginals.len()
        )));
    }
    let tau = concordance_matrix(panel)?;
    let mut rho = DMatrix::identity(p, p);
    for i in 0..p {
        for j in i + 1..p {
            let r = tau_to_correlation(tau.values[(i, j)]);
            rho[(i, j)] = r;
            rho[(j, i)] = r;
        }
    }
    let (correlation, repaired) = nearest_pd_correlation(&rho)?;
    Ok(CopulaModel {
        correlation,
        df,
        marginals,
        tau: Some(tau),
        repaired,
    })
}

// ---------------------------------------------------------------- simulation

/// A simulated joint return panel together with the seed that produced it.
#[derive(Debug, Clone)]
pub struct JointSample {
    /// Simulated returns, one column per marginal.
    pub panel: ReturnPanel,
    /// Seed the sample was drawn from.
    pub seed: u64,
}

/// Piecewise-linear quantile cache over a mixture marginal: a uniform grid
/// of abscissae spanning all but `1e-9` of mass, inverted by bracketed
/// Newton steps with a bisection safeguard. Falls back to the marginal's
/// own quantile routine outside the grid or on slow convergence.
pub struct QuantileCache<'a> {
    rpm: &'a RpmEstimate,
    xs: Vec<f64>,
    ps: Vec<f64>,
}

impl<'a> QuantileCache<'a> {
    /// Builds the cache; fails only if the marginal's own quantile routine
    /// cannot bracket the grid endpoints.
    pub fn new(rpm: &'a RpmEstimate) -> Result<Self> {
        let lo = rpm.quantile(1e-9)?;
        let hi = rpm.quantile(1.0 - 1e-9)?;
        let step = (hi - lo) / (CACHE_POINTS - 1) as f64;
        let xs: Vec<f64> = (0..CACHE_POINTS).map(|k| lo + step * k as f64).collect();
        let ps = xs.iter().map(|&x| rpm.cdf(x)).collect();
        Ok(Self { rpm, xs, ps })
    }

    /// Quantile at `p`, accurate to a cdf residual of about `1e-12`.
    pub fn invert(&self, p: f64) -> Result<f64> {
        if p <= self.ps[0] || p >= *self.ps.last().unwrap() {
            return self.rpm.quantile(p);
        }
        let idx = self.ps.partition_point(|v| *v < p).clamp(1, CACHE_POINTS - 1);
        let (mut a, mut b) = (self.xs[idx - 1], self.xs[idx]);
        let (pa, pb) = (self.ps[idx - 1], self.ps[idx]);
        let mut x = if pb > pa {
            a + (b - a) * (p - pa) / (pb - pa)
        } else {
            0.5 * (a + b)
        };
        for _ in 0..16 {
            let f = self.rpm.cdf(x) - p;
            if f.abs() <= 1e-12 {
                return Ok(x);
            }
            if f > 0.0 {
                b = x;
            } else {
                a = x;
            }
            let d = self.rpm.density(x);
            let mut next = if d.is_finite() && d > 1e-300 {
                x - f / d
            } else {
                f64::NAN
            };
            // Newton may escape the bracket in density gaps; bisect instead.
            if !(next > a && next < b) {
                next = 0.5 * (a + b);
            }
            x = next;
        }
        if (self.rpm.cdf(x) - p).abs() <= 1e-9 {
            Ok(x)
        } else {
            self.rpm.quantile(p)
        }
    }
}

/// Prefixes an error message with the column it came from, keeping the kind.
fn with_column(err: CoreError, name: &str) -> CoreError {
    let tag = |m: String| format!("column {name}: {m}");
    match err {
        CoreError::RejectedInput(m) => CoreError::RejectedInput(tag(m)),
        CoreError::InsufficientData(m) => CoreError::InsufficientData(tag(m)),
        CoreError::Dimension(m) => CoreError::Dimension(tag(m)),
        CoreError::Domain(m) => CoreError::Domain(tag(m)),
        CoreError::IntegrationFailure(m) => CoreError::IntegrationFailure(tag(m)),
        CoreError::NotPositiveDefinite(m) => CoreError::NotPositiveDefinite(tag(m)),
        CoreError::ConstantColumn(m) => CoreError::ConstantColumn(tag(m)),
        CoreError::NoConvergence(m) => CoreError::NoConvergence(tag(m)),
    }
}

/// Draws `n_rows` observations from a single mixture marginal by uniform
/// sampling and quantile inversion — the one-asset degenerate case of
/// [`simulate_joint`]. Each row uses its own counter-indexed substream,
/// matching the joint simulator's reproducibility contract.
pub fn simulate_marginal(rpm: &RpmEstimate, n_rows: usize, seed: u64) -> Result<Vec<f64>> {
    if n_rows == 0 {
        return Err(CoreError::InsufficientData(
            "marginal simulation needs at least one row".into(),
        ));
    }
    let cache = QuantileCache::new(rpm)?;
    let mut out = Vec::with_capacity(n_rows);
    for i in 0..n_rows {
        let mut rng = substream(seed, i as u64);
        let u: f64 = rng.gen::<f64>().clamp(U_CLAMP, 1.0 - U_CLAMP);
        out.push(cache.invert(u)?);
    }
    Ok(out)
}

/// Draws `n_rows` joint returns from the copula: per row, a chi-square
/// mixing variable (drawn first, so the Gaussian limit shares the normal
/// stream), correlated normals through the Cholesky factor, t (or normal)
/// CDF to uniforms, and marginal quantile inversion. Each row uses its own
/// counter-indexed substream, so output is independent of iteration order
/// and reproducible for a given seed.
pub fn simulate_joint(model: &CopulaModel, n_rows: usize, seed: u64) -> Result<JointSample> {
    if n_rows == 0 {
        return Err(CoreError::InsufficientData(
            "joint simulation needs at least one row".into(),
        ));
    }
    validate_df(model.df)?;
    let p = model.correlation.nrows();
    if model.marginals.len() != p {
        return Err(CoreError::Dimension(format!(
            "{} marginals against a {p}-dimensional correlation",
            model.marginals.len()
        )));
    }
    let chol = model.correlation.clone().cholesky().ok_or_else(|| {
        CoreError::NotPositiveDefinite("correlation matrix has no Cholesky factor".into())
    })?;
    let l = chol.l();
    let chi = if model.df.is_finite() {
        Some(ChiSquared::<f64>::new(model.df).map_err(|e| {
            CoreError::Domain(format!("chi-square mixing variable: {e}"))
        })?)
    } else {
        None
    };
    let assets: Vec<String> = match &model.tau {
        Some(t) => t.assets.clone(),
        None => (1..=p).map(|j| format!("asset_{j}")).collect(),
    };
    let caches: Vec<QuantileCache> = model
        .marginals
        .iter()
        .enumerate()
        .map(|(j, rpm)| QuantileCache::new(rpm).map_err(|e| with_column(e, &assets[j])))
        .collect::<Result<_>>()?;

    let mut values = Vec::with_capacity(n_rows * p);
    let mut z = DVector::zeros(p);
    for i in 0..n_rows {
        let mut rng = substream(seed, i as u64);
        let scale = match &chi {
            Some(c) => (model.df / c.sample(&mut rng)).sqrt(),
            None => 1.0,
        };
        for k in 0..p {
            z[k] = StandardNormal.sample(&mut rng);
        }
        let x = &l * &z;
        for j in 0..p {
            let t = x[j] * scale;
            let u = student_t_cdf(t, model.df).clamp(U_CLAMP, 1.0 - U_CLAMP);
            let v = caches[j]
                .invert(u)
                .map_err(|e| with_column(e, &assets[j]))?;
            values.push(v);
        }
    }
    Ok(JointSample {
        panel: ReturnPanel::from_rows(assets, values)?,
        seed,
    })
}

// ------------------------------------------------------------------- density

/// Log-density of the Gaussian copula at a point `u` strictly inside the
/// unit cube: with `q = Phi^{-1}(u)`, this is
/// `-(1/2) ln|Sigma| + (1/2) (q'q - q' Sigma^{-1} q)`.
pub fn gaussian_copula_logdensity(u: &[f64], sigma: &DMatrix<f64>) -> Result<f64> {
    let p = u.len();
    if p == 0 {
        return Err(CoreError::Dimension("empty copula argument".into()));
    }
    if sigma.nrows() != p || sigma.ncols() != p {
        return Err(CoreError::Dimension(format!(
            "{p} coordinates against a {}x{} matrix",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    require_symmetric(sigma)?;
    for i in 0..p {
        if (sigma[(i, i)] - 1.0).abs() > 1e-12 {
            return Err(CoreError::Domain(
                "correlation matrix must have a unit diagonal".into(),
            ));
        }
    }
    let mut q = DVector::zeros(p);
    for (i, &ui) in u.iter().enumerate() {
        if !(ui > 0.0 && ui < 1.0) {
            return Err(CoreError::Domain(format!(
                "copula argument {i} must lie strictly inside (0, 1), got {ui}"
            )));
        }
        q[i] = std_norm_quantile(ui);
    }
    let chol = sigma.clone().cholesky().ok_or_else(|| {
        CoreError::NotPositiveDefinite("correlation matrix has no Cholesky factor".into())
    })?;
    let l = chol.l();
    let logdet = 2.0 * (0..p).map(|i| l[(i, i)].ln()).sum::<f64>();
    let solved = chol.solve(&q);
    Ok(-0.5 * logdet + 0.5 * (q.dot(&q) - q.dot(&solved)))
}

// ----------------------------------------------------------------- projection

/// Observed and simulated panels projected onto the observed panel's two
/// leading principal axes (computed on standardized scales).
#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    /// Observed rows as (first, second) component scores.
    pub observed: Vec<[f64; 2]>,
    /// Simulated rows on the same axes.
    pub simulated: Vec<[f64; 2]>,
    /// Fraction of the observed panel's (standardized) variance along each
    /// retained axis.
    pub observed_evr: [f64; 2],
    /// Fraction of the simulated panel's variance along the same axes.
    pub simulated_evr: [f64; 2],
    /// Set when a column had (near-)zero spread or the observed correlation
    /// matrix was numerically rank-deficient.
    pub reduced_rank: bool,
}

/// Projects both panels onto the top two principal axes of the observed
/// panel's correlation matrix. Both datasets are standardized by the
/// observed means and standard deviations, so displacement between the two
/// clouds is visible rather than normalized away. Axis signs are fixed by
/// making each axis's largest-magnitude loading positive.
pub fn pca_projection(observed: &ReturnPanel, simulated: &ReturnPanel) -> Result<PcaProjection> {
    let p = observed.n_assets();
    if simulated.n_assets() != p {
        return Err(CoreError::Dimension(format!(
            "panels have {p} and {} assets",
            simulated.n_assets()
        )));
    }
    if p < 2 {
        return Err(CoreError::Dimension(
            "projection needs at least two assets".into(),
        ));
    }
    if observed.n_rows < 3 {
        return Err(CoreError::InsufficientData(
            "projection needs at least three observed rows".into(),
        ));
    }
    if simulated.n_rows == 0 {
        return Err(CoreError::InsufficientData(
            "projection needs at least one simulated row".into(),
        ));
    }
    if !all_finite(&observed.values) || !all_finite(&simulated.values) {
        return Err(CoreError::RejectedInput(
            "non-finite values in projection input".into(),
        ));
    }

    let mut reduced_rank = false;
    let mut mu = vec![0.0; p];
    let mut sd = vec![0.0; p];
    for j in 0..p {
        let col = observed.column(j);
        mu[j] = mean(&col)?;
        let s = variance(&col)?.sqrt();
        if s < 1e-12 {
            reduced_rank = true;
            sd[j] = 1e-12;
        } else {
            sd[j] = s;
        }
    }
    let standardize = |panel: &ReturnPanel| -> DMatrix<f64> {
        let mut z = DMatrix::zeros(panel.n_rows, p);
        for i in 0..panel.n_rows {
            let row = panel.row(i);
            for j in 0..p {
                z[(i, j)] = (row[j] - mu[j]) / sd[j];
            }
        }
        z
    };
    let zo = standardize(observed);
    let zs = standardize(simulated);

    let n = observed.n_rows as f64;
    let corr = zo.transpose() * &zo / (n - 1.0);
    let eig = SymmetricEigen::new(corr);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    if eig.eigenvalues[order[p - 1]] < RANK_TOL {
        reduced_rank = true;
    }
    let mut axes = DMatrix::zeros(p, 2);
    for k in 0..2 {
        let col = eig.eigenvectors.column(order[k]);
        let lead = (0..p)
            .max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs()))
            .unwrap();
        let flip = if col[lead] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..p {
            axes[(j, k)] = flip * col[j];
        }
    }

    let column_variance = |m: &DMatrix<f64>, j: usize| -> f64 {
        if m.nrows() < 2 {
            return 0.0;
        }
        let col: Vec<f64> = (0..m.nrows()).map(|i| m[(i, j)]).collect();
        variance(&col).unwrap_or(0.0)
    };
    let project = |z: &DMatrix<f64>| -> (Vec<[f64; 2]>, [f64; 2]) {
        let s = z * &axes;
        let scores: Vec<[f64; 2]> = (0..z.nrows()).map(|i| [s[(i, 0)], s[(i, 1)]]).collect();
        let total: f64 = (0..p).map(|j| column_variance(z, j)).sum();
        let evr = if total > 0.0 {
            [
                column_variance(&s, 0) / total,
                column_variance(&s, 1) / total,
            ]
        } else {
            [0.0, 0.0]
        };
        (scores, evr)
    };
    let (observed_scores, observed_evr) = project(&zo);
    let (simulated_scores, simulated_evr) = project(&zs);
    Ok(PcaProjection {
        observed: observed_scores,
        simulated: simulated_scores,
        observed_evr,
        simulated_evr,
        reduced_rank,
    })
}
