//! Oracle tests for concordance estimation, t-copula fitting/simulation,
//! the Gaussian copula density, and principal-component projections.

use dprisk_core::copula::{
    concordance_matrix, fit_copula, gaussian_copula_logdensity, kendall_tau, pca_projection,
    simulate_joint, simulate_marginal, tau_to_correlation, CopulaModel,
};
use dprisk_core::dpmix::RpmEstimate;
use dprisk_core::market::ReturnPanel;
use dprisk_core::stats::ks_statistic;
use dprisk_core::CoreError;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

// Quadratic-time tau-b oracle: strictly concordant minus strictly
// discordant pairs over the tie-corrected denominator.
fn brute_tau(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let (mut c, mut d, mut tie_x, mut tie_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[j] - x[i];
            let dy = y[j] - y[i];
            if dx == 0.0 {
                tie_x += 1;
            }
            if dy == 0.0 {
                tie_y += 1;
            }
            let s = dx * dy;
            if s > 0.0 {
                c += 1;
            } else if s < 0.0 {
                d += 1;
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    (c - d) as f64 / (((n0 - tie_x) as f64).sqrt() * ((n0 - tie_y) as f64).sqrt())
}

fn normal_column(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn single_normal_rpm(mean: f64, sd: f64) -> RpmEstimate {
    RpmEstimate::from_components(vec![1.0], vec![mean], vec![1.0 / (sd * sd)]).unwrap()
}

fn three_marginals() -> Vec<RpmEstimate> {
    vec![
        single_normal_rpm(0.0, 1.0),
        RpmEstimate::from_components(vec![0.7, 0.3], vec![-0.5, 1.0], vec![4.0, 1.0]).unwrap(),
        RpmEstimate::from_components(vec![0.5, 0.5], vec![-1.0, 1.0], vec![2.0, 2.0]).unwrap(),
    ]
}

fn generator_sigma() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[1.0, 0.6, 0.3, 0.6, 1.0, 0.1, 0.3, 0.1, 1.0])
}

// ------------------------------------------------------------------ kendall

#[test]
fn kendall_tau_perfect_concordance_and_discordance() {
    let x: Vec<f64> = (0..50).map(|v| v as f64).collect();
    let y: Vec<f64> = x.iter().map(|v| v * 2.0 + 1.0).collect();
    assert_eq!(kendall_tau(&x, &y).unwrap(), 1.0);
    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
    assert_eq!(kendall_tau(&x, &neg).unwrap(), -1.0);
}

#[test]
fn kendall_tau_three_point_example() {
    let tau = kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
    assert!((tau - 1.0 / 3.0).abs() < 1e-15, "{tau}");
}

#[test]
fn kendall_tau_matches_the_quadratic_oracle_with_ties() {
    for (n, seed) in [(50usize, 1u64), (200, 2), (999, 3)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Coarse rounding forces plenty of ties in both coordinates.
        let x: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (z * 10.0).round() / 10.0
            })
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| {
                let z: f64 = StandardNormal.sample(&mut rng);
                ((v + z) * 5.0).round() / 5.0
            })
            .collect();
        let fast = kendall_tau(&x, &y).unwrap();
        let slow = brute_tau(&x, &y);
        assert!((fast - slow).abs() < 1e-12, "n {n}: {fast} vs {slow}");
    }
}

#[test]
fn kendall_tau_is_invariant_under_increasing_transforms() {
    let x = normal_column(400, 11);
    let y: Vec<f64> = x
        .iter()
        .zip(normal_column(400, 12))
        .map(|(a, b)| a + 0.5 * b)
        .collect();
    let base = kendall_tau(&x, &y).unwrap();
    let ex: Vec<f64> = x.iter().map(|v| v.exp()).collect();
    let cube: Vec<f64> = y.iter().map(|v| v * v * v).collect();
    assert_eq!(kendall_tau(&ex, &y).unwrap(), base);
    assert_eq!(kendall_tau(&x, &cube).unwrap(), base);
    assert_eq!(kendall_tau(&ex, &cube).unwrap(), base);
}

#[test]
fn kendall_tau_rejects_bad_inputs() {
    assert!(matches!(
        kendall_tau(&[1.0, 2.0], &[1.0, 2.0, 3.0]),
        Err(CoreError::Dimension(_))
    ));
    assert!(matches!(
        kendall_tau(&[1.0], &[2.0]),
        Err(CoreError::InsufficientData(_))
    ));
    assert!(matches!(
        kendall_tau(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
        Err(CoreError::ConstantColumn(_))
    ));
    assert!(matches!(
        kendall_tau(&[1.0, f64::NAN, 3.0], &[1.0, 2.0, 3.0]),
        Err(CoreError::RejectedInput(_))
    ));
}

#[test]
fn kendall_tau_treats_signed_zeros_as_ties() {
    // -0.0 and +0.0 are the same value: the pair (0, 1) is an x-tie, so the
    // one concordant and one discordant comparable pair cancel exactly.
    let tau = kendall_tau(&[-0.0, 0.0, 1.0], &[3.0, 1.0, 2.0]).unwrap();
    assert_eq!(tau, 0.0);
}

#[test]
fn tau_to_correlation_known_values() {
    assert_eq!(tau_to_correlation(0.0), 0.0);
    assert_eq!(tau_to_correlation(1.0), 1.0);
    assert_eq!(tau_to_correlation(-1.0), -1.0);
    assert!((tau_to_correlation(0.5) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
}

#[test]
fn tau_inversion_recovers_the_t_generator_correlation() {
    // Bivariate t sample built by hand: scale mixture of a correlated
    // Gaussian pair.
    let rho = 0.6;
    let nu = 8.0;
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let chi = ChiSquared::new(nu).unwrap();
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        let w: f64 = chi.sample(&mut rng);
        let s = 1.0 / (w / nu).sqrt();
        xs.push(z1 * s);
        ys.push((rho * z1 + (1.0 - rho * rho).sqrt() * z2) * s);
    }
    let rho_hat = tau_to_correlation(kendall_tau(&xs, &ys).unwrap());
    assert!((rho_hat - rho).abs() < 0.03, "rho_hat {rho_hat}");
}

#[test]
fn concordance_error_shrinks_with_sample_size() {
    // With quadrupled samples the estimation error should roughly halve.
    let rho = 0.5_f64;
    let mut err_small = 0.0;
    let mut err_large = 0.0;
    let reps = 6;
    for rep in 0..reps {
        for (n, acc) in [(10_000usize, &mut err_small), (40_000, &mut err_large)] {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + rep * 7 + n as u64);
            let mut xs = Vec::with_capacity(n);
            let mut ys = Vec::with_capacity(n);
            for _ in 0..n {
                let z1: f64 = StandardNormal.sample(&mut rng);
                let z2: f64 = StandardNormal.sample(&mut rng);
                xs.push(z1);
                ys.push(rho * z1 + (1.0 - rho * rho).sqrt() * z2);
            }
            let tau = kendall_tau(&xs, &ys).unwrap();
            let truth = 2.0 * rho.asin() / std::f64::consts::PI;
            *acc += (tau - truth).abs() / reps as f64;
        }
    }
    let ratio = err_large / err_small;
    assert!(
        (0.2..0.95).contains(&ratio),
        "error ratio {ratio} (small {err_small}, large {err_large})"
    );
}

// ------------------------------------------------------------------ fitting

#[test]
fn independent_columns_fit_to_near_zero_correlation() {
    let n = 100_000;
    let x = normal_column(n, 21);
    let y = normal_column(n, 22);
    let mut values = Vec::with_capacity(2 * n);
    for i in 0..n {
        values.push(x[i]);
        values.push(y[i]);
    }
    let panel = ReturnPanel::from_rows(vec!["A".into(), "B".into()], values).unwrap();
    let marginals = vec![single_normal_rpm(0.0, 1.0), single_normal_rpm(0.0, 1.0)];
    let model = fit_copula(&panel, 10.0, marginals).unwrap();
    assert!(model.correlation[(0, 1)].abs() < 0.02, "{}", model.correlation[(0, 1)]);
}

#[test]
fn comonotone_columns_fit_to_unit_correlation() {
    let x = normal_column(500, 31);
    let mut values = Vec::with_capacity(1000);
    for v in &x {
        values.push(*v);
        values.push(v.exp());
    }
    let panel = ReturnPanel::from_rows(vec!["A".into(), "B".into()], values).unwrap();
    let tau = concordance_matrix(&panel).unwrap();
    assert_eq!(tau.values[(0, 1)], 1.0);
    let marginals = vec![single_normal_rpm(0.0, 1.0), single_normal_rpm(0.0, 1.0)];
    let model = fit_copula(&panel, 10.0, marginals).unwrap();
    // Exact unit correlation is singular; the PD repair backs off a hair.
    assert!(model.correlation[(0, 1)] > 0.999_999);
    assert!(model.repaired);
}

#[test]
fn constant_columns_are_reported_by_name() {
    let x = normal_column(100, 41);
    let mut values = Vec::with_capacity(200);
    for v in &x {
        values.push(*v);
        values.push(0.25);
    }
    let panel = ReturnPanel::from_rows(vec!["LIVE".into(), "FLAT".into()], values).unwrap();
    let err = concordance_matrix(&panel).unwrap_err();
    match err {
        CoreError::ConstantColumn(msg) => assert!(msg.contains("FLAT"), "{msg}"),
        other => panic!("unexpected error {other:?}"),
    }
}

#[test]
fn fitted_concordance_matrix_is_symmetric_with_unit_diagonal() {
    let n = 400;
    let x = normal_column(n, 51);
    let y = normal_column(n, 52);
    let mut values = Vec::with_capacity(3 * n);
    for i in 0..n {
        values.push(x[i]);
        values.push(0.4 * x[i] + y[i]);
        values.push(x[i].sin() + 0.3 * y[i]);
    }
    let panel =
        ReturnPanel::from_rows(vec!["A".into(), "B".into(), "C".into()], values).unwrap();
    let tau = concordance_matrix(&panel).unwrap();
    for i in 0..3 {
        assert_eq!(tau.values[(i, i)], 1.0);
        for j in 0..3 {
            assert_eq!(tau.values[(i, j)], tau.values[(j, i)]);
            assert!(tau.values[(i, j)].abs() <= 1.0);
        }
    }
}

// ------------------------------------------------------------------ simulation

#[test]
fn simulate_then_refit_recovers_the_generator() {
    let model = CopulaModel::new(generator_sigma(), 10.0, three_marginals()).unwrap();
    let sample = simulate_joint(&model, 30_000, 99).unwrap();
    let refit = fit_copula(&sample.panel, 10.0, three_marginals()).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let diff = (refit.correlation[(i, j)] - generator_sigma()[(i, j)]).abs();
            assert!(diff < 0.05, "entry ({i},{j}) off by {diff}");
        }
    }
}

#[test]
fn identity_copula_keeps_columns_independent() {
    let sigma = DMatrix::identity(2, 2);
    let marginals = vec![single_normal_rpm(0.0, 1.0), single_normal_rpm(0.5, 2.0)];
    let model = CopulaModel::new(sigma, 10.0, marginals).unwrap();
    let n = 10_000;
    let sample = simulate_joint(&model, n, 7).unwrap();
    let tau = kendall_tau(&sample.panel.column(0), &sample.panel.column(1)).unwrap();
    let nf = n as f64;
    let se = (2.0 * (2.0 * nf + 5.0) / (9.0 * nf * (nf - 1.0))).sqrt();
    assert!(tau.abs() < 3.0 * se, "tau {tau} vs 3se {}", 3.0 * se);
}

#[test]
fn simulated_marginals_pass_the_probability_integral_transform() {
    let model = CopulaModel::new(generator_sigma(), 10.0, three_marginals()).unwrap();
    let n = 10_000;
    let sample = simulate_joint(&model, n, 17).unwrap();
    let threshold = 1.36 / (n as f64).sqrt();
    for j in 0..3 {
        let marginal = &model.marginals[j];
        let mut u: Vec<f64> = sample.panel.column(j).iter().map(|x| marginal.cdf(*x)).collect();
        u.sort_by(f64::total_cmp);
        let ks = ks_statistic(&u, |v| v.clamp(0.0, 1.0));
        assert!(ks < threshold, "column {j}: ks {ks} vs {threshold}");
    }
}

#[test]
fn gaussian_limit_matches_normal_marginals() {
    // Infinite degrees of freedom: coordinates are exactly Gaussian.
    let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 1.0]);
    let marginals = vec![single_normal_rpm(0.0, 1.0), single_normal_rpm(0.0, 1.0)];
    let model = CopulaModel::new(sigma, f64::INFINITY, marginals).unwrap();
    let n = 10_000;
    let sample = simulate_joint(&model, n, 23).unwrap();
    let mut col = sample.panel.column(0);
    col.sort_by(f64::total_cmp);
    let ks = ks_statistic(&col, dprisk_core::stats::std_norm_cdf);
    assert!(ks < 1.36 / (n as f64).sqrt(), "ks {ks}");
}

#[test]
fn simulation_is_seed_deterministic() {
    let model = CopulaModel::new(generator_sigma(), 10.0, three_marginals()).unwrap();
    let a = simulate_joint(&model, 500, 33).unwrap();
    let b = simulate_joint(&model, 500, 33).unwrap();
    assert_eq!(a.panel.row(499), b.panel.row(499));
    assert_eq!(a.panel.column(1), b.panel.column(1));
    let c = simulate_joint(&model, 500, 34).unwrap();
    assert_ne!(a.panel.column(0), c.panel.column(0));
}

#[test]
fn copula_model_rejects_invalid_parameters() {
    let ok_marginals = vec![single_normal_rpm(0.0, 1.0), single_normal_rpm(0.0, 1.0)];
    // df must exceed 2 (or be infinite).
    assert!(CopulaModel::new(DMatrix::identity(2, 2), 2.0, ok_marginals.clone()).is_err());
    // correlation must be square with unit diagonal and match marginal count.
    let bad_diag = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.9]);
    assert!(CopulaModel::new(bad_diag, 10.0, ok_marginals.clone()).is_err());
    let not_pd = DMatrix::from_row_slice(2, 2, &[1.0, 1.2, 1.2, 1.0]);
    assert!(CopulaModel::new(not_pd, 10.0, ok_marginals.clone()).is_err());
    let wrong_p = DMatrix::identity(3, 3);
    assert!(CopulaModel::new(wrong_p, 10.0, ok_marginals).is_err());
}

// ------------------------------------------------------------------ density

#[test]
fn gaussian_copula_density_is_flat_under_independence() {
    let sigma = DMatrix::identity(3, 3);
    for u in [[0.5, 0.5, 0.5], [0.1, 0.7, 0.9], [0.99, 0.01, 0.5]] {
        let ld = gaussian_copula_logdensity(&u, &sigma).unwrap();
        assert!(ld.abs() < 1e-12, "u {u:?}: {ld}");
    }
}

#[test]
fn gaussian_copula_density_at_the_median_matches_the_determinant_term() {
    let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
    let ld = gaussian_copula_logdensity(&[0.5, 0.5], &sigma).unwrap();
    let want = -0.5 * 0.75_f64.ln();
    assert!((ld - want).abs() < 1e-12, "{ld} vs {want}");
}

#[test]
fn gaussian_copula_density_is_exchangeable_when_sigma_is() {
    let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 1.0]);
    let a = gaussian_copula_logdensity(&[0.2, 0.8], &sigma).unwrap();
    let b = gaussian_copula_logdensity(&[0.8, 0.2], &sigma).unwrap();
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn gaussian_copula_density_rejects_boundary_and_bad_sigma() {
    let sigma = DMatrix::identity(2, 2);
    assert!(matches!(
        gaussian_copula_logdensity(&[0.0, 0.5], &sigma),
        Err(CoreError::Domain(_))
    ));
    assert!(matches!(
        gaussian_copula_logdensity(&[0.5, 1.0], &sigma),
        Err(CoreError::Domain(_))
    ));
    let not_pd = DMatrix::from_row_slice(2, 2, &[1.0, 1.5, 1.5, 1.0]);
    assert!(gaussian_copula_logdensity(&[0.5, 0.5], &not_pd).is_err());
    assert!(matches!(
        gaussian_copula_logdensity(&[0.5, 0.5, 0.5], &sigma),
        Err(CoreError::Dimension(_))
    ));
}

// ------------------------------------------------------------------ pca

fn panel_from_columns(names: &[&str], cols: &[Vec<f64>]) -> ReturnPanel {
    let n = cols[0].len();
    let mut values = Vec::with_capacity(n * cols.len());
    for i in 0..n {
        for c in cols {
            values.push(c[i]);
        }
    }
    ReturnPanel::from_rows(names.iter().map(|s| s.to_string()).collect(), values).unwrap()
}

#[test]
fn identical_datasets_project_identically() {
    let cols = vec![normal_column(300, 61), normal_column(300, 62)];
    let panel = panel_from_columns(&["A", "B"], &cols);
    let proj = pca_projection(&panel, &panel).unwrap();
    assert_eq!(proj.observed, proj.simulated);
    assert_eq!(proj.observed_evr, proj.simulated_evr);
    assert!(!proj.reduced_rank);
}

#[test]
fn isotropic_data_spreads_variance_evenly() {
    let n = 20_000;
    let cols = vec![
        normal_column(n, 71),
        normal_column(n, 72),
        normal_column(n, 73),
    ];
    let panel = panel_from_columns(&["A", "B", "C"], &cols);
    let proj = pca_projection(&panel, &panel).unwrap();
    assert!((proj.observed_evr[0] - 1.0 / 3.0).abs() < 0.02, "{:?}", proj.observed_evr);
    assert!((proj.observed_evr[1] - 1.0 / 3.0).abs() < 0.02, "{:?}", proj.observed_evr);
}

#[test]
fn two_factor_structure_concentrates_in_two_components() {
    let n = 5_000;
    let z1 = normal_column(n, 81);
    let z2 = normal_column(n, 82);
    let noise = normal_column(n, 83);
    let x3: Vec<f64> = (0..n)
        .map(|i| 0.7 * z1[i] + 0.3 * z2[i] + 0.05 * noise[i])
        .collect();
    let panel = panel_from_columns(&["A", "B", "C"], &[z1, z2, x3]);
    let proj = pca_projection(&panel, &panel).unwrap();
    let top2 = proj.observed_evr[0] + proj.observed_evr[1];
    assert!(top2 > 0.9, "top-2 explained variance {top2}");
}

#[test]
fn constant_columns_flag_reduced_rank() {
    let n = 200;
    let cols = vec![normal_column(n, 91), vec![1.0; n]];
    let panel = panel_from_columns(&["A", "FLAT"], &cols);
    let proj = pca_projection(&panel, &panel).unwrap();
    assert!(proj.reduced_rank);
}

#[test]
fn marginal_simulation_matches_its_own_cdf() {
    let rpm = three_marginals().remove(1);
    let n = 10_000;
    let draws = simulate_marginal(&rpm, n, 57).unwrap();
    let mut sorted = draws.clone();
    sorted.sort_by(f64::total_cmp);
    let ks = ks_statistic(&sorted, |x| rpm.cdf(x));
    let critical = 1.36 / (n as f64).sqrt();
    assert!(ks < critical, "ks {ks} vs {critical}");

    let again = simulate_marginal(&rpm, n, 57).unwrap();
    assert_eq!(draws, again);
    assert!(matches!(
        simulate_marginal(&rpm, 0, 57),
        Err(CoreError::InsufficientData(_))
    ));
}
