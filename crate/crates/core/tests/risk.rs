//! Oracle tests for distortion risk measures and the Choquet integration engine.
//!
//! Closed-form constants below were computed independently (bisection +
//! Newton on the error function) and are frozen as literals.

use dprisk_core::dpmix::RpmEstimate;
use dprisk_core::risk::{
    bs_loss_distribution, choquet_integral, classify_distortion, esf, var, wang_measure,
    DistortionFunction, EmpiricalDistribution, LossDistribution, NormalLoss, RiskBlock, RiskReport,
};
use dprisk_core::CoreError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::sync::Arc;

const Z_001: f64 = -3.0902323061678056; // standard normal 0.1% quantile
const Z_01: f64 = -2.326347874040841; // standard normal 1% quantile
const Z_05: f64 = -1.6448536269514729; // standard normal 5% quantile
const ESF_01: f64 = -2.665214220345804; // N(0,1) lower 1% tail mean
const ESF_05: f64 = -2.0627128075074253; // N(0,1) lower 5% tail mean

fn std_normal() -> NormalLoss {
    NormalLoss::new(0.0, 1.0).unwrap()
}

fn two_scale_mixture() -> RpmEstimate {
    // 0.9 N(0, 0.5^2) + 0.1 N(0, 3^2): heavy-tailed relative to its moments.
    RpmEstimate::from_components(
        vec![0.9, 0.1],
        vec![0.0, 0.0],
        vec![4.0, 1.0 / 9.0],
    )
    .unwrap()
}

fn shifted_mixture(shift: f64, scale: f64) -> RpmEstimate {
    let means = vec![-scale + shift, 2.0 * scale + shift];
    let sds = [0.5 * scale, 1.5 * scale];
    RpmEstimate::from_components(
        vec![0.6, 0.4],
        means,
        sds.iter().map(|s| 1.0 / (s * s)).collect(),
    )
    .unwrap()
}

/// Uniform(0,1) through the public distribution contract.
struct Uniform01;

impl LossDistribution for Uniform01 {
    fn cdf(&self, x: f64) -> f64 {
        x.clamp(0.0, 1.0)
    }
    fn quantile(&self, p: f64) -> dprisk_core::Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(CoreError::Domain(format!("p out of range: {p}")));
        }
        Ok(p)
    }
    fn support_hint(&self) -> (f64, f64) {
        (0.0, 1.0)
    }
}

/// Pareto with unit shape: infinite mean, so tail integration must give up.
struct ParetoUnitShape;

impl LossDistribution for ParetoUnitShape {
    fn cdf(&self, x: f64) -> f64 {
        if x < 1.0 {
            0.0
        } else {
            1.0 - 1.0 / x
        }
    }
    fn quantile(&self, p: f64) -> dprisk_core::Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(CoreError::Domain(format!("p out of range: {p}")));
        }
        Ok(1.0 / (1.0 - p))
    }
    fn support_hint(&self) -> (f64, f64) {
        (1.0, 1e9)
    }
}

// ------------------------------------------------------------------ var

#[test]
fn var_matches_normal_quantile_oracle() {
    let n01 = std_normal();
    assert!((var(&n01, 0.01).unwrap() - Z_01).abs() < 1e-9);
    assert!((var(&n01, 0.05).unwrap() - Z_05).abs() < 1e-9);
    assert!((var(&n01, 0.001).unwrap() - Z_001).abs() < 1e-9);
    assert!((var(&n01, 0.5).unwrap()).abs() < 1e-12);
}

#[test]
fn var_rejects_levels_outside_the_open_interval() {
    let n01 = std_normal();
    for bad in [0.0, 1.0, -0.2, 1.7, f64::NAN] {
        assert!(matches!(var(&n01, bad), Err(CoreError::Domain(_))), "gamma {bad}");
    }
}

#[test]
fn empirical_var_uses_the_order_statistic_rule() {
    let xs: Vec<f64> = (-3..7).map(|v| v as f64).collect();
    let emp = EmpiricalDistribution::new(&xs).unwrap();
    let n = xs.len() as f64;
    for k in 1..20 {
        let gamma = k as f64 * 0.05 - 0.025; // stays inside (0,1)
        let idx = ((gamma * n).ceil() as usize).max(1) - 1;
        let expected = xs[idx.min(xs.len() - 1)];
        assert_eq!(var(&emp, gamma).unwrap(), expected, "gamma {gamma}");
    }
    assert_eq!(var(&emp, 0.05).unwrap(), -3.0);
    assert_eq!(var(&emp, 0.25).unwrap(), -1.0);
}

// ------------------------------------------------------------------ esf

#[test]
fn esf_matches_the_normal_closed_form() {
    let n01 = std_normal();
    assert!((esf(&n01, 0.01, 4096).unwrap() - ESF_01).abs() < 1e-6);
    assert!((esf(&n01, 0.05, 4096).unwrap() - ESF_05).abs() < 1e-6);
}

#[test]
fn esf_of_the_uniform_lower_decile_is_its_midpoint() {
    let esf_val = esf(&Uniform01, 0.1, 4096).unwrap();
    assert!((esf_val - 0.05).abs() < 1e-6, "esf {esf_val}");
}

#[test]
fn empirical_esf_averages_the_tail_with_fractional_boundary_weight() {
    let xs: Vec<f64> = (-3..7).map(|v| v as f64).collect();
    let emp = EmpiricalDistribution::new(&xs).unwrap();
    // gamma = 0.2: plain mean of the two lowest points.
    assert!((esf(&emp, 0.2, 4096).unwrap() - (-2.5)).abs() < 1e-12);
    // gamma = 0.25: (1/0.25) * [(-3 - 2)/10 + (-1)(0.25 - 0.2)] = -2.2.
    assert!((esf(&emp, 0.25, 4096).unwrap() - (-2.2)).abs() < 1e-12);
}

#[test]
fn esf_agrees_with_the_distorted_loss_route() {
    // Mirror of N(mu, sd) is N(-mu, sd); the lower tail mean of X equals
    // minus the Choquet value of -X under the tail-average distortion.
    let x = NormalLoss::new(0.7, 1.3).unwrap();
    let mirrored = NormalLoss::new(-0.7, 1.3).unwrap();
    let gamma = 0.05;
    let direct = esf(&x, gamma, 4096).unwrap();
    let distorted = -choquet_integral(
        &mirrored,
        &DistortionFunction::Cvar { tail: gamma },
        4096,
    )
    .unwrap();
    assert!((direct - distorted).abs() < 1e-4, "{direct} vs {distorted}");

    let xs: Vec<f64> = (-3..7).map(|v| v as f64).collect();
    let emp = EmpiricalDistribution::new(&xs).unwrap();
    let neg: Vec<f64> = xs.iter().map(|v| -v).collect();
    let emp_neg = EmpiricalDistribution::new(&neg).unwrap();
    let a = esf(&emp, 0.25, 4096).unwrap();
    let b = -choquet_integral(&emp_neg, &DistortionFunction::Cvar { tail: 0.25 }, 4096).unwrap();
    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
}

#[test]
fn esf_never_exceeds_var() {
    let dists: Vec<Box<dyn LossDistribution>> = vec![
        Box::new(std_normal()),
        Box::new(NormalLoss::new(2.0, 0.3).unwrap()),
        Box::new(two_scale_mixture()),
        Box::new(shifted_mixture(0.0, 1.0)),
        Box::new(EmpiricalDistribution::new(&(-3..7).map(|v| v as f64).collect::<Vec<_>>()).unwrap()),
    ];
    for (i, d) in dists.iter().enumerate() {
        for gamma in [0.01, 0.05, 0.25] {
            let e = esf(d.as_ref(), gamma, 4096).unwrap();
            let q = var(d.as_ref(), gamma).unwrap();
            assert!(e <= q + 1e-9, "dist {i} gamma {gamma}: esf {e} var {q}");
        }
    }
}

#[test]
fn esf_is_superadditive_for_independent_mixtures_within_mc_error() {
    // Lower-tail means: pooling independent risks cannot make the tail mean
    // worse than the sum of the standalone tail means (up to MC noise).
    let n = 100_000usize;
    let gamma = 0.05;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    let mut sums = Vec::with_capacity(n);
    for _ in 0..n {
        let ux: f64 = rand::Rng::gen(&mut rng);
        let zx: f64 = StandardNormal.sample(&mut rng);
        let x = if ux < 0.8 { 0.8 * zx } else { -1.0 + 2.0 * zx };
        let uy: f64 = rand::Rng::gen(&mut rng);
        let zy: f64 = StandardNormal.sample(&mut rng);
        let y = if uy < 0.7 { 0.2 + zy } else { 0.5 + 2.5 * zy };
        xs.push(x);
        ys.push(y);
        sums.push(x + y);
    }
    let tail_se = |sample: &[f64]| {
        let mut s = sample.to_vec();
        s.sort_by(f64::total_cmp);
        let m = (gamma * n as f64) as usize;
        let tail = &s[..m];
        let mean = tail.iter().sum::<f64>() / m as f64;
        let var = tail.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1) as f64;
        (var / m as f64).sqrt()
    };
    let ex = esf(&EmpiricalDistribution::new(&xs).unwrap(), gamma, 4096).unwrap();
    let ey = esf(&EmpiricalDistribution::new(&ys).unwrap(), gamma, 4096).unwrap();
    let es = esf(&EmpiricalDistribution::new(&sums).unwrap(), gamma, 4096).unwrap();
    let se = (tail_se(&xs).powi(2) + tail_se(&ys).powi(2) + tail_se(&sums).powi(2)).sqrt();
    assert!(
        es >= ex + ey - 3.0 * se,
        "pooled {es} vs standalone sum {} (se {se})",
        ex + ey
    );
}

// ------------------------------------------------------------------ choquet

#[test]
fn identity_distortion_reproduces_the_mean() {
    let cases: Vec<(Box<dyn LossDistribution>, f64)> = vec![
        (Box::new(std_normal()), 0.0),
        (Box::new(NormalLoss::new(3.0, 2.0).unwrap()), 3.0),
        (Box::new(shifted_mixture(0.0, 1.0)), 0.4 * 2.0 - 0.6),
        (
            Box::new(EmpiricalDistribution::new(&(-3..7).map(|v| v as f64).collect::<Vec<_>>()).unwrap()),
            1.5,
        ),
    ];
    for (i, (d, want)) in cases.iter().enumerate() {
        let got = choquet_integral(d.as_ref(), &DistortionFunction::Identity, 4096).unwrap();
        assert!((got - want).abs() < 1e-6, "case {i}: {got} vs {want}");
    }
}

#[test]
fn var_step_distortion_recovers_the_quantile() {
    let n01 = std_normal();
    let got = choquet_integral(&n01, &DistortionFunction::VaR { gamma: 0.05 }, 4096).unwrap();
    assert!((got - Z_05).abs() < 1e-6, "normal: {got}");

    let mix = two_scale_mixture();
    let got = choquet_integral(&mix, &DistortionFunction::VaR { gamma: 0.05 }, 4096).unwrap();
    let want = mix.quantile(0.05).unwrap();
    assert!((got - want).abs() < 1e-6, "mixture: {got} vs {want}");
}

#[test]
fn power_distortions_match_order_statistic_means() {
    // Distorting the survival function by u^k turns the Choquet value into
    // the mean of the minimum of k independent copies.
    let n01 = std_normal();
    let square = DistortionFunction::Custom {
        name: "u^2".into(),
        g: Arc::new(|u: f64| u * u),
    };
    let cube = DistortionFunction::Custom {
        name: "u^3".into(),
        g: Arc::new(|u: f64| u * u * u),
    };
    let min2 = choquet_integral(&n01, &square, 4096).unwrap();
    let min3 = choquet_integral(&n01, &cube, 4096).unwrap();
    assert!((min2 - (-0.5641895835477563)).abs() < 1e-6, "min2 {min2}");
    assert!((min3 - (-0.8462843753216345)).abs() < 1e-6, "min3 {min3}");
}

#[test]
fn monotone_distortions_give_monotone_choquet_values() {
    // Pointwise larger distortions can only raise the distorted expectation.
    let mix = shifted_mixture(0.3, 1.2);
    let lo = choquet_integral(&mix, &DistortionFunction::Wang { r: 0.3 }, 4096).unwrap();
    let hi = choquet_integral(&mix, &DistortionFunction::Wang { r: 0.7 }, 4096).unwrap();
    assert!(lo <= hi + 1e-9, "wang: {lo} vs {hi}");

    let narrow = choquet_integral(&mix, &DistortionFunction::Cvar { tail: 0.01 }, 4096).unwrap();
    let wide = choquet_integral(&mix, &DistortionFunction::Cvar { tail: 0.05 }, 4096).unwrap();
    assert!(narrow >= wide - 1e-9, "cvar: {narrow} vs {wide}");
}

#[test]
fn choquet_rejects_bad_inputs() {
    let n01 = std_normal();
    assert!(matches!(
        choquet_integral(&n01, &DistortionFunction::Identity, 32),
        Err(CoreError::Domain(_))
    ));
    assert!(matches!(
        choquet_integral(&n01, &DistortionFunction::VaR { gamma: 1.5 }, 4096),
        Err(CoreError::Domain(_))
    ));
    assert!(matches!(
        choquet_integral(&n01, &DistortionFunction::Cvar { tail: 0.0 }, 4096),
        Err(CoreError::Domain(_))
    ));
    assert!(matches!(
        choquet_integral(&n01, &DistortionFunction::Wang { r: f64::NAN }, 4096),
        Err(CoreError::Domain(_))
    ));
}

#[test]
fn infinite_mean_tail_reports_integration_failure() {
    let result = choquet_integral(&ParetoUnitShape, &DistortionFunction::Identity, 4096);
    assert!(
        matches!(result, Err(CoreError::IntegrationFailure(_))),
        "got {result:?}"
    );
}

// ------------------------------------------------------------------ wang

#[test]
fn wang_shifts_a_normal_mean_by_r_sigma() {
    let dist = NormalLoss::new(1.5, 2.0).unwrap();
    for r in [0.0, 0.5, 1.0, -0.75] {
        let got = wang_measure(&dist, r, 4096).unwrap();
        let want = 1.5 + r * 2.0;
        assert!((got - want).abs() < 1e-6, "r {r}: {got} vs {want}");
    }
}

#[test]
fn wang_at_r_zero_is_the_mean_of_a_mixture() {
    let mix = shifted_mixture(0.4, 0.9);
    let got = wang_measure(&mix, 0.0, 4096).unwrap();
    assert!((got - mix.mean()).abs() < 1e-6, "{got} vs {}", mix.mean());
}

// ------------------------------------------------------------------ invariance properties

#[test]
fn measures_are_translation_invariant() {
    let base = shifted_mixture(0.0, 1.0);
    let moved = shifted_mixture(0.7, 1.0);
    let gamma = 0.05;
    let quad = 4096;
    let dv = var(&moved, gamma).unwrap() - var(&base, gamma).unwrap();
    let de = esf(&moved, gamma, quad).unwrap() - esf(&base, gamma, quad).unwrap();
    let dw = wang_measure(&moved, 0.5, quad).unwrap() - wang_measure(&base, 0.5, quad).unwrap();
    assert!((dv - 0.7).abs() < 1e-8, "var shift {dv}");
    assert!((de - 0.7).abs() < 2e-6, "esf shift {de}");
    assert!((dw - 0.7).abs() < 2e-6, "wang shift {dw}");
}

#[test]
fn measures_are_positively_homogeneous() {
    let base = shifted_mixture(0.0, 1.0);
    let scaled = shifted_mixture(0.0, 2.5);
    let gamma = 0.05;
    let quad = 4096;
    let rv = var(&scaled, gamma).unwrap() / var(&base, gamma).unwrap();
    let re = esf(&scaled, gamma, quad).unwrap() / esf(&base, gamma, quad).unwrap();
    let rw = wang_measure(&scaled, 0.5, quad).unwrap() / wang_measure(&base, 0.5, quad).unwrap();
    assert!((rv - 2.5).abs() < 1e-7, "var ratio {rv}");
    assert!((re - 2.5).abs() < 1e-5, "esf ratio {re}");
    assert!((rw - 2.5).abs() < 1e-4, "wang ratio {rw}");
}

#[test]
fn separated_mixture_tails_differ_from_the_moment_matched_normal() {
    let mix = two_scale_mixture();
    let sigma = mix.variance().sqrt();
    let matched = NormalLoss::new(mix.mean(), sigma).unwrap();

    let q_mix = var(&mix, 0.01).unwrap();
    let q_bs = var(&matched, 0.01).unwrap();
    assert!((q_mix - (-3.8446546966349375)).abs() < 1e-9, "mixture 1% {q_mix}");
    assert!((q_bs - (-2.4674645356997806)).abs() < 1e-9, "matched 1% {q_bs}");
    assert!((q_mix - q_bs).abs() > 1.0, "tail gap too small");

    let e_mix = esf(&mix, 0.01, 4096).unwrap();
    let e_bs = esf(&matched, 0.01, 4096).unwrap();
    assert!((e_mix - e_bs).abs() > 1.0, "esf gap too small: {e_mix} vs {e_bs}");
}

// ------------------------------------------------------------------ classification

#[test]
fn distortion_classification_booleans() {
    let var_g = classify_distortion(&DistortionFunction::VaR { gamma: 0.01 }, 1025).unwrap();
    assert!(!var_g.strictly_increasing);
    assert!(!var_g.concave);
    assert!(!var_g.complete);
    assert!(!var_g.exhaustive);

    let cvar_g = classify_distortion(&DistortionFunction::Cvar { tail: 0.05 }, 1025).unwrap();
    assert!(!cvar_g.strictly_increasing);
    assert!(cvar_g.concave);
    assert!(!cvar_g.complete);
    assert!(!cvar_g.exhaustive);

    let wang_g = classify_distortion(&DistortionFunction::Wang { r: 0.5 }, 1025).unwrap();
    assert!(wang_g.strictly_increasing);
    assert!(wang_g.concave);
    assert!(wang_g.complete);
    assert!(wang_g.exhaustive);

    let ident = classify_distortion(&DistortionFunction::Identity, 1025).unwrap();
    assert!(ident.strictly_increasing && ident.concave && ident.complete && ident.exhaustive);

    let convex = DistortionFunction::Custom {
        name: "u^2".into(),
        g: Arc::new(|u: f64| u * u),
    };
    let sq = classify_distortion(&convex, 1025).unwrap();
    assert!(sq.strictly_increasing);
    assert!(!sq.concave);
    assert!(sq.complete);
    assert!(!sq.exhaustive);
}

// ------------------------------------------------------------------ bs distribution

#[test]
fn bs_distribution_has_the_compensated_normal_law() {
    let bs = bs_loss_distribution(0.1, 0.2, 2.0).unwrap();
    assert!((bs.quantile(0.5).unwrap() - 0.16).abs() < 1e-12);
    assert!((bs.quantile(0.01).unwrap() - (-0.49799054285327493)).abs() < 1e-10);
    let mean = choquet_integral(&bs, &DistortionFunction::Identity, 4096).unwrap();
    assert!((mean - 0.16).abs() < 1e-6);

    // mu = sigma^2/2 cancels the drift entirely.
    let flat = bs_loss_distribution(0.02, 0.2, 1.0).unwrap();
    let mean = choquet_integral(&flat, &DistortionFunction::Identity, 4096).unwrap();
    assert!(mean.abs() < 1e-9, "mean {mean}");
}

#[test]
fn bs_distribution_rejects_bad_parameters() {
    assert!(matches!(bs_loss_distribution(0.1, 0.0, 1.0), Err(CoreError::Domain(_))));
    assert!(matches!(bs_loss_distribution(0.1, -0.5, 1.0), Err(CoreError::Domain(_))));
    assert!(matches!(bs_loss_distribution(0.1, 0.2, 0.0), Err(CoreError::Domain(_))));
    assert!(matches!(bs_loss_distribution(f64::NAN, 0.2, 1.0), Err(CoreError::Domain(_))));
}

// ------------------------------------------------------------------ contract round trips

#[test]
fn continuous_quantile_cdf_round_trips() {
    let dists: Vec<Box<dyn LossDistribution>> = vec![
        Box::new(std_normal()),
        Box::new(NormalLoss::new(-0.4, 0.07).unwrap()),
        Box::new(bs_loss_distribution(0.1, 0.2, 2.0).unwrap()),
        Box::new(Uniform01),
    ];
    for (i, d) in dists.iter().enumerate() {
        for k in 1..40 {
            let p = k as f64 / 40.0;
            let q = d.quantile(p).unwrap();
            assert!((d.cdf(q) - p).abs() < 1e-8, "dist {i} p {p}");
        }
    }
}

#[test]
fn empirical_rejects_degenerate_samples() {
    assert!(matches!(
        EmpiricalDistribution::new(&[1.0]),
        Err(CoreError::InsufficientData(_))
    ));
    assert!(matches!(
        EmpiricalDistribution::new(&[]),
        Err(CoreError::InsufficientData(_))
    ));
    assert!(matches!(
        EmpiricalDistribution::new(&[1.0, f64::NAN]),
        Err(CoreError::RejectedInput(_))
    ));
}

// ------------------------------------------------------------------ report

#[test]
fn risk_report_round_trips_through_json_and_renders_labels() {
    let report = RiskReport {
        convention: "lower-tail return quantiles, values in percent".into(),
        gammas: vec![0.01, 0.05],
        wang_r: 0.5,
        blocks: vec![
            RiskBlock {
                source: "Empirical".into(),
                columns: vec!["AAA".into(), "BBB".into(), "Portfolio".into()],
                var_percent: vec![vec![-2.40, -3.10, -2.27], vec![-1.70, -2.20, -1.60]],
                esf_percent: vec![vec![-2.90, -3.80, -2.70], vec![-2.10, -2.70, -2.00]],
                wang_percent: vec![-0.50, -0.70, -0.45],
            },
            RiskBlock {
                source: "Copula Estimated".into(),
                columns: vec!["AAA".into(), "BBB".into(), "Portfolio".into()],
                var_percent: vec![vec![-2.50, -3.00, -2.30], vec![-1.80, -2.10, -1.65]],
                esf_percent: vec![vec![-3.00, -3.70, -2.75], vec![-2.20, -2.60, -2.05]],
                wang_percent: vec![-0.55, -0.65, -0.48],
            },
        ],
    };
    let json = serde_json::to_string_pretty(&report).unwrap();
    let back: RiskReport = serde_json::from_str(&json).unwrap();
    assert_eq!(report, back);

    let text = report.render_text();
    assert!(text.contains("Empirical"));
    assert!(text.contains("Copula Estimated"));
    assert!(text.contains("Portfolio"));
    assert!(text.contains("VaR"));
    assert!(text.contains("ESF"));
    assert!(text.contains("Wang"));
    assert!(text.contains("percent"));
    // ESF rows sit below VaR at the same level, losses more negative.
    for block in &report.blocks {
        for (vr, er) in block.var_percent.iter().zip(&block.esf_percent) {
            for (v, e) in vr.iter().zip(er) {
                assert!(e <= v, "esf {e} should not exceed var {v}");
            }
        }
    }
}
