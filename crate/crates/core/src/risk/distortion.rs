//! Distortion functions g: [0,1] -> [0,1] applied to survival probabilities,
//! plus their numerical classification (monotonicity/concavity and the
//! derived complete/exhaustive flags).

use crate::error::{CoreError, Result};
use crate::stats::{std_norm_cdf, std_norm_quantile};
use std::fmt;
use std::sync::Arc;

/// A distortion of survival probabilities. All variants satisfy g(0) = 0,
/// g(1) = 1 and are nondecreasing; `Custom` closures must do the same.
#[derive(Clone)]
pub enum DistortionFunction {
    /// g(u) = u; the Choquet value is the undistorted mean.
    Identity,
    /// Unit step at 1 - gamma; the Choquet value is the gamma-quantile.
    VaR { gamma: f64 },
    /// g(u) = min(u / tail, 1); the Choquet value averages the worst `tail`
    /// fraction of outcomes.
    Cvar { tail: f64 },
    /// g(u) = Phi(Phi^{-1}(u) + r), the normal-shift transform.
    Wang { r: f64 },
    /// User-supplied distortion; `name` labels diagnostics.
    Custom {
        name: String,
        g: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl fmt::Debug for DistortionFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl DistortionFunction {
    /// Short human-readable label for error messages and reports.
    pub fn label(&self) -> String {
        match self {
            Self::Identity => "identity".into(),
            Self::VaR { gamma } => format!("var({gamma})"),
            Self::Cvar { tail } => format!("cvar({tail})"),
            Self::Wang { r } => format!("wang({r})"),
            Self::Custom { name, .. } => format!("custom({name})"),
        }
    }

    /// Check parameter domains and, for custom closures, the endpoint
    /// conditions g(0) = 0 and g(1) = 1.
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Identity => Ok(()),
            Self::VaR { gamma } => {
                if gamma.is_finite() && *gamma > 0.0 && *gamma < 1.0 {
                    Ok(())
                } else {
                    Err(CoreError::Domain(format!(
                        "var distortion needs gamma in (0, 1), got {gamma}"
                    )))
                }
            }
            Self::Cvar { tail } => {
                if tail.is_finite() && *tail > 0.0 && *tail < 1.0 {
                    Ok(())
                } else {
                    Err(CoreError::Domain(format!(
                        "cvar distortion needs tail in (0, 1), got {tail}"
                    )))
                }
            }
            Self::Wang { r } => {
                if r.is_finite() {
                    Ok(())
                } else {
                    Err(CoreError::Domain(format!(
                        "wang distortion needs a finite load, got {r}"
                    )))
                }
            }
            Self::Custom { name, g } => {
                let at0 = g(0.0);
                let at1 = g(1.0);
                if at0.abs() > 1e-9 || (at1 - 1.0).abs() > 1e-9 {
                    return Err(CoreError::Domain(format!(
                        "custom distortion {name} violates g(0)=0, g(1)=1: got {at0}, {at1}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Evaluate g(u) with the argument clamped to [0, 1].
    pub fn eval(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match self {
            Self::Identity => u,
            Self::VaR { gamma } => {
                if u > 1.0 - gamma {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Cvar { tail } => (u / tail).min(1.0),
            Self::Wang { r } => {
                if u <= 0.0 {
                    0.0
                } else if u >= 1.0 {
                    1.0
                } else {
                    std_norm_cdf(std_norm_quantile(u) + r).clamp(0.0, 1.0)
                }
            }
            Self::Custom { g, .. } => g(u),
        }
    }

    /// The dual distortion g~(u) = 1 - g(1 - u).
    pub fn dual_eval(&self, u: f64) -> f64 {
        1.0 - self.eval(1.0 - u.clamp(0.0, 1.0))
    }

    /// Interior points of [0, 1] where g is not smooth; the integrator
    /// splits the x-domain at the matching quantiles.
    pub(crate) fn kinks(&self) -> Vec<f64> {
        match self {
            Self::VaR { gamma } => vec![1.0 - gamma],
            Self::Cvar { tail } => vec![*tail],
            _ => Vec::new(),
        }
    }
}

/// Numerical classification of a distortion on a uniform grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DistortionClass {
    pub strictly_increasing: bool,
    pub concave: bool,
    /// Complete risk measures require a strictly increasing distortion.
    pub complete: bool,
    /// Exhaustive risk measures require concavity on top of completeness.
    pub exhaustive: bool,
}

const STRICT_TOL: f64 = 1e-12;
const CONCAVE_TOL: f64 = 1e-10;

/// Classify a distortion function by sampling it on `grid` uniform nodes.
///
/// Strict monotonicity demands every successive difference exceed a small
/// positive tolerance; concavity demands every second difference stay below
/// a small tolerance.
pub fn classify_distortion(g: &DistortionFunction, grid: usize) -> Result<DistortionClass> {
    g.validate()?;
    if grid < 9 {
        return Err(CoreError::Domain(format!(
            "classification grid needs at least 9 nodes, got {grid}"
        )));
    }
    let h = 1.0 / (grid - 1) as f64;
    let values: Vec<f64> = (0..grid).map(|i| g.eval(i as f64 * h)).collect();
    let mut strictly_increasing = true;
    let mut concave = true;
    for w in values.windows(2) {
        if w[1] - w[0] <= STRICT_TOL {
            strictly_increasing = false;
        }
    }
    for w in values.windows(3) {
        if w[2] - 2.0 * w[1] + w[0] > CONCAVE_TOL {
            concave = false;
        }
    }
    Ok(DistortionClass {
        strictly_increasing,
        concave,
        complete: strictly_increasing,
        exhaustive: strictly_increasing && concave,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wang_is_a_shift_in_quantile_space() {
        let g = DistortionFunction::Wang { r: 0.5 };
        // g(Phi(z)) = Phi(z + r)
        for z in [-2.0, -0.3, 0.0, 1.7] {
            let u = std_norm_cdf(z);
            assert!((g.eval(u) - std_norm_cdf(z + 0.5)).abs() < 1e-12);
        }
        assert_eq!(g.eval(0.0), 0.0);
        assert_eq!(g.eval(1.0), 1.0);
    }

    #[test]
    fn dual_of_the_dual_is_the_original() {
        let g = DistortionFunction::Cvar { tail: 0.1 };
        for u in [0.0, 0.05, 0.1, 0.4, 0.95, 1.0] {
            let dd = 1.0 - g.dual_eval(1.0 - u);
            assert!((dd - g.eval(u)).abs() < 1e-12, "u {u}");
        }
    }

    #[test]
    fn var_step_sits_at_the_survival_level() {
        let g = DistortionFunction::VaR { gamma: 0.05 };
        assert_eq!(g.eval(0.95), 0.0);
        assert_eq!(g.eval(0.95 + 1e-9), 1.0);
        assert_eq!(g.eval(0.0), 0.0);
        assert_eq!(g.eval(1.0), 1.0);
    }

    #[test]
    fn custom_endpoint_violations_are_rejected() {
        let bad = DistortionFunction::Custom {
            name: "off-by-half".into(),
            g: Arc::new(|u: f64| 0.5 * u),
        };
        assert!(bad.validate().is_err());
    }
}
