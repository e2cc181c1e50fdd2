//! Numerical checks of the open-mindedness results for the Gaussian model.
//!
//! The key inequality compares, for a threshold `λ < h1 / 2`,
//!
//! ```text
//! ∫_{-∞}^{λ} e^{-y²/2 + λ h1} dy · ∫_{λ}^{∞} e^{-y²/2 + λ h1} dy
//!     < ∫_{-∞}^{λ} e^{-y²/2 + y h1} dy · ∫_{λ}^{∞} e^{-y²/2 + y h1} dy
//! ```
//!
//! It has no known proof, so it is only ever reported as numerically
//! supported on a grid. The theorem checks read everything off optimizer
//! output.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decision::CostPair;
use crate::likelihood::{std_normal_cdf, GaussianLikelihood};
use crate::optimize::{optimize_beliefs, OptimizerOptions};
use crate::quadrature::Quadrature;
use crate::risk::{check_probability, TwoAgentTerms};
use crate::{ModelError, Result};

const TWO_PI: f64 = std::f64::consts::TAU;
/// Integration window half-width in standard deviations.
const WINDOW: f64 = 12.0;

fn quadrature() -> Quadrature {
    Quadrature {
        abs_tol: 0.0,
        rel_tol: 1e-13,
        max_subdivisions: 4000,
    }
}

/// Both sides of the inequality at one `(h1, λ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConjectureSample {
    pub h1: f64,
    pub lambda: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`.
    pub gap: f64,
    pub lhs_quadrature: f64,
    pub rhs_quadrature: f64,
}

impl ConjectureSample {
    /// Largest relative difference between closed form and quadrature.
    pub fn quadrature_mismatch(&self) -> f64 {
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs());
        rel(self.lhs, self.lhs_quadrature).max(rel(self.rhs, self.rhs_quadrature))
    }
}

/// `∫_{-∞}^{λ} g · ∫_{λ}^{∞} g` for `g(y) = exp(-y²/2σ² + e(y)/σ²)`, where
/// `e(y)` is `λ h1` (constant exponent) or `y h1`. Integrals are truncated
/// `WINDOW` standard deviations beyond the integrand's mode.
fn two_sided_product(h1: f64, sigma: f64, lambda: f64, linear: bool) -> Result<f64> {
    let s2 = sigma * sigma;
    let g = |y: f64| {
        let tilt = if linear { y * h1 } else { lambda * h1 };
        (-0.5 * y * y / s2 + tilt / s2).exp()
    };
    let mode = if linear { h1 } else { 0.0 };
    let q = quadrature();
    let below = q.integrate(g, lambda.min(mode) - WINDOW * sigma, lambda)?;
    let above = q.integrate(g, lambda, lambda.max(mode) + WINDOW * sigma)?;
    Ok(below.value * above.value)
}

fn check_h1(h1: f64) -> Result<()> {
    if h1 > 0.0 && h1.is_finite() {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter {
            name: "h1",
            message: format!("must be positive and finite, got {h1}"),
        })
    }
}

/// Evaluates both sides in closed form and by quadrature.
pub fn conjecture_gap(h1: f64, lambda: f64) -> Result<ConjectureSample> {
    check_h1(h1)?;
    if !lambda.is_finite() {
        return Err(ModelError::InvalidParameter {
            name: "lambda",
            message: format!("must be finite, got {lambda}"),
        });
    }
    // Written so that λ = h1/2 gives bit-identical sides.
    let lhs = TWO_PI * (2.0 * lambda * h1).exp() * (std_normal_cdf(lambda) * std_normal_cdf(-lambda));
    let rhs = TWO_PI * (h1 * h1).exp() * (std_normal_cdf(lambda - h1) * std_normal_cdf(h1 - lambda));
    Ok(ConjectureSample {
        h1,
        lambda,
        lhs,
        rhs,
        gap: rhs - lhs,
        lhs_quadrature: two_sided_product(h1, 1.0, lambda, false)?,
        rhs_quadrature: two_sided_product(h1, 1.0, lambda, true)?,
    })
}

/// `points` evenly spaced thresholds from `lower` to `h1/2 - margin` per `h1`,
/// evaluated in parallel and returned in input order.
pub fn conjecture_scan(h1_values: &[f64], lower: f64, margin: f64, points: usize) -> Result<Vec<ConjectureSample>> {
    if points == 0 {
        return Err(ModelError::InvalidParameter {
            name: "points",
            message: "at least one point is required".into(),
        });
    }
    let jobs: Vec<(f64, f64)> = h1_values
        .iter()
        .flat_map(|&h1| {
            let upper = 0.5 * h1 - margin;
            (0..points).map(move |i| {
                let lambda = if points == 1 {
                    upper
                } else {
                    lower + (upper - lower) * i as f64 / (points - 1) as f64
                };
                (h1, lambda)
            })
        })
        .collect();
    jobs.into_par_iter()
        .map(|(h1, lambda)| conjecture_gap(h1, lambda))
        .collect()
}

/// The σ-parameterized products against `σ²` times the unit-variance
/// products at `(λ/σ, h1/σ)`, both sides by quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescalingReport {
    pub h1: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub lhs_scaled: f64,
    pub lhs_unit: f64,
    pub lhs_ratio: f64,
    pub rhs_scaled: f64,
    pub rhs_unit: f64,
    pub rhs_ratio: f64,
}

impl RescalingReport {
    pub fn max_ratio_error(&self) -> f64 {
        (self.lhs_ratio - 1.0).abs().max((self.rhs_ratio - 1.0).abs())
    }
}

pub fn verify_rescaling(h1: f64, sigma: f64, lambda: f64) -> Result<RescalingReport> {
    check_h1(h1)?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(ModelError::InvalidParameter {
            name: "sigma",
            message: format!("must be positive and finite, got {sigma}"),
        });
    }
    if lambda.is_nan() || lambda >= 0.5 * h1 {
        return Err(ModelError::InvalidParameter {
            name: "lambda",
            message: format!("must be below h1/2 = {}, got {lambda}", 0.5 * h1),
        });
    }
    let (h1u, lu) = (h1 / sigma, lambda / sigma);
    let s2 = sigma * sigma;
    let lhs_scaled = two_sided_product(h1, sigma, lambda, false)?;
    let rhs_scaled = two_sided_product(h1, sigma, lambda, true)?;
    let lhs_unit = s2 * two_sided_product(h1u, 1.0, lu, false)?;
    let rhs_unit = s2 * two_sided_product(h1u, 1.0, lu, true)?;
    Ok(RescalingReport {
        h1,
        sigma,
        lambda,
        lhs_scaled,
        lhs_unit,
        lhs_ratio: lhs_scaled / lhs_unit,
        rhs_scaled,
        rhs_unit,
        rhs_ratio: rhs_scaled / rhs_unit,
    })
}

/// Slope of the chord between the second agent's two operating points,
/// `(P^II_{2,1} - P^II_{2,0}) / (P^I_{2,1} - P^I_{2,0})`, for belief `q2`.
/// The second agent's error probabilities do not depend on `p0` or `q1`.
pub fn slope_ratio(model: &GaussianLikelihood, costs: &CostPair, q2: f64) -> Result<f64> {
    let t = TwoAgentTerms::compute(model, costs, 0.5, 0.5, q2)?;
    let den = t.p_fa2_after1 - t.p_fa2_after0;
    if den == 0.0 || !den.is_finite() {
        return Err(ModelError::Degenerate(format!(
            "false alarm probabilities coincide at q2 = {q2}"
        )));
    }
    Ok((t.p_md2_after1 - t.p_md2_after0) / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Inconclusive,
}

impl CheckStatus {
    fn from_margin(margin: f64, converged: bool) -> Self {
        match (converged, margin > 0.0) {
            (false, _) => Self::Inconclusive,
            (true, true) => Self::Pass,
            (true, false) => Self::Fail,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Claim {
    /// At the critical prior both optimal beliefs equal the truth (within `tol`).
    TruthOptimal,
    /// `q1*` lies strictly between `p0` and the critical prior.
    OpenMinded,
    /// The last agent leans further from the critical prior than `p0`.
    LastAgentBias,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremCheck {
    pub p0: f64,
    pub claim: Claim,
    pub beliefs_star: Vec<f64>,
    pub risk_star: f64,
    /// Positive when the claim holds; for [`Claim::TruthOptimal`] this is
    /// `tol` minus the largest deviation.
    pub margin: f64,
    pub status: CheckStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeCheck {
    pub q2: f64,
    pub ratio: f64,
    pub status: CheckStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub critical_prior: f64,
    pub tol: f64,
    pub checks: Vec<TheoremCheck>,
    pub slope_checks: Vec<SlopeCheck>,
    /// `q1*` strictly increasing in `p0` over the converged samples; `None`
    /// with fewer than two usable samples.
    pub q1_increasing_in_p0: Option<bool>,
}

impl TheoremReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.status == CheckStatus::Pass)
            && self.slope_checks.iter().all(|c| c.status == CheckStatus::Pass)
            && self.q1_increasing_in_p0 != Some(false)
    }
}

/// Optimizes the two-agent chain at each `p0` and checks the truth-optimal
/// and open-minded claims against the result. Slope checks are run at the
/// optimal `q2` of every sample below the critical prior.
pub fn verify_theorems(
    model: &GaussianLikelihood,
    costs: &CostPair,
    p0_samples: &[f64],
    tol: f64,
    options: &OptimizerOptions,
) -> Result<TheoremReport> {
    costs.validate()?;
    if tol.is_nan() || tol <= 0.0 {
        return Err(ModelError::InvalidParameter {
            name: "tol",
            message: format!("must be positive, got {tol}"),
        });
    }
    for &p0 in p0_samples {
        check_probability(p0)?;
    }
    let critical = costs.critical_prior();
    let results = p0_samples
        .par_iter()
        .map(|&p0| optimize_beliefs(model, costs, p0, 2, options))
        .collect::<Result<Vec<_>>>()?;

    let mut checks = Vec::new();
    let mut slope_checks = Vec::new();
    let mut usable = Vec::new();
    for (&p0, res) in p0_samples.iter().zip(&results) {
        let q = res.beliefs_star.as_slice();
        let (q1, q2) = (q[0], q[1]);
        let converged = res.converged;
        let mut push = |claim, margin: f64| {
            checks.push(TheoremCheck {
                p0,
                claim,
                beliefs_star: q.to_vec(),
                risk_star: res.risk_star,
                margin,
                status: CheckStatus::from_margin(margin, converged),
            })
        };
        if (p0 - critical).abs() <= f64::EPSILON {
            push(Claim::TruthOptimal, tol - (q1 - p0).abs().max((q2 - p0).abs()));
        } else if p0 < critical {
            push(Claim::OpenMinded, (q1 - p0).min(critical - q1));
            push(Claim::LastAgentBias, p0 - q2);
            let ratio = slope_ratio(model, costs, q2)?;
            slope_checks.push(SlopeCheck {
                q2,
                ratio,
                status: CheckStatus::from_margin(ratio + 1.0, true),
            });
        } else {
            push(Claim::OpenMinded, (p0 - q1).min(q1 - critical));
            push(Claim::LastAgentBias, q2 - p0);
        }
        if converged {
            usable.push((p0, q1));
        }
    }
    usable.sort_by(|a, b| a.0.total_cmp(&b.0));
    let q1_increasing_in_p0 = (usable.len() >= 2).then(|| usable.windows(2).all(|w| w[1].1 > w[0].1));
    Ok(TheoremReport {
        critical_prior: critical,
        tol,
        checks,
        slope_checks,
        q1_increasing_in_p0,
    })
}
