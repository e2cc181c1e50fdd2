//! Bayes decision thresholds, the likelihood ratio test and its error
//! probabilities.

use serde::{Deserialize, Serialize};

use crate::likelihood::{Hypothesis, SignalModel};
use crate::{ModelError, Result, BELIEF_FLOOR};

/// Bayes costs of the two error types; correct decisions cost nothing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostPair {
    /// Cost of a false alarm (decide 1 when H = 0).
    pub c10: f64,
    /// Cost of a missed detection (decide 0 when H = 1).
    pub c01: f64,
}

impl Default for CostPair {
    fn default() -> Self {
        Self { c10: 1.0, c01: 1.0 }
    }
}

impl CostPair {
    pub fn new(c10: f64, c01: f64) -> Result<Self> {
        let costs = Self { c10, c01 };
        costs.validate()?;
        Ok(costs)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("c10", self.c10), ("c01", self.c01)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ModelError::InvalidParameter {
                    name,
                    message: format!("costs must be positive and finite, got {v}"),
                });
            }
        }
        Ok(())
    }

    /// The prior `c01 / (c10 + c01)` at which the test threshold balances
    /// the two error types.
    pub fn critical_prior(&self) -> f64 {
        self.c01 / (self.c10 + self.c01)
    }

    /// `ln(c10 / c01)`.
    pub fn log_ratio(&self) -> f64 {
        self.c10.ln() - self.c01.ln()
    }
}

/// Type I and Type II error probabilities of one threshold test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorProbPair {
    /// `P(decide 1 | H = 0)`.
    pub p_fa: f64,
    /// `P(decide 0 | H = 1)`.
    pub p_md: f64,
}

pub(crate) fn check_belief(q: f64) -> Result<f64> {
    if q > 0.0 && q < 1.0 {
        Ok(q)
    } else {
        Err(ModelError::InvalidBelief(q))
    }
}

/// Clamps a belief into `[BELIEF_FLOOR, 1 - BELIEF_FLOOR]`; NaN maps to 1/2.
pub fn clamp_belief(q: f64) -> f64 {
    if q.is_nan() {
        0.5
    } else {
        q.clamp(BELIEF_FLOOR, 1.0 - BELIEF_FLOOR)
    }
}

pub(crate) fn logit(q: f64) -> f64 {
    q.ln() - (-q).ln_1p()
}

pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log-odds bound matching the `[BELIEF_FLOOR, 1 - BELIEF_FLOOR]` clamp.
pub(crate) fn max_log_odds() -> f64 {
    logit(1.0 - BELIEF_FLOOR)
}

/// Clamps a log-odds belief into the interior band. Returns the clamped value
/// and whether clamping happened.
pub(crate) fn clamp_log_odds(x: f64) -> (f64, bool) {
    let bound = max_log_odds();
    if x.is_nan() {
        (0.0, true)
    } else if x > bound {
        (bound, true)
    } else if x < -bound {
        (-bound, true)
    } else {
        (x, false)
    }
}

/// Threshold for a belief given in log-odds form `ln(q / (1 - q))`.
pub(crate) fn threshold_from_log_odds<M: SignalModel + ?Sized>(
    model: &M,
    costs: &CostPair,
    log_odds: f64,
) -> Result<f64> {
    let (log_odds, _) = clamp_log_odds(log_odds);
    model.threshold_for_log_ratio(costs.log_ratio() + log_odds)
}

/// The signal value `λ(q)` at which the likelihood ratio equals the
/// cost-weighted prior odds `c10 q / (c01 (1 - q))`.
pub fn solve_threshold<M: SignalModel + ?Sized>(model: &M, costs: &CostPair, q: f64) -> Result<f64> {
    let q = check_belief(q)?;
    threshold_from_log_odds(model, costs, logit(q))
}

/// Error probabilities of the test "decide 1 iff y >= threshold".
pub fn error_probs<M: SignalModel + ?Sized>(model: &M, threshold: f64) -> Result<ErrorProbPair> {
    Ok(ErrorProbPair {
        p_fa: model.sf(threshold, Hypothesis::Zero)?,
        p_md: model.cdf(threshold, Hypothesis::One)?,
    })
}

/// Runs the likelihood ratio test. A signal exactly at the threshold
/// decides 1.
pub fn decide<M: SignalModel + ?Sized>(model: &M, costs: &CostPair, belief: f64, y: f64) -> Result<Hypothesis> {
    let threshold = solve_threshold(model, costs, belief)?;
    Ok(Hypothesis::from_bit(y >= threshold))
}
