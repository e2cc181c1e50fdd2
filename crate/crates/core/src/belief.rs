//! Recursive belief update over an observed decision history.
//!
//! An agent does not know the beliefs of the agents before it, so it
//! interprets every earlier decision as if that agent had started from the
//! same initial belief it holds itself. Updating then proceeds one decision
//! at a time: from the belief reached after `k` decisions the agent derives
//! the threshold it thinks agent `k + 1` used, and folds in the probability of
//! the announced decision under either state.
//!
//! The update runs in log-odds space:
//! `logit(q') = logit(q) + ln P(ĥ | H=0) - ln P(ĥ | H=1)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::decision::{check_belief, clamp_log_odds, logistic, logit, threshold_from_log_odds, CostPair};
use crate::likelihood::{Hypothesis, SignalModel};
use crate::{ModelError, Result};

/// Ordered decisions `ĥ₁ … ĥ_k` made by the predecessors of an agent.
///
/// Serialized as a string of `0`/`1` characters, earliest decision first.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DecisionHistory(Vec<Hypothesis>);

impl DecisionHistory {
    pub fn new(decisions: Vec<Hypothesis>) -> Self {
        Self(decisions)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    /// History of length `len` whose decisions are the binary digits of
    /// `code`, earliest decision in the most significant position.
    pub fn from_code(code: u64, len: usize) -> Self {
        Self(
            (0..len)
                .rev()
                .map(|shift| Hypothesis::from_bit((code >> shift) & 1 == 1))
                .collect(),
        )
    }

    /// Inverse of [`DecisionHistory::from_code`].
    pub fn code(&self) -> u64 {
        self.0.iter().fold(0, |acc, h| (acc << 1) | h.index() as u64)
    }

    /// All `2^len` histories of a given length in ascending code order.
    pub fn all(len: usize) -> impl Iterator<Item = DecisionHistory> {
        (0..1u64 << len).map(move |code| Self::from_code(code, len))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn decisions(&self) -> &[Hypothesis] {
        &self.0
    }

    pub fn prefix(&self, len: usize) -> DecisionHistory {
        Self(self.0[..len].to_vec())
    }

    pub fn push(&mut self, decision: Hypothesis) {
        self.0.push(decision);
    }

    pub fn last(&self) -> Option<Hypothesis> {
        self.0.last().copied()
    }
}

impl From<Vec<Hypothesis>> for DecisionHistory {
    fn from(v: Vec<Hypothesis>) -> Self {
        Self(v)
    }
}

impl fmt::Display for DecisionHistory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for h in &self.0 {
            write!(f, "{h}")?;
        }
        Ok(())
    }
}

impl FromStr for DecisionHistory {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .filter(|c| !c.is_whitespace() && *c != ',')
            .map(|c| match c {
                '0' => Ok(Hypothesis::Zero),
                '1' => Ok(Hypothesis::One),
                other => Err(ModelError::InvalidParameter {
                    name: "history",
                    message: format!("unexpected character {other:?} in decision history"),
                }),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}

impl Serialize for DecisionHistory {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DecisionHistory {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Belief reached after processing a history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdatedBelief {
    pub belief: f64,
    pub log_odds: f64,
    /// Set when some stage left the interior band and was clamped, or when
    /// both tail masses of a step vanished numerically.
    pub saturated: bool,
}

impl UpdatedBelief {
    fn from_log_odds(log_odds: f64, saturated: bool) -> Self {
        Self {
            belief: logistic(log_odds),
            log_odds,
            saturated,
        }
    }
}

/// Beliefs after each prefix of a history: `q, q^{ĥ₁}, q^{ĥ₁ĥ₂}, …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefTrajectory {
    pub stages: Vec<f64>,
    pub saturated: bool,
}

/// One update step in log-odds form for an agent that believes the
/// predecessor started from `log_odds` and observed `decision`.
pub(crate) fn step_log_odds<M: SignalModel + ?Sized>(
    model: &M,
    costs: &CostPair,
    log_odds: f64,
    decision: Hypothesis,
) -> Result<(f64, bool)> {
    let threshold = threshold_from_log_odds(model, costs, log_odds)?;
    let (under0, under1) = match decision {
        Hypothesis::Zero => (
            model.log_cdf(threshold, Hypothesis::Zero)?,
            model.log_cdf(threshold, Hypothesis::One)?,
        ),
        Hypothesis::One => (
            model.log_sf(threshold, Hypothesis::Zero)?,
            model.log_sf(threshold, Hypothesis::One)?,
        ),
    };
    let increment = under0 - under1;
    if increment.is_nan() {
        // Both tail masses vanished: the decision carries no usable evidence.
        return Ok((log_odds, true));
    }
    // An infinite increment clamps to the band edge and is flagged there.
    Ok(clamp_log_odds(log_odds + increment))
}

fn initial_log_odds(q: f64) -> Result<(f64, bool)> {
    Ok(clamp_log_odds(logit(check_belief(q)?)))
}

/// Belief of an agent with initial belief `q` after observing `history`.
pub fn update_belief<M: SignalModel + ?Sized>(
    model: &M,
    costs: &CostPair,
    q: f64,
    history: &DecisionHistory,
) -> Result<UpdatedBelief> {
    let (mut x, mut saturated) = initial_log_odds(q)?;
    for &decision in history.decisions() {
        let (next, sat) = step_log_odds(model, costs, x, decision)?;
        x = next;
        saturated |= sat;
    }
    Ok(UpdatedBelief::from_log_odds(x, saturated))
}

/// Every intermediate belief of [`update_belief`].
pub fn belief_trajectory<M: SignalModel + ?Sized>(
    model: &M,
    costs: &CostPair,
    q: f64,
    history: &DecisionHistory,
) -> Result<BeliefTrajectory> {
    let (mut x, mut saturated) = initial_log_odds(q)?;
    let mut stages = Vec::with_capacity(history.len() + 1);
    stages.push(logistic(x));
    for &decision in history.decisions() {
        let (next, sat) = step_log_odds(model, costs, x, decision)?;
        x = next;
        saturated |= sat;
        stages.push(logistic(x));
    }
    Ok(BeliefTrajectory { stages, saturated })
}
