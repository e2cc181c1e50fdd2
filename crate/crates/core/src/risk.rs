//! Exact Bayes risk of the final agent.
//!
//! Two layers of probabilities are involved. Agent `n` picks its threshold
//! from its *own* reading of the history (its initial belief pushed through
//! the belief update), yet the probability that it actually announces a
//! given decision is evaluated under the true state using that threshold.
//! The risk is assembled by enumerating all `2^N` decision sequences.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{step_log_odds, DecisionHistory};
use crate::decision::{
    check_belief, clamp_belief, clamp_log_odds, error_probs, logistic, logit, solve_threshold, threshold_from_log_odds,
    CostPair,
};
use crate::likelihood::{Hypothesis, SignalModel};
use crate::{ModelError, Result};

/// Largest chain length accepted by the enumerator.
pub const MAX_AGENTS: usize = 24;

/// Initial beliefs `q₁ … q_N`, each in the open unit interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BeliefVector(Vec<f64>);

impl BeliefVector {
    pub fn new(beliefs: Vec<f64>) -> Result<Self> {
        if beliefs.is_empty() {
            return Err(ModelError::InvalidParameter {
                name: "beliefs",
                message: "at least one agent is required".into(),
            });
        }
        if beliefs.len() > MAX_AGENTS {
            return Err(ModelError::InvalidParameter {
                name: "beliefs",
                message: format!("at most {MAX_AGENTS} agents are supported, got {}", beliefs.len()),
            });
        }
        for &q in &beliefs {
            check_belief(q)?;
        }
        Ok(Self(beliefs))
    }

    /// `n` agents sharing the belief `q`.
    pub fn uniform(q: f64, n: usize) -> Result<Self> {
        Self::new(vec![q; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for BeliefVector {
    type Error = ModelError;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<BeliefVector> for Vec<f64> {
    fn from(b: BeliefVector) -> Self {
        b.0
    }
}

pub(crate) fn check_probability(p0: f64) -> Result<f64> {
    if p0 > 0.0 && p0 < 1.0 {
        Ok(p0)
    } else {
        Err(ModelError::InvalidProbability(p0))
    }
}

/// Joint probability of one full run of the chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryMass {
    /// Decisions of agents `1 … N-1`.
    pub history: DecisionHistory,
    pub final_decision: Hypothesis,
    pub state: Hypothesis,
    pub probability: f64,
}

/// Threshold agent `agent` (1-based) applies after seeing `prefix`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentThreshold {
    pub agent: usize,
    pub prefix: DecisionHistory,
    pub updated_belief: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub risk: f64,
    pub p0: f64,
    pub beliefs: BeliefVector,
    pub history_pmf: Vec<HistoryMass>,
    pub per_agent_thresholds: Vec<AgentThreshold>,
    pub saturated: bool,
}

impl RiskReport {
    pub fn total_probability(&self) -> f64 {
        self.history_pmf.iter().map(|m| m.probability).sum()
    }

    pub fn threshold(&self, agent: usize, prefix: &DecisionHistory) -> Option<f64> {
        self.per_agent_thresholds
            .iter()
            .find(|t| t.agent == agent && &t.prefix == prefix)
            .map(|t| t.threshold)
    }
}

/// Per-agent updated beliefs (log-odds) and thresholds for every prefix the
/// agent can see, indexed by prefix code.
struct AgentTable {
    log_odds: Vec<f64>,
    thresholds: Vec<f64>,
}

struct Enumeration {
    agents: Vec<AgentTable>,
    /// `masses[h][code]`: `P(sequence = code, H = h)`.
    masses: [Vec<f64>; 2],
    saturated: bool,
}

fn enumerate<M: SignalModel + ?Sized>(
    model: &M,
    costs: &CostPair,
    p0: f64,
    beliefs: &BeliefVector,
) -> Result<Enumeration> {
    costs.validate()?;
    check_probability(p0)?;
    let mut saturated = false;
    let mut agents = Vec::with_capacity(beliefs.len());
    for (n, &q) in beliefs.as_slice().iter().enumerate() {
        // Agent n+1 sees prefixes of length n; grow its belief tree level by level.
        let (root, sat) = clamp_log_odds(logit(q));
        saturated |= sat;
        let mut level = vec![root];
        for _ in 0..n {
            let mut next = Vec::with_capacity(level.len() * 2);
            for &x in &level {
                for bit in Hypothesis::BOTH {
                    let (child, sat) = step_log_odds(model, costs, x, bit)?;
                    saturated |= sat;
                    next.push(child);
                }
            }
            level = next;
        }
        let thresholds = level
            .iter()
            .map(|&x| threshold_from_log_odds(model, costs, x))
            .collect::<Result<Vec<_>>>()?;
        agents.push(AgentTable {
            log_odds: level,
            thresholds,
        });
    }

    let mut masses = [vec![p0], vec![1.0 - p0]];
    for (state, mass) in Hypothesis::BOTH.into_iter().zip(masses.iter_mut()) {
        for agent in &agents {
            let mut next = Vec::with_capacity(mass.len() * 2);
            for (&m, &t) in mass.iter().zip(&agent.thresholds) {
                next.push(m * model.cdf(t, state)?);
                next.push(m * model.sf(t, state)?);
            }
            *mass = next;
        }
    }
    Ok(Enumeration {
        agents,
        masses,
        saturated,
    })
}

impl Enumeration {
    fn risk(&self, costs: &CostPair) -> f64 {
        let [h0, h1] = &self.masses;
        h0.iter()
            .zip(h1)
            .enumerate()
            .map(|(code, (&m0, &m1))| if code & 1 == 1 { costs.c10 * m0 } else { costs.c01 * m1 })
            .sum()
    }
}

/// Bayes risk of agent `N` without the detailed breakdown.
pub fn bayes_risk<M: SignalModel + ?Sized>(
    model: &M,
    costs: &CostPair,
    p0: f64,
    beliefs: &BeliefVector,
) -> Result<f64> {
    Ok(enumerate(model, costs, p0, beliefs)?.risk(costs))
}

/// Bayes risk of agent `N` with the joint pmf of every run and every
/// threshold used along the way.
pub fn exact_bayes_risk<M: SignalModel + ?Sized>(
    model: &M,
    costs: &CostPair,
    p0: f64,
    beliefs: &BeliefVector,
) -> Result<RiskReport> {
    let e = enumerate(model, costs, p0, beliefs)?;
    let n = beliefs.len();
    let mut history_pmf = Vec::with_capacity(2 << n);
    for code in 0..1u64 << n {
        let history = DecisionHistory::from_code(code >> 1, n - 1);
        let final_decision = Hypothesis::from_bit(code & 1 == 1);
        for state in Hypothesis::BOTH {
            history_pmf.push(HistoryMass {
                history: history.clone(),
                final_decision,
                state,
                probability: e.masses[state.index()][code as usize],
            });
        }
    }
    let per_agent_thresholds = e
        .agents
        .iter()
        .enumerate()
        .flat_map(|(k, table)| {
            table
                .thresholds
                .iter()
                .zip(&table.log_odds)
                .enumerate()
                .map(move |(code, (&threshold, &x))| AgentThreshold {
                    agent: k + 1,
                    prefix: DecisionHistory::from_code(code as u64, k),
                    updated_belief: logistic(x),
                    threshold,
                })
        })
        .collect();
    Ok(RiskReport {
        risk: e.risk(costs),
        p0,
        beliefs: beliefs.clone(),
        history_pmf,
        per_agent_thresholds,
        saturated: e.saturated,
    })
}

/// A rectangular grid of belief vectors, one axis per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefGrid {
    pub axes: Vec<Vec<f64>>,
}

impl BeliefGrid {
    pub fn new(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() || axes.iter().any(|a| a.is_empty()) {
            return Err(ModelError::InvalidParameter {
                name: "grid",
                message: "every axis needs at least one point".into(),
            });
        }
        for &q in axes.iter().flatten() {
            check_belief(q)?;
        }
        Ok(Self { axes })
    }

    /// The same axis repeated for every agent.
    pub fn square(axis: Vec<f64>, agents: usize) -> Result<Self> {
        Self::new(vec![axis; agents])
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid point `index` in row-major order (last axis varies fastest).
    pub fn point(&self, mut index: usize) -> Vec<f64> {
        let mut point = vec![0.0; self.axes.len()];
        for (slot, axis) in point.iter_mut().zip(&self.axes).rev() {
            *slot = axis[index % axis.len()];
            index /= axis.len();
        }
        point
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub beliefs: Vec<f64>,
    pub risk: f64,
}

/// One exact risk evaluation per grid point, in row-major grid order.
pub fn risk_surface<M: SignalModel + ?Sized>(
    model: &M,
    costs: &CostPair,
    p0: f64,
    grid: &BeliefGrid,
) -> Result<Vec<SurfacePoint>> {
    check_probability(p0)?;
    (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let beliefs = BeliefVector::new(grid.point(i))?;
            let risk = bayes_risk(model, costs, p0, &beliefs)?;
            Ok(SurfacePoint {
                beliefs: beliefs.into_inner(),
                risk,
            })
        })
        .collect()
}

/// All quantities of the two-agent chain, computed term by term in
/// probability space.
///
/// `*_seen` are agent 1's error probabilities as agent 2 imagines them
/// (threshold from `q2`); `*_after0` / `*_after1` belong to agent 2 after
/// observing agent 1 announce 0 / 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoAgentTerms {
    pub p_fa1: f64,
    pub p_md1: f64,
    pub p_fa1_seen: f64,
    pub p_md1_seen: f64,
    pub q2_after0: f64,
    pub q2_after1: f64,
    pub p_fa2_after0: f64,
    pub p_md2_after0: f64,
    pub p_fa2_after1: f64,
    pub p_md2_after1: f64,
    pub risk: f64,
}

impl TwoAgentTerms {
    pub fn compute<M: SignalModel + ?Sized>(model: &M, costs: &CostPair, p0: f64, q1: f64, q2: f64) -> Result<Self> {
        check_probability(p0)?;
        let first = error_probs(model, solve_threshold(model, costs, q1)?)?;
        let seen = error_probs(model, solve_threshold(model, costs, q2)?)?;

        let keep0 = q2 * (1.0 - seen.p_fa);
        let q2_after0 = clamp_belief(keep0 / (keep0 + (1.0 - q2) * seen.p_md));
        let keep1 = q2 * seen.p_fa;
        let q2_after1 = clamp_belief(keep1 / (keep1 + (1.0 - q2) * (1.0 - seen.p_md)));

        let after0 = error_probs(model, solve_threshold(model, costs, q2_after0)?)?;
        let after1 = error_probs(model, solve_threshold(model, costs, q2_after1)?)?;

        let risk = costs.c10 * (after0.p_fa * (1.0 - first.p_fa) + after1.p_fa * first.p_fa) * p0
            + costs.c01 * (after0.p_md * first.p_md + after1.p_md * (1.0 - first.p_md)) * (1.0 - p0);

        Ok(Self {
            p_fa1: first.p_fa,
            p_md1: first.p_md,
            p_fa1_seen: seen.p_fa,
            p_md1_seen: seen.p_md,
            q2_after0,
            q2_after1,
            p_fa2_after0: after0.p_fa,
            p_md2_after0: after0.p_md,
            p_fa2_after1: after1.p_fa,
            p_md2_after1: after1.p_md,
            risk,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::update_belief;
    use crate::likelihood::GaussianLikelihood;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn hist(s: &str) -> DecisionHistory {
        s.parse().unwrap()
    }

    #[test]
    fn single_agent_is_plain_bayes_risk() {
        let m = GaussianLikelihood::new(1.0, 1.5).unwrap();
        let c = CostPair::new(1.0, 2.0).unwrap();
        let (p0, q) = (0.35, 0.6);
        let e = error_probs(&m, solve_threshold(&m, &c, q).unwrap()).unwrap();
        let want = c.c10 * p0 * e.p_fa + c.c01 * (1.0 - p0) * e.p_md;
        let report = exact_bayes_risk(&m, &c, p0, &BeliefVector::new(vec![q]).unwrap()).unwrap();
        assert_relative_eq!(report.risk, want, max_relative = 1e-14);
        assert_eq!(report.history_pmf.len(), 4);
        assert!(report.history_pmf.iter().all(|m| m.history.is_empty()));
    }

    #[test]
    fn two_agent_enumeration_equals_term_expansion() {
        let m = GaussianLikelihood::standard();
        let c = CostPair::default();
        for (p0, q1, q2) in [(0.3, 0.38, 0.23), (0.3, 0.3, 0.3), (0.7, 0.1, 0.9), (0.5, 0.5, 0.5)] {
            let b = BeliefVector::new(vec![q1, q2]).unwrap();
            let general = bayes_risk(&m, &c, p0, &b).unwrap();
            let terms = TwoAgentTerms::compute(&m, &c, p0, q1, q2).unwrap();
            assert!((general - terms.risk).abs() < 1e-12, "{general} vs {}", terms.risk);
        }
    }

    #[test]
    fn pmf_sums_to_one_and_risk_matches_pmf() {
        let m = GaussianLikelihood::new(0.8, 1.1).unwrap();
        let c = CostPair::new(2.0, 1.0).unwrap();
        let b = BeliefVector::new(vec![0.2, 0.7, 0.45, 0.6]).unwrap();
        let r = exact_bayes_risk(&m, &c, 0.4, &b).unwrap();
        assert_eq!(r.history_pmf.len(), 32);
        assert!((r.total_probability() - 1.0).abs() < 1e-10);
        let from_pmf: f64 = r
            .history_pmf
            .iter()
            .map(|h| match (h.final_decision, h.state) {
                (Hypothesis::One, Hypothesis::Zero) => c.c10 * h.probability,
                (Hypothesis::Zero, Hypothesis::One) => c.c01 * h.probability,
                _ => 0.0,
            })
            .sum();
        assert_relative_eq!(r.risk, from_pmf, max_relative = 1e-14);
        let state0: f64 = r
            .history_pmf
            .iter()
            .filter(|h| h.state == Hypothesis::Zero)
            .map(|h| h.probability)
            .sum();
        assert_relative_eq!(state0, 0.4, max_relative = 1e-12);
    }

    #[test]
    fn thresholds_follow_each_agents_own_update() {
        let m = GaussianLikelihood::standard();
        let c = CostPair::default();
        let b = BeliefVector::new(vec![0.3, 0.6, 0.45]).unwrap();
        let r = exact_bayes_risk(&m, &c, 0.3, &b).unwrap();
        assert_eq!(r.per_agent_thresholds.len(), 1 + 2 + 4);
        for entry in &r.per_agent_thresholds {
            let q = b.as_slice()[entry.agent - 1];
            let u = update_belief(&m, &c, q, &entry.prefix).unwrap().belief;
            assert_relative_eq!(entry.updated_belief, u, max_relative = 1e-12);
            assert_relative_eq!(entry.threshold, solve_threshold(&m, &c, u).unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn first_belief_never_reaches_second_agents_thresholds() {
        let m = GaussianLikelihood::standard();
        let c = CostPair::default();
        let a = exact_bayes_risk(&m, &c, 0.3, &BeliefVector::new(vec![0.3, 0.23]).unwrap()).unwrap();
        let b = exact_bayes_risk(&m, &c, 0.3, &BeliefVector::new(vec![0.8, 0.23]).unwrap()).unwrap();
        for prefix in ["0", "1"] {
            assert_eq!(a.threshold(2, &hist(prefix)), b.threshold(2, &hist(prefix)));
        }
        assert_ne!(a.threshold(1, &hist("")), b.threshold(1, &hist("")));
        assert_ne!(a.risk, b.risk);
    }

    #[test]
    fn surface_is_row_major_and_consistent() {
        let m = GaussianLikelihood::standard();
        let c = CostPair::default();
        let grid = BeliefGrid::new(vec![vec![0.2, 0.6], vec![0.3, 0.7]]).unwrap();
        let s = risk_surface(&m, &c, 0.3, &grid).unwrap();
        let order: Vec<Vec<f64>> = s.iter().map(|p| p.beliefs.clone()).collect();
        assert_eq!(
            order,
            vec![vec![0.2, 0.3], vec![0.2, 0.7], vec![0.6, 0.3], vec![0.6, 0.7]]
        );
        for p in &s {
            let direct = exact_bayes_risk(&m, &c, 0.3, &BeliefVector::new(p.beliefs.clone()).unwrap()).unwrap();
            assert_eq!(p.risk, direct.risk);
        }
    }

    #[test]
    fn surface_symmetric_at_half() {
        let m = GaussianLikelihood::standard();
        let c = CostPair::default();
        let axis: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
        let grid = BeliefGrid::square(axis.clone(), 2).unwrap();
        let s = risk_surface(&m, &c, 0.5, &grid).unwrap();
        let n = axis.len();
        for i in 0..n {
            for j in 0..n {
                let a = s[i * n + j].risk;
                let b = s[(n - 1 - i) * n + (n - 1 - j)].risk;
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = GaussianLikelihood::standard();
        let c = CostPair::default();
        let b = BeliefVector::new(vec![0.5, 0.5]).unwrap();
        assert!(bayes_risk(&m, &c, 0.0, &b).is_err());
        assert!(bayes_risk(&m, &c, 1.2, &b).is_err());
        assert!(BeliefVector::new(vec![]).is_err());
        assert!(BeliefVector::new(vec![0.5, 1.0]).is_err());
        assert!(BeliefVector::new(vec![0.5; MAX_AGENTS + 1]).is_err());
        assert!(serde_json::from_str::<BeliefVector>("[0.2, 1.5]").is_err());
        assert!(BeliefGrid::new(vec![vec![]]).is_err());
    }

    proptest! {
        #[test]
        fn risk_bounded_and_mass_conserved(
            p0 in 0.01f64..0.99,
            qs in proptest::collection::vec(0.01f64..0.99, 1..5),
            c10 in 0.2f64..5.0,
            c01 in 0.2f64..5.0,
        ) {
            let m = GaussianLikelihood::standard();
            let c = CostPair::new(c10, c01).unwrap();
            let r = exact_bayes_risk(&m, &c, p0, &BeliefVector::new(qs).unwrap()).unwrap();
            prop_assert!((r.total_probability() - 1.0).abs() < 1e-10);
            prop_assert!(r.risk >= 0.0);
            prop_assert!(r.risk <= c10 * p0 + c01 * (1.0 - p0));
        }
    }
}
