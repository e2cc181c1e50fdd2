//! Forward simulation of the chain under the true generative process.
//!
//! Each trial draws the state and every private signal from a ChaCha8 stream
//! positioned at a fixed word offset derived from the trial index, so a run
//! is reproducible for a given seed whatever the block split or thread count.
//! Every uniform takes exactly one `u64` (two stream words).

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{update_belief, DecisionHistory};
use crate::decision::{threshold_from_log_odds, CostPair};
use crate::likelihood::{Hypothesis, SignalModel};
use crate::risk::{check_probability, BeliefVector, MAX_AGENTS};
use crate::{ModelError, Result};

const BLOCK: u64 = 1 << 16;
/// Largest chain for which per-history tallies are kept.
pub const MAX_POSTERIOR_AGENTS: usize = 16;

/// One realization of the chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSample {
    pub state: Hypothesis,
    pub signals: Vec<f64>,
    pub decisions: DecisionHistory,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(trials)`; zero for a single trial.
    pub std_error: f64,
    pub trials: u64,
    pub seed: u64,
    pub false_alarms: u64,
    pub missed_detections: u64,
}

/// Empirical posterior of the state given the full decision history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryPosterior {
    pub history: DecisionHistory,
    pub count: u64,
    pub count_state0: u64,
    /// `None` when the history never occurred.
    pub posterior: Option<f64>,
    pub std_error: Option<f64>,
}

/// Uniform on the open interval `(0, 1)` from 53 random bits.
fn open_unit(rng: &mut (impl RngCore + ?Sized)) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

fn words_per_trial(agents: usize) -> u128 {
    2 * (agents as u128 + 1)
}

fn check_inputs(costs: &CostPair, p0: f64, beliefs: &BeliefVector, trials: u64, max_agents: usize) -> Result<()> {
    costs.validate()?;
    check_probability(p0)?;
    if beliefs.len() > max_agents {
        return Err(ModelError::InvalidParameter {
            name: "beliefs",
            message: format!("at most {max_agents} agents can be simulated, got {}", beliefs.len()),
        });
    }
    if trials == 0 {
        return Err(ModelError::InvalidParameter {
            name: "trials",
            message: "at least one trial is required".into(),
        });
    }
    Ok(())
}

/// Draws one run of the chain. Each agent recomputes its updated belief from
/// the decisions seen so far and tests its own signal against the resulting
/// threshold.
pub fn simulate_chain<M, R>(
    model: &M,
    costs: &CostPair,
    p0: f64,
    beliefs: &BeliefVector,
    rng: &mut R,
) -> Result<ChainSample>
where
    M: SignalModel + ?Sized,
    R: RngCore + ?Sized,
{
    costs.validate()?;
    check_probability(p0)?;
    let state = if open_unit(rng) < p0 {
        Hypothesis::Zero
    } else {
        Hypothesis::One
    };
    let mut signals = Vec::with_capacity(beliefs.len());
    let mut decisions = DecisionHistory::empty();
    for &q in beliefs.as_slice() {
        let y = model.quantile(open_unit(rng), state)?;
        let updated = update_belief(model, costs, q, &decisions)?;
        let threshold = threshold_from_log_odds(model, costs, updated.log_odds)?;
        decisions.push(Hypothesis::from_bit(y >= threshold));
        signals.push(y);
    }
    Ok(ChainSample {
        state,
        signals,
        decisions,
    })
}

/// Threshold of every agent for every prefix it can observe, laid out as
/// `offset(n) + prefix_code` with `offset(n) = 2^n - 1`.
struct Plan {
    thresholds: Vec<f64>,
    agents: usize,
    p0: f64,
}

impl Plan {
    fn new<M: SignalModel + ?Sized>(model: &M, costs: &CostPair, p0: f64, beliefs: &BeliefVector) -> Result<Self> {
        let agents = beliefs.len();
        let mut thresholds = Vec::with_capacity((1usize << agents) - 1);
        for (n, &q) in beliefs.as_slice().iter().enumerate() {
            for code in 0..1u64 << n {
                let updated = update_belief(model, costs, q, &DecisionHistory::from_code(code, n))?;
                thresholds.push(threshold_from_log_odds(model, costs, updated.log_odds)?);
            }
        }
        Ok(Self { thresholds, agents, p0 })
    }

    /// Runs one trial from the current stream position; returns the state
    /// and the decision code (earliest agent in the most significant bit).
    fn trial<M: SignalModel + ?Sized>(&self, model: &M, rng: &mut ChaCha8Rng) -> Result<(Hypothesis, usize)> {
        let state = if open_unit(rng) < self.p0 {
            Hypothesis::Zero
        } else {
            Hypothesis::One
        };
        let mut code = 0usize;
        for n in 0..self.agents {
            let y = model.quantile(open_unit(rng), state)?;
            let t = self.thresholds[(1usize << n) - 1 + code];
            code = code << 1 | usize::from(y >= t);
        }
        Ok((state, code))
    }
}

/// Runs `trials` trials in fixed-size blocks in parallel and folds each block
/// into an accumulator; accumulators are merged in block order.
fn run_trials<M, A, F, G>(
    model: &M,
    plan: &Plan,
    trials: u64,
    seed: u64,
    init: impl Fn() -> A + Sync,
    record: F,
    merge: G,
) -> Result<A>
where
    M: SignalModel + ?Sized,
    A: Send,
    F: Fn(&mut A, Hypothesis, usize) + Sync,
    G: Fn(A, A) -> A,
{
    let blocks = trials.div_ceil(BLOCK);
    let words = words_per_trial(plan.agents);
    let parts: Vec<A> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK;
            let end = (start + BLOCK).min(trials);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_word_pos(start as u128 * words);
            let mut acc = init();
            for _ in start..end {
                let (state, code) = plan.trial(model, &mut rng)?;
                record(&mut acc, state, code);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().reduce(merge).unwrap_or_else(init))
}

/// Monte Carlo estimate of the final agent's Bayes risk.
///
/// Only integer error counts are accumulated, so the estimate does not
/// depend on how trials are split across threads.
pub fn estimate_risk<M: SignalModel + ?Sized>(
    model: &M,
    costs: &CostPair,
    p0: f64,
    beliefs: &BeliefVector,
    trials: u64,
    seed: u64,
) -> Result<RiskEstimate> {
    check_inputs(costs, p0, beliefs, trials, MAX_AGENTS)?;
    let plan = Plan::new(model, costs, p0, beliefs)?;
    let (false_alarms, missed_detections) = run_trials(
        model,
        &plan,
        trials,
        seed,
        || (0u64, 0u64),
        |acc, state, code| {
            let last = code & 1 == 1;
            match state {
                Hypothesis::Zero if last => acc.0 += 1,
                Hypothesis::One if !last => acc.1 += 1,
                _ => {}
            }
        },
        |a, b| (a.0 + b.0, a.1 + b.1),
    )?;

    let n = trials as f64;
    let (fa, md) = (false_alarms as f64, missed_detections as f64);
    let total = costs.c10 * fa + costs.c01 * md;
    let mean = total / n;
    let std_error = if trials > 1 {
        let squares = costs.c10 * costs.c10 * fa + costs.c01 * costs.c01 * md;
        let variance = ((squares - total * mean) / (n - 1.0)).max(0.0);
        (variance / n).sqrt()
    } else {
        0.0
    };
    Ok(RiskEstimate {
        mean,
        std_error,
        trials,
        seed,
        false_alarms,
        missed_detections,
    })
}

/// Empirical `P(H = 0 | decisions of all N agents)` for every history.
pub fn estimate_posteriors<M: SignalModel + ?Sized>(
    model: &M,
    costs: &CostPair,
    p0: f64,
    beliefs: &BeliefVector,
    trials: u64,
    seed: u64,
) -> Result<Vec<HistoryPosterior>> {
    check_inputs(costs, p0, beliefs, trials, MAX_POSTERIOR_AGENTS)?;
    let plan = Plan::new(model, costs, p0, beliefs)?;
    let size = 1usize << beliefs.len();
    let counts = run_trials(
        model,
        &plan,
        trials,
        seed,
        || vec![[0u64; 2]; size],
        |acc, state, code| acc[code][state.index()] += 1,
        |mut a, b| {
            for (x, y) in a.iter_mut().zip(b) {
                x[0] += y[0];
                x[1] += y[1];
            }
            a
        },
    )?;
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(code, [zero, one])| {
            let count = zero + one;
            let (posterior, std_error) = if count == 0 {
                (None, None)
            } else {
                let p = zero as f64 / count as f64;
                (Some(p), Some((p * (1.0 - p) / count as f64).sqrt()))
            };
            HistoryPosterior {
                history: DecisionHistory::from_code(code as u64, beliefs.len()),
                count,
                count_state0: zero,
                posterior,
                std_error,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::{std_normal_cdf, GaussianLikelihood};
    use crate::risk::exact_bayes_risk;

    fn beliefs(v: &[f64]) -> BeliefVector {
        BeliefVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn near_certain_prior_always_draws_state_zero() {
        let m = GaussianLikelihood::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let s = simulate_chain(&m, &CostPair::default(), 1.0 - 1e-12, &beliefs(&[0.5, 0.5]), &mut rng).unwrap();
            assert_eq!(s.state, Hypothesis::Zero);
        }
    }

    #[test]
    fn fixed_seed_repeats_chain() {
        let m = GaussianLikelihood::new(1.0, 2.0).unwrap();
        let b = beliefs(&[0.3, 0.6, 0.2]);
        let draw = || {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            (0..20)
                .map(|_| simulate_chain(&m, &CostPair::default(), 0.4, &b, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn chain_decisions_follow_updated_thresholds() {
        let m = GaussianLikelihood::standard();
        let c = CostPair::new(1.0, 2.0).unwrap();
        let b = beliefs(&[0.3, 0.6, 0.45, 0.7]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let s = simulate_chain(&m, &c, 0.5, &b, &mut rng).unwrap();
            for n in 0..4 {
                let prefix = s.decisions.prefix(n);
                let q = update_belief(&m, &c, b.as_slice()[n], &prefix).unwrap().belief;
                let t = crate::decision::solve_threshold(&m, &c, q).unwrap();
                assert_eq!(s.decisions.decisions()[n].is_one(), s.signals[n] >= t);
            }
        }
    }

    #[test]
    fn first_agent_correct_rejection_rate() {
        let m = GaussianLikelihood::standard();
        let c = CostPair::default();
        let b = beliefs(&[0.5, 0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let (mut zeros, mut hits) = (0u64, 0u64);
        for _ in 0..1_000_000 {
            let s = simulate_chain(&m, &c, 0.5, &b, &mut rng).unwrap();
            if s.state == Hypothesis::Zero {
                zeros += 1;
                hits += u64::from(!s.decisions.decisions()[0].is_one());
            }
        }
        let p = hits as f64 / zeros as f64;
        let want = std_normal_cdf(0.5);
        let se = (want * (1.0 - want) / zeros as f64).sqrt();
        assert!((p - want).abs() < 4.0 * se, "{p} vs {want}");
    }

    #[test]
    fn estimator_matches_sequential_chain_draws() {
        let m = GaussianLikelihood::standard();
        let c = CostPair::new(2.0, 1.0).unwrap();
        let b = beliefs(&[0.4, 0.25, 0.6]);
        let seed = 77;
        let trials = 3 * BLOCK + 123;
        let est = estimate_risk(&m, &c, 0.35, &b, trials, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut fa, mut md) = (0, 0);
        for _ in 0..trials {
            let s = simulate_chain(&m, &c, 0.35, &b, &mut rng).unwrap();
            let last = s.decisions.last().unwrap();
            match (s.state, last) {
                (Hypothesis::Zero, Hypothesis::One) => fa += 1,
                (Hypothesis::One, Hypothesis::Zero) => md += 1,
                _ => {}
            }
        }
        assert_eq!((est.false_alarms, est.missed_detections), (fa, md));
    }

    #[test]
    fn same_seed_is_bit_identical_across_pools() {
        let m = GaussianLikelihood::standard();
        let b = beliefs(&[0.3, 0.3]);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate_risk(&m, &CostPair::default(), 0.3, &b, 500_000, 5).unwrap())
        };
        let one = run(1);
        assert_eq!(one, run(4));
        assert_eq!(one.mean.to_bits(), run(3).mean.to_bits());
        let other = estimate_risk(&m, &CostPair::default(), 0.3, &b, 500_000, 6).unwrap();
        assert_ne!(
            one.false_alarms + one.missed_detections,
            other.false_alarms + other.missed_detections
        );
    }

    #[test]
    fn single_trial_cost_is_in_support() {
        let m = GaussianLikelihood::standard();
        let c = CostPair::new(1.5, 4.0).unwrap();
        for seed in 0..50 {
            let e = estimate_risk(&m, &c, 0.5, &beliefs(&[0.5, 0.4]), 1, seed).unwrap();
            assert!([0.0, 1.5, 4.0].contains(&e.mean), "{}", e.mean);
            assert_eq!(e.std_error, 0.0);
        }
    }

    #[test]
    fn agrees_with_enumerator() {
        let m = GaussianLikelihood::standard();
        let c = CostPair::default();
        for (b, trials) in [(vec![0.3, 0.3], 4_000_000), (vec![0.3; 4], 1_000_000)] {
            let b = beliefs(&b);
            let exact = exact_bayes_risk(&m, &c, 0.3, &b).unwrap().risk;
            let est = estimate_risk(&m, &c, 0.3, &b, trials, 11).unwrap();
            assert!(
                (est.mean - exact).abs() < 3.0 * est.std_error,
                "{} vs {exact} ({})",
                est.mean,
                est.std_error
            );
        }
    }

    #[test]
    fn signals_are_conditionally_independent() {
        let m = GaussianLikelihood::standard();
        let b = beliefs(&[0.5, 0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pairs: Vec<(f64, f64)> = (0..400_000)
            .filter_map(|_| {
                let s = simulate_chain(&m, &CostPair::default(), 0.5, &b, &mut rng).unwrap();
                (s.state == Hypothesis::Zero).then(|| (s.signals[0], s.signals[1]))
            })
            .collect();
        let n = pairs.len() as f64;
        let (mx, my) = pairs.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for &(x, y) in &pairs {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx) * (x - mx);
            syy += (y - my) * (y - my);
        }
        let r = sxy / (sxx * syy).sqrt();
        assert!(r.abs() < 4.0 / n.sqrt(), "correlation {r}");
        assert!(mx.abs() < 4.0 / n.sqrt() && my.abs() < 4.0 / n.sqrt());
    }

    #[test]
    fn posterior_matches_belief_update_at_matched_beliefs() {
        let m = GaussianLikelihood::standard();
        let c = CostPair::default();
        for q in [0.5, 0.3] {
            let b = beliefs(&[q, q, q]);
            let rows = estimate_posteriors(&m, &c, q, &b, 2_000_000, 13).unwrap();
            assert_eq!(rows.len(), 8);
            assert_eq!(rows.iter().map(|r| r.count).sum::<u64>(), 2_000_000);
            for r in rows.iter().filter(|r| r.count > 10_000) {
                let want = update_belief(&m, &c, q, &r.history).unwrap().belief;
                let got = r.posterior.unwrap();
                assert!(
                    (got - want).abs() < 3.5 * r.std_error.unwrap(),
                    "{q} {}: {got} vs {want}",
                    r.history
                );
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = GaussianLikelihood::standard();
        let c = CostPair::default();
        let b = beliefs(&[0.5]);
        assert!(estimate_risk(&m, &c, 0.5, &b, 0, 1).is_err());
        assert!(estimate_risk(&m, &c, 1.0, &b, 10, 1).is_err());
        assert!(estimate_posteriors(&m, &c, 0.5, &BeliefVector::uniform(0.5, 17).unwrap(), 10, 1).is_err());
    }
}
