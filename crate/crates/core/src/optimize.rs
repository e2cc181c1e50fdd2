//! Search for the initial beliefs that minimize the final agent's risk.
//!
//! A deterministic grid scan locates the basin, then coordinate-wise
//! golden-section refinement polishes the point from several starts (the
//! grid argmin, the centre and the corners of `[0.1, 0.9]^N`, plus an
//! optional warm start). Starts that end in a different place are reported
//! rather than silently discarded.

use std::cell::Cell;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decision::CostPair;
use crate::likelihood::SignalModel;
use crate::risk::{bayes_risk, check_probability, BeliefVector, TwoAgentTerms, MAX_AGENTS};
use crate::{ModelError, Result};

const LOWER: f64 = 1e-6;
const UPPER: f64 = 1.0 - 1e-6;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerOptions {
    /// Grid points per axis; `None` picks 49 for N ≤ 2, 21 for N = 3 and 11 beyond.
    pub grid_points: Option<usize>,
    /// Stop when no coordinate moves by more than this in a sweep.
    pub belief_tol: f64,
    pub max_sweeps: usize,
    pub multi_start: bool,
    /// Upper bound on the number of grid points scanned.
    pub max_grid_points: u64,
    /// Extra start point, used by the p0 sweep to warm-start.
    pub initial: Option<Vec<f64>>,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            grid_points: None,
            belief_tol: 1e-4,
            max_sweeps: 200,
            multi_start: true,
            max_grid_points: 2_000_000,
            initial: None,
        }
    }
}

impl OptimizerOptions {
    pub fn grid_points_for(&self, agents: usize) -> usize {
        self.grid_points.unwrap_or(match agents {
            0..=2 => 49,
            3 => 21,
            _ => 11,
        })
    }
}

/// Where one refinement start ended up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartOutcome {
    pub start: Vec<f64>,
    pub beliefs: Vec<f64>,
    pub risk: f64,
    pub sweeps: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub beliefs_star: BeliefVector,
    pub risk_star: f64,
    /// First-order condition residual for the first belief (two agents only).
    pub residual: Option<f64>,
    pub evaluations: usize,
    pub converged: bool,
    pub grid_best: Vec<f64>,
    pub grid_best_risk: f64,
    pub starts: Vec<StartOutcome>,
    /// Some start converged to a point away from the reported optimum.
    pub starts_disagree: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub p0: f64,
    pub beliefs_star: BeliefVector,
    pub risk_star: f64,
    pub converged: bool,
}

/// Golden-section search for a minimum of `f` on `[a, b]`; returns the best
/// evaluated point and its value.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

struct Objective<'a, M: ?Sized> {
    model: &'a M,
    costs: &'a CostPair,
    p0: f64,
    evaluations: Cell<usize>,
}

impl<M: SignalModel + ?Sized> Objective<'_, M> {
    fn eval(&self, beliefs: &[f64]) -> Result<f64> {
        self.evaluations.set(self.evaluations.get() + 1);
        bayes_risk(self.model, self.costs, self.p0, &BeliefVector::new(beliefs.to_vec())?)
    }
}

fn refine<M: SignalModel + ?Sized>(
    objective: &Objective<'_, M>,
    start: &[f64],
    radius: f64,
    options: &OptimizerOptions,
) -> Result<StartOutcome> {
    let tol = options.belief_tol;
    let mut x: Vec<f64> = start.iter().map(|v| v.clamp(LOWER, UPPER)).collect();
    let mut fx = objective.eval(&x)?;
    let mut radii = vec![radius; x.len()];
    let mut converged = false;
    let mut sweeps = 0;
    let mut failure = None;

    while sweeps < options.max_sweeps {
        sweeps += 1;
        let mut max_move: f64 = 0.0;
        let mut hit_edge = false;
        for i in 0..x.len() {
            let lo = (x[i] - radii[i]).max(LOWER);
            let hi = (x[i] + radii[i]).min(UPPER);
            let mut trial = x.clone();
            let (xi, fi) = golden_section(
                |t| {
                    trial[i] = t;
                    match objective.eval(&trial) {
                        Ok(v) => v,
                        Err(e) => {
                            failure.get_or_insert(e);
                            f64::INFINITY
                        }
                    }
                },
                lo,
                hi,
                0.25 * tol,
            );
            if let Some(e) = failure.take() {
                return Err(e);
            }
            let mut step = 0.0;
            if fi < fx {
                step = (xi - x[i]).abs();
                x[i] = xi;
                fx = fi;
            }
            let at_edge = (xi - lo < tol && lo > LOWER) || (hi - xi < tol && hi < UPPER);
            if at_edge {
                radii[i] = (2.0 * radii[i]).min(0.5);
                hit_edge = true;
            } else {
                radii[i] = (4.0 * step).clamp(8.0 * tol, 0.5);
            }
            max_move = max_move.max(step);
        }
        if max_move < tol && !hit_edge {
            converged = true;
            break;
        }
    }
    Ok(StartOutcome {
        start: start.to_vec(),
        beliefs: x,
        risk: fx,
        sweeps,
        converged,
    })
}

fn grid_axis(points: usize) -> Vec<f64> {
    (1..=points).map(|k| k as f64 / (points + 1) as f64).collect()
}

fn corners(agents: usize) -> impl Iterator<Item = Vec<f64>> {
    (0..1usize << agents).map(move |mask| {
        (0..agents)
            .map(|i| if mask >> (agents - 1 - i) & 1 == 1 { 0.9 } else { 0.1 })
            .collect()
    })
}

/// Minimizes the Bayes risk of agent `agents` over all initial belief vectors.
pub fn optimize_beliefs<M: SignalModel + ?Sized>(
    model: &M,
    costs: &CostPair,
    p0: f64,
    agents: usize,
    options: &OptimizerOptions,
) -> Result<OptimizationResult> {
    costs.validate()?;
    check_probability(p0)?;
    if agents == 0 || agents > MAX_AGENTS {
        return Err(ModelError::InvalidParameter {
            name: "agents",
            message: format!("agent count must be in 1..={MAX_AGENTS}, got {agents}"),
        });
    }
    if !(options.belief_tol > 0.0 && options.belief_tol < 0.1) {
        return Err(ModelError::InvalidParameter {
            name: "belief_tol",
            message: format!("tolerance must be in (0, 0.1), got {}", options.belief_tol),
        });
    }
    if let Some(init) = &options.initial {
        if init.len() != agents {
            return Err(ModelError::InvalidParameter {
                name: "initial",
                message: format!("warm start has {} beliefs, expected {agents}", init.len()),
            });
        }
        BeliefVector::new(init.clone())?;
    }

    let points = options.grid_points_for(agents);
    if points == 0 {
        return Err(ModelError::InvalidParameter {
            name: "grid_points",
            message: "grid needs at least one point per axis".into(),
        });
    }
    let requested = (points as u128).pow(agents as u32);
    if requested > options.max_grid_points as u128 {
        return Err(ModelError::GridTooLarge {
            requested,
            limit: options.max_grid_points as u128,
        });
    }

    let axis = grid_axis(points);
    let grid = crate::risk::BeliefGrid::square(axis, agents)?;
    let risks: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| bayes_risk(model, costs, p0, &BeliefVector::new(grid.point(i))?))
        .collect::<Result<_>>()?;
    // First strict minimum in row-major order breaks ties toward smaller beliefs.
    let (best_index, grid_best_risk) =
        risks.iter().copied().enumerate().fold(
            (0, f64::INFINITY),
            |best, (i, r)| if r < best.1 { (i, r) } else { best },
        );
    let grid_best = grid.point(best_index);
    let step = 1.0 / (points + 1) as f64;

    let mut starts: Vec<(Vec<f64>, f64)> = vec![(grid_best.clone(), 2.0 * step)];
    if let Some(init) = &options.initial {
        starts.push((init.clone(), 2.0 * step));
    }
    if options.multi_start {
        starts.push((vec![0.5; agents], 0.5));
        starts.extend(corners(agents).map(|c| (c, 0.5)));
    }

    let outcomes: Vec<(StartOutcome, usize)> = starts
        .par_iter()
        .map(|(start, radius)| {
            let objective = Objective {
                model,
                costs,
                p0,
                evaluations: Cell::new(0),
            };
            let outcome = refine(&objective, start, *radius, options)?;
            Ok((outcome, objective.evaluations.get()))
        })
        .collect::<Result<_>>()?;

    let evaluations = grid.len() + outcomes.iter().map(|(_, n)| n).sum::<usize>();
    let starts: Vec<StartOutcome> = outcomes.into_iter().map(|(o, _)| o).collect();
    let best = starts
        .iter()
        .fold(&starts[0], |best, s| if s.risk < best.risk { s } else { best })
        .clone();
    let starts_disagree = starts.iter().any(|s| {
        s.beliefs
            .iter()
            .zip(&best.beliefs)
            .any(|(a, b)| (a - b).abs() > 100.0 * options.belief_tol)
    });

    let residual = if agents == 2 {
        optimality_residual(model, costs, p0, best.beliefs[0], best.beliefs[1]).ok()
    } else {
        None
    };

    Ok(OptimizationResult {
        beliefs_star: BeliefVector::new(best.beliefs.clone())?,
        risk_star: best.risk,
        residual,
        evaluations,
        converged: best.converged,
        grid_best,
        grid_best_risk,
        starts,
        starts_disagree,
    })
}

/// Residual of the stationarity condition for the first agent's belief in a
/// two-agent chain:
///
/// `q1 / (1 - q1) - p0 (P^I_{2,1} - P^I_{2,0}) / ((1 - p0) (P^II_{2,0} - P^II_{2,1}))`
///
/// where `P^I_{2,k}`, `P^II_{2,k}` are the second agent's error probabilities
/// after the first announces `k`. Those depend on `q2` only, so the residual
/// is increasing in `q1`.
pub fn optimality_residual<M: SignalModel + ?Sized>(
    model: &M,
    costs: &CostPair,
    p0: f64,
    q1: f64,
    q2: f64,
) -> Result<f64> {
    let t = TwoAgentTerms::compute(model, costs, p0, q1, q2)?;
    let denom = (1.0 - p0) * (t.p_md2_after0 - t.p_md2_after1);
    if denom == 0.0 || !denom.is_finite() {
        return Err(ModelError::Degenerate(format!(
            "second agent's miss probabilities coincide at q2 = {q2}"
        )));
    }
    Ok(q1 / (1.0 - q1) - p0 * (t.p_fa2_after1 - t.p_fa2_after0) / denom)
}

/// One optimization per true prior, each warm-started from the previous row.
pub fn trend_sweep<M: SignalModel + ?Sized>(
    model: &M,
    costs: &CostPair,
    p0_grid: &[f64],
    agents: usize,
    options: &OptimizerOptions,
) -> Result<Vec<TrendRow>> {
    let mut rows = Vec::with_capacity(p0_grid.len());
    let mut warm: Option<Vec<f64>> = options.initial.clone();
    for &p0 in p0_grid {
        let opts = OptimizerOptions {
            initial: warm.clone(),
            ..options.clone()
        };
        let result = optimize_beliefs(model, costs, p0, agents, &opts)?;
        warm = Some(result.beliefs_star.as_slice().to_vec());
        rows.push(TrendRow {
            p0,
            beliefs_star: result.beliefs_star,
            risk_star: result.risk_star,
            converged: result.converged,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::GaussianLikelihood;
    use approx::assert_relative_eq;

    fn risk2(p0: f64, q1: f64, q2: f64) -> f64 {
        let m = GaussianLikelihood::standard();
        bayes_risk(&m, &CostPair::default(), p0, &BeliefVector::new(vec![q1, q2]).unwrap()).unwrap()
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let (x, fx) = golden_section(|x| (x - 0.3).powi(2), 0.0, 1.0, 1e-9);
        assert_relative_eq!(x, 0.3, epsilon = 1e-8);
        assert!(fx < 1e-16);
    }

    #[test]
    fn fig3_optimum() {
        let m = GaussianLikelihood::standard();
        let r = optimize_beliefs(&m, &CostPair::default(), 0.3, 2, &OptimizerOptions::default()).unwrap();
        let q = r.beliefs_star.as_slice();
        assert!((q[0] - 0.38).abs() <= 0.01 && (q[1] - 0.23).abs() <= 0.01, "{q:?}");
        assert!(r.converged);
        assert!(r.risk_star <= r.grid_best_risk);
        assert!(r.starts.iter().all(|s| s.risk >= r.risk_star));
        assert!(r.residual.unwrap().abs() < 1e-3);
        assert!(r.risk_star < risk2(0.3, 0.3, 0.3));
    }

    #[test]
    fn stationary_at_optimum() {
        let m = GaussianLikelihood::standard();
        let r = optimize_beliefs(&m, &CostPair::default(), 0.3, 2, &OptimizerOptions::default()).unwrap();
        let q = r.beliefs_star.as_slice();
        let h = 1e-3;
        let d1 = (risk2(0.3, q[0] + h, q[1]) - risk2(0.3, q[0] - h, q[1])) / (2.0 * h);
        let d2 = (risk2(0.3, q[0], q[1] + h) - risk2(0.3, q[0], q[1] - h)) / (2.0 * h);
        assert!(d1.abs() < 1e-3 && d2.abs() < 1e-3, "{d1} {d2}");
    }

    #[test]
    fn true_prior_optimal_at_critical_prior() {
        let m = GaussianLikelihood::standard();
        for (costs, p0) in [(CostPair::default(), 0.5), (CostPair::new(1.0, 3.0).unwrap(), 0.75)] {
            let r = optimize_beliefs(&m, &costs, p0, 2, &OptimizerOptions::default()).unwrap();
            for &q in r.beliefs_star.as_slice() {
                assert!((q - p0).abs() <= 0.005, "{:?}", r.beliefs_star);
            }
        }
    }

    #[test]
    fn residual_examples() {
        let m = GaussianLikelihood::standard();
        let c = CostPair::default();
        assert!(optimality_residual(&m, &c, 0.5, 0.5, 0.5).unwrap().abs() < 1e-10);
        let r = optimize_beliefs(&m, &c, 0.3, 2, &OptimizerOptions::default()).unwrap();
        let q = r.beliefs_star.as_slice();
        assert!(optimality_residual(&m, &c, 0.3, q[0], q[1]).unwrap().abs() < 1e-3);
        let above = optimality_residual(&m, &c, 0.3, q[0] + 0.05, q[1]).unwrap();
        assert!(above > 0.0);
        // Finite-difference sign agrees: risk increases when moving q1 up.
        let h = 1e-4;
        let slope = (risk2(0.3, q[0] + 0.05 + h, q[1]) - risk2(0.3, q[0] + 0.05 - h, q[1])) / (2.0 * h);
        assert!(slope > 0.0);
    }

    #[test]
    fn residual_degenerate_is_reported() {
        // A huge separation makes both second-agent miss probabilities vanish.
        let m = GaussianLikelihood::new(100.0, 1.0).unwrap();
        let err = optimality_residual(&m, &CostPair::default(), 0.5, 0.5, 0.5).unwrap_err();
        assert!(matches!(err, ModelError::Degenerate(_)));
    }

    #[test]
    fn trend_single_point_matches_direct_call() {
        let m = GaussianLikelihood::standard();
        let c = CostPair::default();
        let opts = OptimizerOptions::default();
        let rows = trend_sweep(&m, &c, &[0.2], 2, &opts).unwrap();
        let direct = optimize_beliefs(&m, &c, 0.2, 2, &opts).unwrap();
        assert_eq!(rows[0].beliefs_star, direct.beliefs_star);
        assert_eq!(rows[0].risk_star, direct.risk_star);
    }

    #[test]
    fn grid_guard_and_argument_checks() {
        let m = GaussianLikelihood::standard();
        let c = CostPair::default();
        let opts = OptimizerOptions {
            grid_points: Some(200),
            max_grid_points: 1000,
            ..OptimizerOptions::default()
        };
        assert!(matches!(
            optimize_beliefs(&m, &c, 0.3, 3, &opts),
            Err(ModelError::GridTooLarge { .. })
        ));
        let defaults = OptimizerOptions::default();
        assert!(optimize_beliefs(&m, &c, 0.3, 0, &defaults).is_err());
        assert!(optimize_beliefs(&m, &c, 1.0, 2, &defaults).is_err());
        let bad_warm = OptimizerOptions {
            initial: Some(vec![0.5]),
            ..OptimizerOptions::default()
        };
        assert!(optimize_beliefs(&m, &c, 0.3, 2, &bad_warm).is_err());
    }

    #[test]
    fn single_agent_optimum_is_true_prior() {
        let m = GaussianLikelihood::standard();
        let r = optimize_beliefs(
            &m,
            &CostPair::new(1.0, 2.0).unwrap(),
            0.35,
            1,
            &OptimizerOptions::default(),
        )
        .unwrap();
        assert!((r.beliefs_star.as_slice()[0] - 0.35).abs() < 1e-3);
        assert!(r.residual.is_none());
    }

    #[test]
    fn non_convergence_reports_best_so_far() {
        let m = GaussianLikelihood::standard();
        let opts = OptimizerOptions {
            max_sweeps: 1,
            multi_start: false,
            belief_tol: 1e-9,
            ..OptimizerOptions::default()
        };
        let r = optimize_beliefs(&m, &CostPair::default(), 0.3, 2, &opts).unwrap();
        assert!(!r.converged);
        assert!(r.risk_star <= r.grid_best_risk);
    }
}
