use std::f64::consts::PI;

use seqdetect::montecarlo::estimate_posteriors;
use seqdetect::{
    bayes_risk, exact_bayes_risk, optimize_beliefs, update_belief, BeliefVector, CostPair, DecisionHistory,
    GaussianLikelihood, GenericLikelihood, OptimizerOptions,
};

fn normal(mean: f64, sigma: f64) -> impl Fn(f64) -> f64 + Send + Sync + 'static {
    move |y| (-0.5 * ((y - mean) / sigma).powi(2)).exp() / (sigma * (2.0 * PI).sqrt())
}

#[test]
fn numeric_model_reproduces_closed_form_risk() {
    let (h1, sigma) = (1.2, 0.8);
    let closed = GaussianLikelihood::new(h1, sigma).unwrap();
    let numeric = GenericLikelihood::builder(normal(0.0, sigma), normal(h1, sigma))
        .truncate_around(0.0, h1, sigma)
        .build()
        .unwrap();
    let c = CostPair::new(1.0, 2.0).unwrap();
    let b = BeliefVector::new(vec![0.4, 0.55, 0.3]).unwrap();
    let a = bayes_risk(&closed, &c, 0.45, &b).unwrap();
    let n = bayes_risk(&numeric, &c, 0.45, &b).unwrap();
    assert!((a - n).abs() < 1e-7, "{a} vs {n}");
}

#[test]
fn three_agent_optimum_is_open_minded() {
    // Non-terminal agents lean toward the critical prior, the last one away.
    let m = GaussianLikelihood::standard();
    let c = CostPair::default();
    for p0 in [0.2, 0.8] {
        let r = optimize_beliefs(&m, &c, p0, 3, &OptimizerOptions::default()).unwrap();
        let q = r.beliefs_star.as_slice();
        assert!(r.converged);
        let toward = |x: f64| if p0 < 0.5 { x > p0 } else { x < p0 };
        assert!(toward(q[0]) && toward(q[1]), "{p0}: {q:?}");
        assert!(!toward(q[2]), "{p0}: {q:?}");
        let truth = bayes_risk(&m, &c, p0, &BeliefVector::uniform(p0, 3).unwrap()).unwrap();
        assert!(r.risk_star < truth);
    }
}

#[test]
fn enumerated_posterior_matches_belief_update_and_simulation() {
    let m = GaussianLikelihood::new(1.0, 1.3).unwrap();
    let c = CostPair::new(1.0, 1.5).unwrap();
    let q = 0.4;
    let b = BeliefVector::uniform(q, 3).unwrap();
    let report = exact_bayes_risk(&m, &c, q, &b).unwrap();
    let sim = estimate_posteriors(&m, &c, q, &b, 1_000_000, 21).unwrap();
    for h in DecisionHistory::all(3) {
        let mass = |state: u8| -> f64 {
            report
                .history_pmf
                .iter()
                .filter(|x| {
                    let mut full = x.history.clone();
                    full.push(x.final_decision);
                    full == h && u8::from(x.state) == state
                })
                .map(|x| x.probability)
                .sum()
        };
        let exact = mass(0) / (mass(0) + mass(1));
        let updated = update_belief(&m, &c, q, &h).unwrap().belief;
        assert!((exact - updated).abs() < 1e-12, "{h}: {exact} vs {updated}");
        let row = sim.iter().find(|r| r.history == h).unwrap();
        if row.count > 5_000 {
            assert!(
                (row.posterior.unwrap() - exact).abs() < 4.0 * row.std_error.unwrap(),
                "{h}"
            );
        }
    }
}
