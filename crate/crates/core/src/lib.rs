//! Sequential Bayesian binary hypothesis testing with social learning.
//!
//! A chain of agents each observe a private signal about a binary state and
//! every decision made before them. Agents start from their own (possibly
//! wrong) prior beliefs, reinterpret the decision history as if everyone
//! before them shared that belief, and then run a likelihood ratio test.
//! Only the final agent's Bayes risk matters.
//!
//! The crate is organised bottom-up:
//!
//! * [`likelihood`]: signal models (closed-form Gaussian, generic numeric).
//! * [`decision`]: thresholds, the likelihood ratio test, error probabilities.
//! * [`belief`]: the recursive belief update over a decision history.
//! * [`risk`]: exact Bayes risk of the last agent by history enumeration.
//! * [`optimize`]: search for the belief vector that minimizes that risk.
//! * [`montecarlo`]: forward simulation used as an independent oracle.
//! * [`appendix`]: numerical checks of the open-mindedness results.

pub mod appendix;
pub mod belief;
pub mod decision;
mod error;
pub mod likelihood;
pub mod montecarlo;
pub mod optimize;
pub mod quadrature;
pub mod risk;

pub use belief::{belief_trajectory, update_belief, BeliefTrajectory, DecisionHistory, UpdatedBelief};
pub use decision::{decide, error_probs, solve_threshold, CostPair, ErrorProbPair};
pub use error::ModelError;
pub use likelihood::{GaussianLikelihood, GenericLikelihood, Hypothesis, LikelihoodModel, ModelSpec, SignalModel};
pub use montecarlo::{estimate_risk, simulate_chain, ChainSample, RiskEstimate};
pub use optimize::{
    optimality_residual, optimize_beliefs, trend_sweep, OptimizationResult, OptimizerOptions, TrendRow,
};
pub use risk::{bayes_risk, exact_bayes_risk, risk_surface, BeliefVector, RiskReport};

/// Smallest and largest belief used inside iterative computations.
pub const BELIEF_FLOOR: f64 = 1e-12;

pub type Result<T, E = ModelError> = std::result::Result<T, E>;
