//! Outer semi-Markov decision problem on the discretized state space.

mod grid;
mod metrics;
mod policy;
mod rvi;

pub use grid::{build_grid, steady_state_phase_probs, RadiusSplit, SmdpState, StateGrid};
pub use metrics::{policy_metrics, stationary_distribution, Metrics, StageOutcome};
pub use policy::{CommDecision, InnerRule, Policy, WaitingDecision, POLICY_FORMAT_VERSION};
pub use rvi::{relative_value_iteration, solve_costs, DpSolution, RviSolution};
