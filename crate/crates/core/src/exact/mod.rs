//! Exact product-form engine.
//!
//! Balance functions `Phi` (service, from `mu`) and `Lambda` (admission,
//! from `nu`) are tabulated over the box `0 <= x <= l`; the aggregate state
//! has law `Phi(x) Lambda(l - x) / G` under the token mechanism (or the
//! randomized insensitive load balancing) combined with balanced fairness.

mod assignment;
mod ideal;
mod metrics;
mod space;
mod tables;

pub use assignment::{
    best_static_assignment, server_components, static_distribution, static_report,
    static_stationary, uniform_static_assignment,
    AssignmentMatrix, StaticSolution,
};
pub use ideal::{ideal_and_bounds, ideal_blocking, max_throughput, IdealBounds};
pub use metrics::{performance_report, PerfReport};
pub use space::{AggState, StateSpace};
pub use tables::{
    build_lambda_table, build_phi_table, per_class_rates, stationary_distribution, BalanceTables,
    ClassRates, LevelTable, Stationary,
};
