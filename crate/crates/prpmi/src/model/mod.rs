//! The optimization model layer: a generic MILP container, the exact
//! linearization kernels, the flow-model builders, and flow-solution
//! bookkeeping.

mod build;
mod flow;
mod milp;

pub use build::{
    arc_name, build_full_model, build_refill_subproblem, build_relaxed_model, check_routing,
    initial_conditions, AssignmentBlock, BuildError, PrpModel, PrpModelKind, RoutingError, Term,
};
pub use flow::{
    demand_split, evaluate_cost, flow_counts, swap_source, CostBreakdown, FlowSolution, UNMET_TOL,
};
pub use milp::{
    linearize_assignment, linearize_implication, linearize_min, linearize_product, LinExpr,
    MilpModel, ModelError, Row, Sense, VarId, VarKind, Variable,
};
