//! Solvers: reference branch-and-bound, LP-file export, external solver
//! adapter, and the brute-force verification oracle.

mod bb;
mod external;
mod limits;
mod lp_file;
mod oracle;

pub use bb::{solve_reference, solve_with_incumbent};
pub use external::{parse_solution, run_external, write_stub_solver};
pub use limits::{
    relative_gap, Incumbent, SolveLimits, SolveOutcome, SolveStatus, EFFORT_UNITS_PER_SECOND,
    WALL_CLOCK_SAFETY,
};
pub use lp_file::{export_lp, write_lp};
pub use oracle::{brute_force_oracle, brute_force_oracle_relaxed, OracleError, OracleResult};
