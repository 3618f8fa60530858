//! Solve limits and outcomes.
//!
//! Limits are expressed primarily as a deterministic effort budget (tableau
//! update units, see [`crate::simplex::Effort`]), so that identical inputs
//! explore identical trees and report identical results. Wall-clock seconds
//! convert at a fixed documented rate; the real clock only serves as a
//! generous safety cap.

use std::time::Duration;

/// Deterministic effort units corresponding to one nominal second,
/// calibrated to the dense tableau update throughput of one core on
/// cache-unfriendly mid-size tableaus.
pub const EFFORT_UNITS_PER_SECOND: u64 = 500_000_000;

/// Safety factor between the nominal time limit and the wall-clock cap.
pub const WALL_CLOCK_SAFETY: u32 = 5;

#[derive(Debug, Clone)]
pub struct SolveLimits {
    /// Wall-clock safety cap; the effort budget normally binds first.
    pub wall_clock: Duration,
    /// Relative optimality gap below which a solve stops as optimal.
    pub gap_tolerance: f64,
    pub node_limit: Option<u64>,
    /// Deterministic work budget; `None` derives it from `wall_clock`.
    pub effort_budget: Option<u64>,
    /// Dense tableaus above this entry count (512 MB at the default) are not
    /// built; the solve then reports whatever incumbent it was given.
    pub max_tableau_entries: u64,
}

impl Default for SolveLimits {
    fn default() -> Self {
        SolveLimits {
            wall_clock: Duration::from_secs(1200),
            gap_tolerance: 1e-6,
            node_limit: None,
            effort_budget: None,
            max_tableau_entries: 64_000_000,
        }
    }
}

impl SolveLimits {
    /// Nominal limit of `seconds`: effort budget at the fixed conversion
    /// rate, wall clock at a safety multiple.
    pub fn from_seconds(seconds: f64) -> SolveLimits {
        SolveLimits {
            wall_clock: Duration::from_secs_f64((seconds * WALL_CLOCK_SAFETY as f64).max(10.0)),
            effort_budget: Some((seconds * EFFORT_UNITS_PER_SECOND as f64) as u64),
            ..SolveLimits::default()
        }
    }

    pub fn effort(&self) -> u64 {
        self.effort_budget
            .unwrap_or((self.wall_clock.as_secs_f64() * EFFORT_UNITS_PER_SECOND as f64) as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Incumbent proved within the gap tolerance.
    Optimal,
    /// A feasible incumbent exists but limits stopped the proof.
    FeasibleTimeLimit,
    Infeasible,
    Unbounded,
    /// No usable result: limits hit without an incumbent, or a failure.
    Error,
}

#[derive(Debug, Clone)]
pub struct Incumbent {
    pub value: f64,
    pub assignment: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub incumbent: Option<Incumbent>,
    /// Valid lower bound on the optimum; `-inf` when nothing was proved.
    pub best_bound: f64,
    /// (incumbent - bound) / incumbent, when both are finite.
    pub gap: Option<f64>,
    pub nodes: u64,
    pub effort_used: u64,
    /// Diagnostic detail for `Error` outcomes.
    pub message: Option<String>,
}

impl SolveOutcome {
    pub fn incumbent_value(&self) -> Option<f64> {
        self.incumbent.as_ref().map(|i| i.value)
    }
}

/// Relative gap (ub - lb)/ub, clamped into [0, 1]; `None` when undefined.
pub fn relative_gap(upper: f64, lower: f64) -> Option<f64> {
    if !upper.is_finite() || !lower.is_finite() {
        return None;
    }
    if upper.abs() <= 1e-12 {
        return Some(if lower >= -1e-9 { 0.0 } else { 1.0 });
    }
    if upper < 0.0 {
        return None;
    }
    Some(((upper - lower) / upper).clamp(0.0, 1.0))
}
