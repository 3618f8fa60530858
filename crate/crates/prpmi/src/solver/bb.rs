//! Reference branch-and-bound over the dense simplex.
//!
//! Depth-first diving with periodic best-bound restarts, most-fractional
//! branching with lowest-index tie-breaking, and optional warm-start
//! incumbents. Bound changes are kept as parent-linked chains so open nodes
//! stay cheap. The search is fully deterministic under an effort budget.

use crate::model::{MilpModel, Sense, VarKind};
use crate::simplex::{solve_lp, Effort, LpRow, LpStatus};
use crate::solver::limits::{relative_gap, Incumbent, SolveLimits, SolveOutcome, SolveStatus};
use std::sync::Arc;
use std::time::Instant;

const INT_TOL: f64 = 1e-6;
const FEAS_TOL: f64 = 1e-6;
const BEST_BOUND_RESTART: u64 = 64;

struct BoundChange {
    var: usize,
    lower: f64,
    upper: f64,
    parent: Option<Arc<BoundChange>>,
}

struct Node {
    change: Option<Arc<BoundChange>>,
    bound: f64,
    depth: u32,
}

/// Solves the model within `limits`, without a warm start.
pub fn solve_reference(model: &MilpModel, limits: &SolveLimits) -> SolveOutcome {
    solve_with_incumbent(model, limits, None)
}

/// Solves the model within `limits`; `start`, when given and feasible, seeds
/// the incumbent so the search always has something to return.
pub fn solve_with_incumbent(
    model: &MilpModel,
    limits: &SolveLimits,
    start: Option<&[f64]>,
) -> SolveOutcome {
    let n = model.n_vars();
    let clock = Instant::now();
    let mut effort = Effort::with_budget(limits.effort());

    let objective = {
        let mut c = vec![0.0; n];
        for &(v, coef) in model.objective() {
            c[v] = coef;
        }
        c
    };
    let rows: Vec<LpRow> = model
        .rows()
        .iter()
        .map(|r| LpRow { terms: r.terms.clone(), sense: r.sense, rhs: r.rhs })
        .collect();
    let base_lower: Vec<f64> = model.variables().iter().map(|v| v.lower).collect();
    let base_upper: Vec<f64> = model.variables().iter().map(|v| v.upper).collect();
    let integers: Vec<usize> = model
        .variables()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind == VarKind::Binary)
        .map(|(i, _)| i)
        .collect();

    let mut incumbent: Option<Incumbent> = None;
    if let Some(x) = start {
        if x.len() == n && model.is_feasible(x, FEAS_TOL) && is_integral(&integers, x) {
            incumbent = Some(Incumbent { value: model.objective_value(x), assignment: x.to_vec() });
        }
    }

    // Refuse tableaus that would not fit the dense solver comfortably.
    let n_slack = rows.iter().filter(|r| r.sense != Sense::Eq).count();
    let entries = (rows.len() as u64) * ((n + n_slack + rows.len()) as u64);
    if entries > limits.max_tableau_entries {
        let status = if incumbent.is_some() { SolveStatus::FeasibleTimeLimit } else { SolveStatus::Error };
        let value = incumbent.as_ref().map(|i| i.value).unwrap_or(f64::INFINITY);
        return SolveOutcome {
            status,
            incumbent,
            best_bound: f64::NEG_INFINITY,
            gap: relative_gap(value, f64::NEG_INFINITY),
            nodes: 0,
            effort_used: 0,
            message: Some(format!(
                "tableau of {entries} entries exceeds the {} limit",
                limits.max_tableau_entries
            )),
        };
    }

    let mut open: Vec<Node> = vec![Node { change: None, bound: f64::NEG_INFINITY, depth: 0 }];
    // Lower bound floor from nodes abandoned without resolution.
    let mut abandoned_bound = f64::INFINITY;
    let mut clean = true;
    let mut nodes: u64 = 0;
    let mut pops: u64 = 0;
    let mut message = None;
    let mut lower = base_lower.clone();
    let mut upper = base_upper.clone();

    while let Some(node) = pop_node(&mut open, &mut pops) {
        if effort.exhausted()
            || clock.elapsed() > limits.wall_clock
            || limits.node_limit.is_some_and(|cap| nodes >= cap)
        {
            abandoned_bound = abandoned_bound.min(node.bound);
            clean = false;
            for rest in open.drain(..) {
                abandoned_bound = abandoned_bound.min(rest.bound);
            }
            break;
        }
        // Cutoff against the incumbent, honoring the gap tolerance.
        if let Some(inc) = &incumbent {
            let cutoff = inc.value - limits.gap_tolerance * inc.value.abs().max(1.0);
            if node.bound >= cutoff {
                continue;
            }
        }

        materialize_bounds(&node, &base_lower, &base_upper, &mut lower, &mut upper);
        let lp = solve_lp(&objective, &rows, &lower, &upper, &mut effort);
        nodes += 1;
        match lp.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                if node.depth == 0 {
                    return SolveOutcome {
                        status: SolveStatus::Unbounded,
                        incumbent,
                        best_bound: f64::NEG_INFINITY,
                        gap: None,
                        nodes,
                        effort_used: effort.used(),
                        message: None,
                    };
                }
                abandoned_bound = abandoned_bound.min(node.bound);
                clean = false;
                continue;
            }
            LpStatus::Stopped => {
                abandoned_bound = abandoned_bound.min(node.bound);
                clean = false;
                if effort.exhausted() {
                    for rest in open.drain(..) {
                        abandoned_bound = abandoned_bound.min(rest.bound);
                    }
                    break;
                }
                message = Some("a node LP hit the pivot cap".to_string());
                continue;
            }
            LpStatus::Optimal => {}
        }
        let value = lp.value + model.objective_constant;
        let bound = value.max(node.bound);
        if let Some(inc) = &incumbent {
            let cutoff = inc.value - limits.gap_tolerance * inc.value.abs().max(1.0);
            if bound >= cutoff {
                continue;
            }
        }

        match most_fractional(&integers, &lp.x) {
            None => {
                // Integral: round and accept if it checks out.
                let mut x = lp.x.clone();
                for &v in &integers {
                    x[v] = x[v].round();
                }
                if model.is_feasible(&x, FEAS_TOL) {
                    let value = model.objective_value(&x);
                    if incumbent.as_ref().is_none_or(|inc| value < inc.value - 1e-12) {
                        incumbent = Some(Incumbent { value, assignment: x });
                    }
                } else {
                    abandoned_bound = abandoned_bound.min(bound);
                    clean = false;
                }
            }
            Some(branch_var) => {
                let xv = lp.x[branch_var];
                let down = Node {
                    change: Some(Arc::new(BoundChange {
                        var: branch_var,
                        lower: lower[branch_var],
                        upper: xv.floor(),
                        parent: node.change.clone(),
                    })),
                    bound,
                    depth: node.depth + 1,
                };
                let up = Node {
                    change: Some(Arc::new(BoundChange {
                        var: branch_var,
                        lower: xv.ceil(),
                        upper: upper[branch_var],
                        parent: node.change.clone(),
                    })),
                    bound,
                    depth: node.depth + 1,
                };
                // Dive toward the nearer side: push it last so it pops first.
                if xv - xv.floor() < 0.5 {
                    open.push(up);
                    open.push(down);
                } else {
                    open.push(down);
                    open.push(up);
                }
            }
        }
    }

    let best_bound = if clean && open.is_empty() {
        incumbent.as_ref().map(|i| i.value).unwrap_or(f64::INFINITY)
    } else {
        abandoned_bound.min(
            open.iter().fold(f64::INFINITY, |acc, node| acc.min(node.bound)),
        )
    };

    let status = match (&incumbent, clean && open.is_empty()) {
        (Some(_), true) => SolveStatus::Optimal,
        (Some(_), false) => SolveStatus::FeasibleTimeLimit,
        (None, true) => SolveStatus::Infeasible,
        (None, false) => SolveStatus::Error,
    };
    let gap = incumbent
        .as_ref()
        .and_then(|inc| relative_gap(inc.value, best_bound.min(inc.value)));
    SolveOutcome {
        status,
        incumbent,
        best_bound,
        gap,
        nodes,
        effort_used: effort.used(),
        message,
    }
}

fn pop_node(open: &mut Vec<Node>, pops: &mut u64) -> Option<Node> {
    if open.is_empty() {
        return None;
    }
    *pops += 1;
    if *pops % BEST_BOUND_RESTART == 0 {
        // Best-bound restart: jump to the most promising open node.
        let best = open
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.bound.partial_cmp(&b.1.bound).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        Some(open.remove(best))
    } else {
        open.pop()
    }
}

fn materialize_bounds(
    node: &Node,
    base_lower: &[f64],
    base_upper: &[f64],
    lower: &mut [f64],
    upper: &mut [f64],
) {
    lower.copy_from_slice(base_lower);
    upper.copy_from_slice(base_upper);
    let mut chain = Vec::with_capacity(node.depth as usize);
    let mut cursor = node.change.as_ref();
    while let Some(c) = cursor {
        chain.push(c);
        cursor = c.parent.as_ref();
    }
    for c in chain.into_iter().rev() {
        lower[c.var] = c.lower;
        upper[c.var] = c.upper;
    }
}

fn is_integral(integers: &[usize], x: &[f64]) -> bool {
    integers.iter().all(|&v| (x[v] - x[v].round()).abs() <= INT_TOL)
}

fn most_fractional(integers: &[usize], x: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &v in integers {
        let frac = (x[v] - x[v].round()).abs();
        if frac <= INT_TOL {
            continue;
        }
        match best {
            Some((_, f)) if frac <= f => {}
            _ => best = Some((v, frac)),
        }
    }
    best.map(|(v, _)| v)
}
