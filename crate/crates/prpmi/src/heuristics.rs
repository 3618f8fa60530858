//! Heuristic and exact solution methods.
//!
//! - `greedy_routing` (GH step 1): threshold-triggered dispatch. Each day,
//!   destinations whose stock fell to the critical threshold are served in
//!   ascending stock order from the closest source with available storages,
//!   which are assumed to travel full; the displaced storage returns to the
//!   same source and is available again the next day.
//! - `compute_phi` (GH/RH step 2): exact refill subproblem for a fixed
//!   routing, giving the cheapest refill and allocation decisions.
//! - `two_step_heuristic` (RH): solve the relaxed model under the budget for
//!   a routing and a lower bound, then price it with `compute_phi`.
//! - `full_milp_method` (MA): the full model solved directly, warm-started
//!   from the greedy completion so a feasible answer always exists.
//!
//! `complete_routing` turns any routing-feasible storage flow into a full
//! feasible solution by greedy refilling; it seeds every solver call here.

use crate::instance::Instance;
use crate::model::{
    build_full_model, build_refill_subproblem, build_relaxed_model, check_routing, demand_split,
    evaluate_cost, initial_conditions, swap_source, BuildError, CostBreakdown, FlowSolution,
    RoutingError, UNMET_TOL,
};
use crate::solver::{solve_with_incumbent, SolveLimits, SolveOutcome, SolveStatus};
use crate::teg::{TimeExpandedGraph, TimeIndex};
use thiserror::Error;

#[derive(Debug, Clone, Copy)]
pub struct GreedyConfig {
    /// Stock level at or below which a destination is replenished.
    pub critical_threshold: f64,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        GreedyConfig { critical_threshold: 100.0 }
    }
}

impl GreedyConfig {
    /// A third of the storage capacity, the default working threshold.
    pub fn for_instance(instance: &Instance) -> GreedyConfig {
        GreedyConfig { critical_threshold: instance.storage_capacity / 3.0 }
    }
}

#[derive(Debug, Error)]
pub enum HeuristicError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
}

/// Result of one method run: a feasible solution, its recomputed cost, and
/// the bound/gap certificates where the method provides them.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub solution: FlowSolution,
    pub value: f64,
    /// Valid lower bound on the optimum (absent for the greedy method).
    pub bound: Option<f64>,
    pub gap: Option<f64>,
    pub status: SolveStatus,
    pub effort_used: u64,
}

/// Greedy dispatch: builds a routing-feasible storage flow day by day.
pub fn greedy_routing(instance: &Instance, teg: &TimeExpandedGraph, config: &GreedyConfig) -> Vec<bool> {
    let n_s = teg.n_sources;
    let n_d = teg.n_destinations;
    let (y0, _) = initial_conditions(instance, teg);
    let mut y: Vec<bool> = y0.iter().map(|&v| v > 0.5).collect();
    for d in 0..n_d {
        for i in teg.day_order() {
            y[teg.arc_dest_self(d, i)] = true;
        }
    }

    let mut stocks: Vec<f64> = instance.destinations.iter().map(|d| d.initial_stock).collect();
    for j in 1..=teg.horizon {
        // Available storages: what the previous second part parked or sent back.
        let prev = if j == 1 { TimeIndex::Initial } else { TimeIndex::SecondPart(j - 1) };
        let mut available: Vec<usize> = (0..n_s)
            .map(|s| {
                (0..n_d).filter(|&d| y[teg.arc_dest_to_source(d, s, j - 1)]).count()
                    + (0..teg.slot_limits[s])
                        .filter(|&k| y[teg.arc_source_self(s, k, prev)])
                        .count()
            })
            .collect();
        let arrivals = available.clone();

        let mut critical: Vec<usize> =
            (0..n_d).filter(|&d| stocks[d] <= config.critical_threshold).collect();
        critical.sort_by(|&a, &b| stocks[a].partial_cmp(&stocks[b]).unwrap().then(a.cmp(&b)));

        let mut deliveries: Vec<Option<usize>> = vec![None; n_d];
        for &d in &critical {
            let source = (0..n_s).filter(|&s| available[s] >= 1).min_by(|&a, &b| {
                instance.g(a, d).partial_cmp(&instance.g(b, d)).unwrap().then(a.cmp(&b))
            });
            let Some(s) = source else { break };
            deliveries[d] = Some(s);
            available[s] -= 1;
            y[teg.arc_source_to_dest(s, d, j)] = true;
            // The displaced storage goes back to the same source.
            y[teg.arc_dest_to_source(d, s, j)] = true;
        }
        for s in 0..n_s {
            let sent = deliveries.iter().flatten().filter(|&&src| src == s).count();
            for k in 0..arrivals[s] - sent {
                y[teg.arc_source_self(s, k, TimeIndex::FirstPart(j))] = true;
                y[teg.arc_source_self(s, k, TimeIndex::SecondPart(j))] = true;
            }
        }
        // Stock bookkeeping under the sent-full assumption.
        for d in 0..n_d {
            let (before, after) = demand_split(instance, d, j, deliveries[d]);
            let mut stock = stocks[d];
            stock -= stock.min(before);
            if deliveries[d].is_some() {
                stock = instance.storage_capacity;
            }
            stock -= stock.min(after);
            stocks[d] = stock;
        }
    }
    y
}

/// Completes a routing-feasible storage flow into a full feasible solution
/// by simulating greedy refills: at each source morning, incoming storages
/// are paired to outgoing ones (fullest first onto delivery arcs) and topped
/// up within the refill capacity, deliveries first.
pub fn complete_routing(
    instance: &Instance,
    teg: &TimeExpandedGraph,
    y: &[bool],
) -> Result<FlowSolution, RoutingError> {
    check_routing(instance, teg, y)?;
    let n_s = teg.n_sources;
    let n_d = teg.n_destinations;
    let horizon = teg.horizon;
    let cap = instance.storage_capacity;

    let mut hydrogen = vec![0.0; teg.arc_count()];
    let (_, f0) = initial_conditions(instance, teg);
    for a in teg.arcs_at(TimeIndex::Initial) {
        hydrogen[a] = f0[a];
    }

    let mut served_first = vec![vec![0.0; horizon]; n_d];
    let mut served_second = vec![vec![0.0; horizon]; n_d];
    let mut refill = vec![vec![0.0; horizon]; n_s];
    let mut assignment: Vec<Vec<Option<Vec<Vec<bool>>>>> =
        (0..n_s).map(|_| vec![None; horizon]).collect();

    for j in 1..=horizon {
        let prev = if j == 1 { TimeIndex::Initial } else { TimeIndex::SecondPart(j - 1) };
        // Source mornings: pair incoming storages to outgoing slots and refill.
        for s in 0..n_s {
            let slots = teg.slot_limits[s];
            let in_arcs: Vec<_> = (0..n_d)
                .map(|d| teg.arc_dest_to_source(d, s, j - 1))
                .chain((0..slots).map(|k| teg.arc_source_self(s, k, prev)))
                .collect();
            let out_arcs: Vec<_> = (0..n_d)
                .map(|d| teg.arc_source_to_dest(s, d, j))
                .chain((0..slots).map(|k| teg.arc_source_self(s, k, TimeIndex::FirstPart(j))))
                .collect();
            let active_in: Vec<usize> = (0..in_arcs.len()).filter(|&l| y[in_arcs[l]]).collect();
            let active_out: Vec<usize> = (0..out_arcs.len()).filter(|&l| y[out_arcs[l]]).collect();
            if active_in.is_empty() {
                continue;
            }
            // Fullest incoming storages ride the delivery arcs (the leading
            // l-indices are the destination arcs).
            let mut by_stock = active_in.clone();
            by_stock.sort_by(|&a, &b| {
                hydrogen[in_arcs[b]]
                    .partial_cmp(&hydrogen[in_arcs[a]])
                    .unwrap()
                    .then(a.cmp(&b))
            });
            let n = teg.n_destinations + slots;
            let mut matrix = vec![vec![false; n]; n];
            let mut budget = instance.sources[s].refill_capacity;
            for (&l_in, &l_out) in by_stock.iter().zip(&active_out) {
                let stock = hydrogen[in_arcs[l_in]];
                let is_delivery = l_out < n_d;
                let added = if is_delivery { (cap - stock).min(budget) } else { 0.0 };
                budget -= added;
                hydrogen[out_arcs[l_out]] = stock + added;
                refill[s][j - 1] += added;
                matrix[l_in][l_out] = true;
            }
            assignment[s][j - 1] = Some(matrix);
        }
        // Destination days: forced service, swap bookkeeping, carry-over.
        for d in 0..n_d {
            let a_in = teg.arc_dest_self(d, prev);
            let a_mid = teg.arc_dest_self(d, TimeIndex::FirstPart(j));
            let a_out = teg.arc_dest_self(d, TimeIndex::SecondPart(j));
            let from = swap_source(teg, y, d, j);
            let (before, after) = demand_split(instance, d, j, from);
            let z_l = hydrogen[a_in].min(before);
            hydrogen[a_mid] = hydrogen[a_in] - z_l;
            let avail = match from {
                Some(s) => {
                    let ret = (0..n_s)
                        .find(|&r| y[teg.arc_dest_to_source(d, r, j)])
                        .expect("swap implies a return");
                    hydrogen[teg.arc_dest_to_source(d, ret, j)] = hydrogen[a_mid];
                    hydrogen[teg.arc_source_to_dest(s, d, j)]
                }
                None => hydrogen[a_mid],
            };
            let z_r = avail.min(after);
            hydrogen[a_out] = avail - z_r;
            served_first[d][j - 1] = z_l;
            served_second[d][j - 1] = z_r;
        }
        // Second parts change nothing at the sources.
        for s in 0..n_s {
            for k in 0..teg.slot_limits[s] {
                let first = teg.arc_source_self(s, k, TimeIndex::FirstPart(j));
                if y[first] {
                    hydrogen[teg.arc_source_self(s, k, TimeIndex::SecondPart(j))] = hydrogen[first];
                }
            }
        }
    }

    let mut swap_hour = vec![vec![instance.no_swap_hour(); horizon]; n_d];
    let mut unmet_flag = vec![vec![false; horizon]; n_d];
    for d in 0..n_d {
        for j in 1..=horizon {
            let from = swap_source(teg, y, d, j);
            if let Some(s) = from {
                swap_hour[d][j - 1] = instance.swap_completion_hour(s, d);
            }
            let (before, after) = demand_split(instance, d, j, from);
            let unmet = before + after - served_first[d][j - 1] - served_second[d][j - 1];
            unmet_flag[d][j - 1] = unmet > UNMET_TOL;
        }
    }

    let mut solution = FlowSolution {
        storage_flow: y.to_vec(),
        hydrogen_flow: hydrogen,
        served_first,
        served_second,
        refill,
        swap_hour,
        unmet_flag,
        assignment,
        cost: CostBreakdown::default(),
    };
    solution.cost = evaluate_cost(instance, teg, &solution);
    Ok(solution)
}

/// Outcome of a refill-subproblem solve for a fixed routing.
#[derive(Debug, Clone)]
pub struct PhiOutcome {
    /// Optimal (or best found) refill + dissatisfaction cost.
    pub value: f64,
    pub solution: FlowSolution,
    pub status: SolveStatus,
    pub effort_used: u64,
}

/// Solves the refill subproblem for a routing-feasible storage flow and
/// returns its value and full solution.
pub fn compute_phi(
    instance: &Instance,
    teg: &TimeExpandedGraph,
    y: &[bool],
    limits: &SolveLimits,
) -> Result<PhiOutcome, HeuristicError> {
    let completion = complete_routing(instance, teg, y)?;
    let model = build_refill_subproblem(instance, teg, y)?;
    let start = model.assignment_from_flow(&completion);
    let outcome = solve_with_incumbent(&model.milp, limits, Some(&start));
    let solution = match &outcome.incumbent {
        Some(inc) => model.extract_solution(instance, teg, &inc.assignment),
        None => completion,
    };
    let cost = solution.cost;
    Ok(PhiOutcome {
        value: cost.refill + cost.variable_dissatisfaction + cost.fixed_dissatisfaction,
        solution,
        status: pick_status(&outcome),
        effort_used: outcome.effort_used,
    })
}

fn pick_status(outcome: &SolveOutcome) -> SolveStatus {
    match outcome.status {
        // The constructive warm start always exists, so a failed solve still
        // carries a feasible answer.
        SolveStatus::Error => SolveStatus::FeasibleTimeLimit,
        status => status,
    }
}

/// GH: greedy routing priced by the refill subproblem.
pub fn greedy_heuristic(
    instance: &Instance,
    teg: &TimeExpandedGraph,
    config: &GreedyConfig,
    limits: &SolveLimits,
) -> Result<MethodOutcome, HeuristicError> {
    let y = greedy_routing(instance, teg, config);
    let phi = compute_phi(instance, teg, &y, limits)?;
    Ok(MethodOutcome {
        value: phi.solution.cost.total(),
        solution: phi.solution,
        bound: None,
        gap: None,
        status: phi.status,
        effort_used: phi.effort_used,
    })
}

/// RH: relaxed solve for a routing and a lower bound, then exact refills.
/// Falls back to the greedy routing when the first step yields no incumbent.
pub fn two_step_heuristic(
    instance: &Instance,
    teg: &TimeExpandedGraph,
    limits: &SolveLimits,
) -> Result<MethodOutcome, HeuristicError> {
    let relaxed = build_relaxed_model(instance, teg)?;
    let y_greedy = greedy_routing(instance, teg, &GreedyConfig::for_instance(instance));
    let completion = complete_routing(instance, teg, &y_greedy)?;
    let start = relaxed.assignment_from_flow(&completion);
    let step1 = solve_with_incumbent(&relaxed.milp, limits, Some(&start));
    let bound = step1.best_bound.max(0.0);

    let y = match &step1.incumbent {
        Some(inc) => relaxed.extract_solution(instance, teg, &inc.assignment).storage_flow,
        None => y_greedy,
    };
    let phi = compute_phi(instance, teg, &y, limits)?;
    let value = phi.solution.cost.total();
    Ok(MethodOutcome {
        solution: phi.solution,
        value,
        bound: Some(bound),
        gap: crate::solver::relative_gap(value, bound),
        status: match step1.status {
            SolveStatus::Optimal => phi.status,
            _ => SolveStatus::FeasibleTimeLimit,
        },
        effort_used: step1.effort_used + phi.effort_used,
    })
}

/// MA: the full model solved directly, warm-started from the greedy
/// completion.
pub fn full_milp_method(
    instance: &Instance,
    teg: &TimeExpandedGraph,
    limits: &SolveLimits,
) -> Result<MethodOutcome, HeuristicError> {
    let model = build_full_model(instance, teg)?;
    let y_greedy = greedy_routing(instance, teg, &GreedyConfig::for_instance(instance));
    let completion = complete_routing(instance, teg, &y_greedy)?;
    let start = model.assignment_from_flow(&completion);
    let outcome = solve_with_incumbent(&model.milp, limits, Some(&start));
    let solution = match &outcome.incumbent {
        Some(inc) => model.extract_solution(instance, teg, &inc.assignment),
        None => completion,
    };
    let value = solution.cost.total();
    let bound = outcome.best_bound.max(0.0);
    Ok(MethodOutcome {
        solution,
        value,
        bound: Some(bound),
        gap: crate::solver::relative_gap(value, bound),
        status: pick_status(&outcome),
        effort_used: outcome.effort_used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::flow_counts;
    use crate::teg::build_teg;

    fn generous() -> SolveLimits {
        SolveLimits::from_seconds(30.0)
    }

    #[test]
    fn zero_threshold_with_healthy_stocks_parks_everything() {
        // Stocks cover the whole horizon, so nothing ever reaches zero.
        let mut instance = fixtures::uniform_instance(1, 2, 2, 3);
        for d in 0..2 {
            instance.destinations[d].initial_stock = 300.0;
            instance.destinations[d].hourly_demand =
                vec![fixtures::two_peak_day(30.0, 10.0); 3];
        }
        let teg = build_teg(&instance);
        let y = greedy_routing(&instance, &teg, &GreedyConfig { critical_threshold: 0.0 });
        for j in 1..=teg.horizon {
            for s in 0..teg.n_sources {
                for d in 0..teg.n_destinations {
                    assert!(!y[teg.arc_source_to_dest(s, d, j)]);
                }
            }
        }
        assert!(check_routing(&instance, &teg, &y).is_ok());
    }

    /// Hand trace of the dispatch on the fixed fixture, day by day.
    ///
    /// Day 1: stocks (90, 80), both at or below 100; serve d1 first (80),
    /// then d0, both from the only source; both displaced storages return.
    /// Day 2: stocks (240, 270) after full deliveries served the afternoon
    /// peaks; nobody is critical. Day 3: d0 re-hits the threshold at exactly
    /// 100 and is served again; d1 sits at 190 and is not.
    #[test]
    fn hand_trace_is_reproduced_exactly() {
        let instance = fixtures::gh_trace_instance();
        let teg = build_teg(&instance);
        let y = greedy_routing(&instance, &teg, &GreedyConfig { critical_threshold: 100.0 });

        let mut expected = vec![false; teg.arc_count()];
        let (y0, _) = initial_conditions(&instance, &teg);
        for (a, &v) in y0.iter().enumerate() {
            expected[a] = v > 0.5;
        }
        for d in 0..2 {
            for i in teg.day_order() {
                expected[teg.arc_dest_self(d, i)] = true;
            }
        }
        // Day 1: both destinations served from s0, storages return to s0.
        expected[teg.arc_source_to_dest(0, 0, 1)] = true;
        expected[teg.arc_source_to_dest(0, 1, 1)] = true;
        expected[teg.arc_dest_to_source(0, 0, 1)] = true;
        expected[teg.arc_dest_to_source(1, 0, 1)] = true;
        // Day 2: the two returned storages park.
        for k in 0..2 {
            expected[teg.arc_source_self(0, k, TimeIndex::FirstPart(2))] = true;
            expected[teg.arc_source_self(0, k, TimeIndex::SecondPart(2))] = true;
        }
        // Day 3: d0 served again, one storage parks.
        expected[teg.arc_source_to_dest(0, 0, 3)] = true;
        expected[teg.arc_dest_to_source(0, 0, 3)] = true;
        expected[teg.arc_source_self(0, 0, TimeIndex::FirstPart(3))] = true;
        expected[teg.arc_source_self(0, 0, TimeIndex::SecondPart(3))] = true;

        assert_eq!(y, expected);
    }

    #[test]
    fn scarce_storage_goes_to_the_lower_stock_destination() {
        let mut instance = fixtures::gh_trace_instance();
        instance.sources[0].initial_storages = vec![250.0];
        instance.sources[0].slot_limit = 1;
        let teg = build_teg(&instance);
        let y = greedy_routing(&instance, &teg, &GreedyConfig { critical_threshold: 100.0 });
        // d1 holds 80 < d0's 90: the single storage serves d1 only.
        assert!(y[teg.arc_source_to_dest(0, 1, 1)]);
        assert!(!y[teg.arc_source_to_dest(0, 0, 1)]);
    }

    #[test]
    fn greedy_routing_is_always_checker_clean() {
        for seed in 0..25 {
            let instance = fixtures::tiny_instance(seed);
            let teg = build_teg(&instance);
            for threshold in [0.0, 100.0, 300.0] {
                let y = greedy_routing(&instance, &teg, &GreedyConfig { critical_threshold: threshold });
                assert!(
                    check_routing(&instance, &teg, &y).is_ok(),
                    "seed {seed} threshold {threshold}"
                );
            }
        }
    }

    #[test]
    fn completion_is_feasible_for_the_full_model() {
        for seed in [0, 2, 7, 11] {
            let instance = fixtures::tiny_instance(seed);
            let teg = build_teg(&instance);
            let y = greedy_routing(&instance, &teg, &GreedyConfig::for_instance(&instance));
            let completion = complete_routing(&instance, &teg, &y).unwrap();
            let model = build_full_model(&instance, &teg).unwrap();
            let x = model.assignment_from_flow(&completion);
            let (violation, offender) = model.milp.max_violation(&x);
            assert!(violation <= 1e-6, "seed {seed}: {offender} violated by {violation}");
            // The model objective at the completion equals its recomputed cost.
            let objective = model.milp.objective_value(&x);
            assert!((objective - completion.cost.total()).abs() < 1e-6, "seed {seed}");
            // Lemma-4 control: constant number of active flows.
            let b = instance.storage_count();
            for (i, count) in flow_counts(&teg, &completion.storage_flow) {
                assert_eq!(count, b, "seed {seed} at {i}");
            }
        }
    }

    #[test]
    fn phi_improves_or_matches_the_completion() {
        for seed in [1, 4, 9] {
            let instance = fixtures::tiny_instance(seed);
            let teg = build_teg(&instance);
            let y = greedy_routing(&instance, &teg, &GreedyConfig::for_instance(&instance));
            let completion = complete_routing(&instance, &teg, &y).unwrap();
            let phi = compute_phi(&instance, &teg, &y, &generous()).unwrap();
            assert!(
                phi.solution.cost.total() <= completion.cost.total() + 1e-6,
                "seed {seed}: phi {} vs completion {}",
                phi.solution.cost.total(),
                completion.cost.total()
            );
            // Same transport: the subproblem cannot change the routing.
            assert!((phi.solution.cost.transport - completion.cost.transport).abs() < 1e-9);
        }
    }

    #[test]
    fn rh_bound_never_exceeds_rh_value() {
        for seed in [0, 3, 6] {
            let instance = fixtures::tiny_instance(seed);
            let teg = build_teg(&instance);
            let rh = two_step_heuristic(&instance, &teg, &generous()).unwrap();
            let bound = rh.bound.unwrap();
            assert!(
                bound <= rh.value + 1e-6,
                "seed {seed}: bound {bound} above value {}",
                rh.value
            );
            assert!(check_routing(&instance, &teg, &rh.solution.storage_flow).is_ok());
        }
    }

    #[test]
    fn ma_equals_oracle_on_a_tiny_instance() {
        let instance = fixtures::tiny_instance(2);
        let teg = build_teg(&instance);
        let ma = full_milp_method(&instance, &teg, &generous()).unwrap();
        let oracle = crate::solver::brute_force_oracle(&instance, &teg).unwrap();
        assert_eq!(ma.status, SolveStatus::Optimal);
        assert!(
            (ma.value - oracle.value).abs() < 1e-6,
            "ma {} vs oracle {}",
            ma.value,
            oracle.value
        );
    }

    #[test]
    fn invalid_instances_are_rejected_before_solving() {
        let mut instance = fixtures::tiny_instance(0);
        instance.destinations[0].hourly_demand[0][0] = 400.0;
        let teg = build_teg(&instance);
        assert!(matches!(
            full_milp_method(&instance, &teg, &generous()),
            Err(HeuristicError::Build(BuildError::InvalidInstance(_)))
        ));
    }
}
