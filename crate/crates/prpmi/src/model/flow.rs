//! Flow solutions and cost accounting.
//!
//! A `FlowSolution` carries the raw decision values of the flow model —
//! storage flows, hydrogen flows, served demand, refills, assignment
//! matrices — plus reporting fields derived from them (swap hours, unmet
//! flags, cost breakdown). `evaluate_cost` recomputes the four cost terms
//! from the raw values alone, independent of any model objective row.

use crate::instance::Instance;
use crate::teg::{ArcId, ArcKind, TimeExpandedGraph, TimeIndex};

/// Threshold above which unmet demand counts as a dissatisfaction event.
pub const UNMET_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown {
    pub transport: f64,
    pub refill: f64,
    pub variable_dissatisfaction: f64,
    pub fixed_dissatisfaction: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.transport + self.refill + self.variable_dissatisfaction + self.fixed_dissatisfaction
    }
}

/// Values of every decision of the flow model, plus derived reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSolution {
    /// Storage flow per arc.
    pub storage_flow: Vec<bool>,
    /// Hydrogen flow per arc, in kg.
    pub hydrogen_flow: Vec<f64>,
    /// Demand served in the first part of each day, indexed [d][j-1].
    pub served_first: Vec<Vec<f64>>,
    /// Demand served in the second part of each day, indexed [d][j-1].
    pub served_second: Vec<Vec<f64>>,
    /// Hydrogen purchased per source and day, indexed [s][j-1].
    pub refill: Vec<Vec<f64>>,
    /// Derived swap completion hour per destination and day; 12 when no swap.
    pub swap_hour: Vec<Vec<usize>>,
    /// Whether a (destination, day) pair has unmet demand.
    pub unmet_flag: Vec<Vec<bool>>,
    /// Storage pairing matrix per (source, day); `None` when the producing
    /// model had no assignment constraints for that node.
    pub assignment: Vec<Vec<Option<Vec<Vec<bool>>>>>,
    pub cost: CostBreakdown,
}

impl FlowSolution {
    pub fn active_arcs<'a>(&'a self, teg: &'a TimeExpandedGraph) -> impl Iterator<Item = ArcId> + 'a {
        (0..teg.arc_count()).filter(|&a| self.storage_flow[a])
    }
}

/// The source that swaps into destination `d` on day `j`, if any.
pub fn swap_source(teg: &TimeExpandedGraph, storage_flow: &[bool], d: usize, j: usize) -> Option<usize> {
    (0..teg.n_sources).find(|&s| storage_flow[teg.arc_source_to_dest(s, d, j)])
}

/// Splits day `j`'s demand at destination `d` into (before swap, after swap).
/// Without a swap the split sits at the fixed mid-day hour.
pub fn demand_split(instance: &Instance, d: usize, j: usize, swap_from: Option<usize>) -> (f64, f64) {
    let hour = match swap_from {
        Some(s) => instance.swap_completion_hour(s, d),
        None => instance.no_swap_hour(),
    };
    let before = instance.cumulative_demand_unchecked(d, j, hour);
    let total = instance.total_daily_demand(d, j);
    (before, total - before)
}

/// Recomputes the four cost terms from raw storage flows, served quantities
/// and refills. Transport counts every travelled delivery and return arc at
/// its travel time; destination self-arcs cost nothing.
pub fn evaluate_cost(instance: &Instance, teg: &TimeExpandedGraph, solution: &FlowSolution) -> CostBreakdown {
    let mut transport = 0.0;
    for (id, arc) in teg.arcs() {
        if !solution.storage_flow[id] {
            continue;
        }
        let t = match arc.kind {
            ArcKind::SourceToDest { source, dest } | ArcKind::DestToSource { dest, source } => {
                instance.transport.travel_time[source][dest]
            }
            ArcKind::DestSelf { .. } | ArcKind::SourceSelf { .. } => continue,
        };
        transport += instance.cost.transport_per_unit * t;
    }

    let mut refill = 0.0;
    for (s, source) in instance.sources.iter().enumerate() {
        for j in 0..instance.horizon {
            refill += source.refill_price * solution.refill[s][j];
        }
    }

    let mut variable = 0.0;
    let mut fixed = 0.0;
    for d in 0..instance.n_destinations() {
        for j in 1..=instance.horizon {
            let from = swap_source(teg, &solution.storage_flow, d, j);
            let (before, after) = demand_split(instance, d, j, from);
            let unmet =
                before + after - solution.served_first[d][j - 1] - solution.served_second[d][j - 1];
            variable += instance.cost.dissatisfaction_per_kg * unmet;
            if unmet > UNMET_TOL {
                fixed += instance.cost.dissatisfaction_fixed;
            }
        }
    }

    CostBreakdown {
        transport,
        refill,
        variable_dissatisfaction: variable,
        fixed_dissatisfaction: fixed,
    }
}

/// Lemma-4 control quantity: the number of active storage flows per time
/// index. Feasible solutions carry the storage count at every index.
pub fn flow_counts(teg: &TimeExpandedGraph, storage_flow: &[bool]) -> Vec<(TimeIndex, usize)> {
    teg.day_order()
        .map(|i| (i, teg.arcs_at(i).filter(|&a| storage_flow[a]).count()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::teg::build_teg;

    fn blank_solution(instance: &Instance, teg: &TimeExpandedGraph) -> FlowSolution {
        let n_d = instance.n_destinations();
        let n_s = instance.n_sources();
        let j = instance.horizon;
        FlowSolution {
            storage_flow: vec![false; teg.arc_count()],
            hydrogen_flow: vec![0.0; teg.arc_count()],
            served_first: vec![vec![0.0; j]; n_d],
            served_second: vec![vec![0.0; j]; n_d],
            refill: vec![vec![0.0; j]; n_s],
            swap_hour: vec![vec![12; j]; n_d],
            unmet_flag: vec![vec![false; j]; n_d],
            assignment: vec![vec![None; j]; n_s],
            cost: CostBreakdown::default(),
        }
    }

    use crate::instance::Instance;

    #[test]
    fn all_parked_solution_has_zero_transport() {
        let instance = fixtures::uniform_instance(1, 2, 2, 2);
        let teg = build_teg(&instance);
        let sol = blank_solution(&instance, &teg);
        let cost = evaluate_cost(&instance, &teg, &sol);
        assert_eq!(cost.transport, 0.0);
        assert_eq!(cost.refill, 0.0);
    }

    #[test]
    fn one_round_trip_at_t40_costs_180() {
        let mut instance = fixtures::uniform_instance(1, 1, 1, 1);
        instance.transport.travel_time[0][0] = 40.0;
        let teg = build_teg(&instance);
        let mut sol = blank_solution(&instance, &teg);
        sol.storage_flow[teg.arc_source_to_dest(0, 0, 1)] = true;
        sol.storage_flow[teg.arc_dest_to_source(0, 0, 1)] = true;
        // Zero demand: no dissatisfaction regardless of service.
        let cost = evaluate_cost(&instance, &teg, &sol);
        assert!((cost.transport - 180.0).abs() < 1e-12);
        assert_eq!(cost.variable_dissatisfaction, 0.0);
        assert_eq!(cost.fixed_dissatisfaction, 0.0);
    }

    #[test]
    fn unmet_demand_costs_both_terms() {
        let mut instance = fixtures::uniform_instance(1, 1, 1, 1);
        instance.destinations[0].hourly_demand[0] = fixtures::two_peak_day(10.0, 0.0);
        let teg = build_teg(&instance);
        let mut sol = blank_solution(&instance, &teg);
        sol.served_first[0][0] = 0.0;
        let cost = evaluate_cost(&instance, &teg, &sol);
        assert!((cost.variable_dissatisfaction - 120.0).abs() < 1e-12);
        assert!((cost.fixed_dissatisfaction - 1500.0).abs() < 1e-12);
        // Serving everything removes both.
        sol.served_first[0][0] = 10.0;
        let cost = evaluate_cost(&instance, &teg, &sol);
        assert_eq!(cost.variable_dissatisfaction, 0.0);
        assert_eq!(cost.fixed_dissatisfaction, 0.0);
    }

    #[test]
    fn demand_split_follows_the_swap_hour() {
        let instance = fixtures::gh_trace_instance();
        // d0: peaks at hours 8 (80 kg) and 15 (60 kg); swap from s0 ends 11:00.
        let (before, after) = demand_split(&instance, 0, 1, Some(0));
        assert_eq!((before, after), (80.0, 60.0));
        // No swap: split at 12:00.
        let (before, after) = demand_split(&instance, 0, 1, None);
        assert_eq!((before, after), (80.0, 60.0));
        // d1 swap ends 13:00, same split for this demand shape.
        let (before, after) = demand_split(&instance, 1, 1, Some(0));
        assert_eq!((before, after), (50.0, 30.0));
    }

    #[test]
    fn flow_counts_reports_per_time_index() {
        let instance = fixtures::uniform_instance(1, 1, 1, 1);
        let teg = build_teg(&instance);
        let mut flow = vec![false; teg.arc_count()];
        flow[teg.arc_dest_self(0, TimeIndex::Initial)] = true;
        flow[teg.arc_source_self(0, 0, TimeIndex::Initial)] = true;
        let counts = flow_counts(&teg, &flow);
        assert_eq!(counts[0], (TimeIndex::Initial, 2));
        assert_eq!(counts[1], (TimeIndex::FirstPart(1), 0));
    }
}
