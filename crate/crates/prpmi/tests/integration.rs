//! Cross-module behaviour on hand-scale instances: solver against oracle,
//! bound orderings, closed-form accounting checks.

use prpmi::fixtures;
use prpmi::heuristics::{
    complete_routing, compute_phi, full_milp_method, greedy_routing, two_step_heuristic,
    GreedyConfig,
};
use prpmi::instance::{CostSpec, DestinationSpec, Instance, SourceSpec, TransportSpec};
use prpmi::model::{
    build_full_model, check_routing, demand_split, evaluate_cost, initial_conditions,
};
use prpmi::solver::{
    brute_force_oracle, brute_force_oracle_relaxed, solve_reference, SolveLimits, SolveStatus,
};
use prpmi::teg::{build_teg, TimeIndex};

fn generous() -> SolveLimits {
    SolveLimits::from_seconds(30.0)
}

#[test]
fn zero_demand_everywhere_is_free() {
    let instance = fixtures::uniform_instance(2, 2, 1, 2);
    let teg = build_teg(&instance);
    let model = build_full_model(&instance, &teg).unwrap();
    let out = solve_reference(&model.milp, &generous());
    assert_eq!(out.status, SolveStatus::Optimal);
    assert!(out.incumbent_value().unwrap().abs() < 1e-7);
    // The optimum parks every storage: no travelled arcs.
    let solution = model.extract_solution(&instance, &teg, &out.incumbent.unwrap().assignment);
    assert_eq!(solution.cost.transport, 0.0);
}

/// One destination starts at 200 kg against a 260 kg morning peak; any
/// resupply swap completes after the peak, so some morning demand is lost in
/// every feasible solution.
#[test]
fn early_peak_forces_dissatisfaction() {
    let mut day = vec![0.0; 24];
    day[8] = 260.0;
    let instance = Instance {
        horizon: 1,
        storage_capacity: 300.0,
        cost: CostSpec {
            transport_per_unit: 2.25,
            dissatisfaction_per_kg: 12.0,
            dissatisfaction_fixed: 1500.0,
        },
        transport: TransportSpec {
            travel_time: vec![vec![2.0]],
            load_plus_swap_overhead: 1.0,
            depart_hour: 8,
        },
        sources: vec![SourceSpec {
            id: 0,
            refill_capacity: 1300.0,
            refill_price: 9.0,
            slot_limit: 2,
            initial_storages: vec![300.0],
        }],
        destinations: vec![DestinationSpec { id: 0, hourly_demand: vec![day], initial_stock: 200.0 }],
    };
    let teg = build_teg(&instance);
    let oracle = brute_force_oracle(&instance, &teg).unwrap();
    // At least 60 kg stay unmet whatever the routing does.
    assert!(oracle.solution.cost.variable_dissatisfaction >= 60.0 * 12.0 - 1e-6);
    assert!(oracle.solution.cost.fixed_dissatisfaction >= 1500.0 - 1e-6);
}

/// Parking everything reduces the refill subproblem to pure dissatisfaction
/// accounting, reproducible in closed form by depleting each stock.
#[test]
fn parked_routing_costs_match_the_accounting() {
    for seed in [0u64, 5, 9, 14] {
        let instance = fixtures::tiny_instance(seed);
        let teg = build_teg(&instance);
        let (y0, _) = initial_conditions(&instance, &teg);
        let mut y: Vec<bool> = y0.iter().map(|&v| v > 0.5).collect();
        for j in 1..=teg.horizon {
            for d in 0..teg.n_destinations {
                y[teg.arc_dest_self(d, TimeIndex::FirstPart(j))] = true;
                y[teg.arc_dest_self(d, TimeIndex::SecondPart(j))] = true;
            }
            for s in 0..teg.n_sources {
                for k in 0..instance.sources[s].initial_storages.len() {
                    y[teg.arc_source_self(s, k, TimeIndex::FirstPart(j))] = true;
                    y[teg.arc_source_self(s, k, TimeIndex::SecondPart(j))] = true;
                }
            }
        }
        let phi = compute_phi(&instance, &teg, &y, &generous()).unwrap();

        let mut expected = 0.0;
        for d in 0..teg.n_destinations {
            let mut stock = instance.destinations[d].initial_stock;
            for j in 1..=instance.horizon {
                let (before, after) = demand_split(&instance, d, j, None);
                let z1 = stock.min(before);
                stock -= z1;
                let z2 = stock.min(after);
                stock -= z2;
                let unmet = before + after - z1 - z2;
                expected += instance.cost.dissatisfaction_per_kg * unmet;
                if unmet > 1e-7 {
                    expected += instance.cost.dissatisfaction_fixed;
                }
            }
        }
        assert!(
            (phi.value - expected).abs() < 1e-6,
            "seed {seed}: phi {} vs accounting {expected}",
            phi.value
        );
        assert_eq!(phi.solution.cost.transport, 0.0);
    }
}

#[test]
fn rh_brackets_the_optimum_on_tiny_instances() {
    for seed in [0u64, 2, 5, 7, 11] {
        let instance = fixtures::tiny_instance(seed);
        let teg = build_teg(&instance);
        let oracle = brute_force_oracle(&instance, &teg).unwrap();
        let rh = two_step_heuristic(&instance, &teg, &generous()).unwrap();
        let bound = rh.bound.unwrap();
        assert!(
            bound <= oracle.value + 1e-6,
            "seed {seed}: relaxed bound {bound} above optimum {}",
            oracle.value
        );
        assert!(
            rh.value >= oracle.value - 1e-6,
            "seed {seed}: RH value {} below optimum {}",
            rh.value,
            oracle.value
        );
    }
}

/// With a single storage slot per source the pairing constraint is vacuous:
/// relaxed and full optima coincide and RH closes the gap.
#[test]
fn single_slot_sources_make_the_relaxation_tight() {
    let mut instance = fixtures::tiny_instance(7);
    for s in &mut instance.sources {
        s.slot_limit = 1;
        s.initial_storages.truncate(1);
    }
    let teg = build_teg(&instance);
    let full = brute_force_oracle(&instance, &teg).unwrap();
    let relaxed = brute_force_oracle_relaxed(&instance, &teg).unwrap();
    assert!((full.value - relaxed.value).abs() < 1e-6);

    let rh = two_step_heuristic(&instance, &teg, &generous()).unwrap();
    assert!(
        (rh.value - full.value).abs() < 1e-6,
        "RH {} vs optimum {}",
        rh.value,
        full.value
    );
}

#[test]
fn greedy_value_upper_bounds_the_optimum() {
    for seed in [1u64, 3, 8] {
        let instance = fixtures::tiny_instance(seed);
        let teg = build_teg(&instance);
        let oracle = brute_force_oracle(&instance, &teg).unwrap();
        let y = greedy_routing(&instance, &teg, &GreedyConfig::for_instance(&instance));
        let phi = compute_phi(&instance, &teg, &y, &generous()).unwrap();
        assert!(check_routing(&instance, &teg, &phi.solution.storage_flow).is_ok());
        assert!(
            phi.solution.cost.total() >= oracle.value - 1e-6,
            "seed {seed}: GH {} below optimum {}",
            phi.solution.cost.total(),
            oracle.value
        );
    }
}

/// Any solver-reported objective agrees with the recomputed cost breakdown
/// of the extracted solution.
#[test]
fn solver_objectives_match_recomputed_costs() {
    for seed in [0u64, 4, 6, 10] {
        let instance = fixtures::tiny_instance(seed);
        let teg = build_teg(&instance);
        let ma = full_milp_method(&instance, &teg, &generous()).unwrap();
        let model = build_full_model(&instance, &teg).unwrap();
        let x = model.assignment_from_flow(&ma.solution);
        let objective = model.milp.objective_value(&x);
        let recomputed = evaluate_cost(&instance, &teg, &ma.solution).total();
        assert!(
            (objective - recomputed).abs() < 1e-6,
            "seed {seed}: objective {objective} vs cost {recomputed}"
        );
        assert!((ma.value - recomputed).abs() < 1e-9);
    }
}

#[test]
fn ma_never_loses_to_gh_with_generous_limits() {
    let entries: Vec<prpmi::bench::SuiteEntry> = (0..4)
        .map(|i| prpmi::bench::SuiteEntry {
            id: format!("tiny_{i}"),
            instance: fixtures::tiny_instance(i),
        })
        .collect();
    let records = prpmi::bench::run_suite_sequential(
        &entries,
        &[prpmi::bench::Method::Ma, prpmi::bench::Method::Gh],
        &generous(),
    );
    for pair in records.chunks(2) {
        let (ma, gh) = (&pair[0], &pair[1]);
        assert_eq!(ma.instance_id, gh.instance_id);
        assert!(ma.cost <= gh.cost + 1e-6, "{}: MA {} vs GH {}", ma.instance_id, ma.cost, gh.cost);
    }
}

/// The completion used for warm starts stays feasible on a spread of
/// routings produced by different thresholds.
#[test]
fn completions_remain_model_feasible_across_thresholds() {
    for seed in [2u64, 13, 21] {
        let instance = fixtures::tiny_instance(seed);
        let teg = build_teg(&instance);
        for threshold in [0.0, 150.0, 300.0] {
            let y = greedy_routing(&instance, &teg, &GreedyConfig { critical_threshold: threshold });
            let completion = complete_routing(&instance, &teg, &y).unwrap();
            let model = build_full_model(&instance, &teg).unwrap();
            let x = model.assignment_from_flow(&completion);
            let (violation, offender) = model.milp.max_violation(&x);
            assert!(violation <= 1e-6, "seed {seed} t {threshold}: {offender} by {violation}");
        }
    }
}
