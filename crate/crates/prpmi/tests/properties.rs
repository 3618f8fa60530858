//! Property-based invariants over randomized instances and parameters.

use proptest::prelude::*;
use prpmi::bench::box_stats;
use prpmi::fixtures;
use prpmi::heuristics::{greedy_routing, GreedyConfig};
use prpmi::instance::{generate_instance, DissatisfactionProfile, GenerationSpec};
use prpmi::model::check_routing;
use prpmi::teg::build_teg;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Generator output is always valid and inside the stated marginals.
    #[test]
    fn generator_marginals_hold(
        n_sources in 1usize..=7,
        dest_ratio in 4.33f64..=8.5,
        storage_ratio in 1.26f64..=1.5,
        magnitude_hi in proptest::bool::ANY,
        seed in any::<u64>(),
    ) {
        let spec = GenerationSpec {
            n_sources,
            dest_ratio,
            storage_ratio,
            demand_magnitude: if magnitude_hi { 130.0 } else { 85.0 },
            dissatisfaction_profile: DissatisfactionProfile::Standard,
            rng_seed: seed,
            horizon: 7,
        };
        let instance = generate_instance(&spec).unwrap();
        prop_assert!(instance.validate().is_empty());
        let dr = instance.n_destinations() as f64 / instance.n_sources() as f64;
        prop_assert!((4.33..=8.5).contains(&dr));
        let sr = instance.storage_count() as f64 / instance.n_destinations() as f64;
        prop_assert!((1.26..=1.5).contains(&sr));
    }

    /// Cumulative demand is nondecreasing in the hour for every day.
    #[test]
    fn cumulative_demand_is_monotone(seed in any::<u64>(), d_pick in any::<usize>()) {
        let instance = fixtures::tiny_instance(seed);
        let d = d_pick % instance.n_destinations();
        for j in 1..=instance.horizon {
            let mut prev = 0.0;
            for h in 0..24 {
                let c = instance.cumulative_demand(d, j, h).unwrap();
                prop_assert!(c >= prev - 1e-12);
                prev = c;
            }
        }
    }

    /// Adjacency lists agree with tail/head on randomized graph shapes, and
    /// the closed-form arc counts match enumeration.
    #[test]
    fn teg_adjacency_is_symmetric(
        n_sources in 1usize..=3,
        n_destinations in 1usize..=4,
        slots in 1usize..=3,
        horizon in 0usize..=4,
    ) {
        let instance = fixtures::uniform_instance(n_sources, n_destinations, slots, horizon);
        let teg = build_teg(&instance);
        prop_assert_eq!(
            teg.arc_count(),
            teg.lower_arc_count() + teg.upper_arc_count() + teg.source_self_arc_count()
        );
        for (id, _) in teg.arcs() {
            let (tl, tt) = teg.tail(id);
            let (hl, ht) = teg.head(id);
            prop_assert!(teg.outgoing(tl, tt).contains(&id));
            prop_assert!(teg.incoming(hl, ht).contains(&id));
        }
        let per_layer: usize = teg.day_order().map(|i| teg.arcs_at(i).count()).sum();
        prop_assert_eq!(per_layer, teg.arc_count());
    }

    /// The greedy dispatch never violates a routing constraint, whatever the
    /// threshold.
    #[test]
    fn greedy_routing_is_feasible(seed in any::<u64>(), threshold in 0.0f64..=300.0) {
        let instance = fixtures::tiny_instance(seed);
        let teg = build_teg(&instance);
        let y = greedy_routing(&instance, &teg, &GreedyConfig { critical_threshold: threshold });
        prop_assert!(check_routing(&instance, &teg, &y).is_ok());
    }

    /// Box statistics stay internally ordered and fence the whiskers.
    #[test]
    fn box_stats_are_ordered(values in proptest::collection::vec(-1e6f64..1e6, 1..40)) {
        let stats = box_stats(&values).unwrap();
        prop_assert!(stats.q1 <= stats.median + 1e-9);
        prop_assert!(stats.median <= stats.q3 + 1e-9);
        prop_assert!(stats.lo_whisker >= stats.q1 - 1.5 * (stats.q3 - stats.q1) - 1e-9);
        prop_assert!(stats.hi_whisker <= stats.q3 + 1.5 * (stats.q3 - stats.q1) + 1e-9);
        let inside = values
            .iter()
            .filter(|&&x| x >= stats.lo_whisker && x <= stats.hi_whisker)
            .count();
        prop_assert_eq!(inside + stats.outliers.len(), values.len());
    }
}
