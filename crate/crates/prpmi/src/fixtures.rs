//! Hand-scale instances for tests, the acceptance suite, and benchmarks.
//!
//! The generator in [`crate::instance`] only produces suite-scale instances
//! (at least 4.33 destinations per source); exhaustive verification needs
//! much smaller ones, built here directly.

use crate::instance::{CostSpec, DestinationSpec, Instance, SourceSpec, TransportSpec};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A day with demand concentrated at 08:00 and 15:00.
pub fn two_peak_day(morning: f64, afternoon: f64) -> Vec<f64> {
    let mut day = vec![0.0; 24];
    day[8] = morning;
    day[15] = afternoon;
    day
}

/// Zero-demand instance with uniform parameters; storage count is
/// `n_destinations + n_sources * slots`.
pub fn uniform_instance(n_sources: usize, n_destinations: usize, slots: usize, horizon: usize) -> Instance {
    Instance {
        horizon,
        storage_capacity: 300.0,
        cost: CostSpec {
            transport_per_unit: 2.25,
            dissatisfaction_per_kg: 12.0,
            dissatisfaction_fixed: 1500.0,
        },
        transport: TransportSpec {
            travel_time: vec![vec![1.0; n_destinations]; n_sources],
            load_plus_swap_overhead: 1.0,
            depart_hour: 8,
        },
        sources: (0..n_sources)
            .map(|id| SourceSpec {
                id,
                refill_capacity: 300.0,
                refill_price: 8.0,
                slot_limit: slots.max(1),
                initial_storages: vec![200.0; slots],
            })
            .collect(),
        destinations: (0..n_destinations)
            .map(|id| DestinationSpec {
                id,
                hourly_demand: vec![vec![0.0; 24]; horizon],
                initial_stock: 200.0,
            })
            .collect(),
    }
}

/// The fixed instance behind the greedy-heuristic hand trace: one source with
/// two parked storages, two destinations with two-peak demand, three days.
/// Swap completion hours are 11:00 for d0 and 13:00 for d1.
pub fn gh_trace_instance() -> Instance {
    Instance {
        horizon: 3,
        storage_capacity: 300.0,
        cost: CostSpec {
            transport_per_unit: 2.25,
            dissatisfaction_per_kg: 12.0,
            dissatisfaction_fixed: 1500.0,
        },
        transport: TransportSpec {
            travel_time: vec![vec![2.0, 4.0]],
            load_plus_swap_overhead: 1.0,
            depart_hour: 8,
        },
        sources: vec![SourceSpec {
            id: 0,
            refill_capacity: 400.0,
            refill_price: 8.0,
            slot_limit: 2,
            initial_storages: vec![250.0, 100.0],
        }],
        destinations: vec![
            DestinationSpec {
                id: 0,
                hourly_demand: vec![two_peak_day(80.0, 60.0); 3],
                initial_stock: 90.0,
            },
            DestinationSpec {
                id: 1,
                hourly_demand: vec![two_peak_day(50.0, 30.0); 3],
                initial_stock: 80.0,
            },
        ],
    }
}

/// Seeded instance inside the brute-force oracle envelope: at most two
/// sources, two destinations, three days and four storages.
pub fn tiny_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_sources = rng.gen_range(1..=2);
    let n_destinations = rng.gen_range(1..=2);
    let horizon = rng.gen_range(1..=3);
    let slots: Vec<usize> = (0..n_sources).map(|_| rng.gen_range(1..=2)).collect();
    let max_surplus = slots.iter().sum::<usize>().min(4 - n_destinations);
    let surplus = rng.gen_range(0..=max_surplus);

    let mut sources: Vec<SourceSpec> = (0..n_sources)
        .map(|id| SourceSpec {
            id,
            refill_capacity: 50.0 * rng.gen_range(1..=8) as f64,
            refill_price: rng.gen_range(5..=10) as f64,
            slot_limit: slots[id],
            initial_storages: Vec::new(),
        })
        .collect();
    let mut placed = 0;
    let mut s = 0;
    while placed < surplus {
        if sources[s].initial_storages.len() < sources[s].slot_limit {
            let stock = 10.0 * rng.gen_range(0..=30) as f64;
            sources[s].initial_storages.push(stock);
            placed += 1;
        }
        s = (s + 1) % n_sources;
    }

    let destinations = (0..n_destinations)
        .map(|id| DestinationSpec {
            id,
            hourly_demand: (0..horizon)
                .map(|_| {
                    two_peak_day(
                        20.0 * rng.gen_range(0..=8) as f64,
                        20.0 * rng.gen_range(0..=6) as f64,
                    )
                })
                .collect(),
            initial_stock: 10.0 * rng.gen_range(0..=30) as f64,
        })
        .collect();

    let travel_time = (0..n_sources)
        .map(|_| (0..n_destinations).map(|_| rng.gen_range(1..=6) as f64).collect())
        .collect();

    let elevated = rng.gen_bool(0.3);
    Instance {
        horizon,
        storage_capacity: 300.0,
        cost: CostSpec {
            transport_per_unit: 2.25,
            dissatisfaction_per_kg: if elevated { 14.0 } else { 12.0 },
            dissatisfaction_fixed: if elevated { 2500.0 } else { 1500.0 },
        },
        transport: TransportSpec { travel_time, load_plus_swap_overhead: 1.0, depart_hour: 8 },
        sources,
        destinations,
    }
}

/// Seeded instance a notch above the oracle envelope, still comfortable for
/// the reference solver: up to two sources, five destinations, four days.
pub fn medium_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_sources = rng.gen_range(1..=2);
    let n_destinations = rng.gen_range(3..=5);
    let horizon = rng.gen_range(3..=4);
    let slots: Vec<usize> = (0..n_sources).map(|_| rng.gen_range(2..=3)).collect();
    let surplus = rng.gen_range(1..=slots.iter().sum::<usize>());

    let mut sources: Vec<SourceSpec> = (0..n_sources)
        .map(|id| SourceSpec {
            id,
            refill_capacity: 100.0 * rng.gen_range(2..=8) as f64,
            refill_price: rng.gen_range(5..=10) as f64,
            slot_limit: slots[id],
            initial_storages: Vec::new(),
        })
        .collect();
    let mut placed = 0;
    let mut s = 0;
    while placed < surplus {
        if sources[s].initial_storages.len() < sources[s].slot_limit {
            sources[s].initial_storages.push(10.0 * rng.gen_range(5..=30) as f64);
            placed += 1;
        }
        s = (s + 1) % n_sources;
    }

    let destinations = (0..n_destinations)
        .map(|id| DestinationSpec {
            id,
            hourly_demand: (0..horizon)
                .map(|_| {
                    two_peak_day(
                        10.0 * rng.gen_range(2..=14) as f64,
                        10.0 * rng.gen_range(0..=12) as f64,
                    )
                })
                .collect(),
            initial_stock: 10.0 * rng.gen_range(5..=30) as f64,
        })
        .collect();

    let travel_time = (0..n_sources)
        .map(|_| (0..n_destinations).map(|_| rng.gen_range(1..=8) as f64).collect())
        .collect();

    Instance {
        horizon,
        storage_capacity: 300.0,
        cost: CostSpec {
            transport_per_unit: 2.25,
            dissatisfaction_per_kg: 12.0,
            dissatisfaction_fixed: 1500.0,
        },
        transport: TransportSpec { travel_time, load_plus_swap_overhead: 1.0, depart_hour: 8 },
        sources,
        destinations,
    }
}
