//! Problem instances: domain types, seeded generation, validation, JSON I/O.
//!
//! An instance describes sources (refill capacity/price, parking slots,
//! initially parked storages), destinations (hourly demand over the horizon,
//! one initially stationed storage), transport times, and costs. The file
//! format is a single JSON document with top-level keys `horizon`,
//! `storage_capacity`, `cost`, `transport`, `sources`, `destinations`;
//! hourly demand is a J x 24 array per destination.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use thiserror::Error;

/// Refill capacities of the first seven sources, in kg/day, read positionally.
pub const SOURCE_REFILL_CAPACITY: [f64; 7] = [1300.0, 1500.0, 1700.0, 1000.0, 1000.0, 800.0, 500.0];
/// Refill prices of the first seven sources, in EUR/kg, read positionally.
pub const SOURCE_REFILL_PRICE: [f64; 7] = [9.0, 8.0, 8.3, 8.0, 8.0, 10.0, 7.0];

/// Default storage capacity in kg.
pub const DEFAULT_STORAGE_CAPACITY: f64 = 300.0;
/// Default initial stock of every storage, in kg.
pub const DEFAULT_INITIAL_STOCK: f64 = 200.0;
/// Default parking slot limit per source.
pub const DEFAULT_SLOT_LIMIT: usize = 4;
/// Default truck departure hour.
pub const DEFAULT_DEPART_HOUR: u32 = 8;
/// Default load + swap overhead in hours (no load time, one hour swap).
pub const DEFAULT_OVERHEAD_HOURS: f64 = 1.0;
/// Default unit transport cost per unit of travel time.
pub const DEFAULT_TRANSPORT_COST: f64 = 2.25;

/// Valid range of the destinations-per-source ratio.
pub const DEST_RATIO_RANGE: (f64, f64) = (4.33, 8.5);
/// Valid range of the storages-per-destination ratio.
pub const STORAGE_RATIO_RANGE: (f64, f64) = (1.26, 1.5);

/// A supply location where storages are refilled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub id: usize,
    /// Maximum kg of hydrogen purchasable per day.
    pub refill_capacity: f64,
    /// Purchase price in EUR/kg.
    pub refill_price: f64,
    /// Maximum number of storages that may stay at this source.
    pub slot_limit: usize,
    /// Stock levels (kg) of the storages parked here at the initial time.
    pub initial_storages: Vec<f64>,
}

/// A demand location with a single stationed storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DestinationSpec {
    pub id: usize,
    /// Demand in kg per hour: one row of 24 values per day of the horizon.
    pub hourly_demand: Vec<Vec<f64>>,
    /// Stock (kg) of the storage stationed here at the initial time.
    pub initial_stock: f64,
}

/// Travel times and trip scheduling parameters.
///
/// Travel times are stored symmetric (the s->d entry serves both directions).
/// `g(s,d) = load_plus_swap_overhead + travel_time[s][d]` is the hours from
/// truck departure to swap completion; a swap must finish the same day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportSpec {
    /// Hours of travel between source s and destination d; rows are sources.
    pub travel_time: Vec<Vec<f64>>,
    /// Hours added to the travel time to form g(s,d).
    pub load_plus_swap_overhead: f64,
    /// Hour at which trucks leave the sources.
    pub depart_hour: u32,
}

/// Cost coefficients of the objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    /// EUR per unit of travel time, applied to every travelled arc.
    pub transport_per_unit: f64,
    /// EUR per kg of unmet demand.
    pub dissatisfaction_per_kg: f64,
    /// EUR per (destination, day) with any unmet demand.
    pub dissatisfaction_fixed: f64,
}

/// A complete problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    /// Number of days J in the planning horizon.
    pub horizon: usize,
    /// Common maximal capacity of every storage, in kg.
    pub storage_capacity: f64,
    pub cost: CostSpec,
    pub transport: TransportSpec,
    pub sources: Vec<SourceSpec>,
    pub destinations: Vec<DestinationSpec>,
}

/// One of the two dissatisfaction cost magnitudes of the instance suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DissatisfactionProfile {
    /// 12 EUR/kg variable, 1500 EUR fixed.
    Standard,
    /// 14 EUR/kg variable, 2500 EUR fixed.
    Elevated,
}

impl DissatisfactionProfile {
    pub fn variable_cost(self) -> f64 {
        match self {
            DissatisfactionProfile::Standard => 12.0,
            DissatisfactionProfile::Elevated => 14.0,
        }
    }

    pub fn fixed_cost(self) -> f64 {
        match self {
            DissatisfactionProfile::Standard => 1500.0,
            DissatisfactionProfile::Elevated => 2500.0,
        }
    }
}

/// Parameters of the seeded instance generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSpec {
    /// Number of sources, 1 to 7.
    pub n_sources: usize,
    /// Destinations per source, in [4.33, 8.5].
    pub dest_ratio: f64,
    /// Storages per destination, in [1.26, 1.5].
    pub storage_ratio: f64,
    /// Average weekday demand per destination, 85 or 130 kg.
    pub demand_magnitude: f64,
    pub dissatisfaction_profile: DissatisfactionProfile,
    pub rng_seed: u64,
    /// Days in the horizon; the weekend rule implies weekly structure.
    pub horizon: usize,
}

impl GenerationSpec {
    /// Mid-range defaults for everything except source count and seed.
    pub fn new(n_sources: usize, rng_seed: u64) -> Self {
        GenerationSpec {
            n_sources,
            dest_ratio: 6.0,
            storage_ratio: 1.4,
            demand_magnitude: 85.0,
            dissatisfaction_profile: DissatisfactionProfile::Standard,
            rng_seed,
            horizon: 7,
        }
    }
}

/// A named violation of an instance invariant or model assumption.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Assumption or invariant identifier, e.g. "A2" or "shape".
    pub code: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.code, self.detail)
    }
}

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid instance: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("parameter error: {0}")]
    Parameter(String),
}

fn format_violations(violations: &[Violation]) -> String {
    violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

impl Instance {
    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn n_destinations(&self) -> usize {
        self.destinations.len()
    }

    /// Total number of storage units: one per destination plus those parked
    /// at the sources.
    pub fn storage_count(&self) -> usize {
        self.destinations.len() + self.sources.iter().map(|s| s.initial_storages.len()).sum::<usize>()
    }

    /// Hours from truck departure at source `s` until the swap at destination
    /// `d` completes, counted from the departure (load + travel + swap).
    pub fn g(&self, s: usize, d: usize) -> f64 {
        self.transport.load_plus_swap_overhead + self.transport.travel_time[s][d]
    }

    /// Hour of day at which a swap from source `s` completes at destination
    /// `d`, clamped into 0..=23.
    pub fn swap_completion_hour(&self, s: usize, d: usize) -> usize {
        let h = self.transport.depart_hour as f64 + self.g(s, d);
        (h.floor() as i64).clamp(0, 23) as usize
    }

    /// The arbitrary mid-day split hour used when no swap occurs.
    pub fn no_swap_hour(&self) -> usize {
        12
    }

    /// Cumulative demand at destination `d` from midnight through hour `h`
    /// (inclusive) of day `j` (1-based).
    pub fn cumulative_demand(&self, d: usize, j: usize, h: usize) -> Result<f64, InstanceError> {
        if d >= self.destinations.len() || j == 0 || j > self.horizon || h > 23 {
            return Err(InstanceError::Parameter(format!(
                "cumulative_demand index out of range: d={d} j={j} h={h}"
            )));
        }
        Ok(self.cumulative_demand_unchecked(d, j, h))
    }

    pub(crate) fn cumulative_demand_unchecked(&self, d: usize, j: usize, h: usize) -> f64 {
        self.destinations[d].hourly_demand[j - 1][..=h].iter().sum()
    }

    /// Total demand of day `j` (1-based) at destination `d`.
    pub fn total_daily_demand(&self, d: usize, j: usize) -> f64 {
        self.cumulative_demand_unchecked(d, j, 23)
    }

    /// Checks every type invariant and every assumption testable on data
    /// alone; the generator's output is always clean.
    pub fn validate(&self) -> Vec<Violation> {
        validate_instance(self)
    }
}

/// Hourly weights of the three-peaked daily demand profile (peaks at 08:00,
/// 14:00 and 17:00; symmetric triangular bumps of radius 3).
fn demand_profile_weights() -> [f64; 24] {
    let mut w = [0.0; 24];
    for center in [8i32, 14, 17] {
        for h in 0..24i32 {
            let dist = (h - center).abs();
            if dist < 3 {
                w[h as usize] += (3 - dist) as f64;
            }
        }
    }
    w
}

fn weekend_factor(day: usize) -> f64 {
    match (day - 1) % 7 {
        5 => 0.5,
        6 => 0.25,
        _ => 1.0,
    }
}

/// Builds the J x 24 demand grid for one destination: weekday rows integrate
/// to `magnitude`, Saturdays scale by exactly 0.5 and Sundays by exactly 0.25.
pub fn demand_grid(magnitude: f64, horizon: usize) -> Vec<Vec<f64>> {
    let weights = demand_profile_weights();
    let total: f64 = weights.iter().sum();
    (1..=horizon)
        .map(|j| {
            let factor = weekend_factor(j);
            weights.iter().map(|w| magnitude * w / total * factor).collect()
        })
        .collect()
}

/// Generates a seeded instance with the suite's characteristics: positional
/// refill capacities and prices, slot limit 4, 300 kg capacity, 200 kg initial
/// stocks, integer travel times, departure at 08:00, 1 h swap overhead.
pub fn generate_instance(spec: &GenerationSpec) -> Result<Instance, InstanceError> {
    if !(1..=7).contains(&spec.n_sources) {
        return Err(InstanceError::Parameter(format!(
            "n_sources {} outside 1..=7",
            spec.n_sources
        )));
    }
    if !(DEST_RATIO_RANGE.0..=DEST_RATIO_RANGE.1).contains(&spec.dest_ratio) {
        return Err(InstanceError::Parameter(format!(
            "dest_ratio {} outside [{}, {}]",
            spec.dest_ratio, DEST_RATIO_RANGE.0, DEST_RATIO_RANGE.1
        )));
    }
    if !(STORAGE_RATIO_RANGE.0..=STORAGE_RATIO_RANGE.1).contains(&spec.storage_ratio) {
        return Err(InstanceError::Parameter(format!(
            "storage_ratio {} outside [{}, {}]",
            spec.storage_ratio, STORAGE_RATIO_RANGE.0, STORAGE_RATIO_RANGE.1
        )));
    }
    if spec.demand_magnitude != 85.0 && spec.demand_magnitude != 130.0 {
        return Err(InstanceError::Parameter(format!(
            "demand_magnitude {} not in {{85, 130}}",
            spec.demand_magnitude
        )));
    }
    if spec.horizon == 0 {
        return Err(InstanceError::Parameter("horizon must be at least 1".into()));
    }

    let n_s = spec.n_sources;
    let n_d = clamp_round(
        n_s as f64 * spec.dest_ratio,
        (DEST_RATIO_RANGE.0 * n_s as f64).ceil() as usize,
        (DEST_RATIO_RANGE.1 * n_s as f64).floor() as usize,
    );
    let surplus_cap = DEFAULT_SLOT_LIMIT * n_s;
    let surplus = clamp_round(
        (spec.storage_ratio - 1.0) * n_d as f64,
        (0.26 * n_d as f64).ceil() as usize,
        ((0.5 * n_d as f64).floor() as usize).min(surplus_cap),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);

    let sources = (0..n_s)
        .map(|s| SourceSpec {
            id: s,
            refill_capacity: SOURCE_REFILL_CAPACITY[s],
            refill_price: SOURCE_REFILL_PRICE[s],
            slot_limit: DEFAULT_SLOT_LIMIT,
            initial_storages: Vec::new(),
        })
        .collect::<Vec<_>>();
    let mut sources = sources;
    for i in 0..surplus {
        sources[i % n_s].initial_storages.push(DEFAULT_INITIAL_STOCK);
    }

    let grid = demand_grid(spec.demand_magnitude, spec.horizon);
    let destinations = (0..n_d)
        .map(|d| DestinationSpec {
            id: d,
            hourly_demand: grid.clone(),
            initial_stock: DEFAULT_INITIAL_STOCK,
        })
        .collect();

    // Same-day completion caps travel at 23 - h0 - overhead = 14 hours.
    let max_travel = (23 - DEFAULT_DEPART_HOUR) as f64 - DEFAULT_OVERHEAD_HOURS;
    let travel_time = (0..n_s)
        .map(|_| (0..n_d).map(|_| rng.gen_range(1..=max_travel as u32) as f64).collect())
        .collect();

    Ok(Instance {
        horizon: spec.horizon,
        storage_capacity: DEFAULT_STORAGE_CAPACITY,
        cost: CostSpec {
            transport_per_unit: DEFAULT_TRANSPORT_COST,
            dissatisfaction_per_kg: spec.dissatisfaction_profile.variable_cost(),
            dissatisfaction_fixed: spec.dissatisfaction_profile.fixed_cost(),
        },
        transport: TransportSpec {
            travel_time,
            load_plus_swap_overhead: DEFAULT_OVERHEAD_HOURS,
            depart_hour: DEFAULT_DEPART_HOUR,
        },
        sources,
        destinations,
    })
}

fn clamp_round(x: f64, lo: usize, hi: usize) -> usize {
    (x.round() as usize).clamp(lo, hi)
}

/// Returns the list of invariant and assumption violations; empty means valid.
pub fn validate_instance(instance: &Instance) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |code: &str, detail: String| out.push(Violation { code: code.to_string(), detail });
    let cap = instance.storage_capacity;

    if !(cap > 0.0) {
        push("A1", format!("storage capacity {cap} must be positive"));
    }
    if instance.cost.transport_per_unit < 0.0
        || instance.cost.dissatisfaction_per_kg < 0.0
        || instance.cost.dissatisfaction_fixed < 0.0
    {
        push("cost", "cost coefficients must be nonnegative".to_string());
    }
    if instance.transport.depart_hour > 23 {
        push("A5", format!("depart hour {} outside 0..=23", instance.transport.depart_hour));
    }
    if instance.transport.load_plus_swap_overhead < 0.0 {
        push("transport", "load+swap overhead must be nonnegative".to_string());
    }
    if instance.transport.travel_time.len() != instance.sources.len() {
        push(
            "shape",
            format!(
                "travel_time has {} rows, expected one per source ({})",
                instance.transport.travel_time.len(),
                instance.sources.len()
            ),
        );
    }
    for (s, row) in instance.transport.travel_time.iter().enumerate() {
        if row.len() != instance.destinations.len() {
            push(
                "shape",
                format!(
                    "travel_time row {s} has {} entries, expected one per destination ({})",
                    row.len(),
                    instance.destinations.len()
                ),
            );
            continue;
        }
        for (d, &t) in row.iter().enumerate() {
            if t < 1.0 {
                push("transport", format!("travel time from source {s} to destination {d} is {t} < 1"));
            }
            let completion = instance.transport.depart_hour as f64
                + instance.transport.load_plus_swap_overhead
                + t;
            if completion > 23.0 {
                push(
                    "A5",
                    format!(
                        "swap from source {s} at destination {d} completes at hour {completion}, after 23:00"
                    ),
                );
            }
        }
    }
    for (s, source) in instance.sources.iter().enumerate() {
        if source.id != s {
            push("id", format!("source at position {s} has id {}", source.id));
        }
        if source.refill_capacity < 0.0 || source.refill_price < 0.0 {
            push("source", format!("source {s} has negative refill capacity or price"));
        }
        if source.slot_limit == 0 {
            push("A6", format!("source {s} has slot limit 0"));
        }
        if source.initial_storages.len() > source.slot_limit {
            push(
                "A6",
                format!(
                    "source {s} holds {} initial storages, above its slot limit {}",
                    source.initial_storages.len(),
                    source.slot_limit
                ),
            );
        }
        for (k, &stock) in source.initial_storages.iter().enumerate() {
            if !(0.0..=cap).contains(&stock) {
                push("A1", format!("initial stock {stock} of storage {k} at source {s} outside [0, {cap}]"));
            }
        }
    }
    for (d, dest) in instance.destinations.iter().enumerate() {
        if dest.id != d {
            push("id", format!("destination at position {d} has id {}", dest.id));
        }
        if !(0.0..=cap).contains(&dest.initial_stock) {
            push(
                "A8",
                format!("initial stock {} at destination {d} outside [0, {cap}]", dest.initial_stock),
            );
        }
        if dest.hourly_demand.len() != instance.horizon {
            push(
                "shape",
                format!(
                    "destination {d} has {} demand rows, expected horizon {}",
                    dest.hourly_demand.len(),
                    instance.horizon
                ),
            );
            continue;
        }
        for (row, day) in dest.hourly_demand.iter().zip(1..) {
            if row.len() != 24 {
                push("shape", format!("destination {d} day {day} has {} hours, expected 24", row.len()));
                continue;
            }
            if row.iter().any(|&q| q < 0.0) {
                push("demand", format!("destination {d} day {day} has negative hourly demand"));
            }
            let total: f64 = row.iter().sum();
            if total > cap + 1e-9 {
                push(
                    "A2",
                    format!("destination {d} day {day} demand {total} exceeds storage capacity {cap}"),
                );
            }
        }
    }
    out
}

/// Serializes the instance to pretty-printed JSON at `path`.
pub fn save_instance(instance: &Instance, path: &Path) -> Result<(), InstanceError> {
    let text = serde_json::to_string_pretty(instance)
        .map_err(|e| InstanceError::Schema(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Parses and validates an instance file; schema errors name the offending
/// field, semantic violations come back as `Invalid`.
pub fn load_instance(path: &Path) -> Result<Instance, InstanceError> {
    let text = std::fs::read_to_string(path)?;
    let instance: Instance =
        serde_json::from_str(&text).map_err(|e| InstanceError::Schema(e.to_string()))?;
    let violations = validate_instance(&instance);
    if !violations.is_empty() {
        return Err(InstanceError::Invalid(violations));
    }
    Ok(instance)
}
