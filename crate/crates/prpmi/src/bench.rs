//! Benchmark harness: suite generation, method runs, summary statistics.
//!
//! A suite spreads destination counts evenly over the four size bins
//! (10-18, 19-27, 28-35, 36-48 destinations), draws the source count so the
//! destinations-per-source ratio stays in range, and alternates the two
//! demand magnitudes and dissatisfaction profiles. Records are one row per
//! (instance, method) with deterministic effort-based runtimes, so reruns
//! with the same seeds produce byte-identical CSV output.

use crate::heuristics::{full_milp_method, greedy_heuristic, two_step_heuristic, GreedyConfig, MethodOutcome};
use crate::instance::{generate_instance, DissatisfactionProfile, GenerationSpec, Instance, InstanceError};
use crate::solver::{SolveLimits, EFFORT_UNITS_PER_SECOND};
use crate::teg::build_teg;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Ma,
    Rh,
    Gh,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Ma => write!(f, "MA"),
            Method::Rh => write!(f, "RH"),
            Method::Gh => write!(f, "GH"),
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Method, String> {
        match s.to_ascii_lowercase().as_str() {
            "ma" => Ok(Method::Ma),
            "rh" => Ok(Method::Rh),
            "gh" => Ok(Method::Gh),
            other => Err(format!("unknown method {other} (expected ma, rh or gh)")),
        }
    }
}

/// Destination-count size bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QBin {
    Q1,
    Q2,
    Q3,
    Q4,
}

impl QBin {
    pub const ALL: [QBin; 4] = [QBin::Q1, QBin::Q2, QBin::Q3, QBin::Q4];

    /// Inclusive destination-count range of the bin.
    pub fn range(self) -> (usize, usize) {
        match self {
            QBin::Q1 => (10, 18),
            QBin::Q2 => (19, 27),
            QBin::Q3 => (28, 35),
            QBin::Q4 => (36, 48),
        }
    }

    /// Bin of a destination count; counts outside the table clamp to the
    /// nearest bin.
    pub fn of(n_destinations: usize) -> QBin {
        match n_destinations {
            0..=18 => QBin::Q1,
            19..=27 => QBin::Q2,
            28..=35 => QBin::Q3,
            _ => QBin::Q4,
        }
    }
}

impl fmt::Display for QBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QBin::Q1 => write!(f, "Q1"),
            QBin::Q2 => write!(f, "Q2"),
            QBin::Q3 => write!(f, "Q3"),
            QBin::Q4 => write!(f, "Q4"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteEntry {
    pub id: String,
    pub instance: Instance,
}

/// Generates `count` suite instances (at least one per bin), evenly split
/// over the four size bins.
pub fn build_suite(seed: u64, count: usize) -> Result<Vec<SuiteEntry>, InstanceError> {
    use rand::Rng;
    use rand::SeedableRng;
    if count < 4 {
        return Err(InstanceError::Parameter(format!(
            "suite needs at least 4 instances (one per size bin), got {count}"
        )));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(count);
    let per_bin = count / 4;
    let remainder = count % 4;
    let mut index = 0;
    for (b, bin) in QBin::ALL.iter().enumerate() {
        let bin_count = per_bin + usize::from(b < remainder);
        for _ in 0..bin_count {
            let (lo, hi) = bin.range();
            let n_destinations = rng.gen_range(lo..=hi);
            let s_lo = (n_destinations as f64 / 8.5).ceil() as usize;
            let s_hi = ((n_destinations as f64 / 4.33).floor() as usize).min(7);
            let n_sources = rng.gen_range(s_lo..=s_hi.max(s_lo));
            let spec = GenerationSpec {
                n_sources,
                dest_ratio: n_destinations as f64 / n_sources as f64,
                storage_ratio: rng.gen_range(1.26..=1.5),
                demand_magnitude: if index % 2 == 0 { 85.0 } else { 130.0 },
                dissatisfaction_profile: if (index / 2) % 2 == 0 {
                    DissatisfactionProfile::Standard
                } else {
                    DissatisfactionProfile::Elevated
                },
                rng_seed: rng.gen(),
                horizon: 7,
            };
            let instance = generate_instance(&spec)?;
            debug_assert_eq!(instance.n_destinations(), n_destinations);
            entries.push(SuiteEntry { id: format!("inst_{index:03}"), instance });
            index += 1;
        }
    }
    Ok(entries)
}

#[derive(Debug, Clone)]
pub struct BenchRecord {
    pub instance_id: String,
    pub method: Method,
    pub cost: f64,
    pub bound: Option<f64>,
    pub gap: Option<f64>,
    /// Deterministic effort expressed in nominal seconds.
    pub runtime_s: f64,
    pub q_destination: QBin,
    /// Whether the best solution satisfies all demand.
    pub s_demand: bool,
    pub error: Option<String>,
}

fn run_one(entry: &SuiteEntry, method: Method, limits: &SolveLimits) -> BenchRecord {
    let instance = &entry.instance;
    let teg = build_teg(instance);
    let outcome: Result<MethodOutcome, _> = match method {
        Method::Ma => full_milp_method(instance, &teg, limits),
        Method::Rh => two_step_heuristic(instance, &teg, limits),
        Method::Gh => {
            greedy_heuristic(instance, &teg, &GreedyConfig::for_instance(instance), limits)
        }
    };
    let q_destination = QBin::of(instance.n_destinations());
    match outcome {
        Ok(outcome) => BenchRecord {
            instance_id: entry.id.clone(),
            method,
            cost: outcome.value,
            bound: outcome.bound,
            gap: outcome.gap,
            runtime_s: outcome.effort_used as f64 / EFFORT_UNITS_PER_SECOND as f64,
            q_destination,
            s_demand: outcome.solution.unmet_flag.iter().flatten().all(|&u| !u),
            error: None,
        },
        Err(e) => BenchRecord {
            instance_id: entry.id.clone(),
            method,
            cost: f64::NAN,
            bound: None,
            gap: None,
            runtime_s: 0.0,
            q_destination,
            s_demand: false,
            error: Some(e.to_string()),
        },
    }
}

/// Runs every (instance, method) job sequentially.
pub fn run_suite_sequential(
    entries: &[SuiteEntry],
    methods: &[Method],
    limits: &SolveLimits,
) -> Vec<BenchRecord> {
    let mut records: Vec<BenchRecord> = entries
        .iter()
        .flat_map(|entry| methods.iter().map(move |&m| (entry, m)))
        .map(|(entry, method)| run_one(entry, method, limits))
        .collect();
    sort_records(&mut records);
    records
}

/// Runs every (instance, method) job over a worker pool (`workers == 0`
/// means all cores); records come back merged in a deterministic order.
#[cfg(feature = "parallel")]
pub fn run_suite(
    entries: &[SuiteEntry],
    methods: &[Method],
    limits: &SolveLimits,
    workers: usize,
) -> Vec<BenchRecord> {
    use rayon::prelude::*;
    if workers == 1 {
        return run_suite_sequential(entries, methods, limits);
    }
    let jobs: Vec<(&SuiteEntry, Method)> = entries
        .iter()
        .flat_map(|entry| methods.iter().map(move |&m| (entry, m)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("worker pool");
    let mut records =
        pool.install(|| jobs.par_iter().map(|&(e, m)| run_one(e, m, limits)).collect::<Vec<_>>());
    sort_records(&mut records);
    records
}

#[cfg(not(feature = "parallel"))]
pub fn run_suite(
    entries: &[SuiteEntry],
    methods: &[Method],
    limits: &SolveLimits,
    _workers: usize,
) -> Vec<BenchRecord> {
    run_suite_sequential(entries, methods, limits)
}

fn sort_records(records: &mut [BenchRecord]) {
    records.sort_by(|a, b| a.instance_id.cmp(&b.instance_id).then(a.method.cmp(&b.method)));
}

/// Five-number boxplot summary with Tukey hinges and 1.5 IQR whiskers
/// clipped to the data.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxStats {
    pub n: usize,
    pub median: f64,
    pub mean: f64,
    pub q1: f64,
    pub q3: f64,
    pub lo_whisker: f64,
    pub hi_whisker: f64,
    pub outliers: Vec<f64>,
}

pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let median = mid(&sorted);
    let (lower, upper) = if n % 2 == 1 {
        (&sorted[..=n / 2], &sorted[n / 2..])
    } else {
        (&sorted[..n / 2], &sorted[n / 2..])
    };
    let q1 = mid(lower);
    let q3 = mid(upper);
    let iqr = q3 - q1;
    let lo_fence = q1 - 1.5 * iqr;
    let hi_fence = q3 + 1.5 * iqr;
    let lo_whisker = sorted.iter().copied().find(|&x| x >= lo_fence).unwrap_or(q1);
    let hi_whisker = sorted.iter().rev().copied().find(|&x| x <= hi_fence).unwrap_or(q3);
    let outliers = sorted.iter().copied().filter(|&x| x < lo_fence || x > hi_fence).collect();
    Some(BoxStats {
        n,
        median,
        mean: sorted.iter().sum::<f64>() / n as f64,
        q1,
        q3,
        lo_whisker,
        hi_whisker,
        outliers,
    })
}

fn mid(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Record grouping used by the summaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    All,
    Bin(QBin),
    DemandSatisfied(bool),
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Group::All => write!(f, "all"),
            Group::Bin(q) => write!(f, "{q}"),
            Group::DemandSatisfied(true) => write!(f, "demand_yes"),
            Group::DemandSatisfied(false) => write!(f, "demand_no"),
        }
    }
}

pub fn groups() -> Vec<Group> {
    let mut list = vec![Group::All];
    list.extend(QBin::ALL.iter().map(|&q| Group::Bin(q)));
    list.push(Group::DemandSatisfied(true));
    list.push(Group::DemandSatisfied(false));
    list
}

fn in_group(record: &BenchRecord, group: Group) -> bool {
    match group {
        Group::All => true,
        Group::Bin(q) => record.q_destination == q,
        Group::DemandSatisfied(v) => record.s_demand == v,
    }
}

#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub metric: &'static str,
    pub method: Method,
    pub group: Group,
    pub stats: BoxStats,
}

#[derive(Debug, Clone)]
pub struct DeltaRow {
    pub group: Group,
    pub base: Method,
    pub other: Method,
    /// Positive when `other` beats `base`, in percent of `base`.
    pub median_improvement_pct: f64,
    pub mean_improvement_pct: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    pub deltas: Vec<DeltaRow>,
}

/// Per-method and per-group cost and gap statistics plus cross-method
/// improvement percentages.
pub fn summarize(records: &[BenchRecord]) -> Summary {
    let mut summary = Summary::default();
    let methods = [Method::Ma, Method::Rh, Method::Gh];
    for group in groups() {
        for &method in &methods {
            let costs: Vec<f64> = records
                .iter()
                .filter(|r| r.method == method && r.error.is_none() && in_group(r, group))
                .map(|r| r.cost)
                .collect();
            if let Some(stats) = box_stats(&costs) {
                summary.rows.push(SummaryRow { metric: "cost", method, group, stats });
            }
            let gaps: Vec<f64> = records
                .iter()
                .filter(|r| r.method == method && r.error.is_none() && in_group(r, group))
                .filter_map(|r| r.gap)
                .collect();
            if let Some(stats) = box_stats(&gaps) {
                summary.rows.push(SummaryRow { metric: "gap", method, group, stats });
            }
        }
        for &(base, other) in
            &[(Method::Gh, Method::Ma), (Method::Gh, Method::Rh), (Method::Ma, Method::Rh)]
        {
            let stats_of = |m: Method| {
                summary
                    .rows
                    .iter()
                    .find(|r| r.metric == "cost" && r.method == m && r.group == group)
                    .map(|r| r.stats.clone())
            };
            if let (Some(b), Some(o)) = (stats_of(base), stats_of(other)) {
                if b.median.abs() > 1e-12 && b.mean.abs() > 1e-12 {
                    summary.deltas.push(DeltaRow {
                        group,
                        base,
                        other,
                        median_improvement_pct: (b.median - o.median) / b.median * 100.0,
                        mean_improvement_pct: (b.mean - o.mean) / b.mean * 100.0,
                    });
                }
            }
        }
    }
    summary
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_records_csv(records: &[BenchRecord], out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "instance_id,method,cost,bound,gap,runtime_s,q_destination,s_demand,status")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{:.3},{},{},{}",
            r.instance_id,
            r.method,
            r.cost,
            opt(r.bound),
            opt(r.gap),
            r.runtime_s,
            r.q_destination,
            if r.s_demand { "yes" } else { "no" },
            r.error.as_deref().map(|_| "error").unwrap_or("ok"),
        )?;
    }
    Ok(())
}

pub fn write_summary_csv(summary: &Summary, out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "metric,group,method,n,median,mean,q1,q3")?;
    for row in &summary.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            row.metric,
            row.group,
            row.method,
            row.stats.n,
            row.stats.median,
            row.stats.mean,
            row.stats.q1,
            row.stats.q3
        )?;
    }
    for d in &summary.deltas {
        writeln!(
            out,
            "improvement_pct,{},{}->{},,{},{},,",
            d.group, d.base, d.other, d.median_improvement_pct, d.mean_improvement_pct
        )?;
    }
    Ok(())
}

pub fn write_boxplot_csv(summary: &Summary, out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "method,group,median,mean,q1,q3,lo_whisker,hi_whisker,outliers")?;
    for row in summary.rows.iter().filter(|r| r.metric == "cost") {
        let outliers =
            row.stats.outliers.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            row.method,
            row.group,
            row.stats.median,
            row.stats.mean,
            row.stats.q1,
            row.stats.q3,
            row.stats.lo_whisker,
            row.stats.hi_whisker,
            outliers
        )?;
    }
    Ok(())
}
