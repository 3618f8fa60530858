//! Brute-force verification oracle for hand-scale instances.
//!
//! Ground truth is produced by a route independent of the model assembly and
//! the reference branch-and-bound: a day-by-day depth-first enumeration of
//! every routing-feasible storage flow (with an admissible dissatisfaction
//! lower bound for pruning), times an exhaustive enumeration of the storage
//! pairings at each source node, times an exact solve of the remaining
//! refill/service decisions. That remainder is not a pure LP — the forced
//! min-service equalities and the fixed-dissatisfaction indicator keep binary
//! witnesses — so the oracle micro-branches over those few binaries with
//! dense-simplex relaxations. Only the raw simplex is shared with the
//! reference solver.

use crate::instance::{Instance, Violation};
use crate::model::{demand_split, evaluate_cost, CostBreakdown, FlowSolution, UNMET_TOL};
use crate::simplex::{solve_lp, Effort, LpRow, LpStatus};
use crate::teg::{ArcId, TimeExpandedGraph, TimeIndex};
use crate::model::Sense;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("instance outside the oracle envelope: {0}")]
    TooLarge(String),
    #[error("invalid instance: {0:?}")]
    InvalidInstance(Vec<Violation>),
    #[error("numerical failure in the oracle residual: {0}")]
    Numerical(String),
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub value: f64,
    pub solution: FlowSolution,
}

/// Exhaustive optimum including the nondecreasing-stock pairing.
pub fn brute_force_oracle(
    instance: &Instance,
    teg: &TimeExpandedGraph,
) -> Result<OracleResult, OracleError> {
    oracle(instance, teg, true)
}

/// Exhaustive optimum of the relaxation without the pairing constraint.
pub fn brute_force_oracle_relaxed(
    instance: &Instance,
    teg: &TimeExpandedGraph,
) -> Result<OracleResult, OracleError> {
    oracle(instance, teg, false)
}

fn oracle(
    instance: &Instance,
    teg: &TimeExpandedGraph,
    with_assignment: bool,
) -> Result<OracleResult, OracleError> {
    let violations = instance.validate();
    if !violations.is_empty() {
        return Err(OracleError::InvalidInstance(violations));
    }
    if instance.n_sources() > 2
        || instance.n_destinations() > 2
        || instance.horizon > 3
        || instance.storage_count() > 4
    {
        return Err(OracleError::TooLarge(format!(
            "|S|={} |D|={} J={} |B|={}",
            instance.n_sources(),
            instance.n_destinations(),
            instance.horizon,
            instance.storage_count()
        )));
    }

    let mut search = Search {
        instance,
        teg,
        with_assignment,
        y: base_routing(instance, teg),
        best_value: f64::INFINITY,
        best: None,
        error: None,
    };

    // Prime the incumbent with a few constructive routings.
    let cap = instance.storage_capacity;
    for threshold in [0.0, cap / 3.0, cap] {
        let y = search.greedy_routing(threshold);
        search.try_routing(&y, transport_cost(instance, teg, &y));
    }

    let avail: Vec<usize> = instance.sources.iter().map(|s| s.initial_storages.len()).collect();
    let stocks: Vec<f64> = instance.destinations.iter().map(|d| d.initial_stock).collect();
    search.explore_day(1, &avail, &stocks, 0.0, 0.0);
    if let Some(message) = search.error {
        return Err(OracleError::Numerical(message));
    }

    let (value, y, sigma, residual, x) =
        search.best.expect("parked routing is always feasible");
    let solution = assemble_solution(instance, teg, &y, sigma.as_deref(), &residual, &x);
    debug_assert!(
        (solution.cost.total() - value).abs() < 1e-5,
        "oracle value {} vs recomputed {}",
        value,
        solution.cost.total()
    );
    Ok(OracleResult { value, solution })
}

/// Transport cost of a routing: travelled delivery and return arcs.
fn transport_cost(instance: &Instance, teg: &TimeExpandedGraph, y: &[bool]) -> f64 {
    let mut cost = 0.0;
    for j in 1..=teg.horizon {
        for d in 0..teg.n_destinations {
            for s in 0..teg.n_sources {
                if y[teg.arc_source_to_dest(s, d, j)] {
                    cost += instance.cost.transport_per_unit * instance.transport.travel_time[s][d];
                }
                if y[teg.arc_dest_to_source(d, s, j)] {
                    cost += instance.cost.transport_per_unit * instance.transport.travel_time[s][d];
                }
            }
        }
    }
    cost
}

/// Initial layer plus the always-active destination self-arcs.
fn base_routing(instance: &Instance, teg: &TimeExpandedGraph) -> Vec<bool> {
    let mut y = vec![false; teg.arc_count()];
    for d in 0..teg.n_destinations {
        for i in teg.day_order() {
            y[teg.arc_dest_self(d, i)] = true;
        }
    }
    for (s, source) in instance.sources.iter().enumerate() {
        for k in 0..source.initial_storages.len() {
            y[teg.arc_source_self(s, k, TimeIndex::Initial)] = true;
        }
    }
    y
}

type Best = (f64, Vec<bool>, Option<Vec<SigmaNode>>, Residual, Vec<f64>);

/// One source-day pairing: (inflow slot, outflow slot) index pairs.
#[derive(Debug, Clone)]
struct SigmaNode {
    source: usize,
    day: usize,
    pairs: Vec<(usize, usize)>,
}

struct Search<'a> {
    instance: &'a Instance,
    teg: &'a TimeExpandedGraph,
    with_assignment: bool,
    y: Vec<bool>,
    best_value: f64,
    best: Option<Best>,
    error: Option<String>,
}

impl<'a> Search<'a> {
    /// Internal threshold greedy used only to seed the incumbent.
    fn greedy_routing(&self, threshold: f64) -> Vec<bool> {
        let instance = self.instance;
        let teg = self.teg;
        let mut y = base_routing(instance, teg);
        let mut avail: Vec<usize> =
            instance.sources.iter().map(|s| s.initial_storages.len()).collect();
        let mut stocks: Vec<f64> =
            instance.destinations.iter().map(|d| d.initial_stock).collect();
        for j in 1..=teg.horizon {
            let mut critical: Vec<usize> =
                (0..teg.n_destinations).filter(|&d| stocks[d] <= threshold).collect();
            critical.sort_by(|&a, &b| stocks[a].partial_cmp(&stocks[b]).unwrap().then(a.cmp(&b)));
            let mut deliveries: Vec<Option<usize>> = vec![None; teg.n_destinations];
            let mut used = vec![0usize; teg.n_sources];
            for &d in &critical {
                let source = (0..teg.n_sources)
                    .filter(|&s| avail[s] - used[s] > 0)
                    .min_by(|&a, &b| {
                        instance.g(a, d).partial_cmp(&instance.g(b, d)).unwrap().then(a.cmp(&b))
                    });
                let Some(s) = source else { break };
                used[s] += 1;
                deliveries[d] = Some(s);
                y[teg.arc_source_to_dest(s, d, j)] = true;
                y[teg.arc_dest_to_source(d, s, j)] = true;
            }
            for s in 0..teg.n_sources {
                let stayers = avail[s] - used[s];
                for k in 0..stayers {
                    y[teg.arc_source_self(s, k, TimeIndex::FirstPart(j))] = true;
                    y[teg.arc_source_self(s, k, TimeIndex::SecondPart(j))] = true;
                }
                // A returned storage is available again the next day.
                avail[s] = stayers
                    + deliveries.iter().flatten().filter(|&&src| src == s).count();
            }
            for d in 0..teg.n_destinations {
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

    fn explore_day(
        &mut self,
        j: usize,
        avail: &[usize],
        stocks: &[f64],
        transport: f64,
        dissatisfaction_lb: f64,
    ) {
        if transport + dissatisfaction_lb >= self.best_value - 1e-9 {
            return;
        }
        if j > self.teg.horizon {
            let y = self.y.clone();
            self.try_routing(&y, transport);
            return;
        }
        let mut deliveries = vec![None; self.teg.n_destinations];
        let mut remaining = avail.to_vec();
        self.enum_deliveries(0, j, avail, &mut remaining, &mut deliveries, stocks, transport, dissatisfaction_lb);
    }

    #[allow(clippy::too_many_arguments)]
    fn enum_deliveries(
        &mut self,
        d: usize,
        j: usize,
        avail: &[usize],
        remaining: &mut Vec<usize>,
        deliveries: &mut Vec<Option<usize>>,
        stocks: &[f64],
        transport: f64,
        dissatisfaction_lb: f64,
    ) {
        if d == self.teg.n_destinations {
            let swapped: Vec<usize> =
                (0..self.teg.n_destinations).filter(|&d| deliveries[d].is_some()).collect();
            let mut returns = vec![0usize; swapped.len()];
            let mut return_count = vec![0usize; self.teg.n_sources];
            self.enum_returns(
                0,
                j,
                avail,
                deliveries,
                &swapped,
                &mut returns,
                &mut return_count,
                stocks,
                transport,
                dissatisfaction_lb,
            );
            return;
        }
        deliveries[d] = None;
        self.enum_deliveries(d + 1, j, avail, remaining, deliveries, stocks, transport, dissatisfaction_lb);
        for s in 0..self.teg.n_sources {
            if remaining[s] == 0 {
                continue;
            }
            remaining[s] -= 1;
            deliveries[d] = Some(s);
            self.enum_deliveries(d + 1, j, avail, remaining, deliveries, stocks, transport, dissatisfaction_lb);
            deliveries[d] = None;
            remaining[s] += 1;
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn enum_returns(
        &mut self,
        idx: usize,
        j: usize,
        avail: &[usize],
        deliveries: &[Option<usize>],
        swapped: &[usize],
        returns: &mut Vec<usize>,
        return_count: &mut Vec<usize>,
        stocks: &[f64],
        transport: f64,
        dissatisfaction_lb: f64,
    ) {
        if idx == swapped.len() {
            self.apply_day(j, avail, deliveries, swapped, returns, stocks, transport, dissatisfaction_lb);
            return;
        }
        for s in 0..self.teg.n_sources {
            if j < self.teg.horizon {
                let sent: usize = deliveries.iter().flatten().filter(|&&src| src == s).count();
                let stayers = avail[s] - sent;
                if stayers + return_count[s] + 1 > self.teg.slot_limits[s] {
                    continue;
                }
            }
            returns[idx] = s;
            return_count[s] += 1;
            self.enum_returns(
                idx + 1,
                j,
                avail,
                deliveries,
                swapped,
                returns,
                return_count,
                stocks,
                transport,
                dissatisfaction_lb,
            );
            return_count[s] -= 1;
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn apply_day(
        &mut self,
        j: usize,
        avail: &[usize],
        deliveries: &[Option<usize>],
        swapped: &[usize],
        returns: &[usize],
        stocks: &[f64],
        transport: f64,
        dissatisfaction_lb: f64,
    ) {
        let instance = self.instance;
        let teg = self.teg;
        let mut set_arcs: Vec<ArcId> = Vec::new();
        let set = |y: &mut Vec<bool>, arc: ArcId, list: &mut Vec<ArcId>| {
            debug_assert!(!y[arc]);
            y[arc] = true;
            list.push(arc);
        };

        let mut day_transport = 0.0;
        for (&d, &r) in swapped.iter().zip(returns) {
            let s = deliveries[d].unwrap();
            set(&mut self.y, teg.arc_source_to_dest(s, d, j), &mut set_arcs);
            set(&mut self.y, teg.arc_dest_to_source(d, r, j), &mut set_arcs);
            day_transport += instance.cost.transport_per_unit
                * (instance.transport.travel_time[s][d] + instance.transport.travel_time[r][d]);
        }
        let mut next_avail = vec![0usize; teg.n_sources];
        for s in 0..teg.n_sources {
            let sent: usize = deliveries.iter().flatten().filter(|&&src| src == s).count();
            let stayers = avail[s] - sent;
            for k in 0..stayers {
                set(&mut self.y, teg.arc_source_self(s, k, TimeIndex::FirstPart(j)), &mut set_arcs);
                set(&mut self.y, teg.arc_source_self(s, k, TimeIndex::SecondPart(j)), &mut set_arcs);
            }
            next_avail[s] = stayers + returns.iter().filter(|&&r| r == s).count();
        }

        // Optimistic service: deliveries arrive full, refills are free. The
        // resulting dissatisfaction lower-bounds every completion of this
        // prefix, which is what makes the pruning admissible.
        let mut next_stocks = stocks.to_vec();
        let mut day_dissatisfaction = 0.0;
        for d in 0..teg.n_destinations {
            let (before, after) = demand_split(instance, d, j, deliveries[d]);
            let mut stock = next_stocks[d];
            let served_before = stock.min(before);
            stock -= served_before;
            if deliveries[d].is_some() {
                stock = instance.storage_capacity;
            }
            let served_after = stock.min(after);
            stock -= served_after;
            next_stocks[d] = stock;
            let unmet = before + after - served_before - served_after;
            day_dissatisfaction += instance.cost.dissatisfaction_per_kg * unmet;
            if unmet > UNMET_TOL {
                day_dissatisfaction += instance.cost.dissatisfaction_fixed;
            }
        }

        self.explore_day(
            j + 1,
            &next_avail,
            &next_stocks,
            transport + day_transport,
            dissatisfaction_lb + day_dissatisfaction,
        );
        for arc in set_arcs {
            self.y[arc] = false;
        }
    }

    /// Evaluates a complete routing exactly: enumerate pairings, solve each
    /// residual to optimality, keep the best.
    fn try_routing(&mut self, y: &[bool], transport: f64) {
        if transport >= self.best_value - 1e-9 {
            return;
        }
        let residual = Residual::build(self.instance, self.teg, y);
        if !self.with_assignment {
            let cutoff = self.best_value - transport - 1e-9;
            match residual_optimum(&residual, &[], cutoff) {
                Err(message) => self.error = Some(message),
                Ok(Some((value, x))) => {
                    if transport + value < self.best_value {
                        self.best_value = transport + value;
                        self.best = Some((self.best_value, y.to_vec(), None, residual, x));
                    }
                }
                Ok(None) => {}
            }
            return;
        }
        let mut nodes: Vec<(usize, usize, Vec<usize>, Vec<usize>)> = Vec::new();
        for s in 0..self.teg.n_sources {
            for j in 1..=self.teg.horizon {
                let ins = residual.active_in[s][j - 1].clone();
                let outs = residual.active_out[s][j - 1].clone();
                debug_assert_eq!(ins.len(), outs.len());
                if !ins.is_empty() {
                    nodes.push((s, j, ins, outs));
                }
            }
        }
        let mut sigma: Vec<SigmaNode> = Vec::new();
        self.enum_sigma(&residual, y, transport, &nodes, 0, &mut sigma, &mut Vec::new());
    }

    #[allow(clippy::too_many_arguments)]
    fn enum_sigma(
        &mut self,
        residual: &Residual,
        y: &[bool],
        transport: f64,
        nodes: &[(usize, usize, Vec<usize>, Vec<usize>)],
        idx: usize,
        sigma: &mut Vec<SigmaNode>,
        pairing_rows: &mut Vec<LpRow>,
    ) {
        if idx == nodes.len() {
            let cutoff = self.best_value - transport - 1e-9;
            match residual_optimum(residual, pairing_rows, cutoff) {
                Err(message) => self.error = Some(message),
                Ok(Some((value, x))) => {
                    if transport + value < self.best_value {
                        self.best_value = transport + value;
                        self.best = Some((
                            self.best_value,
                            y.to_vec(),
                            Some(sigma.clone()),
                            residual.clone(),
                            x,
                        ));
                    }
                }
                Ok(None) => {}
            }
            return;
        }
        let (s, j, ins, outs) = &nodes[idx];
        let mut perm: Vec<usize> = (0..outs.len()).collect();
        permutations(&mut perm, 0, &mut |perm| {
            let pairs: Vec<(usize, usize)> =
                ins.iter().zip(perm.iter().map(|&p| outs[p])).map(|(&a, b)| (a, b)).collect();
            let added = pairs
                .iter()
                .filter_map(|&(l_in, l_out)| residual.pairing_row(s, j, l_in, l_out))
                .collect::<Vec<_>>();
            let base_len = pairing_rows.len();
            pairing_rows.extend(added);
            sigma.push(SigmaNode { source: *s, day: *j, pairs });
            self.enum_sigma(residual, y, transport, nodes, idx + 1, sigma, pairing_rows);
            sigma.pop();
            pairing_rows.truncate(base_len);
        });
    }
}

/// Lexicographic permutation enumeration, deterministic.
fn permutations(items: &mut Vec<usize>, at: usize, walk: &mut impl FnMut(&Vec<usize>)) {
    if at == items.len() {
        walk(items);
        return;
    }
    let mut order: Vec<usize> = (at..items.len()).collect();
    order.sort_by_key(|&i| items[i]);
    for i in at..items.len() {
        items.swap(at, i);
        permutations(items, at + 1, walk);
        items.swap(at, i);
    }
}

/// The residual decisions of a fixed routing: hydrogen on active arcs,
/// refills, forced service, dissatisfaction flags.
#[derive(Debug, Clone)]
struct Residual {
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<LpRow>,
    objective: Vec<f64>,
    objective_constant: f64,
    integers: Vec<usize>,
    f_var: Vec<Option<usize>>,
    f_const: Vec<f64>,
    refill: Vec<Vec<usize>>,
    z_first: Vec<Vec<usize>>,
    z_second: Vec<Vec<usize>>,
    /// Active inflow/outflow slot indices per (source, day).
    active_in: Vec<Vec<Vec<usize>>>,
    active_out: Vec<Vec<Vec<usize>>>,
    in_arcs: Vec<Vec<Vec<ArcId>>>,
    out_arcs: Vec<Vec<Vec<ArcId>>>,
}

impl Residual {
    fn build(instance: &Instance, teg: &TimeExpandedGraph, y: &[bool]) -> Residual {
        let cap = instance.storage_capacity;
        let n_s = teg.n_sources;
        let n_d = teg.n_destinations;
        let horizon = teg.horizon;

        let mut lower = Vec::new();
        let mut upper = Vec::new();
        let mut objective = Vec::new();
        let add_var = |lo: f64, hi: f64, cost: f64,
                           lower: &mut Vec<f64>, upper: &mut Vec<f64>, objective: &mut Vec<f64>| {
            lower.push(lo);
            upper.push(hi);
            objective.push(cost);
            lower.len() - 1
        };

        // Hydrogen on active arcs past the initial layer; initial arcs carry
        // their given stocks as constants.
        let mut f_var = vec![None; teg.arc_count()];
        let mut f_const = vec![0.0; teg.arc_count()];
        for d in 0..n_d {
            f_const[teg.arc_dest_self(d, TimeIndex::Initial)] = instance.destinations[d].initial_stock;
        }
        for (s, source) in instance.sources.iter().enumerate() {
            for (k, &stock) in source.initial_storages.iter().enumerate() {
                f_const[teg.arc_source_self(s, k, TimeIndex::Initial)] = stock;
            }
        }
        for a in 0..teg.arc_count() {
            if y[a] && teg.day(a) != TimeIndex::Initial {
                f_var[a] = Some(add_var(0.0, cap, 0.0, &mut lower, &mut upper, &mut objective));
            }
        }

        let c_v = instance.cost.dissatisfaction_per_kg;
        let c_f = instance.cost.dissatisfaction_fixed;
        let mut objective_constant = 0.0;
        let refill: Vec<Vec<usize>> = (0..n_s)
            .map(|s| {
                (1..=horizon)
                    .map(|_| {
                        add_var(
                            0.0,
                            instance.sources[s].refill_capacity,
                            instance.sources[s].refill_price,
                            &mut lower,
                            &mut upper,
                            &mut objective,
                        )
                    })
                    .collect()
            })
            .collect();
        let grid =
            |f: &mut dyn FnMut() -> usize| -> Vec<Vec<usize>> {
                (0..n_d).map(|_| (1..=horizon).map(|_| f()).collect()).collect()
            };
        let z_first = grid(&mut || add_var(0.0, cap, -c_v, &mut lower, &mut upper, &mut objective));
        let z_second = grid(&mut || add_var(0.0, cap, -c_v, &mut lower, &mut upper, &mut objective));
        let unmet = grid(&mut || add_var(0.0, 1.0, c_f, &mut lower, &mut upper, &mut objective));
        let b_first = grid(&mut || add_var(0.0, 1.0, 0.0, &mut lower, &mut upper, &mut objective));
        let b_second = grid(&mut || add_var(0.0, 1.0, 0.0, &mut lower, &mut upper, &mut objective));
        let mut integers = Vec::new();
        for d in 0..n_d {
            for j in 0..horizon {
                integers.push(unmet[d][j]);
                integers.push(b_first[d][j]);
                integers.push(b_second[d][j]);
            }
        }

        let term = |a: ArcId| -> (Option<usize>, f64) { (f_var[a], f_const[a]) };
        let mut rows: Vec<LpRow> = Vec::new();
        let add_row = |terms: Vec<(Option<usize>, f64)>, sense: Sense, rhs: f64, rows: &mut Vec<LpRow>| {
            let mut lhs = Vec::new();
            let mut rhs = rhs;
            for (var, coef) in terms {
                match var {
                    Some(v) => {
                        if coef != 0.0 {
                            lhs.push((v, coef));
                        }
                    }
                    None => rhs -= coef,
                }
            }
            rows.push(LpRow { terms: lhs, sense, rhs });
        };
        // Constant slots enter rows as (None, value * coef); variable slots as
        // (Some(var), coef) with the arc's constant part zero by construction.
        let arc_term = |a: ArcId, coef: f64| -> (Option<usize>, f64) {
            match term(a) {
                (Some(v), _) => (Some(v), coef),
                (None, c) => (None, c * coef),
            }
        };
        let var_term = |v: usize, coef: f64| -> (Option<usize>, f64) { (Some(v), coef) };

        for d in 0..n_d {
            for j in 1..=horizon {
                let prev = if j == 1 { TimeIndex::Initial } else { TimeIndex::SecondPart(j - 1) };
                let a_in = teg.arc_dest_self(d, prev);
                let a_mid = teg.arc_dest_self(d, TimeIndex::FirstPart(j));
                let a_out = teg.arc_dest_self(d, TimeIndex::SecondPart(j));
                let swap = (0..n_s).find(|&s| y[teg.arc_source_to_dest(s, d, j)]);
                let (before, after) = demand_split(instance, d, j, swap);
                objective_constant += c_v * (before + after);

                let zl = z_first[d][j - 1];
                let zr = z_second[d][j - 1];
                let b1 = b_first[d][j - 1];
                let b2 = b_second[d][j - 1];

                // Overnight stock minus forced service.
                add_row(
                    vec![arc_term(a_mid, 1.0), arc_term(a_in, -1.0), var_term(zl, 1.0)],
                    Sense::Eq,
                    0.0,
                    &mut rows,
                );
                add_row(vec![var_term(zl, 1.0), arc_term(a_in, -1.0)], Sense::Le, 0.0, &mut rows);
                add_row(vec![var_term(zl, 1.0)], Sense::Le, before, &mut rows);
                add_row(
                    vec![var_term(zl, 1.0), arc_term(a_in, -1.0), var_term(b1, cap)],
                    Sense::Ge,
                    0.0,
                    &mut rows,
                );
                add_row(
                    vec![var_term(zl, 1.0), var_term(b1, -cap)],
                    Sense::Ge,
                    before - cap,
                    &mut rows,
                );

                // What is available after the swap, and where the old stock goes.
                let avail: Vec<(Option<usize>, f64)> = match swap {
                    Some(s) => {
                        let ret = (0..n_s)
                            .find(|&r| y[teg.arc_dest_to_source(d, r, j)])
                            .expect("swap implies a return");
                        add_row(
                            vec![
                                arc_term(a_mid, 1.0),
                                arc_term(teg.arc_dest_to_source(d, ret, j), -1.0),
                            ],
                            Sense::Eq,
                            0.0,
                            &mut rows,
                        );
                        vec![arc_term(teg.arc_source_to_dest(s, d, j), 1.0)]
                    }
                    None => vec![arc_term(a_mid, 1.0)],
                };
                let mut conservation = vec![arc_term(a_out, 1.0), var_term(zr, 1.0)];
                conservation.extend(avail.iter().map(|&(v, c)| (v, -c)));
                add_row(conservation, Sense::Eq, 0.0, &mut rows);

                let mut le1 = vec![var_term(zr, 1.0)];
                le1.extend(avail.iter().map(|&(v, c)| (v, -c)));
                add_row(le1, Sense::Le, 0.0, &mut rows);
                add_row(vec![var_term(zr, 1.0)], Sense::Le, after, &mut rows);
                let mut ge1 = vec![var_term(zr, 1.0), var_term(b2, cap)];
                ge1.extend(avail.iter().map(|&(v, c)| (v, -c)));
                add_row(ge1, Sense::Ge, 0.0, &mut rows);
                add_row(vec![var_term(zr, 1.0), var_term(b2, -cap)], Sense::Ge, after - cap, &mut rows);

                add_row(
                    vec![var_term(zl, 1.0), var_term(zr, 1.0), var_term(unmet[d][j - 1], cap)],
                    Sense::Ge,
                    before + after,
                    &mut rows,
                );
            }
        }

        // Source hydrogen conservation with refills, slot carry-over, and the
        // inflow/outflow slot bookkeeping used by the pairing rows.
        let mut active_in = vec![vec![Vec::new(); horizon]; n_s];
        let mut active_out = vec![vec![Vec::new(); horizon]; n_s];
        let mut in_arcs = vec![vec![Vec::new(); horizon]; n_s];
        let mut out_arcs = vec![vec![Vec::new(); horizon]; n_s];
        for s in 0..n_s {
            let slots = teg.slot_limits[s];
            for j in 1..=horizon {
                let prev = if j == 1 { TimeIndex::Initial } else { TimeIndex::SecondPart(j - 1) };
                let ins: Vec<ArcId> = (0..n_d)
                    .map(|d| teg.arc_dest_to_source(d, s, j - 1))
                    .chain((0..slots).map(|k| teg.arc_source_self(s, k, prev)))
                    .collect();
                let outs: Vec<ArcId> = (0..n_d)
                    .map(|d| teg.arc_source_to_dest(s, d, j))
                    .chain((0..slots).map(|k| teg.arc_source_self(s, k, TimeIndex::FirstPart(j))))
                    .collect();
                let mut conservation: Vec<(Option<usize>, f64)> =
                    ins.iter().map(|&a| arc_term(a, 1.0)).collect();
                conservation.push(var_term(refill[s][j - 1], 1.0));
                conservation.extend(outs.iter().map(|&a| arc_term(a, -1.0)));
                add_row(conservation, Sense::Eq, 0.0, &mut rows);

                for k in 0..slots {
                    let first = teg.arc_source_self(s, k, TimeIndex::FirstPart(j));
                    let second = teg.arc_source_self(s, k, TimeIndex::SecondPart(j));
                    if y[first] {
                        add_row(
                            vec![arc_term(first, 1.0), arc_term(second, -1.0)],
                            Sense::Eq,
                            0.0,
                            &mut rows,
                        );
                    }
                }

                active_in[s][j - 1] = (0..ins.len()).filter(|&l| y[ins[l]]).collect();
                active_out[s][j - 1] = (0..outs.len()).filter(|&l| y[outs[l]]).collect();
                in_arcs[s][j - 1] = ins;
                out_arcs[s][j - 1] = outs;
            }
        }

        Residual {
            lower,
            upper,
            rows,
            objective,
            objective_constant,
            integers,
            f_var,
            f_const,
            refill,
            z_first,
            z_second,
            active_in,
            active_out,
            in_arcs,
            out_arcs,
        }
    }

    /// Nondecreasing-stock row `f_in <= f_out` for one pairing, if it binds
    /// anything (both sides constant means it only needs checking).
    fn pairing_row(&self, s: &usize, j: &usize, l_in: usize, l_out: usize) -> Option<LpRow> {
        let a_in = self.in_arcs[*s][*j - 1][l_in];
        let a_out = self.out_arcs[*s][*j - 1][l_out];
        let mut terms = Vec::new();
        let mut rhs = 0.0;
        match self.f_var[a_in] {
            Some(v) => terms.push((v, 1.0)),
            None => rhs -= self.f_const[a_in],
        }
        match self.f_var[a_out] {
            Some(v) => terms.push((v, -1.0)),
            None => rhs += self.f_const[a_out],
        }
        if terms.is_empty() {
            debug_assert!(self.f_const[a_in] <= self.f_const[a_out] + 1e-9);
            return None;
        }
        Some(LpRow { terms, sense: Sense::Le, rhs })
    }
}

/// Exact optimum of a residual under extra pairing rows, below `cutoff`;
/// micro branch-and-bound over the few remaining binaries.
fn residual_optimum(
    residual: &Residual,
    pairing_rows: &[LpRow],
    cutoff: f64,
) -> Result<Option<(f64, Vec<f64>)>, String> {
    let mut rows = residual.rows.clone();
    rows.extend_from_slice(pairing_rows);
    let mut lower = residual.lower.clone();
    let mut upper = residual.upper.clone();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut cut = cutoff;
    residual_rec(residual, &rows, &mut lower, &mut upper, &mut cut, &mut best)?;
    Ok(best)
}

fn residual_rec(
    residual: &Residual,
    rows: &[LpRow],
    lower: &mut Vec<f64>,
    upper: &mut Vec<f64>,
    cut: &mut f64,
    best: &mut Option<(f64, Vec<f64>)>,
) -> Result<(), String> {
    let mut effort = Effort::unlimited();
    let lp = solve_lp(&residual.objective, rows, lower, upper, &mut effort);
    match lp.status {
        LpStatus::Infeasible => return Ok(()),
        LpStatus::Optimal => {}
        other => return Err(format!("residual relaxation returned {other:?}")),
    }
    let value = lp.value + residual.objective_constant;
    if value >= *cut - 1e-9 {
        return Ok(());
    }
    let fractional = residual
        .integers
        .iter()
        .copied()
        .filter(|&v| (lp.x[v] - lp.x[v].round()).abs() > 1e-6)
        .max_by(|&a, &b| {
            let fa = (lp.x[a] - lp.x[a].round()).abs();
            let fb = (lp.x[b] - lp.x[b].round()).abs();
            fa.partial_cmp(&fb).unwrap().then(b.cmp(&a))
        });
    match fractional {
        None => {
            *cut = value;
            *best = Some((value, lp.x));
            Ok(())
        }
        Some(v) => {
            let (lo, hi) = (lower[v], upper[v]);
            let first_up = lp.x[v] >= 0.5;
            for up in [first_up, !first_up] {
                if up {
                    lower[v] = 1.0;
                    upper[v] = hi;
                } else {
                    lower[v] = lo;
                    upper[v] = 0.0;
                }
                residual_rec(residual, rows, lower, upper, cut, best)?;
                lower[v] = lo;
                upper[v] = hi;
            }
            Ok(())
        }
    }
}

/// Builds the flow solution of the oracle's best (routing, pairing, residual).
fn assemble_solution(
    instance: &Instance,
    teg: &TimeExpandedGraph,
    y: &[bool],
    sigma: Option<&[SigmaNode]>,
    residual: &Residual,
    x: &[f64],
) -> FlowSolution {
    let horizon = teg.horizon;
    let hydrogen_flow: Vec<f64> = (0..teg.arc_count())
        .map(|a| match residual.f_var[a] {
            Some(v) => x[v].max(0.0),
            None => {
                if y[a] {
                    residual.f_const[a]
                } else {
                    0.0
                }
            }
        })
        .collect();
    let read = |vars: &Vec<Vec<usize>>| -> Vec<Vec<f64>> {
        vars.iter().map(|row| row.iter().map(|&v| x[v].max(0.0)).collect()).collect()
    };
    let served_first = read(&residual.z_first);
    let served_second = read(&residual.z_second);
    let refill = read(&residual.refill);

    let mut swap_hour = vec![vec![instance.no_swap_hour(); horizon]; teg.n_destinations];
    let mut unmet_flag = vec![vec![false; horizon]; teg.n_destinations];
    for d in 0..teg.n_destinations {
        for j in 1..=horizon {
            let from = (0..teg.n_sources).find(|&s| y[teg.arc_source_to_dest(s, d, j)]);
            if let Some(s) = from {
                swap_hour[d][j - 1] = instance.swap_completion_hour(s, d);
            }
            let (before, after) = demand_split(instance, d, j, from);
            let unmet = before + after - served_first[d][j - 1] - served_second[d][j - 1];
            unmet_flag[d][j - 1] = unmet > UNMET_TOL;
        }
    }

    let mut assignment: Vec<Vec<Option<Vec<Vec<bool>>>>> =
        (0..teg.n_sources).map(|_| vec![None; horizon]).collect();
    if let Some(sigma) = sigma {
        for node in sigma {
            let n = teg.n_destinations + teg.slot_limits[node.source];
            let mut mat = vec![vec![false; n]; n];
            for &(l_in, l_out) in &node.pairs {
                mat[l_in][l_out] = true;
            }
            assignment[node.source][node.day - 1] = Some(mat);
        }
    }

    let mut solution = FlowSolution {
        storage_flow: y.to_vec(),
        hydrogen_flow,
        served_first,
        served_second,
        refill,
        swap_hour,
        unmet_flag,
        assignment,
        cost: CostBreakdown::default(),
    };
    solution.cost = evaluate_cost(instance, teg, &solution);
    solution
}
