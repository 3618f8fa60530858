//! Assembly of the flow MILPs over the time-expanded graph.
//!
//! Three variants share one builder:
//!
//! - the full model: storage and hydrogen flows, demand service, refills,
//!   swap accounting, symmetry breaking, and the nondecreasing-stock
//!   assignment matrices;
//! - the relaxed model: the full model without the assignment matrices, whose
//!   optimum lower-bounds the full one;
//! - the refill subproblem: the storage flow is fixed, leaving refills,
//!   hydrogen allocation and demand service over the active subgraph only.
//!
//! The swap hour is eliminated by substitution: the demand falling before the
//! swap is `C(d,j,12) + sum_s y_{s,d,Lj} (C(d,j,h0+g(s,d)) - C(d,j,12))`,
//! which is linear in the storage flow; the hour itself is derived reporting.
//! The fixed-dissatisfaction indicator is linearized with one binary per
//! (destination, day), tight under minimization.

use crate::instance::{Instance, Violation};
use crate::model::flow::{demand_split, evaluate_cost, swap_source, CostBreakdown, FlowSolution, UNMET_TOL};
use crate::model::milp::{
    linearize_assignment, linearize_implication, linearize_min, linearize_product, LinExpr,
    MilpModel, ModelError, Sense, VarId,
};
use crate::teg::{ArcId, ArcKind, TimeExpandedGraph, TimeIndex};
use thiserror::Error;

/// A model slot that is either a real variable or a fixed constant (fixed
/// storage flows, initial stocks, inactive arcs).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Term {
    Var(VarId),
    Const(f64),
}

impl Term {
    pub fn expr(self) -> LinExpr {
        match self {
            Term::Var(v) => LinExpr::var(v),
            Term::Const(c) => LinExpr::constant(c),
        }
    }

    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            Term::Var(v) => x[v],
            Term::Const(c) => c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrpModelKind {
    Full,
    Relaxed,
    RefillSubproblem,
}

/// Pairing matrix of one (source, day) node. `in_slots` / `out_slots` give
/// the inflow/outflow vector indices covered by `beta` (all of them in the
/// full model, only the active ones in the refill subproblem).
#[derive(Debug, Clone)]
pub struct AssignmentBlock {
    pub in_slots: Vec<usize>,
    pub out_slots: Vec<usize>,
    pub beta: Vec<Vec<VarId>>,
}

#[derive(Debug, Clone)]
struct MinBlock {
    z: VarId,
    b: VarId,
    x1: LinExpr,
    x2: LinExpr,
}

#[derive(Debug, Clone)]
struct ProductBlock {
    p: VarId,
    b: LinExpr,
    x: LinExpr,
}

/// A built model plus the variable maps needed to move between assignment
/// vectors and flow solutions.
#[derive(Debug, Clone)]
pub struct PrpModel {
    pub milp: MilpModel,
    pub kind: PrpModelKind,
    /// Storage flow term per arc.
    pub y: Vec<Term>,
    /// Hydrogen flow term per arc.
    pub f: Vec<Term>,
    /// Demand served in the first part, indexed [d][j-1].
    pub z_first: Vec<Vec<VarId>>,
    pub z_second: Vec<Vec<VarId>>,
    /// Refill quantity, indexed [s][j-1].
    pub refill: Vec<Vec<VarId>>,
    /// Fixed-dissatisfaction indicator, indexed [d][j-1].
    pub unmet_flag: Vec<Vec<VarId>>,
    /// Assignment matrices, indexed [s][j-1]; `None` in the relaxed model.
    pub assignments: Vec<Vec<Option<AssignmentBlock>>>,
    min_blocks: Vec<MinBlock>,
    product_blocks: Vec<ProductBlock>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("routing constraint {constraint} violated: {detail}")]
pub struct RoutingError {
    pub constraint: String,
    pub detail: String,
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("invalid instance: {0:?}")]
    InvalidInstance(Vec<Violation>),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Storage and hydrogen values fixed on the initial layer, full arc length
/// (zero outside the initial layer).
pub fn initial_conditions(instance: &Instance, teg: &TimeExpandedGraph) -> (Vec<f64>, Vec<f64>) {
    let mut y0 = vec![0.0; teg.arc_count()];
    let mut f0 = vec![0.0; teg.arc_count()];
    for (d, dest) in instance.destinations.iter().enumerate() {
        let a = teg.arc_dest_self(d, TimeIndex::Initial);
        y0[a] = 1.0;
        f0[a] = dest.initial_stock;
    }
    for (s, source) in instance.sources.iter().enumerate() {
        for (k, &stock) in source.initial_storages.iter().enumerate() {
            let a = teg.arc_source_self(s, k, TimeIndex::Initial);
            y0[a] = 1.0;
            f0[a] = stock;
        }
    }
    (y0, f0)
}

/// Stable arc naming used for model variables and LP export.
pub fn arc_name(teg: &TimeExpandedGraph, id: ArcId) -> String {
    let arc = teg.arc(id);
    match arc.kind {
        ArcKind::SourceToDest { source, dest } => format!("s{source}d{dest}_{}", arc.time),
        ArcKind::DestSelf { dest } => format!("d{dest}_{}", arc.time),
        ArcKind::DestToSource { dest, source } => format!("d{dest}s{source}_{}", arc.time),
        ArcKind::SourceSelf { source, slot } => format!("s{source}k{slot}_{}", arc.time),
    }
}

/// Checks the routing constraints a fixed storage flow must satisfy before
/// the refill subproblem is meaningful: initial layer, one storage per
/// destination, at most one swap per destination and day with balanced
/// returns, source capacity and conservation, slot symmetry, and unchanged
/// slots across each day's second part.
pub fn check_routing(instance: &Instance, teg: &TimeExpandedGraph, y: &[bool]) -> Result<(), RoutingError> {
    let fail = |constraint: &str, detail: String| {
        Err(RoutingError { constraint: constraint.to_string(), detail })
    };
    if y.len() != teg.arc_count() {
        return fail("shape", format!("{} flows for {} arcs", y.len(), teg.arc_count()));
    }
    let (y0, _) = initial_conditions(instance, teg);
    for a in teg.arcs_at(TimeIndex::Initial) {
        if y[a] != (y0[a] > 0.5) {
            return fail("initial", format!("arc {} differs from the initial layer", arc_name(teg, a)));
        }
    }
    for d in 0..teg.n_destinations {
        for i in teg.day_order() {
            if !y[teg.arc_dest_self(d, i)] {
                return fail("Eq6", format!("destination {d} unoccupied at {i}"));
            }
        }
    }
    for j in 1..=teg.horizon {
        for d in 0..teg.n_destinations {
            let inflow: usize =
                (0..teg.n_sources).filter(|&s| y[teg.arc_source_to_dest(s, d, j)]).count();
            if inflow > 1 {
                return fail("Eq10", format!("{inflow} storages sent to destination {d} on day {j}"));
            }
            let outflow: usize =
                (0..teg.n_sources).filter(|&s| y[teg.arc_dest_to_source(d, s, j)]).count();
            if inflow != outflow {
                return fail(
                    "Eq11",
                    format!("destination {d} day {j}: {inflow} swaps but {outflow} returns"),
                );
            }
        }
        for s in 0..teg.n_sources {
            let arrivals = (0..teg.n_destinations)
                .filter(|&d| y[teg.arc_dest_to_source(d, s, j - 1)])
                .count()
                + (0..teg.slot_limits[s])
                    .filter(|&k| y[teg.arc_source_self(s, k, second_part_or_initial(j - 1))])
                    .count();
            if arrivals > teg.slot_limits[s] {
                return fail(
                    "Eq18",
                    format!("source {s} day {j}: {arrivals} storages above slot limit {}", teg.slot_limits[s]),
                );
            }
            let departures = (0..teg.n_destinations)
                .filter(|&d| y[teg.arc_source_to_dest(s, d, j)])
                .count()
                + (0..teg.slot_limits[s])
                    .filter(|&k| y[teg.arc_source_self(s, k, TimeIndex::FirstPart(j))])
                    .count();
            if arrivals != departures {
                return fail(
                    "Eq19",
                    format!("source {s} day {j}: {arrivals} storages in, {departures} out"),
                );
            }
            for k in 0..teg.slot_limits[s].saturating_sub(1) {
                let hi = y[teg.arc_source_self(s, k + 1, TimeIndex::FirstPart(j))];
                let lo = y[teg.arc_source_self(s, k, TimeIndex::FirstPart(j))];
                if hi && !lo {
                    return fail("Eq24", format!("source {s} day {j}: slot {} used before slot {k}", k + 1));
                }
            }
            for k in 0..teg.slot_limits[s] {
                let first = y[teg.arc_source_self(s, k, TimeIndex::FirstPart(j))];
                let second = y[teg.arc_source_self(s, k, TimeIndex::SecondPart(j))];
                if first != second {
                    return fail("Eq25", format!("source {s} slot {k} changes within day {j}"));
                }
            }
        }
    }
    let _ = instance;
    Ok(())
}

fn second_part_or_initial(j: usize) -> TimeIndex {
    if j == 0 {
        TimeIndex::Initial
    } else {
        TimeIndex::SecondPart(j)
    }
}

enum Mode<'a> {
    Full,
    Relaxed,
    Refill { y: &'a [bool] },
}

/// Full model: every constraint family plus the assignment matrices.
pub fn build_full_model(instance: &Instance, teg: &TimeExpandedGraph) -> Result<PrpModel, BuildError> {
    build(instance, teg, Mode::Full)
}

/// Relaxed model: the full model minus the assignment matrices; its optimal
/// value is a lower bound for the full one.
pub fn build_relaxed_model(instance: &Instance, teg: &TimeExpandedGraph) -> Result<PrpModel, BuildError> {
    build(instance, teg, Mode::Relaxed)
}

/// Refill subproblem for a fixed routing-feasible storage flow: hydrogen,
/// refills and demand service over the active subgraph; objective is refill
/// plus dissatisfaction (transport is fixed by `y`).
pub fn build_refill_subproblem(
    instance: &Instance,
    teg: &TimeExpandedGraph,
    y: &[bool],
) -> Result<PrpModel, BuildError> {
    build(instance, teg, Mode::Refill { y })
}

fn build(instance: &Instance, teg: &TimeExpandedGraph, mode: Mode) -> Result<PrpModel, BuildError> {
    let violations = instance.validate();
    if !violations.is_empty() {
        return Err(BuildError::InvalidInstance(violations));
    }
    if let Mode::Refill { y } = mode {
        check_routing(instance, teg, y)?;
    }

    let cap = instance.storage_capacity;
    let n_s = teg.n_sources;
    let n_d = teg.n_destinations;
    let horizon = teg.horizon;
    let (y0, f0) = initial_conditions(instance, teg);
    let mut milp = MilpModel::new();

    let kind = match mode {
        Mode::Full => PrpModelKind::Full,
        Mode::Relaxed => PrpModelKind::Relaxed,
        Mode::Refill { .. } => PrpModelKind::RefillSubproblem,
    };
    let structural_y = !matches!(mode, Mode::Refill { .. });

    let y_terms: Vec<Term> = match mode {
        Mode::Refill { y } => y.iter().map(|&b| Term::Const(if b { 1.0 } else { 0.0 })).collect(),
        _ => (0..teg.arc_count())
            .map(|a| Term::Var(milp.add_binary(format!("y_{}", arc_name(teg, a)))))
            .collect(),
    };
    let f_terms: Vec<Term> = (0..teg.arc_count())
        .map(|a| match mode {
            Mode::Refill { y } => {
                if !y[a] {
                    Term::Const(0.0)
                } else if teg.day(a) == TimeIndex::Initial {
                    Term::Const(f0[a])
                } else {
                    Term::Var(milp.add_continuous(format!("f_{}", arc_name(teg, a)), 0.0, cap))
                }
            }
            _ => Term::Var(milp.add_continuous(format!("f_{}", arc_name(teg, a)), 0.0, cap)),
        })
        .collect();

    let refill: Vec<Vec<VarId>> = (0..n_s)
        .map(|s| {
            (1..=horizon)
                .map(|j| {
                    milp.add_continuous(format!("r_s{s}_j{j}"), 0.0, instance.sources[s].refill_capacity)
                })
                .collect()
        })
        .collect();

    if structural_y {
        // Initial layer fixed by equality rows.
        for a in teg.arcs_at(TimeIndex::Initial) {
            let name = arc_name(teg, a);
            milp.add_row(format!("init_y_{name}"), y_terms[a].expr(), Sense::Eq, y0[a]);
            milp.add_row(format!("init_f_{name}"), f_terms[a].expr(), Sense::Eq, f0[a]);
        }
        // Hydrogen rides only on present storages.
        for a in 0..teg.arc_count() {
            linearize_implication(
                &mut milp,
                &format!("cap_{}", arc_name(teg, a)),
                f_terms[a].expr(),
                y_terms[a].expr(),
                cap,
            )?;
        }
        // Exactly one storage at each destination at every time index.
        for d in 0..n_d {
            for i in teg.day_order() {
                milp.add_row(
                    format!("one_d{d}_{i}"),
                    y_terms[teg.arc_dest_self(d, i)].expr(),
                    Sense::Eq,
                    1.0,
                );
            }
        }
    }

    let mut z_first = vec![Vec::with_capacity(horizon); n_d];
    let mut z_second = vec![Vec::with_capacity(horizon); n_d];
    let mut unmet_flag = vec![Vec::with_capacity(horizon); n_d];
    let mut min_blocks = Vec::new();
    let mut product_blocks = Vec::new();

    for d in 0..n_d {
        for j in 1..=horizon {
            let z_l = milp.add_continuous(format!("z_d{d}_L{j}"), 0.0, cap);
            let z_r = milp.add_continuous(format!("z_d{d}_R{j}"), 0.0, cap);
            z_first[d].push(z_l);
            z_second[d].push(z_r);

            let self_in = f_terms[teg.arc_dest_self(d, second_part_or_initial(j - 1))].expr();
            let self_mid = f_terms[teg.arc_dest_self(d, TimeIndex::FirstPart(j))].expr();
            let self_out = f_terms[teg.arc_dest_self(d, TimeIndex::SecondPart(j))].expr();
            let swaps_in: LinExpr = (0..n_s).fold(LinExpr::default(), |e, s| {
                e.plus(&y_terms[teg.arc_source_to_dest(s, d, j)].expr())
            });
            let hydro_in: LinExpr = (0..n_s).fold(LinExpr::default(), |e, s| {
                e.plus(&f_terms[teg.arc_source_to_dest(s, d, j)].expr())
            });
            let hydro_out: LinExpr = (0..n_s).fold(LinExpr::default(), |e, s| {
                e.plus(&f_terms[teg.arc_dest_to_source(d, s, j)].expr())
            });

            // Demand before the swap, as a linear substitution over y.
            let c12 = instance.cumulative_demand_unchecked(d, j, instance.no_swap_hour());
            let c_total = instance.cumulative_demand_unchecked(d, j, 23);
            let mut before = LinExpr::constant(c12);
            for s in 0..n_s {
                let cw = instance.cumulative_demand_unchecked(d, j, instance.swap_completion_hour(s, d));
                before = before.plus(&y_terms[teg.arc_source_to_dest(s, d, j)].expr().scaled(cw - c12));
            }
            let after = LinExpr::constant(c_total).minus(&before);

            // First-part conservation and forced service.
            milp.add_row(
                format!("consL_d{d}_j{j}"),
                self_mid.clone().minus(&self_in).term(z_l, 1.0),
                Sense::Eq,
                0.0,
            );
            let b = linearize_min(&mut milp, &format!("minL_d{d}_j{j}"), z_l, self_in.clone(), before.clone(), cap)?;
            min_blocks.push(MinBlock { z: z_l, b, x1: self_in, x2: before });

            if structural_y {
                milp.add_row(format!("swapcap_d{d}_j{j}"), swaps_in.clone(), Sense::Le, 1.0);
                milp.add_row(
                    format!("swapbal_d{d}_j{j}"),
                    swaps_in.clone().minus(&(0..n_s).fold(LinExpr::default(), |e, s| {
                        e.plus(&y_terms[teg.arc_dest_to_source(d, s, j)].expr())
                    })),
                    Sense::Eq,
                    0.0,
                );
            }

            // Stock kept by the stationed storage when no swap happens.
            let no_swap = LinExpr::constant(1.0).minus(&swaps_in);
            let p = linearize_product(&mut milp, &format!("keep_d{d}_j{j}"), no_swap.clone(), self_mid.clone(), cap)?;
            product_blocks.push(ProductBlock { p, b: no_swap, x: self_mid.clone() });

            // A swapped-out storage departs with its remaining stock.
            milp.add_row(
                format!("depart_d{d}_j{j}"),
                self_mid.minus(&LinExpr::var(p)).minus(&hydro_out),
                Sense::Eq,
                0.0,
            );
            // Second-part conservation over what stays plus what arrived.
            let avail = hydro_in.plus(&LinExpr::var(p));
            milp.add_row(
                format!("consR_d{d}_j{j}"),
                self_out.minus(&avail).term(z_r, 1.0),
                Sense::Eq,
                0.0,
            );
            let b = linearize_min(&mut milp, &format!("minR_d{d}_j{j}"), z_r, avail.clone(), after.clone(), cap)?;
            min_blocks.push(MinBlock { z: z_r, b, x1: avail, x2: after });

            // Fixed dissatisfaction indicator: unmet <= cap * u.
            let u = milp.add_binary(format!("u_d{d}_j{j}"));
            unmet_flag[d].push(u);
            milp.add_row(
                format!("fdis_d{d}_j{j}"),
                LinExpr::var(z_l).term(z_r, 1.0).term(u, cap),
                Sense::Ge,
                c_total,
            );
        }
    }

    let mut assignments: Vec<Vec<Option<AssignmentBlock>>> =
        (0..n_s).map(|_| (0..horizon).map(|_| None).collect()).collect();

    for s in 0..n_s {
        let slots = teg.slot_limits[s];
        for j in 1..=horizon {
            let prev = second_part_or_initial(j - 1);
            // Inflow/outflow vectors: destinations first, then parking slots.
            let in_arcs: Vec<ArcId> = (0..n_d)
                .map(|d| teg.arc_dest_to_source(d, s, j - 1))
                .chain((0..slots).map(|k| teg.arc_source_self(s, k, prev)))
                .collect();
            let out_arcs: Vec<ArcId> = (0..n_d)
                .map(|d| teg.arc_source_to_dest(s, d, j))
                .chain((0..slots).map(|k| teg.arc_source_self(s, k, TimeIndex::FirstPart(j))))
                .collect();

            let sum = |arcs: &[ArcId], terms: &[Term]| {
                arcs.iter().fold(LinExpr::default(), |e, &a| e.plus(&terms[a].expr()))
            };

            if structural_y {
                milp.add_row(
                    format!("srccap_s{s}_j{j}"),
                    sum(&in_arcs, &y_terms),
                    Sense::Le,
                    slots as f64,
                );
                milp.add_row(
                    format!("srcbal_s{s}_j{j}"),
                    sum(&in_arcs, &y_terms).minus(&sum(&out_arcs, &y_terms)),
                    Sense::Eq,
                    0.0,
                );
                for k in 0..slots.saturating_sub(1) {
                    milp.add_row(
                        format!("sym_s{s}_k{k}_j{j}"),
                        y_terms[teg.arc_source_self(s, k + 1, TimeIndex::FirstPart(j))]
                            .expr()
                            .minus(&y_terms[teg.arc_source_self(s, k, TimeIndex::FirstPart(j))].expr()),
                        Sense::Le,
                        0.0,
                    );
                }
            }

            // Hydrogen conservation with the refill.
            milp.add_row(
                format!("hcons_s{s}_j{j}"),
                sum(&in_arcs, &f_terms)
                    .term(refill[s][j - 1], 1.0)
                    .minus(&sum(&out_arcs, &f_terms)),
                Sense::Eq,
                0.0,
            );

            // Nondecreasing-stock assignment.
            match mode {
                Mode::Relaxed => {}
                Mode::Full => {
                    let pairs = |arcs: &[ArcId]| -> Vec<(LinExpr, LinExpr)> {
                        arcs.iter().map(|&a| (f_terms[a].expr(), y_terms[a].expr())).collect()
                    };
                    let beta = linearize_assignment(
                        &mut milp,
                        &format!("asg_s{s}_j{j}"),
                        &pairs(&in_arcs),
                        &pairs(&out_arcs),
                        cap,
                    )?;
                    assignments[s][j - 1] = Some(AssignmentBlock {
                        in_slots: (0..in_arcs.len()).collect(),
                        out_slots: (0..out_arcs.len()).collect(),
                        beta,
                    });
                }
                Mode::Refill { y } => {
                    let in_slots: Vec<usize> =
                        (0..in_arcs.len()).filter(|&l| y[in_arcs[l]]).collect();
                    let out_slots: Vec<usize> =
                        (0..out_arcs.len()).filter(|&l| y[out_arcs[l]]).collect();
                    if in_slots.is_empty() {
                        continue;
                    }
                    let pairs = |slots: &[usize], arcs: &[ArcId]| -> Vec<(LinExpr, LinExpr)> {
                        slots
                            .iter()
                            .map(|&l| (f_terms[arcs[l]].expr(), LinExpr::constant(1.0)))
                            .collect()
                    };
                    let beta = linearize_assignment(
                        &mut milp,
                        &format!("asg_s{s}_j{j}"),
                        &pairs(&in_slots, &in_arcs),
                        &pairs(&out_slots, &out_arcs),
                        cap,
                    )?;
                    assignments[s][j - 1] = Some(AssignmentBlock { in_slots, out_slots, beta });
                }
            }
        }

        // No refill in the second part: slots pass through each day unchanged.
        for j in 1..=horizon {
            for k in 0..slots {
                let first = teg.arc_source_self(s, k, TimeIndex::FirstPart(j));
                let second = teg.arc_source_self(s, k, TimeIndex::SecondPart(j));
                if let (Term::Var(_), _) | (_, Term::Var(_)) = (f_terms[first], f_terms[second]) {
                    milp.add_row(
                        format!("carryf_s{s}_k{k}_j{j}"),
                        f_terms[first].expr().minus(&f_terms[second].expr()),
                        Sense::Eq,
                        0.0,
                    );
                }
                if structural_y {
                    milp.add_row(
                        format!("carryy_s{s}_k{k}_j{j}"),
                        y_terms[first].expr().minus(&y_terms[second].expr()),
                        Sense::Eq,
                        0.0,
                    );
                }
            }
        }
    }

    // Objective: transport (full/relaxed only), refill, dissatisfaction.
    let mut objective = LinExpr::default();
    if structural_y {
        for (a, arc) in teg.arcs() {
            let t = match arc.kind {
                ArcKind::SourceToDest { source, dest } | ArcKind::DestToSource { dest, source } => {
                    instance.transport.travel_time[source][dest]
                }
                _ => continue,
            };
            objective = objective
                .plus(&y_terms[a].expr().scaled(instance.cost.transport_per_unit * t));
        }
    }
    for s in 0..n_s {
        for j in 1..=horizon {
            objective = objective.term(refill[s][j - 1], instance.sources[s].refill_price);
        }
    }
    for d in 0..n_d {
        for j in 1..=horizon {
            let c_total = instance.cumulative_demand_unchecked(d, j, 23);
            objective = objective
                .add_const(instance.cost.dissatisfaction_per_kg * c_total)
                .term(z_first[d][j - 1], -instance.cost.dissatisfaction_per_kg)
                .term(z_second[d][j - 1], -instance.cost.dissatisfaction_per_kg)
                .term(unmet_flag[d][j - 1], instance.cost.dissatisfaction_fixed);
        }
    }
    milp.add_objective(objective);

    Ok(PrpModel {
        milp,
        kind,
        y: y_terms,
        f: f_terms,
        z_first,
        z_second,
        refill,
        unmet_flag,
        assignments,
        min_blocks,
        product_blocks,
    })
}

impl PrpModel {
    /// Reads a solver assignment back into a flow solution. Binaries are
    /// rounded; the fixed-dissatisfaction flags are re-derived from the unmet
    /// quantities so that reported costs match `evaluate_cost` exactly.
    pub fn extract_solution(
        &self,
        instance: &Instance,
        teg: &TimeExpandedGraph,
        x: &[f64],
    ) -> FlowSolution {
        let storage_flow: Vec<bool> = self.y.iter().map(|t| t.eval(x) > 0.5).collect();
        let hydrogen_flow: Vec<f64> = self.f.iter().map(|t| t.eval(x).max(0.0)).collect();
        let horizon = teg.horizon;
        let served = |vars: &Vec<Vec<VarId>>| -> Vec<Vec<f64>> {
            vars.iter().map(|row| row.iter().map(|&v| x[v].max(0.0)).collect()).collect()
        };
        let served_first = served(&self.z_first);
        let served_second = served(&self.z_second);
        let refill = served(&self.refill);

        let mut swap_hour = vec![vec![instance.no_swap_hour(); horizon]; teg.n_destinations];
        let mut unmet_flags = vec![vec![false; horizon]; teg.n_destinations];
        for d in 0..teg.n_destinations {
            for j in 1..=horizon {
                let from = swap_source(teg, &storage_flow, d, j);
                if let Some(s) = from {
                    swap_hour[d][j - 1] = instance.swap_completion_hour(s, d);
                }
                let (before, after) = demand_split(instance, d, j, from);
                let unmet = before + after - served_first[d][j - 1] - served_second[d][j - 1];
                unmet_flags[d][j - 1] = unmet > UNMET_TOL;
            }
        }

        let assignment: Vec<Vec<Option<Vec<Vec<bool>>>>> = (0..teg.n_sources)
            .map(|s| {
                let n = teg.n_destinations + teg.slot_limits[s];
                (0..horizon)
                    .map(|j| {
                        self.assignments[s][j].as_ref().map(|block| {
                            let mut mat = vec![vec![false; n]; n];
                            for (bi, &li) in block.in_slots.iter().enumerate() {
                                for (bm, &lm) in block.out_slots.iter().enumerate() {
                                    mat[li][lm] = x[block.beta[bi][bm]] > 0.5;
                                }
                            }
                            mat
                        })
                    })
                    .collect()
            })
            .collect();

        let mut solution = FlowSolution {
            storage_flow,
            hydrogen_flow,
            served_first,
            served_second,
            refill,
            swap_hour,
            unmet_flag: unmet_flags,
            assignment,
            cost: CostBreakdown::default(),
        };
        solution.cost = evaluate_cost(instance, teg, &solution);
        solution
    }

    /// Builds a full assignment vector from a flow solution, filling the
    /// auxiliary product, branch and indicator variables consistently. The
    /// result is feasible for this model whenever the solution is.
    pub fn assignment_from_flow(&self, solution: &FlowSolution) -> Vec<f64> {
        let mut x = vec![0.0; self.milp.n_vars()];
        for (a, term) in self.y.iter().enumerate() {
            if let Term::Var(v) = term {
                x[*v] = if solution.storage_flow[a] { 1.0 } else { 0.0 };
            }
        }
        for (a, term) in self.f.iter().enumerate() {
            if let Term::Var(v) = term {
                x[*v] = solution.hydrogen_flow[a];
            }
        }
        let fill = |x: &mut Vec<f64>, vars: &Vec<Vec<VarId>>, values: &Vec<Vec<f64>>| {
            for (row, vals) in vars.iter().zip(values) {
                for (&v, &val) in row.iter().zip(vals) {
                    x[v] = val;
                }
            }
        };
        fill(&mut x, &self.z_first, &solution.served_first);
        fill(&mut x, &self.z_second, &solution.served_second);
        fill(&mut x, &self.refill, &solution.refill);
        for (d, row) in self.unmet_flag.iter().enumerate() {
            for (j, &u) in row.iter().enumerate() {
                x[u] = if solution.unmet_flag[d][j] { 1.0 } else { 0.0 };
            }
        }
        for (s, per_day) in self.assignments.iter().enumerate() {
            for (j, block) in per_day.iter().enumerate() {
                let Some(block) = block else { continue };
                let Some(mat) = solution.assignment[s][j].as_ref() else { continue };
                for (bi, &li) in block.in_slots.iter().enumerate() {
                    for (bm, &lm) in block.out_slots.iter().enumerate() {
                        x[block.beta[bi][bm]] = if mat[li][lm] { 1.0 } else { 0.0 };
                    }
                }
            }
        }
        // Products first: the min inflows reference them.
        for block in &self.product_blocks {
            x[block.p] = block.b.evaluate(&x) * block.x.evaluate(&x);
        }
        for block in &self.min_blocks {
            let x1 = block.x1.evaluate(&x);
            let x2 = block.x2.evaluate(&x);
            x[block.b] = if x1 <= x2 { 0.0 } else { 1.0 };
            let _ = block.z;
        }
        x
    }
}
