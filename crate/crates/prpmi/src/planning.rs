//! Decoding flow solutions into per-storage transport plans.
//!
//! A feasible storage flow induces, for every layer transition, a bijection
//! between consecutive arc layers that preserves the flow values: at source
//! mornings it follows the pairing matrices (extended over inactive slots in
//! ascending order), across swaps it follows the delivery/return structure.
//! Iterating those maps from the initial layer yields one arc path per
//! storage unit; the paths are pairwise disjoint and cover every active arc.

use crate::instance::Instance;
use crate::model::{flow_counts, FlowSolution};
use crate::teg::{ArcId, ArcKind, TimeExpandedGraph, TimeIndex};
use thiserror::Error;

/// One storage unit's arc path through the whole horizon.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportPlan {
    pub storage: usize,
    /// One arc per time index, in order R0, L1, R1, ..., LJ, RJ.
    pub arcs: Vec<ArcId>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("no pairing matrix for source {source_index} on day {day} despite active arcs")]
    MissingAssignment { source_index: usize, day: usize },
    #[error("source {source_index} day {day}: {inflow} active inflows vs {outflow} outflows")]
    CardinalityMismatch { source_index: usize, day: usize, inflow: usize, outflow: usize },
    #[error("flow equality violated while decoding: {0}")]
    FlowMismatch(String),
}

/// Extends an active pairing to a total bijection over all slots: active
/// slots follow the matrix, inactive slots pair up in ascending order.
pub fn extend_bijection(
    beta: Option<&Vec<Vec<bool>>>,
    y_in: &[bool],
    y_out: &[bool],
) -> Result<Vec<usize>, DecodeError> {
    let n = y_in.len();
    debug_assert_eq!(n, y_out.len());
    let active_in: Vec<usize> = (0..n).filter(|&l| y_in[l]).collect();
    let active_out: Vec<usize> = (0..n).filter(|&l| y_out[l]).collect();
    if active_in.len() != active_out.len() {
        return Err(DecodeError::CardinalityMismatch {
            source_index: usize::MAX,
            day: 0,
            inflow: active_in.len(),
            outflow: active_out.len(),
        });
    }
    let mut sigma = vec![usize::MAX; n];
    if !active_in.is_empty() {
        let beta = beta.ok_or(DecodeError::MissingAssignment { source_index: usize::MAX, day: 0 })?;
        for &l in &active_in {
            let image = (0..n).find(|&m| beta[l][m] && y_out[m]);
            match image {
                Some(m) => sigma[l] = m,
                None => {
                    return Err(DecodeError::FlowMismatch(format!(
                        "active inflow slot {l} has no active pairing image"
                    )))
                }
            }
        }
    }
    let inactive_in = (0..n).filter(|&l| !y_in[l]);
    let mut inactive_out = (0..n).filter(|&m| !y_out[m]);
    for l in inactive_in {
        sigma[l] = inactive_out.next().expect("equal cardinalities");
    }
    // A bijection: every slot used exactly once.
    let mut seen = vec![false; n];
    for &m in &sigma {
        if m == usize::MAX || seen[m] {
            return Err(DecodeError::FlowMismatch("pairing is not a bijection".to_string()));
        }
        seen[m] = true;
    }
    Ok(sigma)
}

/// The layer bijections of a solution: the extended source pairings per
/// (source, day), and per (destination, day) the ascending pairing of
/// inactive inbound and outbound source arcs.
#[derive(Debug, Clone)]
pub struct SourceBijections {
    /// [s][j-1][slot] -> slot, over n_destinations + slot_limit(s) entries.
    pub sigma_bar: Vec<Vec<Vec<usize>>>,
    /// [d][j-1]: source -> source map for the inactive swap arcs.
    pub sigma_hat: Vec<Vec<Vec<usize>>>,
}

/// Builds every layer bijection of a feasible solution.
pub fn build_bijections(
    teg: &TimeExpandedGraph,
    solution: &FlowSolution,
) -> Result<SourceBijections, DecodeError> {
    let y = &solution.storage_flow;
    let n_s = teg.n_sources;
    let n_d = teg.n_destinations;
    let mut sigma_bar = vec![Vec::with_capacity(teg.horizon); n_s];
    for s in 0..n_s {
        let slots = teg.slot_limits[s];
        for j in 1..=teg.horizon {
            let prev = if j == 1 { TimeIndex::Initial } else { TimeIndex::SecondPart(j - 1) };
            let y_in: Vec<bool> = (0..n_d)
                .map(|d| y[teg.arc_dest_to_source(d, s, j - 1)])
                .chain((0..slots).map(|k| y[teg.arc_source_self(s, k, prev)]))
                .collect();
            let y_out: Vec<bool> = (0..n_d)
                .map(|d| y[teg.arc_source_to_dest(s, d, j)])
                .chain((0..slots).map(|k| y[teg.arc_source_self(s, k, TimeIndex::FirstPart(j))]))
                .collect();
            let sigma = extend_bijection(solution.assignment[s][j - 1].as_ref(), &y_in, &y_out)
                .map_err(|e| match e {
                    DecodeError::CardinalityMismatch { inflow, outflow, .. } => {
                        DecodeError::CardinalityMismatch { source_index: s, day: j, inflow, outflow }
                    }
                    DecodeError::MissingAssignment { .. } => {
                        DecodeError::MissingAssignment { source_index: s, day: j }
                    }
                    other => other,
                })?;
            sigma_bar[s].push(sigma);
        }
    }

    let mut sigma_hat = vec![Vec::with_capacity(teg.horizon); n_d];
    for (d, hat) in sigma_hat.iter_mut().enumerate() {
        for j in 1..=teg.horizon {
            let inactive_in: Vec<usize> =
                (0..n_s).filter(|&s| !y[teg.arc_source_to_dest(s, d, j)]).collect();
            let inactive_out: Vec<usize> =
                (0..n_s).filter(|&s| !y[teg.arc_dest_to_source(d, s, j)]).collect();
            if inactive_in.len() != inactive_out.len() {
                return Err(DecodeError::FlowMismatch(format!(
                    "destination {d} day {j}: swap and return counts differ"
                )));
            }
            let mut map = vec![usize::MAX; n_s];
            for (&s_in, &s_out) in inactive_in.iter().zip(&inactive_out) {
                map[s_in] = s_out;
            }
            hat.push(map);
        }
    }
    Ok(SourceBijections { sigma_bar, sigma_hat })
}

/// Maps an arc of the layer before a first part (tail at R(j-1)) to its
/// successor arc at Lj, following the extended source pairings.
pub fn theta_under(
    teg: &TimeExpandedGraph,
    bijections: &SourceBijections,
    j: usize,
    arc: ArcId,
) -> ArcId {
    let n_d = teg.n_destinations;
    match teg.arc(arc).kind {
        ArcKind::DestSelf { dest } => teg.arc_dest_self(dest, TimeIndex::FirstPart(j)),
        ArcKind::DestToSource { dest, source } => {
            let image = bijections.sigma_bar[source][j - 1][dest];
            source_out_arc(teg, source, image, j)
        }
        ArcKind::SourceSelf { source, slot } => {
            let image = bijections.sigma_bar[source][j - 1][n_d + slot];
            source_out_arc(teg, source, image, j)
        }
        ArcKind::SourceToDest { .. } => unreachable!("no deliveries end at a first part"),
    }
}

fn source_out_arc(teg: &TimeExpandedGraph, source: usize, slot: usize, j: usize) -> ArcId {
    if slot < teg.n_destinations {
        teg.arc_source_to_dest(source, slot, j)
    } else {
        teg.arc_source_self(source, slot - teg.n_destinations, TimeIndex::FirstPart(j))
    }
}

/// Maps an arc of the layer before a second part (tail at Lj) to its
/// successor arc at Rj, following the swap/return structure.
pub fn theta_over(
    teg: &TimeExpandedGraph,
    solution: &FlowSolution,
    bijections: &SourceBijections,
    j: usize,
    arc: ArcId,
) -> ArcId {
    let y = &solution.storage_flow;
    match teg.arc(arc).kind {
        ArcKind::SourceSelf { source, slot } => {
            teg.arc_source_self(source, slot, TimeIndex::SecondPart(j))
        }
        ArcKind::SourceToDest { source, dest } => {
            if y[arc] {
                teg.arc_dest_self(dest, TimeIndex::SecondPart(j))
            } else {
                let target = bijections.sigma_hat[dest][j - 1][source];
                teg.arc_dest_to_source(dest, target, j)
            }
        }
        ArcKind::DestSelf { dest } => {
            match (0..teg.n_sources).find(|&s| y[teg.arc_dest_to_source(dest, s, j)]) {
                Some(s) => teg.arc_dest_to_source(dest, s, j),
                None => teg.arc_dest_self(dest, TimeIndex::SecondPart(j)),
            }
        }
        ArcKind::DestToSource { .. } => unreachable!("no returns end at a second part"),
    }
}

/// Derives one transport plan per storage unit by iterating the layer
/// bijections from the active initial arcs. Flow preservation is checked at
/// every step.
pub fn derive_transport_plans(
    teg: &TimeExpandedGraph,
    solution: &FlowSolution,
) -> Result<Vec<TransportPlan>, DecodeError> {
    let bijections = build_bijections(teg, solution)?;
    let seeds: Vec<ArcId> =
        teg.arcs_at(TimeIndex::Initial).filter(|&a| solution.storage_flow[a]).collect();
    let mut plans = Vec::with_capacity(seeds.len());
    for (storage, seed) in seeds.into_iter().enumerate() {
        let mut arcs = Vec::with_capacity(2 * teg.horizon + 1);
        arcs.push(seed);
        for j in 1..=teg.horizon {
            let at_first = theta_under(teg, &bijections, j, *arcs.last().unwrap());
            arcs.push(at_first);
            let at_second = theta_over(teg, solution, &bijections, j, at_first);
            arcs.push(at_second);
        }
        for (&arc, i) in arcs.iter().zip(teg.day_order()) {
            if teg.day(arc) != i {
                return Err(DecodeError::FlowMismatch(format!(
                    "storage {storage}: arc at {} where {i} was expected",
                    teg.day(arc)
                )));
            }
            if !solution.storage_flow[arc] {
                return Err(DecodeError::FlowMismatch(format!(
                    "storage {storage}: inactive arc reached at {i}"
                )));
            }
        }
        plans.push(TransportPlan { storage, arcs });
    }
    Ok(plans)
}

/// Checks the three decoding guarantees: each plan is a connected arc path
/// over active arcs (one per time index), plans are pairwise disjoint, and
/// together they cover every active arc.
pub fn verify_plans(
    teg: &TimeExpandedGraph,
    solution: &FlowSolution,
    plans: &[TransportPlan],
) -> Result<(), String> {
    let mut used = vec![false; teg.arc_count()];
    for plan in plans {
        if plan.arcs.len() != 2 * teg.horizon + 1 {
            return Err(format!("storage {}: {} arcs", plan.storage, plan.arcs.len()));
        }
        for (&arc, i) in plan.arcs.iter().zip(teg.day_order()) {
            if teg.day(arc) != i {
                return Err(format!("storage {}: arc out of order at {i}", plan.storage));
            }
            if !solution.storage_flow[arc] {
                return Err(format!("storage {}: inactive arc at {i}", plan.storage));
            }
            if used[arc] {
                return Err(format!("storage {}: arc at {i} already used", plan.storage));
            }
            used[arc] = true;
        }
        for pair in plan.arcs.windows(2) {
            if teg.head(pair[0]) != teg.tail(pair[1]) {
                return Err(format!("storage {}: path disconnected", plan.storage));
            }
        }
    }
    for (a, _) in teg.arcs() {
        if solution.storage_flow[a] && !used[a] {
            return Err(format!("active arc {a} not covered by any plan"));
        }
    }
    Ok(())
}

/// Lemma-4 control: active storage flows per time index; constant and equal
/// to the storage count for feasible solutions.
pub fn check_flow_count(teg: &TimeExpandedGraph, solution: &FlowSolution) -> Vec<(TimeIndex, usize)> {
    flow_counts(teg, &solution.storage_flow)
}

/// One CSV row per (storage, time index): where the storage sits after that
/// step and how much it carries.
pub fn write_plans_csv(
    instance: &Instance,
    teg: &TimeExpandedGraph,
    solution: &FlowSolution,
    plans: &[TransportPlan],
    out: &mut impl std::io::Write,
) -> std::io::Result<()> {
    let _ = instance;
    writeln!(out, "storage_id,time,location,carried_kg")?;
    for plan in plans {
        for &arc in &plan.arcs {
            let (location, _) = teg.head(arc);
            writeln!(
                out,
                "{},{},{},{}",
                plan.storage,
                teg.day(arc),
                location,
                solution.hydrogen_flow[arc]
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::heuristics::{complete_routing, compute_phi, greedy_routing, GreedyConfig};
    use crate::solver::SolveLimits;
    use crate::teg::build_teg;

    fn decoded_solution(seed: u64) -> (crate::instance::Instance, TimeExpandedGraph, FlowSolution) {
        let instance = fixtures::tiny_instance(seed);
        let teg = build_teg(&instance);
        let y = greedy_routing(&instance, &teg, &GreedyConfig::for_instance(&instance));
        let phi =
            compute_phi(&instance, &teg, &y, &SolveLimits::from_seconds(10.0)).unwrap();
        (instance, teg, phi.solution)
    }

    #[test]
    fn extend_bijection_cases() {
        // All inactive: ascending pairing is the identity.
        let sigma = extend_bijection(None, &[false; 4], &[false; 4]).unwrap();
        assert_eq!(sigma, vec![0, 1, 2, 3]);

        // Two active slots swapped by beta; the inactive two pair ascending.
        let mut beta = vec![vec![false; 4]; 4];
        beta[0][2] = true;
        beta[2][0] = true;
        let y_in = [true, false, true, false];
        let y_out = [true, false, true, false];
        let sigma = extend_bijection(Some(&beta), &y_in, &y_out).unwrap();
        assert_eq!(sigma, vec![2, 1, 0, 3]);
        for l in 0..4 {
            assert_eq!(y_in[l], y_out[sigma[l]]);
        }

        // Cardinality mismatch is rejected.
        assert!(matches!(
            extend_bijection(None, &[true, false], &[false, false]),
            Err(DecodeError::CardinalityMismatch { .. })
        ));
    }

    #[test]
    fn sampled_solutions_preserve_flows_under_sigma_bar() {
        for seed in [0, 3, 5, 12] {
            let (_, teg, solution) = decoded_solution(seed);
            let bijections = build_bijections(&teg, &solution).unwrap();
            for s in 0..teg.n_sources {
                let slots = teg.slot_limits[s];
                for j in 1..=teg.horizon {
                    let prev =
                        if j == 1 { TimeIndex::Initial } else { TimeIndex::SecondPart(j - 1) };
                    let y = &solution.storage_flow;
                    let y_in: Vec<bool> = (0..teg.n_destinations)
                        .map(|d| y[teg.arc_dest_to_source(d, s, j - 1)])
                        .chain((0..slots).map(|k| y[teg.arc_source_self(s, k, prev)]))
                        .collect();
                    let y_out: Vec<bool> = (0..teg.n_destinations)
                        .map(|d| y[teg.arc_source_to_dest(s, d, j)])
                        .chain(
                            (0..slots)
                                .map(|k| y[teg.arc_source_self(s, k, TimeIndex::FirstPart(j))]),
                        )
                        .collect();
                    let sigma = &bijections.sigma_bar[s][j - 1];
                    for (l, &m) in sigma.iter().enumerate() {
                        assert_eq!(y_in[l], y_out[m], "seed {seed} s{s} j{j} slot {l}");
                    }
                }
            }
        }
    }

    #[test]
    fn theta_maps_are_layer_bijections() {
        for seed in [1, 4, 9] {
            let (_, teg, solution) = decoded_solution(seed);
            let bijections = build_bijections(&teg, &solution).unwrap();
            for j in 1..=teg.horizon {
                let prev = if j == 1 { TimeIndex::Initial } else { TimeIndex::SecondPart(j - 1) };
                let mut image: Vec<ArcId> = teg
                    .arcs_at(prev)
                    .map(|a| theta_under(&teg, &bijections, j, a))
                    .collect();
                image.sort_unstable();
                let mut expected: Vec<ArcId> = teg.arcs_at(TimeIndex::FirstPart(j)).collect();
                expected.sort_unstable();
                assert_eq!(image, expected, "seed {seed}: theta at L{j} is not bijective");

                for a in teg.arcs_at(prev) {
                    let to = theta_under(&teg, &bijections, j, a);
                    assert_eq!(teg.tail(to), teg.head(a));
                    assert_eq!(solution.storage_flow[a], solution.storage_flow[to]);
                }

                let mut image: Vec<ArcId> = teg
                    .arcs_at(TimeIndex::FirstPart(j))
                    .map(|a| theta_over(&teg, &solution, &bijections, j, a))
                    .collect();
                image.sort_unstable();
                let mut expected: Vec<ArcId> = teg.arcs_at(TimeIndex::SecondPart(j)).collect();
                expected.sort_unstable();
                assert_eq!(image, expected, "seed {seed}: theta at R{j} is not bijective");

                for a in teg.arcs_at(TimeIndex::FirstPart(j)) {
                    let to = theta_over(&teg, &solution, &bijections, j, a);
                    assert_eq!(teg.tail(to), teg.head(a));
                    assert_eq!(solution.storage_flow[a], solution.storage_flow[to]);
                }
            }
        }
    }

    #[test]
    fn theta_case_examples() {
        let (_, teg, solution) = decoded_solution(0);
        let bijections = build_bijections(&teg, &solution).unwrap();
        // Destination self-arcs map to destination self-arcs.
        let a = teg.arc_dest_self(0, TimeIndex::Initial);
        assert_eq!(theta_under(&teg, &bijections, 1, a), teg.arc_dest_self(0, TimeIndex::FirstPart(1)));
        // Source slots pass unchanged through the second part.
        let a = teg.arc_source_self(0, 0, TimeIndex::FirstPart(1));
        assert_eq!(
            theta_over(&teg, &solution, &bijections, 1, a),
            teg.arc_source_self(0, 0, TimeIndex::SecondPart(1))
        );
        // An active delivery continues as the destination self-arc.
        for j in 1..=teg.horizon {
            for d in 0..teg.n_destinations {
                for s in 0..teg.n_sources {
                    let a = teg.arc_source_to_dest(s, d, j);
                    if solution.storage_flow[a] {
                        assert_eq!(
                            theta_over(&teg, &solution, &bijections, j, a),
                            teg.arc_dest_self(d, TimeIndex::SecondPart(j))
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn parked_storage_yields_a_self_arc_plan() {
        let instance = fixtures::uniform_instance(1, 1, 1, 2);
        let teg = build_teg(&instance);
        let y = greedy_routing(&instance, &teg, &GreedyConfig { critical_threshold: 0.0 });
        let solution = complete_routing(&instance, &teg, &y).unwrap();
        let plans = derive_transport_plans(&teg, &solution).unwrap();
        assert_eq!(plans.len(), instance.storage_count());
        verify_plans(&teg, &solution, &plans).unwrap();
        // The destination's storage never moves.
        let dest_plan = plans
            .iter()
            .find(|p| matches!(teg.arc(p.arcs[0]).kind, ArcKind::DestSelf { .. }))
            .unwrap();
        for &arc in &dest_plan.arcs {
            assert!(matches!(teg.arc(arc).kind, ArcKind::DestSelf { dest: 0 }));
        }
    }

    #[test]
    fn plans_cover_all_active_arcs_disjointly() {
        for seed in [2, 6, 8, 13, 17] {
            let (instance, teg, solution) = decoded_solution(seed);
            let plans = derive_transport_plans(&teg, &solution).unwrap();
            assert_eq!(plans.len(), instance.storage_count(), "seed {seed}");
            verify_plans(&teg, &solution, &plans).unwrap();
        }
    }

    #[test]
    fn corrupted_flow_deviates_in_exactly_one_count() {
        let (instance, teg, mut solution) = decoded_solution(3);
        let counts = check_flow_count(&teg, &solution);
        let expected = instance.storage_count();
        assert!(counts.iter().all(|&(_, c)| c == expected));
        // Flip one parked slot arc off.
        let arc = teg.arc_source_self(0, 0, TimeIndex::FirstPart(1));
        let flipped = solution.storage_flow[arc];
        solution.storage_flow[arc] = !flipped;
        let counts = check_flow_count(&teg, &solution);
        let deviations =
            counts.iter().filter(|&&(_, c)| c != expected).count();
        assert_eq!(deviations, 1);
    }

    #[test]
    fn csv_export_has_one_row_per_storage_and_time() {
        let (instance, teg, solution) = decoded_solution(5);
        let plans = derive_transport_plans(&teg, &solution).unwrap();
        let mut buffer = Vec::new();
        write_plans_csv(&instance, &teg, &solution, &plans, &mut buffer).unwrap();
        let text = String::from_utf8(buffer).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "storage_id,time,location,carried_kg");
        assert_eq!(
            lines.count(),
            instance.storage_count() * (2 * teg.horizon + 1)
        );
    }
}
