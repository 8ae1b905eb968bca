//! Deterministic budget-constrained shortest-path solvers: the no-reset
//! slice solver, the reset solver on the full expanded graph, the auxiliary
//! value functions used for domain restriction, and the alternating
//! iterative reset solver.

use thiserror::Error;

use crate::graph::{
    build_expanded_graph, dijkstra, dijkstra_expanded, dijkstra_to_sources, BudgetLevels,
    DirectedGraph, ExpandedValueTable, GraphError,
};
use crate::{Cost, INF};

#[derive(Debug, Error)]
pub enum DiscreteError {
    #[error("arc {from}->{to} has negative secondary cost {cost}; no-reset mode requires c >= 0")]
    NegativeSecondaryCost { from: usize, to: usize, cost: i64 },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// The four auxiliary node-value arrays used for pruning the expanded graph:
/// `u` (primary-optimal cost), `v` (resource-optimal cost, i.e. the minimum
/// starting budget), `v_tilde` (resource cost along primary-optimal paths),
/// and `u_tilde` (primary cost along resource-optimal paths).
///
/// In reset mode `v`, `v_tilde`, and `u_tilde` are only defined on unsafe
/// nodes; safe entries hold `+inf`.
#[derive(Clone, Debug)]
pub struct AuxiliaryNodeValues {
    pub u: Vec<Cost>,
    pub v: Vec<Cost>,
    pub v_tilde: Vec<Cost>,
    pub u_tilde: Vec<Cost>,
}

/// Sink specification for [`compute_auxiliaries`].
pub enum AuxSinks<'a> {
    /// No-reset mode: `v` measures the secondary cost of reaching the target
    /// and is defined on every node.
    TargetOnly,
    /// Reset mode: paths through the unsafe set terminate at the target or
    /// at a reachable safe node. `safe_values[j]` holds the current value of
    /// safe node `j` (`+inf` when unreachable) and seeds `u_tilde` there.
    SafeReachable { safe_values: &'a [Cost] },
}

/// Computes `U`, `V`, `V~`, and `U~` on the original graph.
///
/// `V` solves the resource-optimal system (secondary costs toward the sinks),
/// `V~` minimizes secondary cost over arcs optimal in the primary system, and
/// `U~` accumulates primary cost along `V`-optimal arcs, breaking ties by the
/// smaller primary cost.
pub fn compute_auxiliaries(graph: &DirectedGraph, sinks: AuxSinks<'_>) -> AuxiliaryNodeValues {
    let m = graph.node_count();
    let t = graph.target();
    let u_full = dijkstra(graph);
    let rev = graph.reverse_arcs();
    let reset = matches!(sinks, AuxSinks::SafeReachable { .. });

    // A node may act as an intermediate hop for V / V~ / U~ paths. In reset
    // mode safe nodes terminate a path, so only unsafe nodes relay.
    let relays = |i: usize| -> bool { !reset || !graph.is_safe(i) };

    // V: secondary-cost Dijkstra toward the sinks through relay nodes.
    let mut v = vec![INF; m + 1];
    v[t] = 0.0;
    if let AuxSinks::SafeReachable { safe_values } = &sinks {
        for j in 0..m {
            if graph.is_safe(j) && safe_values[j] < INF {
                v[j] = 0.0;
            }
        }
    }
    {
        let rev_sec: Vec<Vec<(usize, Cost)>> = rev
            .iter()
            .enumerate()
            .map(|(_, list)| {
                list.iter()
                    .filter(|&&(src, _)| relays(src))
                    .map(|&(src, a)| (src, a.secondary as Cost))
                    .collect()
            })
            .collect();
        dijkstra_to_sources(&rev_sec, &mut v);
    }

    // V~: secondary cost restricted to primary-optimal arcs. In reset mode a
    // path segment ends at the first safe node (the budget resets there).
    let mut v_tilde = vec![INF; m + 1];
    v_tilde[t] = 0.0;
    if reset {
        for j in 0..m {
            if graph.is_safe(j) {
                v_tilde[j] = 0.0;
            }
        }
    }
    {
        let rev_opt: Vec<Vec<(usize, Cost)>> = (0..m + 1)
            .map(|j| {
                rev[j]
                    .iter()
                    .filter(|&&(src, a)| {
                        relays(src)
                            && u_full[src] < INF
                            && u_full[j] < INF
                            && a.primary + u_full[j] == u_full[src]
                    })
                    .map(|&(src, a)| (src, a.secondary as Cost))
                    .collect()
            })
            .collect();
        dijkstra_to_sources(&rev_opt, &mut v_tilde);
    }

    // U~: primary cost over V-optimal arcs, seeded with the sink values.
    let mut u_tilde = vec![INF; m + 1];
    u_tilde[t] = 0.0;
    if let AuxSinks::SafeReachable { safe_values } = &sinks {
        for j in 0..m {
            if graph.is_safe(j) && safe_values[j] < INF {
                u_tilde[j] = safe_values[j];
            }
        }
    }
    {
        let rev_vopt: Vec<Vec<(usize, Cost)>> = (0..m + 1)
            .map(|j| {
                rev[j]
                    .iter()
                    .filter(|&&(src, a)| {
                        relays(src)
                            && v[src] < INF
                            && v[j] < INF
                            && a.secondary as Cost + v[j] == v[src]
                    })
                    .map(|&(src, a)| (src, a.primary))
                    .collect()
            })
            .collect();
        dijkstra_to_sources(&rev_vopt, &mut u_tilde);
    }

    let mask = |vals: Vec<Cost>| -> Vec<Cost> {
        if reset {
            (0..m)
                .map(|i| if graph.is_safe(i) { INF } else { vals[i] })
                .collect()
        } else {
            vals[..m].to_vec()
        }
    };
    AuxiliaryNodeValues {
        u: u_full[..m].to_vec(),
        v: mask(v),
        v_tilde: mask(v_tilde),
        u_tilde: mask(u_tilde),
    }
}

/// Solves the budget-constrained problem without resets (`c >= 0`).
///
/// Runs Dijkstra one b-slice at a time from `b = 0` to `b = B`; when every
/// secondary cost is strictly positive the causality is explicit and a
/// single bottom-to-top sweep is used instead.
pub fn solve_no_reset(
    graph: &DirectedGraph,
    levels: BudgetLevels,
) -> Result<ExpandedValueTable, DiscreteError> {
    let m = graph.node_count();
    let t = graph.target();
    for i in 0..m {
        for a in graph.arcs_from(i) {
            if a.secondary < 0 {
                return Err(DiscreteError::NegativeSecondaryCost {
                    from: i,
                    to: a.to,
                    cost: a.secondary,
                });
            }
        }
    }
    let all_positive = (0..m).all(|i| graph.arcs_from(i).iter().all(|a| a.secondary >= 1));
    let mut table = ExpandedValueTable::new_full(graph, levels);

    if all_positive {
        // Explicit causality: every value depends on strictly lower slices.
        for b in levels.iter() {
            for i in 0..m {
                let mut best = INF;
                for a in graph.arcs_from(i) {
                    if a.secondary > b as i64 {
                        continue;
                    }
                    let nb = (b as i64 - a.secondary) as u32;
                    let down = if a.to == t { 0.0 } else { table.value(a.to, nb) };
                    best = best.min(a.primary + down);
                }
                table.set(i, b, best);
            }
        }
        return Ok(table);
    }

    // Semi-implicit causality: same-slice coupling through c = 0 arcs.
    let rev = graph.reverse_arcs();
    let rev_zero: Vec<Vec<(usize, Cost)>> = (0..m)
        .map(|j| {
            rev[j]
                .iter()
                .filter(|&&(_, a)| a.secondary == 0)
                .map(|&(src, a)| (src, a.primary))
                .collect()
        })
        .collect();
    for b in levels.iter() {
        let mut slice = vec![INF; m];
        for i in 0..m {
            // Seed with transitions that leave the slice (c >= 1) or hit the
            // target directly.
            let mut seed = INF;
            for a in graph.arcs_from(i) {
                if a.secondary > b as i64 {
                    continue;
                }
                if a.to == t {
                    seed = seed.min(a.primary);
                } else if a.secondary >= 1 {
                    let nb = (b as i64 - a.secondary) as u32;
                    seed = seed.min(a.primary + table.value(a.to, nb));
                }
            }
            slice[i] = seed;
        }
        dijkstra_to_sources(&rev_zero, &mut slice);
        for i in 0..m {
            table.set(i, b, slice[i]);
        }
    }
    Ok(table)
}

/// Solves the reset problem exactly with Dijkstra on the full expanded graph.
pub fn solve_reset_dijkstra(
    graph: &DirectedGraph,
    levels: BudgetLevels,
) -> Result<ExpandedValueTable, DiscreteError> {
    let eg = build_expanded_graph(graph, levels, true)?;
    let values = dijkstra_expanded(&eg);
    Ok(eg.to_table(graph, &values))
}

/// Result of the iterative reset solver, including the per-iteration safe
/// values for tests that track the alternation.
pub struct IterativeSolution {
    pub table: ExpandedValueTable,
    pub iterations: usize,
    /// Safe-node values (`W_j^B`, indexed by node) after each Phase II.
    pub safe_history: Vec<Vec<Cost>>,
}

/// Solves the reset problem by alternating between an upward sweep over the
/// unsafe slices (Phase I, guided by the auxiliary `V` and `U~`) and a
/// Dijkstra restricted to the safe set (Phase II), until the safe values
/// stop changing. The fixed point equals [`solve_reset_dijkstra`] exactly.
pub fn solve_reset_iterative(
    graph: &DirectedGraph,
    levels: BudgetLevels,
) -> Result<IterativeSolution, DiscreteError> {
    graph.check_safe_convention(levels, true)?;
    let m = graph.node_count();
    let t = graph.target();
    let b_max = levels.max();
    let u = dijkstra(graph);
    let mut table = ExpandedValueTable::new_reset(graph, levels);
    let unsafe_nodes = graph.unsafe_nodes();
    let safe_nodes = graph.safe_nodes();

    // Reverse adjacency among safe nodes for Phase II.
    let rev = graph.reverse_arcs();
    let rev_safe: Vec<Vec<(usize, Cost)>> = (0..m)
        .map(|j| {
            if !graph.is_safe(j) {
                return Vec::new();
            }
            rev[j]
                .iter()
                .filter(|&&(src, _)| graph.is_safe(src))
                .map(|&(src, a)| (src, a.primary))
                .collect()
        })
        .collect();

    let mut safe_values: Vec<Cost> = vec![INF; m];
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;

        // Phase I: recompute the minimum feasible levels from the current
        // reachable safe set, then fill the unsafe slices bottom-up.
        let aux = compute_auxiliaries(
            graph,
            AuxSinks::SafeReachable {
                safe_values: &safe_values,
            },
        );
        for b in 1..=b_max {
            for &i in &unsafe_nodes {
                let vi = aux.v[i];
                if vi == INF || (b as Cost) < vi {
                    continue;
                }
                let w = if (b as Cost) == vi {
                    aux.u_tilde[i]
                } else if table.value(i, b - 1) == u[i] {
                    u[i]
                } else {
                    let mut best = INF;
                    for a in graph.arcs_from(i) {
                        if a.secondary > b as i64 {
                            continue;
                        }
                        let w_next = if a.to == t {
                            0.0
                        } else if graph.is_safe(a.to) {
                            safe_values[a.to]
                        } else {
                            table.value(a.to, (b as i64 - a.secondary) as u32)
                        };
                        best = best.min(a.primary + w_next);
                    }
                    best
                };
                table.set(i, b, w);
            }
        }

        // Phase II: Dijkstra on the safe set, seeded from one-step
        // transitions into the already-valued states.
        let mut new_safe = vec![INF; m];
        for &i in &safe_nodes {
            let mut seed = INF;
            for a in graph.arcs_from(i) {
                if a.to == t {
                    seed = seed.min(a.primary);
                } else if !graph.is_safe(a.to) {
                    seed = seed.min(a.primary + table.value(a.to, b_max));
                }
            }
            new_safe[i] = seed;
        }
        dijkstra_to_sources(&rev_safe, &mut new_safe);

        let changed = safe_nodes.iter().any(|&j| new_safe[j] != safe_values[j]);
        for &j in &safe_nodes {
            safe_values[j] = new_safe[j];
            table.set(j, b_max, new_safe[j]);
        }
        history.push(safe_nodes.iter().map(|&j| safe_values[j]).collect());

        // With no unsafe nodes a single pass already is the fixed point;
        // otherwise iterate until Phase II leaves the safe values unchanged.
        if unsafe_nodes.is_empty() || !changed {
            break;
        }
    }
    Ok(IterativeSolution {
        table,
        iterations,
        safe_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::samples::chain_with_harbors;

    fn chain_reset(b: u32) -> DirectedGraph {
        let mut g = chain_with_harbors();
        g.apply_safe_secondary(-(b as i64));
        g
    }

    #[test]
    fn no_reset_full_table_b3() {
        let g = chain_with_harbors();
        let w = solve_no_reset(&g, BudgetLevels::new(3)).unwrap();
        let expect: [[Cost; 8]; 4] = [
            [INF, INF, INF, INF, INF, INF, INF, INF],
            [INF, INF, INF, INF, INF, INF, 2.0, 1.0],
            [10.0, 11.0, INF, INF, 5.0, 3.0, 2.0, 1.0],
            [9.0, 8.0, 7.0, 6.0, 4.0, 3.0, 2.0, 1.0],
        ];
        for b in 0..4u32 {
            for i in 0..8 {
                assert_eq!(w.value(i, b), expect[b as usize][i], "node {} level {}", i + 1, b);
            }
        }
        assert!(w.is_monotone_in_b());
    }

    #[test]
    fn no_reset_rejects_negative_secondary() {
        let mut g = chain_with_harbors();
        g.apply_safe_secondary(-3);
        assert!(matches!(
            solve_no_reset(&g, BudgetLevels::new(3)),
            Err(DiscreteError::NegativeSecondaryCost { .. })
        ));
    }

    #[test]
    fn no_reset_large_budget_reaches_unconstrained() {
        // With B at least the resource cost of every primary-optimal path,
        // the top slice equals the unconstrained values.
        let g = chain_with_harbors();
        let levels = BudgetLevels::new(5);
        let w = solve_no_reset(&g, levels).unwrap();
        let u = dijkstra(&g);
        for i in 0..8 {
            assert_eq!(w.value(i, 5), u[i]);
        }
        // Cross-check the slice solver against the expanded-graph Dijkstra.
        let eg = build_expanded_graph(&g, levels, false).unwrap();
        let vals = dijkstra_expanded(&eg);
        let oracle = eg.to_table(&g, &vals);
        for i in 0..8 {
            for b in levels.iter() {
                assert_eq!(w.value(i, b), oracle.value(i, b));
            }
        }
    }

    #[test]
    fn reset_dijkstra_table_b3() {
        let g = chain_reset(3);
        let w = solve_reset_dijkstra(&g, BudgetLevels::new(3)).unwrap();
        // Safe nodes carry a single value at level B.
        assert_eq!(w.value(0, 3), 9.0);
        assert_eq!(w.value(1, 3), 8.0);
        assert_eq!(w.value(6, 3), 2.0);
        // Unsafe slices.
        let expect_unsafe: [(usize, u32, Cost); 15] = [
            (2, 3, 7.0),
            (3, 3, 5.0),
            (4, 3, 4.0),
            (5, 3, 3.0),
            (7, 3, 1.0),
            (2, 2, 7.0),
            (3, 2, 10.0),
            (4, 2, 4.0),
            (5, 2, 3.0),
            (7, 2, 1.0),
            (2, 1, 9.0),
            (3, 1, INF),
            (4, 1, INF),
            (5, 1, 3.0),
            (7, 1, 1.0),
        ];
        for &(i, b, v) in &expect_unsafe {
            assert_eq!(w.value(i, b), v, "node {} level {}", i + 1, b);
        }
        assert!(w.is_monotone_in_b());
    }

    #[test]
    fn reset_wider_budget_changes_values() {
        // The reset problem is B-dependent: W_4^2 drops from 10 to 9 when
        // the maximum budget grows from 3 to 4.
        let w3 = solve_reset_dijkstra(&chain_reset(3), BudgetLevels::new(3)).unwrap();
        let w4 = solve_reset_dijkstra(&chain_reset(4), BudgetLevels::new(4)).unwrap();
        assert_eq!(w3.value(3, 2), 10.0);
        assert_eq!(w4.value(3, 2), 9.0);
    }

    #[test]
    fn reset_all_safe_is_unconstrained() {
        let mut g = chain_with_harbors();
        for i in 0..8 {
            g.set_safe(i, true);
        }
        g.apply_safe_secondary(-3);
        let w = solve_reset_dijkstra(&g, BudgetLevels::new(3)).unwrap();
        let u = dijkstra(&g);
        for i in 0..8 {
            assert_eq!(w.value(i, 3), u[i]);
        }
    }

    #[test]
    fn auxiliaries_no_reset_table() {
        let g = chain_with_harbors();
        let aux = compute_auxiliaries(&g, AuxSinks::TargetOnly);
        assert_eq!(aux.u, vec![8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0]);
        assert_eq!(aux.v, vec![2.0, 2.0, 3.0, 3.0, 2.0, 2.0, 1.0, 1.0]);
        assert_eq!(aux.v_tilde, vec![5.0, 5.0, 5.0, 4.0, 3.0, 2.0, 1.0, 1.0]);
        assert_eq!(aux.u_tilde, vec![10.0, 11.0, 7.0, 6.0, 5.0, 3.0, 2.0, 1.0]);
    }

    #[test]
    fn auxiliaries_reset_with_final_safe_set() {
        let g = chain_reset(3);
        let mut safe_values = vec![INF; 8];
        safe_values[0] = 9.0;
        safe_values[1] = 8.0;
        safe_values[6] = 2.0;
        let aux = compute_auxiliaries(
            &g,
            AuxSinks::SafeReachable {
                safe_values: &safe_values,
            },
        );
        assert_eq!(aux.v[2], 1.0);
        assert_eq!(aux.v[3], 2.0);
        assert_eq!(aux.u_tilde[2], 9.0);
        assert_eq!(aux.u_tilde[3], 10.0);
        // Table values on the unsafe set.
        assert_eq!(aux.v_tilde[2], 4.0);
        assert_eq!(aux.v_tilde[3], 3.0);
        assert_eq!(aux.v[4], 2.0);
        assert_eq!(aux.u_tilde[4], 4.0);
        // Safe nodes carry no auxiliary values in reset mode.
        assert_eq!(aux.v[0], INF);
        assert_eq!(aux.u_tilde[6], INF);
    }

    #[test]
    fn auxiliaries_coincide_on_a_single_path() {
        // Primary- and resource-optimal paths coincide on a bare chain.
        let mut g = DirectedGraph::new(3);
        g.add_arc(0, 1, 2.0, 1).unwrap();
        g.add_arc(1, 2, 3.0, 2).unwrap();
        g.add_arc(2, 3, 1.0, 1).unwrap();
        let aux = compute_auxiliaries(&g, AuxSinks::TargetOnly);
        assert_eq!(aux.u, aux.u_tilde);
        assert_eq!(aux.v, aux.v_tilde);
    }

    #[test]
    fn remark_identities_no_reset() {
        // W at the minimum feasible level equals U~, and the constraint is
        // inactive from V~ upward.
        let g = chain_with_harbors();
        let levels = BudgetLevels::new(5);
        let w = solve_no_reset(&g, levels).unwrap();
        let aux = compute_auxiliaries(&g, AuxSinks::TargetOnly);
        for i in 0..8 {
            let vi = aux.v[i] as u32;
            assert_eq!(w.value(i, vi), aux.u_tilde[i], "node {}", i + 1);
            if vi > 0 {
                assert_eq!(w.value(i, vi - 1), INF);
            }
            for b in (aux.v_tilde[i] as u32)..=5 {
                assert_eq!(w.value(i, b), aux.u[i]);
            }
        }
    }

    #[test]
    fn iterative_matches_exact_and_tracks_alternation() {
        let g = chain_reset(3);
        let levels = BudgetLevels::new(3);
        let sol = solve_reset_iterative(&g, levels).unwrap();
        assert_eq!(sol.iterations, 3);
        // Safe values settle in stages: node 7 after the first Phase II,
        // nodes 1 and 2 after the second.
        assert_eq!(sol.safe_history[0], vec![INF, INF, 2.0]);
        assert_eq!(sol.safe_history[1], vec![9.0, 8.0, 2.0]);
        assert_eq!(sol.safe_history[2], vec![9.0, 8.0, 2.0]);
        let exact = solve_reset_dijkstra(&g, levels).unwrap();
        for i in 0..8 {
            for b in levels.iter() {
                assert_eq!(sol.table.value(i, b), exact.value(i, b), "node {} level {}", i + 1, b);
            }
        }
        // The minimum feasible level of nodes 3 and 4 is only found in the
        // last iteration.
        assert_eq!(sol.table.value(2, 1), 9.0);
        assert_eq!(sol.table.value(3, 2), 10.0);
    }

    #[test]
    fn iterative_all_safe_single_iteration() {
        let mut g = chain_with_harbors();
        for i in 0..8 {
            g.set_safe(i, true);
        }
        g.apply_safe_secondary(-3);
        let sol = solve_reset_iterative(&g, BudgetLevels::new(3)).unwrap();
        assert_eq!(sol.iterations, 1);
        let u = dijkstra(&g);
        for i in 0..8 {
            assert_eq!(sol.table.value(i, 3), u[i]);
        }
    }

    #[test]
    fn reset_below_no_reset_on_shared_states() {
        // Allowing resets only enlarges the feasible path set.
        let levels = BudgetLevels::new(3);
        let w_plain = solve_no_reset(&chain_with_harbors(), levels).unwrap();
        let w_reset = solve_reset_dijkstra(&chain_reset(3), levels).unwrap();
        let g = chain_with_harbors();
        for i in 0..8 {
            if g.is_safe(i) {
                assert!(w_reset.value(i, 3) <= w_plain.value(i, 3));
            } else {
                for b in levels.iter() {
                    assert!(w_reset.value(i, b) <= w_plain.value(i, b));
                }
            }
        }
    }

    #[test]
    fn iterative_matches_dijkstra_on_random_reset_graphs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for case in 0..20 {
            let m = rng.gen_range(2..=30);
            let b = rng.gen_range(1..=6u32);
            let mut g = DirectedGraph::new(m);
            for i in 0..m {
                g.set_safe(i, rng.gen_bool(0.4));
            }
            for i in 0..m {
                let deg = rng.gen_range(1..=4);
                for _ in 0..deg {
                    let j = rng.gen_range(0..=m);
                    if j == i {
                        continue;
                    }
                    let c = rng.gen_range(1..10) as f64;
                    let sec = if g.is_safe(i) {
                        -(b as i64)
                    } else {
                        rng.gen_range(1..=3)
                    };
                    g.add_arc(i, j, c, sec).unwrap();
                }
            }
            let levels = BudgetLevels::new(b);
            let exact = solve_reset_dijkstra(&g, levels).unwrap();
            let iter = solve_reset_iterative(&g, levels).unwrap();
            for i in 0..m {
                for bb in levels.iter() {
                    assert_eq!(
                        iter.table.value(i, bb),
                        exact.value(i, bb),
                        "case {case} node {i} level {bb}"
                    );
                }
            }
            assert!(exact.is_monotone_in_b());
        }
    }
}
