//! Stochastic shortest paths with budget constraints: value iteration for
//! plain SSPs, budget-constrained SSPs solved by a single explicit sweep,
//! per-slice iteration, or full expanded value iteration depending on the
//! signs of the secondary costs, and the reset variant solved by alternating
//! an upward sweep with value iterations on the safe set.

use std::fmt::Write as _;

use thiserror::Error;

use crate::graph::{BudgetLevels, DirectedGraph, ExpandedValueTable};
use crate::{Cost, INF};

/// Finite ceiling standing in for `+inf` inside value-iteration arithmetic.
/// States whose value never leaves the ceiling are reclassified to `+inf`.
const CEILING: Cost = 1e30;

#[derive(Debug, Error)]
pub enum SspError {
    #[error("control {control} at node {node}: transition probabilities sum to {sum}, not 1")]
    BadDistribution {
        node: usize,
        control: usize,
        sum: f64,
    },
    #[error("control {control} at node {node}: primary cost {cost} is not strictly positive")]
    NonPositiveCost {
        node: usize,
        control: usize,
        cost: f64,
    },
    #[error("transition target {0} out of range")]
    NodeOutOfRange(usize),
    #[error("value iteration did not converge in {iterations} sweeps (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("reset mode requires c = -B on safe nodes and c >= 1 on unsafe nodes; node {node} control {control} has c = {got}")]
    ResetConvention {
        node: usize,
        control: usize,
        got: i64,
    },
    #[error("parse error: {0}")]
    Parse(String),
}

/// One control at a node: a primary cost, an integer secondary cost, and a
/// transition distribution over successors (only strictly positive
/// probabilities are stored).
#[derive(Clone, Debug)]
pub struct Control {
    pub primary: Cost,
    pub secondary: i64,
    pub transitions: Vec<(usize, f64)>,
}

/// An absorbing-target Markov decision process with per-node control sets.
/// The target is node `node_count` and is absorbing with zero cost; it
/// carries no explicit controls.
#[derive(Clone, Debug)]
pub struct SSPModel {
    node_count: usize,
    controls: Vec<Vec<Control>>,
    safe: Vec<bool>,
    /// Recorded positive lower bound on primary costs.
    delta: f64,
}

impl SSPModel {
    pub fn new(node_count: usize) -> Self {
        SSPModel {
            node_count,
            controls: vec![Vec::new(); node_count],
            safe: vec![false; node_count],
            delta: INF,
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn target(&self) -> usize {
        self.node_count
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn set_safe(&mut self, node: usize, safe: bool) {
        self.safe[node] = safe;
    }

    pub fn is_safe(&self, node: usize) -> bool {
        node < self.node_count && self.safe[node]
    }

    pub fn controls_at(&self, node: usize) -> &[Control] {
        &self.controls[node]
    }

    pub fn add_control(&mut self, node: usize, control: Control) -> Result<(), SspError> {
        let k = self.controls[node].len();
        let sum: f64 = control.transitions.iter().map(|&(_, p)| p).sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(SspError::BadDistribution {
                node,
                control: k,
                sum,
            });
        }
        if !(control.primary > 0.0) {
            return Err(SspError::NonPositiveCost {
                node,
                control: k,
                cost: control.primary,
            });
        }
        for &(j, p) in &control.transitions {
            if j > self.node_count {
                return Err(SspError::NodeOutOfRange(j));
            }
            debug_assert!(p > 0.0, "store only strictly positive probabilities");
        }
        self.delta = self.delta.min(control.primary);
        self.controls[node].push(control);
        Ok(())
    }

    /// Degenerate deterministic model: every graph arc becomes one control
    /// with a unit-mass transition. Requires strictly positive primary costs.
    pub fn from_graph(graph: &DirectedGraph) -> Result<Self, SspError> {
        let mut model = SSPModel::new(graph.node_count());
        for i in 0..graph.node_count() {
            model.set_safe(i, graph.is_safe(i));
            for a in graph.arcs_from(i) {
                model.add_control(
                    i,
                    Control {
                        primary: a.primary,
                        secondary: a.secondary,
                        transitions: vec![(a.to, 1.0)],
                    },
                )?;
            }
        }
        Ok(model)
    }

    fn check_reset_convention(&self, levels: BudgetLevels) -> Result<(), SspError> {
        for i in 0..self.node_count {
            for (k, c) in self.controls[i].iter().enumerate() {
                let ok = if self.safe[i] {
                    c.secondary == -(levels.max() as i64)
                } else {
                    c.secondary >= 1
                };
                if !ok {
                    return Err(SspError::ResetConvention {
                        node: i,
                        control: k,
                        got: c.secondary,
                    });
                }
            }
        }
        Ok(())
    }

    /// Parses the model text format: header `M target delta B`, one line per
    /// control `i a_index C c j1 p1 j2 p2 ...` (1-based indices), and a final
    /// line listing the safe nodes. Returns the model and the budget bound.
    pub fn parse(text: &str) -> Result<(Self, BudgetLevels), SspError> {
        let mut lines: Vec<&str> = text.lines().collect();
        if lines.is_empty() {
            return Err(SspError::Parse("empty file".into()));
        }
        let head: Vec<&str> = lines.remove(0).split_whitespace().collect();
        if head.len() != 4 {
            return Err(SspError::Parse("header must be 'M target delta B'".into()));
        }
        let m: usize = head[0]
            .parse()
            .map_err(|e| SspError::Parse(format!("bad node count: {e}")))?;
        let target: usize = head[1]
            .parse()
            .map_err(|e| SspError::Parse(format!("bad target: {e}")))?;
        if target != m + 1 {
            return Err(SspError::Parse(format!("target must be {}", m + 1)));
        }
        let _delta: f64 = head[2]
            .parse()
            .map_err(|e| SspError::Parse(format!("bad delta: {e}")))?;
        let b: u32 = head[3]
            .parse()
            .map_err(|e| SspError::Parse(format!("bad budget: {e}")))?;
        let safe_line = lines.pop().unwrap_or("");
        let mut model = SSPModel::new(m);
        for line in lines {
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.is_empty() {
                continue;
            }
            if t.len() < 6 || t.len() % 2 != 0 {
                return Err(SspError::Parse(format!("bad control line '{line}'")));
            }
            let i: usize = t[0]
                .parse()
                .map_err(|e| SspError::Parse(format!("bad node: {e}")))?;
            let primary: f64 = t[2]
                .parse()
                .map_err(|e| SspError::Parse(format!("bad cost: {e}")))?;
            let secondary: i64 = t[3]
                .parse()
                .map_err(|e| SspError::Parse(format!("bad secondary: {e}")))?;
            let mut transitions = Vec::new();
            for pair in t[4..].chunks(2) {
                let j: usize = pair[0]
                    .parse()
                    .map_err(|e| SspError::Parse(format!("bad successor: {e}")))?;
                let p: f64 = pair[1]
                    .parse()
                    .map_err(|e| SspError::Parse(format!("bad probability: {e}")))?;
                transitions.push((j - 1, p));
            }
            model.add_control(
                i - 1,
                Control {
                    primary,
                    secondary,
                    transitions,
                },
            )?;
        }
        for tok in safe_line.split_whitespace() {
            let i: usize = tok
                .parse()
                .map_err(|e| SspError::Parse(format!("bad safe index: {e}")))?;
            model.set_safe(i - 1, true);
        }
        Ok((model, BudgetLevels::new(b)))
    }

    /// Serializes to the text format accepted by [`SSPModel::parse`].
    pub fn to_text(&self, levels: BudgetLevels) -> String {
        let mut out = String::new();
        let delta = if self.delta == INF { 0.0 } else { self.delta };
        let _ = writeln!(
            out,
            "{} {} {} {}",
            self.node_count,
            self.node_count + 1,
            delta,
            levels.max()
        );
        for i in 0..self.node_count {
            for (k, c) in self.controls[i].iter().enumerate() {
                let mut line = format!("{} {} {} {}", i + 1, k, c.primary, c.secondary);
                for &(j, p) in &c.transitions {
                    let _ = write!(line, " {} {}", j + 1, p);
                }
                let _ = writeln!(out, "{line}");
            }
        }
        let safe: Vec<String> = (0..self.node_count)
            .filter(|&i| self.safe[i])
            .map(|i| (i + 1).to_string())
            .collect();
        let _ = writeln!(out, "{}", safe.join(" "));
        out
    }
}

/// Solver knobs shared by the value-iteration routines.
#[derive(Copy, Clone, Debug)]
pub struct SspParams {
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for SspParams {
    fn default() -> Self {
        SspParams {
            tolerance: 1e-12,
            max_sweeps: 1_000_000,
        }
    }
}

impl SspParams {
    pub fn with_tolerance(tolerance: f64) -> Self {
        SspParams {
            tolerance,
            ..Default::default()
        }
    }
}

/// Output of [`value_iteration`].
#[derive(Debug)]
pub struct ValueIterationResult {
    /// Values per node (the target last, always 0); `+inf` for states that
    /// never left the ceiling.
    pub values: Vec<Cost>,
    /// Greedy control index per node (`None` on unreachable states).
    pub policy: Vec<Option<usize>>,
    pub iterations: usize,
    /// Sup-norm residual after each sweep.
    pub residual_history: Vec<f64>,
}

fn expectation(values: &[Cost], control: &Control, target: usize) -> Cost {
    let mut acc = 0.0;
    for &(j, p) in &control.transitions {
        let v = if j == target { 0.0 } else { values[j] };
        if v >= INF {
            return INF;
        }
        acc += p * v;
    }
    acc
}

/// Applies the Bellman operator once over `active`, reading successor values
/// from `values`; returns the sup-norm change. Values are capped at the
/// finite ceiling so that the iteration stays monotone from above.
fn bellman_sweep(
    model: &SSPModel,
    values: &mut [Cost],
    policy: &mut [Option<usize>],
    active: &[usize],
) -> f64 {
    let target = model.target();
    let mut residual = 0.0f64;
    for &i in active {
        let mut best = INF;
        let mut arg = None;
        for (k, c) in model.controls_at(i).iter().enumerate() {
            let e = expectation(values, c, target);
            let total = (c.primary + e).min(CEILING);
            if total < best {
                best = total;
                arg = Some(k);
            }
        }
        let best = best.min(CEILING);
        let old = values[i];
        if best < old {
            residual = residual.max(old - best);
            values[i] = best;
            policy[i] = arg;
        } else if policy[i].is_none() {
            policy[i] = arg;
        }
    }
    residual
}

/// Any converged value at this scale can only come from ceiling mass leaking
/// through a transition probability; genuine costs in scope are far smaller.
const RECLASSIFY_ABOVE: Cost = 1e15;

fn reclassify(values: &mut [Cost]) {
    for v in values.iter_mut() {
        if *v >= CEILING * 0.5 {
            *v = INF;
        }
    }
}

/// Propagates infeasibility after the ceiling pass: a state whose every
/// control keeps part of its mass on an unreachable successor is itself
/// unreachable, even though its capped value drifted below the ceiling.
fn resolve_infeasible(model: &SSPModel, values: &mut [Cost], active: &[usize]) {
    let target = model.target();
    loop {
        let mut changed = false;
        for &i in active {
            if values[i] >= INF {
                continue;
            }
            let mut best = INF;
            for c in model.controls_at(i) {
                let e = expectation(values, c, target);
                if e < INF {
                    best = best.min(c.primary + e);
                }
            }
            if best >= RECLASSIFY_ABOVE {
                values[i] = INF;
                changed = true;
            }
        }
        if !changed {
            return;
        }
    }
}

/// Value iteration for the unconstrained SSP: iterates the Bellman operator
/// from the finite ceiling until the residual drops below the tolerance.
pub fn value_iteration(
    model: &SSPModel,
    params: SspParams,
) -> Result<ValueIterationResult, SspError> {
    let m = model.node_count();
    let mut values = vec![CEILING; m + 1];
    values[m] = 0.0;
    let mut policy = vec![None; m + 1];
    let active: Vec<usize> = (0..m).collect();
    let mut history = Vec::new();
    for sweep in 1..=params.max_sweeps {
        let r = bellman_sweep(model, &mut values, &mut policy, &active);
        history.push(r);
        if r <= params.tolerance {
            reclassify(&mut values);
            resolve_infeasible(model, &mut values, &active);
            for i in 0..m {
                if values[i] >= INF {
                    policy[i] = None;
                }
            }
            return Ok(ValueIterationResult {
                values,
                policy,
                iterations: sweep,
                residual_history: history,
            });
        }
    }
    Err(SspError::NonConvergence {
        iterations: params.max_sweeps,
        residual: *history.last().unwrap_or(&INF),
    })
}

/// Expanded model over (node, level) states, used for the implicit-causality
/// branch of [`solve_budget_ssp`] and as the monolithic oracle for the reset
/// alternation.
pub fn expand_model(model: &SSPModel, levels: BudgetLevels) -> SSPModel {
    let m = model.node_count();
    let nb = levels.count();
    let cap = levels.max() as i64;
    // State (i, b) -> i * (B+1) + b; expanded target is the last node.
    let mut ex = SSPModel::new(m * nb);
    for i in 0..m {
        for b in levels.iter() {
            let from = i * nb + b as usize;
            ex.set_safe(from, model.is_safe(i));
            for c in model.controls_at(i) {
                if c.secondary > b as i64 {
                    continue;
                }
                let nb_level = crate::graph::ominus(b as i64, c.secondary, cap) as usize;
                let transitions = c
                    .transitions
                    .iter()
                    .map(|&(j, p)| {
                        if j == model.target() {
                            (m * nb, p)
                        } else {
                            (j * nb + nb_level, p)
                        }
                    })
                    .collect();
                ex.add_control(
                    from,
                    Control {
                        primary: c.primary,
                        secondary: 0,
                        transitions,
                    },
                )
                .expect("expanded control is valid");
            }
        }
    }
    ex
}

fn table_from_expanded(
    model: &SSPModel,
    levels: BudgetLevels,
    expanded_values: &[Cost],
) -> ExpandedValueTable {
    let m = model.node_count();
    let nb = levels.count();
    let safe: Vec<bool> = (0..m).map(|i| model.is_safe(i)).collect();
    let mut table = ExpandedValueTable::full_from_flags(safe, levels);
    for i in 0..m {
        for b in levels.iter() {
            table.set(i, b, expanded_values[i * nb + b as usize]);
        }
    }
    table
}

/// Solves the budget-constrained SSP. The effective control set at level `b`
/// is `{a : c(a) <= b}`. The solver picks the cheapest valid strategy:
/// a single explicit sweep when all secondary costs are positive, per-slice
/// value iteration when they are nonnegative, and full value iteration on
/// the expanded model otherwise.
pub fn solve_budget_ssp(
    model: &SSPModel,
    levels: BudgetLevels,
    params: SspParams,
) -> Result<ExpandedValueTable, SspError> {
    let m = model.node_count();
    let target = model.target();
    let all_secondary = (0..m).flat_map(|i| model.controls_at(i).iter().map(|c| c.secondary));
    let min_secondary = all_secondary.min().unwrap_or(1);

    if min_secondary < 0 {
        let ex = expand_model(model, levels);
        let res = value_iteration(&ex, params)?;
        return Ok(table_from_expanded(model, levels, &res.values));
    }

    let safe: Vec<bool> = (0..m).map(|i| model.is_safe(i)).collect();
    let mut table = ExpandedValueTable::full_from_flags(safe, levels);

    if min_secondary >= 1 {
        // Explicit causality: one bottom-to-top sweep, no iteration.
        for b in levels.iter() {
            for i in 0..m {
                let mut best = INF;
                for c in model.controls_at(i) {
                    if c.secondary > b as i64 {
                        continue;
                    }
                    let lvl = (b as i64 - c.secondary) as u32;
                    let mut acc = 0.0;
                    let mut feasible = true;
                    for &(j, p) in &c.transitions {
                        let v = if j == target { 0.0 } else { table.value(j, lvl) };
                        if v >= INF {
                            feasible = false;
                            break;
                        }
                        acc += p * v;
                    }
                    if feasible {
                        best = best.min(c.primary + acc);
                    }
                }
                table.set(i, b, best);
            }
        }
        return Ok(table);
    }

    // Semi-implicit causality: iterate within each slice in increasing b.
    let mut sweeps_left = params.max_sweeps;
    for b in levels.iter() {
        let mut slice = vec![CEILING; m];
        loop {
            if sweeps_left == 0 {
                return Err(SspError::NonConvergence {
                    iterations: params.max_sweeps,
                    residual: INF,
                });
            }
            sweeps_left -= 1;
            let mut residual = 0.0f64;
            for i in 0..m {
                let mut best = INF;
                for c in model.controls_at(i) {
                    if c.secondary > b as i64 {
                        continue;
                    }
                    let mut acc = 0.0;
                    for &(j, p) in &c.transitions {
                        let v = if j == target {
                            0.0
                        } else if c.secondary == 0 {
                            slice[j]
                        } else {
                            let lvl = (b as i64 - c.secondary) as u32;
                            let w = table.value(j, lvl);
                            if w >= INF {
                                acc = INF;
                                break;
                            }
                            w
                        };
                        if v >= INF {
                            acc = INF;
                            break;
                        }
                        acc += p * v;
                    }
                    if acc < INF {
                        best = best.min((c.primary + acc).min(CEILING));
                    }
                }
                if best < slice[i] {
                    residual = residual.max(slice[i] - best);
                    slice[i] = best;
                }
            }
            if residual <= params.tolerance {
                break;
            }
        }
        reclassify(&mut slice);
        // Propagate infeasibility within the slice: ceiling mass that leaked
        // through a same-slice transition leaves a huge-but-finite value.
        loop {
            let mut changed = false;
            for i in 0..m {
                if slice[i] >= INF {
                    continue;
                }
                let mut best = INF;
                for c in model.controls_at(i) {
                    if c.secondary > b as i64 {
                        continue;
                    }
                    let mut acc = 0.0;
                    for &(j, p) in &c.transitions {
                        let v = if j == target {
                            0.0
                        } else if c.secondary == 0 {
                            slice[j]
                        } else {
                            table.value(j, (b as i64 - c.secondary) as u32)
                        };
                        if v >= INF {
                            acc = INF;
                            break;
                        }
                        acc += p * v;
                    }
                    if acc < INF {
                        best = best.min(c.primary + acc);
                    }
                }
                if best >= RECLASSIFY_ABOVE {
                    slice[i] = INF;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        for i in 0..m {
            table.set(i, b, slice[i]);
        }
    }
    Ok(table)
}

/// Output of [`solve_reset_ssp`].
pub struct ResetSspSolution {
    pub table: ExpandedValueTable,
    pub outer_iterations: usize,
}

/// Solves the reset SSP (`c = -B` on safe nodes, `c >= 1` on unsafe nodes)
/// by alternating Phase I (one explicit upward sweep over the unsafe slices
/// holding the safe values fixed) with Phase II (value iteration restricted
/// to the safe set), until the safe values stop changing.
pub fn solve_reset_ssp(
    model: &SSPModel,
    levels: BudgetLevels,
    params: SspParams,
) -> Result<ResetSspSolution, SspError> {
    model.check_reset_convention(levels)?;
    let m = model.node_count();
    let target = model.target();
    let b_max = levels.max();
    let safe_flags: Vec<bool> = (0..m).map(|i| model.is_safe(i)).collect();
    let unsafe_nodes: Vec<usize> = (0..m).filter(|&i| !safe_flags[i]).collect();
    let safe_nodes: Vec<usize> = (0..m).filter(|&i| safe_flags[i]).collect();
    let mut table = ExpandedValueTable::reset_from_flags(safe_flags.clone(), levels);
    let mut safe_values = vec![INF; m];
    let mut sweeps_left = params.max_sweeps;
    let mut outer = 0;

    loop {
        outer += 1;

        // Phase I: explicit upward sweep (every unsafe control drops at
        // least one level, so each slice reads only finished data).
        for b in 1..=b_max {
            for &i in &unsafe_nodes {
                let mut best = INF;
                for c in model.controls_at(i) {
                    if c.secondary > b as i64 {
                        continue;
                    }
                    let mut acc = 0.0;
                    for &(j, p) in &c.transitions {
                        let v = if j == target {
                            0.0
                        } else if safe_flags[j] {
                            safe_values[j]
                        } else {
                            table.value(j, (b as i64 - c.secondary) as u32)
                        };
                        if v >= INF {
                            acc = INF;
                            break;
                        }
                        acc += p * v;
                    }
                    if acc < INF {
                        best = best.min(c.primary + acc);
                    }
                }
                table.set(i, b, best);
            }
        }

        // Phase II: value iteration on the safe set only. Warm-start from
        // the previous safe values (an upper bound for the new fixed point).
        let mut vals = vec![0.0; m + 1];
        for i in 0..m {
            vals[i] = if safe_values[i] >= INF {
                CEILING
            } else {
                safe_values[i]
            };
        }
        let mut policy = vec![None; m + 1];
        // Unsafe states are frozen at their current top-slice values.
        for &i in &unsafe_nodes {
            let v = table.value(i, b_max);
            vals[i] = if v >= INF { CEILING } else { v };
        }
        loop {
            if sweeps_left == 0 {
                return Err(SspError::NonConvergence {
                    iterations: params.max_sweeps,
                    residual: INF,
                });
            }
            sweeps_left -= 1;
            let r = bellman_sweep(model, &mut vals, &mut policy, &safe_nodes);
            if r <= params.tolerance {
                break;
            }
        }
        let mut resolved = vals.clone();
        reclassify(&mut resolved);
        resolve_infeasible(model, &mut resolved, &safe_nodes);
        let mut changed = false;
        for &j in &safe_nodes {
            let new = resolved[j];
            let old = safe_values[j];
            let delta = match (old >= INF, new >= INF) {
                (true, true) => 0.0,
                (false, false) => (old - new).abs(),
                _ => INF,
            };
            if delta > params.tolerance {
                changed = true;
            }
            safe_values[j] = new;
            table.set(j, b_max, new);
        }

        if unsafe_nodes.is_empty() || !changed {
            break;
        }
    }
    Ok(ResetSspSolution {
        table,
        outer_iterations: outer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::{solve_no_reset, solve_reset_dijkstra};
    use crate::graph::samples::chain_with_harbors;
    use crate::graph::dijkstra;

    fn geometric_model() -> SSPModel {
        // One node, one control: cost 1, stays with probability 1/2.
        let mut m = SSPModel::new(1);
        m.add_control(
            0,
            Control {
                primary: 1.0,
                secondary: 0,
                transitions: vec![(0, 0.5), (1, 0.5)],
            },
        )
        .unwrap();
        m
    }

    #[test]
    fn value_iteration_geometric_series() {
        let res = value_iteration(&geometric_model(), SspParams::with_tolerance(1e-12)).unwrap();
        assert!((res.values[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn value_iteration_prefers_cheaper_stochastic_control() {
        let mut m = SSPModel::new(1);
        m.add_control(
            0,
            Control {
                primary: 3.0,
                secondary: 0,
                transitions: vec![(1, 1.0)],
            },
        )
        .unwrap();
        m.add_control(
            0,
            Control {
                primary: 1.0,
                secondary: 0,
                transitions: vec![(0, 0.5), (1, 0.5)],
            },
        )
        .unwrap();
        let res = value_iteration(&m, SspParams::with_tolerance(1e-12)).unwrap();
        assert!((res.values[0] - 2.0).abs() < 1e-9);
        assert_eq!(res.policy[0], Some(1));
    }

    #[test]
    fn value_iteration_matches_dijkstra_on_deterministic_model() {
        let g = chain_with_harbors();
        let model = SSPModel::from_graph(&g).unwrap();
        let res = value_iteration(&model, SspParams::with_tolerance(1e-13)).unwrap();
        let u = dijkstra(&g);
        for i in 0..8 {
            assert!((res.values[i] - u[i]).abs() < 1e-9, "node {i}");
        }
    }

    #[test]
    fn residuals_eventually_monotone() {
        let res = value_iteration(&geometric_model(), SspParams::with_tolerance(1e-12)).unwrap();
        let h = &res.residual_history;
        let tail = &h[h.len().min(3) - 1..];
        for w in tail.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
    }

    #[test]
    fn nonconvergence_is_reported() {
        let err = value_iteration(
            &geometric_model(),
            SspParams {
                tolerance: 0.0,
                max_sweeps: 3,
            },
        )
        .unwrap_err();
        match err {
            SspError::NonConvergence { iterations, residual } => {
                assert_eq!(iterations, 3);
                assert!(residual > 0.0);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn budget_ssp_deterministic_matches_no_reset_solver() {
        let g = chain_with_harbors();
        let model = SSPModel::from_graph(&g).unwrap();
        let levels = BudgetLevels::new(3);
        let w = solve_budget_ssp(&model, levels, SspParams::with_tolerance(1e-13)).unwrap();
        let oracle = solve_no_reset(&g, levels).unwrap();
        for i in 0..8 {
            for b in levels.iter() {
                let a = w.value(i, b);
                let e = oracle.value(i, b);
                if e >= INF {
                    assert!(a >= INF, "node {} level {}", i + 1, b);
                } else {
                    assert!((a - e).abs() < 1e-9, "node {} level {}", i + 1, b);
                }
            }
        }
    }

    #[test]
    fn budget_ssp_self_loop_in_unsafe_is_infeasible() {
        // Surviving an unbounded number of unsafe steps with probability one
        // is impossible on a finite budget.
        let mut m = SSPModel::new(1);
        m.add_control(
            0,
            Control {
                primary: 1.0,
                secondary: 1,
                transitions: vec![(0, 0.5), (1, 0.5)],
            },
        )
        .unwrap();
        let levels = BudgetLevels::new(6);
        let w = solve_budget_ssp(&m, levels, SspParams::default()).unwrap();
        for b in levels.iter() {
            assert_eq!(w.value(0, b), INF, "level {b}");
        }
    }

    #[test]
    fn budget_ssp_zero_costs_reduce_to_unconstrained() {
        let mut m = SSPModel::new(2);
        m.add_control(
            0,
            Control {
                primary: 1.0,
                secondary: 0,
                transitions: vec![(1, 0.7), (2, 0.3)],
            },
        )
        .unwrap();
        m.add_control(
            1,
            Control {
                primary: 2.0,
                secondary: 0,
                transitions: vec![(2, 1.0)],
            },
        )
        .unwrap();
        let levels = BudgetLevels::new(4);
        let w = solve_budget_ssp(&m, levels, SspParams::with_tolerance(1e-13)).unwrap();
        let u = value_iteration(&m, SspParams::with_tolerance(1e-13)).unwrap();
        for i in 0..2 {
            for b in levels.iter() {
                assert!((w.value(i, b) - u.values[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn reset_ssp_deterministic_matches_graph_solver() {
        let mut g = chain_with_harbors();
        g.apply_safe_secondary(-3);
        let model = SSPModel::from_graph(&g).unwrap();
        let levels = BudgetLevels::new(3);
        let sol = solve_reset_ssp(&model, levels, SspParams::with_tolerance(1e-13)).unwrap();
        let oracle = solve_reset_dijkstra(&g, levels).unwrap();
        for i in 0..8 {
            for b in levels.iter() {
                let a = sol.table.value(i, b);
                let e = oracle.value(i, b);
                if e >= INF {
                    assert!(a >= INF, "node {} level {}", i + 1, b);
                } else {
                    assert!((a - e).abs() < 1e-9, "node {} level {}", i + 1, b);
                }
            }
        }
    }

    #[test]
    fn reset_ssp_all_safe_is_unconstrained() {
        let mut m = SSPModel::new(2);
        m.set_safe(0, true);
        m.set_safe(1, true);
        let levels = BudgetLevels::new(3);
        m.add_control(
            0,
            Control {
                primary: 1.0,
                secondary: -3,
                transitions: vec![(1, 0.6), (2, 0.4)],
            },
        )
        .unwrap();
        m.add_control(
            1,
            Control {
                primary: 2.0,
                secondary: -3,
                transitions: vec![(2, 1.0)],
            },
        )
        .unwrap();
        let sol = solve_reset_ssp(&m, levels, SspParams::with_tolerance(1e-13)).unwrap();
        assert_eq!(sol.outer_iterations, 1);
        let u = value_iteration(&m, SspParams::with_tolerance(1e-13)).unwrap();
        for i in 0..2 {
            assert!((sol.table.value(i, 3) - u.values[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn reset_ssp_rejects_bad_labeling() {
        let m = geometric_model(); // secondary 0 on an unsafe node
        assert!(matches!(
            solve_reset_ssp(&m, BudgetLevels::new(2), SspParams::default()),
            Err(SspError::ResetConvention { .. })
        ));
    }

    #[test]
    fn model_text_round_trip() {
        let g = chain_with_harbors();
        let model = SSPModel::from_graph(&g).unwrap();
        let levels = BudgetLevels::new(3);
        let text = model.to_text(levels);
        let (model2, levels2) = SSPModel::parse(&text).unwrap();
        assert_eq!(levels2.max(), 3);
        assert_eq!(model2.node_count(), 8);
        let a = value_iteration(&model, SspParams::default()).unwrap();
        let b = value_iteration(&model2, SspParams::default()).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn bad_distribution_rejected() {
        let mut m = SSPModel::new(1);
        let err = m.add_control(
            0,
            Control {
                primary: 1.0,
                secondary: 0,
                transitions: vec![(1, 0.5), (0, 0.4)],
            },
        );
        assert!(matches!(err, Err(SspError::BadDistribution { .. })));
    }
}
