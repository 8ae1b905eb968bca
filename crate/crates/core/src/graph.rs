//! Directed-graph model, expanded-graph construction, and the base Dijkstra
//! label-setting solver shared by all discrete algorithms.
//!
//! Nodes are indexed `0..M` with the absorbing target as node `M`. Each arc
//! carries a nonnegative primary cost and an integer secondary (resource)
//! cost. In the safe/unsafe convention the secondary costs are derived from
//! the node labels: `0` (no-reset) or `-B` (reset) out of safe nodes, and
//! `>= 1` out of unsafe nodes.

use std::fmt::Write as _;

use thiserror::Error;

use crate::heap::{MinEntry, MinHeap};
use crate::{Cost, INF};

/// Left-associative capped subtraction on budget levels: `min(alpha - beta, cap)`.
///
/// Resources in excess of the cap are not accumulated, so folding this over a
/// path's secondary costs gives the remaining budget along the path.
pub fn ominus(alpha: i64, beta: i64, cap: i64) -> i64 {
    (alpha - beta).min(cap)
}

/// One outgoing arc.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Arc {
    pub to: usize,
    /// Primary cost, `>= 0`.
    pub primary: Cost,
    /// Secondary (resource) cost, integer by convention.
    pub secondary: i64,
}

/// Errors from graph construction, validation, and parsing.
#[derive(Debug, Error)]
pub enum GraphError {
    #[error("arc {from}->{to} has negative primary cost {cost}")]
    NegativePrimaryCost { from: usize, to: usize, cost: f64 },
    #[error("arc endpoint {0} out of range (node count {1})")]
    NodeOutOfRange(usize, usize),
    #[error("target must be absorbing but node {0} has outgoing arcs")]
    TargetNotAbsorbing(usize),
    #[error(
        "arc {from}->{to} violates the {mode} secondary-cost convention \
         (safe source expects {expected}, got {got})"
    )]
    SecondaryConvention {
        from: usize,
        to: usize,
        mode: &'static str,
        expected: String,
        got: i64,
    },
    #[error("parse error: {0}")]
    Parse(String),
}

/// Directed graph with per-arc primary/secondary costs, safe/unsafe node
/// labels, and an absorbing target node `M` (the last node).
#[derive(Clone, Debug)]
pub struct DirectedGraph {
    /// Number of regular nodes; the target is node `node_count`.
    node_count: usize,
    arcs: Vec<Vec<Arc>>,
    safe: Vec<bool>,
}

impl DirectedGraph {
    /// Creates a graph with `node_count` regular nodes (all unsafe) and the
    /// absorbing target as node `node_count`.
    pub fn new(node_count: usize) -> Self {
        DirectedGraph {
            node_count,
            arcs: vec![Vec::new(); node_count + 1],
            safe: vec![false; node_count],
        }
    }

    /// Number of regular (non-target) nodes.
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Index of the absorbing target node.
    pub fn target(&self) -> usize {
        self.node_count
    }

    /// Adds an arc. The target must stay absorbing.
    pub fn add_arc(
        &mut self,
        from: usize,
        to: usize,
        primary: Cost,
        secondary: i64,
    ) -> Result<(), GraphError> {
        if from >= self.node_count + 1 || to >= self.node_count + 1 {
            return Err(GraphError::NodeOutOfRange(
                from.max(to),
                self.node_count + 1,
            ));
        }
        if from == self.target() {
            return Err(GraphError::TargetNotAbsorbing(from));
        }
        if !(primary >= 0.0) {
            return Err(GraphError::NegativePrimaryCost {
                from,
                to,
                cost: primary,
            });
        }
        self.arcs[from].push(Arc {
            to,
            primary,
            secondary,
        });
        Ok(())
    }

    pub fn set_safe(&mut self, node: usize, safe: bool) {
        self.safe[node] = safe;
    }

    pub fn is_safe(&self, node: usize) -> bool {
        node < self.node_count && self.safe[node]
    }

    pub fn arcs_from(&self, node: usize) -> &[Arc] {
        &self.arcs[node]
    }

    /// Sparsity bound `kappa`: the maximum out-degree.
    pub fn kappa(&self) -> usize {
        self.arcs.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Safe node indices in increasing order.
    pub fn safe_nodes(&self) -> Vec<usize> {
        (0..self.node_count).filter(|&i| self.safe[i]).collect()
    }

    /// Unsafe node indices in increasing order.
    pub fn unsafe_nodes(&self) -> Vec<usize> {
        (0..self.node_count).filter(|&i| !self.safe[i]).collect()
    }

    /// Rewrites every secondary cost to the safe/unsafe convention:
    /// `reset_cost` out of safe nodes (0 for no-reset, `-B` for reset) and
    /// leaves unsafe-source arcs untouched.
    pub fn apply_safe_secondary(&mut self, reset_cost: i64) {
        for i in 0..self.node_count {
            if self.safe[i] {
                for a in &mut self.arcs[i] {
                    a.secondary = reset_cost;
                }
            }
        }
    }

    /// Checks the safe/unsafe secondary-cost convention. `reset` selects
    /// between the `c = -B` (reset) and `c = 0` (no-reset) safe-arc rules;
    /// unsafe arcs must have `c >= 1` in both.
    pub fn check_safe_convention(&self, levels: BudgetLevels, reset: bool) -> Result<(), GraphError> {
        let mode = if reset { "reset" } else { "no-reset" };
        for i in 0..self.node_count {
            for a in &self.arcs[i] {
                let ok = if self.safe[i] {
                    if reset {
                        a.secondary == -(levels.max() as i64)
                    } else {
                        a.secondary == 0
                    }
                } else {
                    a.secondary >= 1
                };
                if !ok {
                    let expected = if self.safe[i] {
                        if reset {
                            format!("{}", -(levels.max() as i64))
                        } else {
                            "0".to_string()
                        }
                    } else {
                        ">= 1".to_string()
                    };
                    return Err(GraphError::SecondaryConvention {
                        from: i,
                        to: a.to,
                        mode,
                        expected,
                        got: a.secondary,
                    });
                }
            }
        }
        Ok(())
    }

    /// Reverse adjacency: for each node, the list of `(source, arc)` pairs
    /// of arcs pointing at it.
    pub(crate) fn reverse_arcs(&self) -> Vec<Vec<(usize, Arc)>> {
        let mut rev = vec![Vec::new(); self.node_count + 1];
        for i in 0..self.node_count {
            for &a in &self.arcs[i] {
                rev[a.to].push((i, a));
            }
        }
        rev
    }

    /// Parses the graph text format: a header `M target B`, one line per arc
    /// `i j C c`, and a final line listing the safe node indices (possibly
    /// empty). Node indices are 1-based in the file; the target is `M+1`.
    pub fn parse(text: &str) -> Result<(Self, BudgetLevels), GraphError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() || true);
        let header = lines
            .next()
            .ok_or_else(|| GraphError::Parse("empty file".into()))?;
        let head: Vec<&str> = header.split_whitespace().collect();
        if head.len() != 3 {
            return Err(GraphError::Parse(format!(
                "header must be 'M target B', got '{header}'"
            )));
        }
        let m: usize = head[0]
            .parse()
            .map_err(|e| GraphError::Parse(format!("bad node count: {e}")))?;
        let target: usize = head[1]
            .parse()
            .map_err(|e| GraphError::Parse(format!("bad target index: {e}")))?;
        if target != m + 1 {
            return Err(GraphError::Parse(format!(
                "target index must be M+1 = {}, got {target}",
                m + 1
            )));
        }
        let b: u32 = head[2]
            .parse()
            .map_err(|e| GraphError::Parse(format!("bad budget: {e}")))?;
        let mut g = DirectedGraph::new(m);
        let mut rest: Vec<&str> = lines.collect();
        // The last line is the safe list; everything before it is an arc.
        let safe_line = rest.pop().unwrap_or("");
        for line in rest {
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.is_empty() {
                continue;
            }
            if t.len() != 4 {
                return Err(GraphError::Parse(format!("bad arc line '{line}'")));
            }
            let i: usize = t[0]
                .parse()
                .map_err(|e| GraphError::Parse(format!("bad arc source: {e}")))?;
            let j: usize = t[1]
                .parse()
                .map_err(|e| GraphError::Parse(format!("bad arc destination: {e}")))?;
            let c: f64 = t[2]
                .parse()
                .map_err(|e| GraphError::Parse(format!("bad primary cost: {e}")))?;
            let c2: i64 = t[3]
                .parse()
                .map_err(|e| GraphError::Parse(format!("bad secondary cost: {e}")))?;
            if i == 0 || j == 0 || i > m + 1 || j > m + 1 {
                return Err(GraphError::Parse(format!(
                    "arc index out of range in '{line}'"
                )));
            }
            g.add_arc(i - 1, j - 1, c, c2)?;
        }
        for t in safe_line.split_whitespace() {
            let i: usize = t
                .parse()
                .map_err(|e| GraphError::Parse(format!("bad safe index: {e}")))?;
            if i == 0 || i > m {
                return Err(GraphError::Parse(format!("safe index {i} out of range")));
            }
            g.set_safe(i - 1, true);
        }
        Ok((g, BudgetLevels::new(b)))
    }

    /// Serializes to the text format accepted by [`DirectedGraph::parse`].
    pub fn to_text(&self, levels: BudgetLevels) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {} {}",
            self.node_count,
            self.node_count + 1,
            levels.max()
        );
        for i in 0..self.node_count {
            for a in &self.arcs[i] {
                let _ = writeln!(out, "{} {} {} {}", i + 1, a.to + 1, a.primary, a.secondary);
            }
        }
        let safe: Vec<String> = self.safe_nodes().iter().map(|i| (i + 1).to_string()).collect();
        let _ = writeln!(out, "{}", safe.join(" "));
        out
    }
}

/// Budget levels `{0, ..., B}`.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct BudgetLevels {
    max: u32,
}

impl BudgetLevels {
    pub fn new(max: u32) -> Self {
        BudgetLevels { max }
    }

    /// Maximum budget `B`.
    pub fn max(&self) -> u32 {
        self.max
    }

    pub fn count(&self) -> usize {
        self.max as usize + 1
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> {
        0..=self.max
    }
}

/// How (node, level) values are stored.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum TableLayout {
    /// Every node carries all `B+1` levels.
    Full,
    /// Safe nodes carry a single value (budget pinned at `B`); unsafe nodes
    /// carry levels `1..=B` (level 0 is identically infinite).
    Reset,
}

/// Value table `W` over (node, budget level) with the `+inf` sentinel.
#[derive(Clone, Debug)]
pub struct ExpandedValueTable {
    layout: TableLayout,
    levels: BudgetLevels,
    node_count: usize,
    safe: Vec<bool>,
    /// `Full`: `node * (B+1) + b`. `Reset`: safe block then unsafe block.
    values: Vec<Cost>,
    safe_rank: Vec<usize>,
    unsafe_rank: Vec<usize>,
    n_safe: usize,
}

impl ExpandedValueTable {
    pub fn new_full(graph: &DirectedGraph, levels: BudgetLevels) -> Self {
        let m = graph.node_count();
        Self::full_from_flags((0..m).map(|i| graph.is_safe(i)).collect(), levels)
    }

    pub fn new_reset(graph: &DirectedGraph, levels: BudgetLevels) -> Self {
        let m = graph.node_count();
        Self::reset_from_flags((0..m).map(|i| graph.is_safe(i)).collect(), levels)
    }

    /// Full layout from raw safe flags (one per regular node).
    pub fn full_from_flags(safe: Vec<bool>, levels: BudgetLevels) -> Self {
        let m = safe.len();
        ExpandedValueTable {
            layout: TableLayout::Full,
            levels,
            node_count: m,
            safe,
            values: vec![INF; m * levels.count()],
            safe_rank: Vec::new(),
            unsafe_rank: Vec::new(),
            n_safe: 0,
        }
    }

    /// Reset layout from raw safe flags (one per regular node).
    pub fn reset_from_flags(safe: Vec<bool>, levels: BudgetLevels) -> Self {
        let m = safe.len();
        let mut safe_rank = vec![usize::MAX; m];
        let mut unsafe_rank = vec![usize::MAX; m];
        let mut ns = 0;
        let mut nu = 0;
        for i in 0..m {
            if safe[i] {
                safe_rank[i] = ns;
                ns += 1;
            } else {
                unsafe_rank[i] = nu;
                nu += 1;
            }
        }
        ExpandedValueTable {
            layout: TableLayout::Reset,
            levels,
            node_count: m,
            safe,
            values: vec![INF; ns + nu * levels.max() as usize],
            safe_rank,
            unsafe_rank,
            n_safe: ns,
        }
    }

    pub fn layout(&self) -> TableLayout {
        self.layout
    }

    pub fn levels(&self) -> BudgetLevels {
        self.levels
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    fn slot(&self, node: usize, b: u32) -> Option<usize> {
        match self.layout {
            TableLayout::Full => Some(node * self.levels.count() + b as usize),
            TableLayout::Reset => {
                if self.safe[node] {
                    Some(self.safe_rank[node])
                } else if b >= 1 {
                    Some(self.n_safe + self.unsafe_rank[node] * self.levels.max() as usize
                        + (b as usize - 1))
                } else {
                    None
                }
            }
        }
    }

    /// `W` at (node, level). In the reset layout safe nodes always carry
    /// budget `B`, so their single stored value is returned for any `b`;
    /// unsafe nodes at level 0 are identically `+inf`.
    pub fn value(&self, node: usize, b: u32) -> Cost {
        match self.slot(node, b) {
            Some(s) => self.values[s],
            None => INF,
        }
    }

    pub fn set(&mut self, node: usize, b: u32, v: Cost) {
        if let Some(s) = self.slot(node, b) {
            self.values[s] = v;
        } else {
            debug_assert!(v == INF, "cannot store a finite value at an omitted slot");
        }
    }

    /// Checks `b1 <= b2  =>  W(i, b1) >= W(i, b2)` over all nodes.
    pub fn is_monotone_in_b(&self) -> bool {
        for i in 0..self.node_count {
            let mut prev = self.value(i, 0);
            for b in 1..=self.levels.max() {
                let cur = self.value(i, b);
                if cur > prev {
                    return false;
                }
                prev = cur;
            }
        }
        true
    }

    /// Emits `node level value` triples (1-based node indices, `inf` for
    /// unreachable states).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for i in 0..self.node_count {
            for b in self.levels.iter() {
                let v = self.value(i, b);
                if v == INF {
                    let _ = writeln!(out, "{} {} inf", i + 1, b);
                } else {
                    let _ = writeln!(out, "{} {} {}", i + 1, b, v);
                }
            }
        }
        out
    }
}

/// Expanded graph over (node, level) states with a single shared target.
#[derive(Clone, Debug)]
pub struct ExpandedGraph {
    /// Forward arcs with primary costs.
    pub fwd: Vec<Vec<(usize, Cost)>>,
    pub target: usize,
    pub n_nodes: usize,
    layout: TableLayout,
    levels: BudgetLevels,
    base_nodes: usize,
    index_of: IndexMap,
}

#[derive(Clone, Debug)]
enum IndexMap {
    Full,
    Reset {
        safe_rank: Vec<usize>,
        unsafe_rank: Vec<usize>,
        n_safe: usize,
    },
}

impl ExpandedGraph {
    /// Expanded index of (node, level), if that state is stored.
    pub fn index(&self, node: usize, b: u32) -> Option<usize> {
        match &self.index_of {
            IndexMap::Full => Some(node * self.levels.count() + b as usize),
            IndexMap::Reset {
                safe_rank,
                unsafe_rank,
                n_safe,
            } => {
                if safe_rank[node] != usize::MAX {
                    Some(safe_rank[node])
                } else if b >= 1 {
                    Some(n_safe + unsafe_rank[node] * self.levels.max() as usize + (b as usize - 1))
                } else {
                    None
                }
            }
        }
    }

    /// Copies a per-expanded-node value array into a value table.
    pub fn to_table(&self, graph: &DirectedGraph, values: &[Cost]) -> ExpandedValueTable {
        let mut table = match self.layout {
            TableLayout::Full => ExpandedValueTable::new_full(graph, self.levels),
            TableLayout::Reset => ExpandedValueTable::new_reset(graph, self.levels),
        };
        for i in 0..self.base_nodes {
            for b in self.levels.iter() {
                if let Some(s) = self.index(i, b) {
                    table.set(i, b, values[s]);
                }
            }
        }
        table
    }
}

/// Builds the expanded adjacency structure over (node, level) states.
///
/// With `reset = false` every node gets `B+1` copies and a transition
/// `(i, b) -> (j, b (-) c_ij)` exists whenever `c_ij <= b`. With
/// `reset = true` the graph must follow the reset convention; safe nodes
/// appear once (budget pinned at `B`) and the structure has
/// `|S| + B |U| + 1` nodes. A single target is shared by all slices.
pub fn build_expanded_graph(
    graph: &DirectedGraph,
    levels: BudgetLevels,
    reset: bool,
) -> Result<ExpandedGraph, GraphError> {
    let m = graph.node_count();
    let t = graph.target();
    let cap = levels.max() as i64;
    if reset {
        graph.check_safe_convention(levels, true)?;
        let mut safe_rank = vec![usize::MAX; m];
        let mut unsafe_rank = vec![usize::MAX; m];
        let (mut ns, mut nu) = (0, 0);
        for i in 0..m {
            if graph.is_safe(i) {
                safe_rank[i] = ns;
                ns += 1;
            } else {
                unsafe_rank[i] = nu;
                nu += 1;
            }
        }
        let n_nodes = ns + nu * levels.max() as usize + 1;
        let target = n_nodes - 1;
        let mut g = ExpandedGraph {
            fwd: vec![Vec::new(); n_nodes],
            target,
            n_nodes,
            layout: TableLayout::Reset,
            levels,
            base_nodes: m,
            index_of: IndexMap::Reset {
                safe_rank: safe_rank.clone(),
                unsafe_rank: unsafe_rank.clone(),
                n_safe: ns,
            },
        };
        for i in 0..m {
            if graph.is_safe(i) {
                // Departures from safe nodes restore the budget to B.
                let from = safe_rank[i];
                for a in graph.arcs_from(i) {
                    let to = if a.to == t {
                        target
                    } else {
                        g.index(a.to, levels.max()).unwrap()
                    };
                    g.fwd[from].push((to, a.primary));
                }
            } else {
                for b in 1..=levels.max() {
                    let from = g.index(i, b).unwrap();
                    for a in graph.arcs_from(i) {
                        if a.secondary > b as i64 {
                            continue;
                        }
                        let to = if a.to == t {
                            Some(target)
                        } else if graph.is_safe(a.to) {
                            Some(safe_rank[a.to])
                        } else {
                            let nb = ominus(b as i64, a.secondary, cap);
                            // Unsafe level-0 states have no departures and
                            // never reach the target; omit them.
                            if nb >= 1 {
                                g.index(a.to, nb as u32)
                            } else {
                                None
                            }
                        };
                        if let Some(to) = to {
                            g.fwd[from].push((to, a.primary));
                        }
                    }
                }
            }
        }
        Ok(g)
    } else {
        let n_nodes = m * levels.count() + 1;
        let target = n_nodes - 1;
        let mut g = ExpandedGraph {
            fwd: vec![Vec::new(); n_nodes],
            target,
            n_nodes,
            layout: TableLayout::Full,
            levels,
            base_nodes: m,
            index_of: IndexMap::Full,
        };
        for i in 0..m {
            for b in levels.iter() {
                let from = g.index(i, b).unwrap();
                for a in graph.arcs_from(i) {
                    if a.secondary > b as i64 {
                        continue;
                    }
                    let to = if a.to == t {
                        target
                    } else {
                        let nb = ominus(b as i64, a.secondary, cap);
                        g.index(a.to, nb as u32).unwrap()
                    };
                    g.fwd[from].push((to, a.primary));
                }
            }
        }
        Ok(g)
    }
}

/// Dijkstra on the reversed arcs from a set of frozen sources.
///
/// `values[s]` must hold the source values; everything else should be `+inf`.
/// After the call `values[i] = min over arcs (i -> j) of cost + values[j]`
/// for every node that reaches a source.
pub(crate) fn dijkstra_to_sources(rev: &[Vec<(usize, Cost)>], values: &mut [Cost]) {
    let mut heap = MinHeap::new();
    for (i, &v) in values.iter().enumerate() {
        if v < INF {
            heap.push(MinEntry { key: v, id: i });
        }
    }
    while let Some(MinEntry { key, id }) = heap.pop() {
        if key > values[id] {
            continue;
        }
        for &(src, cost) in &rev[id] {
            let cand = key + cost;
            if cand < values[src] {
                values[src] = cand;
                heap.push(MinEntry {
                    key: cand,
                    id: src,
                });
            }
        }
    }
}

/// Solves the primary shortest-path system: `U_i = min_j { C_ij + U_j }`
/// with `U_t = 0`, by binary-heap label setting. Unreachable nodes get
/// `+inf`. The returned array has `M+1` entries (the target last).
pub fn dijkstra(graph: &DirectedGraph) -> Vec<Cost> {
    let rev_full = graph.reverse_arcs();
    let rev: Vec<Vec<(usize, Cost)>> = rev_full
        .iter()
        .map(|v| v.iter().map(|&(src, a)| (src, a.primary)).collect())
        .collect();
    let mut values = vec![INF; graph.node_count() + 1];
    values[graph.target()] = 0.0;
    dijkstra_to_sources(&rev, &mut values);
    values
}

/// Dijkstra over an expanded graph from its shared target; returns one value
/// per expanded node.
pub fn dijkstra_expanded(g: &ExpandedGraph) -> Vec<Cost> {
    let mut rev = vec![Vec::new(); g.n_nodes];
    for from in 0..g.n_nodes {
        for &(to, cost) in &g.fwd[from] {
            rev[to].push((from, cost));
        }
    }
    let mut values = vec![INF; g.n_nodes];
    values[g.target] = 0.0;
    dijkstra_to_sources(&rev, &mut values);
    values
}

/// Sample graphs used in tests, benchmarks, and the documentation.
pub mod samples {
    use super::DirectedGraph;

    /// An 8-node chain with safe harbors at nodes 1, 2, and 7 (1-based),
    /// two dashed shortcut arcs and one long dotted arc. Secondary costs
    /// follow the safe/unsafe convention with `c = 1` out of unsafe nodes;
    /// call [`DirectedGraph::apply_safe_secondary`] with `-B` to switch the
    /// safe arcs to reset mode.
    pub fn chain_with_harbors() -> DirectedGraph {
        let mut g = DirectedGraph::new(8);
        for i in [0usize, 1, 6] {
            g.set_safe(i, true);
        }
        let arcs: &[(usize, usize, f64)] = &[
            (1, 2, 1.0),
            (1, 6, 7.0),
            (2, 3, 1.0),
            (2, 1, 1.0),
            (3, 4, 1.0),
            (3, 2, 1.0),
            (3, 6, 4.0),
            (4, 5, 1.0),
            (4, 3, 1.0),
            (5, 6, 1.0),
            (5, 8, 4.0),
            (6, 7, 1.0),
            (7, 8, 1.0),
            (8, 9, 1.0),
        ];
        for &(i, j, c) in arcs {
            let sec = if g.is_safe(i - 1) { 0 } else { 1 };
            g.add_arc(i - 1, j - 1, c, sec).unwrap();
        }
        g
    }
}
