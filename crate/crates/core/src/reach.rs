//! Reachability on the original (non-extended) state space: alternates the
//! minimum-feasible-level solve with a componentwise minimum over the safe
//! set, growing the reachable region without ever allocating a budget axis.

use std::fmt::Write as _;

use thiserror::Error;

use crate::eikonal::{fast_marching, EikonalProblem};
use crate::grid::{rasterize_scenario, Grid2D, GridError, PointClass, ScalarField, ScenarioConfig};
use crate::INF;

#[derive(Debug, Error)]
pub enum ReachError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("reachability did not stabilize after {0} iterations")]
    NoConvergence(usize),
}

/// Result of the reachability algorithm.
pub struct ReachSolution {
    pub grid: Grid2D,
    /// Minimum starting budget on the unsafe set (`+inf` when unreachable).
    pub v: ScalarField,
    /// Componentwise auxiliary values on the safe set: finite exactly on the
    /// reachable part.
    pub g: ScalarField,
    pub iterations: usize,
    /// Reachable safe component count per iteration.
    pub component_counts: Vec<usize>,
}

impl ReachSolution {
    /// `true` where the extended state `(x, b)` is reachable.
    pub fn reachable(&self, idx: usize, b: f64) -> bool {
        if self.grid.is_safe_side(idx) {
            self.g.data[idx] < INF
        } else {
            self.v.data[idx] <= b + 1e-12
        }
    }

    pub fn counts_csv(&self) -> String {
        let mut out = String::from("k,reachable_components\n");
        for (k, c) in self.component_counts.iter().enumerate() {
            let _ = writeln!(out, "{},{}", k + 1, c);
        }
        out
    }

    /// Reachable mask at full budget as CSV rows `ix,iy,reachable`.
    pub fn mask_csv(&self, b: f64) -> String {
        let n = self.grid.n;
        let mut out = String::from("ix,iy,reachable\n");
        for iy in 0..n {
            for ix in 0..n {
                let idx = iy * n + ix;
                let r = self.reachable(idx, b);
                let _ = writeln!(out, "{ix},{iy},{}", u8::from(r));
            }
        }
        out
    }
}

/// Labels the 4-connected components of the non-ring safe gridpoints and
/// assigns each component the minimum of its interface data: zero when the
/// component contains a gridpoint with a finite exit cost, otherwise the
/// smallest `v` among adjacent unsafe gridpoints that is within the budget,
/// otherwise `+inf`. Ring gridpoints are pinned to their exit cost (the
/// domain boundary is absorbing, so it never relays reachability).
pub fn propagate_safe_component_min(grid: &Grid2D, v: &ScalarField, b_max: f64) -> ScalarField {
    let n = grid.n;
    let nn = n * n;
    let mut g = ScalarField::constant(n, INF);
    let on_ring = |idx: usize| {
        let (ix, iy) = grid.coords(idx);
        ix == 0 || iy == 0 || ix == n - 1 || iy == n - 1
    };
    for idx in 0..nn {
        if on_ring(idx) {
            g.data[idx] = grid.exit_cost[idx];
        }
    }
    let member = |idx: usize| grid.class[idx] == PointClass::Safe && !on_ring(idx);
    let mut label = vec![usize::MAX; nn];
    let mut components: Vec<Vec<usize>> = Vec::new();
    for start in 0..nn {
        if !member(start) || label[start] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut stack = vec![start];
        let mut cells = Vec::new();
        label[start] = id;
        while let Some(idx) = stack.pop() {
            cells.push(idx);
            for nb in grid.neighbors4(idx) {
                if member(nb) && label[nb] == usize::MAX {
                    label[nb] = id;
                    stack.push(nb);
                }
            }
        }
        components.push(cells);
    }
    for cells in &components {
        let mut best = INF;
        for &idx in cells {
            if grid.exit_cost[idx] < INF {
                best = 0.0;
                break;
            }
            for nb in grid.neighbors4(idx) {
                if grid.class[nb] == PointClass::Unsafe {
                    let vv = v.data[nb];
                    if vv <= b_max + 1e-12 && vv < best {
                        best = vv;
                    }
                }
            }
        }
        for &idx in cells {
            g.data[idx] = best;
        }
    }
    g
}

/// Computes the reachable set `{(x, b) : v(x) <= b}` by alternating the
/// minimum-feasible-level solve with the safe-component propagation, without
/// allocating anything sized by the budget discretization.
pub fn solve_reachability(config: &ScenarioConfig) -> Result<ReachSolution, ReachError> {
    let (grid, _axis) = rasterize_scenario(config)?;
    solve_reachability_on(grid, config.budget, config.max_iters)
}

/// Reachability on a rasterized grid.
pub fn solve_reachability_on(
    grid: Grid2D,
    b_max: f64,
    max_iters: usize,
) -> Result<ReachSolution, ReachError> {
    let n = grid.n;
    let nn = n * n;
    // Initial data: only gridpoints with a finite exit cost are reachable.
    let mut g = ScalarField::constant(n, INF);
    for idx in 0..nn {
        if grid.exit_cost[idx] < INF {
            g.data[idx] = 0.0;
        }
    }
    let mut v = ScalarField::constant(n, INF);
    let mut counts = Vec::new();

    let active: Vec<bool> = (0..nn)
        .map(|i| grid.class[i] == PointClass::Unsafe)
        .collect();
    for k in 1..=max_iters {
        // Minimum feasible level from the current reachable safe set.
        let mut sources = Vec::new();
        for idx in 0..nn {
            if grid.is_safe_side(idx) && g.data[idx] < INF {
                sources.push((idx, 0.0));
            }
        }
        let new_v = fast_marching(
            &EikonalProblem {
                n,
                h: grid.h,
                active: &active,
                speed: &grid.speed,
                rate: &grid.khat,
                sources: &sources,
            },
            None,
        );
        let new_g = propagate_safe_component_min(&grid, &new_v, b_max);
        // With no unsafe points the interface data is empty and one pass is
        // already the fixed point.
        let stable = (new_v.data == v.data && new_g.data == g.data)
            || active.iter().all(|&a| !a);
        v = new_v;
        g = new_g;
        counts.push(reachable_component_count(&grid, &g));
        if stable {
            return Ok(ReachSolution {
                grid,
                v,
                g,
                iterations: k,
                component_counts: counts,
            });
        }
    }
    Err(ReachError::NoConvergence(max_iters))
}

/// Number of distinct reachable non-ring safe components.
fn reachable_component_count(grid: &Grid2D, g: &ScalarField) -> usize {
    let n = grid.n;
    let nn = n * n;
    let on_ring = |idx: usize| {
        let (ix, iy) = grid.coords(idx);
        ix == 0 || iy == 0 || ix == n - 1 || iy == n - 1
    };
    let member =
        |idx: usize| grid.class[idx] == PointClass::Safe && !on_ring(idx) && g.data[idx] < INF;
    let mut seen = vec![false; nn];
    let mut count = 0;
    for start in 0..nn {
        if !member(start) || seen[start] {
            continue;
        }
        count += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(idx) = stack.pop() {
            for nb in grid.neighbors4(idx) {
                if member(nb) && !seen[nb] {
                    seen[nb] = true;
                    stack.push(nb);
                }
            }
        }
    }
    count
}
