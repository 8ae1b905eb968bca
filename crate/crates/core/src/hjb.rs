//! Semi-Lagrangian kernels for the continuous budget-reset problem: the
//! unconstrained baseline, the minimum-feasible-level solver (with the
//! constrained cost accumulated along its characteristics), and the upward
//! budget-slice sweep.

use crate::eikonal::{fast_marching, Companion, EikonalProblem};
use crate::grid::{bilinear_mixed, BudgetAxis, BudgetField, Grid2D, PointClass, ScalarField};
use crate::{Cost, INF};

/// Golden-section refinement iterations for the direction search; enough to
/// shrink the bracket of width `2 pi / ntheta` below angular noise.
const REFINE_STEPS: usize = 24;
const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Unconstrained baseline: solves `f |grad U| = K` over all non-obstacle
/// gridpoints with the exit costs as Dirichlet data. Boundary points without
/// a finite exit cost stay pinned at `+inf`.
pub fn solve_unconstrained(grid: &Grid2D) -> ScalarField {
    let n = grid.n;
    let mut active = vec![false; n * n];
    let mut sources = Vec::new();
    for idx in 0..n * n {
        let on_ring = {
            let (ix, iy) = grid.coords(idx);
            ix == 0 || iy == 0 || ix == n - 1 || iy == n - 1
        };
        if grid.exit_cost[idx] < INF {
            sources.push((idx, grid.exit_cost[idx]));
        } else if !on_ring && grid.class[idx] != PointClass::Obstacle {
            active[idx] = true;
        }
    }
    fast_marching(
        &EikonalProblem {
            n,
            h: grid.h,
            active: &active,
            speed: &grid.speed,
            rate: &grid.kcost,
            sources: &sources,
        },
        None,
    )
}

/// Minimum feasible level and the constrained cost along its
/// characteristics.
pub struct MflSolution {
    /// `V`: budget needed to reach the reachable safe set through the unsafe
    /// set; zero on the reachable safe set itself, `+inf` elsewhere.
    pub v: ScalarField,
    /// `U~`: primary cost accumulated along the `V`-optimal directions,
    /// seeded with the current safe values.
    pub u_tilde: ScalarField,
}

/// Solves `f |grad V| = K_hat` on the unsafe gridpoints with `V = 0` on the
/// reachable safe set, accumulating `U~` along the accepted characteristics
/// with boundary data `U~ = W2` there.
pub fn solve_mfl(grid: &Grid2D, safe_reachable: &[bool], w2: &ScalarField) -> MflSolution {
    let n = grid.n;
    let mut active = vec![false; n * n];
    let mut sources = Vec::new();
    let mut u_tilde = vec![INF; n * n];
    for idx in 0..n * n {
        match grid.class[idx] {
            PointClass::Unsafe => active[idx] = true,
            PointClass::Safe | PointClass::Boundary => {
                if safe_reachable[idx] && w2.data[idx] < INF {
                    sources.push((idx, 0.0));
                    u_tilde[idx] = w2.data[idx];
                }
            }
            PointClass::Obstacle => {}
        }
    }
    let v = fast_marching(
        &EikonalProblem {
            n,
            h: grid.h,
            active: &active,
            speed: &grid.speed,
            rate: &grid.khat,
            sources: &sources,
        },
        Some(Companion {
            values: &mut u_tilde,
            kcost: &grid.kcost,
        }),
    );
    MflSolution {
        v,
        u_tilde: ScalarField { n, data: u_tilde },
    }
}

/// Semi-Lagrangian cost of moving from gridpoint `idx` in direction
/// `(dx, dy)` for time `tau`, reading the mixed interpolation of the
/// previous budget slice and the safe values. `None` excludes the direction
/// (foot outside the hull or in an obstacle cell).
#[inline]
fn direction_cost(
    grid: &Grid2D,
    w1_prev: &[Cost],
    w2: &[Cost],
    idx: usize,
    x: f64,
    y: f64,
    tau: f64,
    dir: (f64, f64),
) -> Option<Cost> {
    let step = tau * grid.speed[idx];
    let fx = x + step * dir.0;
    let fy = y + step * dir.1;
    let interp = bilinear_mixed(grid, w1_prev, w2, fx, fy)?;
    if interp == INF {
        return Some(INF);
    }
    Some(tau * grid.kcost[idx] + interp)
}

/// Minimizes the semi-Lagrangian expression over `ntheta` uniformly spaced
/// unit directions, optionally refining around the best sample with a
/// golden-section pass of bracket width `2 pi / ntheta`.
pub fn minimize_over_directions(
    grid: &Grid2D,
    w1_prev: &[Cost],
    w2: &[Cost],
    idx: usize,
    tau: f64,
    ntheta: usize,
    refine: bool,
) -> Cost {
    let (ix, iy) = grid.coords(idx);
    let (x, y) = grid.point(ix, iy);
    let eval = |theta: f64| -> Cost {
        let dir = (theta.cos(), theta.sin());
        direction_cost(grid, w1_prev, w2, idx, x, y, tau, dir).unwrap_or(INF)
    };
    let mut best = INF;
    let mut best_theta = 0.0;
    let dtheta = std::f64::consts::TAU / ntheta as f64;
    for k in 0..ntheta {
        let theta = k as f64 * dtheta;
        let v = eval(theta);
        if v < best {
            best = v;
            best_theta = theta;
        }
    }
    if !refine || best == INF {
        return best;
    }
    // Golden-section pass around the best sample.
    let (mut lo, mut hi) = (best_theta - dtheta, best_theta + dtheta);
    let mut m1 = hi - GOLDEN * (hi - lo);
    let mut m2 = lo + GOLDEN * (hi - lo);
    let (mut f1, mut f2) = (eval(m1), eval(m2));
    for _ in 0..REFINE_STEPS {
        if f1 <= f2 {
            hi = m2;
            m2 = m1;
            f2 = f1;
            m1 = hi - GOLDEN * (hi - lo);
            f1 = eval(m1);
        } else {
            lo = m1;
            m1 = m2;
            f1 = f2;
            m2 = lo + GOLDEN * (hi - lo);
            f2 = eval(m2);
        }
    }
    best.min(f1).min(f2)
}

/// Statistics from one upward sweep of the budget slices.
pub struct SweepStats {
    /// Sup-norm change against the previous iterate (infinite when a state
    /// switched between finite and infinite).
    pub change: f64,
    /// Largest pointwise increase over the previous iterate (monotone
    /// iterations keep this at rounding scale).
    pub increase: f64,
}

/// Phase I of the alternating scheme: fills the unsafe budget slices bottom
/// to top. At each unsafe gridpoint the first level at or above `V` seeds
/// with `U~`; above that, the value either copies the unconstrained
/// baseline once the previous level reached it, or minimizes the
/// semi-Lagrangian expression over sampled directions with `tau = db /
/// K_hat`. Values are clamped monotone in the budget (having more budget
/// never hurts). Updates `w1` in place and reports change statistics.
#[allow(clippy::too_many_arguments)]
pub fn sweep_budget_slices(
    grid: &Grid2D,
    axis: &BudgetAxis,
    w2_prev: &ScalarField,
    v: &ScalarField,
    u_tilde: &ScalarField,
    u_base: &ScalarField,
    ntheta: usize,
    w1: &mut BudgetField,
) -> SweepStats {
    let n = grid.n;
    let nn = n * n;
    debug_assert_eq!(w1.n_levels, axis.n_levels);
    let unsafe_points: Vec<usize> = (0..nn)
        .filter(|&i| grid.class[i] == PointClass::Unsafe)
        .collect();
    // First feasible level per point.
    let seed_level: Vec<usize> = (0..nn)
        .map(|i| {
            if v.data[i] < INF {
                axis.level_above(v.data[i])
            } else {
                usize::MAX
            }
        })
        .collect();
    let mut change = 0.0f64;
    let mut increase = 0.0f64;
    let mut track = |old: Cost, new: Cost| {
        match (old == INF, new == INF) {
            (true, true) => {}
            (false, false) => {
                change = change.max((old - new).abs());
                increase = increase.max(new - old);
            }
            (true, false) => change = INF,
            (false, true) => {
                change = INF;
                increase = INF;
            }
        };
    };
    for j in 1..axis.n_levels {
        let (lower, upper) = w1.data.split_at_mut(j * nn);
        let prev = &lower[(j - 1) * nn..];
        let cur = &mut upper[..nn];
        for &idx in &unsafe_points {
            let j0 = seed_level[idx];
            let old = cur[idx];
            let new = if j0 == usize::MAX || j < j0 {
                INF
            } else if j == j0 {
                u_tilde.data[idx]
            } else if prev[idx] == u_base.data[idx] {
                u_base.data[idx]
            } else {
                let tau = axis.db / grid.khat[idx];
                let m = minimize_over_directions(
                    grid,
                    prev,
                    &w2_prev.data,
                    idx,
                    tau,
                    ntheta,
                    true,
                );
                // Budget monotonicity: extra budget can always be ignored.
                m.min(prev[idx])
            };
            track(old, new);
            cur[idx] = new;
        }
    }
    SweepStats { change, increase }
}
