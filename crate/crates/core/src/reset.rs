//! The alternating solver for the continuous budget-reset problem: Phase I
//! sweeps the budget slices on the unsafe set, Phase II solves the safe-set
//! eikonal problem with the interface compatibility data, and the outer loop
//! repeats until both fields stop changing. Also hosts optimal-path
//! extraction and the infinity-aware convergence metric.

use std::fmt::Write as _;

use thiserror::Error;

use crate::eikonal::{fast_marching, EikonalProblem};
use crate::grid::{
    bilinear_mixed, rasterize_scenario, BudgetAxis, BudgetField, Grid2D, GridError, PointClass,
    ScalarField, ScenarioConfig,
};
use crate::hjb::{solve_mfl, solve_unconstrained, sweep_budget_slices};
use crate::{Cost, INF};

#[derive(Debug, Error)]
pub enum ResetError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("no convergence after {iterations} outer iterations (last changes {dw1:e}, {dw2:e})")]
    NoConvergence {
        iterations: usize,
        dw1: f64,
        dw2: f64,
    },
    #[error("field shapes differ: {0} vs {1} values")]
    ShapeMismatch(usize, usize),
    #[error("start state ({x}, {y}, b = {b}) has no finite value")]
    InfeasibleStart { x: f64, y: f64, b: f64 },
    #[error("path extraction exceeded the travel-time cap {cap}")]
    ExtractionFailed { cap: f64 },
}

/// One outer iteration record.
#[derive(Clone, Debug)]
pub struct IterationRow {
    pub k: usize,
    /// Sup-norm change of the budget field against the previous iterate.
    pub dw1: f64,
    /// Sup-norm change of the safe-set field.
    pub dw2: f64,
    /// Reachable safe gridpoints after Phase II.
    pub safe_reachable: usize,
    /// Unsafe gridpoints with a feasible starting level this iteration.
    pub unsafe_reachable: usize,
    /// Largest pointwise increases (monotonicity diagnostics).
    pub w1_increase: f64,
    pub w2_increase: f64,
    pub v_increase: f64,
}

/// Convergence log of the outer loop.
#[derive(Clone, Debug, Default)]
pub struct IterationLog {
    pub rows: Vec<IterationRow>,
    /// Safe-field snapshots per iteration when requested.
    pub w2_snapshots: Vec<ScalarField>,
}

impl IterationLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "k,dw1,dw2,safe_reachable,unsafe_reachable,w1_increase,w2_increase,v_increase\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.k,
                r.dw1,
                r.dw2,
                r.safe_reachable,
                r.unsafe_reachable,
                r.w1_increase,
                r.w2_increase,
                r.v_increase
            );
        }
        out
    }
}

/// Solution of the budget-reset problem.
pub struct BudgetResetSolution {
    pub grid: Grid2D,
    pub axis: BudgetAxis,
    /// Values on the unsafe set per budget level.
    pub w1: BudgetField,
    /// Values on the safe set (budget pinned at the maximum).
    pub w2: ScalarField,
    /// Unconstrained baseline.
    pub u: ScalarField,
    /// Final minimum feasible level.
    pub v: ScalarField,
    pub log: IterationLog,
    pub iterations: usize,
}

/// Sup-norm change between two fields of equal shape. Points finite in both
/// contribute their absolute difference, mixed finite/infinite pairs
/// contribute `+inf`, and points infinite in both contribute nothing.
pub fn max_change(prev: &[Cost], next: &[Cost]) -> Result<f64, ResetError> {
    if prev.len() != next.len() {
        return Err(ResetError::ShapeMismatch(prev.len(), next.len()));
    }
    let mut worst = 0.0f64;
    for (&a, &b) in prev.iter().zip(next) {
        worst = worst.max(match (a == INF, b == INF) {
            (true, true) => 0.0,
            (false, false) => (a - b).abs(),
            _ => INF,
        });
        if worst == INF {
            break;
        }
    }
    Ok(worst)
}

/// Options for [`solve_budget_reset_on`].
#[derive(Copy, Clone, Debug)]
pub struct ResetParams {
    pub ntheta: usize,
    pub tol: f64,
    pub max_iters: usize,
    /// Record a safe-field snapshot after every outer iteration.
    pub snapshots: bool,
}

impl ResetParams {
    pub fn from_config(config: &ScenarioConfig) -> Self {
        ResetParams {
            ntheta: config.ntheta,
            tol: config.tol,
            max_iters: config.max_iters,
            snapshots: false,
        }
    }
}

/// Rasterizes and solves a scenario.
pub fn solve_budget_reset(config: &ScenarioConfig) -> Result<BudgetResetSolution, ResetError> {
    let (grid, axis) = rasterize_scenario(config)?;
    solve_budget_reset_on(grid, axis, ResetParams::from_config(config))
}

/// Alternating solver on a rasterized scenario. Initializes the safe field
/// from the exit costs, then repeats: recompute the minimum feasible level
/// and its boundary costs from the current reachable safe set, sweep the
/// budget slices upward (Phase I), and re-solve the safe-set eikonal problem
/// with the top-slice compatibility data on the interface band (Phase II).
/// Stops when both sup-norm changes fall below the tolerance.
pub fn solve_budget_reset_on(
    grid: Grid2D,
    axis: BudgetAxis,
    params: ResetParams,
) -> Result<BudgetResetSolution, ResetError> {
    let n = grid.n;
    let nn = n * n;
    let u = solve_unconstrained(&grid);
    let mut w2 = ScalarField::constant(n, INF);
    for idx in 0..nn {
        if grid.exit_cost[idx] < INF {
            w2.data[idx] = grid.exit_cost[idx];
        }
    }
    let mut w1 = BudgetField::constant(n, axis.n_levels, INF);
    let mut v_prev: Option<ScalarField> = None;
    let mut log = IterationLog::default();
    let interface = grid.unsafe_interface();

    for k in 1..=params.max_iters {
        // Reachable safe set from the previous iterate.
        let safe_reachable: Vec<bool> = (0..nn)
            .map(|i| grid.is_safe_side(i) && w2.data[i] < INF)
            .collect();
        let mfl = solve_mfl(&grid, &safe_reachable, &w2);
        let v_increase = match &v_prev {
            None => 0.0,
            Some(prev) => {
                let mut worst = 0.0f64;
                for i in 0..nn {
                    let (a, b) = (prev.data[i], mfl.v.data[i]);
                    if a < INF && b < INF {
                        worst = worst.max(b - a);
                    } else if a < INF && b == INF {
                        worst = INF;
                    }
                }
                worst
            }
        };

        // Phase I.
        let stats = sweep_budget_slices(
            &grid,
            &axis,
            &w2,
            &mfl.v,
            &mfl.u_tilde,
            &u,
            params.ntheta,
            &mut w1,
        );

        // Phase II: safe-set eikonal with compatibility data on the
        // interface band and pinned exits.
        let top = w1.top_slice();
        let mut sources: Vec<(usize, Cost)> = Vec::new();
        for idx in 0..nn {
            if grid.exit_cost[idx] < INF {
                sources.push((idx, grid.exit_cost[idx]));
            }
        }
        for &idx in &interface {
            if top[idx] < INF {
                sources.push((idx, top[idx]));
            }
        }
        let mut active = vec![false; nn];
        for idx in 0..nn {
            let (ix, iy) = grid.coords(idx);
            let ring = ix == 0 || iy == 0 || ix == n - 1 || iy == n - 1;
            if !ring && grid.class[idx] == PointClass::Safe && grid.exit_cost[idx] == INF {
                active[idx] = true;
            }
        }
        let solved = fast_marching(
            &EikonalProblem {
                n,
                h: grid.h,
                active: &active,
                speed: &grid.speed,
                rate: &grid.kcost,
                sources: &sources,
            },
            None,
        );
        let mut new_w2 = ScalarField::constant(n, INF);
        let mut w2_increase = 0.0f64;
        let mut dw2 = 0.0f64;
        for idx in 0..nn {
            if !grid.is_safe_side(idx) {
                continue;
            }
            let val = if grid.exit_cost[idx] < INF {
                grid.exit_cost[idx]
            } else {
                solved.data[idx]
            };
            new_w2.data[idx] = val;
            let old = w2.data[idx];
            match (old == INF, val == INF) {
                (true, true) => {}
                (false, false) => {
                    dw2 = dw2.max((old - val).abs());
                    w2_increase = w2_increase.max(val - old);
                }
                (true, false) => dw2 = INF,
                (false, true) => {
                    dw2 = INF;
                    w2_increase = INF;
                }
            }
        }
        w2 = new_w2;

        let no_unsafe = !grid.class.iter().any(|c| *c == PointClass::Unsafe);
        let safe_count = (0..nn)
            .filter(|&i| grid.is_safe_side(i) && w2.data[i] < INF)
            .count();
        let unsafe_count = (0..nn)
            .filter(|&i| {
                grid.class[i] == PointClass::Unsafe && mfl.v.data[i] <= axis.b_max + 1e-12
            })
            .count();
        log.rows.push(IterationRow {
            k,
            dw1: stats.change,
            dw2,
            safe_reachable: safe_count,
            unsafe_reachable: unsafe_count,
            w1_increase: stats.increase,
            w2_increase,
            v_increase,
        });
        if params.snapshots {
            log.w2_snapshots.push(w2.clone());
        }
        // Without unsafe points the coupling is empty and the first pass is
        // already the fixed point.
        if no_unsafe || (stats.change <= params.tol && dw2 <= params.tol) {
            return Ok(BudgetResetSolution {
                grid,
                axis,
                w1,
                w2,
                u,
                v: mfl.v,
                log,
                iterations: k,
            });
        }
        v_prev = Some(mfl.v);
    }
    let last = log.rows.last();
    Err(ResetError::NoConvergence {
        iterations: params.max_iters,
        dw1: last.map_or(INF, |r| r.dw1),
        dw2: last.map_or(INF, |r| r.dw2),
    })
}

/// A time-parametrized trajectory in the extended state space.
#[derive(Clone, Debug)]
pub struct PathTrace {
    /// Records `(x, y, b, t)` at each step.
    pub points: Vec<(f64, f64, f64, f64)>,
    pub reached_target: bool,
}

impl PathTrace {
    pub fn total_time(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.3)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,b,t\n");
        for (x, y, b, t) in &self.points {
            let _ = writeln!(out, "{x},{y},{b},{t}");
        }
        out
    }
}

/// Extracts a constrained-optimal path by forward Euler steps, choosing at
/// each step the sampled direction minimizing the local semi-Lagrangian
/// expression read from the solved fields. The budget decreases at the
/// unsafe rate and resets to the maximum on entering the safe set.
pub fn extract_path(
    sol: &BudgetResetSolution,
    start: (f64, f64),
    b0: f64,
    ntheta: usize,
) -> Result<PathTrace, ResetError> {
    let grid = &sol.grid;
    let axis = &sol.axis;
    let n = grid.n;
    let start_idx = grid.nearest(start.0, start.1);
    let start_safe = grid.is_safe_side(start_idx);
    let mut b = if start_safe { axis.b_max } else { b0 };
    let start_value = if start_safe {
        sol.w2.data[start_idx]
    } else {
        let j = level_at_or_below(axis, b);
        sol.w1.value(start_idx, j)
    };
    if start_value == INF {
        return Err(ResetError::InfeasibleStart {
            x: start.0,
            y: start.1,
            b: b0,
        });
    }

    let w2max = sol.w2.max_finite().unwrap_or(0.0);
    let cap = 1.5 * (axis.b_max / grid.khat_min.max(1e-12) + w2max / grid.kcost_min.max(1e-12));
    let dt = grid.h / (2.0 * grid.speed_max);
    let dtheta = std::f64::consts::TAU / ntheta as f64;

    let (mut x, mut y) = start;
    let mut t = 0.0;
    let mut points = vec![(x, y, b, t)];
    // Exits within reach: interpolation walls off the final cell when its
    // other corners are infinite, so snap onto an exit gridpoint once the
    // position is within 1.2 h of one.
    let snap_radius = 1.2 * grid.h;
    let near_exit = |x: f64, y: f64| -> Option<(usize, f64)> {
        let near = grid.nearest(x, y);
        let (cx, cy) = grid.coords(near);
        let mut best: Option<(usize, f64)> = None;
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (jx, jy) = (cx as i64 + dx, cy as i64 + dy);
                if jx < 0 || jy < 0 || jx >= n as i64 || jy >= n as i64 {
                    continue;
                }
                let idx = grid.idx(jx as usize, jy as usize);
                if grid.exit_cost[idx] < INF {
                    let (px, py) = grid.point(jx as usize, jy as usize);
                    let d = ((px - x).powi(2) + (py - y).powi(2)).sqrt();
                    if d <= snap_radius && best.map_or(true, |(_, bd)| d < bd) {
                        best = Some((idx, d));
                    }
                }
            }
        }
        best
    };
    loop {
        if let Some((exit_idx, d)) = near_exit(x, y) {
            let (ex, ey) = {
                let (ix, iy) = grid.coords(exit_idx);
                grid.point(ix, iy)
            };
            if d > 1e-12 {
                let here = grid.nearest(x, y);
                t += d / grid.speed[here];
                points.push((ex, ey, b, t));
            }
            return Ok(PathTrace {
                points,
                reached_target: true,
            });
        }
        let here = grid.nearest(x, y);
        if t > cap {
            return Err(ResetError::ExtractionFailed { cap });
        }
        let speed = grid.speed[here];
        let kc = grid.kcost[here];
        let here_safe = grid.is_safe_side(here);
        let b_next = if here_safe {
            axis.b_max
        } else {
            (b - grid.khat[here] * dt).max(0.0)
        };
        let slice = level_at_or_below(axis, b_next);
        let w1_slice = sol.w1.slice(slice);
        let eval = |theta: f64| -> Cost {
            let (dx, dy) = (theta.cos(), theta.sin());
            let fx = x + dt * speed * dx;
            let fy = y + dt * speed * dy;
            match bilinear_mixed(grid, w1_slice, &sol.w2.data, fx, fy) {
                Some(v) if v < INF => dt * kc + v,
                _ => INF,
            }
        };
        let mut best = INF;
        let mut best_theta = 0.0;
        for k in 0..ntheta {
            let theta = k as f64 * dtheta;
            let v = eval(theta);
            if v < best {
                best = v;
                best_theta = theta;
            }
        }
        if best == INF {
            return Err(ResetError::ExtractionFailed { cap });
        }
        // One golden-section pass around the best sample.
        let (mut lo, mut hi) = (best_theta - dtheta, best_theta + dtheta);
        for _ in 0..20 {
            let m1 = hi - 0.618_033_988_749_894_9 * (hi - lo);
            let m2 = lo + 0.618_033_988_749_894_9 * (hi - lo);
            if eval(m1) <= eval(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let theta = 0.5 * (lo + hi);
        let theta = if eval(theta) <= best { theta } else { best_theta };
        x += dt * speed * theta.cos();
        y += dt * speed * theta.sin();
        x = x.clamp(-1.0, 1.0);
        y = y.clamp(-1.0, 1.0);
        let new_idx = grid.nearest(x, y);
        b = if grid.is_safe_side(new_idx) {
            axis.b_max
        } else {
            (b - grid.khat[here] * dt).max(0.0)
        };
        t += dt;
        points.push((x, y, b, t));
    }
}

/// Largest level index with `b_j <= b` (clamped to the axis).
fn level_at_or_below(axis: &BudgetAxis, b: f64) -> usize {
    let j = ((b + 1e-12) / axis.db).floor();
    (j.max(0.0) as usize).min(axis.n_levels - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Region, SpeedSpec, TargetSpec};

    fn all_safe_scenario(n: usize) -> ScenarioConfig {
        ScenarioConfig {
            name: "open".into(),
            grid_n: n,
            budget: 1.0,
            db: None,
            ntheta: 32,
            tol: 1e-8,
            max_iters: 50,
            safe_regions: vec![Region::Rect {
                x0: -2.0,
                x1: 2.0,
                y0: -2.0,
                y1: 2.0,
            }],
            obstacles: vec![],
            observer: None,
            speed: SpeedSpec::Constant { value: 1.0 },
            unsafe_rate: 1.0,
            primary_cost: 1.0,
            target: TargetSpec::Point { x: 1.0, y: 0.0 },
            boundary_exit: None,
            starts: vec![],
        }
    }

    #[test]
    fn max_change_rules() {
        assert_eq!(max_change(&[1.0, INF], &[1.0, INF]).unwrap(), 0.0);
        assert_eq!(max_change(&[INF], &[5.0]).unwrap(), INF);
        assert_eq!(max_change(&[5.0, INF], &[5.0, 7.0]).unwrap(), INF);
        assert!((max_change(&[5.0], &[4.9]).unwrap() - 0.1).abs() < 1e-12);
        assert!(max_change(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn all_safe_scenario_converges_in_one_iteration() {
        let sol = solve_budget_reset(&all_safe_scenario(61)).unwrap();
        assert_eq!(sol.iterations, 1);
        // Without unsafe points the safe field is the unconstrained one.
        for idx in 0..sol.grid.n * sol.grid.n {
            if sol.grid.class[idx] == PointClass::Safe {
                assert_eq!(sol.w2.data[idx], sol.u.data[idx]);
            }
        }
    }

    #[test]
    fn path_follows_descent_on_safe_field() {
        // Monotone corridor: the gradient of the safe field points along x,
        // so extracted steps should align with -grad within 15 degrees.
        let sol = solve_budget_reset(&all_safe_scenario(81)).unwrap();
        let trace = extract_path(&sol, (-0.4, 0.3), 1.0, 64).unwrap();
        assert!(trace.reached_target);
        let grid = &sol.grid;
        for w in trace.points.windows(2) {
            let (x0, y0, _, _) = w[0];
            let (x1, y1, _, _) = w[1];
            // Finite-difference gradient of w2 at the step start; skip
            // points near the target where the field kinks.
            let d = ((x0 - 1.0).powi(2) + y0 * y0).sqrt();
            if d < 0.2 {
                continue;
            }
            let hh = grid.h;
            let gx = (sample(&sol.w2, grid, x0 + hh, y0) - sample(&sol.w2, grid, x0 - hh, y0))
                / (2.0 * hh);
            let gy = (sample(&sol.w2, grid, x0, y0 + hh) - sample(&sol.w2, grid, x0, y0 - hh))
                / (2.0 * hh);
            let step = (x1 - x0, y1 - y0);
            let dot = -(gx * step.0 + gy * step.1);
            let cos = dot / ((gx * gx + gy * gy).sqrt() * (step.0 * step.0 + step.1 * step.1).sqrt());
            assert!(cos > (15.0f64).to_radians().cos(), "misaligned step at ({x0}, {y0}), cos {cos}");
        }
    }

    fn sample(f: &ScalarField, _grid: &Grid2D, x: f64, y: f64) -> f64 {
        crate::grid::bilinear_sample(f, x.clamp(-1.0, 1.0), y.clamp(-1.0, 1.0)).unwrap()
    }

    #[test]
    fn infeasible_start_is_reported() {
        let sol = solve_budget_reset(&all_safe_scenario(41)).unwrap();
        // Fake an unsafe start by querying an impossible budget level on an
        // unsafe-free grid: use a start outside every finite cell instead.
        let err = extract_path(&sol, (-0.95, -0.95), 0.0, 32);
        // On an all-safe grid every point is feasible, so this start works;
        // assert the reached flag instead and exercise the error path on a
        // slab scenario below.
        assert!(err.is_ok());
        let mut cfg = all_safe_scenario(41);
        cfg.safe_regions = vec![Region::HalfPlane {
            a: 1.0,
            b: 0.0,
            c: -0.5,
        }];
        cfg.target = TargetSpec::Point { x: -0.9, y: 0.0 };
        cfg.budget = 0.2;
        let sol = solve_budget_reset(&cfg).unwrap();
        // Far unsafe corner cannot reach anything within budget 0.2.
        let err = extract_path(&sol, (0.9, 0.0), 0.2, 32);
        assert!(matches!(err, Err(ResetError::InfeasibleStart { .. })));
    }
}
