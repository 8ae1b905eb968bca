//! Scenario catalog, the closed-form reference solution for the slab
//! scenario, grid-refinement error reports, experiment drivers, and an
//! independent path-feasibility replay.

use std::time::Instant;

use thiserror::Error;

use crate::grid::{Region, RegionSpeed, ScenarioConfig, SpeedSpec, StartSpec, TargetSpec};
use crate::reset::{
    extract_path, solve_budget_reset, BudgetResetSolution, PathTrace, ResetError,
};
use crate::{Cost, INF};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario '{0}'")]
    Unknown(String),
    #[error(transparent)]
    Reset(#[from] ResetError),
}

/// Contour level spacing for emitted plots.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ContourScale {
    Linear,
    /// Logarithmic spacing, used where slow regions would bunch the levels.
    Log,
}

/// Built-in scenario names.
pub fn catalog() -> &'static [&'static str] {
    &[
        "convergence",
        "eight-block",
        "islands-slow-safe",
        "islands-sinusoid",
        "islands-b",
        "visibility",
    ]
}

/// The slab scenario used for grid-refinement studies: safe half-plane
/// `x <= 1/3` plus the domain boundary, point target at `(1, 0)`, unit
/// speed and costs, budget 1, and a budget step equal to the grid spacing.
pub fn convergence_scenario(n: usize) -> ScenarioConfig {
    let h = 2.0 / (n - 1) as f64;
    ScenarioConfig {
        name: "convergence".into(),
        grid_n: n,
        budget: 1.0,
        db: Some(h),
        ntheta: 64,
        tol: 1e-8,
        max_iters: 100,
        safe_regions: vec![Region::HalfPlane {
            a: 1.0,
            b: 0.0,
            c: 1.0 / 3.0,
        }],
        obstacles: vec![],
        observer: None,
        speed: SpeedSpec::Constant { value: 1.0 },
        unsafe_rate: 1.0,
        primary_cost: 1.0,
        target: TargetSpec::Point { x: 1.0, y: 0.0 },
        boundary_exit: None,
        starts: vec![
            StartSpec {
                x: 0.8,
                y: 0.6,
                b0: None,
            },
            StartSpec {
                x: 0.6,
                y: 0.0,
                b0: None,
            },
        ],
    }
}

fn block(cx: f64, cy: f64, half: f64) -> Region {
    Region::Rect {
        x0: cx - half,
        x1: cx + half,
        y0: cy - half,
        y1: cy + half,
    }
}

/// Eight safe blocks of side 0.4 on a ring, fast on the blocks and on seven
/// of the eight corridors between them, slow elsewhere; the corridor between
/// the first and last block is slow, which forces the information to travel
/// the long way around the ring.
pub fn eight_block_scenario(n: usize) -> ScenarioConfig {
    let centers = [
        (-0.5, -0.5),
        (0.0, -0.5),
        (0.5, -0.5),
        (0.5, 0.0),
        (0.5, 0.5),
        (0.0, 0.5),
        (-0.5, 0.5),
        (-0.5, 0.0),
    ];
    let safe_regions: Vec<Region> = centers.iter().map(|&(x, y)| block(x, y, 0.2)).collect();
    // Fast corridors: the convex hull of each consecutive block pair except
    // the last one (between blocks 8 and 1).
    let mut fast = Vec::new();
    for i in 0..7 {
        let (ax, ay) = centers[i];
        let (bx, by) = centers[i + 1];
        fast.push(RegionSpeed {
            region: Region::Rect {
                x0: ax.min(bx) - 0.2,
                x1: ax.max(bx) + 0.2,
                y0: ay.min(by) - 0.2,
                y1: ay.max(by) + 0.2,
            },
            value: 10.0,
        });
    }
    ScenarioConfig {
        name: "eight-block".into(),
        grid_n: n,
        budget: 1.5,
        db: None,
        ntheta: 64,
        tol: 1e-8,
        max_iters: 100,
        safe_regions,
        obstacles: vec![],
        observer: None,
        speed: SpeedSpec::Piecewise {
            default: 0.1,
            on_safe: Some(10.0),
            regions: fast,
        },
        unsafe_rate: 1.0,
        primary_cost: 1.0,
        target: TargetSpec::Point { x: -0.5, y: -0.5 },
        boundary_exit: None,
        starts: vec![StartSpec {
            x: -0.5,
            y: -0.25,
            b0: None,
        }],
    }
}

fn island_regions() -> Vec<Region> {
    vec![
        Region::Rect {
            x0: -0.85,
            x1: -0.35,
            y0: -0.6,
            y1: -0.2,
        },
        Region::Rect {
            x0: -0.1,
            x1: 0.3,
            y0: -0.45,
            y1: -0.05,
        },
        Region::Rect {
            x0: 0.5,
            x1: 0.9,
            y0: 0.0,
            y1: 0.4,
        },
        Region::Rect {
            x0: -0.2,
            x1: 0.25,
            y0: 0.5,
            y1: 0.85,
        },
    ]
}

fn islands_base(name: &str, n: usize, budget: f64, speed: SpeedSpec) -> ScenarioConfig {
    ScenarioConfig {
        name: name.into(),
        grid_n: n,
        budget,
        db: None,
        ntheta: 64,
        tol: 1e-8,
        max_iters: 100,
        safe_regions: island_regions(),
        obstacles: vec![],
        observer: None,
        speed,
        unsafe_rate: 1.0,
        primary_cost: 1.0,
        target: TargetSpec::Point { x: -0.7, y: -0.4 },
        boundary_exit: None,
        starts: vec![StartSpec {
            x: 0.8,
            y: 0.5,
            b0: None,
        }],
    }
}

/// Four safe islands, slow inside the safe set (reconstruction; acceptance
/// on this scenario is property-based).
pub fn islands_slow_safe_scenario(n: usize) -> ScenarioConfig {
    islands_base(
        "islands-slow-safe",
        n,
        0.4,
        SpeedSpec::Piecewise {
            default: 1.0,
            on_safe: Some(0.3),
            regions: vec![],
        },
    )
}

/// Four safe islands with a smoothly oscillating speed field.
pub fn islands_sinusoid_scenario(n: usize) -> ScenarioConfig {
    islands_base(
        "islands-sinusoid",
        n,
        0.4,
        SpeedSpec::SinusoidProduct {
            base: 1.0,
            amplitude: 0.5,
            freq_pi: 5.0,
        },
    )
}

/// Four safe islands at unit speed; the maximum budget is the interesting
/// parameter here.
pub fn islands_b_scenario(n: usize, budget: f64) -> ScenarioConfig {
    let mut cfg = islands_base("islands-b", n, budget, SpeedSpec::Constant { value: 1.0 });
    cfg.name = format!("islands-b{budget}");
    cfg
}

/// Visibility-constrained planning: four opaque obstacles, a static observer
/// at (0.8, 0.8), safe where hidden from the observer (reconstruction;
/// property-based acceptance).
pub fn visibility_scenario(n: usize, budget: f64) -> ScenarioConfig {
    ScenarioConfig {
        name: format!("visibility-b{budget}"),
        grid_n: n,
        budget,
        db: None,
        ntheta: 64,
        tol: 1e-8,
        max_iters: 100,
        safe_regions: vec![],
        obstacles: vec![
            Region::Rect {
                x0: -0.5,
                x1: -0.2,
                y0: 0.05,
                y1: 0.35,
            },
            Region::Rect {
                x0: 0.1,
                x1: 0.4,
                y0: -0.45,
                y1: -0.15,
            },
            Region::Rect {
                x0: 0.3,
                x1: 0.5,
                y0: 0.35,
                y1: 0.55,
            },
            Region::Rect {
                x0: -0.15,
                x1: 0.05,
                y0: 0.55,
                y1: 0.75,
            },
        ],
        observer: Some((0.8, 0.8)),
        speed: SpeedSpec::Constant { value: 1.0 },
        unsafe_rate: 1.0,
        primary_cost: 1.0,
        target: TargetSpec::Square {
            cx: -0.75,
            cy: -0.1,
            side: 0.08,
        },
        boundary_exit: None,
        starts: vec![StartSpec {
            x: 0.1,
            y: -0.75,
            b0: None,
        }],
    }
}

/// Looks up a built-in scenario at its default grid size.
pub fn built_in(name: &str) -> Result<ScenarioConfig, ScenarioError> {
    match name {
        "convergence" => Ok(convergence_scenario(61)),
        "eight-block" => Ok(eight_block_scenario(300)),
        "islands-slow-safe" => Ok(islands_slow_safe_scenario(300)),
        "islands-sinusoid" => Ok(islands_sinusoid_scenario(300)),
        "islands-b" => Ok(islands_b_scenario(300, 0.4)),
        "visibility" => Ok(visibility_scenario(300, 0.3)),
        other => Err(ScenarioError::Unknown(other.to_string())),
    }
}

/// Contour spacing appropriate for a scenario.
pub fn contour_scale(config: &ScenarioConfig) -> ContourScale {
    if config.name.starts_with("eight-block") {
        ContourScale::Log
    } else {
        ContourScale::Linear
    }
}

/// Picks contour levels over the finite range of a field.
pub fn contour_levels(min: f64, max: f64, count: usize, scale: ContourScale) -> Vec<f64> {
    if !(max > min) || count == 0 {
        return Vec::new();
    }
    match scale {
        ContourScale::Linear => (1..=count)
            .map(|k| min + (max - min) * k as f64 / (count + 1) as f64)
            .collect(),
        ContourScale::Log => {
            let lo = min.max(1e-6 * max);
            (1..=count)
                .map(|k| {
                    let t = k as f64 / (count + 1) as f64;
                    lo * (max / lo).powf(t)
                })
                .collect()
        }
    }
}

/// Everything a scenario run produces.
pub struct ScenarioBundle {
    pub config: ScenarioConfig,
    pub solution: BudgetResetSolution,
    pub paths: Vec<PathTrace>,
    pub contour_levels: Vec<f64>,
}

/// Solves a scenario and extracts the canonical paths.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioBundle, ScenarioError> {
    let solution = solve_budget_reset(config)?;
    let mut paths = Vec::new();
    for s in &config.starts {
        let b0 = s.b0.unwrap_or(config.budget);
        paths.push(extract_path(&solution, (s.x, s.y), b0, config.ntheta)?);
    }
    let levels = match solution.w2.max_finite() {
        Some(max) => {
            let min = solution
                .w2
                .data
                .iter()
                .copied()
                .filter(|v| v.is_finite() && *v > 0.0)
                .fold(max, f64::min);
            contour_levels(min, max, 10, contour_scale(config))
        }
        None => Vec::new(),
    };
    Ok(ScenarioBundle {
        config: config.clone(),
        solution,
        paths,
        contour_levels: levels,
    })
}

// ---------------------------------------------------------------------------
// Exact reference solution for the slab scenario.
// ---------------------------------------------------------------------------

const SLAB_X: f64 = 1.0 / 3.0;
/// Half-length of the segment of `x = 1/3` within unit distance of the
/// target: sqrt(1 - (2/3)^2) = sqrt(5)/3.
fn seg_half() -> f64 {
    5.0f64.sqrt() / 3.0
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

const TARGET: (f64, f64) = (1.0, 0.0);

/// Closed-form value of the slab scenario at `(x, y)` with starting budget
/// `b` (the scenario's maximum budget is 1). Safe points route straight to
/// the target when the segment crosses the reachable part of the interface,
/// else via its nearest endpoint; unsafe points go straight when within
/// budget of the target, otherwise touch the interface within budget (a
/// one-dimensional minimization) or reach the interface line above the
/// endpoint and descend to it. Points beyond budget from both the interface
/// line and the target are unreachable.
pub fn exact_solution_oracle(x: f64, y: f64, b: f64) -> Cost {
    let p = (x, y);
    // On the domain boundary the value is the exit cost itself.
    if x.abs() >= 1.0 - 1e-12 || y.abs() >= 1.0 - 1e-12 {
        return if dist(p, TARGET) < 1e-12 { 0.0 } else { INF };
    }
    let ph = seg_half();
    let endpoint = if y >= 0.0 { (SLAB_X, ph) } else { (SLAB_X, -ph) };
    if x <= SLAB_X {
        // Safe side: straight to the target if the segment crosses the
        // reachable interface segment.
        let t = (SLAB_X - x) / (TARGET.0 - x);
        let y_cross = y + t * (TARGET.1 - y);
        if y_cross.abs() <= ph {
            dist(p, TARGET)
        } else {
            dist(p, endpoint) + 1.0
        }
    } else {
        let d_target = dist(p, TARGET);
        if d_target <= b + 1e-12 {
            return d_target;
        }
        let dx = x - SLAB_X;
        if dx > b + 1e-12 {
            return INF;
        }
        // Reach of the disk of radius b on the interface line.
        let s = (b * b - dx * dx).max(0.0).sqrt();
        let (lo, hi) = (y - s, y + s);
        let (seg_lo, seg_hi) = (-ph, ph);
        let (flo, fhi) = (lo.max(seg_lo), hi.min(seg_hi));
        if flo <= fhi + 1e-15 {
            // Touch the segment within budget at the point minimizing total
            // length; convex objective, golden-section to full precision.
            let f = |t: f64| dist(p, (SLAB_X, t)) + dist((SLAB_X, t), TARGET);
            golden_min(f, flo, fhi)
        } else {
            // Reach the line outside the segment; descend along it to the
            // endpoint, then straight to the target.
            let z = if y >= 0.0 { y - s } else { y + s };
            debug_assert!(z.abs() > ph);
            b + (z.abs() - ph) + 1.0
        }
    }
}

/// Golden-section minimization of a convex function on `[lo, hi]`.
fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    const PHI: f64 = 0.618_033_988_749_894_9;
    if hi - lo < 1e-15 {
        return f(0.5 * (lo + hi));
    }
    let mut m1 = hi - PHI * (hi - lo);
    let mut m2 = lo + PHI * (hi - lo);
    let (mut f1, mut f2) = (f(m1), f(m2));
    while hi - lo > 1e-12 {
        if f1 <= f2 {
            hi = m2;
            m2 = m1;
            f2 = f1;
            m1 = hi - PHI * (hi - lo);
            f1 = f(m1);
        } else {
            lo = m1;
            m1 = m2;
            f1 = f2;
            m2 = lo + PHI * (hi - lo);
            f2 = f(m2);
        }
    }
    f1.min(f2)
}

/// Distance from a point to the jump set at budget `b`: the arc of the
/// circle of radius `b` around the target that lies in the unsafe region.
pub fn jump_set_distance(x: f64, y: f64, b: f64) -> f64 {
    let d = dist((x, y), TARGET);
    let radial = (d - b).abs();
    // Closest point on the full circle; if it lies in the safe half-plane
    // the distance to the arc is attained at the arc ends instead.
    if d > 1e-15 {
        let px = TARGET.0 + (x - TARGET.0) * b / d;
        if px > SLAB_X {
            return radial;
        }
    }
    if b * b > (TARGET.0 - SLAB_X).powi(2) {
        let yy = (b * b - (TARGET.0 - SLAB_X).powi(2)).sqrt();
        dist((x, y), (SLAB_X, yy)).min(dist((x, y), (SLAB_X, -yy)))
    } else {
        radial
    }
}

/// Grid-refinement error report for the slab scenario.
#[derive(Clone, Debug)]
pub struct ErrorReport {
    pub n: usize,
    pub l1: f64,
    pub linf_3h: f64,
    pub linf_01: f64,
    pub runtime_secs: f64,
    /// Extended states finite numerically but not in the reference.
    pub numeric_only: usize,
    /// Extended states finite in the reference but not numerically.
    pub exact_only: usize,
}

impl ErrorReport {
    pub fn csv_header() -> &'static str {
        "n,l1,linf_3h,linf_01,runtime_secs,numeric_only,exact_only"
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.n, self.l1, self.linf_3h, self.linf_01, self.runtime_secs, self.numeric_only, self.exact_only
        )
    }
}

/// Compares a solved slab scenario against the closed form.
pub fn error_report(sol: &BudgetResetSolution, runtime_secs: f64) -> ErrorReport {
    let grid = &sol.grid;
    let axis = &sol.axis;
    let n = grid.n;
    let h = grid.h;
    let eps3h = 3.0 * h;
    let mut l1 = 0.0;
    let mut linf_3h = 0.0f64;
    let mut linf_01 = 0.0f64;
    let mut numeric_only = 0;
    let mut exact_only = 0;
    for iy in 0..n {
        for ix in 0..n {
            let idx = grid.idx(ix, iy);
            let (x, y) = grid.point(ix, iy);
            let safe = grid.is_safe_side(idx);
            for j in 1..axis.n_levels {
                let b = axis.level(j);
                let numeric = if safe {
                    sol.w2.data[idx]
                } else {
                    sol.w1.value(idx, j)
                };
                let exact = exact_solution_oracle(x, y, b);
                match (numeric == INF, exact == INF) {
                    (true, true) => {}
                    (true, false) => exact_only += 1,
                    (false, true) => numeric_only += 1,
                    (false, false) => {
                        let err = (numeric - exact).abs();
                        l1 += err;
                        if safe || jump_set_distance(x, y, b) > eps3h {
                            linf_3h = linf_3h.max(err);
                        }
                        if safe || jump_set_distance(x, y, b) > 0.1 {
                            linf_01 = linf_01.max(err);
                        }
                    }
                }
            }
        }
    }
    ErrorReport {
        n,
        l1: l1 * h * h * axis.db,
        linf_3h,
        linf_01,
        runtime_secs,
        numeric_only,
        exact_only,
    }
}

/// Runs the slab scenario at each grid size and reports the error norms.
pub fn run_convergence_test(sizes: &[usize]) -> Result<Vec<ErrorReport>, ScenarioError> {
    let mut out = Vec::new();
    for &n in sizes {
        let started = Instant::now();
        let sol = solve_budget_reset(&convergence_scenario(n))?;
        let secs = started.elapsed().as_secs_f64();
        out.push(error_report(&sol, secs));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Independent path replay.
// ---------------------------------------------------------------------------

/// Replays a trace against the scenario geometry only: recomputes the budget
/// along the path from the analytic safe/unsafe classification, checks it
/// never drops below `-slack`, verifies obstacle avoidance, and confirms the
/// recorded budgets. Returns the replayed minimum budget margin.
pub fn replay_budget_feasible(
    config: &ScenarioConfig,
    trace: &PathTrace,
    slack: f64,
) -> Result<f64, String> {
    if trace.points.is_empty() {
        return Err("empty trace".into());
    }
    let (x0, y0, b0, _) = trace.points[0];
    let mut b = if config.is_safe_at(x0, y0) {
        config.budget
    } else {
        b0
    };
    let mut min_margin = b;
    let mut prev = trace.points[0];
    for &(x, y, b_rec, t) in &trace.points[1..] {
        let dt = t - prev.3;
        if dt <= 0.0 {
            return Err(format!("time not increasing at t = {t}"));
        }
        if config.in_obstacle(x, y) {
            return Err(format!("path enters an obstacle at ({x}, {y})"));
        }
        if config.is_safe_at(x, y) {
            b = config.budget;
        } else {
            b -= config.unsafe_rate * dt;
        }
        min_margin = min_margin.min(b);
        if b < -slack {
            return Err(format!(
                "budget depleted at ({x}, {y}): replayed {b}, slack {slack}"
            ));
        }
        if (b_rec - b.max(0.0)).abs() > slack {
            return Err(format!(
                "recorded budget {b_rec} deviates from replay {b} at ({x}, {y})"
            ));
        }
        prev = (x, y, b_rec, t);
    }
    Ok(min_margin)
}
