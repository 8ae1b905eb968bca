//! Uniform Cartesian grid on `[-1,1]^2`: scenario geometry, gridpoint
//! classification, speed/cost fields, bilinear sampling, visibility masks,
//! contour extraction, and field file I/O.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{Cost, INF};

#[derive(Debug, Error)]
pub enum GridError {
    #[error("scenario has an empty target")]
    EmptyTarget,
    #[error("target point ({0}, {1}) rasterizes outside the safe set")]
    TargetOutsideSafeSet(f64, f64),
    #[error("observer ({0}, {1}) lies inside an obstacle")]
    ObserverInObstacle(f64, f64),
    #[error("grid side count must be at least 2, got {0}")]
    GridTooSmall(usize),
    #[error("budget must be positive, got {0}")]
    NonPositiveBudget(f64),
    #[error("config error: {0}")]
    Config(String),
}

#[derive(Debug, Error)]
pub enum FieldIoError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("dimension mismatch: header promises {expected} values, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("bad value token '{0}'")]
    BadToken(String),
}

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("point ({0}, {1}) lies outside the grid hull")]
    OutOfHull(f64, f64),
}

/// Gridpoint classification. `Boundary` marks the outermost ring, which
/// counts as safe-side everywhere (the domain boundary belongs to the safe
/// set) but carries pinned exit-cost data.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointClass {
    Safe,
    Unsafe,
    Obstacle,
    Boundary,
}

impl PointClass {
    pub fn is_safe_side(self) -> bool {
        matches!(self, PointClass::Safe | PointClass::Boundary)
    }
}

/// A geometric region used to compose safe sets and obstacles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Rect { x0: f64, x1: f64, y0: f64, y1: f64 },
    Circle { cx: f64, cy: f64, r: f64 },
    /// Half-plane `a*x + b*y <= c`.
    HalfPlane { a: f64, b: f64, c: f64 },
}

impl Region {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Region::Rect { x0, x1, y0, y1 } => x >= x0 && x <= x1 && y >= y0 && y <= y1,
            Region::Circle { cx, cy, r } => {
                let (dx, dy) = (x - cx, y - cy);
                dx * dx + dy * dy <= r * r
            }
            Region::HalfPlane { a, b, c } => a * x + b * y <= c,
        }
    }

    /// Parameter interval `(t0, t1)` where the segment `p + t (q - p)`,
    /// `t` in `[0, 1]`, runs through the region's interior; `None` if the
    /// overlap is empty or degenerate.
    fn segment_overlap(&self, p: (f64, f64), q: (f64, f64)) -> Option<(f64, f64)> {
        let d = (q.0 - p.0, q.1 - p.1);
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        match *self {
            Region::Rect { x0, x1, y0, y1 } => {
                for (lo, hi, o, dir) in [(x0, x1, p.0, d.0), (y0, y1, p.1, d.1)] {
                    if dir.abs() < 1e-300 {
                        if o < lo || o > hi {
                            return None;
                        }
                    } else {
                        let (mut a, mut b) = ((lo - o) / dir, (hi - o) / dir);
                        if a > b {
                            std::mem::swap(&mut a, &mut b);
                        }
                        t0 = t0.max(a);
                        t1 = t1.min(b);
                    }
                }
            }
            Region::Circle { cx, cy, r } => {
                let f = (p.0 - cx, p.1 - cy);
                let aa = d.0 * d.0 + d.1 * d.1;
                let bb = 2.0 * (f.0 * d.0 + f.1 * d.1);
                let cc = f.0 * f.0 + f.1 * f.1 - r * r;
                if aa < 1e-300 {
                    if cc > 0.0 {
                        return None;
                    }
                } else {
                    let disc = bb * bb - 4.0 * aa * cc;
                    if disc <= 0.0 {
                        return None;
                    }
                    let s = disc.sqrt();
                    t0 = t0.max((-bb - s) / (2.0 * aa));
                    t1 = t1.min((-bb + s) / (2.0 * aa));
                }
            }
            Region::HalfPlane { a, b, c } => {
                let va = a * p.0 + b * p.1 - c;
                let vb = a * q.0 + b * q.1 - c;
                // Inside where value <= 0; clip the segment to that side.
                match (va <= 0.0, vb <= 0.0) {
                    (false, false) => return None,
                    (true, true) => {}
                    _ => {
                        let tc = va / (va - vb);
                        if va <= 0.0 {
                            t1 = t1.min(tc);
                        } else {
                            t0 = t0.max(tc);
                        }
                    }
                }
            }
        }
        if t1 - t0 > 1e-12 {
            Some((t0, t1))
        } else {
            None
        }
    }
}

/// Speed field specification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpeedSpec {
    Constant { value: f64 },
    /// Region overrides are checked in order (first match wins), then the
    /// safe-set override, then the default.
    Piecewise {
        default: f64,
        #[serde(default)]
        on_safe: Option<f64>,
        #[serde(default)]
        regions: Vec<RegionSpeed>,
    },
    /// `base - amplitude * sin(freq_pi * pi * x) * sin(freq_pi * pi * y)`.
    SinusoidProduct {
        base: f64,
        amplitude: f64,
        freq_pi: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionSpeed {
    pub region: Region,
    pub value: f64,
}

/// Target specification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSpec {
    /// A point target, rasterized to the nearest gridpoint.
    Point { x: f64, y: f64 },
    /// Every gridpoint inside the rectangle.
    Square { cx: f64, cy: f64, side: f64 },
}

/// A canonical path start for a scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartSpec {
    pub x: f64,
    pub y: f64,
    /// Starting budget; defaults to the maximum.
    #[serde(default)]
    pub b0: Option<f64>,
}

fn default_ntheta() -> usize {
    64
}
fn default_tol() -> f64 {
    1e-8
}
fn default_max_iters() -> usize {
    100
}
fn default_rate() -> f64 {
    1.0
}

/// Scenario description: geometry, speed, budget, target, and solver knobs.
/// Serializes to/from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub grid_n: usize,
    pub budget: f64,
    /// Budget-axis step; `None` applies the default rule
    /// `db = B / round(B / (0.8 h))`.
    #[serde(default)]
    pub db: Option<f64>,
    #[serde(default = "default_ntheta")]
    pub ntheta: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Safe regions (ignored when an observer is present: the safe set is
    /// then the unobserved part of the domain).
    #[serde(default)]
    pub safe_regions: Vec<Region>,
    #[serde(default)]
    pub obstacles: Vec<Region>,
    #[serde(default)]
    pub observer: Option<(f64, f64)>,
    pub speed: SpeedSpec,
    /// Budget decrease rate on the unsafe set.
    #[serde(default = "default_rate")]
    pub unsafe_rate: f64,
    /// Primary running cost.
    #[serde(default = "default_rate")]
    pub primary_cost: f64,
    pub target: TargetSpec,
    /// Uniform exit cost on the domain boundary; `None` forbids exiting
    /// anywhere but the target.
    #[serde(default)]
    pub boundary_exit: Option<f64>,
    #[serde(default)]
    pub starts: Vec<StartSpec>,
}

impl ScenarioConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, GridError> {
        toml::from_str(text).map_err(|e| GridError::Config(e.to_string()))
    }

    /// Speed at a point, independent of any grid.
    pub fn speed_at(&self, x: f64, y: f64, safe: bool) -> f64 {
        match &self.speed {
            SpeedSpec::Constant { value } => *value,
            SpeedSpec::Piecewise {
                default,
                on_safe,
                regions,
            } => {
                for rs in regions {
                    if rs.region.contains(x, y) {
                        return rs.value;
                    }
                }
                if safe {
                    if let Some(v) = on_safe {
                        return *v;
                    }
                }
                *default
            }
            SpeedSpec::SinusoidProduct {
                base,
                amplitude,
                freq_pi,
            } => {
                base - amplitude
                    * (freq_pi * std::f64::consts::PI * x).sin()
                    * (freq_pi * std::f64::consts::PI * y).sin()
            }
        }
    }

    /// Analytic safe test at a point (no grid involved): true when the point
    /// is on the domain boundary, inside a safe region, or — in observer
    /// mode — hidden from the observer.
    pub fn is_safe_at(&self, x: f64, y: f64) -> bool {
        if x.abs() >= 1.0 - 1e-12 || y.abs() >= 1.0 - 1e-12 {
            return true;
        }
        if let Some((ox, oy)) = self.observer {
            return !segment_clear(&self.obstacles, (ox, oy), (x, y));
        }
        self.safe_regions.iter().any(|r| r.contains(x, y))
    }

    /// Analytic obstacle test at a point.
    pub fn in_obstacle(&self, x: f64, y: f64) -> bool {
        self.obstacles.iter().any(|r| r.contains(x, y))
    }
}

/// Uniform `N x N` grid over `[-1,1]^2` with per-gridpoint classification
/// and coefficient fields.
#[derive(Clone, Debug)]
pub struct Grid2D {
    pub n: usize,
    pub h: f64,
    pub class: Vec<PointClass>,
    /// Speed `f > 0` (meaningless on obstacles).
    pub speed: Vec<f64>,
    /// Budget decrease rate on unsafe points.
    pub khat: Vec<f64>,
    /// Primary running cost.
    pub kcost: Vec<f64>,
    /// Exit cost `q`: finite on usable exits (target gridpoints and boundary
    /// points with a prescribed exit), `+inf` elsewhere.
    pub exit_cost: Vec<Cost>,
    /// Recorded speed bounds over non-obstacle points.
    pub speed_min: f64,
    pub speed_max: f64,
    /// Recorded rate bounds over unsafe points.
    pub khat_min: f64,
    pub khat_max: f64,
    pub kcost_min: f64,
    pub kcost_max: f64,
}

impl Grid2D {
    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        iy * self.n + ix
    }

    pub fn point(&self, ix: usize, iy: usize) -> (f64, f64) {
        (-1.0 + ix as f64 * self.h, -1.0 + iy as f64 * self.h)
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.n, idx / self.n)
    }

    /// Nearest gridpoint index to a point inside the hull.
    pub fn nearest(&self, x: f64, y: f64) -> usize {
        let gx = ((x + 1.0) / self.h).round().clamp(0.0, (self.n - 1) as f64) as usize;
        let gy = ((y + 1.0) / self.h).round().clamp(0.0, (self.n - 1) as f64) as usize;
        self.idx(gx, gy)
    }

    pub fn is_safe_side(&self, idx: usize) -> bool {
        self.class[idx].is_safe_side()
    }

    /// 4-neighbors of a gridpoint.
    pub fn neighbors4(&self, idx: usize) -> impl Iterator<Item = usize> {
        let n = self.n;
        let (ix, iy) = (idx % n, idx / n);
        let mut out = [usize::MAX; 4];
        let mut k = 0;
        if ix > 0 {
            out[k] = idx - 1;
            k += 1;
        }
        if ix + 1 < n {
            out[k] = idx + 1;
            k += 1;
        }
        if iy > 0 {
            out[k] = idx - n;
            k += 1;
        }
        if iy + 1 < n {
            out[k] = idx + n;
            k += 1;
        }
        out.into_iter().take(k)
    }

    /// Unsafe gridpoints with a safe-side 4-neighbor (the discrete interface
    /// band adjacent to the safe set).
    pub fn unsafe_interface(&self) -> Vec<usize> {
        (0..self.n * self.n)
            .filter(|&i| {
                self.class[i] == PointClass::Unsafe
                    && self.neighbors4(i).any(|j| self.is_safe_side(j))
            })
            .collect()
    }
}

/// Discretized budget axis: levels `b_j = j * db` with `b_max = B` exactly.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct BudgetAxis {
    pub b_max: f64,
    pub db: f64,
    pub n_levels: usize,
}

impl BudgetAxis {
    /// Default rule: `db = B / round(B / (0.8 h))`, which divides `B`
    /// exactly and keeps `db` close to `0.8 h`.
    pub fn default_rule(b_max: f64, h: f64) -> Self {
        let steps = (b_max / (0.8 * h)).round().max(1.0);
        BudgetAxis {
            b_max,
            db: b_max / steps,
            n_levels: steps as usize + 1,
        }
    }

    /// Explicit step; must divide the budget exactly.
    pub fn with_db(b_max: f64, db: f64) -> Result<Self, GridError> {
        let steps = b_max / db;
        if (steps - steps.round()).abs() > 1e-9 || steps < 1.0 {
            return Err(GridError::Config(format!(
                "budget step {db} does not divide budget {b_max}"
            )));
        }
        Ok(BudgetAxis {
            b_max,
            db,
            n_levels: steps.round() as usize + 1,
        })
    }

    pub fn level(&self, j: usize) -> f64 {
        j as f64 * self.db
    }

    /// Smallest level index `j` with `b_j >= v` (up to rounding slack).
    pub fn level_above(&self, v: f64) -> usize {
        ((v - 1e-12) / self.db).ceil().max(0.0) as usize
    }
}

/// Dense scalar field over the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub n: usize,
    pub data: Vec<Cost>,
}

impl ScalarField {
    pub fn constant(n: usize, v: Cost) -> Self {
        ScalarField {
            n,
            data: vec![v; n * n],
        }
    }

    pub fn max_finite(&self) -> Option<Cost> {
        self.data
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
    }
}

/// Dense budget-augmented field: `n_levels` slices of `n x n` values, slice
/// index varying slowest.
#[derive(Clone, Debug, PartialEq)]
pub struct BudgetField {
    pub n: usize,
    pub n_levels: usize,
    pub data: Vec<Cost>,
}

impl BudgetField {
    pub fn constant(n: usize, n_levels: usize, v: Cost) -> Self {
        BudgetField {
            n,
            n_levels,
            data: vec![v; n * n * n_levels],
        }
    }

    pub fn slice(&self, j: usize) -> &[Cost] {
        let nn = self.n * self.n;
        &self.data[j * nn..(j + 1) * nn]
    }

    pub fn top_slice(&self) -> &[Cost] {
        self.slice(self.n_levels - 1)
    }

    pub fn value(&self, idx: usize, j: usize) -> Cost {
        self.data[j * self.n * self.n + idx]
    }
}

/// Rasterizes a scenario into a classified grid and a budget axis.
pub fn rasterize_scenario(config: &ScenarioConfig) -> Result<(Grid2D, BudgetAxis), GridError> {
    let n = config.grid_n;
    if n < 2 {
        return Err(GridError::GridTooSmall(n));
    }
    if !(config.budget > 0.0) {
        return Err(GridError::NonPositiveBudget(config.budget));
    }
    let h = 2.0 / (n - 1) as f64;

    let mut class = vec![PointClass::Unsafe; n * n];
    let visible = config
        .observer
        .map(|obs| {
            if config.in_obstacle(obs.0, obs.1) {
                return Err(GridError::ObserverInObstacle(obs.0, obs.1));
            }
            Ok(compute_visibility_mask(n, h, &config.obstacles, obs))
        })
        .transpose()?;
    for iy in 0..n {
        for ix in 0..n {
            let idx = iy * n + ix;
            let (x, y) = (-1.0 + ix as f64 * h, -1.0 + iy as f64 * h);
            class[idx] = if ix == 0 || iy == 0 || ix == n - 1 || iy == n - 1 {
                PointClass::Boundary
            } else if config.in_obstacle(x, y) {
                PointClass::Obstacle
            } else if let Some(vis) = &visible {
                if vis[idx] {
                    PointClass::Unsafe
                } else {
                    PointClass::Safe
                }
            } else if config.safe_regions.iter().any(|r| r.contains(x, y)) {
                PointClass::Safe
            } else {
                PointClass::Unsafe
            };
        }
    }

    // Coefficient fields and recorded bounds.
    let mut speed = vec![0.0; n * n];
    let mut khat = vec![config.unsafe_rate; n * n];
    let kcost = vec![config.primary_cost; n * n];
    let (mut fmin, mut fmax) = (INF, 0.0f64);
    for iy in 0..n {
        for ix in 0..n {
            let idx = iy * n + ix;
            let (x, y) = (-1.0 + ix as f64 * h, -1.0 + iy as f64 * h);
            let f = config.speed_at(x, y, class[idx].is_safe_side());
            speed[idx] = f;
            if class[idx] != PointClass::Obstacle {
                fmin = fmin.min(f);
                fmax = fmax.max(f);
            }
            if class[idx].is_safe_side() {
                khat[idx] = 0.0;
            }
        }
    }

    // Exit costs: boundary ring plus target gridpoints.
    let mut exit_cost = vec![INF; n * n];
    if let Some(q) = config.boundary_exit {
        for iy in 0..n {
            for ix in 0..n {
                if ix == 0 || iy == 0 || ix == n - 1 || iy == n - 1 {
                    exit_cost[iy * n + ix] = q;
                }
            }
        }
    }
    let mut target_cells = Vec::new();
    match config.target {
        TargetSpec::Point { x, y } => {
            let gx = ((x + 1.0) / h).round().clamp(0.0, (n - 1) as f64) as usize;
            let gy = ((y + 1.0) / h).round().clamp(0.0, (n - 1) as f64) as usize;
            target_cells.push(gy * n + gx);
        }
        TargetSpec::Square { cx, cy, side } => {
            let half = side / 2.0;
            for iy in 0..n {
                for ix in 0..n {
                    let (x, y) = (-1.0 + ix as f64 * h, -1.0 + iy as f64 * h);
                    if (x - cx).abs() <= half && (y - cy).abs() <= half {
                        target_cells.push(iy * n + ix);
                    }
                }
            }
        }
    }
    if target_cells.is_empty() {
        return Err(GridError::EmptyTarget);
    }
    for &idx in &target_cells {
        if !class[idx].is_safe_side() {
            let (ix, iy) = (idx % n, idx / n);
            return Err(GridError::TargetOutsideSafeSet(
                -1.0 + ix as f64 * h,
                -1.0 + iy as f64 * h,
            ));
        }
        exit_cost[idx] = 0.0;
    }

    let (mut kh_min, mut kh_max) = (INF, 0.0f64);
    for idx in 0..n * n {
        if class[idx] == PointClass::Unsafe {
            kh_min = kh_min.min(khat[idx]);
            kh_max = kh_max.max(khat[idx]);
        }
    }
    if kh_min == INF {
        // No unsafe points at all.
        kh_min = config.unsafe_rate;
        kh_max = config.unsafe_rate;
    }

    let axis = match config.db {
        Some(db) => BudgetAxis::with_db(config.budget, db)?,
        None => BudgetAxis::default_rule(config.budget, h),
    };
    Ok((
        Grid2D {
            n,
            h,
            class,
            speed,
            khat,
            kcost,
            exit_cost,
            speed_min: fmin,
            speed_max: fmax,
            khat_min: kh_min,
            khat_max: kh_max,
            kcost_min: config.primary_cost,
            kcost_max: config.primary_cost,
        },
        axis,
    ))
}

/// True when the open segment `p -> q` crosses no obstacle interior.
pub fn segment_clear(obstacles: &[Region], p: (f64, f64), q: (f64, f64)) -> bool {
    obstacles.iter().all(|r| r.segment_overlap(p, q).is_none())
}

/// Computes per-gridpoint visibility from a static observer: `true` when the
/// open segment from the observer to the gridpoint crosses no obstacle.
pub fn compute_visibility_mask(
    n: usize,
    h: f64,
    obstacles: &[Region],
    observer: (f64, f64),
) -> Vec<bool> {
    let mut vis = vec![false; n * n];
    for iy in 0..n {
        for ix in 0..n {
            let p = (-1.0 + ix as f64 * h, -1.0 + iy as f64 * h);
            vis[iy * n + ix] = segment_clear(obstacles, observer, p);
        }
    }
    vis
}

/// Locates the cell containing a point and the bilinear weights inside it.
/// Returns the bottom-left corner `(ix, iy)` and `(g1, g2)` in `[0,1]^2`.
fn locate(n: usize, h: f64, x: f64, y: f64) -> Result<(usize, usize, f64, f64), SampleError> {
    let gx = (x + 1.0) / h;
    let gy = (y + 1.0) / h;
    let top = (n - 1) as f64;
    if gx < -1e-9 || gx > top + 1e-9 || gy < -1e-9 || gy > top + 1e-9 {
        return Err(SampleError::OutOfHull(x, y));
    }
    let ix = (gx.floor().max(0.0) as usize).min(n - 2);
    let iy = (gy.floor().max(0.0) as usize).min(n - 2);
    let g1 = (gx - ix as f64).clamp(0.0, 1.0);
    let g2 = (gy - iy as f64).clamp(0.0, 1.0);
    Ok((ix, iy, g1, g2))
}

/// Bilinear interpolation of a field at a point inside the grid hull.
///
/// Corners are weighted `(1-g1)(1-g2)`, `g1(1-g2)`, `g1 g2`, `(1-g1) g2`
/// counter-clockwise from the bottom-left. An infinite corner makes the
/// result infinite unless its weight is exactly zero.
pub fn bilinear_sample(field: &ScalarField, x: f64, y: f64) -> Result<Cost, SampleError> {
    bilinear_on(field.n, &field.data, x, y)
}

/// Bilinear interpolation over a raw slice (used for budget-field slices).
pub fn bilinear_on(n: usize, data: &[Cost], x: f64, y: f64) -> Result<Cost, SampleError> {
    let h = 2.0 / (n - 1) as f64;
    let (ix, iy, g1, g2) = locate(n, h, x, y)?;
    let corners = [
        (iy * n + ix, (1.0 - g1) * (1.0 - g2)),
        (iy * n + ix + 1, g1 * (1.0 - g2)),
        ((iy + 1) * n + ix + 1, g1 * g2),
        ((iy + 1) * n + ix, (1.0 - g1) * g2),
    ];
    let mut acc = 0.0;
    for (idx, w) in corners {
        if w == 0.0 {
            continue;
        }
        let v = data[idx];
        if v == INF {
            return Ok(INF);
        }
        acc += w * v;
    }
    Ok(acc)
}

/// Mixed-source interpolation: safe-side corners read `w2`, unsafe corners
/// read the budget-slice `w1_slice`. Returns `None` when the point leaves
/// the hull or its cell touches an obstacle corner (the caller excludes that
/// control).
pub fn bilinear_mixed(
    grid: &Grid2D,
    w1_slice: &[Cost],
    w2: &[Cost],
    x: f64,
    y: f64,
) -> Option<Cost> {
    let (ix, iy, g1, g2) = locate(grid.n, grid.h, x, y).ok()?;
    let n = grid.n;
    let corners = [
        (iy * n + ix, (1.0 - g1) * (1.0 - g2)),
        (iy * n + ix + 1, g1 * (1.0 - g2)),
        ((iy + 1) * n + ix + 1, g1 * g2),
        ((iy + 1) * n + ix, (1.0 - g1) * g2),
    ];
    let mut acc = 0.0;
    for (idx, w) in corners {
        if grid.class[idx] == PointClass::Obstacle {
            return None;
        }
        if w == 0.0 {
            continue;
        }
        let v = if grid.class[idx].is_safe_side() {
            w2[idx]
        } else {
            w1_slice[idx]
        };
        if v == INF {
            return Some(INF);
        }
        acc += w * v;
    }
    Some(acc)
}

fn format_value(v: Cost) -> String {
    if v == INF {
        "inf".to_string()
    } else {
        format!("{v:.16e}")
    }
}

fn parse_value(tok: &str) -> Result<Cost, FieldIoError> {
    if tok == "inf" {
        Ok(INF)
    } else {
        tok.parse::<f64>()
            .map_err(|_| FieldIoError::BadToken(tok.to_string()))
    }
}

/// Serializes a budget field: header `N h B Nb`, then slice-major row-major
/// values in 17-significant-digit decimal with `inf` sentinels.
pub fn write_budget_field(field: &BudgetField, b_max: f64) -> String {
    let n = field.n;
    let h = 2.0 / (n - 1) as f64;
    let mut out = String::new();
    let _ = writeln!(out, "{} {} {} {}", n, format_value(h), format_value(b_max), field.n_levels);
    for v in &field.data {
        let _ = writeln!(out, "{}", format_value(*v));
    }
    out
}

/// Serializes a scalar field with the same header layout (`B = 0`, `Nb = 1`).
pub fn write_field(field: &ScalarField) -> String {
    let n = field.n;
    let h = 2.0 / (n - 1) as f64;
    let mut out = String::new();
    let _ = writeln!(out, "{} {} {} {}", n, format_value(h), format_value(0.0), 1);
    for v in &field.data {
        let _ = writeln!(out, "{}", format_value(*v));
    }
    out
}

/// Parses a field file back into `(n, b_max, n_levels, values)`.
pub fn read_field_raw(text: &str) -> Result<(usize, f64, usize, Vec<Cost>), FieldIoError> {
    let mut tokens = text.split_whitespace();
    let n: usize = tokens
        .next()
        .ok_or_else(|| FieldIoError::MalformedHeader("missing N".into()))?
        .parse()
        .map_err(|_| FieldIoError::MalformedHeader("bad N".into()))?;
    let _h = parse_value(
        tokens
            .next()
            .ok_or_else(|| FieldIoError::MalformedHeader("missing h".into()))?,
    )?;
    let b_max = parse_value(
        tokens
            .next()
            .ok_or_else(|| FieldIoError::MalformedHeader("missing B".into()))?,
    )?;
    let n_levels: usize = tokens
        .next()
        .ok_or_else(|| FieldIoError::MalformedHeader("missing Nb".into()))?
        .parse()
        .map_err(|_| FieldIoError::MalformedHeader("bad Nb".into()))?;
    let values: Result<Vec<Cost>, FieldIoError> = tokens.map(parse_value).collect();
    let values = values?;
    let expected = n * n * n_levels;
    if values.len() != expected {
        return Err(FieldIoError::DimensionMismatch {
            expected,
            found: values.len(),
        });
    }
    Ok((n, b_max, n_levels, values))
}

/// Parses a scalar field file.
pub fn read_field(text: &str) -> Result<ScalarField, FieldIoError> {
    let (n, _b, n_levels, values) = read_field_raw(text)?;
    if n_levels != 1 {
        return Err(FieldIoError::MalformedHeader(format!(
            "expected a scalar field (Nb = 1), got Nb = {n_levels}"
        )));
    }
    Ok(ScalarField { n, data: values })
}

/// Parses a budget field file.
pub fn read_budget_field(text: &str) -> Result<(BudgetField, f64), FieldIoError> {
    let (n, b_max, n_levels, values) = read_field_raw(text)?;
    Ok((
        BudgetField {
            n,
            n_levels,
            data: values,
        },
        b_max,
    ))
}

/// Extracts level-set polylines with marching squares and linear edge
/// interpolation, in world coordinates. Cells touching an infinite corner
/// are skipped.
pub fn extract_contour(field: &ScalarField, level: f64) -> Vec<Vec<(f64, f64)>> {
    assert!(level.is_finite(), "contour level must be finite");
    let n = field.n;
    let h = 2.0 / (n - 1) as f64;
    let at = |ix: usize, iy: usize| field.data[iy * n + ix];
    let world = |gx: f64, gy: f64| (-1.0 + gx * h, -1.0 + gy * h);
    // Interpolated crossing on an edge between two corner values.
    let cross = |p0: (f64, f64), v0: f64, p1: (f64, f64), v1: f64| -> (f64, f64) {
        let t = if (v1 - v0).abs() < 1e-300 {
            0.5
        } else {
            ((level - v0) / (v1 - v0)).clamp(0.0, 1.0)
        };
        (p0.0 + t * (p1.0 - p0.0), p0.1 + t * (p1.1 - p0.1))
    };

    let mut segments: Vec<((f64, f64), (f64, f64))> = Vec::new();
    for iy in 0..n - 1 {
        for ix in 0..n - 1 {
            let v = [
                at(ix, iy),
                at(ix + 1, iy),
                at(ix + 1, iy + 1),
                at(ix, iy + 1),
            ];
            if v.iter().any(|x| !x.is_finite()) {
                continue;
            }
            let p = [
                (ix as f64, iy as f64),
                (ix as f64 + 1.0, iy as f64),
                (ix as f64 + 1.0, iy as f64 + 1.0),
                (ix as f64, iy as f64 + 1.0),
            ];
            let mut case = 0usize;
            for (k, &val) in v.iter().enumerate() {
                if val > level {
                    case |= 1 << k;
                }
            }
            if case == 0 || case == 15 {
                continue;
            }
            // Crossing points on the four edges (bottom, right, top, left).
            let e = [
                cross(p[0], v[0], p[1], v[1]),
                cross(p[1], v[1], p[2], v[2]),
                cross(p[2], v[2], p[3], v[3]),
                cross(p[3], v[3], p[0], v[0]),
            ];
            let mut emit = |a: usize, b: usize| {
                segments.push((world(e[a].0, e[a].1), world(e[b].0, e[b].1)));
            };
            match case {
                1 => emit(3, 0),
                2 => emit(0, 1),
                3 => emit(3, 1),
                4 => emit(1, 2),
                5 => {
                    // Saddle; resolve by the cell-center average.
                    if (v[0] + v[1] + v[2] + v[3]) / 4.0 > level {
                        emit(3, 2);
                        emit(1, 0);
                    } else {
                        emit(3, 0);
                        emit(1, 2);
                    }
                }
                6 => emit(0, 2),
                7 => emit(3, 2),
                8 => emit(2, 3),
                9 => emit(2, 0),
                10 => {
                    if (v[0] + v[1] + v[2] + v[3]) / 4.0 > level {
                        emit(0, 1);
                        emit(2, 3);
                    } else {
                        emit(0, 3);
                        emit(2, 1);
                    }
                }
                11 => emit(2, 1),
                12 => emit(1, 3),
                13 => emit(1, 0),
                14 => emit(0, 3),
                _ => unreachable!(),
            }
        }
    }
    chain_segments(segments)
}

fn key(p: (f64, f64)) -> (u64, u64) {
    (p.0.to_bits(), p.1.to_bits())
}

/// Chains shared-endpoint segments into polylines. Shared edges are computed
/// identically by adjacent cells, so exact bit matching suffices.
fn chain_segments(mut segments: Vec<((f64, f64), (f64, f64))>) -> Vec<Vec<(f64, f64)>> {
    let mut by_start: HashMap<(u64, u64), Vec<usize>> = HashMap::new();
    for (i, seg) in segments.iter().enumerate() {
        by_start.entry(key(seg.0)).or_default().push(i);
    }
    let mut used = vec![false; segments.len()];
    let mut polylines = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (a, b) = segments[start];
        let mut line = vec![a, b];
        // Extend forward.
        loop {
            let last = *line.last().unwrap();
            let Some(candidates) = by_start.get(&key(last)) else {
                break;
            };
            let Some(&next) = candidates.iter().find(|&&i| !used[i]) else {
                break;
            };
            used[next] = true;
            line.push(segments[next].1);
        }
        // Extend backward by flipping remaining segments that end at the head.
        loop {
            let head = line[0];
            let mut found = None;
            for (i, seg) in segments.iter().enumerate() {
                if !used[i] && key(seg.1) == key(head) {
                    found = Some(i);
                    break;
                }
            }
            let Some(prev) = found else { break };
            used[prev] = true;
            line.insert(0, segments[prev].0);
        }
        polylines.push(line);
    }
    // Keep deterministic output order independent of hash iteration.
    segments.clear();
    polylines
}

/// Writes polylines as `polyline_id x y` CSV rows.
pub fn contours_to_csv(polylines: &[Vec<(f64, f64)>]) -> String {
    let mut out = String::from("polyline_id,x,y\n");
    for (id, line) in polylines.iter().enumerate() {
        for (x, y) in line {
            let _ = writeln!(out, "{id},{x},{y}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slab_config(n: usize) -> ScenarioConfig {
        ScenarioConfig {
            name: "slab".into(),
            grid_n: n,
            budget: 1.0,
            db: None,
            ntheta: 32,
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
            starts: vec![],
        }
    }

    #[test]
    fn budget_axis_default_rule_matches_hand_computation() {
        // N = 61: h = 2/60, db = 1 / round(1 / (0.8 * 2/60)) = 1/38.
        let axis = BudgetAxis::default_rule(1.0, 2.0 / 60.0);
        assert!((axis.db - 1.0 / 38.0).abs() < 1e-15);
        assert_eq!(axis.n_levels, 39);
        // The rule divides B exactly for a spread of grid sizes.
        for n in [41usize, 61, 101, 121, 201, 241, 300, 481] {
            let h = 2.0 / (n - 1) as f64;
            let a = BudgetAxis::default_rule(1.5, h);
            let steps = (a.n_levels - 1) as f64;
            assert!((steps * a.db - 1.5).abs() < 1e-12, "n = {n}");
            assert!((a.db - 0.8 * h).abs() < 0.5 * a.db);
        }
    }

    #[test]
    fn rasterize_slab_classification() {
        let cfg = slab_config(61);
        let (grid, axis) = rasterize_scenario(&cfg).unwrap();
        assert!((axis.db - 1.0 / 38.0).abs() < 1e-15);
        // x <= 1/3 safe, the rest unsafe, ring boundary.
        let mut n_unsafe = 0;
        for iy in 1..60 {
            for ix in 1..60 {
                let (x, _) = grid.point(ix, iy);
                let c = grid.class[grid.idx(ix, iy)];
                if x <= 1.0 / 3.0 {
                    assert_eq!(c, PointClass::Safe);
                } else {
                    assert_eq!(c, PointClass::Unsafe);
                    n_unsafe += 1;
                }
            }
        }
        assert!(n_unsafe > 0);
        assert_eq!(grid.class[grid.idx(0, 30)], PointClass::Boundary);
        // The target gridpoint carries a zero exit cost.
        let t = grid.nearest(1.0, 0.0);
        assert_eq!(grid.exit_cost[t], 0.0);
        assert_eq!(grid.speed_min, 1.0);
        assert_eq!(grid.speed_max, 1.0);
    }

    #[test]
    fn all_safe_scenario_has_no_unsafe_points() {
        let mut cfg = slab_config(31);
        cfg.safe_regions = vec![Region::Rect {
            x0: -2.0,
            x1: 2.0,
            y0: -2.0,
            y1: 2.0,
        }];
        cfg.target = TargetSpec::Point { x: 0.0, y: 0.0 };
        let (grid, _) = rasterize_scenario(&cfg).unwrap();
        assert!(grid.class.iter().all(|c| *c != PointClass::Unsafe));
    }

    #[test]
    fn target_outside_safe_set_is_rejected() {
        let mut cfg = slab_config(31);
        cfg.target = TargetSpec::Point { x: 0.9, y: 0.5 };
        assert!(matches!(
            rasterize_scenario(&cfg),
            Err(GridError::TargetOutsideSafeSet(..))
        ));
    }

    #[test]
    fn classification_stable_under_config_round_trip() {
        let cfg = slab_config(41);
        let text = cfg.to_toml();
        let cfg2 = ScenarioConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, cfg2);
        let (g1, _) = rasterize_scenario(&cfg).unwrap();
        let (g2, _) = rasterize_scenario(&cfg2).unwrap();
        assert_eq!(g1.class, g2.class);
    }

    #[test]
    fn bilinear_at_gridpoints_and_center() {
        let n = 3;
        let mut f = ScalarField::constant(n, 0.0);
        // Cell corners (bl, br, tr, tl) = (0, 1, 3, 2).
        f.data[0] = 0.0;
        f.data[1] = 1.0;
        f.data[n + 1] = 3.0;
        f.data[n] = 2.0;
        let h = 1.0; // world step for n = 3
        let center = (-1.0 + 0.5 * h, -1.0 + 0.5 * h);
        let v = bilinear_sample(&f, center.0, center.1).unwrap();
        assert!((v - 1.5).abs() < 1e-15);
        assert_eq!(bilinear_sample(&f, -1.0, -1.0).unwrap(), 0.0);
        assert_eq!(bilinear_sample(&f, 0.0, -1.0).unwrap(), 1.0);
    }

    #[test]
    fn bilinear_ignores_zero_weight_infinite_corner() {
        let n = 3;
        let mut f = ScalarField::constant(n, 0.0);
        f.data[0] = 0.0;
        f.data[1] = 1.0;
        f.data[n + 1] = INF; // top-right corner, weight 0 on the bottom edge
        f.data[n] = 2.0;
        let v = bilinear_sample(&f, -0.5, -1.0).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        // With positive weight the infinity dominates.
        let v2 = bilinear_sample(&f, -0.5, -0.5).unwrap();
        assert_eq!(v2, INF);
    }

    #[test]
    fn bilinear_out_of_hull_errors() {
        let f = ScalarField::constant(4, 1.0);
        assert!(bilinear_sample(&f, 1.5, 0.0).is_err());
    }

    #[test]
    fn bilinear_exact_on_bilinear_functions() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.gen_range(3..12);
            let (a, b, c, d) = (
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let h = 2.0 / (n - 1) as f64;
            let mut f = ScalarField::constant(n, 0.0);
            for iy in 0..n {
                for ix in 0..n {
                    let (x, y) = (-1.0 + ix as f64 * h, -1.0 + iy as f64 * h);
                    f.data[iy * n + ix] = a + b * x + c * y + d * x * y;
                }
            }
            for _ in 0..20 {
                let x = rng.gen_range(-1.0..1.0);
                let y = rng.gen_range(-1.0..1.0);
                let v = bilinear_sample(&f, x, y).unwrap();
                let exact = a + b * x + c * y + d * x * y;
                assert!((v - exact).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn field_io_round_trip_exact() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 7;
        let mut f = ScalarField::constant(n, 0.0);
        for v in f.data.iter_mut() {
            *v = if rng.gen_bool(0.2) {
                INF
            } else {
                rng.gen_range(-3.0..3.0)
            };
        }
        let text = write_field(&f);
        let f2 = read_field(&text).unwrap();
        assert_eq!(f.data, f2.data);
        // All-infinite field is a file of inf tokens.
        let inf_field = ScalarField::constant(2, INF);
        let text = write_field(&inf_field);
        assert_eq!(text.lines().skip(1).filter(|l| *l == "inf").count(), 4);
        // Budget field round trip.
        let bf = BudgetField {
            n: 2,
            n_levels: 3,
            data: (0..12).map(|i| i as f64 / 7.0).collect(),
        };
        let text = write_budget_field(&bf, 1.5);
        let (bf2, b) = read_budget_field(&text).unwrap();
        assert_eq!(bf.data, bf2.data);
        assert_eq!(b, 1.5);
    }

    #[test]
    fn field_io_rejects_bad_input() {
        assert!(matches!(
            read_field("3 0.5"),
            Err(FieldIoError::MalformedHeader(_))
        ));
        assert!(matches!(
            read_field("2 1.0 0 1\n0 1 2"),
            Err(FieldIoError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            read_field("2 1.0 0 1\n0 1 2 x"),
            Err(FieldIoError::BadToken(_))
        ));
    }

    #[test]
    fn contour_of_distance_field_approximates_circle() {
        let n = 201;
        let h = 2.0 / (n - 1) as f64;
        let mut f = ScalarField::constant(n, 0.0);
        for iy in 0..n {
            for ix in 0..n {
                let (x, y) = (-1.0 + ix as f64 * h, -1.0 + iy as f64 * h);
                f.data[iy * n + ix] = (x * x + y * y).sqrt();
            }
        }
        let r = 0.5;
        assert!(r >= 10.0 * h);
        let lines = extract_contour(&f, r);
        let total: f64 = lines
            .iter()
            .map(|line| {
                line.windows(2)
                    .map(|w| ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt())
                    .sum::<f64>()
            })
            .sum();
        let exact = 2.0 * std::f64::consts::PI * r;
        assert!(
            (total - exact).abs() / exact < 0.02,
            "perimeter {total} vs {exact}"
        );
    }

    #[test]
    fn contour_of_constant_field_is_empty() {
        let f = ScalarField::constant(16, 1.0);
        assert!(extract_contour(&f, 1.0).is_empty());
        assert!(extract_contour(&f, 2.0).is_empty());
    }

    #[test]
    fn contour_of_linear_field_is_single_vertical_line() {
        let n = 21;
        let h = 2.0 / (n - 1) as f64;
        let mut f = ScalarField::constant(n, 0.0);
        for iy in 0..n {
            for ix in 0..n {
                f.data[iy * n + ix] = -1.0 + ix as f64 * h;
            }
        }
        let lines = extract_contour(&f, 0.0);
        assert_eq!(lines.len(), 1);
        for &(x, _) in &lines[0] {
            assert!(x.abs() < 1e-12);
        }
        // Spans the full height.
        let ys: Vec<f64> = lines[0].iter().map(|p| p.1).collect();
        let (min, max) = ys
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(min <= -1.0 + 1e-9 && max >= 1.0 - 1e-9);
    }

    #[test]
    fn contour_skips_infinite_cells() {
        let n = 11;
        let mut f = ScalarField::constant(n, 0.5);
        for ix in 0..n {
            f.data[5 * n + ix] = INF;
        }
        // No finite crossing cells exist around the infinite row.
        let lines = extract_contour(&f, 0.5);
        assert!(lines.is_empty());
    }

    #[test]
    fn visibility_no_obstacles_sees_everything() {
        let vis = compute_visibility_mask(21, 0.1, &[], (0.0, 0.0));
        assert!(vis.iter().all(|&v| v));
    }

    #[test]
    fn visibility_square_occludes_points_behind_it() {
        let obstacles = vec![Region::Rect {
            x0: -0.1,
            x1: 0.1,
            y0: -0.1,
            y1: 0.1,
        }];
        let n = 41;
        let h = 2.0 / (n - 1) as f64;
        let vis = compute_visibility_mask(n, h, &obstacles, (0.8, 0.0));
        // A point directly behind the square is hidden.
        let hidden = ((-0.5 + 1.0) / h).round() as usize;
        let mid = ((0.0 + 1.0) / h).round() as usize;
        assert!(!vis[mid * n + hidden]);
        // A point well off the shadow axis is visible.
        let seen_y = ((0.8 + 1.0) / h).round() as usize;
        assert!(vis[seen_y * n + hidden]);
    }

    #[test]
    fn observer_inside_obstacle_is_rejected() {
        let mut cfg = slab_config(31);
        cfg.observer = Some((0.0, 0.0));
        cfg.obstacles = vec![Region::Circle {
            cx: 0.0,
            cy: 0.0,
            r: 0.2,
        }];
        cfg.target = TargetSpec::Point { x: -1.0, y: 0.0 };
        assert!(matches!(
            rasterize_scenario(&cfg),
            Err(GridError::ObserverInObstacle(..))
        ));
    }
}
