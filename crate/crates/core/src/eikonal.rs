//! First-order isotropic eikonal solvers on grid subsets: fast marching
//! (binary-heap label setting with the two-neighbor quadratic update) and
//! fast sweeping (Gauss-Seidel with alternating orderings). Both solve
//! `f(x) |grad u| = rate(x)` on an active set with frozen Dirichlet sources
//! and agree on the same discrete system.

use crate::heap::{MinEntry, MinHeap};
use crate::{Cost, INF};
use crate::grid::ScalarField;

/// An eikonal boundary-value problem on a grid subset.
pub struct EikonalProblem<'a> {
    pub n: usize,
    pub h: f64,
    /// Points where the equation is solved.
    pub active: &'a [bool],
    /// Speed `f > 0` on the active set.
    pub speed: &'a [f64],
    /// Right-hand side (`K` for primary cost, the budget rate for the
    /// minimum feasible level).
    pub rate: &'a [f64],
    /// Frozen data; duplicate entries for one point are min-merged.
    pub sources: &'a [(usize, Cost)],
}

/// Upwind update from the per-axis minima `a`, `b` with local step `rhs =
/// h * rate / speed`. Falls back to the one-sided update when the quadratic
/// has no valid root.
fn local_update(a: Cost, b: Cost, rhs: f64) -> Cost {
    let lo = a.min(b);
    if lo == INF {
        return INF;
    }
    let hi = a.max(b);
    if hi == INF || hi - lo >= rhs {
        lo + rhs
    } else {
        let d = a - b;
        0.5 * (a + b + (2.0 * rhs * rhs - d * d).sqrt())
    }
}

/// Per-axis upwind neighbor minima of `values` at `idx`, restricted by an
/// acceptance mask (pass `None` to consider every neighbor).
fn axis_minima(
    n: usize,
    values: &[Cost],
    accepted: Option<&[bool]>,
    idx: usize,
) -> ((Cost, usize), (Cost, usize)) {
    let (ix, iy) = (idx % n, idx / n);
    let ok = |j: usize| accepted.map_or(true, |m| m[j]);
    let mut a = (INF, usize::MAX);
    if ix > 0 && ok(idx - 1) && values[idx - 1] < a.0 {
        a = (values[idx - 1], idx - 1);
    }
    if ix + 1 < n && ok(idx + 1) && values[idx + 1] < a.0 {
        a = (values[idx + 1], idx + 1);
    }
    let mut b = (INF, usize::MAX);
    if iy > 0 && ok(idx - n) && values[idx - n] < b.0 {
        b = (values[idx - n], idx - n);
    }
    if iy + 1 < n && ok(idx + n) && values[idx + n] < b.0 {
        b = (values[idx + n], idx + n);
    }
    (a, b)
}

/// Companion data advected along the characteristics during fast marching:
/// when a point's value is set from upwind weights, the companion value is
/// combined with the same weights plus `rate_scale = K / rate` times the
/// local value increment.
pub struct Companion<'a> {
    pub values: &'a mut [Cost],
    /// Numerator rate of the companion quantity (the primary running cost).
    pub kcost: &'a [f64],
}

/// Fast marching on an eikonal problem; optionally advects a companion
/// quantity along the accepted characteristics.
pub fn fast_marching(problem: &EikonalProblem<'_>, mut companion: Option<Companion<'_>>) -> ScalarField {
    let n = problem.n;
    let mut values = vec![INF; n * n];
    let mut accepted = vec![false; n * n];
    let mut heap = MinHeap::new();
    for &(idx, v) in problem.sources {
        if v < values[idx] {
            values[idx] = v;
            heap.push(MinEntry { key: v, id: idx });
        }
    }
    while let Some(MinEntry { key, id }) = heap.pop() {
        if accepted[id] || key > values[id] {
            continue;
        }
        accepted[id] = true;
        let (ix, iy) = (id % n, id / n);
        let mut neighbors = [usize::MAX; 4];
        let mut k = 0;
        if ix > 0 {
            neighbors[k] = id - 1;
            k += 1;
        }
        if ix + 1 < n {
            neighbors[k] = id + 1;
            k += 1;
        }
        if iy > 0 {
            neighbors[k] = id - n;
            k += 1;
        }
        if iy + 1 < n {
            neighbors[k] = id + n;
            k += 1;
        }
        for &nb in &neighbors[..k] {
            if nb == usize::MAX || !problem.active[nb] || accepted[nb] {
                continue;
            }
            let ((a, na), (b, nbv)) = axis_minima(n, &values, Some(&accepted), nb);
            let rhs = problem.h * problem.rate[nb] / problem.speed[nb];
            let cand = local_update(a, b, rhs);
            if cand < values[nb] {
                values[nb] = cand;
                if let Some(c) = companion.as_mut() {
                    // Weights proportional to the upwind differences; the
                    // characteristic increment scales by kcost / rate.
                    let px = (cand - a).max(0.0);
                    let py = (cand - b).max(0.0);
                    let scale = c.kcost[nb] / problem.rate[nb];
                    let (interp_c, interp_v) = if py <= 0.0 || nbv == usize::MAX {
                        (c.values[na], a)
                    } else if px <= 0.0 || na == usize::MAX {
                        (c.values[nbv], b)
                    } else {
                        (
                            (px * c.values[na] + py * c.values[nbv]) / (px + py),
                            (px * a + py * b) / (px + py),
                        )
                    };
                    c.values[nb] = interp_c + scale * (cand - interp_v);
                }
                heap.push(MinEntry { key: cand, id: nb });
            }
        }
    }
    ScalarField { n, data: values }
}

/// Fast sweeping: Gauss-Seidel with the four diagonal orderings, iterated
/// until the values stop changing.
pub fn fast_sweeping(problem: &EikonalProblem<'_>) -> ScalarField {
    let n = problem.n;
    let mut values = vec![INF; n * n];
    let mut pinned = vec![false; n * n];
    for &(idx, v) in problem.sources {
        if v < values[idx] {
            values[idx] = v;
        }
        pinned[idx] = true;
    }
    let orderings: [(bool, bool); 4] = [(false, false), (true, false), (false, true), (true, true)];
    for _ in 0..10_000 {
        let mut change = 0.0f64;
        for &(rev_x, rev_y) in &orderings {
            for yy in 0..n {
                let iy = if rev_y { n - 1 - yy } else { yy };
                for xx in 0..n {
                    let ix = if rev_x { n - 1 - xx } else { xx };
                    let idx = iy * n + ix;
                    if pinned[idx] || !problem.active[idx] {
                        continue;
                    }
                    let ((a, _), (b, _)) = axis_minima(n, &values, None, idx);
                    let rhs = problem.h * problem.rate[idx] / problem.speed[idx];
                    let cand = local_update(a, b, rhs);
                    if cand < values[idx] {
                        change = change.max(values[idx] - cand);
                        values[idx] = cand;
                    }
                }
            }
        }
        if change < 1e-14 {
            break;
        }
    }
    ScalarField { n, data: values }
}

/// Solves the eikonal problem; fast marching is the default method, with
/// [`fast_sweeping`] exposed as an independent route to the same system.
pub fn solve_eikonal(problem: &EikonalProblem<'_>) -> ScalarField {
    fast_marching(problem, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_problem(n: usize) -> (Vec<bool>, Vec<f64>, Vec<f64>) {
        (vec![true; n * n], vec![1.0; n * n], vec![1.0; n * n])
    }

    #[test]
    fn distance_from_center_first_order_accurate() {
        let n = 101;
        let h = 2.0 / (n - 1) as f64;
        let (mut active, speed, rate) = uniform_problem(n);
        let center = (n / 2) * n + n / 2;
        active[center] = false;
        let sources = [(center, 0.0)];
        let sol = solve_eikonal(&EikonalProblem {
            n,
            h,
            active: &active,
            speed: &speed,
            rate: &rate,
            sources: &sources,
        });
        let mut worst = 0.0f64;
        for iy in 0..n {
            for ix in 0..n {
                let (x, y) = (-1.0 + ix as f64 * h, -1.0 + iy as f64 * h);
                let exact = (x * x + y * y).sqrt();
                worst = worst.max((sol.data[iy * n + ix] - exact).abs());
            }
        }
        // First-order accuracy degraded by the rarefaction fan at the source.
        assert!(worst <= 2.0 * h, "L-inf error {worst} vs 2h = {}", 2.0 * h);
    }

    #[test]
    fn planar_front_is_exact() {
        let n = 41;
        let h = 2.0 / (n - 1) as f64;
        let (mut active, speed, rate) = uniform_problem(n);
        let mut sources = Vec::new();
        for iy in 0..n {
            active[iy * n] = false;
            sources.push((iy * n, 0.0));
        }
        let sol = solve_eikonal(&EikonalProblem {
            n,
            h,
            active: &active,
            speed: &speed,
            rate: &rate,
            sources: &sources,
        });
        for iy in 0..n {
            for ix in 0..n {
                let x = -1.0 + ix as f64 * h;
                assert!((sol.data[iy * n + ix] - (x + 1.0)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn doubling_speed_halves_values() {
        let n = 31;
        let h = 2.0 / (n - 1) as f64;
        let (mut active, speed, rate) = uniform_problem(n);
        let center = (n / 2) * n + n / 2;
        active[center] = false;
        let sources = [(center, 0.0)];
        let s1 = solve_eikonal(&EikonalProblem {
            n,
            h,
            active: &active,
            speed: &speed,
            rate: &rate,
            sources: &sources,
        });
        let speed2: Vec<f64> = speed.iter().map(|v| v * 2.0).collect();
        let s2 = solve_eikonal(&EikonalProblem {
            n,
            h,
            active: &active,
            speed: &speed2,
            rate: &rate,
            sources: &sources,
        });
        for i in 0..n * n {
            assert!((s2.data[i] - s1.data[i] / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn marching_and_sweeping_agree() {
        // Variable speed, two sources, an inactive block.
        let n = 51;
        let h = 2.0 / (n - 1) as f64;
        let mut active = vec![true; n * n];
        let mut speed = vec![0.0; n * n];
        let rate = vec![1.0; n * n];
        for iy in 0..n {
            for ix in 0..n {
                let (x, y) = (-1.0 + ix as f64 * h, -1.0 + iy as f64 * h);
                speed[iy * n + ix] = 1.0 + 0.5 * (2.0 * x).sin() * (3.0 * y).cos();
                if x.abs() < 0.2 && y > 0.1 && y < 0.5 {
                    active[iy * n + ix] = false;
                }
            }
        }
        let s0 = 10 * n + 10;
        let s1 = 40 * n + 35;
        active[s0] = false;
        active[s1] = false;
        let sources = [(s0, 0.0), (s1, 0.25)];
        let p = EikonalProblem {
            n,
            h,
            active: &active,
            speed: &speed,
            rate: &rate,
            sources: &sources,
        };
        let fm = fast_marching(&p, None);
        let fs = fast_sweeping(&p);
        for i in 0..n * n {
            if fm.data[i] == INF {
                assert_eq!(fs.data[i], INF);
            } else {
                assert!(
                    (fm.data[i] - fs.data[i]).abs() < 1e-9,
                    "mismatch at {i}: {} vs {}",
                    fm.data[i],
                    fs.data[i]
                );
            }
        }
    }

    #[test]
    fn empty_sources_leave_everything_infinite() {
        let n = 11;
        let (active, speed, rate) = uniform_problem(n);
        let sol = solve_eikonal(&EikonalProblem {
            n,
            h: 0.2,
            active: &active,
            speed: &speed,
            rate: &rate,
            sources: &[],
        });
        assert!(sol.data.iter().all(|&v| v == INF));
    }

    #[test]
    fn companion_equals_value_when_rates_match() {
        // With matching rates and zero source data, the advected companion
        // reproduces the eikonal solution itself.
        let n = 41;
        let h = 2.0 / (n - 1) as f64;
        let (mut active, speed, rate) = uniform_problem(n);
        let s = 5 * n + 7;
        active[s] = false;
        let sources = [(s, 0.0)];
        let mut companion = vec![INF; n * n];
        companion[s] = 0.0;
        let p = EikonalProblem {
            n,
            h,
            active: &active,
            speed: &speed,
            rate: &rate,
            sources: &sources,
        };
        let kcost = vec![1.0; n * n];
        let sol = fast_marching(
            &p,
            Some(Companion {
                values: &mut companion,
                kcost: &kcost,
            }),
        );
        for i in 0..n * n {
            if sol.data[i] < INF {
                assert!(
                    (companion[i] - sol.data[i]).abs() < 1e-9,
                    "companion diverged at {i}"
                );
            }
        }
    }
}
