use budgetpath_core::scenarios::{convergence_scenario, exact_solution_oracle, jump_set_distance};
use budgetpath_core::reset::solve_budget_reset;
use budgetpath_core::INF;

fn main() {
    let n = 61;
    let sol = solve_budget_reset(&convergence_scenario(n)).unwrap();
    let grid = &sol.grid;
    let axis = &sol.axis;
    println!("iterations: {}", sol.iterations);
    // worst errors split by safe/unsafe and by level
    let mut worst: Vec<(f64, f64, f64, f64, f64, f64)> = Vec::new(); // err,x,y,b,num,exact
    for iy in 0..n {
        for ix in 0..n {
            let idx = grid.idx(ix, iy);
            let (x, y) = grid.point(ix, iy);
            let safe = grid.is_safe_side(idx);
            for j in 1..axis.n_levels {
                let b = axis.level(j);
                let num = if safe { sol.w2.data[idx] } else { sol.w1.value(idx, j) };
                let exact = exact_solution_oracle(x, y, b);
                if num < INF && exact < INF && jump_set_distance(x, y, b) > 0.1 {
                    let e = (num - exact).abs();
                    worst.push((e, x, y, b, num, exact));
                }
            }
        }
    }
    worst.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    for w in worst.iter().take(15) {
        println!("err={:.4} at ({:.3},{:.3}) b={:.3} num={:.4} exact={:.4}", w.0, w.1, w.2, w.3, w.4, w.5);
    }
    // error on the safe side only
    let mut s_worst = 0.0f64; let mut s_at = (0.0,0.0);
    for iy in 0..n { for ix in 0..n {
        let idx = grid.idx(ix, iy);
        let (x, y) = grid.point(ix, iy);
        if grid.is_safe_side(idx) && sol.w2.data[idx] < INF {
            let exact = exact_solution_oracle(x, y, 1.0);
            if exact < INF {
                let e = (sol.w2.data[idx] - exact).abs();
                if e > s_worst { s_worst = e; s_at = (x, y); }
            }
        }
    }}
    println!("safe-side worst: {:.4} at {:?}", s_worst, s_at);
}
