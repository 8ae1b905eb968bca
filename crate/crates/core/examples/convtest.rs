use budgetpath_core::scenarios::run_convergence_test;

fn main() {
    let sizes: Vec<usize> = std::env::args()
        .skip(1)
        .map(|s| s.parse().unwrap())
        .collect();
    let sizes = if sizes.is_empty() { vec![61] } else { sizes };
    for r in run_convergence_test(&sizes).unwrap() {
        println!(
            "N={} L1={:.4} Linf3h={:.4} Linf01={:.4} t={:.2}s num_only={} exact_only={}",
            r.n, r.l1, r.linf_3h, r.linf_01, r.runtime_secs, r.numeric_only, r.exact_only
        );
    }
}
