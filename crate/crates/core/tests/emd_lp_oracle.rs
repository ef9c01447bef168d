//! Cross-checks the min-cost-flow EMD against an independent
//! linear-programming transport solver (minilp).

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rand::Rng;
use synfp_core::eval::{emd, Histogram2D};
use synfp_core::rng;

fn lp_emd(h1: &Histogram2D, h2: &Histogram2D) -> f64 {
    let mut supplies = Vec::new();
    let mut demands = Vec::new();
    for r in 0..10 {
        for c in 0..10 {
            if h1.bins[[r, c]] > 0.0 {
                supplies.push((r as f64, c as f64, h1.bins[[r, c]]));
            }
            if h2.bins[[r, c]] > 0.0 {
                demands.push((r as f64, c as f64, h2.bins[[r, c]]));
            }
        }
    }
    let sa: f64 = supplies.iter().map(|s| s.2).sum();
    let sb: f64 = demands.iter().map(|d| d.2).sum();

    let mut prob = Problem::new(OptimizationDirection::Minimize);
    let mut vars = vec![vec![]; supplies.len()];
    for (i, s) in supplies.iter().enumerate() {
        for d in &demands {
            let cost = ((s.0 - d.0).powi(2) + (s.1 - d.1).powi(2)).sqrt();
            vars[i].push(prob.add_var(cost, (0.0, f64::INFINITY)));
        }
    }
    for (i, s) in supplies.iter().enumerate() {
        let expr: Vec<_> = vars[i].iter().map(|v| (*v, 1.0)).collect();
        prob.add_constraint(expr, ComparisonOp::Eq, s.2 / sa);
    }
    for (j, d) in demands.iter().enumerate() {
        let expr: Vec<_> = vars.iter().map(|row| (row[j], 1.0)).collect();
        prob.add_constraint(expr, ComparisonOp::Eq, d.2 / sb);
    }
    let solution = prob.solve().expect("transport LP should be feasible");
    solution.objective()
}

fn random_histogram(seed: u64, density: f64) -> Histogram2D {
    let mut r = rng::fork(seed, "emd-lp", 0);
    let mut h = Histogram2D::zero();
    for v in h.bins.iter_mut() {
        if r.random::<f64>() < density {
            *v = r.random::<f64>();
        }
    }
    if h.bins.sum() == 0.0 {
        h.bins[[3, 3]] = 1.0;
    }
    let s = h.bins.sum();
    h.bins /= s;
    h.counts_total = 50;
    h
}

#[test]
fn emd_agrees_with_lp_solver_on_20_random_pairs() {
    for seed in 0..20u64 {
        let h1 = random_histogram(2 * seed, 0.35);
        let h2 = random_histogram(2 * seed + 1, 0.35);
        let ours = emd(&h1, &h2).unwrap();
        let lp = lp_emd(&h1, &h2);
        assert!(
            (ours - lp).abs() <= 1e-6,
            "seed {seed}: flow {ours} vs lp {lp}"
        );
    }
}

#[test]
fn emd_agrees_with_lp_on_sparse_histograms() {
    for seed in 100..110u64 {
        let h1 = random_histogram(2 * seed, 0.06);
        let h2 = random_histogram(2 * seed + 1, 0.06);
        let ours = emd(&h1, &h2).unwrap();
        let lp = lp_emd(&h1, &h2);
        assert!((ours - lp).abs() <= 1e-6, "seed {seed}: {ours} vs {lp}");
    }
}
