mod support;

use ndarray::Array2;
use otrl_core::transport::{dual_objective, primal_cost};
use otrl_core::{sinkhorn, DiscreteMeasure, TransportProblem};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_problem(rng: &mut ChaCha8Rng, n: usize, m: usize, epsilon: f64) -> TransportProblem {
    let cost = Array2::from_shape_fn((n, m), |_| rng.gen_range(0.0..1.0));
    let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    let b: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
    TransportProblem::new(
        cost,
        DiscreteMeasure::from_masses(&a).unwrap(),
        DiscreteMeasure::from_masses(&b).unwrap(),
        epsilon,
    )
    .unwrap()
}

fn rows(problem: &TransportProblem) -> Vec<Vec<f64>> {
    problem.cost.outer_iter().map(|r| r.to_vec()).collect()
}

#[test]
fn matches_exact_ot_on_small_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..50 {
        let n = 1 + case % 4;
        let p = random_problem(&mut rng, n, 3, 1e-3);
        let plan = sinkhorn(&p, 200_000, 1e-9).unwrap();
        let exact = support::exact_ot(&rows(&p), &p.source.weights().to_vec(), &p.target.weights().to_vec());
        let got = primal_cost(&plan, &p);
        assert!((got - exact).abs() <= 5e-2, "case {case}: {got} vs {exact}");
        assert!(got >= exact - 1e-9, "entropic plan cannot beat the LP optimum");
    }
}

#[test]
fn duality_gap_shrinks_with_epsilon() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let base = random_problem(&mut rng, 4, 3, 0.1);
    let mut gaps = Vec::new();
    for eps in [0.1, 0.01, 0.001] {
        let p = TransportProblem { epsilon: eps, ..base.clone() };
        let plan = sinkhorn(&p, 200_000, 1e-10).unwrap();
        assert!(plan.converged);
        let gap = primal_cost(&plan, &p) - dual_objective(&plan, &p).unwrap();
        assert!(gap >= -1e-9 && gap <= eps * 12f64.ln() + 1e-4, "eps {eps}: gap {gap}");
        gaps.push(gap);
    }
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn converged_plans_are_feasible_and_certified(seed in 0u64..10_000, n in 1usize..7, m in 1usize..5, log_eps in -3.0f64..0.0) {
        let eps = 10f64.powf(log_eps);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_problem(&mut rng, n, m, eps);
        let tol = 1e-8;
        let plan = sinkhorn(&p, 100_000, tol).unwrap();
        prop_assume!(plan.converged);
        prop_assert!(plan.coupling.iter().all(|v| *v >= 0.0));
        let rows = plan.coupling.sum_axis(ndarray::Axis(1));
        let cols = plan.coupling.sum_axis(ndarray::Axis(0));
        for (r, a) in rows.iter().zip(p.source.weights()) {
            prop_assert!((r - a).abs() <= tol);
        }
        for (c, b) in cols.iter().zip(p.target.weights()) {
            prop_assert!((c - b).abs() <= tol);
        }
        let gap = primal_cost(&plan, &p) - dual_objective(&plan, &p).unwrap();
        prop_assert!(gap >= -1e-9, "weak duality violated: {}", gap);
        prop_assert!(gap <= eps * ((n * m) as f64).ln() + 1e-4, "gap {} over bound", gap);
    }

    #[test]
    fn residual_trace_is_non_increasing(seed in 0u64..10_000, n in 1usize..7, m in 1usize..5, log_eps in -3.0f64..0.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_problem(&mut rng, n, m, 10f64.powf(log_eps));
        let plan = sinkhorn(&p, 5_000, 1e-10).unwrap();
        for w in plan.residual_trace.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-15, "{} then {}", w[0], w[1]);
        }
    }

    #[test]
    fn permuting_tasks_permutes_rows(seed in 0u64..10_000, n in 2usize..7, shift in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_problem(&mut rng, n, 3, 0.05);
        let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        let cost = Array2::from_shape_fn((n, 3), |(i, j)| p.cost[[perm[i], j]]);
        let a: Vec<f64> = perm.iter().map(|&i| p.source.weights()[i]).collect();
        let q = TransportProblem::new(cost, DiscreteMeasure::new(a).unwrap(), p.target.clone(), p.epsilon).unwrap();
        let pp = sinkhorn(&p, 50_000, 1e-12).unwrap();
        let pq = sinkhorn(&q, 50_000, 1e-12).unwrap();
        for i in 0..n {
            for j in 0..3 {
                prop_assert!((pq.coupling[[i, j]] - pp.coupling[[perm[i], j]]).abs() < 1e-9);
            }
        }
    }
}
