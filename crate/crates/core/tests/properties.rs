//! Randomized invariants of the belief model, grid and baselines.

mod common;

use std::sync::Arc;

use cdac_core::baselines::{
    greedy_map_scores, infomax_scores, threshold_policy_step, BaselineKind, ThresholdPolicy, TieRule,
};
use cdac_core::*;
use common::*;
use proptest::prelude::*;
use rand::SeedableRng;

fn belief() -> impl Strategy<Value = BeliefState<f64>> {
    (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0)
        .prop_filter("non-degenerate", |(a, b, c)| a + b + c > 1e-3)
        .prop_map(|(a, b, c)| BeliefState::from_weights(vec![a, b, c]).unwrap())
}

fn task() -> impl Strategy<Value = TaskSpec<f64>> {
    prop_oneof![
        (0.51f64..0.99).prop_map(|b| TaskSpec::task1(b).unwrap()),
        (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0).prop_map(|(a, b, c, d)| {
            // Strictly decreasing acuities in [0.5, 0.99).
            let mut v = [0.5 + 0.49 * a, 0.5 + 0.49 * b, 0.5 + 0.49 * c, 0.5 + 0.49 * d];
            v.sort_by(|x, y| y.total_cmp(x));
            v[1] = v[1].min(v[0] - 0.003);
            v[2] = v[2].min(v[1] - 0.003);
            v[3] = v[3].min(v[2] - 0.003).max(0.5);
            if v[2] <= v[3] {
                v = [0.9, 0.8, 0.7, 0.6];
            }
            TaskSpec::task2(v).unwrap()
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn posteriors_average_to_the_prior(task in task(), p in belief()) {
        for a in task.actions() {
            let dist = predictive_obs_dist(&task, &p, a).unwrap();
            let total: f64 = dist.iter().map(|(_, q)| q).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            let mut mean = [0.0; 3];
            for (x, q) in dist {
                let post = belief_update(&task, &p, a, x).unwrap();
                for (i, m) in mean.iter_mut().enumerate() {
                    *m += q * post.get(i);
                }
            }
            for (i, m) in mean.iter().enumerate() {
                prop_assert!((m - p.get(i)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn update_commutes_with_relabeling(task in task(), p in belief(), which in 0usize..6) {
        let perm = PERMS[which];
        for a in task.actions() {
            for x in Observation::all(task.obs_arity()) {
                let lhs = belief_update(&task, &p, a, x).unwrap().permuted(&perm);
                let rhs = belief_update(&task, &p.permuted(&perm), permute_action(&task, a, perm), permute_obs(x, perm)).unwrap();
                for i in 0..3 {
                    prop_assert!((lhs.get(i) - rhs.get(i)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn baseline_scores_commute_with_relabeling(task in task(), p in belief(), which in 0usize..6) {
        let perm = PERMS[which];
        let q = p.permuted(&perm);
        let (g, gq) = (greedy_map_scores(&task, &p), greedy_map_scores(&task, &q));
        let (h, hq) = (infomax_scores(&task, &p), infomax_scores(&task, &q));
        for a in task.actions() {
            let b = permute_action(&task, a, perm);
            prop_assert!((g[a.0] - gq[b.0]).abs() < 1e-12);
            prop_assert!((h[a.0] - hq[b.0]).abs() < 1e-12);
        }
    }

    #[test]
    fn one_step_jensen_bounds(task in task(), p in belief()) {
        let h = entropy(&p);
        prop_assert!(h >= 0.0 && h <= 3f64.ln() + 1e-12);
        for s in greedy_map_scores(&task, &p) {
            prop_assert!(s >= p.max() - 1e-12);
        }
        for s in infomax_scores(&task, &p) {
            prop_assert!(s <= h + 1e-12);
        }
    }

    #[test]
    fn threshold_step_respects_threshold(task in task(), p in belief(), thr in 0.34f64..0.99, infomax in any::<bool>()) {
        let kind = if infomax { BaselineKind::Infomax } else { BaselineKind::GreedyMap };
        let policy = ThresholdPolicy::new(kind, thr, 3, TieRule::UniformRandom).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let step = threshold_policy_step(&policy, &task, &p, &mut rng);
        prop_assert_eq!(step.action.is_stop(), p.max() >= thr);
    }

    #[test]
    fn barycentric_reproduces_affine_functions(
        m in 2usize..40,
        coef in (-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0),
        p in belief(),
    ) {
        let grid = Arc::new(SimplexGrid::<f64>::new(m).unwrap());
        let f = |q: &[f64]| coef.0 + coef.1 * q[0] + coef.2 * q[1];
        let table = grid.points().iter().map(|q| f(q)).collect();
        let vf = ValueFunction::new(grid, vec![table], Interpolation::Barycentric).unwrap();
        prop_assert!((interpolate(&vf, FixationAction(0), &p) - f(p.probs())).abs() < 1e-9);
    }

    #[test]
    fn interpolation_never_overshoots(m in 2usize..30, seed in any::<u64>(), p in belief()) {
        let grid = Arc::new(SimplexGrid::<f64>::new(m).unwrap());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let table: Vec<f64> = (0..grid.len()).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let (lo, hi) = table.iter().fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(*v), b.max(*v)));
        for interp in [Interpolation::Barycentric, Interpolation::NearestNeighbor] {
            let vf = ValueFunction::new(Arc::clone(&grid), vec![table.clone()], interp).unwrap();
            let v = interpolate(&vf, FixationAction(0), &p);
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }

    #[test]
    fn grid_points_lie_on_the_simplex(m in 2usize..120) {
        let grid = SimplexGrid::<f64>::new(m).unwrap();
        prop_assert_eq!(grid.len(), m * (m + 1) / 2);
        for (idx, p) in grid.points().iter().enumerate() {
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert_eq!(grid.nearest(p), idx);
        }
    }
}
