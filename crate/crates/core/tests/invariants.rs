mod common;

use common::*;
use itertools::Itertools;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stratamix::ordering::{best_order, ordering_score};
use stratamix::strata::{optimize_layer, stratum_volumes, OptimizerConfig, PlanKind, StrataPlan};
use stratamix::MixRatio;

fn plan_from(rng: &mut ChaCha8Rng, s: usize, k: usize, volumes: &[f64]) -> StrataPlan {
    StrataPlan {
        kind: PlanKind::Simplex,
        dimension: s.saturating_sub(1),
        base_mixtures: (0..s).map(|_| random_mix(rng, k)).collect(),
        order: (0..s).collect(),
        per_stratum_volume: volumes[..s].to_vec(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn optimized_layers_reproduce_their_mixtures(seed in any::<u64>(), k in 3usize..=5, n in 12usize..120) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let field = random_smooth_field(&mut rng, k, 12.0);
        let layer = random_layer(&mut rng, n, 8.0, &field);
        let cfg = OptimizerConfig::default();
        let out = optimize_layer(&layer, &cfg).unwrap();
        let plan = out.plan.as_ref().unwrap();
        let bases: Vec<Vec<f64>> = plan.base_mixtures.iter().map(|m| m.weights().to_vec()).collect();
        prop_assert!(plan.s() <= k);
        for v in &out.toolpaths[0].vertices {
            prop_assert_eq!(v.alphas.len(), plan.s());
            prop_assert!(v.alphas.iter().all(|&a| (0.0..=1.0).contains(&a)));
            prop_assert!((v.alphas.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let got = recombine(&v.alphas, &bases);
            let err = max_diff(&got, v.mix.as_ref().unwrap().weights());
            prop_assert!(err <= cfg.residual_tol + 1e-9, "reproduction error {}", err);
        }
    }

    #[test]
    fn stratum_volumes_add_up_to_the_layer(seed in any::<u64>(), k in 3usize..=5, n in 12usize..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let field = random_smooth_field(&mut rng, k, 12.0);
        let layer = random_layer(&mut rng, n, 8.0, &field);
        let out = optimize_layer(&layer, &OptimizerConfig::default()).unwrap();
        let path = &out.toolpaths[0];
        let verts = &path.vertices;
        let length: f64 = (0..verts.len())
            .map(|i| {
                let (a, b) = (&verts[i].position, &verts[(i + 1) % verts.len()].position);
                (a[0] - b[0]).hypot(a[1] - b[1])
            })
            .sum();
        let want = length * path.track_width * out.thickness;
        let vols = stratum_volumes(&out, out.plan.as_ref().unwrap().s());
        prop_assert!((vols.iter().sum::<f64>() - want).abs() < 1e-9 * want.max(1.0));
        prop_assert!(vols.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn best_order_is_a_maximizing_permutation(seed in any::<u64>(), s0 in 1usize..=4, s1 in 1usize..=4, k in 2usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vols: Vec<f64> = (0..4).map(|i| 0.5 + ((seed >> (8 * i)) & 0xff) as f64 / 64.0).collect();
        let prev = plan_from(&mut rng, s0, k, &vols);
        let cand = plan_from(&mut rng, s1, k, &vols);
        let (order, score) = best_order(&prev, &cand).unwrap();
        prop_assert_eq!(order.iter().copied().sorted().collect::<Vec<_>>(), (0..s1).collect::<Vec<_>>());
        for perm in (0..s1).permutations(s1) {
            let mut trial = cand.clone();
            trial.order = perm;
            prop_assert!(ordering_score(&prev, &trial).unwrap() <= score + 1e-12);
        }
    }

    #[test]
    fn clamp_normalize_gives_a_mixture(w in prop::collection::vec(-1.0f64..2.0, 1..8)) {
        let m = MixRatio::clamp_normalize(w);
        prop_assert!(m.weights().iter().all(|&x| x >= 0.0));
        prop_assert!((m.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
