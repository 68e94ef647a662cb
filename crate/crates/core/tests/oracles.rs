//! Optimizer pieces checked against independent slow implementations.

mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stratamix::strata::oracle::gift_wrap_hull_2d;
use stratamix::strata::{
    decompose, hull_facets, min_enclosing_simplex, pca_reduce, EmbeddedPointSet, OptimizerConfig,
    PcaBasis, PlanKind,
};
use stratamix::MixRatio;

/// Cyclic Jacobi rotations on a symmetric matrix; eigenvalues descending.
fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.partial_cmp(x).unwrap());
    ev
}

fn covariance(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = points[0].len();
    let m = points.len() as f64;
    let mean: Vec<f64> = (0..n)
        .map(|j| points.iter().map(|p| p[j]).sum::<f64>() / m)
        .collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    points
                        .iter()
                        .map(|p| (p[i] - mean[i]) * (p[j] - mean[j]))
                        .sum::<f64>()
                        / m
                })
                .collect()
        })
        .collect()
}

#[test]
fn pca_variances_match_jacobi() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = OptimizerConfig::default();
    for trial in 0..40 {
        let k = 3 + trial % 3;
        // mixtures along a random low-dimensional family plus small noise
        let corners: Vec<MixRatio> = (0..1 + trial % 3)
            .map(|_| random_mix(&mut rng, k))
            .collect();
        let mixes: Vec<MixRatio> = (0..60)
            .map(|_| {
                let w: Vec<f64> = corners.iter().map(|_| rng.gen_range(0.0..1.0)).collect();
                let s: f64 = w.iter().sum();
                let mut c = vec![0.0; k];
                for (wi, m) in w.iter().zip(&corners) {
                    for (ci, x) in c.iter_mut().zip(m.weights()) {
                        *ci += wi / s * x;
                    }
                }
                MixRatio::clamp_normalize(c.iter().map(|x| x + rng.gen_range(0.0..1e-3)).collect())
            })
            .collect();
        let set = EmbeddedPointSet::from_mixes(&mixes);
        let basis = pca_reduce(&set, &cfg).unwrap();
        let want = jacobi_eigenvalues(covariance(&set.points));
        assert_eq!(basis.variances.len(), want.len());
        for (got, w) in basis.variances.iter().zip(&want) {
            assert!((got - w).abs() < 1e-10, "trial {trial}: {got} vs {w}");
        }
        let d = want.iter().filter(|&&v| v > cfg.epsilon).count();
        assert_eq!(basis.d, d, "trial {trial}");
    }
}

#[test]
fn planar_hull_matches_gift_wrapping() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..50 {
        let n = rng.gen_range(4..80);
        let pts: Vec<[f64; 2]> = (0..n)
            .map(|_| {
                if trial % 2 == 0 {
                    [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]
                } else {
                    // points on a circle, all of them extreme
                    let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    [t.cos(), t.sin()]
                }
            })
            .collect();
        let want = gift_wrap_hull_2d(&pts);
        let hull = hull_facets(&pts.iter().map(|p| p.to_vec()).collect::<Vec<_>>()).unwrap();
        assert_eq!(hull.facets.len(), want.len(), "trial {trial}");
        let mut got: Vec<[f64; 2]> = hull.vertices.iter().map(|&i| pts[i]).collect();
        let mut want = want;
        let key = |p: &[f64; 2]| (p[0].to_bits(), p[1].to_bits());
        got.sort_by_key(key);
        want.sort_by_key(key);
        assert_eq!(got, want, "trial {trial}");
    }
}

#[test]
fn one_dimensional_simplex_is_the_value_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = OptimizerConfig::default();
    for _ in 0..30 {
        let pts: Vec<Vec<f64>> = (0..rng.gen_range(2..50))
            .map(|_| vec![rng.gen_range(0.0..1.0)])
            .collect();
        let lo = pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < 1e-6 {
            continue;
        }
        let simplex = min_enclosing_simplex(&pts, &PcaBasis::identity(1), &cfg)
            .unwrap()
            .expect("an interval of feasible mixtures always qualifies");
        let mut ends: Vec<f64> = simplex.vertices.iter().map(|v| v[0]).collect();
        ends.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((ends[0] - lo).abs() < 1e-9 && (ends[1] - hi).abs() < 1e-9);
    }
}

#[test]
fn mixtures_inside_a_known_triangle_recover_it() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for trial in 0..20 {
        let k = 4;
        let bases: Vec<MixRatio> = (0..3).map(|_| random_mix(&mut rng, k)).collect();
        let mut weights: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..3).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        for _ in 0..40 {
            let w: Vec<f64> = (0..3).map(|_| rng.gen_range(0.01..1.0)).collect();
            let s: f64 = w.iter().sum();
            weights.push(w.into_iter().map(|x| x / s).collect());
        }
        let base_rows: Vec<Vec<f64>> = bases.iter().map(|b| b.weights().to_vec()).collect();
        let mixes: Vec<MixRatio> = weights
            .iter()
            .map(|w| MixRatio::normalized(recombine(w, &base_rows), 1e-9).unwrap())
            .collect();
        let dec = decompose(&mixes, &OptimizerConfig::default()).unwrap();
        assert_eq!(dec.kind, PlanKind::Simplex, "trial {trial}");
        assert_eq!(dec.base_mixtures.len(), 3);
        // each known base is one of the recovered ones
        let found: Vec<usize> = base_rows
            .iter()
            .map(|b| {
                (0..3)
                    .find(|&j| max_diff(b, dec.base_mixtures[j].weights()) < 1e-7)
                    .unwrap_or_else(|| panic!("trial {trial}: base {b:?} not recovered"))
            })
            .collect();
        for (w, alphas) in weights.iter().zip(&dec.alphas) {
            for (i, &j) in found.iter().enumerate() {
                assert!((alphas[j] - w[i]).abs() < 1e-7, "trial {trial}");
            }
        }
    }
}
