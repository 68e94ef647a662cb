#![allow(dead_code)]

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use stratamix::field::{BoundingBox, FieldSpec, Filtering, VolumeTexture};
use stratamix::gcode::MachineConfig;
use stratamix::toolpath::{Layer, PathRole, PathVertex, PrintJob, Toolpath};
use stratamix::MixRatio;

/// Uniform point of the probability simplex.
pub fn random_mix(rng: &mut ChaCha8Rng, k: usize) -> MixRatio {
    let w: Vec<f64> = (0..k).map(|_| -rng.gen_range(1e-12f64..1.0).ln()).collect();
    let s: f64 = w.iter().sum();
    MixRatio::new(w.into_iter().map(|x| x / s).collect()).unwrap()
}

/// Smooth random field: a coarse trilinear texture of random mixtures
/// over `[-extent, extent]^2 x [0, 10]`.
pub fn random_smooth_field(rng: &mut ChaCha8Rng, k: usize, extent: f64) -> FieldSpec {
    let dims = [rng.gen_range(2..=3), rng.gen_range(2..=3), 2];
    let voxels = (0..dims.iter().product::<usize>())
        .map(|_| random_mix(rng, k))
        .collect();
    let bbox = BoundingBox {
        min: [-extent, -extent, 0.0],
        max: [extent, extent, 10.0],
    };
    FieldSpec::VolumeTexture {
        texture: VolumeTexture::new(dims, bbox, Filtering::Trilinear, voxels).unwrap(),
    }
}

/// A closed wobbly loop of exactly `n` vertices with mixtures sampled from
/// `field` at the layer mid-height.
pub fn random_layer(rng: &mut ChaCha8Rng, n: usize, radius: f64, field: &FieldSpec) -> Layer {
    let (a, phase) = (rng.gen_range(0.0..0.3), rng.gen_range(0.0..TAU));
    let lobes = rng.gen_range(2..6) as f64;
    let z_top = 0.3;
    let vertices = (0..n)
        .map(|i| {
            let t = TAU * i as f64 / n as f64;
            let r = radius * (1.0 + a * (lobes * t + phase).sin());
            let mut v = PathVertex::new(r * t.cos(), r * t.sin(), z_top);
            v.mix = Some(field.sample([v.position[0], v.position[1], 0.15]));
            v
        })
        .collect();
    Layer {
        index: 0,
        z_top,
        thickness: 0.3,
        toolpaths: vec![Toolpath {
            vertices,
            track_width: 0.4,
            closed: true,
            role: PathRole::Perimeter,
        }],
        plan: None,
    }
}

pub fn single_layer_job(layer: Layer, machine: MachineConfig) -> PrintJob {
    PrintJob {
        layers: vec![layer],
        machine,
    }
}

/// Component-wise largest difference.
pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// `sum_i alpha_i * L_i`.
pub fn recombine(alphas: &[f64], bases: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; bases[0].len()];
    for (a, l) in alphas.iter().zip(bases) {
        for (o, x) in out.iter_mut().zip(l) {
            *o += a * x;
        }
    }
    out
}
