//! Per-layer choice of strata count, base mixtures and thickness fractions.

use serde::{Deserialize, Serialize};

use super::embed::{embed, unembed};
use super::linalg::dot;
use super::pca::{pca_reduce, EmbeddedPointSet, PcaBasis};
use super::simplex::{barycentric_coords, search_min_simplex, Simplex};
use crate::error::{Error, Result};
use crate::mix::MixRatio;
use crate::toolpath::{segment_volume, Layer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// PCA variance threshold selecting the intrinsic dimension.
    pub epsilon: f64,
    /// Tolerance on the barycentric constraints of simplex vertices.
    pub lambda: f64,
    /// Minimum |det| of the unit-normal system for a plane intersection.
    pub singular_tol: f64,
    /// Largest per-filament error accepted when mixtures are represented in
    /// a reduced space or by clamped base mixtures; wider spaces are tried
    /// beyond it.
    pub residual_tol: f64,
    /// Stop after this many plane subsets and widen the space instead.
    pub max_candidates: Option<usize>,
    /// Largest number of plane subsets to enumerate; bigger hulls are
    /// searched over a subset of planes with well spread normals.
    pub max_subsets: Option<usize>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            epsilon: 1e-4,
            lambda: 1e-2,
            singular_tol: 1e-8,
            residual_tol: 2.5e-3,
            max_candidates: None,
            max_subsets: Some(200_000),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("epsilon", self.epsilon),
            ("lambda", self.lambda),
            ("singular_tol", self.singular_tol),
            ("residual_tol", self.residual_tol),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Validation(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.max_subsets == Some(0) {
            return Err(Error::Validation("max_subsets must be positive".into()));
        }
        Ok(())
    }
}

/// How a plan's base mixtures were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanKind {
    /// Constant layer: one stratum mixed in the nozzle.
    Single,
    /// Vertices of an enclosing simplex in a reduced space.
    Simplex,
    /// Pure filaments, one stratum each.
    UnitVectors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrataPlan {
    pub kind: PlanKind,
    /// Dimension of the space the simplex was found in.
    pub dimension: usize,
    pub base_mixtures: Vec<MixRatio>,
    /// Print order: `order[k]` is the stratum printed `k`-th.
    pub order: Vec<usize>,
    /// Deposited volume of each stratum, mm³.
    pub per_stratum_volume: Vec<f64>,
}

impl StrataPlan {
    /// Number of strata S.
    pub fn s(&self) -> usize {
        self.base_mixtures.len()
    }
}

/// Base mixtures plus the thickness fractions of every input mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub kind: PlanKind,
    pub dimension: usize,
    pub base_mixtures: Vec<MixRatio>,
    /// Clamped and renormalized, one row per input mixture.
    pub alphas: Vec<Vec<f64>>,
    /// Fractions before clamping, against the unclamped simplex.
    pub raw_alphas: Vec<Vec<f64>>,
    /// Simplex vertices mapped back to ratio space before clamping.
    pub raw_base_mixtures: Vec<Vec<f64>>,
}

/// Fallback: strata of pure filaments with `alpha = c`.
pub fn unit_vector_decomposition(mixes: &[MixRatio], k: usize) -> Decomposition {
    let alphas: Vec<Vec<f64>> = mixes.iter().map(|m| m.weights().to_vec()).collect();
    Decomposition {
        kind: PlanKind::UnitVectors,
        dimension: k - 1,
        base_mixtures: (0..k).map(|i| MixRatio::unit(k, i)).collect(),
        raw_alphas: alphas.clone(),
        alphas,
        raw_base_mixtures: (0..k)
            .map(|i| MixRatio::unit(k, i).into_weights())
            .collect(),
    }
}

fn clamp_renormalize(mut a: Vec<f64>) -> Vec<f64> {
    a.iter_mut().for_each(|x| *x = x.clamp(0.0, 1.0));
    let sum: f64 = a.iter().sum();
    if sum > 0.0 {
        a.iter_mut().for_each(|x| *x /= sum);
    } else {
        let n = a.len() as f64;
        a.iter_mut().for_each(|x| *x = 1.0 / n);
    }
    a
}

/// Barycentric coordinates of embedded points against simplex vertices
/// given in the embedded space, through an orthonormal frame of the
/// vertices' affine span. Off-span points get the coordinates of their
/// orthogonal projection.
fn coords_in_span(vertices: &[Vec<f64>], points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let origin = &vertices[0];
    let mut frame: Vec<Vec<f64>> = Vec::new();
    for v in &vertices[1..] {
        let mut r: Vec<f64> = v.iter().zip(origin).map(|(a, b)| a - b).collect();
        for f in &frame {
            let c = dot(&r, f);
            r.iter_mut().zip(f).for_each(|(x, y)| *x -= c * y);
        }
        let len = dot(&r, &r).sqrt();
        if !(len > 1e-12) {
            return Err(Error::Internal(
                "strata base mixtures are affinely dependent".into(),
            ));
        }
        frame.push(r.into_iter().map(|x| x / len).collect());
    }
    let to_frame = |x: &[f64]| -> Vec<f64> {
        let rel: Vec<f64> = x.iter().zip(origin).map(|(a, b)| a - b).collect();
        frame.iter().map(|f| dot(&rel, f)).collect()
    };
    let simplex = Simplex::new(vertices.iter().map(|v| to_frame(v)).collect());
    points
        .iter()
        .map(|p| barycentric_coords(&to_frame(p), &simplex))
        .collect()
}

/// Chooses strata for a set of mixing ratios (one per resampled vertex).
///
/// Embeds the ratios, finds their intrinsic dimension `D` by PCA and, for
/// `D >= 1`, searches a minimal enclosing simplex in the first `D` principal
/// axes. On failure the space is widened one axis at a time up to `K - 1`,
/// and pure filaments are used as a last resort.
pub fn decompose(mixes: &[MixRatio], cfg: &OptimizerConfig) -> Result<Decomposition> {
    let k = mixes
        .first()
        .ok_or_else(|| Error::Precondition("no mixing ratios to decompose".into()))?
        .k();
    if mixes.iter().any(|m| m.k() != k) {
        return Err(Error::Precondition(
            "mixing ratios disagree on filament count".into(),
        ));
    }
    let n = k - 1;
    let points = EmbeddedPointSet::from_mixes(mixes);
    let basis = pca_reduce(&points, cfg)?;

    for dim in basis.d..=n {
        let residual = points
            .points
            .iter()
            .map(|p| basis.residual(p, dim))
            .fold(0.0, f64::max);
        if residual > cfg.residual_tol {
            continue;
        }
        if dim == 0 {
            let mean = MixRatio::clamp_normalize(unembed(&basis.mean));
            return Ok(Decomposition {
                kind: PlanKind::Single,
                dimension: 0,
                raw_base_mixtures: vec![unembed(&basis.mean)],
                base_mixtures: vec![mean],
                alphas: vec![vec![1.0]; mixes.len()],
                raw_alphas: vec![vec![1.0]; mixes.len()],
            });
        }
        if let Some(d) = simplex_decomposition(&points, &basis, dim, cfg)? {
            return Ok(d);
        }
    }
    Ok(unit_vector_decomposition(mixes, k))
}

fn simplex_decomposition(
    points: &EmbeddedPointSet,
    basis: &PcaBasis,
    dim: usize,
    cfg: &OptimizerConfig,
) -> Result<Option<Decomposition>> {
    let reduced: Vec<Vec<f64>> = points
        .points
        .iter()
        .map(|p| basis.project(p, dim))
        .collect();
    let search = match search_min_simplex(&reduced, basis, cfg) {
        Ok(s) => s,
        // the widened axes may carry no spread at all
        Err(Error::Internal(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let Some(simplex) = search.simplex else {
        return Ok(None);
    };

    let raw_alphas = match reduced
        .iter()
        .map(|p| barycentric_coords(p, &simplex))
        .collect::<Result<Vec<_>>>()
    {
        Ok(a) => a,
        // numerically flat simplex: treat like a failed search
        Err(Error::Internal(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let raw_base: Vec<Vec<f64>> = simplex
        .vertices
        .iter()
        .map(|v| unembed(&basis.lift(v)))
        .collect();
    let base: Vec<MixRatio> = raw_base
        .iter()
        .map(|w| MixRatio::clamp_normalize(w.clone()))
        .collect();

    // re-solve against the clamped vertices that will actually be printed
    let embedded_base: Vec<Vec<f64>> = base.iter().map(embed).collect();
    let alphas: Vec<Vec<f64>> = match coords_in_span(&embedded_base, &points.points) {
        Ok(a) => a.into_iter().map(clamp_renormalize).collect(),
        Err(Error::Internal(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    if reproduction_error(&alphas, &embedded_base, &points.points) > cfg.residual_tol {
        return Ok(None);
    }
    Ok(Some(Decomposition {
        kind: PlanKind::Simplex,
        dimension: dim,
        base_mixtures: base,
        alphas,
        raw_alphas,
        raw_base_mixtures: raw_base,
    }))
}

/// Largest per-filament gap between `sum_i alpha_i * base_i` and the
/// mixture, all in embedded coordinates.
fn reproduction_error(alphas: &[Vec<f64>], base: &[Vec<f64>], points: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, p) in alphas.iter().zip(points) {
        let mut last = 0.0;
        for (j, x) in p.iter().enumerate() {
            let diff: f64 = a.iter().zip(base).map(|(w, b)| w * b[j]).sum::<f64>() - x;
            last -= diff;
            worst = worst.max(diff.abs());
        }
        worst = worst.max(f64::abs(last));
    }
    worst
}

fn layer_mixes(layer: &Layer) -> Result<Vec<MixRatio>> {
    let mut mixes = Vec::new();
    for path in layer.part_paths() {
        for v in &path.vertices {
            mixes.push(v.mix.clone().ok_or_else(|| {
                Error::Precondition(format!("layer {} has not been resampled", layer.index))
            })?);
        }
    }
    if mixes.is_empty() {
        return Err(Error::Precondition(format!(
            "layer {} has no vertices",
            layer.index
        )));
    }
    Ok(mixes)
}

fn apply(layer: &Layer, decomposition: Decomposition) -> Layer {
    let mut out = layer.clone();
    let mut rows = decomposition.alphas.into_iter();
    for path in out
        .toolpaths
        .iter_mut()
        .filter(|p| p.role != crate::toolpath::PathRole::Shield)
    {
        for v in path.vertices.iter_mut() {
            v.alphas = rows.next().expect("one alpha row per vertex");
        }
    }
    let s = decomposition.base_mixtures.len();
    let per_stratum_volume = stratum_volumes(&out, s);
    out.plan = Some(StrataPlan {
        kind: decomposition.kind,
        dimension: decomposition.dimension,
        base_mixtures: decomposition.base_mixtures,
        order: (0..s).collect(),
        per_stratum_volume,
    });
    out
}

/// Volume of each stratum over the layer's part paths.
pub fn stratum_volumes(layer: &Layer, s: usize) -> Vec<f64> {
    let mut vol = vec![0.0; s];
    for path in layer.part_paths() {
        for (a, b) in path.segments() {
            for (i, v) in vol.iter_mut().enumerate() {
                *v += segment_volume(
                    &path.vertices[a],
                    &path.vertices[b],
                    i,
                    path.track_width,
                    layer.thickness,
                );
            }
        }
    }
    vol
}

/// Optimizes the strata of a resampled layer. The returned layer carries
/// the plan (identity order) and per-vertex thickness fractions.
pub fn optimize_layer(layer: &Layer, cfg: &OptimizerConfig) -> Result<Layer> {
    let mixes = layer_mixes(layer)?;
    let decomposition = decompose(&mixes, cfg)?;
    Ok(apply(layer, decomposition))
}

/// Baseline without optimization: one stratum per filament, `alpha = c`.
pub fn unit_vector_layer(layer: &Layer) -> Result<Layer> {
    let mixes = layer_mixes(layer)?;
    let k = mixes[0].k();
    Ok(apply(layer, unit_vector_decomposition(&mixes, k)))
}
