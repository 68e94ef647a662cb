//! Intrinsic dimension of a layer's mixture set by principal components.

use nalgebra::{DMatrix, SymmetricEigen};

use super::embed::embed;
use super::plan::OptimizerConfig;
use crate::error::{Error, Result};
use crate::mix::MixRatio;

/// Embedded mixing ratios of one layer (points of `R^(K-1)`).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedPointSet {
    pub points: Vec<Vec<f64>>,
    pub source_count: usize,
}

impl EmbeddedPointSet {
    pub fn from_mixes<'a>(mixes: impl IntoIterator<Item = &'a MixRatio>) -> Self {
        let points: Vec<Vec<f64>> = mixes.into_iter().map(embed).collect();
        EmbeddedPointSet {
            source_count: points.len(),
            points,
        }
    }

    pub fn dimension(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }
}

/// Principal axes of an embedded point set, strongest first.
///
/// All `N` axes are kept so the reduced space can be widened past the
/// intrinsic dimension `d` when the simplex search needs it.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    /// Orthonormal, ordered by descending variance.
    pub axes: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
    /// Number of variances above `epsilon`.
    pub d: usize,
    pub epsilon: f64,
}

impl PcaBasis {
    /// The trivial basis: zero mean, coordinate axes, every axis significant.
    pub fn identity(n: usize) -> Self {
        PcaBasis {
            mean: vec![0.0; n],
            axes: (0..n)
                .map(|i| {
                    let mut a = vec![0.0; n];
                    a[i] = 1.0;
                    a
                })
                .collect(),
            variances: vec![1.0; n],
            d: n,
            epsilon: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.mean.len()
    }

    /// Coordinates of `x` on the first `dims` axes.
    pub fn project(&self, x: &[f64], dims: usize) -> Vec<f64> {
        self.axes[..dims]
            .iter()
            .map(|a| {
                a.iter()
                    .zip(x)
                    .zip(&self.mean)
                    .map(|((a, x), m)| a * (x - m))
                    .sum()
            })
            .collect()
    }

    /// Maps reduced coordinates back to the embedded space.
    pub fn lift(&self, y: &[f64]) -> Vec<f64> {
        let mut x = self.mean.clone();
        for (coef, axis) in y.iter().zip(&self.axes) {
            for (xi, ai) in x.iter_mut().zip(axis) {
                *xi += coef * ai;
            }
        }
        x
    }

    /// Largest per-filament error made by representing `x` with the first
    /// `dims` axes (the dropped filament included).
    pub fn residual(&self, x: &[f64], dims: usize) -> f64 {
        let back = self.lift(&self.project(x, dims));
        let diff: Vec<f64> = x.iter().zip(&back).map(|(a, b)| a - b).collect();
        let last = diff.iter().sum::<f64>().abs();
        diff.iter().map(|d| d.abs()).fold(last, f64::max)
    }
}

/// Population covariance eigen-decomposition; the intrinsic dimension is
/// the number of variances strictly above `cfg.epsilon`.
pub fn pca_reduce(points: &EmbeddedPointSet, cfg: &OptimizerConfig) -> Result<PcaBasis> {
    let count = points.points.len();
    if count == 0 {
        return Err(Error::Precondition("PCA of an empty point set".into()));
    }
    let n = points.dimension();
    let mut mean = vec![0.0; n];
    for p in &points.points {
        for (m, x) in mean.iter_mut().zip(p) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);

    let mut cov = DMatrix::<f64>::zeros(n, n);
    for p in &points.points {
        for i in 0..n {
            let di = p[i] - mean[i];
            for j in i..n {
                cov[(i, j)] += di * (p[j] - mean[j]);
            }
        }
    }
    for i in 0..n {
        for j in i..n {
            let v = cov[(i, j)] / count as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let variances: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let axes: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| {
            let col = eig.eigenvectors.column(i);
            // sign convention: largest-magnitude component positive
            let big = col
                .iter()
                .copied()
                .fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
            let s = if big < 0.0 { -1.0 } else { 1.0 };
            col.iter().map(|x| x * s).collect()
        })
        .collect();
    let d = variances.iter().filter(|&&v| v > cfg.epsilon).count();
    Ok(PcaBasis {
        mean,
        axes,
        variances,
        d,
        epsilon: cfg.epsilon,
    })
}
