//! Barycentric filament mixing ratios.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `Σ weights = 1` for a valid ratio.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Fractions of each of the K filaments pushed through the mixing nozzle.
///
/// Weights are non-negative and sum to one. `K >= 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MixRatio(Vec<f64>);

impl MixRatio {
    /// Builds a ratio, rejecting anything outside the invariants.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::Validation(format!(
                "mixing ratio needs at least 2 components, got {}",
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::Validation(format!(
                "mixing ratio component {w} is negative or not finite"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Validation(format!(
                "mixing ratio sums to {sum}, expected 1"
            )));
        }
        Ok(MixRatio(weights))
    }

    /// Accepts weights whose sum or sign is off by at most `tolerance`,
    /// clamping negatives to zero and renormalizing.
    pub fn normalized(weights: Vec<f64>, tolerance: f64) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::Validation(format!(
                "mixing ratio needs at least 2 components, got {}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < -tolerance) {
            return Err(Error::Validation(format!(
                "mixing ratio {weights:?} has a negative component beyond {tolerance}"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > tolerance {
            return Err(Error::Validation(format!(
                "mixing ratio {weights:?} sums to {sum}, beyond tolerance {tolerance}"
            )));
        }
        Ok(Self::clamp_normalize(weights))
    }

    /// Projects arbitrary weights onto a valid ratio: negatives are zeroed,
    /// then the vector is rescaled to sum to one. An all-zero vector maps to
    /// the uniform mixture.
    pub fn clamp_normalize(mut weights: Vec<f64>) -> Self {
        for w in weights.iter_mut() {
            if !(*w > 0.0) {
                *w = 0.0;
            }
        }
        let sum: f64 = weights.iter().sum();
        if sum > 0.0 {
            for w in weights.iter_mut() {
                *w /= sum;
            }
        } else {
            let k = weights.len() as f64;
            weights.iter_mut().for_each(|w| *w = 1.0 / k);
        }
        MixRatio(weights)
    }

    /// The pure mixture of filament `index`.
    pub fn unit(k: usize, index: usize) -> Self {
        let mut w = vec![0.0; k];
        w[index] = 1.0;
        MixRatio(w)
    }

    pub fn uniform(k: usize) -> Self {
        MixRatio(vec![1.0 / k as f64; k])
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.0
    }

    /// `(1 - t) * self + t * other`.
    pub fn lerp(&self, other: &MixRatio, t: f64) -> MixRatio {
        debug_assert_eq!(self.k(), other.k());
        let w = self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a + (b - a) * t)
            .collect();
        MixRatio::clamp_normalize(w)
    }

    /// Euclidean distance in K-dimensional ratio space.
    pub fn distance(&self, other: &MixRatio) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Largest absolute per-component difference.
    pub fn max_deviation(&self, other: &MixRatio) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<f64>> for MixRatio {
    type Error = Error;

    fn try_from(value: Vec<f64>) -> Result<Self> {
        // Serialized ratios are written with finite precision.
        MixRatio::normalized(value, 1e-6)
    }
}

impl From<MixRatio> for Vec<f64> {
    fn from(value: MixRatio) -> Self {
        value.0
    }
}

impl std::ops::Index<usize> for MixRatio {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.0[index]
    }
}
