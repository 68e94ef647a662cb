use crate::mix::MixRatio;

/// Drops the last weight: filament `i < K - 1` maps to unit vector `i`
/// and the last filament to the origin of `R^(K-1)`.
pub fn embed(c: &MixRatio) -> Vec<f64> {
    let w = c.weights();
    w[..w.len() - 1].to_vec()
}

/// Inverse of [`embed`]. The result may have negative entries; feasibility
/// is checked separately.
pub fn unembed(p: &[f64]) -> Vec<f64> {
    let mut w = p.to_vec();
    w.push(1.0 - p.iter().sum::<f64>());
    w
}

/// Whether a candidate mixture meets the barycentric constraints within
/// `lambda`: each component at least `-lambda` and the sum within
/// `lambda` of one.
pub fn is_feasible(weights: &[f64], lambda: f64) -> bool {
    let sum: f64 = weights.iter().sum();
    weights.iter().all(|w| *w >= -lambda) && (sum - 1.0).abs() <= lambda
}
