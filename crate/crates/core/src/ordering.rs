//! Print order of strata within each layer.
//!
//! The order of layer `l + 1` maximizes, given the fixed order of layer `l`,
//! the score `sum_{j,i} |L_j - L_i| / (1 + d(L_j, L_i))` over all strata `j`
//! of layer `l` and `i` of layer `l + 1`, where `d` is the gap between the
//! two in a stack of both layers' strata with volumes as heights.

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mix::MixRatio;
use crate::strata::StrataPlan;
use crate::toolpath::PrintJob;

pub const SCORE_TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct StackEntry {
    pub mixture: MixRatio,
    pub height: f64,
}

/// Strata stacked bottom to top.
#[derive(Debug, Clone, PartialEq)]
pub struct StratumStack {
    pub entries: Vec<StackEntry>,
    /// `boundaries[i]` is the bottom of entry `i`; one extra value for the top.
    pub boundaries: Vec<f64>,
}

impl StratumStack {
    pub fn new(entries: Vec<StackEntry>) -> Result<Self> {
        let mut boundaries = Vec::with_capacity(entries.len() + 1);
        let mut acc = 0.0;
        boundaries.push(acc);
        for e in &entries {
            if !(e.height >= 0.0) {
                return Err(Error::Argument(format!(
                    "negative stack height {}",
                    e.height
                )));
            }
            acc += e.height;
            boundaries.push(acc);
        }
        Ok(StratumStack {
            entries,
            boundaries,
        })
    }

    /// Two layers' strata in print order, heights normalized by their
    /// combined volume.
    pub fn from_layers(lower: &StrataPlan, upper: &StrataPlan) -> Result<Self> {
        let mut raw = Vec::new();
        for plan in [lower, upper] {
            if plan.per_stratum_volume.len() != plan.s() || plan.order.len() != plan.s() {
                return Err(Error::Precondition(
                    "strata plan lacks volumes or order".into(),
                ));
            }
            for &i in &plan.order {
                raw.push((plan.base_mixtures[i].clone(), plan.per_stratum_volume[i]));
            }
        }
        let total: f64 = raw.iter().map(|(_, v)| v).sum();
        let scale = if total > 0.0 { 1.0 / total } else { 0.0 };
        StratumStack::new(
            raw.into_iter()
                .map(|(mixture, v)| StackEntry {
                    mixture,
                    height: v * scale,
                })
                .collect(),
        )
    }
}

/// Sum of the heights strictly between entries `a` and `b`.
pub fn stack_distance(stack: &StratumStack, a: usize, b: usize) -> Result<f64> {
    if b <= a || b >= stack.entries.len() {
        return Err(Error::Argument(format!(
            "stack entry {b} does not follow entry {a}"
        )));
    }
    Ok((stack.boundaries[b] - stack.boundaries[a + 1]).max(0.0))
}

fn stack_score(stack: &StratumStack, lower_len: usize) -> f64 {
    let n = stack.entries.len();
    let mut score = 0.0;
    for j in 0..lower_len {
        for i in lower_len..n {
            let gap = stack.boundaries[i] - stack.boundaries[j + 1];
            score += stack.entries[j].mixture.distance(&stack.entries[i].mixture) / (1.0 + gap);
        }
    }
    score
}

/// Score of printing `candidate` (in its current order) on top of `prev`.
pub fn ordering_score(prev: &StrataPlan, candidate: &StrataPlan) -> Result<f64> {
    let stack = StratumStack::from_layers(prev, candidate)?;
    Ok(stack_score(&stack, prev.s()))
}

/// Best order of `candidate` on top of `prev`, lexicographically smallest
/// among ties, with its score.
pub fn best_order(prev: &StrataPlan, candidate: &StrataPlan) -> Result<(Vec<usize>, f64)> {
    let mut trial = candidate.clone();
    let mut best: Option<(Vec<usize>, f64)> = None;
    for perm in (0..candidate.s()).permutations(candidate.s()) {
        trial.order = perm;
        let score = ordering_score(prev, &trial)?;
        // permutations arrive in lexicographic order, so only a strict
        // improvement replaces the incumbent
        if best
            .as_ref()
            .map_or(true, |(_, b)| score > b + SCORE_TIE_TOLERANCE)
        {
            best = Some((trial.order.clone(), score));
        }
    }
    best.ok_or_else(|| Error::Precondition("layer has no strata".into()))
}

/// Bottom-up sweep: a seeded random order for the first non-empty layer,
/// then the best order of each layer given the one below it. Empty layers
/// (no plan and no part paths) are skipped and do not break the chain.
pub fn order_layers(job: &PrintJob, seed: u64) -> Result<PrintJob> {
    let mut out = job.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prev: Option<usize> = None;
    for li in 0..out.layers.len() {
        if out.layers[li].is_empty() && out.layers[li].plan.is_none() {
            continue;
        }
        let Some(plan) = out.layers[li].plan.as_ref() else {
            return Err(Error::Precondition(format!(
                "layer {} has no strata plan",
                out.layers[li].index
            )));
        };
        let order = match prev {
            None => {
                let mut order: Vec<usize> = (0..plan.s()).collect();
                order.shuffle(&mut rng);
                order
            }
            Some(p) => {
                let below = out.layers[p]
                    .plan
                    .as_ref()
                    .expect("previous layer has a plan");
                best_order(below, plan)?.0
            }
        };
        out.layers[li].plan.as_mut().unwrap().order = order;
        prev = Some(li);
    }
    Ok(out)
}
