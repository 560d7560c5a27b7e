//! Selection of abduced labels from a candidate set.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::kb::{CandidateSet, Label, LabelSeq};

/// How to pick one candidate labelling for a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Uniformly at random.
    Rand,
    /// Highest product of per-position predicted probabilities.
    MaxP,
    /// Smallest Hamming distance to the predicted labels.
    MinD,
}

/// Picks a candidate. `probs` holds the per-position softmax outputs and
/// `preds` the per-position arg-max labels of the current classifier.
/// MaxP and MinD break ties toward the lexicographically smallest
/// candidate (candidate sets are sorted); Rand consumes one draw.
pub fn abduce(
    strategy: Strategy,
    set: &CandidateSet,
    probs: &[Vec<f64>],
    preds: &[Label],
    rng: &mut ChaCha8Rng,
) -> LabelSeq {
    debug_assert!(!set.is_empty());
    let candidates = set.sequences();
    match strategy {
        Strategy::Rand => candidates[rng.gen_range(0..candidates.len())].clone(),
        Strategy::MaxP => {
            // Log-domain: products of many probabilities underflow.
            let mut best = 0usize;
            let mut best_score = f64::NEG_INFINITY;
            for (i, candidate) in candidates.iter().enumerate() {
                let score: f64 = candidate
                    .iter()
                    .enumerate()
                    .map(|(k, &y)| probs[k][y as usize].max(f64::MIN_POSITIVE).ln())
                    .sum();
                if score > best_score {
                    best_score = score;
                    best = i;
                }
            }
            candidates[best].clone()
        }
        Strategy::MinD => {
            let mut best = 0usize;
            let mut best_distance = usize::MAX;
            for (i, candidate) in candidates.iter().enumerate() {
                let distance =
                    candidate.iter().zip(preds).filter(|(a, b)| a != b).count();
                if distance < best_distance {
                    best_distance = distance;
                    best = i;
                }
            }
            candidates[best].clone()
        }
    }
}
