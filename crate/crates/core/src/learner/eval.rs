//! Instance-level evaluation plus a label-permutation diagnostic that
//! exposes shortcut solutions (classifiers consistent with the KB under a
//! relabelling of classes).

use itertools::Itertools;

use crate::datagen::SequenceDataset;
use crate::kb::Label;

use super::model::{predict, Classifier};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    /// Fraction of test instances predicted correctly.
    pub accuracy: f64,
    /// Best accuracy over all relabellings of the classes; exact for up to
    /// six classes, absent above that.
    pub perm_max_accuracy: Option<f64>,
}

pub const PERMUTATION_LIMIT: usize = 6;

pub fn evaluate(h: &Classifier, test: &SequenceDataset) -> EvalReport {
    let pairs: Vec<(Label, Label)> =
        test.labeled_instances().map(|(x, y)| (predict(h, x), y)).collect();
    let total = pairs.len() as f64;
    let hits = pairs.iter().filter(|(pred, truth)| pred == truth).count();
    let accuracy = hits as f64 / total;

    let classes = test.classes();
    let perm_max_accuracy = (classes <= PERMUTATION_LIMIT).then(|| {
        (0..classes as Label)
            .permutations(classes)
            .map(|perm| {
                let hits = pairs
                    .iter()
                    .filter(|(pred, truth)| perm[*pred as usize] == *truth)
                    .count();
                hits as f64 / total
            })
            .fold(0.0f64, f64::max)
    });
    EvalReport { accuracy, perm_max_accuracy }
}
