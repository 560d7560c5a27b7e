//! Classifiers, losses, abduction strategies, and the training loops.
//!
//! Five objectives are available: three abduction strategies (random,
//! maximum likelihood, minimum Hamming distance), the exact candidate
//! average, and the matrix-mixed risk over synthetic (concept, position)
//! labels. Gradients are hand-derived and validated against central finite
//! differences.

mod abduce;
mod eval;
mod gradcheck;
mod loss;
mod model;
mod optim;
mod train;

pub use abduce::{abduce, Strategy};
pub use eval::{evaluate, EvalReport, PERMUTATION_LIMIT};
pub use gradcheck::grad_check;
pub use loss::{
    ce_grad_logits, ce_loss, ce_loss_grad_params, seq_loss, seq_loss_grad_params, tl_grad_logits,
    tl_loss, tl_loss_grad_params, tl_loss_probs, weighted_ce_grad_logits, weighted_ce_loss,
    PROB_FLOOR,
};
pub use model::{argmax, predict, softmax, Activation, Arch, Classifier, ForwardCache};
pub use optim::{AdamParams, AdamState};
pub use train::{candidate_frequencies, expand_tl_pairs, nesy_epoch, tl_epoch, train, TlPair};

use serde::Serialize;
use thiserror::Error;

use crate::kb::KbError;
use crate::probmatrix::{ClassPrior, ColumnIndex, MatrixError, ProbMatrix};
use crate::rational;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("non-finite gradient at optimizer step {step}")]
    NonFiniteGradient { step: u64 },
    #[error("non-finite epoch loss {loss}")]
    NonFiniteLoss { loss: f64 },
    #[error("record concept {id:?} is not part of the matrix/KB")]
    UnknownConcept { id: String },
    #[error("matrix column for ({concept}, {position}) has no support")]
    DeadColumn { concept: String, position: usize },
    #[error("abduction-based epoch invoked with the matrix objective")]
    WrongObjective,
}

/// The five learning objectives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rand,
    MaxP,
    MinD,
    Avg,
    Tl,
}

impl Method {
    pub const ALL: [Method; 5] =
        [Method::Rand, Method::MaxP, Method::MinD, Method::Avg, Method::Tl];

    pub fn name(self) -> &'static str {
        match self {
            Method::Rand => "rand",
            Method::MaxP => "maxp",
            Method::MinD => "mind",
            Method::Avg => "avg",
            Method::Tl => "tl",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "rand" => Some(Method::Rand),
            "maxp" => Some(Method::MaxP),
            "mind" => Some(Method::MinD),
            "avg" => Some(Method::Avg),
            "tl" => Some(Method::Tl),
            _ => None,
        }
    }
}

/// Training hyper-parameters. The defaults mirror the benchmark recipe:
/// Adam at learning rate 1e-3, batches of 256, 100 epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub seed: u64,
    /// Class prior behind the matrix objective; ignored by the others.
    pub prior: ClassPrior,
}

impl TrainConfig {
    pub fn recipe(method: Method, classes: usize, seed: u64) -> Self {
        Self {
            method,
            epochs: 100,
            batch_size: 256,
            learning_rate: 1e-3,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            seed,
            prior: ClassPrior::uniform(classes),
        }
    }

    pub fn adam_params(&self) -> AdamParams {
        AdamParams {
            learning_rate: self.learning_rate,
            beta1: self.adam_betas.0,
            beta2: self.adam_betas.1,
            eps: self.adam_eps,
        }
    }
}

/// Outcome of a training run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub method: Method,
    pub seed: u64,
    pub epochs: usize,
    pub final_accuracy: f64,
    pub perm_max_accuracy: Option<f64>,
    pub loss_curve: Vec<f64>,
    pub wall_ms: u64,
}

/// Float view of a probability matrix for training: column-major entries
/// plus per-concept column blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakMatrix {
    classes: usize,
    columns: Vec<Vec<f64>>,
    /// (concept id, first column, width) in declaration order.
    blocks: Vec<(String, usize, usize)>,
}

impl WeakMatrix {
    pub fn from_prob_matrix(matrix: &ProbMatrix) -> Self {
        let classes = matrix.classes();
        let n = matrix.num_columns();
        let columns: Vec<Vec<f64>> = (0..n)
            .map(|o| (0..classes).map(|j| rational::to_f64(&matrix.data[j][o])).collect())
            .collect();
        let blocks = match &matrix.columns {
            ColumnIndex::Positions(m) => {
                let id = matrix
                    .concept_priors
                    .first()
                    .map(|(id, _)| id.clone())
                    .unwrap_or_default();
                vec![(id, 0, *m)]
            }
            ColumnIndex::ConceptPositions(entries) => {
                let mut blocks: Vec<(String, usize, usize)> = Vec::new();
                for (o, (id, _)) in entries.iter().enumerate() {
                    match blocks.last_mut() {
                        Some((last, _, width)) if last == id => *width += 1,
                        _ => blocks.push((id.clone(), o, 1)),
                    }
                }
                blocks
            }
        };
        Self { classes, columns, blocks }
    }

    /// The identity matrix with one single-column block per class label;
    /// mixing with it reduces the matrix objective to plain cross-entropy.
    pub fn identity(classes: usize) -> Self {
        let ids: Vec<String> = (0..classes).map(|j| format!("class{j}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        Self::identity_for(&refs)
    }

    /// Identity matrix with caller-named blocks, one class per concept.
    pub fn identity_for(concept_ids: &[&str]) -> Self {
        let classes = concept_ids.len();
        let columns = (0..classes)
            .map(|o| (0..classes).map(|j| if j == o { 1.0 } else { 0.0 }).collect())
            .collect();
        let blocks = concept_ids
            .iter()
            .enumerate()
            .map(|(o, id)| (id.to_string(), o, 1))
            .collect();
        Self { classes, columns, blocks }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, o: usize) -> &[f64] {
        &self.columns[o]
    }

    /// First column and width of a concept's block.
    pub fn concept_block(&self, concept_id: &str) -> Option<(usize, usize)> {
        self.blocks
            .iter()
            .find(|(id, _, _)| id == concept_id)
            .map(|(_, offset, width)| (*offset, *width))
    }
}
