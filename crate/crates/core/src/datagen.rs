//! Synthetic sequence datasets.
//!
//! Feature vectors are isotropic Gaussians around per-class means
//! (replacing raw images), and label sequences come from one of two
//! processes:
//! - `Uniform`: pick a concept uniformly, then a candidate sequence
//!   uniformly from its set;
//! - `Generative`: draw labels i.i.d. from a class prior and keep the
//!   sequence when exactly one concept covers it (rejection sampling, the
//!   labelling-oracle process).
//!
//! Ground-truth labels are stored for evaluation but hidden from training:
//! the learner consumes [`TrainItem`] views that carry features and the
//! concept tag only.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{KbError, KnowledgeBase, Label, LabelSeq};
use crate::probmatrix::{concept_prior, ClassPrior, MatrixError};
use crate::rational::{self, Rational};
use crate::seeding;

pub const DATASET_SCHEMA: &str = "abl-rank/v1";

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("dataset schema error: {0}")]
    Schema(String),
    #[error("dataset must contain at least one record")]
    EmptyDataset,
    #[error("KB coverage too sparse for generative mode")]
    CoverageTooSparse,
    #[error("feature model: {0}")]
    BadFeatureModel(String),
}

/// Isotropic Gaussian features around one mean per class.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureModel {
    dim: usize,
    class_means: Vec<Vec<f64>>,
    noise_sigma: f64,
    seed: u64,
}

pub const DEFAULT_SEPARATION: f64 = 3.0;
pub const DEFAULT_SIGMA: f64 = 1.0;

impl FeatureModel {
    pub fn new(
        dim: usize,
        class_means: Vec<Vec<f64>>,
        noise_sigma: f64,
        seed: u64,
    ) -> Result<Self, DataError> {
        if dim < 2 {
            return Err(DataError::BadFeatureModel(format!("dim {dim} < 2")));
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(DataError::BadFeatureModel(format!("bad sigma {noise_sigma}")));
        }
        if class_means.len() < 2 {
            return Err(DataError::BadFeatureModel("need at least 2 class means".into()));
        }
        for mean in &class_means {
            if mean.len() != dim {
                return Err(DataError::BadFeatureModel("mean dimension mismatch".into()));
            }
        }
        for (i, a) in class_means.iter().enumerate() {
            if class_means[..i].contains(a) {
                return Err(DataError::BadFeatureModel(format!("class mean {i} duplicated")));
            }
        }
        Ok(Self { dim, class_means, noise_sigma, seed })
    }

    /// Means at `sep * e_j` for `dim >= classes`; when `dim < classes`,
    /// seeded random directions of norm `sep`.
    pub fn gaussian(
        classes: usize,
        dim: usize,
        sep: f64,
        sigma: f64,
        seed: u64,
    ) -> Result<Self, DataError> {
        let dim = dim.max(2);
        let means = if dim >= classes {
            (0..classes)
                .map(|j| {
                    let mut mean = vec![0.0; dim];
                    mean[j] = sep;
                    mean
                })
                .collect()
        } else {
            let mut rng = seeding::rng_from(seeding::derive(seed, "feature-means"));
            (0..classes)
                .map(|_| {
                    let raw: Vec<f64> =
                        (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
                    raw.iter().map(|v| v / norm * sep).collect()
                })
                .collect()
        };
        Self::new(dim, means, sigma, seed)
    }

    /// The default benchmark model: `dim = classes`, separation 3, sigma 1.
    pub fn default_for(classes: usize) -> Self {
        Self::gaussian(classes, classes, DEFAULT_SEPARATION, DEFAULT_SIGMA, 0)
            .expect("default model is valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.class_means.len()
    }

    pub fn mean(&self, class: Label) -> &[f64] {
        &self.class_means[class as usize]
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    /// Nearest-mean classification; the reference decision rule used to
    /// calibrate accuracy thresholds.
    pub fn nearest_mean(&self, x: &[f64]) -> Label {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (j, mean) in self.class_means.iter().enumerate() {
            let d: f64 = mean.iter().zip(x).map(|(m, v)| (m - v) * (m - v)).sum();
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        best as Label
    }
}

/// One feature vector for an instance of class `y`.
pub fn sample_instance(model: &FeatureModel, y: Label, rng: &mut ChaCha8Rng) -> Vec<f64> {
    model
        .mean(y)
        .iter()
        .map(|&m| {
            let noise: f64 = StandardNormal.sample(rng);
            m + model.noise_sigma * noise
        })
        .collect()
}

/// An input sequence with its observed concept and hidden true labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    #[serde(rename = "concept")]
    concept_id: String,
    #[serde(rename = "x")]
    features: Vec<Vec<f64>>,
    y_true: LabelSeq,
}

impl SequenceRecord {
    pub fn concept_id(&self) -> &str {
        &self.concept_id
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    /// Ground-truth labels; evaluation only, never visible to training.
    pub fn hidden_labels(&self) -> &[Label] {
        &self.y_true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenMode {
    Uniform,
    Generative,
}

/// The training view of one record: features and concept tag only.
#[derive(Debug, Clone, Copy)]
pub struct TrainItem<'a> {
    pub concept_id: &'a str,
    pub features: &'a [Vec<f64>],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceDataset {
    classes: usize,
    dim: usize,
    mode: GenMode,
    seed: u64,
    records: Vec<SequenceRecord>,
}

impl SequenceDataset {
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mode(&self) -> GenMode {
        self.mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[SequenceRecord] {
        &self.records
    }

    /// What training is allowed to see.
    pub fn train_view(&self) -> Vec<TrainItem<'_>> {
        self.records
            .iter()
            .map(|r| TrainItem { concept_id: &r.concept_id, features: &r.features })
            .collect()
    }

    /// Labeled instances for evaluation.
    pub fn labeled_instances(&self) -> impl Iterator<Item = (&[f64], Label)> {
        self.records.iter().flat_map(|r| {
            r.features.iter().map(|x| x.as_slice()).zip(r.y_true.iter().copied())
        })
    }

    pub fn write_to(&self, mut out: impl Write) -> Result<(), DataError> {
        let header = serde_json::json!({
            "schema": DATASET_SCHEMA,
            "classes": self.classes,
            "dim": self.dim,
            "mode": self.mode,
            "seed": self.seed,
        });
        writeln!(out, "{header}")?;
        for record in &self.records {
            writeln!(out, "{}", serde_json::to_string(record).expect("record serialization"))?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_from(input: impl BufRead) -> Result<Self, DataError> {
        let mut lines = input.lines();
        let header_line = lines.next().ok_or(DataError::Schema("empty file".into()))??;
        let header: serde_json::Value = serde_json::from_str(&header_line)
            .map_err(|e| DataError::Schema(format!("bad header: {e}")))?;
        if header["schema"] != DATASET_SCHEMA {
            return Err(DataError::Schema(format!(
                "unsupported schema {}, expected {DATASET_SCHEMA:?}",
                header["schema"]
            )));
        }
        let classes = header["classes"]
            .as_u64()
            .ok_or(DataError::Schema("missing classes".into()))? as usize;
        let dim =
            header["dim"].as_u64().ok_or(DataError::Schema("missing dim".into()))? as usize;
        let mode: GenMode = serde_json::from_value(header["mode"].clone())
            .map_err(|e| DataError::Schema(format!("bad mode: {e}")))?;
        let seed =
            header["seed"].as_u64().ok_or(DataError::Schema("missing seed".into()))?;

        let mut records = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: SequenceRecord = serde_json::from_str(&line)
                .map_err(|e| DataError::Schema(format!("bad record: {e}")))?;
            for x in &record.features {
                if x.len() != dim {
                    return Err(DataError::Schema(format!(
                        "record feature dim {} != header dim {dim}",
                        x.len()
                    )));
                }
            }
            if record.features.len() != record.y_true.len() {
                return Err(DataError::Schema("feature/label length mismatch".into()));
            }
            if record.y_true.iter().any(|&y| y as usize >= classes) {
                return Err(DataError::Schema("label out of range".into()));
            }
            records.push(record);
        }
        if records.is_empty() {
            return Err(DataError::EmptyDataset);
        }
        Ok(Self { classes, dim, mode, seed, records })
    }
}

/// A record whose labels are drawn uniformly from one concept's candidates.
pub fn sample_uniform(
    kb: &KnowledgeBase,
    concept_id: &str,
    model: &FeatureModel,
    rng: &mut ChaCha8Rng,
) -> Result<SequenceRecord, DataError> {
    let set = kb.candidate_set(concept_id)?;
    let y_true = set.sequences()[rng.gen_range(0..set.len())].clone();
    let features = y_true.iter().map(|&y| sample_instance(model, y, rng)).collect();
    Ok(SequenceRecord { concept_id: concept_id.to_string(), features, y_true })
}

/// Rejection sampler for the labelling-oracle process.
#[derive(Debug)]
pub struct GenerativeSampler<'a> {
    kb: &'a KnowledgeBase,
    model: &'a FeatureModel,
    cumulative: Vec<f64>,
    arities: Vec<usize>,
    attempts: u64,
    accepts: u64,
}

impl<'a> GenerativeSampler<'a> {
    pub fn new(
        kb: &'a KnowledgeBase,
        prior: &ClassPrior,
        model: &'a FeatureModel,
    ) -> Result<Self, DataError> {
        let sets = kb.candidate_sets()?;
        let mut arities: Vec<usize> = sets.iter().map(|s| s.arity()).collect();
        arities.sort_unstable();
        arities.dedup();

        // Exact coverage: mean over sequence lengths of the covered mass.
        let mut covered = rational::zero();
        for set in sets {
            covered += concept_prior(kb, prior, set.concept_id())?;
        }
        let coverage =
            covered / Rational::from_integer(num_bigint::BigInt::from(arities.len() as u64));
        if rational::to_f64(&coverage) < 1e-6 {
            return Err(DataError::CoverageTooSparse);
        }

        let mut cumulative = Vec::with_capacity(prior.len());
        let mut acc = 0.0;
        for p in prior.probs() {
            acc += rational::to_f64(p);
            cumulative.push(acc);
        }
        Ok(Self { kb, model, cumulative, arities, attempts: 0, accepts: 0 })
    }

    fn draw_label(&self, rng: &mut ChaCha8Rng) -> Label {
        let u: f64 = rng.gen();
        for (j, &threshold) in self.cumulative.iter().enumerate() {
            if u < threshold {
                return j as Label;
            }
        }
        (self.cumulative.len() - 1) as Label
    }

    pub fn draw(&mut self, rng: &mut ChaCha8Rng) -> SequenceRecord {
        let sets = self.kb.candidate_sets().expect("checked at construction");
        loop {
            self.attempts += 1;
            let arity = self.arities[rng.gen_range(0..self.arities.len())];
            let y_true: LabelSeq = (0..arity).map(|_| self.draw_label(rng)).collect();
            // Equal-arity candidate sets are disjoint, so at most one matches.
            let covering =
                sets.iter().find(|set| set.arity() == arity && set.contains(&y_true));
            if let Some(set) = covering {
                self.accepts += 1;
                let features =
                    y_true.iter().map(|&y| sample_instance(self.model, y, rng)).collect();
                return SequenceRecord {
                    concept_id: set.concept_id().to_string(),
                    features,
                    y_true,
                };
            }
        }
    }

    /// Fraction of label draws the oracle accepted so far.
    pub fn acceptance_rate(&self) -> f64 {
        if self.attempts == 0 {
            return 0.0;
        }
        self.accepts as f64 / self.attempts as f64
    }
}

/// One record from the labelling-oracle process.
pub fn sample_generative(
    kb: &KnowledgeBase,
    prior: &ClassPrior,
    model: &FeatureModel,
    rng: &mut ChaCha8Rng,
) -> Result<SequenceRecord, DataError> {
    let mut sampler = GenerativeSampler::new(kb, prior, model)?;
    Ok(sampler.draw(rng))
}

/// Generates `n` records under the requested mode, deterministically from
/// the seed. The prior only matters in generative mode.
pub fn make_dataset(
    kb: &KnowledgeBase,
    mode: GenMode,
    prior: &ClassPrior,
    model: &FeatureModel,
    n: usize,
    seed: u64,
) -> Result<SequenceDataset, DataError> {
    if n == 0 {
        return Err(DataError::EmptyDataset);
    }
    let mut rng = seeding::rng_from(seeding::derive(seed, "dataset"));
    let records = match mode {
        GenMode::Uniform => {
            kb.candidate_sets()?;
            let concept_ids: Vec<&str> =
                kb.concepts().iter().map(|c| c.id.as_str()).collect();
            (0..n)
                .map(|_| {
                    let concept = concept_ids[rng.gen_range(0..concept_ids.len())];
                    sample_uniform(kb, concept, model, &mut rng)
                })
                .collect::<Result<Vec<_>, _>>()?
        }
        GenMode::Generative => {
            let mut sampler = GenerativeSampler::new(kb, prior, model)?;
            (0..n).map(|_| sampler.draw(&mut rng)).collect()
        }
    };
    Ok(SequenceDataset { classes: kb.num_classes(), dim: model.dim(), mode, seed, records })
}
