//! Experiment orchestration: empirical verification of the risk bounds,
//! recovery runs comparing the rank verdict against achieved accuracy, and
//! sweeps over numeral bases and random knowledge bases.

use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::Instant;
use thiserror::Error;

use crate::datagen::{make_dataset, DataError, FeatureModel, GenMode, TrainItem};
use crate::kb::{random_kb, KbError, KnowledgeBase, NormalForm};
use crate::learner::{
    candidate_frequencies, evaluate, softmax, tl_loss_probs, train, weighted_ce_loss, Arch,
    Classifier, Method, TrainConfig, TrainError, TrainReport, WeakMatrix,
};
use crate::probmatrix::{
    diagnose, joint_matrix, location_matrix_uniform, sequence_prior, ClassPrior, DiagnosisReport,
    MatrixError,
};
use crate::rational;
use crate::seeding;

#[derive(Debug, Error)]
pub enum DiagError {
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Which risk bound a check exercised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    /// Single concept, uniform candidates: location risk vs `log a`.
    Location,
    /// Any KB under the generative process: target-location risk vs
    /// `log m - log b`.
    TargetLocation,
}

/// One classifier's empirical risks and bound slack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundTrial {
    /// Exact expectation of the abduction objective over candidates.
    pub nesy_avg_risk: f64,
    /// Empirical location / target-location risk through the matrix.
    pub weak_risk: f64,
    /// `nesy_avg_risk + C`.
    pub bound_rhs: f64,
    /// `bound_rhs - weak_risk`; negative below `-tolerance` is a violation.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheckResult {
    pub kb_id: String,
    pub n: usize,
    pub mode: BoundMode,
    /// The additive constant C of the exercised bound.
    pub constant: f64,
    pub tolerance: f64,
    pub trials: Vec<BoundTrial>,
    pub violations: usize,
    /// Slack of the analytic tightness instance (swap candidates, uniform
    /// classifier), where the bound holds with equality.
    pub tightness_slack: f64,
}

impl BoundCheckResult {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }
}

/// Mean over records of the exact candidate-expectation of the abduction
/// objective, with per-(concept, position) class weights.
fn mean_nesy_risk(
    h: &Classifier,
    view: &[TrainItem],
    weights: &HashMap<String, Vec<Vec<f64>>>,
) -> f64 {
    let total: f64 = view
        .iter()
        .map(|item| {
            let freq = &weights[item.concept_id];
            let per_position: f64 = item
                .features
                .iter()
                .enumerate()
                .map(|(k, x)| weighted_ce_loss(&softmax(&h.forward(x)), &freq[k]))
                .sum();
            per_position / item.features.len() as f64
        })
        .sum();
    total / view.len() as f64
}

/// Mean over records of the matrix-mixed risk.
fn mean_weak_risk(h: &Classifier, view: &[TrainItem], matrix: &WeakMatrix) -> f64 {
    let total: f64 = view
        .iter()
        .map(|item| {
            let (offset, _) = matrix
                .concept_block(item.concept_id)
                .expect("view concepts come from the same KB");
            let per_position: f64 = item
                .features
                .iter()
                .enumerate()
                .map(|(k, x)| tl_loss_probs(&softmax(&h.forward(x)), matrix.column(offset + k)))
                .sum();
            per_position / item.features.len() as f64
        })
        .sum();
    total / view.len() as f64
}

/// Candidate weights `p(Y | concept)` folded into per-position class
/// distributions, under the i.i.d. prior.
fn conditional_class_frequencies(
    kb: &KnowledgeBase,
    prior: &ClassPrior,
) -> Result<HashMap<String, Vec<Vec<f64>>>, DiagError> {
    let mut out = HashMap::new();
    for set in kb.candidate_sets()? {
        let total: f64 = set
            .sequences()
            .iter()
            .map(|seq| rational::to_f64(&sequence_prior(prior, seq)))
            .sum();
        let mut freq = vec![vec![0.0f64; kb.num_classes()]; set.arity()];
        for seq in set.sequences() {
            let weight = rational::to_f64(&sequence_prior(prior, seq)) / total;
            for (k, &y) in seq.iter().enumerate() {
                freq[k][y as usize] += weight;
            }
        }
        out.insert(set.concept_id().to_string(), freq);
    }
    Ok(out)
}

/// Empirically checks the relevant risk bound with randomly initialized
/// linear classifiers on one sampled dataset, and evaluates the analytic
/// tightness instance alongside.
pub fn verify_bound(
    kb: &KnowledgeBase,
    prior: &ClassPrior,
    n: usize,
    num_classifiers: usize,
    tolerance: f64,
    seed: u64,
) -> Result<BoundCheckResult, DiagError> {
    let classes = kb.num_classes();
    let model = FeatureModel::default_for(classes);
    let single = kb.candidate_sets()?.len() == 1;

    let (mode, matrix, constant, weights, data) = if single {
        let q = location_matrix_uniform(kb)?;
        let constant = q.constants.location_gap().expect("single concept");
        let weights = candidate_frequencies(kb)?;
        let data = make_dataset(kb, GenMode::Uniform, prior, &model, n, seeding::derive(seed, "bound-data"))?;
        (BoundMode::Location, WeakMatrix::from_prob_matrix(&q), constant, weights, data)
    } else {
        let q = joint_matrix(kb, prior)?;
        let constant = q.constants.target_location_gap(kb.max_arity());
        let weights = conditional_class_frequencies(kb, prior)?;
        let data = make_dataset(kb, GenMode::Generative, prior, &model, n, seeding::derive(seed, "bound-data"))?;
        (BoundMode::TargetLocation, WeakMatrix::from_prob_matrix(&q), constant, weights, data)
    };

    let view = data.train_view();
    let mut rng = seeding::rng_from(seeding::derive(seed, "bound-classifiers"));
    let mut trials = Vec::with_capacity(num_classifiers);
    let mut violations = 0;
    for _ in 0..num_classifiers {
        let h = Classifier::random_init(Arch::Linear, model.dim(), classes, 1.0, &mut rng);
        let nesy_avg_risk = mean_nesy_risk(&h, &view, &weights);
        let weak_risk = mean_weak_risk(&h, &view, &matrix);
        let bound_rhs = nesy_avg_risk + constant;
        let slack = bound_rhs - weak_risk;
        if slack < -tolerance {
            violations += 1;
        }
        trials.push(BoundTrial { nesy_avg_risk, weak_risk, bound_rhs, slack });
    }

    Ok(BoundCheckResult {
        kb_id: kb.id().to_string(),
        n,
        mode,
        constant,
        tolerance,
        trials,
        violations,
        tightness_slack: tightness_slack(n, seeding::derive(seed, "tightness"))?,
    })
}

/// Slack of the bound on its equality case: candidate set {[0,1],[1,0]}
/// and the uniform classifier, where the location risk meets the
/// abduction objective exactly (C = 0).
pub fn tightness_slack(n: usize, seed: u64) -> Result<f64, DiagError> {
    let kb = crate::kb::parse_kb("classes 2\nconcept swap arity 2 { facts: [0,1] [1,0] }")?
        .ground()?;
    let prior = ClassPrior::uniform(2);
    let model = FeatureModel::default_for(2);
    let data = make_dataset(&kb, GenMode::Uniform, &prior, &model, n, seed)?;
    let view = data.train_view();

    let h = Classifier::zeros(Arch::Linear, 2, 2);
    let q = location_matrix_uniform(&kb)?;
    let constant = q.constants.location_gap().expect("single concept");
    let weights = candidate_frequencies(&kb)?;
    let nesy = mean_nesy_risk(&h, &view, &weights);
    let weak = mean_weak_risk(&h, &view, &WeakMatrix::from_prob_matrix(&q));
    Ok(weak - (nesy + constant))
}

/// Feature-model and dataset-size knobs for recovery runs and sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoverySettings {
    pub arch: Arch,
    pub feature_dim: Option<usize>,
    pub feature_sep: f64,
    pub feature_sigma: f64,
    /// How training and test sequences are drawn. Uniform is the benchmark
    /// protocol (concept uniform, candidate uniform within its set).
    pub data_mode: GenMode,
    pub n_train: usize,
    pub n_test: usize,
    /// When false, reports carry `wall_ms = 0` so outputs are byte-stable.
    pub timings: bool,
}

impl Default for RecoverySettings {
    fn default() -> Self {
        Self {
            arch: Arch::Linear,
            feature_dim: None,
            feature_sep: crate::datagen::DEFAULT_SEPARATION,
            feature_sigma: crate::datagen::DEFAULT_SIGMA,
            data_mode: GenMode::Uniform,
            n_train: 10_000,
            n_test: 2_000,
            timings: false,
        }
    }
}

impl RecoverySettings {
    pub fn feature_model(&self, classes: usize, seed: u64) -> Result<FeatureModel, DataError> {
        FeatureModel::gaussian(
            classes,
            self.feature_dim.unwrap_or(classes),
            self.feature_sep,
            self.feature_sigma,
            seed,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryOutcome {
    pub diagnosis: DiagnosisReport,
    pub train: TrainReport,
}

/// Diagnoses the KB, trains a fresh classifier on a fresh dataset under
/// the configured objective, and evaluates on held-out labeled data, so
/// the rank verdict can be compared with what training achieved.
pub fn recovery_experiment(
    kb: &KnowledgeBase,
    prior: &ClassPrior,
    cfg: &TrainConfig,
    settings: &RecoverySettings,
) -> Result<RecoveryOutcome, DiagError> {
    let started = Instant::now();
    let diagnosis = diagnose(kb, prior)?;
    let classes = kb.num_classes();
    let model = settings.feature_model(classes, cfg.seed)?;

    let train_data = make_dataset(
        kb,
        settings.data_mode,
        prior,
        &model,
        settings.n_train,
        seeding::derive(cfg.seed, "train-data"),
    )?;
    let test_data = make_dataset(
        kb,
        settings.data_mode,
        prior,
        &model,
        settings.n_test,
        seeding::derive(cfg.seed, "test-data"),
    )?;

    let mut init_rng = seeding::rng_from(seeding::derive(cfg.seed, "init"));
    // Framework-default flavor of init: weights ~ N(0, 1/sqrt(fan_in)).
    let init_scale = 1.0 / (model.dim() as f64).sqrt();
    let mut h =
        Classifier::random_init(settings.arch, model.dim(), classes, init_scale, &mut init_rng);
    let loss_curve = train(&mut h, kb, &train_data.train_view(), cfg)?;
    let eval = evaluate(&h, &test_data);

    let train = TrainReport {
        method: cfg.method,
        seed: cfg.seed,
        epochs: cfg.epochs,
        final_accuracy: eval.accuracy,
        perm_max_accuracy: eval.perm_max_accuracy,
        loss_curve,
        wall_ms: if settings.timings { started.elapsed().as_millis() as u64 } else { 0 },
    };
    Ok(RecoveryOutcome { diagnosis, train })
}

/// One sweep cell: a KB diagnosed and trained under one method and seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub kb_id: String,
    pub form: String,
    pub arity: usize,
    pub rank: usize,
    pub full_row_rank: bool,
    pub method: Method,
    pub seed: u64,
    pub accuracy: f64,
    pub perm_max_accuracy: Option<f64>,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "kb_id,form,arity,rank,full_row_rank,method,seed,accuracy,perm_max_accuracy,wall_ms\n",
        );
        for row in &self.rows {
            let perm = row
                .perm_max_accuracy
                .map(|p| p.to_string())
                .unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                row.kb_id,
                row.form,
                row.arity,
                row.rank,
                row.full_row_rank,
                row.method.name(),
                row.seed,
                row.accuracy,
                perm,
                row.wall_ms
            )
            .expect("string write");
        }
        out
    }

    /// Mean accuracy of rows matching the verdict group and method.
    pub fn group_mean_accuracy(&self, full_row_rank: bool, method: Method) -> Option<f64> {
        let accs: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.full_row_rank == full_row_rank && r.method == method)
            .map(|r| r.accuracy)
            .collect();
        if accs.is_empty() {
            return None;
        }
        Some(accs.iter().sum::<f64>() / accs.len() as f64)
    }
}

/// For each numeral base: ground the equation KB, compute the exact rank
/// against `c = base + 2`, and run a matrix-objective recovery.
pub fn hed_base_sweep(
    bases: impl IntoIterator<Item = u32>,
    epochs: usize,
    settings: &RecoverySettings,
    seed: u64,
) -> Result<SweepResult, DiagError> {
    let bases: Vec<u32> = bases.into_iter().collect();
    let rows = bases
        .par_iter()
        .map(|&base| -> Result<SweepRow, DiagError> {
            let kb = crate::kb::hed(base)?.ground()?;
            let classes = kb.num_classes();
            let cell_seed = seeding::derive_indexed(seed, "hed-base", u64::from(base));
            let mut cfg = TrainConfig::recipe(Method::Tl, classes, cell_seed);
            cfg.epochs = epochs;
            let outcome = recovery_experiment(&kb, &ClassPrior::uniform(classes), &cfg, settings)?;
            Ok(SweepRow {
                kb_id: kb.id().to_string(),
                form: "hed".into(),
                arity: kb.max_arity(),
                rank: outcome.diagnosis.rank,
                full_row_rank: outcome.diagnosis.full_row_rank,
                method: Method::Tl,
                seed: cell_seed,
                accuracy: outcome.train.final_accuracy,
                perm_max_accuracy: outcome.train.perm_max_accuracy,
                wall_ms: outcome.train.wall_ms,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepResult { rows })
}

/// Generates random normal-form KBs, diagnoses each, and trains the given
/// methods on each; rows group by the exact-rank verdict.
pub fn random_kb_sweep(
    form: NormalForm,
    arity: usize,
    num_kbs: usize,
    methods: &[Method],
    epochs: usize,
    settings: &RecoverySettings,
    seed: u64,
) -> Result<SweepResult, DiagError> {
    let kbs = (0..num_kbs)
        .map(|i| random_kb(form, arity, seeding::derive_indexed(seed, "sweep-kb", i as u64)))
        .collect::<Result<Vec<_>, _>>()?;

    let cells: Vec<(usize, Method)> = (0..num_kbs)
        .flat_map(|i| methods.iter().map(move |&m| (i, m)))
        .collect();

    let rows = cells
        .par_iter()
        .map(|&(i, method)| -> Result<SweepRow, DiagError> {
            let kb = &kbs[i];
            let classes = kb.num_classes();
            let cell_seed =
                seeding::derive_indexed(seed, "sweep-cell", (i * Method::ALL.len()) as u64 + method as u64);
            let mut cfg = TrainConfig::recipe(method, classes, cell_seed);
            cfg.epochs = epochs;
            let outcome = recovery_experiment(kb, &ClassPrior::uniform(classes), &cfg, settings)?;
            Ok(SweepRow {
                kb_id: kb.id().to_string(),
                form: form.name().into(),
                arity,
                rank: outcome.diagnosis.rank,
                full_row_rank: outcome.diagnosis.full_row_rank,
                method,
                seed: cell_seed,
                accuracy: outcome.train.final_accuracy,
                perm_max_accuracy: outcome.train.perm_max_accuracy,
                wall_ms: outcome.train.wall_ms,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepResult { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{conj_eq, conjunction};

    fn small_settings() -> RecoverySettings {
        RecoverySettings { n_train: 1500, n_test: 600, ..RecoverySettings::default() }
    }

    #[test]
    fn bound_holds_on_conj_eq_location_mode() {
        let kb = conj_eq().ground().unwrap();
        let result =
            verify_bound(&kb, &ClassPrior::uniform(2), 2000, 10, 0.02, 41).unwrap();
        assert_eq!(result.mode, BoundMode::Location);
        assert_eq!(result.violations, 0);
        assert!((result.constant - (7f64 / 4.0).ln()).abs() < 1e-12);
        assert!(result.tightness_slack.abs() <= 0.02, "slack {}", result.tightness_slack);
    }

    #[test]
    fn bound_holds_on_conjunction_target_mode() {
        let kb = conjunction().ground().unwrap();
        let result =
            verify_bound(&kb, &ClassPrior::uniform(2), 2000, 10, 0.02, 43).unwrap();
        assert_eq!(result.mode, BoundMode::TargetLocation);
        assert_eq!(result.violations, 0);
        assert!((result.constant - 8f64.ln()).abs() < 1e-12);
        for trial in &result.trials {
            assert!(trial.slack >= -1e-9, "pointwise bound violated: {}", trial.slack);
        }
    }

    #[test]
    fn tightness_slack_is_numerically_zero() {
        let slack = tightness_slack(2000, 7).unwrap();
        assert!(slack.abs() < 1e-9, "slack {slack}");
    }

    #[test]
    fn recovery_on_conjunction_reaches_high_accuracy() {
        let kb = conjunction().ground().unwrap();
        let mut cfg = TrainConfig::recipe(Method::Tl, 2, 51);
        cfg.epochs = 40;
        let outcome =
            recovery_experiment(&kb, &ClassPrior::uniform(2), &cfg, &small_settings()).unwrap();
        assert!(outcome.diagnosis.full_row_rank);
        assert!(
            outcome.train.final_accuracy >= 0.9,
            "accuracy {}",
            outcome.train.final_accuracy
        );
        assert_eq!(outcome.train.wall_ms, 0);
        assert_eq!(outcome.train.loss_curve.len(), 40);
    }

    #[test]
    fn recovery_on_conj0_only_stays_near_chance() {
        let kb = conjunction().restrict(&["conj0"]).unwrap().ground().unwrap();
        let mut cfg = TrainConfig::recipe(Method::Tl, 2, 53);
        cfg.epochs = 20;
        let outcome =
            recovery_experiment(&kb, &ClassPrior::uniform(2), &cfg, &small_settings()).unwrap();
        assert!(!outcome.diagnosis.full_row_rank);
        assert!(
            outcome.train.final_accuracy <= 0.65,
            "accuracy {}",
            outcome.train.final_accuracy
        );
    }

    #[test]
    fn sweep_csv_has_header_and_rows() {
        let result = random_kb_sweep(
            NormalForm::Dnf,
            3,
            3,
            &[Method::Tl],
            10,
            &RecoverySettings { n_train: 400, n_test: 200, ..RecoverySettings::default() },
            61,
        )
        .unwrap();
        assert_eq!(result.rows.len(), 3);
        let csv = result.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "kb_id,form,arity,rank,full_row_rank,method,seed,accuracy,perm_max_accuracy,wall_ms"
        );
        assert_eq!(lines.count(), 3);
    }

    #[test]
    fn sweeps_are_reproducible() {
        let settings =
            RecoverySettings { n_train: 300, n_test: 150, ..RecoverySettings::default() };
        let a = random_kb_sweep(NormalForm::Cnf, 3, 2, &[Method::Tl], 5, &settings, 71).unwrap();
        let b = random_kb_sweep(NormalForm::Cnf, 3, 2, &[Method::Tl], 5, &settings, 71).unwrap();
        assert_eq!(a, b);
    }
}
