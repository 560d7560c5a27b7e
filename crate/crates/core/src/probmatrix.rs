//! Exact probability matrices linking hidden classes to observable weak
//! labels, and the full-row-rank criterion over them.
//!
//! Two matrices are built from a grounded KB:
//! - the location matrix (single concept, uniform candidate labels):
//!   row `j`, column `k` is the probability that an instance of class `j`
//!   sits at position `k`;
//! - the target-location matrix (any KB, any class prior): columns are
//!   (concept, position) pairs and entries are the probability of that pair
//!   given the class, under the generative process that draws labels i.i.d.
//!   from the prior and keeps sequences covered by exactly one concept.
//!
//! Everything is exact rational arithmetic; floats appear only in the
//! numeric cross-check and in logged constants.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, Zero};
use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::kb::{KbError, KnowledgeBase, Label};
use crate::rational::{self, ln, ratio, RatPair, Rational};

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error("prior has {got} entries for {classes} classes")]
    PriorLengthMismatch { got: usize, classes: usize },
    #[error("prior entries must be nonnegative")]
    PriorNegative,
    #[error("prior entries sum to {sum}, expected 1")]
    PriorNotNormalized { sum: String },
    #[error("location matrix requires exactly one concept, KB has {got}")]
    NotSingleConcept { got: usize },
    #[error("classes unreachable under the KB and prior: {0:?}")]
    UnreachableClasses(Vec<Label>),
    #[error("bad prior text: {0}")]
    PriorParse(String),
}

/// Instance-level class prior: nonnegative rationals summing to one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassPrior {
    probs: Vec<Rational>,
}

impl ClassPrior {
    pub fn new(probs: Vec<Rational>) -> Result<Self, MatrixError> {
        if probs.iter().any(|p| p.is_negative()) {
            return Err(MatrixError::PriorNegative);
        }
        let sum: Rational = probs.iter().sum();
        if sum != rational::one() {
            return Err(MatrixError::PriorNotNormalized { sum: sum.to_string() });
        }
        Ok(Self { probs })
    }

    pub fn uniform(classes: usize) -> Self {
        Self { probs: vec![ratio(1, classes as i64); classes] }
    }

    pub fn is_uniform(&self) -> bool {
        self.probs.iter().all(|p| p == &ratio(1, self.probs.len() as i64))
    }

    /// Parses comma- or line-separated entries like `1/4` or `0.25`.
    pub fn parse(text: &str, classes: usize) -> Result<Self, MatrixError> {
        let entries: Vec<&str> = text
            .split(|c| c == ',' || c == '\n')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect();
        if entries.len() != classes {
            return Err(MatrixError::PriorLengthMismatch { got: entries.len(), classes });
        }
        let probs = entries
            .iter()
            .map(|e| rational::parse_rational(e).map_err(MatrixError::PriorParse))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(probs)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, class: Label) -> &Rational {
        &self.probs[class as usize]
    }

    pub fn probs(&self) -> &[Rational] {
        &self.probs
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.probs.iter().map(rational::to_f64).collect()
    }
}

/// Column labels of a probability matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnIndex {
    /// Single-concept location matrix: columns are positions.
    Positions(usize),
    /// Target-location matrix: columns are (concept id, position) pairs in
    /// concept declaration order, position-minor.
    ConceptPositions(Vec<(String, usize)>),
}

impl ColumnIndex {
    pub fn len(&self) -> usize {
        match self {
            ColumnIndex::Positions(m) => *m,
            ColumnIndex::ConceptPositions(entries) => entries.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Serialize for ColumnIndex {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            ColumnIndex::Positions(m) => {
                serializer.collect_seq((0..*m).collect::<Vec<usize>>())
            }
            ColumnIndex::ConceptPositions(entries) => serializer.collect_seq(entries),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    /// p(position | class) for a single concept under uniform candidates.
    Location,
    /// p(concept, position | class) under a class prior.
    TargetLocation,
}

/// Constants appearing on the right-hand side of the risk bounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundConstants {
    /// Max over classes of per-candidate occurrence count; single-concept
    /// KBs only.
    pub location_gap_base: Option<Rational>,
    /// Min over concepts of the concept prior.
    pub min_concept_prior: Rational,
}

impl BoundConstants {
    /// `log a`: the additive constant bounding the location risk.
    pub fn location_gap(&self) -> Option<f64> {
        self.location_gap_base.as_ref().map(ln)
    }

    /// `log m - log b`: the additive constant bounding the target-location
    /// risk, for the KB's maximum arity `m`.
    pub fn target_location_gap(&self, max_arity: usize) -> f64 {
        (max_arity as f64).ln() - ln(&self.min_concept_prior)
    }
}

/// A row-stochastic matrix of exact rationals plus its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    pub kind: MatrixKind,
    /// `classes x columns`, every row summing to exactly one.
    pub data: Vec<Vec<Rational>>,
    pub columns: ColumnIndex,
    pub prior: ClassPrior,
    /// Per-concept prior probability, declaration order.
    pub concept_priors: Vec<(String, Rational)>,
    pub constants: BoundConstants,
}

impl ProbMatrix {
    pub fn classes(&self) -> usize {
        self.data.len()
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn to_f64(&self) -> Vec<Vec<f64>> {
        self.data
            .iter()
            .map(|row| row.iter().map(rational::to_f64).collect())
            .collect()
    }

    /// Column offset of a concept's block, and its width.
    pub fn concept_block(&self, concept_id: &str) -> Option<(usize, usize)> {
        match &self.columns {
            ColumnIndex::Positions(m) => Some((0, *m)),
            ColumnIndex::ConceptPositions(entries) => {
                let start = entries.iter().position(|(id, _)| id == concept_id)?;
                let width =
                    entries[start..].iter().take_while(|(id, _)| id == concept_id).count();
                Some((start, width))
            }
        }
    }
}

/// Probability of a label sequence when labels are drawn i.i.d. from the
/// prior.
pub fn sequence_prior(prior: &ClassPrior, seq: &[Label]) -> Rational {
    seq.iter().map(|&label| prior.prob(label)).product()
}

/// Probability mass of a concept's candidate set under the i.i.d. prior.
pub fn concept_prior(
    kb: &KnowledgeBase,
    prior: &ClassPrior,
    concept_id: &str,
) -> Result<Rational, MatrixError> {
    let set = kb.candidate_set(concept_id)?;
    Ok(set.sequences().iter().map(|seq| sequence_prior(prior, seq)).sum())
}

fn check_prior(kb: &KnowledgeBase, prior: &ClassPrior) -> Result<(), MatrixError> {
    if prior.len() != kb.num_classes() {
        return Err(MatrixError::PriorLengthMismatch {
            got: prior.len(),
            classes: kb.num_classes(),
        });
    }
    Ok(())
}

/// Per-class occurrence counts: `counts[j][k]` is how many candidates of
/// the set carry class `j` at position `k`.
fn occurrence_counts(set: &crate::kb::CandidateSet, classes: usize) -> Vec<Vec<u64>> {
    let mut counts = vec![vec![0u64; set.arity()]; classes];
    for seq in set.sequences() {
        for (k, &label) in seq.iter().enumerate() {
            counts[label as usize][k] += 1;
        }
    }
    counts
}

/// The location matrix of a single-concept KB under uniform candidate
/// labels: row `j`, column `k` is the count of class `j` at position `k`
/// normalized by the total count of class `j` over all positions.
pub fn location_matrix_uniform(kb: &KnowledgeBase) -> Result<ProbMatrix, MatrixError> {
    let sets = kb.candidate_sets()?;
    if sets.len() != 1 {
        return Err(MatrixError::NotSingleConcept { got: sets.len() });
    }
    let set = &sets[0];
    let classes = kb.num_classes();
    let counts = occurrence_counts(set, classes);

    let unreachable: Vec<Label> = (0..classes)
        .filter(|&j| counts[j].iter().all(|&n| n == 0))
        .map(|j| j as Label)
        .collect();
    if !unreachable.is_empty() {
        return Err(MatrixError::UnreachableClasses(unreachable));
    }

    let data = counts
        .iter()
        .map(|row| {
            let total: u64 = row.iter().sum();
            row.iter().map(|&n| ratio(n as i64, total as i64)).collect()
        })
        .collect();

    let prior = ClassPrior::uniform(classes);
    let concept_priors = vec![(set.concept_id().to_string(), concept_prior_of_set(set, &prior))];
    let constants = bound_constants_inner(kb, &prior)?;
    Ok(ProbMatrix {
        kind: MatrixKind::Location,
        data,
        columns: ColumnIndex::Positions(set.arity()),
        prior,
        concept_priors,
        constants,
    })
}

fn concept_prior_of_set(set: &crate::kb::CandidateSet, prior: &ClassPrior) -> Rational {
    set.sequences().iter().map(|seq| sequence_prior(prior, seq)).sum()
}

/// The target-location matrix under a strictly positive class prior.
///
/// Unnormalized mass for class `j` in column (t, k):
/// `(1/m_t) * sum over candidates of t with label j at k of the sequence
/// prior`. Rows are normalized to sum to one, which conditions the class
/// marginal on the sequence being covered by some concept.
pub fn joint_matrix(kb: &KnowledgeBase, prior: &ClassPrior) -> Result<ProbMatrix, MatrixError> {
    check_prior(kb, prior)?;
    let sets = kb.candidate_sets()?;
    let classes = kb.num_classes();

    let mut columns = Vec::new();
    let mut mass: Vec<Vec<Rational>> = vec![Vec::new(); classes];
    for set in sets {
        let arity = ratio(set.arity() as i64, 1);
        let mut block: Vec<Vec<Rational>> = vec![vec![rational::zero(); set.arity()]; classes];
        for seq in set.sequences() {
            let weight = sequence_prior(prior, seq);
            for (k, &label) in seq.iter().enumerate() {
                block[label as usize][k] += &weight;
            }
        }
        for (j, row) in block.into_iter().enumerate() {
            for cell in row {
                mass[j].push(cell / &arity);
            }
        }
        for k in 0..set.arity() {
            columns.push((set.concept_id().to_string(), k));
        }
    }

    let unreachable: Vec<Label> = (0..classes)
        .filter(|&j| mass[j].iter().all(Rational::is_zero))
        .map(|j| j as Label)
        .collect();
    if !unreachable.is_empty() {
        return Err(MatrixError::UnreachableClasses(unreachable));
    }

    let data = mass
        .into_iter()
        .map(|row| {
            let total: Rational = row.iter().sum();
            row.into_iter().map(|cell| cell / &total).collect()
        })
        .collect();

    let concept_priors = sets
        .iter()
        .map(|set| (set.concept_id().to_string(), concept_prior_of_set(set, prior)))
        .collect();
    let constants = bound_constants_inner(kb, prior)?;
    Ok(ProbMatrix {
        kind: MatrixKind::TargetLocation,
        data,
        columns: ColumnIndex::ConceptPositions(columns),
        prior: prior.clone(),
        concept_priors,
        constants,
    })
}

/// Constants for the risk bounds: the location constant exists only for
/// single-concept KBs; the concept-prior minimum always does. Also checks
/// `a <= m`.
pub fn bound_constants(
    kb: &KnowledgeBase,
    prior: &ClassPrior,
) -> Result<BoundConstants, MatrixError> {
    check_prior(kb, prior)?;
    bound_constants_inner(kb, prior)
}

fn bound_constants_inner(
    kb: &KnowledgeBase,
    prior: &ClassPrior,
) -> Result<BoundConstants, MatrixError> {
    let sets = kb.candidate_sets()?;
    let location_gap_base = if sets.len() == 1 {
        let set = &sets[0];
        let counts = occurrence_counts(set, kb.num_classes());
        let max = counts
            .iter()
            .map(|row| row.iter().sum::<u64>())
            .max()
            .expect("at least one class");
        let a = ratio(max as i64, set.len() as i64);
        assert!(
            a <= ratio(set.arity() as i64, 1),
            "location constant exceeds arity"
        );
        Some(a)
    } else {
        None
    };

    let min_concept_prior = sets
        .iter()
        .map(|set| concept_prior_of_set(set, prior))
        .min()
        .expect("at least one concept");
    Ok(BoundConstants { location_gap_base, min_concept_prior })
}

/// Exact row rank by fraction-free (Bareiss) elimination.
///
/// Each row is first scaled to integers by its denominators' LCM; positive
/// row scaling never changes rank.
pub fn rank_exact(matrix: &ProbMatrix) -> usize {
    rank_exact_rows(&matrix.data)
}

pub fn rank_exact_rows(rows: &[Vec<Rational>]) -> usize {
    if rows.is_empty() || rows[0].is_empty() {
        return 0;
    }
    let mut m: Vec<Vec<BigInt>> = rows
        .iter()
        .map(|row| {
            let lcm = row
                .iter()
                .map(|cell| cell.denom().clone())
                .fold(BigInt::from(1), |acc, d| acc.lcm(&d));
            row.iter()
                .map(|cell| cell.numer() * (&lcm / cell.denom()))
                .collect()
        })
        .collect();

    let (height, width) = (m.len(), m[0].len());
    let mut prev = BigInt::from(1);
    let mut rank = 0;
    let mut col = 0;
    while rank < height && col < width {
        let Some(pivot_row) = (rank..height).find(|&r| !m[r][col].is_zero()) else {
            col += 1;
            continue;
        };
        m.swap(rank, pivot_row);
        for r in rank + 1..height {
            for c in col + 1..width {
                let val = (&m[rank][col] * &m[r][c] - &m[r][col] * &m[rank][c]) / &prev;
                m[r][c] = val;
            }
            m[r][col] = BigInt::zero();
        }
        prev = m[rank][col].clone();
        rank += 1;
        col += 1;
    }
    rank
}

/// Floating-point rank with partial pivoting, counting pivots at least
/// `tol` times the largest pivot encountered. Cross-checks `rank_exact`.
pub fn rank_numeric(matrix: &ProbMatrix, tol: f64) -> usize {
    assert!(tol > 0.0, "tolerance must be positive");
    let mut m = matrix.to_f64();
    if m.is_empty() || m[0].is_empty() {
        return 0;
    }
    let (height, width) = (m.len(), m[0].len());
    let mut pivots: Vec<f64> = Vec::new();
    let mut row = 0;
    let mut col = 0;
    while row < height && col < width {
        let (pivot_row, pivot) = (row..height)
            .map(|r| (r, m[r][col].abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("nonempty range");
        if pivot == 0.0 {
            col += 1;
            continue;
        }
        m.swap(row, pivot_row);
        for r in row + 1..height {
            let factor = m[r][col] / m[row][col];
            for c in col..width {
                m[r][c] -= factor * m[row][c];
            }
        }
        pivots.push(pivot);
        row += 1;
        col += 1;
    }
    let max_pivot = pivots.iter().copied().fold(0.0f64, f64::max);
    pivots.iter().filter(|&&p| p >= tol * max_pivot).count()
}

/// The rank verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    /// The matrix has full row rank: supervision suffices to recover the
    /// true classifier.
    Learnable,
    /// Rank-deficient: supervision cannot pin down all classes.
    Insufficient,
}

/// The outcome of diagnosing a KB before training.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosisReport {
    pub kb_id: String,
    pub classes: usize,
    pub matrix: ProbMatrix,
    pub rank: usize,
    pub full_row_rank: bool,
    pub verdict: Verdict,
}

impl DiagnosisReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }
}

impl Serialize for DiagnosisReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let max_arity = match &self.matrix.columns {
            ColumnIndex::Positions(m) => *m,
            ColumnIndex::ConceptPositions(entries) => {
                entries.iter().map(|(_, k)| k + 1).max().unwrap_or(0)
            }
        };
        let mut map = serializer.serialize_map(None)?;
        map.serialize_entry("kb_id", &self.kb_id)?;
        map.serialize_entry("classes", &self.classes)?;
        map.serialize_entry("columns", &self.matrix.columns)?;
        let rows: Vec<Vec<RatPair>> = self
            .matrix
            .data
            .iter()
            .map(|row| row.iter().map(RatPair).collect())
            .collect();
        map.serialize_entry("matrix", &rows)?;
        map.serialize_entry("rank", &self.rank)?;
        map.serialize_entry("full_row_rank", &self.full_row_rank)?;
        map.serialize_entry("verdict", &self.verdict)?;
        map.serialize_entry(
            "a",
            &self.matrix.constants.location_gap_base.as_ref().map(RatPair),
        )?;
        map.serialize_entry("b", &RatPair(&self.matrix.constants.min_concept_prior))?;
        map.serialize_entry("C_thm2", &self.matrix.constants.target_location_gap(max_arity))?;
        map.end()
    }
}

/// Builds the probability matrix for a grounded KB, computes its exact
/// rank, and renders the verdict: learnable iff the rank equals the class
/// count. Single-concept KBs with a uniform prior use the location matrix
/// (the two coincide there).
pub fn diagnose(kb: &KnowledgeBase, prior: &ClassPrior) -> Result<DiagnosisReport, MatrixError> {
    check_prior(kb, prior)?;
    let single = kb.candidate_sets()?.len() == 1;
    let matrix = if single && prior.is_uniform() {
        location_matrix_uniform(kb)?
    } else {
        joint_matrix(kb, prior)?
    };
    let rank = rank_exact(&matrix);
    let classes = kb.num_classes();
    let full_row_rank = rank == classes;
    Ok(DiagnosisReport {
        kb_id: kb.id().to_string(),
        classes,
        matrix,
        rank,
        full_row_rank,
        verdict: if full_row_rank { Verdict::Learnable } else { Verdict::Insufficient },
    })
}
