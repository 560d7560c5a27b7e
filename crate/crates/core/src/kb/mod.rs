//! Propositional knowledge bases over label sequences.
//!
//! A knowledge base declares a label alphabet and a list of target concepts.
//! Each concept constrains the hidden label sequence of an input sequence:
//! grounding turns every concept into an explicit, lexicographically sorted
//! candidate set of label sequences. Concepts of equal arity must ground to
//! disjoint candidate sets so that the concept emitted for a sequence is a
//! deterministic function of its labels.

mod builtin;
mod parse;
mod random;
mod render;

pub use builtin::{builtin_kb, conj_eq, conjunction, addition, hed, BuiltinKind};
pub use parse::parse_kb;
pub use random::{random_kb, NormalForm};
pub use render::render_kb;

use serde_json::json;
use thiserror::Error;

/// A class label. Alphabets are small (`c <= 256`).
pub type Label = u8;
/// A sequence of labels, one per position.
pub type LabelSeq = Vec<Label>;

#[derive(Debug, Error)]
pub enum KbError {
    #[error("{line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: u64, classes: usize },
    #[error("concept {id}: fact has {got} labels, arity is {arity}")]
    FactArityMismatch { id: String, got: usize, arity: usize },
    #[error("concept {id}: formula variable y{var} out of range for arity {arity}")]
    FormulaVarOutOfRange { id: String, var: usize, arity: usize },
    #[error("formula concepts require exactly 2 classes, got {classes}")]
    FormulaNeedsBinaryAlphabet { classes: usize },
    #[error("at least 2 classes required, got {classes}")]
    TooFewClasses { classes: usize },
    #[error("names list has {got} entries for {classes} classes")]
    NamesLengthMismatch { got: usize, classes: usize },
    #[error("duplicate class name {name:?}")]
    DuplicateName { name: String },
    #[error("duplicate concept id {id:?}")]
    DuplicateConcept { id: String },
    #[error("concept {id}: complement of unknown concept {target:?}")]
    DanglingComplement { id: String, target: String },
    #[error("concept {id}: complement of {target:?} which has arity {target_arity}, not {arity}")]
    ComplementArityMismatch { id: String, target: String, arity: usize, target_arity: usize },
    #[error("complement cycle involving concept {id:?}")]
    ComplementCycle { id: String },
    #[error("unknown builtin {name:?}")]
    UnknownBuiltin { name: String },
    #[error("builtin {kind} has no concept named {id:?}")]
    UnknownBuiltinConcept { kind: String, id: String },
    #[error("builtin {kind}: base {base} out of range [{lo}, {hi}]")]
    BaseOutOfRange { kind: String, base: u32, lo: u32, hi: u32 },
    #[error("concept {id}: arity {arity} exceeds limit {limit}")]
    ArityTooLarge { id: String, arity: usize, limit: usize },
    #[error("grounding budget exceeded: {needed} sequences needed, {budget} allowed")]
    BudgetExceeded { needed: u64, budget: u64 },
    #[error("concept {id}: empty candidate set")]
    EmptyCandidateSet { id: String },
    #[error("concepts {a:?} and {b:?} share candidate sequence {seq:?}")]
    OverlappingConcepts { a: String, b: String, seq: LabelSeq },
    #[error("knowledge base is not grounded")]
    NotGrounded,
    #[error("random KB generation exhausted {attempts} attempts")]
    RetriesExhausted { attempts: usize },
    #[error("no concept named {id:?}")]
    NoSuchConcept { id: String },
}

/// The label alphabet: class count plus optional display names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelAlphabet {
    num_classes: usize,
    names: Option<Vec<String>>,
}

impl LabelAlphabet {
    pub fn new(num_classes: usize) -> Result<Self, KbError> {
        if num_classes < 2 {
            return Err(KbError::TooFewClasses { classes: num_classes });
        }
        Ok(Self { num_classes, names: None })
    }

    pub fn with_names(num_classes: usize, names: Vec<String>) -> Result<Self, KbError> {
        let mut alphabet = Self::new(num_classes)?;
        if names.len() != num_classes {
            return Err(KbError::NamesLengthMismatch { got: names.len(), classes: num_classes });
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(KbError::DuplicateName { name: name.clone() });
            }
        }
        alphabet.names = Some(names);
        Ok(alphabet)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    /// Display string for a class: its name when declared, else its index.
    pub fn display(&self, label: Label) -> String {
        match &self.names {
            Some(names) => names[label as usize].clone(),
            None => label.to_string(),
        }
    }
}

/// A propositional formula over the binary label variables of one sequence.
///
/// Literal `y<k>` holds when position `k` carries label 1; `!y<k>` when it
/// carries label 0. Formula concepts are only meaningful for two classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Formula {
    Lit { var: usize, negated: bool },
    And(Vec<Formula>),
    Or(Vec<Formula>),
}

impl Formula {
    pub fn lit(var: usize) -> Self {
        Formula::Lit { var, negated: false }
    }

    pub fn neg_lit(var: usize) -> Self {
        Formula::Lit { var, negated: true }
    }

    /// Conjunction, collapsing the single-operand case.
    pub fn and_of(mut parts: Vec<Formula>) -> Self {
        if parts.len() == 1 { parts.pop().unwrap() } else { Formula::And(parts) }
    }

    /// Disjunction, collapsing the single-operand case.
    pub fn or_of(mut parts: Vec<Formula>) -> Self {
        if parts.len() == 1 { parts.pop().unwrap() } else { Formula::Or(parts) }
    }

    pub fn eval(&self, seq: &[Label]) -> bool {
        match self {
            Formula::Lit { var, negated } => (seq[*var] == 1) != *negated,
            Formula::And(parts) => parts.iter().all(|p| p.eval(seq)),
            Formula::Or(parts) => parts.iter().any(|p| p.eval(seq)),
        }
    }

    pub fn max_var(&self) -> Option<usize> {
        match self {
            Formula::Lit { var, .. } => Some(*var),
            Formula::And(parts) | Formula::Or(parts) => {
                parts.iter().filter_map(Formula::max_var).max()
            }
        }
    }
}

/// How a concept's candidate set is defined.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConceptDef {
    /// An explicit list of member sequences.
    Facts(Vec<LabelSeq>),
    /// Sequences satisfying a formula (written in disjunctive normal form).
    Dnf(Formula),
    /// Sequences satisfying a formula (written in conjunctive normal form).
    Cnf(Formula),
    /// The complement of another concept's candidate set.
    Complement(String),
    /// One concept of a builtin KB family, enumerated on demand.
    Builtin { kind: BuiltinKind, base: Option<u32> },
}

/// A target concept: an observable tag constraining the hidden labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Concept {
    pub id: String,
    pub arity: usize,
    pub def: ConceptDef,
}

/// The grounded candidate set of one concept: every label sequence the
/// knowledge base entails for it, lexicographically sorted and duplicate
/// free.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    concept_id: String,
    arity: usize,
    sequences: Vec<LabelSeq>,
}

impl CandidateSet {
    fn new(concept_id: String, arity: usize, mut sequences: Vec<LabelSeq>) -> Self {
        sequences.sort();
        sequences.dedup();
        Self { concept_id, arity, sequences }
    }

    pub fn concept_id(&self) -> &str {
        &self.concept_id
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Sequences in lexicographic order.
    pub fn sequences(&self) -> &[LabelSeq] {
        &self.sequences
    }

    pub fn contains(&self, seq: &[Label]) -> bool {
        self.sequences.binary_search_by(|s| s.as_slice().cmp(seq)).is_ok()
    }
}

/// Limits for brute-force grounding.
#[derive(Debug, Clone, Copy)]
pub struct GroundingLimits {
    /// Maximum arity of any enumerated concept.
    pub max_arity: usize,
    /// Maximum total number of sequences enumerated across all concepts.
    pub enumeration_budget: u64,
}

impl Default for GroundingLimits {
    fn default() -> Self {
        Self { max_arity: 20, enumeration_budget: 10_000_000 }
    }
}

/// A knowledge base: alphabet, concepts, and (after grounding) one
/// candidate set per concept, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeBase {
    id: String,
    alphabet: LabelAlphabet,
    concepts: Vec<Concept>,
    grounded: Option<Vec<CandidateSet>>,
}

impl KnowledgeBase {
    /// Builds an ungrounded KB, validating structural invariants.
    pub fn new(
        id: impl Into<String>,
        alphabet: LabelAlphabet,
        concepts: Vec<Concept>,
    ) -> Result<Self, KbError> {
        let classes = alphabet.num_classes();
        for (i, concept) in concepts.iter().enumerate() {
            if concepts[..i].iter().any(|c| c.id == concept.id) {
                return Err(KbError::DuplicateConcept { id: concept.id.clone() });
            }
            match &concept.def {
                ConceptDef::Facts(facts) => {
                    for fact in facts {
                        if fact.len() != concept.arity {
                            return Err(KbError::FactArityMismatch {
                                id: concept.id.clone(),
                                got: fact.len(),
                                arity: concept.arity,
                            });
                        }
                        for &label in fact {
                            if label as usize >= classes {
                                return Err(KbError::LabelOutOfRange {
                                    label: u64::from(label),
                                    classes,
                                });
                            }
                        }
                    }
                }
                ConceptDef::Dnf(formula) | ConceptDef::Cnf(formula) => {
                    if classes != 2 {
                        return Err(KbError::FormulaNeedsBinaryAlphabet { classes });
                    }
                    if let Some(var) = formula.max_var() {
                        if var >= concept.arity {
                            return Err(KbError::FormulaVarOutOfRange {
                                id: concept.id.clone(),
                                var,
                                arity: concept.arity,
                            });
                        }
                    }
                }
                ConceptDef::Complement(target) => {
                    let target_concept = concepts
                        .iter()
                        .find(|c| &c.id == target)
                        .ok_or_else(|| KbError::DanglingComplement {
                            id: concept.id.clone(),
                            target: target.clone(),
                        })?;
                    if target_concept.arity != concept.arity {
                        return Err(KbError::ComplementArityMismatch {
                            id: concept.id.clone(),
                            target: target.clone(),
                            arity: concept.arity,
                            target_arity: target_concept.arity,
                        });
                    }
                }
                ConceptDef::Builtin { .. } => {}
            }
        }
        Ok(Self { id: id.into(), alphabet, concepts, grounded: None })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn set_id(&mut self, id: impl Into<String>) {
        self.id = id.into();
    }

    pub fn alphabet(&self) -> &LabelAlphabet {
        &self.alphabet
    }

    pub fn num_classes(&self) -> usize {
        self.alphabet.num_classes()
    }

    pub fn concepts(&self) -> &[Concept] {
        &self.concepts
    }

    pub fn concept_index(&self, id: &str) -> Option<usize> {
        self.concepts.iter().position(|c| c.id == id)
    }

    pub fn is_grounded(&self) -> bool {
        self.grounded.is_some()
    }

    /// Candidate sets in concept declaration order.
    pub fn candidate_sets(&self) -> Result<&[CandidateSet], KbError> {
        self.grounded.as_deref().ok_or(KbError::NotGrounded)
    }

    pub fn candidate_set(&self, id: &str) -> Result<&CandidateSet, KbError> {
        let sets = self.candidate_sets()?;
        let idx = self.concept_index(id).ok_or_else(|| KbError::NoSuchConcept { id: id.into() })?;
        Ok(&sets[idx])
    }

    pub fn max_arity(&self) -> usize {
        self.concepts.iter().map(|c| c.arity).max().unwrap_or(0)
    }

    /// True when alphabet and concept declarations agree; grounding state
    /// and KB id are ignored.
    pub fn same_structure(&self, other: &Self) -> bool {
        self.alphabet == other.alphabet && self.concepts == other.concepts
    }

    /// An ungrounded copy restricted to the named concepts.
    pub fn restrict(&self, ids: &[&str]) -> Result<Self, KbError> {
        let mut concepts = Vec::new();
        for id in ids {
            let idx = self
                .concept_index(id)
                .ok_or_else(|| KbError::NoSuchConcept { id: (*id).into() })?;
            concepts.push(self.concepts[idx].clone());
        }
        KnowledgeBase::new(format!("{}[{}]", self.id, ids.join(",")), self.alphabet.clone(), concepts)
    }

    pub fn ground(self) -> Result<Self, KbError> {
        self.ground_with(&GroundingLimits::default())
    }

    /// Grounds every concept by brute-force enumeration and validates the
    /// nonempty / pairwise-disjoint invariants.
    pub fn ground_with(mut self, limits: &GroundingLimits) -> Result<Self, KbError> {
        let classes = self.alphabet.num_classes();
        let mut sets: Vec<Option<CandidateSet>> = vec![None; self.concepts.len()];
        let mut budget_left = limits.enumeration_budget;

        // Non-complement concepts first; complements then resolve in passes
        // so chained complements work.
        for (idx, concept) in self.concepts.iter().enumerate() {
            let sequences = match &concept.def {
                ConceptDef::Facts(facts) => facts.clone(),
                ConceptDef::Dnf(formula) | ConceptDef::Cnf(formula) => {
                    charge_enumeration(concept, classes, limits, &mut budget_left)?;
                    enumerate_sequences(classes, concept.arity)
                        .filter(|seq| formula.eval(seq))
                        .collect()
                }
                ConceptDef::Complement(_) => continue,
                ConceptDef::Builtin { kind, base } => {
                    builtin::ground_builtin(*kind, *base, concept, &self.alphabet)?
                }
            };
            sets[idx] = Some(CandidateSet::new(concept.id.clone(), concept.arity, sequences));
        }

        loop {
            let mut progressed = false;
            let mut blocked = None;
            for (idx, concept) in self.concepts.iter().enumerate() {
                if sets[idx].is_some() {
                    continue;
                }
                let ConceptDef::Complement(target) = &concept.def else { unreachable!() };
                let target_idx = self.concept_index(target).expect("validated at construction");
                let Some(target_set) = &sets[target_idx] else {
                    blocked = Some(concept.id.clone());
                    continue;
                };
                charge_enumeration(concept, classes, limits, &mut budget_left)?;
                let sequences = enumerate_sequences(classes, concept.arity)
                    .filter(|seq| !target_set.contains(seq))
                    .collect();
                sets[idx] = Some(CandidateSet::new(concept.id.clone(), concept.arity, sequences));
                progressed = true;
            }
            match blocked {
                None => break,
                Some(id) if !progressed => return Err(KbError::ComplementCycle { id }),
                Some(_) => {}
            }
        }

        let sets: Vec<CandidateSet> = sets.into_iter().map(|s| s.expect("all grounded")).collect();

        for set in &sets {
            if set.is_empty() {
                return Err(KbError::EmptyCandidateSet { id: set.concept_id.clone() });
            }
        }
        for (i, a) in sets.iter().enumerate() {
            for b in &sets[i + 1..] {
                if a.arity != b.arity {
                    continue;
                }
                if let Some(seq) = a.sequences.iter().find(|seq| b.contains(seq)) {
                    return Err(KbError::OverlappingConcepts {
                        a: a.concept_id.clone(),
                        b: b.concept_id.clone(),
                        seq: seq.clone(),
                    });
                }
            }
        }

        self.grounded = Some(sets);
        Ok(self)
    }

    /// Grounded-KB JSON export.
    pub fn to_grounded_json(&self) -> Result<serde_json::Value, KbError> {
        let sets = self.candidate_sets()?;
        let concepts: Vec<serde_json::Value> = self
            .concepts
            .iter()
            .zip(sets)
            .map(|(concept, set)| {
                json!({
                    "id": concept.id,
                    "arity": concept.arity,
                    "candidates": set.sequences(),
                })
            })
            .collect();
        Ok(json!({
            "classes": self.num_classes(),
            "names": self.alphabet.names(),
            "concepts": concepts,
        }))
    }
}

fn charge_enumeration(
    concept: &Concept,
    classes: usize,
    limits: &GroundingLimits,
    budget_left: &mut u64,
) -> Result<(), KbError> {
    if concept.arity > limits.max_arity {
        return Err(KbError::ArityTooLarge {
            id: concept.id.clone(),
            arity: concept.arity,
            limit: limits.max_arity,
        });
    }
    let mut needed: u64 = 1;
    for _ in 0..concept.arity {
        needed = needed
            .checked_mul(classes as u64)
            .filter(|n| *n <= limits.enumeration_budget)
            .ok_or(KbError::BudgetExceeded {
                needed: u64::MAX,
                budget: limits.enumeration_budget,
            })?;
    }
    if needed > *budget_left {
        return Err(KbError::BudgetExceeded { needed, budget: limits.enumeration_budget });
    }
    *budget_left -= needed;
    Ok(())
}

/// All sequences in `[classes]^arity`, in lexicographic order.
pub fn enumerate_sequences(classes: usize, arity: usize) -> impl Iterator<Item = LabelSeq> {
    let total: u64 = (classes as u64).pow(arity as u32);
    (0..total).map(move |mut n| {
        let mut seq = vec![0 as Label; arity];
        for slot in seq.iter_mut().rev() {
            *slot = (n % classes as u64) as Label;
            n /= classes as u64;
        }
        seq
    })
}
