//! Random binary-rule knowledge bases.
//!
//! A KB is a "positive" concept holding a random normal-form formula over
//! all `m` variables plus its "negative" complement. Every clause spans all
//! variables, so a DNF with K distinct clauses grounds to exactly K
//! sequences (dually for CNF exclusions).

use rand::Rng;

use super::{Concept, ConceptDef, Formula, KbError, KnowledgeBase, LabelAlphabet};
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalForm {
    Dnf,
    Cnf,
}

impl NormalForm {
    pub fn name(self) -> &'static str {
        match self {
            NormalForm::Dnf => "dnf",
            NormalForm::Cnf => "cnf",
        }
    }
}

const MAX_ATTEMPTS: usize = 16;

/// Generates a random two-concept KB over `arity` binary variables,
/// deterministically from the seed. Returned grounded.
pub fn random_kb(form: NormalForm, arity: usize, seed: u64) -> Result<KnowledgeBase, KbError> {
    assert!((2..=20).contains(&arity), "arity must be in [2, 20]");
    let mut rng = seeding::rng_from(seeding::derive(seed, "random-kb"));

    for _ in 0..MAX_ATTEMPTS {
        // Clause count uniform in [1, 2^(m-1)]; polarity masks may repeat
        // and are deduplicated, first occurrence kept.
        let max_clauses: u64 = 1 << (arity - 1);
        let num_clauses = rng.gen_range(1..=max_clauses);
        let mut masks: Vec<u32> = Vec::new();
        for _ in 0..num_clauses {
            let mask: u32 = rng.gen_range(0..(1u32 << arity));
            if !masks.contains(&mask) {
                masks.push(mask);
            }
        }

        let formula = match form {
            NormalForm::Dnf => Formula::or_of(masks.iter().map(|&mask| dnf_clause(mask, arity)).collect()),
            NormalForm::Cnf => Formula::and_of(masks.iter().map(|&mask| cnf_clause(mask, arity)).collect()),
        };
        let def = match form {
            NormalForm::Dnf => ConceptDef::Dnf(formula),
            NormalForm::Cnf => ConceptDef::Cnf(formula),
        };

        let kb = KnowledgeBase::new(
            format!("{}-m{}-s{}", form.name(), arity, seed),
            LabelAlphabet::with_names(2, vec!["0".into(), "1".into()]).unwrap(),
            vec![
                Concept { id: "positive".into(), arity, def },
                Concept { id: "negative".into(), arity, def: ConceptDef::Complement("positive".into()) },
            ],
        )?;

        match kb.ground() {
            Ok(grounded) => return Ok(grounded),
            // Tautological or unsatisfiable formula: one side empty. With
            // full-width clauses and K <= 2^(m-1) this cannot happen, but the
            // resample path keeps the contract explicit.
            Err(KbError::EmptyCandidateSet { .. }) => continue,
            Err(other) => return Err(other),
        }
    }
    Err(KbError::RetriesExhausted { attempts: MAX_ATTEMPTS })
}

/// Full-width conjunction selecting exactly the assignment `mask`.
fn dnf_clause(mask: u32, arity: usize) -> Formula {
    Formula::and_of(
        (0..arity)
            .map(|var| Formula::Lit { var, negated: mask & (1 << var) == 0 })
            .collect(),
    )
}

/// Full-width disjunction excluding exactly the assignment `mask`.
fn cnf_clause(mask: u32, arity: usize) -> Formula {
    Formula::or_of(
        (0..arity)
            .map(|var| Formula::Lit { var, negated: mask & (1 << var) != 0 })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positive_set_size_within_bounds() {
        for seed in 0..32 {
            let kb = random_kb(NormalForm::Dnf, 3, seed).unwrap();
            let size = kb.candidate_set("positive").unwrap().len();
            assert!((1..=7).contains(&size), "size {size} out of [1, 7]");
        }
    }

    #[test]
    fn dnf_positive_size_equals_distinct_clause_count() {
        // Full-width clauses each select one assignment, so the grounded
        // size equals the number of top-level clauses in the formula.
        for seed in 0..32 {
            let kb = random_kb(NormalForm::Dnf, 4, seed).unwrap();
            let ConceptDef::Dnf(f) = &kb.concepts()[0].def else { panic!("not dnf") };
            let clauses = match f {
                Formula::Or(parts) => parts.len(),
                _ => 1,
            };
            assert_eq!(kb.candidate_set("positive").unwrap().len(), clauses);
        }
    }

    #[test]
    fn cnf_negative_size_equals_distinct_clause_count() {
        for seed in 0..32 {
            let kb = random_kb(NormalForm::Cnf, 4, seed).unwrap();
            let ConceptDef::Cnf(f) = &kb.concepts()[0].def else { panic!("not cnf") };
            let clauses = match f {
                Formula::And(parts) => parts.len(),
                _ => 1,
            };
            assert_eq!(kb.candidate_set("negative").unwrap().len(), clauses);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = random_kb(NormalForm::Dnf, 5, 99).unwrap();
        let b = random_kb(NormalForm::Dnf, 5, 99).unwrap();
        assert!(a.same_structure(&b));
        assert_ne!(
            a.candidate_set("positive").unwrap(),
            random_kb(NormalForm::Dnf, 5, 100)
                .unwrap()
                .candidate_set("positive")
                .unwrap()
        );
    }

    #[test]
    fn partition_covers_whole_space() {
        let kb = random_kb(NormalForm::Cnf, 3, 7).unwrap();
        let pos = kb.candidate_set("positive").unwrap().len();
        let neg = kb.candidate_set("negative").unwrap().len();
        assert_eq!(pos + neg, 8);
    }
}
