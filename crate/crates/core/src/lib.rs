//! Deciding whether a propositional knowledge base can supervise a
//! neuro-symbolic perception model, before any training happens.
//!
//! The library grounds a knowledge base into explicit candidate sets of
//! label sequences, builds the class/location probability matrices in exact
//! rational arithmetic, and tests the full-row-rank criterion that separates
//! learnable supervision from insufficient supervision. A second half of the
//! crate trains small classifiers on synthetic Gaussian features under the
//! abduction-based and matrix-based objectives so the rank verdict can be
//! checked against what training actually achieves.
//!
//! Modules:
//! - [`kb`]: the KB text format, grounding, builtin and random KBs
//! - [`probmatrix`]: exact probability matrices, rank, bound constants
//! - [`datagen`]: synthetic sequence datasets under both generation modes
//! - [`learner`]: classifiers, losses, abduction strategies, Adam
//! - [`diagnostics`]: bound verification, recovery runs, sweeps

pub mod datagen;
pub mod diagnostics;
pub mod kb;
pub mod learner;
pub mod probmatrix;
pub mod rational;
pub mod seeding;

pub use kb::KnowledgeBase;
pub use probmatrix::{ClassPrior, DiagnosisReport, Verdict};
