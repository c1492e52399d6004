//! Cross-lingual evaluation toolkit for word-level attribution methods.
//!
//! The crate bundles a small differentiable classifier, a synthetic
//! multiway-parallel corpus generator with gold alignments and rationales,
//! eight attribution methods parameterized by output mechanism and
//! aggregation, and the evaluation metrics that compare them:
//! alignment-projected cross-lingual faithfulness, erasure-based
//! comprehensiveness/sufficiency (plus AOPC), MAP plausibility against
//! highlights, and linear-CKA representation similarity.

pub mod attribution;
pub mod cka;
pub mod corpus;
pub mod data;
pub mod erasure;
pub mod error;
pub mod io;
pub mod model;
pub mod plausibility;
pub mod util;
pub mod xfaith;

pub use error::{Error, Result, UndefinedReason};
pub mod cli;
