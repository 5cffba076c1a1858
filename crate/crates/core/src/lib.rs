//! Visual questions as a source of supervision.
//!
//! The crate turns the questions people ask about images into training
//! signal: [`qparse`] extracts object labels from question text, [`vocab`]
//! builds bag-of-words features and word targets, [`augment`] expands
//! answered questions into powerset exemplars, [`model`] trains the
//! bag-of-words + image softmax model, [`eval`] computes the evaluation
//! statistics and [`dataio`] handles files and configuration.

pub mod exec;
pub mod augment;
pub mod cli;
pub mod dataio;
pub mod eval;
pub mod model;
pub mod qparse;
pub mod vocab;

pub use exec::Exec;
