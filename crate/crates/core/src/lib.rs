//! Perspectivist text classification toolkit.
//!
//! Ingests disaggregated multi-annotator corpora, trains small classifiers
//! under three regimes (majority-vote hard labels, a per-annotator ensemble,
//! and soft-label multi-perspective training), evaluates them with hard and
//! soft metrics, and explains individual predictions with five post-hoc
//! attribution methods.
//!
//! Module map:
//!
//! - [`corpus`]: annotation corpora, validation, statistics, splitting.
//! - [`aggregate`]: majority and soft labels, disagreement.
//! - [`featurize`]: vocabulary, bag-of-words / tf-idf / token sequences.
//! - [`model`]: linear, MLP and attention-pooling classifiers with manual gradients.
//! - [`train`]: losses, mini-batch gradient descent, per-annotator ensembles.
//! - [`metrics`]: accuracy, macro-F1, confidence, Jensen-Shannon divergence.
//! - [`explain`]: integrated gradients, layer conductance, LIME, KernelSHAP, attention.
//! - [`harness`]: synthetic corpora, the experiment grid, reports.

pub mod aggregate;
pub mod corpus;
pub mod error;
pub mod explain;
pub mod featurize;
pub mod harness;
pub mod math;
pub mod metrics;
pub mod model;
pub mod seeding;
pub mod train;

pub use error::{Error, Result};
