//! Out-of-distribution detection over precomputed feature embeddings.
//!
//! The crate works entirely on tables of embedding vectors (plus optional
//! logits and projection-head outputs) and never touches raw media. It
//! provides:
//!
//! - [`featstore`]: load/save/slice validated feature tables (CSV + JSON
//!   manifest, bit-exact round trips);
//! - [`synthgen`]: seeded Gaussian-cluster benchmarks with ID classes and
//!   OOD clusters for desk-scale evaluation;
//! - [`heads`]: a two-layer classification head and a projection head with
//!   cross-entropy and NTXent losses, hand-derived gradients, a
//!   deterministic AdamW trainer and a finite-difference gradient checker;
//! - [`prototypes`]: nearest-class-mean fitting/queries and an exact KNN
//!   index for majority votes and distance scoring;
//! - [`scorers`]: the OOD scoring methods (max softmax/logit, energy,
//!   entropy, temperature scaling, KNN distance, dual-head agreement flags
//!   and agreement scores) under one "higher score = more in-distribution"
//!   convention;
//! - [`metrics`]: ROC/PR/threshold curves, AUROC/AUPR-IN/AUPR-OUT/AUTC,
//!   Youden's J threshold selection and per-class accuracy tables.

pub mod error;
pub mod featstore;
pub mod heads;
pub mod metrics;
pub mod prototypes;
pub mod scorers;
pub mod synthgen;

pub use error::{Error, Result};
