//! Knowledge-graph and contextual embedding workbench.
//!
//! The crate trains shallow KG embeddings (TransE, DistMult, ComplEx),
//! combines them with contextual word vectors by concatenation, and
//! evaluates entity representations on entity typing, relation prediction
//! and link prediction.
//!
//! Module map:
//!
//! - [`kg_store`]: triple/vocabulary/metadata parsing and indexing
//! - [`corpus`]: description-sentence selection and FB-NYT filtering
//! - [`kge`]: embedding models, negative sampling and SGD training
//! - [`combiner`]: contextual / KG / concatenated feature extraction
//! - [`classifier`]: multinomial and one-vs-rest logistic regression
//! - [`metrics`]: Precision@n, AP@k, MAP@k, RR, MRR, Hits@k, entity ranking
//! - [`harness`]: config-driven experiments and reports
//! - [`synthetic`]: deterministic generators used by tests and demos

pub mod classifier;
pub mod combiner;
pub mod corpus;
mod error;
pub mod harness;
pub mod kg_store;
pub mod kge;
pub mod metrics;
pub mod synthetic;
mod util;

pub use error::{Error, Result};
