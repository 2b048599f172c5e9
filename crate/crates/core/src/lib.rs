//! Ontology relation extraction and relation prediction.
//!
//! The crate covers the whole batch pipeline:
//!
//! * [`ntriples`] streams N-Triples files and classifies statements;
//! * [`store`] interns entities and keeps the bit-packed [`store::RelationMatrix`];
//! * [`inference`] forward-chains the entailment rules to a fixpoint;
//! * [`embedding`] renders entity texts and loads provider embedding tables;
//! * [`dataset`] builds leakage-free train/validation pair datasets;
//! * [`model`] is the multi-label feed-forward network and its Adam trainer;
//! * [`eval`] computes thresholded precision/recall/F-score reports;
//! * [`synthetic`] generates learnable toy ontologies for desk-scale checks.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is on and plain iterators otherwise. Results are
//! identical either way.

pub mod dataset;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod inference;
pub mod model;
pub mod ntriples;
pub mod par;
pub mod relation;
pub mod store;
pub mod synthetic;

pub use error::{Error, Result};
pub use relation::{RelationKind, RelationMask, NUM_RELATIONS};
