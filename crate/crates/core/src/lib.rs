//! Structure-aware chunking, poly-vector indexing and budgeted retrieval over
//! hierarchically organized legal texts.

pub mod chunking;
pub mod corpus;
pub mod document_model;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod index;
pub mod ingestion;
pub mod method;
pub mod retrieval;
pub mod tokenizer;

pub use error::{Error, Result};
pub use method::MethodConfig;
