//! Start-to-end (s2e) coreference resolution heads over frozen token
//! embeddings, with the coarse-to-fine (c2f) head as a baseline.
//!
//! The crate covers the whole pipeline: document and embedding I/O, both
//! scoring heads, mention pruning and antecedent decoding, marginal
//! likelihood training with hand-derived gradients, CoNLL coreference
//! metrics, and an allocation-counting benchmark comparing the two heads.

pub mod bench;
pub mod c2f;
pub mod checkpoint;
pub mod corpus;
pub mod counter;
pub mod embedding;
pub mod error;
pub mod inference;
pub mod io;
pub mod matrix;
pub mod metrics;
pub mod params;
pub mod s2e;
pub mod synth;
pub mod training;

pub use corpus::{ClusterSet, Document, Genre, Span, Token};
pub use embedding::EmbeddingMatrix;
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use params::ParamSet;
pub use s2e::S2eParams;
