//! Knowledge-graph question answering over S-expression logical forms.
//!
//! The pipeline links entities, retrieves relations and one-hop subgraph documents,
//! aligns the three aspects with self/cross attention, gates each item against the
//! question, enumerates candidate forms from skeletons, and executes the first one
//! that refines to a non-empty answer. Math is generic over [`num::Scalar`]; the
//! aliases below fix it to `f64`.

pub mod kg;
pub mod num;
pub mod sexpr;
pub mod tensor;
pub mod text;
pub mod retrieval;
pub mod alignment;
pub mod gating;
pub mod generator;
pub mod execution;
pub mod harness;
pub mod checkpoint;

pub type Matrix64 = tensor::Matrix<f64>;
pub type Tape64 = tensor::Tape<f64>;
pub type RelationEncoder64 = retrieval::RelationEncoder<f64>;
pub type CrossScorer64 = retrieval::CrossScorer<f64>;
pub type Adapter64 = gating::Adapter<f64>;
pub type AlignmentParams64 = alignment::AlignmentParams<f64>;
pub type TokenEmbedder64 = alignment::TokenEmbedder<f64>;
