//! Two-stage passage retrieval toolkit.
//!
//! Queries are expanded with paraphrases ([`expansion`]), candidates come
//! from a top1000 file or a BM25 index ([`bm25`]), a pluggable relevance
//! scorer re-ranks them ([`reranker`]) and runs are scored with MAP, nDCG and
//! P@10 ([`eval`]). Paraphrase training data is mined from relevance
//! judgments ([`pairs`]). File formats live in [`corpus`]; the model service
//! protocol in [`service`].

pub mod bm25;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod expansion;
pub mod pairs;
pub mod reranker;
pub mod service;
pub mod synthetic;
pub mod text;

pub use error::{Error, Result};
