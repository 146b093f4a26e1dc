//! Evaluation engine for instruction-following retrieval.
//!
//! The crate builds reranking pools, ranks them with a built-in BM25 or an
//! external scorer, and evaluates runs with MAP, nDCG@k, MRR and the pairwise
//! p-MRR metric, which rewards a system for demoting documents that stop being
//! relevant when the instruction becomes more specific.

pub mod bm25;
pub mod bridge;
pub mod error;
pub mod fixtures;
pub mod metrics;
pub mod model;
pub mod paired;
pub mod pipeline;
pub mod pooling;
pub mod reporting;
pub mod textproc;
pub mod train_filter;

pub use error::{Error, Result};
pub use metrics::{MetricReport, MetricSpec, PairedDocDelta};
pub use model::{
    load_dataset, parse_qrels, parse_run, validate_pairing, Dataset, InstructionChoice, Qrels,
    QueryRecord, Relevance, Run, RunEntry,
};
pub use paired::{changed_docs, evaluate_standard, paired_evaluate, PairedReport};
pub use textproc::{chunk_document, tokenize, ChunkConfig, Passage};
