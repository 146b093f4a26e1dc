use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(
        "duplicate judgment for ({query_id}, {doc_id}) on lines {first_line} and {second_line}"
    )]
    DuplicateJudgment {
        query_id: String,
        doc_id: String,
        first_line: usize,
        second_line: usize,
    },

    #[error("duplicate query id {query_id:?} on line {line}")]
    DuplicateQuery { query_id: String, line: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("rank must be >= 1, got {0}")]
    InvalidRank(u64),

    #[error("unknown metric {0:?} (expected map, ndcg@K, mrr, p-mrr or robustness@K)")]
    UnknownMetric(String),

    #[error(
        "candidate sets differ for query {query_id}: only in original run {only_og:?}, only in modified run {only_new:?}"
    )]
    CandidateMismatch {
        query_id: String,
        only_og: Vec<String>,
        only_new: Vec<String>,
    },

    #[error("changed document {doc_id} of query {query_id} is missing from the {run} run")]
    MissingChangedDoc {
        query_id: String,
        doc_id: String,
        run: &'static str,
    },

    #[error("query {query_id} has {relevant} relevant documents but the pool limit is {max_size}")]
    PoolTooSmall {
        query_id: String,
        relevant: usize,
        max_size: usize,
    },

    #[error("run and qrels share no queries")]
    NoSharedQueries,

    #[error("query set of variant {variant:?} in {corpus:?} differs from the baseline")]
    QuerySetMismatch { corpus: String, variant: String },

    #[error("missing {what} {name:?}")]
    Missing { what: &'static str, name: String },

    #[error("candidate {index} has no scorer probability")]
    MissingProbability { index: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("scorer protocol: {0}")]
    Protocol(String),

    #[error("scorer exited after answering {answered} of {total} requests")]
    ScorerExited { answered: usize, total: usize },

    #[error("scorer timed out after answering {answered} of {total} requests")]
    ScorerTimeout { answered: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
