//! Okapi BM25 over passage pools.
//!
//! `score = Σ_t idf(t) · tf·(k1+1) / (tf + k1·(1 − b + b·dl/avgdl))` with the
//! smoothed `idf(t) = ln(1 + (N − df + 0.5)/(df + 0.5))`, which is never
//! negative. Collection statistics are built per pool.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::error::{Error, Result};
use crate::model::Run;
use crate::textproc::{maxp_aggregate, tokenize, Passage, TokenizedText};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self> {
        if !(k1.is_finite() && k1 >= 0.0) {
            return Err(Error::Config(format!(
                "k1 must be finite and >= 0, got {k1}"
            )));
        }
        if !(0.0..=1.0).contains(&b) {
            return Err(Error::Config(format!("b must lie in [0, 1], got {b}")));
        }
        Ok(Self { k1, b })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollectionStats {
    doc_count: usize,
    avg_doc_len: f64,
    doc_freq: HashMap<String, u32>,
}

impl CollectionStats {
    /// Builds statistics from raw parts; used when counts come from elsewhere.
    pub fn from_parts(
        doc_count: usize,
        avg_doc_len: f64,
        doc_freq: HashMap<String, u32>,
    ) -> Result<Self> {
        if doc_count == 0 {
            return Err(Error::Empty("collection has no documents"));
        }
        if !(avg_doc_len.is_finite() && avg_doc_len > 0.0) {
            return Err(Error::Config(format!(
                "average document length must be positive, got {avg_doc_len}"
            )));
        }
        if let Some((t, df)) = doc_freq
            .iter()
            .find(|(_, &df)| df == 0 || df as usize > doc_count)
        {
            return Err(Error::Config(format!(
                "document frequency of {t:?} is {df}, outside [1, {doc_count}]"
            )));
        }
        Ok(Self {
            doc_count,
            avg_doc_len,
            doc_freq,
        })
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn doc_freq(&self, term: &str) -> u32 {
        self.doc_freq.get(term).copied().unwrap_or(0)
    }

    /// Smoothed idf; `None` for terms that never occur in the collection.
    pub fn idf(&self, term: &str) -> Option<f64> {
        let df = *self.doc_freq.get(term)? as f64;
        let n = self.doc_count as f64;
        Some((1.0 + (n - df + 0.5) / (df + 0.5)).ln())
    }
}

pub fn build_stats<'a, I>(docs: I) -> Result<CollectionStats>
where
    I: IntoIterator<Item = &'a TokenizedText>,
{
    let mut doc_count = 0usize;
    let mut total_len = 0usize;
    let mut doc_freq: HashMap<String, u32> = HashMap::new();
    for doc in docs {
        doc_count += 1;
        total_len += doc.len();
        let unique: HashSet<&str> = doc.tokens().iter().map(String::as_str).collect();
        for t in unique {
            *doc_freq.entry(t.to_string()).or_default() += 1;
        }
    }
    if doc_count == 0 {
        return Err(Error::Empty("collection has no documents"));
    }
    if total_len == 0 {
        return Err(Error::Empty("collection has no words"));
    }
    CollectionStats::from_parts(doc_count, total_len as f64 / doc_count as f64, doc_freq)
}

/// Term counts and length of one scored document.
#[derive(Debug, Clone)]
pub struct DocTerms {
    counts: HashMap<String, u32>,
    len: usize,
}

impl DocTerms {
    pub fn new(doc: &TokenizedText) -> Self {
        let mut counts: HashMap<String, u32> = HashMap::new();
        for t in doc.tokens() {
            *counts.entry(t.clone()).or_default() += 1;
        }
        Self {
            counts,
            len: doc.len(),
        }
    }
}

fn unique_terms(query: &TokenizedText) -> Vec<&str> {
    let mut seen = HashSet::new();
    query
        .tokens()
        .iter()
        .map(String::as_str)
        .filter(|t| seen.insert(*t))
        .collect()
}

fn score_terms(terms: &[&str], doc: &DocTerms, stats: &CollectionStats, params: Bm25Params) -> f64 {
    let norm = 1.0 - params.b + params.b * doc.len as f64 / stats.avg_doc_len;
    terms
        .iter()
        .filter_map(|t| {
            let tf = *doc.counts.get(*t)? as f64;
            let idf = stats.idf(t)?;
            Some(idf * tf * (params.k1 + 1.0) / (tf + params.k1 * norm))
        })
        .sum()
}

/// BM25 of `doc` for the unique terms of `query`. Terms unknown to `stats`
/// contribute nothing.
pub fn bm25_score(
    query: &TokenizedText,
    doc: &TokenizedText,
    stats: &CollectionStats,
    params: Bm25Params,
) -> f64 {
    score_terms(&unique_terms(query), &DocTerms::new(doc), stats, params)
}

/// Joins query and instruction text. `{query}` and `{instruction}` are
/// replaced; the default template is `"{query} {instruction}"`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryTemplate(String);

impl Default for QueryTemplate {
    fn default() -> Self {
        Self("{query} {instruction}".to_string())
    }
}

impl QueryTemplate {
    pub fn new(template: &str) -> Result<Self> {
        if !template.contains("{query}") {
            return Err(Error::Config(format!(
                "query template {template:?} lacks a {{query}} placeholder"
            )));
        }
        Ok(Self(template.to_string()))
    }

    pub fn render(&self, query: &str, instruction: &str) -> String {
        self.0
            .replace("{query}", query)
            .replace("{instruction}", instruction)
    }
}

/// Scores every passage of a pool against `query_text` (already joined with
/// its instruction) and MaxP-aggregates to documents. Returns doc scores in
/// doc-id order.
pub fn score_pool(
    query_text: &str,
    pool: &[Passage],
    stats: &CollectionStats,
    params: Bm25Params,
) -> Result<BTreeMap<String, f64>> {
    if pool.is_empty() {
        return Err(Error::Empty("empty passage pool"));
    }
    let query = tokenize(query_text);
    let terms = unique_terms(&query);
    let mut per_doc: BTreeMap<String, Vec<(usize, f64)>> = BTreeMap::new();
    for p in pool {
        let doc = DocTerms::new(&tokenize(&p.text));
        per_doc
            .entry(p.doc_id.clone())
            .or_default()
            .push((p.passage_index, score_terms(&terms, &doc, stats, params)));
    }
    per_doc
        .into_iter()
        .map(|(d, scores)| Ok((d, maxp_aggregate(&scores)?)))
        .collect()
}

/// Statistics over the passages of one pool.
pub fn pool_stats(pool: &[Passage]) -> Result<CollectionStats> {
    let tokenized: Vec<TokenizedText> = pool.iter().map(|p| tokenize(&p.text)).collect();
    build_stats(&tokenized)
}

/// Ranks a query's pool by MaxP BM25 and returns it as a single-query run.
pub fn rank_pool(
    query_id: &str,
    query_text: &str,
    pool: &[Passage],
    stats: &CollectionStats,
    params: Bm25Params,
    tag: &str,
) -> Result<Run> {
    let scores = score_pool(query_text, pool, stats, params)?;
    let mut run = Run::new();
    run.insert_scored(query_id, scores, tag);
    Ok(run)
}
