//! Tokenization, fixed word-window chunking and MaxP aggregation.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_WINDOW: usize = 400;
pub const DEFAULT_STRIDE: usize = 200;

/// Lowercased word tokens. Never contains empty strings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenizedText {
    tokens: Vec<String>,
}

impl TokenizedText {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

fn strip_word(raw: &str) -> &str {
    raw.trim_matches(|c: char| !c.is_alphanumeric())
}

/// Splits on Unicode whitespace, trims leading/trailing punctuation from each
/// piece, lowercases, and drops pieces that end up empty.
pub fn tokenize(text: &str) -> TokenizedText {
    let tokens = text
        .split_whitespace()
        .map(strip_word)
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect();
    TokenizedText { tokens }
}

/// Number of words in `text` under the [`tokenize`] definition.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace()
        .filter(|w| !strip_word(w).is_empty())
        .count()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub doc_id: String,
    pub passage_index: usize,
    pub start_word: usize,
    /// Original-case words of the window joined by single spaces.
    pub text: String,
}

impl Passage {
    /// Id used in passage-level runs: `docid#index`.
    pub fn passage_id(&self) -> String {
        format!("{}#{}", self.doc_id, self.passage_index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkConfig {
    pub window: usize,
    pub stride: usize,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            stride: DEFAULT_STRIDE,
        }
    }
}

impl ChunkConfig {
    pub fn new(window: usize, stride: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::Config("window must be positive".into()));
        }
        if stride == 0 {
            return Err(Error::Config("stride must be positive".into()));
        }
        if stride > window {
            return Err(Error::Config(format!(
                "stride {stride} exceeds window {window}"
            )));
        }
        Ok(Self { window, stride })
    }
}

/// Cuts a document into word windows starting at `0, stride, 2*stride, ...`.
///
/// Emission stops with the first window that reaches the last word, so the
/// final window may be shorter than `window`. A document with fewer words
/// than the window (including an empty one) yields a single passage.
pub fn chunk_document(doc_id: &str, text: &str, config: ChunkConfig) -> Vec<Passage> {
    let words: Vec<&str> = text
        .split_whitespace()
        .filter(|w| !strip_word(w).is_empty())
        .collect();
    let mut passages = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + config.window).min(words.len());
        passages.push(Passage {
            doc_id: doc_id.to_string(),
            passage_index: passages.len(),
            start_word: start,
            text: words[start..end].join(" "),
        });
        if end >= words.len() {
            break;
        }
        start += config.stride;
    }
    passages
}

/// Document score as the maximum of its passage scores.
pub fn maxp_aggregate(passage_scores: &[(usize, f64)]) -> Result<f64> {
    passage_scores
        .iter()
        .map(|&(_, s)| s)
        .reduce(f64::max)
        .ok_or(Error::Empty("no passage scores to aggregate"))
}

/// A document from a corpus file: `{"doc_id": "...", "text": "..."}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
}

fn read_jsonl<T: for<'de> Deserialize<'de>, R: BufRead>(reader: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize, W: Write>(items: &[T], mut out: W) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_documents<R: BufRead>(reader: R) -> Result<Vec<Document>> {
    read_jsonl(reader)
}

pub fn write_documents<W: Write>(docs: &[Document], out: W) -> Result<()> {
    write_jsonl(docs, out)
}

pub fn read_passages<R: BufRead>(reader: R) -> Result<Vec<Passage>> {
    read_jsonl(reader)
}

pub fn write_passages<W: Write>(passages: &[Passage], out: W) -> Result<()> {
    write_jsonl(passages, out)
}
