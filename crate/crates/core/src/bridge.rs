//! Attachment point for external rerankers.
//!
//! A scorer is any endpoint that turns [`ScoreRequest`]s into scores. Three
//! endpoints are provided: a child process speaking the line protocol below,
//! the built-in BM25 scorer, and a replay table of precomputed scores.
//!
//! # Line protocol
//!
//! One JSON object per line on the child's stdin/stdout. Requests:
//!
//! ```text
//! {"request_id":"301/FBIS3-10082#0","query_text":"...","instruction_text":"...","passage_text":"..."}
//! ```
//!
//! A batch is followed by `{"flush":true}`; the session ends with
//! `{"end":true}`, after which the child should exit. Each request must be
//! answered exactly once, in any order, with either
//!
//! ```text
//! {"request_id":"301/FBIS3-10082#0","score":3.25}
//! {"request_id":"301/FBIS3-10082#0","logit_true":1.5,"logit_false":-0.5}
//! ```
//!
//! Logit pairs become `exp(lt) / (exp(lt) + exp(lf))`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bm25::{score_pool, Bm25Params, QueryTemplate};
use crate::error::{Error, Result};
use crate::model::Run;
use crate::textproc::{maxp_aggregate, Passage};

/// Environment variable holding the scorer command line.
pub const SCORER_ENV: &str = "PAIRANK_SCORER";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub request_id: String,
    pub query_text: String,
    pub instruction_text: String,
    pub passage_text: String,
}

impl ScoreRequest {
    /// Content hash (hex SHA-256) used as the replay key. Independent of the
    /// request id.
    pub fn content_hash(&self) -> String {
        let payload =
            serde_json::to_string(&[&self.query_text, &self.instruction_text, &self.passage_text])
                .expect("strings serialize");
        let digest = Sha256::digest(payload.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoreValue {
    Score(f64),
    LogitPair { logit_true: f64, logit_false: f64 },
}

impl ScoreValue {
    /// Ranking score; logit pairs are converted to a relevance probability.
    pub fn to_score(self) -> Result<f64> {
        match self {
            ScoreValue::Score(s) if s.is_finite() => Ok(s),
            ScoreValue::Score(s) => Err(Error::NonFinite(format!("score {s}"))),
            ScoreValue::LogitPair {
                logit_true,
                logit_false,
            } => logitpair_to_score(logit_true, logit_false),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreResponse {
    pub request_id: String,
    pub value: ScoreValue,
}

#[derive(Serialize, Deserialize)]
struct RawResponse {
    request_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    logit_true: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    logit_false: Option<f64>,
}

fn value_from_parts(
    score: Option<f64>,
    logit_true: Option<f64>,
    logit_false: Option<f64>,
) -> std::result::Result<ScoreValue, String> {
    match (score, logit_true, logit_false) {
        (Some(s), None, None) if s.is_finite() => Ok(ScoreValue::Score(s)),
        (None, Some(t), Some(f)) if t.is_finite() && f.is_finite() => Ok(ScoreValue::LogitPair {
            logit_true: t,
            logit_false: f,
        }),
        (Some(_), None, None) | (None, Some(_), Some(_)) => Err("non-finite value".into()),
        _ => Err("expected exactly one of `score` or `logit_true`+`logit_false`".into()),
    }
}

impl ScoreResponse {
    pub fn to_line(&self) -> String {
        let raw = match self.value {
            ScoreValue::Score(s) => RawResponse {
                request_id: self.request_id.clone(),
                score: Some(s),
                logit_true: None,
                logit_false: None,
            },
            ScoreValue::LogitPair {
                logit_true,
                logit_false,
            } => RawResponse {
                request_id: self.request_id.clone(),
                score: None,
                logit_true: Some(logit_true),
                logit_false: Some(logit_false),
            },
        };
        serde_json::to_string(&raw).expect("response serializes")
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let raw: RawResponse = serde_json::from_str(line)
            .map_err(|e| Error::Protocol(format!("malformed response {line:?}: {e}")))?;
        let value = value_from_parts(raw.score, raw.logit_true, raw.logit_false)
            .map_err(|e| Error::Protocol(format!("response {}: {e}", raw.request_id)))?;
        Ok(Self {
            request_id: raw.request_id,
            value,
        })
    }
}

pub const FLUSH_LINE: &str = r#"{"flush":true}"#;
pub const END_LINE: &str = r#"{"end":true}"#;

/// Softmax probability of the "true" token, computed after subtracting the
/// larger logit so that large inputs do not overflow.
pub fn logitpair_to_score(logit_true: f64, logit_false: f64) -> Result<f64> {
    if !logit_true.is_finite() || !logit_false.is_finite() {
        return Err(Error::NonFinite(format!(
            "logit pair ({logit_true}, {logit_false})"
        )));
    }
    let m = logit_true.max(logit_false);
    let t = (logit_true - m).exp();
    let f = (logit_false - m).exp();
    Ok(t / (t + f))
}

pub trait ScoreEndpoint {
    /// Scores a batch; the result holds exactly one value per request id.
    fn score(&mut self, requests: &[ScoreRequest]) -> Result<HashMap<String, ScoreValue>>;

    /// Ends the session.
    fn close(&mut self) -> Result<()> {
        Ok(())
    }
}

fn check_unique_ids(requests: &[ScoreRequest]) -> Result<()> {
    let mut seen = HashSet::new();
    for r in requests {
        if !seen.insert(r.request_id.as_str()) {
            return Err(Error::Protocol(format!(
                "request id {} used twice in one session",
                r.request_id
            )));
        }
    }
    Ok(())
}

impl<E: ScoreEndpoint + ?Sized> ScoreEndpoint for Box<E> {
    fn score(&mut self, requests: &[ScoreRequest]) -> Result<HashMap<String, ScoreValue>> {
        (**self).score(requests)
    }

    fn close(&mut self) -> Result<()> {
        (**self).close()
    }
}

// ---------------------------------------------------------------------------
// Built-in BM25
// ---------------------------------------------------------------------------

/// In-process BM25. Collection statistics are built over the passages of each
/// (query, instruction) group within a batch, which matches
/// [`crate::bm25::rank_pool`] when a batch is one query's pool.
#[derive(Debug, Clone, Default)]
pub struct Bm25Endpoint {
    pub params: Bm25Params,
    pub template: QueryTemplate,
}

impl ScoreEndpoint for Bm25Endpoint {
    fn score(&mut self, requests: &[ScoreRequest]) -> Result<HashMap<String, ScoreValue>> {
        check_unique_ids(requests)?;
        let mut groups: BTreeMap<(&str, &str), Vec<&ScoreRequest>> = BTreeMap::new();
        for r in requests {
            groups
                .entry((&r.query_text, &r.instruction_text))
                .or_default()
                .push(r);
        }
        let mut out = HashMap::with_capacity(requests.len());
        for ((query, instruction), group) in groups {
            // One pseudo-document per request so MaxP is the identity.
            let passages: Vec<Passage> = group
                .iter()
                .map(|r| Passage {
                    doc_id: r.request_id.clone(),
                    passage_index: 0,
                    start_word: 0,
                    text: r.passage_text.clone(),
                })
                .collect();
            let stats = crate::bm25::pool_stats(&passages)?;
            let joined = self.template.render(query, instruction);
            for (id, s) in score_pool(&joined, &passages, &stats, self.params)? {
                out.insert(id, ScoreValue::Score(s));
            }
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ReplayRecord {
    hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    logit_true: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    logit_false: Option<f64>,
}

/// Precomputed scores keyed by [`ScoreRequest::content_hash`].
///
/// File format, one record per line:
/// `{"hash":"<sha256 hex>","score":1.25}` or
/// `{"hash":"<sha256 hex>","logit_true":0.3,"logit_false":-1.0}`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayTable {
    entries: BTreeMap<String, ScoreValue>,
}

impl ReplayTable {
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ReplayRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            let value = value_from_parts(rec.score, rec.logit_true, rec.logit_false).map_err(
                |message| Error::Parse {
                    line: lineno,
                    message,
                },
            )?;
            if entries.insert(rec.hash.clone(), value).is_some() {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("hash {} listed twice", rec.hash),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for (hash, value) in &self.entries {
            let (score, logit_true, logit_false) = match *value {
                ScoreValue::Score(s) => (Some(s), None, None),
                ScoreValue::LogitPair {
                    logit_true,
                    logit_false,
                } => (None, Some(logit_true), Some(logit_false)),
            };
            let rec = ReplayRecord {
                hash: hash.clone(),
                score,
                logit_true,
                logit_false,
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn insert(&mut self, hash: String, value: ScoreValue) {
        self.entries.insert(hash, value);
    }

    pub fn get(&self, hash: &str) -> Option<ScoreValue> {
        self.entries.get(hash).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReplayEndpoint {
    pub table: ReplayTable,
}

impl ScoreEndpoint for ReplayEndpoint {
    fn score(&mut self, requests: &[ScoreRequest]) -> Result<HashMap<String, ScoreValue>> {
        check_unique_ids(requests)?;
        requests
            .iter()
            .map(|r| {
                let value = self.table.get(&r.content_hash()).ok_or_else(|| {
                    Error::Protocol(format!("no replay entry for request {}", r.request_id))
                })?;
                Ok((r.request_id.clone(), value))
            })
            .collect()
    }
}

/// Wraps an endpoint and records every answer into a [`ReplayTable`].
pub struct RecordingEndpoint<E> {
    pub inner: E,
    pub table: ReplayTable,
}

impl<E: ScoreEndpoint> RecordingEndpoint<E> {
    pub fn new(inner: E) -> Self {
        Self {
            inner,
            table: ReplayTable::default(),
        }
    }
}

impl<E: ScoreEndpoint> ScoreEndpoint for RecordingEndpoint<E> {
    fn score(&mut self, requests: &[ScoreRequest]) -> Result<HashMap<String, ScoreValue>> {
        let answers = self.inner.score(requests)?;
        for r in requests {
            if let Some(v) = answers.get(&r.request_id) {
                self.table.insert(r.content_hash(), *v);
            }
        }
        Ok(answers)
    }

    fn close(&mut self) -> Result<()> {
        self.inner.close()
    }
}

// ---------------------------------------------------------------------------
// Child process
// ---------------------------------------------------------------------------

/// A scorer running as a child process (`sh -c <command>`), one session per
/// process. Requests are written by a background thread so that a slow
/// reader on either side cannot deadlock the pipes.
pub struct ProcessEndpoint {
    child: Child,
    writer: Option<Sender<String>>,
    writer_thread: Option<JoinHandle<()>>,
    lines: Receiver<std::io::Result<String>>,
    pub batch_size: usize,
    pub timeout: Option<Duration>,
    closed: bool,
}

impl ProcessEndpoint {
    pub fn spawn(command: &str) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let mut stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");

        let (tx, rx) = mpsc::channel::<String>();
        let writer_thread = std::thread::spawn(move || {
            for line in rx {
                if stdin
                    .write_all(line.as_bytes())
                    .and_then(|_| stdin.write_all(b"\n"))
                    .and_then(|_| stdin.flush())
                    .is_err()
                {
                    break;
                }
            }
        });

        let (line_tx, line_rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if line_tx.send(line).is_err() || stop {
                    break;
                }
            }
        });

        Ok(Self {
            child,
            writer: Some(tx),
            writer_thread: Some(writer_thread),
            lines: line_rx,
            batch_size: 64,
            timeout: None,
            closed: false,
        })
    }

    /// Spawns the command named by [`SCORER_ENV`].
    pub fn from_env() -> Result<Self> {
        let cmd = std::env::var(SCORER_ENV).map_err(|_| Error::Missing {
            what: "environment variable",
            name: SCORER_ENV.to_string(),
        })?;
        Self::spawn(&cmd)
    }

    fn send(&self, line: String) -> Result<()> {
        self.writer
            .as_ref()
            .ok_or_else(|| Error::Protocol("session already closed".into()))?
            .send(line)
            .map_err(|_| Error::Protocol("scorer stdin closed".into()))
    }

    fn next_line(&self, answered: usize, total: usize) -> Result<Option<String>> {
        let received = match self.timeout {
            Some(t) => match self.lines.recv_timeout(t) {
                Ok(l) => Some(l),
                Err(RecvTimeoutError::Timeout) => {
                    return Err(Error::ScorerTimeout { answered, total })
                }
                Err(RecvTimeoutError::Disconnected) => None,
            },
            None => self.lines.recv().ok(),
        };
        match received {
            Some(Ok(l)) => Ok(Some(l)),
            Some(Err(e)) => Err(Error::Io(e)),
            None => Ok(None),
        }
    }
}

impl ScoreEndpoint for ProcessEndpoint {
    fn score(&mut self, requests: &[ScoreRequest]) -> Result<HashMap<String, ScoreValue>> {
        check_unique_ids(requests)?;
        let by_id: HashMap<&str, &ScoreRequest> = requests
            .iter()
            .map(|r| (r.request_id.as_str(), r))
            .collect();
        // A scorer that exits early closes its stdin; keep reading so the
        // error reports how many requests were answered.
        'send: for batch in requests.chunks(self.batch_size.max(1)) {
            for r in batch {
                if self.send(serde_json::to_string(r)?).is_err() {
                    break 'send;
                }
            }
            if self.send(FLUSH_LINE.to_string()).is_err() {
                break;
            }
        }

        let total = requests.len();
        let mut answers: HashMap<String, ScoreValue> = HashMap::with_capacity(total);
        let mut retried: HashSet<String> = HashSet::new();
        while answers.len() < total {
            let line = match self.next_line(answers.len(), total) {
                Ok(Some(l)) => l,
                Ok(None) => {
                    return Err(Error::ScorerExited {
                        answered: answers.len(),
                        total,
                    })
                }
                Err(e) => {
                    let _ = self.child.kill();
                    return Err(e);
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value = serde_json::from_str(&line)
                .map_err(|e| Error::Protocol(format!("unparseable response {line:?}: {e}")))?;
            if value.get("end").is_some() {
                return Err(Error::ScorerExited {
                    answered: answers.len(),
                    total,
                });
            }
            let id = value
                .get("request_id")
                .and_then(|v| v.as_str())
                .ok_or_else(|| Error::Protocol(format!("response without request_id: {line}")))?
                .to_string();
            let Some(request) = by_id.get(id.as_str()) else {
                return Err(Error::Protocol(format!(
                    "response for unknown request {id}"
                )));
            };
            if answers.contains_key(&id) {
                return Err(Error::Protocol(format!(
                    "duplicate response for request {id}"
                )));
            }
            match ScoreResponse::from_line(&line) {
                Ok(resp) => {
                    answers.insert(id, resp.value);
                }
                Err(e) if retried.insert(id.clone()) => {
                    log::warn!("{e}; retrying request {id}");
                    self.send(serde_json::to_string(request)?)?;
                    self.send(FLUSH_LINE.to_string())?;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(answers)
    }

    fn close(&mut self) -> Result<()> {
        if self.closed {
            return Ok(());
        }
        self.closed = true;
        let _ = self.send(END_LINE.to_string());
        self.writer.take();
        if let Some(h) = self.writer_thread.take() {
            let _ = h.join();
        }
        let status = self.child.wait()?;
        if !status.success() {
            log::warn!("scorer exited with {status}");
        }
        Ok(())
    }
}

impl Drop for ProcessEndpoint {
    fn drop(&mut self) {
        if !self.closed {
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
    }
}

// ---------------------------------------------------------------------------
// Reranking
// ---------------------------------------------------------------------------

/// Request id of a passage within a query: `qid/docid#index`.
pub fn request_id(query_id: &str, passage: &Passage) -> String {
    format!("{query_id}/{}", passage.passage_id())
}

/// Scores one query's pool through `endpoint`, MaxP-aggregates per document
/// and ranks with the usual tie-break.
pub fn rerank_with_scorer<E: ScoreEndpoint + ?Sized>(
    query_id: &str,
    query_text: &str,
    instruction_text: &str,
    pool: &[Passage],
    endpoint: &mut E,
    tag: &str,
) -> Result<Run> {
    if pool.is_empty() {
        return Err(Error::Empty("empty passage pool"));
    }
    let requests: Vec<ScoreRequest> = pool
        .iter()
        .map(|p| ScoreRequest {
            request_id: request_id(query_id, p),
            query_text: query_text.to_string(),
            instruction_text: instruction_text.to_string(),
            passage_text: p.text.clone(),
        })
        .collect();
    check_unique_ids(&requests)?;
    let answers = endpoint.score(&requests)?;
    if answers.len() != requests.len() {
        return Err(Error::Protocol(format!(
            "endpoint answered {} of {} requests",
            answers.len(),
            requests.len()
        )));
    }
    let mut per_doc: BTreeMap<&str, Vec<(usize, f64)>> = BTreeMap::new();
    for (p, r) in pool.iter().zip(&requests) {
        let value = answers
            .get(&r.request_id)
            .ok_or_else(|| Error::Protocol(format!("request {} was not answered", r.request_id)))?;
        per_doc
            .entry(&p.doc_id)
            .or_default()
            .push((p.passage_index, value.to_score()?));
    }
    let scored = per_doc
        .into_iter()
        .map(|(d, s)| Ok((d.to_string(), maxp_aggregate(&s)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut run = Run::new();
    run.insert_scored(query_id, scored, tag);
    Ok(run)
}
