//! Filtering and balancing of generated training documents.
//!
//! Candidates are JSON lines:
//!
//! ```text
//! {"query_id":"q12","instruction_text":"...","doc_text":"...","generated_label":"relevant","scorer_prob":0.91}
//! ```

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bridge::{ScoreEndpoint, ScoreRequest, ScoreValue};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    Relevant,
    NonRelevant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedCandidate {
    pub query_id: String,
    /// Query text sent to the scorer; optional in candidate files.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub query_text: String,
    pub instruction_text: String,
    pub doc_text: String,
    pub generated_label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scorer_prob: Option<f64>,
}

impl GeneratedCandidate {
    fn prob(&self, index: usize) -> Result<f64> {
        self.scorer_prob.ok_or(Error::MissingProbability { index })
    }
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Keeps candidates whose scorer verdict (`prob >= threshold`) agrees with
/// the generated label.
pub fn filter_by_verdict(
    candidates: Vec<GeneratedCandidate>,
    threshold: f64,
) -> Result<Vec<GeneratedCandidate>> {
    let mut kept = Vec::with_capacity(candidates.len());
    for (i, c) in candidates.into_iter().enumerate() {
        let predicted_relevant = c.prob(i)? >= threshold;
        if predicted_relevant == (c.generated_label == Label::Relevant) {
            kept.push(c);
        }
    }
    Ok(kept)
}

/// Best (index, probability) seen so far for the relevant and non-relevant side.
type BestPair = (Option<(usize, f64)>, Option<(usize, f64)>);

fn text_hash(text: &str) -> [u8; 32] {
    Sha256::digest(text.as_bytes()).into()
}

/// Keeps, per query, the most confident relevant candidate (highest
/// probability) and the most confident non-relevant one (lowest
/// probability). Queries missing either side are dropped. Ties go to the
/// smaller SHA-256 of `doc_text`. Output is ordered by query id, relevant
/// first.
pub fn balance_per_query(candidates: Vec<GeneratedCandidate>) -> Result<Vec<GeneratedCandidate>> {
    let mut by_query: BTreeMap<String, BestPair> = BTreeMap::new();
    let hashes: Vec<[u8; 32]> = candidates.iter().map(|c| text_hash(&c.doc_text)).collect();
    for (i, c) in candidates.iter().enumerate() {
        let p = c.prob(i)?;
        let slot = by_query.entry(c.query_id.clone()).or_default();
        let best = match c.generated_label {
            Label::Relevant => &mut slot.0,
            Label::NonRelevant => &mut slot.1,
        };
        let replace = match *best {
            None => true,
            Some((_, bp)) if p != bp => (c.generated_label == Label::Relevant) == (p > bp),
            Some((j, _)) => hashes[i] < hashes[j],
        };
        if replace {
            *best = Some((i, p));
        }
    }
    let mut keep: Vec<usize> = Vec::new();
    for (rel, non) in by_query.values() {
        if let (Some((r, _)), Some((n, _))) = (rel, non) {
            keep.push(*r);
            keep.push(*n);
        }
    }
    let mut slots: Vec<Option<GeneratedCandidate>> = candidates.into_iter().map(Some).collect();
    Ok(keep
        .into_iter()
        .map(|i| slots[i].take().expect("each index kept once"))
        .collect())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub input: usize,
    pub after_verdict: usize,
    pub output: usize,
    pub queries_in: usize,
    pub queries_out: usize,
}

/// Verdict filter followed by per-query balancing.
pub fn filter_training_set(
    candidates: Vec<GeneratedCandidate>,
    threshold: f64,
) -> Result<(Vec<GeneratedCandidate>, FilterSummary)> {
    let queries = |cs: &[GeneratedCandidate]| {
        cs.iter()
            .map(|c| c.query_id.as_str())
            .collect::<std::collections::HashSet<_>>()
            .len()
    };
    let mut summary = FilterSummary {
        input: candidates.len(),
        queries_in: queries(&candidates),
        ..Default::default()
    };
    let filtered = filter_by_verdict(candidates, threshold)?;
    summary.after_verdict = filtered.len();
    let balanced = balance_per_query(filtered)?;
    summary.output = balanced.len();
    summary.queries_out = queries(&balanced);
    Ok((balanced, summary))
}

/// Fills `scorer_prob` through a scorer endpoint. Logit pairs are converted
/// to probabilities; plain scores must already lie in `[0, 1]`.
pub fn score_candidates<E: ScoreEndpoint + ?Sized>(
    candidates: &mut [GeneratedCandidate],
    endpoint: &mut E,
) -> Result<()> {
    let requests: Vec<ScoreRequest> = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| ScoreRequest {
            request_id: format!("cand-{i}"),
            query_text: c.query_text.clone(),
            instruction_text: c.instruction_text.clone(),
            passage_text: c.doc_text.clone(),
        })
        .collect();
    let answers: HashMap<String, ScoreValue> = endpoint.score(&requests)?;
    for (c, r) in candidates.iter_mut().zip(&requests) {
        let value = answers
            .get(&r.request_id)
            .ok_or_else(|| Error::Protocol(format!("request {} was not answered", r.request_id)))?;
        let p = value.to_score()?;
        if let ScoreValue::Score(_) = value {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Protocol(format!(
                    "score {p} for {} is not a probability",
                    r.request_id
                )));
            }
        }
        c.scorer_prob = Some(p);
    }
    Ok(())
}

pub fn read_candidates<R: BufRead>(reader: R) -> Result<Vec<GeneratedCandidate>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let c: GeneratedCandidate = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        if let Some(p) = c.scorer_prob {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("scorer_prob {p} outside [0, 1]"),
                });
            }
        }
        out.push(c);
    }
    Ok(out)
}

pub fn write_candidates<W: Write>(candidates: &[GeneratedCandidate], mut out: W) -> Result<()> {
    for c in candidates {
        serde_json::to_writer(&mut out, c)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
