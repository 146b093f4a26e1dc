//! Fixed reranking pools: every judged-relevant document plus top-ranked
//! non-relevant documents drawn round-robin from several runs.
//!
//! Pool files have one whitespace-separated row per pooled document:
//!
//! ```text
//! 301 FBIS3-10082 relevant
//! 301 FT934-5418 run:bm25
//! 301 LA110990-0013 run:e5:unjudged
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::model::{Qrels, Relevance, Run};

pub const DEFAULT_MAX_POOL: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    Relevant,
    /// Contributed by the run with this tag; `judged` is false when the
    /// document has no judgment at all.
    Run {
        tag: String,
        judged: bool,
    },
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Relevant => f.write_str("relevant"),
            Provenance::Run { tag, judged: true } => write!(f, "run:{tag}"),
            Provenance::Run { tag, judged: false } => write!(f, "run:{tag}:unjudged"),
        }
    }
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "relevant" {
            return Ok(Provenance::Relevant);
        }
        let rest = s
            .strip_prefix("run:")
            .ok_or_else(|| format!("unknown provenance {s:?}"))?;
        let (tag, judged) = match rest.strip_suffix(":unjudged") {
            Some(tag) => (tag, false),
            None => (rest, true),
        };
        if tag.is_empty() {
            return Err(format!("provenance {s:?} lacks a run tag"));
        }
        Ok(Provenance::Run {
            tag: tag.to_string(),
            judged,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pool {
    pub query_id: String,
    /// Doc ids in pooling order, each with its provenance.
    pub docs: IndexMap<String, Provenance>,
}

impl Pool {
    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.docs.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.docs.contains_key(doc_id)
    }
}

pub type Pools = BTreeMap<String, Pool>;

/// Builds one pool per query judged in `qrels_og`.
///
/// Pools are seeded with every grade > 0 document. Runs are then visited
/// round-robin in the given order; each visit takes that run's highest-ranked
/// document that is neither pooled nor judged relevant. Filling stops at
/// `max_size` or once every run is exhausted.
pub fn build_pool(qrels_og: &Qrels, runs: &[Run], max_size: usize) -> Result<Pools> {
    if runs.is_empty() {
        return Err(Error::Empty("pooling needs at least one run"));
    }
    let mut pools = Pools::new();
    for (qid, judged) in qrels_og.queries() {
        let relevant: Vec<&str> = judged.relevant().collect();
        if relevant.len() > max_size {
            return Err(Error::PoolTooSmall {
                query_id: qid.to_string(),
                relevant: relevant.len(),
                max_size,
            });
        }
        let mut docs: IndexMap<String, Provenance> = relevant
            .iter()
            .map(|d| (d.to_string(), Provenance::Relevant))
            .collect();
        let relevant: HashSet<&str> = relevant.into_iter().collect();

        let lists: Vec<_> = runs.iter().filter_map(|r| r.get(qid)).collect();
        let mut cursors = vec![0usize; lists.len()];
        while docs.len() < max_size {
            let mut progressed = false;
            for (list, cursor) in lists.iter().zip(cursors.iter_mut()) {
                if docs.len() >= max_size {
                    break;
                }
                while let Some(entry) = list.get(*cursor) {
                    *cursor += 1;
                    if relevant.contains(entry.doc_id.as_str()) || docs.contains_key(&entry.doc_id)
                    {
                        continue;
                    }
                    let judged = judged.relevance(&entry.doc_id) != Relevance::Unjudged;
                    docs.insert(
                        entry.doc_id.clone(),
                        Provenance::Run {
                            tag: entry.tag.clone(),
                            judged,
                        },
                    );
                    progressed = true;
                    break;
                }
            }
            if !progressed {
                break;
            }
        }
        pools.insert(
            qid.to_string(),
            Pool {
                query_id: qid.to_string(),
                docs,
            },
        );
    }
    Ok(pools)
}

pub fn write_pools<W: Write>(pools: &Pools, mut out: W) -> std::io::Result<()> {
    for pool in pools.values() {
        for (doc, prov) in &pool.docs {
            writeln!(out, "{} {} {}", pool.query_id, doc, prov)?;
        }
    }
    Ok(())
}

pub fn parse_pools<R: BufRead>(reader: R) -> Result<Pools> {
    let mut pools = Pools::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        let prov: Provenance = fields[2].parse().map_err(|message| Error::Parse {
            line: lineno,
            message,
        })?;
        let pool = pools.entry(fields[0].to_string()).or_insert_with(|| Pool {
            query_id: fields[0].to_string(),
            docs: IndexMap::new(),
        });
        if pool.docs.insert(fields[1].to_string(), prov).is_some() {
            return Err(Error::Parse {
                line: lineno,
                message: format!(
                    "document {} pooled twice for query {}",
                    fields[1], fields[0]
                ),
            });
        }
    }
    Ok(pools)
}
