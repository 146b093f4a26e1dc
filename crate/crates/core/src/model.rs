//! Domain types and readers/writers for TREC runs, TREC qrels and the
//! paired-instruction query dataset.
//!
//! Run rows are `qid Q0 docid rank score tag`, qrels rows are
//! `qid iteration docid grade`, and the dataset is one JSON object per line:
//!
//! ```text
//! {"query_id":"301","text":"international organized crime","instruction":"...","instruction_modified":"...","variants":{"keywords":"..."}}
//! ```

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Orders `(doc_id, score)` pairs by descending score, then ascending doc id.
pub fn rank_order(a: (&str, f64), b: (&str, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub query_id: String,
    /// Second column of the TREC row, usually the literal `Q0`.
    pub q0: String,
    pub doc_id: String,
    pub rank: u32,
    pub score: f64,
    pub tag: String,
}

/// Per-query ranked lists. Query groups keep their first-seen order and
/// entries within a group are stored in rank order (rank = position + 1).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Run {
    groups: IndexMap<String, Vec<RunEntry>>,
}

/// Raised when a query's declared ranks had to be re-derived from scores.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankWarning {
    pub query_id: String,
    pub reason: String,
}

impl fmt::Display for RankWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "query {}: {}; ranks re-derived from scores",
            self.query_id, self.reason
        )
    }
}

#[derive(Debug, Clone)]
pub struct ParsedRun {
    pub run: Run,
    pub warnings: Vec<RankWarning>,
}

impl Run {
    pub fn new() -> Self {
        Self::default()
    }

    /// Ranks scored documents for one query (descending score, ascending doc
    /// id on ties) and appends them as a new group, replacing any previous
    /// group for that query.
    pub fn insert_scored<I, S>(&mut self, query_id: &str, scored: I, tag: &str)
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut docs: Vec<(String, f64)> = scored.into_iter().map(|(d, s)| (d.into(), s)).collect();
        docs.sort_by(|a, b| rank_order((&a.0, a.1), (&b.0, b.1)));
        let entries = docs
            .into_iter()
            .enumerate()
            .map(|(i, (doc_id, score))| RunEntry {
                query_id: query_id.to_string(),
                q0: "Q0".to_string(),
                doc_id,
                rank: i as u32 + 1,
                score,
                tag: tag.to_string(),
            })
            .collect();
        self.groups.insert(query_id.to_string(), entries);
    }

    pub fn get(&self, query_id: &str) -> Option<&[RunEntry]> {
        self.groups.get(query_id).map(Vec::as_slice)
    }

    /// Doc ids of a query in rank order.
    pub fn ranking(&self, query_id: &str) -> Option<Vec<&str>> {
        self.get(query_id)
            .map(|g| g.iter().map(|e| e.doc_id.as_str()).collect())
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.groups.keys().map(String::as_str)
    }

    pub fn groups(&self) -> impl Iterator<Item = (&str, &[RunEntry])> {
        self.groups.iter().map(|(q, g)| (q.as_str(), g.as_slice()))
    }

    pub fn num_queries(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Sorts query groups by query id; used before writing merged output.
    pub fn sort_queries(&mut self) {
        self.groups.sort_keys();
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for entries in self.groups.values() {
            for e in entries {
                writeln!(
                    out,
                    "{} {} {} {} {} {}",
                    e.query_id, e.q0, e.doc_id, e.rank, e.score, e.tag
                )?;
            }
        }
        Ok(())
    }

    pub fn to_trec_string(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("run fields are UTF-8")
    }
}

/// Parses a six-column TREC run.
///
/// Declared ranks are kept when they form `1..=n` with non-increasing scores.
/// Otherwise the query is re-ranked by descending score with ascending doc id
/// breaking ties, and a [`RankWarning`] is recorded.
pub fn parse_run<R: BufRead>(reader: R) -> Result<ParsedRun> {
    // (declared rank, entry)
    let mut groups: IndexMap<String, Vec<(i64, RunEntry)>> = IndexMap::new();
    let mut seen: HashMap<(String, String), usize> = HashMap::new();

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 6 fields, found {}", fields.len()),
            });
        }
        let rank: i64 = fields[3].parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("rank {:?} is not an integer", fields[3]),
        })?;
        let score: f64 = fields[4].parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("score {:?} is not a number", fields[4]),
        })?;
        if !score.is_finite() {
            return Err(Error::Parse {
                line: lineno,
                message: format!("score {:?} is not finite", fields[4]),
            });
        }
        let key = (fields[0].to_string(), fields[2].to_string());
        if let Some(first) = seen.insert(key, lineno) {
            return Err(Error::Parse {
                line: lineno,
                message: format!(
                    "document {} already listed for query {} on line {first}",
                    fields[2], fields[0]
                ),
            });
        }
        groups.entry(fields[0].to_string()).or_default().push((
            rank,
            RunEntry {
                query_id: fields[0].to_string(),
                q0: fields[1].to_string(),
                doc_id: fields[2].to_string(),
                rank: 0,
                score,
                tag: fields[5].to_string(),
            },
        ));
    }

    let mut run = Run::new();
    let mut warnings = Vec::new();
    for (query_id, mut rows) in groups {
        rows.sort_by_key(|(r, _)| *r);
        let ranks_ok = rows
            .iter()
            .enumerate()
            .all(|(i, (r, _))| *r == i as i64 + 1);
        let scores_ok = rows.windows(2).all(|w| w[0].1.score >= w[1].1.score);
        if !(ranks_ok && scores_ok) {
            warnings.push(RankWarning {
                query_id: query_id.clone(),
                reason: if ranks_ok {
                    "scores increase with rank".to_string()
                } else {
                    "declared ranks are not 1..n".to_string()
                },
            });
            rows.sort_by(|a, b| rank_order((&a.1.doc_id, a.1.score), (&b.1.doc_id, b.1.score)));
        }
        let entries = rows
            .into_iter()
            .enumerate()
            .map(|(i, (_, mut e))| {
                e.rank = i as u32 + 1;
                e
            })
            .collect();
        run.groups.insert(query_id, entries);
    }
    Ok(ParsedRun { run, warnings })
}

// ---------------------------------------------------------------------------
// Qrels
// ---------------------------------------------------------------------------

/// Relevance of a (query, doc) pair. Unjudged is distinct from grade 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relevance {
    Unjudged,
    Judged(u32),
}

impl Relevance {
    /// Gain used by metrics: unjudged counts as non-relevant.
    pub fn gain(self) -> u32 {
        match self {
            Relevance::Unjudged => 0,
            Relevance::Judged(g) => g,
        }
    }

    pub fn is_relevant(self) -> bool {
        self.gain() > 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Judgment {
    pub query_id: String,
    pub doc_id: String,
    pub grade: u32,
}

/// Judgments of one query, keyed by doc id in input order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueryJudgments {
    grades: IndexMap<String, u32>,
}

impl QueryJudgments {
    pub fn from_grades<I, S>(grades: I) -> Self
    where
        I: IntoIterator<Item = (S, u32)>,
        S: Into<String>,
    {
        Self {
            grades: grades.into_iter().map(|(d, g)| (d.into(), g)).collect(),
        }
    }

    pub fn relevance(&self, doc_id: &str) -> Relevance {
        self.grades
            .get(doc_id)
            .map_or(Relevance::Unjudged, |g| Relevance::Judged(*g))
    }

    pub fn gain(&self, doc_id: &str) -> u32 {
        self.relevance(doc_id).gain()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.grades.iter().map(|(d, g)| (d.as_str(), *g))
    }

    /// Doc ids with grade > 0, in input order.
    pub fn relevant(&self) -> impl Iterator<Item = &str> {
        self.iter().filter(|(_, g)| *g > 0).map(|(d, _)| d)
    }

    pub fn num_relevant(&self) -> usize {
        self.relevant().count()
    }

    pub fn len(&self) -> usize {
        self.grades.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grades.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    queries: IndexMap<String, QueryJudgments>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a judgment; returns `false` (and leaves the grade unchanged) if
    /// the pair was already judged.
    pub fn insert(&mut self, query_id: &str, doc_id: &str, grade: u32) -> bool {
        let q = self.queries.entry(query_id.to_string()).or_default();
        if q.grades.contains_key(doc_id) {
            return false;
        }
        q.grades.insert(doc_id.to_string(), grade);
        true
    }

    pub fn query(&self, query_id: &str) -> Option<&QueryJudgments> {
        self.queries.get(query_id)
    }

    pub fn relevance(&self, query_id: &str, doc_id: &str) -> Relevance {
        self.query(query_id)
            .map_or(Relevance::Unjudged, |q| q.relevance(doc_id))
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.queries.keys().map(String::as_str)
    }

    pub fn queries(&self) -> impl Iterator<Item = (&str, &QueryJudgments)> {
        self.queries.iter().map(|(q, j)| (q.as_str(), j))
    }

    pub fn judgments(&self) -> impl Iterator<Item = Judgment> + '_ {
        self.queries.iter().flat_map(|(q, j)| {
            j.iter().map(move |(d, g)| Judgment {
                query_id: q.clone(),
                doc_id: d.to_string(),
                grade: g,
            })
        })
    }

    pub fn num_queries(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (q, judged) in &self.queries {
            for (d, g) in &judged.grades {
                writeln!(out, "{q} 0 {d} {g}")?;
            }
        }
        Ok(())
    }

    pub fn to_trec_string(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("qrels fields are UTF-8")
    }
}

/// Parses four-column TREC qrels. The iteration column is ignored.
pub fn parse_qrels<R: BufRead>(reader: R) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    let mut lines_of: HashMap<(String, String), usize> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let grade: i64 = fields[3].parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("grade {:?} is not an integer", fields[3]),
        })?;
        if grade < 0 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("negative grade {grade}"),
            });
        }
        let grade = u32::try_from(grade).map_err(|_| Error::Parse {
            line: lineno,
            message: format!("grade {grade} out of range"),
        })?;
        let key = (fields[0].to_string(), fields[2].to_string());
        if let Some(first_line) = lines_of.get(&key) {
            return Err(Error::DuplicateJudgment {
                query_id: key.0,
                doc_id: key.1,
                first_line: *first_line,
                second_line: lineno,
            });
        }
        qrels.insert(fields[0], fields[2], grade);
        lines_of.insert(key, lineno);
    }
    Ok(qrels)
}

// ---------------------------------------------------------------------------
// Query dataset
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    #[serde(rename = "text")]
    pub query_text: String,
    #[serde(
        rename = "instruction",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub instruction_original: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction_modified: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub variants: BTreeMap<String, String>,
}

impl QueryRecord {
    pub fn is_paired(&self) -> bool {
        self.instruction_modified.is_some()
    }

    /// Instruction text for the given choice; `None` when the record lacks it.
    /// A missing original instruction reads as empty text.
    pub fn instruction(&self, choice: &InstructionChoice) -> Option<&str> {
        match choice {
            InstructionChoice::Original => Some(self.instruction_original.as_deref().unwrap_or("")),
            InstructionChoice::Modified => self.instruction_modified.as_deref(),
            InstructionChoice::None => Some(""),
            InstructionChoice::Variant(name) => self.variants.get(name).map(String::as_str),
        }
    }
}

/// Which instruction text accompanies the query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InstructionChoice {
    Original,
    Modified,
    None,
    Variant(String),
}

impl FromStr for InstructionChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "" => Err(Error::Config("empty instruction variant name".into())),
            "original" | "og" => Ok(Self::Original),
            "modified" | "new" => Ok(Self::Modified),
            "none" => Ok(Self::None),
            other => Ok(Self::Variant(other.to_string())),
        }
    }
}

impl fmt::Display for InstructionChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Original => f.write_str("original"),
            Self::Modified => f.write_str("modified"),
            Self::None => f.write_str("none"),
            Self::Variant(v) => f.write_str(v),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    records: Vec<QueryRecord>,
    index: HashMap<String, usize>,
}

impl Dataset {
    pub fn from_records(records: Vec<QueryRecord>) -> Result<Self> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.query_id.is_empty() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "empty query_id".into(),
                });
            }
            if index.insert(r.query_id.clone(), i).is_some() {
                return Err(Error::DuplicateQuery {
                    query_id: r.query_id.clone(),
                    line: i + 1,
                });
            }
        }
        Ok(Self { records, index })
    }

    pub fn get(&self, query_id: &str) -> Option<&QueryRecord> {
        self.index.get(query_id).map(|&i| &self.records[i])
    }

    pub fn records(&self) -> &[QueryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Reads one query record per line. Blank lines are skipped.
pub fn load_dataset<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut records = Vec::new();
    let mut lines_of: HashMap<String, usize> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: QueryRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if rec.query_id.is_empty() {
            return Err(Error::Parse {
                line: lineno,
                message: "empty query_id".into(),
            });
        }
        if lines_of.insert(rec.query_id.clone(), lineno).is_some() {
            return Err(Error::DuplicateQuery {
                query_id: rec.query_id,
                line: lineno,
            });
        }
        records.push(rec);
    }
    Dataset::from_records(records)
}

// ---------------------------------------------------------------------------
// Pairing validation
// ---------------------------------------------------------------------------

/// A document that is relevant under the modified instruction but was not
/// relevant under the original one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GainViolation {
    pub query_id: String,
    pub doc_id: String,
    pub grade_og: Relevance,
    pub grade_new: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairingReport {
    pub missing_modified_instruction: Vec<String>,
    pub missing_modified_qrels: Vec<String>,
    pub violations: Vec<GainViolation>,
}

impl PairingReport {
    pub fn is_clean(&self) -> bool {
        self.missing_modified_instruction.is_empty()
            && self.missing_modified_qrels.is_empty()
            && self.violations.is_empty()
    }
}

/// Reports queries that cannot take part in paired evaluation and documents
/// that gained relevance under the modified instruction.
pub fn validate_pairing(dataset: &Dataset, qrels_og: &Qrels, qrels_new: &Qrels) -> PairingReport {
    let mut report = PairingReport::default();
    for rec in dataset.records() {
        if !rec.is_paired() {
            report
                .missing_modified_instruction
                .push(rec.query_id.clone());
        }
        if qrels_new.query(&rec.query_id).is_none() {
            report.missing_modified_qrels.push(rec.query_id.clone());
        }
    }
    let query_ids: BTreeSet<&str> = qrels_new.query_ids().collect();
    for qid in query_ids {
        let judged = qrels_new.query(qid).expect("id taken from qrels");
        let mut docs: Vec<(&str, u32)> = judged.iter().filter(|(_, g)| *g > 0).collect();
        docs.sort();
        for (doc_id, grade_new) in docs {
            let grade_og = qrels_og.relevance(qid, doc_id);
            if grade_og.gain() == 0 {
                report.violations.push(GainViolation {
                    query_id: qid.to_string(),
                    doc_id: doc_id.to_string(),
                    grade_og,
                    grade_new,
                });
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(text: &str) -> ParsedRun {
        parse_run(text.as_bytes()).unwrap()
    }

    fn qrels(text: &str) -> Qrels {
        parse_qrels(text.as_bytes()).unwrap()
    }

    #[test]
    fn parses_single_run_row() {
        let parsed = run("q1 Q0 d7 1 3.5 bm25\n");
        let e = &parsed.run.get("q1").unwrap()[0];
        assert_eq!(
            (
                e.query_id.as_str(),
                e.doc_id.as_str(),
                e.rank,
                e.score,
                e.tag.as_str()
            ),
            ("q1", "d7", 1, 3.5, "bm25")
        );
        assert!(parsed.warnings.is_empty());
    }

    #[test]
    fn consistent_declared_ranks_are_kept_on_score_ties() {
        let parsed = run("q1 Q0 d7 1 3.5 t\nq1 Q0 d2 2 3.5 t\n");
        assert_eq!(parsed.run.ranking("q1").unwrap(), vec!["d7", "d2"]);
        assert!(parsed.warnings.is_empty());
    }

    #[test]
    fn inconsistent_ranks_fall_back_to_score_then_doc_id() {
        let parsed = run("q1 Q0 d7 0 3.5 t\nq1 Q0 d2 0 3.5 t\nq1 Q0 d9 0 4.0 t\n");
        assert_eq!(parsed.run.ranking("q1").unwrap(), vec!["d9", "d2", "d7"]);
        assert_eq!(parsed.warnings.len(), 1);

        let parsed = run("q1 Q0 a 1 1.0 t\nq1 Q0 b 2 2.0 t\n");
        assert_eq!(parsed.run.ranking("q1").unwrap(), vec!["b", "a"]);
        assert_eq!(parsed.warnings[0].reason, "scores increase with rank");
    }

    #[test]
    fn run_errors_carry_line_numbers() {
        let err = parse_run("q1 Q0 d7 one 3.5 t\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        let err = parse_run("q1 Q0 d7 1 3.5 t\nq1 Q0 d8 2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_run("q1 Q0 d7 1 x t\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_run("q1 Q0 d7 1 1 t\nq1 Q0 d7 2 0 t\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn second_column_is_preserved() {
        let text = "q1 iter7 d1 1 2 t\n";
        assert_eq!(run(text).run.to_trec_string(), text);
    }

    #[test]
    fn insert_scored_breaks_ties_by_doc_id() {
        let mut r = Run::new();
        r.insert_scored("q", [("d7", 3.5), ("d2", 3.5), ("d1", 1.0)], "x");
        assert_eq!(r.ranking("q").unwrap(), vec!["d2", "d7", "d1"]);
        assert_eq!(
            r.get("q")
                .unwrap()
                .iter()
                .map(|e| e.rank)
                .collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
    }

    #[test]
    fn parses_qrels() {
        let q = qrels("q1 0 d7 2\n");
        assert_eq!(q.relevance("q1", "d7"), Relevance::Judged(2));
        assert_eq!(q.relevance("q1", "d8"), Relevance::Unjudged);
        assert_eq!(q.relevance("q2", "d7"), Relevance::Unjudged);
        assert!(qrels("").is_empty());
    }

    #[test]
    fn unjudged_differs_from_grade_zero() {
        let q = qrels("q1 0 d1 0\n");
        assert_eq!(q.relevance("q1", "d1"), Relevance::Judged(0));
        assert_ne!(q.relevance("q1", "d1"), q.relevance("q1", "d2"));
        assert_eq!(q.relevance("q1", "d2").gain(), 0);
    }

    #[test]
    fn duplicate_qrels_name_both_lines() {
        let err = parse_qrels("q1 0 d7 1\nq1 0 d8 1\nq1 0 d7 1\n".as_bytes()).unwrap_err();
        match err {
            Error::DuplicateJudgment {
                first_line,
                second_line,
                ..
            } => assert_eq!((first_line, second_line), (1, 3)),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn negative_and_malformed_grades_are_rejected() {
        assert!(parse_qrels("q1 0 d7 -1\n".as_bytes()).is_err());
        assert!(parse_qrels("q1 0 d7 x\n".as_bytes()).is_err());
        assert!(parse_qrels("q1 0 d7\n".as_bytes()).is_err());
    }

    #[test]
    fn dataset_optional_fields() {
        let ds = load_dataset(r#"{"query_id":"q1","text":"cats"}"#.as_bytes()).unwrap();
        let r = ds.get("q1").unwrap();
        assert!(r.instruction_original.is_none());
        assert!(!r.is_paired());
        assert_eq!(r.instruction(&InstructionChoice::Original), Some(""));
        assert_eq!(r.instruction(&InstructionChoice::Modified), None);

        let ds = load_dataset(
            r#"{"query_id":"q1","text":"cats","instruction":"a","instruction_modified":"b","variants":{"short":"s"}}"#
                .as_bytes(),
        )
        .unwrap();
        let r = ds.get("q1").unwrap();
        assert!(r.is_paired());
        assert_eq!(r.instruction(&"short".parse().unwrap()), Some("s"));
    }

    #[test]
    fn dataset_rejects_duplicates_and_missing_fields() {
        let two = "{\"query_id\":\"q1\",\"text\":\"a\"}\n{\"query_id\":\"q1\",\"text\":\"b\"}\n";
        assert!(matches!(
            load_dataset(two.as_bytes()),
            Err(Error::DuplicateQuery { line: 2, .. })
        ));
        assert!(load_dataset(r#"{"text":"a"}"#.as_bytes()).is_err());
        assert!(load_dataset(r#"{"query_id":"q1"}"#.as_bytes()).is_err());
        assert!(load_dataset(r#"{"query_id":"","text":"a"}"#.as_bytes()).is_err());
    }

    #[test]
    fn dataset_round_trips() {
        let text = "{\"query_id\":\"q1\",\"text\":\"a\",\"instruction\":\"i\",\"variants\":{\"k\":\"v\"}}\n";
        let ds = load_dataset(text.as_bytes()).unwrap();
        let mut out = Vec::new();
        ds.write(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }

    fn paired_dataset() -> Dataset {
        load_dataset(
            "{\"query_id\":\"q1\",\"text\":\"a\",\"instruction\":\"i\",\"instruction_modified\":\"j\"}\n{\"query_id\":\"q2\",\"text\":\"b\",\"instruction\":\"i\"}\n"
                .as_bytes(),
        )
        .unwrap()
    }

    #[test]
    fn validation_accepts_relevance_loss() {
        let r = validate_pairing(
            &paired_dataset(),
            &qrels("q1 0 d1 1\n"),
            &qrels("q1 0 d1 0\n"),
        );
        assert!(r.violations.is_empty());
        assert_eq!(r.missing_modified_instruction, vec!["q2"]);
        assert_eq!(r.missing_modified_qrels, vec!["q2"]);
    }

    #[test]
    fn validation_flags_relevance_gain() {
        let r = validate_pairing(
            &paired_dataset(),
            &qrels("q1 0 d1 0\n"),
            &qrels("q1 0 d1 1\n"),
        );
        assert_eq!(
            r.violations,
            vec![GainViolation {
                query_id: "q1".into(),
                doc_id: "d1".into(),
                grade_og: Relevance::Judged(0),
                grade_new: 1
            }]
        );
    }
}
