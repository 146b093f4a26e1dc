//! Ranking metrics over a single query plus macro aggregation.
//!
//! Rankings are slices of doc ids in rank order. Graded judgments come from
//! [`QueryJudgments`]; unjudged documents count as non-relevant. Queries with
//! no relevant documents yield `None` from AP, nDCG and RR and are expected to
//! be excluded by the caller.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::QueryJudgments;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricSpec {
    Map,
    Ndcg(usize),
    Mrr,
    PMrr,
    Robustness(usize),
}

impl MetricSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Map => "map",
            Self::Ndcg(_) => "ndcg",
            Self::Mrr => "mrr",
            Self::PMrr => "p-mrr",
            Self::Robustness(_) => "robustness",
        }
    }

    pub fn cutoff(&self) -> Option<usize> {
        match self {
            Self::Ndcg(k) | Self::Robustness(k) => Some(*k),
            _ => None,
        }
    }
}

impl FromStr for MetricSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let cutoff = |rest: &str| -> Result<usize> {
            match rest.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(k),
                _ => Err(Error::UnknownMetric(s.to_string())),
            }
        };
        match lower.as_str() {
            "map" => Ok(Self::Map),
            "mrr" => Ok(Self::Mrr),
            "p-mrr" | "pmrr" => Ok(Self::PMrr),
            other => {
                if let Some(rest) = other.strip_prefix("ndcg@") {
                    Ok(Self::Ndcg(cutoff(rest)?))
                } else if let Some(rest) = other.strip_prefix("robustness@") {
                    Ok(Self::Robustness(cutoff(rest)?))
                } else {
                    Err(Error::UnknownMetric(s.to_string()))
                }
            }
        }
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.cutoff() {
            Some(k) => write!(f, "{}@{k}", self.name()),
            None => f.write_str(self.name()),
        }
    }
}

// ---------------------------------------------------------------------------
// Pairwise p-MRR
// ---------------------------------------------------------------------------

/// Rank change of one changed-relevance document between the original and
/// the modified instruction.
///
/// With `MRR = 1/rank`, the score is `MRR_og/MRR_new - 1` when the document
/// moved up (`rank_og > rank_new`) and `1 - MRR_new/MRR_og` otherwise. It is
/// positive when the document was demoted, negative when promoted, and lies in
/// `(-1, 1)`.
pub fn p_mrr_doc(rank_og: u32, rank_new: u32) -> Result<f64> {
    if rank_og < 1 {
        return Err(Error::InvalidRank(rank_og.into()));
    }
    if rank_new < 1 {
        return Err(Error::InvalidRank(rank_new.into()));
    }
    let (og, new) = (f64::from(rank_og), f64::from(rank_new));
    Ok(if rank_og > rank_new {
        new / og - 1.0
    } else {
        1.0 - og / new
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDocDelta {
    pub doc_id: String,
    pub rank_og: u32,
    pub rank_new: u32,
    pub p_mrr: f64,
}

impl PairedDocDelta {
    pub fn new(doc_id: impl Into<String>, rank_og: u32, rank_new: u32) -> Result<Self> {
        Ok(Self {
            doc_id: doc_id.into(),
            rank_og,
            rank_new,
            p_mrr: p_mrr_doc(rank_og, rank_new)?,
        })
    }
}

/// Mean per-document p-MRR of one query.
pub fn p_mrr_query(deltas: &[PairedDocDelta]) -> Result<f64> {
    if deltas.is_empty() {
        return Err(Error::Empty("query has no changed documents"));
    }
    Ok(deltas.iter().map(|d| d.p_mrr).sum::<f64>() / deltas.len() as f64)
}

// ---------------------------------------------------------------------------
// Standard metrics
// ---------------------------------------------------------------------------

/// Average precision over the full ranking. Relevant documents missing from
/// the ranking contribute zero precision.
pub fn average_precision<S: AsRef<str>>(ranking: &[S], judged: &QueryJudgments) -> Option<f64> {
    let total_relevant = judged.num_relevant();
    if total_relevant == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, doc) in ranking.iter().enumerate() {
        if judged.gain(doc.as_ref()) > 0 {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Some(sum / total_relevant as f64)
}

fn discount(rank: usize) -> f64 {
    ((rank + 1) as f64).log2()
}

/// nDCG@k with linear gains and a `log2(rank + 1)` discount.
///
/// # Panics
///
/// Panics if `k == 0`.
pub fn ndcg_at_k<S: AsRef<str>>(ranking: &[S], judged: &QueryJudgments, k: usize) -> Option<f64> {
    assert!(k >= 1, "nDCG cutoff must be at least 1");
    let mut ideal: Vec<u32> = judged.iter().map(|(_, g)| g).filter(|&g| g > 0).collect();
    if ideal.is_empty() {
        return None;
    }
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| f64::from(g) / discount(i + 1))
        .sum();
    let dcg: f64 = ranking
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, d)| f64::from(judged.gain(d.as_ref())) / discount(i + 1))
        .sum();
    Some(dcg / idcg)
}

/// Reciprocal rank of the first relevant document, 0 if none is ranked.
pub fn reciprocal_rank<S: AsRef<str>>(ranking: &[S], judged: &QueryJudgments) -> Option<f64> {
    if judged.num_relevant() == 0 {
        return None;
    }
    Some(
        ranking
            .iter()
            .position(|d| judged.gain(d.as_ref()) > 0)
            .map_or(0.0, |i| 1.0 / (i + 1) as f64),
    )
}

/// Per-query robustness: the worst nDCG@k over the instruction variants.
pub fn robustness_at_k(variant_scores: &[f64]) -> Result<f64> {
    variant_scores
        .iter()
        .copied()
        .reduce(f64::min)
        .ok_or(Error::Empty("no variant scores"))
}

/// Evaluates a single standard metric (MAP, nDCG@k or MRR) on one query.
pub fn evaluate_query<S: AsRef<str>>(
    metric: MetricSpec,
    ranking: &[S],
    judged: &QueryJudgments,
) -> Result<Option<f64>> {
    match metric {
        MetricSpec::Map => Ok(average_precision(ranking, judged)),
        MetricSpec::Ndcg(k) => Ok(ndcg_at_k(ranking, judged, k)),
        MetricSpec::Mrr => Ok(reciprocal_rank(ranking, judged)),
        other => Err(Error::Config(format!(
            "{other} is not a single-run ranking metric"
        ))),
    }
}

/// Corpus Robustness@k from per-variant nDCG@k reports: the per-query
/// minimum across variants, averaged over queries. Every report must cover
/// the same queries.
pub fn robustness_report<'a, I>(variant_reports: I, k: usize) -> Result<MetricReport>
where
    I: IntoIterator<Item = &'a MetricReport>,
{
    let reports: Vec<&MetricReport> = variant_reports.into_iter().collect();
    let first = reports.first().ok_or(Error::Empty("no variant reports"))?;
    if let Some(bad) = reports
        .iter()
        .find(|r| !r.per_query.keys().eq(first.per_query.keys()))
    {
        return Err(Error::Config(format!(
            "variant report {} covers a different query set",
            bad.label()
        )));
    }
    let per_query = first
        .per_query
        .keys()
        .map(|q| {
            let scores: Vec<f64> = reports.iter().map(|r| r.per_query[q]).collect();
            Ok((q.clone(), robustness_at_k(&scores)?))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    macro_aggregate("robustness", Some(k), per_query)
}

// ---------------------------------------------------------------------------
// Aggregation and presentation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric_name: String,
    pub k: Option<usize>,
    pub per_query: BTreeMap<String, f64>,
    pub aggregate: f64,
}

impl MetricReport {
    pub fn label(&self) -> String {
        match self.k {
            Some(k) => format!("{}@{k}", self.metric_name),
            None => self.metric_name.clone(),
        }
    }

    /// Writes `metric<TAB>query_id<TAB>value` rows, then the `all` row.
    pub fn write_tsv<W: Write>(&self, mut out: W, decimals: usize) -> std::io::Result<()> {
        let label = self.label();
        for (q, v) in &self.per_query {
            writeln!(out, "{label}\t{q}\t{v:.decimals$}")?;
        }
        writeln!(out, "{label}\tall\t{:.decimals$}", self.aggregate)
    }
}

/// Unweighted mean over queries.
pub fn macro_aggregate(
    metric_name: &str,
    k: Option<usize>,
    per_query: BTreeMap<String, f64>,
) -> Result<MetricReport> {
    if per_query.is_empty() {
        return Err(Error::Empty("no queries to aggregate"));
    }
    let aggregate = per_query.values().sum::<f64>() / per_query.len() as f64;
    Ok(MetricReport {
        metric_name: metric_name.to_string(),
        k,
        per_query,
        aggregate,
    })
}

/// `value × 100` rounded half-to-even at one decimal.
pub fn percent(value: f64) -> f64 {
    let r = (value * 1000.0).round_ties_even() / 10.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

pub fn format_percent(value: f64) -> String {
    format!("{:.1}", percent(value))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn judged(grades: &[(&str, u32)]) -> QueryJudgments {
        QueryJudgments::from_grades(grades.iter().copied())
    }

    #[test]
    fn p_mrr_point_values() {
        assert_eq!(p_mrr_doc(1, 2).unwrap(), 0.5);
        assert_eq!(p_mrr_doc(5, 5).unwrap(), 0.0);
        assert_eq!(p_mrr_doc(2, 1).unwrap(), -0.5);
        assert!((p_mrr_doc(1, 100).unwrap() - 0.99).abs() < 1e-12);
        assert!(matches!(p_mrr_doc(0, 3), Err(Error::InvalidRank(0))));
        assert!(p_mrr_doc(3, 0).is_err());
    }

    #[test]
    fn p_mrr_query_mean() {
        let d = |a, b| PairedDocDelta::new("d", a, b).unwrap();
        assert_eq!(p_mrr_query(&[d(1, 2), d(2, 1)]).unwrap(), 0.0);
        assert!((p_mrr_query(&[d(1, 100)]).unwrap() - 0.99).abs() < 1e-12);
        let x = d(3, 7);
        assert!((p_mrr_query(&vec![x.clone(); 5]).unwrap() - x.p_mrr).abs() < 1e-15);
        assert!(p_mrr_query(&[]).is_err());
    }

    #[test]
    fn ap_examples() {
        let j = judged(&[("d1", 1), ("d3", 1), ("d2", 0)]);
        let ap = average_precision(&["d1", "d2", "d3"], &j).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert!((ap - 0.8333).abs() < 1e-4);
        assert_eq!(average_precision(&["d1", "d3", "d2"], &j).unwrap(), 1.0);
        assert_eq!(average_precision(&["d1", "d2"], &j).unwrap(), 0.5);
        assert!(average_precision(&["d1"], &judged(&[("d1", 0)])).is_none());
    }

    #[test]
    fn ndcg_examples() {
        let j = judged(&[("d1", 2), ("d3", 1)]);
        let v = ndcg_at_k(&["d2", "d1", "d3"], &j, 5).unwrap();
        let dcg = 2.0 / 3f64.log2() + 1.0 / 2.0;
        let idcg = 2.0 + 1.0 / 3f64.log2();
        assert!((v - dcg / idcg).abs() < 1e-12);
        assert!((v - 0.6697).abs() < 1e-4);
        assert_eq!(ndcg_at_k(&["d1", "d3", "d2"], &j, 5).unwrap(), 1.0);
        assert_eq!(ndcg_at_k(&["d2", "d1"], &j, 1).unwrap(), 0.0);
        assert!(ndcg_at_k(&["d2"], &judged(&[]), 5).is_none());
    }

    #[test]
    fn rr_examples() {
        let j = judged(&[("r", 1)]);
        assert_eq!(reciprocal_rank(&["a", "b", "c", "r"], &j).unwrap(), 0.25);
        assert_eq!(reciprocal_rank(&["r", "a"], &j).unwrap(), 1.0);
        assert_eq!(reciprocal_rank(&["a", "b"], &j).unwrap(), 0.0);
    }

    #[test]
    fn robustness_is_min() {
        assert_eq!(robustness_at_k(&[0.5, 0.7, 0.3]).unwrap(), 0.3);
        assert_eq!(robustness_at_k(&[0.42]).unwrap(), 0.42);
        assert_eq!(robustness_at_k(&[0.6; 4]).unwrap(), 0.6);
        assert!(robustness_at_k(&[]).is_err());
    }

    #[test]
    fn robustness_report_takes_per_query_min() {
        let mk = |a: f64, b: f64| {
            macro_aggregate(
                "ndcg",
                Some(10),
                BTreeMap::from([("q1".into(), a), ("q2".into(), b)]),
            )
            .unwrap()
        };
        let reports = [mk(0.5, 0.9), mk(0.7, 0.2), mk(0.3, 0.4)];
        let r = robustness_report(&reports, 10).unwrap();
        assert_eq!(r.per_query["q1"], 0.3);
        assert_eq!(r.per_query["q2"], 0.2);
        assert!((r.aggregate - 0.25).abs() < 1e-15);
        assert_eq!(r.label(), "robustness@10");
        let other =
            macro_aggregate("ndcg", Some(10), BTreeMap::from([("q9".into(), 1.0)])).unwrap();
        assert!(robustness_report([&reports[0], &other], 10).is_err());
        assert!(robustness_report(std::iter::empty::<&MetricReport>(), 10).is_err());
    }

    #[test]
    fn macro_mean_weights_queries_equally() {
        let r = macro_aggregate(
            "map",
            None,
            BTreeMap::from([("q1".into(), 1.0), ("q2".into(), 0.0)]),
        )
        .unwrap();
        assert_eq!(r.aggregate, 0.5);
        let r = macro_aggregate("map", None, BTreeMap::from([("q1".into(), 0.3)])).unwrap();
        assert_eq!(r.aggregate, 0.3);
        let r = macro_aggregate(
            "map",
            None,
            BTreeMap::from([("q1".into(), 1.0), ("q2".into(), 0.0), ("q3".into(), 0.0)]),
        )
        .unwrap();
        assert!((r.aggregate - 1.0 / 3.0).abs() < 1e-15);
        assert!(macro_aggregate("map", None, BTreeMap::new()).is_err());
    }

    #[test]
    fn metric_spec_parsing() {
        assert_eq!("map".parse::<MetricSpec>().unwrap(), MetricSpec::Map);
        assert_eq!("nDCG@5".parse::<MetricSpec>().unwrap(), MetricSpec::Ndcg(5));
        assert_eq!(
            "robustness@10".parse::<MetricSpec>().unwrap(),
            MetricSpec::Robustness(10)
        );
        assert_eq!("p-mrr".parse::<MetricSpec>().unwrap(), MetricSpec::PMrr);
        assert!("ndcg@0".parse::<MetricSpec>().is_err());
        assert!("ndcg".parse::<MetricSpec>().is_err());
        assert!("bpref".parse::<MetricSpec>().is_err());
        assert_eq!(MetricSpec::Ndcg(5).to_string(), "ndcg@5");
    }

    #[test]
    fn percent_rounding() {
        assert_eq!(format_percent(2.0 / 3.0), "66.7");
        assert_eq!(format_percent(-0.031), "-3.1");
        assert_eq!(format_percent(-0.0001), "0.0");
        assert_eq!(format_percent(0.121), "12.1");
        assert_eq!(percent(0.0125), 1.2);
        assert_eq!(percent(0.0375), 3.8);
    }

    #[test]
    fn report_tsv() {
        let r = macro_aggregate("ndcg", Some(5), BTreeMap::from([("q1".into(), 0.5)])).unwrap();
        let mut out = Vec::new();
        r.write_tsv(&mut out, 4).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "ndcg@5\tq1\t0.5000\nndcg@5\tall\t0.5000\n"
        );
    }
}
