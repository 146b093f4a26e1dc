//! Paired evaluation of an original-instruction run against a
//! modified-instruction run over the same candidate pools.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{
    evaluate_query, format_percent, macro_aggregate, p_mrr_query, MetricReport, MetricSpec,
    PairedDocDelta,
};
use crate::model::{Qrels, Run, RunEntry};

/// Documents of one query that were relevant under the original instruction
/// and are non-relevant under the modified one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChangedDocSet {
    pub query_id: String,
    pub doc_ids: BTreeSet<String>,
}

/// Changed-relevance documents per query. Only queries judged in `qrels_new`
/// are considered; within such a query an unjudged document counts as grade
/// 0. Queries with nothing changed are omitted.
pub fn changed_docs(qrels_og: &Qrels, qrels_new: &Qrels) -> BTreeMap<String, ChangedDocSet> {
    let mut out = BTreeMap::new();
    for (qid, og) in qrels_og.queries() {
        let Some(new) = qrels_new.query(qid) else {
            continue;
        };
        let doc_ids: BTreeSet<String> = og
            .relevant()
            .filter(|d| new.gain(d) == 0)
            .map(str::to_string)
            .collect();
        if !doc_ids.is_empty() {
            out.insert(
                qid.to_string(),
                ChangedDocSet {
                    query_id: qid.to_string(),
                    doc_ids,
                },
            );
        }
    }
    out
}

/// Standard metric of `run` against `qrels`, macro-averaged over the judged
/// queries that have at least one relevant document. Such queries missing
/// from the run score 0.
pub fn evaluate_standard(run: &Run, qrels: &Qrels, metric: MetricSpec) -> Result<MetricReport> {
    if !matches!(
        metric,
        MetricSpec::Map | MetricSpec::Ndcg(_) | MetricSpec::Mrr
    ) {
        return Err(Error::Config(format!(
            "{metric} is not a standard ranking metric"
        )));
    }
    if !qrels.query_ids().any(|q| run.get(q).is_some()) {
        return Err(Error::NoSharedQueries);
    }
    let mut per_query = BTreeMap::new();
    for (qid, judged) in qrels.queries() {
        let ranking = run.ranking(qid).unwrap_or_default();
        if run.get(qid).is_none() && judged.num_relevant() > 0 {
            log::warn!("query {qid} is judged but absent from the run; scoring 0");
        }
        match evaluate_query(metric, &ranking, judged)? {
            Some(v) => {
                per_query.insert(qid.to_string(), v);
            }
            None => log::warn!("query {qid} has no relevant documents; excluded from {metric}"),
        }
    }
    macro_aggregate(metric.name(), metric.cutoff(), per_query)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedReport {
    /// Standard metric of the original-instruction run on the original qrels.
    pub standard_metric: MetricReport,
    pub p_mrr: MetricReport,
    pub per_doc: BTreeMap<String, Vec<PairedDocDelta>>,
}

impl PairedReport {
    /// `(score, p-MRR)` as percentages with one decimal.
    pub fn row(&self) -> (String, String) {
        (
            format_percent(self.standard_metric.aggregate),
            format_percent(self.p_mrr.aggregate),
        )
    }
}

fn rank_index(entries: &[RunEntry]) -> HashMap<&str, u32> {
    entries
        .iter()
        .map(|e| (e.doc_id.as_str(), e.rank))
        .collect()
}

fn sorted_diff<'a>(a: &HashMap<&'a str, u32>, b: &HashMap<&'a str, u32>) -> Vec<String> {
    let mut v: Vec<String> = a
        .keys()
        .filter(|d| !b.contains_key(*d))
        .map(|d| d.to_string())
        .collect();
    v.sort();
    v
}

fn check_candidates(
    query_id: &str,
    og: &HashMap<&str, u32>,
    new: &HashMap<&str, u32>,
) -> Result<()> {
    let only_og = sorted_diff(og, new);
    let only_new = sorted_diff(new, og);
    if only_og.is_empty() && only_new.is_empty() {
        Ok(())
    } else {
        Err(Error::CandidateMismatch {
            query_id: query_id.to_string(),
            only_og,
            only_new,
        })
    }
}

fn paired_query(
    query_id: &str,
    changed: &ChangedDocSet,
    run_og: &Run,
    run_new: &Run,
) -> Result<Vec<PairedDocDelta>> {
    let empty: &[RunEntry] = &[];
    let og = rank_index(run_og.get(query_id).unwrap_or(empty));
    let new = rank_index(run_new.get(query_id).unwrap_or(empty));
    changed
        .doc_ids
        .iter()
        .map(|doc| {
            let missing = |run| Error::MissingChangedDoc {
                query_id: query_id.to_string(),
                doc_id: doc.clone(),
                run,
            };
            let r_og = *og.get(doc.as_str()).ok_or_else(|| missing("original"))?;
            let r_new = *new.get(doc.as_str()).ok_or_else(|| missing("modified"))?;
            PairedDocDelta::new(doc.clone(), r_og, r_new)
        })
        .collect()
}

/// Runs the full paired evaluation: the standard metric of `run_og` on
/// `qrels_og`, and p-MRR averaged per query and then over queries with
/// changed documents.
///
/// For every query present in both runs the two candidate sets must match,
/// and each changed document must appear in both runs.
pub fn paired_evaluate(
    run_og: &Run,
    run_new: &Run,
    qrels_og: &Qrels,
    qrels_new: &Qrels,
    standard: MetricSpec,
) -> Result<PairedReport> {
    let standard_metric = evaluate_standard(run_og, qrels_og, standard)?;

    for (qid, og_entries) in run_og.groups() {
        if let Some(new_entries) = run_new.get(qid) {
            check_candidates(qid, &rank_index(og_entries), &rank_index(new_entries))?;
        }
    }

    let changed = changed_docs(qrels_og, qrels_new);
    let per_doc: BTreeMap<String, Vec<PairedDocDelta>> = changed
        .par_iter()
        .map(|(qid, set)| Ok((qid.clone(), paired_query(qid, set, run_og, run_new)?)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .collect();

    let per_query = per_doc
        .iter()
        .map(|(q, deltas)| Ok((q.clone(), p_mrr_query(deltas)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    if per_query.is_empty() {
        return Err(Error::Empty("no query has changed-relevance documents"));
    }
    let p_mrr = macro_aggregate("p-mrr", None, per_query)?;
    Ok(PairedReport {
        standard_metric,
        p_mrr,
        per_doc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_qrels, parse_run};

    fn qrels(text: &str) -> Qrels {
        parse_qrels(text.as_bytes()).unwrap()
    }

    fn ranked(q: &str, docs: &[&str]) -> Run {
        let mut run = Run::new();
        let n = docs.len() as f64;
        run.insert_scored(
            q,
            docs.iter().enumerate().map(|(i, d)| (*d, n - i as f64)),
            "t",
        );
        run
    }

    #[test]
    fn changed_doc_examples() {
        let og = qrels("q1 0 d1 1\nq1 0 d2 1\n");
        let c = changed_docs(&og, &qrels("q1 0 d1 1\nq1 0 d2 0\n"));
        assert_eq!(c["q1"].doc_ids, BTreeSet::from(["d2".to_string()]));
        assert!(changed_docs(&og, &og).is_empty());
        assert!(changed_docs(&qrels("q1 0 d1 2\n"), &qrels("q1 0 d1 1\n")).is_empty());
    }

    #[test]
    fn changed_docs_skip_unannotated_queries() {
        let og = qrels("q1 0 d1 1\nq2 0 d1 1\n");
        let new = qrels("q1 0 d1 0\n");
        assert_eq!(
            changed_docs(&og, &new).keys().collect::<Vec<_>>(),
            vec!["q1"]
        );
    }

    fn three_doc_case() -> (Run, Run, Qrels, Qrels) {
        (
            ranked("q1", &["d2", "d1", "d3"]),
            ranked("q1", &["d1", "d3", "d2"]),
            qrels("q1 0 d1 1\nq1 0 d2 1\nq1 0 d3 0\n"),
            qrels("q1 0 d1 1\nq1 0 d2 0\nq1 0 d3 0\n"),
        )
    }

    #[test]
    fn three_doc_example() {
        let (og, new, qo, qn) = three_doc_case();
        let r = paired_evaluate(&og, &new, &qo, &qn, MetricSpec::Map).unwrap();
        let d = &r.per_doc["q1"][0];
        assert_eq!((d.doc_id.as_str(), d.rank_og, d.rank_new), ("d2", 1, 3));
        assert!((r.p_mrr.aggregate - (1.0 - 1.0 / 3.0)).abs() < 1e-12);
        assert_eq!(r.row().1, "66.7");
        assert_eq!(r.standard_metric.aggregate, 1.0);
    }

    #[test]
    fn identical_runs_give_zero() {
        let (og, _, qo, qn) = three_doc_case();
        let r = paired_evaluate(&og, &og, &qo, &qn, MetricSpec::Map).unwrap();
        assert!(r.p_mrr.per_query.values().all(|&v| v == 0.0));
        assert_eq!(
            r.standard_metric,
            evaluate_standard(&og, &qo, MetricSpec::Map).unwrap()
        );
    }

    #[test]
    fn swapping_runs_negates() {
        let (og, new, qo, qn) = three_doc_case();
        let a = paired_evaluate(&og, &new, &qo, &qn, MetricSpec::Map).unwrap();
        let b = paired_evaluate(&new, &og, &qo, &qn, MetricSpec::Map).unwrap();
        assert_eq!(a.p_mrr.aggregate, -b.p_mrr.aggregate);
    }

    #[test]
    fn candidate_mismatch_names_query_and_difference() {
        let (og, _, qo, qn) = three_doc_case();
        let new = ranked("q1", &["d1", "d2", "d4"]);
        match paired_evaluate(&og, &new, &qo, &qn, MetricSpec::Map).unwrap_err() {
            Error::CandidateMismatch {
                query_id,
                only_og,
                only_new,
            } => {
                assert_eq!(query_id, "q1");
                assert_eq!(only_og, vec!["d3"]);
                assert_eq!(only_new, vec!["d4"]);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn changed_doc_missing_from_run_is_an_error() {
        let (og, _, qo, qn) = three_doc_case();
        let new = ranked("q2", &["d1"]);
        assert!(matches!(
            paired_evaluate(&og, &new, &qo, &qn, MetricSpec::Map),
            Err(Error::MissingChangedDoc {
                run: "modified",
                ..
            })
        ));
    }

    #[test]
    fn standard_metric_examples() {
        let q = qrels("q1 0 a 1\nq1 0 b 0\nq1 0 c 0\n");
        let r = evaluate_standard(&ranked("q1", &["a", "b", "c"]), &q, MetricSpec::Map).unwrap();
        assert_eq!(r.aggregate, 1.0);
        let r = evaluate_standard(&ranked("q1", &["c", "b", "a"]), &q, MetricSpec::Map).unwrap();
        assert!((r.aggregate - 1.0 / 3.0).abs() < 1e-12);

        let q2 = qrels("q1 0 a 1\nq2 0 x 1\n");
        let r = evaluate_standard(&ranked("q1", &["a"]), &q2, MetricSpec::Map).unwrap();
        assert_eq!(r.per_query["q2"], 0.0);
        assert_eq!(r.aggregate, 0.5);

        assert!(matches!(
            evaluate_standard(&ranked("zz", &["a"]), &q, MetricSpec::Map),
            Err(Error::NoSharedQueries)
        ));
        assert!(evaluate_standard(&ranked("q1", &["a"]), &q, MetricSpec::PMrr).is_err());
    }

    #[test]
    fn zero_relevant_queries_are_excluded() {
        let q = qrels("q1 0 a 1\nq2 0 x 0\n");
        let run = parse_run("q1 Q0 a 1 1 t\nq2 Q0 x 1 1 t\n".as_bytes())
            .unwrap()
            .run;
        let r = evaluate_standard(&run, &q, MetricSpec::Ndcg(5)).unwrap();
        assert_eq!(r.per_query.len(), 1);
        assert_eq!(r.label(), "ndcg@5");
    }
}
