//! Dataset statistics, instruction-variant ablation deltas, and their TSV
//! renderings. Presented numbers use one decimal with half-even rounding.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{percent, MetricReport};
use crate::model::{Dataset, Qrels};
use crate::textproc::word_count;

/// Rounds half-to-even at one decimal.
pub fn round1(x: f64) -> f64 {
    let r = (x * 10.0).round_ties_even() / 10.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetStats {
    pub num_queries: usize,
    pub mean_instruction_words: f64,
    pub mean_relevant_per_query: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub corpus: String,
    pub num_queries: usize,
    pub mean_query_words: f64,
    pub mean_instruction_words: f64,
    pub mean_relevant_per_query: f64,
    /// Queries with a modified instruction and modified judgments.
    pub annotated: Option<SubsetStats>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn relevant_count(qrels: &Qrels, query_id: &str) -> f64 {
    qrels.query(query_id).map_or(0, |j| j.num_relevant()) as f64
}

pub fn dataset_stats(
    corpus: &str,
    dataset: &Dataset,
    qrels_og: &Qrels,
    qrels_new: Option<&Qrels>,
) -> StatsRow {
    let records = dataset.records();
    let annotated = qrels_new.map(|new| {
        let subset: Vec<_> = records
            .iter()
            .filter(|r| r.is_paired() && new.query(&r.query_id).is_some())
            .collect();
        SubsetStats {
            num_queries: subset.len(),
            mean_instruction_words: mean(
                subset
                    .iter()
                    .map(|r| word_count(r.instruction_modified.as_deref().unwrap_or("")) as f64),
            ),
            mean_relevant_per_query: mean(subset.iter().map(|r| relevant_count(new, &r.query_id))),
        }
    });
    StatsRow {
        corpus: corpus.to_string(),
        num_queries: records.len(),
        mean_query_words: mean(records.iter().map(|r| word_count(&r.query_text) as f64)),
        mean_instruction_words: mean(
            records
                .iter()
                .map(|r| word_count(r.instruction_original.as_deref().unwrap_or("")) as f64),
        ),
        mean_relevant_per_query: mean(
            records
                .iter()
                .map(|r| relevant_count(qrels_og, &r.query_id)),
        ),
        annotated,
    }
}

pub const STATS_HEADER: &str = "corpus\t#Q\t|Q|\t|I|\tRel.D/Q\t#Q(new)\t|I|(new)\tRel.D/Q(new)";

pub fn write_stats_tsv<W: Write>(rows: &[StatsRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{STATS_HEADER}")?;
    for r in rows {
        write!(
            out,
            "{}\t{}\t{:.1}\t{:.1}\t{:.1}",
            r.corpus,
            r.num_queries,
            round1(r.mean_query_words),
            round1(r.mean_instruction_words),
            round1(r.mean_relevant_per_query)
        )?;
        match &r.annotated {
            Some(a) => writeln!(
                out,
                "\t{}\t{:.1}\t{:.1}",
                a.num_queries,
                round1(a.mean_instruction_words),
                round1(a.mean_relevant_per_query)
            )?,
            None => writeln!(out, "\t-\t-\t-")?,
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Ablation deltas
// ---------------------------------------------------------------------------

pub const AVERAGE_CORPUS: &str = "average";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub corpus: String,
    pub variant: String,
    pub score: f64,
    /// `score - baseline score`.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaTable {
    pub baseline: String,
    pub rows: Vec<DeltaRow>,
}

/// Aggregate score and delta against `baseline` for each variant of each
/// corpus, followed by `average` rows (mean over corpora) for variants present
/// in every corpus. All variants of a corpus must cover the same queries.
pub fn variant_delta_report(
    results: &BTreeMap<String, BTreeMap<String, MetricReport>>,
    baseline: &str,
) -> Result<DeltaTable> {
    let mut rows = Vec::new();
    let mut by_variant: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for (corpus, variants) in results {
        let base = variants.get(baseline).ok_or_else(|| Error::Missing {
            what: "baseline variant",
            name: format!("{baseline} in {corpus}"),
        })?;
        let ordered = std::iter::once((baseline, base)).chain(
            variants
                .iter()
                .filter(|(v, _)| v.as_str() != baseline)
                .map(|(v, r)| (v.as_str(), r)),
        );
        for (variant, report) in ordered {
            if !report.per_query.keys().eq(base.per_query.keys()) {
                return Err(Error::QuerySetMismatch {
                    corpus: corpus.clone(),
                    variant: variant.to_string(),
                });
            }
            let delta = report.aggregate - base.aggregate;
            by_variant
                .entry(variant)
                .or_default()
                .push((report.aggregate, delta));
            rows.push(DeltaRow {
                corpus: corpus.clone(),
                variant: variant.to_string(),
                score: report.aggregate,
                delta,
            });
        }
    }
    if results.len() > 1 {
        let n = results.len();
        let mut names: Vec<&str> = by_variant.keys().copied().collect();
        names.sort_by_key(|v| (*v != baseline, *v));
        for v in names {
            let vals = &by_variant[v];
            if vals.len() == n {
                rows.push(DeltaRow {
                    corpus: AVERAGE_CORPUS.to_string(),
                    variant: v.to_string(),
                    score: vals.iter().map(|x| x.0).sum::<f64>() / n as f64,
                    delta: vals.iter().map(|x| x.1).sum::<f64>() / n as f64,
                });
            }
        }
    }
    Ok(DeltaTable {
        baseline: baseline.to_string(),
        rows,
    })
}

pub const DELTA_HEADER: &str = "corpus\tvariant\tscore\tdelta";

/// Percent values (`× 100`) at one decimal.
pub fn write_delta_tsv<W: Write>(table: &DeltaTable, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{DELTA_HEADER}")?;
    for r in &table.rows {
        writeln!(
            out,
            "{}\t{}\t{:.1}\t{:.1}",
            r.corpus,
            r.variant,
            percent(r.score),
            percent(r.delta)
        )?;
    }
    Ok(())
}

/// Reads a delta TSV back as `(corpus, variant, score%, delta%)`.
pub fn parse_delta_tsv<R: BufRead>(reader: R) -> Result<Vec<(String, String, f64, f64)>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if idx == 0 || line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            line: idx + 1,
            message,
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(err(format!("expected 4 columns, found {}", f.len())));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| err(format!("bad number {s:?}")))
        };
        out.push((f[0].to_string(), f[1].to_string(), num(f[2])?, num(f[3])?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::macro_aggregate;
    use crate::model::{load_dataset, parse_qrels};

    fn report(values: &[(&str, f64)]) -> MetricReport {
        macro_aggregate(
            "map",
            None,
            values.iter().map(|(q, v)| (q.to_string(), *v)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn stats_on_small_dataset() {
        let ds = load_dataset(
            concat!(
                "{\"query_id\":\"1\",\"text\":\"organized crime\",\"instruction\":\"a b c d\",\"instruction_modified\":\"a b c d e f\"}\n",
                "{\"query_id\":\"2\",\"text\":\"three word query\",\"instruction\":\"a b\"}\n"
            )
            .as_bytes(),
        )
        .unwrap();
        let og = parse_qrels("1 0 a 1\n1 0 b 1\n1 0 c 0\n2 0 x 2\n".as_bytes()).unwrap();
        let new = parse_qrels("1 0 a 1\n1 0 b 0\n".as_bytes()).unwrap();
        let row = dataset_stats("toy", &ds, &og, Some(&new));
        assert_eq!(row.num_queries, 2);
        assert_eq!(row.mean_query_words, 2.5);
        assert_eq!(row.mean_instruction_words, 3.0);
        assert_eq!(row.mean_relevant_per_query, 1.5);
        let a = row.annotated.unwrap();
        assert_eq!(
            (
                a.num_queries,
                a.mean_instruction_words,
                a.mean_relevant_per_query
            ),
            (1, 6.0, 1.0)
        );
    }

    #[test]
    fn stats_on_empty_dataset() {
        let row = dataset_stats("e", &Dataset::default(), &Qrels::new(), None);
        assert_eq!(
            (
                row.num_queries,
                row.mean_query_words,
                row.mean_instruction_words,
                row.mean_relevant_per_query
            ),
            (0, 0.0, 0.0, 0.0)
        );
        let mut out = Vec::new();
        write_stats_tsv(&[row], &mut out).unwrap();
        assert!(String::from_utf8(out)
            .unwrap()
            .ends_with("e\t0\t0.0\t0.0\t0.0\t-\t-\t-\n"));
    }

    #[test]
    fn deltas_against_baseline() {
        let q = ["q1", "q2"];
        let mk = |v: f64| report(&[(q[0], v), (q[1], v)]);
        let results = BTreeMap::from([(
            "robust04".to_string(),
            BTreeMap::from([
                ("none".to_string(), mk(0.132)),
                ("full".to_string(), mk(0.111)),
                ("same".to_string(), mk(0.132)),
            ]),
        )]);
        let t = variant_delta_report(&results, "none").unwrap();
        let mut out = Vec::new();
        write_delta_tsv(&t, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "corpus\tvariant\tscore\tdelta\nrobust04\tnone\t13.2\t0.0\nrobust04\tfull\t11.1\t-2.1\nrobust04\tsame\t13.2\t0.0\n"
        );
    }

    #[test]
    fn keyword_ablation_row() {
        let results = BTreeMap::from([(
            "scifact".to_string(),
            BTreeMap::from([
                ("short".to_string(), report(&[("q", 0.679)])),
                ("keywords".to_string(), report(&[("q", 0.662)])),
            ]),
        )]);
        let t = variant_delta_report(&results, "short").unwrap();
        let row = &t.rows[1];
        assert_eq!(row.variant, "keywords");
        assert_eq!((percent(row.score), percent(row.delta)), (66.2, -1.7));
        assert_eq!(
            (percent(t.rows[0].score), percent(t.rows[0].delta)),
            (67.9, 0.0)
        );
    }

    #[test]
    fn averages_across_corpora() {
        let results = BTreeMap::from([
            (
                "a".to_string(),
                BTreeMap::from([
                    ("none".to_string(), report(&[("q", 0.2)])),
                    ("full".to_string(), report(&[("q", 0.1)])),
                ]),
            ),
            (
                "b".to_string(),
                BTreeMap::from([
                    ("none".to_string(), report(&[("q", 0.4)])),
                    ("full".to_string(), report(&[("q", 0.5)])),
                ]),
            ),
        ]);
        let t = variant_delta_report(&results, "none").unwrap();
        let avg: Vec<_> = t
            .rows
            .iter()
            .filter(|r| r.corpus == AVERAGE_CORPUS)
            .collect();
        assert_eq!(avg.len(), 2);
        assert_eq!(avg[0].variant, "none");
        assert!((avg[1].score - 0.3).abs() < 1e-12);
        assert!(avg[1].delta.abs() < 1e-12);
    }

    #[test]
    fn mismatched_query_sets_rejected() {
        let results = BTreeMap::from([(
            "c".to_string(),
            BTreeMap::from([
                ("none".to_string(), report(&[("q1", 0.2)])),
                ("full".to_string(), report(&[("q2", 0.2)])),
            ]),
        )]);
        assert!(matches!(
            variant_delta_report(&results, "none"),
            Err(Error::QuerySetMismatch { .. })
        ));
        assert!(variant_delta_report(&results, "short").is_err());
    }

    #[test]
    fn round1_half_even() {
        assert_eq!(round1(0.25), 0.2);
        assert_eq!(round1(0.75), 0.8);
        assert_eq!(round1(11.94), 11.9);
        assert_eq!(round1(-0.04), 0.0);
    }
}
