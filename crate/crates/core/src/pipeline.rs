//! Glue that pairs dataset queries with their passage pools and ranks them.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use crate::bm25::{pool_stats, score_pool, Bm25Params, QueryTemplate};
use crate::bridge::{rerank_with_scorer, ScoreEndpoint};
use crate::error::{Error, Result};
use crate::model::{Dataset, InstructionChoice, Run};
use crate::pooling::Pools;
use crate::textproc::Passage;

#[derive(Debug, Clone, PartialEq)]
pub struct QueryPool {
    pub query_id: String,
    pub query_text: String,
    pub instruction_text: String,
    pub passages: Vec<Passage>,
}

/// Builds per-query passage pools in query-id order.
///
/// With `pools`, each query gets the passages of its pooled documents;
/// without, every query gets every passage. Queries lacking the chosen
/// instruction or a pool are skipped with a warning. A pooled document with
/// no passages is an error.
pub fn assemble_pools(
    dataset: &Dataset,
    pools: Option<&Pools>,
    passages: &[Passage],
    choice: &InstructionChoice,
) -> Result<Vec<QueryPool>> {
    let mut by_doc: HashMap<&str, Vec<&Passage>> = HashMap::new();
    for p in passages {
        by_doc.entry(&p.doc_id).or_default().push(p);
    }
    let mut records: Vec<_> = dataset.records().iter().collect();
    records.sort_by(|a, b| a.query_id.cmp(&b.query_id));

    let mut out = Vec::new();
    for rec in records {
        let Some(instruction) = rec.instruction(choice) else {
            log::warn!(
                "query {} has no {choice} instruction; skipped",
                rec.query_id
            );
            continue;
        };
        let selected: Vec<Passage> = match pools {
            Some(pools) => {
                let Some(pool) = pools.get(&rec.query_id) else {
                    log::warn!("query {} has no pool; skipped", rec.query_id);
                    continue;
                };
                let mut sel = Vec::new();
                for doc in pool.doc_ids() {
                    let ps = by_doc.get(doc).ok_or_else(|| Error::Missing {
                        what: "passages for pooled document",
                        name: doc.to_string(),
                    })?;
                    sel.extend(ps.iter().map(|p| (*p).clone()));
                }
                sel
            }
            None => passages.to_vec(),
        };
        out.push(QueryPool {
            query_id: rec.query_id.clone(),
            query_text: rec.query_text.clone(),
            instruction_text: instruction.to_string(),
            passages: selected,
        });
    }
    if let Some(pools) = pools {
        for qid in pools.keys() {
            if dataset.get(qid).is_none() {
                log::warn!("pool for query {qid} has no dataset record; skipped");
            }
        }
    }
    Ok(out)
}

/// BM25 + MaxP over every query pool, in parallel. Statistics are per pool.
pub fn rank_bm25(
    queries: &[QueryPool],
    params: Bm25Params,
    template: &QueryTemplate,
    tag: &str,
) -> Result<Run> {
    let ranked: Vec<(String, BTreeMap<String, f64>)> = queries
        .par_iter()
        .map(|q| {
            let stats = pool_stats(&q.passages)?;
            let text = template.render(&q.query_text, &q.instruction_text);
            Ok((
                q.query_id.clone(),
                score_pool(&text, &q.passages, &stats, params)?,
            ))
        })
        .collect::<Result<_>>()?;
    let mut run = Run::new();
    for (qid, scores) in ranked {
        run.insert_scored(&qid, scores, tag);
    }
    run.sort_queries();
    Ok(run)
}

/// Scores every query pool through one endpoint session, in query-id order.
pub fn rerank<E: ScoreEndpoint + ?Sized>(
    queries: &[QueryPool],
    endpoint: &mut E,
    tag: &str,
) -> Result<Run> {
    let mut run = Run::new();
    for q in queries {
        let one = rerank_with_scorer(
            &q.query_id,
            &q.query_text,
            &q.instruction_text,
            &q.passages,
            endpoint,
            tag,
        )?;
        let scored = one
            .get(&q.query_id)
            .expect("reranked query present")
            .iter()
            .map(|e| (e.doc_id.clone(), e.score));
        run.insert_scored(&q.query_id, scored, tag);
    }
    run.sort_queries();
    Ok(run)
}
