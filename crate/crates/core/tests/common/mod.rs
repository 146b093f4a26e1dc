//! Independent reference implementations and fixture builders shared by the
//! integration tests. Written from the metric definitions, not from the
//! library code.

#![allow(dead_code)]

use std::collections::BTreeMap;

use pairank::{Qrels, Run};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Precision at every cutoff, recomputed from scratch each time.
pub fn oracle_ap(ranking: &[String], grades: &BTreeMap<String, u32>) -> Option<f64> {
    let relevant = grades.values().filter(|&&g| g > 0).count();
    if relevant == 0 {
        return None;
    }
    let is_rel = |d: &String| grades.get(d).copied().unwrap_or(0) > 0;
    let mut total = 0.0;
    for k in 1..=ranking.len() {
        if is_rel(&ranking[k - 1]) {
            let hits = ranking[..k].iter().filter(|d| is_rel(d)).count();
            total += hits as f64 / k as f64;
        }
    }
    Some(total / relevant as f64)
}

fn dcg(gains: &[u32], k: usize) -> f64 {
    let mut sum = 0.0;
    for (pos, g) in gains.iter().take(k).enumerate() {
        let rank = pos as f64 + 1.0;
        sum += *g as f64 / (rank + 1.0).log2();
    }
    sum
}

/// Ideal ordering built by repeatedly picking the largest remaining gain.
pub fn oracle_ndcg(ranking: &[String], grades: &BTreeMap<String, u32>, k: usize) -> Option<f64> {
    let mut pool: Vec<u32> = grades.values().copied().filter(|&g| g > 0).collect();
    if pool.is_empty() {
        return None;
    }
    let mut ideal = Vec::new();
    while !pool.is_empty() {
        let (at, _) = pool.iter().enumerate().fold(
            (0, 0),
            |best, (i, &g)| if g > best.1 { (i, g) } else { best },
        );
        ideal.push(pool.swap_remove(at));
    }
    let actual: Vec<u32> = ranking
        .iter()
        .map(|d| grades.get(d).copied().unwrap_or(0))
        .collect();
    Some(dcg(&actual, k) / dcg(&ideal, k))
}

pub fn oracle_rr(ranking: &[String], grades: &BTreeMap<String, u32>) -> Option<f64> {
    if !grades.values().any(|&g| g > 0) {
        return None;
    }
    for (i, d) in ranking.iter().enumerate() {
        if grades.get(d).copied().unwrap_or(0) > 0 {
            return Some(1.0 / (i + 1) as f64);
        }
    }
    Some(0.0)
}

/// p-MRR of one document straight from the reciprocal-rank ratio.
pub fn oracle_p_mrr(rank_og: u32, rank_new: u32) -> f64 {
    let (mrr_og, mrr_new) = (1.0 / rank_og as f64, 1.0 / rank_new as f64);
    if rank_og > rank_new {
        mrr_og / mrr_new - 1.0
    } else {
        1.0 - mrr_new / mrr_og
    }
}

pub struct FollowerFixture {
    pub run_og: Run,
    /// Changed documents moved to the bottom, everything else in order.
    pub follower: Run,
    /// Changed documents moved to the top, everything else in order.
    pub anti_follower: Run,
    pub qrels_og: Qrels,
    pub qrels_new: Qrels,
}

fn rerun(run: &mut Run, qid: &str, order: &[String]) {
    let n = order.len();
    run.insert_scored(
        qid,
        order
            .iter()
            .enumerate()
            .map(|(i, d)| (d.clone(), (n - i) as f64)),
        "t",
    );
}

pub fn follower_fixture(seed: u64, queries: usize, pool: usize) -> FollowerFixture {
    assert!(pool >= 4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fx = FollowerFixture {
        run_og: Run::new(),
        follower: Run::new(),
        anti_follower: Run::new(),
        qrels_og: Qrels::new(),
        qrels_new: Qrels::new(),
    };
    for q in 0..queries {
        let qid = format!("q{q:02}");
        let mut docs: Vec<String> = (0..pool).map(|d| format!("{qid}-d{d:02}")).collect();
        let n_rel = rng.gen_range(2..=10.min(pool - 2));
        let n_changed = rng.gen_range(1..n_rel);
        for (i, d) in docs.iter().enumerate() {
            let grade = if i < n_rel { rng.gen_range(1..=2) } else { 0 };
            let new = if i < n_changed { 0 } else { grade };
            fx.qrels_og.insert(&qid, d, grade);
            fx.qrels_new.insert(&qid, d, new);
        }
        let changed: Vec<String> = docs[..n_changed].to_vec();
        docs.shuffle(&mut rng);
        // Unchanged documents at both ends, so both reorderings move every
        // changed document.
        if docs.first().is_some_and(|d| changed.contains(d)) {
            let j = docs.iter().position(|d| !changed.contains(d)).unwrap();
            docs.swap(0, j);
        }
        if docs.last().is_some_and(|d| changed.contains(d)) {
            let j = docs.iter().rposition(|d| !changed.contains(d)).unwrap();
            let last = docs.len() - 1;
            docs.swap(last, j);
        }
        rerun(&mut fx.run_og, &qid, &docs);
        let (moved, kept): (Vec<String>, Vec<String>) =
            docs.iter().cloned().partition(|d| changed.contains(d));
        rerun(
            &mut fx.follower,
            &qid,
            &[kept.clone(), moved.clone()].concat(),
        );
        rerun(&mut fx.anti_follower, &qid, &[moved, kept].concat());
    }
    fx
}
