//! Seeded generator for small synthetic corpora with paired instructions.
//!
//! Every query has a few topic words and one constraint word. Relevant
//! documents mention the topic; those that also mention the constraint stay
//! relevant under the modified instruction, the rest lose relevance.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{Dataset, Qrels, QueryRecord, Run};
use crate::textproc::Document;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub queries: usize,
    pub pool_size: usize,
    pub relevant_per_query: usize,
    pub changed_per_query: usize,
    pub min_doc_words: usize,
    pub max_doc_words: usize,
    /// Number of contributing system runs.
    pub systems: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 13,
            queries: 8,
            pool_size: 30,
            relevant_per_query: 8,
            changed_per_query: 3,
            min_doc_words: 80,
            max_doc_words: 700,
            systems: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub dataset: Dataset,
    pub documents: Vec<Document>,
    pub qrels_og: Qrels,
    pub qrels_new: Qrels,
    pub runs: Vec<Run>,
}

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "tu", "re", "sa", "no", "vi", "pe", "da", "zu", "fo", "ri", "bel", "gon",
    "tar",
];

fn vocabulary(rng: &mut ChaCha8Rng, size: usize) -> Vec<String> {
    let mut seen = std::collections::BTreeSet::new();
    let mut words = Vec::with_capacity(size);
    while words.len() < size {
        let n = rng.gen_range(2..=4);
        let w: String = (0..n)
            .map(|_| *SYLLABLES.choose(rng).expect("non-empty"))
            .collect();
        if seen.insert(w.clone()) {
            words.push(w);
        }
    }
    words
}

fn filler(rng: &mut ChaCha8Rng, vocab: &[String], n: usize) -> Vec<String> {
    (0..n)
        .map(|_| vocab.choose(rng).expect("non-empty").clone())
        .collect()
}

fn sprinkle(rng: &mut ChaCha8Rng, words: &mut Vec<String>, term: &str, times: usize) {
    for _ in 0..times {
        let at = rng.gen_range(0..=words.len());
        words.insert(at, term.to_string());
    }
}

pub fn generate(config: &SyntheticConfig) -> SyntheticCorpus {
    assert!(config.changed_per_query <= config.relevant_per_query);
    assert!(config.relevant_per_query <= config.pool_size);
    assert!(config.min_doc_words >= 1 && config.min_doc_words <= config.max_doc_words);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let vocab = vocabulary(&mut rng, 1500);
    let (topic_vocab, common) = vocab.split_at(300);

    let mut records = Vec::new();
    let mut documents = Vec::new();
    let mut qrels_og = Qrels::new();
    let mut qrels_new = Qrels::new();
    let mut system_scores: Vec<BTreeMap<String, Vec<(String, f64)>>> =
        vec![BTreeMap::new(); config.systems];

    for qi in 0..config.queries {
        let qid = format!("q{qi:03}");
        let topic: Vec<&String> = topic_vocab.choose_multiple(&mut rng, 3).collect();
        let constraint = topic_vocab
            .iter()
            .filter(|w| !topic.contains(w))
            .collect::<Vec<_>>()
            .choose(&mut rng)
            .map(|w| (*w).clone())
            .expect("vocabulary larger than topic");

        let query_text = format!("{} {}", topic[0], topic[1]);
        let instr_len = rng.gen_range(20..40);
        let mut instr = filler(&mut rng, common, instr_len);
        sprinkle(&mut rng, &mut instr, topic[2], 2);
        let instruction = format!(
            "Relevant documents discuss {}. {}.",
            topic[0],
            instr.join(" ")
        );
        let modified =
            format!("{instruction} Documents must also concern {constraint} to be relevant.");
        records.push(QueryRecord {
            query_id: qid.clone(),
            query_text,
            instruction_original: Some(instruction),
            instruction_modified: Some(modified),
            variants: BTreeMap::from([
                (
                    "keywords".to_string(),
                    format!("{} {} {}", topic[0], topic[1], topic[2]),
                ),
                (
                    "short".to_string(),
                    format!("Documents about {}.", topic[0]),
                ),
            ]),
        });

        for j in 0..config.pool_size {
            let doc_id = format!("{qid}-d{j:03}");
            let relevant = j < config.relevant_per_query;
            let changed = relevant && j < config.changed_per_query;
            let len = rng.gen_range(config.min_doc_words..=config.max_doc_words);
            let mut words = filler(&mut rng, common, len);
            if relevant {
                for t in &topic {
                    let n = rng.gen_range(1..4);
                    sprinkle(&mut rng, &mut words, t, n);
                }
                if !changed {
                    let n = rng.gen_range(1..3);
                    sprinkle(&mut rng, &mut words, &constraint, n);
                }
            } else if rng.gen_bool(0.5) {
                let t = topic[rng.gen_range(0..3)];
                sprinkle(&mut rng, &mut words, t, 1);
            }
            documents.push(Document {
                doc_id: doc_id.clone(),
                text: words.join(" "),
            });

            let grade = if relevant { rng.gen_range(1..=2) } else { 0 };
            // A few non-relevant documents stay unjudged.
            if relevant || rng.gen_bool(0.8) {
                qrels_og.insert(&qid, &doc_id, grade);
                qrels_new.insert(&qid, &doc_id, if changed { 0 } else { grade });
            }
            for scores in system_scores.iter_mut() {
                let signal = if relevant { 1.0 } else { 0.0 };
                let s = signal * rng.gen_range(0.0..1.5) + rng.gen_range(0.0..1.0);
                scores
                    .entry(qid.clone())
                    .or_default()
                    .push((doc_id.clone(), s));
            }
        }
    }

    let runs = system_scores
        .into_iter()
        .enumerate()
        .map(|(i, per_query)| {
            let mut run = Run::new();
            for (qid, scored) in per_query {
                run.insert_scored(&qid, scored, &format!("sys{i}"));
            }
            run
        })
        .collect();

    SyntheticCorpus {
        dataset: Dataset::from_records(records).expect("generated ids are unique"),
        documents,
        qrels_og,
        qrels_new,
        runs,
    }
}
