//! Shared helpers for integration tests and the acceptance runner.
#![allow(dead_code)]

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use pagelink::corpus::{Document, PassageStore};
use pagelink::index::{Bm25Params, InvertedIndex, TokenizerConfig};
use pagelink::providers::{Decomposer, Linker, TitleBudget, TitleGenerator};
use pagelink::ProviderError;
use rand::{Rng, RngExt};
use serde::Deserialize;

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Vec<T> {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[derive(Debug, Clone, Deserialize)]
pub struct SynthQuestion {
    pub qid: String,
    pub question: String,
    pub answers: Vec<String>,
    pub gold_title: String,
    pub gold_block: usize,
}

pub fn synthetic_corpus() -> Vec<Document> {
    read_jsonl(&fixture("synthetic/corpus.jsonl"))
}

pub fn synthetic_questions() -> Vec<SynthQuestion> {
    read_jsonl(&fixture("synthetic/questions.jsonl"))
}

pub fn build(docs: Vec<Document>) -> (Arc<PassageStore>, Arc<InvertedIndex>) {
    let store = PassageStore::from_documents(docs).unwrap();
    let index = InvertedIndex::build(&store, Bm25Params::default(), TokenizerConfig::default()).unwrap();
    (Arc::new(store), Arc::new(index))
}

/// Answers every query with its gold title.
pub struct OracleLinker(pub HashMap<String, String>);

impl Linker for OracleLinker {
    fn link(&self, text: &str, k: usize) -> Result<Vec<String>, ProviderError> {
        Ok(self.0.get(text).into_iter().take(k).cloned().collect())
    }
}

pub struct NoTitles;

impl Linker for NoTitles {
    fn link(&self, _: &str, _: usize) -> Result<Vec<String>, ProviderError> {
        Ok(Vec::new())
    }
}

pub struct NoDecomposition;

impl Decomposer for NoDecomposition {
    fn decompose(&self, _: &str, _: usize, _: usize) -> Result<Vec<Vec<String>>, ProviderError> {
        Ok(Vec::new())
    }
}

pub fn oracle_generator(questions: &[SynthQuestion]) -> TitleGenerator {
    let map = questions
        .iter()
        .map(|q| (q.question.clone(), q.gold_title.clone()))
        .collect();
    TitleGenerator {
        entity: Arc::new(OracleLinker(map)),
        event: Arc::new(NoTitles),
        decomposer: Arc::new(NoDecomposition),
        corrector: None,
        budget: TitleBudget::default(),
    }
}

/// Random documents over a vocabulary of `vocab` words `w0..`, with
/// lengths chosen so the store holds at most `max_passages` passages.
pub fn random_corpus<R: Rng>(rng: &mut R, max_passages: usize, vocab: usize) -> Vec<Document> {
    random_corpus_with(rng, max_passages, vocab, 3)
}

/// Like [`random_corpus`] with pages of up to `max_blocks` passages.
pub fn random_corpus_with<R: Rng>(rng: &mut R, max_passages: usize, vocab: usize, max_blocks: usize) -> Vec<Document> {
    let mut docs = Vec::new();
    let mut passages = 0;
    let target = rng.random_range(1..=max_passages);
    let zipf = |rng: &mut R| -> usize {
        // skewed so some terms are frequent and some rare
        let u: f64 = rng.random();
        ((vocab as f64).powf(u) as usize).saturating_sub(1).min(vocab - 1)
    };
    while passages < target {
        let blocks = rng.random_range(1..=max_blocks).min(target - passages);
        let words = (blocks - 1) * 100 + rng.random_range(1..=100usize);
        let text: Vec<String> = (0..words).map(|_| format!("w{}", zipf(rng))).collect();
        let i = docs.len();
        docs.push(Document {
            doc_id: format!("doc{i}"),
            title: format!("Page {i:05}"),
            text: text.join(" "),
        });
        passages += blocks;
    }
    docs
}

pub fn random_query<R: Rng>(rng: &mut R, vocab: usize) -> String {
    let n = rng.random_range(1..=6usize);
    (0..n)
        .map(|_| {
            if rng.random_bool(0.1) {
                "unseenterm".to_string()
            } else {
                format!("w{}", rng.random_range(0..vocab))
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Exhaustive BM25: scores every passage from scratch with plain counting.
/// Collection statistics cover every passage; `restrict` only limits which
/// passages may be returned.
pub struct OracleBm25 {
    k1: f64,
    b: f64,
    docs: Vec<OracleDoc>,
    df: HashMap<String, usize>,
    avgdl: f64,
}

struct OracleDoc {
    pid: String,
    title: String,
    len: usize,
    tf: HashMap<String, usize>,
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

impl OracleBm25 {
    pub fn new(store: &PassageStore, k1: f64, b: f64) -> Self {
        let mut df: HashMap<String, usize> = HashMap::new();
        let mut total = 0usize;
        let docs: Vec<OracleDoc> = store
            .passages()
            .iter()
            .map(|p| {
                let toks = words(&p.text);
                let mut tf: HashMap<String, usize> = HashMap::new();
                for t in &toks {
                    *tf.entry(t.clone()).or_default() += 1;
                }
                for t in tf.keys() {
                    *df.entry(t.clone()).or_default() += 1;
                }
                total += toks.len();
                OracleDoc {
                    pid: p.passage_id.clone(),
                    title: p.page_title.clone(),
                    len: toks.len(),
                    tf,
                }
            })
            .collect();
        let avgdl = total as f64 / docs.len() as f64;
        Self { k1, b, docs, df, avgdl }
    }

    fn score(&self, query_terms: &[String], doc: &OracleDoc) -> f64 {
        let n = self.docs.len() as f64;
        let mut s = 0.0;
        for q in query_terms {
            let Some(&tf) = doc.tf.get(q) else { continue };
            let df = self.df[q] as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            let tf = tf as f64;
            let norm = 1.0 - self.b + self.b * doc.len as f64 / self.avgdl;
            s += idf * tf * (self.k1 + 1.0) / (tf + self.k1 * norm);
        }
        s
    }

    pub fn top_k(&self, query: &str, k: usize, restrict: Option<&HashSet<String>>) -> Vec<(String, f64)> {
        let q = words(query);
        let mut all: Vec<(String, f64)> = self
            .docs
            .iter()
            .filter(|d| restrict.is_none_or(|r| r.contains(&d.title)))
            .map(|d| (d.pid.clone(), self.score(&q, d)))
            .collect();
        all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        all.truncate(k);
        all
    }
}
