//! Fine-grained ranking of coarse candidates with a binary relevance
//! scorer, plus export of scorer training pairs.
//!
//! Scorers report the probability of the "relevant" outcome for a
//! `(question, context)` pair. External scorers are reached over the wire
//! protocol; [`LexicalScorer`] is the model-free baseline and the default
//! fallback when an external scorer fails.

pub mod export;

use std::collections::HashSet;
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::PassageStore;
use crate::error::{Error, ProviderError, Result, Warning};
use crate::index::{stopwords, tokenize, ScoredPassage};
use crate::protocol::{Client, Endpoint, Pair, Request};
use crate::providers::{ConnectionPool, TitleCandidate};

pub use export::{
    export_hotpot_pairs, export_nq_pairs, HotpotRecord, Label, NqRecord, SourceDataset, TrainingExport, TrainingPair,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorerRequest {
    pub question: String,
    pub context: String,
}

impl ScorerRequest {
    pub fn new(question: impl Into<String>, context: impl Into<String>) -> Result<Self> {
        let req = Self {
            question: question.into(),
            context: context.into(),
        };
        if req.question.trim().is_empty() || req.context.trim().is_empty() {
            return Err(Error::Config("scorer request needs a question and a context".into()));
        }
        Ok(req)
    }
}

/// Probability of the positive outcome, in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelevanceScore(f64);

impl RelevanceScore {
    pub fn new(value: f64) -> Option<Self> {
        (0.0..=1.0).contains(&value).then_some(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Scores batches of pairs; results are in request order.
pub trait RelevanceScorer: Send + Sync {
    fn score_batch(&self, pairs: &[ScorerRequest]) -> Result<Vec<f64>, ProviderError>;

    fn name(&self) -> String;
}

/// Share of the question's content tokens that occur in the context.
/// Content tokens exclude the built-in stopword list. A question without
/// content tokens scores 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalScorer;

impl LexicalScorer {
    fn content_tokens(text: &str) -> HashSet<String> {
        let stop = stopwords();
        tokenize(text)
            .into_iter()
            .filter(|t| !stop.contains(t.as_str()))
            .collect()
    }

    pub fn score(question: &str, context: &str) -> f64 {
        let q = Self::content_tokens(question);
        if q.is_empty() {
            return 0.0;
        }
        let c = Self::content_tokens(context);
        q.intersection(&c).count() as f64 / q.len() as f64
    }
}

impl RelevanceScorer for LexicalScorer {
    fn score_batch(&self, pairs: &[ScorerRequest]) -> Result<Vec<f64>, ProviderError> {
        Ok(pairs.iter().map(|p| Self::score(&p.question, &p.context)).collect())
    }

    fn name(&self) -> String {
        "lexical".into()
    }
}

/// Scorer reached over the wire protocol (`{"op":"score","pairs":[...]}`).
#[derive(Debug, Clone)]
pub struct RemoteScorer {
    client: Client,
}

impl RemoteScorer {
    pub fn new(client: Client) -> Self {
        Self { client }
    }
}

impl RelevanceScorer for RemoteScorer {
    fn score_batch(&self, pairs: &[ScorerRequest]) -> Result<Vec<f64>, ProviderError> {
        let wire = pairs
            .iter()
            .map(|p| Pair {
                q: p.question.clone(),
                c: p.context.clone(),
            })
            .collect();
        let resp = self.client.call(&Request::score(wire))?;
        resp.scores
            .ok_or_else(|| ProviderError::Protocol("response has no \"scores\"".into()))
    }

    fn name(&self) -> String {
        format!("remote ({})", self.client.describe())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScorerConfig {
    pub endpoint: Endpoint,
    pub timeout_ms: u64,
    pub retries: u32,
    pub batch_size: usize,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            endpoint: Endpoint::Builtin,
            timeout_ms: 60_000,
            retries: 1,
            batch_size: 32,
        }
    }
}

impl ScorerConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// A primary scorer with a fallback used per batch whenever the primary
/// fails or answers with the wrong count or out-of-range values.
#[derive(Clone)]
pub struct Scorer {
    primary: Arc<dyn RelevanceScorer>,
    fallback: Arc<dyn RelevanceScorer>,
    batch_size: usize,
}

impl Default for Scorer {
    fn default() -> Self {
        Self::lexical()
    }
}

impl Scorer {
    pub fn new(primary: Arc<dyn RelevanceScorer>, fallback: Arc<dyn RelevanceScorer>, batch_size: usize) -> Self {
        Self {
            primary,
            fallback,
            batch_size: batch_size.max(1),
        }
    }

    pub fn lexical() -> Self {
        Self::new(Arc::new(LexicalScorer), Arc::new(LexicalScorer), 64)
    }

    pub fn from_config(config: &ScorerConfig, pool: &mut ConnectionPool) -> Result<Self> {
        let primary: Arc<dyn RelevanceScorer> = match &config.endpoint {
            Endpoint::Builtin => Arc::new(LexicalScorer),
            e => Arc::new(RemoteScorer::new(pool.client(
                e,
                Duration::from_millis(config.timeout_ms),
                config.retries,
            )?)),
        };
        Ok(Self::new(primary, Arc::new(LexicalScorer), config.batch_size))
    }

    pub fn name(&self) -> String {
        self.primary.name()
    }

    fn score_chunk(&self, chunk: &[ScorerRequest]) -> (Vec<RelevanceScore>, Option<Warning>) {
        let checked = self.primary.score_batch(chunk).and_then(|scores| {
            if scores.len() != chunk.len() {
                return Err(ProviderError::Protocol(format!(
                    "{} scores for {} pairs",
                    scores.len(),
                    chunk.len()
                )));
            }
            scores
                .into_iter()
                .map(|s| {
                    RelevanceScore::new(s).ok_or_else(|| ProviderError::Protocol(format!("score {s} outside [0, 1]")))
                })
                .collect::<Result<Vec<_>, _>>()
        });
        match checked {
            Ok(scores) => (scores, None),
            Err(e) => {
                let warning = Warning::new(
                    "rerank",
                    format!(
                        "scorer {} failed on {} pairs ({e}); used {}",
                        self.primary.name(),
                        chunk.len(),
                        self.fallback.name()
                    ),
                );
                let scores = self
                    .fallback
                    .score_batch(chunk)
                    .ok()
                    .filter(|s| s.len() == chunk.len())
                    .map(|s| {
                        s.into_iter()
                            .map(|v| RelevanceScore::new(v).unwrap_or(RelevanceScore(0.0)))
                            .collect()
                    })
                    .unwrap_or_else(|| vec![RelevanceScore(0.0); chunk.len()]);
                (scores, Some(warning))
            }
        }
    }

    /// Scores all pairs, batching and running batches concurrently. Output
    /// order matches input order.
    pub fn score_all(&self, pairs: &[ScorerRequest]) -> (Vec<RelevanceScore>, Vec<Warning>) {
        let parts: Vec<_> = pairs
            .par_chunks(self.batch_size)
            .map(|chunk| self.score_chunk(chunk))
            .collect();
        let mut scores = Vec::with_capacity(pairs.len());
        let mut warnings = Vec::new();
        for (s, w) in parts {
            scores.extend(s);
            warnings.extend(w);
        }
        (scores, warnings)
    }
}

/// Scores one pair.
pub fn score_pair(request: &ScorerRequest, scorer: &Scorer) -> (RelevanceScore, Vec<Warning>) {
    let (mut scores, warnings) = scorer.score_all(std::slice::from_ref(request));
    (scores.pop().expect("one score per pair"), warnings)
}

/// A re-ranked passage with both stage scores and the linked titles that
/// introduced its page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPassage {
    pub passage_id: String,
    pub page_title: String,
    pub text: String,
    pub bm25_score: f64,
    pub relevance_score: f64,
    #[serde(default)]
    pub title_provenance: Vec<TitleCandidate>,
}

/// Re-sorts coarse candidates by relevance (descending), then BM25
/// (descending), then passage id, and keeps the first `top_k`.
///
/// Candidates whose passage is missing from `store` are skipped with a
/// warning.
pub fn rerank(
    question: &str,
    candidates: &[ScoredPassage],
    store: &PassageStore,
    scorer: &Scorer,
    top_k: usize,
) -> (Vec<RankedPassage>, Vec<Warning>) {
    let mut warnings = Vec::new();
    let mut found = Vec::with_capacity(candidates.len());
    for c in candidates {
        match store.get(&c.passage_id) {
            Some(p) => found.push((c, p)),
            None => warnings.push(Warning::new(
                "rerank",
                format!("passage {} not in store; skipped", c.passage_id),
            )),
        }
    }
    let pairs: Vec<ScorerRequest> = found
        .iter()
        .map(|(_, p)| ScorerRequest {
            question: question.to_string(),
            context: p.text.clone(),
        })
        .collect();
    let (scores, w) = scorer.score_all(&pairs);
    warnings.extend(w);

    let mut ranked: Vec<RankedPassage> = found
        .into_iter()
        .zip(scores)
        .map(|((c, p), s)| RankedPassage {
            passage_id: c.passage_id.clone(),
            page_title: c.page_title.clone(),
            text: p.text.clone(),
            bm25_score: c.bm25_score,
            relevance_score: s.value(),
            title_provenance: Vec::new(),
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.relevance_score
            .total_cmp(&a.relevance_score)
            .then_with(|| b.bm25_score.total_cmp(&a.bm25_score))
            .then_with(|| a.passage_id.cmp(&b.passage_id))
    });
    ranked.truncate(top_k);
    (ranked, warnings)
}
