//! Query → linked titles → page passages → BM25 top-200 → re-ranked top-K,
//! recorded as a [`QueryTrace`].

use std::collections::HashSet;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{hex, PassageStore};
use crate::error::{Error, Result, Warning};
use crate::index::{InvertedIndex, ScoredPassage};
use crate::providers::{Decomposition, IdentityCorrector, TitleBudget, TitleGenerator, TitleSet};
use crate::rerank::{rerank, RankedPassage, Scorer};

pub const DEFAULT_COARSE: usize = 200;
pub const DEFAULT_FINAL: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub n_entity: usize,
    pub n_event: usize,
    pub n_sets: usize,
    pub n_sentences: usize,
    pub n_coarse: usize,
    pub k_final: usize,
    pub corrector_enabled: bool,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let budget = TitleBudget::default();
        Self {
            n_entity: budget.n_entity,
            n_event: budget.n_event,
            n_sets: budget.n_sets,
            n_sentences: budget.n_sentences,
            n_coarse: DEFAULT_COARSE,
            k_final: DEFAULT_FINAL,
            corrector_enabled: false,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_final == 0 || self.k_final > self.n_coarse {
            return Err(Error::Config(format!(
                "k_final must be in 1..={} (n_coarse), got {}",
                self.n_coarse, self.k_final
            )));
        }
        if [self.n_entity, self.n_event, self.n_sets, self.n_sentences].contains(&0) {
            return Err(Error::Config("title counts must be positive".into()));
        }
        Ok(())
    }

    pub fn budget(&self) -> TitleBudget {
        TitleBudget {
            n_entity: self.n_entity,
            n_event: self.n_event,
            n_sets: self.n_sets,
            n_sentences: self.n_sentences,
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub titles_ms: f64,
    pub coarse_ms: f64,
    pub rerank_ms: f64,
    pub total_ms: f64,
}

/// Everything the pipeline did for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTrace {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qid: Option<String>,
    pub query: String,
    pub decompositions_raw: Vec<Decomposition>,
    pub decompositions: Vec<Decomposition>,
    pub title_set: TitleSet,
    /// Linked titles with no page in the corpus.
    pub missing_titles: Vec<String>,
    pub coarse: Vec<ScoredPassage>,
    pub k_final: usize,
    #[serde(rename = "final")]
    pub final_passages: Vec<RankedPassage>,
    pub warnings: Vec<Warning>,
    pub timings_ms: StageTimings,
    pub config_fingerprint: String,
}

impl QueryTrace {
    /// Texts of the final list, best first.
    pub fn final_texts(&self) -> Vec<&str> {
        self.final_passages.iter().map(|p| p.text.as_str()).collect()
    }

    /// Checks final ⊆ coarse ⊆ passages of linked pages and that every
    /// final passage carries provenance. Returns the violations found.
    pub fn funnel_violations(&self, store: &PassageStore) -> Vec<String> {
        let mut out = Vec::new();
        let titles: HashSet<&str> = self.title_set.unique_titles.iter().map(String::as_str).collect();
        let coarse: HashSet<&str> = self.coarse.iter().map(|c| c.passage_id.as_str()).collect();
        for c in &self.coarse {
            if !titles.contains(c.page_title.as_str()) {
                out.push(format!("coarse passage {} from unlinked page", c.passage_id));
            }
            match store.get(&c.passage_id) {
                Some(p) if p.page_title == c.page_title => {}
                _ => out.push(format!("coarse passage {} not in store", c.passage_id)),
            }
        }
        for f in &self.final_passages {
            if !coarse.contains(f.passage_id.as_str()) {
                out.push(format!("final passage {} not in coarse list", f.passage_id));
            }
            if f.title_provenance.is_empty() {
                out.push(format!("final passage {} has no provenance", f.passage_id));
            }
        }
        out
    }
}

/// Loaded index, store, title generator and scorer.
#[derive(Clone)]
pub struct Pipeline {
    config: PipelineConfig,
    store: Arc<PassageStore>,
    index: Arc<InvertedIndex>,
    titles: TitleGenerator,
    scorer: Scorer,
    fingerprint: String,
}

impl Pipeline {
    pub fn new(
        config: PipelineConfig,
        store: Arc<PassageStore>,
        index: Arc<InvertedIndex>,
        titles: TitleGenerator,
        scorer: Scorer,
    ) -> Result<Self> {
        config.validate()?;
        if store.checksum() != index.corpus_checksum() {
            return Err(Error::Config("index was built from a different corpus".into()));
        }
        let mut titles = titles;
        titles.budget = config.budget();
        if config.corrector_enabled && titles.corrector.is_none() {
            titles.corrector = Some(Arc::new(IdentityCorrector));
        } else if !config.corrector_enabled {
            titles.corrector = None;
        }
        let fingerprint = fingerprint(&config, &index, &scorer);
        Ok(Self {
            config,
            store,
            index,
            titles,
            scorer,
            fingerprint,
        })
    }

    /// Builtin components only: lexical linking over the corpus titles,
    /// heuristic decomposition and lexical re-ranking.
    pub fn builtin(config: PipelineConfig, store: Arc<PassageStore>, index: Arc<InvertedIndex>) -> Result<Self> {
        let titles = TitleGenerator::builtin(store.titles());
        Self::new(config, store, index, titles, Scorer::lexical())
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn store(&self) -> &PassageStore {
        &self.store
    }

    pub fn index(&self) -> &InvertedIndex {
        &self.index
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn retrieve(&self, query: &str) -> Result<QueryTrace> {
        self.retrieve_with(None, query, self.config.k_final)
    }

    /// Runs the full pipeline. `k_final` overrides the configured final
    /// list length.
    pub fn retrieve_with(&self, qid: Option<&str>, query: &str, k_final: usize) -> Result<QueryTrace> {
        if k_final == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        let start = Instant::now();
        let generation = self.titles.generate(query)?;
        let titles_ms = ms(start);

        let mut warnings = generation.warnings;
        let t = Instant::now();
        let (coarse, missing_titles) = self.coarse(query, &generation.title_set, &mut warnings);
        let coarse_ms = ms(t);

        let t = Instant::now();
        let final_passages = self.fine(query, &generation.title_set, &coarse, k_final, &mut warnings);
        let rerank_ms = ms(t);

        Ok(QueryTrace {
            qid: qid.map(str::to_string),
            query: query.to_string(),
            decompositions_raw: generation.decompositions_raw,
            decompositions: generation.decompositions,
            title_set: generation.title_set,
            missing_titles,
            coarse,
            k_final,
            final_passages,
            warnings,
            timings_ms: StageTimings {
                titles_ms,
                coarse_ms,
                rerank_ms,
                total_ms: ms(start),
            },
            config_fingerprint: self.fingerprint.clone(),
        })
    }

    fn coarse(
        &self,
        query: &str,
        title_set: &TitleSet,
        warnings: &mut Vec<Warning>,
    ) -> (Vec<ScoredPassage>, Vec<String>) {
        let missing: Vec<String> = title_set
            .unique_titles
            .iter()
            .filter(|t| !self.store.contains_title(t))
            .cloned()
            .collect();
        if !missing.is_empty() {
            warnings.push(Warning::new(
                "coarse",
                format!("{} linked titles not in corpus", missing.len()),
            ));
        }
        if title_set.is_empty() {
            return (Vec::new(), missing);
        }
        let hits = self
            .index
            .top_k(query, self.config.n_coarse, Some(title_set.unique_titles.as_slice()));
        if hits.is_empty() {
            warnings.push(Warning::new("coarse", "linked pages hold no passages"));
        }
        (hits, missing)
    }

    fn fine(
        &self,
        query: &str,
        title_set: &TitleSet,
        coarse: &[ScoredPassage],
        k_final: usize,
        warnings: &mut Vec<Warning>,
    ) -> Vec<RankedPassage> {
        let (mut ranked, w) = rerank(query, coarse, &self.store, &self.scorer, k_final);
        warnings.extend(w);
        let provenance = title_set.provenance_map();
        for r in &mut ranked {
            r.title_provenance = provenance
                .get(r.page_title.as_str())
                .map(|cs| cs.iter().map(|c| (*c).clone()).collect())
                .unwrap_or_default();
        }
        ranked
    }

    /// Re-runs coarse filtering and re-ranking from a stored trace's title
    /// set, for auditing.
    pub fn replay(&self, trace: &QueryTrace) -> Vec<RankedPassage> {
        let mut warnings = Vec::new();
        let (coarse, _) = self.coarse(&trace.query, &trace.title_set, &mut warnings);
        self.fine(&trace.query, &trace.title_set, &coarse, trace.k_final, &mut warnings)
    }

    /// Runs independent queries on up to `parallelism` threads. Output order
    /// matches input order. `0` uses one thread per core.
    pub fn retrieve_batch(&self, queries: &[BatchQuery], parallelism: usize) -> Vec<Result<QueryTrace>> {
        let run = || {
            queries
                .par_iter()
                .map(|q| self.retrieve_with(q.qid.as_deref(), &q.query, self.config.k_final))
                .collect()
        };
        match rayon::ThreadPoolBuilder::new().num_threads(parallelism).build() {
            Ok(pool) => pool.install(run),
            Err(_) => run(),
        }
    }
}

/// One query of a batch, optionally tagged with a dataset question id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchQuery {
    #[serde(default, alias = "id", alias = "_id")]
    pub qid: Option<String>,
    #[serde(alias = "question")]
    pub query: String,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

fn fingerprint(config: &PipelineConfig, index: &InvertedIndex, scorer: &Scorer) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config).expect("config serializes"));
    h.update(serde_json::to_vec(&index.manifest()).expect("manifest serializes"));
    h.update(scorer.name().as_bytes());
    hex(&h.finalize())[..16].to_string()
}

/// Writes traces as JSON lines.
pub fn write_traces<W: std::io::Write>(traces: &[QueryTrace], mut out: W) -> std::io::Result<()> {
    for t in traces {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Reads a JSON-lines trace file.
pub fn read_traces(path: &std::path::Path) -> Result<Vec<QueryTrace>> {
    use std::io::BufRead;
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, format!("{}: {e}", path.display())))?);
    }
    Ok(out)
}
