//! Title generation: entity linking and event linking on the query, query
//! decomposition (optionally corrected), event linking on every
//! decomposition sentence, and the union of all resulting page titles.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, ProviderError, Result, Warning};
use crate::index::{stopwords, tokenize};
use crate::protocol::{Client, Endpoint, Op, Request, Transport};

pub const DEFAULT_ENTITY_TITLES: usize = 10;
pub const DEFAULT_EVENT_TITLES: usize = 5;
pub const DEFAULT_DECOMPOSITION_SETS: usize = 5;
pub const DEFAULT_SENTENCES_PER_SET: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TitleSource {
    EntityLinkQuery,
    EventLinkQuery,
    EventLinkDecomposition,
}

/// A linked page title and where it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TitleCandidate {
    pub title: String,
    pub source: TitleSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_sentence: Option<String>,
    pub rank: usize,
}

/// One generated set of hypothesis sentences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decomposition {
    pub set_index: usize,
    pub sentences: Vec<String>,
}

/// All linked candidates for one query plus their deduplicated titles in
/// first-occurrence order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TitleSet {
    pub candidates: Vec<TitleCandidate>,
    pub unique_titles: Vec<String>,
}

impl TitleSet {
    pub fn from_candidates(candidates: Vec<TitleCandidate>) -> Self {
        let mut seen = HashSet::new();
        let unique_titles = candidates
            .iter()
            .filter(|c| seen.insert(c.title.as_str()))
            .map(|c| c.title.clone())
            .collect();
        Self {
            candidates,
            unique_titles,
        }
    }

    pub fn len(&self) -> usize {
        self.unique_titles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unique_titles.is_empty()
    }

    /// Every candidate that introduced `title`.
    pub fn provenance(&self, title: &str) -> Vec<TitleCandidate> {
        self.candidates.iter().filter(|c| c.title == title).cloned().collect()
    }

    /// Provenance lists for all titles, keyed by title.
    pub fn provenance_map(&self) -> HashMap<&str, Vec<&TitleCandidate>> {
        let mut map: HashMap<&str, Vec<&TitleCandidate>> = HashMap::new();
        for c in &self.candidates {
            map.entry(c.title.as_str()).or_default().push(c);
        }
        map
    }
}

/// Maps text to ranked page titles.
pub trait Linker: Send + Sync {
    fn link(&self, text: &str, k: usize) -> Result<Vec<String>, ProviderError>;
}

/// Produces sets of hypothesis sentences for a query.
pub trait Decomposer: Send + Sync {
    fn decompose(&self, query: &str, sets: usize, sentences_per_set: usize) -> Result<Vec<Vec<String>>, ProviderError>;
}

/// Rewrites decomposition sentences, e.g. to fix factual errors.
pub trait Corrector: Send + Sync {
    fn correct(&self, query: &str, sets: &[Vec<String>]) -> Result<Vec<Vec<String>>, ProviderError>;
}

/// Linker reached over the wire protocol.
#[derive(Debug, Clone)]
pub struct RemoteLinker {
    client: Client,
    op: Op,
}

impl RemoteLinker {
    pub fn entity(client: Client) -> Self {
        Self {
            client,
            op: Op::EntityLink,
        }
    }

    pub fn event(client: Client) -> Self {
        Self {
            client,
            op: Op::EventLink,
        }
    }
}

impl Linker for RemoteLinker {
    fn link(&self, text: &str, k: usize) -> Result<Vec<String>, ProviderError> {
        let resp = self.client.call(&Request::link(self.op, text, k))?;
        resp.titles
            .ok_or_else(|| ProviderError::Protocol("response has no \"titles\"".into()))
    }
}

#[derive(Debug, Clone)]
pub struct RemoteDecomposer {
    client: Client,
}

impl RemoteDecomposer {
    pub fn new(client: Client) -> Self {
        Self { client }
    }
}

impl Decomposer for RemoteDecomposer {
    fn decompose(&self, query: &str, sets: usize, sentences_per_set: usize) -> Result<Vec<Vec<String>>, ProviderError> {
        let resp = self.client.call(&Request::decompose(query, sets, sentences_per_set))?;
        resp.decompositions
            .ok_or_else(|| ProviderError::Protocol("response has no \"decompositions\"".into()))
    }
}

#[derive(Debug, Clone)]
pub struct RemoteCorrector {
    client: Client,
}

impl RemoteCorrector {
    pub fn new(client: Client) -> Self {
        Self { client }
    }
}

impl Corrector for RemoteCorrector {
    fn correct(&self, query: &str, sets: &[Vec<String>]) -> Result<Vec<Vec<String>>, ProviderError> {
        let resp = self.client.call(&Request::correct(query, sets.to_vec()))?;
        resp.decompositions
            .ok_or_else(|| ProviderError::Protocol("response has no \"decompositions\"".into()))
    }
}

/// Returns its input unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityCorrector;

impl Corrector for IdentityCorrector {
    fn correct(&self, _query: &str, sets: &[Vec<String>]) -> Result<Vec<Vec<String>>, ProviderError> {
        Ok(sets.to_vec())
    }
}

/// Model-free linker over a title dictionary.
///
/// A title scores `|tokens(title) ∩ tokens(text)| / |tokens(title)|`; the
/// top `k` titles with positive overlap are returned, ties by ascending
/// title.
#[derive(Debug, Clone, Default)]
pub struct LexicalLinker {
    titles: Vec<String>,
    title_sizes: Vec<usize>,
    by_token: HashMap<String, Vec<u32>>,
}

impl LexicalLinker {
    pub fn new<I, S>(titles: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut linker = LexicalLinker::default();
        for title in titles {
            let title = title.into();
            let tokens: HashSet<String> = tokenize(&title).into_iter().collect();
            if tokens.is_empty() {
                continue;
            }
            let id = linker.titles.len() as u32;
            for t in &tokens {
                linker.by_token.entry(t.clone()).or_default().push(id);
            }
            linker.title_sizes.push(tokens.len());
            linker.titles.push(title);
        }
        linker
    }

    pub fn rank(&self, text: &str, k: usize) -> Vec<(String, f64)> {
        let text_tokens: HashSet<String> = tokenize(text).into_iter().collect();
        let mut overlap: HashMap<u32, usize> = HashMap::new();
        for t in &text_tokens {
            if let Some(ids) = self.by_token.get(t) {
                for &id in ids {
                    *overlap.entry(id).or_default() += 1;
                }
            }
        }
        let mut scored: Vec<(u32, f64)> = overlap
            .into_iter()
            .map(|(id, n)| (id, n as f64 / self.title_sizes[id as usize] as f64))
            .collect();
        scored.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.titles[a.0 as usize].cmp(&self.titles[b.0 as usize]))
        });
        scored.truncate(k);
        scored
            .into_iter()
            .map(|(id, s)| (self.titles[id as usize].clone(), s))
            .collect()
    }
}

impl Linker for LexicalLinker {
    fn link(&self, text: &str, k: usize) -> Result<Vec<String>, ProviderError> {
        Ok(self.rank(text, k).into_iter().map(|(t, _)| t).collect())
    }
}

/// Model-free decomposer: every sentence is a window over the query's
/// content words, rotated per set and sentence so sets differ.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicDecomposer;

impl Decomposer for HeuristicDecomposer {
    fn decompose(&self, query: &str, sets: usize, sentences_per_set: usize) -> Result<Vec<Vec<String>>, ProviderError> {
        let stop = stopwords();
        let words: Vec<&str> = query
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty() && !stop.contains(w.to_lowercase().as_str()))
            .collect();
        if words.is_empty() {
            return Err(ProviderError::Remote("query has no content words".into()));
        }
        let width = words.len().div_ceil(2);
        let out = (0..sets)
            .map(|set| {
                (0..sentences_per_set)
                    .map(|s| {
                        let start = (set * sentences_per_set + s) % words.len();
                        (0..width)
                            .map(|i| words[(start + i) % words.len()])
                            .collect::<Vec<_>>()
                            .join(" ")
                    })
                    .collect()
            })
            .collect();
        Ok(out)
    }
}

/// Connection settings and title budgets for title generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub entity_link: Endpoint,
    pub event_link: Endpoint,
    pub decompose: Endpoint,
    /// `None` skips correction entirely; `Some(Builtin)` is the identity.
    pub correct: Option<Endpoint>,
    pub timeout_ms: u64,
    pub retries: u32,
    pub n_entity: usize,
    pub n_event: usize,
    pub n_sets: usize,
    pub n_sentences: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            entity_link: Endpoint::Builtin,
            event_link: Endpoint::Builtin,
            decompose: Endpoint::Builtin,
            correct: None,
            timeout_ms: 30_000,
            retries: 2,
            n_entity: DEFAULT_ENTITY_TITLES,
            n_event: DEFAULT_EVENT_TITLES,
            n_sets: DEFAULT_DECOMPOSITION_SETS,
            n_sentences: DEFAULT_SENTENCES_PER_SET,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_entity", self.n_entity),
            ("n_event", self.n_event),
            ("n_sets", self.n_sets),
            ("n_sentences", self.n_sentences),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn title_budget(&self) -> usize {
        self.n_entity + self.n_event + self.n_sets * self.n_sentences * self.n_event
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Opens transports for endpoints, sharing one connection per distinct
/// endpoint so e.g. a single child process can serve every op.
#[derive(Default)]
pub struct ConnectionPool {
    open: HashMap<Endpoint, Arc<dyn Transport>>,
}

impl ConnectionPool {
    pub fn client(&mut self, endpoint: &Endpoint, timeout: Duration, retries: u32) -> Result<Client> {
        let transport = match self.open.get(endpoint) {
            Some(t) => Arc::clone(t),
            None => {
                let t = endpoint.connect(timeout)?;
                self.open.insert(endpoint.clone(), Arc::clone(&t));
                t
            }
        };
        Ok(Client::new(transport, retries))
    }

    /// `(description, alive)` for every open connection.
    pub fn liveness(&self) -> Vec<(String, bool)> {
        let mut out: Vec<(String, bool)> = self.open.values().map(|t| (t.describe(), t.is_alive())).collect();
        out.sort();
        out
    }
}

/// Output of [`TitleGenerator::generate`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TitleGeneration {
    pub title_set: TitleSet,
    /// Decompositions as produced by the decomposer, after shape checks.
    pub decompositions_raw: Vec<Decomposition>,
    /// Decompositions actually linked (post-correction when enabled).
    pub decompositions: Vec<Decomposition>,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TitleBudget {
    pub n_entity: usize,
    pub n_event: usize,
    pub n_sets: usize,
    pub n_sentences: usize,
}

impl Default for TitleBudget {
    fn default() -> Self {
        Self {
            n_entity: DEFAULT_ENTITY_TITLES,
            n_event: DEFAULT_EVENT_TITLES,
            n_sets: DEFAULT_DECOMPOSITION_SETS,
            n_sentences: DEFAULT_SENTENCES_PER_SET,
        }
    }
}

/// Runs linking, decomposition, optional correction and linking again.
#[derive(Clone)]
pub struct TitleGenerator {
    pub entity: Arc<dyn Linker>,
    pub event: Arc<dyn Linker>,
    pub decomposer: Arc<dyn Decomposer>,
    pub corrector: Option<Arc<dyn Corrector>>,
    pub budget: TitleBudget,
}

impl TitleGenerator {
    /// All-builtin generator: lexical linking over `titles`, heuristic
    /// decomposition, no correction.
    pub fn builtin<I, S>(titles: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let linker = Arc::new(LexicalLinker::new(titles));
        Self {
            entity: linker.clone(),
            event: linker,
            decomposer: Arc::new(HeuristicDecomposer),
            corrector: None,
            budget: TitleBudget::default(),
        }
    }

    /// Builds a generator from config. Builtin endpoints fall back to the
    /// lexical linker over `titles`, the heuristic decomposer and the
    /// identity corrector.
    pub fn from_config<S: AsRef<str>>(
        config: &ProviderConfig,
        titles: &[S],
        pool: &mut ConnectionPool,
    ) -> Result<Self> {
        config.validate()?;
        let timeout = Duration::from_millis(config.timeout_ms);
        let mut lexical: Option<Arc<LexicalLinker>> = None;
        let mut lexical_linker = || -> Arc<dyn Linker> {
            lexical
                .get_or_insert_with(|| Arc::new(LexicalLinker::new(titles.iter().map(|t| t.as_ref()))))
                .clone()
        };
        let entity: Arc<dyn Linker> = match &config.entity_link {
            Endpoint::Builtin => lexical_linker(),
            e => Arc::new(RemoteLinker::entity(pool.client(e, timeout, config.retries)?)),
        };
        let event: Arc<dyn Linker> = match &config.event_link {
            Endpoint::Builtin => lexical_linker(),
            e => Arc::new(RemoteLinker::event(pool.client(e, timeout, config.retries)?)),
        };
        let decomposer: Arc<dyn Decomposer> = match &config.decompose {
            Endpoint::Builtin => Arc::new(HeuristicDecomposer),
            e => Arc::new(RemoteDecomposer::new(pool.client(e, timeout, config.retries)?)),
        };
        let corrector: Option<Arc<dyn Corrector>> = match &config.correct {
            None => None,
            Some(Endpoint::Builtin) => Some(Arc::new(IdentityCorrector)),
            Some(e) => Some(Arc::new(RemoteCorrector::new(pool.client(
                e,
                timeout,
                config.retries,
            )?))),
        };
        Ok(Self {
            entity,
            event,
            decomposer,
            corrector,
            budget: TitleBudget {
                n_entity: config.n_entity,
                n_event: config.n_event,
                n_sets: config.n_sets,
                n_sentences: config.n_sentences,
            },
        })
    }

    pub fn with_corrector(mut self, corrector: Option<Arc<dyn Corrector>>) -> Self {
        self.corrector = corrector;
        self
    }

    pub fn entity_link(&self, query: &str, warnings: &mut Vec<Warning>) -> Result<Vec<TitleCandidate>> {
        require_text(query)?;
        Ok(link_checked(
            self.entity.as_ref(),
            query,
            self.budget.n_entity,
            TitleSource::EntityLinkQuery,
            None,
            warnings,
        ))
    }

    /// Event linking on the query itself (`origin = None`) or on a
    /// decomposition sentence.
    pub fn event_link(
        &self,
        text: &str,
        origin: Option<&str>,
        warnings: &mut Vec<Warning>,
    ) -> Result<Vec<TitleCandidate>> {
        require_text(text)?;
        let source = if origin.is_some() {
            TitleSource::EventLinkDecomposition
        } else {
            TitleSource::EventLinkQuery
        };
        Ok(link_checked(
            self.event.as_ref(),
            text,
            self.budget.n_event,
            source,
            origin,
            warnings,
        ))
    }

    /// Up to `n_sets` decompositions of `n_sentences` non-empty sentences
    /// each. Malformed sets are dropped; provider failure yields none.
    pub fn decompose(&self, query: &str, warnings: &mut Vec<Warning>) -> Result<Vec<Decomposition>> {
        require_text(query)?;
        let TitleBudget {
            n_sets, n_sentences, ..
        } = self.budget;
        let raw = match self.decomposer.decompose(query, n_sets, n_sentences) {
            Ok(sets) => sets,
            Err(e) => {
                warnings.push(Warning::new("decompose", format!("decomposer failed: {e}")));
                return Ok(Vec::new());
            }
        };
        if raw.len() > n_sets {
            warnings.push(Warning::new(
                "decompose",
                format!("decomposer returned {} sets, keeping {n_sets}", raw.len()),
            ));
        }
        let mut out = Vec::new();
        for (set_index, sentences) in raw.into_iter().take(n_sets).enumerate() {
            if valid_set(&sentences, n_sentences) {
                out.push(Decomposition {
                    set_index,
                    sentences: sentences.into_iter().map(|s| s.trim().to_string()).collect(),
                });
            } else {
                warnings.push(Warning::new(
                    "decompose",
                    format!(
                        "set {set_index} has {} sentences (need {n_sentences} non-empty); dropped",
                        sentences.len()
                    ),
                ));
            }
        }
        if out.len() < n_sets {
            warnings.push(Warning::new(
                "decompose",
                format!("{} of {n_sets} decomposition sets usable", out.len()),
            ));
        }
        Ok(out)
    }

    /// Applies the corrector, keeping the set count and per-set shape. Any
    /// set the corrector mangles keeps its original sentences.
    pub fn correct_decompositions(
        &self,
        query: &str,
        decomps: &[Decomposition],
        warnings: &mut Vec<Warning>,
    ) -> Vec<Decomposition> {
        let Some(corrector) = &self.corrector else {
            return decomps.to_vec();
        };
        correct_with(corrector.as_ref(), query, decomps, self.budget.n_sentences, warnings)
    }

    /// Full title generation for one query.
    pub fn generate(&self, query: &str) -> Result<TitleGeneration> {
        require_text(query)?;
        let mut warnings = Vec::new();
        let mut candidates = self.entity_link(query, &mut warnings)?;
        candidates.extend(self.event_link(query, None, &mut warnings)?);

        let raw = self.decompose(query, &mut warnings)?;
        let decompositions = self.correct_decompositions(query, &raw, &mut warnings);

        let sentences: Vec<&str> = decompositions
            .iter()
            .flat_map(|d| d.sentences.iter().map(String::as_str))
            .collect();
        let linked: Vec<(Vec<TitleCandidate>, Vec<Warning>)> = sentences
            .par_iter()
            .map(|s| {
                let mut w = Vec::new();
                let c = self.event_link(s, Some(s), &mut w).unwrap_or_default();
                (c, w)
            })
            .collect();
        for (c, w) in linked {
            candidates.extend(c);
            warnings.extend(w);
        }

        let title_set = TitleSet::from_candidates(candidates);
        if title_set.is_empty() {
            warnings.push(Warning::new("titles", "no titles"));
        }
        Ok(TitleGeneration {
            title_set,
            decompositions_raw: raw,
            decompositions,
            warnings,
        })
    }
}

fn require_text(text: &str) -> Result<()> {
    if text.trim().is_empty() {
        Err(Error::Config("query text must be non-empty".into()))
    } else {
        Ok(())
    }
}

fn valid_set(sentences: &[String], n_sentences: usize) -> bool {
    sentences.len() == n_sentences && sentences.iter().all(|s| !s.trim().is_empty())
}

fn stage(source: TitleSource) -> &'static str {
    match source {
        TitleSource::EntityLinkQuery => "entity_link",
        TitleSource::EventLinkQuery | TitleSource::EventLinkDecomposition => "event_link",
    }
}

fn link_checked(
    linker: &dyn Linker,
    text: &str,
    k: usize,
    source: TitleSource,
    origin: Option<&str>,
    warnings: &mut Vec<Warning>,
) -> Vec<TitleCandidate> {
    let stage = stage(source);
    let titles = match linker.link(text, k) {
        Ok(t) => t,
        Err(e) => {
            warnings.push(Warning::new(stage, format!("linking {text:?} failed: {e}")));
            return Vec::new();
        }
    };
    if titles.len() > k {
        warnings.push(Warning::new(
            stage,
            format!(
                "provider returned {} titles for {text:?}, truncated to {k}",
                titles.len()
            ),
        ));
    }
    let mut out = Vec::with_capacity(k.min(titles.len()));
    for title in titles.into_iter().take(k) {
        let title = title.trim();
        if title.is_empty() {
            warnings.push(Warning::new(stage, "provider returned an empty title; skipped"));
            continue;
        }
        out.push(TitleCandidate {
            title: title.to_string(),
            source,
            origin_sentence: origin.map(str::to_string),
            rank: out.len() + 1,
        });
    }
    out
}

fn correct_with(
    corrector: &dyn Corrector,
    query: &str,
    decomps: &[Decomposition],
    n_sentences: usize,
    warnings: &mut Vec<Warning>,
) -> Vec<Decomposition> {
    if decomps.is_empty() {
        return Vec::new();
    }
    let sets: Vec<Vec<String>> = decomps.iter().map(|d| d.sentences.clone()).collect();
    let corrected = match corrector.correct(query, &sets) {
        Ok(c) => c,
        Err(e) => {
            warnings.push(Warning::new(
                "correct",
                format!("corrector failed: {e}; using originals"),
            ));
            return decomps.to_vec();
        }
    };
    if corrected.len() != decomps.len() {
        warnings.push(Warning::new(
            "correct",
            format!(
                "corrector returned {} sets for {}; using originals",
                corrected.len(),
                decomps.len()
            ),
        ));
        return decomps.to_vec();
    }
    decomps
        .iter()
        .zip(corrected)
        .map(|(orig, new)| {
            if valid_set(&new, n_sentences) {
                Decomposition {
                    set_index: orig.set_index,
                    sentences: new.into_iter().map(|s| s.trim().to_string()).collect(),
                }
            } else {
                warnings.push(Warning::new(
                    "correct",
                    format!(
                        "corrected set {} has {} sentences; original kept",
                        orig.set_index,
                        new.len()
                    ),
                ));
                orig.clone()
            }
        })
        .collect()
}

/// Standalone entry point mirroring [`TitleGenerator::correct_decompositions`]
/// for an explicit corrector.
pub fn correct_decompositions(
    corrector: &dyn Corrector,
    query: &str,
    decomps: &[Decomposition],
    warnings: &mut Vec<Warning>,
) -> Vec<Decomposition> {
    let n = decomps.first().map_or(DEFAULT_SENTENCES_PER_SET, |d| d.sentences.len());
    correct_with(corrector, query, decomps, n, warnings)
}

/// Groups candidate counts by source; handy for trace summaries.
pub fn source_counts(set: &TitleSet) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for c in &set.candidates {
        *out.entry(stage_label(c.source).to_string()).or_default() += 1;
    }
    out
}

fn stage_label(source: TitleSource) -> &'static str {
    match source {
        TitleSource::EntityLinkQuery => "entity_link_query",
        TitleSource::EventLinkQuery => "event_link_query",
        TitleSource::EventLinkDecomposition => "event_link_decomposition",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(Vec<String>);

    impl Linker for Fixed {
        fn link(&self, _: &str, _: usize) -> Result<Vec<String>, ProviderError> {
            Ok(self.0.clone())
        }
    }

    struct Failing;

    impl Linker for Failing {
        fn link(&self, _: &str, _: usize) -> Result<Vec<String>, ProviderError> {
            Err(ProviderError::Timeout(10))
        }
    }

    impl Decomposer for Failing {
        fn decompose(&self, _: &str, _: usize, _: usize) -> Result<Vec<Vec<String>>, ProviderError> {
            Err(ProviderError::Unreachable("down".into()))
        }
    }

    impl Corrector for Failing {
        fn correct(&self, _: &str, _: &[Vec<String>]) -> Result<Vec<Vec<String>>, ProviderError> {
            Err(ProviderError::Timeout(10))
        }
    }

    struct Sets(Vec<Vec<String>>);

    impl Decomposer for Sets {
        fn decompose(&self, _: &str, _: usize, _: usize) -> Result<Vec<Vec<String>>, ProviderError> {
            Ok(self.0.clone())
        }
    }

    impl Corrector for Sets {
        fn correct(&self, _: &str, _: &[Vec<String>]) -> Result<Vec<Vec<String>>, ProviderError> {
            Ok(self.0.clone())
        }
    }

    /// Linker that returns titles derived from its input text, so every
    /// call produces distinct titles.
    struct Echo(&'static str);

    impl Linker for Echo {
        fn link(&self, text: &str, k: usize) -> Result<Vec<String>, ProviderError> {
            Ok((0..k).map(|i| format!("{}:{text}/{i}", self.0)).collect())
        }
    }

    fn letters(range: std::ops::RangeInclusive<char>) -> Vec<String> {
        range.map(|c| c.to_string()).collect()
    }

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    fn generator(entity: Arc<dyn Linker>, event: Arc<dyn Linker>, decomposer: Arc<dyn Decomposer>) -> TitleGenerator {
        TitleGenerator {
            entity,
            event,
            decomposer,
            corrector: None,
            budget: TitleBudget::default(),
        }
    }

    const QUERY: &str = "Did McKenna Grace vote for Joe Biden in the 2020 election?";

    #[test]
    fn union_dedups_in_first_occurrence_order() {
        let gen = generator(
            Arc::new(Fixed(letters('A'..='J'))),
            Arc::new(Fixed(letters('K'..='O'))),
            Arc::new(HeuristicDecomposer),
        );
        let out = gen.generate(QUERY).unwrap();
        assert_eq!(out.title_set.unique_titles, letters('A'..='O'));
        assert_eq!(out.decompositions.len(), 5);
        // 10 + 5 + 5 sets x 3 sentences x 5 titles
        assert_eq!(out.title_set.candidates.len(), 90);
        for c in &out.title_set.candidates {
            assert_eq!(
                c.origin_sentence.is_some(),
                c.source == TitleSource::EventLinkDecomposition
            );
        }
    }

    #[test]
    fn maximal_distinct_outputs_reach_budget() {
        let gen = generator(
            Arc::new(Echo("entity")),
            Arc::new(Echo("event")),
            Arc::new(HeuristicDecomposer),
        );
        let out = gen.generate(QUERY).unwrap();
        // the heuristic decomposer repeats sentences across sets, so use a
        // decomposer with all-distinct sentences for the maximal case
        assert!(out.title_set.len() <= 90);

        let distinct: Vec<Vec<String>> = (0..5)
            .map(|i| (0..3).map(|j| format!("hypothesis {i} {j}")).collect())
            .collect();
        let gen = generator(
            Arc::new(Echo("entity")),
            Arc::new(Echo("event")),
            Arc::new(Sets(distinct)),
        );
        let out = gen.generate(QUERY).unwrap();
        assert_eq!(out.title_set.len(), 90);
    }

    #[test]
    fn all_empty_providers() {
        let gen = generator(
            Arc::new(Fixed(vec![])),
            Arc::new(Fixed(vec![])),
            Arc::new(HeuristicDecomposer),
        );
        let out = gen.generate(QUERY).unwrap();
        assert!(out.title_set.is_empty());
        assert!(out.warnings.iter().any(|w| w.message == "no titles"));
    }

    #[test]
    fn failures_degrade() {
        let gen =
            generator(Arc::new(Failing), Arc::new(Failing), Arc::new(Failing)).with_corrector(Some(Arc::new(Failing)));
        let out = gen.generate(QUERY).unwrap();
        assert!(out.title_set.is_empty());
        assert!(out.decompositions.is_empty());
        assert!(out.warnings.iter().any(|w| w.stage == "entity_link"));
        assert!(out.warnings.iter().any(|w| w.stage == "event_link"));
        assert!(out.warnings.iter().any(|w| w.stage == "decompose"));
    }

    #[test]
    fn overflow_is_truncated() {
        let gen = generator(
            Arc::new(Fixed(letters('A'..='L'))),
            Arc::new(Fixed(vec![])),
            Arc::new(HeuristicDecomposer),
        );
        let mut w = Vec::new();
        let c = gen.entity_link(QUERY, &mut w).unwrap();
        assert_eq!(c.len(), 10);
        assert_eq!(c.last().unwrap().rank, 10);
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn empty_query_rejected() {
        let gen = TitleGenerator::builtin(["A"]);
        assert!(gen.generate("   ").is_err());
        assert!(gen.entity_link("", &mut Vec::new()).is_err());
    }

    #[test]
    fn decomposition_shape_checks() {
        let mut sets: Vec<Vec<String>> = (0..4).map(|i| s(&[&format!("a{i}"), "b", "c"])).collect();
        let gen = generator(
            Arc::new(Fixed(vec![])),
            Arc::new(Fixed(vec![])),
            Arc::new(Sets(sets.clone())),
        );
        let mut w = Vec::new();
        assert_eq!(gen.decompose(QUERY, &mut w).unwrap().len(), 4);
        assert_eq!(w.len(), 1, "{w:?}");

        sets.push(s(&["only", "two"]));
        sets.push(s(&["x", "y", "z"]));
        let gen = generator(Arc::new(Fixed(vec![])), Arc::new(Fixed(vec![])), Arc::new(Sets(sets)));
        let mut w = Vec::new();
        let d = gen.decompose(QUERY, &mut w).unwrap();
        assert_eq!(d.len(), 4);
        assert!(d.iter().all(|d| d.sentences.len() == 3));
        assert!(w.iter().any(|w| w.message.contains("set 4 has 2")));

        let dup = vec![s(&["a", "b", "c"]); 5];
        let gen = generator(Arc::new(Fixed(vec![])), Arc::new(Fixed(vec![])), Arc::new(Sets(dup)));
        assert_eq!(gen.decompose(QUERY, &mut Vec::new()).unwrap().len(), 5);
    }

    fn decomps() -> Vec<Decomposition> {
        (0..2)
            .map(|i| Decomposition {
                set_index: i,
                sentences: s(&["one", "two", "three"]),
            })
            .collect()
    }

    #[test]
    fn identity_corrector() {
        let mut w = Vec::new();
        assert_eq!(
            correct_decompositions(&IdentityCorrector, "q", &decomps(), &mut w),
            decomps()
        );
        assert!(w.is_empty());
    }

    #[test]
    fn corrector_rewrite_and_shape_guard() {
        let fixed = Sets(vec![s(&["one", "TWO", "three"]), s(&["only", "two"])]);
        let mut w = Vec::new();
        let out = correct_decompositions(&fixed, "q", &decomps(), &mut w);
        assert_eq!(out[0].sentences, s(&["one", "TWO", "three"]));
        assert_eq!(out[1], decomps()[1]);
        assert_eq!(w.len(), 1);

        let mut w = Vec::new();
        assert_eq!(correct_decompositions(&Failing, "q", &decomps(), &mut w), decomps());
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn identity_corrector_does_not_change_titles() {
        let gen = TitleGenerator::builtin([
            "Joe Biden",
            "McKenna Grace",
            "2020 United States presidential election",
            "Voting age",
        ]);
        let plain = gen.generate(QUERY).unwrap();
        let corrected = gen
            .clone()
            .with_corrector(Some(Arc::new(IdentityCorrector)))
            .generate(QUERY)
            .unwrap();
        assert_eq!(plain.title_set, corrected.title_set);
    }

    #[test]
    fn lexical_linker_rules() {
        let linker = LexicalLinker::new(["Joe Biden", "Joe Pesci", "Biden family", "Paris"]);
        let got = linker.link("Did she vote for Joe Biden?", 10).unwrap();
        assert_eq!(got[0], "Joe Biden");
        assert!(!got.contains(&"Paris".to_string()));
        assert!(linker.link("nothing relevant", 10).unwrap().is_empty());
        // "Biden family" and "Joe Pesci" both overlap 1/2: alphabetical
        assert_eq!(got[1..], ["Biden family".to_string(), "Joe Pesci".to_string()]);
        assert_eq!(linker.link("Joe Biden", 1).unwrap(), vec!["Joe Biden"]);
    }

    #[test]
    fn heuristic_decomposer_shape() {
        let sets = HeuristicDecomposer.decompose(QUERY, 5, 3).unwrap();
        assert_eq!(sets.len(), 5);
        assert!(sets.iter().all(|s| s.len() == 3 && s.iter().all(|x| !x.is_empty())));
        assert_eq!(HeuristicDecomposer.decompose(QUERY, 5, 3).unwrap(), sets);
        assert!(HeuristicDecomposer.decompose("the of a", 5, 3).is_err());
    }

    #[test]
    fn provenance_is_complete() {
        let gen = TitleGenerator::builtin(["Joe Biden", "McKenna Grace", "Election"]);
        let out = gen.generate(QUERY).unwrap();
        for t in &out.title_set.unique_titles {
            assert!(!out.title_set.provenance(t).is_empty());
        }
        let counts = source_counts(&out.title_set);
        assert_eq!(counts.values().sum::<usize>(), out.title_set.candidates.len());
    }

    #[test]
    fn config_defaults_and_budget() {
        let cfg = ProviderConfig::default();
        assert_eq!(cfg.title_budget(), 90);
        let parsed: ProviderConfig =
            serde_json::from_str(r#"{"entity_link": {"http": "http://127.0.0.1:1/"}, "correct": "builtin"}"#).unwrap();
        assert_eq!(parsed.n_entity, 10);
        assert_eq!(parsed.correct, Some(Endpoint::Builtin));
        assert!(ProviderConfig { n_sets: 0, ..cfg }.validate().is_err());
    }
}
