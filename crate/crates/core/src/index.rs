//! Tokenization, BM25 scoring and the on-disk inverted index used for
//! coarse filtering.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;
use std::sync::OnceLock;

use rayon::prelude::*;
use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use crate::corpus::PassageStore;
use crate::error::{Error, Result};

pub const INDEX_FORMAT: &str = "pagelink-index";
pub const INDEX_FORMAT_VERSION: u32 = 1;

const MANIFEST_FILE: &str = "manifest.json";
const PASSAGES_FILE: &str = "passages.jsonl";
const TERMS_FILE: &str = "terms.tsv";
const POSTINGS_FILE: &str = "postings.bin";
const DOCLENS_FILE: &str = "doclens.bin";

/// The fixed 30-word stopword list shared by the tokenizer option and the
/// lexical relevance baseline.
pub fn stopwords() -> &'static HashSet<&'static str> {
    static WORDS: OnceLock<HashSet<&'static str>> = OnceLock::new();
    WORDS.get_or_init(|| {
        include_str!("../data/stopwords.txt")
            .lines()
            .map(str::trim)
            .filter(|w| !w.is_empty())
            .collect()
    })
}

/// Lowercases and splits on non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    #[serde(default)]
    pub stem: bool,
    #[serde(default)]
    pub remove_stopwords: bool,
}

impl TokenizerConfig {
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let mut tokens = tokenize(text);
        if self.remove_stopwords {
            let stop = stopwords();
            tokens.retain(|t| !stop.contains(t.as_str()));
        }
        if self.stem {
            let stemmer = english_stemmer();
            for t in &mut tokens {
                let stemmed = stemmer.stem(t).into_owned();
                *t = stemmed;
            }
        }
        tokens
    }
}

fn english_stemmer() -> &'static Stemmer {
    static STEMMER: OnceLock<Stemmer> = OnceLock::new();
    STEMMER.get_or_init(|| Stemmer::create(Algorithm::English))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 0.9, b: 0.4 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 >= 0.0 && self.k1.is_finite()) {
            return Err(Error::Config(format!("k1 must be >= 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::Config(format!("b must be in [0, 1], got {}", self.b)));
        }
        Ok(())
    }

    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`, positive for every df.
    pub fn idf(df: usize, passage_count: usize) -> f64 {
        let df = df as f64;
        (1.0 + (passage_count as f64 - df + 0.5) / (df + 0.5)).ln()
    }

    /// Contribution of one query term occurring `tf` times in a passage of
    /// `doc_len` tokens.
    pub fn term_score(&self, tf: u32, df: usize, doc_len: u32, passage_count: usize, avgdl: f64) -> f64 {
        let tf = f64::from(tf);
        let norm = 1.0 - self.b + self.b * f64::from(doc_len) / avgdl;
        Self::idf(df, passage_count) * tf * (self.k1 + 1.0) / (tf + self.k1 * norm)
    }
}

/// Collection-level statistics needed by BM25.
pub trait CollectionStats {
    fn passage_count(&self) -> usize;
    fn avgdl(&self) -> f64;
    fn df(&self, term: &str) -> usize;
}

/// Standalone statistics, built directly from token lists.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IndexStats {
    pub passage_count: usize,
    pub total_tokens: u64,
    pub df: HashMap<String, usize>,
}

impl IndexStats {
    pub fn from_token_lists<'a, I>(docs: I) -> Self
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut stats = IndexStats::default();
        for tokens in docs {
            stats.passage_count += 1;
            stats.total_tokens += tokens.len() as u64;
            let unique: HashSet<&String> = tokens.iter().collect();
            for t in unique {
                *stats.df.entry(t.clone()).or_default() += 1;
            }
        }
        stats
    }
}

fn average_length(total_tokens: u64, passage_count: usize) -> f64 {
    if passage_count == 0 {
        0.0
    } else {
        total_tokens as f64 / passage_count as f64
    }
}

impl CollectionStats for IndexStats {
    fn passage_count(&self) -> usize {
        self.passage_count
    }
    fn avgdl(&self) -> f64 {
        average_length(self.total_tokens, self.passage_count)
    }
    fn df(&self, term: &str) -> usize {
        self.df.get(term).copied().unwrap_or(0)
    }
}

/// BM25 score of one tokenized passage. Query terms are summed in order, so
/// a repeated query term contributes once per occurrence.
pub fn bm25_score<S: CollectionStats>(
    query_terms: &[String],
    passage_tokens: &[String],
    stats: &S,
    params: &Bm25Params,
) -> f64 {
    let doc_len = passage_tokens.len() as u32;
    let avgdl = stats.avgdl();
    let n = stats.passage_count();
    let mut score = 0.0;
    for term in query_terms {
        let tf = passage_tokens.iter().filter(|t| *t == term).count() as u32;
        if tf == 0 {
            continue;
        }
        score += params.term_score(tf, stats.df(term), doc_len, n, avgdl);
    }
    score
}

/// One coarse-filtering hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPassage {
    pub passage_id: String,
    pub page_title: String,
    pub bm25_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub format: String,
    pub version: u32,
    pub params: Bm25Params,
    pub tokenizer: TokenizerConfig,
    pub corpus_checksum: String,
    pub passage_count: usize,
    pub avgdl: f64,
    pub total_tokens: u64,
    pub term_count: usize,
}

/// Inverted index over a [`PassageStore`].
///
/// Document numbers are positions in the store's passage vector, so page
/// restriction reduces to a set of contiguous ranges.
#[derive(Debug, Clone)]
pub struct InvertedIndex {
    params: Bm25Params,
    tokenizer: TokenizerConfig,
    corpus_checksum: String,
    dictionary: HashMap<String, u32>,
    postings: Vec<Vec<(u32, u32)>>,
    doc_lens: Vec<u32>,
    total_tokens: u64,
    passage_ids: Vec<String>,
    page_titles: Vec<String>,
    pages: HashMap<String, Range<u32>>,
    /// Rank of each document in ascending passage-id order.
    pid_rank: Vec<u32>,
    /// Documents in ascending passage-id order.
    pid_order: Vec<u32>,
}

impl InvertedIndex {
    pub fn build(store: &PassageStore, params: Bm25Params, tokenizer: TokenizerConfig) -> Result<Self> {
        params.validate()?;
        let token_lists: Vec<Vec<String>> = store
            .passages()
            .par_iter()
            .map(|p| tokenizer.tokenize(&p.text))
            .collect();

        let mut by_term: BTreeMap<&str, Vec<(u32, u32)>> = BTreeMap::new();
        let mut doc_lens = Vec::with_capacity(token_lists.len());
        let mut total_tokens = 0u64;
        for (doc, tokens) in token_lists.iter().enumerate() {
            doc_lens.push(tokens.len() as u32);
            total_tokens += tokens.len() as u64;
            let mut tf: HashMap<&str, u32> = HashMap::new();
            for t in tokens {
                *tf.entry(t.as_str()).or_default() += 1;
            }
            for (term, count) in tf {
                by_term.entry(term).or_default().push((doc as u32, count));
            }
        }

        let mut dictionary = HashMap::with_capacity(by_term.len());
        let mut postings = Vec::with_capacity(by_term.len());
        for (id, (term, list)) in by_term.into_iter().enumerate() {
            dictionary.insert(term.to_string(), id as u32);
            postings.push(list);
        }

        Ok(Self::assemble(
            store,
            params,
            tokenizer,
            dictionary,
            postings,
            doc_lens,
            total_tokens,
        ))
    }

    fn assemble(
        store: &PassageStore,
        params: Bm25Params,
        tokenizer: TokenizerConfig,
        dictionary: HashMap<String, u32>,
        postings: Vec<Vec<(u32, u32)>>,
        doc_lens: Vec<u32>,
        total_tokens: u64,
    ) -> Self {
        let passage_ids: Vec<String> = store.passages().iter().map(|p| p.passage_id.clone()).collect();
        let page_titles = store.passages().iter().map(|p| p.page_title.clone()).collect();
        let pages = store
            .titles()
            .map(|t| {
                let r = store.page_range(t).expect("title from store");
                (t.to_string(), r.start as u32..r.end as u32)
            })
            .collect();
        let mut pid_order: Vec<u32> = (0..passage_ids.len() as u32).collect();
        pid_order.sort_by(|&a, &b| passage_ids[a as usize].cmp(&passage_ids[b as usize]));
        let mut pid_rank = vec![0u32; passage_ids.len()];
        for (rank, &doc) in pid_order.iter().enumerate() {
            pid_rank[doc as usize] = rank as u32;
        }
        Self {
            params,
            tokenizer,
            corpus_checksum: store.checksum().to_string(),
            dictionary,
            postings,
            doc_lens,
            total_tokens,
            passage_ids,
            page_titles,
            pages,
            pid_rank,
            pid_order,
        }
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn tokenizer(&self) -> TokenizerConfig {
        self.tokenizer
    }

    pub fn corpus_checksum(&self) -> &str {
        &self.corpus_checksum
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    pub fn manifest(&self) -> IndexManifest {
        IndexManifest {
            format: INDEX_FORMAT.to_string(),
            version: INDEX_FORMAT_VERSION,
            params: self.params,
            tokenizer: self.tokenizer,
            corpus_checksum: self.corpus_checksum.clone(),
            passage_count: self.doc_lens.len(),
            avgdl: self.avgdl(),
            total_tokens: self.total_tokens,
            term_count: self.postings.len(),
        }
    }

    /// Number of passages belonging to the given pages; unknown titles
    /// count as zero.
    pub fn pool_size<S: AsRef<str>>(&self, titles: &[S]) -> usize {
        self.eligible_ranges(titles)
            .iter()
            .map(|r| (r.end - r.start) as usize)
            .sum()
    }

    fn eligible_ranges<S: AsRef<str>>(&self, titles: &[S]) -> Vec<Range<u32>> {
        let mut ranges: Vec<Range<u32>> = titles
            .iter()
            .filter_map(|t| self.pages.get(t.as_ref()).cloned())
            .filter(|r| !r.is_empty())
            .collect();
        ranges.sort_by_key(|r| r.start);
        ranges.dedup();
        ranges
    }

    /// Top `k` passages for `query` by BM25, descending, ties broken by
    /// ascending passage id.
    ///
    /// With `restrict_titles`, only passages of those pages are eligible;
    /// collection statistics always cover the full corpus. When fewer than
    /// `k` eligible passages score above zero, the remainder is filled with
    /// zero-score passages in ascending passage-id order.
    pub fn top_k<S: AsRef<str>>(&self, query: &str, k: usize, restrict_titles: Option<&[S]>) -> Vec<ScoredPassage> {
        assert!(k >= 1, "top_k requires k >= 1");
        let ranges = restrict_titles.map(|t| self.eligible_ranges(t));
        if matches!(&ranges, Some(r) if r.is_empty()) {
            return Vec::new();
        }
        let eligible = |doc: u32| match &ranges {
            None => true,
            Some(rs) => {
                let i = rs.partition_point(|r| r.end <= doc);
                i < rs.len() && rs[i].start <= doc
            }
        };

        let n = self.doc_lens.len();
        let avgdl = self.avgdl();
        let mut acc: HashMap<u32, f64> = HashMap::new();
        for term in self.tokenizer.tokenize(query) {
            let Some(&id) = self.dictionary.get(&term) else {
                continue;
            };
            let list = &self.postings[id as usize];
            let df = list.len();
            for &(doc, tf) in list {
                if !eligible(doc) {
                    continue;
                }
                *acc.entry(doc).or_insert(0.0) += self.params.term_score(tf, df, self.doc_lens[doc as usize], n, avgdl);
            }
        }

        let mut hits: Vec<(u32, f64)> = acc.into_iter().filter(|&(_, s)| s > 0.0).collect();
        let order = |a: &(u32, f64), b: &(u32, f64)| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.pid_rank[a.0 as usize].cmp(&self.pid_rank[b.0 as usize]))
        };
        if hits.len() > k {
            hits.select_nth_unstable_by(k - 1, order);
            hits.truncate(k);
        }
        hits.sort_unstable_by(order);

        if hits.len() < k {
            let scored: HashSet<u32> = hits.iter().map(|&(d, _)| d).collect();
            let need = k - hits.len();
            let padding: Vec<u32> = match &ranges {
                None => self
                    .pid_order
                    .iter()
                    .copied()
                    .filter(|d| !scored.contains(d))
                    .take(need)
                    .collect(),
                Some(rs) => {
                    let mut pool: Vec<u32> = rs
                        .iter()
                        .flat_map(|r| r.clone())
                        .filter(|d| !scored.contains(d))
                        .collect();
                    pool.sort_unstable_by_key(|&d| self.pid_rank[d as usize]);
                    pool.truncate(need);
                    pool
                }
            };
            hits.extend(padding.into_iter().map(|d| (d, 0.0)));
        }

        hits.into_iter()
            .map(|(doc, score)| ScoredPassage {
                passage_id: self.passage_ids[doc as usize].clone(),
                page_title: self.page_titles[doc as usize].clone(),
                bm25_score: score,
            })
            .collect()
    }

    /// Writes the index directory: manifest, passage store, term dictionary,
    /// postings and document lengths.
    pub fn save(&self, dir: &Path, store: &PassageStore) -> Result<()> {
        if store.checksum() != self.corpus_checksum {
            return Err(Error::Format("passage store does not match index".into()));
        }
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

        let path = dir.join(MANIFEST_FILE);
        let mut manifest = serde_json::to_string_pretty(&self.manifest()).expect("manifest serializes");
        manifest.push('\n');
        fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;

        store.save(&dir.join(PASSAGES_FILE))?;

        let mut by_id: Vec<(&str, u32)> = self.dictionary.iter().map(|(t, &id)| (t.as_str(), id)).collect();
        by_id.sort_unstable();

        let terms_path = dir.join(TERMS_FILE);
        let postings_path = dir.join(POSTINGS_FILE);
        let write = || -> std::io::Result<()> {
            let mut terms = BufWriter::new(fs::File::create(&terms_path)?);
            let mut postings = BufWriter::new(fs::File::create(&postings_path)?);
            for (term, id) in by_id {
                let list = &self.postings[id as usize];
                writeln!(terms, "{term}\t{}", list.len())?;
                for &(doc, tf) in list {
                    postings.write_all(&doc.to_le_bytes())?;
                    postings.write_all(&tf.to_le_bytes())?;
                }
            }
            terms.flush()?;
            postings.flush()
        };
        write().map_err(|e| Error::io(dir, e))?;

        let lens_path = dir.join(DOCLENS_FILE);
        let bytes: Vec<u8> = self.doc_lens.iter().flat_map(|l| l.to_le_bytes()).collect();
        fs::write(&lens_path, bytes).map_err(|e| Error::io(&lens_path, e))?;
        Ok(())
    }

    /// Loads an index directory together with its passage store.
    pub fn load(dir: &Path) -> Result<(Self, PassageStore)> {
        let path = dir.join(MANIFEST_FILE);
        let raw = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: IndexManifest =
            serde_json::from_str(&raw).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if manifest.format != INDEX_FORMAT || manifest.version != INDEX_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "{}: unsupported index {} v{}",
                path.display(),
                manifest.format,
                manifest.version
            )));
        }
        manifest.params.validate()?;

        let store = PassageStore::load(&dir.join(PASSAGES_FILE))?;
        if store.checksum() != manifest.corpus_checksum || store.len() != manifest.passage_count {
            return Err(Error::Format(format!(
                "{}: passage store does not match manifest",
                dir.display()
            )));
        }

        let lens_path = dir.join(DOCLENS_FILE);
        let lens_raw = fs::read(&lens_path).map_err(|e| Error::io(&lens_path, e))?;
        if lens_raw.len() != 4 * manifest.passage_count {
            return Err(Error::Format(format!("{}: wrong length", lens_path.display())));
        }
        let doc_lens: Vec<u32> = lens_raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let total_tokens: u64 = doc_lens.iter().map(|&l| u64::from(l)).sum();
        if total_tokens != manifest.total_tokens {
            return Err(Error::Format(format!("{}: token total mismatch", lens_path.display())));
        }

        let terms_path = dir.join(TERMS_FILE);
        let postings_path = dir.join(POSTINGS_FILE);
        let terms = BufReader::new(fs::File::open(&terms_path).map_err(|e| Error::io(&terms_path, e))?);
        let mut postings_in = BufReader::new(fs::File::open(&postings_path).map_err(|e| Error::io(&postings_path, e))?);
        let mut dictionary = HashMap::with_capacity(manifest.term_count);
        let mut postings = Vec::with_capacity(manifest.term_count);
        let mut pair = [0u8; 8];
        for (i, line) in terms.lines().enumerate() {
            let line = line.map_err(|e| Error::io(&terms_path, e))?;
            let (term, df) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(i + 1, format!("{}: bad term line", terms_path.display())))?;
            let df: usize = df
                .parse()
                .map_err(|_| Error::parse(i + 1, format!("{}: bad df", terms_path.display())))?;
            let mut list = Vec::with_capacity(df);
            for _ in 0..df {
                postings_in
                    .read_exact(&mut pair)
                    .map_err(|e| Error::io(&postings_path, e))?;
                let doc = u32::from_le_bytes(pair[..4].try_into().unwrap());
                let tf = u32::from_le_bytes(pair[4..].try_into().unwrap());
                if doc as usize >= doc_lens.len() {
                    return Err(Error::Format(format!("{}: doc out of range", postings_path.display())));
                }
                list.push((doc, tf));
            }
            dictionary.insert(term.to_string(), postings.len() as u32);
            postings.push(list);
        }
        if postings.len() != manifest.term_count {
            return Err(Error::Format(format!("{}: term count mismatch", terms_path.display())));
        }

        let index = Self::assemble(
            &store,
            manifest.params,
            manifest.tokenizer,
            dictionary,
            postings,
            doc_lens,
            total_tokens,
        );
        Ok((index, store))
    }
}

impl CollectionStats for InvertedIndex {
    fn passage_count(&self) -> usize {
        self.doc_lens.len()
    }
    fn avgdl(&self) -> f64 {
        average_length(self.total_tokens, self.doc_lens.len())
    }
    fn df(&self, term: &str) -> usize {
        self.dictionary
            .get(term)
            .map(|&id| self.postings[id as usize].len())
            .unwrap_or(0)
    }
}
