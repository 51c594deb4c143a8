//! Page corpus ingest and 100-word passage chunking.
//!
//! Pages are split into fixed blocks of [`PASSAGE_WORDS`] words, where a
//! word is a maximal run of non-whitespace characters. Blocks never
//! overlap and do not carry the page title in their text.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::ops::Range;

use percent_encoding::{utf8_percent_encode, AsciiSet, CONTROLS};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Words per passage block.
pub const PASSAGE_WORDS: usize = 100;

/// Version tag written into the passage store header.
pub const STORE_FORMAT_VERSION: u32 = 1;

// Everything outside unreserved URL characters is escaped, so `#` and `%`
// inside titles can never collide with the id separator.
const TITLE_ESCAPE: &AsciiSet = &CONTROLS
    .add(b' ')
    .add(b'!')
    .add(b'"')
    .add(b'#')
    .add(b'$')
    .add(b'%')
    .add(b'&')
    .add(b'\'')
    .add(b'(')
    .add(b')')
    .add(b'*')
    .add(b'+')
    .add(b',')
    .add(b'/')
    .add(b':')
    .add(b';')
    .add(b'<')
    .add(b'=')
    .add(b'>')
    .add(b'?')
    .add(b'@')
    .add(b'[')
    .add(b'\\')
    .add(b']')
    .add(b'^')
    .add(b'`')
    .add(b'{')
    .add(b'|')
    .add(b'}');

/// A titled page as read from the corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    #[serde(rename = "id")]
    pub doc_id: String,
    pub title: String,
    pub text: String,
}

/// A contiguous block of at most 100 words from one page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    #[serde(rename = "pid")]
    pub passage_id: String,
    #[serde(rename = "title")]
    pub page_title: String,
    #[serde(rename = "block")]
    pub block_index: usize,
    pub text: String,
    #[serde(rename = "wc")]
    pub word_count: usize,
}

/// Deterministic passage id: `<percent-encoded title>#<block index>`.
pub fn passage_id(title: &str, block_index: usize) -> String {
    format!("{}#{block_index}", utf8_percent_encode(title, TITLE_ESCAPE))
}

/// Splits a page into 100-word blocks. Inter-word whitespace is
/// normalized to a single space.
pub fn chunk_document(doc: &Document) -> Vec<Passage> {
    let words: Vec<&str> = doc.text.split_whitespace().collect();
    words
        .chunks(PASSAGE_WORDS)
        .enumerate()
        .map(|(block_index, block)| Passage {
            passage_id: passage_id(&doc.title, block_index),
            page_title: doc.title.clone(),
            block_index,
            text: block.join(" "),
            word_count: block.len(),
        })
        .collect()
}

/// Counters collected while ingesting a corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub documents: usize,
    pub passages: usize,
    pub words: usize,
}

/// Result of looking up a set of titles.
#[derive(Debug, Clone, Default)]
pub struct TitleLookup<'a> {
    pub passages: Vec<&'a Passage>,
    pub missing: Vec<String>,
}

/// Immutable passage collection keyed by page title.
///
/// Passages are held sorted by `(page_title, block_index)`; each title maps
/// to a contiguous range of that vector, which is empty for pages without
/// text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PassageStore {
    passages: Vec<Passage>,
    by_title: BTreeMap<String, Range<usize>>,
    by_id: HashMap<String, usize>,
    stats: IngestStats,
    checksum: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct StoreHeader {
    format: String,
    version: u32,
    checksum: String,
    documents: usize,
    titles: Vec<String>,
}

const STORE_FORMAT: &str = "pagelink-passages";

impl PassageStore {
    /// Builds a store from already-chunked pages. `pages` maps title to the
    /// page's passages in block order.
    fn from_pages(pages: BTreeMap<String, Vec<Passage>>, stats: IngestStats, checksum: String) -> Self {
        let mut passages = Vec::with_capacity(stats.passages);
        let mut by_title = BTreeMap::new();
        for (title, page) in pages {
            let start = passages.len();
            passages.extend(page);
            by_title.insert(title, start..passages.len());
        }
        let by_id = passages
            .iter()
            .enumerate()
            .map(|(i, p)| (p.passage_id.clone(), i))
            .collect();
        Self {
            passages,
            by_title,
            by_id,
            stats,
            checksum,
        }
    }

    /// Builds a store from in-memory documents. Rejects duplicate ids and
    /// titles like [`ingest_corpus`] does.
    pub fn from_documents<I>(docs: I) -> Result<Self>
    where
        I: IntoIterator<Item = Document>,
    {
        let mut builder = StoreBuilder::default();
        for (i, doc) in docs.into_iter().enumerate() {
            let line = serde_json::to_string(&doc).expect("document serializes");
            builder.hasher.update(line.as_bytes());
            builder.hasher.update(b"\n");
            builder.add(doc, i + 1)?;
        }
        Ok(builder.finish())
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    /// Titles in ascending order, including pages with no passages.
    pub fn titles(&self) -> impl Iterator<Item = &str> {
        self.by_title.keys().map(String::as_str)
    }

    pub fn title_count(&self) -> usize {
        self.by_title.len()
    }

    pub fn contains_title(&self, title: &str) -> bool {
        self.by_title.contains_key(title)
    }

    /// Passages of one page in block order; `None` if the title is unknown.
    pub fn page(&self, title: &str) -> Option<&[Passage]> {
        self.by_title.get(title).map(|r| &self.passages[r.clone()])
    }

    /// Index range of a page inside [`passages`](Self::passages).
    pub fn page_range(&self, title: &str) -> Option<Range<usize>> {
        self.by_title.get(title).cloned()
    }

    pub fn get(&self, passage_id: &str) -> Option<&Passage> {
        self.by_id.get(passage_id).map(|&i| &self.passages[i])
    }

    pub fn position(&self, passage_id: &str) -> Option<usize> {
        self.by_id.get(passage_id).copied()
    }

    pub fn stats(&self) -> IngestStats {
        self.stats
    }

    /// SHA-256 over the ingested corpus records, hex encoded.
    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    /// Union of the passages of the given titles, in store order. Unknown
    /// titles are reported in `missing` (sorted) rather than failing.
    pub fn passages_for_titles<'a, I, S>(&'a self, titles: I) -> TitleLookup<'a>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut ranges = Vec::new();
        let mut missing = Vec::new();
        let mut seen = HashSet::new();
        for title in titles {
            let title = title.as_ref();
            if !seen.insert(title.to_string()) {
                continue;
            }
            match self.by_title.get(title) {
                Some(r) => ranges.push(r.clone()),
                None => missing.push(title.to_string()),
            }
        }
        ranges.sort_by_key(|r| r.start);
        missing.sort();
        let passages = ranges.into_iter().flat_map(|r| self.passages[r].iter()).collect();
        TitleLookup { passages, missing }
    }

    /// Writes the store as JSON lines: one header line, then one passage per
    /// line sorted by `(title, block)`.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header = StoreHeader {
            format: STORE_FORMAT.to_string(),
            version: STORE_FORMAT_VERSION,
            checksum: self.checksum.clone(),
            documents: self.stats.documents,
            titles: self
                .by_title
                .iter()
                .filter(|(_, r)| r.is_empty())
                .map(|(t, _)| t.clone())
                .collect(),
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for p in &self.passages {
            serde_json::to_writer(&mut out, p)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    /// Reads a store written by [`write_to`](Self::write_to).
    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header_line = match lines.next() {
            Some(line) => line?,
            None => return Err(Error::parse(1, "missing passage store header")),
        };
        let header: StoreHeader = serde_json::from_str(&header_line).map_err(|e| Error::parse(1, e.to_string()))?;
        if header.format != STORE_FORMAT || header.version != STORE_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported passage store {} v{}",
                header.format, header.version
            )));
        }
        let mut pages: BTreeMap<String, Vec<Passage>> = header.titles.into_iter().map(|t| (t, Vec::new())).collect();
        let mut stats = IngestStats {
            documents: header.documents,
            ..IngestStats::default()
        };
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let p: Passage = serde_json::from_str(&line).map_err(|e| Error::parse(i + 2, e.to_string()))?;
            stats.passages += 1;
            stats.words += p.word_count;
            let page = pages.entry(p.page_title.clone()).or_default();
            if p.block_index != page.len() {
                return Err(Error::parse(
                    i + 2,
                    format!("passage {} out of block order", p.passage_id),
                ));
            }
            page.push(p);
        }
        Ok(Self::from_pages(pages, stats, header.checksum))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

#[derive(Default)]
struct StoreBuilder {
    pages: BTreeMap<String, Vec<Passage>>,
    doc_ids: HashSet<String>,
    stats: IngestStats,
    hasher: Sha256,
}

impl StoreBuilder {
    fn add(&mut self, doc: Document, line: usize) -> Result<()> {
        if doc.title.is_empty() {
            return Err(Error::parse(line, "empty title"));
        }
        if !self.doc_ids.insert(doc.doc_id.clone()) {
            return Err(Error::DuplicateDocId(doc.doc_id));
        }
        if self.pages.contains_key(&doc.title) {
            return Err(Error::DuplicateTitle(doc.title));
        }
        let passages = chunk_document(&doc);
        self.stats.documents += 1;
        self.stats.passages += passages.len();
        self.stats.words += passages.iter().map(|p| p.word_count).sum::<usize>();
        self.pages.insert(doc.title, passages);
        Ok(())
    }

    fn finish(self) -> PassageStore {
        let checksum = hex(&self.hasher.finalize());
        PassageStore::from_pages(self.pages, self.stats, checksum)
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads a JSON-lines corpus (`{"id", "title", "text"}` per line) in a
/// single pass and chunks every page.
///
/// Blank lines are skipped. A malformed record, a duplicate id or a
/// duplicate title aborts the ingest.
pub fn ingest_corpus<R: BufRead>(mut source: R) -> Result<PassageStore> {
    let mut builder = StoreBuilder::default();
    let mut buf = String::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        if source.read_line(&mut buf)? == 0 {
            break;
        }
        line_no += 1;
        let record = buf.trim_end_matches(['\n', '\r']);
        builder.hasher.update(record.as_bytes());
        builder.hasher.update(b"\n");
        if record.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(record).map_err(|e| Error::parse(line_no, e.to_string()))?;
        builder.add(doc, line_no)?;
    }
    Ok(builder.finish())
}

pub fn ingest_corpus_file(path: &std::path::Path) -> Result<PassageStore> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_corpus(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(title: &str, words: usize) -> Document {
        Document {
            doc_id: format!("d-{title}"),
            title: title.to_string(),
            text: (0..words).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" "),
        }
    }

    fn corpus_line(id: &str, title: &str, text: &str) -> String {
        serde_json::json!({"id": id, "title": title, "text": text}).to_string()
    }

    #[test]
    fn chunk_sizes() {
        let sizes = |n| {
            chunk_document(&doc("A", n))
                .iter()
                .map(|p| p.word_count)
                .collect::<Vec<_>>()
        };
        assert_eq!(sizes(250), vec![100, 100, 50]);
        assert_eq!(sizes(230), vec![100, 100, 30]);
        assert_eq!(sizes(100), vec![100]);
        assert_eq!(sizes(99), vec![99]);
        assert!(sizes(0).is_empty());
    }

    #[test]
    fn whitespace_only_page_has_no_passages() {
        let d = Document {
            doc_id: "1".into(),
            title: "Blank".into(),
            text: " \t\n\u{00a0} ".into(),
        };
        assert!(chunk_document(&d).is_empty());
    }

    #[test]
    fn whitespace_is_normalized() {
        let d = Document {
            doc_id: "1".into(),
            title: "T".into(),
            text: "  alpha\t\tbeta\n gamma  ".into(),
        };
        let ps = chunk_document(&d);
        assert_eq!(ps[0].text, "alpha beta gamma");
        assert_eq!(ps[0].word_count, 3);
    }

    #[test]
    fn passage_ids_escape_titles() {
        assert_eq!(passage_id("Joe Biden", 2), "Joe%20Biden#2");
        assert_eq!(passage_id("C#", 0), "C%23#0");
        assert_eq!(passage_id("100%", 1), "100%25#1");
    }

    #[test]
    fn ingest_single_record() {
        let text = (0..230).map(|i| format!("t{i}")).collect::<Vec<_>>().join(" ");
        let input = corpus_line("1", "Page", &text);
        let store = ingest_corpus(input.as_bytes()).unwrap();
        let page = store.page("Page").unwrap();
        assert_eq!(
            page.iter().map(|p| p.word_count).collect::<Vec<_>>(),
            vec![100, 100, 30]
        );
        assert_eq!(
            store.stats(),
            IngestStats {
                documents: 1,
                passages: 3,
                words: 230
            }
        );
    }

    #[test]
    fn ingest_exactly_one_block() {
        let text = vec!["x"; 100].join(" ");
        let store = ingest_corpus(corpus_line("1", "P", &text).as_bytes()).unwrap();
        let page = store.page("P").unwrap();
        assert_eq!(page.len(), 1);
        assert_eq!(page[0].block_index, 0);
    }

    #[test]
    fn empty_page_keeps_title() {
        let store = ingest_corpus(corpus_line("1", "Empty", "").as_bytes()).unwrap();
        assert!(store.contains_title("Empty"));
        assert_eq!(store.page("Empty").unwrap().len(), 0);
        let lookup = store.passages_for_titles(["Empty"]);
        assert!(lookup.passages.is_empty());
        assert!(lookup.missing.is_empty());
    }

    #[test]
    fn malformed_record_reports_line() {
        let input = format!("{}\n\n{{\"id\": 3}}\n", corpus_line("1", "A", "a"));
        match ingest_corpus(input.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_title_is_fatal() {
        let input = format!("{}\n{}\n", corpus_line("1", "A", "a"), corpus_line("2", "A", "b"));
        match ingest_corpus(input.as_bytes()) {
            Err(Error::DuplicateTitle(t)) => assert_eq!(t, "A"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_doc_id_is_fatal() {
        let input = format!("{}\n{}\n", corpus_line("1", "A", "a"), corpus_line("1", "B", "b"));
        assert!(matches!(ingest_corpus(input.as_bytes()), Err(Error::DuplicateDocId(_))));
    }

    #[test]
    fn title_lookup() {
        let store = PassageStore::from_documents([doc("A", 250), doc("B", 10), doc("C", 120)]).unwrap();
        let lookup = store.passages_for_titles(["A", "Z"]);
        assert_eq!(lookup.passages.len(), 3);
        assert_eq!(lookup.missing, vec!["Z".to_string()]);

        assert!(store.passages_for_titles(Vec::<String>::new()).passages.is_empty());

        let all: Vec<&str> = store.titles().collect();
        assert_eq!(store.passages_for_titles(all).passages.len(), store.len());
    }

    #[test]
    fn store_round_trip() {
        let store = PassageStore::from_documents([
            doc("Beta", 130),
            doc("Alpha", 3),
            Document {
                doc_id: "e".into(),
                title: "Empty".into(),
                text: String::new(),
            },
        ])
        .unwrap();
        let mut buf = Vec::new();
        store.write_to(&mut buf).unwrap();
        let back = PassageStore::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, store);
        assert!(back.contains_title("Empty"));

        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn ingest_is_deterministic() {
        let input = format!(
            "{}\n{}\n",
            corpus_line("2", "Zeta", "one two three"),
            corpus_line("1", "Alpha", "four five")
        );
        let a = ingest_corpus(input.as_bytes()).unwrap();
        let b = ingest_corpus(input.as_bytes()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.checksum(), b.checksum());
        assert_eq!(a.passages()[0].page_title, "Alpha");
    }
}
