//! Splits a JSONL corpus into 100-word passages.
//!
//! ```text
//! cargo run --example chunk_corpus [corpus.jsonl]
//! ```

use std::path::PathBuf;

use pagelink::corpus::ingest_corpus_file;

fn main() -> pagelink::Result<()> {
    let path = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synthetic/corpus.jsonl"));
    let store = ingest_corpus_file(&path)?;
    let stats = store.stats();
    println!(
        "{} documents, {} passages, checksum {}",
        stats.documents,
        store.len(),
        store.checksum()
    );

    let title = store.titles().next().expect("empty corpus").to_string();
    for p in store.page(&title).unwrap().iter().take(3) {
        let preview: String = p.text.chars().take(60).collect();
        println!("{:<28} {:>3} words  {preview}...", p.passage_id, p.word_count);
    }
    Ok(())
}
