//! BM25 top-k over the whole corpus and over a handful of pages.

use std::path::Path;

use pagelink::corpus::ingest_corpus_file;
use pagelink::index::{Bm25Params, InvertedIndex, TokenizerConfig};

fn main() -> pagelink::Result<()> {
    let corpus = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synthetic/corpus.jsonl");
    let store = ingest_corpus_file(&corpus)?;
    let index = InvertedIndex::build(&store, Bm25Params::default(), TokenizerConfig::default())?;

    let query = "What is the emblem of Moukais Vethtal?";
    println!("full corpus:");
    for hit in index.top_k(query, 5, None::<&[String]>) {
        println!("  {:.4}  {}", hit.bm25_score, hit.passage_id);
    }

    // Collection statistics still come from the full corpus.
    let pages = ["Moukais Negouth".to_string(), "Stailpoth Zosgi".to_string()];
    println!("restricted to {pages:?} ({} passages):", index.pool_size(&pages));
    for hit in index.top_k(query, 5, Some(&pages)) {
        println!("  {:.4}  {}", hit.bm25_score, hit.passage_id);
    }
    Ok(())
}
