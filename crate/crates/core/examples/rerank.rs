//! Re-ranks a BM25 candidate pool with the lexical relevance scorer.

use std::path::Path;

use pagelink::corpus::ingest_corpus_file;
use pagelink::index::{Bm25Params, InvertedIndex, TokenizerConfig};
use pagelink::rerank::{rerank, Scorer};

fn main() -> pagelink::Result<()> {
    let corpus = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synthetic/corpus.jsonl");
    let store = ingest_corpus_file(&corpus)?;
    let index = InvertedIndex::build(&store, Bm25Params::default(), TokenizerConfig::default())?;

    let question = "What is the emblem of Moukais Vethtal?";
    let pool = index.top_k(question, 50, None::<&[String]>);
    let (ranked, warnings) = rerank(question, &pool, &store, &Scorer::lexical(), 5);
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    for p in ranked {
        println!(
            "rel {:.3}  bm25 {:>7.3}  {}",
            p.relevance_score, p.bm25_score, p.passage_id
        );
    }
    Ok(())
}
