//! Builtin title generation: lexical linking plus heuristic decomposition.

use std::path::Path;

use pagelink::corpus::ingest_corpus_file;
use pagelink::providers::{source_counts, TitleGenerator};

fn main() -> pagelink::Result<()> {
    let corpus = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synthetic/corpus.jsonl");
    let store = ingest_corpus_file(&corpus)?;
    let generator = TitleGenerator::builtin(store.titles());

    let out = generator.generate("What is the emblem of Moukais Vethtal?")?;
    for d in &out.decompositions {
        println!("set {}: {:?}", d.set_index, d.sentences);
    }
    println!("by source: {:?}", source_counts(&out.title_set));
    println!("{} unique titles, first five:", out.title_set.len());
    for title in out.title_set.unique_titles.iter().take(5) {
        let mut sources: Vec<_> = out.title_set.provenance(title).iter().map(|c| c.source).collect();
        sources.dedup();
        println!("  {title:<24} {sources:?}");
    }
    Ok(())
}
