//! The full pipeline with builtin components, traced stage by stage.

use std::path::Path;
use std::sync::Arc;

use pagelink::corpus::ingest_corpus_file;
use pagelink::index::{Bm25Params, InvertedIndex, TokenizerConfig};
use pagelink::pipeline::{Pipeline, PipelineConfig};

fn main() -> pagelink::Result<()> {
    let corpus = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synthetic/corpus.jsonl");
    let store = Arc::new(ingest_corpus_file(&corpus)?);
    let index = Arc::new(InvertedIndex::build(
        &store,
        Bm25Params::default(),
        TokenizerConfig::default(),
    )?);
    let config = PipelineConfig {
        k_final: 5,
        ..PipelineConfig::default()
    };
    let pipeline = Pipeline::builtin(config, store.clone(), index)?;

    let trace = pipeline.retrieve("What is the mascot of Krardu Brulpol?")?;
    println!(
        "{} titles -> {} coarse passages -> {} final ({:.1} ms)",
        trace.title_set.len(),
        trace.coarse.len(),
        trace.final_passages.len(),
        trace.timings_ms.total_ms
    );
    for p in &trace.final_passages {
        println!("  {:.3}  {}", p.relevance_score, p.passage_id);
    }
    assert!(trace.funnel_violations(&store).is_empty());
    assert_eq!(pipeline.replay(&trace), trace.final_passages);
    Ok(())
}
