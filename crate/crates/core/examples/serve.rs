//! Retrieval over HTTP: starts the server, queries it once and stops.
//!
//! ```text
//! cargo run --example serve              # one request, then exit
//! cargo run --example serve -- --stay    # keep serving on 127.0.0.1:8080
//! ```

use std::path::Path;
use std::sync::Arc;

use pagelink::corpus::ingest_corpus_file;
use pagelink::index::{Bm25Params, InvertedIndex, TokenizerConfig};
use pagelink::pipeline::{Pipeline, PipelineConfig, QueryTrace};
use pagelink::providers::ConnectionPool;
use pagelink::server::serve_retrieval;

fn main() -> pagelink::Result<()> {
    let stay = std::env::args().any(|a| a == "--stay");
    let corpus = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synthetic/corpus.jsonl");
    let store = Arc::new(ingest_corpus_file(&corpus)?);
    let index = Arc::new(InvertedIndex::build(
        &store,
        Bm25Params::default(),
        TokenizerConfig::default(),
    )?);
    let pipeline = Arc::new(Pipeline::builtin(PipelineConfig::default(), store, index)?);

    let addr = if stay { "127.0.0.1:8080" } else { "127.0.0.1:0" };
    let server = serve_retrieval(pipeline, Arc::new(ConnectionPool::default()), addr, 4)?;
    let url = server.url();
    println!("listening on {url}");
    if stay {
        server.wait();
        return Ok(());
    }

    let health = ureq::get(format!("{url}/health"))
        .call()
        .and_then(|mut r| r.body_mut().read_to_string());
    println!("GET /health -> {}", health.expect("health"));

    let body = serde_json::json!({ "query": "What is the anthem of Stithpou Bomvos?", "k": 3 }).to_string();
    let reply = ureq::post(format!("{url}/retrieve"))
        .send(body)
        .and_then(|mut r| r.body_mut().read_to_string())
        .expect("retrieve");
    let trace: QueryTrace = serde_json::from_str(&reply).expect("trace");
    for p in &trace.final_passages {
        println!("  {:.3}  {}", p.relevance_score, p.passage_id);
    }
    server.shutdown();
    Ok(())
}
