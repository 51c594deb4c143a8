//! A provider written against the wire protocol, served over HTTP and
//! consumed by the pipeline as a remote linker and relevance scorer.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use pagelink::corpus::ingest_corpus_file;
use pagelink::index::{Bm25Params, InvertedIndex, TokenizerConfig};
use pagelink::pipeline::{Pipeline, PipelineConfig};
use pagelink::protocol::{Client, Endpoint, Handler, Op, Request, Response};
use pagelink::providers::{RemoteLinker, TitleGenerator};
use pagelink::rerank::{LexicalScorer, RemoteScorer, Scorer};
use pagelink::server::serve_provider;

/// Links any corpus title that shares a word with the text; scores pairs
/// by word overlap.
struct ToyProvider {
    titles: Vec<String>,
}

impl Handler for ToyProvider {
    fn handle(&self, req: &Request) -> Response {
        let text = req.text.clone().unwrap_or_default().to_lowercase();
        match req.op {
            Op::EntityLink | Op::EventLink => {
                let titles = self
                    .titles
                    .iter()
                    .filter(|t| t.to_lowercase().split(' ').any(|w| text.contains(w)))
                    .take(req.k.unwrap_or(10))
                    .cloned()
                    .collect();
                Response::titles(titles)
            }
            Op::Score => {
                let pairs = req.pairs.clone().unwrap_or_default();
                Response::scores(pairs.iter().map(|p| LexicalScorer::score(&p.q, &p.c)).collect())
            }
            _ => Response::error("unsupported op"),
        }
    }
}

fn main() -> pagelink::Result<()> {
    let corpus = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synthetic/corpus.jsonl");
    let store = Arc::new(ingest_corpus_file(&corpus)?);
    let index = Arc::new(InvertedIndex::build(
        &store,
        Bm25Params::default(),
        TokenizerConfig::default(),
    )?);

    let provider = ToyProvider {
        titles: store.titles().map(String::from).collect(),
    };
    let server = serve_provider(Arc::new(provider), "127.0.0.1:0", 2)?;
    let transport = Endpoint::Http(server.url()).connect(Duration::from_secs(5))?;
    let client = Client::new(transport, 1);

    let mut titles = TitleGenerator::builtin(store.titles());
    titles.entity = Arc::new(RemoteLinker::entity(client.clone()));
    titles.event = Arc::new(RemoteLinker::event(client.clone()));
    let scorer = Scorer::new(Arc::new(RemoteScorer::new(client)), Arc::new(LexicalScorer), 32);

    let pipeline = Pipeline::new(PipelineConfig::default(), store, index, titles, scorer)?;
    let trace = pipeline.retrieve_with(None, "What is the patron of Stailpoth Zosgi?", 3)?;
    println!("{} titles linked over {}", trace.title_set.len(), server.url());
    for p in &trace.final_passages {
        println!("  {:.3}  {}", p.relevance_score, p.passage_id);
    }
    server.shutdown();
    Ok(())
}
