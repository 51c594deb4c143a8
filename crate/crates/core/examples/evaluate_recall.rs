//! Recall@K on a span dataset and accuracy on a yes/no dataset, rendered
//! as one summary row.

use std::path::Path;
use std::sync::Arc;

use pagelink::corpus::ingest_corpus_file;
use pagelink::eval::{
    boolean_accuracy, load_dataset, recall_at_k, render_summary, DatasetKind, OverlapAnswerer, SummaryRow,
};
use pagelink::index::{Bm25Params, InvertedIndex, TokenizerConfig};
use pagelink::pipeline::{BatchQuery, Pipeline, PipelineConfig};

fn main() -> pagelink::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let store = Arc::new(ingest_corpus_file(&fixtures.join("synthetic/corpus.jsonl"))?);
    let index = Arc::new(InvertedIndex::build(
        &store,
        Bm25Params::default(),
        TokenizerConfig::default(),
    )?);
    let pipeline = Pipeline::builtin(PipelineConfig::default(), store, index)?;

    let run = |kind: DatasetKind, file: &str| -> pagelink::Result<_> {
        let questions = load_dataset(kind, &fixtures.join("datasets").join(file))?;
        let batch: Vec<BatchQuery> = questions
            .iter()
            .map(|q| BatchQuery {
                qid: Some(q.qid.clone()),
                query: q.question.clone(),
            })
            .collect();
        let traces = pipeline
            .retrieve_batch(&batch, 0)
            .into_iter()
            .collect::<pagelink::Result<Vec<_>>>()?;
        Ok((questions, traces))
    };

    let (questions, traces) = run(DatasetKind::Nq, "nq_mini.jsonl")?;
    let nq = recall_at_k("nq", &traces, &questions, &[5, 20])?;
    print!("{}", nq.to_table());

    let (questions, traces) = run(DatasetKind::Boolq, "boolq_mini.jsonl")?;
    let boolq = boolean_accuracy("boolq", &traces, &questions, &OverlapAnswerer::default(), 5)?;
    print!("{}", boolq.to_table());

    let row = SummaryRow::from_reports("builtin", &[(DatasetKind::Nq, &nq), (DatasetKind::Boolq, &boolq)]);
    println!();
    print!("{}", render_summary(&[row]));
    Ok(())
}
