//! Title generation against recorded provider responses, selected through a
//! provider config file exactly as a deployed endpoint would be.

use pagelink::corpus::ingest_corpus_file;
use pagelink::providers::{source_counts, ConnectionPool, ProviderConfig, TitleGenerator};

fn main() -> pagelink::Result<()> {
    // The config refers to the recording by a crate-relative path.
    std::env::set_current_dir(env!("CARGO_MANIFEST_DIR")).expect("crate dir");
    let store = ingest_corpus_file("tests/fixtures/synthetic/corpus.jsonl".as_ref())?;
    let config = ProviderConfig::load("tests/fixtures/recorded/providers.json".as_ref())?;

    let titles: Vec<&str> = store.titles().collect();
    let mut pool = ConnectionPool::default();
    let generator = TitleGenerator::from_config(&config, &titles, &mut pool)?;
    for (endpoint, alive) in pool.liveness() {
        println!("{endpoint}: {}", if alive { "up" } else { "down" });
    }

    let out = generator.generate("What is the emblem of Moukais Vethtal?")?;
    println!("decomposition 0: {:?}", out.decompositions[0].sentences);
    println!("titles: {:?}", out.title_set.unique_titles);
    println!("by source: {:?}", source_counts(&out.title_set));

    // Unrecorded queries fail per call and are reported as warnings.
    let out = generator.generate("Which query was never recorded?")?;
    for w in &out.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
