//! Balanced re-ranker training pairs from multi-hop and single-hop data.

use std::path::Path;

use pagelink::rerank::export::{export_hotpot_pairs, export_nq_pairs, load_hotpot_records, load_nq_records};

fn main() -> pagelink::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/export");
    let seed = 7;

    let hotpot = export_hotpot_pairs(&load_hotpot_records(&fixtures.join("hotpot_train_mini.json"))?, seed);
    println!(
        "hotpot: {} positive, {} negative",
        hotpot.positives(),
        hotpot.negatives()
    );

    // Match the single-hop export to the multi-hop size.
    let nq = export_nq_pairs(
        &load_nq_records(&fixtures.join("nq_train_mini.json"))?,
        hotpot.pairs.len(),
        seed,
    );
    println!("nq:     {} positive, {} negative", nq.positives(), nq.negatives());

    let mut out = Vec::new();
    nq.write_tsv(&mut out)?;
    for line in String::from_utf8_lossy(&out).lines().take(3) {
        println!("  {}", line.chars().take(100).collect::<String>());
    }
    Ok(())
}
