//! Training-pair export for the relevance scorer.
//!
//! Two recipes: HotpotQA supporting sentences against randomly sampled
//! non-supporting sentences, and NaturalQuestions positives against the
//! provided hard negatives, down-sampled to a target size. Both exports are
//! exactly label-balanced and reproducible for a fixed seed.

use std::io::Write;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Warning};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Positive => "pos",
            Label::Negative => "neg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceDataset {
    Hotpotqa,
    Nq,
}

impl SourceDataset {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceDataset::Hotpotqa => "hotpotqa",
            SourceDataset::Nq => "nq",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub question: String,
    pub context: String,
    pub label: Label,
    pub source_dataset: SourceDataset,
}

/// An exported, balanced set of pairs and what happened while building it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingExport {
    pub source: SourceDataset,
    pub seed: u64,
    pub pairs: Vec<TrainingPair>,
    pub warnings: Vec<Warning>,
}

impl TrainingExport {
    pub fn positives(&self) -> usize {
        self.pairs.iter().filter(|p| p.label == Label::Positive).count()
    }

    pub fn negatives(&self) -> usize {
        self.pairs.len() - self.positives()
    }

    /// Tab-separated rows `question, context, label, source` after a header
    /// line carrying the seed and counts. Tabs and line breaks inside text
    /// become single spaces.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "#recipe={}\tseed={}\tpairs={}\tpositives={}\tnegatives={}",
            self.source.as_str(),
            self.seed,
            self.pairs.len(),
            self.positives(),
            self.negatives()
        )?;
        for p in &self.pairs {
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                clean(&p.question),
                clean(&p.context),
                p.label.as_str(),
                p.source_dataset.as_str()
            )?;
        }
        out.flush()
    }

    pub fn save_tsv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_tsv(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }
}

fn clean(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// One HotpotQA training question with its sentences split by whether they
/// are annotated as supporting facts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HotpotRecord {
    pub question: String,
    pub supporting: Vec<String>,
    pub others: Vec<String>,
}

#[derive(Deserialize)]
struct RawHotpot {
    question: String,
    #[serde(default)]
    supporting_facts: Vec<(String, usize)>,
    #[serde(default)]
    context: Vec<(String, Vec<String>)>,
}

/// Reads the official HotpotQA training JSON (a list of questions with
/// `context: [[title, [sentences]]]` and `supporting_facts: [[title,
/// sentence index]]`).
pub fn load_hotpot_records(path: &Path) -> Result<Vec<HotpotRecord>> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let items: Vec<RawHotpot> =
        serde_json::from_str(&raw).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok(items.into_iter().map(hotpot_record).collect())
}

fn hotpot_record(raw: RawHotpot) -> HotpotRecord {
    let mut supporting = Vec::new();
    let mut others = Vec::new();
    for (title, sentences) in &raw.context {
        for (i, s) in sentences.iter().enumerate() {
            let s = s.trim();
            if s.is_empty() {
                continue;
            }
            if raw.supporting_facts.iter().any(|(t, j)| t == title && *j == i) {
                supporting.push(s.to_string());
            } else {
                others.push(s.to_string());
            }
        }
    }
    HotpotRecord {
        question: raw.question,
        supporting,
        others,
    }
}

fn sorted_sample(rng: &mut ChaCha8Rng, len: usize, amount: usize) -> Vec<usize> {
    let mut picked = index::sample(rng, len, amount).into_vec();
    picked.sort_unstable();
    picked
}

fn pair(question: &str, context: &str, label: Label, source: SourceDataset) -> TrainingPair {
    TrainingPair {
        question: question.to_string(),
        context: context.to_string(),
        label,
        source_dataset: source,
    }
}

/// HotpotQA recipe: every supporting sentence is a positive; the same
/// number of negatives is drawn uniformly from the record's other
/// sentences. A record short of negatives borrows from other records'
/// non-supporting sentences.
pub fn export_hotpot_pairs(records: &[HotpotRecord], seed: u64) -> TrainingExport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    let mut warnings = Vec::new();
    let global: Vec<(usize, &str)> = records
        .iter()
        .enumerate()
        .flat_map(|(i, r)| r.others.iter().map(move |s| (i, s.as_str())))
        .collect();

    for (ri, record) in records.iter().enumerate() {
        let mut positives: Vec<&str> = record.supporting.iter().map(String::as_str).collect();
        let need = positives.len();
        if need == 0 {
            continue;
        }
        let local = record.others.len().min(need);
        let mut negatives: Vec<&str> = sorted_sample(&mut rng, record.others.len(), local)
            .into_iter()
            .map(|i| record.others[i].as_str())
            .collect();

        if local < need {
            let borrowed: Vec<&str> = global
                .iter()
                .filter(|(owner, _)| *owner != ri)
                .map(|(_, s)| *s)
                .collect();
            let take = (need - local).min(borrowed.len());
            negatives.extend(
                sorted_sample(&mut rng, borrowed.len(), take)
                    .into_iter()
                    .map(|i| borrowed[i]),
            );
            warnings.push(Warning::new(
                "export",
                format!("question {ri}: {local} local negatives for {need} positives; borrowed {take}"),
            ));
            if negatives.len() < need {
                positives.truncate(negatives.len());
                warnings.push(Warning::new(
                    "export",
                    format!("question {ri}: kept {} positives to stay balanced", positives.len()),
                ));
            }
        }

        pairs.extend(
            positives
                .iter()
                .map(|c| pair(&record.question, c, Label::Positive, SourceDataset::Hotpotqa)),
        );
        pairs.extend(
            negatives
                .iter()
                .map(|c| pair(&record.question, c, Label::Negative, SourceDataset::Hotpotqa)),
        );
    }

    TrainingExport {
        source: SourceDataset::Hotpotqa,
        seed,
        pairs,
        warnings,
    }
}

/// One NaturalQuestions training question in the DPR retriever-training
/// layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NqRecord {
    pub question: String,
    pub positives: Vec<String>,
    pub hard_negatives: Vec<String>,
}

#[derive(Deserialize)]
struct RawCtx {
    #[serde(default)]
    text: String,
}

#[derive(Deserialize)]
struct RawNq {
    question: String,
    #[serde(default)]
    positive_ctxs: Vec<RawCtx>,
    #[serde(default)]
    hard_negative_ctxs: Vec<RawCtx>,
}

/// Reads DPR's NQ training JSON (`question`, `positive_ctxs`,
/// `hard_negative_ctxs`, each context carrying `title` and `text`).
pub fn load_nq_records(path: &Path) -> Result<Vec<NqRecord>> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let items: Vec<RawNq> =
        serde_json::from_str(&raw).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let texts = |ctxs: Vec<RawCtx>| -> Vec<String> {
        ctxs.into_iter()
            .map(|c| c.text.trim().to_string())
            .filter(|t| !t.is_empty())
            .collect()
    };
    Ok(items
        .into_iter()
        .map(|r| NqRecord {
            question: r.question,
            positives: texts(r.positive_ctxs),
            hard_negatives: texts(r.hard_negative_ctxs),
        })
        .collect())
}

/// NQ recipe: per question, the first `m = min(positives, hard negatives)`
/// positives are paired with `m` hard negatives drawn uniformly. The full
/// balanced set is then down-sampled to `target_size` pairs, half of each
/// label. An odd target is rounded down; a target above the available
/// count exports everything.
pub fn export_nq_pairs(records: &[NqRecord], target_size: usize, seed: u64) -> TrainingExport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut warnings = Vec::new();
    let mut full: Vec<TrainingPair> = Vec::new();
    let mut skipped = 0usize;
    for record in records {
        let m = record.positives.len().min(record.hard_negatives.len());
        if m == 0 {
            skipped += 1;
            continue;
        }
        full.extend(
            record.positives[..m]
                .iter()
                .map(|c| pair(&record.question, c, Label::Positive, SourceDataset::Nq)),
        );
        full.extend(
            sorted_sample(&mut rng, record.hard_negatives.len(), m)
                .into_iter()
                .map(|i| {
                    pair(
                        &record.question,
                        &record.hard_negatives[i],
                        Label::Negative,
                        SourceDataset::Nq,
                    )
                }),
        );
    }
    if skipped > 0 {
        warnings.push(Warning::new(
            "export",
            format!("{skipped} questions lack positives or hard negatives; skipped"),
        ));
    }

    let mut target = target_size;
    if target % 2 == 1 {
        target -= 1;
        warnings.push(Warning::new(
            "export",
            format!("odd target {target_size} rounded down to {target} to stay balanced"),
        ));
    }
    if target >= full.len() {
        if target > full.len() {
            warnings.push(Warning::new(
                "export",
                format!(
                    "requested {target} pairs but only {} available; exporting all",
                    full.len()
                ),
            ));
        }
        return TrainingExport {
            source: SourceDataset::Nq,
            seed,
            pairs: full,
            warnings,
        };
    }

    let positions = |label: Label| -> Vec<usize> {
        full.iter()
            .enumerate()
            .filter(|(_, p)| p.label == label)
            .map(|(i, _)| i)
            .collect()
    };
    let pos = positions(Label::Positive);
    let neg = positions(Label::Negative);
    let half = target / 2;
    let mut keep: Vec<usize> = sorted_sample(&mut rng, pos.len(), half)
        .into_iter()
        .map(|i| pos[i])
        .chain(sorted_sample(&mut rng, neg.len(), half).into_iter().map(|i| neg[i]))
        .collect();
    keep.sort_unstable();
    let pairs = keep.into_iter().map(|i| full[i].clone()).collect();

    TrainingExport {
        source: SourceDataset::Nq,
        seed,
        pairs,
        warnings,
    }
}
