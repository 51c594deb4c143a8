//! Retrieval evaluation: dataset adapters, answer containment, recall@K
//! and yes/no accuracy.
//!
//! A question counts as a hit at K when any of its normalized answers
//! occurs as a contiguous token sequence inside any of the top-K normalized
//! passages.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, ProviderError, Result, Warning};
use crate::pipeline::QueryTrace;
use crate::protocol::{Client, Endpoint, Request};
use crate::providers::ConnectionPool;
use crate::rerank::LexicalScorer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Nq,
    Tqa,
    Hotpot,
    Boolq,
    Strategyqa,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 5] = [
        DatasetKind::Nq,
        DatasetKind::Tqa,
        DatasetKind::Hotpot,
        DatasetKind::Boolq,
        DatasetKind::Strategyqa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Nq => "nq",
            DatasetKind::Tqa => "tqa",
            DatasetKind::Hotpot => "hotpot",
            DatasetKind::Boolq => "boolq",
            DatasetKind::Strategyqa => "strategyqa",
        }
    }

    /// Whether the dataset is scored by yes/no accuracy rather than recall.
    pub fn is_boolean(self) -> bool {
        matches!(self, DatasetKind::Boolq | DatasetKind::Strategyqa)
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "nq" | "nq-open" | "naturalquestions" => DatasetKind::Nq,
            "tqa" | "triviaqa" => DatasetKind::Tqa,
            "hotpot" | "hotpotqa" => DatasetKind::Hotpot,
            "boolq" | "boolqa" => DatasetKind::Boolq,
            "strategyqa" | "stqa" => DatasetKind::Strategyqa,
            other => return Err(Error::Config(format!("unknown dataset {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswerType {
    Span,
    Boolean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YesNo {
    Yes,
    No,
}

impl From<bool> for YesNo {
    fn from(b: bool) -> Self {
        if b {
            YesNo::Yes
        } else {
            YesNo::No
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalQuestion {
    pub qid: String,
    pub question: String,
    pub answers: Vec<String>,
    pub answer_type: AnswerType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_bool: Option<YesNo>,
}

impl EvalQuestion {
    fn span(qid: String, question: String, answers: Vec<String>) -> Self {
        Self {
            qid,
            question,
            answers,
            answer_type: AnswerType::Span,
            gold_bool: None,
        }
    }

    fn boolean(qid: String, question: String, gold: YesNo) -> Self {
        let word = match gold {
            YesNo::Yes => "yes",
            YesNo::No => "no",
        };
        Self {
            qid,
            question,
            answers: vec![word.to_string()],
            answer_type: AnswerType::Boolean,
            gold_bool: Some(gold),
        }
    }
}

fn bad_record(index: usize, record: &Value, why: &str) -> Error {
    let mut snippet = record.to_string();
    if snippet.len() > 200 {
        let mut cut = 200;
        while !snippet.is_char_boundary(cut) {
            cut -= 1;
        }
        snippet.truncate(cut);
        snippet.push('…');
    }
    Error::parse(index, format!("{why}: {snippet}"))
}

fn str_field<'a>(v: &'a Value, keys: &[&str]) -> Option<&'a str> {
    keys.iter().find_map(|k| v.get(*k).and_then(Value::as_str))
}

fn id_field(v: &Value, keys: &[&str]) -> Option<String> {
    keys.iter().find_map(|k| match v.get(*k) {
        Some(Value::String(s)) => Some(s.clone()),
        Some(Value::Number(n)) => Some(n.to_string()),
        _ => None,
    })
}

fn string_list(v: Option<&Value>) -> Vec<String> {
    match v {
        Some(Value::String(s)) => vec![s.clone()],
        Some(Value::Array(a)) => a.iter().filter_map(Value::as_str).map(str::to_string).collect(),
        _ => Vec::new(),
    }
}

fn dedup(list: Vec<String>) -> Vec<String> {
    let mut seen = HashSet::new();
    list.into_iter()
        .filter(|a| !a.trim().is_empty() && seen.insert(a.clone()))
        .collect()
}

/// Records of a file that is either one JSON document (array, or an object
/// holding the array under `data_key`) or JSON lines. Indices are 1-based.
fn records(raw: &str, data_key: Option<&str>) -> Result<Vec<(usize, Value)>> {
    let trimmed = raw.trim_start();
    if let Ok(doc) = serde_json::from_str::<Value>(trimmed) {
        let list = match (doc, data_key) {
            (Value::Array(a), _) => a,
            (Value::Object(mut o), Some(key)) if o.contains_key(key) => match o.remove(key) {
                Some(Value::Array(a)) => a,
                _ => return Err(Error::Format(format!("\"{key}\" is not a list"))),
            },
            // a one-line JSONL file
            (v @ Value::Object(_), _) => vec![v],
            (other, _) => return Err(bad_record(1, &other, "expected a list of records")),
        };
        return Ok(list.into_iter().enumerate().map(|(i, v)| (i + 1, v)).collect());
    }
    let mut out = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        out.push((i + 1, v));
    }
    Ok(out)
}

fn parse_bool(v: Option<&Value>) -> Option<YesNo> {
    match v? {
        Value::Bool(b) => Some((*b).into()),
        Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
            "yes" | "true" => Some(YesNo::Yes),
            "no" | "false" => Some(YesNo::No),
            _ => None,
        },
        _ => None,
    }
}

/// Loads an evaluation set in its official layout.
///
/// Field mappings:
/// - `nq`: JSON lines `{"question", "answer": [..]}` (NQ-open); `answers` is
///   also accepted.
/// - `tqa`: official `{"Data": [{"QuestionId", "Question", "Answer":
///   {"Value", "Aliases"}}]}`, or JSON lines with `question`/`answers`.
/// - `hotpot`: list of `{"_id", "question", "answer"}`; yes/no answers
///   become boolean questions.
/// - `boolq`: JSON lines `{"question", "answer": bool}`.
/// - `strategyqa`: list of `{"qid", "question", "answer": bool}`.
pub fn load_dataset(kind: DatasetKind, path: &Path) -> Result<Vec<EvalQuestion>> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(kind, &raw).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

pub fn parse_dataset(kind: DatasetKind, raw: &str) -> Result<Vec<EvalQuestion>> {
    let data_key = (kind == DatasetKind::Tqa).then_some("Data");
    let mut out = Vec::new();
    for (i, v) in records(raw, data_key)? {
        let question = str_field(&v, &["question", "Question"])
            .map(str::trim)
            .filter(|q| !q.is_empty())
            .ok_or_else(|| bad_record(i, &v, "missing question"))?
            .to_string();
        let q = match kind {
            DatasetKind::Nq => {
                let qid = id_field(&v, &["id", "qid"]).unwrap_or_else(|| format!("nq-{i}"));
                let answers = dedup(string_list(v.get("answer").or_else(|| v.get("answers"))));
                EvalQuestion::span(qid, question, answers)
            }
            DatasetKind::Tqa => {
                let qid = id_field(&v, &["QuestionId", "id", "qid"]).unwrap_or_else(|| format!("tqa-{i}"));
                let answers = match v.get("Answer") {
                    Some(a) => {
                        let mut all = string_list(a.get("Value"));
                        all.extend(string_list(a.get("Aliases")));
                        all
                    }
                    None => string_list(v.get("answers").or_else(|| v.get("answer"))),
                };
                EvalQuestion::span(qid, question, dedup(answers))
            }
            DatasetKind::Hotpot => {
                let qid = id_field(&v, &["_id", "id"]).unwrap_or_else(|| format!("hotpot-{i}"));
                let answer = str_field(&v, &["answer"]).ok_or_else(|| bad_record(i, &v, "missing answer"))?;
                match answer.trim().to_ascii_lowercase().as_str() {
                    "yes" => EvalQuestion::boolean(qid, question, YesNo::Yes),
                    "no" => EvalQuestion::boolean(qid, question, YesNo::No),
                    _ => EvalQuestion::span(qid, question, dedup(vec![answer.to_string()])),
                }
            }
            DatasetKind::Boolq | DatasetKind::Strategyqa => {
                let prefix = kind.name();
                let qid = id_field(&v, &["qid", "id", "idx"]).unwrap_or_else(|| format!("{prefix}-{i}"));
                let gold = parse_bool(v.get("answer")).ok_or_else(|| bad_record(i, &v, "answer is not a boolean"))?;
                EvalQuestion::boolean(qid, question, gold)
            }
        };
        if q.answer_type == AnswerType::Span && q.answers.is_empty() {
            return Err(bad_record(i, &v, "no answer strings"));
        }
        out.push(q);
    }
    Ok(out)
}

/// Drops yes/no questions (used for HotpotQA recall).
pub fn filter_yes_no(questions: Vec<EvalQuestion>) -> (Vec<EvalQuestion>, usize, Vec<Warning>) {
    let before = questions.len();
    let kept: Vec<EvalQuestion> = questions
        .into_iter()
        .filter(|q| q.answer_type != AnswerType::Boolean)
        .collect();
    let removed = before - kept.len();
    let mut warnings = Vec::new();
    if before > 0 && kept.is_empty() {
        warnings.push(Warning::new("eval", "every question was yes/no; nothing left"));
    }
    (kept, removed, warnings)
}

/// Lowercase, drop punctuation, drop the articles a/an/the, collapse
/// whitespace.
pub fn normalize_answer(s: &str) -> String {
    normalized_tokens(s).join(" ")
}

fn normalized_tokens(s: &str) -> Vec<String> {
    let lowered: String = s
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation() && !is_unicode_punctuation(*c))
        .collect();
    lowered
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .map(str::to_string)
        .collect()
}

fn is_unicode_punctuation(c: char) -> bool {
    matches!(c, '‘' | '’' | '“' | '”' | '–' | '—' | '…' | '«' | '»' | '¿' | '¡' | '·')
}

fn contains_seq(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Whether any normalized answer occurs as a contiguous token sequence in
/// any normalized passage.
pub fn contains_answer<P, A>(passages: &[P], answers: &[A]) -> bool
where
    P: AsRef<str>,
    A: AsRef<str>,
{
    let answers: Vec<Vec<String>> = answers.iter().map(|a| normalized_tokens(a.as_ref())).collect();
    passages.iter().any(|p| {
        let tokens = normalized_tokens(p.as_ref());
        answers.iter().any(|a| contains_seq(&tokens, a))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionResult {
    pub qid: String,
    /// 1-based rank of the first passage containing an answer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_hit_rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub missing_trace: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub dataset: String,
    pub n_questions: usize,
    pub recall_at: BTreeMap<usize, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    pub per_question: Vec<QuestionResult>,
    pub config_fingerprint: String,
    pub warnings: Vec<Warning>,
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Aligned one-row text table, percentages with one decimal.
    pub fn to_table(&self) -> String {
        let mut headers = vec!["dataset".to_string(), "n".to_string()];
        let mut cells = vec![self.dataset.clone(), self.n_questions.to_string()];
        for (k, v) in &self.recall_at {
            headers.push(format!("@{k}"));
            cells.push(format!("{:.1}", v * 100.0));
        }
        if let Some(a) = self.accuracy {
            headers.push("acc".into());
            cells.push(format!("{:.1}", a * 100.0));
        }
        render_rows(&headers, &[cells])
    }
}

fn render_rows(headers: &[String], rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..headers.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].chars().count())
                .chain([headers[c].chars().count()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: &[String]| -> String {
        let mut out = String::new();
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if i == 0 {
                let _ = write!(out, "{cell:<w$}");
            } else {
                let _ = write!(out, "  {cell:>w$}");
            }
        }
        out.trim_end().to_string()
    };
    let mut out = line(headers);
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len().saturating_sub(1))));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

/// Matches traces to questions by qid, falling back to the question text.
fn trace_lookup(traces: &[QueryTrace]) -> (HashMap<&str, &QueryTrace>, HashMap<&str, &QueryTrace>) {
    let mut by_qid = HashMap::new();
    let mut by_text = HashMap::new();
    for t in traces {
        if let Some(q) = &t.qid {
            by_qid.entry(q.as_str()).or_insert(t);
        }
        by_text.entry(t.query.as_str()).or_insert(t);
    }
    (by_qid, by_text)
}

fn fingerprint_of(traces: &[QueryTrace]) -> String {
    let mut prints: Vec<&str> = traces.iter().map(|t| t.config_fingerprint.as_str()).collect();
    prints.sort_unstable();
    prints.dedup();
    prints.join(",")
}

/// recall@K for every K in `ks`.
pub fn recall_at_k(
    dataset: &str,
    traces: &[QueryTrace],
    questions: &[EvalQuestion],
    ks: &[usize],
) -> Result<MetricReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Config("every K must be at least 1".into()));
    }
    let max_k = *ks.iter().max().expect("non-empty");
    let (by_qid, by_text) = trace_lookup(traces);

    let per_question: Vec<QuestionResult> = questions
        .par_iter()
        .map(|q| {
            let trace = by_qid.get(q.qid.as_str()).or_else(|| by_text.get(q.question.as_str()));
            let Some(trace) = trace else {
                return QuestionResult {
                    qid: q.qid.clone(),
                    first_hit_rank: None,
                    correct: None,
                    missing_trace: true,
                };
            };
            let answers: Vec<Vec<String>> = q.answers.iter().map(|a| normalized_tokens(a)).collect();
            let first_hit_rank = trace
                .final_passages
                .iter()
                .take(max_k)
                .position(|p| {
                    let tokens = normalized_tokens(&p.text);
                    answers.iter().any(|a| contains_seq(&tokens, a))
                })
                .map(|i| i + 1);
            QuestionResult {
                qid: q.qid.clone(),
                first_hit_rank,
                correct: None,
                missing_trace: false,
            }
        })
        .collect();

    let mut warnings = Vec::new();
    let missing = per_question.iter().filter(|r| r.missing_trace).count();
    if missing > 0 {
        warnings.push(Warning::new(
            "eval",
            format!("{missing} questions have no trace; counted as misses"),
        ));
    }
    if questions.is_empty() {
        warnings.push(Warning::new("eval", "no questions"));
    }
    let n = questions.len();
    let recall_at = ks
        .iter()
        .map(|&k| {
            let hits = per_question
                .iter()
                .filter(|r| r.first_hit_rank.is_some_and(|rank| rank <= k))
                .count();
            (k, if n == 0 { 0.0 } else { hits as f64 / n as f64 })
        })
        .collect();

    Ok(MetricReport {
        dataset: dataset.to_string(),
        n_questions: n,
        recall_at,
        accuracy: None,
        per_question,
        config_fingerprint: fingerprint_of(traces),
        warnings,
    })
}

/// Decides yes/no for a question given retrieved passages.
pub trait Answerer: Send + Sync {
    fn answer(&self, question: &str, passages: &[&str]) -> Result<YesNo, ProviderError>;
}

/// Always gives the same answer.
#[derive(Debug, Clone, Copy)]
pub struct ConstantAnswerer(pub YesNo);

impl Answerer for ConstantAnswerer {
    fn answer(&self, _: &str, _: &[&str]) -> Result<YesNo, ProviderError> {
        Ok(self.0)
    }
}

/// Model-free baseline: "yes" when some passage covers at least
/// `threshold` of the question's content words.
#[derive(Debug, Clone, Copy)]
pub struct OverlapAnswerer {
    pub threshold: f64,
}

impl Default for OverlapAnswerer {
    fn default() -> Self {
        Self { threshold: 0.5 }
    }
}

impl Answerer for OverlapAnswerer {
    fn answer(&self, question: &str, passages: &[&str]) -> Result<YesNo, ProviderError> {
        let best = passages
            .iter()
            .map(|p| LexicalScorer::score(question, p))
            .fold(0.0, f64::max);
        Ok((best >= self.threshold).into())
    }
}

/// Answerer reached over the wire protocol:
/// `{"op":"answer","text":question,"passages":[..]}` → `{"answer":"yes"|"no"}`.
#[derive(Debug, Clone)]
pub struct RemoteAnswerer {
    client: Client,
}

impl RemoteAnswerer {
    pub fn new(client: Client) -> Self {
        Self { client }
    }

    pub fn from_endpoint(
        endpoint: &Endpoint,
        timeout: Duration,
        retries: u32,
        pool: &mut ConnectionPool,
    ) -> Result<Arc<dyn Answerer>> {
        Ok(match endpoint {
            Endpoint::Builtin => Arc::new(OverlapAnswerer::default()),
            e => Arc::new(Self::new(pool.client(e, timeout, retries)?)),
        })
    }
}

impl Answerer for RemoteAnswerer {
    fn answer(&self, question: &str, passages: &[&str]) -> Result<YesNo, ProviderError> {
        let resp = self.client.call(&Request::answer(
            question,
            passages.iter().map(|p| p.to_string()).collect(),
        ))?;
        match resp
            .answer
            .as_deref()
            .map(str::trim)
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("yes") => Ok(YesNo::Yes),
            Some("no") => Ok(YesNo::No),
            other => Err(ProviderError::Protocol(format!("bad answer {other:?}"))),
        }
    }
}

/// Accuracy of `answerer` on boolean questions, reading the top `k`
/// passages of each trace. Answerer failures and missing traces count as
/// incorrect.
pub fn boolean_accuracy(
    dataset: &str,
    traces: &[QueryTrace],
    questions: &[EvalQuestion],
    answerer: &dyn Answerer,
    k: usize,
) -> Result<MetricReport> {
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    let (by_qid, by_text) = trace_lookup(traces);
    let results: Vec<(QuestionResult, Option<Warning>)> = questions
        .par_iter()
        .map(|q| {
            let trace = by_qid.get(q.qid.as_str()).or_else(|| by_text.get(q.question.as_str()));
            let mut result = QuestionResult {
                qid: q.qid.clone(),
                first_hit_rank: None,
                correct: Some(false),
                missing_trace: trace.is_none(),
            };
            let Some(gold) = q.gold_bool else {
                return (
                    result,
                    Some(Warning::new("eval", format!("{} has no yes/no gold", q.qid))),
                );
            };
            let passages: Vec<&str> = trace
                .map(|t| t.final_passages.iter().take(k).map(|p| p.text.as_str()).collect())
                .unwrap_or_default();
            match answerer.answer(&q.question, &passages) {
                Ok(pred) => {
                    result.correct = Some(pred == gold);
                    (result, None)
                }
                Err(e) => (
                    result,
                    Some(Warning::new("eval", format!("answerer failed on {}: {e}", q.qid))),
                ),
            }
        })
        .collect();

    let mut per_question = Vec::with_capacity(results.len());
    let mut warnings = Vec::new();
    for (r, w) in results {
        per_question.push(r);
        warnings.extend(w);
    }
    let missing = per_question.iter().filter(|r| r.missing_trace).count();
    if missing > 0 {
        warnings.push(Warning::new("eval", format!("{missing} questions have no trace")));
    }
    let n = questions.len();
    let correct = per_question.iter().filter(|r| r.correct == Some(true)).count();
    Ok(MetricReport {
        dataset: dataset.to_string(),
        n_questions: n,
        recall_at: BTreeMap::new(),
        accuracy: Some(if n == 0 { 0.0 } else { correct as f64 / n as f64 }),
        per_question,
        config_fingerprint: fingerprint_of(traces),
        warnings,
    })
}

/// Column headers of the cross-dataset summary table.
pub const SUMMARY_COLUMNS: [&str; 8] = [
    "NQ@5",
    "NQ@20",
    "TQA@5",
    "TQA@20",
    "Hotpot@5",
    "Hotpot@20",
    "BoolQ Acc.",
    "STQA Acc.",
];

/// One system's row across all five datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub system: String,
    /// Values in `[0, 1]` per column; `None` when not evaluated.
    pub cells: Vec<Option<f64>>,
}

impl SummaryRow {
    /// Picks NQ/TQA/Hotpot recall@5 and @20 and BoolQ/StrategyQA accuracy
    /// out of per-dataset reports.
    pub fn from_reports(system: &str, reports: &[(DatasetKind, &MetricReport)]) -> Self {
        let find = |kind: DatasetKind| reports.iter().find(|(k, _)| *k == kind).map(|(_, r)| *r);
        let recall = |kind, k| find(kind).and_then(|r| r.recall_at.get(&k).copied());
        let acc = |kind| find(kind).and_then(|r| r.accuracy);
        Self {
            system: system.to_string(),
            cells: vec![
                recall(DatasetKind::Nq, 5),
                recall(DatasetKind::Nq, 20),
                recall(DatasetKind::Tqa, 5),
                recall(DatasetKind::Tqa, 20),
                recall(DatasetKind::Hotpot, 5),
                recall(DatasetKind::Hotpot, 20),
                acc(DatasetKind::Boolq),
                acc(DatasetKind::Strategyqa),
            ],
        }
    }
}

/// Renders summary rows as an aligned text table (percent, one decimal).
pub fn render_summary(rows: &[SummaryRow]) -> String {
    let headers: Vec<String> = std::iter::once("System".to_string())
        .chain(SUMMARY_COLUMNS.iter().map(|c| c.to_string()))
        .collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            std::iter::once(r.system.clone())
                .chain(r.cells.iter().map(|c| match c {
                    Some(v) => format!("{:.1}", v * 100.0),
                    None => "-".to_string(),
                }))
                .collect()
        })
        .collect();
    render_rows(&headers, &body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::StageTimings;
    use crate::providers::TitleSet;
    use crate::rerank::RankedPassage;

    pub(crate) fn trace(qid: &str, query: &str, texts: &[&str]) -> QueryTrace {
        QueryTrace {
            qid: Some(qid.to_string()),
            query: query.to_string(),
            decompositions_raw: vec![],
            decompositions: vec![],
            title_set: TitleSet::default(),
            missing_titles: vec![],
            coarse: vec![],
            k_final: texts.len().max(1),
            final_passages: texts
                .iter()
                .enumerate()
                .map(|(i, t)| RankedPassage {
                    passage_id: format!("p#{i}"),
                    page_title: "p".into(),
                    text: t.to_string(),
                    bm25_score: 0.0,
                    relevance_score: 0.0,
                    title_provenance: vec![],
                })
                .collect(),
            warnings: vec![],
            timings_ms: StageTimings::default(),
            config_fingerprint: "fp".into(),
        }
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_answer("The Eiffel Tower!"), "eiffel tower");
        assert_eq!(normalize_answer(""), "");
        assert_eq!(normalize_answer("a  DOG."), "dog");
    }

    #[test]
    fn containment_examples() {
        assert!(contains_answer(&["...the capital is Paris..."], &["Paris"]));
        assert!(!contains_answer(&["he moved to New York in 1990"], &["New York City"]));
        assert!(!contains_answer::<&str, &str>(&[], &["Paris"]));
        // token boundaries: no hit inside a longer word
        assert!(!contains_answer(&["Parisian cafes"], &["Paris"]));
        assert!(!contains_answer(&["anything"], &[""]));
    }

    #[test]
    fn recall_counting() {
        let filler = "nothing here";
        let mut a = vec![filler; 10];
        a[2] = "the answer is alpha";
        let mut b = vec![filler; 10];
        b[6] = "beta appears";
        let traces = vec![trace("1", "qa", &a), trace("2", "qb", &b)];
        let questions = vec![
            EvalQuestion::span("1".into(), "qa".into(), vec!["alpha".into()]),
            EvalQuestion::span("2".into(), "qb".into(), vec!["Beta".into()]),
        ];
        let r = recall_at_k("t", &traces, &questions, &[1, 5, 20]).unwrap();
        assert_eq!(r.recall_at[&1], 0.0);
        assert_eq!(r.recall_at[&5], 0.5);
        assert_eq!(r.recall_at[&20], 1.0);
        assert_eq!(r.per_question[0].first_hit_rank, Some(3));
        assert_eq!(r.per_question[1].first_hit_rank, Some(7));
        assert!(recall_at_k("t", &traces, &questions, &[0]).is_err());
    }

    #[test]
    fn traces_match_by_text_when_qid_differs() {
        let traces = vec![trace("zzz", "what?", &["alpha"])];
        let questions = vec![EvalQuestion::span("1".into(), "what?".into(), vec!["alpha".into()])];
        let r = recall_at_k("t", &traces, &questions, &[1]).unwrap();
        assert_eq!(r.recall_at[&1], 1.0);

        let r = recall_at_k("t", &[], &questions, &[1]).unwrap();
        assert_eq!(r.recall_at[&1], 0.0);
        assert!(r.per_question[0].missing_trace);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn yes_no_filter() {
        let span = EvalQuestion::span("1".into(), "q1".into(), vec!["x".into()]);
        let yes = EvalQuestion::boolean("2".into(), "q2".into(), YesNo::Yes);
        let no = EvalQuestion::boolean("3".into(), "q3".into(), YesNo::No);
        let (kept, removed, w) = filter_yes_no(vec![span.clone(), yes.clone(), no.clone()]);
        assert_eq!(kept, vec![span.clone()]);
        assert_eq!(removed, 2);
        assert!(w.is_empty());
        assert_eq!(filter_yes_no(vec![span.clone()]).0, vec![span]);
        let (kept, _, w) = filter_yes_no(vec![yes, no]);
        assert!(kept.is_empty());
        assert_eq!(w.len(), 1);
    }

    fn bool_questions() -> (Vec<QueryTrace>, Vec<EvalQuestion>) {
        let qs: Vec<EvalQuestion> = (0..4)
            .map(|i| EvalQuestion::boolean(i.to_string(), format!("q{i}"), (i % 2 == 0).into()))
            .collect();
        let ts = qs.iter().map(|q| trace(&q.qid, &q.question, &["text"])).collect();
        (ts, qs)
    }

    struct Oracle(HashMap<String, YesNo>);

    impl Answerer for Oracle {
        fn answer(&self, q: &str, _: &[&str]) -> Result<YesNo, ProviderError> {
            Ok(self.0[q])
        }
    }

    struct Broken;

    impl Answerer for Broken {
        fn answer(&self, _: &str, _: &[&str]) -> Result<YesNo, ProviderError> {
            Err(ProviderError::Timeout(1))
        }
    }

    #[test]
    fn accuracy_examples() {
        let (ts, qs) = bool_questions();
        let r = boolean_accuracy("b", &ts, &qs, &ConstantAnswerer(YesNo::Yes), 5).unwrap();
        assert_eq!(r.accuracy, Some(0.5));
        let oracle = Oracle(qs.iter().map(|q| (q.question.clone(), q.gold_bool.unwrap())).collect());
        assert_eq!(boolean_accuracy("b", &ts, &qs, &oracle, 5).unwrap().accuracy, Some(1.0));
        let r = boolean_accuracy("b", &ts, &qs, &Broken, 5).unwrap();
        assert_eq!(r.accuracy, Some(0.0));
        assert_eq!(r.warnings.len(), 4);
    }

    #[test]
    fn overlap_answerer() {
        let a = OverlapAnswerer::default();
        assert_eq!(
            a.answer("Is Paris in France?", &["Paris is the capital of France"])
                .unwrap(),
            YesNo::Yes
        );
        assert_eq!(a.answer("Is Paris in France?", &["unrelated"]).unwrap(), YesNo::No);
        assert_eq!(a.answer("Is Paris in France?", &[]).unwrap(), YesNo::No);
    }

    #[test]
    fn dataset_adapters() {
        let nq = r#"{"question": "who wrote hamlet", "answer": ["Shakespeare", "William Shakespeare"]}"#;
        let q = parse_dataset(DatasetKind::Nq, nq).unwrap();
        assert_eq!(q[0].answers.len(), 2);
        assert_eq!(q[0].qid, "nq-1");

        let tqa =
            r#"{"Data": [{"QuestionId": "tc_1", "Question": "Q?", "Answer": {"Value": "X", "Aliases": ["X", "Ex"]}}]}"#;
        let q = parse_dataset(DatasetKind::Tqa, tqa).unwrap();
        assert_eq!(q[0].qid, "tc_1");
        assert_eq!(q[0].answers, vec!["X", "Ex"]);

        let hotpot =
            r#"[{"_id": "a", "question": "Q1", "answer": "yes"}, {"_id": "b", "question": "Q2", "answer": "Paris"}]"#;
        let q = parse_dataset(DatasetKind::Hotpot, hotpot).unwrap();
        assert_eq!(q[0].answer_type, AnswerType::Boolean);
        assert_eq!(q[1].answer_type, AnswerType::Span);

        let boolq = "{\"question\": \"is it\", \"answer\": true}\n{\"question\": \"is it not\", \"answer\": false}\n";
        let q = parse_dataset(DatasetKind::Boolq, boolq).unwrap();
        assert_eq!(q[1].gold_bool, Some(YesNo::No));

        let stqa = r#"[{"qid": "s1", "question": "Q?", "answer": true}]"#;
        assert_eq!(parse_dataset(DatasetKind::Strategyqa, stqa).unwrap()[0].qid, "s1");
    }

    #[test]
    fn adapter_errors_name_the_record() {
        let err = parse_dataset(DatasetKind::Boolq, "{\"question\": \"q\", \"answer\": \"maybe\"}").unwrap_err();
        assert!(err.to_string().contains("maybe"), "{err}");
        let err = parse_dataset(
            DatasetKind::Nq,
            "{\"question\": \"q\"}\n{\"question\": \"q2\", \"answer\": [\"a\"]}",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        assert!(parse_dataset(DatasetKind::Nq, "not json at all").is_err());
    }

    #[test]
    fn summary_table_shape() {
        let (ts, qs) = bool_questions();
        let acc = boolean_accuracy("boolq", &ts, &qs, &ConstantAnswerer(YesNo::Yes), 5).unwrap();
        let row = SummaryRow::from_reports("demo", &[(DatasetKind::Boolq, &acc)]);
        let table = render_summary(&[row]);
        let header = table.lines().next().unwrap();
        for col in SUMMARY_COLUMNS {
            assert!(header.contains(col));
        }
        assert!(table.lines().nth(2).unwrap().contains("50.0"));
    }
}
