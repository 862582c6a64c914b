//! Scoring predictions: accuracy for Binary/MCQ, set precision/recall/F1 for
//! MAQ, sentence BLEU for open answers, grouped by level, format and source.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qagen::{Format, QAItem, NO, YES};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no items to score")]
    EmptyItems,
    #[error("item `{qid}` has format {found}, expected {expected}")]
    WrongFormat {
        qid: String,
        expected: &'static str,
        found: Format,
    },
    #[error("BLEU order must be 2 or 4, got {0}")]
    BleuOrder(usize),
    #[error("predictions reference unknown qids: {}", .0.join(", "))]
    UnknownQids(Vec<String>),
    #[error("duplicate benchmark qid `{0}`")]
    DuplicateItem(String),
    #[error("unknown group-by key `{0}` (expected level, format or source)")]
    GroupKey(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Lowercases and splits on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// A prediction after normalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Parsed {
    /// `yes` or `no`.
    Binary(String),
    /// Selected candidate texts.
    Choices(BTreeSet<String>),
    Text(String),
    Unparseable,
}

impl Parsed {
    pub fn is_unparseable(&self) -> bool {
        matches!(self, Parsed::Unparseable)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub qid: String,
    pub raw_text: String,
    pub parsed: Parsed,
}

impl Prediction {
    pub fn new(item: &QAItem, raw_text: impl Into<String>) -> Self {
        let raw_text = raw_text.into();
        Prediction {
            qid: item.qid.clone(),
            parsed: parse_answer(&raw_text, item),
            raw_text,
        }
    }
}

/// One line of a prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub qid: String,
    pub prediction: String,
}

pub fn read_predictions_jsonl<R: BufRead>(reader: R) -> Result<Vec<PredictionRecord>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let err = |message: String| EvalError::Parse { line: i + 1, message };
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| err(e.to_string()))?);
    }
    Ok(out)
}

const YES_WORDS: &[&str] = &["yes", "true", "correct", "y"];
const NO_WORDS: &[&str] = &["no", "false", "incorrect", "n"];

// Words that may follow an option letter "A" without making it an article.
const AFTER_LETTER: &[&str] = &[
    "and", "or", "nor", "plus", "is", "are", "was", "were", "only", "too", "also", "as", "then",
];

fn parse_binary(raw: &str) -> Parsed {
    for t in tokenize(raw) {
        if YES_WORDS.contains(&t.as_str()) {
            return Parsed::Binary(YES.into());
        }
        if NO_WORDS.contains(&t.as_str()) {
            return Parsed::Binary(NO.into());
        }
    }
    Parsed::Unparseable
}

fn option_letters(raw: &str) -> Vec<usize> {
    let words: Vec<&str> = raw
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .collect();
    let is_letter = |w: &str| w.len() == 1 && matches!(w.as_bytes()[0].to_ascii_uppercase(), b'A'..=b'H');
    if !words.is_empty() && words.iter().all(|w| is_letter(w)) {
        return words
            .iter()
            .map(|w| (w.as_bytes()[0].to_ascii_uppercase() - b'A') as usize)
            .collect();
    }
    let mut out = Vec::new();
    for (i, w) in words.iter().enumerate() {
        if w.len() != 1 || !matches!(w.as_bytes()[0], b'A'..=b'H') {
            continue;
        }
        if *w == "A" {
            if let Some(next) = words.get(i + 1) {
                let lower = next.chars().next().is_some_and(char::is_lowercase);
                if lower && !AFTER_LETTER.contains(next) {
                    continue;
                }
            }
        }
        out.push((w.as_bytes()[0] - b'A') as usize);
    }
    out
}

fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

fn parse_choices(raw: &str, item: &QAItem) -> Parsed {
    let letters = option_letters(raw);
    let picked: BTreeSet<String> = letters
        .iter()
        .filter_map(|&i| item.candidates.get(i).cloned())
        .collect();
    if !picked.is_empty() {
        return Parsed::Choices(picked);
    }
    if letters.is_empty() {
        // no letters at all: accept answers that quote candidate text
        let tokens = tokenize(raw);
        let quoted: BTreeSet<String> = item
            .candidates
            .iter()
            .filter(|c| contains_run(&tokens, &tokenize(c)))
            .cloned()
            .collect();
        if !quoted.is_empty() {
            return Parsed::Choices(quoted);
        }
    }
    Parsed::Unparseable
}

/// Normalizes a raw model answer according to the item's format.
pub fn parse_answer(raw: &str, item: &QAItem) -> Parsed {
    match item.format {
        Format::Binary => parse_binary(raw),
        Format::Mcq | Format::Maq => parse_choices(raw, item),
        Format::Open => {
            let text = raw.split_whitespace().collect::<Vec<_>>().join(" ");
            if text.is_empty() {
                Parsed::Unparseable
            } else {
                Parsed::Text(text)
            }
        }
    }
}

fn index_predictions(preds: &[Prediction]) -> HashMap<&str, &Prediction> {
    preds.iter().map(|p| (p.qid.as_str(), p)).collect()
}

fn gold_set(item: &QAItem) -> BTreeSet<String> {
    item.gold.iter().cloned().collect()
}

fn is_correct(item: &QAItem, parsed: Option<&Parsed>) -> bool {
    match (item.format, parsed) {
        (Format::Binary, Some(Parsed::Binary(v))) => item.gold.first() == Some(v),
        (Format::Mcq, Some(Parsed::Choices(c))) => *c == gold_set(item),
        _ => false,
    }
}

/// Fraction of Binary/MCQ items whose prediction matches gold exactly.
/// Missing and unparseable predictions count as wrong.
pub fn accuracy(preds: &[Prediction], items: &[QAItem]) -> Result<f64, EvalError> {
    if items.is_empty() {
        return Err(EvalError::EmptyItems);
    }
    let by_qid = index_predictions(preds);
    let mut correct = 0usize;
    for item in items {
        if !matches!(item.format, Format::Binary | Format::Mcq) {
            return Err(EvalError::WrongFormat {
                qid: item.qid.clone(),
                expected: "Binary or MCQ",
                found: item.format,
            });
        }
        correct += usize::from(is_correct(item, by_qid.get(item.qid.as_str()).map(|p| &p.parsed)));
    }
    Ok(correct as f64 / items.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Set precision, recall and F1 of one predicted set against gold.
pub fn set_prf(pred: &BTreeSet<String>, gold: &BTreeSet<String>) -> Prf {
    let hit = pred.intersection(gold).count() as f64;
    let precision = if pred.is_empty() { 0.0 } else { hit / pred.len() as f64 };
    let recall = if gold.is_empty() { 0.0 } else { hit / gold.len() as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Prf { precision, recall, f1 }
}

fn item_prf(item: &QAItem, parsed: Option<&Parsed>) -> Prf {
    let empty = BTreeSet::new();
    let pred = match parsed {
        Some(Parsed::Choices(c)) => c,
        _ => &empty,
    };
    set_prf(pred, &gold_set(item))
}

/// Macro-averaged precision, recall and F1 over MAQ items.
pub fn maq_prf1(preds: &[Prediction], items: &[QAItem]) -> Result<Prf, EvalError> {
    if items.is_empty() {
        return Err(EvalError::EmptyItems);
    }
    let by_qid = index_predictions(preds);
    let mut sum = Prf::default();
    for item in items {
        if item.format != Format::Maq {
            return Err(EvalError::WrongFormat {
                qid: item.qid.clone(),
                expected: "MAQ",
                found: item.format,
            });
        }
        let s = item_prf(item, by_qid.get(item.qid.as_str()).map(|p| &p.parsed));
        sum.precision += s.precision;
        sum.recall += s.recall;
        sum.f1 += s.f1;
    }
    let n = items.len() as f64;
    Ok(Prf {
        precision: sum.precision / n,
        recall: sum.recall / n,
        f1: sum.f1 / n,
    })
}

const BLEU_EPSILON: f64 = 1e-9;

/// Sentence-level BLEU-n with add-epsilon smoothing of zero match counts.
pub fn bleu_n(hypothesis: &str, reference: &str, n: usize) -> Result<f64, EvalError> {
    if n != 2 && n != 4 {
        return Err(EvalError::BleuOrder(n));
    }
    let hyp = tokenize(hypothesis);
    if hyp.is_empty() {
        return Ok(0.0);
    }
    let reference = tokenize(reference);
    let mut log_sum = 0.0;
    for i in 1..=n {
        let mut ref_counts: HashMap<&[String], usize> = HashMap::new();
        for g in reference.windows(i) {
            *ref_counts.entry(g).or_default() += 1;
        }
        let mut hyp_counts: HashMap<&[String], usize> = HashMap::new();
        for g in hyp.windows(i) {
            *hyp_counts.entry(g).or_default() += 1;
        }
        let total = hyp.len().saturating_sub(i - 1);
        let matched: usize = hyp_counts
            .iter()
            .map(|(g, &c)| c.min(ref_counts.get(g).copied().unwrap_or(0)))
            .sum();
        let p = if matched == 0 {
            BLEU_EPSILON / total.max(1) as f64
        } else {
            matched as f64 / total as f64
        };
        log_sum += p.ln();
    }
    let (c, r) = (hyp.len() as f64, reference.len() as f64);
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    Ok(bp * (log_sum / n as f64).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupField {
    Level,
    Format,
    Source,
}

impl GroupField {
    pub fn parse_list(spec: &str) -> Result<Vec<GroupField>, EvalError> {
        let mut out = Vec::new();
        for key in spec.split(',').map(str::trim).filter(|k| !k.is_empty()) {
            let f = match key {
                "level" => GroupField::Level,
                "format" => GroupField::Format,
                "source" => GroupField::Source,
                other => return Err(EvalError::GroupKey(other.to_string())),
            };
            if !out.contains(&f) {
                out.push(f);
            }
        }
        Ok(out)
    }

    pub fn all() -> Vec<GroupField> {
        vec![GroupField::Level, GroupField::Format, GroupField::Source]
    }
}

/// Metrics for one group. A metric is absent when the group has no item of
/// the format it applies to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub level: Option<String>,
    pub format: Option<String>,
    pub source: Option<String>,
    pub count: usize,
    pub unparseable: usize,
    pub missing: usize,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub bleu2: Option<f64>,
    pub bleu4: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub group_by: Vec<GroupField>,
    pub groups: Vec<MetricRow>,
    pub overall: MetricRow,
    pub duplicate_predictions: Vec<String>,
}

#[derive(Default)]
struct Acc {
    count: usize,
    unparseable: usize,
    missing: usize,
    choice_n: usize,
    correct: usize,
    maq_n: usize,
    prf: Prf,
    open_n: usize,
    bleu2: f64,
    bleu4: f64,
}

impl Acc {
    fn add(&mut self, item: &QAItem, parsed: Option<&Parsed>) -> Result<(), EvalError> {
        self.count += 1;
        match parsed {
            None => self.missing += 1,
            Some(p) if p.is_unparseable() => self.unparseable += 1,
            _ => {}
        }
        match item.format {
            Format::Binary | Format::Mcq => {
                self.choice_n += 1;
                self.correct += usize::from(is_correct(item, parsed));
            }
            Format::Maq => {
                self.maq_n += 1;
                let s = item_prf(item, parsed);
                self.prf.precision += s.precision;
                self.prf.recall += s.recall;
                self.prf.f1 += s.f1;
            }
            Format::Open => {
                self.open_n += 1;
                if let Some(Parsed::Text(hyp)) = parsed {
                    let reference = item.gold.first().map(String::as_str).unwrap_or("");
                    self.bleu2 += bleu_n(hyp, reference, 2)?;
                    self.bleu4 += bleu_n(hyp, reference, 4)?;
                }
            }
        }
        Ok(())
    }

    fn row(&self, level: Option<String>, format: Option<String>, source: Option<String>) -> MetricRow {
        let mean = |sum: f64, n: usize| (n > 0).then(|| sum / n as f64);
        MetricRow {
            level,
            format,
            source,
            count: self.count,
            unparseable: self.unparseable,
            missing: self.missing,
            accuracy: mean(self.correct as f64, self.choice_n),
            precision: mean(self.prf.precision, self.maq_n),
            recall: mean(self.prf.recall, self.maq_n),
            f1: mean(self.prf.f1, self.maq_n),
            bleu2: mean(self.bleu2, self.open_n),
            bleu4: mean(self.bleu4, self.open_n),
        }
    }
}

type GroupKey = (Option<String>, Option<String>, Option<String>);

/// Scores every benchmark item. Predictions for unknown qids are an error;
/// for repeated qids the last prediction wins.
pub fn evaluate(
    predictions: &[PredictionRecord],
    items: &[QAItem],
    group_by: &[GroupField],
) -> Result<EvalReport, EvalError> {
    if items.is_empty() {
        return Err(EvalError::EmptyItems);
    }
    let mut by_qid: HashMap<&str, &QAItem> = HashMap::with_capacity(items.len());
    for item in items {
        if by_qid.insert(item.qid.as_str(), item).is_some() {
            return Err(EvalError::DuplicateItem(item.qid.clone()));
        }
    }
    let unknown: BTreeSet<String> = predictions
        .iter()
        .filter(|p| !by_qid.contains_key(p.qid.as_str()))
        .map(|p| p.qid.clone())
        .collect();
    if !unknown.is_empty() {
        return Err(EvalError::UnknownQids(unknown.into_iter().collect()));
    }
    let mut latest: HashMap<&str, &str> = HashMap::new();
    let mut duplicates = BTreeSet::new();
    for p in predictions {
        if latest.insert(p.qid.as_str(), p.prediction.as_str()).is_some() {
            log::warn!("duplicate prediction for `{}`; keeping the last one", p.qid);
            duplicates.insert(p.qid.clone());
        }
    }

    let mut overall = Acc::default();
    let mut groups: BTreeMap<GroupKey, Acc> = BTreeMap::new();
    for item in items {
        let parsed = latest.get(item.qid.as_str()).map(|raw| parse_answer(raw, item));
        let key = (
            group_by.contains(&GroupField::Level).then(|| item.level.to_string()),
            group_by.contains(&GroupField::Format).then(|| item.format.to_string()),
            group_by.contains(&GroupField::Source).then(|| item.source.clone()),
        );
        groups.entry(key).or_default().add(item, parsed.as_ref())?;
        overall.add(item, parsed.as_ref())?;
    }
    Ok(EvalReport {
        group_by: group_by.to_vec(),
        groups: groups
            .into_iter()
            .map(|((l, f, s), acc)| acc.row(l, f, s))
            .collect(),
        overall: overall.row(None, None, None),
        duplicate_predictions: duplicates.into_iter().collect(),
    })
}

impl EvalReport {
    /// Aligned plain-text table, one row per group plus an overall row.
    pub fn to_table(&self) -> String {
        let header = [
            "level", "format", "source", "n", "unparsed", "missing", "acc", "prec", "recall", "f1",
            "bleu2", "bleu4",
        ];
        let cell = |v: &Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        let text = |v: &Option<String>| v.clone().unwrap_or_else(|| "*".to_string());
        let mut rows: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        for r in self.groups.iter().chain(std::iter::once(&self.overall)) {
            rows.push(vec![
                text(&r.level),
                text(&r.format),
                text(&r.source),
                r.count.to_string(),
                r.unparseable.to_string(),
                r.missing.to_string(),
                cell(&r.accuracy),
                cell(&r.precision),
                cell(&r.recall),
                cell(&r.f1),
                cell(&r.bleu2),
                cell(&r.bleu4),
            ]);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &rows {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (v, w))| if c < 3 { format!("{v:<w$}") } else { format!("{v:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }
}
