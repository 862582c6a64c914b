//! The curation loops: growing a corpus batch by batch under the compactness
//! gate while watching the gap against the full pool, and growing a question
//! set by generating questions where the corpus is dense but questions are
//! thin.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compactness::{check_t_c, correlation_of_log_fields, gate, CompactnessError};
use crate::density::{
    log_add_exp, log_kernel_sums, normalize_log_sum, select_gap, DensityError, GapSelection,
    KdeParams, ThresholdMode,
};
use crate::encoder::{EncodeError, TextEncoder};
use crate::hooks::{GapPoint, HookError, QaGenRequest, QaGenerator};
use crate::qagen::{validate_item, Provenance, QAItem};
use crate::store::{BatchPartition, BatchStrategy, Dataset, EmbeddingRecord, Role, StoreError};

#[derive(Debug, Error)]
pub enum CuratorError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("the batch partition is empty")]
    EmptyPartition,
    #[error("the batch partition does not cover the pool exactly")]
    PartitionMismatch,
    #[error("the pool is empty")]
    EmptyPool,
    #[error("the corpus is empty")]
    EmptyCorpus,
    #[error("duplicate question id `{0}`")]
    DuplicateQuestion(String),
    #[error("cannot embed item `{qid}`: {message}")]
    Embedding { qid: String, message: String },
    #[error("trace line {line}: {message}")]
    Trace { line: usize, message: String },
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Compactness(#[from] CompactnessError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Hook(#[from] HookError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

fn default_h() -> f64 {
    KdeParams::DEFAULT_BANDWIDTH
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CuratorConfig {
    #[serde(default = "default_h")]
    pub h: f64,
    pub t_c: f64,
    pub t_d: f64,
    pub epsilon: f64,
    pub max_rounds: usize,
    /// Round cap for the question loop; `max_rounds` when absent.
    pub qa_max_rounds: Option<usize>,
    pub seed: u64,
    pub batch_strategy: BatchStrategy,
    /// Visit batches in a seeded random order instead of partition order.
    pub shuffle_batches: bool,
    pub threshold_mode: ThresholdMode,
}

impl Default for CuratorConfig {
    fn default() -> Self {
        CuratorConfig {
            h: default_h(),
            t_c: 0.05,
            t_d: 0.6,
            epsilon: 0.05,
            max_rounds: 100,
            qa_max_rounds: None,
            seed: 0,
            batch_strategy: BatchStrategy::BySource,
            shuffle_batches: false,
            threshold_mode: ThresholdMode::FillFraction,
        }
    }
}

impl CuratorConfig {
    pub fn validate(&self) -> Result<(), CuratorError> {
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(CuratorError::Config(format!("h must be positive, got {}", self.h)));
        }
        check_t_c(self.t_c).map_err(|e| CuratorError::Config(e.to_string()))?;
        let t_d_ok = match self.threshold_mode {
            ThresholdMode::FillFraction => (0.0..=1.0).contains(&self.t_d),
            ThresholdMode::Literal => self.t_d.is_finite(),
        };
        if !t_d_ok {
            return Err(CuratorError::Config(format!("t_d must lie in [0, 1], got {}", self.t_d)));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(CuratorError::Config(format!(
                "epsilon must be non-negative, got {}",
                self.epsilon
            )));
        }
        if self.max_rounds == 0 || self.qa_max_rounds == Some(0) {
            return Err(CuratorError::Config("round caps must be at least 1".into()));
        }
        if let BatchStrategy::FixedSize { k: 0 } = self.batch_strategy {
            return Err(CuratorError::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn kde(&self) -> Result<KdeParams, CuratorError> {
        Ok(KdeParams::new(self.h)?)
    }

    fn selection(&self) -> GapSelection {
        GapSelection {
            t_d: self.t_d,
            slack: self.epsilon,
            mode: self.threshold_mode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accepted,
    Rejected,
    /// Admitted by the completion pass despite failing the gate.
    Forced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Exhausted,
    GapClosed,
    MaxRounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRound {
    pub round: usize,
    /// 1 for the first sweep, 2 for re-proposals and forced admissions.
    pub pass: u8,
    pub batch_id: String,
    pub decision: Decision,
    /// Absent for the first admitted batch, which needs no gate.
    pub r: Option<f64>,
    pub degenerate: bool,
    pub gap_before: usize,
    pub gap_after: usize,
    pub gap_in_batch: usize,
    pub batch_size: usize,
    pub corpus_size_before: usize,
    pub corpus_size_after: usize,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaRound {
    pub round: usize,
    pub bootstrap: bool,
    /// Cutoff used on the deltas; absent for the bootstrap round.
    pub threshold: Option<f64>,
    pub gap_count: usize,
    pub gap_point_ids: Vec<String>,
    pub new_items: Vec<String>,
    pub rejected_items: Vec<String>,
    pub questions_before: usize,
    pub questions_after: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterestRecord {
    pub injected: Vec<String>,
    pub questions_before: usize,
    pub questions_after: usize,
}

/// One line of the trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum TraceLine {
    Corpus(CorpusRound),
    CorpusEnd { terminated_reason: Termination, corpus_size: usize, gap_count: usize },
    Qa(QaRound),
    QaEnd { terminated_reason: Termination, question_count: usize },
    Interest(InterestRecord),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CurationTrace {
    pub corpus_rounds: Vec<CorpusRound>,
    pub corpus_termination: Option<Termination>,
    pub final_gap_count: usize,
    pub qa_rounds: Vec<QaRound>,
    pub qa_termination: Option<Termination>,
    pub interest: Option<InterestRecord>,
}

impl CurationTrace {
    pub fn lines(&self) -> Vec<TraceLine> {
        let mut out: Vec<TraceLine> = self.corpus_rounds.iter().cloned().map(TraceLine::Corpus).collect();
        if let Some(reason) = self.corpus_termination {
            out.push(TraceLine::CorpusEnd {
                terminated_reason: reason,
                corpus_size: self.corpus_rounds.last().map_or(0, |r| r.corpus_size_after),
                gap_count: self.final_gap_count,
            });
        }
        out.extend(self.qa_rounds.iter().cloned().map(TraceLine::Qa));
        if let Some(reason) = self.qa_termination {
            out.push(TraceLine::QaEnd {
                terminated_reason: reason,
                question_count: self.qa_rounds.last().map_or(0, |r| r.questions_after),
            });
        }
        if let Some(i) = &self.interest {
            out.push(TraceLine::Interest(i.clone()));
        }
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for line in self.lines() {
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("trace JSON is UTF-8")
    }

    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self, CuratorError> {
        let mut trace = CurationTrace::default();
        for (i, line) in reader.lines().enumerate() {
            let err = |message: String| CuratorError::Trace { line: i + 1, message };
            let line = line.map_err(|e| err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line).map_err(|e| err(e.to_string()))? {
                TraceLine::Corpus(r) => trace.corpus_rounds.push(r),
                TraceLine::CorpusEnd { terminated_reason, gap_count, .. } => {
                    trace.corpus_termination = Some(terminated_reason);
                    trace.final_gap_count = gap_count;
                }
                TraceLine::Qa(r) => trace.qa_rounds.push(r),
                TraceLine::QaEnd { terminated_reason, .. } => trace.qa_termination = Some(terminated_reason),
                TraceLine::Interest(r) => trace.interest = Some(r),
            }
        }
        Ok(trace)
    }
}

/// Per-batch state for the corpus loop: kernel sums of each batch and of the
/// growing corpus, all evaluated at every pool point.
struct CorpusState<'a> {
    params: KdeParams,
    epsilon: f64,
    points: Vec<&'a [f64]>,
    pool_log_density: Vec<f64>,
    batch_rows: Vec<Vec<usize>>,
    batch_sums: Vec<Option<Vec<f64>>>,
    corpus_sums: Vec<f64>,
    corpus_rows: Vec<usize>,
    gap: Vec<bool>,
    gap_count: usize,
}

impl<'a> CorpusState<'a> {
    fn new(s: &'a Dataset, partition: &BatchPartition, params: KdeParams, epsilon: f64) -> Self {
        let points: Vec<&[f64]> = s.iter().map(|r| r.vector.as_slice()).collect();
        let pool_log_density = log_kernel_sums(&points, &points, params)
            .into_iter()
            .map(|v| normalize_log_sum(v, points.len(), params))
            .collect();
        let batch_rows = partition
            .batches
            .iter()
            .map(|b| {
                b.record_ids
                    .iter()
                    .map(|id| s.position(id).expect("partition checked against pool"))
                    .collect()
            })
            .collect();
        let n = points.len();
        CorpusState {
            params,
            epsilon,
            pool_log_density,
            batch_rows,
            batch_sums: vec![None; partition.len()],
            corpus_sums: vec![f64::NEG_INFINITY; n],
            corpus_rows: Vec::new(),
            gap: vec![true; n],
            gap_count: n,
            points,
        }
    }

    fn sums(&mut self, b: usize) -> &[f64] {
        if self.batch_sums[b].is_none() {
            let samples: Vec<&[f64]> = self.batch_rows[b].iter().map(|&i| self.points[i]).collect();
            self.batch_sums[b] = Some(log_kernel_sums(&samples, &self.points, self.params));
        }
        self.batch_sums[b].as_deref().expect("just filled")
    }

    fn gap_in(&self, b: usize) -> usize {
        self.batch_rows[b].iter().filter(|&&i| self.gap[i]).count()
    }

    /// Correlation of the batch and corpus densities over their points.
    fn r(&mut self, b: usize) -> Result<f64, CompactnessError> {
        let m_x = self.batch_rows[b].len();
        let m_c = self.corpus_rows.len();
        let params = self.params;
        let rows: Vec<usize> = self.batch_rows[b].iter().chain(&self.corpus_rows).copied().collect();
        let sums = self.sums(b);
        let fx: Vec<f64> = rows.iter().map(|&i| normalize_log_sum(sums[i], m_x, params)).collect();
        let fc: Vec<f64> = rows
            .iter()
            .map(|&i| normalize_log_sum(self.corpus_sums[i], m_c, params))
            .collect();
        correlation_of_log_fields(&fx, &fc)
    }

    fn admit(&mut self, b: usize) {
        self.sums(b);
        let sums = self.batch_sums[b].as_ref().expect("computed above");
        for (c, &x) in self.corpus_sums.iter_mut().zip(sums) {
            *c = log_add_exp(*c, x);
        }
        self.corpus_rows.extend(&self.batch_rows[b]);
        let m_c = self.corpus_rows.len();
        self.gap_count = 0;
        for (j, g) in self.gap.iter_mut().enumerate() {
            let delta = self.pool_log_density[j] - normalize_log_sum(self.corpus_sums[j], m_c, self.params);
            *g = delta > self.epsilon;
            self.gap_count += usize::from(*g);
        }
    }
}

/// Grows a corpus from the pool `s` one batch per round.
///
/// The first sweep offers every batch in order to the compactness gate.
/// Rejected batches are then offered once more, gap-richest first; one that
/// still fails the gate while holding current gap points is admitted anyway
/// and marked `forced`. The run therefore takes at most two rounds per
/// batch, and never more than `max_rounds`.
pub fn expand_corpus(
    s: &Dataset,
    partition: &BatchPartition,
    config: &CuratorConfig,
) -> Result<(Dataset, CurationTrace), CuratorError> {
    config.validate()?;
    if s.is_empty() {
        return Err(CuratorError::EmptyPool);
    }
    if partition.is_empty() {
        return Err(CuratorError::EmptyPartition);
    }
    if !partition.is_partition_of(s) {
        return Err(CuratorError::PartitionMismatch);
    }
    let mut state = CorpusState::new(s, partition, config.kde()?, config.epsilon);
    let mut order: Vec<usize> = (0..partition.len()).collect();
    if config.shuffle_batches {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    }

    let mut trace = CurationTrace::default();
    let mut pending = Vec::new();
    let mut stopped = false;
    for &b in &order {
        if trace.corpus_rounds.len() == config.max_rounds {
            stopped = true;
            break;
        }
        let round = corpus_round(&mut state, partition, b, 1, config.t_c, trace.corpus_rounds.len() + 1)?;
        if round.decision == Decision::Rejected {
            pending.push(b);
        }
        trace.corpus_rounds.push(round);
    }
    while !stopped && !pending.is_empty() {
        if trace.corpus_rounds.len() == config.max_rounds {
            stopped = true;
            break;
        }
        // most gap points first, ties in visiting order
        let pick = (0..pending.len())
            .max_by_key(|&k| (state.gap_in(pending[k]), std::cmp::Reverse(k)))
            .expect("pending is non-empty");
        let b = pending.remove(pick);
        let round = corpus_round(&mut state, partition, b, 2, config.t_c, trace.corpus_rounds.len() + 1)?;
        trace.corpus_rounds.push(round);
    }

    trace.corpus_termination = Some(if stopped {
        Termination::MaxRounds
    } else if state.gap_count == 0 {
        Termination::GapClosed
    } else {
        Termination::Exhausted
    });
    trace.final_gap_count = state.gap_count;

    let mut corpus = Dataset::empty("corpus", Role::Corpus, s.dim());
    for &i in &state.corpus_rows {
        corpus.push(s.records()[i].clone())?;
    }
    Ok((corpus, trace))
}

fn corpus_round(
    state: &mut CorpusState<'_>,
    partition: &BatchPartition,
    b: usize,
    pass: u8,
    t_c: f64,
    round: usize,
) -> Result<CorpusRound, CuratorError> {
    let gap_before = state.gap_count;
    let gap_in_batch = state.gap_in(b);
    let size_before = state.corpus_rows.len();
    let (decision, r, degenerate) = if size_before == 0 {
        (Decision::Accepted, None, false)
    } else {
        let (accepted, r, degenerate) = gate(state.r(b), t_c)?;
        let decision = if accepted {
            Decision::Accepted
        } else if pass == 2 && gap_before > 0 && gap_in_batch > 0 {
            Decision::Forced
        } else {
            Decision::Rejected
        };
        (decision, Some(r), degenerate)
    };
    if decision != Decision::Rejected {
        state.admit(b);
    }
    log::debug!(
        "round {round}: batch {} {:?} (r = {r:?}, gap {gap_before} -> {})",
        partition.batches[b].id,
        decision,
        state.gap_count
    );
    Ok(CorpusRound {
        round,
        pass,
        batch_id: partition.batches[b].id.clone(),
        decision,
        r,
        degenerate,
        gap_before,
        gap_after: state.gap_count,
        gap_in_batch,
        batch_size: state.batch_rows[b].len(),
        corpus_size_before: size_before,
        corpus_size_after: state.corpus_rows.len(),
        members: partition.batches[b].record_ids.clone(),
    })
}

/// How generated questions are placed in the embedding space.
#[derive(Clone, Copy)]
pub enum ItemEmbedder<'a> {
    /// Encode the question text.
    Text(&'a dyn TextEncoder),
    /// Mean vector of the item's source records. Useful for synthetic worlds
    /// that have vectors but no text model.
    SourceCentroid,
}

impl ItemEmbedder<'_> {
    fn embed(&self, items: &[QAItem], lookup: &[&Dataset], dim: usize) -> Result<Vec<Vec<f64>>, CuratorError> {
        if items.is_empty() {
            return Ok(Vec::new());
        }
        let vectors = match self {
            ItemEmbedder::Text(encoder) => {
                let texts: Vec<String> = items.iter().map(|i| i.question.clone()).collect();
                encoder.encode(&texts)?
            }
            ItemEmbedder::SourceCentroid => items
                .iter()
                .map(|item| centroid(item, lookup, dim))
                .collect::<Result<_, _>>()?,
        };
        if let Some((item, v)) = items.iter().zip(&vectors).find(|(_, v)| v.len() != dim) {
            return Err(CuratorError::Embedding {
                qid: item.qid.clone(),
                message: format!("encoder returned dimension {}, corpus has {dim}", v.len()),
            });
        }
        Ok(vectors)
    }
}

fn centroid(item: &QAItem, lookup: &[&Dataset], dim: usize) -> Result<Vec<f64>, CuratorError> {
    let mut sum = vec![0.0; dim];
    let mut n = 0usize;
    for id in &item.source_ids {
        if let Some(r) = lookup.iter().find_map(|d| d.get(id)) {
            sum.iter_mut().zip(&r.vector).for_each(|(s, v)| *s += v);
            n += 1;
        }
    }
    if n == 0 {
        return Err(CuratorError::Embedding {
            qid: item.qid.clone(),
            message: "no source record has a vector".into(),
        });
    }
    Ok(sum.into_iter().map(|s| s / n as f64).collect())
}

/// A question set: the items and their embeddings, kept in step.
#[derive(Debug, Clone)]
pub struct QuestionSet {
    pub dataset: Dataset,
    pub items: Vec<QAItem>,
}

impl QuestionSet {
    pub fn empty(dim: usize) -> Self {
        QuestionSet {
            dataset: Dataset::empty("questions", Role::Questions, dim),
            items: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    fn append(&mut self, items: Vec<QAItem>, vectors: Vec<Vec<f64>>) -> Result<(), CuratorError> {
        for (item, vector) in items.into_iter().zip(vectors) {
            let record = EmbeddingRecord::new(item.qid.clone(), item.source.clone(), vector)
                .with_text(item.question.clone());
            self.dataset.push(record).map_err(|e| match e {
                StoreError::DuplicateId { id, .. } => CuratorError::DuplicateQuestion(id),
                other => other.into(),
            })?;
            self.items.push(item);
        }
        Ok(())
    }
}

pub struct QaRoundOutcome {
    pub questions: QuestionSet,
    pub new_items: Vec<QAItem>,
    pub entry: QaRound,
}

/// One round of question generation. With no questions yet, every corpus
/// record is a gap point; otherwise the gap is `select_gap(C, Q)`. Returned
/// items that reference no requested gap point, repeat an existing qid, or
/// break a format rule are dropped and listed in the entry.
pub fn qa_round(
    c: &Dataset,
    q: &QuestionSet,
    config: &CuratorConfig,
    generator: &mut dyn QaGenerator,
    embedder: ItemEmbedder<'_>,
    round: usize,
) -> Result<QaRoundOutcome, CuratorError> {
    config.validate()?;
    if c.is_empty() {
        return Err(CuratorError::EmptyCorpus);
    }
    let bootstrap = q.is_empty();
    let (gap_ids, threshold) = if bootstrap {
        (c.iter().map(|r| r.id.clone()).collect::<Vec<_>>(), None)
    } else {
        let gap = select_gap(c, &q.dataset, config.kde()?, config.selection())?;
        (gap.point_ids, Some(gap.threshold_used))
    };
    let mut entry = QaRound {
        round,
        bootstrap,
        threshold,
        gap_count: gap_ids.len(),
        gap_point_ids: gap_ids.clone(),
        new_items: Vec::new(),
        rejected_items: Vec::new(),
        questions_before: q.len(),
        questions_after: q.len(),
    };
    if gap_ids.is_empty() {
        return Ok(QaRoundOutcome {
            questions: q.clone(),
            new_items: Vec::new(),
            entry,
        });
    }

    let gap_points = gap_ids
        .iter()
        .map(|id| {
            let r = c.get(id).or_else(|| q.dataset.get(id)).expect("gap ids come from C or Q");
            GapPoint {
                id: r.id.clone(),
                source: r.source.clone(),
                text: r.text.clone().unwrap_or_default(),
            }
        })
        .collect();
    let response = generator.generate(&QaGenRequest { gap_points })?;

    let requested: HashSet<&str> = gap_ids.iter().map(String::as_str).collect();
    let mut seen: HashSet<String> = q.items.iter().map(|i| i.qid.clone()).collect();
    let mut accepted = Vec::new();
    for item in response.items {
        let reason = if !item.source_ids.iter().any(|s| requested.contains(s.as_str())) {
            Some("references no requested gap point".to_string())
        } else if seen.contains(&item.qid) {
            Some("duplicate qid".to_string())
        } else {
            validate_item(&item).err().map(|e| e.to_string())
        };
        match reason {
            Some(reason) => {
                log::warn!("rejected generated item `{}`: {reason}", item.qid);
                entry.rejected_items.push(item.qid);
            }
            None => {
                seen.insert(item.qid.clone());
                accepted.push(item);
            }
        }
    }

    let vectors = embedder.embed(&accepted, &[c, &q.dataset], c.dim())?;
    let mut questions = q.clone();
    questions.append(accepted.clone(), vectors)?;
    entry.new_items = accepted.iter().map(|i| i.qid.clone()).collect();
    entry.questions_after = questions.len();
    Ok(QaRoundOutcome {
        questions,
        new_items: accepted,
        entry,
    })
}

/// Appends user-supplied questions unconditionally, tagged `user_interest`.
pub fn inject_user_interest(
    q: &QuestionSet,
    interest: &[QAItem],
    embedder: ItemEmbedder<'_>,
    lookup: &[&Dataset],
) -> Result<QuestionSet, CuratorError> {
    let mut seen: HashSet<&str> = q.items.iter().map(|i| i.qid.as_str()).collect();
    for item in interest {
        if !seen.insert(item.qid.as_str()) {
            return Err(CuratorError::DuplicateQuestion(item.qid.clone()));
        }
        if item.question.trim().is_empty() {
            return Err(CuratorError::Embedding {
                qid: item.qid.clone(),
                message: "interest items need question text".into(),
            });
        }
    }
    let tagged: Vec<QAItem> = interest
        .iter()
        .cloned()
        .map(|mut i| {
            i.provenance = Provenance::UserInterest;
            i
        })
        .collect();
    let mut all_lookup = lookup.to_vec();
    all_lookup.push(&q.dataset);
    let vectors = embedder.embed(&tagged, &all_lookup, q.dataset.dim())?;
    let mut out = q.clone();
    out.append(tagged, vectors)?;
    Ok(out)
}

/// Runs the question loop until the gap closes, the generator stops
/// producing, or the question round cap is reached.
pub fn curate_questions(
    c: &Dataset,
    initial: QuestionSet,
    config: &CuratorConfig,
    generator: &mut dyn QaGenerator,
    embedder: ItemEmbedder<'_>,
    trace: &mut CurationTrace,
) -> Result<QuestionSet, CuratorError> {
    let mut q = initial;
    let mut reason = Termination::MaxRounds;
    for round in 1..=config.qa_max_rounds.unwrap_or(config.max_rounds) {
        let outcome = qa_round(c, &q, config, generator, embedder, round)?;
        let gap_empty = outcome.entry.gap_count == 0;
        let produced = !outcome.new_items.is_empty();
        trace.qa_rounds.push(outcome.entry);
        q = outcome.questions;
        if gap_empty {
            reason = Termination::GapClosed;
            break;
        }
        if !produced {
            reason = Termination::Exhausted;
            break;
        }
    }
    trace.qa_termination = Some(reason);
    Ok(q)
}

pub struct PipelineOutput {
    pub corpus: Dataset,
    pub questions: QuestionSet,
    pub trace: CurationTrace,
}

/// Corpus expansion, question generation from a whole-corpus bootstrap
/// onward, then user-interest injection.
pub fn run_pipeline(
    s: &Dataset,
    partition: &BatchPartition,
    interest: &[QAItem],
    config: &CuratorConfig,
    generator: &mut dyn QaGenerator,
    embedder: ItemEmbedder<'_>,
) -> Result<PipelineOutput, CuratorError> {
    let (corpus, mut trace) = expand_corpus(s, partition, config)?;
    let questions = curate_questions(
        &corpus,
        QuestionSet::empty(s.dim()),
        config,
        generator,
        embedder,
        &mut trace,
    )?;
    let questions = if interest.is_empty() {
        questions
    } else {
        let before = questions.len();
        let injected = inject_user_interest(&questions, interest, embedder, &[&corpus, s])?;
        trace.interest = Some(InterestRecord {
            injected: interest.iter().map(|i| i.qid.clone()).collect(),
            questions_before: before,
            questions_after: injected.len(),
        });
        injected
    };
    Ok(PipelineOutput {
        corpus,
        questions,
        trace,
    })
}
