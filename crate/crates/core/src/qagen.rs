//! Deterministic question generation from structured entity records.
//!
//! Binary and MCQ items come from text templates with `{field}`
//! placeholders; MAQ items come from conjunctive query patterns ("all staff
//! with dept = D and school = S") evaluated by a linear scan of the store.
//! Every generated item carries the [`Predicate`] that produced its gold
//! answer so the gold can be re-derived from the store at any time.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum QaGenError {
    #[error("duplicate entity id `{0}`")]
    DuplicateEntity(String),
    #[error("entity `{entity}` uses attribute `{field}` outside the declared schema")]
    OutsideSchema { entity: String, field: String },
    #[error("template `{template}`: {message}")]
    Template { template: String, message: String },
    #[error("duplicate template or pattern id `{0}`")]
    DuplicateTemplate(String),
    #[error("count must be at least 1")]
    ZeroCount,
    #[error("entity store is empty")]
    EmptyStore,
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Format {
    Binary,
    #[serde(rename = "MCQ")]
    Mcq,
    #[serde(rename = "MAQ")]
    Maq,
    Open,
}

impl Format {
    pub fn as_str(&self) -> &'static str {
        match self {
            Format::Binary => "Binary",
            Format::Mcq => "MCQ",
            Format::Maq => "MAQ",
            Format::Open => "Open",
        }
    }

    /// Candidate count required by the format (0 for free-form answers).
    pub fn candidate_count(&self) -> usize {
        match self {
            Format::Mcq => 4,
            Format::Maq => 8,
            Format::Binary | Format::Open => 0,
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Cognitive level: memorization, understanding, application, creating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    KM,
    KU,
    KA,
    KC,
}

impl Level {
    pub fn as_str(&self) -> &'static str {
        match self {
            Level::KM => "KM",
            Level::KU => "KU",
            Level::KA => "KA",
            Level::KC => "KC",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Binary→KM, MCQ→KU, MAQ→KU/KA, Open→KC.
pub fn level_allowed(format: Format, level: Level) -> bool {
    matches!(
        (format, level),
        (Format::Binary, Level::KM)
            | (Format::Mcq, Level::KU)
            | (Format::Maq, Level::KU)
            | (Format::Maq, Level::KA)
            | (Format::Open, Level::KC)
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Template,
    Relational,
    Faq,
    Forum,
    UserInterest,
    External,
}

/// One benchmark question. Golds are candidate texts for MCQ/MAQ, `yes` or
/// `no` for Binary, and the reference answer for Open items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(clippy::upper_case_acronyms)]
pub struct QAItem {
    pub qid: String,
    pub format: Format,
    pub level: Level,
    pub question: String,
    #[serde(default)]
    pub candidates: Vec<String>,
    pub gold: Vec<String>,
    pub provenance: Provenance,
    #[serde(default)]
    pub source_ids: Vec<String>,
    /// Data source used for grouping reports (staff, course, faq, ...).
    #[serde(default)]
    pub source: String,
}

pub const YES: &str = "yes";
pub const NO: &str = "no";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatViolation {
    #[error("{qid}: empty qid or question")]
    Empty { qid: String },
    #[error("{qid}: level {level} is not allowed for {format}")]
    Level { qid: String, format: Format, level: Level },
    #[error("{qid}: {format} needs {expected} candidates, found {found}")]
    CandidateCount { qid: String, format: Format, expected: usize, found: usize },
    #[error("{qid}: duplicate candidate `{candidate}`")]
    DuplicateCandidate { qid: String, candidate: String },
    #[error("{qid}: gold arity {found} is invalid for {format}")]
    GoldArity { qid: String, format: Format, found: usize },
    #[error("{qid}: gold `{gold}` is not among the candidates")]
    GoldNotCandidate { qid: String, gold: String },
    #[error("{qid}: binary gold must be `yes` or `no`, found `{gold}`")]
    BinaryGold { qid: String, gold: String },
}

/// Checks the format invariants of a single item.
pub fn validate_item(item: &QAItem) -> Result<(), FormatViolation> {
    let qid = || item.qid.clone();
    if item.qid.trim().is_empty() || item.question.trim().is_empty() {
        return Err(FormatViolation::Empty { qid: qid() });
    }
    if !level_allowed(item.format, item.level) {
        return Err(FormatViolation::Level {
            qid: qid(),
            format: item.format,
            level: item.level,
        });
    }
    let expected = item.format.candidate_count();
    if item.candidates.len() != expected {
        return Err(FormatViolation::CandidateCount {
            qid: qid(),
            format: item.format,
            expected,
            found: item.candidates.len(),
        });
    }
    let mut seen = HashSet::new();
    for c in &item.candidates {
        if !seen.insert(c.as_str()) {
            return Err(FormatViolation::DuplicateCandidate {
                qid: qid(),
                candidate: c.clone(),
            });
        }
    }
    let arity_ok = match item.format {
        Format::Binary | Format::Mcq | Format::Open => item.gold.len() == 1,
        Format::Maq => (1..=8).contains(&item.gold.len()),
    };
    if !arity_ok {
        return Err(FormatViolation::GoldArity {
            qid: qid(),
            format: item.format,
            found: item.gold.len(),
        });
    }
    match item.format {
        Format::Binary => {
            if item.gold[0] != YES && item.gold[0] != NO {
                return Err(FormatViolation::BinaryGold {
                    qid: qid(),
                    gold: item.gold[0].clone(),
                });
            }
        }
        Format::Open => {
            if item.gold[0].trim().is_empty() {
                return Err(FormatViolation::GoldArity {
                    qid: qid(),
                    format: item.format,
                    found: 0,
                });
            }
        }
        Format::Mcq | Format::Maq => {
            let mut golds = HashSet::new();
            for g in &item.gold {
                if !seen.contains(g.as_str()) {
                    return Err(FormatViolation::GoldNotCandidate {
                        qid: qid(),
                        gold: g.clone(),
                    });
                }
                if !golds.insert(g.as_str()) {
                    return Err(FormatViolation::GoldArity {
                        qid: qid(),
                        format: item.format,
                        found: item.gold.len(),
                    });
                }
            }
        }
    }
    Ok(())
}

pub fn write_items_jsonl<'a, W: Write>(
    items: impl IntoIterator<Item = &'a QAItem>,
    mut out: W,
) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_items_jsonl<R: BufRead>(reader: R) -> Result<Vec<QAItem>, QaGenError> {
    read_jsonl_lines(reader)
}

fn read_jsonl_lines<T: serde::de::DeserializeOwned, R: BufRead>(
    reader: R,
) -> Result<Vec<T>, QaGenError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let err = |message: String| QaGenError::Parse { line: i + 1, message };
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| err(e.to_string()))?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityType {
    Staff,
    Course,
    Generic,
}

impl EntityType {
    pub fn as_str(&self) -> &'static str {
        match self {
            EntityType::Staff => "staff",
            EntityType::Course => "course",
            EntityType::Generic => "generic",
        }
    }
}

/// An attribute holds a single string or a list of strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    One(String),
    Many(Vec<String>),
}

impl AttrValue {
    pub fn values(&self) -> &[String] {
        match self {
            AttrValue::One(v) => std::slice::from_ref(v),
            AttrValue::Many(vs) => vs,
        }
    }

    pub fn contains(&self, value: &str) -> bool {
        self.values().iter().any(|v| v == value)
    }

    fn display(&self) -> String {
        self.values().join(", ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub entity_id: String,
    pub entity_type: EntityType,
    pub attributes: BTreeMap<String, AttrValue>,
}

impl EntityRecord {
    pub fn get(&self, field: &str) -> Option<&AttrValue> {
        self.attributes.get(field)
    }

    /// The display label used for MAQ candidates; `entity_id` names the id itself.
    pub fn label(&self, label_field: &str) -> Option<String> {
        if label_field == "entity_id" {
            return Some(self.entity_id.clone());
        }
        self.get(label_field).map(AttrValue::display)
    }

    fn has(&self, field: &str, value: &str) -> bool {
        self.get(field).is_some_and(|v| v.contains(value))
    }
}

/// Immutable entity records with a declared attribute schema.
#[derive(Debug, Clone)]
pub struct EntityStore {
    records: Vec<EntityRecord>,
    index: HashMap<String, usize>,
    schema: BTreeSet<String>,
}

impl EntityStore {
    /// Builds a store whose schema is the union of all attribute names.
    pub fn new(records: Vec<EntityRecord>) -> Result<Self, QaGenError> {
        let schema = records
            .iter()
            .flat_map(|r| r.attributes.keys().cloned())
            .collect();
        Self::with_schema(records, schema)
    }

    pub fn with_schema(
        records: Vec<EntityRecord>,
        schema: BTreeSet<String>,
    ) -> Result<Self, QaGenError> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if index.insert(r.entity_id.clone(), i).is_some() {
                return Err(QaGenError::DuplicateEntity(r.entity_id.clone()));
            }
            if let Some(field) = r.attributes.keys().find(|k| !schema.contains(*k)) {
                return Err(QaGenError::OutsideSchema {
                    entity: r.entity_id.clone(),
                    field: field.clone(),
                });
            }
        }
        Ok(EntityStore {
            records,
            index,
            schema,
        })
    }

    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self, QaGenError> {
        Self::new(read_jsonl_lines(reader)?)
    }

    pub fn records(&self) -> &[EntityRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, entity_id: &str) -> Option<&EntityRecord> {
        self.index.get(entity_id).map(|&i| &self.records[i])
    }

    pub fn schema(&self) -> &BTreeSet<String> {
        &self.schema
    }

    fn has_field(&self, field: &str) -> bool {
        field == "entity_id" || self.schema.contains(field)
    }

    fn of_type(&self, ty: Option<EntityType>) -> impl Iterator<Item = &EntityRecord> {
        self.records
            .iter()
            .filter(move |r| ty.is_none_or(|t| r.entity_type == t))
    }

    /// Distinct values of `field` across entities of the given type, sorted.
    pub fn value_pool(&self, field: &str, ty: Option<EntityType>) -> Vec<String> {
        self.of_type(ty)
            .filter_map(|r| r.get(field))
            .flat_map(|v| v.values().iter().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    /// Alternate true and false statements.
    #[default]
    Both,
    Positive,
    Negative,
}

/// Where wrong options come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistractorPolicy {
    /// Other values of the same attribute, across entities of the same type.
    #[default]
    SameField,
}

/// A fill-in template for Binary or MCQ questions.
///
/// Binary templates must mention `{target_field}`; the slot receives either
/// a true value or a distractor. MCQ templates must not mention it, since it
/// is the answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplatePattern {
    pub id: String,
    pub text: String,
    pub format: Format,
    #[serde(default)]
    pub level: Option<Level>,
    pub target_field: String,
    #[serde(default)]
    pub entity_type: Option<EntityType>,
    #[serde(default)]
    pub polarity: Polarity,
    #[serde(default)]
    pub distractors: DistractorPolicy,
}

fn default_label_field() -> String {
    "name".to_string()
}

/// A conjunctive relational query: entities whose `conditions` fields all
/// hold the instantiated values. Candidates are entity labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryPattern {
    pub id: String,
    pub text: String,
    pub conditions: Vec<String>,
    #[serde(default = "default_label_field")]
    pub label_field: String,
    #[serde(default)]
    pub entity_type: Option<EntityType>,
}

impl QueryPattern {
    /// Single-attribute lookups test understanding; multi-attribute joins test application.
    pub fn level(&self) -> Level {
        if self.conditions.len() <= 1 {
            Level::KU
        } else {
            Level::KA
        }
    }
}

/// The template file: fill-in templates plus relational patterns.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TemplateSet {
    #[serde(default)]
    pub templates: Vec<TemplatePattern>,
    #[serde(default)]
    pub patterns: Vec<QueryPattern>,
}

/// Placeholder names in order of appearance.
pub fn placeholders(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find('{') {
        let after = &rest[start + 1..];
        match after.find('}') {
            Some(end) => {
                let name = &after[..end];
                if !name.is_empty() && name.chars().all(|c| c.is_alphanumeric() || c == '_') {
                    out.push(name);
                }
                rest = &after[end + 1..];
            }
            None => break,
        }
    }
    out
}

fn fill(text: &str, entity: &EntityRecord, overrides: &[(&str, &str)]) -> String {
    let mut out = text.to_string();
    for name in placeholders(text) {
        let value = overrides
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| v.to_string())
            .or_else(|| entity.label(name))
            .unwrap_or_default();
        out = out.replacen(&format!("{{{name}}}"), &value, 1);
    }
    out
}

impl TemplateSet {
    /// Checks ids, formats and that every placeholder names a schema field.
    pub fn validate(&self, store: &EntityStore) -> Result<(), QaGenError> {
        let mut ids = HashSet::new();
        let bad = |id: &str, message: String| QaGenError::Template {
            template: id.to_string(),
            message,
        };
        for t in &self.templates {
            if !ids.insert(t.id.as_str()) {
                return Err(QaGenError::DuplicateTemplate(t.id.clone()));
            }
            if !matches!(t.format, Format::Binary | Format::Mcq) {
                return Err(bad(&t.id, format!("templates produce Binary or MCQ, not {}", t.format)));
            }
            let level = t.level.unwrap_or(default_level(t.format));
            if !level_allowed(t.format, level) {
                return Err(bad(&t.id, format!("level {level} is not allowed for {}", t.format)));
            }
            if !store.has_field(&t.target_field) {
                return Err(bad(&t.id, format!("unknown target field `{}`", t.target_field)));
            }
            let names = placeholders(&t.text);
            if let Some(f) = names.iter().find(|f| !store.has_field(f)) {
                return Err(bad(&t.id, format!("placeholder `{{{f}}}` is not a schema field")));
            }
            let mentions_target = names.contains(&t.target_field.as_str());
            match t.format {
                Format::Binary if !mentions_target => {
                    return Err(bad(&t.id, "binary template must contain the target placeholder".into()))
                }
                Format::Mcq if mentions_target => {
                    return Err(bad(&t.id, "MCQ template would reveal its answer".into()))
                }
                _ => {}
            }
        }
        for p in &self.patterns {
            if !ids.insert(p.id.as_str()) {
                return Err(QaGenError::DuplicateTemplate(p.id.clone()));
            }
            if p.conditions.is_empty() {
                return Err(bad(&p.id, "pattern has no conditions".into()));
            }
            if let Some(f) = p.conditions.iter().find(|f| !store.has_field(f)) {
                return Err(bad(&p.id, format!("unknown condition field `{f}`")));
            }
            if !store.has_field(&p.label_field) {
                return Err(bad(&p.id, format!("unknown label field `{}`", p.label_field)));
            }
            if let Some(f) = placeholders(&p.text)
                .into_iter()
                .find(|f| !p.conditions.iter().any(|c| c == f))
            {
                return Err(bad(&p.id, format!("placeholder `{{{f}}}` is not a condition")));
            }
        }
        Ok(())
    }
}

fn default_level(format: Format) -> Level {
    match format {
        Format::Binary => Level::KM,
        Format::Mcq => Level::KU,
        Format::Maq => Level::KA,
        Format::Open => Level::KC,
    }
}

/// The rule that produced an item's gold answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predicate {
    /// Binary: gold is `yes` iff the entity's field holds the value.
    HasValue { entity_id: String, field: String, value: String },
    /// MCQ: gold is every candidate the entity's field holds.
    ValueOf { entity_id: String, field: String },
    /// MAQ: gold is every candidate labelling an entity that meets all conditions.
    Matches {
        entity_type: Option<EntityType>,
        conditions: Vec<(String, String)>,
        label_field: String,
    },
    /// Open items: the gold is the supplied reference.
    Given,
}

impl Predicate {
    /// Re-derives the gold answer of `item` from the store.
    pub fn evaluate(&self, store: &EntityStore, item: &QAItem) -> Result<Vec<String>, QaGenError> {
        match self {
            Predicate::HasValue { entity_id, field, value } => {
                let e = store
                    .get(entity_id)
                    .ok_or_else(|| QaGenError::UnknownEntity(entity_id.clone()))?;
                Ok(vec![if e.has(field, value) { YES } else { NO }.to_string()])
            }
            Predicate::ValueOf { entity_id, field } => {
                let e = store
                    .get(entity_id)
                    .ok_or_else(|| QaGenError::UnknownEntity(entity_id.clone()))?;
                Ok(item
                    .candidates
                    .iter()
                    .filter(|c| e.has(field, c))
                    .cloned()
                    .collect())
            }
            Predicate::Matches {
                entity_type,
                conditions,
                label_field,
            } => {
                let matching: HashSet<String> = store
                    .of_type(*entity_type)
                    .filter(|e| conditions.iter().all(|(f, v)| e.has(f, v)))
                    .filter_map(|e| e.label(label_field))
                    .collect();
                Ok(item
                    .candidates
                    .iter()
                    .filter(|c| matching.contains(*c))
                    .cloned()
                    .collect())
            }
            Predicate::Given => Ok(item.gold.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedItem {
    pub item: QAItem,
    pub predicate: Predicate,
}

impl GeneratedItem {
    /// True when re-running the predicate reproduces the stored gold.
    pub fn gold_reproduces(&self, store: &EntityStore) -> Result<bool, QaGenError> {
        let mut want = self.predicate.evaluate(store, &self.item)?;
        let mut have = self.item.gold.clone();
        want.sort();
        have.sort();
        Ok(want == have)
    }
}

/// Why a template, pattern or instance produced nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipNote {
    pub template_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Generation {
    pub items: Vec<GeneratedItem>,
    pub skipped: Vec<SkipNote>,
}

impl Generation {
    fn skip(&mut self, template_id: &str, reason: impl Into<String>) {
        let reason = reason.into();
        log::debug!("{template_id}: skipped: {reason}");
        self.skipped.push(SkipNote {
            template_id: template_id.to_string(),
            reason,
        });
    }

    pub fn qa_items(&self) -> Vec<QAItem> {
        self.items.iter().map(|g| g.item.clone()).collect()
    }
}

fn template_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Splits `count` across `parts` as evenly as possible, earlier parts first.
fn split_count(count: usize, parts: usize) -> Vec<usize> {
    (0..parts)
        .map(|i| count / parts + usize::from(i < count % parts))
        .collect()
}

fn eligible<'a>(store: &'a EntityStore, t: &TemplatePattern) -> Vec<&'a EntityRecord> {
    let names = placeholders(&t.text);
    store
        .of_type(t.entity_type)
        .filter(|e| e.get(&t.target_field).is_some())
        .filter(|e| names.iter().all(|n| e.label(n).is_some()))
        .collect()
}

fn binary_item(
    t: &TemplatePattern,
    entity: &EntityRecord,
    positive: bool,
    pool: &[String],
    qid: String,
    rng: &mut ChaCha8Rng,
) -> Option<GeneratedItem> {
    let truth = entity.get(&t.target_field)?;
    let value = if positive {
        truth.values().choose(rng)?.clone()
    } else {
        let options: Vec<&String> = pool.iter().filter(|v| !truth.contains(v)).collect();
        (*options.choose(rng)?).clone()
    };
    let question = fill(&t.text, entity, &[(t.target_field.as_str(), value.as_str())]);
    Some(GeneratedItem {
        item: QAItem {
            qid,
            format: Format::Binary,
            level: t.level.unwrap_or(Level::KM),
            question,
            candidates: Vec::new(),
            gold: vec![if positive { YES } else { NO }.to_string()],
            provenance: Provenance::Template,
            source_ids: vec![entity.entity_id.clone()],
            source: entity.entity_type.as_str().to_string(),
        },
        predicate: Predicate::HasValue {
            entity_id: entity.entity_id.clone(),
            field: t.target_field.clone(),
            value,
        },
    })
}

fn mcq_item(
    t: &TemplatePattern,
    entity: &EntityRecord,
    pool: &[String],
    qid: String,
    rng: &mut ChaCha8Rng,
) -> Option<GeneratedItem> {
    let truth = entity.get(&t.target_field)?;
    let gold = truth.values().choose(rng)?.clone();
    let options: Vec<&String> = pool.iter().filter(|v| !truth.contains(v)).collect();
    if options.len() < 3 {
        return None;
    }
    let mut candidates: Vec<String> = options
        .choose_multiple(rng, 3)
        .map(|s| (*s).clone())
        .collect();
    candidates.push(gold.clone());
    candidates.shuffle(rng);
    Some(GeneratedItem {
        item: QAItem {
            qid,
            format: Format::Mcq,
            level: t.level.unwrap_or(Level::KU),
            question: fill(&t.text, entity, &[]),
            candidates,
            gold: vec![gold],
            provenance: Provenance::Template,
            source_ids: vec![entity.entity_id.clone()],
            source: entity.entity_type.as_str().to_string(),
        },
        predicate: Predicate::ValueOf {
            entity_id: entity.entity_id.clone(),
            field: t.target_field.clone(),
        },
    })
}

fn polarity_of(t: &TemplatePattern, global_index: usize) -> bool {
    match t.polarity {
        Polarity::Positive => true,
        Polarity::Negative => false,
        Polarity::Both => global_index.is_multiple_of(2),
    }
}

/// Yes/no statements about entity attributes, half true and half false.
/// A false statement swaps in another value of the same field; a field
/// with a single value store-wide cannot produce one, so such templates are
/// skipped unless they are positive-only.
pub fn gen_binary(
    store: &EntityStore,
    templates: &[TemplatePattern],
    count: usize,
    seed: u64,
) -> Result<Generation, QaGenError> {
    fill_templates(store, templates, Format::Binary, count, seed)
}

/// Four-option questions: the entity's value plus three other values of the
/// same field. Fields with fewer than four distinct values are skipped.
pub fn gen_mcq(
    store: &EntityStore,
    templates: &[TemplatePattern],
    count: usize,
    seed: u64,
) -> Result<Generation, QaGenError> {
    fill_templates(store, templates, Format::Mcq, count, seed)
}

fn fill_templates(
    store: &EntityStore,
    templates: &[TemplatePattern],
    format: Format,
    count: usize,
    seed: u64,
) -> Result<Generation, QaGenError> {
    if count == 0 {
        return Err(QaGenError::ZeroCount);
    }
    if store.is_empty() {
        return Err(QaGenError::EmptyStore);
    }
    let set = TemplateSet {
        templates: templates.to_vec(),
        patterns: Vec::new(),
    };
    set.validate(store)?;
    let mut out = Generation::default();
    let mut usable = Vec::new();
    for (index, t) in templates.iter().enumerate().filter(|(_, t)| t.format == format) {
        let pool = store.value_pool(&t.target_field, t.entity_type);
        let needs = match format {
            Format::Binary if t.polarity == Polarity::Positive => 1,
            Format::Binary => 2,
            _ => 4,
        };
        if pool.len() < needs {
            out.skip(
                &t.id,
                format!("field `{}` has {} distinct values, need {needs}", t.target_field, pool.len()),
            );
            continue;
        }
        let entities = eligible(store, t);
        if entities.is_empty() {
            out.skip(&t.id, "no entity carries the template's fields");
            continue;
        }
        usable.push((index, t, pool, entities));
    }
    let quotas = split_count(count, usable.len().max(1));
    let mut global = 0usize;
    for ((index, t, pool, mut entities), quota) in usable.into_iter().zip(quotas) {
        let mut rng = template_rng(seed, index);
        entities.shuffle(&mut rng);
        let mut cursor = 0usize;
        for j in 0..quota {
            let positive = polarity_of(t, global);
            let qid = format!("{}-{j:05}", t.id);
            let mut made = None;
            for _ in 0..entities.len() {
                let entity = entities[cursor % entities.len()];
                cursor += 1;
                made = match format {
                    Format::Binary => binary_item(t, entity, positive, &pool, qid.clone(), &mut rng),
                    _ => mcq_item(t, entity, &pool, qid.clone(), &mut rng),
                };
                if made.is_some() {
                    break;
                }
            }
            match made {
                Some(item) => {
                    out.items.push(item);
                    global += 1;
                }
                None => {
                    out.skip(&t.id, format!("no entity admits a distractor for item {j}"));
                    break;
                }
            }
        }
    }
    Ok(out)
}

type Combo = Vec<(String, String)>;

fn combos_of(entity: &EntityRecord, conditions: &[String]) -> Vec<Combo> {
    let mut combos: Vec<Combo> = vec![Vec::new()];
    for field in conditions {
        let Some(values) = entity.get(field) else {
            return Vec::new();
        };
        combos = combos
            .into_iter()
            .flat_map(|c| {
                values.values().iter().map(move |v| {
                    let mut next = c.clone();
                    next.push((field.clone(), v.clone()));
                    next
                })
            })
            .collect();
    }
    combos
}

enum MaqOutcome {
    Item(Box<GeneratedItem>),
    Skip(String),
}

fn maq_instance(
    store: &EntityStore,
    p: &QueryPattern,
    combo: &Combo,
    qid: String,
    rng: &mut ChaCha8Rng,
) -> MaqOutcome {
    let (matching, rest): (Vec<&EntityRecord>, Vec<&EntityRecord>) = store
        .of_type(p.entity_type)
        .partition(|e| combo.iter().all(|(f, v)| e.has(f, v)));
    if matching.is_empty() || matching.len() > 8 {
        return MaqOutcome::Skip(format!("{} entities match, need 1 to 8", matching.len()));
    }
    let gold: BTreeSet<String> = matching.iter().filter_map(|e| e.label(&p.label_field)).collect();
    if gold.len() != matching.len() {
        return MaqOutcome::Skip("matching entities share a label".into());
    }
    let pool: BTreeSet<String> = rest
        .iter()
        .filter_map(|e| e.label(&p.label_field))
        .filter(|l| !gold.contains(l))
        .collect();
    let pool: Vec<String> = pool.into_iter().collect();
    let need = 8 - gold.len();
    if pool.len() < need {
        return MaqOutcome::Skip(format!("only {} distractor labels, need {need}", pool.len()));
    }
    let mut candidates: Vec<String> = pool.choose_multiple(rng, need).cloned().collect();
    candidates.extend(gold.iter().cloned());
    candidates.shuffle(rng);
    let gold_in_order: Vec<String> = candidates.iter().filter(|c| gold.contains(*c)).cloned().collect();
    let values: Vec<(&str, &str)> = combo.iter().map(|(f, v)| (f.as_str(), v.as_str())).collect();
    let question = fill(&p.text, matching[0], &values);
    MaqOutcome::Item(Box::new(GeneratedItem {
        item: QAItem {
            qid,
            format: Format::Maq,
            level: p.level(),
            question,
            candidates,
            gold: gold_in_order,
            provenance: Provenance::Relational,
            source_ids: matching.iter().map(|e| e.entity_id.clone()).collect(),
            source: p
                .entity_type
                .unwrap_or(matching[0].entity_type)
                .as_str()
                .to_string(),
        },
        predicate: Predicate::Matches {
            entity_type: p.entity_type,
            conditions: combo.clone(),
            label_field: p.label_field.clone(),
        },
    }))
}

/// Multi-answer questions from conjunctive patterns. The gold set is every
/// entity meeting all conditions; instances with no match or more than
/// eight are skipped, never truncated.
pub fn gen_maq(
    store: &EntityStore,
    patterns: &[QueryPattern],
    count: usize,
    seed: u64,
) -> Result<Generation, QaGenError> {
    if count == 0 {
        return Err(QaGenError::ZeroCount);
    }
    if store.is_empty() {
        return Err(QaGenError::EmptyStore);
    }
    let set = TemplateSet {
        templates: Vec::new(),
        patterns: patterns.to_vec(),
    };
    set.validate(store)?;
    let mut out = Generation::default();
    let quotas = split_count(count, patterns.len().max(1));
    for ((index, p), quota) in patterns.iter().enumerate().zip(quotas) {
        let mut rng = template_rng(seed, index);
        let combos: BTreeSet<Combo> = store
            .of_type(p.entity_type)
            .flat_map(|e| combos_of(e, &p.conditions))
            .collect();
        let mut combos: Vec<Combo> = combos.into_iter().collect();
        combos.shuffle(&mut rng);
        let mut made = 0;
        for combo in &combos {
            if made == quota {
                break;
            }
            match maq_instance(store, p, combo, format!("{}-{made:05}", p.id), &mut rng) {
                MaqOutcome::Item(item) => {
                    out.items.push(*item);
                    made += 1;
                }
                MaqOutcome::Skip(reason) => out.skip(&p.id, reason),
            }
        }
        if made < quota {
            out.skip(&p.id, format!("produced {made} of {quota} requested items"));
        }
    }
    Ok(out)
}

/// Collapses whitespace runs and trims.
pub fn normalize_question(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// A question/answer pair taken as-is from an FAQ page or forum thread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
}

pub fn read_pairs_jsonl<R: BufRead>(reader: R) -> Result<Vec<QaPair>, QaGenError> {
    read_jsonl_lines(reader)
}

/// Turns existing question/answer pairs into open-ended KC items, dropping
/// pairs with an empty side and repeats of an already seen question.
pub fn gen_open_from_pairs(pairs: &[QaPair], source_tag: &str) -> Generation {
    let provenance = match source_tag {
        "faq" => Provenance::Faq,
        "forum" => Provenance::Forum,
        _ => Provenance::External,
    };
    let mut out = Generation::default();
    let mut seen = HashSet::new();
    for (i, pair) in pairs.iter().enumerate() {
        let question = normalize_question(&pair.question);
        let answer = pair.answer.trim();
        if question.is_empty() || answer.is_empty() {
            out.skip(source_tag, format!("pair {i} has an empty question or answer"));
            continue;
        }
        if !seen.insert(question.clone()) {
            continue;
        }
        let item = QAItem {
            qid: format!("{source_tag}-{:05}", out.items.len()),
            format: Format::Open,
            level: Level::KC,
            question,
            candidates: Vec::new(),
            gold: vec![answer.to_string()],
            provenance,
            source_ids: Vec::new(),
            source: source_tag.to_string(),
        };
        out.items.push(GeneratedItem {
            item,
            predicate: Predicate::Given,
        });
    }
    out
}

/// Questions about specific entities, used when a gap names corpus records
/// that correspond to entities. Every template and pattern is tried once per
/// entity; qids are `{prefix}-{template}-{entity}`.
pub fn gen_for_entities(
    store: &EntityStore,
    set: &TemplateSet,
    entity_ids: &[String],
    prefix: &str,
    seed: u64,
) -> Result<Generation, QaGenError> {
    set.validate(store)?;
    let mut out = Generation::default();
    let pools: Vec<Vec<String>> = set
        .templates
        .iter()
        .map(|t| store.value_pool(&t.target_field, t.entity_type))
        .collect();
    for (n, id) in entity_ids.iter().enumerate() {
        let entity = store
            .get(id)
            .ok_or_else(|| QaGenError::UnknownEntity(id.clone()))?;
        let mut rng = template_rng(seed, n);
        for (t, pool) in set.templates.iter().zip(&pools) {
            if t.entity_type.is_some_and(|ty| ty != entity.entity_type)
                || !eligible_one(entity, t)
            {
                continue;
            }
            let qid = format!("{prefix}-{}-{}", t.id, entity.entity_id);
            let item = match t.format {
                Format::Binary => binary_item(t, entity, polarity_of(t, n), pool, qid, &mut rng),
                _ => mcq_item(t, entity, pool, qid, &mut rng),
            };
            match item {
                Some(item) => out.items.push(item),
                None => out.skip(&t.id, format!("no distractor for `{}`", entity.entity_id)),
            }
        }
        for p in &set.patterns {
            if p.entity_type.is_some_and(|ty| ty != entity.entity_type) {
                continue;
            }
            let Some(combo) = combos_of(entity, &p.conditions).into_iter().next() else {
                continue;
            };
            let qid = format!("{prefix}-{}-{}", p.id, entity.entity_id);
            match maq_instance(store, p, &combo, qid, &mut rng) {
                MaqOutcome::Item(mut item) => {
                    // the requesting entity is always among the matches
                    if let Some(pos) = item.item.source_ids.iter().position(|s| s == id) {
                        item.item.source_ids.swap(0, pos);
                    }
                    out.items.push(*item);
                }
                MaqOutcome::Skip(reason) => out.skip(&p.id, reason),
            }
        }
    }
    Ok(out)
}

fn eligible_one(entity: &EntityRecord, t: &TemplatePattern) -> bool {
    entity.get(&t.target_field).is_some()
        && placeholders(&t.text).iter().all(|n| entity.label(n).is_some())
}
