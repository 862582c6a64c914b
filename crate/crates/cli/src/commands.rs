use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use compcomp_core::compactness::{redundancy_report, RedundancyReport, DEFAULT_COSINE_THRESHOLD};
use compcomp_core::curator::{
    curate_questions, expand_corpus, inject_user_interest, run_pipeline, CurationTrace, CuratorConfig,
    InterestRecord, ItemEmbedder, QuestionSet,
};
use compcomp_core::density::ThresholdMode;
use compcomp_core::encoder::{HashingEncoder, RemoteEncoder, TextEncoder};
use compcomp_core::eval::{evaluate, read_predictions_jsonl, GroupField};
use compcomp_core::hooks::{generator_from_spec, QaGenerator, TemplateGenerator};
use compcomp_core::qagen::{
    gen_binary, gen_maq, gen_mcq, gen_open_from_pairs, read_items_jsonl, read_pairs_jsonl, validate_item,
    write_items_jsonl, EntityStore, Format, GeneratedItem, Generation, Predicate, QAItem, TemplateSet,
};
use compcomp_core::report::{bounds, corpus_frames, frame_csv, frame_svg, question_frames, RoundFrame};
use compcomp_core::store::{
    ingest_binary, ingest_jsonl, partition_batches, BatchStrategy, Dataset, Role,
};
use serde::{Deserialize, Serialize};

use crate::exit::{coded, UNRESOLVED, VALIDATION};
use crate::fsio::{open, read_json, write_atomic, write_json, write_jsonl, write_with};
use crate::{fixture, stub};

/// Coverage-guided curation of retrieval corpora and QA benchmarks.
#[derive(Debug, Parser)]
#[command(name = "compcomp", version)]
pub struct Cli {
    /// JSON file with curation settings; command-line flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate an embedding file and write it back as canonical JSONL.
    Ingest(IngestArgs),
    /// Grow a corpus from a pool, then a question set from the corpus.
    Curate(CurateArgs),
    /// Generate QA items from an entity store and templates.
    Generate(GenerateArgs),
    /// Check QA items against the format rules and, optionally, their golds.
    Validate(ValidateArgs),
    /// Score predictions against a benchmark.
    Eval(EvalArgs),
    /// Write 2-D projections of each curation round as CSV and SVG.
    Report(ReportArgs),
    /// Write a small synthetic university for trying things out.
    Fixture(FixtureArgs),
    /// Produce predictions from a fake model with a fixed hit rate.
    StubPredict(StubArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    Jsonl,
    Binary,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Guessed from the extension when absent (.jsonl is JSONL, anything else binary).
    #[arg(long, value_enum)]
    pub format: Option<InputFormat>,
    /// Index file for binary input.
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Vector dimension for binary input; inferred when absent.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, value_enum, default_value = "space")]
    pub role: RoleArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RoleArg {
    Space,
    Corpus,
    Questions,
    Batch,
}

impl From<RoleArg> for Role {
    fn from(r: RoleArg) -> Self {
        match r {
            RoleArg::Space => Role::Space,
            RoleArg::Corpus => Role::Corpus,
            RoleArg::Questions => Role::Questions,
            RoleArg::Batch => Role::Batch,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    Corpus,
    Qa,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmbedArg {
    /// Encode question text (remote encoder if configured, else hashing).
    Text,
    /// Mean of the item's source vectors.
    Centroid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ThresholdArg {
    Fill,
    Literal,
}

#[derive(Debug, Args)]
pub struct CurateArgs {
    /// The crawled pool, as JSONL.
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    pub stage: Stage,
    /// Existing corpus for `--stage qa`.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub t_c: Option<f64>,
    #[arg(long)]
    pub t_d: Option<f64>,
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_rounds: Option<usize>,
    /// Round cap for the question loop alone.
    #[arg(long)]
    pub qa_rounds: Option<usize>,
    /// `by-source` or `size:K`.
    #[arg(long)]
    pub batch: Option<String>,
    /// Visit batches in seeded random order.
    #[arg(long)]
    pub shuffle: bool,
    #[arg(long, value_enum)]
    pub threshold_mode: Option<ThresholdArg>,
    /// `echo`, `template`, an http(s) URL, or a shell command.
    #[arg(long, default_value = "echo")]
    pub generator: String,
    /// Entity store for the template generator.
    #[arg(long)]
    pub entities: Option<PathBuf>,
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    pub embed: EmbedArg,
    /// QA items (JSONL) appended after the loop regardless of gaps.
    #[arg(long)]
    pub interest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenFormat {
    Binary,
    Mcq,
    Maq,
    Open,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub entities: Option<PathBuf>,
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Question/answer pairs for open items.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Tag for open items (`faq`, `forum`, ...).
    #[arg(long, default_value = "faq")]
    pub source_tag: String,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "binary,mcq,maq")]
    pub formats: Vec<GenFormat>,
    /// Items per format.
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write the gold predicates; defaults to `<out>.predicates.jsonl`.
    #[arg(long)]
    pub predicates: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub items: PathBuf,
    /// With `--predicates`, re-derive every gold answer from this store.
    #[arg(long)]
    pub entities: Option<PathBuf>,
    #[arg(long)]
    pub predicates: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub benchmark: PathBuf,
    /// Comma-separated: level, format, source.
    #[arg(long, default_value = "level,format")]
    pub group_by: String,
    /// Also write the report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub pool: PathBuf,
    /// Trace file; may be repeated, rounds are merged in order.
    #[arg(long, required = true)]
    pub trace: Vec<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Corpus and question embeddings, for question-round frames.
    #[arg(long, requires = "questions")]
    pub corpus: Option<PathBuf>,
    #[arg(long, requires = "corpus")]
    pub questions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 300)]
    pub entities: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
}

#[derive(Debug, Args)]
pub struct StubArgs {
    #[arg(long)]
    pub benchmark: PathBuf,
    #[arg(long, default_value_t = 0.7)]
    pub accuracy: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Curate(a) => curate(a, cli.config.as_deref()),
        Command::Generate(a) => generate(a),
        Command::Validate(a) => validate(a),
        Command::Eval(a) => eval(a),
        Command::Report(a) => report(a),
        Command::Fixture(a) => write_fixture(a),
        Command::StubPredict(a) => stub_predict(a),
    }
}

fn ingest(a: IngestArgs) -> Result<()> {
    let format = a.format.unwrap_or_else(|| {
        if a.input.extension().is_some_and(|e| e == "jsonl") {
            InputFormat::Jsonl
        } else {
            InputFormat::Binary
        }
    });
    let dataset = match format {
        InputFormat::Jsonl => ingest_jsonl(&a.input),
        InputFormat::Binary => {
            let index = a
                .index
                .as_ref()
                .ok_or_else(|| coded(VALIDATION, "binary input needs --index"))?;
            ingest_binary(&a.input, index, a.dim)
        }
    }
    .with_context(|| format!("ingesting {}", a.input.display()))?
    .with_role(a.role.into());
    write_with(&a.out, |buf| dataset.write_jsonl(buf))?;
    println!("ingested {} records, dim {}", dataset.len(), dataset.dim());
    Ok(())
}

fn parse_batch(spec: &str) -> Result<BatchStrategy> {
    if spec == "by-source" {
        return Ok(BatchStrategy::BySource);
    }
    spec.strip_prefix("size:")
        .and_then(|k| k.parse().ok())
        .map(|k| BatchStrategy::FixedSize { k })
        .ok_or_else(|| coded(VALIDATION, format!("--batch must be `by-source` or `size:K`, got `{spec}`")))
}

fn curator_config(a: &CurateArgs, path: Option<&Path>) -> Result<CuratorConfig> {
    let mut c: CuratorConfig = match path {
        Some(p) => read_json(p)?,
        None => CuratorConfig::default(),
    };
    if let Some(v) = a.t_c {
        c.t_c = v;
    }
    if let Some(v) = a.t_d {
        c.t_d = v;
    }
    if let Some(v) = a.h {
        c.h = v;
    }
    if let Some(v) = a.epsilon {
        c.epsilon = v;
    }
    if let Some(v) = a.seed {
        c.seed = v;
    }
    if let Some(v) = a.max_rounds {
        c.max_rounds = v;
    }
    if let Some(v) = a.qa_rounds {
        c.qa_max_rounds = Some(v);
    }
    if let Some(spec) = &a.batch {
        c.batch_strategy = parse_batch(spec)?;
    }
    if a.shuffle {
        c.shuffle_batches = true;
    }
    if let Some(m) = a.threshold_mode {
        c.threshold_mode = match m {
            ThresholdArg::Fill => ThresholdMode::FillFraction,
            ThresholdArg::Literal => ThresholdMode::Literal,
        };
    }
    c.validate()?;
    Ok(c)
}

fn read_entities(path: &Path) -> Result<EntityStore> {
    EntityStore::read_jsonl(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn read_items(path: &Path) -> Result<Vec<QAItem>> {
    read_items_jsonl(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn make_generator(a: &CurateArgs, seed: u64) -> Result<Box<dyn QaGenerator>> {
    if a.generator != "template" {
        return Ok(generator_from_spec(&a.generator));
    }
    let (Some(entities), Some(templates)) = (&a.entities, &a.templates) else {
        return Err(coded(VALIDATION, "--generator template needs --entities and --templates"));
    };
    let store = read_entities(entities)?;
    let set: TemplateSet = read_json(templates)?;
    Ok(Box::new(TemplateGenerator::new(store, set, seed)?))
}

fn text_encoder(dim: usize) -> Box<dyn TextEncoder> {
    match RemoteEncoder::from_env() {
        Some(remote) => {
            log::info!("encoding text with {}", remote.endpoint());
            Box::new(remote)
        }
        None => Box::new(HashingEncoder::new(dim)),
    }
}

fn write_questions(dir: &Path, q: &QuestionSet) -> Result<()> {
    write_with(&dir.join("questions.jsonl"), |buf| q.dataset.write_jsonl(buf))?;
    write_with(&dir.join("items.jsonl"), |buf| write_items_jsonl(&q.items, buf))
}

#[derive(Serialize)]
struct Redundancy {
    pool: RedundancyReport,
    corpus: RedundancyReport,
}

/// Nearest-neighbour redundancy before and after the gate. Reporting only, so
/// a set it cannot measure (zero vectors, a single record) is skipped.
fn write_redundancy(dir: &Path, pool: &Dataset, corpus: &Dataset) -> Result<()> {
    let reports = redundancy_report(pool, DEFAULT_COSINE_THRESHOLD)
        .and_then(|p| Ok((p, redundancy_report(corpus, DEFAULT_COSINE_THRESHOLD)?)));
    match reports {
        Ok((pool, corpus)) => write_json(&dir.join("redundancy.json"), &Redundancy { pool, corpus }),
        Err(e) => {
            log::warn!("redundancy report skipped: {e}");
            Ok(())
        }
    }
}

fn curate(a: CurateArgs, config_path: Option<&Path>) -> Result<()> {
    let config = curator_config(&a, config_path)?;
    let pool = ingest_jsonl(&a.pool)
        .with_context(|| format!("reading pool {}", a.pool.display()))?
        .with_role(Role::Space)
        .with_name("pool");
    let encoder = text_encoder(pool.dim());
    let embedder = match a.embed {
        EmbedArg::Text => ItemEmbedder::Text(encoder.as_ref()),
        EmbedArg::Centroid => ItemEmbedder::SourceCentroid,
    };
    let interest = match &a.interest {
        Some(p) => read_items(p)?,
        None => Vec::new(),
    };
    let dir = &a.out_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_json(&dir.join("config.json"), &config)?;

    let trace = match a.stage {
        Stage::Corpus => {
            let partition = partition_batches(&pool, config.batch_strategy, config.seed)?;
            let (corpus, trace) = expand_corpus(&pool, &partition, &config)?;
            write_with(&dir.join("corpus.jsonl"), |buf| corpus.write_jsonl(buf))?;
            write_redundancy(dir, &pool, &corpus)?;
            println!(
                "corpus: {} of {} records in {} rounds ({:?}), {} gap points left",
                corpus.len(),
                pool.len(),
                trace.corpus_rounds.len(),
                trace.corpus_termination.expect("set by expand_corpus"),
                trace.final_gap_count
            );
            trace
        }
        Stage::Qa => {
            let path = a
                .corpus
                .as_ref()
                .ok_or_else(|| coded(VALIDATION, "--stage qa needs --corpus"))?;
            let corpus = ingest_jsonl(path)
                .with_context(|| format!("reading corpus {}", path.display()))?
                .with_role(Role::Corpus)
                .with_name("corpus");
            if let Some(id) = corpus.iter().map(|r| &r.id).find(|id| !pool.contains(id)) {
                return Err(coded(UNRESOLVED, format!("corpus record `{id}` is not in the pool")));
            }
            let mut generator = make_generator(&a, config.seed)?;
            let mut trace = CurationTrace::default();
            let q = curate_questions(
                &corpus,
                QuestionSet::empty(pool.dim()),
                &config,
                generator.as_mut(),
                embedder,
                &mut trace,
            )?;
            let q = if interest.is_empty() {
                q
            } else {
                let before = q.len();
                let q = inject_user_interest(&q, &interest, embedder, &[&corpus, &pool])?;
                trace.interest = Some(InterestRecord {
                    injected: interest.iter().map(|i| i.qid.clone()).collect(),
                    questions_before: before,
                    questions_after: q.len(),
                });
                q
            };
            write_questions(dir, &q)?;
            println!("questions: {} in {} rounds", q.len(), trace.qa_rounds.len());
            trace
        }
        Stage::All => {
            let partition = partition_batches(&pool, config.batch_strategy, config.seed)?;
            let mut generator = make_generator(&a, config.seed)?;
            let out = run_pipeline(&pool, &partition, &interest, &config, generator.as_mut(), embedder)?;
            write_with(&dir.join("corpus.jsonl"), |buf| out.corpus.write_jsonl(buf))?;
            write_redundancy(dir, &pool, &out.corpus)?;
            write_questions(dir, &out.questions)?;
            println!(
                "corpus: {} of {} records in {} rounds; questions: {} in {} rounds",
                out.corpus.len(),
                pool.len(),
                out.trace.corpus_rounds.len(),
                out.questions.len(),
                out.trace.qa_rounds.len()
            );
            out.trace
        }
    };
    write_with(&dir.join("trace.jsonl"), |buf| trace.write_jsonl(buf))
}

/// One line of a predicates sidecar file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateLine {
    pub qid: String,
    pub predicate: Predicate,
}

fn generate(a: GenerateArgs) -> Result<()> {
    let needs_store = a.formats.iter().any(|f| *f != GenFormat::Open);
    let (store, set) = if needs_store {
        let (Some(e), Some(t)) = (&a.entities, &a.templates) else {
            return Err(coded(VALIDATION, "binary, mcq and maq items need --entities and --templates"));
        };
        let store = read_entities(e)?;
        let set: TemplateSet = read_json(t)?;
        set.validate(&store)?;
        (Some(store), set)
    } else {
        (None, TemplateSet::default())
    };
    let of = |f: Format| set.templates.iter().filter(|t| t.format == f).cloned().collect::<Vec<_>>();
    let mut all = Generation::default();
    for format in &a.formats {
        let g = match (format, &store) {
            (GenFormat::Binary, Some(s)) => gen_binary(s, &of(Format::Binary), a.count, a.seed)?,
            (GenFormat::Mcq, Some(s)) => gen_mcq(s, &of(Format::Mcq), a.count, a.seed)?,
            (GenFormat::Maq, Some(s)) => gen_maq(s, &set.patterns, a.count, a.seed)?,
            (GenFormat::Open, _) => {
                let p = a
                    .pairs
                    .as_ref()
                    .ok_or_else(|| coded(VALIDATION, "open items need --pairs"))?;
                let pairs = read_pairs_jsonl(open(p)?).with_context(|| format!("reading {}", p.display()))?;
                gen_open_from_pairs(&pairs, &a.source_tag)
            }
            _ => unreachable!("store is loaded whenever a structured format is requested"),
        };
        all.items.extend(g.items);
        all.skipped.extend(g.skipped);
    }
    let items = all.qa_items();
    write_with(&a.out, |buf| write_items_jsonl(&items, buf))?;
    let sidecar = a.predicates.unwrap_or_else(|| a.out.with_extension("predicates.jsonl"));
    let lines: Vec<PredicateLine> = all
        .items
        .iter()
        .map(|g| PredicateLine {
            qid: g.item.qid.clone(),
            predicate: g.predicate.clone(),
        })
        .collect();
    write_jsonl(&sidecar, &lines)?;
    println!("generated {} items ({} skip notes)", items.len(), all.skipped.len());
    Ok(())
}

fn validate(a: ValidateArgs) -> Result<()> {
    let items = read_items(&a.items)?;
    let mut bad = 0usize;
    for item in &items {
        if let Err(e) = validate_item(item) {
            eprintln!("{}: {e}", item.qid);
            bad += 1;
        }
    }
    let mut checked = 0usize;
    if let Some(pred_path) = &a.predicates {
        let entities = a
            .entities
            .as_ref()
            .ok_or_else(|| coded(VALIDATION, "--predicates needs --entities"))?;
        let store = read_entities(entities)?;
        let mut predicates: HashMap<String, Predicate> = HashMap::new();
        for (i, line) in std::io::BufRead::lines(open(pred_path)?).enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let p: PredicateLine = serde_json::from_str(&line)
                .map_err(|e| coded(VALIDATION, format!("{} line {}: {e}", pred_path.display(), i + 1)))?;
            predicates.insert(p.qid, p.predicate);
        }
        for item in &items {
            let Some(predicate) = predicates.get(&item.qid) else {
                continue;
            };
            let g = GeneratedItem {
                item: item.clone(),
                predicate: predicate.clone(),
            };
            checked += 1;
            if !g.gold_reproduces(&store)? {
                eprintln!("{}: gold does not match the entity store", item.qid);
                bad += 1;
            }
        }
    }
    if bad > 0 {
        return Err(coded(VALIDATION, format!("{bad} of {} items failed validation", items.len())));
    }
    println!("{} items valid ({checked} golds re-derived)", items.len());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let items = read_items(&a.benchmark)?;
    let preds = read_predictions_jsonl(open(&a.predictions)?)
        .with_context(|| format!("reading {}", a.predictions.display()))?;
    let group_by = GroupField::parse_list(&a.group_by)?;
    let report = evaluate(&preds, &items, &group_by)?;
    print!("{}", report.to_table());
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    Ok(())
}

fn write_frames(dir: &Path, frames: &[RoundFrame]) -> Result<()> {
    let b = bounds(frames);
    for f in frames {
        write_atomic(&dir.join(format!("{}.csv", f.name)), frame_csv(&f.points)?.as_bytes())?;
        write_atomic(&dir.join(format!("{}.svg", f.name)), frame_svg(f, b).as_bytes())?;
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let pool = ingest_jsonl(&a.pool).with_context(|| format!("reading pool {}", a.pool.display()))?;
    let mut trace = CurationTrace::default();
    for p in &a.trace {
        let t = CurationTrace::read_jsonl(open(p)?).with_context(|| format!("reading {}", p.display()))?;
        trace.corpus_rounds.extend(t.corpus_rounds);
        trace.qa_rounds.extend(t.qa_rounds);
    }
    let mut written = 0;
    if !trace.corpus_rounds.is_empty() {
        let frames = corpus_frames(&pool, &trace)?;
        write_frames(&a.out_dir, &frames)?;
        written += frames.len();
    }
    if let (Some(c), Some(q)) = (&a.corpus, &a.questions) {
        let corpus = ingest_jsonl(c).with_context(|| format!("reading {}", c.display()))?;
        let dataset: Dataset = ingest_jsonl(q)
            .with_context(|| format!("reading {}", q.display()))?
            .with_role(Role::Questions);
        let questions = QuestionSet {
            dataset,
            items: Vec::new(),
        };
        let frames = question_frames(&corpus, &questions, &trace)?;
        write_frames(&a.out_dir, &frames)?;
        written += frames.len();
    }
    if written == 0 {
        return Err(coded(VALIDATION, "nothing to plot: the traces have no rounds"));
    }
    println!("wrote {written} frames to {}", a.out_dir.display());
    Ok(())
}

fn write_fixture(a: FixtureArgs) -> Result<()> {
    let world = fixture::demo_world(a.entities, a.dim, a.seed);
    let dir = &a.out_dir;
    write_jsonl(&dir.join("entities.jsonl"), &world.entities)?;
    write_json(&dir.join("templates.json"), &world.templates)?;
    write_with(&dir.join("pool.jsonl"), |buf| world.pool.write_jsonl(buf))?;
    write_jsonl(&dir.join("faq.jsonl"), &world.faq)?;
    write_with(&dir.join("interest.jsonl"), |buf| write_items_jsonl(&world.interest, buf))?;
    write_json(&dir.join("config.json"), &fixture::demo_config(a.seed))?;
    println!(
        "wrote {} entities and {} pool records to {}",
        world.entities.len(),
        world.pool.len(),
        dir.display()
    );
    Ok(())
}

fn stub_predict(a: StubArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.accuracy) {
        return Err(coded(VALIDATION, "--accuracy must lie in [0, 1]"));
    }
    let items = read_items(&a.benchmark)?;
    let preds = stub::predict(&items, a.accuracy, a.seed);
    write_jsonl(&a.out, &preds)?;
    println!("wrote {} predictions", preds.len());
    Ok(())
}
