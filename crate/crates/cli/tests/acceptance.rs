//! Acceptance checks, one PASS/FAIL line each. Runs without the libtest
//! harness so the report reads top to bottom.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use compcomp_cli::fixture;
use compcomp_core::compactness::admit_batch;
use compcomp_core::curator::{
    curate_questions, expand_corpus, run_pipeline, CurationTrace, CuratorConfig, ItemEmbedder, QuestionSet,
};
use compcomp_core::density::{kde_log_density, log_density_ratio, select_gap, GapSelection, KdeParams, ThresholdMode};
use compcomp_core::eval::{accuracy, bleu_n, maq_prf1, Parsed, Prediction};
use compcomp_core::hooks::{EchoGenerator, HookError, QaGenRequest, QaGenResponse, QaGenerator};
use compcomp_core::qagen::{
    gen_binary, gen_for_entities, gen_maq, gen_mcq, validate_item, EntityStore, Format, Level, Provenance, QAItem,
};
use compcomp_core::store::{partition_batches, BatchStrategy, Dataset, EmbeddingRecord, Role};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn dataset(name: &str, rows: &[Vec<f64>]) -> Dataset {
    let records = rows
        .iter()
        .enumerate()
        .map(|(i, v)| EmbeddingRecord::new(format!("{name}{i}"), name, v.clone()))
        .collect();
    Dataset::from_records(name, Role::Space, records).unwrap()
}

fn normal_rows(rng: &mut ChaCha8Rng, n: usize, dim: usize, centre: f64, sigma: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    centre + sigma * z
                })
                .collect()
        })
        .collect()
}

fn oracle_density(samples: &[Vec<f64>], point: &[f64], h: f64) -> f64 {
    let mut sum = 0.0;
    for s in samples {
        let mut d2 = 0.0;
        for k in 0..point.len() {
            d2 += (point[k] - s[k]) * (point[k] - s[k]);
        }
        sum += (-d2 / (2.0 * h * h)).exp();
    }
    sum / (samples.len() as f64 * h)
}

fn kde_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.gen_range(1..=200);
        let dim = rng.gen_range(1..=16);
        let h = rng.gen_range(0.5..=10.0);
        let samples = normal_rows(&mut rng, n, dim, 0.0, 2.0);
        let points = normal_rows(&mut rng, 50, dim, 0.0, 2.0);
        let field = kde_log_density(&dataset("s", &samples), &dataset("p", &points), KdeParams::new(h).unwrap())
            .map_err(|e| e.to_string())?;
        for (p, log_f) in points.iter().zip(&field.log_densities) {
            let want = oracle_density(&samples, p, h);
            worst = worst.max((log_f.exp() - want).abs() / want);
        }
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-9 && elapsed < Duration::from_secs(5),
        format!("worst relative error {worst:.1e}, {:.2}s", elapsed.as_secs_f64()),
    )
}

fn self_gap() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut nonempty = 0;
    for _ in 0..50 {
        let n = rng.gen_range(2..=150);
        let dim = rng.gen_range(1..=16);
        let params = KdeParams::new(rng.gen_range(0.5..=10.0)).unwrap();
        let rows = normal_rows(&mut rng, n, dim, 0.0, 3.0);
        let s = dataset("s", &rows);
        let x = dataset("s", &rows);
        let fs = kde_log_density(&s, &s, params).unwrap();
        let fx = kde_log_density(&x, &s, params).unwrap();
        let deltas = log_density_ratio(&fs, &fx).map_err(|e| e.to_string())?;
        worst = deltas.iter().fold(worst, |m, d| m.max(d.delta.abs()));
        for mode in [ThresholdMode::FillFraction, ThresholdMode::Literal] {
            let t_d = if mode == ThresholdMode::Literal { 0.0 } else { 1.0 };
            let sel = GapSelection { t_d, slack: 0.0, mode };
            if !select_gap(&s, &x, params, sel).unwrap().is_empty() {
                nonempty += 1;
            }
        }
    }
    check(worst <= 1e-12 && nonempty == 0, format!("max |delta| {worst:.1e}, {nonempty} non-empty gap sets"))
}

fn bimodal_recovery() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = KdeParams::DEFAULT_BANDWIDTH;
    let dim = 16;
    // centres 10h apart along the first axis
    let a: Vec<Vec<f64>> = normal_rows(&mut rng, 250, dim, 0.0, 1.0);
    let mut b: Vec<Vec<f64>> = normal_rows(&mut rng, 250, dim, 0.0, 1.0);
    b.iter_mut().for_each(|r| r[0] += 10.0 * h);
    let records: Vec<EmbeddingRecord> = a
        .iter()
        .enumerate()
        .map(|(i, v)| EmbeddingRecord::new(format!("a{i}"), "a", v.clone()))
        .chain(b.iter().enumerate().map(|(i, v)| EmbeddingRecord::new(format!("b{i}"), "b", v.clone())))
        .collect();
    let s = Dataset::from_records("s", Role::Space, records.clone()).unwrap();
    let c = Dataset::from_records("c", Role::Corpus, records[..100].to_vec()).unwrap();
    let gap = select_gap(&s, &c, KdeParams::new(h).unwrap(), GapSelection::fill(1.0, 0.05)).map_err(|e| e.to_string())?;
    let in_b = gap.point_ids.iter().filter(|id| id.starts_with('b')).count();
    let in_a = gap.len() - in_b;
    let elapsed = start.elapsed();
    check(
        in_b * 100 >= 95 * 250 && in_a * 10 <= 250 && elapsed < Duration::from_secs(10),
        format!("{in_b}/250 of B and {in_a}/250 of A flagged, {:.2}s", elapsed.as_secs_f64()),
    )
}

fn duplicate_rejection() -> Outcome {
    let params = KdeParams::default();
    let (mut dup_ok, mut far_ok, mut min_r) = (0, 0, f64::INFINITY);
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = rng.gen_range(2..=16);
        let n = rng.gen_range(20..=80);
        let rows = normal_rows(&mut rng, n, dim, 0.0, 2.0);
        let c = dataset("c", &rows);
        let dup = dataset("d", &rows);
        let far = dataset("f", &normal_rows(&mut rng, n, dim, 100.0, 2.0));
        let d = admit_batch(&dup, &c, 0.05, params).map_err(|e| e.to_string())?;
        min_r = min_r.min(d.r);
        dup_ok += usize::from(d.r >= 0.99 && !d.accepted);
        far_ok += usize::from(admit_batch(&far, &c, 0.05, params).unwrap().accepted);
    }
    check(
        dup_ok == 100 && far_ok == 100,
        format!("duplicates rejected {dup_ok}/100 (min r {min_r:.4}), disjoint accepted {far_ok}/100"),
    )
}

/// Groups of sources that share a handful of topic centres in uneven
/// proportions.
fn mixture_world(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 8;
    let k = rng.gen_range(3..7);
    let centres: Vec<Vec<f64>> = (0..k).map(|_| (0..dim).map(|_| rng.gen_range(-10.0..10.0)).collect()).collect();
    let noise = Normal::new(0.0, 1.0).unwrap();
    let n_sources = rng.gen_range(4..10);
    let mut records = Vec::new();
    for s in 0..n_sources {
        let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0f64..1.0).powi(3)).collect();
        let total: f64 = weights.iter().sum();
        for i in 0..rng.gen_range(10..40) {
            let mut u = rng.gen_range(0.0..total);
            let mut j = 0;
            while u > weights[j] && j + 1 < k {
                u -= weights[j];
                j += 1;
            }
            let v = centres[j].iter().map(|x| x + noise.sample(&mut rng)).collect();
            records.push(EmbeddingRecord::new(format!("s{s}-{i}"), format!("src{s}"), v));
        }
    }
    Dataset::from_records("pool", Role::Space, records).unwrap()
}

/// One open question per pair of gap points.
#[derive(Default)]
struct Pairing {
    calls: usize,
}

impl QaGenerator for Pairing {
    fn generate(&mut self, request: &QaGenRequest) -> Result<QaGenResponse, HookError> {
        let call = self.calls;
        self.calls += 1;
        let items = request
            .gap_points
            .chunks(2)
            .map(|pair| QAItem {
                qid: format!("p{call}-{}", pair[0].id),
                format: Format::Open,
                level: Level::KC,
                question: format!("What connects {}?", pair.iter().map(|p| p.id.as_str()).collect::<Vec<_>>().join(" and ")),
                candidates: Vec::new(),
                gold: vec!["a shared topic".into()],
                provenance: Provenance::External,
                source_ids: pair.iter().map(|p| p.id.clone()).collect(),
                source: pair[0].source.clone(),
            })
            .collect();
        Ok(QaGenResponse { items })
    }
}

fn monotone(xs: &[usize]) -> bool {
    xs.windows(2).all(|w| w[0] <= w[1])
}

fn threshold_monotonicity() -> Outcome {
    let (mut bad_d, mut bad_c, mut varied_d, mut varied_c) = (0, 0, 0, 0);
    for seed in 0..100u64 {
        let s = mixture_world(seed);
        let part = partition_batches(&s, BatchStrategy::BySource, seed).unwrap();
        let sizes: Vec<usize> = [0.0, 0.05, 0.1, 0.2, 0.3]
            .iter()
            .map(|&t_c| expand_corpus(&s, &part, &CuratorConfig { t_c, seed, ..CuratorConfig::default() }).unwrap().0.len())
            .collect();
        bad_c += usize::from(!monotone(&sizes));
        varied_c += usize::from(sizes.iter().any(|&x| x != sizes[0]));

        let (c, _) = expand_corpus(&s, &part, &CuratorConfig { seed, ..CuratorConfig::default() }).unwrap();
        let counts: Vec<usize> = [0.1, 0.3, 0.5, 0.7, 0.9]
            .iter()
            .map(|&t_d| {
                let config = CuratorConfig { t_d, seed, qa_max_rounds: Some(3), ..CuratorConfig::default() };
                let mut trace = CurationTrace::default();
                curate_questions(&c, QuestionSet::empty(s.dim()), &config, &mut Pairing::default(), ItemEmbedder::SourceCentroid, &mut trace)
                    .unwrap()
                    .len()
            })
            .collect();
        bad_d += usize::from(!monotone(&counts));
        varied_d += usize::from(counts.iter().any(|&x| x != counts[0]));
    }
    check(
        bad_d == 0 && bad_c == 0,
        format!(
            "t_d violations {bad_d}/100 ({varied_d} vary), t_c violations {bad_c}/100 ({varied_c} vary)"
        ),
    )
}

fn compactness_reduction() -> Outcome {
    let mut worst = 0.0f64;
    let mut passed = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = 8;
        let noise = Normal::new(0.0, 3.0).unwrap();
        let mut originals = Vec::new();
        for s in 0..5 {
            let centre: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
            for i in 0..40 {
                let v = centre.iter().map(|x| x + noise.sample(&mut rng)).collect();
                originals.push(EmbeddingRecord::new(format!("s{s}-{i}"), format!("src{s}"), v));
            }
        }
        let mut records = originals.clone();
        records.extend(
            originals
                .iter()
                .map(|r| EmbeddingRecord::new(format!("{}-dup", r.id), format!("{}-mirror", r.source), r.vector.clone())),
        );
        let s = Dataset::from_records("pool", Role::Space, records).unwrap();
        let part = partition_batches(&s, BatchStrategy::BySource, seed).unwrap();
        let (c, _) = expand_corpus(&s, &part, &CuratorConfig { seed, ..CuratorConfig::default() }).unwrap();
        let frac = c.len() as f64 / s.len() as f64;
        worst = worst.max(frac);
        passed += usize::from(frac <= 0.55);
    }
    check(passed == 20, format!("{passed}/20 trials at or below 55%, largest kept fraction {worst:.2}"))
}

fn curator_termination() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = Vec::new();
    for trial in 0..1000 {
        let dim = rng.gen_range(1..=6);
        let n_sources = rng.gen_range(1..=8);
        let mut records = Vec::new();
        for s in 0..n_sources {
            let centre = rng.gen_range(-20.0..20.0);
            let n = rng.gen_range(1..=10);
            let sigma = rng.gen_range(0.1..4.0);
            for (i, v) in normal_rows(&mut rng, n, dim, centre, sigma).into_iter().enumerate() {
                records.push(EmbeddingRecord::new(format!("s{s}-{i}"), format!("src{s}"), v));
            }
        }
        let s = Dataset::from_records("pool", Role::Space, records).unwrap();
        let strategy = if rng.gen_bool(0.5) {
            BatchStrategy::BySource
        } else {
            BatchStrategy::FixedSize { k: rng.gen_range(1..=12) }
        };
        let threshold_mode = if rng.gen_bool(0.8) { ThresholdMode::FillFraction } else { ThresholdMode::Literal };
        let config = CuratorConfig {
            h: rng.gen_range(0.2..8.0),
            t_c: rng.gen_range(-1.0..=1.0),
            t_d: rng.gen_range(0.0..=1.0),
            epsilon: rng.gen_range(0.0..0.5),
            max_rounds: rng.gen_range(1..=25),
            qa_max_rounds: Some(rng.gen_range(1..=3)),
            seed: rng.gen(),
            batch_strategy: strategy,
            shuffle_batches: rng.gen_bool(0.3),
            threshold_mode,
        };
        let part = partition_batches(&s, strategy, config.seed).unwrap();
        let out = match run_pipeline(&s, &part, &[], &config, &mut EchoGenerator::default(), ItemEmbedder::SourceCentroid) {
            Ok(out) => out,
            Err(e) => {
                failures.push(format!("trial {trial}: {e}"));
                continue;
            }
        };
        let bound = config.max_rounds.min(2 * part.len());
        let rounds = out.trace.corpus_rounds.len();
        let parsed = CurationTrace::read_jsonl(out.trace.to_jsonl_string().as_bytes());
        if rounds > bound || rounds == 0 || parsed.as_ref().ok() != Some(&out.trace) {
            failures.push(format!("trial {trial}: {rounds} rounds, bound {bound}"));
        }
    }
    check(failures.is_empty(), if failures.is_empty() { "1000/1000 halted in bound with parseable traces".into() } else { failures[..failures.len().min(3)].join("; ") })
}

fn metric_exactness() -> Outcome {
    let s = "students may borrow ten books at a time";
    let identity = bleu_n(s, s, 2).unwrap() == 1.0 && bleu_n(s, s, 4).unwrap() == 1.0;
    let b2 = bleu_n("a b c d", "a b c e", 2).unwrap();
    let bleu_fixture = (b2 - 0.5f64.sqrt()).abs() <= 1e-9;

    let cands: Vec<String> = ["A", "B", "C", "D", "E", "F", "G", "H"].iter().map(|l| format!("choice {l}")).collect();
    let maq = QAItem {
        qid: "m".into(),
        format: Format::Maq,
        level: Level::KA,
        question: "Which?".into(),
        candidates: cands.clone(),
        gold: vec![cands[1].clone(), cands[2].clone()],
        provenance: Provenance::Relational,
        source_ids: Vec::new(),
        source: String::new(),
    };
    let half = maq_prf1(&[Prediction::new(&maq, "A, B")], std::slice::from_ref(&maq)).unwrap();
    let full = maq_prf1(&[Prediction::new(&maq, "C, B")], std::slice::from_ref(&maq)).unwrap();
    let prf_fixture = (half.precision, half.recall, half.f1) == (0.5, 0.5, 0.5) && (full.precision, full.recall, full.f1) == (1.0, 1.0, 1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut acc_exact = true;
    for _ in 0..10 {
        let mut items = Vec::new();
        let mut preds = Vec::new();
        for i in 0..1000 {
            let binary = rng.gen_bool(0.5);
            let it = QAItem {
                qid: format!("q{i}"),
                format: if binary { Format::Binary } else { Format::Mcq },
                level: if binary { Level::KM } else { Level::KU },
                question: "?".into(),
                candidates: if binary { Vec::new() } else { cands[..4].to_vec() },
                gold: vec![if binary { ["yes", "no"].choose(&mut rng).unwrap().to_string() } else { cands[rng.gen_range(0..4)].clone() }],
                provenance: Provenance::Template,
                source_ids: Vec::new(),
                source: String::new(),
            };
            let raw = match rng.gen_range(0..5) {
                0 => "unsure".to_string(),
                _ if binary => ["Yes", "No"].choose(&mut rng).unwrap().to_string(),
                _ => ["A", "B", "C", "D"].choose(&mut rng).unwrap().to_string(),
            };
            if rng.gen_bool(0.97) {
                preds.push(Prediction::new(&it, raw));
            }
            items.push(it);
        }
        let mut correct = 0usize;
        for it in &items {
            if let Some(p) = preds.iter().find(|p| p.qid == it.qid) {
                let hit = match &p.parsed {
                    Parsed::Binary(v) => *v == it.gold[0],
                    Parsed::Choices(c) => c.len() == 1 && c.contains(&it.gold[0]),
                    _ => false,
                };
                correct += usize::from(hit);
            }
        }
        acc_exact &= accuracy(&preds, &items).unwrap() == correct as f64 / items.len() as f64;
    }
    check(
        identity && bleu_fixture && prf_fixture && acc_exact,
        format!(
            "BLEU identity {identity}, BLEU-2 fixture {b2:.12}, P/R/F1 fixtures {prf_fixture}, accuracy vs loop {acc_exact}"
        ),
    )
}

fn generator_soundness() -> Outcome {
    let store = EntityStore::new(fixture::entities(1000, 9)).map_err(|e| e.to_string())?;
    let set = fixture::templates();
    let mut items = Vec::new();
    items.extend(gen_binary(&store, &set.templates, 600, 9).unwrap().items);
    items.extend(gen_mcq(&store, &set.templates, 600, 9).unwrap().items);
    items.extend(gen_maq(&store, &set.patterns, 600, 9).unwrap().items);
    let ids: Vec<String> = store.records().iter().step_by(10).map(|e| e.entity_id.clone()).collect();
    items.extend(gen_for_entities(&store, &set, &ids, "g", 9).unwrap().items);
    let formats: BTreeSet<Format> = items.iter().map(|g| g.item.format).collect();
    let mut invalid = 0;
    let mut mismatched = 0;
    for g in &items {
        invalid += usize::from(validate_item(&g.item).is_err());
        mismatched += usize::from(!g.gold_reproduces(&store).unwrap_or(false));
    }
    check(
        invalid == 0 && mismatched == 0 && formats.len() == 3,
        format!("{} items over {} formats, {invalid} invalid, {mismatched} gold mismatches", items.len(), formats.len()),
    )
}

fn compcomp(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_compcomp"))
        .args(args)
        .current_dir(dir)
        .env_remove("COMPCOMP_ENCODER_URL")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{} failed: {}", args[0], String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn demo(dir: &Path) -> Result<(), String> {
    let steps: &[&[&str]] = &[
        &["fixture", "--out-dir", "fx", "--seed", "5", "--entities", "2000", "--dim", "64"],
        &["ingest", "--input", "fx/pool.jsonl", "--out", "pool.jsonl"],
        &["curate", "--config", "fx/config.json", "--pool", "pool.jsonl", "--stage", "corpus", "--out-dir", "corpus"],
        &[
            "curate", "--config", "fx/config.json", "--pool", "pool.jsonl", "--stage", "qa", "--corpus",
            "corpus/corpus.jsonl", "--generator", "template", "--entities", "fx/entities.jsonl", "--templates",
            "fx/templates.json", "--interest", "fx/interest.jsonl", "--out-dir", "qa",
        ],
        &["stub-predict", "--benchmark", "qa/items.jsonl", "--seed", "5", "--out", "predictions.jsonl"],
        &["eval", "--predictions", "predictions.jsonl", "--benchmark", "qa/items.jsonl", "--out", "report.json"],
        &[
            "report", "--pool", "pool.jsonl", "--trace", "corpus/trace.jsonl", "--trace", "qa/trace.jsonl", "--corpus",
            "corpus/corpus.jsonl", "--questions", "qa/questions.jsonl", "--out-dir", "frames",
        ],
    ];
    for step in steps {
        compcomp(dir, step)?;
    }
    Ok(())
}

fn files(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let (one, two) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    demo(one.path())?;
    demo(two.path())?;
    let elapsed = start.elapsed();
    let (a, b) = (files(one.path()), files(two.path()));
    let points = std::fs::read_to_string(one.path().join("pool.jsonl")).unwrap().lines().count();
    let differing: Vec<&String> = a.iter().zip(&b).filter(|(x, y)| x != y).map(|(x, _)| &x.0).collect();
    check(
        a.len() == b.len() && differing.is_empty() && elapsed < Duration::from_secs(60) && points <= 5000,
        format!(
            "{} artifacts, {} differ, {points} pool points, two runs in {:.1}s",
            a.len(),
            differing.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("kde matches brute-force oracle", kde_oracle),
        ("self-gap is empty", self_gap),
        ("bimodal gap recovery", bimodal_recovery),
        ("duplicate batches rejected", duplicate_rejection),
        ("threshold monotonicity", threshold_monotonicity),
        ("compactness reduction", compactness_reduction),
        ("curator termination", curator_termination),
        ("metric exactness", metric_exactness),
        ("question generator soundness", generator_soundness),
        ("end-to-end determinism", end_to_end),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (verdict, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {} ({name}): {verdict} - {detail}", i + 1);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
