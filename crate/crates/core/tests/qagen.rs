use std::collections::{BTreeMap, BTreeSet, HashSet};

use compcomp_core::qagen::{
    gen_binary, gen_for_entities, gen_maq, gen_mcq, gen_open_from_pairs, validate_item, write_items_jsonl, AttrValue,
    DistractorPolicy, EntityRecord, EntityStore, EntityType, Format, GeneratedItem, Level, Polarity, Predicate, QaPair,
    QueryPattern, TemplatePattern, TemplateSet,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DEPTS: [&str; 10] = [
    "Physics", "Chemistry", "History", "Law", "Music", "Biology", "Economics", "Geology", "Nursing", "Philosophy",
];
const SCHOOLS: [&str; 6] = ["Oxford", "Leiden", "Kyoto", "McGill", "Otago", "Uppsala"];
const AREAS: [&str; 12] = [
    "optics", "catalysis", "archives", "contracts", "harmony", "genetics", "markets", "tectonics", "ethics", "care",
    "logic", "plasma",
];

fn store(n: usize, seed: u64) -> EntityStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..n)
        .map(|i| {
            let mut attributes = BTreeMap::new();
            let one = |s: &str| AttrValue::One(s.to_string());
            attributes.insert("name".to_string(), one(&format!("Person {i}")));
            let d = rng.gen_range(0..DEPTS.len() * 5);
            attributes.insert("dept".to_string(), one(&format!("{} {}", DEPTS[d % 10], d / 10 + 1)));
            attributes.insert("phd_from".to_string(), one(SCHOOLS.choose(&mut rng).unwrap()));
            let k = rng.gen_range(1..=3);
            let areas = AREAS.choose_multiple(&mut rng, k).map(|s| s.to_string()).collect();
            attributes.insert("research".to_string(), AttrValue::Many(areas));
            EntityRecord { entity_id: format!("e{i:04}"), entity_type: EntityType::Staff, attributes }
        })
        .collect();
    EntityStore::new(records).unwrap()
}

fn template(id: &str, text: &str, format: Format, target: &str) -> TemplatePattern {
    TemplatePattern {
        id: id.into(),
        text: text.into(),
        format,
        level: None,
        target_field: target.into(),
        entity_type: Some(EntityType::Staff),
        polarity: Polarity::Both,
        distractors: DistractorPolicy::SameField,
    }
}

fn pattern(id: &str, text: &str, conditions: &[&str]) -> QueryPattern {
    QueryPattern {
        id: id.into(),
        text: text.into(),
        conditions: conditions.iter().map(|c| c.to_string()).collect(),
        label_field: "name".into(),
        entity_type: Some(EntityType::Staff),
    }
}

fn binary_templates() -> Vec<TemplatePattern> {
    vec![
        template("b-dept", "Does {name} work in {dept}?", Format::Binary, "dept"),
        template("b-area", "Does {name} research {research}?", Format::Binary, "research"),
    ]
}

fn mcq_templates() -> Vec<TemplatePattern> {
    vec![
        template("m-dept", "Which department does {name} belong to?", Format::Mcq, "dept"),
        template("m-phd", "Where did {name} earn a doctorate?", Format::Mcq, "phd_from"),
    ]
}

fn maq_patterns() -> Vec<QueryPattern> {
    vec![
        pattern("q-phd-dept", "Which staff in {dept} graduated from {phd_from}?", &["dept", "phd_from"]),
        pattern("q-area-dept", "Who in {dept} researches {research}?", &["dept", "research"]),
    ]
}

/// Full scan, written without the store's helpers.
fn scan_gold(store: &EntityStore, item: &GeneratedItem) -> BTreeSet<String> {
    let Predicate::Matches { conditions, .. } = &item.predicate else {
        panic!("not a relational item");
    };
    let mut matching = BTreeSet::new();
    for e in store.records() {
        let ok = conditions.iter().all(|(field, value)| match e.attributes.get(field) {
            Some(AttrValue::One(v)) => v == value,
            Some(AttrValue::Many(vs)) => vs.contains(value),
            None => false,
        });
        if ok {
            if let Some(AttrValue::One(name)) = e.attributes.get("name") {
                matching.insert(name.clone());
            }
        }
    }
    matching
}

#[test]
fn thousand_entity_store_is_sound() {
    let s = store(1000, 1);
    let mut all = Vec::new();
    all.extend(gen_binary(&s, &binary_templates(), 400, 7).unwrap().items);
    all.extend(gen_mcq(&s, &mcq_templates(), 400, 7).unwrap().items);
    let maq = gen_maq(&s, &maq_patterns(), 200, 7).unwrap();
    assert!(maq.items.len() >= 100, "{} relational items", maq.items.len());
    for gi in &maq.items {
        let gold: BTreeSet<String> = gi.item.gold.iter().cloned().collect();
        assert_eq!(gold, scan_gold(&s, gi), "{}", gi.item.qid);
        assert_eq!(gi.item.level, Level::KA);
    }
    all.extend(maq.items);
    for gi in &all {
        validate_item(&gi.item).unwrap();
        assert!(gi.gold_reproduces(&s).unwrap(), "{}", gi.item.qid);
        let gold: HashSet<&String> = gi.item.gold.iter().collect();
        if gi.item.format == Format::Mcq {
            assert_eq!(gi.item.candidates.iter().filter(|c| gold.contains(c)).count(), 1);
        }
    }
}

#[test]
fn binary_is_balanced() {
    let s = store(200, 2);
    let g = gen_binary(&s, &binary_templates(), 101, 3).unwrap();
    assert_eq!(g.items.len(), 101);
    let yes = g.items.iter().filter(|i| i.item.gold == ["yes"]).count() as i64;
    assert!((yes - (101 - yes)).abs() <= 1);
    assert!(g.items.iter().all(|i| i.item.level == Level::KM));
}

#[test]
fn same_seed_same_bytes() {
    let s = store(100, 3);
    let render = |seed| {
        let mut items = gen_binary(&s, &binary_templates(), 50, seed).unwrap().qa_items();
        items.extend(gen_mcq(&s, &mcq_templates(), 50, seed).unwrap().qa_items());
        items.extend(gen_maq(&s, &maq_patterns(), 20, seed).unwrap().qa_items());
        let mut buf = Vec::new();
        write_items_jsonl(&items, &mut buf).unwrap();
        buf
    };
    assert_eq!(render(5), render(5));
    assert_ne!(render(5), render(6));
}

#[test]
fn mcq_candidates_never_repeat() {
    let s = store(600, 4);
    let g = gen_mcq(&s, &mcq_templates(), 500, 9).unwrap();
    assert_eq!(g.items.len(), 500);
    for gi in &g.items {
        let distinct: HashSet<&String> = gi.item.candidates.iter().collect();
        assert_eq!(distinct.len(), 4, "{}", gi.item.qid);
    }
}

#[test]
fn single_valued_field_is_skipped() {
    let mut records: Vec<EntityRecord> = store(20, 5).records().to_vec();
    for r in &mut records {
        r.attributes.insert("campus".into(), AttrValue::One("Main".into()));
    }
    let s = EntityStore::new(records).unwrap();
    let t = template("b-campus", "Is {name} based at {campus}?", Format::Binary, "campus");
    let g = gen_binary(&s, std::slice::from_ref(&t), 10, 0).unwrap();
    assert!(g.items.is_empty());
    assert_eq!(g.skipped[0].template_id, "b-campus");
    let positive = TemplatePattern { polarity: Polarity::Positive, ..t };
    assert_eq!(gen_binary(&s, &[positive], 10, 0).unwrap().items.len(), 10);
}

#[test]
fn entity_requests_reference_the_entity() {
    let s = store(300, 6);
    let set = TemplateSet {
        templates: binary_templates().into_iter().chain(mcq_templates()).collect(),
        patterns: maq_patterns(),
    };
    let ids: Vec<String> = vec!["e0003".into(), "e0150".into()];
    let g = gen_for_entities(&s, &set, &ids, "g000", 1).unwrap();
    assert!(g.items.len() >= 8);
    for gi in &g.items {
        assert!(ids.contains(&gi.item.source_ids[0]), "{}", gi.item.qid);
        assert!(gi.gold_reproduces(&s).unwrap());
    }
    assert!(gen_for_entities(&s, &set, &["ghost".into()], "g", 1).is_err());
}

fn oracle_normalize(text: &str) -> String {
    let mut out = String::new();
    let mut pending_space = false;
    for c in text.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
        } else {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(c);
        }
    }
    out
}

#[test]
fn noisy_pairs_dedup_to_the_normalized_set() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let stems = ["How do I enrol", "Where is the library", "When does term start", "Who runs IT support"];
    let pads = ["", " ", "  ", "\t", "\n"];
    let pairs: Vec<QaPair> = (0..1000)
        .map(|_| {
            let stem = stems.choose(&mut rng).unwrap();
            let words: Vec<String> = stem.split(' ').map(str::to_string).collect();
            let mut q = pads.choose(&mut rng).unwrap().to_string();
            for (k, w) in words.iter().enumerate() {
                if k > 0 {
                    q.push_str(if rng.gen_bool(0.2) { "   " } else { " " });
                }
                q.push_str(w);
            }
            q.push_str(&format!(" {}?", rng.gen_range(0..60)));
            q.push_str(pads.choose(&mut rng).unwrap());
            let answer = if rng.gen_bool(0.05) { "  ".to_string() } else { "See the handbook.".to_string() };
            QaPair { question: q, answer }
        })
        .collect();
    let expected: HashSet<String> = pairs
        .iter()
        .filter(|p| !p.answer.trim().is_empty())
        .map(|p| oracle_normalize(&p.question))
        .collect();
    let g = gen_open_from_pairs(&pairs, "forum");
    assert_eq!(g.items.len(), expected.len());
    assert!(g.items.iter().all(|i| i.item.level == Level::KC && i.item.format == Format::Open));
}
