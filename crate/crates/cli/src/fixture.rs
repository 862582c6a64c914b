//! A small synthetic university: staff and course records, department web
//! pages embedded with the hashing encoder, FAQ pairs and forum questions.

use std::collections::{BTreeMap, HashSet};

use compcomp_core::curator::CuratorConfig;
use compcomp_core::encoder::HashingEncoder;
use compcomp_core::qagen::{
    AttrValue, EntityRecord, EntityType, Format, Level, Polarity, Provenance, QAItem, QaPair,
    QueryPattern, TemplatePattern, TemplateSet,
};
use compcomp_core::store::{Dataset, EmbeddingRecord, Role};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SCHOOLS: &[(&str, &[&str])] = &[
    ("School of Science", &["Physics", "Chemistry", "Mathematics", "Biology"]),
    ("School of Engineering", &["Computing", "Electrical Engineering", "Civil Engineering"]),
    ("School of Humanities", &["History", "Philosophy", "Linguistics"]),
    ("Business School", &["Finance", "Marketing"]),
];

const TITLES: &[&str] = &["Professor", "Associate Professor", "Senior Lecturer", "Lecturer", "Research Fellow"];

const AREAS: &[&str] = &[
    "machine learning", "quantum optics", "organic synthesis", "number theory", "ecology",
    "signal processing", "structural design", "medieval trade", "ethics", "phonology",
    "asset pricing", "consumer behaviour", "graph theory", "catalysis", "genomics",
    "robotics", "fluid dynamics", "early modern Europe", "logic", "syntax",
    "risk management", "brand strategy", "topology", "cell biology", "databases",
    "power systems", "geotechnics", "epistemology", "sociolinguistics", "econometrics",
];

const UNIVERSITIES: &[&str] = &[
    "MIT", "Stanford", "Cambridge", "Oxford", "ETH Zurich", "Tsinghua", "Peking University",
    "Imperial College", "UCL", "Toronto", "Melbourne", "NUS", "Tokyo", "Berkeley", "Princeton",
];

const BUILDINGS: &[&str] = &[
    "Science Building", "Engineering Hall", "Foundation Building", "Central Building",
    "Research Tower", "Library Annex", "Business Centre", "Humanities House",
];

const FIRST: &[&str] = &[
    "Wei", "Anna", "James", "Li", "Maria", "Chen", "David", "Sofia", "Jun", "Elena", "Tom",
    "Yan", "Grace", "Omar", "Hui", "Lucas", "Mei", "Ravi", "Nina", "Kai",
];

const LAST: &[&str] = &[
    "Zhang", "Smith", "Wang", "Brown", "Liu", "Garcia", "Chen", "Taylor", "Yang", "Wilson",
    "Huang", "Khan", "Zhao", "Martin", "Wu", "Lopez", "Zhou", "Clark", "Xu", "Lee",
];

const COURSE_TOPICS: &[&str] = &[
    "Foundations", "Methods", "Advanced Topics", "Laboratory", "Seminar", "Project",
    "Theory", "Applications", "Research Skills",
];

const SEMESTERS: &[&str] = &["Semester 1", "Semester 2", "Summer"];
const CREDITS: &[&str] = &["5", "10", "15"];

/// Everything the demo pipeline needs.
pub struct DemoWorld {
    pub entities: Vec<EntityRecord>,
    pub templates: TemplateSet,
    pub pool: Dataset,
    pub faq: Vec<QaPair>,
    pub interest: Vec<QAItem>,
}

fn dept_slug(dept: &str) -> String {
    dept.to_lowercase().replace(' ', "-")
}

fn one(v: &str) -> AttrValue {
    AttrValue::One(v.to_string())
}

/// Staff and course entities spread over the departments. Staff names and
/// course titles are unique.
pub fn entities(count: usize, seed: u64) -> Vec<EntityRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depts: Vec<(&str, &str)> = SCHOOLS
        .iter()
        .flat_map(|(school, ds)| ds.iter().map(move |d| (*school, *d)))
        .collect();
    let n_courses = count / 4;
    let n_staff = count - n_courses;
    let mut names = HashSet::new();
    let mut out = Vec::with_capacity(count);
    let mut staff_names: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for i in 0..n_staff {
        let (school, dept) = depts[rng.gen_range(0..depts.len())];
        let mut name = format!(
            "{} {}",
            FIRST.choose(&mut rng).unwrap(),
            LAST.choose(&mut rng).unwrap()
        );
        if !names.insert(name.clone()) {
            name = format!("{name} ({})", i + 1);
            names.insert(name.clone());
        }
        let n_areas = rng.gen_range(1..=3);
        let areas: Vec<String> = AREAS
            .choose_multiple(&mut rng, n_areas)
            .map(|s| s.to_string())
            .collect();
        let mut attributes = BTreeMap::new();
        attributes.insert("name".into(), one(&name));
        attributes.insert("school".into(), one(school));
        attributes.insert("dept".into(), one(dept));
        attributes.insert("title".into(), one(TITLES.choose(&mut rng).unwrap()));
        attributes.insert("research".into(), AttrValue::Many(areas));
        attributes.insert("phd_from".into(), one(UNIVERSITIES.choose(&mut rng).unwrap()));
        attributes.insert("building".into(), one(BUILDINGS.choose(&mut rng).unwrap()));
        staff_names.entry(dept).or_default().push(name);
        out.push(EntityRecord {
            entity_id: format!("staff-{i:05}"),
            entity_type: EntityType::Staff,
            attributes,
        });
    }
    for i in 0..n_courses {
        let (school, dept) = depts[rng.gen_range(0..depts.len())];
        let code = format!(
            "{}{}{:03}",
            dept.replace(' ', "")[..4].to_uppercase(),
            rng.gen_range(1..5),
            i
        );
        let title = format!("{code} {} {}", dept, COURSE_TOPICS.choose(&mut rng).unwrap());
        let mut attributes = BTreeMap::new();
        attributes.insert("title".into(), one(&title));
        attributes.insert("school".into(), one(school));
        attributes.insert("dept".into(), one(dept));
        attributes.insert("semester".into(), one(SEMESTERS.choose(&mut rng).unwrap()));
        attributes.insert("credits".into(), one(CREDITS.choose(&mut rng).unwrap()));
        if let Some(leader) = staff_names.get(dept).and_then(|v| v.choose(&mut rng)) {
            attributes.insert("leader".into(), one(leader));
        }
        out.push(EntityRecord {
            entity_id: format!("course-{i:05}"),
            entity_type: EntityType::Course,
            attributes,
        });
    }
    out
}

fn template(
    id: &str,
    text: &str,
    format: Format,
    target: &str,
    ty: EntityType,
) -> TemplatePattern {
    TemplatePattern {
        id: id.into(),
        text: text.into(),
        format,
        level: None,
        target_field: target.into(),
        entity_type: Some(ty),
        polarity: Polarity::Both,
        distractors: Default::default(),
    }
}

pub fn templates() -> TemplateSet {
    use EntityType::{Course, Staff};
    use Format::{Binary, Mcq};
    TemplateSet {
        templates: vec![
            template("staff-dept-yn", "Is {name} a member of the {dept} department?", Binary, "dept", Staff),
            template("staff-area-yn", "Does {name} do research on {research}?", Binary, "research", Staff),
            template("staff-phd-yn", "Did {name} obtain a PhD from {phd_from}?", Binary, "phd_from", Staff),
            template("staff-dept-mcq", "Which department does {name} belong to?", Mcq, "dept", Staff),
            template("staff-title-mcq", "What is the job title of {name}?", Mcq, "title", Staff),
            template("staff-office-mcq", "In which building is the office of {name}?", Mcq, "building", Staff),
            template("course-sem-yn", "Is {title} taught in {semester}?", Binary, "semester", Course),
            template("course-dept-mcq", "Which department offers {title}?", Mcq, "dept", Course),
            // only three credit values exist, so this one is skipped with a warning
            template("course-credits-mcq", "How many credits is {title} worth?", Mcq, "credits", Course),
        ],
        patterns: vec![
            QueryPattern {
                id: "staff-dept-phd-maq".into(),
                text: "Which staff in the {dept} department obtained a PhD from {phd_from}?".into(),
                conditions: vec!["dept".into(), "phd_from".into()],
                label_field: "name".into(),
                entity_type: Some(Staff),
            },
            QueryPattern {
                id: "staff-area-maq".into(),
                text: "Which members of staff do research on {research}?".into(),
                conditions: vec!["research".into()],
                label_field: "name".into(),
                entity_type: Some(Staff),
            },
            QueryPattern {
                id: "course-dept-sem-maq".into(),
                text: "Which {dept} courses run in {semester}?".into(),
                conditions: vec!["dept".into(), "semester".into()],
                label_field: "title".into(),
                entity_type: Some(Course),
            },
        ],
    }
}

fn describe(e: &EntityRecord) -> String {
    let get = |f: &str| e.get(f).map(|v| v.values().join(" and ")).unwrap_or_default();
    match e.entity_type {
        EntityType::Staff => format!(
            "{} is a {} in the {} department of the {}. Research interests: {}. PhD from {}. Office in the {}.",
            get("name"), get("title"), get("dept"), get("school"), get("research"), get("phd_from"), get("building")
        ),
        _ => format!(
            "{} is offered by the {} department in {} and is worth {} credits. Course leader: {}.",
            get("title"), get("dept"), get("semester"), get("credits"), get("leader")
        ),
    }
}

/// One web page per entity, grouped into per-department sites. Two
/// departments also have a mirror site repeating their pages.
pub fn pool(entities: &[EntityRecord], dim: usize) -> Dataset {
    let encoder = HashingEncoder::new(dim);
    let mut pool = Dataset::empty("pool", Role::Space, dim);
    let mut mirrored = Vec::new();
    for e in entities {
        let dept = e.get("dept").map(|v| v.values()[0].clone()).unwrap_or_default();
        let text = describe(e);
        let record = EmbeddingRecord::new(e.entity_id.clone(), format!("site-{}", dept_slug(&dept)), encoder.embed(&text))
            .with_text(text);
        if dept == "Physics" || dept == "History" {
            mirrored.push(EmbeddingRecord {
                id: format!("mirror-{}", e.entity_id),
                source: format!("mirror-{}", dept_slug(&dept)),
                ..record.clone()
            });
        }
        pool.push(record).expect("entity ids are unique");
    }
    for r in mirrored {
        pool.push(r).expect("mirror ids are unique");
    }
    pool
}

pub fn faq() -> Vec<QaPair> {
    let pairs = [
        ("How do I apply for a postgraduate programme?", "Apply online through the admissions portal before the published deadline."),
        ("When does the library open?", "The main library opens at 8am on weekdays and 10am at weekends."),
        ("How can I reset my campus account password?", "Use the self-service password page or visit the IT service desk."),
        ("Where can I find my exam timetable?", "Exam timetables are published on the student portal four weeks before exams."),
        ("How do I apply for a postgraduate  programme?", "Duplicate entry."),
        ("Can I change my module after registration?", "Module changes are allowed during the first two weeks of semester."),
        ("Is there accommodation for international students?", "First-year international students are guaranteed a place in university housing."),
        ("How do I book a meeting with my academic advisor?", "Book through the advising system or email your advisor directly."),
    ];
    pairs
        .iter()
        .map(|(q, a)| QaPair { question: q.to_string(), answer: a.to_string() })
        .collect()
}

pub fn forum_interest() -> Vec<QAItem> {
    let posts = [
        ("Which bus goes from the train station to the north campus?", "Route 3 runs every ten minutes."),
        ("Can visiting students use the sports centre?", "Yes, with a temporary membership card."),
        ("Is parking free on campus at weekends?", "Weekend parking is free in the visitor car parks."),
    ];
    posts
        .iter()
        .enumerate()
        .map(|(i, (q, a))| QAItem {
            qid: format!("forum-{i:03}"),
            format: Format::Open,
            level: Level::KC,
            question: q.to_string(),
            candidates: Vec::new(),
            gold: vec![a.to_string()],
            provenance: Provenance::Forum,
            source_ids: Vec::new(),
            source: "forum".into(),
        })
        .collect()
}

/// Settings suited to the unit-length hashing vectors of the demo pool.
pub fn demo_config(seed: u64) -> CuratorConfig {
    CuratorConfig {
        h: 0.8,
        max_rounds: 40,
        qa_max_rounds: Some(3),
        seed,
        ..CuratorConfig::default()
    }
}

pub fn demo_world(entity_count: usize, dim: usize, seed: u64) -> DemoWorld {
    let entities = entities(entity_count, seed);
    let pool = pool(&entities, dim);
    DemoWorld {
        templates: templates(),
        pool,
        faq: faq(),
        interest: forum_interest(),
        entities,
    }
}
