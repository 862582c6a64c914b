//! The question-generation hook. A generator receives gap points and returns
//! QA items; the built-in implementations are the template engine, an echo
//! stub, and the JSON wire protocol over a subprocess or HTTP.

use std::io::Write;
use std::process::{Command, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qagen::{gen_for_entities, EntityStore, Format, Level, Provenance, QAItem, TemplateSet};

#[derive(Debug, Error)]
pub enum HookError {
    #[error("failed to start generator `{command}`: {message}")]
    Spawn { command: String, message: String },
    #[error("generator `{command}` exited with {status}: {stderr}")]
    Status {
        command: String,
        status: String,
        stderr: String,
    },
    #[error("generator transport failure: {0}")]
    Transport(String),
    #[error("malformed generator response: {0}")]
    Malformed(String),
    #[error("template generator failed: {0}")]
    Template(String),
}

/// A gap point as sent to the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapPoint {
    pub id: String,
    pub source: String,
    #[serde(default)]
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaGenRequest {
    pub gap_points: Vec<GapPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaGenResponse {
    pub items: Vec<QAItem>,
}

pub trait QaGenerator {
    fn generate(&mut self, request: &QaGenRequest) -> Result<QaGenResponse, HookError>;
}

/// Runs a shell command per request, writing the request JSON to its stdin
/// and reading the response JSON from its stdout.
#[derive(Debug, Clone)]
pub struct SubprocessGenerator {
    command: String,
}

impl SubprocessGenerator {
    pub fn new(command: impl Into<String>) -> Self {
        SubprocessGenerator {
            command: command.into(),
        }
    }
}

impl QaGenerator for SubprocessGenerator {
    fn generate(&mut self, request: &QaGenRequest) -> Result<QaGenResponse, HookError> {
        let spawn_err = |message: String| HookError::Spawn {
            command: self.command.clone(),
            message,
        };
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| spawn_err(e.to_string()))?;
        let body = serde_json::to_vec(request).map_err(|e| HookError::Malformed(e.to_string()))?;
        if let Some(mut stdin) = child.stdin.take() {
            // a generator may exit without reading everything; its status decides
            let _ = stdin.write_all(&body);
        }
        let output = child
            .wait_with_output()
            .map_err(|e| spawn_err(e.to_string()))?;
        if !output.status.success() {
            return Err(HookError::Status {
                command: self.command.clone(),
                status: output.status.to_string(),
                stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
            });
        }
        serde_json::from_slice(&output.stdout).map_err(|e| HookError::Malformed(e.to_string()))
    }
}

/// POSTs each request to a URL.
#[derive(Debug, Clone)]
pub struct HttpGenerator {
    url: String,
    agent: ureq::Agent,
}

impl HttpGenerator {
    pub fn new(url: impl Into<String>) -> Self {
        HttpGenerator {
            url: url.into(),
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(300))
                .build(),
        }
    }
}

impl QaGenerator for HttpGenerator {
    fn generate(&mut self, request: &QaGenRequest) -> Result<QaGenResponse, HookError> {
        let response = self
            .agent
            .post(&self.url)
            .send_json(request)
            .map_err(|e| HookError::Transport(e.to_string()))?;
        response
            .into_json()
            .map_err(|e| HookError::Malformed(e.to_string()))
    }
}

/// Template-engine generator. Gap point ids are looked up as entity ids;
/// points with no matching entity are ignored.
#[derive(Debug, Clone)]
pub struct TemplateGenerator {
    store: EntityStore,
    templates: TemplateSet,
    seed: u64,
    calls: usize,
}

impl TemplateGenerator {
    pub fn new(store: EntityStore, templates: TemplateSet, seed: u64) -> Result<Self, HookError> {
        templates
            .validate(&store)
            .map_err(|e| HookError::Template(e.to_string()))?;
        Ok(TemplateGenerator {
            store,
            templates,
            seed,
            calls: 0,
        })
    }

    pub fn store(&self) -> &EntityStore {
        &self.store
    }
}

impl QaGenerator for TemplateGenerator {
    fn generate(&mut self, request: &QaGenRequest) -> Result<QaGenResponse, HookError> {
        let ids: Vec<String> = request
            .gap_points
            .iter()
            .filter(|p| self.store.get(&p.id).is_some())
            .map(|p| p.id.clone())
            .collect();
        let prefix = format!("g{:03}", self.calls);
        let seed = self.seed.wrapping_add(self.calls as u64);
        self.calls += 1;
        let generation = gen_for_entities(&self.store, &self.templates, &ids, &prefix, seed)
            .map_err(|e| HookError::Template(e.to_string()))?;
        Ok(QaGenResponse {
            items: generation.qa_items(),
        })
    }
}

/// Stub generator: one open question per gap point, answered by the point's text.
#[derive(Debug, Clone, Default)]
pub struct EchoGenerator {
    calls: usize,
}

impl QaGenerator for EchoGenerator {
    fn generate(&mut self, request: &QaGenRequest) -> Result<QaGenResponse, HookError> {
        let call = self.calls;
        self.calls += 1;
        let items = request
            .gap_points
            .iter()
            .map(|p| {
                let answer = if p.text.trim().is_empty() { p.id.clone() } else { p.text.clone() };
                QAItem {
                    qid: format!("echo{call:03}-{}", p.id),
                    format: Format::Open,
                    level: Level::KC,
                    question: format!("What does {} record {} say?", p.source, p.id),
                    candidates: Vec::new(),
                    gold: vec![answer],
                    provenance: Provenance::External,
                    source_ids: vec![p.id.clone()],
                    source: p.source.clone(),
                }
            })
            .collect();
        Ok(QaGenResponse { items })
    }
}

/// Picks an implementation from a `--generator` value: `echo`, an
/// `http(s)://` URL, or a shell command.
pub fn generator_from_spec(spec: &str) -> Box<dyn QaGenerator> {
    if spec == "echo" {
        Box::new(EchoGenerator::default())
    } else if spec.starts_with("http://") || spec.starts_with("https://") {
        Box::new(HttpGenerator::new(spec))
    } else {
        Box::new(SubprocessGenerator::new(spec))
    }
}
