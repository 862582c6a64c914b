//! 2D views of curation rounds: a PCA projection of the embeddings, written
//! as CSV tables and standalone SVG scatter plots.

use std::collections::HashSet;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curator::{CurationTrace, QuestionSet};
use crate::store::Dataset;

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("projection needs at least one point")]
    NoPoints,
    #[error("vector {index} has dimension {found}, expected {expected}")]
    Dimension { index: usize, expected: usize, found: usize },
    #[error("singular value decomposition did not converge")]
    Svd,
    #[error("trace round {round} names `{id}`, which is not in the dataset")]
    UnknownMember { round: usize, id: String },
    #[error("the trace has no corpus rounds")]
    EmptyTrace,
    #[error("csv: {0}")]
    Csv(String),
}

/// Mean and first two principal axes of a point cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub mean: Vec<f64>,
    pub axes: [Vec<f64>; 2],
}

impl Projection {
    /// PCA via the SVD of the centred data matrix. Each axis is oriented so
    /// that its largest-magnitude loading is positive.
    pub fn fit(vectors: &[&[f64]]) -> Result<Self, ReportError> {
        let first = vectors.first().ok_or(ReportError::NoPoints)?;
        let dim = first.len();
        if let Some((index, v)) = vectors.iter().enumerate().find(|(_, v)| v.len() != dim) {
            return Err(ReportError::Dimension { index, expected: dim, found: v.len() });
        }
        let n = vectors.len();
        let mut mean = vec![0.0; dim];
        for v in vectors {
            mean.iter_mut().zip(*v).for_each(|(m, x)| *m += x);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let centred = DMatrix::from_fn(n, dim, |i, j| vectors[i][j] - mean[j]);
        let svd = centred.try_svd(false, true, f64::EPSILON, 0).ok_or(ReportError::Svd)?;
        let v_t = svd.v_t.ok_or(ReportError::Svd)?;
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
        let axis = |k: usize| -> Vec<f64> {
            let Some(&row) = order.get(k) else {
                return vec![0.0; dim];
            };
            let mut a: Vec<f64> = v_t.row(row).iter().copied().collect();
            orient(&mut a);
            a
        };
        Ok(Projection {
            mean,
            axes: [axis(0), axis(1)],
        })
    }

    pub fn project(&self, v: &[f64]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (k, axis) in self.axes.iter().enumerate() {
            out[k] = v
                .iter()
                .zip(&self.mean)
                .zip(axis)
                .map(|((x, m), a)| (x - m) * a)
                .sum();
        }
        out
    }
}

/// Flips `axis` so its largest-magnitude entry is positive.
pub fn orient(axis: &mut [f64]) {
    let pivot = axis
        .iter()
        .copied()
        .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
    if pivot < 0.0 {
        axis.iter_mut().for_each(|x| *x = -*x);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointRole {
    /// Already in the corpus before the round.
    Existing,
    /// Proposed in this round.
    New,
    Question,
    /// Not (yet) selected.
    Pool,
}

impl PointRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            PointRole::Existing => "existing",
            PointRole::New => "new",
            PointRole::Question => "question",
            PointRole::Pool => "pool",
        }
    }

    fn colour(&self) -> &'static str {
        match self {
            PointRole::Existing => "#3b6fd8",
            PointRole::New => "#e8589c",
            PointRole::Question => "#2a9d5c",
            PointRole::Pool => "#c9c9c9",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionFrame {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub role: PointRole,
}

/// One frame per round of a view, with a title for the plot.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundFrame {
    pub name: String,
    pub title: String,
    pub points: Vec<ProjectionFrame>,
}

/// A frame per corpus round over every pool record: corpus members before
/// the round are `existing`, the round's batch is `new`, the rest `pool`.
pub fn corpus_frames(pool: &Dataset, trace: &CurationTrace) -> Result<Vec<RoundFrame>, ReportError> {
    if trace.corpus_rounds.is_empty() {
        return Err(ReportError::EmptyTrace);
    }
    let vectors: Vec<&[f64]> = pool.iter().map(|r| r.vector.as_slice()).collect();
    let projection = Projection::fit(&vectors)?;
    let coords: Vec<[f64; 2]> = vectors.iter().map(|v| projection.project(v)).collect();
    let mut in_corpus = vec![false; pool.len()];
    let mut frames = Vec::with_capacity(trace.corpus_rounds.len());
    for round in &trace.corpus_rounds {
        let mut batch = Vec::with_capacity(round.members.len());
        for id in &round.members {
            let pos = pool.position(id).ok_or_else(|| ReportError::UnknownMember {
                round: round.round,
                id: id.clone(),
            })?;
            batch.push(pos);
        }
        let new: HashSet<usize> = batch.iter().copied().collect();
        let points = pool
            .iter()
            .enumerate()
            .map(|(i, r)| ProjectionFrame {
                id: r.id.clone(),
                x: coords[i][0],
                y: coords[i][1],
                role: if new.contains(&i) {
                    PointRole::New
                } else if in_corpus[i] {
                    PointRole::Existing
                } else {
                    PointRole::Pool
                },
            })
            .collect();
        frames.push(RoundFrame {
            name: format!("corpus-round-{:03}", round.round),
            title: format!(
                "corpus round {}: batch {} {:?}",
                round.round, round.batch_id, round.decision
            )
            .to_lowercase(),
            points,
        });
        if round.corpus_size_after > round.corpus_size_before {
            batch.iter().for_each(|&i| in_corpus[i] = true);
        }
    }
    Ok(frames)
}

/// A frame per question round over the corpus and the questions that exist
/// after the round; questions added in the round are `new`.
pub fn question_frames(
    corpus: &Dataset,
    questions: &QuestionSet,
    trace: &CurationTrace,
) -> Result<Vec<RoundFrame>, ReportError> {
    let vectors: Vec<&[f64]> = corpus
        .iter()
        .chain(questions.dataset.iter())
        .map(|r| r.vector.as_slice())
        .collect();
    let projection = Projection::fit(&vectors)?;
    let mut frames = Vec::new();
    for round in &trace.qa_rounds {
        let new: HashSet<&str> = round.new_items.iter().map(String::as_str).collect();
        let mut points: Vec<ProjectionFrame> = corpus
            .iter()
            .map(|r| {
                let [x, y] = projection.project(&r.vector);
                ProjectionFrame { id: r.id.clone(), x, y, role: PointRole::Existing }
            })
            .collect();
        for r in questions.dataset.records().iter().take(round.questions_after) {
            let [x, y] = projection.project(&r.vector);
            let role = if new.contains(r.id.as_str()) { PointRole::New } else { PointRole::Question };
            points.push(ProjectionFrame { id: r.id.clone(), x, y, role });
        }
        frames.push(RoundFrame {
            name: format!("qa-round-{:03}", round.round),
            title: format!("question round {}: {} new", round.round, round.new_items.len()),
            points,
        });
    }
    Ok(frames)
}

pub fn frame_csv(points: &[ProjectionFrame]) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in points {
        w.serialize(p).map_err(|e| ReportError::Csv(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| ReportError::Csv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| ReportError::Csv(e.to_string()))
}

/// Data bounds `(min_x, max_x, min_y, max_y)` over several frames, so that
/// every plot of a series shares axes.
pub fn bounds<'a>(frames: impl IntoIterator<Item = &'a RoundFrame>) -> (f64, f64, f64, f64) {
    let mut b = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in frames.into_iter().flat_map(|f| &f.points) {
        b = (b.0.min(p.x), b.1.max(p.x), b.2.min(p.y), b.3.max(p.y));
    }
    if !b.0.is_finite() {
        return (-1.0, 1.0, -1.0, 1.0);
    }
    b
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 520.0;
const MARGIN: f64 = 40.0;

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// A self-contained SVG scatter plot. Points are drawn pool first and new
/// last so the round's batch stays visible.
pub fn frame_svg(frame: &RoundFrame, bounds: (f64, f64, f64, f64)) -> String {
    let (x0, x1, y0, y1) = bounds;
    let span = |a: f64, b: f64| if b - a > 0.0 { b - a } else { 1.0 };
    let sx = (WIDTH - 2.0 * MARGIN) / span(x0, x1);
    let sy = (HEIGHT - 2.0 * MARGIN - 20.0) / span(y0, y1);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{MARGIN}" y="24" font-family="sans-serif" font-size="14">{}</text>"#,
        escape(&frame.title)
    );
    for role in [PointRole::Pool, PointRole::Existing, PointRole::Question, PointRole::New] {
        for p in frame.points.iter().filter(|p| p.role == role) {
            let cx = MARGIN + (p.x - x0) * sx;
            let cy = HEIGHT - MARGIN - (p.y - y0) * sy;
            let _ = writeln!(
                out,
                r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="3" fill="{}" fill-opacity="0.8"><title>{}</title></circle>"#,
                role.colour(),
                escape(&p.id)
            );
        }
    }
    let legend = [PointRole::Existing, PointRole::New, PointRole::Question, PointRole::Pool];
    for (k, role) in legend.iter().enumerate() {
        let x = MARGIN + 110.0 * k as f64;
        let y = HEIGHT - 12.0;
        let _ = writeln!(
            out,
            r#"<circle cx="{x:.2}" cy="{:.2}" r="4" fill="{}"/><text x="{:.2}" y="{y:.2}" font-family="sans-serif" font-size="11">{}</text>"#,
            y - 4.0,
            role.colour(),
            x + 8.0,
            role.as_str()
        );
    }
    out.push_str("</svg>\n");
    out
}
