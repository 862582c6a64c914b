//! Gaussian kernel density estimation in the full embedding space, log
//! density ratios between two sample sets, and gap-point extraction.
//!
//! The estimator is
//!
//! ```text
//! f(d) = 1/(m h) * sum_i exp(-||d - e_i||^2 / (2 h^2))
//! ```
//!
//! with no dimension-dependent Gaussian constant. The omitted factor is the
//! same for every sample set at a given `h`, so ratios and correlations are
//! unaffected. Everything is kept in log space: the kernel sum is evaluated
//! as a max-shifted log-sum-exp, so points far from every sample (exponents
//! well below -745) still get a finite log density.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{Dataset, EmbeddingRecord};

#[derive(Debug, Error, PartialEq)]
pub enum DensityError {
    #[error("bandwidth must be positive and finite, got {0}")]
    Bandwidth(f64),
    #[error("sample set is empty")]
    EmptySamples,
    #[error("dimension mismatch: samples have dim {samples}, evaluation points have dim {points}")]
    DimensionMismatch { samples: usize, points: usize },
    #[error("density fields are evaluated at different points (first difference at position {0})")]
    EvalPointMismatch(usize),
    #[error("no deltas to threshold")]
    EmptyDeltas,
    #[error("t_d must lie in [0, 1], got {0}")]
    FillFraction(f64),
    #[error("id `{0}` names different vectors in the two sets")]
    IdConflict(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Kernel bandwidth `h`, in embedding-space units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KdeParams {
    bandwidth: f64,
}

impl KdeParams {
    pub const DEFAULT_BANDWIDTH: f64 = 5.0;

    pub fn new(bandwidth: f64) -> Result<Self, DensityError> {
        if bandwidth > 0.0 && bandwidth.is_finite() {
            Ok(KdeParams { bandwidth })
        } else {
            Err(DensityError::Bandwidth(bandwidth))
        }
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    fn inv_two_h2(&self) -> f64 {
        1.0 / (2.0 * self.bandwidth * self.bandwidth)
    }
}

impl Default for KdeParams {
    fn default() -> Self {
        KdeParams {
            bandwidth: Self::DEFAULT_BANDWIDTH,
        }
    }
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `ln(e^a + e^b)` without overflow; `-inf` is the identity.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn log_sum_exp_in_place(exponents: &[f64]) -> f64 {
    let max = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: f64 = exponents.iter().map(|e| (e - max).exp()).sum();
    max + sum.ln()
}

/// For every point, `ln sum_i exp(-||p - s_i||^2 / (2h^2))` over the samples.
/// Un-normalized, so sums over disjoint sample sets combine with
/// [`log_add_exp`]. Empty samples give `-inf` everywhere.
pub fn log_kernel_sums(samples: &[&[f64]], points: &[&[f64]], params: KdeParams) -> Vec<f64> {
    let scale = params.inv_two_h2();
    points
        .par_iter()
        .map_init(
            || Vec::with_capacity(samples.len()),
            |buf: &mut Vec<f64>, p| {
                buf.clear();
                buf.extend(samples.iter().map(|s| -squared_distance(p, s) * scale));
                log_sum_exp_in_place(buf)
            },
        )
        .collect()
}

/// Normalizes a log kernel sum over `m` samples into a log density.
#[inline]
pub fn normalize_log_sum(log_sum: f64, m: usize, params: KdeParams) -> f64 {
    log_sum - (m as f64).ln() - params.bandwidth.ln()
}

/// Log densities of one sample set at an ordered set of evaluation points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    pub eval_ids: Vec<String>,
    pub log_densities: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DensityLine {
    id: String,
    log_density: f64,
}

impl DensityField {
    pub fn len(&self) -> usize {
        self.eval_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eval_ids.is_empty()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (id, &log_density) in self.eval_ids.iter().zip(&self.log_densities) {
            let line = DensityLine {
                id: id.clone(),
                log_density,
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self, DensityError> {
        let mut field = DensityField {
            eval_ids: Vec::new(),
            log_densities: Vec::new(),
        };
        for (i, line) in reader.lines().enumerate() {
            let parse = |message: String| DensityError::Parse {
                line: i + 1,
                message,
            };
            let line = line.map_err(|e| parse(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: DensityLine =
                serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
            field.eval_ids.push(entry.id);
            field.log_densities.push(entry.log_density);
        }
        Ok(field)
    }
}

fn check_dims(samples: &Dataset, points_dim: usize) -> Result<(), DensityError> {
    if samples.is_empty() {
        return Err(DensityError::EmptySamples);
    }
    if samples.dim() != points_dim {
        return Err(DensityError::DimensionMismatch {
            samples: samples.dim(),
            points: points_dim,
        });
    }
    Ok(())
}

/// KDE of `samples` evaluated at arbitrary records (all of the samples' dimension).
pub fn kde_log_density_at(
    samples: &Dataset,
    eval_points: &[&EmbeddingRecord],
    params: KdeParams,
) -> Result<DensityField, DensityError> {
    if samples.is_empty() {
        return Err(DensityError::EmptySamples);
    }
    for p in eval_points {
        check_dims(samples, p.vector.len())?;
    }
    let sample_vecs: Vec<&[f64]> = samples.iter().map(|r| r.vector.as_slice()).collect();
    let point_vecs: Vec<&[f64]> = eval_points.iter().map(|r| r.vector.as_slice()).collect();
    let m = samples.len();
    let log_densities = log_kernel_sums(&sample_vecs, &point_vecs, params)
        .into_iter()
        .map(|s| normalize_log_sum(s, m, params))
        .collect();
    Ok(DensityField {
        eval_ids: eval_points.iter().map(|r| r.id.clone()).collect(),
        log_densities,
    })
}

/// KDE of `samples` evaluated at every record of `eval_points`.
pub fn kde_log_density(
    samples: &Dataset,
    eval_points: &Dataset,
    params: KdeParams,
) -> Result<DensityField, DensityError> {
    check_dims(samples, eval_points.dim())?;
    let points: Vec<&EmbeddingRecord> = eval_points.iter().collect();
    kde_log_density_at(samples, &points, params)
}

/// A log density ratio at one evaluation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointDelta {
    pub id: String,
    pub delta: f64,
}

/// `delta_j = log f_num(d_j) - log f_den(d_j)`; both fields must share their evaluation points.
pub fn log_density_ratio(
    numerator: &DensityField,
    denominator: &DensityField,
) -> Result<Vec<PointDelta>, DensityError> {
    if numerator.eval_ids.len() != denominator.eval_ids.len() {
        return Err(DensityError::EvalPointMismatch(
            numerator.eval_ids.len().min(denominator.eval_ids.len()),
        ));
    }
    if let Some(pos) = numerator
        .eval_ids
        .iter()
        .zip(&denominator.eval_ids)
        .position(|(a, b)| a != b)
    {
        return Err(DensityError::EvalPointMismatch(pos));
    }
    Ok(numerator
        .eval_ids
        .iter()
        .zip(numerator.log_densities.iter().zip(&denominator.log_densities))
        .map(|(id, (n, d))| PointDelta {
            id: id.clone(),
            delta: n - d,
        })
        .collect())
}

/// Evaluation points whose delta strictly exceeds `threshold_used`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSet {
    pub point_ids: Vec<String>,
    pub deltas: Vec<f64>,
    pub threshold_used: f64,
}

impl GapSet {
    pub fn empty(threshold_used: f64) -> Self {
        GapSet {
            point_ids: Vec::new(),
            deltas: Vec::new(),
            threshold_used,
        }
    }

    pub fn len(&self) -> usize {
        self.point_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_ids.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.point_ids.iter().any(|p| p == id)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (id, &delta) in self.point_ids.iter().zip(&self.deltas) {
            serde_json::to_writer(
                &mut out,
                &PointDelta {
                    id: id.clone(),
                    delta,
                },
            )?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }
}

/// Points with `delta > slack`. A slack of zero is the plain `delta > 0` rule.
pub fn gap_points(deltas: &[PointDelta], slack: f64) -> GapSet {
    let mut gap = GapSet::empty(slack);
    for d in deltas.iter().filter(|d| d.delta > slack) {
        gap.point_ids.push(d.id.clone());
        gap.deltas.push(d.delta);
    }
    gap
}

/// Empirical `(1 - t_d)` quantile of the positive deltas, linearly
/// interpolated between order statistics. Selecting `delta > tau` therefore
/// takes more points as `t_d` grows: `t_d = 1` gives the minimum, `t_d = 0`
/// the maximum.
pub fn percentile_threshold(positive_deltas: &[f64], t_d: f64) -> Result<f64, DensityError> {
    if !(0.0..=1.0).contains(&t_d) {
        return Err(DensityError::FillFraction(t_d));
    }
    if positive_deltas.is_empty() {
        return Err(DensityError::EmptyDeltas);
    }
    let mut sorted = positive_deltas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = (1.0 - t_d) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

/// How `t_d` turns into a cutoff on the deltas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    /// `t_d` is the fraction of the positive gap (deltas above the slack) to
    /// fill; the cutoff is their `(1 - t_d)` quantile.
    #[default]
    FillFraction,
    /// `delta > t_d` taken at face value.
    Literal,
}

/// Gap selection settings for [`select_gap`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapSelection {
    pub t_d: f64,
    pub slack: f64,
    pub mode: ThresholdMode,
}

impl GapSelection {
    pub fn fill(t_d: f64, slack: f64) -> Self {
        GapSelection {
            t_d,
            slack,
            mode: ThresholdMode::FillFraction,
        }
    }
}

/// Evaluation points for comparing `reference` against `candidate`: every
/// candidate record, then every reference record not already present. A
/// shared id must name an identical vector.
pub fn union_points<'a>(
    candidate: &'a Dataset,
    reference: &'a Dataset,
) -> Result<Vec<&'a EmbeddingRecord>, DensityError> {
    let mut seen: HashMap<&str, &[f64]> = HashMap::with_capacity(candidate.len() + reference.len());
    let mut points = Vec::with_capacity(candidate.len() + reference.len());
    for r in candidate.iter().chain(reference.iter()) {
        match seen.get(r.id.as_str()) {
            Some(v) if *v == r.vector.as_slice() => continue,
            Some(_) => return Err(DensityError::IdConflict(r.id.clone())),
            None => {
                seen.insert(&r.id, &r.vector);
                points.push(r);
            }
        }
    }
    Ok(points)
}

/// Regions dense in `reference` but thin in `candidate`: the deltas
/// `log f_reference - log f_candidate` at the union of both sets' points,
/// cut according to `selection`.
pub fn select_gap(
    reference: &Dataset,
    candidate: &Dataset,
    params: KdeParams,
    selection: GapSelection,
) -> Result<GapSet, DensityError> {
    if !(0.0..=1.0).contains(&selection.t_d) && selection.mode == ThresholdMode::FillFraction {
        return Err(DensityError::FillFraction(selection.t_d));
    }
    if candidate.dim() != reference.dim() {
        return Err(DensityError::DimensionMismatch {
            samples: reference.dim(),
            points: candidate.dim(),
        });
    }
    let points = union_points(candidate, reference)?;
    let f_ref = kde_log_density_at(reference, &points, params)?;
    let f_cand = kde_log_density_at(candidate, &points, params)?;
    let deltas = log_density_ratio(&f_ref, &f_cand)?;
    Ok(threshold_deltas(&deltas, selection))
}

/// Applies a [`GapSelection`] to precomputed deltas.
pub fn threshold_deltas(deltas: &[PointDelta], selection: GapSelection) -> GapSet {
    match selection.mode {
        ThresholdMode::Literal => gap_points(deltas, selection.t_d),
        ThresholdMode::FillFraction => {
            let positive: Vec<f64> = deltas
                .iter()
                .map(|d| d.delta)
                .filter(|&d| d > selection.slack)
                .collect();
            match percentile_threshold(&positive, selection.t_d) {
                Ok(tau) => gap_points(deltas, tau.max(selection.slack)),
                Err(_) => GapSet::empty(selection.slack),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::Role;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ds(points: &[Vec<f64>], prefix: &str) -> Dataset {
        let records = points
            .iter()
            .enumerate()
            .map(|(i, v)| EmbeddingRecord::new(format!("{prefix}{i}"), "s", v.clone()))
            .collect();
        Dataset::from_records(prefix, Role::Space, records).unwrap()
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize, spread: f64) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-spread..spread)).collect())
            .collect()
    }

    /// Direct summation with no shifting.
    fn brute(samples: &[Vec<f64>], point: &[f64], h: f64) -> f64 {
        let mut total = 0.0;
        for s in samples {
            let d2: f64 = s.iter().zip(point).map(|(a, b)| (a - b).powi(2)).sum();
            total += (-d2 / (2.0 * h * h)).exp();
        }
        total / (samples.len() as f64 * h)
    }

    #[test]
    fn single_sample_at_itself() {
        let s = ds(&[vec![1.0, 2.0, 3.0]], "a");
        let f = kde_log_density(&s, &s, KdeParams::new(5.0).unwrap()).unwrap();
        assert!((f.log_densities[0] - 0.2f64.ln()).abs() < 1e-15);
        assert!((f.log_densities[0] + 1.6094379124341003).abs() < 1e-12);
    }

    #[test]
    fn coincident_pair() {
        let s = ds(&[vec![0.5, 0.5], vec![0.5, 0.5]], "a");
        let f = kde_log_density(&s, &s, KdeParams::default()).unwrap();
        for v in f.log_densities {
            assert!((v.exp() - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples = random_points(&mut rng, 50, 8, 3.0);
        let evals = random_points(&mut rng, 20, 8, 3.0);
        let f = kde_log_density(&ds(&samples, "s"), &ds(&evals, "e"), KdeParams::default()).unwrap();
        for (p, got) in evals.iter().zip(&f.log_densities) {
            let want = brute(&samples, p, 5.0);
            assert!((got.exp() / want - 1.0).abs() <= 1e-9, "{got} vs {}", want.ln());
        }
    }

    #[test]
    fn far_points_stay_finite() {
        let s = ds(&[vec![0.0; 4], vec![1.0; 4]], "s");
        let e = ds(&[vec![1e4; 4]], "e");
        let f = kde_log_density(&s, &e, KdeParams::new(0.5).unwrap()).unwrap();
        assert!(f.log_densities[0].is_finite());
        assert!(f.log_densities[0] < -1e8);
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        let s = ds(&[vec![0.0, 1.0]], "s");
        let e = ds(&[vec![0.0, 1.0, 2.0]], "e");
        assert!(matches!(
            kde_log_density(&s, &e, KdeParams::default()),
            Err(DensityError::DimensionMismatch { .. })
        ));
        let empty = Dataset::empty("x", Role::Space, 2);
        assert_eq!(
            kde_log_density(&empty, &s, KdeParams::default()),
            Err(DensityError::EmptySamples)
        );
        assert!(KdeParams::new(0.0).is_err());
        assert!(KdeParams::new(f64::NAN).is_err());
    }

    #[test]
    fn ratio_of_identical_fields_is_zero() {
        let f = DensityField {
            eval_ids: vec!["a".into(), "b".into()],
            log_densities: vec![-3.25, 17.0],
        };
        assert!(log_density_ratio(&f, &f).unwrap().iter().all(|d| d.delta == 0.0));
        let mut g = f.clone();
        g.log_densities.iter_mut().for_each(|v| *v += 1.0);
        assert!(log_density_ratio(&g, &f).unwrap().iter().all(|d| d.delta == 1.0));
        g.eval_ids[1] = "c".into();
        assert_eq!(log_density_ratio(&g, &f), Err(DensityError::EvalPointMismatch(1)));
    }

    #[test]
    fn gap_filtering() {
        let zeros: Vec<PointDelta> = (0..5)
            .map(|i| PointDelta { id: i.to_string(), delta: 0.0 })
            .collect();
        assert!(gap_points(&zeros, 0.0).is_empty());
        let deltas = vec![
            PointDelta { id: "a".into(), delta: 0.5 },
            PointDelta { id: "b".into(), delta: -0.2 },
            PointDelta { id: "c".into(), delta: 0.01 },
        ];
        let g = gap_points(&deltas, 0.05);
        assert_eq!(g.point_ids, vec!["a"]);
        assert_eq!(g.threshold_used, 0.05);
    }

    #[test]
    fn percentile_endpoints() {
        let d = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile_threshold(&d, 1.0).unwrap(), 1.0);
        assert_eq!(percentile_threshold(&d, 0.0).unwrap(), 4.0);
        assert_eq!(percentile_threshold(&d, 0.5).unwrap(), 2.5);
        assert!(percentile_threshold(&d, 1.5).is_err());
        assert!(percentile_threshold(&d, -0.1).is_err());
        assert_eq!(percentile_threshold(&[], 0.5), Err(DensityError::EmptyDeltas));
    }

    #[test]
    fn union_deduplicates_shared_ids() {
        let a = ds(&[vec![0.0], vec![1.0]], "p");
        let pts = union_points(&a, &a).unwrap();
        assert_eq!(pts.len(), 2);
        let b = ds(&[vec![5.0]], "p");
        assert_eq!(union_points(&a, &b), Err(DensityError::IdConflict("p0".into())));
    }

    #[test]
    fn self_gap_is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = ds(&random_points(&mut rng, 30, 4, 1.0), "c");
        let g = select_gap(&c, &c, KdeParams::default(), GapSelection::fill(1.0, 0.05)).unwrap();
        assert!(g.is_empty());
    }

    #[test]
    fn literal_mode_uses_raw_threshold() {
        let deltas = vec![
            PointDelta { id: "a".into(), delta: 0.7 },
            PointDelta { id: "b".into(), delta: 0.3 },
        ];
        let sel = GapSelection { t_d: 0.5, slack: 0.0, mode: ThresholdMode::Literal };
        assert_eq!(threshold_deltas(&deltas, sel).point_ids, vec!["a"]);
        let fill = GapSelection::fill(0.5, 0.0);
        // median of {0.3, 0.7} is 0.5
        assert_eq!(threshold_deltas(&deltas, fill).point_ids, vec!["a"]);
        assert_eq!(threshold_deltas(&deltas, GapSelection::fill(1.0, 0.0)).point_ids, vec!["a"]);
    }

    #[test]
    fn log_add_exp_identities() {
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 2.0), 2.0);
        assert!((log_add_exp(1000.0, 1000.0) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!((log_add_exp(0.5, 2.0) - (0.5f64.exp() + 2f64.exp()).ln()).abs() < 1e-14);
    }

    #[test]
    fn field_jsonl_roundtrip() {
        let f = DensityField {
            eval_ids: vec!["a".into(), "b".into()],
            log_densities: vec![-1.5, 0.25],
        };
        let mut buf = Vec::new();
        f.write_jsonl(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "{\"id\":\"a\",\"log_density\":-1.5}\n{\"id\":\"b\",\"log_density\":0.25}\n"
        );
        assert_eq!(DensityField::read_jsonl(std::io::Cursor::new(buf)).unwrap(), f);
    }
}
