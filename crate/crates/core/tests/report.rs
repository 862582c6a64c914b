use compcomp_core::report::{frame_csv, Projection};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Top eigenvectors of the sample covariance by power iteration with deflation.
fn covariance_axes(rows: &[Vec<f64>]) -> [Vec<f64>; 2] {
    let n = rows.len() as f64;
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for r in rows {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]) / n;
            }
        }
    }
    let mut axes = Vec::new();
    for _ in 0..2 {
        let mut v: Vec<f64> = (0..d).map(|k| 1.0 + k as f64 * 0.01).collect();
        for _ in 0..5000 {
            let mut w: Vec<f64> = (0..d).map(|i| (0..d).map(|j| cov[i][j] * v[j]).sum()).collect();
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            w.iter_mut().for_each(|x| *x /= norm);
            v = w;
        }
        let lambda: f64 = (0..d).map(|i| v[i] * (0..d).map(|j| cov[i][j] * v[j]).sum::<f64>()).sum();
        for i in 0..d {
            for j in 0..d {
                cov[i][j] -= lambda * v[i] * v[j];
            }
        }
        axes.push(v);
    }
    [axes[0].clone(), axes[1].clone()]
}

#[test]
fn axes_match_covariance_eigenvectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..10 {
        let d = 3 + trial % 4;
        // distinct variances per direction keep the eigenvalues well separated
        let scales: Vec<f64> = (0..d).map(|k| 6.0 / (k as f64 + 1.0)).collect();
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| scales.iter().map(|s| s * rng.gen_range(-1.0..1.0) + 3.0).collect())
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let fitted = Projection::fit(&refs).unwrap();
        let oracle = covariance_axes(&rows);
        for (a, b) in fitted.axes.iter().zip(&oracle) {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let sign = dot.signum();
            for (x, y) in a.iter().zip(b) {
                assert!((x - sign * y).abs() <= 1e-6, "trial {trial}: {a:?} vs {b:?}");
            }
            // orientation: the largest loading is positive
            let top = a.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            assert!(top > 0.0);
        }
    }
}

#[test]
fn csv_has_one_row_per_point() {
    let rows: Vec<Vec<f64>> = (0..7).map(|i| vec![i as f64, (i * i) as f64, 1.0]).collect();
    let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    let p = Projection::fit(&refs).unwrap();
    let points: Vec<_> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let [x, y] = p.project(r);
            compcomp_core::report::ProjectionFrame {
                id: format!("p{i}"),
                x,
                y,
                role: compcomp_core::report::PointRole::Pool,
            }
        })
        .collect();
    let csv = frame_csv(&points).unwrap();
    assert_eq!(csv.lines().count(), 8);
    assert!(points.iter().all(|f| f.x.is_finite() && f.y.is_finite()));
}
