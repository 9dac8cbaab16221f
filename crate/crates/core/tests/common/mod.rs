#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use retroviz::data::{load_csv, Dataset, Matrix};
use retroviz::models::{fit_linear, gp::rbf, predict_checked};
use retroviz::retro::{build_reference_set, ReferenceSet, RetroConfig};
use retroviz::viz::{build_figure, FeatureSelection, VizFigure};

pub const GOLDEN_WIDTH: u32 = 900;
pub const GOLDEN_HEIGHT: u32 = 500;

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn stub_command(args: &str) -> String {
    format!("{} {args}", env!("CARGO_BIN_EXE_retroviz-stub"))
}

pub fn stores() -> Dataset {
    load_csv(&manifest_dir().join("tests/fixtures/stores.csv"), "sales", ',')
        .unwrap()
        .dataset
}

/// Exhaustive neighbor scan: sort every row by (distance, index).
pub fn brute_force_knn(points: &Matrix, query: &[f64], k: usize, exclude: Option<usize>) -> (Vec<usize>, Vec<f64>) {
    let mut all: Vec<(f64, usize)> = (0..points.nrows())
        .filter(|&i| Some(i) != exclude)
        .map(|i| {
            let mut sq = 0.0;
            for (a, b) in points.row(i).iter().zip(query) {
                sq += (a - b) * (a - b);
            }
            (sq.sqrt(), i)
        })
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    all.truncate(k);
    (all.iter().map(|p| p.1).collect(), all.iter().map(|p| p.0).collect())
}

/// Least squares through the Moore-Penrose pseudo-inverse of `[1 X]`.
pub fn pinv_linear(features: &Matrix, targets: &[f64]) -> Vec<f64> {
    let n = features.nrows();
    let d = features.ncols();
    let design = DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { features.get(i, j - 1) });
    let pinv = design.pseudo_inverse(1e-12).unwrap();
    (pinv * DVector::from_column_slice(targets)).iter().copied().collect()
}

/// GP posterior mean by a dense LU solve of `(K + noise I) w = y`.
pub fn dense_gp_predict(train: &Matrix, targets: &[f64], query: &Matrix, length_scale: f64, noise: f64) -> Vec<f64> {
    let n = train.nrows();
    let k = DMatrix::from_fn(n, n, |i, j| {
        rbf(train.row(i), train.row(j), length_scale) + if i == j { noise } else { 0.0 }
    });
    let w = k.lu().solve(&DVector::from_column_slice(targets)).unwrap();
    (0..query.nrows())
        .map(|q| (0..n).map(|i| w[i] * rbf(query.row(q), train.row(i), length_scale)).sum())
        .collect()
}

pub struct VizScenario {
    pub name: &'static str,
    pub annotation: f64,
    pub figure: VizFigure,
}

pub fn viz_reference() -> (Dataset, ReferenceSet, Vec<f64>) {
    let ds = stores();
    let model = fit_linear(&ds.features, &ds.targets).unwrap();
    let cfg = RetroConfig {
        k_neighbors: 5,
        ..RetroConfig::default()
    };
    let set = build_reference_set(&ds, &model, &cfg).unwrap();
    let predictions = predict_checked(&model, &ds.features).unwrap();
    (ds, set, predictions)
}

/// Three explanations on the store-sales fixture: an instance with unusual
/// features, a prediction far from its neighbors' targets, and an instance
/// that sits inside the reference data.
pub fn viz_scenarios() -> Vec<VizScenario> {
    let (ds, set, predictions) = viz_reference();
    let sel = FeatureSelection::default();

    let mut outlier = ds.features.row(3).to_vec();
    outlier[0] = 1400.0;
    outlier[2] = 2300.0;
    let probe = set.score(&outlier, predictions[3]).unwrap();
    let y_similar = probe.neighbor_indices.iter().map(|&i| set.raw_targets[i]).sum::<f64>() / 5.0;
    let s1 = set.score(&outlier, y_similar).unwrap();

    let x2 = ds.features.row(10).to_vec();
    let y2 = predictions[10] + 900.0;
    let s2 = set.score(&x2, y2).unwrap();

    let x3 = ds.features.row(20).to_vec();
    let s3 = set.score(&x3, predictions[20]).unwrap();

    let figure = |x: &[f64], y: f64, s, annotation: f64| {
        let mut f = build_figure(&set, x, y, s, &sel).unwrap();
        f.retro_score_annotation = Some(annotation);
        f
    };
    vec![
        VizScenario {
            name: "feature_outlier",
            annotation: 0.091,
            figure: figure(&outlier, y_similar, &s1, 0.091),
        },
        VizScenario {
            name: "prediction_outlier",
            annotation: 0.120,
            figure: figure(&x2, y2, &s2, 0.120),
        },
        VizScenario {
            name: "aligned",
            annotation: 0.874,
            figure: figure(&x3, predictions[20], &s3, 0.874),
        },
    ]
}

/// `(x, y)` vertices of every polyline, in document order.
pub fn parse_polylines(svg: &str) -> Vec<Vec<(f64, f64)>> {
    svg.split("<polyline")
        .skip(1)
        .map(|chunk| {
            let start = chunk.find("points=\"").unwrap() + "points=\"".len();
            let end = start + chunk[start..].find('"').unwrap();
            chunk[start..end]
                .split(' ')
                .map(|p| {
                    let (x, y) = p.split_once(',').unwrap();
                    (x.parse().unwrap(), y.parse().unwrap())
                })
                .collect()
        })
        .collect()
}
