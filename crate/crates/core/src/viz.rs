//! Parallel-coordinate explanations of a single RETRO score.
//!
//! A figure shows one vertical axis per displayed feature plus a final target
//! axis. Each of the K nearest reference rows is drawn as a blue polyline
//! through its original feature values and ground-truth target; the scored
//! instance is drawn in red through its features and the model's prediction.
//! Hovering a line in a browser shows its values through the SVG `<title>`
//! element.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::retro::{ReferenceSet, RetroScore};

pub const BLUE: &str = "#1f77b4";
pub const RED: &str = "#d62728";
pub const MIN_CANVAS: u32 = 200;
pub const DEFAULT_MAX_AXES: usize = 10;

/// Fraction of an axis' data range added above and below it.
pub const AXIS_PADDING: f64 = 0.05;
/// Half-width given to axes whose displayed values are all equal.
pub const FLAT_AXIS_HALF_WIDTH: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum VizError {
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("invalid feature selection: {0}")]
    InvalidSelection(String),
    #[error("neighbor index {0} is outside the reference set")]
    InvalidNeighbor(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value on axis `{0}`")]
    NonFinite(String),
    #[error("canvas {width}x{height} is smaller than {MIN_CANVAS}x{MIN_CANVAS}")]
    DegenerateCanvas { width: u32, height: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub label: String,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VizFigure {
    /// Feature axes in dataset order, then the target axis.
    pub axes: Vec<Axis>,
    /// One value per axis, original units.
    pub neighbor_lines: Vec<Vec<f64>>,
    pub instance_line: Vec<f64>,
    /// The instance's value on the target axis is the model prediction.
    pub instance_target_is_prediction: bool,
    pub title: String,
    pub retro_score_annotation: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    All,
    ExplicitList,
    TopVariance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelection {
    pub mode: SelectionMode,
    pub max_axes: usize,
    pub explicit: Option<Vec<String>>,
}

impl Default for FeatureSelection {
    fn default() -> Self {
        FeatureSelection {
            mode: SelectionMode::All,
            max_axes: DEFAULT_MAX_AXES,
            explicit: None,
        }
    }
}

impl FeatureSelection {
    /// All features when they fit, otherwise the highest-variance ones.
    pub fn auto(n_features: usize) -> Self {
        let mode = if n_features <= DEFAULT_MAX_AXES {
            SelectionMode::All
        } else {
            SelectionMode::TopVariance
        };
        FeatureSelection {
            mode,
            ..FeatureSelection::default()
        }
    }

    pub fn explicit(names: Vec<String>) -> Self {
        FeatureSelection {
            mode: SelectionMode::ExplicitList,
            max_axes: DEFAULT_MAX_AXES.max(names.len()),
            explicit: Some(names),
        }
    }

    pub fn top_variance(max_axes: usize) -> Self {
        FeatureSelection {
            mode: SelectionMode::TopVariance,
            max_axes,
            explicit: None,
        }
    }
}

/// Picks feature columns, returned in dataset order.
///
/// `TopVariance` ranks columns by the variance of their standardized values
/// over the displayed lines (neighbors and instance); equal variances prefer
/// the lower column index.
fn select_features(
    sel: &FeatureSelection,
    names: &[String],
    standardized_lines: &[Vec<f64>],
) -> Result<Vec<usize>, VizError> {
    let d = names.len();
    if sel.max_axes == 0 {
        return Err(VizError::InvalidSelection("max_axes must be positive".into()));
    }
    let mut chosen: Vec<usize> = match sel.mode {
        SelectionMode::All => {
            if d > sel.max_axes {
                return Err(VizError::InvalidSelection(format!(
                    "{d} features exceed max_axes {}; use top_variance or an explicit list",
                    sel.max_axes
                )));
            }
            (0..d).collect()
        }
        SelectionMode::ExplicitList => {
            let list = sel
                .explicit
                .as_ref()
                .filter(|l| !l.is_empty())
                .ok_or_else(|| VizError::InvalidSelection("explicit list is empty".into()))?;
            if list.len() > sel.max_axes {
                return Err(VizError::InvalidSelection(format!(
                    "{} features exceed max_axes {}",
                    list.len(),
                    sel.max_axes
                )));
            }
            let mut idx = Vec::with_capacity(list.len());
            for name in list {
                let j = names
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(|| VizError::UnknownFeature(name.clone()))?;
                if idx.contains(&j) {
                    return Err(VizError::InvalidSelection(format!("feature `{name}` listed twice")));
                }
                idx.push(j);
            }
            idx
        }
        SelectionMode::TopVariance => {
            let n = standardized_lines.len() as f64;
            let variance = |j: usize| {
                let mean = standardized_lines.iter().map(|l| l[j]).sum::<f64>() / n;
                standardized_lines.iter().map(|l| (l[j] - mean).powi(2)).sum::<f64>() / n
            };
            let vars: Vec<f64> = (0..d).map(variance).collect();
            let mut order: Vec<usize> = (0..d).collect();
            order.sort_by(|&a, &b| vars[b].total_cmp(&vars[a]).then(a.cmp(&b)));
            order.truncate(sel.max_axes);
            order
        }
    };
    chosen.sort_unstable();
    Ok(chosen)
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if range > 0.0 {
        (lo - AXIS_PADDING * range, hi + AXIS_PADDING * range)
    } else {
        (lo - FLAT_AXIS_HALF_WIDTH, hi + FLAT_AXIS_HALF_WIDTH)
    }
}

/// Assembles the figure for instance `x` with prediction `y_hat` and its score.
pub fn build_figure(
    reference: &ReferenceSet,
    x: &[f64],
    y_hat: f64,
    score: &RetroScore,
    sel: &FeatureSelection,
) -> Result<VizFigure, VizError> {
    let d = reference.n_features();
    if x.len() != d {
        return Err(VizError::DimensionMismatch {
            expected: d,
            found: x.len(),
        });
    }
    if let Some(&bad) = score.neighbor_indices.iter().find(|&&i| i >= reference.len()) {
        return Err(VizError::InvalidNeighbor(bad));
    }
    if let Some(j) = x.iter().position(|v| !v.is_finite()) {
        return Err(VizError::NonFinite(reference.feature_names[j].clone()));
    }
    if !y_hat.is_finite() {
        return Err(VizError::NonFinite(reference.target_name.clone()));
    }

    let raw_lines: Vec<&[f64]> = score
        .neighbor_indices
        .iter()
        .map(|&i| reference.raw_rows.row(i))
        .chain(std::iter::once(x))
        .collect();
    let standardized: Vec<Vec<f64>> = raw_lines
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(j, v)| (v - reference.standardizer.means[j]) / reference.standardizer.std_devs[j])
                .collect()
        })
        .collect();
    let features = select_features(sel, &reference.feature_names, &standardized)?;

    let line = |row: &[f64], target: f64| -> Vec<f64> {
        features.iter().map(|&j| row[j]).chain(std::iter::once(target)).collect()
    };
    let neighbor_lines: Vec<Vec<f64>> = score
        .neighbor_indices
        .iter()
        .map(|&i| line(reference.raw_rows.row(i), reference.raw_targets[i]))
        .collect();
    let instance_line = line(x, y_hat);

    let labels = features
        .iter()
        .map(|&j| reference.feature_names[j].clone())
        .chain(std::iter::once(reference.target_name.clone()));
    let axes = labels
        .enumerate()
        .map(|(a, label)| {
            let values = neighbor_lines.iter().map(|l| l[a]).chain(std::iter::once(instance_line[a]));
            let (min, max) = padded_range(values);
            Axis { label, min, max }
        })
        .collect();

    Ok(VizFigure {
        axes,
        neighbor_lines,
        instance_line,
        instance_target_is_prediction: true,
        title: format!(
            "Prediction for {} and its {} nearest reference rows",
            reference.target_name,
            score.neighbor_indices.len()
        ),
        retro_score_annotation: score.normalized,
    })
}

/// Placement of the axes on a canvas.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlotArea {
    pub left: f64,
    pub right: f64,
    pub top: f64,
    pub bottom: f64,
}

impl PlotArea {
    pub const MARGIN_LEFT: f64 = 60.0;
    pub const MARGIN_RIGHT: f64 = 60.0;
    pub const MARGIN_TOP: f64 = 80.0;
    pub const MARGIN_BOTTOM: f64 = 50.0;

    pub fn for_canvas(width: u32, height: u32) -> Self {
        PlotArea {
            left: Self::MARGIN_LEFT,
            right: f64::from(width) - Self::MARGIN_RIGHT,
            top: Self::MARGIN_TOP,
            bottom: f64::from(height) - Self::MARGIN_BOTTOM,
        }
    }

    /// Horizontal position of axis `a` out of `n`; a lone axis is centered.
    pub fn axis_x(&self, a: usize, n: usize) -> f64 {
        if n <= 1 {
            (self.left + self.right) / 2.0
        } else {
            self.left + (self.right - self.left) * a as f64 / (n - 1) as f64
        }
    }

    pub fn value_y(&self, axis: &Axis, v: f64) -> f64 {
        self.top + (axis.max - v) / (axis.max - axis.min) * (self.bottom - self.top)
    }
}

/// `%g`-style formatting with `sig` significant digits.
pub fn format_sig(v: f64, sig: usize) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", sig - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -4 || exp >= sig as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn polyline(out: &mut String, fig: &VizFigure, area: &PlotArea, values: &[f64], class: &str, color: &str, caption: &str) {
    let n = fig.axes.len();
    let points: Vec<String> = values
        .iter()
        .zip(&fig.axes)
        .enumerate()
        .map(|(a, (&v, axis))| format!("{:.2},{:.2}", area.axis_x(a, n), area.value_y(axis, v)))
        .collect();
    let tooltip: Vec<String> = fig
        .axes
        .iter()
        .zip(values)
        .map(|(axis, &v)| format!("{}={}", axis.label, format_sig(v, 6)))
        .collect();
    let _ = writeln!(
        out,
        "  <polyline class=\"{class}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"{}\" points=\"{}\">\n    <title>{}</title>\n  </polyline>",
        if class == "red" { 2.5 } else { 1.5 },
        points.join(" "),
        escape(&format!("{caption}: {}", tooltip.join(", ")))
    );
}

/// Renders the figure as a standalone SVG 1.1 document.
pub fn render_svg(fig: &VizFigure, width: u32, height: u32) -> Result<String, VizError> {
    if width < MIN_CANVAS || height < MIN_CANVAS {
        return Err(VizError::DegenerateCanvas { width, height });
    }
    let n = fig.axes.len();
    for line in fig.neighbor_lines.iter().chain(std::iter::once(&fig.instance_line)) {
        if line.len() != n {
            return Err(VizError::DimensionMismatch {
                expected: n,
                found: line.len(),
            });
        }
    }
    if let Some(axis) = fig.axes.iter().find(|a| !(a.min < a.max && a.min.is_finite() && a.max.is_finite())) {
        return Err(VizError::NonFinite(axis.label.clone()));
    }
    let area = PlotArea::for_canvas(width, height);
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">"
    );
    let _ = writeln!(
        out,
        "  <style>.blue{{stroke:{BLUE}}} .red{{stroke:{RED}}} text{{font-family:sans-serif;font-size:12px}} .title{{font-size:15px}}</style>"
    );
    let _ = writeln!(out, "  <rect width=\"{width}\" height=\"{height}\" fill=\"#ffffff\"/>");
    let center = f64::from(width) / 2.0;
    let _ = writeln!(
        out,
        "  <text class=\"title\" x=\"{center:.2}\" y=\"24.00\" text-anchor=\"middle\">{}</text>",
        escape(&fig.title)
    );
    if let Some(s) = fig.retro_score_annotation {
        let _ = writeln!(
            out,
            "  <text class=\"annotation\" x=\"{center:.2}\" y=\"44.00\" text-anchor=\"middle\">RETRO-score: {s:.3}</text>"
        );
    }

    for (a, axis) in fig.axes.iter().enumerate() {
        let x = area.axis_x(a, n);
        let _ = writeln!(
            out,
            "  <line class=\"axis\" x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#555555\" stroke-width=\"1\"/>",
            area.top, area.bottom
        );
        let _ = writeln!(
            out,
            "  <text class=\"axis-max\" x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            area.top - 6.0,
            format_sig(axis.max, 6)
        );
        let _ = writeln!(
            out,
            "  <text class=\"axis-min\" x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            area.bottom + 16.0,
            format_sig(axis.min, 6)
        );
        let _ = writeln!(
            out,
            "  <text class=\"axis-label\" x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            area.bottom + 34.0,
            escape(&axis.label)
        );
    }

    for (i, line) in fig.neighbor_lines.iter().enumerate() {
        polyline(&mut out, fig, &area, line, "blue", BLUE, &format!("neighbor {}", i + 1));
    }
    let caption = if fig.instance_target_is_prediction {
        "instance (target axis shows the prediction)"
    } else {
        "instance"
    };
    polyline(&mut out, fig, &area, &fig.instance_line, "red", RED, caption);
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, Matrix};
    use crate::retro::RetroConfig;

    fn reference(d: usize) -> ReferenceSet {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| (0..d).map(|j| ((i * (j + 3)) % 11) as f64 * (j + 1) as f64).collect())
            .collect();
        let targets: Vec<f64> = rows.iter().map(|r| r.iter().sum()).collect();
        let names = (0..d).map(|j| format!("f{j}")).collect();
        let ds = Dataset::new("v", names, "sales", Matrix::from_rows(&rows).unwrap(), targets.clone()).unwrap();
        let cfg = RetroConfig {
            k_neighbors: 5,
            embedding: crate::embed::EmbeddingSpec {
                threshold_dims: 1000,
                ..Default::default()
            },
            ..RetroConfig::default()
        };
        ReferenceSet::from_predictions(&ds, &targets, &cfg).unwrap()
    }

    fn figure(d: usize, sel: &FeatureSelection) -> Result<VizFigure, VizError> {
        let set = reference(d);
        let x: Vec<f64> = set.raw_rows.row(0).to_vec();
        let y = set.raw_targets[0];
        let score = set.score(&x, y).unwrap();
        build_figure(&set, &x, y, &score, sel)
    }

    #[test]
    fn five_features_all_mode() {
        let fig = figure(5, &FeatureSelection::default()).unwrap();
        assert_eq!(fig.axes.len(), 6);
        assert_eq!(fig.neighbor_lines.len(), 5);
        assert_eq!(fig.axes.last().unwrap().label, "sales");
        for line in fig.neighbor_lines.iter().chain([&fig.instance_line]) {
            for (v, axis) in line.iter().zip(&fig.axes) {
                assert!(axis.min < *v && *v < axis.max);
            }
        }
        let svg = render_svg(&fig, 800, 400).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 6);
        assert_eq!(svg, render_svg(&fig, 800, 400).unwrap());
        let last = svg.rfind("<polyline").unwrap();
        assert!(svg[last..].starts_with("<polyline class=\"red\""));
    }

    #[test]
    fn wide_data_capped_by_top_variance() {
        let fig = figure(100, &FeatureSelection::top_variance(10)).unwrap();
        assert_eq!(fig.axes.len(), 11);
        assert!(matches!(
            figure(100, &FeatureSelection::default()),
            Err(VizError::InvalidSelection(_))
        ));
    }

    #[test]
    fn explicit_list_in_dataset_order() {
        let fig = figure(5, &FeatureSelection::explicit(vec!["f3".into(), "f1".into()])).unwrap();
        let labels: Vec<&str> = fig.axes.iter().map(|a| a.label.as_str()).collect();
        assert_eq!(labels, ["f1", "f3", "sales"]);
        assert_eq!(
            figure(5, &FeatureSelection::explicit(vec!["nope".into()])),
            Err(VizError::UnknownFeature("nope".into()))
        );
    }

    #[test]
    fn top_variance_prefers_spread_then_low_index() {
        let names: Vec<String> = (0..3).map(|j| format!("c{j}")).collect();
        let lines = vec![vec![0.0, 1.0, -1.0], vec![0.0, -1.0, 1.0], vec![0.0, 0.0, 0.0]];
        let sel = FeatureSelection::top_variance(1);
        assert_eq!(select_features(&sel, &names, &lines).unwrap(), vec![1]);
    }

    #[test]
    fn flat_axis_padding() {
        assert_eq!(padded_range([3.0, 3.0].into_iter()), (2.5, 3.5));
        let (lo, hi) = padded_range([0.0, 10.0].into_iter());
        assert_eq!((lo, hi), (-0.5, 10.5));
    }

    #[test]
    fn shared_target_value_meets() {
        let fig = VizFigure {
            axes: vec![
                Axis { label: "a".into(), min: 0.0, max: 1.0 },
                Axis { label: "y".into(), min: 5.0, max: 15.0 },
            ],
            neighbor_lines: vec![vec![0.2, 10.0]],
            instance_line: vec![0.9, 10.0],
            instance_target_is_prediction: true,
            title: "t".into(),
            retro_score_annotation: None,
        };
        let svg = render_svg(&fig, 300, 300).unwrap();
        assert_eq!(svg.matches("240.00,165.00").count(), 2, "{svg}");
        assert!(!svg.contains("RETRO-score"));
    }

    #[test]
    fn canvas_too_small() {
        let fig = figure(2, &FeatureSelection::default()).unwrap();
        assert_eq!(
            render_svg(&fig, 199, 400),
            Err(VizError::DegenerateCanvas { width: 199, height: 400 })
        );
    }

    #[test]
    fn significant_digits() {
        assert_eq!(format_sig(0.0, 6), "0");
        assert_eq!(format_sig(1.5, 6), "1.5");
        assert_eq!(format_sig(123456.7, 6), "123457");
        assert_eq!(format_sig(1234567.0, 6), "1.23457e+06");
        assert_eq!(format_sig(0.0001234, 6), "0.0001234");
        assert_eq!(format_sig(0.00001234, 6), "1.234e-05");
        assert_eq!(format_sig(-2.0 / 3.0, 6), "-0.666667");
        assert_eq!(format_sig(999999.6, 6), "1e+06");
    }

    #[test]
    fn labels_are_escaped() {
        let mut fig = figure(2, &FeatureSelection::default()).unwrap();
        fig.axes[0].label = "a<b & \"c\"".into();
        let svg = render_svg(&fig, 400, 400).unwrap();
        assert!(svg.contains("a&lt;b &amp; &quot;c&quot;"));
    }
}
