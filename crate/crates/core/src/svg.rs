//! Standalone SVG figures for the batch reports.
//!
//! Every figure is built from a serialized report, so the same JSON written
//! by the CLI can be re-rendered later. Output is byte-stable: no
//! timestamps, fixed ordering and six significant digits for every number.

use std::fmt::Write as _;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::boot::{quantile_sorted, Interval, StabilityTable};
use crate::error::{PlsError, Result};
use crate::plsglr::BiplotData;
use crate::selection::VoteDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureKind {
    CvVotes,
    Boxplots,
    CiForest,
    SigGrid,
    Biplot,
}

impl FigureKind {
    pub fn name(self) -> &'static str {
        match self {
            FigureKind::CvVotes => "cv_votes",
            FigureKind::Boxplots => "boxplots",
            FigureKind::CiForest => "ci_forest",
            FigureKind::SigGrid => "sig_grid",
            FigureKind::Biplot => "biplot",
        }
    }
}

impl FromStr for FigureKind {
    type Err = PlsError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "cv_votes" => FigureKind::CvVotes,
            "boxplots" => FigureKind::Boxplots,
            "ci_forest" => FigureKind::CiForest,
            "sig_grid" => FigureKind::SigGrid,
            "biplot" => FigureKind::Biplot,
            _ => return Err(PlsError::InvalidArgument(format!("unknown figure kind '{s}'"))),
        })
    }
}

#[derive(Deserialize)]
struct BoxplotPayload {
    col_names: Vec<String>,
    beta_star: Array2<f64>,
}

/// Either a bare interval with its estimates, or a bootstrap report whose
/// first interval is drawn.
#[derive(Deserialize)]
struct ForestPayload {
    col_names: Vec<String>,
    beta_hat: Array1<f64>,
    intervals: Vec<Interval>,
}

fn parse<T: DeserializeOwned>(kind: FigureKind, payload: &Value) -> Result<T> {
    serde_json::from_value(payload.clone()).map_err(|e| mismatch(kind, e.to_string()))
}

fn mismatch(kind: FigureKind, reason: impl Into<String>) -> PlsError {
    PlsError::SchemaMismatch {
        kind: kind.name().into(),
        reason: reason.into(),
    }
}

/// Render a figure of the given kind from its JSON payload.
pub fn emit_svg(kind: FigureKind, payload: &Value) -> Result<String> {
    match kind {
        FigureKind::CvVotes => {
            let v: VoteDistribution = parse(kind, payload)?;
            if v.counts.len() != v.freqs.len() {
                return Err(mismatch(kind, "counts and freqs differ in length"));
            }
            Ok(cv_votes(&v))
        }
        FigureKind::Boxplots => {
            let b: BoxplotPayload = parse(kind, payload)?;
            if b.beta_star.ncols() != b.col_names.len() {
                return Err(mismatch(kind, "beta_star columns and names differ"));
            }
            Ok(boxplots(&b))
        }
        FigureKind::CiForest => {
            let f: ForestPayload = parse(kind, payload)?;
            let p = f.col_names.len();
            if f.beta_hat.len() != p || f.intervals.iter().any(|i| i.bounds.nrows() != p || i.significant.len() != p) {
                return Err(mismatch(kind, "interval rows and names differ"));
            }
            Ok(ci_forest(&f))
        }
        FigureKind::SigGrid => {
            let t: StabilityTable = parse(kind, payload)?;
            let p = t.col_names.len();
            if t.pi_e.len() != p || t.significant.iter().flatten().any(|r| r.len() != p) {
                return Err(mismatch(kind, "grid rows and names differ"));
            }
            Ok(sig_grid(&t))
        }
        FigureKind::Biplot => {
            let b: BiplotData = parse(kind, payload)?;
            if b.scores.ncols() != 2
                || b.loadings.ncols() != 2
                || b.scores.nrows() != b.row_ids.len()
                || b.loadings.nrows() != b.col_names.len()
            {
                return Err(mismatch(kind, "biplot needs n x 2 scores and p x 2 loadings"));
            }
            Ok(biplot(&b))
        }
    }
}

/// Six significant digits, trailing zeros trimmed, no exponent.
pub fn fmt6(v: f64) -> String {
    if !v.is_finite() {
        return "0".into();
    }
    if v == 0.0 {
        return "0".into();
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = (5 - mag).clamp(0, 12) as usize;
    let mut s = format!("{v:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
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

const STYLE: &str = ".axis{stroke:#333;stroke-width:1;fill:none}\
.grid{stroke:#ddd;stroke-width:0.5}\
.zero{stroke:#b22;stroke-width:1;stroke-dasharray:4 3}\
.label{font-family:sans-serif;font-size:11px;fill:#222}\
.title{font-family:sans-serif;font-size:13px;fill:#000}\
.bar{fill:#4a7ab7}\
.box{fill:#cfdcec;stroke:#335;stroke-width:1}\
.whisker{stroke:#335;stroke-width:1}\
.outlier{fill:none;stroke:#335;stroke-width:0.6}\
.sig{stroke:#1a5fb4;fill:#1a5fb4;stroke-width:2}\
.nonsig{stroke:#999;fill:#999;stroke-width:1.5}\
.na{fill:#f0f0f0;stroke:#ccc}\
.point{fill:#4a7ab7;fill-opacity:0.6}\
.arrow{stroke:#b22;stroke-width:1.2}";

struct Doc {
    out: String,
}

impl Doc {
    fn new(width: f64, height: f64, title: &str) -> Self {
        // room for the title at roughly 7px per glyph
        let width = width.max(40.0 + 7.0 * title.chars().count() as f64);
        let mut out = String::new();
        let (w, h) = (fmt6(width), fmt6(height));
        out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        let _ = writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
        );
        let _ = writeln!(out, "<style>{STYLE}</style>");
        let _ = writeln!(out, "<rect width=\"{w}\" height=\"{h}\" fill=\"#fff\"/>");
        let _ = writeln!(
            out,
            "<text class=\"title\" x=\"{}\" y=\"18\" text-anchor=\"middle\">{}</text>",
            fmt6(width / 2.0),
            esc(title)
        );
        Doc { out }
    }

    fn line(&mut self, class: &str, x1: f64, y1: f64, x2: f64, y2: f64) {
        let _ = writeln!(
            self.out,
            "<line class=\"{class}\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\"/>",
            fmt6(x1),
            fmt6(y1),
            fmt6(x2),
            fmt6(y2)
        );
    }

    fn rect(&mut self, class: &str, x: f64, y: f64, w: f64, h: f64) {
        let _ = writeln!(
            self.out,
            "<rect class=\"{class}\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\"/>",
            fmt6(x),
            fmt6(y),
            fmt6(w.max(0.0)),
            fmt6(h.max(0.0))
        );
    }

    fn circle(&mut self, class: &str, x: f64, y: f64, r: f64) {
        let _ = writeln!(
            self.out,
            "<circle class=\"{class}\" cx=\"{}\" cy=\"{}\" r=\"{}\"/>",
            fmt6(x),
            fmt6(y),
            fmt6(r)
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.out,
            "<text class=\"label\" x=\"{}\" y=\"{}\" text-anchor=\"{anchor}\">{}</text>",
            fmt6(x),
            fmt6(y),
            esc(s)
        );
    }

    fn rotated_text(&mut self, x: f64, y: f64, angle: i32, anchor: &str, s: &str) {
        let (xs, ys) = (fmt6(x), fmt6(y));
        let _ = writeln!(
            self.out,
            "<text class=\"label\" x=\"{xs}\" y=\"{ys}\" text-anchor=\"{anchor}\" transform=\"rotate({angle} {xs} {ys})\">{}</text>",
            esc(s)
        );
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

/// Linear map from data range onto a pixel range.
#[derive(Clone, Copy)]
struct Scale {
    d0: f64,
    d1: f64,
    p0: f64,
    p1: f64,
}

impl Scale {
    fn new(lo: f64, hi: f64, p0: f64, p1: f64) -> Self {
        let (mut lo, mut hi) = if lo.is_finite() && hi.is_finite() { (lo, hi) } else { (-1.0, 1.0) };
        if hi - lo <= 0.0 {
            lo -= 1.0;
            hi += 1.0;
        }
        let pad = 0.05 * (hi - lo);
        Scale {
            d0: lo - pad,
            d1: hi + pad,
            p0,
            p1,
        }
    }

    fn exact(lo: f64, hi: f64, p0: f64, p1: f64) -> Self {
        Scale { d0: lo, d1: hi, p0, p1 }
    }

    fn at(&self, v: f64) -> f64 {
        self.p0 + (v - self.d0) / (self.d1 - self.d0) * (self.p1 - self.p0)
    }

    /// Up to about six round tick values inside the domain.
    fn ticks(&self) -> Vec<f64> {
        let span = self.d1 - self.d0;
        let raw = span / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0]
            .iter()
            .map(|m| m * mag)
            .find(|s| *s >= raw)
            .unwrap_or(10.0 * mag);
        let first = (self.d0 / step).ceil() as i64;
        let last = (self.d1 / step).floor() as i64;
        (first..=last).map(|k| k as f64 * step).collect()
    }
}

fn min_max<I: IntoIterator<Item = f64>>(vals: I) -> (f64, f64) {
    vals.into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

fn y_axis(doc: &mut Doc, sy: &Scale, x: f64, x_end: f64) {
    for t in sy.ticks() {
        let y = sy.at(t);
        doc.line("grid", x, y, x_end, y);
        doc.text(x - 4.0, y + 4.0, "end", &fmt6(t));
    }
    doc.line("axis", x, sy.p0, x, sy.p1);
}

fn x_axis(doc: &mut Doc, sx: &Scale, y: f64, y_top: f64) {
    for t in sx.ticks() {
        let x = sx.at(t);
        doc.line("grid", x, y_top, x, y);
        doc.text(x, y + 14.0, "middle", &fmt6(t));
    }
    doc.line("axis", sx.p0, y, sx.p1, y);
}

fn cv_votes(v: &VoteDistribution) -> String {
    let k = v.counts.len();
    let (left, top, plot_h) = (50.0, 30.0, 220.0);
    let bar_w = 36.0;
    let width = left + 20.0 + bar_w * k.max(1) as f64;
    let mut doc = Doc::new(width, top + plot_h + 50.0, "Selected number of components");
    let sy = Scale::exact(0.0, 1.0, top + plot_h, top);
    y_axis(&mut doc, &sy, left, width - 10.0);
    for (h, &f) in v.freqs.iter().enumerate() {
        let x = left + 4.0 + bar_w * h as f64;
        let y = sy.at(f.clamp(0.0, 1.0));
        doc.rect("bar", x, y, bar_w - 8.0, sy.p0 - y);
        doc.text(x + (bar_w - 8.0) / 2.0, sy.p0 + 14.0, "middle", &h.to_string());
    }
    doc.line("axis", left, sy.p0, width - 10.0, sy.p0);
    doc.text(left + (width - left) / 2.0, sy.p0 + 32.0, "middle", "components");
    doc.finish()
}

fn boxplots(b: &BoxplotPayload) -> String {
    let p = b.col_names.len();
    let (left, top, plot_h) = (60.0, 30.0, 260.0);
    let slot = 26.0;
    let width = left + 20.0 + slot * p.max(1) as f64;
    let mut doc = Doc::new(width, top + plot_h + 90.0, "Bootstrap distributions of coefficients");
    let (lo, hi) = min_max(b.beta_star.iter().copied().chain([0.0]));
    let sy = Scale::new(lo, hi, top + plot_h, top);
    y_axis(&mut doc, &sy, left, width - 10.0);
    doc.line("zero", left, sy.at(0.0), width - 10.0, sy.at(0.0));
    for j in 0..p {
        let cx = left + slot * (j as f64 + 0.5);
        let mut col: Vec<f64> = b.beta_star.column(j).iter().copied().filter(|v| v.is_finite()).collect();
        if !col.is_empty() {
            col.sort_by(|a, c| a.total_cmp(c));
            let q1 = quantile_sorted(&col, 0.25);
            let med = quantile_sorted(&col, 0.5);
            let q3 = quantile_sorted(&col, 0.75);
            let iqr = q3 - q1;
            let (fence_lo, fence_hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
            let wlo = col.iter().copied().find(|&v| v >= fence_lo).unwrap_or(q1);
            let whi = col.iter().rev().copied().find(|&v| v <= fence_hi).unwrap_or(q3);
            let half = slot * 0.3;
            doc.line("whisker", cx, sy.at(wlo), cx, sy.at(q1));
            doc.line("whisker", cx, sy.at(q3), cx, sy.at(whi));
            doc.rect("box", cx - half, sy.at(q3), 2.0 * half, sy.at(q1) - sy.at(q3));
            doc.line("whisker", cx - half, sy.at(med), cx + half, sy.at(med));
            for &v in col.iter().filter(|&&v| v < wlo || v > whi) {
                doc.circle("outlier", cx, sy.at(v), 1.6);
            }
        }
        doc.rotated_text(cx, sy.p0 + 12.0, -60, "end", &b.col_names[j]);
    }
    doc.line("axis", left, sy.p0, width - 10.0, sy.p0);
    doc.finish()
}

fn ci_forest(f: &ForestPayload) -> String {
    let p = f.col_names.len();
    let (left, top, row_h, plot_w) = (110.0, 30.0, 18.0, 360.0);
    let plot_h = row_h * p as f64;
    let width = left + plot_w + 20.0;
    let title = f
        .intervals
        .first()
        .map_or("Bootstrap confidence intervals".to_string(), |i| {
            format!("Bootstrap confidence intervals ({})", i.kind.name())
        });
    let mut doc = Doc::new(width, top + plot_h + 40.0, &title);
    let iv = f.intervals.first();
    let (lo, hi) = min_max(
        iv.map_or_else(Vec::new, |i| i.bounds.iter().copied().collect::<Vec<_>>())
            .into_iter()
            .chain(f.beta_hat.iter().copied())
            .chain([0.0]),
    );
    let sx = Scale::new(lo, hi, left, left + plot_w);
    let bottom = top + plot_h + 6.0;
    x_axis(&mut doc, &sx, bottom, top);
    doc.line("zero", sx.at(0.0), top, sx.at(0.0), bottom);
    if let Some(iv) = iv {
        for j in 0..p {
            let y = top + row_h * (j as f64 + 0.5);
            let class = if iv.significant[j] { "sig" } else { "nonsig" };
            doc.text(left - 6.0, y + 4.0, "end", &f.col_names[j]);
            doc.line(class, sx.at(iv.bounds[[j, 0]]), y, sx.at(iv.bounds[[j, 1]]), y);
            doc.circle(class, sx.at(f.beta_hat[j]), y, 2.5);
        }
    }
    doc.finish()
}

fn sig_grid(t: &StabilityTable) -> String {
    let p = t.col_names.len();
    let hmax = t.significant.len();
    let (left, top, cell) = (110.0, 46.0, 18.0);
    let pi_w = 70.0;
    let width = left + cell * hmax as f64 + pi_w + 20.0;
    let mut doc = Doc::new(width, top + cell * p as f64 + 20.0, "Significant predictors by number of components");
    for h in 0..hmax {
        doc.text(left + cell * (h as f64 + 0.5), top - 6.0, "middle", &(h + 1).to_string());
    }
    let pi_x = left + cell * hmax as f64 + 8.0;
    doc.text(pi_x + pi_w / 2.0, top - 6.0, "middle", "\u{3c0}e");
    for j in 0..p {
        let y = top + cell * j as f64;
        doc.text(left - 6.0, y + cell * 0.7, "end", &t.col_names[j]);
        for (h, row) in t.significant.iter().enumerate() {
            let class = match row {
                Some(r) if r[j] => "sig",
                Some(_) => "nonsig",
                None => "na",
            };
            doc.rect(class, left + cell * h as f64 + 1.0, y + 1.0, cell - 2.0, cell - 2.0);
        }
        let pi = t.pi_e[j].clamp(0.0, 1.0);
        doc.rect("bar", pi_x, y + 3.0, (pi_w - 30.0) * pi, cell - 6.0);
        doc.text(pi_x + pi_w, y + cell * 0.7, "end", &fmt6(pi));
    }
    doc.finish()
}

fn biplot(b: &BiplotData) -> String {
    let (left, top, size) = (50.0, 30.0, 420.0);
    let mut doc = Doc::new(left + size + 30.0, top + size + 40.0, "Individuals and variables on the first two components");
    let (slo, shi) = min_max(b.scores.iter().copied().chain([0.0]));
    let lmax = b.loadings.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let smax = slo.abs().max(shi.abs());
    // loadings are stretched onto the score range
    let stretch = if lmax > 0.0 && smax > 0.0 { 0.9 * smax / lmax } else { 1.0 };
    let sx = Scale::new(-smax, smax, left, left + size);
    let sy = Scale::new(-smax, smax, top + size, top);
    x_axis(&mut doc, &sx, top + size, top);
    y_axis(&mut doc, &sy, left, left + size);
    doc.line("zero", sx.at(0.0), top, sx.at(0.0), top + size);
    doc.line("zero", left, sy.at(0.0), left + size, sy.at(0.0));
    for (i, id) in b.row_ids.iter().enumerate() {
        let (x, y) = (sx.at(b.scores[[i, 0]]), sy.at(b.scores[[i, 1]]));
        let _ = writeln!(
            doc.out,
            "<circle class=\"point\" cx=\"{}\" cy=\"{}\" r=\"2.5\"><title>{}</title></circle>",
            fmt6(x),
            fmt6(y),
            esc(id)
        );
    }
    for (j, name) in b.col_names.iter().enumerate() {
        let (x, y) = (sx.at(stretch * b.loadings[[j, 0]]), sy.at(stretch * b.loadings[[j, 1]]));
        doc.line("arrow", sx.at(0.0), sy.at(0.0), x, y);
        doc.text(x, y - 3.0, "middle", name);
    }
    doc.text(left + size / 2.0, top + size + 32.0, "middle", "t1");
    doc.rotated_text(left - 34.0, top + size / 2.0, -90, "middle", "t2");
    doc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boot::{CiType, Scheme};
    use ndarray::array;

    fn forest(bounds: Array2<f64>, est: Array1<f64>, sig: Vec<bool>) -> Value {
        let p = est.len();
        serde_json::json!({
            "col_names": (0..p).map(|j| format!("x{j}")).collect::<Vec<_>>(),
            "beta_hat": est,
            "intervals": [Interval {
                kind: CiType::Percentile,
                bounds,
                significant: sig,
                degenerate: vec![false; p],
                z0_clamped: vec![false; p],
            }],
        })
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt6(0.0), "0");
        assert_eq!(fmt6(123.456789), "123.457");
        assert_eq!(fmt6(-0.000123456789), "-0.000123457");
        assert_eq!(fmt6(1.0), "1");
        assert_eq!(fmt6(1234567.0), "1234567");
        assert_eq!(fmt6(-1e-20), "0");
    }

    #[test]
    fn empty_forest_has_axes_only() {
        let v = forest(Array2::zeros((0, 2)), Array1::zeros(0), vec![]);
        let svg = emit_svg(FigureKind::CiForest, &v).unwrap();
        assert!(svg.starts_with("<?xml"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("class=\"axis\""));
        assert!(!svg.contains("class=\"sig\"") && !svg.contains("class=\"nonsig\""));
    }

    #[test]
    fn interval_straddling_zero_is_not_significant() {
        let v = forest(array![[-1.0, 2.0]], array![0.5], vec![false]);
        let svg = emit_svg(FigureKind::CiForest, &v).unwrap();
        assert!(svg.contains("<line class=\"nonsig\""));
        assert!(!svg.contains("<line class=\"sig\""));
        let v = forest(array![[0.5, 2.0]], array![1.0], vec![true]);
        assert!(emit_svg(FigureKind::CiForest, &v).unwrap().contains("<line class=\"sig\""));
    }

    #[test]
    fn same_payload_same_bytes() {
        let v = forest(array![[-1.0, 2.0], [0.1, 0.3]], array![0.5, 0.2], vec![false, true]);
        assert_eq!(
            emit_svg(FigureKind::CiForest, &v).unwrap(),
            emit_svg(FigureKind::CiForest, &v).unwrap()
        );
    }

    #[test]
    fn schema_mismatch_is_reported() {
        let err = emit_svg(FigureKind::Biplot, &serde_json::json!({"counts": [1]})).unwrap_err();
        assert!(matches!(err, PlsError::SchemaMismatch { .. }));
        let bad = forest(array![[-1.0, 2.0]], array![0.5, 1.0], vec![false]);
        assert!(emit_svg(FigureKind::CiForest, &bad).is_err());
    }

    #[test]
    fn votes_and_grid_render() {
        let votes = VoteDistribution::from_counts(vec![0, 2, 5, 3]).unwrap();
        let svg = emit_svg(FigureKind::CvVotes, &serde_json::to_value(&votes).unwrap()).unwrap();
        assert_eq!(svg.matches("class=\"bar\"").count(), 4);
        let table = StabilityTable {
            col_names: vec!["a".into(), "b<c".into()],
            hmax: 2,
            ci_type: CiType::Bca,
            scheme: Scheme::YT,
            significant: vec![Some(vec![true, false]), None],
            q: vec![0.0, 1.0, 0.0],
            pi_e: vec![1.0, 0.0],
        };
        let svg = emit_svg(FigureKind::SigGrid, &serde_json::to_value(&table).unwrap()).unwrap();
        assert!(svg.contains("b&lt;c"));
        assert_eq!(svg.matches("class=\"na\"").count(), 2);
    }

    #[test]
    fn boxplot_renders_one_box_per_predictor() {
        let draws = Array2::from_shape_fn((50, 3), |(i, j)| (i as f64 - 25.0) / 10.0 + j as f64);
        let v = serde_json::json!({"col_names": ["a", "b", "c"], "beta_star": draws});
        let svg = emit_svg(FigureKind::Boxplots, &v).unwrap();
        assert_eq!(svg.matches("class=\"box\"").count(), 3);
    }
}
