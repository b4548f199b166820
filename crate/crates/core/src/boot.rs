//! Bootstrap inference on the raw-scale predictor coefficients.
//!
//! Two schemes are available. `(Y,T)` keeps the components and their
//! weights fixed and resamples rows of `(y, T)`, refitting only the final
//! GLM. `(Y,X)` resamples rows of `(y, X)` and reruns the whole pipeline.
//! Failed resamples (non-convergence, separation, invalid columns) are
//! redrawn from the same stream under a global budget of `10 B` draws.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{MaskedMatrix, Response};
use crate::error::{PlsError, Result};
use crate::glm::fit_glm_raw;
use crate::par;
use crate::pls::raw_coefficients;
use crate::plsglr::{fit_plsglr, PlsGlrFit};
use crate::rng;
use crate::selection::VoteDistribution;

pub const DEFAULT_RESAMPLES: usize = 1000;
pub const DEFAULT_ALPHA: f64 = 0.05;
/// Total draws allowed per requested resample.
pub const REDRAW_FACTOR: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "YT")]
    YT,
    #[serde(rename = "YX")]
    YX,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::YT => "YT",
            Scheme::YX => "YX",
        })
    }
}

impl FromStr for Scheme {
    type Err = PlsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().replace(['(', ')', ','], "").as_str() {
            "YT" => Ok(Scheme::YT),
            "YX" => Ok(Scheme::YX),
            _ => Err(PlsError::InvalidArgument(format!("unknown bootstrap scheme '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CiType {
    Percentile,
    Basic,
    Normal,
    Bca,
}

impl CiType {
    pub const ALL: [CiType; 4] = [CiType::Percentile, CiType::Basic, CiType::Normal, CiType::Bca];

    pub fn name(self) -> &'static str {
        match self {
            CiType::Percentile => "percentile",
            CiType::Basic => "basic",
            CiType::Normal => "normal",
            CiType::Bca => "bca",
        }
    }
}

impl fmt::Display for CiType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CiType {
    type Err = PlsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "percentile" | "perc" => Ok(CiType::Percentile),
            "basic" => Ok(CiType::Basic),
            "normal" | "norm" => Ok(CiType::Normal),
            "bca" => Ok(CiType::Bca),
            _ => Err(PlsError::InvalidArgument(format!("unknown interval type '{s}'"))),
        }
    }
}

/// Resampled coefficients and how many draws it took.
#[derive(Debug, Clone, PartialEq)]
pub struct BootDraws {
    /// B x p, raw predictor scale.
    pub beta_star: Array2<f64>,
    pub skipped: usize,
    pub attempts: usize,
}

fn draw_indices<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Run `b` resamples, each redrawing from its own stream until `refit`
/// succeeds or the shared budget is exhausted.
fn resample<F>(n: usize, b: usize, seed: u64, refit: F) -> Result<BootDraws>
where
    F: Fn(&[usize]) -> Option<Array1<f64>> + Sync + Send,
{
    if b == 0 {
        return Err(PlsError::InvalidArgument("bootstrap needs at least one resample".into()));
    }
    let budget = REDRAW_FACTOR * b;
    let results = par::map_indexed(b, |k| {
        let mut rng = rng::stream(seed, k as u64);
        let mut tries = 0;
        while tries < budget {
            tries += 1;
            let idx = draw_indices(&mut rng, n);
            if let Some(beta) = refit(&idx) {
                return (Some(beta), tries);
            }
        }
        (None, tries)
    });
    let attempts: usize = results.iter().map(|r| r.1).sum();
    if attempts > budget || results.iter().any(|r| r.0.is_none()) {
        return Err(PlsError::BootstrapInstability {
            attempts,
            requested: b,
        });
    }
    let p = results[0].0.as_ref().map_or(0, |v| v.len());
    let mut beta_star = Array2::<f64>::zeros((b, p));
    for (k, r) in results.into_iter().enumerate() {
        beta_star.row_mut(k).assign(r.0.as_ref().expect("checked above"));
    }
    Ok(BootDraws {
        beta_star,
        skipped: attempts - b,
        attempts,
    })
}

/// Refit the final GLM of a fitted model on rows `idx` of `(y, T)`. `None`
/// when that fit fails, does not converge or separates.
pub fn refit_yt(fit: &PlsGlrFit, y: &Response, idx: &[usize]) -> Option<Array1<f64>> {
    let t = fit.pls.scores.select(Axis(0), idx);
    let yy = y.y().select(Axis(0), idx);
    let ww = y.weights().select(Axis(0), idx);
    let g = fit_glm_raw(t.view(), yy.view(), ww.view(), y.family()).ok()?;
    if !g.converged || g.separated {
        return None;
    }
    let c = g.coef.slice(s![1..]);
    let beta_std = fit.pls.weights_star.dot(&c);
    let raw = raw_coefficients(beta_std.view(), g.coef[0], &fit.pls.scaling);
    Some(raw.slice(s![1..]).to_owned())
}

/// Rerun the full pipeline on rows `idx` of `(y, X)`.
pub fn refit_yx(x: &MaskedMatrix, y: &Response, ncomp: usize, idx: &[usize]) -> Option<Array1<f64>> {
    let xb = x.select_rows(idx);
    xb.validate().ok()?;
    let yb = y.select_rows(idx);
    let fit = fit_plsglr(&xb, &yb, ncomp).ok()?;
    if !fit.converged() {
        return None;
    }
    Some(fit.pls.slopes_raw().to_owned())
}

fn check_fit(fit: &PlsGlrFit, y: &Response) -> Result<()> {
    if !fit.converged() {
        return Err(PlsError::NotConverged("bootstrap needs a converged fit".into()));
    }
    if fit.pls.scores.nrows() != y.len() {
        return Err(PlsError::InvalidArgument("fit and response sizes differ".into()));
    }
    Ok(())
}

/// `(Y,T)` bootstrap of a fitted model.
pub fn boot_yt(fit: &PlsGlrFit, y: &Response, b: usize, seed: u64) -> Result<BootDraws> {
    check_fit(fit, y)?;
    resample(y.len(), b, seed, |idx| refit_yt(fit, y, idx))
}

/// `(Y,X)` bootstrap: the full pipeline with `ncomp` components per resample.
pub fn boot_yx(x: &MaskedMatrix, y: &Response, ncomp: usize, b: usize, seed: u64) -> Result<BootDraws> {
    if x.nrows() != y.len() {
        return Err(PlsError::InvalidArgument("X and y row counts differ".into()));
    }
    resample(y.len(), b, seed, |idx| refit_yx(x, y, ncomp, idx))
}

fn jackknife<F>(n: usize, refit: F) -> Result<Array2<f64>>
where
    F: Fn(&[usize]) -> Option<Array1<f64>> + Sync + Send,
{
    let rows = par::map_indexed(n, |i| {
        let idx: Vec<usize> = (0..n).filter(|&r| r != i).collect();
        refit(&idx)
    });
    let p = rows.iter().flatten().next().map(|r| r.len()).ok_or_else(|| {
        PlsError::InvalidArgument("every leave-one-out refit failed".into())
    })?;
    let mut out = Array2::<f64>::from_elem((n, p), f64::NAN);
    for (i, r) in rows.into_iter().enumerate() {
        if let Some(r) = r {
            out.row_mut(i).assign(&r);
        }
    }
    Ok(out)
}

/// Leave-one-out coefficients with the components held fixed. Failed refits
/// leave a row of NaNs, which the acceleration estimate ignores.
pub fn jackknife_yt(fit: &PlsGlrFit, y: &Response) -> Result<Array2<f64>> {
    check_fit(fit, y)?;
    jackknife(y.len(), |idx| refit_yt(fit, y, idx))
}

/// Leave-one-out coefficients over the full pipeline. Costs `n` fits.
pub fn jackknife_yx(x: &MaskedMatrix, y: &Response, ncomp: usize) -> Result<Array2<f64>> {
    jackknife(y.len(), |idx| refit_yx(x, y, ncomp, idx))
}

/// Type-7 sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// Jackknife acceleration `a` from leave-one-out values (NaNs dropped).
pub fn acceleration(theta: ArrayView1<f64>) -> f64 {
    let vals: Vec<f64> = theta.iter().copied().filter(|v| v.is_finite()).collect();
    if vals.len() < 2 {
        return 0.0;
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let (mut s2, mut s3) = (0.0, 0.0);
    for v in &vals {
        let d = mean - v;
        s2 += d * d;
        s3 += d * d * d;
    }
    if s2 <= 0.0 {
        return 0.0;
    }
    s3 / (6.0 * s2.powf(1.5))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub kind: CiType,
    /// p x 2: lower, upper.
    pub bounds: Array2<f64>,
    pub significant: Vec<bool>,
    /// All draws equal, so the interval is a point.
    pub degenerate: Vec<bool>,
    /// BCa bias correction hit 0 or B draws below the estimate.
    pub z0_clamped: Vec<bool>,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("valid standard normal")
}

/// Confidence intervals at level `1 - alpha` for every coefficient.
/// `jack` holds leave-one-out coefficients (n x p) and is required for BCa.
pub fn ci(
    beta_star: ArrayView2<f64>,
    beta_hat: ArrayView1<f64>,
    alpha: f64,
    kind: CiType,
    jack: Option<ArrayView2<f64>>,
) -> Result<Interval> {
    let (b, p) = beta_star.dim();
    if b == 0 || beta_hat.len() != p {
        return Err(PlsError::InvalidArgument("bootstrap draws and estimate disagree".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(PlsError::InvalidArgument(format!("alpha {alpha} outside (0, 1)")));
    }
    if kind == CiType::Bca && jack.is_none_or(|j| j.ncols() != p) {
        return Err(PlsError::InvalidArgument("BCa intervals need jackknife values".into()));
    }
    let nd = std_normal();
    let z_lo = nd.inverse_cdf(alpha / 2.0);
    let z_hi = nd.inverse_cdf(1.0 - alpha / 2.0);

    let mut bounds = Array2::<f64>::zeros((p, 2));
    let mut degenerate = vec![false; p];
    let mut clamped = vec![false; p];
    for j in 0..p {
        let mut col: Vec<f64> = beta_star.column(j).to_vec();
        col.sort_by(|a, b| a.total_cmp(b));
        let bh = beta_hat[j];
        if col[0] == col[b - 1] {
            degenerate[j] = true;
            bounds[[j, 0]] = col[0];
            bounds[[j, 1]] = col[0];
            continue;
        }
        let (lo, hi) = match kind {
            CiType::Percentile => (
                quantile_sorted(&col, alpha / 2.0),
                quantile_sorted(&col, 1.0 - alpha / 2.0),
            ),
            CiType::Basic => (
                2.0 * bh - quantile_sorted(&col, 1.0 - alpha / 2.0),
                2.0 * bh - quantile_sorted(&col, alpha / 2.0),
            ),
            CiType::Normal => {
                let mean = col.iter().sum::<f64>() / b as f64;
                let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (b.max(2) - 1) as f64;
                let centre = bh - (mean - bh);
                let sd = var.sqrt();
                (centre + z_lo * sd, centre + z_hi * sd)
            }
            CiType::Bca => {
                let below = col.iter().filter(|&&v| v < bh).count();
                let frac = if below == 0 || below == b {
                    clamped[j] = true;
                    (below as f64 + 0.5) / (b as f64 + 1.0)
                } else {
                    below as f64 / b as f64
                };
                let z0 = nd.inverse_cdf(frac);
                let a = acceleration(jack.expect("checked above").column(j));
                let adjust = |z: f64, fallback: f64| {
                    let d = 1.0 - a * (z0 + z);
                    if d <= 0.0 {
                        fallback
                    } else {
                        nd.cdf(z0 + (z0 + z) / d)
                    }
                };
                (
                    quantile_sorted(&col, adjust(z_lo, 0.0)),
                    quantile_sorted(&col, adjust(z_hi, 1.0)),
                )
            }
        };
        bounds[[j, 0]] = lo.min(hi);
        bounds[[j, 1]] = lo.max(hi);
    }
    let significant = (0..p)
        .map(|j| bounds[[j, 0]] > 0.0 || bounds[[j, 1]] < 0.0)
        .collect();
    Ok(Interval {
        kind,
        bounds,
        significant,
        degenerate,
        z0_clamped: clamped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootReport {
    pub scheme: Scheme,
    pub ncomp: usize,
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
    pub alpha: f64,
    pub col_names: Vec<String>,
    pub beta_hat: Array1<f64>,
    pub beta_star: Array2<f64>,
    pub skipped: usize,
    pub intervals: Vec<Interval>,
    pub jackknife_accel: Option<Vec<f64>>,
}

impl BootReport {
    pub fn interval(&self, kind: CiType) -> Option<&Interval> {
        self.intervals.iter().find(|i| i.kind == kind)
    }

    /// Predictor names whose interval of the given type excludes zero.
    pub fn significant_names(&self, kind: CiType) -> Vec<String> {
        self.interval(kind).map_or_else(Vec::new, |iv| {
            self.col_names
                .iter()
                .zip(&iv.significant)
                .filter(|(_, &s)| s)
                .map(|(n, _)| n.clone())
                .collect()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootOptions {
    pub scheme: Scheme,
    pub resamples: usize,
    pub alpha: f64,
    pub kinds: Vec<CiType>,
    pub seed: u64,
}

impl BootOptions {
    pub fn new(scheme: Scheme, seed: u64) -> Self {
        BootOptions {
            scheme,
            resamples: DEFAULT_RESAMPLES,
            alpha: DEFAULT_ALPHA,
            kinds: CiType::ALL.to_vec(),
            seed,
        }
    }
}

/// Fit with `ncomp` components, bootstrap, and build every requested
/// interval type.
pub fn bootstrap(x: &MaskedMatrix, y: &Response, ncomp: usize, opts: &BootOptions) -> Result<BootReport> {
    let fit = fit_plsglr(x, y, ncomp)?;
    if !fit.converged() {
        return Err(PlsError::NotConverged(format!(
            "final GLM with {ncomp} components; bootstrap skipped"
        )));
    }
    let draws = match opts.scheme {
        Scheme::YT => boot_yt(&fit, y, opts.resamples, opts.seed)?,
        Scheme::YX => boot_yx(x, y, ncomp, opts.resamples, opts.seed)?,
    };
    let jack = if opts.kinds.contains(&CiType::Bca) {
        Some(match opts.scheme {
            Scheme::YT => jackknife_yt(&fit, y)?,
            Scheme::YX => jackknife_yx(x, y, ncomp)?,
        })
    } else {
        None
    };
    let beta_hat = fit.pls.slopes_raw().to_owned();
    let intervals = opts
        .kinds
        .iter()
        .map(|&k| ci(draws.beta_star.view(), beta_hat.view(), opts.alpha, k, jack.as_ref().map(|j| j.view())))
        .collect::<Result<Vec<_>>>()?;
    Ok(BootReport {
        scheme: opts.scheme,
        ncomp,
        b: opts.resamples,
        seed: opts.seed,
        alpha: opts.alpha,
        col_names: x.col_names().to_vec(),
        beta_hat,
        beta_star: draws.beta_star,
        skipped: draws.skipped,
        intervals,
        jackknife_accel: jack.map(|j| j.columns().into_iter().map(acceleration).collect()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityTable {
    pub col_names: Vec<String>,
    pub hmax: usize,
    pub ci_type: CiType,
    pub scheme: Scheme,
    /// `significant[h - 1]`, `None` when that count could not be bootstrapped
    /// and carries no vote weight.
    pub significant: Vec<Option<Vec<bool>>>,
    /// Vote share of each `H = 0..=hmax`.
    pub q: Vec<f64>,
    pub pi_e: Vec<f64>,
}

/// `pi_e_j = sum_H q(H) sig_j(H)`. Counts without a grid row must have zero
/// weight.
pub fn robust_index(significant: &[Option<Vec<bool>>], q: &[f64], p: usize) -> Result<Vec<f64>> {
    let mut pi = vec![0.0; p];
    for (h, row) in significant.iter().enumerate() {
        let w = q.get(h + 1).copied().unwrap_or(0.0);
        match row {
            Some(sig) => {
                for j in 0..p {
                    if sig[j] {
                        pi[j] += w;
                    }
                }
            }
            None if w > 0.0 => {
                return Err(PlsError::InvalidArgument(format!(
                    "no significance row for {} components despite weight {w}",
                    h + 1
                )))
            }
            None => {}
        }
    }
    Ok(pi.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

/// Bootstrap every `H = 1..=hmax`, flag predictors whose interval excludes
/// zero, and weight the flags by the selection votes.
pub fn stability_and_pie(
    x: &MaskedMatrix,
    y: &Response,
    hmax: usize,
    votes: &VoteDistribution,
    opts: &BootOptions,
    ci_type: CiType,
) -> Result<StabilityTable> {
    if votes.counts.len() > hmax + 1 && votes.counts[hmax + 1..].iter().any(|&c| c > 0) {
        return Err(PlsError::InvalidArgument(
            "votes reach beyond the bootstrapped range".into(),
        ));
    }
    let q: Vec<f64> = (0..=hmax).map(|h| votes.freq(h)).collect();
    let mut significant = Vec::with_capacity(hmax);
    for h in 1..=hmax {
        let run = BootOptions {
            kinds: vec![ci_type],
            seed: rng::child_seed(opts.seed, h as u64),
            ..opts.clone()
        };
        match bootstrap(x, y, h, &run) {
            Ok(rep) => significant.push(Some(rep.intervals[0].significant.clone())),
            Err(e) if q[h] > 0.0 => {
                return Err(PlsError::AtComponents {
                    ncomp: h,
                    source: Box::new(e),
                })
            }
            Err(_) => significant.push(None),
        }
    }
    let pi_e = robust_index(&significant, &q, x.ncols())?;
    Ok(StabilityTable {
        col_names: x.col_names().to_vec(),
        hmax,
        ci_type,
        scheme: opts.scheme,
        significant,
        q,
        pi_e,
    })
}

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "NA".into()
    }
}

/// Resampled coefficients, one row per draw.
pub fn write_beta_star_csv<W: Write>(w: W, report: &BootReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(&report.col_names)?;
    for row in report.beta_star.rows() {
        out.write_record(row.iter().map(|&v| fmt_num(v)))?;
    }
    out.flush()?;
    Ok(())
}

/// One line per predictor and interval type.
pub fn write_ci_csv<W: Write>(w: W, report: &BootReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["predictor", "type", "estimate", "lower", "upper", "significant"])?;
    for iv in &report.intervals {
        for (j, name) in report.col_names.iter().enumerate() {
            out.write_record([
                name.clone(),
                iv.kind.name().to_string(),
                fmt_num(report.beta_hat[j]),
                fmt_num(iv.bounds[[j, 0]]),
                fmt_num(iv.bounds[[j, 1]]),
                iv.significant[j].to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Predictors by component counts, then the robust index.
pub fn write_stability_csv<W: Write>(w: W, table: &StabilityTable) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["predictor".to_string()];
    header.extend((1..=table.hmax).map(|h| format!("H{h}")));
    header.push("pi_e".into());
    out.write_record(&header)?;
    for (j, name) in table.col_names.iter().enumerate() {
        let mut rec = vec![name.clone()];
        for row in &table.significant {
            rec.push(row.as_ref().map_or("NA".into(), |s| s[j].to_string()));
        }
        rec.push(fmt_num(table.pi_e[j]));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}
