//! PLS generalized linear regression.
//!
//! Component `h` is built from the coefficients of `y` regressed, one
//! predictor at a time, on the earlier components plus that predictor's
//! current residual column. Each residual column is divided by its mean
//! square before the fit; the Wald statistic is unchanged by this, and for
//! a gaussian response on complete data the resulting direction matches the
//! NIPALS weight exactly. After extraction the response is regressed on the
//! components and the component coefficients are mapped back to the
//! predictors through W*.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{apply_scaling, standardize_weighted, MaskedMatrix, Response, ScalingRecord};
use crate::error::{PlsError, Result};
use crate::family::Family;
use crate::glm::{fit_glm_raw, wald_test, GlmFit};
use crate::par;
use crate::pls::{
    check_ncomp, compute_scores, loadings, modified_weights, normalize, orient, project_scores,
    raw_coefficients, subtract_rank_one, weighted_mean_sd, PlsFit, DEGENERACY_TOL,
};

/// Significance level for counting significant predictors in a step.
pub const STEP_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlsGlrFit {
    /// Weights, loadings, scores and coefficients. `pls.intercept` and
    /// `pls.coefs` are copied from `final_glm.coef`.
    pub pls: PlsFit,
    /// Regression of the response on the components.
    pub final_glm: GlmFit,
    /// Significant predictor coefficients found at each extraction step.
    pub sig_pred_count: Vec<usize>,
    /// Per-predictor step fits that failed and contributed a zero weight.
    pub failed_step_fits: usize,
}

impl PlsGlrFit {
    pub fn family(&self) -> Family {
        self.pls.family
    }

    pub fn ncomp(&self) -> usize {
        self.pls.ncomp
    }

    pub fn converged(&self) -> bool {
        self.final_glm.converged
    }
}

#[derive(Debug, Clone)]
pub struct ComponentStep {
    pub weights: Array1<f64>,
    pub scores: Array1<f64>,
    pub sig_count: usize,
    pub failed_fits: usize,
}

/// One PLSGLR extraction step on the residual matrix `xres`, given the
/// complete scores `t_prev` of the components already extracted.
pub fn plsglr_component_step(
    xres: &MaskedMatrix,
    t_prev: ArrayView2<f64>,
    y: &Response,
) -> Result<ComponentStep> {
    let (n, p) = (xres.nrows(), xres.ncols());
    if t_prev.nrows() != n || y.len() != n {
        return Err(PlsError::InvalidArgument("row counts differ".into()));
    }
    let prev = t_prev.ncols();
    let yv = y.y();
    let wo = y.weights();
    let family = y.family();

    let per_column = par::map_indexed(p, |j| {
        let rows: Vec<usize> = (0..n).filter(|&i| xres.is_present(i, j)).collect();
        let (mut sw, mut swx2) = (0.0, 0.0);
        for &i in &rows {
            let v = xres.values()[[i, j]];
            sw += wo[i];
            swx2 += wo[i] * v * v;
        }
        let ms = if sw > 0.0 { swx2 / sw } else { 0.0 };
        if !(ms > DEGENERACY_TOL * DEGENERACY_TOL) {
            // residual column has vanished
            return (0.0, false, false);
        }
        let mut z = Array2::<f64>::zeros((rows.len(), prev + 1));
        for (r, &i) in rows.iter().enumerate() {
            for k in 0..prev {
                z[[r, k]] = t_prev[[i, k]];
            }
            z[[r, prev]] = xres.values()[[i, j]] / ms;
        }
        let ys: Array1<f64> = rows.iter().map(|&i| yv[i]).collect();
        let ws: Array1<f64> = rows.iter().map(|&i| wo[i]).collect();
        match fit_glm_raw(z.view(), ys.view(), ws.view(), family) {
            Ok(fit) if fit.converged => {
                let a = fit.coef[prev + 1];
                let sig = wald_test(&fit, prev + 1)
                    .map(|t| !t.degenerate && t.p_value < STEP_ALPHA)
                    .unwrap_or(false);
                (a, sig, false)
            }
            _ => (0.0, false, true),
        }
    });

    let a: Array1<f64> = per_column.iter().map(|c| c.0).collect();
    let sig_count = per_column.iter().filter(|c| c.1).count();
    let failed_fits = per_column.iter().filter(|c| c.2).count();
    // Most step fits failing means the earlier scores already separate the
    // response; whatever survives is not a usable direction.
    if 2 * failed_fits > p {
        return Err(PlsError::DegenerateGlrComponent { achieved: prev });
    }
    let mut w = normalize(a).ok_or(PlsError::DegenerateGlrComponent { achieved: prev })?;
    orient(&mut w);
    let t = compute_scores(xres, w.view()).map_err(|e| match e {
        // sparse weights may miss every present cell of some row
        PlsError::EmptyRow { .. } => PlsError::DegenerateGlrComponent { achieved: prev },
        other => other,
    })?;
    Ok(ComponentStep {
        weights: w,
        scores: t,
        sig_count,
        failed_fits,
    })
}

/// Components extracted up to some maximum count. Fits for any smaller
/// count share the leading columns, since extraction is sequential.
#[derive(Debug, Clone)]
pub struct ComponentPath {
    pub weights: Array2<f64>,
    pub loadings: Array2<f64>,
    pub scores: Array2<f64>,
    pub sig_counts: Vec<usize>,
    pub failed_fits: usize,
    pub scaling: ScalingRecord,
}

impl ComponentPath {
    pub fn ncomp(&self) -> usize {
        self.weights.ncols()
    }

    /// Regress the response on the first `h` components and back-transform.
    pub fn finalize(&self, y: &Response, h: usize) -> Result<PlsGlrFit> {
        if h == 0 || h > self.ncomp() {
            return Err(PlsError::InvalidArgument(format!(
                "cannot finalize {h} of {} components",
                self.ncomp()
            )));
        }
        let weights = self.weights.slice(s![.., ..h]).to_owned();
        let loads = self.loadings.slice(s![.., ..h]).to_owned();
        let scores = self.scores.slice(s![.., ..h]).to_owned();
        let final_glm = fit_glm_raw(scores.view(), y.y().view(), y.weights().view(), y.family())?;
        let weights_star = modified_weights(weights.view(), loads.view())?;
        let coefs = final_glm.coef.slice(s![1..]).to_owned();
        let intercept = final_glm.coef[0];
        let beta_std = weights_star.dot(&coefs);
        let mut scaling = self.scaling.clone();
        if y.family() == Family::Gaussian {
            let (m, sd) = weighted_mean_sd(y.y().view(), y.weights().view());
            scaling.y_mean = Some(m);
            scaling.y_sd = Some(sd);
        }
        let beta_raw = raw_coefficients(beta_std.view(), intercept, &scaling);
        Ok(PlsGlrFit {
            pls: PlsFit {
                family: y.family(),
                ncomp: h,
                weights,
                loadings: loads,
                scores,
                coefs,
                intercept,
                weights_star,
                beta_std,
                beta_raw,
                scaling,
            },
            final_glm,
            sig_pred_count: self.sig_counts[..h].to_vec(),
            failed_step_fits: self.failed_fits,
        })
    }
}

/// Standardize `x` and extract `hmax` PLSGLR components.
pub fn extract_components(x: &MaskedMatrix, y: &Response, hmax: usize) -> Result<ComponentPath> {
    let (n, p) = (x.nrows(), x.ncols());
    if y.len() != n {
        return Err(PlsError::InvalidArgument("X and y row counts differ".into()));
    }
    check_ncomp(hmax, n, p)?;
    let wo = y.weights().view();
    let (mut xres, scaling) = standardize_weighted(x, wo)?;
    let mut weights = Array2::<f64>::zeros((p, hmax));
    let mut loads = Array2::<f64>::zeros((p, hmax));
    let mut scores = Array2::<f64>::zeros((n, hmax));
    let mut sig_counts = Vec::with_capacity(hmax);
    let mut failed = 0;
    for h in 0..hmax {
        let step = plsglr_component_step(&xres, scores.slice(s![.., ..h]), y).map_err(|e| match e {
            PlsError::DegenerateGlrComponent { .. } => PlsError::DegenerateGlrComponent { achieved: h },
            other => other,
        })?;
        let tt: f64 = step.scores.iter().zip(wo.iter()).map(|(t, w)| w * t * t).sum();
        if tt < DEGENERACY_TOL {
            return Err(PlsError::DegenerateGlrComponent { achieved: h });
        }
        let pl = loadings(&xres, step.scores.view(), wo)?;
        subtract_rank_one(&mut xres, step.scores.view(), pl.view());
        weights.column_mut(h).assign(&step.weights);
        loads.column_mut(h).assign(&pl);
        scores.column_mut(h).assign(&step.scores);
        sig_counts.push(step.sig_count);
        failed += step.failed_fits;
    }
    Ok(ComponentPath {
        weights,
        loadings: loads,
        scores,
        sig_counts,
        failed_fits: failed,
        scaling,
    })
}

/// Fit a PLSGLR model with `ncomp` components.
pub fn fit_plsglr(x: &MaskedMatrix, y: &Response, ncomp: usize) -> Result<PlsGlrFit> {
    extract_components(x, y, ncomp)?.finalize(y, ncomp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionType {
    Link,
    Response,
    Class,
}

/// Out-of-sample predictions on the link, response or class scale.
pub fn predict_response(fit: &PlsGlrFit, xnew: &MaskedMatrix, kind: PredictionType) -> Result<Array1<f64>> {
    if kind == PredictionType::Class && fit.family() != Family::Binomial {
        return Err(PlsError::InvalidArgument(
            "class predictions require a binomial model".into(),
        ));
    }
    let xs = apply_scaling(xnew, &fit.pls.scaling)?;
    let t = project_scores(&xs, fit.pls.weights.view(), fit.pls.loadings.view())?;
    let eta = t.dot(&fit.pls.coefs) + fit.pls.intercept;
    Ok(link_to(fit.family(), eta, kind))
}

pub(crate) fn link_to(family: Family, eta: Array1<f64>, kind: PredictionType) -> Array1<f64> {
    match kind {
        PredictionType::Link => eta,
        PredictionType::Response => eta.mapv(|e| family.inv_link(e)),
        PredictionType::Class => eta.mapv(|e| if family.inv_link(e) >= 0.5 { 1.0 } else { 0.0 }),
    }
}

/// First two components of individuals and variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiplotData {
    pub row_ids: Vec<String>,
    pub col_names: Vec<String>,
    /// n x 2.
    pub scores: Array2<f64>,
    /// p x 2.
    pub loadings: Array2<f64>,
}

pub fn biplot_data(fit: &PlsGlrFit, row_ids: &[String]) -> Result<BiplotData> {
    if fit.ncomp() < 2 {
        return Err(PlsError::InvalidArgument("biplot needs at least two components".into()));
    }
    if row_ids.len() != fit.pls.scores.nrows() {
        return Err(PlsError::InvalidArgument("row id count mismatch".into()));
    }
    Ok(BiplotData {
        row_ids: row_ids.to_vec(),
        col_names: fit.pls.scaling.col_names.clone(),
        scores: fit.pls.scores.slice(s![.., ..2]).to_owned(),
        loadings: fit.pls.loadings.slice(s![.., ..2]).to_owned(),
    })
}

/// Fitted values on the response scale for the training rows.
pub fn fitted_response(fit: &PlsGlrFit) -> Array1<f64> {
    fit.final_glm.fitted_means.clone()
}

/// Sum of squared weights per row, handy for diagnostics of masked rows.
pub fn row_weight_coverage(x: &MaskedMatrix, w: &Array1<f64>) -> Array1<f64> {
    x.mask()
        .map_axis(Axis(1), |row| row.iter().zip(w.iter()).filter(|(m, _)| **m).map(|(_, v)| v * v).sum())
}
