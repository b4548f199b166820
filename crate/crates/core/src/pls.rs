//! Regular and observation-weighted PLS regression by NIPALS.
//!
//! All kernels work on pairwise-available entries: sums over a column skip
//! the rows where that column is masked, and a row's score is the slope of
//! its present entries regressed (without intercept) on the matching weight
//! entries. With a complete mask every kernel reduces to the dense formula.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::{apply_scaling, standardize_weighted, MaskedMatrix, Response, ScalingRecord};
use crate::error::{PlsError, Result};
use crate::family::Family;
use crate::linalg;

/// Norms and score energies below this are treated as zero.
pub const DEGENERACY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlsFit {
    pub family: Family,
    pub ncomp: usize,
    /// p x H, unit-norm columns.
    pub weights: Array2<f64>,
    /// p x H.
    pub loadings: Array2<f64>,
    /// n x H training scores.
    pub scores: Array2<f64>,
    /// Component coefficients c_1..c_H.
    pub coefs: Array1<f64>,
    pub intercept: f64,
    /// W (P'W)^-1, mapping standardized predictors to scores.
    pub weights_star: Array2<f64>,
    pub beta_std: Array1<f64>,
    /// Intercept followed by one slope per original predictor.
    pub beta_raw: Array1<f64>,
    pub scaling: ScalingRecord,
}

impl PlsFit {
    pub fn fitted_values(&self) -> Array1<f64> {
        self.scores.dot(&self.coefs) + self.intercept
    }

    pub fn slopes_raw(&self) -> ArrayView1<'_, f64> {
        self.beta_raw.slice(ndarray::s![1..])
    }
}

/// Weight vector for one component: the per-column slope of the present
/// entries of `xres` on `u`, normalized to unit length.
pub fn nipals_weights(
    xres: &MaskedMatrix,
    u: ArrayView1<f64>,
    w_obs: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    let (n, p) = (xres.nrows(), xres.ncols());
    check_len(u.len(), n, "u")?;
    check_len(w_obs.len(), n, "observation weights")?;
    let vals = xres.values();
    let mask = xres.mask();
    let mut w = Array1::<f64>::zeros(p);
    for j in 0..p {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            if mask[[i, j]] {
                num += w_obs[i] * vals[[i, j]] * u[i];
                den += w_obs[i] * u[i] * u[i];
            }
        }
        if den <= 0.0 {
            return Err(PlsError::DegenerateComponent { achieved: 0 });
        }
        w[j] = num / den;
    }
    normalize(w).ok_or(PlsError::DegenerateComponent { achieved: 0 })
}

pub(crate) fn normalize(w: Array1<f64>) -> Option<Array1<f64>> {
    let norm = w.dot(&w).sqrt();
    if !(norm >= DEGENERACY_TOL) || !norm.is_finite() {
        return None;
    }
    Some(w / norm)
}

/// Flip `w` so its largest-magnitude entry is positive (lowest index wins
/// ties). Returns the applied sign.
pub fn orient(w: &mut Array1<f64>) -> f64 {
    let mut best = 0;
    for j in 1..w.len() {
        if w[j].abs() > w[best].abs() {
            best = j;
        }
    }
    if !w.is_empty() && w[best] < 0.0 {
        w.mapv_inplace(|v| -v);
        -1.0
    } else {
        1.0
    }
}

/// Scores of every row on the direction `w`, using only present entries.
pub fn compute_scores(xres: &MaskedMatrix, w: ArrayView1<f64>) -> Result<Array1<f64>> {
    let (n, p) = (xres.nrows(), xres.ncols());
    check_len(w.len(), p, "weight vector")?;
    let vals = xres.values();
    let mask = xres.mask();
    let mut t = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..p {
            if mask[[i, j]] {
                num += w[j] * vals[[i, j]];
                den += w[j] * w[j];
            }
        }
        if den <= 0.0 {
            return Err(PlsError::EmptyRow {
                row: xres.row_ids()[i].clone(),
            });
        }
        t[i] = num / den;
    }
    Ok(t)
}

/// Loadings of each column on `t` (pairwise available).
pub fn loadings(xres: &MaskedMatrix, t: ArrayView1<f64>, w_obs: ArrayView1<f64>) -> Result<Array1<f64>> {
    let (n, p) = (xres.nrows(), xres.ncols());
    check_len(t.len(), n, "scores")?;
    check_len(w_obs.len(), n, "observation weights")?;
    let vals = xres.values();
    let mask = xres.mask();
    let mut out = Array1::<f64>::zeros(p);
    for j in 0..p {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            if mask[[i, j]] {
                num += w_obs[i] * vals[[i, j]] * t[i];
                den += w_obs[i] * t[i] * t[i];
            }
        }
        out[j] = if den > 0.0 { num / den } else { 0.0 };
    }
    Ok(out)
}

/// Remove the rank-one part `t p'` from the present entries of `xres`.
pub fn deflate(
    xres: &MaskedMatrix,
    t: ArrayView1<f64>,
    w_obs: ArrayView1<f64>,
) -> Result<(MaskedMatrix, Array1<f64>)> {
    let p = loadings(xres, t, w_obs)?;
    let mut next = xres.clone();
    subtract_rank_one(&mut next, t, p.view());
    Ok((next, p))
}

pub(crate) fn subtract_rank_one(x: &mut MaskedMatrix, t: ArrayView1<f64>, p: ArrayView1<f64>) {
    let mask = x.mask().clone();
    let vals = x.values_mut();
    for ((i, j), v) in vals.indexed_iter_mut() {
        if mask[[i, j]] {
            *v -= t[i] * p[j];
        }
    }
}

/// W (P'W)^-1.
pub fn modified_weights(weights: ArrayView2<f64>, loadings: ArrayView2<f64>) -> Result<Array2<f64>> {
    let ptw = loadings.t().dot(&weights);
    let inv = linalg::inverse(ptw.view(), 1e-12).ok_or(PlsError::DeflationCollapse)?;
    Ok(weights.dot(&inv))
}

/// Sequential scores of already standardized rows against a fitted set of
/// weights and loadings.
pub fn project_scores(
    xs: &MaskedMatrix,
    weights: ArrayView2<f64>,
    loadings: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    let h = weights.ncols();
    let mut xres = xs.clone();
    let mut t = Array2::<f64>::zeros((xs.nrows(), h));
    for k in 0..h {
        let tk = compute_scores(&xres, weights.column(k))?;
        if k + 1 < h {
            subtract_rank_one(&mut xres, tk.view(), loadings.column(k));
        }
        t.column_mut(k).assign(&tk);
    }
    Ok(t)
}

/// Largest admissible component count for an n x p problem.
pub fn max_components(n: usize, p: usize) -> usize {
    n.saturating_sub(1).min(p)
}

pub(crate) fn check_ncomp(ncomp: usize, n: usize, p: usize) -> Result<()> {
    let cap = max_components(n, p);
    if ncomp == 0 || ncomp > cap {
        return Err(PlsError::InvalidArgument(format!(
            "number of components {ncomp} outside 1..={cap}"
        )));
    }
    Ok(())
}

fn check_len(got: usize, want: usize, what: &str) -> Result<()> {
    if got != want {
        return Err(PlsError::InvalidArgument(format!(
            "{what} has length {got}, expected {want}"
        )));
    }
    Ok(())
}

pub(crate) fn weighted_mean_sd(y: ArrayView1<f64>, w: ArrayView1<f64>) -> (f64, f64) {
    let sw = w.sum();
    let mean = y.dot(&w) / sw;
    let ss: f64 = y.iter().zip(w.iter()).map(|(&v, &wi)| wi * (v - mean) * (v - mean)).sum();
    let sd = if sw > 1.0 { (ss / (sw - 1.0)).sqrt() } else { 0.0 };
    (mean, sd)
}

/// Back-transform standardized coefficients to the raw predictor scale.
pub(crate) fn raw_coefficients(beta_std: ArrayView1<f64>, intercept: f64, scaling: &ScalingRecord) -> Array1<f64> {
    let p = beta_std.len();
    let mut out = Array1::<f64>::zeros(p + 1);
    let mut shift = 0.0;
    for j in 0..p {
        out[j + 1] = beta_std[j] / scaling.col_sds[j];
        shift += beta_std[j] * scaling.col_means[j] / scaling.col_sds[j];
    }
    out[0] = intercept - shift;
    out
}

/// Fit a gaussian PLS regression with `ncomp` components. The response's
/// observation weights are used throughout.
pub fn fit_pls(x: &MaskedMatrix, y: &Response, ncomp: usize) -> Result<PlsFit> {
    if y.family() != Family::Gaussian {
        return Err(PlsError::InvalidArgument(
            "fit_pls requires a gaussian response; use fit_plsglr".into(),
        ));
    }
    let (n, p) = (x.nrows(), x.ncols());
    if y.len() != n {
        return Err(PlsError::InvalidArgument("X and y row counts differ".into()));
    }
    check_ncomp(ncomp, n, p)?;
    let wo = y.weights().view();
    let (xs, mut scaling) = standardize_weighted(x, wo)?;
    let (y_mean, y_sd) = weighted_mean_sd(y.y().view(), wo);
    scaling.y_mean = Some(y_mean);
    scaling.y_sd = Some(y_sd);

    let mut u = y.y() - y_mean;
    let mut xres = xs;
    let mut weights = Array2::<f64>::zeros((p, ncomp));
    let mut loads = Array2::<f64>::zeros((p, ncomp));
    let mut scores = Array2::<f64>::zeros((n, ncomp));
    let mut coefs = Array1::<f64>::zeros(ncomp);

    for h in 0..ncomp {
        let degenerate = PlsError::DegenerateComponent { achieved: h };
        let mut w = nipals_weights(&xres, u.view(), wo).map_err(|e| match e {
            PlsError::DegenerateComponent { .. } => PlsError::DegenerateComponent { achieved: h },
            other => other,
        })?;
        orient(&mut w);
        let t = compute_scores(&xres, w.view())?;
        let tt: f64 = t.iter().zip(wo.iter()).map(|(a, b)| b * a * a).sum();
        if tt < DEGENERACY_TOL {
            return Err(degenerate);
        }
        let pl = loadings(&xres, t.view(), wo)?;
        subtract_rank_one(&mut xres, t.view(), pl.view());
        let ut: f64 = u.iter().zip(t.iter()).zip(wo.iter()).map(|((a, b), c)| a * b * c).sum();
        let c = ut / tt;
        u.scaled_add(-c, &t);
        weights.column_mut(h).assign(&w);
        loads.column_mut(h).assign(&pl);
        scores.column_mut(h).assign(&t);
        coefs[h] = c;
    }

    let weights_star = modified_weights(weights.view(), loads.view())?;
    let beta_std = weights_star.dot(&coefs);
    let beta_raw = raw_coefficients(beta_std.view(), y_mean, &scaling);
    Ok(PlsFit {
        family: Family::Gaussian,
        ncomp,
        weights,
        loadings: loads,
        scores,
        coefs,
        intercept: y_mean,
        weights_star,
        beta_std,
        beta_raw,
        scaling,
    })
}

/// Predict responses for new rows.
pub fn predict(fit: &PlsFit, xnew: &MaskedMatrix) -> Result<Array1<f64>> {
    let xs = apply_scaling(xnew, &fit.scaling)?;
    let t = project_scores(&xs, fit.weights.view(), fit.loadings.view())?;
    Ok(t.dot(&fit.coefs) + fit.intercept)
}

/// Per-column sums of squares of scores, useful for orthogonality checks.
pub fn score_gram(scores: ArrayView2<f64>) -> Array2<f64> {
    scores.t().dot(&scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2, Axis};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dense(seed: u64, n: usize, p: usize) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, p), |_| rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn weights_follow_xtu_on_complete_data() {
        let x = MaskedMatrix::from_dense(random_dense(1, 12, 4)).unwrap();
        let u = Array1::from_shape_fn(12, |i| (i as f64 * 0.7).sin());
        let w = nipals_weights(&x, u.view(), Array1::ones(12).view()).unwrap();
        let xtu = x.values().t().dot(&u);
        let cos = w.dot(&xtu) / xtu.dot(&xtu).sqrt();
        assert!(cos >= 1.0 - 1e-12);
    }

    #[test]
    fn single_column_equal_to_u_gives_unit_weight() {
        let u = array![1.0, -2.0, 0.5, 0.5];
        let x = MaskedMatrix::from_dense(u.clone().insert_axis(Axis(1))).unwrap();
        let w = nipals_weights(&x, u.view(), Array1::ones(4).view()).unwrap();
        assert_eq!(w.to_vec(), vec![1.0]);
    }

    #[test]
    fn empty_pairwise_set_is_degenerate() {
        let nan = f64::NAN;
        // second column only present where u is zero
        let x = MaskedMatrix::from_nan(array![[1.0, nan], [-1.0, nan], [0.5, 2.0], [0.3, 1.0]]).unwrap();
        let u = array![1.0, -1.0, 0.0, 0.0];
        let err = nipals_weights(&x, u.view(), Array1::ones(4).view()).unwrap_err();
        assert!(err.to_string().contains("degenerate component"));
    }

    #[test]
    fn scores_with_missing_entries() {
        let nan = f64::NAN;
        let w = array![0.6, 0.8, 0.0];
        let x = MaskedMatrix::from_nan(array![[1.2, nan, nan], [1.0, 2.0, 3.0]]).unwrap();
        let t = compute_scores(&x, w.view()).unwrap();
        assert!((t[0] - 2.0).abs() < 1e-15);
        assert!((t[1] - (0.6 + 1.6)).abs() < 1e-15);
    }

    #[test]
    fn row_without_usable_entries_errors() {
        let nan = f64::NAN;
        let w = array![0.0, 1.0];
        let x = MaskedMatrix::from_nan(array![[1.0, nan], [1.0, 2.0]]).unwrap();
        assert!(matches!(compute_scores(&x, w.view()), Err(PlsError::EmptyRow { row }) if row == "1"));
    }

    #[test]
    fn rank_one_deflation_is_exact() {
        let t = array![1.0, -2.0, 0.5, 3.0];
        let p = array![0.5, -1.0, 2.0];
        let x = t.clone().insert_axis(Axis(1)).dot(&p.clone().insert_axis(Axis(0)));
        let x = MaskedMatrix::from_dense(x).unwrap();
        let (next, pl) = deflate(&x, t.view(), Array1::ones(4).view()).unwrap();
        assert!(next.values().iter().all(|v| v.abs() < 1e-10));
        assert!((pl - p).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn deflation_keeps_mask_and_orthogonalizes() {
        let nan = f64::NAN;
        let x = MaskedMatrix::from_nan(array![[1.0, 2.0], [nan, 1.0], [3.0, nan], [0.5, 0.2]]).unwrap();
        let t = array![1.0, 0.5, -1.0, 2.0];
        let (next, _) = deflate(&x, t.view(), Array1::ones(4).view()).unwrap();
        assert_eq!(next.mask(), x.mask());

        let xd = MaskedMatrix::from_dense(random_dense(4, 10, 4)).unwrap();
        let td = Array1::from_shape_fn(10, |i| i as f64 - 4.5);
        let (nd, _) = deflate(&xd, td.view(), Array1::ones(10).view()).unwrap();
        let proj = nd.values().t().dot(&td);
        assert!(proj.iter().all(|v| v.abs() < 1e-8));
    }

    fn ols(x: &Array2<f64>, y: &Array1<f64>) -> Array1<f64> {
        let n = x.nrows();
        let mut d = Array2::<f64>::ones((n, x.ncols() + 1));
        d.slice_mut(ndarray::s![.., 1..]).assign(x);
        let xtx = d.t().dot(&d);
        let inv = linalg::inverse(xtx.view(), 1e-14).unwrap();
        inv.dot(&d.t().dot(y))
    }

    #[test]
    fn full_rank_fit_is_least_squares() {
        let xv = random_dense(7, 30, 5);
        let y: Array1<f64> = xv.rows().into_iter().map(|r| 1.0 + r[0] - 2.0 * r[3] + 0.1 * r[1] * r[2]).collect();
        let fit = fit_pls(&MaskedMatrix::from_dense(xv.clone()).unwrap(), &Response::new(y.clone(), Family::Gaussian).unwrap(), 5).unwrap();
        let b = ols(&xv, &y);
        assert!((&fit.beta_raw - &b).iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn single_component_is_simple_regression_on_t1() {
        let xv = random_dense(8, 25, 4);
        let y: Array1<f64> = xv.rows().into_iter().map(|r| r[0] + 0.5 * r[1]).collect();
        let resp = Response::new(y.clone(), Family::Gaussian).unwrap();
        let fit = fit_pls(&MaskedMatrix::from_dense(xv).unwrap(), &resp, 1).unwrap();
        let t = fit.scores.column(0).to_owned();
        let b = ols(&t.clone().insert_axis(Axis(1)), &y);
        let fitted = fit.fitted_values();
        let simple = t.mapv(|v| b[0] + b[1] * v);
        assert!((&fitted - &simple).iter().all(|v| v.abs() < 1e-10));
        // prediction direction is the first weight vector
        let ratio = &fit.beta_std / &fit.weights.column(0);
        assert!(ratio.iter().all(|r| (r - ratio[0]).abs() < 1e-10));
    }

    #[test]
    fn orthogonal_design_reproduces_exact_response() {
        // columns of a 4x4 Hadamard-like centred design
        let xv = array![
            [1.0, 1.0, 1.0],
            [1.0, -1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, 1.0],
            [1.0, 1.0, 1.0],
            [1.0, -1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, 1.0]
        ];
        let y = xv.column(0).to_owned();
        let resp = Response::new(y.clone(), Family::Gaussian).unwrap();
        let x = MaskedMatrix::from_dense(xv.clone()).unwrap();
        let fit = fit_pls(&x, &resp, 1).unwrap();
        let r = &fit.fitted_values() - &y;
        assert!(r.dot(&r).sqrt() < 1e-8);
        // nothing is left to explain, so a second component is degenerate
        assert!(matches!(fit_pls(&x, &resp, 2), Err(PlsError::DegenerateComponent { achieved: 1 })));
    }

    #[test]
    fn prediction_on_training_rows_matches_fitted() {
        let xv = random_dense(9, 20, 4);
        let y: Array1<f64> = xv.rows().into_iter().map(|r| r.sum()).collect();
        let x = MaskedMatrix::from_dense(xv).unwrap();
        let fit = fit_pls(&x, &Response::new(y, Family::Gaussian).unwrap(), 3).unwrap();
        let pred = predict(&fit, &x).unwrap();
        assert!((&pred - &fit.fitted_values()).iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn prediction_rejects_fully_masked_row() {
        let xv = random_dense(10, 15, 3);
        let y: Array1<f64> = xv.rows().into_iter().map(|r| r[0]).collect();
        let fit = fit_pls(&MaskedMatrix::from_dense(xv).unwrap(), &Response::new(y, Family::Gaussian).unwrap(), 2).unwrap();
        let nan = f64::NAN;
        let xnew = MaskedMatrix::from_nan(array![[nan, nan, nan], [0.1, 0.2, 0.3]]).unwrap();
        assert!(predict(&fit, &xnew).is_err());
    }

    #[test]
    fn too_many_components_rejected() {
        let xv = random_dense(11, 6, 3);
        let y = Array1::from_shape_fn(6, |i| i as f64);
        let r = fit_pls(&MaskedMatrix::from_dense(xv).unwrap(), &Response::new(y, Family::Gaussian).unwrap(), 4);
        assert!(matches!(r, Err(PlsError::InvalidArgument(_))));
    }

    #[test]
    fn orientation_prefers_lowest_index_on_ties() {
        let mut w = array![-0.5, 0.5, 0.1];
        assert_eq!(orient(&mut w), -1.0);
        assert_eq!(w.to_vec(), vec![0.5, -0.5, -0.1]);
    }
}
