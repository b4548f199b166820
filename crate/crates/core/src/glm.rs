//! Iteratively reweighted least squares for the canonical-link families.
//!
//! This is the inner solver for the per-predictor regressions of the PLSGLR
//! component step, the final regression of the response on the components,
//! and the refits inside the bootstrap.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::data::Response;
use crate::error::{PlsError, Result};
use crate::family::Family;
use crate::linalg;

/// Relative deviance change that ends the iterations.
pub const DEVIANCE_TOL: f64 = 1e-8;
pub const MAX_ITER: usize = 50;
pub const MAX_HALVINGS: usize = 10;
/// Coefficients beyond this magnitude in a logit/log model signal separation.
pub const SEPARATION_BOUND: f64 = 30.0;

/// Fitted probabilities this close to 0 or 1 also signal separation.
pub const BOUNDARY_PROB: f64 = 1e-8;

const PIVOT_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFit {
    pub family: Family,
    /// Intercept first, then one entry per design column.
    pub coef: Array1<f64>,
    pub cov: Array2<f64>,
    pub deviance: f64,
    pub pearson_chi2: f64,
    pub dispersion: f64,
    pub n_iter: usize,
    pub converged: bool,
    /// Set when coefficients ran off towards infinity.
    pub separated: bool,
    pub fitted_means: Array1<f64>,
    /// Deviance of every accepted coefficient iterate.
    pub deviance_trace: Vec<f64>,
}

impl GlmFit {
    pub fn std_errors(&self) -> Array1<f64> {
        self.cov.diag().mapv(|v| if v > 0.0 { v.sqrt() } else { 0.0 })
    }

    /// Number of estimated mean parameters (intercept included).
    pub fn n_params(&self) -> usize {
        self.coef.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaldTest {
    pub z: f64,
    pub p_value: f64,
    /// Zero or undefined standard error; `p_value` is then 1.
    pub degenerate: bool,
}

/// Fit a GLM of `y` on the columns of `z` plus an intercept.
pub fn fit_glm(z: ArrayView2<f64>, y: &Response) -> Result<GlmFit> {
    if z.nrows() != y.len() {
        return Err(PlsError::InvalidArgument(format!(
            "design has {} rows but response has {}",
            z.nrows(),
            y.len()
        )));
    }
    if y.is_empty() {
        return Err(PlsError::InvalidArgument("empty response".into()));
    }
    fit_glm_raw(z, y.y().view(), y.weights().view(), y.family())
}

struct Iterate {
    coef: Array1<f64>,
    eta: Array1<f64>,
    mu: Array1<f64>,
    deviance: f64,
}

pub(crate) fn fit_glm_raw(
    z: ArrayView2<f64>,
    y: ArrayView1<f64>,
    w: ArrayView1<f64>,
    family: Family,
) -> Result<GlmFit> {
    let n = z.nrows();
    let q = z.ncols() + 1;

    let mut mu: Array1<f64> = y.mapv(|v| family.initial_mean(v));
    let mut eta: Array1<f64> = mu.mapv(|m| family.link(m));
    let mut dev_old = total_deviance(family, y, w, mu.view());
    let mut trace = Vec::new();
    let mut best: Option<Iterate> = None;
    let mut converged = false;
    let mut n_iter = 0;

    let mut ww = vec![0.0; n];
    let mut wz = vec![0.0; n];

    while n_iter < MAX_ITER {
        n_iter += 1;
        for i in 0..n {
            let d = family.mu_eta(eta[i]).max(1e-300);
            let (m, _) = family.clamp_mean(mu[i]);
            ww[i] = w[i] * d * d / family.variance(m);
            wz[i] = eta[i] + (y[i] - mu[i]) / d;
        }
        let (xtwx, xtwz) = linalg::weighted_normal_equations(z, &ww, &wz);
        let chol = match linalg::cholesky(xtwx.view(), PIVOT_TOL) {
            Some(l) => l,
            None => {
                if best.is_none() {
                    return Err(PlsError::SingularIrls);
                }
                // weights collapsed mid-run, typically under separation
                break;
            }
        };
        let mut coef = linalg::cholesky_solve(&chol, xtwz.view());
        let mut cand = evaluate(z, y, w, family, &coef);

        let rel = |a: f64, b: f64| (a - b).abs() / (a.abs() + 0.1);
        if cand.deviance.is_finite() && rel(cand.deviance, dev_old) < DEVIANCE_TOL {
            if cand.deviance <= dev_old || best.is_none() {
                trace.push(cand.deviance);
                best = Some(cand);
            }
            converged = true;
            break;
        }

        if let Some(prev) = &best {
            let mut halvings = 0;
            while (!cand.deviance.is_finite() || cand.deviance > dev_old) && halvings < MAX_HALVINGS {
                coef = (&coef + &prev.coef) * 0.5;
                cand = evaluate(z, y, w, family, &coef);
                halvings += 1;
            }
            if !cand.deviance.is_finite() || cand.deviance > dev_old {
                break;
            }
            if rel(cand.deviance, dev_old) < DEVIANCE_TOL {
                trace.push(cand.deviance);
                best = Some(cand);
                converged = true;
                break;
            }
        } else if !cand.deviance.is_finite() {
            return Err(PlsError::SingularIrls);
        }

        dev_old = cand.deviance;
        trace.push(dev_old);
        eta = cand.eta.clone();
        mu = cand.mu.clone();
        best = Some(cand);
    }

    let mut best = best.ok_or(PlsError::SingularIrls)?;
    if converged {
        // one more Newton step sharpens the coefficients well past what the
        // deviance criterion guarantees
        if let Some(polished) = newton_step(z, y, w, family, &best) {
            if polished.deviance.is_finite()
                && polished.deviance <= best.deviance + 1e-12 * (best.deviance.abs() + 0.1)
            {
                best = polished;
            }
        }
    }
    let separated = match family {
        Family::Gaussian => false,
        Family::Binomial => {
            best.coef.iter().any(|c| c.abs() > SEPARATION_BOUND)
                || best.mu.iter().any(|&m| m.min(1.0 - m) < BOUNDARY_PROB)
        }
        Family::Poisson => best.coef.iter().any(|c| c.abs() > SEPARATION_BOUND),
    };

    // covariance at the accepted iterate
    for i in 0..n {
        let d = family.mu_eta(best.eta[i]).max(1e-300);
        let (m, _) = family.clamp_mean(best.mu[i]);
        ww[i] = w[i] * d * d / family.variance(m);
    }
    let (xtwx, _) = linalg::weighted_normal_equations(z, &ww, &wz);
    let inv = match linalg::cholesky(xtwx.view(), PIVOT_TOL) {
        Some(l) => linalg::cholesky_inverse(&l),
        None => Array2::from_elem((q, q), f64::NAN),
    };
    let pearson = pearson_total(family, y, w, best.mu.view()).0;
    let dispersion = if family.estimates_dispersion() {
        let df = w.sum() - q as f64;
        if df > 0.0 {
            best.deviance / df
        } else {
            f64::NAN
        }
    } else {
        1.0
    };
    let cov = inv * dispersion;

    Ok(GlmFit {
        family,
        coef: best.coef,
        cov,
        deviance: best.deviance,
        pearson_chi2: pearson,
        dispersion,
        n_iter,
        converged: converged && !separated,
        separated,
        fitted_means: best.mu,
        deviance_trace: trace,
    })
}

fn newton_step(
    z: ArrayView2<f64>,
    y: ArrayView1<f64>,
    w: ArrayView1<f64>,
    family: Family,
    at: &Iterate,
) -> Option<Iterate> {
    let n = z.nrows();
    let mut ww = vec![0.0; n];
    let mut wz = vec![0.0; n];
    for i in 0..n {
        let d = family.mu_eta(at.eta[i]).max(1e-300);
        let (m, _) = family.clamp_mean(at.mu[i]);
        ww[i] = w[i] * d * d / family.variance(m);
        wz[i] = at.eta[i] + (y[i] - at.mu[i]) / d;
    }
    let (xtwx, xtwz) = linalg::weighted_normal_equations(z, &ww, &wz);
    let l = linalg::cholesky(xtwx.view(), PIVOT_TOL)?;
    let coef = linalg::cholesky_solve(&l, xtwz.view());
    Some(evaluate(z, y, w, family, &coef))
}

fn evaluate(
    z: ArrayView2<f64>,
    y: ArrayView1<f64>,
    w: ArrayView1<f64>,
    family: Family,
    coef: &Array1<f64>,
) -> Iterate {
    let n = z.nrows();
    let mut eta = Array1::<f64>::from_elem(n, coef[0]);
    for i in 0..n {
        let mut s = eta[i];
        for j in 0..z.ncols() {
            s += z[[i, j]] * coef[j + 1];
        }
        eta[i] = match family {
            Family::Poisson => s.min(700.0),
            _ => s,
        };
    }
    let mu = eta.mapv(|e| family.inv_link(e));
    let deviance = total_deviance(family, y, w, mu.view());
    Iterate {
        coef: coef.clone(),
        eta,
        mu,
        deviance,
    }
}

fn total_deviance(family: Family, y: ArrayView1<f64>, w: ArrayView1<f64>, mu: ArrayView1<f64>) -> f64 {
    y.iter()
        .zip(mu.iter())
        .zip(w.iter())
        .map(|((&yi, &mi), &wi)| wi * family.unit_deviance(yi, family.clamp_mean(mi).0))
        .sum()
}

fn pearson_total(family: Family, y: ArrayView1<f64>, w: ArrayView1<f64>, mu: ArrayView1<f64>) -> (f64, bool) {
    let mut clamped = false;
    let s = y
        .iter()
        .zip(mu.iter())
        .zip(w.iter())
        .map(|((&yi, &mi), &wi)| {
            let (m, c) = family.clamp_mean(mi);
            clamped |= c;
            let r = family.pearson_resid(yi, m);
            wi * r * r
        })
        .sum();
    (s, clamped)
}

/// Two-sided Wald test of one coefficient against zero.
pub fn wald_test(fit: &GlmFit, index: usize) -> Result<WaldTest> {
    if index >= fit.coef.len() {
        return Err(PlsError::InvalidArgument(format!(
            "coefficient index {index} out of range"
        )));
    }
    let var = fit.cov[[index, index]];
    let se = if var > 0.0 { var.sqrt() } else { 0.0 };
    Ok(wald_from(fit.coef[index], se))
}

pub(crate) fn wald_from(coef: f64, se: f64) -> WaldTest {
    if !(se > 0.0) || !se.is_finite() || !coef.is_finite() {
        return WaldTest {
            z: 0.0,
            p_value: 1.0,
            degenerate: true,
        };
    }
    let z = coef / se;
    WaldTest {
        z,
        p_value: erfc(z.abs() / std::f64::consts::SQRT_2),
        degenerate: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DevianceChi2 {
    pub deviance: f64,
    pub pearson_chi2: f64,
    /// Some fitted mean sat on the family boundary and was clamped.
    pub clamped: bool,
}

/// Deviance and Pearson statistic of fitted means against `y`.
pub fn deviance_and_chi2(fit: &GlmFit, y: &Response) -> Result<DevianceChi2> {
    statistics_for_means(fit.fitted_means.view(), y)
}

/// Deviance and Pearson statistic of arbitrary means against `y`.
pub fn statistics_for_means(mu: ArrayView1<f64>, y: &Response) -> Result<DevianceChi2> {
    if mu.len() != y.len() {
        return Err(PlsError::InvalidArgument("fitted means length mismatch".into()));
    }
    let family = y.family();
    let mut clamped = false;
    let mut dev = 0.0;
    let mut chi2 = 0.0;
    for ((&yi, &mi), &wi) in y.y().iter().zip(mu.iter()).zip(y.weights().iter()) {
        let (m, c) = family.clamp_mean(mi);
        clamped |= c;
        dev += wi * family.unit_deviance(yi, m);
        let r = family.pearson_resid(yi, m);
        chi2 += wi * r * r;
    }
    Ok(DevianceChi2 {
        deviance: dev,
        pearson_chi2: chi2,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn intercept_only(y: Vec<f64>, family: Family) -> GlmFit {
        let resp = Response::new(Array1::from(y.clone()), family).unwrap();
        fit_glm(Array2::<f64>::zeros((y.len(), 0)).view(), &resp).unwrap()
    }

    #[test]
    fn intercept_only_binomial_closed_form() {
        let y = vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        let fit = intercept_only(y, Family::Binomial);
        let (k, n) = (4.0_f64, 10.0_f64);
        let p = k / n;
        assert!(fit.fitted_means.iter().all(|&m| (m - p).abs() < 1e-10));
        let dev = -2.0 * (k * p.ln() + (n - k) * (1.0 - p).ln());
        assert!((fit.deviance - dev).abs() < 1e-10, "{} vs {}", fit.deviance, dev);
        assert!(fit.converged);
    }

    #[test]
    fn pearson_for_balanced_intercept_model() {
        let y = vec![0.0, 0.0, 1.0, 1.0];
        let fit = intercept_only(y.clone(), Family::Binomial);
        let resp = Response::new(Array1::from(y), Family::Binomial).unwrap();
        let s = deviance_and_chi2(&fit, &resp).unwrap();
        assert!((s.pearson_chi2 - 4.0).abs() < 1e-12);
        assert!(!s.clamped);
    }

    #[test]
    fn perfect_gaussian_fit_has_zero_statistics() {
        let resp = Response::new(array![1.0, 2.0, 3.0], Family::Gaussian).unwrap();
        let s = statistics_for_means(array![1.0, 2.0, 3.0].view(), &resp).unwrap();
        assert_eq!((s.deviance, s.pearson_chi2), (0.0, 0.0));
    }

    #[test]
    fn boundary_means_are_clamped_and_flagged() {
        let resp = Response::new(array![0.0, 1.0], Family::Binomial).unwrap();
        let s = statistics_for_means(array![0.0, 1.0].view(), &resp).unwrap();
        assert!(s.clamped);
        assert!(s.deviance.is_finite() && s.pearson_chi2.is_finite());
    }

    #[test]
    fn wald_examples() {
        let t = wald_from(0.0, 1.0);
        assert_eq!((t.z, t.p_value), (0.0, 1.0));
        let t = wald_from(1.96, 1.0);
        assert!((t.p_value - 0.05).abs() < 1e-3);
        assert_eq!(wald_from(1.3, 0.7).p_value, wald_from(-1.3, 0.7).p_value);
        let d = wald_from(2.0, 0.0);
        assert!(d.degenerate && d.p_value == 1.0);
    }

    #[test]
    fn singular_design_errors() {
        let z = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0], [4.0, 8.0]];
        let resp = Response::new(array![1.0, 0.5, 2.0, 3.0], Family::Gaussian).unwrap();
        assert!(matches!(fit_glm(z.view(), &resp), Err(PlsError::SingularIrls)));
    }

    #[test]
    fn separated_logistic_is_flagged_not_fatal() {
        let z = array![[-2.0], [-1.0], [-0.5], [0.5], [1.0], [2.0]];
        let resp = Response::new(array![0.0, 0.0, 0.0, 1.0, 1.0, 1.0], Family::Binomial).unwrap();
        let fit = fit_glm(z.view(), &resp).unwrap();
        assert!(!fit.converged);
        assert!(fit.separated);
    }

    #[test]
    fn poisson_intercept_only_mean() {
        let fit = intercept_only(vec![1.0, 3.0, 0.0, 4.0], Family::Poisson);
        assert!(fit.fitted_means.iter().all(|&m| (m - 2.0).abs() < 1e-9));
        assert!((fit.coef[0] - 2.0_f64.ln()).abs() < 1e-9);
    }

    fn logistic_instance(seed: u64, n: usize, q: usize) -> (Array2<f64>, Response) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let z = Array2::from_shape_fn((n, q), |_| rng.random::<f64>() * 2.0 - 1.0);
        let y: Array1<f64> = (0..n)
            .map(|i| {
                let eta = 0.3 + z.row(i).sum() * 0.8;
                if rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp()) { 1.0 } else { 0.0 }
            })
            .collect();
        (z, Response::new(y, Family::Binomial).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn deviance_trace_is_monotone(seed in 0u64..1000) {
            let (z, y) = logistic_instance(seed, 40, 3);
            let fit = fit_glm(z.view(), &y).unwrap();
            for pair in fit.deviance_trace.windows(2) {
                prop_assert!(pair[1] <= pair[0] + 1e-9 * pair[0].abs().max(1.0));
            }
        }

        #[test]
        fn score_vanishes_at_convergence(seed in 0u64..1000) {
            let (z, y) = logistic_instance(seed, 40, 3);
            let fit = fit_glm(z.view(), &y).unwrap();
            prop_assume!(fit.converged);
            // canonical link: score is Z'(y - mu)
            let r = y.y() - &fit.fitted_means;
            prop_assert!(r.sum().abs() < 1e-6);
            for j in 0..3 {
                let s: f64 = z.column(j).iter().zip(r.iter()).map(|(a, b)| a * b).sum();
                prop_assert!(s.abs() < 1e-6);
            }
        }

        #[test]
        fn column_rescaling_rescales_coefficient(seed in 0u64..1000, s in 0.1f64..10.0) {
            let (z, y) = logistic_instance(seed, 40, 2);
            let a = fit_glm(z.view(), &y).unwrap();
            prop_assume!(a.converged);
            let mut z2 = z.clone();
            z2.column_mut(1).mapv_inplace(|v| v * s);
            let b = fit_glm(z2.view(), &y).unwrap();
            prop_assert!((b.coef[2] * s - a.coef[2]).abs() < 1e-8 * a.coef[2].abs().max(1.0));
            prop_assert!((b.deviance - a.deviance).abs() < 1e-8);
        }
    }
}
