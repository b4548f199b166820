//! Simulation checks of the estimators and of bootstrap inference.

use ndarray::{s, Array1, Array2};
use plscore::boot::{boot_yt, boot_yx, quantile_sorted, stability_and_pie, BootOptions, CiType, Scheme};
use plscore::data::{simulate, SimulationSpec};
use plscore::glm::fit_glm;
use plscore::pls::{fit_pls, predict};
use plscore::plsglr::{extract_components, fit_plsglr};
use plscore::selection::{cv_criteria, make_folds, select_components, SelectionRule};
use plscore::{Family, MaskedMatrix, Response};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| rng.sample(StandardNormal))
}

/// Least squares through the normal equations, by Gauss-Jordan elimination.
fn least_squares(z: &Array2<f64>, y: &Array1<f64>) -> Array1<f64> {
    let q = z.ncols();
    let mut a = Array2::<f64>::zeros((q, q + 1));
    a.slice_mut(s![.., ..q]).assign(&z.t().dot(z));
    a.column_mut(q).assign(&z.t().dot(y));
    for c in 0..q {
        let piv = (c..q).max_by(|&i, &j| a[[i, c]].abs().total_cmp(&a[[j, c]].abs())).unwrap();
        for k in 0..=q {
            a.swap([c, k], [piv, k]);
        }
        let d = a[[c, c]];
        a.row_mut(c).mapv_inplace(|v| v / d);
        for r in 0..q {
            if r != c {
                let f = a[[r, c]];
                for k in 0..=q {
                    a[[r, k]] -= f * a[[c, k]];
                }
            }
        }
    }
    a.column(q).to_owned()
}

fn with_intercept(x: &Array2<f64>) -> Array2<f64> {
    let mut z = Array2::ones((x.nrows(), x.ncols() + 1));
    z.slice_mut(s![.., 1..]).assign(x);
    z
}

#[test]
fn gaussian_glm_is_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = normal_matrix(&mut rng, 25, 3);
    let y: Array1<f64> = (0..25).map(|i| 1.0 + x[[i, 0]] - 2.0 * x[[i, 2]] + rng.sample::<f64, _>(StandardNormal)).collect();
    let fit = fit_glm(x.view(), &Response::new(y.clone(), Family::Gaussian).unwrap()).unwrap();
    let oracle = least_squares(&with_intercept(&x), &y);
    for (a, b) in fit.coef.iter().zip(oracle.iter()) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn new_row_prediction_matches_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = normal_matrix(&mut rng, 30, 5);
    let y: Array1<f64> = (0..30).map(|i| x.row(i).sum() + rng.sample::<f64, _>(StandardNormal)).collect();
    let fit = fit_pls(&MaskedMatrix::from_dense(x.clone()).unwrap(), &Response::new(y.clone(), Family::Gaussian).unwrap(), 5).unwrap();
    let beta = least_squares(&with_intercept(&x), &y);
    let new = normal_matrix(&mut rng, 1, 5);
    let got = predict(&fit, &MaskedMatrix::from_dense(new.clone()).unwrap()).unwrap()[0];
    let want = beta[0] + new.row(0).dot(&beta.slice(s![1..]));
    assert!((got - want).abs() < 1e-8);
}

#[test]
fn informative_predictor_is_detected() {
    let mut hits = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x = normal_matrix(&mut rng, 200, 6);
        let y: Array1<f64> = (0..200)
            .map(|i| if rng.random::<f64>() < 1.0 / (1.0 + (-x[[i, 0]]).exp()) { 1.0 } else { 0.0 })
            .collect();
        let path = extract_components(&MaskedMatrix::from_dense(x).unwrap(), &Response::new(y, Family::Binomial).unwrap(), 1).unwrap();
        if path.sig_counts[0] >= 1 {
            hits += 1;
        }
    }
    assert!(hits >= 95, "{hits}/100");
}

fn iqr(col: ndarray::ArrayView1<f64>) -> f64 {
    let mut v = col.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25)
}

#[test]
fn full_resampling_is_more_dispersed() {
    let mut ratio = [0.0; 4];
    for seed in 0..5u64 {
        let sim = simulate(&SimulationSpec {
            n: 60,
            p: 4,
            family: Family::Binomial,
            missing_frac: 0.0,
            seed: 200 + seed,
        })
        .unwrap();
        let fit = fit_plsglr(&sim.x, &sim.y, 2).unwrap();
        let yt = boot_yt(&fit, &sim.y, 400, seed).unwrap();
        let yx = boot_yx(&sim.x, &sim.y, 2, 400, seed).unwrap();
        for j in 0..4 {
            ratio[j] += iqr(yx.beta_star.column(j)) / iqr(yt.beta_star.column(j)) / 5.0;
        }
    }
    let wider = ratio.iter().filter(|&&r| r >= 1.0).count();
    assert!(wider >= 3, "{ratio:?}");
}

#[test]
fn noise_predictors_are_rarely_stable() {
    let mut total = 0.0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let x = normal_matrix(&mut rng, 200, 5);
        let y: Array1<f64> = (0..200).map(|_| rng.sample(StandardNormal)).collect();
        let x = MaskedMatrix::from_dense(x).unwrap();
        let y = Response::new(y, Family::Gaussian).unwrap();
        let plan = make_folds(200, 5, 5, seed).unwrap();
        let rep = cv_criteria(&x, &y, 3, &plan).unwrap();
        let votes = select_components(&rep, SelectionRule::Q2Threshold).unwrap().votes;
        let mut opts = BootOptions::new(Scheme::YT, seed);
        opts.resamples = 1000;
        let table = stability_and_pie(&x, &y, 3, &votes, &opts, CiType::Percentile).unwrap();
        total += table.pi_e.iter().sum::<f64>() / 5.0;
    }
    let mean = total / 20.0;
    assert!(mean <= 0.15, "mean pi_e {mean}");
}

#[test]
fn stability_weights_follow_votes() {
    let sim = simulate(&SimulationSpec {
        n: 80,
        p: 5,
        family: Family::Binomial,
        missing_frac: 0.05,
        seed: 12,
    })
    .unwrap();
    let plan = make_folds(80, 5, 6, 1).unwrap();
    let rep = cv_criteria(&sim.x, &sim.y, 3, &plan).unwrap();
    let votes = select_components(&rep, SelectionRule::CvMissclassed).unwrap().votes;
    let mut opts = BootOptions::new(Scheme::YT, 3);
    opts.resamples = 200;
    let t = stability_and_pie(&sim.x, &sim.y, 3, &votes, &opts, CiType::Percentile).unwrap();
    for j in 0..5 {
        let want: f64 = (1..=3)
            .map(|h| if t.significant[h - 1].as_ref().unwrap()[j] { votes.freq(h) } else { 0.0 })
            .sum();
        assert!((t.pi_e[j] - want).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&t.pi_e[j]));
    }
}
