//! Browser front end for plscore. Each exported function takes CSV text and
//! a few settings and returns an SVG document, or throws a string error.
//!
//! The `*_inner` functions hold the logic and are plain Rust so they can be
//! tested natively.

use plscore::boot::{bootstrap, BootOptions, CiType, Scheme};
use plscore::cli::error_line;
use plscore::data::{read_csv, simulate, write_csv, CsvOptions, SimulationSpec};
use plscore::plsglr::{biplot_data, fit_plsglr};
use plscore::selection::{cv_criteria, make_folds, select_components, SelectionRule};
use plscore::svg::{emit_svg, FigureKind};
use plscore::{Family, MaskedMatrix, PlsError, Response};
use wasm_bindgen::prelude::*;

fn load(csv: &str, response: &str, family: &str) -> Result<(MaskedMatrix, Response), PlsError> {
    let family: Family = family.parse()?;
    read_csv(csv.as_bytes(), &CsvOptions::new(response, family))
}

fn render<T: serde::Serialize>(kind: FigureKind, payload: &T) -> Result<String, PlsError> {
    emit_svg(kind, &serde_json::to_value(payload)?)
}

fn report(e: PlsError) -> String {
    error_line(&e)
}

pub fn simulate_inner(n: usize, p: usize, family: &str, missing_frac: f64, seed: u64) -> Result<String, String> {
    let run = || -> Result<String, PlsError> {
        let sim = simulate(&SimulationSpec {
            n,
            p,
            family: family.parse()?,
            missing_frac,
            seed,
        })?;
        let mut buf = Vec::new();
        write_csv(&mut buf, &sim.x, &sim.y)?;
        Ok(String::from_utf8(buf).expect("csv writer emits utf-8"))
    };
    run().map_err(report)
}

pub fn biplot_inner(csv: &str, response: &str, family: &str, ncomp: usize) -> Result<String, String> {
    let run = || -> Result<String, PlsError> {
        let (x, y) = load(csv, response, family)?;
        let fit = fit_plsglr(&x, &y, ncomp.max(2))?;
        render(FigureKind::Biplot, &biplot_data(&fit, x.row_ids())?)
    };
    run().map_err(report)
}

#[allow(clippy::too_many_arguments)]
pub fn ci_forest_inner(
    csv: &str,
    response: &str,
    family: &str,
    ncomp: usize,
    scheme: &str,
    resamples: usize,
    ci: &str,
    seed: u64,
) -> Result<String, String> {
    let run = || -> Result<String, PlsError> {
        let (x, y) = load(csv, response, family)?;
        let kind: CiType = ci.parse()?;
        let opts = BootOptions {
            scheme: scheme.parse::<Scheme>()?,
            resamples,
            alpha: 0.05,
            kinds: vec![kind],
            seed,
        };
        render(FigureKind::CiForest, &bootstrap(&x, &y, ncomp, &opts)?)
    };
    run().map_err(report)
}

#[allow(clippy::too_many_arguments)]
pub fn cv_votes_inner(
    csv: &str,
    response: &str,
    family: &str,
    max_ncomp: usize,
    k: usize,
    repeats: usize,
    rule: &str,
    seed: u64,
) -> Result<String, String> {
    let run = || -> Result<String, PlsError> {
        let (x, y) = load(csv, response, family)?;
        let rule: SelectionRule = rule.parse()?;
        let plan = make_folds(x.nrows(), k, repeats, seed)?;
        let rep = cv_criteria(&x, &y, max_ncomp, &plan)?;
        render(FigureKind::CvVotes, &select_components(&rep, rule)?.votes)
    };
    run().map_err(report)
}

#[wasm_bindgen]
pub fn simulate_csv(n: usize, p: usize, family: &str, missing_frac: f64, seed: u32) -> Result<String, JsValue> {
    simulate_inner(n, p, family, missing_frac, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn biplot_svg(csv: &str, response: &str, family: &str, ncomp: usize) -> Result<String, JsValue> {
    biplot_inner(csv, response, family, ncomp).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn ci_forest_svg(
    csv: &str,
    response: &str,
    family: &str,
    ncomp: usize,
    scheme: &str,
    resamples: usize,
    ci: &str,
    seed: u32,
) -> Result<String, JsValue> {
    ci_forest_inner(csv, response, family, ncomp, scheme, resamples, ci, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn cv_votes_svg(
    csv: &str,
    response: &str,
    family: &str,
    max_ncomp: usize,
    k: usize,
    repeats: usize,
    rule: &str,
    seed: u32,
) -> Result<String, JsValue> {
    cv_votes_inner(csv, response, family, max_ncomp, k, repeats, rule, seed as u64).map_err(|e| JsValue::from_str(&e))
}
