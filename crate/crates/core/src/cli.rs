//! Batch front end shared by the `plscore` binary and the integration tests.
//!
//! A run is described by flat `key=value` pairs. Config file pairs come
//! first and command-line flags override them. Every artifact is rendered in
//! memory and the files are written together once the run has succeeded, so
//! a failing run leaves no partial outputs behind.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array1, Array2};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::boot::{bootstrap, stability_and_pie, write_beta_star_csv, write_ci_csv, write_stability_csv, BootOptions, CiType, Scheme};
use crate::data::{load_csv, simulate, write_csv, CsvOptions, MaskedMatrix, Response, ScalingRecord, SimulationSpec};
use crate::error::{ErrorClass, PlsError, Result};
use crate::family::Family;
use crate::plsglr::{biplot_data, fit_plsglr};
use crate::selection::{cv_criteria, make_folds, select_components, write_criteria_csv, write_votes_csv, Selection, SelectionRule};
use crate::svg::{emit_svg, FigureKind};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Fit,
    Cv,
    Bootstrap,
    Stability,
    Simulate,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Fit => "fit",
            Command::Cv => "cv",
            Command::Bootstrap => "bootstrap",
            Command::Stability => "stability",
            Command::Simulate => "simulate",
        })
    }
}

impl FromStr for Command {
    type Err = PlsError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "fit" => Command::Fit,
            "cv" => Command::Cv,
            "bootstrap" => Command::Bootstrap,
            "stability" => Command::Stability,
            "simulate" => Command::Simulate,
            other => return Err(PlsError::InvalidArgument(format!("unknown command '{other}'"))),
        })
    }
}

/// Fully validated run description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub data: Option<PathBuf>,
    pub response: String,
    pub family: Family,
    pub ncomp: Option<usize>,
    pub max_ncomp: Option<usize>,
    pub k: usize,
    pub repeats: usize,
    pub rule: SelectionRule,
    pub scheme: Scheme,
    #[serde(rename = "B")]
    pub resamples: usize,
    pub ci: CiType,
    pub alpha: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub figures: bool,
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub missing_frac: f64,
    /// Worker threads; `None` uses the global pool. Never changes results.
    #[serde(skip)]
    pub threads: Option<usize>,
}

const KEYS: &[&str] = &[
    "command", "data", "response", "family", "ncomp", "max_ncomp", "k", "repeats", "rule", "scheme", "b", "ci",
    "alpha", "seed", "out", "figures", "n", "p", "missing_frac", "threads",
];

fn normalize_key(k: &str) -> String {
    k.trim().trim_start_matches("--").to_ascii_lowercase().replace('-', "_")
}

/// Parse a flat `key = value` file. Blank lines and `#` comments are ignored.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| PlsError::InvalidArgument(format!("config line {}: expected key=value", no + 1)))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| PlsError::InvalidArgument(format!("invalid value '{v}' for {key}")))
}

impl RunConfig {
    /// Build a config from ordered pairs; later pairs win.
    pub fn from_pairs<K: AsRef<str>, V: AsRef<str>>(pairs: &[(K, V)]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (k, v) in pairs {
            let key = normalize_key(k.as_ref());
            if !KEYS.contains(&key.as_str()) {
                return Err(PlsError::InvalidArgument(format!("unknown option '{}'", k.as_ref())));
            }
            map.insert(key, v.as_ref().trim().to_string());
        }
        let get = |k: &str| map.get(k).map(String::as_str);
        let command: Command = get("command")
            .ok_or_else(|| PlsError::InvalidArgument("no command given".into()))?
            .parse()?;
        let family: Family = get("family").unwrap_or("gaussian").parse()?;
        let seed: u64 = match get("seed") {
            Some(s) => num("seed", s)?,
            None => return Err(PlsError::InvalidArgument("a seed is required".into())),
        };
        let out = PathBuf::from(get("out").ok_or_else(|| PlsError::InvalidArgument("an output directory is required".into()))?);
        let opt_usize = |k: &str| get(k).map(|v| num::<usize>(k, v)).transpose();
        let rule = match get("rule") {
            Some(r) => r.parse()?,
            None if family == Family::Binomial => SelectionRule::CvMissclassed,
            None => SelectionRule::Q2Threshold,
        };
        let figures = match get("figures") {
            None => true,
            Some("true" | "1" | "yes") => true,
            Some("false" | "0" | "no") => false,
            Some(v) => return Err(PlsError::InvalidArgument(format!("invalid value '{v}' for figures"))),
        };
        let cfg = RunConfig {
            command,
            data: get("data").map(PathBuf::from),
            response: get("response").unwrap_or("y").to_string(),
            family,
            ncomp: opt_usize("ncomp")?,
            max_ncomp: opt_usize("max_ncomp")?,
            k: opt_usize("k")?.unwrap_or(5),
            repeats: opt_usize("repeats")?.unwrap_or(1),
            rule,
            scheme: get("scheme").unwrap_or("yt").parse()?,
            resamples: opt_usize("b")?.unwrap_or(crate::boot::DEFAULT_RESAMPLES),
            ci: get("ci").unwrap_or("bca").parse()?,
            alpha: get("alpha").map(|v| num("alpha", v)).transpose()?.unwrap_or(crate::boot::DEFAULT_ALPHA),
            seed,
            out,
            figures,
            n: opt_usize("n")?,
            p: opt_usize("p")?,
            missing_frac: get("missing_frac").map(|v| num("missing_frac", v)).transpose()?.unwrap_or(0.0),
            threads: opt_usize("threads")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(PlsError::InvalidArgument(format!("{} requires {what}", self.command)))
            }
        };
        if self.command != Command::Simulate {
            let data = self.data.as_ref().ok_or_else(|| PlsError::InvalidArgument(format!("{} requires --data", self.command)))?;
            if !data.is_file() {
                return Err(PlsError::InvalidArgument(format!("data file '{}' not found", data.display())));
            }
        }
        match self.command {
            Command::Fit | Command::Bootstrap => need(self.ncomp.is_some_and(|h| h > 0), "--ncomp >= 1")?,
            Command::Cv | Command::Stability => need(self.max_ncomp.is_some_and(|h| h > 0), "--max-ncomp >= 1")?,
            Command::Simulate => need(self.n.is_some() && self.p.is_some(), "--n and --p")?,
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(PlsError::InvalidArgument(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if self.resamples == 0 || self.repeats == 0 {
            return Err(PlsError::InvalidArgument("B and repeats must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(PlsError::InvalidArgument("threads must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileDigest {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub seed: u64,
    pub config: RunConfig,
    pub files: Vec<FileDigest>,
}

/// Serialized model written by `fit`.
#[derive(Debug, Clone, Serialize)]
pub struct ModelFile {
    pub family: Family,
    pub ncomp: usize,
    pub response: String,
    pub col_names: Vec<String>,
    pub weights: Array2<f64>,
    pub loadings: Array2<f64>,
    pub weights_star: Array2<f64>,
    pub component_coefs: Array1<f64>,
    pub intercept: f64,
    pub beta_std: Array1<f64>,
    /// Intercept first, then one slope per predictor on the raw scale.
    pub beta_raw: Array1<f64>,
    pub scaling: ScalingRecord,
    pub deviance: f64,
    pub pearson_chi2: f64,
    pub converged: bool,
    pub separated: bool,
    pub sig_pred_count: Vec<usize>,
    pub failed_step_fits: usize,
}

struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn new() -> Self {
        Outputs { files: Vec::new() }
    }

    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<()> {
        let mut s = serde_json::to_vec_pretty(v)?;
        s.push(b'\n');
        self.add(name, s);
        Ok(())
    }

    fn csv<F: FnOnce(&mut Vec<u8>) -> Result<()>>(&mut self, name: &str, f: F) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.add(name, buf);
        Ok(())
    }

    fn svg<T: Serialize>(&mut self, name: &str, kind: FigureKind, payload: &T) -> Result<()> {
        let svg = emit_svg(kind, &serde_json::to_value(payload)?)?;
        self.add(name, svg.into_bytes());
        Ok(())
    }
}

/// What a successful run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out: PathBuf,
    pub manifest: Manifest,
}

impl RunSummary {
    pub fn paths(&self) -> Vec<PathBuf> {
        self.manifest.files.iter().map(|f| self.out.join(&f.name)).collect()
    }
}

fn load(cfg: &RunConfig) -> Result<(MaskedMatrix, Response)> {
    let path = cfg.data.as_ref().expect("validated");
    load_csv(path, &CsvOptions::new(cfg.response.clone(), cfg.family))
}

#[derive(Serialize)]
struct CvFile<'a> {
    selection: &'a Selection,
    report: &'a crate::selection::CvReport,
}

fn cross_validate(cfg: &RunConfig, x: &MaskedMatrix, y: &Response, out: &mut Outputs) -> Result<Selection> {
    let hmax = cfg.max_ncomp.expect("validated");
    let plan = make_folds(x.nrows(), cfg.k, cfg.repeats, cfg.seed)?;
    let report = cv_criteria(x, y, hmax, &plan)?;
    let selection = select_components(&report, cfg.rule)?;
    out.csv("criteria.csv", |b| write_criteria_csv(b, &report))?;
    out.csv("votes.csv", |b| write_votes_csv(b, &selection.votes))?;
    out.json(
        "cv_report.json",
        &CvFile {
            selection: &selection,
            report: &report,
        },
    )?;
    if cfg.figures {
        out.svg("cv_votes.svg", FigureKind::CvVotes, &selection.votes)?;
    }
    Ok(selection)
}

fn boot_options(cfg: &RunConfig, kinds: Vec<CiType>) -> BootOptions {
    BootOptions {
        scheme: cfg.scheme,
        resamples: cfg.resamples,
        alpha: cfg.alpha,
        kinds,
        seed: cfg.seed,
    }
}

fn execute(cfg: &RunConfig) -> Result<Outputs> {
    let mut out = Outputs::new();
    match cfg.command {
        Command::Fit => {
            let (x, y) = load(cfg)?;
            let h = cfg.ncomp.expect("validated");
            let fit = fit_plsglr(&x, &y, h)?;
            let model = ModelFile {
                family: fit.family(),
                ncomp: h,
                response: y.name().to_string(),
                col_names: x.col_names().to_vec(),
                weights: fit.pls.weights.clone(),
                loadings: fit.pls.loadings.clone(),
                weights_star: fit.pls.weights_star.clone(),
                component_coefs: fit.pls.coefs.clone(),
                intercept: fit.pls.intercept,
                beta_std: fit.pls.beta_std.clone(),
                beta_raw: fit.pls.beta_raw.clone(),
                scaling: fit.pls.scaling.clone(),
                deviance: fit.final_glm.deviance,
                pearson_chi2: fit.final_glm.pearson_chi2,
                converged: fit.final_glm.converged,
                separated: fit.final_glm.separated,
                sig_pred_count: fit.sig_pred_count.clone(),
                failed_step_fits: fit.failed_step_fits,
            };
            out.json("model.json", &model)?;
            if cfg.figures && h >= 2 {
                out.svg("biplot.svg", FigureKind::Biplot, &biplot_data(&fit, x.row_ids())?)?;
            }
        }
        Command::Cv => {
            let (x, y) = load(cfg)?;
            cross_validate(cfg, &x, &y, &mut out)?;
        }
        Command::Bootstrap => {
            let (x, y) = load(cfg)?;
            let h = cfg.ncomp.expect("validated");
            // the requested type comes first so figures draw it
            let mut kinds = vec![cfg.ci];
            kinds.extend(
                [CiType::Percentile, CiType::Basic, CiType::Normal]
                    .into_iter()
                    .filter(|k| *k != cfg.ci),
            );
            let report = bootstrap(&x, &y, h, &boot_options(cfg, kinds))?;
            out.csv("beta_star.csv", |b| write_beta_star_csv(b, &report))?;
            out.csv("ci.csv", |b| write_ci_csv(b, &report))?;
            out.json("boot_report.json", &report)?;
            if cfg.figures {
                out.svg("boxplots.svg", FigureKind::Boxplots, &report)?;
                out.svg("ci_forest.svg", FigureKind::CiForest, &report)?;
            }
        }
        Command::Stability => {
            let (x, y) = load(cfg)?;
            let selection = cross_validate(cfg, &x, &y, &mut out)?;
            let hmax = cfg.max_ncomp.expect("validated");
            let table = stability_and_pie(&x, &y, hmax, &selection.votes, &boot_options(cfg, vec![cfg.ci]), cfg.ci)?;
            out.csv("stability.csv", |b| write_stability_csv(b, &table))?;
            out.json("stability.json", &table)?;
            if cfg.figures {
                out.svg("sig_grid.svg", FigureKind::SigGrid, &table)?;
            }
        }
        Command::Simulate => {
            let sim = simulate(&SimulationSpec {
                n: cfg.n.expect("validated"),
                p: cfg.p.expect("validated"),
                family: cfg.family,
                missing_frac: cfg.missing_frac,
                seed: cfg.seed,
            })?;
            let y = sim.y.named(cfg.response.clone());
            out.csv("data.csv", |b| write_csv(b, &sim.x, &y))?;
            out.csv("true_beta.csv", |b| {
                let mut w = csv::Writer::from_writer(b);
                w.write_record(["predictor", "beta"])?;
                for (name, beta) in sim.x.col_names().iter().zip(&sim.true_beta) {
                    w.write_record([name.clone(), beta.to_string()])?;
                }
                w.flush()?;
                Ok(())
            })?;
        }
    }
    Ok(out)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    #[cfg(feature = "parallel")]
    if let Some(t) = threads {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| PlsError::InvalidArgument(format!("thread pool: {e}")))?;
        return Ok(pool.install(f));
    }
    let _ = threads;
    Ok(f())
}

/// Run a validated config and write its artifacts plus the manifest.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    let outputs = with_threads(cfg.threads, || execute(cfg))??;
    let files = outputs
        .files
        .iter()
        .map(|(name, bytes)| FileDigest {
            name: name.clone(),
            bytes: bytes.len(),
            sha256: sha256_hex(bytes),
        })
        .collect();
    let manifest = Manifest {
        tool: "plscore".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: cfg.command,
        seed: cfg.seed,
        config: cfg.clone(),
        files,
    };
    let input = cfg.data.as_ref().and_then(|d| d.canonicalize().ok());
    std::fs::create_dir_all(&cfg.out)?;
    for (name, bytes) in &outputs.files {
        let path = cfg.out.join(name);
        if input.is_some() && path.canonicalize().ok() == input {
            return Err(PlsError::InvalidArgument(format!(
                "output '{}' would overwrite the input data",
                path.display()
            )));
        }
        std::fs::write(&path, bytes)?;
    }
    let mut m = serde_json::to_vec_pretty(&manifest)?;
    m.push(b'\n');
    std::fs::write(cfg.out.join(MANIFEST), m)?;
    Ok(RunSummary {
        out: cfg.out.clone(),
        manifest,
    })
}

pub fn exit_code(class: ErrorClass) -> i32 {
    match class {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numerical => 4,
    }
}

/// One-line JSON description of a failure for the diagnostic stream.
pub fn error_line(e: &PlsError) -> String {
    let class = match e.class() {
        ErrorClass::Config => "config",
        ErrorClass::Data => "data",
        ErrorClass::Numerical => "numerical",
    };
    serde_json::json!({
        "status": "error",
        "class": class,
        "code": exit_code(e.class()),
        "message": e.to_string(),
    })
    .to_string()
}

/// Merge config file and flag pairs, run, and report. Returns the exit code.
pub fn main_with(config_file: Option<&Path>, flags: Vec<(String, String)>) -> i32 {
    let result = (|| {
        let mut pairs = Vec::new();
        if let Some(path) = config_file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| PlsError::InvalidArgument(format!("config file '{}': {e}", path.display())))?;
            pairs = parse_config(&text)?;
        }
        pairs.extend(flags);
        let cfg = RunConfig::from_pairs(&pairs)?;
        run(&cfg)
    })();
    match result {
        Ok(summary) => {
            println!(
                "{}",
                serde_json::json!({
                    "status": "ok",
                    "command": summary.manifest.command,
                    "manifest": summary.out.join(MANIFEST),
                })
            );
            0
        }
        Err(e) => {
            eprintln!("{}", error_line(&e));
            exit_code(e.class())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(v: &[(&str, &str)]) -> Vec<(String, String)> {
        v.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn config_file_syntax() {
        let p = parse_config("# comment\ncommand = simulate\n\nseed=3\n").unwrap();
        assert_eq!(p, pairs(&[("command", "simulate"), ("seed", "3")]));
        assert!(parse_config("novalue\n").is_err());
    }

    #[test]
    fn flags_override_file() {
        let cfg = RunConfig::from_pairs(&pairs(&[
            ("command", "simulate"),
            ("seed", "1"),
            ("n", "10"),
            ("p", "3"),
            ("out", "/tmp/x"),
            ("--seed", "9"),
            ("--B", "50"),
        ]))
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.resamples, 50);
    }

    #[test]
    fn seed_is_mandatory() {
        let err = RunConfig::from_pairs(&pairs(&[("command", "simulate"), ("n", "10"), ("p", "3"), ("out", "o")])).unwrap_err();
        assert_eq!(err.class(), ErrorClass::Config);
    }

    #[test]
    fn bad_family_is_a_config_error() {
        let err = RunConfig::from_pairs(&pairs(&[
            ("command", "simulate"),
            ("family", "gamma"),
            ("seed", "1"),
            ("n", "10"),
            ("p", "3"),
            ("out", "o"),
        ]))
        .unwrap_err();
        assert_eq!(exit_code(err.class()), 2);
        let line = error_line(&err);
        assert!(!line.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["code"], 2);
    }

    #[test]
    fn unknown_option_rejected() {
        assert!(RunConfig::from_pairs(&pairs(&[("command", "fit"), ("colour", "red")])).is_err());
    }
}
