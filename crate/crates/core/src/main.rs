use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

/// PLS and PLS generalized linear regression from the command line.
///
/// Options may also come from a flat key=value file given with --config;
/// flags override file entries.
#[derive(Parser, Debug)]
#[command(name = "plscore", version)]
struct Args {
    /// fit | cv | bootstrap | stability | simulate
    command: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input CSV with a header row
    #[arg(long)]
    data: Option<String>,
    /// Response column name
    #[arg(long)]
    response: Option<String>,
    /// gaussian | binomial | poisson
    #[arg(long)]
    family: Option<String>,
    /// Number of components for fit and bootstrap
    #[arg(long)]
    ncomp: Option<String>,
    /// Largest number of components for cv and stability
    #[arg(long)]
    max_ncomp: Option<String>,
    /// Number of folds; equal to the row count for leave-one-out
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    repeats: Option<String>,
    /// cv_missclassed | q2_threshold | q2chi2_threshold | aic | bic | sig_pred
    #[arg(long)]
    rule: Option<String>,
    /// yt | yx
    #[arg(long)]
    scheme: Option<String>,
    /// Bootstrap resamples
    #[arg(long = "B")]
    resamples: Option<String>,
    /// percentile | basic | normal | bca
    #[arg(long)]
    ci: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Output directory
    #[arg(long)]
    out: Option<String>,
    /// Write SVG figures (true or false)
    #[arg(long)]
    figures: Option<String>,
    /// Rows to simulate
    #[arg(long)]
    n: Option<String>,
    /// Predictors to simulate
    #[arg(long)]
    p: Option<String>,
    /// Share of predictor cells to mask when simulating
    #[arg(long)]
    missing_frac: Option<String>,
    /// Worker threads
    #[arg(long)]
    threads: Option<String>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let flags: Vec<(String, String)> = [
        ("command", args.command),
        ("data", args.data),
        ("response", args.response),
        ("family", args.family),
        ("ncomp", args.ncomp),
        ("max_ncomp", args.max_ncomp),
        ("k", args.k),
        ("repeats", args.repeats),
        ("rule", args.rule),
        ("scheme", args.scheme),
        ("b", args.resamples),
        ("ci", args.ci),
        ("alpha", args.alpha),
        ("seed", args.seed),
        ("out", args.out),
        ("figures", args.figures),
        ("n", args.n),
        ("p", args.p),
        ("missing_frac", args.missing_frac),
        ("threads", args.threads),
    ]
    .into_iter()
    .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
    .collect();
    let code = plscore::cli::main_with(args.config.as_deref(), flags);
    ExitCode::from(code as u8)
}
