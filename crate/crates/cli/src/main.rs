// Copyright 2026 The ODP Authors
// SPDX-License-Identifier: Apache-2.0

//! `odp` command-line tool.
//!
//! Exit codes: 0 on success, 1 when a computation fails, 2 on usage or
//! input-parse errors.

use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use odp::erm::{noise_percentile, NoiseStatistic};
use odp::iterative::{
    comp_cutoff_table, nonopt_delta_with_cap, opt_delta_with_cap, OptDeltaSpec, OptDeltaSpecFile,
    DEFAULT_MAX_ITERATIONS,
};
use odp::ledger::{read_history, Budget, LedgerState};
use odp::mechanisms::{
    baseline_entry_scale, sparse_release_noise_study, split_svt_budget, SparseStudyConfig, SvtParams,
};
use odp::verify::StandardExperiment;

/// Published minimum composition lengths for ε = 0.1 and δ = 1e-5 … 1e-12.
const REFERENCE_CUTOFFS: [(f64, usize); 8] = [
    (1e-5, 17),
    (1e-6, 20),
    (1e-7, 24),
    (1e-8, 27),
    (1e-9, 31),
    (1e-10, 35),
    (1e-11, 38),
    (1e-12, 42),
];

#[derive(Debug, Parser)]
#[command(
    name = "odp",
    version,
    about = "Output differential privacy accounting and experiments"
)]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, env = "ODP_SEED", default_value_t = 0)]
    seed: u64,

    /// Write the result here instead of stdout, with a `.manifest.json` next to it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Expected per-entry release noise of sparse vector release, with and without reallocation.
    SvtNoise(SvtNoiseArgs),
    /// Percentile of the noise added to the test error of the tested logistic regression.
    ErmNoise(ErmNoiseArgs),
    /// Shortest homogeneous composition where advanced composition beats simple composition.
    CompCutoff(CompCutoffArgs),
    /// Optimal and level-wise delta of an iterative-mechanism spec file.
    Optdelta(OptdeltaArgs),
    /// Monte-Carlo check of a built-in mechanism's claimed guarantee.
    Verify(VerifyArgs),
    /// Ledger operations.
    Ledger {
        #[command(subcommand)]
        command: LedgerCommand,
    },
}

#[derive(Debug, Args, Serialize)]
struct SvtNoiseArgs {
    #[arg(long, default_value_t = 100)]
    entries: usize,
    /// Maximum number of above-threshold answers.
    #[arg(long, default_value_t = 20)]
    c: u32,
    /// Total epsilon, half for selection and half for release.
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
    #[arg(long, default_value_t = 500.0)]
    threshold: f64,
    #[arg(long, default_value_t = 1000.0)]
    large_value: f64,
    #[arg(long, default_value_t = 1.0)]
    sensitivity: f64,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
}

#[derive(Debug, Args, Serialize)]
struct ErmNoiseArgs {
    #[arg(long, value_delimiter = ',', default_value = "250,500,750,1000,1250,1500,1750,2000")]
    n_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.5,1")]
    eps2_list: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Fraction of records used for training.
    #[arg(long, default_value_t = 0.7)]
    train_frac: f64,
    #[arg(long, default_value_t = 0.95)]
    pct: f64,
    /// Report the percentile of |r| instead of r.
    #[arg(long)]
    abs: bool,
}

#[derive(Debug, Args, Serialize)]
struct CompCutoffArgs {
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "1e-5,1e-6,1e-7,1e-8,1e-9,1e-10,1e-11,1e-12"
    )]
    deltas: Vec<f64>,
}

#[derive(Debug, Args, Serialize)]
struct OptdeltaArgs {
    /// JSON file `{"stops":[..],"eps":[..],"delta":[..],"eps_targets":[..]}`.
    #[arg(long)]
    spec: PathBuf,
    /// Largest final stop accepted.
    #[arg(long, default_value_t = DEFAULT_MAX_ITERATIONS)]
    cap: usize,
}

#[derive(Debug, Args, Serialize)]
struct VerifyArgs {
    #[arg(long, value_parser = parse_experiment)]
    mechanism: StandardExperiment,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
}

#[derive(Debug, Subcommand)]
enum LedgerCommand {
    /// Re-charges an exported JSON-lines history against a budget.
    Replay(ReplayArgs),
}

#[derive(Debug, Args, Serialize)]
struct ReplayArgs {
    #[arg(long)]
    history: PathBuf,
    #[arg(long)]
    eps_total: f64,
    #[arg(long, default_value_t = 0.0)]
    delta_total: f64,
}

fn parse_experiment(s: &str) -> Result<StandardExperiment, String> {
    s.parse().map_err(|e: odp::Error| e.to_string())
}

#[derive(Debug)]
enum CliError {
    /// Malformed input files.
    Parse(String),
    Domain(odp::Error),
    Io(io::Error),
}

impl From<odp::Error> for CliError {
    fn from(e: odp::Error) -> Self {
        CliError::Domain(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Domain(_) | CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Parse(m) => write!(f, "parse error: {m}"),
            CliError::Domain(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

#[derive(Debug, Serialize)]
struct RunManifest {
    command: String,
    parameters: serde_json::Value,
    seed: u64,
    version: String,
    output: PathBuf,
}

/// Rendered result of a command.
struct Output {
    command: &'static str,
    parameters: serde_json::Value,
    body: Vec<u8>,
}

fn csv_body<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.into_error()))
}

fn json_body<T: Serialize>(value: &T) -> Vec<u8> {
    let mut body = serde_json::to_vec_pretty(value).expect("serializable");
    body.push(b'\n');
    body
}

#[derive(Serialize)]
struct SvtNoiseRow {
    n_large: usize,
    odp_expected_noise: f64,
    baseline_noise: f64,
    trials: usize,
    seed: u64,
    odp_std_error: f64,
    release_rate: f64,
}

fn svt_noise(args: &SvtNoiseArgs, seed: u64) -> Result<Vec<u8>, CliError> {
    let (eps1, eps2) = split_svt_budget(args.eps / 2.0, args.c)?;
    let cfg = SparseStudyConfig {
        n_entries: args.entries,
        large_value: args.large_value,
        small_value: 0.0,
        threshold: args.threshold,
        value_sensitivity: args.sensitivity,
        params: SvtParams::new(eps1, eps2, args.c, args.sensitivity)?,
        eps3: args.eps / 2.0,
    };
    let baseline = baseline_entry_scale(&cfg.params, cfg.eps3, cfg.value_sensitivity);
    let max_large = (args.c as usize).min(args.entries);
    let rows = (0..=max_large)
        .map(|n_large| {
            let r = sparse_release_noise_study(&cfg, n_large, args.trials, seed)?;
            Ok(SvtNoiseRow {
                n_large,
                odp_expected_noise: r.odp_expected_noise,
                baseline_noise: baseline,
                trials: r.trials,
                seed,
                odp_std_error: r.odp_std_error,
                release_rate: r.release_rate,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    csv_body(rows)
}

#[derive(Serialize)]
struct ErmNoiseRow {
    n: usize,
    eps2: f64,
    percentile: f64,
}

fn erm_noise(args: &ErmNoiseArgs) -> Result<Vec<u8>, CliError> {
    let stat = if args.abs {
        NoiseStatistic::Absolute
    } else {
        NoiseStatistic::Signed
    };
    let mut rows = Vec::new();
    for &eps2 in &args.eps2_list {
        for &n in &args.n_list {
            let percentile = noise_percentile(n, eps2, args.lambda, args.train_frac, args.pct, stat)?;
            rows.push(ErmNoiseRow { n, eps2, percentile });
        }
    }
    csv_body(rows)
}

fn comp_cutoff(args: &CompCutoffArgs) -> Result<Vec<u8>, CliError> {
    let rows = comp_cutoff_table(args.eps, &args.deltas)?;
    if (args.eps - 0.1).abs() < 1e-15 {
        let mut mismatched = false;
        for r in &rows {
            let reference = REFERENCE_CUTOFFS.iter().find(|(d, _)| (d / r.delta - 1.0).abs() < 1e-9);
            if let Some(&(_, expected)) = reference {
                if expected != r.iterations {
                    eprintln!(
                        "note: delta={:e}: computed {}, reference table {}",
                        r.delta, r.iterations, expected
                    );
                    mismatched = true;
                }
            }
        }
        if mismatched {
            eprintln!(
                "note: computed values are the smallest k >= 2 with opt_delta(k, eps, (k-2)eps) <= delta; \
                 the reference table is larger by exactly one throughout, consistent with a different \
                 counting convention for k (see README)"
            );
        }
    }
    csv_body(rows)
}

fn optdelta(args: &OptdeltaArgs) -> Result<Vec<u8>, CliError> {
    let text = fs::read_to_string(&args.spec)?;
    let file: OptDeltaSpecFile = serde_json::from_str(&text).map_err(|e| {
        CliError::Parse(format!(
            "{}: line {} column {}: {e}",
            args.spec.display(),
            e.line(),
            e.column()
        ))
    })?;
    let spec = OptDeltaSpec::try_from(file)?;
    let opt = opt_delta_with_cap(&spec, args.cap)?;
    let nonopt = nonopt_delta_with_cap(&spec, args.cap)?;
    Ok(json_body(&json!({ "opt_delta": opt, "nonopt_delta": nonopt })))
}

fn verify(args: &VerifyArgs, seed: u64) -> Result<Vec<u8>, CliError> {
    Ok(json_body(&args.mechanism.run(args.trials, seed)?))
}

fn ledger_replay(args: &ReplayArgs) -> Result<Vec<u8>, CliError> {
    let reader = BufReader::new(File::open(&args.history)?);
    let records = read_history(reader).map_err(|e| CliError::Parse(format!("{}: {e}", args.history.display())))?;
    let state = LedgerState::replay(Budget::new(args.eps_total, args.delta_total)?, &records)?;
    let (eps_remaining, delta_remaining) = state.remaining();
    Ok(json_body(&json!({
        "eps_remaining": eps_remaining,
        "delta_remaining": delta_remaining,
        "charges": state.history().len(),
    })))
}

fn params<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).unwrap_or(serde_json::Value::Null)
}

fn run(cli: &Cli) -> Result<Output, CliError> {
    let seed = cli.seed;
    Ok(match &cli.command {
        Command::SvtNoise(a) => Output {
            command: "svt-noise",
            parameters: params(a),
            body: svt_noise(a, seed)?,
        },
        Command::ErmNoise(a) => Output {
            command: "erm-noise",
            parameters: params(a),
            body: erm_noise(a)?,
        },
        Command::CompCutoff(a) => Output {
            command: "comp-cutoff",
            parameters: params(a),
            body: comp_cutoff(a)?,
        },
        Command::Optdelta(a) => Output {
            command: "optdelta",
            parameters: params(a),
            body: optdelta(a)?,
        },
        Command::Verify(a) => Output {
            command: "verify",
            parameters: json!({ "mechanism": a.mechanism, "trials": a.trials }),
            body: verify(a, seed)?,
        },
        Command::Ledger {
            command: LedgerCommand::Replay(a),
        } => Output {
            command: "ledger replay",
            parameters: params(a),
            body: ledger_replay(a)?,
        },
    })
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn emit(cli: &Cli, output: Output) -> Result<(), CliError> {
    match &cli.out {
        None => io::stdout().write_all(&output.body)?,
        Some(path) => {
            fs::write(path, &output.body)?;
            let manifest = RunManifest {
                command: output.command.to_string(),
                parameters: output.parameters,
                seed: cli.seed,
                version: env!("CARGO_PKG_VERSION").to_string(),
                output: path.clone(),
            };
            fs::write(manifest_path(path), json_body(&manifest))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli).and_then(|o| emit(&cli, o)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
