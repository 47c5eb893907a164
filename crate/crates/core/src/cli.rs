//! Command-line front end.
//!
//! A run is determined by a resolved experiment config assembled from flags
//! plus an optional JSON config file (flags win, unknown fields are
//! rejected with their field path). Every JSON report embeds the library
//! version and a SHA-256 hash of the resolved config, and identical configs
//! produce byte-identical outputs. Output-file locations (`--csv`, `--out`,
//! `--trace`) are not part of the config and do not affect the hash.

use crate::compress;
use crate::error::Error;
use crate::fermion::{enumerate_even, FermionMapping, MajoranaMonomial, MappingKind};
use crate::graph::kbody::kbody_fractional_coloring;
use crate::graph::misra_gries::misra_gries_one_body;
use crate::graph::nfs::gyarfas_color;
use crate::graph::{greedy_color, CommutationGraph, OperatorSet};
use crate::greens::{greens_derivative_exact, learn_greens_derivative, SparseHamiltonian};
use crate::pauli::{enumerate_all, enumerate_local, PauliOp};
use crate::protocols::{
    learn_all_paulis, learn_fermionic, learn_two_copy_template, Engine, EstimationReport, Targets,
};
use crate::rng::Streams;
use crate::selftest::run_criteria;
use crate::sim::{self, QuantumState};
use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "shadowtomo", version = crate::VERSION)]
/// Shadow tomography of Pauli and fermionic observables.
struct Cli {
    /// JSON config file; explicit flags override its fields.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an estimation pipeline and report every target expectation.
    Learn(LearnArgs),
    /// Color a stored operator list and audit the result.
    Color(ColorArgs),
    /// Run the two-copy pipeline with raw-sample recording and archive it.
    Compress(CompressArgs),
    /// Answer a single Pauli query from a compressed archive.
    Query(QueryArgs),
    /// Estimate or exactly compute Green's function derivative matrices.
    Greens(GreensArgs),
    /// Run seeded pipeline trials across a size range and tabulate ledgers.
    Bench(BenchArgs),
    /// Run the acceptance suite and print its pass/fail table.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct LearnArgs {
    /// One of local-pauli, fermionic, all-pauli.
    #[arg(long)]
    task: Option<String>,
    /// Qubit count (Pauli tasks).
    #[arg(long)]
    n: Option<usize>,
    /// Locality (local-pauli) or monomial half-degree (fermionic).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// State file or generator spec; defaults to a seeded Haar state.
    #[arg(long)]
    state: Option<String>,
    /// Fermion-to-qubit mapping, ternary or jw.
    #[arg(long)]
    mapping: Option<String>,
    #[arg(long = "n-modes")]
    n_modes: Option<usize>,
    /// Single-copy coloring engine for local-pauli runs.
    #[arg(long)]
    engine: Option<String>,
    /// Compare against dense exact values and report errors.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    oracle: Option<bool>,
    /// Write the mimicking-state iteration trace as JSONL (all-pauli only).
    #[arg(long, value_name = "FILE")]
    trace: Option<PathBuf>,
    /// Write the estimates table as CSV.
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ColorArgs {
    /// Operator list, one encoded operator per line.
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
    /// One of greedy, gyarfas, misra-gries, kbody.
    #[arg(long)]
    engine: Option<String>,
    /// Seed for fractional-coloring sampling.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of independent sets to sample for kbody statistics.
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long = "n-modes")]
    n_modes: Option<usize>,
}

#[derive(Args)]
struct CompressArgs {
    /// One of local-pauli, fermionic.
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long = "n-modes")]
    n_modes: Option<usize>,
    #[arg(long)]
    mapping: Option<String>,
    #[arg(long)]
    engine: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    state: Option<String>,
    /// Destination for the compressed archive.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct QueryArgs {
    /// Compressed archive written by `compress`.
    #[arg(long, value_name = "FILE")]
    data: Option<PathBuf>,
    /// Pauli string to query, e.g. XIZ or -YY.
    #[arg(long, allow_hyphen_values = true)]
    pauli: Option<String>,
}

#[derive(Args)]
struct GreensArgs {
    /// Hamiltonian file, one `G[a,b,...]*coeff` term per line.
    #[arg(long, value_name = "FILE")]
    hamiltonian: Option<PathBuf>,
    #[arg(long = "n-modes")]
    n_modes: Option<usize>,
    /// Derivative order.
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    state: Option<String>,
    #[arg(long)]
    mapping: Option<String>,
    /// Skip sampling and emit the dense exact matrix.
    #[arg(long = "exact-only", num_args = 0..=1, default_missing_value = "true")]
    exact_only: Option<bool>,
    /// Also compute the dense exact matrix and report the worst entry error.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    oracle: Option<bool>,
    /// Write the matrix as CSV (a, b, real, imag).
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// One of fermionic, all-pauli.
    #[arg(long)]
    task: Option<String>,
    /// Size range for all-pauli, e.g. 2..4 or 2,3,4.
    #[arg(long)]
    n: Option<String>,
    /// Size range for fermionic, e.g. 4..8 or 4,6,8.
    #[arg(long = "n-modes")]
    n_modes: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    mapping: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Trials per size.
    #[arg(long)]
    trials: Option<usize>,
    /// Write the ledger table as CSV.
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SelftestArgs {
    /// Comma-separated criterion numbers; default runs all eleven.
    #[arg(long)]
    only: Option<String>,
}

enum CliError {
    Usage(String),
    Failure(String),
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Failure(format!("serialization: {e}"))
    }
}

type CmdResult = Result<u8, CliError>;

/// Parse arguments, dispatch, and return the process exit code: 0 on
/// success, 1 on execution or invariant-audit failure, 2 on usage errors.
pub fn run() -> u8 {
    let cli = Cli::parse();
    let file = match FileConfig::load(cli.config.as_deref()) {
        Ok(f) => f,
        Err(e) => return report_error(e),
    };
    let result = match cli.command {
        Command::Learn(a) => cmd_learn(a, &file),
        Command::Color(a) => cmd_color(a, &file),
        Command::Compress(a) => cmd_compress(a, &file),
        Command::Query(a) => cmd_query(a, &file),
        Command::Greens(a) => cmd_greens(a, &file),
        Command::Bench(a) => cmd_bench(a, &file),
        Command::Selftest(a) => cmd_selftest(a, &file),
    };
    result.unwrap_or_else(report_error)
}

fn report_error(e: CliError) -> u8 {
    match e {
        CliError::Usage(msg) => {
            eprintln!("usage error: {msg}");
            2
        }
        CliError::Failure(msg) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

/// Parsed JSON config file, empty when none was given.
struct FileConfig {
    map: Map<String, Value>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig { map: Map::new() });
        };
        let text = fs::read_to_string(path)
            .map_err(|e| usage(format!("config file {}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| usage(format!("config file {}: {e}", path.display())))?;
        match value {
            Value::Object(map) => Ok(FileConfig { map }),
            _ => Err(usage(format!(
                "config file {}: expected a JSON object",
                path.display()
            ))),
        }
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<(), CliError> {
        for key in self.map.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(usage(format!(
                    "unknown config field `{key}` (expected one of: {})",
                    allowed.join(", ")
                )));
            }
        }
        Ok(())
    }

    fn get<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| usage(format!("config field `{key}`: {e}"))),
        }
    }
}

fn require<T>(flag: Option<T>, file: Option<T>, key: &str) -> Result<T, CliError> {
    flag.or(file).ok_or_else(|| {
        usage(format!(
            "missing `{key}`: pass --{key} or set \"{key}\" in the config file"
        ))
    })
}

/// Wrap a report in the standard envelope and return it with the hash of
/// the resolved config it embeds.
fn envelope(config: &impl Serialize, report: Value) -> Result<(Value, String), CliError> {
    let config = serde_json::to_value(config)?;
    let hash = hex_digest(config.to_string().as_bytes());
    let env = json!({
        "version": crate::VERSION,
        "config_hash": hash,
        "config": config,
        "report": report,
    });
    Ok((env, hash))
}

fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

fn emit(env: &Value) -> Result<(), CliError> {
    println!("{}", serde_json::to_string_pretty(env)?);
    Ok(())
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::Failure(format!("writing {}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Failure(format!("reading {}: {e}", path.display())))
}

fn csv_header(hash: &str) -> String {
    format!("# version={} config_hash={hash}\n", crate::VERSION)
}

/// Interpret a `--state` value: an existing file is parsed as a state file,
/// anything else as a generator spec.
fn resolve_state(spec: &str, n: usize) -> Result<QuantumState, CliError> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = read_text(path)?;
        Ok(sim::parse_state_text(&text, Some(n))?)
    } else {
        Ok(sim::state_from_generator(spec, Some(n))?)
    }
}

/// Inclusive size list: `a..b`, `a..=b`, `a,b,c`, or a single integer.
fn parse_sizes(text: &str, key: &str) -> Result<Vec<usize>, CliError> {
    let bad = |detail: &str| usage(format!("`{key}`: {detail} (got {text:?})"));
    let parse_one = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| bad("expected an integer"))
    };
    let sizes = if let Some((lo, hi)) = text.split_once("..") {
        let lo = parse_one(lo)?;
        let hi = parse_one(hi.strip_prefix('=').unwrap_or(hi))?;
        if lo > hi {
            return Err(bad("empty range"));
        }
        (lo..=hi).collect()
    } else if text.contains(',') {
        text.split(',').map(parse_one).collect::<Result<_, _>>()?
    } else {
        vec![parse_one(text)?]
    };
    Ok(sizes)
}

// ---------------------------------------------------------------- learn --

#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct LearnConfig {
    task: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_modes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mapping: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    engine: Option<String>,
    epsilon: f64,
    seed: u64,
    state: String,
    oracle: bool,
}

struct LearnOutput {
    config: LearnConfig,
    estimation: EstimationReport,
    ops: Vec<PauliOp>,
    rho: QuantumState,
    stage2: Option<Value>,
    mmw: Option<Value>,
    trace: Option<String>,
}

const LEARN_KEYS: &[&str] = &[
    "task", "n", "k", "n-modes", "mapping", "engine", "epsilon", "seed", "state", "oracle",
];

fn cmd_learn(mut args: LearnArgs, file: &FileConfig) -> CmdResult {
    file.check_keys(LEARN_KEYS)?;
    let csv = args.csv.take();
    let trace = args.trace.take();
    let out = run_learn(args, file, trace.is_some())?;
    finish_learn(out, csv, trace)
}

fn run_learn(
    args: LearnArgs,
    file: &FileConfig,
    want_trace: bool,
) -> Result<LearnOutput, CliError> {
    let task: String = require(args.task, file.get("task")?, "task")?;
    let epsilon = require(args.epsilon, file.get("epsilon")?, "epsilon")?;
    let seed = require(args.seed, file.get("seed")?, "seed")?;
    let oracle = args.oracle.or(file.get("oracle")?).unwrap_or(false);
    let state_opt: Option<String> = args.state.or(file.get("state")?);
    let state_spec = state_opt.unwrap_or_else(|| format!("haar_random seed={seed}"));
    let streams = Streams::new(seed);

    match task.as_str() {
        "all-pauli" => {
            let n = require(args.n, file.get("n")?, "n")?;
            let rho = resolve_state(&state_spec, n)?;
            let run = learn_all_paulis(&rho, epsilon, &streams)?;
            let trace = want_trace.then(|| mmw_trace(&run.mmw_steps));
            Ok(LearnOutput {
                config: LearnConfig {
                    task,
                    n: Some(n),
                    k: None,
                    n_modes: None,
                    mapping: None,
                    engine: None,
                    epsilon,
                    seed,
                    state: state_spec,
                    oracle,
                },
                ops: enumerate_all(n)?,
                rho,
                stage2: None,
                mmw: Some(json!({
                    "iterations": run.mmw_iterations,
                    "early_exit": run.mmw_early_exit,
                })),
                trace,
                estimation: run.report,
            })
        }
        "local-pauli" => {
            let n = require(args.n, file.get("n")?, "n")?;
            let k = require(args.k, file.get("k")?, "k")?;
            let engine_name: String = args
                .engine
                .or(file.get("engine")?)
                .unwrap_or_else(|| "greedy".to_string());
            let engine = Engine::parse(&engine_name).map_err(|e| usage(e.to_string()))?;
            let targets = Targets::paulis(enumerate_local(n, k)?)?;
            let rho = resolve_state(&state_spec, n)?;
            let artifacts =
                learn_two_copy_template(&rho, &targets, engine, epsilon, &streams, false)?;
            Ok(LearnOutput {
                config: LearnConfig {
                    task,
                    n: Some(n),
                    k: Some(k),
                    n_modes: None,
                    mapping: None,
                    engine: Some(engine_name),
                    epsilon,
                    seed,
                    state: state_spec,
                    oracle,
                },
                ops: artifacts.targets.ops().to_vec(),
                rho,
                stage2: stage2_summary(&artifacts.stage2),
                mmw: None,
                trace: None,
                estimation: artifacts.report,
            })
        }
        "fermionic" => {
            let n_modes = require(args.n_modes, file.get("n-modes")?, "n-modes")?;
            let k = args.k.or(file.get("k")?).unwrap_or(1);
            let mapping_name: String = args
                .mapping
                .or(file.get("mapping")?)
                .unwrap_or_else(|| "jw".to_string());
            let kind = MappingKind::parse(&mapping_name).map_err(|e| usage(e.to_string()))?;
            let mapping = FermionMapping::new(kind, n_modes)?;
            let rho = resolve_state(&state_spec, mapping.n_qubits)?;
            let artifacts = learn_fermionic(&rho, &mapping, k, epsilon, &streams)?;
            Ok(LearnOutput {
                config: LearnConfig {
                    task,
                    n: None,
                    k: Some(k),
                    n_modes: Some(n_modes),
                    mapping: Some(mapping_name),
                    engine: None,
                    epsilon,
                    seed,
                    state: state_spec,
                    oracle,
                },
                ops: artifacts.targets.ops().to_vec(),
                rho,
                stage2: stage2_summary(&artifacts.stage2),
                mmw: None,
                trace: None,
                estimation: artifacts.report,
            })
        }
        other => Err(usage(format!(
            "unknown task {other:?}; expected local-pauli, fermionic or all-pauli"
        ))),
    }
}

fn finish_learn(out: LearnOutput, csv: Option<PathBuf>, trace: Option<PathBuf>) -> CmdResult {
    let exacts = if out.config.oracle {
        Some(
            out.ops
                .iter()
                .map(|op| out.rho.expectation(op))
                .collect::<crate::Result<Vec<f64>>>()?,
        )
    } else {
        None
    };
    let mut report = json!({
        "task": out.config.task,
        "estimation": out.estimation,
    });
    if let Some(stage2) = &out.stage2 {
        report["stage2"] = stage2.clone();
    }
    if let Some(mmw) = &out.mmw {
        report["mmw"] = mmw.clone();
    }
    if let Some(exacts) = &exacts {
        let max_error = out
            .estimation
            .estimates
            .iter()
            .zip(exacts)
            .map(|(est, ex)| (est - ex).abs())
            .fold(0.0f64, f64::max);
        report["oracle"] = json!({ "max_error": max_error });
    }
    let (env, hash) = envelope(&out.config, report)?;
    if let Some(path) = &csv {
        let mut table = csv_header(&hash);
        if let Some(exacts) = &exacts {
            table.push_str("operator,estimate,exact_value,error\n");
            for ((op, est), ex) in out.ops.iter().zip(&out.estimation.estimates).zip(exacts) {
                let _ = writeln!(table, "{op},{est},{ex},{}", est - ex);
            }
        } else {
            table.push_str("operator,estimate\n");
            for (op, est) in out.ops.iter().zip(&out.estimation.estimates) {
                let _ = writeln!(table, "{op},{est}");
            }
        }
        write_file(path, table)?;
    }
    if let (Some(path), Some(lines)) = (&trace, &out.trace) {
        write_file(path, lines)?;
    }
    emit(&env)?;
    let audits: Vec<&String> = out
        .estimation
        .notes
        .iter()
        .filter(|n| !n.starts_with("ambiguous sign"))
        .collect();
    if !audits.is_empty() {
        for note in audits {
            eprintln!("invariant audit failed: {note}");
        }
        return Ok(1);
    }
    Ok(0)
}

fn stage2_summary(stage2: &Option<crate::protocols::FractionalReport>) -> Option<Value> {
    stage2.as_ref().map(|s| {
        json!({
            "size_chi": s.size_chi,
            "batches": s.data.batches,
            "per_batch": s.data.per_batch,
            "copies_used": s.data.copies_used,
        })
    })
}

fn mmw_trace(steps: &[crate::mmw::MmwStep]) -> String {
    let mut out = String::new();
    for s in steps {
        let line = json!({
            "t": s.t,
            "chosen_pauli": s.pauli.to_string(),
            "r_P": s.r,
            "sign_factor": s.sign_factor,
            "regret_partial": s.regret_partial,
        });
        let _ = writeln!(out, "{line}");
    }
    out
}

// ---------------------------------------------------------------- color --

#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct ColorConfig {
    engine: String,
    input: String,
    input_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_modes: Option<usize>,
    seed: u64,
    samples: u64,
}

enum OperatorFile {
    Paulis(Vec<PauliOp>),
    Monomials {
        n_modes: usize,
        monomials: Vec<MajoranaMonomial>,
    },
}

fn parse_operator_file(text: &str, n_modes: Option<usize>) -> Result<OperatorFile, CliError> {
    let lines: Vec<&str> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect();
    if lines.is_empty() {
        return Err(usage("operator file has no operators".to_string()));
    }
    if lines[0].starts_with("G[") || lines[0].starts_with("g[") {
        let n_modes = match n_modes {
            Some(m) => m,
            None => infer_modes(&lines)?,
        };
        let monomials = lines
            .iter()
            .map(|l| MajoranaMonomial::parse(l, n_modes))
            .collect::<crate::Result<Vec<_>>>()?;
        Ok(OperatorFile::Monomials { n_modes, monomials })
    } else {
        let paulis = lines
            .iter()
            .map(|l| PauliOp::parse(l))
            .collect::<crate::Result<Vec<_>>>()?;
        Ok(OperatorFile::Paulis(paulis))
    }
}

/// Smallest mode count covering every generator index mentioned in
/// `G[...]` terms.
fn infer_modes(lines: &[&str]) -> Result<usize, CliError> {
    let mut max_index = 0usize;
    for line in lines {
        let Some(open) = line.find('[') else { continue };
        let Some(close) = line[open..].find(']') else {
            continue;
        };
        for part in line[open + 1..open + close].split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let idx: usize = part
                .parse()
                .map_err(|_| usage(format!("bad generator index {part:?} in {line:?}")))?;
            max_index = max_index.max(idx);
        }
    }
    if max_index == 0 {
        return Err(usage(
            "could not infer the mode count; pass --n-modes".to_string(),
        ));
    }
    Ok(max_index.div_ceil(2))
}

const COLOR_KEYS: &[&str] = &["input", "engine", "seed", "samples", "n-modes"];

fn cmd_color(args: ColorArgs, file: &FileConfig) -> CmdResult {
    file.check_keys(COLOR_KEYS)?;
    let input: PathBuf = require(args.input, file.get("input")?, "input")?;
    let engine_name: String = require(args.engine, file.get("engine")?, "engine")?;
    let engine = Engine::parse(&engine_name).map_err(|e| usage(e.to_string()))?;
    let seed = args.seed.or(file.get("seed")?).unwrap_or(0);
    let samples = args.samples.or(file.get("samples")?).unwrap_or(1000);
    let n_modes_flag = args.n_modes.or(file.get("n-modes")?);
    let text = read_text(&input)?;
    let parsed = parse_operator_file(&text, n_modes_flag)?;

    let (set, n_modes, supports) = match &parsed {
        OperatorFile::Paulis(ops) => (OperatorSet::from_paulis(ops.clone())?, None, None),
        OperatorFile::Monomials { n_modes, monomials } => {
            let supports: Vec<u128> = monomials.iter().map(|m| m.support).collect();
            (
                OperatorSet::from_monomials(*n_modes, monomials)?,
                Some(*n_modes),
                Some(supports),
            )
        }
    };
    let num_operators = set.len();
    let graph = CommutationGraph::build(set)?;

    let config = ColorConfig {
        engine: engine_name.clone(),
        input: input.display().to_string(),
        input_sha256: hex_digest(text.as_bytes()),
        n_modes,
        seed,
        samples,
    };

    let (report, proper) = match engine {
        Engine::Greedy | Engine::Gyarfas => {
            let coloring = if engine == Engine::Greedy {
                greedy_color(graph.adjacency())
            } else {
                gyarfas_color(graph.adjacency())
            };
            let proper = coloring.is_proper(graph.adjacency());
            (
                json!({
                    "engine": engine_name,
                    "num_operators": num_operators,
                    "num_colors": coloring.num_colors,
                    "colors": coloring.colors,
                    "properness_checked": true,
                }),
                proper,
            )
        }
        Engine::MisraGries => {
            let supports = supports.as_ref().ok_or_else(|| {
                usage("engine misra-gries needs Majorana monomial input".to_string())
            })?;
            let coloring = misra_gries_one_body(n_modes.unwrap(), supports)?;
            let proper = coloring.is_proper(graph.adjacency());
            (
                json!({
                    "engine": engine_name,
                    "num_operators": num_operators,
                    "num_colors": coloring.num_colors,
                    "colors": coloring.colors,
                    "properness_checked": true,
                }),
                proper,
            )
        }
        Engine::Kbody => {
            let supports = supports
                .as_ref()
                .ok_or_else(|| usage("engine kbody needs Majorana monomial input".to_string()))?;
            let fc = kbody_fractional_coloring(n_modes.unwrap(), supports)?;
            let mut stream = Streams::new(seed).stream("color.samples");
            let mut proper = true;
            let (mut min_size, mut max_size, mut total) = (usize::MAX, 0usize, 0u64);
            for _ in 0..samples {
                let set = fc.sample(&mut stream);
                for (i, &u) in set.iter().enumerate() {
                    for &v in set.iter().skip(i + 1) {
                        proper &= !graph.adjacency().adjacent(u, v);
                    }
                }
                min_size = min_size.min(set.len());
                max_size = max_size.max(set.len());
                total += set.len() as u64;
            }
            (
                json!({
                    "engine": engine_name,
                    "num_operators": num_operators,
                    "size_chi": fc.size_chi(),
                    "sample_stats": {
                        "samples": samples,
                        "mean_set_size": total as f64 / samples as f64,
                        "min_set_size": min_size,
                        "max_set_size": max_size,
                    },
                    "properness_checked": true,
                }),
                proper,
            )
        }
    };

    let (env, _) = envelope(&config, report)?;
    emit(&env)?;
    if !proper {
        eprintln!("invariant audit failed: coloring is not proper");
        return Ok(1);
    }
    Ok(0)
}

// ------------------------------------------------------------- compress --

const COMPRESS_KEYS: &[&str] = &[
    "task", "n", "k", "n-modes", "mapping", "engine", "epsilon", "seed", "state",
];

fn cmd_compress(args: CompressArgs, file: &FileConfig) -> CmdResult {
    file.check_keys(COMPRESS_KEYS)?;
    let out = args
        .out
        .ok_or_else(|| usage("missing `out`: pass --out".to_string()))?;
    let task: String = args
        .task
        .or(file.get("task")?)
        .unwrap_or_else(|| "local-pauli".to_string());
    let epsilon = require(args.epsilon, file.get("epsilon")?, "epsilon")?;
    let seed = require(args.seed, file.get("seed")?, "seed")?;
    let state_opt: Option<String> = args.state.or(file.get("state")?);
    let state_spec = state_opt.unwrap_or_else(|| format!("haar_random seed={seed}"));
    let streams = Streams::new(seed);

    let (config, targets, rho, engine) = match task.as_str() {
        "local-pauli" => {
            let n = require(args.n, file.get("n")?, "n")?;
            let k = require(args.k, file.get("k")?, "k")?;
            let engine_name: String = args
                .engine
                .or(file.get("engine")?)
                .unwrap_or_else(|| "greedy".to_string());
            let engine = Engine::parse(&engine_name).map_err(|e| usage(e.to_string()))?;
            let targets = Targets::paulis(enumerate_local(n, k)?)?;
            let rho = resolve_state(&state_spec, n)?;
            let config = LearnConfig {
                task,
                n: Some(n),
                k: Some(k),
                n_modes: None,
                mapping: None,
                engine: Some(engine_name),
                epsilon,
                seed,
                state: state_spec,
                oracle: false,
            };
            (config, targets, rho, engine)
        }
        "fermionic" => {
            let n_modes = require(args.n_modes, file.get("n-modes")?, "n-modes")?;
            let k = args.k.or(file.get("k")?).unwrap_or(1);
            let mapping_name: String = args
                .mapping
                .or(file.get("mapping")?)
                .unwrap_or_else(|| "jw".to_string());
            let kind = MappingKind::parse(&mapping_name).map_err(|e| usage(e.to_string()))?;
            let mapping = FermionMapping::new(kind, n_modes)?;
            let engine = match args.engine.or(file.get::<String>("engine")?) {
                Some(name) => Engine::parse(&name).map_err(|e| usage(e.to_string()))?,
                None if k == 1 => Engine::MisraGries,
                None => Engine::Kbody,
            };
            let monomials = enumerate_even(n_modes, k)?;
            let targets = Targets::fermionic(&mapping, &monomials)?;
            let rho = resolve_state(&state_spec, mapping.n_qubits)?;
            let config = LearnConfig {
                task,
                n: None,
                k: Some(k),
                n_modes: Some(n_modes),
                mapping: Some(mapping_name),
                engine: None,
                epsilon,
                seed,
                state: state_spec,
                oracle: false,
            };
            (config, targets, rho, engine)
        }
        other => {
            return Err(usage(format!(
                "unknown task {other:?}; expected local-pauli or fermionic"
            )))
        }
    };

    let artifacts = learn_two_copy_template(&rho, &targets, engine, epsilon, &streams, true)?;
    let rep = compress::compress(&artifacts)?;
    let bytes = compress::serialize(&rep);
    write_file(&out, &bytes)?;
    let report = json!({
        "bytes": bytes.len(),
        "payload_sha256": hex_digest(&bytes),
        "predicted_bits": compress::predicted_bits(rep.n, rep.bell.len(), rep.records.len()),
        "num_targets": rep.targets.len(),
        "bell_samples": rep.bell.len(),
        "basis_records": rep.records.len(),
    });
    let (env, _) = envelope(&config, report)?;
    emit(&env)?;
    Ok(0)
}

// ---------------------------------------------------------------- query --

#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct QueryConfig {
    data: String,
    data_sha256: String,
    pauli: String,
}

fn cmd_query(args: QueryArgs, file: &FileConfig) -> CmdResult {
    file.check_keys(&["data", "pauli"])?;
    let data: PathBuf = require(args.data, file.get("data")?, "data")?;
    let pauli: String = require(args.pauli, file.get("pauli")?, "pauli")?;
    let bytes = fs::read(&data)
        .map_err(|e| CliError::Failure(format!("reading {}: {e}", data.display())))?;
    let rep = compress::deserialize(&bytes)?;
    let op = PauliOp::parse(&pauli).map_err(|e| usage(e.to_string()))?;
    let answer = compress::query(&rep, &op)?;
    let config = QueryConfig {
        data: data.display().to_string(),
        data_sha256: hex_digest(&bytes),
        pauli,
    };
    let (env, _) = envelope(&config, serde_json::to_value(answer)?)?;
    emit(&env)?;
    Ok(0)
}

// --------------------------------------------------------------- greens --

#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct GreensConfig {
    hamiltonian: String,
    hamiltonian_sha256: String,
    n_modes: usize,
    q: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    state: String,
    mapping: String,
    exact_only: bool,
    oracle: bool,
}

const GREENS_KEYS: &[&str] = &[
    "hamiltonian",
    "n-modes",
    "q",
    "epsilon",
    "seed",
    "state",
    "mapping",
    "exact-only",
    "oracle",
];

fn cmd_greens(args: GreensArgs, file: &FileConfig) -> CmdResult {
    file.check_keys(GREENS_KEYS)?;
    let ham_path: PathBuf = require(args.hamiltonian, file.get("hamiltonian")?, "hamiltonian")?;
    let text = read_text(&ham_path)?;
    let n_modes = match args.n_modes.or(file.get("n-modes")?) {
        Some(m) => m,
        None => infer_modes(&text.lines().collect::<Vec<_>>())?,
    };
    let h = SparseHamiltonian::parse(&text, n_modes)?;
    let q = require(args.q, file.get("q")?, "q")?;
    let exact_only = args.exact_only.or(file.get("exact-only")?).unwrap_or(false);
    let oracle = args.oracle.or(file.get("oracle")?).unwrap_or(false);
    let mapping_name: String = args
        .mapping
        .or(file.get("mapping")?)
        .unwrap_or_else(|| "jw".to_string());
    let kind = MappingKind::parse(&mapping_name).map_err(|e| usage(e.to_string()))?;
    let mapping = FermionMapping::new(kind, n_modes)?;
    let state_spec: String = args
        .state
        .or(file.get("state")?)
        .unwrap_or_else(|| "ghz".to_string());
    let rho = resolve_state(&state_spec, mapping.n_qubits)?;

    let epsilon: Option<f64> = args.epsilon.or(file.get("epsilon")?);
    let seed: Option<u64> = args.seed.or(file.get("seed")?);
    let config = GreensConfig {
        hamiltonian: ham_path.display().to_string(),
        hamiltonian_sha256: hex_digest(text.as_bytes()),
        n_modes,
        q,
        epsilon: if exact_only { None } else { epsilon },
        seed: if exact_only { None } else { seed },
        state: state_spec,
        mapping: mapping_name,
        exact_only,
        oracle,
    };

    let mut audit_failures: Vec<String> = Vec::new();
    let (matrix, audit) = if exact_only {
        (greens_derivative_exact(&rho, &h, q, &mapping)?, Value::Null)
    } else {
        let epsilon = require(epsilon, None, "epsilon")?;
        let seed = require(seed, None, "seed")?;
        let learned = learn_greens_derivative(&rho, &h, q, epsilon, &mapping, &Streams::new(seed))?;
        if learned.b_bound_ok == Some(false) {
            audit_failures.push("per-monomial record counts broke their bound".to_string());
        }
        if let (Some(colors), Some(bound)) = (learned.colors_used, learned.color_bound) {
            if f64::from(colors) > bound {
                audit_failures.push(format!(
                    "{colors} colors exceeds the structural bound {bound}"
                ));
            }
        }
        let budget =
            |x: f64| (2.0 * (h.s * h.k * q) as f64).powi(5 * q as i32) * x.ln() / epsilon.powi(4);
        let audit = json!({
            "per_term_epsilon": learned.per_term_epsilon,
            "num_targets": learned.num_targets,
            "colors_used": learned.colors_used,
            "color_bound": learned.color_bound,
            "b_bound_ok": learned.b_bound_ok,
            "total_copies": learned.total_copies,
            "sample_budget": {
                "log_targets": budget(learned.num_targets.max(2) as f64),
                "log_modes": budget((2 * n_modes).max(2) as f64),
            },
        });
        (learned.matrix, audit)
    };

    let mut report = json!({
        "n_modes": n_modes,
        "q": q,
        "k": h.k,
        "s": h.s,
        "diagonal_constant": matrix.diagonal_constant,
        "matrix": {
            "real": matrix_rows(&matrix.real),
            "imag": matrix_rows(&matrix.imag),
        },
        "audit": audit,
    });
    if oracle && !exact_only {
        let exact = greens_derivative_exact(&rho, &h, q, &mapping)?;
        let d = 2 * n_modes;
        let mut max_error = 0.0f64;
        for a in 0..d {
            for b in 0..d {
                max_error = max_error
                    .max((matrix.real[(a, b)] - exact.real[(a, b)]).abs())
                    .max((matrix.imag[(a, b)] - exact.imag[(a, b)]).abs());
            }
        }
        report["oracle"] = json!({ "max_error": max_error });
    }

    let (env, hash) = envelope(&config, report)?;
    if let Some(path) = &args.csv {
        let mut table = csv_header(&hash);
        table.push_str("a,b,real,imag\n");
        let d = 2 * n_modes;
        for a in 0..d {
            for b in 0..d {
                let _ = writeln!(
                    table,
                    "{},{},{},{}",
                    a + 1,
                    b + 1,
                    matrix.real[(a, b)],
                    matrix.imag[(a, b)]
                );
            }
        }
        write_file(path, table)?;
    }
    emit(&env)?;
    if !audit_failures.is_empty() {
        for failure in audit_failures {
            eprintln!("invariant audit failed: {failure}");
        }
        return Ok(1);
    }
    Ok(0)
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

// ---------------------------------------------------------------- bench --

#[derive(Serialize)]
#[serde(rename_all = "kebab-case")]
struct BenchConfig {
    task: String,
    sizes: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mapping: Option<String>,
    epsilon: f64,
    seed: u64,
    trials: usize,
}

const BENCH_KEYS: &[&str] = &[
    "task", "n", "n-modes", "k", "mapping", "epsilon", "seed", "trials",
];

fn cmd_bench(args: BenchArgs, file: &FileConfig) -> CmdResult {
    file.check_keys(BENCH_KEYS)?;
    let task: String = require(args.task, file.get("task")?, "task")?;
    let epsilon = require(args.epsilon, file.get("epsilon")?, "epsilon")?;
    let seed = args.seed.or(file.get("seed")?).unwrap_or(0);
    let trials = args.trials.or(file.get("trials")?).unwrap_or(3);
    if trials == 0 {
        return Err(usage("`trials` must be at least 1".to_string()));
    }

    enum Job {
        Fermionic { kind: MappingKind, k: usize },
        AllPauli,
    }
    let (sizes, job, k, mapping_name) = match task.as_str() {
        "fermionic" => {
            let range: String = require(args.n_modes, file.get("n-modes")?, "n-modes")?;
            let sizes = parse_sizes(&range, "n-modes")?;
            let k = args.k.or(file.get("k")?).unwrap_or(1);
            let mapping_name: String = args
                .mapping
                .or(file.get("mapping")?)
                .unwrap_or_else(|| "jw".to_string());
            let kind = MappingKind::parse(&mapping_name).map_err(|e| usage(e.to_string()))?;
            (
                sizes,
                Job::Fermionic { kind, k },
                Some(k),
                Some(mapping_name),
            )
        }
        "all-pauli" => {
            let range: String = require(args.n, file.get("n")?, "n")?;
            (parse_sizes(&range, "n")?, Job::AllPauli, None, None)
        }
        other => {
            return Err(usage(format!(
                "unknown task {other:?}; expected fermionic or all-pauli"
            )))
        }
    };

    let jobs: Vec<(usize, usize)> = sizes
        .iter()
        .flat_map(|&size| (0..trials).map(move |t| (size, t)))
        .collect();
    // Streams are pre-assigned per (size, trial), so the parallel schedule
    // cannot change any result.
    let reports: Vec<crate::Result<EstimationReport>> = jobs
        .par_iter()
        .map(|&(size, trial)| {
            let streams = Streams::new(seed).child("bench", ((size as u64) << 32) | trial as u64);
            match &job {
                Job::Fermionic { kind, k } => {
                    let mapping = FermionMapping::new(*kind, size)?;
                    let rho = sim::random_product(mapping.n_qubits, &mut streams.stream("state"))?;
                    learn_fermionic(&rho, &mapping, *k, epsilon, &streams).map(|a| a.report)
                }
                Job::AllPauli => {
                    let rho = sim::haar_random(size, &mut streams.stream("state"))?;
                    learn_all_paulis(&rho, epsilon, &streams).map(|r| r.report)
                }
            }
        })
        .collect();

    let config = BenchConfig {
        task: task.clone(),
        sizes,
        k,
        mapping: mapping_name,
        epsilon,
        seed,
        trials,
    };
    let mut runs = Vec::new();
    let mut rows = String::from("task,size,trial,stage,copies\n");
    for (&(size, trial), report) in jobs.iter().zip(reports) {
        let report = report?;
        for stage in &report.stages {
            let _ = writeln!(
                rows,
                "{task},{size},{trial},{},{}",
                stage.stage, stage.copies
            );
        }
        let _ = writeln!(rows, "{task},{size},{trial},total,{}", report.total_copies);
        runs.push(json!({
            "size": size,
            "trial": trial,
            "stages": report.stages,
            "total_copies": report.total_copies,
        }));
    }
    let (env, hash) = envelope(&config, json!({ "runs": runs }))?;
    if let Some(path) = &args.csv {
        write_file(path, format!("{}{rows}", csv_header(&hash)))?;
    }
    emit(&env)?;
    Ok(0)
}

// ------------------------------------------------------------- selftest --

fn cmd_selftest(args: SelftestArgs, file: &FileConfig) -> CmdResult {
    file.check_keys(&["only"])?;
    let only_spec: Option<String> = args.only.or(file.get("only")?);
    let only: Vec<usize> = match &only_spec {
        None => Vec::new(),
        Some(spec) => spec
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| usage(format!("`only`: expected criterion numbers, got {s:?}")))
            })
            .collect::<Result<_, _>>()?,
    };
    let reports = run_criteria(&only, |r| println!("{}", r.line()));
    if reports.is_empty() {
        return Err(usage(
            "`only` matched no criteria (valid numbers are 1..=11)".to_string(),
        ));
    }
    let passed = reports.iter().filter(|r| r.passed).count();
    println!("{passed}/{} criteria passed", reports.len());
    Ok(if passed == reports.len() { 0 } else { 1 })
}
