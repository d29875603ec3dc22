//! Command-line front end. Every report is a single JSON document on stdout
//! that echoes the effective configuration.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::analysis::{dynamic_attack, reconstruct_cfg, simulate_games, AnalysisError};
use crate::cfg::{extract_cfg, graph_json, is_isomorphic, IsoError};
use crate::isa::{parse_program, serialize_program, ParseError, Program, REG_COUNT};
use crate::transform::{obfuscate, ObfuscateParams, Sidecar, TransformError};
use crate::vm::{run_output, Limits, VmError, DEFAULT_MAX_STEPS};

pub const EXIT_OK: u8 = 0;
pub const EXIT_NOT_ISOMORPHIC: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_PARSE: u8 = 4;
pub const EXIT_TRANSFORM: u8 = 5;
pub const EXIT_VM: u8 = 6;
pub const EXIT_TIMEOUT: u8 = 7;
pub const EXIT_ANALYSIS: u8 = 8;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ParseError },
    #[error("{path}: invalid metadata: {source}")]
    Metadata { path: PathBuf, source: serde_json::Error },
    #[error("bad --input `{0}`: expected r<N>=<value>[,...]")]
    Input(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Vm(#[from] VmError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Iso(#[from] IsoError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } => EXIT_IO,
            CliError::Parse { .. } | CliError::Metadata { .. } => EXIT_PARSE,
            CliError::Input(_) | CliError::Config(_) => EXIT_USAGE,
            CliError::Transform(_) => EXIT_TRANSFORM,
            CliError::Vm(VmError::StepLimit { .. })
            | CliError::Analysis(AnalysisError::Baseline(VmError::StepLimit { .. })) => EXIT_TIMEOUT,
            CliError::Vm(_) => EXIT_VM,
            CliError::Analysis(_) | CliError::Iso(_) => EXIT_ANALYSIS,
        }
    }
}

#[derive(Debug, Clone, Copy, Args, Serialize)]
pub struct Config {
    /// Seed for every randomized step.
    #[arg(long, global = true, env = "CFGMORPH_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Target graph size as a multiple of the source block count.
    #[arg(long, global = true, default_value_t = 4.0)]
    pub target_factor: f64,
    /// Target edge count as a multiple of its node count.
    #[arg(long = "edge-budget", global = true, default_value_t = 1.5)]
    pub edge_budget_factor: f64,
    /// Passive hops appended after every active node.
    #[arg(long, global = true, default_value_t = 2)]
    pub extra_hops: usize,
    /// Interpreter step limit per run.
    #[arg(long, global = true, default_value_t = DEFAULT_MAX_STEPS)]
    pub max_steps: u64,
}

impl Config {
    fn params(&self) -> Result<ObfuscateParams, CliError> {
        if self.target_factor.is_nan() || self.target_factor < 1.0 {
            return Err(CliError::Config(format!("target factor {} must be at least 1", self.target_factor)));
        }
        Ok(ObfuscateParams {
            target_factor: self.target_factor,
            edge_budget: self.edge_budget_factor,
            extra_hops: self.extra_hops,
            ..ObfuscateParams::default()
        })
    }

    fn limits(&self) -> Limits {
        Limits { max_steps: self.max_steps }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cfgmorph", version, about = "Morph the control-flow graph of mini-ISA programs")]
pub struct Cli {
    #[command(flatten)]
    pub config: Config,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rewrite a program; writes P′ and, unless disabled, its metadata.
    Obfuscate {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Metadata path; defaults to the output path with `.meta.json` appended.
        #[arg(long)]
        metadata: Option<PathBuf>,
        #[arg(long)]
        no_metadata: bool,
    },
    /// Execute a program and print its output log and step count.
    Run {
        file: PathBuf,
        /// Register values, e.g. `r0=3,r1=5`; missing registers are 0.
        #[arg(long, default_value = "")]
        input: String,
    },
    /// Print the restricted CFG.
    Cfg {
        file: PathBuf,
        #[arg(long, conflicts_with = "json")]
        dot: bool,
        #[arg(long)]
        json: bool,
    },
    /// Exit 0 iff both programs have isomorphic CFGs.
    Compare { a: PathBuf, b: PathBuf },
    /// Recover the active nodes of P′ by dynamic analysis.
    Attack {
        file: PathBuf,
        metadata: PathBuf,
        /// One run per occurrence; a single all-zero run when absent.
        #[arg(long)]
        input: Vec<String>,
    },
    /// Random-guess security games against the metadata's active set.
    Games {
        metadata: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
    },
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn load(path: &Path) -> Result<Program, CliError> {
    parse_program(&read(path)?).map_err(|source| CliError::Parse { path: path.to_path_buf(), source })
}

fn load_sidecar(path: &Path) -> Result<Sidecar, CliError> {
    serde_json::from_str(&read(path)?).map_err(|source| CliError::Metadata { path: path.to_path_buf(), source })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// `r0=3,r1=5` → `[3, 5]`; values may be decimal or `0x` hex.
pub fn parse_inputs(s: &str) -> Result<Vec<u64>, CliError> {
    let mut regs = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || CliError::Input(s.to_string());
        let (r, v) = part.split_once('=').ok_or_else(bad)?;
        let idx: usize = r.trim().strip_prefix('r').ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let v = v.trim();
        let val = match v.strip_prefix("0x") {
            Some(h) => u64::from_str_radix(h, 16),
            None => v.parse(),
        }
        .map_err(|_| bad())?;
        if idx >= REG_COUNT - 1 {
            return Err(bad());
        }
        if regs.len() <= idx {
            regs.resize(idx + 1, 0);
        }
        regs[idx] = val;
    }
    Ok(regs)
}

/// Run the command; returns the exit code and the text for stdout.
pub fn execute(cli: &Cli) -> Result<(u8, String), CliError> {
    let cfg = cli.config;
    let report = |body: serde_json::Value| {
        let mut v = json!({ "config": cfg });
        v.as_object_mut().expect("object").extend(body.as_object().expect("object").clone());
        serde_json::to_string_pretty(&v).expect("report serializes")
    };
    match &cli.command {
        Command::Obfuscate { input, output, metadata, no_metadata } => {
            let p = load(input)?;
            let ob = obfuscate(&p, &cfg.params()?, cfg.seed)?;
            write(output, &serialize_program(&ob.program))?;
            let meta = (!no_metadata).then(|| {
                metadata.clone().unwrap_or_else(|| {
                    let mut s = output.clone().into_os_string();
                    s.push(".meta.json");
                    PathBuf::from(s)
                })
            });
            if let Some(m) = &meta {
                write(m, &ob.sidecar_json())?;
            }
            Ok((
                EXIT_OK,
                report(json!({
                    "source_nodes": ob.sidecar.source_nodes,
                    "target_nodes": ob.sidecar.target_nodes,
                    "instructions_before": p.len(),
                    "instructions_after": ob.program.len(),
                    "output": output,
                    "metadata": meta,
                })),
            ))
        }
        Command::Run { file, input } => {
            let p = load(file)?;
            let (output, steps) = run_output(&p, &parse_inputs(input)?, cfg.limits())?;
            Ok((EXIT_OK, report(json!({ "output": output, "steps": steps }))))
        }
        Command::Cfg { file, dot, json: _ } => {
            let g = extract_cfg(&load(file)?);
            let text = if *dot {
                g.to_dot()
            } else {
                serde_json::to_string_pretty(&g.to_json()).expect("cfg serializes")
            };
            Ok((EXIT_OK, text))
        }
        Command::Compare { a, b } => {
            let (ga, gb) = (extract_cfg(&load(a)?), extract_cfg(&load(b)?));
            let iso = is_isomorphic(&ga, &gb)?;
            let code = if iso { EXIT_OK } else { EXIT_NOT_ISOMORPHIC };
            Ok((
                code,
                report(json!({
                    "isomorphic": iso,
                    "nodes": [ga.succ.len(), gb.succ.len()],
                })),
            ))
        }
        Command::Attack { file, metadata, input } => {
            let p = load(file)?;
            let sidecar = load_sidecar(metadata)?;
            let mut inputs = input.iter().map(|s| parse_inputs(s)).collect::<Result<Vec<_>, _>>()?;
            if inputs.is_empty() {
                inputs.push(Vec::new());
            }
            let rep = dynamic_attack(&p, &sidecar, &inputs, cfg.limits())?;
            let recon = reconstruct_cfg(&rep).ok();
            let iso = match &recon {
                Some(g) => Some(is_isomorphic(g, &sidecar.source_cfg())?),
                None => None,
            };
            Ok((
                EXIT_OK,
                report(json!({
                    "report": rep,
                    "reconstruction": recon.as_ref().map(graph_json),
                    "reconstruction_isomorphic": iso,
                })),
            ))
        }
        Command::Games { metadata, trials } => {
            let sidecar = load_sidecar(metadata)?;
            let (full, one) = simulate_games(&sidecar, *trials, cfg.seed)?;
            Ok((EXIT_OK, report(json!({ "full_recovery": full, "one_recovery": one }))))
        }
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok((code, text)) => {
            println!("{text}");
            ExitCode::from(code)
        }
        Err(e) => {
            eprintln!("cfgmorph: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
