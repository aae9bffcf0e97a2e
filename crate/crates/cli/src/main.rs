//! `zsflow`: synthesize benchmarks, train generators, sample unseen-class
//! features and evaluate GZSL/ZSL runs.
//!
//! stdout carries one JSON document per invocation; progress goes to stderr.
//!
//! Exit codes: 0 success, 2 usage, configuration or invalid input, 3 file
//! system I/O (including failed `verify`), 4 numerical divergence.
//!
//! Configuration precedence, lowest first: built-in defaults, the `--config`
//! JSON file, the `ZSFLOW_SEED` environment variable, `--set key=value`
//! flags in the order given (dotted keys reach nested objects, e.g.
//! `--set mining.K=5`).

mod manifest;
mod overrides;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use manifest::{hash_file, write_atomic, Artifact, RunManifest};
use overrides::{load_config, resolve_seed};
use zsflow::data::{self, generate_synthetic, load_dir, save_dataset, SynthConfig};
use zsflow::pipeline::{
    generate_unseen, run_ablation, run_pipeline, train_gsmflow, EvalMode, TrainConfig, TrainedModel,
};

#[derive(Debug)]
pub struct CliError {
    code: u8,
    msg: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError { code: 2, msg: msg.into() }
    }

    pub fn io(msg: impl Into<String>) -> Self {
        CliError { code: 3, msg: msg.into() }
    }
}

impl From<zsflow::Error> for CliError {
    fn from(e: zsflow::Error) -> Self {
        use zsflow::Error as E;
        let code = match &e {
            E::Io { .. } => 3,
            E::Divergence(_) | E::Mining { .. } => 4,
            E::Config(_) | E::State(_) | E::Input { .. } | E::Format(_) => 2,
        };
        CliError { code, msg: e.to_string() }
    }
}

#[derive(Parser)]
#[command(name = "zsflow", version, about = "Conditional-flow feature generation for generalized zero-shot learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Gzsl,
    Zsl,
    Ablation,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark into a directory.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        /// Re-read and re-hash the outputs after writing.
        #[arg(long)]
        verify: bool,
    },
    /// Train the generator on a dataset directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Training log (JSON lines). Defaults to `<out>.log.jsonl`.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        #[arg(long)]
        verify: bool,
    },
    /// Sample features for every unseen class of a dataset.
    Generate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Samples per unseen class.
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        verify: bool,
    },
    /// Run the full pipeline and print an evaluation report.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
    },
    /// Re-hash the files recorded in a run manifest.
    Verify {
        #[arg(long)]
        manifest: PathBuf,
    },
}

fn data_inputs(dir: &Path) -> Result<Vec<Artifact>, CliError> {
    [data::FEATURES_FILE, data::ATTRIBUTES_FILE, data::SPLIT_FILE].iter().map(|f| hash_file(&dir.join(f))).collect()
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn finish(
    command: &str,
    seed: u64,
    config: Value,
    inputs: Vec<Artifact>,
    outputs: &[PathBuf],
    manifest_path: &Path,
    started: Instant,
    verify: bool,
) -> Result<Value, CliError> {
    let artifacts = outputs.iter().map(|p| hash_file(p)).collect::<Result<Vec<_>, _>>()?;
    let m = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        seed,
        config,
        inputs,
        artifacts,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    m.write(manifest_path)?;
    if verify {
        verify_manifest(manifest_path)?;
    }
    Ok(json!({
        "command": command,
        "manifest": manifest_path,
        "artifacts": m.artifacts,
    }))
}

fn verify_manifest(path: &Path) -> Result<Value, CliError> {
    let m = RunManifest::read(path)?;
    let bad = m.verify()?;
    if !bad.is_empty() {
        let list: Vec<String> = bad.iter().map(|p| p.display().to_string()).collect();
        return Err(CliError::io(format!("hash mismatch or missing file: {}", list.join(", "))));
    }
    Ok(json!({"verified": m.inputs.len() + m.artifacts.len(), "manifest": path}))
}

fn run(cli: Cli) -> Result<Value, CliError> {
    let started = Instant::now();
    match cli.command {
        Command::Synth { config, out, sets, verify } => {
            let cfg: SynthConfig = load_config(Some(&config), None, &sets)?;
            let ds = generate_synthetic::<f64>(&cfg)?;
            save_dataset(&ds, &out)?;
            eprintln!("wrote {} samples to {}", ds.features.rows(), out.display());
            let outputs: Vec<PathBuf> =
                [data::FEATURES_FILE, data::ATTRIBUTES_FILE, data::SPLIT_FILE].iter().map(|f| out.join(f)).collect();
            let cfg_json = json!({ "synth": cfg });
            let mut summary =
                finish("synth", cfg.seed, cfg_json, vec![], &outputs, &out.join("manifest.json"), started, verify)?;
            summary["n_samples"] = ds.features.rows().into();
            Ok(summary)
        }
        Command::Train { data, config, out, log, sets, verify } => {
            let cfg: TrainConfig = load_config(config.as_deref(), Some(&TrainConfig::default()), &sets)?;
            let inputs = data_inputs(&data)?;
            let ds = load_dir::<f64>(&data)?;
            eprintln!("training on {} seen samples for {} epochs", ds.split.train_seen.len(), cfg.epochs);
            let (model, train_log) = train_gsmflow(&ds, &cfg)?;
            let log_path = log.unwrap_or_else(|| sibling(&out, ".log.jsonl"));
            write_atomic(&out, model.to_json_string().as_bytes())?;
            write_atomic(&log_path, train_log.to_jsonl().as_bytes())?;
            if let Some(last) = train_log.epochs.last() {
                eprintln!("final epoch loss {:.4}", last.total);
            }
            let cfg_json = json!({ "train": cfg });
            let mut summary = finish(
                "train",
                cfg.seed,
                cfg_json,
                inputs,
                &[out.clone(), log_path],
                &sibling(&out, ".manifest.json"),
                started,
                verify,
            )?;
            summary["final_loss"] = train_log.epochs.last().map_or(Value::Null, |e| e.total.into());
            Ok(summary)
        }
        Command::Generate { model, data, n, out, seed, verify } => {
            let seed = resolve_seed(seed, 0)?;
            let text = std::fs::read_to_string(&model).map_err(|e| CliError::io(format!("{}: {e}", model.display())))?;
            let trained = TrainedModel::<f64>::from_json_str(&text)?;
            let mut inputs = data_inputs(&data)?;
            inputs.push(hash_file(&model)?);
            let ds = load_dir::<f64>(&data)?;
            let (x, labels) = generate_unseen(&trained, &ds.unseen_attributes(), &ds.unseen_classes, n, seed)?;
            let tmp = sibling(&out, ".partial");
            data::write_features(&tmp, &x, &labels)?;
            std::fs::rename(&tmp, &out).map_err(|e| CliError::io(format!("{}: {e}", out.display())))?;
            eprintln!("wrote {} generated samples to {}", x.rows(), out.display());
            let cfg_json = json!({ "n": n });
            let mut summary =
                finish("generate", seed, cfg_json, inputs, &[out.clone()], &sibling(&out, ".manifest.json"), started, verify)?;
            summary["rows"] = x.rows().into();
            Ok(summary)
        }
        Command::Eval { data, config, mode, sets } => {
            let cfg: TrainConfig = load_config(config.as_deref(), Some(&TrainConfig::default()), &sets)?;
            let ds = load_dir::<f64>(&data)?;
            match mode {
                Mode::Gzsl | Mode::Zsl => {
                    let m = if matches!(mode, Mode::Gzsl) { EvalMode::Gzsl } else { EvalMode::Zsl };
                    let run = run_pipeline(&ds, &cfg, m)?;
                    Ok(serde_json::to_value(run.report).expect("report serializes"))
                }
                Mode::Ablation => {
                    let mut out = serde_json::Map::new();
                    for entry in run_ablation(&ds, &cfg)? {
                        eprintln!("{}: H = {:?}", entry.variant.name(), entry.report.harmonic_mean);
                        out.insert(entry.variant.name().to_string(), serde_json::to_value(entry.report).expect("report"));
                    }
                    Ok(Value::Object(out))
                }
            }
        }
        Command::Verify { manifest } => verify_manifest(&manifest),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("output serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.msg);
            ExitCode::from(e.code)
        }
    }
}
