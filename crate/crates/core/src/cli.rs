//! Command-line surface. Every command writes its artifacts and a
//! `manifest.json` into `--out`; `replay` re-runs a manifest and checks that
//! the outputs come out byte-identical.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{RunConfig, DEFAULT_CONFIG};
use crate::datagen::{extract_ego_nets, generate_corpus};
use crate::denoiser::train;
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::graph::{CondGraph, MAX_NODES};
use crate::guidance::train_classifiers;
use crate::io::{
    classifiers_from, corpus_paths, load_dataset, read_checkpoint, save_corpus, write_dot, write_json,
    write_loss_trace, Checkpoint, ReportFile, FORMAT_VERSION,
};
use crate::manifest::{digest_file, Manifest, MANIFEST_FILE};
use crate::sampler::{sample_conditional, sample_unconditional, SampleRun};

#[derive(Debug, Parser)]
#[command(name = "dualcond", version, about = "Dual-conditional graph diffusion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a corpus: synthetic by default, or ego nets of an input graph.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Edge list of the graph(s) to ingest instead of generating.
        #[arg(long, requires = "from_attrs")]
        from_edges: Option<PathBuf>,
        #[arg(long, requires = "from_edges")]
        from_attrs: Option<PathBuf>,
        /// Replace each ingested graph by the ego nets of its nodes.
        #[arg(long, requires = "from_edges")]
        ego: bool,
        #[arg(long, default_value_t = MAX_NODES)]
        max_n: usize,
    },
    /// Train the denoiser on a corpus.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the outer and inner guidance classifiers.
    TrainClassifiers {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate graphs with a trained denoiser.
    Sample {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Denoiser checkpoint.
        #[arg(long)]
        model: PathBuf,
        /// Corpus whose graph sizes are resampled.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Steer sampling with the classifiers in `--classifiers`.
        #[arg(long, requires = "classifiers")]
        guided: bool,
        /// Directory holding `outer.json` and `inner.json`.
        #[arg(long)]
        classifiers: Option<PathBuf>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        num_graphs: Option<usize>,
    },
    /// Score a generated corpus against a reference corpus.
    Eval {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write one DOT file per graph of a corpus.
    ExportDot {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run a recorded command and verify its outputs.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Print the default configuration.
    DefaultConfig,
}

/// Files touched by one command.
#[derive(Default)]
struct Record {
    seeds: BTreeMap<String, u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Record {
    fn read_corpus(&mut self, dir: &Path) -> Result<Vec<CondGraph>> {
        let (e, a) = corpus_paths(dir);
        let graphs = load_dataset(&e, &a)?;
        self.inputs.extend([e, a]);
        Ok(graphs)
    }

    fn write_corpus(&mut self, graphs: &[CondGraph], dir: &Path) -> Result<()> {
        let (e, a) = corpus_paths(dir);
        save_corpus(graphs, &e, &a)?;
        self.outputs.extend([e, a]);
        Ok(())
    }

    fn read_checkpoint(&mut self, path: &Path) -> Result<Checkpoint> {
        let ck = read_checkpoint(path)?;
        self.inputs.push(path.to_path_buf());
        Ok(ck)
    }

    fn write_json<T: serde::Serialize>(&mut self, path: PathBuf, value: &T) -> Result<()> {
        write_json(&path, value)?;
        self.outputs.push(path);
        Ok(())
    }

    fn write_trace(&mut self, path: PathBuf, trace: &[f64]) -> Result<()> {
        write_loss_trace(&path, trace)?;
        self.outputs.push(path);
        Ok(())
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Format(format!("{}: {e}", p.display())))?;
            RunConfig::parse(&text)
        }
    }
}

fn config_path(cmd: &Command) -> Option<&Path> {
    match cmd {
        Command::GenData { config, .. }
        | Command::Train { config, .. }
        | Command::TrainClassifiers { config, .. }
        | Command::Sample { config, .. } => config.as_deref(),
        _ => None,
    }
}

fn execute(cmd: &Command, cfg: &RunConfig) -> Result<(Record, PathBuf)> {
    let mut rec = Record::default();
    let out = match cmd {
        Command::GenData {
            out,
            from_edges,
            from_attrs,
            ego,
            max_n,
            ..
        } => {
            let corpus = match (from_edges, from_attrs) {
                (Some(e), Some(a)) => {
                    let graphs = load_dataset(e, a)?;
                    rec.inputs.extend([e.clone(), a.clone()]);
                    if *ego {
                        graphs.iter().flat_map(|g| extract_ego_nets(g, *max_n)).collect()
                    } else {
                        graphs
                    }
                }
                _ => {
                    rec.seeds.insert("data".into(), cfg.data.seed);
                    generate_corpus(&cfg.data)?
                }
            };
            if corpus.is_empty() {
                return Err(Error::Empty("corpus after extraction".into()));
            }
            rec.write_corpus(&corpus, out)?;
            out
        }
        Command::Train { data, out, .. } => {
            let corpus = rec.read_corpus(data)?;
            let schedule = cfg.noise_schedule()?;
            rec.seeds.insert("train".into(), cfg.train.seed);
            let result = train(&corpus, &schedule, cfg.hyper(), &cfg.train)?;
            rec.write_json(
                out.join("denoiser.json"),
                &Checkpoint::denoiser(&result.model, &cfg.schedule, cfg.train.seed),
            )?;
            rec.write_trace(out.join("loss.csv"), &result.loss_trace)?;
            out
        }
        Command::TrainClassifiers { data, out, .. } => {
            let corpus = rec.read_corpus(data)?;
            let schedule = cfg.noise_schedule()?;
            rec.seeds.insert("classifier".into(), cfg.classifier.seed);
            let contagion = crate::forward::ContagionParam::new(cfg.denoiser.contagion_p)?;
            let result = train_classifiers(
                &corpus,
                &schedule,
                contagion,
                cfg.classifier.outer,
                &cfg.classifier.train_config(),
            )?;
            let [outer, inner] = Checkpoint::classifiers(&result.classifiers, &cfg.schedule, cfg.classifier.seed);
            rec.write_json(out.join("outer.json"), &outer)?;
            rec.write_json(out.join("inner.json"), &inner)?;
            rec.write_trace(out.join("outer_loss.csv"), &result.outer_loss)?;
            rec.write_trace(out.join("inner_loss.csv"), &result.inner_loss)?;
            out
        }
        Command::Sample {
            model,
            data,
            out,
            guided,
            classifiers,
            gamma,
            seed,
            num_graphs,
            ..
        } => {
            let ck = rec.read_checkpoint(model)?;
            if ck.schedule != cfg.schedule {
                return Err(Error::InvalidParameter(
                    "checkpoint was trained with a different schedule than the config".into(),
                ));
            }
            let model = ck.into_denoiser()?;
            let schedule = cfg.noise_schedule()?;
            let corpus = rec.read_corpus(data)?;
            let mut run = SampleRun::from_corpus(
                &corpus,
                num_graphs.unwrap_or(cfg.sample.num_graphs),
                seed.unwrap_or(cfg.sample.seed),
            );
            run.trace = cfg.sample.trace;
            rec.seeds.insert("sample".into(), run.seed);
            let result = if *guided {
                let dir = classifiers.as_ref().expect("clap enforces --classifiers");
                let outer = rec.read_checkpoint(&dir.join("outer.json"))?;
                let inner = rec.read_checkpoint(&dir.join("inner.json"))?;
                let clf = classifiers_from(outer, inner)?;
                let mut opts = cfg.sample.guidance();
                if let Some(g) = gamma {
                    opts.gamma = *g;
                }
                sample_conditional(&model, &clf, &schedule, &run, opts)?
            } else {
                sample_unconditional(&model, &schedule, &run)?
            };
            rec.write_corpus(&result.graphs, out)?;
            if let Some(traces) = &result.traces {
                for (k, states) in traces.iter().enumerate() {
                    let dir = out.join("trace").join(format!("graph_{k:04}"));
                    rec.write_corpus(states, &dir)?;
                }
            }
            out
        }
        Command::Eval {
            reference,
            generated,
            out,
        } => {
            let r = rec.read_corpus(reference)?;
            let g = rec.read_corpus(generated)?;
            let report = evaluate(&r, &g)?;
            rec.write_json(
                out.join("report.json"),
                &ReportFile {
                    version: FORMAT_VERSION,
                    report,
                },
            )?;
            out
        }
        Command::ExportDot { data, out } => {
            let corpus = rec.read_corpus(data)?;
            for (k, g) in corpus.iter().enumerate() {
                let path = out.join(format!("graph_{k:04}.dot"));
                write_dot(g, &format!("g{k}"), &path)?;
                rec.outputs.push(path);
            }
            out
        }
        Command::Replay { .. } | Command::DefaultConfig => unreachable!("handled by run"),
    };
    Ok((rec, out.clone()))
}

fn finish(args: Vec<String>, cfg: &RunConfig, rec: Record, out: &Path) -> Result<Manifest> {
    let mut m = Manifest::new(args, cfg.to_toml(), rec.seeds);
    m.inputs = rec.inputs.iter().map(|p| digest_file(p)).collect::<Result<_>>()?;
    m.outputs = rec.outputs.iter().map(|p| digest_file(p)).collect::<Result<_>>()?;
    m.write(&out.join(MANIFEST_FILE))?;
    Ok(m)
}

fn summary(command: &str, m: &Manifest) -> String {
    serde_json::json!({
        "command": command,
        "outputs": m.outputs.iter().map(|f| &f.path).collect::<Vec<_>>(),
    })
    .to_string()
}

/// Parses `args` (without the program name) and runs the command. Returns a
/// one-line JSON summary for stdout.
pub fn run_args(args: Vec<String>) -> Result<String> {
    let argv = std::iter::once("dualcond".to_string()).chain(args.iter().cloned());
    let cli = Cli::try_parse_from(argv).map_err(|e| Error::InvalidParameter(e.to_string().trim().to_string()))?;
    run(cli, args)
}

/// Runs an already parsed command; `args` are recorded in the manifest.
pub fn run(cli: Cli, args: Vec<String>) -> Result<String> {
    match &cli.command {
        Command::DefaultConfig => Ok(DEFAULT_CONFIG.trim_end().to_string()),
        Command::Replay { manifest } => replay(manifest),
        cmd => {
            let cfg = load_config(config_path(cmd))?;
            let (rec, out) = execute(cmd, &cfg)?;
            let m = finish(args, &cfg, rec, &out)?;
            Ok(summary(name_of(cmd), &m))
        }
    }
}

fn name_of(cmd: &Command) -> &'static str {
    match cmd {
        Command::GenData { .. } => "gen-data",
        Command::Train { .. } => "train",
        Command::TrainClassifiers { .. } => "train-classifiers",
        Command::Sample { .. } => "sample",
        Command::Eval { .. } => "eval",
        Command::ExportDot { .. } => "export-dot",
        Command::Replay { .. } => "replay",
        Command::DefaultConfig => "default-config",
    }
}

fn replay(path: &Path) -> Result<String> {
    let recorded = Manifest::read(path)?;
    recorded.check_inputs()?;
    let cfg = RunConfig::parse(&recorded.config)?;
    let argv = std::iter::once("dualcond".to_string()).chain(recorded.command.iter().cloned());
    let cli = Cli::try_parse_from(argv).map_err(|e| Error::Format(format!("recorded command: {e}")))?;
    if matches!(cli.command, Command::Replay { .. } | Command::DefaultConfig) {
        return Err(Error::Format("manifest does not record a pipeline command".into()));
    }
    let (rec, out) = execute(&cli.command, &cfg)?;
    let m = finish(recorded.command.clone(), &cfg, rec, &out)?;
    let mismatched: Vec<&String> = recorded
        .outputs
        .iter()
        .filter(|f| !m.outputs.contains(f))
        .map(|f| &f.path)
        .collect();
    if !mismatched.is_empty() || m.outputs.len() != recorded.outputs.len() {
        return Err(Error::Format(format!("replay changed outputs: {mismatched:?}")));
    }
    Ok(serde_json::json!({
        "command": "replay",
        "identical": true,
        "outputs": m.outputs.len(),
    })
    .to_string())
}

/// Entry point used by the binary: prints the summary or a single-line JSON
/// error and returns the exit code.
pub fn main_with_args(args: impl IntoIterator<Item = OsString>) -> i32 {
    let args: Vec<String> = args
        .into_iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let argv = std::iter::once("dualcond".to_string()).chain(args.iter().cloned());
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let msg = e.to_string();
            eprintln!(
                "{}",
                serde_json::json!({"error": msg.trim(), "kind": "usage"})
            );
            return 2;
        }
    };
    match run(cli, args) {
        Ok(line) => {
            println!("{line}");
            0
        }
        Err(e) => {
            eprintln!("{}", serde_json::json!({"error": e.to_string(), "kind": e.kind()}));
            1
        }
    }
}
