use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use cotrain_core::composition::{diff, summarize};
use cotrain_core::harness::{
    emit_results, read_results_csv, render_report, run_experiment, ExperimentConfig, Protocol, RESULTS_CSV,
};
use cotrain_core::mimicgen::{generate, GenerateOptions};
use cotrain_core::policy::{evaluate, load_checkpoint, save_checkpoint, train, TrainConfig};
use cotrain_core::sampler::MixtureSpec;
use cotrain_core::trajectory::{load_dataset, save_dataset, SourceTag};
use cotrain_core::world::{collect_demos, WorldConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "cotrain", version, about = "Sim-and-real co-training workbench")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Planar world: presets and scripted demo collection.
    #[command(subcommand)]
    Toyworld(ToyCmd),
    /// Multiply source demos by segment transform and replay.
    #[command(subcommand)]
    Mimicgen(MimicCmd),
    /// Train and evaluate behavior-cloning policies.
    #[command(subcommand)]
    Policy(PolicyCmd),
    /// Compare the composition of two datasets.
    #[command(subcommand)]
    Compose(ComposeCmd),
    /// Run experiment protocols and report results.
    #[command(subcommand)]
    Exp(ExpCmd),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Real,
    Cousin,
    Prior0,
    Prior1,
    Prior2,
    Door,
}

#[derive(Clone, Copy, ValueEnum)]
enum Tag {
    Real,
    Dc,
    Prior,
}

impl From<Tag> for SourceTag {
    fn from(t: Tag) -> Self {
        match t {
            Tag::Real => SourceTag::RealProxy,
            Tag::Dc => SourceTag::DigitalCousin,
            Tag::Prior => SourceTag::Prior,
        }
    }
}

#[derive(Subcommand)]
enum ToyCmd {
    /// Print a preset world config as JSON.
    Preset { name: Preset },
    /// Collect successful scripted demos.
    Collect {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "real")]
        source: Tag,
    },
}

#[derive(Subcommand)]
enum MimicCmd {
    Generate {
        #[arg(long)]
        sources: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PolicyCmd {
    /// Train from a JSON job file; writes `ckpt_<k>.bin` per checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the job's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        world: PathBuf,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum ComposeCmd {
    /// Recounted manifest of one dataset.
    Summarize { dir: PathBuf },
    Diff {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// JSON output; the text table always goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ExpCmd {
    /// Print a default experiment config for a protocol.
    Init {
        #[arg(long)]
        protocol: String,
        #[arg(long, default_value = "experiment")]
        name: String,
    },
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

/// Job file for `policy train`.
#[derive(Debug, Serialize, Deserialize)]
struct TrainJob {
    real: Vec<PathBuf>,
    #[serde(default)]
    sim: Vec<PathBuf>,
    alpha: f64,
    #[serde(default)]
    sim_subweights: Option<Vec<f64>>,
    #[serde(default)]
    train: TrainConfig,
    #[serde(default)]
    out: Option<PathBuf>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(v)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn preset(p: Preset) -> WorldConfig {
    match p {
        Preset::Real => WorldConfig::pick_place_real(),
        Preset::Cousin => WorldConfig::pick_place_cousin(),
        Preset::Prior0 => WorldConfig::pick_place_prior(0),
        Preset::Prior1 => WorldConfig::pick_place_prior(1),
        Preset::Prior2 => WorldConfig::pick_place_prior(2),
        Preset::Door => WorldConfig::close_door_real(),
    }
}

fn load_all(dirs: &[PathBuf]) -> Result<Vec<Arc<cotrain_core::trajectory::Dataset>>> {
    dirs.iter()
        .map(|d| Ok(Arc::new(load_dataset(d).with_context(|| format!("loading {}", d.display()))?)))
        .collect()
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Toyworld(ToyCmd::Preset { name }) => {
            println!("{}", serde_json::to_string_pretty(&preset(name))?);
        }
        Cmd::Toyworld(ToyCmd::Collect { config, n, seed, out, source }) => {
            let world: WorldConfig = read_json(&config)?;
            let d = collect_demos(&world, n, seed, source.into())?;
            save_dataset(&d, &out)?;
            println!("{} demos, {} frames -> {}", d.len(), d.frame_count(), out.display());
        }
        Cmd::Mimicgen(MimicCmd::Generate { sources, config, n, seed, out, report }) => {
            let world: WorldConfig = read_json(&config)?;
            let src = load_dataset(&sources)?;
            let (d, rep) = generate(&src, &world, n, seed, &GenerateOptions::default())?;
            save_dataset(&d, &out)?;
            let report = report.unwrap_or_else(|| out.join("generation_report.json"));
            write_json(&report, &rep)?;
            println!(
                "{} demos from {} attempts (success rate {:.3}) -> {}",
                rep.successes,
                rep.attempts,
                rep.generation_success_rate,
                out.display()
            );
            if rep.budget_exhausted {
                eprintln!("warning: attempt budget exhausted before reaching {n} demos");
            }
        }
        Cmd::Policy(PolicyCmd::Train { config, out }) => {
            let job: TrainJob = read_json(&config)?;
            let Some(out) = out.or(job.out.clone()) else {
                bail!("no output directory: pass --out or set \"out\" in the job file");
            };
            let mut spec = MixtureSpec::new(load_all(&job.real)?, load_all(&job.sim)?, job.alpha);
            spec.sim_subweights = job.sim_subweights.clone();
            let outcome = train(&spec, &job.train)?;
            println!("initial loss {:.6}", outcome.initial_loss);
            for (k, c) in outcome.checkpoints.iter().enumerate() {
                let path = out.join(format!("ckpt_{}.bin", k + 1));
                save_checkpoint(&path, c, outcome.seed)?;
                println!("step {:>6}  loss {:.6}  -> {}", c.step, c.train_loss, path.display());
            }
        }
        Cmd::Policy(PolicyCmd::Eval { checkpoint, world, episodes, seed }) => {
            let (ckpt, _) = load_checkpoint(&checkpoint)?;
            let world: WorldConfig = read_json(&world)?;
            let r = evaluate(&ckpt.params, &world, episodes, seed)?;
            println!("{}", serde_json::to_string(&serde_json::json!({
                "checkpoint": checkpoint,
                "step": ckpt.step,
                "episodes": episodes,
                "seed": seed,
                "score": r.mean,
            }))?);
        }
        Cmd::Compose(ComposeCmd::Summarize { dir }) => {
            let d = load_dataset(&dir)?;
            println!("{}", serde_json::to_string_pretty(&summarize(&d))?);
        }
        Cmd::Compose(ComposeCmd::Diff { a, b, out }) => {
            let da = summarize(&load_dataset(&a)?);
            let db = summarize(&load_dataset(&b)?);
            let delta = diff(&da, &db);
            print!("{}", delta.to_table());
            if let Some(out) = out {
                write_json(&out, &delta)?;
            }
        }
        Cmd::Exp(ExpCmd::Init { protocol, name }) => {
            let p: Protocol = protocol.parse().map_err(anyhow::Error::msg)?;
            println!("{}", ExperimentConfig::pick_place(&name, p).to_json());
        }
        Cmd::Exp(ExpCmd::Run { config, out }) => {
            let cfg = ExperimentConfig::load(&config)?;
            let rows = run_experiment(&cfg)?;
            emit_results(&rows, &out)?;
            std::fs::write(out.join("config.json"), cfg.to_json() + "\n")?;
            print!("{}", render_report(&rows));
            let diverged = rows.iter().filter(|r| r.diverged).count();
            if diverged > 0 {
                eprintln!("{diverged} result rows come from diverged training");
                return Ok(ExitCode::from(2));
            }
        }
        Cmd::Exp(ExpCmd::Report { dir }) => {
            let rows = read_results_csv(&dir.join(RESULTS_CSV))?;
            print!("{}", render_report(&rows));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
