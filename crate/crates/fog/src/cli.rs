//! Command-line front end: training runs, checkpoint evaluation,
//! downstream goal reaching, offline score audits, and plot regeneration.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use crate::agent::{load_trainer, Method, TrainConfig, Trainer};
use crate::embed::{make_embedder, Embedder, EmbedderConfig, EmbedderKind};
use crate::envs::{read_dump, EnvKind, RegionSpec};
use crate::error::{Error, Result};
use crate::eval::{
    audit_scores, emit_plots, evaluate_policy, plot_score_series, replot_csv, EVAL_SKILLS,
};
use crate::hier::{random_skill_baseline, train_controller, EpisodeReturn};
use crate::rng::{stream, StreamId};
use crate::score::{build_score_fn, needs_embedder, ScoreConfig};

/// Environment variable naming the remote embedding endpoint. When set,
/// image score modes call that service; otherwise they fall back to the
/// built-in mock embedder.
pub const EMBED_ENDPOINT_VAR: &str = "FOG_EMBED_ENDPOINT";

#[derive(Debug, Parser)]
#[command(name = "fog", version, about = "Skill discovery on toy control environments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a skill policy; writes config, per-epoch logs, and checkpoints.
    Train(TrainArgs),
    /// Roll a checkpoint over a skill fan and report coverage metrics.
    Eval(EvalArgs),
    /// Train the goal-reaching controller on top of a frozen checkpoint.
    Downstream(DownstreamArgs),
    /// Re-score a dumped run offline and compare aligned vs misaligned episodes.
    Audit(AuditArgs),
    /// Re-render plot images from previously emitted CSV files.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON config mirroring the training config fields; omitted fields
    /// take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// fog, metra, lsd, metra_plus, or fr_sac.
    #[arg(long)]
    pub method: Option<Method>,
    /// point_room or tip_cart.
    #[arg(long)]
    pub env: Option<EnvKind>,
    /// Score assigned to undesirable states.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Query the scorer every Nth step, holding the value in between.
    #[arg(long)]
    pub skip_n: Option<usize>,
    /// Probability of flipping a binary score.
    #[arg(long)]
    pub noise_b: Option<f64>,
    #[arg(long)]
    pub skill_dim: Option<usize>,
    #[arg(long)]
    pub epochs: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory; defaults to {env}_{method}_{seed}_{timestamp}.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Trained checkpoint (final.bin or checkpoint.bin).
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Evaluation skills to roll, one episode each.
    #[arg(long, default_value_t = EVAL_SKILLS)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Hazardous region, e.g. "x>0" or "x>0 and y<0".
    #[arg(long)]
    pub hazard: Option<RegionSpec>,
    /// Output directory; defaults to {env}_{method}_{seed}_{timestamp}.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DownstreamArgs {
    /// Trained checkpoint providing the frozen low-level policy.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Goal-reaching episodes to train the controller for.
    #[arg(long, default_value_t = 200)]
    pub episodes: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory; defaults to {env}_{method}_{seed}_{timestamp}.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// JSONL episode dump to re-score.
    #[arg(long)]
    pub dump: PathBuf,
    /// JSON score config describing the scorer under audit.
    #[arg(long)]
    pub score_config: PathBuf,
    /// Directory holding the dumped frames; defaults to the dump's directory.
    #[arg(long)]
    pub frames: Option<PathBuf>,
    /// Seed for the scorer's noise stream.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// When set, writes audit.json and a score-vs-step plot here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// CSV files previously emitted next to plots.
    #[arg(long = "in", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    /// Directory receiving the re-rendered images and copied CSVs.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Downstream(args) => cmd_downstream(args),
        Command::Audit(args) => cmd_audit(args),
        Command::Plot(args) => cmd_plot(args),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn unix_seconds() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// The explicit output directory, or {env}_{method}_{seed}_{timestamp}.
fn run_dir(out: Option<PathBuf>, env: EnvKind, method: Method, seed: u64) -> PathBuf {
    out.unwrap_or_else(|| {
        PathBuf::from(format!(
            "{}_{}_{}_{}",
            env.name(),
            method.name(),
            seed,
            unix_seconds()
        ))
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Point the embedder config at the endpoint from the environment when
/// one is exported, then build the shared provider.
fn resolve_embedder(cfg: &mut EmbedderConfig) -> Result<Arc<dyn Embedder>> {
    if let Ok(endpoint) = std::env::var(EMBED_ENDPOINT_VAR) {
        if !endpoint.is_empty() {
            cfg.kind = EmbedderKind::Remote;
            cfg.endpoint = Some(endpoint);
        }
    }
    make_embedder(cfg)
}

fn mock_note(cfg: &EmbedderConfig) {
    if cfg.kind == EmbedderKind::Mock {
        eprintln!("note: {EMBED_ENDPOINT_VAR} is unset; scoring with the mock embedder");
    }
}

/// Layer the config file over the defaults, then the flags over the file.
pub(crate) fn resolve_train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg: TrainConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => TrainConfig::default(),
    };
    if let Some(method) = args.method {
        cfg.method = method;
    }
    if let Some(env) = args.env {
        cfg.env = env;
    }
    if let Some(alpha) = args.alpha {
        cfg.score.alpha = alpha;
    }
    if let Some(skip_n) = args.skip_n {
        cfg.score.skip_n = skip_n;
    }
    if let Some(noise_b) = args.noise_b {
        cfg.score.noise_b = noise_b;
    }
    if let Some(skill_dim) = args.skill_dim {
        cfg.skill_dim = skill_dim;
    }
    if let Some(epochs) = args.epochs {
        cfg.epochs = epochs;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut cfg = resolve_train_config(&args)?;

    let embedder = if needs_embedder(cfg.score.mode) {
        let provider = resolve_embedder(&mut cfg.embedder)?;
        mock_note(&cfg.embedder);
        Some(provider)
    } else {
        None
    };

    let dir = run_dir(args.out, cfg.env, cfg.method, cfg.seed);
    create_dir(&dir)?;
    write_json(&dir.join("config.json"), &cfg)?;

    let epochs = cfg.epochs;
    let mut trainer = Trainer::new(cfg, embedder)?;
    trainer.set_checkpoint_dir(Some(dir.clone()));

    let reports_path = dir.join("reports.csv");
    let mut csv = csv::Writer::from_path(&reports_path)
        .map_err(|e| Error::io(&reports_path, std::io::Error::other(e)))?;
    let csv_err = |e: csv::Error| Error::io(&reports_path, std::io::Error::other(e));
    csv.write_record([
        "epoch",
        "skill_reward",
        "weighted_reward",
        "lambda",
        "satisfied",
        "embed_calls",
        "wall_time_secs",
    ])
    .map_err(csv_err)?;

    for _ in 0..epochs {
        let report = trainer.train_epoch()?;
        println!("{}", report.log_line());
        csv.write_record(&[
            report.epoch.to_string(),
            format!("{:.6}", report.mean_skill_reward),
            format!("{:.6}", report.mean_weighted_reward),
            format!("{:.4}", report.lambda),
            format!("{:.4}", report.constraint_satisfaction),
            report.embedder_calls.to_string(),
            format!("{:.3}", report.wall_time_secs),
        ])
        .map_err(csv_err)?;
        csv.flush()
            .map_err(|e| Error::io(&reports_path, e))?;
    }

    let final_path = dir.join("final.bin");
    trainer.save_checkpoint(&final_path)?;
    println!("wrote {}", final_path.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let mut embed_cfg = EmbedderConfig::default();
    let embedder = resolve_embedder(&mut embed_cfg)?;
    let trainer = load_trainer(&args.checkpoint, Some(embedder))?;
    let kind = trainer.config().env;

    let dir = run_dir(args.out, kind, trainer.config().method, args.seed);
    create_dir(&dir)?;

    let run = evaluate_policy(
        trainer.policy(),
        kind,
        args.episodes,
        args.seed,
        args.hazard.as_ref(),
    )?;
    write_json(&dir.join("report.json"), &run.report)?;
    let files = emit_plots(kind, std::slice::from_ref(&run), &dir)?;

    let report = &run.report;
    println!(
        "coverage={} safe_coverage={} hazard_fraction={:.4} flip_pct={:.2}",
        report.coverage, report.safe_coverage, report.hazard_fraction, report.flip_pct
    );
    println!("wrote {}", dir.join("report.json").display());
    for file in files {
        println!("wrote {}", file.display());
    }
    Ok(())
}

fn cmd_downstream(args: DownstreamArgs) -> Result<()> {
    if args.episodes == 0 {
        return Err(Error::invalid("downstream needs at least one episode"));
    }
    let mut embed_cfg = EmbedderConfig::default();
    let embedder = resolve_embedder(&mut embed_cfg)?;
    let trainer = load_trainer(&args.checkpoint, Some(embedder))?;

    let dir = run_dir(args.out, trainer.config().env, trainer.config().method, args.seed);
    create_dir(&dir)?;

    let (_, controller) = train_controller(trainer.policy(), args.episodes, args.seed)?;
    let random = random_skill_baseline(trainer.policy(), args.episodes, args.seed)?;

    let csv_path = dir.join("downstream.csv");
    let mut csv = csv::Writer::from_path(&csv_path)
        .map_err(|e| Error::io(&csv_path, std::io::Error::other(e)))?;
    let csv_err = |e: csv::Error| Error::io(&csv_path, std::io::Error::other(e));
    csv.write_record(["episode", "controller_return", "random_return"])
        .map_err(csv_err)?;
    for (c, r) in controller.iter().zip(&random) {
        csv.write_record(&[
            c.episode.to_string(),
            format!("{:.6}", c.ret),
            format!("{:.6}", r.ret),
        ])
        .map_err(csv_err)?;
    }
    csv.flush().map_err(|e| Error::io(&csv_path, e))?;

    let tail_mean = |returns: &[EpisodeReturn]| {
        let k = returns.len().min(50);
        returns[returns.len() - k..].iter().map(|r| r.ret).sum::<f64>() / k as f64
    };
    println!(
        "controller_tail_mean={:.4} random_tail_mean={:.4}",
        tail_mean(&controller),
        tail_mean(&random)
    );
    println!("wrote {}", csv_path.display());
    Ok(())
}

fn cmd_audit(args: AuditArgs) -> Result<()> {
    let episodes = read_dump(&args.dump)?;
    let score_cfg: ScoreConfig = read_json(&args.score_config)?;

    let embedder = if needs_embedder(score_cfg.mode) {
        let mut embed_cfg = EmbedderConfig::default();
        let provider = resolve_embedder(&mut embed_cfg)?;
        mock_note(&embed_cfg);
        Some(provider)
    } else {
        None
    };
    let mut scorer = build_score_fn(&score_cfg, embedder, stream(args.seed, StreamId::Noise))?;

    let frames_dir = match &args.frames {
        Some(dir) => Some(dir.as_path()),
        None => args.dump.parent(),
    };
    let report = audit_scores(&episodes, frames_dir, scorer.as_mut())?;

    for (idx, episode) in report.episodes.iter().enumerate() {
        println!(
            "episode={idx} misaligned={} mean_score={:.4}",
            episode.misaligned,
            episode.mean_score()
        );
    }
    let bucket = |name: &str, mean: Option<f64>| match mean {
        Some(m) => println!("{name}={m:.4}"),
        None => println!("{name}=n/a"),
    };
    bucket("aligned_mean", report.aligned_mean);
    bucket("misaligned_mean", report.misaligned_mean);

    if let Some(dir) = args.out {
        create_dir(&dir)?;
        write_json(&dir.join("audit.json"), &report)?;
        let series: Vec<Vec<(u32, f64)>> =
            report.episodes.iter().map(|e| e.scores.clone()).collect();
        plot_score_series(
            &series,
            "audit score vs step",
            &dir.join("score_vs_step.png"),
            &dir.join("score_vs_step.csv"),
        )?;
        println!("wrote {}", dir.join("audit.json").display());
        println!("wrote {}", dir.join("score_vs_step.png").display());
    }
    Ok(())
}

fn cmd_plot(args: PlotArgs) -> Result<()> {
    for input in &args.inputs {
        let png = replot_csv(input, &args.out)?;
        println!("wrote {}", png.display());
    }
    Ok(())
}
