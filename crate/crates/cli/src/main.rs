use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use trajmap::Site;
use trajmap_core::latent::{load_episodes, synth_moving_dot, write_dataset};
use trajmap_core::pipeline::{
    train_joint, AbstractOptions, ClusterOverrides, LayoutOverrides, ModelSource, PipelineConfig, PipelineOutput,
};
use trajmap_core::vae::save_checkpoint;
use trajmap_core::{run_pipeline, TrainConfig};

#[derive(Parser)]
#[command(name = "trajmap", version, about = "Abstracted trajectory maps from RL episode frames")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic moving-dot dataset and its manifest.
    Synth(SynthArgs),
    /// Train a beta-VAE on the frames of every episode in a manifest.
    Train(TrainArgs),
    /// Encode, cluster, abstract, lay out and export with a trained model.
    Abstract(AbstractArgs),
    /// Serve an exported directory over HTTP.
    Serve(ServeArgs),
    /// Train, abstract and export in one go; serve afterwards if --bind is given.
    All(AllArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    episodes: usize,
    #[arg(long, default_value_t = 300)]
    frames: usize,
    #[arg(long, default_value_t = 16)]
    side: usize,
    /// Dwell plateaus per episode.
    #[arg(long, default_value_t = 3)]
    segments: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct TrainOpts {
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 4.0)]
    beta: f64,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
}

impl TrainOpts {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            beta: self.beta,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            rng_seed: seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Args)]
struct AbstractOpts {
    /// Spatial radius in latent units (default: half the median pairwise distance).
    #[arg(long)]
    eps_spatial: Option<f64>,
    /// Temporal radius in frames (default: 5% of the episode, at least 1).
    #[arg(long)]
    eps_temporal: Option<f64>,
    #[arg(long)]
    min_pts: Option<usize>,
    #[arg(long)]
    layout_iterations: Option<usize>,
    #[arg(long, default_value = "episodes")]
    application: String,
}

impl AbstractOpts {
    fn options(&self, seed: u64) -> AbstractOptions {
        AbstractOptions {
            application: self.application.clone(),
            clustering: ClusterOverrides {
                eps_spatial: self.eps_spatial,
                eps_temporal: self.eps_temporal,
                min_pts: self.min_pts,
            },
            layout: LayoutOverrides {
                iterations: self.layout_iterations,
                similarity_radius: None,
            },
            seed,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Where to write the trained model.
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    train: TrainOpts,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct AbstractArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    abstraction: AbstractOpts,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct ServeArgs {
    /// Directory holding graph.json and thumbs/.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: String,
    /// Explorer bundle to serve at `/`.
    #[arg(long)]
    ui: Option<PathBuf>,
}

#[derive(Args)]
struct AllArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Also save the trained model here.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    train: TrainOpts,
    #[command(flatten)]
    abstraction: AbstractOpts,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    bind: Option<String>,
    #[arg(long)]
    ui: Option<PathBuf>,
}

fn synth(args: &SynthArgs) -> Result<()> {
    let episodes = (0..args.episodes)
        .map(|i| {
            let mut ep = synth_moving_dot(args.frames, args.side, args.seed + i as u64, args.segments)?;
            ep.episode_id = format!("ep-{i}");
            ep.agent_label = format!("agent-{i}");
            Ok(ep)
        })
        .collect::<trajmap_core::Result<Vec<_>>>()?;
    let manifest = write_dataset(&episodes, &args.out)?;
    println!("wrote {}", manifest.display());
    Ok(())
}

fn train(args: &TrainArgs) -> Result<()> {
    let episodes = load_episodes(&args.manifest)?;
    if episodes.is_empty() {
        bail!("manifest {} lists no episodes", args.manifest.display());
    }
    let (params, history) = train_joint(&episodes, None, &args.train.config(args.seed))?;
    if let (Some(first), Some(last)) = (history.first(), history.last()) {
        info!("loss {:.4} -> {:.4} over {} epochs", first.total, last.total, history.len());
    }
    save_checkpoint(&params, &args.checkpoint)?;
    println!("wrote {}", args.checkpoint.display());
    Ok(())
}

fn report(out: &PipelineOutput) {
    let doc = &out.abstraction.document;
    if let Some(path) = &out.graph_path {
        println!(
            "wrote {}: {} nodes, {} edges, {} trajectories",
            path.display(),
            doc.nodes.len(),
            doc.edges.len(),
            doc.trajectories.len()
        );
    }
    for w in &out.abstraction.warnings {
        eprintln!("warning: {w}");
    }
}

fn serve(dir: &Path, bind: &str, ui: Option<PathBuf>) -> Result<()> {
    let site = Site::load(dir, ui)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(bind)
            .await
            .with_context(|| format!("binding {bind}"))?;
        println!("serving {} on http://{}", dir.display(), listener.local_addr()?);
        trajmap::serve(listener, site, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
    })
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Synth(a) => synth(&a),
        Command::Train(a) => train(&a),
        Command::Abstract(a) => {
            let out = run_pipeline(&PipelineConfig {
                manifest: a.manifest,
                model: ModelSource::Checkpoint(a.checkpoint),
                load: Default::default(),
                options: a.abstraction.options(a.seed),
                out_dir: Some(a.out),
            })?;
            report(&out);
            Ok(())
        }
        Command::Serve(a) => serve(&a.out, &a.bind, a.ui),
        Command::All(a) => {
            let out = run_pipeline(&PipelineConfig {
                manifest: a.manifest,
                model: ModelSource::Train {
                    arch: None,
                    config: a.train.config(a.seed),
                    save_to: a.checkpoint,
                },
                load: Default::default(),
                options: a.abstraction.options(a.seed),
                out_dir: Some(a.out.clone()),
            })?;
            report(&out);
            match a.bind {
                Some(bind) => serve(&a.out, &bind, a.ui),
                None => Ok(()),
            }
        }
    }
}
