//! End-to-end run: load, encode, cluster, abstract, lay out, export.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};

use crate::abstraction::{build_graph, build_major_states, AbstractGraph};
use crate::cluster::{st_dbscan, ClusterLabeling, StParams};
use crate::document::{export_document, EpisodeInfo, GraphDocument};
use crate::error::{Result, StageExt};
use crate::frame::{FrameTensor, Shape};
use crate::latent::{encode_episode, load_episodes_with, Episode, LatentTrajectory, LoadOptions};
use crate::layout::{simulate, LayoutParams};
use crate::vae::{
    load_checkpoint, save_checkpoint, train, Architecture, LossBreakdown, TrainConfig, VaeParams,
    DEFAULT_HIDDEN, DEFAULT_LATENT_DIM,
};

#[derive(Debug, Clone)]
pub enum ModelSource {
    Checkpoint(PathBuf),
    /// Train one model jointly on every episode's frames.
    Train {
        /// `None` picks [`default_architecture`] for the frame shape.
        arch: Option<Architecture>,
        /// `rng_seed` is replaced by [`PipelineConfig::seed`].
        config: TrainConfig,
        save_to: Option<PathBuf>,
    },
}

/// Fixed clustering parameters; unset fields use the per-episode defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClusterOverrides {
    pub eps_spatial: Option<f64>,
    pub eps_temporal: Option<f64>,
    pub min_pts: Option<usize>,
}

impl ClusterOverrides {
    pub fn resolve(&self, traj: &LatentTrajectory, seed: u64) -> Result<StParams> {
        let d = StParams::defaults_for(traj, seed)?;
        StParams::new(
            self.eps_spatial.unwrap_or(d.eps_spatial),
            self.eps_temporal.unwrap_or(d.eps_temporal),
            self.min_pts.unwrap_or(d.min_pts),
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LayoutOverrides {
    pub iterations: Option<usize>,
    pub similarity_radius: Option<f64>,
}

impl LayoutOverrides {
    pub fn resolve(&self, graph: &AbstractGraph, seed: u64) -> LayoutParams {
        let mut p = LayoutParams::for_graph(graph);
        p.rng_seed = seed;
        if let Some(i) = self.iterations {
            p.iterations = i;
        }
        if let Some(r) = self.similarity_radius {
            p.similarity_radius = r;
        }
        p
    }
}

/// Settings shared by the in-memory abstraction step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AbstractOptions {
    pub application: String,
    pub clustering: ClusterOverrides,
    pub layout: LayoutOverrides,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    pub model: ModelSource,
    pub load: LoadOptions,
    pub options: AbstractOptions,
    /// Export target; `None` skips writing.
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub info: EpisodeInfo,
    pub trajectory: LatentTrajectory,
    pub params: StParams,
    pub labeling: ClusterLabeling,
}

#[derive(Debug, Clone)]
pub struct Abstraction {
    pub document: GraphDocument,
    pub graph: AbstractGraph,
    pub episodes: Vec<EpisodeResult>,
    pub warnings: Vec<String>,
}

impl Abstraction {
    pub fn thumbnails(&self) -> BTreeMap<String, FrameTensor> {
        self.graph
            .nodes
            .iter()
            .map(|n| (n.node_id.clone(), n.thumbnail.clone()))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub abstraction: Abstraction,
    /// `None` only when training was skipped for lack of frames.
    pub model: Option<VaeParams>,
    pub loss_history: Vec<LossBreakdown>,
    pub graph_path: Option<PathBuf>,
}

/// 32×32 grayscale gets the convolutional preset, anything else the MLP.
pub fn default_architecture(shape: Shape) -> Result<Architecture> {
    if shape == Shape::new(32, 32, 1) {
        Architecture::conv32(DEFAULT_LATENT_DIM)
    } else {
        Architecture::mlp(shape, DEFAULT_HIDDEN, DEFAULT_LATENT_DIM)
    }
}

/// Trains one model on the frames of all episodes.
pub fn train_joint(
    episodes: &[Episode],
    arch: Option<Architecture>,
    config: &TrainConfig,
) -> Result<(VaeParams, Vec<LossBreakdown>)> {
    let frames: Vec<FrameTensor> = episodes.iter().flat_map(|e| e.frames.iter().cloned()).collect();
    let arch = match arch {
        Some(a) => a,
        None => default_architecture(frames.first().map(FrameTensor::shape).unwrap_or(Shape::new(0, 0, 0)))?,
    };
    train(&frames, arch, config)
}

/// Encodes, clusters and abstracts already-loaded episodes (in manifest
/// order) with a trained model.
pub fn abstract_episodes(params: &VaeParams, episodes: &[Episode], opts: &AbstractOptions) -> Result<Abstraction> {
    let mut warnings = Vec::new();
    let mut results = Vec::with_capacity(episodes.len());
    let mut states = Vec::new();
    for ep in episodes {
        let trajectory = encode_episode(params, ep).stage("encode")?;
        let st = opts.clustering.resolve(&trajectory, opts.seed).stage("cluster")?;
        let labeling = st_dbscan(&trajectory, &st).stage("cluster")?;
        info!(
            "{}: {} frames, {} clusters, {} noise (eps_spatial={:.4}, eps_temporal={}, min_pts={})",
            ep.episode_id,
            ep.len(),
            labeling.n_clusters,
            labeling.noise_count(),
            st.eps_spatial,
            st.eps_temporal,
            st.min_pts
        );
        if labeling.n_clusters == 0 {
            let msg = format!("episode `{}`: every frame is noise, trajectory is empty", ep.episode_id);
            warn!("{msg}");
            warnings.push(msg);
        }
        states.extend(build_major_states(&trajectory, &labeling, params).stage("abstract")?);
        results.push(EpisodeResult {
            info: EpisodeInfo {
                episode_id: ep.episode_id.clone(),
                agent_label: ep.agent_label.clone(),
            },
            trajectory,
            params: st,
            labeling,
        });
    }
    let per_episode: Vec<_> = results
        .iter()
        .map(|r| (r.info.episode_id.clone(), r.labeling.labels.clone()))
        .collect();
    let graph = build_graph(states, &per_episode).stage("abstract")?;
    let positions = if graph.nodes.is_empty() {
        Vec::new()
    } else {
        let lp = opts.layout.resolve(&graph, opts.seed);
        simulate(&graph, lp).stage("layout")?
    };
    let infos: Vec<EpisodeInfo> = results.iter().map(|r| r.info.clone()).collect();
    let document = GraphDocument::build(opts.application.clone(), &graph, &positions, &infos).stage("export")?;
    Ok(Abstraction {
        document,
        graph,
        episodes: results,
        warnings,
    })
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let episodes = load_episodes_with(&cfg.manifest, cfg.load).stage("load")?;
    let mut warnings = Vec::new();
    if episodes.is_empty() {
        let msg = format!("manifest {} lists no episodes", cfg.manifest.display());
        warn!("{msg}");
        warnings.push(msg);
    }
    let (model, loss_history) = match &cfg.model {
        ModelSource::Checkpoint(path) => (Some(load_checkpoint(path).stage("load")?), Vec::new()),
        ModelSource::Train { .. } if episodes.is_empty() => (None, Vec::new()),
        ModelSource::Train { arch, config, save_to } => {
            let config = TrainConfig {
                rng_seed: cfg.options.seed,
                ..config.clone()
            };
            let (params, history) = train_joint(&episodes, arch.clone(), &config).stage("train")?;
            if let Some(path) = save_to {
                save_checkpoint(&params, path).stage("train")?;
            }
            (Some(params), history)
        }
    };
    let mut abstraction = match &model {
        Some(params) => abstract_episodes(params, &episodes, &cfg.options)?,
        None => Abstraction {
            document: GraphDocument::build(cfg.options.application.clone(), &AbstractGraph::default(), &[], &[])
                .stage("export")?,
            graph: AbstractGraph::default(),
            episodes: Vec::new(),
            warnings: Vec::new(),
        },
    };
    warnings.append(&mut abstraction.warnings);
    abstraction.warnings = warnings;
    let graph_path = match &cfg.out_dir {
        Some(dir) => Some(export(&abstraction, dir)?),
        None => None,
    };
    Ok(PipelineOutput {
        abstraction,
        model,
        loss_history,
        graph_path,
    })
}

/// Writes `graph.json` and thumbnails for an abstraction.
pub fn export(abstraction: &Abstraction, dir: &Path) -> Result<PathBuf> {
    export_document(&abstraction.document, &abstraction.thumbnails(), dir).stage("export")
}
