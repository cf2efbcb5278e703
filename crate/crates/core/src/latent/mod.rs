//! Episodes of frames and their latent trajectories.

mod frames;
mod synth;

pub use frames::{
    load_episodes, load_episodes_with, load_frames, read_frames, read_manifest, save_frames, write_dataset,
    write_frames, LoadOptions, Manifest, ManifestEntry, RawFrames, FRAMES_MAGIC,
};
pub use synth::{synth_moving_dot, DOT_SIZE};

use crate::error::{Error, Result};
use crate::frame::FrameTensor;
use crate::vae::VaeParams;

/// One replay: frames in temporal order, all of one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub episode_id: String,
    pub agent_label: String,
    pub frames: Vec<FrameTensor>,
}

impl Episode {
    pub fn new(episode_id: impl Into<String>, agent_label: impl Into<String>, frames: Vec<FrameTensor>) -> Result<Self> {
        let episode_id = episode_id.into();
        let Some(first) = frames.first() else {
            return Err(Error::Input(format!("episode `{episode_id}` has no frames")));
        };
        let shape = first.shape();
        if let Some(f) = frames.iter().find(|f| f.shape() != shape) {
            return Err(Error::InputShape {
                expected: shape.to_string(),
                actual: f.shape().to_string(),
            });
        }
        Ok(Episode {
            episode_id,
            agent_label: agent_label.into(),
            frames,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentPoint {
    pub episode_id: String,
    /// Frame index within the episode.
    pub t: usize,
    pub z: Vec<f64>,
}

/// Latent points of one episode, sorted by `t` with no gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTrajectory {
    pub episode_id: String,
    pub points: Vec<LatentPoint>,
}

impl LatentTrajectory {
    /// Builds a trajectory with `t = 0..n` from raw latent vectors.
    pub fn from_vectors(episode_id: impl Into<String>, zs: Vec<Vec<f64>>) -> Self {
        let episode_id = episode_id.into();
        let points = zs
            .into_iter()
            .enumerate()
            .map(|(t, z)| LatentPoint {
                episode_id: episode_id.clone(),
                t,
                z,
            })
            .collect();
        LatentTrajectory { episode_id, points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn latents(&self) -> impl Iterator<Item = &[f64]> {
        self.points.iter().map(|p| p.z.as_slice())
    }
}

/// Encodes every frame to its posterior mean.
pub fn encode_episode(params: &VaeParams, ep: &Episode) -> Result<LatentTrajectory> {
    let zs = ep
        .frames
        .iter()
        .map(|f| params.encode(f).map(|post| post.mu))
        .collect::<Result<Vec<_>>>()?;
    Ok(LatentTrajectory::from_vectors(ep.episode_id.clone(), zs))
}
