pub mod abstraction;
pub mod cluster;
pub mod document;
pub mod error;
pub mod frame;
pub mod latent;
pub mod layout;
pub mod pipeline;
pub mod vae;

pub use abstraction::{AbstractGraph, MajorState, Transition};
pub use cluster::{ClusterLabeling, Label, StParams};
pub use document::GraphDocument;
pub use error::{Error, Result};
pub use frame::{FrameTensor, Shape};
pub use latent::{Episode, LatentTrajectory};
pub use layout::{LayoutParams, NodePosition};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineOutput};
pub use vae::{Architecture, TrainConfig, VaeParams};
