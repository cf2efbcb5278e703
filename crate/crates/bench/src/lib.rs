//! Seeded inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trajmap_core::abstraction::node_id;
use trajmap_core::{AbstractGraph, FrameTensor, LatentTrajectory, MajorState, Shape, Transition};

/// A random walk in latent space that lingers in a few places.
pub fn plateau_walk(n: usize, dim: usize, seed: u64) -> LatentTrajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = vec![0.0; dim];
    let zs = (0..n)
        .map(|t| {
            if t % 50 == 0 {
                z.iter_mut().for_each(|v| *v = rng.random_range(-3.0..3.0));
            }
            z.iter().map(|v| v + rng.random_range(-0.05..0.05)).collect()
        })
        .collect();
    LatentTrajectory::from_vectors("bench", zs)
}

/// A chain of `n` states with random latents, as one episode.
pub fn chain_graph(n: usize, dim: usize, seed: u64) -> AbstractGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = (0..n)
        .map(|k| MajorState {
            node_id: node_id("bench", k),
            episode_id: "bench".into(),
            cluster_id: k,
            median_z: (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
            thumbnail: FrameTensor::zeros(Shape::new(1, 1, 1)),
            member_count: 1,
            t_first: k,
            t_last: k,
        })
        .collect();
    let edges = (1..n)
        .map(|k| Transition {
            from_node: node_id("bench", k - 1),
            to_node: node_id("bench", k),
            episode_id: "bench".into(),
            count: 1,
            first_order: k - 1,
        })
        .collect();
    AbstractGraph {
        nodes,
        edges,
        trajectories: Default::default(),
    }
}

pub fn random_frame(shape: Shape, seed: u64) -> FrameTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixels = (0..shape.len()).map(|_| rng.random_range(0.0..1.0)).collect();
    FrameTensor::new(shape, pixels).expect("pixel count matches shape")
}
