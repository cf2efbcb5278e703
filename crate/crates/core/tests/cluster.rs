mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::random_trajectory;
use trajmap_core::cluster::{neighborhood, st_dbscan, st_dbscan_oracle, Label, StParams};
use trajmap_core::latent::LatentTrajectory;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn random_params(rng: &mut ChaCha8Rng) -> StParams {
    StParams::new(
        rng.random_range(0.05..3.0),
        rng.random_range(1.0..20.0),
        rng.random_range(1..8),
    )
    .unwrap()
}

#[test]
fn fast_path_equals_oracle_on_seeded_trajectories() {
    for seed in 0..150 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=200);
        let dim = rng.random_range(1..=8);
        let traj = random_trajectory(&mut rng, n, dim);
        let p = random_params(&mut rng);
        assert_eq!(st_dbscan(&traj, &p).unwrap(), st_dbscan_oracle(&traj, &p).unwrap(), "seed {seed}");
    }
}

#[test]
fn default_params_cluster_two_plateaus() {
    let mut zs = vec![vec![0.0, 0.0]; 50];
    zs.extend(vec![vec![4.0, 1.0]; 50]);
    let traj = LatentTrajectory::from_vectors("e", zs);
    let p = StParams::defaults_for(&traj, 0).unwrap();
    let l = st_dbscan(&traj, &p).unwrap();
    assert_eq!(l.n_clusters, 2);
    assert_eq!(l.noise_count(), 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn structural_invariants(seed in 0u64..100_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=120);
        let dim = rng.random_range(1..=5);
        let traj = random_trajectory(&mut rng, n, dim);
        let p = random_params(&mut rng);
        let l = st_dbscan(&traj, &p).unwrap();
        for k in 0..l.n_clusters {
            let members = l.members(k);
            prop_assert!(!members.is_empty());
            prop_assert!(members.iter().any(|&i| l.core[i]));
        }
        for (i, label) in l.labels.iter().enumerate() {
            let nb = neighborhood(&traj.points, i, &p).unwrap();
            prop_assert_eq!(l.core[i], nb.len() >= p.min_pts);
            if let Label::Cluster(k) = *label {
                if !l.core[i] {
                    // border: within the dual radius of some core of its cluster
                    prop_assert!(nb.iter().any(|&j| l.core[j] && l.labels[j] == Label::Cluster(k)));
                }
            } else {
                prop_assert!(!l.core[i]);
                prop_assert!(nb.iter().all(|&j| !l.core[j]));
            }
        }
        // ids follow first core discovery
        let first_core: Vec<usize> = (0..l.n_clusters)
            .map(|k| l.members(k).into_iter().find(|&i| l.core[i]).unwrap())
            .collect();
        prop_assert!(first_core.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn larger_spatial_radius_never_adds_noise(seed in 0u64..100_000, grow in 1.0..4.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=120);
        let dim = rng.random_range(1..=5);
        let traj = random_trajectory(&mut rng, n, dim);
        let p = random_params(&mut rng);
        let wider = StParams { eps_spatial: p.eps_spatial * grow, ..p };
        let a = st_dbscan(&traj, &p).unwrap();
        let b = st_dbscan(&traj, &wider).unwrap();
        prop_assert!(b.noise_count() <= a.noise_count());
    }

    #[test]
    fn neighborhood_matches_definition(seed in 0u64..100_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=80);
        let traj = random_trajectory(&mut rng, n, 3);
        let p = random_params(&mut rng);
        let i = rng.random_range(0..n);
        let expected: Vec<usize> = (0..n)
            .filter(|&j| {
                dist(&traj.points[i].z, &traj.points[j].z) <= p.eps_spatial
                    && (i as f64 - j as f64).abs() <= p.eps_temporal
            })
            .collect();
        let mut got = neighborhood(&traj.points, i, &p).unwrap();
        got.sort();
        prop_assert_eq!(got, expected);
    }
}
