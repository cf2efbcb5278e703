//! ST-DBSCAN over one latent trajectory.
//!
//! A point's neighborhood is gated twice: Euclidean latent distance
//! `<= eps_spatial` and frame-index distance `<= eps_temporal`. A point is core
//! when its neighborhood (itself included) holds at least `min_pts` points.
//! Otherwise the semantics are plain DBSCAN: clusters are maximal
//! density-connected sets, border points join the first cluster that reaches
//! them, the rest is noise.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::latent::{LatentPoint, LatentTrajectory};

pub const DEFAULT_MIN_PTS: usize = 4;
/// Points used when estimating the default spatial radius.
const DEFAULT_SUBSAMPLE: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StParams {
    /// Radius in latent space.
    pub eps_spatial: f64,
    /// Radius in frames.
    pub eps_temporal: f64,
    /// Neighborhood size (self included) that makes a point core.
    pub min_pts: usize,
}

impl StParams {
    pub fn new(eps_spatial: f64, eps_temporal: f64, min_pts: usize) -> Result<Self> {
        let p = StParams {
            eps_spatial,
            eps_temporal,
            min_pts,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.eps_spatial) || !positive(self.eps_temporal) || self.min_pts == 0 {
            return Err(Error::Input(format!(
                "clustering parameters must be positive, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Data-relative defaults: half the median pairwise latent distance
    /// (over a seeded subsample of at most 1000 points), 5% of the episode
    /// length in frames (at least 1), and `min_pts = 4`.
    pub fn defaults_for(traj: &LatentTrajectory, seed: u64) -> Result<Self> {
        if traj.is_empty() {
            return Err(Error::Input("cannot derive defaults for an empty trajectory".into()));
        }
        let n = traj.len();
        let idx: Vec<usize> = if n <= DEFAULT_SUBSAMPLE {
            (0..n).collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut v = rand::seq::index::sample(&mut rng, n, DEFAULT_SUBSAMPLE).into_vec();
            v.sort_unstable();
            v
        };
        let mut dists = Vec::with_capacity(idx.len() * idx.len().saturating_sub(1) / 2);
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a + 1..] {
                dists.push(euclidean(&traj.points[i].z, &traj.points[j].z));
            }
        }
        let median = median_of(&mut dists).unwrap_or(0.0);
        StParams::new(
            (0.5 * median).max(1e-12),
            (0.05 * n as f64).max(1.0),
            DEFAULT_MIN_PTS,
        )
    }
}

fn median_of(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    })
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Noise,
    Cluster(usize),
}

impl Label {
    pub fn cluster(self) -> Option<usize> {
        match self {
            Label::Cluster(k) => Some(k),
            Label::Noise => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterLabeling {
    pub labels: Vec<Label>,
    pub n_clusters: usize,
    /// Whether each point is a core point.
    pub core: Vec<bool>,
}

impl ClusterLabeling {
    pub fn members(&self, k: usize) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| self.labels[i] == Label::Cluster(k))
            .collect()
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|l| **l == Label::Noise).count()
    }
}

fn within(a: &LatentPoint, b: &LatentPoint, p: &StParams) -> bool {
    (a.t.abs_diff(b.t) as f64) <= p.eps_temporal && euclidean(&a.z, &b.z) <= p.eps_spatial
}

/// Indices within both radii of point `i`, ascending, `i` included.
///
/// Points must be sorted by `t`.
pub fn neighborhood(points: &[LatentPoint], i: usize, p: &StParams) -> Result<Vec<usize>> {
    let pi = points
        .get(i)
        .ok_or_else(|| Error::Input(format!("index {i} out of range for {} points", points.len())))?;
    // Temporal window via binary search on the sorted frame indices.
    let lo_t = pi.t as f64 - p.eps_temporal;
    let start = points.partition_point(|q| (q.t as f64) < lo_t);
    Ok((start..points.len())
        .take_while(|&j| points[j].t as f64 <= pi.t as f64 + p.eps_temporal)
        .filter(|&j| within(pi, &points[j], p))
        .collect())
}

fn check_input(traj: &LatentTrajectory, p: &StParams) -> Result<()> {
    p.validate()?;
    if traj.is_empty() {
        return Err(Error::Input("cannot cluster an empty trajectory".into()));
    }
    if traj.points.windows(2).any(|w| w[0].t >= w[1].t) {
        return Err(Error::Input("trajectory points must be strictly increasing in t".into()));
    }
    let d = traj.points[0].z.len();
    if let Some(pt) = traj.points.iter().find(|pt| pt.z.len() != d) {
        return Err(Error::dim(d, pt.z.len()));
    }
    Ok(())
}

/// ST-DBSCAN. Cluster ids follow the order in which each cluster's first core
/// point appears in an ascending-`t` scan.
pub fn st_dbscan(traj: &LatentTrajectory, p: &StParams) -> Result<ClusterLabeling> {
    check_input(traj, p)?;
    let pts = &traj.points;
    let n = pts.len();
    let mut labels: Vec<Option<Label>> = vec![None; n];
    let mut core = vec![false; n];
    let mut k = 0;
    let mut queue = VecDeque::new();

    for i in 0..n {
        if labels[i].is_some() {
            continue;
        }
        let nb = neighborhood(pts, i, p)?;
        if nb.len() < p.min_pts {
            labels[i] = Some(Label::Noise);
            continue;
        }
        core[i] = true;
        labels[i] = Some(Label::Cluster(k));
        queue.extend(nb);
        while let Some(j) = queue.pop_front() {
            match labels[j] {
                Some(Label::Cluster(_)) => continue,
                // Already known to be non-core: becomes a border point.
                Some(Label::Noise) => {
                    labels[j] = Some(Label::Cluster(k));
                    continue;
                }
                None => {}
            }
            labels[j] = Some(Label::Cluster(k));
            let nbj = neighborhood(pts, j, p)?;
            if nbj.len() >= p.min_pts {
                core[j] = true;
                queue.extend(nbj);
            }
        }
        k += 1;
    }

    Ok(ClusterLabeling {
        labels: labels.into_iter().map(|l| l.expect("every point visited")).collect(),
        n_clusters: k,
        core,
    })
}

/// Naive reference: full neighborhood matrix, connected components of the
/// core-adjacency graph, borders attached to the lowest-numbered adjacent
/// component. Meant for cross-checking [`st_dbscan`] in tests.
pub fn st_dbscan_oracle(traj: &LatentTrajectory, p: &StParams) -> Result<ClusterLabeling> {
    check_input(traj, p)?;
    let pts = &traj.points;
    let n = pts.len();
    let adj: Vec<Vec<bool>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let dt = (pts[i].t as f64 - pts[j].t as f64).abs();
                    let d2: f64 = pts[i].z.iter().zip(&pts[j].z).map(|(a, b)| (a - b).powi(2)).sum();
                    dt <= p.eps_temporal && d2.sqrt() <= p.eps_spatial
                })
                .collect()
        })
        .collect();
    let core: Vec<bool> = adj
        .iter()
        .map(|row| row.iter().filter(|&&b| b).count() >= p.min_pts)
        .collect();

    // Transitive closure over core-core adjacency by repeated relaxation.
    let mut comp: Vec<usize> = (0..n).collect();
    loop {
        let mut changed = false;
        for i in 0..n {
            for j in 0..n {
                if core[i] && core[j] && adj[i][j] && comp[j] < comp[i] {
                    comp[i] = comp[j];
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    // comp[i] is now the smallest core index in i's component; number them in that order.
    let mut roots: Vec<usize> = (0..n).filter(|&i| core[i] && comp[i] == i).collect();
    roots.sort_unstable();
    let id_of = |root: usize| roots.binary_search(&root).expect("root is listed");

    let labels = (0..n)
        .map(|i| {
            if core[i] {
                Label::Cluster(id_of(comp[i]))
            } else {
                (0..n)
                    .filter(|&j| core[j] && adj[i][j])
                    .map(|j| id_of(comp[j]))
                    .min()
                    .map_or(Label::Noise, Label::Cluster)
            }
        })
        .collect();
    Ok(ClusterLabeling {
        labels,
        n_clusters: roots.len(),
        core,
    })
}
