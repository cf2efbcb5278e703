//! Abstracted trajectories: one decoded "major state" per cluster, linked in
//! the order an episode visits them.

mod pca;

pub use pca::{pca_project, symmetric_eigen, PcaProjection};

use std::collections::{BTreeMap, HashMap};

use crate::cluster::{ClusterLabeling, Label};
use crate::error::{Error, Result};
use crate::frame::FrameTensor;
use crate::latent::LatentTrajectory;
use crate::vae::VaeParams;

/// Componentwise median; even counts average the two middle values.
pub fn median_latent<V: AsRef<[f64]>>(members: &[V]) -> Result<Vec<f64>> {
    let first = members
        .first()
        .ok_or_else(|| Error::Input("median of an empty set".into()))?;
    let d = first.as_ref().len();
    if let Some(v) = members.iter().find(|v| v.as_ref().len() != d) {
        return Err(Error::dim(d, v.as_ref().len()));
    }
    let n = members.len();
    let mut column = vec![0.0; n];
    Ok((0..d)
        .map(|j| {
            for (c, v) in column.iter_mut().zip(members) {
                *c = v.as_ref()[j];
            }
            column.sort_unstable_by(f64::total_cmp);
            if n % 2 == 1 {
                column[n / 2]
            } else {
                0.5 * (column[n / 2 - 1] + column[n / 2])
            }
        })
        .collect())
}

pub fn node_id(episode_id: &str, cluster_id: usize) -> String {
    format!("{episode_id}#{cluster_id}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct MajorState {
    pub node_id: String,
    pub episode_id: String,
    pub cluster_id: usize,
    pub median_z: Vec<f64>,
    /// `decode(median_z)`.
    pub thumbnail: FrameTensor,
    pub member_count: usize,
    pub t_first: usize,
    pub t_last: usize,
}

/// Aggregated transition between two consecutive visits of one episode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub from_node: String,
    pub to_node: String,
    pub episode_id: String,
    pub count: usize,
    /// Index in the visit sequence where this transition first starts.
    pub first_order: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AbstractGraph {
    pub nodes: Vec<MajorState>,
    pub edges: Vec<Transition>,
    /// Visit order per episode.
    pub trajectories: BTreeMap<String, Vec<String>>,
}

impl AbstractGraph {
    pub fn node_index(&self) -> HashMap<&str, usize> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.node_id.as_str(), i))
            .collect()
    }
}

/// One state per cluster of `labeling`; noise points contribute nothing.
pub fn build_major_states(
    traj: &LatentTrajectory,
    labeling: &ClusterLabeling,
    params: &VaeParams,
) -> Result<Vec<MajorState>> {
    if labeling.labels.len() != traj.len() {
        return Err(Error::Input(format!(
            "labeling has {} entries for {} points",
            labeling.labels.len(),
            traj.len()
        )));
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); labeling.n_clusters];
    for (i, label) in labeling.labels.iter().enumerate() {
        if let Label::Cluster(k) = *label {
            groups
                .get_mut(k)
                .ok_or_else(|| Error::Consistency(format!("cluster id {k} >= n_clusters")))?
                .push(i);
        }
    }
    groups
        .into_iter()
        .enumerate()
        .map(|(k, members)| {
            if members.is_empty() {
                return Err(Error::Consistency(format!("cluster {k} has no members")));
            }
            let zs: Vec<&[f64]> = members.iter().map(|&i| traj.points[i].z.as_slice()).collect();
            let median_z = median_latent(&zs)?;
            let thumbnail = params.decode(&median_z)?;
            Ok(MajorState {
                node_id: node_id(&traj.episode_id, k),
                episode_id: traj.episode_id.clone(),
                cluster_id: k,
                median_z,
                thumbnail,
                member_count: members.len(),
                t_first: traj.points[members[0]].t,
                t_last: traj.points[*members.last().unwrap()].t,
            })
        })
        .collect()
}

/// Collapses a label sequence into visits: noise dropped, repeats merged.
pub fn collapse_visits(labels: &[Label]) -> Vec<usize> {
    let mut visits: Vec<usize> = Vec::new();
    for k in labels.iter().filter_map(|l| l.cluster()) {
        if visits.last() != Some(&k) {
            visits.push(k);
        }
    }
    visits
}

/// Links major states chronologically.
///
/// `per_episode` holds each episode's labels in `t` order. Every referenced
/// cluster must have a state in `states`.
pub fn build_graph(states: Vec<MajorState>, per_episode: &[(String, Vec<Label>)]) -> Result<AbstractGraph> {
    let known: HashMap<(&str, usize), &str> = states
        .iter()
        .map(|s| ((s.episode_id.as_str(), s.cluster_id), s.node_id.as_str()))
        .collect();
    if known.len() != states.len() {
        return Err(Error::Consistency("duplicate major state".into()));
    }
    let mut edges = Vec::new();
    let mut trajectories = BTreeMap::new();
    for (episode_id, labels) in per_episode {
        let visits = collapse_visits(labels)
            .into_iter()
            .map(|k| {
                known
                    .get(&(episode_id.as_str(), k))
                    .map(|s| s.to_string())
                    .ok_or_else(|| Error::Consistency(format!("no major state for cluster {k} of `{episode_id}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut slot: HashMap<(&str, &str), usize> = HashMap::new();
        let start = edges.len();
        for (order, pair) in visits.windows(2).enumerate() {
            match slot.get(&(pair[0].as_str(), pair[1].as_str())) {
                Some(&i) => {
                    let e: &mut Transition = &mut edges[start + i];
                    e.count += 1;
                }
                None => {
                    slot.insert((pair[0].as_str(), pair[1].as_str()), edges.len() - start);
                    edges.push(Transition {
                        from_node: pair[0].clone(),
                        to_node: pair[1].clone(),
                        episode_id: episode_id.clone(),
                        count: 1,
                        first_order: order,
                    });
                }
            }
        }
        if trajectories.insert(episode_id.clone(), visits).is_some() {
            return Err(Error::Consistency(format!("episode `{episode_id}` listed twice")));
        }
    }
    Ok(AbstractGraph {
        nodes: states,
        edges,
        trajectories,
    })
}
