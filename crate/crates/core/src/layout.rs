//! Deterministic force-directed layout of an [`AbstractGraph`].
//!
//! Links carry strength `1/(1+d)` and rest length `scale*(1+d)` where `d` is
//! the latent distance between the two major states.

use std::collections::BTreeSet;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::abstraction::AbstractGraph;
use crate::cluster::euclidean;
use crate::error::{Error, Result};

/// Distances below this are clamped when computing forces.
pub const MIN_DISTANCE: f64 = 0.01;
/// Percentile of pairwise latent distances used as the default similarity radius.
pub const SIMILARITY_PERCENTILE: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayoutParams {
    pub iterations: usize,
    /// Step size at the first iteration; decays linearly to zero.
    pub initial_step: f64,
    pub repulsion_k: f64,
    pub spring_k: f64,
    pub rest_length_scale: f64,
    /// Latent distance under which unlinked nodes still attract.
    pub similarity_radius: f64,
    pub centering_k: f64,
    pub rng_seed: u64,
}

impl Default for LayoutParams {
    /// Graph-independent defaults. `similarity_radius` is a placeholder here;
    /// [`LayoutParams::for_graph`] derives it from the data.
    fn default() -> Self {
        LayoutParams {
            iterations: 3000,
            initial_step: 0.05,
            repulsion_k: 1.0,
            spring_k: 1.0,
            rest_length_scale: 30.0,
            similarity_radius: 1.0,
            centering_k: 0.01,
            rng_seed: 42,
        }
    }
}

impl LayoutParams {
    /// Defaults with the similarity radius set to the 25th percentile of
    /// pairwise node latent distances.
    pub fn for_graph(graph: &AbstractGraph) -> Self {
        let mut p = LayoutParams::default();
        if let Some(r) = similarity_radius(graph) {
            p.similarity_radius = r;
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        let ok = self.iterations >= 1
            && self.initial_step > 0.0
            && self.initial_step.is_finite()
            && self.rest_length_scale > 0.0
            && self.rest_length_scale.is_finite()
            && nonneg(self.repulsion_k)
            && nonneg(self.spring_k)
            && nonneg(self.similarity_radius)
            && nonneg(self.centering_k);
        if ok {
            Ok(())
        } else {
            Err(Error::Input(format!("invalid layout parameters {self:?}")))
        }
    }
}

/// Linearly interpolated percentile of pairwise median-latent distances;
/// `None` for fewer than two nodes.
pub fn similarity_radius(graph: &AbstractGraph) -> Option<f64> {
    let nodes = &graph.nodes;
    let mut d: Vec<f64> = (0..nodes.len())
        .flat_map(|i| (i + 1..nodes.len()).map(move |j| (i, j)))
        .map(|(i, j)| euclidean(&nodes[i].median_z, &nodes[j].median_z))
        .collect();
    if d.is_empty() {
        return None;
    }
    d.sort_unstable_by(f64::total_cmp);
    let rank = SIMILARITY_PERCENTILE / 100.0 * (d.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    Some(d[lo] + (d[hi] - d[lo]) * (rank - lo as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodePosition {
    pub node_id: String,
    pub x: f64,
    pub y: f64,
}

pub fn link_strength(d: f64) -> Result<f64> {
    if d.is_nan() || d < 0.0 {
        return Err(Error::Input(format!("distance must be nonnegative, got {d}")));
    }
    Ok(1.0 / (1.0 + d))
}

/// Undirected spring between two nodes, by index into `graph.nodes`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceLink {
    pub a: usize,
    pub b: usize,
    pub strength: f64,
    pub rest_length: f64,
}

impl ForceLink {
    fn new(a: usize, b: usize, d: f64, p: &LayoutParams) -> Result<Self> {
        Ok(ForceLink {
            a,
            b,
            strength: link_strength(d)?,
            rest_length: p.rest_length_scale * (1.0 + d),
        })
    }
}

/// Edge links (one per undirected node pair, in edge order) followed by
/// similarity links for unlinked pairs within `similarity_radius`.
pub fn build_force_links(graph: &AbstractGraph, p: &LayoutParams) -> Result<Vec<ForceLink>> {
    let index = graph.node_index();
    let nodes = &graph.nodes;
    if let Some(n) = nodes.first() {
        let dim = n.median_z.len();
        if let Some(m) = nodes.iter().find(|m| m.median_z.len() != dim) {
            return Err(Error::dim(dim, m.median_z.len()));
        }
    }
    let dist = |a: usize, b: usize| euclidean(&nodes[a].median_z, &nodes[b].median_z);
    let mut linked = BTreeSet::new();
    let mut links = Vec::new();
    for e in &graph.edges {
        let lookup = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| Error::Consistency(format!("edge references unknown node `{id}`")))
        };
        let (a, b) = (lookup(&e.from_node)?, lookup(&e.to_node)?);
        let key = (a.min(b), a.max(b));
        if a != b && linked.insert(key) {
            links.push(ForceLink::new(key.0, key.1, dist(a, b), p)?);
        }
    }
    for a in 0..nodes.len() {
        for b in a + 1..nodes.len() {
            let d = dist(a, b);
            if d <= p.similarity_radius && !linked.contains(&(a, b)) {
                links.push(ForceLink::new(a, b, d, p)?);
            }
        }
    }
    Ok(links)
}

/// Step-by-step force simulation; [`simulate`] runs one to completion.
#[derive(Debug, Clone)]
pub struct Simulation {
    positions: Vec<[f64; 2]>,
    links: Vec<ForceLink>,
    params: LayoutParams,
    iteration: usize,
}

impl Simulation {
    pub fn new(graph: &AbstractGraph, params: LayoutParams) -> Result<Self> {
        params.validate()?;
        if graph.nodes.is_empty() {
            return Err(Error::Input("cannot lay out an empty graph".into()));
        }
        let links = build_force_links(graph, &params)?;
        let positions = initial_positions(graph.nodes.len(), &params);
        Ok(Simulation {
            positions,
            links,
            params,
            iteration: 0,
        })
    }

    /// Starts from explicit positions and links instead of a graph.
    pub fn with_positions(positions: Vec<[f64; 2]>, links: Vec<ForceLink>, params: LayoutParams) -> Result<Self> {
        params.validate()?;
        if positions.is_empty() {
            return Err(Error::Input("cannot lay out zero nodes".into()));
        }
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Input("initial positions must be finite".into()));
        }
        if let Some(l) = links.iter().find(|l| l.a >= positions.len() || l.b >= positions.len()) {
            return Err(Error::Consistency(format!("link {}-{} out of range", l.a, l.b)));
        }
        Ok(Simulation {
            positions,
            links,
            params,
            iteration: 0,
        })
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn links(&self) -> &[ForceLink] {
        &self.links
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.params.iterations
    }

    /// Net force on every node at the current positions.
    pub fn forces(&self) -> Vec<[f64; 2]> {
        let p = &self.params;
        let pos = &self.positions;
        let mut f = vec![[0.0; 2]; pos.len()];
        if p.repulsion_k > 0.0 {
            for i in 0..pos.len() {
                for j in i + 1..pos.len() {
                    let (dx, dy) = (pos[j][0] - pos[i][0], pos[j][1] - pos[i][1]);
                    let d = dx.hypot(dy).max(MIN_DISTANCE);
                    let m = p.repulsion_k / (d * d * d);
                    f[i][0] -= m * dx;
                    f[i][1] -= m * dy;
                    f[j][0] += m * dx;
                    f[j][1] += m * dy;
                }
            }
        }
        for l in &self.links {
            let (dx, dy) = (pos[l.b][0] - pos[l.a][0], pos[l.b][1] - pos[l.a][1]);
            let d = dx.hypot(dy).max(MIN_DISTANCE);
            let m = p.spring_k * l.strength * (d - l.rest_length) / d;
            f[l.a][0] += m * dx;
            f[l.a][1] += m * dy;
            f[l.b][0] -= m * dx;
            f[l.b][1] -= m * dy;
        }
        if p.centering_k > 0.0 {
            for (fi, xi) in f.iter_mut().zip(pos) {
                fi[0] -= p.centering_k * xi[0];
                fi[1] -= p.centering_k * xi[1];
            }
        }
        f
    }

    /// Advances one iteration; returns `false` once all iterations have run.
    pub fn step(&mut self) -> bool {
        if self.is_done() {
            return false;
        }
        let p = &self.params;
        let step = p.initial_step * (1.0 - self.iteration as f64 / p.iterations as f64);
        let forces = self.forces();
        for (x, f) in self.positions.iter_mut().zip(&forces) {
            x[0] += step * f[0];
            x[1] += step * f[1];
        }
        self.iteration += 1;
        true
    }

    pub fn run(mut self) -> Result<Vec<[f64; 2]>> {
        while self.step() {}
        if self.positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("layout produced non-finite positions".into()));
        }
        Ok(self.positions)
    }
}

/// Nodes spread on a circle of radius `rest_length_scale`, angle and radius
/// jittered by the seeded RNG.
fn initial_positions(n: usize, p: &LayoutParams) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.rng_seed);
    let sector = TAU / n as f64;
    (0..n)
        .map(|i| {
            let angle = sector * (i as f64 + rng.random_range(-0.25..0.25));
            let r = p.rest_length_scale * (1.0 + rng.random_range(-0.1..0.1));
            [r * angle.cos(), r * angle.sin()]
        })
        .collect()
}

pub fn simulate(graph: &AbstractGraph, params: LayoutParams) -> Result<Vec<NodePosition>> {
    let positions = Simulation::new(graph, params)?.run()?;
    Ok(graph
        .nodes
        .iter()
        .zip(positions)
        .map(|(n, [x, y])| NodePosition {
            node_id: n.node_id.clone(),
            x,
            y,
        })
        .collect())
}
