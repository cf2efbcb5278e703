//! The exported graph document (`graph.json` plus `thumbs/<node_id>.pgm`).
//!
//! Struct fields are declared in lexicographic order and maps are
//! `BTreeMap`s, so the serialized key order is stable.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::abstraction::AbstractGraph;
use crate::error::{Error, Result};
use crate::frame::FrameTensor;
use crate::layout::NodePosition;

pub const SCHEMA_VERSION: u32 = 1;
pub const GRAPH_FILE: &str = "graph.json";
pub const THUMBS_DIR: &str = "thumbs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocNode {
    pub cluster_id: usize,
    pub episode_id: String,
    pub member_count: usize,
    pub node_id: String,
    pub t_first: usize,
    pub t_last: usize,
    /// Path of the thumbnail relative to the document directory.
    pub thumbnail_ref: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocEdge {
    pub count: usize,
    pub episode_id: String,
    pub from_node: String,
    pub to_node: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocTrajectory {
    pub agent_label: String,
    pub display_color_index: usize,
    pub node_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDocument {
    pub application: String,
    pub edges: Vec<DocEdge>,
    pub nodes: Vec<DocNode>,
    pub schema_version: u32,
    pub trajectories: BTreeMap<String, DocTrajectory>,
}

/// Per-episode metadata that the abstract graph does not carry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeInfo {
    pub episode_id: String,
    pub agent_label: String,
}

pub fn is_valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'#' | b'_' | b'-'))
}

pub fn thumbnail_ref(node_id: &str) -> String {
    format!("{THUMBS_DIR}/{node_id}.pgm")
}

impl GraphDocument {
    /// Assembles and validates a document. `episodes` is in manifest order,
    /// which fixes each trajectory's `display_color_index`.
    pub fn build(
        application: impl Into<String>,
        graph: &AbstractGraph,
        positions: &[NodePosition],
        episodes: &[EpisodeInfo],
    ) -> Result<Self> {
        if positions.len() != graph.nodes.len() {
            return Err(Error::Consistency(format!(
                "{} positions for {} nodes",
                positions.len(),
                graph.nodes.len()
            )));
        }
        let nodes = graph
            .nodes
            .iter()
            .zip(positions)
            .map(|(n, p)| {
                if p.node_id != n.node_id {
                    return Err(Error::Consistency(format!(
                        "position for `{}` given in the slot of `{}`",
                        p.node_id, n.node_id
                    )));
                }
                Ok(DocNode {
                    cluster_id: n.cluster_id,
                    episode_id: n.episode_id.clone(),
                    member_count: n.member_count,
                    node_id: n.node_id.clone(),
                    t_first: n.t_first,
                    t_last: n.t_last,
                    thumbnail_ref: thumbnail_ref(&n.node_id),
                    x: p.x,
                    y: p.y,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let edges = graph
            .edges
            .iter()
            .map(|e| DocEdge {
                count: e.count,
                episode_id: e.episode_id.clone(),
                from_node: e.from_node.clone(),
                to_node: e.to_node.clone(),
            })
            .collect();
        let mut trajectories = BTreeMap::new();
        for (color, ep) in episodes.iter().enumerate() {
            let node_ids = graph.trajectories.get(&ep.episode_id).cloned().unwrap_or_default();
            let entry = DocTrajectory {
                agent_label: ep.agent_label.clone(),
                display_color_index: color,
                node_ids,
            };
            if trajectories.insert(ep.episode_id.clone(), entry).is_some() {
                return Err(Error::Consistency(format!("episode `{}` listed twice", ep.episode_id)));
            }
        }
        if let Some(id) = graph.trajectories.keys().find(|id| !trajectories.contains_key(*id)) {
            return Err(Error::Consistency(format!("no metadata for episode `{id}`")));
        }
        let doc = GraphDocument {
            application: application.into(),
            edges,
            nodes,
            schema_version: SCHEMA_VERSION,
            trajectories,
        };
        doc.validate()?;
        Ok(doc)
    }

    /// Schema version, id charset, referential integrity and value ranges.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Consistency(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("unsupported schema_version {}", self.schema_version));
        }
        let mut ids = HashSet::new();
        for n in &self.nodes {
            if !is_valid_id(&n.node_id) {
                return bad(format!("node id `{}` is outside [A-Za-z0-9#_-]", n.node_id));
            }
            if !ids.insert(n.node_id.as_str()) {
                return bad(format!("duplicate node id `{}`", n.node_id));
            }
            if !self.trajectories.contains_key(&n.episode_id) {
                return bad(format!("node `{}` has unknown episode `{}`", n.node_id, n.episode_id));
            }
            if !n.x.is_finite() || !n.y.is_finite() {
                return bad(format!("node `{}` has a non-finite position", n.node_id));
            }
            if n.member_count == 0 || n.t_first > n.t_last {
                return bad(format!("node `{}` has inconsistent membership", n.node_id));
            }
            if n.thumbnail_ref != thumbnail_ref(&n.node_id) {
                return bad(format!("node `{}` has thumbnail_ref `{}`", n.node_id, n.thumbnail_ref));
            }
        }
        for e in &self.edges {
            for end in [&e.from_node, &e.to_node] {
                if !ids.contains(end.as_str()) {
                    return bad(format!("edge references unknown node `{end}`"));
                }
            }
            if e.from_node == e.to_node {
                return bad(format!("self-loop on `{}`", e.from_node));
            }
            if e.count == 0 {
                return bad(format!("edge {} -> {} has zero count", e.from_node, e.to_node));
            }
            if !self.trajectories.contains_key(&e.episode_id) {
                return bad(format!("edge has unknown episode `{}`", e.episode_id));
            }
        }
        let mut colors = BTreeSet::new();
        for (id, t) in &self.trajectories {
            if !is_valid_id(id) {
                return bad(format!("episode id `{id}` is outside [A-Za-z0-9#_-]"));
            }
            if !colors.insert(t.display_color_index) {
                return bad(format!("display_color_index {} reused", t.display_color_index));
            }
            if let Some(n) = t.node_ids.iter().find(|n| !ids.contains(n.as_str())) {
                return bad(format!("trajectory `{id}` references unknown node `{n}`"));
            }
        }
        Ok(())
    }

    /// Pretty-printed JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("document serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Input(format!("bad graph document: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: GraphDocument = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        doc.validate()?;
        Ok(doc)
    }
}

/// Writes `graph.json` and one PGM thumbnail per node into `dir`; stale
/// thumbnails from earlier exports are removed. Returns the path of
/// `graph.json`.
pub fn export_document(doc: &GraphDocument, thumbnails: &BTreeMap<String, FrameTensor>, dir: &Path) -> Result<PathBuf> {
    doc.validate()?;
    if thumbnails.len() != doc.nodes.len() || doc.nodes.iter().any(|n| !thumbnails.contains_key(&n.node_id)) {
        return Err(Error::Consistency("thumbnails do not match the document's nodes".into()));
    }
    let thumbs = dir.join(THUMBS_DIR);
    std::fs::create_dir_all(&thumbs).map_err(|e| Error::io(&thumbs, e))?;
    let keep: HashSet<String> = doc.nodes.iter().map(|n| format!("{}.pgm", n.node_id)).collect();
    for entry in std::fs::read_dir(&thumbs).map_err(|e| Error::io(&thumbs, e))? {
        let entry = entry.map_err(|e| Error::io(&thumbs, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".pgm") && !keep.contains(&name) {
            std::fs::remove_file(entry.path()).map_err(|e| Error::io(entry.path(), e))?;
        }
    }
    for n in &doc.nodes {
        let path = dir.join(&n.thumbnail_ref);
        std::fs::write(&path, encode_pgm(&thumbnails[&n.node_id])).map_err(|e| Error::io(&path, e))?;
    }
    let path = dir.join(GRAPH_FILE);
    std::fs::write(&path, doc.to_json()).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Binary PGM (P5), 8-bit; multi-channel frames are averaged first.
pub fn encode_pgm(frame: &FrameTensor) -> Vec<u8> {
    let gray = frame.to_grayscale();
    let mut out = format!("P5\n{} {}\n255\n", gray.width(), gray.height()).into_bytes();
    out.extend(gray.to_gray_u8());
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Parses the P5 files written by [`encode_pgm`] (comments are not supported).
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let err = |m: &str| Error::Input(format!("bad PGM: {m}"));
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
            pos += 1;
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            pos += 1;
        }
        if start == pos {
            return Err(err("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| err("non-ASCII header"))?);
    }
    if fields[0] != "P5" {
        return Err(err("not a P5 file"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| err("bad number"));
    let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval != 255 {
        return Err(err("only 8-bit images are supported"));
    }
    // exactly one whitespace byte separates the header from the raster
    let raster = bytes.get(pos + 1..).ok_or_else(|| err("missing raster"))?;
    if raster.len() != width * height {
        return Err(err("raster size does not match header"));
    }
    Ok(GrayImage {
        width,
        height,
        pixels: raster.to_vec(),
    })
}
