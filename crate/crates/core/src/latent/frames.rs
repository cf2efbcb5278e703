//! Raw frame files and the episode manifest.
//!
//! Frame file layout:
//!
//! ```text
//! FRAMES1\n
//! n=<count>;h=<H>;w=<W>;c=<C>\n
//! n*H*W*C unsigned bytes, frame-major then row-major (channels interleaved)
//! ```
//!
//! Manifest: `{ "episodes": [ { "id": str, "agent": str, "frames": str } ] }`
//! with `frames` resolved relative to the manifest's directory.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Episode;
use crate::error::{Error, Result};
use crate::frame::{FrameTensor, Shape};

pub const FRAMES_MAGIC: &[u8] = b"FRAMES1\n";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub episodes: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub agent: String,
    pub frames: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadOptions {
    /// Average multi-channel input down to one channel.
    pub grayscale: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { grayscale: true }
    }
}

/// Raw 8-bit frames as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFrames {
    pub shape: Shape,
    pub count: usize,
    pub bytes: Vec<u8>,
}

impl RawFrames {
    pub fn frame(&self, i: usize) -> &[u8] {
        let n = self.shape.len();
        &self.bytes[i * n..(i + 1) * n]
    }

    /// Quantizes frames (×255, rounded) for storage.
    pub fn from_frames(frames: &[FrameTensor]) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::Input("no frames to store".into()))?;
        let shape = first.shape();
        let mut bytes = Vec::with_capacity(shape.len() * frames.len());
        for f in frames {
            if f.shape() != shape {
                return Err(Error::InputShape {
                    expected: shape.to_string(),
                    actual: f.shape().to_string(),
                });
            }
            bytes.extend(f.pixels().iter().map(|v| (v * 255.0).round() as u8));
        }
        Ok(RawFrames {
            shape,
            count: frames.len(),
            bytes,
        })
    }
}

pub fn write_frames<W: Write>(raw: &RawFrames, mut w: W) -> std::io::Result<()> {
    w.write_all(FRAMES_MAGIC)?;
    writeln!(
        w,
        "n={};h={};w={};c={}",
        raw.count, raw.shape.height, raw.shape.width, raw.shape.channels
    )?;
    w.write_all(&raw.bytes)?;
    w.flush()
}

pub fn read_frames<R: Read>(r: R, origin: &Path) -> Result<RawFrames> {
    let fmt = |reason: String| Error::format(origin, reason);
    let mut r = BufReader::new(r);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| fmt("truncated magic".into()))?;
    if magic != FRAMES_MAGIC {
        return Err(fmt("bad magic, expected FRAMES1".into()));
    }
    let mut header = String::new();
    r.read_line(&mut header).map_err(|e| Error::io(origin, e))?;
    let header = header
        .strip_suffix('\n')
        .ok_or_else(|| fmt("header line not terminated".into()))?;
    let mut fields = [None; 4];
    for part in header.split(';') {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| fmt(format!("malformed header field `{part}`")))?;
        let slot = match key {
            "n" => 0,
            "h" => 1,
            "w" => 2,
            "c" => 3,
            _ => return Err(fmt(format!("unknown header key `{key}`"))),
        };
        let v: usize = value
            .parse()
            .map_err(|_| fmt(format!("bad value for `{key}`: `{value}`")))?;
        fields[slot] = Some(v);
    }
    let [Some(n), Some(h), Some(w), Some(c)] = fields else {
        return Err(fmt(format!("header `{header}` must define n, h, w and c")));
    };
    let shape = Shape::new(h, w, c);
    if shape.is_empty() {
        return Err(fmt(format!("frame shape {shape} has a zero dimension")));
    }
    let expected = n
        .checked_mul(shape.len())
        .ok_or_else(|| fmt("frame count overflows".into()))?;
    let mut bytes = Vec::with_capacity(expected);
    r.read_to_end(&mut bytes).map_err(|e| Error::io(origin, e))?;
    if bytes.len() != expected {
        return Err(fmt(format!(
            "payload has {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    Ok(RawFrames {
        shape,
        count: n,
        bytes,
    })
}

pub fn save_frames(raw: &RawFrames, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_frames(raw, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_frames(path: &Path) -> Result<RawFrames> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_frames(file, path)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

pub fn load_episodes(manifest_path: &Path) -> Result<Vec<Episode>> {
    load_episodes_with(manifest_path, LoadOptions::default())
}

/// Loads every episode listed in the manifest, in manifest order.
pub fn load_episodes_with(manifest_path: &Path, opts: LoadOptions) -> Result<Vec<Episode>> {
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut seen = std::collections::HashSet::new();
    let mut episodes = Vec::with_capacity(manifest.episodes.len());
    for entry in manifest.episodes {
        if !seen.insert(entry.id.clone()) {
            return Err(Error::format(
                manifest_path,
                format!("duplicate episode id `{}`", entry.id),
            ));
        }
        let path: PathBuf = base.join(&entry.frames);
        let raw = load_frames(&path)?;
        if raw.count == 0 {
            return Err(Error::format(&path, "episode has no frames"));
        }
        let frames = (0..raw.count)
            .map(|i| {
                FrameTensor::from_u8(raw.shape, raw.frame(i)).map(|f| {
                    if opts.grayscale {
                        f.to_grayscale()
                    } else {
                        f
                    }
                })
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::format(&path, e.to_string()))?;
        episodes.push(Episode::new(entry.id, entry.agent, frames)?);
    }
    Ok(episodes)
}

/// Writes each episode as `<dir>/<id>.frames` plus `<dir>/manifest.json`.
pub fn write_dataset(episodes: &[Episode], dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = Manifest { episodes: vec![] };
    for ep in episodes {
        let name = format!("{}.frames", ep.episode_id);
        save_frames(&RawFrames::from_frames(&ep.frames)?, &dir.join(&name))?;
        manifest.episodes.push(ManifestEntry {
            id: ep.episode_id.clone(),
            agent: ep.agent_label.clone(),
            frames: name,
        });
    }
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(n: usize, shape: Shape) -> RawFrames {
        RawFrames {
            shape,
            count: n,
            bytes: (0..n * shape.len()).map(|i| (i * 37 % 256) as u8).collect(),
        }
    }

    #[test]
    fn frames_roundtrip() {
        let r = raw(3, Shape::new(2, 3, 1));
        let mut buf = Vec::new();
        write_frames(&r, &mut buf).unwrap();
        assert!(buf.starts_with(b"FRAMES1\nn=3;h=2;w=3;c=1\n"));
        assert_eq!(read_frames(&buf[..], Path::new("mem")).unwrap(), r);
    }

    #[test]
    fn truncated_payload_is_format_error() {
        let mut buf = Vec::new();
        write_frames(&raw(2, Shape::new(2, 2, 1)), &mut buf).unwrap();
        buf.pop();
        assert!(matches!(
            read_frames(&buf[..], Path::new("mem")),
            Err(Error::Format { .. })
        ));
        assert!(read_frames(&b"FRAMES1\nn=1;h=1;w=1\n\0"[..], Path::new("mem")).is_err());
    }

    #[test]
    fn manifest_loading() {
        let dir = tempfile::tempdir().unwrap();
        let shape = Shape::new(2, 2, 3);
        let mut r = raw(3, shape);
        r.bytes[0] = 255;
        r.bytes[1] = 255;
        r.bytes[2] = 255;
        r.bytes[3] = 0;
        r.bytes[4] = 0;
        r.bytes[5] = 0;
        save_frames(&r, &dir.path().join("a.frames")).unwrap();
        let manifest = dir.path().join("m.json");
        std::fs::write(
            &manifest,
            r#"{"episodes":[{"id":"ep-a","agent":"dqn","frames":"a.frames"}]}"#,
        )
        .unwrap();
        let eps = load_episodes(&manifest).unwrap();
        assert_eq!(eps.len(), 1);
        assert_eq!(eps[0].frames.len(), 3);
        assert_eq!(eps[0].frames[0].shape(), Shape::new(2, 2, 1));
        assert_eq!(eps[0].frames[0].pixels()[0], 1.0);
        assert_eq!(eps[0].frames[0].pixels()[1], 0.0);

        let rgb = load_episodes_with(&manifest, LoadOptions { grayscale: false }).unwrap();
        assert_eq!(rgb[0].frames[0].shape(), shape);

        std::fs::write(&manifest, r#"{"episodes":[]}"#).unwrap();
        assert!(load_episodes(&manifest).unwrap().is_empty());

        std::fs::write(
            &manifest,
            r#"{"episodes":[{"id":"x","agent":"a","frames":"missing.frames"}]}"#,
        )
        .unwrap();
        assert!(matches!(load_episodes(&manifest), Err(Error::Io { .. })));
        assert!(matches!(
            load_episodes(&dir.path().join("nope.json")),
            Err(Error::Io { .. })
        ));
        std::fs::write(&manifest, "{").unwrap();
        assert!(matches!(load_episodes(&manifest), Err(Error::Format { .. })));
    }
}
