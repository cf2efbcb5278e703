use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Episode;
use crate::error::{Error, Result};
use crate::frame::{FrameTensor, Shape};

/// Edge length of the square dot.
pub const DOT_SIZE: usize = 3;
/// Largest per-frame displacement of the dot, in pixels.
const MAX_STEP: usize = 2;
/// Preferred upper bound on frames spent between two anchors.
const MAX_TRANSIT: usize = 3;

type Pos = (usize, usize);

/// Synthetic episode: a bright square dot dwells at `n_segments` distinct
/// anchors in turn and walks between consecutive anchors.
///
/// Transits move the dot at most [`MAX_STEP`] pixels per frame along an
/// L-shaped path (rows first, then columns) and are kept short, so the
/// dwell plateaus dominate; all remaining frames are dwell frames, split
/// evenly across anchors.
pub fn synth_moving_dot(n_frames: usize, side: usize, seed: u64, n_segments: usize) -> Result<Episode> {
    if side < 8 {
        return Err(Error::Input(format!("side must be at least 8, got {side}")));
    }
    if n_segments == 0 || n_frames < n_segments {
        return Err(Error::Input(format!(
            "need n_frames >= n_segments >= 1, got {n_frames} frames and {n_segments} segments"
        )));
    }
    let span = side - DOT_SIZE + 1;
    if n_segments > span * span {
        return Err(Error::Input(format!(
            "a {side}x{side} frame has only {} distinct dot positions",
            span * span
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let anchors = pick_anchors(side, n_segments, &mut rng);
    let transits: Vec<Vec<Pos>> = anchors.windows(2).map(|w| transit(w[0], w[1])).collect();
    let transit_frames: usize = transits.iter().map(Vec::len).sum();
    if n_frames < transit_frames + n_segments {
        return Err(Error::Input(format!(
            "{n_frames} frames cannot fit {transit_frames} transit frames plus one dwell frame per anchor"
        )));
    }
    let dwell_total = n_frames - transit_frames;

    let mut path = Vec::with_capacity(n_frames);
    for (i, &anchor) in anchors.iter().enumerate() {
        let dwell = dwell_total / n_segments + usize::from(i < dwell_total % n_segments);
        path.extend(std::iter::repeat_n(anchor, dwell));
        if let Some(t) = transits.get(i) {
            path.extend_from_slice(t);
        }
    }
    debug_assert_eq!(path.len(), n_frames);

    let shape = Shape::new(side, side, 1);
    let frames = path.into_iter().map(|p| render(shape, p)).collect::<Result<Vec<_>>>()?;
    Episode::new(format!("synth-{seed}"), "synthetic", frames)
}

/// Anchors are placed as a seeded walk. Each anchor's dot does not overlap
/// any earlier anchor's dot, and consecutive anchors are close enough that
/// the transit between them takes at most [`MAX_TRANSIT`] frames; both
/// limits are relaxed only when the frame is too small to satisfy them.
/// Dot centers stay one pixel from the border so the dot is fully visible.
fn pick_anchors(side: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<Pos> {
    let (lo, hi) = (DOT_SIZE / 2, side - 1 - DOT_SIZE / 2);
    let all: Vec<Pos> = (lo..=hi).flat_map(|r| (lo..=hi).map(move |c| (r, c))).collect();
    let first = all[rng.random_range(0..all.len())];
    let mut anchors = vec![first];
    while anchors.len() < n {
        let prev = *anchors.last().unwrap();
        let fits = |p: &Pos, gap: usize, max_transit: usize| {
            anchors.iter().all(|a| chebyshev(*a, *p) >= gap) && transit_len(prev, *p) <= max_transit
        };
        let mut next = None;
        'relax: for gap in (1..=DOT_SIZE).rev() {
            for max_transit in MAX_TRANSIT..=2 * side {
                let cands: Vec<Pos> = all.iter().copied().filter(|p| fits(p, gap, max_transit)).collect();
                if !cands.is_empty() {
                    next = Some(cands[rng.random_range(0..cands.len())]);
                    break 'relax;
                }
            }
        }
        // n is bounded by the number of distinct positions, so gap 1 always fits
        anchors.push(next.expect("a free anchor position exists"));
    }
    anchors
}

fn chebyshev(a: Pos, b: Pos) -> usize {
    a.0.abs_diff(b.0).max(a.1.abs_diff(b.1))
}

fn transit_len(from: Pos, to: Pos) -> usize {
    (from.0.abs_diff(to.0).div_ceil(MAX_STEP) + from.1.abs_diff(to.1).div_ceil(MAX_STEP)).saturating_sub(1)
}

/// Positions strictly between `from` and `to`.
fn transit(from: Pos, to: Pos) -> Vec<Pos> {
    let mut out = Vec::new();
    let mut cur = from;
    while cur.0 != to.0 {
        let step = cur.0.abs_diff(to.0).min(MAX_STEP);
        cur.0 = if to.0 > cur.0 { cur.0 + step } else { cur.0 - step };
        out.push(cur);
    }
    while cur.1 != to.1 {
        let step = cur.1.abs_diff(to.1).min(MAX_STEP);
        cur.1 = if to.1 > cur.1 { cur.1 + step } else { cur.1 - step };
        out.push(cur);
    }
    out.pop();
    out
}

fn render(shape: Shape, (row, col): Pos) -> Result<FrameTensor> {
    let mut px = vec![0.0; shape.len()];
    let h = DOT_SIZE / 2;
    for r in row - h..=row + h {
        for c in col - h..=col + h {
            px[r * shape.width + c] = 1.0;
        }
    }
    FrameTensor::new(shape, px)
}
