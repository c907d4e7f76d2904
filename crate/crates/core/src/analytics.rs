//! Directional line-crossing counts and skeleton-based length estimates.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::geometry::{rasterize_cells, CartesianRaster, SonarGeometry};
use crate::simulator::Direction;
use crate::tracker::TrackOutput;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountEvent {
    pub track_id: u64,
    pub frame_index: u32,
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CountSummary {
    pub upstream: u32,
    pub downstream: u32,
    pub net: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyticsConfig {
    pub counting_line_y_m: f64,
    pub debounce_frames: u32,
    pub meters_per_pixel: f64,
    /// Masks smaller than this are not measured.
    pub min_mask_cells: usize,
    /// Skip masks touching the edge of the grid, where the fish is cut off.
    pub skip_border_masks: bool,
}

impl Default for AnalyticsConfig {
    fn default() -> Self {
        Self {
            counting_line_y_m: 10.0,
            debounce_frames: 10,
            meters_per_pixel: 0.02,
            min_mask_cells: 12,
            skip_border_masks: true,
        }
    }
}

impl AnalyticsConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.counting_line_y_m.is_finite() {
            return Err(domain("counting_line_y_m must be finite"));
        }
        if !(self.meters_per_pixel > 0.0 && self.meters_per_pixel.is_finite()) {
            return Err(domain("meters_per_pixel must be positive"));
        }
        Ok(())
    }
}

/// World-space centroids of one track, in frame order.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackHistory {
    pub track_id: u64,
    pub points: Vec<(u32, (f64, f64))>,
}

/// Groups track outputs by id and maps each box center to world meters.
pub fn track_histories(outputs: &[TrackOutput], geom: &SonarGeometry) -> Vec<TrackHistory> {
    let mut by_id: BTreeMap<u64, Vec<(u32, (f64, f64))>> = BTreeMap::new();
    for o in outputs {
        let (b, r) = o.bbox.center_index();
        by_id
            .entry(o.track_id)
            .or_default()
            .push((o.frame_index, geom.polar_to_cartesian_unchecked(b, r)));
    }
    by_id
        .into_iter()
        .map(|(track_id, mut points)| {
            points.sort_by_key(|p| p.0);
            points.dedup_by_key(|p| p.0);
            TrackHistory { track_id, points }
        })
        .collect()
}

/// Emits an event whenever the centroid moves to the other side of the line
/// `y = counting_line_y_m` between consecutive observations (`y ≥ line`
/// counts as beyond it). A further side change within `debounce_frames` of
/// the last event is ignored.
pub fn detect_crossings(
    history: &TrackHistory,
    counting_line_y_m: f64,
    debounce_frames: u32,
) -> Vec<CountEvent> {
    let mut events = Vec::new();
    let mut last_event: Option<u32> = None;
    for w in history.points.windows(2) {
        let (_, (_, y0)) = w[0];
        let (f1, (_, y1)) = w[1];
        let (s0, s1) = (y0 >= counting_line_y_m, y1 >= counting_line_y_m);
        if s0 == s1 {
            continue;
        }
        if let Some(last) = last_event {
            if f1 - last <= debounce_frames {
                continue;
            }
        }
        events.push(CountEvent {
            track_id: history.track_id,
            frame_index: f1,
            direction: if y1 > y0 {
                Direction::Upstream
            } else {
                Direction::Downstream
            },
        });
        last_event = Some(f1);
    }
    events
}

pub fn count_all(
    outputs: &[TrackOutput],
    geom: &SonarGeometry,
    cfg: &AnalyticsConfig,
) -> Vec<CountEvent> {
    let mut events: Vec<CountEvent> = track_histories(outputs, geom)
        .iter()
        .flat_map(|h| detect_crossings(h, cfg.counting_line_y_m, cfg.debounce_frames))
        .collect();
    events.sort_by_key(|e| (e.frame_index, e.track_id));
    events
}

pub fn net_counts(events: &[CountEvent]) -> CountSummary {
    let up = events
        .iter()
        .filter(|e| e.direction == Direction::Upstream)
        .count() as u32;
    let down = events.len() as u32 - up;
    CountSummary {
        upstream: up,
        downstream: down,
        net: up as i64 - down as i64,
    }
}

/// Row-major binary image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_raster(r: &CartesianRaster) -> Self {
        Self {
            width: r.width_px,
            height: r.height_px,
            bits: r.values.iter().map(|&v| v > 0.0).collect(),
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: &[(usize, usize)]) -> Self {
        let mut img = Self::new(width, height);
        for &(c, r) in pixels {
            img.set(c, r, true);
        }
        img
    }

    #[inline]
    pub fn get(&self, col: isize, row: isize) -> bool {
        col >= 0
            && row >= 0
            && (col as usize) < self.width
            && (row as usize) < self.height
            && self.bits[row as usize * self.width + col as usize]
    }

    pub fn set(&mut self, col: usize, row: usize, v: bool) {
        self.bits[row * self.width + col] = v;
    }

    pub fn pixels(&self) -> Vec<(usize, usize)> {
        (0..self.bits.len())
            .filter(|&i| self.bits[i])
            .map(|i| (i % self.width, i / self.width))
            .collect()
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Zhang–Suen thinning to a fixpoint. Pixels outside the image are
/// background.
pub fn skeletonize(img: &BinaryImage) -> BinaryImage {
    let mut out = img.clone();
    loop {
        let mut changed = false;
        for pass in 0..2 {
            let doomed: Vec<usize> = (0..out.bits.len())
                .filter(|&i| out.bits[i] && removable(&out, i, pass))
                .collect();
            changed |= !doomed.is_empty();
            for i in doomed {
                out.bits[i] = false;
            }
        }
        if !changed {
            return out;
        }
    }
}

fn removable(img: &BinaryImage, i: usize, pass: usize) -> bool {
    let (c, r) = ((i % img.width) as isize, (i / img.width) as isize);
    // P2..P9 clockwise from north; rows grow downward in the neighbor walk
    let p = [
        img.get(c, r - 1),
        img.get(c + 1, r - 1),
        img.get(c + 1, r),
        img.get(c + 1, r + 1),
        img.get(c, r + 1),
        img.get(c - 1, r + 1),
        img.get(c - 1, r),
        img.get(c - 1, r - 1),
    ];
    let b = p.iter().filter(|&&v| v).count();
    if !(2..=6).contains(&b) {
        return false;
    }
    let a = (0..8).filter(|&k| !p[k] && p[(k + 1) % 8]).count();
    if a != 1 {
        return false;
    }
    let (p2, p4, p6, p8) = (p[0], p[2], p[4], p[6]);
    if pass == 0 {
        !(p2 && p4 && p6) && !(p4 && p6 && p8)
    } else {
        !(p2 && p4 && p8) && !(p2 && p6 && p8)
    }
}

#[derive(PartialEq)]
struct Frontier(f64, usize);

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// Neighbors under m-adjacency: all 4-neighbors, and a diagonal neighbor
/// only when neither shared 4-neighbor is set. Avoids corner shortcuts that
/// would make a right-angle path shorter than its pixel count.
fn m_neighbors(img: &BinaryImage, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
    let (c, r) = ((i % img.width) as isize, (i / img.width) as isize);
    const STEPS: [(isize, isize); 8] = [
        (1, 0),
        (-1, 0),
        (0, 1),
        (0, -1),
        (1, 1),
        (1, -1),
        (-1, 1),
        (-1, -1),
    ];
    STEPS.iter().filter_map(move |&(dc, dr)| {
        let (nc, nr) = (c + dc, r + dr);
        if !img.get(nc, nr) {
            return None;
        }
        let diagonal = dc != 0 && dr != 0;
        if diagonal && (img.get(c + dc, r) || img.get(c, r + dr)) {
            return None;
        }
        let cost = if diagonal {
            std::f64::consts::SQRT_2
        } else {
            1.0
        };
        Some((nr as usize * img.width + nc as usize, cost))
    })
}

/// Shortest-path distances and predecessors from `start`; unreachable
/// pixels are `∞`.
fn geodesic(img: &BinaryImage, start: usize) -> (Vec<f64>, Vec<usize>) {
    let mut dist = vec![f64::INFINITY; img.bits.len()];
    let mut prev = vec![usize::MAX; img.bits.len()];
    let mut heap = BinaryHeap::new();
    dist[start] = 0.0;
    heap.push(Frontier(0.0, start));
    while let Some(Frontier(d, i)) = heap.pop() {
        if d > dist[i] {
            continue;
        }
        for (j, w) in m_neighbors(img, i) {
            let nd = d + w;
            if nd < dist[j] {
                dist[j] = nd;
                prev[j] = i;
                heap.push(Frontier(nd, j));
            }
        }
    }
    (dist, prev)
}

fn farthest(dist: &[f64]) -> Option<(usize, f64)> {
    dist.iter()
        .enumerate()
        .filter(|(_, d)| d.is_finite())
        .fold(None, |best, (i, &d)| match best {
            Some((_, bd)) if bd >= d => best,
            _ => Some((i, d)),
        })
}

/// Longest geodesic path through the skeleton as pixel indices plus its
/// length, via a double shortest-path sweep per connected piece; the longest
/// piece wins.
fn longest_path(skeleton: &BinaryImage) -> Option<(Vec<usize>, f64)> {
    let mut unvisited: Vec<bool> = skeleton.bits.clone();
    let mut best: Option<(Vec<usize>, f64)> = None;
    for start in 0..skeleton.bits.len() {
        if !unvisited[start] {
            continue;
        }
        let (first, _) = geodesic(skeleton, start);
        for (i, d) in first.iter().enumerate() {
            if d.is_finite() {
                unvisited[i] = false;
            }
        }
        let (a, _) = farthest(&first).expect("start is reachable");
        let (second, prev) = geodesic(skeleton, a);
        let (b, len) = farthest(&second).expect("a is reachable");
        if best.as_ref().is_none_or(|(_, l)| len > *l) {
            let mut path = vec![b];
            while *path.last().unwrap() != a {
                path.push(prev[*path.last().unwrap()]);
            }
            best = Some((path, len));
        }
    }
    best
}

/// Longest geodesic path through the skeleton, in pixels (8-neighbor steps
/// of 1 or √2, diagonal steps only where no 4-connected route exists).
pub fn centerline_length_px(skeleton: &BinaryImage) -> Result<f64> {
    longest_path(skeleton)
        .map(|(_, len)| len)
        .ok_or_else(|| domain("skeleton is empty"))
}

/// How far the shape continues past the end pixel `path[0]`, following the
/// direction of the last few path steps: the distance from that pixel's
/// center to the boundary, less the half pixel the endpoint correction
/// already covers.
fn end_extension(img: &BinaryImage, path: &[usize]) -> f64 {
    const LOOKBACK: usize = 8;
    const STEP: f64 = 0.05;
    if path.len() < 2 {
        return 0.0;
    }
    let xy = |i: usize| ((i % img.width) as f64, (i / img.width) as f64);
    let (ex, ey) = xy(path[0]);
    let (qx, qy) = xy(path[LOOKBACK.min(path.len() - 1)]);
    let norm = (ex - qx).hypot(ey - qy);
    if norm == 0.0 {
        return 0.0;
    }
    let (dx, dy) = ((ex - qx) / norm, (ey - qy) / norm);
    // sample at half-step offsets so no probe lands exactly on a pixel edge
    let mut k = 0u32;
    let probe = |k: u32| (k as f64 + 0.5) * STEP;
    while img.get(
        (ex + probe(k) * dx).round() as isize,
        (ey + probe(k) * dy).round() as isize,
    ) {
        k += 1;
    }
    (probe(k) - STEP / 2.0 - 0.5).max(0.0)
}

/// Length of one binary shape in meters: the skeleton's longest path,
/// extended at both ends along its direction to the shape boundary (thinning
/// eats into the ends of elongated shapes), plus one pixel for the physical
/// extent of the two end pixels.
pub fn length_from_image(img: &BinaryImage, meters_per_pixel: f64) -> Result<f64> {
    let (mut path, len) =
        longest_path(&skeletonize(img)).ok_or_else(|| domain("shape is empty"))?;
    let head = end_extension(img, &path);
    path.reverse();
    let tail = end_extension(img, &path);
    Ok((len + head + tail + 1.0) * meters_per_pixel)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthEstimate {
    pub track_id: u64,
    pub length_m: f64,
    pub sample_count: usize,
    pub samples_m: Vec<f64>,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Length of one track from the masks of its outputs: rasterize each
/// qualifying mask to Cartesian pixels, thin it, measure, and take the
/// median over frames.
pub fn estimate_length(
    track_id: u64,
    outputs: &[&TrackOutput],
    geom: &SonarGeometry,
    cfg: &AnalyticsConfig,
) -> Result<LengthEstimate> {
    let samples: Vec<f64> = outputs
        .par_iter()
        .filter_map(|o| {
            let mask = o.mask.as_ref()?;
            if mask.area() < cfg.min_mask_cells.max(1) {
                return None;
            }
            if cfg.skip_border_masks && mask.touches_border(geom.beam_count, geom.range_bin_count) {
                return None;
            }
            let raster = rasterize_cells(&mask.cells(), geom, cfg.meters_per_pixel).ok()?;
            length_from_image(&BinaryImage::from_raster(&raster), cfg.meters_per_pixel).ok()
        })
        .collect();
    let length_m = median(&samples)
        .ok_or_else(|| domain(format!("track {track_id} has no measurable masks")))?;
    Ok(LengthEstimate {
        track_id,
        length_m,
        sample_count: samples.len(),
        samples_m: samples,
    })
}

/// Estimates for every track with at least one measurable mask, by id.
pub fn estimate_lengths(
    outputs: &[TrackOutput],
    geom: &SonarGeometry,
    cfg: &AnalyticsConfig,
) -> Vec<LengthEstimate> {
    let mut by_id: BTreeMap<u64, Vec<&TrackOutput>> = BTreeMap::new();
    for o in outputs {
        by_id.entry(o.track_id).or_default().push(o);
    }
    by_id
        .into_iter()
        .filter_map(|(id, outs)| estimate_length(id, &outs, geom, cfg).ok())
        .collect()
}
