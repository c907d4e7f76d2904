//! DeepSORT-style multi-object tracking.
//!
//! Each frame: predict every live track; run the matching cascade over
//! confirmed tracks (most recently updated first) with cost
//! `λ·d²/gate + (1−λ)·min cosine distance to the track's gallery`, `+∞` when
//! the squared Mahalanobis distance `d²` exceeds the gate; then match what is
//! left (tentative tracks plus unmatched confirmed tracks) on IoU; update,
//! spawn and retire tracks. Tentative tracks are deleted on their first miss.
//!
//! When a detection or track has no appearance feature the appearance term is
//! zero and only the motion term remains.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::appearance::{appearance_feature, cosine_distance};
use crate::assign::{hungarian, CostMatrix};
use crate::detector::Detection;
use crate::error::{domain, Result};
use crate::frame::{iou, GridBox, SonarFrame};
use crate::kalman::{self, Matrix8, NoiseWeights, Vector8};
use crate::mask::Mask;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// Squared Mahalanobis cutoff (χ², 4 dof).
    pub gating_threshold: f64,
    pub max_age: u32,
    pub n_init: u32,
    pub appearance_budget: usize,
    pub lambda_motion: f64,
    pub match_iou_floor: f64,
    pub noise: NoiseWeights,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            gating_threshold: kalman::CHI2_95_4DOF,
            max_age: 30,
            n_init: 3,
            appearance_budget: 100,
            lambda_motion: 0.5,
            match_iou_floor: 0.3,
            noise: NoiseWeights::default(),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda_motion) {
            return Err(domain("lambda_motion must be in [0, 1]"));
        }
        if self.max_age < 1 || self.n_init < 1 {
            return Err(domain("max_age and n_init must be at least 1"));
        }
        if !(self.gating_threshold > 0.0) {
            return Err(domain("gating_threshold must be positive"));
        }
        if !(0.0..=1.0).contains(&self.match_iou_floor) {
            return Err(domain("match_iou_floor must be in [0, 1]"));
        }
        if self.appearance_budget == 0 {
            return Err(domain("appearance_budget must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Deleted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackOutput {
    pub track_id: u64,
    pub frame_index: u32,
    /// Box of the detection associated in this frame.
    pub bbox: GridBox,
    pub confidence: f64,
    pub species_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Mask>,
}

#[derive(Debug, Clone)]
pub struct TrackState {
    pub track_id: u64,
    pub mean: Vector8,
    pub covariance: Matrix8,
    pub status: TrackStatus,
    pub hits: u32,
    pub age: u32,
    pub frames_since_update: u32,
    pub gallery: VecDeque<Vec<f64>>,
    /// Box of the last associated detection.
    pub last_box: GridBox,
    /// Observations made while tentative, handed out once on confirmation.
    pending: Vec<TrackOutput>,
}

impl TrackState {
    fn new(track_id: u64, bbox: &GridBox, noise: &NoiseWeights) -> Self {
        let (mean, covariance) = kalman::initiate(&kalman::box_to_measurement(bbox), noise);
        Self {
            track_id,
            mean,
            covariance,
            status: TrackStatus::Tentative,
            hits: 1,
            age: 1,
            frames_since_update: 0,
            gallery: VecDeque::new(),
            last_box: *bbox,
            pending: Vec::new(),
        }
    }

    pub fn predict(&mut self, noise: &NoiseWeights) {
        let q = kalman::process_noise(&self.mean, noise);
        let (m, p) = kalman::predict(&self.mean, &self.covariance, &q);
        self.mean = m;
        self.mean[2] = self.mean[2].max(1e-6);
        self.mean[3] = self.mean[3].max(1e-3);
        self.covariance = p;
        self.age += 1;
        self.frames_since_update += 1;
    }

    pub fn update(&mut self, bbox: &GridBox, noise: &NoiseWeights) -> Result<()> {
        let r = kalman::measurement_noise(&self.mean, noise);
        let (m, p) = kalman::update(
            &self.mean,
            &self.covariance,
            &kalman::box_to_measurement(bbox),
            &r,
        )?;
        self.mean = m;
        self.mean[2] = self.mean[2].max(1e-6);
        self.mean[3] = self.mean[3].max(1e-3);
        self.covariance = p;
        self.hits += 1;
        self.frames_since_update = 0;
        self.last_box = *bbox;
        Ok(())
    }

    pub fn bbox(&self) -> GridBox {
        kalman::state_to_box(&self.mean)
    }

    fn gate_distance(&self, bbox: &GridBox, noise: &NoiseWeights) -> f64 {
        let r = kalman::measurement_noise(&self.mean, noise);
        kalman::gating_distance(
            &self.mean,
            &self.covariance,
            &r,
            &kalman::box_to_measurement(bbox),
        )
    }

    fn appearance_distance(&self, feature: Option<&Vec<f64>>) -> f64 {
        match feature {
            Some(f) if !self.gallery.is_empty() => self
                .gallery
                .iter()
                .map(|g| cosine_distance(g, f))
                .fold(f64::INFINITY, f64::min)
                .max(0.0),
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    tracks: Vec<TrackState>,
    next_id: u64,
    last_frame: Option<u32>,
    backfill: Vec<TrackOutput>,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
            backfill: Vec::new(),
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn tracks(&self) -> &[TrackState] {
        &self.tracks
    }

    /// Tentative-phase observations of tracks confirmed by the last `step`,
    /// sorted by (frame, track id).
    pub fn take_backfill(&mut self) -> Vec<TrackOutput> {
        std::mem::take(&mut self.backfill)
    }

    /// Advances one frame. `frame` supplies intensities for appearance
    /// features; without it association is motion-only.
    pub fn step(
        &mut self,
        frame_index: u32,
        frame: Option<&SonarFrame>,
        detections: &[Detection],
    ) -> Result<Vec<TrackOutput>> {
        if let Some(last) = self.last_frame {
            if frame_index <= last {
                return Err(domain(format!(
                    "frame {frame_index} does not follow frame {last}"
                )));
            }
        }
        if detections.iter().any(|d| d.frame_index != frame_index) {
            return Err(domain("detection belongs to a different frame"));
        }
        if detections.iter().any(|d| !d.bbox.is_valid()) {
            return Err(domain("detection box must have positive size"));
        }
        self.last_frame = Some(frame_index);
        self.backfill.clear();
        let cfg = self.config.clone();

        for t in &mut self.tracks {
            t.predict(&cfg.noise);
        }

        let features: Vec<Option<Vec<f64>>> = detections
            .iter()
            .map(|d| {
                let frame = frame?;
                let mask = match &d.mask {
                    Some(m) => m.clone(),
                    None => {
                        Mask::filled_box(&d.bbox, frame.beam_count(), frame.bin_count()).ok()?
                    }
                };
                appearance_feature(frame, &mask).ok()
            })
            .collect();

        let mut matches: Vec<(usize, usize)> = Vec::new();
        let mut det_free = vec![true; detections.len()];
        let mut track_matched = vec![false; self.tracks.len()];

        // matching cascade over confirmed tracks
        for level in 1..=cfg.max_age {
            let rows: Vec<usize> = (0..self.tracks.len())
                .filter(|&i| {
                    self.tracks[i].status == TrackStatus::Confirmed
                        && self.tracks[i].frames_since_update == level
                })
                .collect();
            let cols: Vec<usize> = (0..detections.len()).filter(|&j| det_free[j]).collect();
            if rows.is_empty() || cols.is_empty() {
                continue;
            }
            let mut cost = CostMatrix::new(rows.len(), cols.len());
            for (ri, &i) in rows.iter().enumerate() {
                let t = &self.tracks[i];
                for (ci, &j) in cols.iter().enumerate() {
                    let d2 = t.gate_distance(&detections[j].bbox, &cfg.noise);
                    if d2 <= cfg.gating_threshold {
                        let app = t.appearance_distance(features[j].as_ref());
                        cost.set(
                            ri,
                            ci,
                            cfg.lambda_motion * d2 / cfg.gating_threshold
                                + (1.0 - cfg.lambda_motion) * app,
                        );
                    }
                }
            }
            for (ri, ci) in hungarian(&cost).pairs() {
                let (i, j) = (rows[ri], cols[ci]);
                matches.push((i, j));
                det_free[j] = false;
                track_matched[i] = true;
            }
        }

        // IoU fallback for tentative tracks and unmatched confirmed tracks.
        // Overlap is the best of IoU with the predicted box, IoU with the last
        // observed box and intersection over the smaller of those two: fish
        // entering or leaving the fan change box shape faster than the
        // constant-velocity prediction follows, and a fish first seen as a
        // sliver grows to many times its area in one frame
        let rows: Vec<usize> = (0..self.tracks.len())
            .filter(|&i| !track_matched[i])
            .collect();
        let cols: Vec<usize> = (0..detections.len()).filter(|&j| det_free[j]).collect();
        if !rows.is_empty() && !cols.is_empty() {
            let mut cost = CostMatrix::new(rows.len(), cols.len());
            for (ri, &i) in rows.iter().enumerate() {
                let pb = self.tracks[i].bbox();
                let lb = self.tracks[i].last_box;
                for (ci, &j) in cols.iter().enumerate() {
                    let d = &detections[j].bbox;
                    let smaller = lb.area().min(d.area());
                    let ios = if smaller > 0.0 {
                        lb.intersection(d) / smaller
                    } else {
                        0.0
                    };
                    let v = iou(&pb, d).max(iou(&lb, d)).max(ios);
                    if v >= cfg.match_iou_floor && v > 0.0 {
                        cost.set(ri, ci, 1.0 - v);
                    }
                }
            }
            for (ri, ci) in hungarian(&cost).pairs() {
                let (i, j) = (rows[ri], cols[ci]);
                matches.push((i, j));
                det_free[j] = false;
                track_matched[i] = true;
            }
        }

        let mut outputs = Vec::new();
        for &(i, j) in &matches {
            let d = &detections[j];
            let t = &mut self.tracks[i];
            t.update(&d.bbox, &cfg.noise)?;
            if let Some(f) = features[j].clone() {
                t.gallery.push_back(f);
                while t.gallery.len() > cfg.appearance_budget {
                    t.gallery.pop_front();
                }
            }
            let out = TrackOutput {
                track_id: t.track_id,
                frame_index,
                bbox: d.bbox,
                confidence: d.confidence,
                species_label: d.species_label.clone(),
                mask: d.mask.clone(),
            };
            match t.status {
                TrackStatus::Confirmed => outputs.push(out),
                TrackStatus::Tentative if t.hits >= cfg.n_init => {
                    t.status = TrackStatus::Confirmed;
                    self.backfill.append(&mut t.pending);
                    outputs.push(out);
                }
                _ => t.pending.push(out),
            }
        }

        for (i, t) in self.tracks.iter_mut().enumerate() {
            if track_matched[i] {
                continue;
            }
            if t.status == TrackStatus::Tentative || t.frames_since_update > cfg.max_age {
                t.status = TrackStatus::Deleted;
            }
        }
        self.tracks.retain(|t| t.status != TrackStatus::Deleted);

        for (j, d) in detections.iter().enumerate() {
            if !det_free[j] {
                continue;
            }
            let mut t = TrackState::new(self.next_id, &d.bbox, &cfg.noise);
            self.next_id += 1;
            if let Some(f) = features[j].clone() {
                t.gallery.push_back(f);
            }
            let out = TrackOutput {
                track_id: t.track_id,
                frame_index,
                bbox: d.bbox,
                confidence: d.confidence,
                species_label: d.species_label.clone(),
                mask: d.mask.clone(),
            };
            if t.hits >= cfg.n_init {
                t.status = TrackStatus::Confirmed;
                outputs.push(out);
            } else {
                t.pending.push(out);
            }
            self.tracks.push(t);
        }

        outputs.sort_by_key(|o| o.track_id);
        self.backfill.sort_by_key(|o| (o.frame_index, o.track_id));
        Ok(outputs)
    }
}
