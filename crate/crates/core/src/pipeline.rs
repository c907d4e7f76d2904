//! End-to-end edge run: load frames, build the echogram and gate, detect,
//! track, count, measure, evaluate against ground truth when present, and
//! write the report, MOT files and review upload.

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{
    count_all, estimate_lengths, net_counts, AnalyticsConfig, CountEvent, CountSummary,
    LengthEstimate,
};
use crate::detector::{detect, estimate_background_refs, nms, Detection, DetectorConfig};
use crate::echogram::{activity_gate, Echogram, Reduction};
use crate::error::{domain, Error, Result};
use crate::frame::SonarFrame;
use crate::geometry::SonarGeometry;
use crate::mask::Mask;
use crate::metrics::{dominant_tracks, evaluate, EvaluationInput, MetricsConfig, MetricsReport};
use crate::mot::{read_mot_csv, write_masks_jsonl, write_mot, MaskEntry, MotRecord};
use crate::review::{flag_outputs, EdgeUpload, Reason, UploadOutput};
use crate::simulator::{ground_truth_to_mot, GroundTruth, ScenarioConfig, Simulator};
use crate::sraw::{SrawReader, SrawWriter};
use crate::tracker::{TrackOutput, Tracker, TrackerConfig};

/// Random-access frame provider.
pub trait FrameSource: Send + Sync {
    fn geometry(&self) -> SonarGeometry;
    fn frame_count(&self) -> usize;
    fn frame(&self, index: u32) -> Result<SonarFrame>;
}

pub struct MemorySource {
    pub geometry: SonarGeometry,
    pub frames: Vec<SonarFrame>,
}

impl FrameSource for MemorySource {
    fn geometry(&self) -> SonarGeometry {
        self.geometry
    }
    fn frame_count(&self) -> usize {
        self.frames.len()
    }
    fn frame(&self, index: u32) -> Result<SonarFrame> {
        self.frames
            .get(index as usize)
            .cloned()
            .ok_or_else(|| domain(format!("frame {index} out of range")))
    }
}

/// Renders frames on demand; nothing is kept in memory.
pub struct SimulatedSource(pub Simulator);

impl FrameSource for SimulatedSource {
    fn geometry(&self) -> SonarGeometry {
        self.0.config().geom
    }
    fn frame_count(&self) -> usize {
        self.0.frame_count()
    }
    fn frame(&self, index: u32) -> Result<SonarFrame> {
        if index as usize >= self.0.frame_count() {
            return Err(domain(format!("frame {index} out of range")));
        }
        Ok(self.0.render_frame(index))
    }
}

pub struct SrawSource {
    geometry: SonarGeometry,
    frame_count: usize,
    reader: Mutex<SrawReader>,
}

impl SrawSource {
    pub fn open(path: &Path) -> Result<Self> {
        let reader = SrawReader::open(path)?;
        let h = *reader.header();
        Ok(Self {
            geometry: h.geom,
            frame_count: h.frame_count as usize,
            reader: Mutex::new(reader),
        })
    }
}

impl FrameSource for SrawSource {
    fn geometry(&self) -> SonarGeometry {
        self.geometry
    }
    fn frame_count(&self) -> usize {
        self.frame_count
    }
    fn frame(&self, index: u32) -> Result<SonarFrame> {
        self.reader
            .lock()
            .expect("reader lock poisoned")
            .read_frame(index)
    }
}

const CHUNK: usize = 32;

/// Calls `f` on every frame in order, loading chunks in parallel.
pub fn for_each_frame(
    src: &dyn FrameSource,
    mut f: impl FnMut(u32, SonarFrame) -> Result<()>,
) -> Result<()> {
    let n = src.frame_count();
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let frames: Vec<SonarFrame> = (start..end)
            .into_par_iter()
            .map(|t| src.frame(t as u32))
            .collect::<Result<_>>()?;
        for (k, frame) in frames.into_iter().enumerate() {
            f((start + k) as u32, frame)?;
        }
        start = end;
    }
    Ok(())
}

pub fn echogram_from_source(src: &dyn FrameSource, reduction: Reduction) -> Result<Echogram> {
    if src.frame_count() == 0 {
        return Err(domain("no frames"));
    }
    let mut e = Echogram::new(src.geometry().range_bin_count, reduction);
    for_each_frame(src, |_, frame| e.push(&frame))?;
    Ok(e)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    /// Run detection only on active frames.
    pub enabled: bool,
    pub reduction: Reduction,
    pub background_quantile: f64,
    pub k_sigma: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            reduction: Reduction::Max,
            background_quantile: 0.5,
            k_sigma: 3.0,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.background_quantile > 0.0 && self.background_quantile < 1.0) {
            return Err(domain("background_quantile must be in (0, 1)"));
        }
        if !(self.k_sigma >= 0.0 && self.k_sigma.is_finite()) {
            return Err(domain("k_sigma must be finite and ≥ 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReviewConfig {
    pub site_id: String,
    pub confidence_threshold: f64,
    /// Frame file name the review service will serve; defaults to the input
    /// `.sraw` name or `frames.sraw`.
    pub frame_file: Option<String>,
    /// Also write the frames as `.sraw` next to the upload.
    pub write_frames: bool,
}

impl Default for ReviewConfig {
    fn default() -> Self {
        Self {
            site_id: "default".into(),
            confidence_threshold: 0.5,
            frame_file: None,
            write_frames: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSource {
    /// One of the built-in scenarios (`single-fish`, `river-20`, …).
    Builtin {
        name: String,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// A scenario JSON file.
    Scenario { path: PathBuf },
    /// Recorded frames, optionally with a ground-truth JSON file.
    Sraw {
        path: PathBuf,
        #[serde(default)]
        truth: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: InputSource,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub gate: GateConfig,
    /// MOT CSV whose rows replace the detector output.
    #[serde(default)]
    pub inject_detections: Option<PathBuf>,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub tracker: TrackerConfig,
    #[serde(default)]
    pub analytics: AnalyticsConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub review: ReviewConfig,
    /// Replaces the scenario seed of simulated inputs.
    #[serde(default)]
    pub seed_override: Option<u64>,
}

impl RunConfig {
    pub fn new(input: InputSource, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            input,
            output_dir: output_dir.into(),
            gate: GateConfig::default(),
            inject_detections: None,
            detector: DetectorConfig::default(),
            tracker: TrackerConfig::default(),
            analytics: AnalyticsConfig::default(),
            metrics: MetricsConfig::default(),
            review: ReviewConfig::default(),
            seed_override: None,
        }
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_slice(&fs::read(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut cfg.input {
            InputSource::Builtin { .. } => {}
            InputSource::Scenario { path } => fix(path),
            InputSource::Sraw { path, truth } => {
                fix(path);
                if let Some(t) = truth {
                    fix(t);
                }
            }
        }
        fix(&mut cfg.output_dir);
        if let Some(p) = &mut cfg.inject_detections {
            fix(p);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.gate.validate()?;
        self.detector.validate()?;
        self.tracker.validate()?;
        self.analytics.validate()?;
        self.metrics.validate()?;
        if !(0.0..=1.0).contains(&self.review.confidence_threshold) {
            return Err(domain("review confidence_threshold must be in [0, 1]"));
        }
        let must_exist = |p: &Path| -> Result<()> {
            if p.exists() {
                Ok(())
            } else {
                Err(Error::NotFound(p.display().to_string()))
            }
        };
        match &self.input {
            InputSource::Builtin { name, .. } => {
                ScenarioConfig::named(name)
                    .ok_or_else(|| domain(format!("unknown scenario {name:?}")))?;
            }
            InputSource::Scenario { path } => must_exist(path)?,
            InputSource::Sraw { path, truth } => {
                must_exist(path)?;
                if let Some(t) = truth {
                    must_exist(t)?;
                }
            }
        }
        if let Some(p) = &self.inject_detections {
            must_exist(p)?;
        }
        Ok(())
    }
}

/// Frames plus optional ground truth for a run.
pub struct LoadedInput {
    pub source: Box<dyn FrameSource>,
    pub truth: Option<GroundTruth>,
    pub default_frame_file: String,
}

pub fn scenario_for(
    input: &InputSource,
    seed_override: Option<u64>,
) -> Result<Option<ScenarioConfig>> {
    let mut scenario = match input {
        InputSource::Builtin { name, seed } => {
            let mut s = ScenarioConfig::named(name)
                .ok_or_else(|| domain(format!("unknown scenario {name:?}")))?;
            if let Some(seed) = seed {
                s.seed = *seed;
            }
            s
        }
        InputSource::Scenario { path } => serde_json::from_slice(&fs::read(path)?)?,
        InputSource::Sraw { .. } => return Ok(None),
    };
    if let Some(seed) = seed_override {
        scenario.seed = seed;
    }
    scenario.validate()?;
    Ok(Some(scenario))
}

pub fn load_input(input: &InputSource, seed_override: Option<u64>) -> Result<LoadedInput> {
    if let Some(scenario) = scenario_for(input, seed_override)? {
        let sim = Simulator::new(scenario)?;
        let truth = sim.ground_truth();
        return Ok(LoadedInput {
            source: Box::new(SimulatedSource(sim)),
            truth: Some(truth),
            default_frame_file: "frames.sraw".into(),
        });
    }
    let InputSource::Sraw { path, truth } = input else {
        unreachable!()
    };
    let source = SrawSource::open(path)?;
    let truth = match truth {
        Some(p) => {
            let gt: GroundTruth = serde_json::from_slice(&fs::read(p)?)?;
            if gt.frames.len() != source.frame_count() {
                return Err(domain(format!(
                    "ground truth has {} frames but the recording has {}",
                    gt.frames.len(),
                    source.frame_count()
                )));
            }
            Some(gt)
        }
        None => None,
    };
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("frames.sraw")
        .to_string();
    Ok(LoadedInput {
        source: Box::new(source),
        truth,
        default_frame_file: name,
    })
}

/// Injected detections by frame, from MOT rows (frame, box, conf, class)
/// with masks attached by row.
pub fn detections_from_mot(
    records: &[MotRecord],
    masks: &[MaskEntry],
) -> Result<BTreeMap<u32, Vec<Detection>>> {
    let mut by_row = masks_by_row(records, masks)?;
    let mut by_frame: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
    for (row, r) in records.iter().enumerate() {
        by_frame.entry(r.frame).or_default().push(Detection {
            frame_index: r.frame,
            bbox: r.bbox(),
            confidence: r.conf,
            species_label: r.class.clone(),
            mask: by_row.remove(&row),
        });
    }
    Ok(by_frame)
}

pub struct DetectTrackOutput {
    pub detections: Vec<Detection>,
    pub tracks: Vec<TrackOutput>,
}

/// Runs the detector over `src` in frame order and hands each frame with
/// its detections to `f`. The background is the per-cell median of the
/// previous `background_window` frames, refreshed every
/// `background_refresh` frames; the first window uses the median of its
/// own frames. Frames with `active[t] == false` get no detections.
pub fn detect_stream(
    src: &dyn FrameSource,
    active: &[bool],
    detector: &DetectorConfig,
    mut f: impl FnMut(u32, SonarFrame, Vec<Detection>) -> Result<()>,
) -> Result<()> {
    detector.validate()?;
    let n = src.frame_count();
    if active.len() != n {
        return Err(domain("activity mask length differs from frame count"));
    }
    if n == 0 {
        return Ok(());
    }
    let window = (detector.background_window as usize).min(n).max(1);
    let refresh = detector.background_refresh.max(1) as usize;
    let first: Vec<SonarFrame> = (0..window as u32)
        .into_par_iter()
        .map(|t| src.frame(t))
        .collect::<Result<_>>()?;
    let refs: Vec<&SonarFrame> = first.iter().collect();
    let mut background = estimate_background_refs(&refs, window as u32)?;
    drop(first);
    let mut history: VecDeque<SonarFrame> = VecDeque::with_capacity(window + 1);
    for_each_frame(src, |t, frame| {
        let tu = t as usize;
        if tu >= window && (tu - window).is_multiple_of(refresh) {
            let refs: Vec<&SonarFrame> = history.iter().collect();
            background = estimate_background_refs(&refs, window as u32)?;
        }
        let dets = if active[tu] {
            nms(&detect(&frame, t, &background, detector)?, detector.nms_iou)?
        } else {
            Vec::new()
        };
        history.push_back(frame.clone());
        if history.len() > window {
            history.pop_front();
        }
        f(t, frame, dets)
    })
}

/// Detection (or injected detections) and tracking in frame order. Frames
/// with `active[t] == false` still advance the tracker, with no detections.
pub fn detect_and_track(
    src: &dyn FrameSource,
    active: &[bool],
    detector: &DetectorConfig,
    tracker_cfg: &TrackerConfig,
    injected: Option<&BTreeMap<u32, Vec<Detection>>>,
) -> Result<DetectTrackOutput> {
    let mut tracker = Tracker::new(tracker_cfg.clone())?;
    let mut detections = Vec::new();
    let mut tracks = Vec::new();
    let mut step = |t: u32, frame: SonarFrame, dets: Vec<Detection>| -> Result<()> {
        let out = if active[t as usize] {
            tracker.step(t, Some(&frame), &dets)?
        } else {
            tracker.step(t, None, &[])?
        };
        tracks.extend(out);
        tracks.extend(tracker.take_backfill());
        detections.extend(dets);
        Ok(())
    };
    match injected {
        Some(inj) => {
            if active.len() != src.frame_count() {
                return Err(domain("activity mask length differs from frame count"));
            }
            for_each_frame(src, |t, frame| {
                let dets = if active[t as usize] {
                    inj.get(&t).cloned().unwrap_or_default()
                } else {
                    Vec::new()
                };
                step(t, frame, dets)
            })?;
        }
        None => detect_stream(src, active, detector, step)?,
    }
    tracks.sort_by_key(|o| (o.frame_index, o.track_id));
    Ok(DetectTrackOutput { detections, tracks })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateStats {
    pub active_frames: usize,
    pub frames_with_fish: usize,
    pub fish_frames_retained: usize,
    pub empty_frames: usize,
    pub empty_frames_discarded: usize,
}

pub fn gate_stats(active: &[bool], truth: &GroundTruth) -> GateStats {
    let mut s = GateStats {
        active_frames: active.iter().filter(|&&a| a).count(),
        frames_with_fish: 0,
        fish_frames_retained: 0,
        empty_frames: 0,
        empty_frames_discarded: 0,
    };
    for (t, &a) in active.iter().enumerate() {
        if truth.frame_has_visible_fish(t) {
            s.frames_with_fish += 1;
            s.fish_frames_retained += a as usize;
        } else {
            s.empty_frames += 1;
            s.empty_frames_discarded += (!a) as usize;
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewSummary {
    pub site_id: String,
    pub confidence_threshold: f64,
    pub flagged: usize,
    pub low_confidence: usize,
    pub count_ambiguity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub geometry: SonarGeometry,
    pub frame_count: usize,
    pub active_frame_count: usize,
    pub detection_count: usize,
    pub track_count: usize,
    pub counts: CountSummary,
    pub events: Vec<CountEvent>,
    pub lengths: Vec<LengthEstimate>,
    pub true_counts: Option<CountSummary>,
    pub gate: Option<GateStats>,
    pub metrics: Option<MetricsReport>,
    pub review: ReviewSummary,
    /// Wall-clock seconds per stage; the only nondeterministic field.
    pub timings: BTreeMap<String, f64>,
}

/// In-memory result of a run, before anything is written.
pub struct RunOutcome {
    pub report: RunReport,
    pub detections: Vec<MotRecord>,
    pub tracks: Vec<MotRecord>,
    pub track_masks: Vec<MaskEntry>,
    pub ground_truth: Option<Vec<MotRecord>>,
    pub echogram: Echogram,
    pub upload: EdgeUpload,
}

fn timed<T>(
    timings: &mut BTreeMap<String, f64>,
    stage: &'static str,
    f: impl FnOnce() -> Result<T>,
) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| e.in_stage(stage))?;
    timings.insert(stage.to_string(), start.elapsed().as_secs_f64());
    Ok(out)
}

pub fn track_records(tracks: &[TrackOutput]) -> Vec<MotRecord> {
    tracks
        .iter()
        .map(|o| {
            MotRecord::track(
                o.frame_index,
                o.track_id as i64,
                o.bbox,
                o.confidence,
                &o.species_label,
            )
        })
        .collect()
}

pub fn detection_records(detections: &[Detection]) -> Vec<MotRecord> {
    detections
        .iter()
        .map(|d| MotRecord::detection(d.frame_index, d.bbox, d.confidence, &d.species_label))
        .collect()
}

/// Masks keyed by row of the MOT file written from `records`; `masks[i]`
/// belongs to `records[i]`, which must already be in `(frame, id)` order.
pub fn mask_entries<'a>(
    records: &[MotRecord],
    masks: impl IntoIterator<Item = Option<&'a Mask>>,
) -> Vec<MaskEntry> {
    records
        .iter()
        .zip(masks)
        .enumerate()
        .filter_map(|(row, (r, m))| {
            m.map(|mask| MaskEntry {
                row,
                frame: r.frame,
                id: r.id,
                mask: mask.clone(),
            })
        })
        .collect()
}

fn masks_by_row(records: &[MotRecord], masks: &[MaskEntry]) -> Result<BTreeMap<usize, Mask>> {
    let mut out = BTreeMap::new();
    for m in masks {
        if !records
            .get(m.row)
            .is_some_and(|r| r.frame == m.frame && r.id == m.id)
        {
            return Err(domain(format!(
                "mask row {} does not match a record",
                m.row
            )));
        }
        out.insert(m.row, m.mask.clone());
    }
    Ok(out)
}

/// Tracker outputs from MOT rows, with masks attached by row.
pub fn tracks_from_records(records: &[MotRecord], masks: &[MaskEntry]) -> Result<Vec<TrackOutput>> {
    let mut by_row = masks_by_row(records, masks)?;
    records
        .iter()
        .enumerate()
        .map(|(row, r)| {
            if r.id < 0 {
                return Err(domain(format!("row {} has no track id", row + 1)));
            }
            Ok(TrackOutput {
                track_id: r.id as u64,
                frame_index: r.frame,
                bbox: r.bbox(),
                confidence: r.conf,
                species_label: r.class.clone(),
                mask: by_row.remove(&row),
            })
        })
        .collect()
}

/// Runs every stage in memory.
pub fn execute(config: &RunConfig) -> Result<RunOutcome> {
    let mut timings = BTreeMap::new();
    timed(&mut timings, "config", || config.validate())?;
    let input = timed(&mut timings, "load", || {
        load_input(&config.input, config.seed_override)
    })?;
    let src = input.source.as_ref();
    let geom = src.geometry();
    let n = src.frame_count();
    let echogram = timed(&mut timings, "echogram", || {
        echogram_from_source(src, config.gate.reduction)
    })?;
    let active: Vec<bool> = timed(&mut timings, "gate", || {
        if !config.gate.enabled {
            return Ok(vec![true; n]);
        }
        let mut mask = vec![false; n];
        for t in activity_gate(
            &echogram,
            config.gate.background_quantile,
            config.gate.k_sigma,
        )? {
            mask[t] = true;
        }
        Ok(mask)
    })?;
    let injected = match &config.inject_detections {
        Some(p) => Some(timed(&mut timings, "inject", || {
            detections_from_mot(&read_mot_csv(p)?, &[])
        })?),
        None => None,
    };
    let dt = timed(&mut timings, "detect_track", || {
        detect_and_track(
            src,
            &active,
            &config.detector,
            &config.tracker,
            injected.as_ref(),
        )
    })?;
    let events = timed(&mut timings, "count", || {
        config.analytics.validate()?;
        Ok(count_all(&dt.tracks, &geom, &config.analytics))
    })?;
    let counts = net_counts(&events);
    let lengths = timed(&mut timings, "measure", || {
        Ok(estimate_lengths(&dt.tracks, &geom, &config.analytics))
    })?;
    let detections = detection_records(&dt.detections);
    let tracks = track_records(&dt.tracks);
    let track_masks = mask_entries(&tracks, dt.tracks.iter().map(|o| o.mask.as_ref()));
    let truth = input.truth.as_ref();
    let ground_truth = truth.map(ground_truth_to_mot);
    let metrics = match (truth, &ground_truth) {
        (Some(gt), Some(gt_mot)) => Some(timed(&mut timings, "evaluate", || {
            let count_pairs = [
                (counts.upstream as f64, gt.upstream_total as f64),
                (counts.downstream as f64, gt.downstream_total as f64),
            ];
            let estimates: BTreeMap<u64, f64> =
                lengths.iter().map(|l| (l.track_id, l.length_m)).collect();
            let length_pairs: Vec<(f64, f64)> =
                dominant_tracks(gt_mot, &tracks, config.metrics.iou_threshold)
                    .into_iter()
                    .filter_map(|(fish, track)| {
                        let est = estimates.get(&(track as u64))?;
                        Some((*est, gt.length_of(fish as u32)?))
                    })
                    .collect();
            evaluate(&EvaluationInput {
                gt: gt_mot,
                detections: &detections,
                tracks: &tracks,
                counts: &count_pairs,
                lengths: &length_pairs,
                config: config.metrics,
            })
        })?),
        _ => None,
    };
    let frame_file = config
        .review
        .frame_file
        .clone()
        .unwrap_or(input.default_frame_file.clone());
    let upload = EdgeUpload {
        upload_id: format!(
            "{}-{}",
            config.review.site_id,
            upload_fingerprint(&tracks, &events)
        ),
        site_id: config.review.site_id.clone(),
        frame_file: frame_file.clone(),
        counts,
        outputs: dt
            .tracks
            .iter()
            .map(|o| UploadOutput {
                track_id: o.track_id,
                frame_index: o.frame_index,
                bbox: o.bbox,
                confidence: o.confidence,
                species_label: o.species_label.clone(),
            })
            .collect(),
        events: events.clone(),
    };
    let review = timed(&mut timings, "review", || {
        let flagged = flag_outputs(
            &upload.site_id,
            &frame_file,
            &upload.outputs,
            config.review.confidence_threshold,
            &events,
            chrono::DateTime::UNIX_EPOCH,
        )?;
        Ok(ReviewSummary {
            site_id: config.review.site_id.clone(),
            confidence_threshold: config.review.confidence_threshold,
            flagged: flagged.len(),
            low_confidence: flagged
                .iter()
                .filter(|i| i.reason == Reason::LowConfidence)
                .count(),
            count_ambiguity: flagged
                .iter()
                .filter(|i| i.reason == Reason::CountAmbiguity)
                .count(),
        })
    })?;
    let report = RunReport {
        config: config.clone(),
        geometry: geom,
        frame_count: n,
        active_frame_count: active.iter().filter(|&&a| a).count(),
        detection_count: detections.len(),
        track_count: dt
            .tracks
            .iter()
            .map(|o| o.track_id)
            .collect::<std::collections::BTreeSet<_>>()
            .len(),
        counts,
        events,
        lengths,
        true_counts: truth.map(|gt| CountSummary {
            upstream: gt.upstream_total,
            downstream: gt.downstream_total,
            net: gt.upstream_total as i64 - gt.downstream_total as i64,
        }),
        gate: truth.map(|gt| gate_stats(&active, gt)),
        metrics,
        review,
        timings,
    };
    Ok(RunOutcome {
        report,
        detections,
        tracks,
        track_masks,
        ground_truth,
        echogram,
        upload,
    })
}

fn upload_fingerprint(tracks: &[MotRecord], events: &[CountEvent]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for r in tracks {
        h.update(
            format!(
                "{}|{}|{}|{}|{}|{}|{};",
                r.frame, r.id, r.x, r.y, r.w, r.h, r.conf
            )
            .as_bytes(),
        );
    }
    for e in events {
        h.update(format!("{}|{}|{:?};", e.track_id, e.frame_index, e.direction).as_bytes());
    }
    hex::encode(h.finalize())[..12].to_string()
}

pub const REPORT_FILE: &str = "report.json";
pub const DETECTIONS_FILE: &str = "detections.csv";
pub const TRACKS_FILE: &str = "tracks.csv";
pub const TRACK_MASKS_FILE: &str = "track_masks.jsonl";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
pub const ECHOGRAM_FILE: &str = "echogram.pgm";
pub const UPLOAD_FILE: &str = "upload.json";

/// Runs the pipeline and writes its outputs. On failure every file this
/// run created is removed (and the output directory too if it created it).
pub fn run_pipeline(config: &RunConfig) -> Result<RunReport> {
    let outcome = execute(config)?;
    let dir = &config.output_dir;
    let created_dir = !dir.exists();
    let mut written: Vec<PathBuf> = Vec::new();
    let result = write_outputs(config, &outcome, &mut written).map_err(|e| e.in_stage("write"));
    if let Err(e) = result {
        for p in &written {
            let _ = fs::remove_file(p);
        }
        if created_dir {
            let _ = fs::remove_dir_all(dir);
        }
        return Err(e);
    }
    Ok(outcome.report)
}

fn write_outputs(config: &RunConfig, o: &RunOutcome, written: &mut Vec<PathBuf>) -> Result<()> {
    let dir = &config.output_dir;
    fs::create_dir_all(dir)?;
    fn put(dir: &Path, written: &mut Vec<PathBuf>, name: &str, bytes: Vec<u8>) -> Result<()> {
        let p = dir.join(name);
        written.push(p.clone());
        fs::write(&p, bytes)?;
        Ok(())
    }
    let mut buf = Vec::new();
    write_mot(&mut buf, &o.detections)?;
    put(dir, written, DETECTIONS_FILE, buf)?;
    let mut buf = Vec::new();
    write_mot(&mut buf, &o.tracks)?;
    put(dir, written, TRACKS_FILE, buf)?;
    let mut buf = Vec::new();
    write_masks_jsonl(&mut buf, &o.track_masks)?;
    put(dir, written, TRACK_MASKS_FILE, buf)?;
    if let Some(gt) = &o.ground_truth {
        let mut buf = Vec::new();
        write_mot(&mut buf, gt)?;
        put(dir, written, GROUND_TRUTH_FILE, buf)?;
    }
    put(dir, written, ECHOGRAM_FILE, o.echogram.to_pgm())?;
    put(
        dir,
        written,
        UPLOAD_FILE,
        serde_json::to_vec_pretty(&o.upload)?,
    )?;
    if config.review.write_frames {
        let p = dir.join(&o.upload.frame_file);
        let same_as_input = match &config.input {
            InputSource::Sraw { path, .. } => {
                p.exists() && fs::canonicalize(path)? == fs::canonicalize(&p)?
            }
            _ => false,
        };
        if !same_as_input {
            let input = load_input(&config.input, config.seed_override)?;
            written.push(p.clone());
            write_source_sraw(input.source.as_ref(), &p)?;
        }
    }
    put(dir, written, REPORT_FILE, report_json(&o.report)?)?;
    Ok(())
}

/// Streams every frame of `src` into an `.sraw` file.
pub fn write_source_sraw(src: &dyn FrameSource, path: &Path) -> Result<()> {
    let count = u32::try_from(src.frame_count()).map_err(|_| domain("too many frames"))?;
    let mut w = SrawWriter::new(
        std::io::BufWriter::new(fs::File::create(path)?),
        &src.geometry(),
        count,
    )?;
    for_each_frame(src, |_, f| w.write_frame(&f))?;
    w.finish()?;
    Ok(())
}

pub fn report_json(report: &RunReport) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(report)?;
    v.push(b'\n');
    Ok(v)
}

/// The report as JSON with the `timings` field removed, for comparisons.
pub fn report_without_timings(json: &[u8]) -> Result<serde_json::Value> {
    let mut v: serde_json::Value = serde_json::from_slice(json)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("timings");
    }
    Ok(v)
}
