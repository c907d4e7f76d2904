//! Expert review queue: flagging low-confidence outputs, an append-only
//! per-site event log, annotation handling, corrected counts and training
//! set export.
//!
//! Each site has one JSON-lines file `<data_dir>/sites/<site>.jsonl`. The
//! in-memory index is rebuilt from these files on open; item status is
//! derived by replaying annotations, so the log is the only state.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytics::{CountEvent, CountSummary};
use crate::error::{domain, Error, Result};
use crate::frame::GridBox;
use crate::mot::{write_mot, MotRecord};
use crate::simulator::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Reason {
    LowConfidence,
    CountAmbiguity,
    ExpertRequest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReviewStatus {
    Pending,
    Accepted,
    Corrected,
    Rejected,
}

impl ReviewStatus {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pending" => Some(Self::Pending),
            "accepted" => Some(Self::Accepted),
            "corrected" => Some(Self::Corrected),
            "rejected" => Some(Self::Rejected),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRef {
    pub file: String,
    pub frame_index: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub item_id: String,
    pub site_id: String,
    pub frame_ref: FrameRef,
    pub track_id: u64,
    #[serde(rename = "box")]
    pub bbox: GridBox,
    pub confidence: f64,
    pub species_label: String,
    pub reason: Reason,
    pub status: ReviewStatus,
    pub created_at: DateTime<Utc>,
    pub resolved_at: Option<DateTime<Utc>>,
    /// Crossing direction for count items.
    pub crossing: Option<Direction>,
    /// Corrected view; the original fields above are never overwritten.
    pub corrected_box: Option<GridBox>,
    pub corrected_species: Option<String>,
    pub count_delta: i64,
}

impl ReviewItem {
    pub fn effective_box(&self) -> GridBox {
        self.corrected_box.unwrap_or(self.bbox)
    }

    pub fn effective_species(&self) -> &str {
        self.corrected_species
            .as_deref()
            .unwrap_or(&self.species_label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum AnnotationPayload {
    Dot { x: f64, y: f64 },
    Box { x: f64, y: f64, w: f64, h: f64 },
    Text(String),
}

/// Annotation as submitted by a reviewer; the store stamps item id and time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationInput {
    #[serde(flatten)]
    pub payload: AnnotationPayload,
    #[serde(default)]
    pub corrected_species: Option<String>,
    #[serde(default)]
    pub corrected_count_delta: Option<i64>,
    /// Marks the flagged output as wrong (false detection or crossing).
    #[serde(default)]
    pub reject: bool,
    pub author: String,
}

impl AnnotationInput {
    pub fn validate(&self) -> Result<()> {
        match &self.payload {
            AnnotationPayload::Dot { x, y } if !(x.is_finite() && y.is_finite()) => {
                return Err(domain("dot coordinates must be finite"))
            }
            AnnotationPayload::Box { x, y, w, h } if !GridBox::new(*x, *y, *w, *h).is_valid() => {
                return Err(domain("box must be finite with positive size"));
            }
            _ => {}
        }
        if self.author.trim().is_empty() {
            return Err(domain("author is required"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertAnnotation {
    pub item_id: String,
    #[serde(flatten)]
    pub input: AnnotationInput,
    pub created_at: DateTime<Utc>,
}

/// Per-track output as shipped from the edge; masks stay at the edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UploadOutput {
    pub track_id: u64,
    pub frame_index: u32,
    #[serde(rename = "box")]
    pub bbox: GridBox,
    pub confidence: f64,
    pub species_label: String,
}

/// Bundle the edge pipeline writes for the review service to ingest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeUpload {
    pub upload_id: String,
    pub site_id: String,
    pub frame_file: String,
    pub counts: CountSummary,
    pub outputs: Vec<UploadOutput>,
    pub events: Vec<CountEvent>,
}

pub fn item_id(site: &str, file: &str, frame_index: u32, track_id: u64, reason: Reason) -> String {
    let mut h = Sha256::new();
    h.update(format!("{site}|{file}|{frame_index}|{track_id}|{reason:?}").as_bytes());
    hex::encode(h.finalize())[..16].to_string()
}

/// Items for every output with confidence below `threshold` and for every
/// crossing whose track's mean confidence is below it. Outputs are sorted,
/// and duplicates (same frame, track and reason) collapse to one item.
pub fn flag_outputs(
    site_id: &str,
    frame_file: &str,
    outputs: &[UploadOutput],
    threshold: f64,
    events: &[CountEvent],
    now: DateTime<Utc>,
) -> Result<Vec<ReviewItem>> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(domain(format!(
            "confidence threshold must be in [0, 1], got {threshold}"
        )));
    }
    if !valid_name(site_id) {
        return Err(domain(format!("invalid site id {site_id:?}")));
    }
    let mut sorted: Vec<&UploadOutput> = outputs.iter().collect();
    sorted.sort_by_key(|o| (o.frame_index, o.track_id));
    let make = |o: &UploadOutput,
                confidence: f64,
                reason: Reason,
                crossing: Option<Direction>,
                frame_index: u32| ReviewItem {
        item_id: item_id(site_id, frame_file, frame_index, o.track_id, reason),
        site_id: site_id.to_string(),
        frame_ref: FrameRef {
            file: frame_file.to_string(),
            frame_index,
        },
        track_id: o.track_id,
        bbox: o.bbox,
        confidence,
        species_label: o.species_label.clone(),
        reason,
        status: ReviewStatus::Pending,
        created_at: now,
        resolved_at: None,
        crossing,
        corrected_box: None,
        corrected_species: None,
        count_delta: 0,
    };
    let mut items: Vec<ReviewItem> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for o in &sorted {
        if o.confidence < threshold {
            let it = make(o, o.confidence, Reason::LowConfidence, None, o.frame_index);
            if seen.insert(it.item_id.clone()) {
                items.push(it);
            }
        }
    }
    let mut per_track: BTreeMap<u64, Vec<&UploadOutput>> = BTreeMap::new();
    for o in &sorted {
        per_track.entry(o.track_id).or_default().push(o);
    }
    for e in events {
        let Some(track) = per_track.get(&e.track_id) else {
            continue;
        };
        let mean = track.iter().map(|o| o.confidence).sum::<f64>() / track.len() as f64;
        if mean < threshold {
            let at = track
                .iter()
                .min_by_key(|o| o.frame_index.abs_diff(e.frame_index))
                .expect("nonempty track");
            let it = make(
                at,
                mean,
                Reason::CountAmbiguity,
                Some(e.direction),
                e.frame_index,
            );
            if seen.insert(it.item_id.clone()) {
                items.push(it);
            }
        }
    }
    Ok(items)
}

/// Status an annotation resolves an item to.
pub fn resolution(item: &ReviewItem, input: &AnnotationInput) -> ReviewStatus {
    if input.reject {
        return ReviewStatus::Rejected;
    }
    let box_changed = matches!(input.payload, AnnotationPayload::Box { x, y, w, h } if GridBox::new(x, y, w, h) != item.bbox);
    let species_changed = input
        .corrected_species
        .as_deref()
        .is_some_and(|s| s != item.species_label);
    let count_changed = input.corrected_count_delta.is_some_and(|d| d != 0);
    if box_changed || species_changed || count_changed {
        ReviewStatus::Corrected
    } else {
        ReviewStatus::Accepted
    }
}

fn apply(item: &mut ReviewItem, a: &ExpertAnnotation) {
    let status = resolution(item, &a.input);
    if status == ReviewStatus::Corrected {
        if let AnnotationPayload::Box { x, y, w, h } = a.input.payload {
            item.corrected_box = Some(GridBox::new(x, y, w, h));
        }
        item.corrected_species = a
            .input
            .corrected_species
            .clone()
            .filter(|s| *s != item.species_label);
        item.count_delta = a.input.corrected_count_delta.unwrap_or(0);
    }
    item.status = status;
    item.resolved_at = Some(a.created_at);
}

/// One line of a site log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Upload {
        upload_id: String,
        counts: CountSummary,
        at: DateTime<Utc>,
    },
    Flagged {
        item: ReviewItem,
    },
    Annotation {
        annotation: ExpertAnnotation,
    },
}

pub fn parse_log_line(line: &str) -> Result<LogEvent> {
    Ok(serde_json::from_str(line)?)
}

/// Pre-review hook that may resolve an item automatically.
pub trait Adjudicator: Send + Sync {
    fn adjudicate(&self, item: &ReviewItem) -> Option<AnnotationInput>;
}

/// Leaves every item for a human.
pub struct NoopAdjudicator;

impl Adjudicator for NoopAdjudicator {
    fn adjudicate(&self, _item: &ReviewItem) -> Option<AnnotationInput> {
        None
    }
}

#[derive(Default)]
struct Site {
    items: Vec<String>,
    uploads: BTreeMap<String, CountSummary>,
}

#[derive(Default)]
struct Index {
    items: HashMap<String, ReviewItem>,
    annotations: HashMap<String, Vec<ExpertAnnotation>>,
    sites: BTreeMap<String, Site>,
}

impl Index {
    fn apply_event(&mut self, site: &str, event: LogEvent) -> Result<()> {
        match event {
            LogEvent::Upload {
                upload_id, counts, ..
            } => {
                self.sites
                    .entry(site.to_string())
                    .or_default()
                    .uploads
                    .insert(upload_id, counts);
            }
            LogEvent::Flagged { item } => {
                if !self.items.contains_key(&item.item_id) {
                    self.sites
                        .entry(site.to_string())
                        .or_default()
                        .items
                        .push(item.item_id.clone());
                    self.items.insert(item.item_id.clone(), item);
                }
            }
            LogEvent::Annotation { annotation } => {
                let item = self.items.get_mut(&annotation.item_id).ok_or_else(|| {
                    Error::NotFound(format!(
                        "annotation for unknown item {}",
                        annotation.item_id
                    ))
                })?;
                if item.status == ReviewStatus::Pending {
                    apply(item, &annotation);
                }
                self.annotations
                    .entry(annotation.item_id.clone())
                    .or_default()
                    .push(annotation);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct QueueSummary {
    pub pending: usize,
    pub accepted: usize,
    pub corrected: usize,
    pub rejected: usize,
    pub total: usize,
}

pub fn summarize<'a>(items: impl IntoIterator<Item = &'a ReviewItem>) -> QueueSummary {
    let mut s = QueueSummary::default();
    for it in items {
        s.total += 1;
        match it.status {
            ReviewStatus::Pending => s.pending += 1,
            ReviewStatus::Accepted => s.accepted += 1,
            ReviewStatus::Corrected => s.corrected += 1,
            ReviewStatus::Rejected => s.rejected += 1,
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectedCounts {
    pub upstream: i64,
    pub downstream: i64,
    pub net: i64,
}

fn valid_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !s.starts_with('.')
}

/// Append-only review store. Reads share a lock; writes are serialized
/// and applied to the index only after the log line is flushed.
pub struct ReviewStore {
    data_dir: PathBuf,
    index: RwLock<Index>,
    writer: Mutex<()>,
    adjudicator: Box<dyn Adjudicator>,
}

impl ReviewStore {
    pub fn open(data_dir: &Path) -> Result<Self> {
        Self::with_adjudicator(data_dir, Box::new(NoopAdjudicator))
    }

    pub fn with_adjudicator(data_dir: &Path, adjudicator: Box<dyn Adjudicator>) -> Result<Self> {
        let sites_dir = data_dir.join("sites");
        fs::create_dir_all(&sites_dir)?;
        let mut index = Index::default();
        let mut paths: Vec<PathBuf> = fs::read_dir(&sites_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            let site = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            index.sites.entry(site.clone()).or_default();
            for (n, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let event = parse_log_line(&line).map_err(|e| Error::Record {
                    line: n as u64 + 1,
                    message: format!("{}: {e}", path.display()),
                })?;
                index.apply_event(&site, event)?;
            }
        }
        Ok(Self {
            data_dir: data_dir.to_path_buf(),
            index: RwLock::new(index),
            writer: Mutex::new(()),
            adjudicator,
        })
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    fn append(&self, site: &str, events: &[LogEvent]) -> Result<()> {
        if events.is_empty() {
            return Ok(());
        }
        let mut buf = Vec::new();
        for e in events {
            serde_json::to_writer(&mut buf, e)?;
            buf.push(b'\n');
        }
        let path = self.data_dir.join("sites").join(format!("{site}.jsonl"));
        let mut f = OpenOptions::new().create(true).append(true).open(path)?;
        f.write_all(&buf)?;
        f.sync_data()?;
        let mut index = self.index.write().expect("index lock poisoned");
        for e in events {
            index.apply_event(site, e.clone())?;
        }
        Ok(())
    }

    /// Records an edge upload and flags its outputs. Re-ingesting the same
    /// upload replaces its counts and adds no duplicate items. Returns the
    /// ids of newly flagged items.
    pub fn ingest(
        &self,
        upload: &EdgeUpload,
        threshold: f64,
        now: DateTime<Utc>,
    ) -> Result<Vec<String>> {
        if !valid_name(&upload.site_id) {
            return Err(domain(format!("invalid site id {:?}", upload.site_id)));
        }
        let flagged = flag_outputs(
            &upload.site_id,
            &upload.frame_file,
            &upload.outputs,
            threshold,
            &upload.events,
            now,
        )?;
        let new_ids: Vec<String>;
        {
            let _w = self.writer.lock().expect("writer lock poisoned");
            let fresh: Vec<ReviewItem> = {
                let index = self.index.read().expect("index lock poisoned");
                flagged
                    .into_iter()
                    .filter(|it| !index.items.contains_key(&it.item_id))
                    .collect()
            };
            new_ids = fresh.iter().map(|it| it.item_id.clone()).collect();
            let mut events = vec![LogEvent::Upload {
                upload_id: upload.upload_id.clone(),
                counts: upload.counts,
                at: now,
            }];
            events.extend(fresh.into_iter().map(|item| LogEvent::Flagged { item }));
            self.append(&upload.site_id, &events)?;
        }
        for id in &new_ids {
            let item = self.item(id)?;
            if let Some(input) = self.adjudicator.adjudicate(&item) {
                self.submit(id, input, now)?;
            }
        }
        Ok(new_ids)
    }

    /// Adds an expert-requested item for an arbitrary output.
    pub fn request_review(
        &self,
        site_id: &str,
        frame_file: &str,
        output: &UploadOutput,
        now: DateTime<Utc>,
    ) -> Result<ReviewItem> {
        if !valid_name(site_id) {
            return Err(domain(format!("invalid site id {site_id:?}")));
        }
        let _w = self.writer.lock().expect("writer lock poisoned");
        let id = item_id(
            site_id,
            frame_file,
            output.frame_index,
            output.track_id,
            Reason::ExpertRequest,
        );
        if let Ok(existing) = self.item(&id) {
            return Ok(existing);
        }
        let item = ReviewItem {
            item_id: id.clone(),
            site_id: site_id.to_string(),
            frame_ref: FrameRef {
                file: frame_file.to_string(),
                frame_index: output.frame_index,
            },
            track_id: output.track_id,
            bbox: output.bbox,
            confidence: output.confidence,
            species_label: output.species_label.clone(),
            reason: Reason::ExpertRequest,
            status: ReviewStatus::Pending,
            created_at: now,
            resolved_at: None,
            crossing: None,
            corrected_box: None,
            corrected_species: None,
            count_delta: 0,
        };
        self.append(site_id, &[LogEvent::Flagged { item }])?;
        self.item(&id)
    }

    pub fn item(&self, id: &str) -> Result<ReviewItem> {
        let index = self.index.read().expect("index lock poisoned");
        index
            .items
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("item {id}")))
    }

    pub fn annotations(&self, id: &str) -> Vec<ExpertAnnotation> {
        let index = self.index.read().expect("index lock poisoned");
        index.annotations.get(id).cloned().unwrap_or_default()
    }

    pub fn submit(
        &self,
        id: &str,
        input: AnnotationInput,
        now: DateTime<Utc>,
    ) -> Result<ReviewItem> {
        input.validate()?;
        let _w = self.writer.lock().expect("writer lock poisoned");
        let item = self.item(id)?;
        if item.status != ReviewStatus::Pending {
            return Err(Error::Conflict(format!(
                "item {id} is already {:?}",
                item.status
            )));
        }
        let annotation = ExpertAnnotation {
            item_id: id.to_string(),
            input,
            created_at: now,
        };
        self.append(&item.site_id, &[LogEvent::Annotation { annotation }])?;
        self.item(id)
    }

    /// Items in creation order, optionally filtered.
    pub fn queue(&self, site: Option<&str>, status: Option<ReviewStatus>) -> Vec<ReviewItem> {
        let index = self.index.read().expect("index lock poisoned");
        let mut out: Vec<ReviewItem> = index
            .sites
            .iter()
            .filter(|(name, _)| site.is_none_or(|s| s == name.as_str()))
            .flat_map(|(_, s)| s.items.iter().map(|id| index.items[id].clone()))
            .filter(|it| status.is_none_or(|st| it.status == st))
            .collect();
        out.sort_by_key(|a| a.created_at);
        out
    }

    pub fn has_upload(&self, site: &str, upload_id: &str) -> bool {
        let index = self.index.read().expect("index lock poisoned");
        index
            .sites
            .get(site)
            .is_some_and(|s| s.uploads.contains_key(upload_id))
    }

    pub fn sites(&self) -> Vec<String> {
        self.index
            .read()
            .expect("index lock poisoned")
            .sites
            .keys()
            .cloned()
            .collect()
    }

    pub fn pipeline_counts(&self, site: &str) -> CountSummary {
        let index = self.index.read().expect("index lock poisoned");
        let mut total = CountSummary::default();
        if let Some(s) = index.sites.get(site) {
            for c in s.uploads.values() {
                total.upstream += c.upstream;
                total.downstream += c.downstream;
            }
        }
        total.net = total.upstream as i64 - total.downstream as i64;
        total
    }

    /// Pipeline counts plus count deltas of corrected items (applied to the
    /// item's crossing direction, upstream when it has none), minus one
    /// crossing per rejected count item.
    pub fn corrected_counts(&self, site: &str) -> CorrectedCounts {
        let base = self.pipeline_counts(site);
        let (mut up, mut down) = (base.upstream as i64, base.downstream as i64);
        for it in self.queue(Some(site), None) {
            match it.status {
                ReviewStatus::Corrected => match it.crossing {
                    Some(Direction::Downstream) => down += it.count_delta,
                    _ => up += it.count_delta,
                },
                ReviewStatus::Rejected if it.reason == Reason::CountAmbiguity => {
                    match it.crossing {
                        Some(Direction::Downstream) => down -= 1,
                        _ => up -= 1,
                    }
                }
                _ => {}
            }
        }
        CorrectedCounts {
            upstream: up,
            downstream: down,
            net: up - down,
        }
    }

    /// Accepted and corrected items as MOT rows with corrected values, one
    /// row per item, sorted by (frame, track).
    pub fn training_records(&self, site: Option<&str>) -> Vec<MotRecord> {
        let mut items: Vec<ReviewItem> = self
            .queue(site, None)
            .into_iter()
            .filter(|it| matches!(it.status, ReviewStatus::Accepted | ReviewStatus::Corrected))
            .collect();
        items.sort_by(|a, b| {
            (a.frame_ref.frame_index, a.track_id, &a.item_id).cmp(&(
                b.frame_ref.frame_index,
                b.track_id,
                &b.item_id,
            ))
        });
        items
            .iter()
            .map(|it| {
                MotRecord::track(
                    it.frame_ref.frame_index,
                    it.track_id as i64,
                    it.effective_box(),
                    1.0,
                    it.effective_species(),
                )
            })
            .collect()
    }

    pub fn export_training_set(&self, site: Option<&str>, path: &Path) -> Result<usize> {
        let records = self.training_records(site);
        let mut buf = Vec::new();
        write_mot(&mut buf, &records)?;
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, buf)?;
        Ok(records.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn t(s: i64) -> DateTime<Utc> {
        Utc.timestamp_opt(1_700_000_000 + s, 0).unwrap()
    }

    fn out(track: u64, frame: u32, conf: f64) -> UploadOutput {
        UploadOutput {
            track_id: track,
            frame_index: frame,
            bbox: GridBox::new(10.0, 20.0, 4.0, 8.0),
            confidence: conf,
            species_label: "salmonid".into(),
        }
    }

    fn text(s: &str) -> AnnotationInput {
        AnnotationInput {
            payload: AnnotationPayload::Text(s.into()),
            corrected_species: None,
            corrected_count_delta: None,
            reject: false,
            author: "rev".into(),
        }
    }

    #[test]
    fn flagging_threshold_cases() {
        let outs = vec![out(1, 0, 0.3), out(2, 0, 0.7)];
        assert!(flag_outputs("s", "f", &outs, 0.0, &[], t(0))
            .unwrap()
            .is_empty());
        assert_eq!(
            flag_outputs("s", "f", &outs, 1.0, &[], t(0)).unwrap().len(),
            2
        );
        let items = flag_outputs("s", "f", &outs, 0.5, &[], t(0)).unwrap();
        assert_eq!(items.len(), 1);
        assert_eq!(
            (items[0].track_id, items[0].reason),
            (1, Reason::LowConfidence)
        );
        assert!(flag_outputs("s", "f", &outs, 1.5, &[], t(0)).is_err());
    }

    #[test]
    fn crossing_items_use_track_mean() {
        let outs = vec![out(1, 0, 0.3), out(1, 1, 0.5), out(2, 0, 0.9)];
        let events = vec![
            CountEvent {
                track_id: 1,
                frame_index: 1,
                direction: Direction::Upstream,
            },
            CountEvent {
                track_id: 2,
                frame_index: 0,
                direction: Direction::Downstream,
            },
        ];
        let items = flag_outputs("s", "f", &outs, 0.45, &events, t(0)).unwrap();
        let counts: Vec<_> = items
            .iter()
            .filter(|i| i.reason == Reason::CountAmbiguity)
            .collect();
        assert_eq!(counts.len(), 1);
        assert!((counts[0].confidence - 0.4).abs() < 1e-12);
        assert_eq!(counts[0].crossing, Some(Direction::Upstream));
    }

    #[test]
    fn ids_are_deterministic() {
        assert_eq!(
            item_id("a", "f", 1, 2, Reason::LowConfidence),
            item_id("a", "f", 1, 2, Reason::LowConfidence)
        );
        assert_ne!(
            item_id("a", "f", 1, 2, Reason::LowConfidence),
            item_id("a", "f", 1, 3, Reason::LowConfidence)
        );
        assert_ne!(
            item_id("a", "f", 1, 2, Reason::LowConfidence),
            item_id("a", "f", 1, 2, Reason::CountAmbiguity)
        );
        assert_eq!(item_id("a", "f", 1, 2, Reason::LowConfidence).len(), 16);
    }

    fn upload(
        outputs: Vec<UploadOutput>,
        events: Vec<CountEvent>,
        up: u32,
        down: u32,
    ) -> EdgeUpload {
        EdgeUpload {
            upload_id: "u1".into(),
            site_id: "river".into(),
            frame_file: "frames.sraw".into(),
            counts: CountSummary {
                upstream: up,
                downstream: down,
                net: up as i64 - down as i64,
            },
            outputs,
            events,
        }
    }

    #[test]
    fn resolution_rules() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReviewStore::open(dir.path()).unwrap();
        let ids = store
            .ingest(
                &upload(
                    vec![out(1, 0, 0.1), out(2, 0, 0.1), out(3, 0, 0.1)],
                    vec![],
                    0,
                    0,
                ),
                0.5,
                t(0),
            )
            .unwrap();
        assert_eq!(ids.len(), 3);
        let a = store
            .submit(&ids[0], text("confirmed sockeye"), t(1))
            .unwrap();
        assert_eq!(a.status, ReviewStatus::Accepted);
        assert_eq!(a.resolved_at, Some(t(1)));
        let mut b = text("");
        b.payload = AnnotationPayload::Box {
            x: 11.0,
            y: 20.0,
            w: 4.0,
            h: 8.0,
        };
        let b = store.submit(&ids[1], b, t(2)).unwrap();
        assert_eq!(b.status, ReviewStatus::Corrected);
        assert_eq!(b.bbox, GridBox::new(10.0, 20.0, 4.0, 8.0));
        assert_eq!(b.effective_box(), GridBox::new(11.0, 20.0, 4.0, 8.0));
        assert!(matches!(
            store.submit(&ids[0], text("again"), t(3)),
            Err(Error::Conflict(_))
        ));
        assert!(matches!(
            store.submit("nope", text("x"), t(3)),
            Err(Error::NotFound(_))
        ));
        let mut bad = text("x");
        bad.payload = AnnotationPayload::Box {
            x: 0.0,
            y: 0.0,
            w: -1.0,
            h: 1.0,
        };
        assert!(matches!(
            store.submit(&ids[2], bad, t(3)),
            Err(Error::Domain(_))
        ));
        let s = summarize(&store.queue(None, None));
        assert_eq!(
            (s.pending, s.accepted + s.corrected + s.rejected, s.total),
            (1, 2, 3)
        );
    }

    #[test]
    fn corrected_count_cases() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReviewStore::open(dir.path()).unwrap();
        let events = vec![
            CountEvent {
                track_id: 1,
                frame_index: 0,
                direction: Direction::Upstream,
            },
            CountEvent {
                track_id: 2,
                frame_index: 0,
                direction: Direction::Upstream,
            },
            CountEvent {
                track_id: 3,
                frame_index: 0,
                direction: Direction::Upstream,
            },
        ];
        let outs = vec![out(1, 0, 0.2), out(2, 0, 0.2), out(3, 0, 0.2)];
        store
            .ingest(&upload(outs, events, 7, 2), 0.5, t(0))
            .unwrap();
        let base = CorrectedCounts {
            upstream: 7,
            downstream: 2,
            net: 5,
        };
        assert_eq!(store.corrected_counts("river"), base);
        let counts = store
            .queue(Some("river"), None)
            .into_iter()
            .filter(|i| i.reason == Reason::CountAmbiguity)
            .collect::<Vec<_>>();
        let mut rej = text("not a fish");
        rej.reject = true;
        store.submit(&counts[0].item_id, rej, t(1)).unwrap();
        assert_eq!(store.corrected_counts("river").upstream, 6);
        let mut plus = text("two fish");
        plus.corrected_count_delta = Some(1);
        let mut minus = text("none");
        minus.corrected_count_delta = Some(-1);
        store.submit(&counts[1].item_id, plus, t(2)).unwrap();
        store.submit(&counts[2].item_id, minus, t(3)).unwrap();
        assert_eq!(store.corrected_counts("river").net, 4);
    }

    #[test]
    fn log_replay_and_idempotent_ingest() {
        let dir = tempfile::tempdir().unwrap();
        let up = upload(vec![out(1, 0, 0.1), out(1, 1, 0.2)], vec![], 3, 1);
        let id;
        {
            let store = ReviewStore::open(dir.path()).unwrap();
            let ids = store.ingest(&up, 0.5, t(0)).unwrap();
            id = ids[0].clone();
            let mut a = text("");
            a.corrected_species = Some("coho".into());
            store.submit(&id, a, t(5)).unwrap();
        }
        let store = ReviewStore::open(dir.path()).unwrap();
        assert_eq!(store.item(&id).unwrap().status, ReviewStatus::Corrected);
        assert_eq!(store.item(&id).unwrap().effective_species(), "coho");
        assert!(store.ingest(&up, 0.5, t(9)).unwrap().is_empty());
        assert_eq!(store.queue(None, None).len(), 2);
        assert_eq!(store.pipeline_counts("river").upstream, 3);
        assert_eq!(store.annotations(&id).len(), 1);
    }

    #[test]
    fn export_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReviewStore::open(dir.path()).unwrap();
        let p = dir.path().join("x/train.csv");
        assert_eq!(store.export_training_set(None, &p).unwrap(), 0);
        assert_eq!(fs::read(&p).unwrap(), b"");
        let outs: Vec<_> = (0..6).map(|k| out(k, k as u32, 0.1)).collect();
        let ids = store
            .ingest(&upload(outs, vec![], 0, 0), 0.5, t(0))
            .unwrap();
        for (k, id) in ids.iter().enumerate().take(5) {
            let mut a = text("ok");
            if k == 2 {
                a.payload = AnnotationPayload::Box {
                    x: 1.0,
                    y: 2.0,
                    w: 3.0,
                    h: 4.0,
                };
                a.corrected_species = Some("sockeye".into());
            }
            store.submit(id, a, t(1 + k as i64)).unwrap();
        }
        assert_eq!(store.export_training_set(Some("river"), &p).unwrap(), 5);
        let first = fs::read_to_string(&p).unwrap();
        assert_eq!(first.lines().count(), 5);
        assert!(first.lines().any(|l| l == "3,2,1,2,3,4,1,sockeye,1"));
        store.export_training_set(Some("river"), &p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), first);
    }

    struct AcceptAll;
    impl Adjudicator for AcceptAll {
        fn adjudicate(&self, _item: &ReviewItem) -> Option<AnnotationInput> {
            Some(text("auto"))
        }
    }

    #[test]
    fn adjudicator_hook_resolves() {
        let dir = tempfile::tempdir().unwrap();
        let store = ReviewStore::with_adjudicator(dir.path(), Box::new(AcceptAll)).unwrap();
        store
            .ingest(&upload(vec![out(1, 0, 0.1)], vec![], 0, 0), 0.5, t(0))
            .unwrap();
        assert!(store.queue(None, Some(ReviewStatus::Pending)).is_empty());
    }

    #[test]
    fn annotation_json_shape() {
        let a: AnnotationInput = serde_json::from_str(
            r#"{"kind":"Box","payload":{"x":1,"y":2,"w":3,"h":4},"author":"a"}"#,
        )
        .unwrap();
        assert_eq!(
            a.payload,
            AnnotationPayload::Box {
                x: 1.0,
                y: 2.0,
                w: 3.0,
                h: 4.0
            }
        );
        let d: AnnotationInput = serde_json::from_str(
            r#"{"kind":"Dot","payload":{"x":1,"y":2},"author":"a","corrected_count_delta":-1}"#,
        )
        .unwrap();
        assert_eq!(d.corrected_count_delta, Some(-1));
        let s: AnnotationInput =
            serde_json::from_str(r#"{"kind":"Text","payload":"hello","author":"a"}"#).unwrap();
        assert_eq!(s.payload, AnnotationPayload::Text("hello".into()));
        assert!(serde_json::from_str::<AnnotationInput>(
            r#"{"kind":"Box","payload":{"x":1},"author":"a"}"#
        )
        .is_err());
    }
}
