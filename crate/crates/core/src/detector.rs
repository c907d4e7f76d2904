//! Classical detection front-end: temporal-median background, thresholding,
//! morphological opening, 8-connected components, and greedy NMS.
//!
//! Confidence is a heuristic, not a calibrated probability:
//! `clamp(mean(excess − δ) / δ, 0, 1) · (1 − exp(−area / min_area))`, where
//! `excess` is frame minus background and `δ` the threshold. It grows with
//! both brightness and size so low-confidence triage has something to bite on.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::frame::{iou, GridBox, SonarFrame};
use crate::mask::Mask;

pub const DEFAULT_SPECIES: &str = "salmonid";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub threshold_delta: f64,
    pub min_area_cells: u32,
    pub morph_open_radius: u32,
    pub nms_iou: f64,
    /// Frames in the trailing background window.
    pub background_window: u32,
    /// Recompute the background every this many frames.
    pub background_refresh: u32,
    pub species_label: String,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            threshold_delta: 0.15,
            min_area_cells: 12,
            morph_open_radius: 1,
            nms_iou: 0.5,
            background_window: 25,
            background_refresh: 5,
            species_label: DEFAULT_SPECIES.to_string(),
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_delta > 0.0 && self.threshold_delta.is_finite()) {
            return Err(domain("threshold_delta must be positive"));
        }
        if self.min_area_cells == 0 {
            return Err(domain("min_area_cells must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.nms_iou) {
            return Err(domain("nms_iou must be in [0, 1]"));
        }
        if self.background_window == 0 || self.background_refresh == 0 {
            return Err(domain("background window and refresh must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame_index: u32,
    pub bbox: GridBox,
    pub confidence: f64,
    pub species_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Mask>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundModel {
    pub window_len: u32,
    median: SonarFrame,
}

impl BackgroundModel {
    pub fn constant(beam_count: u32, bin_count: u32, value: f32) -> Self {
        Self {
            window_len: 1,
            median: SonarFrame::filled(beam_count, bin_count, value),
        }
    }

    pub fn frame(&self) -> &SonarFrame {
        &self.median
    }
}

/// Per-cell median of the last `window_len` frames (mean of the middle two
/// for an even window).
pub fn estimate_background(frames: &[SonarFrame], window_len: u32) -> Result<BackgroundModel> {
    let refs: Vec<&SonarFrame> = frames.iter().collect();
    estimate_background_refs(&refs, window_len)
}

pub fn estimate_background_refs(
    frames: &[&SonarFrame],
    window_len: u32,
) -> Result<BackgroundModel> {
    if frames.is_empty() {
        return Err(domain("background needs at least one frame"));
    }
    if window_len == 0 || window_len as usize > frames.len() {
        return Err(domain(format!(
            "window_len {window_len} must be in 1..={}",
            frames.len()
        )));
    }
    let window = &frames[frames.len() - window_len as usize..];
    let first = window[0];
    if window.iter().any(|f| !f.same_shape(first)) {
        return Err(domain("frames differ in shape"));
    }
    let n = window.len();
    let data: Vec<f32> = (0..first.data().len())
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(n),
            |buf, i| {
                buf.clear();
                buf.extend(window.iter().map(|f| f.data()[i]));
                buf.sort_by(f32::total_cmp);
                if n % 2 == 1 {
                    buf[n / 2]
                } else {
                    (buf[n / 2 - 1] + buf[n / 2]) / 2.0
                }
            },
        )
        .collect();
    Ok(BackgroundModel {
        window_len,
        median: SonarFrame::from_data(first.beam_count(), first.bin_count(), data)?,
    })
}

/// Binary grid in the same beam-major layout as [`SonarFrame`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryGrid {
    pub beams: usize,
    pub bins: usize,
    pub bits: Vec<bool>,
}

impl BinaryGrid {
    fn at(&self, b: isize, r: isize) -> bool {
        b >= 0
            && r >= 0
            && (b as usize) < self.beams
            && (r as usize) < self.bins
            && self.bits[b as usize * self.bins + r as usize]
    }

    fn cross_step(&self, erode: bool) -> BinaryGrid {
        let mut out = vec![false; self.bits.len()];
        for b in 0..self.beams as isize {
            for r in 0..self.bins as isize {
                let n = [(b, r), (b - 1, r), (b + 1, r), (b, r - 1), (b, r + 1)]
                    .map(|(x, y)| self.at(x, y));
                out[b as usize * self.bins + r as usize] = if erode {
                    n.iter().all(|&v| v)
                } else {
                    n.iter().any(|&v| v)
                };
            }
        }
        BinaryGrid {
            beams: self.beams,
            bins: self.bins,
            bits: out,
        }
    }

    /// Opening with a diamond (L1 ball) of the given radius; cells outside
    /// the grid count as background.
    pub fn open(&self, radius: u32) -> BinaryGrid {
        let mut g = self.clone();
        for _ in 0..radius {
            g = g.cross_step(true);
        }
        for _ in 0..radius {
            g = g.cross_step(false);
        }
        g
    }

    /// Opening by reconstruction: keeps every 8-connected component of the
    /// grid that retains at least one cell under [`BinaryGrid::open`], with
    /// its original shape. Specks narrower than the structuring element go;
    /// thin parts of surviving objects stay.
    pub fn open_by_reconstruction(&self, radius: u32) -> BinaryGrid {
        let opened = self.open(radius);
        let mut bits = vec![false; self.bits.len()];
        for comp in self.components() {
            if comp
                .iter()
                .any(|&(b, r)| opened.bits[b as usize * self.bins + r as usize])
            {
                for (b, r) in comp {
                    bits[b as usize * self.bins + r as usize] = true;
                }
            }
        }
        BinaryGrid {
            beams: self.beams,
            bins: self.bins,
            bits,
        }
    }

    /// 8-connected components as `(beam, bin)` lists, in scan order of their
    /// first cell.
    pub fn components(&self) -> Vec<Vec<(u32, u32)>> {
        let mut seen = vec![false; self.bits.len()];
        let mut out = Vec::new();
        let mut stack = Vec::new();
        for start in 0..self.bits.len() {
            if !self.bits[start] || seen[start] {
                continue;
            }
            seen[start] = true;
            stack.push(start);
            let mut comp = Vec::new();
            while let Some(i) = stack.pop() {
                let (b, r) = ((i / self.bins) as isize, (i % self.bins) as isize);
                comp.push((b as u32, r as u32));
                for db in -1..=1 {
                    for dr in -1..=1 {
                        let (nb, nr) = (b + db, r + dr);
                        if self.at(nb, nr) {
                            let j = nb as usize * self.bins + nr as usize;
                            if !seen[j] {
                                seen[j] = true;
                                stack.push(j);
                            }
                        }
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}

fn tie_order(a: &Detection, b: &Detection) -> std::cmp::Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then(a.bbox.y.total_cmp(&b.bbox.y))
        .then(a.bbox.x.total_cmp(&b.bbox.x))
}

pub fn detect(
    frame: &SonarFrame,
    frame_index: u32,
    background: &BackgroundModel,
    cfg: &DetectorConfig,
) -> Result<Vec<Detection>> {
    cfg.validate()?;
    let bg = background.frame();
    if !frame.same_shape(bg) {
        return Err(domain("frame and background dimensions differ"));
    }
    let delta = cfg.threshold_delta;
    let excess: Vec<f64> = frame
        .data()
        .iter()
        .zip(bg.data())
        .map(|(&f, &b)| f as f64 - b as f64)
        .collect();
    let fg = BinaryGrid {
        beams: frame.beam_count() as usize,
        bins: frame.bin_count() as usize,
        bits: excess.iter().map(|&e| e > delta).collect(),
    };
    let opened = fg.open_by_reconstruction(cfg.morph_open_radius);
    let mut out = Vec::new();
    for comp in opened.components() {
        let area = comp.len();
        if area < cfg.min_area_cells as usize {
            continue;
        }
        let mean_over = comp
            .iter()
            .map(|&(b, r)| excess[frame.index(b, r)] - delta)
            .sum::<f64>()
            / area as f64;
        let brightness = (mean_over / delta).clamp(0.0, 1.0);
        let size = 1.0 - (-(area as f64) / cfg.min_area_cells as f64).exp();
        let mask = Mask::from_cells(&comp)?;
        out.push(Detection {
            frame_index,
            bbox: mask.bbox(),
            confidence: (brightness * size).clamp(0.0, 1.0),
            species_label: cfg.species_label.clone(),
            mask: Some(mask),
        });
    }
    out.sort_by(tie_order);
    Ok(out)
}

/// Greedy suppression: keep the most confident remaining detection, drop
/// every remaining one overlapping it with IoU above the threshold. Equal
/// confidences keep their input order.
pub fn nms(detections: &[Detection], iou_threshold: f64) -> Result<Vec<Detection>> {
    if let Some(first) = detections.first() {
        if detections
            .iter()
            .any(|d| d.frame_index != first.frame_index)
        {
            return Err(domain("nms input mixes frames"));
        }
    }
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        detections[b]
            .confidence
            .total_cmp(&detections[a].confidence)
    });
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept
            .iter()
            .all(|&k| iou(&detections[k].bbox, &detections[i].bbox) <= iou_threshold)
        {
            kept.push(i);
        }
    }
    Ok(kept.into_iter().map(|i| detections[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Xorshift64Star;
    use proptest::prelude::*;

    fn blob(frame: &mut SonarFrame, b0: u32, r0: u32, w: u32, h: u32, v: f32) {
        for b in b0..b0 + w {
            for r in r0..r0 + h {
                frame.set(b, r, v);
            }
        }
    }

    #[test]
    fn reconstruction_keeps_attached_tails() {
        let (beams, bins) = (12usize, 12usize);
        let mut bits = vec![false; beams * bins];
        let mut on = |b: usize, r: usize| bits[b * bins + r] = true;
        for b in 1..4 {
            for r in 1..4 {
                on(b, r);
            }
        }
        // one-wide tail attached to the blob, and an isolated line
        for r in 4..9 {
            on(2, r);
        }
        for r in 2..10 {
            on(8, r);
        }
        let g = BinaryGrid { beams, bins, bits };
        let plain = g.open(1);
        assert!(!plain.bits[2 * bins + 6]);
        let rec = g.open_by_reconstruction(1);
        assert!(rec.bits[2 * bins + 6] && rec.bits[2 * bins + 8]);
        assert!((2..10).all(|r| !rec.bits[8 * bins + r]));
        assert_eq!(rec.bits.iter().filter(|&&v| v).count(), 9 + 5);
    }

    #[test]
    fn constant_background() {
        let frames = vec![SonarFrame::filled(3, 3, 0.2); 4];
        let bg = estimate_background(&frames, 4).unwrap();
        assert!(bg.frame().data().iter().all(|&v| v == 0.2));
        assert!(estimate_background(&frames, 5).is_err());
        assert!(estimate_background(&[], 1).is_err());
    }

    #[test]
    fn median_of_zero_zero_one() {
        let frames: Vec<_> = [0.0, 0.0, 1.0]
            .iter()
            .map(|&v| SonarFrame::filled(2, 2, v))
            .collect();
        let bg = estimate_background(&frames, 3).unwrap();
        assert!(bg.frame().data().iter().all(|&v| v == 0.0));
        let mut rev = frames.clone();
        rev.reverse();
        assert_eq!(estimate_background(&rev, 3).unwrap(), bg);
    }

    #[test]
    fn trailing_window_only() {
        let frames: Vec<_> = [1.0, 0.0, 0.0]
            .iter()
            .map(|&v| SonarFrame::filled(1, 2, v))
            .collect();
        assert!(estimate_background(&frames, 2)
            .unwrap()
            .frame()
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn no_foreground_no_detections() {
        let f = SonarFrame::filled(20, 20, 0.1);
        let bg = BackgroundModel::constant(20, 20, 0.1);
        assert!(detect(&f, 0, &bg, &DetectorConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn two_blobs_two_detections() {
        let mut f = SonarFrame::filled(40, 40, 0.1);
        blob(&mut f, 2, 3, 4, 5, 0.9);
        blob(&mut f, 20, 25, 6, 4, 0.8);
        let bg = BackgroundModel::constant(40, 40, 0.1);
        let d = detect(&f, 7, &bg, &DetectorConfig::default()).unwrap();
        assert_eq!(d.len(), 2);
        let boxes: Vec<_> = d.iter().map(|d| d.bbox).collect();
        assert!(boxes.contains(&GridBox::new(2.0, 3.0, 4.0, 5.0)));
        assert!(boxes.contains(&GridBox::new(20.0, 25.0, 6.0, 4.0)));
        assert!(d
            .iter()
            .all(|d| d.frame_index == 7 && d.species_label == "salmonid"));
        assert!(d[0].confidence >= d[1].confidence);
    }

    #[test]
    fn blob_just_under_min_area_is_dropped() {
        let cfg = DetectorConfig {
            morph_open_radius: 0,
            ..Default::default()
        };
        let bg = BackgroundModel::constant(30, 30, 0.1);
        let mut f = SonarFrame::filled(30, 30, 0.1);
        // 11 cells: a 3x3 square plus two extra
        blob(&mut f, 5, 5, 3, 3, 0.9);
        f.set(8, 5, 0.9);
        f.set(8, 6, 0.9);
        assert!(detect(&f, 0, &bg, &cfg).unwrap().is_empty());
        f.set(8, 7, 0.9);
        assert_eq!(detect(&f, 0, &bg, &cfg).unwrap().len(), 1);
    }

    #[test]
    fn confidence_formula() {
        let cfg = DetectorConfig {
            morph_open_radius: 0,
            ..Default::default()
        };
        let bg = BackgroundModel::constant(30, 30, 0.0);
        let mut f = SonarFrame::filled(30, 30, 0.0);
        blob(&mut f, 5, 5, 4, 6, 0.25);
        let d = detect(&f, 0, &bg, &cfg).unwrap();
        let expect = ((0.25f32 as f64 - 0.15) / 0.15) * (1.0 - (-24.0f64 / 12.0).exp());
        assert!((d[0].confidence - expect).abs() < 1e-12);
    }

    #[test]
    fn opening_removes_thin_lines() {
        let mut f = SonarFrame::filled(30, 30, 0.0);
        blob(&mut f, 5, 0, 1, 30, 0.9);
        let bg = BackgroundModel::constant(30, 30, 0.0);
        assert!(detect(&f, 0, &bg, &DetectorConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let f = SonarFrame::filled(3, 3, 0.0);
        let bg = BackgroundModel::constant(3, 4, 0.0);
        assert!(detect(&f, 0, &bg, &DetectorConfig::default()).is_err());
    }

    fn det(frame: u32, x: f64, y: f64, w: f64, h: f64, c: f64) -> Detection {
        Detection {
            frame_index: frame,
            bbox: GridBox::new(x, y, w, h),
            confidence: c,
            species_label: DEFAULT_SPECIES.into(),
            mask: None,
        }
    }

    #[test]
    fn nms_keeps_stronger_overlap() {
        let a = det(0, 0.0, 0.0, 10.0, 10.0, 0.8);
        let b = det(0, 0.0, 0.0, 10.0, 9.0, 0.9);
        assert_eq!(nms(&[a.clone(), b.clone()], 0.5).unwrap(), vec![b]);
        let c = det(0, 50.0, 50.0, 2.0, 2.0, 0.1);
        assert_eq!(
            nms(&[a.clone(), c.clone()], 0.5).unwrap(),
            vec![a.clone(), c]
        );
        assert!(nms(&[a, det(1, 0.0, 0.0, 1.0, 1.0, 0.5)], 0.5).is_err());
    }

    /// Keep-set oracle: a detection survives iff no higher-ranked survivor
    /// overlaps it above the threshold, checked over all subsets.
    fn brute_nms(d: &[Detection], thr: f64) -> Vec<usize> {
        let mut order: Vec<usize> = (0..d.len()).collect();
        order.sort_by(|&a, &b| d[b].confidence.total_cmp(&d[a].confidence));
        for mask in 0u32..1 << d.len() {
            let keep: Vec<usize> = order
                .iter()
                .copied()
                .filter(|&i| mask >> i & 1 == 1)
                .collect();
            let consistent = order.iter().enumerate().all(|(pos, &i)| {
                let blocked = order[..pos]
                    .iter()
                    .any(|&k| mask >> k & 1 == 1 && iou(&d[k].bbox, &d[i].bbox) > thr);
                (mask >> i & 1 == 1) == !blocked
            });
            if consistent {
                return keep;
            }
        }
        unreachable!()
    }

    #[test]
    fn nms_matches_subset_oracle() {
        let mut rng = Xorshift64Star::new(17);
        for _ in 0..500 {
            let d: Vec<_> = (0..5)
                .map(|_| {
                    det(
                        0,
                        rng.uniform(0.0, 10.0),
                        rng.uniform(0.0, 10.0),
                        rng.uniform(2.0, 8.0),
                        rng.uniform(2.0, 8.0),
                        rng.next_f64(),
                    )
                })
                .collect();
            let expect: Vec<_> = brute_nms(&d, 0.5)
                .into_iter()
                .map(|i| d[i].clone())
                .collect();
            assert_eq!(nms(&d, 0.5).unwrap(), expect);
        }
    }

    proptest! {
        #[test]
        fn detections_are_consistent(seed in 0u64..500) {
            let mut rng = Xorshift64Star::new(seed);
            let data = (0..32 * 32).map(|_| if rng.next_f64() < 0.4 { 0.9 } else { 0.0 }).collect();
            let f = SonarFrame::from_data(32, 32, data).unwrap();
            let bg = BackgroundModel::constant(32, 32, 0.0);
            let cfg = DetectorConfig { min_area_cells: 3, ..Default::default() };
            let d = detect(&f, 0, &bg, &cfg).unwrap();
            let mut seen = std::collections::HashSet::new();
            for x in &d {
                prop_assert!(x.bbox.within(32, 32));
                prop_assert!((0.0..=1.0).contains(&x.confidence));
                for (b, r) in x.mask.as_ref().unwrap().cells() {
                    prop_assert!(x.bbox.contains_cell(b, r));
                    prop_assert!(seen.insert((b, r)));
                }
            }
            let once = nms(&d, 0.3).unwrap();
            prop_assert!(once.windows(2).all(|w| w[0].confidence >= w[1].confidence));
            prop_assert!(once.iter().all(|x| d.contains(x)));
            prop_assert_eq!(nms(&once, 0.3).unwrap(), once);
        }
    }
}
