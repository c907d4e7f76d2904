//! Detection, tracking, counting and length metrics.
//!
//! Conventions where the usual definitions leave a gap:
//! - AP uses all-point interpolation; with no ground truth it is 1 when there
//!   are no predictions either and 0 otherwise.
//! - MOTA is undefined (`None`) without ground truth.
//! - HOTA and IDF1 are 1 when both sides are empty.
//! - HOTA matching maximizes the number of matches first and the summed
//!   global alignment score second.
//! - MAPE skips cases whose true value is 0 and is `None` when all are 0.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::assign::{hungarian, CostMatrix};
use crate::error::{domain, Result};
use crate::frame::{iou, GridBox};
use crate::mot::MotRecord;

/// One-to-one matching between the ground-truth and predicted boxes of a
/// frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatch {
    /// `(gt index, pred index, IoU)`.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_gt: Vec<usize>,
    pub unmatched_pred: Vec<usize>,
}

/// Matching that maximizes total IoU over pairs with IoU ≥ `iou_threshold`.
pub fn match_frame(gt: &[GridBox], pred: &[GridBox], iou_threshold: f64) -> FrameMatch {
    let ious: Vec<Vec<f64>> = gt
        .iter()
        .map(|g| pred.iter().map(|p| iou(g, p)).collect())
        .collect();
    match_by_iou(&ious, gt.len(), pred.len(), iou_threshold, |_, _| true)
}

/// Max-total-IoU matching restricted to `allowed` pairs, as a perfect
/// matching on a padded square matrix where leaving an item unmatched
/// costs 0.
fn match_by_iou(
    ious: &[Vec<f64>],
    g: usize,
    p: usize,
    thr: f64,
    allowed: impl Fn(usize, usize) -> bool,
) -> FrameMatch {
    let mut pairs = Vec::new();
    if g > 0 && p > 0 {
        let n = g + p;
        let mut cost = CostMatrix::new(n, n);
        for i in 0..n {
            for j in 0..n {
                let v = if i < g && j < p {
                    let v = ious[i][j];
                    if v >= thr && v > 0.0 && allowed(i, j) {
                        -v
                    } else {
                        f64::INFINITY
                    }
                } else {
                    0.0
                };
                cost.set(i, j, v);
            }
        }
        for (i, j) in hungarian(&cost).pairs() {
            if i < g && j < p {
                pairs.push((i, j, ious[i][j]));
            }
        }
    }
    let mut gt_used = vec![false; g];
    let mut pred_used = vec![false; p];
    for &(i, j, _) in &pairs {
        gt_used[i] = true;
        pred_used[j] = true;
    }
    FrameMatch {
        pairs,
        unmatched_gt: (0..g).filter(|&i| !gt_used[i]).collect(),
        unmatched_pred: (0..p).filter(|&j| !pred_used[j]).collect(),
    }
}

fn by_frame(records: &[MotRecord]) -> BTreeMap<u32, Vec<&MotRecord>> {
    let mut m: BTreeMap<u32, Vec<&MotRecord>> = BTreeMap::new();
    for r in records {
        m.entry(r.frame).or_default().push(r);
    }
    m
}

/// Average precision at one IoU threshold with greedy confidence-ordered
/// matching (each prediction takes the best-overlapping unmatched ground
/// truth in its frame) and all-point interpolation.
pub fn average_precision(preds: &[MotRecord], gts: &[MotRecord], iou_threshold: f64) -> f64 {
    if gts.is_empty() {
        return if preds.is_empty() { 1.0 } else { 0.0 };
    }
    let gt_frames = by_frame(gts);
    let mut used: HashMap<u32, Vec<bool>> = gt_frames
        .iter()
        .map(|(&f, v)| (f, vec![false; v.len()]))
        .collect();
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        preds[b]
            .conf
            .total_cmp(&preds[a].conf)
            .then(preds[a].frame.cmp(&preds[b].frame))
    });
    let mut tp_flags = Vec::with_capacity(preds.len());
    for i in order {
        let p = &preds[i];
        let mut best: Option<(usize, f64)> = None;
        if let Some(frame_gts) = gt_frames.get(&p.frame) {
            let flags = &used[&p.frame];
            for (k, g) in frame_gts.iter().enumerate() {
                if flags[k] {
                    continue;
                }
                let v = iou(&g.bbox(), &p.bbox());
                if v >= iou_threshold && v > 0.0 && best.is_none_or(|(_, b)| v > b) {
                    best = Some((k, v));
                }
            }
        }
        if let Some((k, _)) = best {
            used.get_mut(&p.frame).unwrap()[k] = true;
        }
        tp_flags.push(best.is_some());
    }
    let total = gts.len() as f64;
    let mut recall = Vec::with_capacity(tp_flags.len());
    let mut precision = Vec::with_capacity(tp_flags.len());
    let mut tp = 0.0;
    for (n, &flag) in tp_flags.iter().enumerate() {
        if flag {
            tp += 1.0;
        }
        recall.push(tp / total);
        precision.push(tp / (n + 1) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_r = 0.0;
    for (r, p) in recall.iter().zip(&precision) {
        ap += (r - prev_r) * p;
        prev_r = *r;
    }
    ap
}

/// IoU thresholds from 0.50 to 0.75 inclusive in steps of `step`
/// (0.05 gives 0.50, 0.55, …, 0.75).
pub fn map50_75_thresholds(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 0.25) {
        return Err(domain(format!("mAP step must be in (0, 0.25], got {step}")));
    }
    let span = 0.25 / step;
    if (span - span.round()).abs() > 1e-6 {
        return Err(domain(format!("mAP step must divide 0.25, got {step}")));
    }
    let n = span.round() as usize;
    Ok((0..=n)
        .map(|k| 0.5 + k as f64 * step)
        .map(|t| (t * 1e9).round() / 1e9)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Match threshold for F1, MOTA, IDF1 and length matching.
    pub iou_threshold: f64,
    pub map_step: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            map_step: 0.05,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(domain(format!(
                "iou_threshold must be in (0, 1], got {}",
                self.iou_threshold
            )));
        }
        map50_75_thresholds(self.map_step).map(|_| ())
    }
}

pub fn map_range(preds: &[MotRecord], gts: &[MotRecord], thresholds: &[f64]) -> Result<f64> {
    if thresholds.is_empty() {
        return Err(domain("no IoU thresholds given"));
    }
    Ok(thresholds
        .iter()
        .map(|&t| average_precision(preds, gts, t))
        .sum::<f64>()
        / thresholds.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub iou_threshold: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

/// Per-frame optimal matching tallies over all predictions.
pub fn detection_tally(preds: &[MotRecord], gts: &[MotRecord], iou_threshold: f64) -> Tally {
    let g = by_frame(gts);
    let p = by_frame(preds);
    let mut t = Tally {
        iou_threshold,
        tp: 0,
        fp: 0,
        fn_: 0,
    };
    let frames: std::collections::BTreeSet<u32> = g.keys().chain(p.keys()).copied().collect();
    for f in frames {
        let gb: Vec<GridBox> = g
            .get(&f)
            .map(|v| v.iter().map(|r| r.bbox()).collect())
            .unwrap_or_default();
        let pb: Vec<GridBox> = p
            .get(&f)
            .map(|v| v.iter().map(|r| r.bbox()).collect())
            .unwrap_or_default();
        let m = match_frame(&gb, &pb, iou_threshold);
        t.tp += m.pairs.len() as u64;
        t.fp += m.unmatched_pred.len() as u64;
        t.fn_ += m.unmatched_gt.len() as u64;
    }
    t
}

pub fn f1_from_tally(t: &Tally) -> f64 {
    let denom = 2 * t.tp + t.fp + t.fn_;
    if denom == 0 {
        1.0
    } else {
        2.0 * t.tp as f64 / denom as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotaResult {
    pub mota: f64,
    pub fn_count: u64,
    pub fp_count: u64,
    pub id_switches: u64,
    pub gt_total: u64,
}

/// CLEAR-MOT accuracy. Pairs matched in the previous frame are kept while
/// they still overlap enough; the rest are matched by maximum total IoU. An
/// identity switch is a ground-truth object matched to a different
/// prediction id than at its last match.
pub fn mota(gts: &[MotRecord], preds: &[MotRecord], iou_threshold: f64) -> Result<MotaResult> {
    if gts.is_empty() {
        return Err(domain("MOTA is undefined without ground truth"));
    }
    let g = by_frame(gts);
    let p = by_frame(preds);
    let frames: std::collections::BTreeSet<u32> = g.keys().chain(p.keys()).copied().collect();
    let mut prev_pairs: HashMap<i64, i64> = HashMap::new();
    let mut last_match: HashMap<i64, i64> = HashMap::new();
    let (mut fn_count, mut fp_count, mut idsw) = (0u64, 0u64, 0u64);
    let empty = Vec::new();
    for f in frames {
        let gr = g.get(&f).unwrap_or(&empty);
        let pr = p.get(&f).unwrap_or(&empty);
        let ious: Vec<Vec<f64>> = gr
            .iter()
            .map(|a| pr.iter().map(|b| iou(&a.bbox(), &b.bbox())).collect())
            .collect();
        let mut kept: Vec<(usize, usize)> = Vec::new();
        for (i, a) in gr.iter().enumerate() {
            if let Some(&pid) = prev_pairs.get(&a.id) {
                if let Some(j) = pr.iter().position(|b| b.id == pid) {
                    if ious[i][j] >= iou_threshold
                        && ious[i][j] > 0.0
                        && !kept.iter().any(|&(_, k)| k == j)
                    {
                        kept.push((i, j));
                    }
                }
            }
        }
        let rest = match_by_iou(&ious, gr.len(), pr.len(), iou_threshold, |i, j| {
            !kept.iter().any(|&(a, b)| a == i || b == j)
        });
        let mut pairs = kept;
        pairs.extend(rest.pairs.iter().map(|&(i, j, _)| (i, j)));
        prev_pairs.clear();
        for &(i, j) in &pairs {
            let (gid, pid) = (gr[i].id, pr[j].id);
            if let Some(&last) = last_match.get(&gid) {
                if last != pid {
                    idsw += 1;
                }
            }
            last_match.insert(gid, pid);
            prev_pairs.insert(gid, pid);
        }
        fn_count += (gr.len() - pairs.len()) as u64;
        fp_count += (pr.len() - pairs.len()) as u64;
    }
    let gt_total = gts.len() as u64;
    Ok(MotaResult {
        mota: 1.0 - (fn_count + fp_count + idsw) as f64 / gt_total as f64,
        fn_count,
        fp_count,
        id_switches: idsw,
        gt_total,
    })
}

/// IoU thresholds 0.05, 0.10, …, 0.95.
pub fn default_alpha_grid() -> Vec<f64> {
    (1..20).map(|k| k as f64 / 20.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HotaResult {
    pub hota: f64,
    pub det_a: f64,
    pub ass_a: f64,
    pub alphas: Vec<f64>,
    pub hota_per_alpha: Vec<f64>,
    pub det_a_per_alpha: Vec<f64>,
    pub ass_a_per_alpha: Vec<f64>,
}

struct IdFrames {
    gt_ids: Vec<i64>,
    pred_ids: Vec<i64>,
    /// Per frame: gt id indices, pred id indices, IoU matrix.
    frames: Vec<(Vec<usize>, Vec<usize>, Vec<Vec<f64>>)>,
}

fn index_ids(gts: &[MotRecord], preds: &[MotRecord]) -> IdFrames {
    let mut gt_ids: Vec<i64> = gts.iter().map(|r| r.id).collect();
    gt_ids.sort_unstable();
    gt_ids.dedup();
    let mut pred_ids: Vec<i64> = preds.iter().map(|r| r.id).collect();
    pred_ids.sort_unstable();
    pred_ids.dedup();
    let g = by_frame(gts);
    let p = by_frame(preds);
    let keys: std::collections::BTreeSet<u32> = g.keys().chain(p.keys()).copied().collect();
    let empty = Vec::new();
    let frames = keys
        .into_iter()
        .map(|f| {
            let gr = g.get(&f).unwrap_or(&empty);
            let pr = p.get(&f).unwrap_or(&empty);
            let gi = gr
                .iter()
                .map(|r| gt_ids.binary_search(&r.id).unwrap())
                .collect();
            let pi = pr
                .iter()
                .map(|r| pred_ids.binary_search(&r.id).unwrap())
                .collect();
            let ious = gr
                .iter()
                .map(|a| pr.iter().map(|b| iou(&a.bbox(), &b.bbox())).collect())
                .collect();
            (gi, pi, ious)
        })
        .collect();
    IdFrames {
        gt_ids,
        pred_ids,
        frames,
    }
}

/// Higher-order tracking accuracy averaged over `alphas`.
pub fn hota(gts: &[MotRecord], preds: &[MotRecord], alphas: &[f64]) -> Result<HotaResult> {
    if alphas.is_empty() {
        return Err(domain("alpha grid is empty"));
    }
    let n = alphas.len();
    if gts.is_empty() && preds.is_empty() {
        return Ok(HotaResult {
            hota: 1.0,
            det_a: 1.0,
            ass_a: 1.0,
            alphas: alphas.to_vec(),
            hota_per_alpha: vec![1.0; n],
            det_a_per_alpha: vec![1.0; n],
            ass_a_per_alpha: vec![1.0; n],
        });
    }
    let idx = index_ids(gts, preds);
    let (ng, np) = (idx.gt_ids.len(), idx.pred_ids.len());
    let mut gt_count = vec![0.0f64; ng];
    let mut pred_count = vec![0.0f64; np];
    let mut potential = vec![vec![0.0f64; np]; ng];
    for (gi, pi, ious) in &idx.frames {
        for &g in gi {
            gt_count[g] += 1.0;
        }
        for &p in pi {
            pred_count[p] += 1.0;
        }
        let row_sums: Vec<f64> = ious.iter().map(|r| r.iter().sum()).collect();
        let col_sums: Vec<f64> = (0..pi.len())
            .map(|j| ious.iter().map(|r| r[j]).sum())
            .collect();
        for (a, &g) in gi.iter().enumerate() {
            for (b, &p) in pi.iter().enumerate() {
                let denom = row_sums[a] + col_sums[b] - ious[a][b];
                if denom > 0.0 {
                    potential[g][p] += ious[a][b] / denom;
                }
            }
        }
    }
    let alignment: Vec<Vec<f64>> = (0..ng)
        .map(|g| {
            (0..np)
                .map(|p| {
                    let d = gt_count[g] + pred_count[p] - potential[g][p];
                    if d > 0.0 {
                        potential[g][p] / d
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let (mut hs, mut ds, mut as_) = (Vec::new(), Vec::new(), Vec::new());
    let total_gt = gt_count.iter().sum::<f64>();
    let total_pred = pred_count.iter().sum::<f64>();
    for &alpha in alphas {
        let mut matches = vec![vec![0.0f64; np]; ng];
        let mut tp = 0.0;
        for (gi, pi, ious) in &idx.frames {
            if gi.is_empty() || pi.is_empty() {
                continue;
            }
            let mut cost = CostMatrix::new(gi.len(), pi.len());
            for a in 0..gi.len() {
                for b in 0..pi.len() {
                    if ious[a][b] >= alpha && ious[a][b] > 0.0 {
                        cost.set(a, b, -alignment[gi[a]][pi[b]]);
                    }
                }
            }
            for (a, b) in hungarian(&cost).pairs() {
                matches[gi[a]][pi[b]] += 1.0;
                tp += 1.0;
            }
        }
        let fn_ = total_gt - tp;
        let fp = total_pred - tp;
        let det_a = if tp + fn_ + fp > 0.0 {
            tp / (tp + fn_ + fp)
        } else {
            0.0
        };
        let mut ass_sum = 0.0;
        for g in 0..ng {
            for p in 0..np {
                let m = matches[g][p];
                if m > 0.0 {
                    ass_sum += m * m / (gt_count[g] + pred_count[p] - m);
                }
            }
        }
        let ass_a = if tp > 0.0 { ass_sum / tp } else { 0.0 };
        ds.push(det_a);
        as_.push(ass_a);
        hs.push((det_a * ass_a).sqrt());
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(HotaResult {
        hota: mean(&hs),
        det_a: mean(&ds),
        ass_a: mean(&as_),
        alphas: alphas.to_vec(),
        hota_per_alpha: hs,
        det_a_per_alpha: ds,
        ass_a_per_alpha: as_,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Idf1Result {
    pub idf1: f64,
    pub idtp: u64,
    pub idfp: u64,
    pub idfn: u64,
}

/// Identity F1 under the trajectory pairing that maximizes the number of
/// frames in which paired trajectories overlap at IoU ≥ `iou_threshold`
/// (equivalently, minimizes identity-level misses plus false alarms).
pub fn idf1(gts: &[MotRecord], preds: &[MotRecord], iou_threshold: f64) -> Idf1Result {
    if gts.is_empty() && preds.is_empty() {
        return Idf1Result {
            idf1: 1.0,
            idtp: 0,
            idfp: 0,
            idfn: 0,
        };
    }
    let idx = index_ids(gts, preds);
    let (ng, np) = (idx.gt_ids.len(), idx.pred_ids.len());
    let mut overlap = vec![vec![0u64; np]; ng];
    for (gi, pi, ious) in &idx.frames {
        for (a, &g) in gi.iter().enumerate() {
            for (b, &p) in pi.iter().enumerate() {
                if ious[a][b] >= iou_threshold && ious[a][b] > 0.0 {
                    overlap[g][p] += 1;
                }
            }
        }
    }
    let mut idtp = 0u64;
    if ng > 0 && np > 0 {
        let mut cost = CostMatrix::new(ng, np);
        for g in 0..ng {
            for p in 0..np {
                cost.set(g, p, -(overlap[g][p] as f64));
            }
        }
        idtp = hungarian(&cost).pairs().map(|(g, p)| overlap[g][p]).sum();
    }
    let idfn = gts.len() as u64 - idtp;
    let idfp = preds.len() as u64 - idtp;
    let denom = 2 * idtp + idfp + idfn;
    Idf1Result {
        idf1: if denom == 0 {
            1.0
        } else {
            2.0 * idtp as f64 / denom as f64
        },
        idtp,
        idfp,
        idfn,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mae: f64,
    pub rmse: f64,
    /// Fraction, not percent; `None` when every true value is 0.
    pub mape: Option<f64>,
}

/// MAE, RMSE and MAPE over `(predicted, true)` pairs.
pub fn count_errors(pairs: &[(f64, f64)]) -> Result<ErrorStats> {
    if pairs.is_empty() {
        return Err(domain("no count pairs"));
    }
    let n = pairs.len() as f64;
    let mae = pairs.iter().map(|(p, t)| (p - t).abs()).sum::<f64>() / n;
    let rmse = (pairs.iter().map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n).sqrt();
    let nonzero: Vec<_> = pairs.iter().filter(|(_, t)| *t != 0.0).collect();
    let mape = (!nonzero.is_empty()).then(|| {
        nonzero
            .iter()
            .map(|(p, t)| ((p - t) / t).abs())
            .sum::<f64>()
            / nonzero.len() as f64
    });
    Ok(ErrorStats { mae, rmse, mape })
}

/// MAE and RMSE in meters over matched `(predicted, true)` length pairs.
pub fn length_errors(pairs: &[(f64, f64)]) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Err(domain("no matched fish for length errors"));
    }
    let s = count_errors(pairs)?;
    Ok((s.mae, s.rmse))
}

/// For each ground-truth id, the predicted track id matched to it in the
/// most frames (per-frame max-IoU matching at `iou_threshold`); ties go to
/// the smaller track id.
pub fn dominant_tracks(
    gts: &[MotRecord],
    preds: &[MotRecord],
    iou_threshold: f64,
) -> BTreeMap<i64, i64> {
    let g = by_frame(gts);
    let p = by_frame(preds);
    let mut counts: BTreeMap<i64, BTreeMap<i64, u64>> = BTreeMap::new();
    for (f, gr) in &g {
        let Some(pr) = p.get(f) else { continue };
        let gb: Vec<GridBox> = gr.iter().map(|r| r.bbox()).collect();
        let pb: Vec<GridBox> = pr.iter().map(|r| r.bbox()).collect();
        for (i, j, _) in match_frame(&gb, &pb, iou_threshold).pairs {
            *counts
                .entry(gr[i].id)
                .or_default()
                .entry(pr[j].id)
                .or_default() += 1;
        }
    }
    counts
        .into_iter()
        .filter_map(|(gid, m)| {
            let best = m
                .iter()
                .fold(None, |best: Option<(i64, u64)>, (&pid, &c)| match best {
                    Some((_, bc)) if bc >= c => best,
                    _ => Some((pid, c)),
                })?;
            Some((gid, best.0))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub map50: f64,
    pub map50_75: f64,
    pub detection_f1: f64,
    pub mota: Option<f64>,
    pub hota: f64,
    pub det_a: f64,
    pub ass_a: f64,
    pub idf1: f64,
    pub id_switches: u64,
    pub count_mae: f64,
    pub count_rmse: f64,
    pub count_mape: Option<f64>,
    pub length_mae_m: Option<f64>,
    pub length_rmse_m: Option<f64>,
    pub tallies: Vec<Tally>,
    pub mota_detail: Option<MotaResult>,
    pub idf1_detail: Idf1Result,
}

/// Everything the evaluator needs; counts are `(predicted, true)` per
/// direction, lengths `(predicted, true)` per matched fish.
pub struct EvaluationInput<'a> {
    pub gt: &'a [MotRecord],
    pub detections: &'a [MotRecord],
    pub tracks: &'a [MotRecord],
    pub counts: &'a [(f64, f64)],
    pub lengths: &'a [(f64, f64)],
    pub config: MetricsConfig,
}

pub fn evaluate(input: &EvaluationInput) -> Result<MetricsReport> {
    input.config.validate()?;
    let iou_threshold = input.config.iou_threshold;
    let thresholds = map50_75_thresholds(input.config.map_step)?;
    let map50 = average_precision(input.detections, input.gt, 0.5);
    let map50_75 = map_range(input.detections, input.gt, &thresholds)?;
    let tallies: Vec<Tally> = thresholds
        .iter()
        .map(|&t| detection_tally(input.detections, input.gt, t))
        .collect();
    let detection_f1 = f1_from_tally(&detection_tally(input.detections, input.gt, iou_threshold));
    let mota_detail = mota(input.gt, input.tracks, iou_threshold).ok();
    let h = hota(input.gt, input.tracks, &default_alpha_grid())?;
    let id = idf1(input.gt, input.tracks, iou_threshold);
    let counts = count_errors(input.counts)?;
    let lengths = length_errors(input.lengths).ok();
    Ok(MetricsReport {
        map50,
        map50_75,
        detection_f1,
        mota: mota_detail.map(|m| m.mota),
        hota: h.hota,
        det_a: h.det_a,
        ass_a: h.ass_a,
        idf1: id.idf1,
        id_switches: mota_detail.map(|m| m.id_switches).unwrap_or(0),
        count_mae: counts.mae,
        count_rmse: counts.rmse,
        count_mape: counts.mape,
        length_mae_m: lengths.map(|l| l.0),
        length_rmse_m: lengths.map(|l| l.1),
        tallies,
        mota_detail,
        idf1_detail: id,
    })
}
