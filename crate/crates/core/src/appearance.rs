//! Hand-crafted appearance descriptor: a 32-bin intensity histogram over the
//! mask cells followed by 8 shape moments, as one unit-norm 40-vector.
//!
//! The histogram and the moment block are each normalized to unit length and
//! then scaled by `1/√2`, so neither block dominates the cosine distance.

use crate::error::{domain, Result};
use crate::frame::SonarFrame;
use crate::mask::Mask;

pub const HISTOGRAM_BINS: usize = 32;
pub const FEATURE_LEN: usize = HISTOGRAM_BINS + 8;

pub fn appearance_feature(frame: &SonarFrame, mask: &Mask) -> Result<Vec<f64>> {
    let cells: Vec<(u32, u32)> = mask
        .cells()
        .into_iter()
        .filter(|&(b, r)| b < frame.beam_count() && r < frame.bin_count())
        .collect();
    if cells.is_empty() {
        return Err(domain("mask has no cells inside the frame"));
    }
    let mut hist = vec![0.0f64; HISTOGRAM_BINS];
    for &(b, r) in &cells {
        let v = frame.get(b, r).clamp(0.0, 1.0) as f64;
        let bin = ((v * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        hist[bin] += 1.0;
    }
    let mut feature = unit(hist);
    feature.extend(unit(shape_moments(&cells).to_vec()));
    let s = std::f64::consts::FRAC_1_SQRT_2;
    feature.iter_mut().for_each(|v| *v *= s);
    Ok(feature)
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

/// Area, boundary fraction, eccentricity, orientation (sin 2θ, cos 2θ),
/// extent, row-convexity and aspect; each roughly within [−1, 1].
fn shape_moments(cells: &[(u32, u32)]) -> [f64; 8] {
    use std::collections::{BTreeMap, HashSet};
    let set: HashSet<(u32, u32)> = cells.iter().copied().collect();
    let n = cells.len() as f64;
    let (mx, my) = cells
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x as f64, b + y as f64));
    let (mx, my) = (mx / n, my / n);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y) in cells {
        let (dx, dy) = (x as f64 - mx, y as f64 - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let (sxx, syy, sxy) = (sxx / n, syy / n, sxy / n);
    let half_tr = (sxx + syy) / 2.0;
    let disc = (((sxx - syy) / 2.0).powi(2) + sxy * sxy).sqrt();
    let (l1, l2) = (half_tr + disc, half_tr - disc);
    let ecc = if l1 > 0.0 {
        (1.0 - (l2 / l1).max(0.0)).sqrt()
    } else {
        0.0
    };
    let two_theta = (2.0 * sxy).atan2(sxx - syy);
    let boundary = cells
        .iter()
        .filter(|&&(x, y)| {
            [
                (x.wrapping_sub(1), y),
                (x + 1, y),
                (x, y.wrapping_sub(1)),
                (x, y + 1),
            ]
            .iter()
            .any(|c| !set.contains(c))
        })
        .count() as f64;
    let x0 = cells.iter().map(|c| c.0).min().unwrap();
    let x1 = cells.iter().map(|c| c.0).max().unwrap();
    let y0 = cells.iter().map(|c| c.1).min().unwrap();
    let y1 = cells.iter().map(|c| c.1).max().unwrap();
    let (w, h) = ((x1 - x0 + 1) as f64, (y1 - y0 + 1) as f64);
    let mut rows: BTreeMap<u32, (u32, u32)> = BTreeMap::new();
    for &(x, y) in cells {
        let e = rows.entry(y).or_insert((x, x));
        e.0 = e.0.min(x);
        e.1 = e.1.max(x);
    }
    let row_hull: f64 = rows.values().map(|&(a, b)| (b - a + 1) as f64).sum();
    [
        n / (n + 100.0),
        boundary / n,
        ecc,
        two_theta.sin(),
        two_theta.cos(),
        n / (w * h),
        n / row_hull,
        w / (w + h),
    ]
}

/// `1 − a·b` for unit vectors.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    1.0 - a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}
