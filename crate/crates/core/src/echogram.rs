//! Range × time echograms and echogram-based activity gating.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::frame::SonarFrame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Reduction {
    #[default]
    Max,
    Mean,
}

/// One column per frame, one row per range bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Echogram {
    bin_count: usize,
    reduction: Reduction,
    /// Frame-major: `columns[frame * bin_count + bin]`.
    columns: Vec<f32>,
}

impl Echogram {
    pub fn new(bin_count: u32, reduction: Reduction) -> Self {
        Self {
            bin_count: bin_count as usize,
            reduction,
            columns: Vec::new(),
        }
    }

    pub fn push(&mut self, frame: &SonarFrame) -> Result<()> {
        if frame.bin_count() as usize != self.bin_count {
            return Err(domain("frame bin count does not match echogram"));
        }
        self.columns.extend(reduce_column(frame, self.reduction));
        Ok(())
    }

    pub fn bin_count(&self) -> usize {
        self.bin_count
    }

    pub fn frame_count(&self) -> usize {
        self.columns.len() / self.bin_count.max(1)
    }

    pub fn reduction(&self) -> Reduction {
        self.reduction
    }

    pub fn value(&self, bin: usize, frame: usize) -> f32 {
        self.columns[frame * self.bin_count + bin]
    }

    pub fn column(&self, frame: usize) -> &[f32] {
        &self.columns[frame * self.bin_count..(frame + 1) * self.bin_count]
    }

    /// PGM image with time on the horizontal axis and range bins down the page.
    pub fn to_pgm(&self) -> Vec<u8> {
        let (bins, frames) = (self.bin_count, self.frame_count());
        let values = (0..bins).flat_map(move |b| (0..frames).map(move |t| self.value(b, t)));
        crate::pgm::encode_pgm(frames, bins, values).expect("sized by echogram")
    }

    /// `bin,frame,value` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin,frame,value\n");
        for t in 0..self.frame_count() {
            for (b, v) in self.column(t).iter().enumerate() {
                s.push_str(&format!("{b},{t},{v}\n"));
            }
        }
        s
    }
}

fn reduce_column(frame: &SonarFrame, reduction: Reduction) -> Vec<f32> {
    let bins = frame.bin_count() as usize;
    let beams = frame.beam_count();
    let data = frame.data();
    let mut col = match reduction {
        Reduction::Max => vec![f32::NEG_INFINITY; bins],
        Reduction::Mean => vec![0.0f32; bins],
    };
    let mut sums = vec![0.0f64; bins];
    for beam in 0..beams as usize {
        let row = &data[beam * bins..(beam + 1) * bins];
        match reduction {
            Reduction::Max => {
                for (c, &v) in col.iter_mut().zip(row) {
                    *c = c.max(v);
                }
            }
            Reduction::Mean => {
                for (s, &v) in sums.iter_mut().zip(row) {
                    *s += v as f64;
                }
            }
        }
    }
    if reduction == Reduction::Mean {
        for (c, s) in col.iter_mut().zip(&sums) {
            *c = (s / beams as f64) as f32;
        }
    }
    col
}

pub fn build_echogram(frames: &[SonarFrame], reduction: Reduction) -> Result<Echogram> {
    let first = frames
        .first()
        .ok_or_else(|| domain("echogram needs at least one frame"))?;
    if frames.iter().any(|f| !f.same_shape(first)) {
        return Err(domain("frames differ in shape"));
    }
    use rayon::prelude::*;
    let columns: Vec<f32> = frames
        .par_iter()
        .flat_map_iter(|f| reduce_column(f, reduction))
        .collect();
    Ok(Echogram {
        bin_count: first.bin_count() as usize,
        reduction,
        columns,
    })
}

/// Linear-interpolated quantile of an ascending-sorted slice.
pub(crate) fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Per-bin baseline and population standard deviation over time.
pub fn bin_statistics(echogram: &Echogram, background_quantile: f64) -> Vec<(f64, f64)> {
    let n = echogram.frame_count();
    (0..echogram.bin_count())
        .map(|b| {
            let mut v: Vec<f64> = (0..n).map(|t| echogram.value(b, t) as f64).collect();
            let mean = v.iter().sum::<f64>() / n as f64;
            let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
            v.sort_by(f64::total_cmp);
            (sorted_quantile(&v, background_quantile), var.sqrt())
        })
        .collect()
}

/// Frames in which some bin exceeds its temporal baseline (the given
/// quantile) by more than `k_sigma` temporal standard deviations. Sorted
/// ascending.
pub fn activity_gate(
    echogram: &Echogram,
    background_quantile: f64,
    k_sigma: f64,
) -> Result<Vec<usize>> {
    if echogram.frame_count() == 0 {
        return Err(domain("echogram is empty"));
    }
    if !(background_quantile > 0.0 && background_quantile < 1.0) {
        return Err(domain("background_quantile must be in (0, 1)"));
    }
    if !(k_sigma >= 0.0 && k_sigma.is_finite()) {
        return Err(domain("k_sigma must be finite and non-negative"));
    }
    let thresholds: Vec<f64> = bin_statistics(echogram, background_quantile)
        .into_iter()
        .map(|(base, std)| base + k_sigma * std)
        .collect();
    Ok((0..echogram.frame_count())
        .filter(|&t| {
            echogram
                .column(t)
                .iter()
                .zip(&thresholds)
                .any(|(&v, &th)| v as f64 > th)
        })
        .collect())
}
