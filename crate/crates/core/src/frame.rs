//! Polar intensity grids and grid-space boxes.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// One sonar ping: intensities over `beam_count × bin_count` cells, stored
/// beam-major (`index = beam * bin_count + bin`).
#[derive(Debug, Clone, PartialEq)]
pub struct SonarFrame {
    beam_count: u32,
    bin_count: u32,
    data: Vec<f32>,
}

impl SonarFrame {
    pub fn filled(beam_count: u32, bin_count: u32, value: f32) -> Self {
        Self {
            beam_count,
            bin_count,
            data: vec![value; beam_count as usize * bin_count as usize],
        }
    }

    pub fn from_data(beam_count: u32, bin_count: u32, data: Vec<f32>) -> Result<Self> {
        if data.len() != beam_count as usize * bin_count as usize {
            return Err(domain(format!(
                "frame data has {} values, expected {}x{}",
                data.len(),
                beam_count,
                bin_count
            )));
        }
        Ok(Self {
            beam_count,
            bin_count,
            data,
        })
    }

    pub fn beam_count(&self) -> u32 {
        self.beam_count
    }

    pub fn bin_count(&self) -> u32 {
        self.bin_count
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, beam: u32, bin: u32) -> usize {
        beam as usize * self.bin_count as usize + bin as usize
    }

    #[inline]
    pub fn get(&self, beam: u32, bin: u32) -> f32 {
        self.data[self.index(beam, bin)]
    }

    #[inline]
    pub fn set(&mut self, beam: u32, bin: u32, value: f32) {
        let i = self.index(beam, bin);
        self.data[i] = value;
    }

    pub fn same_shape(&self, other: &SonarFrame) -> bool {
        self.beam_count == other.beam_count && self.bin_count == other.bin_count
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }
}

/// Axis-aligned box in polar-grid coordinates: `x` runs along beams, `y`
/// along range bins. Cell `(i, j)` occupies `[i, i+1) × [j, j+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl GridBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    /// Tight box around the inclusive cell range.
    pub fn from_cell_range(min_beam: u32, min_bin: u32, max_beam: u32, max_bin: u32) -> Self {
        Self {
            x: min_beam as f64,
            y: min_bin as f64,
            w: (max_beam - min_beam + 1) as f64,
            h: (max_bin - min_bin + 1) as f64,
        }
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    /// Center expressed as fractional cell indices (cell centers sit at
    /// integer indices).
    pub fn center_index(&self) -> (f64, f64) {
        let (cx, cy) = self.center();
        (cx - 0.5, cy - 0.5)
    }

    pub fn is_valid(&self) -> bool {
        self.w > 0.0 && self.h > 0.0 && self.x.is_finite() && self.y.is_finite()
    }

    pub fn within(&self, beam_count: u32, bin_count: u32) -> bool {
        self.x >= 0.0
            && self.y >= 0.0
            && self.x + self.w <= beam_count as f64
            && self.y + self.h <= bin_count as f64
    }

    pub fn contains_cell(&self, beam: u32, bin: u32) -> bool {
        let (b, r) = (beam as f64, bin as f64);
        b >= self.x && b + 1.0 <= self.x + self.w && r >= self.y && r + 1.0 <= self.y + self.h
    }

    pub fn intersection(&self, other: &GridBox) -> f64 {
        let ix = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let iy = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        if ix <= 0.0 || iy <= 0.0 {
            0.0
        } else {
            ix * iy
        }
    }
}

/// Intersection over union; 0 when the boxes are disjoint or degenerate.
pub fn iou(a: &GridBox, b: &GridBox) -> f64 {
    let inter = a.intersection(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}
