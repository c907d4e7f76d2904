//! Run-length-encoded binary masks over a box of grid cells.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::frame::GridBox;

/// Binary mask over the integer cell box `[x0, x0+width) × [y0, y0+height)`.
///
/// `runs` alternate unset/set counts over the box in row-major order (rows are
/// range bins, columns are beams), always starting with an unset run, which
/// may be zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    pub x0: u32,
    pub y0: u32,
    pub width: u32,
    pub height: u32,
    pub runs: Vec<u32>,
}

impl Mask {
    /// Tight mask around a nonempty cell set of `(beam, bin)` pairs.
    pub fn from_cells(cells: &[(u32, u32)]) -> Result<Self> {
        if cells.is_empty() {
            return Err(domain("mask needs at least one cell"));
        }
        let x0 = cells.iter().map(|c| c.0).min().unwrap();
        let x1 = cells.iter().map(|c| c.0).max().unwrap();
        let y0 = cells.iter().map(|c| c.1).min().unwrap();
        let y1 = cells.iter().map(|c| c.1).max().unwrap();
        let (width, height) = (x1 - x0 + 1, y1 - y0 + 1);
        let mut bits = vec![false; width as usize * height as usize];
        for &(b, r) in cells {
            bits[(r - y0) as usize * width as usize + (b - x0) as usize] = true;
        }
        Ok(Self {
            x0,
            y0,
            width,
            height,
            runs: encode_runs(&bits),
        })
    }

    /// Every cell of a box (rounded outward to whole cells), clipped to the grid.
    pub fn filled_box(bbox: &GridBox, beam_count: u32, bin_count: u32) -> Result<Self> {
        let x0 = bbox.x.floor().max(0.0) as u32;
        let y0 = bbox.y.floor().max(0.0) as u32;
        let x1 = ((bbox.x + bbox.w).ceil() as u32).min(beam_count);
        let y1 = ((bbox.y + bbox.h).ceil() as u32).min(bin_count);
        if x1 <= x0 || y1 <= y0 {
            return Err(domain("box covers no grid cells"));
        }
        let n = (x1 - x0) * (y1 - y0);
        Ok(Self {
            x0,
            y0,
            width: x1 - x0,
            height: y1 - y0,
            runs: vec![0, n],
        })
    }

    /// Checks that the runs describe exactly `width * height` cells.
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(domain("mask box is empty"));
        }
        let total: u64 = self.runs.iter().map(|&r| r as u64).sum();
        let expected = self.width as u64 * self.height as u64;
        if total != expected {
            return Err(domain(format!(
                "mask runs cover {total} cells, box has {expected}"
            )));
        }
        if self.x0.checked_add(self.width).is_none() || self.y0.checked_add(self.height).is_none() {
            return Err(domain("mask box overflows grid coordinates"));
        }
        Ok(())
    }

    /// Set cells as `(beam, bin)` pairs in row-major order.
    pub fn cells(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        let mut pos = 0u64;
        let w = self.width as u64;
        for (i, &run) in self.runs.iter().enumerate() {
            if i % 2 == 1 {
                for k in pos..pos + run as u64 {
                    out.push((self.x0 + (k % w) as u32, self.y0 + (k / w) as u32));
                }
            }
            pos += run as u64;
        }
        out
    }

    pub fn area(&self) -> usize {
        self.runs
            .iter()
            .skip(1)
            .step_by(2)
            .map(|&r| r as usize)
            .sum()
    }

    pub fn bbox(&self) -> GridBox {
        GridBox::new(
            self.x0 as f64,
            self.y0 as f64,
            self.width as f64,
            self.height as f64,
        )
    }

    /// True when any set cell lies on the outer edge of the grid.
    pub fn touches_border(&self, beam_count: u32, bin_count: u32) -> bool {
        self.cells()
            .iter()
            .any(|&(b, r)| b == 0 || r == 0 || b + 1 >= beam_count || r + 1 >= bin_count)
    }
}

fn encode_runs(bits: &[bool]) -> Vec<u32> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut count = 0u32;
    for &b in bits {
        if b == current {
            count += 1;
        } else {
            runs.push(count);
            current = b;
            count = 1;
        }
    }
    runs.push(count);
    runs
}
