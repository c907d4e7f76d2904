//! Polar sonar geometry and the polar → Cartesian mapping.
//!
//! Beams are evenly spaced across the field of view and centered on the
//! boresight (`θ = 0`). World coordinates put the transducer at the origin
//! with `y` along the boresight and `x` to starboard, so a cell at range `r`
//! and beam angle `θ` sits at `(r·sin θ, r·cos θ)`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::frame::SonarFrame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SonarGeometry {
    pub beam_count: u32,
    /// Total angular field of view in radians.
    pub beam_fov_rad: f64,
    pub range_min_m: f64,
    pub range_max_m: f64,
    pub range_bin_count: u32,
    pub frame_rate_hz: f64,
}

impl Default for SonarGeometry {
    /// ARIS-scale defaults: 128 beams over 0.5 rad, 1–21 m in 512 bins, 10 Hz.
    fn default() -> Self {
        Self {
            beam_count: 128,
            beam_fov_rad: 0.5,
            range_min_m: 1.0,
            range_max_m: 21.0,
            range_bin_count: 512,
            frame_rate_hz: 10.0,
        }
    }
}

impl SonarGeometry {
    pub fn new(
        beam_count: u32,
        beam_fov_rad: f64,
        range_min_m: f64,
        range_max_m: f64,
        range_bin_count: u32,
        frame_rate_hz: f64,
    ) -> Result<Self> {
        let g = Self {
            beam_count,
            beam_fov_rad,
            range_min_m,
            range_max_m,
            range_bin_count,
            frame_rate_hz,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam_count < 2 {
            return Err(domain("beam_count must be at least 2"));
        }
        if self.range_bin_count < 2 {
            return Err(domain("range_bin_count must be at least 2"));
        }
        if !(self.beam_fov_rad.is_finite()
            && self.beam_fov_rad > 0.0
            && self.beam_fov_rad < std::f64::consts::PI)
        {
            return Err(domain("beam_fov_rad must be in (0, π)"));
        }
        if !(self.range_min_m.is_finite() && self.range_max_m.is_finite()) {
            return Err(domain("range limits must be finite"));
        }
        if !(self.range_min_m >= 0.0 && self.range_min_m < self.range_max_m) {
            return Err(domain("require 0 <= range_min_m < range_max_m"));
        }
        if !(self.frame_rate_hz.is_finite() && self.frame_rate_hz > 0.0) {
            return Err(domain("frame_rate_hz must be positive"));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.beam_count as usize * self.range_bin_count as usize
    }

    pub fn meters_per_bin(&self) -> f64 {
        (self.range_max_m - self.range_min_m) / (self.range_bin_count - 1) as f64
    }

    pub fn radians_per_beam(&self) -> f64 {
        self.beam_fov_rad / (self.beam_count - 1) as f64
    }

    /// Beam angle at a (possibly fractional) beam index. Unchecked.
    pub fn beam_angle(&self, beam_idx: f64) -> f64 {
        -self.beam_fov_rad / 2.0 + beam_idx * self.radians_per_beam()
    }

    /// Range at a (possibly fractional) bin index. Unchecked.
    pub fn range_at(&self, bin_idx: f64) -> f64 {
        self.range_min_m + bin_idx * self.meters_per_bin()
    }

    pub fn polar_to_cartesian(&self, beam_idx: f64, bin_idx: f64) -> Result<(f64, f64)> {
        let max_beam = (self.beam_count - 1) as f64;
        let max_bin = (self.range_bin_count - 1) as f64;
        if !(0.0..=max_beam).contains(&beam_idx) || !(0.0..=max_bin).contains(&bin_idx) {
            return Err(domain(format!(
                "polar index ({beam_idx}, {bin_idx}) outside [0, {max_beam}] x [0, {max_bin}]"
            )));
        }
        Ok(self.polar_to_cartesian_unchecked(beam_idx, bin_idx))
    }

    pub fn polar_to_cartesian_unchecked(&self, beam_idx: f64, bin_idx: f64) -> (f64, f64) {
        let r = self.range_at(bin_idx);
        let theta = self.beam_angle(beam_idx);
        (r * theta.sin(), r * theta.cos())
    }

    /// Fractional (beam, bin) indices of a world point; may be out of range.
    pub fn cartesian_to_polar(&self, x_m: f64, y_m: f64) -> (f64, f64) {
        let r = x_m.hypot(y_m);
        let theta = x_m.atan2(y_m);
        let beam = (theta + self.beam_fov_rad / 2.0) / self.radians_per_beam();
        let bin = (r - self.range_min_m) / self.meters_per_bin();
        (beam, bin)
    }

    /// Cell whose footprint contains the world point, if any.
    pub fn nearest_cell(&self, x_m: f64, y_m: f64) -> Option<(u32, u32)> {
        let (beam, bin) = self.cartesian_to_polar(x_m, y_m);
        let b = round_half_up(beam)?;
        let r = round_half_up(bin)?;
        (b < self.beam_count && r < self.range_bin_count).then_some((b, r))
    }
}

fn round_half_up(v: f64) -> Option<u32> {
    let r = (v + 0.5).floor();
    (r >= 0.0 && r < u32::MAX as f64).then_some(r as u32)
}

/// Intensities resampled onto a square Cartesian pixel lattice.
///
/// Pixel `(col, row)` is centered at `origin_m + (col, row) * meters_per_pixel`;
/// rows grow with world `y`. The lattice is anchored so that world `(0, 0)`
/// falls on a pixel center.
#[derive(Debug, Clone, PartialEq)]
pub struct CartesianRaster {
    pub width_px: usize,
    pub height_px: usize,
    pub meters_per_pixel: f64,
    pub origin_m: (f64, f64),
    pub values: Vec<f32>,
}

impl CartesianRaster {
    pub fn get(&self, col: usize, row: usize) -> f32 {
        self.values[row * self.width_px + col]
    }

    pub fn pixel_center(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.origin_m.0 + col as f64 * self.meters_per_pixel,
            self.origin_m.1 + row as f64 * self.meters_per_pixel,
        )
    }

    /// Pixel containing a world point, if inside the raster.
    pub fn pixel_at(&self, x_m: f64, y_m: f64) -> Option<(usize, usize)> {
        let c = ((x_m - self.origin_m.0) / self.meters_per_pixel + 0.5).floor();
        let r = ((y_m - self.origin_m.1) / self.meters_per_pixel + 0.5).floor();
        if c < 0.0 || r < 0.0 || c >= self.width_px as f64 || r >= self.height_px as f64 {
            None
        } else {
            Some((c as usize, r as usize))
        }
    }

    pub fn nonzero_count(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.0).count()
    }
}

#[derive(Debug, Clone, Copy)]
struct WorldBounds {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl WorldBounds {
    fn around(points: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut b = WorldBounds {
            x_min: f64::INFINITY,
            x_max: f64::NEG_INFINITY,
            y_min: f64::INFINITY,
            y_max: f64::NEG_INFINITY,
        };
        for (x, y) in points {
            b.x_min = b.x_min.min(x);
            b.x_max = b.x_max.max(x);
            b.y_min = b.y_min.min(y);
            b.y_max = b.y_max.max(y);
        }
        b
    }
}

/// Outer outline of the cell-index rectangle `[beam_lo, beam_hi] × [bin_lo, bin_hi]`
/// (indices of footprint edges, i.e. cell centers ± 0.5).
fn footprint_bounds(
    geom: &SonarGeometry,
    beam_lo: f64,
    beam_hi: f64,
    bin_lo: f64,
    bin_hi: f64,
) -> WorldBounds {
    let r_lo = geom.range_at(bin_lo).max(0.0);
    let r_hi = geom.range_at(bin_hi);
    let t_lo = geom.beam_angle(beam_lo);
    let t_hi = geom.beam_angle(beam_hi);
    let mut pts = vec![];
    for r in [r_lo, r_hi] {
        for t in [t_lo, t_hi] {
            pts.push((r * t.sin(), r * t.cos()));
        }
    }
    if t_lo <= 0.0 && t_hi >= 0.0 {
        pts.push((0.0, r_hi));
        pts.push((0.0, r_lo));
    }
    WorldBounds::around(pts)
}

fn rasterize_region<F>(
    geom: &SonarGeometry,
    meters_per_pixel: f64,
    bounds: WorldBounds,
    lookup: F,
    splat: impl Iterator<Item = (u32, u32, f32)>,
) -> CartesianRaster
where
    F: Fn(u32, u32) -> f32,
{
    let col_lo = (bounds.x_min / meters_per_pixel).floor() as i64 - 1;
    let col_hi = (bounds.x_max / meters_per_pixel).ceil() as i64 + 1;
    let row_lo = (bounds.y_min / meters_per_pixel).floor() as i64 - 1;
    let row_hi = (bounds.y_max / meters_per_pixel).ceil() as i64 + 1;
    let width = (col_hi - col_lo + 1) as usize;
    let height = (row_hi - row_lo + 1) as usize;
    let mut raster = CartesianRaster {
        width_px: width,
        height_px: height,
        meters_per_pixel,
        origin_m: (
            col_lo as f64 * meters_per_pixel,
            row_lo as f64 * meters_per_pixel,
        ),
        values: vec![0.0; width * height],
    };
    // Inverse fill: each pixel center samples the cell whose footprint holds it.
    for row in 0..height {
        for col in 0..width {
            let (x, y) = raster.pixel_center(col, row);
            if let Some((b, r)) = geom.nearest_cell(x, y) {
                let v = lookup(b, r);
                if v > 0.0 {
                    raster.values[row * width + col] = v;
                }
            }
        }
    }
    // Forward splat keeps targets narrower than a pixel.
    for (b, r, v) in splat {
        if v <= 0.0 {
            continue;
        }
        let (x, y) = geom.polar_to_cartesian_unchecked(b as f64, r as f64);
        if let Some((c, rr)) = raster.pixel_at(x, y) {
            let slot = &mut raster.values[rr * width + c];
            *slot = slot.max(v);
        }
    }
    raster
}

/// Resample a whole frame onto a Cartesian raster covering the full fan.
/// Combines the inverse (pixel → cell) and forward (cell → pixel) mappings
/// with `max`; pixels outside the fan stay 0.
pub fn rasterize(
    frame: &SonarFrame,
    geom: &SonarGeometry,
    meters_per_pixel: f64,
) -> Result<CartesianRaster> {
    check_resolution(meters_per_pixel)?;
    if frame.beam_count() != geom.beam_count || frame.bin_count() != geom.range_bin_count {
        return Err(domain("frame dimensions do not match geometry"));
    }
    let bounds = footprint_bounds(
        geom,
        -0.5,
        geom.beam_count as f64 - 0.5,
        -0.5,
        geom.range_bin_count as f64 - 0.5,
    );
    let splat = (0..geom.beam_count)
        .flat_map(|b| (0..geom.range_bin_count).map(move |r| (b, r, frame.get(b, r))));
    Ok(rasterize_region(
        geom,
        meters_per_pixel,
        bounds,
        |b, r| frame.get(b, r),
        splat,
    ))
}

/// Resample a sparse set of lit cells (e.g. a detection mask) onto a raster
/// cropped to their footprint. Cell values are 1.0.
pub fn rasterize_cells(
    cells: &[(u32, u32)],
    geom: &SonarGeometry,
    meters_per_pixel: f64,
) -> Result<CartesianRaster> {
    check_resolution(meters_per_pixel)?;
    if cells.is_empty() {
        return Err(domain("no cells to rasterize"));
    }
    let (mut b_lo, mut b_hi, mut r_lo, mut r_hi) = (u32::MAX, 0, u32::MAX, 0);
    for &(b, r) in cells {
        if b >= geom.beam_count || r >= geom.range_bin_count {
            return Err(domain(format!("cell ({b}, {r}) outside geometry")));
        }
        b_lo = b_lo.min(b);
        b_hi = b_hi.max(b);
        r_lo = r_lo.min(r);
        r_hi = r_hi.max(r);
    }
    let w = (b_hi - b_lo + 1) as usize;
    let h = (r_hi - r_lo + 1) as usize;
    let mut lit = vec![false; w * h];
    for &(b, r) in cells {
        lit[(b - b_lo) as usize * h + (r - r_lo) as usize] = true;
    }
    let lookup = |b: u32, r: u32| {
        if b < b_lo || b > b_hi || r < r_lo || r > r_hi {
            0.0
        } else if lit[(b - b_lo) as usize * h + (r - r_lo) as usize] {
            1.0
        } else {
            0.0
        }
    };
    let bounds = footprint_bounds(
        geom,
        b_lo as f64 - 0.5,
        b_hi as f64 + 0.5,
        r_lo as f64 - 0.5,
        r_hi as f64 + 0.5,
    );
    Ok(rasterize_region(
        geom,
        meters_per_pixel,
        bounds,
        lookup,
        cells.iter().map(|&(b, r)| (b, r, 1.0)),
    ))
}

fn check_resolution(meters_per_pixel: f64) -> Result<()> {
    if !(meters_per_pixel.is_finite() && meters_per_pixel > 0.0) {
        return Err(domain("meters_per_pixel must be positive"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fov05() -> SonarGeometry {
        SonarGeometry::default()
    }

    #[test]
    fn center_beam_is_boresight() {
        let g = SonarGeometry::new(128, 0.5, 0.0, 20.0, 201, 10.0).unwrap();
        // bin 100 of 0..20 m in 201 bins is exactly 10 m
        let (x, y) = g.polar_to_cartesian(63.5, 100.0).unwrap();
        assert!(x.abs() < 1e-12);
        assert!((y - 10.0).abs() < 1e-12);
    }

    #[test]
    fn edge_beam_angle() {
        let g = SonarGeometry::new(128, 0.5, 0.0, 20.0, 201, 10.0).unwrap();
        let (x, y) = g.polar_to_cartesian(0.0, 100.0).unwrap();
        assert!((x - 10.0 * (-0.25f64).sin()).abs() < 1e-12);
        assert!((y - 10.0 * (-0.25f64).cos()).abs() < 1e-12);
    }

    #[test]
    fn bin_zero_is_range_min() {
        let g = fov05();
        for beam in [0.0, 17.0, 63.5, 127.0] {
            let (x, y) = g.polar_to_cartesian(beam, 0.0).unwrap();
            assert!((x.hypot(y) - g.range_min_m).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_range_indices_rejected() {
        let g = fov05();
        assert!(g.polar_to_cartesian(-0.1, 0.0).is_err());
        assert!(g.polar_to_cartesian(0.0, 511.5).is_err());
        assert!(g.polar_to_cartesian(127.0, 511.0).is_ok());
    }

    #[test]
    fn meters_per_bin_cases() {
        let g = SonarGeometry::new(128, 0.5, 1.0, 21.0, 201, 10.0).unwrap();
        assert!((g.meters_per_bin() - 0.1).abs() < 1e-15);
        let g = SonarGeometry::new(2, 0.5, 0.0, 10.0, 2, 10.0).unwrap();
        assert_eq!(g.meters_per_bin(), 10.0);
    }

    #[test]
    fn invalid_geometries_rejected() {
        assert!(SonarGeometry::new(1, 0.5, 1.0, 21.0, 512, 10.0).is_err());
        assert!(SonarGeometry::new(128, 0.5, 1.0, 21.0, 1, 10.0).is_err());
        assert!(SonarGeometry::new(128, 0.5, 21.0, 21.0, 512, 10.0).is_err());
        assert!(SonarGeometry::new(128, 0.5, -1.0, 21.0, 512, 10.0).is_err());
        assert!(SonarGeometry::new(128, 0.5, 1.0, 21.0, 512, 0.0).is_err());
    }

    #[test]
    fn rasterize_zero_frame() {
        let g = fov05();
        let f = SonarFrame::filled(g.beam_count, g.range_bin_count, 0.0);
        let r = rasterize(&f, &g, 0.1).unwrap();
        assert_eq!(r.nonzero_count(), 0);
        assert!(rasterize(&f, &g, 0.0).is_err());
        assert!(rasterize(&f, &g, -1.0).is_err());
    }

    #[test]
    fn rasterize_single_cell() {
        // range 0..20 m in 513 bins puts bin 256 at exactly 10 m; an odd beam
        // count puts beam 64 on the boresight.
        let g = SonarGeometry::new(129, 0.5, 0.0, 20.0, 513, 10.0).unwrap();
        let mut f = SonarFrame::filled(g.beam_count, g.range_bin_count, 0.0);
        f.set(64, 256, 1.0);
        let r = rasterize(&f, &g, 0.05).unwrap();
        assert_eq!(r.nonzero_count(), 1);
        let idx = r.values.iter().position(|&v| v > 0.0).unwrap();
        let (x, y) = r.pixel_center(idx % r.width_px, idx / r.width_px);
        assert!(x.abs() <= 0.025 && (y - 10.0).abs() <= 0.025, "({x}, {y})");
    }

    /// Annular sector lit between two bins over all beams; compare the lit
    /// pixel area against the closed-form sector area.
    #[test]
    fn rasterize_preserves_sector_area() {
        let g = fov05();
        let (j0, j1) = (150u32, 300u32);
        let mut f = SonarFrame::filled(g.beam_count, g.range_bin_count, 0.0);
        for b in 0..g.beam_count {
            for j in j0..=j1 {
                f.set(b, j, 1.0);
            }
        }
        let dr = g.meters_per_bin();
        let r_lo = g.range_at(j0 as f64) - dr / 2.0;
        let r_hi = g.range_at(j1 as f64) + dr / 2.0;
        let span = g.beam_fov_rad + g.radians_per_beam();
        let analytic = 0.5 * span * (r_hi * r_hi - r_lo * r_lo);
        for mpp in [0.05, 0.1] {
            let r = rasterize(&f, &g, mpp).unwrap();
            let lit = r.nonzero_count();
            let mut boundary = 0usize;
            for row in 0..r.height_px {
                for col in 0..r.width_px {
                    if r.get(col, row) <= 0.0 {
                        continue;
                    }
                    let edge = col == 0
                        || row == 0
                        || col + 1 == r.width_px
                        || row + 1 == r.height_px
                        || r.get(col - 1, row) <= 0.0
                        || r.get(col + 1, row) <= 0.0
                        || r.get(col, row - 1) <= 0.0
                        || r.get(col, row + 1) <= 0.0;
                    boundary += edge as usize;
                }
            }
            let area = lit as f64 * mpp * mpp;
            assert!(
                (area - analytic).abs() <= boundary as f64 * mpp * mpp,
                "mpp {mpp}: raster {area} vs analytic {analytic}, boundary {boundary}"
            );
        }
    }

    #[test]
    fn rasterize_cells_matches_full_raster_locally() {
        let g = fov05();
        let cells: Vec<(u32, u32)> = (60..66)
            .flat_map(|b| (200..230).map(move |r| (b, r)))
            .collect();
        let mut f = SonarFrame::filled(g.beam_count, g.range_bin_count, 0.0);
        for &(b, r) in &cells {
            f.set(b, r, 1.0);
        }
        let full = rasterize(&f, &g, 0.02).unwrap();
        let crop = rasterize_cells(&cells, &g, 0.02).unwrap();
        assert_eq!(full.nonzero_count(), crop.nonzero_count());
    }

    proptest! {
        #[test]
        fn round_trip_recovers_cell(beam in 0u32..128, bin in 0u32..512, db in -0.49..0.49f64, dr in -0.49..0.49f64) {
            let g = fov05();
            let bf = (beam as f64 + db).clamp(0.0, 127.0);
            let rf = (bin as f64 + dr).clamp(0.0, 511.0);
            let (x, y) = g.polar_to_cartesian(bf, rf).unwrap();
            let (b2, r2) = g.cartesian_to_polar(x, y);
            prop_assert!((b2 - bf).abs() < 1e-6 && (r2 - rf).abs() < 1e-6);
            let (nb, nr) = g.nearest_cell(x, y).unwrap();
            prop_assert!((nb as f64 - bf).abs() <= 0.5 + 1e-9);
            prop_assert!((nr as f64 - rf).abs() <= 0.5 + 1e-9);
        }

        #[test]
        fn monotone_radius_and_angle(beam in 0.0..127.0f64, bin in 0.0..510.0f64, step in 0.01..1.0f64) {
            let g = fov05();
            let (x0, y0) = g.polar_to_cartesian(beam, bin).unwrap();
            let (x1, y1) = g.polar_to_cartesian(beam, bin + step).unwrap();
            prop_assert!(x1.hypot(y1) > x0.hypot(y0));
            let b2 = (beam + step).min(127.0);
            if b2 > beam {
                let (x2, y2) = g.polar_to_cartesian(b2, bin).unwrap();
                prop_assert!(x2.atan2(y2) > x0.atan2(y0));
            }
        }

        #[test]
        fn meters_per_bin_positive(bins in 2u32..5000, lo in 0.0..50.0f64, span in 0.001..100.0f64) {
            let g = SonarGeometry::new(16, 0.5, lo, lo + span, bins, 10.0).unwrap();
            prop_assert!(g.meters_per_bin() > 0.0);
        }
    }
}
