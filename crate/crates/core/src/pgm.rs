//! Binary 8-bit PGM (`P5`) encoding for intensity images in [0, 1].

use crate::error::{domain, Result};

/// Encodes a row-major `width × height` image; values are clamped to [0, 1]
/// and scaled to 0–255.
pub fn encode_pgm(
    width: usize,
    height: usize,
    values: impl IntoIterator<Item = f32>,
) -> Result<Vec<u8>> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    let start = out.len();
    out.extend(
        values
            .into_iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    if out.len() - start != width * height {
        return Err(domain(format!(
            "pgm expects {} values, got {}",
            width * height,
            out.len() - start
        )));
    }
    Ok(out)
}

/// Renders a sonar frame with one row per range bin and one column per beam.
pub fn frame_to_pgm(frame: &crate::frame::SonarFrame) -> Vec<u8> {
    let (beams, bins) = (frame.beam_count(), frame.bin_count());
    let values = (0..bins).flat_map(move |r| (0..beams).map(move |b| frame.get(b, r)));
    encode_pgm(beams as usize, bins as usize, values).expect("sized by frame")
}
