//! `.sraw` frame files.
//!
//! Layout (little-endian): magic `SRAW`, u32 version (1), u32 beam_count,
//! u32 range_bin_count, u32 frame_count, f32 range_min_m, f32 range_max_m,
//! f32 beam_fov_rad, f32 frame_rate_hz, then `frame_count` beam-major frames
//! of f32 intensities. The header is 36 bytes.
//!
//! Geometry values are stored as f32, so a geometry read back from a file is
//! the f32-rounded version of the one written.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::frame::SonarFrame;
use crate::geometry::SonarGeometry;

pub const MAGIC: &[u8; 4] = b"SRAW";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 36;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SrawHeader {
    pub geom: SonarGeometry,
    pub frame_count: u32,
}

impl SrawHeader {
    pub fn frame_bytes(&self) -> usize {
        self.geom.cell_count() * 4
    }

    pub fn file_len(&self) -> u64 {
        HEADER_LEN as u64 + self.frame_count as u64 * self.frame_bytes() as u64
    }
}

/// Geometry as it will read back from a file (f32-rounded).
pub fn stored_geometry(g: &SonarGeometry) -> SonarGeometry {
    SonarGeometry {
        range_min_m: g.range_min_m as f32 as f64,
        range_max_m: g.range_max_m as f32 as f64,
        beam_fov_rad: g.beam_fov_rad as f32 as f64,
        frame_rate_hz: g.frame_rate_hz as f32 as f64,
        ..*g
    }
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

pub fn encode_header(geom: &SonarGeometry, frame_count: u32) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[0..4].copy_from_slice(MAGIC);
    h[4..8].copy_from_slice(&VERSION.to_le_bytes());
    h[8..12].copy_from_slice(&geom.beam_count.to_le_bytes());
    h[12..16].copy_from_slice(&geom.range_bin_count.to_le_bytes());
    h[16..20].copy_from_slice(&frame_count.to_le_bytes());
    h[20..24].copy_from_slice(&(geom.range_min_m as f32).to_le_bytes());
    h[24..28].copy_from_slice(&(geom.range_max_m as f32).to_le_bytes());
    h[28..32].copy_from_slice(&(geom.beam_fov_rad as f32).to_le_bytes());
    h[32..36].copy_from_slice(&(geom.frame_rate_hz as f32).to_le_bytes());
    h
}

pub fn decode_header(bytes: &[u8]) -> Result<SrawHeader> {
    if bytes.len() < HEADER_LEN {
        return Err(format_err(
            bytes.len(),
            format!(
                "truncated header: expected {HEADER_LEN} bytes, got {}",
                bytes.len()
            ),
        ));
    }
    if &bytes[0..4] != MAGIC {
        return Err(format_err(0, "bad magic, expected \"SRAW\""));
    }
    let u = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as f64;
    let version = u(4);
    if version != VERSION {
        return Err(format_err(4, format!("unsupported version {version}")));
    }
    let geom = SonarGeometry {
        beam_count: u(8),
        range_bin_count: u(12),
        range_min_m: f(20),
        range_max_m: f(24),
        beam_fov_rad: f(28),
        frame_rate_hz: f(32),
    };
    geom.validate()
        .map_err(|e| format_err(8, format!("invalid geometry: {e}")))?;
    Ok(SrawHeader {
        geom,
        frame_count: u(16),
    })
}

/// Decodes a whole file image.
pub fn decode_sraw(bytes: &[u8]) -> Result<(SonarGeometry, Vec<SonarFrame>)> {
    let header = decode_header(bytes)?;
    let expected = header.file_len();
    if bytes.len() as u64 != expected {
        let msg = if (bytes.len() as u64) < expected {
            "truncated file"
        } else {
            "trailing bytes"
        };
        return Err(format_err(
            bytes.len(),
            format!("{msg}: expected {expected} bytes, got {}", bytes.len()),
        ));
    }
    let g = header.geom;
    let frames = bytes[HEADER_LEN..]
        .chunks_exact(header.frame_bytes().max(1))
        .take(header.frame_count as usize)
        .map(|chunk| {
            let data = chunk
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            SonarFrame::from_data(g.beam_count, g.range_bin_count, data)
                .expect("chunk sized by header")
        })
        .collect();
    Ok((g, frames))
}

pub fn encode_sraw(geom: &SonarGeometry, frames: &[SonarFrame]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(HEADER_LEN + frames.len() * geom.cell_count() * 4);
    write_sraw_to(&mut out, geom, frames)?;
    Ok(out)
}

/// Streaming writer: header first, then frames one at a time.
pub struct SrawWriter<W: Write> {
    out: W,
    geom: SonarGeometry,
    expected: u32,
    written: u32,
}

impl<W: Write> SrawWriter<W> {
    pub fn new(mut out: W, geom: &SonarGeometry, frame_count: u32) -> Result<Self> {
        geom.validate()?;
        out.write_all(&encode_header(geom, frame_count))?;
        Ok(Self {
            out,
            geom: *geom,
            expected: frame_count,
            written: 0,
        })
    }

    pub fn write_frame(&mut self, f: &SonarFrame) -> Result<()> {
        if f.beam_count() != self.geom.beam_count || f.bin_count() != self.geom.range_bin_count {
            return Err(crate::error::domain("frame shape does not match geometry"));
        }
        if self.written == self.expected {
            return Err(crate::error::domain(
                "more frames than declared in the header",
            ));
        }
        let mut buf = Vec::with_capacity(f.data().len() * 4);
        for v in f.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        self.out.write_all(&buf)?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        if self.written != self.expected {
            return Err(crate::error::domain(format!(
                "wrote {} frames, header declares {}",
                self.written, self.expected
            )));
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn write_sraw_to<W: Write>(out: W, geom: &SonarGeometry, frames: &[SonarFrame]) -> Result<()> {
    let count = u32::try_from(frames.len()).map_err(|_| crate::error::domain("too many frames"))?;
    let mut w = SrawWriter::new(out, geom, count)?;
    for f in frames {
        w.write_frame(f)?;
    }
    w.finish()?;
    Ok(())
}

pub fn write_sraw(path: &Path, geom: &SonarGeometry, frames: &[SonarFrame]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_sraw_to(std::io::BufWriter::new(file), geom, frames)
}

pub fn read_sraw(path: &Path) -> Result<(SonarGeometry, Vec<SonarFrame>)> {
    decode_sraw(&std::fs::read(path)?)
}

/// Random access to the frames of an `.sraw` file without loading it whole.
pub struct SrawReader {
    file: std::fs::File,
    header: SrawHeader,
}

impl SrawReader {
    pub fn open(path: &Path) -> Result<Self> {
        let mut file = std::fs::File::open(path)?;
        let mut head = [0u8; HEADER_LEN];
        let mut got = 0;
        while got < HEADER_LEN {
            let n = file.read(&mut head[got..])?;
            if n == 0 {
                break;
            }
            got += n;
        }
        let header = decode_header(&head[..got])?;
        let len = file.metadata()?.len();
        if len != header.file_len() {
            return Err(format_err(
                len as usize,
                format!("expected {} bytes, got {len}", header.file_len()),
            ));
        }
        Ok(Self { file, header })
    }

    pub fn header(&self) -> &SrawHeader {
        &self.header
    }

    pub fn read_frame(&mut self, index: u32) -> Result<SonarFrame> {
        use std::io::{Seek, SeekFrom};
        if index >= self.header.frame_count {
            return Err(crate::error::domain(format!(
                "frame {index} out of range ({} frames)",
                self.header.frame_count
            )));
        }
        let n = self.header.frame_bytes();
        self.file
            .seek(SeekFrom::Start(HEADER_LEN as u64 + index as u64 * n as u64))?;
        let mut buf = vec![0u8; n];
        self.file.read_exact(&mut buf)?;
        let data = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        SonarFrame::from_data(
            self.header.geom.beam_count,
            self.header.geom.range_bin_count,
            data,
        )
    }
}
