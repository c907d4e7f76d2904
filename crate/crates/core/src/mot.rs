//! MOT-challenge style CSV records: `frame,id,x,y,w,h,conf,class,visibility`.
//!
//! Frames are 1-based on the wire and 0-based in memory. Raw detections carry
//! id −1. The file has no header; an empty record set is an empty file.
//! Numbers are written with the shortest representation that parses back to
//! the same `f64`, so a write/read cycle is value-exact.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::GridBox;
use crate::mask::Mask;

pub const DETECTION_ID: i64 = -1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotRecord {
    /// 0-based frame index.
    pub frame: u32,
    pub id: i64,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub conf: f64,
    pub class: String,
    pub visibility: f64,
}

impl MotRecord {
    pub fn detection(frame: u32, bbox: GridBox, conf: f64, class: &str) -> Self {
        Self::track(frame, DETECTION_ID, bbox, conf, class)
    }

    pub fn track(frame: u32, id: i64, bbox: GridBox, conf: f64, class: &str) -> Self {
        Self {
            frame,
            id,
            x: bbox.x,
            y: bbox.y,
            w: bbox.w,
            h: bbox.h,
            conf,
            class: class.to_string(),
            visibility: 1.0,
        }
    }

    pub fn bbox(&self) -> GridBox {
        GridBox::new(self.x, self.y, self.w, self.h)
    }

    pub fn is_detection(&self) -> bool {
        self.id == DETECTION_ID
    }
}

/// Stable sort by `(frame, id)`.
pub fn sort_records(records: &mut [MotRecord]) {
    records.sort_by_key(|r| (r.frame, r.id));
}

pub fn write_mot<W: Write>(out: W, records: &[MotRecord]) -> Result<()> {
    let mut sorted = records.to_vec();
    sort_records(&mut sorted);
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    for r in &sorted {
        let frame = r.frame as u64 + 1;
        w.write_record([
            frame.to_string(),
            r.id.to_string(),
            r.x.to_string(),
            r.y.to_string(),
            r.w.to_string(),
            r.h.to_string(),
            r.conf.to_string(),
            r.class.clone(),
            r.visibility.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(records: &[MotRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_mot(&mut buf, records)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn write_mot_csv(path: &Path, records: &[MotRecord]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_mot(std::io::BufWriter::new(file), records)
}

pub fn parse_mot_csv<R: Read>(input: R) -> Result<Vec<MotRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Record {
            line: e.position().map(|p| p.line()).unwrap_or(i as u64 + 1),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(i as u64 + 1);
        out.push(parse_row(&rec, line)?);
    }
    Ok(out)
}

pub fn read_mot_csv(path: &Path) -> Result<Vec<MotRecord>> {
    parse_mot_csv(std::io::BufReader::new(std::fs::File::open(path)?))
}

fn parse_row(rec: &csv::StringRecord, line: u64) -> Result<MotRecord> {
    let err = |message: String| Error::Record { line, message };
    if rec.len() != 9 {
        return Err(err(format!("expected 9 fields, found {}", rec.len())));
    }
    let num = |i: usize, name: &str| -> Result<f64> {
        let v: f64 = rec[i]
            .parse()
            .map_err(|_| err(format!("{name}: not a number: {:?}", &rec[i])))?;
        if !v.is_finite() {
            return Err(err(format!("{name}: not finite")));
        }
        Ok(v)
    };
    let frame: u64 = rec[0]
        .parse()
        .map_err(|_| err(format!("frame: not an integer: {:?}", &rec[0])))?;
    if frame == 0 || frame > u32::MAX as u64 {
        return Err(err(format!(
            "frame {frame} out of range (frames are 1-based)"
        )));
    }
    let id: i64 = rec[1]
        .parse()
        .map_err(|_| err(format!("id: not an integer: {:?}", &rec[1])))?;
    Ok(MotRecord {
        frame: (frame - 1) as u32,
        id,
        x: num(2, "x")?,
        y: num(3, "y")?,
        w: num(4, "w")?,
        h: num(5, "h")?,
        conf: num(6, "conf")?,
        class: rec[7].to_string(),
        visibility: num(8, "visibility")?,
    })
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// One mask keyed to a MOT row by frame and id (plus its row position, since
/// detection rows all share id −1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskEntry {
    pub row: usize,
    pub frame: u32,
    pub id: i64,
    pub mask: Mask,
}

pub fn write_masks_jsonl<W: Write>(mut out: W, entries: &[MaskEntry]) -> Result<()> {
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn parse_masks_jsonl<R: Read>(input: R) -> Result<Vec<MaskEntry>> {
    use std::io::BufRead;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: MaskEntry = serde_json::from_str(&line).map_err(|e| Error::Record {
            line: i as u64 + 1,
            message: e.to_string(),
        })?;
        entry.mask.validate().map_err(|e| Error::Record {
            line: i as u64 + 1,
            message: e.to_string(),
        })?;
        out.push(entry);
    }
    Ok(out)
}
