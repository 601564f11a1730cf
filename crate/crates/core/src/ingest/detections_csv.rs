//! Detections CSV: header `frame,x_min,y_min,x_max,y_max,score`, one row per
//! detection.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{BoundingBox, Detection};

pub const DETECTIONS_HEADER: [&str; 6] = ["frame", "x_min", "y_min", "x_max", "y_max", "score"];

/// Detections keyed by frame index, in file order within each frame.
pub type DetectionsByFrame = BTreeMap<usize, Vec<Detection>>;

pub fn group_by_frame(detections: impl IntoIterator<Item = Detection>) -> DetectionsByFrame {
    let mut grouped = DetectionsByFrame::new();
    for d in detections {
        grouped.entry(d.frame_index).or_default().push(d);
    }
    grouped
}

pub fn read_detections(path: impl AsRef<Path>) -> Result<DetectionsByFrame> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_detections(file, path)
}

pub fn parse_detections(reader: impl Read, source: &Path) -> Result<DetectionsByFrame> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: PathBuf::from(source),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if headers.iter().ne(DETECTIONS_HEADER.iter().copied()) {
        return Err(parse_err(
            1,
            format!("expected header '{}'", DETECTIONS_HEADER.join(",")),
        ));
    }

    let mut grouped = DetectionsByFrame::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let frame: usize = record[0]
            .parse()
            .map_err(|_| parse_err(line, format!("invalid frame index '{}'", &record[0])))?;
        let mut coords = [0.0f64; 5];
        for (i, slot) in coords.iter_mut().enumerate() {
            let field = &record[i + 1];
            *slot = field.parse().map_err(|_| {
                parse_err(line, format!("invalid {} '{field}'", DETECTIONS_HEADER[i + 1]))
            })?;
        }
        let [x_min, y_min, x_max, y_max, score] = coords;
        let bbox = BoundingBox::new(x_min, y_min, x_max, y_max)
            .map_err(|e| parse_err(line, e.to_string()))?;
        let det = Detection::new(frame, bbox, score).map_err(|e| parse_err(line, e.to_string()))?;
        grouped.entry(frame).or_default().push(det);
    }
    Ok(grouped)
}

pub fn write_detections<'a>(
    path: impl AsRef<Path>,
    detections: impl IntoIterator<Item = &'a Detection>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_detections_to(file, detections).map_err(|e| Error::io(path, e))
}

pub fn write_detections_to<'a>(
    writer: impl Write,
    detections: impl IntoIterator<Item = &'a Detection>,
) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(DETECTIONS_HEADER)?;
    for d in detections {
        let b = &d.bbox;
        wtr.write_record(&[
            d.frame_index.to_string(),
            b.x_min.to_string(),
            b.y_min.to_string(),
            b.x_max.to_string(),
            b.y_max.to_string(),
            d.score.to_string(),
        ])?;
    }
    wtr.flush()
}
