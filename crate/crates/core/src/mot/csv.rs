use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use csv::{ReaderBuilder, Trim};

use crate::error::{Error, Result};
use crate::model::{Point, PointSource, Track, TrackId, TrackPoint};

pub const TRACKS_HEADER: [&str; 5] = ["track_id", "frame", "x", "y", "source"];

/// One row per track point, tracks in the given order.
pub fn write_tracks(path: impl AsRef<Path>, tracks: &[Track]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_tracks_to(file, tracks).map_err(|e| Error::io(path, e))
}

pub fn write_tracks_to(writer: impl Write, tracks: &[Track]) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(TRACKS_HEADER)?;
    for t in tracks {
        for p in &t.points {
            wtr.write_record(&[
                t.id.to_string(),
                p.frame_index.to_string(),
                p.position.x.to_string(),
                p.position.y.to_string(),
                p.source.as_str().to_string(),
            ])?;
        }
    }
    wtr.flush()
}

pub fn read_tracks(path: impl AsRef<Path>) -> Result<Vec<Track>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_tracks(file, path)
}

/// Parses a tracks CSV. Rows of one track may appear in any order; tracks
/// come back sorted by id.
pub fn parse_tracks(reader: impl Read, source: &Path) -> Result<Vec<Track>> {
    let mut rdr = ReaderBuilder::new().trim(Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| parse_err(source, 1, e.to_string()))?;
    if header.iter().ne(TRACKS_HEADER) {
        return Err(parse_err(
            source,
            1,
            format!("expected header `{}`", TRACKS_HEADER.join(",")),
        ));
    }
    let mut points: BTreeMap<TrackId, Vec<TrackPoint>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(source, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| -> Result<f64> {
            let v: f64 = field(i)
                .parse()
                .map_err(|_| parse_err(source, line, format!("bad {} `{}`", TRACKS_HEADER[i], field(i))))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(parse_err(source, line, format!("non-finite {}", TRACKS_HEADER[i])))
            }
        };
        let id: TrackId = field(0)
            .parse()
            .map_err(|_| parse_err(source, line, format!("bad track_id `{}`", field(0))))?;
        let frame: usize = field(1)
            .parse()
            .map_err(|_| parse_err(source, line, format!("bad frame `{}`", field(1))))?;
        let src: PointSource = field(4)
            .parse()
            .map_err(|_| parse_err(source, line, format!("bad source `{}`", field(4))))?;
        points.entry(id).or_default().push(TrackPoint {
            frame_index: frame,
            position: Point::new(num(2)?, num(3)?),
            bbox: None,
            source: src,
        });
    }
    points
        .into_iter()
        .map(|(id, p)| Track::new(id, p).map_err(|e| parse_err(source, 0, e.to_string())))
        .collect()
}

fn parse_err(path: &Path, line: u64, message: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    }
}
