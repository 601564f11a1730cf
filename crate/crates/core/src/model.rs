//! Geometric and temporal domain types shared by every stage of the pipeline.
//!
//! All coordinates are sub-pixel capable pixel positions with the origin at the
//! top-left corner of the frame. Distances between objects are always measured
//! between box centers.

use serde::{Deserialize, Serialize};

use crate::config::CalibrationConfig;
use crate::error::{Error, Result};

/// A 2-D position in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        euclidean_distance(*self, *other)
    }

    /// Linear interpolation; `t = 0` gives `self`, `t = 1` gives `other`.
    pub fn lerp(&self, other: &Point, t: f64) -> Point {
        Point::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }
}

pub fn euclidean_distance(a: Point, b: Point) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Converts a speed in pixels per frame to micrometres per second.
pub fn px_per_frame_to_um_per_s(v: f64, cfg: &CalibrationConfig) -> f64 {
    v * cfg.fps * cfg.microns_per_pixel
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSize {
    pub width: u32,
    pub height: u32,
}

impl FrameSize {
    pub const fn new(width: u32, height: u32) -> Self {
        FrameSize { width, height }
    }
}

impl Default for FrameSize {
    fn default() -> Self {
        FrameSize::new(768, 576)
    }
}

/// One 8-bit grayscale frame of a video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub index: usize,
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn new(index: usize, width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "frame {index} has zero extent ({width}x{height})"
            )));
        }
        if pixels.len() != width as usize * height as usize {
            return Err(Error::InvalidArgument(format!(
                "frame {index}: {} pixels for a {width}x{height} grid",
                pixels.len()
            )));
        }
        Ok(Frame {
            index,
            width,
            height,
            pixels,
        })
    }

    pub fn filled(index: usize, width: u32, height: u32, value: u8) -> Result<Self> {
        Frame::new(index, width, height, vec![value; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn size(&self) -> FrameSize {
        FrameSize::new(self.width, self.height)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn with_index(mut self, index: usize) -> Self {
        self.index = index;
        self
    }
}

/// Axis-aligned box, `x_min < x_max` and `y_min < y_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let finite = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidBox("non-finite coordinate".into()));
        }
        if x_min >= x_max {
            return Err(Error::InvalidBox(format!("x_min {x_min} >= x_max {x_max}")));
        }
        if y_min >= y_max {
            return Err(Error::InvalidBox(format!("y_min {y_min} >= y_max {y_max}")));
        }
        Ok(BoundingBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn from_center(center: Point, width: f64, height: f64) -> Result<Self> {
        BoundingBox::new(
            center.x - width / 2.0,
            center.y - height / 2.0,
            center.x + width / 2.0,
            center.y + height / 2.0,
        )
    }

    pub fn center(&self) -> Point {
        Point::new(
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Same extent, moved so its center is `center`.
    pub fn recentered(&self, center: Point) -> BoundingBox {
        let (hw, hh) = (self.width() / 2.0, self.height() / 2.0);
        BoundingBox {
            x_min: center.x - hw,
            y_min: center.y - hh,
            x_max: center.x + hw,
            y_max: center.y + hh,
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> BoundingBox {
        BoundingBox {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }

    pub fn intersects_frame(&self, size: FrameSize) -> bool {
        self.x_max > 0.0
            && self.y_max > 0.0
            && self.x_min < size.width as f64
            && self.y_min < size.height as f64
    }
}

/// A scored box on one frame, from a detector or from annotations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame_index: usize,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub score: f64,
}

impl Detection {
    pub fn new(frame_index: usize, bbox: BoundingBox, score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidArgument(format!(
                "score {score} outside [0, 1]"
            )));
        }
        Ok(Detection {
            frame_index,
            bbox,
            score,
        })
    }

    pub fn center(&self) -> Point {
        self.bbox.center()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointSource {
    Detected,
    Tracked,
    Interpolated,
}

impl PointSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            PointSource::Detected => "detected",
            PointSource::Tracked => "tracked",
            PointSource::Interpolated => "interpolated",
        }
    }

    pub fn is_observation(&self) -> bool {
        !matches!(self, PointSource::Interpolated)
    }
}

impl std::str::FromStr for PointSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "detected" => Ok(PointSource::Detected),
            "tracked" => Ok(PointSource::Tracked),
            "interpolated" => Ok(PointSource::Interpolated),
            other => Err(format!("unknown point source '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub frame_index: usize,
    pub position: Point,
    pub bbox: Option<BoundingBox>,
    pub source: PointSource,
}

impl TrackPoint {
    pub fn detected(detection: &Detection) -> Self {
        TrackPoint {
            frame_index: detection.frame_index,
            position: detection.center(),
            bbox: Some(detection.bbox),
            source: PointSource::Detected,
        }
    }

    pub fn interpolated(frame_index: usize, position: Point) -> Self {
        TrackPoint {
            frame_index,
            position,
            bbox: None,
            source: PointSource::Interpolated,
        }
    }
}

pub type TrackId = u64;

/// An identity-labelled sequence of per-frame positions.
///
/// Frame indices are strictly increasing. Tracks coming out of the joiner
/// are also gap-free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: TrackId,
    pub points: Vec<TrackPoint>,
}

impl Track {
    /// Builds a track, sorting points by frame. Duplicate frames and empty
    /// point lists are rejected.
    pub fn new(id: TrackId, mut points: Vec<TrackPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument(format!("track {id} has no points")));
        }
        points.sort_by_key(|p| p.frame_index);
        if let Some(w) = points.windows(2).find(|w| w[0].frame_index == w[1].frame_index) {
            return Err(Error::InvalidArgument(format!(
                "track {id} has two points on frame {}",
                w[0].frame_index
            )));
        }
        Ok(Track { id, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> &TrackPoint {
        &self.points[0]
    }

    pub fn last(&self) -> &TrackPoint {
        &self.points[self.points.len() - 1]
    }

    pub fn start_frame(&self) -> usize {
        self.first().frame_index
    }

    pub fn end_frame(&self) -> usize {
        self.last().frame_index
    }

    pub fn positions(&self) -> impl Iterator<Item = Point> + '_ {
        self.points.iter().map(|p| p.position)
    }

    pub fn point_at(&self, frame_index: usize) -> Option<&TrackPoint> {
        self.points
            .binary_search_by_key(&frame_index, |p| p.frame_index)
            .ok()
            .map(|i| &self.points[i])
    }

    /// Per-frame step lengths. A step spanning several frames is divided by
    /// the frame difference.
    pub fn step_lengths(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.windows(2).map(|w| {
            let frames = (w[1].frame_index - w[0].frame_index) as f64;
            w[0].position.distance(&w[1].position) / frames
        })
    }

    /// Mean per-frame step length; 0 for a single point.
    pub fn mean_step(&self) -> f64 {
        if self.points.len() < 2 {
            return 0.0;
        }
        self.step_lengths().sum::<f64>() / (self.points.len() - 1) as f64
    }

    /// Largest per-frame step length; 0 for a single point.
    pub fn max_step(&self) -> f64 {
        self.step_lengths().fold(0.0, f64::max)
    }

    pub fn is_gap_free(&self) -> bool {
        self.points
            .windows(2)
            .all(|w| w[1].frame_index == w[0].frame_index + 1)
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.points
            .windows(2)
            .all(|w| w[1].frame_index > w[0].frame_index)
    }
}
