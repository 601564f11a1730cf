//! Seeded synthetic microscopy videos with exact ground truth, plus a
//! detection perturbator modelling detector failures.
//!
//! Each object is a Gaussian blob moving along an analytic trajectory. An
//! object is visible on a frame when its center lies inside the pixel grid;
//! only visible frames produce ground-truth points and boxes.

mod perturb;
mod random;

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use perturb::{perturb, DropoutWindow, PerturbSpec};
pub use random::RandomScenario;

use crate::error::{Error, Result};
use crate::ingest::{write_detections, write_sequence};
use crate::model::{BoundingBox, Detection, Frame, FrameSize, Point, Track, TrackId, TrackPoint};
use crate::mot::write_tracks;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edge {
    Left,
    Right,
    Top,
    Bottom,
}

/// Trajectory of one object as a function of the frame index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum MotionModel {
    Stationary {
        at: Point,
    },
    Linear {
        start: Point,
        /// Pixels per frame.
        velocity: Point,
    },
    /// A line with a sinusoidal offset perpendicular to the heading.
    Curvilinear {
        start: Point,
        velocity: Point,
        amplitude: f64,
        period: f64,
    },
    /// Runs along `edge`, leaves the frame after `exit_frame` and is back
    /// inside from `reentry_frame` on. The distance to the edge follows a V
    /// shape with its apex outside the frame.
    BorderExitReentry {
        edge: Edge,
        along_start: f64,
        along_speed: f64,
        inward_speed: f64,
        /// Distance inside the edge at the exit and re-entry frames.
        inset: f64,
        exit_frame: usize,
        reentry_frame: usize,
    },
}

impl MotionModel {
    pub fn position(&self, t: usize, size: FrameSize) -> Point {
        let tf = t as f64;
        match *self {
            MotionModel::Stationary { at } => at,
            MotionModel::Linear { start, velocity } => {
                Point::new(start.x + velocity.x * tf, start.y + velocity.y * tf)
            }
            MotionModel::Curvilinear {
                start,
                velocity,
                amplitude,
                period,
            } => {
                let speed = velocity.x.hypot(velocity.y);
                let normal = if speed > 0.0 {
                    Point::new(-velocity.y / speed, velocity.x / speed)
                } else {
                    Point::new(0.0, 1.0)
                };
                let off = amplitude * (2.0 * std::f64::consts::PI * tf / period).sin();
                Point::new(
                    start.x + velocity.x * tf + normal.x * off,
                    start.y + velocity.y * tf + normal.y * off,
                )
            }
            MotionModel::BorderExitReentry {
                edge,
                along_start,
                along_speed,
                inward_speed,
                inset,
                exit_frame,
                reentry_frame,
            } => {
                let mid = (exit_frame + reentry_frame) as f64 / 2.0;
                let half = (reentry_frame - exit_frame) as f64 / 2.0;
                let depth = inset + inward_speed * ((tf - mid).abs() - half);
                let along = along_start + along_speed * tf;
                let (w, h) = ((size.width - 1) as f64, (size.height - 1) as f64);
                match edge {
                    Edge::Left => Point::new(depth, along),
                    Edge::Right => Point::new(w - depth, along),
                    Edge::Top => Point::new(along, depth),
                    Edge::Bottom => Point::new(along, h - depth),
                }
            }
        }
    }

    fn validate(&self, frames: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        match *self {
            MotionModel::Curvilinear { period, amplitude, .. } => {
                if !(period > 0.0) || !(amplitude >= 0.0) {
                    return bad("curvilinear motion needs period > 0 and amplitude >= 0".into());
                }
            }
            MotionModel::BorderExitReentry {
                inward_speed,
                inset,
                exit_frame,
                reentry_frame,
                ..
            } => {
                if reentry_frame <= exit_frame + 1 || reentry_frame > exit_frame + 5 {
                    return bad(format!(
                        "re-entry frame {reentry_frame} must lie 2..=5 frames after exit frame {exit_frame}"
                    ));
                }
                if reentry_frame >= frames {
                    return bad(format!("re-entry frame {reentry_frame} beyond the video"));
                }
                if !(inset > 0.0 && inward_speed > inset) {
                    return bad("border motion needs 0 < inset < inward_speed".into());
                }
            }
            _ => {}
        }
        Ok(())
    }
}

pub fn is_visible(p: Point, size: FrameSize) -> bool {
    p.x >= 0.0 && p.y >= 0.0 && p.x <= (size.width - 1) as f64 && p.y <= (size.height - 1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub frames: usize,
    pub width: u32,
    pub height: u32,
    pub blob_sigma: f64,
    pub blob_amplitude: f64,
    pub background: f64,
    pub noise_sigma: f64,
    pub objects: Vec<MotionModel>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            seed: 0,
            frames: 25,
            width: 768,
            height: 576,
            blob_sigma: 3.0,
            blob_amplitude: 180.0,
            background: 20.0,
            noise_sigma: 8.0,
            objects: Vec::new(),
        }
    }
}

impl ScenarioSpec {
    pub fn frame_size(&self) -> FrameSize {
        FrameSize::new(self.width, self.height)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument(
                "scenario needs at least one frame and a non-empty frame size".into(),
            ));
        }
        if !(self.blob_sigma > 0.0) || !(self.blob_amplitude >= 0.0) || !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument(
                "blob_sigma must be > 0; amplitude and noise must be >= 0".into(),
            ));
        }
        for m in &self.objects {
            m.validate(self.frames)?;
        }
        Ok(())
    }

    /// Ground-truth box: center +/- 3 sigma.
    pub fn gt_box(&self, center: Point) -> BoundingBox {
        let side = 6.0 * self.blob_sigma;
        BoundingBox {
            x_min: center.x - side / 2.0,
            y_min: center.y - side / 2.0,
            x_max: center.x + side / 2.0,
            y_max: center.y + side / 2.0,
        }
    }
}

/// A ground-truth detection labelled with the object that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledDetection {
    pub track_id: TrackId,
    pub detection: Detection,
}

#[derive(Debug, Clone)]
pub struct SyntheticVideo {
    pub frames: Vec<Frame>,
    pub tracks: Vec<Track>,
    pub detections: Vec<LabeledDetection>,
}

impl SyntheticVideo {
    pub fn plain_detections(&self) -> Vec<Detection> {
        self.detections.iter().map(|d| d.detection).collect()
    }
}

/// Renders the scenario. Deterministic in `spec` (including its seed).
pub fn synth_video(spec: &ScenarioSpec) -> Result<SyntheticVideo> {
    spec.validate()?;
    let size = spec.frame_size();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;

    let mut points: Vec<Vec<TrackPoint>> = vec![Vec::new(); spec.objects.len()];
    let mut detections = Vec::new();
    let mut frames = Vec::with_capacity(spec.frames);
    let (w, h) = (spec.width as usize, spec.height as usize);
    let reach = (4.0 * spec.blob_sigma).ceil() as isize;
    let two_s2 = 2.0 * spec.blob_sigma * spec.blob_sigma;

    for t in 0..spec.frames {
        let mut canvas = vec![spec.background; w * h];
        if spec.noise_sigma > 0.0 {
            for v in canvas.iter_mut() {
                *v += noise.sample(&mut rng);
            }
        }
        for (id, model) in spec.objects.iter().enumerate() {
            let c = model.position(t, size);
            let (cx, cy) = (c.x.round() as isize, c.y.round() as isize);
            for y in (cy - reach).max(0)..=(cy + reach).min(h as isize - 1) {
                for x in (cx - reach).max(0)..=(cx + reach).min(w as isize - 1) {
                    let d2 = (x as f64 - c.x).powi(2) + (y as f64 - c.y).powi(2);
                    canvas[y as usize * w + x as usize] +=
                        spec.blob_amplitude * (-d2 / two_s2).exp();
                }
            }
            if is_visible(c, size) {
                let det = Detection {
                    frame_index: t,
                    bbox: spec.gt_box(c),
                    score: 1.0,
                };
                points[id].push(TrackPoint::detected(&det));
                detections.push(LabeledDetection {
                    track_id: id as TrackId,
                    detection: det,
                });
            }
        }
        let pixels = canvas.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
        frames.push(Frame::new(t, spec.width, spec.height, pixels)?);
    }

    let tracks = points
        .into_iter()
        .enumerate()
        .filter(|(_, p)| !p.is_empty())
        .map(|(id, p)| Track { id: id as TrackId, points: p })
        .collect();
    Ok(SyntheticVideo {
        frames,
        tracks,
        detections,
    })
}

/// Writes `frames/`, `gt_detections.csv`, `detections.csv`, `gt_tracks.csv`
/// and `scenario.json` into `dir`.
pub fn write_scenario(
    dir: impl AsRef<Path>,
    spec: &ScenarioSpec,
    video: &SyntheticVideo,
    detections: &[Detection],
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_sequence(dir.join("frames"), &video.frames)?;
    let gt: Vec<Detection> = video.plain_detections();
    write_detections(dir.join("gt_detections.csv"), &gt)?;
    write_detections(dir.join("detections.csv"), detections)?;
    write_tracks(dir.join("gt_tracks.csv"), &video.tracks)?;
    let json = serde_json::to_string_pretty(spec)?;
    let path = dir.join("scenario.json");
    fs::write(&path, json + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(model: MotionModel, noise: f64) -> ScenarioSpec {
        ScenarioSpec {
            seed: 3,
            noise_sigma: noise,
            objects: vec![model],
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_same_video() {
        let spec = RandomScenario {
            seed: 11,
            count: 12,
            ..Default::default()
        }
        .generate()
        .unwrap();
        let (a, b) = (synth_video(&spec).unwrap(), synth_video(&spec).unwrap());
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.tracks, b.tracks);
        assert_eq!(a.detections, b.detections);
    }

    #[test]
    fn stationary_noise_free_object() {
        let v = synth_video(&one(
            MotionModel::Stationary {
                at: Point::new(100.0, 200.0),
            },
            0.0,
        ))
        .unwrap();
        assert_eq!(v.frames.len(), 25);
        assert!(v.frames.windows(2).all(|w| w[0].pixels() == w[1].pixels()));
        assert_eq!(v.tracks.len(), 1);
        assert_eq!(v.tracks[0].len(), 25);
        assert!(v.tracks[0].positions().all(|p| p == Point::new(100.0, 200.0)));
    }

    #[test]
    fn border_exit_and_reentry() {
        let model = MotionModel::BorderExitReentry {
            edge: Edge::Left,
            along_start: 300.0,
            along_speed: 1.0,
            inward_speed: 5.0,
            inset: 2.0,
            exit_frame: 10,
            reentry_frame: 14,
        };
        let v = synth_video(&one(model, 0.0)).unwrap();
        let frames: Vec<usize> = v.tracks[0].points.iter().map(|p| p.frame_index).collect();
        let expected: Vec<usize> = (0..=10).chain(14..25).collect();
        assert_eq!(frames, expected);
        let t = &v.tracks[0];
        let (exit, back) = (t.point_at(10).unwrap(), t.point_at(14).unwrap());
        assert!(exit.position.x <= 20.0 && back.position.x <= 20.0);
        // Step into the frame before exit is the inward speed plus the along drift.
        let p9 = t.point_at(9).unwrap().position;
        assert!((p9.x - exit.position.x - 5.0).abs() < 1e-12);
    }

    #[test]
    fn every_gt_detection_has_a_track_point() {
        let spec = RandomScenario {
            seed: 5,
            count: 30,
            ..Default::default()
        }
        .generate()
        .unwrap();
        let v = synth_video(&spec).unwrap();
        for d in &v.detections {
            let t = v.tracks.iter().find(|t| t.id == d.track_id).unwrap();
            let p = t.point_at(d.detection.frame_index).unwrap();
            assert_eq!(p.position, d.detection.center());
        }
        let total: usize = v.tracks.iter().map(|t| t.len()).sum();
        assert_eq!(total, v.detections.len());
    }

    #[test]
    fn rejects_invalid_reentry() {
        let model = MotionModel::BorderExitReentry {
            edge: Edge::Top,
            along_start: 100.0,
            along_speed: 0.0,
            inward_speed: 3.0,
            inset: 1.0,
            exit_frame: 5,
            reentry_frame: 12,
        };
        assert!(synth_video(&one(model, 0.0)).is_err());
    }
}
