//! Frame-by-frame multi-object tracking: propagate each live track with a
//! single-object tracker, associate predictions to detections, close tracks
//! that found no detection and spawn tracks for unclaimed detections.

mod csv;

use rayon::prelude::*;

pub use self::csv::{parse_tracks, read_tracks, write_tracks, write_tracks_to, TRACKS_HEADER};

use crate::config::CalibrationConfig;
use crate::error::{Error, Result};
use crate::ingest::DetectionsByFrame;
use crate::model::{Detection, Frame, Point, Track, TrackId, TrackPoint};
use crate::sot::{SingleObjectTracker, TrackerFactory};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AssociationResult {
    /// (track id, detection index), in acceptance order.
    pub pairs: Vec<(TrackId, usize)>,
    pub rejected_tracks: Vec<TrackId>,
    pub new_detections: Vec<usize>,
}

/// Greedy gated matching. Candidate pairs within `radius` (inclusive) are
/// taken in ascending distance, ties going to the lower track id and then
/// the lower detection index; a pair is accepted when both sides are free.
pub fn associate(tracked: &[(TrackId, Point)], detections: &[(usize, Point)], radius: f64) -> AssociationResult {
    let mut candidates: Vec<(f64, TrackId, usize, usize, usize)> = Vec::new();
    for (ti, &(id, p)) in tracked.iter().enumerate() {
        for (di, &(idx, q)) in detections.iter().enumerate() {
            let d = p.distance(&q);
            if d <= radius {
                candidates.push((d, id, idx, ti, di));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut track_used = vec![false; tracked.len()];
    let mut det_used = vec![false; detections.len()];
    let mut pairs = Vec::new();
    for (_, id, idx, ti, di) in candidates {
        if !track_used[ti] && !det_used[di] {
            track_used[ti] = true;
            det_used[di] = true;
            pairs.push((id, idx));
        }
    }
    AssociationResult {
        pairs,
        rejected_tracks: tracked
            .iter()
            .zip(&track_used)
            .filter(|(_, &u)| !u)
            .map(|(t, _)| t.0)
            .collect(),
        new_detections: detections
            .iter()
            .zip(&det_used)
            .filter(|(_, &u)| !u)
            .map(|(d, _)| d.0)
            .collect(),
    }
}

/// A track together with the tracker that propagates it.
///
/// `tracker` is `None` when the tracker could not be built on the last
/// detection box (degenerate or outside the frame); such a track is then
/// propagated with zero motion.
#[derive(Debug)]
pub struct ActiveTrack<T> {
    pub track: Track,
    pub tracker: Option<T>,
    pub alive: bool,
}

/// Per-frame counts from one [`MotEngine::step`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub matched: usize,
    pub closed: usize,
    pub spawned: usize,
}

pub struct MotEngine<'a, F: TrackerFactory> {
    factory: &'a F,
    radius: f64,
    tracks: Vec<ActiveTrack<F::Tracker>>,
    next_id: TrackId,
    last_frame: Option<usize>,
}

impl<'a, F: TrackerFactory> MotEngine<'a, F> {
    pub fn new(factory: &'a F, cfg: &CalibrationConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(MotEngine {
            factory,
            radius: cfg.association_radius_px,
            tracks: Vec::new(),
            next_id: 0,
            last_frame: None,
        })
    }

    pub fn active_tracks(&self) -> &[ActiveTrack<F::Tracker>] {
        &self.tracks
    }

    /// All tracks spawned so far, open and closed, in id order.
    pub fn into_tracks(self) -> Vec<Track> {
        self.tracks.into_iter().map(|t| t.track).collect()
    }

    pub fn step(&mut self, frame: &Frame, detections: &[Detection]) -> Result<StepStats> {
        if let Some(prev) = self.last_frame {
            if frame.index != prev + 1 {
                return Err(Error::FrameDiscontinuity {
                    expected: prev + 1,
                    got: frame.index,
                });
            }
        }
        if let Some(d) = detections.iter().find(|d| d.frame_index != frame.index) {
            return Err(Error::InvalidArgument(format!(
                "detection for frame {} passed with frame {}",
                d.frame_index, frame.index
            )));
        }

        let predicted: Vec<Result<(TrackId, Point)>> = self
            .tracks
            .par_iter_mut()
            .filter(|t| t.alive)
            .map(|t| {
                let p = match t.tracker.as_mut() {
                    Some(tr) => tr.update(frame)?.center(),
                    None => t.track.last().position,
                };
                Ok((t.track.id, p))
            })
            .collect();
        let predicted = predicted.into_iter().collect::<Result<Vec<_>>>()?;

        let det_points: Vec<(usize, Point)> = detections.iter().map(|d| d.center()).enumerate().collect();
        let assoc = associate(&predicted, &det_points, self.radius);

        // Track ids equal their position in `self.tracks`.
        let mut assigned: Vec<Option<usize>> = vec![None; self.tracks.len()];
        for &(id, di) in &assoc.pairs {
            assigned[id as usize] = Some(di);
        }
        let factory = self.factory;
        self.tracks
            .par_iter_mut()
            .zip(assigned.par_iter())
            .filter(|(t, _)| t.alive)
            .for_each(|(t, a)| match a {
                Some(di) => {
                    let det = &detections[*di];
                    t.track.points.push(TrackPoint::detected(det));
                    t.tracker = factory.init(frame, det.bbox).ok();
                }
                None => {
                    t.alive = false;
                    t.tracker = None;
                }
            });

        let spawned: Vec<ActiveTrack<F::Tracker>> = assoc
            .new_detections
            .par_iter()
            .enumerate()
            .map(|(k, &di)| {
                let det = &detections[di];
                ActiveTrack {
                    track: Track {
                        id: self.next_id + k as TrackId,
                        points: vec![TrackPoint::detected(det)],
                    },
                    tracker: factory.init(frame, det.bbox).ok(),
                    alive: true,
                }
            })
            .collect();
        self.next_id += spawned.len() as TrackId;
        let stats = StepStats {
            matched: assoc.pairs.len(),
            closed: assoc.rejected_tracks.len(),
            spawned: spawned.len(),
        };
        self.tracks.extend(spawned);
        self.last_frame = Some(frame.index);
        Ok(stats)
    }
}

/// Runs the engine over a whole video. Frames must be consecutive; every
/// detection frame must fall inside the video.
pub fn run<F: TrackerFactory>(
    frames: &[Frame],
    detections: &DetectionsByFrame,
    cfg: &CalibrationConfig,
    factory: &F,
) -> Result<Vec<Track>> {
    if let Some((&f, _)) = detections.iter().find(|(f, d)| {
        !d.is_empty() && !frames.iter().any(|fr| fr.index == **f)
    }) {
        return Err(Error::InvalidArgument(format!(
            "detections reference frame {f}, which is not in the video"
        )));
    }
    let mut engine = MotEngine::new(factory, cfg)?;
    for frame in frames {
        let dets = detections.get(&frame.index).map_or(&[][..], |d| d.as_slice());
        engine.step(frame, dets)?;
    }
    Ok(engine.into_tracks())
}
