use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::LabeledDetection;
use crate::error::{Error, Result};
use crate::model::{BoundingBox, Detection, FrameSize, Point, TrackId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropoutWindow {
    pub track_id: TrackId,
    pub start_frame: usize,
    pub length: usize,
}

impl DropoutWindow {
    fn covers(&self, track_id: TrackId, frame: usize) -> bool {
        track_id == self.track_id && frame >= self.start_frame && frame < self.start_frame + self.length
    }
}

/// Detector failure model applied to ground-truth detections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbSpec {
    pub seed: u64,
    /// Probability of one false positive per frame.
    pub fp_rate: f64,
    /// Probability of dropping each detection.
    pub fn_rate: f64,
    /// Standard deviation of the center jitter, px.
    pub jitter_sigma: f64,
    pub dropout_windows: Vec<DropoutWindow>,
    /// Side of the square false-positive boxes, px.
    pub fp_box_px: f64,
}

impl Default for PerturbSpec {
    fn default() -> Self {
        PerturbSpec {
            seed: 0,
            fp_rate: 0.0,
            fn_rate: 0.0,
            jitter_sigma: 0.0,
            dropout_windows: Vec::new(),
            fp_box_px: 18.0,
        }
    }
}

impl PerturbSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fp_rate) || !(0.0..=1.0).contains(&self.fn_rate) {
            return Err(Error::InvalidArgument("fp_rate and fn_rate must lie in [0, 1]".into()));
        }
        if !(self.jitter_sigma >= 0.0) || !self.jitter_sigma.is_finite() {
            return Err(Error::InvalidArgument("jitter_sigma must be >= 0".into()));
        }
        if !(self.fp_box_px > 0.0) {
            return Err(Error::InvalidArgument("fp_box_px must be > 0".into()));
        }
        Ok(())
    }
}

/// Applies the failure model over frames `0..frames`. The output is ordered
/// by frame; surviving detections keep their input order within a frame and
/// each frame's false positive, if any, comes last.
pub fn perturb(
    gt: &[LabeledDetection],
    spec: &PerturbSpec,
    size: FrameSize,
    frames: usize,
) -> Result<Vec<Detection>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let jitter = Normal::new(0.0, spec.jitter_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut by_frame: BTreeMap<usize, Vec<&LabeledDetection>> = BTreeMap::new();
    for d in gt {
        by_frame.entry(d.detection.frame_index).or_default().push(d);
    }
    let last = by_frame.keys().next_back().map_or(0, |&f| f + 1).max(frames);

    let mut out = Vec::with_capacity(gt.len());
    for f in 0..last {
        for d in by_frame.get(&f).into_iter().flatten() {
            if spec.dropout_windows.iter().any(|w| w.covers(d.track_id, f)) {
                continue;
            }
            if rng.random::<f64>() < spec.fn_rate {
                continue;
            }
            let mut det = d.detection;
            if spec.jitter_sigma > 0.0 {
                det.bbox = det.bbox.translated(jitter.sample(&mut rng), jitter.sample(&mut rng));
            }
            out.push(det);
        }
        if f < frames && rng.random::<f64>() < spec.fp_rate {
            let c = Point::new(
                rng.random_range(0.0..size.width as f64),
                rng.random_range(0.0..size.height as f64),
            );
            let half = spec.fp_box_px / 2.0;
            out.push(Detection {
                frame_index: f,
                bbox: BoundingBox {
                    x_min: c.x - half,
                    y_min: c.y - half,
                    x_max: c.x + half,
                    y_max: c.y + half,
                },
                score: rng.random_range(0.5..1.0),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_video, RandomScenario};

    fn gt() -> (Vec<LabeledDetection>, FrameSize, usize) {
        let spec = RandomScenario {
            seed: 4,
            count: 10,
            ..Default::default()
        }
        .generate()
        .unwrap();
        let v = synth_video(&spec).unwrap();
        (v.detections, spec.frame_size(), spec.frames)
    }

    #[test]
    fn zero_rates_are_identity() {
        let (gt, size, n) = gt();
        let out = perturb(&gt, &PerturbSpec::default(), size, n).unwrap();
        let plain: Vec<Detection> = gt.iter().map(|d| d.detection).collect();
        assert_eq!(out, plain);
    }

    #[test]
    fn dropout_window_removes_only_that_track() {
        let (gt, size, n) = gt();
        let spec = PerturbSpec {
            dropout_windows: vec![DropoutWindow {
                track_id: 2,
                start_frame: 10,
                length: 3,
            }],
            ..Default::default()
        };
        let out = perturb(&gt, &spec, size, n).unwrap();
        let expected: Vec<Detection> = gt
            .iter()
            .filter(|d| !(d.track_id == 2 && (10..13).contains(&d.detection.frame_index)))
            .map(|d| d.detection)
            .collect();
        assert_eq!(out, expected);
        assert_eq!(out.len(), gt.len() - 3);
    }

    #[test]
    fn full_fn_rate_empties() {
        let (gt, size, n) = gt();
        let spec = PerturbSpec {
            fn_rate: 1.0,
            ..Default::default()
        };
        assert!(perturb(&gt, &spec, size, n).unwrap().is_empty());
    }

    #[test]
    fn deterministic_under_seed() {
        let (gt, size, n) = gt();
        let spec = PerturbSpec {
            seed: 8,
            fp_rate: 0.3,
            fn_rate: 0.1,
            jitter_sigma: 1.5,
            ..Default::default()
        };
        assert_eq!(perturb(&gt, &spec, size, n).unwrap(), perturb(&gt, &spec, size, n).unwrap());
    }

    #[test]
    fn fp_count_within_five_sigma() {
        let frames = 2000;
        let p = 0.3;
        let spec = PerturbSpec {
            seed: 21,
            fp_rate: p,
            ..Default::default()
        };
        let out = perturb(&[], &spec, FrameSize::default(), frames).unwrap();
        let mean = frames as f64 * p;
        let sd = (frames as f64 * p * (1.0 - p)).sqrt();
        assert!((out.len() as f64 - mean).abs() <= 5.0 * sd, "{} fps", out.len());
        assert!(out.iter().all(|d| (0.5..1.0).contains(&d.score)));
    }

    #[test]
    fn rejects_bad_rates() {
        let spec = PerturbSpec {
            fn_rate: 1.5,
            ..Default::default()
        };
        assert!(perturb(&[], &spec, FrameSize::default(), 1).is_err());
    }
}
