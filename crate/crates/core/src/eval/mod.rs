//! Detection metrics (IoU matching, precision, recall, F1, accuracy, AP)
//! and track-level evaluation against ground truth.

mod detection;
mod tracking;

use serde::{Deserialize, Serialize};

pub use detection::{average_precision, detection_report, eval_detections, iou, match_detections, ApMode, DetectionEvalReport};
pub use tracking::{equalize_track, match_tracks, track_verdict, TrackMatch, TrackVerdict, TrackingReport};

/// Counts and the ratios derived from them. Ratios with a zero denominator
/// are reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let (t, p, n) = (tp as f64, fp as f64, fn_ as f64);
        let precision = ratio(t, t + p);
        let recall = ratio(t, t + n);
        Metrics {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1: ratio(2.0 * precision * recall, precision + recall),
            accuracy: ratio(t, t + p + n),
        }
    }
}

/// Combined report; either part may be absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection: Option<DetectionEvalReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tracking: Option<Metrics>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub matches: Vec<TrackMatch>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_from_counts() {
        let m = Metrics::from_counts(2, 1, 1);
        assert_eq!((m.precision, m.recall, m.accuracy), (2.0 / 3.0, 2.0 / 3.0, 0.5));
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
        let z = Metrics::from_counts(0, 0, 0);
        assert_eq!((z.precision, z.recall, z.f1, z.accuracy), (0.0, 0.0, 0.0, 0.0));
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("\"fn\":1"));
    }
}
