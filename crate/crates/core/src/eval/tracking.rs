use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::Metrics;
use crate::config::CalibrationConfig;
use crate::model::{Point, Track, TrackId, TrackPoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackMatch {
    pub estimated_id: TrackId,
    pub ground_truth_id: TrackId,
    pub mean_distance_px: f64,
    pub first_point_distance_px: f64,
    pub last_point_distance_px: f64,
    /// Points added to the estimated track by equalization.
    pub interpolated_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingReport {
    pub metrics: Metrics,
    pub matches: Vec<TrackMatch>,
}

/// Outcome of testing one estimated track against one ground-truth track.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrackVerdict {
    Matched(TrackMatch),
    /// Too many frames covered by only one of the two tracks.
    NoOverlap,
    EndpointGate { first_px: f64, last_px: f64 },
    MeanGate { mean_px: f64 },
}

fn position_at(points: &[TrackPoint], frame: usize) -> Point {
    let i = points.partition_point(|p| p.frame_index < frame);
    if i < points.len() && points[i].frame_index == frame {
        return points[i].position;
    }
    if points.len() == 1 {
        return points[0].position;
    }
    // Interpolate between the neighbours, or extrapolate from the two
    // boundary points.
    let (lo, hi) = if i == 0 {
        (0, 1)
    } else if i == points.len() {
        (points.len() - 2, points.len() - 1)
    } else {
        (i - 1, i)
    };
    let (a, b) = (&points[lo], &points[hi]);
    let t = (frame as f64 - a.frame_index as f64) / (b.frame_index as f64 - a.frame_index as f64);
    Point::new(
        a.position.x + (b.position.x - a.position.x) * t,
        a.position.y + (b.position.y - a.position.y) * t,
    )
}

/// Extends `est` onto every frame of `gt` it does not cover. Returns `None`
/// when the frames covered by exactly one of the two tracks number more
/// than the configured tolerance.
pub fn equalize_track(est: &Track, gt: &Track, cfg: &CalibrationConfig) -> Option<Track> {
    let ef: BTreeSet<usize> = est.points.iter().map(|p| p.frame_index).collect();
    let gf: BTreeSet<usize> = gt.points.iter().map(|p| p.frame_index).collect();
    if ef.symmetric_difference(&gf).count() > cfg.eval_max_nonoverlap_frames {
        return None;
    }
    let mut points = est.points.clone();
    points.extend(
        gf.difference(&ef)
            .map(|&f| TrackPoint::interpolated(f, position_at(&est.points, f))),
    );
    points.sort_by_key(|p| p.frame_index);
    Some(Track { id: est.id, points })
}

pub fn track_verdict(est: &Track, gt: &Track, cfg: &CalibrationConfig) -> TrackVerdict {
    let Some(eq) = equalize_track(est, gt, cfg) else {
        return TrackVerdict::NoOverlap;
    };
    let dist = |p: &TrackPoint| position_at(&eq.points, p.frame_index).distance(&p.position);
    let first = dist(gt.first());
    let last = dist(gt.last());
    if first > cfg.eval_endpoint_radius_px || last > cfg.eval_endpoint_radius_px {
        return TrackVerdict::EndpointGate {
            first_px: first,
            last_px: last,
        };
    }
    let mean = gt.points.iter().map(dist).sum::<f64>() / gt.len() as f64;
    if mean > cfg.eval_mean_dist_px {
        return TrackVerdict::MeanGate { mean_px: mean };
    }
    TrackVerdict::Matched(TrackMatch {
        estimated_id: est.id,
        ground_truth_id: gt.id,
        mean_distance_px: mean,
        first_point_distance_px: first,
        last_point_distance_px: last,
        interpolated_frames: eq.len() - est.len(),
    })
}

/// Assigns estimated tracks, longest first, to still-unmatched ground truth
/// passing all gates. Estimated tracks of equal length compete together:
/// their admissible pairs are accepted greedily by ascending mean distance.
pub fn match_tracks(est: &[Track], gt: &[Track], cfg: &CalibrationConfig) -> TrackingReport {
    let mut order: Vec<usize> = (0..est.len()).collect();
    order.sort_by(|&a, &b| est[b].len().cmp(&est[a].len()).then(est[a].id.cmp(&est[b].id)));
    let mut gt_taken = vec![false; gt.len()];
    let mut matches = Vec::new();
    for group in order.chunk_by(|&a, &b| est[a].len() == est[b].len()) {
        let mut cands: Vec<(usize, usize, TrackMatch)> = Vec::new();
        for &ei in group {
            for (gi, g) in gt.iter().enumerate() {
                if gt_taken[gi] {
                    continue;
                }
                if let TrackVerdict::Matched(m) = track_verdict(&est[ei], g, cfg) {
                    cands.push((ei, gi, m));
                }
            }
        }
        cands.sort_by(|a, b| a.2.mean_distance_px.total_cmp(&b.2.mean_distance_px).then((a.0, a.1).cmp(&(b.0, b.1))));
        let mut est_taken = vec![false; est.len()];
        for (ei, gi, m) in cands {
            if !est_taken[ei] && !gt_taken[gi] {
                est_taken[ei] = true;
                gt_taken[gi] = true;
                matches.push(m);
            }
        }
    }
    let tp = matches.len();
    TrackingReport {
        metrics: Metrics::from_counts(tp, est.len() - tp, gt.len() - tp),
        matches,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PointSource;
    use proptest::prelude::*;

    fn line(id: TrackId, frames: std::ops::Range<usize>, dx: f64) -> Track {
        Track {
            id,
            points: frames
                .map(|f| TrackPoint {
                    frame_index: f,
                    position: Point::new(100.0 + 3.0 * f as f64 + dx, 50.0),
                    bbox: None,
                    source: PointSource::Detected,
                })
                .collect(),
        }
    }

    #[test]
    fn equalize_extrapolates_tail() {
        let cfg = CalibrationConfig::default();
        let gt = line(0, 0..25, 0.0);
        let est = line(1, 0..22, 0.0);
        let eq = equalize_track(&est, &gt, &cfg).unwrap();
        assert_eq!(eq.len(), 25);
        for f in 22..25 {
            let p = eq.point_at(f).unwrap();
            assert_eq!(p.source, PointSource::Interpolated);
            assert!((p.position.x - (100.0 + 3.0 * f as f64)).abs() < 1e-12);
        }
        assert_eq!(equalize_track(&gt, &gt, &cfg).unwrap(), gt);
        assert!(equalize_track(&line(1, 0..18, 0.0), &gt, &cfg).is_none());
        assert!(equalize_track(&line(1, 0..20, 0.0), &gt, &cfg).is_some());
    }

    #[test]
    fn shift_gates() {
        let cfg = CalibrationConfig::default();
        let gt = line(0, 0..25, 0.0);
        assert!(matches!(track_verdict(&gt, &gt, &cfg), TrackVerdict::Matched(m) if m.mean_distance_px == 0.0));
        assert!(matches!(track_verdict(&line(1, 0..25, 20.0), &gt, &cfg), TrackVerdict::MeanGate { .. }));
        assert!(matches!(track_verdict(&line(1, 0..25, 15.0), &gt, &cfg), TrackVerdict::Matched(_)));
        assert!(matches!(track_verdict(&line(1, 0..25, 26.0), &gt, &cfg), TrackVerdict::EndpointGate { .. }));
        let r = match_tracks(&[line(1, 0..25, 20.0)], &[gt], &cfg);
        assert_eq!((r.metrics.tp, r.metrics.fp, r.metrics.fn_), (0, 1, 1));
    }

    #[test]
    fn minimum_mean_wins() {
        let cfg = CalibrationConfig::default();
        let gt = line(0, 0..25, 0.0);
        let r = match_tracks(&[line(1, 0..25, 7.0), line(2, 0..25, 3.0)], &[gt], &cfg);
        assert_eq!(r.matches.len(), 1);
        assert_eq!(r.matches[0].estimated_id, 2);
        assert_eq!((r.metrics.tp, r.metrics.fp, r.metrics.fn_), (1, 1, 0));
    }

    proptest! {
        #[test]
        fn equalize_keeps_covered_frames(start in 0usize..5, len in 2usize..25, gs in 0usize..5, glen in 2usize..25) {
            let cfg = CalibrationConfig::default();
            let est = line(1, start..start + len, 1.5);
            let gt = line(0, gs..gs + glen, 0.0);
            if let Some(eq) = equalize_track(&est, &gt, &cfg) {
                for p in &est.points {
                    prop_assert_eq!(eq.point_at(p.frame_index), Some(p));
                }
                for p in &gt.points {
                    prop_assert!(eq.point_at(p.frame_index).is_some());
                }
            }
        }

        #[test]
        fn matching_is_one_to_one(shifts in prop::collection::vec(0.0..30.0f64, 0..6), gts in 0usize..5) {
            let cfg = CalibrationConfig::default();
            let gt: Vec<Track> = (0..gts).map(|i| line(i as TrackId, 0..25, 40.0 * i as f64)).collect();
            let est: Vec<Track> = shifts.iter().enumerate().map(|(i, &s)| line(100 + i as TrackId, 0..25, s)).collect();
            let r = match_tracks(&est, &gt, &cfg);
            let mut e: Vec<_> = r.matches.iter().map(|m| m.estimated_id).collect();
            let mut g: Vec<_> = r.matches.iter().map(|m| m.ground_truth_id).collect();
            e.sort_unstable(); e.dedup();
            g.sort_unstable(); g.dedup();
            prop_assert_eq!(e.len(), r.matches.len());
            prop_assert_eq!(g.len(), r.matches.len());
            for m in &r.matches {
                prop_assert!(m.mean_distance_px <= 15.0);
                prop_assert!(m.first_point_distance_px <= 25.0 && m.last_point_distance_px <= 25.0);
            }
        }
    }
}
