//! CASA kinematics: VSL, VCL, VAP, STR, LIN and the speed / progressiveness
//! classes derived from them.
//!
//! Elapsed time is the frame span of the track over the frame rate, which
//! equals `(n - 1) / fps` for gap-free tracks.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::CalibrationConfig;
use crate::error::{Error, Result};
use crate::model::{Point, Track, TrackId};

fn check(track: &Track) -> Result<f64> {
    if track.len() < 2 {
        return Err(Error::TrackTooShort {
            id: track.id,
            points: track.len(),
        });
    }
    Ok(track.end_frame() as f64 - track.start_frame() as f64)
}

fn um_per_s(px: f64, frames: f64, cfg: &CalibrationConfig) -> f64 {
    px * cfg.microns_per_pixel / (frames / cfg.fps)
}

fn path_length(points: impl IntoIterator<Item = Point>) -> f64 {
    let mut it = points.into_iter();
    let Some(mut prev) = it.next() else { return 0.0 };
    it.map(|p| {
        let d = prev.distance(&p);
        prev = p;
        d
    })
    .sum()
}

/// Straight-line velocity, µm/s.
pub fn vsl(track: &Track, cfg: &CalibrationConfig) -> Result<f64> {
    let span = check(track)?;
    Ok(um_per_s(track.first().position.distance(&track.last().position), span, cfg))
}

/// Curvilinear velocity, µm/s.
pub fn vcl(track: &Track, cfg: &CalibrationConfig) -> Result<f64> {
    let span = check(track)?;
    Ok(um_per_s(path_length(track.positions()), span, cfg))
}

/// Centered moving average of the positions. The window shrinks
/// symmetrically near the ends, so the first and last points are kept.
pub fn smoothed_path(positions: &[Point], window: usize) -> Vec<Point> {
    let half = window.saturating_sub(1) / 2;
    let n = positions.len();
    (0..n)
        .map(|i| {
            let k = half.min(i).min(n - 1 - i);
            let w = &positions[i - k..=i + k];
            let m = w.len() as f64;
            Point::new(
                w.iter().map(|p| p.x).sum::<f64>() / m,
                w.iter().map(|p| p.y).sum::<f64>() / m,
            )
        })
        .collect()
}

/// Average-path velocity: VCL of the smoothed path, µm/s.
pub fn vap(track: &Track, cfg: &CalibrationConfig) -> Result<f64> {
    let span = check(track)?;
    let pos: Vec<Point> = track.positions().collect();
    Ok(um_per_s(path_length(smoothed_path(&pos, cfg.mot_vap_window_frames)), span, cfg))
}

fn pct(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        100.0 * num / den
    } else {
        0.0
    }
}

/// Straightness VSL/VAP, percent.
pub fn str_ratio(track: &Track, cfg: &CalibrationConfig) -> Result<f64> {
    Ok(pct(vsl(track, cfg)?, vap(track, cfg)?))
}

/// Linearity VSL/VCL, percent.
pub fn lin_ratio(track: &Track, cfg: &CalibrationConfig) -> Result<f64> {
    Ok(pct(vsl(track, cfg)?, vcl(track, cfg)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedClass {
    Immotile,
    Slow,
    Medium,
    Rapid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Progressiveness {
    Immotile,
    Progressive,
    NonProgressive,
}

impl SpeedClass {
    pub fn as_str(self) -> &'static str {
        match self {
            SpeedClass::Immotile => "immotile",
            SpeedClass::Slow => "slow",
            SpeedClass::Medium => "medium",
            SpeedClass::Rapid => "rapid",
        }
    }
}

impl Progressiveness {
    pub fn as_str(self) -> &'static str {
        match self {
            Progressiveness::Immotile => "immotile",
            Progressiveness::Progressive => "progressive",
            Progressiveness::NonProgressive => "non_progressive",
        }
    }
}

impl fmt::Display for SpeedClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Progressiveness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Buckets are half-open: slow below LVV, medium in [LVV, MVV), rapid from
/// MVV up. Immotile takes precedence over everything else.
pub fn classify(vap_um_s: f64, str_pct: f64, cfg: &CalibrationConfig) -> (SpeedClass, Progressiveness) {
    if vap_um_s < cfg.mot_immotile_um_s {
        return (SpeedClass::Immotile, Progressiveness::Immotile);
    }
    let speed = if vap_um_s < cfg.mot_lvv_um_s {
        SpeedClass::Slow
    } else if vap_um_s < cfg.mot_mvv_um_s {
        SpeedClass::Medium
    } else {
        SpeedClass::Rapid
    };
    let prog = if vap_um_s >= cfg.mot_mvv_um_s && str_pct > cfg.mot_str_threshold_pct {
        Progressiveness::Progressive
    } else {
        Progressiveness::NonProgressive
    };
    (speed, prog)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotilityReport {
    pub track_id: TrackId,
    pub vsl_um_s: f64,
    pub vcl_um_s: f64,
    pub vap_um_s: f64,
    pub str_pct: f64,
    pub lin_pct: f64,
    pub speed_class: SpeedClass,
    pub progressiveness: Progressiveness,
}

impl MotilityReport {
    /// Category labels, e.g. `["rapid", "progressive"]` or `["immotile"]`.
    pub fn categories(&self) -> Vec<&'static str> {
        if self.speed_class == SpeedClass::Immotile {
            vec!["immotile"]
        } else {
            vec![self.speed_class.as_str(), self.progressiveness.as_str()]
        }
    }
}

pub fn analyze(track: &Track, cfg: &CalibrationConfig) -> Result<MotilityReport> {
    let (vsl_v, vcl_v, vap_v) = (vsl(track, cfg)?, vcl(track, cfg)?, vap(track, cfg)?);
    let str_pct = pct(vsl_v, vap_v);
    let (speed_class, progressiveness) = classify(vap_v, str_pct, cfg);
    Ok(MotilityReport {
        track_id: track.id,
        vsl_um_s: vsl_v,
        vcl_um_s: vcl_v,
        vap_um_s: vap_v,
        str_pct,
        lin_pct: pct(vsl_v, vcl_v),
        speed_class,
        progressiveness,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryCount {
    pub count: usize,
    /// Share of all tracks, in [0, 1].
    pub fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub immotile: CategoryCount,
    pub slow: CategoryCount,
    pub medium: CategoryCount,
    pub rapid: CategoryCount,
    pub progressive: CategoryCount,
    pub non_progressive: CategoryCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterMeans {
    pub vsl_um_s: f64,
    pub vcl_um_s: f64,
    pub vap_um_s: f64,
    pub str_pct: f64,
    pub lin_pct: f64,
}

/// Per-video aggregate: parameter means and category counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotilitySummary {
    pub tracks: usize,
    pub means: ParameterMeans,
    pub categories: CategoryCounts,
}

pub fn summarize(reports: &[MotilityReport]) -> Result<MotilitySummary> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument("no motility reports to summarize".into()));
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&MotilityReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let count = |pred: &dyn Fn(&MotilityReport) -> bool| {
        let c = reports.iter().filter(|r| pred(r)).count();
        CategoryCount {
            count: c,
            fraction: c as f64 / n,
        }
    };
    Ok(MotilitySummary {
        tracks: reports.len(),
        means: ParameterMeans {
            vsl_um_s: mean(|r| r.vsl_um_s),
            vcl_um_s: mean(|r| r.vcl_um_s),
            vap_um_s: mean(|r| r.vap_um_s),
            str_pct: mean(|r| r.str_pct),
            lin_pct: mean(|r| r.lin_pct),
        },
        categories: CategoryCounts {
            immotile: count(&|r| r.speed_class == SpeedClass::Immotile),
            slow: count(&|r| r.speed_class == SpeedClass::Slow),
            medium: count(&|r| r.speed_class == SpeedClass::Medium),
            rapid: count(&|r| r.speed_class == SpeedClass::Rapid),
            progressive: count(&|r| r.progressiveness == Progressiveness::Progressive),
            non_progressive: count(&|r| r.progressiveness == Progressiveness::NonProgressive),
        },
    })
}

pub const MOTILITY_HEADER: [&str; 8] = [
    "track_id",
    "vsl_um_s",
    "vcl_um_s",
    "vap_um_s",
    "str_pct",
    "lin_pct",
    "speed_class",
    "progressiveness",
];

pub fn write_motility_to(writer: impl Write, reports: &[MotilityReport]) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(MOTILITY_HEADER)?;
    for r in reports {
        wtr.write_record(&[
            r.track_id.to_string(),
            r.vsl_um_s.to_string(),
            r.vcl_um_s.to_string(),
            r.vap_um_s.to_string(),
            r.str_pct.to_string(),
            r.lin_pct.to_string(),
            r.speed_class.to_string(),
            r.progressiveness.to_string(),
        ])?;
    }
    wtr.flush()
}

pub fn write_motility(path: impl AsRef<Path>, reports: &[MotilityReport]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_motility_to(file, reports).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PointSource, TrackPoint};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn track(pts: &[(f64, f64)]) -> Track {
        Track::new(
            0,
            pts.iter()
                .enumerate()
                .map(|(i, &(x, y))| TrackPoint {
                    frame_index: i,
                    position: Point::new(x, y),
                    bbox: None,
                    source: PointSource::Detected,
                })
                .collect(),
        )
        .unwrap()
    }

    const ZIGZAG: [(f64, f64); 5] = [(0.0, 0.0), (4.0, 3.0), (8.0, 0.0), (12.0, 3.0), (16.0, 0.0)];

    #[test]
    fn hand_derived_values() {
        let cfg = CalibrationConfig::default();
        let straight: Vec<(f64, f64)> = (0..25).map(|i| (6.0 * i as f64, 0.0)).collect();
        let t = track(&straight);
        assert_relative_eq!(vsl(&t, &cfg).unwrap(), 249.9, max_relative = 1e-9);
        assert_relative_eq!(vcl(&t, &cfg).unwrap(), 249.9, max_relative = 1e-9);
        assert_relative_eq!(vap(&t, &cfg).unwrap(), vcl(&t, &cfg).unwrap(), max_relative = 1e-12);
        assert_relative_eq!(str_ratio(&t, &cfg).unwrap(), 100.0, max_relative = 1e-12);

        let z = track(&ZIGZAG);
        assert_relative_eq!(vsl(&z, &cfg).unwrap(), 166.6, max_relative = 1e-9);
        assert_relative_eq!(vcl(&z, &cfg).unwrap(), 208.25, max_relative = 1e-9);
        assert_relative_eq!(lin_ratio(&z, &cfg).unwrap(), 80.0, max_relative = 1e-9);
        let a = vap(&z, &cfg).unwrap();
        assert!(vsl(&z, &cfg).unwrap() < a && a < vcl(&z, &cfg).unwrap());
    }

    #[test]
    fn vap_matches_hand_smoothing() {
        // Window 5 on 5 points: smoothed = p0, mean(p0..p2), mean(p0..p4), mean(p2..p4), p4.
        let cfg = CalibrationConfig::default();
        let s = [(0.0, 0.0), (4.0, 1.0), (8.0, 1.2), (12.0, 1.0), (16.0, 0.0)];
        let len = 2.0 * (4.0f64.hypot(1.0) + 4.0f64.hypot(0.2));
        let expected = len * 0.833 / (4.0 / 50.0);
        assert_relative_eq!(vap(&track(&ZIGZAG), &cfg).unwrap(), expected, max_relative = 1e-12);
        let smoothed = smoothed_path(&ZIGZAG.map(|(x, y)| Point::new(x, y)), 5);
        for (p, (x, y)) in smoothed.iter().zip(s) {
            assert_relative_eq!(p.x, x, epsilon = 1e-12);
            assert_relative_eq!(p.y, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn stationary_and_short() {
        let cfg = CalibrationConfig::default();
        let t = track(&[(5.0, 5.0); 10]);
        let r = analyze(&t, &cfg).unwrap();
        assert_eq!((r.vsl_um_s, r.vcl_um_s, r.vap_um_s, r.str_pct, r.lin_pct), (0.0, 0.0, 0.0, 0.0, 0.0));
        assert_eq!(r.categories(), vec!["immotile"]);
        assert!(matches!(vsl(&track(&[(0.0, 0.0)]), &cfg), Err(Error::TrackTooShort { points: 1, .. })));
    }

    #[test]
    fn classification_examples() {
        let cfg = CalibrationConfig::default();
        assert_eq!(classify(60.0, 80.0, &cfg), (SpeedClass::Rapid, Progressiveness::Progressive));
        assert_eq!(classify(40.0, 90.0, &cfg), (SpeedClass::Medium, Progressiveness::NonProgressive));
        assert_eq!(classify(5.0, 90.0, &cfg), (SpeedClass::Immotile, Progressiveness::Immotile));
        assert_eq!(classify(60.0, 65.0, &cfg), (SpeedClass::Rapid, Progressiveness::NonProgressive));
        assert_eq!(classify(30.0, 0.0, &cfg).0, SpeedClass::Medium);
        assert_eq!(classify(50.0, 70.0, &cfg), (SpeedClass::Rapid, Progressiveness::NonProgressive));
        assert_eq!(classify(8.33, 0.0, &cfg).0, SpeedClass::Slow);
    }

    #[test]
    fn immotile_cutoff_is_ten_px_per_second() {
        let cfg = CalibrationConfig::default();
        let px_per_frame = 10.0 / cfg.fps;
        assert_eq!(crate::model::px_per_frame_to_um_per_s(px_per_frame, &cfg), cfg.mot_immotile_um_s);
    }

    #[test]
    fn summary_means_and_partition() {
        let cfg = CalibrationConfig::default();
        let mut a = analyze(&track(&ZIGZAG), &cfg).unwrap();
        let mut b = a;
        a.vsl_um_s = 100.0;
        b.vsl_um_s = 200.0;
        let s = summarize(&[a, b]).unwrap();
        assert_eq!(s.means.vsl_um_s, 150.0);
        let c = s.categories;
        assert_eq!(c.immotile.count + c.slow.count + c.medium.count + c.rapid.count, 2);
        assert_eq!(c.immotile.count + c.progressive.count + c.non_progressive.count, 2);
        assert_eq!((c.rapid.fraction, c.slow.fraction), (1.0, 0.0));
        assert!(summarize(&[]).is_err());
        let one = summarize(&[a]).unwrap();
        assert_eq!(one.means.vap_um_s, a.vap_um_s);
    }

    #[test]
    fn csv_header() {
        let cfg = CalibrationConfig::default();
        let mut buf = Vec::new();
        write_motility_to(&mut buf, &[analyze(&track(&ZIGZAG), &cfg).unwrap()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("track_id,vsl_um_s,vcl_um_s,vap_um_s,str_pct,lin_pct,speed_class,progressiveness\n0,"));
        assert!(text.trim_end().ends_with("rapid,progressive"));
    }

    fn arb_track() -> impl Strategy<Value = Track> {
        prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 2..30).prop_map(|v| track(&v))
    }

    proptest! {
        #[test]
        fn ordering_and_invariance(t in arb_track(), dx in -100.0..100.0f64, s in 0.1..10.0f64) {
            let cfg = CalibrationConfig::default();
            let r = analyze(&t, &cfg).unwrap();
            let tol = 1e-9 * r.vcl_um_s.max(1.0);
            prop_assert!(r.vsl_um_s <= r.vap_um_s + tol);
            prop_assert!(r.vap_um_s <= r.vcl_um_s + tol);
            prop_assert!(r.lin_pct <= 100.0 + 1e-9);

            let moved = Track { id: 0, points: t.points.iter().map(|p| TrackPoint { position: Point::new(p.position.x + dx, p.position.y - dx), ..*p }).collect() };
            let m = analyze(&moved, &cfg).unwrap();
            prop_assert!((m.vcl_um_s - r.vcl_um_s).abs() <= 1e-9 * r.vcl_um_s.max(1.0));
            prop_assert!((m.vap_um_s - r.vap_um_s).abs() <= 1e-9 * r.vap_um_s.max(1.0));

            let scaled = Track { id: 0, points: t.points.iter().map(|p| TrackPoint { position: Point::new(p.position.x * s, p.position.y * s), ..*p }).collect() };
            let k = analyze(&scaled, &cfg).unwrap();
            prop_assert!((k.vsl_um_s - s * r.vsl_um_s).abs() <= 1e-9 * (s * r.vsl_um_s).max(1.0));
            prop_assert!((k.vap_um_s - s * r.vap_um_s).abs() <= 1e-9 * (s * r.vap_um_s).max(1.0));

            let n = t.len();
            let reversed = Track { id: 0, points: t.points.iter().enumerate().map(|(i, _)| TrackPoint { frame_index: i, ..t.points[n - 1 - i] }).collect() };
            let v = analyze(&reversed, &cfg).unwrap();
            prop_assert!((v.vsl_um_s - r.vsl_um_s).abs() <= 1e-9 * r.vsl_um_s.max(1.0));
            prop_assert!((v.vcl_um_s - r.vcl_um_s).abs() <= 1e-9 * r.vcl_um_s.max(1.0));
            prop_assert!((v.vap_um_s - r.vap_um_s).abs() <= 1e-9 * r.vap_um_s.max(1.0));
        }

        #[test]
        fn classes_partition(vap_v in 0.0..120.0f64, str_v in 0.0..100.0f64) {
            let cfg = CalibrationConfig::default();
            let (speed, prog) = classify(vap_v, str_v, &cfg);
            prop_assert_eq!(speed == SpeedClass::Immotile, prog == Progressiveness::Immotile);
            if prog == Progressiveness::Progressive {
                prop_assert_eq!(speed, SpeedClass::Rapid);
            }
        }
    }
}
