//! Repairs track fragmentation left by the tracking loop.
//!
//! With A a track ending at frame `e` and B a track starting at frame `s`,
//! `offset = s - e` and `gap = offset - 1` (frames without observation).
//!
//! * phase 1, offset 1: fragment joining with speed-dependent gates;
//! * phase 2, offset 0: A's last point came from a false detection, so it
//!   is dropped before appending B;
//! * phase 3, offset 2..=5: gap joining with gates scaled by `gap`;
//! * phase 4, offset 2..=5, both endpoints near a frame edge: border
//!   re-entry at a bounded speed.
//!
//! Gaps are filled with linearly interpolated points. Tracks shorter than
//! the minimum length are pruned at the end.

use serde::{Deserialize, Serialize};

use crate::config::CalibrationConfig;
use crate::model::{FrameSize, Point, Track, TrackId, TrackPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Phase {
    Fragment = 1,
    FalsePositive = 2,
    Gap = 3,
    Border = 4,
}

impl Phase {
    pub const ALL: [Phase; 4] = [Phase::Fragment, Phase::FalsePositive, Phase::Gap, Phase::Border];
}

impl From<Phase> for u8 {
    fn from(p: Phase) -> u8 {
        p as u8
    }
}

impl TryFrom<u8> for Phase {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        Phase::ALL
            .into_iter()
            .find(|p| *p as u8 == v)
            .ok_or_else(|| format!("unknown joiner phase {v}"))
    }
}

/// One accepted join, for the audit log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JoinDecision {
    pub earlier_track: TrackId,
    pub later_track: TrackId,
    pub phase: Phase,
    pub gap_frames: usize,
    pub distance_px: f64,
    pub threshold_px: f64,
}

fn is_long(t: &Track, cfg: &CalibrationConfig) -> bool {
    t.len() >= cfg.joiner_long_track_min_points
}

fn near_border(p: Point, size: FrameSize, margin: f64) -> bool {
    let (w, h) = ((size.width - 1) as f64, (size.height - 1) as f64);
    p.x <= margin || p.y <= margin || w - p.x <= margin || h - p.y <= margin
}

/// Phase 1 and phase 3 share their gate structure; `slack` and `scale`
/// differ.
fn speed_gate(a: &Track, b: &Track, cfg: &CalibrationConfig, slack: f64, scale: f64) -> Option<f64> {
    let (la, lb) = (is_long(a, cfg), is_long(b, cfg));
    if la && lb && (a.mean_step() - b.mean_step()).abs() >= cfg.joiner_speed_diff_px {
        return None;
    }
    if la || lb {
        Some((a.max_step().max(b.max_step()) + slack) * scale)
    } else {
        Some(2.0 * cfg.joiner_phase4_speed_px * scale)
    }
}

/// The decision `phase` would record for appending `b` to `a`, if the pair
/// passes that phase's gate.
pub fn admissible(
    phase: Phase,
    a: &Track,
    b: &Track,
    cfg: &CalibrationConfig,
    size: FrameSize,
) -> Option<JoinDecision> {
    if a.id == b.id {
        return None;
    }
    let offset = b.start_frame() as i64 - a.end_frame() as i64;
    let pa = a.last().position;
    let pb = b.first().position;
    let d = pa.distance(&pb);
    let gap = (offset - 1).max(0) as usize;
    let threshold = match phase {
        Phase::Fragment if offset == 1 => speed_gate(a, b, cfg, cfg.joiner_phase1_slack_px, 1.0)?,
        Phase::FalsePositive if offset == 0 => cfg.joiner_phase2_radius_px,
        Phase::Gap if (2..=cfg.joiner_phase3_max_offset_frames as i64).contains(&offset) => {
            speed_gate(a, b, cfg, cfg.joiner_phase3_slack_px, gap as f64)?
        }
        Phase::Border if (2..=cfg.joiner_phase4_window_frames as i64).contains(&offset) => {
            let m = cfg.joiner_border_margin_px;
            if !near_border(pa, size, m) || !near_border(pb, size, m) {
                return None;
            }
            cfg.joiner_phase4_speed_px * gap as f64
        }
        _ => return None,
    };
    (d <= threshold).then_some(JoinDecision {
        earlier_track: a.id,
        later_track: b.id,
        phase,
        gap_frames: gap,
        distance_px: d,
        threshold_px: threshold,
    })
}

/// Appends `b` to `a`, filling missing frames by linear interpolation.
/// For phase 2 `a`'s last point is removed first; if that empties `a`, the
/// result is `b` unchanged.
fn merge(mut a: Track, b: Track, phase: Phase) -> Track {
    if phase == Phase::FalsePositive {
        a.points.pop();
        if a.points.is_empty() {
            return b;
        }
    }
    let (e, pa) = (a.end_frame(), a.last().position);
    let (s, pb) = (b.start_frame(), b.first().position);
    for f in e + 1..s {
        let t = (f - e) as f64 / (s - e) as f64;
        a.points.push(TrackPoint::interpolated(f, pa.lerp(&pb, t)));
    }
    a.points.extend(b.points);
    a
}

/// One pass of `phase`. Later tracks are visited by ascending start frame;
/// among all admissible pairs whose later track starts on that frame the
/// one with the smallest (offset, distance, ids) is joined first, and the
/// rest are re-examined against the updated pool.
fn run_phase(
    tracks: Vec<Track>,
    phase: Phase,
    cfg: &CalibrationConfig,
    size: FrameSize,
    log: &mut Vec<JoinDecision>,
) -> Vec<Track> {
    let mut pool: Vec<Option<Track>> = tracks.into_iter().map(Some).collect();
    let mut starts: Vec<usize> = pool.iter().flatten().map(|t| t.start_frame()).collect();
    starts.sort_unstable();
    starts.dedup();

    for s in starts {
        loop {
            let mut best: Option<(usize, usize, JoinDecision)> = None;
            for (bi, b) in pool.iter().enumerate() {
                let Some(b) = b.as_ref().filter(|b| b.start_frame() == s) else {
                    continue;
                };
                for (ai, a) in pool.iter().enumerate() {
                    let Some(a) = a.as_ref() else { continue };
                    let Some(dec) = admissible(phase, a, b, cfg, size) else {
                        continue;
                    };
                    let key = |d: &JoinDecision| (d.gap_frames, d.distance_px, d.earlier_track, d.later_track);
                    let better = best.as_ref().is_none_or(|(_, _, cur)| {
                        key(&dec).partial_cmp(&key(cur)) == Some(std::cmp::Ordering::Less)
                    });
                    if better {
                        best = Some((ai, bi, dec));
                    }
                }
            }
            let Some((ai, bi, dec)) = best else { break };
            let a = pool[ai].take().expect("candidate present");
            let b = pool[bi].take().expect("candidate present");
            pool[ai] = Some(merge(a, b, phase));
            log.push(dec);
        }
    }
    let mut out: Vec<Track> = pool.into_iter().flatten().collect();
    out.sort_by_key(|t| t.id);
    out
}

pub fn phase1_join(tracks: Vec<Track>, cfg: &CalibrationConfig) -> (Vec<Track>, Vec<JoinDecision>) {
    single(tracks, Phase::Fragment, cfg, FrameSize::default())
}

pub fn phase2_fp_fix(tracks: Vec<Track>, cfg: &CalibrationConfig) -> (Vec<Track>, Vec<JoinDecision>) {
    single(tracks, Phase::FalsePositive, cfg, FrameSize::default())
}

pub fn phase3_gap_join(tracks: Vec<Track>, cfg: &CalibrationConfig) -> (Vec<Track>, Vec<JoinDecision>) {
    single(tracks, Phase::Gap, cfg, FrameSize::default())
}

pub fn phase4_border_join(
    tracks: Vec<Track>,
    cfg: &CalibrationConfig,
    size: FrameSize,
) -> (Vec<Track>, Vec<JoinDecision>) {
    single(tracks, Phase::Border, cfg, size)
}

fn single(
    tracks: Vec<Track>,
    phase: Phase,
    cfg: &CalibrationConfig,
    size: FrameSize,
) -> (Vec<Track>, Vec<JoinDecision>) {
    let mut log = Vec::new();
    let out = run_phase(tracks, phase, cfg, size, &mut log);
    (out, log)
}

pub fn prune_short(tracks: Vec<Track>, cfg: &CalibrationConfig) -> Vec<Track> {
    tracks
        .into_iter()
        .filter(|t| t.len() >= cfg.joiner_min_track_points)
        .collect()
}

/// Phases 1 to 4 in order, repeated until a whole round joins nothing.
/// No pruning.
pub fn join_phases(
    mut tracks: Vec<Track>,
    cfg: &CalibrationConfig,
    size: FrameSize,
) -> (Vec<Track>, Vec<JoinDecision>) {
    let mut log = Vec::new();
    loop {
        let before = log.len();
        for phase in Phase::ALL {
            tracks = run_phase(tracks, phase, cfg, size, &mut log);
        }
        if log.len() == before {
            return (tracks, log);
        }
    }
}

/// [`join_phases`] followed by [`prune_short`].
pub fn join_all(tracks: Vec<Track>, cfg: &CalibrationConfig, size: FrameSize) -> (Vec<Track>, Vec<JoinDecision>) {
    let (joined, log) = join_phases(tracks, cfg, size);
    (prune_short(joined, cfg), log)
}
