use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Metrics;
use crate::config::CalibrationConfig;
use crate::model::{BoundingBox, Detection};

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        (inter / union).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Ranks detections by descending score; ties keep input order.
fn ranked(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    order
}

/// Greedy per-frame matching. Detections are visited by descending score;
/// each takes its best still-unmatched ground truth on the same frame if
/// the IoU reaches `threshold`. Returns one flag per detection, in input
/// order.
pub fn match_detections(dets: &[Detection], gts: &[Detection], threshold: f64) -> Vec<bool> {
    let mut gt_by_frame: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, g) in gts.iter().enumerate() {
        gt_by_frame.entry(g.frame_index).or_default().push(i);
    }
    let mut taken = vec![false; gts.len()];
    let mut tp = vec![false; dets.len()];
    for di in ranked(dets) {
        let d = &dets[di];
        let Some(cands) = gt_by_frame.get(&d.frame_index) else {
            continue;
        };
        let mut best: Option<(usize, f64)> = None;
        for &gi in cands {
            if taken[gi] {
                continue;
            }
            let v = iou(&d.bbox, &gts[gi].bbox);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((gi, v));
            }
        }
        if let Some((gi, v)) = best {
            if v >= threshold {
                taken[gi] = true;
                tp[di] = true;
            }
        }
    }
    tp
}

/// Counts and ratios over detections scoring at least the configured
/// threshold.
pub fn eval_detections(dets: &[Detection], gts: &[Detection], cfg: &CalibrationConfig) -> Metrics {
    let kept: Vec<Detection> = dets
        .iter()
        .filter(|d| d.score >= cfg.eval_score_threshold)
        .copied()
        .collect();
    let flags = match_detections(&kept, gts, cfg.eval_iou_threshold);
    let tp = flags.iter().filter(|&&f| f).count();
    Metrics::from_counts(tp, kept.len() - tp, gts.len() - tp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApMode {
    /// Sum of precision at each true positive, over the annotation count.
    #[default]
    Standard,
    /// Sum over every ranked detection of precision times recall, over the
    /// annotation count.
    LiteralProduct,
}

/// AP over all detections regardless of score, ranked by descending score.
pub fn average_precision(dets: &[Detection], gts: &[Detection], cfg: &CalibrationConfig, mode: ApMode) -> f64 {
    if gts.is_empty() {
        return 0.0;
    }
    let flags = match_detections(dets, gts, cfg.eval_iou_threshold);
    let n = gts.len() as f64;
    let mut tp = 0usize;
    let mut sum = 0.0;
    for (k, di) in ranked(dets).into_iter().enumerate() {
        if flags[di] {
            tp += 1;
        }
        let precision = tp as f64 / (k + 1) as f64;
        sum += match mode {
            ApMode::Standard if flags[di] => precision,
            ApMode::Standard => 0.0,
            ApMode::LiteralProduct => precision * tp as f64 / n,
        };
    }
    (sum / n).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvalReport {
    #[serde(flatten)]
    pub metrics: Metrics,
    pub ap: f64,
}

pub fn detection_report(
    dets: &[Detection],
    gts: &[Detection],
    cfg: &CalibrationConfig,
    mode: ApMode,
) -> DetectionEvalReport {
    DetectionEvalReport {
        metrics: eval_detections(dets, gts, cfg),
        ap: average_precision(dets, gts, cfg, mode),
    }
}
