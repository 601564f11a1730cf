//! Calibration constants: association gates, joiner thresholds, evaluation
//! gates and motility cut-offs. Every stage reads its thresholds from here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub microns_per_pixel: f64,
    pub fps: f64,

    /// Maximum distance between a propagated track and a detection (inclusive).
    pub association_radius_px: f64,

    pub joiner_speed_diff_px: f64,
    pub joiner_phase1_slack_px: f64,
    pub joiner_phase2_radius_px: f64,
    pub joiner_phase3_slack_px: f64,
    pub joiner_phase3_max_offset_frames: usize,
    pub joiner_phase4_speed_px: f64,
    pub joiner_phase4_window_frames: usize,
    pub joiner_border_margin_px: f64,
    pub joiner_min_track_points: usize,
    /// Tracks with at least this many points count as "long" in the joiner.
    pub joiner_long_track_min_points: usize,

    pub eval_iou_threshold: f64,
    pub eval_score_threshold: f64,
    pub eval_endpoint_radius_px: f64,
    pub eval_mean_dist_px: f64,
    pub eval_max_nonoverlap_frames: usize,

    pub mot_mvv_um_s: f64,
    pub mot_lvv_um_s: f64,
    pub mot_str_threshold_pct: f64,
    pub mot_immotile_um_s: f64,
    pub mot_vap_window_frames: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            microns_per_pixel: 0.833,
            fps: 50.0,
            association_radius_px: 15.0,
            joiner_speed_diff_px: 10.0,
            joiner_phase1_slack_px: 10.0,
            joiner_phase2_radius_px: 10.0,
            joiner_phase3_slack_px: 5.0,
            joiner_phase3_max_offset_frames: 5,
            joiner_phase4_speed_px: 5.0,
            joiner_phase4_window_frames: 5,
            joiner_border_margin_px: 20.0,
            joiner_min_track_points: 9,
            joiner_long_track_min_points: 4,
            eval_iou_threshold: 0.5,
            eval_score_threshold: 0.5,
            eval_endpoint_radius_px: 25.0,
            eval_mean_dist_px: 15.0,
            eval_max_nonoverlap_frames: 5,
            mot_mvv_um_s: 50.0,
            mot_lvv_um_s: 30.0,
            mot_str_threshold_pct: 70.0,
            mot_immotile_um_s: 8.33,
            mot_vap_window_frames: 5,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("microns_per_pixel", self.microns_per_pixel),
            ("fps", self.fps),
            ("association_radius_px", self.association_radius_px),
            ("joiner_speed_diff_px", self.joiner_speed_diff_px),
            ("joiner_phase1_slack_px", self.joiner_phase1_slack_px),
            ("joiner_phase2_radius_px", self.joiner_phase2_radius_px),
            ("joiner_phase3_slack_px", self.joiner_phase3_slack_px),
            ("joiner_phase4_speed_px", self.joiner_phase4_speed_px),
            ("joiner_border_margin_px", self.joiner_border_margin_px),
            ("eval_iou_threshold", self.eval_iou_threshold),
            ("eval_endpoint_radius_px", self.eval_endpoint_radius_px),
            ("eval_mean_dist_px", self.eval_mean_dist_px),
            ("mot_mvv_um_s", self.mot_mvv_um_s),
            ("mot_lvv_um_s", self.mot_lvv_um_s),
            ("mot_str_threshold_pct", self.mot_str_threshold_pct),
            ("mot_immotile_um_s", self.mot_immotile_um_s),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be strictly positive, got {value}"
                )));
            }
        }
        let counts = [
            ("joiner_phase3_max_offset_frames", self.joiner_phase3_max_offset_frames),
            ("joiner_phase4_window_frames", self.joiner_phase4_window_frames),
            ("joiner_min_track_points", self.joiner_min_track_points),
            ("joiner_long_track_min_points", self.joiner_long_track_min_points),
            ("eval_max_nonoverlap_frames", self.eval_max_nonoverlap_frames),
            ("mot_vap_window_frames", self.mot_vap_window_frames),
        ];
        for (name, value) in counts {
            if value == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        if self.eval_iou_threshold > 1.0 {
            return Err(Error::InvalidConfig("eval_iou_threshold must be <= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.eval_score_threshold) {
            return Err(Error::InvalidConfig(
                "eval_score_threshold must lie in [0, 1]".into(),
            ));
        }
        if self.mot_lvv_um_s >= self.mot_mvv_um_s {
            return Err(Error::InvalidConfig(
                "mot_lvv_um_s must be below mot_mvv_um_s".into(),
            ));
        }
        if self.mot_immotile_um_s >= self.mot_lvv_um_s {
            return Err(Error::InvalidConfig(
                "mot_immotile_um_s must be below mot_lvv_um_s".into(),
            ));
        }
        Ok(())
    }

    /// Frame period in seconds.
    pub fn frame_interval_s(&self) -> f64 {
        1.0 / self.fps
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_hold_the_published_constants() {
        let c = CalibrationConfig::default();
        assert_eq!(c.microns_per_pixel, 0.833);
        assert_eq!(c.fps, 50.0);
        assert_eq!(c.association_radius_px, 15.0);
        assert_eq!(c.joiner_speed_diff_px, 10.0);
        assert_eq!(c.joiner_phase1_slack_px, 10.0);
        assert_eq!(c.joiner_phase2_radius_px, 10.0);
        assert_eq!(c.joiner_phase3_slack_px, 5.0);
        assert_eq!(c.joiner_phase3_max_offset_frames, 5);
        assert_eq!(c.joiner_phase4_speed_px, 5.0);
        assert_eq!(c.joiner_phase4_window_frames, 5);
        assert_eq!(c.joiner_min_track_points, 9);
        assert_eq!(c.eval_iou_threshold, 0.5);
        assert_eq!(c.eval_endpoint_radius_px, 25.0);
        assert_eq!(c.eval_mean_dist_px, 15.0);
        assert_eq!(c.eval_max_nonoverlap_frames, 5);
        assert_eq!(c.mot_mvv_um_s, 50.0);
        assert_eq!(c.mot_lvv_um_s, 30.0);
        assert_eq!(c.mot_str_threshold_pct, 70.0);
        assert_eq!(c.mot_immotile_um_s, 8.33);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_inverted_cutoffs() {
        let c = CalibrationConfig {
            mot_lvv_um_s: 60.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = CalibrationConfig {
            mot_immotile_um_s: 40.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = CalibrationConfig {
            association_radius_px: 0.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_rejects_unknown_keys() {
        let err = serde_json::from_str::<CalibrationConfig>(r#"{"bogus": 1}"#);
        assert!(err.is_err());
        let partial: CalibrationConfig =
            serde_json::from_str(r#"{"fps": 25.0}"#).unwrap();
        assert_eq!(partial.fps, 25.0);
        assert_eq!(partial.microns_per_pixel, 0.833);
    }
}
