//! Adaptive correlation filter (MOSSE-style) over log-transformed,
//! mean-normalised grayscale patches with a Hann taper.
//!
//! The filter is kept as separate numerator and denominator accumulators in
//! the frequency domain; each update blends the latest patch into both at
//! `learning_rate`.

use rustfft::num_complex::Complex64;
use rustfft::FftDirection;
use serde::{Deserialize, Serialize};

use super::fft2d::fft2d;
use super::{SingleObjectTracker, TrackerFactory};
use crate::error::{Error, Result};
use crate::model::{BoundingBox, Frame, FrameSize, Point};

/// Half-width of the window excluded around the peak when measuring the
/// sidelobe for PSR.
const PSR_EXCLUSION: isize = 5;
const MIN_PATCH: usize = 8;
/// Shifts below this many pixels skip the refinement pass.
const REFINE_MIN_SHIFT: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrelationFilterParams {
    pub learning_rate: f64,
    pub regularizer: f64,
    /// Search patch side as a multiple of the box side.
    pub search_scale: f64,
    /// Standard deviation of the desired Gaussian response, in pixels.
    pub target_sigma: f64,
    /// Width of the Gaussian mask applied to training patches, as a
    /// fraction of the box side; 0 disables it. The mask keeps neighbouring
    /// objects inside the search patch out of the learned template.
    pub train_mask: f64,
}

impl Default for CorrelationFilterParams {
    fn default() -> Self {
        CorrelationFilterParams {
            learning_rate: 0.125,
            regularizer: 30.0,
            search_scale: 2.5,
            target_sigma: 2.0,
            train_mask: 0.0,
        }
    }
}

impl CorrelationFilterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidArgument("learning_rate must lie in (0, 1]".into()));
        }
        if !(self.regularizer > 0.0) {
            return Err(Error::InvalidArgument("regularizer must be > 0".into()));
        }
        if !(self.search_scale > 1.0) {
            return Err(Error::InvalidArgument("search_scale must be > 1".into()));
        }
        if !(self.target_sigma > 0.0) {
            return Err(Error::InvalidArgument("target_sigma must be > 0".into()));
        }
        if !(self.train_mask >= 0.0) {
            return Err(Error::InvalidArgument("train_mask must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CorrelationTracker {
    params: CorrelationFilterParams,
    frame_size: FrameSize,
    bbox: BoundingBox,
    patch_w: usize,
    patch_h: usize,
    window: Vec<f64>,
    train_window: Vec<f64>,
    target: Vec<Complex64>,
    numerator: Vec<Complex64>,
    denominator: Vec<Complex64>,
    init_psr: f64,
    last_psr: f64,
}

fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Bilinear sample with zero outside the frame.
fn sample(frame: &Frame, x: f64, y: f64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (w, h) = (frame.width() as i64, frame.height() as i64);
    let px = |xi: i64, yi: i64| -> f64 {
        if xi < 0 || yi < 0 || xi >= w || yi >= h {
            0.0
        } else {
            frame.get(xi as u32, yi as u32) as f64
        }
    };
    let (xi, yi) = (x0 as i64, y0 as i64);
    let top = px(xi, yi) * (1.0 - fx) + px(xi + 1, yi) * fx;
    let bottom = px(xi, yi + 1) * (1.0 - fx) + px(xi + 1, yi + 1) * fx;
    top * (1.0 - fy) + bottom * fy
}

impl CorrelationTracker {
    pub fn init(frame: &Frame, bbox: BoundingBox, params: &CorrelationFilterParams) -> Result<Self> {
        params.validate()?;
        if bbox.width() < 2.0 || bbox.height() < 2.0 {
            return Err(Error::DegenerateBox {
                width: bbox.width(),
                height: bbox.height(),
            });
        }
        if !bbox.intersects_frame(frame.size()) {
            return Err(Error::BoxOutsideFrame);
        }
        let patch_w = ((bbox.width() * params.search_scale).round() as usize).max(MIN_PATCH);
        let patch_h = ((bbox.height() * params.search_scale).round() as usize).max(MIN_PATCH);
        let (wx, wy) = (hann(patch_w), hann(patch_h));
        let window = (0..patch_h)
            .flat_map(|y| {
                let vy = wy[y];
                wx.iter().map(move |&vx| vx * vy)
            })
            .collect::<Vec<f64>>();

        let (cx, cy) = ((patch_w / 2) as f64, (patch_h / 2) as f64);
        let train_window = if params.train_mask > 0.0 {
            let (sx, sy) = (params.train_mask * bbox.width(), params.train_mask * bbox.height());
            window
                .iter()
                .enumerate()
                .map(|(i, w)| {
                    let (x, y) = ((i % patch_w) as f64 - cx, (i / patch_w) as f64 - cy);
                    w * (-0.5 * ((x / sx).powi(2) + (y / sy).powi(2))).exp()
                })
                .collect()
        } else {
            window.clone()
        };
        let s2 = 2.0 * params.target_sigma * params.target_sigma;
        let mut target: Vec<Complex64> = (0..patch_w * patch_h)
            .map(|i| {
                let (x, y) = ((i % patch_w) as f64, (i / patch_w) as f64);
                Complex64::new((-((x - cx).powi(2) + (y - cy).powi(2)) / s2).exp(), 0.0)
            })
            .collect();
        fft2d(&mut target, patch_w, patch_h, FftDirection::Forward);

        let mut tracker = CorrelationTracker {
            params: params.clone(),
            frame_size: frame.size(),
            bbox,
            patch_w,
            patch_h,
            window,
            train_window,
            target,
            numerator: Vec::new(),
            denominator: Vec::new(),
            init_psr: 0.0,
            last_psr: 0.0,
        };
        let spectrum = tracker.patch_spectrum(frame, bbox.center(), &tracker.train_window);
        tracker.numerator = tracker
            .target
            .iter()
            .zip(&spectrum)
            .map(|(g, f)| g * f.conj())
            .collect();
        tracker.denominator = spectrum.iter().map(|f| f * f.conj()).collect();
        let response = tracker.response(&tracker.patch_spectrum(frame, bbox.center(), &tracker.window));
        let (peak, _) = argmax(&response);
        tracker.init_psr = psr(&response, patch_w, patch_h, peak);
        tracker.last_psr = tracker.init_psr;
        Ok(tracker)
    }

    pub fn last_psr(&self) -> f64 {
        self.last_psr
    }

    pub fn init_psr(&self) -> f64 {
        self.init_psr
    }

    /// Search region in frame coordinates around the current box.
    pub fn search_region(&self) -> BoundingBox {
        let c = self.bbox.center();
        BoundingBox {
            x_min: c.x - (self.patch_w / 2) as f64,
            y_min: c.y - (self.patch_h / 2) as f64,
            x_max: c.x + (self.patch_w - self.patch_w / 2) as f64,
            y_max: c.y + (self.patch_h - self.patch_h / 2) as f64,
        }
    }

    /// Response of the current filter to `frame` around the current box.
    pub fn response_map(&self, frame: &Frame) -> Vec<f64> {
        let spectrum = self.patch_spectrum(frame, self.bbox.center(), &self.window);
        self.response(&spectrum)
    }

    pub fn patch_dims(&self) -> (usize, usize) {
        (self.patch_w, self.patch_h)
    }

    fn patch_spectrum(&self, frame: &Frame, center: Point, window: &[f64]) -> Vec<Complex64> {
        let (pw, ph) = (self.patch_w, self.patch_h);
        let (ox, oy) = (center.x - (pw / 2) as f64, center.y - (ph / 2) as f64);
        let mut values: Vec<f64> = (0..pw * ph)
            .map(|i| {
                let v = sample(frame, ox + (i % pw) as f64, oy + (i / pw) as f64);
                (1.0 + v).ln()
            })
            .collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        values.iter_mut().for_each(|v| *v -= mean);
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-9 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        let mut spectrum: Vec<Complex64> = values
            .iter()
            .zip(window)
            .map(|(v, w)| Complex64::new(v * w, 0.0))
            .collect();
        fft2d(&mut spectrum, pw, ph, FftDirection::Forward);
        spectrum
    }

    fn response(&self, spectrum: &[Complex64]) -> Vec<f64> {
        let lambda = self.params.regularizer;
        let mut g: Vec<Complex64> = spectrum
            .iter()
            .zip(self.numerator.iter().zip(&self.denominator))
            .map(|(f, (a, b))| f * a / (b + lambda))
            .collect();
        fft2d(&mut g, self.patch_w, self.patch_h, FftDirection::Inverse);
        let n = (self.patch_w * self.patch_h) as f64;
        g.iter().map(|c| c.re / n).collect()
    }

    /// Displacement of the response peak from the patch center around
    /// `center`, and the PSR of that response.
    fn locate(&self, frame: &Frame, center: Point) -> (f64, f64, f64) {
        let (pw, ph) = (self.patch_w, self.patch_h);
        let response = self.response(&self.patch_spectrum(frame, center, &self.window));
        let (peak, peak_value) = argmax(&response);
        let floor = response.iter().copied().fold(f64::INFINITY, f64::min);
        if peak_value - floor < 1e-12 {
            // Featureless patch: no evidence of motion.
            return (0.0, 0.0, 0.0);
        }
        let (px, py) = (peak % pw, peak / pw);
        let at = |x: usize, y: usize| response[y * pw + x];
        let dx = px as f64 - (pw / 2) as f64
            + parabolic_offset(at((px + pw - 1) % pw, py), at(px, py), at((px + 1) % pw, py));
        let dy = py as f64 - (ph / 2) as f64
            + parabolic_offset(at(px, (py + ph - 1) % ph), at(px, py), at(px, (py + 1) % ph));
        (dx, dy, psr(&response, pw, ph, peak))
    }

    pub fn update(&mut self, frame: &Frame) -> Result<BoundingBox> {
        if frame.size() != self.frame_size {
            return Err(Error::DimensionMismatch {
                expected: (self.frame_size.width, self.frame_size.height),
                found: (frame.width(), frame.height()),
                context: "correlation tracker update".into(),
            });
        }
        let (pw, ph) = (self.patch_w, self.patch_h);
        let center = self.bbox.center();
        let (mut dx, mut dy, psr_value) = self.locate(frame, center);
        self.last_psr = psr_value;
        // The taper pulls displaced targets towards the patch center; a
        // second look from the first estimate removes most of that bias.
        if dx.hypot(dy) > REFINE_MIN_SHIFT {
            let (rx, ry, _) = self.locate(frame, Point::new(center.x + dx, center.y + dy));
            dx += rx;
            dy += ry;
        }
        let (dx, dy) = (
            dx.clamp(-((pw / 2) as f64), (pw - pw / 2) as f64),
            dy.clamp(-((ph / 2) as f64), (ph - ph / 2) as f64),
        );

        let new_center = Point::new(center.x + dx, center.y + dy);
        self.bbox = self.bbox.recentered(new_center);

        let eta = self.params.learning_rate;
        let spectrum = self.patch_spectrum(frame, new_center, &self.train_window);
        for (((a, b), f), g) in self
            .numerator
            .iter_mut()
            .zip(self.denominator.iter_mut())
            .zip(&spectrum)
            .zip(&self.target)
        {
            *a = g * f.conj() * eta + *a * (1.0 - eta);
            *b = f * f.conj() * eta + *b * (1.0 - eta);
        }
        Ok(self.bbox)
    }
}

fn argmax(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best })
}

/// Vertex offset of the parabola through three samples, in [-0.5, 0.5].
fn parabolic_offset(left: f64, center: f64, right: f64) -> f64 {
    let denom = left - 2.0 * center + right;
    if denom >= 0.0 {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}

/// Peak-to-sidelobe ratio with a square exclusion zone around the peak.
fn psr(response: &[f64], w: usize, h: usize, peak: usize) -> f64 {
    let (px, py) = ((peak % w) as isize, (peak / w) as isize);
    let peak_value = response[peak];
    let (mut n, mut sum, mut sum_sq) = (0usize, 0.0, 0.0);
    for (i, &v) in response.iter().enumerate() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        let dx = (x - px).rem_euclid(w as isize);
        let dy = (y - py).rem_euclid(h as isize);
        let near_x = dx <= PSR_EXCLUSION || dx >= w as isize - PSR_EXCLUSION;
        let near_y = dy <= PSR_EXCLUSION || dy >= h as isize - PSR_EXCLUSION;
        if near_x && near_y {
            continue;
        }
        n += 1;
        sum += v;
        sum_sq += v * v;
    }
    if n < 2 {
        return 0.0;
    }
    let mean = sum / n as f64;
    let std = (sum_sq / n as f64 - mean * mean).max(0.0).sqrt();
    if std < 1e-12 {
        return 0.0;
    }
    (peak_value - mean) / std
}

impl SingleObjectTracker for CorrelationTracker {
    fn bbox(&self) -> BoundingBox {
        self.bbox
    }

    fn update(&mut self, frame: &Frame) -> Result<BoundingBox> {
        CorrelationTracker::update(self, frame)
    }

    fn confidence(&self) -> Option<f64> {
        Some(self.last_psr)
    }
}

impl TrackerFactory for CorrelationFilterParams {
    type Tracker = CorrelationTracker;

    fn init(&self, frame: &Frame, bbox: BoundingBox) -> Result<CorrelationTracker> {
        CorrelationTracker::init(frame, bbox, self)
    }
}
