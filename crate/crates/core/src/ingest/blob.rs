//! Classical bright-blob detector: Gaussian denoising, scale-normalised
//! Laplacian of Gaussian, Otsu (or fixed) thresholding, and 8-connected
//! component labelling with an area filter.
//!
//! Given a stacked input, the per-pixel temporal standard deviation across
//! channels is added to the middle frame so moving objects respond more
//! strongly than static debris.

use serde::{Deserialize, Serialize};

use super::stack::StackedInput;
use crate::error::{Error, Result};
use crate::model::{BoundingBox, Detection, Frame, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    Otsu,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlobDetectorParams {
    pub gaussian_sigma: f64,
    pub log_sigma: f64,
    pub min_area_px: usize,
    pub threshold_mode: ThresholdMode,
    /// Response threshold used when `threshold_mode` is `Fixed`.
    pub fixed_threshold: f64,
    /// Weight of the temporal standard deviation for stacked inputs.
    pub temporal_weight: f64,
}

impl Default for BlobDetectorParams {
    fn default() -> Self {
        BlobDetectorParams {
            gaussian_sigma: 1.0,
            log_sigma: 3.0,
            min_area_px: 5,
            threshold_mode: ThresholdMode::Otsu,
            fixed_threshold: 10.0,
            temporal_weight: 0.5,
        }
    }
}

impl BlobDetectorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gaussian_sigma > 0.0 && self.log_sigma > 0.0) {
            return Err(Error::InvalidArgument("detector sigmas must be > 0".into()));
        }
        if self.min_area_px < 1 {
            return Err(Error::InvalidArgument("min_area_px must be >= 1".into()));
        }
        if !(self.temporal_weight >= 0.0) {
            return Err(Error::InvalidArgument("temporal_weight must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub enum DetectorInput<'a> {
    Single(&'a Frame),
    Stacked(&'a StackedInput),
}

impl<'a> From<&'a Frame> for DetectorInput<'a> {
    fn from(f: &'a Frame) -> Self {
        DetectorInput::Single(f)
    }
}

impl<'a> From<&'a StackedInput> for DetectorInput<'a> {
    fn from(s: &'a StackedInput) -> Self {
        DetectorInput::Stacked(s)
    }
}

/// Dense row-major f64 image.
#[derive(Debug, Clone)]
struct Grid {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Grid {
    fn from_frame(frame: &Frame) -> Self {
        Grid {
            width: frame.width() as usize,
            height: frame.height() as usize,
            data: frame.pixels().iter().map(|&p| p as f64).collect(),
        }
    }

    fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur with edge replication.
fn gaussian_blur(src: &Grid, sigma: f64) -> Grid {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h) = (src.width as isize, src.height as isize);
    let mut tmp = vec![0.0; src.data.len()];
    for y in 0..h {
        let row = &src.data[(y * w) as usize..((y + 1) * w) as usize];
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                let xx = (x + j as isize - r).clamp(0, w - 1);
                acc += kv * row[xx as usize];
            }
            tmp[(y * w + x) as usize] = acc;
        }
    }
    let mut out = vec![0.0; src.data.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                let yy = (y + j as isize - r).clamp(0, h - 1);
                acc += kv * tmp[(yy * w + x) as usize];
            }
            out[(y * w + x) as usize] = acc;
        }
    }
    Grid {
        width: src.width,
        height: src.height,
        data: out,
    }
}

/// `-sigma^2 * laplacian(g)`, clamped at zero so only bright blobs respond.
fn negative_normalized_laplacian(g: &Grid, sigma: f64) -> Grid {
    let (w, h) = (g.width, g.height);
    let scale = sigma * sigma;
    let mut out = vec![0.0; g.data.len()];
    for y in 0..h {
        for x in 0..w {
            let c = g.at(x, y);
            let l = g.at(x.saturating_sub(1), y);
            let r = g.at((x + 1).min(w - 1), y);
            let u = g.at(x, y.saturating_sub(1));
            let d = g.at(x, (y + 1).min(h - 1));
            let lap = l + r + u + d - 4.0 * c;
            out[y * w + x] = (-scale * lap).max(0.0);
        }
    }
    Grid {
        width: w,
        height: h,
        data: out,
    }
}

/// Otsu threshold over the strictly positive values of `values`, using a
/// 256-bin histogram. Returns the upper edge of the selected bin.
pub fn otsu_threshold(values: &[f64]) -> Option<f64> {
    let positive: Vec<f64> = values.iter().copied().filter(|&v| v > 0.0).collect();
    let max = positive.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = positive.iter().copied().fold(f64::INFINITY, f64::min);
    if positive.is_empty() || max <= min {
        return None;
    }
    const BINS: usize = 256;
    let width = (max - min) / BINS as f64;
    let mut hist = [0usize; BINS];
    for v in &positive {
        let b = (((v - min) / width) as usize).min(BINS - 1);
        hist[b] += 1;
    }
    let total = positive.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w_bg, mut sum_bg) = (0.0, 0.0);
    let (mut best, mut best_bin) = (-1.0, 0usize);
    for (t, &c) in hist.iter().enumerate() {
        w_bg += c as f64;
        if w_bg == 0.0 {
            continue;
        }
        let w_fg = total - w_bg;
        if w_fg == 0.0 {
            break;
        }
        sum_bg += t as f64 * c as f64;
        let mean_bg = sum_bg / w_bg;
        let mean_fg = (sum_all - sum_bg) / w_fg;
        let between = w_bg * w_fg * (mean_bg - mean_fg).powi(2);
        if between > best {
            best = between;
            best_bin = t;
        }
    }
    Some(min + (best_bin + 1) as f64 * width)
}

/// Per-pixel standard deviation across the channels of a stack.
fn temporal_std(stack: &StackedInput) -> Vec<f64> {
    let n = stack.channels.len() as f64;
    let len = stack.middle().pixels().len();
    (0..len)
        .map(|i| {
            let mean = stack.channels.iter().map(|c| c.pixels()[i] as f64).sum::<f64>() / n;
            let var = stack
                .channels
                .iter()
                .map(|c| (c.pixels()[i] as f64 - mean).powi(2))
                .sum::<f64>()
                / n;
            var.sqrt()
        })
        .collect()
}

struct Component {
    pixels: Vec<(usize, usize)>,
}

fn label_components(mask: &[bool], width: usize, height: usize) -> Vec<Component> {
    let mut seen = vec![false; mask.len()];
    let mut comps = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(i) = stack.pop() {
            let (x, y) = (i % width, i / width);
            pixels.push((x, y));
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                        continue;
                    }
                    let j = ny as usize * width + nx as usize;
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        comps.push(Component { pixels });
    }
    comps
}

pub fn detect_blobs<'a>(
    input: impl Into<DetectorInput<'a>>,
    params: &BlobDetectorParams,
) -> Result<Vec<Detection>> {
    params.validate()?;
    let input = input.into();
    let (frame, mut base) = match input {
        DetectorInput::Single(f) => (f, Grid::from_frame(f)),
        DetectorInput::Stacked(s) => {
            let mut g = Grid::from_frame(s.middle());
            if s.channels.len() > 1 && params.temporal_weight > 0.0 {
                for (v, sd) in g.data.iter_mut().zip(temporal_std(s)) {
                    *v += params.temporal_weight * sd;
                }
            }
            (s.middle(), g)
        }
    };
    base = gaussian_blur(&base, params.gaussian_sigma);
    let smooth = gaussian_blur(&base, params.log_sigma);
    let response = negative_normalized_laplacian(&smooth, params.log_sigma);

    let peak = response.data.iter().copied().fold(0.0, f64::max);
    if peak < 1e-6 {
        return Ok(Vec::new());
    }
    let threshold = match params.threshold_mode {
        ThresholdMode::Otsu => match otsu_threshold(&response.data) {
            Some(t) => t,
            None => return Ok(Vec::new()),
        },
        ThresholdMode::Fixed => params.fixed_threshold,
    };
    let mask: Vec<bool> = response.data.iter().map(|&v| v > threshold).collect();
    let mut detections = Vec::new();
    for comp in label_components(&mask, response.width, response.height) {
        if comp.pixels.len() < params.min_area_px {
            continue;
        }
        let (mut sw, mut sx, mut sy, mut peak) = (0.0, 0.0, 0.0, 0.0f64);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for &(x, y) in &comp.pixels {
            let r = response.at(x, y);
            sw += r;
            sx += r * x as f64;
            sy += r * y as f64;
            peak = peak.max(r);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        let center = Point::new(sx / sw, sy / sw);
        let half_w = (center.x - x0 as f64).max(x1 as f64 - center.x) + params.log_sigma;
        let half_h = (center.y - y0 as f64).max(y1 as f64 - center.y) + params.log_sigma;
        let bbox = BoundingBox::from_center(center, 2.0 * half_w, 2.0 * half_h)?;
        let score = if threshold > 0.0 {
            (1.0 - threshold / peak).clamp(0.0, 1.0)
        } else {
            1.0
        };
        detections.push(Detection::new(frame.index, bbox, score)?);
    }
    Ok(detections)
}
