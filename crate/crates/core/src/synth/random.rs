use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Edge, MotionModel, ScenarioSpec};
use crate::error::{Error, Result};
use crate::model::{FrameSize, Point};

const MAX_ATTEMPTS: usize = 20_000;

/// Parameters for drawing a random scenario.
///
/// Objects are placed by rejection sampling: every pair of objects keeps at
/// least `min_separation_px` between centers on every frame, non-border
/// objects stay `margin_px` inside the frame, and border objects keep their
/// exit and re-entry points `border_spacing_px` away from those of other
/// border objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomScenario {
    pub seed: u64,
    pub frames: usize,
    pub width: u32,
    pub height: u32,
    /// Total object count, including collision pairs and border objects.
    pub count: usize,
    pub speed_min: f64,
    pub speed_max: f64,
    pub stationary_fraction: f64,
    pub curvilinear_fraction: f64,
    /// Objects that leave the frame and come back within five frames.
    pub border_objects: usize,
    /// Pairs of linear objects passing close to each other mid-video.
    pub collision_pairs: usize,
    pub min_separation_px: f64,
    pub border_spacing_px: f64,
    pub margin_px: f64,
    pub blob_sigma: f64,
    pub blob_amplitude: f64,
    pub background: f64,
    pub noise_sigma: f64,
}

impl Default for RandomScenario {
    fn default() -> Self {
        let base = ScenarioSpec::default();
        RandomScenario {
            seed: 0,
            frames: base.frames,
            width: base.width,
            height: base.height,
            count: 20,
            speed_min: 0.0,
            speed_max: 8.0,
            stationary_fraction: 0.1,
            curvilinear_fraction: 0.3,
            border_objects: 2,
            collision_pairs: 2,
            min_separation_px: 12.0,
            border_spacing_px: 120.0,
            margin_px: 25.0,
            blob_sigma: base.blob_sigma,
            blob_amplitude: base.blob_amplitude,
            background: base.background,
            noise_sigma: base.noise_sigma,
        }
    }
}

struct Placed {
    path: Vec<Point>,
    border_ends: Option<[Point; 2]>,
}

impl RandomScenario {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(0.0..=self.speed_max).contains(&self.speed_min) || !self.speed_max.is_finite() {
            return bad("speed range must satisfy 0 <= speed_min <= speed_max");
        }
        if !(0.0..=1.0).contains(&self.stationary_fraction)
            || !(0.0..=1.0).contains(&self.curvilinear_fraction)
        {
            return bad("fractions must lie in [0, 1]");
        }
        if 2 * self.collision_pairs + self.border_objects > self.count {
            return bad("collision pairs and border objects exceed the object count");
        }
        if self.border_objects > 0 && self.frames < 14 {
            return bad("border objects need at least 14 frames");
        }
        if self.collision_pairs > 0 && self.speed_max < 2.0 {
            return bad("collision pairs need speed_max >= 2");
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<ScenarioSpec> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let size = FrameSize::new(self.width, self.height);
        let mut placed: Vec<Placed> = Vec::new();
        let mut objects = Vec::with_capacity(self.count);

        for _ in 0..self.collision_pairs {
            let pair = self.retry(|| {
                let (a, b) = self.sample_pair(&mut rng)?;
                let pa = self.accept(&a, size, &placed)?;
                let pb = self.accept(&b, size, &placed)?;
                Some(([a, b], [pa, pb]))
            })?;
            let (models, paths) = pair;
            objects.extend(models);
            placed.extend(paths);
        }
        for _ in 0..self.border_objects {
            let (m, p) = self.retry(|| {
                let m = self.sample_border(&mut rng, size)?;
                let p = self.accept(&m, size, &placed)?;
                Some((m, p))
            })?;
            objects.push(m);
            placed.push(p);
        }
        while objects.len() < self.count {
            let (m, p) = self.retry(|| {
                let m = self.sample_free(&mut rng, size);
                let p = self.accept(&m, size, &placed)?;
                Some((m, p))
            })?;
            objects.push(m);
            placed.push(p);
        }

        Ok(ScenarioSpec {
            seed: self.seed,
            frames: self.frames,
            width: self.width,
            height: self.height,
            blob_sigma: self.blob_sigma,
            blob_amplitude: self.blob_amplitude,
            background: self.background,
            noise_sigma: self.noise_sigma,
            objects,
        })
    }

    fn retry<T>(&self, mut f: impl FnMut() -> Option<T>) -> Result<T> {
        (0..MAX_ATTEMPTS).find_map(|_| f()).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "could not place {} objects with the requested separation",
                self.count
            ))
        })
    }

    fn interior(&self, rng: &mut ChaCha8Rng, size: FrameSize) -> Point {
        let m = self.margin_px;
        Point::new(
            rng.random_range(m..=(size.width as f64 - 1.0 - m).max(m)),
            rng.random_range(m..=(size.height as f64 - 1.0 - m).max(m)),
        )
    }

    fn heading(speed: f64, rng: &mut ChaCha8Rng) -> Point {
        let a = rng.random_range(0.0..std::f64::consts::TAU);
        Point::new(speed * a.cos(), speed * a.sin())
    }

    fn speed(&self, rng: &mut ChaCha8Rng) -> f64 {
        rng.random_range(self.speed_min..=self.speed_max)
    }

    fn sample_free(&self, rng: &mut ChaCha8Rng, size: FrameSize) -> MotionModel {
        let start = self.interior(rng, size);
        let u: f64 = rng.random();
        if u < self.stationary_fraction {
            MotionModel::Stationary { at: start }
        } else if u < self.stationary_fraction + self.curvilinear_fraction {
            let velocity = Self::heading(self.speed(rng) * 0.7, rng);
            MotionModel::Curvilinear {
                start,
                velocity,
                amplitude: rng.random_range(1.0..=5.0),
                period: rng.random_range(8.0..=16.0),
            }
        } else {
            MotionModel::Linear {
                start,
                velocity: Self::heading(self.speed(rng), rng),
            }
        }
    }

    /// Two linear objects whose closest approach, at mid-video, is between
    /// `min_separation_px` and 4 px more.
    fn sample_pair(&self, rng: &mut ChaCha8Rng) -> Option<(MotionModel, MotionModel)> {
        let size = FrameSize::new(self.width, self.height);
        let lo = self.speed_min.max(2.0);
        let va = Self::heading(rng.random_range(lo..=self.speed_max), rng);
        let vb = Self::heading(rng.random_range(lo..=self.speed_max), rng);
        let rel = Point::new(va.x - vb.x, va.y - vb.y);
        let rn = rel.x.hypot(rel.y);
        if rn < 1.0 {
            return None;
        }
        let n = Point::new(-rel.y / rn, rel.x / rn);
        let sep = rng.random_range(self.min_separation_px..=self.min_separation_px + 4.0);
        let mid = rng.random_range(self.frames as f64 * 0.25..=self.frames as f64 * 0.75).round();
        let c = self.interior(rng, size);
        let start = |side: f64, v: Point| {
            Point::new(
                c.x + side * n.x * sep / 2.0 - v.x * mid,
                c.y + side * n.y * sep / 2.0 - v.y * mid,
            )
        };
        Some((
            MotionModel::Linear {
                start: start(1.0, va),
                velocity: va,
            },
            MotionModel::Linear {
                start: start(-1.0, vb),
                velocity: vb,
            },
        ))
    }

    fn sample_border(&self, rng: &mut ChaCha8Rng, size: FrameSize) -> Option<MotionModel> {
        let edge = match rng.random_range(0..4) {
            0 => Edge::Left,
            1 => Edge::Right,
            2 => Edge::Top,
            _ => Edge::Bottom,
        };
        let k: usize = rng.random_range(2..=5);
        let exit_frame = rng.random_range(4..=self.frames - 5 - k);
        let inset = rng.random_range(0.5..=2.0);
        let inward_hi: f64 = self.speed_max.min(5.0);
        let inward_speed = rng.random_range(inset + 1.0..=inward_hi.max(inset + 1.0));
        // Keeps the exit-to-re-entry distance within 5 px per absent frame.
        let along_max = 5.0 * (k - 1) as f64 / k as f64;
        let along_speed = rng.random_range(-along_max..=along_max);
        if along_speed.hypot(inward_speed) > self.speed_max {
            return None;
        }
        let along_len = match edge {
            Edge::Left | Edge::Right => size.height,
            Edge::Top | Edge::Bottom => size.width,
        } as f64;
        let m = self.margin_px;
        Some(MotionModel::BorderExitReentry {
            edge,
            along_start: rng.random_range(m..=along_len - 1.0 - m),
            along_speed,
            inward_speed,
            inset,
            exit_frame,
            reentry_frame: exit_frame + k,
        })
    }

    /// Checks the candidate against the placement rules and returns its path.
    fn accept(&self, model: &MotionModel, size: FrameSize, placed: &[Placed]) -> Option<Placed> {
        let path: Vec<Point> = (0..self.frames).map(|t| model.position(t, size)).collect();
        let (w, h) = (size.width as f64 - 1.0, size.height as f64 - 1.0);
        let m = self.margin_px;
        let max_step = path.windows(2).map(|p| p[0].distance(&p[1])).fold(0.0, f64::max);
        if max_step > self.speed_max + 1e-9 {
            return None;
        }
        let border_ends = match *model {
            MotionModel::BorderExitReentry {
                edge,
                exit_frame,
                reentry_frame,
                ..
            } => {
                let along_ok = path.iter().all(|p| match edge {
                    Edge::Left | Edge::Right => (m..=h - m).contains(&p.y),
                    Edge::Top | Edge::Bottom => (m..=w - m).contains(&p.x),
                });
                let depth_ok = path.iter().all(|p| match edge {
                    Edge::Left | Edge::Right => p.x > -m && p.x < w + m,
                    Edge::Top | Edge::Bottom => p.y > -m && p.y < h + m,
                });
                if !along_ok || !depth_ok {
                    return None;
                }
                Some([path[exit_frame], path[reentry_frame]])
            }
            _ => {
                if !path
                    .iter()
                    .all(|p| (m..=w - m).contains(&p.x) && (m..=h - m).contains(&p.y))
                {
                    return None;
                }
                None
            }
        };
        for other in placed {
            if path
                .iter()
                .zip(&other.path)
                .any(|(a, b)| a.distance(b) < self.min_separation_px)
            {
                return None;
            }
            if let (Some(mine), Some(theirs)) = (&border_ends, &other.border_ends) {
                let close = mine
                    .iter()
                    .any(|a| theirs.iter().any(|b| a.distance(b) < self.border_spacing_px));
                if close {
                    return None;
                }
            }
        }
        Some(Placed { path, border_ends })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::is_visible;

    #[test]
    fn respects_placement_rules() {
        for seed in 0..5 {
            let r = RandomScenario {
                seed,
                count: 95,
                ..Default::default()
            };
            let spec = r.generate().unwrap();
            assert_eq!(spec.objects.len(), 95);
            let size = spec.frame_size();
            let paths: Vec<Vec<Point>> = spec
                .objects
                .iter()
                .map(|m| (0..spec.frames).map(|t| m.position(t, size)).collect())
                .collect();
            for (i, a) in paths.iter().enumerate() {
                for s in a.windows(2) {
                    assert!(s[0].distance(&s[1]) <= 8.0 + 1e-9);
                }
                for b in &paths[i + 1..] {
                    assert!(a.iter().zip(b).all(|(p, q)| p.distance(q) >= 12.0));
                }
            }
            let hidden = paths
                .iter()
                .filter(|p| p.iter().any(|q| !is_visible(*q, size)))
                .count();
            assert_eq!(hidden, r.border_objects);
        }
    }

    #[test]
    fn collision_pairs_come_close() {
        let spec = RandomScenario {
            seed: 9,
            count: 4,
            collision_pairs: 2,
            border_objects: 0,
            ..Default::default()
        }
        .generate()
        .unwrap();
        let size = spec.frame_size();
        for pair in spec.objects.chunks(2) {
            let closest = (0..spec.frames)
                .map(|t| pair[0].position(t, size).distance(&pair[1].position(t, size)))
                .fold(f64::INFINITY, f64::min);
            assert!((12.0..=16.0 + 1e-9).contains(&closest), "closest {closest}");
        }
    }

    #[test]
    fn rejects_impossible_requests() {
        let r = RandomScenario {
            count: 3,
            collision_pairs: 2,
            ..Default::default()
        };
        assert!(r.generate().is_err());
    }
}
