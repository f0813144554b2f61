//! Deterministic synthetic test videos.
//!
//! Content is a procedural pattern over a bounded canvas that extends one
//! frame size beyond each edge; sampling outside the canvas clamps to its
//! border. Frame `k` shows the canvas shifted by the motion offset of `k`,
//! plus optional Gaussian sensor noise, rounded to integers.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::video::{Fps, Frame, Video};
use crate::{invalid, Error, Result, WINDOW_FRAMES};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Pattern {
    Checker { cell: u32 },
    GradientBlobs,
    TexturedNoise,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Motion {
    Static,
    /// Whole pixels per frame.
    Translate {
        dx: i32,
        dy: i32,
    },
    /// Horizontal sinusoid, rounded to whole pixels.
    Oscillate {
        amplitude: f64,
        period: f64,
    },
}

impl Motion {
    /// Content offset of frame `k` relative to frame 0.
    pub fn offset(&self, k: usize) -> (i64, i64) {
        match *self {
            Motion::Static => (0, 0),
            Motion::Translate { dx, dy } => (dx as i64 * k as i64, dy as i64 * k as i64),
            Motion::Oscillate { amplitude, period } => {
                ((amplitude * (2.0 * PI * k as f64 / period).sin()).round() as i64, 0)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub fps: Fps,
    pub n_frames: usize,
    pub pattern: Pattern,
    pub motion: Motion,
    pub noise_sigma: f64,
    pub seed: u64,
}

pub fn synth_video(spec: &SynthSpec) -> Result<Video> {
    if spec.n_frames < WINDOW_FRAMES {
        return invalid(format!(
            "a synthetic video needs at least {WINDOW_FRAMES} frames, got {}",
            spec.n_frames
        ));
    }
    if spec.width == 0 || spec.height == 0 {
        return invalid("synthetic video size must be positive");
    }
    if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
        return invalid(format!("noise sigma {} must be finite and >= 0", spec.noise_sigma));
    }
    if let Motion::Oscillate { period, .. } = spec.motion {
        if period <= 0.0 {
            return invalid("oscillation period must be positive");
        }
    }
    let canvas = Canvas::new(spec);
    let normal = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x006e_6f69_7365);
    let mut frames = Vec::with_capacity(spec.n_frames);
    for k in 0..spec.n_frames {
        let (ox, oy) = spec.motion.offset(k);
        let mut data = Vec::with_capacity(spec.width * spec.height);
        for y in 0..spec.height as i64 {
            for x in 0..spec.width as i64 {
                let mut v = canvas.sample(x - ox, y - oy);
                if spec.noise_sigma > 0.0 {
                    v += normal.sample(&mut rng);
                }
                data.push((v + 0.5).floor().clamp(0.0, 255.0) as f32);
            }
        }
        frames.push(Frame::new(spec.width, spec.height, 1, k, data)?);
    }
    Video::new(frames, spec.fps)
}

/// Adds rounded Gaussian noise to every sample, clamped to [0, 255].
pub fn add_noise(video: &Video, sigma: f64, seed: u64) -> Result<Video> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return invalid(format!("noise sigma {sigma} must be finite and >= 0"));
    }
    if sigma == 0.0 {
        return Ok(video.clone());
    }
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = video
        .frames()
        .iter()
        .map(|f| {
            let data = f
                .data()
                .iter()
                .map(|&v| (v as f64 + normal.sample(&mut rng) + 0.5).floor().clamp(0.0, 255.0) as f32)
                .collect();
            Frame::new(f.width(), f.height(), f.channels(), f.index(), data)
        })
        .collect::<Result<Vec<_>>>()?;
    Video::new(frames, video.fps())
}

struct Canvas {
    min: (i64, i64),
    max: (i64, i64),
    stride: usize,
    /// Rasterized canvas, row-major from `min`.
    values: Vec<f64>,
}

/// Blobs contribute nothing measurable beyond this many radii.
const BLOB_REACH: f64 = 5.0;

impl Canvas {
    fn new(spec: &SynthSpec) -> Self {
        let (w, h) = (spec.width as i64, spec.height as i64);
        let margin = w.max(h);
        let min = (-margin, -margin);
        let max = (w + margin - 1, h + margin - 1);
        let (cw, ch) = ((max.0 - min.0 + 1) as usize, (max.1 - min.1 + 1) as usize);
        let mut values = vec![0.0; cw * ch];
        let seed = spec.seed;
        let coords = |i: usize| (min.0 + (i % cw) as i64, min.1 + (i / cw) as i64);
        match spec.pattern {
            Pattern::Checker { cell } => {
                let c = cell.max(1) as i64;
                for (i, v) in values.iter_mut().enumerate() {
                    let (x, y) = coords(i);
                    *v = if (x.div_euclid(c) + y.div_euclid(c)).rem_euclid(2) == 0 {
                        48.0
                    } else {
                        208.0
                    };
                }
            }
            Pattern::GradientBlobs => {
                let span = (w + h) as f64;
                for (i, v) in values.iter_mut().enumerate() {
                    let (x, y) = coords(i);
                    *v = 60.0 + 120.0 * (x + y - 2 * min.0) as f64 / (2.0 * span);
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let count = ((cw * ch) as f64 / 400.0).ceil() as usize;
                for _ in 0..count {
                    let bx = rng.random_range(-margin as f64..(w + margin) as f64);
                    let by = rng.random_range(-margin as f64..(h + margin) as f64);
                    let radius: f64 = rng.random_range(3.0..10.0);
                    let amplitude = rng.random_range(-90.0..90.0);
                    let reach = BLOB_REACH * radius;
                    let x0 = ((bx - reach).floor() as i64).max(min.0);
                    let x1 = ((bx + reach).ceil() as i64).min(max.0);
                    let y0 = ((by - reach).floor() as i64).max(min.1);
                    let y1 = ((by + reach).ceil() as i64).min(max.1);
                    for y in y0..=y1 {
                        for x in x0..=x1 {
                            let d2 = (x as f64 - bx).powi(2) + (y as f64 - by).powi(2);
                            let i = (y - min.1) as usize * cw + (x - min.0) as usize;
                            values[i] += amplitude * (-d2 / (2.0 * radius * radius)).exp();
                        }
                    }
                }
            }
            Pattern::TexturedNoise => {
                for (i, v) in values.iter_mut().enumerate() {
                    let (x, y) = coords(i);
                    let coarse = value_noise(seed, x, y, 6);
                    let mid = value_noise(seed.wrapping_add(1), x, y, 2);
                    let fine = lattice(seed.wrapping_add(2), x, y);
                    *v = 128.0 + 90.0 * (coarse - 0.5) + 50.0 * (mid - 0.5) + 30.0 * (fine - 0.5);
                }
            }
        }
        for v in &mut values {
            *v = v.clamp(0.0, 255.0);
        }
        Self {
            min,
            max,
            stride: cw,
            values,
        }
    }

    #[inline]
    fn sample(&self, x: i64, y: i64) -> f64 {
        let x = x.clamp(self.min.0, self.max.0);
        let y = y.clamp(self.min.1, self.max.1);
        self.values[(y - self.min.1) as usize * self.stride + (x - self.min.0) as usize]
    }
}

/// Uniform value in `[0, 1)` attached to an integer lattice point.
fn lattice(seed: u64, x: i64, y: i64) -> f64 {
    let mut z = seed ^ (x as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (y as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Bilinearly interpolated lattice noise with cell size `scale`.
fn value_noise(seed: u64, x: i64, y: i64, scale: i64) -> f64 {
    let (gx, gy) = (x.div_euclid(scale), y.div_euclid(scale));
    let fx = x.rem_euclid(scale) as f64 / scale as f64;
    let fy = y.rem_euclid(scale) as f64 / scale as f64;
    let (sx, sy) = (fx * fx * (3.0 - 2.0 * fx), fy * fy * (3.0 - 2.0 * fy));
    let a = lattice(seed, gx, gy);
    let b = lattice(seed, gx + 1, gy);
    let c = lattice(seed, gx, gy + 1);
    let d = lattice(seed, gx + 1, gy + 1);
    let top = a + (b - a) * sx;
    let bottom = c + (d - c) * sx;
    top + (bottom - top) * sy
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Checker { cell } => write!(f, "checker:{cell}"),
            Pattern::GradientBlobs => write!(f, "gradient-blobs"),
            Pattern::TexturedNoise => write!(f, "textured-noise"),
        }
    }
}

impl FromStr for Pattern {
    type Err = Error;

    /// `checker[:cell]`, `gradient-blobs`, `textured-noise`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = s.split_once(':').unwrap_or((s, ""));
        match name {
            "checker" => {
                let cell = if arg.is_empty() {
                    8
                } else {
                    arg.parse()
                        .map_err(|_| Error::Invalid(format!("bad checker cell `{arg}`")))?
                };
                Ok(Pattern::Checker { cell })
            }
            "gradient-blobs" => Ok(Pattern::GradientBlobs),
            "textured-noise" => Ok(Pattern::TexturedNoise),
            _ => invalid(format!(
                "unknown pattern `{s}` (checker, gradient-blobs, textured-noise)"
            )),
        }
    }
}

impl fmt::Display for Motion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Motion::Static => write!(f, "static"),
            Motion::Translate { dx, dy } => write!(f, "translate:{dx},{dy}"),
            Motion::Oscillate { amplitude, period } => write!(f, "oscillate:{amplitude},{period}"),
        }
    }
}

impl FromStr for Motion {
    type Err = Error;

    /// `static`, `translate:dx,dy`, `oscillate:amplitude,period`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = s.split_once(':').unwrap_or((s, ""));
        let bad = || Error::Invalid(format!("bad motion `{s}`"));
        let pair = || -> Result<(&str, &str)> { arg.split_once(',').ok_or_else(bad) };
        match name {
            "static" => Ok(Motion::Static),
            "translate" => {
                let (a, b) = pair()?;
                Ok(Motion::Translate {
                    dx: a.trim().parse().map_err(|_| bad())?,
                    dy: b.trim().parse().map_err(|_| bad())?,
                })
            }
            "oscillate" => {
                let (a, b) = pair()?;
                Ok(Motion::Oscillate {
                    amplitude: a.trim().parse().map_err(|_| bad())?,
                    period: b.trim().parse().map_err(|_| bad())?,
                })
            }
            _ => invalid(format!("unknown motion `{s}` (static, translate, oscillate)")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(pattern: Pattern, motion: Motion) -> SynthSpec {
        SynthSpec {
            width: 24,
            height: 16,
            fps: Fps::integer(15).unwrap(),
            n_frames: 8,
            pattern,
            motion,
            noise_sigma: 0.0,
            seed: 3,
        }
    }

    #[test]
    fn static_frames_identical() {
        for p in [
            Pattern::Checker { cell: 4 },
            Pattern::GradientBlobs,
            Pattern::TexturedNoise,
        ] {
            let v = synth_video(&spec(p, Motion::Static)).unwrap();
            assert!(v.frames().iter().all(|f| f.data() == v.frames()[0].data()));
        }
    }

    #[test]
    fn translate_shifts_columns() {
        let v = synth_video(&spec(Pattern::TexturedNoise, Motion::Translate { dx: 1, dy: 0 })).unwrap();
        for k in 0..7 {
            let (a, b) = (&v.frames()[k], &v.frames()[k + 1]);
            for y in 0..16 {
                for x in 1..24 {
                    assert_eq!(b.get(x, y, 0), a.get(x - 1, y, 0));
                }
            }
        }
    }

    #[test]
    fn too_few_frames() {
        let mut s = spec(Pattern::GradientBlobs, Motion::Static);
        s.n_frames = 5;
        assert!(synth_video(&s).is_err());
    }

    #[test]
    fn noise_is_seeded() {
        let mut s = spec(
            Pattern::Checker { cell: 4 },
            Motion::Oscillate {
                amplitude: 3.0,
                period: 5.0,
            },
        );
        s.noise_sigma = 2.0;
        assert_eq!(synth_video(&s).unwrap(), synth_video(&s).unwrap());
        let a = synth_video(&s).unwrap();
        s.seed = 4;
        assert_ne!(a, synth_video(&s).unwrap());
    }

    #[test]
    fn parse_roundtrip() {
        for m in ["static", "translate:2,-1", "oscillate:3,12"] {
            assert_eq!(m.parse::<Motion>().unwrap().to_string(), m);
        }
        for p in ["checker:8", "gradient-blobs", "textured-noise"] {
            assert_eq!(p.parse::<Pattern>().unwrap().to_string(), p);
        }
        assert!("spin".parse::<Motion>().is_err());
    }
}
