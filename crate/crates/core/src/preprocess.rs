//! Network inputs: six-frame windows turned into residual stacks.
//!
//! For a window starting at frame `n`, plane `i` of the default input is
//! `y[n+i] - y[n+i+1]` over a square luminance crop, divided by 255.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::video::{FrameSource, LUMA_WEIGHTS};
use crate::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum InputKind {
    /// Three luminance frames.
    Luma3,
    /// Six luminance frames.
    Luma6,
    /// Two residuals from three frames.
    Residual2,
    /// Five residuals from six frames.
    #[default]
    Residual5,
}

impl InputKind {
    pub const ALL: [InputKind; 4] = [
        InputKind::Luma3,
        InputKind::Luma6,
        InputKind::Residual2,
        InputKind::Residual5,
    ];

    pub fn frames_needed(self) -> usize {
        match self {
            InputKind::Luma3 | InputKind::Residual2 => 3,
            InputKind::Luma6 | InputKind::Residual5 => 6,
        }
    }

    pub fn planes(self) -> usize {
        match self {
            InputKind::Luma3 => 3,
            InputKind::Luma6 => 6,
            InputKind::Residual2 => 2,
            InputKind::Residual5 => 5,
        }
    }

    fn is_residual(self) -> bool {
        matches!(self, InputKind::Residual2 | InputKind::Residual5)
    }
}

impl fmt::Display for InputKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputKind::Luma3 => "3-y",
            InputKind::Luma6 => "6-y",
            InputKind::Residual2 => "2-residual",
            InputKind::Residual5 => "5-residual",
        })
    }
}

impl FromStr for InputKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "3-y" => Ok(InputKind::Luma3),
            "6-y" => Ok(InputKind::Luma6),
            "2-residual" => Ok(InputKind::Residual2),
            "5-residual" => Ok(InputKind::Residual5),
            _ => invalid(format!("unknown input kind `{s}` (3-y, 6-y, 2-residual, 5-residual)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Original = 0,
    Forged = 1,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Original),
            1 => Some(Label::Forged),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct StackOrigin {
    pub video_id: u64,
    pub start: usize,
    pub crop_x: usize,
    pub crop_y: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualStack {
    pub kind: InputKind,
    pub crop: usize,
    /// `planes × crop × crop`, row-major.
    pub data: Vec<f32>,
    pub origin: StackOrigin,
    pub label: Option<Label>,
}

impl ResidualStack {
    pub fn planes(&self) -> usize {
        self.kind.planes()
    }

    pub fn plane(&self, i: usize) -> &[f32] {
        let n = self.crop * self.crop;
        &self.data[i * n..(i + 1) * n]
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = Some(label);
        self
    }
}

/// 64-bit FNV-1a, used to tag stacks with the video they came from.
pub fn video_id(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Luminance crop of one frame, unrounded.
fn luma_crop(source: &dyn FrameSource, index: usize, x0: usize, y0: usize, crop: usize) -> Result<Vec<f32>> {
    let f = source.frame(index)?;
    let mut out = Vec::with_capacity(crop * crop);
    for y in y0..y0 + crop {
        for x in x0..x0 + crop {
            out.push(if f.channels() == 1 {
                f.get(x, y, 0)
            } else {
                let [wr, wg, wb] = LUMA_WEIGHTS;
                wr * f.get(x, y, 0) + wg * f.get(x, y, 1) + wb * f.get(x, y, 2)
            });
        }
    }
    Ok(out)
}

/// Builds the input for the window at `origin`; reads exactly
/// `kind.frames_needed()` frames.
pub fn extract_stack(
    source: &dyn FrameSource,
    origin: StackOrigin,
    crop: usize,
    kind: InputKind,
    normalize: bool,
) -> Result<ResidualStack> {
    let needed = kind.frames_needed();
    let n = source.frame_count();
    if n < needed || origin.start > n - needed {
        return Err(Error::OutOfRange(format!(
            "a window of {needed} frames starting at {} does not fit a {n}-frame video",
            origin.start
        )));
    }
    let (w, h) = source.frame_size()?;
    if crop == 0 || origin.crop_x + crop > w || origin.crop_y + crop > h {
        return Err(Error::OutOfRange(format!(
            "{crop}px crop at ({}, {}) does not fit a {w}x{h} frame",
            origin.crop_x, origin.crop_y
        )));
    }
    let frames = (0..needed)
        .map(|i| luma_crop(source, origin.start + i, origin.crop_x, origin.crop_y, crop))
        .collect::<Result<Vec<_>>>()?;
    let scale = if normalize { 1.0 / 255.0 } else { 1.0 };
    let mut data = Vec::with_capacity(kind.planes() * crop * crop);
    if kind.is_residual() {
        for pair in frames.windows(2) {
            data.extend(pair[0].iter().zip(&pair[1]).map(|(a, b)| (a - b) * scale));
        }
    } else {
        for f in &frames {
            data.extend(f.iter().map(|v| v * scale));
        }
    }
    Ok(ResidualStack {
        kind,
        crop,
        data,
        origin,
        label: None,
    })
}

/// Uniform window starts and crop corners, with replacement.
pub fn sample_origins<R: Rng + ?Sized>(
    n_frames: usize,
    frame_size: (usize, usize),
    crop: usize,
    frames_needed: usize,
    count: usize,
    video_id: u64,
    rng: &mut R,
) -> Result<Vec<StackOrigin>> {
    let (w, h) = frame_size;
    if n_frames < frames_needed {
        return Err(Error::OutOfRange(format!(
            "video has {n_frames} frames; at least {frames_needed} are needed"
        )));
    }
    if crop == 0 || crop > w || crop > h {
        return Err(Error::OutOfRange(format!("{crop}px crop does not fit a {w}x{h} frame")));
    }
    if count == 0 {
        return invalid("at least one stack must be sampled");
    }
    Ok((0..count)
        .map(|_| StackOrigin {
            video_id,
            start: rng.random_range(0..=n_frames - frames_needed),
            crop_x: rng.random_range(0..=w - crop),
            crop_y: rng.random_range(0..=h - crop),
        })
        .collect())
}

#[allow(clippy::too_many_arguments)]
pub fn sample_stacks(
    source: &dyn FrameSource,
    count: usize,
    crop: usize,
    kind: InputKind,
    normalize: bool,
    video_id: u64,
    seed: u64,
) -> Result<Vec<ResidualStack>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let origins = sample_origins(
        source.frame_count(),
        source.frame_size()?,
        crop,
        kind.frames_needed(),
        count,
        video_id,
        &mut rng,
    )?;
    origins
        .into_iter()
        .map(|o| extract_stack(source, o, crop, kind, normalize))
        .collect()
}

/// Non-overlapping crop corners covering as much of the frame as fits.
pub fn tile_origins(frame_size: (usize, usize), crop: usize) -> Vec<(usize, usize)> {
    let (w, h) = frame_size;
    if crop == 0 {
        return Vec::new();
    }
    (0..h / crop)
        .flat_map(|ty| (0..w / crop).map(move |tx| (tx * crop, ty * crop)))
        .collect()
}

/// A rotation by a multiple of 90° followed by an optional horizontal flip.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Augment {
    /// Clockwise quarter turns, 0..4.
    pub quarter_turns: u8,
    pub flip: bool,
}

impl Augment {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            quarter_turns: rng.random_range(0..4),
            flip: rng.random_bool(0.5),
        }
    }

    /// Destination of pixel `(r, c)` in an `s × s` plane. One quarter turn
    /// sends `(r, c)` to `(c, s-1-r)`.
    pub fn map(&self, r: usize, c: usize, s: usize) -> (usize, usize) {
        let (mut r, mut c) = (r, c);
        for _ in 0..self.quarter_turns % 4 {
            (r, c) = (c, s - 1 - r);
        }
        if self.flip {
            c = s - 1 - c;
        }
        (r, c)
    }

    pub fn apply_plane(&self, plane: &[f32], s: usize) -> Vec<f32> {
        let mut out = vec![0.0; s * s];
        for r in 0..s {
            for c in 0..s {
                let (rr, cc) = self.map(r, c, s);
                out[rr * s + cc] = plane[r * s + c];
            }
        }
        out
    }

    pub fn apply(&self, stack: &mut ResidualStack) {
        if self.quarter_turns.is_multiple_of(4) && !self.flip {
            return;
        }
        let s = stack.crop;
        let data: Vec<f32> = stack.data.chunks(s * s).flat_map(|p| self.apply_plane(p, s)).collect();
        stack.data = data;
    }
}

/// Applies one random transform to both members of an original/forged pair.
pub fn augment_pair<R: Rng + ?Sized>(a: &mut ResidualStack, b: &mut ResidualStack, rng: &mut R) -> Result<Augment> {
    if a.crop != b.crop || a.kind != b.kind {
        return invalid("paired stacks differ in shape");
    }
    let t = Augment::random(rng);
    t.apply(a);
    t.apply(b);
    Ok(t)
}
