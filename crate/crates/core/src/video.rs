//! Frames, videos, frame rates, and luminance.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use num_integer::Integer;

use crate::{invalid, Error, Result};

/// BT.601 luma weights for R, G, B.
pub const LUMA_WEIGHTS: [f32; 3] = [0.299, 0.587, 0.114];

/// Frames per second as a reduced positive rational.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Fps {
    num: u32,
    den: u32,
}

impl Fps {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return invalid(format!("frame rate {num}/{den} must be positive"));
        }
        let g = num.gcd(&den);
        Ok(Self {
            num: num / g,
            den: den / g,
        })
    }

    pub fn integer(fps: u32) -> Result<Self> {
        Self::new(fps, 1)
    }

    pub fn num(self) -> u32 {
        self.num
    }

    pub fn den(self) -> u32 {
        self.den
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `(p, q)` in lowest terms with `other / self = p / q`.
    pub fn ratio_to(self, other: Fps) -> (u64, u64) {
        let p = other.num as u64 * self.den as u64;
        let q = other.den as u64 * self.num as u64;
        let g = p.gcd(&q);
        (p / g, q / g)
    }
}

impl fmt::Display for Fps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for Fps {
    type Err = Error;

    /// Accepts `30`, `30000/1001` or `30000:1001`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let parse = |t: &str| {
            t.trim()
                .parse::<u32>()
                .map_err(|_| Error::Invalid(format!("bad frame rate `{s}`")))
        };
        match s.split_once(['/', ':']) {
            Some((n, d)) => Fps::new(parse(n)?, parse(d)?),
            None => Fps::new(parse(s)?, 1),
        }
    }
}

/// One picture: interleaved row-major `f32` samples in `[0, 255]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    channels: usize,
    index: usize,
    data: Vec<f32>,
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: usize, index: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return invalid(format!("frame size {width}x{height} is empty"));
        }
        if channels != 1 && channels != 3 {
            return invalid(format!("frames have 1 or 3 channels, got {channels}"));
        }
        if data.len() != width * height * channels {
            return invalid(format!(
                "{width}x{height}x{channels} frame needs {} samples, got {}",
                width * height * channels,
                data.len()
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return invalid(format!("sample {i} of frame {index} is not finite"));
        }
        Ok(Self {
            width,
            height,
            channels,
            index,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(width, height, channels, 0, vec![value; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn with_index(mut self, index: usize) -> Self {
        self.index = index;
        self
    }

    pub fn same_geometry(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Sample with clamp-to-edge addressing.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize, c: usize) -> f32 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y, c)
    }

    /// Rounds half up and clamps to `[0, 255]`, as when written to 8 bits.
    pub fn quantized(&self) -> Frame {
        Frame {
            data: self.data.iter().map(|&v| quantize(v) as f32).collect(),
            ..self.clone()
        }
    }
}

/// Round half up, then clamp to a byte.
pub fn quantize(v: f32) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// `0.299 R + 0.587 G + 0.114 B`, unrounded.
pub fn to_luminance(frame: &Frame) -> Result<Frame> {
    if frame.channels != 3 {
        return invalid(format!(
            "luminance conversion needs an RGB frame, got {} channel(s)",
            frame.channels
        ));
    }
    let [wr, wg, wb] = LUMA_WEIGHTS;
    let data = frame
        .data
        .chunks_exact(3)
        .map(|p| wr * p[0] + wg * p[1] + wb * p[2])
        .collect();
    Frame::new(frame.width, frame.height, 1, frame.index, data)
}

/// Luminance of a frame; single-channel frames are taken as luma already.
pub fn luma(frame: &Frame) -> Result<Frame> {
    if frame.channels == 1 {
        Ok(frame.clone())
    } else {
        to_luminance(frame)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Video {
    frames: Vec<Frame>,
    fps: Fps,
}

impl Video {
    /// Frames are renumbered `0..n` in the order given.
    pub fn new(frames: Vec<Frame>, fps: Fps) -> Result<Self> {
        if let Some(first) = frames.first() {
            if let Some(bad) = frames.iter().find(|f| !f.same_geometry(first)) {
                return invalid(format!(
                    "frame {} is {}x{}x{}, frame 0 is {}x{}x{}",
                    bad.index, bad.width, bad.height, bad.channels, first.width, first.height, first.channels
                ));
            }
        }
        let frames = frames.into_iter().enumerate().map(|(i, f)| f.with_index(i)).collect();
        Ok(Self { frames, fps })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn fps(&self) -> Fps {
        self.fps
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    /// `(width, height, channels)`, or `None` for an empty video.
    pub fn geometry(&self) -> Option<(usize, usize, usize)> {
        self.frames.first().map(|f| (f.width, f.height, f.channels))
    }

    pub fn quantized(&self) -> Video {
        Video {
            frames: self.frames.iter().map(Frame::quantized).collect(),
            fps: self.fps,
        }
    }

    /// Frames `start..end` as a new video, renumbered from 0.
    pub fn slice(&self, start: usize, end: usize) -> Result<Video> {
        if start > end || end > self.len() {
            return Err(Error::OutOfRange(format!(
                "frames {start}..{end} of a {}-frame video",
                self.len()
            )));
        }
        Video::new(self.frames[start..end].to_vec(), self.fps)
    }

    /// Appends the frames of `other`, which must share geometry and rate.
    pub fn concat(mut self, other: Video) -> Result<Video> {
        if self.fps != other.fps {
            return invalid(format!("cannot join {} fps and {} fps", self.fps, other.fps));
        }
        self.frames.extend(other.frames);
        Video::new(self.frames, self.fps)
    }
}

/// Random access to the frames of a video.
pub trait FrameSource: Sync {
    fn frame_count(&self) -> usize;
    fn frame(&self, index: usize) -> Result<&Frame>;
    fn fps(&self) -> Fps;

    fn frame_size(&self) -> Result<(usize, usize)> {
        let f = self.frame(0)?;
        Ok((f.width(), f.height()))
    }
}

impl FrameSource for Video {
    fn frame_count(&self) -> usize {
        self.frames.len()
    }

    fn frame(&self, index: usize) -> Result<&Frame> {
        self.frames
            .get(index)
            .ok_or_else(|| Error::OutOfRange(format!("frame {index} of a {}-frame video", self.frames.len())))
    }

    fn fps(&self) -> Fps {
        self.fps
    }
}

/// Counts every frame read through it.
pub struct CountingSource<'a, S: ?Sized> {
    inner: &'a S,
    reads: AtomicUsize,
}

impl<'a, S: FrameSource + ?Sized> CountingSource<'a, S> {
    pub fn new(inner: &'a S) -> Self {
        Self {
            inner,
            reads: AtomicUsize::new(0),
        }
    }

    pub fn reads(&self) -> usize {
        self.reads.load(Ordering::Relaxed)
    }
}

impl<S: FrameSource + ?Sized> FrameSource for CountingSource<'_, S> {
    fn frame_count(&self) -> usize {
        self.inner.frame_count()
    }

    fn frame(&self, index: usize) -> Result<&Frame> {
        self.reads.fetch_add(1, Ordering::Relaxed);
        self.inner.frame(index)
    }

    fn fps(&self) -> Fps {
        self.inner.fps()
    }

    fn frame_size(&self) -> Result<(usize, usize)> {
        self.inner.frame_size()
    }
}
