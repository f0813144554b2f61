//! YUV4MPEG2 reading and writing (8-bit mono and 4:2:0).
//!
//! ```text
//! YUV4MPEG2 W<w> H<h> F<num>:<den> [I<i>] [A<a>:<b>] [C<space>] [X<...>]\n
//! FRAME[ params]\n <Y plane> [<Cb plane> <Cr plane>]
//! ```
//! Chroma planes are `ceil(w/2) × ceil(h/2)`. Colour conversion uses full-range
//! BT.601 (JFIF) coefficients.

use std::io::Write;
use std::path::Path;

use crate::video::{quantize, Fps, Frame, Video};
use crate::{Error, Result};

const MAGIC: &[u8] = b"YUV4MPEG2 ";
const FRAME_TAG: &[u8] = b"FRAME";

/// What to keep from the colour planes on read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ChromaMode {
    /// Keep the Y plane only; frames have one channel.
    #[default]
    Discard,
    /// Upsample chroma (nearest) and convert to RGB; mono files get grey.
    Rgb,
}

/// Sample layout written to disk.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Colorspace {
    Mono,
    Yuv420,
}

impl Colorspace {
    fn tag(self) -> &'static str {
        match self {
            Colorspace::Mono => "mono",
            Colorspace::Yuv420 => "420jpeg",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Header {
    pub width: usize,
    pub height: usize,
    pub fps: Fps,
    pub colorspace: Colorspace,
}

impl Header {
    fn chroma_len(&self) -> usize {
        match self.colorspace {
            Colorspace::Mono => 0,
            Colorspace::Yuv420 => self.width.div_ceil(2) * self.height.div_ceil(2),
        }
    }

    fn frame_bytes(&self) -> usize {
        self.width * self.height + 2 * self.chroma_len()
    }
}

fn format_err<T>(offset: usize, msg: impl Into<String>) -> Result<T> {
    Err(Error::Format {
        offset: offset as u64,
        msg: msg.into(),
    })
}

fn parse_header(bytes: &[u8]) -> Result<(Header, usize)> {
    if !bytes.starts_with(MAGIC) {
        return format_err(0, "missing YUV4MPEG2 signature");
    }
    let end = match bytes.iter().position(|&b| b == b'\n') {
        Some(e) => e,
        None => return format_err(bytes.len(), "header line is not terminated"),
    };
    let line = std::str::from_utf8(&bytes[MAGIC.len()..end]).map_err(|_| Error::Format {
        offset: MAGIC.len() as u64,
        msg: "header is not ASCII".into(),
    })?;
    let (mut width, mut height, mut fps) = (None, None, None);
    let mut colorspace = Colorspace::Yuv420;
    let mut offset = MAGIC.len();
    for token in line.split(' ') {
        let at = offset;
        offset += token.len() + 1;
        if token.is_empty() {
            continue;
        }
        let (tag, value) = token.split_at(1);
        let number = |v: &str| {
            v.parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(|| Error::Format {
                offset: at as u64,
                msg: format!("bad value in header tag `{token}`"),
            })
        };
        match tag {
            "W" => width = Some(number(value)?),
            "H" => height = Some(number(value)?),
            "F" => {
                let fr = value.replace(':', "/").parse::<Fps>().map_err(|_| Error::Format {
                    offset: at as u64,
                    msg: format!("bad frame rate `{value}`"),
                })?;
                fps = Some(fr);
            }
            "C" => {
                colorspace = if value == "mono" {
                    Colorspace::Mono
                } else if value.starts_with("420") {
                    Colorspace::Yuv420
                } else {
                    return Err(Error::Unsupported(format!(
                        "Y4M colour space `{value}` (only mono and 4:2:0 are read)"
                    )));
                };
            }
            "I" | "A" | "X" => {}
            _ => return format_err(at, format!("unknown header tag `{token}`")),
        }
    }
    let width = width.map_or_else(|| format_err(end, "header has no W tag"), Ok)?;
    let height = height.map_or_else(|| format_err(end, "header has no H tag"), Ok)?;
    let fps = fps.map_or_else(|| format_err(end, "header has no F tag"), Ok)?;
    Ok((
        Header {
            width,
            height,
            fps,
            colorspace,
        },
        end + 1,
    ))
}

pub fn decode(bytes: &[u8], chroma: ChromaMode) -> Result<Video> {
    let (header, mut pos) = parse_header(bytes)?;
    let (w, h) = (header.width, header.height);
    let frame_bytes = header.frame_bytes();
    let mut frames = Vec::new();
    while pos < bytes.len() {
        let index = frames.len();
        let rest = &bytes[pos..];
        if !rest.starts_with(FRAME_TAG) {
            return format_err(pos, format!("expected FRAME marker for frame {index}"));
        }
        let line_end = match rest.iter().position(|&b| b == b'\n') {
            Some(e) => e,
            None => return format_err(bytes.len(), format!("frame {index}: marker line is not terminated")),
        };
        pos += line_end + 1;
        if bytes.len() - pos < frame_bytes {
            return format_err(
                bytes.len(),
                format!(
                    "frame {index} is truncated: {} of {frame_bytes} payload bytes present",
                    bytes.len() - pos
                ),
            );
        }
        let payload = &bytes[pos..pos + frame_bytes];
        pos += frame_bytes;
        let y = &payload[..w * h];
        let frame = match chroma {
            ChromaMode::Discard => Frame::new(w, h, 1, index, y.iter().map(|&v| v as f32).collect())?,
            ChromaMode::Rgb => {
                let cw = w.div_ceil(2);
                let (cb, cr) = payload[w * h..].split_at(header.chroma_len());
                let mut data = Vec::with_capacity(w * h * 3);
                for row in 0..h {
                    for col in 0..w {
                        let yv = y[row * w + col] as f32;
                        let (u, v) = if header.colorspace == Colorspace::Mono {
                            (128.0, 128.0)
                        } else {
                            let ci = (row / 2) * cw + col / 2;
                            (cb[ci] as f32, cr[ci] as f32)
                        };
                        data.extend(ycbcr_to_rgb(yv, u, v));
                    }
                }
                Frame::new(w, h, 3, index, data)?
            }
        };
        frames.push(frame);
    }
    Video::new(frames, header.fps)
}

pub fn read_y4m(path: &Path, chroma: ChromaMode) -> Result<Video> {
    decode(&std::fs::read(path)?, chroma)
}

pub fn encode(video: &Video, colorspace: Colorspace) -> Result<Vec<u8>> {
    let (w, h, ch) = video
        .geometry()
        .ok_or_else(|| Error::Invalid("cannot write a video with no frames".into()))?;
    let header = Header {
        width: w,
        height: h,
        fps: video.fps(),
        colorspace,
    };
    let mut out = Vec::with_capacity(64 + video.len() * (header.frame_bytes() + 6));
    writeln!(
        out,
        "YUV4MPEG2 W{w} H{h} F{}:{} Ip A1:1 C{}",
        header.fps.num(),
        header.fps.den(),
        colorspace.tag()
    )?;
    for frame in video.frames() {
        out.extend_from_slice(b"FRAME\n");
        if ch == 1 {
            out.extend(frame.data().iter().map(|&v| quantize(v)));
            if colorspace == Colorspace::Yuv420 {
                out.extend(std::iter::repeat_n(128u8, 2 * header.chroma_len()));
            }
            continue;
        }
        let ycc: Vec<[f32; 3]> = frame
            .data()
            .chunks_exact(3)
            .map(|p| rgb_to_ycbcr(p[0], p[1], p[2]))
            .collect();
        out.extend(ycc.iter().map(|p| quantize(p[0])));
        if colorspace == Colorspace::Yuv420 {
            for plane in 1..3 {
                for cy in 0..h.div_ceil(2) {
                    for cx in 0..w.div_ceil(2) {
                        let (mut sum, mut n) = (0.0f32, 0.0f32);
                        for y in 2 * cy..(2 * cy + 2).min(h) {
                            for x in 2 * cx..(2 * cx + 2).min(w) {
                                sum += ycc[y * w + x][plane];
                                n += 1.0;
                            }
                        }
                        out.push(quantize(sum / n));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Mono for single-channel videos, 4:2:0 for RGB.
pub fn write_y4m(video: &Video, path: &Path) -> Result<()> {
    let cs = match video.geometry() {
        Some((_, _, 3)) => Colorspace::Yuv420,
        _ => Colorspace::Mono,
    };
    std::fs::write(path, encode(video, cs)?)?;
    Ok(())
}

fn rgb_to_ycbcr(r: f32, g: f32, b: f32) -> [f32; 3] {
    [
        0.299 * r + 0.587 * g + 0.114 * b,
        128.0 - 0.168_736 * r - 0.331_264 * g + 0.5 * b,
        128.0 + 0.5 * r - 0.418_688 * g - 0.081_312 * b,
    ]
}

fn ycbcr_to_rgb(y: f32, cb: f32, cr: f32) -> [f32; 3] {
    let (u, v) = (cb - 128.0, cr - 128.0);
    [
        (y + 1.402 * v).clamp(0.0, 255.0),
        (y - 0.344_136 * u - 0.714_136 * v).clamp(0.0, 255.0),
        (y + 1.772 * u).clamp(0.0, 255.0),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mono_file(frames: usize, payload_bytes: usize) -> Vec<u8> {
        let mut b = b"YUV4MPEG2 W4 H4 F30:1 Cmono\n".to_vec();
        for f in 0..frames {
            b.extend_from_slice(b"FRAME\n");
            b.extend((0..16).map(|i| (i * 10 + f) as u8));
        }
        b.extend_from_slice(b"FRAME\n");
        b.extend(std::iter::repeat_n(7u8, payload_bytes));
        b
    }

    #[test]
    fn reads_two_frame_mono() {
        let v = decode(&mono_file(1, 16), ChromaMode::Discard).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.geometry(), Some((4, 4, 1)));
        assert_eq!(v.frames()[0].data()[3], 30.0);
        assert_eq!(v.fps(), Fps::integer(30).unwrap());
    }

    #[test]
    fn truncated_frame_names_index() {
        let err = decode(&mono_file(2, 9), ChromaMode::Discard).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("frame 2"), "{msg}");
        assert!(matches!(err, Error::Format { .. }));
    }

    #[test]
    fn header_errors_carry_offsets() {
        assert!(matches!(
            decode(b"RIFF", ChromaMode::Discard),
            Err(Error::Format { offset: 0, .. })
        ));
        let err = decode(b"YUV4MPEG2 W4 Hx F30:1\n", ChromaMode::Discard).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 13, .. }), "{err}");
        assert!(decode(b"YUV4MPEG2 W4 H4\n", ChromaMode::Discard).is_err());
        assert!(matches!(
            decode(b"YUV4MPEG2 W4 H4 F30:1 C444\n", ChromaMode::Discard),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn yuv420_grey_roundtrip_through_rgb() {
        let fps = Fps::integer(25).unwrap();
        let frame = Frame::new(3, 3, 1, 0, (0..9).map(|i| (i * 20) as f32).collect()).unwrap();
        let v = Video::new(vec![frame], fps).unwrap();
        let bytes = encode(&v, Colorspace::Yuv420).unwrap();
        // 9 luma + 2 × (2 × 2) chroma bytes per frame.
        assert!(bytes.ends_with(&[128u8; 8]));
        let rgb = decode(&bytes, ChromaMode::Rgb).unwrap();
        assert_eq!(rgb.geometry(), Some((3, 3, 3)));
        let back = encode(&rgb, Colorspace::Yuv420).unwrap();
        assert_eq!(back, bytes);
    }
}
