//! Residual-stack cache files.
//!
//! ```text
//! "FCDS" | u32 version | u32 count
//! per stack: u64 video_id | u32 start | u32 crop_x | u32 crop_y | u32 crop
//!            | u8 label (0 original, 1 forged, 255 unknown)
//!            | 5 × crop × crop f32
//! ```
//! Little-endian throughout. Version 2 files hold another input kind: a u8
//! kind code (0 luma-3, 1 luma-6, 2 residual-2, 3 residual-5) follows the
//! count and each stack carries that kind's plane count. All stacks of one
//! file share a kind.

use std::io::{BufWriter, Write};
use std::path::Path;

use crate::preprocess::{InputKind, Label, ResidualStack, StackOrigin};
use crate::{invalid, Error, Result};

pub const MAGIC: &[u8; 4] = b"FCDS";
pub const VERSION: u32 = 1;
/// Version written for caches of a kind other than five residuals.
pub const VERSION_KIND: u32 = 2;
const UNLABELED: u8 = 255;

pub fn encode_stacks<W: Write>(out: &mut W, stacks: &[ResidualStack]) -> Result<()> {
    let kind = stacks.first().map_or(InputKind::Residual5, |s| s.kind);
    out.write_all(MAGIC)?;
    let version = if kind == InputKind::Residual5 {
        VERSION
    } else {
        VERSION_KIND
    };
    out.write_all(&version.to_le_bytes())?;
    out.write_all(&(stacks.len() as u32).to_le_bytes())?;
    if version == VERSION_KIND {
        out.write_all(&[kind_code(kind)])?;
    }
    for (i, s) in stacks.iter().enumerate() {
        if s.kind != kind {
            return invalid(format!("stack {i} is {}, stack 0 is {kind}", s.kind));
        }
        if s.data.len() != kind.planes() * s.crop * s.crop {
            return invalid(format!(
                "stack {i} holds {} values for a {}px {kind} stack",
                s.data.len(),
                s.crop
            ));
        }
        out.write_all(&s.origin.video_id.to_le_bytes())?;
        for v in [s.origin.start, s.origin.crop_x, s.origin.crop_y, s.crop] {
            out.write_all(&(v as u32).to_le_bytes())?;
        }
        out.write_all(&[s.label.map_or(UNLABELED, Label::as_u8)])?;
        for v in &s.data {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn kind_code(kind: InputKind) -> u8 {
    InputKind::ALL.iter().position(|&k| k == kind).expect("listed kind") as u8
}

pub fn write_cache(path: &Path, stacks: &[ResidualStack]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    encode_stacks(&mut w, stacks)?;
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.pos as u64,
                msg: format!("stack cache truncated while reading {what}"),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_stacks(bytes: &[u8]) -> Result<Vec<ResidualStack>> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4, "magic")? != MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: "not a stack cache (bad magic)".into(),
        });
    }
    let version = c.u32("version")?;
    if version != VERSION && version != VERSION_KIND {
        return Err(Error::Format {
            offset: 4,
            msg: format!("unsupported stack cache version {version}"),
        });
    }
    let count = c.u32("count")? as usize;
    let kind = if version == VERSION_KIND {
        let code = c.take(1, "input kind")?[0];
        *InputKind::ALL.get(code as usize).ok_or_else(|| Error::Format {
            offset: 12,
            msg: format!("unknown input kind code {code}"),
        })?
    } else {
        InputKind::Residual5
    };
    let mut stacks = Vec::with_capacity(count.min(1 << 16));
    for i in 0..count {
        let what = format!("stack {i}");
        let video_id = u64::from_le_bytes(c.take(8, &what)?.try_into().expect("8 bytes"));
        let start = c.u32(&what)? as usize;
        let crop_x = c.u32(&what)? as usize;
        let crop_y = c.u32(&what)? as usize;
        let crop = c.u32(&what)? as usize;
        let label_at = c.pos;
        let label = match c.take(1, &what)?[0] {
            UNLABELED => None,
            b => Some(Label::from_u8(b).ok_or_else(|| Error::Format {
                offset: label_at as u64,
                msg: format!("stack {i} has label byte {b}"),
            })?),
        };
        let n = kind.planes() * crop * crop;
        let data = c
            .take(n * 4, &what)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        stacks.push(ResidualStack {
            kind,
            crop,
            data,
            origin: StackOrigin {
                video_id,
                start,
                crop_x,
                crop_y,
            },
            label,
        });
    }
    if c.pos != bytes.len() {
        return Err(Error::Format {
            offset: c.pos as u64,
            msg: format!("{} unexpected bytes after the last stack", bytes.len() - c.pos),
        });
    }
    Ok(stacks)
}

pub fn read_cache(path: &Path) -> Result<Vec<ResidualStack>> {
    decode_stacks(&std::fs::read(path)?)
}
