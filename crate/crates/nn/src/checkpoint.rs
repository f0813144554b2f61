//! Self-describing weight file.
//!
//! ```text
//! "FCDW" | u32 version
//! u32 manifest_len | manifest bytes (UTF-8 `key=value` lines)
//! u32 entry_count
//! per entry: u32 name_len | name | u32 tag_len | tag | u32 rank | rank × u32 dims
//!            | product(dims) × f32
//! u32 crc32 of everything above
//! ```
//! All integers and floats are little-endian. `tag` is a parameter kind
//! (`conv_weight`, `bn_gamma`, ...) or `buffer` for running statistics.

use std::path::Path;

use crate::params::ParamKind;
use crate::{Error, ParamStore, Result, Scalar, Tensor};

pub const MAGIC: &[u8; 4] = b"FCDW";
pub const VERSION: u32 = 1;
const BUFFER_TAG: &str = "buffer";

#[derive(Clone, Debug, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub tag: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub manifest: Vec<(String, String)>,
    pub entries: Vec<TensorEntry>,
}

impl Checkpoint {
    pub fn from_store<T: Scalar>(manifest: Vec<(String, String)>, store: &ParamStore<T>) -> Self {
        let to_f32 = |t: &Tensor<T>| t.data().iter().map(|v| v.as_f64() as f32).collect();
        let mut entries: Vec<TensorEntry> = store
            .iter()
            .map(|(name, p)| TensorEntry {
                name: name.to_string(),
                tag: p.kind.tag().to_string(),
                shape: p.value.shape().to_vec(),
                data: to_f32(&p.value),
            })
            .collect();
        entries.extend(store.buffers().map(|(name, b)| TensorEntry {
            name: name.to_string(),
            tag: BUFFER_TAG.to_string(),
            shape: b.shape().to_vec(),
            data: to_f32(b),
        }));
        Self { manifest, entries }
    }

    pub fn manifest_value(&self, key: &str) -> Option<&str> {
        self.manifest.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Copies every entry into a store with identical names, kinds and shapes.
    pub fn load_into<T: Scalar>(&self, store: &mut ParamStore<T>) -> Result<()> {
        let expected = store.len() + store.buffers().count();
        if self.entries.len() != expected {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} tensors, network has {expected}",
                self.entries.len()
            )));
        }
        for e in &self.entries {
            let target = if e.tag == BUFFER_TAG {
                store.buffer_mut(&e.name)?
            } else {
                let p = store.param_mut(&e.name)?;
                if ParamKind::from_tag(&e.tag) != Some(p.kind) {
                    return Err(Error::Checkpoint(format!(
                        "`{}` is tagged {} but the network expects {}",
                        e.name,
                        e.tag,
                        p.kind.tag()
                    )));
                }
                &mut p.value
            };
            if target.shape() != e.shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "`{}` has shape {:?}, network expects {:?}",
                    e.name,
                    e.shape,
                    target.shape()
                )));
            }
            for (d, &s) in target.data_mut().iter_mut().zip(&e.data) {
                *d = T::lit(s as f64);
            }
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        let manifest: String = self.manifest.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        put_bytes(&mut out, manifest.as_bytes());
        put_u32(&mut out, self.entries.len() as u32);
        for e in &self.entries {
            put_bytes(&mut out, e.name.as_bytes());
            put_bytes(&mut out, e.tag.as_bytes());
            put_u32(&mut out, e.shape.len() as u32);
            for &d in &e.shape {
                put_u32(&mut out, d as u32);
            }
            for &v in &e.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        put_u32(&mut out, crc);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Error::Checkpoint("file too short".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        let actual = crc32fast::hash(body);
        if stored != actual {
            return Err(Error::Checkpoint(format!(
                "CRC mismatch: stored {stored:08x}, computed {actual:08x}"
            )));
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let text = r.string()?;
        let mut manifest = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Checkpoint(format!("manifest line {} is not key=value", i + 1)))?;
            manifest.push((k.to_string(), v.to_string()));
        }
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let name = r.string()?;
            let tag = r.string()?;
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(n * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            entries.push(TensorEntry { name, tag, shape, data });
        }
        if r.pos != body.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes before CRC",
                body.len() - r.pos
            )));
        }
        Ok(Self { manifest, entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    put_u32(out, b.len() as u32);
    out.extend_from_slice(b);
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint(format!(
                "truncated at byte {} (need {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint(format!("invalid UTF-8 before byte {}", self.pos)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_store() -> ParamStore<f32> {
        let mut s = ParamStore::new();
        s.add(
            "c.weight",
            ParamKind::ConvWeight,
            Tensor::from_vec(&[1, 1, 1, 2], vec![0.5, -1.25]).unwrap(),
        )
        .unwrap();
        s.add("bn.gamma", ParamKind::BnGamma, Tensor::full(&[2], 1.0)).unwrap();
        s.add_buffer("bn.running_var", Tensor::full(&[2], 3.0)).unwrap();
        s
    }

    #[test]
    fn encode_decode_load() {
        let store = sample_store();
        let ck = Checkpoint::from_store(vec![("crop_size".into(), "64".into())], &store);
        let back = Checkpoint::decode(&ck.encode()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.manifest_value("crop_size"), Some("64"));
        let mut fresh = ParamStore::<f32>::new();
        fresh
            .add("c.weight", ParamKind::ConvWeight, Tensor::zeros(&[1, 1, 1, 2]))
            .unwrap();
        fresh.add("bn.gamma", ParamKind::BnGamma, Tensor::zeros(&[2])).unwrap();
        fresh.add_buffer("bn.running_var", Tensor::zeros(&[2])).unwrap();
        back.load_into(&mut fresh).unwrap();
        assert_eq!(fresh.value("c.weight").unwrap().data(), &[0.5, -1.25]);
        assert_eq!(fresh.buffer("bn.running_var").unwrap().data(), &[3.0, 3.0]);
    }

    #[test]
    fn corruption_is_detected() {
        let mut bytes = Checkpoint::from_store(vec![], &sample_store()).encode();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(Checkpoint::decode(&bytes), Err(Error::Checkpoint(m)) if m.contains("CRC")));
    }

    #[test]
    fn shape_mismatch_on_load() {
        let ck = Checkpoint::from_store(vec![], &sample_store());
        let mut other = ParamStore::<f32>::new();
        other
            .add("c.weight", ParamKind::ConvWeight, Tensor::zeros(&[2, 1, 1, 1]))
            .unwrap();
        other.add("bn.gamma", ParamKind::BnGamma, Tensor::zeros(&[2])).unwrap();
        other.add_buffer("bn.running_var", Tensor::zeros(&[2])).unwrap();
        assert!(ck.load_into(&mut other).is_err());
    }
}
