//! Weight files.
//!
//! `SPKWTS01`, u32 version, u32 layer count, then per layer: u8 kind tag,
//! u32 f, channels, kh, kw, m, u8 inhibitory flag, `m` f64 delays in ms,
//! then the excitatory and, when flagged, inhibitory f64 weights in kernel
//! layout. All values are little-endian.

use std::path::Path;

use crate::error::{Error, Result};
use crate::layers::{Kernel, LayerKind};
use crate::util::write_atomic;

pub const WEIGHTS_MAGIC: &[u8; 8] = b"SPKWTS01";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub kind: LayerKind,
    pub delays_ms: Vec<f64>,
    pub kernel: Kernel,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightsFile {
    pub layers: Vec<LayerWeights>,
}

impl WeightsFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(WEIGHTS_MAGIC);
        b.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
        b.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for l in &self.layers {
            let k = &l.kernel;
            b.push(l.kind.tag());
            for dim in [k.f, k.channels, k.kh, k.kw, k.m] {
                b.extend_from_slice(&(dim as u32).to_le_bytes());
            }
            b.push(u8::from(k.inh.is_some()));
            for v in l
                .delays_ms
                .iter()
                .chain(&k.exc)
                .chain(k.inh.iter().flatten())
            {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { bytes, pos: 0 };
        let magic = r.take(8, "magic")?;
        if magic != WEIGHTS_MAGIC {
            return Err(Error::BadMagic {
                expected: String::from_utf8_lossy(WEIGHTS_MAGIC).into_owned(),
                found: String::from_utf8_lossy(magic).into_owned(),
            });
        }
        let version = r.u32("version")?;
        if version != WEIGHTS_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: WEIGHTS_VERSION,
            });
        }
        let count = r.u32("layer count")?;
        let mut layers = Vec::new();
        for i in 0..count {
            let tag = r.take(1, "kind tag")?[0];
            let kind = LayerKind::from_tag(tag)
                .filter(|k| *k != LayerKind::Input)
                .ok_or_else(|| Error::Validation(format!("layer {i}: unknown kind tag {tag}")))?;
            let mut dims = [0usize; 5];
            for d in dims.iter_mut() {
                *d = r.u32("kernel dimensions")? as usize;
            }
            let [f, channels, kh, kw, m] = dims;
            let has_inh = match r.take(1, "inhibitory flag")?[0] {
                0 => false,
                1 => true,
                other => {
                    return Err(Error::Validation(format!(
                        "layer {i}: inhibitory flag {other}"
                    )))
                }
            };
            let n = dims
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| {
                    Error::Validation(format!("layer {i}: kernel dimensions overflow"))
                })?;
            let delays_ms = r.f64s(m, "delays")?;
            let exc = r.f64s(n, "excitatory weights")?;
            let inh = if has_inh {
                Some(r.f64s(n, "inhibitory weights")?)
            } else {
                None
            };
            layers.push(LayerWeights {
                kind,
                delays_ms,
                kernel: Kernel {
                    f,
                    channels,
                    kh,
                    kw,
                    m,
                    exc,
                    inh,
                },
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::Validation(format!(
                "{} trailing bytes after the last layer",
                bytes.len() - r.pos
            )));
        }
        Ok(WeightsFile { layers })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Resolves a layer by index or kind name; a kind selects its first layer.
    pub fn find(&self, selector: &str) -> Result<usize> {
        if let Ok(i) = selector.parse::<usize>() {
            return if i < self.layers.len() {
                Ok(i)
            } else {
                Err(Error::InvalidInput(format!(
                    "layer index {i} out of range ({} layers)",
                    self.layers.len()
                )))
            };
        }
        let kind: LayerKind = selector.parse()?;
        self.layers
            .iter()
            .position(|l| l.kind == kind)
            .ok_or_else(|| Error::InvalidInput(format!("no {kind} layer in weights file")))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Truncated(format!("{what} at byte {} needs {n} bytes", self.pos))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| Error::Truncated(format!("{what} too large")))?;
        Ok(self
            .take(len, what)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
