//! Named weight tensors and the `CDZW` container.
//!
//! Layout (little-endian): magic `CDZW`, `u32` version, `u32` length plus
//! UTF-8 JSON config, `u32` tensor count, then per tensor a `u32` name length,
//! the name, `u32` rank, `u32` dims and an f32 payload.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::TasNetConfig;
use super::tensor::Tensor;
use crate::dataset::rng_for;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CDZW";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TasNetWeights {
    tensors: BTreeMap<String, Tensor>,
}

fn init_scale(name: &str, cfg: &TasNetConfig) -> f64 {
    let fan_in = if name.starts_with("encoder") {
        cfg.in_channels * cfg.kernel_len
    } else if name.starts_with("decoder") || name.contains("bottleneck") {
        cfg.n_filters
    } else if name.contains(".in.") {
        cfg.bottleneck
    } else if name.contains("depthwise") {
        cfg.kernel
    } else if name.contains("mask") {
        cfg.skip_channels
    } else {
        cfg.conv_channels
    };
    1.0 / (fan_in as f64).sqrt()
}

impl TasNetWeights {
    /// Seeded initialisation. Values are f32-representable, so a freshly
    /// initialised model survives a save/load cycle unchanged.
    pub fn init(cfg: &TasNetConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = rng_for(seed);
        let mut tensors = BTreeMap::new();
        for (name, shape) in cfg.weight_shapes() {
            let t = if name.ends_with("alpha") {
                Tensor::filled(shape, 0.25)
            } else if name.ends_with("gain") {
                Tensor::filled(shape, 1.0)
            } else if name.contains(".norm") {
                Tensor::zeros(shape)
            } else {
                let k = init_scale(&name, cfg);
                let n = shape.iter().product();
                let data = (0..n).map(|_| rng.gen_range(-k..k) as f32 as f64).collect();
                Tensor::new(shape, data)?
            };
            tensors.insert(name, t);
        }
        Ok(Self { tensors })
    }

    pub fn from_map(cfg: &TasNetConfig, tensors: BTreeMap<String, Tensor>) -> Result<Self> {
        let w = Self { tensors };
        w.check(cfg).map_err(|e| match e {
            Error::CorruptWeights(m) => Error::invalid(m),
            other => other,
        })?;
        Ok(w)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::invalid(format!("no weight named `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn num_elements(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Every tensor present, finite and shaped per `cfg`.
    pub fn check(&self, cfg: &TasNetConfig) -> Result<()> {
        let shapes = cfg.weight_shapes();
        if shapes.len() != self.tensors.len() {
            return Err(Error::CorruptWeights(format!(
                "expected {} tensors, found {}",
                shapes.len(),
                self.tensors.len()
            )));
        }
        for (name, shape) in shapes {
            let t = self
                .tensors
                .get(&name)
                .ok_or_else(|| Error::CorruptWeights(format!("missing tensor `{name}`")))?;
            if t.shape() != shape.as_slice() {
                return Err(Error::CorruptWeights(format!(
                    "`{name}` has shape {:?}, config needs {shape:?}",
                    t.shape()
                )));
            }
            if !t.is_finite() {
                return Err(Error::CorruptWeights(format!("`{name}` is not finite")));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self, cfg: &TasNetConfig) -> Result<Vec<u8>> {
        self.check(cfg).map_err(|e| Error::invalid(e.to_string()))?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let json = serde_json::to_vec(cfg).map_err(|e| Error::invalid(e.to_string()))?;
        put_u32(&mut out, json.len())?;
        out.extend_from_slice(&json);
        let shapes = cfg.weight_shapes();
        put_u32(&mut out, shapes.len())?;
        for (name, _) in shapes {
            let t = &self.tensors[&name];
            put_u32(&mut out, name.len())?;
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, t.shape().len())?;
            for &d in t.shape() {
                put_u32(&mut out, d)?;
            }
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, TasNetConfig)> {
        let mut r = Reader { bytes, pos: 0 };
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::IncompatibleWeights("bad magic, not a CDZW file".into()));
        }
        r.pos = 4;
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::IncompatibleWeights(format!(
                "format version {version}, this build reads {FORMAT_VERSION}"
            )));
        }
        let json_len = r.u32()? as usize;
        let cfg: TasNetConfig = serde_json::from_slice(r.take(json_len)?)
            .map_err(|e| Error::CorruptWeights(format!("config header: {e}")))?;
        cfg.validate().map_err(|e| Error::CorruptWeights(e.to_string()))?;
        let count = r.u32()? as usize;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::CorruptWeights("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::CorruptWeights("tensor too large".into()))?;
            let payload = r.take(
                n.checked_mul(4)
                    .ok_or_else(|| Error::CorruptWeights("tensor too large".into()))?,
            )?;
            let data = payload
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect();
            tensors.insert(
                name,
                Tensor::new(shape, data).map_err(|e| Error::CorruptWeights(e.to_string()))?,
            );
        }
        if r.pos != bytes.len() {
            return Err(Error::CorruptWeights("trailing bytes after last tensor".into()));
        }
        let w = Self { tensors };
        w.check(&cfg)?;
        Ok((w, cfg))
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::invalid("value does not fit in u32"))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::CorruptWeights(format!("truncated at byte {} (wanted {n} more)", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Writes weights and config. Payloads are stored as f32.
pub fn save_weights(weights: &TasNetWeights, cfg: &TasNetConfig, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = weights.to_bytes(cfg)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<(TasNetWeights, TasNetConfig)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    TasNetWeights::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let cfg = TasNetConfig::tiny(true);
        let w = TasNetWeights::init(&cfg, 3).unwrap();
        assert_eq!(w.num_elements(), cfg.param_count());
        let bytes = w.to_bytes(&cfg).unwrap();
        let (w2, cfg2) = TasNetWeights::from_bytes(&bytes).unwrap();
        assert_eq!(w2, w);
        assert_eq!(cfg2, cfg);
        assert_eq!(w2.to_bytes(&cfg2).unwrap(), bytes);
    }

    #[test]
    fn init_is_seeded() {
        let cfg = TasNetConfig::tiny(false);
        assert_eq!(
            TasNetWeights::init(&cfg, 1).unwrap(),
            TasNetWeights::init(&cfg, 1).unwrap()
        );
        assert_ne!(
            TasNetWeights::init(&cfg, 1).unwrap(),
            TasNetWeights::init(&cfg, 2).unwrap()
        );
    }

    #[test]
    fn damaged_files() {
        let cfg = TasNetConfig::tiny(false);
        let bytes = TasNetWeights::init(&cfg, 3).unwrap().to_bytes(&cfg).unwrap();
        for cut in [3, 6, 10, 40, bytes.len() / 2, bytes.len() - 1] {
            let r = TasNetWeights::from_bytes(&bytes[..cut]);
            if cut < 4 {
                assert!(matches!(r, Err(Error::IncompatibleWeights(_))));
            } else {
                assert!(matches!(r, Err(Error::CorruptWeights(_))), "cut {cut}");
            }
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            TasNetWeights::from_bytes(&bad),
            Err(Error::IncompatibleWeights(_))
        ));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(
            TasNetWeights::from_bytes(&bad),
            Err(Error::IncompatibleWeights(_))
        ));
    }

    #[test]
    fn config_shape_mismatch() {
        let cfg = TasNetConfig::tiny(false);
        let w = TasNetWeights::init(&cfg, 3).unwrap();
        let other = TasNetConfig {
            bottleneck: 9,
            ..cfg.clone()
        };
        assert!(matches!(w.check(&other), Err(Error::CorruptWeights(_))));
        // a file whose header disagrees with its tensors
        let mut bytes = w.to_bytes(&cfg).unwrap();
        let json = serde_json::to_vec(&cfg).unwrap();
        let patched = String::from_utf8(json.clone())
            .unwrap()
            .replace("\"bottleneck\":8", "\"bottleneck\":9");
        assert_eq!(patched.len(), json.len());
        bytes[12..12 + json.len()].copy_from_slice(patched.as_bytes());
        assert!(matches!(
            TasNetWeights::from_bytes(&bytes),
            Err(Error::CorruptWeights(_))
        ));
    }
}
