//! Time-domain separation network: strided convolutional encoder, a stack of
//! dilated depthwise-separable residual blocks producing masks, and a
//! transposed-convolution decoder. Causal models use cumulative layer norm and
//! left-only padding; non-causal models use global layer norm and centred
//! padding.

mod config;
pub mod graph;
pub(crate) mod kernels;
mod stream;
mod tensor;
mod weights;

use std::borrow::Cow;
use std::path::Path;

pub use config::{MaskActivation, NormKind, TasNetConfig};
pub use stream::{SourceSamples, StreamingSession};
pub use tensor::Tensor;
pub use weights::{load_weights, save_weights, TasNetWeights, FORMAT_VERSION, MAGIC};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use graph::{op_decode, op_rows, Eval};

/// Encoder output.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentFrames {
    /// `[N, frames]`.
    pub frames: Tensor,
    pub frame_rate: f64,
    pub sample_rate: u32,
    pub num_samples: usize,
}

impl LatentFrames {
    pub fn num_frames(&self) -> usize {
        self.frames.shape()[1]
    }
}

/// Target estimate and the rest of the mix.
#[derive(Debug, Clone, PartialEq)]
pub struct Separation {
    pub target: AudioBuffer,
    pub residual: AudioBuffer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TasNet {
    cfg: TasNetConfig,
    weights: TasNetWeights,
}

pub(crate) fn buffer_to_tensor(buf: &AudioBuffer) -> Result<Tensor> {
    Tensor::from_rows(buf.channels())
}

fn tensor_to_buffer(t: &Tensor, sample_rate: u32) -> Result<AudioBuffer> {
    AudioBuffer::new(t.to_rows(), sample_rate)
}

impl TasNet {
    pub fn new(cfg: TasNetConfig, weights: TasNetWeights) -> Result<Self> {
        cfg.validate()?;
        weights.check(&cfg)?;
        Ok(Self { cfg, weights })
    }

    pub fn init(cfg: TasNetConfig, seed: u64) -> Result<Self> {
        let weights = TasNetWeights::init(&cfg, seed)?;
        Ok(Self { cfg, weights })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (weights, cfg) = load_weights(path)?;
        Ok(Self { cfg, weights })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_weights(&self.weights, &self.cfg, path)
    }

    pub fn config(&self) -> &TasNetConfig {
        &self.cfg
    }

    pub fn weights(&self) -> &TasNetWeights {
        &self.weights
    }

    pub fn into_parts(self) -> (TasNetConfig, TasNetWeights) {
        (self.cfg, self.weights)
    }

    pub fn receptive_field(&self) -> (usize, usize) {
        self.cfg.receptive_field()
    }

    fn check_input(&self, mixture: &AudioBuffer) -> Result<Tensor> {
        if mixture.num_channels() != self.cfg.in_channels {
            return Err(Error::invalid(format!(
                "model takes {} channels, got {}",
                self.cfg.in_channels,
                mixture.num_channels()
            )));
        }
        if mixture.len() < self.cfg.kernel_len {
            return Err(Error::TooShort {
                needed: self.cfg.kernel_len,
                got: mixture.len(),
            });
        }
        buffer_to_tensor(mixture)
    }

    pub fn encode(&self, mixture: &AudioBuffer) -> Result<LatentFrames> {
        let x = self.check_input(mixture)?;
        let mut g = Eval::new(&self.weights);
        let latent = graph::encoder(&mut g, &self.cfg, &Cow::Owned(x))?;
        Ok(LatentFrames {
            frames: latent.into_owned(),
            frame_rate: mixture.sample_rate() as f64 / self.cfg.stride() as f64,
            sample_rate: mixture.sample_rate(),
            num_samples: mixture.len(),
        })
    }

    /// Masks shaped `[n_sources, N, frames]`.
    pub fn separator_masks(&self, latent: &LatentFrames) -> Result<Tensor> {
        let mut g = Eval::new(&self.weights);
        let m = graph::masks(&mut g, &self.cfg, &Cow::Borrowed(&latent.frames))?.into_owned();
        let (_, f) = m.dims2()?;
        Tensor::new(vec![self.cfg.n_sources, self.cfg.n_filters, f], m.into_data())
    }

    /// Decodes `latent ⊙ mask` back to the mixture's length. Samples past the
    /// last full frame are zero.
    pub fn decode(&self, latent: &LatentFrames, mask: &Tensor) -> Result<AudioBuffer> {
        latent.frames.same_shape(mask)?;
        let z = graph::op_zip(&latent.frames, mask, |a, b| a * b)?;
        self.decode_tensor(latent, &z)
    }

    pub fn decode_unmasked(&self, latent: &LatentFrames) -> Result<AudioBuffer> {
        self.decode_tensor(latent, &latent.frames)
    }

    fn decode_tensor(&self, latent: &LatentFrames, z: &Tensor) -> Result<AudioBuffer> {
        let basis = self.weights.get("decoder.basis")?;
        let y = op_decode(z, basis, self.cfg.stride(), latent.num_samples)?;
        tensor_to_buffer(&y, latent.sample_rate)
    }

    /// One estimate per source, each shaped like the mixture.
    pub fn separate_all(&self, mixture: &AudioBuffer) -> Result<Vec<AudioBuffer>> {
        let x = self.check_input(mixture)?;
        let mut g = Eval::new(&self.weights);
        graph::separate(&mut g, &self.cfg, &Cow::Owned(x), mixture.len())?
            .iter()
            .map(|t| tensor_to_buffer(t, mixture.sample_rate()))
            .collect()
    }

    pub fn separate(&self, mixture: &AudioBuffer) -> Result<Separation> {
        if self.cfg.n_sources != 2 {
            return Err(Error::invalid("target/residual split needs a two-source model"));
        }
        let mut v = self.separate_all(mixture)?;
        let residual = v.pop().expect("two sources");
        let target = v.pop().expect("two sources");
        Ok(Separation { target, residual })
    }

    pub fn stream(&self) -> Result<StreamingSession<'_>> {
        StreamingSession::new(self)
    }

    /// Mask rows of one source from a `[n_sources, N, F]` tensor.
    pub fn source_mask(&self, masks: &Tensor, source: usize) -> Result<Tensor> {
        let f = *masks.shape().last().unwrap_or(&0);
        let flat = Tensor::new(vec![self.cfg.n_sources * self.cfg.n_filters, f], masks.data().to_vec())?;
        op_rows(&flat, source * self.cfg.n_filters, self.cfg.n_filters)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::rng_for;
    use rand::Rng;

    fn noise(channels: usize, n: usize, seed: u64) -> AudioBuffer {
        let mut rng = rng_for(seed);
        AudioBuffer::new(
            (0..channels)
                .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect(),
            16_000,
        )
        .unwrap()
    }

    #[test]
    fn shapes_and_zero_input() {
        for causal in [false, true] {
            let m = TasNet::init(TasNetConfig::tiny(causal), 1).unwrap();
            let x = noise(2, 203, 4);
            let s = m.separate(&x).unwrap();
            assert_eq!(s.target.len(), 203);
            assert_eq!(s.residual.num_channels(), 2);
            let z = AudioBuffer::silent(2, 203, 16_000).unwrap();
            let s = m.separate(&z).unwrap();
            assert_eq!(s.target.energy(), 0.0);
            assert_eq!(s.residual.energy(), 0.0);
        }
    }

    #[test]
    fn encoder_frames() {
        let m = TasNet::init(TasNetConfig::tiny(false), 1).unwrap();
        let lat = m.encode(&noise(2, 16, 1)).unwrap();
        assert_eq!(lat.num_frames(), 1);
        assert_eq!(m.encode(&noise(2, 100, 1)).unwrap().num_frames(), (100 - 16) / 8 + 1);
        assert!(matches!(m.encode(&noise(2, 15, 1)), Err(Error::TooShort { .. })));
        let zero = m.encode(&AudioBuffer::silent(2, 64, 16_000).unwrap()).unwrap();
        assert!(zero.frames.data().iter().all(|&v| v == 0.0));
        assert_eq!(lat.frame_rate, 2000.0);
    }

    #[test]
    fn encoder_is_homogeneous_where_active() {
        // positive basis on a positive input keeps every pre-activation above zero
        let cfg = TasNetConfig::tiny(false);
        let mut w = TasNetWeights::init(&cfg, 5).unwrap();
        for v in w.get_mut("encoder.basis").unwrap().data_mut() {
            *v = v.abs() + 0.01;
        }
        let m = TasNet::new(cfg, w).unwrap();
        let x = AudioBuffer::new(
            vec![vec![0.3; 64], (0..64).map(|i| 0.1 + i as f64 / 100.0).collect()],
            16_000,
        )
        .unwrap();
        let a = m.encode(&x).unwrap();
        let b = m.encode(&x.scaled(2.0)).unwrap();
        for (p, q) in a.frames.data().iter().zip(b.frames.data()) {
            assert!(*p > 0.0);
            assert!((2.0 * p - q).abs() <= 1e-12 * q.abs());
        }
    }

    #[test]
    fn decode_contracts() {
        let m = TasNet::init(TasNetConfig::tiny(false), 2).unwrap();
        let lat = m.encode(&noise(2, 205, 9)).unwrap();
        let shape = lat.frames.shape().to_vec();
        let silent = m.decode(&lat, &Tensor::zeros(shape.clone())).unwrap();
        assert_eq!(silent.energy(), 0.0);
        assert_eq!(silent.len(), 205);
        let ones = m.decode(&lat, &Tensor::filled(shape, 1.0)).unwrap();
        assert_eq!(ones, m.decode_unmasked(&lat).unwrap());
        // uncovered tail: frames end at (F-1)*8 + 16 = 200
        assert!(ones.channel(0)[200..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sigmoid_masks_are_independent() {
        let cfg = TasNetConfig {
            mask_activation: MaskActivation::Sigmoid,
            ..TasNetConfig::tiny(false)
        };
        let m = TasNet::init(cfg, 3).unwrap();
        let lat = m.encode(&noise(2, 300, 2)).unwrap();
        let masks = m.separator_masks(&lat).unwrap();
        assert!(masks.data().iter().all(|&v| v > 0.0 && v < 1.0));
        let a = m.source_mask(&masks, 0).unwrap();
        let b = m.source_mask(&masks, 1).unwrap();
        let off = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x + y - 1.0).abs())
            .fold(0.0, f64::max);
        assert!(off > 1e-3, "masks should not be forced to sum to one");
    }

    #[test]
    fn causal_masks_ignore_future_frames() {
        let m = TasNet::init(TasNetConfig::tiny(true), 4).unwrap();
        let lat = m.encode(&noise(2, 400, 3)).unwrap();
        let base = m.separator_masks(&lat).unwrap();
        let f = lat.num_frames();
        let t = 20;
        let mut pert = lat.clone();
        let n = pert.frames.shape()[0];
        for k in 0..n {
            for j in t + 1..f {
                pert.frames.data_mut()[k * f + j] += 0.5;
            }
        }
        let other = m.separator_masks(&pert).unwrap();
        let rows = base.len() / f;
        for r in 0..rows {
            assert_eq!(base.data()[r * f..r * f + t + 1], other.data()[r * f..r * f + t + 1]);
        }

        let nc = TasNet::init(TasNetConfig::tiny(false), 4).unwrap();
        let lat = nc.encode(&noise(2, 400, 3)).unwrap();
        let base = nc.separator_masks(&lat).unwrap();
        let mut pert = lat.clone();
        for k in 0..n {
            pert.frames.data_mut()[k * f + t + 1] += 0.5;
        }
        let other = nc.separator_masks(&pert).unwrap();
        let changed = (0..rows).any(|r| base.data()[r * f..r * f + t + 1] != other.data()[r * f..r * f + t + 1]);
        assert!(changed);
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn streaming_matches_batch() {
        let m = TasNet::init(TasNetConfig::tiny(true), 8).unwrap();
        let x = noise(2, 1234, 5);
        let batch = m.separate_all(&x).unwrap();
        for chunk in [1, 7, 8, 100, 500, 1234] {
            let mut s = m.stream().unwrap();
            let mut got = vec![vec![Vec::new(); 2]; 2];
            let mut start = 0;
            while start < x.len() {
                let end = (start + chunk).min(x.len());
                let c: Vec<Vec<f64>> = x.channels().iter().map(|ch| ch[start..end].to_vec()).collect();
                for (k, src) in s.push(&c).unwrap().into_iter().enumerate() {
                    for (ch, v) in src.into_iter().enumerate() {
                        got[k][ch].extend(v);
                    }
                }
                start = end;
            }
            for (k, src) in s.finish().unwrap().into_iter().enumerate() {
                for (ch, v) in src.into_iter().enumerate() {
                    got[k][ch].extend(v);
                }
            }
            for k in 0..2 {
                for ch in 0..2 {
                    let b = batch[k].channel(ch);
                    assert_eq!(got[k][ch].len(), b.len());
                    let err = got[k][ch].iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
                    assert!(err <= 1e-10, "chunk {chunk}: {err}");
                }
            }
        }
        assert!(TasNet::init(TasNetConfig::tiny(false), 1).unwrap().stream().is_err());
    }
}
