//! Chunked causal inference with carried state.

use std::borrow::Cow;

use super::config::NormKind;
use super::graph::{self, alpha_of, op_decode, op_depthwise, op_encode, op_norm, op_pointwise, op_rows, op_zip, Graph};
use super::kernels::{self, ClnState};
use super::tensor::Tensor;
use super::weights::TasNetWeights;
use super::TasNet;
use crate::error::{Error, Result};

/// Evaluator whose depthwise and norm layers continue from the previous chunk.
struct StreamGraph<'w> {
    weights: &'w TasNetWeights,
    history: Vec<Vec<Vec<f64>>>,
    norms: Vec<ClnState>,
    dw_call: usize,
    norm_call: usize,
}

impl<'w> StreamGraph<'w> {
    fn begin_chunk(&mut self) {
        self.dw_call = 0;
        self.norm_call = 0;
    }
}

impl<'w> Graph for StreamGraph<'w> {
    type V = Cow<'w, Tensor>;

    fn weight(&mut self, name: &str) -> Result<Self::V> {
        self.weights.get(name).map(Cow::Borrowed)
    }

    fn encode(&mut self, x: &Self::V, basis: &Self::V, stride: usize) -> Result<Self::V> {
        op_encode(x, basis, stride).map(Cow::Owned)
    }

    fn decode(&mut self, z: &Self::V, basis: &Self::V, stride: usize, len: usize) -> Result<Self::V> {
        op_decode(z, basis, stride, len).map(Cow::Owned)
    }

    fn pointwise(&mut self, x: &Self::V, w: &Self::V, b: &Self::V) -> Result<Self::V> {
        op_pointwise(x, w, b).map(Cow::Owned)
    }

    fn depthwise(
        &mut self,
        x: &Self::V,
        w: &Self::V,
        b: &Self::V,
        dilation: usize,
        pad: (usize, usize),
    ) -> Result<Self::V> {
        if pad.1 != 0 {
            return Err(Error::invalid("streaming needs left-only padding"));
        }
        let (h, t) = x.dims2()?;
        let k = self.dw_call;
        self.dw_call += 1;
        if self.history.len() <= k {
            self.history.push(vec![vec![0.0; pad.0]; h]);
        }
        let hist = &mut self.history[k];
        let ext: Vec<Vec<f64>> = (0..h).map(|c| [hist[c].as_slice(), x.row(c)].concat()).collect();
        let y = op_depthwise(&Tensor::from_rows(&ext)?, w, b, dilation, (0, 0))?;
        for (c, row) in ext.into_iter().enumerate() {
            hist[c] = row[t..].to_vec();
        }
        Ok(Cow::Owned(y))
    }

    fn prelu(&mut self, x: &Self::V, alpha: &Self::V) -> Result<Self::V> {
        let a = alpha_of(alpha)?;
        Ok(Cow::Owned(Tensor::new(
            x.shape().to_vec(),
            kernels::prelu(x.data(), a),
        )?))
    }

    fn relu(&mut self, x: &Self::V) -> Result<Self::V> {
        Ok(Cow::Owned(Tensor::new(x.shape().to_vec(), kernels::relu(x.data()))?))
    }

    fn sigmoid(&mut self, x: &Self::V) -> Result<Self::V> {
        Ok(Cow::Owned(Tensor::new(x.shape().to_vec(), kernels::sigmoid(x.data()))?))
    }

    fn norm(&mut self, x: &Self::V, gain: &Self::V, bias: &Self::V, kind: NormKind) -> Result<Self::V> {
        if kind != NormKind::Cumulative {
            return Err(Error::invalid("streaming needs cumulative normalization"));
        }
        let k = self.norm_call;
        self.norm_call += 1;
        if self.norms.len() <= k {
            self.norms.push(ClnState::default());
        }
        op_norm(x, gain, bias, kind, Some(&mut self.norms[k])).map(|(y, _)| Cow::Owned(y))
    }

    fn add(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V> {
        op_zip(a, b, |x, y| x + y).map(Cow::Owned)
    }

    fn mul(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V> {
        op_zip(a, b, |x, y| x * y).map(Cow::Owned)
    }

    fn rows(&mut self, x: &Self::V, start: usize, count: usize) -> Result<Self::V> {
        op_rows(x, start, count).map(Cow::Owned)
    }
}

/// Per-source, per-channel samples released by one call.
pub type SourceSamples = Vec<Vec<Vec<f64>>>;

/// Single-owner streaming state for a causal model. Concatenated outputs
/// equal batch [`TasNet::separate_all`] on the concatenated input.
pub struct StreamingSession<'m> {
    model: &'m TasNet,
    graph: StreamGraph<'m>,
    input: Vec<Vec<f64>>,
    carry: Vec<Vec<Vec<f64>>>,
    pushed: usize,
    emitted: usize,
}

impl<'m> StreamingSession<'m> {
    pub(super) fn new(model: &'m TasNet) -> Result<Self> {
        let cfg = model.config();
        if !cfg.causal {
            return Err(Error::invalid("streaming inference needs a causal model"));
        }
        let overlap = cfg.kernel_len - cfg.stride();
        Ok(Self {
            model,
            graph: StreamGraph {
                weights: model.weights(),
                history: Vec::new(),
                norms: Vec::new(),
                dw_call: 0,
                norm_call: 0,
            },
            input: vec![Vec::new(); cfg.in_channels],
            carry: vec![vec![vec![0.0; overlap]; cfg.in_channels]; cfg.n_sources],
            pushed: 0,
            emitted: 0,
        })
    }

    pub fn samples_pushed(&self) -> usize {
        self.pushed
    }

    /// Feeds one chunk (one slice per channel); returns the samples that are
    /// now final.
    pub fn push(&mut self, chunk: &[Vec<f64>]) -> Result<SourceSamples> {
        let cfg = self.model.config().clone();
        if chunk.len() != cfg.in_channels {
            return Err(Error::invalid(format!(
                "expected {} channels, got {}",
                cfg.in_channels,
                chunk.len()
            )));
        }
        let n = chunk[0].len();
        if chunk.iter().any(|c| c.len() != n) {
            return Err(Error::invalid("chunk channels differ in length"));
        }
        for (buf, c) in self.input.iter_mut().zip(chunk) {
            buf.extend_from_slice(c);
        }
        self.pushed += n;

        let (l, s) = (cfg.kernel_len, cfg.stride());
        let frames = kernels::frame_count(self.input[0].len(), l, s);
        let mut out = vec![vec![Vec::new(); cfg.in_channels]; cfg.n_sources];
        if frames == 0 {
            return Ok(out);
        }
        let span = (frames - 1) * s + l;
        let x = Tensor::from_rows(&self.input.iter().map(|c| c[..span].to_vec()).collect::<Vec<_>>())?;
        let g = &mut self.graph;
        g.begin_chunk();
        let x = Cow::Owned(x);
        let latent = graph::encoder(g, &cfg, &x)?;
        let m = graph::masks(g, &cfg, &latent)?;
        let basis = self.model.weights().get("decoder.basis")?;
        let ready = frames * s;
        for (k, out_k) in out.iter_mut().enumerate() {
            let mk = op_rows(&m, k * cfg.n_filters, cfg.n_filters)?;
            let z = op_zip(&latent, &mk, |a, b| a * b)?;
            let mut buf = vec![0.0; cfg.in_channels * span];
            for (c, carry) in self.carry[k].iter().enumerate() {
                buf[c * span..c * span + carry.len()].copy_from_slice(carry);
            }
            kernels::decode_into(
                z.data(),
                cfg.n_filters,
                frames,
                basis.data(),
                cfg.in_channels,
                l,
                s,
                &mut buf,
                span,
            );
            for c in 0..cfg.in_channels {
                let row = &buf[c * span..(c + 1) * span];
                out_k[c] = row[..ready].to_vec();
                self.carry[k][c] = row[ready..].to_vec();
            }
        }
        for buf in &mut self.input {
            buf.drain(..ready);
        }
        self.emitted += ready;
        Ok(out)
    }

    /// Releases the remaining samples, padding uncovered tail samples with
    /// zeros up to the total pushed length.
    pub fn finish(self) -> Result<SourceSamples> {
        let l = self.model.config().kernel_len;
        if self.pushed < l {
            return Err(Error::TooShort {
                needed: l,
                got: self.pushed,
            });
        }
        let rest = self.pushed - self.emitted;
        Ok(self
            .carry
            .into_iter()
            .map(|src| {
                src.into_iter()
                    .map(|mut c| {
                        c.resize(rest, 0.0);
                        c
                    })
                    .collect()
            })
            .collect())
    }
}
