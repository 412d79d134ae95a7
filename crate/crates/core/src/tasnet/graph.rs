//! The network written once against an abstract evaluator.
//!
//! Plain inference, the gradient tape and the streaming session implement
//! [`Graph`], so all three run the same layer sequence with the same kernels.

use std::borrow::Cow;

use super::config::{MaskActivation, NormKind, TasNetConfig};
use super::kernels::{self, ClnState, NormAux};
use super::tensor::Tensor;
use super::weights::TasNetWeights;
use crate::error::{Error, Result};

pub trait Graph {
    type V;

    fn weight(&mut self, name: &str) -> Result<Self::V>;
    /// Strided convolution of `[c_in, T]` with basis `[N, c_in, L]`.
    fn encode(&mut self, x: &Self::V, basis: &Self::V, stride: usize) -> Result<Self::V>;
    /// Transposed convolution of `[N, F]` to `[c_out, len]`.
    fn decode(&mut self, z: &Self::V, basis: &Self::V, stride: usize, len: usize) -> Result<Self::V>;
    fn pointwise(&mut self, x: &Self::V, w: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn depthwise(
        &mut self,
        x: &Self::V,
        w: &Self::V,
        b: &Self::V,
        dilation: usize,
        pad: (usize, usize),
    ) -> Result<Self::V>;
    fn prelu(&mut self, x: &Self::V, alpha: &Self::V) -> Result<Self::V>;
    fn relu(&mut self, x: &Self::V) -> Result<Self::V>;
    fn sigmoid(&mut self, x: &Self::V) -> Result<Self::V>;
    fn norm(&mut self, x: &Self::V, gain: &Self::V, bias: &Self::V, kind: NormKind) -> Result<Self::V>;
    fn add(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn mul(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    /// Rows `start..start + count` of a rank-2 value.
    fn rows(&mut self, x: &Self::V, start: usize, count: usize) -> Result<Self::V>;
}

fn dims3(t: &Tensor) -> Result<(usize, usize, usize)> {
    match t.shape()[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err(Error::invalid(format!("expected rank 3, got {:?}", t.shape()))),
    }
}

fn check_len(t: &Tensor, n: usize, what: &str) -> Result<()> {
    if t.len() == n {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{what}: expected {n} elements, got {}",
            t.len()
        )))
    }
}

pub(crate) fn op_encode(x: &Tensor, basis: &Tensor, stride: usize) -> Result<Tensor> {
    let (c, t) = x.dims2()?;
    let (n, bc, l) = dims3(basis)?;
    if bc != c {
        return Err(Error::invalid(format!("encoder expects {bc} channels, got {c}")));
    }
    if t < l {
        return Err(Error::TooShort { needed: l, got: t });
    }
    let frames = kernels::frame_count(t, l, stride);
    Tensor::new(
        vec![n, frames],
        kernels::encode(x.data(), c, t, basis.data(), n, l, stride),
    )
}

pub(crate) fn op_decode(z: &Tensor, basis: &Tensor, stride: usize, len: usize) -> Result<Tensor> {
    let (n, frames) = z.dims2()?;
    let (bn, c, l) = dims3(basis)?;
    if bn != n {
        return Err(Error::invalid(format!("decoder expects {bn} latent channels, got {n}")));
    }
    if frames > 0 && (frames - 1) * stride + l > len {
        return Err(Error::invalid("decoder output shorter than the frames it covers"));
    }
    let mut out = vec![0.0; c * len];
    kernels::decode_into(z.data(), n, frames, basis.data(), c, l, stride, &mut out, len);
    Tensor::new(vec![c, len], out)
}

pub(crate) fn op_pointwise(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (c_in, t) = x.dims2()?;
    let (c_out, w_in) = w.dims2()?;
    if w_in != c_in {
        return Err(Error::invalid(format!("1x1 conv expects {w_in} channels, got {c_in}")));
    }
    check_len(b, c_out, "1x1 conv bias")?;
    Tensor::new(
        vec![c_out, t],
        kernels::pointwise(x.data(), c_in, t, w.data(), b.data()),
    )
}

pub(crate) fn op_depthwise(x: &Tensor, w: &Tensor, b: &Tensor, dilation: usize, pad: (usize, usize)) -> Result<Tensor> {
    let (h, t) = x.dims2()?;
    let (wh, p) = w.dims2()?;
    if wh != h {
        return Err(Error::invalid(format!("depthwise conv expects {wh} channels, got {h}")));
    }
    check_len(b, h, "depthwise bias")?;
    let t_out = kernels::depthwise_len(t, p, dilation, pad.0, pad.1);
    Tensor::new(
        vec![h, t_out],
        kernels::depthwise(x.data(), t, w.data(), b.data(), p, dilation, pad.0, pad.1),
    )
}

pub(crate) fn alpha_of(alpha: &Tensor) -> Result<f64> {
    check_len(alpha, 1, "prelu alpha")?;
    Ok(alpha.data()[0])
}

pub(crate) fn op_norm(
    x: &Tensor,
    gain: &Tensor,
    bias: &Tensor,
    kind: NormKind,
    state: Option<&mut ClnState>,
) -> Result<(Tensor, NormAux)> {
    let (c, t) = x.dims2()?;
    check_len(gain, c, "norm gain")?;
    check_len(bias, c, "norm bias")?;
    let (y, aux) = match kind {
        NormKind::Global => kernels::gln(x.data(), c, t, gain.data(), bias.data()),
        NormKind::Cumulative => {
            let mut fresh = ClnState::default();
            kernels::cln(x.data(), c, t, gain.data(), bias.data(), state.unwrap_or(&mut fresh))
        }
    };
    Ok((Tensor::new(vec![c, t], y)?, aux))
}

pub(crate) fn op_zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    a.same_shape(b)?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data)
}

pub(crate) fn op_rows(x: &Tensor, start: usize, count: usize) -> Result<Tensor> {
    let (r, c) = x.dims2()?;
    if start + count > r {
        return Err(Error::invalid(format!("rows {start}..{} of {r}", start + count)));
    }
    Tensor::new(vec![count, c], x.data()[start * c..(start + count) * c].to_vec())
}

fn map(x: &Tensor, f: impl Fn(&[f64]) -> Vec<f64>) -> Tensor {
    Tensor::new(x.shape().to_vec(), f(x.data())).expect("elementwise map keeps the shape")
}

/// Separator: bottleneck, residual blocks, skip sum, mask head. Returns
/// `[n_sources * N, F]`.
pub fn masks<G: Graph>(g: &mut G, cfg: &TasNetConfig, latent: &G::V) -> Result<G::V> {
    let w = g.weight("separator.bottleneck.weight")?;
    let b = g.weight("separator.bottleneck.bias")?;
    let mut x = g.pointwise(latent, &w, &b)?;
    let kind = cfg.norm_kind();
    let blocks = cfg.num_blocks();
    let mut skip_sum: Option<G::V> = None;
    for i in 0..blocks {
        let name = |s: &str| format!("separator.blocks.{i}.{s}");
        let (w, b) = (g.weight(&name("in.weight"))?, g.weight(&name("in.bias"))?);
        let y = g.pointwise(&x, &w, &b)?;
        let a = g.weight(&name("prelu1.alpha"))?;
        let y = g.prelu(&y, &a)?;
        let (gn, bn) = (g.weight(&name("norm1.gain"))?, g.weight(&name("norm1.bias"))?);
        let y = g.norm(&y, &gn, &bn, kind)?;
        let (w, b) = (g.weight(&name("depthwise.weight"))?, g.weight(&name("depthwise.bias"))?);
        let y = g.depthwise(&y, &w, &b, cfg.dilation(i), cfg.padding(i))?;
        let a = g.weight(&name("prelu2.alpha"))?;
        let y = g.prelu(&y, &a)?;
        let (gn, bn) = (g.weight(&name("norm2.gain"))?, g.weight(&name("norm2.bias"))?);
        let y = g.norm(&y, &gn, &bn, kind)?;
        let (w, b) = (g.weight(&name("skip.weight"))?, g.weight(&name("skip.bias"))?);
        let skip = g.pointwise(&y, &w, &b)?;
        skip_sum = Some(match skip_sum {
            None => skip,
            Some(s) => g.add(&s, &skip)?,
        });
        // the last block's residual output feeds nothing
        if i + 1 < blocks {
            let (w, b) = (g.weight(&name("residual.weight"))?, g.weight(&name("residual.bias"))?);
            let r = g.pointwise(&y, &w, &b)?;
            x = g.add(&x, &r)?;
        }
    }
    let skip_sum = skip_sum.ok_or_else(|| Error::invalid("separator has no blocks"))?;
    let a = g.weight("separator.out_prelu.alpha")?;
    let y = g.prelu(&skip_sum, &a)?;
    let (w, b) = (g.weight("separator.mask.weight")?, g.weight("separator.mask.bias")?);
    let m = g.pointwise(&y, &w, &b)?;
    match cfg.mask_activation {
        MaskActivation::Relu => g.relu(&m),
        MaskActivation::Sigmoid => g.sigmoid(&m),
    }
}

/// Encoder with ReLU: `[c_in, T]` to `[N, F]`.
pub fn encoder<G: Graph>(g: &mut G, cfg: &TasNetConfig, mixture: &G::V) -> Result<G::V> {
    let basis = g.weight("encoder.basis")?;
    let pre = g.encode(mixture, &basis, cfg.stride())?;
    g.relu(&pre)
}

/// Full network: one `[c_in, len]` estimate per source.
pub fn separate<G: Graph>(g: &mut G, cfg: &TasNetConfig, mixture: &G::V, len: usize) -> Result<Vec<G::V>> {
    let latent = encoder(g, cfg, mixture)?;
    let m = masks(g, cfg, &latent)?;
    let basis = g.weight("decoder.basis")?;
    (0..cfg.n_sources)
        .map(|k| {
            let mk = g.rows(&m, k * cfg.n_filters, cfg.n_filters)?;
            let z = g.mul(&latent, &mk)?;
            g.decode(&z, &basis, cfg.stride(), len)
        })
        .collect()
}

/// Plain forward evaluation; weights are borrowed, nothing is retained.
pub struct Eval<'w> {
    weights: &'w TasNetWeights,
}

impl<'w> Eval<'w> {
    pub fn new(weights: &'w TasNetWeights) -> Self {
        Self { weights }
    }
}

impl<'w> Graph for Eval<'w> {
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
        op_depthwise(x, w, b, dilation, pad).map(Cow::Owned)
    }

    fn prelu(&mut self, x: &Self::V, alpha: &Self::V) -> Result<Self::V> {
        let a = alpha_of(alpha)?;
        Ok(Cow::Owned(map(x, |d| kernels::prelu(d, a))))
    }

    fn relu(&mut self, x: &Self::V) -> Result<Self::V> {
        Ok(Cow::Owned(map(x, kernels::relu)))
    }

    fn sigmoid(&mut self, x: &Self::V) -> Result<Self::V> {
        Ok(Cow::Owned(map(x, kernels::sigmoid)))
    }

    fn norm(&mut self, x: &Self::V, gain: &Self::V, bias: &Self::V, kind: NormKind) -> Result<Self::V> {
        op_norm(x, gain, bias, kind, None).map(|(y, _)| Cow::Owned(y))
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
