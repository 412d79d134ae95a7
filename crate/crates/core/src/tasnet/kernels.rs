//! Forward and backward kernels on `[channels × time]` row-major maps.
//!
//! Every output element is accumulated in a fixed order that does not depend
//! on how many frames are processed at once, so chunked and batch evaluation
//! agree bit for bit.

#![allow(clippy::too_many_arguments)]

pub(crate) const NORM_EPS: f64 = 1e-8;

/// Number of encoder frames for `t` samples.
pub(crate) fn frame_count(t: usize, l: usize, stride: usize) -> usize {
    if t < l {
        0
    } else {
        (t - l) / stride + 1
    }
}

/// Strided multichannel convolution. `x`: `[c_in, t]`, `basis`: `[n, c_in, l]`.
pub(crate) fn encode(x: &[f64], c_in: usize, t: usize, basis: &[f64], n: usize, l: usize, stride: usize) -> Vec<f64> {
    let frames = frame_count(t, l, stride);
    let mut out = vec![0.0; n * frames];
    for k in 0..n {
        for f in 0..frames {
            let mut acc = 0.0;
            for c in 0..c_in {
                let w = &basis[(k * c_in + c) * l..(k * c_in + c + 1) * l];
                let xs = &x[c * t + f * stride..c * t + f * stride + l];
                for (wi, xi) in w.iter().zip(xs) {
                    acc += wi * xi;
                }
            }
            out[k * frames + f] = acc;
        }
    }
    out
}

/// Gradient of `encode` with respect to the basis.
pub(crate) fn encode_backward_basis(
    grad: &[f64],
    x: &[f64],
    c_in: usize,
    t: usize,
    n: usize,
    l: usize,
    stride: usize,
) -> Vec<f64> {
    let frames = frame_count(t, l, stride);
    let mut d = vec![0.0; n * c_in * l];
    for k in 0..n {
        for f in 0..frames {
            let g = grad[k * frames + f];
            if g == 0.0 {
                continue;
            }
            for c in 0..c_in {
                let xs = &x[c * t + f * stride..c * t + f * stride + l];
                let dw = &mut d[(k * c_in + c) * l..(k * c_in + c + 1) * l];
                for (dwi, xi) in dw.iter_mut().zip(xs) {
                    *dwi += g * xi;
                }
            }
        }
    }
    d
}

/// Transposed strided convolution, overlap-added into `out` (`c_out` rows of
/// length `out_len`). Frame `f` lands at sample `f * stride`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn decode_into(
    z: &[f64],
    n: usize,
    frames: usize,
    basis: &[f64],
    c_out: usize,
    l: usize,
    stride: usize,
    out: &mut [f64],
    out_len: usize,
) {
    let mut col = vec![0.0; n];
    for f in 0..frames {
        for (k, v) in col.iter_mut().enumerate() {
            *v = z[k * frames + f];
        }
        for c in 0..c_out {
            let row = &mut out[c * out_len + f * stride..c * out_len + f * stride + l];
            for (j, o) in row.iter_mut().enumerate() {
                let mut s = 0.0;
                for (k, zk) in col.iter().enumerate() {
                    s += zk * basis[(k * c_out + c) * l + j];
                }
                *o += s;
            }
        }
    }
}

/// Gradients of `decode_into` with respect to the latent and the basis.
#[allow(clippy::too_many_arguments)]
pub(crate) fn decode_backward(
    grad: &[f64],
    out_len: usize,
    z: &[f64],
    n: usize,
    frames: usize,
    basis: &[f64],
    c_out: usize,
    l: usize,
    stride: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut dz = vec![0.0; n * frames];
    let mut db = vec![0.0; basis.len()];
    for f in 0..frames {
        for c in 0..c_out {
            let g = &grad[c * out_len + f * stride..c * out_len + f * stride + l];
            for k in 0..n {
                let w = &basis[(k * c_out + c) * l..(k * c_out + c + 1) * l];
                let zk = z[k * frames + f];
                let mut acc = 0.0;
                let dw = &mut db[(k * c_out + c) * l..(k * c_out + c + 1) * l];
                for j in 0..l {
                    acc += g[j] * w[j];
                    dw[j] += zk * g[j];
                }
                dz[k * frames + f] += acc;
            }
        }
    }
    (dz, db)
}

/// 1×1 convolution with bias. `w`: `[c_out, c_in]`.
pub(crate) fn pointwise(x: &[f64], c_in: usize, t: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let c_out = b.len();
    let mut out = vec![0.0; c_out * t];
    for o in 0..c_out {
        let row = &mut out[o * t..(o + 1) * t];
        row.fill(b[o]);
        for i in 0..c_in {
            let wi = w[o * c_in + i];
            for (r, xv) in row.iter_mut().zip(&x[i * t..(i + 1) * t]) {
                *r += wi * xv;
            }
        }
    }
    out
}

/// Returns `(dx, dw, db)`.
pub(crate) fn pointwise_backward(
    grad: &[f64],
    x: &[f64],
    c_in: usize,
    t: usize,
    w: &[f64],
    c_out: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut dx = vec![0.0; c_in * t];
    let mut dw = vec![0.0; c_out * c_in];
    let mut db = vec![0.0; c_out];
    for o in 0..c_out {
        let g = &grad[o * t..(o + 1) * t];
        db[o] = g.iter().sum();
        for i in 0..c_in {
            let xi = &x[i * t..(i + 1) * t];
            dw[o * c_in + i] = g.iter().zip(xi).map(|(a, b)| a * b).sum();
            let wi = w[o * c_in + i];
            for (d, gv) in dx[i * t..(i + 1) * t].iter_mut().zip(g) {
                *d += wi * gv;
            }
        }
    }
    (dx, dw, db)
}

/// Output length of a depthwise convolution.
pub(crate) fn depthwise_len(t_in: usize, p: usize, dilation: usize, pad_left: usize, pad_right: usize) -> usize {
    (t_in + pad_left + pad_right).saturating_sub((p - 1) * dilation)
}

/// Per-channel dilated convolution with implicit zero padding. `w`: `[h, p]`.
pub(crate) fn depthwise(
    x: &[f64],
    t_in: usize,
    w: &[f64],
    b: &[f64],
    p: usize,
    dilation: usize,
    pad_left: usize,
    pad_right: usize,
) -> Vec<f64> {
    let h = b.len();
    let t_out = depthwise_len(t_in, p, dilation, pad_left, pad_right);
    let mut out = vec![0.0; h * t_out];
    for c in 0..h {
        let xr = &x[c * t_in..(c + 1) * t_in];
        let row = &mut out[c * t_out..(c + 1) * t_out];
        row.fill(b[c]);
        for (t, r) in row.iter_mut().enumerate() {
            for k in 0..p {
                let pos = t + k * dilation;
                if pos >= pad_left && pos - pad_left < t_in {
                    *r += w[c * p + k] * xr[pos - pad_left];
                }
            }
        }
    }
    out
}

/// Returns `(dx, dw, db)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn depthwise_backward(
    grad: &[f64],
    x: &[f64],
    t_in: usize,
    w: &[f64],
    h: usize,
    p: usize,
    dilation: usize,
    pad_left: usize,
    t_out: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut dx = vec![0.0; h * t_in];
    let mut dw = vec![0.0; h * p];
    let mut db = vec![0.0; h];
    for c in 0..h {
        let g = &grad[c * t_out..(c + 1) * t_out];
        db[c] = g.iter().sum();
        for (t, &gv) in g.iter().enumerate() {
            for k in 0..p {
                let pos = t + k * dilation;
                if pos >= pad_left && pos - pad_left < t_in {
                    let i = c * t_in + pos - pad_left;
                    dw[c * p + k] += gv * x[i];
                    dx[i] += gv * w[c * p + k];
                }
            }
        }
    }
    (dx, dw, db)
}

pub(crate) fn prelu(x: &[f64], alpha: f64) -> Vec<f64> {
    x.iter().map(|&v| if v > 0.0 { v } else { alpha * v }).collect()
}

/// Returns `(dx, dalpha)`.
pub(crate) fn prelu_backward(grad: &[f64], x: &[f64], alpha: f64) -> (Vec<f64>, f64) {
    let mut da = 0.0;
    let dx = grad
        .iter()
        .zip(x)
        .map(|(&g, &v)| {
            if v > 0.0 {
                g
            } else {
                da += g * v;
                alpha * g
            }
        })
        .collect();
    (dx, da)
}

pub(crate) fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

pub(crate) fn relu_backward(grad: &[f64], x: &[f64]) -> Vec<f64> {
    grad.iter()
        .zip(x)
        .map(|(&g, &v)| if v > 0.0 { g } else { 0.0 })
        .collect()
}

pub(crate) fn sigmoid(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            if v >= 0.0 {
                1.0 / (1.0 + (-v).exp())
            } else {
                let e = v.exp();
                e / (1.0 + e)
            }
        })
        .collect()
}

pub(crate) fn sigmoid_backward(grad: &[f64], y: &[f64]) -> Vec<f64> {
    grad.iter().zip(y).map(|(&g, &s)| g * s * (1.0 - s)).collect()
}

/// Saved statistics of a normalization forward pass.
#[derive(Debug, Clone)]
pub(crate) struct NormAux {
    pub xhat: Vec<f64>,
    /// One entry for global norm, one per frame for cumulative norm.
    pub inv_std: Vec<f64>,
    pub mean: Vec<f64>,
    pub count: Vec<f64>,
}

fn affine(xhat: &[f64], c: usize, t: usize, gain: &[f64], bias: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; c * t];
    for ch in 0..c {
        for i in ch * t..(ch + 1) * t {
            y[i] = gain[ch] * xhat[i] + bias[ch];
        }
    }
    y
}

/// Global layer normalization over all channels and frames.
pub(crate) fn gln(x: &[f64], c: usize, t: usize, gain: &[f64], bias: &[f64]) -> (Vec<f64>, NormAux) {
    let m = (c * t) as f64;
    let mean = x.iter().sum::<f64>() / m;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
    let inv = 1.0 / (var + NORM_EPS).sqrt();
    let xhat: Vec<f64> = x.iter().map(|v| (v - mean) * inv).collect();
    let y = affine(&xhat, c, t, gain, bias);
    (
        y,
        NormAux {
            xhat,
            inv_std: vec![inv],
            mean: vec![mean],
            count: vec![m],
        },
    )
}

/// Running statistics of a cumulative layer norm.
#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct ClnState {
    pub count: f64,
    pub sum: f64,
    pub sumsq: f64,
}

/// Cumulative layer normalization: frame `t` uses statistics of frames `≤ t`,
/// continuing from `state`.
pub(crate) fn cln(
    x: &[f64],
    c: usize,
    t: usize,
    gain: &[f64],
    bias: &[f64],
    state: &mut ClnState,
) -> (Vec<f64>, NormAux) {
    let mut xhat = vec![0.0; c * t];
    let mut inv_std = Vec::with_capacity(t);
    let mut means = Vec::with_capacity(t);
    let mut counts = Vec::with_capacity(t);
    for f in 0..t {
        let mut s = 0.0;
        let mut sq = 0.0;
        for ch in 0..c {
            let v = x[ch * t + f];
            s += v;
            sq += v * v;
        }
        state.sum += s;
        state.sumsq += sq;
        state.count += c as f64;
        let mean = state.sum / state.count;
        let var = (state.sumsq / state.count - mean * mean).max(0.0);
        let inv = 1.0 / (var + NORM_EPS).sqrt();
        for ch in 0..c {
            xhat[ch * t + f] = (x[ch * t + f] - mean) * inv;
        }
        inv_std.push(inv);
        means.push(mean);
        counts.push(state.count);
    }
    let y = affine(&xhat, c, t, gain, bias);
    (
        y,
        NormAux {
            xhat,
            inv_std,
            mean: means,
            count: counts,
        },
    )
}

/// Returns `(dgain, dbias, dxhat)` common to both norms.
fn affine_backward(grad: &[f64], aux: &NormAux, c: usize, t: usize, gain: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut dgain = vec![0.0; c];
    let mut dbias = vec![0.0; c];
    let mut dxhat = vec![0.0; c * t];
    for ch in 0..c {
        for i in ch * t..(ch + 1) * t {
            dgain[ch] += grad[i] * aux.xhat[i];
            dbias[ch] += grad[i];
            dxhat[i] = grad[i] * gain[ch];
        }
    }
    (dgain, dbias, dxhat)
}

/// Returns `(dx, dgain, dbias)`.
pub(crate) fn gln_backward(
    grad: &[f64],
    aux: &NormAux,
    c: usize,
    t: usize,
    gain: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (dgain, dbias, dxhat) = affine_backward(grad, aux, c, t, gain);
    let m = (c * t) as f64;
    let inv = aux.inv_std[0];
    let a = dxhat.iter().sum::<f64>() / m;
    let b = dxhat.iter().zip(&aux.xhat).map(|(d, x)| d * x).sum::<f64>() / m;
    let dx = dxhat
        .iter()
        .zip(&aux.xhat)
        .map(|(d, xh)| inv * (d - a - xh * b))
        .collect();
    (dx, dgain, dbias)
}

/// Returns `(dx, dgain, dbias)`.
pub(crate) fn cln_backward(
    grad: &[f64],
    x: &[f64],
    aux: &NormAux,
    c: usize,
    t: usize,
    gain: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (dgain, dbias, dxhat) = affine_backward(grad, aux, c, t, gain);
    // Each frame's mean and variance are functions of the running sums; push
    // their gradients back onto every earlier frame via suffix sums.
    let mut dsum = vec![0.0; t];
    let mut dsumsq = vec![0.0; t];
    for f in 0..t {
        let inv = aux.inv_std[f];
        let (mut a, mut b) = (0.0, 0.0);
        for ch in 0..c {
            a += dxhat[ch * t + f];
            b += dxhat[ch * t + f] * aux.xhat[ch * t + f];
        }
        let dvar = -0.5 * b * inv * inv;
        let dmean = -inv * a - 2.0 * aux.mean[f] * dvar;
        dsum[f] = dmean / aux.count[f];
        dsumsq[f] = dvar / aux.count[f];
    }
    for f in (0..t.saturating_sub(1)).rev() {
        dsum[f] += dsum[f + 1];
        dsumsq[f] += dsumsq[f + 1];
    }
    let mut dx = vec![0.0; c * t];
    for ch in 0..c {
        for f in 0..t {
            let i = ch * t + f;
            dx[i] = dxhat[i] * aux.inv_std[f] + dsum[f] + 2.0 * x[i] * dsumsq[f];
        }
    }
    (dx, dgain, dbias)
}
