//! Reverse-mode gradient tape over the network's layer ops.
//!
//! Nodes are appended in execution order, which is a topological order, and
//! `backward` walks them once in reverse. A tape is single-use.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use super::loss::{check_pairs, l1_value, neg_snr_term, NEG_SNR_FLOOR};
use crate::error::{Error, Result};
use crate::tasnet::graph::{
    alpha_of, op_decode, op_depthwise, op_encode, op_norm, op_pointwise, op_rows, op_zip, Graph,
};
use crate::tasnet::kernels::{self, NormAux};
use crate::tasnet::{NormKind, TasNetWeights, Tensor};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a particular tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    index: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Encode {
        x: usize,
        basis: usize,
        stride: usize,
    },
    Decode {
        z: usize,
        basis: usize,
        stride: usize,
    },
    Pointwise {
        x: usize,
        w: usize,
        b: usize,
    },
    Depthwise {
        x: usize,
        w: usize,
        b: usize,
        dilation: usize,
        pad_left: usize,
    },
    Prelu {
        x: usize,
        alpha: usize,
    },
    Relu {
        x: usize,
    },
    Sigmoid {
        x: usize,
    },
    Norm {
        x: usize,
        gain: usize,
        bias: usize,
        kind: NormKind,
        aux: NormAux,
    },
    Add {
        a: usize,
        b: usize,
    },
    Mul {
        a: usize,
        b: usize,
    },
    Rows {
        x: usize,
        start: usize,
    },
    L1 {
        est: Vec<usize>,
        refs: Vec<Tensor>,
    },
    NegSnr {
        est: Vec<usize>,
        refs: Vec<Tensor>,
        slopes: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradients of a scalar with respect to every weight tensor.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub by_name: BTreeMap<String, Tensor>,
    /// Non-leaf nodes processed by the reverse sweep.
    pub ops_visited: usize,
}

pub struct Tape<'w> {
    id: u64,
    weights: &'w TasNetWeights,
    nodes: Vec<Node>,
    named: BTreeMap<String, usize>,
    consumed: bool,
}

impl<'w> Tape<'w> {
    pub fn new(weights: &'w TasNetWeights) -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            weights,
            nodes: Vec::new(),
            named: BTreeMap::new(),
            consumed: false,
        }
    }

    fn idx(&self, v: &Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::Graph("value is not recorded on this tape".into()));
        }
        Ok(v.index)
    }

    fn val(&self, v: &Var) -> Result<&Tensor> {
        Ok(&self.nodes[self.idx(v)?].value)
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[usize]) -> Var {
        let needs_grad = inputs.iter().any(|&i| self.nodes[i].needs_grad);
        self.push_node(value, op, needs_grad)
    }

    fn push_node(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_node(value, Op::Leaf, false)
    }

    pub fn value(&self, v: &Var) -> Result<&Tensor> {
        self.val(v)
    }

    pub fn num_ops(&self) -> usize {
        self.nodes.iter().filter(|n| !matches!(n.op, Op::Leaf)).count()
    }

    pub fn l1(&mut self, est: &[Var], refs: &[Tensor]) -> Result<Var> {
        let idx = est.iter().map(|v| self.idx(v)).collect::<Result<Vec<_>>>()?;
        let vals: Vec<&Tensor> = idx.iter().map(|&i| &self.nodes[i].value).collect();
        check_pairs(&vals, refs)?;
        let v = l1_value(&vals, refs);
        Ok(self.push(
            Tensor::scalar(v),
            Op::L1 {
                est: idx.clone(),
                refs: refs.to_vec(),
            },
            &idx,
        ))
    }

    pub fn neg_snr(&mut self, est: &[Var], refs: &[Tensor]) -> Result<Var> {
        let idx = est.iter().map(|v| self.idx(v)).collect::<Result<Vec<_>>>()?;
        let vals: Vec<&Tensor> = idx.iter().map(|&i| &self.nodes[i].value).collect();
        check_pairs(&vals, refs)?;
        let terms: Vec<(f64, f64)> = vals.iter().zip(refs).map(|(e, r)| neg_snr_term(e, r)).collect();
        let v = terms.iter().map(|t| t.0).sum::<f64>() / refs.len() as f64;
        debug_assert!(v >= NEG_SNR_FLOOR);
        let slopes = terms.iter().map(|t| t.1).collect();
        Ok(self.push(
            Tensor::scalar(v),
            Op::NegSnr {
                est: idx.clone(),
                refs: refs.to_vec(),
                slopes,
            },
            &idx,
        ))
    }

    /// Reverse sweep from a scalar. The tape cannot be swept twice.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::Graph("tape already consumed by a backward pass".into()));
        }
        let root = self.idx(&loss)?;
        if self.nodes[root].value.len() != 1 {
            return Err(Error::Graph("backward needs a scalar".into()));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root] = Some(vec![1.0]);
        let mut visited = 0;
        for i in (0..=root).rev() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            visited += 1;
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            self.backward_node(i, &g, &mut grads)?;
        }
        let mut by_name = BTreeMap::new();
        for (name, t) in self.weights.iter() {
            let g = match self.named.get(name).and_then(|&i| grads[i].take()) {
                Some(g) => Tensor::new(t.shape().to_vec(), g)?,
                None => Tensor::zeros(t.shape().to_vec()),
            };
            by_name.insert(name.clone(), g);
        }
        Ok(Gradients {
            by_name,
            ops_visited: visited,
        })
    }

    fn backward_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let nodes = &self.nodes;
        let val = |j: usize| &nodes[j].value;
        let need = |j: usize| nodes[j].needs_grad;
        let mut acc = |j: usize, d: Vec<f64>| {
            if !nodes[j].needs_grad {
                return;
            }
            match &mut grads[j] {
                Some(e) => e.iter_mut().zip(&d).for_each(|(a, b)| *a += b),
                slot @ None => *slot = Some(d),
            }
        };
        match &nodes[i].op {
            Op::Leaf => {}
            Op::Encode { x, basis, stride } => {
                if need(*x) {
                    return Err(Error::Graph("encoder input gradient is not supported".into()));
                }
                let (c, t) = val(*x).dims2()?;
                let s = val(*basis).shape();
                let (n, l) = (s[0], s[2]);
                acc(
                    *basis,
                    kernels::encode_backward_basis(g, val(*x).data(), c, t, n, l, *stride),
                );
            }
            Op::Decode { z, basis, stride } => {
                let (n, f) = val(*z).dims2()?;
                let s = val(*basis).shape();
                let (c, l) = (s[1], s[2]);
                let len = nodes[i].value.shape()[1];
                let (dz, db) =
                    kernels::decode_backward(g, len, val(*z).data(), n, f, val(*basis).data(), c, l, *stride);
                acc(*z, dz);
                acc(*basis, db);
            }
            Op::Pointwise { x, w, b } => {
                let (c_in, t) = val(*x).dims2()?;
                let c_out = val(*b).len();
                let (dx, dw, db) = kernels::pointwise_backward(g, val(*x).data(), c_in, t, val(*w).data(), c_out);
                acc(*x, dx);
                acc(*w, dw);
                acc(*b, db);
            }
            Op::Depthwise {
                x,
                w,
                b,
                dilation,
                pad_left,
            } => {
                let (h, t_in) = val(*x).dims2()?;
                let p = val(*w).shape()[1];
                let t_out = nodes[i].value.shape()[1];
                let (dx, dw, db) = kernels::depthwise_backward(
                    g,
                    val(*x).data(),
                    t_in,
                    val(*w).data(),
                    h,
                    p,
                    *dilation,
                    *pad_left,
                    t_out,
                );
                acc(*x, dx);
                acc(*w, dw);
                acc(*b, db);
            }
            Op::Prelu { x, alpha } => {
                let a = alpha_of(val(*alpha))?;
                let (dx, da) = kernels::prelu_backward(g, val(*x).data(), a);
                acc(*x, dx);
                acc(*alpha, vec![da]);
            }
            Op::Relu { x } => acc(*x, kernels::relu_backward(g, val(*x).data())),
            Op::Sigmoid { x } => acc(*x, kernels::sigmoid_backward(g, nodes[i].value.data())),
            Op::Norm {
                x,
                gain,
                bias,
                kind,
                aux,
            } => {
                let (c, t) = val(*x).dims2()?;
                let gn = val(*gain).data();
                let (dx, dg, db) = match kind {
                    NormKind::Global => kernels::gln_backward(g, aux, c, t, gn),
                    NormKind::Cumulative => kernels::cln_backward(g, val(*x).data(), aux, c, t, gn),
                };
                acc(*x, dx);
                acc(*gain, dg);
                acc(*bias, db);
            }
            Op::Add { a, b } => {
                acc(*a, g.to_vec());
                acc(*b, g.to_vec());
            }
            Op::Mul { a, b } => {
                let (va, vb) = (val(*a).data(), val(*b).data());
                acc(*a, g.iter().zip(vb).map(|(x, y)| x * y).collect());
                acc(*b, g.iter().zip(va).map(|(x, y)| x * y).collect());
            }
            Op::Rows { x, start } => {
                let (r, c) = val(*x).dims2()?;
                let mut d = vec![0.0; r * c];
                d[start * c..start * c + g.len()].copy_from_slice(g);
                acc(*x, d);
            }
            Op::L1 { est, refs } => {
                let n: usize = refs.iter().map(Tensor::len).sum();
                let scale = g[0] / n as f64;
                for (&e, r) in est.iter().zip(refs) {
                    let d = val(e)
                        .data()
                        .iter()
                        .zip(r.data())
                        .map(|(a, b)| {
                            let diff = a - b;
                            if diff > 0.0 {
                                scale
                            } else if diff < 0.0 {
                                -scale
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    acc(e, d);
                }
            }
            Op::NegSnr { est, refs, slopes } => {
                let scale = g[0] / refs.len() as f64;
                for ((&e, r), &k) in est.iter().zip(refs).zip(slopes) {
                    // d err / d est = -2 (ref - est)
                    let d = val(e)
                        .data()
                        .iter()
                        .zip(r.data())
                        .map(|(a, b)| scale * k * -2.0 * (b - a))
                        .collect();
                    acc(e, d);
                }
            }
        }
        Ok(())
    }
}

impl<'w> Graph for Tape<'w> {
    type V = Var;

    fn weight(&mut self, name: &str) -> Result<Var> {
        if let Some(&i) = self.named.get(name) {
            return Ok(Var {
                tape: self.id,
                index: i,
            });
        }
        let t = self.weights.get(name)?.clone();
        let v = self.push_node(t, Op::Leaf, true);
        self.named.insert(name.to_string(), v.index);
        Ok(v)
    }

    fn encode(&mut self, x: &Var, basis: &Var, stride: usize) -> Result<Var> {
        let (xi, bi) = (self.idx(x)?, self.idx(basis)?);
        let y = op_encode(self.val(x)?, self.val(basis)?, stride)?;
        Ok(self.push(
            y,
            Op::Encode {
                x: xi,
                basis: bi,
                stride,
            },
            &[xi, bi],
        ))
    }

    fn decode(&mut self, z: &Var, basis: &Var, stride: usize, len: usize) -> Result<Var> {
        let (zi, bi) = (self.idx(z)?, self.idx(basis)?);
        let y = op_decode(self.val(z)?, self.val(basis)?, stride, len)?;
        Ok(self.push(
            y,
            Op::Decode {
                z: zi,
                basis: bi,
                stride,
            },
            &[zi, bi],
        ))
    }

    fn pointwise(&mut self, x: &Var, w: &Var, b: &Var) -> Result<Var> {
        let (xi, wi, bi) = (self.idx(x)?, self.idx(w)?, self.idx(b)?);
        let y = op_pointwise(self.val(x)?, self.val(w)?, self.val(b)?)?;
        Ok(self.push(y, Op::Pointwise { x: xi, w: wi, b: bi }, &[xi, wi, bi]))
    }

    fn depthwise(&mut self, x: &Var, w: &Var, b: &Var, dilation: usize, pad: (usize, usize)) -> Result<Var> {
        let (xi, wi, bi) = (self.idx(x)?, self.idx(w)?, self.idx(b)?);
        let y = op_depthwise(self.val(x)?, self.val(w)?, self.val(b)?, dilation, pad)?;
        let op = Op::Depthwise {
            x: xi,
            w: wi,
            b: bi,
            dilation,
            pad_left: pad.0,
        };
        Ok(self.push(y, op, &[xi, wi, bi]))
    }

    fn prelu(&mut self, x: &Var, alpha: &Var) -> Result<Var> {
        let (xi, ai) = (self.idx(x)?, self.idx(alpha)?);
        let a = alpha_of(self.val(alpha)?)?;
        let xv = self.val(x)?;
        let y = Tensor::new(xv.shape().to_vec(), kernels::prelu(xv.data(), a))?;
        Ok(self.push(y, Op::Prelu { x: xi, alpha: ai }, &[xi, ai]))
    }

    fn relu(&mut self, x: &Var) -> Result<Var> {
        let xi = self.idx(x)?;
        let xv = self.val(x)?;
        let y = Tensor::new(xv.shape().to_vec(), kernels::relu(xv.data()))?;
        Ok(self.push(y, Op::Relu { x: xi }, &[xi]))
    }

    fn sigmoid(&mut self, x: &Var) -> Result<Var> {
        let xi = self.idx(x)?;
        let xv = self.val(x)?;
        let y = Tensor::new(xv.shape().to_vec(), kernels::sigmoid(xv.data()))?;
        Ok(self.push(y, Op::Sigmoid { x: xi }, &[xi]))
    }

    fn norm(&mut self, x: &Var, gain: &Var, bias: &Var, kind: NormKind) -> Result<Var> {
        let (xi, gi, bi) = (self.idx(x)?, self.idx(gain)?, self.idx(bias)?);
        let (y, aux) = op_norm(self.val(x)?, self.val(gain)?, self.val(bias)?, kind, None)?;
        let op = Op::Norm {
            x: xi,
            gain: gi,
            bias: bi,
            kind,
            aux,
        };
        Ok(self.push(y, op, &[xi, gi, bi]))
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        let y = op_zip(self.val(a)?, self.val(b)?, |x, y| x + y)?;
        Ok(self.push(y, Op::Add { a: ai, b: bi }, &[ai, bi]))
    }

    fn mul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        let y = op_zip(self.val(a)?, self.val(b)?, |x, y| x * y)?;
        Ok(self.push(y, Op::Mul { a: ai, b: bi }, &[ai, bi]))
    }

    fn rows(&mut self, x: &Var, start: usize, count: usize) -> Result<Var> {
        let xi = self.idx(x)?;
        let y = op_rows(self.val(x)?, start, count)?;
        Ok(self.push(y, Op::Rows { x: xi, start }, &[xi]))
    }
}
