use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskActivation {
    Relu,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    Global,
    Cumulative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TasNetConfig {
    /// Encoder basis size N.
    pub n_filters: usize,
    /// Encoder window L in samples; the hop is L/2.
    pub kernel_len: usize,
    /// Bottleneck channels B.
    pub bottleneck: usize,
    /// Channels H inside each block.
    pub conv_channels: usize,
    /// Skip-path channels Sc.
    pub skip_channels: usize,
    /// Depthwise kernel taps P.
    pub kernel: usize,
    /// Blocks per repeat X; block k of a repeat has dilation 2^k.
    pub blocks_per_repeat: usize,
    /// Repeats R.
    pub repeats: usize,
    pub n_sources: usize,
    pub in_channels: usize,
    pub causal: bool,
    pub mask_activation: MaskActivation,
}

impl TasNetConfig {
    /// Full-size model: N=512, L=32, B=128, H=512, Sc=128, P=3, X=8, R=3.
    pub fn full(causal: bool) -> Self {
        Self {
            n_filters: 512,
            kernel_len: 32,
            bottleneck: 128,
            conv_channels: 512,
            skip_channels: 128,
            kernel: 3,
            blocks_per_repeat: 8,
            repeats: 3,
            n_sources: 2,
            in_channels: 2,
            causal,
            mask_activation: if causal {
                MaskActivation::Sigmoid
            } else {
                MaskActivation::Relu
            },
        }
    }

    /// Desk-scale model with a few thousand parameters.
    pub fn tiny(causal: bool) -> Self {
        Self {
            n_filters: 16,
            kernel_len: 16,
            bottleneck: 8,
            conv_channels: 16,
            skip_channels: 8,
            blocks_per_repeat: 2,
            repeats: 2,
            ..Self::full(causal)
        }
    }

    pub fn stride(&self) -> usize {
        self.kernel_len / 2
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks_per_repeat * self.repeats
    }

    pub fn dilation(&self, block: usize) -> usize {
        1 << (block % self.blocks_per_repeat)
    }

    pub fn norm_kind(&self) -> NormKind {
        if self.causal {
            NormKind::Cumulative
        } else {
            NormKind::Global
        }
    }

    /// `(left, right)` zero padding of a block's depthwise convolution.
    pub fn padding(&self, block: usize) -> (usize, usize) {
        let total = (self.kernel - 1) * self.dilation(block);
        if self.causal {
            (total, 0)
        } else {
            (total / 2, total - total / 2)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.n_filters,
            self.kernel_len,
            self.bottleneck,
            self.conv_channels,
            self.skip_channels,
            self.kernel,
            self.blocks_per_repeat,
            self.repeats,
            self.n_sources,
            self.in_channels,
        ];
        if dims.contains(&0) {
            return Err(Error::invalid("model dimensions must be positive"));
        }
        if !self.kernel_len.is_multiple_of(2) {
            return Err(Error::invalid("kernel_len must be even"));
        }
        if self.blocks_per_repeat > 30 {
            return Err(Error::invalid("blocks_per_repeat too large for 2^k dilation"));
        }
        Ok(())
    }

    /// `(lookback, lookahead)` in frames contributed by the separator.
    pub fn receptive_field(&self) -> (usize, usize) {
        (0..self.num_blocks())
            .map(|b| self.padding(b))
            .fold((0, 0), |(a, b), (l, r)| (a + l, b + r))
    }

    /// Names and shapes of every weight tensor, in storage order.
    pub fn weight_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (n, c, l) = (self.n_filters, self.in_channels, self.kernel_len);
        let (b, h, sc, p) = (self.bottleneck, self.conv_channels, self.skip_channels, self.kernel);
        let mut v = vec![
            ("encoder.basis".to_string(), vec![n, c, l]),
            ("separator.bottleneck.weight".into(), vec![b, n]),
            ("separator.bottleneck.bias".into(), vec![b]),
        ];
        for i in 0..self.num_blocks() {
            let pre = format!("separator.blocks.{i}");
            v.extend([
                (format!("{pre}.in.weight"), vec![h, b]),
                (format!("{pre}.in.bias"), vec![h]),
                (format!("{pre}.prelu1.alpha"), vec![1]),
                (format!("{pre}.norm1.gain"), vec![h]),
                (format!("{pre}.norm1.bias"), vec![h]),
                (format!("{pre}.depthwise.weight"), vec![h, p]),
                (format!("{pre}.depthwise.bias"), vec![h]),
                (format!("{pre}.prelu2.alpha"), vec![1]),
                (format!("{pre}.norm2.gain"), vec![h]),
                (format!("{pre}.norm2.bias"), vec![h]),
                (format!("{pre}.skip.weight"), vec![sc, h]),
                (format!("{pre}.skip.bias"), vec![sc]),
                (format!("{pre}.residual.weight"), vec![b, h]),
                (format!("{pre}.residual.bias"), vec![b]),
            ]);
        }
        v.extend([
            ("separator.out_prelu.alpha".to_string(), vec![1]),
            ("separator.mask.weight".into(), vec![self.n_sources * n, sc]),
            ("separator.mask.bias".into(), vec![self.n_sources * n]),
            ("decoder.basis".into(), vec![n, c, l]),
        ]);
        v
    }

    pub fn param_count(&self) -> usize {
        self.weight_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}
