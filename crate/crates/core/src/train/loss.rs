use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tasnet::Tensor;

pub const SNR_EPS: f64 = 1e-8;
pub const NEG_SNR_FLOOR: f64 = -100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Mean absolute error over sources, channels and samples.
    #[default]
    L1,
    /// Negative SNR in dB, averaged over sources.
    NegSnr,
}

pub(crate) fn check_pairs(est: &[&Tensor], refs: &[Tensor]) -> Result<()> {
    if est.is_empty() || est.len() != refs.len() {
        return Err(Error::invalid("loss needs one reference per estimate"));
    }
    for (e, r) in est.iter().zip(refs) {
        e.same_shape(r)?;
    }
    Ok(())
}

pub(crate) fn l1_value(est: &[&Tensor], refs: &[Tensor]) -> f64 {
    let n: usize = refs.iter().map(Tensor::len).sum();
    let s: f64 = est
        .iter()
        .zip(refs)
        .flat_map(|(e, r)| e.data().iter().zip(r.data()).map(|(a, b)| (a - b).abs()))
        .sum();
    s / n as f64
}

/// `(value, dvalue/d err-energy)` of one source's negative SNR.
pub(crate) fn neg_snr_term(est: &Tensor, reference: &Tensor) -> (f64, f64) {
    let s = reference.sum_sq();
    let e: f64 = est
        .data()
        .iter()
        .zip(reference.data())
        .map(|(a, b)| (b - a) * (b - a))
        .sum();
    if e == 0.0 {
        return (NEG_SNR_FLOOR, 0.0);
    }
    let raw = -10.0 * (s / e + SNR_EPS).log10();
    if raw <= NEG_SNR_FLOOR {
        (NEG_SNR_FLOOR, 0.0)
    } else {
        (raw, 10.0 / std::f64::consts::LN_10 * s / (e * (s + SNR_EPS * e)))
    }
}

pub fn loss_l1(est: &[&Tensor], refs: &[Tensor]) -> Result<f64> {
    check_pairs(est, refs)?;
    Ok(l1_value(est, refs))
}

/// `-10·log10(‖r‖²/‖r−e‖² + ε)` per source, floored at -100 dB, averaged.
pub fn loss_neg_snr(est: &[&Tensor], refs: &[Tensor]) -> Result<f64> {
    check_pairs(est, refs)?;
    Ok(est.iter().zip(refs).map(|(e, r)| neg_snr_term(e, r).0).sum::<f64>() / refs.len() as f64)
}

pub fn loss(kind: LossKind, est: &[&Tensor], refs: &[Tensor]) -> Result<f64> {
    match kind {
        LossKind::L1 => loss_l1(est, refs),
        LossKind::NegSnr => loss_neg_snr(est, refs),
    }
}
