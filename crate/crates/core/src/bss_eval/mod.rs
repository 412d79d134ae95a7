//! BSS-eval style signal-to-distortion ratio.
//!
//! The estimate is projected onto the span of `filter_len` delayed copies of
//! the reference (zero-padded by `filter_len - 1`, so the Gram matrix is exactly
//! Toeplitz). The projection is the allowed distortion; everything else counts
//! as error. Tracks are cut into non-overlapping frames, each frame and channel
//! gets one SDR, channels are reduced by median, then frames by median, then
//! tracks by median.

mod stats;
mod toeplitz;

use std::collections::BTreeMap;
use std::sync::Arc;

use realfft::num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

pub use stats::{mean, median, t_test, TTest, TTestMethod};
pub use toeplitz::levinson_solve;

pub const DEFAULT_FILTER_LEN: usize = 512;
pub const SDR_CAP_DB: f64 = 100.0;
/// Reference energy below this makes a frame undefined.
pub const SILENCE_ENERGY: f64 = 1e-12;
/// Diagonal loading relative to the zero-lag autocorrelation.
pub const RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdrOptions {
    pub frame_s: f64,
    pub filter_len: usize,
}

impl Default for SdrOptions {
    fn default() -> Self {
        Self {
            frame_s: 1.0,
            filter_len: DEFAULT_FILTER_LEN,
        }
    }
}

/// Per-frame record. `None` marks a frame whose reference is silent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdrFrame {
    pub frame_index: usize,
    pub per_channel_sdr: Vec<Option<f64>>,
    pub channel_median: Option<f64>,
}

impl SdrFrame {
    pub fn new(frame_index: usize, per_channel_sdr: Vec<Option<f64>>) -> Self {
        let defined: Vec<f64> = per_channel_sdr.iter().flatten().copied().collect();
        Self {
            frame_index,
            channel_median: median(&defined),
            per_channel_sdr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSdr {
    pub median: f64,
    pub frames: Vec<SdrFrame>,
}

/// Aggregate over the tracks that contain one instrument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdrReport {
    pub track_medians: BTreeMap<String, f64>,
    pub instrument_median: f64,
    pub frame_count: usize,
    pub smr_reference: Option<f64>,
}

impl SdrReport {
    pub fn from_tracks(tracks: &BTreeMap<String, TrackSdr>, smr_reference: Option<f64>) -> Result<Self> {
        let track_medians: BTreeMap<String, f64> = tracks.iter().map(|(k, v)| (k.clone(), v.median)).collect();
        Ok(Self {
            instrument_median: dataset_sdr(&track_medians)?,
            frame_count: tracks.values().map(|t| t.frames.len()).sum(),
            track_medians,
            smr_reference,
        })
    }
}

/// Reusable FFT plans for one frame length.
pub struct Projector {
    filter_len: usize,
    frame_len: usize,
    nfft: usize,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
}

/// Toeplitz normal equations of the projection: `(autocorrelation lags 0..filter_len,
/// cross-correlation of reference with estimate)`.
pub struct NormalEquations {
    pub autocorr: Vec<f64>,
    pub crosscorr: Vec<f64>,
}

impl Projector {
    pub fn new(frame_len: usize, filter_len: usize) -> Result<Self> {
        if filter_len == 0 {
            return Err(Error::invalid("filter length must be positive"));
        }
        if frame_len < filter_len {
            return Err(Error::invalid(format!(
                "frame of {frame_len} samples is shorter than the {filter_len}-tap filter"
            )));
        }
        let nfft = (frame_len + filter_len - 1).next_power_of_two();
        let mut planner = RealFftPlanner::<f64>::new();
        Ok(Self {
            filter_len,
            frame_len,
            nfft,
            forward: planner.plan_fft_forward(nfft),
            inverse: planner.plan_fft_inverse(nfft),
        })
    }

    fn spectrum(&self, x: &[f64]) -> Vec<Complex<f64>> {
        let mut buf = self.forward.make_input_vec();
        buf[..x.len()].copy_from_slice(x);
        let mut spec = self.forward.make_output_vec();
        self.forward
            .process(&mut buf, &mut spec)
            .expect("buffer sizes come from the planner");
        spec
    }

    fn inverse(&self, mut spec: Vec<Complex<f64>>) -> Vec<f64> {
        let last = spec.len() - 1;
        spec[0].im = 0.0;
        spec[last].im = 0.0;
        let mut out = self.inverse.make_output_vec();
        self.inverse
            .process(&mut spec, &mut out)
            .expect("buffer sizes come from the planner");
        let norm = 1.0 / self.nfft as f64;
        out.iter_mut().for_each(|v| *v *= norm);
        out
    }

    fn check(&self, reference: &[f64], estimate: &[f64]) -> Result<()> {
        if reference.len() != estimate.len() {
            return Err(Error::invalid(format!(
                "reference has {} samples, estimate {}",
                reference.len(),
                estimate.len()
            )));
        }
        if reference.len() != self.frame_len {
            return Err(Error::invalid(format!(
                "projector planned for {} samples, got {}",
                self.frame_len,
                reference.len()
            )));
        }
        Ok(())
    }

    pub fn normal_equations(&self, reference: &[f64], estimate: &[f64]) -> Result<NormalEquations> {
        self.check(reference, estimate)?;
        let (autocorr, crosscorr, _) = self.correlations(reference, estimate);
        Ok(NormalEquations { autocorr, crosscorr })
    }

    fn correlations(&self, reference: &[f64], estimate: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<Complex<f64>>) {
        let rs = self.spectrum(reference);
        let es = self.spectrum(estimate);
        let auto = self.inverse(rs.iter().map(|r| r * r.conj()).collect());
        let cross = self.inverse(rs.iter().zip(&es).map(|(r, e)| r.conj() * e).collect());
        (auto[..self.filter_len].to_vec(), cross[..self.filter_len].to_vec(), rs)
    }

    /// SDR in dB clamped to ±100, or `None` for a silent reference.
    pub fn sdr(&self, reference: &[f64], estimate: &[f64]) -> Result<Option<f64>> {
        self.check(reference, estimate)?;
        let ref_energy: f64 = reference.iter().map(|v| v * v).sum();
        if ref_energy < SILENCE_ENERGY {
            return Ok(None);
        }
        let (mut auto, cross, ref_spec) = self.correlations(reference, estimate);
        auto[0] += RIDGE * auto[0];
        let filter = levinson_solve(&auto, &cross)?;

        let fs = self.spectrum(&filter);
        let target_len = self.frame_len + self.filter_len - 1;
        let target = self.inverse(ref_spec.iter().zip(&fs).map(|(r, h)| r * h).collect());
        let mut signal = 0.0;
        let mut error = 0.0;
        for (t, &s) in target[..target_len].iter().enumerate() {
            let e = estimate.get(t).copied().unwrap_or(0.0) - s;
            signal += s * s;
            error += e * e;
        }
        Ok(Some(ratio_db(signal, error)))
    }
}

fn ratio_db(signal: f64, error: f64) -> f64 {
    // a silent estimate projects to nothing: floor, even though the error is zero too
    if signal <= 0.0 {
        return -SDR_CAP_DB;
    }
    if error <= 0.0 {
        return SDR_CAP_DB;
    }
    (10.0 * (signal / error).log10()).clamp(-SDR_CAP_DB, SDR_CAP_DB)
}

/// Single-channel projection SDR of `estimate` against `reference`.
pub fn projection_sdr(reference: &[f64], estimate: &[f64], filter_len: usize) -> Result<Option<f64>> {
    if reference.len() != estimate.len() {
        return Err(Error::invalid(format!(
            "reference has {} samples, estimate {}",
            reference.len(),
            estimate.len()
        )));
    }
    Projector::new(reference.len(), filter_len)?.sdr(reference, estimate)
}

/// Framewise SDR of a multichannel estimate, reduced to one track value.
pub fn track_sdr(reference: &AudioBuffer, estimate: &AudioBuffer, opts: SdrOptions) -> Result<TrackSdr> {
    reference.check_compatible(estimate)?;
    let frame_len = (opts.frame_s * reference.sample_rate() as f64).round() as usize;
    if frame_len == 0 {
        return Err(Error::invalid("frame length rounds to zero samples"));
    }
    let n_frames = reference.len() / frame_len;
    if n_frames == 0 {
        return Err(Error::NoValidFrames);
    }
    let projector = Projector::new(frame_len, opts.filter_len)?;
    let mut frames = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let range = f * frame_len..(f + 1) * frame_len;
        let per_channel = (0..reference.num_channels())
            .map(|c| {
                projector.sdr(
                    &reference.channel(c)[range.clone()],
                    &estimate.channel(c)[range.clone()],
                )
            })
            .collect::<Result<Vec<_>>>()?;
        frames.push(SdrFrame::new(f, per_channel));
    }
    let medians = frame_medians(&frames);
    let median = median(&medians).ok_or(Error::NoValidFrames)?;
    Ok(TrackSdr { median, frames })
}

fn frame_medians(frames: &[SdrFrame]) -> Vec<f64> {
    frames.iter().filter_map(|f| f.channel_median).collect()
}

/// Track value from precomputed frames (median of defined channel medians).
pub fn track_median(frames: &[SdrFrame]) -> Result<f64> {
    median(&frame_medians(frames)).ok_or(Error::NoValidFrames)
}

/// Median across tracks.
pub fn dataset_sdr(per_track: &BTreeMap<String, f64>) -> Result<f64> {
    let values: Vec<f64> = per_track.values().copied().collect();
    median(&values).ok_or_else(|| Error::invalid("no tracks to aggregate"))
}
