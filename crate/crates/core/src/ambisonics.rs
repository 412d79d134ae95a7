//! First-order ambisonics: horizontal encoding, rotation about the vertical
//! axis and mid-side stereo decoding.
//!
//! Conventions: FuMa channel order and weighting (W carries 1/√2), azimuth in
//! degrees, counter-clockwise positive (listener's left), 0° straight ahead.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;
use std::f64::consts::SQRT_2;

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

/// Channel convention of a 4-channel B-format file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BFormatConvention {
    /// W, X, Y, Z with W scaled by 1/√2.
    #[default]
    Fuma,
    /// ACN order (W, Y, Z, X) with SN3D normalisation.
    Ambix,
}

impl std::str::FromStr for BFormatConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fuma" => Ok(Self::Fuma),
            "ambix" => Ok(Self::Ambix),
            other => Err(Error::invalid(format!("unknown B-format convention `{other}`"))),
        }
    }
}

/// A first-order ambisonic signal or impulse response in FuMa order.
#[derive(Debug, Clone, PartialEq)]
pub struct BFormatSignal {
    pub w: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub sample_rate: u32,
}

impl BFormatSignal {
    pub fn new(w: Vec<f64>, x: Vec<f64>, y: Vec<f64>, z: Vec<f64>, sample_rate: u32) -> Result<Self> {
        let n = w.len();
        if x.len() != n || y.len() != n || z.len() != n {
            return Err(Error::invalid("B-format channels differ in length"));
        }
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if [&w, &x, &y, &z].iter().any(|c| c.iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid("B-format signal contains non-finite samples"));
        }
        Ok(Self {
            w,
            x,
            y,
            z,
            sample_rate,
        })
    }

    /// Interprets a 4-channel buffer, converting AmbiX to FuMa if needed.
    pub fn from_buffer(buf: &AudioBuffer, convention: BFormatConvention) -> Result<Self> {
        if buf.num_channels() != 4 {
            return Err(Error::invalid(format!(
                "B-format needs 4 channels, got {}",
                buf.num_channels()
            )));
        }
        let ch = |i: usize| buf.channel(i).to_vec();
        match convention {
            BFormatConvention::Fuma => Self::new(ch(0), ch(1), ch(2), ch(3), buf.sample_rate()),
            BFormatConvention::Ambix => Self::new(
                buf.channel(0).iter().map(|v| v * FRAC_1_SQRT_2).collect(),
                ch(3),
                ch(1),
                ch(2),
                buf.sample_rate(),
            ),
        }
    }

    pub fn to_buffer(&self) -> AudioBuffer {
        AudioBuffer::new(
            vec![self.w.clone(), self.x.clone(), self.y.clone(), self.z.clone()],
            self.sample_rate,
        )
        .expect("B-format invariants imply a valid buffer")
    }

    /// Encodes a mono signal as a plane wave arriving from `azimuth_deg`.
    pub fn encode_mono(signal: &[f64], azimuth_deg: f64, sample_rate: u32) -> Result<Self> {
        let d = encode_direction(azimuth_deg);
        Self::new(
            signal.iter().map(|s| s * d.w).collect(),
            signal.iter().map(|s| s * d.x).collect(),
            signal.iter().map(|s| s * d.y).collect(),
            vec![0.0; signal.len()],
            sample_rate,
        )
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// Horizontal plane-wave encoding gains for one direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionCoefficients {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub azimuth_deg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MidSidePair {
    pub mid: Vec<f64>,
    pub side: Vec<f64>,
    pub sample_rate: u32,
}

/// cos/sin of an angle in degrees, exact at multiples of 90° and exactly
/// odd/even under negation.
pub fn cos_sin_deg(deg: f64) -> (f64, f64) {
    let sign = if deg < 0.0 { -1.0 } else { 1.0 };
    let a = deg.abs() % 360.0;
    let (c, s) = if a == 0.0 {
        (1.0, 0.0)
    } else if a == 90.0 {
        (0.0, 1.0)
    } else if a == 180.0 {
        (-1.0, 0.0)
    } else if a == 270.0 {
        (0.0, -1.0)
    } else {
        let r = a.to_radians();
        (r.cos(), r.sin())
    };
    (c, sign * s)
}

/// Rotates the sound field about the vertical axis by `azimuth_deg`.
pub fn rotate_z(sig: &BFormatSignal, azimuth_deg: f64) -> BFormatSignal {
    let (c, s) = cos_sin_deg(azimuth_deg);
    let (x, y) = sig
        .x
        .iter()
        .zip(&sig.y)
        .map(|(&x, &y)| (x * c - y * s, x * s + y * c))
        .unzip();
    BFormatSignal {
        w: sig.w.clone(),
        x,
        y,
        z: sig.z.clone(),
        sample_rate: sig.sample_rate,
    }
}

pub fn encode_direction(azimuth_deg: f64) -> DirectionCoefficients {
    let (c, s) = cos_sin_deg(azimuth_deg);
    DirectionCoefficients {
        w: FRAC_1_SQRT_2,
        x: c,
        y: s,
        azimuth_deg,
    }
}

/// Virtual mid microphone of polar pattern `pattern` (1 = omni, 0.5 = cardioid,
/// 0 = figure-of-eight) facing front, plus a lateral figure-of-eight side.
pub fn decode_midside(sig: &BFormatSignal, pattern: f64) -> MidSidePair {
    let mid = sig
        .w
        .iter()
        .zip(&sig.x)
        .map(|(&w, &x)| pattern * SQRT_2 * w + (1.0 - pattern) * x)
        .collect();
    MidSidePair {
        mid,
        side: sig.y.clone(),
        sample_rate: sig.sample_rate,
    }
}

/// L = M + S, R = M − S.
pub fn midside_to_stereo(ms: &MidSidePair) -> Result<AudioBuffer> {
    if ms.mid.len() != ms.side.len() {
        return Err(Error::invalid("mid and side differ in length"));
    }
    let left = ms.mid.iter().zip(&ms.side).map(|(m, s)| m + s).collect();
    let right = ms.mid.iter().zip(&ms.side).map(|(m, s)| m - s).collect();
    AudioBuffer::new(vec![left, right], ms.sample_rate)
}

/// Stereo gains a unit-amplitude source at `azimuth_deg` receives through the
/// encode → mid-side → L/R chain.
pub fn anechoic_gains(azimuth_deg: f64, pattern: f64) -> (f64, f64) {
    let d = encode_direction(azimuth_deg);
    let mid = pattern * SQRT_2 * d.w + (1.0 - pattern) * d.x;
    (mid + d.y, mid - d.y)
}
