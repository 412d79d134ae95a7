//! Multichannel audio buffers and RIFF/WAVE file I/O.
//!
//! Everything is held as 64-bit float internally. Integer PCM is scaled by
//! `2^(bits-1)` on the way in and clamped/rounded on the way out.

use std::io::ErrorKind;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Planar multichannel audio with a fixed sample rate.
///
/// All channels have the same length and contain only finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    sample_rate: u32,
    channels: Vec<Vec<f64>>,
}

impl AudioBuffer {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::invalid("audio buffer needs at least one channel"));
        }
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::invalid("channels differ in length"));
        }
        if channels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("audio contains non-finite samples"));
        }
        Ok(Self { sample_rate, channels })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn silent(num_channels: usize, len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![vec![0.0; len]; num_channels.max(1)], sample_rate)
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    pub fn channel(&self, index: usize) -> &[f64] {
        &self.channels[index]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    pub fn energy(&self) -> f64 {
        self.channels.iter().flatten().map(|v| v * v).sum()
    }

    pub fn peak(&self) -> f64 {
        self.channels.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, gain: f64) -> Self {
        let channels = self
            .channels
            .iter()
            .map(|c| c.iter().map(|v| v * gain).collect())
            .collect();
        Self {
            sample_rate: self.sample_rate,
            channels,
        }
    }

    /// Frames `[start, start + len)` of every channel.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.len() {
            return Err(Error::invalid(format!(
                "slice [{start}, {}) exceeds buffer length {}",
                start + len,
                self.len()
            )));
        }
        let channels = self.channels.iter().map(|c| c[start..start + len].to_vec()).collect();
        Ok(Self {
            sample_rate: self.sample_rate,
            channels,
        })
    }

    /// Zero-pads (never truncates) every channel to `len`.
    pub fn padded_to(&self, len: usize) -> Self {
        let mut out = self.clone();
        for c in &mut out.channels {
            if c.len() < len {
                c.resize(len, 0.0);
            }
        }
        out
    }

    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.sample_rate != other.sample_rate {
            return Err(Error::SampleRateMismatch(self.sample_rate, other.sample_rate));
        }
        if self.num_channels() != other.num_channels() || self.len() != other.len() {
            return Err(Error::invalid(format!(
                "buffer shapes differ: {}x{} vs {}x{}",
                self.num_channels(),
                self.len(),
                other.num_channels(),
                other.len()
            )));
        }
        Ok(())
    }

    /// Sample-wise `self += other`.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_compatible(other)?;
        for (a, b) in self.channels.iter_mut().zip(&other.channels) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
        Ok(())
    }

    /// Sample-wise `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let channels = self
            .channels
            .iter()
            .zip(&other.channels)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        Ok(Self {
            sample_rate: self.sample_rate,
            channels,
        })
    }

    /// Sums buffers left to right starting from silence.
    pub fn sum<'a>(buffers: impl IntoIterator<Item = &'a AudioBuffer>) -> Result<Self> {
        let mut iter = buffers.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::invalid("cannot sum an empty set of buffers"))?;
        let mut acc = AudioBuffer::silent(first.num_channels(), first.len(), first.sample_rate)?;
        acc.add_assign(first)?;
        for b in iter {
            acc.add_assign(b)?;
        }
        Ok(acc)
    }

    pub fn swap_lr(&mut self) {
        if self.channels.len() >= 2 {
            self.channels.swap(0, 1);
        }
    }
}

/// On-disk sample encoding for [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WavEncoding {
    Pcm16,
    Pcm24,
    Float32,
}

impl std::str::FromStr for WavEncoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pcm16" => Ok(Self::Pcm16),
            "pcm24" => Ok(Self::Pcm24),
            "float32" => Ok(Self::Float32),
            other => Err(Error::invalid(format!("unknown wav encoding `{other}`"))),
        }
    }
}

fn map_hound(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) if e.kind() == ErrorKind::UnexpectedEof => {
            Error::CorruptFile(format!("{}: truncated ({e})", path.display()))
        }
        hound::Error::IoError(e) => Error::io(path, e),
        hound::Error::FormatError(msg) => Error::CorruptFile(format!("{}: {msg}", path.display())),
        hound::Error::Unsupported => Error::UnsupportedFormat(format!("{}: codec not supported", path.display())),
        other => Error::CorruptFile(format!("{}: {other}", path.display())),
    }
}

fn deinterleave<I>(samples: I, channels: usize, path: &Path) -> Result<Vec<Vec<f64>>>
where
    I: Iterator<Item = std::result::Result<f64, hound::Error>>,
{
    let mut out: Vec<Vec<f64>> = vec![Vec::new(); channels];
    let mut i = 0usize;
    for s in samples {
        let v = s.map_err(|e| match e {
            // hound reports a short data chunk as a generic read failure
            hound::Error::IoError(io) => Error::CorruptFile(format!("{}: truncated data chunk ({io})", path.display())),
            other => map_hound(path, other),
        })?;
        if !v.is_finite() {
            return Err(Error::CorruptFile(format!("{}: non-finite sample", path.display())));
        }
        out[i % channels].push(v);
        i += 1;
    }
    if !i.is_multiple_of(channels) {
        return Err(Error::CorruptFile(format!(
            "{}: data chunk ends mid-frame",
            path.display()
        )));
    }
    Ok(out)
}

/// Reads a PCM16, PCM24 or IEEE float32 WAV file.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::CorruptFile(format!("{}: zero channels", path.display())));
    }
    let data = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, bits @ (16 | 24)) => {
            let scale = 1.0 / f64::from(1u32 << (bits - 1));
            deinterleave(
                reader.into_samples::<i32>().map(|s| s.map(|v| f64::from(v) * scale)),
                channels,
                path,
            )?
        }
        (hound::SampleFormat::Float, 32) => {
            deinterleave(reader.into_samples::<f32>().map(|s| s.map(f64::from)), channels, path)?
        }
        (fmt, bits) => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: {bits}-bit {fmt:?}",
                path.display()
            )))
        }
    };
    AudioBuffer::new(data, spec.sample_rate)
}

/// Quantizes one sample: clamp to `[-1, 1 - 2^-(bits-1)]`, scale, round half away from zero.
pub fn quantize(value: f64, bits: u32) -> i32 {
    let full = f64::from(1u32 << (bits - 1));
    let clamped = value.clamp(-1.0, 1.0 - 1.0 / full);
    (clamped * full).round() as i32
}

pub fn write_wav(buffer: &AudioBuffer, path: impl AsRef<Path>, encoding: WavEncoding) -> Result<()> {
    let path = path.as_ref();
    let (bits, format) = match encoding {
        WavEncoding::Pcm16 => (16, hound::SampleFormat::Int),
        WavEncoding::Pcm24 => (24, hound::SampleFormat::Int),
        WavEncoding::Float32 => (32, hound::SampleFormat::Float),
    };
    let spec = hound::WavSpec {
        channels: buffer.num_channels() as u16,
        sample_rate: buffer.sample_rate(),
        bits_per_sample: bits,
        sample_format: format,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for i in 0..buffer.len() {
        for c in buffer.channels() {
            let r = match encoding {
                WavEncoding::Float32 => writer.write_sample(c[i] as f32),
                _ => writer.write_sample(quantize(c[i], u32::from(bits))),
            };
            r.map_err(|e| map_hound(path, e))?;
        }
    }
    writer.finalize().map_err(|e| map_hound(path, e))
}
