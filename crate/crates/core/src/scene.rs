//! Evaluation scene rendering.
//!
//! Mono stems are spread on an arc in front of the listener. In reverb mode
//! each stem is convolved with the B-format impulse response rotated to its
//! azimuth and decoded to mid-side stereo; in anechoic mode it only receives
//! the equivalent mid-side panning gains. The mixture is always the exact sum
//! of the rendered stems.

use serde::{Deserialize, Serialize};

use crate::ambisonics::{
    anechoic_gains, decode_midside, midside_to_stereo, rotate_z, BFormatConvention, BFormatSignal,
};
use crate::audio::AudioBuffer;
use crate::bss_eval::{track_sdr, SdrOptions};
use crate::convolver::convolve_stereo;
use crate::error::{Error, Result};
use crate::instrument::Instrument;

pub const DEFAULT_SPACING_DEG: f64 = 10.0;
pub const DEFAULT_DECODE_PATTERN: f64 = 0.5;
pub const DEFAULT_PEAK: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
pub struct Stem {
    pub instrument: Instrument,
    pub audio: AudioBuffer,
}

impl Stem {
    pub fn new(instrument: Instrument, audio: AudioBuffer) -> Self {
        Self { instrument, audio }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderMode {
    Anechoic,
    Reverb,
}

impl std::str::FromStr for RenderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "anechoic" | "anech" => Ok(Self::Anechoic),
            "reverb" => Ok(Self::Reverb),
            other => Err(Error::invalid(format!("unknown render mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub stems: Vec<Stem>,
    pub spacing_deg: f64,
    /// Azimuth of the centre of the arc.
    pub center_deg: f64,
    pub mode: RenderMode,
    pub ir: Option<BFormatSignal>,
    /// Free-form identity of the impulse response (file name, hall), recorded in metadata.
    pub ir_label: Option<String>,
    pub ir_convention: BFormatConvention,
    pub decode_pattern: f64,
    /// Scale everything so the mixture peaks at this value.
    pub peak_normalize: Option<f64>,
}

impl SceneSpec {
    pub fn anechoic(stems: Vec<Stem>) -> Self {
        Self {
            stems,
            spacing_deg: DEFAULT_SPACING_DEG,
            center_deg: 0.0,
            mode: RenderMode::Anechoic,
            ir: None,
            ir_label: None,
            ir_convention: BFormatConvention::Fuma,
            decode_pattern: DEFAULT_DECODE_PATTERN,
            peak_normalize: None,
        }
    }

    pub fn reverb(stems: Vec<Stem>, ir: BFormatSignal) -> Self {
        Self {
            mode: RenderMode::Reverb,
            ir: Some(ir),
            ..Self::anechoic(stems)
        }
    }

    fn validate(&self) -> Result<()> {
        let first = self.stems.first().ok_or_else(|| Error::invalid("scene has no stems"))?;
        let rate = first.audio.sample_rate();
        for s in &self.stems {
            if s.audio.num_channels() != 1 {
                return Err(Error::invalid(format!("stem `{}` is not mono", s.instrument)));
            }
            if s.audio.sample_rate() != rate {
                return Err(Error::SampleRateMismatch(rate, s.audio.sample_rate()));
            }
        }
        if !(0.0..=1.0).contains(&self.decode_pattern) {
            return Err(Error::invalid("decode pattern must lie in [0, 1]"));
        }
        if self.mode == RenderMode::Reverb {
            let ir = self.ir.as_ref().ok_or(Error::MissingImpulseResponse)?;
            if ir.sample_rate != rate {
                return Err(Error::SampleRateMismatch(rate, ir.sample_rate));
            }
            if ir.is_empty() {
                return Err(Error::invalid("impulse response is empty"));
            }
        }
        if let Some(p) = self.peak_normalize {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::invalid("normalisation peak must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StemPlacement {
    pub instrument: Instrument,
    pub azimuth_deg: f64,
}

/// Everything needed to reproduce a render; written as `scene.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMetadata {
    pub mode: RenderMode,
    pub sample_rate: u32,
    pub spacing_deg: f64,
    pub center_deg: f64,
    pub decode_pattern: f64,
    pub azimuth_convention: String,
    pub bformat_convention: BFormatConvention,
    pub ir: Option<String>,
    pub normalization_gain: f64,
    pub length_samples: usize,
    pub stems: Vec<StemPlacement>,
}

#[derive(Debug, Clone)]
pub struct RenderedScene {
    pub stems_stereo: Vec<Stem>,
    pub mixture: AudioBuffer,
    pub azimuths: Vec<f64>,
    pub metadata: SceneMetadata,
}

/// Symmetric arc centred on 0°: `θ_i = (i - (n-1)/2) · spacing`.
pub fn assign_azimuths(n: usize, spacing_deg: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("need at least one source"));
    }
    let mid = (n as f64 - 1.0) / 2.0;
    Ok((0..n).map(|i| (i as f64 - mid) * spacing_deg).collect())
}

/// Sums stems sharing an instrument label, keeping first-occurrence order.
pub fn merge_same_instrument(stems: Vec<Stem>) -> Result<Vec<Stem>> {
    let mut merged: Vec<Stem> = Vec::new();
    for stem in stems {
        if let Some(first) = merged.first() {
            first.audio.check_compatible(&stem.audio)?;
        }
        match merged.iter_mut().find(|m| m.instrument == stem.instrument) {
            Some(m) => m.audio.add_assign(&stem.audio)?,
            None => merged.push(stem),
        }
    }
    Ok(merged)
}

/// Stereo impulse response for a source at `azimuth_deg`.
pub fn stereo_ir(ir: &BFormatSignal, azimuth_deg: f64, pattern: f64) -> Result<AudioBuffer> {
    midside_to_stereo(&decode_midside(&rotate_z(ir, azimuth_deg), pattern))
}

pub fn render(spec: &SceneSpec) -> Result<RenderedScene> {
    spec.validate()?;
    let rate = spec.stems[0].audio.sample_rate();
    let azimuths: Vec<f64> = assign_azimuths(spec.stems.len(), spec.spacing_deg)?
        .into_iter()
        .map(|a| a + spec.center_deg)
        .collect();

    let mut rendered = Vec::with_capacity(spec.stems.len());
    for (stem, &az) in spec.stems.iter().zip(&azimuths) {
        let stereo = match spec.mode {
            RenderMode::Reverb => {
                let ir = spec.ir.as_ref().ok_or(Error::MissingImpulseResponse)?;
                convolve_stereo(&stem.audio, &stereo_ir(ir, az, spec.decode_pattern)?)?
            }
            RenderMode::Anechoic => {
                let (gl, gr) = anechoic_gains(az, spec.decode_pattern);
                let s = stem.audio.channel(0);
                AudioBuffer::new(
                    vec![s.iter().map(|v| v * gl).collect(), s.iter().map(|v| v * gr).collect()],
                    rate,
                )?
            }
        };
        rendered.push(Stem::new(stem.instrument, stereo));
    }

    let len = rendered.iter().map(|s| s.audio.len()).max().unwrap_or(0);
    for s in &mut rendered {
        s.audio = s.audio.padded_to(len);
    }

    let mut gain = 1.0;
    if let Some(peak) = spec.peak_normalize {
        let mix = AudioBuffer::sum(rendered.iter().map(|s| &s.audio))?;
        let current = mix.peak();
        if current > 0.0 {
            gain = peak / current;
            for s in &mut rendered {
                s.audio = s.audio.scaled(gain);
            }
        }
    }
    let mixture = AudioBuffer::sum(rendered.iter().map(|s| &s.audio))?;

    let metadata = SceneMetadata {
        mode: spec.mode,
        sample_rate: rate,
        spacing_deg: spec.spacing_deg,
        center_deg: spec.center_deg,
        decode_pattern: spec.decode_pattern,
        azimuth_convention: "degrees, counter-clockwise positive (left), 0 = front".into(),
        bformat_convention: spec.ir_convention,
        ir: match spec.mode {
            RenderMode::Reverb => spec.ir_label.clone().or_else(|| Some("unnamed".into())),
            RenderMode::Anechoic => None,
        },
        normalization_gain: gain,
        length_samples: len,
        stems: spec
            .stems
            .iter()
            .zip(&azimuths)
            .map(|(s, &a)| StemPlacement {
                instrument: s.instrument,
                azimuth_deg: a,
            })
            .collect(),
    };
    Ok(RenderedScene {
        stems_stereo: rendered,
        mixture,
        azimuths,
        metadata,
    })
}

impl RenderedScene {
    /// Sum of all rendered stems labelled `target`.
    pub fn target_stem(&self, target: Instrument) -> Result<AudioBuffer> {
        let parts: Vec<&AudioBuffer> = self
            .stems_stereo
            .iter()
            .filter(|s| s.instrument == target)
            .map(|s| &s.audio)
            .collect();
        if parts.is_empty() {
            return Err(Error::UnknownInstrument(target.to_string()));
        }
        AudioBuffer::sum(parts)
    }
}

/// Signal-to-music ratio: the SDR pipeline with the unprocessed mixture as
/// the estimate of the target stem.
pub fn smr_reference(scene: &RenderedScene, target: Instrument, opts: SdrOptions) -> Result<f64> {
    let reference = scene.target_stem(target)?;
    Ok(track_sdr(&reference, &scene.mixture, opts)?.median)
}
