//! Deterministic synthetic sources: band-limited noise, tone sequences,
//! harmonic instrument stand-ins and the two-source toy task.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::{write_wav, AudioBuffer, WavEncoding};
use crate::dataset::{
    derive_seed, rng_for, CorpusManifest, MixtureSample, Origin, Split, StemEntry, TrackEntry, MANIFEST_VERSION,
};
use crate::error::{Error, Result};
use crate::instrument::Instrument;
use crate::scene::{render, SceneSpec, Stem};

fn normalize_rms(mut x: Vec<f64>) -> Vec<f64> {
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt();
    if rms > 0.0 {
        x.iter_mut().for_each(|v| *v /= rms);
    }
    x
}

/// Unit-RMS Gaussian white noise.
pub fn white_noise(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_for(seed);
    normalize_rms((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
}

/// Unit-RMS noise with every DFT bin outside `[lo_hz, hi_hz]` removed.
pub fn band_noise(n: usize, sample_rate: u32, lo_hz: f64, hi_hz: f64, seed: u64) -> Result<Vec<f64>> {
    if n == 0 || !(0.0..hi_hz).contains(&lo_hz) {
        return Err(Error::invalid("band noise needs n > 0 and 0 <= lo < hi"));
    }
    let mut x = white_noise(n, seed);
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut spec = fwd.make_output_vec();
    fwd.process(&mut x, &mut spec)
        .map_err(|e| Error::invalid(e.to_string()))?;
    let df = sample_rate as f64 / n as f64;
    for (k, c) in spec.iter_mut().enumerate() {
        let f = k as f64 * df;
        if f < lo_hz || f > hi_hz {
            *c = Default::default();
        }
    }
    spec[0].im = 0.0;
    if n.is_multiple_of(2) {
        spec[n / 2].im = 0.0;
    }
    let mut out = inv.make_output_vec();
    inv.process(&mut spec, &mut out)
        .map_err(|e| Error::invalid(e.to_string()))?;
    Ok(normalize_rms(out))
}

fn envelope(i: usize, len: usize, ramp: usize) -> f64 {
    let r = ramp.min(len / 2).max(1);
    if i < r {
        0.5 - 0.5 * (PI * i as f64 / r as f64).cos()
    } else if i >= len - r {
        0.5 - 0.5 * (PI * (len - i) as f64 / r as f64).cos()
    } else {
        1.0
    }
}

/// Unit-RMS sequence of notes, each `voices` sinusoids with frequencies drawn
/// uniformly in `[lo_hz, hi_hz]`, with raised-cosine note edges.
pub fn tone_sequence(
    n: usize,
    sample_rate: u32,
    lo_hz: f64,
    hi_hz: f64,
    note_s: f64,
    voices: usize,
    seed: u64,
) -> Vec<f64> {
    let mut rng = rng_for(seed);
    let note = ((note_s * sample_rate as f64) as usize).max(1);
    let ramp = (0.005 * sample_rate as f64) as usize;
    let mut out = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let len = note.min(n - start);
        for _ in 0..voices {
            let f = rng.gen_range(lo_hz..=hi_hz);
            let phase = rng.gen_range(0.0..2.0 * PI);
            let amp = rng.gen_range(0.5..1.0);
            let w = 2.0 * PI * f / sample_rate as f64;
            for i in 0..len {
                out[start + i] += amp * envelope(i, len, ramp) * (w * i as f64 + phase).sin();
            }
        }
        start += len;
    }
    normalize_rms(out)
}

/// Fundamental range in Hz used for a synthetic stand-in of each instrument.
pub fn pitch_range(inst: Instrument) -> (f64, f64) {
    match inst {
        Instrument::Bassoon => (58.0, 500.0),
        Instrument::Cello => (65.0, 600.0),
        Instrument::Clarinet => (147.0, 1200.0),
        Instrument::Flute => (262.0, 2000.0),
        Instrument::Oboe => (233.0, 1400.0),
        Instrument::Saxophone => (138.0, 830.0),
        Instrument::Viola => (131.0, 1000.0),
        Instrument::Violin => (196.0, 2600.0),
        Instrument::Other => (80.0, 1000.0),
    }
}

/// Unit-RMS harmonic notes in the instrument's range; partials stay below
/// 0.45 of the sample rate.
pub fn instrument_tone(inst: Instrument, n: usize, sample_rate: u32, seed: u64) -> Vec<f64> {
    let (lo, hi) = pitch_range(inst);
    let nyq = 0.45 * sample_rate as f64;
    let hi = hi.min(nyq);
    let lo = lo.min(hi * 0.5);
    let mut rng = rng_for(seed);
    let note = (0.5 * sample_rate as f64) as usize;
    let ramp = (0.01 * sample_rate as f64) as usize;
    let mut out = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let len = note.max(1).min(n - start);
        let f0 = lo * (hi / lo).powf(rng.gen::<f64>());
        let mut k = 1;
        while k as f64 * f0 < nyq && k <= 8 {
            let w = 2.0 * PI * k as f64 * f0 / sample_rate as f64;
            let phase = rng.gen_range(0.0..2.0 * PI);
            for i in 0..len {
                out[start + i] += envelope(i, len, ramp) * (w * i as f64 + phase).sin() / k as f64;
            }
            k += 1;
        }
        start += len;
    }
    normalize_rms(out)
}

/// Two-source toy task: band noise (100–800 Hz) labelled cello against
/// 2–6 kHz tones labelled flute, rendered anechoically 10° apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyTask {
    pub sample_rate: u32,
    pub duration_s: f64,
    /// Tone level relative to the noise, in dB.
    pub interferer_db: f64,
    pub noise_band_hz: (f64, f64),
    pub tone_band_hz: (f64, f64),
}

impl Default for ToyTask {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            duration_s: 2.0,
            interferer_db: 0.0,
            noise_band_hz: (100.0, 800.0),
            tone_band_hz: (2000.0, 6000.0),
        }
    }
}

impl ToyTask {
    pub const TARGET: Instrument = Instrument::Cello;
    pub const INTERFERER: Instrument = Instrument::Flute;

    pub fn sample(&self, seed: u64) -> Result<MixtureSample> {
        let n = (self.duration_s * self.sample_rate as f64).round() as usize;
        let rate = self.sample_rate;
        let (nlo, nhi) = self.noise_band_hz;
        let (tlo, thi) = self.tone_band_hz;
        let noise = band_noise(n, rate, nlo, nhi, derive_seed(seed, 0))?;
        let gain = 10f64.powf(self.interferer_db / 20.0);
        let tones: Vec<f64> = tone_sequence(n, rate, tlo, thi, 0.25, 3, derive_seed(seed, 1))
            .into_iter()
            .map(|v| v * gain)
            .collect();
        let spec = SceneSpec::anechoic(vec![
            Stem::new(
                Self::TARGET,
                AudioBuffer::mono(noise.into_iter().map(|v| 0.1 * v).collect(), rate)?,
            ),
            Stem::new(
                Self::INTERFERER,
                AudioBuffer::mono(tones.into_iter().map(|v| 0.1 * v).collect(), rate)?,
            ),
        ]);
        let scene = render(&spec)?;
        MixtureSample::new(
            format!("toy_{seed:016x}"),
            scene.stems_stereo,
            Origin::RandomMix,
            Some(seed),
        )
    }

    /// `count` samples with seeds derived from `(seed, offset + k)`.
    pub fn pool(&self, seed: u64, offset: u64, count: usize) -> Result<Vec<MixtureSample>> {
        (0..count as u64)
            .map(|k| self.sample(derive_seed(seed, offset + k)))
            .collect()
    }
}

/// Writes a synthetic corpus: one directory per track with a WAV per stem,
/// plus `manifest.json`. Track `k` gets `durations_s[k]` seconds and the
/// instruments `ensembles[k % ensembles.len()]`.
pub fn write_synthetic_corpus(
    dir: impl AsRef<Path>,
    sample_rate: u32,
    durations_s: &[f64],
    ensembles: &[Vec<Instrument>],
    split: Split,
    seed: u64,
) -> Result<CorpusManifest> {
    let dir = dir.as_ref();
    if ensembles.is_empty() {
        return Err(Error::invalid("at least one ensemble is needed"));
    }
    let mut tracks = Vec::new();
    for (k, &dur) in durations_s.iter().enumerate() {
        let id = format!("track{k:02}");
        let tdir = dir.join(&id);
        std::fs::create_dir_all(&tdir).map_err(|e| Error::io(&tdir, e))?;
        let n = (dur * sample_rate as f64).round() as usize;
        let mut stems = Vec::new();
        for (j, &inst) in ensembles[k % ensembles.len()].iter().enumerate() {
            let x: Vec<f64> = instrument_tone(inst, n, sample_rate, derive_seed(seed, (k * 16 + j) as u64))
                .into_iter()
                .map(|v| 0.2 * v)
                .collect();
            let file = format!("{id}/{inst}.wav");
            write_wav(
                &AudioBuffer::mono(x, sample_rate)?,
                dir.join(&file),
                WavEncoding::Float32,
            )?;
            stems.push(StemEntry {
                instrument: inst,
                wav_path: file.into(),
            });
        }
        tracks.push(TrackEntry {
            track_id: id,
            source_dataset: "synthetic".into(),
            split,
            stems,
        });
    }
    let manifest = CorpusManifest {
        version: MANIFEST_VERSION,
        sample_rate,
        tracks,
    };
    manifest.save(dir.join("manifest.json"))?;
    CorpusManifest::load(dir.join("manifest.json"))
}
