//! Mono stems → stereo scene.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use cadenza_core::ambisonics::{BFormatConvention, BFormatSignal};
use cadenza_core::scene::{
    merge_same_instrument, render, RenderMode, SceneMetadata, SceneSpec, Stem, DEFAULT_DECODE_PATTERN,
    DEFAULT_SPACING_DEG,
};
use cadenza_core::{read_wav, write_wav, Error, Instrument, WavEncoding};

use super::write_json;
use crate::{ensure_dir, usage, RunContext};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Directory of mono WAV stems named after their instrument.
    #[arg(long)]
    stems_dir: PathBuf,
    /// Four-channel B-format impulse response (required for reverb).
    #[arg(long)]
    ir: Option<PathBuf>,
    /// Channel convention of the impulse response: fuma or ambix.
    #[arg(long, default_value = "fuma")]
    ir_convention: String,
    /// anechoic or reverb.
    #[arg(long, default_value = "anechoic")]
    mode: String,
    /// Degrees between neighbouring sources.
    #[arg(long, default_value_t = DEFAULT_SPACING_DEG)]
    spacing: f64,
    /// Azimuth of the arc centre in degrees.
    #[arg(long, default_value_t = 0.0)]
    center: f64,
    /// Decoder pattern: 0 figure-of-eight, 0.5 cardioid, 1 omni.
    #[arg(long, default_value_t = DEFAULT_DECODE_PATTERN)]
    pattern: f64,
    /// Normalise the mixture to this peak.
    #[arg(long)]
    peak: Option<f64>,
    /// Comma-separated instrument order, left to right; defaults to file-name order.
    #[arg(long, value_delimiter = ',')]
    order: Vec<String>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Serialize)]
struct SceneRecord<'a> {
    seed: u64,
    stems_dir: &'a Path,
    #[serde(flatten)]
    scene: &'a SceneMetadata,
}

/// Instrument named by a stem file: the whole stem, else its last `-` field.
fn label_of(path: &Path) -> anyhow::Result<Instrument> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    Instrument::from_stem_label(stem)
        .or_else(|e| match stem.rsplit_once('-') {
            Some((_, tail)) => Instrument::from_stem_label(tail),
            None => Err(e),
        })
        .with_context(|| format!("stem file {}", path.display()))
}

pub(crate) fn load_stems(dir: &Path) -> anyhow::Result<Vec<Stem>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(usage(format!("no WAV stems in {}", dir.display())));
    }
    let mut stems = Vec::with_capacity(files.len());
    for f in &files {
        stems.push(Stem::new(label_of(f)?, read_wav(f)?));
    }
    Ok(merge_same_instrument(stems)?)
}

fn reorder(stems: Vec<Stem>, order: &[String]) -> anyhow::Result<Vec<Stem>> {
    if order.is_empty() {
        return Ok(stems);
    }
    let wanted: Vec<Instrument> = order.iter().map(|s| s.parse()).collect::<Result<_, Error>>()?;
    if wanted.len() != stems.len() || stems.iter().any(|s| !wanted.contains(&s.instrument)) {
        return Err(usage("--order must list every stem instrument exactly once"));
    }
    let mut out = Vec::with_capacity(stems.len());
    for w in wanted {
        out.push(stems.iter().find(|s| s.instrument == w).cloned().expect("checked"));
    }
    Ok(out)
}

pub fn run(ctx: &RunContext, a: Args) -> anyhow::Result<()> {
    let mode: RenderMode = a.mode.parse()?;
    let convention: BFormatConvention = a.ir_convention.parse()?;
    let stems = reorder(load_stems(&a.stems_dir)?, &a.order)?;
    let mut spec = match (mode, &a.ir) {
        (RenderMode::Reverb, None) => return Err(Error::MissingImpulseResponse.into()),
        (RenderMode::Reverb, Some(p)) => {
            let ir = BFormatSignal::from_buffer(&read_wav(p)?, convention)?;
            let mut s = SceneSpec::reverb(stems, ir);
            s.ir_label = p.file_name().map(|n| n.to_string_lossy().into_owned());
            s
        }
        (RenderMode::Anechoic, _) => SceneSpec::anechoic(stems),
    };
    spec.spacing_deg = a.spacing;
    spec.center_deg = a.center;
    spec.decode_pattern = a.pattern;
    spec.ir_convention = convention;
    spec.peak_normalize = a.peak;

    let scene = render(&spec)?;
    ensure_dir(&a.out_dir)?;
    for s in &scene.stems_stereo {
        write_wav(
            &s.audio,
            a.out_dir.join(format!("{}.wav", s.instrument)),
            WavEncoding::Float32,
        )?;
    }
    write_wav(&scene.mixture, a.out_dir.join("mixture.wav"), WavEncoding::Float32)?;
    write_json(
        &a.out_dir.join("scene.json"),
        &SceneRecord {
            seed: ctx.seed,
            stems_dir: &a.stems_dir,
            scene: &scene.metadata,
        },
    )
}
