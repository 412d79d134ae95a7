//! Target/residual separation with a saved model.

use std::path::PathBuf;

use serde::Serialize;

use cadenza_core::tasnet::{Separation, TasNet, TasNetConfig};
use cadenza_core::{read_wav, write_wav, AudioBuffer, WavEncoding};

use super::write_json;
use crate::{ensure_dir, usage, RunContext};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Weight file written by `train-toy` or compatible tooling.
    #[arg(long)]
    model: PathBuf,
    /// Mixture WAV.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Run causal models block-wise with this many samples per chunk.
    #[arg(long)]
    chunk: Option<usize>,
}

#[derive(Serialize)]
struct SeparationRecord<'a> {
    seed: u64,
    model: &'a std::path::Path,
    input: &'a std::path::Path,
    config: &'a TasNetConfig,
    chunk: Option<usize>,
}

fn streamed(model: &TasNet, mixture: &AudioBuffer, chunk: usize) -> anyhow::Result<Separation> {
    if chunk == 0 {
        return Err(usage("--chunk must be positive"));
    }
    if model.config().n_sources != 2 {
        return Err(usage("target/residual split needs a two-source model"));
    }
    let mut session = model.stream()?;
    let mut out: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); mixture.num_channels()]; 2];
    let mut start = 0;
    let append = |out: &mut Vec<Vec<Vec<f64>>>, part: Vec<Vec<Vec<f64>>>| {
        for (o, p) in out.iter_mut().zip(part) {
            for (oc, pc) in o.iter_mut().zip(p) {
                oc.extend(pc);
            }
        }
    };
    while start < mixture.len() {
        let end = (start + chunk).min(mixture.len());
        let block: Vec<Vec<f64>> = mixture.channels().iter().map(|c| c[start..end].to_vec()).collect();
        append(&mut out, session.push(&block)?);
        start = end;
    }
    append(&mut out, session.finish()?);
    let residual = AudioBuffer::new(out.pop().expect("two sources"), mixture.sample_rate())?;
    let target = AudioBuffer::new(out.pop().expect("two sources"), mixture.sample_rate())?;
    Ok(Separation { target, residual })
}

pub fn run(ctx: &RunContext, a: Args) -> anyhow::Result<()> {
    let model = TasNet::load(&a.model)?;
    let mixture = read_wav(&a.input)?;
    let sep = match a.chunk {
        Some(c) => streamed(&model, &mixture, c)?,
        None => model.separate(&mixture)?,
    };
    ensure_dir(&a.out_dir)?;
    write_wav(&sep.target, a.out_dir.join("target.wav"), WavEncoding::Float32)?;
    write_wav(&sep.residual, a.out_dir.join("residual.wav"), WavEncoding::Float32)?;
    write_json(
        &a.out_dir.join("separation.json"),
        &SeparationRecord {
            seed: ctx.seed,
            model: &a.model,
            input: &a.input,
            config: model.config(),
            chunk: a.chunk,
        },
    )
}
