//! Validation-set construction.

use std::path::PathBuf;

use cadenza_core::dataset::{build_validation_set, materialize, CorpusManifest, DEFAULT_SEGMENT_S};
use cadenza_core::WavEncoding;

use crate::RunContext;

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Random string+woodwind mixtures; defaults to twice the segment count.
    #[arg(long)]
    n_random: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SEGMENT_S)]
    segment_s: f64,
    /// pcm16, pcm24 or float32.
    #[arg(long, default_value = "float32")]
    encoding: String,
}

pub fn run(ctx: &RunContext, a: Args) -> anyhow::Result<()> {
    let encoding: WavEncoding = a.encoding.parse()?;
    let manifest = CorpusManifest::load(&a.manifest)?;
    let set = build_validation_set(&manifest, ctx.seed, a.n_random, a.segment_s)?;
    materialize(&set, &a.out_dir, encoding)?;
    eprintln!(
        "{} segments, {} random mixtures -> {}",
        set.summary.quartets,
        set.summary.random_mixes,
        a.out_dir.display()
    );
    Ok(())
}
