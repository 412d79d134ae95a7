//! Scores estimates against manifest references.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use cadenza_core::bss_eval::{track_sdr, SdrOptions};
use cadenza_core::dataset::{CorpusManifest, TrackEntry};
use cadenza_core::{read_wav, AudioBuffer, Instrument};

use super::write_text;
use crate::results::{read_rows, render_tables, write_rows, Causality, Condition, ResultRow, Status};
use crate::{usage, RunContext};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Corpus manifest whose stems are the references.
    #[arg(long)]
    manifest: PathBuf,
    /// Directory holding `<track_id>/<instrument>.wav` estimates.
    #[arg(long)]
    estimates_dir: Option<PathBuf>,
    #[arg(long)]
    out_csv: PathBuf,
    #[arg(long, value_enum)]
    condition: Condition,
    #[arg(long, value_enum)]
    causality: Option<Causality>,
    /// Keep existing rows of `out_csv`, replacing those with the same key.
    #[arg(long)]
    append: bool,
    /// Only compute the mixture-as-estimate reference.
    #[arg(long)]
    smr_only: bool,
    #[arg(long, default_value_t = 1.0)]
    frame_s: f64,
    #[arg(long, default_value_t = cadenza_core::bss_eval::DEFAULT_FILTER_LEN)]
    filter_len: usize,
}

struct Job<'a> {
    estimates: Option<&'a Path>,
    condition: Condition,
    causality: Causality,
    opts: SdrOptions,
    seed: u64,
}

fn score(job: &Job, track: &TrackEntry, inst: Instrument, reference: &AudioBuffer, mixture: &AudioBuffer) -> ResultRow {
    let smr_db = track_sdr(reference, mixture, job.opts).ok().map(|t| t.median);
    let mut row = ResultRow {
        dataset: track.source_dataset.clone(),
        instrument: inst,
        track: track.track_id.clone(),
        condition: job.condition,
        causality: job.causality,
        sdr_db: None,
        smr_db,
        status: Status::Ok,
        seed: job.seed,
    };
    let Some(dir) = job.estimates else {
        if smr_db.is_none() {
            row.status = Status::Error;
        }
        return row;
    };
    let path = dir.join(&track.track_id).join(format!("{inst}.wav"));
    if !path.is_file() {
        row.status = Status::Missing;
        return row;
    }
    match read_wav(&path).and_then(|est| track_sdr(reference, &est, job.opts)) {
        Ok(t) => row.sdr_db = Some(t.median),
        Err(e) => {
            eprintln!("warning: {}: {e}", path.display());
            row.status = Status::Error;
        }
    }
    row
}

fn score_track(manifest: &CorpusManifest, track: &TrackEntry, job: &Job) -> anyhow::Result<Vec<ResultRow>> {
    let stems = manifest.load_track(track)?;
    let mixture = AudioBuffer::sum(stems.iter().map(|s| &s.audio))?;
    Ok(stems
        .iter()
        .map(|s| score(job, track, s.instrument, &s.audio, &mixture))
        .collect())
}

pub fn run(ctx: &RunContext, a: Args) -> anyhow::Result<()> {
    let (estimates, causality) = if a.smr_only {
        (None, Causality::Reference)
    } else {
        let dir = a
            .estimates_dir
            .as_deref()
            .ok_or_else(|| usage("--estimates-dir is required unless --smr-only"))?;
        match a.causality {
            Some(Causality::Reference) | None => return Err(usage("--causality must be causal or noncausal")),
            Some(c) => (Some(dir), c),
        }
    };
    let manifest = CorpusManifest::load(&a.manifest)?;
    let job = Job {
        estimates,
        condition: a.condition,
        causality,
        opts: SdrOptions {
            frame_s: a.frame_s,
            filter_len: a.filter_len,
        },
        seed: ctx.seed,
    };
    let per_track: Vec<anyhow::Result<Vec<ResultRow>>> = manifest
        .tracks
        .par_iter()
        .map(|t| score_track(&manifest, t, &job))
        .collect();
    let mut fresh = Vec::new();
    for r in per_track {
        fresh.extend(r?);
    }

    let mut rows = if a.append && a.out_csv.is_file() {
        read_rows(&a.out_csv)?
    } else {
        Vec::new()
    };
    let key = |r: &ResultRow| {
        (
            r.dataset.clone(),
            r.track.clone(),
            r.instrument,
            r.condition,
            r.causality,
        )
    };
    let new_keys: std::collections::HashSet<_> = fresh.iter().map(key).collect();
    rows.retain(|r| !new_keys.contains(&key(r)));
    rows.extend(fresh);

    if let Some(parent) = a.out_csv.parent().filter(|p| !p.as_os_str().is_empty()) {
        crate::ensure_dir(&parent.to_path_buf())?;
    }
    write_rows(&a.out_csv, &rows)?;
    let table = a.out_csv.with_file_name("table2.md");
    write_text(&table, &render_tables(&rows))?;
    let bad = rows.iter().filter(|r| r.status != Status::Ok).count();
    eprintln!("{} rows ({} not ok) -> {}", rows.len(), bad, a.out_csv.display());
    Ok(())
}
