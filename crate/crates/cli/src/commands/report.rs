//! Tables and significance tests from a results CSV.

use std::path::PathBuf;

use super::write_text;
use crate::results::{read_rows, render_significance, render_tables, seeds, significance};
use crate::{ensure_dir, usage, RunContext};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

pub fn run(_ctx: &RunContext, a: Args) -> anyhow::Result<()> {
    if !a.results.is_file() {
        return Err(usage(format!("{} does not exist", a.results.display())));
    }
    let rows = read_rows(&a.results).map_err(|e| usage(format!("{e:#}")))?;
    if rows.is_empty() {
        return Err(usage(format!("{} has no result rows", a.results.display())));
    }
    ensure_dir(&a.out_dir)?;
    write_text(&a.out_dir.join("table2.md"), &render_tables(&rows))?;
    write_text(
        &a.out_dir.join("significance.md"),
        &render_significance(&significance(&rows), &seeds(&rows)),
    )?;
    Ok(())
}
