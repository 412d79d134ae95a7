pub mod evaluate;
pub mod mix;
pub mod report;
pub mod separate;
pub mod spatialize;
pub mod train_toy;

use std::path::Path;

use anyhow::Context;
use serde::Serialize;

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub(crate) fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
