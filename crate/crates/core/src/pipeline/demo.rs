//! The bundled 50-document demo dataset.

use std::path::{Path, PathBuf};

use super::PipelineError;

pub const REGISTRY: &str = include_str!("../../data/demo/registry.csv");
pub const FEEDBACK: &str = include_str!("../../data/demo/feedback.jsonl");
pub const LEXICON: &str = include_str!("../../data/demo/lexicon.json");
pub const CONFIG: &str = include_str!("../../data/demo/needgraph.toml");

pub const CONFIG_FILE: &str = "needgraph.toml";

/// Writes the demo inputs and config into `dir`; returns the config path.
/// Artifacts go to `dir/out`.
pub fn write_demo(dir: &Path) -> Result<PathBuf, PipelineError> {
    for (name, text) in [
        ("registry.csv", REGISTRY),
        ("feedback.jsonl", FEEDBACK),
        ("lexicon.json", LEXICON),
        (CONFIG_FILE, CONFIG),
    ] {
        super::write_atomic(&dir.join(name), text.as_bytes())?;
    }
    Ok(dir.join(CONFIG_FILE))
}
