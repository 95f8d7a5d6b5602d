use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use calum_core::corpus::{load_jsonl, load_tsv};
use calum_core::{Dataset, Split, TaskSpec};
use serde::de::DeserializeOwned;

pub fn load_dataset(path: &Path, task: &TaskSpec, split: Split) -> Result<Dataset> {
    let jsonl = path.extension().is_some_and(|e| e == "jsonl");
    let d = if jsonl {
        load_jsonl(path, task, split)
    } else {
        load_tsv(path, task, split)
    };
    d.with_context(|| format!("loading {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Write `text` to `path`, or to stdout when there is no path.
pub fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}
