//! Atomic file output and output-directory resolution.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// Environment variable that redirects relative output paths into a
/// directory.
pub const OUT_DIR_ENV: &str = "PARAPIPE_OUT_DIR";

/// Resolves an output path: relative paths are joined onto
/// `$PARAPIPE_OUT_DIR` when it is set.
pub fn resolve_out_path(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir).join(path),
        _ => path.to_path_buf(),
    }
}

/// Writes bytes to `path` atomically: a temp file in the target directory
/// is written, flushed, and renamed over the destination.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<PathBuf> {
    let path = resolve_out_path(path);
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    }
    let mut temp = tempfile::NamedTempFile::new_in(dir.unwrap_or(Path::new(".")))
        .context("cannot create temp file")?;
    use std::io::Write;
    temp.write_all(bytes)?;
    temp.flush()?;
    temp.persist(&path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

/// Serializes records as JSONL and writes them atomically.
pub fn write_jsonl_atomic<T: Serialize>(path: &Path, records: &[T]) -> Result<PathBuf> {
    let mut bytes = Vec::new();
    parapipe::jsonl::write_jsonl_to(&mut bytes, records)?;
    write_atomic(path, &bytes)
}

/// Serializes a JSON document (pretty, trailing newline) and writes it
/// atomically.
pub fn write_json_atomic<T: Serialize>(path: &Path, document: &T) -> Result<PathBuf> {
    let mut bytes = serde_json::to_vec_pretty(document)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}
