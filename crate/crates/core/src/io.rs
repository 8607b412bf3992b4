//! File output helpers: atomic writes and round-trip number formatting.

use std::io::Write;
use std::path::Path;

use crate::error::Result;

/// Format with 17 significant digits so that parsing recovers the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write `bytes` to `path` through a temporary file in the same directory and
/// an atomic rename, so readers never observe a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Render rows of numbers as CSV under the given header.
pub fn csv_string(header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| num(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Serialize `value` as pretty JSON and write it atomically.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| crate::Error::Config(e.to_string()))?;
    atomic_write(path, text.as_bytes())
}
