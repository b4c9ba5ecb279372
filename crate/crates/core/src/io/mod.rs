//! File formats.
//!
//! Plain-text key/value files carry parameters, configuration sidecars,
//! and fit reports; small fixed-schema CSV files carry waveforms, traces,
//! measurement logs, and rate points. Floats are rendered with 17
//! significant digits so every `f64` round-trips losslessly, and all
//! writes go through a temp-file-and-rename so interrupted runs never
//! leave truncated output.

pub mod csv;
pub mod kv;
pub mod params;
pub mod report;

use std::io::Write;
use std::path::Path;

use crate::error::FileError;
use crate::scalar::Real;

/// Renders a float with 17 significant digits (lossless for `f64`).
pub fn fmt_float<T: Real>(x: T) -> String {
    format!("{:.16e}", x.to_f64().unwrap_or(f64::NAN))
}

/// Parses a float field, mapping into the working scalar type.
pub fn parse_float<T: Real>(path: &Path, line: usize, field: &str) -> Result<T, FileError> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| FileError::schema(path, line, format!("not a number: {field:?}")))?;
    T::from_f64(v).ok_or_else(|| FileError::schema(path, line, "value not representable"))
}

/// Writes `content` to `path` atomically (temp file in the same directory,
/// then rename).
pub fn write_atomic(path: &Path, content: &str) -> Result<(), FileError> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(content.as_bytes())?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| FileError::Io(e.error))?;
    Ok(())
}
