//! Line-delimited JSON helpers shared by every file format in the harness.
//!
//! Blank (whitespace-only) lines are skipped. Line numbers are 1-based.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// Reads every non-blank line as a `T`, returning `(line_number, value)` pairs.
pub fn read_lines<T, R>(reader: R) -> Result<Vec<(usize, T)>, JsonlError>
where
    T: DeserializeOwned,
    R: BufRead,
{
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value = parse_line(&line).map_err(|message| JsonlError::Malformed {
            line: idx + 1,
            message,
        })?;
        out.push((idx + 1, value));
    }
    Ok(out)
}

/// Parses a single line. Errors carry the decoder message only.
pub fn parse_line<T: DeserializeOwned>(line: &str) -> Result<T, String> {
    serde_json::from_str(line).map_err(|e| e.to_string())
}

/// Writes one compact JSON object per line, each terminated by `\n`.
pub fn write_lines<T, W>(mut writer: W, items: &[T]) -> Result<(), JsonlError>
where
    T: Serialize,
    W: Write,
{
    for item in items {
        serde_json::to_writer(&mut writer, item).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}
