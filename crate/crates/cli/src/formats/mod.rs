//! On-disk formats: QISF frame stacks, binary portable pix/graymaps and
//! patch-chart text files.

mod chart;
mod pnm;
mod qisf;

use std::io::Write;
use std::path::Path;

use thiserror::Error;

pub use chart::{parse_patch_chart, PatchChart};
pub use pnm::{decode_pnm, encode_ppm, read_image, write_image, BitDepth, PnmImage, ReadOptions};
pub use qisf::{decode_stack, encode_stack, read_stack, write_stack, QisfHeader, HEADER_LEN, MAGIC, VERSION};

#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported version {0}")]
    Version(u16),
    #[error("truncated header: need {expected} bytes, have {actual}")]
    TruncatedHeader { expected: usize, actual: usize },
    #[error("payload length mismatch: expected {expected} bytes, got {actual}")]
    PayloadLength { expected: u64, actual: u64 },
    #[error("declared size overflows: {0}")]
    Overflow(String),
    #[error("value {value} at offset {offset} outside the mode range 0..={max}")]
    Range { value: u32, offset: usize, max: u32 },
    #[error("invalid header field: {0}")]
    Header(String),
    #[error("unsupported maxval {0} (expected 255 or 65535)")]
    Maxval(u32),
    #[error("line {line}: {msg}")]
    Chart { line: usize, msg: String },
}

/// Write `bytes` to `path` through a sibling temporary file so readers never
/// observe a partially written output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
