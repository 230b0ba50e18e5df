//! Ensemble bundle files: one header line carrying the format version and a
//! SHA-256 of the body, then the ensemble as JSON.
//!
//! ```text
//! LEAPBUNDLE v1 sha256=<64 hex digits>
//! {"preprocess": ..., "representations": [...], "fits": {...}, ...}
//! ```

use std::path::Path;

use crate::ensemble::LeapEnsemble;
use crate::error::{LeapError, Result};
use crate::seed::sha256_hex;

const MAGIC: &str = "LEAPBUNDLE";
const VERSION: &str = "v1";

pub fn to_bytes(ensemble: &LeapEnsemble) -> Result<Vec<u8>> {
    let body = serde_json::to_vec(ensemble)?;
    let mut out = format!("{MAGIC} {VERSION} sha256={}\n", sha256_hex(&body)).into_bytes();
    out.extend_from_slice(&body);
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<LeapEnsemble> {
    let newline = bytes
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| LeapError::validation("bundle has no header line"))?;
    let header =
        std::str::from_utf8(&bytes[..newline]).map_err(|_| LeapError::validation("bundle header is not UTF-8"))?;
    let mut parts = header.split(' ');
    match (parts.next(), parts.next(), parts.next(), parts.next()) {
        (Some(MAGIC), Some(VERSION), Some(sum), None) if sum.starts_with("sha256=") => {
            let expected = &sum["sha256=".len()..];
            let body = &bytes[newline + 1..];
            let computed = sha256_hex(body);
            if computed != expected {
                return Err(LeapError::Checksum {
                    expected: expected.to_string(),
                    computed,
                });
            }
            Ok(serde_json::from_slice(body)?)
        }
        (Some(MAGIC), Some(v), _, _) => Err(LeapError::validation(format!("unsupported bundle version {v}"))),
        _ => Err(LeapError::validation("not a LEAP bundle")),
    }
}

pub fn save(ensemble: &LeapEnsemble, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| LeapError::io(dir, e))?;
    }
    std::fs::write(path, to_bytes(ensemble)?).map_err(|e| LeapError::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<LeapEnsemble> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| LeapError::io(path, e))?;
    from_bytes(&bytes)
}
