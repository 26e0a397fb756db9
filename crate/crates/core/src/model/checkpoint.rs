//! Binary model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content                                            |
//! |-------|----------------------------------------------------|
//! | 4     | magic `DSF1`                                       |
//! | 4     | format version (`u32`, currently 1)                |
//! | 8     | configuration length `n` (`u64`)                   |
//! | n     | configuration as JSON ([`ModelConfig`] field order) |
//! | rest  | parameter values as `f32`                          |
//!
//! Parameters appear in [`ModelState::all_tensors`] order: per tower, per
//! conv block — kernel, bias, gamma, beta, running mean, running variance —
//! then hidden weight, hidden bias, output weight, output bias. Shapes are
//! implied by the configuration, so no per-tensor headers are stored.
//!
//! Saving a loaded model reproduces the file byte for byte: values are
//! stored as `f32` and widened to `f64` on load, and that narrowing is
//! idempotent.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ModelConfig, ModelError, ModelState};

const MAGIC: &[u8; 4] = b"DSF1";
const VERSION: u32 = 1;

fn io_err(path: &Path, source: std::io::Error) -> ModelError {
    ModelError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn corrupt(path: &Path, reason: impl Into<String>) -> ModelError {
    ModelError::Corrupt {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Writes `state` to `path`, creating or truncating the file.
pub fn save_checkpoint(state: &ModelState, path: &Path) -> Result<(), ModelError> {
    let config_json =
        serde_json::to_string(&state.config).expect("model configuration serializes");
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| io_err(path, e));
    write(MAGIC)?;
    write(&VERSION.to_le_bytes())?;
    write(&(config_json.len() as u64).to_le_bytes())?;
    write(config_json.as_bytes())?;
    for tensor in state.all_tensors() {
        for &v in tensor.data() {
            write(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads a model from `path`, validating structure, shape totals, and value
/// finiteness.
pub fn load_checkpoint(path: &Path) -> Result<ModelState, ModelError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, path, "magic")?;
    if &magic != MAGIC {
        return Err(ModelError::BadMagic {
            path: path.to_path_buf(),
        });
    }
    let mut version = [0u8; 4];
    read_exact(&mut r, &mut version, path, "version")?;
    let version = u32::from_le_bytes(version);
    if version != VERSION {
        return Err(ModelError::Version {
            path: path.to_path_buf(),
            found: version,
        });
    }

    let mut len = [0u8; 8];
    read_exact(&mut r, &mut len, path, "configuration length")?;
    let len = u64::from_le_bytes(len);
    // A configuration is a small JSON object; anything enormous means a
    // corrupt length field, and trusting it would over-allocate.
    if len > 1 << 20 {
        return Err(corrupt(
            path,
            format!("configuration length {len} exceeds 1 MiB"),
        ));
    }
    let mut config_json = vec![0u8; len as usize];
    read_exact(&mut r, &mut config_json, path, "configuration")?;
    let config: ModelConfig = serde_json::from_slice(&config_json)
        .map_err(|e| corrupt(path, format!("configuration does not parse: {e}")))?;
    config
        .validate()
        .map_err(|e| corrupt(path, format!("configuration invalid: {e}")))?;

    let mut state = ModelState::with_shapes(config)?;
    let mut buf = [0u8; 4];
    for tensor in state.all_tensors_mut() {
        for v in tensor.data_mut() {
            read_exact(&mut r, &mut buf, path, "parameter values")?;
            *v = f32::from_le_bytes(buf) as f64;
        }
    }
    let mut trailing = [0u8; 1];
    match r.read(&mut trailing) {
        Ok(0) => {}
        Ok(_) => return Err(corrupt(path, "trailing data after parameters")),
        Err(e) => return Err(io_err(path, e)),
    }
    if !state.all_finite() {
        return Err(corrupt(path, "non-finite parameter value"));
    }
    Ok(state)
}

fn read_exact(
    r: &mut impl Read,
    buf: &mut [u8],
    path: &Path,
    what: &str,
) -> Result<(), ModelError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            corrupt(path, format!("file truncated while reading {what}"))
        } else {
            io_err(path, e)
        }
    })
}
