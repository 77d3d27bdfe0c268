//! File-level dataset I/O with path context on errors.
//!
//! Thin wrappers over the core dataset serializer: the binary layout and
//! its integrity checks live in the library; this layer only attaches the
//! file path to I/O failures so a batch run that dies names the file that
//! killed it.

use rislab_core::channel::{load_dataset, save_dataset, ChannelSet};
use rislab_core::{Error, Result};
use std::path::Path;

pub(crate) fn add_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Io(io) => Error::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        )),
        other => other,
    }
}

/// Writes channel sets to `path` in the dataset container format.
pub fn write_channels(path: &Path, sets: &[ChannelSet]) -> Result<()> {
    save_dataset(path, sets).map_err(|e| add_path(e, path))
}

/// Reads channel sets from `path`, verifying magic, header, and payload
/// length; malformed files report the byte offset of the first
/// inconsistency.
pub fn read_channels(path: &Path) -> Result<Vec<ChannelSet>> {
    load_dataset(path).map_err(|e| add_path(e, path))
}
