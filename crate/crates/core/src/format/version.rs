use std::fs;
use std::io::ErrorKind;
use std::path::Path;

use crate::error::{Error, Result};

/// Reads the dataset version counter; a missing file means version 0.
pub fn read_version(path: &Path) -> Result<u64> {
    match fs::read_to_string(path) {
        Ok(s) => s.trim().parse().map_err(|_| Error::IoFailure {
            path: path.to_path_buf(),
            source: std::io::Error::new(ErrorKind::InvalidData, format!("bad version {s:?}")),
        }),
        Err(e) if e.kind() == ErrorKind::NotFound => Ok(0),
        Err(e) => Err(Error::io(path)(e)),
    }
}

pub fn write_version(path: &Path, version: u64) -> Result<()> {
    fs::write(path, format!("{version}\n")).map_err(Error::io(path))
}
