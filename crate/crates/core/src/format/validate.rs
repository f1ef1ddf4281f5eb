use std::fs;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::format::index::{self, Arrays};
use crate::format::paths::DatasetPaths;

/// One violated invariant in a validation report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub check: String,
    pub location: String,
    pub detail: String,
}

impl Violation {
    fn from_error(e: &Error) -> Violation {
        let location = match e {
            Error::InconsistentPointers { index, .. }
            | Error::InvalidLength { index, .. }
            | Error::InvalidBoundaries { index, .. } => format!("i={index}"),
            Error::BadMagic { offset }
            | Error::UnsupportedVersion { offset, .. }
            | Error::UnknownDType { offset, .. }
            | Error::TruncatedIndex { offset, .. }
            | Error::TrailingIndexBytes { offset } => format!("offset {offset}"),
            Error::BinSizeMismatch { .. } => "bin".into(),
            Error::IoFailure { path, .. } => path.display().to_string(),
            _ => String::new(),
        };
        Violation {
            check: e.code().to_string(),
            location,
            detail: e.to_string(),
        }
    }
}

/// Checks every index and payload invariant and reports all violations.
/// An empty report means the dataset is well-formed.
pub fn validate_dataset(paths: &DatasetPaths) -> Vec<Violation> {
    let mut report = Vec::new();
    let idx_path = paths.idx();
    let bytes = match fs::read(&idx_path) {
        Ok(b) => b,
        Err(e) => {
            report.push(Violation::from_error(&Error::io(&idx_path)(e)));
            return report;
        }
    };
    let bin_path = paths.bin();
    let bin_size = match fs::metadata(&bin_path) {
        Ok(m) => Some(m.len()),
        Err(e) => {
            report.push(Violation::from_error(&Error::io(&bin_path)(e)));
            None
        }
    };
    let header = match index::decode_header(&bytes) {
        Ok(h) => h,
        Err(e) => {
            report.push(Violation::from_error(&e));
            return report;
        }
    };
    let arrays: Arrays = match index::decode_arrays(&bytes, &header) {
        Ok(a) => a,
        Err(e) => {
            report.push(Violation::from_error(&e));
            return report;
        }
    };
    let end = index::encoded_len(header.sequence_count, header.boundary_count);
    if bytes.len() > end {
        report.push(Violation::from_error(&Error::TrailingIndexBytes { offset: end }));
    }
    index::check_invariants(header.dtype, &arrays, &mut |e| {
        report.push(Violation::from_error(&e));
        true
    });
    if let Some(actual) = bin_size {
        let width = header.dtype.width() as u64;
        let expected = arrays.bin_size(width);
        if expected != actual {
            report.push(Violation::from_error(&Error::BinSizeMismatch { expected, actual }));
        }
    }
    report
}

/// Serializes a report as JSON lines, one violation per line.
pub fn write_report<W: Write>(report: &[Violation], w: &mut W) -> std::io::Result<()> {
    for v in report {
        serde_json::to_writer(&mut *w, v)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
