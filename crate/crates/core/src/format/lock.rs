use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::{Error, Result};

static NONCE: AtomicU64 = AtomicU64::new(0);

/// Advisory exclusive-writer lock backed by a `create_new` lock file.
///
/// The file holds an owner token; the lock counts as held only while the file
/// still carries that token. Dropping the guard removes the file.
#[derive(Debug)]
pub struct WriterLock {
    path: PathBuf,
    token: String,
}

impl WriterLock {
    pub fn acquire(path: impl AsRef<Path>) -> Result<WriterLock> {
        let path = path.as_ref().to_path_buf();
        let nanos = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or_default();
        let token = format!(
            "{} {} {}",
            std::process::id(),
            nanos,
            NONCE.fetch_add(1, Ordering::Relaxed)
        );
        let mut file = match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == ErrorKind::AlreadyExists => return Err(Error::LockBusy(path)),
            Err(e) => return Err(Error::io(&path)(e)),
        };
        file.write_all(token.as_bytes()).map_err(Error::io(&path))?;
        Ok(WriterLock { path, token })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn is_held(&self) -> bool {
        fs::read(&self.path).is_ok_and(|b| b == self.token.as_bytes())
    }

    pub fn ensure_held(&self) -> Result<()> {
        if self.is_held() {
            Ok(())
        } else {
            Err(Error::LockNotHeld(self.path.clone()))
        }
    }
}

impl Drop for WriterLock {
    fn drop(&mut self) {
        if self.is_held() {
            let _ = fs::remove_file(&self.path);
        }
    }
}
