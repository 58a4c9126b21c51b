//! Configuration, persistence formats and the scenario runner behind the CLI.

pub mod config;
pub mod manifest;
pub mod runner;
pub mod snapshot;
pub mod timeseries;

use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub use config::{load_config, RunSpec, Scenario};
pub use manifest::Manifest;
pub use runner::{execute, RunOptions};
pub use snapshot::{read_snapshot, write_snapshot, SnapshotFile};
pub use timeseries::write_timeseries;

pub const LOCK_NAME: &str = ".nsnl.lock";

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<OutputLock> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOCK_NAME);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(OutputLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::Locked(dir.display().to_string()))
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Reads `NSNL_THREADS`; unset or unparsable means one kernel thread.
pub fn threads_from_env() -> usize {
    std::env::var("NSNL_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let first = OutputLock::acquire(dir.path()).unwrap();
        assert!(matches!(OutputLock::acquire(dir.path()), Err(Error::Locked(_))));
        drop(first);
        assert!(OutputLock::acquire(dir.path()).is_ok());
    }
}
