//! Layout of a run directory and the files written into it.
//!
//! ```text
//! run.lock                       held while a command works on the run
//! config.toml                    fully resolved configuration
//! store/store.bin, store.json    simulated pairs
//! estimators/round_{m}/{label}.{bin,json}
//! traces/round_{m}_{label}.csv   epoch, train_loss, val_loss, lr
//! rounds.json                    per-round history
//! posterior/                     histograms, samples, posterior.json
//! diagnostics/                   reports written by `diagnose`
//! ```

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prior::Region;
use crate::ratio::MarginalRatioEstimator;
use crate::truncation::{RoundKind, RoundRecord, RunStatus};

pub const LOCK_FILE: &str = "run.lock";
pub const CONFIG_FILE: &str = "config.toml";
pub const ROUNDS_FILE: &str = "rounds.json";

/// Exclusive claim on a run directory, released on drop. A lock left by a
/// process that no longer exists is taken over.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

fn pid_alive(pid: u32) -> bool {
    let proc = Path::new("/proc");
    !proc.exists() || proc.join(pid.to_string()).exists()
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOCK_FILE);
        for _ in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    write!(f, "{}", std::process::id())?;
                    return Ok(Self { path });
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    let holder = fs::read_to_string(&path).ok().and_then(|s| s.trim().parse::<u32>().ok());
                    match holder {
                        Some(pid) if !pid_alive(pid) => {
                            log::warn!("removing stale lock left by process {pid}");
                            fs::remove_file(&path)?;
                        }
                        _ => return Err(Error::Locked(dir.display().to_string())),
                    }
                }
                Err(e) => return Err(e.into()),
            }
        }
        Err(Error::Locked(dir.display().to_string()))
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunState {
    Running,
    Converged,
    MaxRounds,
    /// Single-round MNRE run.
    Completed,
}

impl From<RunStatus> for RunState {
    fn from(s: RunStatus) -> Self {
        match s {
            RunStatus::Converged => RunState::Converged,
            RunStatus::MaxRounds => RunState::MaxRounds,
        }
    }
}

/// Contents of `rounds.json`. Deliberately free of timestamps and paths so
/// identical runs produce identical bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub state: RunState,
    pub seed: u64,
    pub x_o: Vec<f64>,
    pub rounds: Vec<RoundRecord>,
}

impl RunHistory {
    pub fn final_round(&self) -> Option<&RoundRecord> {
        self.rounds.iter().rev().find(|r| r.kind == RoundKind::Final)
    }

    pub fn final_region(&self) -> Option<&Region> {
        self.final_round().map(|r| &r.region)
    }
}

#[derive(Debug)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join(CONFIG_FILE)
    }

    pub fn store(&self) -> PathBuf {
        self.root.join("store")
    }

    pub fn rounds(&self) -> PathBuf {
        self.root.join(ROUNDS_FILE)
    }

    pub fn estimators(&self, round: u32) -> PathBuf {
        self.root.join("estimators").join(format!("round_{round}"))
    }

    pub fn traces(&self) -> PathBuf {
        self.root.join("traces")
    }

    pub fn posterior(&self) -> PathBuf {
        self.root.join("posterior")
    }

    pub fn diagnostics(&self) -> PathBuf {
        self.root.join("diagnostics")
    }

    pub fn write_history(&self, h: &RunHistory) -> Result<()> {
        write_atomic(&self.rounds(), serde_json::to_string_pretty(h)?.as_bytes())
    }

    pub fn read_history(&self) -> Result<RunHistory> {
        let p = self.rounds();
        serde_json::from_str(&fs::read_to_string(&p)?).map_err(|e| Error::format(&p, e.to_string()))
    }

    pub fn save_estimators(&self, round: u32, ests: &[MarginalRatioEstimator]) -> Result<()> {
        let dir = self.estimators(round);
        fs::create_dir_all(&dir)?;
        fs::create_dir_all(self.traces())?;
        for e in ests {
            let label = e.index.label();
            e.save(&dir, &label)?;
            let mut csv = String::from("epoch,train_loss,val_loss,lr\n");
            for r in &e.trace {
                csv.push_str(&format!("{},{},{},{}\n", r.epoch, r.train_loss, r.val_loss, r.lr));
            }
            fs::write(self.traces().join(format!("round_{round}_{label}.csv")), csv)?;
        }
        Ok(())
    }

    /// Loads every head saved for `round`, ordered 1-d first then by index.
    pub fn load_estimators(&self, round: u32) -> Result<Vec<MarginalRatioEstimator>> {
        let dir = self.estimators(round);
        let mut stems: Vec<String> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_suffix(".json").map(str::to_string)
            })
            .collect();
        stems.sort();
        let mut ests = stems
            .iter()
            .map(|s| MarginalRatioEstimator::load(&dir, s))
            .collect::<Result<Vec<_>>>()?;
        ests.sort_by(|a, b| (a.index.len(), a.index.dims()).cmp(&(b.index.len(), b.index.dims())));
        Ok(ests)
    }
}

/// Writes through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let a = RunLock::acquire(dir.path()).unwrap();
        assert!(matches!(RunLock::acquire(dir.path()), Err(Error::Locked(_))));
        drop(a);
        RunLock::acquire(dir.path()).unwrap();
    }

    #[test]
    fn stale_lock_is_taken_over() {
        let dir = tempfile::tempdir().unwrap();
        // Pid numbers are bounded well below this on Linux.
        fs::write(dir.path().join(LOCK_FILE), "4000000000").unwrap();
        if Path::new("/proc").exists() {
            RunLock::acquire(dir.path()).unwrap();
        }
    }
}
