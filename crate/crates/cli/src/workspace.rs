//! Workdir lock, artifact manifest, and input checks.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use latentir_core::workdir::Workdir;
use latentir_core::Digest;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Held for the duration of one command; removed on drop.
#[derive(Debug)]
pub struct Lock {
    path: PathBuf,
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn pid_alive(pid: u32) -> bool {
    if cfg!(target_os = "linux") {
        Path::new(&format!("/proc/{pid}")).exists()
    } else {
        true
    }
}

/// Takes the workdir lock. A lock left by a process that no longer exists
/// is reclaimed.
pub fn acquire(wd: &Workdir) -> Result<Lock, CliError> {
    let path = wd.lock();
    for _ in 0..2 {
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                write!(f, "{}", std::process::id()).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
                return Ok(Lock { path });
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                let holder = fs::read_to_string(&path).unwrap_or_default();
                match holder.trim().parse::<u32>() {
                    Ok(pid) if !pid_alive(pid) => {
                        eprintln!("warn  removing stale lock of exited process {pid}");
                        let _ = fs::remove_file(&path);
                    }
                    _ => {
                        return Err(CliError::usage(format!(
                            "workdir {} is locked by process {} ({}); wait for it or remove the lock file",
                            wd.root().display(),
                            holder.trim(),
                            path.display()
                        )))
                    }
                }
            }
            Err(e) => return Err(CliError::runtime(format!("{}: {e}", path.display()))),
        }
    }
    Err(CliError::usage(format!("could not take lock {}", path.display())))
}

/// Fails with exit code 2 naming the command that produces `path`.
pub fn require(path: &Path, producer: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::usage(format!("missing {}; run `latentir {producer}` first", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub command: String,
    pub config_digest: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Artifact file name → provenance. Holds no timestamps, so identical
/// reruns leave it byte-identical.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifacts: BTreeMap<String, ManifestEntry>,
}

impl Manifest {
    pub fn read(wd: &Workdir) -> Result<Self, CliError> {
        match fs::read(wd.manifest()) {
            Ok(b) => serde_json::from_slice(&b).map_err(|e| CliError::usage(format!("{}: {e}", wd.manifest().display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Manifest::default()),
            Err(e) => Err(CliError::runtime(format!("{}: {e}", wd.manifest().display()))),
        }
    }

    /// Hashes `outputs` and records them under `command`.
    pub fn record(wd: &Workdir, command: &str, digest: Digest, outputs: &[PathBuf]) -> Result<(), CliError> {
        let mut m = Self::read(wd)?;
        for p in outputs {
            let bytes = fs::read(p).map_err(|e| CliError::runtime(format!("{}: {e}", p.display())))?;
            let name = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
            m.artifacts.insert(
                name,
                ManifestEntry {
                    command: command.to_string(),
                    config_digest: digest.to_hex(),
                    sha256: Digest::of(&bytes).to_hex(),
                    bytes: bytes.len() as u64,
                },
            );
        }
        let json = serde_json::to_string_pretty(&m).expect("manifest serializes") + "\n";
        fs::write(wd.manifest(), json).map_err(|e| CliError::runtime(format!("{}: {e}", wd.manifest().display())))
    }
}
