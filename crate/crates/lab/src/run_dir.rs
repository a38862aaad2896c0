//! Per-run output directories and their provenance sidecar.

use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::formats::write_json;
use crate::LabError;

pub const META_FILE: &str = "run_meta.json";

/// Contents of `run_meta.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub command: String,
    pub rng_seed: u64,
    pub config_sha256: String,
    pub versions: Versions,
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub mwc_lab: String,
    pub mwc_core: String,
    pub format: u32,
}

impl Versions {
    pub fn current() -> Self {
        Versions {
            mwc_lab: env!("CARGO_PKG_VERSION").to_string(),
            mwc_core: mwc_core::VERSION.to_string(),
            format: 1,
        }
    }
}

/// Creates `<out>/<command>-<seed>-NNN` with the first free `NNN`. Existing
/// directories are never reused.
pub fn create_run_dir(out: &Path, command: &str, seed: u64) -> Result<PathBuf, LabError> {
    std::fs::create_dir_all(out).map_err(|source| LabError::Io {
        context: format!("cannot create output directory {}", out.display()),
        source,
    })?;
    for index in 0..100_000u32 {
        let dir = out.join(format!("{command}-{seed}-{index:03}"));
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => continue,
            Err(source) => {
                return Err(LabError::Io {
                    context: format!("cannot create run directory {}", dir.display()),
                    source,
                })
            }
        }
    }
    Err(LabError::Input(format!(
        "no free run directory left under {}",
        out.display()
    )))
}

/// Creates the run directory and writes its sidecar.
pub fn start_run(config: &ExperimentConfig, command: &str) -> Result<PathBuf, LabError> {
    let dir = create_run_dir(&config.output_dir, command, config.rng_seed)?;
    let meta = RunMeta {
        command: command.to_string(),
        rng_seed: config.rng_seed,
        config_sha256: config.hash(),
        versions: Versions::current(),
        config: config.clone(),
    };
    write_json(&dir.join(META_FILE), &meta)?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_dirs_are_never_reused() {
        let tmp = tempfile::tempdir().unwrap();
        let a = create_run_dir(tmp.path(), "bench", 7).unwrap();
        let b = create_run_dir(tmp.path(), "bench", 7).unwrap();
        assert!(a.ends_with("bench-7-000"));
        assert!(b.ends_with("bench-7-001"));
    }

    #[test]
    fn sidecar_carries_the_config_hash() {
        let tmp = tempfile::tempdir().unwrap();
        let config = ExperimentConfig {
            output_dir: tmp.path().to_path_buf(),
            ..ExperimentConfig::default()
        };
        let dir = start_run(&config, "simulate").unwrap();
        let meta: RunMeta = serde_json::from_str(&std::fs::read_to_string(dir.join(META_FILE)).unwrap()).unwrap();
        assert_eq!(meta.config_sha256, config.hash());
        assert_eq!(meta.config, config);
        assert_eq!(meta.rng_seed, 42);
    }
}
