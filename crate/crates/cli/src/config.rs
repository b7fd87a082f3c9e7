use std::path::{Path, PathBuf};

use raingap::hurdle::HurdleConfig;
use raingap::learners::grid::{desk_grids, full_grids, GridSet};
use raingap::{Error, Result};
use serde::{Deserialize, Serialize};

pub const THREADS_ENV: &str = "RAINGAP_THREADS";

/// Caps the global worker pool; `--threads` wins over the environment.
pub fn init_threads(flag: Option<usize>) -> Result<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(v.trim().parse().map_err(|_| Error::Config(format!("{THREADS_ENV}=`{v}` is not a count")))?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::Config("thread count must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

/// Contents of a `--config` file. Command-line flags override these keys.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FileConfig {
    #[serde(flatten)]
    pub hurdle: HurdleConfig,
    pub grid: Option<String>,
    pub tune_seed: Option<u64>,
}

pub fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)
            .map_err(|e| Error::Config(format!("{}: {e}", p.display()))),
    }
}

/// `full`, `desk`, or a path to a grid JSON document.
pub fn load_grid(name: &str) -> Result<GridSet> {
    let grid = match name {
        "full" => full_grids(),
        "desk" => desk_grids(),
        path => {
            let p = PathBuf::from(path);
            serde_json::from_str(&std::fs::read_to_string(&p)?)
                .map_err(|e| Error::Config(format!("grid {}: {e}", p.display())))?
        }
    };
    grid.validate()?;
    Ok(grid)
}

pub fn parse_on_off(v: &str) -> Result<bool> {
    match v {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        other => Err(Error::Config(format!("expected on|off, got `{other}`"))),
    }
}
