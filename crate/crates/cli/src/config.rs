//! Config-file loading, flag merging, and the resolved snapshot.
//!
//! Precedence: built-in defaults, then the config file, then flags. The
//! fully resolved result is what gets written into the run directory, so a
//! rerun from that snapshot reproduces the outputs byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vn_hgcn_core::{AssignmentMode, Error, Result, TrainConfig};

use crate::args::HyperFlags;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub learning_rate: Option<f64>,
    pub l2: Option<f64>,
    pub epochs: Option<usize>,
    pub dropout: Option<f64>,
    pub drop_edge: Option<f64>,
    pub layers: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub d_a: Option<usize>,
    pub n_virtual: Option<usize>,
    pub central_dim: Option<usize>,
    pub assignment: Option<AssignmentMode>,
    pub seed: Option<u64>,
    pub ratio: Option<f64>,
    // Snapshot provenance fields, accepted so a snapshot reloads as-is.
    pub command: Option<String>,
    pub dataset: Option<String>,
}

/// The resolved, reproducible run description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub dataset: String,
    pub ratio: f64,
    #[serde(flatten)]
    pub train: TrainConfig,
}

fn parse_assignment(s: &str) -> Result<AssignmentMode> {
    match s {
        "uniform-random" => Ok(AssignmentMode::UniformRandom),
        "round-robin" => Ok(AssignmentMode::RoundRobin),
        other => Err(Error::config(format!(
            "unknown assignment mode '{other}'; valid: uniform-random, round-robin"
        ))),
    }
}

/// Defaults <- config file <- flags.
pub fn resolve(command: &str, dataset: &Path, flags: &HyperFlags) -> Result<RunConfig> {
    let file = match &flags.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
            toml::from_str::<FileConfig>(&text)
                .map_err(|e| Error::config(format!("bad config {}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };

    let mut train = TrainConfig::default();
    macro_rules! merge {
        ($field:ident, $flag:expr) => {
            if let Some(v) = file.$field {
                train.$field = v;
            }
            if let Some(v) = $flag {
                train.$field = v;
            }
        };
    }
    merge!(l2, flags.l2);
    merge!(epochs, flags.epochs);
    merge!(dropout, flags.dropout);
    merge!(drop_edge, flags.drop_edge);
    merge!(layers, flags.layers);
    merge!(hidden_dim, flags.hidden_dim);
    merge!(d_a, flags.d_a);
    merge!(n_virtual, flags.n_virtual);
    merge!(central_dim, flags.central_dim);
    merge!(seed, flags.seed);
    if let Some(v) = file.learning_rate {
        train.learning_rate = v;
    }
    if let Some(v) = flags.lr {
        train.learning_rate = v;
    }
    if let Some(v) = file.assignment {
        train.assignment = v;
    }
    if let Some(s) = &flags.assignment {
        train.assignment = parse_assignment(s)?;
    }

    let mut ratio = 0.2;
    if let Some(v) = file.ratio {
        ratio = v;
    }
    if let Some(v) = flags.ratio {
        ratio = v;
    }

    let cfg = RunConfig {
        command: command.to_string(),
        dataset: dataset.display().to_string(),
        ratio,
        train,
    };
    cfg.train.validate()?;
    if !(0.0..1.0).contains(&cfg.ratio) || cfg.ratio == 0.0 {
        return Err(Error::config(format!(
            "--ratio must lie in (0, 1), got {}",
            cfg.ratio
        )));
    }
    Ok(cfg)
}

impl RunConfig {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::config(format!("config serialization: {e}")))
    }
}

/// Resolves a dataset argument to its manifest: either the manifest file
/// itself or a directory containing `dataset.toml`.
pub fn manifest_path(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.join("dataset.toml")
    } else {
        data.to_path_buf()
    }
}
