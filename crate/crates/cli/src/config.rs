//! Resolved per-subcommand configuration. Precedence: built-in defaults, then the
//! `--config` JSON document, then command-line flags.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use mpk::experiments::silverbox::FoldSpec;
use mpk::experiments::Tuning;
use mpk::{KernelConfig, KernelKind, OptimizerConfig, PkParams};

use crate::{Failure, PredictMode};

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Failure> {
    match path {
        None => Ok(T::default()),
        Some(p) => read_json(p),
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpandConfig {
    pub kernel: KernelConfig,
    pub memory: usize,
}

impl Default for ExpandConfig {
    fn default() -> Self {
        ExpandConfig {
            kernel: KernelConfig::Pk(PkParams { degree: 3 }),
            memory: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub data: Option<PathBuf>,
    pub kernel: KernelKind,
    pub degree: u32,
    pub memory: usize,
    pub output_lags: Option<usize>,
    pub u_column: usize,
    pub y_column: usize,
    pub tuning: Tuning,
    /// Starting kernel; the default initialization is used when absent.
    pub init: Option<KernelConfig>,
    /// Starting noise std in output units.
    pub noise_std: Option<f64>,
    pub train_size: Option<usize>,
    pub folds: FoldSpec,
    pub normalize: bool,
    pub optimizer: OptimizerConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            data: None,
            kernel: KernelKind::Mpk,
            degree: 3,
            memory: 5,
            output_lags: None,
            u_column: 0,
            y_column: 1,
            tuning: Tuning::Ml,
            init: None,
            noise_std: None,
            train_size: None,
            folds: FoldSpec::default(),
            normalize: true,
            optimizer: OptimizerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictConfig {
    pub model: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub mode: PredictMode,
    pub u_column: usize,
    pub y_column: usize,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig {
            model: None,
            data: None,
            mode: PredictMode::Onestep,
            u_column: 0,
            y_column: 1,
        }
    }
}
