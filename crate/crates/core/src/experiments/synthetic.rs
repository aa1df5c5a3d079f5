//! Monte Carlo comparison of PK and MPK estimators on the memory-6 cubic benchmark.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::hyperopt::{tune_ml, HyperLayout, HyperParamVector, KernelKind, OptimizerConfig, Termination};
use crate::kernels::{KernelConfig, MpkParams};
use crate::metrics::{fit_percent, rmse};
use crate::regnet::predict;
use crate::volterra::{gaussian_stream, simulate_with, spl_output};

use super::summary::{summarize, KernelSummary};

pub const BENCH_MEMORY: usize = 6;

/// One Monte Carlo scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub id: String,
    pub train_mean: f64,
    pub test_mean: f64,
    pub train_std: f64,
    pub test_std: f64,
    pub noise_std: f64,
    /// Regression rows per signal, for both the training and the test record.
    pub samples: usize,
    pub runs: usize,
    pub kernels: Vec<KernelKind>,
    pub base_seed: u64,
    pub degree: u32,
    /// z-score regressors with training statistics.
    pub normalize: bool,
    /// Hold the noise coordinate at its initial value.
    pub fix_noise: bool,
    /// Starting point for the MPK instead of the default initialization.
    pub mpk_init: Option<MpkParams>,
    pub optimizer: OptimizerConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::experiment(1).expect("experiment 1 exists")
    }
}

impl ExperimentConfig {
    /// The four reference scenarios (100 runs of 1000 samples each).
    pub fn experiment(id: u32) -> Result<Self> {
        let (train_mean, test_mean, std) = match id {
            1 => (0.0, 0.0, 4.0),
            2 => (0.0, 0.0, 2.0),
            3 => (-12.0, 12.0, 4.0),
            4 => (-12.0, 12.0, 2.0),
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "experiment id must be 1..=4, got {id}"
                )))
            }
        };
        Ok(ExperimentConfig {
            id: id.to_string(),
            train_mean,
            test_mean,
            train_std: std,
            test_std: std,
            noise_std: 4.0,
            samples: 1000,
            runs: 100,
            kernels: vec![KernelKind::Pk, KernelKind::Mpk],
            base_seed: 0,
            degree: 3,
            normalize: true,
            fix_noise: false,
            mpk_init: None,
            optimizer: OptimizerConfig::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_std > 0.0 && self.test_std > 0.0) {
            return Err(Error::InvalidConfig("input stds must be > 0".into()));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::InvalidConfig("noise std must be >= 0".into()));
        }
        if self.runs == 0 || self.samples < 2 {
            return Err(Error::InvalidConfig("need runs >= 1 and samples >= 2".into()));
        }
        if self.kernels.is_empty() {
            return Err(Error::InvalidConfig("no kernels to compare".into()));
        }
        if let Some(p) = &self.mpk_init {
            if p.degree() != self.degree || p.dim() != BENCH_MEMORY + 1 {
                return Err(Error::InvalidConfig(format!(
                    "mpk_init must have r={} and d={}",
                    self.degree,
                    BENCH_MEMORY + 1
                )));
            }
        }
        Ok(())
    }

    pub fn run_seed(&self, run: usize) -> u64 {
        self.base_seed.wrapping_add(run as u64)
    }
}

/// Result of one kernel on one Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub kernel: KernelKind,
    pub train_fit: Option<f64>,
    pub test_fit: Option<f64>,
    pub test_rmse: Option<f64>,
    pub noise_std: Option<f64>,
    pub iterations: usize,
    pub final_loss: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub records: Vec<RunRecord>,
    pub summary: Vec<KernelSummary>,
}

impl ExperimentReport {
    pub fn summary_for(&self, kernel: KernelKind) -> Option<&KernelSummary> {
        self.summary.iter().find(|s| s.kernel == kernel)
    }
}

/// Training and test data shared by every kernel within one run.
#[derive(Debug, Clone)]
pub struct RunData {
    pub train: Dataset,
    pub train_noiseless: Vec<f64>,
    pub test: Dataset,
    pub test_noiseless: Vec<f64>,
}

/// Draws the data of one run. `samples + memory` inputs give `samples` full windows.
pub fn run_data(config: &ExperimentConfig, seed: u64) -> Result<RunData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (train_seed, test_seed, noise_seed) = (rng.next_u64(), rng.next_u64(), rng.next_u64());
    let len = config.samples + BENCH_MEMORY;
    let u_train: Vec<f64> = gaussian_stream(train_seed, config.train_mean, config.train_std)
        .take(len)
        .collect();
    let u_test: Vec<f64> = gaussian_stream(test_seed, config.test_mean, config.test_std)
        .take(len)
        .collect();
    let train = simulate_with(BENCH_MEMORY, &u_train, config.noise_std, noise_seed, spl_output)?;
    let test = simulate_with(BENCH_MEMORY, &u_test, 0.0, 0, spl_output)?;
    let train_set = if config.normalize {
        train.dataset.normalized()
    } else {
        train.dataset
    };
    Ok(RunData {
        train: train_set,
        train_noiseless: train.noiseless,
        test: test.dataset,
        test_noiseless: test.noiseless,
    })
}

fn initial_params(config: &ExperimentConfig, kind: KernelKind, data: &Dataset) -> Result<HyperParamVector> {
    let layout = HyperLayout {
        kind,
        degree: config.degree,
        dim: BENCH_MEMORY + 1,
    };
    let default = HyperParamVector::initial(layout, data)?;
    match (kind, &config.mpk_init) {
        (KernelKind::Mpk, Some(p)) => {
            HyperParamVector::from_kernel(&KernelConfig::Mpk(p.clone()), layout.dim, default.raw_noise())
        }
        _ => Ok(default),
    }
}

fn evaluate_kernel(config: &ExperimentConfig, data: &RunData, kind: KernelKind, run: usize, seed: u64) -> RunRecord {
    let mut record = RunRecord {
        run,
        seed,
        kernel: kind,
        train_fit: None,
        test_fit: None,
        test_rmse: None,
        noise_std: None,
        iterations: 0,
        final_loss: None,
        converged: false,
        error: None,
    };
    let outcome = (|| -> Result<()> {
        let init = initial_params(config, kind, &data.train)?;
        let mut opt = config.optimizer.clone();
        if config.fix_noise {
            opt.frozen.push(init.layout().noise_index());
        }
        let (tuned, report) = tune_ml(&init, &data.train, &opt)?;
        record.iterations = report.iterations;
        record.final_loss = Some(report.final_loss);
        record.converged = report.converged;
        if let Termination::Aborted(msg) = &report.termination {
            record.error = Some(format!("optimizer aborted: {msg}"));
        }
        let scale = data.train.normalization().map_or(1.0, |n| n.output_std);
        record.noise_std = Some(tuned.noise_std() * scale);
        let model = tuned.fit(&data.train)?;
        let train_hat = predict(&model, data.train.inputs())?;
        let test_hat = predict(&model, data.test.inputs())?;
        let test_hat: Vec<f64> = test_hat.iter().copied().collect();
        record.train_fit = Some(fit_percent(&data.train_noiseless, train_hat.as_slice())?);
        record.test_fit = Some(fit_percent(&data.test_noiseless, &test_hat)?);
        record.test_rmse = Some(rmse(&data.test_noiseless, &test_hat)?);
        Ok(())
    })();
    if let Err(e) = outcome {
        record.error = Some(e.to_string());
    }
    record
}

/// Runs one Monte Carlo replicate for every configured kernel.
pub fn run_single(config: &ExperimentConfig, run: usize) -> Vec<RunRecord> {
    let seed = config.run_seed(run);
    match run_data(config, seed) {
        Ok(data) => config
            .kernels
            .iter()
            .map(|&kind| evaluate_kernel(config, &data, kind, run, seed))
            .collect(),
        Err(e) => config
            .kernels
            .iter()
            .map(|&kind| RunRecord {
                run,
                seed,
                kernel: kind,
                train_fit: None,
                test_fit: None,
                test_rmse: None,
                noise_std: None,
                iterations: 0,
                final_loss: None,
                converged: false,
                error: Some(e.to_string()),
            })
            .collect(),
    }
}

/// Runs the whole Monte Carlo. Runs execute on the current rayon pool; records are
/// merged in run order so the report does not depend on scheduling.
pub fn run_synthetic(config: &ExperimentConfig) -> Result<ExperimentReport> {
    run_synthetic_with(config, |_| {})
}

/// As [`run_synthetic`], calling `on_run` with each replicate's records as soon as it
/// completes (in completion order).
pub fn run_synthetic_with<F>(config: &ExperimentConfig, on_run: F) -> Result<ExperimentReport>
where
    F: Fn(&[RunRecord]) + Sync,
{
    config.validate()?;
    let per_run: Vec<Vec<RunRecord>> = (0..config.runs)
        .into_par_iter()
        .map(|run| {
            let records = run_single(config, run);
            on_run(&records);
            records
        })
        .collect();
    let records: Vec<RunRecord> = per_run.into_iter().flatten().collect();
    let summary = summarize(&records, &config.kernels);
    Ok(ExperimentReport {
        config: config.clone(),
        records,
        summary,
    })
}
