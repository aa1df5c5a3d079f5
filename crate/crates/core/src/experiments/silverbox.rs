//! NARX identification of a measured input/output record: train a one-step predictor
//! on a short leading segment, then score one-step prediction and free-run
//! simulation on a separate test record.
//!
//! Data comes as a directory with `train.csv` and `test.csv`, each holding the input
//! and output columns named in [`NarxConfig`].

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::{parse_columns, Dataset, Signals};
use crate::error::{Error, Result};
use crate::hyperopt::{
    make_folds, tune_cv, tune_ml, HyperLayout, HyperParamVector, KernelKind, OptimizerConfig, OptimizerReport,
};
use crate::metrics::{fit_percent, rmse};

use super::narx::{build_narx, free_run_simulate, NarxLags, NarxModel};

/// Seeded random train/validation partitions of the training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FoldSpec {
    pub repeats: usize,
    pub train: usize,
    pub seed: u64,
}

impl Default for FoldSpec {
    fn default() -> Self {
        FoldSpec {
            repeats: 5,
            train: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NarxConfig {
    /// Lags of the input; also of the output unless `output_lags` is set.
    pub memory: usize,
    pub output_lags: Option<usize>,
    /// Leading regression rows of the training record used for identification.
    pub train_size: usize,
    pub folds: FoldSpec,
    pub u_column: usize,
    pub y_column: usize,
}

impl Default for NarxConfig {
    fn default() -> Self {
        NarxConfig {
            memory: 5,
            output_lags: None,
            train_size: 200,
            folds: FoldSpec::default(),
            u_column: 0,
            y_column: 1,
        }
    }
}

impl NarxConfig {
    pub fn lags(&self) -> NarxLags {
        NarxLags {
            input_lags: self.memory,
            output_lags: self.output_lags.unwrap_or(self.memory),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.memory < 1 {
            return Err(Error::InvalidConfig("memory must be >= 1".into()));
        }
        if self.train_size <= 2 * self.memory {
            return Err(Error::InvalidConfig(format!(
                "train_size {} must exceed twice the memory",
                self.train_size
            )));
        }
        Ok(())
    }
}

/// How hyperparameters are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tuning {
    #[serde(rename = "ml")]
    Ml,
    #[serde(rename = "cv")]
    Cv,
    /// Cross-validation started from the marginal-likelihood solution.
    #[serde(rename = "ml+cv")]
    MlCv,
    /// Keep the initial hyperparameters.
    #[serde(rename = "fixed")]
    Fixed,
}

impl std::str::FromStr for Tuning {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ml" => Ok(Tuning::Ml),
            "cv" => Ok(Tuning::Cv),
            "ml+cv" => Ok(Tuning::MlCv),
            "fixed" => Ok(Tuning::Fixed),
            other => Err(Error::InvalidConfig(format!(
                "unknown tuning `{other}` (expected ml, cv, ml+cv or fixed)"
            ))),
        }
    }
}

/// Result of [`tune`]: the chosen point and the report of each optimizer stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningOutcome {
    pub params: HyperParamVector,
    pub ml: Option<OptimizerReport>,
    pub cv: Option<OptimizerReport>,
}

/// Runs the requested tuning from `init`.
pub fn tune(
    init: HyperParamVector,
    data: &Dataset,
    tuning: Tuning,
    folds: &FoldSpec,
    optimizer: &OptimizerConfig,
) -> Result<TuningOutcome> {
    let mut outcome = TuningOutcome {
        params: init,
        ml: None,
        cv: None,
    };
    if matches!(tuning, Tuning::Ml | Tuning::MlCv) {
        let (p, report) = tune_ml(&outcome.params, data, optimizer)?;
        outcome.params = p;
        outcome.ml = Some(report);
    }
    if matches!(tuning, Tuning::Cv | Tuning::MlCv) {
        let folds = make_folds(data.len(), folds.train, folds.repeats, folds.seed)?;
        let (p, report) = tune_cv(&outcome.params, data, &folds, optimizer)?;
        outcome.params = p;
        outcome.cv = Some(report);
    }
    Ok(outcome)
}

/// Training dataset: the first `train_size` regression rows, normalized when asked.
pub fn training_set(signals: &Signals, config: &NarxConfig, normalize: bool) -> Result<Dataset> {
    let all = build_narx(&signals.u, &signals.y, config.lags())?;
    if all.len() < config.train_size {
        return Err(Error::SignalTooShort {
            len: signals.u.len(),
            memory: config.train_size + config.lags().start(),
        });
    }
    let data = all.head(config.train_size);
    Ok(if normalize { data.normalized() } else { data })
}

/// Identifies a NARX model on the leading part of `signals`.
pub fn train_narx(
    signals: &Signals,
    config: &NarxConfig,
    kind: KernelKind,
    degree: u32,
    tuning: Tuning,
    normalize: bool,
    optimizer: &OptimizerConfig,
) -> Result<(NarxModel, TuningOutcome)> {
    config.validate()?;
    let data = training_set(signals, config, normalize)?;
    let layout = HyperLayout {
        kind,
        degree,
        dim: config.lags().dim(),
    };
    let init = HyperParamVector::initial(layout, &data)?;
    let outcome = tune(init, &data, tuning, &config.folds, optimizer)?;
    let network = outcome.params.fit(&data)?;
    Ok((NarxModel::new(network, config.lags())?, outcome))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SilverboxConfig {
    pub narx: NarxConfig,
    pub kernels: Vec<KernelKind>,
    pub degree: u32,
    pub tuning: Tuning,
    pub normalize: bool,
    pub optimizer: OptimizerConfig,
}

impl Default for SilverboxConfig {
    fn default() -> Self {
        SilverboxConfig {
            narx: NarxConfig::default(),
            kernels: vec![KernelKind::Pk, KernelKind::Mpk],
            degree: 3,
            tuning: Tuning::MlCv,
            normalize: true,
            optimizer: OptimizerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SilverboxData {
    pub train: Signals,
    pub test: Signals,
}

impl SilverboxData {
    /// Reads `train.csv` and `test.csv` from `dir`.
    pub fn load(dir: &Path, config: &NarxConfig) -> Result<Self> {
        let read = |name: &str| -> Result<Signals> {
            let path = dir.join(name);
            let origin = path.display().to_string();
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(origin.clone(), e))?;
            parse_columns(&text, &origin, config.u_column, config.y_column)
        };
        Ok(SilverboxData {
            train: read("train.csv")?,
            test: read("test.csv")?,
        })
    }
}

/// Scores of one kernel. A diverged simulation scores `-inf` Fit% and `inf` RMSE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelScores {
    pub kernel: KernelKind,
    pub prediction_fit: f64,
    #[serde(with = "extended_float")]
    pub simulation_fit: f64,
    #[serde(with = "extended_float")]
    pub simulation_rmse: f64,
    pub diverged_at: Option<usize>,
    pub noise_std: f64,
    pub tuning: TuningOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilverboxReport {
    pub config: SilverboxConfig,
    pub train_rows: usize,
    pub test_rows: usize,
    pub scores: Vec<KernelScores>,
}

impl SilverboxReport {
    pub fn scores_for(&self, kernel: KernelKind) -> Option<&KernelScores> {
        self.scores.iter().find(|s| s.kernel == kernel)
    }
}

/// Scores a trained NARX model on a test record.
pub fn score(model: &NarxModel, test: &Signals) -> Result<(f64, f64, f64, Option<usize>)> {
    let start = model.lags.start();
    let one_step = model.one_step(&test.u, &test.y)?;
    let measured = &test.y[start..];
    let prediction_fit = fit_percent(measured, &one_step)?;
    let run = free_run_simulate(model, &test.u, &test.y[..start])?;
    let (simulation_fit, simulation_rmse) = match run.diverged_at {
        Some(_) => (f64::NEG_INFINITY, f64::INFINITY),
        None => (fit_percent(measured, &run.z[start..])?, rmse(measured, &run.z[start..])?),
    };
    Ok((prediction_fit, simulation_fit, simulation_rmse, run.diverged_at))
}

/// Trains and scores every configured kernel. Kernels run in parallel; scores keep
/// the configured order.
pub fn run_silverbox(data: &SilverboxData, config: &SilverboxConfig) -> Result<SilverboxReport> {
    config.narx.validate()?;
    if config.kernels.is_empty() {
        return Err(Error::InvalidConfig("no kernels to compare".into()));
    }
    let scores: Vec<Result<KernelScores>> = config
        .kernels
        .par_iter()
        .map(|&kind| {
            let (model, tuning) = train_narx(
                &data.train,
                &config.narx,
                kind,
                config.degree,
                config.tuning,
                config.normalize,
                &config.optimizer,
            )?;
            let (prediction_fit, simulation_fit, simulation_rmse, diverged_at) = score(&model, &data.test)?;
            let scale = model.network.normalization().map_or(1.0, |n| n.output_std);
            Ok(KernelScores {
                kernel: kind,
                prediction_fit,
                simulation_fit,
                simulation_rmse,
                diverged_at,
                noise_std: tuning.params.noise_std() * scale,
                tuning,
            })
        })
        .collect();
    Ok(SilverboxReport {
        config: config.clone(),
        train_rows: config.narx.train_size,
        test_rows: data.test.u.len().saturating_sub(config.narx.lags().start()),
        scores: scores.into_iter().collect::<Result<_>>()?,
    })
}

/// A cubic NARX surrogate of an electronic Duffing oscillator, for exercising the
/// pipeline without the measured benchmark:
///
/// `z_k = 1.5 z_{k-1} - 0.7 z_{k-2} + 0.1 u_{k-1} + 0.05 u_{k-2} - 0.3 z_{k-1}^3`,
/// observed with additive Gaussian noise.
pub fn surrogate_signals(len: usize, input_std: f64, noise_std: f64, seed: u64) -> Signals {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = Normal::new(0.0, input_std).expect("finite std");
    let noise = Normal::new(0.0, noise_std).expect("finite std");
    let u: Vec<f64> = (0..len).map(|_| input.sample(&mut rng)).collect();
    let mut z = vec![0.0; len];
    for k in 2..len {
        z[k] = 1.5 * z[k - 1] - 0.7 * z[k - 2] + 0.1 * u[k - 1] + 0.05 * u[k - 2] - 0.3 * z[k - 1].powi(3);
    }
    let y = z.iter().map(|v| v + noise.sample(&mut rng)).collect();
    Signals { u, y }
}

/// Surrogate training and test records drawn from independent inputs.
pub fn surrogate_data(seed: u64) -> SilverboxData {
    SilverboxData {
        train: surrogate_signals(1000, 1.0, 1e-3, seed),
        test: surrogate_signals(2000, 1.0, 1e-3, seed.wrapping_add(1)),
    }
}

/// Serializes non-finite floats as the strings `"inf"`, `"-inf"` and `"nan"`.
mod extended_float {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tuning_names() {
        assert_eq!("ml+cv".parse::<Tuning>().unwrap(), Tuning::MlCv);
        assert_eq!(serde_json::to_string(&Tuning::MlCv).unwrap(), "\"ml+cv\"");
        assert!("bogus".parse::<Tuning>().is_err());
    }

    #[test]
    fn narx_config_checks() {
        let c = NarxConfig {
            train_size: 10,
            ..NarxConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(NarxConfig::default().validate().is_ok());
        assert_eq!(NarxConfig::default().lags().dim(), 11);
    }

    #[test]
    fn surrogate_is_bounded_and_seeded() {
        let a = surrogate_signals(3000, 1.0, 0.0, 3);
        assert!(a.y.iter().all(|v| v.abs() < 10.0));
        assert_eq!(a, surrogate_signals(3000, 1.0, 0.0, 3));
        assert_ne!(a, surrogate_signals(3000, 1.0, 0.0, 4));
    }

    #[test]
    fn non_finite_scores_round_trip() {
        let s = KernelScores {
            kernel: KernelKind::Pk,
            prediction_fit: 90.0,
            simulation_fit: f64::NEG_INFINITY,
            simulation_rmse: f64::INFINITY,
            diverged_at: Some(7),
            noise_std: 0.1,
            tuning: TuningOutcome {
                params: HyperParamVector::new(
                    HyperLayout {
                        kind: KernelKind::Pk,
                        degree: 3,
                        dim: 2,
                    },
                    vec![0.5],
                )
                .unwrap(),
                ml: None,
                cv: None,
            },
        };
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"-inf\""));
        assert_eq!(serde_json::from_str::<KernelScores>(&text).unwrap(), s);
    }
}
