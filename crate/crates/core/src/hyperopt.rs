//! Hyperparameter tuning: Gaussian-process marginal likelihood, cross-validation MSE,
//! their analytic gradients, and an adaptive-step gradient descent driver.
//!
//! All tunable quantities are squared raw values, so every coordinate is
//! unconstrained. The noise coordinate `theta_n` gives `sigma_n = theta_n^2`, and the
//! network's regularization scale is tied to it (`gamma = sigma_n`).

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{build_cross, build_gram, weighted_param_gradient, KernelConfig, MpkParams, PkParams};
use crate::linalg::SpdFactor;
use crate::regnet::{fit, FittedNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Pk,
    Mpk,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Pk => "pk",
            KernelKind::Mpk => "mpk",
        }
    }
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pk" => Ok(KernelKind::Pk),
            "mpk" => Ok(KernelKind::Mpk),
            other => Err(Error::InvalidConfig(format!("unknown kernel kind `{other}`"))),
        }
    }
}

/// Shape of a packed hyperparameter vector.
///
/// Packing order: MPK raw offsets (`r`), MPK raw increments row-major (`r x d`), then
/// the raw noise. PK contributes only the noise coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HyperLayout {
    pub kind: KernelKind,
    pub degree: u32,
    pub dim: usize,
}

impl HyperLayout {
    pub fn kernel_len(&self) -> usize {
        match self.kind {
            KernelKind::Pk => 0,
            KernelKind::Mpk => self.degree as usize * (1 + self.dim),
        }
    }

    pub fn len(&self) -> usize {
        self.kernel_len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn noise_index(&self) -> usize {
        self.kernel_len()
    }
}

/// Packed raw hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParamVector {
    layout: HyperLayout,
    values: Vec<f64>,
}

impl HyperParamVector {
    pub fn new(layout: HyperLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::DimensionMismatch {
                expected: layout.len(),
                found: values.len(),
            });
        }
        if layout.degree == 0 || layout.dim == 0 {
            return Err(Error::InvalidConfig("degree and dimension must be >= 1".into()));
        }
        Ok(HyperParamVector { layout, values })
    }

    /// Packs a kernel and a raw noise value.
    pub fn from_kernel(kernel: &KernelConfig, dim: usize, raw_noise: f64) -> Result<Self> {
        let (kind, mut values) = match kernel {
            KernelConfig::Pk(_) => (KernelKind::Pk, Vec::new()),
            KernelConfig::Mpk(p) => {
                if p.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: p.dim(),
                    });
                }
                (KernelKind::Mpk, p.to_flat())
            }
        };
        values.push(raw_noise);
        HyperParamVector::new(
            HyperLayout {
                kind,
                degree: kernel.degree(),
                dim,
            },
            values,
        )
    }

    /// Default starting point: every derived kernel parameter equal to `1/(r d)` and
    /// `sigma_n^2 = 0.1 var(y)`.
    pub fn initial(layout: HyperLayout, data: &Dataset) -> Result<Self> {
        let y = data.model_outputs();
        if y.is_empty() {
            return Err(Error::Empty);
        }
        let mean = y.mean();
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64;
        let noise_var = if var > 0.0 { 0.1 * var } else { 1e-2 };
        let kernel = match layout.kind {
            KernelKind::Pk => KernelConfig::Pk(PkParams::new(layout.degree)?),
            KernelKind::Mpk => {
                let v = 1.0 / (layout.degree as f64 * layout.dim as f64);
                KernelConfig::Mpk(MpkParams::uniform(layout.degree, layout.dim, v)?)
            }
        };
        HyperParamVector::from_kernel(&kernel, layout.dim, noise_var.powf(0.25))
    }

    pub fn layout(&self) -> HyperLayout {
        self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        HyperParamVector::new(self.layout, values)
    }

    pub fn kernel(&self) -> KernelConfig {
        match self.layout.kind {
            KernelKind::Pk => KernelConfig::Pk(PkParams {
                degree: self.layout.degree,
            }),
            KernelKind::Mpk => KernelConfig::Mpk(
                MpkParams::from_flat(self.layout.degree, self.layout.dim, &self.values[..self.layout.kernel_len()])
                    .expect("layout validated"),
            ),
        }
    }

    pub fn raw_noise(&self) -> f64 {
        self.values[self.layout.noise_index()]
    }

    /// `sigma_n = theta_n^2`, also used as the regularization scale `gamma`.
    /// `sigma_n`, in the units of the model outputs (see [`Dataset::model_outputs`]).
    pub fn noise_std(&self) -> f64 {
        self.raw_noise().powi(2)
    }

    /// Fits the network these hyperparameters describe.
    pub fn fit(&self, data: &Dataset) -> Result<FittedNetwork> {
        fit(data, &self.kernel(), self.noise_std())
    }
}

fn check_layout(hp: &HyperParamVector, data: &Dataset) -> Result<()> {
    if hp.layout.dim != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: hp.layout.dim,
            found: data.dim(),
        });
    }
    if data.is_empty() {
        return Err(Error::Empty);
    }
    Ok(())
}

struct MarginalParts {
    value: f64,
    factor: SpdFactor,
    alpha: DVector<f64>,
    inputs: DMatrix<f64>,
}

fn marginal_parts(hp: &HyperParamVector, data: &Dataset) -> Result<MarginalParts> {
    check_layout(hp, data)?;
    let x = data.model_inputs();
    let kernel = hp.kernel();
    let k = build_gram(&x, &kernel)?;
    let noise_var = hp.noise_std().powi(2);
    let factor = SpdFactor::new(&k, noise_var)?;
    let y = data.model_outputs();
    let alpha = factor.solve(&y);
    let t = y.len() as f64;
    let value = 0.5 * y.dot(&alpha) + 0.5 * factor.log_det() + 0.5 * t * (2.0 * std::f64::consts::PI).ln();
    Ok(MarginalParts {
        value,
        factor,
        alpha,
        inputs: x,
    })
}

/// Negative log marginal likelihood
/// `0.5 y' K_y^{-1} y + 0.5 log det K_y + (T/2) log 2 pi`, `K_y = K + sigma_n^2 I`.
pub fn nll(hp: &HyperParamVector, data: &Dataset) -> Result<f64> {
    marginal_parts(hp, data).map(|p| p.value)
}

/// [`nll`] and its gradient with respect to the packed raw parameters, sharing one
/// factorization.
pub fn nll_with_gradient(hp: &HyperParamVector, data: &Dataset) -> Result<(f64, Vec<f64>)> {
    let parts = marginal_parts(hp, data)?;
    // d nll / d theta = 0.5 trace((K_y^{-1} - alpha alpha') dK_y/dtheta)
    let mut w = parts.factor.inverse();
    w.ger(-1.0, &parts.alpha, &parts.alpha, 1.0);
    let mut grad = weighted_param_gradient(&parts.inputs, &parts.inputs, &w, &hp.kernel())?;
    grad.iter_mut().for_each(|g| *g *= 0.5);
    // K_y = K + theta_n^4 I
    let theta = hp.raw_noise();
    grad.push(0.5 * w.trace() * 4.0 * theta.powi(3));
    Ok((parts.value, grad))
}

pub fn nll_gradient(hp: &HyperParamVector, data: &Dataset) -> Result<Vec<f64>> {
    nll_with_gradient(hp, data).map(|(_, g)| g)
}

/// One cross-validation partition, as row indices into a shared dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// `repeats` independent seeded permutations of `0..n`, each split into the first
/// `train_size` indices for training and the rest for validation.
pub fn make_folds(n: usize, train_size: usize, repeats: usize, seed: u64) -> Result<Vec<Fold>> {
    if train_size == 0 || train_size >= n {
        return Err(Error::InvalidConfig(format!(
            "fold train size {train_size} must be in 1..{n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..repeats)
        .map(|_| {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let validation = perm.split_off(train_size);
            Fold {
                train: perm,
                validation,
            }
        })
        .collect())
}

struct FoldParts {
    loss: f64,
    grad: Vec<f64>,
}

fn fold_parts(hp: &HyperParamVector, data: &Dataset, fold: &Fold, with_grad: bool) -> Result<FoldParts> {
    if fold.train.is_empty() || fold.validation.is_empty() {
        return Err(Error::Empty);
    }
    let x = data.model_inputs();
    let x_tr = x.select_rows(&fold.train);
    let x_va = x.select_rows(&fold.validation);
    let y = data.model_outputs();
    let y_tr = y.select_rows(&fold.train);
    let y_va = y.select_rows(&fold.validation);
    let kernel = hp.kernel();

    let k_tr = build_gram(&x_tr, &kernel)?;
    let gamma = hp.noise_std();
    let factor = SpdFactor::new(&k_tr, gamma * gamma)?;
    let alpha = factor.solve(&y_tr);
    let k_cross = build_cross(&x_va, &x_tr, &kernel)?;
    let resid = &k_cross * &alpha - &y_va;
    let n_va = y_va.len() as f64;
    let loss = resid.norm_squared() / n_va;
    if !with_grad {
        return Ok(FoldParts { loss, grad: Vec::new() });
    }

    // dz/dtheta = dK_cross alpha - K_cross K_y^{-1} dK_y alpha
    let beta = factor.solve(&(k_cross.transpose() * &resid));
    let scale = 2.0 / n_va;
    let w_cross = &resid * alpha.transpose();
    let w_train = &beta * alpha.transpose();
    let g_cross = weighted_param_gradient(&x_va, &x_tr, &w_cross, &kernel)?;
    let g_train = weighted_param_gradient(&x_tr, &x_tr, &w_train, &kernel)?;
    let mut grad: Vec<f64> = g_cross
        .iter()
        .zip(&g_train)
        .map(|(a, b)| scale * (a - b))
        .collect();
    let theta = hp.raw_noise();
    grad.push(-scale * beta.dot(&alpha) * 4.0 * theta.powi(3));
    Ok(FoldParts { loss, grad })
}

fn check_folds(data: &Dataset, folds: &[Fold]) -> Result<()> {
    if folds.is_empty() {
        return Err(Error::InvalidConfig("no folds".into()));
    }
    for (index, fold) in folds.iter().enumerate() {
        if let Some(&bad) = fold.train.iter().chain(&fold.validation).find(|&&i| i >= data.len()) {
            return Err(Error::Fold {
                index,
                source: Box::new(Error::InvalidConfig(format!(
                    "row {bad} out of range for {} samples",
                    data.len()
                ))),
            });
        }
    }
    Ok(())
}

/// Sum over folds of the validation MSE of a network trained on the fold's train rows.
pub fn cv_loss(hp: &HyperParamVector, data: &Dataset, folds: &[Fold]) -> Result<f64> {
    check_layout(hp, data)?;
    check_folds(data, folds)?;
    let mut total = 0.0;
    for (index, fold) in folds.iter().enumerate() {
        total += fold_parts(hp, data, fold, false)
            .map_err(|e| Error::Fold {
                index,
                source: Box::new(e),
            })?
            .loss;
    }
    Ok(total)
}

pub fn cv_with_gradient(hp: &HyperParamVector, data: &Dataset, folds: &[Fold]) -> Result<(f64, Vec<f64>)> {
    check_layout(hp, data)?;
    check_folds(data, folds)?;
    let mut total = 0.0;
    let mut grad = vec![0.0; hp.layout.len()];
    for (index, fold) in folds.iter().enumerate() {
        let parts = fold_parts(hp, data, fold, true).map_err(|e| Error::Fold {
            index,
            source: Box::new(e),
        })?;
        total += parts.loss;
        for (g, p) in grad.iter_mut().zip(&parts.grad) {
            *g += p;
        }
    }
    Ok((total, grad))
}

pub fn cv_gradient(hp: &HyperParamVector, data: &Dataset, folds: &[Fold]) -> Result<Vec<f64>> {
    cv_with_gradient(hp, data, folds).map(|(_, g)| g)
}

/// A differentiable scalar function of a flat parameter vector.
pub trait Objective {
    fn value(&self, x: &[f64]) -> Result<f64>;
    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// Marginal-likelihood objective over a fixed dataset.
pub struct MarginalLikelihood<'a> {
    pub template: &'a HyperParamVector,
    pub data: &'a Dataset,
}

impl Objective for MarginalLikelihood<'_> {
    fn value(&self, x: &[f64]) -> Result<f64> {
        nll(&self.template.with_values(x.to_vec())?, self.data)
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        nll_with_gradient(&self.template.with_values(x.to_vec())?, self.data)
    }
}

/// Cross-validation objective over a fixed dataset and fold set.
pub struct CrossValidation<'a> {
    pub template: &'a HyperParamVector,
    pub data: &'a Dataset,
    pub folds: &'a [Fold],
}

impl Objective for CrossValidation<'_> {
    fn value(&self, x: &[f64]) -> Result<f64> {
        cv_loss(&self.template.with_values(x.to_vec())?, self.data, self.folds)
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        cv_with_gradient(&self.template.with_values(x.to_vec())?, self.data, self.folds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    pub tol: f64,
    pub initial_step: f64,
    /// Coordinates held at their initial value.
    pub frozen: Vec<usize>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iters: 5000,
            tol: 1e-6,
            initial_step: 1e-2,
            frozen: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Relative loss change on an accepted step fell below the tolerance.
    Converged,
    /// The gradient vanished or the step can no longer move the iterate.
    Stationary,
    MaxIters,
    /// An objective evaluation failed; the last accepted iterate is returned.
    Aborted(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerReport {
    pub iterations: usize,
    pub final_loss: f64,
    /// Loss at the initial point and after every accepted step.
    pub loss_trace: Vec<f64>,
    pub final_step_size: f64,
    pub converged: bool,
    pub termination: Termination,
}

/// Gradient descent with multiplicative step adaptation: a candidate that increases
/// the loss is rejected and the step halved, otherwise it is accepted and the step
/// grows by 1.2.
pub fn optimize<O: Objective + ?Sized>(
    objective: &O,
    init: &[f64],
    config: &OptimizerConfig,
) -> Result<(Vec<f64>, OptimizerReport)> {
    if !(config.initial_step > 0.0) || !(config.tol >= 0.0) {
        return Err(Error::InvalidConfig("step and tolerance must be positive".into()));
    }
    if let Some(&bad) = config.frozen.iter().find(|&&i| i >= init.len()) {
        return Err(Error::InvalidConfig(format!("frozen index {bad} out of range")));
    }
    let mask = |g: &mut Vec<f64>| {
        for &i in &config.frozen {
            g[i] = 0.0;
        }
    };

    let mut x = init.to_vec();
    let (mut loss, mut grad) = objective.value_and_gradient(&x)?;
    if !loss.is_finite() {
        return Err(Error::InvalidConfig(format!("initial loss is {loss}")));
    }
    mask(&mut grad);
    let mut trace = vec![loss];
    let mut step = config.initial_step;
    let mut iterations = 0;
    let mut termination = Termination::MaxIters;

    if grad.iter().all(|&g| g == 0.0) {
        termination = Termination::Stationary;
    } else {
        while iterations < config.max_iters {
            iterations += 1;
            let candidate: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| xi - step * gi).collect();
            if candidate == x {
                termination = Termination::Stationary;
                break;
            }
            let (cand_loss, cand_grad) = match objective.value_and_gradient(&candidate) {
                Ok(v) => v,
                Err(e) => {
                    termination = Termination::Aborted(e.to_string());
                    break;
                }
            };
            if !cand_loss.is_finite() || cand_loss > loss {
                step *= 0.5;
                continue;
            }
            let rel = (loss - cand_loss).abs() / loss.abs().max(f64::MIN_POSITIVE);
            x = candidate;
            loss = cand_loss;
            grad = cand_grad;
            mask(&mut grad);
            trace.push(loss);
            step *= 1.2;
            if rel < config.tol {
                termination = Termination::Converged;
                break;
            }
            if grad.iter().all(|&g| g == 0.0) {
                termination = Termination::Stationary;
                break;
            }
        }
    }

    let converged = matches!(termination, Termination::Converged | Termination::Stationary);
    Ok((
        x,
        OptimizerReport {
            iterations,
            final_loss: loss,
            loss_trace: trace,
            final_step_size: step,
            converged,
            termination,
        },
    ))
}

/// Tunes `init` by maximizing the marginal likelihood of `data`.
pub fn tune_ml(
    init: &HyperParamVector,
    data: &Dataset,
    config: &OptimizerConfig,
) -> Result<(HyperParamVector, OptimizerReport)> {
    let objective = MarginalLikelihood { template: init, data };
    let (x, report) = optimize(&objective, init.values(), config)?;
    Ok((init.with_values(x)?, report))
}

/// Tunes `init` by minimizing the summed validation MSE over `folds`.
pub fn tune_cv(
    init: &HyperParamVector,
    data: &Dataset,
    folds: &[Fold],
    config: &OptimizerConfig,
) -> Result<(HyperParamVector, OptimizerReport)> {
    let objective = CrossValidation {
        template: init,
        data,
        folds,
    };
    let (x, report) = optimize(&objective, init.values(), config)?;
    Ok((init.with_values(x)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic;

    impl Objective for Quadratic {
        fn value(&self, x: &[f64]) -> Result<f64> {
            Ok(self.value_and_gradient(x)?.0)
        }

        fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
            // f = 2 (x0 - 1)^2 + (x0 - 1)(x1 + 2) + (x1 + 2)^2 + 3
            let a = x[0] - 1.0;
            let b = x[1] + 2.0;
            Ok((
                2.0 * a * a + a * b + b * b + 3.0,
                vec![4.0 * a + b, a + 2.0 * b],
            ))
        }
    }

    #[test]
    fn quadratic_minimum() {
        let config = OptimizerConfig {
            tol: 1e-16,
            ..OptimizerConfig::default()
        };
        let (x, report) = optimize(&Quadratic, &[5.0, 5.0], &config).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] + 2.0).abs() < 1e-6, "{x:?}");
        assert!(report.converged);
        assert!(report.loss_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn stationary_start() {
        let (x, report) = optimize(&Quadratic, &[1.0, -2.0], &OptimizerConfig::default()).unwrap();
        assert_eq!(x, vec![1.0, -2.0]);
        assert!(report.converged);
        assert_eq!(report.iterations, 0);
    }

    #[test]
    fn frozen_coordinates_stay() {
        let config = OptimizerConfig {
            frozen: vec![1],
            tol: 1e-14,
            ..OptimizerConfig::default()
        };
        let (x, _) = optimize(&Quadratic, &[5.0, 0.0], &config).unwrap();
        assert_eq!(x[1], 0.0);
        // argmin over x0 of 2a^2 + 2a: a = -1/2
        assert!((x[0] - 0.5).abs() < 1e-5);
    }

    #[test]
    fn folds_partition_rows() {
        let folds = make_folds(200, 100, 5, 3).unwrap();
        assert_eq!(folds.len(), 5);
        for f in &folds {
            assert_eq!(f.train.len(), 100);
            assert_eq!(f.validation.len(), 100);
            let mut all: Vec<usize> = f.train.iter().chain(&f.validation).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..200).collect::<Vec<_>>());
        }
        assert_ne!(folds[0], folds[1]);
        assert_eq!(folds, make_folds(200, 100, 5, 3).unwrap());
        assert!(make_folds(10, 10, 1, 0).is_err());
    }

    #[test]
    fn layout_packing() {
        let layout = HyperLayout {
            kind: KernelKind::Mpk,
            degree: 3,
            dim: 2,
        };
        assert_eq!(layout.len(), 10);
        let values: Vec<f64> = (0..10).map(f64::from).collect();
        let hp = HyperParamVector::new(layout, values.clone()).unwrap();
        let again = HyperParamVector::from_kernel(&hp.kernel(), 2, hp.raw_noise()).unwrap();
        assert_eq!(again.values(), &values[..]);
        assert_eq!(hp.noise_std(), 81.0);
    }
}
