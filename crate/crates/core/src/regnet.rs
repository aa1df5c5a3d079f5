//! Regularization network: kernel ridge regression through the representer theorem.
//!
//! `alpha = (K + gamma^2 I)^{-1} y` and `f(u) = sum_t alpha_t k(u, u_t)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Normalization};
use crate::error::{Error, Result};
use crate::kernels::{build_cross, build_gram, KernelConfig};
use crate::linalg::SpdFactor;
use crate::penalty::PenaltyTable;

/// A trained network. `training_inputs` are stored as the kernel sees them, i.e. after
/// normalization; new inputs are normalized with the same record before prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedNetwork {
    training_inputs: DMatrix<f64>,
    alpha: DVector<f64>,
    kernel: KernelConfig,
    gamma: f64,
    normalization: Option<Normalization>,
    log_det: f64,
}

/// JSON form of [`FittedNetwork`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkJson {
    pub kernel: KernelConfig,
    pub gamma: f64,
    pub normalization: Option<Normalization>,
    pub inputs: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
}

impl FittedNetwork {
    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }

    pub fn training_inputs(&self) -> &DMatrix<f64> {
        &self.training_inputs
    }

    /// Input dimension expected by [`predict`].
    pub fn dim(&self) -> usize {
        self.training_inputs.ncols()
    }

    /// `log det(K + gamma^2 I)` of the training factorization.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn to_json(&self) -> NetworkJson {
        NetworkJson {
            kernel: self.kernel.clone(),
            gamma: self.gamma,
            normalization: self.normalization.clone(),
            inputs: self
                .training_inputs
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            alpha: self.alpha.iter().copied().collect(),
        }
    }

    pub fn from_json(doc: NetworkJson) -> Result<Self> {
        let t = doc.inputs.len();
        if t == 0 {
            return Err(Error::Empty);
        }
        if doc.alpha.len() != t {
            return Err(Error::DimensionMismatch {
                expected: t,
                found: doc.alpha.len(),
            });
        }
        if !(doc.gamma > 0.0) {
            return Err(Error::InvalidConfig("gamma must be > 0".into()));
        }
        let d = doc.inputs[0].len();
        if let Some(r) = doc.inputs.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: r.len(),
            });
        }
        let inputs = DMatrix::from_fn(t, d, |i, j| doc.inputs[i][j]);
        // log det is not persisted; recompute it from the stored problem.
        let k = build_gram(&inputs, &doc.kernel)?;
        let log_det = SpdFactor::new(&k, doc.gamma * doc.gamma)?.log_det();
        Ok(FittedNetwork {
            training_inputs: inputs,
            alpha: DVector::from_vec(doc.alpha),
            kernel: doc.kernel,
            gamma: doc.gamma,
            normalization: doc.normalization,
            log_det,
        })
    }
}

/// Solves `(K + gamma^2 I) alpha = y` on the (normalized) training inputs.
pub fn fit(data: &Dataset, kernel: &KernelConfig, gamma: f64) -> Result<FittedNetwork> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidConfig(format!("gamma must be > 0, got {gamma}")));
    }
    if data.is_empty() {
        return Err(Error::Empty);
    }
    let x = data.model_inputs();
    let k = build_gram(&x, kernel)?;
    let factor = SpdFactor::new(&k, gamma * gamma)?;
    Ok(FittedNetwork {
        alpha: factor.solve(&data.model_outputs()),
        training_inputs: x,
        kernel: kernel.clone(),
        gamma,
        normalization: data.normalization().cloned(),
        log_det: factor.log_det(),
    })
}

/// `K_cross alpha` at the rows of `inputs` (raw, normalized internally).
pub fn predict(model: &FittedNetwork, inputs: &DMatrix<f64>) -> Result<DVector<f64>> {
    if inputs.ncols() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: inputs.ncols(),
        });
    }
    match &model.normalization {
        Some(n) => {
            let z = build_cross(&n.apply(inputs)?, &model.training_inputs, &model.kernel)? * &model.alpha;
            Ok(z.map(|v| n.unscale_output(v)))
        }
        None => Ok(build_cross(inputs, &model.training_inputs, &model.kernel)? * &model.alpha),
    }
}

/// Prediction for a single raw regressor.
pub fn predict_one(model: &FittedNetwork, row: &[f64]) -> Result<f64> {
    predict(model, &DMatrix::from_row_slice(1, row.len(), row)).map(|v| v[0])
}

/// Explicit design matrix: row `t` is `phi(x_t)` over the table's monomials.
pub fn design_matrix(inputs: &DMatrix<f64>, table: &PenaltyTable) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = inputs.row_iter().map(|r| r.iter().copied().collect()).collect();
    DMatrix::from_fn(inputs.nrows(), table.entries().len(), |t, q| {
        table.entries()[q].0.eval(&rows[t])
    })
}

/// Weighted ridge regression on the explicit features: minimizes
/// `|y - Phi c|^2 + gamma^2 sum_q c_q^2 / lambda_q`, with `c_q = 0` where `lambda_q = 0`.
///
/// Independent of the kernel route; solved via LU on the normal equations. Works in
/// model units: the features see normalized inputs and the target is scaled.
pub fn explicit_ridge_oracle(data: &Dataset, penalties: &PenaltyTable, gamma: f64) -> Result<Vec<f64>> {
    if data.dim() != penalties.dim() {
        return Err(Error::DimensionMismatch {
            expected: penalties.dim(),
            found: data.dim(),
        });
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidConfig(format!("gamma must be > 0, got {gamma}")));
    }
    let phi = design_matrix(&data.model_inputs(), penalties);
    let active: Vec<usize> = penalties
        .entries()
        .iter()
        .enumerate()
        .filter(|(_, (_, l))| *l > 0.0)
        .map(|(q, _)| q)
        .collect();
    let mut coeffs = vec![0.0; penalties.entries().len()];
    if active.is_empty() {
        return Ok(coeffs);
    }
    let phi_a = phi.select_columns(&active);
    let mut normal = phi_a.transpose() * &phi_a;
    for (i, &q) in active.iter().enumerate() {
        normal[(i, i)] += gamma * gamma / penalties.entries()[q].1;
    }
    let rhs = phi_a.transpose() * data.model_outputs();
    let sol = normal
        .lu()
        .solve(&rhs)
        .ok_or(Error::IllConditioned { jitter: 0.0 })?;
    for (i, &q) in active.iter().enumerate() {
        coeffs[q] = sol[i];
    }
    Ok(coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{MpkParams, PkParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(rng: &mut ChaCha8Rng, t: usize, d: usize) -> Dataset {
        let x = DMatrix::from_fn(t, d, |_, _| rng.gen_range(-1.0..1.0));
        let y = DVector::from_fn(t, |_, _| rng.gen_range(-2.0..2.0));
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn scalar_solve() {
        let data = Dataset::new(DMatrix::from_element(1, 1, 2.0), DVector::from_element(1, 3.0)).unwrap();
        let kernel = KernelConfig::Pk(PkParams::new(2).unwrap());
        let model = fit(&data, &kernel, 0.5).unwrap();
        // k = (1 + 4)^2 = 25
        assert!((model.alpha()[0] - 3.0 / 25.25).abs() < 1e-15);
    }

    #[test]
    fn zero_targets_give_zero_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(6, 2, |_, _| rng.gen_range(-1.0..1.0));
        let data = Dataset::new(x, DVector::zeros(6)).unwrap();
        let model = fit(&data, &KernelConfig::Pk(PkParams::new(3).unwrap()), 0.1).unwrap();
        assert!(model.alpha().iter().all(|&a| a == 0.0));
        let p = predict(&model, data.inputs()).unwrap();
        assert!(p.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn residual_of_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = random_data(&mut rng, 10, 3);
        let kernel = KernelConfig::Mpk(MpkParams::uniform(3, 3, 0.7).unwrap());
        let model = fit(&data, &kernel, 0.3).unwrap();
        let mut k = build_gram(data.inputs(), &kernel).unwrap();
        for i in 0..10 {
            k[(i, i)] += 0.09;
        }
        let res = &k * model.alpha() - data.outputs();
        assert!(res.amax() < 1e-8 * data.outputs().amax());
    }

    #[test]
    fn interpolation_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = random_data(&mut rng, 5, 3);
        let model = fit(&data, &KernelConfig::Pk(PkParams::new(3).unwrap()), 1e-6).unwrap();
        let p = predict(&model, data.inputs()).unwrap();
        assert!((p - data.outputs()).amax() < 1e-6);
    }

    #[test]
    fn prediction_matches_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = random_data(&mut rng, 5, 2).normalized();
        let kernel = KernelConfig::Mpk(MpkParams::uniform(3, 2, 0.4).unwrap());
        let model = fit(&data, &kernel, 0.2).unwrap();
        let test = DMatrix::from_fn(4, 2, |_, _| rng.gen_range(-1.0..1.0));
        let p = predict(&model, &test).unwrap();
        let norm = data.normalization().unwrap();
        for i in 0..4 {
            let u = norm.apply_row(&test.row(i).iter().copied().collect::<Vec<_>>());
            let mut acc = 0.0;
            for t in 0..5 {
                let v: Vec<f64> = model.training_inputs().row(t).iter().copied().collect();
                acc += model.alpha()[t] * kernel.eval(&u, &v).unwrap();
            }
            let acc = norm.unscale_output(acc);
            assert!((acc - p[i]).abs() < 1e-12 * acc.abs().max(1.0));
        }
        assert!(predict(&model, &DMatrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn permutation_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let data = random_data(&mut rng, 8, 2);
        let perm = [3, 0, 7, 1, 6, 2, 5, 4];
        let permuted = data.select(&perm);
        let kernel = KernelConfig::Mpk(MpkParams::uniform(2, 2, 0.9).unwrap());
        let a = fit(&data, &kernel, 0.4).unwrap();
        let b = fit(&permuted, &kernel, 0.4).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            assert!((b.alpha()[i] - a.alpha()[p]).abs() < 1e-10);
        }
        let test = DMatrix::from_fn(3, 2, |_, _| rng.gen_range(-1.0..1.0));
        let pa = predict(&a, &test).unwrap();
        let pb = predict(&b, &test).unwrap();
        assert!((pa - pb).amax() < 1e-10);
    }

    #[test]
    fn training_mse_grows_with_gamma() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data = random_data(&mut rng, 15, 2);
        let kernel = KernelConfig::Pk(PkParams::new(2).unwrap());
        let mut last = -1.0;
        for gamma in [1e-3, 1e-2, 0.1, 0.3, 1.0, 3.0, 10.0, 100.0] {
            let m = fit(&data, &kernel, gamma).unwrap();
            let res = predict(&m, data.inputs()).unwrap() - data.outputs();
            let mse = res.norm_squared() / 15.0;
            assert!(mse >= last - 1e-12);
            last = mse;
        }
    }

    #[test]
    fn oracle_single_feature_closed_form() {
        use crate::penalty::expand_penalties;
        // degree-1 kernel in 1 variable: features {1, x}. Zero the constant with MPK.
        let p = MpkParams::from_derived(&[0.0], &[vec![2.0]]).unwrap();
        let table = expand_penalties(&KernelConfig::Mpk(p), 1, 1).unwrap();
        assert_eq!(table.lambdas()[0], 0.0);
        assert!((table.lambdas()[1] - 2.0).abs() < 1e-15);
        let x = [1.0, -0.5, 2.0];
        let y = [0.3, 1.0, -0.2];
        let data = Dataset::from_rows(&x.iter().map(|&v| vec![v]).collect::<Vec<_>>(), y.to_vec()).unwrap();
        let c = explicit_ridge_oracle(&data, &table, 0.7).unwrap();
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        assert_eq!(c[0], 0.0);
        assert!((c[1] - sxy / (sxx + 0.49 / table.lambdas()[1])).abs() < 1e-14);
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data = random_data(&mut rng, 6, 2).normalized();
        let model = fit(&data, &KernelConfig::Mpk(MpkParams::uniform(3, 2, 0.5).unwrap()), 0.3).unwrap();
        let text = serde_json::to_string(&model.to_json()).unwrap();
        let back = FittedNetwork::from_json(serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back.alpha(), model.alpha());
        assert_eq!(back.training_inputs(), model.training_inputs());
        assert!((back.log_det() - model.log_det()).abs() < 1e-9);
    }
}
