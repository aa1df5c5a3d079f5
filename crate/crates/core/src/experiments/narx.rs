//! NARX regressors `[u_k .. u_{k-m_u}, z_{k-1} .. z_{k-m_z}] -> z_k` and free-run
//! simulation of a one-step predictor.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::regnet::{predict, FittedNetwork, NetworkJson};

/// Lag structure of a NARX model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NarxLags {
    /// Input lags; the regressor holds `u_k .. u_{k - input_lags}`.
    pub input_lags: usize,
    /// Output lags; the regressor holds `z_{k-1} .. z_{k - output_lags}`.
    pub output_lags: usize,
}

impl NarxLags {
    pub fn symmetric(m: usize) -> Self {
        NarxLags {
            input_lags: m,
            output_lags: m,
        }
    }

    pub fn dim(&self) -> usize {
        self.input_lags + 1 + self.output_lags
    }

    /// First index with a complete regressor.
    pub fn start(&self) -> usize {
        self.input_lags.max(self.output_lags)
    }

    fn regressor(&self, u: &[f64], z: &[f64], k: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..=self.input_lags).map(|i| u[k - i]));
        out.extend((1..=self.output_lags).map(|i| z[k - i]));
    }
}

/// Builds the NARX dataset with `m` lags of both signals.
pub fn build_narx_dataset(u: &[f64], z: &[f64], m: usize) -> Result<Dataset> {
    build_narx(u, z, NarxLags::symmetric(m))
}

/// Builds the NARX dataset for a general lag structure. Rows start at
/// [`NarxLags::start`].
pub fn build_narx(u: &[f64], z: &[f64], lags: NarxLags) -> Result<Dataset> {
    if u.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: z.len(),
        });
    }
    let start = lags.start();
    if u.len() <= start {
        return Err(Error::SignalTooShort {
            len: u.len(),
            memory: start,
        });
    }
    let rows = u.len() - start;
    let mut inputs = DMatrix::zeros(rows, lags.dim());
    let mut reg = Vec::with_capacity(lags.dim());
    for (r, k) in (start..u.len()).enumerate() {
        lags.regressor(u, z, k, &mut reg);
        inputs.row_mut(r).copy_from_slice(&reg);
    }
    Dataset::new(inputs, DVector::from_column_slice(&z[start..]))
}

/// A trained network together with the lag structure it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct NarxModel {
    pub network: FittedNetwork,
    pub lags: NarxLags,
}

impl NarxModel {
    pub fn new(network: FittedNetwork, lags: NarxLags) -> Result<Self> {
        if network.dim() != lags.dim() {
            return Err(Error::DimensionMismatch {
                expected: lags.dim(),
                found: network.dim(),
            });
        }
        Ok(NarxModel { network, lags })
    }

    pub fn to_json(&self) -> NarxModelJson {
        NarxModelJson {
            lags: self.lags,
            network: self.network.to_json(),
        }
    }

    pub fn from_json(doc: NarxModelJson) -> Result<Self> {
        NarxModel::new(FittedNetwork::from_json(doc.network)?, doc.lags)
    }

    /// One-step-ahead predictions `z_hat_k` for `k >= start`, from measured outputs.
    pub fn one_step(&self, u: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        let data = build_narx(u, z, self.lags)?;
        Ok(predict(&self.network, data.inputs())?.iter().copied().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarxModelJson {
    pub lags: NarxLags,
    pub network: NetworkJson,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreeRun {
    /// Seeds followed by simulated outputs; shorter than the input when the
    /// simulation diverged.
    pub z: Vec<f64>,
    /// Index of the first non-finite prediction, if any.
    pub diverged_at: Option<usize>,
}

/// Simulates the model over `u`, feeding its own predictions back into the lagged
/// output slots. `z_init` supplies the first [`NarxLags::start`] measured outputs.
pub fn free_run_simulate(model: &NarxModel, u: &[f64], z_init: &[f64]) -> Result<FreeRun> {
    simulate_with(model.lags, u, z_init, |reg| {
        predict(&model.network, &DMatrix::from_row_slice(1, reg.len(), reg)).map(|v| v[0])
    })
}

/// Free run driven by an arbitrary one-step map.
pub fn simulate_with<F>(lags: NarxLags, u: &[f64], z_init: &[f64], mut step: F) -> Result<FreeRun>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let start = lags.start();
    if z_init.len() != start {
        return Err(Error::DimensionMismatch {
            expected: start,
            found: z_init.len(),
        });
    }
    if u.len() < start {
        return Err(Error::SignalTooShort {
            len: u.len(),
            memory: start,
        });
    }
    let mut z = Vec::with_capacity(u.len());
    z.extend_from_slice(z_init);
    let mut reg = Vec::with_capacity(lags.dim());
    for k in start..u.len() {
        lags.regressor(u, &z, k, &mut reg);
        let next = step(&reg)?;
        if !next.is_finite() {
            return Ok(FreeRun {
                z,
                diverged_at: Some(k),
            });
        }
        z.push(next);
    }
    Ok(FreeRun { z, diverged_at: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{KernelConfig, PkParams};
    use crate::metrics::fit_percent;
    use crate::regnet::fit;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn index_bookkeeping() {
        let d = build_narx_dataset(&[1.0, 2.0], &[10.0, 20.0], 1).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.inputs().row(0).iter().copied().collect::<Vec<_>>(), vec![2.0, 1.0, 10.0]);
        assert_eq!(d.outputs()[0], 20.0);

        let n = 40;
        let u: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let d = build_narx_dataset(&u, &u, 5).unwrap();
        assert_eq!((d.len(), d.dim()), (n - 5, 11));

        let d = build_narx_dataset(&[3.0; 8], &[1.0; 8], 2).unwrap();
        let first = d.inputs().row(0).clone_owned();
        assert!(d.inputs().row_iter().all(|r| r == first));

        assert!(build_narx_dataset(&[1.0; 3], &[1.0; 4], 1).is_err());
        assert!(matches!(build_narx_dataset(&[1.0; 2], &[1.0; 2], 2), Err(Error::SignalTooShort { .. })));
    }

    #[test]
    fn asymmetric_lags() {
        let lags = NarxLags {
            input_lags: 2,
            output_lags: 0,
        };
        let u = [1.0, 2.0, 3.0, 4.0];
        let d = build_narx(&u, &[9.0; 4], lags).unwrap();
        assert_eq!(d.dim(), 3);
        assert_eq!(d.inputs().row(1).iter().copied().collect::<Vec<_>>(), vec![4.0, 3.0, 2.0]);
    }

    #[test]
    fn zero_predictor_free_run() {
        let lags = NarxLags::symmetric(2);
        let run = simulate_with(lags, &[1.0; 6], &[5.0, 6.0], |_| Ok(0.0)).unwrap();
        assert_eq!(run.z, vec![5.0, 6.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(run.diverged_at, None);
    }

    #[test]
    fn divergence_is_flagged() {
        let lags = NarxLags::symmetric(1);
        let run = simulate_with(lags, &[1.0; 10], &[1.0], |r| Ok(r[2] * 1e200)).unwrap();
        // z_1 = 1e200, z_2 overflows
        assert_eq!(run.diverged_at, Some(2));
        assert_eq!(run.z, vec![1.0, 1e200]);
    }

    fn linear_system(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let u: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let mut z = vec![0.0; n];
        for k in 1..n {
            z[k] = 0.5 * z[k - 1] + u[k] + 0.3 * u[k - 1];
        }
        (u, z)
    }

    #[test]
    fn linear_system_free_run() {
        let (u, z) = linear_system(120, 1);
        let lags = NarxLags::symmetric(1);
        let data = build_narx(&u[..60], &z[..60], lags).unwrap();
        let net = fit(&data, &KernelConfig::Pk(PkParams::new(1).unwrap()), 1e-4).unwrap();
        let model = NarxModel::new(net, lags).unwrap();
        let (u_te, z_te) = (&u[60..], &z[60..]);
        let run = free_run_simulate(&model, u_te, &z_te[..1]).unwrap();
        assert_eq!(run.diverged_at, None);
        assert!(fit_percent(&z_te[1..], &run.z[1..]).unwrap() > 99.0);

        let text = serde_json::to_string(&model.to_json()).unwrap();
        let back = NarxModel::from_json(serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back.one_step(u_te, z_te).unwrap(), model.one_step(u_te, z_te).unwrap());
    }

    #[test]
    fn fed_measured_outputs_equals_one_step() {
        let (u, z) = linear_system(50, 2);
        let lags = NarxLags::symmetric(2);
        let data = build_narx(&u[..30], &z[..30], lags).unwrap().normalized();
        let net = fit(&data, &KernelConfig::Pk(PkParams::new(2).unwrap()), 0.1).unwrap();
        let model = NarxModel::new(net, lags).unwrap();
        let one = model.one_step(&u[30..], &z[30..]).unwrap();
        // a step function that ignores the fed-back slots and reads measured outputs
        let (u_te, z_te) = (&u[30..], &z[30..]);
        let mut k = lags.start();
        let fed = simulate_with(lags, u_te, &z_te[..2], |_| {
            let mut reg = Vec::new();
            lags.regressor(u_te, z_te, k, &mut reg);
            k += 1;
            predict(&model.network, &DMatrix::from_row_slice(1, reg.len(), &reg)).map(|v| v[0])
        })
        .unwrap();
        assert_eq!(&fed.z[2..], &one[..]);
    }
}
