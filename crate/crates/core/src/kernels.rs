//! Polynomial kernels for Volterra regression.
//!
//! Two kernels are provided:
//!
//! * the inhomogeneous polynomial kernel `PK(u, v) = (1 + u'v)^r`, which has no
//!   tunable parameters besides its degree;
//! * the multiplicative polynomial kernel
//!   `MPK(u, v) = prod_{i=1..r} (s0_i + u' S_i v)` with diagonal `S_i`.
//!
//! The MPK is stored through unconstrained raw values. Offsets are `s0_i = theta_i^2`
//! and the diagonals are built backwards, `S_r = diag(a_r)`, `S_i = S_{i+1} + diag(a_i)`,
//! with `a_i[j] = raw_i[j]^2`. The diagonals are therefore non-negative and
//! non-increasing in `i`, which removes the factor-permutation symmetry of the product.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Degree of the inhomogeneous polynomial kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PkParamsJson")]
pub struct PkParams {
    #[serde(rename = "r")]
    pub degree: u32,
}

#[derive(Deserialize)]
struct PkParamsJson {
    r: u32,
}

impl TryFrom<PkParamsJson> for PkParams {
    type Error = Error;

    fn try_from(j: PkParamsJson) -> Result<Self> {
        PkParams::new(j.r)
    }
}

impl PkParams {
    pub fn new(degree: u32) -> Result<Self> {
        if degree == 0 {
            return Err(Error::InvalidConfig("kernel degree must be >= 1".into()));
        }
        Ok(PkParams { degree })
    }
}

/// Raw (unconstrained) MPK hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MpkParamsJson")]
pub struct MpkParams {
    #[serde(rename = "r")]
    degree: u32,
    #[serde(rename = "d")]
    dim: usize,
    raw_offsets: Vec<f64>,
    /// `raw_increments[i][j]`: factor `i` (0-based), input coordinate `j`.
    raw_increments: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct MpkParamsJson {
    r: u32,
    d: usize,
    raw_offsets: Vec<f64>,
    raw_increments: Vec<Vec<f64>>,
}

impl TryFrom<MpkParamsJson> for MpkParams {
    type Error = Error;

    fn try_from(j: MpkParamsJson) -> Result<Self> {
        let p = MpkParams::new(j.raw_offsets, j.raw_increments)?;
        if p.degree != j.r || p.dim != j.d {
            return Err(Error::InvalidConfig(format!(
                "declared r={} d={} but parameters have r={} d={}",
                j.r, j.d, p.degree, p.dim
            )));
        }
        Ok(p)
    }
}

/// Derived MPK parameters: per-factor offsets and diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct Sigmas {
    pub offsets: Vec<f64>,
    pub diagonals: Vec<Vec<f64>>,
}

impl MpkParams {
    pub fn new(raw_offsets: Vec<f64>, raw_increments: Vec<Vec<f64>>) -> Result<Self> {
        let degree = raw_offsets.len();
        if degree == 0 {
            return Err(Error::InvalidConfig("kernel degree must be >= 1".into()));
        }
        if raw_increments.len() != degree {
            return Err(Error::DimensionMismatch {
                expected: degree,
                found: raw_increments.len(),
            });
        }
        let dim = raw_increments[0].len();
        if dim == 0 {
            return Err(Error::InvalidConfig("input dimension must be >= 1".into()));
        }
        if let Some(row) = raw_increments.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: row.len(),
            });
        }
        Ok(MpkParams {
            degree: degree as u32,
            dim,
            raw_offsets,
            raw_increments,
        })
    }

    /// Builds raw values from non-negative derived offsets and increments
    /// (`raw = sqrt(value)`).
    pub fn from_derived(offsets: &[f64], increments: &[Vec<f64>]) -> Result<Self> {
        let neg = offsets
            .iter()
            .chain(increments.iter().flatten())
            .any(|&v| !(v >= 0.0));
        if neg {
            return Err(Error::InvalidConfig(
                "derived MPK parameters must be >= 0".into(),
            ));
        }
        MpkParams::new(
            offsets.iter().map(|v| v.sqrt()).collect(),
            increments
                .iter()
                .map(|row| row.iter().map(|v| v.sqrt()).collect())
                .collect(),
        )
    }

    /// All offsets and increments equal to `value`.
    pub fn uniform(degree: u32, dim: usize, value: f64) -> Result<Self> {
        let r = degree as usize;
        MpkParams::from_derived(&vec![value; r], &vec![vec![value; dim]; r])
    }

    /// Parameters whose kernel equals `PK` of the same degree: unit offsets and
    /// identity diagonals.
    pub fn polynomial_equivalent(degree: u32, dim: usize) -> Result<Self> {
        let r = degree as usize;
        let mut inc = vec![vec![0.0; dim]; r];
        inc[r - 1] = vec![1.0; dim];
        MpkParams::from_derived(&vec![1.0; r], &inc)
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn raw_offsets(&self) -> &[f64] {
        &self.raw_offsets
    }

    pub fn raw_increments(&self) -> &[Vec<f64>] {
        &self.raw_increments
    }

    /// Number of raw parameters, `r + r d`.
    pub fn len(&self) -> usize {
        self.degree as usize * (1 + self.dim)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Raw values packed as `[offsets..., increments row-major...]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = self.raw_offsets.clone();
        for row in &self.raw_increments {
            out.extend_from_slice(row);
        }
        out
    }

    /// Inverse of [`MpkParams::to_flat`].
    pub fn from_flat(degree: u32, dim: usize, flat: &[f64]) -> Result<Self> {
        let r = degree as usize;
        if flat.len() != r * (1 + dim) {
            return Err(Error::DimensionMismatch {
                expected: r * (1 + dim),
                found: flat.len(),
            });
        }
        let offsets = flat[..r].to_vec();
        let increments = flat[r..].chunks(dim).map(<[f64]>::to_vec).collect();
        MpkParams::new(offsets, increments)
    }

    /// Derived increments `a_i[j] = raw^2`.
    pub fn increments(&self) -> Vec<Vec<f64>> {
        self.raw_increments
            .iter()
            .map(|row| row.iter().map(|t| t * t).collect())
            .collect()
    }
}

/// Offsets `s0_i = theta_i^2` and backward-cumulative diagonals.
pub fn derive_sigmas(params: &MpkParams) -> Sigmas {
    let r = params.degree as usize;
    let offsets = params.raw_offsets.iter().map(|t| t * t).collect();
    let mut diagonals = vec![vec![0.0; params.dim]; r];
    let mut running = vec![0.0; params.dim];
    for i in (0..r).rev() {
        for (acc, t) in running.iter_mut().zip(&params.raw_increments[i]) {
            *acc += t * t;
        }
        diagonals[i].clone_from(&running);
    }
    Sigmas { offsets, diagonals }
}

impl Sigmas {
    pub fn degree(&self) -> usize {
        self.offsets.len()
    }

    /// Value of factor `i` at `(u, v)`.
    pub fn factor(&self, i: usize, u: &[f64], v: &[f64]) -> f64 {
        self.offsets[i]
            + self.diagonals[i]
                .iter()
                .zip(u.iter().zip(v))
                .map(|(s, (a, b))| s * a * b)
                .sum::<f64>()
    }

    pub fn eval(&self, u: &[f64], v: &[f64]) -> f64 {
        (0..self.degree()).map(|i| self.factor(i, u, v)).product()
    }
}

fn check_pair(u: &[f64], v: &[f64], dim: Option<usize>) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    if let Some(d) = dim {
        if u.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: u.len(),
            });
        }
    }
    Ok(())
}

/// `(1 + u'v)^r`.
pub fn pk_eval(u: &[f64], v: &[f64], params: &PkParams) -> Result<f64> {
    check_pair(u, v, None)?;
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((1.0 + dot).powi(params.degree as i32))
}

/// `prod_i (s0_i + u' S_i v)`.
pub fn mpk_eval(u: &[f64], v: &[f64], params: &MpkParams) -> Result<f64> {
    check_pair(u, v, Some(params.dim))?;
    Ok(derive_sigmas(params).eval(u, v))
}

/// Partial derivatives of [`mpk_eval`] with respect to every raw parameter, packed as
/// in [`MpkParams::to_flat`].
pub fn mpk_param_gradient(u: &[f64], v: &[f64], params: &MpkParams) -> Result<Vec<f64>> {
    check_pair(u, v, Some(params.dim))?;
    let sig = derive_sigmas(params);
    let r = sig.degree();
    let factors: Vec<f64> = (0..r).map(|i| sig.factor(i, u, v)).collect();
    let others = leave_one_out_products(&factors);

    let mut grad = Vec::with_capacity(params.len());
    for i in 0..r {
        grad.push(2.0 * params.raw_offsets[i] * others[i]);
    }
    // a_i[j] enters every S_l with l <= i.
    let mut cumulative = 0.0;
    for i in 0..r {
        cumulative += others[i];
        for j in 0..params.dim {
            grad.push(2.0 * params.raw_increments[i][j] * u[j] * v[j] * cumulative);
        }
    }
    Ok(grad)
}

/// `out[l] = prod_{p != l} xs[p]`, computed without division so exact zeros are safe.
fn leave_one_out_products(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut out = vec![1.0; n];
    let mut prefix = 1.0;
    for i in 0..n {
        out[i] = prefix;
        prefix *= xs[i];
    }
    let mut suffix = 1.0;
    for i in (0..n).rev() {
        out[i] *= suffix;
        suffix *= xs[i];
    }
    out
}

/// A kernel together with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelConfig {
    Pk(PkParams),
    Mpk(MpkParams),
}

impl KernelConfig {
    pub fn degree(&self) -> u32 {
        match self {
            KernelConfig::Pk(p) => p.degree,
            KernelConfig::Mpk(p) => p.degree,
        }
    }

    /// Number of tunable raw parameters.
    pub fn param_count(&self) -> usize {
        match self {
            KernelConfig::Pk(_) => 0,
            KernelConfig::Mpk(p) => p.len(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelConfig::Pk(_) => "pk",
            KernelConfig::Mpk(_) => "mpk",
        }
    }

    pub fn eval(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        match self {
            KernelConfig::Pk(p) => pk_eval(u, v, p),
            KernelConfig::Mpk(p) => mpk_eval(u, v, p),
        }
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        match self {
            KernelConfig::Mpk(p) if p.dim != dim => Err(Error::DimensionMismatch {
                expected: p.dim,
                found: dim,
            }),
            _ => Ok(()),
        }
    }
}

/// `X diag(s) Y'` for `X: n x d`, `Y: p x d`.
fn scaled_inner(a: &DMatrix<f64>, b: &DMatrix<f64>, diag: &[f64]) -> DMatrix<f64> {
    let mut scaled = a.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= diag[j];
    }
    scaled * b.transpose()
}

fn mpk_factor_matrices(a: &DMatrix<f64>, b: &DMatrix<f64>, sig: &Sigmas) -> Vec<DMatrix<f64>> {
    (0..sig.degree())
        .map(|i| {
            let mut f = scaled_inner(a, b, &sig.diagonals[i]);
            f.add_scalar_mut(sig.offsets[i]);
            f
        })
        .collect()
}

fn check_finite(k: &DMatrix<f64>) -> Result<()> {
    let rows: Vec<usize> = k
        .row_iter()
        .enumerate()
        .filter(|(_, row)| row.iter().any(|x| !x.is_finite()))
        .map(|(i, _)| i)
        .collect();
    if rows.is_empty() {
        Ok(())
    } else {
        Err(Error::NonFinite { rows })
    }
}

/// Kernel block `K[i][j] = k(a_i, b_j)` between the rows of `a` and `b`.
pub fn build_cross(a: &DMatrix<f64>, b: &DMatrix<f64>, kernel: &KernelConfig) -> Result<DMatrix<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.ncols(),
            found: b.ncols(),
        });
    }
    kernel.check_dim(a.ncols())?;
    let k = match kernel {
        KernelConfig::Pk(p) => {
            let mut k = a * b.transpose();
            k.apply(|x| *x = (1.0 + *x).powi(p.degree as i32));
            k
        }
        KernelConfig::Mpk(p) => {
            let sig = derive_sigmas(p);
            let mut factors = mpk_factor_matrices(a, b, &sig).into_iter();
            let mut k = factors.next().expect("degree >= 1");
            for f in factors {
                k.component_mul_assign(&f);
            }
            k
        }
    };
    check_finite(&k)?;
    Ok(k)
}

/// Gram matrix of the rows of `inputs`, symmetrized as `(K + K')/2`.
pub fn build_gram(inputs: &DMatrix<f64>, kernel: &KernelConfig) -> Result<DMatrix<f64>> {
    if inputs.nrows() == 0 {
        return Err(Error::Empty);
    }
    let k = build_cross(inputs, inputs, kernel)?;
    Ok((&k + k.transpose()) * 0.5)
}

/// Gradient of `sum_ab W[a][b] k(a_a, b_b)` with respect to the raw MPK parameters,
/// packed as in [`MpkParams::to_flat`]. An empty vector for `PK`.
///
/// This is the contraction every objective gradient needs: `trace(W' dK/dtheta)`.
pub fn weighted_param_gradient(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    weights: &DMatrix<f64>,
    kernel: &KernelConfig,
) -> Result<Vec<f64>> {
    let params = match kernel {
        KernelConfig::Pk(_) => return Ok(Vec::new()),
        KernelConfig::Mpk(p) => p,
    };
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.ncols(),
            found: b.ncols(),
        });
    }
    kernel.check_dim(a.ncols())?;
    if weights.shape() != (a.nrows(), b.nrows()) {
        return Err(Error::DimensionMismatch {
            expected: a.nrows() * b.nrows(),
            found: weights.len(),
        });
    }
    let sig = derive_sigmas(params);
    let r = sig.degree();
    let d = params.dim;
    let factors = mpk_factor_matrices(a, b, &sig);

    let mut grad = vec![0.0; params.len()];
    let mut cumulative = vec![0.0; d];
    for l in 0..r {
        // M_l = W o prod_{p != l} F_p
        let mut m = weights.clone();
        for (p, f) in factors.iter().enumerate() {
            if p != l {
                m.component_mul_assign(f);
            }
        }
        grad[l] = 2.0 * params.raw_offsets[l] * m.sum();
        // h[j] = sum_ab M[a][b] A[a][j] B[b][j]
        let mb = &m * b;
        for j in 0..d {
            cumulative[j] += a.column(j).dot(&mb.column(j));
        }
        for j in 0..d {
            grad[r + l * d + j] = 2.0 * params.raw_increments[l][j] * cumulative[j];
        }
    }
    Ok(grad)
}
