//! Truncated Volterra series: monomial bookkeeping, the explicit feature map and
//! a ground-truth simulator.
//!
//! Monomials over the lagged inputs `[u_k, u_{k-1}, ..., u_{k-m}]` are identified by
//! their exponent vectors. Every table in this crate (feature vectors, penalty tables,
//! explicit weights) uses the same graded lexicographic order: total degree first,
//! then exponent vectors in descending lexicographic order, so that `u_k` comes
//! before `u_{k-1}` and `u_k^2` before `u_k u_{k-1}`.

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Signals};
use crate::error::{Error, Result};

/// Exponent vector `(d_0, ..., d_m)` of a monomial `prod_j u_{k-j}^{d_j}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MonomialIndex(Vec<u32>);

impl MonomialIndex {
    pub fn new(degrees: Vec<u32>) -> Self {
        MonomialIndex(degrees)
    }

    pub fn constant(len: usize) -> Self {
        MonomialIndex(vec![0; len])
    }

    pub fn degrees(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total_degree(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Evaluates the monomial at `u`. Panics if lengths differ.
    pub fn eval(&self, u: &[f64]) -> f64 {
        assert_eq!(u.len(), self.0.len(), "monomial/input length mismatch");
        self.0
            .iter()
            .zip(u)
            .filter(|(&d, _)| d > 0)
            .map(|(&d, &x)| x.powi(d as i32))
            .product()
    }
}

impl fmt::Display for MonomialIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{d}")?;
        }
        write!(f, ")")
    }
}

/// `C(n, k)` in 128-bit arithmetic.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Number of monomials of total degree at most `r` in `vars` variables.
pub fn monomial_count(vars: usize, r: u32) -> u128 {
    binomial(vars as u64 + r as u64, r as u64)
}

/// All exponent vectors of length `m + 1` with total degree `0..=r`, in graded
/// lexicographic order.
pub fn enumerate_monomials(m: usize, r: u32) -> Vec<MonomialIndex> {
    enumerate_monomials_in(m + 1, r)
}

pub(crate) fn enumerate_monomials_in(vars: usize, r: u32) -> Vec<MonomialIndex> {
    let mut out = Vec::with_capacity(monomial_count(vars, r) as usize);
    let mut scratch = vec![0u32; vars];
    for degree in 0..=r {
        compositions(degree, 0, &mut scratch, &mut out);
    }
    out
}

fn compositions(remaining: u32, pos: usize, scratch: &mut [u32], out: &mut Vec<MonomialIndex>) {
    if pos + 1 == scratch.len() {
        scratch[pos] = remaining;
        out.push(MonomialIndex(scratch.to_vec()));
        return;
    }
    for first in (0..=remaining).rev() {
        scratch[pos] = first;
        compositions(remaining - first, pos + 1, scratch, out);
    }
    scratch[pos] = 0;
}

/// `i! / (d_0! ... d_m!)` for a monomial of total degree `i`.
pub fn multinomial_coeff(idx: &MonomialIndex, i: u32) -> Result<u128> {
    let total = idx.total_degree();
    if total != i {
        return Err(Error::DegreeMismatch {
            expected: i,
            found: total,
        });
    }
    // Product of binomials C(d_0 + ... + d_j, d_j) avoids large factorials.
    let mut acc: u128 = 1;
    let mut running = 0u64;
    for &d in idx.degrees() {
        running += d as u64;
        acc *= binomial(running, d as u64);
    }
    Ok(acc)
}

/// Explicit feature vector `phi(u)`: every monomial of degree `0..=r` evaluated at the
/// window `u`, in canonical order.
pub fn feature_map(u: &[f64], m: usize, r: u32) -> Result<Vec<f64>> {
    if u.len() != m + 1 {
        return Err(Error::DimensionMismatch {
            expected: m + 1,
            found: u.len(),
        });
    }
    Ok(enumerate_monomials(m, r)
        .iter()
        .map(|idx| idx.eval(u))
        .collect())
}

/// Sliding windows `[u_k, u_{k-1}, ..., u_{k-m}]` for `k = m..len`. Samples without a
/// full history are dropped.
pub fn windows(signal: &[f64], m: usize) -> Result<Vec<Vec<f64>>> {
    if signal.len() < m + 1 {
        return Err(Error::SignalTooShort {
            len: signal.len(),
            memory: m,
        });
    }
    Ok((m..signal.len())
        .map(|k| (0..=m).map(|lag| signal[k - lag]).collect())
        .collect())
}

/// Symmetric truncated Volterra series stored through its scaled monomial weights.
#[derive(Debug, Clone, PartialEq)]
pub struct VolterraSeries {
    order: u32,
    memory: usize,
    h0: f64,
    coeffs: BTreeMap<MonomialIndex, f64>,
}

impl VolterraSeries {
    pub fn new(order: u32, memory: usize, h0: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidConfig("Volterra order must be >= 1".into()));
        }
        Ok(VolterraSeries {
            order,
            memory,
            h0,
            coeffs: BTreeMap::new(),
        })
    }

    /// Builds a series from an explicit weight vector aligned with
    /// [`enumerate_monomials`]; the first weight is `h0`.
    pub fn from_weights(order: u32, memory: usize, weights: &[f64]) -> Result<Self> {
        let basis = enumerate_monomials(memory, order);
        if weights.len() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                found: weights.len(),
            });
        }
        let mut series = VolterraSeries::new(order, memory, weights[0])?;
        for (idx, &w) in basis.into_iter().zip(weights).skip(1) {
            if w != 0.0 {
                series.coeffs.insert(idx, w);
            }
        }
        Ok(series)
    }

    /// Adds `coeff` to the weight of monomial `degrees`.
    pub fn add_term(&mut self, degrees: Vec<u32>, coeff: f64) -> Result<&mut Self> {
        if degrees.len() != self.memory + 1 {
            return Err(Error::DimensionMismatch {
                expected: self.memory + 1,
                found: degrees.len(),
            });
        }
        let idx = MonomialIndex(degrees);
        let degree = idx.total_degree();
        if degree == 0 || degree > self.order {
            return Err(Error::InvalidConfig(format!(
                "term {idx} has degree {degree}, allowed 1..={}",
                self.order
            )));
        }
        *self.coeffs.entry(idx).or_insert(0.0) += coeff;
        Ok(self)
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn h0(&self) -> f64 {
        self.h0
    }

    pub fn coeffs(&self) -> &BTreeMap<MonomialIndex, f64> {
        &self.coeffs
    }

    /// Dense weight vector in canonical order, `h0` first.
    pub fn weights(&self) -> Vec<f64> {
        enumerate_monomials(self.memory, self.order)
            .iter()
            .map(|idx| {
                if idx.total_degree() == 0 {
                    self.h0
                } else {
                    self.coeffs.get(idx).copied().unwrap_or(0.0)
                }
            })
            .collect()
    }

    /// Noiseless output for one input window.
    pub fn eval(&self, window: &[f64]) -> Result<f64> {
        if window.len() != self.memory + 1 {
            return Err(Error::DimensionMismatch {
                expected: self.memory + 1,
                found: window.len(),
            });
        }
        Ok(self.h0
            + self
                .coeffs
                .iter()
                .map(|(idx, c)| c * idx.eval(window))
                .sum::<f64>())
    }

    pub fn to_json(&self) -> SeriesJson {
        SeriesJson {
            r: self.order,
            m: self.memory,
            h0: self.h0,
            terms: self
                .coeffs
                .iter()
                .map(|(idx, &coeff)| SeriesTerm {
                    degrees: idx.degrees().to_vec(),
                    coeff,
                })
                .collect(),
        }
    }

    pub fn from_json(doc: &SeriesJson) -> Result<Self> {
        let mut series = VolterraSeries::new(doc.r, doc.m, doc.h0)?;
        for term in &doc.terms {
            series.add_term(term.degrees.clone(), term.coeff)?;
        }
        Ok(series)
    }
}

/// On-disk series definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesJson {
    pub r: u32,
    pub m: usize,
    pub h0: f64,
    pub terms: Vec<SeriesTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesTerm {
    pub degrees: Vec<u32>,
    pub coeff: f64,
}

/// Output of [`simulate_series`].
#[derive(Debug, Clone)]
pub struct Simulation {
    /// Windows as inputs, noisy outputs as targets.
    pub dataset: Dataset,
    /// Noiseless system output `z_k` aligned with the dataset rows.
    pub noiseless: Vec<f64>,
}

/// Gaussian noise source keyed by an explicit seed. ChaCha is counter based, so a
/// seed fully determines the stream on every platform.
pub fn gaussian_stream(seed: u64, mean: f64, std: f64) -> impl Iterator<Item = f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(mean, std.max(0.0)).expect("finite standard deviation");
    std::iter::repeat_with(move || dist.sample(&mut rng))
}

/// Runs `series` over `signal`: `y_k = z_k + e_k` with `e_k ~ N(0, noise_std^2)`.
pub fn simulate_series(
    series: &VolterraSeries,
    signal: &[f64],
    noise_std: f64,
    seed: u64,
) -> Result<Simulation> {
    simulate_with(series.memory, signal, noise_std, seed, |w| series.eval(w))
}

pub(crate) fn simulate_with(
    memory: usize,
    signal: &[f64],
    noise_std: f64,
    seed: u64,
    system: impl Fn(&[f64]) -> Result<f64>,
) -> Result<Simulation> {
    if !(noise_std >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "noise std must be >= 0, got {noise_std}"
        )));
    }
    let rows = windows(signal, memory)?;
    let noiseless = rows.iter().map(|w| system(w)).collect::<Result<Vec<_>>>()?;
    let outputs: Vec<f64> = if noise_std == 0.0 {
        noiseless.clone()
    } else {
        noiseless
            .iter()
            .zip(gaussian_stream(seed, 0.0, noise_std))
            .map(|(z, e)| z + e)
            .collect()
    };
    Ok(Simulation {
        dataset: Dataset::from_rows(&rows, outputs)?,
        noiseless,
    })
}

/// Third-order benchmark system with memory 6 used by the synthetic experiments.
/// `window = [u_k, u_{k-1}, ..., u_{k-6}]`.
pub fn spl_output(window: &[f64]) -> Result<f64> {
    if window.len() != 7 {
        return Err(Error::DimensionMismatch {
            expected: 7,
            found: window.len(),
        });
    }
    let u = |lag: usize| window[lag];
    Ok(u(0) + 0.6 * u(1) + 0.35 * (u(2) + u(4)) - 0.25 * u(3).powi(2)
        + 0.2 * (u(5) + u(6))
        + 0.9 * u(3)
        + 0.25 * u(0) * u(1)
        + 0.75 * u(2).powi(3)
        - u(1) * u(2)
        + 0.5 * (u(0).powi(2) + u(0) * u(2) + u(1) * u(3)))
}

/// The benchmark system as an explicit [`VolterraSeries`] (memory 6, order 3).
pub fn spl_series() -> VolterraSeries {
    let mut s = VolterraSeries::new(3, 6, 0.0).expect("valid order");
    let mono = |pairs: &[(usize, u32)]| {
        let mut d = vec![0u32; 7];
        for &(lag, p) in pairs {
            d[lag] += p;
        }
        d
    };
    let terms: [(&[(usize, u32)], f64); 14] = [
        (&[(0, 1)], 1.0),
        (&[(1, 1)], 0.6),
        (&[(2, 1)], 0.35),
        (&[(4, 1)], 0.35),
        (&[(3, 2)], -0.25),
        (&[(5, 1)], 0.2),
        (&[(6, 1)], 0.2),
        (&[(3, 1)], 0.9),
        (&[(0, 1), (1, 1)], 0.25),
        (&[(2, 3)], 0.75),
        (&[(1, 1), (2, 1)], -1.0),
        (&[(0, 2)], 0.5),
        (&[(0, 1), (2, 1)], 0.5),
        (&[(1, 1), (3, 1)], 0.5),
    ];
    for (pairs, c) in terms {
        s.add_term(mono(pairs), c).expect("valid term");
    }
    s
}

/// `u_k^3 + u_k^2 u_{k-1} + 0.5`, the memory-1 cubic used for penalty analysis.
pub fn cubic_example_series() -> VolterraSeries {
    let mut s = VolterraSeries::new(3, 1, 0.5).expect("valid order");
    s.add_term(vec![3, 0], 1.0).expect("valid term");
    s.add_term(vec![2, 1], 1.0).expect("valid term");
    s
}

/// A `u,y` record of [`cubic_example_series`] driven by standard Gaussian input:
/// `len` samples, each output using the input sample before it.
pub fn cubic_example_record(len: usize, noise_std: f64, seed: u64) -> Result<Signals> {
    let u: Vec<f64> = gaussian_stream(seed, 0.0, 1.0).take(len + 1).collect();
    let sim = simulate_series(&cubic_example_series(), &u, noise_std, seed.wrapping_add(1))?;
    Ok(Signals {
        u: u[1..].to_vec(),
        y: sim.dataset.outputs().iter().copied().collect(),
    })
}
