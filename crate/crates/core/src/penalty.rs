//! Expansion of a polynomial kernel into per-monomial prior weights.
//!
//! Both kernels are polynomials in the products `x_j = u_j v_j`, so
//! `k(u, v) = sum_q lambda_q phi_q(u) phi_q(v)` where `phi_q` runs over all monomials
//! of degree `<= r`. Small `lambda_q` means a strong ridge penalty on that monomial.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::kernels::{derive_sigmas, KernelConfig};
use crate::volterra::{enumerate_monomials_in, monomial_count, multinomial_coeff, MonomialIndex};

/// Largest expansion we agree to materialize.
pub const EXPANSION_LIMIT: u128 = 1_000_000;

/// Per-monomial expansion coefficients in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyTable {
    degree: u32,
    dim: usize,
    entries: Vec<(MonomialIndex, f64)>,
}

impl PenaltyTable {
    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(MonomialIndex, f64)] {
        &self.entries
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.entries.iter().map(|(_, l)| *l).collect()
    }

    pub fn get(&self, degrees: &[u32]) -> Option<f64> {
        self.entries
            .iter()
            .find(|(idx, _)| idx.degrees() == degrees)
            .map(|(_, l)| *l)
    }

    /// `sum_q lambda_q phi_q(u) phi_q(v)`; equals the kernel it was expanded from.
    pub fn reconstruct(&self, u: &[f64], v: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|(idx, l)| l * idx.eval(u) * idx.eval(v))
            .sum()
    }

    /// CSV with columns `d_0, ..., d_{dim-1}, lambda`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for j in 0..self.dim {
            let _ = write!(out, "d_{j},");
        }
        out.push_str("lambda\n");
        for (idx, l) in &self.entries {
            for d in idx.degrees() {
                let _ = write!(out, "{d},");
            }
            let _ = writeln!(out, "{l}");
        }
        out
    }
}

/// Expands `kernel` over the monomials of degree `<= r` in `dim` variables.
pub fn expand_penalties(kernel: &KernelConfig, dim: usize, r: u32) -> Result<PenaltyTable> {
    if kernel.degree() != r {
        return Err(Error::InvalidConfig(format!(
            "kernel degree {} does not match expansion degree {r}",
            kernel.degree()
        )));
    }
    if dim == 0 {
        return Err(Error::InvalidConfig("input dimension must be >= 1".into()));
    }
    let count = monomial_count(dim, r);
    if count > EXPANSION_LIMIT {
        return Err(Error::GuardExceeded {
            count,
            limit: EXPANSION_LIMIT,
        });
    }
    let basis = enumerate_monomials_in(dim, r);
    let entries = match kernel {
        KernelConfig::Pk(_) => basis
            .into_iter()
            .map(|idx| {
                // r! / (d_0! ... d_{dim-1}! (r - |d|)!)
                let mut extended = idx.degrees().to_vec();
                extended.push(r - idx.total_degree());
                let c = multinomial_coeff(&MonomialIndex::new(extended), r)
                    .expect("extended index has degree r");
                (idx, c as f64)
            })
            .collect(),
        KernelConfig::Mpk(p) => {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: p.dim(),
                    found: dim,
                });
            }
            let sig = derive_sigmas(p);
            let mut poly: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
            poly.insert(vec![0; dim], 1.0);
            for i in 0..sig.degree() {
                poly = multiply_linear(&poly, sig.offsets[i], &sig.diagonals[i]);
            }
            basis
                .into_iter()
                .map(|idx| {
                    let l = poly.get(idx.degrees()).copied().unwrap_or(0.0);
                    (idx, l)
                })
                .collect()
        }
    };
    Ok(PenaltyTable {
        degree: r,
        dim,
        entries,
    })
}

/// `poly * (offset + sum_j slope[j] x_j)`.
fn multiply_linear(
    poly: &BTreeMap<Vec<u32>, f64>,
    offset: f64,
    slope: &[f64],
) -> BTreeMap<Vec<u32>, f64> {
    let mut out: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    for (exp, &c) in poly {
        if offset != 0.0 {
            *out.entry(exp.clone()).or_insert(0.0) += c * offset;
        }
        for (j, &s) in slope.iter().enumerate() {
            if s == 0.0 {
                continue;
            }
            let mut e = exp.clone();
            e[j] += 1;
            *out.entry(e).or_insert(0.0) += c * s;
        }
    }
    out
}
