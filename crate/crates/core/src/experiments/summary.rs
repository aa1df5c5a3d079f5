//! Five-number summaries of per-run scores.

use serde::{Deserialize, Serialize};

use crate::hyperopt::KernelKind;

use super::synthetic::RunRecord;

/// Minimum, quartiles and maximum, with quartiles by linear interpolation between
/// order statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

impl FiveNumber {
    /// `None` for an empty sample. Non-finite values sort to the ends.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(FiveNumber {
            min: v[0],
            q1: quantile_sorted(&v, 0.25),
            median: quantile_sorted(&v, 0.5),
            q3: quantile_sorted(&v, 0.75),
            max: v[v.len() - 1],
        })
    }
}

/// Aggregate test Fit% of one kernel over all successful runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSummary {
    pub kernel: KernelKind,
    pub successful_runs: usize,
    pub failed_runs: usize,
    pub test_fit: Option<FiveNumber>,
}

pub fn summarize(records: &[RunRecord], kernels: &[KernelKind]) -> Vec<KernelSummary> {
    kernels
        .iter()
        .map(|&kernel| {
            let mine: Vec<&RunRecord> = records.iter().filter(|r| r.kernel == kernel).collect();
            let fits: Vec<f64> = mine.iter().filter_map(|r| r.test_fit).collect();
            KernelSummary {
                kernel,
                successful_runs: fits.len(),
                failed_runs: mine.len() - fits.len(),
                test_fit: FiveNumber::of(&fits),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_number_interpolates() {
        let f = FiveNumber::of(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((f.min, f.q1, f.median, f.q3, f.max), (1.0, 1.75, 2.5, 3.25, 4.0));
        let f = FiveNumber::of(&[7.0]).unwrap();
        assert_eq!(f.median, 7.0);
        assert!(FiveNumber::of(&[]).is_none());
    }
}
