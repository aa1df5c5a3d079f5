//! Accuracy measures for estimated outputs.

use crate::error::{Error, Result};

fn check_lengths(z: &[f64], zhat: &[f64]) -> Result<()> {
    if z.len() != zhat.len() {
        return Err(Error::DimensionMismatch {
            expected: z.len(),
            found: zhat.len(),
        });
    }
    if z.is_empty() {
        return Err(Error::Empty);
    }
    Ok(())
}

/// `100 (1 - |z - zhat|_1 / |z - mean(z)|_1)`. Unbounded below.
pub fn fit_percent(z: &[f64], zhat: &[f64]) -> Result<f64> {
    check_lengths(z, zhat)?;
    if z.len() < 2 {
        return Err(Error::ConstantSignal);
    }
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    let spread: f64 = z.iter().map(|v| (v - mean).abs()).sum();
    if spread == 0.0 {
        return Err(Error::ConstantSignal);
    }
    let residual: f64 = z.iter().zip(zhat).map(|(a, b)| (a - b).abs()).sum();
    Ok(100.0 * (1.0 - residual / spread))
}

pub fn rmse(z: &[f64], zhat: &[f64]) -> Result<f64> {
    check_lengths(z, zhat)?;
    let sq: f64 = z.iter().zip(zhat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((sq / z.len() as f64).sqrt())
}

pub fn mse(z: &[f64], zhat: &[f64]) -> Result<f64> {
    rmse(z, zhat).map(|r| r * r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fit_examples() {
        let z = [1.0, -2.0, 4.0, 0.5];
        assert_eq!(fit_percent(&z, &z).unwrap(), 100.0);
        let mean = z.iter().sum::<f64>() / 4.0;
        assert!(fit_percent(&z, &[mean; 4]).unwrap().abs() < 1e-12);
        assert_eq!(fit_percent(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert!(fit_percent(&[0.0, 2.0], &[10.0, -10.0]).unwrap() < 0.0);
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(fit_percent(&[3.0, 3.0], &[1.0, 2.0]), Err(Error::ConstantSignal)));
        assert!(matches!(fit_percent(&[1.0, 2.0], &[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(rmse(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!(matches!(rmse(&[], &[]), Err(Error::Empty)));
    }

    proptest! {
        #[test]
        fn fit_shift_invariant(
            z in prop::collection::vec(-100.0f64..100.0, 3..20),
            noise in prop::collection::vec(-5.0f64..5.0, 20),
            c in -1e3f64..1e3,
        ) {
            prop_assume!(z.iter().any(|&v| (v - z[0]).abs() > 1e-3));
            let zhat: Vec<f64> = z.iter().zip(&noise).map(|(a, e)| a + e).collect();
            let a = fit_percent(&z, &zhat).unwrap();
            let zs: Vec<f64> = z.iter().map(|v| v + c).collect();
            let zhs: Vec<f64> = zhat.iter().map(|v| v + c).collect();
            let b = fit_percent(&zs, &zhs).unwrap();
            prop_assert!((a - b).abs() < 1e-6 * (1.0 + a.abs()));
        }
    }
}
