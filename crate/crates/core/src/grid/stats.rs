//! Mean, population standard deviation, Pearson correlation and unit normalization.
//!
//! Standard deviations use the population convention (divide by `n`).

use crate::error::{Error, Result};

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn population_std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Pearson correlation coefficient, clamped to `[-1, 1]`.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("pearson of lengths {} and {}", a.len(), b.len())));
    }
    if a.len() < 3 {
        return Err(Error::InvalidInput(format!("pearson needs at least 3 samples, got {}", a.len())));
    }
    let ma = mean(a);
    let mb = mean(b);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    // Relative floor so constant vectors with rounding noise still count as degenerate.
    let floor_a = f64::EPSILON * a.len() as f64 * ma.abs().max(f64::MIN_POSITIVE);
    let floor_b = f64::EPSILON * b.len() as f64 * mb.abs().max(f64::MIN_POSITIVE);
    if saa.sqrt() <= floor_a || saa == 0.0 || sbb.sqrt() <= floor_b || sbb == 0.0 {
        return Err(Error::Degenerate("zero variance".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Shifts to zero mean and scales to unit population standard deviation.
pub fn normalize_unit(v: &[f64]) -> Result<Vec<f64>> {
    if v.len() < 2 {
        return Err(Error::InvalidInput("normalize_unit needs at least 2 values".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite value".into()));
    }
    let m = mean(v);
    let sd = population_std(v);
    if sd <= f64::EPSILON * m.abs().max(f64::MIN_POSITIVE) * v.len() as f64 || sd == 0.0 {
        return Err(Error::Degenerate("zero variance".into()));
    }
    Ok(v.iter().map(|x| (x - m) / sd).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pearson_of_identical_and_negated() {
        let v = [0.3, -1.2, 4.0, 2.2, 0.0];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert!((pearson(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&v, &neg).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn pearson_small_example_matches_hand_computation() {
        // means 2 and 7/3; cov sum = 3, var sums 2 and 14/3
        let expected = 3.0 / (2.0f64 * 14.0 / 3.0).sqrt();
        let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        assert!((r - expected).abs() < 1e-12);
        assert!((r - 0.98198).abs() < 1e-5);
    }

    #[test]
    fn pearson_errors() {
        assert!(matches!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::Degenerate(_))));
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::InvalidInput(_))));
        assert!(matches!(pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn normalize_example() {
        let out = normalize_unit(&[1.0, 2.0, 3.0]).unwrap();
        let k = (1.5f64).sqrt();
        for (a, b) in out.iter().zip([-k, 0.0, k]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(normalize_unit(&[4.0; 5]), Err(Error::Degenerate(_))));
    }

    proptest! {
        #[test]
        fn pearson_is_invariant_under_positive_affine_maps(
            a in prop::collection::vec(-10.0f64..10.0, 8..64),
            seed in any::<u64>(),
            s in 0.01f64..100.0,
            t in -50.0f64..50.0,
        ) {
            let b: Vec<f64> = a.iter().enumerate()
                .map(|(i, x)| x * 0.5 + ((i as u64).wrapping_mul(seed | 1) % 97) as f64 / 13.0)
                .collect();
            prop_assume!(population_std(&a) > 1e-3 && population_std(&b) > 1e-3);
            let r = pearson(&a, &b).unwrap();
            let mapped: Vec<f64> = b.iter().map(|x| s * x + t).collect();
            let r2 = pearson(&a, &mapped).unwrap();
            prop_assert!((r - r2).abs() <= 1e-12);
        }

        #[test]
        fn normalize_is_idempotent_and_standardizes(v in prop::collection::vec(-1e3f64..1e3, 2..200)) {
            prop_assume!(population_std(&v) > 1e-6);
            let once = normalize_unit(&v).unwrap();
            prop_assert!(mean(&once).abs() < 1e-9);
            prop_assert!((population_std(&once) - 1.0).abs() < 1e-9);
            let twice = normalize_unit(&once).unwrap();
            for (x, y) in once.iter().zip(&twice) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
