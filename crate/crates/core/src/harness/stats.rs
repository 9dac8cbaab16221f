//! Summary statistics used by the experiment tables.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least two paired values, got {0}")]
    TooShort(usize),
    #[error("series is constant; correlation undefined")]
    Constant,
    #[error("series contains non-finite values")]
    NonFinite,
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> Option<f64> {
    let m = mean(values)?;
    Some((values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64).sqrt())
}

/// Pearson product-moment correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(StatsError::TooShort(a.len()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let ma = mean(a).expect("non-empty");
    let mb = mean(b).expect("non-empty");
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(StatsError::Constant);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

pub fn mse(predictions: &[f64], truth: &[f64]) -> f64 {
    predictions.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / truth.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_cases() {
        assert!((pearson(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).unwrap() - 0.6).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 7.5], &[1.0, 2.0, 7.5]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 5.0], &[-1.0, -2.0, -5.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(StatsError::Constant));
        assert_eq!(pearson(&[1.0], &[1.0]), Err(StatsError::TooShort(1)));
        assert_eq!(pearson(&[1.0, 2.0], &[1.0]), Err(StatsError::LengthMismatch(2, 1)));
    }

    #[test]
    fn moments() {
        assert_eq!(mean(&[]), None);
        assert_eq!(std_dev(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]), Some(2.0));
    }

    fn series() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (3usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec(-100.0..100.0f64, n),
                prop::collection::vec(-100.0..100.0f64, n),
            )
        })
    }

    proptest! {
        #[test]
        fn symmetric_bounded_affine_invariant((a, b) in series(), scale in 0.01..50.0f64, shift in -20.0..20.0f64) {
            let Ok(r) = pearson(&a, &b) else { return Ok(()) };
            prop_assert!((-1.0..=1.0).contains(&r));
            prop_assert_eq!(r, pearson(&b, &a).unwrap());
            let moved: Vec<f64> = a.iter().map(|v| scale * v + shift).collect();
            prop_assert!((pearson(&moved, &b).unwrap() - r).abs() < 1e-9);
        }
    }
}
