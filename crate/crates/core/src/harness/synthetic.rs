//! Seeded synthetic regression datasets.
//!
//! - `friedman1`: ten uniform features, five of them informative,
//!   `y = 10 sin(pi x0 x1) + 20 (x2 - 0.5)^2 + 10 x3 + 5 x4 + N(0, 1)`.
//! - `linear8`: eight standard-normal features, fixed weights, noise sd 0.5.
//! - `clusters2`: a `regime` column (0 or 1) and six features; regime 1
//!   moves `x0` and `x1` by four standard deviations and changes the slope.
//!   Splitting on `regime` gives natural covariate shift.
//! - `stores5`: a store-sales table with five features.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::HarnessError;
use crate::data::{Dataset, Matrix, RngSeed};

pub const GENERATORS: [&str; 4] = ["friedman1", "linear8", "clusters2", "stores5"];

pub const LINEAR8_WEIGHTS: [f64; 8] = [3.0, -2.0, 1.5, 1.0, -0.5, 0.25, 0.0, 0.0];
pub const LINEAR8_INTERCEPT: f64 = 5.0;
/// Offset of the regime-defining features between the two regimes.
pub const CLUSTERS2_SHIFT: f64 = 4.0;

pub fn is_generator(name: &str) -> bool {
    GENERATORS.contains(&name)
}

pub fn generate_synthetic(name: &str, n: usize, seed: RngSeed) -> Result<Dataset, HarnessError> {
    if n == 0 {
        return Err(HarnessError::Config("synthetic datasets need at least one row".into()));
    }
    let mut rng = seed.rng();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let unit = Uniform::new(0.0, 1.0).expect("unit interval");
    let (names, rows, targets): (Vec<String>, Vec<Vec<f64>>, Vec<f64>) = match name {
        "friedman1" => {
            let mut rows = Vec::with_capacity(n);
            let mut ys = Vec::with_capacity(n);
            for _ in 0..n {
                let x: Vec<f64> = (0..10).map(|_| unit.sample(&mut rng)).collect();
                let y = 10.0 * (std::f64::consts::PI * x[0] * x[1]).sin()
                    + 20.0 * (x[2] - 0.5).powi(2)
                    + 10.0 * x[3]
                    + 5.0 * x[4]
                    + normal.sample(&mut rng);
                rows.push(x);
                ys.push(y);
            }
            (numbered("x", 10), rows, ys)
        }
        "linear8" => {
            let mut rows = Vec::with_capacity(n);
            let mut ys = Vec::with_capacity(n);
            for _ in 0..n {
                let x: Vec<f64> = (0..8).map(|_| normal.sample(&mut rng)).collect();
                let y = LINEAR8_INTERCEPT
                    + x.iter().zip(LINEAR8_WEIGHTS).map(|(a, w)| a * w).sum::<f64>()
                    + 0.5 * normal.sample(&mut rng);
                rows.push(x);
                ys.push(y);
            }
            (numbered("x", 8), rows, ys)
        }
        "clusters2" => {
            let mut rows = Vec::with_capacity(n);
            let mut ys = Vec::with_capacity(n);
            for _ in 0..n {
                let regime = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
                let mut x: Vec<f64> = (0..6).map(|_| normal.sample(&mut rng)).collect();
                x[0] += CLUSTERS2_SHIFT * regime;
                x[1] += CLUSTERS2_SHIFT * regime;
                let slope = if regime == 1.0 { -1.5 } else { 2.0 };
                let y = slope * x[0] + x[1] + (2.0 * x[2]).sin() + 0.5 * x[3] * x[4]
                    + 3.0 * regime
                    + 0.3 * normal.sample(&mut rng);
                let mut row = vec![regime];
                row.extend(x);
                rows.push(row);
                ys.push(y);
            }
            let mut names = vec!["regime".to_string()];
            names.extend(numbered("x", 6));
            (names, rows, ys)
        }
        "stores5" => {
            let size = Uniform::new(50.0, 500.0).expect("range");
            let advertising = Uniform::new(0.0, 20.0).expect("range");
            let price = Uniform::new(0.8, 1.2).expect("range");
            let mut rows = Vec::with_capacity(n);
            let mut ys = Vec::with_capacity(n);
            for _ in 0..n {
                let s = size.sample(&mut rng);
                let a = advertising.sample(&mut rng);
                let f = (1000.0 + 200.0 * normal.sample(&mut rng)).max(0.0);
                let c = f64::from(rng.random_range(0u8..=5));
                let p = price.sample(&mut rng);
                let y = 2.0 * s + 15.0 * a + 0.3 * f - 40.0 * c - 800.0 * (p - 1.0) + 30.0 * normal.sample(&mut rng);
                rows.push(vec![s, a, f, c, p]);
                ys.push(y);
            }
            let names = ["store_size", "advertising", "footfall", "competitors", "price_index"]
                .map(String::from)
                .to_vec();
            (names, rows, ys)
        }
        other => return Err(HarnessError::UnknownGenerator(other.to_string())),
    };
    let target = if name == "stores5" { "sales" } else { "y" };
    Ok(Dataset::new(name, names, target, Matrix::from_rows(&rows)?, targets)?)
}

fn numbered(prefix: &str, d: usize) -> Vec<String> {
    (0..d).map(|j| format!("{prefix}{j}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{split, SplitSpec};

    #[test]
    fn shapes() {
        let widths = [10, 8, 7, 5];
        for (name, d) in GENERATORS.iter().zip(widths) {
            let ds = generate_synthetic(name, 50, RngSeed(1)).unwrap();
            assert_eq!((ds.n_rows(), ds.n_features()), (50, d), "{name}");
            assert!(ds.features.is_finite());
        }
    }

    #[test]
    fn same_seed_same_data() {
        for name in GENERATORS {
            let a = generate_synthetic(name, 30, RngSeed(9)).unwrap();
            assert_eq!(a, generate_synthetic(name, 30, RngSeed(9)).unwrap());
            assert_ne!(a, generate_synthetic(name, 30, RngSeed(10)).unwrap());
        }
    }

    #[test]
    fn unknown_name() {
        assert!(matches!(
            generate_synthetic("iris", 10, RngSeed(0)),
            Err(HarnessError::UnknownGenerator(_))
        ));
    }

    #[test]
    fn regime_split_separates_means() {
        let ds = generate_synthetic("clusters2", 2000, RngSeed(3)).unwrap();
        let spec = SplitSpec::ByColumnValue {
            column: "regime".into(),
            value: 0.0,
        };
        let (train, test) = split(&ds, &spec).unwrap();
        for name in ["x0", "x1"] {
            let j = ds.feature_index(name).unwrap();
            let (a, b) = (train.features.column(j), test.features.column(j));
            let m = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let var = |v: &[f64]| {
                let mu = m(v);
                v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / v.len() as f64
            };
            let pooled = ((var(&a) + var(&b)) / 2.0).sqrt();
            assert!((m(&b) - m(&a)).abs() >= 2.0 * pooled, "{name}");
        }
    }
}
