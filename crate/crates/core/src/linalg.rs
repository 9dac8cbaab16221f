//! Dense symmetric positive-definite solves.

use crate::data::Matrix;

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    n: usize,
    lower: Vec<f64>,
}

/// Pivots at or below this fraction of the largest diagonal entry are
/// treated as a loss of positive definiteness.
const PIVOT_TOLERANCE: f64 = 1e-14;

impl Cholesky {
    /// Factorizes a square symmetric matrix, reading only its lower triangle.
    /// Returns `None` when the matrix is not numerically positive definite.
    pub fn factor(a: &Matrix) -> Option<Cholesky> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "cholesky needs a square matrix");
        let max_diag = (0..n).map(|i| a.get(i, i).abs()).fold(0.0, f64::max);
        let floor = PIVOT_TOLERANCE * max_diag.max(f64::MIN_POSITIVE);
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let row_j = j * n;
            let mut diag = a.get(j, j);
            for k in 0..j {
                diag -= l[row_j + k] * l[row_j + k];
            }
            if !(diag > floor) {
                return None;
            }
            let d = diag.sqrt();
            l[row_j + j] = d;
            for i in j + 1..n {
                let row_i = i * n;
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l[row_i + k] * l[row_j + k];
                }
                l[row_i + j] = s / d;
            }
        }
        Some(Cholesky { n, lower: l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let l = &self.lower;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l[k * n + i] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_spd_system() {
        let a = Matrix::from_rows(&[[4.0, 2.0], [2.0, 3.0]]).unwrap();
        let chol = Cholesky::factor(&a).unwrap();
        let x = chol.solve(&[2.0, 1.0]);
        // 4x + 2y = 2, 2x + 3y = 1  =>  x = 0.5, y = 0
        assert!((x[0] - 0.5).abs() < 1e-15);
        assert!(x[1].abs() < 1e-15);
    }

    #[test]
    fn rejects_singular_and_indefinite() {
        let singular = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert!(Cholesky::factor(&singular).is_none());
        let indefinite = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(Cholesky::factor(&indefinite).is_none());
    }
}
