//! Small linear-algebra helpers: Thomas elimination and dense LU with a
//! condition estimate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solves the tridiagonal system with sub-diagonal `sub` (`sub[0]` unused),
/// diagonal `diag` and super-diagonal `sup` (`sup[n-1]` unused).
pub fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = rhs.len();
    if n == 0 || sub.len() != n || diag.len() != n || sup.len() != n {
        return Err(Error::InvalidArgument(
            "tridiagonal system with inconsistent sizes".into(),
        ));
    }
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![0.0; n];
    if diag[0] == 0.0 {
        return Err(Error::IllConditioned {
            condition: f64::INFINITY,
            context: "zero pivot in tridiagonal elimination at row 0".into(),
        });
    }
    c_prime[0] = sup[0] / diag[0];
    d_prime[0] = rhs[0] / diag[0];
    for i in 1..n {
        let den = diag[i] - sub[i] * c_prime[i - 1];
        if den == 0.0 || !den.is_finite() {
            return Err(Error::IllConditioned {
                condition: f64::INFINITY,
                context: format!("zero pivot in tridiagonal elimination at row {i}"),
            });
        }
        if i + 1 < n {
            c_prime[i] = sup[i] / den;
        }
        d_prime[i] = (rhs[i] - sub[i] * d_prime[i - 1]) / den;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d_prime[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d_prime[i] - c_prime[i] * x[i + 1];
    }
    Ok(x)
}

/// LU factorization of a small dense matrix, kept for repeated solves.
#[derive(Debug, Clone)]
pub struct DenseLu {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    /// `‖A‖₁ ‖A⁻¹‖₁`.
    pub condition: f64,
}

impl DenseLu {
    /// Factorizes `a`; fails when the 1-norm condition number exceeds `max_condition`.
    pub fn new(a: DMatrix<f64>, max_condition: f64, context: &str) -> Result<Self> {
        let norm_a = one_norm(&a);
        let lu = a.lu();
        let inv = lu.try_inverse().ok_or_else(|| Error::IllConditioned {
            condition: f64::INFINITY,
            context: format!("{context}: singular matrix"),
        })?;
        let condition = norm_a * one_norm(&inv);
        if !condition.is_finite() || condition > max_condition {
            return Err(Error::IllConditioned {
                condition,
                context: context.to_string(),
            });
        }
        Ok(Self { lu, condition })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let b = DVector::from_column_slice(rhs);
        // The factorization was checked to be invertible.
        self.lu
            .solve(&b)
            .expect("LU factorization checked at construction")
            .as_slice()
            .to_vec()
    }
}

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thomas_matches_dense_solve() {
        let n = 7;
        let sub: Vec<f64> = (0..n).map(|i| -0.3 - 0.01 * i as f64).collect();
        let sup: Vec<f64> = (0..n).map(|i| -0.7 + 0.02 * i as f64).collect();
        let diag: Vec<f64> = (0..n).map(|i| 2.5 + 0.1 * i as f64).collect();
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = solve_tridiagonal(&sub, &diag, &sup, &rhs).unwrap();
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = diag[i];
            if i > 0 {
                a[(i, i - 1)] = sub[i];
            }
            if i + 1 < n {
                a[(i, i + 1)] = sup[i];
            }
        }
        let y = a.lu().solve(&DVector::from_vec(rhs)).unwrap();
        for i in 0..n {
            assert!((x[i] - y[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_tridiagonal_is_reported() {
        let r = solve_tridiagonal(&[0.0, 1.0], &[1.0, 1.0], &[1.0, 0.0], &[1.0, 1.0]);
        assert!(matches!(r, Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn dense_lu_rejects_near_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 + 1e-15]);
        assert!(DenseLu::new(a, 1e12, "test").is_err());
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let lu = DenseLu::new(a, 1e12, "test").unwrap();
        let x = lu.solve(&[3.0, 4.0]);
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }
}
