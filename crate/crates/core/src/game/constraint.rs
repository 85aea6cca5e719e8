use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};

/// Per-agent constraint function `g_i(a) ≤ 0` acting on the full decision vector.
pub trait ConstraintFunction: Send + Sync {
    /// Number of constraints `m_i`.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Length of the full decision vector the function acts on.
    fn n_vars(&self) -> usize;

    fn value(&self, a: &DVector<f64>) -> DVector<f64>;

    /// Full Jacobian `∇_a g_i(a)` (`m_i × n`); per-agent blocks are column slices.
    fn jacobian(&self, a: &DVector<f64>) -> DMatrix<f64>;

    /// `Σ_c λ_c ∇²g_c(a)` (`n × n`); `None` when unavailable.
    fn weighted_hessian(&self, a: &DVector<f64>, lambda: &DVector<f64>) -> Option<DMatrix<f64>>;

    /// Data-level representation used for commonality checks and file export.
    fn rows(&self) -> Option<&[ConstraintRow]> {
        None
    }
}

/// One constraint `½ aᵀ P a + rᵀ a − s ≤ 0`; `P` absent for linear rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRow {
    pub quad: Option<DMatrix<f64>>,
    pub linear: DVector<f64>,
    pub rhs: f64,
}

impl ConstraintRow {
    pub fn linear(linear: DVector<f64>, rhs: f64) -> Self {
        ConstraintRow {
            quad: None,
            linear,
            rhs,
        }
    }
}

/// Linear and convex-quadratic constraint rows with analytic derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticConstraints {
    n: usize,
    rows: Vec<ConstraintRow>,
}

impl QuadraticConstraints {
    pub fn new(n: usize, rows: Vec<ConstraintRow>) -> Result<Self> {
        for (c, row) in rows.iter().enumerate() {
            check_len("constraint row", n, row.linear.len())?;
            if let Some(p) = &row.quad {
                if p.shape() != (n, n) {
                    return Err(Error::InvalidInput(format!(
                        "constraint {c}: quadratic term has shape {:?}, expected ({n}, {n})",
                        p.shape()
                    )));
                }
            }
            let finite = row.rhs.is_finite()
                && row.linear.iter().all(|v| v.is_finite())
                && row.quad.iter().flat_map(|p| p.iter()).all(|v| v.is_finite());
            if !finite {
                return Err(Error::InvalidInput(format!("constraint {c} has non-finite data")));
            }
        }
        let rows = rows
            .into_iter()
            .map(|mut r| {
                r.quad = r.quad.map(|p| (&p + p.transpose()) * 0.5);
                r
            })
            .collect();
        Ok(QuadraticConstraints { n, rows })
    }

    /// Rows of `a_mat · a ≤ b`.
    pub fn linear(a_mat: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        check_len("constraint right-hand side", a_mat.nrows(), b.len())?;
        let rows = (0..a_mat.nrows())
            .map(|r| ConstraintRow::linear(a_mat.row(r).transpose(), b[r]))
            .collect();
        Self::new(a_mat.ncols(), rows)
    }

    pub fn empty(n: usize) -> Self {
        QuadraticConstraints { n, rows: Vec::new() }
    }

    pub fn is_linear(&self) -> bool {
        self.rows.iter().all(|r| r.quad.is_none())
    }
}

impl ConstraintFunction for QuadraticConstraints {
    fn len(&self) -> usize {
        self.rows.len()
    }

    fn n_vars(&self) -> usize {
        self.n
    }

    fn value(&self, a: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.rows.len(),
            self.rows.iter().map(|r| {
                let quad = r.quad.as_ref().map_or(0.0, |p| 0.5 * a.dot(&(p * a)));
                quad + r.linear.dot(a) - r.rhs
            }),
        )
    }

    fn jacobian(&self, a: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.rows.len(), self.n);
        for (c, r) in self.rows.iter().enumerate() {
            let mut grad = r.linear.clone();
            if let Some(p) = &r.quad {
                grad += p * a;
            }
            j.row_mut(c).copy_from(&grad.transpose());
        }
        j
    }

    fn weighted_hessian(&self, _a: &DVector<f64>, lambda: &DVector<f64>) -> Option<DMatrix<f64>> {
        let mut h = DMatrix::zeros(self.n, self.n);
        for (r, l) in self.rows.iter().zip(lambda.iter()) {
            if let Some(p) = &r.quad {
                h += p * *l;
            }
        }
        Some(h)
    }

    fn rows(&self) -> Option<&[ConstraintRow]> {
        Some(&self.rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_rows_value_and_jacobian() {
        let g = QuadraticConstraints::linear(
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_vec(vec![1.0]),
        )
        .unwrap();
        let a = DVector::from_vec(vec![0.25, 0.5]);
        assert!((g.value(&a)[0] + 0.25).abs() < 1e-15);
        assert_eq!(g.jacobian(&a), DMatrix::from_row_slice(1, 2, &[1.0, 1.0]));
        assert_eq!(g.weighted_hessian(&a, &DVector::from_vec(vec![3.0])).unwrap().norm(), 0.0);
    }

    #[test]
    fn quadratic_row_derivatives() {
        // ‖a‖² ≤ 1 written as ½ aᵀ(2I)a − 1
        let g = QuadraticConstraints::new(
            2,
            vec![ConstraintRow {
                quad: Some(DMatrix::identity(2, 2) * 2.0),
                linear: DVector::zeros(2),
                rhs: 1.0,
            }],
        )
        .unwrap();
        let a = DVector::from_vec(vec![0.6, 0.8]);
        assert!(g.value(&a)[0].abs() < 1e-15);
        let j = g.jacobian(&a);
        assert!((j[(0, 0)] - 1.2).abs() < 1e-15 && (j[(0, 1)] - 1.6).abs() < 1e-15);
        let h = g.weighted_hessian(&a, &DVector::from_vec(vec![0.5])).unwrap();
        assert_eq!(h, DMatrix::identity(2, 2));
    }

    #[test]
    fn wrong_row_length_is_rejected() {
        let r = QuadraticConstraints::new(3, vec![ConstraintRow::linear(DVector::zeros(2), 0.0)]);
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }
}
