use nalgebra::DVector;

use super::AffineViProblem;
use crate::error::{check_len, Error, Result};

/// Outcome of checking the defining inequality on a grid of the box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridVerdict {
    /// `min_{a'} (a' − a)ᵀ(q + M a)` over the grid.
    pub min_value: f64,
    pub points: usize,
}

impl GridVerdict {
    pub fn holds(&self, tol: f64) -> bool {
        self.min_value >= -tol
    }
}

/// Evaluates `(a' − a)ᵀ(q + M a)` on a tensor grid with `per_dim` points per
/// coordinate (box corners included). Requires a bounded box and at most
/// `10⁶` grid points.
pub fn grid_check(p: &AffineViProblem, a: &DVector<f64>, per_dim: usize) -> Result<GridVerdict> {
    check_len("grid check point", p.dim(), a.len())?;
    if !p.set.is_box() {
        return Err(Error::Unsupported("grid check requires box sets".into()));
    }
    let (lower, upper) = p.set.bounds();
    if !lower.iter().chain(upper.iter()).all(|v| v.is_finite()) {
        return Err(Error::Unsupported("grid check requires a bounded box".into()));
    }
    let n = p.dim();
    let per_dim = per_dim.max(2);
    let total = (per_dim as f64).powi(n as i32);
    if total > 1e6 {
        return Err(Error::InvalidInput(format!("grid of {total} points is too large")));
    }
    let w = p.map(a);
    let mut idx = vec![0usize; n];
    let mut min_value = f64::INFINITY;
    let mut points = 0;
    loop {
        let mut val = 0.0;
        for k in 0..n {
            let t = idx[k] as f64 / (per_dim - 1) as f64;
            let x = lower[k] + t * (upper[k] - lower[k]);
            val += (x - a[k]) * w[k];
        }
        min_value = min_value.min(val);
        points += 1;
        let mut k = 0;
        while k < n {
            idx[k] += 1;
            if idx[k] < per_dim {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == n {
            break;
        }
    }
    Ok(GridVerdict { min_value, points })
}
