use nalgebra::{DMatrix, DVector};

use super::{natural_map_residual, AffineViProblem, ViSolution, ViStatus};
use crate::error::{Error, Result};
use crate::linalg::solve_lu_checked;

/// Largest dimension accepted by [`enumerate_active_set_solution`].
pub const MAX_ENUMERATION_DIM: usize = 12;

const FEAS_TOL: f64 = 1e-9;
const DEDUP_TOL: f64 = 1e-8;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Pattern {
    Lower,
    Free,
    Upper,
}

/// Brute-force oracle for box-constrained affine VIs: tries every
/// {at-lower, free, at-upper} pattern, solves the reduced linear system on the
/// free coordinates and keeps the sign-consistent candidates.
///
/// Patterns whose reduced matrix is singular are skipped.
pub fn enumerate_active_set_solution(p: &AffineViProblem) -> Result<ViSolution> {
    let n = p.dim();
    if !p.set.is_box() {
        return Err(Error::Unsupported("active-set enumeration requires box sets".into()));
    }
    if n > MAX_ENUMERATION_DIM {
        return Err(Error::InvalidInput(format!(
            "active-set enumeration is limited to dimension {MAX_ENUMERATION_DIM}, got {n}"
        )));
    }
    let (lower, upper) = p.set.bounds();
    let options: Vec<Vec<Pattern>> = (0..n)
        .map(|i| {
            let mut o = Vec::with_capacity(3);
            if lower[i].is_finite() {
                o.push(Pattern::Lower);
            }
            if lower[i] < upper[i] {
                o.push(Pattern::Free);
            }
            if upper[i].is_finite() && upper[i] > lower[i] {
                o.push(Pattern::Upper);
            }
            o
        })
        .collect();

    let scale = p.m.amax().max(p.q.amax()).max(1.0);
    let mut found: Vec<DVector<f64>> = Vec::new();
    let mut idx = vec![0usize; n];
    loop {
        let pattern: Vec<Pattern> = (0..n).map(|i| options[i][idx[i]]).collect();
        if let Some(a) = try_pattern(p, &lower, &upper, &pattern, scale) {
            if !found.iter().any(|b| (b - &a).amax() <= DEDUP_TOL) {
                found.push(a);
            }
        }
        let mut k = 0;
        while k < n {
            idx[k] += 1;
            if idx[k] < options[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == n {
            break;
        }
    }

    match found.len() {
        0 => Err(Error::NoSolution),
        1 => {
            let a = found.pop().expect("one solution");
            let residual = natural_map_residual(p, &a);
            Ok(ViSolution {
                a,
                multipliers: DVector::zeros(0),
                residual,
                status: ViStatus::Converged,
                iterations: 0,
                used_fallback: false,
            })
        }
        _ => Err(Error::MultipleSolutions(found)),
    }
}

fn try_pattern(
    p: &AffineViProblem,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    pattern: &[Pattern],
    scale: f64,
) -> Option<DVector<f64>> {
    let n = p.dim();
    let free: Vec<usize> = (0..n).filter(|&i| pattern[i] == Pattern::Free).collect();
    let mut a = DVector::zeros(n);
    for i in 0..n {
        match pattern[i] {
            Pattern::Lower => a[i] = lower[i],
            Pattern::Upper => a[i] = upper[i],
            Pattern::Free => {}
        }
    }
    if !free.is_empty() {
        // M_FF a_F = −(q_F + M_FB a_B)
        let k = free.len();
        let m_ff = DMatrix::from_fn(k, k, |r, c| p.m[(free[r], free[c])]);
        let w = p.map(&a);
        let rhs = DVector::from_fn(k, |r, _| -w[free[r]]);
        let a_f = solve_lu_checked(&m_ff, &rhs)?;
        for (r, &i) in free.iter().enumerate() {
            a[i] = a_f[r];
        }
    }
    let tol = FEAS_TOL * scale.max(a.amax());
    let w = p.map(&a);
    let ok = (0..n).all(|i| match pattern[i] {
        Pattern::Free => a[i] >= lower[i] - tol && a[i] <= upper[i] + tol && w[i].abs() <= tol,
        Pattern::Lower => w[i] >= -tol,
        Pattern::Upper => w[i] <= tol,
    });
    ok.then_some(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vi::{solve_affine_vi, ViConfig};

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn scalar_sign_cases() {
        for (q, expected) in [(1.0, 0.0), (-1.0, 1.0)] {
            let p = AffineViProblem::boxed(DMatrix::zeros(1, 1), v(&[q]), v(&[0.0]), v(&[1.0])).unwrap();
            assert_eq!(enumerate_active_set_solution(&p).unwrap().a[0], expected);
        }
    }

    #[test]
    fn upper_corner_solution() {
        let p = AffineViProblem::boxed(
            DMatrix::identity(2, 2) * 2.0,
            v(&[-2.0, -2.0]),
            DVector::zeros(2),
            DVector::from_element(2, 0.5),
        )
        .unwrap();
        let s = enumerate_active_set_solution(&p).unwrap();
        assert_eq!(s.a, v(&[0.5, 0.5]));
    }

    #[test]
    fn indefinite_orthant_matrix_agrees_with_solver() {
        let p = AffineViProblem::boxed(
            DMatrix::from_row_slice(2, 2, &[1.0, -3.0, 1.0, 0.0]),
            v(&[1.0, -0.5]),
            DVector::zeros(2),
            DVector::from_element(2, 10.0),
        )
        .unwrap();
        let e = enumerate_active_set_solution(&p).unwrap();
        let s = solve_affine_vi(&p, &DVector::zeros(2), &ViConfig::default()).unwrap();
        assert!(s.converged());
        assert!((e.a - s.a).norm() < 1e-9);
    }

    #[test]
    fn zero_problem_on_box_reports_multiple_solutions() {
        // M = 0, q = 0: every point of the box solves; the vertices are distinct candidates.
        let p = AffineViProblem::boxed(DMatrix::zeros(1, 1), v(&[0.0]), v(&[0.0]), v(&[1.0])).unwrap();
        match enumerate_active_set_solution(&p) {
            Err(Error::MultipleSolutions(s)) => assert_eq!(s.len(), 2),
            r => panic!("unexpected {r:?}"),
        }
    }

    #[test]
    fn no_solution_reported() {
        let p = AffineViProblem::boxed(
            DMatrix::zeros(1, 1),
            v(&[-1.0]),
            v(&[0.0]),
            v(&[f64::INFINITY]),
        )
        .unwrap();
        assert!(matches!(enumerate_active_set_solution(&p), Err(Error::NoSolution)));
    }
}
