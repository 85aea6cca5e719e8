use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::CriticalCone;
use crate::error::{Error, Result};
use crate::linalg::{all_finite_matrix, inf_norm, symmetric_eigenvalues};

/// Lattice enumeration is only attempted up to this dimension.
const MAX_LATTICE_DIM: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub enum SemicopositivityVerdict {
    /// `witness` is a nonzero cone element with `max_i c_iᵀ(Hc)_i = value ≤ 0`.
    CertifiedViolated { witness: DVector<f64>, value: f64 },
    /// No violating direction among the checked candidates. A sampling
    /// certificate, not a proof.
    NoViolationFound {
        sampled: usize,
        enumerated: usize,
        /// Smallest `max_i c_iᵀ(Hc)_i` seen over normalized candidates.
        min_value: f64,
    },
}

impl SemicopositivityVerdict {
    pub fn is_violated(&self) -> bool {
        matches!(self, SemicopositivityVerdict::CertifiedViolated { .. })
    }
}

/// `max_i c_iᵀ (H c)_i` over the cone's agent blocks.
fn block_max(h: &DMatrix<f64>, c: &DVector<f64>, dims: &[usize]) -> f64 {
    let hc = h * c;
    let mut off = 0;
    let mut best = f64::NEG_INFINITY;
    for &d in dims {
        let v = c.rows(off, d).dot(&hc.rows(off, d));
        best = best.max(v);
        off += d;
    }
    best
}

/// Searches for a nonzero `c` in the cone with `max_i c_iᵀ(Hc)_i ≤ 0`.
///
/// Candidates are checked in a fixed order: unit vectors admitted by the cone,
/// the integer lattice `{-2,…,2}ⁿ` for coordinatewise cones with `n ≤ 6`, and
/// finally `n_samples` seeded random cone directions.
pub fn check_strict_semicopositivity(
    h: &DMatrix<f64>,
    cone: &CriticalCone,
    n_samples: usize,
    seed: u64,
) -> Result<SemicopositivityVerdict> {
    let n = cone.dim();
    if cone.agents.is_empty() || n == 0 {
        return Err(Error::InvalidInput("cone description is empty".into()));
    }
    if h.shape() != (n, n) {
        return Err(Error::InvalidInput(format!(
            "matrix shape {:?} does not match cone dimension {n}",
            h.shape()
        )));
    }
    if !all_finite_matrix(h) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let dims = cone.dims();
    let mut min_value = f64::INFINITY;
    let mut enumerated = 0;
    let mut sampled = 0;

    let check = |c: DVector<f64>, min_value: &mut f64| -> Option<SemicopositivityVerdict> {
        let norm = c.norm();
        if !(norm > 1e-12) {
            return None;
        }
        let c = c / norm;
        let value = block_max(h, &c, &dims);
        *min_value = min_value.min(value);
        (value <= 0.0).then_some(SemicopositivityVerdict::CertifiedViolated { witness: c, value })
    };

    for k in 0..n {
        for s in [1.0, -1.0] {
            let mut e = DVector::zeros(n);
            e[k] = s;
            if cone.contains(&e, 0.0) {
                enumerated += 1;
                if let Some(v) = check(e, &mut min_value) {
                    return Ok(v);
                }
            }
        }
    }

    if let Some(coords) = cone.coordinates().filter(|_| n <= MAX_LATTICE_DIM) {
        let levels: Vec<&[f64]> = coords.iter().map(|c| c.lattice()).collect();
        let mut idx = vec![0usize; n];
        loop {
            let c = DVector::from_fn(n, |k, _| levels[k][idx[k]]);
            enumerated += 1;
            if let Some(v) = check(c, &mut min_value) {
                return Ok(v);
            }
            let mut k = 0;
            while k < n {
                idx[k] += 1;
                if idx[k] < levels[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == n {
                break;
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_samples {
        let c = cone.sample(&mut rng);
        sampled += 1;
        if let Some(v) = check(c, &mut min_value) {
            return Ok(v);
        }
    }

    Ok(SemicopositivityVerdict::NoViolationFound {
        sampled,
        enumerated,
        min_value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonotonicityClass {
    /// Symmetric part positive definite: strictly (strongly) monotone.
    PositiveDefinite,
    /// Symmetric part positive semidefinite: monotone.
    PositiveSemidefinite,
    Indefinite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityVerdict {
    pub class: MonotonicityClass,
    pub min_eigenvalue: f64,
}

/// Classifies `H` by the eigenvalues of `(H + Hᵀ)/2`, with tolerance
/// `1e-10 · max(1, ‖H‖∞)`.
pub fn check_monotonicity(h: &DMatrix<f64>) -> Result<MonotonicityVerdict> {
    if !h.is_square() {
        return Err(Error::InvalidInput(format!("matrix shape {:?} is not square", h.shape())));
    }
    if !all_finite_matrix(h) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let tol = 1e-10 * inf_norm(h).max(1.0);
    let min_eigenvalue = symmetric_eigenvalues(h).first().copied().unwrap_or(0.0);
    let class = if min_eigenvalue > tol {
        MonotonicityClass::PositiveDefinite
    } else if min_eigenvalue >= -tol {
        MonotonicityClass::PositiveSemidefinite
    } else {
        MonotonicityClass::Indefinite
    };
    Ok(MonotonicityVerdict {
        class,
        min_eigenvalue,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{AgentCone, CoordCone};

    fn indefinite_orthant() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[1.0, -3.0, 1.0, 0.0])
    }

    #[test]
    fn indefinite_orthant_is_indefinite() {
        let v = check_monotonicity(&indefinite_orthant()).unwrap();
        assert_eq!(v.class, MonotonicityClass::Indefinite);
        assert!((v.min_eigenvalue - (1.0 - 5f64.sqrt()) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn indefinite_orthant_strictly_semicopositive_on_open_orthant() {
        let cone = CriticalCone::orthant(2, CoordCone::Positive);
        let v = check_strict_semicopositivity(&indefinite_orthant(), &cone, 10_000, 1).unwrap();
        assert!(!v.is_violated(), "{v:?}");
    }

    #[test]
    fn indefinite_orthant_closed_orthant_boundary_is_a_violation() {
        // c = (0, 1) gives c_1(Hc)_1 = c_2(Hc)_2 = 0.
        let cone = CriticalCone::orthant(2, CoordCone::Nonnegative);
        match check_strict_semicopositivity(&indefinite_orthant(), &cone, 100, 1).unwrap() {
            SemicopositivityVerdict::CertifiedViolated { witness, value } => {
                assert_eq!(value, 0.0);
                assert_eq!(witness.as_slice(), &[0.0, 1.0]);
            }
            v => panic!("expected violation, got {v:?}"),
        }
    }

    #[test]
    fn identity_passes_on_any_cone() {
        let cone = CriticalCone::new(vec![
            AgentCone::full(2),
            AgentCone::polyhedral(DMatrix::from_row_slice(1, 1, &[1.0]), DMatrix::zeros(0, 1)).unwrap(),
        ]);
        let v = check_strict_semicopositivity(&DMatrix::identity(3, 3), &cone, 1000, 2).unwrap();
        assert!(!v.is_violated());
    }

    #[test]
    fn negative_identity_violated_with_first_unit_vector() {
        let cone = CriticalCone::orthant(2, CoordCone::Nonnegative);
        match check_strict_semicopositivity(&(-DMatrix::<f64>::identity(2, 2)), &cone, 10, 0).unwrap() {
            SemicopositivityVerdict::CertifiedViolated { witness, value } => {
                assert_eq!(witness.as_slice(), &[1.0, 0.0]);
                // the second block contributes 0, so the max is 0 rather than -1
                assert_eq!(value, 0.0);
            }
            v => panic!("expected violation, got {v:?}"),
        }
    }

    #[test]
    fn empty_cone_is_an_input_error() {
        let r = check_strict_semicopositivity(&DMatrix::zeros(0, 0), &CriticalCone::new(vec![]), 10, 0);
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn identity_is_positive_definite() {
        let v = check_monotonicity(&DMatrix::identity(4, 4)).unwrap();
        assert_eq!(v.class, MonotonicityClass::PositiveDefinite);
    }

    #[test]
    fn gram_matrix_is_psd() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 2.0]);
        let v = check_monotonicity(&(a.transpose() * &a)).unwrap();
        assert_eq!(v.class, MonotonicityClass::PositiveSemidefinite);
    }

    #[test]
    fn non_finite_matrix_is_rejected() {
        let h = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        assert!(check_monotonicity(&h).is_err());
    }
}
