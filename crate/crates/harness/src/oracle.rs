//! Brute-force oracles used to cross-check solver output.

use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::Mutex;

use nash_newton::game::fd::{check_game_hessian, check_pseudogradient};
use nash_newton::game::{analytic_shared_gne, quartic_test_game, GameProblem, QUARTIC_TEST_EQUILIBRIUM};
use nash_newton::kkt::{assemble_phi, PrimalDualPoint};
use nash_newton::vi::{enumerate_active_set_solution, grid_check, AffineViProblem};
use nash_newton::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OracleId {
    ActiveSetEnumeration,
    FiniteDifference,
    GridVi,
    AnalyticGne,
}

impl OracleId {
    pub const ALL: [OracleId; 4] = [
        OracleId::ActiveSetEnumeration,
        OracleId::FiniteDifference,
        OracleId::GridVi,
        OracleId::AnalyticGne,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OracleId::ActiveSetEnumeration => "active-set-enumeration",
            OracleId::FiniteDifference => "finite-difference",
            OracleId::GridVi => "grid-vi",
            OracleId::AnalyticGne => "analytic-gne",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            OracleId::ActiveSetEnumeration => "exhaustive {lower, free, upper} patterns for box affine VIs (n ≤ 12)",
            OracleId::FiniteDifference => "central-difference pseudogradient and game Hessian checks",
            OracleId::GridVi => "VI inequality checked against every point of a grid over the box",
            OracleId::AnalyticGne => "closed-form solution a = λ = (½, ½) of the two-agent coupled family",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfTest {
    pub oracle: OracleId,
    pub passed: bool,
    pub detail: String,
}

/// Hash of an affine VI over the bit patterns of `M`, `q`, the bounds and
/// any polyhedral rows.
pub fn problem_hash(p: &AffineViProblem) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    let (lo, hi) = p.set.bounds();
    let (rows, rhs) = p.set.rows();
    p.m.shape().hash(&mut h);
    rows.shape().hash(&mut h);
    for v in p.m.iter().chain(p.q.iter()).chain(lo.iter()).chain(hi.iter()).chain(rows.iter()).chain(rhs.iter()) {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Catalog of oracles with a hash-keyed cache for the enumeration oracle.
#[derive(Debug, Default)]
pub struct OracleRegistry {
    cache: Mutex<HashMap<u64, DVector<f64>>>,
}

pub fn oracle_registry() -> OracleRegistry {
    OracleRegistry::default()
}

impl OracleRegistry {
    pub fn list(&self) -> Vec<OracleId> {
        OracleId::ALL.to_vec()
    }

    /// Active-set enumeration, cached by [`problem_hash`].
    pub fn enumerate(&self, p: &AffineViProblem) -> nash_newton::Result<DVector<f64>> {
        let key = problem_hash(p);
        if let Some(a) = self.cache.lock().expect("oracle cache poisoned").get(&key) {
            return Ok(a.clone());
        }
        let a = enumerate_active_set_solution(p)?.a;
        self.cache.lock().expect("oracle cache poisoned").insert(key, a.clone());
        Ok(a)
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().expect("oracle cache poisoned").len()
    }

    /// Finite-difference checks of the pseudogradient and game Hessian at `a`.
    pub fn derivatives_ok(&self, game: &GameProblem, a: &DVector<f64>) -> nash_newton::Result<bool> {
        Ok(check_pseudogradient(game, a)?.passed() && check_game_hessian(game, a)?.passed())
    }

    /// Grid verification of `a` for a box VI with `per_dim` points per axis.
    pub fn grid_holds(&self, p: &AffineViProblem, a: &DVector<f64>, per_dim: usize) -> nash_newton::Result<bool> {
        Ok(grid_check(p, a, per_dim)?.holds(1e-9))
    }

    /// Known solution of the coupled two-agent family for any `c`.
    pub fn analytic_gne(&self, c: f64) -> (GameProblem, PrimalDualPoint) {
        (
            analytic_shared_gne(c),
            PrimalDualPoint::new(DVector::from_element(2, 0.5), DVector::from_element(2, 0.5)),
        )
    }

    /// Runs every oracle on its canonical instance.
    pub fn self_test(&self) -> Vec<SelfTest> {
        OracleId::ALL.iter().map(|&id| self.self_test_one(id)).collect()
    }

    fn self_test_one(&self, oracle: OracleId) -> SelfTest {
        let canonical = || {
            AffineViProblem::boxed(
                DMatrix::identity(2, 2) * 2.0,
                DVector::from_element(2, -2.0),
                DVector::zeros(2),
                DVector::from_element(2, 0.5),
            )
            .expect("valid canonical problem")
        };
        let expected = DVector::from_element(2, 0.5);
        let (passed, detail) = match oracle {
            OracleId::ActiveSetEnumeration => match self.enumerate(&canonical()) {
                Ok(a) => ((&a - &expected).amax() < 1e-12, format!("a = {:?}", a.as_slice())),
                Err(e) => (false, e.to_string()),
            },
            OracleId::FiniteDifference => {
                let g = quartic_test_game();
                let a = DVector::from_row_slice(&QUARTIC_TEST_EQUILIBRIUM);
                match self.derivatives_ok(&g, &a) {
                    Ok(ok) => (ok, "quartic test game at its equilibrium".into()),
                    Err(e) => (false, e.to_string()),
                }
            }
            OracleId::GridVi => {
                let p = canonical();
                let good = self.grid_holds(&p, &expected, 11);
                let bad = self.grid_holds(&p, &DVector::zeros(2), 11);
                match (good, bad) {
                    (Ok(g), Ok(b)) => (g && !b, format!("solution holds: {g}, origin holds: {b}")),
                    (Err(e), _) | (_, Err(e)) => (false, e.to_string()),
                }
            }
            OracleId::AnalyticGne => {
                let (g, z) = self.analytic_gne(0.5);
                match assemble_phi(&g, &z) {
                    Ok(phi) => (phi.amax() < 1e-14, format!("‖Φ‖∞ = {:e}", phi.amax())),
                    Err(e) => (false, e.to_string()),
                }
            }
        };
        SelfTest { oracle, passed, detail }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_lists_at_least_four_oracles() {
        assert!(oracle_registry().list().len() >= 4);
    }

    #[test]
    fn every_self_test_passes() {
        for t in oracle_registry().self_test() {
            assert!(t.passed, "{:?}: {}", t.oracle, t.detail);
        }
    }

    #[test]
    fn enumeration_is_cached_by_problem_hash() {
        let r = oracle_registry();
        let p = AffineViProblem::boxed(
            DMatrix::from_row_slice(2, 2, &[1.0, -3.0, 1.0, 0.0]),
            DVector::from_row_slice(&[1.0, -0.5]),
            DVector::zeros(2),
            DVector::from_element(2, 10.0),
        )
        .unwrap();
        let first = r.enumerate(&p).unwrap();
        assert_eq!(r.cached(), 1);
        let second = r.enumerate(&p.clone()).unwrap();
        assert_eq!(r.cached(), 1);
        assert_eq!(first, second);
    }
}
