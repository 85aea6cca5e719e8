use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::PrimalDualPoint;
use crate::error::{Error, Result};
use crate::game::{pseudogradient, ConstraintFunction, Feasibility, FeasibleSet, GameProblem, ProductSet};
use crate::linalg::least_squares;

/// Largest deviation between agent constraint functions still considered common.
pub const COMMONALITY_TOL: f64 = 1e-12;

const COMMONALITY_POINTS: usize = 10;
const ACTIVE_TOL: f64 = 1e-8;

/// NE-form problem `VI(A, F)` with `A = {a : ḡ(a) ≤ 0}` obtained from a game
/// whose agents all share the constraint function `ḡ`.
#[derive(Clone)]
pub struct VgneReduction {
    /// The game over the joint feasible set; solvable by Josephy-Newton.
    pub problem: GameProblem,
    shared: Option<Arc<dyn ConstraintFunction>>,
    n_agents: usize,
}

impl std::fmt::Debug for VgneReduction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VgneReduction")
            .field("problem", &self.problem)
            .field("shared_len", &self.shared_len())
            .finish()
    }
}

impl VgneReduction {
    /// Number of shared constraints `m̄`.
    pub fn shared_len(&self) -> usize {
        self.shared.as_ref().map_or(0, |g| g.len())
    }

    /// Shared multiplier `λ̄ ≥ 0` at a solution `a` of the reduced VI:
    /// nonnegative least squares of `F(a) + ∇ḡ(a)ᵀλ̄ = 0` over active rows.
    pub fn shared_multiplier(&self, a: &DVector<f64>) -> Result<DVector<f64>> {
        let f = pseudogradient(&self.problem, a)?;
        let Some(g) = &self.shared else {
            return Ok(DVector::zeros(0));
        };
        let gv = g.value(a);
        let jac = g.jacobian(a);
        let mut active: Vec<usize> = (0..gv.len()).filter(|&c| gv[c] >= -ACTIVE_TOL).collect();
        let mut lambda = DVector::zeros(gv.len());
        // Active-set NNLS: drop rows with negative least-squares multipliers.
        while !active.is_empty() {
            let gt = DMatrix::from_fn(a.len(), active.len(), |r, k| jac[(active[k], r)]);
            let sol = least_squares(&gt, &-&f);
            let worst = (0..active.len())
                .filter(|&k| sol[k] < 0.0)
                .min_by(|&x, &y| sol[x].total_cmp(&sol[y]));
            match worst {
                Some(k) => {
                    active.remove(k);
                }
                None => {
                    lambda.fill(0.0);
                    for (k, &c) in active.iter().enumerate() {
                        lambda[c] = sol[k];
                    }
                    break;
                }
            }
        }
        Ok(lambda)
    }

    /// Embeds `(a, λ̄)` into the GNE KKT system with `λ_i = λ̄` for every agent.
    pub fn lift(&self, a: &DVector<f64>, lambda_bar: &DVector<f64>) -> PrimalDualPoint {
        let mut lambda = DVector::zeros(self.n_agents * lambda_bar.len());
        for i in 0..self.n_agents {
            lambda.rows_mut(i * lambda_bar.len(), lambda_bar.len()).copy_from(lambda_bar);
        }
        PrimalDualPoint::new(a.clone(), lambda)
    }

    /// [`shared_multiplier`](Self::shared_multiplier) followed by [`lift`](Self::lift).
    pub fn lift_solution(&self, a: &DVector<f64>) -> Result<PrimalDualPoint> {
        Ok(self.lift(a, &self.shared_multiplier(a)?))
    }
}

/// Reduces a GNE-form game with common linear constraints to `VI(A, F)`.
///
/// Commonality is checked by evaluating every `g_i` at ten seeded random
/// points; the largest deviation from `g_1` must be at most `1e-12`. Shared
/// nonlinear constraints are unsupported because the subproblem solver
/// handles polyhedral sets only.
pub fn vgne_reduce(game: &GameProblem) -> Result<VgneReduction> {
    let constraints = game.constraints()?;
    let n = game.dim();
    let first = &constraints[0];
    if constraints.iter().any(|g| g.len() != first.len()) {
        return Err(Error::ConstraintsNotCommon {
            max_deviation: f64::INFINITY,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut max_deviation: f64 = 0.0;
    for _ in 0..COMMONALITY_POINTS {
        let a = DVector::from_fn(n, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z
        });
        let reference = first.value(&a);
        for g in &constraints[1..] {
            max_deviation = max_deviation.max((g.value(&a) - &reference).amax());
        }
    }
    if !(max_deviation <= COMMONALITY_TOL) {
        return Err(Error::ConstraintsNotCommon { max_deviation });
    }
    if first.is_empty() {
        let sets = game.layout().dims().iter().map(|&d| FeasibleSet::unbounded(d)).collect();
        return Ok(VgneReduction {
            problem: game.with_feasibility(Feasibility::Sets(ProductSet::new(sets))),
            shared: None,
            n_agents: game.n_agents(),
        });
    }
    let rows = first
        .rows()
        .ok_or_else(|| Error::Unsupported("shared constraint without row data".into()))?;
    if rows.iter().any(|r| r.quad.is_some()) {
        return Err(Error::Unsupported(
            "v-GNE reduction needs linear shared constraints (polyhedral joint set)".into(),
        ));
    }
    let a_mat = DMatrix::from_fn(rows.len(), n, |r, c| rows[r].linear[c]);
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.rhs));
    let joint = FeasibleSet::polyhedron(a_mat, b)?;
    Ok(VgneReduction {
        problem: game.with_feasibility(Feasibility::Sets(ProductSet::new(vec![joint]))),
        shared: Some(Arc::clone(first)),
        n_agents: game.n_agents(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{analytic_shared_gne, QuadraticConstraints, QuadraticGame};
    use crate::kkt::assemble_phi;
    use crate::newton::{josephy_newton, NewtonConfig};

    #[test]
    fn shared_constraint_gives_symmetric_vgne() {
        let g = analytic_shared_gne(1.0);
        let red = vgne_reduce(&g).unwrap();
        let t = josephy_newton(&red.problem, &DVector::zeros(2), &NewtonConfig::default()).unwrap();
        assert!(t.converged);
        let a = t.last();
        assert!((a - DVector::from_row_slice(&[0.5, 0.5])).amax() < 1e-9);
        let lb = red.shared_multiplier(a).unwrap();
        assert!((lb[0] - 0.5).abs() < 1e-9);
        let z = red.lift(a, &lb);
        assert!(assemble_phi(&g, &z).unwrap().norm() <= 1e-9);
    }

    #[test]
    fn differing_constraints_are_rejected() {
        assert!(matches!(
            vgne_reduce(&analytic_shared_gne(0.5)),
            Err(Error::ConstraintsNotCommon { max_deviation }) if max_deviation > 0.1
        ));
    }

    #[test]
    fn no_constraints_reduce_to_plain_ne() {
        let costs = QuadraticGame::from_assembled(
            vec![1, 1],
            &DMatrix::from_row_slice(2, 2, &[2.0, 1.0, -1.0, 2.0]),
            &DVector::from_row_slice(&[-1.0, 1.0]),
        )
        .unwrap();
        let cons: Vec<Arc<dyn ConstraintFunction>> =
            vec![Arc::new(QuadraticConstraints::empty(2)), Arc::new(QuadraticConstraints::empty(2))];
        let g = GameProblem::with_constraints(Arc::new(costs), cons).unwrap();
        let red = vgne_reduce(&g).unwrap();
        assert_eq!(red.shared_len(), 0);
        let t = josephy_newton(&red.problem, &DVector::zeros(2), &NewtonConfig::default()).unwrap();
        assert!(pseudogradient(&g, t.last()).unwrap().amax() < 1e-10);
        assert_eq!(red.lift_solution(t.last()).unwrap().lambda.len(), 0);
    }
}
