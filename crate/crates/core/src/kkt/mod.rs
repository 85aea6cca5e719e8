//! KKT systems of generalized games, the min-function reformulation
//! `Φ(z) = 0`, limiting-Jacobian elements and semismooth Newton methods.

mod export;
mod newton;
mod quasireg;
mod vgne;

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

pub use export::{solution_csv, SOLUTION_CSV_HEADER};
pub use newton::{
    distributed_semismooth_newton, distributed_ssn_step, initial_multipliers, perturbed_semismooth_newton, primal_dual_start,
    semismooth_newton, ssn_step, KktTrace,
};
pub use quasireg::{check_quasi_regularity, QuasiRegularity, QuasiRegularityVerdict, MAX_ENUMERATED_TIES, SIGMA_MIN};
pub use vgne::{vgne_reduce, VgneReduction, COMMONALITY_TOL};

use crate::error::{check_len, Error, Result};
use crate::game::{game_hessian, GameProblem};

/// `|−g − λ|` at or below this value is a kink of the min function.
pub const TIE_TOL: f64 = 1e-12;

/// Primal-dual point `z = (a, λ)` with `λ = (λ_1, …, λ_N)` stacked per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDualPoint {
    pub a: DVector<f64>,
    pub lambda: DVector<f64>,
}

impl PrimalDualPoint {
    pub fn new(a: DVector<f64>, lambda: DVector<f64>) -> Self {
        PrimalDualPoint { a, lambda }
    }

    pub fn stacked(&self) -> DVector<f64> {
        let mut z = DVector::zeros(self.a.len() + self.lambda.len());
        z.rows_mut(0, self.a.len()).copy_from(&self.a);
        z.rows_mut(self.a.len(), self.lambda.len()).copy_from(&self.lambda);
        z
    }

    pub fn from_stacked(z: &DVector<f64>, n: usize) -> Self {
        PrimalDualPoint {
            a: z.rows(0, n).into_owned(),
            lambda: z.rows(n, z.len() - n).into_owned(),
        }
    }

    fn check(&self, game: &GameProblem) -> Result<()> {
        check_len("primal vector", game.dim(), self.a.len())?;
        let m: usize = game.constraint_counts().iter().sum();
        check_len("multiplier vector", m, self.lambda.len())?;
        let finite = self.a.iter().chain(self.lambda.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput("primal-dual point must be finite".into()));
        }
        Ok(())
    }
}

/// Which side of `min(−g, λ)` a complementarity row differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    /// `−∇g` row.
    Constraint,
    /// Unit row on the multiplier.
    Multiplier,
}

/// Branch used at kinks `−g = λ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieRule {
    #[default]
    PreferG,
    PreferLambda,
}

impl TieRule {
    fn branch(self) -> Branch {
        match self {
            TieRule::PreferG => Branch::Constraint,
            TieRule::PreferLambda => Branch::Multiplier,
        }
    }
}

/// One element of the limiting Jacobian with the branch taken per
/// complementarity row (global row order `λ_1, …, λ_N`).
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianElement {
    pub matrix: DMatrix<f64>,
    pub branches: Vec<Branch>,
    /// Complementarity rows that sat on a kink.
    pub ties: Vec<usize>,
}

/// Index bookkeeping for `z = (a, λ)`.
#[derive(Debug, Clone)]
pub(crate) struct KktLayout {
    pub n: usize,
    pub m: usize,
    primal: Vec<Range<usize>>,
    dual: Vec<Range<usize>>,
}

impl KktLayout {
    pub fn new(game: &GameProblem) -> Self {
        let layout = game.layout();
        let n = layout.total();
        let primal: Vec<_> = (0..layout.n_agents()).map(|i| layout.range(i)).collect();
        let mut dual = Vec::new();
        let mut off = 0;
        for m_i in game.constraint_counts() {
            dual.push(off..off + m_i);
            off += m_i;
        }
        KktLayout { n, m: off, primal, dual }
    }

    pub fn n_agents(&self) -> usize {
        self.primal.len()
    }

    pub fn primal(&self, i: usize) -> Range<usize> {
        self.primal[i].clone()
    }

    /// Range of `λ_i` inside `λ`.
    pub fn dual(&self, i: usize) -> Range<usize> {
        self.dual[i].clone()
    }

    /// Positions of agent `i`'s unknowns `(a_i, λ_i)` (and equations) in `z`.
    pub fn agent_indices(&self, i: usize) -> Vec<usize> {
        self.primal(i)
            .chain(self.dual(i).map(|c| self.n + c))
            .collect()
    }
}

/// `Φ(z)`: stacked `∇_{a_i}J_i + (∇_{a_i}g_i)ᵀλ_i` over `min(−g_i(a), λ_i)`.
pub fn assemble_phi(game: &GameProblem, z: &PrimalDualPoint) -> Result<DVector<f64>> {
    z.check(game)?;
    let constraints = game.constraints()?;
    let kl = KktLayout::new(game);
    let mut phi = DVector::zeros(kl.n + kl.m);
    for (i, g) in constraints.iter().enumerate() {
        let (pr, dr) = (kl.primal(i), kl.dual(i));
        let lam = z.lambda.rows(dr.start, dr.len());
        let jac = g.jacobian(&z.a);
        let grad = game.costs().gradient(i, &z.a);
        check_len("agent gradient", pr.len(), grad.len())?;
        let top = grad + jac.columns(pr.start, pr.len()).transpose() * lam;
        phi.rows_mut(pr.start, pr.len()).copy_from(&top);
        let gv = g.value(&z.a);
        for c in 0..dr.len() {
            phi[kl.n + dr.start + c] = (-gv[c]).min(lam[c]);
        }
    }
    Ok(phi)
}

/// `‖Φ(z)‖₂`.
pub fn phi_norm(game: &GameProblem, z: &PrimalDualPoint) -> Result<f64> {
    Ok(assemble_phi(game, z)?.norm())
}

/// The limiting-Jacobian element selected by `tie_rule` at kinks.
pub fn limiting_jacobian(game: &GameProblem, z: &PrimalDualPoint, tie_rule: TieRule) -> Result<JacobianElement> {
    jacobian_with(game, z, |_, tied, natural| if tied { tie_rule.branch() } else { natural })
}

/// Jacobian element with explicit branches on tied rows (`tie_branches[k]`
/// for the `k`-th tied row). Non-tied rows use their unique branch.
pub fn jacobian_with_tie_branches(
    game: &GameProblem,
    z: &PrimalDualPoint,
    tie_branches: &[Branch],
) -> Result<JacobianElement> {
    let mut next = 0;
    let el = jacobian_with(game, z, |_, tied, natural| {
        if tied {
            let b = tie_branches.get(next).copied().unwrap_or(Branch::Constraint);
            next += 1;
            b
        } else {
            natural
        }
    })?;
    check_len("tie branch list", el.ties.len(), tie_branches.len())?;
    Ok(el)
}

/// Complementarity rows on a kink at `z`.
pub fn tied_rows(game: &GameProblem, z: &PrimalDualPoint) -> Result<Vec<usize>> {
    z.check(game)?;
    let mut ties = Vec::new();
    let mut off = 0;
    for g in game.constraints()? {
        let gv = g.value(&z.a);
        for c in 0..gv.len() {
            if (-gv[c] - z.lambda[off + c]).abs() <= TIE_TOL {
                ties.push(off + c);
            }
        }
        off += gv.len();
    }
    Ok(ties)
}

fn jacobian_with<F>(game: &GameProblem, z: &PrimalDualPoint, mut choose: F) -> Result<JacobianElement>
where
    F: FnMut(usize, bool, Branch) -> Branch,
{
    z.check(game)?;
    let constraints = game.constraints()?;
    let kl = KktLayout::new(game);
    let (n, m) = (kl.n, kl.m);
    let mut j = DMatrix::zeros(n + m, n + m);
    j.view_mut((0, 0), (n, n)).copy_from(&game_hessian(game, &z.a)?.assembled);
    let mut branches = Vec::with_capacity(m);
    let mut ties = Vec::new();
    for (i, g) in constraints.iter().enumerate() {
        let (pr, dr) = (kl.primal(i), kl.dual(i));
        let lam = z.lambda.rows(dr.start, dr.len()).into_owned();
        let jac = g.jacobian(&z.a);
        if !dr.is_empty() {
            let wh = g.weighted_hessian(&z.a, &lam).ok_or_else(|| {
                Error::MissingOracle(format!("constraint Hessian of agent {i} is not available"))
            })?;
            let mut rows = j.view_mut((pr.start, 0), (pr.len(), n));
            rows += wh.rows(pr.start, pr.len());
            j.view_mut((pr.start, n + dr.start), (pr.len(), dr.len()))
                .copy_from(&jac.columns(pr.start, pr.len()).transpose());
        }
        let gv = g.value(&z.a);
        for c in 0..dr.len() {
            let row = n + dr.start + c;
            let (neg_g, l) = (-gv[c], lam[c]);
            let tied = (neg_g - l).abs() <= TIE_TOL;
            let natural = if neg_g < l { Branch::Constraint } else { Branch::Multiplier };
            if tied {
                ties.push(dr.start + c);
            }
            let b = choose(dr.start + c, tied, natural);
            match b {
                Branch::Constraint => {
                    j.view_mut((row, 0), (1, n)).copy_from(&(-jac.row(c)));
                }
                Branch::Multiplier => j[(row, row)] = 1.0,
            }
            branches.push(b);
        }
    }
    Ok(JacobianElement {
        matrix: j,
        branches,
        ties,
    })
}

/// KKT conditions checked directly: stationarity, primal and dual
/// feasibility and complementarity, each as a maximum violation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktViolation {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktViolation {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal)
            .max(self.dual)
            .max(self.complementarity)
    }
}

pub fn kkt_violation(game: &GameProblem, z: &PrimalDualPoint) -> Result<KktViolation> {
    let phi = assemble_phi(game, z)?;
    let n = game.dim();
    let mut primal: f64 = 0.0;
    let mut comp: f64 = 0.0;
    let mut off = 0;
    for g in game.constraints()? {
        let gv = g.value(&z.a);
        for c in 0..gv.len() {
            primal = primal.max(gv[c]);
            comp = comp.max((gv[c] * z.lambda[off + c]).abs());
        }
        off += gv.len();
    }
    Ok(KktViolation {
        stationarity: phi.rows(0, n).amax(),
        primal: primal.max(0.0),
        dual: z.lambda.iter().fold(0.0_f64, |acc, l| acc.max(-l)),
        complementarity: comp,
    })
}

/// Finite-difference check of the limiting Jacobian at a point away from kinks.
pub fn check_phi_jacobian(game: &GameProblem, z: &PrimalDualPoint) -> Result<crate::game::fd::FdCheck> {
    use crate::game::fd::{jacobian_fd, rel_error_mat, FdCheck, STEP_GRADIENT, TOL_HESSIAN};
    let exact = limiting_jacobian(game, z, TieRule::PreferG)?.matrix;
    let n = game.dim();
    let approx = jacobian_fd(
        |x| assemble_phi(game, &PrimalDualPoint::from_stacked(x, n)),
        &z.stacked(),
        STEP_GRADIENT,
    )?;
    Ok(FdCheck {
        rel_error: rel_error_mat(&approx, &exact),
        tol: TOL_HESSIAN,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::game::{analytic_shared_gne, ConstraintFunction, QuadraticConstraints, QuadraticGame};

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    fn scalar_game_with(g1: QuadraticConstraints) -> GameProblem {
        let costs = QuadraticGame::from_assembled(vec![1, 1], &DMatrix::identity(2, 2), &v(&[-1.0, -1.0])).unwrap();
        let cons: Vec<Arc<dyn ConstraintFunction>> = vec![Arc::new(g1), Arc::new(QuadraticConstraints::empty(2))];
        GameProblem::with_constraints(Arc::new(costs), cons).unwrap()
    }

    #[test]
    fn analytic_solution_zeroes_phi() {
        let g = analytic_shared_gne(1.0);
        let z = PrimalDualPoint::new(v(&[0.5, 0.5]), v(&[0.5, 0.5]));
        assert!(assemble_phi(&g, &z).unwrap().amax() < 1e-15);
    }

    #[test]
    fn phi_matches_direct_formula() {
        let g = analytic_shared_gne(0.5);
        let z = PrimalDualPoint::new(v(&[0.3, -0.7]), v(&[0.2, 1.1]));
        let phi = assemble_phi(&g, &z).unwrap();
        let (a1, a2, l1, l2): (f64, f64, f64, f64) = (0.3, -0.7, 0.2, 1.1);
        let g1 = a1 + 0.5 * a2 - 0.75;
        let g2 = 0.5 * a1 + a2 - 0.75;
        let direct = [a1 - 1.0 + l1, a2 - 1.0 + l2, (-g1).min(l1), (-g2).min(l2)];
        for k in 0..4 {
            assert!((phi[k] - direct[k]).abs() <= 1e-14);
        }
    }

    #[test]
    fn inactive_and_active_rows_pick_their_branch() {
        // g = a1 − 1: at a1 = 0 it is strictly inactive, at a1 = 1 active.
        let g = scalar_game_with(QuadraticConstraints::linear(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), v(&[1.0])).unwrap());
        let inactive = PrimalDualPoint::new(v(&[0.0, 0.0]), v(&[0.0]));
        let el = limiting_jacobian(&g, &inactive, TieRule::PreferG).unwrap();
        assert_eq!(el.branches, vec![Branch::Multiplier]);
        assert_eq!(el.matrix.row(2).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 1.0]);
        let active = PrimalDualPoint::new(v(&[1.0, 0.0]), v(&[0.5]));
        let el = limiting_jacobian(&g, &active, TieRule::PreferLambda).unwrap();
        assert_eq!(el.branches, vec![Branch::Constraint]);
        assert_eq!(el.matrix.row(2).iter().copied().collect::<Vec<_>>(), vec![-1.0, 0.0, 0.0]);
        let phi = assemble_phi(&g, &inactive).unwrap();
        assert_eq!(phi[2], 0.0);
        assert_eq!(phi.rows(0, 2).into_owned(), v(&[-1.0, -1.0]));
    }

    #[test]
    fn tie_rules_match_one_sided_differences() {
        let g = scalar_game_with(QuadraticConstraints::linear(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), v(&[1.0])).unwrap());
        let z = PrimalDualPoint::new(v(&[1.0, 0.3]), v(&[0.0]));
        let jg = limiting_jacobian(&g, &z, TieRule::PreferG).unwrap();
        let jl = limiting_jacobian(&g, &z, TieRule::PreferLambda).unwrap();
        assert_eq!(jg.ties, vec![0]);
        assert_ne!(jg.matrix, jl.matrix);
        // Moving λ up keeps −g the smaller argument; moving a1 down makes λ smaller.
        let h = 1e-7;
        let row = |zz: &PrimalDualPoint| assemble_phi(&g, zz).unwrap()[2];
        let base = row(&z);
        let up_l = PrimalDualPoint::new(z.a.clone(), v(&[h]));
        assert!(((row(&up_l) - base) / h - jg.matrix[(2, 2)]).abs() < 1e-9);
        let down_a = PrimalDualPoint::new(v(&[1.0 - h, 0.3]), v(&[0.0]));
        assert!(((row(&down_a) - base) / -h - jl.matrix[(2, 0)]).abs() < 1e-9);
        let down_a2 = PrimalDualPoint::new(v(&[1.0 + h, 0.3]), v(&[0.0]));
        assert!(((row(&down_a2) - base) / h - jg.matrix[(2, 0)]).abs() < 1e-9);
    }

    #[test]
    fn jacobian_matches_finite_differences_away_from_kinks() {
        let rows = vec![
            crate::game::ConstraintRow {
                quad: Some(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])),
                linear: v(&[0.1, -0.2]),
                rhs: 0.4,
            },
            crate::game::ConstraintRow::linear(v(&[1.0, 1.0]), 0.3),
        ];
        let g = scalar_game_with(QuadraticConstraints::new(2, rows).unwrap());
        let z = PrimalDualPoint::new(v(&[0.4, -0.1]), v(&[0.7, 0.05]));
        assert!(tied_rows(&g, &z).unwrap().is_empty());
        assert!(check_phi_jacobian(&g, &z).unwrap().passed());
    }

    #[test]
    fn wrong_multiplier_length_is_rejected() {
        let g = analytic_shared_gne(1.0);
        let z = PrimalDualPoint::new(v(&[0.5, 0.5]), v(&[0.5]));
        assert!(matches!(assemble_phi(&g, &z), Err(Error::DimensionMismatch { .. })));
    }
}
