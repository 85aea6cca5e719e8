use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{pseudogradient, FeasibleSet, GameProblem};
use crate::error::{check_len, Error, Result};
use crate::vi::project_polyhedron;

/// Absolute tolerance used to decide which constraints bind.
pub const TOL_ACTIVE: f64 = 1e-8;

/// Sign restriction of one coordinate in a coordinate-product cone.
///
/// `Positive` / `Negative` describe open half-lines, used for open orthants
/// such as `R₊₊ × R₊₊`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordCone {
    Free,
    Nonnegative,
    Nonpositive,
    Positive,
    Negative,
    Zero,
}

impl CoordCone {
    fn admits(self, v: f64, tol: f64) -> bool {
        match self {
            CoordCone::Free => true,
            CoordCone::Nonnegative => v >= -tol,
            CoordCone::Nonpositive => v <= tol,
            CoordCone::Positive => v > 0.0,
            CoordCone::Negative => v < 0.0,
            CoordCone::Zero => v.abs() <= tol,
        }
    }

    /// Lattice values in `{-2, …, 2}` admitted by the coordinate.
    pub(crate) fn lattice(self) -> &'static [f64] {
        match self {
            CoordCone::Free => &[-2.0, -1.0, 0.0, 1.0, 2.0],
            CoordCone::Nonnegative => &[0.0, 1.0, 2.0],
            CoordCone::Nonpositive => &[-2.0, -1.0, 0.0],
            CoordCone::Positive => &[1.0, 2.0],
            CoordCone::Negative => &[-2.0, -1.0],
            CoordCone::Zero => &[0.0],
        }
    }
}

/// One agent's cone `{ d : ineq·d ≤ 0, eq·d = 0 }`, with a coordinatewise
/// description when the cone is a product of half-lines.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentCone {
    dim: usize,
    ineq: DMatrix<f64>,
    eq: DMatrix<f64>,
    coords: Option<Vec<CoordCone>>,
}

impl AgentCone {
    pub fn full(dim: usize) -> Self {
        Self::coordinates(vec![CoordCone::Free; dim])
    }

    pub fn coordinates(coords: Vec<CoordCone>) -> Self {
        let dim = coords.len();
        let mut ineq_rows = Vec::new();
        let mut eq_rows = Vec::new();
        for (k, c) in coords.iter().enumerate() {
            let mut e = DVector::zeros(dim);
            match c {
                CoordCone::Free => continue,
                CoordCone::Nonnegative | CoordCone::Positive => {
                    e[k] = -1.0;
                    ineq_rows.push(e);
                }
                CoordCone::Nonpositive | CoordCone::Negative => {
                    e[k] = 1.0;
                    ineq_rows.push(e);
                }
                CoordCone::Zero => {
                    e[k] = 1.0;
                    eq_rows.push(e);
                }
            }
        }
        AgentCone {
            dim,
            ineq: stack_rows(&ineq_rows, dim),
            eq: stack_rows(&eq_rows, dim),
            coords: Some(coords),
        }
    }

    pub fn polyhedral(ineq: DMatrix<f64>, eq: DMatrix<f64>) -> Result<Self> {
        check_len("cone equality rows", ineq.ncols(), eq.ncols())?;
        Ok(AgentCone {
            dim: ineq.ncols(),
            ineq,
            eq,
            coords: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn inequalities(&self) -> &DMatrix<f64> {
        &self.ineq
    }

    pub fn equalities(&self) -> &DMatrix<f64> {
        &self.eq
    }

    pub fn coordinates_view(&self) -> Option<&[CoordCone]> {
        self.coords.as_deref()
    }

    pub fn contains(&self, d: &DVector<f64>, tol: f64) -> bool {
        if d.len() != self.dim {
            return false;
        }
        if let Some(coords) = &self.coords {
            return coords.iter().zip(d.iter()).all(|(c, v)| c.admits(*v, tol));
        }
        (&self.ineq * d).iter().all(|v| *v <= tol) && (&self.eq * d).iter().all(|v| v.abs() <= tol)
    }

    /// Random cone element: half-normal coordinates for coordinate cones,
    /// a projected Gaussian otherwise.
    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let g = DVector::from_fn(self.dim, |_, _| StandardNormal.sample(rng));
        if let Some(coords) = &self.coords {
            return DVector::from_fn(self.dim, |k, _| {
                let v: f64 = g[k];
                match coords[k] {
                    CoordCone::Free => v,
                    CoordCone::Nonnegative | CoordCone::Positive => v.abs(),
                    CoordCone::Nonpositive | CoordCone::Negative => -v.abs(),
                    CoordCone::Zero => 0.0,
                }
            });
        }
        // Restrict to the null space of the equality rows, then project onto
        // the inequality cone inside it.
        let basis = null_space(&self.eq, self.dim);
        if basis.ncols() == 0 {
            return DVector::zeros(self.dim);
        }
        let z = basis.transpose() * g;
        let rows = &self.ineq * &basis;
        let pz = project_polyhedron(&rows, &DVector::zeros(rows.nrows()), &z);
        basis * pz
    }
}

/// Orthonormal basis (as columns) of `{d : e·d = 0}`.
fn null_space(e: &DMatrix<f64>, dim: usize) -> DMatrix<f64> {
    if e.nrows() == 0 {
        return DMatrix::identity(dim, dim);
    }
    let eig = (e.transpose() * e).symmetric_eigen();
    let cutoff = 1e-12 * eig.eigenvalues.amax().max(1.0);
    let cols: Vec<usize> = (0..dim).filter(|&k| eig.eigenvalues[k].abs() <= cutoff).collect();
    DMatrix::from_fn(dim, cols.len(), |r, c| eig.eigenvectors[(r, cols[c])])
}

fn stack_rows(rows: &[DVector<f64>], dim: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows.len(), dim);
    for (r, v) in rows.iter().enumerate() {
        m.row_mut(r).copy_from(&v.transpose());
    }
    m
}

/// Cartesian product of per-agent cones.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalCone {
    pub agents: Vec<AgentCone>,
}

impl CriticalCone {
    pub fn new(agents: Vec<AgentCone>) -> Self {
        CriticalCone { agents }
    }

    /// Product of one-dimensional agent cones, all with the same sign restriction.
    pub fn orthant(n_agents: usize, coord: CoordCone) -> Self {
        CriticalCone::new(vec![AgentCone::coordinates(vec![coord]); n_agents])
    }

    pub fn dims(&self) -> Vec<usize> {
        self.agents.iter().map(AgentCone::dim).collect()
    }

    pub fn dim(&self) -> usize {
        self.agents.iter().map(AgentCone::dim).sum()
    }

    pub fn contains(&self, d: &DVector<f64>, tol: f64) -> bool {
        if d.len() != self.dim() {
            return false;
        }
        let mut off = 0;
        self.agents.iter().all(|c| {
            let blk = d.rows(off, c.dim()).into_owned();
            off += c.dim();
            c.contains(&blk, tol)
        })
    }

    /// True when every agent cone is coordinatewise (box-derived).
    pub fn is_coordinatewise(&self) -> bool {
        self.agents.iter().all(|c| c.coords.is_some())
    }

    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let mut d = DVector::zeros(self.dim());
        let mut off = 0;
        for c in &self.agents {
            d.rows_mut(off, c.dim()).copy_from(&c.sample(rng));
            off += c.dim();
        }
        d
    }

    /// Stacked coordinate restrictions, if every agent cone is coordinatewise.
    pub(crate) fn coordinates(&self) -> Option<Vec<CoordCone>> {
        let mut out = Vec::with_capacity(self.dim());
        for c in &self.agents {
            out.extend_from_slice(c.coords.as_ref()?);
        }
        Some(out)
    }
}

/// Per-agent critical cone `C_i(a*) = T_{A_i}(a_i*) ∩ ∇_{a_i}J_i(a*)^⊥` of an
/// NE-form game with one feasible set per agent.
pub fn critical_cone(game: &GameProblem, a_star: &DVector<f64>) -> Result<CriticalCone> {
    game.check_point(a_star)?;
    let sets = game.agent_sets()?;
    let f = pseudogradient(game, a_star)?;
    let layout = game.layout();
    let mut agents = Vec::with_capacity(sets.len());
    for (i, set) in sets.iter().enumerate() {
        let ai = layout.block(a_star, i);
        let gi = layout.block(&f, i);
        let viol = set.max_violation(&ai);
        if viol > TOL_ACTIVE {
            return Err(Error::Infeasible(format!(
                "agent {i} violates its feasible set by {viol:e}"
            )));
        }
        let cone = match set {
            FeasibleSet::Box { lower, upper } => box_cone(&ai, &gi, lower, upper),
            FeasibleSet::Polyhedron { a, b } => {
                let slack = b - a * &ai;
                let active: Vec<DVector<f64>> = (0..a.nrows())
                    .filter(|&r| slack[r].abs() <= TOL_ACTIVE)
                    .map(|r| a.row(r).transpose())
                    .collect();
                let eq = if gi.amax() > TOL_ACTIVE {
                    stack_rows(std::slice::from_ref(&gi), ai.len())
                } else {
                    DMatrix::zeros(0, ai.len())
                };
                AgentCone::polyhedral(stack_rows(&active, ai.len()), eq)?
            }
        };
        agents.push(cone);
    }
    Ok(CriticalCone::new(agents))
}

fn box_cone(a: &DVector<f64>, g: &DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) -> AgentCone {
    let n = a.len();
    let lo: Vec<bool> = (0..n).map(|k| (a[k] - lower[k]).abs() <= TOL_ACTIVE).collect();
    let hi: Vec<bool> = (0..n).map(|k| (upper[k] - a[k]).abs() <= TOL_ACTIVE).collect();

    // The gradient-orthogonality row decouples into coordinates exactly when
    // every gradient component has the sign a VI solution would give it.
    let separable = (0..n).all(|k| match (lo[k], hi[k]) {
        (true, true) => true,
        (true, false) => g[k] >= -TOL_ACTIVE,
        (false, true) => g[k] <= TOL_ACTIVE,
        (false, false) => g[k].abs() <= TOL_ACTIVE,
    });
    if separable {
        let coords = (0..n)
            .map(|k| match (lo[k], hi[k]) {
                (true, true) => CoordCone::Zero,
                (true, false) if g[k] > TOL_ACTIVE => CoordCone::Zero,
                (true, false) => CoordCone::Nonnegative,
                (false, true) if g[k] < -TOL_ACTIVE => CoordCone::Zero,
                (false, true) => CoordCone::Nonpositive,
                (false, false) => CoordCone::Free,
            })
            .collect();
        return AgentCone::coordinates(coords);
    }

    let mut ineq = Vec::new();
    let mut eq = Vec::new();
    for k in 0..n {
        let mut e = DVector::zeros(n);
        if lo[k] && hi[k] {
            e[k] = 1.0;
            eq.push(e);
        } else if lo[k] {
            e[k] = -1.0;
            ineq.push(e);
        } else if hi[k] {
            e[k] = 1.0;
            ineq.push(e);
        }
    }
    eq.push(g.clone());
    AgentCone {
        dim: n,
        ineq: stack_rows(&ineq, n),
        eq: stack_rows(&eq, n),
        coords: None,
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::game::QuadraticGame;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    fn scalar_game(c: f64, set: FeasibleSet) -> GameProblem {
        let q = QuadraticGame::new(vec![1], vec![vec![DMatrix::zeros(1, 1)]], vec![v(&[c])]).unwrap();
        GameProblem::with_agent_sets(Arc::new(q), vec![set]).unwrap()
    }

    #[test]
    fn interior_zero_gradient_gives_full_space() {
        let g = scalar_game(0.0, FeasibleSet::uniform_box(1, -1.0, 1.0).unwrap());
        let cone = critical_cone(&g, &v(&[0.2])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let d = v(&[StandardNormal.sample(&mut rng)]);
            assert!(cone.contains(&d, 0.0));
        }
    }

    #[test]
    fn active_lower_bound_with_positive_gradient_is_zero_cone() {
        let g = scalar_game(1.0, FeasibleSet::uniform_box(1, 0.0, 1.0).unwrap());
        let cone = critical_cone(&g, &v(&[0.0])).unwrap();
        assert_eq!(cone.agents[0].coordinates_view(), Some(&[CoordCone::Zero][..]));
        assert!(cone.contains(&v(&[0.0]), 0.0));
        for d in [1e-3, 1.0, -1.0] {
            assert!(!cone.contains(&v(&[d]), 1e-12));
        }
    }

    #[test]
    fn active_halfspace_gives_halfspace_cone() {
        let q = QuadraticGame::zero(vec![2]).unwrap();
        let set = FeasibleSet::polyhedron(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), v(&[1.0])).unwrap();
        let g = GameProblem::with_agent_sets(Arc::new(q), vec![set]).unwrap();
        let cone = critical_cone(&g, &v(&[0.5, 0.5])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let d = v(&[StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)]);
            // feasibility sampling: a* + t d stays feasible for small t iff d1 + d2 ≤ 0
            let feasible = (0.5 + 1e-6 * d[0]) + (0.5 + 1e-6 * d[1]) <= 1.0 + 1e-15;
            assert_eq!(cone.contains(&d, 0.0), d[0] + d[1] <= 0.0);
            assert_eq!(cone.contains(&d, 0.0), feasible);
        }
        assert!(cone.contains(&v(&[0.0, 0.0]), 0.0));
    }

    #[test]
    fn infeasible_point_is_rejected() {
        let g = scalar_game(0.0, FeasibleSet::uniform_box(1, 0.0, 1.0).unwrap());
        assert!(matches!(critical_cone(&g, &v(&[1.1])), Err(Error::Infeasible(_))));
    }

    #[test]
    fn samples_lie_in_polyhedral_cone() {
        let cone = AgentCone::polyhedral(
            DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]),
            DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0]),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let d = cone.sample(&mut rng);
            assert!(cone.contains(&d, 1e-9), "{d}");
        }
    }
}
