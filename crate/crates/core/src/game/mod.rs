//! Game definitions, pseudogradient / game Hessian evaluation and the
//! matrix-cone regularity checks.

mod builtin;
mod cone;
mod conditions;
mod constraint;
pub mod fd;
mod quadratic;
mod set;

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};

pub use builtin::{
    analytic_shared_gne, bilinear_pennies_game, decoupled_quadratic_game, quartic_game, quartic_test_game,
    random_monotone_quadratic_game, indefinite_orthant_game, RandomGameSpec, QUARTIC_TEST_EQUILIBRIUM,
};
pub use cone::{critical_cone, AgentCone, CoordCone, CriticalCone, TOL_ACTIVE};
pub use conditions::{
    check_monotonicity, check_strict_semicopositivity, MonotonicityClass, MonotonicityVerdict,
    SemicopositivityVerdict,
};
pub use constraint::{ConstraintFunction, ConstraintRow, QuadraticConstraints};
pub use quadratic::{QuadraticGame, QuarticGame};
pub use set::{FeasibleSet, ProductSet};

/// Sizes and offsets of the per-agent decision blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentLayout {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl AgentLayout {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidInput("a game needs at least one agent".into()));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidInput("agent dimensions must be positive".into()));
        }
        let mut offsets = Vec::with_capacity(dims.len());
        let mut total = 0;
        for &d in &dims {
            offsets.push(total);
            total += d;
        }
        Ok(AgentLayout {
            dims,
            offsets,
            total,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn range(&self, agent: usize) -> Range<usize> {
        self.offsets[agent]..self.offsets[agent] + self.dims[agent]
    }

    pub fn block(&self, v: &DVector<f64>, agent: usize) -> DVector<f64> {
        let r = self.range(agent);
        v.rows(r.start, r.len()).into_owned()
    }

    pub fn set_block(&self, v: &mut DVector<f64>, agent: usize, value: &DVector<f64>) {
        let r = self.range(agent);
        v.rows_mut(r.start, r.len()).copy_from(value);
    }
}

/// Per-agent cost oracle: `J_i(a)`, `∇_{a_i} J_i(a)` and the Hessian blocks
/// `∇²_{a_i a_j} J_i(a)`.
///
/// Derivatives are user supplied in closed form; [`fd`] offers finite
/// difference checks for validating them.
pub trait CostOracle: Send + Sync {
    fn dims(&self) -> &[usize];

    fn cost(&self, agent: usize, a: &DVector<f64>) -> f64;

    /// Gradient of `J_agent` with respect to the agent's own block.
    fn gradient(&self, agent: usize, a: &DVector<f64>) -> DVector<f64>;

    /// `∇²_{a_agent a_other} J_agent(a)`; `None` when the oracle is unavailable.
    fn hessian_block(&self, agent: usize, other: usize, a: &DVector<f64>) -> Option<DMatrix<f64>>;
}

/// Feasibility description: fixed sets (NE) or coupled constraints (GNE).
#[derive(Clone)]
pub enum Feasibility {
    Sets(ProductSet),
    Constraints(Vec<Arc<dyn ConstraintFunction>>),
}

impl fmt::Debug for Feasibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Feasibility::Sets(s) => f.debug_tuple("Sets").field(s).finish(),
            Feasibility::Constraints(c) => f
                .debug_tuple("Constraints")
                .field(&c.iter().map(|g| g.len()).collect::<Vec<_>>())
                .finish(),
        }
    }
}

/// An `N`-agent game: cost oracles plus feasibility data.
#[derive(Clone)]
pub struct GameProblem {
    costs: Arc<dyn CostOracle>,
    layout: AgentLayout,
    feasibility: Feasibility,
}

impl fmt::Debug for GameProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GameProblem")
            .field("dims", &self.layout.dims)
            .field("feasibility", &self.feasibility)
            .finish()
    }
}

impl GameProblem {
    /// NE-form game over fixed per-agent (or joint) sets.
    pub fn with_sets(costs: Arc<dyn CostOracle>, sets: ProductSet) -> Result<Self> {
        let layout = AgentLayout::new(costs.dims().to_vec())?;
        check_len("feasible set dimension", layout.total(), sets.dim())?;
        Ok(GameProblem {
            costs,
            layout,
            feasibility: Feasibility::Sets(sets),
        })
    }

    /// NE-form game with one feasible set per agent.
    pub fn with_agent_sets(costs: Arc<dyn CostOracle>, sets: Vec<FeasibleSet>) -> Result<Self> {
        let dims = costs.dims().to_vec();
        check_len("number of agent sets", dims.len(), sets.len())?;
        for (i, (s, d)) in sets.iter().zip(&dims).enumerate() {
            if s.dim() != *d {
                return Err(Error::InvalidInput(format!(
                    "agent {i}: set dimension {} does not match decision dimension {d}",
                    s.dim()
                )));
            }
        }
        Self::with_sets(costs, ProductSet::new(sets))
    }

    /// Unconstrained NE-form game.
    pub fn unconstrained(costs: Arc<dyn CostOracle>) -> Result<Self> {
        let sets = costs.dims().iter().map(|&d| FeasibleSet::unbounded(d)).collect();
        Self::with_agent_sets(costs, sets)
    }

    /// GNE-form game with one constraint function `g_i(a) ≤ 0` per agent.
    pub fn with_constraints(
        costs: Arc<dyn CostOracle>,
        constraints: Vec<Arc<dyn ConstraintFunction>>,
    ) -> Result<Self> {
        let layout = AgentLayout::new(costs.dims().to_vec())?;
        check_len("number of agent constraint functions", layout.n_agents(), constraints.len())?;
        for (i, g) in constraints.iter().enumerate() {
            if g.n_vars() != layout.total() {
                return Err(Error::InvalidInput(format!(
                    "agent {i}: constraint function acts on {} variables, game has {}",
                    g.n_vars(),
                    layout.total()
                )));
            }
        }
        Ok(GameProblem {
            costs,
            layout,
            feasibility: Feasibility::Constraints(constraints),
        })
    }

    pub fn layout(&self) -> &AgentLayout {
        &self.layout
    }

    pub fn n_agents(&self) -> usize {
        self.layout.n_agents()
    }

    pub fn dim(&self) -> usize {
        self.layout.total()
    }

    pub fn costs(&self) -> &Arc<dyn CostOracle> {
        &self.costs
    }

    pub fn feasibility(&self) -> &Feasibility {
        &self.feasibility
    }

    /// The fixed feasible set of an NE-form game.
    pub fn sets(&self) -> Result<&ProductSet> {
        match &self.feasibility {
            Feasibility::Sets(s) => Ok(s),
            Feasibility::Constraints(_) => Err(Error::InvalidInput(
                "operation requires an NE-form game with fixed feasible sets".into(),
            )),
        }
    }

    /// Per-agent feasible sets; fails when the product blocks are not aligned with agents.
    pub fn agent_sets(&self) -> Result<&[FeasibleSet]> {
        let sets = self.sets()?;
        if sets.block_dims() != self.layout.dims() {
            return Err(Error::InvalidInput(
                "operation requires one feasible set per agent".into(),
            ));
        }
        Ok(sets.blocks())
    }

    /// Constraint functions of a GNE-form game.
    pub fn constraints(&self) -> Result<&[Arc<dyn ConstraintFunction>]> {
        match &self.feasibility {
            Feasibility::Constraints(c) => Ok(c),
            Feasibility::Sets(_) => Err(Error::InvalidInput(
                "operation requires a GNE-form game with constraint functions".into(),
            )),
        }
    }

    /// Per-agent constraint counts `m_i` (zero for NE-form games).
    pub fn constraint_counts(&self) -> Vec<usize> {
        match &self.feasibility {
            Feasibility::Constraints(c) => c.iter().map(|g| g.len()).collect(),
            Feasibility::Sets(_) => vec![0; self.n_agents()],
        }
    }

    pub fn check_point(&self, a: &DVector<f64>) -> Result<()> {
        check_len("decision vector", self.dim(), a.len())?;
        if !a.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("decision vector must be finite".into()));
        }
        Ok(())
    }

    /// Same costs with different feasibility data.
    pub fn with_feasibility(&self, feasibility: Feasibility) -> Self {
        GameProblem {
            costs: Arc::clone(&self.costs),
            layout: self.layout.clone(),
            feasibility,
        }
    }
}

/// Block and assembled form of the game Hessian. Generally non-symmetric.
#[derive(Debug, Clone)]
pub struct GameHessian {
    pub blocks: Vec<Vec<DMatrix<f64>>>,
    pub assembled: DMatrix<f64>,
}

/// Stack of `∇_{a_i} J_i(a)` over agents, in agent order.
pub fn pseudogradient(game: &GameProblem, a: &DVector<f64>) -> Result<DVector<f64>> {
    check_len("decision vector", game.dim(), a.len())?;
    let layout = game.layout();
    let mut f = DVector::zeros(layout.total());
    for i in 0..layout.n_agents() {
        let g = game.costs().gradient(i, a);
        check_len("agent gradient", layout.dims()[i], g.len())?;
        layout.set_block(&mut f, i, &g);
    }
    Ok(f)
}

/// Game Hessian with blocks `H_ij = ∇²_{a_i a_j} J_i(a)`.
pub fn game_hessian(game: &GameProblem, a: &DVector<f64>) -> Result<GameHessian> {
    check_len("decision vector", game.dim(), a.len())?;
    let layout = game.layout();
    let n = layout.total();
    let mut assembled = DMatrix::zeros(n, n);
    let mut blocks = Vec::with_capacity(layout.n_agents());
    for i in 0..layout.n_agents() {
        let mut row = Vec::with_capacity(layout.n_agents());
        for j in 0..layout.n_agents() {
            let h = game.costs().hessian_block(i, j, a).ok_or_else(|| {
                Error::MissingOracle(format!("Hessian block ({i}, {j}) is not available"))
            })?;
            let (ri, rj) = (layout.range(i), layout.range(j));
            if h.shape() != (ri.len(), rj.len()) {
                return Err(Error::InvalidInput(format!(
                    "Hessian block ({i}, {j}) has shape {:?}, expected ({}, {})",
                    h.shape(),
                    ri.len(),
                    rj.len()
                )));
            }
            assembled
                .view_mut((ri.start, rj.start), (ri.len(), rj.len()))
                .copy_from(&h);
            row.push(h);
        }
        blocks.push(row);
    }
    Ok(GameHessian { blocks, assembled })
}

/// Own-block Hessian `∇²_{a_i a_i} J_i(a)`.
pub(crate) fn own_hessian(game: &GameProblem, agent: usize, a: &DVector<f64>) -> Result<DMatrix<f64>> {
    game.costs()
        .hessian_block(agent, agent, a)
        .ok_or_else(|| Error::MissingOracle(format!("Hessian block ({agent}, {agent}) is not available")))
}
