use nalgebra::{DMatrix, DVector};

use super::{AgentLayout, CostOracle};
use crate::error::{check_len, Error, Result};

/// Quadratic game `J_i = ½ a_iᵀQ_ii a_i + Σ_{j≠i} a_iᵀQ_ij a_j + c_iᵀa_i`.
///
/// `Q_ii` is symmetrized on construction, so the pseudogradient is the affine
/// map `F(a) = Q a + c` with `Q` the assembled block matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticGame {
    layout: AgentLayout,
    q: Vec<Vec<DMatrix<f64>>>,
    c: Vec<DVector<f64>>,
}

impl QuadraticGame {
    pub fn new(dims: Vec<usize>, q: Vec<Vec<DMatrix<f64>>>, c: Vec<DVector<f64>>) -> Result<Self> {
        let layout = AgentLayout::new(dims)?;
        let n = layout.n_agents();
        check_len("quadratic game block rows", n, q.len())?;
        check_len("quadratic game linear terms", n, c.len())?;
        let mut q = q;
        for i in 0..n {
            check_len("quadratic game block columns", n, q[i].len())?;
            check_len("quadratic game linear term", layout.dims()[i], c[i].len())?;
            for j in 0..n {
                let expected = (layout.dims()[i], layout.dims()[j]);
                if q[i][j].shape() != expected {
                    return Err(Error::InvalidInput(format!(
                        "block Q[{i}][{j}] has shape {:?}, expected {expected:?}",
                        q[i][j].shape()
                    )));
                }
            }
            let sym = (&q[i][i] + q[i][i].transpose()) * 0.5;
            q[i][i] = sym;
        }
        let finite = q.iter().flatten().flat_map(|m| m.iter()).chain(c.iter().flat_map(|v| v.iter()));
        if !finite.into_iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("quadratic game data must be finite".into()));
        }
        Ok(QuadraticGame { layout, q, c })
    }

    /// Builds the game from an assembled matrix `Q` and stacked `c`.
    pub fn from_assembled(dims: Vec<usize>, q: &DMatrix<f64>, c: &DVector<f64>) -> Result<Self> {
        let layout = AgentLayout::new(dims.clone())?;
        let n = layout.total();
        if q.shape() != (n, n) {
            return Err(Error::InvalidInput(format!(
                "assembled Q has shape {:?}, expected ({n}, {n})",
                q.shape()
            )));
        }
        check_len("stacked linear term", n, c.len())?;
        let blocks = (0..layout.n_agents())
            .map(|i| {
                let ri = layout.range(i);
                (0..layout.n_agents())
                    .map(|j| {
                        let rj = layout.range(j);
                        q.view((ri.start, rj.start), (ri.len(), rj.len())).into_owned()
                    })
                    .collect()
            })
            .collect();
        let cs = (0..layout.n_agents()).map(|i| layout.block(c, i)).collect();
        Self::new(dims, blocks, cs)
    }

    pub fn zero(dims: Vec<usize>) -> Result<Self> {
        let n = dims.len();
        let q = (0..n)
            .map(|i| (0..n).map(|j| DMatrix::zeros(dims[i], dims[j])).collect())
            .collect();
        let c = dims.iter().map(|&d| DVector::zeros(d)).collect();
        Self::new(dims, q, c)
    }

    pub fn layout(&self) -> &AgentLayout {
        &self.layout
    }

    pub fn block(&self, i: usize, j: usize) -> &DMatrix<f64> {
        &self.q[i][j]
    }

    pub fn linear_term(&self, i: usize) -> &DVector<f64> {
        &self.c[i]
    }

    /// Assembled game Hessian `Q` (constant).
    pub fn hessian(&self) -> DMatrix<f64> {
        let n = self.layout.total();
        let mut h = DMatrix::zeros(n, n);
        for i in 0..self.layout.n_agents() {
            let ri = self.layout.range(i);
            for j in 0..self.layout.n_agents() {
                let rj = self.layout.range(j);
                h.view_mut((ri.start, rj.start), (ri.len(), rj.len()))
                    .copy_from(&self.q[i][j]);
            }
        }
        h
    }

    /// Stacked linear term `c`.
    pub fn offset(&self) -> DVector<f64> {
        let mut c = DVector::zeros(self.layout.total());
        for i in 0..self.layout.n_agents() {
            self.layout.set_block(&mut c, i, &self.c[i]);
        }
        c
    }
}

impl CostOracle for QuadraticGame {
    fn dims(&self) -> &[usize] {
        self.layout.dims()
    }

    fn cost(&self, agent: usize, a: &DVector<f64>) -> f64 {
        let ai = self.layout.block(a, agent);
        let mut j = 0.5 * ai.dot(&(&self.q[agent][agent] * &ai)) + self.c[agent].dot(&ai);
        for other in 0..self.layout.n_agents() {
            if other != agent {
                j += ai.dot(&(&self.q[agent][other] * self.layout.block(a, other)));
            }
        }
        j
    }

    fn gradient(&self, agent: usize, a: &DVector<f64>) -> DVector<f64> {
        let mut g = self.c[agent].clone();
        for j in 0..self.layout.n_agents() {
            g += &self.q[agent][j] * self.layout.block(a, j);
        }
        g
    }

    fn hessian_block(&self, agent: usize, other: usize, _a: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.q[agent][other].clone())
    }
}

/// Quadratic game plus quartic self terms and a cubic coupling:
///
/// `J_i = quad_i(a) + (β/4) Σ_k a_ik⁴ + (γ/2) ‖a_i‖² s_{-i}`,
/// with `s_{-i}` the sum of all other agents' decision components.
#[derive(Debug, Clone, PartialEq)]
pub struct QuarticGame {
    base: QuadraticGame,
    beta: f64,
    gamma: f64,
}

impl QuarticGame {
    pub fn new(base: QuadraticGame, beta: f64, gamma: f64) -> Result<Self> {
        if !beta.is_finite() || !gamma.is_finite() {
            return Err(Error::InvalidInput("quartic coefficients must be finite".into()));
        }
        Ok(QuarticGame { base, beta, gamma })
    }

    pub fn base(&self) -> &QuadraticGame {
        &self.base
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    fn others_sum(&self, agent: usize, a: &DVector<f64>) -> f64 {
        let r = self.base.layout.range(agent);
        a.sum() - a.rows(r.start, r.len()).sum()
    }
}

impl CostOracle for QuarticGame {
    fn dims(&self) -> &[usize] {
        self.base.dims()
    }

    fn cost(&self, agent: usize, a: &DVector<f64>) -> f64 {
        let ai = self.base.layout.block(a, agent);
        let quartic: f64 = ai.iter().map(|v| v.powi(4)).sum();
        self.base.cost(agent, a)
            + 0.25 * self.beta * quartic
            + 0.5 * self.gamma * ai.norm_squared() * self.others_sum(agent, a)
    }

    fn gradient(&self, agent: usize, a: &DVector<f64>) -> DVector<f64> {
        let ai = self.base.layout.block(a, agent);
        let s = self.others_sum(agent, a);
        let mut g = self.base.gradient(agent, a);
        for (k, v) in ai.iter().enumerate() {
            g[k] += self.beta * v.powi(3) + self.gamma * v * s;
        }
        g
    }

    fn hessian_block(&self, agent: usize, other: usize, a: &DVector<f64>) -> Option<DMatrix<f64>> {
        let ai = self.base.layout.block(a, agent);
        let mut h = self.base.hessian_block(agent, other, a)?;
        if agent == other {
            let s = self.others_sum(agent, a);
            for (k, v) in ai.iter().enumerate() {
                h[(k, k)] += 3.0 * self.beta * v * v + self.gamma * s;
            }
        } else {
            for r in 0..h.nrows() {
                for c in 0..h.ncols() {
                    h[(r, c)] += self.gamma * ai[r];
                }
            }
        }
        Some(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn own_blocks_are_symmetrized() {
        let q = QuadraticGame::new(
            vec![2],
            vec![vec![DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0])]],
            vec![DVector::zeros(2)],
        )
        .unwrap();
        assert_eq!(q.block(0, 0), &DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
    }

    #[test]
    fn assembled_round_trip() {
        let h = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.5, 1.0, 3.0, -1.0, 0.2, 0.4, 1.0]);
        let c = DVector::from_vec(vec![1.0, -1.0, 0.5]);
        let q = QuadraticGame::from_assembled(vec![2, 1], &h, &c).unwrap();
        assert_eq!(q.hessian(), h);
        assert_eq!(q.offset(), c);
    }

    #[test]
    fn wrong_block_shape_is_rejected() {
        let r = QuadraticGame::new(
            vec![1, 1],
            vec![
                vec![DMatrix::zeros(1, 1), DMatrix::zeros(1, 2)],
                vec![DMatrix::zeros(1, 1), DMatrix::zeros(1, 1)],
            ],
            vec![DVector::zeros(1), DVector::zeros(1)],
        );
        assert!(r.is_err());
    }
}
