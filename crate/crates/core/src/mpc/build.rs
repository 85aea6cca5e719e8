use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::scenario::{MpcMode, MpcScenario};
use crate::error::{check_len, Error, Result};
use crate::game::{ConstraintFunction, CostOracle, FeasibleSet, GameProblem, QuadraticConstraints};

/// Costs `J_i(a) = ½ aᵀW_i a + w_iᵀa + c_i` over the full decision vector.
///
/// `W_i` also carries terms in the other agents' variables so that `J_i` is the
/// exact horizon cost, not only its partial gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonCosts {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    w: Vec<DMatrix<f64>>,
    lin: Vec<DVector<f64>>,
    constant: Vec<f64>,
}

impl HorizonCosts {
    fn new(dims: Vec<usize>, w: Vec<DMatrix<f64>>, lin: Vec<DVector<f64>>, constant: Vec<f64>) -> Self {
        let mut offsets = Vec::with_capacity(dims.len());
        let mut off = 0;
        for d in &dims {
            offsets.push(off);
            off += d;
        }
        let w = w.into_iter().map(|m| (&m + m.transpose()) * 0.5).collect();
        HorizonCosts {
            dims,
            offsets,
            w,
            lin,
            constant,
        }
    }

    fn range(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i] + self.dims[i]
    }
}

impl CostOracle for HorizonCosts {
    fn dims(&self) -> &[usize] {
        &self.dims
    }

    fn cost(&self, agent: usize, a: &DVector<f64>) -> f64 {
        0.5 * a.dot(&(&self.w[agent] * a)) + self.lin[agent].dot(a) + self.constant[agent]
    }

    fn gradient(&self, agent: usize, a: &DVector<f64>) -> DVector<f64> {
        let r = self.range(agent);
        self.w[agent].rows(r.start, r.len()) * a + self.lin[agent].rows(r.start, r.len())
    }

    fn hessian_block(&self, agent: usize, other: usize, _a: &DVector<f64>) -> Option<DMatrix<f64>> {
        let (r, c) = (self.range(agent), self.range(other));
        Some(self.w[agent].view((r.start, c.start), (r.len(), c.len())).into_owned())
    }
}

/// The horizon game at a fixed state `x`.
#[derive(Debug, Clone)]
pub struct ParameterizedGame {
    pub game: GameProblem,
    pub mode: MpcMode,
    pub x: DVector<f64>,
    /// Position of `u_i(0)` inside the primal decision vector, per agent.
    pub selector: Vec<Range<usize>>,
}

impl ParameterizedGame {
    /// Number of primal variables.
    pub fn n_primal(&self) -> usize {
        self.game.dim()
    }

    /// Length of the solver iterate `v`: primal only (NE) or primal plus
    /// multipliers (GNE).
    pub fn decision_dim(&self) -> usize {
        self.game.dim() + self.game.constraint_counts().iter().sum::<usize>()
    }

    pub fn primal(&self, v: &DVector<f64>) -> DVector<f64> {
        v.rows(0, self.n_primal()).into_owned()
    }

    /// Joint first-step input `u = s·v`.
    pub fn inputs(&self, v: &DVector<f64>) -> Vec<DVector<f64>> {
        self.selector
            .iter()
            .map(|r| v.rows(r.start, r.len()).into_owned())
            .collect()
    }
}

/// Assembles the horizon game of `s` at state `x`.
///
/// NE mode eliminates the states by forward substitution (decision = stacked
/// inputs, input boxes as fixed sets). GNE mode keeps states as decisions and
/// writes each dynamics equation as a pair of inequalities.
pub fn build_parameterized_game(s: &MpcScenario, x: &DVector<f64>) -> Result<ParameterizedGame> {
    s.validate()?;
    check_len("state", s.joint_state_dim(), x.len())?;
    if s.agents.iter().any(|a| a.plant.linear_matrices().is_none()) {
        return Err(Error::Unsupported(
            "horizon games are assembled only for linear plants; nonlinear plants need user derivative oracles".into(),
        ));
    }
    match s.mode {
        MpcMode::Ne => build_ne(s, x),
        MpcMode::Gne => build_gne(s, x),
    }
}

/// Block-diagonal joint `A` and per-agent `B_j` embedded in joint state rows.
fn joint_matrices(s: &MpcScenario) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
    let nx = s.joint_state_dim();
    let mut a = DMatrix::zeros(nx, nx);
    let mut bs = Vec::new();
    let mut off = 0;
    for ag in &s.agents {
        let (ai, bi) = ag.plant.linear_matrices().expect("checked linear");
        let k = ai.nrows();
        a.view_mut((off, off), (k, k)).copy_from(ai);
        let mut b = DMatrix::zeros(nx, bi.ncols());
        b.view_mut((off, 0), (k, bi.ncols())).copy_from(bi);
        bs.push(b);
        off += k;
    }
    (a, bs)
}

fn block_diag_repeat(m: &DMatrix<f64>, times: usize) -> DMatrix<f64> {
    let k = m.nrows();
    let mut out = DMatrix::zeros(k * times, k * times);
    for t in 0..times {
        out.view_mut((t * k, t * k), (k, k)).copy_from(m);
    }
    out
}

fn build_ne(s: &MpcScenario, x: &DVector<f64>) -> Result<ParameterizedGame> {
    let t_h = s.horizon;
    let nx = s.joint_state_dim();
    let nus = s.input_dims();
    let dims: Vec<usize> = nus.iter().map(|nu| t_h * nu).collect();
    let n: usize = dims.iter().sum();
    let offsets: Vec<usize> = dims.iter().scan(0, |acc, d| {
        let o = *acc;
        *acc += d;
        Some(o)
    })
    .collect();
    let (a, bs) = joint_matrices(s);
    let mut powers = vec![DMatrix::identity(nx, nx)];
    for k in 1..=t_h {
        let next = &a * &powers[k - 1];
        powers.push(next);
    }
    // ξ(1..T) = Sx x + Su v.
    let mut sx = DMatrix::zeros(t_h * nx, nx);
    let mut su = DMatrix::zeros(t_h * nx, n);
    for tau in 1..=t_h {
        sx.view_mut(((tau - 1) * nx, 0), (nx, nx)).copy_from(&powers[tau]);
        for (j, b) in bs.iter().enumerate() {
            for step in 0..tau {
                let blk = &powers[tau - 1 - step] * b;
                su.view_mut(((tau - 1) * nx, offsets[j] + step * nus[j]), (nx, nus[j]))
                    .copy_from(&blk);
            }
        }
    }
    let mut w = Vec::new();
    let mut lin = Vec::new();
    let mut constant = Vec::new();
    for (i, ag) in s.agents.iter().enumerate() {
        let mut qbar = DMatrix::zeros(t_h * nx, t_h * nx);
        for tau in 1..=t_h {
            let m = if tau == t_h { &ag.p } else { &ag.q };
            qbar.view_mut(((tau - 1) * nx, (tau - 1) * nx), (nx, nx)).copy_from(m);
        }
        let mut wi = su.transpose() * &qbar * &su;
        let rbar = block_diag_repeat(&ag.r, t_h);
        let mut own = wi.view_mut((offsets[i], offsets[i]), (dims[i], dims[i]));
        own += &rbar;
        wi = (&wi + wi.transpose()) * 0.5;
        let sxx = &sx * x;
        lin.push(su.transpose() * &qbar * &sxx);
        constant.push(0.5 * (sxx.dot(&(&qbar * &sxx)) + x.dot(&(&ag.q * x))));
        w.push(wi);
    }
    let costs = HorizonCosts::new(dims.clone(), w, lin, constant);
    let sets = s
        .agents
        .iter()
        .zip(&dims)
        .map(|(ag, &d)| match &ag.input_bounds {
            Some((lo, hi)) => {
                let lo = DVector::from_fn(d, |k, _| lo[k % lo.len()]);
                let hi = DVector::from_fn(d, |k, _| hi[k % hi.len()]);
                FeasibleSet::boxed(lo, hi)
            }
            None => Ok(FeasibleSet::unbounded(d)),
        })
        .collect::<Result<Vec<_>>>()?;
    let game = GameProblem::with_agent_sets(Arc::new(costs), sets)?;
    let selector = offsets.iter().zip(&nus).map(|(&o, &nu)| o..o + nu).collect();
    Ok(ParameterizedGame {
        game,
        mode: MpcMode::Ne,
        x: x.clone(),
        selector,
    })
}

fn build_gne(s: &MpcScenario, x: &DVector<f64>) -> Result<ParameterizedGame> {
    let t_h = s.horizon;
    let nx = s.joint_state_dim();
    let nxs = s.state_dims();
    let nus = s.input_dims();
    let dims: Vec<usize> = nxs.iter().zip(&nus).map(|(a, b)| t_h * (a + b)).collect();
    let n: usize = dims.iter().sum();
    let offsets: Vec<usize> = dims.iter().scan(0, |acc, d| {
        let o = *acc;
        *acc += d;
        Some(o)
    })
    .collect();
    let state_off: Vec<usize> = nxs.iter().scan(0, |acc, d| {
        let o = *acc;
        *acc += d;
        Some(o)
    })
    .collect();
    let xi = |j: usize, tau: usize, c: usize| offsets[j] + (tau - 1) * nxs[j] + c;
    let mu = |j: usize, tau: usize, c: usize| offsets[j] + t_h * nxs[j] + tau * nus[j] + c;

    // Joint state at τ ≥ 1 as a selection of the decision vector.
    let select = |tau: usize| {
        let mut sel = DMatrix::zeros(nx, n);
        for j in 0..nxs.len() {
            for c in 0..nxs[j] {
                sel[(state_off[j] + c, xi(j, tau, c))] = 1.0;
            }
        }
        sel
    };
    let mut w = Vec::new();
    for (i, ag) in s.agents.iter().enumerate() {
        let mut wi = DMatrix::zeros(n, n);
        for tau in 1..=t_h {
            let sel = select(tau);
            let m = if tau == t_h { &ag.p } else { &ag.q };
            wi += sel.transpose() * m * &sel;
        }
        for tau in 0..t_h {
            for r in 0..nus[i] {
                for c in 0..nus[i] {
                    wi[(mu(i, tau, r), mu(i, tau, c))] += ag.r[(r, c)];
                }
            }
        }
        w.push(wi);
    }
    let constant = s.agents.iter().map(|ag| 0.5 * x.dot(&(&ag.q * x))).collect();
    let costs = HorizonCosts::new(dims.clone(), w, vec![DVector::zeros(n); s.n_agents()], constant);

    let mut constraints: Vec<Arc<dyn ConstraintFunction>> = Vec::new();
    for (i, ag) in s.agents.iter().enumerate() {
        let (ai, bi) = ag.plant.linear_matrices().expect("checked linear");
        let xi0 = x.rows(state_off[i], nxs[i]).into_owned();
        let ax0 = ai * &xi0;
        let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
        for tau in 0..t_h {
            // ξ_i(τ+1) − A_i ξ_i(τ) − B_i μ_i(τ) = 0, with ξ_i(0) = x_i.
            for c in 0..nxs[i] {
                let mut row = DVector::zeros(n);
                row[xi(i, tau + 1, c)] = 1.0;
                if tau > 0 {
                    for k in 0..nxs[i] {
                        row[xi(i, tau, k)] -= ai[(c, k)];
                    }
                }
                for k in 0..nus[i] {
                    row[mu(i, tau, k)] -= bi[(c, k)];
                }
                let rhs = if tau == 0 { ax0[c] } else { 0.0 };
                rows.push((row.clone(), rhs));
                rows.push((-row, -rhs));
            }
        }
        if let Some((lo, hi)) = &ag.input_bounds {
            for tau in 0..t_h {
                for k in 0..nus[i] {
                    let mut row = DVector::zeros(n);
                    row[mu(i, tau, k)] = 1.0;
                    if hi[k].is_finite() {
                        rows.push((row.clone(), hi[k]));
                    }
                    if lo[k].is_finite() {
                        rows.push((-row, -lo[k]));
                    }
                }
            }
        }
        if let Some(budget) = s.input_budget {
            for tau in 0..t_h {
                let mut row = DVector::zeros(n);
                for j in 0..nus.len() {
                    for k in 0..nus[j] {
                        row[mu(j, tau, k)] = 1.0;
                    }
                }
                rows.push((row, budget));
            }
        }
        let a_mat = DMatrix::from_fn(rows.len(), n, |r, c| rows[r].0[c]);
        let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
        constraints.push(Arc::new(QuadraticConstraints::linear(a_mat, b)?));
    }
    let game = GameProblem::with_constraints(Arc::new(costs), constraints)?;
    let selector = (0..s.n_agents())
        .map(|i| mu(i, 0, 0)..mu(i, 0, 0) + nus[i])
        .collect();
    Ok(ParameterizedGame {
        game,
        mode: MpcMode::Gne,
        x: x.clone(),
        selector,
    })
}

/// Joint horizon cost of agent `i` by direct rollout of the plant, used as an
/// independent oracle for the assembled costs.
pub fn rollout_cost(s: &MpcScenario, agent: usize, x: &DVector<f64>, inputs: &[Vec<DVector<f64>>]) -> f64 {
    let ag = &s.agents[agent];
    let mut xs = x.clone();
    let mut total = 0.5 * xs.dot(&(&ag.q * &xs));
    let nxs = s.state_dims();
    for tau in 0..s.horizon {
        let mut next = DVector::zeros(xs.len());
        let mut off = 0;
        for (j, a) in s.agents.iter().enumerate() {
            let xj = xs.rows(off, nxs[j]).into_owned();
            next.rows_mut(off, nxs[j]).copy_from(&a.plant.step(&xj, &inputs[j][tau]));
            off += nxs[j];
        }
        let u = &inputs[agent][tau];
        total += 0.5 * u.dot(&(&ag.r * u));
        let m = if tau + 1 == s.horizon { &ag.p } else { &ag.q };
        total += 0.5 * next.dot(&(m * &next));
        xs = next;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{fd, pseudogradient};
    use crate::mpc::scenario::{pursuit_scenario, LinearPlant, MpcAgent, Plant, PursuitSpec};

    fn scalar_two_agent(mode: MpcMode, horizon: usize) -> MpcScenario {
        let plant: Arc<dyn Plant> = Arc::new(LinearPlant::scalar_integrator(1.0));
        let agent = |q: DMatrix<f64>| MpcAgent {
            plant: Arc::clone(&plant),
            p: q.clone(),
            q,
            r: DMatrix::from_element(1, 1, 1.0),
            input_bounds: None,
        };
        MpcScenario {
            agents: vec![
                agent(DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 1.0])),
                agent(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0])),
            ],
            horizon,
            mode,
            input_budget: None,
            x0: DVector::from_row_slice(&[1.0, -1.0]),
            k_budget: 1,
            t_end: 5,
            e0: 0.0,
        }
    }

    #[test]
    fn one_step_multiple_shooting_matches_hand_assembly() {
        // T = 1, x⁺ = x + u: a_i = (ξ_i(1), μ_i(0)); J_1 = ½ξᵀP_1ξ + ½μ_1².
        let s = scalar_two_agent(MpcMode::Gne, 1);
        let pg = build_parameterized_game(&s, &s.x0).unwrap();
        let a = DVector::from_row_slice(&[0.3, 0.2, -0.4, 0.7]);
        let f = pseudogradient(&pg.game, &a).unwrap();
        let (xi1, mu1, xi2, mu2) = (0.3, 0.2, -0.4, 0.7);
        let hand = [2.0 * xi1 - xi2, mu1, 3.0 * xi2, mu2];
        for k in 0..4 {
            assert!((f[k] - hand[k]).abs() < 1e-14);
        }
        assert_eq!(pg.selector, vec![1..2, 3..4]);
        // ξ_1(1) − μ_1(0) = x_1 as a pair of inequalities.
        let g = &pg.game.constraints().unwrap()[0];
        assert_eq!(g.len(), 2);
        let gv = g.value(&DVector::from_row_slice(&[1.5, 0.5, 0.0, 0.0]));
        assert!(gv.amax() < 1e-15);
    }

    #[test]
    fn zero_costs_give_zero_pseudogradient() {
        let mut s = scalar_two_agent(MpcMode::Ne, 1);
        for ag in &mut s.agents {
            ag.q.fill(0.0);
            ag.p.fill(0.0);
            ag.r.fill(0.0);
        }
        for mode in [MpcMode::Ne, MpcMode::Gne] {
            s.mode = mode;
            let pg = build_parameterized_game(&s, &s.x0).unwrap();
            let a = DVector::from_fn(pg.n_primal(), |k, _| 0.1 * k as f64 - 0.2);
            assert_eq!(pseudogradient(&pg.game, &a).unwrap().amax(), 0.0);
        }
    }

    #[test]
    fn ne_costs_equal_rollout_and_shift_affinely() {
        let s = pursuit_scenario(&PursuitSpec {
            planar: true,
            n_agents: 3,
            horizon: 4,
            ..PursuitSpec::default()
        })
        .unwrap();
        let x = DVector::from_fn(s.joint_state_dim(), |k, _| (k as f64 * 0.37).sin());
        let pg = build_parameterized_game(&s, &x).unwrap();
        let v = DVector::from_fn(pg.n_primal(), |k, _| (k as f64 * 0.61).cos() * 0.5);
        let dims = pg.game.layout().dims().to_vec();
        let inputs: Vec<Vec<DVector<f64>>> = (0..3)
            .map(|j| {
                let blk = pg.game.layout().block(&v, j);
                let nu = dims[j] / s.horizon;
                (0..s.horizon).map(|t| blk.rows(t * nu, nu).into_owned()).collect()
            })
            .collect();
        for i in 0..3 {
            let c = pg.game.costs().cost(i, &v);
            assert!((c - rollout_cost(&s, i, &x, &inputs)).abs() < 1e-12 * c.abs().max(1.0));
        }
        assert!(fd::check_pseudogradient(&pg.game, &v).unwrap().passed());
        assert!(fd::check_game_hessian(&pg.game, &v).unwrap().passed());
        // F(v; x + δ) − F(v; x) is independent of v.
        let delta = DVector::from_fn(x.len(), |k, _| 0.01 * (k + 1) as f64);
        let shifted = build_parameterized_game(&s, &(&x + &delta)).unwrap();
        let d1 = pseudogradient(&shifted.game, &v).unwrap() - pseudogradient(&pg.game, &v).unwrap();
        let zero = DVector::zeros(v.len());
        let d2 = pseudogradient(&shifted.game, &zero).unwrap() - pseudogradient(&pg.game, &zero).unwrap();
        assert!((d1 - d2).amax() < 1e-12);
    }

    #[test]
    fn gne_costs_equal_rollout_on_dynamics_consistent_points() {
        let mut s = scalar_two_agent(MpcMode::Gne, 3);
        s.agents[0].input_bounds = Some((DVector::from_element(1, -1.0), DVector::from_element(1, 1.0)));
        s.input_budget = Some(0.6);
        let x = s.x0.clone();
        let pg = build_parameterized_game(&s, &x).unwrap();
        let us = [[0.2, -0.1, 0.4], [-0.3, 0.5, 0.1]];
        let mut a = DVector::zeros(pg.n_primal());
        for j in 0..2 {
            let mut state = x[j];
            for t in 0..3 {
                state += us[j][t];
                a[j * 6 + t] = state;
                a[j * 6 + 3 + t] = us[j][t];
            }
        }
        let inputs: Vec<Vec<DVector<f64>>> = us
            .iter()
            .map(|u| u.iter().map(|v| DVector::from_element(1, *v)).collect())
            .collect();
        for i in 0..2 {
            assert!((pg.game.costs().cost(i, &a) - rollout_cost(&s, i, &x, &inputs)).abs() < 1e-12);
            let gv = pg.game.constraints().unwrap()[i].value(&a);
            // 6 dynamics rows at zero, then bounds / budget strictly satisfied.
            assert!(gv.rows(0, 6).amax() < 1e-15);
            assert!(gv.rows(6, gv.len() - 6).max() < 0.0);
        }
        assert!(fd::check_pseudogradient(&pg.game, &a).unwrap().passed());
    }

    #[test]
    fn budget_requires_gne_mode_and_nonlinear_plants_are_unsupported() {
        let mut s = scalar_two_agent(MpcMode::Ne, 2);
        s.input_budget = Some(1.0);
        assert!(build_parameterized_game(&s, &s.x0.clone()).is_err());

        struct Cubic;
        impl Plant for Cubic {
            fn state_dim(&self) -> usize {
                1
            }
            fn input_dim(&self) -> usize {
                1
            }
            fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
                x.map(|v| v * v * v) + u
            }
        }
        let mut s = scalar_two_agent(MpcMode::Ne, 2);
        s.agents[1].plant = Arc::new(Cubic);
        assert!(matches!(build_parameterized_game(&s, &s.x0.clone()), Err(Error::Unsupported(_))));
    }
}
