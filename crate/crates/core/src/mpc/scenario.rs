use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};

/// Discrete-time plant `x⁺ = f(x, u)` of one agent.
pub trait Plant: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
    /// `(A, B)` when the plant is linear; nonlinear plants return `None` and
    /// cannot be used to assemble horizon games.
    fn linear_matrices(&self) -> Option<(&DMatrix<f64>, &DMatrix<f64>)> {
        None
    }
}

/// `x⁺ = A x + B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPlant {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl LinearPlant {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::InvalidInput(format!("plant A must be square, got {:?}", a.shape())));
        }
        check_len("plant B rows", a.nrows(), b.nrows())?;
        if !a.iter().chain(b.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("plant matrices must be finite".into()));
        }
        Ok(LinearPlant { a, b })
    }

    /// `x⁺ = x + dt·u` with scalar state and input.
    pub fn scalar_integrator(dt: f64) -> Self {
        LinearPlant {
            a: DMatrix::identity(1, 1),
            b: DMatrix::from_element(1, 1, dt),
        }
    }

    /// Planar double integrator, state `(p_x, p_y, v_x, v_y)`, input `(a_x, a_y)`.
    pub fn planar_double_integrator(dt: f64) -> Self {
        let mut a = DMatrix::identity(4, 4);
        a[(0, 2)] = dt;
        a[(1, 3)] = dt;
        let mut b = DMatrix::zeros(4, 2);
        b[(0, 0)] = 0.5 * dt * dt;
        b[(1, 1)] = 0.5 * dt * dt;
        b[(2, 0)] = dt;
        b[(3, 1)] = dt;
        LinearPlant { a, b }
    }

    /// `x⁺ = x`, ignoring the input.
    pub fn static_plant(nx: usize, nu: usize) -> Self {
        LinearPlant {
            a: DMatrix::identity(nx, nx),
            b: DMatrix::zeros(nx, nu),
        }
    }
}

impl Plant for LinearPlant {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }

    fn linear_matrices(&self) -> Option<(&DMatrix<f64>, &DMatrix<f64>)> {
        Some((&self.a, &self.b))
    }
}

/// One agent of an MPC scenario. `q` and `p` weight the joint state (stage and
/// terminal), `r` the agent's own input.
#[derive(Clone)]
pub struct MpcAgent {
    pub plant: Arc<dyn Plant>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub p: DMatrix<f64>,
    /// Per-step input box `lo ≤ u ≤ hi`.
    pub input_bounds: Option<(DVector<f64>, DVector<f64>)>,
}

impl fmt::Debug for MpcAgent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MpcAgent")
            .field("nx", &self.plant.state_dim())
            .field("nu", &self.plant.input_dim())
            .field("q", &self.q)
            .field("r", &self.r)
            .field("p", &self.p)
            .field("input_bounds", &self.input_bounds)
            .finish()
    }
}

/// How the horizon problem is posed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MpcMode {
    /// States eliminated by forward substitution; decision = inputs; input
    /// boxes are fixed sets.
    #[default]
    Ne,
    /// Multiple shooting: decision = (states, inputs) per agent, dynamics as
    /// paired inequalities, all constraints in `g_i`.
    Gne,
}

#[derive(Debug, Clone)]
pub struct MpcScenario {
    pub agents: Vec<MpcAgent>,
    pub horizon: usize,
    pub mode: MpcMode,
    /// Shared per-step budget `Σ_i 1ᵀu_i(τ) ≤ budget` (GNE mode only).
    pub input_budget: Option<f64>,
    pub x0: DVector<f64>,
    pub k_budget: usize,
    pub t_end: usize,
    /// Norm of the offset added to the exact solution to form `v(−1)`.
    pub e0: f64,
}

impl MpcScenario {
    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn state_dims(&self) -> Vec<usize> {
        self.agents.iter().map(|a| a.plant.state_dim()).collect()
    }

    pub fn input_dims(&self) -> Vec<usize> {
        self.agents.iter().map(|a| a.plant.input_dim()).collect()
    }

    pub fn joint_state_dim(&self) -> usize {
        self.state_dims().iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents.is_empty() {
            return Err(Error::InvalidInput("scenario needs at least one agent".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidInput("horizon must be at least 1".into()));
        }
        let nx = self.joint_state_dim();
        check_len("initial state", nx, self.x0.len())?;
        if !self.x0.iter().all(|v| v.is_finite()) || !self.e0.is_finite() || self.e0 < 0.0 {
            return Err(Error::InvalidInput("x0 and e0 must be finite, e0 nonnegative".into()));
        }
        for (i, ag) in self.agents.iter().enumerate() {
            let nu = ag.plant.input_dim();
            for (name, m, dim) in [("q", &ag.q, nx), ("p", &ag.p, nx), ("r", &ag.r, nu)] {
                if m.shape() != (dim, dim) {
                    return Err(Error::InvalidInput(format!(
                        "agent {i}: weight {name} has shape {:?}, expected ({dim}, {dim})",
                        m.shape()
                    )));
                }
                if !m.iter().all(|v| v.is_finite()) {
                    return Err(Error::InvalidInput(format!("agent {i}: weight {name} is not finite")));
                }
            }
            if let Some((lo, hi)) = &ag.input_bounds {
                check_len("input lower bound", nu, lo.len())?;
                check_len("input upper bound", nu, hi.len())?;
                if lo.iter().zip(hi.iter()).any(|(l, h)| !(l <= h)) {
                    return Err(Error::InvalidInput(format!("agent {i}: input bounds are inverted")));
                }
            }
        }
        if self.input_budget.is_some() && self.mode == MpcMode::Ne {
            return Err(Error::InvalidInput(
                "a shared input budget couples the agents' feasible sets and needs GNE mode".into(),
            ));
        }
        Ok(())
    }
}

/// Settings of the built-in pursuit family.
#[derive(Debug, Clone, PartialEq)]
pub struct PursuitSpec {
    pub n_agents: usize,
    /// Planar double integrators instead of scalar integrators.
    pub planar: bool,
    pub horizon: usize,
    pub dt: f64,
    /// Weight on the own position.
    pub q_self: f64,
    /// Weight on the distance to the next agent (cyclically).
    pub q_pursuit: f64,
    pub r: f64,
    pub terminal_scale: f64,
    pub u_max: Option<f64>,
    pub k_budget: usize,
    pub t_end: usize,
    pub e0: f64,
}

impl Default for PursuitSpec {
    fn default() -> Self {
        PursuitSpec {
            n_agents: 2,
            planar: false,
            horizon: 5,
            dt: 0.5,
            q_self: 0.2,
            q_pursuit: 1.0,
            r: 2.0,
            terminal_scale: 2.0,
            u_max: Some(1.0),
            k_budget: 1,
            t_end: 40,
            e0: 0.1,
        }
    }
}

/// Coupled linear-quadratic pursuit: agent `i` is pulled towards agent
/// `i+1 (mod N)` and towards the origin, and pays for its inputs.
pub fn pursuit_scenario(spec: &PursuitSpec) -> Result<MpcScenario> {
    let n = spec.n_agents;
    if !(2..=4).contains(&n) {
        return Err(Error::InvalidInput(format!("pursuit family has 2–4 agents, got {n}")));
    }
    let plant = if spec.planar {
        LinearPlant::planar_double_integrator(spec.dt)
    } else {
        LinearPlant::scalar_integrator(spec.dt)
    };
    let (nx_i, nu_i) = (plant.state_dim(), plant.input_dim());
    let npos = if spec.planar { 2 } else { 1 };
    let nx = n * nx_i;
    let plant: Arc<dyn Plant> = Arc::new(plant);
    let agents = (0..n)
        .map(|i| {
            let j = (i + 1) % n;
            let mut q = DMatrix::zeros(nx, nx);
            for d in 0..npos {
                let (pi, pj) = (i * nx_i + d, j * nx_i + d);
                q[(pi, pi)] += spec.q_self + spec.q_pursuit;
                q[(pj, pj)] += spec.q_pursuit;
                q[(pi, pj)] -= spec.q_pursuit;
                q[(pj, pi)] -= spec.q_pursuit;
            }
            MpcAgent {
                plant: Arc::clone(&plant),
                p: &q * spec.terminal_scale,
                q,
                r: DMatrix::identity(nu_i, nu_i) * spec.r,
                input_bounds: spec
                    .u_max
                    .map(|m| (DVector::from_element(nu_i, -m), DVector::from_element(nu_i, m))),
            }
        })
        .collect();
    // Spread-out start positions, zero velocities.
    let mut x0 = DVector::zeros(nx);
    for i in 0..n {
        let s = if i % 2 == 0 { 1.0 } else { -0.6 };
        for d in 0..npos {
            x0[i * nx_i + d] = s * (1.0 + 0.5 * i as f64) * if d == 0 { 1.0 } else { 0.5 };
        }
    }
    let s = MpcScenario {
        agents,
        horizon: spec.horizon,
        mode: MpcMode::Ne,
        input_budget: None,
        x0,
        k_budget: spec.k_budget,
        t_end: spec.t_end,
        e0: spec.e0,
    };
    s.validate()?;
    Ok(s)
}
