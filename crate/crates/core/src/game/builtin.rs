//! Built-in test games with known structure.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{
    ConstraintFunction, CostOracle, FeasibleSet, GameProblem, QuadraticConstraints, QuadraticGame,
    QuarticGame,
};

/// Equilibrium of [`quartic_test_game`].
pub const QUARTIC_TEST_EQUILIBRIUM: [f64; 4] = [0.5, -0.3, -0.4, 0.6];

/// `J_1 = ½a_1² − 3a_1a_2`, `J_2 = a_1a_2`, unconstrained. Game Hessian
/// `[[1, −3], [1, 0]]`: not monotone, yet strictly semicopositive on the open
/// positive orthant.
pub fn indefinite_orthant_game() -> GameProblem {
    let q = QuadraticGame::from_assembled(
        vec![1, 1],
        &DMatrix::from_row_slice(2, 2, &[1.0, -3.0, 1.0, 0.0]),
        &DVector::zeros(2),
    )
    .expect("valid built-in game");
    GameProblem::unconstrained(Arc::new(q)).expect("valid built-in game")
}

/// Parameters of [`random_monotone_quadratic_game`].
#[derive(Debug, Clone, PartialEq)]
pub struct RandomGameSpec {
    /// Inclusive range of the number of agents.
    pub n_agents: (usize, usize),
    pub max_agent_dim: usize,
    pub max_total_dim: usize,
    /// Added to the diagonal of the Gram part; the symmetric part of the
    /// game Hessian is at least this positive definite.
    pub shift: f64,
    pub skew_scale: f64,
    pub linear_scale: f64,
}

impl Default for RandomGameSpec {
    fn default() -> Self {
        RandomGameSpec {
            n_agents: (2, 3),
            max_agent_dim: 3,
            max_total_dim: 8,
            shift: 0.5,
            skew_scale: 1.0,
            linear_scale: 1.0,
        }
    }
}

/// Random strongly monotone quadratic game with box sets `[−l, u]`,
/// `l, u ∈ [0.2, 1]`. Returns the game and its cost data.
pub fn random_monotone_quadratic_game(spec: &RandomGameSpec, seed: u64) -> (GameProblem, QuadraticGame) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = spec.n_agents;
    let n_agents = lo + (rng.random::<f64>() * (hi - lo + 1) as f64) as usize;
    let n_agents = n_agents.min(hi).max(1);
    let mut dims: Vec<usize> = (0..n_agents)
        .map(|_| 1 + (rng.random::<f64>() * spec.max_agent_dim as f64) as usize)
        .map(|d| d.min(spec.max_agent_dim))
        .collect();
    while dims.iter().sum::<usize>() > spec.max_total_dim {
        let k = (0..dims.len()).max_by_key(|&k| dims[k]).unwrap_or(0);
        if dims[k] == 1 {
            break;
        }
        dims[k] -= 1;
    }
    let n: usize = dims.iter().sum();

    let mut gauss = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng));
    let b: DMatrix<f64> = gauss(n, n);
    let skew_src: DMatrix<f64> = gauss(n, n);
    let c_vec: DMatrix<f64> = gauss(n, 1);
    let mut skew = (&skew_src - skew_src.transpose()) * (0.5 * spec.skew_scale);
    let mut off = 0;
    for &d in &dims {
        skew.view_mut((off, off), (d, d)).fill(0.0);
        off += d;
    }
    let h = b.transpose() * &b / n as f64 + DMatrix::identity(n, n) * spec.shift + skew;
    let c = c_vec.column(0).into_owned() * spec.linear_scale;

    let q = QuadraticGame::from_assembled(dims.clone(), &h, &c).expect("consistent random data");
    let sets = dims
        .iter()
        .map(|&d| {
            let lower = DVector::from_fn(d, |_, _| -(0.2 + 0.8 * rng.random::<f64>()));
            let upper = DVector::from_fn(d, |_, _| 0.2 + 0.8 * rng.random::<f64>());
            FeasibleSet::boxed(lower, upper).expect("valid random box")
        })
        .collect();
    let game = GameProblem::with_agent_sets(Arc::new(q.clone()), sets).expect("consistent random game");
    (game, q)
}

/// Block-diagonal quadratic game (no cross-agent coupling) with box sets `[−1, 1]`.
pub fn decoupled_quadratic_game(dims: &[usize], seed: u64) -> GameProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_agents = dims.len();
    let mut q = Vec::with_capacity(n_agents);
    let mut c = Vec::with_capacity(n_agents);
    for i in 0..n_agents {
        let row = (0..n_agents)
            .map(|j| {
                if i == j {
                    let b = DMatrix::from_fn(dims[i], dims[i], |_, _| StandardNormal.sample(&mut rng));
                    b.transpose() * &b + DMatrix::identity(dims[i], dims[i])
                } else {
                    DMatrix::zeros(dims[i], dims[j])
                }
            })
            .collect();
        q.push(row);
        c.push(DVector::from_fn(dims[i], |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            2.0 * z
        }));
    }
    let game = QuadraticGame::new(dims.to_vec(), q, c).expect("consistent decoupled game");
    let sets = dims
        .iter()
        .map(|&d| FeasibleSet::uniform_box(d, -1.0, 1.0).expect("valid box"))
        .collect();
    GameProblem::with_agent_sets(Arc::new(game), sets).expect("consistent decoupled game")
}

/// Two-agent quartic game with equilibrium [`QUARTIC_TEST_EQUILIBRIUM`] in
/// the interior of `[−3, 3]⁴`. The cross terms are tuned so that the
/// cross-agent Hessian blocks vanish at the equilibrium.
pub fn quartic_test_game() -> GameProblem {
    quartic_game(0.0)
}

/// [`quartic_test_game`] with an extra bilinear coupling `cross · a_iᵀa_j`,
/// which makes the cross-agent Hessian blocks nonzero at the equilibrium.
pub fn quartic_game(cross: f64) -> GameProblem {
    let (beta, gamma) = (1.0, 0.8);
    let a_star = DVector::from_row_slice(&QUARTIC_TEST_EQUILIBRIUM);
    let a1 = a_star.rows(0, 2).into_owned();
    let a2 = a_star.rows(2, 2).into_owned();
    let ones = DMatrix::from_element(1, 2, 1.0);
    let q11 = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.5]);
    let q22 = DMatrix::from_row_slice(2, 2, &[1.8, -0.2, -0.2, 2.2]);
    let q12 = &a1 * &ones * (-gamma) + DMatrix::identity(2, 2) * cross;
    let q21 = &a2 * &ones * (-gamma) + DMatrix::identity(2, 2) * cross;
    let blocks = vec![vec![q11, q12], vec![q21, q22]];

    let base = QuadraticGame::new(vec![2, 2], blocks.clone(), vec![DVector::zeros(2), DVector::zeros(2)])
        .expect("valid quartic base");
    let probe = QuarticGame::new(base, beta, gamma).expect("finite coefficients");
    let c = vec![-probe.gradient(0, &a_star), -probe.gradient(1, &a_star)];
    let base = QuadraticGame::new(vec![2, 2], blocks, c).expect("valid quartic base");
    let game = QuarticGame::new(base, beta, gamma).expect("finite coefficients");
    let sets = vec![
        FeasibleSet::uniform_box(2, -3.0, 3.0).expect("valid box"),
        FeasibleSet::uniform_box(2, -3.0, 3.0).expect("valid box"),
    ];
    GameProblem::with_agent_sets(Arc::new(game), sets).expect("consistent quartic game")
}

/// Matching-pennies-like bilinear game `J_1 = a_1a_2`, `J_2 = −a_1a_2` on
/// `[−1, 1]²`. Own Hessian blocks are zero.
pub fn bilinear_pennies_game() -> GameProblem {
    let q = QuadraticGame::from_assembled(
        vec![1, 1],
        &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
        &DVector::zeros(2),
    )
    .expect("valid built-in game");
    let sets = vec![
        FeasibleSet::uniform_box(1, -1.0, 1.0).expect("valid box"),
        FeasibleSet::uniform_box(1, -1.0, 1.0).expect("valid box"),
    ];
    GameProblem::with_agent_sets(Arc::new(q), sets).expect("valid built-in game")
}

/// Two scalar agents with `J_i = ½a_i² − a_i` and constraints
/// `g_1 = a_1 + c·a_2 − (1+c)/2 ≤ 0`, `g_2 = c·a_1 + a_2 − (1+c)/2 ≤ 0`.
///
/// For every `c` the point `a = (½, ½)`, `λ = (½, ½)` solves the KKT system.
/// `c = 1` is the shared constraint `a_1 + a_2 ≤ 1` registered by both agents;
/// there the KKT Jacobian is singular and the GNE set is the segment
/// `{(t, 1−t, 1−t, t)}`. For `|c| < 1` the KKT Jacobian at the solution has
/// determinant `1 − c²`.
pub fn analytic_shared_gne(c: f64) -> GameProblem {
    let costs = QuadraticGame::from_assembled(
        vec![1, 1],
        &DMatrix::identity(2, 2),
        &DVector::from_row_slice(&[-1.0, -1.0]),
    )
    .expect("valid built-in game");
    let rhs = DVector::from_element(1, 0.5 * (1.0 + c));
    let g1 = QuadraticConstraints::linear(DMatrix::from_row_slice(1, 2, &[1.0, c]), rhs.clone())
        .expect("valid constraint");
    let g2 = QuadraticConstraints::linear(DMatrix::from_row_slice(1, 2, &[c, 1.0]), rhs)
        .expect("valid constraint");
    let constraints: Vec<Arc<dyn ConstraintFunction>> = vec![Arc::new(g1), Arc::new(g2)];
    GameProblem::with_constraints(Arc::new(costs), constraints).expect("valid built-in game")
}
