use nalgebra::{DMatrix, DVector};

use super::{natural_map_residual, AffineViProblem, ViConfig, ViSolution, ViStatus};
use crate::error::{check_len, Error, Result};
use crate::linalg::{solve_regularized, spectral_norm};

const ARMIJO_SIGMA: f64 = 1e-4;
const MIN_STEP: f64 = 1e-6;
const STALL_WINDOW: usize = 10;
const STALL_DECREASE: f64 = 1e-16;

/// Mixed complementarity form of the VI: box bounds handled through the
/// natural map, polyhedral rows `R a ≤ s` through multipliers `μ ≥ 0`.
///
/// Unknowns are `x = (a, μ)` and
/// `Φ_a = a − mid(l, u, a − (M a + q + Rᵀμ))`, `Φ_μ = min(s − R a, μ)`.
struct Mcp<'a> {
    p: &'a AffineViProblem,
    lower: DVector<f64>,
    upper: DVector<f64>,
    rows: DMatrix<f64>,
    rhs: DVector<f64>,
}

impl<'a> Mcp<'a> {
    fn new(p: &'a AffineViProblem) -> Self {
        let (lower, upper) = p.set.bounds();
        let (rows, rhs) = p.set.rows();
        Mcp {
            p,
            lower,
            upper,
            rows,
            rhs,
        }
    }

    fn n(&self) -> usize {
        self.p.dim()
    }

    fn r(&self) -> usize {
        self.rows.nrows()
    }

    fn split(&self, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = self.n();
        (x.rows(0, n).into_owned(), x.rows(n, self.r()).into_owned())
    }

    fn g(&self, a: &DVector<f64>, mu: &DVector<f64>) -> DVector<f64> {
        let mut g = self.p.map(a);
        if self.r() > 0 {
            g += self.rows.transpose() * mu;
        }
        g
    }

    fn phi(&self, x: &DVector<f64>) -> DVector<f64> {
        let (a, mu) = self.split(x);
        let g = self.g(&a, &mu);
        let n = self.n();
        let mut out = DVector::zeros(n + self.r());
        for i in 0..n {
            let w = a[i] - g[i];
            out[i] = a[i] - w.max(self.lower[i]).min(self.upper[i]);
        }
        if self.r() > 0 {
            let slack = &self.rhs - &self.rows * &a;
            for c in 0..self.r() {
                out[n + c] = slack[c].min(mu[c]);
            }
        }
        out
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (a, mu) = self.split(x);
        let g = self.g(&a, &mu);
        let (n, r) = (self.n(), self.r());
        let mut j = DMatrix::zeros(n + r, n + r);
        for i in 0..n {
            let w = a[i] - g[i];
            // Ties at a bound take the bound branch.
            if self.lower[i] < w && w < self.upper[i] {
                j.view_mut((i, 0), (1, n)).copy_from(&self.p.m.row(i));
                if r > 0 {
                    j.view_mut((i, n), (1, r)).copy_from(&self.rows.column(i).transpose());
                }
            } else {
                j[(i, i)] = 1.0;
            }
        }
        if r > 0 {
            let slack = &self.rhs - &self.rows * &a;
            for c in 0..r {
                if slack[c] <= mu[c] {
                    j.view_mut((n + c, 0), (1, n)).copy_from(&(-self.rows.row(c)));
                } else {
                    j[(n + c, n + c)] = 1.0;
                }
            }
        }
        j
    }
}

/// Semismooth Newton on the natural map with Armijo backtracking; an
/// extragradient step with step size `1/(1 + ‖M‖)` replaces Newton steps that
/// cannot be solved or do not decrease `‖Φ‖`.
///
/// Returns the first iterate whose natural-map residual is `≤ cfg.tol`.
/// `Singular` is reported when `‖Φ‖` decreases by less than `1e-16` over 10
/// consecutive iterations.
pub fn solve_affine_vi(p: &AffineViProblem, a0: &DVector<f64>, cfg: &ViConfig) -> Result<ViSolution> {
    check_len("affine VI start point", p.dim(), a0.len())?;
    if !a0.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("affine VI start point must be finite".into()));
    }
    let mcp = Mcp::new(p);
    let n = mcp.n();
    let mut x = DVector::zeros(n + mcp.r());
    x.rows_mut(0, n).copy_from(a0);
    let mut phi = mcp.phi(&x);
    let mut merit = phi.norm();
    let mut history = vec![merit];
    let mut used_fallback = false;
    let eg_step = 1.0 / (1.0 + spectral_norm(&p.m));

    let finish = |x: &DVector<f64>, status: ViStatus, iterations: usize, used_fallback: bool| {
        let (a, mu) = mcp.split(x);
        let residual = natural_map_residual(p, &a);
        let status = if residual <= cfg.tol { ViStatus::Converged } else { status };
        ViSolution {
            a,
            multipliers: mu,
            residual,
            status,
            iterations,
            used_fallback,
        }
    };

    for k in 0..cfg.max_iter {
        if merit <= cfg.tol {
            let a = x.rows(0, n).into_owned();
            if natural_map_residual(p, &a) <= cfg.tol {
                return Ok(finish(&x, ViStatus::Converged, k, used_fallback));
            }
        }

        let mut accepted = false;
        let j = mcp.jacobian(&x);
        if let Some(step) = solve_regularized(&j, &(-&phi)) {
            let mut t = 1.0;
            while t >= MIN_STEP {
                let xt = &x + &step.x * t;
                let pt = mcp.phi(&xt);
                let mt = pt.norm();
                if mt.is_finite() && mt <= (1.0 - ARMIJO_SIGMA * t) * merit {
                    x = xt;
                    phi = pt;
                    merit = mt;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
        }
        if !accepted {
            used_fallback = true;
            let a = x.rows(0, n).into_owned();
            let y = p.set.project(&(&a - p.map(&a) * eg_step));
            let a_next = p.set.project(&(&a - p.map(&y) * eg_step));
            x.rows_mut(0, n).copy_from(&a_next);
            phi = mcp.phi(&x);
            merit = phi.norm();
        }

        history.push(merit);
        let len = history.len();
        if len > STALL_WINDOW && history[len - 1 - STALL_WINDOW] - merit < STALL_DECREASE {
            return Ok(finish(&x, ViStatus::Singular, k + 1, used_fallback));
        }
    }
    let status = if merit <= cfg.tol { ViStatus::Converged } else { ViStatus::MaxIter };
    Ok(finish(&x, status, cfg.max_iter, used_fallback))
}
