use std::fmt::Write as _;

use super::closed_loop::ClosedLoopLog;
use crate::error::{Error, Result};
use crate::fit::{fit_proportional_bound, fit_two_term_bound_weighted, BoundFit, FitWeighting};

/// Errors at or below this are treated as solved and excluded from fits.
pub const CONTRACTION_FLOOR: f64 = 1e-12;
/// Each log entering a fit needs at least this many steps above the floor.
pub const MIN_CONTRACTION_POINTS: usize = 20;

/// Pooled `(e(t), Δx(t), e(t+1))` samples with both errors above the floor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContractionSamples {
    pub e: Vec<f64>,
    pub dx: Vec<f64>,
    pub e_next: Vec<f64>,
}

impl ContractionSamples {
    pub fn from_logs(logs: &[ClosedLoopLog]) -> Self {
        let mut s = ContractionSamples::default();
        for log in logs {
            for t in 0..log.len().saturating_sub(1) {
                if log.e[t] > CONTRACTION_FLOOR && log.e[t + 1] > CONTRACTION_FLOOR {
                    s.e.push(log.e[t]);
                    s.dx.push(log.dx[t]);
                    s.e_next.push(log.e[t + 1]);
                }
            }
        }
        s
    }

    pub fn len(&self) -> usize {
        self.e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e.is_empty()
    }

    /// Samples violating `e(t+1) ≤ slack·(α e(t) + θ Δx(t))`.
    pub fn violations(&self, alpha_theta: [f64; 2], slack: f64) -> usize {
        BoundFit::count_violations(alpha_theta, &self.e, &self.dx, &self.e_next, slack)
    }
}

/// How `(α̂, θ̂)` are fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ContractionFit {
    /// Free nonnegative least squares on `(e(t), Δx(t))`.
    TwoTerm,
    /// `e(t+1) ≈ η·(e(t) + L̂‖Δx(t)‖)` with `L̂` the largest observed Lipschitz
    /// ratio of `v*`; `α̂ = η̂`, `θ̂ = η̂·L̂`.
    #[default]
    Lipschitz,
}

/// Fitted per-step bound `e(t+1) ≤ α e(t) + θ ‖Δx(t)‖` for one budget `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionRow {
    pub k: usize,
    pub alpha: f64,
    pub theta: f64,
    /// Largest observed `‖v*(t+1) − v*(t)‖ / ‖Δx(t)‖` (Lipschitz fit only).
    pub lipschitz: Option<f64>,
    pub fit: BoundFit,
    pub sup_e: f64,
    /// Violations of the envelope on the validation logs at the fit slack.
    pub violations: usize,
    pub n_validation: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionTable {
    pub rows: Vec<ContractionRow>,
    pub alpha_nonincreasing: bool,
    pub sup_e_nonincreasing: bool,
}

pub const CONTRACTION_CSV_HEADER: &str = "K,sup_e,alpha,theta,violations";

impl ContractionTable {
    pub fn total_violations(&self) -> usize {
        self.rows.iter().map(|r| r.violations).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CONTRACTION_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{}", r.k, r.sup_e, r.alpha, r.theta, r.violations);
        }
        out
    }
}

/// Budget-`K` logs split into a fitting and a validation half.
#[derive(Debug, Clone)]
pub struct BudgetLogs {
    pub k: usize,
    pub fit: Vec<ClosedLoopLog>,
    pub validation: Vec<ClosedLoopLog>,
}

fn nonincreasing(v: impl Iterator<Item = f64>) -> bool {
    let v: Vec<f64> = v.collect();
    // Relative slack absorbs round-off once errors reach the floor.
    v.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + CONTRACTION_FLOOR)
}

/// Per-`K` least-squares fit of `e(t+1)` against `(e(t), Δx(t))` on the
/// fitting logs; the envelope (fit scaled to cover the fitting data) is then
/// checked on the validation logs at `slack`.
///
/// Along closed-loop trajectories `e(t)` and `Δx(t)` decay together, so a free
/// two-coefficient fit cannot separate them reliably. [`ContractionFit::Lipschitz`]
/// uses the structure of the bound, `‖v(t) − v*(t+1)‖ ≤ e(t) + L‖Δx(t)‖`,
/// and fits the single slope `η̂` by ordinary least squares.
///
/// Logs with fewer than 20 errors above `1e-12` are rejected with
/// `TooFewPoints`, since the fit would be dominated by round-off.
pub fn estimate_contraction(campaign: &[BudgetLogs], slack: f64, method: ContractionFit) -> Result<ContractionTable> {
    if campaign.is_empty() {
        return Err(Error::InvalidInput("empty contraction campaign".into()));
    }
    let mut rows = Vec::with_capacity(campaign.len());
    for b in campaign {
        for log in &b.fit {
            let have = log.e.iter().filter(|&&e| e > CONTRACTION_FLOOR).count();
            if have < MIN_CONTRACTION_POINTS {
                return Err(Error::TooFewPoints {
                    needed: MIN_CONTRACTION_POINTS,
                    have,
                });
            }
        }
        let samples = ContractionSamples::from_logs(&b.fit);
        let held = ContractionSamples::from_logs(&b.validation);
        let sup_e = b.fit.iter().chain(&b.validation).map(|l| l.sup_e()).fold(0.0, f64::max);
        let (alpha, theta, lipschitz, fit) = match method {
            ContractionFit::TwoTerm => {
                let fit = fit_two_term_bound_weighted(
                    &samples.e,
                    &samples.dx,
                    &samples.e_next,
                    MIN_CONTRACTION_POINTS,
                    slack,
                    FitWeighting::Absolute,
                )?;
                (fit.coef[0], fit.coef[1], None, fit)
            }
            ContractionFit::Lipschitz => {
                let l = b.fit.iter().flat_map(|l| l.lipschitz_ratios()).fold(0.0, f64::max);
                let w: Vec<f64> = samples.e.iter().zip(&samples.dx).map(|(e, d)| e + l * d).collect();
                let fit = fit_proportional_bound(&w, &samples.e_next, MIN_CONTRACTION_POINTS, slack, FitWeighting::Absolute)?;
                (fit.coef[0], fit.coef[0] * l, Some(l), fit)
            }
        };
        let envelope = [alpha * fit.scale, theta * fit.scale];
        rows.push(ContractionRow {
            k: b.k,
            alpha,
            theta,
            lipschitz,
            violations: held.violations(envelope, slack),
            n_validation: held.len(),
            fit,
            sup_e,
        });
    }
    rows.sort_by_key(|r| r.k);
    Ok(ContractionTable {
        alpha_nonincreasing: nonincreasing(rows.iter().map(|r| r.alpha)),
        sup_e_nonincreasing: nonincreasing(rows.iter().map(|r| r.sup_e)),
        rows,
    })
}
