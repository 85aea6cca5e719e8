use super::IterateTrace;
use crate::error::{Error, Result};
use crate::fit::{fit_two_term_bound_weighted, BoundFit, FitWeighting};

/// Errors at or below this value are treated as the floating-point floor.
pub const Q_RATE_FLOOR: f64 = 1e-13;
/// Upper bound on tail ratios `e_{k+1}/e_k²` accepted as quadratic.
pub const Q_RATIO_BOUND: f64 = 1e3;
pub const MIN_ISS_TRIPLES: usize = 30;

const MIN_RATE_POINTS: usize = 4;
const TAIL: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QRateClass {
    Quadratic,
    Superlinear,
    Linear,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QRateEstimate {
    /// `e_{k+1} / e_k²` over consecutive errors above the floor.
    pub ratios: Vec<f64>,
    /// `e_{k+1} / e_k`.
    pub linear_ratios: Vec<f64>,
    /// Largest of the last three quadratic ratios.
    pub tail_max: f64,
    pub classification: QRateClass,
}

/// Classifies the convergence rate of the errors `e_k = ‖a^k − a*‖`.
///
/// Only the leading run of errors above `1e-13` is used. The rate is
/// `Quadratic` when the linear ratios shrink by at least a factor 10 from
/// first to last, the tail quadratic ratios stay below `1e3`, and they do not
/// grow by more than a factor 10 across the tail; `Superlinear` when the
/// linear ratios shrink but the quadratic ratios are unbounded; `Linear` when
/// the linear ratios are in `(0, 1)` and within a factor 3 of each other.
pub fn estimate_q_rate(trace: &IterateTrace) -> Result<QRateEstimate> {
    let errors = trace.error_to_ref.as_deref().unwrap_or(&[]);
    q_rate_from_errors(errors)
}

pub fn q_rate_from_errors(errors: &[f64]) -> Result<QRateEstimate> {
    let usable: Vec<f64> = errors.iter().copied().take_while(|e| *e > Q_RATE_FLOOR).collect();
    if usable.len() < MIN_RATE_POINTS {
        return Err(Error::TooFewPoints {
            needed: MIN_RATE_POINTS,
            have: usable.len(),
        });
    }
    let ratios: Vec<f64> = usable.windows(2).map(|w| w[1] / (w[0] * w[0])).collect();
    let linear_ratios: Vec<f64> = usable.windows(2).map(|w| w[1] / w[0]).collect();
    let tail = &ratios[ratios.len().saturating_sub(TAIL)..];
    let tail_max = tail.iter().copied().fold(0.0, f64::max);

    let first_lin = linear_ratios[0];
    let last_lin = *linear_ratios.last().expect("at least three ratios");
    let shrinking = last_lin <= 0.1 * first_lin && last_lin < 1.0;
    let tail_stable = tail.last().copied().unwrap_or(0.0) <= 10.0 * tail[0];
    let classification = if shrinking && tail_max.is_finite() && tail_max <= Q_RATIO_BOUND && tail_stable {
        QRateClass::Quadratic
    } else if shrinking {
        QRateClass::Superlinear
    } else {
        let lo = linear_ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = linear_ratios.iter().copied().fold(0.0, f64::max);
        if lo > 0.0 && hi < 1.0 && hi <= 3.0 * lo {
            QRateClass::Linear
        } else {
            QRateClass::Inconclusive
        }
    };
    Ok(QRateEstimate {
        ratios,
        linear_ratios,
        tail_max,
        classification,
    })
}

/// `(e_k, e_{k+1}, ‖v^k‖)` for one transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IssTriple {
    pub e: f64,
    pub e_next: f64,
    pub v: f64,
}

/// Collects all transitions of traces that carry errors and perturbations.
pub fn iss_triples(traces: &[IterateTrace]) -> Vec<IssTriple> {
    let mut out = Vec::new();
    for t in traces {
        let Some(errs) = t.error_to_ref.as_ref() else { continue };
        for k in 0..t.perturbations.len().min(errs.len().saturating_sub(1)) {
            out.push(IssTriple {
                e: errs[k],
                e_next: errs[k + 1],
                v: t.perturbations[k].norm(),
            });
        }
    }
    out
}

/// Fitted constants of `e_{k+1} ≤ L_a e_k + L_v ‖v^k‖` (linear) and
/// `e_{k+1} ≤ L'_a e_k² + L'_v ‖v^k‖` (quadratic).
#[derive(Debug, Clone, PartialEq)]
pub struct IssEstimate {
    pub linear: BoundFit,
    pub quadratic: BoundFit,
    pub n_triples: usize,
}

impl IssEstimate {
    /// `(L_a, L_v)` of the linear envelope.
    pub fn l_a_l_v(&self) -> (f64, f64) {
        let e = self.linear.envelope();
        (e[0], e[1])
    }

    /// Violations of the linear and quadratic envelopes on other triples.
    pub fn violations(&self, triples: &[IssTriple], slack: f64) -> (usize, usize) {
        let (x1, x1sq, x2, y) = columns(triples);
        (
            BoundFit::count_violations(self.linear.envelope(), &x1, &x2, &y, slack),
            BoundFit::count_violations(self.quadratic.envelope(), &x1sq, &x2, &y, slack),
        )
    }
}

fn columns(triples: &[IssTriple]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    (
        triples.iter().map(|t| t.e).collect(),
        triples.iter().map(|t| t.e * t.e).collect(),
        triples.iter().map(|t| t.v).collect(),
        triples.iter().map(|t| t.e_next).collect(),
    )
}

/// Fits both ISS bound templates to the transitions of `traces`.
pub fn estimate_iss_constants(traces: &[IterateTrace], slack: f64) -> Result<IssEstimate> {
    estimate_iss_from_triples(&iss_triples(traces), slack)
}

/// Both templates use ordinary (absolute) least squares: the large early
/// transitions then pin the `e_k` coefficient, while relative weighting lets
/// the many disturbance-dominated tail points push it to zero.
pub fn estimate_iss_from_triples(triples: &[IssTriple], slack: f64) -> Result<IssEstimate> {
    if triples.len() < MIN_ISS_TRIPLES {
        return Err(Error::TooFewPoints {
            needed: MIN_ISS_TRIPLES,
            have: triples.len(),
        });
    }
    if triples.iter().all(|t| t.v == 0.0) {
        return Err(Error::DegenerateFit("all recorded disturbances are zero".into()));
    }
    let (x1, x1sq, x2, y) = columns(triples);
    Ok(IssEstimate {
        linear: fit_two_term_bound_weighted(&x1, &x2, &y, MIN_ISS_TRIPLES, slack, FitWeighting::Absolute)?,
        quadratic: fit_two_term_bound_weighted(&x1sq, &x2, &y, MIN_ISS_TRIPLES, slack, FitWeighting::Absolute)?,
        n_triples: triples.len(),
    })
}

/// `sup_{k ≥ from} e_k`, or `None` without a reference.
pub fn ultimate_error(trace: &IterateTrace, from: usize) -> Option<f64> {
    let e = trace.error_to_ref.as_ref()?;
    e.get(from..).map(|tail| tail.iter().copied().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use nalgebra::DVector;

    use super::*;

    #[test]
    fn exact_squaring_is_quadratic() {
        let r = q_rate_from_errors(&[1e-1, 1e-2, 1e-4, 1e-8]).unwrap();
        assert_eq!(r.classification, QRateClass::Quadratic);
        for x in &r.ratios {
            assert!((x - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn halving_is_linear() {
        let e: Vec<f64> = (0..10).map(|k| 0.5f64.powi(k)).collect();
        assert_eq!(q_rate_from_errors(&e).unwrap().classification, QRateClass::Linear);
    }

    #[test]
    fn order_three_halves_is_superlinear() {
        let mut e = vec![1e-1];
        for _ in 0..5 {
            let last: f64 = *e.last().unwrap();
            e.push(last.powf(1.5));
        }
        let e: Vec<f64> = e.into_iter().filter(|x| *x > 1e-13).collect();
        assert!(e.len() >= 4);
        assert_eq!(q_rate_from_errors(&e).unwrap().classification, QRateClass::Superlinear);
    }

    #[test]
    fn too_few_points_above_floor() {
        assert!(matches!(
            q_rate_from_errors(&[1e-1, 1e-2, 1e-14, 1e-15]),
            Err(Error::TooFewPoints { needed: 4, have: 2 })
        ));
    }

    fn synthetic_trace(e0: f64, vs: &[f64]) -> IterateTrace {
        let mut errs = vec![e0];
        for v in vs {
            let last = *errs.last().unwrap();
            errs.push(0.5 * last + 2.0 * v);
        }
        IterateTrace {
            perturbations: vs.iter().map(|v| DVector::from_vec(vec![*v])).collect(),
            error_to_ref: Some(errs),
            ..IterateTrace::default()
        }
    }

    #[test]
    fn synthetic_iss_constants_are_recovered() {
        let traces: Vec<IterateTrace> = (0..4)
            .map(|s| {
                let vs: Vec<f64> = (0..10).map(|k| 1e-3 * (1.0 + ((k + s) % 4) as f64)).collect();
                synthetic_trace(0.1 * (s + 1) as f64, &vs)
            })
            .collect();
        let est = estimate_iss_constants(&traces, 1.1).unwrap();
        assert!((est.linear.coef[0] - 0.5).abs() < 1e-10);
        assert!((est.linear.coef[1] - 2.0).abs() < 1e-10);
        assert_eq!(est.violations(&iss_triples(&traces), 1.1), (0, est.violations(&iss_triples(&traces), 1.1).1));
    }

    #[test]
    fn zero_disturbances_are_degenerate() {
        let traces = vec![synthetic_trace(0.1, &[0.0; 40])];
        assert!(matches!(estimate_iss_constants(&traces, 1.1), Err(Error::DegenerateFit(_))));
    }
}
