//! Two-term upper-bound fits `y ≲ c₁·x₁ + c₂·x₂` used for ISS constants and
//! closed-loop contraction estimates.

use crate::error::{Error, Result};

/// Nonnegative least-squares fit with relative weighting, plus the smallest
/// uniform inflation that turns it into an upper envelope of the data.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundFit {
    /// Least-squares coefficients `(c₁, c₂)`.
    pub coef: [f64; 2],
    /// `max(1, max_k y_k / pred_k)`; the envelope is `scale · coef`.
    pub scale: f64,
    /// Root-mean-square weighted residual of the least-squares fit.
    pub fit_residual: f64,
    pub n_points: usize,
    /// Fraction of points with `y > slack · pred` under the least-squares coefficients.
    pub raw_violation_fraction: f64,
    /// Same, under the envelope coefficients (zero on the fitted data by construction).
    pub violation_fraction: f64,
    pub slack: f64,
}

impl BoundFit {
    pub fn envelope(&self) -> [f64; 2] {
        [self.coef[0] * self.scale, self.coef[1] * self.scale]
    }

    /// Number of points violating `y ≤ slack · (c₁x₁ + c₂x₂)` for the given coefficients.
    pub fn count_violations(coef: [f64; 2], x1: &[f64], x2: &[f64], y: &[f64], slack: f64) -> usize {
        x1.iter()
            .zip(x2)
            .zip(y)
            .filter(|((a, b), y)| **y > slack * (coef[0] * **a + coef[1] * **b))
            .count()
    }
}

/// Residual weighting of a two-term fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitWeighting {
    /// `Σ ((y − pred)/y)²`: every point counts equally across decades.
    #[default]
    Relative,
    /// `Σ (y − pred)²`: ordinary least squares.
    Absolute,
}

/// Fits `y ≈ c₁x₁ + c₂x₂` with `c ≥ 0`, minimizing `Σ ((y − pred)/y)²` over
/// points with `y > 0`.
///
/// Errors with `TooFewPoints` below `min_points` usable points and
/// `DegenerateFit` when the `x₂` column is identically zero or the design is
/// rank deficient.
pub fn fit_two_term_bound(x1: &[f64], x2: &[f64], y: &[f64], min_points: usize, slack: f64) -> Result<BoundFit> {
    fit_two_term_bound_weighted(x1, x2, y, min_points, slack, FitWeighting::Relative)
}

/// [`fit_two_term_bound`] with a selectable residual weighting.
pub fn fit_two_term_bound_weighted(
    x1: &[f64],
    x2: &[f64],
    y: &[f64],
    min_points: usize,
    slack: f64,
    weighting: FitWeighting,
) -> Result<BoundFit> {
    if x1.len() != y.len() || x2.len() != y.len() {
        return Err(Error::InvalidInput("fit columns have different lengths".into()));
    }
    let usable: Vec<usize> = (0..y.len())
        .filter(|&k| y[k] > 0.0 && y[k].is_finite() && x1[k].is_finite() && x2[k].is_finite())
        .collect();
    if usable.len() < min_points.max(2) {
        return Err(Error::TooFewPoints {
            needed: min_points.max(2),
            have: usable.len(),
        });
    }
    if usable.iter().all(|&k| x2[k] == 0.0) {
        return Err(Error::DegenerateFit("second regressor is identically zero".into()));
    }

    let w = |k: usize| match weighting {
        FitWeighting::Relative => 1.0 / y[k],
        FitWeighting::Absolute => 1.0,
    };
    // Normal equations of the weighted problem with rows w·(x₁, x₂) and target w·y.
    let (mut s11, mut s12, mut s22, mut t1, mut t2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &k in &usable {
        let (a, b, t) = (w(k) * x1[k], w(k) * x2[k], w(k) * y[k]);
        s11 += a * a;
        s12 += a * b;
        s22 += b * b;
        t1 += a * t;
        t2 += b * t;
    }
    let sse = |c: [f64; 2]| -> f64 {
        usable
            .iter()
            .map(|&k| {
                let r = w(k) * (y[k] - c[0] * x1[k] - c[1] * x2[k]);
                r * r
            })
            .sum()
    };
    let det = s11 * s22 - s12 * s12;
    let mut candidates = Vec::new();
    if det > 1e-12 * (s11 * s22).max(f64::MIN_POSITIVE) {
        let c = [(t1 * s22 - t2 * s12) / det, (s11 * t2 - s12 * t1) / det];
        if c[0] >= 0.0 && c[1] >= 0.0 {
            candidates.push(c);
        }
    } else if s11 > 0.0 {
        return Err(Error::DegenerateFit("regressors are collinear".into()));
    }
    if s11 > 0.0 {
        candidates.push([(t1 / s11).max(0.0), 0.0]);
    }
    if s22 > 0.0 {
        candidates.push([0.0, (t2 / s22).max(0.0)]);
    }
    let coef = candidates
        .into_iter()
        .min_by(|a, b| sse(*a).total_cmp(&sse(*b)))
        .ok_or_else(|| Error::DegenerateFit("no admissible coefficients".into()))?;

    let mut scale: f64 = 1.0;
    for k in 0..y.len() {
        let pred = coef[0] * x1[k] + coef[1] * x2[k];
        if y[k] > 0.0 && pred > 0.0 {
            scale = scale.max(y[k] / pred);
        }
    }
    let n = y.len() as f64;
    let raw = BoundFit::count_violations(coef, x1, x2, y, slack) as f64 / n;
    let env = [coef[0] * scale, coef[1] * scale];
    let violation_fraction = BoundFit::count_violations(env, x1, x2, y, slack) as f64 / n;
    Ok(BoundFit {
        coef,
        scale,
        fit_residual: (sse(coef) / usable.len() as f64).sqrt(),
        n_points: usable.len(),
        raw_violation_fraction: raw,
        violation_fraction,
        slack,
    })
}

/// One-term fit `y ≈ c·x` with `c ≥ 0` under the given weighting; the result
/// carries `coef = [c, 0]`.
pub fn fit_proportional_bound(x: &[f64], y: &[f64], min_points: usize, slack: f64, weighting: FitWeighting) -> Result<BoundFit> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput("fit columns have different lengths".into()));
    }
    let usable: Vec<usize> = (0..y.len())
        .filter(|&k| y[k] > 0.0 && y[k].is_finite() && x[k].is_finite())
        .collect();
    if usable.len() < min_points.max(1) {
        return Err(Error::TooFewPoints {
            needed: min_points.max(1),
            have: usable.len(),
        });
    }
    let w = |k: usize| match weighting {
        FitWeighting::Relative => 1.0 / y[k],
        FitWeighting::Absolute => 1.0,
    };
    let (sxx, sxy) = usable.iter().fold((0.0, 0.0), |(a, b), &k| {
        let (xw, yw) = (w(k) * x[k], w(k) * y[k]);
        (a + xw * xw, b + xw * yw)
    });
    if !(sxx > 0.0) {
        return Err(Error::DegenerateFit("regressor is identically zero".into()));
    }
    let c = (sxy / sxx).max(0.0);
    let zeros = vec![0.0; x.len()];
    let scale = usable
        .iter()
        .filter(|&&k| c * x[k] > 0.0)
        .fold(1.0f64, |s, &k| s.max(y[k] / (c * x[k])));
    let sse: f64 = usable.iter().map(|&k| (w(k) * (y[k] - c * x[k])).powi(2)).sum();
    let n = y.len() as f64;
    Ok(BoundFit {
        coef: [c, 0.0],
        scale,
        fit_residual: (sse / usable.len() as f64).sqrt(),
        n_points: usable.len(),
        raw_violation_fraction: BoundFit::count_violations([c, 0.0], x, &zeros, y, slack) as f64 / n,
        violation_fraction: BoundFit::count_violations([c * scale, 0.0], x, &zeros, y, slack) as f64 / n,
        slack,
    })
}
