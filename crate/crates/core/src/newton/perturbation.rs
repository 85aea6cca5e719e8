use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Where the disturbance `v^k` enters the Newton step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbationMode {
    None,
    /// `F(a^k) + v^k`.
    AdditiveGradient,
    /// `H(a^k) + V^k`, with `V^k` the draw reshaped column-major to `n × n`.
    AdditiveHessian,
    /// `v^k` moved to the right-hand side of the linearized equation: the
    /// subproblem map becomes `F(a^k) + H(a^k)(a − a^k) − v^k`.
    ResidualInjection,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PerturbationDistribution {
    /// Uniform in the ball of radius `magnitude`.
    UniformBall,
    /// `magnitude · v / ‖v‖` at every step.
    FixedVector(DVector<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec {
    pub mode: PerturbationMode,
    pub magnitude: f64,
    pub distribution: PerturbationDistribution,
    pub seed: u64,
    /// Upper limit on `magnitude` accepted by the solvers.
    pub guard: f64,
}

impl PerturbationSpec {
    pub fn none() -> Self {
        PerturbationSpec {
            mode: PerturbationMode::None,
            magnitude: 0.0,
            distribution: PerturbationDistribution::UniformBall,
            seed: 0,
            guard: 1.0,
        }
    }

    pub fn uniform(mode: PerturbationMode, magnitude: f64, seed: u64) -> Self {
        PerturbationSpec {
            mode,
            magnitude,
            distribution: PerturbationDistribution::UniformBall,
            seed,
            guard: 1.0,
        }
    }

    pub fn fixed(mode: PerturbationMode, magnitude: f64, v: DVector<f64>) -> Self {
        PerturbationSpec {
            mode,
            magnitude,
            distribution: PerturbationDistribution::FixedVector(v),
            seed: 0,
            guard: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.magnitude.is_finite() || self.magnitude < 0.0 {
            return Err(Error::InvalidInput(format!(
                "perturbation magnitude must be finite and nonnegative, got {}",
                self.magnitude
            )));
        }
        if self.magnitude >= self.guard {
            return Err(Error::InvalidInput(format!(
                "perturbation magnitude {} is not below the guard {}",
                self.magnitude, self.guard
            )));
        }
        Ok(())
    }

    /// True when no disturbance is ever applied.
    pub fn is_inactive(&self) -> bool {
        self.mode == PerturbationMode::None || self.magnitude == 0.0
    }
}

/// Seeded sequence of disturbance draws.
pub struct PerturbationStream {
    spec: PerturbationSpec,
    rng: ChaCha8Rng,
}

impl PerturbationStream {
    pub fn new(spec: &PerturbationSpec) -> Result<Self> {
        spec.validate()?;
        Ok(PerturbationStream {
            spec: spec.clone(),
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
        })
    }

    pub fn spec(&self) -> &PerturbationSpec {
        &self.spec
    }

    /// Draws a vector of length `len`. Zero magnitude gives a zero vector.
    pub fn draw(&mut self, len: usize) -> Result<DVector<f64>> {
        let mag = self.spec.magnitude;
        match &self.spec.distribution {
            PerturbationDistribution::UniformBall => {
                let g = DVector::from_fn(len, |_, _| {
                    let z: f64 = StandardNormal.sample(&mut self.rng);
                    z
                });
                let u: f64 = self.rng.random();
                let norm = g.norm();
                if len == 0 || norm == 0.0 || mag == 0.0 {
                    return Ok(DVector::zeros(len));
                }
                Ok(g * (mag * u.powf(1.0 / len as f64) / norm))
            }
            PerturbationDistribution::FixedVector(v) => {
                if v.len() != len {
                    return Err(Error::DimensionMismatch {
                        context: "fixed perturbation vector",
                        expected: len,
                        got: v.len(),
                    });
                }
                let norm = v.norm();
                if norm == 0.0 || mag == 0.0 {
                    return Ok(DVector::zeros(len));
                }
                Ok(v * (mag / norm))
            }
        }
    }

    /// Draw length needed for a problem of dimension `n`.
    pub fn draw_len(&self, n: usize) -> usize {
        match self.spec.mode {
            PerturbationMode::AdditiveHessian => n * n,
            _ => n,
        }
    }

    /// Applies a draw to `(F(a^k), H(a^k))`, returning the modified pair.
    pub(crate) fn apply(&self, v: &DVector<f64>, f: &mut DVector<f64>, h: &mut DMatrix<f64>) {
        if self.spec.is_inactive() {
            return;
        }
        match self.spec.mode {
            PerturbationMode::None => {}
            PerturbationMode::AdditiveGradient => *f += v,
            PerturbationMode::AdditiveHessian => {
                let n = h.nrows();
                *h += DMatrix::from_column_slice(n, n, v.as_slice());
            }
            PerturbationMode::ResidualInjection => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_draws_stay_in_ball_and_repeat_per_seed() {
        let spec = PerturbationSpec::uniform(PerturbationMode::AdditiveGradient, 1e-3, 9);
        let mut s1 = PerturbationStream::new(&spec).unwrap();
        let mut s2 = PerturbationStream::new(&spec).unwrap();
        for _ in 0..100 {
            let a = s1.draw(3).unwrap();
            assert!(a.norm() <= 1e-3 * (1.0 + 1e-12));
            assert_eq!(a, s2.draw(3).unwrap());
        }
    }

    #[test]
    fn fixed_vector_is_scaled_to_magnitude() {
        let spec = PerturbationSpec::fixed(
            PerturbationMode::AdditiveGradient,
            0.5,
            DVector::from_vec(vec![3.0, 4.0]),
        );
        let v = PerturbationStream::new(&spec).unwrap().draw(2).unwrap();
        assert!((v - DVector::from_vec(vec![0.3, 0.4])).norm() < 1e-15);
    }

    #[test]
    fn magnitude_above_guard_is_rejected() {
        let mut spec = PerturbationSpec::uniform(PerturbationMode::AdditiveGradient, 2.0, 0);
        assert!(spec.validate().is_err());
        spec.magnitude = -1.0;
        assert!(spec.validate().is_err());
    }
}
