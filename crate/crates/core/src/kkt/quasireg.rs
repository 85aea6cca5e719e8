use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{jacobian_with_tie_branches, tied_rows, Branch, PrimalDualPoint};
use crate::error::Result;
use crate::game::GameProblem;
use crate::linalg::smallest_singular_value;

/// Above this many tied rows only a seeded sample of branch combinations is checked.
pub const MAX_ENUMERATED_TIES: usize = 20;
/// Elements with smallest singular value at or below this are singular.
pub const SIGMA_MIN: f64 = 1e-10;

const SAMPLED_COMBINATIONS: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub enum QuasiRegularityVerdict {
    /// Every checked element is nonsingular; carries the smallest singular value seen.
    AllNonsingular { min_sigma: f64 },
    /// Branches on the tied rows of a singular element.
    FoundSingular { witness: Vec<Branch>, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuasiRegularity {
    pub verdict: QuasiRegularityVerdict,
    /// Complementarity rows on a kink (global multiplier indices).
    pub ties: Vec<usize>,
    pub elements_checked: usize,
    /// True when only a sample of the `2^t` combinations was checked.
    pub partial: bool,
    pub warnings: Vec<String>,
}

impl QuasiRegularity {
    pub fn all_nonsingular(&self) -> bool {
        matches!(self.verdict, QuasiRegularityVerdict::AllNonsingular { .. })
    }
}

/// Checks every limiting-Jacobian element at `z_star`: all `2^t` branch
/// choices over the `t` tied rows (non-tied rows have a unique branch).
/// With more than 20 ties a seeded sample is used and the result is partial.
pub fn check_quasi_regularity(game: &GameProblem, z_star: &PrimalDualPoint) -> Result<QuasiRegularity> {
    let ties = tied_rows(game, z_star)?;
    let t = ties.len();
    let mut warnings = Vec::new();
    let combos: Vec<Vec<Branch>> = if t <= MAX_ENUMERATED_TIES {
        (0..1usize << t).map(|mask| decode(mask as u64, t)).collect()
    } else {
        warnings.push(format!(
            "{t} tied rows exceed the enumeration cap of {MAX_ENUMERATED_TIES}; checked {SAMPLED_COMBINATIONS} sampled combinations"
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        (0..SAMPLED_COMBINATIONS)
            .map(|_| {
                (0..t)
                    .map(|_| if rng.random::<bool>() { Branch::Multiplier } else { Branch::Constraint })
                    .collect()
            })
            .collect()
    };
    let mut min_sigma = f64::INFINITY;
    for (idx, branches) in combos.iter().enumerate() {
        let el = jacobian_with_tie_branches(game, z_star, branches)?;
        let sigma = smallest_singular_value(&el.matrix);
        if !(sigma > SIGMA_MIN) {
            return Ok(QuasiRegularity {
                verdict: QuasiRegularityVerdict::FoundSingular {
                    witness: branches.clone(),
                    sigma,
                },
                ties,
                elements_checked: idx + 1,
                partial: t > MAX_ENUMERATED_TIES,
                warnings,
            });
        }
        min_sigma = min_sigma.min(sigma);
    }
    Ok(QuasiRegularity {
        verdict: QuasiRegularityVerdict::AllNonsingular { min_sigma },
        ties,
        elements_checked: combos.len(),
        partial: t > MAX_ENUMERATED_TIES,
        warnings,
    })
}

fn decode(mask: u64, t: usize) -> Vec<Branch> {
    (0..t)
        .map(|k| if mask >> k & 1 == 1 { Branch::Multiplier } else { Branch::Constraint })
        .collect()
}
