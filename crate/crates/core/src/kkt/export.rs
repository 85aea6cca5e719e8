use std::fmt::Write as _;

use super::{KktTrace, Branch};

pub const SOLUTION_CSV_HEADER: &str = "k,phi_norm,a,lambda,branches";

/// One row per iterate: `a` and `λ` as `;`-separated lists, branches as a
/// string of `g` (constraint side) and `l` (multiplier side) per
/// complementarity row, empty on the final iterate.
pub fn solution_csv(trace: &KktTrace) -> String {
    let join = |it: &mut dyn Iterator<Item = &f64>| it.map(|v| v.to_string()).collect::<Vec<_>>().join(";");
    let mut out = String::from(SOLUTION_CSV_HEADER);
    out.push('\n');
    for (k, z) in trace.trace.iterates.iter().enumerate() {
        let a = join(&mut z.rows(0, trace.n).iter());
        let l = join(&mut z.rows(trace.n, z.len() - trace.n).iter());
        let b: String = trace
            .branches
            .get(k)
            .map(|bs| {
                bs.iter()
                    .map(|b| match b {
                        Branch::Constraint => 'g',
                        Branch::Multiplier => 'l',
                    })
                    .collect()
            })
            .unwrap_or_default();
        let _ = writeln!(out, "{k},{},{a},{l},{b}", trace.trace.residuals[k]);
    }
    out
}
