use std::fmt::Write as _;

use nalgebra::DVector;

use crate::error::{Error, Result};

pub const TRACE_CSV_HEADER: &str = "k,residual,step_norm,err_to_ref,pert_norm";

/// Per-iteration record of an outer iteration.
///
/// Entry `k` of `iterates`, `residuals`, `step_norms`, `wall_times` and
/// `error_to_ref` describes iterate `k` (`k = 0` is the start point;
/// `step_norms[0] = 0`). `perturbations[k]` is the disturbance injected while
/// computing iterate `k + 1`, so it has one entry fewer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IterateTrace {
    pub iterates: Vec<DVector<f64>>,
    pub residuals: Vec<f64>,
    pub step_norms: Vec<f64>,
    pub perturbations: Vec<DVector<f64>>,
    pub error_to_ref: Option<Vec<f64>>,
    /// Seconds since the start of the run.
    pub wall_times: Vec<f64>,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl IterateTrace {
    pub(crate) fn start(a0: DVector<f64>, residual: f64, reference: Option<&DVector<f64>>) -> Self {
        let error_to_ref = reference.map(|r| vec![(&a0 - r).norm()]);
        IterateTrace {
            iterates: vec![a0],
            residuals: vec![residual],
            step_norms: vec![0.0],
            perturbations: Vec::new(),
            error_to_ref,
            wall_times: vec![0.0],
            converged: false,
            warnings: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, a: DVector<f64>, residual: f64, reference: Option<&DVector<f64>>, t: f64) {
        let step = self.iterates.last().map_or(0.0, |prev| (&a - prev).norm());
        if let (Some(errs), Some(r)) = (self.error_to_ref.as_mut(), reference) {
            errs.push((&a - r).norm());
        }
        self.iterates.push(a);
        self.residuals.push(residual);
        self.step_norms.push(step);
        self.wall_times.push(t);
    }

    /// Number of completed outer iterations.
    pub fn iterations(&self) -> usize {
        self.iterates.len().saturating_sub(1)
    }

    pub fn last(&self) -> &DVector<f64> {
        self.iterates.last().expect("trace holds at least the start point")
    }

    pub fn final_residual(&self) -> f64 {
        *self.residuals.last().expect("trace holds at least the start point")
    }

    /// Recomputes `error_to_ref` against a reference point.
    pub fn set_reference(&mut self, reference: &DVector<f64>) {
        self.error_to_ref = Some(self.iterates.iter().map(|a| (a - reference).norm()).collect());
    }

    pub fn perturbation_norm(&self, k: usize) -> f64 {
        self.perturbations.get(k).map_or(0.0, |v| v.norm())
    }

    /// CSV with one row per iterate; `err_to_ref` is empty without a reference
    /// and `pert_norm` is `0` on the final row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_CSV_HEADER);
        out.push('\n');
        for k in 0..self.iterates.len() {
            let err = self
                .error_to_ref
                .as_ref()
                .and_then(|e| e.get(k))
                .map(|e| e.to_string())
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                k,
                self.residuals[k],
                self.step_norms[k],
                err,
                self.perturbation_norm(k)
            );
        }
        out
    }
}

/// One parsed row of a trace CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub residual: f64,
    pub step_norm: f64,
    pub err_to_ref: Option<f64>,
    pub pert_norm: f64,
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == TRACE_CSV_HEADER => {}
        other => {
            return Err(Error::InvalidInput(format!("unexpected trace header {other:?}")));
        }
    }
    let num = |s: &str, line: usize| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|e| Error::InvalidInput(format!("line {line}: bad number {s:?}: {e}")))
    };
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let ln = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(Error::InvalidInput(format!("line {ln}: expected 5 fields, got {}", f.len())));
        }
        rows.push(TraceRow {
            k: f[0]
                .parse()
                .map_err(|e| Error::InvalidInput(format!("line {ln}: bad index: {e}")))?,
            residual: num(f[1], ln)?,
            step_norm: num(f[2], ln)?,
            err_to_ref: if f[3].is_empty() { None } else { Some(num(f[3], ln)?) },
            pert_norm: num(f[4], ln)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let r = DVector::from_vec(vec![0.1, 0.2]);
        let mut t = IterateTrace::start(DVector::from_vec(vec![1.0 / 3.0, 2.0]), 0.123456789012345678, Some(&r));
        t.perturbations.push(DVector::from_vec(vec![1e-7, std::f64::consts::PI * 1e-9]));
        t.push(DVector::from_vec(vec![0.1 + 1e-17, 0.2]), 1e-300, Some(&r), 0.5);
        let rows = parse_trace_csv(&t.to_csv()).unwrap();
        assert_eq!(rows.len(), 2);
        for (k, row) in rows.iter().enumerate() {
            assert_eq!(row.residual, t.residuals[k]);
            assert_eq!(row.step_norm, t.step_norms[k]);
            assert_eq!(row.err_to_ref, Some(t.error_to_ref.as_ref().unwrap()[k]));
            assert_eq!(row.pert_norm, t.perturbation_norm(k));
        }
    }

    #[test]
    fn missing_reference_leaves_empty_column() {
        let t = IterateTrace::start(DVector::zeros(1), 1.0, None);
        let csv = t.to_csv();
        assert!(csv.lines().nth(1).unwrap().contains(",,"));
        assert_eq!(parse_trace_csv(&csv).unwrap()[0].err_to_ref, None);
    }

    #[test]
    fn wrong_header_is_rejected() {
        assert!(parse_trace_csv("a,b\n1,2\n").is_err());
    }
}
