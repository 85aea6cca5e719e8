use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::vi::project_polyhedron;

/// Per-agent feasible set of an NE-form game.
///
/// Compactness and convexity of the set are the caller's responsibility; the
/// solvers only need the set to be closed and convex for projections to be
/// well defined.
#[derive(Debug, Clone, PartialEq)]
pub enum FeasibleSet {
    /// `lower ≤ a ≤ upper`, entries may be infinite.
    Box {
        lower: DVector<f64>,
        upper: DVector<f64>,
    },
    /// `a · x ≤ b` with finite rows.
    Polyhedron { a: DMatrix<f64>, b: DVector<f64> },
}

impl FeasibleSet {
    pub fn boxed(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        check_len("box bounds", lower.len(), upper.len())?;
        for (i, (l, u)) in lower.iter().zip(upper.iter()).enumerate() {
            if l.is_nan() || u.is_nan() || l > u {
                return Err(Error::InvalidInput(format!(
                    "box bound {i}: lower {l} must not exceed upper {u}"
                )));
            }
            if *l == f64::INFINITY || *u == f64::NEG_INFINITY {
                return Err(Error::InvalidInput(format!("box bound {i} is empty")));
            }
        }
        Ok(FeasibleSet::Box { lower, upper })
    }

    /// Uniform box `[lo, hi]^n`.
    pub fn uniform_box(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::boxed(DVector::from_element(n, lo), DVector::from_element(n, hi))
    }

    pub fn unbounded(n: usize) -> Self {
        FeasibleSet::Box {
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn nonnegative(n: usize) -> Self {
        FeasibleSet::Box {
            lower: DVector::zeros(n),
            upper: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn polyhedron(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        check_len("polyhedron right-hand side", a.nrows(), b.len())?;
        if !a.iter().chain(b.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(
                "polyhedron rows must be finite".to_string(),
            ));
        }
        Ok(FeasibleSet::Polyhedron { a, b })
    }

    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::Box { lower, .. } => lower.len(),
            FeasibleSet::Polyhedron { a, .. } => a.ncols(),
        }
    }

    pub fn is_box(&self) -> bool {
        matches!(self, FeasibleSet::Box { .. })
    }

    /// Largest constraint violation of `x` (zero when feasible).
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        match self {
            FeasibleSet::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper.iter()))
                .map(|(v, (l, u))| (l - v).max(v - u).max(0.0))
                .fold(0.0, f64::max),
            FeasibleSet::Polyhedron { a, b } => {
                let r = a * x - b;
                r.iter().copied().fold(0.0, f64::max)
            }
        }
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            FeasibleSet::Box { lower, upper } => DVector::from_iterator(
                x.len(),
                x.iter()
                    .zip(lower.iter().zip(upper.iter()))
                    .map(|(v, (l, u))| v.max(*l).min(*u)),
            ),
            FeasibleSet::Polyhedron { a, b } => project_polyhedron(a, b, x),
        }
    }
}

/// Cartesian product of feasible sets laid out contiguously.
///
/// Blocks usually coincide with agents, but a single joint block is allowed
/// (for example the shared set of a variational GNE).
#[derive(Debug, Clone, PartialEq)]
pub struct ProductSet {
    blocks: Vec<FeasibleSet>,
    offsets: Vec<usize>,
    dim: usize,
}

impl ProductSet {
    pub fn new(blocks: Vec<FeasibleSet>) -> Self {
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut dim = 0;
        for b in &blocks {
            offsets.push(dim);
            dim += b.dim();
        }
        ProductSet {
            blocks,
            offsets,
            dim,
        }
    }

    pub fn unbounded(n: usize) -> Self {
        Self::new(vec![FeasibleSet::unbounded(n)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[FeasibleSet] {
        &self.blocks
    }

    pub fn block_dims(&self) -> Vec<usize> {
        self.blocks.iter().map(FeasibleSet::dim).collect()
    }

    pub fn block_range(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k]..self.offsets[k] + self.blocks[k].dim()
    }

    pub fn is_box(&self) -> bool {
        self.blocks.iter().all(FeasibleSet::is_box)
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = x.clone();
        for (k, b) in self.blocks.iter().enumerate() {
            let r = self.block_range(k);
            let p = b.project(&x.rows(r.start, r.len()).into_owned());
            out.rows_mut(r.start, r.len()).copy_from(&p);
        }
        out
    }

    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        self.blocks
            .iter()
            .enumerate()
            .map(|(k, b)| {
                let r = self.block_range(k);
                b.max_violation(&x.rows(r.start, r.len()).into_owned())
            })
            .fold(0.0, f64::max)
    }

    /// Joint bounds; polyhedral blocks contribute `(-inf, inf)`.
    pub fn bounds(&self) -> (DVector<f64>, DVector<f64>) {
        let mut lower = DVector::from_element(self.dim, f64::NEG_INFINITY);
        let mut upper = DVector::from_element(self.dim, f64::INFINITY);
        for (k, b) in self.blocks.iter().enumerate() {
            if let FeasibleSet::Box { lower: l, upper: u } = b {
                let r = self.block_range(k);
                lower.rows_mut(r.start, r.len()).copy_from(l);
                upper.rows_mut(r.start, r.len()).copy_from(u);
            }
        }
        (lower, upper)
    }

    /// Joint inequality rows `rows · x ≤ rhs` collected from the polyhedral blocks.
    pub fn rows(&self) -> (DMatrix<f64>, DVector<f64>) {
        let m: usize = self
            .blocks
            .iter()
            .map(|b| match b {
                FeasibleSet::Polyhedron { a, .. } => a.nrows(),
                FeasibleSet::Box { .. } => 0,
            })
            .sum();
        let mut rows = DMatrix::zeros(m, self.dim);
        let mut rhs = DVector::zeros(m);
        let mut r0 = 0;
        for (k, blk) in self.blocks.iter().enumerate() {
            if let FeasibleSet::Polyhedron { a, b } = blk {
                let c0 = self.offsets[k];
                rows.view_mut((r0, c0), (a.nrows(), a.ncols())).copy_from(a);
                rhs.rows_mut(r0, b.len()).copy_from(b);
                r0 += a.nrows();
            }
        }
        (rows, rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_rejects_inverted_bounds() {
        let r = FeasibleSet::boxed(DVector::from_vec(vec![1.0]), DVector::from_vec(vec![0.0]));
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn polyhedron_rejects_non_finite_rows() {
        let r = FeasibleSet::polyhedron(
            DMatrix::from_row_slice(1, 1, &[f64::INFINITY]),
            DVector::from_vec(vec![0.0]),
        );
        assert!(r.is_err());
    }

    #[test]
    fn box_projection_clamps() {
        let s = FeasibleSet::uniform_box(3, 0.0, 1.0).unwrap();
        let p = s.project(&DVector::from_vec(vec![-1.0, 0.5, 2.0]));
        assert_eq!(p.as_slice(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn polyhedron_projection_onto_halfspace() {
        // x1 + x2 <= 1, project (1,1) -> (0.5,0.5)
        let s = FeasibleSet::polyhedron(
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_vec(vec![1.0]),
        )
        .unwrap();
        let p = s.project(&DVector::from_vec(vec![1.0, 1.0]));
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
        assert!(s.max_violation(&p) < 1e-12);
    }

    #[test]
    fn product_rows_are_block_diagonal() {
        let ps = ProductSet::new(vec![
            FeasibleSet::uniform_box(1, 0.0, 1.0).unwrap(),
            FeasibleSet::polyhedron(
                DMatrix::from_row_slice(1, 2, &[1.0, 2.0]),
                DVector::from_vec(vec![3.0]),
            )
            .unwrap(),
        ]);
        let (rows, rhs) = ps.rows();
        assert_eq!(rows.shape(), (1, 3));
        assert_eq!(rows.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0, 2.0]);
        assert_eq!(rhs[0], 3.0);
        let (lo, hi) = ps.bounds();
        assert_eq!(lo[0], 0.0);
        assert_eq!(hi[0], 1.0);
        assert_eq!(lo[1], f64::NEG_INFINITY);
    }
}
