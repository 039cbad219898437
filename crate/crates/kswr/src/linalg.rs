//! Symmetric tridiagonal systems and the 1-D linear finite element
//! matrices (mass and stiffness) on a uniform velocity grid.
//!
//! The parabolic sub-step solves one system per x-column with the matrix
//! `(1/tau) M + S`, possibly augmented by a Robin weight on an interface
//! node. All matrices here are symmetric tridiagonal, so a single LDL^T
//! factorization per run is enough; solves reuse it with private buffers.

use thiserror::Error;

/// Pivot threshold below which a factorization is rejected as not SPD.
pub const PIVOT_FLOOR: f64 = 1e-300;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("pivot {value:.3e} below {PIVOT_FLOOR:.0e} at row {index}: matrix not positive definite")]
    PivotTooSmall { index: usize, value: f64 },
    #[error("dimension mismatch: system has {n} rows, right-hand side has {rhs}")]
    DimensionMismatch { n: usize, rhs: usize },
}

/// Which end of the velocity range a boundary modification applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Low,
    High,
}

/// A symmetric tridiagonal matrix: `diag` holds the n main-diagonal
/// entries, `off` the n-1 sub/super-diagonal entries.
#[derive(Debug, Clone, PartialEq)]
pub struct TriDiagSystem {
    diag: Vec<f64>,
    off: Vec<f64>,
}

/// Robin boundary treatment of the parabolic matrix: the Robin weight
/// (p or q) is added to the boundary diagonal entry, and the incoming
/// trace value enters the right-hand side at the same node scaled by
/// `rhs_trace_weight` (1.0 for the variational imposition used here).
#[derive(Debug, Clone, Copy)]
pub struct RobinAugmentation {
    pub side: Side,
    pub coefficient: f64,
    pub rhs_trace_weight: f64,
}

impl TriDiagSystem {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert!(!diag.is_empty(), "empty system");
        assert_eq!(off.len() + 1, diag.len(), "off-diagonal length must be n-1");
        Self { diag, off }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn off(&self) -> &[f64] {
        &self.off
    }

    pub fn add_to_diag(&mut self, index: usize, delta: f64) {
        self.diag[index] += delta;
    }

    /// Adds the Robin weight to the diagonal entry of the given end.
    pub fn apply_robin(&mut self, aug: &RobinAugmentation) {
        let i = match aug.side {
            Side::Low => 0,
            Side::High => self.n() - 1,
        };
        self.diag[i] += aug.coefficient;
    }

    /// `ca * A + cb * B` for two systems of equal dimension.
    pub fn combine(a: &Self, ca: f64, b: &Self, cb: f64) -> Self {
        assert_eq!(a.n(), b.n(), "combine: dimension mismatch");
        let diag = a
            .diag
            .iter()
            .zip(&b.diag)
            .map(|(x, y)| ca * x + cb * y)
            .collect();
        let off = a
            .off
            .iter()
            .zip(&b.off)
            .map(|(x, y)| ca * x + cb * y)
            .collect();
        Self { diag, off }
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        self.matvec_scaled(x, 1.0, y);
    }

    /// y = scale * (A x); the scaling fuses into the stencil pass.
    pub fn matvec_scaled(&self, x: &[f64], scale: f64, y: &mut [f64]) {
        let n = self.n();
        assert_eq!(x.len(), n);
        assert_eq!(y.len(), n);
        if n == 1 {
            y[0] = scale * self.diag[0] * x[0];
            return;
        }
        let (d, o) = (&self.diag, &self.off);
        unsafe {
            *y.get_unchecked_mut(0) =
                scale * (*d.get_unchecked(0) * *x.get_unchecked(0)
                    + *o.get_unchecked(0) * *x.get_unchecked(1));
            for i in 1..n - 1 {
                *y.get_unchecked_mut(i) = scale
                    * (*o.get_unchecked(i - 1) * *x.get_unchecked(i - 1)
                        + *d.get_unchecked(i) * *x.get_unchecked(i)
                        + *o.get_unchecked(i) * *x.get_unchecked(i + 1));
            }
            *y.get_unchecked_mut(n - 1) = scale
                * (*o.get_unchecked(n - 2) * *x.get_unchecked(n - 2)
                    + *d.get_unchecked(n - 1) * *x.get_unchecked(n - 1));
        }
    }

    /// The principal sub-block on rows/columns `lo..hi` (half-open).
    pub fn principal_block(&self, lo: usize, hi: usize) -> Self {
        assert!(lo < hi && hi <= self.n());
        Self {
            diag: self.diag[lo..hi].to_vec(),
            off: self.off[lo..hi - 1].to_vec(),
        }
    }

    /// LDL^T factorization; fails if a pivot falls below [`PIVOT_FLOOR`].
    pub fn factor(&self) -> Result<TriDiagFactor, LinalgError> {
        let n = self.n();
        let mut d = vec![0.0; n];
        let mut l = vec![0.0; n.saturating_sub(1)];
        d[0] = self.diag[0];
        if d[0] < PIVOT_FLOOR {
            return Err(LinalgError::PivotTooSmall { index: 0, value: d[0] });
        }
        for i in 1..n {
            l[i - 1] = self.off[i - 1] / d[i - 1];
            d[i] = self.diag[i] - self.off[i - 1] * l[i - 1];
            if d[i] < PIVOT_FLOOR {
                return Err(LinalgError::PivotTooSmall { index: i, value: d[i] });
            }
        }
        Ok(TriDiagFactor { d, l })
    }
}

/// LDL^T factors of a symmetric tridiagonal SPD matrix. Immutable after
/// construction; concurrent solves are safe since each works in-place on
/// its own right-hand side.
#[derive(Debug, Clone)]
pub struct TriDiagFactor {
    d: Vec<f64>,
    l: Vec<f64>,
}

impl TriDiagFactor {
    pub fn n(&self) -> usize {
        self.d.len()
    }

    /// Solves A x = rhs in place.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.n();
        assert_eq!(rhs.len(), n);
        for i in 1..n {
            rhs[i] -= self.l[i - 1] * rhs[i - 1];
        }
        for i in 0..n {
            rhs[i] /= self.d[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.l[i] * rhs[i + 1];
        }
    }

    /// Solves A x = rhs, clobbering `rhs` with the forward sweep and
    /// writing the solution into `out`. Two passes instead of three:
    /// the diagonal scaling folds into the back substitution.
    pub fn solve_into(&self, rhs: &mut [f64], out: &mut [f64]) {
        let n = self.n();
        debug_assert_eq!(rhs.len(), n);
        debug_assert_eq!(out.len(), n);
        unsafe {
            for i in 1..n {
                let upd = *rhs.get_unchecked(i)
                    - *self.l.get_unchecked(i - 1) * *rhs.get_unchecked(i - 1);
                *rhs.get_unchecked_mut(i) = upd;
            }
            let mut next = *rhs.get_unchecked(n - 1) / *self.d.get_unchecked(n - 1);
            *out.get_unchecked_mut(n - 1) = next;
            for i in (0..n - 1).rev() {
                next = *rhs.get_unchecked(i) / *self.d.get_unchecked(i)
                    - *self.l.get_unchecked(i) * next;
                *out.get_unchecked_mut(i) = next;
            }
        }
    }
}

/// Linear finite element mass matrix on `n_nodes` uniformly spaced nodes
/// with step `hv`: boundary diagonal hv/3, interior diagonal 2hv/3,
/// off-diagonal hv/6.
pub fn assemble_mass(n_nodes: usize, hv: f64) -> TriDiagSystem {
    assert!(n_nodes >= 2, "mass matrix needs at least 2 nodes");
    assert!(hv > 0.0, "hv must be positive");
    let mut diag = vec![2.0 * hv / 3.0; n_nodes];
    diag[0] = hv / 3.0;
    diag[n_nodes - 1] = hv / 3.0;
    let off = vec![hv / 6.0; n_nodes - 1];
    TriDiagSystem::new(diag, off)
}

/// Linear finite element stiffness matrix: boundary diagonal 1/hv,
/// interior diagonal 2/hv, off-diagonal -1/hv. Row sums vanish.
pub fn assemble_stiffness(n_nodes: usize, hv: f64) -> TriDiagSystem {
    assert!(n_nodes >= 2, "stiffness matrix needs at least 2 nodes");
    assert!(hv > 0.0, "hv must be positive");
    let mut diag = vec![2.0 / hv; n_nodes];
    diag[0] = 1.0 / hv;
    diag[n_nodes - 1] = 1.0 / hv;
    let off = vec![-1.0 / hv; n_nodes - 1];
    TriDiagSystem::new(diag, off)
}

/// One-shot direct solve (factor + substitution) of a symmetric
/// tridiagonal SPD system.
pub fn solve_tridiag(sys: &TriDiagSystem, rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
    if rhs.len() != sys.n() {
        return Err(LinalgError::DimensionMismatch {
            n: sys.n(),
            rhs: rhs.len(),
        });
    }
    let factor = sys.factor()?;
    let mut x = rhs.to_vec();
    factor.solve_in_place(&mut x);
    Ok(x)
}
