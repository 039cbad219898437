//! Operator-splitting time stepper for one subdomain (or the full
//! velocity range): an implicit Euler / finite element parabolic
//! sub-step in v followed by an explicit semi-Lagrangian transport
//! sub-step in x, each advancing tau = dt/2 per time step.
//!
//! The `substep_full_dt` switch changes tau to dt in both sub-steps.
//!
//! Slabs are stored column-major in v: `slab[m * n_v + i]` is the value
//! at x-node m, local v-node i. Columns are independent in the parabolic
//! sub-step and may be processed in parallel.

use crate::grid::{Grid, SubdomainId};
use crate::linalg::{
    assemble_mass, assemble_stiffness, LinalgError, RobinAugmentation, Side, TriDiagFactor,
    TriDiagSystem,
};
use rayon::prelude::*;
use std::io::{self, Write};
use thiserror::Error;

/// Slabs below this size are stepped serially; parallel dispatch
/// overhead dominates otherwise.
const PAR_THRESHOLD: usize = 1 << 14;

#[derive(Debug, Error)]
pub enum SplitStepError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("both velocity ends carry inner conditions; a subdomain has exactly one interface")]
    DoubleInner,
    #[error("Robin coefficient must be nonnegative, got {0}")]
    NegativeRobinCoefficient(f64),
    #[error("inner boundary condition at the {side:?} end needs an interface trace")]
    MissingTrace { side: Side },
    #[error("trace has {rows} rows of {cols}, window needs {need_rows} rows of {need_cols}")]
    TraceShape {
        rows: usize,
        cols: usize,
        need_rows: usize,
        need_cols: usize,
    },
    #[error("CFL violation: v = {v} gives transport weight {weight} > 1; reduce tau or refine hx")]
    CflViolation { v: f64, weight: f64 },
    #[error("initial slab has {got} values, expected {need}")]
    InitialShape { got: usize, need: usize },
    #[error("velocity range needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
}

/// Condition at one velocity end of a subdomain. The physical ends
/// v = -1 and v = +1 are always homogeneous Neumann; interfaces carry
/// Dirichlet (classical transmission) or Robin (optimized transmission).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VBoundary {
    Neumann,
    Dirichlet,
    Robin(f64),
}

impl VBoundary {
    fn is_inner(&self) -> bool {
        !matches!(self, VBoundary::Neumann)
    }
}

/// Boundary pair for one subdomain's velocity range. At most one end
/// may carry an inner (non-Neumann) condition; the monodomain uses
/// Neumann at both.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySpec {
    pub low: VBoundary,
    pub high: VBoundary,
}

impl BoundarySpec {
    pub fn neumann() -> Self {
        Self {
            low: VBoundary::Neumann,
            high: VBoundary::Neumann,
        }
    }

    pub fn inner_high(bc: VBoundary) -> Self {
        Self {
            low: VBoundary::Neumann,
            high: bc,
        }
    }

    pub fn inner_low(bc: VBoundary) -> Self {
        Self {
            low: bc,
            high: VBoundary::Neumann,
        }
    }

    /// The side holding the inner condition, if any.
    pub fn inner_side(&self) -> Option<Side> {
        if self.low.is_inner() {
            Some(Side::Low)
        } else if self.high.is_inner() {
            Some(Side::High)
        } else {
            None
        }
    }

    fn validate(&self) -> Result<(), SplitStepError> {
        if self.low.is_inner() && self.high.is_inner() {
            return Err(SplitStepError::DoubleInner);
        }
        for bc in [self.low, self.high] {
            if let VBoundary::Robin(c) = bc {
                if c < 0.0 {
                    return Err(SplitStepError::NegativeRobinCoefficient(c));
                }
            }
        }
        Ok(())
    }
}

/// Which interface line a trace lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterfaceId {
    /// v = beta, the right end of Omega1 (lambda_1 lives here).
    Beta,
    /// v = alpha, the left end of Omega2 (lambda_2 lives here).
    Alpha,
}

impl std::fmt::Display for InterfaceId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InterfaceId::Beta => write!(f, "beta"),
            InterfaceId::Alpha => write!(f, "alpha"),
        }
    }
}

/// Transmitted boundary data on one interface line: one value per
/// (time node, x node). The sub-step advancing n -> n+1 consumes row n,
/// so row 0 is the compatibility row: initial traces keep it at zero to
/// match the zero initial data of the error equation.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceTrace {
    pub interface: InterfaceId,
    n_x: usize,
    values: Vec<f64>,
}

impl InterfaceTrace {
    pub fn zeros(interface: InterfaceId, n_t: usize, n_x: usize) -> Self {
        Self {
            interface,
            n_x,
            values: vec![0.0; (n_t + 1) * n_x],
        }
    }

    pub fn rows(&self) -> usize {
        self.values.len() / self.n_x
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn at(&self, n: usize, m: usize) -> f64 {
        self.values[n * self.n_x + m]
    }

    pub fn set(&mut self, n: usize, m: usize, value: f64) {
        self.values[n * self.n_x + m] = value;
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n * self.n_x..(n + 1) * self.n_x]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// One subdomain's space-time solution samples u[n][m][i] over
/// (n_t + 1) time nodes, n_x periodic x-nodes and a contiguous range of
/// global v-node indices starting at `v_lo`.
#[derive(Debug, Clone)]
pub struct Field {
    pub subdomain: SubdomainId,
    /// Global index of the first v-node stored.
    pub v_lo: usize,
    pub n_v: usize,
    pub n_x: usize,
    pub n_t: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(subdomain: SubdomainId, v_lo: usize, n_v: usize, n_x: usize, n_t: usize) -> Self {
        Self {
            subdomain,
            v_lo,
            n_v,
            n_x,
            n_t,
            values: vec![0.0; (n_t + 1) * n_x * n_v],
        }
    }

    pub fn v_hi(&self) -> usize {
        self.v_lo + self.n_v - 1
    }

    pub fn at(&self, n: usize, m: usize, i: usize) -> f64 {
        self.values[(n * self.n_x + m) * self.n_v + i]
    }

    /// Value at a global v-node index.
    pub fn at_global(&self, n: usize, m: usize, global_v: usize) -> f64 {
        debug_assert!(global_v >= self.v_lo && global_v <= self.v_hi());
        self.at(n, m, global_v - self.v_lo)
    }

    pub fn slab(&self, n: usize) -> &[f64] {
        let len = self.n_x * self.n_v;
        &self.values[n * len..(n + 1) * len]
    }

    fn slab_mut(&mut self, n: usize) -> &mut [f64] {
        let len = self.n_x * self.n_v;
        &mut self.values[n * len..(n + 1) * len]
    }

    /// Largest absolute value over the whole space-time field.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// CSV dump of selected time slabs for debugging. One line per
    /// (n, m) holding the v-row in storage order.
    pub fn dump_csv<W: Write>(&self, w: &mut W, steps: &[usize]) -> io::Result<()> {
        writeln!(
            w,
            "# field slab dump: n_t={} n_x={} n_v={} subdomain={} v_lo={}",
            self.n_t, self.n_x, self.n_v, self.subdomain, self.v_lo
        )?;
        writeln!(w, "# rows: n,m,u[i] for i = 0..n_v-1 (v-major within a row)")?;
        for &n in steps {
            for m in 0..self.n_x {
                write!(w, "{n},{m}")?;
                for i in 0..self.n_v {
                    write!(w, ",{}", self.at(n, m, i))?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }
}

/// Receives each computed time slab; lets the waveform driver keep only
/// interface strips instead of whole fields on refined meshes.
pub trait SlabRecorder {
    fn record(&mut self, n: usize, slab: &[f64]);
}

/// Records the full field.
pub struct FieldRecorder {
    pub field: Field,
}

impl FieldRecorder {
    pub fn new(subdomain: SubdomainId, v_lo: usize, n_v: usize, n_x: usize, n_t: usize) -> Self {
        Self {
            field: Field::zeros(subdomain, v_lo, n_v, n_x, n_t),
        }
    }
}

impl SlabRecorder for FieldRecorder {
    fn record(&mut self, n: usize, slab: &[f64]) {
        self.field.slab_mut(n).copy_from_slice(slab);
    }
}

/// Records a contiguous v-subrange of every slab into a narrow Field.
pub struct SubrangeRecorder {
    pub field: Field,
    local_lo: usize,
}

impl SubrangeRecorder {
    /// `global_lo..=global_hi` is the recorded node range; `window_v_lo`
    /// is the global index of the source window's first node.
    pub fn new(
        subdomain: SubdomainId,
        window_v_lo: usize,
        global_lo: usize,
        global_hi: usize,
        n_x: usize,
        n_t: usize,
    ) -> Self {
        assert!(global_lo >= window_v_lo && global_hi >= global_lo);
        Self {
            field: Field::zeros(subdomain, global_lo, global_hi - global_lo + 1, n_x, n_t),
            local_lo: global_lo - window_v_lo,
        }
    }
}

impl SlabRecorder for SubrangeRecorder {
    fn record(&mut self, n: usize, slab: &[f64]) {
        let keep = self.field.n_v;
        let n_x = self.field.n_x;
        let src_nv = slab.len() / n_x;
        let lo = self.local_lo;
        let dst = self.field.slab_mut(n);
        for m in 0..n_x {
            dst[m * keep..(m + 1) * keep]
                .copy_from_slice(&slab[m * src_nv + lo..m * src_nv + lo + keep]);
        }
    }
}

/// The implicit parabolic sub-step operator for one v-range: the matrix
/// (1/tau) M + S with the boundary treatment baked in, factored once.
pub struct ParabolicOp {
    n_v: usize,
    inv_tau: f64,
    mass: TriDiagSystem,
    full: TriDiagSystem,
    factor: TriDiagFactor,
    bc: BoundarySpec,
    dirichlet: Option<Side>,
    robin: Option<(Side, RobinAugmentation)>,
}

impl ParabolicOp {
    pub fn new(n_nodes: usize, hv: f64, tau: f64, bc: BoundarySpec) -> Result<Self, SplitStepError> {
        if n_nodes < 2 {
            return Err(SplitStepError::TooFewNodes(n_nodes));
        }
        Self::with_matrices(
            assemble_mass(n_nodes, hv),
            assemble_stiffness(n_nodes, hv),
            tau,
            bc,
        )
    }

    /// Builds the operator from explicit matrices; the stiffness matrix
    /// may differ from the stock assembly (used by the verification
    /// harness for fault injection).
    pub fn with_matrices(
        mass: TriDiagSystem,
        stiffness: TriDiagSystem,
        tau: f64,
        bc: BoundarySpec,
    ) -> Result<Self, SplitStepError> {
        bc.validate()?;
        assert!(tau > 0.0, "tau must be positive");
        let n_v = mass.n();
        let inv_tau = 1.0 / tau;
        let mut full = TriDiagSystem::combine(&mass, inv_tau, &stiffness, 1.0);

        let mut dirichlet = None;
        let mut robin = None;
        for (side, cond) in [(Side::Low, bc.low), (Side::High, bc.high)] {
            match cond {
                VBoundary::Neumann => {}
                VBoundary::Dirichlet => dirichlet = Some(side),
                VBoundary::Robin(c) => {
                    let aug = RobinAugmentation {
                        side,
                        coefficient: c,
                        rhs_trace_weight: 1.0,
                    };
                    full.apply_robin(&aug);
                    robin = Some((side, aug));
                }
            }
        }

        let factor = match dirichlet {
            Some(Side::High) => full.principal_block(0, n_v - 1).factor()?,
            Some(Side::Low) => full.principal_block(1, n_v).factor()?,
            None => full.factor()?,
        };

        Ok(Self {
            n_v,
            inv_tau,
            mass,
            full,
            factor,
            bc,
            dirichlet,
            robin,
        })
    }

    pub fn n_v(&self) -> usize {
        self.n_v
    }

    pub fn bc(&self) -> BoundarySpec {
        self.bc
    }

    pub fn needs_trace(&self) -> bool {
        self.bc.inner_side().is_some()
    }

    /// Advances one x-column by tau: solves
    /// ((1/tau) M + S + robin) u' = (1/tau) M u + M f + trace terms.
    /// `work` must hold 2 * n_v scratch values.
    pub fn apply_column(
        &self,
        col: &mut [f64],
        trace: Option<f64>,
        source: Option<&[f64]>,
        work: &mut [f64],
    ) {
        let n = self.n_v;
        debug_assert_eq!(col.len(), n);
        let (tmp, rhs) = work.split_at_mut(n);
        match source {
            Some(f) => {
                for i in 0..n {
                    tmp[i] = col[i] * self.inv_tau + f[i];
                }
                self.mass.matvec(tmp, rhs);
            }
            None => self.mass.matvec_scaled(col, self.inv_tau, rhs),
        }

        if let Some((side, aug)) = self.robin {
            let g = trace.expect("validated: Robin boundary needs a trace");
            let idx = match side {
                Side::Low => 0,
                Side::High => n - 1,
            };
            rhs[idx] += aug.rhs_trace_weight * g;
        }

        match self.dirichlet {
            Some(Side::High) => {
                let g = trace.expect("validated: Dirichlet boundary needs a trace");
                rhs[n - 2] -= self.full.off()[n - 2] * g;
                self.factor.solve_into(&mut rhs[..n - 1], &mut col[..n - 1]);
                col[n - 1] = g;
            }
            Some(Side::Low) => {
                let g = trace.expect("validated: Dirichlet boundary needs a trace");
                rhs[1] -= self.full.off()[0] * g;
                self.factor.solve_into(&mut rhs[1..], &mut col[1..]);
                col[0] = g;
            }
            None => {
                self.factor.solve_into(rhs, col);
            }
        }
    }

    /// Applies the sub-step to every x-column of a slab. Columns are
    /// independent; large slabs are processed in parallel with
    /// bit-identical results.
    pub fn apply_slab(&self, slab: &mut [f64], trace_row: Option<&[f64]>, source: Option<&[f64]>) {
        let n_v = self.n_v;
        assert_eq!(slab.len() % n_v, 0);
        fn col_of<'s>(src: Option<&'s [f64]>, m: usize, n_v: usize) -> Option<&'s [f64]> {
            src.map(|s| &s[m * n_v..(m + 1) * n_v])
        }
        if slab.len() < PAR_THRESHOLD {
            let mut work = vec![0.0; 2 * n_v];
            for (m, col) in slab.chunks_mut(n_v).enumerate() {
                let tr = trace_row.map(|r| r[m]);
                self.apply_column(col, tr, col_of(source, m, n_v), &mut work);
            }
        } else {
            slab.par_chunks_mut(n_v).with_min_len(8).enumerate().for_each_init(
                || vec![0.0; 2 * n_v],
                |work, (m, col)| {
                    let tr = trace_row.map(|r| r[m]);
                    self.apply_column(col, tr, col_of(source, m, n_v), work);
                },
            );
        }
    }
}

/// One parabolic sub-step over a whole slab, building the operator on
/// the fly. `trace_row` supplies the interface value per x-node when the
/// boundary spec has an inner condition.
pub fn parabolic_half_step(
    slab: &mut [f64],
    n_x: usize,
    hv: f64,
    tau: f64,
    bc: BoundarySpec,
    trace_row: Option<&[f64]>,
) -> Result<(), SplitStepError> {
    assert_eq!(slab.len() % n_x, 0, "slab length must be a multiple of n_x");
    let n_v = slab.len() / n_x;
    if n_v < 2 {
        return Err(SplitStepError::TooFewNodes(n_v));
    }
    let op = ParabolicOp::new(n_v, hv, tau, bc)?;
    if op.needs_trace() {
        match trace_row {
            None => {
                return Err(SplitStepError::MissingTrace {
                    side: bc.inner_side().unwrap(),
                })
            }
            Some(r) if r.len() != n_x => {
                return Err(SplitStepError::TraceShape {
                    rows: 1,
                    cols: r.len(),
                    need_rows: 1,
                    need_cols: n_x,
                })
            }
            _ => {}
        }
    }
    op.apply_slab(slab, trace_row, None);
    Ok(())
}

/// Precomputed semi-Lagrangian weights for one v-range: row i of the
/// new slab is the convex combination (1 - w_i) u[m] + w_i u[m +- 1]
/// with w_i = |v_i| tau / hx, shifting from m+1 for v < 0 and from m-1
/// for v >= 0, periodic in m.
#[derive(Debug)]
pub struct TransportOp {
    weights: Vec<f64>,
    /// Rows below this index have v < 0.
    split: usize,
}

impl TransportOp {
    pub fn new(v_rows: &[f64], tau: f64, hx: f64) -> Result<Self, SplitStepError> {
        let weights: Vec<f64> = v_rows.iter().map(|v| v.abs() * tau / hx).collect();
        for (i, &w) in weights.iter().enumerate() {
            if w > 1.0 + 1e-12 {
                return Err(SplitStepError::CflViolation {
                    v: v_rows[i],
                    weight: w,
                });
            }
        }
        let split = v_rows.iter().take_while(|v| **v < 0.0).count();
        Ok(Self { weights, split })
    }

    pub fn apply(&self, input: &[f64], output: &mut [f64], n_x: usize) {
        let n_v = self.weights.len();
        assert_eq!(input.len(), n_x * n_v);
        assert_eq!(output.len(), n_x * n_v);
        let split = self.split;
        let step = |m: usize, out: &mut [f64]| {
            let here = &input[m * n_v..(m + 1) * n_v];
            let right = &input[((m + 1) % n_x) * n_v..((m + 1) % n_x + 1) * n_v];
            let left = &input[((m + n_x - 1) % n_x) * n_v..((m + n_x - 1) % n_x + 1) * n_v];
            let (out_neg, out_pos) = out.split_at_mut(split);
            for (((o, &w), &h), &r) in out_neg
                .iter_mut()
                .zip(&self.weights[..split])
                .zip(&here[..split])
                .zip(&right[..split])
            {
                *o = (1.0 - w) * h + w * r;
            }
            for (((o, &w), &h), &l) in out_pos
                .iter_mut()
                .zip(&self.weights[split..])
                .zip(&here[split..])
                .zip(&left[split..])
            {
                *o = (1.0 - w) * h + w * l;
            }
        };
        if input.len() < PAR_THRESHOLD {
            for (m, out) in output.chunks_mut(n_v).enumerate() {
                step(m, out);
            }
        } else {
            output
                .par_chunks_mut(n_v)
                .with_min_len(8)
                .enumerate()
                .for_each(|(m, out)| step(m, out));
        }
    }
}

/// One explicit transport sub-step on a slab whose rows move at the
/// speeds in `v_rows`.
pub fn transport_step(
    input: &[f64],
    output: &mut [f64],
    n_x: usize,
    v_rows: &[f64],
    tau: f64,
    hx: f64,
) -> Result<(), SplitStepError> {
    let op = TransportOp::new(v_rows, tau, hx)?;
    op.apply(input, output, n_x);
    Ok(())
}

/// Everything needed to advance one subdomain over the full time window.
pub struct WindowProblem<'a> {
    pub grid: &'a Grid,
    pub subdomain: SubdomainId,
    pub bc: BoundarySpec,
    pub trace: Option<&'a InterfaceTrace>,
    /// Volume source f(t, x, v) evaluated implicitly at the step's end
    /// time; None for the homogeneous error equation.
    pub source: Option<&'a (dyn Fn(f64, f64, f64) -> f64 + Sync)>,
    pub substep_full_dt: bool,
}

impl<'a> WindowProblem<'a> {
    pub fn tau(&self) -> f64 {
        if self.substep_full_dt {
            self.grid.dt
        } else {
            0.5 * self.grid.dt
        }
    }
}

/// Advances the window and returns the full space-time field.
pub fn advance_window(initial: &[f64], problem: &WindowProblem) -> Result<Field, SplitStepError> {
    let grid = problem.grid;
    let (v_lo, v_hi) = grid.v_node_range(problem.subdomain);
    let mut rec = FieldRecorder::new(problem.subdomain, v_lo, v_hi - v_lo + 1, grid.n_x, grid.n_t);
    advance_window_record(initial, problem, &mut rec)?;
    Ok(rec.field)
}

/// Advances the window, handing each time slab (including the initial
/// one) to the recorder. This is the streaming form used by the waveform
/// iteration, which only keeps interface strips.
pub fn advance_window_record<R: SlabRecorder>(
    initial: &[f64],
    problem: &WindowProblem,
    recorder: &mut R,
) -> Result<(), SplitStepError> {
    let grid = problem.grid;
    let (v_lo, v_hi) = grid.v_node_range(problem.subdomain);
    let n_v = v_hi - v_lo + 1;
    let n_x = grid.n_x;
    if initial.len() != n_x * n_v {
        return Err(SplitStepError::InitialShape {
            got: initial.len(),
            need: n_x * n_v,
        });
    }
    let tau = problem.tau();
    let v_rows = &grid.v_nodes()[v_lo..=v_hi];
    let transport = TransportOp::new(v_rows, tau, grid.hx)?;
    let op = ParabolicOp::new(n_v, grid.hv, tau, problem.bc)?;
    if op.needs_trace() {
        match problem.trace {
            None => {
                return Err(SplitStepError::MissingTrace {
                    side: problem.bc.inner_side().unwrap(),
                })
            }
            Some(tr) if tr.rows() != grid.n_t + 1 || tr.n_x() != n_x => {
                return Err(SplitStepError::TraceShape {
                    rows: tr.rows(),
                    cols: tr.n_x(),
                    need_rows: grid.n_t + 1,
                    need_cols: n_x,
                })
            }
            _ => {}
        }
    }

    let mut slab = initial.to_vec();
    let mut next = vec![0.0; slab.len()];
    let mut source_slab = problem.source.map(|_| vec![0.0; slab.len()]);
    recorder.record(0, &slab);
    for n in 0..grid.n_t {
        let t_eval = grid.t(n + 1);
        if let (Some(f), Some(buf)) = (problem.source, source_slab.as_mut()) {
            for m in 0..n_x {
                let x = grid.x(m);
                for (i, &v) in v_rows.iter().enumerate() {
                    buf[m * n_v + i] = f(t_eval, x, v);
                }
            }
        }
        // Interface data for the step n -> n+1 is the trace sample at t_n.
        // Sampling at t_{n+1} instead would, at zero overlap, hand the
        // Dirichlet solve the neighbor's freshly imposed line verbatim
        // (the v = 0 row has zero transport speed), silently zeroing the
        // interface error metric for a non-convergent iteration.
        let trace_row = problem.trace.map(|tr| tr.row(n));
        op.apply_slab(&mut slab, trace_row, source_slab.as_deref());
        transport.apply(&slab, &mut next, n_x);
        std::mem::swap(&mut slab, &mut next);
        recorder.record(n + 1, &slab);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridConfig};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_slab(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Dense backward-Euler oracle for one parabolic column:
    /// ((1/tau) M + S) u' = (1/tau) M u with row-replacement Dirichlet
    /// or diagonal-bump Robin at the chosen end.
    fn dense_parabolic_oracle(
        col: &[f64],
        hv: f64,
        tau: f64,
        bc: BoundarySpec,
        trace: Option<f64>,
    ) -> Vec<f64> {
        let n = col.len();
        let m = assemble_mass(n, hv);
        let s = assemble_stiffness(n, hv);
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = m.diag()[i] / tau + s.diag()[i];
            if i + 1 < n {
                a[i][i + 1] = m.off()[i] / tau + s.off()[i];
                a[i + 1][i] = a[i][i + 1];
            }
        }
        let mut rhs = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        for i in 0..n {
            tmp[i] = col[i] / tau;
        }
        m.matvec(&tmp, &mut rhs);
        let mut apply_end = |idx: usize, cond: VBoundary| match cond {
            VBoundary::Neumann => {}
            VBoundary::Dirichlet => {
                for j in 0..n {
                    a[idx][j] = 0.0;
                }
                a[idx][idx] = 1.0;
                rhs[idx] = trace.unwrap();
            }
            VBoundary::Robin(c) => {
                a[idx][idx] += c;
                rhs[idx] += trace.unwrap();
            }
        };
        apply_end(0, bc.low);
        apply_end(n - 1, bc.high);
        // Dense Gaussian elimination with partial pivoting.
        for k in 0..n {
            let piv = (k..n)
                .max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap())
                .unwrap();
            a.swap(k, piv);
            rhs.swap(k, piv);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                rhs[i] -= f * rhs[k];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                rhs[i] -= a[i][j] * rhs[j];
            }
            rhs[i] /= a[i][i];
        }
        rhs
    }

    #[test]
    fn constant_column_is_fixed_by_neumann_step() {
        let op = ParabolicOp::new(9, 0.1, 0.005, BoundarySpec::neumann()).unwrap();
        let mut col = vec![2.5; 9];
        let mut work = vec![0.0; 18];
        op.apply_column(&mut col, None, None, &mut work);
        for v in col {
            assert!((v - 2.5).abs() < 1e-13);
        }
    }

    #[test]
    fn parabolic_step_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cases = [
            (BoundarySpec::neumann(), None),
            (BoundarySpec::inner_high(VBoundary::Dirichlet), Some(0.0)),
            (BoundarySpec::inner_high(VBoundary::Dirichlet), Some(0.7)),
            (BoundarySpec::inner_low(VBoundary::Dirichlet), Some(-0.4)),
            (BoundarySpec::inner_high(VBoundary::Robin(4.23)), Some(1.3)),
            (BoundarySpec::inner_low(VBoundary::Robin(11.0)), Some(0.2)),
        ];
        for (bc, trace) in cases {
            for n in [5usize, 23] {
                let col: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let oracle = dense_parabolic_oracle(&col, 0.01, 0.005, bc, trace);
                let op = ParabolicOp::new(n, 0.01, 0.005, bc).unwrap();
                let mut got = col.clone();
                let mut work = vec![0.0; 2 * n];
                op.apply_column(&mut got, trace, None, &mut work);
                for i in 0..n {
                    assert!(
                        (got[i] - oracle[i]).abs() <= 1e-10,
                        "{bc:?} n={n} node {i}: {} vs {}",
                        got[i],
                        oracle[i]
                    );
                }
            }
        }
    }

    #[test]
    fn robin_with_zero_coefficient_and_trace_is_neumann() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let col: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
        let neumann = ParabolicOp::new(15, 0.01, 0.005, BoundarySpec::neumann()).unwrap();
        let robin =
            ParabolicOp::new(15, 0.01, 0.005, BoundarySpec::inner_high(VBoundary::Robin(0.0)))
                .unwrap();
        let mut a = col.clone();
        let mut b = col.clone();
        let mut work = vec![0.0; 30];
        neumann.apply_column(&mut a, None, None, &mut work);
        robin.apply_column(&mut b, Some(0.0), None, &mut work);
        assert_eq!(a, b);
    }

    #[test]
    fn transport_zero_speed_and_unit_weight() {
        // v = 0 row unchanged; |v| tau / hx = 1 rows become a pure shift.
        let v_rows = [-1.0, 0.0, 1.0];
        let (n_x, n_v) = (4usize, 3usize);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let input = random_slab(&mut rng, n_x * n_v);
        let mut out = vec![0.0; input.len()];
        transport_step(&input, &mut out, n_x, &v_rows, 0.1, 0.1).unwrap();
        for m in 0..n_x {
            // zero-speed row
            assert_eq!(out[m * n_v + 1], input[m * n_v + 1]);
            // v = -1: shift from m+1; v = +1: shift from m-1
            assert_eq!(out[m * n_v], input[((m + 1) % n_x) * n_v]);
            assert_eq!(out[m * n_v + 2], input[((m + n_x - 1) % n_x) * n_v + 2]);
        }
    }

    #[test]
    fn transport_conserves_row_sums() {
        let grid = build_grid(&GridConfig::default()).unwrap();
        let v_rows = grid.v_nodes();
        let n_v = v_rows.len();
        let n_x = grid.n_x;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let input = random_slab(&mut rng, n_x * n_v);
        let mut out = vec![0.0; input.len()];
        transport_step(&input, &mut out, n_x, v_rows, 0.005, grid.hx).unwrap();
        for i in 0..n_v {
            let before: f64 = (0..n_x).map(|m| input[m * n_v + i]).sum();
            let after: f64 = (0..n_x).map(|m| out[m * n_v + i]).sum();
            assert!(
                (before - after).abs() <= 1e-13 * before.abs().max(1.0),
                "row {i}: {before} vs {after}"
            );
        }
    }

    #[test]
    fn cfl_violation_is_reported() {
        let err = TransportOp::new(&[-1.0, 0.5], 0.3, 0.1).unwrap_err();
        match err {
            SplitStepError::CflViolation { v, weight } => {
                assert_eq!(v, -1.0);
                assert!((weight - 3.0).abs() < 1e-12);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn zero_data_zero_trace_stays_zero() {
        let grid = build_grid(&GridConfig::default().with_base_step(0.1)).unwrap();
        let trace = InterfaceTrace::zeros(InterfaceId::Beta, grid.n_t, grid.n_x);
        let n_v = grid.v_node_count(SubdomainId::Omega1);
        let problem = WindowProblem {
            grid: &grid,
            subdomain: SubdomainId::Omega1,
            bc: BoundarySpec::inner_high(VBoundary::Robin(4.23)),
            trace: Some(&trace),
            source: None,
            substep_full_dt: false,
        };
        let field = advance_window(&vec![0.0; grid.n_x * n_v], &problem).unwrap();
        assert_eq!(field.max_abs(), 0.0);
    }

    #[test]
    fn monodomain_conserves_discrete_mass() {
        let grid = build_grid(&GridConfig::default()).unwrap();
        let n_v = grid.n_v + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let initial = random_slab(&mut rng, grid.n_x * n_v);
        let problem = WindowProblem {
            grid: &grid,
            subdomain: SubdomainId::Mono,
            bc: BoundarySpec::neumann(),
            trace: None,
            source: None,
            substep_full_dt: false,
        };
        let field = advance_window(&initial, &problem).unwrap();
        let mass_matrix = assemble_mass(n_v, grid.hv);
        let mut scratch = vec![0.0; n_v];
        let mass_of = |slab: &[f64], scratch: &mut Vec<f64>| -> f64 {
            let mut total = 0.0;
            for m in 0..grid.n_x {
                mass_matrix.matvec(&slab[m * n_v..(m + 1) * n_v], scratch);
                total += scratch.iter().sum::<f64>();
            }
            total
        };
        let m0 = mass_of(field.slab(0), &mut scratch);
        for n in 1..=grid.n_t {
            let mn = mass_of(field.slab(n), &mut scratch);
            assert!(
                (mn - m0).abs() <= 1e-10 * m0.abs().max(1.0),
                "step {n}: mass {mn} vs {m0}"
            );
        }
    }

    #[test]
    fn monodomain_maximum_is_non_increasing() {
        let grid = build_grid(&GridConfig::default()).unwrap();
        let n_v = grid.n_v + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let initial: Vec<f64> = (0..grid.n_x * n_v)
            .map(|_| rng.random_range(0.0..1.0))
            .collect();
        let problem = WindowProblem {
            grid: &grid,
            subdomain: SubdomainId::Mono,
            bc: BoundarySpec::neumann(),
            trace: None,
            source: None,
            substep_full_dt: false,
        };
        let field = advance_window(&initial, &problem).unwrap();
        let mut prev = f64::INFINITY;
        for n in 0..=grid.n_t {
            let max = field.slab(n).iter().fold(f64::MIN, |a, &v| a.max(v));
            assert!(max <= prev + 1e-12, "step {n}: max grew {prev} -> {max}");
            prev = max;
        }
    }

    #[test]
    fn advance_window_is_linear() {
        let grid = build_grid(&GridConfig::default().with_base_step(0.05)).unwrap();
        let n_v = grid.n_v + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u0 = random_slab(&mut rng, grid.n_x * n_v);
        let w0 = random_slab(&mut rng, grid.n_x * n_v);
        let (a, b) = (0.7, -1.3);
        let combo: Vec<f64> = u0.iter().zip(&w0).map(|(u, w)| a * u + b * w).collect();
        let problem = WindowProblem {
            grid: &grid,
            subdomain: SubdomainId::Mono,
            bc: BoundarySpec::neumann(),
            trace: None,
            source: None,
            substep_full_dt: false,
        };
        let fu = advance_window(&u0, &problem).unwrap();
        let fw = advance_window(&w0, &problem).unwrap();
        let fc = advance_window(&combo, &problem).unwrap();
        for n in [0, grid.n_t / 2, grid.n_t] {
            for m in 0..grid.n_x {
                for i in 0..n_v {
                    let expect = a * fu.at(n, m, i) + b * fw.at(n, m, i);
                    assert!((fc.at(n, m, i) - expect).abs() <= 1e-11);
                }
            }
        }
    }

    #[test]
    fn parabolic_columns_are_order_independent() {
        let (n_x, n_v) = (12usize, 17usize);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let slab = random_slab(&mut rng, n_x * n_v);
        let bc = BoundarySpec::neumann();
        let mut direct = slab.clone();
        parabolic_half_step(&mut direct, n_x, 0.05, 0.01, bc, None).unwrap();
        // Process columns in reversed order, then undo the permutation.
        let mut permuted = vec![0.0; slab.len()];
        for m in 0..n_x {
            permuted[m * n_v..(m + 1) * n_v]
                .copy_from_slice(&slab[(n_x - 1 - m) * n_v..(n_x - m) * n_v]);
        }
        parabolic_half_step(&mut permuted, n_x, 0.05, 0.01, bc, None).unwrap();
        for m in 0..n_x {
            let orig = &direct[m * n_v..(m + 1) * n_v];
            let perm = &permuted[(n_x - 1 - m) * n_v..(n_x - m) * n_v];
            assert_eq!(orig, perm, "column {m} differs bitwise");
        }
    }

    #[test]
    fn missing_trace_is_rejected() {
        let grid = build_grid(&GridConfig::default().with_base_step(0.1)).unwrap();
        let n_v = grid.v_node_count(SubdomainId::Omega1);
        let problem = WindowProblem {
            grid: &grid,
            subdomain: SubdomainId::Omega1,
            bc: BoundarySpec::inner_high(VBoundary::Dirichlet),
            trace: None,
            source: None,
            substep_full_dt: false,
        };
        assert!(matches!(
            advance_window(&vec![0.0; grid.n_x * n_v], &problem),
            Err(SplitStepError::MissingTrace { side: Side::High })
        ));
    }

    #[test]
    fn full_dt_substep_rejects_cfl_breaking_config() {
        let cfg = GridConfig {
            dt: 0.04,
            hx: 0.02,
            hv: 0.02,
            ..GridConfig::default()
        };
        let grid = build_grid(&cfg).unwrap();
        let n_v = grid.n_v + 1;
        let make = |full_dt: bool| WindowProblem {
            grid: &grid,
            subdomain: SubdomainId::Mono,
            bc: BoundarySpec::neumann(),
            trace: None,
            source: None,
            substep_full_dt: full_dt,
        };
        assert!(advance_window(&vec![0.0; grid.n_x * n_v], &make(false)).is_ok());
        assert!(matches!(
            advance_window(&vec![0.0; grid.n_x * n_v], &make(true)),
            Err(SplitStepError::CflViolation { .. })
        ));
    }

    #[test]
    fn double_inner_bc_is_rejected() {
        let bc = BoundarySpec {
            low: VBoundary::Dirichlet,
            high: VBoundary::Robin(1.0),
        };
        assert!(matches!(
            ParabolicOp::new(5, 0.1, 0.01, bc),
            Err(SplitStepError::DoubleInner)
        ));
    }
}
