//! Empirical optimization of the Robin parameters: scans p (one-sided)
//! or the (p, q) product grid (two-sided), recording the iteration count
//! to convergence and the interface error after a fixed number of
//! iterations for every sample. All samples share one random initial
//! trace, so a sweep is a pure function of (spec, seed).

use crate::grid::{build_grid, GridConfig, GridError};
use crate::swr::{swr_run, SwrConfig, SwrError, TransmissionKind};
use rayon::prelude::*;
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Swr(#[from] SwrError),
    #[error("parameter range must have lo <= hi and step > 0, got [{lo}, {hi}] step {step}")]
    BadRange { lo: f64, hi: f64, step: f64 },
    #[error("error-snapshot iteration must be at least 1")]
    ZeroSnapshotIter,
}

/// Closed sample range lo, lo + step, ..., hi. A degenerate range
/// (lo = hi) yields the single sample lo.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamRange {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl ParamRange {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self, SweepError> {
        if !(lo <= hi) || !(step > 0.0) {
            return Err(SweepError::BadRange { lo, hi, step });
        }
        Ok(Self { lo, hi, step })
    }

    pub fn samples(&self) -> Vec<f64> {
        let count = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| self.lo + i as f64 * self.step).collect()
    }
}

/// Sweep description: the p-range, the optional q-range (absent for the
/// one-sided scan), the snapshot iteration K for the error-after-K
/// record, and the shared grid and solver configuration (whose
/// transmission field is replaced per sample).
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub p_range: ParamRange,
    pub q_range: Option<ParamRange>,
    pub error_iter: usize,
    pub grid: GridConfig,
    pub swr: SwrConfig,
}

impl SweepSpec {
    pub fn one_sided(p_range: ParamRange, grid: GridConfig, swr: SwrConfig) -> Self {
        Self {
            p_range,
            q_range: None,
            error_iter: 15,
            grid,
            swr,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub p: f64,
    pub q: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Interface error after min(K, iterations) iterations.
    pub error_at_k: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub records: Vec<SweepRecord>,
    /// Index of the best sample: fewest iterations, ties broken first by
    /// convergence, then by smaller error_at_k, then by sample order.
    pub best: Option<usize>,
}

impl SweepResult {
    pub fn best_record(&self) -> Option<&SweepRecord> {
        self.best.map(|i| &self.records[i])
    }

    /// CSV: `p[,q],iterations,converged,error_at_K` after '#' comment
    /// lines echoing the grid and the winning sample.
    pub fn write_csv<W: Write>(&self, w: &mut W, spec: &SweepSpec) -> io::Result<()> {
        let two_sided = spec.q_range.is_some();
        writeln!(
            w,
            "# robin parameter sweep ({})",
            if two_sided { "two-sided" } else { "one-sided" }
        )?;
        writeln!(
            w,
            "# grid: T={} base_step=({},{},{}) refine={} overlap_elems={} error_iter={}",
            spec.grid.final_time,
            spec.grid.dt,
            spec.grid.hx,
            spec.grid.hv,
            spec.grid.refine_level,
            spec.grid.overlap_elems,
            spec.error_iter,
        )?;
        if let Some(best) = self.best_record() {
            match best.q {
                Some(q) => writeln!(
                    w,
                    "# best: p={} q={} iterations={} error_at_K={}",
                    best.p, q, best.iterations, best.error_at_k
                )?,
                None => writeln!(
                    w,
                    "# best: p={} iterations={} error_at_K={}",
                    best.p, best.iterations, best.error_at_k
                )?,
            }
        }
        if two_sided {
            writeln!(w, "p,q,iterations,converged,error_at_K")?;
            for r in &self.records {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    r.p,
                    r.q.unwrap(),
                    r.iterations,
                    r.converged,
                    r.error_at_k
                )?;
            }
        } else {
            writeln!(w, "p,iterations,converged,error_at_K")?;
            for r in &self.records {
                writeln!(w, "{},{},{},{}", r.p, r.iterations, r.converged, r.error_at_k)?;
            }
        }
        Ok(())
    }
}

fn run_sample(
    spec: &SweepSpec,
    grid: &crate::grid::Grid,
    p: f64,
    q: Option<f64>,
) -> Result<SweepRecord, SweepError> {
    let transmission = match q {
        None => TransmissionKind::RobinOneSided(p),
        Some(q) => TransmissionKind::RobinTwoSided { p, q },
    };
    let cfg = SwrConfig {
        transmission,
        ..spec.swr
    };
    let report = swr_run(grid, &cfg)?;
    let k = spec.error_iter.min(report.iterations);
    Ok(SweepRecord {
        p,
        q,
        iterations: report.iterations,
        converged: report.converged,
        error_at_k: report.error_history[k - 1],
    })
}

fn pick_best(records: &[SweepRecord]) -> Option<usize> {
    let key = |r: &SweepRecord| (r.iterations, !r.converged as u8);
    records
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            key(a)
                .cmp(&key(b))
                .then(a.error_at_k.partial_cmp(&b.error_at_k).unwrap())
        })
        .map(|(i, _)| i)
}

fn sweep(spec: &SweepSpec, samples: Vec<(f64, Option<f64>)>) -> Result<SweepResult, SweepError> {
    if spec.error_iter == 0 {
        return Err(SweepError::ZeroSnapshotIter);
    }
    let grid = build_grid(&spec.grid)?;
    // Samples are independent runs; results are assembled in sample
    // order regardless of completion order.
    let records: Result<Vec<SweepRecord>, SweepError> = samples
        .par_iter()
        .map(|&(p, q)| run_sample(spec, &grid, p, q))
        .collect();
    let records = records?;
    let best = pick_best(&records);
    Ok(SweepResult { records, best })
}

/// Scans RobinOneSided(p) over the p-range.
pub fn sweep_one_sided(spec: &SweepSpec) -> Result<SweepResult, SweepError> {
    let samples = spec.p_range.samples().into_iter().map(|p| (p, None)).collect();
    sweep(spec, samples)
}

/// Scans RobinTwoSided(p, q) over the (p, q) product grid; q varies
/// fastest. Falls back to the one-sided scan when no q-range is given.
pub fn sweep_two_sided(spec: &SweepSpec) -> Result<SweepResult, SweepError> {
    let q_range = match spec.q_range {
        Some(r) => r,
        None => return sweep_one_sided(spec),
    };
    let mut samples = Vec::new();
    for p in spec.p_range.samples() {
        for q in q_range.samples() {
            samples.push((p, Some(q)));
        }
    }
    sweep(spec, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::swr::{Schedule, TraceInit};

    fn desk_spec() -> SweepSpec {
        SweepSpec {
            p_range: ParamRange::new(1.0, 10.0, 1.0).unwrap(),
            q_range: None,
            error_iter: 15,
            grid: GridConfig::default().with_base_step(0.05),
            swr: SwrConfig::default(),
        }
    }

    #[test]
    fn range_sampling() {
        let r = ParamRange::new(4.0, 5.0, 0.25).unwrap();
        assert_eq!(r.samples(), vec![4.0, 4.25, 4.5, 4.75, 5.0]);
        let single = ParamRange::new(3.0, 3.0, 0.1).unwrap();
        assert_eq!(single.samples(), vec![3.0]);
        assert!(ParamRange::new(5.0, 4.0, 0.1).is_err());
        assert!(ParamRange::new(4.0, 5.0, 0.0).is_err());
    }

    #[test]
    fn degenerate_range_yields_single_record() {
        let mut spec = desk_spec();
        spec.p_range = ParamRange::new(4.0, 4.0, 0.5).unwrap();
        let result = sweep_one_sided(&spec).unwrap();
        assert_eq!(result.records.len(), 1);
        assert_eq!(result.best, Some(0));
        assert_eq!(result.records[0].p, 4.0);
    }

    #[test]
    fn one_sided_iteration_curve_has_interior_minimum() {
        let result = sweep_one_sided(&desk_spec()).unwrap();
        assert_eq!(result.records.len(), 10);
        let best = result.best.unwrap();
        assert!(best > 0 && best + 1 < result.records.len(), "argmin at {best}");
        let iters: Vec<usize> = result.records.iter().map(|r| r.iterations).collect();
        assert!(iters[best] < iters[0]);
        assert!(iters[best] < *iters.last().unwrap());
    }

    #[test]
    fn error_at_best_beats_endpoints() {
        let result = sweep_one_sided(&desk_spec()).unwrap();
        let best = result.best_record().unwrap();
        assert!(best.error_at_k <= result.records.first().unwrap().error_at_k);
        assert!(best.error_at_k <= result.records.last().unwrap().error_at_k);
    }

    #[test]
    fn sweeps_are_reproducible() {
        let spec = desk_spec();
        let a = sweep_one_sided(&spec).unwrap();
        let b = sweep_one_sided(&spec).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.best, b.best);
    }

    #[test]
    fn best_two_sided_is_no_worse_than_one_sided() {
        // The one-sided samples sit on the diagonal of the two-sided
        // product grid, so the two-sided optimum can only improve.
        let mut spec = desk_spec();
        spec.p_range = ParamRange::new(2.0, 8.0, 2.0).unwrap();
        let one = sweep_one_sided(&spec).unwrap();
        spec.q_range = Some(ParamRange::new(2.0, 8.0, 2.0).unwrap());
        let two = sweep_two_sided(&spec).unwrap();
        assert_eq!(two.records.len(), 16);
        assert!(two.best_record().unwrap().iterations <= one.best_record().unwrap().iterations);
    }

    #[test]
    fn single_point_two_sided_range() {
        let mut spec = desk_spec();
        spec.p_range = ParamRange::new(5.0, 5.0, 1.0).unwrap();
        spec.q_range = Some(ParamRange::new(2.5, 2.5, 1.0).unwrap());
        let result = sweep_two_sided(&spec).unwrap();
        assert_eq!(result.records.len(), 1);
        assert_eq!(result.records[0].q, Some(2.5));
    }

    #[test]
    fn swapping_p_and_q_preserves_iteration_counts() {
        // With the L = 0 interface at v = 0 the configuration is symmetric
        // under (x, v) -> (-x, -v), which swaps the subdomains and the
        // roles of p and q. The parallel schedule with reflected initial
        // traces realizes that symmetry, so both orderings must converge
        // in the same number of iterations.
        let grid_cfg = GridConfig::default().with_base_step(0.05).with_overlap(0);
        let grid = build_grid(&grid_cfg).unwrap();
        let seed = 42;
        let lambda = crate::swr::init_trace(&grid, seed);
        let reflect = |id| {
            let mut out = crate::swr::InterfaceTrace::zeros(id, grid.n_t, grid.n_x);
            for n in 0..=grid.n_t {
                for m in 0..grid.n_x {
                    out.set(n, m, lambda.at(n, (grid.n_x - m) % grid.n_x));
                }
            }
            out
        };
        let run = |p: f64, q: f64| {
            let cfg = SwrConfig {
                transmission: TransmissionKind::RobinTwoSided { p, q },
                schedule: Schedule::Parallel,
                trace_init: TraceInit::Random { seed },
                ..SwrConfig::default()
            };
            crate::swr::swr_run_with_traces(
                &grid,
                &cfg,
                lambda.clone(),
                Some(reflect(crate::swr::InterfaceId::Alpha)),
            )
            .unwrap()
        };
        let (p, q) = (7.0, 3.0);
        let a = run(p, q);
        let b = run(q, p);
        assert_eq!(
            a.iterations, b.iterations,
            "{:?} vs {:?}",
            a.error_history, b.error_history
        );
    }
}
