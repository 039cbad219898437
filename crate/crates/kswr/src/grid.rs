//! Space-time grid for the model problem on [0,T] x [0,1] x [-1,1]:
//! periodic in x, node-aligned two-subdomain decomposition of the
//! velocity axis with interfaces at v = alpha = 0 and v = beta = L.
//!
//! A refinement level j scales all three base steps by 2^-j, so grids
//! of successive levels nest exactly.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("{name} must be positive, got {value}")]
    NonPositiveStep { name: &'static str, value: f64 },
    #[error("{name} = {value} does not divide {total} into an integer number of cells")]
    NonIntegralCount {
        name: &'static str,
        value: f64,
        total: f64,
    },
    #[error("velocity cell count {count} is odd: the interface v = 0 must fall on a grid node")]
    InterfaceOffGrid { count: usize },
    #[error("overlap of {elems} elements puts the band end beta = {beta} outside (-1, 1)")]
    OverlapTouchesBoundary { elems: usize, beta: f64 },
}

/// Grid parameters. `dt`, `hx`, `hv` are the level-0 base steps; the
/// effective steps carry the extra factor 2^-refine_level.
#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub final_time: f64,
    pub dt: f64,
    pub hx: f64,
    pub hv: f64,
    pub refine_level: u32,
    pub overlap_elems: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            final_time: 2.0,
            dt: 0.01,
            hx: 0.01,
            hv: 0.01,
            refine_level: 0,
            overlap_elems: 3,
        }
    }
}

impl GridConfig {
    pub fn with_refine(mut self, level: u32) -> Self {
        self.refine_level = level;
        self
    }

    pub fn with_overlap(mut self, elems: usize) -> Self {
        self.overlap_elems = elems;
        self
    }

    /// Uniform base step for dt, hx and hv at once.
    pub fn with_base_step(mut self, step: f64) -> Self {
        self.dt = step;
        self.hx = step;
        self.hv = step;
        self
    }

    pub fn effective_dt(&self) -> f64 {
        self.dt * 0.5f64.powi(self.refine_level as i32)
    }

    pub fn effective_hx(&self) -> f64 {
        self.hx * 0.5f64.powi(self.refine_level as i32)
    }

    pub fn effective_hv(&self) -> f64 {
        self.hv * 0.5f64.powi(self.refine_level as i32)
    }
}

/// Identifies which part of the velocity axis a field lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubdomainId {
    /// The full velocity range, Neumann at both ends.
    Mono,
    /// Low-velocity subdomain [-1, beta]; interface at the high end.
    Omega1,
    /// High-velocity subdomain [alpha, 1]; interface at the low end.
    Omega2,
}

impl std::fmt::Display for SubdomainId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SubdomainId::Mono => write!(f, "mono"),
            SubdomainId::Omega1 => write!(f, "omega1"),
            SubdomainId::Omega2 => write!(f, "omega2"),
        }
    }
}

/// The constructed grid. Node sets: t_n = n dt (n = 0..=n_t),
/// x_m = m hx (m = 0..n_x, x = 1 identified with x = 0),
/// v_i = -1 + i hv (i = 0..=n_v, endpoints at both +-1).
///
/// Immutable after construction and safe to share across concurrent
/// subdomain solves.
#[derive(Debug, Clone)]
pub struct Grid {
    pub final_time: f64,
    pub dt: f64,
    pub hx: f64,
    pub hv: f64,
    pub n_t: usize,
    pub n_x: usize,
    /// Number of velocity cells; node count is n_v + 1.
    pub n_v: usize,
    pub overlap_elems: usize,
    pub refine_level: u32,
    /// Node index of v = alpha (left end of Omega2).
    pub idx_alpha: usize,
    /// Node index of v = beta (right end of Omega1); idx_beta = idx_alpha + overlap_elems.
    pub idx_beta: usize,
    t_nodes: Vec<f64>,
    x_nodes: Vec<f64>,
    v_nodes: Vec<f64>,
}

fn integer_count(total: f64, step: f64, name: &'static str) -> Result<usize, GridError> {
    if !(step > 0.0) {
        return Err(GridError::NonPositiveStep { name, value: step });
    }
    let ratio = total / step;
    let count = ratio.round();
    if count < 1.0 || (ratio - count).abs() > 1e-8 * ratio.max(1.0) {
        return Err(GridError::NonIntegralCount {
            name,
            value: step,
            total,
        });
    }
    Ok(count as usize)
}

/// Builds the grid, checking step integrality and interface placement.
pub fn build_grid(cfg: &GridConfig) -> Result<Grid, GridError> {
    if !(cfg.final_time > 0.0) {
        return Err(GridError::NonPositiveStep {
            name: "final_time",
            value: cfg.final_time,
        });
    }
    let dt = cfg.effective_dt();
    let hx = cfg.effective_hx();
    let hv = cfg.effective_hv();
    let n_t = integer_count(cfg.final_time, dt, "dt")?;
    let n_x = integer_count(1.0, hx, "hx")?;
    let n_v = integer_count(2.0, hv, "hv")?;
    if n_v % 2 != 0 {
        return Err(GridError::InterfaceOffGrid { count: n_v });
    }
    let idx_alpha = n_v / 2;
    let idx_beta = idx_alpha + cfg.overlap_elems;
    if idx_beta >= n_v {
        return Err(GridError::OverlapTouchesBoundary {
            elems: cfg.overlap_elems,
            beta: -1.0 + idx_beta as f64 * hv,
        });
    }
    let t_nodes = (0..=n_t).map(|n| n as f64 * dt).collect();
    let x_nodes = (0..n_x).map(|m| m as f64 * hx).collect();
    let v_nodes = (0..=n_v).map(|i| -1.0 + i as f64 * hv).collect();
    Ok(Grid {
        final_time: cfg.final_time,
        dt,
        hx,
        hv,
        n_t,
        n_x,
        n_v,
        overlap_elems: cfg.overlap_elems,
        refine_level: cfg.refine_level,
        idx_alpha,
        idx_beta,
        t_nodes,
        x_nodes,
        v_nodes,
    })
}

impl Grid {
    pub fn t(&self, n: usize) -> f64 {
        self.t_nodes[n]
    }

    pub fn x(&self, m: usize) -> f64 {
        self.x_nodes[m]
    }

    pub fn v(&self, i: usize) -> f64 {
        self.v_nodes[i]
    }

    pub fn t_nodes(&self) -> &[f64] {
        &self.t_nodes
    }

    pub fn x_nodes(&self) -> &[f64] {
        &self.x_nodes
    }

    pub fn v_nodes(&self) -> &[f64] {
        &self.v_nodes
    }

    pub fn alpha(&self) -> f64 {
        self.v_nodes[self.idx_alpha]
    }

    pub fn beta(&self) -> f64 {
        self.v_nodes[self.idx_beta]
    }

    /// Width of the overlap band, beta - alpha.
    pub fn overlap_width(&self) -> f64 {
        self.overlap_elems as f64 * self.hv
    }

    /// Global node index range of a subdomain (inclusive).
    pub fn v_node_range(&self, subdomain: SubdomainId) -> (usize, usize) {
        match subdomain {
            SubdomainId::Mono => (0, self.n_v),
            SubdomainId::Omega1 => (0, self.idx_beta),
            SubdomainId::Omega2 => (self.idx_alpha, self.n_v),
        }
    }

    /// Node count of a subdomain.
    pub fn v_node_count(&self, subdomain: SubdomainId) -> usize {
        let (lo, hi) = self.v_node_range(subdomain);
        hi - lo + 1
    }

    /// Unknowns in one interface trace: (n_t + 1) time rows of n_x values.
    pub fn trace_len(&self) -> usize {
        (self.n_t + 1) * self.n_x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_mesh_counts() {
        let g = build_grid(&GridConfig::default()).unwrap();
        assert_eq!(g.n_t, 200);
        assert_eq!(g.n_x, 100);
        assert_eq!(g.n_v, 200);
        assert_eq!(g.idx_alpha, 100);
        assert_eq!(g.idx_beta, 103);
        assert!((g.beta() - g.alpha() - 0.03).abs() < 1e-14);
        assert_eq!(g.alpha(), 0.0);
        assert_eq!(g.v(0), -1.0);
        assert_eq!(g.v(g.n_v), 1.0);
        assert_eq!(g.trace_len(), 201 * 100);
    }

    #[test]
    fn zero_overlap_collapses_interfaces() {
        let g = build_grid(&GridConfig::default().with_overlap(0)).unwrap();
        assert_eq!(g.idx_alpha, g.idx_beta);
        assert_eq!(g.alpha(), g.beta());
        assert_eq!(g.overlap_width(), 0.0);
    }

    #[test]
    fn refinement_scales_all_steps() {
        let g = build_grid(&GridConfig::default().with_refine(2)).unwrap();
        assert_eq!(g.dt, 0.0025);
        assert_eq!(g.hx, 0.0025);
        assert_eq!(g.hv, 0.0025);
        assert_eq!(g.n_t, 800);
    }

    #[test]
    fn refined_grids_nest() {
        for j in 0..4u32 {
            let coarse = build_grid(&GridConfig::default().with_refine(j)).unwrap();
            let fine = build_grid(&GridConfig::default().with_refine(j + 1)).unwrap();
            for (i, &v) in coarse.v_nodes().iter().enumerate() {
                assert_eq!(v, fine.v(2 * i), "level {j} v-node {i}");
            }
            for (n, &t) in coarse.t_nodes().iter().enumerate() {
                assert_eq!(t, fine.t(2 * n));
            }
            for (m, &x) in coarse.x_nodes().iter().enumerate() {
                assert_eq!(x, fine.x(2 * m));
            }
        }
    }

    #[test]
    fn interface_index_identity() {
        for elems in [0usize, 1, 3, 10] {
            let g = build_grid(&GridConfig::default().with_overlap(elems)).unwrap();
            assert_eq!(g.idx_alpha + elems, g.idx_beta);
        }
    }

    #[test]
    fn subdomain_ranges_cover_axis() {
        let g = build_grid(&GridConfig::default()).unwrap();
        let (lo1, hi1) = g.v_node_range(SubdomainId::Omega1);
        let (lo2, hi2) = g.v_node_range(SubdomainId::Omega2);
        assert_eq!(lo1, 0);
        assert_eq!(hi2, g.n_v);
        assert!(lo2 <= hi1, "subdomains must meet or overlap");
        assert_eq!(g.v_node_count(SubdomainId::Omega1), 104);
        assert_eq!(g.v_node_count(SubdomainId::Omega2), 101);
    }

    #[test]
    fn rejects_bad_configs() {
        let cfg = GridConfig {
            hv: 0.3,
            ..GridConfig::default()
        };
        assert!(matches!(
            build_grid(&cfg),
            Err(GridError::NonIntegralCount { name: "hv", .. })
        ));

        // 2/hv integral but odd: v = 0 misses the node lattice.
        let cfg = GridConfig {
            hv: 2.0 / 5.0,
            hx: 0.2,
            dt: 0.2,
            ..GridConfig::default()
        };
        assert!(matches!(
            build_grid(&cfg),
            Err(GridError::InterfaceOffGrid { count: 5 })
        ));

        let cfg = GridConfig::default().with_overlap(100);
        assert!(matches!(
            build_grid(&cfg),
            Err(GridError::OverlapTouchesBoundary { .. })
        ));

        let cfg = GridConfig {
            dt: -0.01,
            ..GridConfig::default()
        };
        assert!(matches!(build_grid(&cfg), Err(GridError::NonPositiveStep { .. })));

        let cfg = GridConfig {
            final_time: 1.999,
            ..GridConfig::default()
        };
        assert!(matches!(
            build_grid(&cfg),
            Err(GridError::NonIntegralCount { name: "dt", .. })
        ));
    }
}
