use kswr::grid::{build_grid, GridConfig};
use kswr::swr::{swr_run, SwrConfig, TransmissionKind};
use std::time::Instant;

fn main() {
    for j in [1u32, 2] {
        let grid = build_grid(&GridConfig::default().with_refine(j)).unwrap();
        let cfg = SwrConfig {
            transmission: TransmissionKind::Dirichlet,
            max_iters: 3,
            ..SwrConfig::default()
        };
        let t0 = Instant::now();
        let report = swr_run(&grid, &cfg).unwrap();
        println!(
            "j={} iters={} wall={:.2}s per-iter={:.0}ms",
            j,
            report.iterations,
            t0.elapsed().as_secs_f64(),
            t0.elapsed().as_secs_f64() * 1e3 / report.iterations as f64
        );
    }
}
