use kswr::grid::{build_grid, GridConfig};
use kswr::swr::{swr_run, SwrConfig, TransmissionKind};
use std::time::Instant;

fn main() {
    for j in [1u32, 2] {
        let grid = build_grid(&GridConfig::default().with_refine(j)).unwrap();
        for kind in [
            TransmissionKind::Dirichlet,
            TransmissionKind::RobinOneSided(4.23),
            TransmissionKind::RobinTwoSided { p: 11.0, q: 2.5 },
        ] {
            let cfg = SwrConfig { transmission: kind, ..SwrConfig::default() };
            let t0 = Instant::now();
            let report = swr_run(&grid, &cfg).unwrap();
            println!(
                "j={} {:<26} iters={:<4} converged={} wall={:.1}s",
                j, format!("{:?}", kind), report.iterations, report.converged,
                t0.elapsed().as_secs_f64()
            );
        }
    }
}
