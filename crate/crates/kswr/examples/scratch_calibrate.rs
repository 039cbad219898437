use kswr::grid::{build_grid, GridConfig};
use kswr::swr::{swr_run, SwrConfig, TransmissionKind};
use std::time::Instant;

fn main() {
    for overlap in [3usize, 0] {
        let grid = build_grid(&GridConfig::default().with_overlap(overlap)).unwrap();
        for kind in [
            TransmissionKind::Dirichlet,
            TransmissionKind::RobinOneSided(4.23),
            TransmissionKind::RobinTwoSided { p: 11.0, q: 2.5 },
        ] {
            let cfg = SwrConfig { transmission: kind, ..SwrConfig::default() };
            let t0 = Instant::now();
            let report = swr_run(&grid, &cfg).unwrap();
            println!(
                "overlap={} {:<24} iters={:<4} converged={} final_err={:.3e} wall={:.1}s",
                overlap,
                format!("{:?}", kind),
                report.iterations,
                report.converged,
                report.final_error(),
                t0.elapsed().as_secs_f64()
            );
        }
    }
}
