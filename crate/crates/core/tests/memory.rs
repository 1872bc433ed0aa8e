//! Peak-memory sanity at the largest desk-scale configuration. Runs alone
//! in its own process so the high-water mark reflects this workload.

use dp_knockoffs::harness::{run_single, FamilyKind, MechanismKind, ProjectionPath, RunParams};
use dp_knockoffs::model::DesignDistribution;

#[cfg(target_os = "linux")]
fn peak_rss_bytes() -> u64 {
    let status = std::fs::read_to_string("/proc/self/status").unwrap();
    for line in status.lines() {
        if let Some(rest) = line.strip_prefix("VmHWM:") {
            let kb: u64 = rest.trim().trim_end_matches(" kB").trim().parse().unwrap();
            return kb * 1024;
        }
    }
    panic!("VmHWM not found");
}

#[cfg(target_os = "linux")]
#[test]
fn peak_memory_within_estimate() {
    let params = RunParams {
        n: 100_000,
        p: 100,
        s0: 10,
        sigma: 1.0,
        mu: 0.0,
        normalize_signal: true,
        design: DesignDistribution::rademacher(),
        epsilon: 2.0,
        delta: 0.01,
        r: 2000,
        lambda: 0.1,
        solver_tol: 1e-10,
        max_iters: 20_000,
        family: FamilyKind::Lcd,
        mechanism: MechanismKind::Jlt,
        projection: ProjectionPath::Auto,
        seed: 1,
    };
    // same accounting the runner uses when it refuses a configuration
    let d = 2 * params.p + 1;
    let estimate = 8u64
        * (2 * params.n * params.p
            + 4 * params.n
            + 4 * params.r * 2 * params.p
            + 2 * d * d
            + 1024 * d) as u64;
    let before = peak_rss_bytes();
    let run = run_single(&params).unwrap();
    assert_eq!(run.w.len(), params.p);
    let after = peak_rss_bytes();
    let used = after.saturating_sub(before);
    assert!(
        used <= estimate * 3 / 2,
        "peak grew by {} MiB, estimate was {} MiB (1.5x ceiling)",
        used >> 20,
        estimate >> 20
    );
}
