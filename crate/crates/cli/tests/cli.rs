//! End-to-end CLI checks against the built binary.

use std::path::PathBuf;
use std::process::{Command, Output};

fn dpko(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpko"))
        .args(args)
        .output()
        .expect("failed to launch dpko")
}

fn temp_file(name: &str) -> PathBuf {
    std::env::temp_dir().join(name)
}

fn write_config(name: &str) -> PathBuf {
    let path = temp_file(name);
    std::fs::write(
        &path,
        "[run]\nscenario = power-vs-mu\nreps = 4\nseed = 2\ntheory_mc = 20000\n\
         [model]\nn = 250\np = 8\ns0 = 2\nmu = 0.0,0.8\n\
         [privacy]\nepsilon = 20.0\ndelta = 0.01\nr = 120\n\
         [solver]\nlambda = 0.15\n\
         [filter]\nq = 0.2\nplus = true\n",
    )
    .unwrap();
    path
}

#[test]
fn help_lists_subcommands() {
    let out = dpko(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in [
        "simulate",
        "theory",
        "compare",
        "real-data",
        "check-conditions",
        "regime",
    ] {
        assert!(text.contains(sub), "help is missing {sub}");
    }
}

#[test]
fn simulate_writes_deterministic_csv_and_manifest() {
    let config = write_config("dpko_cli_sim.conf");
    let out_a = temp_file("dpko_cli_sim_a.csv");
    let out_b = temp_file("dpko_cli_sim_b.csv");
    for out_path in [&out_a, &out_b] {
        let out = dpko(&[
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out_path.to_str().unwrap(),
        ]);
        assert!(
            out.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let a = std::fs::read_to_string(&out_a).unwrap();
    let b = std::fs::read_to_string(&out_b).unwrap();
    assert_eq!(a, b, "same config and seed must produce identical bytes");
    assert!(a.starts_with("scenario,seed,epsilon,mu,q,method,metric,value\n"));
    assert!(a.contains("mean_power"));

    let manifest = std::fs::read_to_string(temp_file("dpko_cli_sim_b.csv.manifest.txt")).unwrap();
    assert!(manifest.contains("[run]"));
    assert!(manifest.contains("seed = 2"));
}

#[test]
fn overrides_change_the_run() {
    let config = write_config("dpko_cli_ovr.conf");
    let out_path = temp_file("dpko_cli_ovr.csv");
    let out = dpko(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--set",
        "run.reps=2",
        "--set",
        "filter.plus=true,false",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert!(text.contains("jlt-knockoff+"));
    assert!(text.lines().any(|l| l.contains(",jlt-knockoff,")));

    let bad = dpko(&[
        "simulate",
        "--set",
        "nonsense",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(!bad.status.success());
}

#[test]
fn theory_and_compare_run() {
    let config = write_config("dpko_cli_theory.conf");
    let out_path = temp_file("dpko_cli_theory.csv");
    let out = dpko(&[
        "theory",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert!(text.contains(",theory,power,"));
    assert!(text.contains(",theory-unit,power,"));

    let out_path = temp_file("dpko_cli_compare.csv");
    let out = dpko(&[
        "compare",
        "--config",
        config.to_str().unwrap(),
        "--set",
        "model.mu=0.8",
        "--set",
        "run.reps=3",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&out_path).unwrap();
    for method in ["jlt", "gaussian-g1", "gaussian-g2", "gaussian-g3"] {
        assert!(text.contains(method), "missing {method} rows");
    }
}

#[test]
fn check_conditions_emits_ratio_table() {
    let out = dpko(&[
        "check-conditions",
        "--n",
        "4096,16384",
        "--p",
        "4096,16384",
        "--s0",
        "2.0",
        "--r",
        "4096,16384",
        "--epsilon",
        "512,1448",
        "--delta",
        "1e-6",
    ]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8_lossy(&out.stdout);
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("n,p,s0,r,epsilon,delta,lambda,kappa_n"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn regime_classifies_examples() {
    let out = dpko(&["regime", "--alpha", "3.1,2.5", "--gamma", "0.1,0.4"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().any(|l| l.starts_with("3.1,0.1,true")));
    assert!(text.lines().any(|l| l.starts_with("2.5,0.4,false")));
}

#[test]
fn real_data_runs_and_warns() {
    let data_path = temp_file("dpko_cli_data.csv");
    let mut csv = String::from("a,b,c,y\n");
    let mut state = 1234u64;
    let mut next = move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    };
    for _ in 0..150 {
        let (a, b, c) = (next(), next(), next());
        let y = 2.0 * a + 0.3 * next();
        csv.push_str(&format!("{a},{b},{c},{y}\n"));
    }
    std::fs::write(&data_path, csv).unwrap();

    let out_path = temp_file("dpko_cli_real.csv");
    let out = dpko(&[
        "real-data",
        "--data",
        data_path.to_str().unwrap(),
        "--set",
        "run.reps=3",
        "--set",
        "privacy.epsilon=50",
        "--set",
        "privacy.r=100",
        "--set",
        "solver.lambda=0.1",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("warning"),
        "expected a bound-inference warning"
    );
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert!(text.contains("freq[0]"));
    let manifest = std::fs::read_to_string(temp_file("dpko_cli_real.csv.manifest.txt")).unwrap();
    assert!(manifest.contains("inferred_bound"));
}
