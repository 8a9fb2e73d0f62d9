//! Exit-code contract and file outputs of the `noum` binary.

use std::fs;
use std::path::Path;
use std::process::Command;

fn run(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_noum"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn tempdir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("noum-clitest-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

#[test]
fn config_errors_exit_2() {
    let dir = tempdir("badcfg");
    let config = dir.join("bad.toml");
    write(
        &config,
        "experiment = \"rate_region\"\nunknown_key = 1\n[scenario]\nkind = \"specific_two_user\"\nnt = 4\ngamma = 1.0\ntheta = 0.7\n",
    );
    let out = run(&["run", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let missing = run(&["run", dir.join("nope.toml").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn strict_infeasible_exits_3() {
    let dir = tempdir("strict");
    let config = dir.join("infeasible.toml");
    // 8 bit/s/Hz for everyone at 0 dB SNR cannot be met.
    write(
        &config,
        r#"
experiment = "wsr_vs_snr"
strategies = ["mu_lp"]
snr_db = [0.0]

[scenario]
kind = "specific_two_user"
nt = 2
gamma = 1.0
theta = 0.6981317007977318

[qos]
per_snr = [8.0]

[algorithm]
max_iterations = 30
"#,
    );
    let strict = run(&[
        "run",
        config.to_str().unwrap(),
        "--out",
        dir.join("s").to_str().unwrap(),
        "--strict",
    ]);
    assert_eq!(strict.status.code(), Some(3), "{}", String::from_utf8_lossy(&strict.stderr));
    // Without --strict the instance is recorded, not fatal.
    let lenient = run(&[
        "run",
        config.to_str().unwrap(),
        "--out",
        dir.join("l").to_str().unwrap(),
    ]);
    assert_eq!(lenient.status.code(), Some(0));
    let csv = fs::read_to_string(dir.join("l").join("wsr_vs_snr.csv")).unwrap();
    assert!(csv.contains("infeasible"), "{csv}");
}

#[test]
fn outputs_include_sidecar_metadata() {
    let dir = tempdir("meta");
    let config = dir.join("trace.toml");
    write(
        &config,
        r#"
experiment = "convergence_trace"
strategies = ["mu_lp"]
snr_db = [10.0]

[scenario]
kind = "specific_two_user"
nt = 2
gamma = 1.0
theta = 0.6981317007977318

[algorithm]
max_iterations = 50
"#,
    );
    let out = run(&[
        "run",
        config.to_str().unwrap(),
        "--out",
        dir.join("o").to_str().unwrap(),
        "--jobs",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let meta = fs::read_to_string(dir.join("o").join("convergence_trace.meta.txt")).unwrap();
    assert!(meta.contains("config_hash"));
    assert!(meta.contains("toolkit_version"));
    let csv = fs::read_to_string(dir.join("o").join("convergence_trace.csv")).unwrap();
    assert!(csv.lines().count() > 2);
    // Trace values are nondecreasing per (strategy, order).
    let mut last: Option<f64> = None;
    for line in csv.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let iteration: usize = fields[5].parse().unwrap();
        let value: f64 = fields[6].parse().unwrap();
        if iteration == 1 {
            last = None;
        }
        if let Some(prev) = last {
            assert!(value >= prev - 1e-8, "trace dipped: {prev} -> {value}");
        }
        last = Some(value);
    }
}
