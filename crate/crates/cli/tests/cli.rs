use std::path::Path;
use std::process::{Command, Output};

use polymorph::scalar::parse_rational;
use polymorph::Rational;
use serde_json::Value;

fn polymorph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polymorph")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).expect("valid JSON")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn axioms_on_bundled_corpus_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = polymorph(&["run", "axioms", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = json(&std::fs::read(dir.path().join("report.json")).unwrap());
    assert_eq!(report["status"], "ok");
    assert_eq!(report["config"]["seed"], 0);
    assert!(report.get("wall_clock_seconds").is_none());
    for check in report["checks"].as_array().unwrap() {
        assert_eq!(check["residual"], "0", "{check}");
    }
}

#[test]
fn infeasible_coupling_exits_two() {
    let out = polymorph(&["run", "coupling", "--p", "0.6,0.2,0.1,0.1"]);
    assert_eq!(code(&out), 2);
    let report = json(&out.stdout);
    assert_eq!(report["status"], "infeasible");
    assert_eq!(report["results"]["infeasible"]["index"], 0);

    let out = polymorph(&["coupling", "solve", "--p", "0.6,0.2,0.1,0.1"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("infeasible"));
}

#[test]
fn coupling_solve_prints_exact_matrix() {
    let p = ["2/5", "3/10", "1/5", "1/10"];
    let out = polymorph(&["coupling", "solve", "--exact", "--p", &p.join(",")]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let wire = json(&out.stdout);
    let q: Vec<Vec<Rational>> = wire["q"]
        .as_array()
        .unwrap()
        .iter()
        .map(|row| row.as_array().unwrap().iter().map(|v| parse_rational(v.as_str().unwrap()).unwrap()).collect())
        .collect();
    let zero = Rational::from_integer(0.into());
    for (i, pi) in p.iter().enumerate() {
        let pi = parse_rational(pi).unwrap();
        assert_eq!(q[i][i], zero);
        assert_eq!(q[i].iter().cloned().sum::<Rational>(), pi);
        assert_eq!(q.iter().map(|r| r[i].clone()).sum::<Rational>(), pi);
        assert!(q[i].iter().all(|v| *v >= zero));
    }
}

#[test]
fn validation_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "scan.json", r#"{"command": "scan-prime", "n": 20}"#);
    let out = polymorph(&["validate", "--config", &cfg]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("n: size_limit exceeded"), "{}", stderr(&out));

    let cfg = write(dir.path(), "p.json", r#"{"command": "coupling", "p": [0.5, 0.2, 0.2]}"#);
    let out = polymorph(&["run", "--config", &cfg]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("p: not a probability vector"), "{}", stderr(&out));

    let cfg = write(dir.path(), "ok.json", r#"{"command": "axioms"}"#);
    let out = polymorph(&["validate", "--config", &cfg]);
    assert_eq!(code(&out), 0);
    let normalized = json(&out.stdout);
    assert_eq!(normalized["mode"], "exact");
    assert_eq!(normalized["n"], 4);
}

#[test]
fn intertwining_residuals_are_literally_zero() {
    let out = polymorph(&["run", "intertwine", "--n", "12"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = json(&out.stdout);
    for check in report["checks"].as_array().unwrap() {
        assert_eq!(check["residual"], "0");
        assert_eq!(check["tolerance"], "0");
    }
    for row in report["results"]["residuals"].as_array().unwrap() {
        assert_eq!((row["lambda"].as_str(), row["gamma"].as_str()), (Some("0"), Some("0")));
    }
}

#[test]
fn reports_and_series_are_byte_stable() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let out = polymorph(&["run", "limits", "--seed", "7", "--n", "10", "--out", d.path().to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    for file in ["report.json", "series/limits.csv"] {
        let a = std::fs::read(dirs[0].path().join(file)).unwrap();
        let b = std::fs::read(dirs[1].path().join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
}

#[test]
fn io_failures_exit_three() {
    let out = polymorph(&["run", "--config", "/nonexistent/config.json"]);
    assert_eq!(code(&out), 3);

    let dir = tempfile::tempdir().unwrap();
    let blocker = write(dir.path(), "file", "");
    let out = polymorph(&["run", "chain", "--n", "50", "--out", &format!("{blocker}/sub")]);
    assert_eq!(code(&out), 3);
}

#[test]
fn kernel_paths_resolve_against_the_config() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "k.json", r#"{"weights": ["1/3", "2/3"], "nu": [["0", "1/3"], ["1/3", "1/3"]]}"#);
    let cfg = write(dir.path(), "cfg.json", r#"{"command": "mixing", "kernels": ["k.json"], "n": 20}"#);
    let out = polymorph(&["run", "--config", &cfg]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = json(&out.stdout);
    let names: Vec<&str> =
        report["results"]["kernels"].as_array().unwrap().iter().map(|k| k["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"k.json"));

    let bad = write(dir.path(), "bad.json", r#"{"weights": ["1/2", "1/2"], "nu": [["1/2", "0"], ["1/4", "1/4"]]}"#);
    let cfg = write(dir.path(), "cfg2.json", &format!(r#"{{"command": "axioms", "kernels": ["{bad}"]}}"#));
    assert_eq!(code(&polymorph(&["run", "--config", &cfg])), 2);
}

#[test]
fn symbolic_subcommand_takes_a_symbolic_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "binary.json",
        r#"{"alphabet": 2, "weights": ["1/2", "1/2"], "r": 1, "min_block": 2, "sweeps": {"W": 1, "N": 8}}"#,
    );
    let out = polymorph(&["symbolic", "corollary1", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("series/corollary1.csv")).unwrap();
    assert!(csv.starts_with("pair,k,value\n"));

    let out = polymorph(&["symbolic", "limits", "--config", &cfg, "--window", "7"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("sweeps.W"), "{}", stderr(&out));
}

#[test]
fn float_mode_matches_exact_verdicts() {
    for cmd in ["axioms", "scan-prime", "mixing"] {
        let exact = json(&polymorph(&["run", cmd]).stdout);
        let float = json(&polymorph(&["run", cmd, "--mode", "float"]).stdout);
        assert_eq!(exact["status"], float["status"], "{cmd}");
        if cmd == "scan-prime" {
            assert_eq!(exact["results"]["kernels"], float["results"]["kernels"]);
        }
    }
}

#[test]
fn violated_status_maps_to_exit_one() {
    use polymorph_cli::Status;
    assert_eq!(Status::Ok.exit_code(), 0);
    assert_eq!(Status::Violated.exit_code(), 1);
    assert_eq!(Status::Infeasible.exit_code(), 2);
}
