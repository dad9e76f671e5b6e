//! End-to-end checks of the `metasim` binary: flags, exit codes, files.

use std::path::Path;
use std::process::{Command, Output};

fn metasim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metasim"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).to_string()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).to_string()
}

const SMALL_GRID: &str = "K = 5\nn = 40\ntheta = 0.5\ntau2 = 0, 0.4\npC = 0.4\n\
                          sigma2 = 0.4\nmechanisms = FIM2, RIM1\nsize_kinds = uniform\nM = 50\n";

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    for flag in ["--help", "--version"] {
        let out = metasim(&[flag], dir.path());
        assert_eq!(out.status.code(), Some(0), "{flag}: {}", stderr(&out));
    }
    let out = metasim(&["run", "--help"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("--tau2-plugin"));
}

#[test]
fn unknown_flag_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = metasim(&["run", "--frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("grid.conf"), SMALL_GRID).unwrap();
    let out = metasim(
        &["run", "--config", "grid.conf", "--out", "results.csv", "--seed", "7"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("mechanism,size_kind,K,n,theta,tau2,pC,sigma2,M,"));
    // FIM2 has no sigma2 axis: 2 tau2 x (1 + 1) mechanisms = 4 rows
    assert_eq!(lines.len(), 1 + 4);
    assert!(lines.iter().skip(1).any(|l| l.starts_with("FIM2,uniform,5,40,")));

    let manifest = std::fs::read_to_string(dir.path().join("results.manifest")).unwrap();
    assert!(manifest.contains("# metasim run manifest"));
    assert!(manifest.contains("seed = 7"));
    assert!(manifest.contains("M = 50"));
    assert!(manifest.contains("tau2_plugin = mp"));
}

#[test]
fn run_is_deterministic_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("grid.conf"), SMALL_GRID).unwrap();
    let mut outputs = Vec::new();
    for (i, workers) in ["1", "2", "4"].iter().enumerate() {
        let name = format!("out{i}.csv");
        let out = metasim(
            &["run", "--config", "grid.conf", "--out", &name, "--workers", workers],
            dir.path(),
        );
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        outputs.push(std::fs::read(dir.path().join(&name)).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn missing_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = metasim(&["run", "--config", "absent.conf"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("absent.conf"));
}

#[test]
fn bad_config_exits_one_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.conf"), "K = 5\ntau2 = -1\n").unwrap();
    let out = metasim(&["run", "--config", "bad.conf"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}

#[test]
fn unwritable_output_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("grid.conf"), SMALL_GRID).unwrap();
    let out = metasim(
        &["run", "--config", "grid.conf", "--out", "no_such_dir/results.csv"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cell_prints_method_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = metasim(
        &[
            "cell", "--mechanism", "FIM2", "--k", "5", "--n", "40", "--theta", "0.5",
            "--tau2", "0.4", "--reps", "200", "--seed", "3",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("mechanism FIM2"));
    for method in ["dl", "mp", "reml", "ssw"] {
        assert!(text.lines().any(|l| l.starts_with(method)), "{text}");
    }
}

#[test]
fn cell_with_out_writes_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = metasim(
        &[
            "cell", "--mechanism", "RIM1", "--size-kind", "truncated-normal", "--k", "5",
            "--n", "40", "--sigma2", "0.1", "--reps", "100", "--out", "cell.csv",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("cell.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().starts_with("RIM1,truncated-normal,5,40,"));
    assert!(dir.path().join("cell.manifest").exists());
}

#[test]
fn cell_rejects_bad_mechanism() {
    let dir = tempfile::tempdir().unwrap();
    let out = metasim(&["cell", "--mechanism", "FIM9", "--k", "5", "--n", "40"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("unknown mechanism"), "{}", stderr(&out));
}

#[test]
fn check_moments_exits_zero_with_required_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = metasim(&["check-moments", "--reps", "20000"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("P(N<0) expected 0.00082"), "{text}");
    assert!(text.contains("squared CV expected 0.101"), "{text}");
    assert!(text.contains("checks passed"));
}

#[test]
fn plot_renders_panels_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("grid.conf"), SMALL_GRID).unwrap();
    let run = metasim(&["run", "--config", "grid.conf", "--out", "r.csv"], dir.path());
    assert_eq!(run.status.code(), Some(0));
    let out = metasim(&["plot", "--input", "r.csv", "--out-dir", "panels"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let svgs: Vec<_> = std::fs::read_dir(dir.path().join("panels"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    // 2 panels (FIM2, RIM1) x 3 metrics
    assert_eq!(svgs.len(), 6, "{svgs:?}");
    assert!(svgs.iter().all(|n| n.ends_with(".svg")));
}

#[test]
fn plot_missing_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = metasim(&["plot", "--input", "absent.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn plot_corrupt_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("junk.csv"), "not,a,results,file\n").unwrap();
    let out = metasim(&["plot", "--input", "junk.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}
