//! End-to-end tests of the binary: files, summaries, exit codes, and
//! byte-for-byte reproducibility.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use opinion_cascade::model::PropagationSequences;
use opinion_cascade::sequences::SweepTable;
use opinion_cascade::solver::read_snapshot_csv;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_opinion-cascade"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const QUICK_SIM: &str = "\
s0_star = 2.0
cap = 10
half_length = 30.0
nx = 301
t_end = 5.0
snapshot_every = 0.5
n_sim = 1
";

#[test]
fn sequence_prints_the_summary_and_writes_the_ladder() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "lab.conf", "s0_star = 2.0\ncap = 10\n");
    let out = run_in(dir.path(), &["sequence", "--config", "lab.conf", "--out", "o"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("N* = 3"), "{text}");
    assert!(text.contains("speed ordering: ok"), "{text}");
    assert!(text.contains("dagger sum = 2"), "{text}");

    let csv = fs::read(dir.path().join("o/ladder.csv")).unwrap();
    let seq = PropagationSequences::read_csv(csv.as_slice()).unwrap();
    assert_eq!(seq.plateaus.len(), 4);
    assert!((seq.plateaus[1] - 1.59362426004).abs() < 1e-9);
}

#[test]
fn sequence_reports_subcritical_and_truncated_ladders() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "low.conf", "s0_star = 0.5\n");
    let out = run_in(dir.path(), &["sequence", "--config", "low.conf", "--out", "o"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("N* = 0"));

    // doubling transmission ratios: the ladder outruns any cap
    let mut doubling = String::from("s0_star = 2.0\ncap = 50\n");
    let lambdas: Vec<String> = (1..=50).map(|k| format!("{}", 2f64.powi(k + 1))).collect();
    doubling.push_str(&format!("alpha_list = {}\n", lambdas.join(",")));
    doubling.push_str(&format!("d_list = {}\n", vec!["1"; 50].join(",")));
    doubling.push_str(&format!("mu_list = {}\n", vec!["1"; 50].join(",")));
    write_config(dir.path(), "inf.conf", &doubling);
    let out = run_in(dir.path(), &["sequence", "--config", "inf.conf", "--out", "o2"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("N* = >= 50 (truncated)"), "{}", stdout(&out));
}

#[test]
fn sequence_output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "lab.conf", "s0_star = 2.0\ncap = 10\n");
    run_in(dir.path(), &["sequence", "--config", "lab.conf", "--out", "a"]);
    run_in(dir.path(), &["sequence", "--config", "lab.conf", "--out", "b"]);
    let a = fs::read(dir.path().join("a/ladder.csv")).unwrap();
    let b = fs::read(dir.path().join("b/ladder.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn invalid_parameters_exit_with_the_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "bad.conf", "s0_star = 2.0\nmu = -1\n");
    let out = run_in(dir.path(), &["sequence", "--config", "bad.conf", "--out", "o"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mu[1] must be > 0"));

    // unknown keys are configuration problems too
    write_config(dir.path(), "typo.conf", "s0_starr = 2.0\n");
    let out = run_in(dir.path(), &["sequence", "--config", "typo.conf", "--out", "o"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn zero_horizon_simulation_writes_the_initial_condition() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "lab.conf",
        "s0_star = 2.0\nhalf_length = 30\nnx = 301\nt_end = 0\nsnapshot_times = 0\nn_sim = 1\n",
    );
    let out = run_in(dir.path(), &["simulate", "--config", "lab.conf", "--out", "o"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let file = fs::File::open(dir.path().join("o/snapshot_0.csv")).unwrap();
    let (x, state) = read_snapshot_csv(std::io::BufReader::new(file), 0.0).unwrap();
    assert_eq!(x.len(), 301);
    assert!(state.s0.iter().all(|&v| v == 2.0));
    assert!(state.s[0].iter().all(|&v| v == 0.0));
    assert!(state.r[0].iter().all(|&v| v == 0.0));
    let mid = 150;
    assert!((state.i[0][mid] - 0.02).abs() < 1e-12);
}

#[test]
fn simulate_then_speeds_produces_reports() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "lab.conf", QUICK_SIM);
    let out = run_in(dir.path(), &["simulate", "--config", "lab.conf", "--out", "o"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("mass drift"));
    assert!(dir.path().join("o/invariants.csv").exists());

    let out = run_in(dir.path(), &["speeds", "--config", "lab.conf", "--out", "o"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("o/speeds.csv").exists());
    assert!(dir.path().join("o/plateaus.csv").exists());
    // the base level's settled value is measurable already in this tiny run
    assert!(stdout(&out).contains("opinion 0 plateau"));
}

#[test]
fn speeds_without_snapshots_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "lab.conf", QUICK_SIM);
    fs::create_dir(dir.path().join("empty")).unwrap();
    let out = run_in(dir.path(), &["speeds", "--config", "lab.conf", "--out", "empty"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn oversized_bump_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "lab.conf",
        "half_length = 30\nnx = 301\nt_end = 1\nn_sim = 1\nbump_half_width = 40\n",
    );
    let out = run_in(dir.path(), &["simulate", "--config", "lab.conf", "--out", "o"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unordered_speeds_require_force() {
    let dir = tempfile::tempdir().unwrap();
    // a deeper level with a hundredfold diffusivity overtakes the first front
    write_config(
        dir.path(),
        "lab.conf",
        "s0_star = 2.0\ncap = 2\nd_list = 1,100\nalpha_list = 1,1\nmu_list = 1,1\n\
         half_length = 30\nnx = 301\nt_end = 1\nsnapshot_every = 0.5\nn_sim = 2\n",
    );
    let out = run_in(dir.path(), &["simulate", "--config", "lab.conf", "--out", "o"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run_in(dir.path(), &["simulate", "--config", "lab.conf", "--out", "o", "--force"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn sweep_blocks_sum_to_one_and_match_the_ladder() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        "lab.conf",
        "cap = 100\nsweep_start = 0.5\nsweep_stop = 2\nsweep_step = 0.5\n",
    );
    let out = run_in(dir.path(), &["sweep", "--config", "lab.conf", "--out", "o"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("monotone"));
    let table =
        SweepTable::read_csv(fs::read(dir.path().join("o/sweep.csv")).unwrap().as_slice())
            .unwrap();
    for &s0 in &[0.5, 1.0, 1.5, 2.0] {
        let sum: f64 =
            table.rows.iter().filter(|r| r.s0_star == s0).map(|r| r.fraction).sum();
        assert!((sum - 1.0).abs() <= 1e-9, "block {s0} sums to {sum}");
    }

    // a single-density sweep reproduces the ladder's settled values
    write_config(
        dir.path(),
        "single.conf",
        "s0_star = 2\ncap = 100\nsweep_start = 2\nsweep_stop = 2\nsweep_step = 1\n",
    );
    run_in(dir.path(), &["sweep", "--config", "single.conf", "--out", "s"]);
    run_in(dir.path(), &["sequence", "--config", "single.conf", "--out", "s"]);
    let table =
        SweepTable::read_csv(fs::read(dir.path().join("s/sweep.csv")).unwrap().as_slice())
            .unwrap();
    let ladder = PropagationSequences::read_csv(
        fs::read(dir.path().join("s/ladder.csv")).unwrap().as_slice(),
    )
    .unwrap();
    for (row, dagger) in table.rows.iter().zip(&ladder.daggers) {
        assert!((row.fraction * 2.0 - dagger).abs() < 1e-12);
    }
}

#[test]
fn check_passes_by_default_and_fails_on_broken_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["check"]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(stdout(&out).contains("all checks passed"));

    write_config(dir.path(), "bad.conf", "mu = -2\n");
    let out = run_in(dir.path(), &["check", "--config", "bad.conf"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("FAIL  params-validate"));

    // a cap too small for the bracket is a skip, not a failure
    write_config(dir.path(), "cap1.conf", "s0_star = 2\ncap = 1\n");
    let out = run_in(dir.path(), &["check", "--config", "cap1.conf"]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(stdout(&out).contains("skip  bracket-agreement"), "{}", stdout(&out));
}

#[test]
fn simulation_outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "lab.conf", QUICK_SIM);
    run_in(dir.path(), &["simulate", "--config", "lab.conf", "--out", "a"]);
    run_in(dir.path(), &["simulate", "--config", "lab.conf", "--out", "b"]);
    for name in ["snapshot_0.csv", "invariants.csv"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
    }
    // the final snapshot too (name depends on the step mapping, find it)
    let last = |d: &str| {
        let mut files: Vec<(f64, std::path::PathBuf)> = fs::read_dir(dir.path().join(d))
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter_map(|p| {
                let name = p.file_name()?.to_str()?.to_string();
                let t: f64 = name.strip_prefix("snapshot_")?.strip_suffix(".csv")?.parse().ok()?;
                Some((t, p))
            })
            .collect();
        files.sort_by(|x, y| x.0.total_cmp(&y.0));
        files.last().unwrap().1.clone()
    };
    assert_eq!(fs::read(last("a")).unwrap(), fs::read(last("b")).unwrap());
}
