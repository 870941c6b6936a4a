//! The five subcommands. Every file is written atomically
//! (temp-then-rename) and every run of a command on the same inputs writes
//! byte-identical output.

use std::fs;
use std::path::{Path, PathBuf};

use opinion_cascade::fronts::{
    estimate_speed, front_position, plateau_value, track_fronts, vanishing_check,
    write_plateau_report, write_speed_report, FrontError, PlateauReportRow, SpeedReportRow,
};
use opinion_cascade::model::{
    check_speed_ordering, validate_params, FieldState, Grid1D, Lambda, MaxComplexity,
    ModelParams, OpinionParams, PropagationSequences,
};
use opinion_cascade::sequences::{
    bracket_max_complexity, build_sequences, growth_integral, monotonicity_scan, sweep_s0,
};
use opinion_cascade::solver::{
    read_snapshot_csv, run, write_snapshot_csv, RunOptions, RunOutput,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::LabConfig;
use crate::CliError;

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| CliError::Io(format!("{}: {e}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(())
}

fn ensure_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    Ok(())
}

fn validated_model(cfg: &LabConfig) -> Result<&ModelParams, CliError> {
    let report = validate_params(&cfg.model);
    for note in &report.notes {
        println!("note: {note}");
    }
    if report.ok() {
        Ok(&cfg.model)
    } else {
        Err(CliError::Validation(format!(
            "invalid parameters:\n  - {}",
            report.violations.join("\n  - ")
        )))
    }
}

fn ladder_summary(seq: &PropagationSequences, s0: f64) {
    println!("N* = {}", seq.n_star);
    let ordering = check_speed_ordering(seq);
    if ordering.ok {
        println!("speed ordering: ok (strictly decreasing)");
    } else {
        println!(
            "speed ordering: VIOLATED at level {} (simulate will refuse without --force)",
            ordering.first_violation.unwrap()
        );
    }
    if seq.n_star.is_finite() {
        let sum = seq.dagger_sum();
        println!("dagger sum = {} (relative error {:.2e})", sum, (sum - s0).abs() / s0.max(1e-300));
    } else {
        println!("dagger sum: n/a (ladder truncated at the cap)");
    }
    for (idx, r) in seq.repro.iter().enumerate() {
        if (r - 1.0).abs() < 1e-9 {
            println!(
                "warning: reproduction number R_{} = {r} is within 1e-9 of the threshold",
                idx + 1
            );
        }
    }
}

pub fn sequence(cfg: &LabConfig, out: &Path) -> Result<(), CliError> {
    let model = validated_model(cfg)?;
    let seq = build_sequences(model, cfg.tol)?;
    ensure_out(out)?;
    let mut buf = Vec::new();
    seq.write_csv(&mut buf)?;
    let path = out.join("ladder.csv");
    write_atomic(&path, &buf)?;
    ladder_summary(&seq, model.s0_star);
    println!("wrote {}", path.display());
    Ok(())
}

fn resolve_n_sim(cfg: &LabConfig, seq: &PropagationSequences) -> Result<usize, CliError> {
    if cfg.n_sim > 0 {
        return Ok(cfg.n_sim);
    }
    match seq.n_star {
        MaxComplexity::Finite(n) => Ok(n + 1),
        MaxComplexity::AtLeastCap(cap) => Err(CliError::Validation(format!(
            "n_sim defaults to one level above the maximal complexity, but the ladder is \
             still running at cap = {cap}; set n_sim explicitly or raise the cap"
        ))),
    }
}

fn snapshot_name(t: f64) -> String {
    format!("snapshot_{t}.csv")
}

pub fn simulate(cfg: &LabConfig, out: &Path, force: bool) -> Result<(), CliError> {
    let model = validated_model(cfg)?;
    let seq = build_sequences(model, cfg.tol)?;
    let n_sim = resolve_n_sim(cfg, &seq)?;
    let solver_cfg = cfg.solver_config(n_sim)?;
    let opts = RunOptions { force, scheme: cfg.scheme, tol: cfg.tol };
    let output = run(&solver_cfg, model, &opts)?;
    ensure_out(out)?;

    for state in &output.snapshots {
        let mut buf = Vec::new();
        write_snapshot_csv(state, &solver_cfg.grid, &mut buf)?;
        write_atomic(&out.join(snapshot_name(state.t)), &buf)?;
    }
    let mut buf = Vec::new();
    output.log.write_csv(&mut buf)?;
    write_atomic(&out.join("invariants.csv"), &buf)?;

    println!(
        "integrated {} levels to t = {} with dt = {} ({} snapshots)",
        n_sim,
        solver_cfg.t_end,
        output.dt,
        output.snapshots.len()
    );
    println!(
        "mass drift {:.2e}, clamped mass {:.2e}",
        output.log.max_abs_drift(),
        output.log.total_clamped_mass / output.log.initial_mass
    );
    println!("wrote {} snapshot files and invariants.csv in {}", output.snapshots.len(), out.display());
    Ok(())
}

fn read_snapshots(dir: &Path) -> Result<(Grid1D, Vec<FieldState>), CliError> {
    let mut stamped: Vec<(f64, PathBuf)> = Vec::new();
    let entries =
        fs::read_dir(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    for entry in entries {
        let entry = entry.map_err(|e| CliError::Io(e.to_string()))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(stamp) = name.strip_prefix("snapshot_").and_then(|s| s.strip_suffix(".csv")) {
            let t: f64 = stamp.parse().map_err(|_| {
                CliError::Io(format!("cannot parse time stamp in file name `{name}`"))
            })?;
            stamped.push((t, entry.path()));
        }
    }
    if stamped.len() < 2 {
        return Err(CliError::Io(format!(
            "need at least 2 snapshot files in {}, found {} (run simulate first)",
            dir.display(),
            stamped.len()
        )));
    }
    stamped.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut snapshots = Vec::with_capacity(stamped.len());
    let mut grid: Option<Grid1D> = None;
    for (t, path) in stamped {
        let file = fs::File::open(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let (x, state) = read_snapshot_csv(std::io::BufReader::new(file), t)?;
        if grid.is_none() {
            let half = x.last().copied().unwrap_or(1.0);
            grid = Some(
                Grid1D::new(half, x.len()).map_err(|e| CliError::Io(e.to_string()))?,
            );
        }
        snapshots.push(state);
    }
    Ok((grid.expect("at least one snapshot"), snapshots))
}

pub fn speeds(cfg: &LabConfig, out: &Path) -> Result<(), CliError> {
    let model = validated_model(cfg)?;
    let seq = build_sequences(model, cfg.tol)?;
    let (grid, snapshots) = read_snapshots(out)?;
    let last = snapshots.last().expect("nonempty");
    let n_sim = last.n_sim();
    let n_star = seq.n_star.lower_bound();

    // measured fronts at the final time, one per detectable accumulator
    let mut fronts: Vec<Option<f64>> = vec![None; n_sim + 1];
    for opinion in 1..=n_sim.min(n_star) {
        let level = cfg.front_level_fraction * seq.plateaus[opinion];
        fronts[opinion] = front_position(last.accumulator(opinion), &grid, level);
    }

    let mut speed_rows: Vec<SpeedReportRow> = Vec::new();
    for opinion in 1..=n_sim.min(n_star) {
        let level = cfg.front_level_fraction * seq.plateaus[opinion];
        let trace = match track_fronts(&snapshots, &grid, opinion, level) {
            Ok(t) => t,
            Err(FrontError::InsufficientData { got, .. }) => {
                println!("opinion {opinion}: front not formed ({got} crossings), skipped");
                continue;
            }
            Err(e) => return Err(CliError::Numerical(e.to_string())),
        };
        match estimate_speed(&trace, cfg.speed_window) {
            Ok(est) => {
                let c_theory = seq.speeds[opinion - 1];
                speed_rows.push(SpeedReportRow {
                    opinion,
                    speed: est.speed,
                    stderr: est.stderr,
                    c_theory,
                    rel_err: (est.speed - c_theory).abs() / c_theory,
                });
            }
            Err(FrontError::InsufficientData { got, .. }) => {
                println!("opinion {opinion}: only {got} samples in the window, skipped");
            }
            Err(e) => return Err(CliError::Numerical(e.to_string())),
        }
    }

    let mut plateau_rows: Vec<PlateauReportRow> = Vec::new();
    // star plateaus: level n sits between the measured fronts of n+1 and n
    // (ahead of the first front for the base level); the region is inset by
    // a fraction of the measured gap to stay clear of the interfaces
    for opinion in 0..=n_sim.min(n_star) {
        let region = if opinion == 0 {
            fronts.get(1).copied().flatten().map(|f1| {
                let hi = 0.95 * grid.half_length();
                (f1 + cfg.plateau_inset * (hi - f1), hi)
            })
        } else {
            fronts[opinion].map(|f_hi| {
                let f_lo = fronts.get(opinion + 1).copied().flatten().unwrap_or(0.0);
                let inset = cfg.plateau_inset * (f_hi - f_lo);
                (f_lo + inset, f_hi - inset)
            })
        };
        let Some((lo, hi)) = region else { continue };
        if hi <= lo {
            continue;
        }
        if let Ok(reading) = plateau_value(last, &grid, opinion, (lo, hi)) {
            let target = seq.plateaus[opinion];
            plateau_rows.push(PlateauReportRow {
                opinion,
                region_lo: lo,
                region_hi: hi,
                mean: reading.mean,
                target,
                rel_err: (reading.mean - target).abs() / target,
            });
        }
    }
    // settled values: level n reads its final density deep behind the front
    // of level n+1
    for opinion in 0..n_star {
        let Some(f_next) = fronts.get(opinion + 1).copied().flatten() else { continue };
        let (lo, hi) = (cfg.settled_margin, 0.85 * f_next);
        if hi <= lo {
            continue;
        }
        if let Ok(reading) = plateau_value(last, &grid, opinion, (lo, hi)) {
            let target = seq.daggers[opinion];
            plateau_rows.push(PlateauReportRow {
                opinion,
                region_lo: lo,
                region_hi: hi,
                mean: reading.mean,
                target,
                rel_err: (reading.mean - target).abs() / target,
            });
        }
    }

    // levels above the maximal complexity must not spread at all
    for opinion in (n_star + 1)..=n_sim {
        let sup = vanishing_check(&snapshots, &grid, opinion, cfg.vanish_delta);
        println!(
            "opinion {opinion} (beyond N* = {n_star}): sup beyond |x| > {} is {sup:.3e}",
            cfg.vanish_delta
        );
    }

    ensure_out(out)?;
    let mut buf = Vec::new();
    write_speed_report(&speed_rows, &mut buf)?;
    write_atomic(&out.join("speeds.csv"), &buf)?;
    let mut buf = Vec::new();
    write_plateau_report(&plateau_rows, &mut buf)?;
    write_atomic(&out.join("plateaus.csv"), &buf)?;

    for r in &speed_rows {
        println!(
            "opinion {}: speed {:.5} +- {:.1e} (predicted {:.5}, rel err {:.3})",
            r.opinion, r.speed, r.stderr, r.c_theory, r.rel_err
        );
    }
    for r in &plateau_rows {
        println!(
            "opinion {} plateau over ({:.2}, {:.2}): mean {:.5} (target {:.5}, rel err {:.3})",
            r.opinion, r.region_lo, r.region_hi, r.mean, r.target, r.rel_err
        );
    }
    println!("wrote speeds.csv and plateaus.csv in {}", out.display());
    Ok(())
}

pub fn sweep(cfg: &LabConfig, out: &Path) -> Result<(), CliError> {
    validated_model(cfg)?;
    let template = cfg.constant_template()?;
    let values = cfg.sweep_values();
    if values.is_empty() {
        return Err(CliError::Validation("empty sweep range".into()));
    }
    let table = sweep_s0(&values, &template, cfg.model.cap)?;
    ensure_out(out)?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    let path = out.join("sweep.csv");
    write_atomic(&path, &buf)?;

    let stairs = table.n_star_staircase();
    let monotone = stairs.windows(2).all(|w| w[1].1 >= w[0].1);
    println!(
        "swept {} densities in [{}, {}]; N* runs {} -> {} ({})",
        stairs.len(),
        values[0],
        values[values.len() - 1],
        stairs.first().map(|s| s.1).unwrap_or(0),
        stairs.last().map(|s| s.1).unwrap_or(0),
        if monotone { "monotone" } else { "NOT MONOTONE" }
    );
    println!("wrote {}", path.display());
    Ok(())
}

enum CheckOutcome {
    Pass(String),
    Skip(String),
    Fail(String),
}

fn bisect_plateau_oracle(s_prev: f64, lambda: f64) -> Option<f64> {
    if lambda * s_prev <= 1.0 {
        return None;
    }
    let g = |s: f64| s_prev * (1.0 - (-lambda * s).exp()) - s;
    let (mut lo, mut hi) = (0.0_f64, s_prev);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

pub fn check(cfg: &LabConfig, seed: u64) -> Result<(), CliError> {
    let mut outcomes: Vec<(&str, CheckOutcome)> = Vec::new();

    // 1. configured parameters validate
    let report = validate_params(&cfg.model);
    let params_ok = report.ok();
    outcomes.push((
        "params-validate",
        if params_ok {
            CheckOutcome::Pass("all positivity constraints hold".into())
        } else {
            CheckOutcome::Fail(report.violations.join("; "))
        },
    ));

    // 2-3. ladder checks on the configured instance
    if params_ok {
        match build_sequences(&cfg.model, cfg.tol) {
            Ok(seq) => {
                if seq.n_star.is_finite() {
                    let s0 = cfg.model.s0_star;
                    let err = (seq.dagger_sum() - s0).abs();
                    outcomes.push((
                        "dagger-telescoping",
                        if err <= 1e-9 * s0.max(1.0) {
                            CheckOutcome::Pass(format!("sum error {err:.2e}"))
                        } else {
                            CheckOutcome::Fail(format!("sum error {err:.2e}"))
                        },
                    ));
                } else {
                    outcomes.push((
                        "dagger-telescoping",
                        CheckOutcome::Skip("ladder truncated at the cap".into()),
                    ));
                }
                if cfg.explicit_lists {
                    outcomes.push((
                        "bracket-agreement",
                        CheckOutcome::Skip("per-level coefficients (bracket needs constants)".into()),
                    ));
                } else {
                    let lambda = cfg.model.opinions[0].lambda();
                    let bracketed =
                        bracket_max_complexity(cfg.model.s0_star, lambda, cfg.model.cap);
                    match (seq.n_star, bracketed) {
                        (MaxComplexity::AtLeastCap(c), MaxComplexity::AtLeastCap(_)) => {
                            outcomes.push((
                                "bracket-agreement",
                                CheckOutcome::Skip(format!("both routes truncated at cap {c}")),
                            ));
                        }
                        (a, b) if a == b => {
                            outcomes.push((
                                "bracket-agreement",
                                CheckOutcome::Pass(format!("both routes give {a}")),
                            ));
                        }
                        (a, b) => {
                            outcomes.push((
                                "bracket-agreement",
                                CheckOutcome::Fail(format!("ladder {a} vs bracket {b}")),
                            ));
                        }
                    }
                }
            }
            Err(e) => outcomes.push(("dagger-telescoping", CheckOutcome::Fail(e.to_string()))),
        }
    } else {
        outcomes.push(("dagger-telescoping", CheckOutcome::Skip("invalid parameters".into())));
        outcomes.push(("bracket-agreement", CheckOutcome::Skip("invalid parameters".into())));
    }

    // 4. randomized ladder-vs-oracle agreement
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_root_gap = 0.0f64;
    let mut disagreements = 0usize;
    for _ in 0..50 {
        let big_r: f64 = rng.gen_range(0.1..10.0);
        let lambda = 10f64.powf(rng.gen_range(-1.0..1.0));
        let s0 = big_r / lambda;
        let p = ModelParams::constant(s0, OpinionParams::new(1.0, lambda, 1.0), 2000);
        let seq = build_sequences(&p, 1e-12).map_err(|e| CliError::Numerical(e.to_string()))?;
        if seq.n_star != bracket_max_complexity(s0, Lambda::new(lambda), 2000) {
            disagreements += 1;
        }
        if let Some(oracle) = bisect_plateau_oracle(s0, lambda) {
            if seq.plateaus.len() > 1 {
                worst_root_gap = worst_root_gap.max((seq.plateaus[1] - oracle).abs());
            }
        }
    }
    outcomes.push((
        "random-oracle-agreement",
        if disagreements == 0 && worst_root_gap <= 1e-10 {
            CheckOutcome::Pass(format!("50 instances, worst root gap {worst_root_gap:.1e}"))
        } else {
            CheckOutcome::Fail(format!(
                "{disagreements} disagreements, worst root gap {worst_root_gap:.1e}"
            ))
        },
    ));

    // 5. monotonicity of the maximal complexity
    let mut pairs = Vec::new();
    for _ in 0..100 {
        let big_r: f64 = rng.gen_range(0.1..5.0);
        let lambda = 10f64.powf(rng.gen_range(-1.0..1.0));
        let mu = 10f64.powf(rng.gen_range(-0.5..0.5));
        let alpha = lambda * mu;
        let s0 = big_r / lambda;
        let mut grow = || 1.0 + rng.gen_range(0.0..0.2);
        let left = ModelParams::constant(s0, OpinionParams::new(1.0, alpha, mu), 2000);
        let right = ModelParams::constant(
            s0 * grow(),
            OpinionParams::new(1.0, alpha * grow(), mu / grow()),
            2000,
        );
        pairs.push((left, right));
    }
    match monotonicity_scan(&pairs, 1e-12) {
        Ok(rep) if rep.ok() => outcomes.push((
            "monotonicity-scan",
            CheckOutcome::Pass(format!("0 violations over {} ordered pairs", rep.checked)),
        )),
        Ok(rep) => outcomes.push((
            "monotonicity-scan",
            CheckOutcome::Fail(format!("{} violations", rep.violations.len())),
        )),
        Err(e) => outcomes.push(("monotonicity-scan", CheckOutcome::Fail(e.to_string()))),
    }

    // 6. quadrature fixed point
    let phi1 = growth_integral(1.0, Lambda::new(1.0));
    let phi_err = (phi1 - 1.3179021514544).abs();
    outcomes.push((
        "growth-integral",
        if phi_err <= 1e-6 {
            CheckOutcome::Pass(format!("phi(1) error {phi_err:.1e}"))
        } else {
            CheckOutcome::Fail(format!("phi(1) error {phi_err:.1e}"))
        },
    ));

    // 7. solver invariants on a small fast run (fixed reference instance)
    outcomes.push(("solver-invariants", small_run_check()));

    let mut failed = false;
    for (name, outcome) in &outcomes {
        match outcome {
            CheckOutcome::Pass(msg) => println!("ok    {name}: {msg}"),
            CheckOutcome::Skip(msg) => println!("skip  {name}: {msg}"),
            CheckOutcome::Fail(msg) => {
                println!("FAIL  {name}: {msg}");
                failed = true;
            }
        }
    }
    if failed {
        if !params_ok {
            return Err(CliError::Validation("self-check failed".into()));
        }
        return Err(CliError::Numerical("self-check failed".into()));
    }
    println!("all checks passed");
    Ok(())
}

fn small_run_check() -> CheckOutcome {
    use opinion_cascade::solver::{BumpSpec, SolverConfig};
    let p = ModelParams::constant(2.0, OpinionParams::new(1.0, 1.0, 1.0), 10);
    let grid = match Grid1D::new(40.0, 201) {
        Ok(g) => g,
        Err(e) => return CheckOutcome::Fail(e.to_string()),
    };
    let cfg = SolverConfig {
        grid,
        t_end: 10.0,
        cfl_safety: 0.9,
        snapshot_times: vec![0.0, 2.5, 5.0, 7.5, 10.0],
        n_sim: 2,
        bumps: vec![BumpSpec { center: 0.0, half_width: 2.0, height: 0.02 }; 2],
    };
    let out: RunOutput = match run(&cfg, &p, &RunOptions::default()) {
        Ok(o) => o,
        Err(e) => return CheckOutcome::Fail(e.to_string()),
    };
    let drift = out.log.max_abs_drift();
    let clamp = out.log.total_clamped_mass / out.log.initial_mass;
    let sandwich = out
        .log
        .records
        .iter()
        .map(|r| r.sandwich_violation)
        .fold(0.0f64, f64::max);
    let monotone = out.snapshots.windows(2).all(|w| {
        (0..2).all(|n| w[0].r[n].iter().zip(&w[1].r[n]).all(|(a, b)| b >= a))
    });
    if drift <= 1e-8 && clamp <= 1e-8 && sandwich <= 1e-12 && monotone {
        CheckOutcome::Pass(format!("drift {drift:.1e}, clamp {clamp:.1e}, sandwich {sandwich:.1e}"))
    } else {
        CheckOutcome::Fail(format!(
            "drift {drift:.1e}, clamp {clamp:.1e}, sandwich {sandwich:.1e}, r-monotone {monotone}"
        ))
    }
}
