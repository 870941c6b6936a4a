//! The analytic ladder: plateau recursion, spreading speeds, maximal
//! complexity, and the asymptotic machinery that predicts how the complexity
//! grows with the initial density.
//!
//! Starting from the base density `s0_star`, each level `n + 1` spreads iff
//! its reproduction number `R_{n+1} = (alpha_{n+1}/mu_{n+1}) * s_star[n]`
//! exceeds 1, in which case the next plateau is the unique positive root of
//!
//! ```text
//!   s_star[n] * (1 - exp(-lambda_{n+1} * s)) = s,       lambda = alpha / mu,
//! ```
//!
//! and the level invades at the Fisher-KPP speed
//! `c_{n+1} = 2 * sqrt(d_{n+1} * (alpha_{n+1} * s_star[n] - mu_{n+1}))`.
//! The recursion stops at the first `R <= 1`; the index where it stops is the
//! maximal complexity. The settled densities (daggers) are consecutive
//! plateau differences and telescope back to `s0_star`.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::csvio::{self, CsvError};
use crate::model::{
    validate_params, Lambda, MaxComplexity, ModelParams, OpinionParams, PropagationSequences,
};
use crate::quad;

/// Default absolute tolerance for plateau roots. Ladder error compounds
/// multiplicatively, and 1e-12 keeps even multi-thousand-step ladders
/// accurate to ~1e-9.
pub const DEFAULT_TOL: f64 = 1e-12;

const MAX_POLISH: usize = 200;

#[derive(Debug, Error)]
pub enum SequencesError {
    #[error("plateau solve did not converge (s_prev = {s_prev}, lambda = {lambda}, tol = {tol})")]
    NonConvergence { s_prev: f64, lambda: f64, tol: f64 },
    #[error("wave speed undefined: alpha * s_prev - mu = {radicand} is not positive")]
    SpeedDomain { radicand: f64 },
    #[error("invalid model parameters: {}", .0.join("; "))]
    InvalidParams(Vec<String>),
    #[error("ladder still running at cap = {cap}; raise the cap")]
    Truncated { cap: usize },
    #[error("asymptotic ratio needs lambda * s0_star > 1, got {0}")]
    Subcritical(f64),
}

/// Reproduction number `alpha * s_prev / mu` of the level fed by a quiet
/// density `s_prev`.
pub fn reproduction_number(s_prev: f64, alpha: f64, mu: f64) -> f64 {
    alpha * s_prev / mu
}

/// Next plateau below `s_prev`: the unique root of
/// `g(s) = s_prev * (1 - exp(-lambda s)) - s` in `(0, s_prev)`.
///
/// Returns `None` when the reproduction number is `<= 1` (the ladder
/// terminates; the boundary case exactly 1 terminates too). `g` is strictly
/// concave with `g(0) = 0`, `g'(0) > 0` and `g(s_prev) < 0`, so a sign-based
/// bisection bracket always converges; a Newton polish then reaches `tol`
/// quickly. Newton alone can escape the bracket when the reproduction number
/// is close to 1, so every iterate is kept inside the current bracket.
pub fn solve_next_plateau(
    s_prev: f64,
    alpha: f64,
    mu: f64,
    tol: f64,
) -> Result<Option<f64>, SequencesError> {
    if reproduction_number(s_prev, alpha, mu) <= 1.0 {
        return Ok(None);
    }
    let lambda = alpha / mu;
    let g = |s: f64| s_prev * (-(-lambda * s).exp_m1()) - s;
    let dg = |s: f64| s_prev * lambda * (-lambda * s).exp() - 1.0;

    let mut lo = 0.0_f64;
    let mut hi = s_prev;
    let coarse = 1e-3 * s_prev;
    while hi - lo > coarse {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let mut x = 0.5 * (lo + hi);
    for _ in 0..MAX_POLISH {
        let gx = g(x);
        if gx > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let slope = dg(x);
        let mut next = if slope != 0.0 { x - gx / slope } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= tol {
            return Ok(Some(next));
        }
        x = next;
    }
    Err(SequencesError::NonConvergence { s_prev, lambda, tol })
}

/// Fisher-KPP spreading speed `2 * sqrt(d * (alpha * s_prev - mu))` of a
/// level invading a quiet density `s_prev`.
///
/// Only defined while the level actually spreads; a non-positive radicand
/// means the caller asked for a speed beyond the ladder.
pub fn wave_speed(d: f64, alpha: f64, mu: f64, s_prev: f64) -> Result<f64, SequencesError> {
    let radicand = alpha * s_prev - mu;
    if radicand <= 0.0 {
        return Err(SequencesError::SpeedDomain { radicand });
    }
    Ok(2.0 * (d * radicand).sqrt())
}

/// Run the plateau recursion from `p.s0_star` until it terminates or hits
/// `p.cap`, collecting plateaus, speeds, daggers and reproduction numbers.
pub fn build_sequences(
    p: &ModelParams,
    tol: f64,
) -> Result<PropagationSequences, SequencesError> {
    let report = validate_params(p);
    if !report.ok() {
        return Err(SequencesError::InvalidParams(report.violations));
    }

    let mut plateaus = vec![p.s0_star];
    let mut repro = Vec::new();
    let mut speeds = Vec::new();
    let mut n_star = None;
    for n in 0..p.cap {
        let op = p.opinion(n + 1);
        let r = reproduction_number(plateaus[n], op.alpha, op.mu);
        repro.push(r);
        if r <= 1.0 {
            n_star = Some(n);
            break;
        }
        speeds.push(wave_speed(op.d, op.alpha, op.mu, plateaus[n])?);
        let next = solve_next_plateau(plateaus[n], op.alpha, op.mu, tol)?
            .expect("reproduction number > 1 guarantees a root");
        plateaus.push(next);
    }

    let n_star = match n_star {
        Some(n) => MaxComplexity::Finite(n),
        None => MaxComplexity::AtLeastCap(p.cap),
    };
    let mut daggers: Vec<f64> = plateaus.windows(2).map(|w| w[0] - w[1]).collect();
    if n_star.is_finite() {
        daggers.push(*plateaus.last().expect("at least the base plateau"));
    }
    Ok(PropagationSequences { plateaus, speeds, daggers, repro, n_star })
}

fn phi_step(u: f64, lambda: f64) -> f64 {
    u / (-(-lambda * u).exp_m1())
}

/// Iterates of the inverse plateau map `phi(x) = x / (1 - exp(-lambda x))`
/// starting from the termination threshold `1 / lambda`; returns
/// `u_0, ..., u_k`. The sequence is strictly increasing and unbounded, and
/// with constant coefficients `u` brackets the initial density at index equal
/// to the maximal complexity.
pub fn inverse_ladder(lambda: Lambda, k: usize) -> Vec<f64> {
    let lam = lambda.value();
    let mut u = Vec::with_capacity(k + 1);
    u.push(1.0 / lam);
    for j in 0..k {
        u.push(phi_step(u[j], lam));
    }
    u
}

/// Maximal complexity for constant coefficients, computed without any root
/// solving: the smallest `k` with `u_k >= s0_star` (ties count; the bracket
/// inequality is weak on the left). Serves as an independent oracle for
/// [`build_sequences`]. Mirrors the ladder's truncation convention: any
/// answer `>= cap` is reported as `AtLeastCap(cap)`.
pub fn bracket_max_complexity(s0_star: f64, lambda: Lambda, cap: usize) -> MaxComplexity {
    let lam = lambda.value();
    let mut u = 1.0 / lam;
    let mut k = 0usize;
    while u < s0_star {
        if k >= cap {
            return MaxComplexity::AtLeastCap(cap);
        }
        u = phi_step(u, lam);
        k += 1;
    }
    if k >= cap {
        MaxComplexity::AtLeastCap(cap)
    } else {
        MaxComplexity::Finite(k)
    }
}

/// `integral from 0 to x of (exp(lambda z) - 1) / z dz`, the continuous
/// counterpart of the inverse-ladder step count: consecutive iterates differ
/// by about 1 under this map, so the integral evaluated at the initial
/// density predicts the maximal complexity for large densities.
///
/// The integrand extends continuously to `lambda` at `z = 0`; adaptive
/// quadrature resolves the rest to a relative 1e-8.
pub fn growth_integral(x: f64, lambda: Lambda) -> f64 {
    assert!(x >= 0.0, "growth integral needs x >= 0");
    let lam = lambda.value();
    let f = move |z: f64| if z == 0.0 { lam } else { (lam * z).exp_m1() / z };
    quad::adaptive(&f, 0.0, x, 1e-8)
}

/// `N* * (lambda s0) / exp(lambda s0)` with `N*` from
/// [`bracket_max_complexity`]; approaches 1 as the initial density grows.
pub fn asymptotic_ratio(
    s0_star: f64,
    lambda: Lambda,
    cap: usize,
) -> Result<f64, SequencesError> {
    let r1 = lambda.value() * s0_star;
    if r1 <= 1.0 {
        return Err(SequencesError::Subcritical(r1));
    }
    match bracket_max_complexity(s0_star, lambda, cap) {
        MaxComplexity::Finite(n) => Ok(n as f64 * r1 / r1.exp()),
        MaxComplexity::AtLeastCap(cap) => Err(SequencesError::Truncated { cap }),
    }
}

#[derive(Debug, Clone)]
pub struct MonotonicityViolation {
    pub index: usize,
    pub left: MaxComplexity,
    pub right: MaxComplexity,
}

#[derive(Debug, Clone, Default)]
pub struct MonotonicityReport {
    pub checked: usize,
    pub violations: Vec<MonotonicityViolation>,
}

impl MonotonicityReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// For parameter pairs ordered so the right side has at least the initial
/// density and transmission rates of the left and at most its quieting
/// rates, the maximal complexity must not decrease from left to right.
/// Reports every pair where it provably does.
///
/// Truncated results are compared conservatively: `AtLeastCap(c)` on the
/// left conflicts only with a finite right value below `c`.
pub fn monotonicity_scan(
    pairs: &[(ModelParams, ModelParams)],
    tol: f64,
) -> Result<MonotonicityReport, SequencesError> {
    let mut report = MonotonicityReport::default();
    for (index, (left, right)) in pairs.iter().enumerate() {
        let nl = build_sequences(left, tol)?.n_star;
        let nr = build_sequences(right, tol)?.n_star;
        let violates = match (nl, nr) {
            (MaxComplexity::Finite(a), MaxComplexity::Finite(b)) => a > b,
            (MaxComplexity::AtLeastCap(c), MaxComplexity::Finite(b)) => c > b,
            _ => false,
        };
        if violates {
            report.violations.push(MonotonicityViolation { index, left: nl, right: nr });
        }
        report.checked += 1;
    }
    Ok(report)
}

/// One row of a [`SweepTable`]: the fraction of the population that settles
/// on level `n` for the given initial density.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub s0_star: f64,
    pub n: usize,
    pub fraction: f64,
}

/// Rectangular table of settled fractions over a range of initial densities.
/// Within each density block the fractions sum to 1 and are exactly zero
/// above that density's maximal complexity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// `(s0_star, max complexity)` per density block, in input order.
    pub fn n_star_staircase(&self) -> Vec<(f64, usize)> {
        let mut out: Vec<(f64, usize)> = Vec::new();
        for row in &self.rows {
            match out.last_mut() {
                Some((s0, n)) if *s0 == row.s0_star => {
                    if row.fraction > 0.0 {
                        *n = row.n;
                    }
                }
                _ => out.push((row.s0_star, if row.fraction > 0.0 { row.n } else { 0 })),
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "s0_star,n,fraction")?;
        for row in &self.rows {
            writeln!(w, "{},{},{}", row.s0_star, row.n, row.fraction)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(mut r: R) -> Result<Self, CsvError> {
        let mut line_no = 0;
        csvio::expect_header(&mut r, &mut line_no, "s0_star,n,fraction")?;
        let mut rows = Vec::new();
        while let Some(line) = csvio::read_line(&mut r, &mut line_no)? {
            if line.is_empty() {
                continue;
            }
            let f = csvio::split_fields(&line, 3, line_no)?;
            rows.push(SweepRow {
                s0_star: csvio::parse_f64(f[0], line_no)?,
                n: csvio::parse_usize(f[1], line_no)?,
                fraction: csvio::parse_f64(f[2], line_no)?,
            });
        }
        Ok(Self { rows })
    }
}

/// One ladder per initial density (constant coefficients from `template`),
/// rectangularized over levels `0..=max` maximal complexity in the sweep.
///
/// Densities must be positive and ascending. A ladder that is still running
/// at `cap` has no settled fractions, so truncation is an error here.
pub fn sweep_s0(
    s0_values: &[f64],
    template: &OpinionParams,
    cap: usize,
) -> Result<SweepTable, SequencesError> {
    let mut problems = Vec::new();
    for (i, &s0) in s0_values.iter().enumerate() {
        if !(s0 > 0.0) {
            problems.push(format!("sweep density #{} must be > 0, got {s0}", i + 1));
        }
        if i > 0 && !(s0 > s0_values[i - 1]) {
            problems.push(format!("sweep densities must be strictly ascending at #{}", i + 1));
        }
    }
    if !problems.is_empty() {
        return Err(SequencesError::InvalidParams(problems));
    }

    let mut ladders = Vec::with_capacity(s0_values.len());
    for &s0 in s0_values {
        let p = ModelParams::constant(s0, template.clone(), cap);
        let seq = build_sequences(&p, DEFAULT_TOL)?;
        if !seq.n_star.is_finite() {
            return Err(SequencesError::Truncated { cap });
        }
        ladders.push((s0, seq));
    }
    let n_max = ladders.iter().map(|(_, s)| s.n_star.lower_bound()).max().unwrap_or(0);
    let mut rows = Vec::new();
    for (s0, seq) in &ladders {
        for n in 0..=n_max {
            let fraction = seq.daggers.get(n).map_or(0.0, |d| d / s0);
            rows.push(SweepRow { s0_star: *s0, n, fraction });
        }
    }
    Ok(SweepTable { rows })
}

impl PropagationSequences {
    /// Ladder CSV: one row per level `n` holding the plateau, the speed
    /// `c_n` (empty for `n = 0`), the dagger (empty on a truncated last row)
    /// and the reproduction number `R_{n+1}` (empty when the next level's
    /// coefficients are beyond the cap).
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "n,s_star,c,s_dagger,repro")?;
        for (n, plateau) in self.plateaus.iter().enumerate() {
            let c = if n >= 1 { self.speeds.get(n - 1) } else { None };
            write!(w, "{n},{plateau},")?;
            if let Some(c) = c {
                write!(w, "{c}")?;
            }
            write!(w, ",")?;
            if let Some(d) = self.daggers.get(n) {
                write!(w, "{d}")?;
            }
            write!(w, ",")?;
            if let Some(r) = self.repro.get(n) {
                write!(w, "{r}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(mut r: R) -> Result<Self, CsvError> {
        let mut line_no = 0;
        csvio::expect_header(&mut r, &mut line_no, "n,s_star,c,s_dagger,repro")?;
        let mut plateaus = Vec::new();
        let mut speeds = Vec::new();
        let mut daggers = Vec::new();
        let mut repro = Vec::new();
        let mut last_dagger_missing = false;
        while let Some(line) = csvio::read_line(&mut r, &mut line_no)? {
            if line.is_empty() {
                continue;
            }
            let f = csvio::split_fields(&line, 5, line_no)?;
            let n = csvio::parse_usize(f[0], line_no)?;
            if n != plateaus.len() {
                return Err(CsvError::Parse {
                    line: line_no,
                    msg: format!("expected level {}, found {n}", plateaus.len()),
                });
            }
            plateaus.push(csvio::parse_f64(f[1], line_no)?);
            if let Some(c) = csvio::parse_opt_f64(f[2], line_no)? {
                speeds.push(c);
            }
            match csvio::parse_opt_f64(f[3], line_no)? {
                Some(d) => daggers.push(d),
                None => last_dagger_missing = true,
            }
            if let Some(rv) = csvio::parse_opt_f64(f[4], line_no)? {
                repro.push(rv);
            }
        }
        if plateaus.is_empty() {
            return Err(CsvError::Eof);
        }
        let last = plateaus.len() - 1;
        let n_star = if last_dagger_missing {
            MaxComplexity::AtLeastCap(last)
        } else {
            MaxComplexity::Finite(last)
        };
        Ok(Self { plateaus, speeds, daggers, repro, n_star })
    }
}
