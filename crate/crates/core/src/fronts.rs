//! Measuring what the solver produces: front positions, empirical spreading
//! speeds, plateau values, and the non-propagation of levels beyond the
//! maximal complexity.
//!
//! Fronts are read from the accumulator fields `r_n` rather than `i_n` or
//! `s_n`: the accumulators are monotone in time and front-shaped in space, so
//! a level crossing is unique in practice. The default crossing level is half
//! the analytic plateau.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::csvio::{self, CsvError};
use crate::model::{FieldState, FrontTrace, Grid1D};

#[derive(Debug, Error)]
pub enum FrontError {
    #[error("need at least {needed} usable samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("regression window is degenerate (all samples at the same time)")]
    DegenerateWindow,
    #[error("region ({0}, {1}) contains no grid nodes")]
    EmptyRegion(f64, f64),
}

/// Rightmost `x` where `field` crosses `level`, by linear interpolation
/// between adjacent nodes; `None` when there is no crossing.
pub fn front_position(field: &[f64], grid: &Grid1D, level: f64) -> Option<f64> {
    assert!(level > 0.0, "crossing level must be positive");
    for j in (0..field.len().saturating_sub(1)).rev() {
        let a = field[j] - level;
        let b = field[j + 1] - level;
        if a == 0.0 {
            return Some(grid.node(j));
        }
        if (a > 0.0) != (b > 0.0) {
            let x0 = grid.node(j);
            return Some(x0 + grid.dx() * a / (a - b));
        }
    }
    None
}

/// Front positions of `opinion`'s accumulator across snapshots; snapshots
/// without a crossing are omitted.
pub fn track_fronts(
    snapshots: &[FieldState],
    grid: &Grid1D,
    opinion: usize,
    level: f64,
) -> Result<FrontTrace, FrontError> {
    let samples: Vec<(f64, f64)> = snapshots
        .iter()
        .filter_map(|st| front_position(st.accumulator(opinion), grid, level).map(|x| (st.t, x)))
        .collect();
    if samples.len() < 2 {
        return Err(FrontError::InsufficientData { needed: 2, got: samples.len() });
    }
    Ok(FrontTrace { opinion, samples, level })
}

/// Least-squares speed of a front trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedEstimate {
    pub opinion: usize,
    pub speed: f64,
    pub stderr: f64,
    /// Time span of the samples actually used.
    pub window: (f64, f64),
}

/// Slope of `x(t)` over the trailing `window_fraction` of the samples.
/// Early samples are transients from before the front forms, and the
/// predicted speeds are asymptotic, so only the tail is informative.
pub fn estimate_speed(
    trace: &FrontTrace,
    window_fraction: f64,
) -> Result<SpeedEstimate, FrontError> {
    assert!(window_fraction > 0.0 && window_fraction <= 1.0);
    let n = trace.samples.len();
    let take = ((window_fraction * n as f64).ceil() as usize).min(n);
    if take < 5 {
        return Err(FrontError::InsufficientData { needed: 5, got: take });
    }
    let window = &trace.samples[n - take..];
    let m = take as f64;
    let t_mean = window.iter().map(|(t, _)| t).sum::<f64>() / m;
    let x_mean = window.iter().map(|(_, x)| x).sum::<f64>() / m;
    let stt: f64 = window.iter().map(|(t, _)| (t - t_mean).powi(2)).sum();
    if stt == 0.0 {
        return Err(FrontError::DegenerateWindow);
    }
    let stx: f64 = window.iter().map(|(t, x)| (t - t_mean) * (x - x_mean)).sum();
    let speed = stx / stt;
    let ss_res: f64 = window
        .iter()
        .map(|(t, x)| (x - x_mean - speed * (t - t_mean)).powi(2))
        .sum();
    let stderr = if take > 2 { (ss_res / (m - 2.0) / stt).sqrt() } else { 0.0 };
    Ok(SpeedEstimate {
        opinion: trace.opinion,
        speed,
        stderr,
        window: (window[0].0, window[take - 1].0),
    })
}

/// Mean and spread of a quiet field over a spatial region.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauReading {
    pub opinion: usize,
    pub region: (f64, f64),
    pub mean: f64,
    /// `max - min` over the region's nodes.
    pub spread: f64,
}

/// Read the quiet field of `opinion` (the base field for opinion 0) over
/// `region = (x_lo, x_hi)`.
pub fn plateau_value(
    state: &FieldState,
    grid: &Grid1D,
    opinion: usize,
    region: (f64, f64),
) -> Result<PlateauReading, FrontError> {
    let field = state.quiet(opinion);
    let mut count = 0usize;
    let mut sum = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for (j, x) in grid.nodes().enumerate() {
        if x >= region.0 && x <= region.1 {
            count += 1;
            sum += field[j];
            min = min.min(field[j]);
            max = max.max(field[j]);
        }
    }
    if count == 0 {
        return Err(FrontError::EmptyRegion(region.0, region.1));
    }
    Ok(PlateauReading {
        opinion,
        region,
        mean: sum / count as f64,
        spread: max - min,
    })
}

/// Largest value of `opinion`'s quiet field over all snapshots and all nodes
/// with `|x| > delta`. Levels beyond the maximal complexity never spread, so
/// this should be tiny for them (and shrink as `delta` grows).
pub fn vanishing_check(
    snapshots: &[FieldState],
    grid: &Grid1D,
    opinion: usize,
    delta: f64,
) -> f64 {
    let mut sup = 0.0f64;
    for st in snapshots {
        let field = st.quiet(opinion);
        for (j, x) in grid.nodes().enumerate() {
            if x.abs() > delta {
                sup = sup.max(field[j]);
            }
        }
    }
    sup
}

/// One row of the measured-vs-predicted speed report.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedReportRow {
    pub opinion: usize,
    pub speed: f64,
    pub stderr: f64,
    pub c_theory: f64,
    pub rel_err: f64,
}

pub fn write_speed_report<W: Write>(rows: &[SpeedReportRow], w: &mut W) -> std::io::Result<()> {
    writeln!(w, "opinion,speed,stderr,c_theory,rel_err")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.opinion, r.speed, r.stderr, r.c_theory, r.rel_err)?;
    }
    Ok(())
}

pub fn read_speed_report<R: BufRead>(mut r: R) -> Result<Vec<SpeedReportRow>, CsvError> {
    let mut line_no = 0;
    csvio::expect_header(&mut r, &mut line_no, "opinion,speed,stderr,c_theory,rel_err")?;
    let mut rows = Vec::new();
    while let Some(line) = csvio::read_line(&mut r, &mut line_no)? {
        if line.is_empty() {
            continue;
        }
        let f = csvio::split_fields(&line, 5, line_no)?;
        rows.push(SpeedReportRow {
            opinion: csvio::parse_usize(f[0], line_no)?,
            speed: csvio::parse_f64(f[1], line_no)?,
            stderr: csvio::parse_f64(f[2], line_no)?,
            c_theory: csvio::parse_f64(f[3], line_no)?,
            rel_err: csvio::parse_f64(f[4], line_no)?,
        });
    }
    Ok(rows)
}

/// One row of the plateau report: a measured regional mean against its
/// analytic target.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauReportRow {
    pub opinion: usize,
    pub region_lo: f64,
    pub region_hi: f64,
    pub mean: f64,
    pub target: f64,
    pub rel_err: f64,
}

pub fn write_plateau_report<W: Write>(
    rows: &[PlateauReportRow],
    w: &mut W,
) -> std::io::Result<()> {
    writeln!(w, "opinion,region_lo,region_hi,mean,target,rel_err")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.opinion, r.region_lo, r.region_hi, r.mean, r.target, r.rel_err
        )?;
    }
    Ok(())
}

pub fn read_plateau_report<R: BufRead>(mut r: R) -> Result<Vec<PlateauReportRow>, CsvError> {
    let mut line_no = 0;
    csvio::expect_header(&mut r, &mut line_no, "opinion,region_lo,region_hi,mean,target,rel_err")?;
    let mut rows = Vec::new();
    while let Some(line) = csvio::read_line(&mut r, &mut line_no)? {
        if line.is_empty() {
            continue;
        }
        let f = csvio::split_fields(&line, 6, line_no)?;
        rows.push(PlateauReportRow {
            opinion: csvio::parse_usize(f[0], line_no)?,
            region_lo: csvio::parse_f64(f[1], line_no)?,
            region_hi: csvio::parse_f64(f[2], line_no)?,
            mean: csvio::parse_f64(f[3], line_no)?,
            target: csvio::parse_f64(f[4], line_no)?,
            rel_err: csvio::parse_f64(f[5], line_no)?,
        });
    }
    Ok(rows)
}
