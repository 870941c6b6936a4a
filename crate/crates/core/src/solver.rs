//! Explicit method-of-lines integrator for the truncated hierarchy on a
//! uniform 1-D grid.
//!
//! Space is discretized with second-order central differences and mirror
//! ghost nodes (homogeneous Neumann), which conserves the trapezoid mass of
//! `s0 + sum(i) + sum(s)` exactly up to round-off. Time stepping is forward
//! Euler by default (a Heun step is available behind the same interface),
//! with the step size capped by both the diffusive stability bound and a
//! reaction-rate bound. The top simulated level drops its outflow term: with
//! nothing above it, that level is numerically inert anyway.
//!
//! Round-off can push field values epsilon-negative; those are clamped to
//! zero and the clamped magnitude is logged, because the exponential
//! identities monitored by the invariant log assume non-negative fields.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::csvio::{self, fmt_g, CsvError};
use crate::model::{
    check_speed_ordering, FieldState, Grid1D, ModelParams, PropagationSequences,
};
use crate::sequences::{self, SequencesError};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("time step {dt} exceeds the stability bound {dt_max}")]
    CflViolation { dt: f64, dt_max: f64 },
    #[error("speeds are not strictly decreasing (first violation at level {index}); rerun with force to override")]
    SpeedOrdering { index: usize },
    #[error("domain too small: the leading front needs {required} but the half-length is {half_length}; rerun with force to override")]
    DomainTooSmall { required: f64, half_length: f64 },
    #[error(transparent)]
    Sequences(#[from] SequencesError),
}

/// Compactly supported initial bump
/// `height * max(0, 1 - ((x - center)/half_width)^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpSpec {
    pub center: f64,
    pub half_width: f64,
    pub height: f64,
}

impl BumpSpec {
    pub fn profile(&self, x: f64) -> f64 {
        let u = (x - self.center) / self.half_width;
        self.height * (1.0 - u * u).max(0.0)
    }
}

/// Time integrator selection; both variants share every interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    Euler,
    Rk2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub grid: Grid1D,
    pub t_end: f64,
    /// Fraction of the stability bound actually used, in `(0, 1]`.
    pub cfl_safety: f64,
    /// Requested snapshot instants (each mapped to the nearest completed
    /// step), ascending, within `[0, t_end]`.
    pub snapshot_times: Vec<f64>,
    /// Number of simulated levels.
    pub n_sim: usize,
    /// One bump per simulated level `1..=n_sim`.
    pub bumps: Vec<BumpSpec>,
}

impl SolverConfig {
    pub fn validate(&self, p: &ModelParams) -> Result<(), SolverError> {
        let mut problems = Vec::new();
        if self.n_sim < 1 {
            problems.push("n_sim must be >= 1".into());
        }
        if self.n_sim > p.opinions.len() {
            problems.push(format!(
                "n_sim = {} needs {} opinion triples, only {} provided",
                self.n_sim,
                self.n_sim,
                p.opinions.len()
            ));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            problems.push(format!("t_end must be finite and >= 0, got {}", self.t_end));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            problems.push(format!("cfl_safety must be in (0, 1], got {}", self.cfl_safety));
        }
        if self.bumps.len() != self.n_sim {
            problems.push(format!(
                "need one bump per simulated level: n_sim = {} but {} bumps given",
                self.n_sim,
                self.bumps.len()
            ));
        }
        let half = self.grid.half_length();
        for (i, b) in self.bumps.iter().enumerate() {
            if !(b.height > 0.0) || !(b.half_width > 0.0) {
                problems.push(format!("bump {} must have positive height and half-width", i + 1));
            } else if b.center - b.half_width <= -half || b.center + b.half_width >= half {
                problems.push(format!(
                    "bump {} support [{}, {}] must lie strictly inside (-{half}, {half})",
                    i + 1,
                    b.center - b.half_width,
                    b.center + b.half_width
                ));
            }
        }
        for (i, &t) in self.snapshot_times.iter().enumerate() {
            if !(0.0..=self.t_end).contains(&t) {
                problems.push(format!("snapshot time {t} outside [0, {}]", self.t_end));
            }
            if i > 0 && t < self.snapshot_times[i - 1] {
                problems.push("snapshot times must be ascending".into());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(SolverError::Config(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Proceed despite a speed-ordering violation or an undersized domain.
    pub force: bool,
    pub scheme: Scheme,
    /// Root tolerance for the ladder built alongside the run.
    pub tol: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { force: false, scheme: Scheme::Euler, tol: sequences::DEFAULT_TOL }
    }
}

/// Stable step size: `safety * min(dx^2 / (2 max d), 0.1 / max reaction rate)`
/// where the reaction rate is bounded by `max(alpha) * s0_star` and `max(mu)`.
pub fn cfl_dt(grid: &Grid1D, p: &ModelParams, safety: f64) -> f64 {
    let max_d = p.opinions.iter().map(|o| o.d).fold(0.0, f64::max);
    let max_alpha = p.opinions.iter().map(|o| o.alpha).fold(0.0, f64::max);
    let max_mu = p.opinions.iter().map(|o| o.mu).fold(0.0, f64::max);
    let dx = grid.dx();
    let diffusive = dx * dx / (2.0 * max_d);
    let reactive = 0.1 / (max_alpha * p.s0_star).max(max_mu);
    safety * diffusive.min(reactive)
}

/// Uniform base density, one bump per excited level, everything else zero.
pub fn initial_state(cfg: &SolverConfig, p: &ModelParams) -> Result<FieldState, SolverError> {
    cfg.validate(p)?;
    let nx = cfg.grid.nx();
    let s0 = vec![p.s0_star; nx];
    let i: Vec<Vec<f64>> = cfg
        .bumps
        .iter()
        .map(|b| cfg.grid.nodes().map(|x| b.profile(x)).collect())
        .collect();
    let zeros = vec![vec![0.0; nx]; cfg.n_sim];
    Ok(FieldState { t: 0.0, s0, i: i.clone(), s: zeros.clone(), r: zeros })
}

/// Time derivatives of every field.
#[derive(Debug, Clone)]
struct Rates {
    s0: Vec<f64>,
    i: Vec<Vec<f64>>,
    s: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
}

impl Rates {
    fn zeros_like(state: &FieldState) -> Self {
        let nx = state.s0.len();
        let n = state.n_sim();
        Self {
            s0: vec![0.0; nx],
            i: vec![vec![0.0; nx]; n],
            s: vec![vec![0.0; nx]; n],
            r: vec![vec![0.0; nx]; n],
        }
    }
}

fn laplacian_into(u: &[f64], dx: f64, out: &mut [f64]) {
    let n = u.len();
    let inv = 1.0 / (dx * dx);
    out[0] = 2.0 * (u[1] - u[0]) * inv;
    for j in 1..n - 1 {
        out[j] = (u[j + 1] - 2.0 * u[j] + u[j - 1]) * inv;
    }
    out[n - 1] = 2.0 * (u[n - 2] - u[n - 1]) * inv;
}

fn rhs(state: &FieldState, grid: &Grid1D, p: &ModelParams, out: &mut Rates) {
    let n_sim = state.n_sim();
    let nx = state.s0.len();
    let alpha1 = p.opinion(1).alpha;
    for j in 0..nx {
        out.s0[j] = -alpha1 * state.s0[j] * state.i[0][j];
    }
    for n in 1..=n_sim {
        let op = p.opinion(n);
        let i_n = &state.i[n - 1];
        let quiet_prev = state.quiet(n - 1);
        laplacian_into(i_n, grid.dx(), &mut out.i[n - 1]);
        let di = &mut out.i[n - 1];
        for j in 0..nx {
            di[j] = op.d * di[j] + (op.alpha * quiet_prev[j] - op.mu) * i_n[j];
        }
        let ds = &mut out.s[n - 1];
        if n < n_sim {
            let alpha_next = p.opinion(n + 1).alpha;
            let i_next = &state.i[n];
            let s_n = &state.s[n - 1];
            for j in 0..nx {
                ds[j] = op.mu * i_n[j] - alpha_next * s_n[j] * i_next[j];
            }
        } else {
            // no consumer above the truncation: the outflow term is dropped
            for j in 0..nx {
                ds[j] = op.mu * i_n[j];
            }
        }
        let dr = &mut out.r[n - 1];
        for j in 0..nx {
            dr[j] = op.mu * i_n[j];
        }
    }
}

fn axpy(out: &mut Vec<f64>, base: &[f64], h: f64, k: &[f64]) {
    out.clear();
    out.extend(base.iter().zip(k).map(|(b, kk)| b + h * kk));
}

fn add_scaled(out: &mut [f64], h: f64, k: &[f64]) {
    for (o, kk) in out.iter_mut().zip(k) {
        *o += h * kk;
    }
}

fn combine(next: &mut FieldState, base: &FieldState, h: f64, k: &Rates) {
    axpy(&mut next.s0, &base.s0, h, &k.s0);
    for n in 0..base.n_sim() {
        axpy(&mut next.i[n], &base.i[n], h, &k.i[n]);
        axpy(&mut next.s[n], &base.s[n], h, &k.s[n]);
        axpy(&mut next.r[n], &base.r[n], h, &k.r[n]);
    }
}

/// Clamp epsilon-negatives to zero; returns (sum of clamped magnitudes,
/// largest single magnitude) in node units.
fn clamp_negatives(state: &mut FieldState) -> (f64, f64) {
    let mut sum = 0.0;
    let mut max = 0.0f64;
    let mut clamp = |f: &mut Vec<f64>| {
        for v in f.iter_mut() {
            if *v < 0.0 {
                sum += -*v;
                max = max.max(-*v);
                *v = 0.0;
            }
        }
    };
    clamp(&mut state.s0);
    for n in 0..state.i.len() {
        clamp(&mut state.i[n]);
        clamp(&mut state.s[n]);
    }
    (sum, max)
}

/// Accumulators must never decrease; floor any round-off backslide (only the
/// Heun combination can produce one) and count it as a clamp.
fn floor_accumulators(next: &mut FieldState, prev: &FieldState, stats: &mut (f64, f64)) {
    for n in 0..next.r.len() {
        for (v, &p) in next.r[n].iter_mut().zip(&prev.r[n]) {
            if *v < p {
                stats.0 += p - *v;
                stats.1 = stats.1.max(p - *v);
                *v = p;
            }
        }
    }
}

struct Workspace {
    k1: Rates,
    k2: Rates,
    mid: FieldState,
}

fn step_into(
    state: &FieldState,
    grid: &Grid1D,
    p: &ModelParams,
    dt: f64,
    scheme: Scheme,
    ws: &mut Workspace,
    next: &mut FieldState,
) -> (f64, f64) {
    match scheme {
        Scheme::Euler => {
            rhs(state, grid, p, &mut ws.k1);
            combine(next, state, dt, &ws.k1);
        }
        Scheme::Rk2 => {
            rhs(state, grid, p, &mut ws.k1);
            combine(&mut ws.mid, state, dt, &ws.k1);
            rhs(&ws.mid, grid, p, &mut ws.k2);
            combine(next, state, 0.5 * dt, &ws.k1);
            add_scaled(&mut next.s0, 0.5 * dt, &ws.k2.s0);
            for n in 0..state.n_sim() {
                add_scaled(&mut next.i[n], 0.5 * dt, &ws.k2.i[n]);
                add_scaled(&mut next.s[n], 0.5 * dt, &ws.k2.s[n]);
                add_scaled(&mut next.r[n], 0.5 * dt, &ws.k2.r[n]);
            }
        }
    }
    next.t = state.t + dt;
    let mut stats = clamp_negatives(next);
    floor_accumulators(next, state, &mut stats);
    stats
}

/// One forward-Euler step of size `dt`. Refuses steps beyond the stability
/// bound (`cfl_dt` with safety 1).
pub fn step(
    state: &FieldState,
    grid: &Grid1D,
    p: &ModelParams,
    dt: f64,
) -> Result<FieldState, SolverError> {
    let dt_max = cfl_dt(grid, p, 1.0);
    if dt > dt_max {
        return Err(SolverError::CflViolation { dt, dt_max });
    }
    let mut ws = Workspace {
        k1: Rates::zeros_like(state),
        k2: Rates::zeros_like(state),
        mid: state.clone(),
    };
    let mut next = state.clone();
    step_into(state, grid, p, dt, Scheme::Euler, &mut ws, &mut next);
    Ok(next)
}

/// Trapezoid integral of `s0 + sum(i) + sum(s)` over the grid. Conserved by
/// the scheme up to round-off and clamping.
pub fn trapezoid_mass(state: &FieldState, grid: &Grid1D) -> f64 {
    let trap = |f: &[f64]| {
        let sum: f64 = f.iter().sum();
        grid.dx() * (sum - 0.5 * (f[0] + f[f.len() - 1]))
    };
    let mut mass = trap(&state.s0);
    for n in 0..state.n_sim() {
        mass += trap(&state.i[n]) + trap(&state.s[n]);
    }
    mass
}

/// Per-snapshot health metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantRecord {
    pub t: f64,
    pub mass: f64,
    /// Relative drift against the initial mass.
    pub mass_drift: f64,
    /// Largest single clamped magnitude since the previous record.
    pub max_clamp: f64,
    /// Max node-wise deviation from the closed-form base-field law
    /// `s0 = s0_star * exp(-(alpha_1/mu_1) r_1)`.
    pub s0_identity_residual: f64,
    /// Max node-wise breach of the accumulator bounds
    /// `r_n exp(-lambda_{n+1} r_{n+1}) <= s_n <= r_n`, beyond the
    /// discretization allowance.
    pub sandwich_violation: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InvariantLog {
    pub records: Vec<InvariantRecord>,
    pub initial_mass: f64,
    /// Mass-weighted total of every clamped magnitude over the whole run.
    pub total_clamped_mass: f64,
}

impl InvariantLog {
    pub fn max_abs_drift(&self) -> f64 {
        self.records.iter().map(|r| r.mass_drift.abs()).fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "t,mass,mass_drift,max_clamp,s0_identity_residual,sandwich_violation")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.t, r.mass, r.mass_drift, r.max_clamp, r.s0_identity_residual, r.sandwich_violation
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(mut r: R) -> Result<Self, CsvError> {
        let mut line_no = 0;
        csvio::expect_header(
            &mut r,
            &mut line_no,
            "t,mass,mass_drift,max_clamp,s0_identity_residual,sandwich_violation",
        )?;
        let mut records = Vec::new();
        while let Some(line) = csvio::read_line(&mut r, &mut line_no)? {
            if line.is_empty() {
                continue;
            }
            let f = csvio::split_fields(&line, 6, line_no)?;
            records.push(InvariantRecord {
                t: csvio::parse_f64(f[0], line_no)?,
                mass: csvio::parse_f64(f[1], line_no)?,
                mass_drift: csvio::parse_f64(f[2], line_no)?,
                max_clamp: csvio::parse_f64(f[3], line_no)?,
                s0_identity_residual: csvio::parse_f64(f[4], line_no)?,
                sandwich_violation: csvio::parse_f64(f[5], line_no)?,
            });
        }
        let initial_mass = records.first().map_or(0.0, |r| r.mass);
        Ok(Self { records, initial_mass, total_clamped_mass: 0.0 })
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub snapshots: Vec<FieldState>,
    pub log: InvariantLog,
    /// Nominal (uniform) step size; the final step may be shorter to land on
    /// `t_end` exactly.
    pub dt: f64,
    /// Ladder built for the run's parameters (speed checks, measurement
    /// targets).
    pub sequences: PropagationSequences,
}

fn sandwich_tolerance(dt: f64, dx: f64, scale: f64) -> f64 {
    10.0 * (dt + dx * dx) * scale + 1e-12
}

fn invariant_record(
    state: &FieldState,
    grid: &Grid1D,
    p: &ModelParams,
    mass0: f64,
    window_max_clamp: f64,
    tol_disc: f64,
) -> InvariantRecord {
    let mass = trapezoid_mass(state, grid);
    let lam1 = p.opinion(1).alpha / p.opinion(1).mu;
    let mut s0_res = 0.0f64;
    for (s0v, r1v) in state.s0.iter().zip(&state.r[0]) {
        s0_res = s0_res.max((s0v - p.s0_star * (-lam1 * r1v).exp()).abs());
    }
    let n_sim = state.n_sim();
    let mut sandwich = 0.0f64;
    for n in 1..=n_sim {
        let lam_next =
            if n < n_sim { p.opinion(n + 1).alpha / p.opinion(n + 1).mu } else { 0.0 };
        let r_n = &state.r[n - 1];
        let s_n = &state.s[n - 1];
        for j in 0..r_n.len() {
            let r_next = if n < n_sim { state.r[n][j] } else { 0.0 };
            let lower = r_n[j] * (-lam_next * r_next).exp() - tol_disc - s_n[j];
            let upper = s_n[j] - r_n[j] - tol_disc;
            sandwich = sandwich.max(lower).max(upper);
        }
    }
    InvariantRecord {
        t: state.t,
        mass,
        mass_drift: (mass - mass0) / mass0,
        max_clamp: window_max_clamp,
        s0_identity_residual: s0_res,
        sandwich_violation: sandwich.max(0.0),
    }
}

fn snapshot_steps(times: &[f64], dt: f64, n_steps: usize, t_end: f64) -> BTreeSet<usize> {
    let t_of = |k: usize| if k == n_steps { t_end } else { k as f64 * dt };
    times
        .iter()
        .map(|&target| {
            if n_steps == 0 {
                return 0;
            }
            let guess = ((target / dt).round() as i64).clamp(0, n_steps as i64) as usize;
            let mut best = guess;
            for cand in [guess.saturating_sub(1), guess, (guess + 1).min(n_steps)] {
                if (t_of(cand) - target).abs() < (t_of(best) - target).abs() {
                    best = cand;
                }
            }
            best
        })
        .collect()
}

/// Integrate to `t_end`, emitting snapshots at the requested times (nearest
/// completed step) together with the invariant log.
///
/// Refuses to start when the ladder speeds are not strictly decreasing, or
/// when the leading front would come within ten diffusion lengths of the
/// boundary before `t_end` (Neumann walls are only transparent while fronts
/// stay away from them); `force` overrides both.
pub fn run(
    cfg: &SolverConfig,
    p: &ModelParams,
    opts: &RunOptions,
) -> Result<RunOutput, SolverError> {
    cfg.validate(p)?;
    let seq = sequences::build_sequences(p, opts.tol)?;
    let ordering = check_speed_ordering(&seq);
    if !ordering.ok && !opts.force {
        return Err(SolverError::SpeedOrdering {
            index: ordering.first_violation.expect("violating index"),
        });
    }
    if let Some(&c1) = seq.speeds.first() {
        let op1 = p.opinion(1);
        let margin = 10.0 * (op1.d / op1.mu).sqrt();
        let required = c1 * cfg.t_end + margin;
        if required > cfg.grid.half_length() && !opts.force {
            return Err(SolverError::DomainTooSmall {
                required,
                half_length: cfg.grid.half_length(),
            });
        }
    }

    let dt = cfl_dt(&cfg.grid, p, cfg.cfl_safety);
    let n_steps = if cfg.t_end > 0.0 { (cfg.t_end / dt - 1e-9).ceil() as usize } else { 0 };
    let snap_at = snapshot_steps(&cfg.snapshot_times, dt, n_steps, cfg.t_end);
    let tol_disc = sandwich_tolerance(dt, cfg.grid.dx(), p.s0_star + bump_scale(cfg));

    let mut cur = initial_state(cfg, p)?;
    let mut next = cur.clone();
    let mut ws = Workspace {
        k1: Rates::zeros_like(&cur),
        k2: Rates::zeros_like(&cur),
        mid: cur.clone(),
    };
    let mass0 = trapezoid_mass(&cur, &cfg.grid);
    let mut log = InvariantLog {
        records: Vec::new(),
        initial_mass: mass0,
        total_clamped_mass: 0.0,
    };
    let mut snapshots = Vec::new();
    let mut window_max_clamp = 0.0f64;

    if snap_at.contains(&0) {
        snapshots.push(cur.clone());
        log.records.push(invariant_record(&cur, &cfg.grid, p, mass0, 0.0, tol_disc));
    }
    for k in 1..=n_steps {
        let h = if k < n_steps { dt } else { cfg.t_end - (n_steps - 1) as f64 * dt };
        let (clamped, max_clamp) = step_into(&cur, &cfg.grid, p, h, opts.scheme, &mut ws, &mut next);
        log.total_clamped_mass += clamped * cfg.grid.dx();
        window_max_clamp = window_max_clamp.max(max_clamp);
        std::mem::swap(&mut cur, &mut next);
        if snap_at.contains(&k) {
            snapshots.push(cur.clone());
            log.records.push(invariant_record(
                &cur,
                &cfg.grid,
                p,
                mass0,
                window_max_clamp,
                tol_disc,
            ));
            window_max_clamp = 0.0;
        }
    }
    Ok(RunOutput { snapshots, log, dt, sequences: seq })
}

fn bump_scale(cfg: &SolverConfig) -> f64 {
    cfg.bumps.iter().map(|b| b.height).fold(0.0, f64::max)
}

/// Snapshot CSV: `x,s0,i1,s1,...,iN,sN,r1,...,rN`, one row per node,
/// C-style `%.12g` floats.
pub fn write_snapshot_csv<W: Write>(
    state: &FieldState,
    grid: &Grid1D,
    w: &mut W,
) -> std::io::Result<()> {
    let n_sim = state.n_sim();
    write!(w, "x,s0")?;
    for n in 1..=n_sim {
        write!(w, ",i{n},s{n}")?;
    }
    for n in 1..=n_sim {
        write!(w, ",r{n}")?;
    }
    writeln!(w)?;
    for j in 0..grid.nx() {
        write!(w, "{}", fmt_g(grid.node(j), 12))?;
        write!(w, ",{}", fmt_g(state.s0[j], 12))?;
        for n in 0..n_sim {
            write!(w, ",{},{}", fmt_g(state.i[n][j], 12), fmt_g(state.s[n][j], 12))?;
        }
        for n in 0..n_sim {
            write!(w, ",{}", fmt_g(state.r[n][j], 12))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Inverse of [`write_snapshot_csv`]; the time stamp is not stored in the
/// file and must be supplied. Returns the node coordinates and the state.
pub fn read_snapshot_csv<R: BufRead>(mut r: R, t: f64) -> Result<(Vec<f64>, FieldState), CsvError> {
    let mut line_no = 0;
    let header = csvio::read_line(&mut r, &mut line_no)?.ok_or(CsvError::Eof)?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 4 || cols[0] != "x" || cols[1] != "s0" || (cols.len() - 2) % 3 != 0 {
        return Err(CsvError::Header {
            expected: "x,s0,i1,s1,...,iN,sN,r1,...,rN".into(),
            found: header.clone(),
        });
    }
    let n_sim = (cols.len() - 2) / 3;
    let mut x = Vec::new();
    let mut s0 = Vec::new();
    let mut i = vec![Vec::new(); n_sim];
    let mut s = vec![Vec::new(); n_sim];
    let mut rr = vec![Vec::new(); n_sim];
    while let Some(line) = csvio::read_line(&mut r, &mut line_no)? {
        if line.is_empty() {
            continue;
        }
        let f = csvio::split_fields(&line, 2 + 3 * n_sim, line_no)?;
        x.push(csvio::parse_f64(f[0], line_no)?);
        s0.push(csvio::parse_f64(f[1], line_no)?);
        for n in 0..n_sim {
            i[n].push(csvio::parse_f64(f[2 + 2 * n], line_no)?);
            s[n].push(csvio::parse_f64(f[3 + 2 * n], line_no)?);
            rr[n].push(csvio::parse_f64(f[2 + 2 * n_sim + n], line_no)?);
        }
    }
    Ok((x, FieldState { t, s0, i, s, r: rr }))
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;
    use crate::model::OpinionParams;

    fn unit_model(s0: f64, n: usize) -> ModelParams {
        ModelParams::constant(s0, OpinionParams::new(1.0, 1.0, 1.0), n)
    }

    fn small_cfg(n_sim: usize) -> SolverConfig {
        SolverConfig {
            grid: Grid1D::new(20.0, 201).unwrap(),
            t_end: 1.0,
            cfl_safety: 0.9,
            snapshot_times: vec![0.0, 1.0],
            n_sim,
            bumps: vec![BumpSpec { center: 0.0, half_width: 2.0, height: 0.02 }; n_sim],
        }
    }

    #[test]
    fn cfl_dt_worked_example() {
        let grid = Grid1D::new(10.0, 201).unwrap(); // dx = 0.1
        let p = unit_model(2.0, 3);
        assert_relative_eq!(cfl_dt(&grid, &p, 0.4), 0.002, max_relative = 1e-12);
        // doubling the resolution quarters dt in the diffusion-limited regime
        let fine = Grid1D::new(10.0, 401).unwrap();
        let ratio = cfl_dt(&grid, &p, 0.4) / cfl_dt(&fine, &p, 0.4);
        assert_relative_eq!(ratio, 4.0, max_relative = 1e-9);
    }

    #[test]
    fn initial_state_matches_the_data() {
        let cfg = small_cfg(2);
        let p = unit_model(2.0, 2);
        let st = initial_state(&cfg, &p).unwrap();
        assert_eq!(st.t, 0.0);
        assert!(st.s0.iter().all(|&v| v == 2.0));
        // apex of the bump sits on the center node (odd nx)
        let mid = cfg.grid.nx() / 2;
        assert_relative_eq!(st.i[0][mid], 0.02);
        assert!(st.s.iter().flatten().all(|&v| v == 0.0));
        assert!(st.r.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn bump_leaking_outside_the_domain_is_refused() {
        let mut cfg = small_cfg(1);
        cfg.bumps[0].center = 19.5;
        let err = initial_state(&cfg, &unit_model(2.0, 1)).unwrap_err();
        assert!(matches!(err, SolverError::Config(_)));
    }

    #[test]
    fn missing_bump_is_refused() {
        let mut cfg = small_cfg(2);
        cfg.bumps.pop();
        assert!(matches!(
            cfg.validate(&unit_model(2.0, 2)),
            Err(SolverError::Config(_))
        ));
    }

    #[test]
    fn zero_excitation_only_advances_time() {
        let cfg = small_cfg(1);
        let p = unit_model(2.0, 1);
        let mut st = initial_state(&cfg, &p).unwrap();
        for v in st.i[0].iter_mut() {
            *v = 0.0;
        }
        let next = step(&st, &cfg.grid, &p, 0.001).unwrap();
        assert_eq!(next.s0, st.s0);
        assert_eq!(next.i, st.i);
        assert_eq!(next.s, st.s);
        assert_relative_eq!(next.t, 0.001);
    }

    #[test]
    fn uniform_fields_follow_the_reaction_odes() {
        // spatially uniform: the Laplacian vanishes, one Euler step by hand
        let grid = Grid1D::new(20.0, 201).unwrap();
        let p = unit_model(2.0, 1);
        let nx = grid.nx();
        let st = FieldState {
            t: 0.0,
            s0: vec![2.0; nx],
            i: vec![vec![0.1; nx]],
            s: vec![vec![0.0; nx]],
            r: vec![vec![0.0; nx]],
        };
        let next = step(&st, &grid, &p, 0.01).unwrap();
        for j in 0..nx {
            assert_relative_eq!(next.s0[j], 1.998, max_relative = 1e-12);
            assert_relative_eq!(next.i[0][j], 0.101, max_relative = 1e-12);
            assert_relative_eq!(next.s[0][j], 0.001, max_relative = 1e-12);
            assert_relative_eq!(next.r[0][j], 0.001, max_relative = 1e-12);
        }
    }

    #[test]
    fn oversized_steps_are_refused() {
        let cfg = small_cfg(1);
        let p = unit_model(2.0, 1);
        let st = initial_state(&cfg, &p).unwrap();
        let dt_max = cfl_dt(&cfg.grid, &p, 1.0);
        assert!(matches!(
            step(&st, &cfg.grid, &p, 2.0 * dt_max),
            Err(SolverError::CflViolation { .. })
        ));
    }

    #[test]
    fn single_step_conserves_trapezoid_mass() {
        let cfg = small_cfg(2);
        let p = unit_model(2.0, 2);
        let st = initial_state(&cfg, &p).unwrap();
        let m0 = trapezoid_mass(&st, &cfg.grid);
        let next = step(&st, &cfg.grid, &p, 0.005).unwrap();
        let m1 = trapezoid_mass(&next, &cfg.grid);
        assert!(((m1 - m0) / m0).abs() <= 1e-10, "drift {}", (m1 - m0) / m0);
    }

    #[test]
    fn zero_horizon_returns_the_initial_condition() {
        let mut cfg = small_cfg(1);
        cfg.t_end = 0.0;
        cfg.snapshot_times = vec![0.0];
        let p = unit_model(2.0, 1);
        let out = run(&cfg, &p, &RunOptions::default()).unwrap();
        assert_eq!(out.snapshots.len(), 1);
        assert_eq!(out.snapshots[0], initial_state(&cfg, &p).unwrap());
        assert_eq!(out.log.records.len(), 1);
        assert_eq!(out.log.records[0].mass_drift, 0.0);
    }

    #[test]
    fn undersized_domain_is_refused_without_force() {
        let mut cfg = small_cfg(1);
        cfg.t_end = 30.0; // c1 = 2: front would need 60 + margin > 20
        cfg.snapshot_times = vec![0.0, 30.0];
        let p = unit_model(2.0, 1);
        let err = run(&cfg, &p, &RunOptions::default()).unwrap_err();
        assert!(matches!(err, SolverError::DomainTooSmall { .. }));
        let forced = run(&cfg, &p, &RunOptions { force: true, ..Default::default() });
        assert!(forced.is_ok());
    }

    #[test]
    fn increasing_speeds_are_refused_without_force() {
        // growing diffusivities make deeper levels faster
        let opinions = vec![
            OpinionParams::new(1.0, 1.0, 1.0),
            OpinionParams::new(100.0, 1.0, 1.0),
        ];
        let p = ModelParams::new(2.0, opinions, 2);
        let mut cfg = small_cfg(2);
        cfg.t_end = 0.5;
        cfg.snapshot_times = vec![0.0, 0.5];
        let err = run(&cfg, &p, &RunOptions::default()).unwrap_err();
        assert!(matches!(err, SolverError::SpeedOrdering { index: 2 }));
        assert!(run(&cfg, &p, &RunOptions { force: true, ..Default::default() }).is_ok());
    }

    #[test]
    fn schemes_agree_at_first_order() {
        let mut cfg = small_cfg(1);
        cfg.t_end = 2.0;
        cfg.snapshot_times = vec![2.0];
        let p = unit_model(2.0, 1);
        let euler = run(&cfg, &p, &RunOptions::default()).unwrap();
        let heun = run(
            &cfg,
            &p,
            &RunOptions { scheme: Scheme::Rk2, ..Default::default() },
        )
        .unwrap();
        let a = &euler.snapshots[0].r[0];
        let b = &heun.snapshots[0].r[0];
        let diff = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        assert!(diff < 1e-3, "schemes diverged by {diff}");
        assert!(diff > 0.0, "schemes should not be identical");
        assert!(heun.log.max_abs_drift() <= 1e-10);
    }

    #[test]
    fn accumulators_never_decrease_between_snapshots() {
        let mut cfg = small_cfg(2);
        cfg.t_end = 4.0;
        cfg.snapshot_times = (0..=8).map(|k| 0.5 * k as f64).collect();
        let p = unit_model(2.0, 2);
        for scheme in [Scheme::Euler, Scheme::Rk2] {
            let out = run(&cfg, &p, &RunOptions { scheme, ..Default::default() }).unwrap();
            for w in out.snapshots.windows(2) {
                for n in 0..2 {
                    for (a, b) in w[0].r[n].iter().zip(&w[1].r[n]) {
                        assert!(b >= a, "accumulator decreased");
                    }
                }
            }
        }
    }

    #[test]
    fn snapshot_csv_round_trips_to_twelve_digits() {
        let mut cfg = small_cfg(2);
        cfg.t_end = 1.0;
        cfg.snapshot_times = vec![1.0];
        let p = unit_model(2.0, 2);
        let out = run(&cfg, &p, &RunOptions::default()).unwrap();
        let state = &out.snapshots[0];
        let mut buf = Vec::new();
        write_snapshot_csv(state, &cfg.grid, &mut buf).unwrap();
        let (x, back) = read_snapshot_csv(buf.as_slice(), state.t).unwrap();
        assert_eq!(x.len(), cfg.grid.nx());
        for (a, b) in state.s0.iter().zip(&back.s0) {
            assert!((a - b).abs() <= 1e-11 * a.abs().max(1.0));
        }
        for n in 0..2 {
            for (a, b) in state.r[n].iter().zip(&back.r[n]) {
                assert!((a - b).abs() <= 1e-11 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn invariant_log_csv_round_trips_exactly() {
        let mut cfg = small_cfg(1);
        cfg.t_end = 1.0;
        let p = unit_model(2.0, 1);
        let out = run(&cfg, &p, &RunOptions::default()).unwrap();
        let mut buf = Vec::new();
        out.log.write_csv(&mut buf).unwrap();
        let back = InvariantLog::read_csv(buf.as_slice()).unwrap();
        assert_eq!(out.log.records, back.records);
    }
}
