//! Domain types shared by the analytic ladder, the grid solver and the
//! front-measurement routines.
//!
//! The model tracks a population in which opinion `n + 1` can only be adopted
//! by individuals who already hold opinion `n`. Quiet individuals with
//! opinion `n` have density `s_n`, excited (spreading) individuals have
//! density `i_n`, and `r_n` accumulates everyone who has ever quieted down
//! from level `n`:
//!
//! ```text
//!   ds_0/dt = -alpha_1 s_0 i_1
//!   di_n/dt = d_n lap(i_n) + alpha_n s_{n-1} i_n - mu_n i_n
//!   ds_n/dt = -alpha_{n+1} s_n i_{n+1} + mu_n i_n
//!   dr_n/dt = mu_n i_n,   r_n(0) = 0
//! ```
//!
//! Each level behaves like a Fisher-KPP front feeding the next one, and the
//! whole cascade is controlled by the plateau recursion implemented in
//! [`crate::sequences`].

use std::fmt;

use thiserror::Error;

/// Per-level coefficients: diffusivity `d`, transmission rate `alpha` and
/// quieting rate `mu`. All three must be strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct OpinionParams {
    /// Diffusivity of the excited population (length^2 / time).
    pub d: f64,
    /// Transmission rate (1 / (density * time)).
    pub alpha: f64,
    /// Quieting rate (1 / time); `1/mu` is the mean excited duration.
    pub mu: f64,
}

impl OpinionParams {
    pub fn new(d: f64, alpha: f64, mu: f64) -> Self {
        Self { d, alpha, mu }
    }

    /// Transmission-to-quieting ratio `alpha / mu`.
    pub fn lambda(&self) -> Lambda {
        Lambda::new(self.alpha / self.mu)
    }
}

/// Full parameter set: initial quiet density `s0_star`, one coefficient
/// triple per opinion level `1, 2, ...`, and the truncation cap used by both
/// the analytic ladder and the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Spatially uniform initial density of the base level.
    pub s0_star: f64,
    /// Coefficients for levels `1..=opinions.len()`, in order.
    pub opinions: Vec<OpinionParams>,
    /// Truncation: the ladder iterates at most `cap` levels.
    pub cap: usize,
}

impl ModelParams {
    pub fn new(s0_star: f64, opinions: Vec<OpinionParams>, cap: usize) -> Self {
        Self { s0_star, opinions, cap }
    }

    /// Constant-coefficient shorthand: the same triple applied to every level
    /// up to `cap`.
    pub fn constant(s0_star: f64, shared: OpinionParams, cap: usize) -> Self {
        Self { s0_star, opinions: vec![shared; cap.max(1)], cap }
    }

    /// Coefficients of level `n` (1-based).
    ///
    /// Panics when `n` is zero (the base level has no coefficients) or past
    /// the provided list; [`validate_params`] reports such problems up front.
    pub fn opinion(&self, n: usize) -> &OpinionParams {
        assert!(n >= 1, "opinion levels are 1-based");
        &self.opinions[n - 1]
    }
}

/// Strictly positive ratio `lambda = alpha / mu` (1 / density). The product
/// `lambda * density` is the reproduction number deciding whether a level
/// spreads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lambda(f64);

impl Lambda {
    pub fn new(value: f64) -> Self {
        assert!(value > 0.0, "lambda must be strictly positive, got {value}");
        Self(value)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Highest level that still spreads. `AtLeastCap(cap)` is the honest answer
/// when the recursion was still running at the truncation cap: the true value
/// is `>= cap`, and a finite tool can only certify the lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxComplexity {
    Finite(usize),
    AtLeastCap(usize),
}

impl MaxComplexity {
    pub fn is_finite(self) -> bool {
        matches!(self, MaxComplexity::Finite(_))
    }

    /// Certified lower bound on the true value.
    pub fn lower_bound(self) -> usize {
        match self {
            MaxComplexity::Finite(n) | MaxComplexity::AtLeastCap(n) => n,
        }
    }
}

impl fmt::Display for MaxComplexity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaxComplexity::Finite(n) => write!(f, "{n}"),
            MaxComplexity::AtLeastCap(cap) => write!(f, ">= {cap} (truncated)"),
        }
    }
}

/// The analytic ladder: plateau densities `s_star[n]`, spreading speeds
/// `speeds[n-1] = c_n`, settled densities `daggers[n]`, reproduction numbers
/// `repro[n] = R_{n+1}`, and the maximal complexity.
///
/// For a finite maximal complexity `N`:
/// `plateaus.len() == N + 1`, `speeds.len() == N`, `daggers.len() == N + 1`
/// (the last dagger equals the last plateau) and `repro.len() == N + 1` with
/// `repro[N] <= 1 < repro[k]` for `k < N`. The daggers telescope:
/// their sum equals `plateaus[0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationSequences {
    pub plateaus: Vec<f64>,
    pub speeds: Vec<f64>,
    pub daggers: Vec<f64>,
    pub repro: Vec<f64>,
    pub n_star: MaxComplexity,
}

impl PropagationSequences {
    pub fn dagger_sum(&self) -> f64 {
        self.daggers.iter().sum()
    }
}

/// Outcome of [`validate_params`]: data, not an exception, so a caller can
/// print every problem at once.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub notes: Vec<String>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check every positivity constraint on `p`.
pub fn validate_params(p: &ModelParams) -> ValidationReport {
    let mut report = ValidationReport::default();
    if !p.s0_star.is_finite() || p.s0_star < 0.0 {
        report
            .violations
            .push(format!("s0_star must be finite and >= 0, got {}", p.s0_star));
    } else if p.s0_star == 0.0 {
        report
            .notes
            .push("s0_star = 0: the first reproduction number is 0, so the maximal complexity will be 0".into());
    }
    if p.opinions.is_empty() {
        report.violations.push("opinions must be non-empty".into());
    }
    if p.cap < 1 {
        report.violations.push("cap must be >= 1".into());
    }
    if !p.opinions.is_empty() && p.opinions.len() < p.cap {
        report.violations.push(format!(
            "cap = {} needs {} opinion triples, only {} provided",
            p.cap,
            p.cap,
            p.opinions.len()
        ));
    }
    for (i, op) in p.opinions.iter().enumerate() {
        let n = i + 1;
        for (name, v) in [("d", op.d), ("alpha", op.alpha), ("mu", op.mu)] {
            if !(v > 0.0) || !v.is_finite() {
                report.violations.push(format!("{name}[{n}] must be > 0"));
            }
        }
    }
    report
}

/// Result of [`check_speed_ordering`]. `first_violation` is the 1-based index
/// `k` of the first speed with `c_k >= c_{k-1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpeedOrderingReport {
    pub ok: bool,
    pub first_violation: Option<usize>,
}

/// The solver's front decomposition needs strictly decreasing speeds
/// `c_1 > c_2 > ...`: a faster inner front would catch up with the one ahead
/// of it. Constant coefficients satisfy this automatically.
pub fn check_speed_ordering(seq: &PropagationSequences) -> SpeedOrderingReport {
    for k in 1..seq.speeds.len() {
        if seq.speeds[k] >= seq.speeds[k - 1] {
            return SpeedOrderingReport { ok: false, first_violation: Some(k + 1) };
        }
    }
    SpeedOrderingReport { ok: true, first_violation: None }
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid needs nx >= 3, got {0}")]
    TooFewNodes(usize),
    #[error("grid half-length must be positive and finite, got {0}")]
    BadLength(f64),
}

/// Uniform grid of `nx` nodes on `[-half_length, half_length]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    half_length: f64,
    nx: usize,
    dx: f64,
}

impl Grid1D {
    pub fn new(half_length: f64, nx: usize) -> Result<Self, GridError> {
        if nx < 3 {
            return Err(GridError::TooFewNodes(nx));
        }
        if !(half_length > 0.0) || !half_length.is_finite() {
            return Err(GridError::BadLength(half_length));
        }
        let dx = 2.0 * half_length / (nx - 1) as f64;
        Ok(Self { half_length, nx, dx })
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Coordinate of node `i`: `-half_length + i * dx`.
    pub fn node(&self, i: usize) -> f64 {
        -self.half_length + i as f64 * self.dx
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.nx).map(|i| self.node(i))
    }
}

/// All fields of the truncated hierarchy at one instant.
///
/// `i`, `s` and `r` hold one array per simulated level `1..=n_sim`; `r[n-1]`
/// is the time integral of `mu_n * i_n`, node-wise non-decreasing in time and
/// zero at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub t: f64,
    pub s0: Vec<f64>,
    pub i: Vec<Vec<f64>>,
    pub s: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
}

impl FieldState {
    pub fn n_sim(&self) -> usize {
        self.i.len()
    }

    /// Quiet field of `opinion`: the base field for 0, `s[n-1]` for `n >= 1`.
    pub fn quiet(&self, opinion: usize) -> &[f64] {
        if opinion == 0 {
            &self.s0
        } else {
            &self.s[opinion - 1]
        }
    }

    /// Accumulator field `r_n` (1-based).
    pub fn accumulator(&self, opinion: usize) -> &[f64] {
        assert!(opinion >= 1, "accumulators exist for opinions >= 1");
        &self.r[opinion - 1]
    }
}

/// Time series of one opinion's front position, read from its accumulator
/// field at a fixed level.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontTrace {
    pub opinion: usize,
    /// `(t, x_front)` pairs, sorted by `t`.
    pub samples: Vec<(f64, f64)>,
    pub level: f64,
}
