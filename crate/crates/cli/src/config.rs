//! Flat `key = value` configuration files.
//!
//! The format is deliberately primitive so that every consumer parses it
//! identically: one assignment per line, `#` starts a comment, arrays are
//! comma-separated. `docs/config.md` documents every key.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use opinion_cascade::model::{Grid1D, ModelParams, OpinionParams};
use opinion_cascade::solver::{BumpSpec, Scheme, SolverConfig};

use crate::CliError;

#[derive(Debug, Clone)]
pub struct LabConfig {
    pub model: ModelParams,
    /// Per-level lists were given explicitly (the sweep needs the constant
    /// shorthand instead).
    pub explicit_lists: bool,
    pub tol: f64,
    pub half_length: f64,
    pub nx: usize,
    pub t_end: f64,
    pub cfl_safety: f64,
    /// 0 means "one level above the maximal complexity".
    pub n_sim: usize,
    pub snapshot_times: Vec<f64>,
    pub bump: BumpSpec,
    pub scheme: Scheme,
    pub front_level_fraction: f64,
    pub speed_window: f64,
    pub plateau_inset: f64,
    pub vanish_delta: f64,
    pub settled_margin: f64,
    pub sweep_start: f64,
    pub sweep_stop: f64,
    pub sweep_step: f64,
}

impl LabConfig {
    pub fn grid(&self) -> Result<Grid1D, CliError> {
        Grid1D::new(self.half_length, self.nx)
            .map_err(|e| CliError::Validation(e.to_string()))
    }

    /// The constant-parameter triple, or an error when explicit lists were
    /// configured.
    pub fn constant_template(&self) -> Result<OpinionParams, CliError> {
        if self.explicit_lists {
            return Err(CliError::Validation(
                "this command needs the constant-parameter shorthand (d, alpha, mu), \
                 not per-level lists"
                    .into(),
            ));
        }
        Ok(self.model.opinions[0].clone())
    }

    pub fn solver_config(&self, n_sim: usize) -> Result<SolverConfig, CliError> {
        Ok(SolverConfig {
            grid: self.grid()?,
            t_end: self.t_end,
            cfl_safety: self.cfl_safety,
            snapshot_times: self.snapshot_times.clone(),
            n_sim,
            bumps: vec![self.bump.clone(); n_sim],
        })
    }

    pub fn sweep_values(&self) -> Vec<f64> {
        let mut values = Vec::new();
        let mut k = 0usize;
        loop {
            let v = self.sweep_start + self.sweep_step * k as f64;
            if v > self.sweep_stop + 1e-9 * self.sweep_step.abs() {
                break;
            }
            values.push(v);
            k += 1;
        }
        values
    }
}

const KNOWN_KEYS: &[&str] = &[
    "s0_star", "cap", "d", "alpha", "mu", "d_list", "alpha_list", "mu_list", "tol",
    "half_length", "nx", "t_end", "cfl_safety", "n_sim", "snapshot_every", "snapshot_times",
    "bump_height", "bump_half_width", "bump_center", "scheme", "front_level_fraction",
    "speed_window", "plateau_inset", "vanish_delta", "settled_margin", "sweep_start",
    "sweep_stop", "sweep_step",
];

struct Raw {
    map: BTreeMap<String, String>,
    problems: Vec<String>,
}

impl Raw {
    fn get_f64(&mut self, key: &str, default: f64) -> f64 {
        match self.map.get(key) {
            None => default,
            Some(v) => match v.parse() {
                Ok(x) => x,
                Err(_) => {
                    self.problems.push(format!("{key}: not a number: `{v}`"));
                    default
                }
            },
        }
    }

    fn get_usize(&mut self, key: &str, default: usize) -> usize {
        match self.map.get(key) {
            None => default,
            Some(v) => match v.parse() {
                Ok(x) => x,
                Err(_) => {
                    self.problems.push(format!("{key}: not a non-negative integer: `{v}`"));
                    default
                }
            },
        }
    }

    fn get_list(&mut self, key: &str) -> Option<Vec<f64>> {
        let raw = self.map.get(key)?.clone();
        let mut out = Vec::new();
        for item in raw.split(',') {
            match item.trim().parse() {
                Ok(x) => out.push(x),
                Err(_) => {
                    self.problems.push(format!("{key}: not a number: `{}`", item.trim()));
                    return None;
                }
            }
        }
        Some(out)
    }
}

pub fn parse(text: &str) -> Result<LabConfig, CliError> {
    let mut map = BTreeMap::new();
    let mut problems = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        match line.split_once('=') {
            Some((key, value)) => {
                let key = key.trim().to_string();
                if !KNOWN_KEYS.contains(&key.as_str()) {
                    problems.push(format!("line {}: unknown key `{key}`", idx + 1));
                } else if map.insert(key.clone(), value.trim().to_string()).is_some() {
                    problems.push(format!("line {}: duplicate key `{key}`", idx + 1));
                }
            }
            None => problems.push(format!("line {}: expected `key = value`", idx + 1)),
        }
    }
    let mut raw = Raw { map, problems };

    let s0_star = raw.get_f64("s0_star", 2.0);
    let cap = raw.get_usize("cap", 10);
    let d_list = raw.get_list("d_list");
    let alpha_list = raw.get_list("alpha_list");
    let mu_list = raw.get_list("mu_list");
    let explicit_lists = d_list.is_some() || alpha_list.is_some() || mu_list.is_some();
    let model = if explicit_lists {
        match (d_list, alpha_list, mu_list) {
            (Some(d), Some(a), Some(m)) if d.len() == a.len() && a.len() == m.len() => {
                let opinions = d
                    .into_iter()
                    .zip(a)
                    .zip(m)
                    .map(|((d, alpha), mu)| OpinionParams::new(d, alpha, mu))
                    .collect();
                ModelParams::new(s0_star, opinions, cap)
            }
            _ => {
                raw.problems.push(
                    "d_list, alpha_list and mu_list must all be present with equal lengths"
                        .into(),
                );
                ModelParams::constant(s0_star, OpinionParams::new(1.0, 1.0, 1.0), cap)
            }
        }
    } else {
        let d = raw.get_f64("d", 1.0);
        let alpha = raw.get_f64("alpha", 1.0);
        let mu = raw.get_f64("mu", 1.0);
        ModelParams::constant(s0_star, OpinionParams::new(d, alpha, mu), cap)
    };

    let t_end = raw.get_f64("t_end", 60.0);
    let snapshot_times = match raw.get_list("snapshot_times") {
        Some(times) => times,
        None => {
            let every = raw.get_f64("snapshot_every", 2.5);
            let mut times = Vec::new();
            if every > 0.0 {
                let mut k = 0usize;
                loop {
                    let t = every * k as f64;
                    if t > t_end + 1e-9 * every {
                        break;
                    }
                    times.push(t.min(t_end));
                    k += 1;
                }
            }
            if times.last().map_or(true, |&t| t < t_end - 1e-9 * every.max(1.0)) {
                times.push(t_end);
            }
            times
        }
    };

    let bump = BumpSpec {
        center: raw.get_f64("bump_center", 0.0),
        half_width: raw.get_f64("bump_half_width", 2.0),
        height: raw.get_f64("bump_height", 0.01 * s0_star),
    };

    let scheme = match raw.map.get("scheme").map(|s| s.as_str()).unwrap_or("euler") {
        "euler" => Scheme::Euler,
        "rk2" => Scheme::Rk2,
        other => {
            raw.problems.push(format!("scheme: expected euler or rk2, got `{other}`"));
            Scheme::Euler
        }
    };

    let cfg = LabConfig {
        model,
        explicit_lists,
        tol: raw.get_f64("tol", 1e-12),
        half_length: raw.get_f64("half_length", 150.0),
        nx: raw.get_usize("nx", 3001),
        t_end,
        cfl_safety: raw.get_f64("cfl_safety", 0.9),
        n_sim: raw.get_usize("n_sim", 0),
        snapshot_times,
        bump,
        scheme,
        front_level_fraction: raw.get_f64("front_level_fraction", 0.5),
        speed_window: raw.get_f64("speed_window", 0.5),
        plateau_inset: raw.get_f64("plateau_inset", 0.15),
        vanish_delta: raw.get_f64("vanish_delta", 30.0),
        settled_margin: raw.get_f64("settled_margin", 5.0),
        sweep_start: raw.get_f64("sweep_start", 0.5),
        sweep_stop: raw.get_f64("sweep_stop", 8.0),
        sweep_step: raw.get_f64("sweep_step", 0.05),
    };

    if raw.problems.is_empty() {
        Ok(cfg)
    } else {
        let mut msg = String::from("configuration problems:");
        for p in &raw.problems {
            let _ = write!(msg, "\n  - {p}");
        }
        Err(CliError::Validation(msg))
    }
}

pub fn default_config() -> LabConfig {
    parse("").expect("defaults parse")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_describe_the_reference_run() {
        let cfg = default_config();
        assert_eq!(cfg.model.s0_star, 2.0);
        assert_eq!(cfg.model.cap, 10);
        assert_eq!(cfg.nx, 3001);
        assert_eq!(cfg.snapshot_times.len(), 25);
        assert_eq!(cfg.bump.height, 0.02);
        assert_eq!(cfg.n_sim, 0);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = parse("# a comment\n\ns0_star = 4.0  # trailing\ncap = 20\n").unwrap();
        assert_eq!(cfg.model.s0_star, 4.0);
        assert_eq!(cfg.model.cap, 20);
        assert_eq!(cfg.bump.height, 0.04);
    }

    #[test]
    fn unknown_and_duplicate_keys_are_all_reported() {
        let err = parse("s0_star = 1\ns0_star = 2\nwhatever = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("duplicate key `s0_star`"));
        assert!(msg.contains("unknown key `whatever`"));
    }

    #[test]
    fn explicit_lists_build_per_level_coefficients() {
        let cfg = parse("d_list = 1,1\nalpha_list = 4,8\nmu_list = 1,1\ncap = 2\n").unwrap();
        assert!(cfg.explicit_lists);
        assert_eq!(cfg.model.opinions.len(), 2);
        assert_eq!(cfg.model.opinions[1].alpha, 8.0);
        assert!(cfg.constant_template().is_err());
        assert!(parse("d_list = 1,1\nalpha_list = 4\nmu_list = 1,1\n").is_err());
    }

    #[test]
    fn sweep_values_cover_the_closed_range() {
        let cfg = parse("sweep_start = 0.5\nsweep_stop = 2.0\nsweep_step = 0.5\n").unwrap();
        assert_eq!(cfg.sweep_values(), vec![0.5, 1.0, 1.5, 2.0]);
    }
}
