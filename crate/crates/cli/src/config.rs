//! `key = value` run configuration.

use std::path::{Path, PathBuf};

use sqg_core::solver::{presets, SolverConfig, DEFAULT_CFL_SAFETY, DEFAULT_DT_MAX};
use sqg_core::spectral::{Grid, ScalarField};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{path}: {reason}")]
    Read { path: String, reason: String },
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("missing required key '{0}'")]
    Missing(&'static str),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Initial {
    Cmt,
    Zero,
    /// `(k1, k2, a, b)`: `a·cos(k·x) + b·sin(k·x)`
    Modes(Vec<(i64, i64, f64, f64)>),
}

impl Initial {
    pub fn field(&self, grid: Grid) -> ScalarField {
        match self {
            Initial::Cmt => presets::cmt(grid),
            Initial::Zero => presets::zero(grid),
            Initial::Modes(m) => presets::modes(grid, m),
        }
    }

    fn render(&self) -> String {
        match self {
            Initial::Cmt => "cmt".into(),
            Initial::Zero => "zero".into(),
            Initial::Modes(m) => m
                .iter()
                .map(|(k1, k2, a, b)| format!("{k1} {k2} {a:?} {b:?}"))
                .collect::<Vec<_>>()
                .join("; "),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    pub t_end: f64,
    pub cfl_safety: f64,
    pub dt_max: f64,
    pub snapshot_every: f64,
    pub series_stride: usize,
    pub initial: Initial,
    pub out_dir: PathBuf,
    pub region_fraction: f64,
    pub grad_xi_threshold: f64,
    pub seed_time: Option<f64>,
    pub seed_length: Option<f64>,
    pub partition_r: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.display().to_string(), reason: e.to_string() })?;
        let mut cfg = Self::parse(&text)?;
        if cfg.out_dir.is_relative() {
            if let Some(parent) = path.parent() {
                cfg.out_dir = parent.join(&cfg.out_dir);
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut n = None;
        let mut t_end = None;
        let mut initial = None;
        let mut cfg = RunConfig {
            n: 0,
            t_end: 0.0,
            cfl_safety: DEFAULT_CFL_SAFETY,
            dt_max: DEFAULT_DT_MAX,
            snapshot_every: 0.05,
            series_stride: 10,
            initial: Initial::Zero,
            out_dir: PathBuf::from("run"),
            region_fraction: 0.5,
            grad_xi_threshold: 10.0,
            seed_time: None,
            seed_length: None,
            partition_r: None,
        };
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| ConfigError::Line { line: line_no, msg };
            let Some((key, value)) = line.split_once('=') else {
                return Err(err(format!("expected 'key = value', got '{line}'")));
            };
            let (key, value) = (key.trim(), value.trim());
            let float = || -> Result<f64, ConfigError> {
                value
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(format!("{key}: '{value}' is not a finite number")))
            };
            let count = || -> Result<usize, ConfigError> {
                value.parse::<usize>().map_err(|_| err(format!("{key}: '{value}' is not a nonnegative integer")))
            };
            match key {
                "n" => n = Some(count()?),
                "t_end" => t_end = Some(float()?),
                "cfl_safety" => cfg.cfl_safety = float()?,
                "dt_max" => cfg.dt_max = float()?,
                "snapshot_every" => cfg.snapshot_every = float()?,
                "series_stride" => cfg.series_stride = count()?,
                "initial" => initial = Some(parse_initial(value).map_err(err)?),
                "out_dir" => cfg.out_dir = PathBuf::from(value),
                "region_fraction" => cfg.region_fraction = float()?,
                "grad_xi_threshold" => cfg.grad_xi_threshold = float()?,
                "seed_time" => cfg.seed_time = Some(float()?),
                "seed_length" => cfg.seed_length = Some(float()?),
                "partition_r" => cfg.partition_r = Some(float()?),
                _ => return Err(err(format!("unknown key '{key}'"))),
            }
        }
        cfg.n = n.ok_or(ConfigError::Missing("n"))?;
        cfg.t_end = t_end.ok_or(ConfigError::Missing("t_end"))?;
        cfg.initial = initial.ok_or(ConfigError::Missing("initial"))?;
        if !(cfg.snapshot_every > 0.0) {
            return Err(ConfigError::Invalid(format!("snapshot_every = {} must be positive", cfg.snapshot_every)));
        }
        if !(cfg.region_fraction > 0.0 && cfg.region_fraction < 1.0) {
            return Err(ConfigError::Invalid(format!("region_fraction = {} must lie in (0, 1)", cfg.region_fraction)));
        }
        cfg.solver_config().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }

    /// Snapshot times `k·snapshot_every` up to and including `t_end`.
    pub fn snapshot_times(&self) -> Vec<f64> {
        let count = (self.t_end / self.snapshot_every * (1.0 + 1e-12)).floor() as usize;
        let mut times: Vec<f64> = (0..=count).map(|k| k as f64 * self.snapshot_every).collect();
        if let Some(&last) = times.last() {
            if self.t_end - last > 1e-12 * self.t_end.max(1.0) {
                times.push(self.t_end);
            }
        }
        times
    }

    pub fn solver_config(&self) -> SolverConfig {
        let mut c = SolverConfig::new(self.n, self.t_end);
        c.cfl_safety = self.cfl_safety;
        c.dt_max = self.dt_max;
        c.series_stride = self.series_stride;
        c.snapshot_times = self.snapshot_times();
        c.regions = Some(sqg_core::solver::RegionSettings {
            fraction: self.region_fraction,
            grad_xi_threshold: self.grad_xi_threshold,
        });
        c
    }

    /// Canonical text form; parses back to the same config (with `out_dir` as given).
    pub fn render(&self) -> String {
        let mut s = format!(
            "n = {}\nt_end = {:?}\ncfl_safety = {:?}\ndt_max = {:?}\nsnapshot_every = {:?}\nseries_stride = {}\ninitial = {}\nout_dir = {}\nregion_fraction = {:?}\ngrad_xi_threshold = {:?}\n",
            self.n,
            self.t_end,
            self.cfl_safety,
            self.dt_max,
            self.snapshot_every,
            self.series_stride,
            self.initial.render(),
            self.out_dir.display(),
            self.region_fraction,
            self.grad_xi_threshold,
        );
        for (k, v) in [("seed_time", self.seed_time), ("seed_length", self.seed_length), ("partition_r", self.partition_r)] {
            if let Some(v) = v {
                s.push_str(&format!("{k} = {v:?}\n"));
            }
        }
        s
    }
}

/// `cmt`, `zero`, or `k1 k2 a b; k1 k2 a b; ...`.
fn parse_initial(value: &str) -> Result<Initial, String> {
    match value {
        "cmt" => return Ok(Initial::Cmt),
        "zero" => return Ok(Initial::Zero),
        _ => {}
    }
    let mut modes = Vec::new();
    for term in value.split(';').map(str::trim).filter(|t| !t.is_empty()) {
        let parts: Vec<&str> = term.split(|c: char| c == ',' || c.is_whitespace()).filter(|p| !p.is_empty()).collect();
        let bad = || format!("initial: expected 'k1 k2 a b', got '{term}'");
        if parts.len() != 4 {
            return Err(bad());
        }
        let k1: i64 = parts[0].parse().map_err(|_| bad())?;
        let k2: i64 = parts[1].parse().map_err(|_| bad())?;
        let a: f64 = parts[2].parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(bad)?;
        let b: f64 = parts[3].parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(bad)?;
        modes.push((k1, k2, a, b));
    }
    if modes.is_empty() {
        return Err(format!("initial: unknown preset '{value}'"));
    }
    Ok(Initial::Modes(modes))
}
