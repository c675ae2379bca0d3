//! Command implementations behind the `sqg` binary.

// `!(a < b)` is used on purpose so that NaN fails the test.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod report;

use std::fs;
use std::path::{Path, PathBuf};

use sqg_core::contour::{extract_contour, Contour};
use sqg_core::geometry::{
    check_div_identity, geometry_from_theta, overlap_stats, region_a, region_b, GeometryError, RegionMask,
    DEFAULT_EPS_REL,
};
use sqg_core::growth::GrowthError;
use sqg_core::interp::Interpolation;
use sqg_core::io::{self, IoError};
use sqg_core::point::Point;
use sqg_core::solver::{RunError, Solver, SolverError};
use sqg_core::spectral::{Fourier, Grid, ScalarField, Spectrum};
use sqg_core::tracking::{
    argmax_gradient, cauchy_check, seed_chain, track_segment, Frame, SnapshotVelocity, TrackConfig, TrackingError,
    DEFAULT_JACOBIAN_DELTA,
};
use thiserror::Error;

pub use config::{ConfigError, Initial, RunConfig};

pub const GLOBAL_SERIES: &str = "global_series.csv";
pub const SEGMENT_SERIES: &str = "segment_series.csv";
pub const SNAPSHOT_DIR: &str = "snapshots";
pub const CONFIG_COPY: &str = "config.txt";
pub const DEFAULT_R: f64 = 2.0;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{0}")]
    Usage(String),
    #[error("{error}; last finite state written to {}", snapshot.display())]
    NonFinite { error: SolverError, snapshot: PathBuf },
    #[error(transparent)]
    Solver(SolverError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Tracking(#[from] TrackingError),
    #[error(transparent)]
    Growth(#[from] GrowthError),
    #[error("inequality checks failed: {}", .0.join("; "))]
    ChecksFailed(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) | CliError::Usage(_) | CliError::Solver(_) => 1,
            CliError::NonFinite { .. } => 2,
            CliError::Geometry(GeometryError::DegenerateField | GeometryError::MaskCrossing(_)) => 3,
            CliError::Geometry(_) => 1,
            CliError::Tracking(TrackingError::MaskCrossing { .. } | TrackingError::ChainTooShort { .. }) => 3,
            CliError::Tracking(TrackingError::Geometry(GeometryError::DegenerateField)) => 3,
            CliError::Tracking(_) => 1,
            CliError::Growth(GrowthError::AlignmentGap { .. } | GrowthError::RatioTooSmall { .. }) => 3,
            CliError::Growth(_) => 1,
            CliError::ChecksFailed(_) => 4,
        }
    }
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::Io(IoError::Io { path: path.to_path_buf(), source: e }))
}

fn snapshot_name(k: usize) -> String {
    format!("theta_{k:06}")
}

#[derive(Debug, Clone)]
pub struct SimulateSummary {
    pub out_dir: PathBuf,
    pub snapshots: usize,
    pub steps: u64,
    pub final_omega: f64,
}

/// Runs the solver for `cfg`, writing snapshots, the global series and a copy
/// of the configuration into `cfg.out_dir`.
pub fn simulate(cfg: &RunConfig) -> Result<SimulateSummary, CliError> {
    let snap_dir = cfg.out_dir.join(SNAPSHOT_DIR);
    create_dir(&snap_dir)?;
    io::write_atomic(&cfg.out_dir.join(CONFIG_COPY), cfg.render().as_bytes())?;
    let grid = Grid::new(cfg.n).map_err(|e| CliError::Usage(e.to_string()))?;
    let solver = Solver::new(grid);
    let theta0 = cfg.initial.field(grid);
    let mut written = 0usize;
    let outcome = solver.run_with(&cfg.solver_config(), &theta0, |t, theta| {
        let r = io::write_snapshot(&snap_dir.join(snapshot_name(written)), theta, t);
        written += 1;
        r
    });
    match outcome {
        Ok(out) => {
            io::write_global_series(&cfg.out_dir.join(GLOBAL_SERIES), &out.series)?;
            Ok(SimulateSummary {
                out_dir: cfg.out_dir.clone(),
                snapshots: written,
                steps: out.final_state.step_count,
                final_omega: out.series.samples.last().map_or(f64::NAN, |s| s.omega),
            })
        }
        Err(RunError::Diverged { error, last_good, series }) => {
            let path = snap_dir.join("last_good");
            io::write_snapshot(&path, &last_good.theta(solver.fourier()), last_good.t)?;
            io::write_global_series(&cfg.out_dir.join(GLOBAL_SERIES), &series)?;
            Err(CliError::NonFinite { error, snapshot: path })
        }
        Err(RunError::Solver(e)) => Err(CliError::Solver(e)),
        Err(RunError::Sink(e)) => Err(CliError::Io(e)),
    }
}

#[derive(Debug, Clone)]
pub struct DiagnoseSummary {
    pub out_dir: PathBuf,
    pub t: f64,
    pub stats_line: String,
    pub overlap_frac: f64,
    pub div_identity_residual: f64,
}

fn contour_or_empty(field: &ScalarField, level: f64) -> Vec<Vec<Point>> {
    extract_contour(field, level)
        .map(|c: Contour| c.polylines.into_iter().map(|p| p.points).collect())
        .unwrap_or_default()
}

fn indicator(mask: &RegionMask) -> ScalarField {
    let values = mask.member.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    ScalarField::new(mask.grid, values).expect("mask matches its grid")
}

/// Region masks, their boundaries, geometry fields and overlap statistics
/// for one snapshot. Output goes to `<snapshot>_diag/`.
pub fn diagnose(snapshot: &Path, fraction: f64, threshold: f64) -> Result<DiagnoseSummary, CliError> {
    let (theta, t) = io::read_snapshot(snapshot)?;
    let geom = geometry_from_theta(&theta, DEFAULT_EPS_REL)?;
    let a = region_a(&geom.magnitude, fraction)?;
    let b = region_b(&geom, threshold)?;
    let stats = overlap_stats(&a, &b)?;
    let residual = check_div_identity(&geom);

    let base = io::snapshot_base(snapshot);
    let mut name = base.file_name().unwrap_or_default().to_os_string();
    name.push("_diag");
    let out = base.with_file_name(name);
    create_dir(&out)?;
    io::write_mask(&out.join("mask_A.rle"), &a)?;
    io::write_mask(&out.join("mask_B.rle"), &b)?;
    io::write_polylines(&out.join("boundary_A.csv"), &contour_or_empty(&geom.magnitude, fraction * geom.max_magnitude))?;
    io::write_polylines(&out.join("boundary_B.csv"), &contour_or_empty(&indicator(&b), 0.5))?;
    io::write_snapshot(&out.join("curvature"), &geom.curvature, t)?;
    io::write_snapshot(&out.join("div_xi"), &geom.div_xi, t)?;
    io::write_snapshot(&out.join("grad_xi_norm"), &geom.grad_xi_norm, t)?;
    let stats_line = format!(
        "t={t:?} area_A={:?} area_B={:?} area_intersection={:?} overlap_frac={:?} div_identity_residual={residual:?}",
        stats.area_a, stats.area_b, stats.area_intersection, stats.frac
    );
    io::write_atomic(&out.join("stats.txt"), format!("{stats_line}\n").as_bytes())?;
    Ok(DiagnoseSummary { out_dir: out, t, stats_line, overlap_frac: stats.frac, div_identity_residual: residual })
}

#[derive(Debug, Clone)]
pub struct TraceSummary {
    pub out_dir: PathBuf,
    pub samples: usize,
    /// max over output times of the per-marker stretch deviation
    pub s_beta_max_dev: f64,
    pub cauchy_max_rel: f64,
    pub det_max_err: f64,
    pub events: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct TraceOptions {
    pub seed_time: f64,
    pub seed_length: f64,
    pub until: Option<f64>,
    /// defaults to the run directory
    pub out: Option<PathBuf>,
    pub scheme: Interpolation,
}

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(1.0)
}

/// Seeds a marker chain on the level set through the gradient maximum at
/// the seed time and follows it through the stored snapshots.
pub fn trace(dir: &Path, opts: &TraceOptions) -> Result<TraceSummary, CliError> {
    let snaps = io::list_snapshots(&dir.join(SNAPSHOT_DIR))?;
    let (Some(first), Some(last)) = (snaps.first(), snaps.last()) else {
        return Err(CliError::Usage(format!("no snapshots under {}", dir.display())));
    };
    let (lo, hi) = (first.0, last.0);
    let until = opts.until.unwrap_or(hi);
    for t in [opts.seed_time, until] {
        if t < lo - 1e-9 || t > hi + 1e-9 {
            return Err(TrackingError::OutOfRange { t, lo, hi }.into());
        }
    }
    if !(until > opts.seed_time) {
        return Err(CliError::Usage(format!("--until {until} must exceed --seed-time {}", opts.seed_time)));
    }
    let Some(seed_idx) = snaps.iter().position(|(t, _)| same_time(*t, opts.seed_time)) else {
        return Err(CliError::Usage(format!("no snapshot at t = {}", opts.seed_time)));
    };
    let mut end_idx = snaps.iter().rposition(|(t, _)| *t <= until + 1e-9).unwrap_or(seed_idx);
    if !same_time(snaps[end_idx].0, until) && end_idx + 1 < snaps.len() {
        end_idx += 1;
    }
    let window = &snaps[seed_idx..=end_idx];

    let mut spectra: Vec<(f64, Spectrum)> = Vec::with_capacity(window.len());
    let mut fourier: Option<Fourier> = None;
    for (t, path) in window {
        let (theta, _) = io::read_snapshot(path)?;
        let fo = fourier.get_or_insert_with(|| Fourier::new(theta.grid()));
        if fo.grid() != theta.grid() {
            return Err(CliError::Usage(format!("{} has a different grid size", path.display())));
        }
        spectra.push((*t, fo.forward(&theta)));
    }
    let fourier = fourier.expect("window is nonempty");
    let grid = fourier.grid();
    let vp = SnapshotVelocity::new(&spectra, opts.scheme)?;
    let u_max = spectra
        .iter()
        .map(|(_, s)| {
            let (a, b) = s.velocity();
            let (u1, u2) = fourier.inverse_pair(&a, &b);
            u1.zip_map(&u2, f64::hypot).max_abs()
        })
        .fold(0.0, f64::max);
    let dt = 0.5 * grid.h() / u_max.max(1e-12);
    let frame_at = |t: f64| -> Result<Frame, TrackingError> {
        let (_, s) = spectra
            .iter()
            .find(|(ts, _)| same_time(*ts, t))
            .ok_or(TrackingError::OutOfRange { t, lo, hi })?;
        Frame::new(&fourier, t, s, opts.scheme)
    };

    let seed_frame = frame_at(spectra[0].0)?;
    let (_, center) = argmax_gradient(&fourier, &spectra[0].1)?;
    let chain = seed_chain(&seed_frame, center, opts.seed_length, 0.5 * grid.h())?;
    let times: Vec<f64> = spectra.iter().map(|(t, _)| *t).collect();
    let result = track_segment(
        chain.clone(),
        &seed_frame,
        &times,
        &vp,
        frame_at,
        TrackConfig { dt, max_gap: 2.0 * grid.h() },
    )?;
    let cauchy = cauchy_check(&chain, &times, &vp, frame_at, DEFAULT_JACOBIAN_DELTA, dt, 1)?;

    let out = opts.out.clone().unwrap_or_else(|| dir.to_path_buf());
    let chain_dir = out.join("chains");
    create_dir(&chain_dir)?;
    io::write_segment_series(&out.join(SEGMENT_SERIES), &result.series)?;
    if out != dir {
        let glob = io::read_global_series(&dir.join(GLOBAL_SERIES))?;
        io::write_global_series(&out.join(GLOBAL_SERIES), &glob)?;
    }
    for (k, (_, pts)) in result.chains.iter().enumerate() {
        io::write_polylines(&chain_dir.join(format!("chain_{k:06}.csv")), std::slice::from_ref(pts))?;
    }
    let mut checks = String::from("t,s_beta_max_dev,cauchy_max_rel,det_max_err,n_markers\n");
    for ((sb, cr), smp) in result.s_beta.iter().zip(&cauchy).zip(&result.series.samples) {
        checks.push_str(&format!(
            "{:?},{:?},{:?},{:?},{}\n",
            sb.t, sb.max_deviation, cr.max_rel_error, cr.max_det_error, smp.n_markers
        ));
    }
    io::write_atomic(&out.join("trace_checks.csv"), checks.as_bytes())?;
    let mut events = result.events.join("\n");
    events.push('\n');
    io::write_atomic(&out.join("trace_events.txt"), events.as_bytes())?;

    Ok(TraceSummary {
        out_dir: out,
        samples: result.series.samples.len(),
        s_beta_max_dev: result.s_beta.iter().map(|c| c.max_deviation).fold(0.0, f64::max),
        cauchy_max_rel: cauchy.iter().map(|c| c.max_rel_error).fold(0.0, f64::max),
        det_max_err: cauchy.iter().map(|c| c.max_det_error).fold(0.0, f64::max),
        events: result.events,
    })
}

pub use report::{verify, VerifyOutcome};
