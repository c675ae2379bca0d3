//! Time integration of `θ_t + u·∇θ = 0` with the SQG velocity law.
//!
//! The state is advanced in Fourier space with classical RK4. Each tendency
//! evaluation truncates u and ∇θ to the 2/3 band before forming the product
//! on the grid and truncates the product again.

use thiserror::Error;

use crate::geometry::{geometry_from_spectrum, region_overlap, OverlapStats, DEFAULT_EPS_REL};
use crate::growth::{GlobalSample, GlobalSeries};
use num_complex::Complex64;

use crate::spectral::{Fourier, Grid, ScalarField, SpectralError, Spectrum, VectorField};

pub const DEFAULT_CFL_SAFETY: f64 = 1.0 / 6.0;
pub const DEFAULT_DT_MAX: f64 = 1e-2;
/// Floor on ‖u‖_∞ in the CFL formula.
pub const VELOCITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("non-finite values produced at t = {t}")]
    NonFinite { t: f64 },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Thresholds used for the per-sample region statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionSettings {
    pub fraction: f64,
    pub grad_xi_threshold: f64,
}

impl Default for RegionSettings {
    fn default() -> Self {
        Self {
            fraction: crate::geometry::DEFAULT_REGION_FRACTION,
            grad_xi_threshold: crate::geometry::DEFAULT_GRAD_XI_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub grid_n: usize,
    pub t_end: f64,
    pub cfl_safety: f64,
    pub dt_max: f64,
    pub snapshot_times: Vec<f64>,
    pub series_stride: usize,
    /// `None` skips the region statistics (recorded as NaN).
    pub regions: Option<RegionSettings>,
}

impl SolverConfig {
    pub fn new(grid_n: usize, t_end: f64) -> Self {
        Self {
            grid_n,
            t_end,
            cfl_safety: DEFAULT_CFL_SAFETY,
            dt_max: DEFAULT_DT_MAX,
            snapshot_times: Vec::new(),
            series_stride: 10,
            regions: Some(RegionSettings::default()),
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        Grid::new(self.grid_n)?;
        let bad = |m: &str| Err(SolverError::InvalidConfig(m.to_string()));
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return bad("cfl_safety must lie in (0, 1]");
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad("t_end must be positive and finite");
        }
        if !(self.dt_max > 0.0 && self.dt_max.is_finite()) {
            return bad("dt_max must be positive and finite");
        }
        if self.series_stride == 0 {
            return bad("series_stride must be at least 1");
        }
        if self.snapshot_times.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("snapshot_times must be strictly increasing");
        }
        if self.snapshot_times.iter().any(|&t| !(0.0..=self.t_end).contains(&t)) {
            return bad("snapshot_times must lie within [0, t_end]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    /// Dealiased Fourier coefficients of θ.
    pub theta_hat: Spectrum,
    pub t: f64,
    pub step_count: u64,
}

impl SolverState {
    pub fn new(fourier: &Fourier, theta0: &ScalarField) -> Self {
        Self { theta_hat: fourier.forward_dealiased(theta0), t: 0.0, step_count: 0 }
    }

    pub fn theta(&self, fourier: &Fourier) -> ScalarField {
        fourier.inverse(&self.theta_hat)
    }
}

/// One tendency evaluation plus the grid maxima it exposes for free.
#[derive(Debug, Clone)]
pub struct Tendency {
    pub rhs_hat: Spectrum,
    /// max |∇⊥θ| on the grid
    pub omega: f64,
    /// max |u| on the grid
    pub u_max: f64,
}

/// `dt = min(dt_max, safety · h / max(‖u‖_∞, ε_u))`, taking the scheme's CFL limit as 1.
pub fn cfl_dt(u_max: f64, grid: Grid, cfl_safety: f64, dt_max: f64) -> f64 {
    (cfl_safety * grid.h() / u_max.max(VELOCITY_FLOOR)).min(dt_max)
}

pub fn cfl_dt_for(u: &VectorField, cfl_safety: f64, dt_max: f64) -> f64 {
    cfl_dt(u.max_norm(), u.grid(), cfl_safety, dt_max)
}

/// Per-mode wavenumbers for the fused tendency evaluation.
#[derive(Debug, Clone)]
struct ModeTable {
    k1: Vec<f64>,
    k2: Vec<f64>,
    inv_k: Vec<f64>,
    keep: Vec<bool>,
}

impl ModeTable {
    fn new(grid: Grid) -> Self {
        let n = grid.n();
        let cut = grid.cutoff();
        let mut t = ModeTable { k1: vec![], k2: vec![], inv_k: vec![], keep: vec![] };
        for j in 0..n {
            let k2 = grid.wavenumber(j);
            for i in 0..n {
                let k1 = grid.wavenumber(i);
                let mag = ((k1 * k1 + k2 * k2) as f64).sqrt();
                t.k1.push(k1 as f64);
                t.k2.push(k2 as f64);
                t.inv_k.push(if mag > 0.0 { 1.0 / mag } else { 0.0 });
                t.keep.push(k1.abs() <= cut && k2.abs() <= cut);
            }
        }
        t
    }
}

#[derive(Debug, Clone)]
pub struct Solver {
    fourier: Fourier,
    modes: ModeTable,
}

impl Solver {
    pub fn new(grid: Grid) -> Self {
        Self { fourier: Fourier::new(grid), modes: ModeTable::new(grid) }
    }

    pub fn fourier(&self) -> &Fourier {
        &self.fourier
    }

    pub fn grid(&self) -> Grid {
        self.fourier.grid()
    }

    /// Spectral tendency `-P(u·∇θ)` for θ̂, which is truncated first.
    ///
    /// Velocity and gradient are synthesized as two packed complex transforms
    /// (`u₁ + i u₂` and `θ_x + i θ_y`).
    pub fn tendency(&self, theta_hat: &Spectrum) -> Result<Tendency, SolverError> {
        let m = &self.modes;
        let zero = Complex64::new(0.0, 0.0);
        let len = theta_hat.coefficients().len();
        let mut vel = vec![zero; len];
        let mut grad = vec![zero; len];
        for (idx, &c) in theta_hat.coefficients().iter().enumerate() {
            if !m.keep[idx] {
                continue;
            }
            let (k1, k2) = (m.k1[idx], m.k2[idx]);
            // i·c
            let ic = Complex64::new(-c.im, c.re);
            let q = m.inv_k[idx];
            let u1 = ic * (k2 * q);
            let u2 = -ic * (k1 * q);
            vel[idx] = u1 + Complex64::new(-u2.im, u2.re);
            let tx = ic * k1;
            let ty = ic * k2;
            grad[idx] = tx + Complex64::new(-ty.im, ty.re);
        }
        let vel = self.fourier.inverse_raw(vel);
        let grad = self.fourier.inverse_raw(grad);
        let mut omega = 0.0_f64;
        let mut u_max = 0.0_f64;
        let mut finite = true;
        let product: Vec<Complex64> = vel
            .iter()
            .zip(&grad)
            .map(|(v, g)| {
                omega = omega.max(g.re.hypot(g.im));
                u_max = u_max.max(v.re.hypot(v.im));
                let p = v.re * g.re + v.im * g.im;
                finite &= p.is_finite();
                Complex64::new(-p, 0.0)
            })
            .collect();
        if !(finite && omega.is_finite() && u_max.is_finite()) {
            return Err(SolverError::NonFinite { t: f64::NAN });
        }
        let rhs_hat = self.fourier.forward_raw(product, true);
        Ok(Tendency { rhs_hat, omega, u_max })
    }

    /// Grid-space tendency `-u·∇θ`.
    pub fn rhs(&self, theta: &ScalarField) -> Result<ScalarField, SolverError> {
        let t = self.tendency(&self.fourier.forward(theta))?;
        Ok(self.fourier.inverse(&t.rhs_hat))
    }

    /// Classical RK4 step of length `dt`.
    pub fn rk4_step(&self, state: &mut SolverState, dt: f64) -> Result<(), SolverError> {
        let first = self.tendency(&state.theta_hat).map_err(|e| with_time(e, state.t))?;
        self.rk4_step_from(state, dt, &first)
    }

    fn rk4_step_from(&self, state: &mut SolverState, dt: f64, k1: &Tendency) -> Result<(), SolverError> {
        let t = state.t;
        let y = &state.theta_hat;
        let stage = |y: &Spectrum| self.tendency(y).map(|s| s.rhs_hat).map_err(|e| with_time(e, t));
        let k1 = &k1.rhs_hat;
        let k2 = stage(&y.add_scaled(k1, 0.5 * dt))?;
        let k3 = stage(&y.add_scaled(&k2, 0.5 * dt))?;
        let k4 = stage(&y.add_scaled(&k3, dt))?;
        let mut next = y.clone();
        let c = dt / 6.0;
        for (idx, out) in next.coefficients_mut().iter_mut().enumerate() {
            *out += (k1.coefficients()[idx]
                + 2.0 * k2.coefficients()[idx]
                + 2.0 * k3.coefficients()[idx]
                + k4.coefficients()[idx])
                * c;
        }
        if !next.is_finite() {
            return Err(SolverError::NonFinite { t: t + dt });
        }
        state.theta_hat = next;
        state.t = t + dt;
        state.step_count += 1;
        Ok(())
    }

    /// Region statistics at the current state (NaN fields when disabled or degenerate).
    fn region_stats(&self, theta_hat: &Spectrum, settings: Option<RegionSettings>) -> OverlapStats {
        let nan = OverlapStats { area_a: f64::NAN, area_b: f64::NAN, area_intersection: f64::NAN, frac: f64::NAN };
        let Some(s) = settings else { return nan };
        match geometry_from_spectrum(&self.fourier, theta_hat, DEFAULT_EPS_REL) {
            Ok(geom) => region_overlap(&geom, s.fraction, s.grad_xi_threshold).unwrap_or(nan),
            Err(_) => OverlapStats { area_a: 0.0, area_b: 0.0, area_intersection: 0.0, frac: 0.0 },
        }
    }

    /// Integrates from `theta0` to `config.t_end`.
    ///
    /// `on_snapshot` receives every requested snapshot time exactly (steps are
    /// shortened to land on them). The series gets a sample every
    /// `series_stride` steps and at `t_end`.
    pub fn run_with<E>(
        &self,
        config: &SolverConfig,
        theta0: &ScalarField,
        mut on_snapshot: impl FnMut(f64, &ScalarField) -> Result<(), E>,
    ) -> Result<RunOutcome, RunError<E>> {
        config.validate().map_err(RunError::Solver)?;
        if theta0.grid() != self.grid() {
            return Err(RunError::Solver(SolverError::InvalidConfig(format!(
                "initial field has n = {}, config expects {}",
                theta0.grid().n(),
                config.grid_n
            ))));
        }
        let mut state = SolverState::new(&self.fourier, theta0);
        let mut series = GlobalSeries::default();
        let mut pending = config.snapshot_times.iter().copied().peekable();
        let mut bkm = 0.0;
        let mut last: Option<(f64, f64)> = None;
        let land_tol = 1e-12 * config.t_end.max(1.0);

        loop {
            let current = match self.tendency(&state.theta_hat) {
                Ok(c) => c,
                Err(e) => return Err(diverged(with_time(e, state.t), state, series)),
            };
            if let Some((t_prev, omega_prev)) = last {
                bkm += 0.5 * (state.t - t_prev) * (current.omega + omega_prev);
            }
            last = Some((state.t, current.omega));

            while let Some(&ts) = pending.peek() {
                if ts <= state.t + land_tol {
                    on_snapshot(state.t, &state.theta(&self.fourier)).map_err(RunError::Sink)?;
                    pending.next();
                } else {
                    break;
                }
            }

            let done = state.t >= config.t_end - land_tol;
            if done || state.step_count.is_multiple_of(config.series_stride as u64) {
                let stats = self.region_stats(&state.theta_hat, config.regions);
                series.samples.push(GlobalSample {
                    t: state.t,
                    omega: current.omega,
                    u_max: current.u_max,
                    bkm,
                    area_a: stats.area_a,
                    area_b: stats.area_b,
                    overlap_frac: stats.frac,
                });
            }
            if done {
                break;
            }

            let mut dt = cfl_dt(current.u_max, self.grid(), config.cfl_safety, config.dt_max);
            let mut target = config.t_end;
            if let Some(&ts) = pending.peek() {
                target = target.min(ts);
            }
            let landing = state.t + dt >= target - land_tol;
            if landing {
                dt = target - state.t;
            }
            if let Err(e) = self.rk4_step_from(&mut state, dt, &current) {
                return Err(diverged(e, state, series));
            }
            if landing {
                // remove drift from repeated addition so the landing time is exact
                state.t = target;
            }
        }
        Ok(RunOutcome { final_state: state, series })
    }

    /// [`Solver::run_with`] collecting snapshots in memory.
    pub fn run(&self, config: &SolverConfig, theta0: &ScalarField) -> Result<RunOutput, SolverError> {
        let mut snapshots = Vec::new();
        let outcome = self
            .run_with(config, theta0, |t, theta| {
                snapshots.push((t, theta.clone()));
                Ok::<(), std::convert::Infallible>(())
            })
            .map_err(|e| match e {
                RunError::Solver(s) | RunError::Diverged { error: s, .. } => s,
                RunError::Sink(never) => match never {},
            })?;
        Ok(RunOutput { snapshots, series: outcome.series, final_state: outcome.final_state })
    }
}

fn with_time(e: SolverError, t: f64) -> SolverError {
    match e {
        SolverError::NonFinite { t: tt } if tt.is_nan() => SolverError::NonFinite { t },
        other => other,
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub final_state: SolverState,
    pub series: GlobalSeries,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub snapshots: Vec<(f64, ScalarField)>,
    pub series: GlobalSeries,
    pub final_state: SolverState,
}

#[derive(Debug)]
pub enum RunError<E> {
    Solver(SolverError),
    Sink(E),
    /// The integration failed after `last_good` was accepted.
    Diverged { error: SolverError, last_good: Box<SolverState>, series: GlobalSeries },
}

fn diverged<E>(error: SolverError, state: SolverState, series: GlobalSeries) -> RunError<E> {
    RunError::Diverged { error, last_good: Box::new(state), series }
}

impl<E: std::fmt::Display> std::fmt::Display for RunError<E> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Solver(e) => write!(f, "{e}"),
            RunError::Sink(e) => write!(f, "snapshot sink failed: {e}"),
            RunError::Diverged { error, last_good, .. } => {
                write!(f, "{error} (last finite state at t = {})", last_good.t)
            }
        }
    }
}

impl<E: std::fmt::Debug + std::fmt::Display> std::error::Error for RunError<E> {}

/// Named initial conditions.
pub mod presets {
    use crate::spectral::{Grid, ScalarField};

    /// `sin x₁ sin x₂ + cos x₂`, the saddle-bearing data used for the growth study.
    pub fn cmt(grid: Grid) -> ScalarField {
        ScalarField::from_fn(grid, |x, y| x.sin() * y.sin() + y.cos())
    }

    pub fn zero(grid: Grid) -> ScalarField {
        ScalarField::zeros(grid)
    }

    /// Sum of `a·cos(k₁x₁ + k₂x₂) + b·sin(k₁x₁ + k₂x₂)` terms.
    pub fn modes(grid: Grid, terms: &[(i64, i64, f64, f64)]) -> ScalarField {
        ScalarField::from_fn(grid, |x, y| {
            terms
                .iter()
                .map(|&(k1, k2, a, b)| {
                    let phase = k1 as f64 * x + k2 as f64 * y;
                    a * phase.cos() + b * phase.sin()
                })
                .sum()
        })
    }
}
