//! Lagrangian trajectories, flow-map checks and material tracking of
//! level-set segments.

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{geometry_from_spectrum, GeometryError, LocalGeometry, DEFAULT_EPS_REL};
use crate::growth::{GlobalSeries, InequalityCheck, SegmentSample, SegmentSeries};
use crate::interp::{Interpolation, JetField, VelocitySampler};
use crate::point::{polyline_length, Point};
use crate::spectral::{Fourier, Spectrum};

pub const DEFAULT_JACOBIAN_DELTA: f64 = 1e-4;
pub const MIN_CHAIN: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackingError {
    #[error("marker at {point:?} left the validity mask at t = {t}")]
    MaskCrossing { t: f64, point: Point },
    #[error("only {survivors} markers remain at t = {t}; at least {MIN_CHAIN} are required")]
    ChainTooShort { t: f64, survivors: usize },
    #[error("time {t} outside the velocity range [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Time-dependent velocity field that can be sampled concurrently.
pub trait VelocityProvider: Sync {
    fn time_range(&self) -> (f64, f64);

    /// Times where the field is only piecewise smooth; integrators step onto them.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    fn velocity(&self, t: f64, p: Point) -> Point;

    fn velocities(&self, t: f64, ps: &[Point]) -> Vec<Point> {
        ps.par_iter().map(|&p| self.velocity(t, p)).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroVelocity {
    pub range: (f64, f64),
}

impl VelocityProvider for ZeroVelocity {
    fn time_range(&self) -> (f64, f64) {
        self.range
    }

    fn velocity(&self, _t: f64, _p: Point) -> Point {
        Point::default()
    }
}

/// Velocity given by a closure of (t, x).
pub struct FnVelocity<F> {
    pub range: (f64, f64),
    pub f: F,
}

impl<F: Fn(f64, Point) -> Point + Sync> VelocityProvider for FnVelocity<F> {
    fn time_range(&self) -> (f64, f64) {
        self.range
    }

    fn velocity(&self, t: f64, p: Point) -> Point {
        (self.f)(t, p)
    }
}

/// Stored θ snapshots; velocity is linear in time between them.
#[derive(Debug, Clone)]
pub struct SnapshotVelocity {
    times: Vec<f64>,
    frames: Vec<VelocitySampler>,
}

impl SnapshotVelocity {
    /// `frames` must be sorted by time with at least one entry.
    pub fn new(frames: &[(f64, Spectrum)], scheme: Interpolation) -> Result<Self, TrackingError> {
        if frames.is_empty() {
            return Err(TrackingError::InvalidParameter("no velocity frames".into()));
        }
        if frames.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(TrackingError::InvalidParameter("frame times must increase".into()));
        }
        let samplers: Vec<VelocitySampler> =
            frames.par_iter().map(|(_, s)| VelocitySampler::new(s, scheme)).collect();
        Ok(Self { times: frames.iter().map(|f| f.0).collect(), frames: samplers })
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.times.len();
        if n == 1 {
            return (0, 0.0);
        }
        let i = self.times.partition_point(|&x| x <= t).clamp(1, n - 1);
        let (a, b) = (self.times[i - 1], self.times[i]);
        (i - 1, ((t - a) / (b - a)).clamp(0.0, 1.0))
    }
}

impl VelocityProvider for SnapshotVelocity {
    fn time_range(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().unwrap())
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.times.clone()
    }

    fn velocity(&self, t: f64, p: Point) -> Point {
        let (i, w) = self.locate(t);
        if w == 0.0 {
            self.frames[i].velocity(p)
        } else if w == 1.0 {
            self.frames[i + 1].velocity(p)
        } else {
            VelocitySampler::blend(&self.frames[i], &self.frames[i + 1], w, p)
        }
    }
}

/// Runs `inner` backwards: `ũ(s, x) = −u(pivot − s, x)`.
pub struct Reversed<'a, V: ?Sized> {
    pub inner: &'a V,
    pub pivot: f64,
}

impl<V: VelocityProvider + ?Sized> VelocityProvider for Reversed<'_, V> {
    fn time_range(&self) -> (f64, f64) {
        let (lo, hi) = self.inner.time_range();
        (self.pivot - hi, self.pivot - lo)
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.inner.breakpoints().iter().map(|t| self.pivot - t).collect();
        b.reverse();
        b
    }

    fn velocity(&self, t: f64, p: Point) -> Point {
        self.inner.velocity(self.pivot - t, p) * -1.0
    }

    fn velocities(&self, t: f64, ps: &[Point]) -> Vec<Point> {
        self.inner.velocities(self.pivot - t, ps).into_iter().map(|v| v * -1.0).collect()
    }
}

fn check_range(vp: &dyn VelocityProvider, t: f64) -> Result<(), TrackingError> {
    let (lo, hi) = vp.time_range();
    let tol = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
    if t < lo - tol || t > hi + tol {
        return Err(TrackingError::OutOfRange { t, lo, hi });
    }
    Ok(())
}

/// Step times from `t0` to `t1`: every breakpoint and extra knot in between is
/// hit exactly, and each knot interval is split into equal steps no longer than `dt`.
pub fn schedule(
    t0: f64,
    t1: f64,
    vp: &dyn VelocityProvider,
    dt: f64,
    extra_knots: &[f64],
) -> Result<Vec<f64>, TrackingError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(TrackingError::InvalidParameter(format!("dt = {dt} must be positive")));
    }
    if !(t1 >= t0) {
        return Err(TrackingError::InvalidParameter(format!("t1 = {t1} precedes t0 = {t0}")));
    }
    check_range(vp, t0)?;
    check_range(vp, t1)?;
    let mut knots: Vec<f64> = vp
        .breakpoints()
        .into_iter()
        .chain(extra_knots.iter().copied())
        .filter(|&t| t > t0 && t < t1)
        .collect();
    knots.push(t1);
    knots.sort_by(f64::total_cmp);
    knots.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
    let mut times = vec![t0];
    for &k in &knots {
        let a = *times.last().unwrap();
        let span = k - a;
        if span <= 0.0 {
            continue;
        }
        let steps = ((span / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        for s in 1..steps {
            times.push(a + span * s as f64 / steps as f64);
        }
        times.push(k);
    }
    Ok(times)
}

fn rk4_step(points: &mut [Point], t: f64, h: f64, vp: &dyn VelocityProvider) {
    let k1 = vp.velocities(t, points);
    let p2: Vec<Point> = points.iter().zip(&k1).map(|(&p, &k)| p + k * (0.5 * h)).collect();
    let k2 = vp.velocities(t + 0.5 * h, &p2);
    let p3: Vec<Point> = points.iter().zip(&k2).map(|(&p, &k)| p + k * (0.5 * h)).collect();
    let k3 = vp.velocities(t + 0.5 * h, &p3);
    let p4: Vec<Point> = points.iter().zip(&k3).map(|(&p, &k)| p + k * h).collect();
    let k4 = vp.velocities(t + h, &p4);
    for (i, p) in points.iter_mut().enumerate() {
        *p = (*p + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0)).wrapped();
    }
}

/// Classical RK4 over a precomputed step schedule.
pub fn advect_on(points: &[Point], times: &[f64], vp: &dyn VelocityProvider) -> Vec<Point> {
    let mut pts = points.to_vec();
    for w in times.windows(2) {
        rk4_step(&mut pts, w[0], w[1] - w[0], vp);
    }
    pts
}

/// Positions at `t1` of particles at `points` at time `t0`, wrapped into the torus.
pub fn advect(
    points: &[Point],
    t0: f64,
    t1: f64,
    vp: &dyn VelocityProvider,
    dt: f64,
) -> Result<Vec<Point>, TrackingError> {
    let times = schedule(t0, t1, vp, dt, &[])?;
    Ok(advect_on(points, &times, vp))
}

/// Centered-difference flow-map Jacobian from a 4-point cross stencil.
/// `j[a][b] = ∂X_a/∂α_b`.
pub fn stencil_points(alpha: Point, delta: f64) -> [Point; 4] {
    [
        alpha + Point::new(delta, 0.0),
        alpha - Point::new(delta, 0.0),
        alpha + Point::new(0.0, delta),
        alpha - Point::new(0.0, delta),
    ]
}

pub fn stencil_jacobian(moved: &[Point], delta: f64) -> [[f64; 2]; 2] {
    let d1 = moved[1].periodic_delta(moved[0]) * (0.5 / delta);
    let d2 = moved[3].periodic_delta(moved[2]) * (0.5 / delta);
    [[d1.x1, d2.x1], [d1.x2, d2.x2]]
}

pub fn det2(j: &[[f64; 2]; 2]) -> f64 {
    j[0][0] * j[1][1] - j[0][1] * j[1][0]
}

pub fn flow_map_jacobian(
    alpha: Point,
    t0: f64,
    t1: f64,
    vp: &dyn VelocityProvider,
    delta: f64,
    dt: f64,
) -> Result<[[f64; 2]; 2], TrackingError> {
    if !(delta > 0.0) {
        return Err(TrackingError::InvalidParameter(format!("delta = {delta} must be positive")));
    }
    let moved = advect(&stencil_points(alpha, delta), t0, t1, vp, dt)?;
    Ok(stencil_jacobian(&moved, delta))
}

pub fn flow_map_jacobian_det(
    alpha: Point,
    t0: f64,
    t1: f64,
    vp: &dyn VelocityProvider,
    delta: f64,
    dt: f64,
) -> Result<f64, TrackingError> {
    Ok(det2(&flow_map_jacobian(alpha, t0, t1, vp, delta, dt)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Marker {
    pub pos: Point,
    /// α: position at the seed time
    pub seed: Point,
    /// ∇⊥θ(α, t₀)
    pub seed_grad: Point,
    /// β: arc length along the seed curve
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkerChain {
    pub markers: Vec<Marker>,
    pub t_seed: f64,
    pub t: f64,
    /// θ value of the seeded level set
    pub level: f64,
}

impl MarkerChain {
    pub fn positions(&self) -> Vec<Point> {
        self.markers.iter().map(|m| m.pos).collect()
    }

    pub fn length(&self) -> f64 {
        polyline_length(&self.positions())
    }

    pub fn validate(&self) -> Result<(), TrackingError> {
        if self.markers.len() < MIN_CHAIN {
            return Err(TrackingError::ChainTooShort { t: self.t, survivors: self.markers.len() });
        }
        if self.markers.windows(2).any(|w| !(w[1].beta > w[0].beta)) {
            return Err(TrackingError::InvalidParameter("β must increase along the chain".into()));
        }
        if self.markers.iter().any(|m| !m.pos.is_finite()) {
            return Err(TrackingError::InvalidParameter("non-finite marker position".into()));
        }
        Ok(())
    }
}

/// Jets of one θ snapshot plus the mask floor `eps_rel·max|∇⊥θ|` on its grid.
#[derive(Debug, Clone)]
pub struct Frame {
    pub t: f64,
    pub jets: JetField,
    pub mask_floor: f64,
    pub omega: f64,
}

impl Frame {
    pub fn new(fourier: &Fourier, t: f64, theta_hat: &Spectrum, scheme: Interpolation) -> Result<Self, TrackingError> {
        let geom = geometry_from_spectrum(fourier, theta_hat, DEFAULT_EPS_REL)?;
        Ok(Frame { t, jets: JetField::new(theta_hat, scheme), mask_floor: geom.mask_floor(), omega: geom.max_magnitude })
    }

    fn local(&self, p: Point) -> Result<LocalGeometry, TrackingError> {
        let jet = self.jets.jet(p);
        match LocalGeometry::from_jet(&jet) {
            Some(lg) if lg.magnitude >= self.mask_floor => Ok(lg),
            _ => Err(TrackingError::MaskCrossing { t: self.t, point: p }),
        }
    }

    /// Newton projection onto `θ = level` along ∇θ.
    pub fn project(&self, mut p: Point, level: f64) -> Point {
        for _ in 0..8 {
            let j = self.jets.jet(p);
            let g2 = j.tx * j.tx + j.ty * j.ty;
            if !(g2 > 0.0) {
                break;
            }
            let r = (j.theta - level) / g2;
            let step = Point::new(j.tx, j.ty) * r;
            p = (p - step).wrapped();
            if step.norm() < 1e-15 {
                break;
            }
        }
        p
    }
}

/// Grid index of max |∇⊥θ|; the smallest row-major index wins ties.
pub fn argmax_gradient(fourier: &Fourier, theta_hat: &Spectrum) -> Result<(usize, Point), TrackingError> {
    let geom = geometry_from_spectrum(fourier, theta_hat, DEFAULT_EPS_REL)?;
    let grid = geom.grid();
    let mut best = 0;
    for (idx, &v) in geom.magnitude.values().iter().enumerate() {
        if v > geom.magnitude.values()[best] {
            best = idx;
        }
    }
    let n = grid.n();
    Ok((best, Point::new(grid.coord(best % n), grid.coord(best / n))))
}

/// Seeds a chain of arc length `length` on the level set through `center`,
/// centered there, with markers `spacing` apart in arc length.
pub fn seed_chain(frame: &Frame, center: Point, length: f64, spacing: f64) -> Result<MarkerChain, TrackingError> {
    if !(length > 0.0 && spacing > 0.0 && spacing < length) {
        return Err(TrackingError::InvalidParameter(format!(
            "need 0 < spacing ({spacing}) < length ({length})"
        )));
    }
    let level = frame.jets.jet(center).theta;
    frame.local(center)?;
    let half = 0.5 * length;
    let mut branches: [Vec<Point>; 2] = [Vec::new(), Vec::new()];
    for (b, sign) in [(0usize, 1.0f64), (1, -1.0)] {
        let mut p = center;
        let mut arc = 0.0;
        while arc < half - 1e-12 * half {
            let h = spacing.min(half - arc);
            let dir = |q: Point| -> Result<Point, TrackingError> { Ok(frame.local(q)?.xi * sign) };
            // RK4 along the unit tangent, then back onto the level set
            let k1 = dir(p)?;
            let k2 = dir(p + k1 * (0.5 * h))?;
            let k3 = dir(p + k2 * (0.5 * h))?;
            let k4 = dir(p + k3 * h)?;
            let guess = (p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)).wrapped();
            let next = frame.project(guess, level);
            frame.local(next)?;
            arc += p.periodic_distance(next);
            branches[b].push(next);
            p = next;
        }
    }
    let [forward, backward] = branches;
    let mut pts: Vec<Point> = backward.into_iter().rev().collect();
    pts.push(center);
    pts.extend(forward);
    let mut beta = 0.0;
    let mut markers = Vec::with_capacity(pts.len());
    for (i, &p) in pts.iter().enumerate() {
        if i > 0 {
            beta += pts[i - 1].periodic_distance(p);
        }
        markers.push(Marker { pos: p, seed: p, seed_grad: frame.jets.jet(p).grad_perp(), beta });
    }
    let chain = MarkerChain { markers, t_seed: frame.t, t: frame.t, level };
    chain.validate()?;
    Ok(chain)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentState {
    pub sample: SegmentSample,
    /// |u·ξ(end) − u·ξ(start)|, the endpoint variant of u_ξ
    pub u_xi_endpoint: f64,
    /// |∇⊥θ| at each marker
    pub magnitudes: Vec<f64>,
}

/// Arc length, Ω_l, m, k, u_ξ (pairwise max difference) and u_n over the markers.
pub fn segment_quantities(positions: &[Point], frame: &Frame) -> Result<SegmentState, TrackingError> {
    let locals: Vec<Result<(LocalGeometry, Point), TrackingError>> = positions
        .par_iter()
        .map(|&p| Ok((frame.local(p)?, frame.jets.jet(p).velocity())))
        .collect();
    let mut omega_l = 0.0_f64;
    let mut m = 0.0_f64;
    let mut k = 0.0_f64;
    let mut u_n = 0.0_f64;
    let mut uxi_min = f64::INFINITY;
    let mut uxi_max = f64::NEG_INFINITY;
    let mut uxi = Vec::with_capacity(positions.len());
    let mut magnitudes = Vec::with_capacity(positions.len());
    for item in locals {
        let (lg, u) = item?;
        omega_l = omega_l.max(lg.magnitude);
        m = m.max(lg.div_xi.abs());
        k = k.max(lg.curvature);
        u_n = u_n.max(u.dot(lg.normal).abs());
        let a = u.dot(lg.xi);
        uxi_min = uxi_min.min(a);
        uxi_max = uxi_max.max(a);
        uxi.push(a);
        magnitudes.push(lg.magnitude);
    }
    let u_xi_endpoint = match (uxi.first(), uxi.last()) {
        (Some(a), Some(b)) => (b - a).abs(),
        _ => 0.0,
    };
    Ok(SegmentState {
        sample: SegmentSample {
            t: frame.t,
            l: polyline_length(positions),
            m,
            k,
            omega_l,
            u_xi: if uxi.is_empty() { 0.0 } else { uxi_max - uxi_min },
            u_n,
            n_markers: positions.len(),
        },
        u_xi_endpoint,
        magnitudes,
    })
}

/// Per interior marker: measured centered stretch over predicted stretch.
///
/// Measured: `|X_{i+1} − X_{i−1}| / |α_{i+1} − α_{i−1}|`. Predicted: the
/// β-weighted trapezoid mean of `|∇⊥θ(X,t)| / |∇⊥θ(α,t₀)|` over the three markers.
pub fn s_beta_ratios(chain: &MarkerChain, magnitudes: &[f64]) -> Vec<(f64, f64)> {
    let mk = &chain.markers;
    let g: Vec<f64> = mk.iter().zip(magnitudes).map(|(m, &mag)| mag / m.seed_grad.norm()).collect();
    (1..mk.len().saturating_sub(1))
        .map(|i| {
            let measured = mk[i - 1].pos.periodic_distance(mk[i + 1].pos)
                / mk[i - 1].seed.periodic_distance(mk[i + 1].seed);
            let (db0, db1) = (mk[i].beta - mk[i - 1].beta, mk[i + 1].beta - mk[i].beta);
            let predicted = (0.5 * (g[i - 1] + g[i]) * db0 + 0.5 * (g[i] + g[i + 1]) * db1) / (db0 + db1);
            (mk[i].beta, measured / predicted)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CauchyReport {
    pub t: f64,
    /// max |J·∇⊥θ(α,t₀) − ∇⊥θ(X,t)| / |∇⊥θ(X,t)|
    pub max_rel_error: f64,
    pub max_det_error: f64,
    pub worst_beta: f64,
    pub checked: usize,
}

/// Compares ∇⊥θ(X(α,t),t) against the FD flow-map Jacobian applied to the seed
/// gradient, for every `stride`-th marker of the seed chain, at each of `times`.
/// The stencils are advected from α in one pass.
pub fn cauchy_check(
    chain: &MarkerChain,
    times: &[f64],
    vp: &dyn VelocityProvider,
    mut frame_at: impl FnMut(f64) -> Result<Frame, TrackingError>,
    delta: f64,
    dt: f64,
    stride: usize,
) -> Result<Vec<CauchyReport>, TrackingError> {
    if !(delta > 0.0) {
        return Err(TrackingError::InvalidParameter(format!("delta = {delta} must be positive")));
    }
    if times.windows(2).any(|w| !(w[0] < w[1])) || times.first().is_some_and(|&t| t < chain.t_seed) {
        return Err(TrackingError::InvalidParameter("check times must increase from the seed time".into()));
    }
    let chosen: Vec<&Marker> = chain.markers.iter().step_by(stride.max(1)).collect();
    let mut pts = Vec::with_capacity(chosen.len() * 5);
    for m in &chosen {
        pts.push(m.seed);
        pts.extend(stencil_points(m.seed, delta));
    }
    let Some(&t_last) = times.last() else { return Ok(Vec::new()) };
    let steps = schedule(chain.t_seed, t_last, vp, dt, times)?;
    let mut reports = Vec::with_capacity(times.len());
    let mut k = 0;
    for &t in times {
        let j0 = k;
        while steps[k] < t && k + 1 < steps.len() {
            k += 1;
        }
        pts = advect_on(&pts, &steps[j0..=k], vp);
        let frame = frame_at(t)?;
        let mut report = CauchyReport { t, max_rel_error: 0.0, max_det_error: 0.0, worst_beta: f64::NAN, checked: chosen.len() };
        for (c, m) in chosen.iter().enumerate() {
            let block = &pts[5 * c..5 * c + 5];
            let j = stencil_jacobian(&block[1..], delta);
            let g0 = m.seed_grad;
            let pred = Point::new(j[0][0] * g0.x1 + j[0][1] * g0.x2, j[1][0] * g0.x1 + j[1][1] * g0.x2);
            let actual = frame.jets.jet(block[0]).grad_perp();
            if actual.norm() < frame.mask_floor {
                return Err(TrackingError::MaskCrossing { t, point: block[0] });
            }
            let err = (pred - actual).norm() / actual.norm();
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_beta = m.beta;
            }
            report.max_det_error = report.max_det_error.max((det2(&j) - 1.0).abs());
        }
        reports.push(report);
    }
    Ok(reports)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackConfig {
    /// Tracer step; the schedule splits each snapshot interval into equal steps no longer than this.
    pub dt: f64,
    /// Insert a marker when neighbours are farther apart than this.
    pub max_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StretchCheck {
    pub t: f64,
    /// max over interior markers of |measured/predicted − 1|
    pub max_deviation: f64,
    pub worst_beta: f64,
}

#[derive(Debug, Clone)]
pub struct TrackResult {
    pub series: SegmentSeries,
    pub u_xi_endpoint: Vec<f64>,
    pub chains: Vec<(f64, Vec<Point>)>,
    pub s_beta: Vec<StretchCheck>,
    pub events: Vec<String>,
    pub chain: MarkerChain,
}

/// Advects `chain` through `times` (the first must be the seed time) and
/// records segment quantities at each of them.
///
/// `frame_at` supplies the θ jets at each output time. Markers outside the
/// validity mask at an output time are dropped and reported in `events`.
pub fn track_segment(
    chain: MarkerChain,
    seed_frame: &Frame,
    times: &[f64],
    vp: &dyn VelocityProvider,
    mut frame_at: impl FnMut(f64) -> Result<Frame, TrackingError>,
    config: TrackConfig,
) -> Result<TrackResult, TrackingError> {
    chain.validate()?;
    if times.first() != Some(&chain.t_seed) {
        return Err(TrackingError::InvalidParameter("times must start at the seed time".into()));
    }
    if times.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(TrackingError::InvalidParameter("times must increase".into()));
    }
    let t_last = *times.last().unwrap();
    let steps = schedule(chain.t_seed, t_last, vp, config.dt, times)?;
    let mut chain = chain;
    let mut result = TrackResult {
        series: SegmentSeries::default(),
        u_xi_endpoint: Vec::new(),
        chains: Vec::new(),
        s_beta: Vec::new(),
        events: Vec::new(),
        chain: chain.clone(),
    };
    let mut next_output = 0;
    for (k, &t) in steps.iter().enumerate() {
        if k > 0 {
            let mut pts = chain.positions();
            rk4_step(&mut pts, steps[k - 1], t - steps[k - 1], vp);
            for (m, p) in chain.markers.iter_mut().zip(pts) {
                m.pos = p;
            }
            chain.t = t;
            refine_chain(&mut chain, seed_frame, &steps[..=k], vp, config.max_gap, &mut result.events);
        }
        if next_output < times.len() && (t - times[next_output]).abs() <= 1e-12 * (1.0 + t.abs()) {
            let frame = if k == 0 { seed_frame.clone() } else { frame_at(t)? };
            drop_unmasked(&mut chain, &frame, &mut result.events);
            chain.validate()?;
            let state = segment_quantities(&chain.positions(), &frame)?;
            let ratios = s_beta_ratios(&chain, &state.magnitudes);
            let (mut dev, mut worst) = (0.0, f64::NAN);
            for (beta, r) in ratios {
                if (r - 1.0).abs() > dev {
                    dev = (r - 1.0).abs();
                    worst = beta;
                }
            }
            result.s_beta.push(StretchCheck { t, max_deviation: dev, worst_beta: worst });
            result.series.samples.push(state.sample);
            result.u_xi_endpoint.push(state.u_xi_endpoint);
            result.chains.push((t, chain.positions()));
            next_output += 1;
        }
    }
    result.chain = chain;
    Ok(result)
}

fn drop_unmasked(chain: &mut MarkerChain, frame: &Frame, events: &mut Vec<String>) {
    let before = chain.markers.len();
    chain.markers.retain(|m| frame.local(m.pos).is_ok());
    let dropped = before - chain.markers.len();
    if dropped > 0 {
        events.push(format!("t={}: dropped {dropped} markers outside the validity mask", frame.t));
    }
}

/// Inserts markers (advected afresh from the seed-time midpoint) until no
/// neighbour gap exceeds `max_gap`.
fn refine_chain(
    chain: &mut MarkerChain,
    seed_frame: &Frame,
    steps: &[f64],
    vp: &dyn VelocityProvider,
    max_gap: f64,
    events: &mut Vec<String>,
) {
    for _round in 0..32 {
        let mut inserts: Vec<(usize, Marker)> = Vec::new();
        for i in 0..chain.markers.len().saturating_sub(1) {
            let (a, b) = (&chain.markers[i], &chain.markers[i + 1]);
            if a.pos.periodic_distance(b.pos) <= max_gap {
                continue;
            }
            if a.seed.periodic_distance(b.seed) < 1e-9 {
                events.push(format!("t={}: gap at β={} cannot be refined further", chain.t, a.beta));
                continue;
            }
            let alpha = seed_frame.project(a.seed.periodic_midpoint(b.seed), chain.level);
            let seed_grad = seed_frame.jets.jet(alpha).grad_perp();
            inserts.push((i + 1, Marker { pos: alpha, seed: alpha, seed_grad, beta: 0.5 * (a.beta + b.beta) }));
        }
        if inserts.is_empty() {
            return;
        }
        let alphas: Vec<Point> = inserts.iter().map(|(_, m)| m.seed).collect();
        let moved = advect_on(&alphas, steps, vp);
        for ((idx, mut m), p) in inserts.into_iter().zip(moved).rev() {
            m.pos = p;
            chain.markers.insert(idx, m);
        }
    }
    events.push(format!("t={}: marker insertion did not converge", chain.t));
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StretchingReport {
    /// `l(t) ≤ l(t₀) + 2∫(1 + k l)U dτ`
    pub weak: InequalityCheck,
    /// min over t of RHS − LHS for the weak form
    pub weak_margin: f64,
    /// `l(t) ≤ l(t₀) + ∫(u_ξ + k u_n l) dτ`
    pub sharp: InequalityCheck,
    pub sharp_margin: f64,
}

/// Checks both arc-stretching inequalities over the series with trapezoid integrals.
/// `U(τ)` is taken from the nearest global sample.
pub fn stretching_inequality_check(seg: &SegmentSeries, glob: &GlobalSeries) -> Result<StretchingReport, TrackingError> {
    let s = &seg.samples;
    let Some(first) = s.first() else {
        return Err(TrackingError::InvalidParameter("empty segment series".into()));
    };
    let u_at = |t: f64| -> Result<f64, TrackingError> {
        let idx = glob
            .nearest(t)
            .ok_or_else(|| TrackingError::InvalidParameter("empty global series".into()))?;
        Ok(glob.samples[idx].u_max)
    };
    let mut weak = InequalityCheck { holds: true, slack: f64::INFINITY, worst_t: f64::NAN, checked: 0 };
    let mut sharp = weak;
    let (mut weak_margin, mut sharp_margin) = (f64::INFINITY, f64::INFINITY);
    let (mut iw, mut is) = (0.0, 0.0);
    let mut prev_w = (1.0 + first.k * first.l) * u_at(first.t)?;
    let mut prev_s = first.u_xi + first.k * first.u_n * first.l;
    for w in s.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let fw = (1.0 + b.k * b.l) * u_at(b.t)?;
        let fs = b.u_xi + b.k * b.u_n * b.l;
        iw += 0.5 * (b.t - a.t) * (fw + prev_w);
        is += 0.5 * (b.t - a.t) * (fs + prev_s);
        prev_w = fw;
        prev_s = fs;
        let rhs_w = first.l + 2.0 * iw;
        let rhs_s = first.l + is;
        weak_margin = weak_margin.min(rhs_w - b.l);
        sharp_margin = sharp_margin.min(rhs_s - b.l);
        record(&mut weak, b.t, b.l, rhs_w);
        record(&mut sharp, b.t, b.l, rhs_s);
    }
    Ok(StretchingReport { weak, weak_margin, sharp, sharp_margin })
}

fn record(c: &mut InequalityCheck, t: f64, lhs: f64, rhs: f64) {
    let ratio = if lhs > 0.0 { rhs / lhs } else { f64::INFINITY };
    c.checked += 1;
    if !(ratio >= c.slack) {
        c.slack = ratio;
        c.worst_t = t;
    }
    c.holds &= lhs <= rhs;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{Grid, ScalarField};
    use std::f64::consts::PI;

    fn shear() -> FnVelocity<impl Fn(f64, Point) -> Point + Sync> {
        FnVelocity { range: (0.0, 2.0), f: |_t, p: Point| Point::new(0.0, p.x1.sin()) }
    }

    #[test]
    fn zero_velocity_is_identity() {
        let vp = ZeroVelocity { range: (0.0, 1.0) };
        let pts = vec![Point::new(1.0, 2.0), Point::new(6.0, 0.1)];
        assert_eq!(advect(&pts, 0.0, 1.0, &vp, 0.1).unwrap(), pts);
        assert!((flow_map_jacobian_det(Point::new(1.0, 1.0), 0.0, 1.0, &vp, 1e-4, 0.1).unwrap() - 1.0).abs() < 1e-11);
    }

    #[test]
    fn steady_shear_exact_solution() {
        let vp = shear();
        let p0 = Point::new(0.7, 1.1);
        let out = advect(&[p0], 0.0, 1.5, &vp, 0.01).unwrap()[0];
        assert!((out.x1 - 0.7).abs() < 1e-12);
        assert!((out.x2 - (1.1 + 1.5 * 0.7f64.sin())).abs() < 1e-8);
        let j = flow_map_jacobian(p0, 0.0, 1.5, &vp, 1e-4, 0.01).unwrap();
        assert!((j[1][0] - 1.5 * 0.7f64.cos()).abs() < 1e-6);
        assert!((j[0][0] - 1.0).abs() < 1e-9 && j[0][1].abs() < 1e-9 && (j[1][1] - 1.0).abs() < 1e-9);
        assert!((det2(&j) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn reversal_returns_to_start() {
        let vp = FnVelocity {
            range: (0.0, 1.0),
            f: |t: f64, p: Point| Point::new((p.x2 + t).sin(), (2.0 * p.x1).cos() * (1.0 + t)),
        };
        let p0 = vec![Point::new(1.0, 2.0), Point::new(3.0, 5.5)];
        let fwd = advect(&p0, 0.0, 1.0, &vp, 0.01).unwrap();
        let back = advect(&fwd, 0.0, 1.0, &Reversed { inner: &vp, pivot: 1.0 }, 0.01).unwrap();
        for (a, b) in p0.iter().zip(&back) {
            assert!(a.periodic_distance(*b) < 1e-7);
        }
    }

    #[test]
    fn schedule_hits_knots() {
        let g = Grid::new(16).unwrap();
        let fo = Fourier::new(g);
        let s = fo.forward(&ScalarField::from_fn(g, |x, _| x.cos()));
        let vp = SnapshotVelocity::new(&[(0.0, s.clone()), (0.3, s.clone()), (1.0, s)], Interpolation::Fourier).unwrap();
        let times = schedule(0.0, 1.0, &vp, 0.08, &[0.5]).unwrap();
        for k in [0.3, 0.5, 1.0] {
            assert!(times.contains(&k));
        }
        assert!(times.windows(2).all(|w| w[1] > w[0] && w[1] - w[0] <= 0.08 + 1e-12));
        assert!(matches!(schedule(0.0, 1.5, &vp, 0.1, &[]), Err(TrackingError::OutOfRange { .. })));
    }

    #[test]
    fn snapshot_velocity_of_steady_mode() {
        // θ = cos x₁ gives u = (0, sin x₁)
        let g = Grid::new(32).unwrap();
        let fo = Fourier::new(g);
        let s = fo.forward(&ScalarField::from_fn(g, |x, _| x.cos()));
        for scheme in [Interpolation::Fourier, Interpolation::default()] {
            let vp = SnapshotVelocity::new(&[(0.0, s.clone()), (1.0, s.clone())], scheme).unwrap();
            let p = advect(&[Point::new(0.4, 0.2)], 0.0, 1.0, &vp, 0.01).unwrap()[0];
            assert!((p.x2 - (0.2 + 0.4f64.sin())).abs() < 1e-6, "{scheme:?}");
        }
    }

    fn bump_frame(n: usize) -> (Fourier, Spectrum, Frame) {
        let g = Grid::new(n).unwrap();
        let fo = Fourier::new(g);
        let theta = ScalarField::from_fn(g, |x, y| (-((x - PI).powi(2) + (y - PI).powi(2)) / (2.0 * 0.25)).exp());
        let s = fo.forward(&theta);
        let f = Frame::new(&fo, 0.0, &s, Interpolation::Fourier).unwrap();
        (fo, s, f)
    }

    #[test]
    fn circle_segment_quantities() {
        let (_, _, frame) = bump_frame(128);
        let chain = seed_chain(&frame, Point::new(PI + 0.8, PI), 1.0, 0.02).unwrap();
        for m in &chain.markers {
            let r = m.pos.periodic_distance(Point::new(PI, PI));
            assert!((r - 0.8).abs() < 1e-6, "{r}");
        }
        assert!((chain.length() - 1.0).abs() < 1e-3);
        let st = segment_quantities(&chain.positions(), &frame).unwrap();
        assert!((st.sample.k - 1.25).abs() < 0.0125);
        assert!(st.sample.m < 1e-6);
    }

    #[test]
    fn straight_line_chain() {
        let g = Grid::new(32).unwrap();
        let fo = Fourier::new(g);
        let s = fo.forward(&ScalarField::from_fn(g, |_, y| y.cos()));
        let frame = Frame::new(&fo, 0.0, &s, Interpolation::Fourier).unwrap();
        let chain = seed_chain(&frame, Point::new(1.0, PI / 2.0), 1.0, 0.05).unwrap();
        let st = segment_quantities(&chain.positions(), &frame).unwrap();
        assert!(st.sample.k < 1e-9 && st.sample.m < 1e-9);
        let first = chain.markers[0].pos;
        let last = chain.markers.last().unwrap().pos;
        assert!((first.periodic_distance(last) - st.sample.l).abs() < 1e-9);
        // u = (sin x₂, 0) is tangent to the level line
        assert!(st.sample.u_n < 1e-9);
    }

    #[test]
    fn steady_mode_tracking_is_constant() {
        // θ = cos x₁: level line x₁ = π/2 translates with u = (0, 1)
        let g = Grid::new(32).unwrap();
        let fo = Fourier::new(g);
        let s = fo.forward(&ScalarField::from_fn(g, |x, _| x.cos()));
        let frames: Vec<(f64, Spectrum)> = (0..=4).map(|i| (0.25 * i as f64, s.clone())).collect();
        let vp = SnapshotVelocity::new(&frames, Interpolation::Fourier).unwrap();
        let seed = Frame::new(&fo, 0.0, &s, Interpolation::Fourier).unwrap();
        let chain = seed_chain(&seed, Point::new(PI / 2.0, 1.0), 1.0, 0.05).unwrap();
        let times: Vec<f64> = frames.iter().map(|f| f.0).collect();
        let res = track_segment(
            chain,
            &seed,
            &times,
            &vp,
            |t| Frame::new(&fo, t, &s, Interpolation::Fourier),
            TrackConfig { dt: 0.01, max_gap: 2.0 * g.h() },
        )
        .unwrap();
        let s0 = res.series.samples[0];
        for smp in &res.series.samples {
            assert!((smp.l - s0.l).abs() < 1e-9);
            assert!((smp.omega_l - s0.omega_l).abs() < 1e-9);
            assert_eq!(smp.n_markers, s0.n_markers);
        }
        for c in &res.s_beta {
            assert!(c.max_deviation < 1e-9);
        }
        let (_, last) = res.chains.last().unwrap();
        assert!((last[0].x2 - (res.chain.markers[0].seed.x2 + 1.0)).abs() < 1e-8);
        let reports = cauchy_check(&res.chain, &[0.0, 0.5, 1.0], &vp, |t| Frame::new(&fo, t, &s, Interpolation::Fourier), 1e-4, 0.01, 3).unwrap();
        assert_eq!(reports.len(), 3);
        for cr in reports {
            assert!(cr.max_rel_error < 1e-6 && cr.max_det_error < 1e-6, "{cr:?}");
        }
    }

    #[test]
    fn zero_velocity_series_constant() {
        let (fo, s, frame) = bump_frame(64);
        let chain = seed_chain(&frame, Point::new(PI + 0.6, PI), 0.8, 0.05).unwrap();
        let vp = ZeroVelocity { range: (0.0, 1.0) };
        let res = track_segment(
            chain,
            &frame,
            &[0.0, 0.5, 1.0],
            &vp,
            |t| Frame::new(&fo, t, &s, Interpolation::Fourier),
            TrackConfig { dt: 0.1, max_gap: 0.2 },
        )
        .unwrap();
        let a = res.series.samples[0];
        for b in &res.series.samples {
            assert_eq!((a.l, a.m, a.k, a.omega_l), (b.l, b.m, b.k, b.omega_l));
        }
        let glob = GlobalSeries::from_omega_u([(0.0, 1.0, 0.0), (0.5, 1.0, 0.0), (1.0, 1.0, 0.0)]);
        let rep = stretching_inequality_check(&res.series, &glob).unwrap();
        assert!(rep.weak.holds && rep.sharp.holds);
        assert_eq!(rep.weak_margin, 0.0);
    }

    #[test]
    fn stretching_in_steady_shear() {
        // a vertical segment x₁ ∈ [a, b] at fixed x₂ is sheared into y = x₂ + t sin x₁
        let vp = shear();
        let xs: Vec<Point> = (0..=40).map(|i| Point::new(0.5 + i as f64 * 0.025, 1.0)).collect();
        let mut samples = Vec::new();
        for step in 0..=10 {
            let t = 0.1 * step as f64;
            let pts = advect(&xs, 0.0, t, &vp, 0.01).unwrap();
            let l = polyline_length(&pts);
            samples.push(SegmentSample { t, l, m: 0.0, k: 0.0, omega_l: 1.0, u_xi: 1.0, u_n: 1.0, n_markers: pts.len() });
        }
        let seg = SegmentSeries { samples };
        let glob = GlobalSeries::from_omega_u((0..=10).map(|i| (0.1 * i as f64, 1.0, 1.0)));
        let rep = stretching_inequality_check(&seg, &glob).unwrap();
        assert!(rep.weak.holds);
        // l(1) = ∫ sqrt(1 + cos² x) dx over [0.5, 1.5]
        let exact: f64 = (0..10000).map(|i| {
            let x = 0.5 + (i as f64 + 0.5) * 1e-4;
            (1.0 + x.cos().powi(2)).sqrt() * 1e-4
        }).sum();
        let l1 = seg.samples.last().unwrap().l;
        assert!((l1 - exact).abs() < 1e-3);
        assert!((rep.weak_margin - (1.0 + 2.0 * 1.0 - l1)).abs() < 1e-9 || rep.weak_margin < 1.0 + 2.0 - l1 + 1e-9);
    }
}
