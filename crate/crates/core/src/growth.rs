//! Global growth diagnostics and numerical replay of the partition bounds.
//!
//! Everything here is post-processing on recorded series. Generic constants
//! are reported as the smallest values consistent with the data.

use std::f64::consts::E;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrowthError {
    #[error("no samples in the requested window satisfy the guard")]
    WindowEmpty,
    #[error("segment sample at t = {t} has no global sample within {tol} (nearest {nearest})")]
    AlignmentGap { t: f64, nearest: f64, tol: f64 },
    #[error("omega decreases at t = {t} ({from} -> {to})")]
    NotMonotone { t: f64, from: f64, to: f64 },
    #[error("partition ratio r = {r} does not exceed R = {big_r}")]
    RatioTooSmall { r: f64, big_r: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("series invalid: {0}")]
    InvalidSeries(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalSample {
    pub t: f64,
    pub omega: f64,
    pub u_max: f64,
    pub bkm: f64,
    pub area_a: f64,
    pub area_b: f64,
    pub overlap_frac: f64,
}

impl GlobalSample {
    /// Sample with only the quantities needed by the bound replays.
    pub fn basic(t: f64, omega: f64, u_max: f64) -> Self {
        Self { t, omega, u_max, bkm: 0.0, area_a: f64::NAN, area_b: f64::NAN, overlap_frac: f64::NAN }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GlobalSeries {
    pub samples: Vec<GlobalSample>,
}

impl GlobalSeries {
    /// Builds a series from (t, Ω, U) triples, filling the BKM column by trapezoid.
    pub fn from_omega_u(points: impl IntoIterator<Item = (f64, f64, f64)>) -> Self {
        let mut s = GlobalSeries {
            samples: points.into_iter().map(|(t, o, u)| GlobalSample::basic(t, o, u)).collect(),
        };
        let bkm = bkm_monitor(&s);
        for (sample, (_, b)) in s.samples.iter_mut().zip(bkm) {
            sample.bkm = b;
        }
        s
    }

    pub fn validate(&self) -> Result<(), GrowthError> {
        for w in self.samples.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(GrowthError::InvalidSeries(format!("time not increasing at t = {}", w[1].t)));
            }
            if w[1].bkm < w[0].bkm {
                return Err(GrowthError::InvalidSeries(format!("bkm decreasing at t = {}", w[1].t)));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Largest gap between consecutive sample times.
    pub fn max_spacing(&self) -> f64 {
        self.samples.windows(2).map(|w| w[1].t - w[0].t).fold(0.0, f64::max)
    }

    /// Index of the sample nearest to `t`; earlier sample wins ties.
    pub fn nearest(&self, t: f64) -> Option<usize> {
        let idx = self.samples.partition_point(|s| s.t < t);
        let mut best: Option<usize> = None;
        for cand in [idx.checked_sub(1), Some(idx)].into_iter().flatten() {
            if cand < self.samples.len() {
                let d = (self.samples[cand].t - t).abs();
                if best.is_none_or(|b| d < (self.samples[b].t - t).abs()) {
                    best = Some(cand);
                }
            }
        }
        best
    }

    /// `log Ω` at `t`, linear in time between samples.
    pub fn log_omega_at(&self, t: f64) -> Option<f64> {
        let s = &self.samples;
        let idx = s.partition_point(|x| x.t < t);
        if idx < s.len() && s[idx].t == t {
            return Some(s[idx].omega.ln());
        }
        if idx == 0 || idx >= s.len() {
            return None;
        }
        let (a, b) = (&s[idx - 1], &s[idx]);
        let w = (t - a.t) / (b.t - a.t);
        Some((1.0 - w) * a.omega.ln() + w * b.omega.ln())
    }

    /// `∫ₐᵇ (log Ω + 1) dτ` with log Ω piecewise linear between samples.
    pub fn integrate_log_omega_plus_one(&self, a: f64, b: f64) -> Option<f64> {
        let mut knots = vec![a];
        knots.extend(self.samples.iter().map(|s| s.t).filter(|&t| t > a && t < b));
        knots.push(b);
        let mut total = 0.0;
        for w in knots.windows(2) {
            let fa = self.log_omega_at(w[0])? + 1.0;
            let fb = self.log_omega_at(w[1])? + 1.0;
            total += 0.5 * (w[1] - w[0]) * (fa + fb);
        }
        Some(total)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentSample {
    pub t: f64,
    pub l: f64,
    pub m: f64,
    pub k: f64,
    pub omega_l: f64,
    pub u_xi: f64,
    pub u_n: f64,
    pub n_markers: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SegmentSeries {
    pub samples: Vec<SegmentSample>,
}

impl SegmentSeries {
    pub fn time_range(&self) -> Option<(f64, f64)> {
        Some((self.samples.first()?.t, self.samples.last()?.t))
    }

    fn window(&self, t0: f64, t1: f64) -> &[SegmentSample] {
        let lo = self.samples.partition_point(|s| s.t < t0);
        let hi = self.samples.partition_point(|s| s.t <= t1);
        &self.samples[lo..hi.max(lo)]
    }
}

/// `∫₀ᵗ Ω dτ` by trapezoid over the samples.
pub fn bkm_monitor(series: &GlobalSeries) -> Vec<(f64, f64)> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(series.samples.len());
    for (i, s) in series.samples.iter().enumerate() {
        if i > 0 {
            let p = &series.samples[i - 1];
            acc += 0.5 * (s.t - p.t) * (s.omega + p.omega);
        }
        out.push((s.t, acc));
    }
    out
}

fn in_window(t: f64, window: Option<(f64, f64)>) -> bool {
    window.is_none_or(|(a, b)| t >= a && t <= b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CordobaFit {
    pub c: f64,
    /// (t, U/log Ω) for every sample with Ω > e in the window.
    pub ratios: Vec<(f64, f64)>,
    pub excluded: usize,
}

/// Smallest C with `U ≤ C log Ω` over samples with Ω > e.
pub fn cordoba_fit(series: &GlobalSeries, window: Option<(f64, f64)>) -> Result<CordobaFit, GrowthError> {
    let mut ratios = Vec::new();
    let mut excluded = 0;
    for s in series.samples.iter().filter(|s| in_window(s.t, window)) {
        if s.omega > E {
            ratios.push((s.t, s.u_max / s.omega.ln()));
        } else {
            excluded += 1;
        }
    }
    if ratios.is_empty() {
        return Err(GrowthError::WindowEmpty);
    }
    let c = ratios.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(CordobaFit { c, ratios, excluded })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub c0: f64,
    pub big_c0: f64,
    pub c_l: f64,
    pub r: f64,
    pub big_r: f64,
}

impl BoundParams {
    pub fn new(c0: f64, big_c0: f64, c_l: f64, r: f64) -> Result<Self, GrowthError> {
        if !(c0 > 0.0 && c0 <= 1.0) {
            return Err(GrowthError::InvalidParameter(format!("c0 = {c0} outside (0, 1]")));
        }
        if !(big_c0 >= 0.0 && big_c0.is_finite()) {
            return Err(GrowthError::InvalidParameter(format!("C0 = {big_c0} must be finite and nonnegative")));
        }
        if !(c_l > 0.0 && c_l.is_finite()) {
            return Err(GrowthError::InvalidParameter(format!("c_L = {c_l} must be positive")));
        }
        if !(r > 1.0 && r.is_finite()) {
            return Err(GrowthError::InvalidParameter(format!("r = {r} must exceed 1")));
        }
        Ok(Self { c0, big_c0, c_l, r, big_r: big_c0.exp() / c0 })
    }

    pub fn check_ratio(&self) -> Result<(), GrowthError> {
        if self.r > self.big_r {
            Ok(())
        } else {
            Err(GrowthError::RatioTooSmall { r: self.r, big_r: self.big_r })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisRow {
    pub t: f64,
    pub omega: f64,
    pub l: f64,
    /// `L·loglog Ω`, NaN where Ω ≤ e
    pub l_loglog: f64,
    pub m_l: f64,
    pub k_l: f64,
    pub omega_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub rows: Vec<HypothesisRow>,
    pub c0: f64,
    pub big_c0: f64,
    pub c_l: f64,
    /// min of `L·loglog Ω` over guarded rows (the weaker length hypothesis)
    pub c_l_loglog: f64,
    pub max_m_l: f64,
    pub max_k_l: f64,
    pub loglog_excluded: usize,
}

impl HypothesisReport {
    pub fn params(&self, r: f64) -> Result<BoundParams, GrowthError> {
        BoundParams::new(self.c0, self.big_c0, self.c_l, r)
    }

    pub fn big_r(&self) -> f64 {
        self.big_c0.exp() / self.c0
    }
}

/// Measures c₀, C₀ and c_L along the tracked segment.
///
/// `Ω_l` is interpolated while Ω is a grid maximum, so the ratio can exceed 1
/// by interpolation error; c₀ is clamped to 1.
pub fn hypothesis_monitor(
    seg: &SegmentSeries,
    glob: &GlobalSeries,
    window: Option<(f64, f64)>,
) -> Result<HypothesisReport, GrowthError> {
    let tol = glob.max_spacing();
    let mut rows = Vec::new();
    let mut excluded = 0;
    for s in seg.samples.iter().filter(|s| in_window(s.t, window)) {
        let idx = glob.nearest(s.t).ok_or(GrowthError::WindowEmpty)?;
        let g = &glob.samples[idx];
        if (g.t - s.t).abs() > tol {
            return Err(GrowthError::AlignmentGap { t: s.t, nearest: g.t, tol });
        }
        let l_loglog = if g.omega > E {
            s.l * g.omega.ln().ln()
        } else {
            excluded += 1;
            f64::NAN
        };
        rows.push(HypothesisRow {
            t: s.t,
            omega: g.omega,
            l: s.l,
            l_loglog,
            m_l: s.m * s.l,
            k_l: s.k * s.l,
            omega_ratio: s.omega_l / g.omega,
        });
    }
    if rows.is_empty() {
        return Err(GrowthError::WindowEmpty);
    }
    let min = |f: &dyn Fn(&HypothesisRow) -> f64| rows.iter().map(f).filter(|v| !v.is_nan()).fold(f64::INFINITY, f64::min);
    let max = |f: &dyn Fn(&HypothesisRow) -> f64| rows.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    let max_m_l = max(&|r| r.m_l);
    let max_k_l = max(&|r| r.k_l);
    Ok(HypothesisReport {
        c0: min(&|r| r.omega_ratio).min(1.0),
        big_c0: max_m_l.max(max_k_l),
        c_l: min(&|r| r.l),
        c_l_loglog: min(&|r| r.l_loglog),
        max_m_l,
        max_k_l,
        loglog_excluded: excluded,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub r: f64,
    pub times: Vec<f64>,
    pub omegas: Vec<f64>,
}

impl Partition {
    pub fn intervals(&self) -> usize {
        self.times.len().saturating_sub(1)
    }
}

/// Times `t_k` with `Ω(t_{k+1}) = r·Ω(t_k)`, starting at `t_start`.
pub fn build_partition(glob: &GlobalSeries, r: f64, t_start: f64) -> Result<Partition, GrowthError> {
    if !(r > 1.0 && r.is_finite()) {
        return Err(GrowthError::InvalidParameter(format!("r = {r} must exceed 1")));
    }
    let s = &glob.samples;
    let first = s.partition_point(|x| x.t < t_start);
    if first >= s.len() && s.last().is_none_or(|x| x.t < t_start) {
        return Err(GrowthError::WindowEmpty);
    }
    // monotonicity on the window, including the sample bracketing t_start
    let from = first.saturating_sub(1);
    for w in s[from..].windows(2) {
        if w[1].t < t_start {
            continue;
        }
        if w[1].omega < w[0].omega * (1.0 - 1e-9) {
            return Err(GrowthError::NotMonotone { t: w[1].t, from: w[0].omega, to: w[1].omega });
        }
    }
    let log_start = glob.log_omega_at(t_start).ok_or(GrowthError::WindowEmpty)?;
    let mut times = vec![t_start];
    let mut logs = vec![log_start];
    let step = r.ln();
    let mut i = first;
    loop {
        let target = logs.last().unwrap() + step;
        while i < s.len() && s[i].omega.ln() < target {
            i += 1;
        }
        if i >= s.len() {
            break;
        }
        let (tb, lb) = (s[i].t, s[i].omega.ln());
        let (ta, la) = if i == 0 { (tb, lb) } else { (s[i - 1].t, s[i - 1].omega.ln()) };
        let ta_eff = ta.max(*times.last().unwrap());
        let la_eff = if ta_eff > ta { *logs.last().unwrap() } else { la };
        let tk = if lb == la_eff { tb } else { ta_eff + (target - la_eff) / (lb - la_eff) * (tb - ta_eff) };
        times.push(tk);
        logs.push(target);
    }
    Ok(Partition { r, times, omegas: logs.into_iter().map(f64::exp).collect() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityCheck {
    pub holds: bool,
    /// min over checked times of RHS/LHS; ≥ 1 iff it holds
    pub slack: f64,
    /// time with the smallest slack
    pub worst_t: f64,
    pub checked: usize,
}

impl InequalityCheck {
    fn trivial() -> Self {
        Self { holds: true, slack: f64::INFINITY, worst_t: f64::NAN, checked: 0 }
    }

    fn record(&mut self, t: f64, lhs: f64, rhs: f64) {
        let ratio = if lhs > 0.0 { rhs / lhs } else { f64::INFINITY };
        self.checked += 1;
        if !(ratio >= self.slack) {
            self.slack = ratio;
            self.worst_t = t;
        }
        self.holds &= lhs <= rhs;
    }
}

fn nearest_u(glob: &GlobalSeries, t: f64) -> Result<f64, GrowthError> {
    let idx = glob.nearest(t).ok_or(GrowthError::WindowEmpty)?;
    let g = &glob.samples[idx];
    let tol = glob.max_spacing();
    if (g.t - t).abs() > tol {
        return Err(GrowthError::AlignmentGap { t, nearest: g.t, tol });
    }
    Ok(g.u_max)
}

/// `Ω_l(t) ≤ e^{m(t)l(t)} Ω_l(t₀)[1 + (2/l(t₀))∫(1 + k l)U dτ]` at every segment sample in `(t0, t1]`.
///
/// `t0` snaps to the first segment sample at or after it.
pub fn key_estimate_check(
    seg: &SegmentSeries,
    glob: &GlobalSeries,
    t0: f64,
    t1: f64,
) -> Result<InequalityCheck, GrowthError> {
    let w = seg.window(t0, t1);
    let Some(first) = w.first() else { return Err(GrowthError::WindowEmpty) };
    let mut check = InequalityCheck::trivial();
    let mut integral = 0.0;
    let mut prev = (first.t, (1.0 + first.k * first.l) * nearest_u(glob, first.t)?);
    for s in &w[1..] {
        let f = (1.0 + s.k * s.l) * nearest_u(glob, s.t)?;
        integral += 0.5 * (s.t - prev.0) * (f + prev.1);
        prev = (s.t, f);
        let rhs = (s.m * s.l).exp() * first.omega_l * (1.0 + 2.0 / first.l * integral);
        check.record(s.t, s.omega_l, rhs);
    }
    Ok(check)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoSidedCheck {
    pub lower: InequalityCheck,
    pub upper: InequalityCheck,
}

impl TwoSidedCheck {
    pub fn holds(&self) -> bool {
        self.lower.holds && self.upper.holds
    }
}

/// `e^{−m(t)l(t)} Ω_l(t)/Ω_l(t₀) ≤ l(t)/l(t₀) ≤ e^{m(t₀)l(t₀)} Ω_l(t)/Ω_l(t₀)` for every pair t₀ < t.
pub fn two_sided_check(seg: &SegmentSeries, t0: f64, t1: f64) -> Result<TwoSidedCheck, GrowthError> {
    let w = seg.window(t0, t1);
    if w.is_empty() {
        return Err(GrowthError::WindowEmpty);
    }
    let mut lower = InequalityCheck::trivial();
    let mut upper = InequalityCheck::trivial();
    for (i, a) in w.iter().enumerate() {
        for b in &w[i + 1..] {
            let len_ratio = b.l / a.l;
            let om_ratio = b.omega_l / a.omega_l;
            lower.record(b.t, (-b.m * b.l).exp() * om_ratio, len_ratio);
            upper.record(b.t, len_ratio, (a.m * a.l).exp() * om_ratio);
        }
    }
    Ok(TwoSidedCheck { lower, upper })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrowthModel {
    Double,
    Triple,
}

impl GrowthModel {
    pub fn name(self) -> &'static str {
        match self {
            GrowthModel::Double => "double",
            GrowthModel::Triple => "triple",
        }
    }

    /// loglog Ω or logloglog Ω.
    pub fn level(self, omega: f64) -> f64 {
        match self {
            GrowthModel::Double => omega.ln().ln(),
            GrowthModel::Triple => omega.ln().ln().ln(),
        }
    }

    fn guard(self) -> f64 {
        match self {
            GrowthModel::Double => E,
            GrowthModel::Triple => E.exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SumCheck {
    pub lhs: f64,
    /// bound with the first-term correction
    pub rhs: f64,
    pub holds: bool,
    /// additive constant making `lhs = (log R/log r)·level(Ω(t_n)) + C`
    pub c_equality: f64,
    /// the bound without the first-term correction
    pub uncorrected_rhs: f64,
    pub uncorrected_holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificatePoint {
    pub t: f64,
    pub measured: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub model: GrowthModel,
    /// smallest constant per interval
    pub c_k: Vec<f64>,
    pub c_star: f64,
    /// slope of the certified line in the model's level variable
    pub slope: f64,
    pub c_prime: f64,
    pub prefactor: f64,
    pub t0: f64,
    /// leading partition nodes dropped by the level guard or admissibility
    pub skipped_nodes: usize,
    pub certificate: Vec<CertificatePoint>,
    pub dominates: bool,
    pub sum: Option<SumCheck>,
}

impl Replay {
    fn trivial(model: GrowthModel) -> Self {
        Replay {
            model,
            c_k: Vec::new(),
            c_star: 0.0,
            slope: 0.0,
            c_prime: 0.0,
            prefactor: f64::NAN,
            t0: f64::NAN,
            skipped_nodes: 0,
            certificate: Vec::new(),
            dominates: true,
            sum: None,
        }
    }

    /// Certified bound on the level variable at time `t`.
    pub fn bound_at(&self, t: f64) -> f64 {
        self.prefactor * (self.slope * (t - self.t0) + self.c_prime)
    }
}

pub fn replay_double(glob: &GlobalSeries, partition: &Partition, params: &BoundParams) -> Result<Replay, GrowthError> {
    replay(GrowthModel::Double, glob, partition, params)
}

pub fn replay_triple(glob: &GlobalSeries, partition: &Partition, params: &BoundParams) -> Result<Replay, GrowthError> {
    replay(GrowthModel::Triple, glob, partition, params)
}

/// Per-interval fit of
/// `Ω(t_{k+1}) ≤ R Ω(t_k)[1 + C·(1+C₀)Rr/c_L·w_k·∫(log Ω + 1)]`
/// (`w_k = 1` for the double model, `loglog Ω(t_k)` for the triple), then the
/// summed certificate
/// `level(Ω(t_n)) ≤ log r/(log r − log R)·[slope·(t_n − t₀) + C′]`.
fn replay(model: GrowthModel, glob: &GlobalSeries, partition: &Partition, params: &BoundParams) -> Result<Replay, GrowthError> {
    if partition.intervals() == 0 {
        return Ok(Replay::trivial(model));
    }
    params.check_ratio()?;
    if (partition.r - params.r).abs() > 1e-12 * params.r {
        return Err(GrowthError::InvalidParameter(format!(
            "partition built with r = {} but params use r = {}",
            partition.r, params.r
        )));
    }
    let (r, big_r) = (params.r, params.big_r);
    let log_r = r.ln();
    let log_big_r = big_r.ln();

    // drop leading nodes below the level guard or failing admissibility
    let admissible = |om: f64| match model {
        GrowthModel::Double => om > model.guard(),
        GrowthModel::Triple => om > model.guard() && (r * om).ln().ln() <= 2.0 * om.ln().ln(),
    };
    let skipped = partition.omegas.iter().take_while(|&&om| !admissible(om)).count();
    let times = &partition.times[skipped..];
    let omegas = &partition.omegas[skipped..];
    if times.len() < 2 {
        return Err(GrowthError::WindowEmpty);
    }

    let a_coef = (1.0 + params.big_c0) * big_r * r / params.c_l;
    let mut c_k = Vec::with_capacity(times.len() - 1);
    for k in 0..times.len() - 1 {
        let integral = glob
            .integrate_log_omega_plus_one(times[k], times[k + 1])
            .ok_or(GrowthError::WindowEmpty)?;
        let weight = match model {
            GrowthModel::Double => 1.0,
            GrowthModel::Triple => omegas[k].ln().ln(),
        };
        let needed = omegas[k + 1] / (big_r * omegas[k]) - 1.0;
        c_k.push((needed / (a_coef * weight * integral)).max(0.0));
    }
    let c_star = c_k.iter().copied().fold(0.0, f64::max);

    // Slope bound for the comparison function on each interval. The integrand
    // log Ω + 1 is at most log Ω(t_k) + log r + 1 there, which the factor covers.
    let log_om0 = omegas[0].ln();
    let slope = c_star * a_coef * (1.0 + (1.0 + log_r) / log_om0);
    let a = log_big_r / log_r;
    // first-term value of the Riemann sum
    let first_term = match model {
        GrowthModel::Double => log_big_r / log_om0,
        GrowthModel::Triple => log_big_r / (log_om0 * log_om0.ln()),
    };
    let level0 = model.level(omegas[0]);
    let c_prime = (1.0 - a) * level0 + first_term;
    let prefactor = log_r / (log_r - log_big_r);

    let mut replay = Replay {
        model,
        c_k,
        c_star,
        slope,
        c_prime,
        prefactor,
        t0: times[0],
        skipped_nodes: skipped,
        certificate: Vec::new(),
        dominates: true,
        sum: None,
    };
    for (&t, &om) in times.iter().zip(omegas) {
        let measured = model.level(om);
        let bound = replay.bound_at(t);
        replay.dominates &= measured <= bound;
        replay.certificate.push(CertificatePoint { t, measured, bound });
    }
    replay.sum = Some(riemann_sum_check(model, omegas, big_r, r));
    Ok(replay)
}

/// Compares the partition sum of `log R/f(log Ω(t_k))` with its integral bound.
///
/// The sum over `k < n` is a left Riemann sum of a decreasing function, so it
/// exceeds the integral by at most its first term; `rhs` includes that term.
pub fn riemann_sum_check(model: GrowthModel, omegas: &[f64], big_r: f64, r: f64) -> SumCheck {
    let n = omegas.len() - 1;
    let (log_big_r, log_r) = (big_r.ln(), r.ln());
    let f = |om: f64| match model {
        GrowthModel::Double => 1.0 / om.ln(),
        GrowthModel::Triple => 1.0 / (om.ln() * om.ln().ln()),
    };
    let lhs: f64 = omegas[..n].iter().map(|&om| log_big_r * f(om)).sum();
    let a = log_big_r / log_r;
    let (level0, level_n) = (model.level(omegas[0]), model.level(omegas[n]));
    let uncorrected_rhs = a * (level_n - level0);
    let rhs = uncorrected_rhs + log_big_r * f(omegas[0]);
    let tol = 1e-12 * lhs.abs().max(1.0);
    SumCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + tol,
        c_equality: lhs - a * level_n,
        uncorrected_rhs,
        uncorrected_holds: lhs <= uncorrected_rhs + tol,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// sqrt(SS_res / SS_tot); 0 for a constant response
    pub normalized_residual: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    // treat roundoff-level variation as constant
    let flat = ss_tot <= 1e-24 * (my * my * n).max(1e-300);
    let (r_squared, normalized_residual) = if flat { (1.0, 0.0) } else { (1.0 - ss_res / ss_tot, (ss_res / ss_tot).sqrt()) };
    LinearFit { slope: if flat { 0.0 } else { slope }, intercept, r_squared, normalized_residual }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierReport {
    pub double: LinearFit,
    pub triple: LinearFit,
    pub preferred: GrowthModel,
    pub samples: usize,
    pub excluded: usize,
}

/// Linear fits of loglog Ω and logloglog Ω against t over samples with Ω > e^e.
pub fn growth_classifier(glob: &GlobalSeries, window: (f64, f64)) -> Result<ClassifierReport, GrowthError> {
    let guard = GrowthModel::Triple.guard();
    let mut ts = Vec::new();
    let mut oms = Vec::new();
    let mut excluded = 0;
    for s in glob.samples.iter().filter(|s| in_window(s.t, Some(window))) {
        if s.omega > guard {
            ts.push(s.t);
            oms.push(s.omega);
        } else {
            excluded += 1;
        }
    }
    if ts.len() < 10 {
        return Err(GrowthError::WindowEmpty);
    }
    let lvl = |m: GrowthModel| oms.iter().map(|&o| m.level(o)).collect::<Vec<_>>();
    let double = linear_fit(&ts, &lvl(GrowthModel::Double));
    let triple = linear_fit(&ts, &lvl(GrowthModel::Triple));
    let preferred = if triple.normalized_residual < double.normalized_residual {
        GrowthModel::Triple
    } else {
        GrowthModel::Double
    };
    Ok(ClassifierReport { double, triple, preferred, samples: ts.len(), excluded })
}
