//! The `verify` pipeline and its `report.txt` / `certificates.csv` output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sqg_core::growth::{
    build_partition, cordoba_fit, growth_classifier, hypothesis_monitor, key_estimate_check, replay_double,
    replay_triple, two_sided_check, GlobalSeries, GrowthError, InequalityCheck, Replay, SegmentSeries,
};
use sqg_core::io;
use sqg_core::tracking::stretching_inequality_check;

use crate::{CliError, DEFAULT_R, GLOBAL_SERIES, SEGMENT_SERIES};

#[derive(Debug, Clone)]
pub struct VerifyOutcome {
    pub report_path: PathBuf,
    pub certificates_path: PathBuf,
    pub report: String,
    /// names of inequality checks that returned holds = false
    pub failures: Vec<String>,
    /// AlignmentGap / RatioTooSmall and similar blocking errors
    pub blocking: Option<GrowthError>,
}

#[derive(Default)]
struct Report {
    text: String,
}

impl Report {
    fn section(&mut self, name: &str) {
        if !self.text.is_empty() {
            self.text.push('\n');
        }
        let _ = writeln!(self.text, "[{name}]");
    }

    fn kv(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.text, "{key} = {value}");
    }

    fn num(&mut self, key: &str, v: f64) {
        self.kv(key, format!("{v:?}"));
    }

    fn check(&mut self, prefix: &str, c: &InequalityCheck) {
        self.kv(&format!("{prefix}holds"), c.holds);
        self.num(&format!("{prefix}slack"), c.slack);
        self.num(&format!("{prefix}worst_t"), c.worst_t);
        self.kv(&format!("{prefix}checked"), c.checked);
    }

    fn error(&mut self, e: &GrowthError) {
        self.kv("status", "error");
        self.kv("error", e);
    }
}

/// Analysis window: the segment series' time span, starting no earlier than
/// the first time Ω exceeds ten times its initial value when that happens
/// inside the span.
pub fn analysis_window(glob: &GlobalSeries, seg: &SegmentSeries) -> Option<(f64, f64)> {
    let (s0, s1) = seg.time_range()?;
    let omega0 = glob.samples.first()?.omega;
    let start = glob
        .samples
        .iter()
        .find(|s| s.omega > 10.0 * omega0)
        .map_or(s0, |s| s.t.max(s0));
    (start < s1).then_some((start, s1))
}

fn write_replay(rep: &mut Report, result: &Result<Replay, GrowthError>, failures: &mut Vec<String>, certs: &mut String) {
    let replay = match result {
        Ok(r) => r,
        Err(e) => return rep.error(e),
    };
    let name = replay.model.name();
    rep.kv("status", if replay.c_k.is_empty() { "trivial" } else { "ok" });
    rep.kv("intervals", replay.c_k.len());
    rep.kv("skipped_nodes", replay.skipped_nodes);
    for (k, c) in replay.c_k.iter().enumerate() {
        rep.num(&format!("c_{k}"), *c);
    }
    rep.num("c_star", replay.c_star);
    rep.num("slope", replay.slope);
    rep.num("c_prime", replay.c_prime);
    rep.num("prefactor", replay.prefactor);
    rep.num("t0", replay.t0);
    rep.kv("dominates", replay.dominates);
    if !replay.dominates {
        failures.push(format!("replay_{name} certificate"));
    }
    for p in &replay.certificate {
        let _ = writeln!(certs, "{name},{:?},{:?},{:?}", p.t, p.measured, p.bound);
    }
    if let Some(sum) = replay.sum {
        rep.num("sum_lhs", sum.lhs);
        rep.num("sum_rhs", sum.rhs);
        rep.kv("sum_holds", sum.holds);
        rep.num("sum_c_equality", sum.c_equality);
        rep.num("sum_uncorrected_rhs", sum.uncorrected_rhs);
        rep.kv("sum_uncorrected_holds", sum.uncorrected_holds);
        if !sum.holds {
            failures.push(format!("replay_{name} Riemann sum"));
        }
    }
}

/// Runs every growth diagnostic over the series in `dir` and writes
/// `report.txt` and `certificates.csv` there.
pub fn verify(dir: &Path, r: Option<f64>) -> Result<VerifyOutcome, CliError> {
    let glob = io::read_global_series(&dir.join(GLOBAL_SERIES))?;
    let seg = io::read_segment_series(&dir.join(SEGMENT_SERIES))?;
    glob.validate()?;
    let r = r.unwrap_or(DEFAULT_R);
    let window = analysis_window(&glob, &seg).ok_or(GrowthError::WindowEmpty)?;
    let mut rep = Report::default();
    let mut failures = Vec::new();
    let mut blocking = None;
    let mut certs = String::from("model,t,measured,bound\n");

    rep.section("window");
    rep.num("t_start", window.0);
    rep.num("t_end", window.1);
    rep.num("r", r);

    rep.section("cordoba_fit");
    match cordoba_fit(&glob, Some(window)) {
        Ok(fit) => {
            rep.num("c", fit.c);
            rep.kv("samples", fit.ratios.len());
            rep.kv("excluded", fit.excluded);
        }
        Err(e) => rep.error(&e),
    }

    rep.section("hypothesis_monitor");
    let params = match hypothesis_monitor(&seg, &glob, Some(window)) {
        Ok(h) => {
            rep.num("c0", h.c0);
            rep.num("C0", h.big_c0);
            rep.num("c_L", h.c_l);
            rep.num("c_L_loglog", h.c_l_loglog);
            rep.num("max_M_L", h.max_m_l);
            rep.num("max_K_L", h.max_k_l);
            rep.num("R", h.big_r());
            rep.kv("rows", h.rows.len());
            rep.kv("loglog_excluded", h.loglog_excluded);
            match h.params(r).and_then(|p| p.check_ratio().map(|_| p)) {
                Ok(p) => Some(p),
                Err(e) => {
                    rep.error(&e);
                    blocking = Some(e);
                    None
                }
            }
        }
        Err(e) => {
            rep.error(&e);
            blocking = Some(e);
            None
        }
    };

    rep.section("build_partition");
    let mut trimmed = glob.clone();
    trimmed.samples.retain(|s| s.t <= window.1 + 1e-12);
    let partition = match build_partition(&trimmed, r, window.0) {
        Ok(p) => {
            rep.kv("intervals", p.intervals());
            for (k, (t, om)) in p.times.iter().zip(&p.omegas).enumerate() {
                rep.kv(&format!("t_{k}"), format!("{t:?} omega={om:?}"));
            }
            Some(p)
        }
        Err(e) => {
            rep.error(&e);
            None
        }
    };

    rep.section("key_estimate_check");
    if let Some(p) = &partition {
        let mut all = true;
        // the last node may fall short of a full interval; check the tail as well
        let mut bounds: Vec<(f64, f64)> = p.times.windows(2).map(|w| (w[0], w[1])).collect();
        if let Some(&t_last) = p.times.last() {
            if t_last < window.1 - 1e-12 {
                bounds.push((t_last, window.1));
            }
        }
        for (k, (a, b)) in bounds.iter().enumerate() {
            let label = if k < p.intervals() { format!("interval_{k}") } else { "tail".to_string() };
            match key_estimate_check(&seg, &glob, *a, *b) {
                Ok(c) => {
                    rep.kv(
                        &label,
                        format!("[{a:?}, {b:?}] holds={} slack={:?} worst_t={:?} checked={}", c.holds, c.slack, c.worst_t, c.checked),
                    );
                    if !c.holds {
                        all = false;
                        failures.push(format!("key_estimate_check on {label} [{a:?}, {b:?}] (worst t = {:?})", c.worst_t));
                    }
                }
                Err(e) => {
                    rep.kv(&label, format!("[{a:?}, {b:?}] error={e}"));
                    if matches!(e, GrowthError::AlignmentGap { .. }) && blocking.is_none() {
                        blocking = Some(e);
                    }
                }
            }
        }
        rep.kv("holds", all);
    }

    rep.section("two_sided_check");
    match two_sided_check(&seg, window.0, window.1) {
        Ok(c) => {
            rep.check("lower_", &c.lower);
            rep.check("upper_", &c.upper);
            if !c.holds() {
                failures.push("two_sided_check".into());
            }
        }
        Err(e) => rep.error(&e),
    }

    rep.section("stretching_check");
    match stretching_inequality_check(&seg, &glob) {
        Ok(c) => {
            rep.check("weak_", &c.weak);
            rep.num("weak_margin", c.weak_margin);
            rep.check("sharp_", &c.sharp);
            rep.num("sharp_margin", c.sharp_margin);
            if !c.weak.holds {
                failures.push("weak stretching inequality".into());
            }
            if !c.sharp.holds {
                failures.push("sharp stretching inequality".into());
            }
        }
        Err(e) => rep.kv("error", e),
    }

    for (name, f) in [("replay_double", replay_double as fn(_, _, _) -> _), ("replay_triple", replay_triple)] {
        rep.section(name);
        match (&partition, &params) {
            (Some(p), Some(params)) => write_replay(&mut rep, &f(&glob, p, params), &mut failures, &mut certs),
            _ => rep.kv("status", "skipped: needs a partition and admissible parameters"),
        }
    }

    rep.section("growth_classifier");
    match growth_classifier(&glob, window) {
        Ok(c) => {
            rep.kv("preferred", c.preferred.name());
            rep.num("double_slope", c.double.slope);
            rep.num("double_r_squared", c.double.r_squared);
            rep.num("double_residual", c.double.normalized_residual);
            rep.num("triple_slope", c.triple.slope);
            rep.num("triple_r_squared", c.triple.r_squared);
            rep.num("triple_residual", c.triple.normalized_residual);
            rep.kv("samples", c.samples);
            rep.kv("excluded", c.excluded);
        }
        Err(e) => rep.error(&e),
    }

    rep.section("summary");
    rep.kv("all_checks_hold", failures.is_empty());
    for (i, f) in failures.iter().enumerate() {
        rep.kv(&format!("failure_{i}"), f);
    }
    if let Some(b) = &blocking {
        rep.kv("blocking_error", b);
    }

    let report_path = dir.join("report.txt");
    let certificates_path = dir.join("certificates.csv");
    io::write_atomic(&report_path, rep.text.as_bytes())?;
    io::write_atomic(&certificates_path, certs.as_bytes())?;
    Ok(VerifyOutcome { report_path, certificates_path, report: rep.text, failures, blocking })
}

impl VerifyOutcome {
    /// Error carrying the exit status the command should report.
    pub fn into_result(self) -> Result<Self, CliError> {
        if let Some(b) = self.blocking {
            return Err(CliError::Growth(b));
        }
        if !self.failures.is_empty() {
            return Err(CliError::ChecksFailed(self.failures));
        }
        Ok(self)
    }
}

/// Parses `report.txt` into `(section, key, value)` triples.
pub fn parse_report(text: &str) -> Vec<(String, String, String)> {
    let mut section = String::new();
    let mut out = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name.to_string();
        } else if let Some((k, v)) = line.split_once(" = ") {
            out.push((section.clone(), k.to_string(), v.to_string()));
        }
    }
    out
}

/// Value of `key` in `section`, if present.
pub fn report_value<'a>(entries: &'a [(String, String, String)], section: &str, key: &str) -> Option<&'a str> {
    entries.iter().find(|(s, k, _)| s == section && k == key).map(|(_, _, v)| v.as_str())
}
