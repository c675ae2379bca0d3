//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.
//!
//! The n = 512 run to t = 6 takes several minutes on one core. It is cached
//! under the cargo target tmp dir and reused while its config is unchanged;
//! set `SQG_ACCEPTANCE_FRESH=1` to force a rerun.

use std::f64::consts::E;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use sqg_cli::report::{parse_report, report_value};
use sqg_cli::{simulate, trace, verify, RunConfig, TraceOptions, GLOBAL_SERIES};
use sqg_core::geometry::{check_div_identity, geometry_from_theta, region_overlap, DEFAULT_EPS_REL};
use sqg_core::growth::{growth_classifier, hypothesis_monitor, linear_fit, GlobalSeries, GrowthModel};
use sqg_core::interp::Interpolation;
use sqg_core::io;
use sqg_core::solver::{presets, Solver, SolverConfig};
use sqg_core::spectral::{Fourier, Grid, ScalarField};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

type Check = Result<Outcome, String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

const BIG_RUN: &str = "n = 512\nt_end = 6\ninitial = cmt\nsnapshot_every = 0.05\nseries_stride = 10\nout_dir = .\n";

fn cache_root() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

/// The cached n = 512 run directory, simulated on first use.
fn big_run() -> Result<PathBuf, String> {
    let dir = cache_root().join("cmt512");
    let cfg_path = dir.join("run.cfg");
    let fresh = std::env::var("SQG_ACCEPTANCE_FRESH").is_ok_and(|v| v == "1");
    let cached = !fresh
        && std::fs::read_to_string(&cfg_path).is_ok_and(|t| t == BIG_RUN)
        && dir.join(GLOBAL_SERIES).exists();
    if !cached {
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).map_err(err)?;
        std::fs::write(&cfg_path, BIG_RUN).map_err(err)?;
        let start = Instant::now();
        eprintln!("simulating cmt at n = 512 to t = 6 (cached for later runs)...");
        let cfg = RunConfig::load(&cfg_path).map_err(err)?;
        simulate(&cfg).map_err(err)?;
        eprintln!("  done in {:.0?}", start.elapsed());
    }
    Ok(dir)
}

fn snapshot_at(dir: &Path, t: f64) -> Result<ScalarField, String> {
    let snaps = io::list_snapshots(&dir.join("snapshots")).map_err(err)?;
    let (_, path) = snaps
        .iter()
        .find(|(ts, _)| (ts - t).abs() < 1e-9)
        .ok_or_else(|| format!("no snapshot at t = {t}"))?;
    Ok(io::read_snapshot(path).map_err(err)?.0)
}

fn cached_trace(run: &Path, name: &str, seed_time: f64, until: f64) -> Result<PathBuf, String> {
    let out = cache_root().join(name);
    let stamp = out.join("stamp.txt");
    let key = format!("{seed_time:?} {until:?} {}", std::fs::read_to_string(run.join(GLOBAL_SERIES)).map_err(err)?.len());
    if std::fs::read_to_string(&stamp).is_ok_and(|s| s == key) {
        return Ok(out);
    }
    let _ = std::fs::remove_dir_all(&out);
    std::fs::create_dir_all(&out).map_err(err)?;
    let opts = TraceOptions {
        seed_time,
        seed_length: 1.0,
        until: Some(until),
        out: Some(out.clone()),
        scheme: Interpolation::default(),
    };
    trace(run, &opts).map_err(err)?;
    std::fs::write(&stamp, key).map_err(err)?;
    Ok(out)
}

fn spectral_inversion() -> Check {
    let g = Grid::new(64).map_err(err)?;
    let fo = Fourier::new(g);
    let phase = |x: f64, y: f64| 3.0 * x + 4.0 * y;
    let theta = ScalarField::from_fn(g, |x, y| phase(x, y).cos());
    let hat = fo.forward(&theta);
    let psi = fo.inverse(&hat.invert_half_laplacian());
    let psi_err = psi.max_abs_diff(&theta.map(|v| -v / 5.0));
    let (a, b) = hat.velocity();
    let (u1, u2) = fo.inverse_pair(&a, &b);
    let u1_err = u1.max_abs_diff(&ScalarField::from_fn(g, |x, y| -0.8 * phase(x, y).sin()));
    let u2_err = u2.max_abs_diff(&ScalarField::from_fn(g, |x, y| 0.6 * phase(x, y).sin()));
    let worst = psi_err.max(u1_err).max(u2_err);
    Ok(outcome(worst < 1e-12, format!("max error {worst:.2e} (psi {psi_err:.1e}, u1 {u1_err:.1e}, u2 {u2_err:.1e})")))
}

fn steady_mode() -> Check {
    let g = Grid::new(64).map_err(err)?;
    let theta0 = ScalarField::from_fn(g, |x, _| x.cos());
    let out = Solver::new(g).run(&SolverConfig::new(64, 1.0), &theta0).map_err(err)?;
    let theta1 = out.final_state.theta(Solver::new(g).fourier());
    let e = theta1.max_abs_diff(&theta0);
    Ok(outcome(e < 1e-10 && out.final_state.t == 1.0, format!("|theta(1) - theta0|_inf = {e:.2e}")))
}

fn conservation() -> Check {
    let g = Grid::new(256).map_err(err)?;
    let theta0 = presets::cmt(g);
    let mut cfg = SolverConfig::new(256, 4.0);
    cfg.snapshot_times = (0..=8).map(|k| 0.5 * k as f64).collect();
    let out = Solver::new(g).run(&cfg, &theta0).map_err(err)?;
    let (l2_0, mean_0) = (theta0.l2_norm(), theta0.mean());
    let mut l2_drift = 0.0_f64;
    let mut mean_drift = 0.0_f64;
    for (_, th) in &out.snapshots {
        l2_drift = l2_drift.max((th.l2_norm() - l2_0).abs() / l2_0);
        mean_drift = mean_drift.max((th.mean() - mean_0).abs());
    }
    Ok(outcome(
        l2_drift < 1e-6 && mean_drift < 1e-12 && out.snapshots.len() == 9,
        format!("L2 relative drift {l2_drift:.2e}, mean drift {mean_drift:.2e} over {} snapshots", out.snapshots.len()),
    ))
}

fn growth_curve(glob: &GlobalSeries) -> Check {
    let late: Vec<_> = glob.samples.iter().filter(|s| s.t >= 2.0).collect();
    let monotone = late.windows(2).all(|w| w[1].omega >= w[0].omega);
    let (ts, ys): (Vec<f64>, Vec<f64>) = glob
        .samples
        .iter()
        .filter(|s| s.t >= 4.0 && s.t <= 6.0 && s.omega > E)
        .map(|s| (s.t, s.omega.ln().ln()))
        .unzip();
    let fit = linear_fit(&ts, &ys);
    let omega_max = glob.samples.iter().map(|s| s.omega).fold(0.0, f64::max);
    let classifier = growth_classifier(glob, (4.0, 6.0));
    let (prefers_double, class_detail) = match &classifier {
        Ok(c) => (
            c.preferred == GrowthModel::Double,
            format!("classifier prefers {} (residual double {:.3}, triple {:.3})", c.preferred.name(), c.double.normalized_residual, c.triple.normalized_residual),
        ),
        Err(e) => (false, format!("classifier: {e} (max omega {omega_max:.3} never exceeds e^e = {:.3})", E.exp())),
    };
    Ok(outcome(
        monotone && fit.r_squared > 0.9 && prefers_double,
        format!(
            "omega monotone for t >= 2: {monotone}; loglog fit on [4,6]: slope {:.4}, R^2 {:.5} over {} samples; {class_detail}",
            fit.slope,
            fit.r_squared,
            ts.len()
        ),
    ))
}

fn region_disjointness(run: &Path) -> Check {
    let mut fracs = Vec::new();
    for t in [5.0, 6.0] {
        let theta = snapshot_at(run, t)?;
        let geom = geometry_from_theta(&theta, DEFAULT_EPS_REL).map_err(err)?;
        let s = region_overlap(&geom, 0.5, 10.0).map_err(err)?;
        fracs.push((t, s.frac, s.area_a, s.area_b));
    }
    let pass = fracs.iter().all(|f| f.1 < 0.25);
    let detail = fracs
        .iter()
        .map(|(t, f, a, b)| format!("t={t}: overlap_frac {f:.4} (area_A {a:.4}, area_B {b:.4})"))
        .collect::<Vec<_>>()
        .join("; ");
    Ok(outcome(pass, detail))
}

fn div_identity(run: &Path) -> Check {
    let theta = snapshot_at(run, 4.0)?;
    let geom = geometry_from_theta(&theta, DEFAULT_EPS_REL).map_err(err)?;
    let r = check_div_identity(&geom);
    Ok(outcome(r < 1e-6, format!("residual {r:.2e} at t = 4")))
}

fn read_checks(dir: &Path) -> Result<Vec<[f64; 4]>, String> {
    let text = std::fs::read_to_string(dir.join("trace_checks.csv")).map_err(err)?;
    text.lines()
        .skip(1)
        .map(|l| {
            let v: Vec<f64> = l.split(',').take(4).map(|x| x.parse().unwrap_or(f64::NAN)).collect();
            Ok([v[0], v[1], v[2], v[3]])
        })
        .collect()
}

fn material_checks(seg5: &Path) -> Check {
    let rows: Vec<[f64; 4]> = read_checks(seg5)?.into_iter().filter(|r| r[0] <= 5.5 + 1e-9).collect();
    let s_beta = rows.iter().map(|r| r[1]).fold(0.0, f64::max);
    let cauchy = rows.iter().map(|r| r[2]).fold(0.0, f64::max);
    let det = rows.iter().map(|r| r[3]).fold(0.0, f64::max);
    Ok(outcome(
        s_beta < 0.02 && cauchy < 0.02 && det < 1e-4 && rows.len() > 1,
        format!("t in [5, 5.5] over {} times: cauchy {cauchy:.3e}, s_beta deviation {s_beta:.3e}, |det - 1| {det:.2e}", rows.len()),
    ))
}

fn certificates(seg4: &Path) -> Check {
    let v = verify(seg4, Some(2.0)).map_err(err)?;
    let entries = parse_report(&v.report);
    let get = |s: &str, k: &str| report_value(&entries, s, k).unwrap_or("missing").to_string();
    let key_ok = get("key_estimate_check", "holds") == "true";
    let finite = |s: &str| get(s, "c_star").parse::<f64>().is_ok_and(f64::is_finite);
    let replay_ok = |s: &str| get(s, "status") == "ok" && finite(s) && get(s, "dominates") == "true";
    let sums_ok = ["replay_double", "replay_triple"].iter().all(|s| get(s, "sum_holds") == "true");
    let (double_ok, triple_ok) = (replay_ok("replay_double"), replay_ok("replay_triple"));

    // planted double-exponential slope
    let a = 0.7;
    let synth = GlobalSeries::from_omega_u((0..=400).map(|i| {
        let t = 1.0 + 3.0 * i as f64 / 400.0;
        (t, (a * t).exp().exp(), 1.0)
    }));
    let c = growth_classifier(&synth, (1.0, 4.0)).map_err(err)?;
    let slope_err = (c.double.slope - a).abs() / a;

    let describe = |s: &str| {
        if get(s, "status") == "error" {
            format!("{s}: {}", get(s, "error"))
        } else {
            format!("{s}: status {} c_star {} dominates {} sum_holds {}", get(s, "status"), get(s, "c_star"), get(s, "dominates"), get(s, "sum_holds"))
        }
    };
    Ok(outcome(
        key_ok && double_ok && triple_ok && sums_ok && slope_err < 0.01,
        format!(
            "partition intervals {}; key_estimate holds {}; R = {} (r = 2), hypothesis monitor: {}; {}; {}; synthetic slope {:.6} vs {a} (rel err {slope_err:.1e})",
            get("build_partition", "intervals"),
            get("key_estimate_check", "holds"),
            get("hypothesis_monitor", "R"),
            report_value(&entries, "hypothesis_monitor", "error").unwrap_or("admissible"),
            describe("replay_double"),
            describe("replay_triple"),
            c.double.slope,
        ),
    ))
}

fn hypotheses(run: &Path, seg5: &Path) -> Check {
    let glob = io::read_global_series(&run.join(GLOBAL_SERIES)).map_err(err)?;
    let seg = io::read_segment_series(&seg5.join("segment_series.csv")).map_err(err)?;
    let h = hypothesis_monitor(&seg, &glob, Some((5.0, 6.0))).map_err(err)?;
    let pass = h.c0 > 0.0 && h.big_c0.is_finite() && h.c_l > 0.0 && h.max_m_l.is_finite() && h.max_k_l.is_finite();
    Ok(outcome(
        pass,
        format!(
            "c0 {:.4}, C0 {:.4}, c_L {:.4}, max M*L {:.4}, max K*L {:.4} over {} samples",
            h.c0,
            h.big_c0,
            h.c_l,
            h.max_m_l,
            h.max_k_l,
            h.rows.len()
        ),
    ))
}

fn format_and_determinism(run: &Path) -> Check {
    let tmp = tempfile::tempdir().map_err(err)?;
    let theta = snapshot_at(run, 5.0)?;
    let base = tmp.path().join("copy");
    io::write_snapshot(&base, &theta, 5.0).map_err(err)?;
    let (back, t) = io::read_snapshot(&base).map_err(err)?;
    let exact = t == 5.0 && back.values().iter().zip(theta.values()).all(|(a, b)| a.to_bits() == b.to_bits());

    let cfg = "n = 64\nt_end = 0.5\ninitial = cmt\nsnapshot_every = 0.25\nseries_stride = 1\nout_dir = out\n";
    let mut outputs = Vec::new();
    for k in 0..2 {
        let d = tmp.path().join(format!("run{k}"));
        std::fs::create_dir_all(&d).map_err(err)?;
        std::fs::write(d.join("run.cfg"), cfg).map_err(err)?;
        let status = Command::new(env!("CARGO_BIN_EXE_sqg"))
            .arg("simulate")
            .arg(d.join("run.cfg"))
            .env("SQG_THREADS", "2")
            .output()
            .map_err(err)?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        outputs.push(std::fs::read(d.join("out").join(GLOBAL_SERIES)).map_err(err)?);
    }
    let identical = outputs[0] == outputs[1] && !outputs[0].is_empty();
    Ok(outcome(exact && identical, format!("snapshot round trip bit-exact: {exact}; repeated runs byte-identical: {identical}")))
}

fn main() {
    // cargo passes harness flags; a filter that excludes "acceptance" skips the run
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }
    let mut results: Vec<(usize, &str, Check)> = vec![
        (1, "spectral inversion", spectral_inversion()),
        (2, "steady single mode", steady_mode()),
        (3, "conservation", conservation()),
    ];
    match big_run() {
        Ok(run) => {
            let glob = io::read_global_series(&run.join(GLOBAL_SERIES)).map_err(err);
            results.push((4, "growth curve", glob.and_then(|g| growth_curve(&g))));
            results.push((5, "region disjointness", region_disjointness(&run)));
            results.push((6, "divergence identity", div_identity(&run)));
            let seg5 = cached_trace(&run, "segment_t5", 5.0, 6.0);
            results.push((7, "material checks", seg5.clone().and_then(|d| material_checks(&d))));
            let seg4 = cached_trace(&run, "segment_t4", 4.0, 6.0);
            results.push((8, "growth certificates", seg4.and_then(|d| certificates(&d))));
            results.push((9, "hypothesis monitor", seg5.and_then(|d| hypotheses(&run, &d))));
            results.push((10, "format and determinism", format_and_determinism(&run)));
        }
        Err(e) => {
            for (k, name) in [(4, "growth curve"), (5, "region disjointness"), (6, "divergence identity"), (7, "material checks"), (8, "growth certificates"), (9, "hypothesis monitor"), (10, "format and determinism")] {
                results.push((k, name, Err(format!("n = 512 run failed: {e}"))));
            }
        }
    }
    let mut failed = 0;
    for (k, name, r) in &results {
        let (pass, detail) = match r {
            Ok(o) => (o.pass, o.detail.as_str()),
            Err(e) => (false, e.as_str()),
        };
        if !pass {
            failed += 1;
        }
        println!("criterion {k:>2} {}: {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} of {} criteria pass", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
