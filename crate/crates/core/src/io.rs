//! On-disk formats: raw snapshots, series CSVs, polyline CSVs and
//! run-length-encoded masks. Every file is written to a temporary sibling
//! and renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::RegionMask;
use crate::growth::{GlobalSample, GlobalSeries, SegmentSample, SegmentSeries};
use crate::point::Point;
use crate::spectral::{Grid, ScalarField};

pub const SNAPSHOT_MAGIC: &str = "SQG1";
pub const GLOBAL_HEADER: [&str; 7] = ["t", "omega", "u_max", "bkm", "area_A", "area_B", "overlap_frac"];
pub const SEGMENT_HEADER: [&str; 8] = ["t", "l", "m", "k", "omega_l", "u_xi", "u_n", "n_markers"];
pub const POLYLINE_HEADER: [&str; 4] = ["polyline_id", "vertex_index", "x1", "x2"];

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

impl IoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io { path: path.to_path_buf(), source }
    }

    fn format(path: &Path, msg: impl Into<String>) -> Self {
        IoError::Format { path: path.to_path_buf(), msg: msg.into() }
    }
}

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| IoError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| IoError::io(&tmp, e))?;
    f.sync_all().map_err(|e| IoError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| IoError::io(path, e))
}

fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|e| IoError::io(path, e))
}

// ---- snapshots

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotMeta {
    pub n: usize,
    pub t: f64,
}

/// Strips a `.meta` or `.f64` extension if present.
pub fn snapshot_base(path: &Path) -> PathBuf {
    match path.extension().and_then(|e| e.to_str()) {
        Some("meta") | Some("f64") => path.with_extension(""),
        _ => path.to_path_buf(),
    }
}

fn with_suffix(base: &Path, ext: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

pub fn snapshot_paths(base: &Path) -> (PathBuf, PathBuf) {
    let base = snapshot_base(base);
    (with_suffix(&base, "meta"), with_suffix(&base, "f64"))
}

/// Writes `<base>.f64` then `<base>.meta`; readers key on the meta file.
pub fn write_snapshot(base: &Path, theta: &ScalarField, t: f64) -> Result<(), IoError> {
    let (meta, payload) = snapshot_paths(base);
    let mut bytes = Vec::with_capacity(8 * theta.values().len());
    for v in theta.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(&payload, &bytes)?;
    let text = format!(
        "{SNAPSHOT_MAGIC}\nn = {}\nt = {t:?}\nbyte_order = LE\nlayout = row-major\ndtype = f64\n",
        theta.grid().n()
    );
    write_atomic(&meta, text.as_bytes())
}

pub fn read_snapshot_meta(base: &Path) -> Result<SnapshotMeta, IoError> {
    let (meta_path, _) = snapshot_paths(base);
    let text = read_text(&meta_path)?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(SNAPSHOT_MAGIC) {
        return Err(IoError::format(&meta_path, format!("missing magic {SNAPSHOT_MAGIC}")));
    }
    let (mut n, mut t) = (None, None);
    for (no, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(IoError::format(&meta_path, format!("line {}: expected key = value", no + 2)));
        };
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| IoError::format(&meta_path, format!("line {}: bad {what} '{value}'", no + 2));
        match key {
            "n" => n = Some(value.parse::<usize>().map_err(|_| bad("n"))?),
            "t" => t = Some(value.parse::<f64>().ok().filter(|t| t.is_finite()).ok_or_else(|| bad("t"))?),
            "byte_order" if value == "LE" => {}
            "layout" if value == "row-major" => {}
            "dtype" if value == "f64" => {}
            "byte_order" | "layout" | "dtype" => return Err(bad(key)),
            _ => return Err(IoError::format(&meta_path, format!("line {}: unknown key '{key}'", no + 2))),
        }
    }
    match (n, t) {
        (Some(n), Some(t)) => Ok(SnapshotMeta { n, t }),
        _ => Err(IoError::format(&meta_path, "meta needs n and t")),
    }
}

pub fn read_snapshot(base: &Path) -> Result<(ScalarField, f64), IoError> {
    let meta = read_snapshot_meta(base)?;
    let (_, payload) = snapshot_paths(base);
    let bytes = fs::read(&payload).map_err(|e| IoError::io(&payload, e))?;
    let expected = 8 * meta.n * meta.n;
    if bytes.len() != expected {
        return Err(IoError::format(
            &payload,
            format!("payload is {} bytes, expected {expected} for n = {}", bytes.len(), meta.n),
        ));
    }
    let grid = Grid::new(meta.n).map_err(|e| IoError::format(&payload, e.to_string()))?;
    let values: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let field = ScalarField::new(grid, values).map_err(|e| IoError::format(&payload, e.to_string()))?;
    Ok((field, meta.t))
}

/// All snapshots in `dir`, sorted by time.
pub fn list_snapshots(dir: &Path) -> Result<Vec<(f64, PathBuf)>, IoError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| IoError::io(dir, e))? {
        let path = entry.map_err(|e| IoError::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("meta") {
            let base = snapshot_base(&path);
            out.push((read_snapshot_meta(&base)?.t, base));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

// ---- CSV

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn read_csv(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>, IoError> {
    let text = read_text(path)?;
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let found = r.headers().map_err(|e| IoError::format(path, e.to_string()))?.clone();
    if found.iter().ne(header.iter().copied()) {
        let found: Vec<&str> = found.iter().collect();
        return Err(IoError::format(path, format!("header {found:?} does not match {header:?}")));
    }
    r.records()
        .map(|rec| rec.map_err(|e| IoError::format(path, e.to_string())))
        .collect()
}

fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, i: usize, name: &str) -> Result<T, IoError> {
    let line = rec.position().map_or(0, |p| p.line());
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| IoError::format(path, format!("line {line}: bad {name}")))
}

pub fn global_series_csv(series: &GlobalSeries) -> Vec<u8> {
    csv_bytes(
        &GLOBAL_HEADER,
        series.samples.iter().map(|s| {
            [s.t, s.omega, s.u_max, s.bkm, s.area_a, s.area_b, s.overlap_frac].into_iter().map(num).collect()
        }),
    )
}

pub fn write_global_series(path: &Path, series: &GlobalSeries) -> Result<(), IoError> {
    write_atomic(path, &global_series_csv(series))
}

pub fn read_global_series(path: &Path) -> Result<GlobalSeries, IoError> {
    let mut samples = Vec::new();
    for rec in read_csv(path, &GLOBAL_HEADER)? {
        let v: Vec<f64> = (0..7).map(|i| field(path, &rec, i, GLOBAL_HEADER[i])).collect::<Result<_, _>>()?;
        samples.push(GlobalSample { t: v[0], omega: v[1], u_max: v[2], bkm: v[3], area_a: v[4], area_b: v[5], overlap_frac: v[6] });
    }
    Ok(GlobalSeries { samples })
}

pub fn write_segment_series(path: &Path, series: &SegmentSeries) -> Result<(), IoError> {
    let bytes = csv_bytes(
        &SEGMENT_HEADER,
        series.samples.iter().map(|s| {
            let mut r: Vec<String> = [s.t, s.l, s.m, s.k, s.omega_l, s.u_xi, s.u_n].into_iter().map(num).collect();
            r.push(s.n_markers.to_string());
            r
        }),
    );
    write_atomic(path, &bytes)
}

pub fn read_segment_series(path: &Path) -> Result<SegmentSeries, IoError> {
    let mut samples = Vec::new();
    for rec in read_csv(path, &SEGMENT_HEADER)? {
        let v: Vec<f64> = (0..7).map(|i| field(path, &rec, i, SEGMENT_HEADER[i])).collect::<Result<_, _>>()?;
        samples.push(SegmentSample {
            t: v[0],
            l: v[1],
            m: v[2],
            k: v[3],
            omega_l: v[4],
            u_xi: v[5],
            u_n: v[6],
            n_markers: field(path, &rec, 7, "n_markers")?,
        });
    }
    Ok(SegmentSeries { samples })
}

pub fn write_polylines(path: &Path, lines: &[Vec<Point>]) -> Result<(), IoError> {
    let rows = lines.iter().enumerate().flat_map(|(id, pts)| {
        pts.iter().enumerate().map(move |(v, p)| vec![id.to_string(), v.to_string(), num(p.x1), num(p.x2)])
    });
    write_atomic(path, &csv_bytes(&POLYLINE_HEADER, rows))
}

pub fn read_polylines(path: &Path) -> Result<Vec<Vec<Point>>, IoError> {
    let mut lines: Vec<Vec<Point>> = Vec::new();
    for rec in read_csv(path, &POLYLINE_HEADER)? {
        let id: usize = field(path, &rec, 0, "polyline_id")?;
        let vertex: usize = field(path, &rec, 1, "vertex_index")?;
        let p = Point::new(field(path, &rec, 2, "x1")?, field(path, &rec, 3, "x2")?);
        if id == lines.len() {
            lines.push(Vec::new());
        }
        let count = lines.len();
        match lines.get_mut(id) {
            Some(l) if id + 1 == count && vertex == l.len() => l.push(p),
            _ => return Err(IoError::format(path, format!("polyline {id} vertex {vertex} out of order"))),
        }
    }
    Ok(lines)
}

// ---- masks

/// One line per grid row (x₂ outer): run lengths alternating outside/inside,
/// starting with an outside run that may be zero.
pub fn mask_rle(mask: &RegionMask) -> String {
    let n = mask.grid.n();
    let mut s = format!("rle n = {n}\n");
    for row in mask.member.chunks(n) {
        let mut runs = Vec::new();
        let (mut cur, mut len) = (false, 0usize);
        for &m in row {
            if m == cur {
                len += 1;
            } else {
                runs.push(len.to_string());
                cur = m;
                len = 1;
            }
        }
        runs.push(len.to_string());
        s.push_str(&runs.join(" "));
        s.push('\n');
    }
    s
}

pub fn write_mask(path: &Path, mask: &RegionMask) -> Result<(), IoError> {
    write_atomic(path, mask_rle(mask).as_bytes())
}

pub fn read_mask(path: &Path) -> Result<RegionMask, IoError> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    let n: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("rle n ="))
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| IoError::format(path, "missing 'rle n = N' header"))?;
    let grid = Grid::new(n).map_err(|e| IoError::format(path, e.to_string()))?;
    let mut member = Vec::with_capacity(n * n);
    for (j, line) in lines.enumerate() {
        let start = member.len();
        let mut inside = false;
        for tok in line.split_whitespace() {
            let len: usize = tok.parse().map_err(|_| IoError::format(path, format!("row {j}: bad run '{tok}'")))?;
            member.extend(std::iter::repeat_n(inside, len));
            inside = !inside;
        }
        if member.len() - start != n {
            return Err(IoError::format(path, format!("row {j} covers {} cells, expected {n}", member.len() - start)));
        }
    }
    if member.len() != n * n {
        return Err(IoError::format(path, format!("{} rows, expected {n}", member.len() / n)));
    }
    Ok(RegionMask { grid, member })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(16).unwrap();
        let theta = ScalarField::from_fn(g, |x, y| (x * 3.1).sin() * (y + 0.1).exp() / 7.0);
        let base = dir.path().join("theta_000001");
        write_snapshot(&base, &theta, 0.1 + 0.2).unwrap();
        let (back, t) = read_snapshot(&base.with_extension("meta")).unwrap();
        assert_eq!(t, 0.1 + 0.2);
        assert!(back.values().iter().zip(theta.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(list_snapshots(dir.path()).unwrap(), vec![(t, base)]);
    }

    #[test]
    fn snapshot_rejects_bad_magic_and_size() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(8).unwrap();
        let base = dir.path().join("s");
        write_snapshot(&base, &ScalarField::zeros(g), 0.0).unwrap();
        let (meta, payload) = snapshot_paths(&base);
        fs::write(&payload, vec![0u8; 8 * 63]).unwrap();
        assert!(matches!(read_snapshot(&base), Err(IoError::Format { .. })));
        fs::write(&meta, "SQG2\nn = 8\nt = 0\n").unwrap();
        assert!(matches!(read_snapshot(&base), Err(IoError::Format { .. })));
    }

    #[test]
    fn series_round_trip_and_schema() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.csv");
        let mut s = GlobalSeries::from_omega_u([(0.0, 1.0, 2.0), (0.5, 3.25, 1e-300)]);
        s.samples[1].area_a = f64::NAN;
        write_global_series(&p, &s).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("t,omega,u_max,bkm,area_A,area_B,overlap_frac\n"));
        let back = read_global_series(&p).unwrap();
        assert_eq!(back.samples.len(), 2);
        assert_eq!(back.samples[1].u_max, 1e-300);
        assert!(back.samples[1].area_a.is_nan());
        fs::write(&p, "t,omega,u_max,bkm,area_A,area_B,overlap_frac,extra\n").unwrap();
        assert!(read_global_series(&p).is_err());

        let seg = SegmentSeries {
            samples: vec![SegmentSample { t: 5.0, l: 1.0, m: 0.5, k: 2.0, omega_l: 30.0, u_xi: 0.1, u_n: 0.2, n_markers: 40 }],
        };
        let q = dir.path().join("s.csv");
        write_segment_series(&q, &seg).unwrap();
        assert_eq!(read_segment_series(&q).unwrap(), seg);
    }

    #[test]
    fn polylines_and_masks_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let lines = vec![vec![Point::new(0.0, 1.0), Point::new(0.5, 1.5)], vec![Point::new(3.0, 3.0)]];
        let p = dir.path().join("c.csv");
        write_polylines(&p, &lines).unwrap();
        assert_eq!(read_polylines(&p).unwrap(), lines);

        let g = Grid::new(8).unwrap();
        let member: Vec<bool> = (0..64).map(|i| (i * 7 + i / 8) % 3 == 0).collect();
        let mask = RegionMask { grid: g, member };
        let q = dir.path().join("m.rle");
        write_mask(&q, &mask).unwrap();
        assert_eq!(read_mask(&q).unwrap(), mask);
    }
}
