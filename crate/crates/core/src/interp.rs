//! Point evaluation of gridded fields: tensor-product cubic Lagrange
//! interpolation on the periodic grid and the exact trigonometric sum.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::point::Point;
use crate::spectral::{Fourier, Grid, ScalarField, Spectrum};

/// How point values are reconstructed from a gridded field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    /// 4×4 cubic Lagrange stencil on the grid, optionally after spectral
    /// refinement of the grid by `refine` (1 = the native grid).
    Bicubic { refine: usize },
    /// Exact evaluation of the Fourier series.
    Fourier,
}

impl Default for Interpolation {
    fn default() -> Self {
        Interpolation::Bicubic { refine: 2 }
    }
}

#[inline]
fn cubic_weights(t: f64) -> [f64; 4] {
    // Lagrange basis on nodes -1, 0, 1, 2
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

/// Stencil indices and weights for one point; reusable across fields on the same grid.
#[derive(Debug, Clone, Copy)]
pub struct CubicStencil {
    ix: [usize; 4],
    iy: [usize; 4],
    wx: [f64; 4],
    wy: [f64; 4],
}

impl CubicStencil {
    pub fn new(grid: Grid, p: Point) -> Self {
        let n = grid.n() as i64;
        let h = grid.h();
        let sx = p.x1.rem_euclid(TAU) / h;
        let sy = p.x2.rem_euclid(TAU) / h;
        let fx = sx.floor();
        let fy = sy.floor();
        let (i0, j0) = (fx as i64, fy as i64);
        let mut ix = [0; 4];
        let mut iy = [0; 4];
        for o in 0..4 {
            ix[o] = (i0 - 1 + o as i64).rem_euclid(n) as usize;
            iy[o] = (j0 - 1 + o as i64).rem_euclid(n) as usize;
        }
        Self { ix, iy, wx: cubic_weights(sx - fx), wy: cubic_weights(sy - fy) }
    }

    #[inline]
    pub fn apply(&self, values: &[f64], n: usize) -> f64 {
        let mut acc = 0.0;
        for b in 0..4 {
            let row = &values[self.iy[b] * n..(self.iy[b] + 1) * n];
            let mut r = 0.0;
            for a in 0..4 {
                r += self.wx[a] * row[self.ix[a]];
            }
            acc += self.wy[b] * r;
        }
        acc
    }
}

/// Bicubic (tensor cubic Lagrange) value of a periodic field at `p`.
pub fn bicubic(field: &ScalarField, p: Point) -> f64 {
    CubicStencil::new(field.grid(), p).apply(field.values(), field.grid().n())
}

/// Direct evaluation of `Σ f̂(k) e^{ik·x}` (Nyquist modes skipped). O(n²) per point.
pub fn fourier_sum(spectrum: &Spectrum, p: Point) -> f64 {
    CompactSpectrum::new(spectrum).eval(p)
}

/// Half-plane (`k₁ ≥ 0`) copy of a real field's spectrum restricted to its
/// nonzero band, with the conjugate-pair weight folded in.
#[derive(Debug, Clone)]
pub struct CompactSpectrum {
    band: i64,
    // rows k2 = -band..=band, columns k1 = 0..=band
    coeffs: Vec<Complex64>,
}

impl CompactSpectrum {
    pub fn new(spectrum: &Spectrum) -> Self {
        let grid = spectrum.grid();
        let half = grid.n() as i64 / 2 - 1;
        let mut band = 0;
        for (idx, c) in spectrum.coefficients().iter().enumerate() {
            if c.norm_sqr() == 0.0 {
                continue;
            }
            let k1 = grid.wavenumber(idx % grid.n());
            let k2 = grid.wavenumber(idx / grid.n());
            if k1.abs() > half || k2.abs() > half {
                continue;
            }
            band = band.max(k1.abs()).max(k2.abs());
        }
        let width = (band + 1) as usize;
        let mut coeffs = Vec::with_capacity((2 * band + 1) as usize * width);
        for k2 in -band..=band {
            for k1 in 0..=band {
                let w = if k1 == 0 { 1.0 } else { 2.0 };
                coeffs.push(spectrum.mode(k1, k2) * w);
            }
        }
        Self { band, coeffs }
    }

    /// Like [`CompactSpectrum::new`] but with a fixed band, so spectra on one grid share a layout.
    pub fn with_band(spectrum: &Spectrum, band: i64) -> Self {
        let half = spectrum.grid().n() as i64 / 2 - 1;
        let band = band.min(half);
        let width = (band + 1) as usize;
        let mut coeffs = Vec::with_capacity((2 * band + 1) as usize * width);
        for k2 in -band..=band {
            for k1 in 0..=band {
                let w = if k1 == 0 { 1.0 } else { 2.0 };
                coeffs.push(spectrum.mode(k1, k2) * w);
            }
        }
        Self { band, coeffs }
    }

    pub fn band(&self) -> i64 {
        self.band
    }

    fn row(&self, k2: i64) -> &[Complex64] {
        let width = (self.band + 1) as usize;
        let r = (k2 + self.band) as usize;
        &self.coeffs[r * width..(r + 1) * width]
    }

    pub fn eval(&self, p: Point) -> f64 {
        let ex = phases(p.x1, self.band, 0);
        let ey = phases(p.x2, self.band, -self.band);
        let mut acc = 0.0;
        for (r, k2) in (-self.band..=self.band).enumerate() {
            let s: Complex64 = self.row(k2).iter().zip(&ex).map(|(c, e)| c * e).sum();
            acc += (ey[r] * s).re;
        }
        acc
    }
}

/// `e^{i k x}` for `k = start..=band`.
fn phases(x: f64, band: i64, start: i64) -> Vec<Complex64> {
    (start..=band)
        .map(|k| {
            let (s, c) = (k as f64 * x).sin_cos();
            Complex64::new(c, s)
        })
        .collect()
}

/// Values of θ, its first and second derivatives, and the SQG velocity at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub theta: f64,
    pub tx: f64,
    pub ty: f64,
    pub txx: f64,
    pub txy: f64,
    pub tyy: f64,
    pub u1: f64,
    pub u2: f64,
}

impl Jet {
    pub fn lerp(a: &Jet, b: &Jet, w: f64) -> Jet {
        let m = |x: f64, y: f64| x + w * (y - x);
        Jet {
            theta: m(a.theta, b.theta),
            tx: m(a.tx, b.tx),
            ty: m(a.ty, b.ty),
            txx: m(a.txx, b.txx),
            txy: m(a.txy, b.txy),
            tyy: m(a.tyy, b.tyy),
            u1: m(a.u1, b.u1),
            u2: m(a.u2, b.u2),
        }
    }

    #[inline]
    pub fn grad_perp(&self) -> Point {
        Point::new(-self.ty, self.tx)
    }

    #[inline]
    pub fn velocity(&self) -> Point {
        Point::new(self.u1, self.u2)
    }
}

#[derive(Debug, Clone)]
enum JetStorage {
    Grid { grid: Grid, fields: Box<[Vec<f64>; 8]> },
    Series { theta: CompactSpectrum, inv_k: Vec<f64> },
}

/// Point sampler for the full [`Jet`] of a θ snapshot.
#[derive(Debug, Clone)]
pub struct JetField {
    storage: JetStorage,
}

impl JetField {
    pub fn new(theta_hat: &Spectrum, scheme: Interpolation) -> Self {
        match scheme {
            Interpolation::Fourier => {
                let theta = CompactSpectrum::new(theta_hat);
                let inv_k = inverse_wavenumbers(theta.band());
                JetField { storage: JetStorage::Series { theta, inv_k } }
            }
            Interpolation::Bicubic { refine } => {
                let spec = refined(theta_hat, refine.max(1));
                let grid = spec.grid();
                let fo = Fourier::new(grid);
                use crate::spectral::Axis::{X1, X2};
                let (u1, u2) = spec.velocity();
                let tx = spec.derivative(X1, 1);
                let ty = spec.derivative(X2, 1);
                let txx = spec.derivative(X1, 2);
                let tyy = spec.derivative(X2, 2);
                let txy = tx.derivative(X2, 1);
                let (f0, f1) = fo.inverse_pair(&spec, &tx);
                let (f2, f3) = fo.inverse_pair(&ty, &txx);
                let (f4, f5) = fo.inverse_pair(&txy, &tyy);
                let (f6, f7) = fo.inverse_pair(&u1, &u2);
                let fields = Box::new([f0, f1, f2, f3, f4, f5, f6, f7].map(ScalarField::into_values));
                JetField { storage: JetStorage::Grid { grid, fields } }
            }
        }
    }

    pub fn jet(&self, p: Point) -> Jet {
        match &self.storage {
            JetStorage::Grid { grid, fields } => {
                let st = CubicStencil::new(*grid, p);
                let n = grid.n();
                let v = |f: usize| st.apply(&fields[f], n);
                Jet {
                    theta: v(0),
                    tx: v(1),
                    ty: v(2),
                    txx: v(3),
                    txy: v(4),
                    tyy: v(5),
                    u1: v(6),
                    u2: v(7),
                }
            }
            JetStorage::Series { theta, inv_k } => series_jet(theta, inv_k, p),
        }
    }

    pub fn velocity(&self, p: Point) -> Point {
        match &self.storage {
            JetStorage::Grid { grid, fields } => {
                let st = CubicStencil::new(*grid, p);
                Point::new(st.apply(&fields[6], grid.n()), st.apply(&fields[7], grid.n()))
            }
            JetStorage::Series { theta, inv_k } => series_velocity(theta, inv_k, p),
        }
    }
}

fn series_jet(theta: &CompactSpectrum, inv_k: &[f64], p: Point) -> Jet {
    let band = theta.band();
    let width = (band + 1) as usize;
    let ex = phases(p.x1, band, 0);
    let ey = phases(p.x2, band, -band);
    let mut j = Jet::default();
    for (r, k2) in (-band..=band).enumerate() {
        let row = theta.row(k2);
        let ik = &inv_k[r * width..(r + 1) * width];
        let (mut b0, mut b1, mut b2, mut bu1, mut bu2) : (Complex64, Complex64, Complex64, Complex64, Complex64) = Default::default();
        for (k1, ((c, e), &q)) in row.iter().zip(&ex).zip(ik).enumerate() {
            let z: Complex64 = c * e;
            let k1 = k1 as f64;
            b0 += z;
            b1 += z * k1;
            b2 += z * (k1 * k1);
            bu1 += z * q;
            bu2 += z * (k1 * q);
        }
        let e = ey[r];
        let k2 = k2 as f64;
        let (z0, z1, z2, zu1, zu2): (Complex64, Complex64, Complex64, Complex64, Complex64) =
            (e * b0, e * b1, e * b2, e * bu1, e * bu2);
        j.theta += z0.re;
        j.tx -= z1.im;
        j.ty -= k2 * z0.im;
        j.txx -= z2.re;
        j.txy -= k2 * z1.re;
        j.tyy -= k2 * k2 * z0.re;
        j.u1 -= k2 * zu1.im;
        j.u2 += zu2.im;
    }
    j
}

fn series_velocity(theta: &CompactSpectrum, inv_k: &[f64], p: Point) -> Point {
    let band = theta.band();
    let width = (band + 1) as usize;
    let ex = phases(p.x1, band, 0);
    let ey = phases(p.x2, band, -band);
    let (mut u1, mut u2) = (0.0, 0.0);
    for (r, k2) in (-band..=band).enumerate() {
        let row = theta.row(k2);
        let ik = &inv_k[r * width..(r + 1) * width];
        let mut bu1 = Complex64::new(0.0, 0.0);
        let mut bu2 = Complex64::new(0.0, 0.0);
        for (k1, ((c, e), &q)) in row.iter().zip(&ex).zip(ik).enumerate() {
            let z: Complex64 = c * e * q;
            bu1 += z;
            bu2 += z * k1 as f64;
        }
        let e = ey[r];
        u1 -= k2 as f64 * (e * bu1).im;
        u2 += (e * bu2).im;
    }
    Point::new(u1, u2)
}

/// Point sampler for the SQG velocity alone.
#[derive(Debug, Clone)]
pub struct VelocitySampler {
    storage: VelocityStorage,
}

#[derive(Debug, Clone)]
enum VelocityStorage {
    Grid { grid: Grid, u1: Vec<f64>, u2: Vec<f64> },
    Series { theta: CompactSpectrum, inv_k: Vec<f64> },
}

impl VelocitySampler {
    pub fn new(theta_hat: &Spectrum, scheme: Interpolation) -> Self {
        let storage = match scheme {
            Interpolation::Fourier => {
                let theta = CompactSpectrum::with_band(theta_hat, theta_hat.grid().cutoff());
                let inv_k = inverse_wavenumbers(theta.band());
                VelocityStorage::Series { theta, inv_k }
            }
            Interpolation::Bicubic { refine } => {
                let spec = refined(theta_hat, refine.max(1));
                let grid = spec.grid();
                let (a, b) = spec.velocity();
                let (u1, u2) = Fourier::new(grid).inverse_pair(&a, &b);
                VelocityStorage::Grid { grid, u1: u1.into_values(), u2: u2.into_values() }
            }
        };
        Self { storage }
    }

    pub fn velocity(&self, p: Point) -> Point {
        match &self.storage {
            VelocityStorage::Grid { grid, u1, u2 } => {
                let st = CubicStencil::new(*grid, p);
                Point::new(st.apply(u1, grid.n()), st.apply(u2, grid.n()))
            }
            VelocityStorage::Series { theta, inv_k } => series_velocity(theta, inv_k, p),
        }
    }

    /// `(1-w)·u_a(p) + w·u_b(p)`; the series form blends coefficients in one pass.
    pub fn blend(a: &VelocitySampler, b: &VelocitySampler, w: f64, p: Point) -> Point {
        match (&a.storage, &b.storage) {
            (VelocityStorage::Series { theta: ta, inv_k }, VelocityStorage::Series { theta: tb, .. })
                if ta.band == tb.band =>
            {
                series_velocity_blend(ta, tb, w, inv_k, p)
            }
            _ => {
                let (ua, ub) = (a.velocity(p), b.velocity(p));
                ua + (ub - ua) * w
            }
        }
    }
}

fn inverse_wavenumbers(band: i64) -> Vec<f64> {
    let mut inv_k = Vec::with_capacity(((2 * band + 1) * (band + 1)) as usize);
    for k2 in -band..=band {
        for k1 in 0..=band {
            let kk = ((k1 * k1 + k2 * k2) as f64).sqrt();
            inv_k.push(if kk == 0.0 { 0.0 } else { 1.0 / kk });
        }
    }
    inv_k
}

fn series_velocity_blend(a: &CompactSpectrum, b: &CompactSpectrum, w: f64, inv_k: &[f64], p: Point) -> Point {
    let band = a.band();
    let width = (band + 1) as usize;
    let ex = phases(p.x1, band, 0);
    let ey = phases(p.x2, band, -band);
    let (mut u1, mut u2) = (0.0, 0.0);
    for (r, k2) in (-band..=band).enumerate() {
        let ik = &inv_k[r * width..(r + 1) * width];
        let mut bu1 = Complex64::new(0.0, 0.0);
        let mut bu2 = Complex64::new(0.0, 0.0);
        for (k1, (((ca, cb), e), &q)) in a.row(k2).iter().zip(b.row(k2)).zip(&ex).zip(ik).enumerate() {
            let c = ca + (cb - ca) * w;
            let z: Complex64 = c * e * q;
            bu1 += z;
            bu2 += z * k1 as f64;
        }
        let e = ey[r];
        u1 -= k2 as f64 * (e * bu1).im;
        u2 += (e * bu2).im;
    }
    Point::new(u1, u2)
}

/// Zero-pads a spectrum onto a grid `factor` times finer (Nyquist modes dropped).
pub fn refined(spectrum: &Spectrum, factor: usize) -> Spectrum {
    if factor == 1 {
        return spectrum.clone();
    }
    let grid = spectrum.grid();
    let fine = Grid::new(grid.n() * factor).expect("refined grid is a power of two");
    let half = grid.n() as i64 / 2;
    let mut out = Spectrum::zeros(fine);
    let m = fine.n() as i64;
    let data = out.coefficients_mut();
    for (idx, c) in spectrum.coefficients().iter().enumerate() {
        let k1 = grid.wavenumber(idx % grid.n());
        let k2 = grid.wavenumber(idx / grid.n());
        if k1 == -half || k2 == -half {
            continue;
        }
        let i = k1.rem_euclid(m) as usize;
        let j = k2.rem_euclid(m) as usize;
        data[j * fine.n() + i] = *c;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Fourier;

    #[test]
    fn cubic_weights_partition_unity() {
        for t in [0.0, 0.25, 0.5, 0.99] {
            let w = cubic_weights(t);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
        assert_eq!(cubic_weights(0.0), [0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn bicubic_reproduces_cubics_away_from_seam() {
        let g = Grid::new(32).unwrap();
        let f = ScalarField::from_fn(g, |x, y| 0.3 * x * x * x - x * y * y + 2.0 * y - 1.0);
        for p in [Point::new(1.234, 2.5), Point::new(3.0, 4.1), Point::new(0.9, 0.8)] {
            let exact = 0.3 * p.x1.powi(3) - p.x1 * p.x2 * p.x2 + 2.0 * p.x2 - 1.0;
            assert!((bicubic(&f, p) - exact).abs() < 1e-11);
        }
    }

    #[test]
    fn series_jet_matches_analytic() {
        let g = Grid::new(32).unwrap();
        let fo = Fourier::new(g);
        let theta = ScalarField::from_fn(g, |x, y| x.sin() * y.sin() + y.cos());
        let jf = JetField::new(&fo.forward(&theta), Interpolation::Fourier);
        let p = Point::new(0.77, 2.31);
        let (x, y) = (p.x1, p.x2);
        let j = jf.jet(p);
        let r2 = std::f64::consts::SQRT_2;
        assert!((j.theta - (x.sin() * y.sin() + y.cos())).abs() < 1e-13);
        assert!((j.tx - x.cos() * y.sin()).abs() < 1e-13);
        assert!((j.ty - (x.sin() * y.cos() - y.sin())).abs() < 1e-13);
        assert!((j.txx + x.sin() * y.sin()).abs() < 1e-13);
        assert!((j.txy - x.cos() * y.cos()).abs() < 1e-13);
        assert!((j.tyy + x.sin() * y.sin() + y.cos()).abs() < 1e-13);
        assert!((j.u1 - (x.sin() * y.cos() / r2 - y.sin())).abs() < 1e-13);
        assert!((j.u2 + x.cos() * y.sin() / r2).abs() < 1e-13);
        let v = jf.velocity(p);
        assert!((v.x1 - j.u1).abs() < 1e-14 && (v.x2 - j.u2).abs() < 1e-14);
    }

    #[test]
    fn velocity_samplers_agree() {
        let g = Grid::new(32).unwrap();
        let fo = Fourier::new(g);
        let a = fo.forward(&ScalarField::from_fn(g, |x, y| x.sin() * y.sin() + y.cos()));
        let b = fo.forward(&ScalarField::from_fn(g, |x, y| (x + 2.0 * y).cos()));
        let sa = VelocitySampler::new(&a, Interpolation::Fourier);
        let sb = VelocitySampler::new(&b, Interpolation::Fourier);
        let p = Point::new(2.2, 5.1);
        let exact = JetField::new(&a, Interpolation::Fourier).velocity(p);
        assert!(sa.velocity(p).periodic_distance(exact) < 1e-13);
        let ga = VelocitySampler::new(&a, Interpolation::Bicubic { refine: 4 });
        assert!((ga.velocity(p) - exact).norm() < 1e-5);
        let blended = VelocitySampler::blend(&sa, &sb, 0.3, p);
        let manual = sa.velocity(p) * 0.7 + sb.velocity(p) * 0.3;
        assert!((blended - manual).norm() < 1e-13);
    }

    #[test]
    fn sin_interpolation_accuracy() {
        let g = Grid::new(64).unwrap();
        let f = ScalarField::from_fn(g, |x, _| x.sin());
        let p = Point::new(std::f64::consts::PI / 3.0, 1.0);
        let exact = (std::f64::consts::PI / 3.0).sin();
        // plain cubic Lagrange on the native grid sits at the h⁴ error constant
        assert!((bicubic(&f, p) - exact).abs() < 2e-6);
        let spec = Fourier::new(g).forward(&f);
        let jf = JetField::new(&spec, Interpolation::default());
        assert!((jf.jet(p).theta - exact).abs() < 1e-6);
        assert!((fourier_sum(&Fourier::new(g).forward(&f), p) - exact).abs() < 1e-12);
        let c = ScalarField::constant(g, 2.5);
        assert!((bicubic(&c, Point::new(0.3, 6.1)) - 2.5).abs() < 1e-14);
        assert_eq!(bicubic(&f, Point::new(g.coord(5), g.coord(9))), f.get(5, 9));
    }

    #[test]
    fn refined_grid_preserves_values() {
        let g = Grid::new(16).unwrap();
        let fo = Fourier::new(g);
        let f = ScalarField::from_fn(g, |x, y| (2.0 * x).cos() + (x - 3.0 * y).sin());
        let fine = refined(&fo.forward(&f), 2);
        let ff = Fourier::new(fine.grid()).inverse(&fine);
        for j in 0..16 {
            for i in 0..16 {
                assert!((ff.get(2 * i, 2 * j) - f.get(i, j)).abs() < 1e-13);
            }
        }
    }
}
