//! Fourier-space machinery on the periodic square `[0, 2π)²`.
//!
//! Fields are sampled on an `n × n` grid with spacing `h = 2π/n`; spectra use
//! integer wavevectors `k ∈ [-n/2, n/2)²` and the normalization
//! `f(x) = Σ_k f̂(k) e^{i k·x}`, so the forward transform carries the `1/n²`.

use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("grid size {0} must be a power of two and at least 8")]
    InvalidGridSize(usize),
    #[error("expected {expected} values for the grid, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("fields live on different grids ({0} vs {1})")]
    GridMismatch(usize, usize),
}

/// Uniform periodic grid over `[0, 2π)²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grid {
    n: usize,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self, SpectralError> {
        if n < 8 || !n.is_power_of_two() {
            return Err(SpectralError::InvalidGridSize(n));
        }
        Ok(Self { n })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn length(&self) -> f64 {
        TAU
    }

    #[inline]
    pub fn h(&self) -> f64 {
        TAU / self.n as f64
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        i as f64 * self.h()
    }

    /// Signed wavenumber stored at FFT index `idx`.
    #[inline]
    pub fn wavenumber(&self, idx: usize) -> i64 {
        if idx < self.n / 2 {
            idx as i64
        } else {
            idx as i64 - self.n as i64
        }
    }

    /// Largest retained |k| component under the 2/3 rule.
    #[inline]
    pub fn cutoff(&self) -> i64 {
        (self.n / 3) as i64
    }

    #[inline]
    pub fn nyquist(&self) -> i64 {
        -(self.n as i64) / 2
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        let h = self.h();
        h * h
    }
}

/// Real values on the grid, row-major: `values[j * n + i] = f(i·h, j·h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, SpectralError> {
        if values.len() != grid.len() {
            return Err(SpectralError::LengthMismatch { expected: grid.len(), actual: values.len() });
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(SpectralError::NonFinite(idx));
        }
        Ok(Self { grid, values })
    }

    /// Builds a field that may carry NaN markers (masked diagnostics).
    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = grid.n();
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..n {
            let x2 = grid.coord(j);
            for i in 0..n {
                values.push(f(grid.coord(i), x2));
            }
        }
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.grid.n() + i]
    }

    /// Periodic lookup with wrapped integer indices.
    #[inline]
    pub fn get_wrapped(&self, i: i64, j: i64) -> f64 {
        let n = self.grid.n() as i64;
        let i = i.rem_euclid(n) as usize;
        let j = j.rem_euclid(n) as usize;
        self.values[j * n as usize + i]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// `(Σ f² h²)^{1/2}`, the discrete L² norm over the torus.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_area()).sqrt()
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> f64 {
        self.values.iter().zip(&other.values).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        debug_assert_eq!(self.grid, other.grid);
        Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }
}

/// Pair of scalar fields on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub x1: ScalarField,
    pub x2: ScalarField,
}

impl VectorField {
    pub fn new(x1: ScalarField, x2: ScalarField) -> Result<Self, SpectralError> {
        if x1.grid() != x2.grid() {
            return Err(SpectralError::GridMismatch(x1.grid().n(), x2.grid().n()));
        }
        Ok(Self { x1, x2 })
    }

    pub fn grid(&self) -> Grid {
        self.x1.grid()
    }

    pub fn magnitude(&self) -> ScalarField {
        self.x1.zip_map(&self.x2, f64::hypot)
    }

    /// Max of the pointwise Euclidean norm, reduced in row-major order.
    pub fn max_norm(&self) -> f64 {
        self.x1
            .values()
            .iter()
            .zip(self.x2.values())
            .fold(0.0_f64, |m, (a, b)| m.max(a.hypot(*b)))
    }
}

/// Differentiation axis: `X1` is the fast (column) index, `X2` the row index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X1,
    X2,
}

/// Fourier coefficients `f̂(k)` stored in FFT order, `data[j * n + i]` ↔ `(k₁(i), k₂(j))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: Grid,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, data: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_coefficients(grid: Grid, data: Vec<Complex64>) -> Result<Self, SpectralError> {
        if data.len() != grid.len() {
            return Err(SpectralError::LengthMismatch { expected: grid.len(), actual: data.len() });
        }
        Ok(Self { grid, data })
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn coefficients(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn coefficients_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Coefficient of the signed wavevector `(k1, k2)`.
    pub fn mode(&self, k1: i64, k2: i64) -> Complex64 {
        let n = self.grid.n() as i64;
        let i = k1.rem_euclid(n) as usize;
        let j = k2.rem_euclid(n) as usize;
        self.data[j * n as usize + i]
    }

    /// Applies `coefficient *= m(k1, k2)` mode by mode.
    pub fn apply_multiplier(&self, m: impl Fn(i64, i64) -> Complex64 + Sync) -> Spectrum {
        let grid = self.grid;
        let n = grid.n();
        let mut data = self.data.clone();
        data.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
            let k2 = grid.wavenumber(j);
            for (i, c) in row.iter_mut().enumerate() {
                *c *= m(grid.wavenumber(i), k2);
            }
        });
        Spectrum { grid, data }
    }

    /// Zeroes every mode with `max(|k₁|, |k₂|) > n/3`.
    pub fn dealias_two_thirds(&self) -> Spectrum {
        let mut out = self.clone();
        out.dealias_in_place();
        out
    }

    pub fn dealias_in_place(&mut self) {
        let grid = self.grid;
        let n = grid.n();
        let cut = grid.cutoff();
        self.data.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
            if grid.wavenumber(j).abs() > cut {
                row.fill(Complex64::new(0.0, 0.0));
                return;
            }
            for (i, c) in row.iter_mut().enumerate() {
                if grid.wavenumber(i).abs() > cut {
                    *c = Complex64::new(0.0, 0.0);
                }
            }
        });
    }

    /// `ψ̂ = -θ̂/|k|` with the zero mode pinned to 0.
    pub fn invert_half_laplacian(&self) -> Spectrum {
        self.apply_multiplier(|k1, k2| {
            if k1 == 0 && k2 == 0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(-1.0 / ((k1 * k1 + k2 * k2) as f64).sqrt(), 0.0)
            }
        })
    }

    /// Multiplication by `(i k_axis)^order`; the Nyquist mode of odd orders is zeroed.
    pub fn derivative(&self, axis: Axis, order: u32) -> Spectrum {
        let nyq = self.grid.nyquist();
        self.apply_multiplier(move |k1, k2| {
            let k = match axis {
                Axis::X1 => k1,
                Axis::X2 => k2,
            };
            if order % 2 == 1 && k == nyq {
                return Complex64::new(0.0, 0.0);
            }
            Complex64::new(0.0, k as f64).powu(order)
        })
    }

    /// Spectra of `(-∂₂f, ∂₁f)`.
    pub fn perp_gradient(&self) -> (Spectrum, Spectrum) {
        let d2 = self.derivative(Axis::X2, 1);
        let d1 = self.derivative(Axis::X1, 1);
        (d2.scaled(-1.0), d1)
    }

    /// Velocity spectra `u = ∇⊥ψ`, `ψ = (-Δ)^{-1/2}(-θ)`.
    pub fn velocity(&self) -> (Spectrum, Spectrum) {
        self.invert_half_laplacian().perp_gradient()
    }

    pub fn scaled(&self, s: f64) -> Spectrum {
        Spectrum { grid: self.grid, data: self.data.iter().map(|c| c * s).collect() }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &Spectrum, s: f64) -> Spectrum {
        debug_assert_eq!(self.grid, other.grid);
        Spectrum {
            grid: self.grid,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b * s).collect(),
        }
    }

    /// `Σ |f̂(k)|²`.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

/// Cached FFT plans for one grid size. Cheap to clone.
#[derive(Clone)]
pub struct Fourier {
    grid: Grid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fourier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fourier").field("grid", &self.grid).finish()
    }
}

const ROW_BLOCK: usize = 16;

impl Fourier {
    pub fn new(grid: Grid) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            grid,
            forward: planner.plan_fft_forward(grid.n()),
            inverse: planner.plan_fft_inverse(grid.n()),
        }
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Row transforms; rows for which `skip(row_index)` holds are zeroed instead.
    fn transform_rows(&self, fft: &Arc<dyn Fft<f64>>, data: &mut [Complex64], skip: impl Fn(usize) -> bool + Sync) {
        let n = self.grid.n();
        data.par_chunks_mut(n * ROW_BLOCK).enumerate().for_each(|(b, block)| {
            let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
            for (r, row) in block.chunks_mut(n).enumerate() {
                if skip(b * ROW_BLOCK + r) {
                    row.fill(Complex64::new(0.0, 0.0));
                } else {
                    fft.process_with_scratch(row, &mut scratch);
                }
            }
        });
    }

    pub fn forward(&self, f: &ScalarField) -> Spectrum {
        debug_assert_eq!(f.grid(), self.grid);
        let data: Vec<Complex64> = f.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward_raw(data, false)
    }

    /// `forward(f).dealias_two_thirds()` without transforming discarded columns.
    pub fn forward_dealiased(&self, f: &ScalarField) -> Spectrum {
        debug_assert_eq!(f.grid(), self.grid);
        let data: Vec<Complex64> = f.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward_raw(data, true)
    }

    /// Forward transform of complex grid data, scaled by 1/n².
    pub(crate) fn forward_raw(&self, mut data: Vec<Complex64>, dealias: bool) -> Spectrum {
        let n = self.grid.n();
        let grid = self.grid;
        let cut = grid.cutoff();
        self.transform_rows(&self.forward, &mut data, |_| false);
        let mut t = transpose(&data, n);
        self.transform_rows(&self.forward, &mut t, |k1| dealias && grid.wavenumber(k1).abs() > cut);
        let mut data = transpose(&t, n);
        let scale = 1.0 / self.grid.len() as f64;
        data.iter_mut().for_each(|c| *c *= scale);
        let mut s = Spectrum { grid: self.grid, data };
        if dealias {
            s.dealias_in_place();
        }
        s
    }

    /// Inverse transform of raw coefficients; rows of zero coefficients are skipped.
    pub(crate) fn inverse_raw(&self, mut data: Vec<Complex64>) -> Vec<Complex64> {
        let n = self.grid.n();
        let zero_rows: Vec<bool> = data.chunks(n).map(|r| r.iter().all(|c| c.re == 0.0 && c.im == 0.0)).collect();
        self.transform_rows(&self.inverse, &mut data, |j| zero_rows[j]);
        let mut t = transpose(&data, n);
        self.transform_rows(&self.inverse, &mut t, |_| false);
        transpose(&t, n)
    }

    fn inverse_complex(&self, s: &Spectrum) -> Vec<Complex64> {
        self.inverse_raw(s.data.clone())
    }

    /// Real part of the synthesis `Σ f̂(k) e^{ik·x}`.
    pub fn inverse(&self, s: &Spectrum) -> ScalarField {
        let data = self.inverse_complex(s);
        ScalarField::from_raw(self.grid, data.iter().map(|c| c.re).collect())
    }

    /// Synthesizes two real fields with one complex transform.
    pub fn inverse_pair(&self, a: &Spectrum, b: &Spectrum) -> (ScalarField, ScalarField) {
        let packed = Spectrum {
            grid: self.grid,
            data: a.data.iter().zip(&b.data).map(|(x, y)| x + Complex64::i() * y).collect(),
        };
        let data = self.inverse_complex(&packed);
        let re = data.iter().map(|c| c.re).collect();
        let im = data.iter().map(|c| c.im).collect();
        (ScalarField::from_raw(self.grid, re), ScalarField::from_raw(self.grid, im))
    }

    pub fn dealias_two_thirds(&self, f: &ScalarField) -> ScalarField {
        self.inverse(&self.forward(f).dealias_two_thirds())
    }

    pub fn invert_half_laplacian(&self, theta: &ScalarField) -> ScalarField {
        self.inverse(&self.forward(theta).invert_half_laplacian())
    }

    pub fn perp_gradient(&self, psi: &ScalarField) -> VectorField {
        let (a, b) = self.forward(psi).perp_gradient();
        let (x1, x2) = self.inverse_pair(&a, &b);
        VectorField { x1, x2 }
    }

    pub fn velocity_from_theta(&self, theta: &ScalarField) -> VectorField {
        self.velocity_from_spectrum(&self.forward(theta))
    }

    pub fn velocity_from_spectrum(&self, theta_hat: &Spectrum) -> VectorField {
        let (a, b) = theta_hat.velocity();
        let (x1, x2) = self.inverse_pair(&a, &b);
        VectorField { x1, x2 }
    }

    pub fn spectral_derivative(&self, f: &ScalarField, axis: Axis, order: u32) -> ScalarField {
        self.inverse(&self.forward(f).derivative(axis, order))
    }

    /// Spectral divergence `∂₁v₁ + ∂₂v₂`.
    pub fn divergence(&self, v: &VectorField) -> ScalarField {
        let d1 = self.forward(&v.x1).derivative(Axis::X1, 1);
        let d2 = self.forward(&v.x2).derivative(Axis::X2, 1);
        self.inverse(&d1.add_scaled(&d2, 1.0))
    }
}

fn transpose(src: &[Complex64], n: usize) -> Vec<Complex64> {
    const B: usize = 32;
    let mut dst = vec![Complex64::new(0.0, 0.0); n * n];
    for jb in (0..n).step_by(B) {
        for ib in (0..n).step_by(B) {
            for j in jb..(jb + B).min(n) {
                for i in ib..(ib + B).min(n) {
                    dst[i * n + j] = src[j * n + i];
                }
            }
        }
    }
    dst
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid(n: usize) -> Grid {
        Grid::new(n).unwrap()
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(Grid::new(6).is_err());
        assert!(Grid::new(24).is_err());
        assert!(Grid::new(4).is_err());
        let g = grid(64);
        assert_eq!(g.h() * 64.0, TAU);
        assert_eq!(g.wavenumber(31), 31);
        assert_eq!(g.wavenumber(32), -32);
        assert_eq!(g.cutoff(), 21);
    }

    #[test]
    fn scalar_field_rejects_nonfinite() {
        let g = grid(8);
        let mut v = vec![0.0; 64];
        v[5] = f64::NAN;
        assert_eq!(ScalarField::new(g, v), Err(SpectralError::NonFinite(5)));
        assert!(ScalarField::new(g, vec![0.0; 10]).is_err());
    }

    #[test]
    fn dealias_keeps_low_modes() {
        let g = grid(32);
        let fo = Fourier::new(g);
        let f = ScalarField::from_fn(g, |x, y| (10.0 * x).cos() * (3.0 * y).sin() + (x - 2.0 * y).cos());
        let out = fo.dealias_two_thirds(&f);
        assert!(out.max_abs_diff(&f) < 1e-13);
    }

    #[test]
    fn dealias_removes_high_mode() {
        let g = grid(16);
        let fo = Fourier::new(g);
        let f = ScalarField::from_fn(g, |x, _| (7.0 * x).cos());
        assert!(fo.dealias_two_thirds(&f).max_abs() < 1e-14);
    }

    #[test]
    fn dealiased_product_of_sines() {
        // sin²x = 1/2 - cos(2x)/2; mode 2 sits below the n/3 cutoff.
        let g = grid(16);
        let fo = Fourier::new(g);
        let s = ScalarField::from_fn(g, |x, _| x.sin());
        let prod = s.zip_map(&s, |a, b| a * b);
        let out = fo.dealias_two_thirds(&prod);
        let expect = ScalarField::from_fn(g, |x, _| 0.5 - 0.5 * (2.0 * x).cos());
        assert!(out.max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn half_laplacian_single_modes() {
        let g = grid(32);
        let fo = Fourier::new(g);
        let c = fo.invert_half_laplacian(&ScalarField::constant(g, 3.5));
        assert!(c.max_abs() < 1e-15);

        let psi = fo.invert_half_laplacian(&ScalarField::from_fn(g, |x, _| x.cos()));
        let expect = ScalarField::from_fn(g, |x, _| -x.cos());
        assert!(psi.max_abs_diff(&expect) < 1e-14);

        let psi = fo.invert_half_laplacian(&ScalarField::from_fn(g, |x, y| (3.0 * x + 4.0 * y).cos()));
        let expect = ScalarField::from_fn(g, |x, y| -(3.0 * x + 4.0 * y).cos() / 5.0);
        assert!(psi.max_abs_diff(&expect) < 1e-14);
    }

    #[test]
    fn perp_gradient_oracles() {
        let g = grid(32);
        let fo = Fourier::new(g);
        assert!(fo.perp_gradient(&ScalarField::constant(g, 2.0)).max_norm() < 1e-15);

        let v = fo.perp_gradient(&ScalarField::from_fn(g, |x, _| -x.cos()));
        assert!(v.x1.max_abs() < 1e-14);
        assert!(v.x2.max_abs_diff(&ScalarField::from_fn(g, |x, _| x.sin())) < 1e-14);

        let v = fo.perp_gradient(&ScalarField::from_fn(g, |_, y| y.cos()));
        assert!(v.x1.max_abs_diff(&ScalarField::from_fn(g, |_, y| y.sin())) < 1e-14);
        assert!(v.x2.max_abs() < 1e-14);
    }

    #[test]
    fn velocity_of_cos_x1() {
        let g = grid(32);
        let fo = Fourier::new(g);
        let u = fo.velocity_from_theta(&ScalarField::from_fn(g, |x, _| x.cos()));
        assert!(u.x1.max_abs() < 1e-14);
        assert!(u.x2.max_abs_diff(&ScalarField::from_fn(g, |x, _| x.sin())) < 1e-14);
        let zero = fo.velocity_from_theta(&ScalarField::constant(g, -1.0));
        assert!(zero.max_norm() < 1e-15);
    }

    #[test]
    fn velocity_of_cmt_data_matches_mode_sum() {
        // sin x sin y + cos y = -¼Σ_{±±} ±e^{i(±x±y)} + ½(e^{iy}+e^{-iy}); summing
        // u = (ik₂, -ik₁)/|k| θ̂ e^{ik·x} mode by mode gives the closed form below.
        let g = grid(32);
        let fo = Fourier::new(g);
        let theta = ScalarField::from_fn(g, |x, y| x.sin() * y.sin() + y.cos());
        let u = fo.velocity_from_theta(&theta);
        let r2 = std::f64::consts::SQRT_2;
        let u1 = |x: f64, y: f64| x.sin() * y.cos() / r2 - y.sin();
        let u2 = |x: f64, y: f64| -x.cos() * y.sin() / r2;
        let pts = [(0.1, 0.2), (1.0, 3.0), (2.5, 0.7), (4.0, 5.5)];
        let mut count = 0;
        for (a, b) in pts {
            for (da, db) in [(0.0, 0.0), (0.5, 0.0), (0.0, 0.5), (0.5, 0.5)] {
                let (x, y) = (a + da, b + db);
                let i = (x / g.h()).round() as usize % 32;
                let j = (y / g.h()).round() as usize % 32;
                let (xg, yg) = (g.coord(i), g.coord(j));
                assert_abs_diff_eq!(u.x1.get(i, j), u1(xg, yg), epsilon = 1e-10);
                assert_abs_diff_eq!(u.x2.get(i, j), u2(xg, yg), epsilon = 1e-10);
                count += 1;
            }
        }
        assert_eq!(count, 16);
    }

    #[test]
    fn spectral_derivatives() {
        let g = grid(32);
        let fo = Fourier::new(g);
        let d = fo.spectral_derivative(&ScalarField::from_fn(g, |x, _| x.sin()), Axis::X1, 1);
        assert!(d.max_abs_diff(&ScalarField::from_fn(g, |x, _| x.cos())) < 1e-14);
        let d = fo.spectral_derivative(&ScalarField::from_fn(g, |_, y| (2.0 * y).cos()), Axis::X2, 2);
        assert!(d.max_abs_diff(&ScalarField::from_fn(g, |_, y| -4.0 * (2.0 * y).cos())) < 1e-13);
        for axis in [Axis::X1, Axis::X2] {
            for order in [1, 2] {
                let d = fo.spectral_derivative(&ScalarField::constant(g, 7.0), axis, order);
                assert!(d.max_abs() < 1e-15);
            }
        }
    }

    #[test]
    fn inverse_pair_matches_single_inverses() {
        let g = grid(16);
        let fo = Fourier::new(g);
        let a = fo.forward(&ScalarField::from_fn(g, |x, y| (x + y).sin()));
        let b = fo.forward(&ScalarField::from_fn(g, |x, y| (2.0 * x).cos() * y.sin()));
        let (fa, fb) = fo.inverse_pair(&a, &b);
        assert!(fa.max_abs_diff(&fo.inverse(&a)) < 1e-15);
        assert!(fb.max_abs_diff(&fo.inverse(&b)) < 1e-15);
    }
}
