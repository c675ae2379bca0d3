//! Level-set geometry of θ: direction field ξ = ∇⊥θ/|∇⊥θ|, unit normal,
//! curvature, ∇·ξ, |∇ξ|, and the regions of large |∇⊥θ| and large |∇ξ|.
//!
//! All quantities come from spectral first and second derivatives of θ; ∇ξ is
//! assembled with the quotient rule so the direction field itself is never
//! differentiated. Entries outside the validity mask are NaN.

use thiserror::Error;

use crate::contour::Contour;
use crate::interp::{Interpolation, Jet, JetField};
use crate::point::Point;
use crate::spectral::{Axis, Fourier, Grid, ScalarField, Spectrum, VectorField};

pub const DEFAULT_EPS_REL: f64 = 1e-8;
pub const DEFAULT_REGION_FRACTION: f64 = 0.5;
pub const DEFAULT_GRAD_XI_THRESHOLD: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("θ has no resolvable gradient: the validity mask is empty")]
    DegenerateField,
    #[error("path leaves the validity mask at {0:?}")]
    MaskCrossing(Point),
    #[error("masks live on different grids ({0} vs {1})")]
    GridMismatch(usize, usize),
    #[error("vertex index {index} out of range for a polyline of {len} points")]
    BadVertex { index: usize, len: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

/// Pointwise level-set geometry derived from a θ jet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalGeometry {
    /// |∇⊥θ|
    pub magnitude: f64,
    pub xi: Point,
    pub normal: Point,
    /// True where κ is below the floor and `normal` is the left perpendicular of ξ.
    pub normal_fallback: bool,
    /// Closed-form curvature |θ₂²θ₁₁ − 2θ₁θ₂θ₁₂ + θ₁²θ₂₂| / |∇θ|³.
    pub curvature: f64,
    /// |ξ·∇ξ| from the assembled ∇ξ.
    pub frenet_curvature: f64,
    /// Trace of the assembled ∇ξ.
    pub div_xi: f64,
    /// Frobenius norm of ∇ξ.
    pub grad_xi_norm: f64,
    /// ∂ₛ|∇⊥θ| = ξ·∇|∇⊥θ| with ∇|∇θ| = H∇θ/|∇θ|.
    pub ds_magnitude: f64,
    /// ∇ξ with `grad_xi[a][b] = ∂_b ξ_a`.
    pub grad_xi: [[f64; 2]; 2],
}

const KAPPA_FLOOR: f64 = 1e-12;

impl LocalGeometry {
    pub fn from_derivatives(tx: f64, ty: f64, txx: f64, txy: f64, tyy: f64) -> Option<Self> {
        let g2 = tx * tx + ty * ty;
        let g = g2.sqrt();
        if !(g > 0.0) || !g.is_finite() {
            return None;
        }
        let xi = Point::new(-ty / g, tx / g);
        // ∇|∇θ|
        let gx = (tx * txx + ty * txy) / g;
        let gy = (tx * txy + ty * tyy) / g;
        // ξ₁ = -θ₂/g, ξ₂ = θ₁/g
        let j11 = -txy / g + ty * gx / g2;
        let j12 = -tyy / g + ty * gy / g2;
        let j21 = txx / g - tx * gx / g2;
        let j22 = txy / g - tx * gy / g2;
        let grad_xi = [[j11, j12], [j21, j22]];
        let dxi = Point::new(j11 * xi.x1 + j12 * xi.x2, j21 * xi.x1 + j22 * xi.x2);
        let frenet_curvature = dxi.norm();
        let curvature = (ty * ty * txx - 2.0 * tx * ty * txy + tx * tx * tyy).abs() / (g2 * g);
        let grad_xi_norm = (j11 * j11 + j12 * j12 + j21 * j21 + j22 * j22).sqrt();
        let scale = 1.0 + grad_xi_norm;
        let (normal, normal_fallback) = if frenet_curvature > KAPPA_FLOOR * scale {
            (dxi * (1.0 / frenet_curvature), false)
        } else {
            (Point::new(-xi.x2, xi.x1), true)
        };
        Some(Self {
            magnitude: g,
            xi,
            normal,
            normal_fallback,
            curvature,
            frenet_curvature,
            div_xi: j11 + j22,
            grad_xi_norm,
            ds_magnitude: xi.x1 * gx + xi.x2 * gy,
            grad_xi,
        })
    }

    pub fn from_jet(j: &Jet) -> Option<Self> {
        Self::from_derivatives(j.tx, j.ty, j.txx, j.txy, j.tyy)
    }
}

/// Spectral derivatives of θ on the grid.
#[derive(Debug, Clone)]
pub struct ThetaDerivatives {
    pub tx: ScalarField,
    pub ty: ScalarField,
    pub txx: ScalarField,
    pub txy: ScalarField,
    pub tyy: ScalarField,
}

impl ThetaDerivatives {
    pub fn from_spectrum(fourier: &Fourier, theta_hat: &Spectrum) -> Self {
        let tx_hat = theta_hat.derivative(Axis::X1, 1);
        let ty_hat = theta_hat.derivative(Axis::X2, 1);
        let txx_hat = theta_hat.derivative(Axis::X1, 2);
        let tyy_hat = theta_hat.derivative(Axis::X2, 2);
        let txy_hat = tx_hat.derivative(Axis::X2, 1);
        let (tx, ty) = fourier.inverse_pair(&tx_hat, &ty_hat);
        let (txx, tyy) = fourier.inverse_pair(&txx_hat, &tyy_hat);
        let txy = fourier.inverse(&txy_hat);
        Self { tx, ty, txx, txy, tyy }
    }

    fn at(&self, idx: usize) -> (f64, f64, f64, f64, f64) {
        (
            self.tx.values()[idx],
            self.ty.values()[idx],
            self.txx.values()[idx],
            self.txy.values()[idx],
            self.tyy.values()[idx],
        )
    }
}

/// Gridded level-set geometry. Off-mask entries of the derived fields are NaN.
#[derive(Debug, Clone)]
pub struct GeometryFields {
    pub grad_perp_theta: VectorField,
    pub magnitude: ScalarField,
    pub xi: VectorField,
    pub normal: VectorField,
    pub curvature: ScalarField,
    pub div_xi: ScalarField,
    pub grad_xi_norm: ScalarField,
    pub valid_mask: Vec<bool>,
    /// Cells where κ is below the floor and the normal fell back to the left perpendicular.
    pub normal_fallback: Vec<bool>,
    pub derivatives: ThetaDerivatives,
    pub theta_hat: Spectrum,
    pub eps_rel: f64,
    pub max_magnitude: f64,
}

impl GeometryFields {
    pub fn grid(&self) -> Grid {
        self.magnitude.grid()
    }

    /// |∇⊥θ| below which a point is treated as outside the mask.
    pub fn mask_floor(&self) -> f64 {
        self.eps_rel * self.max_magnitude
    }

    pub fn local(&self, idx: usize) -> Option<LocalGeometry> {
        if !self.valid_mask[idx] {
            return None;
        }
        let (tx, ty, txx, txy, tyy) = self.derivatives.at(idx);
        LocalGeometry::from_derivatives(tx, ty, txx, txy, tyy)
    }

    /// Interpolated jet sampler over this snapshot.
    pub fn sampler(&self, scheme: Interpolation) -> JetField {
        JetField::new(&self.theta_hat, scheme)
    }
}

pub fn geometry_from_theta(theta: &ScalarField, eps_rel: f64) -> Result<GeometryFields, GeometryError> {
    let fourier = Fourier::new(theta.grid());
    geometry_from_spectrum(&fourier, &fourier.forward(theta), eps_rel)
}

pub fn geometry_from_spectrum(
    fourier: &Fourier,
    theta_hat: &Spectrum,
    eps_rel: f64,
) -> Result<GeometryFields, GeometryError> {
    if !(eps_rel > 0.0) {
        return Err(GeometryError::InvalidParameter("eps_rel must be positive"));
    }
    let grid = theta_hat.grid();
    let d = ThetaDerivatives::from_spectrum(fourier, theta_hat);
    let grad_perp_theta = VectorField { x1: d.ty.map(|v| -v), x2: d.tx.clone() };
    let magnitude = grad_perp_theta.magnitude();
    let max_magnitude = magnitude.max_abs();
    let theta_scale = fourier.inverse(theta_hat).max_abs();
    if max_magnitude <= 1e-12 * (1.0 + theta_scale) {
        return Err(GeometryError::DegenerateField);
    }
    let floor = eps_rel * max_magnitude;
    let len = grid.len();
    let mut valid_mask = vec![false; len];
    let mut normal_fallback = vec![false; len];
    let nan = f64::NAN;
    let mut fields: [Vec<f64>; 7] = std::array::from_fn(|_| vec![nan; len]);
    for idx in 0..len {
        if magnitude.values()[idx] < floor {
            continue;
        }
        let (tx, ty, txx, txy, tyy) = d.at(idx);
        let Some(lg) = LocalGeometry::from_derivatives(tx, ty, txx, txy, tyy) else {
            continue;
        };
        valid_mask[idx] = true;
        normal_fallback[idx] = lg.normal_fallback;
        fields[0][idx] = lg.xi.x1;
        fields[1][idx] = lg.xi.x2;
        fields[2][idx] = lg.normal.x1;
        fields[3][idx] = lg.normal.x2;
        fields[4][idx] = lg.curvature;
        fields[5][idx] = lg.div_xi;
        fields[6][idx] = lg.grad_xi_norm;
    }
    let [xi1, xi2, n1, n2, kappa, div, gxi] = fields.map(|v| ScalarField::from_raw(grid, v));
    Ok(GeometryFields {
        grad_perp_theta,
        magnitude,
        xi: VectorField { x1: xi1, x2: xi2 },
        normal: VectorField { x1: n1, x2: n2 },
        curvature: kappa,
        div_xi: div,
        grad_xi_norm: gxi,
        valid_mask,
        normal_fallback,
        derivatives: d,
        theta_hat: theta_hat.clone(),
        eps_rel,
        max_magnitude,
    })
}

/// Max over the mask of `|∂ₛ|∇⊥θ| + (∇·ξ)|∇⊥θ|| / max|∇⊥θ|²`.
///
/// `∂ₛ|∇⊥θ|` is evaluated as ξ·∇|∇⊥θ| and ∇·ξ as the trace of the assembled
/// ∇ξ, so the two sides are computed along different arithmetic paths.
pub fn check_div_identity(geom: &GeometryFields) -> f64 {
    let scale = geom.max_magnitude * geom.max_magnitude;
    let mut worst = 0.0_f64;
    for idx in 0..geom.valid_mask.len() {
        if let Some(lg) = geom.local(idx) {
            let r = (lg.ds_magnitude + lg.div_xi * lg.magnitude).abs() / scale;
            worst = worst.max(r);
        }
    }
    worst
}

/// Predicts |∇⊥θ| at vertex `to` from vertex `from` of a polyline by
/// integrating `-∇·ξ` along it (trapezoid rule, arc length oriented by ξ).
pub fn exp_integral_along(
    polyline: &[Point],
    from: usize,
    to: usize,
    sampler: &JetField,
    mask_floor: f64,
) -> Result<f64, GeometryError> {
    let len = polyline.len();
    for index in [from, to] {
        if index >= len {
            return Err(GeometryError::BadVertex { index, len });
        }
    }
    let local = |p: Point| -> Result<LocalGeometry, GeometryError> {
        match LocalGeometry::from_jet(&sampler.jet(p)) {
            Some(lg) if lg.magnitude >= mask_floor => Ok(lg),
            _ => Err(GeometryError::MaskCrossing(p)),
        }
    };
    let start = local(polyline[from])?;
    if from == to {
        return Ok(start.magnitude);
    }
    let step: isize = if to > from { 1 } else { -1 };
    let mut integral = 0.0;
    let mut prev = start;
    let mut i = from as isize;
    while i != to as isize {
        let a = polyline[i as usize];
        let b = polyline[(i + step) as usize];
        let cur = local(b)?;
        let delta = a.periodic_delta(b);
        // signed arc length along ξ
        let xi_mid = prev.xi + cur.xi;
        let ds = delta.norm() * xi_mid.dot(delta).signum();
        integral += -0.5 * (prev.div_xi + cur.div_xi) * ds;
        prev = cur;
        i += step;
    }
    Ok(start.magnitude * integral.exp())
}

/// Boolean cell mask with its area.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    pub grid: Grid,
    pub member: Vec<bool>,
}

impl RegionMask {
    pub fn count(&self) -> usize {
        self.member.iter().filter(|&&m| m).count()
    }

    pub fn area(&self) -> f64 {
        self.count() as f64 * self.grid.cell_area()
    }

    pub fn is_subset_of(&self, other: &RegionMask) -> bool {
        self.member.iter().zip(&other.member).all(|(&a, &b)| !a || b)
    }
}

/// Region where |∇⊥θ| ≥ fraction · max|∇⊥θ|; empty when the max is zero.
pub fn region_a(magnitude: &ScalarField, fraction: f64) -> Result<RegionMask, GeometryError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(GeometryError::InvalidParameter("region fraction must lie in (0, 1)"));
    }
    let grid = magnitude.grid();
    let max = magnitude.max_abs();
    let member = if max > 0.0 {
        let cut = fraction * max;
        magnitude.values().iter().map(|&v| v >= cut).collect()
    } else {
        vec![false; grid.len()]
    };
    Ok(RegionMask { grid, member })
}

/// [`region_a`] starting from θ itself.
pub fn region_a_from_theta(theta: &ScalarField, fraction: f64) -> Result<RegionMask, GeometryError> {
    let fo = Fourier::new(theta.grid());
    let (a, b) = fo.forward(theta).perp_gradient();
    let (g1, g2) = fo.inverse_pair(&a, &b);
    region_a(&g1.zip_map(&g2, f64::hypot), fraction)
}

/// Region where |∇ξ| ≥ threshold, restricted to the validity mask.
pub fn region_b(geom: &GeometryFields, threshold: f64) -> Result<RegionMask, GeometryError> {
    if !(threshold > 0.0) {
        return Err(GeometryError::InvalidParameter("|∇ξ| threshold must be positive"));
    }
    let member = geom
        .grad_xi_norm
        .values()
        .iter()
        .zip(&geom.valid_mask)
        .map(|(&v, &ok)| ok && v >= threshold)
        .collect();
    Ok(RegionMask { grid: geom.grid(), member })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapStats {
    pub area_a: f64,
    pub area_b: f64,
    pub area_intersection: f64,
    /// Intersection area over the smaller region's area (0 when either is empty).
    pub frac: f64,
}

pub fn overlap_stats(a: &RegionMask, b: &RegionMask) -> Result<OverlapStats, GeometryError> {
    if a.grid != b.grid {
        return Err(GeometryError::GridMismatch(a.grid.n(), b.grid.n()));
    }
    let both = a.member.iter().zip(&b.member).filter(|(&x, &y)| x && y).count();
    let (ca, cb) = (a.count(), b.count());
    let cell = a.grid.cell_area();
    let smaller = ca.min(cb);
    Ok(OverlapStats {
        area_a: ca as f64 * cell,
        area_b: cb as f64 * cell,
        area_intersection: both as f64 * cell,
        frac: if smaller == 0 { 0.0 } else { both as f64 / smaller as f64 },
    })
}

/// Area statistics for the two regions at one instant.
pub fn region_overlap(
    geom: &GeometryFields,
    fraction: f64,
    threshold: f64,
) -> Result<OverlapStats, GeometryError> {
    let a = region_a(&geom.magnitude, fraction)?;
    let b = region_b(geom, threshold)?;
    overlap_stats(&a, &b)
}

/// Convenience: geometry along each vertex of a contour polyline.
pub fn sample_polyline(contour: &Contour, line: usize, sampler: &JetField) -> Vec<Option<LocalGeometry>> {
    contour.polylines[line].points.iter().map(|&p| LocalGeometry::from_jet(&sampler.jet(p))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn bump(g: Grid) -> ScalarField {
        ScalarField::from_fn(g, |x, y| (-((x - PI).powi(2) + (y - PI).powi(2)) / (2.0 * 0.25)).exp())
    }

    #[test]
    fn straight_level_sets() {
        let g = Grid::new(32).unwrap();
        let theta = ScalarField::from_fn(g, |_, y| y.cos());
        let geom = geometry_from_theta(&theta, DEFAULT_EPS_REL).unwrap();
        for idx in 0..g.len() {
            if geom.valid_mask[idx] {
                assert!(geom.curvature.values()[idx].abs() < 1e-12);
                assert!(geom.div_xi.values()[idx].abs() < 1e-12);
                assert!(geom.normal_fallback[idx]);
            } else {
                assert!(geom.curvature.values()[idx].is_nan());
            }
        }
        assert!(check_div_identity(&geom) < 1e-10);
        assert_eq!(region_b(&geom, 10.0).unwrap().count(), 0);
    }

    #[test]
    fn constant_theta_is_degenerate() {
        let g = Grid::new(16).unwrap();
        let r = geometry_from_theta(&ScalarField::constant(g, 1.5), DEFAULT_EPS_REL);
        assert!(matches!(r, Err(GeometryError::DegenerateField)));
    }

    #[test]
    fn radial_bump_curvature_is_inverse_radius() {
        let g = Grid::new(128).unwrap();
        let geom = geometry_from_theta(&bump(g), DEFAULT_EPS_REL).unwrap();
        let scale = geom.max_magnitude;
        let mut checked = 0;
        for j in 0..128 {
            for i in 0..128 {
                let r = (g.coord(i) - PI).hypot(g.coord(j) - PI);
                let idx = j * 128 + i;
                if (0.3..=1.0).contains(&r) {
                    let k = geom.curvature.values()[idx];
                    assert!((k * r - 1.0).abs() < 0.01, "κ={k} r={r}");
                    assert!(geom.div_xi.values()[idx].abs() * geom.magnitude.values()[idx] < 1e-6 * scale);
                    checked += 1;
                }
            }
        }
        assert!(checked > 100);
        assert!(check_div_identity(&geom) < 1e-8);
    }

    #[test]
    fn unit_vectors_and_two_curvatures_agree() {
        let g = Grid::new(64).unwrap();
        let theta = ScalarField::from_fn(g, |x, y| x.sin() * y.sin() + y.cos());
        let geom = geometry_from_theta(&theta, DEFAULT_EPS_REL).unwrap();
        for idx in 0..g.len() {
            let Some(lg) = geom.local(idx) else { continue };
            assert!((lg.xi.norm() - 1.0).abs() < 1e-12);
            assert!(lg.xi.dot(lg.normal).abs() < 1e-12);
            let (tx, ty) = (geom.derivatives.tx.values()[idx], geom.derivatives.ty.values()[idx]);
            assert!((lg.xi.x1 * tx + lg.xi.x2 * ty).abs() < 1e-10 * geom.max_magnitude);
            let k = lg.curvature;
            assert!((k - lg.frenet_curvature).abs() <= 1e-8 * k.max(1.0), "{k} vs {}", lg.frenet_curvature);
        }
    }

    #[test]
    fn region_a_cos_band_area() {
        let g = Grid::new(256).unwrap();
        let theta = ScalarField::from_fn(g, |x, _| x.cos());
        let a = region_a_from_theta(&theta, 0.5).unwrap();
        let exact = 4.0 * PI / 3.0 * 2.0 * PI;
        // one grid column of slack at each of the four band edges
        assert!((a.area() - exact).abs() <= 4.0 * g.h() * 2.0 * PI + 1e-12);
        let empty = region_a_from_theta(&ScalarField::zeros(g), 0.5).unwrap();
        assert_eq!(empty.count(), 0);
    }

    #[test]
    fn region_a_is_monotone_in_fraction() {
        let g = Grid::new(64).unwrap();
        let theta = ScalarField::from_fn(g, |x, y| x.sin() * y.sin() + y.cos());
        let lo = region_a_from_theta(&theta, 0.3).unwrap();
        let hi = region_a_from_theta(&theta, 0.6).unwrap();
        assert!(hi.is_subset_of(&lo));
        assert!(hi.count() < lo.count());
    }

    #[test]
    fn overlap_of_disjoint_and_identical() {
        let g = Grid::new(8).unwrap();
        let mut a = vec![false; 64];
        let mut b = vec![false; 64];
        a[..10].fill(true);
        b[20..30].fill(true);
        let ma = RegionMask { grid: g, member: a.clone() };
        let mb = RegionMask { grid: g, member: b };
        assert_eq!(overlap_stats(&ma, &mb).unwrap().frac, 0.0);
        assert_eq!(overlap_stats(&ma, &ma).unwrap().frac, 1.0);
        let other = RegionMask { grid: Grid::new(16).unwrap(), member: vec![false; 256] };
        assert!(matches!(overlap_stats(&ma, &other), Err(GeometryError::GridMismatch(8, 16))));
    }

    #[test]
    fn bad_parameters_rejected() {
        let g = Grid::new(8).unwrap();
        let f = ScalarField::zeros(g);
        assert!(region_a(&f, 1.0).is_err());
        assert!(geometry_from_theta(&ScalarField::from_fn(g, |x, _| x.sin()), 0.0).is_err());
    }
}
