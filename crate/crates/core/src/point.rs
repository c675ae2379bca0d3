//! Points on the periodic square and minimum-image arithmetic.

use std::f64::consts::TAU;
use std::ops::{Add, Mul, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x1: f64,
    pub x2: f64,
}

impl Point {
    #[inline]
    pub const fn new(x1: f64, x2: f64) -> Self {
        Self { x1, x2 }
    }

    /// Wraps both coordinates into `[0, 2π)`.
    #[inline]
    pub fn wrapped(self) -> Self {
        Self { x1: wrap(self.x1), x2: wrap(self.x2) }
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x1.hypot(self.x2)
    }

    #[inline]
    pub fn dot(self, o: Point) -> f64 {
        self.x1 * o.x1 + self.x2 * o.x2
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x1.is_finite() && self.x2.is_finite()
    }

    /// Displacement `other - self` reduced to the nearest periodic image.
    #[inline]
    pub fn periodic_delta(self, other: Point) -> Point {
        Point::new(min_image(other.x1 - self.x1), min_image(other.x2 - self.x2))
    }

    #[inline]
    pub fn periodic_distance(self, other: Point) -> f64 {
        self.periodic_delta(other).norm()
    }

    /// Midpoint along the minimum-image segment, wrapped.
    pub fn periodic_midpoint(self, other: Point) -> Point {
        (self + self.periodic_delta(other) * 0.5).wrapped()
    }
}

impl Add for Point {
    type Output = Point;
    #[inline]
    fn add(self, o: Point) -> Point {
        Point::new(self.x1 + o.x1, self.x2 + o.x2)
    }
}

impl Sub for Point {
    type Output = Point;
    #[inline]
    fn sub(self, o: Point) -> Point {
        Point::new(self.x1 - o.x1, self.x2 - o.x2)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    #[inline]
    fn mul(self, s: f64) -> Point {
        Point::new(self.x1 * s, self.x2 * s)
    }
}

#[inline]
pub fn wrap(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    // rem_euclid can round up to TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

#[inline]
pub fn min_image(d: f64) -> f64 {
    d - TAU * (d / TAU).round()
}

/// Length of an open polyline measured with minimum-image steps.
pub fn polyline_length(points: &[Point]) -> f64 {
    points.windows(2).map(|w| w[0].periodic_distance(w[1])).sum()
}
