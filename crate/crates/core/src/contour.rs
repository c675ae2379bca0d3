//! Marching-squares iso-contours on the periodic grid.
//!
//! Every edge crossing is shared by exactly two cells on the torus, so the
//! stitched polylines are always closed loops (possibly winding around the
//! domain). Points are stored wrapped into `[0, 2π)²`; consecutive points
//! must be joined by their minimum-image displacement.

use std::collections::HashMap;

use thiserror::Error;

use crate::point::{polyline_length, Point};
use crate::spectral::ScalarField;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContourError {
    #[error("level {level} lies outside the field range [{min}, {max}]")]
    EmptyContour { level: f64, min: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub points: Vec<Point>,
    /// Closed polylines repeat no point; the last vertex joins the first.
    pub closed: bool,
}

impl Polyline {
    pub fn length(&self) -> f64 {
        let open = polyline_length(&self.points);
        match (self.closed, self.points.first(), self.points.last()) {
            (true, Some(a), Some(b)) => open + b.periodic_distance(*a),
            _ => open,
        }
    }

    /// Net displacement over one traversal; nonzero for loops that wind around the torus.
    pub fn winding(&self) -> Point {
        let mut acc = Point::default();
        let n = self.points.len();
        let last = if self.closed { n } else { n.saturating_sub(1) };
        for i in 0..last {
            acc = acc + self.points[i].periodic_delta(self.points[(i + 1) % n]);
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    pub level: f64,
    pub polylines: Vec<Polyline>,
}

impl Contour {
    pub fn total_length(&self) -> f64 {
        self.polylines.iter().map(Polyline::length).sum()
    }
}

/// Edge ids: `2·(j·n + i)` for the horizontal edge from node (i, j) to (i+1, j),
/// `2·(j·n + i) + 1` for the vertical edge from (i, j) to (i, j+1).
fn h_edge(n: usize, i: usize, j: usize) -> usize {
    2 * ((j % n) * n + (i % n))
}

fn v_edge(n: usize, i: usize, j: usize) -> usize {
    2 * ((j % n) * n + (i % n)) + 1
}

pub fn extract_contour(theta: &ScalarField, level: f64) -> Result<Contour, ContourError> {
    let (min, max) = (theta.min(), theta.max());
    if !(level >= min && level <= max) {
        return Err(ContourError::EmptyContour { level, min, max });
    }
    let grid = theta.grid();
    let n = grid.n();
    let h = grid.h();
    let v = |i: usize, j: usize| theta.get(i % n, j % n);
    let inside = |i: usize, j: usize| v(i, j) >= level;

    let mut crossing: HashMap<usize, Point> = HashMap::new();
    let mut crossing_point = |edge: usize| -> Point {
        *crossing.entry(edge).or_insert_with(|| {
            let node = edge / 2;
            let (i, j) = (node % n, node / n);
            let (i2, j2) = if edge.is_multiple_of(2) { (i + 1, j) } else { (i, j + 1) };
            let (a, b) = (v(i, j), v(i2, j2));
            let t = if a == b { 0.5 } else { ((level - a) / (b - a)).clamp(0.0, 1.0) };
            let x1 = (i as f64 + if edge.is_multiple_of(2) { t } else { 0.0 }) * h;
            let x2 = (j as f64 + if edge % 2 == 1 { t } else { 0.0 }) * h;
            Point::new(x1, x2).wrapped()
        })
    };

    // adjacency between crossing edges, two neighbours each
    let mut links: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut link = |a: usize, b: usize| {
        links.entry(a).or_default().push(b);
        links.entry(b).or_default().push(a);
    };
    for j in 0..n {
        for i in 0..n {
            let bl = inside(i, j);
            let br = inside(i + 1, j);
            let tr = inside(i + 1, j + 1);
            let tl = inside(i, j + 1);
            let case = (bl as u8) | (br as u8) << 1 | (tr as u8) << 2 | (tl as u8) << 3;
            let bottom = h_edge(n, i, j);
            let top = h_edge(n, i, j + 1);
            let left = v_edge(n, i, j);
            let right = v_edge(n, i + 1, j);
            match case {
                0 | 15 => {}
                1 | 14 => link(left, bottom),
                2 | 13 => link(bottom, right),
                3 | 12 => link(left, right),
                4 | 11 => link(right, top),
                6 | 9 => link(bottom, top),
                7 | 8 => link(left, top),
                5 | 10 => {
                    let center = 0.25 * (v(i, j) + v(i + 1, j) + v(i + 1, j + 1) + v(i, j + 1));
                    let center_in = center >= level;
                    // case 5: bl and tr inside; case 10: br and tl inside
                    if (case == 5) == center_in {
                        // inside corners connected through the center: cut off the outside ones
                        link(bottom, right);
                        link(top, left);
                    } else {
                        link(left, bottom);
                        link(right, top);
                    }
                }
                _ => unreachable!(),
            }
        }
    }

    let mut keys: Vec<usize> = links.keys().copied().collect();
    keys.sort_unstable();
    let mut visited: HashMap<usize, bool> = HashMap::new();
    let mut polylines = Vec::new();
    for &start in &keys {
        if visited.contains_key(&start) {
            continue;
        }
        let mut edges = vec![start];
        visited.insert(start, true);
        let mut prev = start;
        let mut cur = links[&start][0];
        while cur != start {
            visited.insert(cur, true);
            edges.push(cur);
            let nb = &links[&cur];
            let next = if nb[0] == prev && nb.len() > 1 { nb[1] } else { nb[0] };
            prev = cur;
            cur = next;
            if edges.len() > links.len() {
                break;
            }
        }
        let mut points: Vec<Point> = edges.iter().map(|&e| crossing_point(e)).collect();
        points.dedup_by(|a, b| a.periodic_distance(*b) == 0.0);
        if points.len() > 1 && points[0].periodic_distance(*points.last().unwrap()) == 0.0 {
            points.pop();
        }
        polylines.push(Polyline { points, closed: true });
    }
    Ok(Contour { level, polylines })
}
