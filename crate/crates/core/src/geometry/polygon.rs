//! Convex polygons and the predicates used to validate tubule layouts.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Twice the signed area of triangle (a, b, c); positive when counter-clockwise.
#[inline]
pub fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Closed polygon with counter-clockwise vertices (last vertex connects to the first).
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::invalid("polygon needs at least 3 vertices"));
        }
        if !vertices.iter().all(|p| p.is_finite()) {
            return Err(Error::invalid("polygon vertex is not finite"));
        }
        let poly = Polygon { vertices };
        if poly.signed_area() <= 0.0 {
            return Err(Error::invalid(
                "polygon must be counter-clockwise with positive area",
            ));
        }
        Ok(poly)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Shoelace area, positive for counter-clockwise order.
    pub fn signed_area(&self) -> f64 {
        0.5 * self
            .edges()
            .map(|(a, b)| a.x * b.y - b.x * a.y)
            .sum::<f64>()
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn perimeter(&self) -> f64 {
        self.edges()
            .map(|(a, b)| (b.x - a.x).hypot(b.y - a.y))
            .sum()
    }

    pub fn centroid(&self) -> Point {
        let n = self.vertices.len() as f64;
        let (sx, sy) = self
            .vertices
            .iter()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        Point::new(sx / n, sy / n)
    }

    /// Axis-aligned bounds as (min, max).
    pub fn bounds(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.vertices {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }

    /// Strict interior test for a convex counter-clockwise polygon: every
    /// edge sees the point on its left. Each edge is evaluated on its own, so
    /// the answer does not depend on which vertex starts the list.
    pub fn contains_strict(&self, p: Point) -> bool {
        self.edges().all(|(a, b)| orient(a, b, p) > 0.0)
    }

    pub fn is_convex(&self) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| {
            orient(
                self.vertices[i],
                self.vertices[(i + 1) % n],
                self.vertices[(i + 2) % n],
            ) > 0.0
        })
    }

    /// True when the closed polygons share at least one point (overlap or touch).
    ///
    /// Separating-axis test over the edge normals of both polygons; only valid
    /// for convex inputs. Projections that meet at a single value count as
    /// touching.
    pub fn intersects_closed(&self, other: &Polygon) -> bool {
        !(has_separating_axis(self, other) || has_separating_axis(other, self))
    }

    /// Returns a copy rotated by `turns` vertices; same geometry, different start.
    pub fn rotate_start(&self, turns: usize) -> Polygon {
        let mut vertices = self.vertices.clone();
        let n = vertices.len();
        vertices.rotate_left(turns % n);
        Polygon { vertices }
    }
}

fn has_separating_axis(a: &Polygon, b: &Polygon) -> bool {
    a.edges().any(|(p, q)| {
        let axis = Point::new(q.y - p.y, p.x - q.x);
        let project = |poly: &Polygon| {
            poly.vertices
                .iter()
                .map(|v| v.x * axis.x + v.y * axis.y)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
                    (lo.min(d), hi.max(d))
                })
        };
        let (alo, ahi) = project(a);
        let (blo, bhi) = project(b);
        ahi < blo || bhi < alo
    })
}

/// Reduces `angle` to the fundamental sector [0, 2π/sides) and snaps it to a
/// 1e-12 rad lattice, so angles that differ by a multiple of the polygon's
/// symmetry produce bit-identical vertex sets.
fn canonical_angle(angle: f64, sides: usize) -> f64 {
    const SNAP: f64 = 1e12;
    let sector = TAU / sides as f64;
    let reduced = angle.rem_euclid(sector);
    let snapped = (reduced * SNAP).round() / SNAP;
    if snapped >= sector - 1.0 / SNAP {
        0.0
    } else {
        snapped
    }
}

/// Circumradius of the regular `sides`-gon with the given area.
pub fn circumradius(sides: usize, area: f64) -> f64 {
    let n = sides as f64;
    (2.0 * area / (n * (TAU / n).sin())).sqrt()
}

/// Regular polygon with exact `area`, centred at `center`, with vertex 0 at
/// polar angle `angle` (radians, from +x).
pub fn regular_polygon(sides: usize, area: f64, angle: f64, center: Point) -> Result<Polygon> {
    if !(area.is_finite() && angle.is_finite() && center.is_finite()) {
        return Err(Error::invalid("regular_polygon: non-finite input"));
    }
    if sides < 3 {
        return Err(Error::invalid(format!(
            "regular_polygon: sides = {sides} < 3"
        )));
    }
    if area <= 0.0 {
        return Err(Error::invalid(format!(
            "regular_polygon: area = {area} <= 0"
        )));
    }
    let radius = circumradius(sides, area);
    let sector = TAU / sides as f64;
    let base = canonical_angle(angle, sides);
    // index of the canonical vertex that sits at the requested angle
    let first = ((angle - base) / sector).round().rem_euclid(sides as f64) as usize % sides;
    let vertices = (0..sides)
        .map(|k| {
            let theta = base + sector * ((first + k) % sides) as f64;
            Point::new(
                center.x + radius * theta.cos(),
                center.y + radius * theta.sin(),
            )
        })
        .collect();
    Ok(Polygon { vertices })
}
