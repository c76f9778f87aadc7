//! Brute-force validity check built from first principles: explicit
//! vertices, pairwise segment intersection and vertex containment.

use std::f64::consts::TAU;

pub type Pt = (f64, f64);

pub fn vertices(sides: usize, area: f64, angle: f64, c: Pt) -> Vec<Pt> {
    let n = sides as f64;
    // area of a regular n-gon with circumradius r: n r² sin(2π/n) / 2
    let r = (2.0 * area / (n * (TAU / n).sin())).sqrt();
    (0..sides)
        .map(|k| {
            let t = angle + TAU * k as f64 / n;
            (c.0 + r * t.cos(), c.1 + r * t.sin())
        })
        .collect()
}

fn cross(o: Pt, a: Pt, b: Pt) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn on_segment(p: Pt, a: Pt, b: Pt) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

/// Closed segments share at least one point.
pub fn segments_meet(a: Pt, b: Pt, c: Pt, d: Pt) -> bool {
    let (d1, d2) = (cross(c, d, a), cross(c, d, b));
    let (d3, d4) = (cross(a, b, c), cross(a, b, d));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(a, c, d))
        || (d2 == 0.0 && on_segment(b, c, d))
        || (d3 == 0.0 && on_segment(c, a, b))
        || (d4 == 0.0 && on_segment(d, a, b))
}

/// Ray-casting point in polygon.
pub fn inside(p: Pt, poly: &[Pt]) -> bool {
    let mut hit = false;
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a.1 > p.1) != (b.1 > p.1) {
            let x = a.0 + (p.1 - a.1) * (b.0 - a.0) / (b.1 - a.1);
            if p.0 < x {
                hit = !hit;
            }
        }
    }
    hit
}

pub fn polygons_meet(p: &[Pt], q: &[Pt]) -> bool {
    for i in 0..p.len() {
        for j in 0..q.len() {
            if segments_meet(p[i], p[(i + 1) % p.len()], q[j], q[(j + 1) % q.len()]) {
                return true;
            }
        }
    }
    inside(p[0], q) || inside(q[0], p)
}

/// True when every tubule stays in [0.5, 10.5]² and no two meet.
pub fn valid(sides: usize, nx: usize, ny: usize, angle: f64, vf: f64) -> bool {
    let (wx, wy) = (10.0 / nx as f64, 10.0 / ny as f64);
    let area = vf * wx * wy;
    let mut polys = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let c = (0.5 + (i as f64 + 0.5) * wx, 0.5 + (j as f64 + 0.5) * wy);
            polys.push(vertices(sides, area, angle, c));
        }
    }
    if polys
        .iter()
        .flatten()
        .any(|v| v.0 < 0.5 || v.0 > 10.5 || v.1 < 0.5 || v.1 > 10.5)
    {
        return false;
    }
    for a in 0..polys.len() {
        for b in a + 1..polys.len() {
            if polygons_meet(&polys[a], &polys[b]) {
                return false;
            }
        }
    }
    true
}
