use std::fmt::Write as _;

use crate::error::{Error, Result};

use super::{Point, Polygon, SPECIMEN_SIZE};

/// Structured quad mesh over the specimen with a solid/void flag per element.
///
/// Elements are stored row-major starting at the bottom-left corner; element
/// `(i, j)` spans `[i*edge, (i+1)*edge] x [j*edge, (j+1)*edge]` in mm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterMesh {
    pub elems_x: usize,
    pub elems_y: usize,
    /// Element edge length, mm; the grid tiles the specimen exactly.
    edge_bits: u64,
    active: Vec<bool>,
}

impl RasterMesh {
    /// Mesh from an explicit mask (row-major, bottom row first).
    pub fn from_mask(elems_x: usize, elems_y: usize, edge: f64, active: Vec<bool>) -> Result<Self> {
        if !(edge.is_finite() && edge > 0.0) {
            return Err(Error::invalid(format!(
                "element edge {edge} must be positive"
            )));
        }
        if elems_x == 0 || elems_y == 0 || active.len() != elems_x * elems_y {
            return Err(Error::invalid("mask size does not match element counts"));
        }
        let mesh = RasterMesh {
            elems_x,
            elems_y,
            edge_bits: edge.to_bits(),
            active,
        };
        if let Some(row) = (0..elems_y).find(|&j| !(0..elems_x).any(|i| mesh.is_active(i, j))) {
            return Err(Error::invalid(format!(
                "element row {row} has no solid element; load path severed"
            )));
        }
        Ok(mesh)
    }

    /// Fully solid mesh of the specimen.
    pub fn solid(edge: f64) -> Result<Self> {
        rasterize(&[], edge)
    }

    pub fn edge(&self) -> f64 {
        f64::from_bits(self.edge_bits)
    }

    pub fn width(&self) -> f64 {
        self.edge() * self.elems_x as f64
    }

    pub fn height(&self) -> f64 {
        self.edge() * self.elems_y as f64
    }

    pub fn n_elements(&self) -> usize {
        self.active.len()
    }

    pub fn mask(&self) -> &[bool] {
        &self.active
    }

    #[inline]
    pub fn is_active(&self, i: usize, j: usize) -> bool {
        self.active[j * self.elems_x + i]
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Void area of the mask, mm².
    pub fn void_area(&self) -> f64 {
        let e = self.edge();
        (self.n_elements() - self.active_count()) as f64 * e * e
    }

    /// Void fraction of the whole specimen.
    pub fn porosity(&self) -> f64 {
        1.0 - self.active_count() as f64 / self.n_elements() as f64
    }

    /// Mask reflected about the vertical centreline.
    pub fn mirrored(&self) -> RasterMesh {
        let mut active = self.active.clone();
        for row in active.chunks_mut(self.elems_x) {
            row.reverse();
        }
        RasterMesh { active, ..*self }
    }

    /// Mask rotated by 90° counter-clockwise about the specimen centre.
    pub fn rotated_quarter(&self) -> RasterMesh {
        let (nx, ny) = (self.elems_x, self.elems_y);
        let mut active = vec![false; nx * ny];
        // (i, j) -> (ny - 1 - j, i) in a grid with ny columns and nx rows
        for j in 0..ny {
            for i in 0..nx {
                active[i * ny + (ny - 1 - j)] = self.active[j * nx + i];
            }
        }
        RasterMesh {
            elems_x: ny,
            elems_y: nx,
            edge_bits: self.edge_bits,
            active,
        }
    }

    /// ASCII mask, one line per element row, top row first; `1` = solid.
    pub fn to_ascii(&self) -> String {
        let mut out = String::with_capacity((self.elems_x + 1) * self.elems_y);
        for j in (0..self.elems_y).rev() {
            for i in 0..self.elems_x {
                out.push(if self.is_active(i, j) { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    pub fn from_ascii(text: &str, edge: f64) -> Result<Self> {
        let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let elems_y = rows.len();
        let elems_x = rows.first().map_or(0, |r| r.trim().len());
        let mut active = vec![false; elems_x * elems_y];
        for (k, row) in rows.iter().enumerate() {
            let j = elems_y - 1 - k;
            let row = row.trim();
            if row.len() != elems_x {
                return Err(Error::invalid(format!(
                    "mask row {k} has {} cells, expected {elems_x}",
                    row.len()
                )));
            }
            for (i, c) in row.chars().enumerate() {
                active[j * elems_x + i] = match c {
                    '1' => true,
                    '0' => false,
                    other => {
                        return Err(Error::invalid(format!(
                            "unexpected mask character {other:?}"
                        )))
                    }
                };
            }
        }
        Self::from_mask(elems_x, elems_y, edge, active)
    }

    /// Human-readable one-line summary.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{}x{} elements, edge {:.4} mm, porosity {:.3}%",
            self.elems_x,
            self.elems_y,
            self.edge(),
            100.0 * self.porosity()
        );
        s
    }
}

/// Rasterizes tubule polygons onto the specimen grid.
///
/// The element count per side is `round(11 / edge)`, so the realised edge is
/// `11 / count`. An element is void iff its centroid lies strictly inside a
/// polygon.
pub fn rasterize(polygons: &[Polygon], edge: f64) -> Result<RasterMesh> {
    if !(edge.is_finite() && edge > 0.0) {
        return Err(Error::invalid(format!(
            "element edge {edge} must be positive"
        )));
    }
    let n = ((SPECIMEN_SIZE / edge).round() as usize).max(1);
    let h = SPECIMEN_SIZE / n as f64;
    let mut active = vec![true; n * n];
    for poly in polygons {
        let (lo, hi) = poly.bounds();
        let span = |a: f64, b: f64| {
            let first = ((a / h - 0.5).floor().max(0.0)) as usize;
            let last = ((b / h - 0.5).ceil().max(0.0) as usize).min(n - 1);
            first..=last
        };
        for j in span(lo.y, hi.y) {
            let yc = (j as f64 + 0.5) * h;
            for i in span(lo.x, hi.x) {
                let xc = (i as f64 + 0.5) * h;
                if poly.contains_strict(Point::new(xc, yc)) {
                    active[j * n + i] = false;
                }
            }
        }
    }
    RasterMesh::from_mask(n, n, h, active)
}
