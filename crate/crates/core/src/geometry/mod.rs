//! Parametric tubule cross-sections.
//!
//! A design is an 11 x 11 mm solid square holding an `nx` x `ny` grid of
//! identical regular-polygon voids inside the concentric 10 x 10 mm region
//! `[0.5, 10.5]^2`. Coordinates are millimetres with the origin at the
//! specimen's bottom-left corner.

mod polygon;
mod raster;

use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use polygon::{circumradius, orient, regular_polygon, Point, Polygon};
pub use raster::{rasterize, RasterMesh};

/// Specimen edge length, mm.
pub const SPECIMEN_SIZE: f64 = 11.0;
/// Edge length of the square region that holds the tubules, mm.
pub const REGION_SIZE: f64 = 10.0;
/// Offset of the tubule region from the specimen edge, mm.
pub const REGION_OFFSET: f64 = 0.5;
/// Nominal element edge length, mm.
pub const DEFAULT_EDGE: f64 = 0.24;

pub const SIDES_RANGE: (usize, usize) = (3, 6);
pub const COUNT_RANGE: (usize, usize) = (1, 8);
pub const VF_RANGE: (f64, f64) = (0.01, 0.10);

/// The five numbers that identify a structure. Serialized in the
/// [`DesignFile`] layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "DesignFile", try_from = "DesignFile")]
pub struct DesignParams {
    pub sides: usize,
    pub nx: usize,
    pub ny: usize,
    /// Radians in [0, 2π).
    pub angle: f64,
    /// Tubule area as a fraction of its grid cell.
    pub vf: f64,
}

impl DesignParams {
    pub fn new(sides: usize, nx: usize, ny: usize, angle: f64, vf: f64) -> Result<Self> {
        let p = DesignParams {
            sides,
            nx,
            ny,
            angle,
            vf,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(SIDES_RANGE.0..=SIDES_RANGE.1).contains(&self.sides) {
            return Err(Error::invalid(format!(
                "sides = {} outside [3, 6]",
                self.sides
            )));
        }
        for (name, n) in [("nx", self.nx), ("ny", self.ny)] {
            if !(COUNT_RANGE.0..=COUNT_RANGE.1).contains(&n) {
                return Err(Error::invalid(format!("{name} = {n} outside [1, 8]")));
            }
        }
        if !(self.angle.is_finite() && (0.0..TAU).contains(&self.angle)) {
            return Err(Error::invalid(format!(
                "angle = {} rad outside [0, 2π)",
                self.angle
            )));
        }
        // tolerate float noise at the range ends
        let tol = 1e-12;
        if !(self.vf.is_finite() && self.vf >= VF_RANGE.0 - tol && self.vf <= VF_RANGE.1 + tol) {
            return Err(Error::invalid(format!(
                "vf = {} outside [0.01, 0.10]",
                self.vf
            )));
        }
        Ok(())
    }

    /// Area of one grid cell of the tubule region, mm².
    pub fn cell_area(&self) -> f64 {
        (REGION_SIZE / self.nx as f64) * (REGION_SIZE / self.ny as f64)
    }

    /// Area of each tubule, mm².
    pub fn tubule_area(&self) -> f64 {
        self.vf * self.cell_area()
    }

    /// Total void area, mm². Equals `vf * 100` independent of the grid.
    pub fn void_area(&self) -> f64 {
        self.tubule_area() * (self.nx * self.ny) as f64
    }

    /// Solid cross-section area, mm².
    pub fn solid_area(&self) -> f64 {
        SPECIMEN_SIZE * SPECIMEN_SIZE - self.void_area()
    }

    pub fn angle_deg(&self) -> f64 {
        self.angle.to_degrees()
    }

    /// Design mirrored about the vertical centreline.
    pub fn mirrored(&self) -> DesignParams {
        DesignParams {
            angle: (std::f64::consts::PI - self.angle).rem_euclid(TAU),
            ..*self
        }
    }
}

impl fmt::Display for DesignParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "sides={} nx={} ny={} angle={:.3}° vf={:.4}",
            self.sides,
            self.nx,
            self.ny,
            self.angle_deg(),
            self.vf
        )
    }
}

/// On-disk design description; the angle is stored in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignFile {
    pub sides: usize,
    pub nx: usize,
    pub ny: usize,
    pub angle_deg: f64,
    pub vf: f64,
}

impl From<DesignParams> for DesignFile {
    fn from(p: DesignParams) -> Self {
        DesignFile {
            sides: p.sides,
            nx: p.nx,
            ny: p.ny,
            angle_deg: p.angle_deg(),
            vf: p.vf,
        }
    }
}

impl TryFrom<DesignFile> for DesignParams {
    type Error = Error;

    fn try_from(d: DesignFile) -> Result<Self> {
        DesignParams::new(d.sides, d.nx, d.ny, d.angle_deg.to_radians(), d.vf)
    }
}

/// Why a parameter set does not yield a usable structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    /// Tubules `a` and `b` overlap or touch.
    Overlap { a: usize, b: usize },
    /// Tubule `index` leaves the 10 x 10 mm region.
    OutsideRegion { index: usize },
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::Overlap { a, b } => write!(f, "tubules {a} and {b} overlap or touch"),
            Rejection::OutsideRegion { index } => {
                write!(f, "tubule {index} leaves the tubule region")
            }
        }
    }
}

/// Centres of the `nx` x `ny` cell grid over the tubule region, row-major from
/// the bottom-left cell.
pub fn tubule_centers(nx: usize, ny: usize) -> Result<Vec<Point>> {
    for (name, n) in [("nx", nx), ("ny", ny)] {
        if !(COUNT_RANGE.0..=COUNT_RANGE.1).contains(&n) {
            return Err(Error::invalid(format!("{name} = {n} outside [1, 8]")));
        }
    }
    let (wx, wy) = (REGION_SIZE / nx as f64, REGION_SIZE / ny as f64);
    let mut centers = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            centers.push(Point::new(
                REGION_OFFSET + (i as f64 + 0.5) * wx,
                REGION_OFFSET + (j as f64 + 0.5) * wy,
            ));
        }
    }
    Ok(centers)
}

/// Builds the tubule polygons, or reports why the layout is unusable.
///
/// The outer `Result` carries argument errors; the inner one is the
/// validity outcome.
pub fn build_design(params: &DesignParams) -> Result<std::result::Result<Vec<Polygon>, Rejection>> {
    params.validate()?;
    let area = params.tubule_area();
    let polygons = tubule_centers(params.nx, params.ny)?
        .into_iter()
        .map(|c| regular_polygon(params.sides, area, params.angle, c))
        .collect::<Result<Vec<_>>>()?;

    let (lo, hi) = (REGION_OFFSET, REGION_OFFSET + REGION_SIZE);
    if let Some(index) = polygons.iter().position(|p| {
        p.vertices()
            .iter()
            .any(|v| v.x < lo || v.x > hi || v.y < lo || v.y > hi)
    }) {
        return Ok(Err(Rejection::OutsideRegion { index }));
    }

    // Identical polygons on a grid: anything farther apart than two
    // circumradii cannot meet.
    let reach = 2.0 * circumradius(params.sides, area);
    let reach_sq = reach * reach * (1.0 + 1e-9);
    let centers: Vec<Point> = polygons.iter().map(Polygon::centroid).collect();
    for a in 0..polygons.len() {
        for b in a + 1..polygons.len() {
            let (dx, dy) = (centers[a].x - centers[b].x, centers[a].y - centers[b].y);
            if dx * dx + dy * dy > reach_sq {
                continue;
            }
            if polygons[a].intersects_closed(&polygons[b]) {
                return Ok(Err(Rejection::Overlap { a, b }));
            }
        }
    }
    Ok(Ok(polygons))
}

/// Builds and rasterizes a design in one go.
pub fn mesh_design(
    params: &DesignParams,
    edge: f64,
) -> Result<std::result::Result<RasterMesh, Rejection>> {
    match build_design(params)? {
        Ok(polygons) => Ok(Ok(rasterize(&polygons, edge)?)),
        Err(r) => Ok(Err(r)),
    }
}
