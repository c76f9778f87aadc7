//! Four-node bilinear plane-strain quadrilateral, small-strain kinematics.
//!
//! Nodes are counter-clockwise; degrees of freedom are interleaved
//! `[ux0, uy0, ux1, uy1, ...]`. Forces are per unit thickness.

use serde::{Deserialize, Serialize};

use super::material::MaterialModel;
use super::return_map::{radial_return, ElementState};
use super::stress::PlaneTensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integration {
    /// 2 x 2 Gauss points.
    #[default]
    Full,
    /// One point at the centre plus viscous hourglass control.
    Reduced,
}

impl std::str::FromStr for Integration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Integration::Full),
            "reduced" => Ok(Integration::Reduced),
            other => Err(Error::invalid(format!(
                "unknown integration scheme {other:?}"
            ))),
        }
    }
}

const XI: [f64; 4] = [-1.0, 1.0, 1.0, -1.0];
const ETA: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];
/// Hourglass base vector, unit length.
const HOURGLASS: [f64; 4] = [0.5, -0.5, 0.5, -0.5];

#[derive(Debug, Clone, Copy, PartialEq)]
struct GaussPoint {
    dndx: [f64; 4],
    dndy: [f64; 4],
    weight: f64,
}

/// Precomputed shape-function gradients for one element geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Quad4 {
    points: Vec<GaussPoint>,
    integration: Integration,
    area: f64,
    /// Characteristic length sqrt(area), m.
    length: f64,
}

/// Result of a stress update over one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementUpdate {
    pub force: [f64; 8],
    /// Plastic dissipation over the step, J per unit thickness.
    pub plastic_work: f64,
}

impl Quad4 {
    /// Element with nodal coordinates in metres (counter-clockwise).
    pub fn new(coords: [[f64; 2]; 4], integration: Integration) -> Result<Self> {
        Self::with_index(coords, integration, 0)
    }

    pub(crate) fn with_index(
        coords: [[f64; 2]; 4],
        integration: Integration,
        element: usize,
    ) -> Result<Self> {
        let g = 1.0 / 3f64.sqrt();
        let sample: Vec<(f64, f64, f64)> = match integration {
            Integration::Full => vec![(-g, -g, 1.0), (g, -g, 1.0), (g, g, 1.0), (-g, g, 1.0)],
            Integration::Reduced => vec![(0.0, 0.0, 4.0)],
        };
        let mut points = Vec::with_capacity(sample.len());
        let mut area = 0.0;
        for (xi, eta, w) in sample {
            let mut dnxi = [0.0; 4];
            let mut dneta = [0.0; 4];
            for i in 0..4 {
                dnxi[i] = 0.25 * XI[i] * (1.0 + eta * ETA[i]);
                dneta[i] = 0.25 * ETA[i] * (1.0 + xi * XI[i]);
            }
            let (mut j11, mut j12, mut j21, mut j22) = (0.0, 0.0, 0.0, 0.0);
            for i in 0..4 {
                j11 += dnxi[i] * coords[i][0];
                j12 += dnxi[i] * coords[i][1];
                j21 += dneta[i] * coords[i][0];
                j22 += dneta[i] * coords[i][1];
            }
            let det = j11 * j22 - j12 * j21;
            if !(det > 0.0) {
                return Err(Error::FatalGeometry {
                    element,
                    det_j: det,
                });
            }
            let mut dndx = [0.0; 4];
            let mut dndy = [0.0; 4];
            for i in 0..4 {
                dndx[i] = (j22 * dnxi[i] - j12 * dneta[i]) / det;
                dndy[i] = (-j21 * dnxi[i] + j11 * dneta[i]) / det;
            }
            area += w * det;
            points.push(GaussPoint {
                dndx,
                dndy,
                weight: w * det,
            });
        }
        Ok(Quad4 {
            points,
            integration,
            area,
            length: area.sqrt(),
        })
    }

    /// Axis-aligned square with lower-left corner at the origin.
    pub fn square(edge: f64, integration: Integration) -> Result<Self> {
        Self::new(
            [[0.0, 0.0], [edge, 0.0], [edge, edge], [0.0, edge]],
            integration,
        )
    }

    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    pub fn integration(&self) -> Integration {
        self.integration
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn weight(&self, gp: usize) -> f64 {
        self.points[gp].weight
    }

    /// Small strain at a Gauss point (tensor shear, ε_zz = 0).
    pub fn strain(&self, gp: usize, u: &[f64; 8]) -> PlaneTensor {
        let p = &self.points[gp];
        let mut e = PlaneTensor::ZERO;
        let mut gamma = 0.0;
        for i in 0..4 {
            let (ux, uy) = (u[2 * i], u[2 * i + 1]);
            e.xx += p.dndx[i] * ux;
            e.yy += p.dndy[i] * uy;
            gamma += p.dndy[i] * ux + p.dndx[i] * uy;
        }
        e.xy = 0.5 * gamma;
        e
    }

    /// Determinant of the deformation gradient at the element centre.
    pub fn centre_jacobian(&self, u: &[f64; 8]) -> f64 {
        let (mut h11, mut h12, mut h21, mut h22) = (0.0, 0.0, 0.0, 0.0);
        let n = self.points.len() as f64;
        for p in &self.points {
            for i in 0..4 {
                let (ux, uy) = (u[2 * i], u[2 * i + 1]);
                h11 += p.dndx[i] * ux;
                h12 += p.dndy[i] * ux;
                h21 += p.dndx[i] * uy;
                h22 += p.dndy[i] * uy;
            }
        }
        let (h11, h12, h21, h22) = (h11 / n, h12 / n, h21 / n, h22 / n);
        (1.0 + h11) * (1.0 + h22) - h12 * h21
    }

    /// Updates the Gauss-point states for displacement increment `du` and
    /// returns the internal nodal forces B^T σ integrated over the element.
    pub fn internal_force(
        &self,
        du: &[f64; 8],
        states: &mut [ElementState],
        mat: &MaterialModel,
        dt: f64,
    ) -> Result<ElementUpdate> {
        debug_assert_eq!(states.len(), self.points.len());
        let lambda = mat.lame_lambda();
        let mu = mat.shear_modulus();
        let mut force = [0.0; 8];
        let mut plastic_work = 0.0;
        for (gp, state) in self.points.iter().zip(states.iter_mut()) {
            let (mut exx, mut eyy, mut gamma) = (0.0, 0.0, 0.0);
            for i in 0..4 {
                let (ux, uy) = (du[2 * i], du[2 * i + 1]);
                exx += gp.dndx[i] * ux;
                eyy += gp.dndy[i] * uy;
                gamma += gp.dndy[i] * ux + gp.dndx[i] * uy;
            }
            let vol = lambda * (exx + eyy);
            let s = state.stress;
            let trial = PlaneTensor::new(
                s.xx + vol + 2.0 * mu * exx,
                s.yy + vol + 2.0 * mu * eyy,
                s.zz + vol,
                s.xy + mu * gamma,
            );
            if trial.von_mises_exceeds(mat.yield_stress(state.epbar)) {
                let out = radial_return(&trial, dt, state, mat)?;
                plastic_work += out.state.von_mises() * out.delta_epbar * gp.weight;
                *state = out.state;
            } else {
                state.stress = trial;
                state.last_increment = 0.0;
            }
            let st = state.stress;
            for i in 0..4 {
                force[2 * i] += (gp.dndx[i] * st.xx + gp.dndy[i] * st.xy) * gp.weight;
                force[2 * i + 1] += (gp.dndy[i] * st.yy + gp.dndx[i] * st.xy) * gp.weight;
            }
        }
        Ok(ElementUpdate {
            force,
            plastic_work,
        })
    }

    /// Viscous hourglass resistance for one-point integration; adds to `force`.
    /// Returns the dissipated power (W per unit thickness).
    pub fn hourglass_force(
        &self,
        vel: &[f64; 8],
        coef: f64,
        mat_rho_c: f64,
        force: &mut [f64; 8],
    ) -> f64 {
        let (mut qx, mut qy) = (0.0, 0.0);
        for i in 0..4 {
            qx += HOURGLASS[i] * vel[2 * i];
            qy += HOURGLASS[i] * vel[2 * i + 1];
        }
        let c = coef * mat_rho_c * self.length;
        for i in 0..4 {
            force[2 * i] += c * HOURGLASS[i] * qx;
            force[2 * i + 1] += c * HOURGLASS[i] * qy;
        }
        c * (qx * qx + qy * qy)
    }

    /// Elastic energy stored in the element, J per unit thickness.
    pub fn elastic_energy(&self, states: &[ElementState], mat: &MaterialModel) -> f64 {
        self.points
            .iter()
            .zip(states)
            .map(|(gp, s)| s.elastic_energy_density(mat) * gp.weight)
            .sum()
    }
}

impl PlaneTensor {
    /// q > limit without the square root; `limit` must be non-negative.
    #[inline]
    fn von_mises_exceeds(&self, limit: f64) -> bool {
        let s = self.deviator();
        1.5 * s.ddot(&s) > limit * limit
    }
}
