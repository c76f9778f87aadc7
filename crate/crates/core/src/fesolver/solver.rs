//! Explicit central-difference driver for transverse compression.
//!
//! The bottom edge is held vertically, the bottom-left node horizontally, and
//! the top edge is driven downward at `rate * height`. Side walls are
//! traction-free unless [`Lateral::Confined`] is selected. Masses are lumped
//! equally to element corners. When the stable step would need more than
//! [`SolverConfig::max_steps`] increments the density is scaled up so the run
//! fits the budget; kinetic energy is then reported with the scaled masses.

use serde::{Deserialize, Serialize};

use super::element::{Integration, Quad4};
use super::material::MaterialModel;
use super::return_map::ElementState;
use crate::error::{Error, Result};
use crate::geometry::RasterMesh;

const MM: f64 = 1e-3;

/// Side-wall condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lateral {
    #[default]
    Free,
    /// Horizontal displacement of both side walls fixed (uniaxial strain).
    Confined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// CFL safety factor in (0, 1].
    pub safety: f64,
    pub integration: Integration,
    /// Viscous hourglass coefficient (reduced integration only).
    pub hourglass_coef: f64,
    /// Upper bound on time increments; `None` disables mass scaling.
    pub max_steps: Option<usize>,
    /// Allowed energy-balance residual as a fraction of external work.
    pub energy_tol: f64,
    pub lateral: Lateral,
    /// Accepted nominal strain-rate range, 1/s.
    pub rate_range: (f64, f64),
    pub max_final_strain: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            safety: 0.9,
            integration: Integration::Full,
            hourglass_coef: 0.1,
            max_steps: Some(6000),
            energy_tol: 0.01,
            lateral: Lateral::Free,
            rate_range: (0.45, 90.9),
            max_final_strain: 0.25,
        }
    }
}

/// Time histories of one compression run, sampled at uniformly spaced
/// nominal strains. Energies are per unit thickness.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimulationRecord {
    #[serde(rename = "time_s")]
    pub time: Vec<f64>,
    #[serde(rename = "strain")]
    pub nominal_strain: Vec<f64>,
    /// Reaction force over loaded width, Pa (positive in compression).
    #[serde(rename = "stress_Pa")]
    pub nominal_stress: Vec<f64>,
    #[serde(rename = "force_N_per_m")]
    pub reaction_force: Vec<f64>,
    #[serde(rename = "E_pl_J")]
    pub e_plastic: Vec<f64>,
    #[serde(rename = "E_el_J")]
    pub e_elastic: Vec<f64>,
    #[serde(rename = "E_k_J")]
    pub e_kinetic: Vec<f64>,
    /// Work done by the loading edge.
    #[serde(rename = "W_ext_J")]
    pub w_external: Vec<f64>,
    /// Hourglass-control dissipation.
    #[serde(rename = "E_hg_J")]
    pub e_hourglass: Vec<f64>,
    pub dt_s: f64,
    pub steps: usize,
    pub mass_scale: f64,
}

impl SimulationRecord {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    /// |W_ext - (E_k + E_el + E_pl + E_hg)| at each record.
    pub fn energy_residuals(&self) -> Vec<f64> {
        (0..self.len())
            .map(|k| {
                (self.w_external[k]
                    - (self.e_kinetic[k]
                        + self.e_elastic[k]
                        + self.e_plastic[k]
                        + self.e_hourglass[k]))
                    .abs()
            })
            .collect()
    }

    pub fn final_strain(&self) -> f64 {
        self.nominal_strain.last().copied().unwrap_or(0.0)
    }

    fn push_zero(&mut self) {
        for v in [
            &mut self.time,
            &mut self.nominal_strain,
            &mut self.nominal_stress,
            &mut self.reaction_force,
            &mut self.e_plastic,
            &mut self.e_elastic,
            &mut self.e_kinetic,
            &mut self.w_external,
            &mut self.e_hourglass,
        ] {
            v.push(0.0);
        }
    }
}

/// Stable explicit step `safety * edge / c_d`, seconds.
pub fn stable_dt(mesh: &RasterMesh, mat: &MaterialModel, safety: f64) -> Result<f64> {
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(Error::invalid(format!(
            "CFL safety factor {safety} outside (0, 1]"
        )));
    }
    Ok(safety * mesh.edge() * MM / mat.wave_speed())
}

/// Loading description for [`run_simulation_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Loading {
    /// Nominal strain rate, 1/s.
    pub strain_rate: f64,
    pub final_strain: f64,
    pub record_points: usize,
}

/// Compression run with the default solver settings.
pub fn run_simulation(
    mesh: &RasterMesh,
    mat: &MaterialModel,
    strain_rate: f64,
    final_strain: f64,
    record_points: usize,
) -> Result<SimulationRecord> {
    run_simulation_with(
        mesh,
        mat,
        &Loading {
            strain_rate,
            final_strain,
            record_points,
        },
        &SolverConfig::default(),
    )
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Dof {
    Free,
    Fixed,
    Driven,
}

pub fn run_simulation_with(
    mesh: &RasterMesh,
    mat: &MaterialModel,
    loading: &Loading,
    config: &SolverConfig,
) -> Result<SimulationRecord> {
    mat.validate()?;
    let Loading {
        strain_rate,
        final_strain,
        record_points,
    } = *loading;
    let (rate_lo, rate_hi) = config.rate_range;
    if !(strain_rate >= rate_lo && strain_rate <= rate_hi) {
        return Err(Error::invalid(format!(
            "strain rate {strain_rate} 1/s outside configured range [{rate_lo}, {rate_hi}]"
        )));
    }
    if !(final_strain >= 0.0 && final_strain <= config.max_final_strain) {
        return Err(Error::invalid(format!(
            "final strain {final_strain} outside [0, {}]",
            config.max_final_strain
        )));
    }
    let dt_stable = stable_dt(mesh, mat, config.safety)?;

    let mut rec = SimulationRecord {
        mass_scale: 1.0,
        ..Default::default()
    };
    rec.push_zero();
    if final_strain == 0.0 {
        rec.dt_s = dt_stable;
        return Ok(rec);
    }
    if record_points < 2 {
        return Err(Error::invalid("need at least two record points"));
    }

    let (nx, ny) = (mesh.elems_x, mesh.elems_y);
    let edge = mesh.edge() * MM;
    let height = mesh.height() * MM;
    let width = mesh.width() * MM;
    let velocity = strain_rate * height;
    let duration = final_strain / strain_rate;
    let intervals = record_points - 1;
    let interval = duration / intervals as f64;

    let mut per_interval = (interval / dt_stable).ceil().max(1.0) as usize;
    if let Some(cap) = config.max_steps {
        per_interval = per_interval.min((cap / intervals).max(1));
    }
    let dt = interval / per_interval as f64;
    let mass_scale = if dt > dt_stable {
        (dt / dt_stable).powi(2)
    } else {
        1.0
    };
    rec.dt_s = dt;
    rec.mass_scale = mass_scale;
    rec.steps = per_interval * intervals;

    // connectivity and lumped mass
    let n_nodes = (nx + 1) * (ny + 1);
    let node = |i: usize, j: usize| j * (nx + 1) + i;
    let kernel = Quad4::square(edge, config.integration)?;
    let npts = kernel.n_points();
    let mut conn: Vec<[usize; 4]> = Vec::with_capacity(mesh.active_count());
    for j in 0..ny {
        for i in 0..nx {
            if mesh.is_active(i, j) {
                conn.push([
                    node(i, j),
                    node(i + 1, j),
                    node(i + 1, j + 1),
                    node(i, j + 1),
                ]);
            }
        }
    }
    let rho = mat.rho * mass_scale;
    let mut mass = vec![0.0; n_nodes];
    for nodes in &conn {
        for &n in nodes {
            mass[n] += 0.25 * rho * kernel.area();
        }
    }

    let mut kind = vec![Dof::Free; 2 * n_nodes];
    for n in 0..n_nodes {
        if mass[n] == 0.0 {
            kind[2 * n] = Dof::Fixed;
            kind[2 * n + 1] = Dof::Fixed;
        }
    }
    for i in 0..=nx {
        kind[2 * node(i, 0) + 1] = Dof::Fixed;
        if mass[node(i, ny)] > 0.0 {
            kind[2 * node(i, ny) + 1] = Dof::Driven;
        }
    }
    let anchor = (0..=nx)
        .map(|i| node(i, 0))
        .find(|&n| mass[n] > 0.0)
        .ok_or_else(|| Error::invalid("bottom edge has no solid node"))?;
    kind[2 * anchor] = Dof::Fixed;
    if config.lateral == Lateral::Confined {
        for j in 0..=ny {
            kind[2 * node(0, j)] = Dof::Fixed;
            kind[2 * node(nx, j)] = Dof::Fixed;
        }
    }
    let driven: Vec<usize> = (0..2 * n_nodes)
        .filter(|&d| kind[d] == Dof::Driven)
        .collect();
    let free: Vec<usize> = (0..2 * n_nodes).filter(|&d| kind[d] == Dof::Free).collect();
    let inv_mass: Vec<f64> = (0..2 * n_nodes)
        .map(|d| {
            if mass[d / 2] > 0.0 {
                1.0 / mass[d / 2]
            } else {
                0.0
            }
        })
        .collect();

    let mut states = vec![ElementState::default(); conn.len() * npts];
    let mut u = vec![0.0; 2 * n_nodes];
    let mut v = vec![0.0; 2 * n_nodes];
    let mut acc = vec![0.0; 2 * n_nodes];
    let mut force = vec![0.0; 2 * n_nodes];
    let mut force_prev = vec![0.0; 2 * n_nodes];
    let mut hg = vec![0.0; 2 * n_nodes];
    let mut hg_prev = vec![0.0; 2 * n_nodes];
    let rho_c = rho * (mat.constrained_modulus() / rho).sqrt();
    let reduced = config.integration == Integration::Reduced;

    let (mut w_ext, mut e_pl, mut e_hg) = (0.0, 0.0, 0.0);
    for &d in &driven {
        v[d] = -velocity;
    }

    let mut warned_overlap = false;
    for k in 1..=intervals {
        for s in 1..=per_interval {
            let t = ((k - 1) * per_interval + s) as f64 * dt;
            for &d in &free {
                v[d] += dt * acc[d];
            }
            for &d in &free {
                u[d] += dt * v[d];
            }
            for &d in &driven {
                u[d] = -velocity * t;
            }

            std::mem::swap(&mut force, &mut force_prev);
            force.iter_mut().for_each(|f| *f = 0.0);
            if reduced {
                std::mem::swap(&mut hg, &mut hg_prev);
                hg.iter_mut().for_each(|f| *f = 0.0);
            }
            for (e, nodes) in conn.iter().enumerate() {
                let mut du = [0.0; 8];
                for (a, &n) in nodes.iter().enumerate() {
                    du[2 * a] = dt * v[2 * n];
                    du[2 * a + 1] = dt * v[2 * n + 1];
                }
                let out =
                    kernel.internal_force(&du, &mut states[e * npts..(e + 1) * npts], mat, dt)?;
                e_pl += out.plastic_work;
                let mut fe = out.force;
                if reduced {
                    let mut vel = [0.0; 8];
                    for (a, &n) in nodes.iter().enumerate() {
                        vel[2 * a] = v[2 * n];
                        vel[2 * a + 1] = v[2 * n + 1];
                    }
                    let mut fh = [0.0; 8];
                    kernel.hourglass_force(&vel, config.hourglass_coef, rho_c, &mut fh);
                    for (a, &n) in nodes.iter().enumerate() {
                        hg[2 * n] += fh[2 * a];
                        hg[2 * n + 1] += fh[2 * a + 1];
                        fe[2 * a] += fh[2 * a];
                        fe[2 * a + 1] += fh[2 * a + 1];
                    }
                }
                for (a, &n) in nodes.iter().enumerate() {
                    force[2 * n] += fe[2 * a];
                    force[2 * n + 1] += fe[2 * a + 1];
                }
            }
            for &d in &driven {
                w_ext += 0.5 * dt * v[d] * (force[d] + force_prev[d]);
            }
            if reduced {
                e_hg += 0.5
                    * dt
                    * (0..2 * n_nodes)
                        .map(|d| v[d] * (hg[d] + hg_prev[d]))
                        .sum::<f64>();
            }
            for &d in &free {
                acc[d] = -force[d] * inv_mass[d];
            }
        }

        let time = k as f64 * interval;
        for (e, nodes) in conn.iter().enumerate() {
            let mut ue = [0.0; 8];
            for (a, &n) in nodes.iter().enumerate() {
                ue[2 * a] = u[2 * n];
                ue[2 * a + 1] = u[2 * n + 1];
            }
            // Kinematics are small-strain, so a collapsed void only means
            // overlapping material; there is no self-contact to stop it.
            let det = kernel.centre_jacobian(&ue);
            if !(det > 0.0) && !warned_overlap {
                log::debug!(
                    "element {e} overlaps its neighbours at strain {:.3}",
                    time * strain_rate
                );
                warned_overlap = true;
            }
        }
        let e_el: f64 = conn
            .iter()
            .enumerate()
            .map(|(e, _)| kernel.elastic_energy(&states[e * npts..(e + 1) * npts], mat))
            .sum();
        // velocity at the full step
        let e_k: f64 = free
            .iter()
            .map(|&d| {
                let vf = v[d] + 0.5 * dt * acc[d];
                0.5 * mass[d / 2] * vf * vf
            })
            .sum();
        let reaction = -driven.iter().map(|&d| force[d]).sum::<f64>();

        let ledger = e_k + e_el + e_pl + e_hg;
        if !(ledger.is_finite() && w_ext.is_finite() && reaction.is_finite()) {
            return Err(Error::SimulationDiverged {
                time,
                reason: "non-finite state".into(),
            });
        }
        if (w_ext - ledger).abs() > config.energy_tol * w_ext.abs() {
            return Err(Error::SimulationDiverged {
                time,
                reason: format!(
                    "energy balance off by {:.3}% (W_ext {w_ext:e} J, stored+dissipated {ledger:e} J)",
                    100.0 * (w_ext - ledger).abs() / w_ext.abs().max(f64::MIN_POSITIVE)
                ),
            });
        }

        rec.time.push(time);
        rec.nominal_strain
            .push(final_strain * k as f64 / intervals as f64);
        rec.reaction_force.push(reaction);
        rec.nominal_stress.push(reaction / width);
        rec.e_plastic.push(e_pl);
        rec.e_elastic.push(e_el);
        rec.e_kinetic.push(e_k);
        rec.w_external.push(w_ext);
        rec.e_hourglass.push(e_hg);
    }
    Ok(rec)
}
