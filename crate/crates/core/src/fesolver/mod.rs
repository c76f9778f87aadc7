//! Explicit-dynamics plane-strain solver with rate-dependent J2 plasticity.

mod element;
mod material;
mod return_map;
mod solver;
mod stress;

pub use element::{ElementUpdate, Integration, Quad4};
pub use material::{Hardening, MaterialModel};
pub use return_map::{
    radial_return, return_residual, solve_increment, solve_increment_from, ElementState,
    ReturnOutcome,
};
pub use solver::{
    run_simulation, run_simulation_with, stable_dt, Lateral, Loading, SimulationRecord,
    SolverConfig,
};
pub use stress::{flow_direction, von_mises, PlaneTensor};

/// Element-level entry point: stress update and internal forces for one
/// element given its displacement increment.
pub fn element_internal_force(
    element: &Quad4,
    du: &[f64; 8],
    states: &mut [ElementState],
    mat: &MaterialModel,
    dt: f64,
) -> crate::Result<ElementUpdate> {
    element.internal_force(du, states, mat, dt)
}
