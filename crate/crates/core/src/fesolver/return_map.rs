//! Backward-Euler radial return for the overstress power law.
//!
//! With a trial stress of equivalent value `q_tr` and shear modulus `G`, the
//! plastic increment Δ solves
//!
//! ```text
//! g(Δ) = Δ - dt·D·((q_tr - 3GΔ) / σ₀(ē + Δ) - 1)^n = 0,   0 < Δ < (q_tr - σ₀(ē)) / 3G
//! ```
//!
//! `g` is strictly increasing with `g(0) < 0 < g(Δmax)`, so the root is unique
//! and a bracket is always available for the Newton fallback.

use serde::{Deserialize, Serialize};

use super::material::MaterialModel;
use super::stress::{von_mises, PlaneTensor};
use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 200;
const REL_TOL: f64 = 1e-12;

/// Material-point state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ElementState {
    /// Cauchy stress, Pa.
    pub stress: PlaneTensor,
    /// Equivalent plastic strain ē_pl.
    pub epbar: f64,
    /// Δē of the most recent step; seeds the next return-map solve.
    #[serde(default)]
    pub last_increment: f64,
}

impl ElementState {
    /// Elastic strain from the isotropic compliance.
    pub fn elastic_strain(&self, mat: &MaterialModel) -> PlaneTensor {
        let g2 = 2.0 * mat.shear_modulus();
        let vol = self.stress.mean() / (3.0 * mat.bulk_modulus());
        (1.0 / g2 * self.stress.deviator()).with_mean(vol)
    }

    /// Elastic strain energy density ½σ:ε_el, J/m³.
    pub fn elastic_energy_density(&self, mat: &MaterialModel) -> f64 {
        let p = self.stress.mean();
        let s = self.stress.deviator();
        0.5 * p * p / mat.bulk_modulus() + s.ddot(&s) / (4.0 * mat.shear_modulus())
    }

    pub fn von_mises(&self) -> f64 {
        von_mises(&self.stress)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnOutcome {
    pub state: ElementState,
    /// Plastic increment Δē over the step.
    pub delta_epbar: f64,
    pub iterations: usize,
}

/// (x^n, x^(n-1)) with fast paths for small integer exponents.
#[inline]
fn power(x: f64, n: f64) -> (f64, f64) {
    let m1 = if n == 1.0 {
        1.0
    } else if n == 2.0 {
        x
    } else if n.fract() == 0.0 && n <= 8.0 {
        let mut acc = x;
        for _ in 2..n as i32 {
            acc *= x;
        }
        acc
    } else {
        x.powf(n - 1.0)
    };
    (m1 * x, m1)
}

/// Residual g(Δ) and its derivative.
#[inline]
fn residual(
    delta: f64,
    q_trial: f64,
    dt: f64,
    epbar: f64,
    g3: f64,
    mat: &MaterialModel,
) -> (f64, f64) {
    let (sigma0, slope) = mat.hardening.eval(epbar + delta);
    let q = q_trial - g3 * delta;
    let over = q / sigma0 - 1.0;
    if over <= 0.0 {
        return (delta, 1.0);
    }
    let dt_d = dt * mat.d;
    let (pow, pow_m1) = power(over, mat.n_exp);
    let dover = (-g3 * sigma0 - q * slope) / (sigma0 * sigma0);
    let dpow = mat.n_exp * pow_m1 * dover;
    (delta - dt_d * pow, 1.0 - dt_d * dpow)
}

/// Scalar residual of the backward-Euler flow equation.
pub fn return_residual(delta: f64, q_trial: f64, dt: f64, epbar: f64, mat: &MaterialModel) -> f64 {
    residual(delta, q_trial, dt, epbar, 3.0 * mat.shear_modulus(), mat).0
}

/// Safeguarded Newton solve for the plastic increment. Returns (Δ, iterations).
pub fn solve_increment(
    q_trial: f64,
    dt: f64,
    epbar: f64,
    mat: &MaterialModel,
) -> Result<(f64, usize)> {
    solve_increment_from(q_trial, dt, epbar, mat, 0.0)
}

/// As [`solve_increment`], starting Newton from `guess` when it lies inside
/// the bracket.
pub fn solve_increment_from(
    q_trial: f64,
    dt: f64,
    epbar: f64,
    mat: &MaterialModel,
    guess: f64,
) -> Result<(f64, usize)> {
    let g3 = 3.0 * mat.shear_modulus();
    let sigma0 = mat.yield_stress(epbar);
    if q_trial <= sigma0 {
        return Ok((0.0, 0));
    }
    let dmax = (q_trial - sigma0) / g3;
    let (mut lo, mut hi) = (0.0, dmax);
    let mut delta = if guess > 0.0 && guess < dmax {
        guess
    } else {
        0.0
    };
    let mut last = f64::NAN;
    for it in 1..=MAX_ITERATIONS {
        let (g, dg) = residual(delta, q_trial, dt, epbar, g3, mat);
        last = g;
        if g.abs() <= REL_TOL * delta {
            return Ok((delta, it));
        }
        if g < 0.0 {
            lo = delta;
        } else {
            hi = delta;
        }
        if hi - lo <= f64::EPSILON * hi {
            return Ok((delta, it));
        }
        let newton = delta - g / dg;
        delta = if newton > lo && newton < hi && newton.is_finite() {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::SolverFailure {
        iterations: MAX_ITERATIONS,
        q_trial,
        dt,
        residual: last,
    })
}

/// Returns the trial stress to the rate-dependent yield surface.
///
/// The deviator is scaled by `q_new / q_trial`; pressure is untouched.
pub fn radial_return(
    trial: &PlaneTensor,
    dt: f64,
    state: &ElementState,
    mat: &MaterialModel,
) -> Result<ReturnOutcome> {
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("time step {dt} must be positive")));
    }
    let q_trial = von_mises(trial);
    let (delta, iterations) =
        solve_increment_from(q_trial, dt, state.epbar, mat, state.last_increment)?;
    if delta == 0.0 {
        return Ok(ReturnOutcome {
            state: ElementState {
                stress: *trial,
                epbar: state.epbar,
                last_increment: 0.0,
            },
            delta_epbar: 0.0,
            iterations,
        });
    }
    let q_new = q_trial - 3.0 * mat.shear_modulus() * delta;
    let scale = q_new / q_trial;
    let stress = (scale * trial.deviator()).with_mean(trial.mean());
    Ok(ReturnOutcome {
        state: ElementState {
            stress,
            epbar: state.epbar + delta,
            last_increment: delta,
        },
        delta_epbar: delta,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fesolver::material::Hardening;
    use approx::assert_relative_eq;

    fn bisect(q_trial: f64, dt: f64, epbar: f64, mat: &MaterialModel) -> f64 {
        // independent restatement of the residual
        let g3 = 3.0 * mat.youngs / (2.0 * (1.0 + mat.nu));
        let g = |d: f64| {
            let s0 = mat.hardening.yield_stress(epbar + d);
            let over = ((q_trial - g3 * d) / s0 - 1.0).max(0.0);
            d - dt * mat.d * over.powf(mat.n_exp)
        };
        let (mut lo, mut hi) = (0.0, (q_trial - mat.hardening.yield_stress(epbar)) / g3);
        while hi - lo > 1e-12 * hi {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn elastic_step_unchanged() {
        let mat = MaterialModel::default();
        let trial = PlaneTensor::new(-30e6, 0.0, -10e6, 5e6);
        let out = radial_return(&trial, 1e-6, &ElementState::default(), &mat).unwrap();
        assert_eq!(out.delta_epbar, 0.0);
        assert_eq!(out.state.stress, trial);
    }

    #[test]
    fn newton_matches_bisection() {
        let mat = MaterialModel::default();
        let trial = PlaneTensor::new(-150e6, 20e6, -40e6, 30e6);
        let q = von_mises(&trial);
        let dt = 3e-5;
        let (delta, _) = solve_increment(q, dt, 0.1, &mat).unwrap();
        let oracle = bisect(q, dt, 0.1, &mat);
        assert_relative_eq!(delta, oracle, max_relative = 1e-10);
        assert!(return_residual(delta, q, dt, 0.1, &mat).abs() < 1e-10 * q);
    }

    #[test]
    fn long_step_approaches_static_surface() {
        let mat = MaterialModel::default();
        let q_trial = 200e6;
        let mut prev_gap = f64::INFINITY;
        for dt in [1e-4, 1e-2, 1.0, 1e2, 1e4] {
            let (delta, _) = solve_increment(q_trial, dt, 0.0, &mat).unwrap();
            let q_new = q_trial - 3.0 * mat.shear_modulus() * delta;
            let gap = q_new / mat.yield_stress(delta) - 1.0;
            assert!(gap > 0.0 && gap < prev_gap, "dt {dt}: gap {gap}");
            prev_gap = gap;
        }
        assert!(prev_gap < 1e-3);
    }

    #[test]
    fn stress_scaled_radially_pressure_kept() {
        let mat = MaterialModel {
            hardening: Hardening::constant(50e6).unwrap(),
            ..MaterialModel::default()
        };
        let trial = PlaneTensor::new(-120e6, -10e6, -50e6, 15e6);
        let out = radial_return(&trial, 1e-3, &ElementState::default(), &mat).unwrap();
        assert!(out.delta_epbar > 0.0);
        assert_relative_eq!(out.state.stress.mean(), trial.mean(), max_relative = 1e-14);
        let (s0, s1) = (trial.deviator(), out.state.stress.deviator());
        assert_relative_eq!(s1.xx / s0.xx, s1.xy / s0.xy, max_relative = 1e-12);
        // consistency with the discrete flow rule
        let q_new = out.state.von_mises();
        let rate = out.delta_epbar / 1e-3;
        assert_relative_eq!(
            q_new,
            mat.flow_stress(out.state.epbar, rate),
            max_relative = 1e-10
        );
    }

    #[test]
    fn elastic_energy_matches_half_stress_strain() {
        let mat = MaterialModel::default();
        let st = ElementState {
            stress: PlaneTensor::new(-3e6, 1e6, -0.5e6, 2e6),
            ..Default::default()
        };
        let eps = st.elastic_strain(&mat);
        assert_relative_eq!(
            st.elastic_energy_density(&mat),
            0.5 * st.stress.ddot(&eps),
            max_relative = 1e-12
        );
    }

    #[test]
    fn rejects_non_positive_dt() {
        let mat = MaterialModel::default();
        assert!(radial_return(&PlaneTensor::ZERO, 0.0, &ElementState::default(), &mat).is_err());
    }
}
