use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-linear static yield curve σ₀(ē_pl), held constant past its ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct Hardening {
    /// (equivalent plastic strain, yield stress in Pa), strictly increasing strain.
    points: Vec<[f64; 2]>,
}

impl Hardening {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("hardening table is empty"));
        }
        if points
            .iter()
            .any(|[e, s]| !(e.is_finite() && s.is_finite()))
        {
            return Err(Error::invalid("hardening table has non-finite entries"));
        }
        if points[0][0] != 0.0 {
            return Err(Error::invalid(
                "hardening table must start at zero plastic strain",
            ));
        }
        for w in points.windows(2) {
            if w[1][0] <= w[0][0] {
                return Err(Error::invalid(
                    "hardening strains must be strictly increasing",
                ));
            }
            if w[1][1] < w[0][1] {
                return Err(Error::invalid("hardening stress must be non-decreasing"));
            }
        }
        if points[0][1] <= 0.0 {
            return Err(Error::invalid("initial yield stress must be positive"));
        }
        Ok(Hardening { points })
    }

    /// Perfectly plastic curve.
    pub fn constant(sigma0: f64) -> Result<Self> {
        Self::new(vec![[0.0, sigma0]])
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    /// Yield stress and its slope dσ₀/dē at `epbar`. At a kink the slope of
    /// the segment to the right is returned.
    #[inline]
    pub fn eval(&self, epbar: f64) -> (f64, f64) {
        let pts = self.points.as_slice();
        let [e_last, s_last] = pts[pts.len() - 1];
        if epbar >= e_last {
            return (s_last, 0.0);
        }
        // tables are short; a linear scan beats a binary search here
        let mut k = 1;
        while pts[k][0] <= epbar {
            k += 1;
        }
        let [e0, s0] = pts[k - 1];
        let [e1, s1] = pts[k];
        let slope = (s1 - s0) / (e1 - e0);
        (s0 + slope * (epbar.max(0.0) - e0), slope)
    }

    pub fn yield_stress(&self, epbar: f64) -> f64 {
        self.eval(epbar).0
    }
}

impl TryFrom<Vec<[f64; 2]>> for Hardening {
    type Error = Error;

    fn try_from(points: Vec<[f64; 2]>) -> Result<Self> {
        Hardening::new(points)
    }
}

impl From<Hardening> for Vec<[f64; 2]> {
    fn from(h: Hardening) -> Self {
        h.points
    }
}

/// Isotropic linear elasticity with overstress power-law viscoplasticity.
///
/// Plastic flow obeys `ē̇ = D (q/σ₀(ē) - 1)^n` above the static yield
/// surface and vanishes below it. Temperature effects are not modelled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialModel {
    #[serde(rename = "E_Pa")]
    pub youngs: f64,
    pub nu: f64,
    #[serde(rename = "rho_kg_m3")]
    pub rho: f64,
    pub hardening: Hardening,
    #[serde(rename = "D_per_s")]
    pub d: f64,
    pub n_exp: f64,
}

impl Default for MaterialModel {
    /// PC-ABS-like stand-in: E = 2.5 GPa and ν = 0.35 are measured values,
    /// the yield curve, D, n and density are plausible placeholders.
    fn default() -> Self {
        MaterialModel {
            youngs: 2.5e9,
            nu: 0.35,
            rho: 1070.0,
            hardening: Hardening::new(vec![[0.0, 60e6], [0.5, 80e6]]).expect("valid default table"),
            d: 100.0,
            n_exp: 2.0,
        }
    }
}

impl MaterialModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.youngs.is_finite() && self.youngs > 0.0) {
            return Err(Error::invalid("E must be positive"));
        }
        if !(self.nu > 0.0 && self.nu < 0.5) {
            return Err(Error::invalid("Poisson ratio must lie in (0, 0.5)"));
        }
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(Error::invalid("density must be positive"));
        }
        if !(self.d.is_finite() && self.d > 0.0) {
            return Err(Error::invalid("D must be positive"));
        }
        if !(self.n_exp.is_finite() && self.n_exp >= 1.0) {
            return Err(Error::invalid("overstress exponent must be >= 1"));
        }
        // re-run table checks for values built by hand
        Hardening::new(self.hardening.points.clone())?;
        Ok(())
    }

    /// Linear elastic material (yield stress far above anything reachable).
    pub fn elastic(youngs: f64, nu: f64, rho: f64) -> Self {
        MaterialModel {
            youngs,
            nu,
            rho,
            hardening: Hardening::constant(1e30).expect("positive"),
            d: 1.0,
            n_exp: 1.0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: MaterialModel = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn shear_modulus(&self) -> f64 {
        self.youngs / (2.0 * (1.0 + self.nu))
    }

    pub fn bulk_modulus(&self) -> f64 {
        self.youngs / (3.0 * (1.0 - 2.0 * self.nu))
    }

    pub fn lame_lambda(&self) -> f64 {
        self.youngs * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))
    }

    /// P-wave (constrained) modulus E(1-ν)/((1+ν)(1-2ν)).
    pub fn constrained_modulus(&self) -> f64 {
        self.youngs * (1.0 - self.nu) / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))
    }

    /// Dilatational wave speed, m/s.
    pub fn wave_speed(&self) -> f64 {
        (self.constrained_modulus() / self.rho).sqrt()
    }

    pub fn yield_stress(&self, epbar: f64) -> f64 {
        self.hardening.yield_stress(epbar)
    }

    /// Equivalent plastic strain rate for von Mises stress `q`.
    pub fn overstress_rate(&self, q: f64, epbar: f64) -> f64 {
        let sigma0 = self.yield_stress(epbar);
        if q > sigma0 {
            self.d * (q / sigma0 - 1.0).powf(self.n_exp)
        } else {
            0.0
        }
    }

    /// Steady-state flow stress at plastic rate `rate`: σ₀(1 + (rate/D)^(1/n)).
    pub fn flow_stress(&self, epbar: f64, rate: f64) -> f64 {
        self.yield_stress(epbar) * (1.0 + (rate.max(0.0) / self.d).powf(1.0 / self.n_exp))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn with(d: f64, n_exp: f64) -> MaterialModel {
        MaterialModel {
            hardening: Hardening::constant(50e6).unwrap(),
            d,
            n_exp,
            ..MaterialModel::default()
        }
    }

    #[test]
    fn rate_zero_on_yield_surface() {
        let m = with(1.0, 1.0);
        assert_eq!(m.overstress_rate(50e6, 0.0), 0.0);
        assert_eq!(m.overstress_rate(10e6, 0.0), 0.0);
    }

    #[test]
    fn unit_overstress() {
        assert_relative_eq!(
            with(1.0, 1.0).overstress_rate(100e6, 0.0),
            1.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn squared_overstress() {
        assert_relative_eq!(
            with(10.0, 2.0).overstress_rate(75e6, 0.0),
            2.5,
            max_relative = 1e-14
        );
    }

    #[test]
    fn flow_stress_inverts_rate() {
        let m = MaterialModel::default();
        for rate in [0.01, 1.0, 50.0] {
            let q = m.flow_stress(0.2, rate);
            assert_relative_eq!(m.overstress_rate(q, 0.2), rate, max_relative = 1e-12);
        }
    }

    #[test]
    fn hardening_interpolates_and_clamps() {
        let h = Hardening::new(vec![[0.0, 60e6], [0.5, 80e6]]).unwrap();
        assert_relative_eq!(h.yield_stress(0.25), 70e6);
        assert_eq!(h.eval(0.0), (60e6, 40e6));
        assert_eq!(h.eval(0.7), (80e6, 0.0));
        assert_eq!(Hardening::constant(5.0).unwrap().eval(1.0), (5.0, 0.0));
    }

    #[test]
    fn hardening_rejects_bad_tables() {
        assert!(Hardening::new(vec![]).is_err());
        assert!(Hardening::new(vec![[0.1, 1.0]]).is_err());
        assert!(Hardening::new(vec![[0.0, 2.0], [0.1, 1.0]]).is_err());
        assert!(Hardening::new(vec![[0.0, 1.0], [0.0, 2.0]]).is_err());
        assert!(Hardening::new(vec![[0.0, 0.0]]).is_err());
    }

    #[test]
    fn constrained_modulus_value() {
        let m = MaterialModel::default();
        assert_relative_eq!(
            m.constrained_modulus(),
            4.0123456790123e9,
            max_relative = 1e-12
        );
        assert_relative_eq!(m.wave_speed(), 1936.46, max_relative = 1e-5);
    }

    #[test]
    fn json_field_names() {
        let json = serde_json::to_string(&MaterialModel::default()).unwrap();
        for key in [
            "\"E_Pa\"",
            "\"nu\"",
            "\"rho_kg_m3\"",
            "\"hardening\"",
            "\"D_per_s\"",
            "\"n_exp\"",
        ] {
            assert!(json.contains(key), "{key} missing from {json}");
        }
        assert_eq!(
            MaterialModel::from_json(&json).unwrap(),
            MaterialModel::default()
        );
        let bad = json.replace("0.35", "0.6");
        assert!(MaterialModel::from_json(&bad).is_err());
    }
}
