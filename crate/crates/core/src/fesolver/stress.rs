use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric plane-strain tensor: in-plane components plus the out-of-plane
/// normal. Shear is stored as the tensor component (not engineering strain).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlaneTensor {
    pub xx: f64,
    pub yy: f64,
    pub zz: f64,
    pub xy: f64,
}

impl PlaneTensor {
    pub const ZERO: PlaneTensor = PlaneTensor {
        xx: 0.0,
        yy: 0.0,
        zz: 0.0,
        xy: 0.0,
    };

    pub const fn new(xx: f64, yy: f64, zz: f64, xy: f64) -> Self {
        PlaneTensor { xx, yy, zz, xy }
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy + self.zz
    }

    pub fn mean(&self) -> f64 {
        self.trace() / 3.0
    }

    pub fn deviator(&self) -> PlaneTensor {
        let p = self.mean();
        PlaneTensor::new(self.xx - p, self.yy - p, self.zz - p, self.xy)
    }

    /// Full double contraction; the shear term appears twice (xy and yx).
    pub fn ddot(&self, other: &PlaneTensor) -> f64 {
        self.xx * other.xx + self.yy * other.yy + self.zz * other.zz + 2.0 * self.xy * other.xy
    }

    pub fn is_finite(&self) -> bool {
        self.xx.is_finite() && self.yy.is_finite() && self.zz.is_finite() && self.xy.is_finite()
    }

    pub fn with_mean(self, p: f64) -> PlaneTensor {
        PlaneTensor::new(self.xx + p, self.yy + p, self.zz + p, self.xy)
    }
}

impl Add for PlaneTensor {
    type Output = PlaneTensor;
    fn add(self, o: PlaneTensor) -> PlaneTensor {
        PlaneTensor::new(
            self.xx + o.xx,
            self.yy + o.yy,
            self.zz + o.zz,
            self.xy + o.xy,
        )
    }
}

impl Sub for PlaneTensor {
    type Output = PlaneTensor;
    fn sub(self, o: PlaneTensor) -> PlaneTensor {
        PlaneTensor::new(
            self.xx - o.xx,
            self.yy - o.yy,
            self.zz - o.zz,
            self.xy - o.xy,
        )
    }
}

impl Mul<PlaneTensor> for f64 {
    type Output = PlaneTensor;
    fn mul(self, t: PlaneTensor) -> PlaneTensor {
        PlaneTensor::new(self * t.xx, self * t.yy, self * t.zz, self * t.xy)
    }
}

/// Von Mises equivalent stress q = sqrt(3/2 S:S).
pub fn von_mises(stress: &PlaneTensor) -> f64 {
    let s = stress.deviator();
    (1.5 * s.ddot(&s)).sqrt()
}

/// Plastic flow direction n = 3/2 S/q, normalised so that n:n = 3/2.
pub fn flow_direction(stress: &PlaneTensor) -> Result<PlaneTensor> {
    let q = von_mises(stress);
    if q <= 0.0 || !q.is_finite() {
        return Err(Error::UndefinedDirection);
    }
    Ok((1.5 / q) * stress.deviator())
}
