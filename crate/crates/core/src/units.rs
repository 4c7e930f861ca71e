//! Unit conventions.
//!
//! Everything is stored as angular frequency in rad/s and time in seconds.
//! Input and output surfaces speak cyclic MHz (ν = ω/2π), the way device
//! parameters are usually quoted.

use std::f64::consts::TAU;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

const MHZ: f64 = 1.0e6;

/// Angular frequency (rad/s).
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Frequency(f64);

impl Frequency {
    pub const ZERO: Frequency = Frequency(0.0);

    pub const fn from_rad_per_s(w: f64) -> Self {
        Frequency(w)
    }

    /// From cyclic MHz: ω = 2π·ν·10⁶.
    pub fn from_mhz(nu: f64) -> Self {
        Frequency(TAU * nu * MHZ)
    }

    pub fn from_ghz(nu: f64) -> Self {
        Frequency::from_mhz(nu * 1.0e3)
    }

    pub fn from_khz(nu: f64) -> Self {
        Frequency::from_mhz(nu * 1.0e-3)
    }

    pub const fn rad_per_s(self) -> f64 {
        self.0
    }

    /// Cyclic MHz.
    pub fn mhz(self) -> f64 {
        self.0 / (TAU * MHZ)
    }

    /// Angular rate per microsecond, the natural scale inside the fitters.
    pub fn rad_per_us(self) -> f64 {
        self.0 * 1.0e-6
    }

    pub fn abs(self) -> Self {
        Frequency(self.0.abs())
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "2π×{:.6} MHz", self.mhz())
    }
}

impl Add for Frequency {
    type Output = Frequency;
    fn add(self, rhs: Frequency) -> Frequency {
        Frequency(self.0 + rhs.0)
    }
}

impl Sub for Frequency {
    type Output = Frequency;
    fn sub(self, rhs: Frequency) -> Frequency {
        Frequency(self.0 - rhs.0)
    }
}

impl Neg for Frequency {
    type Output = Frequency;
    fn neg(self) -> Frequency {
        Frequency(-self.0)
    }
}

impl Mul<f64> for Frequency {
    type Output = Frequency;
    fn mul(self, rhs: f64) -> Frequency {
        Frequency(self.0 * rhs)
    }
}

impl Mul<Frequency> for f64 {
    type Output = Frequency;
    fn mul(self, rhs: Frequency) -> Frequency {
        Frequency(self * rhs.0)
    }
}

impl Div<f64> for Frequency {
    type Output = Frequency;
    fn div(self, rhs: f64) -> Frequency {
        Frequency(self.0 / rhs)
    }
}

impl Div for Frequency {
    type Output = f64;
    fn div(self, rhs: Frequency) -> f64 {
        self.0 / rhs.0
    }
}

pub fn us(t: f64) -> f64 {
    t * 1.0e-6
}

pub fn ns(t: f64) -> f64 {
    t * 1.0e-9
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mhz_conversion() {
        let k = Frequency::from_mhz(9.0);
        assert!((k.rad_per_s() - 2.0 * std::f64::consts::PI * 9.0e6).abs() < 1e-6);
        assert!((Frequency::from_ghz(6.343).mhz() - 6343.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn mhz_round_trip(nu in -1.0e5f64..1.0e5) {
            let back = Frequency::from_mhz(nu).mhz();
            prop_assert!((back - nu).abs() <= 1e-12 * nu.abs().max(1e-300));
        }
    }
}
