//! Unit conventions and physical constants.
//!
//! Everything inside the crate is SI with angular frequencies in rad/s. Values
//! quoted in Hz, kHz or MHz are ordinary frequencies; the factor 2π is applied
//! exactly once, in the `from_*`/accessor pairs on [`AngularFrequency`].

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// CODATA 2018 values.
pub mod constants {
    /// Vacuum permeability, N/A².
    pub const MU_0: f64 = 1.256_637_062_12e-6;
    /// Reduced Planck constant, J·s.
    pub const HBAR: f64 = 1.054_571_817e-34;
    /// Planck constant, J·s (exact).
    pub const PLANCK: f64 = 6.626_070_15e-34;
    /// Bohr magneton, J/T.
    pub const MU_B: f64 = 9.274_010_078_3e-24;
    /// Vacuum permittivity, F/m.
    pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
}

/// An angular frequency in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AngularFrequency(pub f64);

impl AngularFrequency {
    pub const ZERO: AngularFrequency = AngularFrequency(0.0);

    pub const fn from_rad_per_s(value: f64) -> Self {
        AngularFrequency(value)
    }

    pub fn from_hz(hz: f64) -> Self {
        AngularFrequency(2.0 * PI * hz)
    }

    pub fn from_khz(khz: f64) -> Self {
        Self::from_hz(khz * 1e3)
    }

    pub fn from_mhz(mhz: f64) -> Self {
        Self::from_hz(mhz * 1e6)
    }

    pub const fn rad_per_s(self) -> f64 {
        self.0
    }

    pub fn hz(self) -> f64 {
        self.0 / (2.0 * PI)
    }

    pub fn khz(self) -> f64 {
        self.hz() * 1e-3
    }

    pub fn mhz(self) -> f64 {
        self.hz() * 1e-6
    }

    pub fn abs(self) -> Self {
        AngularFrequency(self.0.abs())
    }
}

impl fmt::Display for AngularFrequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "2π × {:.4} kHz", self.khz())
    }
}

impl Add for AngularFrequency {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        AngularFrequency(self.0 + rhs.0)
    }
}

impl Sub for AngularFrequency {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        AngularFrequency(self.0 - rhs.0)
    }
}

impl Neg for AngularFrequency {
    type Output = Self;
    fn neg(self) -> Self {
        AngularFrequency(-self.0)
    }
}

impl Mul<f64> for AngularFrequency {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        AngularFrequency(self.0 * rhs)
    }
}

impl Div<f64> for AngularFrequency {
    type Output = Self;
    fn div(self, rhs: f64) -> Self {
        AngularFrequency(self.0 / rhs)
    }
}

/// Ratio of two angular frequencies.
impl Div for AngularFrequency {
    type Output = f64;
    fn div(self, rhs: Self) -> f64 {
        self.0 / rhs.0
    }
}

/// Instantaneous spectral diffusion coefficient: increase of 1/T₂ (s⁻¹) per Hz
/// of excited bandwidth B/2π.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IsdCoefficient(f64);

impl IsdCoefficient {
    pub const ZERO: IsdCoefficient = IsdCoefficient(0.0);

    pub fn from_per_s_per_hz(kappa: f64) -> Self {
        IsdCoefficient(kappa)
    }

    /// The customary display unit, s⁻¹·kHz⁻¹.
    pub fn from_per_s_per_khz(kappa: f64) -> Self {
        IsdCoefficient(kappa * 1e-3)
    }

    pub fn per_s_per_hz(self) -> f64 {
        self.0
    }

    pub fn per_s_per_khz(self) -> f64 {
        self.0 * 1e3
    }

    /// Added dephasing rate 1/T₂ (s⁻¹) for an excited bandwidth `bandwidth`.
    pub fn dephasing_rate(self, bandwidth: AngularFrequency) -> f64 {
        self.0 * bandwidth.hz()
    }
}

impl Add for IsdCoefficient {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        IsdCoefficient(self.0 + rhs.0)
    }
}

impl Sub for IsdCoefficient {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        IsdCoefficient(self.0 - rhs.0)
    }
}

impl Mul<f64> for IsdCoefficient {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        IsdCoefficient(self.0 * rhs)
    }
}

impl fmt::Display for IsdCoefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4} s⁻¹·kHz⁻¹", self.per_s_per_khz())
    }
}

pub const US: f64 = 1e-6;

pub fn us(t: f64) -> f64 {
    t * US
}

pub fn to_us(t: f64) -> f64 {
    t / US
}

/// Density conversion cm⁻³ → m⁻³.
pub fn per_cm3_to_per_m3(n: f64) -> f64 {
    n * 1e6
}

pub fn per_m3_to_per_cm3(n: f64) -> f64 {
    n * 1e-6
}
