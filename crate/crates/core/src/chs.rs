//! Complex hyperbolic secant (CHS) rephasing pulses.
//!
//! Envelope Ω(t) = Ω₀ sech(β τ) with instantaneous frequency
//! ω(t) = ω₀ + μβ tanh(β τ), τ = t − arrival_time. The pulse inverts the
//! population over the bandwidth 2μβ when μ ≥ 1 and μβ² ≤ Ω₀²/4.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{us, to_us, AngularFrequency};

/// Which beam a pulse travels in. Sets the spatial phase e^{ik·x} it imprints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WavevectorTag {
    #[serde(rename = "SIGNAL", alias = "signal")]
    Signal,
    #[serde(rename = "REPHASE", alias = "rephase")]
    Rephase,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChsPulse {
    /// Centre of the frequency sweep, relative to line centre.
    pub omega0: AngularFrequency,
    pub rabi_peak: AngularFrequency,
    /// β; 1/β is the pulse duration.
    pub rate: AngularFrequency,
    pub chirp_factor: f64,
    pub arrival_time: f64,
    pub wavevector_tag: WavevectorTag,
}

/// One point of a pulse waveform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PulseSample {
    pub t: f64,
    pub rabi: f64,
    pub phase: f64,
    pub instantaneous_detuning: f64,
}

/// ln cosh x without overflow.
pub(crate) fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

impl ChsPulse {
    pub fn bandwidth(&self) -> AngularFrequency {
        AngularFrequency(2.0 * self.chirp_factor * self.rate.0)
    }

    fn tau(&self, t: f64) -> f64 {
        self.rate.0 * (t - self.arrival_time)
    }

    pub fn envelope(&self, t: f64) -> f64 {
        self.rabi_peak.0 / self.tau(t).cosh()
    }

    pub fn instantaneous_detuning(&self, t: f64) -> f64 {
        self.omega0.0 + self.chirp_factor * self.rate.0 * self.tau(t).tanh()
    }

    /// φ(t) = ω₀τ + μ ln cosh(βτ), with φ(arrival_time) = 0.
    pub fn phase(&self, t: f64) -> f64 {
        self.omega0.0 * (t - self.arrival_time) + self.chirp_factor * ln_cosh(self.tau(t))
    }

    /// Complex Rabi frequency Ω(t)·e^{−iφ(t)}.
    ///
    /// The sign makes an ion at detuning Δ resonant when ω(t) = Δ under the
    /// Bloch equations of [`crate::bloch`].
    pub fn complex_rabi(&self, t: f64) -> Complex64 {
        Complex64::from_polar(self.envelope(t), -self.phase(t))
    }

    pub fn sample(&self, t: f64) -> PulseSample {
        PulseSample {
            t,
            rabi: self.envelope(t),
            phase: self.phase(t),
            instantaneous_detuning: self.instantaneous_detuning(t),
        }
    }

    /// Analytic pulse area ∫Ω dt = πΩ₀/β.
    pub fn area(&self) -> f64 {
        PI * self.rabi_peak.0 / self.rate.0
    }

    /// Sequencing support half-width 2π/β; the envelope there is sech(2π) ≈ 3.7×10⁻³ Ω₀.
    pub fn support_half_width(&self) -> f64 {
        2.0 * PI / self.rate.0
    }

    pub fn support(&self) -> (f64, f64) {
        let h = self.support_half_width();
        (self.arrival_time - h, self.arrival_time + h)
    }

    /// μβ²/Ω₀².
    pub fn adiabaticity_ratio(&self) -> Result<f64> {
        let rabi = self.rabi_peak.0;
        if rabi == 0.0 {
            return Err(Error::domain("adiabaticity ratio undefined for Ω₀ = 0"));
        }
        Ok(self.chirp_factor * self.rate.0 * self.rate.0 / (rabi * rabi))
    }

    /// μ ≥ 1 and μβ²/Ω₀² ≤ 1/4 (with rounding slack).
    pub fn is_protocol_valid(&self) -> bool {
        self.chirp_factor >= 1.0 - 1e-12
            && self
                .adiabaticity_ratio()
                .map(|r| r <= 0.25 * (1.0 + 1e-12))
                .unwrap_or(false)
    }

    pub fn with_arrival(mut self, arrival_time: f64) -> Self {
        self.arrival_time = arrival_time;
        self
    }

    pub fn to_descriptor(&self) -> PulseDescriptor {
        PulseDescriptor {
            rabi_khz: self.rabi_peak.khz(),
            beta_khz: self.rate.khz(),
            mu: self.chirp_factor,
            center_detuning_khz: self.omega0.khz(),
            arrival_us: to_us(self.arrival_time),
            tag: self.wavevector_tag,
        }
    }

    /// Final population w after the full (untruncated) pulse for an ion at
    /// `detuning` starting in the ground state, from the closed-form sech/tanh
    /// transition probability
    /// P = [cosh πμ − cos(π√(a² − μ²))] / [cosh πμ + cosh πδ],
    /// with a = Ω₀/β and δ = (Δ − ω₀)/β.
    pub fn analytic_inversion(&self, detuning: f64) -> f64 {
        let b = self.rate.rad_per_s();
        let a = self.rabi_peak.rad_per_s() / b;
        let mu = self.chirp_factor;
        let delta = (detuning - self.omega0.rad_per_s()) / b;
        let disc = a * a - mu * mu;
        // everything scaled by e^{-m} to keep large μ finite
        let x_mu = PI * mu;
        let x_d = PI * delta.abs();
        let x_c = if disc < 0.0 { PI * (-disc).sqrt() } else { 0.0 };
        let m = x_mu.max(x_d).max(x_c);
        let cosh_s = |x: f64| 0.5 * ((x - m).exp() + (-x - m).exp());
        let c = if disc >= 0.0 {
            (PI * disc.sqrt()).cos() * (-m).exp()
        } else {
            cosh_s(x_c)
        };
        let p = (cosh_s(x_mu) - c) / (cosh_s(x_mu) + cosh_s(x_d));
        2.0 * p - 1.0
    }
}

/// Pick β and μ so the pulse covers `bandwidth` exactly at the adiabatic
/// working point μβ² = Ω₀²/4: β = Ω₀²/(2B), μ = B²/Ω₀².
pub fn design_pulse(
    bandwidth: AngularFrequency,
    rabi: AngularFrequency,
    center: AngularFrequency,
    arrival_time: f64,
    tag: WavevectorTag,
) -> Result<ChsPulse> {
    let b = bandwidth.0;
    let r = rabi.0;
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::domain(format!("bandwidth must be positive, got {b}")));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::domain(format!("Rabi frequency must be positive, got {r}")));
    }
    let mu = (b / r) * (b / r);
    if mu < 1.0 {
        return Err(Error::InvalidDesign { mu });
    }
    Ok(ChsPulse {
        omega0: center,
        rabi_peak: rabi,
        rate: AngularFrequency(r * r / (2.0 * b)),
        chirp_factor: mu,
        arrival_time,
        wavevector_tag: tag,
    })
}

/// JSON pulse descriptor; frequencies in ordinary kHz, times in µs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseDescriptor {
    pub rabi_khz: f64,
    pub beta_khz: f64,
    pub mu: f64,
    #[serde(default)]
    pub center_detuning_khz: f64,
    #[serde(default)]
    pub arrival_us: f64,
    #[serde(default = "default_tag")]
    pub tag: WavevectorTag,
}

fn default_tag() -> WavevectorTag {
    WavevectorTag::Rephase
}

impl PulseDescriptor {
    pub fn to_pulse(&self) -> Result<ChsPulse> {
        for (key, v) in [("rabi_khz", self.rabi_khz), ("beta_khz", self.beta_khz), ("mu", self.mu)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, format!("must be positive, got {v}")));
            }
        }
        Ok(ChsPulse {
            omega0: AngularFrequency::from_khz(self.center_detuning_khz),
            rabi_peak: AngularFrequency::from_khz(self.rabi_khz),
            rate: AngularFrequency::from_khz(self.beta_khz),
            chirp_factor: self.mu,
            arrival_time: us(self.arrival_us),
            wavevector_tag: self.tag,
        })
    }
}
