//! Analytic model of the two-rephasing-pulse echo scheme: timing rules,
//! efficiency versus storage time and bandwidth, and pulse-train capacity.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{to_us, us, AngularFrequency};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoseTiming {
    pub t12: f64,
    pub t23: f64,
    pub beta: AngularFrequency,
}

impl RoseTiming {
    /// Use explicit delays, checking the minimum-spacing rule.
    pub fn new(t12: f64, t23: f64, beta: AngularFrequency) -> Result<Self> {
        let b = beta.rad_per_s();
        if !(b > 0.0) {
            return Err(Error::domain("beta must be > 0"));
        }
        let tiny = 1e-12;
        if t12 < 4.0 * PI / b * (1.0 - tiny) || t23 < 8.0 * PI / b * (1.0 - tiny) {
            return Err(Error::Sequencing(format!(
                "delays t12 = {:.4} µs, t23 = {:.4} µs violate the minimum spacing 4π/β = {:.4} µs, 8π/β = {:.4} µs",
                to_us(t12),
                to_us(t23),
                to_us(4.0 * PI / b),
                to_us(8.0 * PI / b)
            )));
        }
        Ok(RoseTiming { t12, t23, beta })
    }

    pub fn echo_time(&self) -> f64 {
        2.0 * self.t23
    }

    pub fn silenced_echo_time(&self) -> f64 {
        2.0 * self.t12
    }
}

/// Shortest delays that keep signal and echoes clear of the rephasing pulses.
pub fn min_timing(beta: AngularFrequency) -> Result<RoseTiming> {
    let b = beta.rad_per_s();
    if !(b > 0.0) {
        return Err(Error::domain("beta must be > 0"));
    }
    Ok(RoseTiming {
        t12: 4.0 * PI / b,
        t23: 8.0 * PI / b,
        beta,
    })
}

/// (αL)² e^{−αL}.
pub fn eta0(alpha_l: f64) -> f64 {
    alpha_l * alpha_l * (-alpha_l).exp()
}

/// Zero-delay efficiency: from the optical depth or a measured value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Eta0 {
    Computed { alpha_l: f64 },
    Measured { eta0: f64 },
}

impl Eta0 {
    pub fn value(&self) -> f64 {
        match *self {
            Eta0::Computed { alpha_l } => eta0(alpha_l),
            Eta0::Measured { eta0 } => eta0,
        }
    }
}

/// η = (αL)² e^{−αL} e^{−4 t₂₃/T₂}.
pub fn efficiency_basic(alpha_l: f64, t23: f64, t2: f64) -> f64 {
    efficiency_from_eta0(eta0(alpha_l), t23, t2)
}

/// η = η₀ e^{−4 t₂₃/T₂}.
pub fn efficiency_from_eta0(eta0: f64, t23: f64, t2: f64) -> f64 {
    eta0 * (-4.0 * t23 / t2).exp()
}

/// t₂₃ at the design point μβ² = Ω₀²/4: 16πB/Ω₀².
pub fn min_storage_time(bandwidth: AngularFrequency, rabi: AngularFrequency) -> f64 {
    16.0 * PI * bandwidth.rad_per_s() / (rabi.rad_per_s() * rabi.rad_per_s())
}

/// η = η₀ exp(−64πB/(Ω₀² T₂)), minimum timing at the design point.
pub fn efficiency_bandwidth(eta0: f64, bandwidth: AngularFrequency, rabi: AngularFrequency, t2: f64) -> f64 {
    efficiency_from_eta0(eta0, min_storage_time(bandwidth, rabi), t2)
}

/// Number of pulses fitting in t₁₂ at minimum timing: 4B²/Ω₀².
///
/// This counts time slots only; efficiency still falls with B.
pub fn pulse_capacity(bandwidth: AngularFrequency, rabi: AngularFrequency) -> f64 {
    let r = bandwidth / rabi;
    4.0 * r * r
}

// ---------------------------------------------------------------------------
// `rose eval` scenario

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoseScenario {
    pub eta0: Eta0,
    pub rabi_khz: f64,
    pub t2_us: f64,
    pub bandwidths_khz: Vec<f64>,
    /// Explicit storage times. Empty means minimum timing for each bandwidth.
    #[serde(default)]
    pub t23_us: Vec<f64>,
}

impl RoseScenario {
    pub fn validate(&self) -> Result<()> {
        match self.eta0 {
            Eta0::Computed { alpha_l } if !(alpha_l > 0.0) => return Err(Error::config("eta0.computed.alpha_l", "must be > 0")),
            Eta0::Measured { eta0 } if !(eta0 > 0.0 && eta0 <= 1.0) => {
                return Err(Error::config("eta0.measured.eta0", "must lie in (0, 1]"))
            }
            _ => {}
        }
        if !(self.rabi_khz > 0.0) {
            return Err(Error::config("rabi_khz", "must be > 0"));
        }
        if !(self.t2_us > 0.0) {
            return Err(Error::config("t2_us", "must be > 0"));
        }
        if self.bandwidths_khz.is_empty() {
            return Err(Error::config("bandwidths_khz", "must not be empty"));
        }
        if let Some(i) = self.bandwidths_khz.iter().position(|&b| !(b >= self.rabi_khz)) {
            return Err(Error::config(
                format!("bandwidths_khz[{i}]"),
                format!("must be ≥ rabi_khz = {} (design point requires mu ≥ 1)", self.rabi_khz),
            ));
        }
        if let Some(i) = self.t23_us.iter().position(|&t| !(t > 0.0)) {
            return Err(Error::config(format!("t23_us[{i}]"), "must be > 0"));
        }
        Ok(())
    }

    pub fn evaluate(&self) -> Result<Vec<RoseRow>> {
        self.validate()?;
        let e0 = self.eta0.value();
        let rabi = AngularFrequency::from_khz(self.rabi_khz);
        let t2 = us(self.t2_us);
        let mut rows = Vec::new();
        for &b_khz in &self.bandwidths_khz {
            let b = AngularFrequency::from_khz(b_khz);
            let t_min = min_storage_time(b, rabi);
            let capacity = pulse_capacity(b, rabi);
            let delays: Vec<f64> = if self.t23_us.is_empty() {
                vec![t_min]
            } else {
                self.t23_us.iter().map(|&t| us(t)).collect()
            };
            for t23 in delays {
                rows.push(RoseRow {
                    b_khz,
                    t23_us: to_us(t23),
                    t23_min_us: to_us(t_min),
                    efficiency: efficiency_from_eta0(e0, t23, t2),
                    capacity,
                    below_minimum: t23 < t_min * (1.0 - 1e-12),
                });
            }
        }
        Ok(rows)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoseRow {
    pub b_khz: f64,
    pub t23_us: f64,
    pub t23_min_us: f64,
    pub efficiency: f64,
    pub capacity: f64,
    /// The requested delay is shorter than the overlap-free minimum.
    pub below_minimum: bool,
}

pub fn write_rose_csv<W: std::io::Write>(rows: &[RoseRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["b_khz", "t23_us", "t23_min_us", "efficiency", "capacity", "below_minimum"])?;
    for r in rows {
        out.write_record([
            format!("{}", r.b_khz),
            format!("{:.6}", r.t23_us),
            format!("{:.6}", r.t23_min_us),
            format!("{:.9e}", r.efficiency),
            format!("{:.6}", r.capacity),
            r.below_minimum.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
