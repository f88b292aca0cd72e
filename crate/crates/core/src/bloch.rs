//! Optical Bloch equations for a single two-level ion.
//!
//! ```text
//! du/dt =  Δ v − Ω_im w − u/T₂
//! dv/dt = −Δ u + Ω_re w − v/T₂
//! dw/dt =  Ω_im u − Ω_re v − (w + 1)/T₁
//! ```
//!
//! with complex Rabi frequency Ω_c = Ω_re + iΩ_im. A constant real resonant
//! drive of area π maps the ground state (0, 0, −1) to (0, 0, +1).

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chs::ChsPulse;
use crate::error::{Error, Result};
use crate::ode::{integrate, Stats, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochState {
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

impl BlochState {
    pub const GROUND: BlochState = BlochState { u: 0.0, v: 0.0, w: -1.0 };

    pub fn new(u: f64, v: f64, w: f64) -> Self {
        BlochState { u, v, w }
    }

    pub fn norm(&self) -> f64 {
        (self.u * self.u + self.v * self.v + self.w * self.w).sqrt()
    }

    /// Optical coherence u + iv.
    pub fn coherence(&self) -> Complex64 {
        Complex64::new(self.u, self.v)
    }

    fn to_array(self) -> [f64; 3] {
        [self.u, self.v, self.w]
    }

    fn from_array(a: [f64; 3]) -> Self {
        BlochState { u: a[0], v: a[1], w: a[2] }
    }
}

/// Population and coherence lifetimes; `None` disables the process.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Decay {
    pub t1: Option<f64>,
    pub t2: Option<f64>,
}

impl Decay {
    pub const NONE: Decay = Decay { t1: None, t2: None };

    pub fn t2_only(t2: f64) -> Self {
        Decay { t1: None, t2: Some(t2) }
    }

    fn rates(&self) -> (f64, f64) {
        (self.t1.map_or(0.0, |t| 1.0 / t), self.t2.map_or(0.0, |t| 1.0 / t))
    }

    /// Exact free evolution over `tau`: coherence rotates at −Δ and decays.
    pub fn free_evolve(&self, state: BlochState, detuning: f64, tau: f64) -> BlochState {
        let (g1, g2) = self.rates();
        let s = state.coherence() * Complex64::from_polar((-g2 * tau).exp(), -detuning * tau);
        let w = -1.0 + (state.w + 1.0) * (-g1 * tau).exp();
        BlochState { u: s.re, v: s.im, w }
    }
}

/// A time-dependent complex Rabi frequency Ω_c(t).
pub trait Drive: Sync {
    fn rabi(&self, t: f64) -> Complex64;
}

impl<F: Fn(f64) -> Complex64 + Sync> Drive for F {
    fn rabi(&self, t: f64) -> Complex64 {
        self(t)
    }
}

impl Drive for ChsPulse {
    fn rabi(&self, t: f64) -> Complex64 {
        self.complex_rabi(t)
    }
}

/// No field.
pub struct Undriven;

impl Drive for Undriven {
    fn rabi(&self, _t: f64) -> Complex64 {
        Complex64::new(0.0, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<BlochState>,
    pub final_state: BlochState,
    pub stats: Stats,
}

impl Trajectory {
    /// max |‖B‖ − 1| over the samples and the final state.
    pub fn max_norm_deviation(&self) -> f64 {
        self.states
            .iter()
            .chain(std::iter::once(&self.final_state))
            .map(|s| (s.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

#[inline]
pub(crate) fn bloch_rhs(y: &[f64; 3], rabi: Complex64, detuning: f64, g1: f64, g2: f64) -> [f64; 3] {
    let [u, v, w] = *y;
    [
        detuning * v - rabi.im * w - g2 * u,
        -detuning * u + rabi.re * w - g2 * v,
        rabi.im * u - rabi.re * v - g1 * (w + 1.0),
    ]
}

/// Integrate one ion from `span.0` to `span.1`, reporting the state at each of
/// `sample_times` (sorted, inside the span).
pub fn propagate<D: Drive + ?Sized>(
    state: BlochState,
    drive: &D,
    detuning: f64,
    span: (f64, f64),
    decay: Decay,
    tol: &Tolerance,
    sample_times: &[f64],
) -> Result<Trajectory> {
    let (t0, t1) = span;
    if !(t1 > t0) {
        return Err(Error::domain(format!("propagation span must satisfy t1 > t0 (got {t0:e}, {t1:e})")));
    }
    if sample_times.iter().any(|&t| t < t0 || t > t1) {
        return Err(Error::domain("sample times must lie inside the propagation span"));
    }
    let (g1, g2) = decay.rates();
    let mut states = vec![state; sample_times.len()];
    let (y, stats) = integrate(
        |t, y: &[f64; 3]| bloch_rhs(y, drive.rabi(t), detuning, g1, g2),
        t0,
        state.to_array(),
        t1,
        tol,
        sample_times,
        |i, s| states[i] = BlochState::from_array(s),
    )?;
    Ok(Trajectory {
        times: sample_times.to_vec(),
        states,
        final_state: BlochState::from_array(y),
        stats,
    })
}

/// Final state only.
pub fn propagate_final<D: Drive + ?Sized>(
    state: BlochState,
    drive: &D,
    detuning: f64,
    span: (f64, f64),
    decay: Decay,
    tol: &Tolerance,
) -> Result<BlochState> {
    Ok(propagate(state, drive, detuning, span, decay, tol, &[])?.final_state)
}

/// Half-width of the window used for inversion profiles: wide enough that the
/// envelope has fallen to 10⁻⁶ Ω₀ at both ends.
pub fn profile_half_width(p: &ChsPulse) -> f64 {
    let decayed = 1e6f64.acosh() / p.rate.rad_per_s();
    decayed.max(p.support_half_width())
}

/// Final population w(Δ) after a CHS pulse, starting from the ground state,
/// for each detuning (rad/s, relative to line centre).
pub fn inversion_profile(p: &ChsPulse, detunings: &[f64], tol: &Tolerance) -> Result<Vec<f64>> {
    if !p.is_protocol_valid() {
        return Err(Error::domain(format!(
            "pulse is not protocol-valid (mu = {:.4}, adiabaticity = {:.4})",
            p.chirp_factor,
            p.adiabaticity_ratio().unwrap_or(f64::NAN)
        )));
    }
    let h = profile_half_width(p);
    let span = (p.arrival_time - h, p.arrival_time + h);
    detunings
        .par_iter()
        .map(|&d| propagate_final(BlochState::GROUND, p, d, span, Decay::NONE, tol).map(|s| s.w))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chs::{design_pulse, WavevectorTag};
    use crate::units::AngularFrequency;
    use std::f64::consts::PI;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    #[test]
    fn free_precession_rotates_at_minus_detuning() {
        let d = 2.0 * PI * 1e5;
        let s0 = BlochState::new(1.0, 0.0, 0.0);
        let times: Vec<f64> = (1..=50).map(|k| k as f64 * 1e-7).collect();
        let tr = propagate(s0, &Undriven, d, (0.0, 5e-6), Decay::NONE, &tol(), &times).unwrap();
        for (t, s) in tr.times.iter().zip(&tr.states) {
            let expect = Complex64::from_polar(1.0, -d * t);
            assert!((s.coherence() - expect).norm() < 1e-7, "t={t}");
            assert_eq!(s.w, 0.0);
        }
        assert!(tr.max_norm_deviation() < 1e-9);
    }

    #[test]
    fn resonant_pi_and_half_pi() {
        let rabi = 2.0 * PI * 1e6;
        let drive = |_t: f64| Complex64::new(rabi, 0.0);
        let pi = propagate_final(BlochState::GROUND, &drive, 0.0, (0.0, PI / rabi), Decay::NONE, &tol()).unwrap();
        assert!((pi.w - 1.0).abs() < 1e-8 && pi.u.abs() < 1e-8 && pi.v.abs() < 1e-8);
        let half =
            propagate_final(BlochState::GROUND, &drive, 0.0, (0.0, 0.5 * PI / rabi), Decay::NONE, &tol()).unwrap();
        assert!(half.u.abs() < 1e-8 && (half.v + 1.0).abs() < 1e-8 && half.w.abs() < 1e-8);
    }

    #[test]
    fn coherence_decay_matches_t2() {
        let t2 = 20e-6;
        let s0 = BlochState::new(0.6, 0.8, 0.0);
        let times: Vec<f64> = (1..=10).map(|k| k as f64 * 4e-6).collect();
        let tr = propagate(s0, &Undriven, 2.0 * PI * 3e5, (0.0, 40e-6), Decay::t2_only(t2), &tol(), &times).unwrap();
        for (t, s) in tr.times.iter().zip(&tr.states) {
            let expect = (-t / t2).exp();
            assert!((s.coherence().norm() / expect - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn free_evolve_agrees_with_integrator() {
        let decay = Decay { t1: Some(30e-6), t2: Some(12e-6) };
        let s0 = BlochState::new(0.3, -0.4, 0.2);
        let d = 2.0 * PI * 2.3e5;
        let num = propagate_final(s0, &Undriven, d, (0.0, 7e-6), decay, &Tolerance::with_rtol(1e-11)).unwrap();
        let ana = decay.free_evolve(s0, d, 7e-6);
        assert!((num.u - ana.u).abs() < 1e-9);
        assert!((num.v - ana.v).abs() < 1e-9);
        assert!((num.w - ana.w).abs() < 1e-9);
    }

    #[test]
    fn chs_drive_norm_conservation() {
        let p = design_pulse(
            AngularFrequency::from_khz(800.0),
            AngularFrequency::from_khz(800.0),
            AngularFrequency::ZERO,
            0.0,
            WavevectorTag::Rephase,
        )
        .unwrap();
        let (a, b) = p.support();
        let times: Vec<f64> = (0..=200).map(|k| a + (b - a) * k as f64 / 200.0).collect();
        for d_khz in [-2400.0, -500.0, 0.0, 300.0, 1600.0] {
            let tr = propagate(
                BlochState::GROUND,
                &p,
                AngularFrequency::from_khz(d_khz).rad_per_s(),
                (a, b),
                Decay::NONE,
                &tol(),
                &times,
            )
            .unwrap();
            assert!(tr.max_norm_deviation() < 1e-8, "Δ={d_khz} kHz: {}", tr.max_norm_deviation());
        }
    }

    fn design(bw_khz: f64) -> ChsPulse {
        design_pulse(
            AngularFrequency::from_khz(bw_khz),
            AngularFrequency::from_khz(800.0),
            AngularFrequency::ZERO,
            0.0,
            WavevectorTag::Rephase,
        )
        .unwrap()
    }

    #[test]
    fn inversion_matches_closed_form() {
        for bw in [800.0, 1600.0, 3200.0, 7100.0] {
            let p = design(bw);
            let mb = p.chirp_factor * p.rate.rad_per_s();
            let d: Vec<f64> = [-2.0, -0.9, 0.0, 0.3, 0.8, 1.0, 1.2, 2.5].iter().map(|f| f * mb).collect();
            let w = inversion_profile(&p, &d, &tol()).unwrap();
            for (wi, di) in w.iter().zip(&d) {
                let exact = p.analytic_inversion(*di);
                assert!((wi - exact).abs() < 1e-5, "B={bw} kHz Δ={di:e}: {wi} vs {exact}");
            }
        }
    }

    #[test]
    fn unit_mu_design_point_values() {
        let p = design(800.0);
        let b = p.rate.rad_per_s();
        let w = inversion_profile(&p, &[0.0, 2.0 * b], &tol()).unwrap();
        assert!((w[0] - 0.735_366).abs() < 1e-5);
        assert!(w[1] < -0.9 && (w[1] + 0.921_774).abs() < 1e-5);
        // ten times the Rabi frequency does not complete the passage at μ = 1
        let mut strong = p;
        strong.rabi_peak = p.rabi_peak * 10.0;
        let w = inversion_profile(&strong, &[0.0], &tol()).unwrap();
        // the 10⁻⁶ envelope cut-off leaves a larger residual area at 10 Ω₀
        assert!((w[0] - 0.682_827).abs() < 5e-5);
        assert!((strong.analytic_inversion(0.0) - 0.682_827).abs() < 1e-6);
    }

    #[test]
    fn wide_designs_are_top_hat() {
        for (bw, floor) in [(3200.0, 0.997_535), (7100.0, 0.996_558)] {
            let p = design(bw);
            let mb = p.chirp_factor * p.rate.rad_per_s();
            let inside: Vec<f64> = (-8..=8).map(|k| 0.1 * k as f64 * mb).collect();
            let outside: Vec<f64> = [-3.0, -1.2, 1.2, 3.0].iter().map(|f| f * mb).collect();
            let wi = inversion_profile(&p, &inside, &tol()).unwrap();
            let wo = inversion_profile(&p, &outside, &tol()).unwrap();
            assert!(wi.iter().all(|&w| w >= floor - 1e-4), "{bw}: {wi:?}");
            assert!(wo.iter().all(|&w| w <= -0.999), "{bw}: {wo:?}");
        }
    }

    #[test]
    fn invalid_span_rejected() {
        assert!(propagate(BlochState::GROUND, &Undriven, 0.0, (1.0, 1.0), Decay::NONE, &tol(), &[]).is_err());
        assert!(propagate(BlochState::GROUND, &Undriven, 0.0, (0.0, 1.0), Decay::NONE, &tol(), &[2.0]).is_err());
    }

    #[test]
    fn inversion_requires_valid_pulse() {
        let mut p = design_pulse(
            AngularFrequency::from_khz(800.0),
            AngularFrequency::from_khz(800.0),
            AngularFrequency::ZERO,
            0.0,
            WavevectorTag::Rephase,
        )
        .unwrap();
        p.rate = p.rabi_peak;
        assert!(inversion_profile(&p, &[0.0], &tol()).is_err());
    }
}
