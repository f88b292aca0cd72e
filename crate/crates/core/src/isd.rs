//! Instantaneous spectral diffusion: bandwidth-dependent coherence, the
//! resulting efficiency, and the dipolar estimate of κ from coupling constants.

use std::f64::consts::PI;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::material::{convert_kappa_to_per_ion_density, MaterialParams};
use crate::perf_map::effective_moment_difference;
use crate::units::constants::{EPSILON_0, HBAR, MU_0, PLANCK};
use crate::units::{AngularFrequency, IsdCoefficient};

/// T₂(B) = 1 / (1/T₂⁰ + κ B/2π).
pub fn t2_of_bandwidth(t2_zero: f64, kappa: IsdCoefficient, bandwidth: AngularFrequency) -> f64 {
    1.0 / (1.0 / t2_zero + kappa.dephasing_rate(bandwidth))
}

/// ln η = ln η₀ − (64π/Ω₀²) B (1/T₂⁰ + κ B/2π).
pub fn efficiency_with_isd(
    eta0: f64,
    bandwidth: AngularFrequency,
    rabi: AngularFrequency,
    t2_zero: f64,
    kappa: IsdCoefficient,
) -> f64 {
    let b = bandwidth.rad_per_s();
    let r = rabi.rad_per_s();
    eta0 * (-64.0 * PI / (r * r) * b * (1.0 / t2_zero + kappa.dephasing_rate(bandwidth))).exp()
}

/// Same model anchored on a coherence time measured at `b_ref`:
/// ln η = ln η₀ − (64π/Ω₀²) B (1/T₂(B_ref) + κ (B − B_ref)/2π).
pub fn efficiency_with_isd_calibrated(
    eta0: f64,
    bandwidth: AngularFrequency,
    rabi: AngularFrequency,
    t2_at_ref: f64,
    b_ref: AngularFrequency,
    kappa: IsdCoefficient,
) -> f64 {
    let b = bandwidth.rad_per_s();
    let r = rabi.rad_per_s();
    let rate = 1.0 / t2_at_ref + kappa.dephasing_rate(bandwidth - b_ref);
    eta0 * (-64.0 * PI / (r * r) * b * rate).exp()
}

/// T₂⁰ implied by a coherence time at `b_ref` and κ.
pub fn t2_zero_from_reference(t2_at_ref: f64, b_ref: AngularFrequency, kappa: IsdCoefficient) -> f64 {
    1.0 / (1.0 / t2_at_ref - kappa.dephasing_rate(b_ref))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CouplingKind {
    Magnetic,
    Electric,
    Combined,
}

/// Dipole-dipole coupling constant A, m³·rad·s⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipoleCoupling {
    pub a: f64,
    pub kind: CouplingKind,
}

impl DipoleCoupling {
    pub fn new(a: f64, kind: CouplingKind) -> Result<Self> {
        if !(a >= 0.0) || !a.is_finite() {
            return Err(Error::domain(format!("coupling constant must be finite and ≥ 0 (got {a:e})")));
        }
        Ok(DipoleCoupling { a, kind })
    }

    /// Couplings add; cross terms are not modelled.
    pub fn combine(self, other: DipoleCoupling) -> DipoleCoupling {
        DipoleCoupling {
            a: self.a + other.a,
            kind: if self.kind == other.kind { self.kind } else { CouplingKind::Combined },
        }
    }
}

/// FWHM broadening (16π²/(9√3)) A n_e from randomly placed excited dipoles.
pub fn stoneham_broadening(coupling: DipoleCoupling, n_e: f64) -> Result<AngularFrequency> {
    if !(n_e >= 0.0) {
        return Err(Error::domain(format!("excited density must be ≥ 0 (got {n_e:e})")));
    }
    Ok(AngularFrequency::from_rad_per_s(16.0 * PI * PI / (9.0 * 3f64.sqrt()) * coupling.a * n_e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lineshape {
    /// Lorentzian peak height times B.
    #[default]
    LineCentre,
    /// Lorentzian integrated over [−B/2, B/2].
    ExactLorentzian,
}

/// Density of ions excited by a pulse of bandwidth B, m⁻³.
///
/// The line-centre form is accurate for B ≪ Γ_inh; a warning is logged above
/// Γ_inh/3 and B > Γ_inh is rejected.
pub fn excited_density(m: &MaterialParams, bandwidth: AngularFrequency, shape: Lineshape) -> Result<f64> {
    let b = bandwidth.rad_per_s();
    let g = m.gamma_inh.rad_per_s();
    if !(b >= 0.0) {
        return Err(Error::domain("bandwidth must be ≥ 0"));
    }
    if b > g {
        return Err(Error::domain(format!(
            "bandwidth {:.4} MHz exceeds the inhomogeneous linewidth {:.4} MHz",
            bandwidth.mhz(),
            m.gamma_inh.mhz()
        )));
    }
    if b > g / 3.0 && shape == Lineshape::LineCentre {
        warn!(
            "bandwidth {:.4} MHz is above Γ_inh/3; the line-centre density overestimates excitation",
            bandwidth.mhz()
        );
    }
    let base = m.n_y * m.concentration;
    Ok(match shape {
        Lineshape::LineCentre => base * 2.0 / (PI * g) * b,
        Lineshape::ExactLorentzian => base * 2.0 / PI * (b / g).atan(),
    })
}

/// κ from the dipolar broadening: (8π³/(9√3)) A n_Y C 2/(π Γ_inh).
pub fn kappa_micro(total: DipoleCoupling, m: &MaterialParams) -> Result<IsdCoefficient> {
    let g = m.gamma_inh.rad_per_s();
    if !(g > 0.0 && m.n_y > 0.0 && m.concentration > 0.0) {
        return Err(Error::domain("material needs positive Γ_inh, n_Y and concentration"));
    }
    let k = 8.0 * PI.powi(3) / (9.0 * 3f64.sqrt()) * total.a * m.n_y * m.concentration * 2.0 / (PI * g);
    Ok(IsdCoefficient::from_per_s_per_hz(k))
}

/// A = (μ₀ħ/4π)|Δμ_mag|², with Δμ_mag in rad·s⁻¹·T⁻¹.
pub fn coupling_magnetic(delta_mu_mag: f64) -> DipoleCoupling {
    DipoleCoupling {
        a: MU_0 * HBAR / (4.0 * PI) * delta_mu_mag * delta_mu_mag,
        kind: CouplingKind::Magnetic,
    }
}

/// A = |Δμ_el|²/(4π ε_r ε₀ ħ), with Δμ_el in C·m.
pub fn coupling_electric(delta_mu_el: f64, epsilon_r: f64) -> Result<DipoleCoupling> {
    if !(epsilon_r >= 1.0) {
        return Err(Error::domain(format!("relative permittivity must be ≥ 1 (got {epsilon_r})")));
    }
    Ok(DipoleCoupling {
        a: delta_mu_el * delta_mu_el / (4.0 * PI * epsilon_r * EPSILON_0 * HBAR),
        kind: CouplingKind::Electric,
    })
}

/// Dipole-moment difference h·s from a linear Stark coefficient s given in
/// Hz per (V/cm).
pub fn stark_to_dipole(shift_hz_per_v_cm: f64) -> Result<f64> {
    if !(shift_hz_per_v_cm >= 0.0) {
        return Err(Error::domain("Stark coefficient must be ≥ 0"));
    }
    Ok(PLANCK * shift_hz_per_v_cm / 100.0)
}

// ---------------------------------------------------------------------------
// `isd estimate`

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentSource {
    Table,
    GTensors,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaTerm {
    pub coupling_m3_rad_per_s: f64,
    pub kappa_per_s_per_khz: f64,
    pub hz_per_ion_per_cm3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsdEstimate {
    pub theta_deg: f64,
    pub delta_mu_mag_rad_per_s_per_t: f64,
    pub delta_mu_mag_source: MomentSource,
    pub delta_mu_el_c_m: f64,
    pub magnetic: KappaTerm,
    pub electric: KappaTerm,
    pub total: KappaTerm,
    pub per_ion_convention: &'static str,
}

/// Microscopic κ decomposition at field angle Θ. Zeeman moments come from the
/// g tensors when the material supplies both, else from its Δμ table.
pub fn estimate_isd(m: &MaterialParams, theta_deg: f64) -> Result<IsdEstimate> {
    let (dmu, source) = match (&m.g_ground, &m.g_excited) {
        (Some(g), Some(e)) => (effective_moment_difference(g, e, theta_deg)?, MomentSource::GTensors),
        _ => (m.delta_mu_mag_table.interpolate(theta_deg)?, MomentSource::Table),
    };
    // stored in Hz per (V/m)
    let dmu_el = stark_to_dipole(m.stark_shift * 100.0)?;
    let mag = coupling_magnetic(dmu);
    let el = coupling_electric(dmu_el, m.epsilon_r)?;
    let term = |c: DipoleCoupling| -> Result<KappaTerm> {
        let k = kappa_micro(c, m)?;
        Ok(KappaTerm {
            coupling_m3_rad_per_s: c.a,
            kappa_per_s_per_khz: k.per_s_per_khz(),
            hz_per_ion_per_cm3: convert_kappa_to_per_ion_density(k, m)?.hz_per_ion_per_cm3,
        })
    };
    Ok(IsdEstimate {
        theta_deg,
        delta_mu_mag_rad_per_s_per_t: dmu,
        delta_mu_mag_source: source,
        delta_mu_el_c_m: dmu_el,
        magnetic: term(mag)?,
        electric: term(el)?,
        total: term(mag.combine(el))?,
        per_ion_convention: crate::material::PER_ION_CONVENTION,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{per_m3_to_per_cm3, us};
    use proptest::prelude::*;

    fn kappa(k: f64) -> IsdCoefficient {
        IsdCoefficient::from_per_s_per_khz(k)
    }

    #[test]
    fn coherence_table() {
        let k = kappa(0.8);
        let t = |mhz: f64| t2_of_bandwidth(151e-6, k, AngularFrequency::from_mhz(mhz)) * 1e6;
        // 1/(1/151 µs + 800 s⁻¹·MHz⁻¹·B)
        let oracle = |mhz: f64| 1.0 / (1.0 / 151.0 + 800.0 * mhz * 1e-6);
        for b in [0.0, 0.8, 5.0, 10.0] {
            assert!((t(b) / oracle(b) - 1.0).abs() < 1e-12);
        }
        assert!((t(0.8) - 137.69).abs() < 0.01);
        assert!((t(5.0) - 94.143).abs() < 0.01);
        assert!((t(10.0) - 68.39).abs() < 0.01);
        assert_eq!(t2_of_bandwidth(151e-6, IsdCoefficient::ZERO, AngularFrequency::from_mhz(5.0)), 151e-6);
    }

    #[test]
    fn isd_efficiency_reductions() {
        let rabi = AngularFrequency::from_khz(800.0);
        let b = AngularFrequency::from_mhz(3.0);
        let plain = crate::rose::efficiency_bandwidth(0.34, b, rabi, 151e-6);
        assert!((efficiency_with_isd(0.34, b, rabi, 151e-6, IsdCoefficient::ZERO) / plain - 1.0).abs() < 1e-14);
        // at the reference bandwidth the calibrated model uses T₂(B_ref) directly
        let b_ref = AngularFrequency::from_khz(800.0);
        let cal = efficiency_with_isd_calibrated(0.34, b_ref, rabi, 138e-6, b_ref, kappa(0.8));
        let direct = crate::rose::efficiency_bandwidth(0.34, b_ref, rabi, 138e-6);
        assert!((cal / direct - 1.0).abs() < 1e-14);
        // calibrated ≡ uncalibrated with the implied T₂⁰
        let t20 = t2_zero_from_reference(138e-6, b_ref, kappa(0.8));
        assert!((t20 * 1e6 - 151.37).abs() < 0.01);
        for mhz in [0.8, 2.0, 4.5, 7.1] {
            let b = AngularFrequency::from_mhz(mhz);
            let x = efficiency_with_isd_calibrated(0.34, b, rabi, 138e-6, b_ref, kappa(0.8));
            let y = efficiency_with_isd(0.34, b, rabi, t20, kappa(0.8));
            assert!((x / y - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn high_coherence_spot_values() {
        let rabi = AngularFrequency::from_khz(800.0);
        let b = AngularFrequency::from_mhz(10.0);
        let with = efficiency_with_isd(0.34, b, rabi, 800e-6, kappa(0.8));
        let without = efficiency_with_isd(0.34, b, rabi, 800e-6, IsdCoefficient::ZERO);
        // t23 = 125 µs: 0.34 exp(−500 µs·(1250 + 8000) s⁻¹) and 0.34 exp(−0.625)
        assert!((with / (0.34 * (-4.625f64).exp()) - 1.0).abs() < 1e-12);
        assert!((without / (0.34 * (-0.625f64).exp()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn microscopic_chain() {
        let m = MaterialParams::er_yso();
        let b = AngularFrequency::from_mhz(7.1);
        let ne = excited_density(&m, b, Lineshape::LineCentre).unwrap();
        assert!((per_m3_to_per_cm3(ne) / 3.2817e15 - 1.0).abs() < 1e-3);
        let mag = DipoleCoupling::new(2.8e-19, CouplingKind::Magnetic).unwrap();
        let dw = stoneham_broadening(mag, ne).unwrap();
        // 16π²/(9√3) · 2.8e-19 · 3.2817e21
        assert!((dw.rad_per_s() / 9303.0 - 1.0).abs() < 1e-3);
        let k = kappa_micro(mag, &m).unwrap();
        assert!((k.per_s_per_khz() - 0.3278).abs() < 5e-4);
        // κ = Δω / (4 B/2π)
        assert!((k.per_s_per_hz() / (dw.rad_per_s() / (4.0 * b.hz())) - 1.0).abs() < 1e-12);
        let both = DipoleCoupling::new(8.6e-19, CouplingKind::Combined).unwrap();
        assert!((kappa_micro(both, &m).unwrap().per_s_per_khz() - 1.0069).abs() < 5e-4);
        assert_eq!(stoneham_broadening(mag, 0.0).unwrap(), AngularFrequency::ZERO);
        assert!(stoneham_broadening(mag, -1.0).is_err());
    }

    #[test]
    fn excited_density_limits() {
        let m = MaterialParams::er_yso();
        assert_eq!(excited_density(&m, AngularFrequency::ZERO, Lineshape::LineCentre).unwrap(), 0.0);
        assert!(excited_density(&m, AngularFrequency::from_mhz(700.0), Lineshape::LineCentre).is_err());
        // exact form approaches line centre for B ≪ Γ and saturates below it
        let small = AngularFrequency::from_mhz(1.0);
        let a = excited_density(&m, small, Lineshape::LineCentre).unwrap();
        let e = excited_density(&m, small, Lineshape::ExactLorentzian).unwrap();
        assert!((e / a - 1.0).abs() < 1e-5);
        let big = AngularFrequency::from_mhz(600.0);
        assert!(
            excited_density(&m, big, Lineshape::ExactLorentzian).unwrap()
                < excited_density(&m, big, Lineshape::LineCentre).unwrap()
        );
    }

    #[test]
    fn couplings() {
        let dmu = stark_to_dipole(25e3).unwrap();
        assert!((dmu / (6.62607015e-34 * 250.0) - 1.0).abs() < 1e-14);
        assert!((dmu / 1.6565e-31 - 1.0).abs() < 1e-4);
        assert!((stark_to_dipole(100e3).unwrap() / 6.626e-31 - 1.0).abs() < 1e-4);
        let el = coupling_electric(1.65e-31, 4.0).unwrap();
        assert!((el.a / 5.800e-19 - 1.0).abs() < 2e-3);
        assert!((coupling_electric(1.65e-31, 8.0).unwrap().a / el.a - 0.5).abs() < 1e-14);
        assert!(coupling_electric(1e-31, 0.5).is_err());
        let mag = coupling_magnetic(crate::material::er_yso_delta_mu_mag());
        assert!((mag.a / 2.8e-19 - 1.0).abs() < 1e-12);
        assert_eq!(coupling_magnetic(0.0).a, 0.0);
        assert!((coupling_magnetic(2.0).a / coupling_magnetic(1.0).a - 4.0).abs() < 1e-14);
        assert!(DipoleCoupling::new(-1.0, CouplingKind::Electric).is_err());
        assert_eq!(mag.combine(el).kind, CouplingKind::Combined);
    }

    #[test]
    fn estimate_decomposition() {
        let m = MaterialParams::er_yso();
        let e = estimate_isd(&m, 135.0).unwrap();
        assert_eq!(e.delta_mu_mag_source, MomentSource::Table);
        assert!((e.magnetic.kappa_per_s_per_khz - 0.3278).abs() < 5e-4);
        assert!((e.total.coupling_m3_rad_per_s - e.magnetic.coupling_m3_rad_per_s - e.electric.coupling_m3_rad_per_s).abs() < 1e-30);
        assert!(
            (e.total.kappa_per_s_per_khz - e.magnetic.kappa_per_s_per_khz - e.electric.kappa_per_s_per_khz).abs() < 1e-12
        );
        let mut g = m.clone();
        g.g_ground = Some([[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]]);
        g.g_excited = Some([[4.0, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 4.0]]);
        let e = estimate_isd(&g, 10.0).unwrap();
        assert_eq!(e.delta_mu_mag_source, MomentSource::GTensors);
        assert!((e.delta_mu_mag_rad_per_s_per_t / 8.794e10 - 1.0).abs() < 1e-3);
        assert!(estimate_isd(&m, 200.0).is_err());
    }

    proptest! {
        #[test]
        fn chain_holds_for_any_bandwidth(a in 1e-21f64..1e-17, mhz in 0.01f64..200.0) {
            let m = MaterialParams::er_yso();
            let b = AngularFrequency::from_mhz(mhz);
            let c = DipoleCoupling::new(a, CouplingKind::Combined).unwrap();
            let dw = stoneham_broadening(c, excited_density(&m, b, Lineshape::LineCentre).unwrap()).unwrap();
            let k = kappa_micro(c, &m).unwrap();
            prop_assert!((k.per_s_per_hz() / (dw.rad_per_s() / (4.0 * b.hz())) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn ln_eta_quadratic(t20 in 50f64..2000.0, k in 0.0f64..3.0, b0 in 0.8f64..5.0, h in 0.05f64..1.0) {
            let rabi = AngularFrequency::from_khz(800.0);
            let f = |mhz: f64| efficiency_with_isd(0.34, AngularFrequency::from_mhz(mhz), rabi, us(t20), kappa(k)).ln();
            let d3 = f(b0 + 3.0 * h) - 3.0 * f(b0 + 2.0 * h) + 3.0 * f(b0 + h) - f(b0);
            let scale = f(b0 + 3.0 * h).abs().max(1.0);
            prop_assert!(d3.abs() < 1e-11 * scale);
        }

        #[test]
        fn t2_decreasing(t20 in 10f64..2000.0, k in 0.01f64..3.0, mhz in 0.0f64..50.0, f in 1.01f64..4.0) {
            let b = AngularFrequency::from_mhz(mhz + 0.01);
            let base = t2_of_bandwidth(us(t20), kappa(k), b);
            prop_assert!(t2_of_bandwidth(us(t20), kappa(k), b * f) < base);
            prop_assert!(t2_of_bandwidth(us(t20), kappa(k * f), b) < base);
        }
    }
}
