//! Reference anchors: closed-form and cheap numerical checks against published
//! values, reported as a deterministic pass/fail table.

use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use crate::bloch::inversion_profile;
use crate::chs::{design_pulse, WavevectorTag};
use crate::error::Result;
use crate::fitting::{generate_synthetic, linspace, monte_carlo_coverage, IsdNuisance, SyntheticModel};
use crate::isd::{
    coupling_electric, efficiency_with_isd, kappa_micro, t2_of_bandwidth, t2_zero_from_reference, CouplingKind,
    DipoleCoupling,
};
use crate::material::{convert_kappa_to_per_ion_density, MaterialParams};
use crate::ode::Tolerance;
use crate::perf_map::{performance_map, AngleScan, KappaCalibration};
use crate::rose::{efficiency_from_eta0, eta0, min_timing};
use crate::units::{to_us, AngularFrequency, IsdCoefficient};

/// Monte-Carlo seeds per fit model.
pub const MC_SEEDS: usize = 1000;
/// Minimum fraction of seeds whose estimate lies within 3 standard errors.
pub const MC_COVERAGE: f64 = 0.97;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Anchor {
    /// Acceptance criterion the anchor belongs to.
    pub criterion: u8,
    pub id: String,
    pub quantity: String,
    pub value: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub kind: TolKind,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TolKind {
    /// |value − expected| ≤ tolerance.
    Absolute,
    /// |value/expected − 1| ≤ tolerance.
    Relative,
    /// value ≥ expected − tolerance.
    AtLeast,
    /// value ≤ expected + tolerance.
    AtMost,
    /// expected/(1+tol) ≤ value ≤ expected·(1+tol), a ratio band.
    Factor,
}

impl TolKind {
    fn check(self, value: f64, expected: f64, tol: f64) -> bool {
        match self {
            TolKind::Absolute => (value - expected).abs() <= tol,
            TolKind::Relative => (value / expected - 1.0).abs() <= tol,
            TolKind::AtLeast => value >= expected - tol,
            TolKind::AtMost => value <= expected + tol,
            TolKind::Factor => value >= expected / (1.0 + tol) && value <= expected * (1.0 + tol),
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            TolKind::Absolute => "abs",
            TolKind::Relative => "rel",
            TolKind::AtLeast => ">=",
            TolKind::AtMost => "<=",
            TolKind::Factor => "factor",
        }
    }
}

struct Suite(Vec<Anchor>);

impl Suite {
    #[allow(clippy::too_many_arguments)]
    fn push(&mut self, criterion: u8, id: impl Into<String>, quantity: impl Into<String>, value: f64, expected: f64, tolerance: f64, kind: TolKind) {
        self.0.push(Anchor {
            criterion,
            id: id.into(),
            quantity: quantity.into(),
            value,
            expected,
            tolerance,
            kind,
            pass: kind.check(value, expected, tolerance),
        });
    }
}

fn khz(v: f64) -> AngularFrequency {
    AngularFrequency::from_khz(v)
}

fn kappa(v: f64) -> IsdCoefficient {
    IsdCoefficient::from_per_s_per_khz(v)
}

/// Evaluate every anchor. The output depends on nothing but the code.
pub fn run_anchors() -> Result<Vec<Anchor>> {
    let mut s = Suite(Vec::new());
    let rabi = khz(800.0);

    // pulse design at 800 kHz
    let p = design_pulse(khz(800.0), rabi, AngularFrequency::ZERO, 0.0, WavevectorTag::Rephase)?;
    let timing = min_timing(p.rate)?;
    s.push(1, "1.mu", "chirp factor mu", p.chirp_factor, 1.0, 1e-12, TolKind::Relative);
    s.push(1, "1.beta", "beta/2pi (kHz)", p.rate.khz(), 400.0, 1e-12, TolKind::Relative);
    s.push(1, "1.t23", "t23 min (us)", to_us(timing.t23), 10.0, 1e-12, TolKind::Relative);
    s.push(1, "1.t12", "t12 min (us)", to_us(timing.t12), 5.0, 1e-12, TolKind::Relative);

    // efficiency formulas
    let e0 = eta0(3.4);
    s.push(2, "2.eta0_exact", "eta0(alphaL=3.4), closed form", e0, 0.385_795_000_741_369_46, 1e-10, TolKind::Relative);
    s.push(2, "2.eta0_quoted", "eta0(alphaL=3.4) (%)", 100.0 * e0, 38.6, 0.05, TolKind::Absolute);
    let eta_fig2 = efficiency_from_eta0(0.34, 10e-6, 138e-6);
    s.push(2, "2.eta_decay_exact", "eta(34%, T2=138us, t23=10us), closed form", eta_fig2, 0.34 * (-40.0f64 / 138.0).exp(), 1e-10, TolKind::Relative);
    s.push(2, "2.eta_decay_quoted", "eta(34%, T2=138us, t23=10us) (%), measured 24", 100.0 * eta_fig2, 25.4, 0.05, TolKind::Absolute);
    let fixed = IsdNuisance::default();
    let isd_model = SyntheticModel::Isd { fixed, kappa: kappa(0.8) };
    let b9: Vec<f64> = linspace(0.8, 7.1, 9).into_iter().map(|m| AngularFrequency::from_mhz(m).rad_per_s()).collect();
    let curve = generate_synthetic(&isd_model, &b9, 0.0, 0)?;
    let refit = isd_model.fit(&curve)?;
    s.push(2, "2.isd_curve_kappa", "kappa refit of the bandwidth curve (s^-1.kHz^-1)", refit.value("kappa").unwrap_or(f64::NAN), 0.8, 1e-10, TolKind::Relative);
    let t20 = t2_zero_from_reference(fixed.t2_at_ref, fixed.b_ref, kappa(0.8));
    s.push(2, "2.t2_zero_derived", "T2_zero implied by 138 us at 800 kHz (us)", to_us(t20), 151.0, 0.5, TolKind::Absolute);

    // ISD coherence table
    for (id, mhz, want) in [("3.t2_0", 0.0, 151.0), ("3.t2_0.8", 0.8, 138.0), ("3.t2_5", 5.0, 94.0), ("3.t2_10", 10.0, 68.0)] {
        let t2 = t2_of_bandwidth(151e-6, kappa(0.8), AngularFrequency::from_mhz(mhz));
        s.push(3, id, format!("T2 at B = {mhz} MHz (us)"), to_us(t2), want, 1.0, TolKind::Absolute);
    }

    // microscopic estimator
    let m = MaterialParams::er_yso();
    let k_mag = kappa_micro(DipoleCoupling::new(2.8e-19, CouplingKind::Magnetic)?, &m)?;
    s.push(4, "4.kappa_mag", "kappa_micro(A = 2.8e-19) (s^-1.kHz^-1)", k_mag.per_s_per_khz(), 0.33, 0.03, TolKind::Relative);
    let k_tot = kappa_micro(DipoleCoupling::new(8.6e-19, CouplingKind::Combined)?, &m)?;
    s.push(4, "4.kappa_total", "kappa_micro(A = 8.6e-19) (s^-1.kHz^-1)", k_tot.per_s_per_khz(), 1.0, 0.03, TolKind::Relative);
    let a_el = coupling_electric(1.65e-31, 4.0)?.a;
    s.push(4, "4.a_el", "A_el(1.65e-31 C.m, eps_r = 4) (m^3.rad/s)", a_el, 5.8e-19, 0.02, TolKind::Relative);

    // performance map at 135°
    let scan = AngleScan::from_material(&m, &[135.0], &KappaCalibration::default())?;
    let bands = [AngularFrequency::from_mhz(10.0), AngularFrequency::from_mhz(50.0)];
    let grid = performance_map(&scan, &bands, 0.34, rabi)?;
    s.push(5, "5.eta_10mhz", "efficiency at 135 deg, 10 MHz (%)", 100.0 * grid.efficiency[0][0], 0.30, 0.03, TolKind::Absolute);
    let no_isd = efficiency_with_isd(0.34, bands[0], rabi, scan.t2_zero[0], IsdCoefficient::ZERO);
    s.push(5, "5.eta_no_isd", "same point with kappa = 0 (%)", 100.0 * no_isd, 17.0, 1.5, TolKind::Absolute);
    let sat = 1.0 / scan.kappa_total(0).per_s_per_hz();
    s.push(5, "5.tbp_limit", "1/kappa_total at 135 deg", sat, 1250.0, 1e-12, TolKind::Relative);
    s.push(5, "5.tbp_50mhz", "tbp at 50 MHz vs 1/kappa", grid.tbp[0][1], sat, 0.05, TolKind::Relative);

    // inversion profiles; thresholds from a 10x tighter integration
    let tol = Tolerance::default();
    let tight = tol.tighter(10.0);
    let unit = design_pulse(khz(800.0), rabi, AngularFrequency::ZERO, 0.0, WavevectorTag::Rephase)?;
    let centre = inversion_profile(&unit, &[0.0], &tol)?[0];
    let centre_ref = inversion_profile(&unit, &[0.0], &tight)?[0];
    s.push(6, "6a.w0_mu1", "w(0) at mu = 1 vs tight oracle", centre, centre_ref, 1e-4, TolKind::AtLeast);
    for (id, bw) in [("6a.tophat_1600", 1600.0), ("6a.tophat_3200", 3200.0), ("6a.tophat_7100", 7100.0)] {
        let p = design_pulse(khz(bw), rabi, AngularFrequency::ZERO, 0.0, WavevectorTag::Rephase)?;
        let edge = 0.8 * p.chirp_factor * p.rate.rad_per_s();
        let dets = linspace(-edge, edge, 17);
        let min = |v: Vec<f64>| v.into_iter().fold(f64::INFINITY, f64::min);
        let w = min(inversion_profile(&p, &dets, &tol)?);
        let w_ref = min(inversion_profile(&p, &dets, &tight)?);
        s.push(6, id, format!("min in-band w, B = {bw} kHz, vs tight oracle"), w, w_ref, 1e-4, TolKind::AtLeast);
    }
    for (id, bw) in [("6a.out_800", 800.0), ("6a.out_1600", 1600.0), ("6a.out_3200", 3200.0), ("6a.out_7100", 7100.0)] {
        let p = design_pulse(khz(bw), rabi, AngularFrequency::ZERO, 0.0, WavevectorTag::Rephase)?;
        let d = 2.0 * p.chirp_factor * p.rate.rad_per_s();
        let w = inversion_profile(&p, &[-d, d], &tol)?.into_iter().fold(f64::NEG_INFINITY, f64::max);
        s.push(6, id, format!("max w at +-2 mu beta, B = {bw} kHz"), w, -0.9, 0.0, TolKind::AtMost);
    }

    // fit round trips
    let decay = SyntheticModel::Decay { eta0: 0.34, t2: 138e-6 };
    let scrambler = SyntheticModel::Scrambler { t2_zero: 151e-6, kappa: kappa(0.88) };
    let t23 = linspace(10e-6, 120e-6, 12);
    let b8: Vec<f64> = linspace(0.0, 7.1, 8).into_iter().map(|m| AngularFrequency::from_mhz(m).rad_per_s()).collect();
    let b15: Vec<f64> = linspace(0.8, 7.1, 15).into_iter().map(|m| AngularFrequency::from_mhz(m).rad_per_s()).collect();
    let cases: [(&SyntheticModel, &[f64], f64, &str); 3] =
        [(&decay, &t23, 2.0, "decay"), (&scrambler, &b8, 3.0, "scrambler"), (&isd_model, &b15, 3.0, "isd")];
    for (model, grid, pct, name) in cases {
        let clean = model.fit(&generate_synthetic(model, grid, 0.0, 0)?)?;
        let worst = model
            .truth()
            .iter()
            .map(|(p, t)| (clean.value(p).unwrap_or(f64::NAN) / t - 1.0).abs())
            .fold(0.0, f64::max);
        s.push(7, format!("7.{name}_noiseless"), format!("{name}: worst relative error, no noise"), worst, 0.0, 1e-8, TolKind::AtMost);
        for c in monte_carlo_coverage(model, grid, pct, 0, MC_SEEDS, 3.0)? {
            s.push(
                7,
                format!("7.{name}_{}_coverage", c.name),
                format!("{name}: {} within 3 se, {pct}% noise, {MC_SEEDS} seeds", c.name),
                c.fraction_within,
                MC_COVERAGE,
                0.0,
                TolKind::AtLeast,
            );
        }
    }

    // per-ion-density unit
    let per_ion = convert_kappa_to_per_ion_density(kappa(0.8), &m)?.hz_per_ion_per_cm3;
    s.push(8, "8.per_ion", "kappa = 0.8 in Hz/(ion.cm^-3)", per_ion, 1.1e-12, 1.0, TolKind::Factor);

    Ok(s.0)
}

/// Criteria covered and whether every anchor of each passed, in order.
pub fn criteria_summary(anchors: &[Anchor]) -> Vec<(u8, bool)> {
    let mut out: Vec<(u8, bool)> = Vec::new();
    for a in anchors {
        match out.iter_mut().find(|(c, _)| *c == a.criterion) {
            Some((_, ok)) => *ok &= a.pass,
            None => out.push((a.criterion, a.pass)),
        }
    }
    out
}

/// Fixed-width text table; identical anchors give identical bytes.
pub fn render_report(anchors: &[Anchor]) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "{:<34} {:<6} {:>16} {:>16} {:>10} {:<7} quantity", "anchor", "status", "value", "expected", "tol", "kind");
    for a in anchors {
        let _ = writeln!(
            t,
            "{:<34} {:<6} {:>16.9e} {:>16.9e} {:>10.3e} {:<7} {}",
            a.id,
            if a.pass { "PASS" } else { "FAIL" },
            a.value,
            a.expected,
            a.tolerance,
            a.kind.symbol(),
            a.quantity
        );
    }
    let failed = anchors.iter().filter(|a| !a.pass).count();
    let _ = writeln!(t, "{} anchors, {} passed, {} failed", anchors.len(), anchors.len() - failed, failed);
    t
}

pub fn write_report<W: Write>(anchors: &[Anchor], mut w: W) -> Result<()> {
    w.write_all(render_report(anchors).as_bytes())?;
    Ok(())
}
