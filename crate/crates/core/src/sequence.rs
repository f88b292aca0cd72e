//! Inhomogeneous ensembles driven by pulse sequences, and the phase-matched
//! macroscopic field they radiate.

use std::f64::consts::{LN_2, PI};
use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bloch::{bloch_rhs, BlochState, Decay};
use crate::chs::{ChsPulse, PulseDescriptor, WavevectorTag};
use crate::error::{Error, Result};
use crate::ode::{integrate, Tolerance};
use crate::rose::RoseTiming;
use crate::units::{to_us, us, AngularFrequency};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SignalShape {
    /// Gaussian amplitude envelope with the given FWHM, truncated at ±1.5 FWHM.
    Gaussian { fwhm: f64 },
    Square { duration: f64 },
}

/// A weak, unchirped input pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalPulse {
    pub shape: SignalShape,
    /// Pulse area ∫Ω dt, rad.
    pub area: f64,
    pub center_detuning: AngularFrequency,
    pub arrival_time: f64,
    pub wavevector_tag: WavevectorTag,
}

const GAUSS_TRUNCATION: f64 = 1.5;

impl SignalPulse {
    /// Gaussian input of 1.4 µs FWHM and area 0.1π, centred on the line.
    pub fn default_gaussian(arrival_time: f64) -> Self {
        SignalPulse {
            shape: SignalShape::Gaussian { fwhm: us(1.4) },
            area: 0.1 * PI,
            center_detuning: AngularFrequency::ZERO,
            arrival_time,
            wavevector_tag: WavevectorTag::Signal,
        }
    }

    pub fn peak_rabi(&self) -> f64 {
        match self.shape {
            SignalShape::Gaussian { fwhm } => self.area / (fwhm * (PI / (4.0 * LN_2)).sqrt()),
            SignalShape::Square { duration } => self.area / duration,
        }
    }

    pub fn envelope(&self, t: f64) -> f64 {
        let tau = t - self.arrival_time;
        match self.shape {
            SignalShape::Gaussian { fwhm } => self.peak_rabi() * (-4.0 * LN_2 * tau * tau / (fwhm * fwhm)).exp(),
            SignalShape::Square { duration } => {
                if tau.abs() <= 0.5 * duration {
                    self.peak_rabi()
                } else {
                    0.0
                }
            }
        }
    }

    pub fn complex_rabi(&self, t: f64) -> Complex64 {
        Complex64::from_polar(self.envelope(t), -self.center_detuning.rad_per_s() * (t - self.arrival_time))
    }

    pub fn support(&self) -> (f64, f64) {
        let h = match self.shape {
            SignalShape::Gaussian { fwhm } => GAUSS_TRUNCATION * fwhm,
            SignalShape::Square { duration } => 0.5 * duration,
        };
        (self.arrival_time - h, self.arrival_time + h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pulse {
    Chs(ChsPulse),
    Signal(SignalPulse),
}

impl Pulse {
    pub fn support(&self) -> (f64, f64) {
        match self {
            Pulse::Chs(p) => p.support(),
            Pulse::Signal(p) => p.support(),
        }
    }

    pub fn complex_rabi(&self, t: f64) -> Complex64 {
        match self {
            Pulse::Chs(p) => p.complex_rabi(t),
            Pulse::Signal(p) => p.complex_rabi(t),
        }
    }

    pub fn tag(&self) -> WavevectorTag {
        match self {
            Pulse::Chs(p) => p.wavevector_tag,
            Pulse::Signal(p) => p.wavevector_tag,
        }
    }
}

impl From<ChsPulse> for Pulse {
    fn from(p: ChsPulse) -> Self {
        Pulse::Chs(p)
    }
}

impl From<SignalPulse> for Pulse {
    fn from(p: SignalPulse) -> Self {
        Pulse::Signal(p)
    }
}

/// Signal at t = 0, CHS pulses at t₁₂ and t₁₂ + t₂₃.
pub fn rose_sequence(signal: SignalPulse, rephase: ChsPulse, timing: &RoseTiming) -> Vec<Pulse> {
    let t0 = signal.arrival_time;
    vec![
        Pulse::Signal(signal),
        Pulse::Chs(rephase.with_arrival(t0 + timing.t12)),
        Pulse::Chs(rephase.with_arrival(t0 + timing.t12 + timing.t23)),
    ]
}

/// Sort by start time and reject overlapping supports.
pub fn validate_sequence(pulses: &[Pulse]) -> Result<Vec<Pulse>> {
    let mut sorted = pulses.to_vec();
    sorted.sort_by(|a, b| a.support().0.total_cmp(&b.support().0));
    for pair in sorted.windows(2) {
        let (_, end) = pair[0].support();
        let (start, _) = pair[1].support();
        if start < end {
            return Err(Error::Sequencing(format!(
                "pulse supports overlap: one ends at {:.4} µs, the next starts at {:.4} µs",
                to_us(end),
                to_us(start)
            )));
        }
    }
    Ok(sorted)
}

/// Ions of an inhomogeneous line: detuning, weight and 1-D position each.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub detunings: Vec<f64>,
    pub weights: Vec<f64>,
    pub positions: Vec<f64>,
    pub k_signal: f64,
    pub k_rephase: f64,
}

impl EnsembleSpec {
    pub fn new(detunings: Vec<f64>, weights: Vec<f64>, positions: Vec<f64>, k_signal: f64, k_rephase: f64) -> Result<Self> {
        let n = detunings.len();
        if n == 0 || weights.len() != n || positions.len() != n {
            return Err(Error::config(
                "ensemble",
                format!(
                    "detunings, weights and positions must have equal non-zero length ({}, {}, {})",
                    n,
                    weights.len(),
                    positions.len()
                ),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 || weights.iter().any(|&w| w < 0.0) {
            return Err(Error::config("ensemble.weights", format!("must be non-negative and sum to 1 (sum = {total})")));
        }
        Ok(EnsembleSpec {
            detunings,
            weights,
            positions,
            k_signal,
            k_rephase,
        })
    }

    /// `n` ions on a uniform detuning grid over ±`half_span`, Lorentzian weights
    /// of FWHM `gamma_inh`, and seeded uniform positions in [0, `length`].
    ///
    /// The position stream depends only on the seed, so growing `n` keeps the
    /// first positions unchanged.
    pub fn lorentzian(
        n: usize,
        gamma_inh: AngularFrequency,
        half_span: AngularFrequency,
        length: f64,
        seed: u64,
        k_signal: f64,
        k_rephase: f64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("ensemble.n_ions", "must be ≥ 1"));
        }
        if !(gamma_inh.rad_per_s() > 0.0) {
            return Err(Error::config("ensemble.gamma_inh_mhz", "must be > 0"));
        }
        let detunings: Vec<f64> = if n == 1 {
            vec![0.0]
        } else {
            let h = half_span.rad_per_s();
            (0..n).map(|i| -h + 2.0 * h * i as f64 / (n - 1) as f64).collect()
        };
        let g = gamma_inh.rad_per_s();
        let mut weights: Vec<f64> = detunings.iter().map(|d| 1.0 / (1.0 + (2.0 * d / g).powi(2))).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let positions = (0..n).map(|_| rng.random::<f64>() * length).collect();
        EnsembleSpec::new(detunings, weights, positions, k_signal, k_rephase)
    }

    pub fn len(&self) -> usize {
        self.detunings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detunings.is_empty()
    }

    pub fn wavevector(&self, tag: WavevectorTag) -> f64 {
        match tag {
            WavevectorTag::Signal => self.k_signal,
            WavevectorTag::Rephase => self.k_rephase,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationOptions {
    pub span: (f64, f64),
    pub sample_step: f64,
    pub decay: Decay,
    pub tolerance: Tolerance,
    pub detection_wavevector: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceResult {
    pub times: Vec<f64>,
    pub field_amplitude: Vec<Complex64>,
    pub per_ion_final: Vec<BlochState>,
}

impl SequenceResult {
    /// Time and value of max |field| over samples in [t0, t1].
    pub fn peak_in_window(&self, t0: f64, t1: f64) -> Option<(f64, f64)> {
        self.times
            .iter()
            .zip(&self.field_amplitude)
            .filter(|(t, _)| **t >= t0 && **t <= t1)
            .map(|(t, f)| (*t, f.norm()))
            .fold(None, |best, (t, a)| match best {
                Some((_, b)) if b >= a => best,
                _ => Some((t, a)),
            })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t_us", "re_field", "im_field", "abs_field"])?;
        for (t, f) in self.times.iter().zip(&self.field_amplitude) {
            out.write_record([
                format!("{:.6}", to_us(*t)),
                format!("{:.9e}", f.re),
                format!("{:.9e}", f.im),
                format!("{:.9e}", f.norm()),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Uniform reporting grid t0, t0 + dt, ..., up to t1.
pub fn sample_grid(span: (f64, f64), step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(span.1 > span.0) {
        return Err(Error::config("sample_ns", "sample step and span must be positive"));
    }
    let n = ((span.1 - span.0) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|k| span.0 + k as f64 * step).collect())
}

const CHUNK: usize = 64;

struct IonOutcome {
    partial: Vec<Complex64>,
    finals: Vec<BlochState>,
}

fn run_ion(
    detuning: f64,
    position: f64,
    pulses: &[Pulse],
    ens: &EnsembleSpec,
    opts: &SimulationOptions,
    times: &[f64],
    mut emit: impl FnMut(usize, BlochState),
) -> Result<BlochState> {
    let decay = opts.decay;
    let g1 = decay.t1.map_or(0.0, |t| 1.0 / t);
    let g2 = decay.t2.map_or(0.0, |t| 1.0 / t);
    let mut t = opts.span.0;
    let mut st = BlochState::GROUND;
    let mut k = 0;
    for p in pulses {
        let (a, b) = p.support();
        while k < times.len() && times[k] < a {
            emit(k, decay.free_evolve(st, detuning, times[k] - t));
            k += 1;
        }
        st = decay.free_evolve(st, detuning, a - t);
        let end = k + times[k..].partition_point(|&x| x <= b);
        let spatial = Complex64::from_polar(1.0, ens.wavevector(p.tag()) * position);
        let (y, _) = integrate(
            |tt, y: &[f64; 3]| bloch_rhs(y, p.complex_rabi(tt) * spatial, detuning, g1, g2),
            a,
            [st.u, st.v, st.w],
            b,
            &opts.tolerance,
            &times[k..end],
            |i, s| emit(k + i, BlochState::new(s[0], s[1], s[2])),
        )?;
        k = end;
        st = BlochState::new(y[0], y[1], y[2]);
        t = b;
    }
    while k < times.len() {
        emit(k, decay.free_evolve(st, detuning, times[k] - t));
        k += 1;
    }
    Ok(decay.free_evolve(st, detuning, opts.span.1 - t))
}

/// Propagate every ion through the sequence and sum the phase-matched field
/// Σᵢ wᵢ (uᵢ + ivᵢ)(t) e^{−i k_det xᵢ} on the reporting grid.
///
/// Ions are processed in fixed-size chunks whose partial sums are combined in
/// index order, so the output is bit-identical for any thread count.
pub fn simulate_sequence(ens: &EnsembleSpec, pulses: &[Pulse], opts: &SimulationOptions) -> Result<SequenceResult> {
    let pulses = validate_sequence(pulses)?;
    if let (Some(first), Some(last)) = (pulses.first(), pulses.last()) {
        if first.support().0 < opts.span.0 || last.support().1 > opts.span.1 {
            return Err(Error::Sequencing(format!(
                "pulse supports [{:.4}, {:.4}] µs exceed the simulation span [{:.4}, {:.4}] µs",
                to_us(first.support().0),
                to_us(last.support().1),
                to_us(opts.span.0),
                to_us(opts.span.1)
            )));
        }
    }
    let times = sample_grid(opts.span, opts.sample_step)?;
    let n = ens.len();
    let chunks: Vec<Result<IonOutcome>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            let mut partial = vec![Complex64::new(0.0, 0.0); times.len()];
            let mut finals = Vec::with_capacity(hi - lo);
            for i in lo..hi {
                let x = ens.positions[i];
                let factor = ens.weights[i] * Complex64::from_polar(1.0, -opts.detection_wavevector * x);
                let fin = run_ion(ens.detunings[i], x, &pulses, ens, opts, &times, |k, s| {
                    partial[k] += factor * s.coherence();
                })?;
                finals.push(fin);
            }
            Ok(IonOutcome { partial, finals })
        })
        .collect();

    let mut field = vec![Complex64::new(0.0, 0.0); times.len()];
    let mut per_ion_final = Vec::with_capacity(n);
    for chunk in chunks {
        let chunk = chunk?;
        for (f, p) in field.iter_mut().zip(&chunk.partial) {
            *f += p;
        }
        per_ion_final.extend(chunk.finals);
    }
    Ok(SequenceResult {
        times,
        field_amplitude: field,
        per_ion_final,
    })
}

/// Run the sequence with every signal pulse at +area and at −area and keep
/// half the difference of the two fields. Contributions that do not depend on
/// the signal sign, such as coherence written by the rephasing pulses
/// themselves, cancel; the linear echo response is kept. `per_ion_final` is
/// taken from the +area run.
pub fn simulate_phase_cycled(ens: &EnsembleSpec, pulses: &[Pulse], opts: &SimulationOptions) -> Result<SequenceResult> {
    let flipped: Vec<Pulse> = pulses
        .iter()
        .map(|p| match *p {
            Pulse::Signal(s) => Pulse::Signal(SignalPulse { area: -s.area, ..s }),
            chs => chs,
        })
        .collect();
    let mut plus = simulate_sequence(ens, pulses, opts)?;
    let minus = simulate_sequence(ens, &flipped, opts)?;
    for (a, b) in plus.field_amplitude.iter_mut().zip(&minus.field_amplitude) {
        *a = 0.5 * (*a - b);
    }
    Ok(plus)
}

// ---------------------------------------------------------------------------
// JSON configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PulseConfig {
    Chs {
        #[serde(flatten)]
        descriptor: PulseDescriptor,
    },
    Gaussian {
        fwhm_us: f64,
        /// Area in units of π.
        area_pi: f64,
        #[serde(default)]
        center_detuning_khz: f64,
        #[serde(default)]
        arrival_us: f64,
        #[serde(default = "signal_tag")]
        tag: WavevectorTag,
    },
    Square {
        duration_us: f64,
        area_pi: f64,
        #[serde(default)]
        center_detuning_khz: f64,
        #[serde(default)]
        arrival_us: f64,
        #[serde(default = "signal_tag")]
        tag: WavevectorTag,
    },
}

fn signal_tag() -> WavevectorTag {
    WavevectorTag::Signal
}

impl PulseConfig {
    pub fn to_pulse(&self, index: usize) -> Result<Pulse> {
        let key = |k: &str| format!("pulses[{index}].{k}");
        match *self {
            PulseConfig::Chs { descriptor } => descriptor.to_pulse().map(Pulse::Chs).map_err(|e| match e {
                Error::Config { key: k, message } => Error::config(key(&k), message),
                other => other,
            }),
            PulseConfig::Gaussian {
                fwhm_us,
                area_pi,
                center_detuning_khz,
                arrival_us,
                tag,
            } => {
                if !(fwhm_us > 0.0) {
                    return Err(Error::config(key("fwhm_us"), "must be > 0"));
                }
                Ok(Pulse::Signal(SignalPulse {
                    shape: SignalShape::Gaussian { fwhm: us(fwhm_us) },
                    area: area_pi * PI,
                    center_detuning: AngularFrequency::from_khz(center_detuning_khz),
                    arrival_time: us(arrival_us),
                    wavevector_tag: tag,
                }))
            }
            PulseConfig::Square {
                duration_us,
                area_pi,
                center_detuning_khz,
                arrival_us,
                tag,
            } => {
                if !(duration_us > 0.0) {
                    return Err(Error::config(key("duration_us"), "must be > 0"));
                }
                Ok(Pulse::Signal(SignalPulse {
                    shape: SignalShape::Square { duration: us(duration_us) },
                    area: area_pi * PI,
                    center_detuning: AngularFrequency::from_khz(center_detuning_khz),
                    arrival_time: us(arrival_us),
                    wavevector_tag: tag,
                }))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_ions: usize,
    pub gamma_inh_mhz: f64,
    /// Detuning grid half-span in units of the reference bandwidth.
    pub span_factor: f64,
    pub seed: u64,
    /// k_rephase − k_signal.
    pub k_mismatch_rad_per_m: f64,
    #[serde(default)]
    pub k_signal_rad_per_m: f64,
    #[serde(default = "default_length_mm")]
    pub sample_length_mm: f64,
    /// Reference bandwidth for the grid; defaults to the widest CHS pulse.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth_khz: Option<f64>,
}

fn default_length_mm() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayConfig {
    pub t1_us: Option<f64>,
    pub t2_us: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceConfig {
    pub pulses: Vec<PulseConfig>,
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub decay: DecayConfig,
    pub span_us: [f64; 2],
    #[serde(default = "default_sample_ns")]
    pub sample_ns: f64,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    /// Beam whose wavevector the detector selects.
    #[serde(default = "signal_tag")]
    pub detection: WavevectorTag,
    /// Report the signal-odd part of the field (two runs, ± signal area).
    #[serde(default)]
    pub phase_cycle: bool,
}

fn default_sample_ns() -> f64 {
    20.0
}

fn default_rtol() -> f64 {
    1e-9
}

impl SequenceConfig {
    /// The three-pulse scheme at the 800 kHz design point (t₁₂ = 5 µs,
    /// t₂₃ = 10 µs, T₂ = 138 µs) with mismatched rephasing beams.
    pub fn rose_default(n_ions: usize, seed: u64) -> Self {
        SequenceConfig {
            pulses: vec![
                PulseConfig::Gaussian {
                    fwhm_us: 1.4,
                    area_pi: 0.1,
                    center_detuning_khz: 0.0,
                    arrival_us: 0.0,
                    tag: WavevectorTag::Signal,
                },
                PulseConfig::Chs {
                    descriptor: PulseDescriptor {
                        rabi_khz: 800.0,
                        beta_khz: 400.0,
                        mu: 1.0,
                        center_detuning_khz: 0.0,
                        arrival_us: 5.0,
                        tag: WavevectorTag::Rephase,
                    },
                },
                PulseConfig::Chs {
                    descriptor: PulseDescriptor {
                        rabi_khz: 800.0,
                        beta_khz: 400.0,
                        mu: 1.0,
                        center_detuning_khz: 0.0,
                        arrival_us: 15.0,
                        tag: WavevectorTag::Rephase,
                    },
                },
            ],
            ensemble: EnsembleConfig {
                n_ions,
                gamma_inh_mhz: 630.0,
                span_factor: 3.0,
                seed,
                k_mismatch_rad_per_m: 2.0 * PI * 1e5,
                k_signal_rad_per_m: 0.0,
                sample_length_mm: 1.0,
                bandwidth_khz: None,
            },
            decay: DecayConfig {
                t1_us: None,
                t2_us: Some(138.0),
            },
            span_us: [-2.5, 25.0],
            sample_ns: 20.0,
            rtol: 1e-9,
            detection: WavevectorTag::Signal,
            phase_cycle: true,
        }
    }

    /// Build and run, honouring `phase_cycle`.
    pub fn run(&self) -> Result<SequenceResult> {
        let (ens, pulses, opts) = self.build()?;
        if self.phase_cycle {
            simulate_phase_cycled(&ens, &pulses, &opts)
        } else {
            simulate_sequence(&ens, &pulses, &opts)
        }
    }

    pub fn build(&self) -> Result<(EnsembleSpec, Vec<Pulse>, SimulationOptions)> {
        let pulses = self
            .pulses
            .iter()
            .enumerate()
            .map(|(i, p)| p.to_pulse(i))
            .collect::<Result<Vec<_>>>()?;
        let e = &self.ensemble;
        let reference = match e.bandwidth_khz {
            Some(b) if b > 0.0 => AngularFrequency::from_khz(b),
            Some(_) => return Err(Error::config("ensemble.bandwidth_khz", "must be > 0")),
            None => pulses
                .iter()
                .filter_map(|p| match p {
                    Pulse::Chs(c) => Some(c.bandwidth()),
                    Pulse::Signal(_) => None,
                })
                .fold(None, |acc: Option<AngularFrequency>, b| Some(acc.map_or(b, |a| if b > a { b } else { a })))
                .ok_or_else(|| Error::config("ensemble.bandwidth_khz", "required when the sequence has no CHS pulse"))?,
        };
        if !(e.span_factor > 0.0) {
            return Err(Error::config("ensemble.span_factor", "must be > 0"));
        }
        if !(e.sample_length_mm > 0.0) {
            return Err(Error::config("ensemble.sample_length_mm", "must be > 0"));
        }
        let ens = EnsembleSpec::lorentzian(
            e.n_ions,
            AngularFrequency::from_mhz(e.gamma_inh_mhz),
            reference * e.span_factor,
            e.sample_length_mm * 1e-3,
            e.seed,
            e.k_signal_rad_per_m,
            e.k_signal_rad_per_m + e.k_mismatch_rad_per_m,
        )?;
        for (key, v) in [("decay.t1_us", self.decay.t1_us), ("decay.t2_us", self.decay.t2_us)] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(Error::config(key, "must be > 0 (use null for no decay)"));
                }
            }
        }
        if !(self.span_us[1] > self.span_us[0]) {
            return Err(Error::config("span_us", "end must exceed start"));
        }
        if !(self.sample_ns > 0.0) {
            return Err(Error::config("sample_ns", "must be > 0"));
        }
        if !(self.rtol > 0.0 && self.rtol < 1e-2) {
            return Err(Error::config("rtol", "must lie in (0, 1e-2)"));
        }
        let opts = SimulationOptions {
            span: (us(self.span_us[0]), us(self.span_us[1])),
            sample_step: self.sample_ns * 1e-9,
            decay: Decay {
                t1: self.decay.t1_us.map(us),
                t2: self.decay.t2_us.map(us),
            },
            tolerance: Tolerance::with_rtol(self.rtol),
            detection_wavevector: ens.wavevector(self.detection),
        };
        Ok((ens, pulses, opts))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_pulse(t12: f64, t2: Option<f64>, n: usize) -> (EnsembleSpec, Vec<Pulse>, SimulationOptions) {
        // short square pulses: weak excitation, hard π rephasing with Ω ≫ ensemble width
        let rabi_pi = 2.0 * PI * 20e6;
        let signal = SignalPulse {
            shape: SignalShape::Square { duration: 10e-9 },
            area: 0.1 * PI,
            center_detuning: AngularFrequency::ZERO,
            arrival_time: 0.0,
            wavevector_tag: WavevectorTag::Signal,
        };
        let pi = SignalPulse {
            shape: SignalShape::Square { duration: PI / rabi_pi },
            area: PI,
            center_detuning: AngularFrequency::ZERO,
            arrival_time: t12,
            wavevector_tag: WavevectorTag::Signal,
        };
        let ens = EnsembleSpec::lorentzian(
            n,
            AngularFrequency::from_mhz(630.0),
            AngularFrequency::from_khz(300.0),
            1e-3,
            7,
            0.0,
            0.0,
        )
        .unwrap();
        let opts = SimulationOptions {
            span: (-1e-6, 2.0 * t12 + 3e-6),
            sample_step: 10e-9,
            decay: Decay { t1: None, t2 },
            tolerance: Tolerance::default(),
            detection_wavevector: 0.0,
        };
        (ens, vec![signal.into(), pi.into()], opts)
    }

    #[test]
    fn two_pulse_echo_decays_with_t2() {
        let t12 = 10e-6;
        let t2 = 138e-6;
        let (ens, pulses, opts) = two_pulse(t12, None, 401);
        let free = simulate_sequence(&ens, &pulses, &opts).unwrap();
        let (ens, pulses, opts) = two_pulse(t12, Some(t2), 401);
        let damped = simulate_sequence(&ens, &pulses, &opts).unwrap();
        let w = (2.0 * t12 - 1e-6, 2.0 * t12 + 1e-6);
        let (tp, a_free) = free.peak_in_window(w.0, w.1).unwrap();
        let (_, a_damped) = damped.peak_in_window(w.0, w.1).unwrap();
        assert!((tp - 2.0 * t12).abs() <= 20e-9, "echo at {tp}");
        // analytic oracle: coherence decays e^{-t/T2} over the 2 t12 between excitation and echo
        let expect = (-2.0 * t12 / t2).exp();
        assert!((a_damped / a_free - expect).abs() < 2e-3, "{} vs {expect}", a_damped / a_free);
        // free-induction right after the signal is the same coherent sum: echo ≈ FID magnitude
        let (_, fid) = free.peak_in_window(0.0, 0.5e-6).unwrap();
        assert!((a_free / fid - 1.0).abs() < 5e-3, "echo {a_free} vs FID {fid}");
    }

    #[test]
    fn no_pulses_no_field() {
        let ens = EnsembleSpec::lorentzian(
            10,
            AngularFrequency::from_mhz(1.0),
            AngularFrequency::from_khz(100.0),
            1e-3,
            1,
            0.0,
            0.0,
        )
        .unwrap();
        let opts = SimulationOptions {
            span: (0.0, 1e-6),
            sample_step: 1e-7,
            decay: Decay::t2_only(1e-5),
            tolerance: Tolerance::default(),
            detection_wavevector: 0.0,
        };
        let r = simulate_sequence(&ens, &[], &opts).unwrap();
        assert!(r.field_amplitude.iter().all(|f| f.norm() == 0.0));
        assert!(r.per_ion_final.iter().all(|s| *s == BlochState::GROUND));
    }

    #[test]
    fn overlapping_pulses_rejected() {
        let a = SignalPulse::default_gaussian(0.0);
        let b = SignalPulse::default_gaussian(1e-6);
        let err = validate_sequence(&[a.into(), b.into()]).unwrap_err();
        assert!(matches!(err, Error::Sequencing(_)));
    }

    #[test]
    fn lorentzian_ensemble_weights() {
        let e = EnsembleSpec::lorentzian(
            2001,
            AngularFrequency::from_mhz(1.0),
            AngularFrequency::from_mhz(2.0),
            1e-3,
            3,
            0.0,
            1.0,
        )
        .unwrap();
        let total: f64 = e.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        // centre weight / weight at Δ = Γ/2 is 2
        let centre = e.weights[1000];
        let idx = e.detunings.iter().position(|d| (d / (2.0 * PI * 0.5e6) - 1.0).abs() < 1e-9).unwrap();
        assert!((centre / e.weights[idx] - 2.0).abs() < 1e-9);
        // positions prefix-stable under growth
        let f = EnsembleSpec::lorentzian(
            4002,
            AngularFrequency::from_mhz(1.0),
            AngularFrequency::from_mhz(2.0),
            1e-3,
            3,
            0.0,
            1.0,
        )
        .unwrap();
        assert_eq!(&f.positions[..2001], &e.positions[..]);
        assert!(EnsembleSpec::new(vec![0.0], vec![0.5], vec![0.0], 0.0, 0.0).is_err());
        assert!(EnsembleSpec::new(vec![0.0, 1.0], vec![1.0], vec![0.0], 0.0, 0.0).is_err());
    }

    #[test]
    fn gaussian_signal_area() {
        let s = SignalPulse::default_gaussian(0.0);
        let (a, b) = s.support();
        let n = 20_000;
        let dt = (b - a) / n as f64;
        let area: f64 = (0..n).map(|k| s.envelope(a + (k as f64 + 0.5) * dt) * dt).sum();
        // truncation at ±1.5 FWHM drops erfc(3√ln2) = 4.3e-4 of the area
        assert!((area / s.area - 1.0 + 4.3e-4).abs() < 2e-5);
    }

    #[test]
    fn sequence_config_round_trip_and_errors() {
        let cfg = SequenceConfig::rose_default(100, 5);
        let text = serde_json::to_string(&cfg).unwrap();
        let back: SequenceConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let (ens, pulses, opts) = back.build().unwrap();
        assert_eq!(ens.len(), 100);
        assert_eq!(pulses.len(), 3);
        assert!(opts.detection_wavevector == ens.k_signal);

        let mut bad = cfg.clone();
        bad.ensemble.span_factor = 0.0;
        assert!(bad.build().unwrap_err().to_string().contains("ensemble.span_factor"));
        let mut v = serde_json::to_value(&cfg).unwrap();
        v["ensemble"]["n_ion"] = serde_json::json!(3);
        assert!(serde_json::from_value::<SequenceConfig>(v).is_err());
    }
}
