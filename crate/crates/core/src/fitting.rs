//! Closed-form least-squares fits for the decay, ISD and scrambler models, and
//! seeded synthetic datasets to exercise them.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::isd::{efficiency_with_isd_calibrated, t2_of_bandwidth};
use crate::rose::efficiency_from_eta0;
use crate::units::{to_us, us, AngularFrequency, IsdCoefficient};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// η(t₂₃) = η₀ e^{−4t₂₃/T₂}
    Decay,
    /// 1/T₂(B) = 1/T₂⁰ + κ B/2π
    Scrambler,
    /// ln η(B) with fixed η₀, T₂(B_ref) and Ω₀; κ free
    Isd,
}

impl ModelKind {
    pub fn columns(self) -> [&'static str; 2] {
        match self {
            ModelKind::Decay => ["t23_us", "eta"],
            ModelKind::Scrambler => ["b_khz", "inv_t2_per_s"],
            ModelKind::Isd => ["b_khz", "eta"],
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "decay" => Ok(ModelKind::Decay),
            "scrambler" => Ok(ModelKind::Scrambler),
            "isd" => Ok(ModelKind::Isd),
            other => Err(Error::config("model", format!("unknown model '{other}' (expected decay, scrambler or isd)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitParam {
    pub value: f64,
    /// `None` when the fit has no residual degrees of freedom.
    pub std_error: Option<f64>,
    pub unit: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub model: ModelKind,
    pub params: BTreeMap<String, FitParam>,
    pub derived: BTreeMap<String, FitParam>,
    pub residual_rms: f64,
    /// Coordinates the residuals are measured in.
    pub residual_space: &'static str,
    pub n_points: usize,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.params.get(name).or_else(|| self.derived.get(name)).map(|p| p.value)
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.params.get(name).or_else(|| self.derived.get(name)).and_then(|p| p.std_error)
    }
}

struct Line {
    slope: f64,
    intercept: f64,
    se_slope: Option<f64>,
    se_intercept: Option<f64>,
    rms: f64,
}

fn ols_line(x: &[f64], y: &[f64]) -> Result<Line> {
    let n = x.len();
    let nf = n as f64;
    let xm = x.iter().sum::<f64>() / nf;
    let ym = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - xm).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - xm) * (b - ym)).sum();
    let spread = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(sxx > (1e-12 * spread).powi(2) * nf) {
        return Err(Error::Rank("abscissae are degenerate; slope is undetermined".into()));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let ssr: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let (se_slope, se_intercept) = if n > 2 {
        let s2 = ssr / (nf - 2.0);
        (Some((s2 / sxx).sqrt()), Some((s2 * (1.0 / nf + xm * xm / sxx)).sqrt()))
    } else {
        (None, None)
    };
    Ok(Line {
        slope,
        intercept,
        se_slope,
        se_intercept,
        rms: (ssr / nf).sqrt(),
    })
}

fn check_points(points: &[(f64, f64)], min: usize) -> Result<()> {
    if points.len() < min {
        return Err(Error::Rank(format!("need at least {min} points, got {}", points.len())));
    }
    if let Some(i) = points.iter().position(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::domain(format!("point {i} is not finite")));
    }
    Ok(())
}

fn param(value: f64, std_error: Option<f64>, unit: &'static str) -> FitParam {
    FitParam { value, std_error, unit }
}

const NO_DOF: &str = "no residual degrees of freedom: exact interpolation, standard errors undefined";

/// ln η = ln η₀ − 4 t₂₃/T₂. Points are (t₂₃ in s, η).
pub fn fit_exponential_decay(points: &[(f64, f64)]) -> Result<FitResult> {
    check_points(points, 2)?;
    if let Some(i) = points.iter().position(|p| !(p.1 > 0.0)) {
        return Err(Error::domain(format!("efficiency at point {i} is not positive ({})", points[i].1)));
    }
    let x: Vec<f64> = points.iter().map(|p| p.0).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let l = ols_line(&x, &y)?;
    let mut warnings = Vec::new();
    if points.len() == 2 {
        warnings.push(NO_DOF.to_string());
    }
    if l.slope >= 0.0 {
        warnings.push(format!("efficiency does not decay with t23 (slope {:e} s⁻¹); T2 is unphysical", l.slope));
    }
    let t2 = -4.0 / l.slope;
    let eta0 = l.intercept.exp();
    let mut params = BTreeMap::new();
    params.insert("eta0".into(), param(eta0, l.se_intercept.map(|s| eta0 * s), "1"));
    params.insert(
        "T2".into(),
        param(to_us(t2), l.se_slope.map(|s| to_us(4.0 * s / (l.slope * l.slope))), "us"),
    );
    Ok(FitResult {
        model: ModelKind::Decay,
        params,
        derived: BTreeMap::new(),
        residual_rms: l.rms,
        residual_space: "ln eta",
        n_points: points.len(),
        warnings,
    })
}

/// Fixed quantities of the bandwidth fit, taken from a prior decay fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsdNuisance {
    pub eta0: f64,
    pub t2_at_ref: f64,
    pub b_ref: AngularFrequency,
    pub rabi: AngularFrequency,
}

impl Default for IsdNuisance {
    /// η₀ = 34 %, T₂ = 138 µs at 800 kHz, Ω₀ = 2π × 800 kHz.
    fn default() -> Self {
        IsdNuisance {
            eta0: 0.34,
            t2_at_ref: 138e-6,
            b_ref: AngularFrequency::from_khz(800.0),
            rabi: AngularFrequency::from_khz(800.0),
        }
    }
}

/// One-parameter fit of κ in ln η(B). Points are (B in rad/s, η).
pub fn fit_isd_quadratic(points: &[(f64, f64)], fixed: &IsdNuisance) -> Result<FitResult> {
    check_points(points, 1)?;
    if let Some(i) = points.iter().position(|p| !(p.1 > 0.0)) {
        return Err(Error::domain(format!("efficiency at point {i} is not positive ({})", points[i].1)));
    }
    if !(fixed.eta0 > 0.0 && fixed.t2_at_ref > 0.0 && fixed.rabi.rad_per_s() > 0.0) {
        return Err(Error::config("eta0/t2_ref/rabi", "fixed parameters must be positive"));
    }
    let c = 64.0 * PI / fixed.rabi.rad_per_s().powi(2);
    let bref = fixed.b_ref.rad_per_s();
    // y = κ x with κ in s⁻¹·Hz⁻¹
    let (x, y): (Vec<f64>, Vec<f64>) = points
        .iter()
        .map(|&(b, eta)| {
            let x = -c * b * (b - bref) / (2.0 * PI);
            let y = eta.ln() - fixed.eta0.ln() + c * b / fixed.t2_at_ref;
            (x, y)
        })
        .unzip();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    if !(sxx > 0.0) {
        return Err(Error::Rank("no point away from B = 0 and B = B_ref; kappa is undetermined".into()));
    }
    let k = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / sxx;
    let ssr: f64 = x.iter().zip(&y).map(|(a, b)| (b - k * a).powi(2)).sum();
    let n = points.len();
    let se = (n > 1).then(|| (ssr / (n as f64 - 1.0) / sxx).sqrt());
    let mut warnings = Vec::new();
    if n == 1 {
        warnings.push(NO_DOF.to_string());
    }
    if k < 0.0 {
        warnings.push(format!("best-fit kappa is negative ({:.4} s⁻¹·kHz⁻¹), unphysical", k * 1e3));
    }
    let kappa = IsdCoefficient::from_per_s_per_hz(k);
    let inv = 1.0 / fixed.t2_at_ref - kappa.dephasing_rate(fixed.b_ref);
    let mut derived = BTreeMap::new();
    if inv > 0.0 {
        let t20 = 1.0 / inv;
        // dT₂⁰/dκ = T₂⁰² B_ref/2π
        derived.insert(
            "T2_zero".into(),
            param(to_us(t20), se.map(|s| to_us(t20 * t20 * fixed.b_ref.hz() * s)), "us"),
        );
    } else {
        warnings.push("kappa exceeds the reference dephasing rate; T2_zero is undefined".into());
    }
    let mut params = BTreeMap::new();
    params.insert("kappa".into(), param(kappa.per_s_per_khz(), se.map(|s| s * 1e3), "s^-1.kHz^-1"));
    Ok(FitResult {
        model: ModelKind::Isd,
        params,
        derived,
        residual_rms: (ssr / n as f64).sqrt(),
        residual_space: "ln eta",
        n_points: n,
        warnings,
    })
}

/// 1/T₂ = 1/T₂⁰ + κ B/2π. Points are (scrambler bandwidth in rad/s, 1/T₂ in s⁻¹).
pub fn fit_scrambler_linear(points: &[(f64, f64)]) -> Result<FitResult> {
    check_points(points, 2)?;
    let x: Vec<f64> = points.iter().map(|p| AngularFrequency::from_rad_per_s(p.0).hz()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let l = ols_line(&x, &y)?;
    let mut warnings = Vec::new();
    if points.len() == 2 {
        warnings.push(NO_DOF.to_string());
    }
    if !points.iter().any(|p| p.0 == 0.0) {
        warnings.push("no scrambler-off point (B = 0); intercept is extrapolated".into());
    }
    if l.slope < 0.0 {
        warnings.push("negative ISD slope, unphysical".into());
    }
    let mut params = BTreeMap::new();
    params.insert("inv_T2_zero".into(), param(l.intercept, l.se_intercept, "s^-1"));
    params.insert("kappa_ind".into(), param(l.slope * 1e3, l.se_slope.map(|s| s * 1e3), "s^-1.kHz^-1"));
    let mut derived = BTreeMap::new();
    if l.intercept > 0.0 {
        derived.insert(
            "T2_zero".into(),
            param(
                to_us(1.0 / l.intercept),
                l.se_intercept.map(|s| to_us(s / (l.intercept * l.intercept))),
                "us",
            ),
        );
    }
    Ok(FitResult {
        model: ModelKind::Scrambler,
        params,
        derived,
        residual_rms: l.rms,
        residual_space: "1/T2 (s^-1)",
        n_points: points.len(),
        warnings,
    })
}

// ---------------------------------------------------------------------------
// Synthetic data

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum SyntheticModel {
    Decay { eta0: f64, t2: f64 },
    Scrambler { t2_zero: f64, kappa: IsdCoefficient },
    Isd { fixed: IsdNuisance, kappa: IsdCoefficient },
}

impl SyntheticModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            SyntheticModel::Decay { .. } => ModelKind::Decay,
            SyntheticModel::Scrambler { .. } => ModelKind::Scrambler,
            SyntheticModel::Isd { .. } => ModelKind::Isd,
        }
    }

    /// Noiseless model value at abscissa `x` (t₂₃ in s, or B in rad/s).
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            SyntheticModel::Decay { eta0, t2 } => efficiency_from_eta0(eta0, x, t2),
            SyntheticModel::Scrambler { t2_zero, kappa } => 1.0 / t2_of_bandwidth(t2_zero, kappa, AngularFrequency(x)),
            SyntheticModel::Isd { fixed, kappa } => efficiency_with_isd_calibrated(
                fixed.eta0,
                AngularFrequency(x),
                fixed.rabi,
                fixed.t2_at_ref,
                fixed.b_ref,
                kappa,
            ),
        }
    }

    /// Fit this model's family to `points`.
    pub fn fit(&self, points: &[(f64, f64)]) -> Result<FitResult> {
        match self {
            SyntheticModel::Decay { .. } => fit_exponential_decay(points),
            SyntheticModel::Scrambler { .. } => fit_scrambler_linear(points),
            SyntheticModel::Isd { fixed, .. } => fit_isd_quadratic(points, fixed),
        }
    }

    /// Truth values under the names the fit reports.
    pub fn truth(&self) -> Vec<(&'static str, f64)> {
        match *self {
            SyntheticModel::Decay { eta0, t2 } => vec![("eta0", eta0), ("T2", to_us(t2))],
            SyntheticModel::Scrambler { t2_zero, kappa } => {
                vec![("inv_T2_zero", 1.0 / t2_zero), ("kappa_ind", kappa.per_s_per_khz())]
            }
            SyntheticModel::Isd { kappa, .. } => vec![("kappa", kappa.per_s_per_khz())],
        }
    }
}

/// Model values on `grid` with Gaussian noise: multiplicative on η, additive
/// on 1/T₂ with σ = noise_pct % of the mean model value.
pub fn generate_synthetic(model: &SyntheticModel, grid: &[f64], noise_pct: f64, seed: u64) -> Result<Vec<(f64, f64)>> {
    if grid.is_empty() {
        return Err(Error::config("grid", "synthetic grid is empty"));
    }
    if !(noise_pct >= 0.0) {
        return Err(Error::config("noise_pct", "must be ≥ 0"));
    }
    let sigma = noise_pct / 100.0;
    let clean: Vec<f64> = grid.iter().map(|&x| model.eval(x)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let noisy: Vec<f64> = match model {
        SyntheticModel::Scrambler { .. } => {
            let scale = sigma * clean.iter().sum::<f64>() / clean.len() as f64;
            clean.iter().map(|v| v + scale * normal()).collect()
        }
        _ => clean.iter().map(|v| v * (1.0 + sigma * normal())).collect(),
    };
    Ok(grid.iter().copied().zip(noisy).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coverage {
    pub name: String,
    pub truth: f64,
    pub mean_estimate: f64,
    /// Fraction of seeds with |estimate − truth| ≤ k σ̂.
    pub fraction_within: f64,
}

/// Fit `n_seeds` synthetic datasets (seeds `first_seed..`) and report how often
/// each parameter lands within `k_sigma` of its standard error. Results do not
/// depend on the thread count.
pub fn monte_carlo_coverage(
    model: &SyntheticModel,
    grid: &[f64],
    noise_pct: f64,
    first_seed: u64,
    n_seeds: usize,
    k_sigma: f64,
) -> Result<Vec<Coverage>> {
    let fits: Vec<FitResult> = (0..n_seeds as u64)
        .into_par_iter()
        .map(|s| model.fit(&generate_synthetic(model, grid, noise_pct, first_seed + s)?))
        .collect::<Result<_>>()?;
    model
        .truth()
        .into_iter()
        .map(|(name, truth)| {
            let mut hits = 0usize;
            let mut sum = 0.0;
            for f in &fits {
                let v = f.value(name).ok_or_else(|| Error::domain(format!("fit lacks parameter {name}")))?;
                let se = f.std_error(name).unwrap_or(f64::NAN);
                sum += v;
                if (v - truth).abs() <= k_sigma * se {
                    hits += 1;
                }
            }
            Ok(Coverage {
                name: name.to_string(),
                truth,
                mean_estimate: sum / fits.len() as f64,
                fraction_within: hits as f64 / fits.len() as f64,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// CSV datasets in laboratory units

/// Read (x, y) points, converting t₂₃ µs → s and B kHz → rad/s.
pub fn read_dataset_csv<R: Read>(kind: ModelKind, r: R) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let want = kind.columns();
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::config(name, format!("missing CSV column '{name}' (found: {})", headers.iter().collect::<Vec<_>>().join(","))))
    };
    let (ix, iy) = (col(want[0])?, col(want[1])?);
    let mut points = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize, name: &str| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::config(format!("row {}.{name}", line + 1), "not a number"))
        };
        let x = parse(ix, want[0])?;
        let y = parse(iy, want[1])?;
        let x = match kind {
            ModelKind::Decay => us(x),
            ModelKind::Scrambler | ModelKind::Isd => AngularFrequency::from_khz(x).rad_per_s(),
        };
        points.push((x, y));
    }
    Ok(points)
}

pub fn write_dataset_csv<W: Write>(kind: ModelKind, points: &[(f64, f64)], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(kind.columns())?;
    for &(x, y) in points {
        let x = match kind {
            ModelKind::Decay => to_us(x),
            ModelKind::Scrambler | ModelKind::Isd => AngularFrequency(x).khz(),
        };
        out.write_record([format!("{x}"), format!("{y:.12e}")])?;
    }
    out.flush()?;
    Ok(())
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}
