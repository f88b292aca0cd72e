//! Orientation-resolved κ, efficiency and time-bandwidth product maps.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::isd::{efficiency_with_isd, t2_of_bandwidth};
use crate::material::{GTensor, MaterialParams};
use crate::units::constants::{HBAR, MU_B};
use crate::units::{AngularFrequency, IsdCoefficient};

/// Reference point that splits a measured κ into magnetic and electric parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KappaCalibration {
    pub theta_cal_deg: f64,
    pub kappa_total_cal: IsdCoefficient,
    pub kappa_mag_cal: IsdCoefficient,
}

impl Default for KappaCalibration {
    /// κ = 0.8 s⁻¹·kHz⁻¹ measured at 135°, of which 0.33 is magnetic.
    fn default() -> Self {
        KappaCalibration {
            theta_cal_deg: 135.0,
            kappa_total_cal: IsdCoefficient::from_per_s_per_khz(0.8),
            kappa_mag_cal: IsdCoefficient::from_per_s_per_khz(0.33),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AngleKappa {
    pub kappa_mag: IsdCoefficient,
    pub kappa_el: IsdCoefficient,
    pub kappa_total: IsdCoefficient,
}

/// |Δμ_mag|(Θ): from the g tensors when both are given, else from the table.
pub fn delta_mu_mag_at(m: &MaterialParams, theta_deg: f64) -> Result<f64> {
    match (&m.g_ground, &m.g_excited) {
        (Some(g), Some(e)) => effective_moment_difference(g, e, theta_deg),
        _ => m.delta_mu_mag_table.interpolate(theta_deg),
    }
}

/// κ_mag scales as |Δμ_mag(Θ)|²; κ_el is the angle-independent remainder.
pub fn kappa_of_angle(m: &MaterialParams, theta_deg: f64, cal: &KappaCalibration) -> Result<AngleKappa> {
    let kappa_el = cal.kappa_total_cal - cal.kappa_mag_cal;
    if kappa_el.per_s_per_hz() < 0.0 {
        return Err(Error::config(
            "calibration.kappa_mag_cal",
            format!(
                "exceeds kappa_total_cal ({} > {} s⁻¹·kHz⁻¹), electric part would be negative",
                cal.kappa_mag_cal.per_s_per_khz(),
                cal.kappa_total_cal.per_s_per_khz()
            ),
        ));
    }
    let reference = delta_mu_mag_at(m, cal.theta_cal_deg)?;
    let here = delta_mu_mag_at(m, theta_deg)?;
    let kappa_mag = if reference == 0.0 {
        if cal.kappa_mag_cal.per_s_per_hz() != 0.0 {
            return Err(Error::config(
                "calibration.theta_cal_deg",
                "magnetic moment difference vanishes at the calibration angle",
            ));
        }
        IsdCoefficient::ZERO
    } else {
        cal.kappa_mag_cal * (here / reference).powi(2)
    };
    Ok(AngleKappa {
        kappa_mag,
        kappa_el,
        kappa_total: kappa_mag + kappa_el,
    })
}

fn check_tensor(g: &GTensor, name: &str) -> Result<Matrix3<f64>> {
    let m = Matrix3::from_fn(|i, j| g[i][j]);
    let scale = m.amax().max(f64::MIN_POSITIVE);
    if (m - m.transpose()).amax() > 1e-9 * scale {
        return Err(Error::domain(format!("{name} tensor is not symmetric")));
    }
    let eig = SymmetricEigen::new(m);
    if eig.eigenvalues.iter().any(|&l| l < -1e-9 * scale) {
        return Err(Error::domain(format!(
            "{name} tensor is not positive semidefinite (eigenvalues {:?})",
            eig.eigenvalues.as_slice()
        )));
    }
    Ok(m)
}

/// (μ_B/2ħ)·| ‖g_e B̂‖ − ‖g_g B̂‖ | for a unit field direction `dir` in the
/// (D1, D2, b) frame. Directions off the (D1, D2) plane are rejected.
pub fn effective_moment_difference_along(g_ground: &GTensor, g_excited: &GTensor, dir: [f64; 3]) -> Result<f64> {
    let gg = check_tensor(g_ground, "ground-state g")?;
    let ge = check_tensor(g_excited, "excited-state g")?;
    let d = Vector3::from(dir);
    let n = d.norm();
    if !(n > 0.0) {
        return Err(Error::domain("field direction must be non-zero"));
    }
    let d = d / n;
    if d.z.abs() > 1e-12 {
        return Err(Error::domain("only fields in the (D1, D2) plane are supported"));
    }
    Ok(MU_B / (2.0 * HBAR) * ((ge * d).norm() - (gg * d).norm()).abs())
}

/// Moment difference for B̂ = (cos Θ, sin Θ, 0), Θ anticlockwise from D1.
pub fn effective_moment_difference(g_ground: &GTensor, g_excited: &GTensor, theta_deg: f64) -> Result<f64> {
    if !(0.0..=180.0).contains(&theta_deg) {
        return Err(Error::domain(format!("field angle {theta_deg}° outside [0, 180]")));
    }
    let t = theta_deg.to_radians();
    effective_moment_difference_along(g_ground, g_excited, [t.cos(), t.sin(), 0.0])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AngleScan {
    pub thetas: Vec<f64>,
    pub kappa_el: IsdCoefficient,
    pub kappa_mag: Vec<IsdCoefficient>,
    pub t2_zero: Vec<f64>,
}

impl AngleScan {
    pub fn from_material(m: &MaterialParams, thetas: &[f64], cal: &KappaCalibration) -> Result<Self> {
        if thetas.is_empty() {
            return Err(Error::config("angles", "angle grid is empty"));
        }
        let mut kappa_mag = Vec::with_capacity(thetas.len());
        let mut t2_zero = Vec::with_capacity(thetas.len());
        let mut kappa_el = IsdCoefficient::ZERO;
        for &th in thetas {
            let k = kappa_of_angle(m, th, cal)?;
            kappa_el = k.kappa_el;
            kappa_mag.push(k.kappa_mag);
            t2_zero.push(m.t2_zero_table.interpolate(th)?);
        }
        Ok(AngleScan {
            thetas: thetas.to_vec(),
            kappa_el,
            kappa_mag,
            t2_zero,
        })
    }

    pub fn kappa_total(&self, i: usize) -> IsdCoefficient {
        self.kappa_mag[i] + self.kappa_el
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerformanceGrid {
    pub thetas: Vec<f64>,
    pub bandwidths: Vec<AngularFrequency>,
    /// Indexed [Θ][B].
    pub efficiency: Vec<Vec<f64>>,
    pub tbp: Vec<Vec<f64>>,
    pub t2_of_b: Vec<Vec<f64>>,
    pub kappa_total: Vec<IsdCoefficient>,
}

pub fn performance_map(
    scan: &AngleScan,
    bandwidths: &[AngularFrequency],
    eta0: f64,
    rabi: AngularFrequency,
) -> Result<PerformanceGrid> {
    if scan.thetas.is_empty() {
        return Err(Error::config("angles", "angle grid is empty"));
    }
    if bandwidths.is_empty() {
        return Err(Error::config("bandwidths", "bandwidth grid is empty"));
    }
    if scan.kappa_mag.len() != scan.thetas.len() || scan.t2_zero.len() != scan.thetas.len() {
        return Err(Error::domain("angle scan lists are not aligned"));
    }
    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..scan.thetas.len())
        .into_par_iter()
        .map(|i| {
            let k = scan.kappa_total(i);
            let t20 = scan.t2_zero[i];
            let mut eff = Vec::with_capacity(bandwidths.len());
            let mut tbp = Vec::with_capacity(bandwidths.len());
            let mut t2b = Vec::with_capacity(bandwidths.len());
            for &b in bandwidths {
                let t2 = t2_of_bandwidth(t20, k, b);
                eff.push(efficiency_with_isd(eta0, b, rabi, t20, k));
                tbp.push(t2 * b.hz());
                t2b.push(t2);
            }
            (eff, tbp, t2b)
        })
        .collect();
    let mut grid = PerformanceGrid {
        thetas: scan.thetas.clone(),
        bandwidths: bandwidths.to_vec(),
        efficiency: Vec::with_capacity(rows.len()),
        tbp: Vec::with_capacity(rows.len()),
        t2_of_b: Vec::with_capacity(rows.len()),
        kappa_total: (0..scan.thetas.len()).map(|i| scan.kappa_total(i)).collect(),
    };
    for (e, t, t2) in rows {
        grid.efficiency.push(e);
        grid.tbp.push(t);
        grid.t2_of_b.push(t2);
    }
    Ok(grid)
}

impl PerformanceGrid {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["theta_deg", "b_mhz", "efficiency", "tbp", "kappa_total", "t2_of_b_us"])?;
        for (i, th) in self.thetas.iter().enumerate() {
            for (j, b) in self.bandwidths.iter().enumerate() {
                out.write_record([
                    format!("{th}"),
                    format!("{:.6}", b.mhz()),
                    format!("{:.9e}", self.efficiency[i][j]),
                    format!("{:.6}", self.tbp[i][j]),
                    format!("{:.6}", self.kappa_total[i].per_s_per_khz()),
                    format!("{:.6}", self.t2_of_b[i][j] * 1e6),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}
