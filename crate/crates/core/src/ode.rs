//! Dormand–Prince 5(4) integrator with step-size control and the 4th-order
//! continuous extension, specialised to small fixed-size states.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the number of accepted plus rejected steps.
    pub max_steps: usize,
    /// Largest step, s. `None` for unbounded.
    pub max_step: Option<f64>,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            rtol: 1e-9,
            atol: 1e-11,
            max_steps: 2_000_000,
            max_step: None,
        }
    }
}

impl Tolerance {
    pub fn with_rtol(rtol: f64) -> Self {
        Tolerance {
            rtol,
            atol: rtol * 1e-2,
            ..Default::default()
        }
    }

    /// Same tolerances scaled down by `factor`.
    pub fn tighter(self, factor: f64) -> Self {
        Tolerance {
            rtol: self.rtol / factor,
            atol: self.atol / factor,
            ..self
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[inline]
fn axpy<const N: usize>(y: &[f64; N], terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += c * k[i];
        }
    }
    out
}

/// Integrate `dy/dt = rhs(t, y)` from `t0` to `t1`.
///
/// `sample_times` must be sorted and lie in `[t0, t1]`; `on_sample(index, y)`
/// is called once per entry, in order, with the dense-output state. Returns the
/// state at `t1`.
pub fn integrate<const N: usize, F, S>(
    rhs: F,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    tol: &Tolerance,
    sample_times: &[f64],
    mut on_sample: S,
) -> Result<([f64; N], Stats)>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    S: FnMut(usize, [f64; N]),
{
    let mut stats = Stats::default();
    let mut next_sample = 0;
    // samples sitting exactly on t0
    while next_sample < sample_times.len() && sample_times[next_sample] <= t0 {
        on_sample(next_sample, y0);
        next_sample += 1;
    }
    if t1 <= t0 {
        if t1 < t0 {
            return Err(Error::Integration {
                t: t0,
                h: 0.0,
                steps: 0,
                reason: format!("empty span: t1 = {t1:e} < t0 = {t0:e}"),
            });
        }
        return Ok((y0, stats));
    }

    let span = t1 - t0;
    let h_max = tol.max_step.unwrap_or(span).min(span);
    let mut t = t0;
    let mut y = y0;
    let mut k1 = rhs(t, &y);
    stats.evaluations += 1;

    let scale = |a: &[f64; N], b: &[f64; N], i: usize| tol.atol + tol.rtol * a[i].abs().max(b[i].abs());

    // initial step (Hairer's heuristic, first stage only)
    let mut h = {
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..N {
            let sc = scale(&y, &y, i);
            d0 += (y[i] / sc).powi(2);
            d1 += (k1[i] / sc).powi(2);
        }
        let (d0, d1) = ((d0 / N as f64).sqrt(), (d1 / N as f64).sqrt());
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 * span } else { 0.01 * d0 / d1 };
        h0.min(h_max)
    };

    let mut last_reject = false;
    loop {
        if stats.accepted + stats.rejected >= tol.max_steps {
            return Err(Error::Integration {
                t,
                h,
                steps: stats.accepted,
                reason: format!("exceeded {} steps", tol.max_steps),
            });
        }
        let done = t + h >= t1;
        if done {
            h = t1 - t;
        }
        if h <= 16.0 * f64::EPSILON * t.abs().max(span) {
            return Err(Error::Integration {
                t,
                h,
                steps: stats.accepted,
                reason: "step size underflow".into(),
            });
        }

        let k2 = rhs(t + C2 * h, &axpy(&y, &[(h * A21, &k1)]));
        let k3 = rhs(t + C3 * h, &axpy(&y, &[(h * A31, &k1), (h * A32, &k2)]));
        let k4 = rhs(
            t + C4 * h,
            &axpy(&y, &[(h * A41, &k1), (h * A42, &k2), (h * A43, &k3)]),
        );
        let k5 = rhs(
            t + C5 * h,
            &axpy(&y, &[(h * A51, &k1), (h * A52, &k2), (h * A53, &k3), (h * A54, &k4)]),
        );
        let k6 = rhs(
            t + h,
            &axpy(
                &y,
                &[(h * A61, &k1), (h * A62, &k2), (h * A63, &k3), (h * A64, &k4), (h * A65, &k5)],
            ),
        );
        let y_new = axpy(
            &y,
            &[(h * A71, &k1), (h * A73, &k3), (h * A74, &k4), (h * A75, &k5), (h * A76, &k6)],
        );
        let k7 = rhs(t + h, &y_new);
        stats.evaluations += 6;

        let mut err = 0.0;
        for i in 0..N {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            err += (e / scale(&y, &y_new, i)).powi(2);
        }
        let err = (err / N as f64).sqrt();
        if !err.is_finite() {
            return Err(Error::Integration {
                t,
                h,
                steps: stats.accepted,
                reason: "non-finite error estimate".into(),
            });
        }

        if err <= 1.0 {
            stats.accepted += 1;
            let t_new = if done { t1 } else { t + h };
            if next_sample < sample_times.len() && sample_times[next_sample] <= t_new {
                // continuous extension coefficients
                let mut r2 = [0.0; N];
                let mut r3 = [0.0; N];
                let mut r4 = [0.0; N];
                let mut r5 = [0.0; N];
                for i in 0..N {
                    let dy = y_new[i] - y[i];
                    let bspl = h * k1[i] - dy;
                    r2[i] = dy;
                    r3[i] = bspl;
                    r4[i] = dy - h * k7[i] - bspl;
                    r5[i] = h
                        * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                }
                while next_sample < sample_times.len() && sample_times[next_sample] <= t_new {
                    let s = ((sample_times[next_sample] - t) / h).clamp(0.0, 1.0);
                    let s1 = 1.0 - s;
                    let mut out = [0.0; N];
                    for i in 0..N {
                        out[i] = y[i] + s * (r2[i] + s1 * (r3[i] + s * (r4[i] + s1 * r5[i])));
                    }
                    on_sample(next_sample, out);
                    next_sample += 1;
                }
            }
            t = t_new;
            y = y_new;
            k1 = k7;
            if done {
                return Ok((y, stats));
            }
            let mut fac = 0.9 * err.max(1e-10).powf(-0.2);
            fac = fac.clamp(0.2, 10.0);
            if last_reject {
                fac = fac.min(1.0);
            }
            h = (h * fac).min(h_max);
            last_reject = false;
        } else {
            stats.rejected += 1;
            let fac = (0.9 * err.powf(-0.2)).max(0.2);
            h *= fac;
            last_reject = true;
        }
    }
}
