//! Grid arguments: `start:stop:step[unit]` or comma lists `a,b,c[unit]`.

/// Unit suffixes accepted on frequency grids, as multiples of 1 Hz.
const FREQ_UNITS: [(&str, f64); 4] = [("ghz", 1e9), ("mhz", 1e6), ("khz", 1e3), ("hz", 1.0)];

/// Parse an angle grid in degrees.
pub fn parse_angles(s: &str) -> Result<Vec<f64>, String> {
    let v = parse_numbers(s.trim())?;
    if let Some(bad) = v.iter().find(|t| !(0.0..=180.0).contains(*t)) {
        return Err(format!("angle {bad} outside [0, 180] degrees"));
    }
    Ok(v)
}

/// Parse a frequency grid. Bare numbers are in `default_unit_hz`; values are
/// returned in units of `out_unit_hz`.
pub fn parse_frequencies(s: &str, default_unit_hz: f64, out_unit_hz: f64) -> Result<Vec<f64>, String> {
    let t = s.trim();
    let lower = t.to_ascii_lowercase();
    let (body, unit) = FREQ_UNITS
        .iter()
        .find(|(suffix, _)| lower.ends_with(suffix))
        .map(|(suffix, scale)| (&t[..t.len() - suffix.len()], *scale))
        .unwrap_or((t, default_unit_hz));
    let v = parse_numbers(body.trim())?;
    if let Some(bad) = v.iter().find(|f| !(**f > 0.0)) {
        return Err(format!("frequency {bad} must be positive"));
    }
    Ok(v.into_iter().map(|f| f * unit / out_unit_hz).collect())
}

fn parse_numbers(s: &str) -> Result<Vec<f64>, String> {
    if s.is_empty() {
        return Err("empty grid".into());
    }
    let num = |x: &str| x.trim().parse::<f64>().map_err(|_| format!("'{x}' is not a number"));
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("range '{s}' must be start:stop:step"));
        }
        let (a, b, h) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(h > 0.0) || !(b >= a) || !a.is_finite() || !b.is_finite() {
            return Err(format!("range '{s}' needs step > 0 and stop ≥ start"));
        }
        // stop is included when it lies on the lattice up to rounding
        let n = ((b - a) / h * (1.0 + 1e-12) + 1e-9).floor() as usize + 1;
        Ok((0..n).map(|k| a + k as f64 * h).collect())
    } else {
        s.split(',').map(num).collect()
    }
}
