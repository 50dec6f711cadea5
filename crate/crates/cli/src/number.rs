//! Locale-free number text: `%g`-style output with 6 significant digits.

/// Formats like C's `%g`: 6 significant digits, trailing zeros dropped,
/// exponent form below 1e-4 and from 1e6 on.
pub fn fmt_g6(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    // Round to 6 significant digits first; the exponent can move.
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Parses a number written by [`fmt_g6`] or any plain decimal.
pub fn parse_f64(s: &str) -> Option<f64> {
    s.trim().parse().ok()
}

/// Value after a write/read cycle through [`fmt_g6`].
pub fn round_trip(v: f64) -> f64 {
    parse_f64(&fmt_g6(v)).unwrap_or(v)
}
