//! Number formatting shared by every CSV writer.

/// Decimal scientific notation with 17 significant digits, enough to
/// round-trip any `f64`. Non-finite values print as `nan`, `inf`, `-inf`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

/// As [`fmt_f64`], with `None` printed as an empty field.
pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}
