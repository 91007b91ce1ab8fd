//! Decimal formatting shared by the on-disk formats.

/// Formats `value` with 17 significant digits in scientific notation.
///
/// 17 significant digits are enough for any `f64` to survive a
/// decimal round-trip bit for bit.
pub fn sig17(value: f64) -> String {
    format!("{value:.16e}")
}
