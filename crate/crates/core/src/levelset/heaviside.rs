use std::f64::consts::PI;

/// Smoothed step `½(1 + (2/π)·atan(φ/ε))`.
#[inline]
pub fn heaviside(phi: f64, epsilon: f64) -> f64 {
    0.5 * (1.0 + (2.0 / PI) * (phi / epsilon).atan())
}

/// Derivative of [`heaviside`]: `(1/π)·ε/(ε² + φ²)`.
#[inline]
pub fn dirac(phi: f64, epsilon: f64) -> f64 {
    epsilon / (PI * (epsilon * epsilon + phi * phi))
}

/// Sharp step used for the final labeling: inside iff `φ ≥ 0`.
#[inline]
pub fn inside(phi: f64) -> bool {
    phi >= 0.0
}
