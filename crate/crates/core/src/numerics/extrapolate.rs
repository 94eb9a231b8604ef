//! Polynomial (Richardson/Neville) extrapolation of η-sequences to η → 0.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub value: f64,
    /// |highest-order estimate − next-lower-order estimate|.
    pub spread: f64,
    /// |f(η_last) − f(η_prev)| of the raw data.
    pub last_increment: f64,
    /// Set when `spread > 10 * last_increment`.
    pub unstable: bool,
}

/// Extrapolates samples `(h_k, f_k)` to `h = 0` with the interpolating
/// polynomial through all points.
pub fn richardson_to_zero(h: &[f64], f: &[f64]) -> Extrapolation {
    assert_eq!(h.len(), f.len());
    assert!(!h.is_empty());
    let n = h.len();
    if n == 1 {
        return Extrapolation {
            value: f[0],
            spread: 0.0,
            last_increment: 0.0,
            unstable: false,
        };
    }
    // Neville tableau evaluated at 0; keep the last two diagonal entries.
    let mut p = f.to_vec();
    let mut previous_top = f[n - 1];
    for level in 1..n {
        previous_top = p[n - 1];
        for i in (level..n).rev() {
            let hi = h[i - level];
            let hj = h[i];
            p[i] = (hi * p[i] - hj * p[i - 1]) / (hi - hj);
        }
    }
    let value = p[n - 1];
    let spread = (value - previous_top).abs();
    let last_increment = (f[n - 1] - f[n - 2]).abs();
    Extrapolation {
        value,
        spread,
        last_increment,
        unstable: spread > 10.0 * last_increment,
    }
}
