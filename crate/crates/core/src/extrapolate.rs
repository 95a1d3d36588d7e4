//! Polynomial (Neville) extrapolation to zero, the general form of Richardson
//! extrapolation for arbitrary abscissas.

/// Result of extrapolating a sequence to `h = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrapolation {
    pub value: f64,
    /// Difference between the two highest-order estimates.
    pub error_estimate: f64,
}

/// Extrapolate samples `(h_i, y_i)` to `h = 0` with the full Neville tableau.
///
/// Panics if `hs` and `ys` differ in length or are empty.
pub fn neville_to_zero(hs: &[f64], ys: &[f64]) -> Extrapolation {
    assert_eq!(hs.len(), ys.len(), "abscissa/ordinate length mismatch");
    assert!(!hs.is_empty(), "need at least one sample");
    let m = hs.len();
    let mut table = ys.to_vec();
    let mut second = table[m - 1];
    for level in 1..m {
        if level == m - 1 {
            second = table[1];
        }
        for i in 0..(m - level) {
            let (hi, hj) = (hs[i], hs[i + level]);
            table[i] = (hj * table[i] - hi * table[i + 1]) / (hj - hi);
        }
    }
    let top = table[0];
    Extrapolation { value: top, error_estimate: (top - second).abs() }
}

/// Richardson extrapolation of a sequence computed at `h_0 r^{-k}` for an
/// error expansion in powers of `h^order`.
pub fn richardson(values: &[f64], ratio: f64, order: i32) -> Extrapolation {
    let hs: Vec<f64> = (0..values.len()).map(|k| ratio.powi(-(k as i32) * order)).collect();
    neville_to_zero(&hs, values)
}
