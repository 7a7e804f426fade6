//! Cancellation-safe exponential kernels shared by the UGKS flux coefficients.
//!
//! Every function is evaluated by its Taylor series for `z < SERIES_CUTOFF`
//! and by the closed form above it.

/// Below this argument the series are used.
pub const SERIES_CUTOFF: f64 = 0.5;
const TERMS: usize = 30;

/// `(1 - e^{-z}) / z`, equal to 1 at `z = 0`.
pub fn g1(z: f64) -> f64 {
    if z < SERIES_CUTOFF {
        1.0 - one_minus_g1(z)
    } else {
        -(-z).exp_m1() / z
    }
}

/// `1 - (1 - e^{-z}) / z = Σ_{k≥1} (-1)^{k+1} z^k / (k+1)!`.
pub fn one_minus_g1(z: f64) -> f64 {
    if z < SERIES_CUTOFF {
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 1..=TERMS {
            // term = z^k / (k+1)!
            term *= z / (k + 1) as f64;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            sum += sign * term;
        }
        sum
    } else {
        1.0 + (-z).exp_m1() / z
    }
}

/// `2 g1(z) - 1 - e^{-z} = Σ_{k≥2} (-1)^k (1-k) z^k / (k+1)!`.
///
/// Tends to `-1` as `z → ∞` and behaves like `-z²/6` near zero.
pub fn c3(z: f64) -> f64 {
    if z < SERIES_CUTOFF {
        let mut term = 0.5 * z; // z^{k-1} / k! at k = 2
        let mut sum = 0.0;
        for k in 2..=TERMS {
            term *= z / (k + 1) as f64; // z^k / (k+1)!
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * (1.0 - k as f64) * term;
        }
        sum
    } else {
        2.0 * g1(z) - 1.0 - (-z).exp()
    }
}

/// `g1(z) - e^{-z} = Σ_{k≥2} (-1)^{k+1} (1-k) z^{k-1} / k!`.
pub fn h2(z: f64) -> f64 {
    if z < SERIES_CUTOFF {
        let mut term = 1.0; // z^{k-1} / k! at k = 1
        let mut sum = 0.0;
        for k in 2..=TERMS {
            term *= z / k as f64;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            sum += sign * (1.0 - k as f64) * term;
        }
        sum
    } else {
        g1(z) - (-z).exp()
    }
}

/// `(1 - e^{-z} - z e^{-z} - z²/2) / z² = Σ_{k≥3} (-1)^{k+1} (1-k) z^{k-2} / k!`.
///
/// Tends to `-1/2` as `z → ∞`.
pub fn e3(z: f64) -> f64 {
    if z < SERIES_CUTOFF {
        let mut term = 0.5; // z^{k-2} / k! at k = 2
        let mut sum = 0.0;
        for k in 3..=TERMS {
            term *= z / k as f64;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            sum += sign * (1.0 - k as f64) * term;
        }
        sum
    } else {
        let e = (-z).exp();
        (-(-z).exp_m1() - z * e - 0.5 * z * z) / (z * z)
    }
}

/// `expm1(y) / y`, equal to 1 at `y = 0`.
pub fn phi1(y: f64) -> f64 {
    if y.abs() < 1e-8 {
        1.0 + 0.5 * y
    } else {
        y.exp_m1() / y
    }
}
