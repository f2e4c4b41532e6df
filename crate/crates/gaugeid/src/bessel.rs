//! Bessel function `J0` in double precision.

use std::f64::consts::PI;

/// `J0(x)` for real `x`.
///
/// For `|x| < 30` the integral `J0(x) = (1/π) ∫₀^π cos(x sin t) dt` is
/// evaluated with the trapezoid rule, which converges geometrically for this
/// periodic analytic integrand. Larger arguments use the Hankel asymptotic
/// expansion.
pub fn j0(x: f64) -> f64 {
    let x = x.abs();
    if x < 30.0 {
        let m = 64usize;
        let mut s = 0.0;
        for k in 0..m {
            let t = PI * (k as f64 + 0.5) / m as f64;
            s += (x * t.sin()).cos();
        }
        s / m as f64
    } else {
        // t_k = Π (2i−1)² / (k! (8x)^k); even terms build P, odd terms build −Q.
        let (mut p, mut q, mut t) = (1.0, 0.0, 1.0);
        for k in 1..16 {
            let odd = (2 * k - 1) as f64;
            t *= odd * odd / (k as f64 * 8.0 * x);
            let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
            if k % 2 == 1 {
                q -= sign * t;
            } else {
                p += sign * t;
            }
            if t < 1e-17 {
                break;
            }
        }
        let chi = x - PI / 4.0;
        (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        let cases = [
            (0.0, 1.0),
            (1.0, 0.765_197_686_557_966_6),
            (2.404_825_557_695_773, 0.0),
            (10.0, -0.245_935_764_451_348_3),
            (29.5, -0.133_147_858_298_398_26),
            (35.0, -0.126_845_682_756_312_72),
            (100.0, 0.019_985_850_304_223_33),
        ];
        for (x, v) in cases {
            assert!((j0(x) - v).abs() < 1e-13, "J0({x}) = {} expected {v}", j0(x));
        }
    }
}
