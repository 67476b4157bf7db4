//! Modified Bessel functions of the first kind and integer order.

use crate::error::{Error, Result};
use crate::numeric::{ln_factorial, log_sum_exp};

/// `ln I_k(z)` for `z >= 0` from the power series
/// `I_k(z) = Σ_p (z/2)^{2p+k} / (p! (p+k)!)`, summed in log space.
pub fn ln_bessel_i(k: u64, z: f64) -> f64 {
    if z == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let ln_half_z = (z / 2.0).ln();
    let q = (z / 2.0) * (z / 2.0);
    let kf = k as f64;
    let mut terms = Vec::with_capacity(64);
    let mut log_term = kf * ln_half_z - ln_factorial(k);
    let mut peak = log_term;
    let mut p = 0.0f64;
    loop {
        terms.push(log_term);
        peak = peak.max(log_term);
        // ratio of consecutive terms: (z/2)² / ((p+1)(p+k+1))
        let ratio = q / ((p + 1.0) * (p + kf + 1.0));
        log_term += ratio.ln();
        p += 1.0;
        // past the peak the ratios keep shrinking, so the rest is bounded geometrically
        if ratio < 1.0 && log_term < peak + (1e-17f64).ln() + (1.0 - ratio).ln() {
            break;
        }
    }
    log_sum_exp(&terms)
}

/// `I_k(z)`. Overflows to `+inf` beyond `z ≈ 713`; use [`ln_bessel_i`] or
/// [`bessel_i_scaled`] there.
pub fn bessel_i(k: u64, z: f64) -> f64 {
    ln_bessel_i(k, z).exp()
}

/// `e^{−z} I_k(z)`, finite for every `z >= 0`.
pub fn bessel_i_scaled(k: u64, z: f64) -> f64 {
    (ln_bessel_i(k, z) - z).exp()
}

/// Lower bound `exp(−k²/(2z)) / (2e⁴ (1+(k/z)²)^{1/4} √z)` on `e^{−z} I_k(z)`, valid for
/// `z > 8 √(1+(k/z)²)`.
pub fn bessel_lower_bound(k: u64, z: f64) -> Result<f64> {
    let kf = k as f64;
    let s = 1.0 + (kf / z) * (kf / z);
    if !(z > 8.0 * s.sqrt()) {
        return Err(Error::invalid(format!(
            "bessel_lower_bound needs z > 8 sqrt(1 + (k/z)^2); got k = {k}, z = {z}"
        )));
    }
    Ok((-kf * kf / (2.0 * z)).exp() / (2.0 * 4f64.exp() * s.powf(0.25) * z.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn reference_values() {
        assert_eq!(bessel_i(0, 0.0), 1.0);
        assert_eq!(bessel_i(3, 0.0), 0.0);
        // independent high-precision references
        assert!(rel(bessel_i(1, 2.0), 1.590_636_854_637_329_1) < 1e-14);
        assert!(rel(bessel_i(0, 1.0), 1.266_065_877_752_008_4) < 1e-14);
        assert!(rel(bessel_i(5, 10.0), 777.188_286_403_259_9) < 1e-13);
        assert!(rel(bessel_i_scaled(0, 100.0), 0.039_944_379_299_096_68) < 1e-12);
        assert!(rel(bessel_i_scaled(50, 1000.0), 0.003_613_581_892_594_122) < 1e-10);
    }

    #[test]
    fn recurrence_holds_on_grid() {
        for &z in &[0.3, 1.0, 4.5, 20.0, 150.0, 900.0] {
            for k in 1..40u64 {
                let (lo, mid, hi) = (bessel_i_scaled(k - 1, z), bessel_i_scaled(k, z), bessel_i_scaled(k + 1, z));
                if mid < 1e-280 {
                    continue;
                }
                let lhs = lo - hi;
                let rhs = 2.0 * k as f64 / z * mid;
                assert!(rel(lhs, rhs) < 1e-8, "k={k} z={z}");
            }
        }
    }

    #[test]
    fn monotone_in_order() {
        for &z in &[0.01, 0.5, 3.0, 40.0, 600.0] {
            for k in 0..60u64 {
                assert!(ln_bessel_i(k + 1, z) <= ln_bessel_i(k, z));
            }
        }
    }

    #[test]
    fn lower_bound_holds() {
        let v = bessel_lower_bound(0, 100.0).unwrap();
        assert!(rel(v, 1.0 / (2.0 * 4f64.exp() * 10.0)) < 1e-15);
        assert!(bessel_lower_bound(0, 8.0).is_err());
        for &z in &[8.5, 12.0, 50.0, 300.0, 2000.0] {
            for k in [0u64, 1, 3, 10, 40, 120] {
                if let Ok(b) = bessel_lower_bound(k, z) {
                    assert!(bessel_i_scaled(k, z) > b, "k={k} z={z}");
                }
            }
        }
    }
}
