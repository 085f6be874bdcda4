//! Pairwise (cascade) summation.
//!
//! Plain left-to-right accumulation of n terms loses up to O(n) ulps;
//! pairwise summation reduces that to O(log n) while staying deterministic,
//! which matters for the million-point quadratures used by the inner
//! products.

use num_complex::Complex64;

/// Sums a slice of doubles pairwise.
pub fn pairwise(values: &[f64]) -> f64 {
    const BASE: usize = 32;
    if values.len() <= BASE {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise(&values[..mid]) + pairwise(&values[mid..])
}

/// Sums a slice of complex doubles pairwise.
pub fn pairwise_complex(values: &[Complex64]) -> Complex64 {
    const BASE: usize = 32;
    if values.len() <= BASE {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_complex(&values[..mid]) + pairwise_complex(&values[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_exact_sum_of_integers() {
        let values: Vec<f64> = (1..=1000).map(|k| k as f64).collect();
        assert_eq!(pairwise(&values), 500_500.0);
    }

    #[test]
    fn more_accurate_than_naive_on_harmonic_series() {
        // Compare against Kahan summation as the reference.
        let values: Vec<f64> = (1..=1_000_000).map(|k| 1.0 / k as f64).collect();
        let (mut kahan, mut c) = (0.0_f64, 0.0_f64);
        for &v in &values {
            let y = v - c;
            let t = kahan + y;
            c = (t - kahan) - y;
            kahan = t;
        }
        assert!((pairwise(&values) - kahan).abs() < 1e-12);
    }

    #[test]
    fn complex_variant_agrees_with_parts() {
        let values: Vec<Complex64> =
            (0..500).map(|k| Complex64::new(k as f64, -(k as f64) / 3.0)).collect();
        let re: Vec<f64> = values.iter().map(|z| z.re).collect();
        let im: Vec<f64> = values.iter().map(|z| z.im).collect();
        let s = pairwise_complex(&values);
        assert_eq!(s.re, pairwise(&re));
        assert_eq!(s.im, pairwise(&im));
    }
}
