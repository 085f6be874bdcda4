//! Gaussian quadrature: classical 1-D rules and deterministic tensor-product
//! integration over boxes.
//!
//! Nodes and weights come from the Golub-Welsch construction: the nodes of an
//! n-point rule are the eigenvalues of the n x n Jacobi matrix of the
//! orthogonal-polynomial recurrence, and the weights are `mu0 * v[0]^2` where
//! `v` is the normalized eigenvector and `mu0` the total weight-function
//! mass. The multi-dimensional integrator evaluates tensor grids in a fixed
//! order (parallel over the first axis, pairwise reduction), so results are
//! bit-for-bit reproducible.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::Result;
use crate::numerics::sum::pairwise_complex;
use crate::numerics::tridiag;

/// Nodes (ascending) and weights of the n-point Gauss-Legendre rule on
/// `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature order must be at least 1");
    // Legendre recurrence: b_k = k / sqrt(4 k^2 - 1), mu0 = 2.
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    golub_welsch(&diag, &off, 2.0).expect("Legendre Jacobi matrix is well posed")
}

/// Nodes (ascending) and weights of the n-point Gauss-Hermite rule with
/// weight `exp(-x^2)` on the whole line.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature order must be at least 1");
    // Hermite recurrence: b_k = sqrt(k / 2), mu0 = sqrt(pi).
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect();
    golub_welsch(&diag, &off, std::f64::consts::PI.sqrt())
        .expect("Hermite Jacobi matrix is well posed")
}

fn golub_welsch(diag: &[f64], off: &[f64], mu0: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let nodes = tridiag::all_eigenvalues(diag, off)?;
    let mut weights = Vec::with_capacity(nodes.len());
    for &x in &nodes {
        let v = tridiag::eigenvector_for(diag, off, x)?;
        weights.push(mu0 * v[0] * v[0]);
    }
    Ok((nodes, weights))
}

/// Kahan-compensated complex accumulator (deterministic, order-preserving).
#[derive(Default, Clone, Copy)]
struct KahanComplex {
    sum: Complex64,
    carry: Complex64,
}

impl KahanComplex {
    fn add(&mut self, value: Complex64) {
        let y = value - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Integrates `f` over the axis-aligned box `[lo, hi]` with an `order`-point
/// Gauss-Legendre rule per axis.
///
/// Deterministic: the grid is evaluated in lexicographic order with the
/// outermost axis parallelized and partial sums combined pairwise.
pub fn integrate_box<F>(f: &F, lo: &[f64], hi: &[f64], order: usize) -> Complex64
where
    F: Fn(&[f64]) -> Complex64 + Sync,
{
    let dim = lo.len();
    assert_eq!(dim, hi.len(), "box bounds must have equal dimensions");
    assert!(dim >= 1, "integration box must have at least one axis");
    let (t, w) = gauss_legendre(order);
    let mid: Vec<f64> = lo.iter().zip(hi).map(|(&a, &b)| 0.5 * (a + b)).collect();
    let half: Vec<f64> = lo.iter().zip(hi).map(|(&a, &b)| 0.5 * (b - a)).collect();
    let volume_scale: f64 = half.iter().product();

    let partials: Vec<Complex64> = (0..order)
        .into_par_iter()
        .map(|i0| {
            let mut x = vec![0.0; dim];
            x[0] = mid[0] + half[0] * t[i0];
            if dim == 1 {
                return f(&x) * w[i0];
            }
            // Odometer over the remaining axes, innermost fastest.
            let mut idx = vec![0usize; dim - 1];
            let mut acc = KahanComplex::default();
            loop {
                let mut weight = w[i0];
                for (k, &j) in idx.iter().enumerate() {
                    x[k + 1] = mid[k + 1] + half[k + 1] * t[j];
                    weight *= w[j];
                }
                acc.add(f(&x) * weight);
                // Advance the odometer.
                let mut k = dim - 1;
                loop {
                    k -= 1;
                    idx[k] += 1;
                    if idx[k] < order {
                        break;
                    }
                    idx[k] = 0;
                    if k == 0 {
                        return acc.sum;
                    }
                }
            }
        })
        .collect();
    pairwise_complex(&partials) * volume_scale
}

/// Two-level integration: evaluates at `order_lo` and `order_hi` and returns
/// the fine value together with `|fine - coarse|` as the error estimate.
pub fn integrate_box_two_level<F>(
    f: &F,
    lo: &[f64],
    hi: &[f64],
    order_lo: usize,
    order_hi: usize,
) -> (Complex64, f64)
where
    F: Fn(&[f64]) -> Complex64 + Sync,
{
    let coarse = integrate_box(f, lo, hi, order_lo);
    let fine = integrate_box(f, lo, hi, order_hi);
    (fine, (fine - coarse).norm())
}
