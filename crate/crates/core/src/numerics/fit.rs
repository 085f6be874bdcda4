//! Small dense least-squares fits.
//!
//! The spectral experiments need two kinds of fits: a two-term power-law fit
//! `y = c2 x^2 + c4 x^4` for perturbative energy coefficients, and a
//! log-log straight-line fit for empirical convergence orders. Problems are
//! tiny (a handful of rows, 2-3 columns), so normal equations with Gaussian
//! elimination are plenty.

use crate::error::{Error, Result};

/// Solves the linear least-squares problem `min || A c - y ||` where `A` is
/// given row by row. Returns the coefficient vector `c`.
pub fn least_squares(rows: &[Vec<f64>], ys: &[f64]) -> Result<Vec<f64>> {
    if rows.is_empty() || rows.len() != ys.len() {
        return Err(Error::InvalidInput("least_squares: empty or mismatched rows".into()));
    }
    let k = rows[0].len();
    if rows.iter().any(|r| r.len() != k) {
        return Err(Error::InvalidInput("least_squares: ragged design matrix".into()));
    }
    if rows.len() < k {
        return Err(Error::InvalidInput(format!(
            "least_squares: {} rows cannot determine {} coefficients",
            rows.len(),
            k
        )));
    }
    // Normal equations: (A^T A) c = A^T y.
    let mut ata = vec![vec![0.0; k]; k];
    let mut aty = vec![0.0; k];
    for (row, &y) in rows.iter().zip(ys) {
        for i in 0..k {
            aty[i] += row[i] * y;
            for j in 0..k {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    solve_dense(&mut ata, &mut aty)?;
    Ok(aty)
}

/// In-place Gaussian elimination with partial pivoting for small systems.
fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Result<()> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty range");
        if a[pivot][col].abs() < f64::EPSILON * 1e3 {
            return Err(Error::InvalidInput("least_squares: singular normal equations".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            for j in col..n {
                a[row][j] -= f * a[col][j];
            }
            b[row] -= f * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = b[col];
        for j in (col + 1)..n {
            s -= a[col][j] * b[j];
        }
        b[col] = s / a[col][col];
    }
    Ok(())
}

/// Fits `y = slope * x + intercept` and returns `(slope, intercept)`.
pub fn straight_line(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x, 1.0]).collect();
    let c = least_squares(&rows, ys)?;
    Ok((c[0], c[1]))
}

/// Fits `ln|y| = p ln(x) + b` and returns the power `p` and prefactor
/// `exp(b)`. All `x` must be positive and all `y` nonzero.
pub fn power_law(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.iter().any(|&x| x <= 0.0) || ys.iter().any(|&y| y == 0.0 || !y.is_finite()) {
        return Err(Error::InvalidInput("power_law: requires x > 0 and finite nonzero y".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.abs().ln()).collect();
    let (p, b) = straight_line(&lx, &ly)?;
    Ok((p, b.exp()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn recovers_exact_quadratic_plus_quartic() {
        // y = 3 x^2 - 0.7 x^4 sampled exactly.
        let xs: [f64; 4] = [0.02, 0.03, 0.05, 0.08];
        let ys: Vec<f64> = xs.iter().map(|&x| 3.0 * x * x - 0.7 * x.powi(4)).collect();
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x * x, x.powi(4)]).collect();
        let c = least_squares(&rows, &ys).unwrap();
        assert_relative_eq!(c[0], 3.0, epsilon = 1e-9);
        assert_relative_eq!(c[1], -0.7, epsilon = 1e-6);
    }

    #[test]
    fn straight_line_on_noiseless_data() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let (slope, intercept) = straight_line(&xs, &ys).unwrap();
        assert_relative_eq!(slope, 2.0, epsilon = 1e-12);
        assert_relative_eq!(intercept, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn power_law_recovers_exponent() {
        let xs: [f64; 3] = [0.02, 0.04, 0.08];
        let ys: Vec<f64> = xs.iter().map(|&x| -2.5 * x.powf(3.0)).collect();
        let (p, pref) = power_law(&xs, &ys).unwrap();
        assert_relative_eq!(p, 3.0, epsilon = 1e-10);
        assert_relative_eq!(pref, 2.5, epsilon = 1e-9);
    }

    #[test]
    fn rejects_underdetermined_problems() {
        assert!(least_squares(&[vec![1.0, 2.0]], &[1.0]).is_err());
    }
}
