//! Local cubic interpolation on uniform grids.
//!
//! The spectral code tabulates eigenfunctions on uniform radial grids and
//! then integrates them against analytic basis functions with Gaussian
//! quadrature, which needs values between grid nodes. Four-point Lagrange
//! interpolation is O(h^4) accurate — well below the discretization error of
//! the eigenfunctions themselves.

/// Function values tabulated on a uniform grid `x_i = x0 + i h`.
#[derive(Debug, Clone)]
pub struct UniformGrid {
    x0: f64,
    h: f64,
    values: Vec<f64>,
}

impl UniformGrid {
    /// Wraps tabulated values. Requires `h > 0` and at least four nodes.
    pub fn new(x0: f64, h: f64, values: Vec<f64>) -> Self {
        assert!(h > 0.0 && values.len() >= 4, "UniformGrid needs h > 0 and >= 4 nodes");
        Self { x0, h, values }
    }

    /// Grid spacing.
    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Cubic Lagrange interpolation; returns 0 outside the tabulated range
    /// (the tabulated functions decay to zero at the grid ends).
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let t = (x - self.x0) / self.h;
        if t < 0.0 || t > (n - 1) as f64 {
            return 0.0;
        }
        // Choose a 4-node stencil [i0, i0+3] containing x, shifted inward at
        // the boundaries.
        let i = t.floor() as usize;
        let i0 = i.saturating_sub(1).min(n - 4);
        let s = t - i0 as f64; // position within the stencil, in [0, 3]
        let mut acc = 0.0;
        for (k, &v) in self.values[i0..i0 + 4].iter().enumerate() {
            let mut w = 1.0;
            for j in 0..4 {
                if j != k {
                    w *= (s - j as f64) / (k as f64 - j as f64);
                }
            }
            acc += w * v;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_on_cubics() {
        // Cubic polynomials are reproduced exactly by 4-point stencils.
        let f = |x: f64| 2.0 - x + 0.5 * x * x - 0.25 * x * x * x;
        let h = 0.1;
        let values: Vec<f64> = (0..50).map(|i| f(i as f64 * h)).collect();
        let grid = UniformGrid::new(0.0, h, values);
        for &x in &[0.0, 0.03, 1.234, 2.71, 4.9] {
            assert_relative_eq!(grid.eval(x), f(x), epsilon = 1e-12, max_relative = 1e-12);
        }
    }

    #[test]
    fn fourth_order_on_smooth_functions() {
        let f = |x: f64| (1.3 * x).sin();
        let err_for = |n: usize| {
            let h = 2.0 / (n as f64 - 1.0);
            let values: Vec<f64> = (0..n).map(|i| f(i as f64 * h)).collect();
            let grid = UniformGrid::new(0.0, h, values);
            (0..400)
                .map(|k| {
                    let x = 0.1 + 1.8 * k as f64 / 399.0;
                    (grid.eval(x) - f(x)).abs()
                })
                .fold(0.0_f64, f64::max)
        };
        let e1 = err_for(41);
        let e2 = err_for(81);
        // Order ~4: halving h should shrink the error by ~16.
        assert!(e2 < e1 / 10.0, "e1 = {e1:.3e}, e2 = {e2:.3e}");
    }

    #[test]
    fn zero_outside_range() {
        let grid = UniformGrid::new(1.0, 0.5, vec![1.0; 8]);
        assert_eq!(grid.eval(0.99), 0.0);
        assert_eq!(grid.eval(4.51), 0.0);
        assert_relative_eq!(grid.eval(2.2), 1.0, epsilon = 1e-14);
    }
}
