//! Forward-mode automatic differentiation with dual numbers.
//!
//! A dual number `a + b eps` with `eps^2 = 0` propagates one directional
//! derivative exactly (to rounding). The operator module uses this as an
//! independent oracle for its hand-written coefficient Jacobians: evaluating
//! a coefficient function on duals seeded along a coordinate direction must
//! reproduce the analytic Jacobian column.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Minimal scalar abstraction so coefficient functions can be written once
/// and evaluated on both `f64` and [`Dual`].
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Embeds a constant.
    fn from_f64(v: f64) -> Self;
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
}

/// First-order dual number `value + deriv * eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    /// Real part.
    pub value: f64,
    /// Coefficient of the nilpotent unit; carries the derivative.
    pub deriv: f64,
}

impl Dual {
    /// A constant (zero derivative).
    pub fn constant(value: f64) -> Self {
        Self { value, deriv: 0.0 }
    }

    /// A variable seeded with unit derivative.
    pub fn variable(value: f64) -> Self {
        Self { value, deriv: 1.0 }
    }
}

impl Scalar for Dual {
    fn from_f64(v: f64) -> Self {
        Self::constant(v)
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        Dual { value: self.value + rhs.value, deriv: self.deriv + rhs.deriv }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        Dual { value: self.value - rhs.value, deriv: self.deriv - rhs.deriv }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        Dual {
            value: self.value * rhs.value,
            deriv: self.value * rhs.deriv + self.deriv * rhs.value,
        }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, rhs: Dual) -> Dual {
        Dual {
            value: self.value / rhs.value,
            deriv: (self.deriv * rhs.value - self.value * rhs.deriv) / (rhs.value * rhs.value),
        }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual { value: -self.value, deriv: -self.deriv }
    }
}

/// Evaluates the i-th column of the Jacobian of `f` at `x`: each output
/// component's derivative with respect to `x[i]`.
pub fn jacobian_column<F>(f: F, x: &[f64], i: usize) -> Vec<f64>
where
    F: Fn(&[Dual]) -> Vec<Dual>,
{
    let seeded: Vec<Dual> = x
        .iter()
        .enumerate()
        .map(|(j, &v)| if j == i { Dual::variable(v) } else { Dual::constant(v) })
        .collect();
    f(&seeded).into_iter().map(|d| d.deriv).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rational<T: Scalar>(x: &[T]) -> Vec<T> {
        // f = [x0*x1 - x2, x0 / (x1 + 2), -(x2*x2)]
        let two = T::from_f64(2.0);
        vec![x[0] * x[1] - x[2], x[0] / (x[1] + two), -(x[2] * x[2])]
    }

    #[test]
    fn jacobian_columns_match_hand_derivatives() {
        let x = [1.3, -0.4, 2.2];
        let col0 = jacobian_column(rational::<Dual>, &x, 0);
        assert_relative_eq!(col0[0], x[1], epsilon = 1e-15);
        assert_relative_eq!(col0[1], 1.0 / (x[1] + 2.0), epsilon = 1e-15);
        assert_relative_eq!(col0[2], 0.0, epsilon = 1e-15);

        let col1 = jacobian_column(rational::<Dual>, &x, 1);
        assert_relative_eq!(col1[0], x[0], epsilon = 1e-15);
        assert_relative_eq!(col1[1], -x[0] / ((x[1] + 2.0) * (x[1] + 2.0)), epsilon = 1e-15);

        let col2 = jacobian_column(rational::<Dual>, &x, 2);
        assert_relative_eq!(col2[0], -1.0, epsilon = 1e-15);
        assert_relative_eq!(col2[2], -2.0 * x[2], epsilon = 1e-15);
    }

    #[test]
    fn dual_arithmetic_agrees_with_f64_on_values() {
        let x = [0.7, 1.9, -0.3];
        let plain = rational::<f64>(&x);
        let dual: Vec<Dual> = rational::<Dual>(&x.map(Dual::constant));
        for (p, d) in plain.iter().zip(&dual) {
            assert_relative_eq!(*p, d.value, epsilon = 1e-15);
        }
    }
}
