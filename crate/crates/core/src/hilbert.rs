//! Gauge-surface parametrizations, Faddeev-Popov-weighted inner products,
//! gauge-fixed Hamiltonian application, Jacobian absorption, quantum
//! potentials, and hermiticity verification.
//!
//! # Measures
//!
//! Matrix elements in a gauge-fixed sector are integrals over the gauge
//! surface with the Faddeev-Popov weight:
//!
//! ```text
//! linear:          <phi|psi> = int prod d2R  delta(S) Theta(Q) Q  phi* psi
//! principal axes:  <phi|psi> = (1/2) int prod d2R  delta(S) Theta(Q) 2Q  phi* psi
//! center of mass:  <phi|psi> = int prod d2R  delta(S) delta2(C) Theta(Q) Q  phi* psi
//! ```
//!
//! (an overall `2 pi` from the orientation angle is dropped, and the
//! principal-axes `1/2` compensates the double cover of its surface: rotating
//! by `pi` preserves both `S` and `Q`). [`SurfaceChart`] resolves the delta
//! functions by eliminating coordinates — the linear constraints by a linear
//! solve, the quadratic one by solving `S = 0` for one `Y` coordinate — so
//! that in the remaining free coordinates the weight is
//!
//! ```text
//! linear / center of mass:  w = Q / |det d(constraints)/d(eliminated)|
//! principal axes:           w = Q / |m_p X_p|          (the 1/2 folded in)
//! ```
//!
//! with `Theta` enforced by restricting to `Q > 0`. The excluded hyperplane
//! `X_p = 0` of the quadratic elimination is measure zero and lies outside
//! every integration box used here.
//!
//! # Representations
//!
//! A wave function can carry the Faddeev-Popov factor itself:
//! `psi~ = J^{1/2} psi` with `J = Q` (linear gauges) or `J = 2Q/R`
//! (principal axes). In the absorbed representation the measure loses the
//! factor `J` and the Hamiltonian gains the quantum potential; see
//! [`absorb_jacobian`] and [`HamiltonianOp::apply_absorbed`].

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gauge::{sample_on_surface, shape_quadratic, LinearChart, SurfaceFamily};
use crate::model::ParticleSystem;
use crate::numerics::quad::integrate_box;
use crate::operators::{
    lambda_linear, lambda_quadratic, pi_linear, pi_linear_cm, pi_quadratic, FirstOrderOperator,
};

type RValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type RFieldFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type CValueFn = dyn Fn(&[f64]) -> Complex64 + Send + Sync;
type CFieldFn = dyn Fn(&[f64]) -> Vec<Complex64> + Send + Sync;

/// A real scalar with analytic gradient and Hessian, used for the
/// Faddeev-Popov factors `J` and their powers.
#[derive(Clone)]
struct C2Real {
    value: Arc<RValueFn>,
    gradient: Arc<RFieldFn>,
    hessian: Arc<RFieldFn>,
}

impl C2Real {
    /// `f^p` by the chain rule.
    fn powf(&self, p: f64) -> C2Real {
        let (v, g, h) = (self.value.clone(), self.gradient.clone(), self.hessian.clone());
        let value = {
            let v = v.clone();
            move |x: &[f64]| v(x).powf(p)
        };
        let gradient = {
            let (v, g) = (v.clone(), g.clone());
            move |x: &[f64]| {
                let s = p * v(x).powf(p - 1.0);
                g(x).into_iter().map(|d| s * d).collect::<Vec<f64>>()
            }
        };
        let hessian = move |x: &[f64]| {
            let (f, grad, hess) = (v(x), g(x), h(x));
            let dim = grad.len();
            let (c1, c2) = (p * f.powf(p - 1.0), p * (p - 1.0) * f.powf(p - 2.0));
            let mut out = vec![0.0; dim * dim];
            for j in 0..dim {
                for k in 0..dim {
                    out[j * dim + k] = c1 * hess[j * dim + k] + c2 * grad[j] * grad[k];
                }
            }
            out
        };
        C2Real { value: Arc::new(value), gradient: Arc::new(gradient), hessian: Arc::new(hessian) }
    }
}

/// A complex wave function on the ambient body-coordinate space with
/// analytic gradient and Hessian, plus a localization box used to build
/// quadrature domains.
#[derive(Clone)]
pub struct WaveFunction {
    dim: usize,
    value: Arc<CValueFn>,
    gradient: Arc<CFieldFn>,
    hessian: Arc<CFieldFn>,
    center: Vec<f64>,
    radius: f64,
    /// Whether this function is in the absorbed representation
    /// `psi~ = J^{1/2} psi`.
    pub jacobian_absorbed: bool,
}

impl WaveFunction {
    /// Wraps explicit closures. `hessian` is row-major `dim x dim`;
    /// `center`/`radius` bound the effective support in every coordinate.
    pub fn new(
        dim: usize,
        value: impl Fn(&[f64]) -> Complex64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64]) -> Vec<Complex64> + Send + Sync + 'static,
        hessian: impl Fn(&[f64]) -> Vec<Complex64> + Send + Sync + 'static,
        center: Vec<f64>,
        radius: f64,
    ) -> Self {
        assert_eq!(center.len(), dim);
        assert!(radius > 0.0);
        Self {
            dim,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            hessian: Arc::new(hessian),
            center,
            radius,
            jacobian_absorbed: false,
        }
    }

    /// Real Gaussian bump times a low-order polynomial:
    /// `psi(x) = (offset + sum l_k d_k + sum q_k d_k^2) exp(-|d|^2 / 2 sigma^2)`
    /// with `d = x - center`. Support radius is `8 sigma` (value down to
    /// `~e^-32` at the box face).
    pub fn gaussian_bump(
        center: Vec<f64>,
        sigma: f64,
        offset: f64,
        linear: Vec<f64>,
        quadratic: Vec<f64>,
    ) -> Self {
        let dim = center.len();
        assert!(sigma > 0.0);
        assert_eq!(linear.len(), dim);
        assert_eq!(quadratic.len(), dim);
        let parts = {
            let (c, l, q) = (center.clone(), linear.clone(), quadratic.clone());
            move |x: &[f64]| -> (Vec<f64>, f64, f64) {
                let d: Vec<f64> = x.iter().zip(&c).map(|(xi, ci)| xi - ci).collect();
                let p = offset
                    + d.iter()
                        .zip(l.iter().zip(&q))
                        .map(|(di, (li, qi))| li * di + qi * di * di)
                        .sum::<f64>();
                let e = (-0.5 * d.iter().map(|di| di * di).sum::<f64>() / (sigma * sigma)).exp();
                (d, p, e)
            }
        };
        let value = {
            let parts = parts.clone();
            move |x: &[f64]| {
                let (_, p, e) = parts(x);
                Complex64::new(p * e, 0.0)
            }
        };
        let gradient = {
            let parts = parts.clone();
            let (l, q) = (linear.clone(), quadratic.clone());
            move |x: &[f64]| {
                let (d, p, e) = parts(x);
                (0..d.len())
                    .map(|j| {
                        let dp = l[j] + 2.0 * q[j] * d[j];
                        Complex64::new(e * (dp - p * d[j] / (sigma * sigma)), 0.0)
                    })
                    .collect::<Vec<Complex64>>()
            }
        };
        let hessian = {
            let parts = parts.clone();
            let (l, q) = (linear.clone(), quadratic.clone());
            move |x: &[f64]| {
                let (d, p, e) = parts(x);
                let n = d.len();
                let s2 = sigma * sigma;
                let dp: Vec<f64> = (0..n).map(|j| l[j] + 2.0 * q[j] * d[j]).collect();
                let mut out = vec![Complex64::new(0.0, 0.0); n * n];
                for j in 0..n {
                    for k in 0..n {
                        let mut v = -d[k] / s2 * (dp[j] - p * d[j] / s2) - dp[k] * d[j] / s2;
                        if j == k {
                            v += 2.0 * q[j] - p / s2;
                        }
                        out[j * n + k] = Complex64::new(e * v, 0.0);
                    }
                }
                out
            }
        };
        Self {
            dim,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            hessian: Arc::new(hessian),
            center,
            radius: 8.0 * sigma,
            jacobian_absorbed: false,
        }
    }

    /// A Gaussian bump in the chart's free coordinates, lifted to the
    /// ambient space as a function of those coordinates alone. Because
    /// every operator field used here is tangent to the gauge surface, the
    /// action of the Hamiltonian on the surface does not depend on how a
    /// surface function is extended off it, and this extension keeps
    /// chart-quadrature integrands free of the embedding's nonlinearity.
    pub fn gaussian_bump_on_chart(
        chart: &SurfaceChart,
        center_free: Vec<f64>,
        sigma: f64,
        offset: f64,
        linear: Vec<f64>,
        quadratic: Vec<f64>,
    ) -> Self {
        let nf = chart.free_dim();
        assert_eq!(center_free.len(), nf);
        let dim = chart.ambient_dim();
        let free = chart.free_indices().to_vec();
        let bump = WaveFunction::gaussian_bump(center_free, sigma, offset, linear, quadratic);
        let restrict = {
            let free = free.clone();
            move |x: &[f64]| -> Vec<f64> { free.iter().map(|&k| x[k]).collect() }
        };
        let value = {
            let (bump, restrict) = (bump.clone(), restrict.clone());
            move |x: &[f64]| bump.value_at(&restrict(x))
        };
        let gradient = {
            let (bump, restrict, free) = (bump.clone(), restrict.clone(), free.clone());
            move |x: &[f64]| {
                let g = bump.gradient_at(&restrict(x));
                let mut out = vec![Complex64::new(0.0, 0.0); dim];
                for (slot, &k) in free.iter().enumerate() {
                    out[k] = g[slot];
                }
                out
            }
        };
        let hessian = {
            let (bump, restrict, free) = (bump.clone(), restrict.clone(), free.clone());
            move |x: &[f64]| {
                let h = bump.hessian_at(&restrict(x));
                let mut out = vec![Complex64::new(0.0, 0.0); dim * dim];
                for (sj, &j) in free.iter().enumerate() {
                    for (sk, &k) in free.iter().enumerate() {
                        out[j * dim + k] = h[sj * nf + sk];
                    }
                }
                out
            }
        };
        let mut center = vec![0.0; dim];
        for (slot, &k) in free.iter().enumerate() {
            center[k] = bump.support_center()[slot];
        }
        WaveFunction {
            dim,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            hessian: Arc::new(hessian),
            center,
            radius: bump.support_radius(),
            jacobian_absorbed: false,
        }
    }

    /// Number of ambient coordinates.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Value at a point.
    pub fn value_at(&self, x: &[f64]) -> Complex64 {
        (self.value)(x)
    }

    /// Gradient at a point.
    pub fn gradient_at(&self, x: &[f64]) -> Vec<Complex64> {
        (self.gradient)(x)
    }

    /// Hessian at a point (row-major).
    pub fn hessian_at(&self, x: &[f64]) -> Vec<Complex64> {
        (self.hessian)(x)
    }

    /// Center of the localization box.
    pub fn support_center(&self) -> &[f64] {
        &self.center
    }

    /// Half-width of the localization box.
    pub fn support_radius(&self) -> f64 {
        self.radius
    }

    /// Product with a real C2 scalar, by the Leibniz rule.
    fn multiplied(&self, s: &C2Real, absorbed: bool) -> WaveFunction {
        let dim = self.dim;
        let (sv, sg, sh) = (s.value.clone(), s.gradient.clone(), s.hessian.clone());
        let (v, g, h) = (self.value.clone(), self.gradient.clone(), self.hessian.clone());
        let value = {
            let (sv, v) = (sv.clone(), v.clone());
            move |x: &[f64]| sv(x) * v(x)
        };
        let gradient = {
            let (sv, sg, v, g) = (sv.clone(), sg.clone(), v.clone(), g.clone());
            move |x: &[f64]| {
                let (s0, grad_s, v0, grad_v) = (sv(x), sg(x), v(x), g(x));
                (0..dim)
                    .map(|j| s0 * grad_v[j] + v0 * grad_s[j])
                    .collect::<Vec<Complex64>>()
            }
        };
        let hessian = move |x: &[f64]| {
            let (s0, grad_s, hess_s) = (sv(x), sg(x), sh(x));
            let (v0, grad_v, hess_v) = (v(x), g(x), h(x));
            let mut out = vec![Complex64::new(0.0, 0.0); dim * dim];
            for j in 0..dim {
                for k in 0..dim {
                    out[j * dim + k] = s0 * hess_v[j * dim + k]
                        + grad_s[j] * grad_v[k]
                        + grad_s[k] * grad_v[j]
                        + v0 * hess_s[j * dim + k];
                }
            }
            out
        };
        WaveFunction {
            dim,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            hessian: Arc::new(hessian),
            center: self.center.clone(),
            radius: self.radius,
            jacobian_absorbed: absorbed,
        }
    }
}

/// Which gauge surface a [`SurfaceChart`] parametrizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SurfaceKind {
    /// Linear gauge: one constraint `S = 0`.
    Linear,
    /// Linear gauge plus the center-of-mass constraints.
    CenterOfMass,
    /// Principal-axes (quadratic) gauge: `sum m X Y = 0`.
    PrincipalAxes,
}

/// Gauge parameters for [`surface_chart`] and [`hamiltonian`].
pub enum ChartSpec<'a> {
    /// Linear gauge with the given chart.
    Linear(&'a LinearChart),
    /// Center-of-mass linear gauge (chart must be translation invariant).
    CenterOfMass(&'a LinearChart),
    /// Principal-axes gauge, eliminating the `Y` coordinate of the given
    /// particle.
    PrincipalAxes {
        /// Particle index whose `Y` coordinate is solved from `S = 0`.
        pivot: usize,
    },
}

/// A parametrization of a gauge surface by a subset of the body
/// coordinates, with the measure weight that resolves the delta functions.
pub struct SurfaceChart {
    kind: SurfaceKind,
    masses: Vec<f64>,
    free: Vec<usize>,
    eliminated: Vec<usize>,
    /// Row-major `eliminated.len() x free.len()` solve matrix for linear
    /// kinds: `x_elim = T u`.
    solve: Vec<f64>,
    /// `|det|` of the constraint Jacobian with respect to the eliminated
    /// coordinates (linear kinds; constant).
    det_abs: f64,
    /// Chart coefficients (linear kinds).
    a: Vec<f64>,
    b: Vec<f64>,
    /// Pivot particle (principal axes).
    pivot: usize,
}

impl SurfaceChart {
    /// Gauge family.
    pub fn kind(&self) -> SurfaceKind {
        self.kind
    }

    /// Ambient indices of the free coordinates, in ascending order.
    pub fn free_indices(&self) -> &[usize] {
        &self.free
    }

    /// Number of free coordinates.
    pub fn free_dim(&self) -> usize {
        self.free.len()
    }

    /// Ambient indices of the eliminated coordinates.
    pub fn eliminated_indices(&self) -> &[usize] {
        &self.eliminated
    }

    /// Ambient dimension.
    pub fn ambient_dim(&self) -> usize {
        2 * self.masses.len()
    }

    /// Maps free coordinates to the full on-surface configuration.
    pub fn embed(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.free.len() {
            return Err(Error::DimensionMismatch { left: u.len(), right: self.free.len() });
        }
        let dim = self.ambient_dim();
        let mut x = vec![0.0; dim];
        for (slot, &k) in self.free.iter().enumerate() {
            x[k] = u[slot];
        }
        match self.kind {
            SurfaceKind::Linear | SurfaceKind::CenterOfMass => {
                let ne = self.eliminated.len();
                for (row, &k) in self.eliminated.iter().enumerate() {
                    let mut v = 0.0;
                    for (col, &uj) in u.iter().enumerate() {
                        v += self.solve[row * self.free.len() + col] * uj;
                    }
                    let _ = ne;
                    x[k] = v;
                }
            }
            SurfaceKind::PrincipalAxes => {
                let p = self.pivot;
                let denom = self.masses[p] * x[2 * p];
                if denom.abs() < f64::MIN_POSITIVE.sqrt() {
                    return Err(Error::DegenerateJacobian { value: denom });
                }
                let mut s = 0.0;
                for beta in 0..self.masses.len() {
                    if beta != p {
                        s += self.masses[beta] * x[2 * beta] * x[2 * beta + 1];
                    }
                }
                x[2 * p + 1] = -s / denom;
            }
        }
        Ok(x)
    }

    /// Restricts a full configuration to its free coordinates.
    pub fn restrict(&self, x: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&k| x[k]).collect()
    }

    /// Whether a full configuration lies in the positivity region Theta.
    pub fn in_domain(&self, x: &[f64]) -> bool {
        self.fp_factor_raw(x) > 0.0
    }

    /// The gauge functional entering the Theta function and the measure:
    /// `Q` for all three gauges (signed; positive inside the domain).
    fn fp_factor_raw(&self, x: &[f64]) -> f64 {
        match self.kind {
            SurfaceKind::Linear | SurfaceKind::CenterOfMass => {
                let n = self.masses.len();
                (0..n)
                    .map(|g| self.masses[g] * (self.b[g] * x[2 * g] - self.a[g] * x[2 * g + 1]))
                    .sum()
            }
            SurfaceKind::PrincipalAxes => {
                let n = self.masses.len();
                (0..n)
                    .map(|g| {
                        0.5 * self.masses[g]
                            * (x[2 * g] * x[2 * g] - x[2 * g + 1] * x[2 * g + 1])
                    })
                    .sum()
            }
        }
    }

    /// Measure weight at a full on-surface configuration; zero outside the
    /// domain.
    pub fn weight(&self, x: &[f64]) -> f64 {
        let q = self.fp_factor_raw(x);
        if q <= 0.0 {
            return 0.0;
        }
        match self.kind {
            SurfaceKind::Linear | SurfaceKind::CenterOfMass => q / self.det_abs,
            SurfaceKind::PrincipalAxes => {
                let denom = (self.masses[self.pivot] * x[2 * self.pivot]).abs();
                if denom == 0.0 {
                    return 0.0;
                }
                q / denom
            }
        }
    }

    /// Measure weight in the absorbed representation (the factor `J`
    /// moved into the wave functions): `1/|det|` for linear kinds,
    /// `(R/2)/|m_p X_p|` for principal axes.
    pub fn absorbed_weight(&self, x: &[f64]) -> f64 {
        if !self.in_domain(x) {
            return 0.0;
        }
        match self.kind {
            SurfaceKind::Linear | SurfaceKind::CenterOfMass => 1.0 / self.det_abs,
            SurfaceKind::PrincipalAxes => {
                let denom = (self.masses[self.pivot] * x[2 * self.pivot]).abs();
                if denom == 0.0 {
                    return 0.0;
                }
                let r2: f64 = (0..self.masses.len())
                    .map(|g| {
                        self.masses[g]
                            * (x[2 * g] * x[2 * g] + x[2 * g + 1] * x[2 * g + 1])
                    })
                    .sum();
                0.5 * r2.sqrt() / denom
            }
        }
    }

    /// The Faddeev-Popov factor `J` absorbed by [`absorb_jacobian`]: `Q`
    /// for linear kinds, `2Q/R` for principal axes.
    pub fn fp_factor(&self, x: &[f64]) -> f64 {
        let q = self.fp_factor_raw(x);
        match self.kind {
            SurfaceKind::Linear | SurfaceKind::CenterOfMass => q,
            SurfaceKind::PrincipalAxes => {
                let r2: f64 = (0..self.masses.len())
                    .map(|g| {
                        self.masses[g]
                            * (x[2 * g] * x[2 * g] + x[2 * g + 1] * x[2 * g + 1])
                    })
                    .sum();
                2.0 * q / r2.sqrt()
            }
        }
    }

    /// `J` with analytic gradient and Hessian.
    fn fp_c2(&self) -> C2Real {
        let masses = self.masses.clone();
        let n = masses.len();
        let dim = 2 * n;
        match self.kind {
            SurfaceKind::Linear | SurfaceKind::CenterOfMass => {
                let mut grad = vec![0.0; dim];
                for g in 0..n {
                    grad[2 * g] = masses[g] * self.b[g];
                    grad[2 * g + 1] = -masses[g] * self.a[g];
                }
                let gv = grad.clone();
                let gg = grad.clone();
                C2Real {
                    value: Arc::new(move |x: &[f64]| {
                        gv.iter().zip(x).map(|(c, v)| c * v).sum()
                    }),
                    gradient: Arc::new(move |_| gg.clone()),
                    hessian: Arc::new(move |_| vec![0.0; dim * dim]),
                }
            }
            SurfaceKind::PrincipalAxes => {
                // J = 2 Q t^{-1/2} with t = R^2; Q and t are quadratic forms
                // with constant (diagonal) Hessians.
                let shape = {
                    let masses = masses.clone();
                    move |x: &[f64]| -> (f64, f64) {
                        let mut q = 0.0;
                        let mut t = 0.0;
                        for g in 0..n {
                            let (xx, yy) = (x[2 * g], x[2 * g + 1]);
                            q += 0.5 * masses[g] * (xx * xx - yy * yy);
                            t += masses[g] * (xx * xx + yy * yy);
                        }
                        (q, t)
                    }
                };
                let value = {
                    let shape = shape.clone();
                    move |x: &[f64]| {
                        let (q, t) = shape(x);
                        2.0 * q / t.sqrt()
                    }
                };
                let grads = {
                    let masses = masses.clone();
                    move |x: &[f64]| -> (Vec<f64>, Vec<f64>) {
                        let mut gq = vec![0.0; dim];
                        let mut gt = vec![0.0; dim];
                        for j in 0..dim {
                            let sigma = if j % 2 == 0 { 1.0 } else { -1.0 };
                            gq[j] = sigma * masses[j / 2] * x[j];
                            gt[j] = 2.0 * masses[j / 2] * x[j];
                        }
                        (gq, gt)
                    }
                };
                let gradient = {
                    let (shape, grads) = (shape.clone(), grads.clone());
                    move |x: &[f64]| {
                        let (q, t) = shape(x);
                        let (gq, gt) = grads(x);
                        let (t12, t32) = (t.sqrt(), t.powf(1.5));
                        (0..dim)
                            .map(|j| 2.0 * gq[j] / t12 - q * gt[j] / t32)
                            .collect::<Vec<f64>>()
                    }
                };
                let hessian = move |x: &[f64]| {
                    let (q, t) = shape(x);
                    let (gq, gt) = grads(x);
                    let (t12, t32, t52) = (t.sqrt(), t.powf(1.5), t.powf(2.5));
                    let mut out = vec![0.0; dim * dim];
                    for j in 0..dim {
                        for k in 0..dim {
                            let mut v = -(gq[j] * gt[k] + gq[k] * gt[j]) / t32
                                + 1.5 * q * gt[j] * gt[k] / t52;
                            if j == k {
                                let sigma = if j % 2 == 0 { 1.0 } else { -1.0 };
                                v += 2.0 * sigma * masses[j / 2] / t12
                                    - 2.0 * q * masses[j / 2] / t32;
                            }
                            out[j * dim + k] = v;
                        }
                    }
                    out
                };
                C2Real {
                    value: Arc::new(value),
                    gradient: Arc::new(gradient),
                    hessian: Arc::new(hessian),
                }
            }
        }
    }
}

/// Builds the surface parametrization for a gauge family. Linear
/// constraints are resolved by eliminating the coordinates with the most
/// stable pivots; the quadratic constraint by solving for the pivot
/// particle's `Y` coordinate.
pub fn surface_chart(sys: &ParticleSystem, spec: &ChartSpec<'_>) -> Result<SurfaceChart> {
    let dim = sys.dim();
    let masses = sys.masses().to_vec();
    match spec {
        ChartSpec::Linear(chart) | ChartSpec::CenterOfMass(chart) => {
            chart.validate(sys)?;
            let cm = matches!(spec, ChartSpec::CenterOfMass(_));
            if cm {
                chart.require_translation_invariant(sys)?;
            }
            // Constraint gradients, one row per delta function.
            let mut rows: Vec<Vec<f64>> = Vec::new();
            let mut s_row = vec![0.0; dim];
            for g in 0..sys.n() {
                s_row[2 * g] = masses[g] * chart.a(g);
                s_row[2 * g + 1] = masses[g] * chart.b(g);
            }
            rows.push(s_row);
            if cm {
                let total = sys.total_mass();
                let mut cx = vec![0.0; dim];
                let mut cy = vec![0.0; dim];
                for g in 0..sys.n() {
                    cx[2 * g] = masses[g] / total;
                    cy[2 * g + 1] = masses[g] / total;
                }
                rows.push(cx);
                rows.push(cy);
            }
            let n_con = rows.len();
            // Greedy column pivoting on a working copy.
            let mut work = rows.clone();
            let mut eliminated: Vec<usize> = Vec::with_capacity(n_con);
            for step in 0..n_con {
                let (mut best, mut best_abs) = (usize::MAX, 0.0);
                for j in 0..dim {
                    if !eliminated.contains(&j) && work[step][j].abs() > best_abs {
                        best = j;
                        best_abs = work[step][j].abs();
                    }
                }
                if best == usize::MAX || best_abs == 0.0 {
                    return Err(Error::NoEliminableCoordinate);
                }
                eliminated.push(best);
                for r in (step + 1)..n_con {
                    let factor = work[r][best] / work[step][best];
                    for j in 0..dim {
                        work[r][j] -= factor * work[step][j];
                    }
                }
            }
            eliminated.sort_unstable();
            let free: Vec<usize> = (0..dim).filter(|j| !eliminated.contains(j)).collect();
            // Solve A_e x_e = -A_f u for x_e by Gaussian elimination on the
            // small square block, carried along the free columns.
            let ne = n_con;
            let nf = free.len();
            let mut a_e = vec![0.0; ne * ne];
            let mut rhs = vec![0.0; ne * nf];
            for (r, row) in rows.iter().enumerate() {
                for (c, &k) in eliminated.iter().enumerate() {
                    a_e[r * ne + c] = row[k];
                }
                for (c, &k) in free.iter().enumerate() {
                    rhs[r * nf + c] = -row[k];
                }
            }
            let mut det = 1.0;
            for col in 0..ne {
                let mut piv = col;
                for r in (col + 1)..ne {
                    if a_e[r * ne + col].abs() > a_e[piv * ne + col].abs() {
                        piv = r;
                    }
                }
                if a_e[piv * ne + col] == 0.0 {
                    return Err(Error::NoEliminableCoordinate);
                }
                if piv != col {
                    for j in 0..ne {
                        a_e.swap(col * ne + j, piv * ne + j);
                    }
                    for j in 0..nf {
                        rhs.swap(col * nf + j, piv * nf + j);
                    }
                    det = -det;
                }
                det *= a_e[col * ne + col];
                for r in 0..ne {
                    if r != col {
                        let factor = a_e[r * ne + col] / a_e[col * ne + col];
                        for j in col..ne {
                            a_e[r * ne + j] -= factor * a_e[col * ne + j];
                        }
                        for j in 0..nf {
                            rhs[r * nf + j] -= factor * rhs[col * nf + j];
                        }
                    }
                }
            }
            let mut solve = vec![0.0; ne * nf];
            for r in 0..ne {
                for j in 0..nf {
                    solve[r * nf + j] = rhs[r * nf + j] / a_e[r * ne + r];
                }
            }
            Ok(SurfaceChart {
                kind: if cm { SurfaceKind::CenterOfMass } else { SurfaceKind::Linear },
                masses,
                free,
                eliminated,
                solve,
                det_abs: det.abs(),
                a: chart.a_slice().to_vec(),
                b: chart.b_slice().to_vec(),
                pivot: usize::MAX,
            })
        }
        ChartSpec::PrincipalAxes { pivot } => {
            if *pivot >= sys.n() {
                return Err(Error::InvalidInput(format!(
                    "pivot particle {pivot} out of range for {} particles",
                    sys.n()
                )));
            }
            let eliminated = vec![2 * pivot + 1];
            let free: Vec<usize> = (0..dim).filter(|j| *j != 2 * pivot + 1).collect();
            Ok(SurfaceChart {
                kind: SurfaceKind::PrincipalAxes,
                masses,
                free,
                eliminated,
                solve: Vec::new(),
                det_abs: 1.0,
                a: Vec::new(),
                b: Vec::new(),
                pivot: *pivot,
            })
        }
    }
}

/// Quadrature request for [`inner_product`]: tensor Gauss-Legendre at a
/// ladder of orders (`order`, then 3/2 of it, `levels` times); converged
/// when two consecutive levels agree to `tol * (1 + |value|)`.
#[derive(Debug, Clone, Serialize)]
pub struct QuadratureSpec {
    /// Points per axis at the coarsest level.
    pub order: usize,
    /// Number of levels in the refinement ladder (at least 2).
    pub levels: usize,
    /// Relative agreement required between consecutive levels.
    pub tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { order: 28, levels: 3, tol: 1e-8 }
    }
}

/// A quadrature result with its two-level error estimate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct InnerProduct {
    /// Value of the integral.
    pub value: Complex64,
    /// Absolute difference between the two finest levels (floored at a
    /// small multiple of machine epsilon relative to the value).
    pub error_estimate: f64,
}

fn quadrature_orders(spec: &QuadratureSpec) -> Result<Vec<usize>> {
    if spec.order < 2 || spec.levels < 2 {
        return Err(Error::InvalidInput(
            "quadrature spec needs order >= 2 and levels >= 2".into(),
        ));
    }
    let mut orders = vec![spec.order];
    for _ in 1..spec.levels {
        let next = orders.last().unwrap() * 3 / 2 + 1;
        orders.push(next);
    }
    Ok(orders)
}

/// Integrates `integrand(u, x)` (free coordinates and their embedding) over
/// the free-coordinate box, refining until two levels agree.
fn integrate_on_chart<F>(
    chart: &SurfaceChart,
    lo: &[f64],
    hi: &[f64],
    spec: &QuadratureSpec,
    integrand: F,
) -> Result<InnerProduct>
where
    F: Fn(&[f64], &[f64]) -> Complex64 + Sync,
{
    let orders = quadrature_orders(spec)?;
    let f = |u: &[f64]| -> Complex64 {
        match chart.embed(u) {
            // Outside the pivot hyperplane the embedding is exact; points
            // that fail to embed carry no weight (measure zero).
            Ok(x) => integrand(u, &x),
            Err(_) => Complex64::new(0.0, 0.0),
        }
    };
    let mut prev: Option<Complex64> = None;
    let mut last_diff = f64::INFINITY;
    for &order in &orders {
        let value = integrate_box(&f, lo, hi, order);
        if let Some(p) = prev {
            last_diff = (value - p).norm();
            let floor = 1e-14 * (1.0 + value.norm());
            if last_diff <= spec.tol * (1.0 + value.norm()) {
                return Ok(InnerProduct { value, error_estimate: last_diff.max(floor) });
            }
        }
        prev = Some(value);
    }
    Err(Error::QuadratureNotConverged {
        difference: last_diff,
        tolerance: spec.tol * (1.0 + prev.map_or(1.0, |v| v.norm())),
    })
}

/// Union of the two wave functions' support boxes, restricted to the free
/// coordinates.
fn support_box(
    chart: &SurfaceChart,
    phi: &WaveFunction,
    psi: &WaveFunction,
) -> (Vec<f64>, Vec<f64>) {
    let mut lo = Vec::with_capacity(chart.free_dim());
    let mut hi = Vec::with_capacity(chart.free_dim());
    for &k in chart.free_indices() {
        lo.push(
            (phi.support_center()[k] - phi.support_radius())
                .min(psi.support_center()[k] - psi.support_radius()),
        );
        hi.push(
            (phi.support_center()[k] + phi.support_radius())
                .max(psi.support_center()[k] + psi.support_radius()),
        );
    }
    (lo, hi)
}

/// Faddeev-Popov-weighted inner product `<phi|psi>` over the gauge surface.
/// Both functions must be in the same representation; the weight is
/// [`SurfaceChart::weight`] for plain functions and
/// [`SurfaceChart::absorbed_weight`] for absorbed ones.
pub fn inner_product(
    chart: &SurfaceChart,
    phi: &WaveFunction,
    psi: &WaveFunction,
    spec: &QuadratureSpec,
) -> Result<InnerProduct> {
    if phi.jacobian_absorbed != psi.jacobian_absorbed {
        return Err(Error::InvalidInput(
            "inner product of mixed representations (absorbed vs plain)".into(),
        ));
    }
    let absorbed = phi.jacobian_absorbed;
    let (lo, hi) = support_box(chart, phi, psi);
    integrate_on_chart(chart, &lo, &hi, spec, |_, x| {
        let w = if absorbed { chart.absorbed_weight(x) } else { chart.weight(x) };
        if w <= 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        w * phi.value_at(x).conj() * psi.value_at(x)
    })
}

/// The gauge-fixed Hamiltonian of one sector: kinetic sandwich, residual
/// centrifugal term, and the system's potential, with the exact operator
/// ordering of the gauge family:
///
/// ```text
/// linear / CM:     H = sum 1/(2m) [ (1/Q) Pi Q Pi ]  + (Rr^2 / 2 Q^2)(hbar l - Lambda)^2 + V
/// principal axes:  H = sum 1/(2m) [ (R/2Q) Pi (2Q/R) Pi ] + (R^2 / 8 Q^2)(hbar l - Lambda)^2 + V
/// ```
pub struct HamiltonianOp {
    sys: ParticleSystem,
    kind: SurfaceKind,
    momenta: Vec<FirstOrderOperator>,
    lambda: FirstOrderOperator,
    /// Chart data for the linear kinds.
    a: Vec<f64>,
    b: Vec<f64>,
    r2_ref: f64,
    /// Angular-momentum sector (eigenvalue of `L_z` in units of `hbar`).
    pub ell_z: f64,
}

/// Builds the sector Hamiltonian for a gauge family.
pub fn hamiltonian(sys: &ParticleSystem, spec: &ChartSpec<'_>, ell_z: f64) -> Result<HamiltonianOp> {
    let (kind, momenta, lambda, a, b, r2_ref) = match spec {
        ChartSpec::Linear(chart) => (
            SurfaceKind::Linear,
            pi_linear(sys, chart)?,
            lambda_linear(sys, chart)?,
            chart.a_slice().to_vec(),
            chart.b_slice().to_vec(),
            chart.reference_inertia(sys),
        ),
        ChartSpec::CenterOfMass(chart) => (
            SurfaceKind::CenterOfMass,
            pi_linear_cm(sys, chart)?,
            lambda_linear(sys, chart)?,
            chart.a_slice().to_vec(),
            chart.b_slice().to_vec(),
            chart.reference_inertia(sys),
        ),
        ChartSpec::PrincipalAxes { .. } => (
            SurfaceKind::PrincipalAxes,
            pi_quadratic(sys)?,
            lambda_quadratic(sys)?,
            Vec::new(),
            Vec::new(),
            0.0,
        ),
    };
    Ok(HamiltonianOp { sys: sys.clone(), kind, momenta, lambda, a, b, r2_ref, ell_z })
}

impl HamiltonianOp {
    /// Gauge family of this Hamiltonian.
    pub fn kind(&self) -> SurfaceKind {
        self.kind
    }

    /// `(Q, centrifugal prefactor, sandwich factor f, grad f)` at a point.
    fn measure_data(&self, x: &[f64]) -> Result<(f64, f64, f64, Vec<f64>)> {
        let dim = self.sys.dim();
        match self.kind {
            SurfaceKind::Linear | SurfaceKind::CenterOfMass => {
                let n = self.sys.n();
                let q: f64 = (0..n)
                    .map(|g| {
                        self.sys.mass(g) * (self.b[g] * x[2 * g] - self.a[g] * x[2 * g + 1])
                    })
                    .sum();
                if q <= 0.0 {
                    return Err(Error::DegenerateJacobian { value: q });
                }
                let mut grad_f = vec![0.0; dim];
                for g in 0..n {
                    grad_f[2 * g] = self.sys.mass(g) * self.b[g];
                    grad_f[2 * g + 1] = -self.sys.mass(g) * self.a[g];
                }
                let pref = self.r2_ref / (2.0 * q * q);
                Ok((q, pref, q, grad_f))
            }
            SurfaceKind::PrincipalAxes => {
                let sv = shape_quadratic(&self.sys, x);
                let (q, r2) = (sv.q, sv.r_squared);
                if r2 <= 0.0 {
                    return Err(Error::DegenerateInertia { value: r2, threshold: 0.0 });
                }
                if q <= 0.0 {
                    return Err(Error::DegenerateJacobian { value: q });
                }
                let r = r2.sqrt();
                let f = 2.0 * q / r;
                // grad f = (2/R) grad Q - (2Q/R^3) m x (componentwise).
                let mut grad_f = vec![0.0; dim];
                for j in 0..dim {
                    let m = self.sys.mass(j / 2);
                    let sigma = if j % 2 == 0 { 1.0 } else { -1.0 };
                    grad_f[j] = 2.0 * sigma * m * x[j] / r - 2.0 * q * m * x[j] / (r * r2);
                }
                let pref = r2 / (8.0 * q * q);
                Ok((q, pref, f, grad_f))
            }
        }
    }

    /// `d_j (P psi)` for a first-order operator `P = (1/i) V . grad`: needs
    /// the operator's analytic Jacobian and the wave function's Hessian.
    fn derivative_of_applied(
        op: &FirstOrderOperator,
        x: &[f64],
        grad: &[Complex64],
        hess: &[Complex64],
    ) -> Result<Vec<Complex64>> {
        let dim = x.len();
        let v = op.coeff_at(x);
        let jac = op.jacobian_at(x)?;
        let mut out = vec![Complex64::new(0.0, 0.0); dim];
        for j in 0..dim {
            let mut s = Complex64::new(0.0, 0.0);
            for k in 0..dim {
                s += jac[k * dim + j] * grad[k] + v[k] * hess[j * dim + k];
            }
            out[j] = -Complex64::i() * s;
        }
        Ok(out)
    }

    /// `(hbar l - Lambda)^2 psi` at a point.
    fn centrifugal_numerator(
        &self,
        x: &[f64],
        value: Complex64,
        grad: &[Complex64],
        hess: &[Complex64],
    ) -> Result<Complex64> {
        let hl = self.sys.hbar() * self.ell_z;
        let lambda_psi = self.lambda.apply(x, value, grad);
        let d_lambda_psi = Self::derivative_of_applied(&self.lambda, x, grad, hess)?;
        let v = self.lambda.coeff_at(x);
        let mut lambda2_psi = Complex64::new(0.0, 0.0);
        for j in 0..x.len() {
            lambda2_psi += v[j] * d_lambda_psi[j];
        }
        lambda2_psi *= -Complex64::i();
        Ok(hl * hl * value - 2.0 * hl * lambda_psi + lambda2_psi)
    }

    /// Applies the gauge-fixed Hamiltonian to `psi` at an on-surface point.
    pub fn apply(&self, psi: &WaveFunction, x: &[f64]) -> Result<Complex64> {
        self.sys.check_dim(x.len())?;
        let (_, pref, f, grad_f) = self.measure_data(x)?;
        let value = psi.value_at(x);
        let grad = psi.gradient_at(x);
        let hess = psi.hessian_at(x);
        let mut out = Complex64::new(0.0, 0.0);
        // Kinetic sandwich (1/f) Pi f Pi, component by component.
        for (idx, op) in self.momenta.iter().enumerate() {
            let v = op.coeff_at(x);
            let w = op.apply(x, value, &grad);
            let dw = Self::derivative_of_applied(op, x, &grad, &hess)?;
            let mut sandwich = Complex64::new(0.0, 0.0);
            for j in 0..x.len() {
                sandwich += v[j] * (grad_f[j] * w + f * dw[j]);
            }
            sandwich *= -Complex64::i() / f;
            out += sandwich / (2.0 * self.sys.mass(idx / 2));
        }
        out += pref * self.centrifugal_numerator(x, value, &grad, &hess)?;
        if self.sys.has_potential() {
            out += self.sys.potential_energy(x)? * value;
        }
        Ok(out)
    }

    /// Applies the absorbed-representation Hamiltonian
    /// `H~ = J^{1/2} H J^{-1/2}`: flat kinetic term, centrifugal term, the
    /// potential, and the quantum potential.
    pub fn apply_absorbed(&self, psi: &WaveFunction, x: &[f64]) -> Result<Complex64> {
        self.sys.check_dim(x.len())?;
        let value = psi.value_at(x);
        let grad = psi.gradient_at(x);
        let hess = psi.hessian_at(x);
        let (_, pref, _, _) = self.measure_data(x)?;
        let mut out = Complex64::new(0.0, 0.0);
        for (idx, op) in self.momenta.iter().enumerate() {
            let v = op.coeff_at(x);
            let dw = Self::derivative_of_applied(op, x, &grad, &hess)?;
            let mut pi2 = Complex64::new(0.0, 0.0);
            for j in 0..x.len() {
                pi2 += v[j] * dw[j];
            }
            pi2 *= -Complex64::i();
            out += pi2 / (2.0 * self.sys.mass(idx / 2));
        }
        out += pref * self.centrifugal_numerator(x, value, &grad, &hess)?;
        if self.sys.has_potential() {
            out += self.sys.potential_energy(x)? * value;
        }
        let vq = match self.kind {
            SurfaceKind::Linear | SurfaceKind::CenterOfMass => {
                quantum_potential_linear_data(&self.sys, &self.a, &self.b, self.r2_ref, x)?
            }
            SurfaceKind::PrincipalAxes => quantum_potential_quadratic(&self.sys, x)?,
        };
        out += vq * value;
        Ok(out)
    }
}

fn quantum_potential_linear_data(
    sys: &ParticleSystem,
    a: &[f64],
    b: &[f64],
    r2_ref: f64,
    coords: &[f64],
) -> Result<f64> {
    let q: f64 = (0..sys.n())
        .map(|g| sys.mass(g) * (b[g] * coords[2 * g] - a[g] * coords[2 * g + 1]))
        .sum();
    if q <= 0.0 {
        return Err(Error::DegenerateJacobian { value: q });
    }
    let hb = sys.hbar();
    Ok(-hb * hb * r2_ref / (8.0 * q * q))
}

/// Quantum potential of the linear (and center-of-mass) gauge:
/// `-hbar^2 Rr^2 / (8 Q^2)`.
pub fn quantum_potential_linear(
    sys: &ParticleSystem,
    chart: &LinearChart,
    coords: &[f64],
) -> Result<f64> {
    chart.validate(sys)?;
    sys.check_dim(coords.len())?;
    quantum_potential_linear_data(
        sys,
        chart.a_slice(),
        chart.b_slice(),
        chart.reference_inertia(sys),
        coords,
    )
}

/// Quantum potential of the principal-axes gauge:
/// `hbar^2 [ -R^2/(8Q^2) + (7-4N)/(8R^2) ]`.
pub fn quantum_potential_quadratic(sys: &ParticleSystem, coords: &[f64]) -> Result<f64> {
    sys.check_dim(coords.len())?;
    let sv = shape_quadratic(sys, coords);
    if sv.r_squared <= 0.0 {
        return Err(Error::DegenerateInertia { value: sv.r_squared, threshold: 0.0 });
    }
    if sv.q <= 0.0 {
        return Err(Error::DegenerateJacobian { value: sv.q });
    }
    let hb = sys.hbar();
    let n = sys.n() as f64;
    Ok(hb * hb
        * (-sv.r_squared / (8.0 * sv.q * sv.q) + (7.0 - 4.0 * n) / (8.0 * sv.r_squared)))
}

/// Moves the Faddeev-Popov factor into the wave function:
/// `psi~ = J^{1/2} psi`.
pub fn absorb_jacobian(chart: &SurfaceChart, psi: &WaveFunction) -> Result<WaveFunction> {
    if psi.jacobian_absorbed {
        return Err(Error::InvalidInput("wave function is already absorbed".into()));
    }
    let j = chart.fp_factor(psi.support_center());
    if j <= 0.0 {
        return Err(Error::DegenerateJacobian { value: j });
    }
    Ok(psi.multiplied(&chart.fp_c2().powf(0.5), true))
}

/// Moves the Faddeev-Popov factor back into the measure:
/// `psi = J^{-1/2} psi~`.
pub fn emit_jacobian(chart: &SurfaceChart, psi: &WaveFunction) -> Result<WaveFunction> {
    if !psi.jacobian_absorbed {
        return Err(Error::InvalidInput("wave function is not absorbed".into()));
    }
    let j = chart.fp_factor(psi.support_center());
    if j <= 0.0 {
        return Err(Error::DegenerateJacobian { value: j });
    }
    Ok(psi.multiplied(&chart.fp_c2().powf(-0.5), false))
}

/// Largest pointwise deviation `|H~ psi~ - J^{1/2} H (J^{-1/2} psi~)|`
/// over the given on-surface points: the two representations of the
/// Hamiltonian must agree, which pins down the quantum potential.
pub fn representation_consistency(
    chart: &SurfaceChart,
    ham: &HamiltonianOp,
    psi_absorbed: &WaveFunction,
    points: &[Vec<f64>],
) -> Result<f64> {
    if !psi_absorbed.jacobian_absorbed {
        return Err(Error::InvalidInput("expected an absorbed-representation function".into()));
    }
    let plain = emit_jacobian(chart, psi_absorbed)?;
    let mut max_dev = 0.0_f64;
    for x in points {
        let lhs = ham.apply_absorbed(psi_absorbed, x)?;
        let rhs = chart.fp_factor(x).sqrt() * ham.apply(&plain, x)?;
        max_dev = max_dev.max((lhs - rhs).norm());
    }
    Ok(max_dev)
}

/// One hermiticity trial: asymmetries relative to `‖phi‖ ‖psi‖` alongside
/// the matching relative quadrature error.
#[derive(Debug, Clone, Serialize)]
pub struct HermiticityTrial {
    /// `|<phi|H psi> - <H phi|psi>| / (‖phi‖ ‖psi‖)`.
    pub h_asymmetry: f64,
    /// `|<phi|Lambda psi> - <Lambda phi|psi>| / (‖phi‖ ‖psi‖)`.
    pub lambda_asymmetry: f64,
    /// Total reported quadrature error of the matrix elements, on the same
    /// scale.
    pub quadrature_error: f64,
}

/// Result of [`hermiticity_check`].
#[derive(Debug, Clone, Serialize)]
pub struct HermiticityReport {
    /// Gauge family.
    pub gauge: String,
    /// Angular-momentum sector.
    pub ell_z: f64,
    /// Per-trial results.
    pub trials: Vec<HermiticityTrial>,
}

impl HermiticityReport {
    /// Worst Hamiltonian asymmetry across trials.
    pub fn max_h_asymmetry(&self) -> f64 {
        self.trials.iter().map(|t| t.h_asymmetry).fold(0.0, f64::max)
    }

    /// Worst residual-angular-momentum asymmetry across trials.
    pub fn max_lambda_asymmetry(&self) -> f64 {
        self.trials.iter().map(|t| t.lambda_asymmetry).fold(0.0, f64::max)
    }

    /// True when every trial's asymmetries are below `factor` times its
    /// reported quadrature error.
    pub fn within(&self, factor: f64) -> bool {
        self.trials.iter().all(|t| {
            t.h_asymmetry < factor * t.quadrature_error
                && t.lambda_asymmetry < factor * t.quadrature_error
        })
    }
}

/// Conservative localization scale for a bump centered at the on-surface
/// point `x`: a fraction of the first-order distance — measured in the
/// chart's free coordinates, through the embedding — to the boundary of
/// the positivity domain (and, for the quadratic chart, to the pivot
/// hyperplane).
fn safe_sigma(chart: &SurfaceChart, x: &[f64]) -> f64 {
    let masses = &chart.masses;
    let n = masses.len();
    let dim = 2 * n;
    let q = chart.fp_factor_raw(x);
    // Ambient gradient of Q.
    let mut gq = vec![0.0; dim];
    match chart.kind {
        SurfaceKind::Linear | SurfaceKind::CenterOfMass => {
            for g in 0..n {
                gq[2 * g] = masses[g] * chart.b[g];
                gq[2 * g + 1] = -masses[g] * chart.a[g];
            }
        }
        SurfaceKind::PrincipalAxes => {
            for (j, &xj) in x.iter().enumerate() {
                let sigma = if j % 2 == 0 { 1.0 } else { -1.0 };
                gq[j] = sigma * masses[j / 2] * xj;
            }
        }
    }
    // Pull back along the embedding: grad_u (Q o embed).
    let nf = chart.free.len();
    let mut gu = vec![0.0; nf];
    for (slot, &k) in chart.free.iter().enumerate() {
        gu[slot] = gq[k];
    }
    match chart.kind {
        SurfaceKind::Linear | SurfaceKind::CenterOfMass => {
            for (row, &e) in chart.eliminated.iter().enumerate() {
                for slot in 0..nf {
                    gu[slot] += gq[e] * chart.solve[row * nf + slot];
                }
            }
        }
        SurfaceKind::PrincipalAxes => {
            let p = chart.pivot;
            let (xp, yp) = (x[2 * p], x[2 * p + 1]);
            for (slot, &k) in chart.free.iter().enumerate() {
                let dyp = if k == 2 * p {
                    -yp / xp
                } else if k % 2 == 0 {
                    -masses[k / 2] * x[k + 1] / (masses[p] * xp)
                } else {
                    -masses[k / 2] * x[k - 1] / (masses[p] * xp)
                };
                gu[slot] += gq[2 * p + 1] * dyp;
            }
        }
    }
    let gnorm = gu.iter().map(|g| g * g).sum::<f64>().sqrt();
    let mut dist = q / gnorm;
    if chart.kind == SurfaceKind::PrincipalAxes {
        dist = dist.min(x[2 * chart.pivot].abs());
    }
    let mut sigma = (dist / 12.0).min(0.3);
    // Nonlinear safeguard: the embedding can bend the Q = 0 boundary into
    // the box even when the first-order distance looks safe. Shrink until
    // Q keeps a healthy floor on the embedded box lattice.
    let anchor_free = chart.restrict(x);
    'shrink: for _ in 0..60 {
        let half = 8.5 * sigma;
        let mut lattice = vec![vec![0.0_f64; nf]];
        for slot in 0..nf {
            let mut next = Vec::with_capacity(lattice.len() * 3);
            for point in &lattice {
                for step in [-half, 0.0, half] {
                    let mut p = point.clone();
                    p[slot] = step;
                    next.push(p);
                }
            }
            lattice = next;
        }
        for offsets in &lattice {
            let u: Vec<f64> =
                anchor_free.iter().zip(offsets).map(|(c, d)| c + d).collect();
            let ok = match chart.embed(&u) {
                Ok(full) => chart.fp_factor_raw(&full) > 0.25 * q,
                Err(_) => false,
            };
            if !ok {
                sigma /= 1.4;
                continue 'shrink;
            }
        }
        break;
    }
    sigma
}

/// Draws random localized test pairs and reports the hermiticity defect of
/// the sector Hamiltonian and of the residual angular momentum under the
/// Faddeev-Popov inner product.
pub fn hermiticity_check(
    sys: &ParticleSystem,
    spec: &ChartSpec<'_>,
    ell_z: f64,
    n_trials: usize,
    seed: u64,
    quad: &QuadratureSpec,
) -> Result<HermiticityReport> {
    let chart = surface_chart(sys, spec)?;
    let ham = hamiltonian(sys, spec, ell_z)?;
    let (family, name) = match spec {
        ChartSpec::Linear(c) => (SurfaceFamily::Linear(c), "linear"),
        ChartSpec::CenterOfMass(c) => (SurfaceFamily::LinearCm(c), "center-of-mass"),
        ChartSpec::PrincipalAxes { .. } => (SurfaceFamily::Quadratic, "quadratic"),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = Vec::with_capacity(n_trials);
    for _ in 0..n_trials {
        // A well-interior anchor plus two nearby bump centers, drawn in the
        // chart's free coordinates.
        let anchor = sample_on_surface(sys, family, &mut rng, 1.0, 0.35)?;
        let sigma = safe_sigma(&chart, &anchor);
        let anchor_free = chart.restrict(&anchor);
        let nf = chart.free_dim();
        let draw_bump = |rng: &mut ChaCha8Rng| {
            let center: Vec<f64> = anchor_free
                .iter()
                .map(|c| c + rng.gen_range(-0.5..0.5) * sigma)
                .collect();
            let linear: Vec<f64> = (0..nf).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let quadratic: Vec<f64> = (0..nf).map(|_| rng.gen_range(-0.5..0.5)).collect();
            WaveFunction::gaussian_bump_on_chart(&chart, center, sigma, 1.0, linear, quadratic)
        };
        let phi = draw_bump(&mut rng);
        let psi = draw_bump(&mut rng);
        let norm_phi = inner_product(&chart, &phi, &phi, quad)?;
        let norm_psi = inner_product(&chart, &psi, &psi, quad)?;
        let scale = (norm_phi.value.re * norm_psi.value.re).sqrt();
        let (lo, hi) = support_box(&chart, &phi, &psi);

        let weighted = |f: &dyn Fn(&[f64]) -> Complex64, u: &[f64], x: &[f64]| -> Complex64 {
            let _ = u;
            let w = chart.weight(x);
            if w <= 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            w * f(x)
        };
        let h_right = integrate_on_chart(&chart, &lo, &hi, quad, |u, x| {
            weighted(
                &|x: &[f64]| {
                    phi.value_at(x).conj() * ham.apply(&psi, x).expect("interior point")
                },
                u,
                x,
            )
        })?;
        let h_left = integrate_on_chart(&chart, &lo, &hi, quad, |u, x| {
            weighted(
                &|x: &[f64]| {
                    ham.apply(&phi, x).expect("interior point").conj() * psi.value_at(x)
                },
                u,
                x,
            )
        })?;
        let lam_right = integrate_on_chart(&chart, &lo, &hi, quad, |u, x| {
            weighted(
                &|x: &[f64]| {
                    let g = psi.gradient_at(x);
                    phi.value_at(x).conj() * ham.lambda.apply(x, psi.value_at(x), &g)
                },
                u,
                x,
            )
        })?;
        let lam_left = integrate_on_chart(&chart, &lo, &hi, quad, |u, x| {
            weighted(
                &|x: &[f64]| {
                    let g = phi.gradient_at(x);
                    ham.lambda.apply(x, phi.value_at(x), &g).conj() * psi.value_at(x)
                },
                u,
                x,
            )
        })?;
        let quad_err = (h_right.error_estimate
            + h_left.error_estimate
            + lam_right.error_estimate
            + lam_left.error_estimate
            + norm_phi.error_estimate
            + norm_psi.error_estimate)
            / scale;
        trials.push(HermiticityTrial {
            h_asymmetry: (h_right.value - h_left.value).norm() / scale,
            lambda_asymmetry: (lam_right.value - lam_left.value).norm() / scale,
            quadrature_error: quad_err,
        });
    }
    Ok(HermiticityReport { gauge: name.to_string(), ell_z, trials })
}
