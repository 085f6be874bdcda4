//! Orbits and eigenfunctions of the residual angular momentum.
//!
//! The residual angular momentum generates a flow on each gauge surface,
//! and that flow has a closed form in both gauge families. In the linear
//! gauges every particle circles the fixed point `(B Q/R^2, -A Q/R^2)` of
//! its chart row at unit angular rate, so the single-valued eigenfunctions
//! carry integer eigenvalues, exactly like ordinary angular momentum. In
//! the principal-axes gauge the flow is elliptical with shape-dependent
//! frequency `Omega = sqrt(1 - 4Q^2/R^4)`, and the eigenvalues `n Omega`
//! are not integers in general — the gauge surface remembers how deformed
//! the configuration is.
//!
//! This module evaluates the closed-form orbits, the per-particle orbit
//! radii (which generate the kernel of the operator), and the
//! eigenfunction families, then verifies both against the operator engine:
//! the finite-difference derivative of an orbit must reproduce the
//! operator's coefficient field, and the eigenfunctions must satisfy the
//! eigenvalue equation pointwise.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gauge::{
    sample_on_surface, shape_linear, shape_quadratic, LinearChart, SurfaceFamily,
};
use crate::hilbert::WaveFunction;
use crate::model::ParticleSystem;
use crate::operators::{lambda_linear, lambda_quadratic};

/// How far a configuration may sit from the gauge surface, as a fraction of
/// the natural scale, before the closed-form orbit expressions stop being
/// meaningful.
const ON_SURFACE_TOL: f64 = 1e-12;

/// Relative deficit of `R^2 - 2Q` below which a principal-axes shape is
/// treated as exactly collinear.
const COLLINEAR_TOL: f64 = 1e-14;

fn surface_residual_linear(sys: &ParticleSystem, chart: &LinearChart, coords: &[f64]) -> f64 {
    let v = shape_linear(sys, chart, coords);
    let scale = (v.r_squared * sys.moment_of_inertia(coords)).sqrt();
    if scale > 0.0 {
        v.s.abs() / scale
    } else {
        v.s.abs()
    }
}

fn surface_residual_quadratic(sys: &ParticleSystem, coords: &[f64]) -> f64 {
    let v = shape_quadratic(sys, coords);
    if v.r_squared > 0.0 {
        v.s.abs() / v.r_squared
    } else {
        v.s.abs()
    }
}

fn require_on_surface_linear(
    sys: &ParticleSystem,
    chart: &LinearChart,
    coords: &[f64],
) -> Result<()> {
    let residual = surface_residual_linear(sys, chart, coords);
    if residual > ON_SURFACE_TOL {
        return Err(Error::OffSurface { residual, tolerance: ON_SURFACE_TOL });
    }
    Ok(())
}

fn require_on_surface_quadratic(sys: &ParticleSystem, coords: &[f64]) -> Result<()> {
    let residual = surface_residual_quadratic(sys, coords);
    if residual > ON_SURFACE_TOL {
        return Err(Error::OffSurface { residual, tolerance: ON_SURFACE_TOL });
    }
    Ok(())
}

/// `sin(z)/z` with the series continuation through `z = 0`.
fn sinc(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        let z2 = z * z;
        1.0 - z2 / 6.0 + z2 * z2 / 120.0
    } else {
        z.sin() / z
    }
}

/// Advances a linear-gauge configuration by the angle `alpha` along the
/// flow of the residual angular momentum: each particle rotates around the
/// fixed point `(B_g Q/R^2, -A_g Q/R^2)` of its chart row. The gauge
/// condition and `Q` are preserved exactly.
pub fn orbit_linear(
    sys: &ParticleSystem,
    chart: &LinearChart,
    coords: &[f64],
    alpha: f64,
) -> Result<Vec<f64>> {
    chart.validate(sys)?;
    sys.check_dim(coords.len())?;
    require_on_surface_linear(sys, chart, coords)?;
    let v = shape_linear(sys, chart, coords);
    let f = v.q / v.r_squared;
    let (c, s) = (alpha.cos(), alpha.sin());
    let mut out = vec![0.0; coords.len()];
    for g in 0..sys.n() {
        let cx = chart.b(g) * f;
        let cy = -chart.a(g) * f;
        let dx = coords[2 * g] - cx;
        let dy = coords[2 * g + 1] - cy;
        out[2 * g] = cx + c * dx + s * dy;
        out[2 * g + 1] = cy + c * dy - s * dx;
    }
    Ok(out)
}

/// Elliptical frequency `Omega = sqrt(1 - 4Q^2/R^4)` of the principal-axes
/// flow; `Omega = 1` on round shapes (`Q = 0`) and `Omega -> 0` at the
/// collinear degeneracy `2Q = R^2`.
pub fn omega_quadratic(sys: &ParticleSystem, coords: &[f64]) -> Result<f64> {
    sys.check_dim(coords.len())?;
    let v = shape_quadratic(sys, coords);
    if v.r_squared <= 0.0 {
        return Err(Error::DegenerateInertia { value: v.r_squared, threshold: 0.0 });
    }
    let deficit = v.r_squared - 2.0 * v.q;
    if deficit <= COLLINEAR_TOL * v.r_squared {
        return Err(Error::CollinearDegenerate);
    }
    Ok((deficit * (v.r_squared + 2.0 * v.q)).sqrt() / v.r_squared)
}

/// Advances a principal-axes configuration by `alpha` along the flow of the
/// residual angular momentum. The flow is elliptical,
///
/// ```text
/// X(alpha) =  cos(Omega a) X + sqrt((R^2+2Q)/(R^2-2Q)) sin(Omega a) Y
/// Y(alpha) = -sqrt((R^2-2Q)/(R^2+2Q)) sin(Omega a) X + cos(Omega a) Y
/// ```
///
/// implemented through `sin(Omega a)/Omega` so shapes close to collinear
/// (tiny `Omega`) stay finite; exactly collinear shapes are refused.
pub fn orbit_quadratic(sys: &ParticleSystem, coords: &[f64], alpha: f64) -> Result<Vec<f64>> {
    sys.check_dim(coords.len())?;
    require_on_surface_quadratic(sys, coords)?;
    let v = shape_quadratic(sys, coords);
    if v.r_squared <= 0.0 {
        return Err(Error::DegenerateInertia { value: v.r_squared, threshold: 0.0 });
    }
    if v.r_squared - 2.0 * v.q <= COLLINEAR_TOL * v.r_squared {
        return Err(Error::CollinearDegenerate);
    }
    let t = 2.0 * v.q / v.r_squared;
    let (a, b) = (1.0 - t, 1.0 + t);
    let omega = (a * b).sqrt();
    let c = (omega * alpha).cos();
    // sin(Omega a)/Omega: the paper's sqrt((R^2+2Q)/(R^2-2Q)) sin(Omega a)
    // equals b times this factor, and the reciprocal ellipse axis equals a
    // times it.
    let s_over = sinc(omega * alpha) * alpha;
    let mut out = vec![0.0; coords.len()];
    for g in 0..sys.n() {
        let (x, y) = (coords[2 * g], coords[2 * g + 1]);
        out[2 * g] = c * x + b * s_over * y;
        out[2 * g + 1] = -a * s_over * x + c * y;
    }
    Ok(out)
}

/// Squared per-particle orbit radii of the linear-gauge flow:
/// `rho_g^2 = (X_g - B_g Q/R^2)^2 + (Y_g + A_g Q/R^2)^2`. Any function of
/// these (and of `Q`) lies in the kernel of the residual angular momentum
/// on the gauge surface.
pub fn kernel_invariants_linear(
    sys: &ParticleSystem,
    chart: &LinearChart,
    coords: &[f64],
) -> Result<Vec<f64>> {
    chart.validate(sys)?;
    sys.check_dim(coords.len())?;
    require_on_surface_linear(sys, chart, coords)?;
    let v = shape_linear(sys, chart, coords);
    let f = v.q / v.r_squared;
    Ok((0..sys.n())
        .map(|g| {
            let dx = coords[2 * g] - chart.b(g) * f;
            let dy = coords[2 * g + 1] + chart.a(g) * f;
            dx * dx + dy * dy
        })
        .collect())
}

/// Squared per-particle orbit radii of the principal-axes flow:
/// `rho_g^2 = (1 - 2Q/R^2) X_g^2 + (1 + 2Q/R^2) Y_g^2`. Any function of
/// these and of `(Q, R^2)` lies in the kernel on the gauge surface.
pub fn kernel_invariants_quadratic(sys: &ParticleSystem, coords: &[f64]) -> Result<Vec<f64>> {
    sys.check_dim(coords.len())?;
    require_on_surface_quadratic(sys, coords)?;
    let v = shape_quadratic(sys, coords);
    if v.r_squared <= 0.0 {
        return Err(Error::DegenerateInertia { value: v.r_squared, threshold: 0.0 });
    }
    let t = 2.0 * v.q / v.r_squared;
    Ok((0..sys.n())
        .map(|g| {
            let (x, y) = (coords[2 * g], coords[2 * g + 1]);
            (1.0 - t) * x * x + (1.0 + t) * y * y
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Second-order jets: exact value/gradient/Hessian propagation.
// ---------------------------------------------------------------------------

/// A scalar with its exact gradient and Hessian over the ambient
/// coordinates. The eigenfunction phases compose `atan2`, square roots and
/// rational functions of the shape functionals; propagating second-order
/// jets through that composition gives analytic wave-function derivatives
/// without hand-expanding each chain rule.
#[derive(Clone)]
struct Jet2 {
    v: f64,
    g: Vec<f64>,
    /// Row-major `dim x dim`, symmetric.
    h: Vec<f64>,
}

impl Jet2 {
    fn constant(dim: usize, v: f64) -> Self {
        Self { v, g: vec![0.0; dim], h: vec![0.0; dim * dim] }
    }

    fn coordinate(x: &[f64], j: usize) -> Self {
        let dim = x.len();
        let mut g = vec![0.0; dim];
        g[j] = 1.0;
        Self { v: x[j], g, h: vec![0.0; dim * dim] }
    }

    fn dim(&self) -> usize {
        self.g.len()
    }

    fn add(&self, o: &Jet2) -> Jet2 {
        Jet2 {
            v: self.v + o.v,
            g: self.g.iter().zip(&o.g).map(|(a, b)| a + b).collect(),
            h: self.h.iter().zip(&o.h).map(|(a, b)| a + b).collect(),
        }
    }

    fn scale(&self, c: f64) -> Jet2 {
        Jet2 {
            v: c * self.v,
            g: self.g.iter().map(|a| c * a).collect(),
            h: self.h.iter().map(|a| c * a).collect(),
        }
    }

    fn shift(&self, c: f64) -> Jet2 {
        let mut out = self.clone();
        out.v += c;
        out
    }

    fn mul(&self, o: &Jet2) -> Jet2 {
        let dim = self.dim();
        let v = self.v * o.v;
        let g: Vec<f64> =
            (0..dim).map(|j| self.v * o.g[j] + o.v * self.g[j]).collect();
        let mut h = vec![0.0; dim * dim];
        for j in 0..dim {
            for k in 0..dim {
                h[j * dim + k] = self.v * o.h[j * dim + k]
                    + o.v * self.h[j * dim + k]
                    + self.g[j] * o.g[k]
                    + self.g[k] * o.g[j];
            }
        }
        Jet2 { v, g, h }
    }

    fn inv(&self) -> Jet2 {
        let dim = self.dim();
        let v = 1.0 / self.v;
        let v2 = v * v;
        let g: Vec<f64> = self.g.iter().map(|a| -a * v2).collect();
        let mut h = vec![0.0; dim * dim];
        for j in 0..dim {
            for k in 0..dim {
                h[j * dim + k] = -self.h[j * dim + k] * v2
                    + 2.0 * self.g[j] * self.g[k] * v2 * v;
            }
        }
        Jet2 { v, g, h }
    }

    fn sqrt(&self) -> Jet2 {
        let dim = self.dim();
        let s = self.v.sqrt();
        let g: Vec<f64> = self.g.iter().map(|a| a / (2.0 * s)).collect();
        let mut h = vec![0.0; dim * dim];
        let s3 = 4.0 * s * s * s;
        for j in 0..dim {
            for k in 0..dim {
                h[j * dim + k] =
                    self.h[j * dim + k] / (2.0 * s) - self.g[j] * self.g[k] / s3;
            }
        }
        Jet2 { v: s, g, h }
    }

    fn exp(&self) -> Jet2 {
        let dim = self.dim();
        let e = self.v.exp();
        let g: Vec<f64> = self.g.iter().map(|a| e * a).collect();
        let mut h = vec![0.0; dim * dim];
        for j in 0..dim {
            for k in 0..dim {
                h[j * dim + k] = e * (self.h[j * dim + k] + self.g[j] * self.g[k]);
            }
        }
        Jet2 { v: e, g, h }
    }

    /// `atan2(b, a)`; smooth wherever `(a, b) != (0, 0)` (the branch jump
    /// lives only in the value, which enters phases through `exp(i n ...)`
    /// with integer `n`).
    fn atan2(b: &Jet2, a: &Jet2) -> Jet2 {
        let dim = a.dim();
        let d = a.v * a.v + b.v * b.v;
        let v = b.v.atan2(a.v);
        let num: Vec<f64> = (0..dim).map(|j| a.v * b.g[j] - b.v * a.g[j]).collect();
        let g: Vec<f64> = num.iter().map(|n| n / d).collect();
        let mut h = vec![0.0; dim * dim];
        for j in 0..dim {
            for k in 0..dim {
                let dnum = a.g[k] * b.g[j] + a.v * b.h[j * dim + k]
                    - b.g[k] * a.g[j]
                    - b.v * a.h[j * dim + k];
                let dd = 2.0 * (a.v * a.g[k] + b.v * b.g[k]);
                h[j * dim + k] = dnum / d - num[j] * dd / (d * d);
            }
        }
        Jet2 { v, g, h }
    }

    /// Horner evaluation of a real polynomial at this jet; empty
    /// coefficients mean the constant one.
    fn polynomial(&self, coeffs: &[f64]) -> Jet2 {
        let dim = self.dim();
        if coeffs.is_empty() {
            return Jet2::constant(dim, 1.0);
        }
        let mut p = Jet2::constant(dim, *coeffs.last().unwrap());
        for c in coeffs.iter().rev().skip(1) {
            p = p.mul(self).shift(*c);
        }
        p
    }
}

// ---------------------------------------------------------------------------
// Eigenfunctions.
// ---------------------------------------------------------------------------

/// Kernel factor multiplying an eigenfunction: a product of Gaussians in
/// the squared orbit radii and polynomials in the conserved shape
/// functionals. Every such factor is annihilated by the residual angular
/// momentum on the gauge surface, so it may multiply any eigenfunction
/// without disturbing the eigenvalue.
#[derive(Debug, Clone, Serialize)]
pub struct KernelFactor {
    /// Gaussian decay rate per particle: the factor `exp(-w_g rho_g^2)`.
    pub widths: Vec<f64>,
    /// Polynomial coefficients (ascending) in the companion functional
    /// (`Q` in either gauge family); empty means the constant one.
    pub companion_poly: Vec<f64>,
    /// Polynomial coefficients (ascending) in the moment of inertia `R^2`;
    /// meaningful in the principal-axes gauge where `R^2` varies (in a
    /// linear chart the reference inertia is a constant, so this only
    /// rescales). Empty means the constant one.
    pub inertia_poly: Vec<f64>,
}

impl KernelFactor {
    /// The trivial factor `C = 1` for `n` particles.
    pub fn one(n: usize) -> Self {
        Self { widths: vec![0.0; n], companion_poly: Vec::new(), inertia_poly: Vec::new() }
    }

    /// Gaussian factor `exp(-sum w_g rho_g^2)`.
    pub fn gaussian(widths: Vec<f64>) -> Self {
        Self { widths, companion_poly: Vec::new(), inertia_poly: Vec::new() }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.widths.len() != n {
            return Err(Error::InvalidInput(format!(
                "kernel factor has {} widths for {} particles",
                self.widths.len(),
                n
            )));
        }
        if self.widths.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput(
                "kernel Gaussian widths must be finite and nonnegative".into(),
            ));
        }
        if self
            .companion_poly
            .iter()
            .chain(&self.inertia_poly)
            .any(|c| !c.is_finite())
        {
            return Err(Error::InvalidInput("kernel coefficients must be finite".into()));
        }
        Ok(())
    }

    /// Support radius heuristic for quadrature boxes: the Gaussian factors
    /// decay on the scale of the widest orbit radius they allow.
    fn support_radius(&self) -> f64 {
        let min_w = self
            .widths
            .iter()
            .copied()
            .filter(|w| *w > 0.0)
            .fold(f64::INFINITY, f64::min);
        if min_w.is_finite() {
            10.0 + 8.0 / min_w.sqrt()
        } else {
            50.0
        }
    }
}

/// One member of the eigenfunction family: the per-particle integers and
/// the kernel factor. In a linear gauge the eigenvalue is `hbar` times the
/// integer total; in the principal-axes gauge it is `hbar` times the total
/// times the shape frequency `Omega(Q, R^2)`.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualEigenfunction {
    /// Winding integer per particle.
    pub integers: Vec<i64>,
    /// Kernel factor multiplying the phase.
    pub kernel: KernelFactor,
}

impl ResidualEigenfunction {
    /// Builds a descriptor; the kernel must match the particle count.
    pub fn new(integers: Vec<i64>, kernel: KernelFactor) -> Result<Self> {
        kernel.validate(integers.len())?;
        Ok(Self { integers, kernel })
    }

    /// Sum of the per-particle integers.
    pub fn total(&self) -> i64 {
        self.integers.iter().sum()
    }
}

/// Eigenvalue of a linear-gauge eigenfunction: `hbar` times the integer
/// total, independent of the configuration.
pub fn linear_eigenvalue(sys: &ParticleSystem, spec: &ResidualEigenfunction) -> f64 {
    sys.hbar() * spec.total() as f64
}

/// Pointwise eigenvalue of a principal-axes eigenfunction:
/// `hbar * (sum n_g) * Omega(Q, R^2)` at the given configuration.
pub fn quadratic_eigenvalue(
    sys: &ParticleSystem,
    spec: &ResidualEigenfunction,
    coords: &[f64],
) -> Result<f64> {
    Ok(sys.hbar() * spec.total() as f64 * omega_quadratic(sys, coords)?)
}

/// Assembles `Psi = C exp(i Phi)` and its derivatives from real jets for
/// the kernel factor and the phase.
fn assemble(kernel: Jet2, phase: Jet2) -> (Complex64, Vec<Complex64>, Vec<Complex64>) {
    let dim = kernel.dim();
    let e = Complex64::from_polar(1.0, phase.v);
    let value = e * kernel.v;
    let i = Complex64::i();
    let gradient: Vec<Complex64> =
        (0..dim).map(|j| e * (kernel.g[j] + i * kernel.v * phase.g[j])).collect();
    let mut hessian = vec![Complex64::new(0.0, 0.0); dim * dim];
    for j in 0..dim {
        for k in 0..dim {
            let real = kernel.h[j * dim + k] - kernel.v * phase.g[j] * phase.g[k];
            let imag = kernel.g[j] * phase.g[k]
                + kernel.g[k] * phase.g[j]
                + kernel.v * phase.h[j * dim + k];
            hessian[j * dim + k] = e * Complex64::new(real, imag);
        }
    }
    (value, gradient, hessian)
}

/// Linear-gauge shape jets shared by the phase and the kernel: `Q` and the
/// per-particle orbit-centered displacements `(u_g, v_g)` scaled by `R^2`.
fn linear_frame_jets(
    sys: &ParticleSystem,
    chart: &LinearChart,
    x: &[f64],
) -> (Jet2, Vec<(Jet2, Jet2)>) {
    let dim = x.len();
    let r2 = chart.reference_inertia(sys);
    // Q is linear in the coordinates: assemble its jet directly.
    let mut q = Jet2::constant(dim, 0.0);
    for g in 0..sys.n() {
        let m = sys.mass(g);
        q.v += m * (chart.b(g) * x[2 * g] - chart.a(g) * x[2 * g + 1]);
        q.g[2 * g] = m * chart.b(g);
        q.g[2 * g + 1] = -m * chart.a(g);
    }
    let uv = (0..sys.n())
        .map(|g| {
            let u = Jet2::coordinate(x, 2 * g).scale(r2).add(&q.scale(-chart.b(g)));
            let v = Jet2::coordinate(x, 2 * g + 1).scale(r2).add(&q.scale(chart.a(g)));
            (u, v)
        })
        .collect();
    (q, uv)
}

/// Eigenfunction of the residual angular momentum in a linear gauge:
/// `Psi = C exp(i sum n_g alpha_g)` with the per-particle angle
/// `alpha_g = atan2(R^2 Y_g + Q A_g, R^2 X_g - Q B_g)` measured around the
/// orbit center. Integer windings keep `Psi` single-valued; the returned
/// eigenvalue of the operator is `hbar` times the integer total. Value,
/// gradient and Hessian are all analytic.
pub fn eigenfunction_linear(
    sys: &ParticleSystem,
    chart: &LinearChart,
    spec: &ResidualEigenfunction,
) -> Result<WaveFunction> {
    chart.validate(sys)?;
    if spec.integers.len() != sys.n() {
        return Err(Error::InvalidInput(format!(
            "{} winding integers for {} particles",
            spec.integers.len(),
            sys.n()
        )));
    }
    spec.kernel.validate(sys.n())?;
    let dim = sys.dim();
    let sys = sys.clone();
    let chart = chart.clone();
    let spec = spec.clone();
    let radius = spec.kernel.support_radius();
    let r4 = {
        let r2 = chart.reference_inertia(&sys);
        r2 * r2
    };
    let eval = move |x: &[f64]| -> (Complex64, Vec<Complex64>, Vec<Complex64>) {
        let (q, uv) = linear_frame_jets(&sys, &chart, x);
        let mut phase = Jet2::constant(dim, 0.0);
        let mut decay = Jet2::constant(dim, 0.0);
        for (g, (u, v)) in uv.iter().enumerate() {
            let n = spec.integers[g];
            if n != 0 {
                phase = phase.add(&Jet2::atan2(v, u).scale(n as f64));
            }
            let w = spec.kernel.widths[g];
            if w != 0.0 {
                // rho_g^2 = (u^2 + v^2) / R^4.
                let rho2 = u.mul(u).add(&v.mul(v)).scale(1.0 / r4);
                decay = decay.add(&rho2.scale(-w));
            }
        }
        let kernel = q.polynomial(&spec.kernel.companion_poly).mul(&decay.exp());
        assemble(kernel, phase)
    };
    Ok(wave_function_from_eval(dim, eval, radius))
}

/// Principal-axes shape jets: `Q`, `R^2` and the ellipse ratio
/// `w = sqrt((R^2 + 2Q)/(R^2 - 2Q))`; `None` when the shape is degenerate
/// (collinear or zero inertia), where the wave function is defined as zero
/// — the degenerate set is the measure-zero boundary of the Gribov cell,
/// matching how the quadrature layer treats boundary points.
fn quadratic_frame_jets(sys: &ParticleSystem, x: &[f64]) -> Option<(Jet2, Jet2, Jet2)> {
    let dim = x.len();
    let mut q = Jet2::constant(dim, 0.0);
    let mut r2 = Jet2::constant(dim, 0.0);
    for g in 0..sys.n() {
        let m = sys.mass(g);
        let (xx, yy) = (x[2 * g], x[2 * g + 1]);
        q.v += 0.5 * m * (xx * xx - yy * yy);
        q.g[2 * g] = m * xx;
        q.g[2 * g + 1] = -m * yy;
        q.h[2 * g * dim + 2 * g] = m;
        q.h[(2 * g + 1) * dim + 2 * g + 1] = -m;
        r2.v += m * (xx * xx + yy * yy);
        r2.g[2 * g] = 2.0 * m * xx;
        r2.g[2 * g + 1] = 2.0 * m * yy;
        r2.h[2 * g * dim + 2 * g] = 2.0 * m;
        r2.h[(2 * g + 1) * dim + 2 * g + 1] = 2.0 * m;
    }
    let deficit = r2.add(&q.scale(-2.0));
    if r2.v <= 0.0 || deficit.v <= COLLINEAR_TOL * r2.v {
        return None;
    }
    let excess = r2.add(&q.scale(2.0));
    let w = excess.mul(&deficit.inv()).sqrt();
    Some((q, r2, w))
}

/// Eigenfunction of the residual angular momentum in the principal-axes
/// gauge: `Psi = C exp(i sum n_g atan2(w Y_g, X_g))` with the ellipse
/// ratio `w = sqrt((R^2+2Q)/(R^2-2Q))`. The operator eigenvalue is
/// `hbar (sum n_g) Omega(Q, R^2)`, which varies over the gauge surface —
/// evaluate it per point with [`quadratic_eigenvalue`]. On collinear
/// shapes (`2Q = R^2`, the boundary of the Gribov cell) the function and
/// its derivatives are defined as zero.
pub fn eigenfunction_quadratic(
    sys: &ParticleSystem,
    spec: &ResidualEigenfunction,
) -> Result<WaveFunction> {
    if spec.integers.len() != sys.n() {
        return Err(Error::InvalidInput(format!(
            "{} winding integers for {} particles",
            spec.integers.len(),
            sys.n()
        )));
    }
    spec.kernel.validate(sys.n())?;
    let dim = sys.dim();
    let sys = sys.clone();
    let spec = spec.clone();
    let radius = spec.kernel.support_radius();
    let eval = move |x: &[f64]| -> (Complex64, Vec<Complex64>, Vec<Complex64>) {
        let Some((q, r2, w)) = quadratic_frame_jets(&sys, x) else {
            let zero = Complex64::new(0.0, 0.0);
            return (zero, vec![zero; dim], vec![zero; dim * dim]);
        };
        let t = q.scale(2.0).mul(&r2.inv());
        let mut phase = Jet2::constant(dim, 0.0);
        let mut decay = Jet2::constant(dim, 0.0);
        for g in 0..sys.n() {
            let xg = Jet2::coordinate(x, 2 * g);
            let yg = Jet2::coordinate(x, 2 * g + 1);
            let n = spec.integers[g];
            if n != 0 {
                phase = phase.add(&Jet2::atan2(&w.mul(&yg), &xg).scale(n as f64));
            }
            let wg = spec.kernel.widths[g];
            if wg != 0.0 {
                // rho_g^2 = (1 - 2Q/R^2) X^2 + (1 + 2Q/R^2) Y^2.
                let rho2 = t
                    .scale(-1.0)
                    .shift(1.0)
                    .mul(&xg.mul(&xg))
                    .add(&t.shift(1.0).mul(&yg.mul(&yg)));
                decay = decay.add(&rho2.scale(-wg));
            }
        }
        let kernel = q
            .polynomial(&spec.kernel.companion_poly)
            .mul(&r2.polynomial(&spec.kernel.inertia_poly))
            .mul(&decay.exp());
        assemble(kernel, phase)
    };
    Ok(wave_function_from_eval(dim, eval, radius))
}

/// Wraps a combined (value, gradient, hessian) evaluator as a
/// [`WaveFunction`] centered at the origin.
fn wave_function_from_eval(
    dim: usize,
    eval: impl Fn(&[f64]) -> (Complex64, Vec<Complex64>, Vec<Complex64>)
        + Send
        + Sync
        + Clone
        + 'static,
    radius: f64,
) -> WaveFunction {
    let e1 = eval.clone();
    let e2 = eval.clone();
    WaveFunction::new(
        dim,
        move |x| eval(x).0,
        move |x| e1(x).1,
        move |x| e2(x).2,
        vec![0.0; dim],
        radius,
    )
}

// ---------------------------------------------------------------------------
// Verification against the operator engine.
// ---------------------------------------------------------------------------

/// Outcome of comparing a finite-difference orbit derivative against the
/// operator coefficient field.
#[derive(Debug, Clone, Serialize)]
pub struct GeneratorReport {
    /// Step used for the central difference.
    pub dalpha: f64,
    /// Largest component deviation between the two vector fields.
    pub max_deviation: f64,
}

/// Verifies that the closed-form linear orbit is generated by the residual
/// angular momentum: the central difference `d(orbit)/d alpha` at
/// `alpha = 0` must match the operator's Poisson-bracket field. With the
/// operator stored as `(hbar/i) c . grad`, that bracket field is
/// `-c / hbar`.
pub fn verify_generator_linear(
    sys: &ParticleSystem,
    chart: &LinearChart,
    coords: &[f64],
    dalpha: f64,
) -> Result<GeneratorReport> {
    if !(dalpha > 0.0) {
        return Err(Error::InvalidInput("dalpha must be positive".into()));
    }
    let op = lambda_linear(sys, chart)?;
    let c = op.coeff_at(coords);
    let plus = orbit_linear(sys, chart, coords, dalpha)?;
    let minus = orbit_linear(sys, chart, coords, -dalpha)?;
    let hb = sys.hbar();
    let max_deviation = c
        .iter()
        .enumerate()
        .map(|(j, cj)| {
            let fd = (plus[j] - minus[j]) / (2.0 * dalpha);
            (fd + cj / hb).abs()
        })
        .fold(0.0, f64::max);
    Ok(GeneratorReport { dalpha, max_deviation })
}

/// Quadratic-gauge counterpart of [`verify_generator_linear`].
pub fn verify_generator_quadratic(
    sys: &ParticleSystem,
    coords: &[f64],
    dalpha: f64,
) -> Result<GeneratorReport> {
    if !(dalpha > 0.0) {
        return Err(Error::InvalidInput("dalpha must be positive".into()));
    }
    let op = lambda_quadratic(sys)?;
    let c = op.coeff_at(coords);
    let plus = orbit_quadratic(sys, coords, dalpha)?;
    let minus = orbit_quadratic(sys, coords, -dalpha)?;
    let hb = sys.hbar();
    let max_deviation = c
        .iter()
        .enumerate()
        .map(|(j, cj)| {
            let fd = (plus[j] - minus[j]) / (2.0 * dalpha);
            (fd + cj / hb).abs()
        })
        .fold(0.0, f64::max);
    Ok(GeneratorReport { dalpha, max_deviation })
}

/// Drift of the conserved quantities along one closed-form orbit sweep,
/// every entry normalized by `1 + |reference value|`.
#[derive(Debug, Clone, Serialize)]
pub struct OrbitSweep {
    /// Largest gauge-condition residual along the sweep.
    pub max_gauge_residual: f64,
    /// Largest drift of the companion functional `Q`.
    pub max_companion_drift: f64,
    /// Largest drift of the moment of inertia.
    pub max_inertia_drift: f64,
    /// Largest drift of any squared orbit radius.
    pub max_radius_drift: f64,
}

impl OrbitSweep {
    /// Worst drift across all monitored quantities.
    pub fn worst(&self) -> f64 {
        self.max_gauge_residual
            .max(self.max_companion_drift)
            .max(self.max_inertia_drift)
            .max(self.max_radius_drift)
    }
}

/// Sweeps the linear orbit over `alpha` in `[0, 2 pi]` and reports the
/// drift of the conserved quantities.
pub fn sweep_orbit_linear(
    sys: &ParticleSystem,
    chart: &LinearChart,
    coords: &[f64],
    n_steps: usize,
) -> Result<OrbitSweep> {
    if n_steps == 0 {
        return Err(Error::InvalidInput("orbit sweep needs at least one step".into()));
    }
    let q0 = shape_linear(sys, chart, coords).q;
    let i0 = sys.moment_of_inertia(coords);
    let radii0 = kernel_invariants_linear(sys, chart, coords)?;
    let mut sweep = OrbitSweep {
        max_gauge_residual: 0.0,
        max_companion_drift: 0.0,
        max_inertia_drift: 0.0,
        max_radius_drift: 0.0,
    };
    for step in 0..=n_steps {
        let alpha = std::f64::consts::TAU * step as f64 / n_steps as f64;
        let x = orbit_linear(sys, chart, coords, alpha)?;
        let v = shape_linear(sys, chart, &x);
        sweep.max_gauge_residual =
            sweep.max_gauge_residual.max(surface_residual_linear(sys, chart, &x));
        sweep.max_companion_drift =
            sweep.max_companion_drift.max((v.q - q0).abs() / (1.0 + q0.abs()));
        sweep.max_inertia_drift = sweep
            .max_inertia_drift
            .max((sys.moment_of_inertia(&x) - i0).abs() / (1.0 + i0.abs()));
        let radii = kernel_invariants_linear(sys, chart, &x)?;
        for (r, r0) in radii.iter().zip(&radii0) {
            sweep.max_radius_drift =
                sweep.max_radius_drift.max((r - r0).abs() / (1.0 + r0.abs()));
        }
    }
    Ok(sweep)
}

/// Sweeps the quadratic orbit over one full period `alpha` in
/// `[0, 2 pi / Omega]` and reports the drift of the conserved quantities.
pub fn sweep_orbit_quadratic(
    sys: &ParticleSystem,
    coords: &[f64],
    n_steps: usize,
) -> Result<OrbitSweep> {
    if n_steps == 0 {
        return Err(Error::InvalidInput("orbit sweep needs at least one step".into()));
    }
    let omega = omega_quadratic(sys, coords)?;
    let v0 = shape_quadratic(sys, coords);
    let radii0 = kernel_invariants_quadratic(sys, coords)?;
    let mut sweep = OrbitSweep {
        max_gauge_residual: 0.0,
        max_companion_drift: 0.0,
        max_inertia_drift: 0.0,
        max_radius_drift: 0.0,
    };
    for step in 0..=n_steps {
        let alpha = std::f64::consts::TAU / omega * step as f64 / n_steps as f64;
        let x = orbit_quadratic(sys, coords, alpha)?;
        let v = shape_quadratic(sys, &x);
        sweep.max_gauge_residual =
            sweep.max_gauge_residual.max(surface_residual_quadratic(sys, &x));
        sweep.max_companion_drift =
            sweep.max_companion_drift.max((v.q - v0.q).abs() / (1.0 + v0.q.abs()));
        sweep.max_inertia_drift = sweep
            .max_inertia_drift
            .max((v.r_squared - v0.r_squared).abs() / (1.0 + v0.r_squared.abs()));
        let radii = kernel_invariants_quadratic(sys, &x)?;
        for (r, r0) in radii.iter().zip(&radii0) {
            sweep.max_radius_drift =
                sweep.max_radius_drift.max((r - r0).abs() / (1.0 + r0.abs()));
        }
    }
    Ok(sweep)
}

/// Distance (infinity norm, normalized by `1 + |coords|_inf`) between a
/// quadratic configuration and its advance by one full period
/// `2 pi / Omega`; exact periodicity means zero.
pub fn quadratic_period_error(sys: &ParticleSystem, coords: &[f64]) -> Result<f64> {
    let omega = omega_quadratic(sys, coords)?;
    let back = orbit_quadratic(sys, coords, std::f64::consts::TAU / omega)?;
    let scale = 1.0 + coords.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    Ok(coords
        .iter()
        .zip(&back)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / scale)
}

/// Result of checking the eigenvalue equation pointwise on random
/// on-surface configurations.
#[derive(Debug, Clone, Serialize)]
pub struct EigenfunctionCheck {
    /// Points sampled.
    pub points: usize,
    /// Largest pointwise `|Lambda Psi - lambda Psi| / (1 + |Psi|)`.
    pub max_deviation: f64,
}

/// Applies the residual angular momentum to an eigenfunction at random
/// on-surface points of a linear chart and reports the worst deviation
/// from `hbar (sum n_g) Psi`.
pub fn verify_eigenfunction_linear(
    sys: &ParticleSystem,
    chart: &LinearChart,
    spec: &ResidualEigenfunction,
    n_points: usize,
    seed: u64,
) -> Result<EigenfunctionCheck> {
    let psi = eigenfunction_linear(sys, chart, spec)?;
    let op = lambda_linear(sys, chart)?;
    let eigenvalue = linear_eigenvalue(sys, spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_deviation = 0.0_f64;
    for _ in 0..n_points {
        let x = sample_on_surface(sys, SurfaceFamily::Linear(chart), &mut rng, 1.0, 0.2)?;
        let value = psi.value_at(&x);
        let gradient = psi.gradient_at(&x);
        let applied = op.apply(&x, value, &gradient);
        let dev = (applied - eigenvalue * value).norm() / (1.0 + value.norm());
        max_deviation = max_deviation.max(dev);
    }
    Ok(EigenfunctionCheck { points: n_points, max_deviation })
}

/// Applies the residual angular momentum to a principal-axes eigenfunction
/// at random nondegenerate on-surface points and reports the worst
/// deviation from the pointwise eigenvalue `hbar (sum n_g) Omega`.
pub fn verify_eigenfunction_quadratic(
    sys: &ParticleSystem,
    spec: &ResidualEigenfunction,
    n_points: usize,
    seed: u64,
) -> Result<EigenfunctionCheck> {
    let psi = eigenfunction_quadratic(sys, spec)?;
    let op = lambda_quadratic(sys)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_deviation = 0.0_f64;
    for _ in 0..n_points {
        let x = sample_on_surface(sys, SurfaceFamily::Quadratic, &mut rng, 1.0, 0.2)?;
        let eigenvalue = quadratic_eigenvalue(sys, spec, &x)?;
        let value = psi.value_at(&x);
        let gradient = psi.gradient_at(&x);
        let applied = op.apply(&x, value, &gradient);
        let dev = (applied - eigenvalue * value).norm() / (1.0 + value.norm());
        max_deviation = max_deviation.max(dev);
    }
    Ok(EigenfunctionCheck { points: n_points, max_deviation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauge::{fix_quadratic, project_linear, remove_center_of_mass};
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn three_body() -> (ParticleSystem, LinearChart) {
        let sys = ParticleSystem::new(vec![1.0, 2.0, 0.7]).unwrap();
        let chart = LinearChart::new(vec![0.4, -0.2, 0.9], vec![1.0, 0.3, -0.5]).unwrap();
        (sys, chart)
    }

    fn quadratic_config(seed: u64) -> (ParticleSystem, Vec<f64>) {
        let sys = ParticleSystem::new(vec![1.0, 1.6, 0.8]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = sample_on_surface(&sys, SurfaceFamily::Quadratic, &mut rng, 1.0, 0.3).unwrap();
        (sys, x)
    }

    #[test]
    fn linear_orbits_preserve_the_gauge_functionals() {
        let (sys, chart) = three_body();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x0 =
            sample_on_surface(&sys, SurfaceFamily::Linear(&chart), &mut rng, 1.0, 0.2).unwrap();

        // alpha = 0 is the identity (up to one rounding in the
        // center-plus-offset reconstruction) and alpha = 2 pi returns.
        let same = orbit_linear(&sys, &chart, &x0, 0.0).unwrap();
        for (a, b) in same.iter().zip(&x0) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        let looped = orbit_linear(&sys, &chart, &x0, std::f64::consts::TAU).unwrap();
        for (a, b) in looped.iter().zip(&x0) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-13);
        }

        // Group law.
        let one = orbit_linear(&sys, &chart, &x0, 0.7).unwrap();
        let two = orbit_linear(&sys, &chart, &one, -1.9).unwrap();
        let direct = orbit_linear(&sys, &chart, &x0, 0.7 - 1.9).unwrap();
        for (a, b) in two.iter().zip(&direct) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }

        // Conservation along a full sweep.
        let sweep = sweep_orbit_linear(&sys, &chart, &x0, 257).unwrap();
        assert!(sweep.worst() < 1e-12, "drift {:.3e}", sweep.worst());

        // Off-surface starts are refused.
        let mut off = x0.clone();
        off[0] += 0.1;
        assert!(matches!(
            orbit_linear(&sys, &chart, &off, 0.3),
            Err(Error::OffSurface { .. })
        ));
    }

    #[test]
    fn quadratic_orbits_rotate_with_frequency_omega() {
        let (sys, x0) = quadratic_config(5);
        let sweep = sweep_orbit_quadratic(&sys, &x0, 257).unwrap();
        assert!(sweep.worst() < 1e-12, "drift {:.3e}", sweep.worst());
        let period = quadratic_period_error(&sys, &x0).unwrap();
        assert!(period < 1e-10, "period error {:.3e}", period);

        // Group law.
        let one = orbit_quadratic(&sys, &x0, 0.4).unwrap();
        let two = orbit_quadratic(&sys, &one, 0.9).unwrap();
        let direct = orbit_quadratic(&sys, &x0, 1.3).unwrap();
        for (a, b) in two.iter().zip(&direct) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }

        // A round shape rotates rigidly with Omega = 1: one particle on
        // each axis at matched radii gives S = 0 and Q = 0.
        let round_sys = ParticleSystem::new(vec![1.0, 1.0]).unwrap();
        let d = 0.8;
        let round = vec![d, 0.0, 0.0, d];
        assert_abs_diff_eq!(shape_quadratic(&round_sys, &round).q, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            omega_quadratic(&round_sys, &round).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        let alpha = 0.6;
        let turned = orbit_quadratic(&round_sys, &round, alpha).unwrap();
        let (c, s) = (alpha.cos(), alpha.sin());
        for g in 0..2 {
            let (x, y) = (round[2 * g], round[2 * g + 1]);
            assert_abs_diff_eq!(turned[2 * g], c * x + s * y, epsilon = 1e-14);
            assert_abs_diff_eq!(turned[2 * g + 1], -s * x + c * y, epsilon = 1e-14);
        }

        // Collinear shapes are refused.
        let collinear = vec![1.0, 0.0, -0.7, 0.0];
        assert!(matches!(
            orbit_quadratic(&round_sys, &collinear, 0.1),
            Err(Error::CollinearDegenerate)
        ));
        assert!(matches!(
            omega_quadratic(&round_sys, &collinear),
            Err(Error::CollinearDegenerate)
        ));
    }

    #[test]
    fn kernel_invariants_match_their_closed_forms() {
        // Polar chart, one particle on the positive axis: the orbit center
        // is the point itself, so the radius vanishes.
        let sys = ParticleSystem::new(vec![1.7]).unwrap();
        let chart = LinearChart::new(vec![0.0], vec![1.0]).unwrap();
        let rho = kernel_invariants_linear(&sys, &chart, &[1.3, 0.0]).unwrap();
        assert_abs_diff_eq!(rho[0], 0.0, epsilon = 1e-15);

        // Quadratic gauge with Q = 0: the radii reduce to |R_g|^2.
        let sys2 = ParticleSystem::new(vec![1.0, 1.0]).unwrap();
        let coords = vec![0.8, 0.0, 0.0, 0.8];
        let rho = kernel_invariants_quadratic(&sys2, &coords).unwrap();
        assert_abs_diff_eq!(rho[0], 0.64, epsilon = 1e-15);
        assert_abs_diff_eq!(rho[1], 0.64, epsilon = 1e-15);

        // Kernel members are annihilated pointwise: zero windings with a
        // Gaussian kernel factor.
        let (sys3, chart3) = three_body();
        let spec = ResidualEigenfunction::new(
            vec![0, 0, 0],
            KernelFactor {
                widths: vec![0.3, 0.1, 0.4],
                companion_poly: vec![0.2, 1.0],
                inertia_poly: Vec::new(),
            },
        )
        .unwrap();
        let check = verify_eigenfunction_linear(&sys3, &chart3, &spec, 40, 9).unwrap();
        assert!(check.max_deviation < 1e-11, "kernel leak {:.3e}", check.max_deviation);

        let (sys4, _) = quadratic_config(11);
        let spec4 = ResidualEigenfunction::new(
            vec![0, 0, 0],
            KernelFactor {
                widths: vec![0.2, 0.3, 0.1],
                companion_poly: vec![0.5, 0.7],
                inertia_poly: vec![1.0, 0.25],
            },
        )
        .unwrap();
        let check4 = verify_eigenfunction_quadratic(&sys4, &spec4, 40, 13).unwrap();
        assert!(check4.max_deviation < 1e-11, "kernel leak {:.3e}", check4.max_deviation);
    }

    #[test]
    fn eigenfunctions_satisfy_the_eigenvalue_equation() {
        let (sys, chart) = three_body();
        for integers in [vec![1, 0, 0], vec![2, -1, 3]] {
            let spec = ResidualEigenfunction::new(
                integers,
                KernelFactor::gaussian(vec![0.2, 0.15, 0.3]),
            )
            .unwrap();
            let check = verify_eigenfunction_linear(&sys, &chart, &spec, 100, 17).unwrap();
            assert!(
                check.max_deviation < 1e-10,
                "linear eigenvalue deviation {:.3e}",
                check.max_deviation
            );
        }

        let (sys_q, x) = quadratic_config(23);
        for integers in [vec![1, 0, 0], vec![1, 2, -1]] {
            let spec = ResidualEigenfunction::new(
                integers,
                KernelFactor::gaussian(vec![0.25, 0.1, 0.2]),
            )
            .unwrap();
            let check = verify_eigenfunction_quadratic(&sys_q, &spec, 100, 29).unwrap();
            assert!(
                check.max_deviation < 1e-9,
                "quadratic eigenvalue deviation {:.3e}",
                check.max_deviation
            );
        }

        // The quadratic eigenvalue tracks Omega across shapes: the ratio of
        // eigenvalues at two shapes equals the ratio of frequencies.
        let spec = ResidualEigenfunction::new(vec![1, 1, 1], KernelFactor::one(3)).unwrap();
        let (_, x2) = quadratic_config(31);
        let l1 = quadratic_eigenvalue(&sys_q, &spec, &x).unwrap();
        let l2 = quadratic_eigenvalue(&sys_q, &spec, &x2).unwrap();
        let w1 = omega_quadratic(&sys_q, &x).unwrap();
        let w2 = omega_quadratic(&sys_q, &x2).unwrap();
        assert_abs_diff_eq!(l1 / l2, w1 / w2, epsilon = 1e-13);
        assert!((w1 / w2 - 1.0).abs() > 1e-3, "shapes should differ");

        // Single-valuedness across the branch cut of the per-particle
        // angles: values agree approaching the cut from both sides.
        let spec1 = ResidualEigenfunction::new(vec![1, 0, 0], KernelFactor::one(3)).unwrap();
        let psi = eigenfunction_linear(&sys, &chart, &spec1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let base =
            sample_on_surface(&sys, SurfaceFamily::Linear(&chart), &mut rng, 1.0, 0.2).unwrap();
        // Walk particle 1 to the negative-u side of its orbit center and
        // straddle v = 0 (the atan2 cut) with a tiny admissible
        // displacement.
        let probe = |eps: f64| {
            let mut x = base.clone();
            x[3] += eps;
            project_linear(&sys, &chart, &mut x);
            psi.value_at(&x)
        };
        let above = probe(1e-9);
        let below = probe(-1e-9);
        assert!(
            (above - below).norm() < 1e-6,
            "value jump {:.3e} across the cut",
            (above - below).norm()
        );
    }

    #[test]
    fn generator_matches_finite_differences() {
        let (sys, chart) = three_body();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x0 =
            sample_on_surface(&sys, SurfaceFamily::Linear(&chart), &mut rng, 1.0, 0.2).unwrap();
        let rep = verify_generator_linear(&sys, &chart, &x0, 1e-4).unwrap();
        assert!(rep.max_deviation < 1e-8, "linear FD deviation {:.3e}", rep.max_deviation);

        let (sys_q, xq) = quadratic_config(7);
        let rep = verify_generator_quadratic(&sys_q, &xq, 1e-4).unwrap();
        assert!(rep.max_deviation < 1e-8, "quadratic FD deviation {:.3e}", rep.max_deviation);

        // Central differences converge at second order in the step.
        let steps = [2e-2, 1e-2, 5e-3, 2.5e-3];
        let devs: Vec<f64> = steps
            .iter()
            .map(|&h| verify_generator_quadratic(&sys_q, &xq, h).unwrap().max_deviation)
            .collect();
        let (p, _) = crate::numerics::fit::power_law(&steps, &devs).unwrap();
        assert!((p - 2.0).abs() < 0.1, "FD order {p:.3}");
    }

    #[test]
    fn jets_propagate_derivatives_exactly() {
        // Validate the jet calculus against central finite differences on
        // the hardest composite in the module: the principal-axes phase.
        let sys = ParticleSystem::new(vec![1.0, 1.6, 0.8]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let x: Vec<f64> = (0..sys.dim())
            .map(|_| 0.4 + 0.8 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let phase_at = |x: &[f64]| -> f64 {
            let (_, _, w) = quadratic_frame_jets(&sys, x).unwrap();
            let xg = Jet2::coordinate(x, 2);
            let yg = Jet2::coordinate(x, 3);
            Jet2::atan2(&w.mul(&yg), &xg).v
        };
        let jet = {
            let (_, _, w) = quadratic_frame_jets(&sys, &x).unwrap();
            let xg = Jet2::coordinate(&x, 2);
            let yg = Jet2::coordinate(&x, 3);
            Jet2::atan2(&w.mul(&yg), &xg)
        };
        let h = 2e-5;
        for j in 0..sys.dim() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let fd = (phase_at(&xp) - phase_at(&xm)) / (2.0 * h);
            assert_abs_diff_eq!(jet.g[j], fd, epsilon = 1e-8);
            for k in 0..sys.dim() {
                let mut xpp = x.clone();
                let mut xpm = x.clone();
                let mut xmp = x.clone();
                let mut xmm = x.clone();
                xpp[j] += h;
                xpp[k] += h;
                xpm[j] += h;
                xpm[k] -= h;
                xmp[j] -= h;
                xmp[k] += h;
                xmm[j] -= h;
                xmm[k] -= h;
                let fd2 = (phase_at(&xpp) - phase_at(&xpm) - phase_at(&xmp)
                    + phase_at(&xmm))
                    / (4.0 * h * h);
                assert_abs_diff_eq!(jet.h[j * sys.dim() + k], fd2, epsilon = 2e-5);
                // Exact symmetry of the assembled Hessian.
                assert_abs_diff_eq!(
                    jet.h[j * sys.dim() + k],
                    jet.h[k * sys.dim() + j],
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn orbit_helpers_compose_with_the_gauge_fixers() {
        // Orbits of configurations produced by the quadratic gauge fixer
        // stay valid inputs: fix, orbit, and the shape data round-trips.
        let sys = ParticleSystem::new(vec![1.0, 2.0, 1.5]).unwrap();
        let mut lab = vec![1.1, 0.2, -0.4, 0.9, -0.3, -0.8];
        remove_center_of_mass(&sys, &mut lab);
        let fixed = fix_quadratic(&sys, &lab).unwrap();
        let x0 = fixed.body.coords;
        let moved = orbit_quadratic(&sys, &x0, 1.1).unwrap();
        assert!(surface_residual_quadratic(&sys, &moved) < 1e-13);
        let v0 = shape_quadratic(&sys, &x0);
        let v1 = shape_quadratic(&sys, &moved);
        assert_abs_diff_eq!(v0.q, v1.q, epsilon = 1e-12);
        assert_abs_diff_eq!(v0.r_squared, v1.r_squared, epsilon = 1e-12);
    }
}
