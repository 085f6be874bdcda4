//! Gauge conditions, gauge-fixing maps, and the geometry of the gauge
//! surface.
//!
//! A body frame is fixed by demanding that a rotation-odd functional of the
//! body coordinates vanish while a companion functional stays non-negative.
//! Two families are implemented.
//!
//! **Linear gauge.** Given fixed reference coefficients `(A_a, B_a)` per
//! particle, define
//!
//! ```text
//! S({r}) = sum_a m_a (A_a x_a + B_a y_a)        (must vanish)
//! Q({r}) = sum_a m_a (B_a x_a - A_a y_a)        (must be non-negative)
//! R^2    = sum_a m_a (A_a^2 + B_a^2)            (reference inertia)
//! ```
//!
//! Under a passive frame rotation by `theta` the pair `(S, Q)` rotates like
//! a vector, so exactly one angle in `(-pi, pi]` puts a configuration on
//! `S = 0, Q > 0`; the opposite branch `Q < 0` differs by `pi`.
//!
//! **Quadratic (principal-axes) gauge.** With
//!
//! ```text
//! S({r}) = sum_a m_a x_a y_a                    (must vanish)
//! Q({r}) = (1/2) sum_a m_a (x_a^2 - y_a^2)      (must be non-negative)
//! R^2    = sum_a m_a (x_a^2 + y_a^2)
//! ```
//!
//! the pair `(S, Q)` rotates with angle `2 theta`, so the resolved angle
//! lives in the half-open interval `[0, pi)` and the gauge fixes the frame
//! only up to the residual rotation by `pi`.
//!
//! Both maps are singular where `S` and `Q` vanish simultaneously (the
//! one-particle origin, or a fully symmetric mass distribution in the
//! quadratic case); there the orientation is undefined and
//! [`Error::GaugeSingular`] is returned.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{Configuration, GaugeKind, ParticleSystem};

/// Relative threshold below which the gauge functionals count as vanishing.
const SINGULAR_REL: f64 = 1e-12;

/// Reference coefficients `(A_a, B_a)` defining a linear gauge.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearChart {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl LinearChart {
    /// Creates a chart from per-particle coefficients. Both slices must have
    /// the same nonzero length, all entries finite, and not all zero.
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() {
            return Err(Error::InvalidChart(format!(
                "coefficient lists must be nonempty and equal length, got {} and {}",
                a.len(),
                b.len()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidChart("coefficients must be finite".into()));
        }
        if a.iter().chain(b.iter()).all(|&v| v == 0.0) {
            return Err(Error::InvalidChart("at least one coefficient must be nonzero".into()));
        }
        Ok(Self { a, b })
    }

    /// Chart pinning particle `alpha` to the positive x-axis: all
    /// coefficients vanish except `B_alpha = 1`, so `S = m_alpha y_alpha`
    /// and `Q = m_alpha x_alpha`.
    pub fn axis_for_particle(n: usize, alpha: usize) -> Result<Self> {
        if alpha >= n {
            return Err(Error::InvalidChart(format!("particle {alpha} out of range for n = {n}")));
        }
        let mut b = vec![0.0; n];
        b[alpha] = 1.0;
        Self::new(vec![0.0; n], b)
    }

    /// Number of particles the chart describes.
    pub fn n(&self) -> usize {
        self.a.len()
    }

    /// Coefficient `A_alpha`.
    pub fn a(&self, alpha: usize) -> f64 {
        self.a[alpha]
    }

    /// Coefficient `B_alpha`.
    pub fn b(&self, alpha: usize) -> f64 {
        self.b[alpha]
    }

    /// All `A` coefficients.
    pub fn a_slice(&self) -> &[f64] {
        &self.a
    }

    /// All `B` coefficients.
    pub fn b_slice(&self) -> &[f64] {
        &self.b
    }

    /// Reference inertia `R^2 = sum_a m_a (A_a^2 + B_a^2)`.
    pub fn reference_inertia(&self, sys: &ParticleSystem) -> f64 {
        assert_eq!(self.n(), sys.n(), "chart/system size mismatch");
        (0..self.n()).map(|i| sys.mass(i) * (self.a[i] * self.a[i] + self.b[i] * self.b[i])).sum()
    }

    /// Mass-weighted coefficient sums `(sum m A, sum m B)`; both vanish for
    /// translation-invariant charts.
    pub fn translation_defect(&self, sys: &ParticleSystem) -> (f64, f64) {
        assert_eq!(self.n(), sys.n(), "chart/system size mismatch");
        let mut sa = 0.0;
        let mut sb = 0.0;
        for i in 0..self.n() {
            sa += sys.mass(i) * self.a[i];
            sb += sys.mass(i) * self.b[i];
        }
        (sa, sb)
    }

    /// Errors unless the chart commutes with translations, which is required
    /// whenever the gauge is combined with center-of-mass constraints.
    pub fn require_translation_invariant(&self, sys: &ParticleSystem) -> Result<()> {
        let (sa, sb) = self.translation_defect(sys);
        let scale = self.reference_inertia(sys).sqrt() * sys.total_mass().sqrt();
        if sa.abs() > SINGULAR_REL * scale || sb.abs() > SINGULAR_REL * scale {
            return Err(Error::ChartNotTranslationInvariant { sum_a: sa, sum_b: sb });
        }
        Ok(())
    }

    /// Validates the chart against a system: matching size and nondegenerate
    /// reference inertia.
    pub fn validate(&self, sys: &ParticleSystem) -> Result<()> {
        if self.n() != sys.n() {
            return Err(Error::DimensionMismatch { left: 2 * self.n(), right: sys.dim() });
        }
        let r2 = self.reference_inertia(sys);
        if !(r2.is_finite() && r2 > 0.0) {
            return Err(Error::DegenerateInertia { value: r2, threshold: 0.0 });
        }
        Ok(())
    }
}

/// Values of the linear gauge functionals at a configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeValuesLinear {
    /// Gauge condition `S`.
    pub s: f64,
    /// Companion functional `Q` (the Faddeev-Popov factor on the surface).
    pub q: f64,
    /// Reference inertia `R^2` of the chart (configuration independent).
    pub r_squared: f64,
}

/// Values of the quadratic gauge functionals at a configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeValuesQuadratic {
    /// Gauge condition `S = sum m x y`.
    pub s: f64,
    /// Companion functional `Q = (1/2) sum m (x^2 - y^2)`.
    pub q: f64,
    /// Moment of inertia `R^2 = sum m |r|^2`.
    pub r_squared: f64,
}

/// Evaluates the linear gauge functionals.
pub fn shape_linear(sys: &ParticleSystem, chart: &LinearChart, coords: &[f64]) -> ShapeValuesLinear {
    assert_eq!(coords.len(), sys.dim(), "coordinate/system size mismatch");
    assert_eq!(chart.n(), sys.n(), "chart/system size mismatch");
    let mut s = 0.0;
    let mut q = 0.0;
    for i in 0..sys.n() {
        let m = sys.mass(i);
        let (x, y) = (coords[2 * i], coords[2 * i + 1]);
        s += m * (chart.a(i) * x + chart.b(i) * y);
        q += m * (chart.b(i) * x - chart.a(i) * y);
    }
    ShapeValuesLinear { s, q, r_squared: chart.reference_inertia(sys) }
}

/// Evaluates the quadratic gauge functionals.
pub fn shape_quadratic(sys: &ParticleSystem, coords: &[f64]) -> ShapeValuesQuadratic {
    assert_eq!(coords.len(), sys.dim(), "coordinate/system size mismatch");
    let mut s = 0.0;
    let mut q = 0.0;
    let mut r2 = 0.0;
    for i in 0..sys.n() {
        let m = sys.mass(i);
        let (x, y) = (coords[2 * i], coords[2 * i + 1]);
        s += m * x * y;
        q += 0.5 * m * (x * x - y * y);
        r2 += m * (x * x + y * y);
    }
    ShapeValuesQuadratic { s, q, r_squared: r2 }
}

/// Passive rotation: coordinates of the same points seen from a frame
/// rotated counterclockwise by `theta`:
/// `X = cos(theta) x + sin(theta) y`, `Y = -sin(theta) x + cos(theta) y`.
pub fn rotate(theta: f64, coords: &[f64]) -> Vec<f64> {
    let (sin, cos) = theta.sin_cos();
    let mut out = Vec::with_capacity(coords.len());
    for pair in coords.chunks_exact(2) {
        out.push(cos * pair[0] + sin * pair[1]);
        out.push(-sin * pair[0] + cos * pair[1]);
    }
    out
}

/// Per-particle `z x r`: maps `(x, y)` to `(-y, x)`.
pub fn z_cross(coords: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(coords.len());
    for pair in coords.chunks_exact(2) {
        out.push(-pair[1]);
        out.push(pair[0]);
    }
    out
}

/// Result of resolving the frame orientation of a lab configuration.
#[derive(Debug, Clone)]
pub struct GaugeFixResult {
    /// Resolved orientation angle: `(-pi, pi]` for linear gauges, `[0, pi)`
    /// for the quadratic gauge.
    pub theta: f64,
    /// The configuration expressed in the gauge-fixed body frame.
    pub body: Configuration,
}

/// Resolves the linear gauge: finds the unique `theta` in `(-pi, pi]` with
/// `S(body) = 0` and `Q(body) > 0`, where `body = rotate(theta, lab)`.
pub fn fix_linear(
    sys: &ParticleSystem,
    chart: &LinearChart,
    lab_coords: &[f64],
) -> Result<GaugeFixResult> {
    chart.validate(sys)?;
    sys.check_dim(lab_coords.len())?;
    let v = shape_linear(sys, chart, lab_coords);
    let magnitude = v.s.hypot(v.q);
    let scale = (v.r_squared * sys.moment_of_inertia(lab_coords)).sqrt();
    if magnitude <= SINGULAR_REL * scale || magnitude == 0.0 {
        return Err(Error::GaugeSingular { s: v.s, q: v.q });
    }
    // (S, Q) rotates like a vector: S(body) = cos(t) S - sin(t) Q and
    // Q(body) = cos(t) Q + sin(t) S, so t = atan2(S, Q) zeroes S and makes
    // Q = |(S, Q)| > 0.
    let mut theta = v.s.atan2(v.q);
    if theta == -std::f64::consts::PI {
        theta = std::f64::consts::PI;
    }
    let body = rotate(theta, lab_coords);
    Ok(GaugeFixResult { theta, body: Configuration::body(body, GaugeKind::Linear) })
}

/// Resolves the quadratic gauge: finds the unique `theta` in `[0, pi)` with
/// `S(body) = 0` and `Q(body) > 0`.
pub fn fix_quadratic(sys: &ParticleSystem, lab_coords: &[f64]) -> Result<GaugeFixResult> {
    sys.check_dim(lab_coords.len())?;
    let v = shape_quadratic(sys, lab_coords);
    let magnitude = v.s.hypot(v.q);
    if v.r_squared <= 0.0 {
        return Err(Error::DegenerateInertia { value: v.r_squared, threshold: 0.0 });
    }
    // |S| and |Q| are bounded by R^2 / 2.
    if magnitude <= SINGULAR_REL * v.r_squared || magnitude == 0.0 {
        return Err(Error::GaugeSingular { s: v.s, q: v.q });
    }
    // (S, Q) rotates like a vector under the double angle.
    let mut theta = 0.5 * v.s.atan2(v.q);
    if theta < 0.0 {
        theta += std::f64::consts::PI;
    }
    let body = rotate(theta, lab_coords);
    Ok(GaugeFixResult { theta, body: Configuration::body(body, GaugeKind::PrincipalAxes) })
}

/// Continuation of branch-resolved angles into a continuous series.
///
/// Gauge-fixing maps return the principal value; along a trajectory the
/// physical orientation is continuous, so each new sample is shifted by the
/// multiple of the gauge period (`2 pi` linear, `pi` quadratic) closest to
/// the previous unwound value. Steps landing within `guard` of the maximal
/// resolvable jump (half a period) are rejected: at that distance the branch
/// choice is ambiguous and the caller must sample more densely.
#[derive(Debug, Clone)]
pub struct BranchTracker {
    period: f64,
    guard: f64,
    last: Option<f64>,
}

impl BranchTracker {
    /// Tracker with the default guard band of 0.1 rad.
    pub fn new(kind: GaugeKind) -> Self {
        Self::with_guard(kind, 0.1)
    }

    /// Tracker with a custom guard band (must be positive and smaller than
    /// half the period).
    pub fn with_guard(kind: GaugeKind, guard: f64) -> Self {
        let period = match kind {
            GaugeKind::PrincipalAxes => std::f64::consts::PI,
            _ => std::f64::consts::TAU,
        };
        assert!(guard > 0.0 && guard < period / 2.0, "guard band out of range");
        Self { period, guard, last: None }
    }

    /// Gauge period of the tracked angle.
    pub fn period(&self) -> f64 {
        self.period
    }

    /// Most recent unwound angle, if any.
    pub fn last(&self) -> Option<f64> {
        self.last
    }

    /// Clears the history.
    pub fn reset(&mut self) {
        self.last = None;
    }

    /// Feeds the next principal-value angle and returns its continuous
    /// unwinding.
    pub fn update(&mut self, theta_principal: f64) -> Result<f64> {
        let unwound = match self.last {
            None => theta_principal,
            Some(last) => {
                let k = ((last - theta_principal) / self.period).round();
                let candidate = theta_principal + k * self.period;
                let delta = candidate - last;
                if delta.abs() > self.period / 2.0 - self.guard {
                    return Err(Error::StepTooLarge {
                        delta: delta.abs(),
                        guard: self.guard,
                        half_period: self.period / 2.0,
                    });
                }
                candidate
            }
        };
        self.last = Some(unwound);
        Ok(unwound)
    }
}

/// Unwinds a whole series of principal angles at once.
pub fn unwind_series(kind: GaugeKind, guard: f64, thetas: &[f64]) -> Result<Vec<f64>> {
    let mut tracker = BranchTracker::with_guard(kind, guard);
    thetas.iter().map(|&t| tracker.update(t)).collect()
}

/// A reference (equilibrium) shape `Z` with vanishing mass-weighted mean and
/// vanishing product of inertia: `sum m Z = 0` and `sum m Z_x Z_y = 0`.
///
/// Such shapes are stored in their own principal axes and serve as expansion
/// points for the displacement charts.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumShape {
    z: Vec<f64>,
    r_squared: f64,
}

impl EquilibriumShape {
    /// Validates and wraps a reference shape (flat coordinates).
    pub fn new(sys: &ParticleSystem, z: Vec<f64>) -> Result<Self> {
        sys.check_dim(z.len())?;
        let r_squared = sys.moment_of_inertia(&z);
        if !(r_squared.is_finite() && r_squared > 0.0) {
            return Err(Error::DegenerateInertia { value: r_squared, threshold: 0.0 });
        }
        let com = sys.center_of_mass(&z);
        let com_scale = (r_squared / sys.total_mass()).sqrt();
        if com[0].abs() > 1e-9 * com_scale || com[1].abs() > 1e-9 * com_scale {
            return Err(Error::InvalidChart(format!(
                "reference shape must be centered: center of mass = ({:.3e}, {:.3e})",
                com[0], com[1]
            )));
        }
        let sv = shape_quadratic(sys, &z);
        if sv.s.abs() > 1e-9 * r_squared {
            return Err(Error::InvalidChart(format!(
                "reference shape must be in principal axes: sum m Zx Zy = {:.3e}",
                sv.s
            )));
        }
        Ok(Self { z, r_squared })
    }

    /// Flat coordinates of the shape.
    pub fn coords(&self) -> &[f64] {
        &self.z
    }

    /// Reference inertia `R^2 = sum m |Z|^2`.
    pub fn r_squared(&self) -> f64 {
        self.r_squared
    }

    /// The Eckart chart of this shape: `A_a = -Z_a_y`, `B_a = Z_a_x`. With
    /// these coefficients the gauge condition reads
    /// `S({r}) = sum m Z_a x (r_a - Z_a) . z = 0`: displacements from the
    /// reference shape carry no mass-weighted angular momentum about it.
    pub fn eckart_chart(&self) -> LinearChart {
        let n = self.z.len() / 2;
        let a: Vec<f64> = (0..n).map(|i| -self.z[2 * i + 1]).collect();
        let b: Vec<f64> = (0..n).map(|i| self.z[2 * i]).collect();
        LinearChart::new(a, b).expect("valid shape yields a valid chart")
    }

    /// The linearized principal-axes chart of this shape: `A_a = Z_a_y`,
    /// `B_a = Z_a_x`, the first-order expansion of the quadratic gauge
    /// condition about the shape.
    pub fn principal_axes_chart(&self) -> LinearChart {
        let n = self.z.len() / 2;
        let a: Vec<f64> = (0..n).map(|i| self.z[2 * i + 1]).collect();
        let b: Vec<f64> = (0..n).map(|i| self.z[2 * i]).collect();
        LinearChart::new(a, b).expect("valid shape yields a valid chart")
    }

    /// Displacement of a body configuration from the shape.
    pub fn displacement(&self, coords: &[f64]) -> Vec<f64> {
        assert_eq!(coords.len(), self.z.len(), "dimension mismatch");
        coords.iter().zip(&self.z).map(|(c, z)| c - z).collect()
    }
}

/// A body-frame phase-space point: configuration, velocities, orientation,
/// and the instantaneous frame rotation rate.
#[derive(Debug, Clone)]
pub struct BodyState {
    /// Resolved orientation of the body frame.
    pub theta: f64,
    /// Body-frame coordinates (on the gauge surface).
    pub coords: Vec<f64>,
    /// Body-frame velocities (tangent to the gauge surface).
    pub vel: Vec<f64>,
    /// Frame rotation rate `xi = -dtheta/dt`.
    pub xi: f64,
}

/// Maps a lab-frame phase-space point into the linear-gauge body frame.
///
/// The body velocity is `V = U(theta) v + xi z x R` with `xi` determined by
/// differentiating the gauge condition: `S(V) = 0` forces
/// `xi = -S(U v) / Q(R)`.
pub fn to_body_frame(
    sys: &ParticleSystem,
    chart: &LinearChart,
    lab_coords: &[f64],
    lab_vel: &[f64],
) -> Result<BodyState> {
    sys.check_dim(lab_vel.len())?;
    let fix = fix_linear(sys, chart, lab_coords)?;
    let body = fix.body.coords;
    let rotated_vel = rotate(fix.theta, lab_vel);
    let q = shape_linear(sys, chart, &body).q;
    if q <= 0.0 {
        return Err(Error::DegenerateJacobian { value: q });
    }
    let s_dot = shape_linear(sys, chart, &rotated_vel).s;
    let xi = -s_dot / q;
    let cross = z_cross(&body);
    let vel: Vec<f64> = rotated_vel.iter().zip(&cross).map(|(v, c)| v + xi * c).collect();
    Ok(BodyState { theta: fix.theta, coords: body, vel, xi })
}

/// Maps a body-frame phase-space point back to the lab frame.
pub fn body_to_lab(theta: f64, body_coords: &[f64], body_vel: &[f64], xi: f64) -> (Vec<f64>, Vec<f64>) {
    let cross = z_cross(body_coords);
    let w: Vec<f64> = body_vel.iter().zip(&cross).map(|(v, c)| v - xi * c).collect();
    (rotate(-theta, body_coords), rotate(-theta, &w))
}

/// Frame rotation rate reconstructed from body-frame data and the conserved
/// angular momentum:
/// `xi = (sum m R x V . z - l_z) / sum m |R|^2`.
pub fn xi_residual(
    sys: &ParticleSystem,
    body_coords: &[f64],
    body_vel: &[f64],
    ell_z: f64,
) -> Result<f64> {
    let inertia = sys.moment_of_inertia(body_coords);
    if inertia <= 0.0 {
        return Err(Error::DegenerateInertia { value: inertia, threshold: 0.0 });
    }
    Ok((sys.angular_momentum(body_coords, body_vel) - ell_z) / inertia)
}

/// Gradient of the linear gauge condition with respect to the flat
/// coordinates: `dS/dx_a = m_a A_a`, `dS/dy_a = m_a B_a`. Constant in the
/// configuration.
pub fn linear_constraint_vector(sys: &ParticleSystem, chart: &LinearChart) -> Vec<f64> {
    assert_eq!(chart.n(), sys.n(), "chart/system size mismatch");
    let mut c = Vec::with_capacity(sys.dim());
    for i in 0..sys.n() {
        c.push(sys.mass(i) * chart.a(i));
        c.push(sys.mass(i) * chart.b(i));
    }
    c
}

/// Projects a vector onto the null space of the linear gauge condition
/// along the chart direction `(A, B)` (used for both configurations and
/// velocities):
///
/// ```text
/// x_a -= (S / R^2) A_a,   y_a -= (S / R^2) B_a.
/// ```
///
/// This is the orthogonal projection in the mass metric; because the
/// translation generators are mass-orthogonal to translation-invariant
/// charts, it leaves the center of mass untouched for such charts.
pub fn project_linear(sys: &ParticleSystem, chart: &LinearChart, v: &mut [f64]) {
    let values = shape_linear(sys, chart, v);
    let f = values.s / values.r_squared;
    for (i, pair) in v.chunks_exact_mut(2).enumerate() {
        pair[0] -= f * chart.a(i);
        pair[1] -= f * chart.b(i);
    }
}

/// Shifts a configuration so its center of mass sits at the origin.
pub fn remove_center_of_mass(sys: &ParticleSystem, coords: &mut [f64]) {
    let com = sys.center_of_mass(coords);
    for pair in coords.chunks_exact_mut(2) {
        pair[0] -= com[0];
        pair[1] -= com[1];
    }
}

/// Which gauge surface to draw samples from.
#[derive(Debug, Clone, Copy)]
pub enum SurfaceFamily<'a> {
    /// Linear gauge surface `S = 0, Q > 0`.
    Linear(&'a LinearChart),
    /// Linear gauge surface intersected with the center-of-mass constraint.
    LinearCm(&'a LinearChart),
    /// Quadratic gauge surface `sum m x y = 0, Q > 0`.
    Quadratic,
}

/// Draws a random configuration exactly on the requested gauge surface.
///
/// Coordinates are sampled i.i.d. normal with standard deviation `scale`
/// and then projected (linear gauges) or rotated (quadratic gauge) onto the
/// surface; the `Q > 0` branch is enforced by the appropriate discrete
/// rotation. Samples too close to the gauge singularity are rejected and
/// redrawn: `margin` is the minimum allowed value of `Q` relative to its
/// natural bound (`sqrt(R^2 I)` for linear charts, `R^2 / 2` for the
/// quadratic gauge, where the quadratic case also rejects nearly collinear
/// shapes with `Q` close to the upper bound).
pub fn sample_on_surface<R: Rng + ?Sized>(
    sys: &ParticleSystem,
    family: SurfaceFamily<'_>,
    rng: &mut R,
    scale: f64,
    margin: f64,
) -> Result<Vec<f64>> {
    assert!(scale > 0.0 && margin >= 0.0 && margin < 0.5, "bad sampling parameters");
    for _ in 0..500 {
        let mut coords: Vec<f64> =
            (0..sys.dim()).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        match family {
            SurfaceFamily::Linear(chart) | SurfaceFamily::LinearCm(chart) => {
                chart.validate(sys)?;
                if let SurfaceFamily::LinearCm(_) = family {
                    chart.require_translation_invariant(sys)?;
                    remove_center_of_mass(sys, &mut coords);
                }
                project_linear(sys, chart, &mut coords);
                let v = shape_linear(sys, chart, &coords);
                let q = if v.q < 0.0 {
                    // Rotating by pi negates every coordinate, flipping Q.
                    for c in coords.iter_mut() {
                        *c = -*c;
                    }
                    -v.q
                } else {
                    v.q
                };
                let bound = (v.r_squared * sys.moment_of_inertia(&coords)).sqrt();
                if q > margin * bound && bound > 0.0 {
                    return Ok(coords);
                }
            }
            SurfaceFamily::Quadratic => {
                let fixed = match fix_quadratic(sys, &coords) {
                    Ok(f) => f,
                    Err(Error::GaugeSingular { .. }) => continue,
                    Err(e) => return Err(e),
                };
                let v = shape_quadratic(sys, &fixed.body.coords);
                let bound = 0.5 * v.r_squared;
                // Keep clear of both the gauge singularity (Q = 0) and the
                // collinear degeneracy (Q = R^2 / 2).
                if v.q > margin * bound && v.q < (1.0 - margin) * bound {
                    return Ok(fixed.body.coords);
                }
            }
        }
    }
    Err(Error::DegenerateDirection)
}
