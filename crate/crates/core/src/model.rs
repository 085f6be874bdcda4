//! Physical model: planar particle systems, potentials, and conserved
//! quantities.
//!
//! A system of N point masses moves in two dimensions under rotation- and
//! translation-invariant interactions. Configurations are stored as flat
//! coordinate vectors in interleaved order `[x_1, y_1, x_2, y_2, ...]`, and
//! each configuration carries a frame tag so that lab-frame and body-frame
//! data cannot be mixed up silently.
//!
//! Conventions used throughout the crate:
//!
//! * the rotation taking lab coordinates `(x, y)` to body coordinates
//!   `(X, Y)` through angle `theta` is passive:
//!   `X = cos(theta) x + sin(theta) y`, `Y = -sin(theta) x + cos(theta) y`;
//! * `z`-components of angular momenta are scalars (`z . (r x v)`);
//! * potentials are sums of a pair term `V(|r_a - r_b|)` over distinct pairs
//!   and an optional one-body term `U(|r_a|)` summed over particles. Both are
//!   invariant under rotations about the origin, and the pair term is also
//!   translation invariant.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Number of spatial coordinates per particle (the model is planar).
pub const COORDS_PER_PARTICLE: usize = 2;

/// Identifies which gauge condition a body frame was fixed with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaugeKind {
    /// Linear gauge: `S = sum_a m_a (A_a x_a + B_a y_a) = 0` with `Q >= 0`,
    /// for chart coefficients `(A_a, B_a)`.
    Linear,
    /// Linear gauge combined with center-of-mass constraints.
    LinearCm,
    /// Linear gauge built from an equilibrium shape so that the reference
    /// angular momentum of small displacements vanishes (Eckart frame).
    Eckart,
    /// Quadratic (principal-axes) gauge: `S = sum_a m_a x_a y_a = 0` with
    /// `Q = (1/2) sum_a m_a (x_a^2 - y_a^2) >= 0`.
    PrincipalAxes,
}

/// Reference frame a configuration is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    /// Inertial laboratory frame.
    Lab,
    /// Rotating body frame fixed by the given gauge condition.
    Body(GaugeKind),
}

/// A radially symmetric potential with an analytic derivative.
///
/// Implementors provide `V(r)` and `V'(r)` for `r > 0`; gradients of the
/// total potential energy are assembled from these.
pub trait RadialPotential: Send + Sync {
    /// Potential value at separation (or radius) `r > 0`.
    fn value(&self, r: f64) -> f64;
    /// Derivative `dV/dr` at `r > 0`.
    fn derivative(&self, r: f64) -> f64;
    /// Whether the potential and its derivative stay finite as `r -> 0`.
    fn finite_at_origin(&self) -> bool {
        false
    }
}

/// Harmonic spring about a rest length: `V(r) = (k/2) (r - r0)^2`.
#[derive(Debug, Clone, Copy)]
pub struct Spring {
    /// Spring constant `k > 0`.
    pub stiffness: f64,
    /// Rest length `r0 >= 0`.
    pub rest_length: f64,
}

impl RadialPotential for Spring {
    fn value(&self, r: f64) -> f64 {
        let d = r - self.rest_length;
        0.5 * self.stiffness * d * d
    }
    fn derivative(&self, r: f64) -> f64 {
        self.stiffness * (r - self.rest_length)
    }
    fn finite_at_origin(&self) -> bool {
        true
    }
}

/// Planar analogue of a Coulomb/gravitational interaction: `V(r) = g / r`.
///
/// A negative `strength` is attractive. (We keep the familiar `1/r` form
/// rather than the two-dimensional logarithmic Green's function; any
/// rotationally invariant pair law works for the constructions in this
/// crate.)
#[derive(Debug, Clone, Copy)]
pub struct InverseDistance {
    /// Coupling `g`; the potential is `g / r`.
    pub strength: f64,
}

impl RadialPotential for InverseDistance {
    fn value(&self, r: f64) -> f64 {
        self.strength / r
    }
    fn derivative(&self, r: f64) -> f64 {
        -self.strength / (r * r)
    }
}

/// Isotropic harmonic well about the origin: `U(r) = (k/2) r^2`.
#[derive(Debug, Clone, Copy)]
pub struct HarmonicWell {
    /// Stiffness `k > 0`; for a particle of mass `m` the frequency is
    /// `omega = sqrt(k/m)`.
    pub stiffness: f64,
}

impl RadialPotential for HarmonicWell {
    fn value(&self, r: f64) -> f64 {
        0.5 * self.stiffness * r * r
    }
    fn derivative(&self, r: f64) -> f64 {
        self.stiffness * r
    }
    fn finite_at_origin(&self) -> bool {
        true
    }
}

/// A planar system of point masses with optional interactions.
///
/// The system owns the masses, the reduced Planck constant used by the
/// quantum-side constructions, and the interaction law. It is cheap to clone
/// (potentials are shared behind `Arc`).
#[derive(Clone)]
pub struct ParticleSystem {
    masses: Vec<f64>,
    hbar: f64,
    pair_potential: Option<Arc<dyn RadialPotential>>,
    body_potential: Option<Arc<dyn RadialPotential>>,
    /// When set, the pair potential acts only on these bonds instead of on
    /// every distinct pair.
    bonds: Option<Vec<(usize, usize)>>,
}

impl fmt::Debug for ParticleSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParticleSystem")
            .field("masses", &self.masses)
            .field("hbar", &self.hbar)
            .field("pair_potential", &self.pair_potential.is_some())
            .field("body_potential", &self.body_potential.is_some())
            .finish()
    }
}

impl ParticleSystem {
    /// Creates a free system (no interactions) with `hbar = 1`.
    ///
    /// Masses must be finite and strictly positive and there must be at
    /// least one particle.
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::InvalidSystem("system must contain at least one particle".into()));
        }
        for (i, &m) in masses.iter().enumerate() {
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::InvalidSystem(format!(
                    "mass of particle {i} must be finite and positive, got {m}"
                )));
            }
        }
        Ok(Self { masses, hbar: 1.0, pair_potential: None, body_potential: None, bonds: None })
    }

    /// Sets the reduced Planck constant (default `1`).
    pub fn with_hbar(mut self, hbar: f64) -> Result<Self> {
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(Error::InvalidSystem(format!("hbar must be finite and positive, got {hbar}")));
        }
        self.hbar = hbar;
        Ok(self)
    }

    /// Installs a pair potential `V(|r_a - r_b|)` summed over distinct pairs.
    pub fn with_pair_potential(mut self, v: impl RadialPotential + 'static) -> Self {
        self.pair_potential = Some(Arc::new(v));
        self
    }

    /// Installs a one-body potential `U(|r_a|)` summed over particles.
    pub fn with_body_potential(mut self, u: impl RadialPotential + 'static) -> Self {
        self.body_potential = Some(Arc::new(u));
        self
    }

    /// Restricts the pair potential to the given bonds (e.g. a spring
    /// chain) instead of every distinct pair. Indices must be in range and
    /// each bond must join two different particles.
    pub fn with_bonds(mut self, bonds: Vec<(usize, usize)>) -> Result<Self> {
        for &(a, b) in &bonds {
            if a >= self.n() || b >= self.n() {
                return Err(Error::InvalidSystem(format!(
                    "bond ({a}, {b}) references a particle outside 0..{}",
                    self.n()
                )));
            }
            if a == b {
                return Err(Error::InvalidSystem(format!("bond ({a}, {b}) joins a particle to itself")));
            }
        }
        self.bonds = Some(bonds);
        Ok(self)
    }

    /// The particle pairs the pair potential acts on.
    fn interacting_pairs(&self) -> Vec<(usize, usize)> {
        match &self.bonds {
            Some(b) => b.clone(),
            None => {
                let n = self.n();
                (0..n).flat_map(|a| ((a + 1)..n).map(move |b| (a, b))).collect()
            }
        }
    }

    /// Number of particles.
    pub fn n(&self) -> usize {
        self.masses.len()
    }

    /// Dimension of the flat configuration vector, `2 N`.
    pub fn dim(&self) -> usize {
        COORDS_PER_PARTICLE * self.masses.len()
    }

    /// Mass of particle `alpha` (zero-based).
    pub fn mass(&self, alpha: usize) -> f64 {
        self.masses[alpha]
    }

    /// All masses.
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Total mass `M = sum_a m_a`.
    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Reduced Planck constant used by quantum-side constructions.
    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// Whether any interaction is installed.
    pub fn has_potential(&self) -> bool {
        self.pair_potential.is_some() || self.body_potential.is_some()
    }

    /// Total potential energy of a configuration.
    ///
    /// Fails with [`Error::CoincidentParticles`] (pair term) or
    /// [`Error::SingularBodyPotential`] (one-body term) when a singular
    /// potential is evaluated at zero distance.
    pub fn potential_energy(&self, coords: &[f64]) -> Result<f64> {
        self.check_dim(coords.len())?;
        let n = self.n();
        let mut v = 0.0;
        if let Some(pair) = &self.pair_potential {
            for (a, b) in self.interacting_pairs() {
                let dx = coords[2 * a] - coords[2 * b];
                let dy = coords[2 * a + 1] - coords[2 * b + 1];
                let d = dx.hypot(dy);
                if d == 0.0 && !pair.finite_at_origin() {
                    return Err(Error::CoincidentParticles { first: a, second: b });
                }
                v += pair.value(d);
            }
        }
        if let Some(body) = &self.body_potential {
            for a in 0..n {
                let r = coords[2 * a].hypot(coords[2 * a + 1]);
                if r == 0.0 && !body.finite_at_origin() {
                    return Err(Error::SingularBodyPotential { particle: a });
                }
                v += body.value(r);
            }
        }
        Ok(v)
    }

    /// Gradient of the potential energy with respect to every coordinate.
    pub fn potential_gradient(&self, coords: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(coords.len())?;
        let n = self.n();
        let mut grad = vec![0.0; coords.len()];
        if let Some(pair) = &self.pair_potential {
            for (a, b) in self.interacting_pairs() {
                let dx = coords[2 * a] - coords[2 * b];
                let dy = coords[2 * a + 1] - coords[2 * b + 1];
                let d = dx.hypot(dy);
                if d == 0.0 {
                    if pair.finite_at_origin() {
                        continue; // gradient of a smooth minimum at contact
                    }
                    return Err(Error::CoincidentParticles { first: a, second: b });
                }
                let f = pair.derivative(d) / d;
                grad[2 * a] += f * dx;
                grad[2 * a + 1] += f * dy;
                grad[2 * b] -= f * dx;
                grad[2 * b + 1] -= f * dy;
            }
        }
        if let Some(body) = &self.body_potential {
            for a in 0..n {
                let x = coords[2 * a];
                let y = coords[2 * a + 1];
                let r = x.hypot(y);
                if r == 0.0 {
                    if body.finite_at_origin() {
                        continue;
                    }
                    return Err(Error::SingularBodyPotential { particle: a });
                }
                let f = body.derivative(r) / r;
                grad[2 * a] += f * x;
                grad[2 * a + 1] += f * y;
            }
        }
        Ok(grad)
    }

    /// Kinetic energy `sum_a m_a |v_a|^2 / 2`.
    pub fn kinetic_energy(&self, vel: &[f64]) -> f64 {
        debug_assert_eq!(vel.len(), self.dim());
        self.masses
            .iter()
            .enumerate()
            .map(|(a, &m)| 0.5 * m * (vel[2 * a] * vel[2 * a] + vel[2 * a + 1] * vel[2 * a + 1]))
            .sum()
    }

    /// `z`-component of the total angular momentum,
    /// `L_z = sum_a m_a (x_a vy_a - y_a vx_a)`.
    pub fn angular_momentum(&self, coords: &[f64], vel: &[f64]) -> f64 {
        debug_assert_eq!(coords.len(), self.dim());
        debug_assert_eq!(vel.len(), self.dim());
        self.masses
            .iter()
            .enumerate()
            .map(|(a, &m)| m * (coords[2 * a] * vel[2 * a + 1] - coords[2 * a + 1] * vel[2 * a]))
            .sum()
    }

    /// Total linear momentum `(sum_a m_a vx_a, sum_a m_a vy_a)`.
    pub fn total_momentum(&self, vel: &[f64]) -> [f64; 2] {
        let mut p = [0.0; 2];
        for (a, &m) in self.masses.iter().enumerate() {
            p[0] += m * vel[2 * a];
            p[1] += m * vel[2 * a + 1];
        }
        p
    }

    /// Center of mass of a configuration.
    pub fn center_of_mass(&self, coords: &[f64]) -> [f64; 2] {
        let mut c = [0.0; 2];
        for (a, &m) in self.masses.iter().enumerate() {
            c[0] += m * coords[2 * a];
            c[1] += m * coords[2 * a + 1];
        }
        let total = self.total_mass();
        [c[0] / total, c[1] / total]
    }

    /// Planar moment of inertia about the origin, `sum_a m_a |r_a|^2`.
    pub fn moment_of_inertia(&self, coords: &[f64]) -> f64 {
        self.masses
            .iter()
            .enumerate()
            .map(|(a, &m)| m * (coords[2 * a] * coords[2 * a] + coords[2 * a + 1] * coords[2 * a + 1]))
            .sum()
    }

    /// Checks that `len` matches the flat configuration dimension.
    pub fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch { left: len, right: self.dim() });
        }
        Ok(())
    }
}

/// A configuration of the system together with the frame it lives in.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    /// Flat coordinates `[x_1, y_1, x_2, y_2, ...]`.
    pub coords: Vec<f64>,
    /// Frame tag.
    pub frame: Frame,
}

impl Configuration {
    /// Lab-frame configuration.
    pub fn lab(coords: Vec<f64>) -> Self {
        Self { coords, frame: Frame::Lab }
    }

    /// Body-frame configuration with the stated gauge kind.
    pub fn body(coords: Vec<f64>, kind: GaugeKind) -> Self {
        Self { coords, frame: Frame::Body(kind) }
    }

    /// Number of particles described.
    pub fn n_particles(&self) -> usize {
        self.coords.len() / COORDS_PER_PARTICLE
    }

    /// `x`-coordinate of particle `alpha`.
    pub fn x(&self, alpha: usize) -> f64 {
        self.coords[2 * alpha]
    }

    /// `y`-coordinate of particle `alpha`.
    pub fn y(&self, alpha: usize) -> f64 {
        self.coords[2 * alpha + 1]
    }
}

/// Characteristic scales of a harmonic oscillator `(hbar, m, omega)`.
///
/// Useful for moving between physical units and the internal units of the
/// spectral solvers.
#[derive(Debug, Clone, Copy)]
pub struct OscillatorScales {
    /// Reduced Planck constant.
    pub hbar: f64,
    /// Mass.
    pub mass: f64,
    /// Angular frequency.
    pub omega: f64,
}

impl OscillatorScales {
    /// Ground-state length scale `sqrt(hbar / (m omega))`.
    pub fn length(&self) -> f64 {
        (self.hbar / (self.mass * self.omega)).sqrt()
    }

    /// Level spacing `hbar omega`.
    pub fn energy(&self) -> f64 {
        self.hbar * self.omega
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_bad_masses() {
        assert!(ParticleSystem::new(vec![]).is_err());
        assert!(ParticleSystem::new(vec![1.0, -2.0]).is_err());
        assert!(ParticleSystem::new(vec![1.0, 0.0]).is_err());
        assert!(ParticleSystem::new(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn bonds_restrict_the_pair_potential() {
        // A chain of two springs: the (0, 2) pair does not interact.
        let spring = Spring { stiffness: 2.0, rest_length: 0.0 };
        let coords = [0.0, 0.0, 1.0, 0.0, 3.0, 0.0];
        let chain = ParticleSystem::new(vec![1.0; 3])
            .unwrap()
            .with_pair_potential(spring)
            .with_bonds(vec![(0, 1), (1, 2)])
            .unwrap();
        // k/2 (1^2 + 2^2) from the two bonds only.
        assert_relative_eq!(chain.potential_energy(&coords).unwrap(), 5.0);
        let grad = chain.potential_gradient(&coords).unwrap();
        // The end particles feel only their own bond.
        assert_relative_eq!(grad[0], -2.0);
        assert_relative_eq!(grad[4], 4.0);

        let all = ParticleSystem::new(vec![1.0; 3]).unwrap().with_pair_potential(spring);
        assert_relative_eq!(all.potential_energy(&coords).unwrap(), 14.0);

        assert!(ParticleSystem::new(vec![1.0; 2])
            .unwrap()
            .with_bonds(vec![(0, 2)])
            .is_err());
        assert!(ParticleSystem::new(vec![1.0; 2])
            .unwrap()
            .with_bonds(vec![(1, 1)])
            .is_err());
    }

    #[test]
    fn spring_pair_energy_and_gradient() {
        // Two unit masses at distance 2 with k = 3, rest length 1:
        // V = (3/2)(2-1)^2 = 1.5, force magnitude 3 along the axis.
        let sys = ParticleSystem::new(vec![1.0, 1.0])
            .unwrap()
            .with_pair_potential(Spring { stiffness: 3.0, rest_length: 1.0 });
        let coords = [0.0, 0.0, 2.0, 0.0];
        assert_relative_eq!(sys.potential_energy(&coords).unwrap(), 1.5, epsilon = 1e-15);
        let g = sys.potential_gradient(&coords).unwrap();
        assert_relative_eq!(g[0], -3.0, epsilon = 1e-14);
        assert_relative_eq!(g[2], 3.0, epsilon = 1e-14);
        assert_relative_eq!(g[1], 0.0, epsilon = 1e-14);
        assert_relative_eq!(g[3], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn inverse_distance_energy_and_singularity() {
        let sys = ParticleSystem::new(vec![1.0, 2.0])
            .unwrap()
            .with_pair_potential(InverseDistance { strength: -1.0 });
        let coords = [0.0, 0.0, 0.0, 2.0];
        assert_relative_eq!(sys.potential_energy(&coords).unwrap(), -0.5, epsilon = 1e-15);
        let bad = [1.0, 1.0, 1.0, 1.0];
        assert!(matches!(
            sys.potential_energy(&bad),
            Err(Error::CoincidentParticles { first: 0, second: 1 })
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let sys = ParticleSystem::new(vec![1.0, 2.0, 0.5])
            .unwrap()
            .with_pair_potential(Spring { stiffness: 1.3, rest_length: 0.7 })
            .with_body_potential(HarmonicWell { stiffness: 0.9 });
        let coords = [0.3, -0.4, 1.1, 0.2, -0.6, 0.8];
        let grad = sys.potential_gradient(&coords).unwrap();
        let h = 1e-6;
        for i in 0..coords.len() {
            let mut plus = coords;
            let mut minus = coords;
            plus[i] += h;
            minus[i] -= h;
            let fd = (sys.potential_energy(&plus).unwrap() - sys.potential_energy(&minus).unwrap())
                / (2.0 * h);
            assert_relative_eq!(grad[i], fd, epsilon = 1e-8, max_relative = 1e-7);
        }
    }

    #[test]
    fn conserved_quantity_helpers() {
        let sys = ParticleSystem::new(vec![2.0, 3.0]).unwrap();
        let coords = [1.0, 0.0, 0.0, 1.0];
        let vel = [0.0, 1.0, -1.0, 0.0];
        // L_z = 2*(1*1 - 0*0) + 3*(0*0 - 1*(-1)) = 2 + 3 = 5.
        assert_relative_eq!(sys.angular_momentum(&coords, &vel), 5.0, epsilon = 1e-15);
        assert_relative_eq!(sys.kinetic_energy(&vel), 0.5 * 2.0 + 0.5 * 3.0, epsilon = 1e-15);
        assert_eq!(sys.total_momentum(&vel), [-3.0, 2.0]);
        let com = sys.center_of_mass(&coords);
        assert_relative_eq!(com[0], 0.4, epsilon = 1e-15);
        assert_relative_eq!(com[1], 0.6, epsilon = 1e-15);
        assert_relative_eq!(sys.moment_of_inertia(&coords), 5.0, epsilon = 1e-15);
    }

    #[test]
    fn oscillator_scales() {
        let s = OscillatorScales { hbar: 2.0, mass: 0.5, omega: 4.0 };
        assert_relative_eq!(s.length(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(s.energy(), 8.0, epsilon = 1e-15);
    }
}
