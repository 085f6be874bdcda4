//! Gauge-fixed mechanics of planar N-body systems in rotating frames.
//!
//! Describing a planar system of N particles from a frame that co-rotates
//! with the system requires choosing, for every configuration, which
//! orientation counts as "unrotated". That choice is a gauge condition: a
//! functional of the body-frame coordinates that must vanish, together with
//! a sign convention selecting one of the several orientations that satisfy
//! it. This crate implements two families of such conditions for planar
//! systems — a linear one built from fixed reference coefficients, and the
//! quadratic (principal-axes) one — and everything needed to work with them
//! on both sides of quantization:
//!
//! * [`gauge`] — charts, gauge-fixing maps with branch resolution, angle
//!   unwinding, and surface sampling;
//! * [`dynamics`] — classical trajectories in the lab frame and in gauge-
//!   fixed rotating frames, plus the equivalence experiment between them;
//! * [`operators`] — first-order differential operators (constrained
//!   momenta, residual angular momentum) with exact commutator algebra
//!   checks;
//! * [`hilbert`] — surface charts, weighted inner products, Hamiltonian
//!   application, and hermiticity experiments;
//! * [`spectra`] — radial eigensolvers and the two worked spectra (single
//!   particle in a harmonic well, harmonic dimer) with perturbative
//!   cross-checks;
//! * [`residual`] — gauge orbits through configuration space and the
//!   eigenfunctions of the residual rotation generator.
//!
//! Conventions are documented in [`model`]; numerical building blocks live
//! in [`numerics`].

pub mod error;
pub mod model;
pub mod numerics;

pub mod dynamics;
pub mod gauge;
pub mod hilbert;
pub mod operators;
pub mod residual;
pub mod spectra;

pub use error::{Error, Result};
pub use model::{Configuration, Frame, GaugeKind, ParticleSystem};
