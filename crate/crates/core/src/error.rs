//! Error types shared across the crate.
//!
//! Every fallible operation returns [`Result`]. Variants are structured so
//! callers can react programmatically (e.g. retry a sample after
//! [`Error::DegenerateDirection`]) and so diagnostics carry the offending
//! numbers instead of a bare message.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A particle system failed validation (non-positive mass, empty system, ...).
    #[error("invalid system definition: {0}")]
    InvalidSystem(String),

    /// A gauge chart failed validation (non-finite coefficients, zero norm, ...).
    #[error("invalid chart: {0}")]
    InvalidChart(String),

    /// A pair potential was evaluated at zero separation.
    #[error("particles {first} and {second} coincide: pair potential is singular at zero distance")]
    CoincidentParticles { first: usize, second: usize },

    /// A one-body potential was evaluated at a point where it is singular.
    #[error("one-body potential is singular at the origin for particle {particle}")]
    SingularBodyPotential { particle: usize },

    /// Both gauge functionals vanish, so the orientation angle is undefined.
    #[error("gauge singularity: both gauge functionals vanish (s = {s:.3e}, q = {q:.3e})")]
    GaugeSingular { s: f64, q: f64 },

    /// A chart used with translation-invariant constraints must satisfy
    /// sum(m*A) = sum(m*B) = 0.
    #[error("chart is not translation invariant: sum(m*A) = {sum_a:.3e}, sum(m*B) = {sum_b:.3e}")]
    ChartNotTranslationInvariant { sum_a: f64, sum_b: f64 },

    /// Consecutive orientation samples moved too close to the branch cut for
    /// unambiguous unwinding.
    #[error(
        "orientation step {delta:.3e} is within the guard band {guard:.3e} of the half period \
         {half_period:.3e}; sample more densely"
    )]
    StepTooLarge { delta: f64, guard: f64, half_period: f64 },

    /// A configuration that must lie on the gauge surface does not.
    #[error("configuration is off the gauge surface: residual {residual:.3e} exceeds {tolerance:.3e}")]
    OffSurface { residual: f64, tolerance: f64 },

    /// The planar moment of inertia (or the reference inertia of a chart) is
    /// too small to divide by.
    #[error("degenerate inertia: {value:.3e} is below the threshold {threshold:.3e}")]
    DegenerateInertia { value: f64, threshold: f64 },

    /// The Faddeev-Popov factor vanished where it must be positive.
    #[error("degenerate gauge Jacobian: value {value:.3e}")]
    DegenerateJacobian { value: f64 },

    /// Collinear shape in the principal-axes gauge: the orbit frequency
    /// vanishes and the residual-rotation analysis breaks down.
    #[error("collinear degenerate shape: 2Q equals R^2, so the residual orbit frequency vanishes")]
    CollinearDegenerate,

    /// Two-level quadrature disagreed beyond the requested tolerance.
    #[error("quadrature did not converge: two-level difference {difference:.3e} exceeds {tolerance:.3e}")]
    QuadratureNotConverged { difference: f64, tolerance: f64 },

    /// Richardson comparison between two grids disagreed beyond tolerance.
    #[error("grid too coarse: extrapolation error {error:.3e} exceeds {tolerance:.3e}")]
    GridTooCoarse { error: f64, tolerance: f64 },

    /// A least-squares fit left a residual too large for its result to be
    /// trusted.
    #[error("fit residual {residual:.3e} exceeds {tolerance:.3e}")]
    FitResidualTooLarge { residual: f64, tolerance: f64 },

    /// A sampled direction lost its leading-order component; the caller
    /// should resample.
    #[error("degenerate direction: leading-order term vanished for the sampled perturbation")]
    DegenerateDirection,

    /// Two operators (or an operator and a configuration) disagree on the
    /// dimension of the configuration space.
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    /// No coordinate has a usable constraint coefficient, so the surface
    /// cannot be parametrized by elimination.
    #[error("no eliminable coordinate: all constraint coefficients vanish at the anchor")]
    NoEliminableCoordinate,

    /// The adaptive integrator failed (step size underflow or too many steps).
    #[error("integration step failure: {0}")]
    StepFailure(String),

    /// Generic invalid input not covered by a more specific variant.
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
