//! Experiment configuration: the TOML schema, its validation, and the
//! construction of library objects from the parsed blocks.

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

use rotgauge::gauge::LinearChart;
use rotgauge::model::{HarmonicWell, InverseDistance, ParticleSystem, Spring};

/// The eight runnable experiments.
pub const EXPERIMENTS: [(&str, &str); 8] = [
    ("gauge-equivalence", "lab-frame vs rotating-frame integration of the same initial data"),
    ("algebra-verify", "commutator identities of the momentum operators at random on-surface points"),
    ("hermiticity", "symmetry of H and Lambda under the Faddeev-Popov inner products, plus the representation-consistency check"),
    ("n1-spectrum", "single-particle polar reduction against the two-dimensional oscillator spectrum"),
    ("eckart-spring", "two-body Eckart spring: radial oracle vs second-order perturbation theory"),
    ("eckart-order", "scaling order of the classical residual angular momentum in two charts"),
    ("residual-verify", "orbits and eigenfunctions of the residual angular momentum, verified against the operator engine"),
    ("orbit-invariants", "conserved-quantity drift along residual-angular-momentum orbits, as plot-ready series"),
];

/// Top-level experiment configuration (one TOML file per run).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// One of the names in [`EXPERIMENTS`].
    pub experiment: String,
    /// Artifact directory; created if absent. `ROTGAUGE_OUTPUT_DIR`
    /// overrides it.
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    /// Base seed for every randomized stage of the experiment.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart: Option<ChartBlock>,
    /// Translation-invariant chart for center-of-mass stages.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cm_chart: Option<ChartBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equivalence: Option<EquivalenceBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algebra: Option<AlgebraBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hermiticity: Option<HermiticityBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n1_spectrum: Option<N1SpectrumBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eckart: Option<EckartBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<OrderBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<ResidualBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orbit: Option<OrbitBlock>,
}

fn default_output_dir() -> String {
    ".".into()
}

/// Particle masses, `hbar`, and the interaction law.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    pub masses: Vec<f64>,
    #[serde(default = "default_hbar")]
    pub hbar: f64,
    /// Pair spring `k/2 (|r_a - r_b| - rest_length)^2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spring: Option<SpringBlock>,
    /// Pair `strength / |r_a - r_b|` interaction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coulomb2d: Option<CoulombBlock>,
    /// One-body harmonic trap `k/2 |r_a|^2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trap: Option<TrapBlock>,
}

fn default_hbar() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpringBlock {
    pub stiffness: f64,
    #[serde(default)]
    pub rest_length: f64,
    /// Restrict the spring to these bonds; omitted means every pair.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bonds: Option<Vec<[usize; 2]>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoulombBlock {
    pub strength: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapBlock {
    pub stiffness: f64,
}

impl SystemBlock {
    /// Builds the particle system, validating every constraint the library
    /// enforces.
    pub fn build(&self) -> Result<ParticleSystem> {
        let mut sys = ParticleSystem::new(self.masses.clone())
            .map_err(|e| anyhow!("ConfigInvalid: system.masses: {e}"))?
            .with_hbar(self.hbar)
            .map_err(|e| anyhow!("ConfigInvalid: system.hbar: {e}"))?;
        if self.spring.is_some() && self.coulomb2d.is_some() {
            bail!("ConfigInvalid: system: choose one pair potential (spring or coulomb2d)");
        }
        if let Some(s) = &self.spring {
            if !(s.stiffness > 0.0) || s.rest_length < 0.0 {
                bail!("ConfigInvalid: system.spring: stiffness must be positive and rest_length nonnegative");
            }
            sys = sys.with_pair_potential(Spring {
                stiffness: s.stiffness,
                rest_length: s.rest_length,
            });
            if let Some(bonds) = &s.bonds {
                sys = sys
                    .with_bonds(bonds.iter().map(|b| (b[0], b[1])).collect())
                    .map_err(|e| anyhow!("ConfigInvalid: system.spring.bonds: {e}"))?;
            }
        }
        if let Some(c) = &self.coulomb2d {
            sys = sys.with_pair_potential(InverseDistance { strength: c.strength });
        }
        if let Some(t) = &self.trap {
            if !(t.stiffness > 0.0) {
                bail!("ConfigInvalid: system.trap.stiffness must be positive");
            }
            sys = sys.with_body_potential(HarmonicWell { stiffness: t.stiffness });
        }
        Ok(sys)
    }
}

/// A linear gauge chart `(A, B)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartBlock {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl ChartBlock {
    pub fn build(&self, sys: &ParticleSystem, field: &str) -> Result<LinearChart> {
        let chart = LinearChart::new(self.a.clone(), self.b.clone())
            .map_err(|e| anyhow!("ConfigInvalid: {field}: {e}"))?;
        chart
            .validate(sys)
            .map_err(|e| anyhow!("ConfigInvalid: {field}: {e}"))?;
        Ok(chart)
    }
}

/// Parameters of the lab-vs-rotating comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquivalenceBlock {
    pub coords0: Vec<f64>,
    pub vel0: Vec<f64>,
    pub t_end: f64,
    pub n_samples: usize,
    pub body_tol: f64,
    pub lz_tol: f64,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
}

fn default_rel_tol() -> f64 {
    1e-10
}

fn default_abs_tol() -> f64 {
    1e-12
}

/// Parameters of the commutator-identity sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgebraBlock {
    pub n_points: usize,
    pub tolerance: f64,
    /// `linear`, `center-of-mass`, `quadratic`.
    pub families: Vec<String>,
    /// Check only the `constraint:*` identities (the momentum sum rules).
    #[serde(default)]
    pub constraints_only: bool,
}

/// One hermiticity case: a gauge family with its own system and chart.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HermiticityCase {
    /// `linear`, `center-of-mass`, or `principal-axes`.
    pub kind: String,
    pub masses: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trap_stiffness: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    /// Pivot particle for the principal-axes chart.
    #[serde(default)]
    pub pivot: usize,
    pub ell_z: f64,
    pub trials: usize,
    pub seed: u64,
}

/// Parameters of the hermiticity / representation-consistency experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HermiticityBlock {
    pub cases: Vec<HermiticityCase>,
    #[serde(default = "default_quad_order")]
    pub order: usize,
    #[serde(default = "default_quad_levels")]
    pub levels: usize,
    #[serde(default = "default_quad_tol")]
    pub quad_tol: f64,
    /// Asymmetry must stay below `factor` times the reported quadrature
    /// error.
    #[serde(default = "default_factor")]
    pub factor: f64,
    /// When positive, also run the pointwise representation-consistency
    /// check at this many points per case.
    #[serde(default)]
    pub representation_points: usize,
    #[serde(default = "default_representation_tol")]
    pub representation_tol: f64,
    /// Bump width used by the representation check.
    #[serde(default = "default_representation_sigma")]
    pub representation_sigma: f64,
}

fn default_quad_order() -> usize {
    24
}

fn default_quad_levels() -> usize {
    4
}

fn default_quad_tol() -> f64 {
    1e-7
}

fn default_factor() -> f64 {
    5.0
}

fn default_representation_tol() -> f64 {
    1e-8
}

fn default_representation_sigma() -> f64 {
    0.15
}

/// Parameters of the polar-reduction spectrum check.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct N1SpectrumBlock {
    pub ell_min: i64,
    pub ell_max: i64,
    pub n_states: usize,
    pub r_max: f64,
    pub n_points: usize,
    pub tolerance: f64,
    /// Radii at which the quantum potential is compared against its
    /// closed form `-hbar^2 / (8 m X^2)`.
    #[serde(default = "default_potential_points")]
    pub potential_points: Vec<f64>,
    #[serde(default = "default_potential_tol")]
    pub potential_tol: f64,
}

fn default_potential_points() -> Vec<f64> {
    vec![0.4, 1.1, 2.7]
}

fn default_potential_tol() -> f64 {
    1e-13
}

/// Parameters of the Eckart-spring sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EckartBlock {
    pub eps: Vec<f64>,
    pub ells: Vec<i64>,
    pub ns: Vec<usize>,
    pub n_points: usize,
    pub slope_tol: f64,
    pub min_power: f64,
    pub mixing_tol: f64,
    /// The `eps` value at which the mixing coefficients are compared.
    pub mixing_eps: f64,
    /// Bound on the oracle's Richardson error estimate, in units of
    /// `hbar omega`.
    pub oracle_tol: f64,
}

/// Parameters of the chart-ordering experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderBlock {
    /// Lab-frame reference configuration defining the equilibrium shape
    /// (center of mass removed and principal axes fixed internally).
    pub reference: Vec<f64>,
    pub scale_min: f64,
    pub scale_max: f64,
    pub n_scales: usize,
    pub n_draws: usize,
    pub eckart_min_exponent: f64,
    pub pa_max_exponent: f64,
}

/// Parameters of the residual-angular-momentum verification.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualBlock {
    pub n_points: usize,
    pub orbit_steps: usize,
    pub orbit_tol: f64,
    pub period_tol: f64,
    pub generator_dalpha: f64,
    pub generator_tol: f64,
    pub eigen_tol_linear: f64,
    pub eigen_tol_quadratic: f64,
    pub integers_linear: Vec<i64>,
    pub integers_quadratic: Vec<i64>,
    pub gaussian_widths: Vec<f64>,
    /// A round configuration (isotropic inertia, `Q = 0`): there the
    /// orbit frequency must hit the integer limit `Omega = 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round_coords: Option<Vec<f64>>,
    #[serde(default = "default_round_tol")]
    pub round_tol: f64,
}

fn default_round_tol() -> f64 {
    1e-14
}

/// Parameters of the orbit-drift series.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitBlock {
    pub n_steps: usize,
    /// Margin passed to the on-surface sampler (keeps clear of the gauge
    /// degeneracies).
    pub margin: f64,
}

impl ExperimentConfig {
    /// Parses and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("ConfigInvalid: cannot read {}", path.display()))?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| anyhow!("ConfigInvalid: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Structural validation beyond what serde enforces.
    pub fn validate(&self) -> Result<()> {
        if !EXPERIMENTS.iter().any(|(name, _)| *name == self.experiment) {
            let names: Vec<&str> = EXPERIMENTS.iter().map(|(n, _)| *n).collect();
            bail!(
                "ConfigInvalid: unknown experiment `{}`; valid names: {}",
                self.experiment,
                names.join(", ")
            );
        }
        let need = |ok: bool, block: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                bail!(
                    "ConfigInvalid: experiment `{}` requires the [{block}] block",
                    self.experiment
                )
            }
        };
        match self.experiment.as_str() {
            "gauge-equivalence" => {
                need(self.system.is_some(), "system")?;
                need(self.chart.is_some(), "chart")?;
                need(self.equivalence.is_some(), "equivalence")?;
            }
            "algebra-verify" => {
                need(self.system.is_some(), "system")?;
                need(self.algebra.is_some(), "algebra")?;
                let families = &self.algebra.as_ref().unwrap().families;
                if families.is_empty() {
                    bail!("ConfigInvalid: algebra.families must not be empty");
                }
                for f in families {
                    match f.as_str() {
                        "linear" => need(self.chart.is_some(), "chart")?,
                        "center-of-mass" => need(self.cm_chart.is_some(), "cm_chart")?,
                        "quadratic" => {}
                        other => bail!(
                            "ConfigInvalid: algebra.families: unknown family `{other}` (expected linear, center-of-mass, quadratic)"
                        ),
                    }
                }
            }
            "hermiticity" => {
                need(self.hermiticity.is_some(), "hermiticity")?;
                if self.hermiticity.as_ref().unwrap().cases.is_empty() {
                    bail!("ConfigInvalid: hermiticity.cases must not be empty");
                }
            }
            "n1-spectrum" => {
                need(self.system.is_some(), "system")?;
                need(self.n1_spectrum.is_some(), "n1_spectrum")?;
                let sys = self.system.as_ref().unwrap();
                if sys.masses.len() != 1 {
                    bail!("ConfigInvalid: n1-spectrum needs exactly one particle");
                }
                if sys.trap.is_none() {
                    bail!("ConfigInvalid: n1-spectrum needs [system.trap]");
                }
            }
            "eckart-spring" => need(self.eckart.is_some(), "eckart")?,
            "eckart-order" => {
                need(self.system.is_some(), "system")?;
                need(self.order.is_some(), "order")?;
            }
            "residual-verify" => {
                need(self.system.is_some(), "system")?;
                need(self.chart.is_some(), "chart")?;
                need(self.residual.is_some(), "residual")?;
            }
            "orbit-invariants" => {
                need(self.system.is_some(), "system")?;
                need(self.chart.is_some(), "chart")?;
                need(self.orbit.is_some(), "orbit")?;
            }
            _ => unreachable!("validated above"),
        }
        Ok(())
    }
}

/// The documented schema, emitted by `rotgauge schema`. It lists every
/// recognized table and key exactly as the parser accepts them.
pub const SCHEMA_TEXT: &str = r#"# rotgauge experiment configuration (TOML)
#
# Top level:
#   experiment   = "<name>"     # required; one of the names below
#   output_dir   = "<dir>"      # default "."; ROTGAUGE_OUTPUT_DIR overrides
#   seed         = <u64>        # default 0; base seed for sampling stages
#
# Experiments:
#   gauge-equivalence   requires [system] [chart] [equivalence]
#   algebra-verify      requires [system] [algebra] (+ [chart] / [cm_chart] per family)
#   hermiticity         requires [hermiticity] with [[hermiticity.cases]]
#   n1-spectrum         requires [system] (1 particle, with trap) [n1_spectrum]
#   eckart-spring       requires [eckart]
#   eckart-order        requires [system] [order]
#   residual-verify     requires [system] [chart] [residual]
#   orbit-invariants    requires [system] [chart] [orbit]
#
# [system]
#   masses = [m1, m2, ...]      # strictly positive
#   hbar   = 1.0                # default 1.0
#   [system.spring]             # optional pair spring
#     stiffness = k, rest_length = a (default 0), bonds = [[i, j], ...] (optional)
#   [system.coulomb2d]          # optional pair 1/r law (exclusive with spring)
#     strength = g
#   [system.trap]               # optional one-body harmonic trap
#     stiffness = k
#
# [chart] / [cm_chart]
#   a = [A1, ...], b = [B1, ...]   # sum m (A^2 + B^2) must be positive;
#                                  # cm_chart must satisfy sum m A = sum m B = 0
#
# [equivalence]
#   coords0 = [...], vel0 = [...]  # lab-frame initial data (2N numbers each)
#   t_end = T, n_samples = K
#   body_tol, lz_tol               # pass thresholds
#   rel_tol = 1e-10, abs_tol = 1e-12 # integrator tolerances (defaults shown)
#
# [algebra]
#   n_points = K, tolerance = tol
#   families = ["linear", "center-of-mass", "quadratic"]  # any subset
#   constraints_only = false       # restrict to the constraint:* identities
#
# [hermiticity]
#   order = 24, levels = 4, quad_tol = 1e-7, factor = 5.0     # defaults shown
#   representation_points = 0      # > 0 also runs the pointwise H~ vs H check
#   representation_tol = 1e-8, representation_sigma = 0.15
#   [[hermiticity.cases]]
#     kind = "linear" | "center-of-mass" | "principal-axes"
#     masses = [...], trap_stiffness = k (optional)
#     a = [...], b = [...]         # linear kinds
#     pivot = 0                    # principal-axes kind
#     ell_z = l, trials = K, seed = s
#
# [n1_spectrum]
#   ell_min, ell_max, n_states, r_max, n_points, tolerance
#   potential_points = [0.4, 1.1, 2.7], potential_tol = 1e-13   # defaults shown
#
# [eckart]
#   eps = [...] (>= 3 values), ells = [...], ns = [...], n_points = K
#   slope_tol, min_power, mixing_tol, mixing_eps, oracle_tol
#
# [order]
#   reference = [...]              # lab configuration defining the shape
#   scale_min, scale_max, n_scales, n_draws
#   eckart_min_exponent, pa_max_exponent
#
# [residual]
#   n_points, orbit_steps, orbit_tol, period_tol
#   generator_dalpha, generator_tol
#   eigen_tol_linear, eigen_tol_quadratic
#   integers_linear = [...], integers_quadratic = [...], gaussian_widths = [...]
#
# [orbit]
#   n_steps, margin
"#;
