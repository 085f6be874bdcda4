//! One runner per experiment. Each mirrors the corresponding library
//! verification, turns the report into a pass/fail verdict with headline
//! metrics, and emits plot-ready CSV tables.

use anyhow::{anyhow, bail, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rotgauge::dynamics::{gauge_equivalence, IntegrationOptions};
use rotgauge::gauge::{
    fix_linear, fix_quadratic, remove_center_of_mass, sample_on_surface, shape_linear,
    shape_quadratic, EquilibriumShape, LinearChart, SurfaceFamily,
};
use rotgauge::hilbert::{
    absorb_jacobian, hamiltonian, hermiticity_check, representation_consistency, surface_chart,
    ChartSpec, QuadratureSpec, WaveFunction,
};
use rotgauge::model::ParticleSystem;
use rotgauge::operators::{verify_algebra, AlgebraGauge};
use rotgauge::residual::{
    kernel_invariants_linear, kernel_invariants_quadratic, linear_eigenvalue, omega_quadratic,
    orbit_linear, orbit_quadratic, quadratic_period_error, sweep_orbit_linear,
    sweep_orbit_quadratic, verify_eigenfunction_linear, verify_eigenfunction_quadratic,
    verify_generator_linear, verify_generator_quadratic, KernelFactor, ResidualEigenfunction,
};
use rotgauge::spectra::{eckart_experiment, eckart_order_check, n1_polar_spectrum, OrderChart};

use crate::config::{ExperimentConfig, HermiticityCase};
use crate::output::{Cell, Csv, RunOutcome};

/// Dispatches a validated config to its runner.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    match cfg.experiment.as_str() {
        "gauge-equivalence" => run_gauge_equivalence(cfg),
        "algebra-verify" => run_algebra(cfg),
        "hermiticity" => run_hermiticity(cfg),
        "n1-spectrum" => run_n1_spectrum(cfg),
        "eckart-spring" => run_eckart_spring(cfg),
        "eckart-order" => run_eckart_order(cfg),
        "residual-verify" => run_residual_verify(cfg),
        "orbit-invariants" => run_orbit_invariants(cfg),
        other => bail!("ConfigInvalid: unknown experiment `{other}`"),
    }
}

fn system_of(cfg: &ExperimentConfig) -> Result<ParticleSystem> {
    cfg.system.as_ref().expect("validated").build()
}

fn chart_of(cfg: &ExperimentConfig, sys: &ParticleSystem) -> Result<LinearChart> {
    cfg.chart.as_ref().expect("validated").build(sys, "chart")
}

fn run_gauge_equivalence(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let sys = system_of(cfg)?;
    let chart = chart_of(cfg, &sys)?;
    let p = cfg.equivalence.as_ref().expect("validated");
    if p.n_samples < 2 || !(p.t_end > 0.0) {
        bail!("ConfigInvalid: equivalence needs t_end > 0 and n_samples >= 2");
    }
    let times: Vec<f64> =
        (0..=p.n_samples).map(|i| p.t_end * i as f64 / p.n_samples as f64).collect();
    let opts = IntegrationOptions { rtol: p.rel_tol, atol: p.abs_tol, ..Default::default() };
    let report = gauge_equivalence(&sys, &chart, &p.coords0, &p.vel0, &times, &opts)?;

    let ell_z = report.lab.points.first().map(|pt| pt.l_z).unwrap_or(0.0);
    let lab_lz_drift = report
        .lab
        .points
        .iter()
        .map(|pt| (pt.l_z - ell_z).abs())
        .fold(0.0_f64, f64::max);
    let lz_drift = report.max_angular_momentum_drift.max(lab_lz_drift);
    let pass = report.max_body_deviation < p.body_tol && lz_drift < p.lz_tol;

    let mut csv = Csv::new(&[
        "t",
        "body_coord_dev",
        "theta_dev",
        "lz_lab",
        "lz_rotating",
        "energy_lab",
        "energy_rotating",
        "gauge_residual",
    ]);
    for (a, b) in report.lab.points.iter().zip(&report.rotating.points) {
        let fixed = fix_linear(&sys, &chart, &a.coords)?;
        let coord_dev = fixed
            .body
            .coords
            .iter()
            .zip(&b.coords)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0_f64, f64::max);
        csv.row(&[
            Cell::Float(a.t),
            Cell::Float(coord_dev),
            Cell::Float((a.theta_unwound - b.theta_unwound).abs()),
            Cell::Float(a.l_z),
            Cell::Float(b.l_z),
            Cell::Float(a.energy),
            Cell::Float(b.energy),
            Cell::Float(b.gauge_residual),
        ]);
    }

    let mut out = RunOutcome::new(
        pass,
        format!(
            "max body deviation {:.3e} (tol {:.1e}), angular-momentum drift {:.3e} (tol {:.1e})",
            report.max_body_deviation, p.body_tol, lz_drift, p.lz_tol
        ),
    );
    out.metric("max_body_deviation", report.max_body_deviation);
    out.metric("max_theta_deviation", report.max_theta_deviation);
    out.metric("max_angular_momentum_drift", lz_drift);
    out.metric("max_energy_drift", report.max_energy_drift);
    out.metric("max_gauge_residual", report.max_gauge_residual);
    out.metric("body_tol", p.body_tol);
    out.metric("lz_tol", p.lz_tol);
    out.table("samples", csv);
    Ok(out)
}

fn run_algebra(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let sys = system_of(cfg)?;
    let p = cfg.algebra.as_ref().expect("validated");
    let chart = match cfg.chart.as_ref() {
        Some(c) => Some(c.build(&sys, "chart")?),
        None => None,
    };
    let cm_chart = match cfg.cm_chart.as_ref() {
        Some(c) => Some(c.build(&sys, "cm_chart")?),
        None => None,
    };

    let mut csv = Csv::new(&["family", "identity", "max_dev", "pass"]);
    let mut worst = 0.0_f64;
    let mut checked = 0usize;
    let mut all_pass = true;
    for (k, family) in p.families.iter().enumerate() {
        let gauge = match family.as_str() {
            "linear" => AlgebraGauge::Linear(chart.as_ref().expect("validated")),
            "center-of-mass" => AlgebraGauge::CenterOfMass(cm_chart.as_ref().expect("validated")),
            "quadratic" => AlgebraGauge::Quadratic,
            other => bail!("ConfigInvalid: unknown algebra family `{other}`"),
        };
        let report = verify_algebra(&sys, gauge, p.n_points, p.tolerance, cfg.seed + k as u64)?;
        for id in &report.identities {
            if p.constraints_only && !id.identity_id.starts_with("constraint:") {
                continue;
            }
            checked += 1;
            worst = worst.max(id.max_dev);
            all_pass &= id.pass;
            csv.row(&[
                Cell::Str(family),
                Cell::Str(&id.identity_id),
                Cell::Float(id.max_dev),
                Cell::Bool(id.pass),
            ]);
        }
    }
    if checked == 0 {
        bail!("no identities matched the requested filter");
    }

    let mut out = RunOutcome::new(
        all_pass,
        format!(
            "{checked} identities across {} families, worst deviation {:.3e} (tol {:.1e})",
            p.families.len(),
            worst,
            p.tolerance
        ),
    );
    out.metric("identities_checked", checked);
    out.metric("worst_deviation", worst);
    out.metric("tolerance", p.tolerance);
    out.metric("n_points", p.n_points);
    out.table("identities", csv);
    Ok(out)
}

fn hermiticity_case_setup(
    case: &HermiticityCase,
) -> Result<(ParticleSystem, LinearChart, &'static str)> {
    let mut sys = ParticleSystem::new(case.masses.clone())
        .map_err(|e| anyhow!("ConfigInvalid: hermiticity case masses: {e}"))?;
    if let Some(k) = case.trap_stiffness {
        sys = sys.with_body_potential(rotgauge::model::HarmonicWell { stiffness: k });
    }
    // Principal-axes cases carry a placeholder chart that is never used.
    let kind = match case.kind.as_str() {
        "linear" => "linear",
        "center-of-mass" => "center-of-mass",
        "principal-axes" => "principal-axes",
        other => bail!(
            "ConfigInvalid: hermiticity case kind `{other}` (expected linear, center-of-mass, principal-axes)"
        ),
    };
    let chart = if kind == "principal-axes" {
        LinearChart::new(vec![1.0; sys.n()], vec![0.0; sys.n()])
            .map_err(|e| anyhow!("ConfigInvalid: {e}"))?
    } else {
        let a = case
            .a
            .clone()
            .ok_or_else(|| anyhow!("ConfigInvalid: hermiticity case `{kind}` needs `a`"))?;
        let b = case
            .b
            .clone()
            .ok_or_else(|| anyhow!("ConfigInvalid: hermiticity case `{kind}` needs `b`"))?;
        let chart = LinearChart::new(a, b).map_err(|e| anyhow!("ConfigInvalid: {e}"))?;
        chart.validate(&sys).map_err(|e| anyhow!("ConfigInvalid: hermiticity case: {e}"))?;
        chart
    };
    Ok((sys, chart, kind))
}

fn run_hermiticity(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let p = cfg.hermiticity.as_ref().expect("validated");
    let quad = QuadratureSpec { order: p.order, levels: p.levels, tol: p.quad_tol };

    let mut trials_csv = Csv::new(&[
        "case",
        "kind",
        "trial",
        "h_asymmetry",
        "lambda_asymmetry",
        "quadrature_error",
    ]);
    let mut rep_csv = Csv::new(&["case", "kind", "deviation", "tolerance", "pass"]);
    let mut all_within = true;
    let mut worst_h = 0.0_f64;
    let mut worst_lambda = 0.0_f64;
    let mut worst_rep = 0.0_f64;
    let mut rep_rows = 0usize;

    for (idx, case) in p.cases.iter().enumerate() {
        let (sys, chart, kind) = hermiticity_case_setup(case)?;
        let spec = match kind {
            "linear" => ChartSpec::Linear(&chart),
            "center-of-mass" => ChartSpec::CenterOfMass(&chart),
            _ => ChartSpec::PrincipalAxes { pivot: case.pivot },
        };
        let report = hermiticity_check(&sys, &spec, case.ell_z, case.trials, case.seed, &quad)?;
        all_within &= report.within(p.factor);
        worst_h = worst_h.max(report.max_h_asymmetry());
        worst_lambda = worst_lambda.max(report.max_lambda_asymmetry());
        for (t, trial) in report.trials.iter().enumerate() {
            trials_csv.row(&[
                Cell::Int(idx as i64),
                Cell::Str(kind),
                Cell::Int(t as i64),
                Cell::Float(trial.h_asymmetry),
                Cell::Float(trial.lambda_asymmetry),
                Cell::Float(trial.quadrature_error),
            ]);
        }

        if p.representation_points > 0 {
            let family = match kind {
                "linear" => SurfaceFamily::Linear(&chart),
                "center-of-mass" => SurfaceFamily::LinearCm(&chart),
                _ => SurfaceFamily::Quadratic,
            };
            let sc = surface_chart(&sys, &spec)?;
            let ham = hamiltonian(&sys, &spec, case.ell_z)?;
            let mut rng = ChaCha8Rng::seed_from_u64(case.seed.wrapping_add(1));
            let anchor = sample_on_surface(&sys, family, &mut rng, 1.0, 0.35)?;
            let sigma = p.representation_sigma;
            let dim = anchor.len();
            let bump = WaveFunction::gaussian_bump(
                anchor.clone(),
                sigma,
                1.0,
                vec![0.2; dim],
                vec![0.05; dim],
            );
            let absorbed = absorb_jacobian(&sc, &bump)?;
            let mut prng = ChaCha8Rng::seed_from_u64(case.seed.wrapping_add(2));
            let points: Vec<Vec<f64>> = (0..p.representation_points)
                .map(|_| {
                    let u: Vec<f64> = sc
                        .free_indices()
                        .iter()
                        .map(|&k| anchor[k] + prng.gen_range(-0.7..0.7) * sigma)
                        .collect();
                    sc.embed(&u)
                })
                .collect::<rotgauge::error::Result<_>>()?;
            let dev = representation_consistency(&sc, &ham, &absorbed, &points)?;
            worst_rep = worst_rep.max(dev);
            rep_rows += 1;
            rep_csv.row(&[
                Cell::Int(idx as i64),
                Cell::Str(kind),
                Cell::Float(dev),
                Cell::Float(p.representation_tol),
                Cell::Bool(dev < p.representation_tol),
            ]);
        }
    }

    let rep_pass = p.representation_points == 0 || worst_rep < p.representation_tol;
    let pass = all_within && rep_pass;
    let mut reason = format!(
        "{} cases: worst H asymmetry {:.3e}, worst Lambda asymmetry {:.3e} (within {}x quadrature error: {})",
        p.cases.len(),
        worst_h,
        worst_lambda,
        p.factor,
        if all_within { "yes" } else { "no" }
    );
    if rep_rows > 0 {
        reason.push_str(&format!(
            "; representation deviation {:.3e} (tol {:.1e})",
            worst_rep, p.representation_tol
        ));
    }
    let mut out = RunOutcome::new(pass, reason);
    out.metric("worst_h_asymmetry", worst_h);
    out.metric("worst_lambda_asymmetry", worst_lambda);
    out.metric("factor", p.factor);
    if rep_rows > 0 {
        out.metric("worst_representation_deviation", worst_rep);
        out.metric("representation_tol", p.representation_tol);
    }
    out.table("trials", trials_csv);
    if rep_rows > 0 {
        out.table("representation", rep_csv);
    }
    Ok(out)
}

fn run_n1_spectrum(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let sys = system_of(cfg)?;
    let p = cfg.n1_spectrum.as_ref().expect("validated");
    if p.ell_min > p.ell_max {
        bail!("ConfigInvalid: n1_spectrum.ell_min must not exceed ell_max");
    }
    let mass = {
        let block = cfg.system.as_ref().expect("validated");
        block.masses[0]
    };
    let stiffness = cfg
        .system
        .as_ref()
        .expect("validated")
        .trap
        .as_ref()
        .expect("validated")
        .stiffness;
    let omega = (stiffness / mass).sqrt();
    let hbar = cfg.system.as_ref().expect("validated").hbar;

    let mut csv = Csv::new(&["ell", "n_r", "energy", "exact", "rel_err", "convergence"]);
    let mut worst = 0.0_f64;
    for ell in p.ell_min..=p.ell_max {
        let result = n1_polar_spectrum(&sys, ell, p.n_states, p.r_max, p.n_points)?;
        for (n_r, &energy) in result.eigenvalues.iter().enumerate() {
            let exact = (2 * n_r as i64 + ell.abs() + 1) as f64 * hbar * omega;
            let rel = (energy - exact).abs() / exact;
            worst = worst.max(rel);
            csv.row(&[
                Cell::Int(ell),
                Cell::Int(n_r as i64),
                Cell::Float(energy),
                Cell::Float(exact),
                Cell::Float(rel),
                Cell::Float(result.convergence),
            ]);
        }
    }

    // On a one-particle chart with (A, B) = (0, 1), the gauge surface is
    // the half-line y = 0 and the quantum potential reduces to
    // -hbar^2 / (8 m X^2).
    let polar_chart = LinearChart::new(vec![0.0], vec![1.0])
        .map_err(|e| anyhow!("ConfigInvalid: {e}"))?;
    let mut potential_csv = Csv::new(&["radius", "evaluated", "closed_form", "rel_err"]);
    let mut worst_potential = 0.0_f64;
    for &x in &p.potential_points {
        if !(x > 0.0) {
            bail!("ConfigInvalid: n1_spectrum.potential_points must be positive");
        }
        let evaluated =
            rotgauge::hilbert::quantum_potential_linear(&sys, &polar_chart, &[x, 0.0])?;
        let closed = -hbar * hbar / (8.0 * mass * x * x);
        let rel = (evaluated - closed).abs() / closed.abs();
        worst_potential = worst_potential.max(rel);
        potential_csv.row(&[
            Cell::Float(x),
            Cell::Float(evaluated),
            Cell::Float(closed),
            Cell::Float(rel),
        ]);
    }

    let pass = worst < p.tolerance && worst_potential < p.potential_tol;
    let mut out = RunOutcome::new(
        pass,
        format!(
            "sectors {}..={}, {} states each: worst relative error {:.3e} (tol {:.1e}); quantum potential off closed form by {:.3e}",
            p.ell_min, p.ell_max, p.n_states, worst, p.tolerance, worst_potential
        ),
    );
    out.metric("worst_relative_error", worst);
    out.metric("tolerance", p.tolerance);
    out.metric("omega", omega);
    out.metric("worst_potential_rel_err", worst_potential);
    out.table("spectrum", csv);
    out.table("quantum_potential", potential_csv);
    Ok(out)
}

fn run_eckart_spring(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let p = cfg.eckart.as_ref().expect("validated");
    let report = eckart_experiment(&p.eps, &p.ells, &p.ns, p.n_points)?;

    let worst_oracle =
        report.cells.iter().map(|c| c.oracle_error).fold(0.0_f64, f64::max);
    let slope_err = report.max_slope_error();
    let power = report.min_residual_power();
    let mixing = report.max_mixing_error_at(p.mixing_eps);
    let pass = worst_oracle < p.oracle_tol
        && slope_err < p.slope_tol
        && power >= p.min_power
        && mixing < p.mixing_tol;

    let mut csv = Csv::new(&[
        "ell",
        "n",
        "eps",
        "e_oracle",
        "e0",
        "e1_pred",
        "oracle_error",
        "overlap_lower",
        "overlap_upper",
        "mix_lower_pred",
        "mix_upper_pred",
        "fit_slope",
        "fit_slope_predicted",
        "fit_slope_rel_err",
        "fit_quartic",
        "fit_residual_power",
    ]);
    for c in &report.cells {
        let fit = report
            .fits
            .iter()
            .find(|f| f.ell == c.ell && f.n == c.n)
            .expect("every cell has a fit");
        csv.row(&[
            Cell::Int(c.ell),
            Cell::Int(c.n as i64),
            Cell::Float(c.eps),
            Cell::Float(c.e_oracle),
            Cell::Float(c.e0),
            Cell::Float(c.e1_pred),
            Cell::Float(c.oracle_error),
            Cell::Float(c.overlap_lower),
            Cell::Float(c.overlap_upper),
            Cell::Float(c.mix_lower_pred),
            Cell::Float(c.mix_upper_pred),
            Cell::Float(fit.slope),
            Cell::Float(fit.slope_predicted),
            Cell::Float(fit.slope_rel_err),
            Cell::Float(fit.quartic),
            Cell::Float(fit.residual_power),
        ]);
    }

    let mut out = RunOutcome::new(
        pass,
        format!(
            "{} cells: slope error {:.3e} (tol {:.1e}), residual power {:.2} (min {:.2}), mixing error {:.3e} (tol {:.1e})",
            report.cells.len(),
            slope_err,
            p.slope_tol,
            power,
            p.min_power,
            mixing,
            p.mixing_tol
        ),
    );
    out.metric("cells", report.cells.len());
    out.metric("max_slope_error", slope_err);
    out.metric("min_residual_power", power);
    out.metric("max_mixing_error", mixing);
    out.metric("max_oracle_error", worst_oracle);
    out.table("cells", csv);
    Ok(out)
}

fn run_eckart_order(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let sys = system_of(cfg)?;
    let p = cfg.order.as_ref().expect("validated");
    if p.n_scales < 2 || !(p.scale_min > 0.0) || !(p.scale_max > p.scale_min) {
        bail!("ConfigInvalid: order needs 0 < scale_min < scale_max and n_scales >= 2");
    }
    let mut reference = p.reference.clone();
    if reference.len() != sys.dim() {
        bail!("ConfigInvalid: order.reference must have {} entries", sys.dim());
    }
    remove_center_of_mass(&sys, &mut reference);
    let fixed = fix_quadratic(&sys, &reference)?;
    let shape = EquilibriumShape::new(&sys, fixed.body.coords)?;

    let ratio = p.scale_max / p.scale_min;
    let scales: Vec<f64> = (0..p.n_scales)
        .map(|k| p.scale_min * ratio.powf(k as f64 / (p.n_scales - 1) as f64))
        .collect();
    let eckart =
        eckart_order_check(&sys, &shape, OrderChart::Eckart, &scales, p.n_draws, cfg.seed)?;
    let pa = eckart_order_check(
        &sys,
        &shape,
        OrderChart::LinearizedPrincipalAxes,
        &scales,
        p.n_draws,
        cfg.seed + 2,
    )?;

    let mut csv = Csv::new(&["chart", "draw", "exponent", "lambda_small", "lambda_large"]);
    for (name, report) in [("eckart", &eckart), ("principal-axes", &pa)] {
        for (i, d) in report.draws.iter().enumerate() {
            csv.row(&[
                Cell::Str(name),
                Cell::Int(i as i64),
                Cell::Float(d.exponent),
                Cell::Float(d.lambda_small),
                Cell::Float(d.lambda_large),
            ]);
        }
    }

    let pass =
        eckart.min_exponent() >= p.eckart_min_exponent && pa.max_exponent() < p.pa_max_exponent;
    let mut out = RunOutcome::new(
        pass,
        format!(
            "eckart exponent >= {:.3} (need {:.2}), principal-axes exponent <= {:.3} (need < {:.2})",
            eckart.min_exponent(),
            p.eckart_min_exponent,
            pa.max_exponent(),
            p.pa_max_exponent
        ),
    );
    out.metric("eckart_min_exponent", eckart.min_exponent());
    out.metric("pa_max_exponent", pa.max_exponent());
    out.metric("n_draws", p.n_draws);
    out.table("draws", csv);
    Ok(out)
}

fn run_residual_verify(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let sys = system_of(cfg)?;
    let chart = chart_of(cfg, &sys)?;
    let p = cfg.residual.as_ref().expect("validated");
    let n = sys.n();
    if p.integers_linear.len() != n || p.integers_quadratic.len() != n {
        bail!("ConfigInvalid: residual integer lists must have {n} entries");
    }
    if p.gaussian_widths.len() != n {
        bail!("ConfigInvalid: residual.gaussian_widths must have {n} entries");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let x_lin = sample_on_surface(&sys, SurfaceFamily::Linear(&chart), &mut rng, 1.0, 0.2)?;
    let x_quad = sample_on_surface(&sys, SurfaceFamily::Quadratic, &mut rng, 1.0, 0.3)?;

    let mut csv = Csv::new(&["check", "value", "tolerance", "pass"]);
    let mut all_pass = true;
    let record = |csv: &mut Csv, name: &str, value: f64, tol: f64| -> bool {
        let ok = value < tol;
        csv.row(&[Cell::Str(name), Cell::Float(value), Cell::Float(tol), Cell::Bool(ok)]);
        ok
    };

    let sweep_lin = sweep_orbit_linear(&sys, &chart, &x_lin, p.orbit_steps)?;
    all_pass &= record(&mut csv, "orbit_sweep_linear", sweep_lin.worst(), p.orbit_tol);
    let sweep_quad = sweep_orbit_quadratic(&sys, &x_quad, p.orbit_steps)?;
    all_pass &= record(&mut csv, "orbit_sweep_quadratic", sweep_quad.worst(), p.orbit_tol);
    let period = quadratic_period_error(&sys, &x_quad)?;
    all_pass &= record(&mut csv, "quadratic_period_return", period, p.period_tol);

    let gen_lin = verify_generator_linear(&sys, &chart, &x_lin, p.generator_dalpha)?;
    all_pass &= record(&mut csv, "generator_linear", gen_lin.max_deviation, p.generator_tol);
    let gen_quad = verify_generator_quadratic(&sys, &x_quad, p.generator_dalpha)?;
    all_pass &= record(&mut csv, "generator_quadratic", gen_quad.max_deviation, p.generator_tol);

    let kernel = KernelFactor::gaussian(p.gaussian_widths.clone());
    let spec_lin = ResidualEigenfunction::new(p.integers_linear.clone(), kernel.clone())?;
    let check_lin =
        verify_eigenfunction_linear(&sys, &chart, &spec_lin, p.n_points, cfg.seed + 10)?;
    all_pass &= record(
        &mut csv,
        "eigenfunction_linear",
        check_lin.max_deviation,
        p.eigen_tol_linear,
    );
    // Linear eigenvalues must be exact integer multiples of hbar.
    let integer_defect =
        (linear_eigenvalue(&sys, &spec_lin) / sys.hbar() - spec_lin.total() as f64).abs();
    all_pass &= record(&mut csv, "linear_eigenvalue_integer", integer_defect, 1e-14);

    let spec_quad = ResidualEigenfunction::new(p.integers_quadratic.clone(), kernel)?;
    let check_quad =
        verify_eigenfunction_quadratic(&sys, &spec_quad, p.n_points, cfg.seed + 11)?;
    all_pass &= record(
        &mut csv,
        "eigenfunction_quadratic",
        check_quad.max_deviation,
        p.eigen_tol_quadratic,
    );

    let omega = omega_quadratic(&sys, &x_quad)?;
    let worst_eigen = check_lin.max_deviation.max(check_quad.max_deviation);
    let mut out = RunOutcome::new(
        all_pass,
        format!(
            "orbit drift {:.3e}, period return {:.3e}, generator {:.3e}, eigenfunctions {:.3e}",
            sweep_lin.worst().max(sweep_quad.worst()),
            period,
            gen_lin.max_deviation.max(gen_quad.max_deviation),
            worst_eigen
        ),
    );
    out.metric("orbit_drift_linear", sweep_lin.worst());
    out.metric("orbit_drift_quadratic", sweep_quad.worst());
    out.metric("period_return_error", period);
    out.metric("generator_deviation_linear", gen_lin.max_deviation);
    out.metric("generator_deviation_quadratic", gen_quad.max_deviation);
    out.metric("eigenfunction_deviation_linear", check_lin.max_deviation);
    out.metric("eigenfunction_deviation_quadratic", check_quad.max_deviation);
    out.metric("omega_at_sample", omega);
    out.table("checks", csv);
    Ok(out)
}

fn run_orbit_invariants(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let sys = system_of(cfg)?;
    let chart = chart_of(cfg, &sys)?;
    let p = cfg.orbit.as_ref().expect("validated");
    if p.n_steps == 0 || !(p.margin > 0.0 && p.margin < 0.5) {
        bail!("ConfigInvalid: orbit needs n_steps >= 1 and margin in (0, 0.5)");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let x_lin = sample_on_surface(&sys, SurfaceFamily::Linear(&chart), &mut rng, 1.0, p.margin)?;
    let x_quad = sample_on_surface(&sys, SurfaceFamily::Quadratic, &mut rng, 1.0, p.margin)?;

    let mut csv = Csv::new(&[
        "gauge",
        "alpha",
        "gauge_residual",
        "companion_drift",
        "inertia_drift",
        "radius_drift",
    ]);
    let mut worst = 0.0_f64;

    let v0 = shape_linear(&sys, &chart, &x_lin);
    let i0 = sys.moment_of_inertia(&x_lin);
    let radii0 = kernel_invariants_linear(&sys, &chart, &x_lin)?;
    for k in 0..=p.n_steps {
        let alpha = std::f64::consts::TAU * k as f64 / p.n_steps as f64;
        let moved = orbit_linear(&sys, &chart, &x_lin, alpha)?;
        let v = shape_linear(&sys, &chart, &moved);
        let inertia = sys.moment_of_inertia(&moved);
        let radii = kernel_invariants_linear(&sys, &chart, &moved)?;
        let residual = v.s.abs() / (v.r_squared * inertia).sqrt();
        let companion = (v.q - v0.q).abs() / (1.0 + v0.q.abs());
        let inertia_drift = (inertia - i0).abs() / (1.0 + i0);
        let radius = radii
            .iter()
            .zip(&radii0)
            .map(|(r, r0)| (r - r0).abs() / (1.0 + r0))
            .fold(0.0_f64, f64::max);
        worst = worst.max(residual).max(companion).max(inertia_drift).max(radius);
        csv.row(&[
            Cell::Str("linear"),
            Cell::Float(alpha),
            Cell::Float(residual),
            Cell::Float(companion),
            Cell::Float(inertia_drift),
            Cell::Float(radius),
        ]);
    }

    let omega = omega_quadratic(&sys, &x_quad)?;
    let w0 = shape_quadratic(&sys, &x_quad);
    let radii0 = kernel_invariants_quadratic(&sys, &x_quad)?;
    for k in 0..=p.n_steps {
        let alpha = std::f64::consts::TAU / omega * k as f64 / p.n_steps as f64;
        let moved = orbit_quadratic(&sys, &x_quad, alpha)?;
        let v = shape_quadratic(&sys, &moved);
        let radii = kernel_invariants_quadratic(&sys, &moved)?;
        let residual = v.s.abs() / v.r_squared;
        let companion = (v.q - w0.q).abs() / (1.0 + w0.q.abs());
        let inertia_drift = (v.r_squared - w0.r_squared).abs() / (1.0 + w0.r_squared);
        let radius = radii
            .iter()
            .zip(&radii0)
            .map(|(r, r0)| (r - r0).abs() / (1.0 + r0))
            .fold(0.0_f64, f64::max);
        worst = worst.max(residual).max(companion).max(inertia_drift).max(radius);
        csv.row(&[
            Cell::Str("quadratic"),
            Cell::Float(alpha),
            Cell::Float(residual),
            Cell::Float(companion),
            Cell::Float(inertia_drift),
            Cell::Float(radius),
        ]);
    }

    // Plot-ready series; the verdict only requires the drifts to stay at
    // rounding scale.
    let pass = worst < 1e-10;
    let mut out = RunOutcome::new(
        pass,
        format!("worst invariant drift along both orbits {worst:.3e} (tol 1e-10)"),
    );
    out.metric("worst_drift", worst);
    out.metric("omega_quadratic", omega);
    out.table("series", csv);
    Ok(out)
}
