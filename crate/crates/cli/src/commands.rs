//! One function per subcommand, each returning its report.

use std::f64::consts::FRAC_PI_2;
use std::path::Path;
use std::sync::Arc;

use holostrip::contact_structures::{compatibility_report, StructureField, POSITIVITY_MARGIN};
use holostrip::decay::{alpha_trace, convexity_check, decay_fit, direction_error, DecayConfig};
use holostrip::exact_solutions::{
    cr_residual, energy_dlambda, energy_hofer, halfdisk_energy, halfdisk_polar_grid,
    halfdisk_solution, second_derivative_sup, sigmoid_dictionary, strip_solution,
    strip_to_halfdisk, CrChart, ExplicitFamily, FlattenedChart, MonotoneProfile, SimpleChart,
};
use holostrip::geometry::{
    tb_signed_count, winding_number, zeros_of_a, ChartPoint, Sign, SurfaceProfile, ZERO_TOL,
};
use holostrip::grid::FieldGrid;
use holostrip::solver::{gauss_newton_solve, EndCondition, SolveOutput, SolverConfig};
use holostrip::spectral::{
    analytic_eigenvector, fd_error_estimate, spectrum_fd, spectrum_shooting, AsymptoticOperator,
    EigenvectorFn, Parity,
};
use holostrip::Error;
use nalgebra::Vector4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::config::{ChartKind, ProfileSource, RunConfig};
use crate::io::{self, Format};
use crate::{Cli, CliError, Command, MethodArg, Outcome};

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let mut outcome = match &cli.command {
        Command::VerifyExact {
            epsilon,
            grid,
            s_range,
        } => {
            let (ns, nt) = parse_pair(grid, 'x')?;
            verify_exact(*epsilon, ns, nt, parse_pair(s_range, ':')?)
        }
        Command::Spectrum {
            q0,
            method,
            n,
            range,
        } => spectrum(*q0, *method, *n, parse_pair(range, ',')?),
        Command::Decay {
            epsilon,
            s_range,
            nt,
            burn_in,
            check_at,
            csv,
        } => decay(
            *epsilon,
            parse_pair(s_range, ':')?,
            *nt,
            *burn_in,
            *check_at,
            csv.as_deref(),
        ),
        Command::Solve { config } => solve(&RunConfig::load(config)?, cli.seed),
        Command::Tb { profile } => tb(&io::read_profile_csv(profile)?),
        Command::Compat { config } => compat(&RunConfig::load(config)?, cli.seed),
    }?;
    if let Value::Object(map) = &mut outcome.report {
        map.insert("seed".into(), json!(cli.seed));
        map.insert("ok".into(), json!(outcome.ok));
    }
    Ok(outcome)
}

fn parse_pair<T: std::str::FromStr>(raw: &str, sep: char) -> Result<(T, T), CliError> {
    let bad = || CliError::Config(format!("`{raw}` should look like A{sep}B"));
    let (a, b) = raw.split_once(sep).ok_or_else(bad)?;
    Ok((
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    ))
}

/// Collects named checks; the report is ok when all hold.
#[derive(Default)]
struct Checks(Map<String, Value>);

impl Checks {
    fn add(&mut self, name: &str, ok: bool) {
        self.0.insert(name.into(), json!(ok));
    }

    fn finish(self, mut report: Value) -> Outcome {
        let ok = self.0.values().all(|v| v == &json!(true));
        report["checks"] = Value::Object(self.0);
        Outcome { report, ok }
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

fn simple_chart(profile: SurfaceProfile, eps: f64) -> SimpleChart {
    SimpleChart {
        profile,
        bound: 1.0f64.max(2.0 * eps.abs()),
    }
}

pub fn verify_exact(
    eps: f64,
    ns: usize,
    nt: usize,
    s_range: (f64, f64),
) -> Result<Outcome, CliError> {
    let fam = ExplicitFamily::new(eps)?;
    let chart = simple_chart(fam.profile(), eps);
    let grid = fam.sample(s_range, ns, nt)?;
    let fine = fam.sample(s_range, 2 * ns - 1, 2 * nt - 1)?;
    let res = cr_residual(&grid, &chart)?;
    let res_fine = cr_residual(&fine, &chart)?;
    let h = grid.h_s().max(grid.h_t());
    let bound = 5.0 * h * h * second_derivative_sup(&grid);
    let ratio = res.max_norm / res_fine.max_norm;

    let composition = grid
        .values
        .iter()
        .enumerate()
        .try_fold(0.0f64, |m, (k, v)| {
            let (s, t) = (grid.s(k / nt), grid.t(k % nt));
            let z = strip_to_halfdisk(s, t);
            let p = halfdisk_solution(eps, z.re, z.im)?.to_vector();
            debug_assert_eq!(*v, strip_solution(eps, s, t).to_vector());
            Ok::<f64, Error>(m.max((p - v).amax()))
        })?;

    let polar = halfdisk_polar_grid(eps, ns, nt)?;
    let coarse = halfdisk_polar_grid(eps, ns.div_ceil(2).max(3), nt.div_ceil(2).max(3))?;
    let energy = energy_dlambda(&polar);
    let exact = halfdisk_energy(eps);
    let estimate = (energy - energy_dlambda(&coarse)).abs();
    let tau_lo = polar
        .values
        .iter()
        .map(|v| v[0])
        .fold(f64::INFINITY, f64::min);
    let mut dictionary = sigmoid_dictionary(tau_lo, 0.0, 9, 0.25 * eps * eps);
    dictionary.push(MonotoneProfile::Constant { value: 1.0 });
    let budget = energy_hofer(&polar, &dictionary)?;

    let mut checks = Checks::default();
    checks.add("residual_within_bound", res.max_norm <= bound);
    checks.add("residual_quarters", (3.5..=4.5).contains(&ratio));
    checks.add("boundary_conditions", res.max_boundary_violation() <= 1e-13);
    checks.add("composition", composition <= 1e-12);
    checks.add(
        "energy_within_quadrature_error",
        (energy - exact).abs() <= estimate.max(1e-12),
    );
    let report = json!({
        "command": "verify-exact",
        "epsilon": eps,
        "grid": [ns, nt],
        "s_range": [s_range.0, s_range.1],
        "residual": to_value(&res),
        "residual_bound": bound,
        "residual_refined": res_fine.max_norm,
        "residual_ratio": ratio,
        "composition_error": composition,
        "energy_dlambda": energy,
        "energy_exact": exact,
        "energy_error": (energy - exact).abs(),
        "energy_error_estimate": estimate,
        "hofer_energy_lb": budget.hofer_energy_lb,
    });
    Ok(checks.finish(report))
}

pub fn spectrum(
    q0: f64,
    method: MethodArg,
    n: usize,
    range: (f64, f64),
) -> Result<Outcome, CliError> {
    let (lo, hi) = range;
    let op = AsymptoticOperator::new(q0);
    let (rep, tol) = match method {
        MethodArg::Shooting => (spectrum_shooting(&op, lo, hi)?, 1e-10),
        MethodArg::Fd => (
            spectrum_fd(&op, n, lo, hi)?,
            10.0 * fd_error_estimate(lo.abs().max(hi.abs()), n),
        ),
    };
    let k_lo = (lo / FRAC_PI_2).ceil() as i64;
    let k_hi = (hi / FRAC_PI_2).floor() as i64;
    let expected = (k_hi - k_lo + 1).max(0) as usize;
    let mut checks = Checks::default();
    checks.add("count_matches_lattice", rep.eigenvalues.len() == expected);
    checks.add("all_simple", rep.all_simple());
    checks.add("on_lattice", rep.lattice_deviation <= tol);
    let mut report = to_value(&rep);
    report["command"] = json!("spectrum");
    report["tolerance"] = json!(tol);
    Ok(checks.finish(report))
}

fn kernel_direction() -> EigenvectorFn {
    EigenvectorFn {
        lambda: 0.0,
        kappa: 1.0,
        q0: 0.0,
        parity: Parity::Even,
    }
}

pub fn decay(
    eps: f64,
    s_range: (f64, f64),
    nt: usize,
    burn_in: Option<f64>,
    check_at: f64,
    csv: Option<&Path>,
) -> Result<Outcome, CliError> {
    let fam = ExplicitFamily::new(eps)?;
    if nt < 5 {
        return Err(CliError::Config("--nt must be at least 5".into()));
    }
    let ns = ((s_range.1 - s_range.0) * (nt - 1) as f64).round() as usize + 1;
    let grid = fam.sample_flattened(s_range, ns, nt)?;
    let field = fam.structure_field();
    let cfg = DecayConfig {
        burn_in,
        ..DecayConfig::default()
    };
    let trace = alpha_trace(&grid, &field, &cfg)?;
    if let Some(path) = csv {
        io::write_alpha_csv(path, &trace)?;
    }
    let lambda = trace.lattice_lambda();
    let q0 = fam.q_recentered().scale / fam.q_recentered().shift;
    let e = analytic_eigenvector(lambda, q0, 1.0)?;
    let conv = convexity_check(
        &grid,
        &field,
        &kernel_direction(),
        burn_in.unwrap_or(s_range.0 + 1.0),
    )?;

    let mut checks = Checks::default();
    checks.add("alpha_formulas_agree", trace.agree());
    checks.add(
        "lambda_on_lattice",
        (trace.lambda_fit - lambda).abs() <= 1e-3,
    );
    checks.add(
        "convexity",
        conv.min_ratio.is_some_and(|r| r > 0.0) && conv.envelope_holds,
    );
    let mut report = json!({
        "command": "decay",
        "epsilon": eps,
        "s_range": [s_range.0, s_range.1],
        "grid": [ns, nt],
        "lambda_fit": trace.lambda_fit,
        "alpha_discrepancy_max": trace.discrepancy_max,
        "convexity": {
            "min_ratio": conv.min_ratio,
            "delta_fit": conv.delta_fit,
            "envelope_max": conv.envelope_max,
            "envelope_holds": conv.envelope_holds,
        },
    });
    match decay_fit(&grid, &field, &e, &cfg) {
        Ok(rep) => {
            let at = if check_at >= s_range.0 && check_at <= s_range.1 {
                check_at
            } else {
                0.5 * (s_range.0 + s_range.1)
            };
            let dir = direction_error(&grid, &field, &e, at)?;
            checks.add("rates_positive", rep.all_rates_positive);
            checks.add("direction_matches", dir <= 1e-3);
            for key in [
                "lambda",
                "rho",
                "rho_derivatives",
                "delta_alpha",
                "delta_remainder",
                "kappa",
                "q0_used",
            ] {
                report[key] = to_value(&rep)[key].clone();
            }
            report["direction_error"] = json!(dir);
            report["direction_checked_at"] = json!(at);
        }
        Err(e @ Error::NoSpectrumMatch { .. }) => {
            checks.add("spectrum_match", false);
            report["error"] = json!(e.to_string());
        }
        Err(e) => return Err(e.into()),
    }
    Ok(checks.finish(report))
}

fn base_profile(src: &ProfileSource) -> Result<SurfaceProfile, CliError> {
    Ok(match src {
        ProfileSource::Explicit { epsilon } => ExplicitFamily::new(*epsilon)?.profile(),
        ProfileSource::Circle => SurfaceProfile::circle(),
        ProfileSource::File(p) => io::read_profile_csv(p)?,
    })
}

fn explicit_field(fam: &ExplicitFamily, c: Option<f64>) -> Result<StructureField, CliError> {
    Ok(match c {
        Some(c) => StructureField::new(Arc::new(fam.q_recentered()), c)?,
        None => fam.structure_field(),
    })
}

pub fn solve(cfg: &RunConfig, seed: u64) -> Result<Outcome, CliError> {
    if cfg.experiment != "solve" {
        return Err(CliError::Config(format!(
            "experiment `{}` is not `solve`",
            cfg.experiment
        )));
    }
    cfg.check_params(&[
        "noise",
        "max_iterations",
        "residual_tol",
        "step_damping",
        "boundary_weight",
        "end_condition",
        "max_error",
    ])?;
    let grid_spec = cfg
        .grid
        .as_ref()
        .ok_or_else(|| CliError::Config("solve needs a [grid] section".into()))?;
    let (s_range, ns, nt) = (grid_spec.s_range, grid_spec.n_s, grid_spec.n_t);
    let family = match cfg.profile {
        ProfileSource::Explicit { epsilon } => Some(ExplicitFamily::new(epsilon)?),
        _ => None,
    };
    let (chart, oracle): (Box<dyn CrChart>, Option<FieldGrid>) = match (cfg.chart.kind, &family) {
        (ChartKind::Simple, fam) => (
            Box::new(SimpleChart {
                profile: base_profile(&cfg.profile)?,
                bound: cfg.chart.bound,
            }),
            fam.map(|f| f.sample(s_range, ns, nt)).transpose()?,
        ),
        (ChartKind::Flattened, Some(fam)) => (
            Box::new(FlattenedChart {
                field: explicit_field(fam, cfg.chart.c)?,
                bound: cfg.chart.bound,
            }),
            Some(fam.sample_flattened(s_range, ns, nt)?),
        ),
        (ChartKind::Flattened, None) => {
            return Err(CliError::Config(
                "the flattened chart needs the explicit profile".into(),
            ));
        }
    };

    let noise: f64 = cfg.param("noise", 0.0)?;
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(CliError::Config("[experiment] noise must be >= 0".into()));
    }
    let initial = match (&grid_spec.initial, &oracle) {
        (Some(path), _) => io::read_grid_csv(path)?,
        (None, Some(o)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut values = o.values.clone();
            if noise > 0.0 {
                for (k, v) in values.iter_mut().enumerate() {
                    let i = k / nt;
                    if i > 0 && i + 1 < ns {
                        *v += Vector4::from_fn(|_, _| rng.random_range(-noise..noise));
                    }
                }
            }
            o.with_values(values)?
        }
        (None, None) => {
            return Err(CliError::Config(
                "[grid] needs `initial` when no oracle is available".into(),
            ))
        }
    };
    let end_condition = match cfg
        .param("end_condition", String::from("dirichlet"))?
        .as_str()
    {
        "dirichlet" => EndCondition::from_grid(oracle.as_ref().unwrap_or(&initial)),
        "free" => EndCondition::Free,
        other => {
            return Err(CliError::Config(format!(
                "[experiment] unknown end_condition `{other}`"
            )))
        }
    };
    let mut scfg = SolverConfig::new(s_range, ns, nt, end_condition);
    scfg.max_iterations = cfg.param("max_iterations", scfg.max_iterations)?;
    scfg.residual_tol = cfg.param("residual_tol", scfg.residual_tol)?;
    scfg.step_damping = cfg.param("step_damping", scfg.step_damping)?;
    scfg.boundary_weight = cfg.param("boundary_weight", scfg.boundary_weight)?;
    scfg.validate()?;

    let (out, converged): (SolveOutput, bool) =
        match gauss_newton_solve(&initial, chart.as_ref(), &scfg) {
            Ok(out) => (out, true),
            Err(Error::MaxIterationsExceeded { best, .. }) => (*best, false),
            Err(Error::SingularNormalEquations)
                if ns % 2 == 1 && matches!(scfg.end_condition, EndCondition::Dirichlet { .. }) =>
            {
                return Err(CliError::Config(format!(
                    "normal equations are singular; n_s = {ns} is odd, use an even count"
                )));
            }
            Err(e) => return Err(e.into()),
        };
    let bc = cr_residual(&out.grid, chart.as_ref())?.max_boundary_violation();
    let sup_error = oracle
        .as_ref()
        .map(|o| out.grid.max_abs_diff(o))
        .transpose()?;
    let monotone = out.log.windows(2).all(|w| w[1].residual < w[0].residual);

    let mut checks = Checks::default();
    checks.add("converged", converged);
    checks.add("residual_decreasing", monotone);
    if scfg.boundary_weight > 0.0 {
        checks.add(
            "boundary_within_tolerance",
            bc <= scfg.residual_tol / scfg.boundary_weight,
        );
    }
    if let Some(limit) = cfg.params.get("max_error") {
        let limit: f64 = limit
            .parse()
            .map_err(|_| CliError::Config("[experiment] max_error is not a number".into()))?;
        checks.add("error_within_limit", sup_error.is_some_and(|e| e <= limit));
    }
    let report = json!({
        "command": "solve",
        "grid": [ns, nt],
        "s_range": [s_range.0, s_range.1],
        "noise": noise,
        "iterations": out.iterations(),
        "residual": out.residual(),
        "log": to_value(&out.log),
        "boundary_violation": bc,
        "sup_error": sup_error,
    });
    let outcome = checks.finish(report);
    if let Some(dir) = &cfg.output.dir {
        std::fs::create_dir_all(dir)?;
        io::write_grid_csv(&dir.join("solution.csv"), &out.grid)?;
        io::write_log_csv(&dir.join("convergence.csv"), &out.log)?;
        for f in &cfg.output.formats {
            let name = if *f == Format::Json {
                "report.json"
            } else {
                "report.csv"
            };
            io::write_report(&outcome.report, *f, &dir.join(name))?;
        }
    }
    Ok(outcome)
}

pub fn tb(profile: &SurfaceProfile) -> Result<Outcome, CliError> {
    let w = winding_number(profile, 4096, ZERO_TOL)?;
    let pos = tb_signed_count(profile, Sign::Positive)?;
    let neg = tb_signed_count(profile, Sign::Negative)?;
    let zeros = zeros_of_a(profile, 4096, ZERO_TOL)?;
    let mut checks = Checks::default();
    checks.add(
        "degree_equals_signed_count",
        w.degree == pos && w.degree == neg,
    );
    let report = json!({
        "command": "tb",
        "degree": w.degree,
        "winding_residual": w.residual,
        "signed_count": pos,
        "signed_count_negative": neg,
        "zeros_of_a": zeros,
    });
    Ok(checks.finish(report))
}

pub fn compat(cfg: &RunConfig, seed: u64) -> Result<Outcome, CliError> {
    if cfg.experiment != "compat" {
        return Err(CliError::Config(format!(
            "experiment `{}` is not `compat`",
            cfg.experiment
        )));
    }
    cfg.check_params(&["samples", "tolerance"])?;
    let samples: usize = cfg.param("samples", 1000)?;
    let tol: f64 = cfg.param("tolerance", 1e-12)?;
    let (field, (lo, hi)) = match &cfg.profile {
        ProfileSource::Explicit { epsilon } => {
            let fam = ExplicitFamily::new(*epsilon)?;
            let r = 0.1 * epsilon.abs();
            (
                explicit_field(&fam, cfg.chart.c)?,
                cfg.chart.theta_range.unwrap_or((-r, r)),
            )
        }
        src => {
            let (lo, hi) = cfg.chart.theta_range.ok_or_else(|| {
                CliError::Config("[chart] needs theta_min and theta_max for this profile".into())
            })?;
            let q = Arc::new(base_profile(src)?);
            let field = match cfg.chart.c {
                Some(c) => StructureField::new(q, c)?,
                None => StructureField::with_default_c(q, lo, hi)?,
            };
            (field, (lo, hi))
        }
    };
    let b = cfg.chart.bound;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<ChartPoint> = (0..samples)
        .map(|_| {
            ChartPoint::new(
                rng.random_range(-1.0..=1.0),
                rng.random_range(lo..=hi),
                rng.random_range(-b..=b),
                rng.random_range(-b..=b),
            )
        })
        .collect();
    let mut checks = Checks::default();
    let mut report = json!({
        "command": "compat",
        "c": field.c,
        "theta_range": [lo, hi],
        "bound": b,
        "samples": samples,
        "tolerance": tol,
    });
    match compatibility_report(&field, &points) {
        Ok(rep) => {
            checks.add("identities", rep.max_violation() <= tol);
            checks.add("positive_definite", rep.min_eigenvalue > POSITIVITY_MARGIN);
            report["report"] = to_value(&rep);
            report["max_violation"] = json!(rep.max_violation());
        }
        Err(Error::PositivityFailure {
            point,
            min_eigenvalue,
        }) => {
            checks.add("positive_definite", false);
            report["positivity_failure"] =
                json!({"point": point, "min_eigenvalue": min_eigenvalue});
        }
        Err(e) => return Err(e.into()),
    }
    Ok(checks.finish(report))
}
