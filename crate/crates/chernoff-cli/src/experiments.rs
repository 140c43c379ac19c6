//! Experiment pipelines: one per config kind, all funneling into the same
//! report shape.

use std::collections::BTreeMap;
use std::time::Instant;

use serde_json::Value;

use chernoff::functions::SmoothFn;
use chernoff::oracles::{g_heat_convex, gaussian_heat, large_deviations_limit, ode_flow};
use chernoff::semigroup::RefinementLadder;
use chernoff::{
    chernoff_evolve, check_centering, comparison_run, convexity_certificate, generator_residual,
    make_schedule, CompactWindow, Grid1d, GridFunction, SchemeStep, StepKind, WeightKappa,
};

use crate::config::{
    ConfigError, ExperimentConfig, GeneratorSpec, OracleSpec, SchemeLadderSpec,
};
use crate::report::{float, LevelRow, RunReport};

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    /// A scheme failed while running; the step index travels inside the
    /// source error.
    Runtime { level: usize, source: chernoff::Error },
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(e) => write!(f, "config error at {e}"),
            Self::Runtime { level, source } => write!(f, "runtime error at level {level}: {source}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

fn runtime(level: usize) -> impl Fn(chernoff::Error) -> RunError {
    move |source| RunError::Runtime { level, source }
}

/// Runs a validated config and assembles the report. `level_filter`
/// restricts ladder execution to one level.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    level_filter: Option<usize>,
) -> Result<RunReport, RunError> {
    cfg.validate()?;
    let mut report = RunReport {
        experiment: cfg.experiment.clone(),
        config_echo: serde_json::to_value(cfg).expect("config serializes"),
        ..RunReport::default()
    };
    match cfg.experiment.as_str() {
        "compare" => run_compare(cfg, level_filter, &mut report)?,
        "properties" => run_properties(cfg, &mut report)?,
        _ => run_single_scheme(cfg, level_filter, &mut report)?,
    }
    Ok(report)
}

fn window(cfg: &ExperimentConfig) -> CompactWindow {
    CompactWindow::new(cfg.window.lo, cfg.window.hi).expect("validated window")
}

fn keep_level(level_filter: Option<usize>, level: usize) -> bool {
    level_filter.is_none_or(|l| l == level)
}

/// Ladder checks for evolve studies (at least three levels, strictly
/// refining); generator-only studies run the raw level list.
fn validate_ladder(levels: &[(SchemeStep, Grid1d)], rule: &str) -> Result<(), ConfigError> {
    let as_levels: Vec<chernoff::RefinementLevel> = levels
        .iter()
        .map(|(s, g)| chernoff::RefinementLevel {
            step: s.clone(),
            grid: *g,
        })
        .collect();
    RefinementLadder::new(as_levels, rule).map(|_| ()).map_err(|e| ConfigError {
        path: "scheme".into(),
        message: e.to_string(),
    })
}

fn run_single_scheme(
    cfg: &ExperimentConfig,
    level_filter: Option<usize>,
    report: &mut RunReport,
) -> Result<(), RunError> {
    let scheme = cfg.scheme.as_ref().expect("validated scheme");
    let levels = scheme.build_levels(&cfg.grid, "scheme")?;
    let w = window(cfg);
    record_scheme_extras(scheme, &levels, report);

    if let Some(generator) = &cfg.generator {
        run_generator_study(cfg, generator, &levels, &w, level_filter, report)?;
        return Ok(());
    }

    validate_ladder(&levels, "configured ladder")?;
    let time = cfg.time.as_ref().expect("validated time");
    let initial = cfg.initial.as_ref().expect("validated initial").build();
    let kappa = WeightKappa::Constant;

    // the self-referencing oracle needs the finest level up front
    let oracle = cfg.oracle.as_ref().ok_or_else(|| ConfigError {
        path: "oracle".into(),
        message: "evolve studies need an oracle block".into(),
    })?;
    let finest_result = if matches!(oracle, OracleSpec::SelfFinest) {
        if level_filter.is_some() {
            return Err(ConfigError {
                path: "oracle.kind".into(),
                message: "self-finest oracle cannot run under a level filter".into(),
            }
            .into());
        }
        let (step, grid) = levels.last().expect("nonempty ladder");
        let sampled =
            chernoff::sample_function(initial.as_fn(), *grid).map_err(runtime(levels.len() - 1))?;
        let sched = make_schedule(time.t, step.h()).map_err(runtime(levels.len() - 1))?;
        Some(
            chernoff_evolve(step, &sampled, sched, &kappa)
                .map_err(runtime(levels.len() - 1))?
                .result,
        )
    } else {
        None
    };

    let mut prev_error: Option<f64> = None;
    for (level, (step, grid)) in levels.iter().enumerate() {
        if !keep_level(level_filter, level) {
            continue;
        }
        let started = Instant::now();
        let sampled = chernoff::sample_function(initial.as_fn(), *grid).map_err(runtime(level))?;
        let sched = make_schedule(time.t, step.h()).map_err(runtime(level))?;
        let evolved = chernoff_evolve(step, &sampled, sched, &kappa).map_err(runtime(level))?;
        let reference =
            oracle_values(cfg, oracle, scheme, &initial, time.t, &w, grid, finest_result.as_ref())
                .map_err(runtime(level))?;
        let mut error = 0.0_f64;
        for (j, i) in grid.indices_in(w.lo, w.hi).enumerate() {
            error = error.max((evolved.result.values()[i] - reference[j]).abs());
        }
        report.rows.push(LevelRow {
            level,
            delta: grid.spacing(),
            h: step.h(),
            k: sched.k,
            error,
            order: order_from(prev_error, error),
        });
        prev_error = Some(error);
        report.snapshots.push((level, evolved.result));
        report.wall_times.push(started.elapsed().as_secs_f64());
    }
    push_error_verdicts(cfg, report);
    Ok(())
}

/// Reference values on the window nodes of `grid`, per oracle kind.
#[allow(clippy::too_many_arguments)]
fn oracle_values(
    cfg: &ExperimentConfig,
    oracle: &OracleSpec,
    scheme: &SchemeLadderSpec,
    initial: &SmoothFn,
    t: f64,
    w: &CompactWindow,
    grid: &Grid1d,
    finest: Option<&GridFunction>,
) -> Result<Vec<f64>, chernoff::Error> {
    let _ = cfg;
    match oracle {
        OracleSpec::GaussianHeat { sigma } => {
            Ok(gaussian_heat(initial.as_fn(), *sigma, t, w, grid)?.values)
        }
        OracleSpec::GHeatConvex { sigma_lo, sigma_hi } => {
            Ok(g_heat_convex(initial.as_fn(), *sigma_lo, *sigma_hi, t, w, grid)?.values)
        }
        OracleSpec::OdeFlow { rtol } => {
            let drift = match scheme {
                SchemeLadderSpec::Euler { drift, noise_scale, .. } if *noise_scale == 0.0 => {
                    drift.build()
                }
                _ => {
                    return Err(chernoff::Error::InvalidScheme(
                        "ode-flow oracle needs a drift-only euler scheme".into(),
                    ))
                }
            };
            grid.indices_in(w.lo, w.hi)
                .map(|i| {
                    let x = grid.node(i);
                    ode_flow(|u| drift.eval(u), t, x, *rtol).map(|u| initial.eval(u))
                })
                .collect()
        }
        OracleSpec::HopfLax { penalty } => {
            let penalty = penalty.build("oracle.penalty").map_err(|e| {
                chernoff::Error::InvalidPenalty(format!("{e}"))
            })?;
            Ok(large_deviations_limit(initial, &penalty, t, w, grid)?.values)
        }
        OracleSpec::SelfFinest => {
            let finest = finest.expect("finest precomputed");
            Ok(grid
                .indices_in(w.lo, w.hi)
                .map(|i| finest.eval(grid.node(i)))
                .collect())
        }
    }
}

fn run_generator_study(
    cfg: &ExperimentConfig,
    generator: &GeneratorSpec,
    levels: &[(SchemeStep, Grid1d)],
    w: &CompactWindow,
    level_filter: Option<usize>,
    report: &mut RunReport,
) -> Result<(), RunError> {
    let probe = generator.probe.build();
    let mut prev: Option<f64> = None;
    for (level, (step, grid)) in levels.iter().enumerate() {
        if !keep_level(level_filter, level) {
            continue;
        }
        let started = Instant::now();
        let desc = step.descriptor().map_err(runtime(level))?;
        let residual = generator_residual(step, &desc, &probe, *grid, w).map_err(runtime(level))?;
        report.rows.push(LevelRow {
            level,
            delta: grid.spacing(),
            h: step.h(),
            k: 1,
            error: residual,
            order: order_from(prev, residual),
        });
        prev = Some(residual);
        report.wall_times.push(started.elapsed().as_secs_f64());
    }
    let errors: Vec<f64> = report.rows.iter().map(|r| r.error).collect();
    let final_ok = errors
        .last()
        .map(|e| *e <= generator.max_final_residual)
        .unwrap_or(false);
    report.verdicts.insert("generator_final_residual".into(), final_ok);
    if cfg.tolerances.require_decreasing {
        report
            .verdicts
            .insert("errors_decreasing".into(), decreasing_tail(&errors));
    }
    Ok(())
}

fn run_compare(
    cfg: &ExperimentConfig,
    level_filter: Option<usize>,
    report: &mut RunReport,
) -> Result<(), RunError> {
    let spec_a = cfg.scheme_a.as_ref().expect("validated scheme_a");
    let spec_b = cfg.scheme_b.as_ref().expect("validated scheme_b");
    let levels_a = spec_a.build_levels(&cfg.grid, "scheme_a")?;
    let levels_b = spec_b.build_levels(&cfg.grid, "scheme_b")?;
    let time = cfg.time.as_ref().expect("validated time");
    let initial = cfg.initial.as_ref().expect("validated initial").build();
    let w = window(cfg);
    let kappa = WeightKappa::Constant;

    let mut rows_b = Vec::new();
    let mut prev: Option<f64> = None;
    for (level, ((step_a, grid_a), (step_b, grid_b))) in
        levels_a.iter().zip(&levels_b).enumerate()
    {
        if !keep_level(level_filter, level) {
            continue;
        }
        let started = Instant::now();
        let distance = comparison_run(
            (step_a, *grid_a),
            (step_b, *grid_b),
            initial.as_fn(),
            time.t,
            &w,
            &kappa,
        )
        .map_err(runtime(level))?;
        let sched_a = make_schedule(time.t, step_a.h()).map_err(runtime(level))?;
        report.rows.push(LevelRow {
            level,
            delta: grid_a.spacing(),
            h: step_a.h(),
            k: sched_a.k,
            error: distance,
            order: order_from(prev, distance),
        });
        prev = Some(distance);
        let sched_b = make_schedule(time.t, step_b.h()).map_err(runtime(level))?;
        rows_b.push(Value::Object(
            [
                ("level".to_string(), Value::Number(level.into())),
                ("delta".to_string(), float(grid_b.spacing())),
                ("h".to_string(), float(step_b.h())),
                ("k".to_string(), Value::Number(sched_b.k.into())),
            ]
            .into_iter()
            .collect(),
        ));
        // snapshot the first scheme's evolved state
        let sampled =
            chernoff::sample_function(initial.as_fn(), *grid_a).map_err(runtime(level))?;
        let evolved =
            chernoff_evolve(step_a, &sampled, sched_a, &kappa).map_err(runtime(level))?;
        report.snapshots.push((level, evolved.result));
        report.wall_times.push(started.elapsed().as_secs_f64());
    }
    report.extras.insert("scheme_b_levels".into(), Value::Array(rows_b));
    report.extras.insert(
        "generator_probe_tol".into(),
        float(chernoff::semigroup::GENERATOR_PROBE_TOL),
    );
    push_error_verdicts(cfg, report);
    Ok(())
}

fn run_properties(cfg: &ExperimentConfig, report: &mut RunReport) -> Result<(), RunError> {
    let props = cfg.properties.as_ref().expect("validated properties");
    let seed = cfg.seed.expect("validated seed");
    let max_violations = cfg.tolerances.max_violations.unwrap_or(0);
    let mut all_pass = true;
    let mut table = Vec::new();
    for (i, scheme) in props.schemes.iter().enumerate() {
        let started = Instant::now();
        let levels = scheme.build_levels(&cfg.grid, &format!("properties.schemes[{i}]"))?;
        let (step, grid) = &levels[0];
        let cert = convexity_certificate(step, *grid, props.trials, seed).map_err(runtime(i))?;
        all_pass &= cert.violations.len() <= max_violations;
        let witnesses: Vec<Value> = cert
            .violations
            .iter()
            .map(|v| {
                Value::Object(
                    [
                        ("property".to_string(), Value::String(v.property.into())),
                        ("trial".to_string(), Value::Number(v.trial.into())),
                        ("magnitude".to_string(), float(v.magnitude)),
                    ]
                    .into_iter()
                    .collect(),
                )
            })
            .collect();
        table.push(Value::Object(
            [
                ("scheme".to_string(), Value::String(cert.step_name.into())),
                ("trials".to_string(), Value::Number(cert.trials.into())),
                (
                    "checks".to_string(),
                    Value::Array(
                        cert.checks_run
                            .iter()
                            .map(|c| Value::String((*c).into()))
                            .collect(),
                    ),
                ),
                ("violations".to_string(), Value::Array(witnesses)),
            ]
            .into_iter()
            .collect(),
        ));
        report.wall_times.push(started.elapsed().as_secs_f64());
    }
    report.extras.insert("property_suites".into(), Value::Array(table));
    report.verdicts.insert("zero_violations".into(), all_pass);
    Ok(())
}

fn push_error_verdicts(cfg: &ExperimentConfig, report: &mut RunReport) {
    let errors: Vec<f64> = report.rows.iter().map(|r| r.error).collect();
    if let Some(bound) = cfg.tolerances.final_error {
        let ok = errors.last().map(|e| *e <= bound).unwrap_or(false);
        report.verdicts.insert("final_error".into(), ok);
    }
    if cfg.tolerances.require_decreasing {
        report
            .verdicts
            .insert("errors_decreasing".into(), decreasing_tail(&errors));
    }
}

/// Empirical order `log2(e_prev / e)`; dropped when not finite (an exact
/// zero error has no meaningful order).
fn order_from(prev: Option<f64>, error: f64) -> Option<f64> {
    prev.map(|p| (p / error).log2()).filter(|o| o.is_finite())
}

fn decreasing_tail(errors: &[f64]) -> bool {
    match errors.len() {
        0 => false,
        1 => true,
        n => errors[n - 1] < errors[n - 2],
    }
}

/// Kind-specific diagnostics recorded next to the ladder tables.
fn record_scheme_extras(
    scheme: &SchemeLadderSpec,
    levels: &[(SchemeStep, Grid1d)],
    report: &mut RunReport,
) {
    let mut extras: BTreeMap<String, Value> = BTreeMap::new();
    match scheme {
        SchemeLadderSpec::Euler { noise, .. } | SchemeLadderSpec::Control { noise, .. } => {
            if let Ok(amb) = noise.build("scheme.noise") {
                let v = check_centering(&amb, 1e-10);
                extras.insert("noise_centered".into(), Value::Bool(v.centered));
                extras.insert("noise_mean_up".into(), float(v.mean_up));
                extras.insert("noise_mean_down".into(), float(v.mean_down));
                extras.insert("noise_second_moment".into(), float(v.second_moment));
                extras.insert("noise_third_abs_moment".into(), float(v.third_abs_moment));
            }
        }
        SchemeLadderSpec::Tilt { .. } => {
            let alpha_h: Vec<Value> = levels
                .iter()
                .filter_map(|(s, _)| s.tilt_small_product())
                .map(float)
                .collect();
            extras.insert("alpha_times_h".into(), Value::Array(alpha_h));
        }
        SchemeLadderSpec::Wasserstein { hs, shift_steps, .. } => {
            // resolution of the shift family in generator units: the grid of
            // admissible lambda / h values has this mesh, so any target shift
            // rate is achieved to within half of it
            let meshes: Vec<Value> = shift_steps
                .iter()
                .zip(hs)
                .map(|(&s, &h)| float(s / h))
                .collect();
            extras.insert("shift_rate_mesh".into(), Value::Array(meshes));
        }
        SchemeLadderSpec::Resolvent { lambdas, .. } | SchemeLadderSpec::Yosida { lambdas, .. } => {
            extras.insert(
                "lambdas".into(),
                Value::Array(lambdas.iter().map(|&l| float(l)).collect()),
            );
        }
        SchemeLadderSpec::FdHjb { .. } => {}
    }
    // translation metadata of the first level stands for the ladder
    if let Some((step, _)) = levels.first() {
        extras.insert(
            "translation_invariant".into(),
            Value::Bool(step.meta().translation_invariant),
        );
        extras.insert("omega".into(), float(step.meta().omega));
        extras.insert("lip_growth".into(), float(step.meta().lip_growth));
        if let StepKind::ExpTilt { .. } = step.kind() {
            // covered by alpha_times_h above
        }
    }
    report.extras.append(&mut extras);
}
