//! Experiment configuration: a flat TOML schema with one section per
//! concern. The exact grammar is documented in `docs/config.md` and carries
//! a `version` field; every run echoes the fully resolved config into its
//! report so each number is reproducible from the report alone.

use serde::{Deserialize, Serialize};

use chernoff::functions::{
    clipped_linear, constant, gaussian_bump, modulated_gaussian, quadratic, SmoothFn,
};
use chernoff::{
    AmbiguitySet, ControlAction, ControlParams, DiscreteMeasure, DriftFn, FdHjbParams, Grid1d,
    Penalty, ResolventSupParams, SchemeStep, SublinearEulerParams, Transport,
    WassersteinShiftParams,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Error with the failing config field path attached.
#[derive(Debug)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(path: impl Into<String>, message: impl std::fmt::Display) -> ConfigError {
    ConfigError {
        path: path.into(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Config schema version; this binary understands version 1.
    pub version: u32,
    /// One of: fd-hjb, euler, tilt, control, wasserstein, resolvent,
    /// yosida, compare, properties.
    pub experiment: String,
    pub seed: Option<u64>,
    pub grid: GridSpec,
    #[serde(default)]
    pub time: Option<TimeSpec>,
    pub window: WindowSpec,
    #[serde(default)]
    pub initial: Option<InitialSpec>,
    #[serde(default)]
    pub scheme: Option<SchemeLadderSpec>,
    #[serde(default)]
    pub scheme_a: Option<SchemeLadderSpec>,
    #[serde(default)]
    pub scheme_b: Option<SchemeLadderSpec>,
    #[serde(default)]
    pub oracle: Option<OracleSpec>,
    /// Optional generator-residual study over the scheme ladder.
    #[serde(default)]
    pub generator: Option<GeneratorSpec>,
    #[serde(default)]
    pub properties: Option<PropertiesSpec>,
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub t: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub lo: f64,
    pub hi: f64,
}

/// Named closed-form initial data; a fixed library keeps the provenance of
/// every test function auditable.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialSpec {
    GaussianBump { center: f64, width: f64, height: f64 },
    ModulatedGaussian { freq: f64, width: f64 },
    ClippedLinear { slope: f64, clip: f64 },
    Quadratic,
    Constant { value: f64 },
}

impl InitialSpec {
    pub fn build(&self) -> SmoothFn {
        match *self {
            Self::GaussianBump { center, width, height } => gaussian_bump(center, width, height),
            Self::ModulatedGaussian { freq, width } => modulated_gaussian(freq, width),
            Self::ClippedLinear { slope, clip } => clipped_linear(slope, clip),
            Self::Quadratic => quadratic(),
            Self::Constant { value } => constant(value),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PenaltySpec {
    Indicator { lo: f64, hi: f64 },
    PowerLaw { c: f64, q: f64 },
    Quadratic { c: f64 },
}

impl PenaltySpec {
    pub fn build(&self, path: &str) -> Result<Penalty, ConfigError> {
        match *self {
            Self::Indicator { lo, hi } => Penalty::indicator(lo, hi),
            Self::PowerLaw { c, q } => Penalty::power_law(c, q),
            Self::Quadratic { c } => Penalty::quadratic(c),
        }
        .map_err(|e| err(path, e))
    }
}

/// Drift library: bounded Lipschitz maps with recorded constants.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DriftSpec {
    Zero,
    /// `scale * tanh(x)`.
    Tanh { scale: f64 },
    /// `scale * cos(x)`.
    Cos { scale: f64 },
}

impl DriftSpec {
    pub fn build(&self) -> DriftFn {
        match *self {
            Self::Zero => DriftFn::zero(),
            Self::Tanh { scale } => DriftFn::new(move |x: f64| scale * x.tanh(), scale.abs(), scale.abs()),
            Self::Cos { scale } => DriftFn::new(move |x: f64| scale * x.cos(), scale.abs(), scale.abs()),
        }
    }
}

/// Ambiguity set as explicit `[point, weight]` atom lists, one list per
/// measure.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub measures: Vec<Vec<[f64; 2]>>,
}

impl NoiseSpec {
    pub fn build(&self, path: &str) -> Result<AmbiguitySet, ConfigError> {
        let mut measures = Vec::with_capacity(self.measures.len());
        for (i, atoms) in self.measures.iter().enumerate() {
            let atoms: Vec<(f64, f64)> = atoms.iter().map(|a| (a[0], a[1])).collect();
            measures.push(
                DiscreteMeasure::new(atoms).map_err(|e| err(format!("{path}.measures[{i}]"), e))?,
            );
        }
        AmbiguitySet::new(measures).map_err(|e| err(format!("{path}.measures"), e))
    }
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ActionSpec {
    pub a: f64,
    pub b: f64,
    pub cost: f64,
}

/// A scheme ladder: kind-specific parameters plus the per-level resolution
/// sequences.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SchemeLadderSpec {
    FdHjb {
        deltas: Vec<f64>,
        hs: Vec<f64>,
        sigma_max: f64,
        /// Sigma-grid resolution per level (the sup mesh refines with the
        /// ladder).
        sigma_grid_sizes: Vec<usize>,
        penalty: PenaltySpec,
    },
    Euler {
        deltas: Vec<f64>,
        hs: Vec<f64>,
        drift: DriftSpec,
        noise_scale: f64,
        noise: NoiseSpec,
    },
    /// Tilted Euler ladder indexed by `n`: `h = 1/n`,
    /// `noise delta = n^delta_exponent`, `alpha = 1/delta^2`, spacing
    /// `delta * sqrt(h)` so increments land on nodes.
    Tilt {
        ns: Vec<u32>,
        delta_exponent: f64,
        noise: NoiseSpec,
    },
    /// Lattice-compatible control ladder: level `l` uses spacing
    /// `sqrt(h)/m`, diffusive actions `sigma = j/m` for
    /// `sigma_lo <= j/m <= sigma_hi`, plus any extra actions.
    Control {
        ms: Vec<usize>,
        hs: Vec<f64>,
        sigma_lo: f64,
        sigma_hi: f64,
        #[serde(default)]
        extra_actions: Vec<ActionSpec>,
        noise: NoiseSpec,
    },
    Wasserstein {
        deltas: Vec<f64>,
        hs: Vec<f64>,
        shift_steps: Vec<f64>,
        shift_span: f64,
        penalty: PenaltySpec,
    },
    Resolvent {
        deltas: Vec<f64>,
        lambdas: Vec<f64>,
        thetas: Vec<f64>,
    },
    Yosida {
        deltas: Vec<f64>,
        lambdas: Vec<f64>,
        thetas: Vec<f64>,
    },
}

impl SchemeLadderSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::FdHjb { .. } => "fd-hjb",
            Self::Euler { .. } => "euler",
            Self::Tilt { .. } => "tilt",
            Self::Control { .. } => "control",
            Self::Wasserstein { .. } => "wasserstein",
            Self::Resolvent { .. } => "resolvent",
            Self::Yosida { .. } => "yosida",
        }
    }

    pub fn level_count(&self) -> usize {
        match self {
            Self::FdHjb { deltas, .. }
            | Self::Euler { deltas, .. }
            | Self::Wasserstein { deltas, .. }
            | Self::Resolvent { deltas, .. }
            | Self::Yosida { deltas, .. } => deltas.len(),
            Self::Tilt { ns, .. } => ns.len(),
            Self::Control { ms, .. } => ms.len(),
        }
    }

    /// Builds every ladder level, validating all scheme invariants (CFL,
    /// diagonal dominance, centering, penalty zeros) in the process.
    pub fn build_levels(
        &self,
        grid: &GridSpec,
        path: &str,
    ) -> Result<Vec<(SchemeStep, Grid1d)>, ConfigError> {
        let span_grid = |spacing: f64, p: &str| -> Result<Grid1d, ConfigError> {
            Grid1d::spanning(grid.lo, grid.hi, spacing).map_err(|e| err(p, e))
        };
        let mut levels = Vec::new();
        match self {
            Self::FdHjb {
                deltas,
                hs,
                sigma_max,
                sigma_grid_sizes,
                penalty,
            } => {
                check_same_len(deltas.len(), hs.len(), path, "hs")?;
                check_same_len(deltas.len(), sigma_grid_sizes.len(), path, "sigma_grid_sizes")?;
                let penalty = penalty.build(&format!("{path}.penalty"))?;
                for (i, ((&delta, &h), &sigma_n)) in
                    deltas.iter().zip(hs).zip(sigma_grid_sizes).enumerate()
                {
                    let params = FdHjbParams::new(delta, *sigma_max, penalty, sigma_n)
                        .map_err(|e| err(format!("{path}.sigma_max"), e))?;
                    let step = SchemeStep::fd_hjb(params, h).map_err(|e| match e {
                        chernoff::Error::CflViolation { .. } => err(format!("{path}.sigma_max"), e),
                        other => err(format!("{path}.hs[{i}]"), other),
                    })?;
                    levels.push((step, span_grid(delta, &format!("{path}.deltas[{i}]"))?));
                }
            }
            Self::Euler {
                deltas,
                hs,
                drift,
                noise_scale,
                noise,
            } => {
                check_same_len(deltas.len(), hs.len(), path, "hs")?;
                let noise = noise.build(&format!("{path}.noise"))?;
                for (i, (&delta, &h)) in deltas.iter().zip(hs).enumerate() {
                    let params =
                        SublinearEulerParams::new(drift.build(), *noise_scale, noise.clone())
                            .map_err(|e| err(format!("{path}.noise"), e))?;
                    let step = SchemeStep::sublinear_euler(params, h)
                        .map_err(|e| err(format!("{path}.hs[{i}]"), e))?;
                    levels.push((step, span_grid(delta, &format!("{path}.deltas[{i}]"))?));
                }
            }
            Self::Tilt {
                ns,
                delta_exponent,
                noise,
            } => {
                let noise = noise.build(&format!("{path}.noise"))?;
                for (i, &n) in ns.iter().enumerate() {
                    if n == 0 {
                        return Err(err(format!("{path}.ns[{i}]"), "n must be positive"));
                    }
                    let h = 1.0 / n as f64;
                    let delta = (n as f64).powf(*delta_exponent);
                    let alpha = 1.0 / (delta * delta);
                    let spacing = delta * h.sqrt();
                    let inner = SchemeStep::sublinear_euler(
                        SublinearEulerParams::new(DriftFn::zero(), delta, noise.clone())
                            .map_err(|e| err(format!("{path}.noise"), e))?,
                        h,
                    )
                    .map_err(|e| err(format!("{path}.ns[{i}]"), e))?;
                    let step = SchemeStep::exp_tilt(alpha, inner)
                        .map_err(|e| err(format!("{path}.ns[{i}]"), e))?;
                    levels.push((step, span_grid(spacing, &format!("{path}.ns[{i}]"))?));
                }
            }
            Self::Control {
                ms,
                hs,
                sigma_lo,
                sigma_hi,
                extra_actions,
                noise,
            } => {
                check_same_len(ms.len(), hs.len(), path, "hs")?;
                let noise = noise.build(&format!("{path}.noise"))?;
                for (i, (&m, &h)) in ms.iter().zip(hs).enumerate() {
                    if m == 0 {
                        return Err(err(format!("{path}.ms[{i}]"), "m must be positive"));
                    }
                    let spacing = h.sqrt() / m as f64;
                    let j_lo = (sigma_lo * m as f64).ceil() as usize;
                    let j_hi = (sigma_hi * m as f64).floor() as usize;
                    if j_lo > j_hi {
                        return Err(err(
                            format!("{path}.sigma_lo"),
                            format!("no lattice sigma in [{sigma_lo}, {sigma_hi}] at m = {m}"),
                        ));
                    }
                    let mut actions: Vec<ControlAction> = (j_lo..=j_hi)
                        .map(|j| {
                            let sigma = j as f64 / m as f64;
                            ControlAction { a: sigma * sigma, b: 0.0, cost: 0.0 }
                        })
                        .collect();
                    actions.extend(extra_actions.iter().map(|a| ControlAction {
                        a: a.a,
                        b: a.b,
                        cost: a.cost,
                    }));
                    let params = ControlParams::new(actions, noise.clone())
                        .map_err(|e| err(format!("{path}.noise"), e))?;
                    let step = SchemeStep::control(params, h)
                        .map_err(|e| err(format!("{path}.hs[{i}]"), e))?;
                    levels.push((step, span_grid(spacing, &format!("{path}.ms[{i}]"))?));
                }
            }
            Self::Wasserstein {
                deltas,
                hs,
                shift_steps,
                shift_span,
                penalty,
            } => {
                check_same_len(deltas.len(), hs.len(), path, "hs")?;
                check_same_len(deltas.len(), shift_steps.len(), path, "shift_steps")?;
                let penalty = penalty.build(&format!("{path}.penalty"))?;
                for (i, ((&delta, &h), &shift_step)) in
                    deltas.iter().zip(hs).zip(shift_steps).enumerate()
                {
                    let ratio = shift_step / delta;
                    if (ratio - ratio.round()).abs() > 1e-9 {
                        return Err(err(
                            format!("{path}.shift_steps[{i}]"),
                            format!("shift step {shift_step} is not a multiple of delta {delta}"),
                        ));
                    }
                    let params = WassersteinShiftParams::new(
                        Transport::Identity,
                        DiscreteMeasure::dirac(0.0),
                        penalty,
                        WassersteinShiftParams::uniform_shifts(shift_step, *shift_span),
                    )
                    .map_err(|e| err(format!("{path}.penalty"), e))?;
                    let step = SchemeStep::wasserstein_shift(params, h)
                        .map_err(|e| err(format!("{path}.hs[{i}]"), e))?;
                    levels.push((step, span_grid(delta, &format!("{path}.deltas[{i}]"))?));
                }
            }
            Self::Resolvent { deltas, lambdas, thetas } | Self::Yosida { deltas, lambdas, thetas } => {
                check_same_len(deltas.len(), lambdas.len(), path, "lambdas")?;
                let yosida = matches!(self, Self::Yosida { .. });
                for (i, (&delta, &lambda)) in deltas.iter().zip(lambdas).enumerate() {
                    let params = ResolventSupParams::new(thetas.clone(), lambda, delta)
                        .map_err(|e| err(format!("{path}.thetas"), e))?;
                    let step = if yosida {
                        SchemeStep::yosida(params)
                    } else {
                        SchemeStep::resolvent_sup(params)
                    }
                    .map_err(|e| err(format!("{path}.lambdas[{i}]"), e))?;
                    levels.push((step, span_grid(delta, &format!("{path}.deltas[{i}]"))?));
                }
            }
        }
        Ok(levels)
    }
}

fn check_same_len(a: usize, b: usize, path: &str, field: &str) -> Result<(), ConfigError> {
    if a != b {
        return Err(err(
            format!("{path}.{field}"),
            format!("ladder length mismatch: {b} entries vs {a} levels"),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OracleSpec {
    /// Gaussian convolution with standard deviation `sigma sqrt(t)`.
    GaussianHeat { sigma: f64 },
    /// Variance-interval heat flow for convex data.
    GHeatConvex { sigma_lo: f64, sigma_hi: f64 },
    /// Flow of the scheme's drift ODE composed with the initial data
    /// (drift-only Euler runs).
    OdeFlow { rtol: f64 },
    /// Hopf-Lax envelope with the given rate function.
    HopfLax { penalty: PenaltySpec },
    /// The finest ladder level's own result.
    SelfFinest,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    /// Smooth probe the residual is measured on.
    pub probe: InitialSpec,
    pub max_final_residual: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PropertiesSpec {
    pub trials: usize,
    pub schemes: Vec<SchemeLadderSpec>,
}

/// Pinned thresholds; a run passes when every configured verdict holds.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Bound on the finest-level error (or distance, for compare runs).
    #[serde(default)]
    pub final_error: Option<f64>,
    /// Require the error ladder to close on a decreasing pair.
    #[serde(default)]
    pub require_decreasing: bool,
    /// Property suites: violations allowed (always 0 in shipped configs).
    #[serde(default)]
    pub max_violations: Option<usize>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| err("<config>", e.message()))?;
        Ok(cfg)
    }

    pub const KINDS: [&'static str; 9] = [
        "fd-hjb",
        "euler",
        "tilt",
        "control",
        "wasserstein",
        "resolvent",
        "yosida",
        "compare",
        "properties",
    ];

    /// Full validation: schema version, kind-specific required blocks, and
    /// construction of every scheme level (which runs all ladder
    /// invariants).
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != SCHEMA_VERSION {
            return Err(err(
                "version",
                format!("unsupported schema version {}, expected {SCHEMA_VERSION}", self.version),
            ));
        }
        if !Self::KINDS.contains(&self.experiment.as_str()) {
            return Err(err(
                "experiment",
                format!("unknown experiment kind {:?}", self.experiment),
            ));
        }
        if !(self.grid.lo < self.grid.hi) {
            return Err(err("grid.lo", "grid needs lo < hi"));
        }
        if !(self.window.lo < self.window.hi) {
            return Err(err("window.lo", "window needs lo < hi"));
        }
        if self.window.lo < self.grid.lo || self.window.hi > self.grid.hi {
            return Err(err("window.lo", "window must lie inside the grid span"));
        }
        match self.experiment.as_str() {
            "compare" => {
                let a = self
                    .scheme_a
                    .as_ref()
                    .ok_or_else(|| err("scheme_a", "compare needs scheme_a"))?;
                let b = self
                    .scheme_b
                    .as_ref()
                    .ok_or_else(|| err("scheme_b", "compare needs scheme_b"))?;
                if a.level_count() != b.level_count() {
                    return Err(err("scheme_b", "ladders must have matching level counts"));
                }
                a.build_levels(&self.grid, "scheme_a")?;
                b.build_levels(&self.grid, "scheme_b")?;
                self.require_time()?;
                self.require_initial()?;
            }
            "properties" => {
                let p = self
                    .properties
                    .as_ref()
                    .ok_or_else(|| err("properties", "properties block required"))?;
                if self.seed.is_none() {
                    return Err(err("seed", "property suites require a seed"));
                }
                if p.trials == 0 {
                    return Err(err("properties.trials", "need at least one trial"));
                }
                if p.schemes.is_empty() {
                    return Err(err("properties.schemes", "need at least one scheme"));
                }
                for (i, s) in p.schemes.iter().enumerate() {
                    s.build_levels(&self.grid, &format!("properties.schemes[{i}]"))?;
                }
            }
            kind => {
                let scheme = self
                    .scheme
                    .as_ref()
                    .ok_or_else(|| err("scheme", "scheme block required"))?;
                if scheme.kind_name() != kind {
                    return Err(err(
                        "scheme.kind",
                        format!("scheme kind {:?} does not match experiment {kind:?}", scheme.kind_name()),
                    ));
                }
                scheme.build_levels(&self.grid, "scheme")?;
                if self.generator.is_some() && self.oracle.is_some() {
                    return Err(err(
                        "generator",
                        "configure either an oracle study or a generator study, not both",
                    ));
                }
                if self.generator.is_none() {
                    self.require_time()?;
                    self.require_initial()?;
                }
            }
        }
        Ok(())
    }

    fn require_time(&self) -> Result<(), ConfigError> {
        let t = self.time.as_ref().ok_or_else(|| err("time", "time block required"))?;
        if !(t.t >= 0.0) {
            return Err(err("time.t", "need t >= 0"));
        }
        Ok(())
    }

    fn require_initial(&self) -> Result<(), ConfigError> {
        self.initial
            .as_ref()
            .map(|_| ())
            .ok_or_else(|| err("initial", "initial block required"))
    }
}
