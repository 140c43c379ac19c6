//! One-step operators: interchangeable scheme steps sharing the contract
//! `I 0 = 0`, monotonicity and convexity, each with a closed-form generator
//! descriptor.
//!
//! Every step is pure: the input grid function is never mutated and the
//! per-node suprema iterate in a fixed order, so repeated runs are
//! bit-identical.

mod generator;

pub use generator::{hamiltonian_eval, generator_residual, GeneratorDescriptor};

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Grid1d, GridFunction};
use crate::sublinear::{check_centering, AmbiguitySet, DiscreteMeasure, Penalty};

/// Bounded Lipschitz drift with its recorded constants.
#[derive(Clone)]
pub struct DriftFn {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Recorded Lipschitz constant.
    pub lip: f64,
    /// Recorded sup-norm bound.
    pub bound: f64,
}

impl fmt::Debug for DriftFn {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(fm, "DriftFn(lip = {}, bound = {})", self.lip, self.bound)
    }
}

impl DriftFn {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static, lip: f64, bound: f64) -> Self {
        Self {
            f: Arc::new(f),
            lip,
            bound,
        }
    }

    pub fn zero() -> Self {
        Self::new(|_| 0.0, 0.0, 0.0)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }
}

/// Spatial transport of the Wasserstein step.
#[derive(Clone)]
pub enum Transport {
    Identity,
    /// Arbitrary map with a recorded Lipschitz-growth rate (the `L` of the
    /// shift defect bound).
    Map {
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        lip_growth: f64,
    },
}

impl fmt::Debug for Transport {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Identity => write!(fm, "Identity"),
            Self::Map { lip_growth, .. } => write!(fm, "Map(lip_growth = {lip_growth})"),
        }
    }
}

impl Transport {
    #[inline]
    fn offset(&self, x: f64) -> f64 {
        match self {
            Self::Identity => 0.0,
            Self::Map { f, .. } => f(x) - x,
        }
    }
}

/// Finite-difference HJB step parameters.
#[derive(Debug, Clone)]
pub struct FdHjbParams {
    pub delta: f64,
    pub sigma_max: f64,
    pub penalty: Penalty,
    pub sigma_grid_size: usize,
}

impl FdHjbParams {
    pub fn new(delta: f64, sigma_max: f64, penalty: Penalty, sigma_grid_size: usize) -> Result<Self> {
        if !(delta > 0.0) || !(sigma_max > 0.0) || sigma_grid_size < 2 {
            return Err(Error::InvalidScheme(format!(
                "fd-hjb needs delta > 0, sigma_max > 0, sigma_grid_size >= 2 \
                 (got {delta}, {sigma_max}, {sigma_grid_size})"
            )));
        }
        let zero = penalty.zero_point();
        if !(0.0 <= zero && zero <= sigma_max) || penalty.eval(zero) != 0.0 {
            return Err(Error::InvalidScheme(format!(
                "penalty must vanish somewhere in [0, sigma_max]; its zero point {zero} does not qualify"
            )));
        }
        Ok(Self {
            delta,
            sigma_max,
            penalty,
            sigma_grid_size,
        })
    }

    /// Uniform sigma grid over `[0, sigma_max]`, always containing the
    /// penalty's zero point.
    pub fn sigma_grid(&self) -> Vec<f64> {
        let n = self.sigma_grid_size - 1;
        let mut sigmas: Vec<f64> = (0..=n)
            .map(|i| self.sigma_max * i as f64 / n as f64)
            .collect();
        let zero = self.penalty.zero_point();
        if !sigmas.contains(&zero) {
            let pos = sigmas.partition_point(|&s| s < zero);
            sigmas.insert(pos, zero);
        }
        sigmas
    }
}

/// Randomized explicit Euler step parameters. The constructor enforces the
/// centering the convergence theory needs (`E[a xi] = 0` for both signs);
/// the fields stay public because the one-step formula itself is defined
/// for any ambiguity set.
#[derive(Debug, Clone)]
pub struct SublinearEulerParams {
    pub drift: DriftFn,
    pub noise_scale: f64,
    pub noise: AmbiguitySet,
}

impl SublinearEulerParams {
    pub fn new(drift: DriftFn, noise_scale: f64, noise: AmbiguitySet) -> Result<Self> {
        if !(noise_scale >= 0.0) {
            return Err(Error::InvalidScheme(format!(
                "noise scale must be nonnegative, got {noise_scale}"
            )));
        }
        let verdict = check_centering(&noise, 1e-10);
        if !verdict.centered {
            return Err(Error::InvalidScheme(format!(
                "euler noise must be centered: E[x] = {}, E[-x] = {}",
                verdict.mean_up, verdict.mean_down
            )));
        }
        Ok(Self {
            drift,
            noise_scale,
            noise,
        })
    }
}

/// One scheme action `(diffusion a, drift b, running cost)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlAction {
    pub a: f64,
    pub b: f64,
    pub cost: f64,
}

/// Discrete static control problem parameters.
#[derive(Debug, Clone)]
pub struct ControlParams {
    pub actions: Vec<ControlAction>,
    pub noise: AmbiguitySet,
}

impl ControlParams {
    pub fn new(actions: Vec<ControlAction>, noise: AmbiguitySet) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::EmptyActionList);
        }
        for act in &actions {
            if act.a < 0.0 || act.cost < 0.0 {
                return Err(Error::InvalidScheme(format!(
                    "actions need a >= 0 and cost >= 0, got {act:?}"
                )));
            }
        }
        if !actions.iter().any(|a| a.cost == 0.0) {
            return Err(Error::InvalidScheme(
                "some action must carry zero cost".into(),
            ));
        }
        let verdict = check_centering(&noise, 1e-10);
        if !verdict.centered || (verdict.second_moment - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidScheme(format!(
                "control noise must be centered with unit second moment, got E[x^2] = {}",
                verdict.second_moment
            )));
        }
        Ok(Self { actions, noise })
    }
}

/// Wasserstein-penalized shift step parameters; the supremum runs over the
/// shift family `nu = mu * delta_lambda`, the one the limit-generator bound
/// is built from.
#[derive(Debug, Clone)]
pub struct WassersteinShiftParams {
    pub transport: Transport,
    pub base_measure: DiscreteMeasure,
    pub penalty: Penalty,
    pub shifts: Vec<f64>,
}

impl WassersteinShiftParams {
    pub fn new(
        transport: Transport,
        base_measure: DiscreteMeasure,
        penalty: Penalty,
        shifts: Vec<f64>,
    ) -> Result<Self> {
        if !shifts.contains(&0.0) {
            return Err(Error::InvalidScheme(
                "shift grid must contain 0 so the unperturbed step is admissible".into(),
            ));
        }
        if penalty.eval(0.0) != 0.0 {
            return Err(Error::InvalidScheme(
                "wasserstein penalty must vanish at 0".into(),
            ));
        }
        if !penalty.superlinear_in_b() {
            return Err(Error::InvalidScheme(
                "wasserstein penalty must grow superlinearly".into(),
            ));
        }
        Ok(Self {
            transport,
            base_measure,
            penalty,
            shifts,
        })
    }

    /// Uniform shift grid `{k * step : |k * step| <= span}`.
    pub fn uniform_shifts(step: f64, span: f64) -> Vec<f64> {
        let k_max = (span / step).floor() as i64;
        (-k_max..=k_max).map(|k| k as f64 * step).collect()
    }

    fn min_positive_shift(&self) -> Option<f64> {
        self.shifts
            .iter()
            .map(|s| s.abs())
            .filter(|s| *s > 0.0)
            .fold(None, |acc, s| Some(acc.map_or(s, |a: f64| a.min(s))))
    }
}

/// Parameters shared by the implicit-Euler and Yosida steps: the family
/// `A^theta = theta * (second difference)` with resolvent scale `lambda`.
#[derive(Debug, Clone)]
pub struct ResolventSupParams {
    pub thetas: Vec<f64>,
    pub lambda: f64,
    pub delta: f64,
}

impl ResolventSupParams {
    pub fn new(thetas: Vec<f64>, lambda: f64, delta: f64) -> Result<Self> {
        if thetas.is_empty() || thetas.iter().any(|&t| t < 0.0) {
            return Err(Error::InvalidScheme(
                "theta family must be non-empty and nonnegative".into(),
            ));
        }
        if !(lambda > 0.0) || !(delta > 0.0) {
            return Err(Error::InvalidScheme(format!(
                "resolvent needs lambda > 0 and delta > 0, got {lambda}, {delta}"
            )));
        }
        // diagonal lambda + 2 theta / delta^2 versus off-diagonal 2 theta /
        // delta^2: strict dominance holds exactly when lambda > 0
        Ok(Self {
            thetas,
            lambda,
            delta,
        })
    }
}

/// The step kind with its parameter record.
#[derive(Debug, Clone)]
pub enum StepKind {
    FdHjb(FdHjbParams),
    SublinearEuler(SublinearEulerParams),
    ExpTilt { alpha: f64, inner: Box<SchemeStep> },
    Control(ControlParams),
    WassersteinShift(WassersteinShiftParams),
    ResolventSup(ResolventSupParams),
    Yosida(ResolventSupParams),
}

impl StepKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::FdHjb(_) => "fd-hjb",
            Self::SublinearEuler(_) => "sublinear-euler",
            Self::ExpTilt { .. } => "exp-tilt",
            Self::Control(_) => "control",
            Self::WassersteinShift(_) => "wasserstein-shift",
            Self::ResolventSup(_) => "resolvent-sup",
            Self::Yosida(_) => "yosida",
        }
    }
}

/// Norm-growth and translation metadata recorded with every step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMeta {
    /// Sup-norm growth rate; zero for every implemented kind.
    pub omega: f64,
    /// Lipschitz-set growth rate.
    pub lip_growth: f64,
    pub translation_invariant: bool,
}

/// A one-step operator with step size `h` and metadata.
#[derive(Debug, Clone)]
pub struct SchemeStep {
    kind: StepKind,
    h: f64,
    meta: StepMeta,
}

impl SchemeStep {
    pub fn fd_hjb(params: FdHjbParams, h: f64) -> Result<Self> {
        require_positive_h(h)?;
        let ratio = params.sigma_max * params.sigma_max * h / (params.delta * params.delta);
        if ratio > 1.0 + 1e-12 {
            return Err(Error::CflViolation {
                sigma_max: params.sigma_max,
                h,
                delta: params.delta,
                ratio,
            });
        }
        let meta = StepMeta {
            omega: 0.0,
            lip_growth: 0.0,
            translation_invariant: true,
        };
        Self::finish(StepKind::FdHjb(params), h, meta)
    }

    pub fn sublinear_euler(params: SublinearEulerParams, h: f64) -> Result<Self> {
        require_positive_h(h)?;
        let meta = StepMeta {
            omega: 0.0,
            lip_growth: params.drift.lip,
            translation_invariant: params.drift.lip == 0.0,
        };
        Self::finish(StepKind::SublinearEuler(params), h, meta)
    }

    /// Tilted step `J f = log(inner(exp(alpha f))) / alpha`; shares the
    /// inner step's size.
    pub fn exp_tilt(alpha: f64, inner: SchemeStep) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidScheme(format!("tilt needs alpha > 0, got {alpha}")));
        }
        let h = inner.h;
        let meta = inner.meta;
        Self::finish(
            StepKind::ExpTilt {
                alpha,
                inner: Box::new(inner),
            },
            h,
            meta,
        )
    }

    pub fn control(params: ControlParams, h: f64) -> Result<Self> {
        require_positive_h(h)?;
        let meta = StepMeta {
            omega: 0.0,
            lip_growth: 0.0,
            translation_invariant: true,
        };
        Self::finish(StepKind::Control(params), h, meta)
    }

    pub fn wasserstein_shift(params: WassersteinShiftParams, h: f64) -> Result<Self> {
        require_positive_h(h)?;
        let (lip_growth, invariant) = match &params.transport {
            Transport::Identity => (0.0, true),
            Transport::Map { lip_growth, .. } => (*lip_growth, false),
        };
        let meta = StepMeta {
            omega: 0.0,
            lip_growth,
            translation_invariant: invariant,
        };
        Self::finish(StepKind::WassersteinShift(params), h, meta)
    }

    /// Implicit-Euler step `sup_theta lambda (lambda - A^theta)^{-1}` with
    /// the convention `h = 1 / lambda`.
    pub fn resolvent_sup(params: ResolventSupParams) -> Result<Self> {
        let h = 1.0 / params.lambda;
        let meta = StepMeta {
            omega: 0.0,
            lip_growth: 0.0,
            translation_invariant: true,
        };
        Self::finish(StepKind::ResolventSup(params), h, meta)
    }

    pub fn yosida(params: ResolventSupParams) -> Result<Self> {
        let h = 1.0 / params.lambda;
        let meta = StepMeta {
            omega: 0.0,
            lip_growth: 0.0,
            translation_invariant: true,
        };
        Self::finish(StepKind::Yosida(params), h, meta)
    }

    fn finish(kind: StepKind, h: f64, meta: StepMeta) -> Result<Self> {
        let step = Self { kind, h, meta };
        step.check_normalization()?;
        Ok(step)
    }

    /// Bypasses admissibility validation; for constructing broken steps in
    /// tests of the property suite.
    #[doc(hidden)]
    pub fn unchecked(kind: StepKind, h: f64, meta: StepMeta) -> Self {
        Self { kind, h, meta }
    }

    /// `I 0 = 0`, checked on a probe grid at construction.
    fn check_normalization(&self) -> Result<()> {
        let grid = self.probe_grid()?;
        let out = self.apply(&GridFunction::zero(grid))?;
        let worst = out.values().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if worst > 1e-12 {
            return Err(Error::InvalidScheme(format!(
                "step does not annihilate the zero function (|I 0| = {worst})"
            )));
        }
        Ok(())
    }

    /// A small grid compatible with the step's spacing requirements.
    pub fn probe_grid(&self) -> Result<Grid1d> {
        let spacing = match &self.kind {
            StepKind::FdHjb(p) => p.delta,
            StepKind::ResolventSup(p) | StepKind::Yosida(p) => p.delta,
            StepKind::WassersteinShift(p) => p.min_positive_shift().unwrap_or(0.25),
            StepKind::ExpTilt { inner, .. } => return inner.probe_grid(),
            _ => 0.25,
        };
        Grid1d::new(-4.0 * spacing, spacing, 9)
    }

    pub fn kind(&self) -> &StepKind {
        &self.kind
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn meta(&self) -> StepMeta {
        self.meta
    }

    /// `alpha * h` for tilted steps; the limit theory needs it to vanish
    /// along a ladder, so reports record it.
    pub fn tilt_small_product(&self) -> Option<f64> {
        match &self.kind {
            StepKind::ExpTilt { alpha, .. } => Some(alpha * self.h),
            _ => None,
        }
    }

    /// Applies the one-step operator.
    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        match &self.kind {
            StepKind::FdHjb(p) => fd_hjb_step(p, self.h, f),
            StepKind::SublinearEuler(p) => sublinear_euler_step(p, self.h, f),
            StepKind::ExpTilt { alpha, inner } => exp_tilt_step(*alpha, inner, f),
            StepKind::Control(p) => control_step(p, self.h, f),
            StepKind::WassersteinShift(p) => wasserstein_shift_step(p, self.h, f),
            StepKind::ResolventSup(p) => resolvent_sup_step(p, f),
            StepKind::Yosida(p) => yosida_step(p, f),
        }
    }

    /// Nodes near the boundary influenced by constant extension after one
    /// application; window margins are this radius times the step count.
    pub fn boundary_margin_nodes(&self, grid: &Grid1d) -> usize {
        let d = grid.spacing();
        match &self.kind {
            StepKind::FdHjb(_) => 1,
            StepKind::SublinearEuler(p) => {
                let reach = self.h * p.drift.bound
                    + p.noise_scale * self.h.sqrt() * p.noise.max_abs_atom();
                (reach / d).ceil() as usize + 1
            }
            StepKind::ExpTilt { inner, .. } => inner.boundary_margin_nodes(grid),
            StepKind::Control(p) => {
                let atom = p.noise.max_abs_atom();
                let reach = p
                    .actions
                    .iter()
                    .map(|act| (act.a * self.h).sqrt() * atom + (act.b * self.h).abs())
                    .fold(0.0, f64::max);
                (reach / d).ceil() as usize + 1
            }
            StepKind::WassersteinShift(p) => {
                let shift = p.shifts.iter().fold(0.0_f64, |a, s| a.max(s.abs()));
                let reach = shift + p.base_measure.max_abs_atom();
                // transported positions are read at psi(x), not x
                let transport = match &p.transport {
                    Transport::Identity => 0.0,
                    Transport::Map { f, .. } => grid
                        .nodes()
                        .map(|x| (f(x) - x).abs())
                        .fold(0.0, f64::max),
                };
                ((reach + transport) / d).ceil() as usize + 1
            }
            StepKind::ResolventSup(p) => resolvent_decay_margin(p, 34.0),
            // the exponential series convolves about twenty resolvent
            // kernels; double the decay allowance
            StepKind::Yosida(p) => resolvent_decay_margin(p, 68.0),
        }
    }
}

fn require_positive_h(h: f64) -> Result<()> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidScheme(format!("step size must be positive, got {h}")));
    }
    Ok(())
}

/// Nodes after which the resolvent kernel has decayed below e^{-target}: the
/// homogeneous roots of `theta (u_{i+1} - 2 u_i + u_{i-1}) = lambda d^2 u_i`
/// decay by `ln rho` per node.
fn resolvent_decay_margin(p: &ResolventSupParams, target: f64) -> usize {
    let theta_max = p.thetas.iter().fold(0.0_f64, |a, &t| a.max(t));
    if theta_max == 0.0 {
        return 1;
    }
    let eps = p.lambda * p.delta * p.delta / theta_max;
    let rho = 1.0 + 0.5 * eps + (eps + 0.25 * eps * eps).sqrt();
    (target / rho.ln()).ceil() as usize + 2
}

/// `(I f)(x) = f(x) + h sup_sigma (sigma^2/2 * D2 f(x) - phi(sigma))` over
/// the sigma grid, with constant extension feeding the boundary stencils.
pub fn fd_hjb_step(p: &FdHjbParams, h: f64, f: &GridFunction) -> Result<GridFunction> {
    let g = f.grid();
    if (g.spacing() - p.delta).abs() > 1e-9 * p.delta {
        return Err(Error::GridSpacingMismatch {
            expected: p.delta,
            actual: g.spacing(),
        });
    }
    let ratio = p.sigma_max * p.sigma_max * h / (p.delta * p.delta);
    if ratio > 1.0 + 1e-12 {
        return Err(Error::CflViolation {
            sigma_max: p.sigma_max,
            h,
            delta: p.delta,
            ratio,
        });
    }
    let sigmas = p.sigma_grid();
    let weights: Vec<(f64, f64)> = sigmas
        .iter()
        .map(|&s| (0.5 * s * s, p.penalty.eval(s)))
        .filter(|(_, cost)| cost.is_finite())
        .collect();
    let inv_d2 = 1.0 / (p.delta * p.delta);
    let n = g.count();
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let c = f.values()[i];
        let d2 = (f.value_extended(i as i64 + 1) - 2.0 * c + f.value_extended(i as i64 - 1)) * inv_d2;
        let mut best = f64::NEG_INFINITY;
        for &(half_sq, cost) in &weights {
            let v = half_sq * d2 - cost;
            if v > best {
                best = v;
            }
        }
        values.push(c + h * best);
    }
    GridFunction::new(*g, values)
}

/// `(I f)(x) = E[ f(x + h psi(x) + noise_scale sqrt(h) xi) ]` with the
/// sublinear expectation over the ambiguity set and interpolated reads.
pub fn sublinear_euler_step(p: &SublinearEulerParams, h: f64, f: &GridFunction) -> Result<GridFunction> {
    require_positive_h(h)?;
    let g = f.grid();
    let sqrt_h = h.sqrt();
    let n = g.count();
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let drift_off = h * p.drift.eval(g.node(i));
        let mut best = f64::NEG_INFINITY;
        for m in p.noise.measures() {
            let mut acc = 0.0;
            for &(pt, wt) in m.atoms() {
                acc += wt * f.eval_offset(i, drift_off + p.noise_scale * sqrt_h * pt);
            }
            if acc > best {
                best = acc;
            }
        }
        values.push(best);
    }
    GridFunction::new(*g, values)
}

/// `J f = log(inner(exp(alpha f))) / alpha`, computed in shifted form: the
/// maximum of `f` is subtracted before exponentiating and added back after
/// the logarithm, which cash-additivity makes exact.
pub fn exp_tilt_step(alpha: f64, inner: &SchemeStep, f: &GridFunction) -> Result<GridFunction> {
    let m = f.values().iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    let shifted = GridFunction::new(
        *f.grid(),
        f.values().iter().map(|&v| (alpha * (v - m)).exp()).collect(),
    )?;
    let pushed = inner.apply(&shifted)?;
    let mut values = Vec::with_capacity(pushed.values().len());
    for &v in pushed.values() {
        if !(v > 0.0) {
            return Err(Error::NonPositiveTilt { value: v });
        }
        values.push(m + v.ln() / alpha);
    }
    GridFunction::new(*f.grid(), values)
}

/// `(I f)(x) = max over actions of E[f(x + sqrt(a h) xi + b h)] - cost * h`.
pub fn control_step(p: &ControlParams, h: f64, f: &GridFunction) -> Result<GridFunction> {
    require_positive_h(h)?;
    if p.actions.is_empty() {
        return Err(Error::EmptyActionList);
    }
    let g = f.grid();
    let n = g.count();
    let offsets: Vec<(f64, f64, f64)> = p
        .actions
        .iter()
        .map(|act| ((act.a * h).sqrt(), act.b * h, act.cost * h))
        .collect();
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let mut best = f64::NEG_INFINITY;
        for &(noise_off, drift_off, cost) in &offsets {
            let mut exp_best = f64::NEG_INFINITY;
            for m in p.noise.measures() {
                let mut acc = 0.0;
                for &(pt, wt) in m.atoms() {
                    acc += wt * f.eval_offset(i, noise_off * pt + drift_off);
                }
                if acc > exp_best {
                    exp_best = acc;
                }
            }
            let v = exp_best - cost;
            if v > best {
                best = v;
            }
        }
        values.push(best);
    }
    GridFunction::new(*g, values)
}

/// `(I f)(x) = max over shifts of (integral of f(psi(x) + y + lambda)
/// d mu(y)) - phi(|lambda| / h) h`, the supremum over the measures
/// `mu * delta_lambda` whose Wasserstein distance from `mu` is `|lambda|`.
pub fn wasserstein_shift_step(p: &WassersteinShiftParams, h: f64, f: &GridFunction) -> Result<GridFunction> {
    require_positive_h(h)?;
    let g = f.grid();
    let d = g.spacing();
    for &s in &p.shifts {
        let steps = s / d;
        if (steps - steps.round()).abs() > 1e-6 {
            return Err(Error::InvalidScheme(format!(
                "shift {s} is not a multiple of the grid spacing {d}"
            )));
        }
    }
    let admissible: Vec<(f64, f64)> = p
        .shifts
        .iter()
        .map(|&lam| (lam, p.penalty.eval(lam.abs() / h) * h))
        .filter(|(_, pen)| pen.is_finite())
        .collect();
    if admissible.is_empty() {
        return Err(Error::AllShiftsPenalized);
    }
    let n = g.count();
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let t_off = p.transport.offset(g.node(i));
        let mut best = f64::NEG_INFINITY;
        for &(lam, pen) in &admissible {
            let mut acc = 0.0;
            for &(pt, wt) in p.base_measure.atoms() {
                acc += wt * f.eval_offset(i, t_off + pt + lam);
            }
            let v = acc - pen;
            if v > best {
                best = v;
            }
        }
        values.push(best);
    }
    GridFunction::new(*g, values)
}

/// Solves `(lambda - theta D2) u = lambda f` on the interior with boundary
/// rows pinning `u = f`, by the Thomas algorithm.
fn resolvent_solve(lambda: f64, theta: f64, delta: f64, f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let r = theta / (delta * delta);
    // tridiagonal rows: [ -r, lambda + 2r, -r ], boundary rows [1, 0] / [0, 1]
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![0.0; n];
    // row 0: u_0 = f_0
    c_prime[0] = 0.0;
    d_prime[0] = f[0];
    let diag = lambda + 2.0 * r;
    for i in 1..n - 1 {
        let m = diag - (-r) * c_prime[i - 1];
        c_prime[i] = -r / m;
        d_prime[i] = (lambda * f[i] - (-r) * d_prime[i - 1]) / m;
    }
    // last row: u_{n-1} = f_{n-1}
    let mut u = vec![0.0; n];
    u[n - 1] = f[n - 1];
    for i in (0..n - 1).rev() {
        u[i] = d_prime[i] - c_prime[i] * u[i + 1];
    }
    u
}

fn resolvent_residual(lambda: f64, theta: f64, delta: f64, f: &[f64], u: &[f64]) -> f64 {
    let n = f.len();
    let r = theta / (delta * delta);
    let mut worst = 0.0_f64;
    for i in 1..n - 1 {
        let lhs = lambda * u[i] - r * (u[i + 1] - 2.0 * u[i] + u[i - 1]);
        let res = (lhs - lambda * f[i]).abs();
        if res > worst {
            worst = res;
        }
    }
    worst
}

/// `(I f) = max over theta of lambda (lambda - A^theta)^{-1} f` with the
/// solver residual checked against `1e-9 * lambda * |f|_inf`.
pub fn resolvent_sup_step(p: &ResolventSupParams, f: &GridFunction) -> Result<GridFunction> {
    let g = f.grid();
    if (g.spacing() - p.delta).abs() > 1e-9 * p.delta {
        return Err(Error::GridSpacingMismatch {
            expected: p.delta,
            actual: g.spacing(),
        });
    }
    let norm_f = f.values().iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
    let bound = 1e-9 * p.lambda * norm_f.max(1e-300);
    let mut best: Option<Vec<f64>> = None;
    for &theta in &p.thetas {
        let u = resolvent_solve(p.lambda, theta, p.delta, f.values());
        let res = resolvent_residual(p.lambda, theta, p.delta, f.values(), &u);
        if res > bound {
            return Err(Error::SolverResidual { residual: res, bound });
        }
        best = Some(match best {
            None => u,
            Some(mut acc) => {
                for (a, v) in acc.iter_mut().zip(&u) {
                    if *v > *a {
                        *a = *v;
                    }
                }
                acc
            }
        });
    }
    GridFunction::new(*g, best.expect("theta family is non-empty"))
}

/// `J f = e^{-1} max over theta of exp(B_theta) f` with
/// `B_theta = lambda (lambda - A^theta)^{-1}`, the operator exponential
/// evaluated as a truncated power series. `|B| <= 1`, so the series tail
/// after `k` terms is below `|f| / (k+1)!`.
pub fn yosida_step(p: &ResolventSupParams, f: &GridFunction) -> Result<GridFunction> {
    let g = f.grid();
    if (g.spacing() - p.delta).abs() > 1e-9 * p.delta {
        return Err(Error::GridSpacingMismatch {
            expected: p.delta,
            actual: g.spacing(),
        });
    }
    let norm_f = f.values().iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
    let bound = 1e-9 * p.lambda * norm_f.max(1e-300);
    let scale = (-1.0_f64).exp();
    let mut best: Option<Vec<f64>> = None;
    for &theta in &p.thetas {
        let mut term = f.values().to_vec();
        let mut sum = term.clone();
        let mut tail = norm_f;
        let mut converged = false;
        for k in 1..=64usize {
            let u = resolvent_solve(p.lambda, theta, p.delta, &term);
            let res = resolvent_residual(p.lambda, theta, p.delta, &term, &u);
            if res > bound * (k as f64) {
                return Err(Error::SolverResidual {
                    residual: res,
                    bound: bound * k as f64,
                });
            }
            term = u;
            let inv_k = 1.0 / k as f64;
            for t in term.iter_mut() {
                *t *= inv_k;
            }
            for (s, t) in sum.iter_mut().zip(&term) {
                *s += *t;
            }
            tail *= 1.0 / (k + 1) as f64;
            if tail < 1e-12 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::SeriesDiverged { terms: 64 });
        }
        best = Some(match best {
            None => sum,
            Some(mut acc) => {
                for (a, v) in acc.iter_mut().zip(&sum) {
                    if *v > *a {
                        *a = *v;
                    }
                }
                acc
            }
        });
    }
    let values = best
        .expect("theta family is non-empty")
        .into_iter()
        .map(|v| scale * v)
        .collect();
    GridFunction::new(*g, values)
}
