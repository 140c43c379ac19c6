//! The iteration engine `S(t) f ~ I^k f`, refinement studies, the numerical
//! comparison principle, equicontinuity probes and the structural property
//! certificate.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::functions::comparability_probes;
use crate::grid::{
    ends_decreasing, kappa_norm, lipschitz_estimate, lipschitz_estimate_interior, sample_function,
    shift, sup_norm_on_window, CompactWindow, Grid1d, GridFunction, WeightKappa,
};
use crate::operators::{hamiltonian_eval, SchemeStep};

/// Iteration count for reaching time `t` in steps of `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSchedule {
    pub t: f64,
    pub h: f64,
    pub k: usize,
}

/// `k = round(t / h)` with ties toward even, so `|k h - t| <= h / 2`.
pub fn make_schedule(t: f64, h: f64) -> Result<TimeSchedule> {
    if !(t >= 0.0) || !(h > 0.0) {
        return Err(Error::InvalidSchedule(format!(
            "need t >= 0 and h > 0, got t = {t}, h = {h}"
        )));
    }
    let k = (t / h).round_ties_even();
    if !k.is_finite() || k < 0.0 {
        return Err(Error::InvalidSchedule(format!("t / h = {k} is not a valid count")));
    }
    Ok(TimeSchedule { t, h, k: k as usize })
}

/// Result of an iterated run with its weighted-norm trace.
#[derive(Debug, Clone)]
pub struct EvolveReport {
    pub result: GridFunction,
    /// Weighted sup-norm after each application.
    pub kappa_trace: Vec<f64>,
    pub wall_time: Duration,
    pub schedule: TimeSchedule,
}

/// Applies the step `k` times, recording the weighted norm after each
/// application. Step errors propagate with the failing index attached.
pub fn chernoff_evolve(
    step: &SchemeStep,
    f: &GridFunction,
    sched: TimeSchedule,
    kappa: &WeightKappa,
) -> Result<EvolveReport> {
    let start = Instant::now();
    let mut current = f.clone();
    let mut kappa_trace = Vec::with_capacity(sched.k);
    for index in 0..sched.k {
        current = step.apply(&current).map_err(|e| Error::StepFailed {
            index,
            source: Box::new(e),
        })?;
        kappa_trace.push(kappa_norm(&current, kappa));
    }
    Ok(EvolveReport {
        result: current,
        kappa_trace,
        wall_time: start.elapsed(),
        schedule: sched,
    })
}

/// One refinement level: a step together with the grid it runs on.
#[derive(Debug, Clone)]
pub struct RefinementLevel {
    pub step: SchemeStep,
    pub grid: Grid1d,
}

/// Levels with strictly decreasing `h` and spacing, plus the recorded
/// coupling rule.
#[derive(Debug, Clone)]
pub struct RefinementLadder {
    pub levels: Vec<RefinementLevel>,
    pub rule: String,
}

impl RefinementLadder {
    pub fn new(levels: Vec<RefinementLevel>, rule: impl Into<String>) -> Result<Self> {
        if levels.len() < 3 {
            return Err(Error::InvalidLadder(format!(
                "need at least 3 levels, got {}",
                levels.len()
            )));
        }
        for pair in levels.windows(2) {
            if !(pair[1].step.h() < pair[0].step.h()) {
                return Err(Error::InvalidLadder("step sizes must strictly decrease".into()));
            }
            if !(pair[1].grid.spacing() < pair[0].grid.spacing()) {
                return Err(Error::InvalidLadder("grid spacings must strictly decrease".into()));
            }
        }
        Ok(Self {
            levels,
            rule: rule.into(),
        })
    }
}

/// Reference a refinement study measures against.
pub enum Reference<'a> {
    /// Closed-form limit evaluated pointwise.
    Function(&'a dyn Fn(f64) -> f64),
    /// Precomputed values, read through interpolation.
    Values(&'a GridFunction),
}

impl Reference<'_> {
    fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Function(f) => f(x),
            Self::Values(g) => g.eval(x),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RateRow {
    pub level: usize,
    pub delta: f64,
    pub h: f64,
    pub k: usize,
    pub error: f64,
    /// `log2(e_{l-1} / e_l)`, absent on the first level.
    pub order: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
    pub eventually_decreasing: bool,
}

impl RateTable {
    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.error).collect()
    }

    pub fn final_error(&self) -> f64 {
        self.rows.last().map(|r| r.error).unwrap_or(f64::NAN)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,delta,h,k,error,order\n");
        for r in &self.rows {
            let order = r
                .order
                .map(|o| format!("{o:.16e}"))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{},{:.16e},{}\n",
                r.level, r.delta, r.h, r.k, r.error, order
            ));
        }
        out
    }
}

/// Evolves the sampled data at every ladder level and reports per-level
/// window errors against the reference with the empirical order per level.
pub fn refinement_study(
    ladder: &RefinementLadder,
    data: impl Fn(f64) -> f64,
    t: f64,
    w: &CompactWindow,
    reference: &Reference<'_>,
    kappa: &WeightKappa,
) -> Result<RateTable> {
    let mut rows: Vec<RateRow> = Vec::with_capacity(ladder.levels.len());
    for (level, lv) in ladder.levels.iter().enumerate() {
        let sampled = sample_function(&data, lv.grid)?;
        let sched = make_schedule(t, lv.step.h())?;
        let report = chernoff_evolve(&lv.step, &sampled, sched, kappa)?;
        let mut err = 0.0_f64;
        for i in lv.grid.indices_in(w.lo, w.hi) {
            let x = lv.grid.node(i);
            let gap = (report.result.values()[i] - reference.eval(x)).abs();
            if gap > err {
                err = gap;
            }
        }
        let order = rows.last().map(|prev: &RateRow| (prev.error / err).log2());
        rows.push(RateRow {
            level,
            delta: lv.grid.spacing(),
            h: lv.step.h(),
            k: sched.k,
            error: err,
            order,
        });
    }
    let errors: Vec<f64> = rows.iter().map(|r| r.error).collect();
    Ok(RateTable {
        eventually_decreasing: ends_decreasing(&errors),
        rows,
    })
}

/// Gate tolerance for declaring two schemes comparable.
pub const GENERATOR_PROBE_TOL: f64 = 1e-6;

/// Checks that two steps declare matching generators on the fixed smooth
/// probe set, then returns the window distance between the evolved results
/// at matched schedules. Symmetric in its two arguments.
pub fn comparison_run(
    a: (&SchemeStep, Grid1d),
    b: (&SchemeStep, Grid1d),
    data: impl Fn(f64) -> f64,
    t: f64,
    w: &CompactWindow,
    kappa: &WeightKappa,
) -> Result<f64> {
    let desc_a = a.0.descriptor()?;
    let desc_b = b.0.descriptor()?;
    for probe in comparability_probes() {
        for i in -8..=8 {
            let x = i as f64 * 0.25;
            let ha = hamiltonian_eval(&desc_a, &probe, x)?;
            let hb = hamiltonian_eval(&desc_b, &probe, x)?;
            let gap = (ha - hb).abs();
            if gap > GENERATOR_PROBE_TOL {
                return Err(Error::IncomparableSchemes {
                    probe: format!("{} at x = {x}", probe.name),
                    max_gap: gap,
                    tol: GENERATOR_PROBE_TOL,
                });
            }
        }
    }
    let run = |(step, grid): (&SchemeStep, Grid1d)| -> Result<GridFunction> {
        let sampled = sample_function(&data, grid)?;
        let sched = make_schedule(t, step.h())?;
        Ok(chernoff_evolve(step, &sampled, sched, kappa)?.result)
    };
    let fa = run(a)?;
    let fb = run(b)?;
    // union of both node sets inside the window keeps the distance symmetric
    let mut worst = 0.0_f64;
    for grid in [&a.1, &b.1] {
        for i in grid.indices_in(w.lo, w.hi) {
            let x = grid.node(i);
            let gap = (fa.eval(x) - fb.eval(x)).abs();
            if gap > worst {
                worst = gap;
            }
        }
    }
    Ok(worst)
}

/// Per-pair outcome of the equicontinuity probe.
#[derive(Debug, Clone)]
pub struct EquicontinuityReport {
    /// `output distance on K / input distance on K'`; `None` for identical
    /// inputs (0 / 0).
    pub ratios: Vec<Option<f64>>,
    /// Empirical constant `c`: the largest finite ratio.
    pub max_ratio: Option<f64>,
    /// The widened window `K'` actually used.
    pub widened: CompactWindow,
}

/// Measures how output window distances respond to input perturbations: the
/// discrete stand-in for the iterated-operator equicontinuity bound. The
/// comparison window is widened by the domain-of-dependence margin
/// `stencil radius * k * spacing`.
pub fn equicontinuity_probe(
    step: &SchemeStep,
    r: f64,
    t: f64,
    w: &CompactWindow,
    pairs: &[(GridFunction, GridFunction)],
    kappa: &WeightKappa,
) -> Result<EquicontinuityReport> {
    let mut ratios = Vec::with_capacity(pairs.len());
    let mut max_ratio: Option<f64> = None;
    let mut widened = *w;
    for (f, g) in pairs {
        for side in [f, g] {
            let n = kappa_norm(side, kappa);
            if n > r + 1e-12 {
                return Err(Error::InvalidScheme(format!(
                    "probe pair exceeds the declared norm ball: {n} > {r}"
                )));
            }
        }
        let sched = make_schedule(t, step.h())?;
        let margin =
            step.boundary_margin_nodes(f.grid()) as f64 * sched.k as f64 * f.grid().spacing();
        let wide = CompactWindow {
            lo: (w.lo - margin).max(f.grid().span().0),
            hi: (w.hi + margin).min(f.grid().span().1),
        };
        widened = wide;
        let input_dist = sup_norm_on_window(f, g, &wide)?;
        let out_f = chernoff_evolve(step, f, sched, kappa)?.result;
        let out_g = chernoff_evolve(step, g, sched, kappa)?.result;
        let output_dist = sup_norm_on_window(&out_f, &out_g, w)?;
        if input_dist == 0.0 {
            ratios.push(None);
        } else {
            let ratio = output_dist / input_dist;
            ratios.push(Some(ratio));
            max_ratio = Some(max_ratio.map_or(ratio, |m| m.max(ratio)));
        }
    }
    Ok(EquicontinuityReport {
        ratios,
        max_ratio,
        widened,
    })
}

pub const PROPERTY_SLACK: f64 = 1e-12;
/// Lipschitz-growth checks carry extra slack for interpolation rounding.
pub const LIPSCHITZ_SLACK: f64 = 1e-8;

/// A single structural-property violation with its witness.
#[derive(Debug, Clone)]
pub struct Violation {
    pub property: &'static str,
    pub trial: usize,
    pub magnitude: f64,
}

/// Outcome of the seeded property suite for one step.
#[derive(Debug, Clone)]
pub struct CertificateReport {
    pub step_name: &'static str,
    pub trials: usize,
    pub violations: Vec<Violation>,
    /// Checks actually executed (translation commutation only runs for
    /// flagged kinds).
    pub checks_run: Vec<&'static str>,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Seeded pseudo-random bump mixtures: smooth, bounded, deterministic per
/// seed.
fn random_bump_mix(rng: &mut ChaCha8Rng, grid: &Grid1d, nonnegative: bool) -> GridFunction {
    let (lo, hi) = grid.span();
    let span = hi - lo;
    let center = 0.5 * (lo + hi);
    let mut terms = Vec::new();
    for _ in 0..4 {
        let amp = if nonnegative {
            rng.gen_range(0.0..1.0)
        } else {
            rng.gen_range(-1.0..1.0)
        };
        let c = center + rng.gen_range(-0.4..0.4) * span;
        let width = rng.gen_range(0.08..0.3) * span;
        terms.push((amp, c, width));
    }
    let values = (0..grid.count())
        .map(|i| {
            let x = grid.node(i);
            terms
                .iter()
                .map(|&(a, c, w)| a * (-(x - c) * (x - c) / (w * w)).exp())
                .sum()
        })
        .collect();
    GridFunction::new(*grid, values).expect("bump mixtures are finite")
}

/// Runs the structural property suite on seeded pseudo-random grid
/// functions: monotonicity, convexity, the convexity-difference inequality,
/// normalization, sup-norm non-expansiveness, Lipschitz-set growth, and
/// translation commutation where flagged.
pub fn convexity_certificate(
    step: &SchemeStep,
    grid: Grid1d,
    trials: usize,
    seed: u64,
) -> Result<CertificateReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = Vec::new();
    let mut checks_run = vec![
        "normalization",
        "monotonicity",
        "convexity",
        "convexity-difference",
        "non-expansive",
        "lipschitz-growth",
    ];
    let margin = step.boundary_margin_nodes(&grid);

    // normalization: I 0 = 0
    let zero = GridFunction::zero(grid);
    let out = step.apply(&zero)?;
    let worst = out.values().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if worst > PROPERTY_SLACK {
        violations.push(Violation {
            property: "normalization",
            trial: 0,
            magnitude: worst,
        });
    }

    let translation = step.meta().translation_invariant;
    if translation {
        checks_run.push("translation-commutation");
    }

    for trial in 0..trials {
        let f = random_bump_mix(&mut rng, &grid, false);
        let g = random_bump_mix(&mut rng, &grid, false);
        let bump = random_bump_mix(&mut rng, &grid, true);
        let lam: f64 = rng.gen_range(0.2..=1.0);

        let step_f = step.apply(&f)?;
        let step_g = step.apply(&g)?;

        // monotonicity: f <= f + bump pointwise
        let f_plus = add(&f, &bump, 1.0);
        let step_f_plus = step.apply(&f_plus)?;
        let mono = worst_signed(&step_f, &step_f_plus);
        if mono > PROPERTY_SLACK {
            violations.push(Violation {
                property: "monotonicity",
                trial,
                magnitude: mono,
            });
        }

        // convexity: I(lam f + (1 - lam) g) <= lam I(f) + (1 - lam) I(g)
        let mix = combine(&f, lam, &g, 1.0 - lam);
        let step_mix = step.apply(&mix)?;
        let rhs = combine(&step_f, lam, &step_g, 1.0 - lam);
        let conv = worst_signed(&step_mix, &rhs);
        if conv > PROPERTY_SLACK {
            violations.push(Violation {
                property: "convexity",
                trial,
                magnitude: conv,
            });
        }

        // convexity difference bound:
        // I(v) - I(w) <= lam (I((v - w) / lam + w) - I(w))
        let stretched = combine(&f, 1.0 / lam, &g, 1.0 - 1.0 / lam);
        let step_stretched = step.apply(&stretched)?;
        let mut worst_gap = 0.0_f64;
        for i in 0..grid.count() {
            let lhs = step_f.values()[i] - step_g.values()[i];
            let rhs = lam * (step_stretched.values()[i] - step_g.values()[i]);
            let gap = lhs - rhs;
            if gap > worst_gap {
                worst_gap = gap;
            }
        }
        if worst_gap > PROPERTY_SLACK {
            violations.push(Violation {
                property: "convexity-difference",
                trial,
                magnitude: worst_gap,
            });
        }

        // sup-norm non-expansiveness at omega = 0
        let in_dist = sup_dist(&f, &g);
        let out_dist = sup_dist(&step_f, &step_g);
        let growth = (step.meta().omega * step.h()).exp();
        if out_dist > growth * in_dist + PROPERTY_SLACK {
            violations.push(Violation {
                property: "non-expansive",
                trial,
                magnitude: out_dist - growth * in_dist,
            });
        }

        // Lipschitz-set growth on interior nodes with margin
        let lip_in = lipschitz_estimate(&f);
        let lip_out = lipschitz_estimate_interior(&step_f, margin);
        let lip_bound = (step.meta().lip_growth * step.h()).exp() * lip_in;
        if lip_out > lip_bound + LIPSCHITZ_SLACK {
            violations.push(Violation {
                property: "lipschitz-growth",
                trial,
                magnitude: lip_out - lip_bound,
            });
        }

        // translation commutation on margin-safe nodes
        if translation {
            let s = [-2i64, -1, 1, 2][rng.gen_range(0..4)];
            let shifted_then_step = step.apply(&shift(&f, s)?)?;
            let step_then_shifted = shift(&step_f, s)?;
            let pad = margin + s.unsigned_abs() as usize;
            let n = grid.count();
            let mut worst_comm = 0.0_f64;
            if 2 * pad < n {
                for i in pad..n - pad {
                    let gap =
                        (shifted_then_step.values()[i] - step_then_shifted.values()[i]).abs();
                    if gap > worst_comm {
                        worst_comm = gap;
                    }
                }
            }
            if worst_comm > PROPERTY_SLACK {
                violations.push(Violation {
                    property: "translation-commutation",
                    trial,
                    magnitude: worst_comm,
                });
            }
        }
    }
    Ok(CertificateReport {
        step_name: step.kind().name(),
        trials,
        violations,
        checks_run,
    })
}

fn add(f: &GridFunction, g: &GridFunction, scale: f64) -> GridFunction {
    combine(f, 1.0, g, scale)
}

fn combine(f: &GridFunction, a: f64, g: &GridFunction, b: f64) -> GridFunction {
    let values = f
        .values()
        .iter()
        .zip(g.values())
        .map(|(x, y)| a * x + b * y)
        .collect();
    GridFunction::new(*f.grid(), values).expect("finite combination")
}

/// Largest amount by which `lo` exceeds `hi` anywhere (positive = violation).
fn worst_signed(lo: &GridFunction, hi: &GridFunction) -> f64 {
    lo.values()
        .iter()
        .zip(hi.values())
        .map(|(a, b)| a - b)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn sup_dist(f: &GridFunction, g: &GridFunction) -> f64 {
    f.values()
        .iter()
        .zip(g.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::FdHjbParams;
    use crate::sublinear::Penalty;

    #[test]
    fn schedule_cases() {
        assert_eq!(make_schedule(0.0, 0.1).unwrap().k, 0);
        let s = make_schedule(1.0, 0.25).unwrap();
        assert_eq!(s.k, 4);
        assert_eq!(s.k as f64 * s.h, 1.0);
        let s = make_schedule(1.0, 0.3).unwrap();
        assert_eq!(s.k, 3);
        assert!((s.k as f64 * s.h - 1.0).abs() <= s.h / 2.0);
        assert!(make_schedule(-1.0, 0.1).is_err());
    }

    fn heat_step(delta: f64, h: f64) -> SchemeStep {
        SchemeStep::fd_hjb(
            FdHjbParams::new(delta, 1.0, Penalty::indicator(1.0, 1.0).unwrap(), 5).unwrap(),
            h,
        )
        .unwrap()
    }

    #[test]
    fn evolve_zero_steps_returns_data() {
        let grid = Grid1d::spanning(-1.0, 1.0, 0.1).unwrap();
        let f = sample_function(f64::sin, grid).unwrap();
        let step = heat_step(0.1, 0.005);
        let rep = chernoff_evolve(&step, &f, make_schedule(0.0, 0.005).unwrap(), &WeightKappa::Constant).unwrap();
        assert_eq!(rep.result.values(), f.values());
        assert!(rep.kappa_trace.is_empty());
    }

    #[test]
    fn evolve_split_is_bit_identical() {
        let grid = Grid1d::spanning(-2.0, 2.0, 0.1).unwrap();
        let f = sample_function(|x| (-x * x).exp(), grid).unwrap();
        let step = heat_step(0.1, 0.25 / 64.0);
        let kappa = WeightKappa::Constant;
        let full = chernoff_evolve(&step, &f, make_schedule(0.5, step.h()).unwrap(), &kappa).unwrap();
        let first = chernoff_evolve(&step, &f, make_schedule(0.25, step.h()).unwrap(), &kappa).unwrap();
        let second =
            chernoff_evolve(&step, &first.result, make_schedule(0.25, step.h()).unwrap(), &kappa).unwrap();
        assert_eq!(full.result.values(), second.result.values());
    }

    #[test]
    fn evolve_trace_is_non_expanding() {
        let grid = Grid1d::spanning(-4.0, 4.0, 0.1).unwrap();
        let f = sample_function(|x| (-x * x).exp(), grid).unwrap();
        let step = heat_step(0.1, 0.004);
        let kappa = WeightKappa::Constant;
        let rep = chernoff_evolve(&step, &f, make_schedule(0.2, step.h()).unwrap(), &kappa).unwrap();
        let bound = kappa_norm(&f, &kappa) + PROPERTY_SLACK;
        for v in &rep.kappa_trace {
            assert!(*v <= bound);
        }
    }

    #[test]
    fn ladder_requires_three_decreasing_levels() {
        let mk = |d: f64, h: f64| RefinementLevel {
            step: heat_step(d, h),
            grid: Grid1d::spanning(-1.0, 1.0, d).unwrap(),
        };
        assert!(RefinementLadder::new(vec![mk(0.2, 0.02), mk(0.1, 0.005)], "h = d^2/2").is_err());
        // step size not strictly decreasing
        assert!(RefinementLadder::new(
            vec![mk(0.2, 0.005), mk(0.1, 0.005), mk(0.05, 0.00125)],
            "h = d^2/2"
        )
        .is_err());
        assert!(RefinementLadder::new(
            vec![mk(0.2, 0.02), mk(0.1, 0.005), mk(0.05, 0.00125)],
            "h = d^2/2"
        )
        .is_ok());
    }

    #[test]
    fn refinement_self_reference_hits_zero() {
        let mk = |d: f64, h: f64| RefinementLevel {
            step: heat_step(d, h),
            grid: Grid1d::spanning(-4.0, 4.0, d).unwrap(),
        };
        let ladder = RefinementLadder::new(
            vec![mk(0.2, 0.02), mk(0.1, 0.005), mk(0.05, 0.00125)],
            "h = d^2/2",
        )
        .unwrap();
        let data = |x: f64| (-x * x).exp();
        let w = CompactWindow::new(-1.0, 1.0).unwrap();
        // reference = the finest level's own result
        let finest = &ladder.levels[2];
        let sampled = sample_function(data, finest.grid).unwrap();
        let sched = make_schedule(0.25, finest.step.h()).unwrap();
        let reference =
            chernoff_evolve(&finest.step, &sampled, sched, &WeightKappa::Constant).unwrap();
        let table = refinement_study(
            &ladder,
            data,
            0.25,
            &w,
            &Reference::Values(&reference.result),
            &WeightKappa::Constant,
        )
        .unwrap();
        assert_eq!(table.rows.last().unwrap().error, 0.0);
        assert!(table.eventually_decreasing);
    }

    #[test]
    fn comparison_rejects_mismatched_generators() {
        let a = heat_step(0.1, 0.004);
        let b = SchemeStep::fd_hjb(
            FdHjbParams::new(0.1, 2.0, Penalty::indicator(2.0, 2.0).unwrap(), 5).unwrap(),
            0.002,
        )
        .unwrap();
        let grid = Grid1d::spanning(-4.0, 4.0, 0.1).unwrap();
        let w = CompactWindow::new(-1.0, 1.0).unwrap();
        let err = comparison_run(
            (&a, grid),
            (&b, grid),
            |x| (-x * x).exp(),
            0.1,
            &w,
            &WeightKappa::Constant,
        );
        assert!(matches!(err, Err(Error::IncomparableSchemes { .. })));
    }

    #[test]
    fn comparison_of_identical_steps_is_zero() {
        let a = heat_step(0.1, 0.004);
        let grid = Grid1d::spanning(-4.0, 4.0, 0.1).unwrap();
        let w = CompactWindow::new(-1.0, 1.0).unwrap();
        let d = comparison_run(
            (&a, grid),
            (&a, grid),
            |x| (-x * x).exp(),
            0.1,
            &w,
            &WeightKappa::Constant,
        )
        .unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn comparison_is_symmetric() {
        let a = heat_step(0.1, 0.004);
        let b = heat_step(0.05, 0.001);
        let ga = Grid1d::spanning(-4.0, 4.0, 0.1).unwrap();
        let gb = Grid1d::spanning(-4.0, 4.0, 0.05).unwrap();
        let w = CompactWindow::new(-1.0, 1.0).unwrap();
        let data = |x: f64| (-x * x).exp();
        let k = WeightKappa::Constant;
        let d_ab = comparison_run((&a, ga), (&b, gb), data, 0.2, &w, &k).unwrap();
        let d_ba = comparison_run((&b, gb), (&a, ga), data, 0.2, &w, &k).unwrap();
        assert_eq!(d_ab, d_ba);
        assert!(d_ab > 0.0);
    }

    #[test]
    fn refinement_drift_only_euler_is_first_order() {
        use crate::operators::{DriftFn, SublinearEulerParams};
        use crate::sublinear::{AmbiguitySet, DiscreteMeasure};
        let noise = AmbiguitySet::singleton(DiscreteMeasure::rademacher(1.0).unwrap());
        let mk = |d: f64, h: f64| RefinementLevel {
            step: SchemeStep::sublinear_euler(
                SublinearEulerParams::new(
                    DriftFn::new(|x: f64| -x.tanh(), 1.0, 1.0),
                    0.0,
                    noise.clone(),
                )
                .unwrap(),
                h,
            )
            .unwrap(),
            grid: Grid1d::spanning(-6.0, 6.0, d).unwrap(),
        };
        let ladder = RefinementLadder::new(
            vec![mk(0.02, 0.1), mk(0.01, 0.05), mk(0.005, 0.025)],
            "explicit h ladder",
        )
        .unwrap();
        let data = |x: f64| (-x * x).exp();
        let t = 1.0;
        let exact = move |x: f64| {
            let u = crate::oracles::ode_flow(|v| -v.tanh(), t, x, 1e-10).unwrap();
            data(u)
        };
        let w = CompactWindow::new(-2.0, 2.0).unwrap();
        let table = refinement_study(
            &ladder,
            data,
            t,
            &w,
            &Reference::Function(&exact),
            &WeightKappa::Constant,
        )
        .unwrap();
        assert!(table.eventually_decreasing);
        // explicit Euler: errors shrink by roughly 2x per halving
        for row in &table.rows[1..] {
            let order = row.order.unwrap();
            assert!((0.6..1.5).contains(&order), "order {order}");
        }
    }

    #[test]
    fn refinement_against_heat_closed_form_is_second_order() {
        // single sigma = 1 scheme solves u_t = u''/2, so
        // u(t) = exp(-x^2/(1+2t)) / sqrt(1+2t) for Gaussian data
        let mk = |d: f64| RefinementLevel {
            step: heat_step(d, d * d / 2.0),
            grid: Grid1d::spanning(-8.0, 8.0, d).unwrap(),
        };
        // t divisible by every ladder h, so schedule rounding adds no error
        let ladder =
            RefinementLadder::new(vec![mk(0.2), mk(0.1), mk(0.05)], "h = d^2/2").unwrap();
        let t = 0.5;
        let exact = move |x: f64| (-x * x / (1.0 + 2.0 * t)).exp() / (1.0 + 2.0 * t).sqrt();
        let w = CompactWindow::new(-2.0, 2.0).unwrap();
        let table = refinement_study(
            &ladder,
            |x| (-x * x).exp(),
            t,
            &w,
            &Reference::Function(&exact),
            &WeightKappa::Constant,
        )
        .unwrap();
        assert!(table.eventually_decreasing);
        // second-order stencil: errors shrink by roughly 4x per halving
        for row in &table.rows[1..] {
            let order = row.order.unwrap();
            assert!((1.5..2.5).contains(&order), "order {order}");
        }
    }

    #[test]
    fn equicontinuity_far_field_bump_does_not_reach_window() {
        let grid = Grid1d::spanning(-8.0, 8.0, 0.1).unwrap();
        let step = heat_step(0.1, 0.004);
        let f = sample_function(|x| (-x * x).exp(), grid).unwrap();
        // perturbation supported far outside the widened window
        let g = sample_function(
            |x| (-x * x).exp() + 0.5 * (-(x - 7.0) * (x - 7.0) / 0.01).exp(),
            grid,
        )
        .unwrap();
        let w = CompactWindow::new(-1.0, 1.0).unwrap();
        // few steps: information travels one node per step
        let rep = equicontinuity_probe(&step, 10.0, 0.02, &w, &[(f.clone(), g)], &WeightKappa::Constant)
            .unwrap();
        // the input pair differs only beyond K', so the ratio may be None or
        // tiny; the evolved outputs must agree on K
        if let Some(r) = rep.ratios[0] {
            assert!(r < 1e-12);
        }

        // identical pair reports not-applicable
        let rep2 =
            equicontinuity_probe(&step, 10.0, 0.02, &w, &[(f.clone(), f)], &WeightKappa::Constant)
                .unwrap();
        assert!(rep2.ratios[0].is_none());
    }

    #[test]
    fn equicontinuity_interior_perturbation_is_nonexpansive() {
        let grid = Grid1d::spanning(-8.0, 8.0, 0.1).unwrap();
        let step = heat_step(0.1, 0.004);
        let f = sample_function(|x| (-x * x).exp(), grid).unwrap();
        let g = sample_function(|x| (-x * x).exp() + 1e-3, grid).unwrap();
        let w = CompactWindow::new(-1.0, 1.0).unwrap();
        let rep = equicontinuity_probe(&step, 10.0, 0.02, &w, &[(f, g)], &WeightKappa::Constant)
            .unwrap();
        let c = rep.max_ratio.unwrap();
        assert!(c <= 1.0 + 1e-9, "empirical c = {c}");
    }

    #[test]
    fn certificate_passes_for_heat_step() {
        let grid = Grid1d::spanning(-4.0, 4.0, 0.1).unwrap();
        let step = heat_step(0.1, 0.004);
        let rep = convexity_certificate(&step, grid, 50, 42).unwrap();
        assert!(rep.passed(), "violations: {:?}", rep.violations);
    }

    #[test]
    fn certificate_catches_broken_step() {
        // mis-specified penalty: its zero point 3 lies beyond sigma_max = 1,
        // so the sigma grid smuggles in a stencil with sigma^2 h / d^2 > 1
        // and the step loses monotonicity
        use crate::operators::{StepKind, StepMeta};
        let params = FdHjbParams {
            delta: 0.5,
            sigma_max: 1.0,
            penalty: Penalty::indicator(3.0, 3.0).unwrap(),
            sigma_grid_size: 5,
        };
        let step = SchemeStep::unchecked(
            StepKind::FdHjb(params),
            0.125,
            StepMeta {
                omega: 0.0,
                lip_growth: 0.0,
                translation_invariant: true,
            },
        );
        let grid = Grid1d::spanning(-4.0, 4.0, 0.5).unwrap();
        let rep = convexity_certificate(&step, grid, 100, 42).unwrap();
        assert!(
            rep.violations.iter().any(|v| v.property == "monotonicity"),
            "expected a monotonicity witness, got {:?}",
            rep.violations
        );
    }

    #[test]
    fn certificate_difference_bound_degenerates_at_lambda_one() {
        // lambda = 1 turns the convexity-difference inequality into 0 <= 0
        let grid = Grid1d::spanning(-2.0, 2.0, 0.1).unwrap();
        let step = heat_step(0.1, 0.004);
        let f = sample_function(|x| (-x * x).exp(), grid).unwrap();
        let g = sample_function(|x| 0.5 * (x).cos(), grid).unwrap();
        let step_f = step.apply(&f).unwrap();
        let step_g = step.apply(&g).unwrap();
        // (v - w) / 1 + w = v
        for i in 0..grid.count() {
            let lhs = step_f.values()[i] - step_g.values()[i];
            let rhs = 1.0 * (step_f.values()[i] - step_g.values()[i]);
            assert_eq!(lhs, rhs);
        }
    }
}
