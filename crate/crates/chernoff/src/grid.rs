//! Uniform one-dimensional grids, weighted sup-norms, stencils and shifts.
//!
//! Grid functions are immutable samples on a uniform lattice. Points outside
//! the lattice span are read through constant extension of the boundary
//! value, which keeps every downstream one-step operator monotone and
//! convexity-preserving. All norms reduce left to right so repeated runs are
//! bit-identical.

use crate::error::{Error, Result};

/// Uniform lattice `{origin + i * spacing : 0 <= i < count}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1d {
    origin: f64,
    spacing: f64,
    count: usize,
}

impl Grid1d {
    pub fn new(origin: f64, spacing: f64, count: usize) -> Result<Self> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "spacing must be positive and finite, got {spacing}"
            )));
        }
        if count < 3 {
            return Err(Error::InvalidGrid(format!(
                "count must be at least 3, got {count}"
            )));
        }
        if !origin.is_finite() {
            return Err(Error::InvalidGrid(format!("origin must be finite, got {origin}")));
        }
        Ok(Self {
            origin,
            spacing,
            count,
        })
    }

    /// Grid spanning `[lo, hi]` with the given spacing; the node count is
    /// chosen so the last node lands on `hi` up to rounding.
    pub fn spanning(lo: f64, hi: f64, spacing: f64) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::InvalidGrid(format!("need lo < hi, got [{lo}, {hi}]")));
        }
        let count = ((hi - lo) / spacing).round() as usize + 1;
        Self::new(lo, spacing, count)
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn node(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.spacing
    }

    pub fn span(&self) -> (f64, f64) {
        (self.origin, self.node(self.count - 1))
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(|i| self.node(i))
    }

    /// Indices of the nodes lying inside `[lo, hi]` (inclusive, with a half-ulp
    /// guard so window endpoints that coincide with nodes are kept).
    pub fn indices_in(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let guard = 1e-9 * self.spacing;
        let first = ((lo - guard - self.origin) / self.spacing).ceil().max(0.0) as usize;
        let last = ((hi + guard - self.origin) / self.spacing).floor() as i64;
        let last = last.clamp(-1, self.count as i64 - 1);
        if (first as i64) > last {
            first..first
        } else {
            first..(last as usize + 1)
        }
    }
}

/// Bounded strictly positive weight defining the weighted sup-norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightKappa {
    /// `kappa == 1`; the weighted space is the bounded continuous functions.
    Constant,
    /// `kappa(x) = (1 + x^2)^(-p/2)` for `p > 0`.
    Polynomial { p: f64 },
}

impl WeightKappa {
    pub fn polynomial(p: f64) -> Result<Self> {
        if !(p > 0.0) {
            return Err(Error::InvalidGrid(format!("polynomial weight needs p > 0, got {p}")));
        }
        Ok(Self::Polynomial { p })
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Constant => 1.0,
            Self::Polynomial { p } => (1.0 + x * x).powf(-p / 2.0),
        }
    }

    /// The constant `sup_x sup_{|y|<=1} kappa(x) / kappa(x - y)`.
    ///
    /// For the polynomial family the inner sup is attained at `y = sign(x)`
    /// and the outer at `|x| = (sqrt(5) - 1) / 2`, giving
    /// `((3 + sqrt(5)) / 2)^(p/2)`.
    pub fn c_kappa(&self) -> f64 {
        match self {
            Self::Constant => 1.0,
            Self::Polynomial { p } => ((3.0 + 5.0_f64.sqrt()) / 2.0).powf(p / 2.0),
        }
    }

    /// Sampled lower estimate of `c_kappa` over grid nodes and grid shifts
    /// `|y| <= 1`; must never exceed the stored constant.
    pub fn c_kappa_sampled(&self, grid: &Grid1d) -> f64 {
        let max_steps = (1.0 / grid.spacing()).floor() as i64;
        let mut best = 0.0_f64;
        for i in 0..grid.count() {
            let x = grid.node(i);
            let kx = self.eval(x);
            for s in -max_steps..=max_steps {
                let y = s as f64 * grid.spacing();
                let ratio = kx / self.eval(x - y);
                if ratio > best {
                    best = ratio;
                }
            }
        }
        best
    }
}

/// Real-valued samples on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid1d,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid1d, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.count() {
            return Err(Error::InvalidGrid(format!(
                "value count {} does not match grid count {}",
                values.len(),
                grid.count()
            )));
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteSample {
                    node: grid.node(i),
                    value: *v,
                });
            }
        }
        Ok(Self { grid, values })
    }

    pub fn zero(grid: Grid1d) -> Self {
        Self {
            values: vec![0.0; grid.count()],
            grid,
        }
    }

    pub fn grid(&self) -> &Grid1d {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at a grid index extended constantly beyond the span.
    #[inline]
    pub fn value_extended(&self, i: i64) -> f64 {
        let i = i.clamp(0, self.grid.count as i64 - 1) as usize;
        self.values[i]
    }

    /// Linear interpolation at `node(i) + offset` with constant extension.
    ///
    /// The fractional position is computed from `offset` alone, so shifting
    /// the base index shifts the result exactly; offsets within a relative
    /// 1e-9 of a whole spacing multiple address that node exactly.
    #[inline]
    pub fn eval_offset(&self, i: usize, offset: f64) -> f64 {
        let t = offset / self.grid.spacing;
        let nearest = t.round();
        if (t - nearest).abs() <= 1e-9 {
            return self.value_extended(i as i64 + nearest as i64);
        }
        let j = t.floor();
        let frac = t - j;
        let base = i as i64 + j as i64;
        (1.0 - frac) * self.value_extended(base) + frac * self.value_extended(base + 1)
    }

    /// Linear interpolation at an arbitrary point with constant extension.
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_offset(0, x - self.grid.origin)
    }

    /// Serialization used by every report: header `x,value`, one row per
    /// node, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 48 + 8);
        out.push_str("x,value\n");
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{:.16e},{:.16e}\n", self.grid.node(i), v));
        }
        out
    }
}

/// Evaluation interval `K` inside the grid span.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompactWindow {
    pub lo: f64,
    pub hi: f64,
}

impl CompactWindow {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidGrid(format!("window needs lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Window shrunk by a domain-of-dependence margin, `margin = stencil
    /// radius * number of steps` in length units.
    pub fn shrink(&self, margin: f64) -> Result<Self> {
        Self::new(self.lo + margin, self.hi - margin)
    }

    /// Window widened by the same margin.
    pub fn widen(&self, margin: f64) -> Self {
        Self {
            lo: self.lo - margin,
            hi: self.hi + margin,
        }
    }

    fn check_within(&self, grid: &Grid1d) -> Result<()> {
        let (lo, hi) = grid.span();
        let guard = 1e-9 * grid.spacing();
        if self.lo < lo - guard || self.hi > hi + guard {
            return Err(Error::WindowOutsideSpan {
                lo: self.lo,
                hi: self.hi,
                span_lo: lo,
                span_hi: hi,
            });
        }
        Ok(())
    }
}

/// Samples a closed-form function on the grid, rejecting non-finite values.
pub fn sample_function(g: impl Fn(f64) -> f64, grid: Grid1d) -> Result<GridFunction> {
    let mut values = Vec::with_capacity(grid.count());
    for i in 0..grid.count() {
        let x = grid.node(i);
        let v = g(x);
        if !v.is_finite() {
            return Err(Error::NonFiniteSample { node: x, value: v });
        }
        values.push(v);
    }
    Ok(GridFunction { grid, values })
}

/// Weighted sup-norm `max_i |f(x_i)| * kappa(x_i)`, reduced left to right.
pub fn kappa_norm(f: &GridFunction, kappa: &WeightKappa) -> f64 {
    let mut acc = 0.0_f64;
    for (i, v) in f.values().iter().enumerate() {
        let w = v.abs() * kappa.eval(f.grid().node(i));
        if w > acc {
            acc = w;
        }
    }
    acc
}

/// `max_{x in [lo, hi]} |f(x) - g(x)|` over the shared grid nodes.
pub fn sup_norm_on_window(f: &GridFunction, g: &GridFunction, w: &CompactWindow) -> Result<f64> {
    if f.grid() != g.grid() {
        return Err(Error::InvalidGrid("functions live on different grids".into()));
    }
    w.check_within(f.grid())?;
    let mut acc = 0.0_f64;
    for i in f.grid().indices_in(w.lo, w.hi) {
        let d = (f.values()[i] - g.values()[i]).abs();
        if d > acc {
            acc = d;
        }
    }
    Ok(acc)
}

/// Second central difference `(f(x + d) - 2 f(x) + f(x - d)) / d^2` with
/// constant extension at the two boundary nodes.
pub fn second_central_difference(f: &GridFunction) -> GridFunction {
    let n = f.grid().count();
    let inv_d2 = 1.0 / (f.grid().spacing() * f.grid().spacing());
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let c = f.values()[i];
        let l = f.value_extended(i as i64 - 1);
        let r = f.value_extended(i as i64 + 1);
        values.push((r - 2.0 * c + l) * inv_d2);
    }
    GridFunction {
        grid: *f.grid(),
        values,
    }
}

/// `(shift f)(x_i) = f(x_{i + steps})` with constant extension past the span.
pub fn shift(f: &GridFunction, steps: i64) -> Result<GridFunction> {
    if steps.unsigned_abs() as usize >= f.grid().count() {
        return Err(Error::ShiftTooLarge {
            steps,
            count: f.grid().count(),
        });
    }
    let values = (0..f.grid().count())
        .map(|i| f.value_extended(i as i64 + steps))
        .collect();
    Ok(GridFunction {
        grid: *f.grid(),
        values,
    })
}

/// Largest slope over adjacent node pairs.
pub fn lipschitz_estimate(f: &GridFunction) -> f64 {
    lipschitz_estimate_interior(f, 0)
}

/// Largest slope over adjacent pairs at least `margin` nodes from the
/// boundary.
pub fn lipschitz_estimate_interior(f: &GridFunction, margin: usize) -> f64 {
    let n = f.grid().count();
    if margin + 1 >= n - margin {
        return 0.0;
    }
    let inv_d = 1.0 / f.grid().spacing();
    let mut acc = 0.0_f64;
    for i in margin..(n - 1 - margin) {
        let s = (f.values()[i + 1] - f.values()[i]).abs() * inv_d;
        if s > acc {
            acc = s;
        }
    }
    acc
}

/// Convergence diagnostics in the sequential sense: bounded weighted norms
/// plus uniform convergence on the windows.
#[derive(Debug, Clone)]
pub struct MixedConvergenceReport {
    /// `max_n kappa_norm(fs[n])`.
    pub sup_kappa_norm: f64,
    pub bounded: bool,
    /// Sup-norm distance to the target per sequence entry, on that entry's
    /// window.
    pub distances: Vec<f64>,
    /// Whether the distance sequence ends on a strictly decreasing run.
    pub eventually_decreasing: bool,
}

/// Checks the sequential criterion for mixed-topology convergence: the
/// weighted norms must stay below `norm_bound` while the window distances to
/// `target` trend down. `windows` holds either one window reused for every
/// entry or one window per entry. The target is read at each entry's own
/// window nodes through linear interpolation, which is exact on shared nodes
/// of nested grids.
pub fn mixed_convergence_check(
    fs: &[GridFunction],
    target: &GridFunction,
    windows: &[CompactWindow],
    kappa: &WeightKappa,
    norm_bound: f64,
) -> Result<MixedConvergenceReport> {
    if fs.is_empty() {
        return Err(Error::EmptySequence);
    }
    if windows.len() != 1 && windows.len() != fs.len() {
        return Err(Error::InvalidGrid(format!(
            "need 1 or {} windows, got {}",
            fs.len(),
            windows.len()
        )));
    }
    let mut sup_kappa = 0.0_f64;
    let mut distances = Vec::with_capacity(fs.len());
    for (n, f) in fs.iter().enumerate() {
        let nk = kappa_norm(f, kappa);
        if nk > sup_kappa {
            sup_kappa = nk;
        }
        let w = if windows.len() == 1 { &windows[0] } else { &windows[n] };
        w.check_within(f.grid())?;
        let mut d = 0.0_f64;
        for i in f.grid().indices_in(w.lo, w.hi) {
            let x = f.grid().node(i);
            let gap = (f.values()[i] - target.eval(x)).abs();
            if gap > d {
                d = gap;
            }
        }
        distances.push(d);
    }
    Ok(MixedConvergenceReport {
        sup_kappa_norm: sup_kappa,
        bounded: sup_kappa <= norm_bound,
        eventually_decreasing: ends_decreasing(&distances),
        distances,
    })
}

/// True when the sequence closes with a strictly decreasing pair (the
/// pre-asymptotic head may be non-monotone).
pub(crate) fn ends_decreasing(errors: &[f64]) -> bool {
    match errors.len() {
        0 => false,
        1 => true,
        n => errors[n - 1] < errors[n - 2],
    }
}
