//! Sublinear expectations over finite ambiguity sets, convex penalties with
//! their conjugates, and the one-dimensional Wasserstein distance.
//!
//! Ambiguity sets are finite lists of finitely supported measures, so every
//! expectation is an exact finite maximum; nothing here samples randomness.

use crate::error::{Error, Result};

const WEIGHT_SUM_TOL: f64 = 1e-12;
const GOLDEN_TOL: f64 = 1e-10;

/// Finitely supported probability measure with strictly increasing atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Vec<(f64, f64)>,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("measure has no atoms".into()));
        }
        let mut sum = 0.0;
        for (i, &(point, weight)) in atoms.iter().enumerate() {
            if !point.is_finite() || !weight.is_finite() {
                return Err(Error::InvalidMeasure(format!(
                    "non-finite atom ({point}, {weight})"
                )));
            }
            if weight <= 0.0 {
                return Err(Error::InvalidMeasure(format!(
                    "weight {weight} at point {point} is not positive"
                )));
            }
            if i > 0 && atoms[i - 1].0 >= point {
                return Err(Error::InvalidMeasure(format!(
                    "points must be strictly increasing (got {} then {point})",
                    atoms[i - 1].0
                )));
            }
            sum += weight;
        }
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidMeasure(format!(
                "weights sum to {sum}, not 1"
            )));
        }
        Ok(Self { atoms })
    }

    pub fn dirac(point: f64) -> Self {
        Self {
            atoms: vec![(point, 1.0)],
        }
    }

    /// Symmetric two-point law on `{-a, +a}`.
    pub fn rademacher(a: f64) -> Result<Self> {
        Self::new(vec![(-a, 0.5), (a, 0.5)])
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    /// Plain expectation of `g` under this measure, summed left to right.
    pub fn integrate(&self, mut g: impl FnMut(f64) -> f64) -> Result<f64> {
        let mut acc = 0.0;
        for &(point, weight) in &self.atoms {
            let v = g(point);
            if !v.is_finite() {
                return Err(Error::NonFiniteAtAtom { atom: point, value: v });
            }
            acc += weight * v;
        }
        Ok(acc)
    }

    pub fn max_abs_atom(&self) -> f64 {
        self.atoms
            .iter()
            .map(|&(p, _)| p.abs())
            .fold(0.0, f64::max)
    }
}

/// Non-empty finite family of measures realizing a sublinear expectation as
/// the maximum of the member expectations.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguitySet {
    measures: Vec<DiscreteMeasure>,
}

impl AmbiguitySet {
    pub fn new(measures: Vec<DiscreteMeasure>) -> Result<Self> {
        if measures.is_empty() {
            return Err(Error::InvalidMeasure("ambiguity set is empty".into()));
        }
        Ok(Self { measures })
    }

    pub fn singleton(measure: DiscreteMeasure) -> Self {
        Self {
            measures: vec![measure],
        }
    }

    pub fn measures(&self) -> &[DiscreteMeasure] {
        &self.measures
    }

    pub fn max_abs_atom(&self) -> f64 {
        self.measures
            .iter()
            .map(DiscreteMeasure::max_abs_atom)
            .fold(0.0, f64::max)
    }
}

/// `E[g] = max over measures of the plain expectation`.
pub fn expect_sublinear(amb: &AmbiguitySet, mut g: impl FnMut(f64) -> f64) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for m in amb.measures() {
        let v = m.integrate(&mut g)?;
        if v > best {
            best = v;
        }
    }
    Ok(best)
}

/// Outcome of the centering and moment diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenteringVerdict {
    pub centered: bool,
    /// `E[x]` and `E[-x]`; centering requires both below the tolerance.
    pub mean_up: f64,
    pub mean_down: f64,
    pub second_moment: f64,
    pub third_abs_moment: f64,
}

/// Verifies `E[a x] <= tol` for `a` in `{+1, -1}` and reports the moments
/// used by the Euler and control schemes.
pub fn check_centering(amb: &AmbiguitySet, tol: f64) -> CenteringVerdict {
    // atom functions are finite polynomials, no error path
    let mean_up = expect_sublinear(amb, |x| x).unwrap();
    let mean_down = expect_sublinear(amb, |x| -x).unwrap();
    let second_moment = expect_sublinear(amb, |x| x * x).unwrap();
    let third_abs_moment = expect_sublinear(amb, |x| x.abs().powi(3)).unwrap();
    CenteringVerdict {
        centered: mean_up <= tol && mean_down <= tol,
        mean_up,
        mean_down,
        second_moment,
        third_abs_moment,
    }
}

/// Convex penalty on the half line with a designated zero point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    /// `0` on `[lo, hi]`, `+infinity` outside.
    IndicatorInterval { lo: f64, hi: f64 },
    /// `c * b^q`.
    PowerLaw { c: f64, q: f64 },
    /// `c * b^2`; superlinear in `b` but not in `b^2`.
    Quadratic { c: f64 },
}

impl Penalty {
    pub fn indicator(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() || lo < 0.0 {
            return Err(Error::InvalidPenalty(format!(
                "indicator interval needs 0 <= lo <= hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self::IndicatorInterval { lo, hi })
    }

    pub fn power_law(c: f64, q: f64) -> Result<Self> {
        if !(c > 0.0) || !(q > 1.0) {
            return Err(Error::InvalidPenalty(format!(
                "power law needs c > 0 and q > 1, got c = {c}, q = {q}"
            )));
        }
        Ok(Self::PowerLaw { c, q })
    }

    pub fn quadratic(c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::InvalidPenalty(format!("quadratic needs c > 0, got {c}")));
        }
        Ok(Self::Quadratic { c })
    }

    pub fn eval(&self, b: f64) -> f64 {
        debug_assert!(b >= 0.0);
        match *self {
            Self::IndicatorInterval { lo, hi } => {
                if lo <= b && b <= hi {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Self::PowerLaw { c, q } => c * b.powf(q),
            Self::Quadratic { c } => c * b * b,
        }
    }

    /// A point where the penalty vanishes.
    pub fn zero_point(&self) -> f64 {
        match *self {
            Self::IndicatorInterval { lo, .. } => lo,
            Self::PowerLaw { .. } | Self::Quadratic { .. } => 0.0,
        }
    }

    /// Whether `phi(b) / b^2 -> infinity` (required by the finite-difference
    /// scheme).
    pub fn superlinear_in_square(&self) -> bool {
        match *self {
            Self::IndicatorInterval { .. } => true,
            Self::PowerLaw { q, .. } => q > 2.0,
            Self::Quadratic { .. } => false,
        }
    }

    /// Whether `phi(b) / b -> infinity` (required by the Wasserstein
    /// perturbation).
    pub fn superlinear_in_b(&self) -> bool {
        match *self {
            Self::IndicatorInterval { .. } => true,
            Self::PowerLaw { q, .. } => q > 1.0,
            Self::Quadratic { .. } => true,
        }
    }
}

/// Sampled convex conjugate `phi*(a) = sup_{b >= 0} (a b - phi(b))` together
/// with the recorded maximizers.
#[derive(Debug, Clone)]
pub struct ConjugateTable {
    pub penalty: Penalty,
    /// Rows `(a, phi*(a), argmax b)` in the order of the requested `a` grid.
    pub rows: Vec<(f64, f64, f64)>,
}

impl ConjugateTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("a,phi_star,argmax_b\n");
        for &(a, v, b) in &self.rows {
            out.push_str(&format!("{a:.16e},{v:.16e},{b:.16e}\n"));
        }
        out
    }
}

/// Maximizes a concave-on-its-domain objective over `b >= 0` by coarse grid
/// search followed by golden-section refinement of the bracketing interval.
/// `hi` bounds the search window; values of `-infinity` mark points outside
/// the penalty domain.
fn maximize_bracketed(obj: impl Fn(f64) -> f64, lo: f64, hi: f64, refine_iters: usize) -> (f64, f64) {
    const COARSE: usize = 512;
    let mut best_i = 0;
    let mut best_v = f64::NEG_INFINITY;
    let step = (hi - lo) / COARSE as f64;
    for i in 0..=COARSE {
        let b = lo + step * i as f64;
        let v = obj(b);
        if v > best_v {
            best_v = v;
            best_i = i;
        }
    }
    let mut a = lo + step * best_i.saturating_sub(1) as f64;
    let mut b = (lo + step * (best_i + 1) as f64).min(hi);
    // golden-section on the bracket; infinite penalties shrink toward the
    // finite side
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    for _ in 0..refine_iters.max(1) {
        let mut x1 = b - inv_phi * (b - a);
        let mut x2 = a + inv_phi * (b - a);
        let mut f1 = obj(x1);
        let mut f2 = obj(x2);
        while b - a > GOLDEN_TOL {
            if f1 >= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - inv_phi * (b - a);
                f1 = obj(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + inv_phi * (b - a);
                f2 = obj(x2);
            }
        }
    }
    let mid = 0.5 * (a + b);
    let v_mid = obj(mid);
    if v_mid >= best_v {
        (v_mid, mid)
    } else {
        (best_v, lo + step * best_i as f64)
    }
}

/// Search window `[0, B]` for a penalized supremum: `B` is doubled until the
/// objective has decreased for two consecutive doublings. `None` marks an
/// objective that keeps growing (missing superlinear growth).
fn penalized_window(penalty: &Penalty, obj: impl Fn(f64) -> f64) -> Option<f64> {
    if let Penalty::IndicatorInterval { hi, .. } = penalty {
        return Some(*hi);
    }
    let mut window = 1.0_f64;
    let mut decreases = 0;
    let mut prev = obj(window);
    for _ in 0..80 {
        window *= 2.0;
        let v = obj(window);
        if v < prev {
            decreases += 1;
            if decreases >= 2 {
                return Some(window);
            }
        } else {
            decreases = 0;
        }
        prev = v;
    }
    None
}

/// `sup_{b >= 0} (gain(b) - phi(b))` with the doubling window followed by
/// grid search and golden-section refinement; `None` when the window search
/// detects unbounded growth.
pub(crate) fn penalized_sup(
    penalty: &Penalty,
    gain: impl Fn(f64) -> f64,
    refine_iters: usize,
) -> Option<(f64, f64)> {
    let obj = |b: f64| gain(b) - penalty.eval(b);
    let lo = match penalty {
        Penalty::IndicatorInterval { lo, .. } => *lo,
        _ => 0.0,
    };
    let hi = penalized_window(penalty, obj)?;
    Some(maximize_bracketed(obj, lo, hi.max(lo + 1e-9), refine_iters))
}

/// Computes `phi*` on the requested grid of slopes.
pub fn convex_conjugate(penalty: &Penalty, a_grid: &[f64], refine_iters: usize) -> Result<ConjugateTable> {
    let mut rows = Vec::with_capacity(a_grid.len());
    for &a in a_grid {
        if !a.is_finite() {
            return Err(Error::UnboundedConjugate { a });
        }
        rows.push(conjugate_at(penalty, a, refine_iters)?);
    }
    Ok(ConjugateTable {
        penalty: *penalty,
        rows,
    })
}

/// Single conjugate evaluation `(a, phi*(a), argmax b)`.
pub fn conjugate_at(penalty: &Penalty, a: f64, refine_iters: usize) -> Result<(f64, f64, f64)> {
    if !penalty.superlinear_in_b() && a > 0.0 {
        return Err(Error::UnboundedConjugate { a });
    }
    let (v, argmax) =
        penalized_sup(penalty, |b| a * b, refine_iters).ok_or(Error::UnboundedConjugate { a })?;
    Ok((a, v, argmax))
}

/// p-Wasserstein distance through the quantile coupling: merge the
/// cumulative-weight breakpoints of both measures and integrate
/// `|F_mu^{-1} - F_nu^{-1}|^p` over the unit interval.
pub fn wasserstein_1d(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidMeasure(format!("wasserstein order must be >= 1, got {p}")));
    }
    let a = mu.atoms();
    let b = nu.atoms();
    let mut i = 0;
    let mut j = 0;
    let mut cum_a = a[0].1;
    let mut cum_b = b[0].1;
    let mut level = 0.0_f64;
    let mut acc = 0.0_f64;
    loop {
        let next = cum_a.min(cum_b).min(1.0);
        let seg = next - level;
        if seg > 0.0 {
            acc += seg * (a[i].0 - b[j].0).abs().powf(p);
        }
        level = next;
        if level >= 1.0 - 1e-15 {
            break;
        }
        if cum_a <= cum_b {
            i = (i + 1).min(a.len() - 1);
            cum_a += a[i].1;
        } else {
            j = (j + 1).min(b.len() - 1);
            cum_b += b[j].1;
        }
    }
    Ok(acc.powf(1.0 / p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton_expectation_is_plain() {
        let amb = AmbiguitySet::singleton(DiscreteMeasure::dirac(0.0));
        assert_eq!(expect_sublinear(&amb, |x| x).unwrap(), 0.0);
    }

    #[test]
    fn two_diracs_take_the_max() {
        let amb = AmbiguitySet::new(vec![DiscreteMeasure::dirac(-1.0), DiscreteMeasure::dirac(1.0)]).unwrap();
        assert_eq!(expect_sublinear(&amb, |x| x).unwrap(), 1.0);
    }

    #[test]
    fn rademacher_vs_dirac_square() {
        let amb = AmbiguitySet::new(vec![
            DiscreteMeasure::rademacher(1.0).unwrap(),
            DiscreteMeasure::dirac(0.0),
        ])
        .unwrap();
        // enumerate: Rademacher gives 1, the Dirac gives 0
        assert_eq!(expect_sublinear(&amb, |x| x * x).unwrap(), 1.0);
    }

    #[test]
    fn expectation_rejects_non_finite_integrand() {
        let amb = AmbiguitySet::singleton(DiscreteMeasure::dirac(0.0));
        assert!(matches!(
            expect_sublinear(&amb, |x| 1.0 / x),
            Err(Error::NonFiniteAtAtom { .. })
        ));
    }

    #[test]
    fn centering_verdicts() {
        let rademacher = AmbiguitySet::singleton(DiscreteMeasure::rademacher(1.0).unwrap());
        let v = check_centering(&rademacher, 1e-12);
        assert!(v.centered);
        assert_eq!(v.second_moment, 1.0);
        assert_eq!(v.third_abs_moment, 1.0);

        let one_sided = AmbiguitySet::singleton(DiscreteMeasure::dirac(1.0));
        let v = check_centering(&one_sided, 1e-12);
        assert!(!v.centered);
        assert_eq!(v.mean_up, 1.0);

        let mixed = AmbiguitySet::new(vec![
            DiscreteMeasure::rademacher(1.0).unwrap(),
            DiscreteMeasure::rademacher(2.0).unwrap(),
        ])
        .unwrap();
        let v = check_centering(&mixed, 1e-12);
        assert!(v.centered);
        assert_eq!(v.second_moment, 4.0);
    }

    #[test]
    fn conjugate_of_half_square() {
        // phi(b) = b^2/2 has phi*(a) = a^2/2 with maximizer b = a
        let p = Penalty::power_law(0.5, 2.0).unwrap();
        let (_, v, b) = conjugate_at(&p, 2.0, 1).unwrap();
        assert!((v - 2.0).abs() < 1e-8, "phi*(2) = {v}");
        assert!((b - 2.0).abs() < 1e-4);
        // independent coarse grid-search oracle
        let brute = (0..40000)
            .map(|i| {
                let b = i as f64 * 1e-4;
                2.0 * b - 0.5 * b * b
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((v - brute).abs() < 1e-7);
    }

    #[test]
    fn conjugate_of_indicator() {
        let p = Penalty::indicator(0.0, 1.0).unwrap();
        let (_, v, b) = conjugate_at(&p, 3.0, 1).unwrap();
        assert!((v - 3.0).abs() < 1e-8);
        assert!((b - 1.0).abs() < 1e-8);
    }

    #[test]
    fn conjugate_vanishes_at_zero() {
        for p in [
            Penalty::indicator(0.0, 2.0).unwrap(),
            Penalty::power_law(1.0, 4.0).unwrap(),
            Penalty::quadratic(0.5).unwrap(),
        ] {
            let (_, v, _) = conjugate_at(&p, 0.0, 1).unwrap();
            assert!(v.abs() < 1e-12, "phi*(0) = {v} for {p:?}");
        }
    }

    #[test]
    fn conjugate_table_is_convex_and_monotone() {
        let p = Penalty::power_law(1.0, 3.0).unwrap();
        let a_grid: Vec<f64> = (0..40).map(|i| i as f64 * 0.25).collect();
        let table = convex_conjugate(&p, &a_grid, 1).unwrap();
        for w in table.rows.windows(3) {
            let (_, v0, _) = w[0];
            let (_, v1, _) = w[1];
            let (_, v2, _) = w[2];
            assert!(v1 <= 0.5 * (v0 + v2) + 1e-9, "midpoint convexity fails");
            assert!(v0 <= v1 + 1e-12 && v1 <= v2 + 1e-12, "monotonicity fails");
        }
    }

    #[test]
    fn fenchel_young_holds_on_grids() {
        let p = Penalty::power_law(0.7, 2.5).unwrap();
        let a_grid: Vec<f64> = (0..20).map(|i| i as f64 * 0.3).collect();
        let table = convex_conjugate(&p, &a_grid, 1).unwrap();
        for &(a, star, _) in &table.rows {
            for i in 0..200 {
                let b = i as f64 * 0.05;
                assert!(a * b <= star + p.eval(b) + 1e-8);
            }
        }
    }

    #[test]
    fn wasserstein_basics() {
        let mu = DiscreteMeasure::rademacher(1.0).unwrap();
        assert_eq!(wasserstein_1d(&mu, &mu, 2.0).unwrap(), 0.0);

        // shifted point mass at every order
        let d0 = DiscreteMeasure::dirac(0.0);
        let dl = DiscreteMeasure::dirac(-0.75);
        for p in [1.0, 1.5, 2.0, 3.0] {
            assert!((wasserstein_1d(&d0, &dl, p).unwrap() - 0.75).abs() < 1e-12);
        }

        // quantile formula for Rademacher vs the origin
        assert!((wasserstein_1d(&mu, &d0, 1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wasserstein_matches_exhaustive_coupling_on_two_atoms() {
        // all couplings of a 2-atom and a 2-atom measure form a one-parameter
        // family; enumerate it finely as an independent oracle
        let mu = DiscreteMeasure::new(vec![(-1.0, 0.3), (2.0, 0.7)]).unwrap();
        let nu = DiscreteMeasure::new(vec![(0.0, 0.6), (1.0, 0.4)]).unwrap();
        for p in [1.0, 2.0] {
            let got = wasserstein_1d(&mu, &nu, p).unwrap();
            let cost = |x: f64, y: f64| (x - y).abs().powf(p);
            // coupling matrix [[t, 0.3 - t], [0.6 - t, 0.1 + t]], t in [0, 0.3]
            let mut best = f64::INFINITY;
            for i in 0..=300_000 {
                let t = i as f64 * 1e-6;
                if t > 0.3 {
                    break;
                }
                let c = t * cost(-1.0, 0.0)
                    + (0.3 - t) * cost(-1.0, 1.0)
                    + (0.6 - t) * cost(2.0, 0.0)
                    + (0.1 + t) * cost(2.0, 1.0);
                best = best.min(c);
            }
            assert!(
                (got - best.powf(1.0 / p)).abs() < 1e-10,
                "p = {p}: quantile {got} vs enumeration {}",
                best.powf(1.0 / p)
            );
        }
    }

    #[test]
    fn conjugate_table_csv_layout() {
        let p = Penalty::power_law(0.5, 2.0).unwrap();
        let table = convex_conjugate(&p, &[0.0, 2.0], 1).unwrap();
        let csv = table.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("a,phi_star,argmax_b"));
        let row: Vec<&str> = lines.nth(1).unwrap().split(',').collect();
        assert_eq!(row.len(), 3);
        assert!((row[0].parse::<f64>().unwrap() - 2.0).abs() < 1e-15);
        assert!((row[1].parse::<f64>().unwrap() - 2.0).abs() < 1e-8);
    }

    #[test]
    fn measure_invariants_are_enforced() {
        assert!(DiscreteMeasure::new(vec![(0.0, 0.5), (1.0, 0.4)]).is_err());
        assert!(DiscreteMeasure::new(vec![(1.0, 0.5), (0.0, 0.5)]).is_err());
        assert!(DiscreteMeasure::new(vec![(0.0, -0.5), (1.0, 1.5)]).is_err());
        assert!(AmbiguitySet::new(vec![]).is_err());
    }
}
