//! Independent ground-truth evaluators for the acceptance tests: heat
//! kernels by quadrature, the Hopf-Lax envelope, and high-accuracy ODE
//! flows. Nothing here shares numerics with the operator implementations
//! beyond the grid module.

use crate::error::{Error, Result};
use crate::functions::SmoothFn;
use crate::grid::{CompactWindow, Grid1d};
use crate::sublinear::Penalty;

/// Values of an oracle on the window nodes of a consumer grid.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
    pub method: String,
    /// Internal mesh of the oracle; kept at least four times finer than the
    /// consumer grid.
    pub internal_resolution: f64,
}

impl OracleResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,value\n");
        for (x, v) in self.xs.iter().zip(&self.values) {
            out.push_str(&format!("{x:.16e},{v:.16e}\n"));
        }
        out
    }

    pub fn value_at_index(&self, i: usize) -> f64 {
        self.values[i]
    }
}

fn window_nodes(grid: &Grid1d, w: &CompactWindow) -> Vec<f64> {
    grid.indices_in(w.lo, w.hi).map(|i| grid.node(i)).collect()
}

/// `E[f(x + sqrt(sigma^2 t) Z)]` with standard normal `Z`, by composite
/// Simpson quadrature truncated at eight standard deviations (tail mass
/// below 1e-15).
pub fn gaussian_heat(
    f: impl Fn(f64) -> f64,
    sigma: f64,
    t: f64,
    w: &CompactWindow,
    grid: &Grid1d,
) -> Result<OracleResult> {
    if sigma < 0.0 || t < 0.0 {
        return Err(Error::InvalidScheme(format!(
            "gaussian_heat needs sigma, t >= 0, got sigma = {sigma}, t = {t}"
        )));
    }
    let xs = window_nodes(grid, w);
    let std = (sigma * sigma * t).sqrt();
    if std == 0.0 {
        let values = xs.iter().map(|&x| f(x)).collect();
        return Ok(OracleResult {
            xs,
            values,
            method: "identity (sigma^2 t = 0)".into(),
            internal_resolution: 0.0,
        });
    }
    // quadrature mesh in z-units: 1e-3, refined if the consumer grid is finer
    let mesh = 1e-3_f64.min(grid.spacing() / (4.0 * std));
    let half_steps = (8.0 / mesh).ceil() as usize;
    let n = 2 * half_steps; // even interval count for Simpson
    let zh = 8.0 / half_steps as f64; // actual step after rounding
    let norm = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut values = Vec::with_capacity(xs.len());
    for &x in &xs {
        let integrand = |z: f64| f(x + std * z) * norm(z);
        let mut acc = integrand(-8.0) + integrand(8.0);
        for k in 1..n {
            let z = -8.0 + zh * k as f64;
            acc += if k % 2 == 1 { 4.0 } else { 2.0 } * integrand(z);
        }
        values.push(acc * zh / 3.0);
    }
    Ok(OracleResult {
        xs,
        values,
        method: format!("simpson gaussian convolution, sigma = {sigma}, t = {t}"),
        internal_resolution: zh * std,
    })
}

/// Heat flow under an interval of variances for convex data: Gaussian
/// smoothing preserves convexity, so the variance supremum is attained at
/// `sigma_hi` in every step and the semigroup reduces to `gaussian_heat`
/// with the top variance. A midpoint spot-check rejects non-convex data.
pub fn g_heat_convex(
    f: impl Fn(f64) -> f64,
    sigma_lo: f64,
    sigma_hi: f64,
    t: f64,
    w: &CompactWindow,
    grid: &Grid1d,
) -> Result<OracleResult> {
    if !(0.0 <= sigma_lo && sigma_lo <= sigma_hi) {
        return Err(Error::InvalidScheme(format!(
            "need 0 <= sigma_lo <= sigma_hi, got [{sigma_lo}, {sigma_hi}]"
        )));
    }
    // spot-check convexity on a widened window
    let reach = 8.0 * (sigma_hi * sigma_hi * t).sqrt();
    let probe = w.widen(reach);
    let mesh = grid.spacing().min(1e-2);
    let steps = ((probe.hi - probe.lo) / mesh) as usize;
    for k in 1..steps {
        let x = probe.lo + mesh * k as f64;
        let mid = f(x);
        let avg = 0.5 * (f(x - mesh) + f(x + mesh));
        if mid > avg + 1e-9 {
            return Err(Error::InvalidScheme(format!(
                "g_heat_convex needs convex data; midpoint check fails at x = {x}"
            )));
        }
    }
    let mut r = gaussian_heat(f, sigma_hi, t, w, grid)?;
    r.method = format!("g-heat on convex data, sigma in [{sigma_lo}, {sigma_hi}], t = {t}");
    Ok(r)
}

/// `sup_y (f(x + t y) - phi(y) t)` by brute force over the `y` mesh followed
/// by golden-section refinement around the discrete argmax. Penalties are
/// read at `|y|`.
pub fn hopf_lax(
    f: impl Fn(f64) -> f64,
    penalty: &Penalty,
    t: f64,
    x: f64,
    y_window: &CompactWindow,
    mesh: f64,
) -> Result<f64> {
    if t == 0.0 {
        return Ok(f(x));
    }
    let obj = |y: f64| {
        let p = penalty.eval(y.abs());
        if p.is_infinite() {
            f64::NEG_INFINITY
        } else {
            f(x + t * y) - p * t
        }
    };
    let n = ((y_window.hi - y_window.lo) / mesh).ceil() as usize;
    let step = (y_window.hi - y_window.lo) / n as f64;
    let mut best_k = 0;
    let mut best = f64::NEG_INFINITY;
    for k in 0..=n {
        let v = obj(y_window.lo + step * k as f64);
        if v > best {
            best = v;
            best_k = k;
        }
    }
    if best_k == 0 || best_k == n {
        return Err(Error::ArgmaxOnBoundary {
            argmax: y_window.lo + step * best_k as f64,
        });
    }
    // boundary must be dominated, not merely smaller
    let edge = obj(y_window.lo).max(obj(y_window.hi));
    if !(best >= edge + 1e-6) {
        return Err(Error::ArgmaxOnBoundary {
            argmax: y_window.lo + step * best_k as f64,
        });
    }
    // one golden-section pass on the bracketing cells
    let mut a = y_window.lo + step * (best_k - 1) as f64;
    let mut b = y_window.lo + step * (best_k + 1) as f64;
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = obj(x1);
    let mut f2 = obj(x2);
    while b - a > 1e-12 {
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
    Ok(best.max(obj(0.5 * (a + b))))
}

/// Solves `u' = psi(u), u(0) = x` by classical fourth-order one-step
/// integration, halving the step until two resolutions agree to `rtol`.
pub fn ode_flow(psi: impl Fn(f64) -> f64, t: f64, x: f64, rtol: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::InvalidScheme(format!("ode_flow needs t >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(x);
    }
    let run = |steps: usize| -> f64 {
        let h = t / steps as f64;
        let mut u = x;
        for _ in 0..steps {
            let k1 = psi(u);
            let k2 = psi(u + 0.5 * h * k1);
            let k3 = psi(u + 0.5 * h * k2);
            let k4 = psi(u + h * k3);
            u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        u
    };
    let mut steps = ((t / 0.1).ceil() as usize).max(1);
    let mut prev = run(steps);
    for _ in 0..20 {
        steps *= 2;
        let next = run(steps);
        if (next - prev).abs() < rtol {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::OdeNoConvergence { rtol, halvings: 20 })
}

/// Hopf-Lax limit of the tilted schemes: `sup_y (f(x + t y) - phi(y) t)` per
/// window node, with the search window expanded until the boundary is
/// dominated.
pub fn large_deviations_limit(
    f: &SmoothFn,
    penalty: &Penalty,
    t: f64,
    w: &CompactWindow,
    grid: &Grid1d,
) -> Result<OracleResult> {
    let xs = window_nodes(grid, w);
    let mesh = 1e-3;
    let mut values = Vec::with_capacity(xs.len());
    for &x in &xs {
        let mut half_span = 2.0_f64;
        let v = loop {
            let yw = CompactWindow::new(-half_span, half_span)?;
            match hopf_lax(f.as_fn(), penalty, t, x, &yw, mesh) {
                Ok(v) => break v,
                Err(Error::ArgmaxOnBoundary { .. }) if half_span < 1024.0 => {
                    half_span *= 2.0;
                }
                Err(e) => return Err(e),
            }
        };
        values.push(v);
    }
    Ok(OracleResult {
        xs,
        values,
        method: format!("hopf-lax envelope, t = {t}"),
        internal_resolution: mesh,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::gaussian_bump;
    use crate::sublinear::conjugate_at;

    fn setup() -> (Grid1d, CompactWindow) {
        (
            Grid1d::spanning(-4.0, 4.0, 0.05).unwrap(),
            CompactWindow::new(-2.0, 2.0).unwrap(),
        )
    }

    #[test]
    fn gaussian_heat_degenerate_cases() {
        let (g, w) = setup();
        let f = |x: f64| x.cos();
        for (sigma, t) in [(1.0, 0.0), (0.0, 0.7)] {
            let r = gaussian_heat(f, sigma, t, &w, &g).unwrap();
            for (x, v) in r.xs.iter().zip(&r.values) {
                assert_eq!(*v, f(*x));
            }
        }
    }

    #[test]
    fn gaussian_heat_matches_closed_form_convolution() {
        // exp(-x^2) smoothed with variance sigma^2 t = 1/2 gives
        // exp(-x^2/2) / sqrt(2)
        let (g, w) = setup();
        let r = gaussian_heat(|x| (-x * x).exp(), 1.0, 0.5, &w, &g).unwrap();
        for (x, v) in r.xs.iter().zip(&r.values) {
            let exact = (-x * x / 2.0).exp() / 2.0_f64.sqrt();
            assert!((v - exact).abs() < 1e-8, "x = {x}: {v} vs {exact}");
        }
    }

    #[test]
    fn gaussian_heat_is_monotone_and_fixes_constants() {
        let (g, w) = setup();
        let r = gaussian_heat(|_| 3.5, 1.0, 0.4, &w, &g).unwrap();
        for v in &r.values {
            assert!((v - 3.5).abs() < 1e-10);
        }
        let lo = gaussian_heat(|x: f64| x.sin(), 1.0, 0.4, &w, &g).unwrap();
        let hi = gaussian_heat(|x: f64| x.sin() + 0.25, 1.0, 0.4, &w, &g).unwrap();
        for (a, b) in lo.values.iter().zip(&hi.values) {
            assert!(a < b);
        }
    }

    #[test]
    fn gaussian_heat_semigroup_composition() {
        // smoothing by 0.25 twice equals smoothing by 0.5; the intermediate
        // state uses the convolution identity
        // exp(-x^2) * N(0, s) = exp(-x^2 / (1 + 2s)) / sqrt(1 + 2s)
        let (g, w) = setup();
        let f = |x: f64| (-x * x).exp();
        let direct = gaussian_heat(f, 1.0, 0.5, &w, &g).unwrap();
        let smoothed_quarter = |x: f64| (-x * x / 1.5).exp() / 1.5_f64.sqrt();
        let composed = gaussian_heat(smoothed_quarter, 1.0, 0.25, &w, &g).unwrap();
        for (a, b) in direct.values.iter().zip(&composed.values) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn g_heat_convex_second_moment_identity() {
        let (g, w) = setup();
        let r = g_heat_convex(|x| x * x, 0.5, 1.0, 0.25, &w, &g).unwrap();
        for (x, v) in r.xs.iter().zip(&r.values) {
            assert!((v - (x * x + 0.25)).abs() < 1e-8);
        }
    }

    #[test]
    fn g_heat_linear_data_is_harmonic() {
        let (g, w) = setup();
        let r = g_heat_convex(|x| 2.0 * x - 1.0, 0.3, 0.9, 0.5, &w, &g).unwrap();
        for (x, v) in r.xs.iter().zip(&r.values) {
            assert!((v - (2.0 * x - 1.0)).abs() < 1e-8);
        }
    }

    #[test]
    fn g_heat_degenerate_interval_reduces_to_gaussian() {
        let (g, w) = setup();
        let a = g_heat_convex(|x| x * x, 0.7, 0.7, 0.3, &w, &g).unwrap();
        let b = gaussian_heat(|x| x * x, 0.7, 0.3, &w, &g).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn g_heat_rejects_nonconvex_data() {
        let (g, w) = setup();
        assert!(g_heat_convex(|x: f64| x.sin(), 0.5, 1.0, 0.25, &w, &g).is_err());
    }

    #[test]
    fn hopf_lax_cases() {
        let p = Penalty::quadratic(0.5).unwrap();
        let yw = CompactWindow::new(-4.0, 4.0).unwrap();
        // t = 0 returns the data
        assert_eq!(hopf_lax(|x| x * x - 3.0, &p, 0.0, 1.5, &yw, 1e-3).unwrap(), -0.75);
        // constants are fixed points
        let v = hopf_lax(|_| 2.5, &p, 1.0, 0.0, &yw, 1e-3).unwrap();
        assert!((v - 2.5).abs() < 1e-10);
        // sup_y(-(t y)^2 - y^2/2) = 0 at y = 0
        let v = hopf_lax(|z| -z * z, &p, 1.0, 0.0, &yw, 1e-3).unwrap();
        assert!(v.abs() < 1e-10);
        assert!(v >= -1e-12, "hopf-lax must dominate the y = 0 candidate");
    }

    #[test]
    fn hopf_lax_rejects_boundary_argmax() {
        let p = Penalty::quadratic(0.5).unwrap();
        let yw = CompactWindow::new(-0.1, 0.1).unwrap();
        // slope exceeds what the tiny window can absorb
        assert!(matches!(
            hopf_lax(|x| 5.0 * x, &p, 1.0, 0.0, &yw, 1e-3),
            Err(Error::ArgmaxOnBoundary { .. })
        ));
    }

    #[test]
    fn ode_flow_cases() {
        assert_eq!(ode_flow(|_| 0.0, 3.0, 1.25, 1e-10).unwrap(), 1.25);
        assert_eq!(ode_flow(|u| -u, 0.0, 0.7, 1e-10).unwrap(), 0.7);
        // closed form: u' = -tanh(u), u(0) = 1 has u(t) = asinh(sinh(1) e^{-t})
        let got = ode_flow(|u| -u.tanh(), 1.0, 1.0, 1e-10).unwrap();
        let exact = (1.0_f64.sinh() * (-1.0_f64).exp()).asinh();
        assert!((got - exact).abs() < 1e-9, "{got} vs {exact}");
    }

    #[test]
    fn ode_flow_property() {
        let psi = |u: f64| 0.5 * (1.0 - u * u).clamp(-1.0, 1.0);
        let rtol = 1e-10;
        let a = ode_flow(psi, 0.7 + 0.6, 0.2, rtol).unwrap();
        let mid = ode_flow(psi, 0.7, 0.2, rtol).unwrap();
        let b = ode_flow(psi, 0.6, mid, rtol).unwrap();
        assert!((a - b).abs() < 10.0 * rtol);
    }

    #[test]
    fn large_deviations_bump() {
        // rate function of the Rademacher law: phi(y) = y^2 / 2, built by
        // conjugating z^2 / 2 with the conjugate machinery as an oracle
        let half_square = Penalty::quadratic(0.5).unwrap();
        let (_, at2, _) = conjugate_at(&half_square, 2.0, 1).unwrap();
        assert!((at2 - 2.0).abs() < 1e-8);

        let g = Grid1d::spanning(-2.0, 2.0, 0.25).unwrap();
        let w = CompactWindow::new(-1.0, 1.0).unwrap();
        let f = gaussian_bump(0.0, 1.0, 1.0);
        let r = large_deviations_limit(&f, &half_square, 1.0, &w, &g).unwrap();
        // at x = 0 the envelope tops out at the bump height
        let i0 = r.xs.iter().position(|&x| x == 0.0).unwrap();
        assert!((r.values[i0] - 1.0).abs() < 1e-9);

        let zero = crate::functions::constant(0.0);
        let r = large_deviations_limit(&zero, &half_square, 1.0, &w, &g).unwrap();
        assert!(r.values.iter().all(|v| v.abs() < 1e-10));
    }
}
