//! Named closed-form test functions with first and second derivatives.
//!
//! Generator checks need `f`, `f'` and `f''` as exact closed forms, so the
//! admissible initial data is a fixed library rather than arbitrary
//! expressions.

use std::fmt;
use std::sync::Arc;

type Scalar = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A scalar function bundled with its first two derivatives.
#[derive(Clone)]
pub struct SmoothFn {
    pub name: String,
    f: Scalar,
    df: Scalar,
    d2f: Scalar,
}

impl fmt::Debug for SmoothFn {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(fm, "SmoothFn({})", self.name)
    }
}

impl SmoothFn {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            f: Arc::new(f),
            df: Arc::new(df),
            d2f: Arc::new(d2f),
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    #[inline]
    pub fn deriv(&self, x: f64) -> f64 {
        (self.df)(x)
    }

    #[inline]
    pub fn second_deriv(&self, x: f64) -> f64 {
        (self.d2f)(x)
    }

    pub fn as_fn(&self) -> impl Fn(f64) -> f64 + '_ {
        move |x| (self.f)(x)
    }
}

/// `h * exp(-((x - c) / w)^2)`.
pub fn gaussian_bump(center: f64, width: f64, height: f64) -> SmoothFn {
    let c = center;
    let w2 = width * width;
    SmoothFn::new(
        format!("gaussian_bump(center={center}, width={width}, height={height})"),
        move |x| height * (-(x - c) * (x - c) / w2).exp(),
        move |x| {
            let u = x - c;
            height * (-u * u / w2).exp() * (-2.0 * u / w2)
        },
        move |x| {
            let u = x - c;
            height * (-u * u / w2).exp() * (4.0 * u * u / (w2 * w2) - 2.0 / w2)
        },
    )
}

/// `sin(a x) * exp(-x^2 / w)`.
pub fn modulated_gaussian(freq: f64, width: f64) -> SmoothFn {
    let a = freq;
    let w = width;
    SmoothFn::new(
        format!("modulated_gaussian(freq={freq}, width={width})"),
        move |x| (a * x).sin() * (-x * x / w).exp(),
        move |x| {
            let e = (-x * x / w).exp();
            e * (a * (a * x).cos() - (2.0 * x / w) * (a * x).sin())
        },
        move |x| {
            let e = (-x * x / w).exp();
            let s = (a * x).sin();
            let c = (a * x).cos();
            e * ((4.0 * x * x / (w * w) - 2.0 / w - a * a) * s - (4.0 * a * x / w) * c)
        },
    )
}

/// `clamp(slope * x, -clip, clip)`; derivatives taken piecewise.
pub fn clipped_linear(slope: f64, clip: f64) -> SmoothFn {
    SmoothFn::new(
        format!("clipped_linear(slope={slope}, clip={clip})"),
        move |x| (slope * x).clamp(-clip, clip),
        move |x| {
            if (slope * x).abs() < clip {
                slope
            } else {
                0.0
            }
        },
        |_| 0.0,
    )
}

/// `x^2`; unbounded, for convex-data runs on finite grids.
pub fn quadratic() -> SmoothFn {
    SmoothFn::new("quadratic", |x| x * x, |x| 2.0 * x, |_| 2.0)
}

pub fn constant(value: f64) -> SmoothFn {
    SmoothFn::new(format!("constant({value})"), move |_| value, |_| 0.0, |_| 0.0)
}

/// The fixed probe set used to decide whether two schemes share a generator:
/// Gaussians and modulated Gaussians of varied width and center.
pub fn comparability_probes() -> Vec<SmoothFn> {
    vec![
        gaussian_bump(0.0, 1.0, 1.0),
        gaussian_bump(0.5, 1.0, 1.0),
        gaussian_bump(-0.7, 2.0, 1.0),
        gaussian_bump(0.0, 0.5, 0.8),
        modulated_gaussian(1.0, 8.0),
        modulated_gaussian(2.0, 4.0),
        modulated_gaussian(0.5, 2.0),
        modulated_gaussian(3.0, 8.0),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    // independent oracle: fourth-order central finite differences
    fn fd1(f: &SmoothFn, x: f64) -> f64 {
        let h = 1e-5;
        (-f.eval(x + 2.0 * h) + 8.0 * f.eval(x + h) - 8.0 * f.eval(x - h) + f.eval(x - 2.0 * h))
            / (12.0 * h)
    }

    fn fd2(f: &SmoothFn, x: f64) -> f64 {
        let h = 1e-4;
        (-f.eval(x + 2.0 * h) + 16.0 * f.eval(x + h) - 30.0 * f.eval(x)
            + 16.0 * f.eval(x - h)
            - f.eval(x - 2.0 * h))
            / (12.0 * h * h)
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let fns = [
            gaussian_bump(0.3, 1.4, 2.0),
            modulated_gaussian(1.0, 8.0),
            modulated_gaussian(2.5, 3.0),
            quadratic(),
            constant(4.2),
        ];
        for f in &fns {
            for i in -20..=20 {
                let x = i as f64 * 0.17;
                assert!(
                    (f.deriv(x) - fd1(f, x)).abs() < 1e-6,
                    "{}: f'({x}) = {} vs fd {}",
                    f.name,
                    f.deriv(x),
                    fd1(f, x)
                );
                assert!(
                    (f.second_deriv(x) - fd2(f, x)).abs() < 1e-4,
                    "{}: f''({x}) = {} vs fd {}",
                    f.name,
                    f.second_deriv(x),
                    fd2(f, x)
                );
            }
        }
    }

    #[test]
    fn sine_times_gaussian_special_case() {
        // sin(x) exp(-x^2/8) is modulated_gaussian(1, 8)
        let f = modulated_gaussian(1.0, 8.0);
        let x = 1.3_f64;
        let expect = x.sin() * (-x * x / 8.0).exp();
        assert!((f.eval(x) - expect).abs() < 1e-15);
    }
}
