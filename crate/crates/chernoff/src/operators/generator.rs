//! Closed-form generator descriptors and the consistency residual
//! `sup_K |(I f - f) / h - A f|`.

use crate::error::{Error, Result};
use crate::functions::SmoothFn;
use crate::grid::{sample_function, CompactWindow, Grid1d};
use crate::sublinear::{conjugate_at, expect_sublinear, penalized_sup, AmbiguitySet, Penalty};

use super::{ControlAction, DriftFn, SchemeStep, StepKind, Transport};

/// Closed form of the generator on smooth functions, expressed through
/// `(f, f', f'')` samples.
#[derive(Debug, Clone)]
pub enum GeneratorDescriptor {
    /// `sup_{sigma >= 0} (sigma^2/2 f'' - phi(sigma))`.
    HjbSigma { penalty: Penalty },
    /// `max over actions of (a/2 f'' + b f' - cost)`.
    FiniteActions { actions: Vec<ControlAction> },
    /// `1/2 E[(scale xi)^2 f''] + f' psi`.
    DriftDiffusion {
        drift: DriftFn,
        noise_scale: f64,
        noise: AmbiguitySet,
    },
    /// `1/2 E[scale^2 xi^2 f'' + gamma (f' xi)^2] + f' psi`.
    TiltedDriftDiffusion {
        drift: DriftFn,
        noise_scale: f64,
        gamma: f64,
        noise: AmbiguitySet,
    },
    /// `phi*(|f'|)` around an identity transport with a centered base kernel.
    WassersteinPenalty { penalty: Penalty },
    /// `sup_theta theta f''`.
    ThetaEnvelope { thetas: Vec<f64> },
}

impl SchemeStep {
    /// The natural closed-form descriptor of this step's generator.
    pub fn descriptor(&self) -> Result<GeneratorDescriptor> {
        match self.kind() {
            StepKind::FdHjb(p) => Ok(GeneratorDescriptor::HjbSigma { penalty: p.penalty }),
            StepKind::SublinearEuler(p) => Ok(GeneratorDescriptor::DriftDiffusion {
                drift: p.drift.clone(),
                noise_scale: p.noise_scale,
                noise: p.noise.clone(),
            }),
            StepKind::ExpTilt { alpha, inner } => match inner.kind() {
                StepKind::SublinearEuler(p) => Ok(GeneratorDescriptor::TiltedDriftDiffusion {
                    drift: p.drift.clone(),
                    noise_scale: p.noise_scale,
                    gamma: alpha * p.noise_scale * p.noise_scale,
                    noise: p.noise.clone(),
                }),
                other => Err(Error::InvalidScheme(format!(
                    "no closed-form descriptor for a tilt over a {} step",
                    other.name()
                ))),
            },
            StepKind::Control(p) => Ok(GeneratorDescriptor::FiniteActions {
                actions: p.actions.clone(),
            }),
            StepKind::WassersteinShift(p) => {
                let centered =
                    matches!(p.transport, Transport::Identity) && p.base_measure.atoms() == [(0.0, 1.0)];
                if !centered {
                    return Err(Error::InvalidScheme(
                        "wasserstein descriptor needs the identity transport and a unit mass at 0"
                            .into(),
                    ));
                }
                Ok(GeneratorDescriptor::WassersteinPenalty { penalty: p.penalty })
            }
            StepKind::ResolventSup(p) | StepKind::Yosida(p) => Ok(GeneratorDescriptor::ThetaEnvelope {
                thetas: p.thetas.clone(),
            }),
        }
    }
}

/// Evaluates the descriptor's closed form at `x`.
pub fn hamiltonian_eval(desc: &GeneratorDescriptor, f: &SmoothFn, x: f64) -> Result<f64> {
    match desc {
        GeneratorDescriptor::HjbSigma { penalty } => {
            let curvature = f.second_deriv(x);
            if curvature > 0.0 && !penalty.superlinear_in_square() {
                return Err(Error::UnboundedHamiltonian { curvature });
            }
            let (v, _) = penalized_sup(penalty, |s| 0.5 * curvature * s * s, 1)
                .ok_or(Error::UnboundedHamiltonian { curvature })?;
            Ok(v)
        }
        GeneratorDescriptor::FiniteActions { actions } => {
            let d1 = f.deriv(x);
            let d2 = f.second_deriv(x);
            Ok(actions
                .iter()
                .map(|act| 0.5 * act.a * d2 + act.b * d1 - act.cost)
                .fold(f64::NEG_INFINITY, f64::max))
        }
        GeneratorDescriptor::DriftDiffusion {
            drift,
            noise_scale,
            noise,
        } => {
            let d1 = f.deriv(x);
            let d2 = f.second_deriv(x);
            let s2 = noise_scale * noise_scale;
            let diffusion = expect_sublinear(noise, |y| 0.5 * s2 * y * y * d2)?;
            Ok(diffusion + d1 * drift.eval(x))
        }
        GeneratorDescriptor::TiltedDriftDiffusion {
            drift,
            noise_scale,
            gamma,
            noise,
        } => {
            let d1 = f.deriv(x);
            let d2 = f.second_deriv(x);
            let s2 = noise_scale * noise_scale;
            let principal =
                expect_sublinear(noise, |y| 0.5 * (s2 * y * y * d2 + gamma * (d1 * y) * (d1 * y)))?;
            Ok(principal + d1 * drift.eval(x))
        }
        GeneratorDescriptor::WassersteinPenalty { penalty } => {
            let (_, v, _) = conjugate_at(penalty, f.deriv(x).abs(), 1)?;
            Ok(v)
        }
        GeneratorDescriptor::ThetaEnvelope { thetas } => {
            let d2 = f.second_deriv(x);
            Ok(thetas
                .iter()
                .map(|&t| t * d2)
                .fold(f64::NEG_INFINITY, f64::max))
        }
    }
}

/// `sup over window nodes of |(I f - f) / h - A f|` with `f` sampled on the
/// given grid.
pub fn generator_residual(
    step: &SchemeStep,
    desc: &GeneratorDescriptor,
    f: &SmoothFn,
    grid: Grid1d,
    w: &CompactWindow,
) -> Result<f64> {
    let sampled = sample_function(f.as_fn(), grid)?;
    let stepped = step.apply(&sampled)?;
    let inv_h = 1.0 / step.h();
    let mut worst = 0.0_f64;
    for i in grid.indices_in(w.lo, w.hi) {
        let x = grid.node(i);
        let discrete = (stepped.values()[i] - sampled.values()[i]) * inv_h;
        let closed = hamiltonian_eval(desc, f, x)?;
        let r = (discrete - closed).abs();
        if r > worst {
            worst = r;
        }
    }
    Ok(worst)
}
