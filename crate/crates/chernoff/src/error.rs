//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value {value} sampled at node x = {node}")]
    NonFiniteSample { node: f64, value: f64 },

    #[error("window [{lo}, {hi}] is not contained in the grid span [{span_lo}, {span_hi}]")]
    WindowOutsideSpan {
        lo: f64,
        hi: f64,
        span_lo: f64,
        span_hi: f64,
    },

    #[error("shift by {steps} steps exceeds the grid size {count}")]
    ShiftTooLarge { steps: i64, count: usize },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid penalty: {0}")]
    InvalidPenalty(String),

    #[error("non-finite integrand {value} at atom x = {atom}")]
    NonFiniteAtAtom { atom: f64, value: f64 },

    #[error("conjugate target appears unbounded at a = {a} (missing superlinear growth)")]
    UnboundedConjugate { a: f64 },

    #[error("CFL condition violated: sigma_max^2 h / delta^2 = {ratio} > 1 (scheme.sigma_max = {sigma_max}, h = {h}, delta = {delta})")]
    CflViolation {
        sigma_max: f64,
        h: f64,
        delta: f64,
        ratio: f64,
    },

    #[error("grid spacing {actual} does not match the scheme's spatial step {expected}")]
    GridSpacingMismatch { expected: f64, actual: f64 },

    #[error("invalid scheme parameters: {0}")]
    InvalidScheme(String),

    #[error("action list is empty")]
    EmptyActionList,

    #[error("every admissible shift is penalized to infinity")]
    AllShiftsPenalized,

    #[error("tridiagonal solve residual {residual} exceeds the bound {bound}")]
    SolverResidual { residual: f64, bound: f64 },

    #[error("operator-exponential series did not reach the tail bound within {terms} terms")]
    SeriesDiverged { terms: usize },

    #[error("one-step operator produced a non-positive value {value} under exponential tilting")]
    NonPositiveTilt { value: f64 },

    #[error("unbounded Hamiltonian supremum at f'' = {curvature}")]
    UnboundedHamiltonian { curvature: f64 },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid refinement ladder: {0}")]
    InvalidLadder(String),

    #[error("empty sequence of grid functions")]
    EmptySequence,

    #[error("schemes are not comparable: generator probes disagree by {max_gap} at probe {probe} (tolerance {tol})")]
    IncomparableSchemes {
        probe: String,
        max_gap: f64,
        tol: f64,
    },

    #[error("Hopf-Lax argmax y = {argmax} lies on the search window boundary; enlarge y_window")]
    ArgmaxOnBoundary { argmax: f64 },

    #[error("ODE integrator failed to converge to rtol = {rtol} after {halvings} step halvings")]
    OdeNoConvergence { rtol: f64, halvings: usize },

    #[error("step {index} failed: {source}")]
    StepFailed {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}
