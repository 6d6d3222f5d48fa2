//! Time integration, the impulsive simulator and Poincaré-map shooting.

mod impulsive;
mod rk;
mod shooting;

pub use impulsive::{poincare_iterate, simulate_impulsive, ImpulsiveFlow, Jump, PiecewiseTrajectory};
pub use rk::{DenseStep, EventHit, Integrator, Trajectory, MAX_TOL, MIN_TOL};
pub use shooting::{find_periodic_orbit, NewtonOptions, VerifiedOrbit};

use crate::system::Vec2;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum FlowError {
    #[error("integrator tolerance {0:e} outside [1e-13, 1e-4]")]
    InvalidTolerance(f64),
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("step budget exhausted at t = {t}")]
    TooManySteps { t: f64 },
    #[error("integration failed in segment {index}: {source}")]
    Segment {
        index: usize,
        #[source]
        source: Box<FlowError>,
    },
    #[error("duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("Newton iteration diverged after {iterations} iterations (residual {residual:e})")]
    NewtonDivergence { iterations: usize, residual: f64 },
    #[error("singular shooting Jacobian at {at:?} (det {det:e})")]
    SingularJacobian { at: Vec2, det: f64 },
}

/// Convenience driver for the autonomous planar field `f` of `system`.
pub fn integrate(
    system: &crate::system::SystemDefinition,
    x0: Vec2,
    t_span: (f64, f64),
    tol: f64,
) -> Result<Trajectory<2>, FlowError> {
    Integrator::new(tol)?.integrate(|_, x: &Vec2| system.vector_field(*x), t_span.0, x0, t_span.1)
}
