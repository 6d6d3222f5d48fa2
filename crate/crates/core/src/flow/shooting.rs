use super::{FlowError, ImpulsiveFlow, PiecewiseTrajectory};
use crate::system::{norm, ImpulseSchedule, SystemDefinition, Vec2};

/// Controls for the damped Newton solve of `P^m(x) = x`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonOptions {
    pub tol_fp: f64,
    pub max_iterations: usize,
    pub max_halvings: u32,
    pub min_det: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol_fp: 1e-8,
            max_iterations: 50,
            max_halvings: 8,
            min_det: 1e-12,
        }
    }
}

/// A periodic solution found by shooting, with its closed trajectory.
#[derive(Clone, Debug)]
pub struct VerifiedOrbit {
    pub eps: f64,
    pub t0bar: f64,
    pub x0: Vec2,
    pub m: u32,
    pub residual: f64,
    pub iterations: usize,
    pub trajectory: PiecewiseTrajectory,
}

impl ImpulsiveFlow<'_> {
    fn displacement(&self, t0bar: f64, x: Vec2, m: u32, period: f64) -> Result<Vec2, FlowError> {
        let y = self.poincare(t0bar, x, m, period)?;
        Ok([y[0] - x[0], y[1] - x[1]])
    }

    /// Damped Newton on `D(x) = P^m(x) - x` with a central-difference
    /// Jacobian.
    pub fn find_periodic_orbit(
        &self,
        t0bar: f64,
        m: u32,
        period: f64,
        x_guess: Vec2,
        opts: &NewtonOptions,
    ) -> Result<VerifiedOrbit, FlowError> {
        let mut x = x_guess;
        let mut d = self.displacement(t0bar, x, m, period)?;
        let mut res = norm(d);
        let mut iterations = 0;
        while !(res <= opts.tol_fp) {
            if iterations >= opts.max_iterations || !res.is_finite() {
                return Err(FlowError::NewtonDivergence {
                    iterations,
                    residual: res,
                });
            }
            let h = 1e-6_f64.max(1e-4 * norm(x));
            let mut jac = [[0.0; 2]; 2];
            for j in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[j] += h;
                xm[j] -= h;
                let dp = self.displacement(t0bar, xp, m, period)?;
                let dm = self.displacement(t0bar, xm, m, period)?;
                for i in 0..2 {
                    jac[i][j] = (dp[i] - dm[i]) / (2.0 * h);
                }
            }
            let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
            if !(det.abs() >= opts.min_det) {
                return Err(FlowError::SingularJacobian { at: x, det });
            }
            let step = [
                -(jac[1][1] * d[0] - jac[0][1] * d[1]) / det,
                -(-jac[1][0] * d[0] + jac[0][0] * d[1]) / det,
            ];
            let mut lambda = 1.0;
            let mut accepted = None;
            for _ in 0..=opts.max_halvings {
                let trial = [x[0] + lambda * step[0], x[1] + lambda * step[1]];
                if let Ok(dt) = self.displacement(t0bar, trial, m, period) {
                    if norm(dt) < res {
                        accepted = Some((trial, dt));
                        break;
                    }
                }
                lambda *= 0.5;
            }
            iterations += 1;
            let Some((xn, dn)) = accepted else {
                return Err(FlowError::NewtonDivergence {
                    iterations,
                    residual: res,
                });
            };
            x = xn;
            d = dn;
            res = norm(d);
        }
        let trajectory = self.simulate(t0bar, x, m as f64 * period)?;
        Ok(VerifiedOrbit {
            eps: self.eps,
            t0bar,
            x0: x,
            m,
            residual: res,
            iterations,
            trajectory,
        })
    }
}

#[allow(clippy::too_many_arguments)]
pub fn find_periodic_orbit(
    system: &SystemDefinition,
    schedule: &ImpulseSchedule,
    eps: f64,
    t0bar: f64,
    m: u32,
    period: f64,
    x_guess: Vec2,
    tol_fp: f64,
    tol: f64,
) -> Result<VerifiedOrbit, FlowError> {
    let opts = NewtonOptions {
        tol_fp,
        ..NewtonOptions::default()
    };
    ImpulsiveFlow::new(system, schedule, eps, tol)?.find_periodic_orbit(t0bar, m, period, x_guess, &opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{builtin, Parameters};
    use std::f64::consts::PI;

    #[test]
    fn unperturbed_resonant_seed_converges_immediately() {
        let b = builtin("paper-example", &Parameters::new()).unwrap();
        let orbit = find_periodic_orbit(&b.system, &b.schedule, 0.0, PI, 1, 2.0 * PI, [0.5, 0.0], 1e-8, 1e-12).unwrap();
        assert_eq!(orbit.iterations, 0);
        assert!(orbit.residual < 1e-10);
    }

    #[test]
    fn harmonic_orbit_of_reference_example() {
        // With the flow (x2, -x1) the Melnikov pair vanishes at (pi, 1/2).
        let b = builtin("paper-example", &Parameters::new()).unwrap();
        let eps = 1e-3;
        let orbit = find_periodic_orbit(&b.system, &b.schedule, eps, PI, 1, 2.0 * PI, [1.0, 0.0], 1e-9, 1e-12).unwrap();
        assert!(orbit.residual <= 1e-9);
        let end = orbit.trajectory.end();
        assert!(norm([end[0] - orbit.x0[0], end[1] - orbit.x0[1]]) <= 1e-9);
        for (_, x) in orbit.trajectory.sample(200) {
            assert!((norm(x) - 1.0).abs() < 10.0 * eps, "{x:?}");
        }
    }

    #[test]
    fn far_seed_is_pulled_to_the_harmonic_orbit() {
        let b = builtin("paper-example", &Parameters::new()).unwrap();
        let orbit = find_periodic_orbit(
            &b.system,
            &b.schedule,
            1e-2,
            PI,
            1,
            2.0 * PI,
            [10f64.sqrt(), 0.0],
            1e-9,
            1e-10,
        )
        .unwrap();
        assert!((norm(orbit.x0) - 1.0).abs() < 0.05);
    }

    #[test]
    fn rootless_displacement_fails() {
        // P(x) = x + eps (1 + x1^2, x2) has no fixed point.
        let sys = crate::system::make_system("(x1^2 + x2^2)/2", "(0, 0)", 2.0 * PI, [0.0, 0.0]).unwrap();
        let sch = ImpulseSchedule::new(
            2.0 * PI,
            vec![2.0 * PI],
            vec![crate::system::jump_fn(|x, _| [1.0 + x[0] * x[0], x[1]])],
        )
        .unwrap();
        let err = find_periodic_orbit(&sys, &sch, 1e-2, 0.0, 1, 2.0 * PI, [1.0, 0.5], 1e-9, 1e-10).unwrap_err();
        assert!(
            matches!(
                err,
                FlowError::NewtonDivergence { .. } | FlowError::SingularJacobian { .. }
            ),
            "{err:?}"
        );
    }
}
