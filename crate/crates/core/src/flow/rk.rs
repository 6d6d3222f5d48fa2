//! Dormand–Prince 5(4) with Hairer's fourth-order continuous extension.

use super::FlowError;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

pub const MIN_TOL: f64 = 1e-13;
pub const MAX_TOL: f64 = 1e-4;

/// One accepted step with its dense-output coefficients.
#[derive(Clone, Debug)]
pub struct DenseStep<const N: usize> {
    pub t0: f64,
    pub t1: f64,
    pub y0: [f64; N],
    pub y1: [f64; N],
    coeffs: [[f64; N]; 4],
}

impl<const N: usize> DenseStep<N> {
    /// Interpolated state at `t` in `[t0, t1]`.
    pub fn eval(&self, t: f64) -> [f64; N] {
        if t == self.t1 {
            return self.y1;
        }
        if t == self.t0 {
            return self.y0;
        }
        let s = (t - self.t0) / (self.t1 - self.t0);
        let s1 = 1.0 - s;
        let [r2, r3, r4, r5] = &self.coeffs;
        let mut out = [0.0; N];
        for i in 0..N {
            out[i] = self.y0[i] + s * (r2[i] + s1 * (r3[i] + s * (r4[i] + s1 * r5[i])));
        }
        out
    }
}

/// Dense solution of an ODE over `[t_start, t_end]`.
#[derive(Clone, Debug)]
pub struct Trajectory<const N: usize> {
    steps: Vec<DenseStep<N>>,
    t_start: f64,
    y_start: [f64; N],
    tol: f64,
}

impl<const N: usize> Trajectory<N> {
    pub fn steps(&self) -> &[DenseStep<N>] {
        &self.steps
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.steps.last().map_or(self.t_start, |s| s.t1)
    }

    pub fn start(&self) -> [f64; N] {
        self.y_start
    }

    pub fn end(&self) -> [f64; N] {
        self.steps.last().map_or(self.y_start, |s| s.y1)
    }

    /// State at `t`, or `None` outside the span.
    pub fn at(&self, t: f64) -> Option<[f64; N]> {
        if t < self.t_start || t > self.t_end() {
            return None;
        }
        if self.steps.is_empty() || t == self.t_start {
            return Some(self.y_start);
        }
        let idx = self.steps.partition_point(|s| s.t1 < t).min(self.steps.len() - 1);
        Some(self.steps[idx].eval(t))
    }
}

/// Adaptive explicit Runge–Kutta integrator with embedded error control.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Integrator {
    tol: f64,
    pub max_steps: usize,
    /// Upper bound on the step size; `f64::INFINITY` leaves it free.
    pub h_max: f64,
}

/// Zero crossing located by [`Integrator::integrate_until`].
#[derive(Clone, Copy, Debug)]
pub struct EventHit<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
}

struct Stepper<'f, const N: usize, F> {
    f: &'f mut F,
    tol: f64,
    t: f64,
    y: [f64; N],
    k1: [f64; N],
    h: f64,
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

fn finite<const N: usize>(v: &[f64; N]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl<const N: usize, F: FnMut(f64, &[f64; N]) -> [f64; N]> Stepper<'_, N, F> {
    /// Attempts one step of size at most `h_limit`; returns the accepted step.
    fn step(&mut self, h_limit: f64) -> Result<DenseStep<N>, FlowError> {
        let mut bad = 0;
        loop {
            let h = self.h.min(h_limit);
            let min_h = 1e-14 * self.t.abs().max(1.0);
            if h < min_h && h < h_limit {
                return Err(FlowError::StepUnderflow { t: self.t });
            }
            let (t, y, k1) = (self.t, self.y, self.k1);
            let f = &mut *self.f;
            let k2 = f(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]));
            let k3 = f(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
            let k4 = f(t + C4 * h, &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
            let k5 = f(
                t + C5 * h,
                &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            );
            let k6 = f(
                t + h,
                &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
            );
            let y1 = axpy(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
            let t1 = if h == h_limit { t + h_limit } else { t + h };
            let k7 = f(t1, &y1);

            // Error per unit step (capped at per step) keeps the global error
            // roughly proportional to `tol` over long spans.
            let unit = h.min(1.0);
            let mut err: f64 = 0.0;
            for i in 0..N {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.tol * unit * y[i].abs().max(y1[i].abs()).max(1.0);
                err = err.max((e / sc).abs());
            }
            if !err.is_finite() || !finite(&y1) || !finite(&k7) {
                bad += 1;
                if bad > 40 {
                    return Err(FlowError::NonFinite { t });
                }
                self.h = h * 0.25;
                continue;
            }
            if err <= 1.0 {
                let fac = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.25)).clamp(0.2, 5.0)
                };
                self.h = h * fac;
                let mut ydiff = [0.0; N];
                let mut bspl = [0.0; N];
                let mut r4 = [0.0; N];
                let mut r5 = [0.0; N];
                for i in 0..N {
                    ydiff[i] = y1[i] - y[i];
                    bspl[i] = h * k1[i] - ydiff[i];
                    r4[i] = ydiff[i] - h * k7[i] - bspl[i];
                    r5[i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                }
                self.t = t1;
                self.y = y1;
                self.k1 = k7;
                return Ok(DenseStep {
                    t0: t,
                    t1,
                    y0: y,
                    y1,
                    coeffs: [ydiff, bspl, r4, r5],
                });
            }
            self.h = h * (0.9 * err.powf(-0.25)).clamp(0.1, 0.9);
        }
    }
}

impl Integrator {
    pub fn new(tol: f64) -> Result<Self, FlowError> {
        if !(MIN_TOL..=MAX_TOL).contains(&tol) {
            return Err(FlowError::InvalidTolerance(tol));
        }
        Ok(Integrator {
            tol,
            max_steps: 1_000_000,
            h_max: f64::INFINITY,
        })
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    fn initial_step<const N: usize, F: FnMut(f64, &[f64; N]) -> [f64; N]>(
        &self,
        f: &mut F,
        t0: f64,
        y0: &[f64; N],
        f0: &[f64; N],
        span: f64,
    ) -> f64 {
        let scale = |v: &[f64; N]| {
            v.iter()
                .zip(y0)
                .map(|(a, y)| (a / (self.tol * (1.0 + y.abs()))).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let d0 = scale(y0);
        let d1 = scale(f0);
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(span);
        let y1 = axpy(y0, h0, &[(1.0, f0)]);
        let f1 = f(t0 + h0, &y1);
        let mut diff = [0.0; N];
        for i in 0..N {
            diff[i] = f1[i] - f0[i];
        }
        let d2 = scale(&diff) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(span).min(self.h_max)
    }

    /// Integrates `y' = f(t, y)` from `(t0, y0)` to `t1 > t0`, ending exactly
    /// at `t1`.
    pub fn integrate<const N: usize, F>(&self, f: F, t0: f64, y0: [f64; N], t1: f64) -> Result<Trajectory<N>, FlowError>
    where
        F: FnMut(f64, &[f64; N]) -> [f64; N],
    {
        self.run(
            f,
            t0,
            y0,
            t1,
            None::<(fn(f64, &[f64; N]) -> f64, fn(f64, &[f64; N]) -> bool)>,
        )
        .map(|(traj, _)| traj)
    }

    /// Integrates until `event` crosses zero from below at a point where
    /// `accept` holds, or until `t_max`. The crossing time is refined by
    /// bisection on the dense output.
    pub fn integrate_until<const N: usize, F, E, A>(
        &self,
        f: F,
        t0: f64,
        y0: [f64; N],
        t_max: f64,
        event: E,
        accept: A,
    ) -> Result<(Trajectory<N>, Option<EventHit<N>>), FlowError>
    where
        F: FnMut(f64, &[f64; N]) -> [f64; N],
        E: Fn(f64, &[f64; N]) -> f64,
        A: Fn(f64, &[f64; N]) -> bool,
    {
        self.run(f, t0, y0, t_max, Some((event, accept)))
    }

    fn run<const N: usize, F, E, A>(
        &self,
        mut f: F,
        t0: f64,
        y0: [f64; N],
        t1: f64,
        event: Option<(E, A)>,
    ) -> Result<(Trajectory<N>, Option<EventHit<N>>), FlowError>
    where
        F: FnMut(f64, &[f64; N]) -> [f64; N],
        E: Fn(f64, &[f64; N]) -> f64,
        A: Fn(f64, &[f64; N]) -> bool,
    {
        if !finite(&y0) {
            return Err(FlowError::NonFinite { t: t0 });
        }
        let mut traj = Trajectory {
            steps: Vec::new(),
            t_start: t0,
            y_start: y0,
            tol: self.tol,
        };
        if !(t1 > t0) {
            return Ok((traj, None));
        }
        let k1 = f(t0, &y0);
        if !finite(&k1) {
            return Err(FlowError::NonFinite { t: t0 });
        }
        let h = self.initial_step(&mut f, t0, &y0, &k1, t1 - t0);
        let mut stepper = Stepper {
            f: &mut f,
            tol: self.tol,
            t: t0,
            y: y0,
            k1,
            h,
        };
        let mut g_prev = event.as_ref().map(|(g, _)| g(t0, &y0));
        while stepper.t < t1 {
            if traj.steps.len() >= self.max_steps {
                return Err(FlowError::TooManySteps { t: stepper.t });
            }
            stepper.h = stepper.h.min(self.h_max);
            let remaining = t1 - stepper.t;
            let step = stepper.step(remaining)?;
            if let (Some((g, accept)), Some(prev)) = (event.as_ref(), g_prev) {
                let g_new = g(step.t1, &step.y1);
                g_prev = Some(g_new);
                if prev < 0.0 && g_new >= 0.0 {
                    let (t_hit, y_hit) = locate(&step, g);
                    if accept(t_hit, &y_hit) {
                        traj.steps.push(step);
                        return Ok((traj, Some(EventHit { t: t_hit, y: y_hit })));
                    }
                }
            }
            traj.steps.push(step);
        }
        Ok((traj, None))
    }
}

/// Bisection for the zero of `g` along the dense output of one step.
fn locate<const N: usize>(step: &DenseStep<N>, g: &impl Fn(f64, &[f64; N]) -> f64) -> (f64, [f64; N]) {
    let (mut a, mut b) = (step.t0, step.t1);
    let tol = 1e-13 * (1.0 + b.abs());
    while b - a > tol {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if g(m, &step.eval(m)) < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    // Linear interpolation inside the final bracket.
    let ga = g(a, &step.eval(a));
    let gb = g(b, &step.eval(b));
    let t = if gb != ga { a - ga * (b - a) / (gb - ga) } else { b };
    let t = t.clamp(a, b);
    (t, step.eval(t))
}
