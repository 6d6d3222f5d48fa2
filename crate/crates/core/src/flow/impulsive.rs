use super::{FlowError, Integrator, Trajectory};
use crate::system::{ImpulseSchedule, SystemDefinition, Vec2};

/// One applied impulse: the left limit and the state after the jump.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct Jump {
    pub time: f64,
    pub k: i64,
    pub map_index: usize,
    pub before: Vec2,
    pub after: Vec2,
}

/// Solution of the impulsive system, split at the impulse times.
///
/// Segment `i` ends at jump `i` (when that jump exists). Evaluation at a jump
/// time gives the left limit.
#[derive(Clone, Debug)]
pub struct PiecewiseTrajectory {
    segments: Vec<Trajectory<2>>,
    jumps: Vec<Jump>,
    eps: f64,
    t_start: f64,
    t_end: f64,
    x_start: Vec2,
    x_end: Vec2,
}

impl PiecewiseTrajectory {
    pub fn segments(&self) -> &[Trajectory<2>] {
        &self.segments
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn start(&self) -> Vec2 {
        self.x_start
    }

    /// Right limit at the end time.
    pub fn end(&self) -> Vec2 {
        self.x_end
    }

    /// Left-continuous state at `t`, `None` outside `[t_start, t_end]`.
    pub fn at(&self, t: f64) -> Option<Vec2> {
        if t < self.t_start || t > self.t_end {
            return None;
        }
        if t == self.t_start {
            return Some(self.x_start);
        }
        // First segment whose end is at or after t.
        let idx = self.segments.partition_point(|s| s.t_end() < t);
        match self.segments.get(idx) {
            Some(seg) => seg.at(t.max(seg.t_start())),
            // Only reachable when the final jump sits exactly at t_end.
            None => self.jumps.last().map(|j| j.before),
        }
    }

    /// Right limit at `t`: the post-jump state at impulse times.
    pub fn right_limit(&self, t: f64) -> Option<Vec2> {
        if t == self.t_end {
            return Some(self.x_end);
        }
        if let Some(j) = self.jumps.iter().find(|j| j.time == t) {
            return Some(j.after);
        }
        self.at(t)
    }

    /// `n + 1` evenly spaced (time, left-limit state) samples.
    pub fn sample(&self, n: usize) -> Vec<(f64, Vec2)> {
        let n = n.max(1);
        (0..=n)
            .map(|i| {
                let t = if i == n {
                    self.t_end
                } else {
                    self.t_start + (self.t_end - self.t_start) * i as f64 / n as f64
                };
                (t, self.at(t).unwrap_or(self.x_end))
            })
            .collect()
    }
}

/// The perturbed impulsive system at a fixed `eps`.
#[derive(Clone, Copy, Debug)]
pub struct ImpulsiveFlow<'a> {
    pub system: &'a SystemDefinition,
    pub schedule: &'a ImpulseSchedule,
    pub eps: f64,
    pub integrator: Integrator,
}

impl<'a> ImpulsiveFlow<'a> {
    pub fn new(
        system: &'a SystemDefinition,
        schedule: &'a ImpulseSchedule,
        eps: f64,
        tol: f64,
    ) -> Result<Self, FlowError> {
        Ok(ImpulsiveFlow {
            system,
            schedule,
            eps,
            integrator: Integrator::new(tol)?,
        })
    }

    /// Integrates from `(t0bar, x0)` over `duration`, jumping at every
    /// impulse time in `(t0bar, t0bar + duration]`.
    pub fn simulate(&self, t0bar: f64, x0: Vec2, duration: f64) -> Result<PiecewiseTrajectory, FlowError> {
        if !(duration > 0.0) {
            return Err(FlowError::NonPositiveDuration(duration));
        }
        let t_end = t0bar + duration;
        let impulses = self.schedule.impulse_times_in(t0bar, t_end);
        let (sys, eps) = (self.system, self.eps);
        let field = |t: f64, x: &Vec2| sys.perturbed_field(t, *x, eps);

        let mut segments = Vec::with_capacity(impulses.len() + 1);
        let mut jumps = Vec::with_capacity(impulses.len());
        let (mut t, mut x) = (t0bar, x0);
        for (index, imp) in impulses.iter().enumerate() {
            let seg = self
                .integrator
                .integrate(field, t, x, imp.time)
                .map_err(|e| FlowError::Segment {
                    index,
                    source: Box::new(e),
                })?;
            let before = seg.end();
            let l = self.schedule.jump(imp.map_index, before, eps);
            let after = [before[0] + eps * l[0], before[1] + eps * l[1]];
            if !(after[0].is_finite() && after[1].is_finite()) {
                return Err(FlowError::Segment {
                    index,
                    source: Box::new(FlowError::NonFinite { t: imp.time }),
                });
            }
            jumps.push(Jump {
                time: imp.time,
                k: imp.k,
                map_index: imp.map_index,
                before,
                after,
            });
            segments.push(seg);
            t = imp.time;
            x = after;
        }
        if t < t_end {
            let index = segments.len();
            let seg = self
                .integrator
                .integrate(field, t, x, t_end)
                .map_err(|e| FlowError::Segment {
                    index,
                    source: Box::new(e),
                })?;
            x = seg.end();
            segments.push(seg);
        }
        Ok(PiecewiseTrajectory {
            segments,
            jumps,
            eps,
            t_start: t0bar,
            t_end,
            x_start: x0,
            x_end: x,
        })
    }

    /// Right limit at `t0bar + n * period`.
    pub fn poincare(&self, t0bar: f64, x0: Vec2, n: u32, period: f64) -> Result<Vec2, FlowError> {
        Ok(self.simulate(t0bar, x0, n as f64 * period)?.end())
    }
}

pub fn simulate_impulsive(
    system: &SystemDefinition,
    schedule: &ImpulseSchedule,
    eps: f64,
    t0bar: f64,
    x0: Vec2,
    duration: f64,
    tol: f64,
) -> Result<PiecewiseTrajectory, FlowError> {
    ImpulsiveFlow::new(system, schedule, eps, tol)?.simulate(t0bar, x0, duration)
}

/// `n` applications of the time-`period` map at section phase `t0bar`.
#[allow(clippy::too_many_arguments)]
pub fn poincare_iterate(
    system: &SystemDefinition,
    schedule: &ImpulseSchedule,
    eps: f64,
    t0bar: f64,
    x0: Vec2,
    n: u32,
    period: f64,
    tol: f64,
) -> Result<Vec2, FlowError> {
    ImpulsiveFlow::new(system, schedule, eps, tol)?.poincare(t0bar, x0, n, period)
}
