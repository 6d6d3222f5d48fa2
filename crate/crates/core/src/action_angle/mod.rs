//! The unperturbed orbit family: level-curve charts `q(t, h)`, the period
//! function, and the angle frame `G(theta, h)` with its dual covector.

mod resonance;

pub use resonance::{
    rational_approximation, validate_resonance, ResonanceError, ResonanceRequest, ResonanceSetup, ISOCHRONY_TOL,
    MAX_DENOMINATOR, RATIO_TOL,
};

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::sync::{Arc, RwLock};

use crate::flow::{FlowError, Integrator, Trajectory};
use crate::system::{dot, norm, sub, EnergyWindow, SystemDefinition, Vec2};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ChartError {
    #[error("level H = {h} not crossed along the +x1 ray from the center hint")]
    NoCrossing { h: f64 },
    #[error("orbit of energy {h} did not return to its section within {limit} time units")]
    NotClosed { h: f64, limit: f64 },
    #[error("energy {h} outside the window ({h_min}, {h_max})")]
    Window { h: f64, h_min: f64, h_max: f64 },
    #[error("frequency derivative not converged: {coarse:e} (step {step:e}) vs {fine:e} (step {half:e})")]
    Richardson {
        coarse: f64,
        fine: f64,
        step: f64,
        half: f64,
    },
    #[error("degenerate frame at theta = {theta}, h = {h}: denominator {denominator:e}")]
    DegenerateFrame { theta: f64, h: f64, denominator: f64 },
    #[error("window ({h_min}, {h_max}) is not one family of nested orbits: enclosed area changes by {area:e} but the period integrates to {period_integral:e}")]
    NotNested {
        h_min: f64,
        h_max: f64,
        area: f64,
        period_integral: f64,
    },
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// Longest time an orbit is followed while waiting for its return.
pub const RETURN_LIMIT: f64 = 1e3;

/// Default energy step for central differences in `h`.
pub fn default_dh(h: f64) -> f64 {
    1e-4 * (1.0 + h.abs())
}

/// One closed level curve `L_h`, parameterized by time from its anchor.
#[derive(Clone, Debug)]
pub struct OrbitChart {
    h: f64,
    anchor: Vec2,
    period: f64,
    trajectory: Trajectory<2>,
}

impl OrbitChart {
    pub fn energy(&self) -> f64 {
        self.h
    }

    /// `q(0, h)`, on the `+x1` ray from the center hint.
    pub fn anchor(&self) -> Vec2 {
        self.anchor
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn omega(&self) -> f64 {
        TAU / self.period
    }

    pub fn trajectory(&self) -> &Trajectory<2> {
        &self.trajectory
    }

    /// `q(t, h)` with `t` taken modulo the period.
    pub fn q_of(&self, t: f64) -> Vec2 {
        let mut s = t.rem_euclid(self.period);
        if s >= self.period {
            s = 0.0;
        }
        self.trajectory.at(s).unwrap_or(self.anchor)
    }

    /// `G(theta, h) = q(theta / Omega, h)`.
    pub fn angle_point(&self, theta: f64) -> Vec2 {
        self.q_of(theta / self.omega())
    }

    /// Unsigned area enclosed by the orbit.
    pub fn area(&self, system: &SystemDefinition) -> f64 {
        // periodic trapezoid rule, spectrally accurate for a smooth orbit
        let n = 1024;
        let dt = self.period / n as f64;
        let c = system.center_hint();
        let sum: f64 = (0..n)
            .map(|i| {
                let x = self.q_of(i as f64 * dt);
                let f = system.vector_field(x);
                (x[0] - c[0]) * f[1] - (x[1] - c[1]) * f[0]
            })
            .sum();
        (0.5 * sum * dt).abs()
    }
}

/// Anchor: the point of `H = h` on the ray `c + s (1, 0)`, `s > 0`.
fn find_anchor(system: &SystemDefinition, h: f64) -> Result<Vec2, ChartError> {
    let c = system.center_hint();
    let phi = |s: f64| system.energy([c[0] + s, c[1]]) - h;
    let f0 = phi(0.0);
    if !f0.is_finite() {
        return Err(ChartError::NoCrossing { h });
    }
    let (mut a, mut b) = (0.0, 1e-3);
    loop {
        let fb = phi(b);
        if fb.is_finite() && (fb == 0.0 || fb.signum() != f0.signum()) {
            break;
        }
        if !fb.is_finite() || b > 1e3 {
            return Err(ChartError::NoCrossing { h });
        }
        a = b;
        b *= 2.0;
    }
    let fa_sign = phi(a).signum();
    for _ in 0..200 {
        if b - a <= 1e-6 * (1.0 + b) {
            break;
        }
        let m = 0.5 * (a + b);
        if phi(m).signum() == fa_sign {
            a = m;
        } else {
            b = m;
        }
    }
    // Newton polish inside the bracket, bisecting when a step leaves it.
    let mut s = 0.5 * (a + b);
    for _ in 0..60 {
        let v = phi(s);
        if v == 0.0 {
            break;
        }
        if v.signum() == fa_sign {
            a = s;
        } else {
            b = s;
        }
        let d = system.gradient([c[0] + s, c[1]])[0];
        let mut next = s - v / d;
        if !(next > a && next < b) || !next.is_finite() {
            next = 0.5 * (a + b);
        }
        let done = (next - s).abs() <= 1e-12 * (1.0 + s.abs());
        s = next;
        if done {
            break;
        }
    }
    Ok([c[0] + s, c[1]])
}

/// Traces `L_h` from its anchor until the first return to the ray.
pub fn trace_orbit(system: &SystemDefinition, h: f64, tol: f64) -> Result<OrbitChart, ChartError> {
    let anchor = find_anchor(system, h)?;
    let c = system.center_hint();
    let f0 = system.vector_field(anchor);
    // Orient the section so the orbit leaves it in the positive direction.
    let sign = if f0[1] >= 0.0 { 1.0 } else { -1.0 };
    let integrator = Integrator::new(tol)?;
    let (trajectory, hit) = integrator.integrate_until(
        |_, x: &Vec2| system.vector_field(*x),
        0.0,
        anchor,
        RETURN_LIMIT,
        |_, x: &Vec2| sign * (x[1] - c[1]),
        |_, x: &Vec2| x[0] > c[0],
    )?;
    let hit = hit.ok_or(ChartError::NotClosed { h, limit: RETURN_LIMIT })?;
    Ok(OrbitChart {
        h,
        anchor,
        period: hit.t,
        trajectory,
    })
}

/// `G`, its partial derivatives and the dual covector at one `(theta, h)`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct FrameSample {
    pub theta: f64,
    pub h: f64,
    pub g: Vec2,
    pub d_theta: Vec2,
    pub d_h: Vec2,
    pub alpha: Vec2,
}

impl FrameSample {
    pub fn build(
        system: &SystemDefinition,
        theta: f64,
        h: f64,
        center: &OrbitChart,
        up: &OrbitChart,
        down: &OrbitChart,
        dh: f64,
    ) -> Result<Self, ChartError> {
        let g = center.angle_point(theta);
        let f = system.vector_field(g);
        let omega = center.omega();
        let d_theta = [f[0] / omega, f[1] / omega];
        let (gp, gm) = (up.angle_point(theta), down.angle_point(theta));
        let d_h = [(gp[0] - gm[0]) / (2.0 * dh), (gp[1] - gm[1]) / (2.0 * dh)];
        let perp = [-d_h[1], d_h[0]];
        let denominator = dot(perp, d_theta);
        if !(denominator.abs() >= 1e-10) {
            return Err(ChartError::DegenerateFrame { theta, h, denominator });
        }
        Ok(FrameSample {
            theta,
            h,
            g,
            d_theta,
            d_h,
            alpha: [perp[0] / denominator, perp[1] / denominator],
        })
    }
}

/// Worst residuals of the chart identities over a sample set.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IdentityResiduals {
    /// `|H(G) - h|`.
    pub energy: f64,
    /// `|DH(G) D_theta G| / (|DH| |D_theta G|)`.
    pub tangency: f64,
    /// `|DH(G) D_h G - 1|`.
    pub normalization: f64,
    /// `|alpha D_h G|`.
    pub alpha_dh: f64,
    /// `|alpha D_theta G - 1|`.
    pub alpha_dtheta: f64,
    /// Difference between the frames at `theta` and `theta + 2 pi`.
    pub periodicity: f64,
}

impl IdentityResiduals {
    pub fn merge(&mut self, other: &IdentityResiduals) {
        self.energy = self.energy.max(other.energy);
        self.tangency = self.tangency.max(other.tangency);
        self.normalization = self.normalization.max(other.normalization);
        self.alpha_dh = self.alpha_dh.max(other.alpha_dh);
        self.alpha_dtheta = self.alpha_dtheta.max(other.alpha_dtheta);
        self.periodicity = self.periodicity.max(other.periodicity);
    }

    /// Whether every residual is within [`IDENTITY_BOUNDS`].
    pub fn within_bounds(&self) -> bool {
        let b = IDENTITY_BOUNDS;
        self.energy <= b.energy
            && self.tangency <= b.tangency
            && self.normalization <= b.normalization
            && self.alpha_dh <= b.alpha_dh
            && self.alpha_dtheta <= b.alpha_dtheta
            && self.periodicity <= b.periodicity
    }
}

/// Bounds of the identity suite.
pub const IDENTITY_BOUNDS: IdentityResiduals = IdentityResiduals {
    energy: 1e-8,
    tangency: 1e-7,
    normalization: 1e-5,
    alpha_dh: 1e-5,
    alpha_dtheta: 1e-5,
    periodicity: 1e-8,
};

fn max_abs_diff(a: Vec2, b: Vec2) -> f64 {
    (a[0] - b[0]).abs().max((a[1] - b[1]).abs())
}

/// Charts of one system over an energy window, traced on demand and cached.
/// Reads are concurrent; insertions take the write lock.
#[derive(Debug)]
pub struct OrbitFamily {
    system: SystemDefinition,
    window: EnergyWindow,
    tol: f64,
    cache: RwLock<HashMap<u64, Arc<OrbitChart>>>,
}

impl Clone for OrbitFamily {
    fn clone(&self) -> Self {
        let cache = self.cache.read().map(|c| c.clone()).unwrap_or_default();
        OrbitFamily {
            system: self.system.clone(),
            window: self.window,
            tol: self.tol,
            cache: RwLock::new(cache),
        }
    }
}

impl OrbitFamily {
    pub fn new(system: SystemDefinition, window: EnergyWindow, tol: f64) -> Result<Self, ChartError> {
        Integrator::new(tol)?;
        Ok(OrbitFamily {
            system,
            window,
            tol,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn system(&self) -> &SystemDefinition {
        &self.system
    }

    pub fn window(&self) -> EnergyWindow {
        self.window
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    fn check(&self, h: f64) -> Result<(), ChartError> {
        if self.window.contains(h) {
            Ok(())
        } else {
            Err(ChartError::Window {
                h,
                h_min: self.window.h_min,
                h_max: self.window.h_max,
            })
        }
    }

    /// Chart of `L_h`; `h` must lie in the window.
    pub fn chart(&self, h: f64) -> Result<Arc<OrbitChart>, ChartError> {
        self.check(h)?;
        self.chart_unchecked(h)
    }

    /// Chart of `L_h` without the window test, for energies the perturbed
    /// flow reaches just outside it.
    pub fn chart_unchecked(&self, h: f64) -> Result<Arc<OrbitChart>, ChartError> {
        let key = h.to_bits();
        if let Some(c) = self.cache.read().ok().and_then(|c| c.get(&key).cloned()) {
            return Ok(c);
        }
        let chart = Arc::new(trace_orbit(&self.system, h, self.tol)?);
        if let Ok(mut cache) = self.cache.write() {
            return Ok(cache.entry(key).or_insert(chart).clone());
        }
        Ok(chart)
    }

    pub fn period(&self, h: f64) -> Result<f64, ChartError> {
        Ok(self.chart(h)?.period())
    }

    pub fn omega(&self, h: f64) -> Result<f64, ChartError> {
        Ok(self.chart(h)?.omega())
    }

    fn omega_slope(&self, h: f64, dh: f64) -> Result<f64, ChartError> {
        let up = self.chart(h + dh)?.omega();
        let down = self.chart(h - dh)?.omega();
        Ok((up - down) / (2.0 * dh))
    }

    /// `Omega'(h)` by central differences, checked against the half step.
    /// Values agree when within `1e-5` relative or below an absolute floor of
    /// `1e-6`, the resolution of the traced periods.
    pub fn omega_prime(&self, h: f64, dh: Option<f64>) -> Result<f64, ChartError> {
        let step = dh.unwrap_or_else(|| default_dh(h));
        let coarse = self.omega_slope(h, step)?;
        let fine = self.omega_slope(h, 0.5 * step)?;
        let diff = (coarse - fine).abs();
        if diff > 1e-5 * coarse.abs().max(fine.abs()) && diff > 1e-6 {
            return Err(ChartError::Richardson {
                coarse,
                fine,
                step,
                half: 0.5 * step,
            });
        }
        Ok(fine)
    }

    /// Frame at `(theta, h)` with the default energy step.
    pub fn frame(&self, theta: f64, h: f64) -> Result<FrameSample, ChartError> {
        self.frame_with_step(theta, h, default_dh(h))
    }

    pub fn frame_with_step(&self, theta: f64, h: f64, dh: f64) -> Result<FrameSample, ChartError> {
        let center = self.chart(h)?;
        let up = self.chart(h + dh)?;
        let down = self.chart(h - dh)?;
        FrameSample::build(&self.system, theta, h, &center, &up, &down, dh)
    }

    /// Identity residuals at one sample.
    pub fn identity_residuals(&self, theta: f64, h: f64) -> Result<IdentityResiduals, ChartError> {
        let fr = self.frame(theta, h)?;
        let shifted = self.frame(theta + TAU, h)?;
        let dh = self.system.gradient(fr.g);
        let tangency = dot(dh, fr.d_theta).abs() / (norm(dh) * norm(fr.d_theta)).max(f64::MIN_POSITIVE);
        let periodicity = max_abs_diff(fr.g, shifted.g)
            .max(max_abs_diff(fr.d_theta, shifted.d_theta))
            .max(max_abs_diff(fr.d_h, shifted.d_h))
            .max(max_abs_diff(fr.alpha, shifted.alpha));
        Ok(IdentityResiduals {
            energy: (self.system.energy(fr.g) - h).abs(),
            tangency,
            normalization: (dot(dh, fr.d_h) - 1.0).abs(),
            alpha_dh: dot(fr.alpha, fr.d_h).abs(),
            alpha_dtheta: (dot(fr.alpha, fr.d_theta) - 1.0).abs(),
            periodicity,
        })
    }

    /// Worst residuals over an `n_theta` by `n_h` grid of window midpoints.
    pub fn identity_suite(&self, n_theta: usize, n_h: usize) -> Result<IdentityResiduals, ChartError> {
        let hs = self.shrunk_window().midpoints(n_h);
        let mut worst = IdentityResiduals::default();
        for &h in &hs {
            for i in 0..n_theta {
                let theta = TAU * i as f64 / n_theta as f64;
                worst.merge(&self.identity_residuals(theta, h)?);
            }
        }
        Ok(worst)
    }

    /// Window shrunk so that `h +- dh` stays inside.
    pub fn shrunk_window(&self) -> EnergyWindow {
        let w = self.window;
        let lo = w.h_min + 2.0 * default_dh(w.h_min);
        let hi = w.h_max - 2.0 * default_dh(w.h_max);
        EnergyWindow {
            h_min: lo,
            h_max: hi.max(lo + f64::EPSILON),
        }
    }

    /// Checks that the window holds a single nested family, using
    /// `dA/dh = +-T(h)` for the enclosed area. A separatrix inside the window
    /// makes the area jump by the area of the lobes it adds.
    pub fn check_nested(&self) -> Result<(), ChartError> {
        let w = self.window;
        let inner = trace_orbit(&self.system, w.h_min, self.tol)?;
        let outer = trace_orbit(&self.system, w.h_max, self.tol)?;
        let area = (outer.area(&self.system) - inner.area(&self.system)).abs();
        let period = |h: f64| trace_orbit(&self.system, h, self.tol).map(|c| c.period());
        let (ta, tm, tb) = (period(w.h_min)?, period(0.5 * (w.h_min + w.h_max))?, period(w.h_max)?);
        let tol = 1e-9 * (1.0 + area);
        let integral = adaptive_simpson(&period, w.h_min, w.h_max, (ta, tm, tb), tol, 20)?;
        if (area - integral).abs() > 1e-6 * (1.0 + area) {
            return Err(ChartError::NotNested {
                h_min: w.h_min,
                h_max: w.h_max,
                area,
                period_integral: integral,
            });
        }
        Ok(())
    }

    /// Periods at `n` energies spread across the window.
    pub fn period_samples(&self, n: usize) -> Result<Vec<(f64, f64)>, ChartError> {
        self.window
            .midpoints(n)
            .into_iter()
            .map(|h| Ok((h, self.period(h)?)))
            .collect()
    }

    /// Level-curve distance from `x` to `L_{H(x)}` projected to the angle:
    /// returns `(theta, distance)` with `theta` in `[0, 2 pi)`.
    pub fn project_angle(&self, x: Vec2) -> Result<(f64, f64, f64), ChartError> {
        let h = self.system.energy(x);
        let chart = trace_orbit(&self.system, h, self.tol)?;
        project(&chart, &self.system, x).map(|(tau, d, second)| (chart.omega() * tau, d, second))
    }
}

fn adaptive_simpson<F>(f: &F, a: f64, b: f64, fx: (f64, f64, f64), tol: f64, depth: u32) -> Result<f64, ChartError>
where
    F: Fn(f64) -> Result<f64, ChartError>,
{
    let (fa, fm, fb) = fx;
    let m = 0.5 * (a + b);
    let (fl, fr) = (f(0.5 * (a + m))?, f(0.5 * (m + b))?);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let left = (m - a) / 6.0 * (fa + 4.0 * fl + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * fr + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return Ok(left + right + diff / 15.0);
    }
    Ok(adaptive_simpson(f, a, m, (fa, fl, fm), 0.5 * tol, depth - 1)?
        + adaptive_simpson(f, m, b, (fm, fr, fb), 0.5 * tol, depth - 1)?)
}

/// Closest point of a chart to `x`: `(tau, distance, runner_up)` where the
/// runner-up is the best distance at least a quarter period away.
fn project(chart: &OrbitChart, system: &SystemDefinition, x: Vec2) -> Result<(f64, f64, f64), ChartError> {
    let n = 512;
    let period = chart.period();
    let samples: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let t = period * i as f64 / n as f64;
            (t, norm(sub(x, chart.q_of(t))))
        })
        .collect();
    let (mut tau, _) = samples
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((0.0, f64::INFINITY));
    for _ in 0..30 {
        let q = chart.q_of(tau);
        let f = system.vector_field(q);
        let step = dot(sub(x, q), f) / dot(f, f);
        tau += step;
        if step.abs() <= 1e-14 * period {
            break;
        }
    }
    tau = tau.rem_euclid(period);
    let dist = norm(sub(x, chart.q_of(tau)));
    let runner_up = samples
        .iter()
        .filter(|(t, _)| {
            let d = (t - tau).rem_euclid(period);
            d.min(period - d) > 0.25 * period
        })
        .map(|s| s.1)
        .fold(f64::INFINITY, f64::min);
    Ok((tau, dist, runner_up))
}
