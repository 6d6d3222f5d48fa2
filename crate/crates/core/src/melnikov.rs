//! Impulsive Melnikov functions `M` (energy drift) and, for isochronous
//! families, `N` (phase drift), with finite-eps simulation oracles.
//!
//! Both functions integrate over one resonant span `mT` along the unperturbed
//! orbit `q(s, r)` started at its anchor, with the forcing evaluated at
//! time `s + t0bar`, and add one term for each of the `m s q` impulses in
//! `(t0bar, t0bar + mT]`.

use std::f64::consts::TAU;

use rayon::prelude::*;

use crate::action_angle::{default_dh, ChartError, FrameSample, OrbitChart, OrbitFamily, ResonanceSetup};
use crate::flow::{FlowError, ImpulsiveFlow, Integrator};
use crate::system::{dot, ImpulseSchedule, Vec2};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum MelnikovError {
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error("quadrature failed: {0}")]
    Quadrature(FlowError),
    #[error("simulation failed: {0}")]
    Simulation(FlowError),
    #[error("the orbit family is not isochronous; use the energy-only path")]
    NotIsochronous,
    #[error("oracle eps {0:e} outside [1e-6, 1e-2]")]
    EpsRange(f64),
    #[error("phase projection ambiguous: distance {distance:e}, runner-up {runner_up:e}")]
    AmbiguousPhase { distance: f64, runner_up: f64 },
    #[error("scan grids must be nonempty")]
    EmptyGrid,
}

/// Integral and impulse contributions of one Melnikov function.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Parts {
    pub integral: f64,
    pub impulse: f64,
    pub value: f64,
}

impl Parts {
    fn new(integral: f64, impulse: f64) -> Self {
        Parts {
            integral,
            impulse,
            value: integral + impulse,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MelnikovSample {
    pub t0bar: f64,
    pub r: f64,
    pub m: u32,
    #[serde(rename = "M")]
    pub big_m: Parts,
    /// Present only for isochronous families.
    #[serde(rename = "N")]
    pub big_n: Option<Parts>,
}

/// Everything `M` and `N` depend on.
#[derive(Clone, Copy, Debug)]
pub struct Melnikov<'a> {
    pub family: &'a OrbitFamily,
    pub schedule: &'a ImpulseSchedule,
    pub setup: ResonanceSetup,
    /// Quadrature and oracle integrator tolerance.
    pub tol: f64,
}

/// Charts needed by the frame at one energy.
struct FrameCharts {
    center: std::sync::Arc<OrbitChart>,
    up: std::sync::Arc<OrbitChart>,
    down: std::sync::Arc<OrbitChart>,
    dh: f64,
}

impl<'a> Melnikov<'a> {
    pub fn new(family: &'a OrbitFamily, schedule: &'a ImpulseSchedule, setup: ResonanceSetup, tol: f64) -> Self {
        Melnikov {
            family,
            schedule,
            setup,
            tol,
        }
    }

    fn frame_charts(&self, r: f64) -> Result<FrameCharts, MelnikovError> {
        let dh = default_dh(r);
        Ok(FrameCharts {
            center: self.family.chart(r)?,
            up: self.family.chart(r + dh)?,
            down: self.family.chart(r - dh)?,
            dh,
        })
    }

    fn alpha(&self, charts: &FrameCharts, theta: f64, r: f64) -> Result<Vec2, ChartError> {
        let fr = FrameSample::build(
            self.family.system(),
            theta,
            r,
            &charts.center,
            &charts.up,
            &charts.down,
            charts.dh,
        )?;
        Ok(fr.alpha)
    }

    /// `M` alone.
    pub fn melnikov_m(&self, t0bar: f64, r: f64) -> Result<MelnikovSample, MelnikovError> {
        self.evaluate(t0bar, r, false)
    }

    /// `M` and `N`; requires an isochronous family.
    pub fn melnikov_n_iso(&self, t0bar: f64, r: f64) -> Result<MelnikovSample, MelnikovError> {
        if !self.setup.isochronous {
            return Err(MelnikovError::NotIsochronous);
        }
        self.evaluate(t0bar, r, true)
    }

    /// `M`, plus `N` whenever the family is isochronous.
    pub fn sample(&self, t0bar: f64, r: f64) -> Result<MelnikovSample, MelnikovError> {
        self.evaluate(t0bar, r, self.setup.isochronous)
    }

    fn evaluate(&self, t0bar: f64, r: f64, with_n: bool) -> Result<MelnikovSample, MelnikovError> {
        let sys = self.family.system();
        let chart = self.family.chart(r)?;
        let frame = if with_n { Some(self.frame_charts(r)?) } else { None };
        let omega = chart.omega();
        let span = self.setup.span();
        let anchor = chart.anchor();

        // A frame failure inside the right-hand side is parked here and
        // reported once the integrator returns.
        let failure = std::cell::Cell::new(None::<ChartError>);
        let rhs = |s: f64, y: &[f64; 4]| {
            let x = [y[0], y[1]];
            let f = sys.vector_field(x);
            let g = sys.forcing(s + t0bar, x, 0.0);
            let dm = dot(sys.gradient(x), g);
            let dn = match &frame {
                Some(fc) => match self.alpha(fc, omega * s, r) {
                    Ok(a) => dot(a, g),
                    Err(e) => {
                        failure.set(Some(e));
                        f64::NAN
                    }
                },
                None => 0.0,
            };
            [f[0], f[1], dm, dn]
        };
        let traj = Integrator::new(self.tol).map_err(MelnikovError::Quadrature)?.integrate(
            rhs,
            0.0,
            [anchor[0], anchor[1], 0.0, 0.0],
            span,
        );
        if let Some(e) = failure.take() {
            return Err(e.into());
        }
        let traj = traj.map_err(MelnikovError::Quadrature)?;
        let end = traj.end();

        let mut m_imp = 0.0;
        let mut n_imp = 0.0;
        for imp in self.schedule.impulse_times_in(t0bar, t0bar + span) {
            let u = imp.time - t0bar;
            let y = traj.at(u.clamp(0.0, span)).unwrap_or(end);
            let x = [y[0], y[1]];
            let l = self.schedule.jump(imp.map_index, x, 0.0);
            m_imp += dot(sys.gradient(x), l);
            if let Some(fc) = &frame {
                n_imp += dot(self.alpha(fc, omega * u, r)?, l);
            }
        }
        Ok(MelnikovSample {
            t0bar,
            r,
            m: self.setup.m,
            big_m: Parts::new(end[2], m_imp),
            big_n: frame.map(|_| Parts::new(end[3], n_imp)),
        })
    }

    fn check_eps(eps: f64) -> Result<(), MelnikovError> {
        if (1e-6..=1e-2).contains(&eps) {
            Ok(())
        } else {
            Err(MelnikovError::EpsRange(eps))
        }
    }

    /// Final state of the perturbed system started at the anchor of `L_r`.
    fn simulate(&self, t0bar: f64, r: f64, eps: f64) -> Result<Vec2, MelnikovError> {
        let chart = self.family.chart(r)?;
        let flow = ImpulsiveFlow::new(self.family.system(), self.schedule, eps, self.tol)
            .map_err(MelnikovError::Simulation)?;
        flow.simulate(t0bar, chart.anchor(), self.setup.span())
            .map(|p| p.end())
            .map_err(MelnikovError::Simulation)
    }

    /// `(H(x(t0bar + mT+)) - r) / eps`.
    pub fn oracle_m(&self, t0bar: f64, r: f64, eps: f64) -> Result<f64, MelnikovError> {
        Self::check_eps(eps)?;
        let x = self.simulate(t0bar, r, eps)?;
        Ok((self.family.system().energy(x) - r) / eps)
    }

    /// `(theta(x(t0bar + mT+)) - Omega(r) mT) / eps` with the angle read off
    /// the chart through the final state.
    pub fn oracle_n(&self, t0bar: f64, r: f64, eps: f64) -> Result<f64, MelnikovError> {
        if !self.setup.isochronous {
            return Err(MelnikovError::NotIsochronous);
        }
        Self::check_eps(eps)?;
        let x = self.simulate(t0bar, r, eps)?;
        let (theta, distance, runner_up) = self.family.project_angle(x)?;
        if distance > 1e-6 || runner_up < 1e-6 {
            return Err(MelnikovError::AmbiguousPhase { distance, runner_up });
        }
        let advance = self.family.omega(r)? * self.setup.span();
        let turns = ((advance - theta) / TAU).round();
        Ok((theta + TAU * turns - advance) / eps)
    }

    /// Row-major (`t0bar`-major) table over the grid, evaluated in parallel.
    pub fn scan(&self, t_grid: &[f64], r_grid: &[f64]) -> Result<ScanTable, MelnikovError> {
        if t_grid.is_empty() || r_grid.is_empty() {
            return Err(MelnikovError::EmptyGrid);
        }
        // Trace the charts up front so workers only read the cache.
        for &r in r_grid {
            if self.setup.isochronous {
                let _ = self.frame_charts(r);
            } else {
                let _ = self.family.chart(r);
            }
        }
        let nr = r_grid.len();
        let cells = (0..t_grid.len() * nr)
            .into_par_iter()
            .map(|idx| {
                let (i, j) = (idx / nr, idx % nr);
                self.sample(t_grid[i], r_grid[j]).map_err(|e| CellError {
                    t_index: i,
                    r_index: j,
                    message: e.to_string(),
                })
            })
            .collect();
        Ok(ScanTable {
            t_grid: t_grid.to_vec(),
            r_grid: r_grid.to_vec(),
            cells,
        })
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize, thiserror::Error)]
#[error("cell ({t_index}, {r_index}): {message}")]
pub struct CellError {
    pub t_index: usize,
    pub r_index: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanTable {
    pub t_grid: Vec<f64>,
    pub r_grid: Vec<f64>,
    pub cells: Vec<Result<MelnikovSample, CellError>>,
}

impl ScanTable {
    pub fn get(&self, i: usize, j: usize) -> &Result<MelnikovSample, CellError> {
        &self.cells[i * self.r_grid.len() + j]
    }

    /// Median of `|M|` over the successful cells.
    pub fn median_abs_m(&self) -> f64 {
        let mut v: Vec<f64> = self.cells.iter().flatten().map(|s| s.big_m.value.abs()).collect();
        median(&mut v)
    }
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Uniform grid of `n` phases over `[0, period)`.
pub fn phase_grid(period: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| period * i as f64 / n as f64).collect()
}
