//! Zeros of the Melnikov functions, their nondegeneracy data, and
//! verification of each zero by shooting for the periodic orbit it predicts.

use std::f64::consts::PI;
use std::num::NonZeroU32;

use rayon::prelude::*;

use crate::action_angle::{default_dh, ChartError};
use crate::flow::{ImpulsiveFlow, NewtonOptions};
use crate::melnikov::{median, phase_grid, Melnikov, MelnikovError};
use crate::system::{norm, sub, Vec2};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum BifurcationError {
    #[error(transparent)]
    Melnikov(#[from] MelnikovError),
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error("the energy-only path needs a resonant energy h0")]
    MissingResonantEnergy,
    #[error("the phase-energy path needs an isochronous family")]
    NotIsochronous,
    #[error("subharmonic order must be positive")]
    ZeroOrder,
}

/// Which pair of bifurcation equations a candidate solves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RootPath {
    /// `M(t0, h0) = 0` at the resonant energy, with `Omega'(h0) != 0`.
    Nonisochronous,
    /// `M = N = 0` over phase and energy for an isochronous family.
    Isochronous,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RootCandidate {
    pub t0: f64,
    pub h0: f64,
    pub m: NonZeroU32,
    pub path: RootPath,
    pub residual_m: f64,
    pub residual_n: Option<f64>,
    /// `Omega'(h0)` (energy-only path).
    pub omega_prime: Option<f64>,
    /// `dM/dr` at the root (energy-only path).
    pub dm_dr: Option<f64>,
    /// `[[M_t, M_r], [N_t, N_r]]` (phase-energy path).
    pub jacobian: Option<[[f64; 2]; 2]>,
    pub det: Option<f64>,
    /// Median `|M|` over the scan that produced the candidate.
    pub scale: f64,
    pub accepted: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Classification {
    Harmonic,
    Subharmonic { order: u32 },
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Classification::Harmonic => write!(f, "harmonic"),
            Classification::Subharmonic { order } => write!(f, "subharmonic of order {order}"),
        }
    }
}

pub fn classify(candidate: &RootCandidate) -> Classification {
    match candidate.m.get() {
        1 => Classification::Harmonic,
        order => Classification::Subharmonic { order },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RootOptions {
    /// Phase grid of the energy-only path.
    pub n_phase: usize,
    /// Phase by energy grid of the phase-energy path.
    pub grid_phase: usize,
    pub grid_energy: usize,
    /// Root tolerance relative to the scan scale.
    pub root_tol: f64,
    /// Threshold for `|Omega'|` and `|dM/dr|` relative to the scale.
    pub degeneracy: f64,
    /// Threshold for `|J|` relative to the squared scale.
    pub det_threshold: f64,
    /// Roots closer than this fraction of `T` are merged.
    pub dedup: f64,
    /// Energy step for `Omega'` and `dM/dr`; `None` uses the chart default.
    pub frame_dh: Option<f64>,
}

impl Default for RootOptions {
    fn default() -> Self {
        RootOptions {
            n_phase: 256,
            grid_phase: 128,
            grid_energy: 64,
            root_tol: 1e-10,
            degeneracy: 1e-6,
            det_threshold: 1e-8,
            dedup: 1e-6,
            frame_dh: None,
        }
    }
}

/// A Newton seed of the phase-energy path that did not converge.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SeedFailure {
    pub t0: f64,
    pub r: f64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RootSearch {
    pub path: RootPath,
    pub scale: f64,
    pub candidates: Vec<RootCandidate>,
    pub failed_seeds: Vec<SeedFailure>,
}

impl RootSearch {
    pub fn accepted(&self) -> impl Iterator<Item = &RootCandidate> {
        self.candidates.iter().filter(|c| c.accepted)
    }
}

fn order(mel: &Melnikov) -> Result<NonZeroU32, BifurcationError> {
    NonZeroU32::new(mel.setup.m).ok_or(BifurcationError::ZeroOrder)
}

/// Picks the path by the isochrony of the family.
pub fn find_roots(mel: &Melnikov, opts: &RootOptions) -> Result<RootSearch, BifurcationError> {
    if mel.setup.isochronous {
        find_roots_isochronous(mel, opts)
    } else {
        find_roots_nonisochronous(mel, opts)
    }
}

/// Zeros of `M(., h0)` over one period.
pub fn find_roots_nonisochronous(mel: &Melnikov, opts: &RootOptions) -> Result<RootSearch, BifurcationError> {
    let h0 = mel.setup.h0.ok_or(BifurcationError::MissingResonantEnergy)?;
    let m = order(mel)?;
    let period = mel.setup.period;
    let grid = phase_grid(period, opts.n_phase.max(2));
    let eval = |t: f64| mel.melnikov_m(t, h0).map(|s| s.big_m.value);
    let values: Vec<f64> = grid.par_iter().map(|&t| eval(t)).collect::<Result<_, _>>()?;
    let scale = median(&mut values.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let tol = opts.root_tol * scale;

    let mut roots = Vec::new();
    let n = grid.len();
    for i in 0..n {
        let (ta, fa) = (grid[i], values[i]);
        let (tb, fb) = if i + 1 < n {
            (grid[i + 1], values[i + 1])
        } else {
            (period, values[0])
        };
        if fa == 0.0 {
            roots.push((ta, 0.0));
        } else if fa.signum() != fb.signum() && fb != 0.0 {
            roots.push(refine_bracket(&eval, ta, fa, tb, fb, tol)?);
        }
    }

    let omega_prime = mel.family.omega_prime(h0, opts.frame_dh)?;
    let dh = opts.frame_dh.unwrap_or_else(|| default_dh(h0));
    let mut candidates: Vec<RootCandidate> = roots
        .par_iter()
        .map(|&(t, v)| -> Result<RootCandidate, BifurcationError> {
            let up = mel.melnikov_m(t, h0 + dh)?.big_m.value;
            let down = mel.melnikov_m(t, h0 - dh)?.big_m.value;
            let dm_dr = (up - down) / (2.0 * dh);
            let threshold = opts.degeneracy * scale;
            Ok(RootCandidate {
                t0: t.rem_euclid(period),
                h0,
                m,
                path: RootPath::Nonisochronous,
                residual_m: v.abs(),
                residual_n: None,
                omega_prime: Some(omega_prime),
                dm_dr: Some(dm_dr),
                jacobian: None,
                det: None,
                scale,
                accepted: omega_prime.abs() > threshold && dm_dr.abs() > threshold,
            })
        })
        .collect::<Result<_, _>>()?;
    candidates.sort_by(|a, b| a.t0.total_cmp(&b.t0));
    dedup(&mut candidates, period, opts.dedup, f64::INFINITY);
    Ok(RootSearch {
        path: RootPath::Nonisochronous,
        scale,
        candidates,
        failed_seeds: Vec::new(),
    })
}

/// Bisection down to a short bracket, then secant steps kept inside it.
fn refine_bracket(
    f: &(impl Fn(f64) -> Result<f64, MelnikovError> + Sync),
    mut a: f64,
    mut fa: f64,
    mut b: f64,
    mut fb: f64,
    tol: f64,
) -> Result<(f64, f64), MelnikovError> {
    let width = b - a;
    for _ in 0..100 {
        let use_secant = b - a < 1e-3 * width;
        let mut t = if use_secant {
            b - fb * (b - a) / (fb - fa)
        } else {
            0.5 * (a + b)
        };
        if !(t > a && t < b) {
            t = 0.5 * (a + b);
        }
        let v = f(t)?;
        if v.abs() <= tol || b - a <= 1e-15 * (1.0 + b.abs()) {
            return Ok((t, v));
        }
        if v.signum() == fa.signum() {
            a = t;
            fa = v;
        } else {
            b = t;
            fb = v;
        }
    }
    let (t, v) = if fa.abs() < fb.abs() { (a, fa) } else { (b, fb) };
    Ok((t, v))
}

/// Merges candidates closer than `frac * period` in phase (circularly) and
/// `dr` in energy, keeping the smaller residual.
fn dedup(c: &mut Vec<RootCandidate>, period: f64, frac: f64, dr: f64) {
    let mut out: Vec<RootCandidate> = Vec::with_capacity(c.len());
    for cand in c.drain(..) {
        let close = out.iter().position(|o| {
            let d = (o.t0 - cand.t0).rem_euclid(period);
            d.min(period - d) <= frac * period && (o.h0 - cand.h0).abs() <= dr
        });
        match close {
            Some(i) => {
                let res = |x: &RootCandidate| x.residual_m.max(x.residual_n.unwrap_or(0.0));
                if res(&cand) < res(&out[i]) {
                    out[i] = cand;
                }
            }
            None => out.push(cand),
        }
    }
    *c = out;
}

/// Zeros of `(M, N)` over phase and energy.
pub fn find_roots_isochronous(mel: &Melnikov, opts: &RootOptions) -> Result<RootSearch, BifurcationError> {
    if !mel.setup.isochronous {
        return Err(BifurcationError::NotIsochronous);
    }
    let m = order(mel)?;
    let period = mel.setup.period;
    let t_grid = phase_grid(period, opts.grid_phase.max(2));
    let r_grid = mel.family.shrunk_window().midpoints(opts.grid_energy.max(2));
    let table = mel.scan(&t_grid, &r_grid)?;
    let scale = table.median_abs_m();
    let tol = opts.root_tol * scale.max(f64::MIN_POSITIVE);
    let (nt, nr) = (t_grid.len(), r_grid.len());

    let value = |i: usize, j: usize| -> Option<(f64, f64)> {
        let s = table.get(i % nt, j).as_ref().ok()?;
        Some((s.big_m.value, s.big_n?.value))
    };
    let mut seeds = Vec::new();
    for i in 0..nt {
        for j in 0..nr - 1 {
            let corners = [value(i, j), value(i + 1, j), value(i, j + 1), value(i + 1, j + 1)];
            let Some(c) = corners.into_iter().collect::<Option<Vec<_>>>() else {
                continue;
            };
            let changes = |k: fn(&(f64, f64)) -> f64| {
                let lo = c.iter().map(k).fold(f64::INFINITY, f64::min);
                let hi = c.iter().map(k).fold(f64::NEG_INFINITY, f64::max);
                lo <= 0.0 && hi >= 0.0
            };
            if changes(|v| v.0) && changes(|v| v.1) {
                let t1 = if i + 1 < nt { t_grid[i + 1] } else { period };
                seeds.push((0.5 * (t_grid[i] + t1), 0.5 * (r_grid[j] + r_grid[j + 1])));
            }
        }
    }

    let solved: Vec<Result<RootCandidate, SeedFailure>> = seeds
        .par_iter()
        .map(|&(t, r)| {
            newton_mn(mel, t, r, tol, period)
                .map_err(|reason| SeedFailure { t0: t, r, reason })
                .map(|(t, r, f, jac)| {
                    let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
                    RootCandidate {
                        t0: t.rem_euclid(period),
                        h0: r,
                        m,
                        path: RootPath::Isochronous,
                        residual_m: f[0].abs(),
                        residual_n: Some(f[1].abs()),
                        omega_prime: None,
                        dm_dr: None,
                        jacobian: Some(jac),
                        det: Some(det),
                        scale,
                        accepted: det.abs() > opts.det_threshold * scale * scale,
                    }
                })
        })
        .collect();
    let mut candidates = Vec::new();
    let mut failed_seeds = Vec::new();
    for s in solved {
        match s {
            Ok(c) => candidates.push(c),
            Err(f) => failed_seeds.push(f),
        }
    }
    candidates.sort_by(|a, b| a.t0.total_cmp(&b.t0).then(a.h0.total_cmp(&b.h0)));
    let dr = 1e-6 * (1.0 + mel.family.window().h_max.abs());
    dedup(&mut candidates, period, opts.dedup.max(1e-6), dr);
    candidates.sort_by(|a, b| a.t0.total_cmp(&b.t0).then(a.h0.total_cmp(&b.h0)));
    Ok(RootSearch {
        path: RootPath::Isochronous,
        scale,
        candidates,
        failed_seeds,
    })
}

type NewtonResult = (f64, f64, [f64; 2], [[f64; 2]; 2]);

fn mn(mel: &Melnikov, t: f64, r: f64) -> Result<[f64; 2], String> {
    let s = mel.melnikov_n_iso(t, r).map_err(|e| e.to_string())?;
    Ok([s.big_m.value, s.big_n.map_or(f64::NAN, |n| n.value)])
}

/// Central-difference Jacobian of `(M, N)` in `(t0, r)`.
pub fn mn_jacobian(mel: &Melnikov, t: f64, r: f64) -> Result<[[f64; 2]; 2], String> {
    let ht = mel.setup.period * 1e-6;
    let hr = default_dh(r);
    let (tp, tm) = (mn(mel, t + ht, r)?, mn(mel, t - ht, r)?);
    let (rp, rm) = (mn(mel, t, r + hr)?, mn(mel, t, r - hr)?);
    Ok([
        [(tp[0] - tm[0]) / (2.0 * ht), (rp[0] - rm[0]) / (2.0 * hr)],
        [(tp[1] - tm[1]) / (2.0 * ht), (rp[1] - rm[1]) / (2.0 * hr)],
    ])
}

fn newton_mn(mel: &Melnikov, mut t: f64, mut r: f64, tol: f64, period: f64) -> Result<NewtonResult, String> {
    let fnorm = |f: &[f64; 2]| f[0].abs().max(f[1].abs());
    let mut f = mn(mel, t, r)?;
    for _ in 0..50 {
        let jac = mn_jacobian(mel, t, r)?;
        if fnorm(&f) <= tol {
            return Ok((t, r, f, jac));
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det == 0.0 || !det.is_finite() {
            return Err(format!("singular Jacobian at ({t}, {r})"));
        }
        let dt = -(jac[1][1] * f[0] - jac[0][1] * f[1]) / det;
        let dr = -(-jac[1][0] * f[0] + jac[0][0] * f[1]) / det;
        let mut lambda = 1.0;
        let mut next = None;
        for _ in 0..=8 {
            let (tn, rn) = (t + lambda * dt, r + lambda * dr);
            if let Ok(fnew) = mn(mel, tn, rn) {
                if fnorm(&fnew) < fnorm(&f) {
                    next = Some((tn, rn, fnew));
                    break;
                }
            }
            lambda *= 0.5;
        }
        let Some((tn, rn, fnew)) = next else {
            return Err(format!("Newton stalled at ({t}, {r}) with residual {:e}", fnorm(&f)));
        };
        if (tn - t).abs() > period {
            return Err("Newton step left the phase period".into());
        }
        (t, r, f) = (tn, rn, fnew);
    }
    Err(format!("no convergence after 50 iterations (residual {:e})", fnorm(&f)))
}

/// Result of shooting at one `eps`.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpsRecord {
    pub eps: f64,
    pub converged: bool,
    pub residual: Option<f64>,
    pub iterations: Option<usize>,
    /// `max_t |x_eps(t) - q(t - t0, h0)|` over the closed orbit.
    pub distance: Option<f64>,
    /// Distance between the converged initial state and the seed.
    pub seed_drift: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerificationStatus {
    /// Every shot converged and `d(eps)` is first order.
    Verified,
    /// Some shots converged but the convergence law is off.
    Inconclusive,
    /// No shot converged.
    Refuted,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VerificationReport {
    pub candidate: RootCandidate,
    pub classification: Classification,
    pub records: Vec<EpsRecord>,
    /// Least-squares slope of `log d` against `log eps`.
    pub slope: Option<f64>,
    /// Some converged orbit starts farther than `10 eps (1 + |seed|)` from
    /// its seed.
    pub seed_drift_flag: bool,
    pub status: VerificationStatus,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyOptions {
    pub newton: NewtonOptions,
    /// Samples per span used for `d(eps)`.
    pub samples: usize,
    pub slope_range: (f64, f64),
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            newton: NewtonOptions::default(),
            samples: 1000,
            slope_range: (0.7, 1.3),
        }
    }
}

pub const DEFAULT_EPS_LADDER: [f64; 3] = [1e-2, 1e-3, 1e-4];

fn fit_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(e, d)| *e > 0.0 && *d > 0.0)
        .map(|(e, d)| (e.ln(), d.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Shoots for the periodic orbit predicted by `candidate` at each `eps` of
/// the ladder, seeding Newton with `q(0, h0)` at section phase `t0`.
pub fn verify_candidate(
    mel: &Melnikov,
    candidate: &RootCandidate,
    eps_ladder: &[f64],
    opts: &VerifyOptions,
) -> Result<VerificationReport, BifurcationError> {
    let chart = mel.family.chart_unchecked(candidate.h0)?;
    let seed = chart.anchor();
    let period = mel.setup.period;
    let m = candidate.m.get();
    let mut ladder = eps_ladder.to_vec();
    ladder.sort_by(|a, b| b.total_cmp(a));

    let records: Vec<EpsRecord> = ladder
        .par_iter()
        .map(|&eps| {
            let shot = ImpulsiveFlow::new(mel.family.system(), mel.schedule, eps, mel.tol)
                .and_then(|flow| flow.find_periodic_orbit(candidate.t0, m, period, seed, &opts.newton));
            match shot {
                Ok(orbit) => {
                    let samples = opts.samples.max(8);
                    let distance = orbit
                        .trajectory
                        .sample(samples)
                        .into_iter()
                        .map(|(t, x)| norm(sub(x, chart.q_of(t - candidate.t0))))
                        .fold(0.0, f64::max);
                    EpsRecord {
                        eps,
                        converged: true,
                        residual: Some(orbit.residual),
                        iterations: Some(orbit.iterations),
                        distance: Some(distance),
                        seed_drift: Some(norm(sub(orbit.x0, seed))),
                        error: None,
                    }
                }
                Err(e) => EpsRecord {
                    eps,
                    converged: false,
                    residual: None,
                    iterations: None,
                    distance: None,
                    seed_drift: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let converged: Vec<&EpsRecord> = records.iter().filter(|r| r.converged).collect();
    let slope = fit_slope(
        &converged
            .iter()
            .map(|r| (r.eps, r.distance.unwrap_or(0.0)))
            .collect::<Vec<_>>(),
    );
    let seed_drift_flag = converged
        .iter()
        .any(|r| r.seed_drift.unwrap_or(0.0) > 10.0 * r.eps * (1.0 + norm(seed)));
    // A failure at the largest eps alone is tolerated.
    let tolerated = records.iter().skip(1).all(|r| r.converged);
    let in_range = slope.is_some_and(|s| s >= opts.slope_range.0 && s <= opts.slope_range.1);
    let status = if converged.is_empty() {
        VerificationStatus::Refuted
    } else if tolerated && in_range && converged.len() >= 2 {
        VerificationStatus::Verified
    } else {
        VerificationStatus::Inconclusive
    };
    Ok(VerificationReport {
        candidate: *candidate,
        classification: classify(candidate),
        records,
        slope,
        seed_drift_flag,
        status,
    })
}

/// The closed forms printed for the oscillator example.
pub mod printed {
    use super::PI;

    pub fn m(t: f64, r: f64) -> f64 {
        2.0 * PI * r * (1.0 + 2.0 * (2.0 * r).sqrt() * (t.cos().powi(3) + t.sin().powi(3)))
    }

    pub fn n(t: f64, r: f64) -> f64 {
        PI * (r / 2.0).sqrt() * (2.0 * t).sin() * (t.sin() - t.cos())
    }

    pub fn det(t: f64, h: f64) -> f64 {
        let s = (2.0 * t).sin();
        1.5 * PI * PI * h * (s + 1.0) * (s - 2.0) * (3.0 * s - 2.0)
    }

    /// Roots stated alongside the closed forms.
    pub const ROOTS: [(f64, f64); 3] = [(1.25 * PI, 0.25), (PI, 0.125), (1.5 * PI, 0.125)];
}

/// One row of the closed-form against oracle comparison.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ComparisonEntry {
    pub t0: f64,
    pub r: f64,
    pub printed_m: f64,
    pub printed_n: f64,
    pub printed_det: f64,
    pub computed_m: f64,
    pub computed_n: Option<f64>,
    pub computed_det: Option<f64>,
    /// First-order coefficients extrapolated from the simulation at
    /// `eps` and `eps / 2`.
    pub oracle_m: f64,
    pub oracle_n: f64,
    pub oracle_confirms_root: bool,
    pub matches_accepted_root: bool,
}

/// Compares the printed roots, and the roots the solver accepted, against
/// the computed functions and the simulation oracle.
pub fn reference_comparison(
    mel: &Melnikov,
    search: &RootSearch,
    eps: f64,
) -> Result<Vec<ComparisonEntry>, BifurcationError> {
    let mut points: Vec<(f64, f64)> = printed::ROOTS.to_vec();
    points.extend(search.accepted().map(|c| (c.t0, c.h0)));
    let scale = search.scale.max(1e-12);
    points
        .par_iter()
        .map(|&(t, r)| {
            let s = mel.melnikov_n_iso(t, r)?;
            let om = 2.0 * mel.oracle_m(t, r, eps / 2.0)? - mel.oracle_m(t, r, eps)?;
            let on = 2.0 * mel.oracle_n(t, r, eps / 2.0)? - mel.oracle_n(t, r, eps)?;
            let computed_det = mn_jacobian(mel, t, r)
                .ok()
                .map(|j| j[0][0] * j[1][1] - j[0][1] * j[1][0]);
            let oracle_tol = 1e-4 * scale.max(1.0);
            Ok(ComparisonEntry {
                t0: t,
                r,
                printed_m: printed::m(t, r),
                printed_n: printed::n(t, r),
                printed_det: printed::det(t, r),
                computed_m: s.big_m.value,
                computed_n: s.big_n.map(|n| n.value),
                computed_det,
                oracle_m: om,
                oracle_n: on,
                oracle_confirms_root: om.abs() <= oracle_tol && on.abs() <= oracle_tol,
                matches_accepted_root: search.accepted().any(|c| {
                    let d = (c.t0 - t).rem_euclid(mel.setup.period);
                    d.min(mel.setup.period - d) < 1e-6 && (c.h0 - r).abs() < 1e-6
                }),
            })
        })
        .collect()
}

/// Seed used by verification: the anchor of `L_{h0}`.
pub fn seed_state(mel: &Melnikov, candidate: &RootCandidate) -> Result<Vec2, BifurcationError> {
    Ok(mel.family.chart_unchecked(candidate.h0)?.anchor())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action_angle::{validate_resonance, OrbitFamily, ResonanceRequest, ResonanceSetup};
    use crate::system::{builtin, jump_fn, ImpulseSchedule, Parameters};

    struct Fixture {
        family: OrbitFamily,
        schedule: ImpulseSchedule,
        setup: ResonanceSetup,
    }

    fn fixture(name: &str) -> Fixture {
        let b = builtin(name, &Parameters::new()).unwrap();
        let family = OrbitFamily::new(b.system, b.window, 1e-12).unwrap();
        let setup = validate_resonance(&family, &b.schedule, ResonanceRequest::Order(1)).unwrap()[0];
        Fixture {
            family,
            schedule: b.schedule,
            setup,
        }
    }

    #[test]
    fn classification() {
        let mut c = RootCandidate {
            t0: 0.0,
            h0: 0.1,
            m: NonZeroU32::new(1).unwrap(),
            path: RootPath::Isochronous,
            residual_m: 0.0,
            residual_n: None,
            omega_prime: None,
            dm_dr: None,
            jacobian: None,
            det: None,
            scale: 1.0,
            accepted: true,
        };
        assert_eq!(classify(&c), Classification::Harmonic);
        c.m = NonZeroU32::new(3).unwrap();
        assert_eq!(classify(&c), Classification::Subharmonic { order: 3 });
        assert_eq!(classify(&c).to_string(), "subharmonic of order 3");
        assert!(NonZeroU32::new(0).is_none());
    }

    #[test]
    fn printed_jacobian_value() {
        assert!((printed::det(PI, 0.125) - 0.75 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn slope_fit() {
        let pts = [(1e-2, 3e-2), (1e-3, 3e-3), (1e-4, 3e-4)];
        assert!((fit_slope(&pts).unwrap() - 1.0).abs() < 1e-12);
        assert!(fit_slope(&pts[..1]).is_none());
    }

    #[test]
    fn no_impulse_variant_has_no_roots() {
        let fx = fixture("paper-example-no-impulse");
        let mel = Melnikov::new(&fx.family, &fx.schedule, fx.setup, 1e-10);
        let opts = RootOptions {
            grid_phase: 16,
            grid_energy: 8,
            ..RootOptions::default()
        };
        let search = find_roots(&mel, &opts).unwrap();
        assert_eq!(search.path, RootPath::Isochronous);
        assert_eq!(search.accepted().count(), 0);
    }

    #[test]
    fn oscillator_roots_and_verification() {
        let fx = fixture("paper-example");
        let mel = Melnikov::new(&fx.family, &fx.schedule, fx.setup, 1e-10);
        let opts = RootOptions {
            grid_phase: 32,
            grid_energy: 16,
            ..RootOptions::default()
        };
        let search = find_roots(&mel, &opts).unwrap();
        let got: Vec<(f64, f64)> = search.accepted().map(|c| (c.t0, c.h0)).collect();
        let want = [(PI, 0.5), (1.25 * PI, 1.0), (1.5 * PI, 0.5)];
        assert_eq!(got.len(), 3, "{got:?}");
        for ((t, r), (wt, wr)) in got.iter().zip(want) {
            assert!((t - wt).abs() < 1e-7 && (r - wr).abs() < 1e-7, "{t} {r}");
        }
        let first = search.accepted().next().unwrap();
        let det = first.det.unwrap();
        assert!((det + PI * PI).abs() < 1e-4, "{det}");

        let report = verify_candidate(&mel, first, &DEFAULT_EPS_LADDER, &VerifyOptions::default()).unwrap();
        assert_eq!(report.status, VerificationStatus::Verified, "{report:?}");
        assert!(!report.seed_drift_flag);
        let slope = report.slope.unwrap();
        assert!((0.7..=1.3).contains(&slope));

        let mut shifted = *first;
        shifted.t0 += 0.3;
        let probe = verify_candidate(&mel, &shifted, &[1e-3], &VerifyOptions::default()).unwrap();
        assert!(probe.seed_drift_flag || probe.status == VerificationStatus::Refuted);
    }

    #[test]
    fn zero_perturbation_is_degenerate() {
        let fx = fixture("duffing-well");
        let sys = fx
            .family
            .system()
            .with_forcing(std::sync::Arc::new(|_t: f64, _x: Vec2, _e: f64| [0.0, 0.0]));
        let family = OrbitFamily::new(sys, fx.family.window(), 1e-12).unwrap();
        let sched = fx.schedule.with_maps(vec![jump_fn(|_, _| [0.0, 0.0])]).unwrap();
        let mel = Melnikov::new(&family, &sched, fx.setup, 1e-10);
        let opts = RootOptions {
            n_phase: 16,
            ..RootOptions::default()
        };
        let search = find_roots(&mel, &opts).unwrap();
        assert_eq!(search.path, RootPath::Nonisochronous);
        assert_eq!(search.candidates.len(), 16);
        assert!(search.candidates.iter().all(|c| !c.accepted));
    }

    #[test]
    fn duffing_roots_verify() {
        let fx = fixture("duffing-well");
        let mel = Melnikov::new(&fx.family, &fx.schedule, fx.setup, 1e-10);
        let opts = RootOptions {
            n_phase: 64,
            ..RootOptions::default()
        };
        let search = find_roots(&mel, &opts).unwrap();
        assert!(search.accepted().count() >= 2, "{search:?}");
        for c in search.accepted() {
            assert!(c.residual_m <= 1e-9 * search.scale.max(1.0));
            let oracle = mel.oracle_m(c.t0, c.h0, 1e-4).unwrap();
            assert!(oracle.abs() < 1e-2 * search.scale, "{oracle}");
        }
    }
}
