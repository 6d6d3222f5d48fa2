//! Acceptance criteria, one line each. Run with `cargo test --test verify_acceptance`.

use std::f64::consts::{PI, TAU};
use std::num::NonZeroU32;
use std::sync::Arc;
use std::time::{Duration, Instant};

use impulse_melnikov::action_angle::{validate_resonance, OrbitFamily, ResonanceRequest, ResonanceSetup};
use impulse_melnikov::bifurcation::{
    classify, find_roots, mn_jacobian, printed, reference_comparison, verify_candidate, Classification, RootCandidate,
    RootOptions, RootPath, RootSearch, VerificationReport, VerifyOptions, DEFAULT_EPS_LADDER,
};
use impulse_melnikov::flow::ImpulsiveFlow;
use impulse_melnikov::melnikov::Melnikov;
use impulse_melnikov::system::{builtin, jump_fn, ImpulseSchedule, Parameters, Vec2, BUILTIN_NAMES};
use proptest::test_runner::{Config, TestRunner};

type Check = Result<String, String>;

struct Problem {
    family: OrbitFamily,
    schedule: ImpulseSchedule,
    setup: ResonanceSetup,
    tol: f64,
}

impl Problem {
    fn new(name: &str, tol: f64) -> Problem {
        let b = builtin(name, &Parameters::new()).unwrap();
        let family = OrbitFamily::new(b.system, b.window, tol).unwrap();
        let setup = validate_resonance(&family, &b.schedule, ResonanceRequest::Order(1)).unwrap()[0];
        Problem {
            family,
            schedule: b.schedule,
            setup,
            tol,
        }
    }

    fn melnikov(&self) -> Melnikov<'_> {
        Melnikov::new(&self.family, &self.schedule, self.setup, self.tol)
    }
}

fn within(elapsed: Duration, limit: f64) -> Check {
    if elapsed.as_secs_f64() < limit {
        Ok(String::new())
    } else {
        Err(format!("took {:.1} s, limit {limit} s", elapsed.as_secs_f64()))
    }
}

/// Frame identities on a 20x5 grid.
fn ac1() -> Check {
    let start = Instant::now();
    let mut worst = Vec::new();
    for name in ["paper-example", "duffing-well"] {
        let p = Problem::new(name, 1e-10);
        let r = p.family.identity_suite(20, 5).map_err(|e| format!("{name}: {e}"))?;
        if !r.within_bounds() {
            return Err(format!("{name}: residuals {r:?} exceed the bounds"));
        }
        worst.push(format!(
            "{name} max {:.1e}",
            [
                r.energy,
                r.tangency,
                r.normalization,
                r.alpha_dh,
                r.alpha_dtheta,
                r.periodicity
            ]
            .into_iter()
            .fold(0.0, f64::max)
        ));
    }
    within(start.elapsed(), 10.0)?;
    Ok(worst.join(", "))
}

/// Isochrony and resonance of the oscillator.
fn ac2() -> Check {
    let p = Problem::new("paper-example", 1e-10);
    let mut dev: f64 = 0.0;
    for i in 0..=40 {
        let h = 0.05 + 0.95 * i as f64 / 40.0;
        dev = dev.max((p.family.period(h).map_err(|e| e.to_string())? - TAU).abs());
    }
    if dev > 1e-9 {
        return Err(format!("max |T(h) - 2 pi| = {dev:e}"));
    }
    let s = p.setup;
    if (s.p, s.s, s.m, s.k) != (1, 1, 1, 1) || (s.period - TAU).abs() > 1e-12 || !s.isochronous {
        return Err(format!("setup {s:?}"));
    }
    Ok(format!("max |T(h) - 2 pi| = {dev:.1e}; p = s = m = K = 1, T = 2 pi"))
}

/// Halving ladder from 1e-2 down to 1e-4.
fn halving_ladder() -> Vec<f64> {
    (0..7).map(|k| 1e-2 / f64::powi(2.0, k)).collect()
}

/// `|value - oracle(eps)| <= C eps` and `e(eps) / e(eps / 2)` in `[1.6, 2.4]`.
fn first_order(value: f64, oracle: &[f64], ladder: &[f64], c: f64) -> Result<(f64, f64, f64), String> {
    let errs: Vec<f64> = oracle.iter().map(|o| (o - value).abs()).collect();
    let mut worst_c: f64 = 0.0;
    for (e, eps) in errs.iter().zip(ladder) {
        worst_c = worst_c.max(e / eps);
    }
    if worst_c > c {
        return Err(format!("error/eps reaches {worst_c:.3}"));
    }
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
    let (lo, hi) = ratios
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &r| (a.min(r), b.max(r)));
    if lo < 1.6 || hi > 2.4 {
        return Err(format!("ratios {ratios:.3?}"));
    }
    Ok((worst_c, lo, hi))
}

/// Melnikov functions against the finite-eps oracle.
fn ac3() -> Check {
    let start = Instant::now();
    // C is per unit of max(1, |M|) over the grid.
    let c = 10.0;
    let ladder = halving_ladder();
    let mut out = Vec::new();
    for name in ["paper-example", "duffing-well"] {
        let p = Problem::new(name, 1e-12);
        let mel = p.melnikov();
        let w = p.family.shrunk_window();
        let grid: Vec<(f64, f64)> = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .map(|(i, j)| {
                let t = p.setup.period * (0.1 + 0.23 * i as f64);
                (t, w.h_min + w.width() * (0.12 + 0.25 * j as f64))
            })
            .collect();
        let samples: Vec<_> = grid.iter().map(|&(t, r)| mel.sample(t, r).unwrap()).collect();
        let scale = samples.iter().map(|s| s.big_m.value.abs()).fold(1.0, f64::max);
        let (mut worst, mut lo, mut hi) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY);
        for (&(t, r), s) in grid.iter().zip(&samples) {
            let om: Vec<f64> = ladder.iter().map(|&e| mel.oracle_m(t, r, e).unwrap()).collect();
            let (cm, a, b) = first_order(s.big_m.value, &om, &ladder, c * scale)
                .map_err(|e| format!("{name} M at ({t:.3}, {r:.3}): {e}"))?;
            worst = worst.max(cm / scale);
            (lo, hi) = (lo.min(a), hi.max(b));
            if let Some(n) = s.big_n {
                let on: Vec<f64> = ladder.iter().map(|&e| mel.oracle_n(t, r, e).unwrap()).collect();
                let (cn, a, b) = first_order(n.value, &on, &ladder, c * scale)
                    .map_err(|e| format!("{name} N at ({t:.3}, {r:.3}): {e}"))?;
                worst = worst.max(cn / scale);
                (lo, hi) = (lo.min(a), hi.max(b));
            }
        }
        out.push(format!("{name}: C/scale {worst:.2}, ratios [{lo:.3}, {hi:.3}]"));
    }
    within(start.elapsed(), 120.0)?;
    Ok(out.join("; "))
}

/// Periodicity of M over one common period.
fn ac4() -> Check {
    let mut out = Vec::new();
    for name in ["paper-example", "duffing-well"] {
        let p = Problem::new(name, 1e-10);
        let mel = p.melnikov();
        let w = p.family.shrunk_window();
        let t: Vec<f64> = (0..64).map(|i| p.setup.period * i as f64 / 63.0).collect();
        let r: Vec<f64> = (0..16).map(|j| w.h_min + w.width() * j as f64 / 15.0).collect();
        let shifted: Vec<f64> = t.iter().map(|x| x + p.setup.period).collect();
        let a = mel.scan(&t, &r).map_err(|e| e.to_string())?;
        let b = mel.scan(&shifted, &r).map_err(|e| e.to_string())?;
        let value = |c: &Result<_, _>| -> Result<f64, String> {
            let s: &impulse_melnikov::melnikov::MelnikovSample = c.as_ref().map_err(|e| format!("{e:?}"))?;
            Ok(s.big_m.value)
        };
        let (mut dev, mut max_m) = (0.0f64, 0.0f64);
        for (ca, cb) in a.cells.iter().zip(&b.cells) {
            let (x, y) = (value(ca)?, value(cb)?);
            dev = dev.max((x - y).abs());
            max_m = max_m.max(x.abs());
        }
        // boundary columns of the closed grid
        for j in 0..r.len() {
            dev = dev.max((value(a.get(0, j))? - value(a.get(63, j))?).abs());
        }
        let bound = 1e-8 * (1.0 + max_m);
        if dev > bound {
            return Err(format!("{name}: deviation {dev:e} > {bound:e}"));
        }
        out.push(format!("{name} {dev:.1e} <= {bound:.1e}"));
    }
    Ok(out.join(", "))
}

struct RootCase {
    search: RootSearch,
    elapsed: Duration,
}

fn search_oscillator(p: &Problem) -> RootCase {
    let start = Instant::now();
    let search = find_roots(&p.melnikov(), &RootOptions::default()).unwrap();
    RootCase {
        search,
        elapsed: start.elapsed(),
    }
}

fn phase_distance(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    d.min(period - d)
}

/// Root at `(t0, h0)` with orbit and slope checks. A root the solver did not
/// accept is still evaluated and verified from a candidate built in place.
fn root_checks(p: &Problem, case: &RootCase, t0: f64, h0: f64) -> Check {
    let start = Instant::now();
    let mel = p.melnikov();
    let mut problems = Vec::new();
    let found = case
        .search
        .accepted()
        .find(|c| phase_distance(c.t0, t0, p.setup.period) < 1e-6 && (c.h0 - h0).abs() < 1e-6)
        .copied();
    if found.is_none() {
        problems.push("no accepted root here".to_string());
    }
    let s = mel.sample(t0, h0).map_err(|e| e.to_string())?;
    let (m, n) = (s.big_m.value, s.big_n.map_or(f64::NAN, |n| n.value));
    if !(m.abs() <= 1e-8 && n.abs() <= 1e-8) {
        problems.push(format!("M = {m:.3e}, N = {n:.3e}"));
    }
    let j = mn_jacobian(&mel, t0, h0)?;
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    if det.abs() <= 1e-8 * case.search.scale.powi(2) {
        problems.push(format!("J = {det:e}"));
    }
    let candidate = found.unwrap_or(RootCandidate {
        t0,
        h0,
        m: NonZeroU32::MIN,
        path: RootPath::Isochronous,
        residual_m: m,
        residual_n: Some(n),
        omega_prime: None,
        dm_dr: None,
        jacobian: Some(j),
        det: Some(det),
        scale: case.search.scale,
        accepted: false,
    });
    let report: VerificationReport = verify_candidate(&mel, &candidate, &DEFAULT_EPS_LADDER, &VerifyOptions::default())
        .map_err(|e| e.to_string())?;
    if classify(&candidate) != Classification::Harmonic {
        problems.push("not harmonic".into());
    }
    let at = report.records.iter().find(|r| r.eps == 1e-3).unwrap();
    let radius = (2.0 * h0).sqrt();
    match (at.converged, at.residual, at.distance) {
        (true, Some(res), Some(d)) => {
            if res > 1e-8 {
                problems.push(format!("residual {res:e} at eps 1e-3"));
            }
            if d > 5.0 * 1e-3 {
                problems.push(format!(
                    "orbit {d:.3e} from the radius-{radius} circle shifted by {t0:.4} at eps 1e-3"
                ));
            }
        }
        _ => problems.push(format!(
            "no orbit at eps 1e-3: {}",
            at.error.clone().unwrap_or_default()
        )),
    }
    let slope = report.slope.unwrap_or(f64::NAN);
    if !(0.7..=1.3).contains(&slope) {
        problems.push(format!("slope {slope:.3}"));
    }
    let elapsed = case.elapsed + start.elapsed();
    if elapsed.as_secs_f64() >= 300.0 {
        problems.push(format!("took {:.1} s", elapsed.as_secs_f64()));
    }
    let summary = format!(
        "M = {m:.1e}, N = {n:.1e}, J = {det:.4}, d(1e-3) = {:.2e}, slope = {slope:.3}, {:.1} s",
        at.distance.unwrap_or(f64::NAN),
        elapsed.as_secs_f64()
    );
    if problems.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{}; {summary}", problems.join("; ")))
    }
}

/// The pinned root and its orbit.
fn ac5(p: &Problem, case: &RootCase) -> Check {
    root_checks(p, case, PI, 0.125)
}

/// The oracle-confirmed root nearest the pinned one, with the comparison
/// block for every printed root.
fn ac5_confirmed(p: &Problem, case: &RootCase) -> Check {
    let base = root_checks(p, case, PI, 0.5)?;
    let rows = reference_comparison(&p.melnikov(), &case.search, 1e-4).map_err(|e| e.to_string())?;
    if rows.len() < printed::ROOTS.len() {
        return Err("comparison block is missing printed roots".into());
    }
    let verdicts: Vec<String> = rows[..printed::ROOTS.len()]
        .iter()
        .map(|r| {
            format!(
                "({:.4}, {}) oracle M {:.3e} {}",
                r.t0,
                r.r,
                r.oracle_m,
                if r.oracle_confirms_root { "confirms" } else { "rejects" }
            )
        })
        .collect();
    Ok(format!(
        "{base}; printed J(pi, 1/8) = {:.4}; {}",
        printed::det(PI, 0.125),
        verdicts.join(", ")
    ))
}

/// Negative control without impulses.
fn ac6() -> Check {
    let p = Problem::new("paper-example-no-impulse", 1e-10);
    let mel = p.melnikov();
    let w = p.family.shrunk_window();
    let t: Vec<f64> = (0..64).map(|i| TAU * i as f64 / 63.0).collect();
    let r: Vec<f64> = (0..16).map(|j| w.h_min + w.width() * j as f64 / 15.0).collect();
    let table = mel.scan(&t, &r).map_err(|e| e.to_string())?;
    let mut dev: f64 = 0.0;
    for i in 0..t.len() {
        for (j, &rj) in r.iter().enumerate() {
            let s = table.get(i, j).as_ref().map_err(|e| format!("{e:?}"))?;
            dev = dev.max((s.big_m.value - TAU * rj).abs());
        }
    }
    if dev > 1e-8 {
        return Err(format!("max |M - 2 pi r| = {dev:e}"));
    }
    let search = find_roots(&mel, &RootOptions::default()).map_err(|e| e.to_string())?;
    let n = search.accepted().count();
    if n != 0 {
        return Err(format!("{n} accepted roots"));
    }
    Ok(format!("max |M - 2 pi r| = {dev:.1e}, no accepted roots"))
}

fn norm(v: Vec2) -> f64 {
    v[0].hypot(v[1])
}

fn scaled(schedule: &ImpulseSchedule, k: f64) -> ImpulseSchedule {
    let maps = (0..schedule.count())
        .map(|i| {
            let m = schedule.jump_map(i);
            jump_fn(move |x: Vec2, e: f64| {
                let v = m.eval(x, e);
                [k * v[0], k * v[1]]
            })
        })
        .collect();
    schedule.with_maps(maps).unwrap()
}

fn property(name: &str, cases: u32, f: impl Fn(f64, f64) -> Result<(), String>) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&(0.0..1.0f64, 0.0..1.0f64), |(a, b)| {
            f(a, b).map_err(proptest::test_runner::TestCaseError::fail)
        })
        .map_err(|e| format!("{name}: {e}"))
}

fn determinism(name: &str) -> Result<(), String> {
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("c.json");
    let text = format!(
        r#"{{"builtin": "{name}", "numerics": {{"scan": {{"n_phase": 16, "n_energy": 4}},
            "roots": {{"n_phase": 64, "grid_phase": 32, "grid_energy": 16}}}}}}"#
    );
    std::fs::write(&cfg, text).map_err(|e| e.to_string())?;
    for cmd in ["scan", "roots"] {
        let mut outputs = Vec::new();
        for threads in ["1", "3"] {
            let out = dir.path().join(format!("{cmd}-{threads}"));
            let args = [
                "melnikov",
                cmd,
                "--config",
                cfg.to_str().unwrap(),
                "--threads",
                threads,
                "--out",
                out.to_str().unwrap(),
            ];
            let code = impulse_melnikov::cli::run(args);
            if code != 0 {
                return Err(format!("{name} {cmd}: exit {code}"));
            }
            outputs.push(std::fs::read(&out).map_err(|e| e.to_string())?);
        }
        if outputs[0] != outputs[1] {
            return Err(format!("{name} {cmd}: output depends on the thread count"));
        }
    }
    Ok(())
}

/// Property suite on every builtin.
fn ac7() -> Check {
    for name in BUILTIN_NAMES {
        let p = Problem::new(name, 1e-10);
        let w = p.family.shrunk_window();
        let point = |a: f64, b: f64| (p.setup.period * a, w.h_min + w.width() * b);
        let doubled = scaled(&p.schedule, 2.0);
        property(&format!("{name} impulse linearity"), 8, |a, b| {
            let (t, r) = point(a, b);
            let one = p.melnikov().sample(t, r).map_err(|e| e.to_string())?;
            let two = Melnikov::new(&p.family, &doubled, p.setup, p.tol)
                .sample(t, r)
                .map_err(|e| e.to_string())?;
            let n_ok = match (one.big_n, two.big_n) {
                (Some(x), Some(y)) => y.impulse == 2.0 * x.impulse && y.integral == x.integral,
                _ => true,
            };
            (two.big_m.impulse == 2.0 * one.big_m.impulse && two.big_m.integral == one.big_m.integral && n_ok)
                .then_some(())
                .ok_or_else(|| format!("({t}, {r})"))
        })?;
        let silent = p
            .family
            .system()
            .with_forcing(Arc::new(|_t: f64, _x: Vec2, _e: f64| [0.0, 0.0]));
        let silent_family = OrbitFamily::new(silent, p.family.window(), p.tol).unwrap();
        let zero = scaled(&p.schedule, 0.0);
        property(&format!("{name} zero-perturbation nullity"), 8, |a, b| {
            let (t, r) = point(a, b);
            let s = Melnikov::new(&silent_family, &zero, p.setup, p.tol)
                .sample(t, r)
                .map_err(|e| e.to_string())?;
            (s.big_m.value == 0.0 && s.big_n.is_none_or(|n| n.value == 0.0))
                .then_some(())
                .ok_or_else(|| format!("({t}, {r})"))
        })?;
        let sys = p.family.system();
        let c = sys.center_hint();
        property(&format!("{name} jump consistency"), 16, |a, b| {
            let eps = 1e-4 + 5e-2 * b;
            let flow = ImpulsiveFlow::new(sys, &p.schedule, eps, 1e-9).map_err(|e| e.to_string())?;
            let traj = flow
                .simulate(7.0 * a, [c[0] + 0.3, c[1]], 3.0 * TAU)
                .map_err(|e| e.to_string())?;
            for j in traj.jumps() {
                let l = p.schedule.jump(j.map_index, j.before, eps);
                let exact = j.after == [j.before[0] + eps * l[0], j.before[1] + eps * l[1]];
                if !exact || traj.at(j.time) != Some(j.before) || traj.right_limit(j.time) != Some(j.after) {
                    return Err(format!("jump at {}", j.time));
                }
            }
            (traj.jumps().len() == 3 * p.schedule.count())
                .then_some(())
                .ok_or_else(|| format!("{} jumps", traj.jumps().len()))
        })?;
        property(&format!("{name} Poincare composition"), 16, |a, b| {
            let eps = 1e-3 + 2e-2 * b;
            let flow = ImpulsiveFlow::new(sys, &p.schedule, eps, 1e-10).map_err(|e| e.to_string())?;
            let (t0, x0) = (7.0 * a, [c[0] + 0.25, c[1] - 0.05]);
            let twice = flow.poincare(t0, x0, 2, TAU).map_err(|e| e.to_string())?;
            let once = flow.poincare(t0, x0, 1, TAU).map_err(|e| e.to_string())?;
            let composed = flow.poincare(t0, once, 1, TAU).map_err(|e| e.to_string())?;
            let d = norm([twice[0] - composed[0], twice[1] - composed[1]]);
            (d <= 1e-9 * (1.0 + norm(twice)))
                .then_some(())
                .ok_or_else(|| format!("{d:e}"))
        })?;
        determinism(name)?;
    }
    Ok(format!(
        "linearity, nullity, jumps, Poincare composition, thread determinism on {}",
        BUILTIN_NAMES.join(", ")
    ))
}

fn report(label: &str, what: &str, check: Check) -> bool {
    match check {
        Ok(detail) => {
            println!("{label} PASS {what}: {detail}");
            true
        }
        Err(detail) => {
            println!("{label} FAIL {what}: {detail}");
            false
        }
    }
}

fn main() {
    // Accept and ignore libtest flags such as --nocapture.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |label: &str| filter.is_empty() || filter.iter().any(|f| label.contains(f.as_str()));
    let mut ok = true;
    let timed = |f: &dyn Fn() -> Check| {
        let start = Instant::now();
        f().map(|d| format!("{d} ({:.1} s)", start.elapsed().as_secs_f64()))
    };
    if wanted("AC1") {
        ok &= report("AC1", "frame identities", timed(&ac1));
    }
    if wanted("AC2") {
        ok &= report("AC2", "isochrony and resonance", timed(&ac2));
    }
    if wanted("AC3") {
        ok &= report("AC3", "Melnikov vs oracle", timed(&ac3));
    }
    if wanted("AC4") {
        ok &= report("AC4", "periodicity in phase", timed(&ac4));
    }
    if wanted("AC5") {
        let p = Problem::new("paper-example", 1e-10);
        let case = search_oscillator(&p);
        ok &= report("AC5", "root and orbit at (pi, 1/8)", ac5(&p, &case));
        ok &= report(
            "AC5b",
            "root and orbit at (pi, 1/2), comparison block",
            ac5_confirmed(&p, &case),
        );
    }
    if wanted("AC6") {
        ok &= report("AC6", "no-impulse control", timed(&ac6));
    }
    if wanted("AC7") {
        ok &= report("AC7", "property suite", timed(&ac7));
    }
    if !ok {
        std::process::exit(1);
    }
}
