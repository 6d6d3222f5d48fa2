use std::f64::consts::PI;

use impulse_melnikov::expr::{parse, BinOp, Bindings, Expr, Func, Program};
use impulse_melnikov::flow::ImpulsiveFlow;
use impulse_melnikov::system::{builtin, numeric_gradient, Builtin, Parameters, BUILTIN_NAMES};
use proptest::prelude::*;

fn num(v: f64) -> Expr {
    Expr::Num(v)
}

fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
    Expr::binary(op, a, b)
}

fn call(f: Func, a: Expr) -> Expr {
    Expr::Call(f, Box::new(a))
}

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        Just(Expr::var("x")),
        Just(Expr::var("y")),
        prop::sample::select(vec![0.5, 1.0, 1.5, 2.0, 0.25]).prop_map(num),
        Just(Expr::Pi),
    ]
}

/// Expressions that are smooth on all of R^2.
fn smooth_expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(4, 32, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| bin(BinOp::Add, a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| bin(BinOp::Sub, a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| bin(BinOp::Mul, a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| bin(
                BinOp::Div,
                a,
                bin(BinOp::Add, num(1.0), bin(BinOp::Pow, b, num(2.0)))
            )),
            (inner.clone(), prop::sample::select(vec![2.0, 3.0])).prop_map(|(a, k)| bin(BinOp::Pow, a, num(k))),
            inner.clone().prop_map(|a| call(Func::Sin, a)),
            inner.clone().prop_map(|a| call(Func::Cos, a)),
            inner.clone().prop_map(|a| call(Func::Exp, call(Func::Sin, a))),
            inner
                .clone()
                .prop_map(|a| call(Func::Sqrt, bin(BinOp::Add, num(1.0), bin(BinOp::Pow, a, num(2.0))))),
            inner
                .clone()
                .prop_map(|a| call(Func::Log, bin(BinOp::Add, num(2.0), call(Func::Cos, a)))),
            inner.prop_map(|a| Expr::Neg(Box::new(a))),
        ]
    })
}

/// Any syntax the printer can produce, including nested negation and
/// general powers.
fn any_expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(5, 48, 2, |inner| {
        let ops = prop::sample::select(vec![BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Pow]);
        let funcs = prop::sample::select(vec![Func::Sin, Func::Cos, Func::Tan, Func::Exp, Func::Log, Func::Sqrt]);
        prop_oneof![
            (ops, inner.clone(), inner.clone()).prop_map(|(op, a, b)| bin(op, a, b)),
            (funcs, inner.clone()).prop_map(|(f, a)| call(f, a)),
            inner.prop_map(|a| Expr::Neg(Box::new(a))),
        ]
    })
}

fn at(x: f64, y: f64) -> Bindings {
    Bindings::new().with("x", x).with("y", y)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, max_global_rejects: 20_000, ..ProptestConfig::default() })]

    #[test]
    fn partial_matches_central_difference(e in smooth_expr(), x in -1.0..1.0f64, y in -1.0..1.0f64) {
        let f = e.eval(&at(x, y)).unwrap();
        prop_assume!(f.is_finite() && f.abs() < 1e3);
        let h = 1e-5;
        for (var, fd) in [
            ("x", (e.eval(&at(x + h, y)).unwrap() - e.eval(&at(x - h, y)).unwrap()) / (2.0 * h)),
            ("y", (e.eval(&at(x, y + h)).unwrap() - e.eval(&at(x, y - h)).unwrap()) / (2.0 * h)),
        ] {
            let exact = e.partial(var, &at(x, y)).unwrap();
            prop_assert!((exact - fd).abs() <= 1e-6 * (1.0 + exact.abs()), "{e}: d/d{var} {exact} vs {fd}");
        }
        let program = Program::compile(&e, &["x", "y"]).unwrap();
        let (value, grad) = program.gradient(&[x, y]).unwrap();
        prop_assert!((value - f).abs() <= 1e-12 * (1.0 + f.abs()));
        prop_assert!((grad[0] - e.partial("x", &at(x, y)).unwrap()).abs() <= 1e-10 * (1.0 + grad[0].abs()));
        prop_assert!((grad[1] - e.partial("y", &at(x, y)).unwrap()).abs() <= 1e-10 * (1.0 + grad[1].abs()));
    }

    #[test]
    fn print_parse_is_idempotent(e in any_expr(), x in -1.0..1.0f64, y in -1.0..1.0f64) {
        let printed = e.to_string();
        let reparsed = parse(&printed).unwrap();
        prop_assert_eq!(reparsed.to_string(), printed.clone());
        let (a, b) = (e.eval(&at(x, y)), reparsed.eval(&at(x, y)));
        if let (Ok(a), Ok(b)) = (a, b) {
            if a.is_finite() {
                prop_assert!(a == b || (a - b).abs() <= 1e-12 * a.abs(), "{printed}: {a} vs {b}");
            }
        }
    }
}

fn builtins() -> Vec<(&'static str, Builtin)> {
    BUILTIN_NAMES
        .iter()
        .map(|&n| (n, builtin(n, &Parameters::new()).unwrap()))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn vector_field_is_the_symplectic_gradient(dx in -0.6..0.6f64, dy in -0.6..0.6f64) {
        for (name, b) in builtins() {
            let c = b.system.center_hint();
            let x = [c[0] + dx, c[1] + dy];
            let f = b.system.vector_field(x);
            let g = numeric_gradient(|p| b.system.energy(p), x);
            let d = (f[0] - g[1]).hypot(f[1] + g[0]);
            prop_assert!(d <= 1e-8 * (1.0 + f[0].hypot(f[1])), "{name}: {d}");
        }
    }

    #[test]
    fn forcing_is_periodic(t in -20.0..20.0f64, x1 in -2.0..2.0f64, x2 in -2.0..2.0f64) {
        for (name, b) in builtins() {
            let t1 = b.system.forcing_period();
            // t + t1 is itself rounded, so agreement is up to the rounding of
            // the time argument.
            let (a, c) = (b.system.forcing(t + t1, [x1, x2], 0.0), b.system.forcing(t, [x1, x2], 0.0));
            let slack = 8.0 * f64::EPSILON * (t.abs() + t1) * (1.0 + x1.abs() + x2.abs());
            prop_assert!((a[0] - c[0]).abs() <= slack && (a[1] - c[1]).abs() <= slack, "{name}: {a:?} vs {c:?}");
        }
    }

    #[test]
    fn impulse_windows_hold_n_q_times(ta in -30.0..30.0f64, n in 1usize..6) {
        for (name, b) in builtins() {
            let t2 = b.schedule.window_period();
            let avoids = b.schedule.base_times().iter().all(|&s| ((ta - s) / t2 - ((ta - s) / t2).round()).abs() > 1e-9);
            prop_assume!(avoids);
            let times = b.schedule.impulse_times_in(ta, ta + n as f64 * t2);
            prop_assert_eq!(times.len(), n * b.schedule.count(), "{}", name);
            prop_assert!(times.windows(2).all(|w| w[0].time < w[1].time));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn jumps_are_exact(t0 in 0.0..7.0f64, eps in 1e-4..5e-2f64, r in 0.3..1.2f64) {
        for (name, b) in builtins() {
            let c = b.system.center_hint();
            let flow = ImpulsiveFlow::new(&b.system, &b.schedule, eps, 1e-9).unwrap();
            let traj = flow.simulate(t0, [c[0] + r * 0.4, c[1]], 3.0 * 2.0 * PI).unwrap();
            prop_assert_eq!(traj.jumps().len(), 3 * b.schedule.count());
            for j in traj.jumps() {
                let l = b.schedule.jump(j.map_index, j.before, eps);
                prop_assert_eq!(j.after, [j.before[0] + eps * l[0], j.before[1] + eps * l[1]], "{}", name);
                prop_assert_eq!(traj.at(j.time), Some(j.before));
                prop_assert_eq!(traj.right_limit(j.time), Some(j.after));
            }
        }
    }

    #[test]
    fn simulation_is_a_semigroup(t0 in 0.0..7.0f64, split in 0.05..0.95f64, eps in 1e-3..2e-2f64) {
        let tol = 1e-10;
        for (name, b) in builtins() {
            let c = b.system.center_hint();
            let x0 = [c[0] + 0.3, c[1] + 0.1];
            let span = 2.0 * PI;
            let tb = t0 + split * span;
            let on_impulse = b.schedule.impulse_times_in(tb - 1e-6, tb + 1e-6);
            prop_assume!(on_impulse.is_empty());
            let flow = ImpulsiveFlow::new(&b.system, &b.schedule, eps, tol).unwrap();
            let whole = flow.simulate(t0, x0, span).unwrap().end();
            let first = flow.simulate(t0, x0, tb - t0).unwrap().end();
            let second = flow.simulate(tb, first, t0 + span - tb).unwrap().end();
            let d = (whole[0] - second[0]).hypot(whole[1] - second[1]);
            prop_assert!(d <= 10.0 * tol * (1.0 + whole[0].hypot(whole[1])), "{name}: {d:e}");
        }
    }

    #[test]
    fn poincare_map_composes(t0 in 0.0..7.0f64, eps in 1e-3..2e-2f64) {
        let tol = 1e-10;
        for (name, b) in builtins() {
            let c = b.system.center_hint();
            let x0 = [c[0] + 0.25, c[1] - 0.05];
            let flow = ImpulsiveFlow::new(&b.system, &b.schedule, eps, tol).unwrap();
            let t = 2.0 * PI;
            let twice = flow.poincare(t0, x0, 2, t).unwrap();
            let once = flow.poincare(t0, x0, 1, t).unwrap();
            let composed = flow.poincare(t0, once, 1, t).unwrap();
            let d = (twice[0] - composed[0]).hypot(twice[1] - composed[1]);
            prop_assert!(d <= 10.0 * tol * (1.0 + twice[0].hypot(twice[1])), "{name}: {d:e}");
        }
    }
}

#[test]
fn energy_expansion_has_first_order_richardson_ratio() {
    let b = builtin("paper-example", &Parameters::new()).unwrap();
    let x0 = [0.9, 0.2];
    let h0 = b.system.energy(x0);
    let coefficient = |eps: f64| {
        let flow = ImpulsiveFlow::new(&b.system, &b.schedule, eps, 1e-12).unwrap();
        (b.system.energy(flow.poincare(0.5, x0, 1, 2.0 * PI).unwrap()) - h0) / eps
    };
    let (c1, c2, c3) = (coefficient(4e-3), coefficient(2e-3), coefficient(1e-3));
    let ratio = (c1 - c2) / (c2 - c3);
    assert!((ratio - 2.0).abs() < 0.1, "{ratio}");
}
