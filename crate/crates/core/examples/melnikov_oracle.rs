//! M and N of the impulsive oscillator against direct simulation.
//!
//! The oracle is the first-order displacement of one simulated Poincare
//! return; its error against the analytic value should halve with eps.
//!
//! cargo run --release --example melnikov_oracle

use impulse_melnikov::action_angle::{validate_resonance, OrbitFamily, ResonanceRequest};
use impulse_melnikov::melnikov::Melnikov;
use impulse_melnikov::system::{builtin, Parameters};

fn main() {
    let b = builtin("paper-example", &Parameters::new()).unwrap();
    let family = OrbitFamily::new(b.system, b.window, 1e-11).unwrap();
    let setup = validate_resonance(&family, &b.schedule, ResonanceRequest::Order(1)).unwrap()[0];
    let mel = Melnikov::new(&family, &b.schedule, setup, 1e-11);

    for (t, r) in [(0.4, 0.2), (2.0, 0.5), (4.0, 0.9)] {
        let s = mel.melnikov_n_iso(t, r).unwrap();
        let n = s.big_n.unwrap();
        println!(
            "t0bar = {t}, r = {r}: M = {:.9} (integral {:.6}, impulse {:.6}), N = {:.9}",
            s.big_m.value, s.big_m.integral, s.big_m.impulse, n.value
        );
        let mut previous: Option<(f64, f64)> = None;
        for eps in [1e-2, 5e-3, 2.5e-3] {
            let em = (mel.oracle_m(t, r, eps).unwrap() - s.big_m.value).abs();
            let en = (mel.oracle_n(t, r, eps).unwrap() - n.value).abs();
            let ratio = previous.map_or(String::new(), |(pm, pn)| {
                format!("  ratio {:.3} / {:.3}", pm / em, pn / en)
            });
            println!("  eps {eps:<7}: |M - oracle| = {em:.3e}, |N - oracle| = {en:.3e}{ratio}");
            previous = Some((em, en));
        }
    }
}
