//! Common period and resonant levels for the built-in problems.
//!
//! cargo run --example resonance

use impulse_melnikov::action_angle::{validate_resonance, OrbitFamily, ResonanceRequest};
use impulse_melnikov::system::{builtin, Parameters, BUILTIN_NAMES};

fn main() {
    for name in BUILTIN_NAMES {
        let b = builtin(name, &Parameters::new()).unwrap();
        let family = OrbitFamily::new(b.system, b.window, 1e-11).unwrap();
        match validate_resonance(&family, &b.schedule, ResonanceRequest::Auto { m_max: 4 }) {
            Ok(setups) => {
                println!("{name}:");
                for s in setups {
                    let level = s.h0.map_or("every level".to_string(), |h| format!("h0 = {h:.12}"));
                    println!(
                        "  T = {:.12} (p = {}, s = {}), T(h0)/T = {}/{}, {level}, isochronous: {}",
                        s.period, s.p, s.s, s.m, s.k, s.isochronous
                    );
                }
            }
            Err(e) => println!("{name}: {e}"),
        }
    }
}
