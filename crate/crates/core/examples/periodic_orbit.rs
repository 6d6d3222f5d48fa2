//! Shooting for a fixed point of the period map, without any Melnikov
//! prediction: start near a level curve and let Newton converge.
//!
//! cargo run --release --example periodic_orbit

use std::f64::consts::PI;

use impulse_melnikov::flow::{ImpulsiveFlow, NewtonOptions};
use impulse_melnikov::system::{builtin, Parameters};

fn main() {
    let b = builtin("paper-example", &Parameters::new()).unwrap();
    let eps = 1e-3;
    let flow = ImpulsiveFlow::new(&b.system, &b.schedule, eps, 1e-10).unwrap();
    for (t0bar, seed) in [(PI, [1.0, 0.0]), (1.5 * PI, [1.0, 0.0]), (1.25 * PI, [1.4, 0.0])] {
        match flow.find_periodic_orbit(t0bar, 1, 2.0 * PI, seed, &NewtonOptions::default()) {
            Ok(orbit) => {
                let radius: Vec<f64> = orbit
                    .trajectory
                    .sample(8)
                    .iter()
                    .map(|(_, x)| x[0].hypot(x[1]))
                    .collect();
                println!(
                    "t0bar = {t0bar:.6}: x0 = ({:+.9}, {:+.9}) after {} iterations, residual {:.1e}",
                    orbit.x0[0], orbit.x0[1], orbit.iterations, orbit.residual
                );
                println!("  |x(t)| along the orbit: {radius:.5?}");
            }
            Err(e) => println!("t0bar = {t0bar:.6}: {e}"),
        }
    }
}
