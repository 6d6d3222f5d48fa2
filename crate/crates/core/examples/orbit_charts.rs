//! Level curves, period function and the action-angle frame of the
//! Duffing well.
//!
//! cargo run --example orbit_charts

use impulse_melnikov::action_angle::OrbitFamily;
use impulse_melnikov::system::{builtin, Parameters};

fn main() {
    let b = builtin("duffing-well", &Parameters::new()).unwrap();
    let family = OrbitFamily::new(b.system, b.window, 1e-11).unwrap();

    println!("{:>10} {:>14} {:>14} {:>14}", "h", "T(h)", "Omega(h)", "Omega'(h)");
    for h in family.shrunk_window().midpoints(6) {
        println!(
            "{h:>10.5} {:>14.10} {:>14.10} {:>14.8}",
            family.period(h).unwrap(),
            family.omega(h).unwrap(),
            family.omega_prime(h, None).unwrap()
        );
    }

    let h = -0.1;
    let chart = family.chart(h).unwrap();
    println!("\nanchor of L_h at h = {h}: {:?}", chart.anchor());
    for theta in [0.0, 1.0, 2.5, 4.0] {
        let fr = family.frame(theta, h).unwrap();
        println!(
            "theta {theta:3.1}: G = ({:+.6}, {:+.6})  alpha = ({:+.6}, {:+.6})",
            fr.g[0], fr.g[1], fr.alpha[0], fr.alpha[1]
        );
    }

    let worst = family.identity_suite(20, 5).unwrap();
    println!("\nworst identity residuals on a 20x5 grid: {worst:#?}");
    println!("within bounds: {}", worst.within_bounds());
}
