//! Direct simulation of the impulsive oscillator and its Poincare map.
//!
//! cargo run --example simulate

use impulse_melnikov::flow::ImpulsiveFlow;
use impulse_melnikov::system::{builtin, Parameters};

fn main() {
    let b = builtin("paper-example", &Parameters::new()).unwrap();
    let period = 2.0 * std::f64::consts::PI;

    for eps in [0.0, 1e-3] {
        let flow = ImpulsiveFlow::new(&b.system, &b.schedule, eps, 1e-10).unwrap();
        let x0 = [0.8, 0.0];
        let traj = flow.simulate(0.0, x0, 5.0 * period).unwrap();
        println!("eps = {eps:e}: {} jumps over 5 periods", traj.jumps().len());
        for j in traj.jumps() {
            println!(
                "  t = {:9.6}  H(x-) = {:.9}  H(x+) = {:.9}",
                j.time,
                b.system.energy(j.before),
                b.system.energy(j.after)
            );
        }
        let end = traj.end();
        println!(
            "  x(5T) = ({:.9}, {:.9}), H = {:.9}",
            end[0],
            end[1],
            b.system.energy(end)
        );
        let p5 = flow.poincare(0.0, x0, 5, period).unwrap();
        println!("  P^5(x0) = ({:.9}, {:.9})", p5[0], p5[1]);
    }
}
