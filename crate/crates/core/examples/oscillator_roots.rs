//! Solve M = N = 0 for the impulsive oscillator, verify every accepted root
//! by shooting, and compare against the printed closed forms.
//!
//! cargo run --release --example oscillator_roots

use impulse_melnikov::action_angle::{validate_resonance, OrbitFamily, ResonanceRequest};
use impulse_melnikov::bifurcation::{
    find_roots, reference_comparison, verify_candidate, RootOptions, VerifyOptions, DEFAULT_EPS_LADDER,
};
use impulse_melnikov::melnikov::Melnikov;
use impulse_melnikov::system::{builtin, Parameters};

fn main() {
    let b = builtin("paper-example", &Parameters::new()).unwrap();
    let family = OrbitFamily::new(b.system, b.window, 1e-10).unwrap();
    let setup = validate_resonance(&family, &b.schedule, ResonanceRequest::Order(1)).unwrap()[0];
    let mel = Melnikov::new(&family, &b.schedule, setup, 1e-10);

    let search = find_roots(&mel, &RootOptions::default()).unwrap();
    println!("{:?} path, scale {:.6}", search.path, search.scale);
    for c in &search.candidates {
        println!(
            "  t0 = {:.10}  h0 = {:.10}  J = {:+.6}  accepted: {}",
            c.t0,
            c.h0,
            c.det.unwrap_or(f64::NAN),
            c.accepted
        );
    }

    for c in search.accepted() {
        let report = verify_candidate(&mel, c, &DEFAULT_EPS_LADDER, &VerifyOptions::default()).unwrap();
        println!(
            "\n{} at t0 = {:.6}, h0 = {:.6}: {:?}",
            report.classification, c.t0, c.h0, report.status
        );
        for r in &report.records {
            println!(
                "  eps {:<7} residual {:.2e}  d(eps) {:.4e}",
                r.eps,
                r.residual.unwrap_or(f64::NAN),
                r.distance.unwrap_or(f64::NAN)
            );
        }
        println!(
            "  slope of log d against log eps: {:.4}",
            report.slope.unwrap_or(f64::NAN)
        );
    }

    println!("\nprinted closed forms against computed values and the oracle:");
    for e in reference_comparison(&mel, &search, 1e-4).unwrap() {
        println!(
            "  ({:.6}, {:.6}): printed M {:+.6}, computed M {:+.6}, oracle M {:+.6}, root confirmed: {}",
            e.t0, e.r, e.printed_m, e.computed_m, e.oracle_m, e.oracle_confirms_root
        );
    }
}
