//! Energy-only path: the Duffing well is not isochronous, so the resonant
//! level h0 is fixed and M(., h0) is solved in phase alone.
//!
//! cargo run --release --example duffing_harmonics [kick]

use impulse_melnikov::action_angle::{validate_resonance, OrbitFamily, ResonanceRequest};
use impulse_melnikov::bifurcation::{find_roots, verify_candidate, RootOptions, VerifyOptions, DEFAULT_EPS_LADDER};
use impulse_melnikov::melnikov::Melnikov;
use impulse_melnikov::system::{builtin, Parameters};

fn main() {
    let mut params = Parameters::new();
    if let Some(kick) = std::env::args().nth(1).and_then(|s| s.parse().ok()) {
        params.insert("kick".to_string(), kick);
    }
    let b = builtin("duffing-well", &params).unwrap();
    let family = OrbitFamily::new(b.system, b.window, 1e-10).unwrap();
    let setups = validate_resonance(&family, &b.schedule, ResonanceRequest::Auto { m_max: 3 }).unwrap();

    for setup in setups {
        let h0 = setup.h0.unwrap();
        println!("T(h0)/T = {}/{} at h0 = {h0:.10}", setup.m, setup.k);
        let mel = Melnikov::new(&family, &b.schedule, setup, 1e-10);
        let search = find_roots(&mel, &RootOptions::default()).unwrap();
        if search.candidates.is_empty() {
            println!("  M(., h0) has no sign change: no orbit predicted");
        }
        for c in &search.candidates {
            println!(
                "  t0 = {:.9}  Omega' = {:+.5}  dM/dr = {:+.5}  accepted: {}",
                c.t0,
                c.omega_prime.unwrap(),
                c.dm_dr.unwrap(),
                c.accepted
            );
            if c.accepted {
                let v = verify_candidate(&mel, c, &DEFAULT_EPS_LADDER, &VerifyOptions::default()).unwrap();
                println!(
                    "    {}: {:?}, slope {:.4}",
                    v.classification,
                    v.status,
                    v.slope.unwrap_or(f64::NAN)
                );
            }
        }
    }
}
