//! The command pipeline driven from a JSON config, as the `melnikov` binary
//! does it.
//!
//! cargo run --release --example config_pipeline -- crates/core/examples/paper.json

use std::path::PathBuf;

use impulse_melnikov::cli::{load_config, roots, ResultRecord};

fn main() {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/paper.json"));
    let cfg = match load_config(&path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    };
    let problem = cfg.problem().unwrap();
    let outcome = roots(&cfg, &problem, false).unwrap();
    let record: ResultRecord = serde_json::from_str(&outcome.primary).unwrap();
    for v in &record.verifications {
        println!(
            "{} at (t0, h0) = ({:.8}, {:.8}): {:?}",
            v.classification, v.candidate.t0, v.candidate.h0, v.status
        );
    }
    for note in &record.notes {
        println!("note: {note}");
    }
    println!("exit code {}", outcome.exit_code);
}
