//! Parse an expression, print it back and differentiate it.
//!
//! cargo run --example expressions -- "x2^2/2 + x1^4/4 - x1^2/2"

use impulse_melnikov::expr::{parse, Bindings, Program};

fn main() {
    let text = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "x2^2/2 + x1^4/4 - x1^2/2".to_string());
    let e = match parse(&text) {
        Ok(e) => e,
        Err(err) => {
            eprintln!("{text}\n{}^ {}", " ".repeat(err.offset), err.message);
            std::process::exit(1);
        }
    };
    println!("parsed:      {e}");
    println!("identifiers: {:?}", e.identifiers());

    let slots = ["x1", "x2"];
    let program = match Program::compile(&e, &slots) {
        Ok(p) => p,
        Err(name) => {
            eprintln!("undeclared identifier `{name}` (only x1, x2 are bound here)");
            std::process::exit(1);
        }
    };
    for x in [[0.5, 0.0], [1.2, -0.3], [-0.7, 0.9]] {
        let (value, grad) = program.gradient(&x).unwrap();
        let b = Bindings::new().with("x1", x[0]).with("x2", x[1]);
        let by_tree = e.partial("x1", &b).unwrap();
        println!(
            "x = {x:?}: value {value:.12}, gradient ({:.12}, {:.12}), d/dx1 via tree {by_tree:.12}",
            grad[0], grad[1]
        );
    }
}
