//! Generates one instance per family, validates it and prints its shape.
//!
//! cargo run --example generate -- /tmp/hydro.json

use msddp::generate::{generate_instance, GeneratorSpec};
use msddp::model::validate_instance;

fn main() -> msddp::Result<()> {
    let specs = [
        GeneratorSpec::inventory(3, vec![1, 2, 2], 1, 1),
        GeneratorSpec::hydro_toy(4, vec![1, 3, 3, 3], 2),
        GeneratorSpec::random_lp(3, vec![1, 2, 2], 2, 3),
    ];
    for spec in &specs {
        let inst = generate_instance(spec)?;
        let violations = validate_instance(&inst);
        println!(
            "{:?}: T = {}, N = {:?}, n = {:?}, lambda = {}, violations = {}",
            spec.family,
            inst.num_stages,
            inst.scenario_counts(),
            inst.stages.iter().map(|s| s.n).collect::<Vec<_>>(),
            inst.lambda,
            violations.len()
        );
    }

    let mut bad = GeneratorSpec::random_lp(3, vec![1, 2, 2], 2, 3);
    bad.params.box_width = 0.0;
    println!("zero-width box: {}", generate_instance(&bad).unwrap_err());

    if let Some(path) = std::env::args().nth(1) {
        generate_instance(&specs[1])?.save(&path)?;
        println!("wrote {path}");
    }
    Ok(())
}
