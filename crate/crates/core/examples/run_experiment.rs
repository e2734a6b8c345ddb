//! Drive a suite programmatically: build a configuration, print its plan,
//! run it and write the outputs with a manifest.

use rwre_lab::cli::{describe, run, write_outputs, ExperimentConfig};
use serde_json::json;

fn main() -> rwre_lab::Result<()> {
    let dir = std::env::temp_dir().join("rwre-lab-example");
    let cfg = ExperimentConfig::from_value(json!({
        "experiment": "collisions",
        "law": {"nu": 1, "steps": [[-1], [1]], "kind": "dirichlet", "alphas": [1, 1]},
        "n": 64,
        "M": 300,
        "n_pairs": 5000,
        "output_dir": dir,
    }))?;
    print!("{}", describe(&cfg));
    let out = run(&cfg)?;
    for r in &out.reports {
        println!("{} {}", if r.pass { "PASS" } else { "FAIL" }, r.name);
    }
    for path in write_outputs(&cfg.output_dir, &cfg, &out, 0.0)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
