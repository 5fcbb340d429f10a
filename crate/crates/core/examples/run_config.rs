//! The experiment runner driven by a JSON document.

use qdopt::runner::{execute, ExperimentConfig};

fn main() -> qdopt::Result<()> {
    let config = ExperimentConfig::from_json(
        r#"{
            "command": "verify-local-opt",
            "channel": { "s": [1.0, 3.0], "l": [1.0, 2.0] },
            "dim": 30,
            "beta_grid": { "extent": 1.0, "step": 0.5 },
            "tolerances": { "psd": 1e-8 }
        }"#,
    )?;
    let out = execute(&config)?;
    for c in &out.report.checks {
        println!("{:<5} {} = {:.3e}", if c.pass { "pass" } else { "FAIL" }, c.name, c.value);
    }
    println!("exit status {}", out.report.exit_status);
    print!("{}", out.csv().lines().take(3).collect::<Vec<_>>().join("\n"));
    println!();
    Ok(())
}
