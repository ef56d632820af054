//! Drives the `run` and `compare` pipelines from a JSON config.

use std::path::Path;

use qbbgky::cli_io::{compare, load_config, run};

/// Final hierarchy-versus-oracle error of the bundled quartic config.
pub fn run_example() -> qbbgky::Result<f64> {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs/quartic_coherent.json");
    let cfg = load_config(&config)?;
    let out = std::env::temp_dir().join(format!("qbbgky_run_config_{}", std::process::id()));

    let report = run(&cfg, &out)?;
    println!("{} samples, number drift {:.2e}, energy drift {:.2e}", report.samples, report.max_number_drift, report.max_energy_drift);
    let cmp = compare(&cfg, &out)?;
    for (order, err) in &cmp.summary.max_error_by_order {
        println!("  Γ^{order} max error {err:.3e}");
    }
    println!("outputs in {}", out.display());
    let _ = std::fs::remove_dir_all(&out);
    Ok(cmp.summary.final_error)
}

fn main() -> qbbgky::Result<()> {
    run_example().map(|_| ())
}
