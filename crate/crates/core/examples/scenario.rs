//! Drives the scenario runner from code: parse a JSON config, run it, and
//! compare bench variants. Output goes to a temporary directory.

use fastfem::cli::{bench, format_bench, run_scenario, ScenarioConfig, Variant};

const CONFIG: &str = r#"{
    "mesh": {
        "source": { "beam": { "nx": 4, "ny": 4, "nz": 16, "spacing": 0.01 } },
        "clamp": { "axis": "z", "value": 0.0 }
    },
    "material": { "law": "stvk", "young_modulus": 2e5, "poisson_ratio": 0.35, "density": 1000 },
    "integrator": { "h": 0.01, "gravity": [0.0, -9.81, 0.0], "rayleigh_mass": 0.2 },
    "run": { "steps": 20 },
    "output": { "snapshot_every": 10 }
}"#;

fn main() -> fastfem::Result<()> {
    let mut cfg = ScenarioConfig::from_json(CONFIG)?;
    cfg.redirect_output(&std::env::temp_dir().join("fastfem_scenario"));
    let run = run_scenario(&cfg, true)?;
    println!("{} metric rows, snapshots: {:?}", run.metrics.len(), run.snapshots);
    println!("metrics in {}", cfg.output.metrics_csv.as_ref().unwrap().display());
    let rows = bench(&cfg, &[Variant::Fast, Variant::Full, Variant::Cg, Variant::Pcg, Variant::Trisolve], true)?;
    print!("{}", format_bench(&rows));
    Ok(())
}
