//! Background refactorization: the simulation hands matrix snapshots to a
//! dedicated thread and keeps stepping with the last finished factors.

use std::time::Instant;

use fastfem::integrator::{IntegratorConfig, LinearSolver, System};
use fastfem::krylov::{SolverConfig, SolverMode};
use fastfem::mesh::generate_beam;
use fastfem::models::{build_model, MaterialLaw, MaterialParams};
use fastfem::ndprecond::{AsyncConfig, RefactorPolicy};

fn main() -> fastfem::Result<()> {
    let mesh = generate_beam(6, 6, 40, 0.01)?.fix_nodes_where(|p| p[2] == 0.0);
    let params = MaterialParams::new(1e6, 0.3, 1000.0)?;
    let model = build_model(MaterialLaw::Corotational, &mesh, &params)?;
    let cfg = IntegratorConfig {
        gravity: [0.0, -9.81, 0.0],
        ..IntegratorConfig::default()
    };
    let mut system = System::new(mesh, model, params, cfg, &[])?;
    let mut state = system.initial_state();
    let mut solver = LinearSolver::new(
        SolverConfig {
            mode: SolverMode::PcgLdlt,
            ..SolverConfig::default()
        },
        Some(AsyncConfig {
            policy: RefactorPolicy::OnCompletion,
            swap_lag: None,
            ..AsyncConfig::default()
        }),
    )?;
    println!("step  ms     iters  status       staleness  swaps");
    for _ in 0..30 {
        let t = Instant::now();
        let r = system.step(&mut state, &mut solver)?;
        let p = solver.preconditioner().expect("ldlt mode");
        println!(
            "{:>4}  {:>6.2} {:>5}  {:<11}  {:>9}  {:>5}",
            r.step + 1,
            t.elapsed().as_secs_f64() * 1e3,
            r.iterations,
            r.solve.status.to_string(),
            r.solve.staleness.map_or("-".into(), |s| s.to_string()),
            p.swap_count()
        );
    }
    Ok(())
}
