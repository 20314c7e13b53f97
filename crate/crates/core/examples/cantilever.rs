//! Implicit backward Euler on a clamped beam bending under gravity.

use fastfem::integrator::{IntegratorConfig, LinearSolver, System};
use fastfem::krylov::{SolverConfig, SolverMode};
use fastfem::mesh::generate_beam;
use fastfem::models::{build_model, MaterialLaw, MaterialParams};
use fastfem::ndprecond::AsyncConfig;

fn main() -> fastfem::Result<()> {
    let mesh = generate_beam(4, 4, 20, 0.01)?.fix_nodes_where(|p| p[2] == 0.0);
    let tip = mesh.num_nodes() - 1;
    let params = MaterialParams::new(1e6, 0.3, 1000.0)?;
    let model = build_model(MaterialLaw::Corotational, &mesh, &params)?;
    let cfg = IntegratorConfig {
        h: 0.01,
        rayleigh_mass: 0.5,
        rayleigh_stiffness: 0.01,
        gravity: [0.0, -9.81, 0.0],
        ..IntegratorConfig::default()
    };
    let mut system = System::new(mesh, model, params, cfg, &[])?;
    let mut state = system.initial_state();
    let tip_y0 = state.x[3 * tip + 1];
    let mut solver = LinearSolver::new(
        SolverConfig {
            mode: SolverMode::PcgLdlt,
            ..SolverConfig::default()
        },
        Some(AsyncConfig {
            swap_lag: Some(1),
            ..AsyncConfig::default()
        }),
    )?;
    for _ in 0..100 {
        let r = system.step(&mut state, &mut solver)?;
        if (r.step + 1) % 10 == 0 {
            println!(
                "t = {:.2} s  tip deflection {:+.5} m  iterations {:>3}  precond {} ({})",
                state.t,
                state.x[3 * tip + 1] - tip_y0,
                r.iterations,
                r.solve.status,
                r.solve.preconditioner
            );
        }
    }
    println!("pattern builds: {}", system.rebuild_count());
    Ok(())
}
