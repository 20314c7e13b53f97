//! A soft beam dropped onto the ground plane. Contacts are solved with
//! projected Gauss-Seidel on the compliance matrix; the system matrix and its
//! pattern stay untouched.

use fastfem::contact::{ContactConfig, PlaneContact};
use fastfem::integrator::{IntegratorConfig, LinearSolver, System};
use fastfem::krylov::{SolverConfig, SolverMode};
use fastfem::mesh::generate_beam;
use fastfem::models::{build_model, MaterialLaw, MaterialParams};
use fastfem::ndprecond::AsyncConfig;

fn main() -> fastfem::Result<()> {
    let mesh = generate_beam(12, 3, 3, 0.02)?.translated([0.0, 0.0, 0.05]);
    let params = MaterialParams::new(5e4, 0.3, 1000.0)?;
    let model = build_model(MaterialLaw::Stvk, &mesh, &params)?;
    let cfg = IntegratorConfig {
        rayleigh_mass: 0.1,
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
            swap_lag: Some(1),
            ..AsyncConfig::default()
        }),
    )?;
    let contact = PlaneContact::new(ContactConfig {
        enabled: true,
        plane_z: 0.0,
        ..ContactConfig::default()
    })?;
    for _ in 0..150 {
        let (r, c) = contact.step(&mut system, &mut state, &mut solver)?;
        if (r.step + 1) % 15 == 0 {
            let lowest = state.x.chunks_exact(3).map(|p| p[2]).fold(f64::INFINITY, f64::min);
            println!(
                "step {:>3}: lowest z {:+.2e}  constraints {:>3} active {:>3}  lcp residual {:.1e}  sweeps {}",
                r.step + 1,
                lowest,
                c.constraints,
                c.active,
                c.lcp_residual,
                c.pgs_sweeps
            );
        }
    }
    println!("pattern builds: {}", system.rebuild_count());
    Ok(())
}
