//! CG, Jacobi PCG and LDLᵀ PCG on the same system matrix of a deformed beam,
//! with fresh and stale factors.

use fastfem::integrator::{IntegratorConfig, LinearSolver, System};
use fastfem::krylov::{cg, pcg, JacobiPreconditioner, SolverConfig, SolverMode};
use fastfem::mesh::generate_beam;
use fastfem::models::{build_model, MaterialLaw, MaterialParams};
use fastfem::ndprecond::{ldlt_factor, FactorizerConfig};

fn main() -> fastfem::Result<()> {
    let mesh = generate_beam(5, 5, 25, 0.01)?.fix_nodes_where(|p| p[2] == 0.0);
    let params = MaterialParams::new(1e6, 0.3, 1000.0)?;
    let model = build_model(MaterialLaw::Corotational, &mesh, &params)?;
    let cfg = IntegratorConfig {
        gravity: [0.0, -9.81, 0.0],
        ..IntegratorConfig::default()
    };
    let mut system = System::new(mesh, model, params, cfg, &[])?;
    let mut state = system.initial_state();
    let mut stepper = LinearSolver::new(
        SolverConfig {
            mode: SolverMode::PcgJacobi,
            ..SolverConfig::default()
        },
        None,
    )?;
    let solve_cfg = SolverConfig::default();
    let mut stale = None;
    for step in 0..12 {
        system.step(&mut state, &mut stepper)?;
        system.assemble_system(&state)?;
        if step == 8 {
            stale = Some(ldlt_factor(system.matrix().unwrap(), FactorizerConfig::default())?);
        }
    }
    let a = system.matrix().unwrap();
    let b = system.rhs();
    let (_, r) = cg(a, b, &solve_cfg)?;
    println!("cg               {:>4} iterations  {:.3} ms", r.iterations, r.wall_time * 1e3);
    let (_, r) = pcg(a, b, &JacobiPreconditioner::new(a)?, &solve_cfg)?;
    println!("pcg jacobi       {:>4} iterations  {:.3} ms", r.iterations, r.wall_time * 1e3);
    let fresh = ldlt_factor(a, FactorizerConfig::default())?;
    let (_, r) = pcg(a, b, &fresh, &solve_cfg)?;
    println!("pcg ldlt fresh   {:>4} iterations  {:.3} ms", r.iterations, r.wall_time * 1e3);
    let (_, r) = pcg(a, b, stale.as_ref().unwrap(), &solve_cfg)?;
    println!("pcg ldlt 3 old   {:>4} iterations  {:.3} ms", r.iterations, r.wall_time * 1e3);
    Ok(())
}
