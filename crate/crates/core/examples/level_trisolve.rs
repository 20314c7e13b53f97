//! LDLᵀ factorization in nested-dissection order and level-scheduled
//! triangular solves on a worker pool. Results are identical for every
//! worker count.
//!
//! cargo run --release --example level_trisolve -- [workers]

use std::time::Instant;

use fastfem::assembly::Assembler;
use fastfem::mesh::generate_beam;
use fastfem::models::{build_model, lumped_mass, MaterialLaw, MaterialParams};
use fastfem::ndprecond::{apply, ldlt_factor, FactorizerConfig};

fn main() -> fastfem::Result<()> {
    let max_workers: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(8);
    let mesh = generate_beam(7, 7, 62, 0.01)?.fix_nodes_where(|p| p[2] == 0.0);
    let params = MaterialParams::new(1e6, 0.3, 1000.0)?;
    let model = build_model(MaterialLaw::Corotational, &mesh, &params)?;
    let mut asm = Assembler::new(mesh.num_dofs(), mesh.fixed_dofs());
    let sink = asm.begin();
    lumped_mass(&mesh, &params, sink);
    let n_mass = sink.cursor();
    model.forces_and_stiffness(&mesh.positions(), None, sink)?;
    let coeffs: Vec<f64> = (0..sink.cursor()).map(|t| if t < n_mass { 1.0 } else { 1e-4 }).collect();
    let a = asm.finish(Some(&coeffs))?.clone();

    let t = Instant::now();
    let f = ldlt_factor(&a, FactorizerConfig::default())?;
    println!(
        "{} nodes, {} unknowns: factor {:.1} ms, nnz(L) {}, {} blocks on {} levels",
        mesh.num_nodes(),
        a.nrows(),
        t.elapsed().as_secs_f64() * 1e3,
        f.lower.nnz(),
        f.plan.blocks.len(),
        f.plan.num_levels()
    );
    let b: Vec<f64> = (0..a.nrows()).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
    let reference = apply(&f, &b)?;
    let mut w = 1;
    while w <= max_workers {
        let fw = f.with_workers(w)?;
        let t = Instant::now();
        let z = apply(&fw, &b)?;
        let ms = t.elapsed().as_secs_f64() * 1e3;
        let same = z.iter().zip(&reference).all(|(x, y)| x.to_bits() == y.to_bits());
        println!("workers {w}: solve pair {ms:.2} ms, bit-identical {same}");
        w *= 2;
    }
    let ax = a.spmv(&reference)?;
    let res = ax.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    println!("‖A z − b‖∞ = {res:.2e}");
    Ok(())
}
