//! Fast assembly on a beam: the first pass builds the CSR pattern and the
//! compression mapping, later passes only compress. Compares against forced
//! full rebuilds and checks parallel compression against the sequential one.
//!
//! cargo run --release --example fast_assembly -- [nx ny nz]

use std::time::Instant;

use fastfem::assembly::{compress, compress_parallel, Assembler, AssemblyMode};
use fastfem::mesh::generate_beam;
use fastfem::models::{build_model, lumped_mass, MaterialLaw, MaterialParams};

fn main() -> fastfem::Result<()> {
    let dims: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let (nx, ny, nz) = match dims[..] {
        [a, b, c] => (a, b, c),
        _ => (8, 8, 30),
    };
    let mesh = generate_beam(nx, ny, nz, 0.01)?.fix_nodes_where(|p| p[2] == 0.0);
    let params = MaterialParams::new(1e6, 0.3, 1000.0)?;
    let model = build_model(MaterialLaw::Corotational, &mesh, &params)?;
    let x = mesh.positions();
    println!("{} nodes, {} tets", mesh.num_nodes(), mesh.num_elements());

    for mode in [AssemblyMode::Fast, AssemblyMode::Full] {
        let mut asm = Assembler::new(mesh.num_dofs(), mesh.fixed_dofs()).with_mode(mode);
        let mut times = Vec::new();
        for _ in 0..10 {
            let t = Instant::now();
            let sink = asm.begin();
            lumped_mass(&mesh, &params, sink);
            model.forces_and_stiffness(&x, None, sink)?;
            asm.finish(None)?;
            times.push(t.elapsed().as_secs_f64() * 1e3);
        }
        let med = fastfem::cli::median(&mut times[1..]);
        println!("{mode:?}: pattern builds {}, median pass {med:.2} ms", asm.rebuild_count());
    }

    let mut asm = Assembler::new(mesh.num_dofs(), mesh.fixed_dofs());
    let sink = asm.begin();
    lumped_mass(&mesh, &params, sink);
    model.forces_and_stiffness(&x, None, sink)?;
    let a = asm.finish(None)?.clone();
    let (stream, mapping) = (asm.stream(), asm.mapping().expect("built"));
    let seq = compress(stream, mapping, None)?;
    for k in [1, 2, 4, 8] {
        let par = compress_parallel(stream, mapping, None, k)?;
        let same = par.values().iter().zip(seq.values()).all(|(p, s)| p.to_bits() == s.to_bits());
        println!("compress_parallel({k}) bit-identical: {same}");
    }
    println!("nnz {} from {} triplets", a.nnz(), stream.len());
    Ok(())
}
