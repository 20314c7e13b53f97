//! TetGen mesh round trip and a MatrixMarket dump of the assembled system.

use std::fs::File;
use std::io::{BufReader, BufWriter};

use fastfem::assembly::CsrMatrix;
use fastfem::mesh::{generate_beam, load_tetgen, write_tetgen};
use fastfem::models::{assemble_stiffness, build_model, MaterialLaw, MaterialParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("fastfem_mesh_io");
    std::fs::create_dir_all(&dir)?;
    let (node, ele, mtx) = (dir.join("beam.node"), dir.join("beam.ele"), dir.join("beam_k.mtx"));

    let mesh = generate_beam(3, 3, 5, 0.05)?;
    write_tetgen(&mesh, &node, &ele)?;
    let back = load_tetgen(&node, &ele)?;
    println!(
        "wrote {} nodes / {} tets to {}, reloaded identical: {}",
        mesh.num_nodes(),
        mesh.num_elements(),
        dir.display(),
        back.nodes() == mesh.nodes() && back.elements() == mesh.elements()
    );

    let p = MaterialParams::new(1e5, 0.45, 1100.0)?;
    let k = assemble_stiffness(build_model(MaterialLaw::Corotational, &back, &p)?.as_ref(), &back.positions())?;
    k.write_matrix_market(BufWriter::new(File::create(&mtx)?))?;
    let again = CsrMatrix::read_matrix_market(BufReader::new(File::open(&mtx)?))?;
    println!("{}: {}x{} with {} entries, round trip equal: {}", mtx.display(), k.nrows(), k.ncols(), k.nnz(), again == k);
    Ok(())
}
