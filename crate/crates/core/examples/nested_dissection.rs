//! Nested-dissection ordering of a cubic grid: separator sizes, level
//! structure and factor fill against the natural ordering.

use fastfem::mesh::{generate_beam, vertex_adjacency};
use fastfem::models::{assemble_stiffness, build_model, MaterialLaw, MaterialParams};
use fastfem::ndprecond::{nested_dissection, SymbolicLdlt, DEFAULT_LEAF_THRESHOLD};

fn main() -> fastfem::Result<()> {
    for k in [8, 12, 16] {
        let mesh = generate_beam(k, k, k, 1.0)?;
        let g = vertex_adjacency(&mesh);
        let plan = nested_dissection(&g, DEFAULT_LEAF_THRESHOLD);
        println!(
            "k = {k:>2}: {} vertices, top separator {} (3k² = {}), {} blocks on {} levels, independent: {}",
            g.num_vertices(),
            plan.top_separator_size(),
            3 * k * k,
            plan.blocks.len(),
            plan.num_levels(),
            plan.verify_graph_independence(&g).is_ok()
        );
    }
    let mesh = generate_beam(8, 8, 8, 0.1)?;
    let p = MaterialParams::new(1e6, 0.3, 1000.0)?;
    let model = build_model(MaterialLaw::Corotational, &mesh, &p)?;
    let mut k = assemble_stiffness(model.as_ref(), &mesh.positions())?;
    // Shift to make the matrix definite; only the pattern matters here.
    let n = k.nrows();
    for r in 0..n {
        let (cols, _) = k.row(r);
        let pos = cols.iter().position(|&c| c == r).expect("diagonal stored");
        let start = k.row_ptr()[r];
        k.values_mut()[start + pos] += 1e3;
    }
    let plan = nested_dissection(&vertex_adjacency(&mesh), DEFAULT_LEAF_THRESHOLD).expand(3);
    let natural: Vec<usize> = (0..n).collect();
    let nd = SymbolicLdlt::analyze(&k, &plan.iperm)?;
    let nat = SymbolicLdlt::analyze(&k, &natural)?;
    println!("8³ grid, {n} unknowns: nnz(L) nested dissection {} vs natural {}", nd.nnz_l(), nat.nnz_l());
    Ok(())
}
