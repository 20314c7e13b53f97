use super::MaterialParams;
use crate::assembly::TripletStream;
use crate::mesh::Mesh;

/// Emits the lumped mass matrix: every tetrahedron gives `ρ V / 4` to each of
/// its nodes on all three diagonal DOFs. Emission follows element order, then
/// local node, then axis.
pub fn lumped_mass(mesh: &Mesh, params: &MaterialParams, sink: &mut TripletStream) {
    for (e, tet) in mesh.elements().iter().enumerate() {
        let share = params.density * mesh.element_volume(e).abs() / 4.0;
        for &node in tet {
            for d in 0..3 {
                sink.add(3 * node + d, 3 * node + d, share);
            }
        }
    }
}

/// Per-DOF lumped mass, accumulated in the same order as [`lumped_mass`].
pub fn lumped_mass_vector(mesh: &Mesh, params: &MaterialParams) -> Vec<f64> {
    let mut m = vec![0.0; mesh.num_dofs()];
    for (e, tet) in mesh.elements().iter().enumerate() {
        let share = params.density * mesh.element_volume(e).abs() / 4.0;
        for &node in tet {
            for d in 0..3 {
                m[3 * node + d] += share;
            }
        }
    }
    m
}
