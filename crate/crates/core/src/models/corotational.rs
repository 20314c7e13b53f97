use nalgebra::{Matrix3, SVector};

use super::element::{deformation_gradient, polar_rotation, precompute, ElementPrecomp, Matrix12};
use super::{check_positions, emit12, gather12, scatter12, ForceModel, ForceOutput, MaterialParams};
use crate::assembly::TripletStream;
use crate::error::Result;
use crate::mesh::Mesh;

/// Co-rotational linear tetrahedra: `f_e = R K_e (Rᵀ x − X)` with the element
/// rotation `R` taken from the polar decomposition of `F`. The emitted
/// tangent is `R K_e Rᵀ` (rotation held fixed).
#[derive(Debug, Clone)]
pub struct Corotational {
    elements: Vec<[usize; 4]>,
    rest: Vec<f64>,
    precomp: Vec<ElementPrecomp>,
}

impl Corotational {
    pub fn new(mesh: &Mesh, params: &MaterialParams) -> Result<Self> {
        Ok(Corotational {
            elements: mesh.elements().to_vec(),
            rest: mesh.positions(),
            precomp: precompute(mesh, params)?,
        })
    }

    pub fn precomp(&self) -> &[ElementPrecomp] {
        &self.precomp
    }

    /// Element rotations at positions `x`.
    pub fn rotations(&self, x: &[f64]) -> Result<Vec<Matrix3<f64>>> {
        check_positions(x, self.rest.len())?;
        self.elements
            .iter()
            .zip(&self.precomp)
            .map(|(nodes, pre)| polar_rotation(&deformation_gradient(x, nodes, &pre.rest_inverse)))
            .collect()
    }

    fn element_force(&self, x: &[f64], e: usize, r: &Matrix3<f64>) -> SVector<f64, 12> {
        let nodes = &self.elements[e];
        let xe = gather12(x, nodes);
        let x0 = gather12(&self.rest, nodes);
        let local = rotate_blocks(&r.transpose(), &xe) - x0;
        let f_local = self.precomp[e].rest_stiffness * local;
        rotate_blocks(r, &f_local)
    }
}

fn rotate_blocks(r: &Matrix3<f64>, v: &SVector<f64, 12>) -> SVector<f64, 12> {
    let mut out = SVector::<f64, 12>::zeros();
    for a in 0..4 {
        let block = r * v.fixed_rows::<3>(3 * a);
        out.fixed_rows_mut::<3>(3 * a).copy_from(&block);
    }
    out
}

fn rotated_stiffness(r: &Matrix3<f64>, k: &Matrix12) -> Matrix12 {
    let mut out = Matrix12::zeros();
    let rt = r.transpose();
    for a in 0..4 {
        for b in 0..4 {
            let block = r * k.fixed_view::<3, 3>(3 * a, 3 * b) * rt;
            out.fixed_view_mut::<3, 3>(3 * a, 3 * b).copy_from(&block);
        }
    }
    out
}

impl ForceModel for Corotational {
    fn num_dofs(&self) -> usize {
        self.rest.len()
    }

    fn forces_and_stiffness(
        &self,
        x: &[f64],
        w: Option<&[f64]>,
        sink: &mut TripletStream,
    ) -> Result<ForceOutput> {
        check_positions(x, self.rest.len())?;
        let mut out = ForceOutput::zeros(self.rest.len());
        for (e, nodes) in self.elements.iter().enumerate() {
            let r = polar_rotation(&deformation_gradient(x, nodes, &self.precomp[e].rest_inverse))?;
            let fe = self.element_force(x, e, &r);
            scatter12(&mut out.forces, nodes, &fe);
            let ke = rotated_stiffness(&r, &self.precomp[e].rest_stiffness);
            if let Some(w) = w {
                let kw = ke * gather12(w, nodes);
                scatter12(&mut out.stiffness_times, nodes, &kw);
            }
            emit12(sink, nodes, &ke);
        }
        Ok(out)
    }

    fn forces(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_positions(x, self.rest.len())?;
        let mut f = vec![0.0; self.rest.len()];
        for (e, nodes) in self.elements.iter().enumerate() {
            let r = polar_rotation(&deformation_gradient(x, nodes, &self.precomp[e].rest_inverse))?;
            scatter12(&mut f, nodes, &self.element_force(x, e, &r));
        }
        Ok(f)
    }

    fn name(&self) -> &'static str {
        "corotational"
    }
}
