use nalgebra::{Matrix3, SVector, Vector3};

use super::element::{deformation_gradient, precompute, ElementPrecomp, Matrix12};
use super::{check_positions, emit12, gather12, scatter12, ForceModel, ForceOutput, MaterialParams};
use crate::assembly::TripletStream;
use crate::error::Result;
use crate::mesh::Mesh;

/// St-Venant–Kirchhoff tetrahedra with the exact (material + geometric)
/// tangent.
#[derive(Debug, Clone)]
pub struct StVenantKirchhoff {
    elements: Vec<[usize; 4]>,
    num_dofs: usize,
    precomp: Vec<ElementPrecomp>,
    lambda: f64,
    mu: f64,
}

/// Second Piola–Kirchhoff stress `S = λ tr(E) I + 2μ E` with the Green strain
/// `E = (FᵀF − I)/2`.
pub fn stvk_second_piola(f: &Matrix3<f64>, params: &MaterialParams) -> Matrix3<f64> {
    second_piola(f, params.lame_lambda(), params.lame_mu())
}

fn second_piola(f: &Matrix3<f64>, lambda: f64, mu: f64) -> Matrix3<f64> {
    let green = (f.transpose() * f - Matrix3::identity()) * 0.5;
    Matrix3::identity() * (lambda * green.trace()) + green * (2.0 * mu)
}

impl StVenantKirchhoff {
    pub fn new(mesh: &Mesh, params: &MaterialParams) -> Result<Self> {
        Ok(StVenantKirchhoff {
            elements: mesh.elements().to_vec(),
            num_dofs: mesh.num_dofs(),
            precomp: precompute(mesh, params)?,
            lambda: params.lame_lambda(),
            mu: params.lame_mu(),
        })
    }

    fn element_force(&self, pre: &ElementPrecomp, f: &Matrix3<f64>, s: &Matrix3<f64>) -> SVector<f64, 12> {
        let p = f * s;
        let mut out = SVector::<f64, 12>::zeros();
        for (a, g) in pre.grads.iter().enumerate() {
            out.fixed_rows_mut::<3>(3 * a).copy_from(&(p * g * pre.volume));
        }
        out
    }

    fn element_tangent(&self, pre: &ElementPrecomp, f: &Matrix3<f64>, s: &Matrix3<f64>) -> Matrix12 {
        let mut k = Matrix12::zeros();
        for (b, gb) in pre.grads.iter().enumerate() {
            for j in 0..3 {
                // dF = e_j ⊗ ∇N_b
                let mut df = Matrix3::zeros();
                df.set_row(j, &gb.transpose());
                let dgreen = (df.transpose() * f + f.transpose() * df) * 0.5;
                let ds = Matrix3::identity() * (self.lambda * dgreen.trace()) + dgreen * (2.0 * self.mu);
                let dp = df * s + f * ds;
                for (a, ga) in pre.grads.iter().enumerate() {
                    let col: Vector3<f64> = dp * ga * pre.volume;
                    for i in 0..3 {
                        k[(3 * a + i, 3 * b + j)] = col[i];
                    }
                }
            }
        }
        (k + k.transpose()) * 0.5
    }
}

impl ForceModel for StVenantKirchhoff {
    fn num_dofs(&self) -> usize {
        self.num_dofs
    }

    fn forces_and_stiffness(
        &self,
        x: &[f64],
        w: Option<&[f64]>,
        sink: &mut TripletStream,
    ) -> Result<ForceOutput> {
        check_positions(x, self.num_dofs)?;
        let mut out = ForceOutput::zeros(self.num_dofs);
        for (nodes, pre) in self.elements.iter().zip(&self.precomp) {
            let f = deformation_gradient(x, nodes, &pre.rest_inverse);
            let s = second_piola(&f, self.lambda, self.mu);
            scatter12(&mut out.forces, nodes, &self.element_force(pre, &f, &s));
            let ke = self.element_tangent(pre, &f, &s);
            if let Some(w) = w {
                scatter12(&mut out.stiffness_times, nodes, &(ke * gather12(w, nodes)));
            }
            emit12(sink, nodes, &ke);
        }
        Ok(out)
    }

    fn forces(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_positions(x, self.num_dofs)?;
        let mut out = vec![0.0; self.num_dofs];
        for (nodes, pre) in self.elements.iter().zip(&self.precomp) {
            let f = deformation_gradient(x, nodes, &pre.rest_inverse);
            let s = second_piola(&f, self.lambda, self.mu);
            scatter12(&mut out, nodes, &self.element_force(pre, &f, &s));
        }
        Ok(out)
    }

    fn name(&self) -> &'static str {
        "stvk"
    }
}
