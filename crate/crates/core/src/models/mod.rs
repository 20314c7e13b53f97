//! Element physics. Models only talk to the system matrix through
//! [`TripletStream::add`], so any law plugs into the same assembly path.
//!
//! Sign convention: `f(x)` is the internal force in `M a = f_ext − f(x, v)`
//! and the emitted stiffness is `K = ∂f/∂x` (positive semi-definite).

mod corotational;
mod element;
mod mass;
mod material;
mod stvk;

pub use corotational::Corotational;
pub use element::{
    deformation_gradient, elasticity_matrix, linear_stiffness, polar_rotation, precompute, shape_gradients,
    strain_displacement, ElementPrecomp, Matrix12,
};
pub use mass::{lumped_mass, lumped_mass_vector};
pub use material::MaterialParams;
pub use stvk::{stvk_second_piola, StVenantKirchhoff};

use serde::{Deserialize, Serialize};

use crate::assembly::{build_pattern, compress, CsrMatrix, TripletStream};
use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Result buffers of one model evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceOutput {
    /// Internal forces `f(x)`.
    pub forces: Vec<f64>,
    /// `K(x) w` for the vector `w` passed to the evaluation (zero if none).
    pub stiffness_times: Vec<f64>,
}

impl ForceOutput {
    pub fn zeros(n: usize) -> Self {
        ForceOutput {
            forces: vec![0.0; n],
            stiffness_times: vec![0.0; n],
        }
    }
}

/// A hyperelastic element model.
pub trait ForceModel: Send + Sync {
    fn num_dofs(&self) -> usize;

    /// Evaluates internal forces at `x`, emits the tangent stiffness into
    /// `sink` (element by element, row-major 12×12 blocks), and accumulates
    /// `K w` when `w` is given.
    fn forces_and_stiffness(
        &self,
        x: &[f64],
        w: Option<&[f64]>,
        sink: &mut TripletStream,
    ) -> Result<ForceOutput>;

    /// Internal forces only.
    fn forces(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn name(&self) -> &'static str;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaterialLaw {
    Corotational,
    Stvk,
}

pub fn build_model(law: MaterialLaw, mesh: &Mesh, params: &MaterialParams) -> Result<Box<dyn ForceModel>> {
    Ok(match law {
        MaterialLaw::Corotational => Box::new(Corotational::new(mesh, params)?),
        MaterialLaw::Stvk => Box::new(StVenantKirchhoff::new(mesh, params)?),
    })
}

/// Assembles `K(x)` alone, without fixed DOFs.
pub fn assemble_stiffness(model: &dyn ForceModel, x: &[f64]) -> Result<CsrMatrix> {
    let mut stream = TripletStream::new();
    stream.begin_pass();
    model.forces_and_stiffness(x, None, &mut stream)?;
    stream.end_pass();
    let (_, mapping) = build_pattern(&stream, model.num_dofs(), &[])?;
    compress(&stream, &mapping, None)
}

pub(crate) fn check_positions(x: &[f64], n: usize) -> Result<()> {
    if x.len() != n {
        return Err(Error::DimensionMismatch {
            module: "models",
            expected: n,
            got: x.len(),
        });
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            module: "models",
            msg: format!("position component {i}"),
        });
    }
    Ok(())
}

pub(crate) fn gather12(v: &[f64], nodes: &[usize; 4]) -> nalgebra::SVector<f64, 12> {
    nalgebra::SVector::<f64, 12>::from_fn(|k, _| v[3 * nodes[k / 3] + k % 3])
}

pub(crate) fn scatter12(out: &mut [f64], nodes: &[usize; 4], local: &nalgebra::SVector<f64, 12>) {
    for k in 0..12 {
        out[3 * nodes[k / 3] + k % 3] += local[k];
    }
}

pub(crate) fn emit12(sink: &mut TripletStream, nodes: &[usize; 4], k: &Matrix12) {
    for a in 0..4 {
        for i in 0..3 {
            let row = 3 * nodes[a] + i;
            for b in 0..4 {
                for j in 0..3 {
                    sink.add(row, 3 * nodes[b] + j, k[(3 * a + i, 3 * b + j)]);
                }
            }
        }
    }
}
