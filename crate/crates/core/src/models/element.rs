//! Per-element rest data and rotation extraction for linear tetrahedra.

use nalgebra::{Matrix3, SMatrix, Vector3};

use super::material::MaterialParams;
use crate::error::{Error, Result};
use crate::mesh::{shape_matrix, Mesh};

pub type Matrix12 = SMatrix<f64, 12, 12>;

/// Rest-state quantities of one tetrahedron.
#[derive(Debug, Clone)]
pub struct ElementPrecomp {
    /// Inverse of the rest edge matrix `[X1 − X0, X2 − X0, X3 − X0]`.
    pub rest_inverse: Matrix3<f64>,
    pub volume: f64,
    /// Rest gradients of the four linear shape functions.
    pub grads: [Vector3<f64>; 4],
    /// Linear-elastic rest stiffness `V Bᵀ C B` (12×12).
    pub rest_stiffness: Matrix12,
}

pub fn precompute(mesh: &Mesh, params: &MaterialParams) -> Result<Vec<ElementPrecomp>> {
    params.validate()?;
    (0..mesh.num_elements())
        .map(|e| {
            let dm = shape_matrix(mesh.element_points(e));
            let volume = dm.determinant() / 6.0;
            if !(volume > 0.0) {
                return Err(Error::Setup(format!(
                    "element {e} is inverted or degenerate at rest (volume {volume:e})"
                )));
            }
            let rest_inverse = dm
                .try_inverse()
                .ok_or_else(|| Error::Setup(format!("element {e} has a singular rest shape")))?;
            let grads = shape_gradients(&rest_inverse);
            let rest_stiffness = linear_stiffness(&grads, volume, params);
            Ok(ElementPrecomp {
                rest_inverse,
                volume,
                grads,
                rest_stiffness,
            })
        })
        .collect()
}

/// Gradients of N1..N3 are the rows of `Dm⁻¹`; N0 completes the partition of
/// unity.
pub fn shape_gradients(rest_inverse: &Matrix3<f64>) -> [Vector3<f64>; 4] {
    let g1 = rest_inverse.row(0).transpose();
    let g2 = rest_inverse.row(1).transpose();
    let g3 = rest_inverse.row(2).transpose();
    [-(g1 + g2 + g3), g1, g2, g3]
}

/// Voigt strain-displacement matrix of a linear tetrahedron, strains ordered
/// `(xx, yy, zz, xy, yz, zx)` with engineering shears.
pub fn strain_displacement(grads: &[Vector3<f64>; 4]) -> SMatrix<f64, 6, 12> {
    let mut b = SMatrix::<f64, 6, 12>::zeros();
    for (a, g) in grads.iter().enumerate() {
        let c = 3 * a;
        b[(0, c)] = g.x;
        b[(1, c + 1)] = g.y;
        b[(2, c + 2)] = g.z;
        b[(3, c)] = g.y;
        b[(3, c + 1)] = g.x;
        b[(4, c + 1)] = g.z;
        b[(4, c + 2)] = g.y;
        b[(5, c)] = g.z;
        b[(5, c + 2)] = g.x;
    }
    b
}

/// Isotropic stress-strain matrix in the same Voigt convention.
pub fn elasticity_matrix(params: &MaterialParams) -> SMatrix<f64, 6, 6> {
    let l = params.lame_lambda();
    let m = params.lame_mu();
    let mut c = SMatrix::<f64, 6, 6>::zeros();
    for i in 0..3 {
        for j in 0..3 {
            c[(i, j)] = l;
        }
        c[(i, i)] = l + 2.0 * m;
        c[(i + 3, i + 3)] = m;
    }
    c
}

pub fn linear_stiffness(grads: &[Vector3<f64>; 4], volume: f64, params: &MaterialParams) -> Matrix12 {
    let b = strain_displacement(grads);
    let k = b.transpose() * elasticity_matrix(params) * b * volume;
    // Exact symmetry, independent of rounding in the triple product.
    (k + k.transpose()) * 0.5
}

/// Deformation gradient `F = Ds Dm⁻¹` of element `nodes` at positions `x`.
pub fn deformation_gradient(x: &[f64], nodes: &[usize; 4], rest_inverse: &Matrix3<f64>) -> Matrix3<f64> {
    let p = |k: usize| Vector3::new(x[3 * nodes[k]], x[3 * nodes[k] + 1], x[3 * nodes[k] + 2]);
    let o = p(0);
    let ds = Matrix3::from_columns(&[p(1) - o, p(2) - o, p(3) - o]);
    ds * rest_inverse
}

const POLAR_TOL: f64 = 1e-12;
const POLAR_MAX_ITERS: usize = 50;

/// Rotation factor of the polar decomposition `F = R S`.
///
/// Uses the Newton iteration `X ← (X + X⁻ᵀ)/2`; inverted or non-converging
/// inputs fall back to an SVD with the reflection removed so `det R = +1`.
pub fn polar_rotation(f: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            module: "models",
            msg: "deformation gradient".into(),
        });
    }
    if f.determinant() > 0.0 {
        let mut x = *f;
        for _ in 0..POLAR_MAX_ITERS {
            let Some(inv) = x.try_inverse() else { break };
            let next = (x + inv.transpose()) * 0.5;
            let delta = (next - x).norm();
            x = next;
            if delta <= POLAR_TOL {
                return Ok(x);
            }
        }
    }
    Ok(svd_rotation(f))
}

fn svd_rotation(f: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = f.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        // Flip the direction of the smallest singular value.
        let (k, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
        let mut flip = Matrix3::identity();
        flip[(k, k)] = -1.0;
        r = u * flip * v_t;
    }
    r
}
