#![allow(dead_code)]

use fastfem::assembly::{Assembler, CsrMatrix, TripletStream};
use fastfem::integrator::{IntegratorConfig, LinearSolver, System};
use fastfem::krylov::{SolverConfig, SolverMode};
use fastfem::mesh::{generate_beam, Mesh};
use fastfem::models::{build_model, lumped_mass, ForceModel, MaterialLaw, MaterialParams};
use fastfem::ndprecond::{AsyncConfig, UnitLower};
use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Beam along z, clamped at `z = 0` when `clamped`.
pub fn beam(nx: usize, ny: usize, nz: usize, spacing: f64, clamped: bool) -> Mesh {
    let m = generate_beam(nx, ny, nz, spacing).unwrap();
    if clamped {
        m.fix_nodes_where(|p| p[2] <= 1e-12)
    } else {
        m
    }
}

pub fn system(mesh: Mesh, law: MaterialLaw, young: f64, cfg: IntegratorConfig) -> System {
    let p = MaterialParams::new(young, 0.3, 1000.0).unwrap();
    let model = build_model(law, &mesh, &p).unwrap();
    System::new(mesh, model, p, cfg, &[]).unwrap()
}

pub fn sideways_gravity(h: f64) -> IntegratorConfig {
    IntegratorConfig {
        h,
        gravity: [0.0, -9.81, 0.0],
        ..IntegratorConfig::default()
    }
}

pub fn solver(mode: SolverMode, asy: Option<AsyncConfig>) -> LinearSolver {
    LinearSolver::new(
        SolverConfig {
            mode,
            ..SolverConfig::default()
        },
        asy,
    )
    .unwrap()
}

/// `M + h² K` at positions `x` with fixed rows replaced by identity rows.
pub fn system_matrix(mesh: &Mesh, model: &dyn ForceModel, params: &MaterialParams, x: &[f64], h: f64) -> CsrMatrix {
    let mut asm = Assembler::new(mesh.num_dofs(), mesh.fixed_dofs());
    let sink = asm.begin();
    lumped_mass(mesh, params, sink);
    let n_mass = sink.cursor();
    model.forces_and_stiffness(x, None, sink).unwrap();
    let coeffs: Vec<f64> = (0..sink.cursor()).map(|t| if t < n_mass { 1.0 } else { h * h }).collect();
    asm.finish(Some(&coeffs)).unwrap().clone()
}

/// Reference compression: drop triplets touching fixed DOFs, stable-sort by
/// `(row, col)`, sum each run left to right, then add unit diagonals on the
/// fixed DOFs.
pub fn sort_merge_oracle(
    stream: &TripletStream,
    coeffs: Option<&[f64]>,
    n: usize,
    fixed: &[usize],
) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    let mut is_fixed = vec![false; n];
    for &d in fixed {
        is_fixed[d] = true;
    }
    let mut entries: Vec<(usize, usize, f64)> = (0..stream.len())
        .filter(|&t| !is_fixed[stream.rows()[t]] && !is_fixed[stream.cols()[t]])
        .map(|t| {
            let c = coeffs.map_or(1.0, |c| c[t]);
            (stream.rows()[t], stream.cols()[t], if coeffs.is_some() { c * stream.values()[t] } else { stream.values()[t] })
        })
        .collect();
    for d in 0..n {
        if is_fixed[d] {
            entries.push((d, d, f64::NAN));
        }
    }
    entries.sort_by_key(|&(r, c, _)| (r, c));
    let mut row_ptr = vec![0usize; n + 1];
    let mut col_ind = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut last: Option<(usize, usize)> = None;
    for (r, c, v) in entries {
        if last != Some((r, c)) {
            col_ind.push(c);
            values.push(if v.is_nan() { 1.0 } else { 0.0 + v });
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        } else {
            *values.last_mut().unwrap() += v;
        }
    }
    for r in 0..n {
        row_ptr[r + 1] += row_ptr[r];
    }
    (row_ptr, col_ind, values)
}

/// Plain column-oriented forward substitution with a unit lower factor.
pub fn forward_substitution(l: &UnitLower, r: &[f64]) -> Vec<f64> {
    let mut y = r.to_vec();
    for j in 0..l.n {
        let (rows, vals) = l.column(j);
        for (&i, &v) in rows.iter().zip(vals) {
            y[i] -= v * y[j];
        }
    }
    y
}

/// Plain backward substitution with `Lᵀ`.
pub fn backward_substitution(l: &UnitLower, y: &[f64]) -> Vec<f64> {
    let mut z = y.to_vec();
    for j in (0..l.n).rev() {
        let (rows, vals) = l.column(j);
        let mut s = z[j];
        for (&i, &v) in rows.iter().zip(vals) {
            s -= v * z[i];
        }
        z[j] = s;
    }
    z
}

pub fn rel_inf(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

fn rotate_about_centroid(x: &[f64], r: &Matrix3<f64>) -> Vec<f64> {
    let n = x.len() / 3;
    let mut c = Vector3::zeros();
    for p in x.chunks_exact(3) {
        c += Vector3::new(p[0], p[1], p[2]);
    }
    c /= n as f64;
    x.chunks_exact(3)
        .flat_map(|p| {
            let q = r * (Vector3::new(p[0], p[1], p[2]) - c) + c;
            [q.x, q.y, q.z]
        })
        .collect()
}

/// Rest shape under a random rigid rotation plus uniform noise of the given
/// amplitude on every coordinate.
pub fn perturbed_state(mesh: &Mesh, rng: &mut ChaCha8Rng, amplitude: f64) -> Vec<f64> {
    let r = Rotation3::from_euler_angles(rng.gen_range(-3.0..3.0), rng.gen_range(-1.5..1.5), rng.gen_range(-3.0..3.0));
    let mut x = rotate_about_centroid(&mesh.positions(), r.matrix());
    for v in &mut x {
        *v += amplitude * rng.gen_range(-1.0..1.0);
    }
    x
}

/// Relative Frobenius error between the assembled tangent and a central
/// difference Jacobian of the internal forces.
pub fn tangent_fd_error(model: &dyn ForceModel, x: &[f64], step: f64) -> f64 {
    let n = x.len();
    let k = fastfem::models::assemble_stiffness(model, x).unwrap().to_dense();
    let mut xp = x.to_vec();
    let (mut diff, mut norm) = (0.0, 0.0);
    for j in 0..n {
        xp[j] = x[j] + step;
        let fp = model.forces(&xp).unwrap();
        xp[j] = x[j] - step;
        let fm = model.forces(&xp).unwrap();
        xp[j] = x[j];
        for i in 0..n {
            let fd = (fp[i] - fm[i]) / (2.0 * step);
            diff += (k[i * n + j] - fd).powi(2);
            norm += k[i * n + j].powi(2);
        }
    }
    (diff / norm).sqrt()
}

pub fn median(v: &mut [f64]) -> f64 {
    fastfem::cli::median(v)
}
