//! Conjugate gradient solvers on [`CsrMatrix`].
//!
//! Dot products are always reduced sequentially in index order so repeated
//! runs give identical iterates.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assembly::CsrMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    Cg,
    PcgJacobi,
    #[default]
    PcgLdlt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Relative residual threshold on `‖r‖₂ / ‖b‖₂`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub mode: SolverMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: 1000,
            mode: SolverMode::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) || !self.tolerance.is_finite() {
            return Err(Error::invalid("krylov", format!("tolerance must be positive, got {}", self.tolerance)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveReport {
    pub iterations: usize,
    /// Relative residual `‖r‖₂ / ‖b‖₂` of the returned iterate.
    pub final_residual: f64,
    pub converged: bool,
    pub wall_time: f64,
}

pub trait Preconditioner: Send + Sync {
    /// `z = M⁻¹ r`.
    fn apply(&self, r: &[f64], z: &mut [f64]);

    fn name(&self) -> &'static str;
}

pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }

    fn name(&self) -> &'static str {
        "identity"
    }
}

#[derive(Debug, Clone)]
pub struct JacobiPreconditioner {
    inv_diag: Vec<f64>,
}

impl JacobiPreconditioner {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let diag = a.diagonal();
        if let Some(i) = diag.iter().position(|&d| d == 0.0 || !d.is_finite()) {
            return Err(Error::ZeroDiagonal(i));
        }
        Ok(JacobiPreconditioner {
            inv_diag: diag.iter().map(|d| 1.0 / d).collect(),
        })
    }
}

impl Preconditioner for JacobiPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * di;
        }
    }

    fn name(&self) -> &'static str {
        "jacobi"
    }
}

pub fn jacobi_precond(a: &CsrMatrix) -> Result<JacobiPreconditioner> {
    JacobiPreconditioner::new(a)
}

pub fn spmv(a: &CsrMatrix, x: &[f64]) -> Result<Vec<f64>> {
    a.spmv(x)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn check_system(a: &CsrMatrix, b: &[f64], config: &SolverConfig) -> Result<()> {
    config.validate()?;
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            module: "krylov",
            expected: a.nrows(),
            got: a.ncols(),
        });
    }
    if b.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            module: "krylov",
            expected: a.nrows(),
            got: b.len(),
        });
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            module: "krylov",
            msg: "right-hand side".into(),
        });
    }
    Ok(())
}

/// Plain conjugate gradient from a zero initial guess.
pub fn cg(a: &CsrMatrix, b: &[f64], config: &SolverConfig) -> Result<(Vec<f64>, SolveReport)> {
    check_system(a, b, config)?;
    let start = Instant::now();
    let n = b.len();
    let mut x = vec![0.0; n];
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok((x, finished(0, 0.0, true, start)));
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let mut rel = rr.sqrt() / b_norm;
    let mut it = 0;
    while it < config.max_iterations && rel > config.tolerance {
        a.spmv_into(&p, &mut ap)?;
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rr / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        it += 1;
        let rr_new = dot(&r, &r);
        rel = rr_new.sqrt() / b_norm;
        if rel <= config.tolerance {
            break;
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }
    Ok((x, finished(it, rel, rel <= config.tolerance, start)))
}

/// Preconditioned conjugate gradient from a zero initial guess. Convergence
/// is decided on the single scalar `‖r‖₂ / ‖b‖₂` per iteration.
pub fn pcg(
    a: &CsrMatrix,
    b: &[f64],
    precond: &dyn Preconditioner,
    config: &SolverConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    check_system(a, b, config)?;
    let start = Instant::now();
    let n = b.len();
    let mut x = vec![0.0; n];
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok((x, finished(0, 0.0, true, start)));
    }
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut rel = dot(&r, &r).sqrt() / b_norm;
    let mut it = 0;
    while it < config.max_iterations && rel > config.tolerance {
        a.spmv_into(&p, &mut ap)?;
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        it += 1;
        rel = dot(&r, &r).sqrt() / b_norm;
        if rel <= config.tolerance {
            break;
        }
        precond.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        if !rz_new.is_finite() {
            break;
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Ok((x, finished(it, rel, rel <= config.tolerance, start)))
}

fn finished(iterations: usize, final_residual: f64, converged: bool, start: Instant) -> SolveReport {
    SolveReport {
        iterations,
        final_residual,
        converged,
        wall_time: start.elapsed().as_secs_f64(),
    }
}
