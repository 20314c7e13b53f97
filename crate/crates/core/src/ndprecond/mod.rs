//! Nested-dissection LDLᵀ preconditioner: ordering, factorization,
//! level-scheduled triangular solves and the background refactorization
//! lifecycle.

mod async_precond;
mod dissection;
mod ldlt;
mod trisolve;

pub use async_precond::{AsyncConfig, AsyncPreconditioner, PrecondStatus, RefactorPolicy};
pub use dissection::{
    graph_from_pattern, nested_dissection, Block, BlockKind, DissectionPlan, DEFAULT_LEAF_THRESHOLD,
};
pub use ldlt::{ldlt_factor, ldlt_with_ordering, Factorizer, FactorizerConfig, LdlFactors, SymbolicLdlt, UnitLower};
pub use trisolve::{solve_lower, solve_upper, SolveSchedule, WorkerPool};

use crate::error::{Error, Result};
use crate::krylov::Preconditioner;

pub const DEFAULT_TILE: usize = 16;

impl LdlFactors {
    /// `L y = r` in the permuted numbering.
    pub fn solve_lower(&self, r: &[f64]) -> Result<Vec<f64>> {
        solve_lower(&self.lower, &self.schedule, &self.pool, r)
    }

    /// `Lᵀ z = y` in the permuted numbering.
    pub fn solve_upper(&self, y: &[f64]) -> Result<Vec<f64>> {
        solve_upper(&self.lower, &self.schedule, &self.pool, y)
    }
}

/// `z = Pᵀ L⁻ᵀ D⁻¹ L⁻¹ P r`, i.e. the inverse of the factored matrix applied
/// in the original numbering.
pub fn apply(factors: &LdlFactors, r: &[f64]) -> Result<Vec<f64>> {
    let n = factors.dimension();
    if r.len() != n {
        return Err(Error::DimensionMismatch {
            module: "ndprecond",
            expected: n,
            got: r.len(),
        });
    }
    let perm = &factors.plan.perm;
    let permuted: Vec<f64> = perm.iter().map(|&old| r[old]).collect();
    let mut y = factors.solve_lower(&permuted)?;
    for (yi, di) in y.iter_mut().zip(&factors.diag) {
        *yi /= di;
    }
    let z = factors.solve_upper(&y)?;
    let mut out = vec![0.0; n];
    for (new, &old) in perm.iter().enumerate() {
        out[old] = z[new];
    }
    Ok(out)
}

impl Preconditioner for LdlFactors {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let out = apply(self, r).expect("preconditioner dimension matches the system");
        z.copy_from_slice(&out);
    }

    fn name(&self) -> &'static str {
        "ldlt"
    }
}

#[cfg(test)]
mod tests;
