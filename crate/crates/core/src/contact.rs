//! Frictionless contact through Lagrange multipliers on accelerations.
//!
//! A step runs the unconstrained solve, linearizes the constraints
//! `J x ≥ δ` around the free positions, builds `W = J A⁻¹ Jᵀ`, solves the
//! complementarity problem `W λ ≥ (δ − J x_free) / h²`, `λ ≥ 0`, and applies
//! `a = a_free + A⁻¹ Jᵀ λ`. The system matrix is never modified.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{FreeMotion, LinearSolver, SimState, StepReport, System};
use crate::krylov::{pcg, JacobiPreconditioner, SolverConfig};
use crate::ndprecond::apply as apply_factors;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Bilateral,
    Unilateral,
}

/// Sparse constraint rows `J_k x ≥ δ_k` (or `=` for bilateral rows).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintSet {
    rows: Vec<Vec<(usize, f64)>>,
    violation: Vec<f64>,
    kinds: Vec<ConstraintKind>,
}

impl ConstraintSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: Vec<(usize, f64)>, delta: f64, kind: ConstraintKind) -> Result<()> {
        if row.is_empty() || row.iter().all(|&(_, v)| v == 0.0) {
            return Err(Error::invalid("contact", "constraint row has no nonzero entry"));
        }
        if !delta.is_finite() || row.iter().any(|&(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                module: "contact",
                msg: "constraint row".into(),
            });
        }
        self.rows.push(row);
        self.violation.push(delta);
        self.kinds.push(kind);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, k: usize) -> &[(usize, f64)] {
        &self.rows[k]
    }

    pub fn delta(&self) -> &[f64] {
        &self.violation
    }

    pub fn kinds(&self) -> &[ConstraintKind] {
        &self.kinds
    }

    /// `J x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|&(i, v)| v * x[i]).sum()).collect()
    }

    /// `Jᵀ λ` of length `n`.
    pub fn apply_transpose(&self, lambda: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (r, &l) in self.rows.iter().zip(lambda) {
            for &(i, v) in r {
                out[i] += v * l;
            }
        }
        out
    }

    fn check_dofs(&self, n: usize) -> Result<()> {
        for (k, r) in self.rows.iter().enumerate() {
            if let Some(&(i, _)) = r.iter().find(|&&(i, _)| i >= n) {
                return Err(Error::invalid("contact", format!("constraint {k} references DOF {i} of {n}")));
            }
        }
        Ok(())
    }
}

/// Dense `W = J A⁻¹ Jᵀ` together with the responses `A⁻¹ J_kᵀ` used to
/// correct the motion with the same operator.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplianceMatrix {
    m: usize,
    w: Vec<f64>,
    responses: Vec<Vec<f64>>,
}

impl ComplianceMatrix {
    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.m + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    /// `W λ`.
    pub fn mul(&self, lambda: &[f64]) -> Vec<f64> {
        (0..self.m)
            .map(|i| (0..self.m).map(|j| self.w[i * self.m + j] * lambda[j]).sum())
            .collect()
    }

    /// `A⁻¹ Jᵀ λ` from the stored responses.
    pub fn response(&self, lambda: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (u, &l) in self.responses.iter().zip(lambda) {
            if l != 0.0 {
                for (o, ui) in out.iter_mut().zip(u) {
                    *o += l * ui;
                }
            }
        }
        out
    }
}

/// Builds `W` column by column with `solve(r) ≈ A⁻¹ r`, then averages it
/// with its transpose.
pub fn build_compliance(
    j: &ConstraintSet,
    n: usize,
    mut solve: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<ComplianceMatrix> {
    j.check_dofs(n)?;
    let m = j.len();
    let mut responses = Vec::with_capacity(m);
    let mut w = vec![0.0; m * m];
    for col in 0..m {
        let mut rhs = vec![0.0; n];
        for &(i, v) in j.row(col) {
            rhs[i] += v;
        }
        let u = solve(&rhs)?;
        if u.len() != n {
            return Err(Error::DimensionMismatch {
                module: "contact",
                expected: n,
                got: u.len(),
            });
        }
        for row in 0..m {
            w[row * m + col] = j.row(row).iter().map(|&(i, v)| v * u[i]).sum();
        }
        responses.push(u);
    }
    for a in 0..m {
        for b in a + 1..m {
            let avg = 0.5 * (w[a * m + b] + w[b * m + a]);
            w[a * m + b] = avg;
            w[b * m + a] = avg;
        }
    }
    Ok(ComplianceMatrix { m, w, responses })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgsResult {
    pub lambda: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    /// Rows skipped because their diagonal entry vanished.
    pub dropped: Vec<usize>,
}

/// Projected Gauss–Seidel in constraint order. Unilateral multipliers are
/// clamped at zero after each update; iteration stops once
/// `max |Δλ| ≤ tol · max |λ|`.
pub fn projected_gauss_seidel(
    w: &ComplianceMatrix,
    rhs: &[f64],
    kinds: &[ConstraintKind],
    tol: f64,
    max_sweeps: usize,
) -> Result<PgsResult> {
    let m = w.dim();
    if rhs.len() != m || kinds.len() != m {
        return Err(Error::DimensionMismatch {
            module: "contact",
            expected: m,
            got: if rhs.len() != m { rhs.len() } else { kinds.len() },
        });
    }
    let mut lambda = vec![0.0; m];
    let dropped: Vec<usize> = (0..m).filter(|&i| !(w.get(i, i) > 0.0)).collect();
    for &i in &dropped {
        log::warn!("contact: constraint {i} has a non-positive compliance diagonal and is dropped");
    }
    let mut active = vec![true; m];
    for &i in &dropped {
        active[i] = false;
    }
    let mut sweeps = 0;
    let mut converged = m == 0;
    while !converged && sweeps < max_sweeps {
        sweeps += 1;
        let mut max_delta = 0.0f64;
        for i in 0..m {
            if !active[i] {
                continue;
            }
            let mut wl = 0.0;
            for j in 0..m {
                wl += w.get(i, j) * lambda[j];
            }
            let mut next = lambda[i] + (rhs[i] - wl) / w.get(i, i);
            if kinds[i] == ConstraintKind::Unilateral && next < 0.0 {
                next = 0.0;
            }
            max_delta = max_delta.max((next - lambda[i]).abs());
            lambda[i] = next;
        }
        let max_lambda = lambda.iter().fold(0.0f64, |a, l| a.max(l.abs()));
        converged = max_delta <= tol * max_lambda || max_delta == 0.0;
    }
    Ok(PgsResult {
        lambda,
        sweeps,
        converged,
        dropped,
    })
}

/// Complementarity residual `Σ |λ_i (Wλ − rhs)_i|` over unilateral rows plus
/// `Σ |(Wλ − rhs)_i|` over bilateral rows.
pub fn lcp_residual(w: &ComplianceMatrix, rhs: &[f64], kinds: &[ConstraintKind], lambda: &[f64]) -> f64 {
    let wl = w.mul(lambda);
    (0..w.dim())
        .map(|i| {
            let slack = wl[i] - rhs[i];
            match kinds[i] {
                ConstraintKind::Unilateral => (lambda[i] * slack).abs(),
                ConstraintKind::Bilateral => slack.abs(),
            }
        })
        .sum()
}

/// Most negative slack `min_i (Wλ − rhs)_i` over unilateral rows and most
/// negative multiplier; both are `0` for a feasible point.
pub fn lcp_infeasibility(w: &ComplianceMatrix, rhs: &[f64], kinds: &[ConstraintKind], lambda: &[f64]) -> f64 {
    let wl = w.mul(lambda);
    let mut worst = 0.0f64;
    for i in 0..w.dim() {
        if kinds[i] == ConstraintKind::Unilateral {
            worst = worst.min(wl[i] - rhs[i]).min(lambda[i]);
        }
    }
    worst
}

/// Refines a PGS solution by solving the equality system on its active set
/// and re-partitioning until the complementarity conditions hold exactly
/// (up to rounding). Falls back to the input when no consistent set is found.
pub fn polish_active_set(
    w: &ComplianceMatrix,
    rhs: &[f64],
    kinds: &[ConstraintKind],
    lambda: &[f64],
    max_rounds: usize,
) -> Vec<f64> {
    let m = w.dim();
    let scale = (0..m).fold(0.0f64, |a, i| a.max(w.get(i, i)));
    let mut active: Vec<bool> = (0..m)
        .map(|i| kinds[i] == ConstraintKind::Bilateral || lambda[i] > 0.0)
        .collect();
    let mut best = lambda.to_vec();
    let mut best_res = lcp_residual(w, rhs, kinds, lambda) - lcp_infeasibility(w, rhs, kinds, lambda) * scale;
    for _ in 0..max_rounds {
        let idx: Vec<usize> = (0..m).filter(|&i| active[i]).collect();
        let mut cand = vec![0.0; m];
        if !idx.is_empty() {
            let sub = DMatrix::from_fn(idx.len(), idx.len(), |a, b| w.get(idx[a], idx[b]));
            let r = DVector::from_iterator(idx.len(), idx.iter().map(|&i| rhs[i]));
            let Some(sol) = sub.cholesky().map(|c| c.solve(&r)) else { break };
            for (k, &i) in idx.iter().enumerate() {
                cand[i] = sol[k];
            }
        }
        let wl = w.mul(&cand);
        let mut changed = false;
        for i in 0..m {
            if kinds[i] != ConstraintKind::Unilateral {
                continue;
            }
            if active[i] && cand[i] < 0.0 {
                active[i] = false;
                changed = true;
            } else if !active[i] && wl[i] - rhs[i] < 0.0 {
                active[i] = true;
                changed = true;
            }
        }
        let clamped: Vec<f64> = (0..m)
            .map(|i| if kinds[i] == ConstraintKind::Unilateral { cand[i].max(0.0) } else { cand[i] })
            .collect();
        let res = lcp_residual(w, rhs, kinds, &clamped) - lcp_infeasibility(w, rhs, kinds, &clamped) * scale;
        if res < best_res {
            best_res = res;
            best = clamped;
        }
        if !changed {
            break;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactConfig {
    pub enabled: bool,
    /// Height of the static ground plane `z = plane_z`.
    pub plane_z: f64,
    /// Nodes whose free position comes closer than this become constraints.
    pub margin: f64,
    pub pgs_tolerance: f64,
    pub pgs_max_sweeps: usize,
    /// Detection rounds per step when corrected nodes still penetrate.
    pub max_rounds: usize,
}

impl Default for ContactConfig {
    fn default() -> Self {
        ContactConfig {
            enabled: false,
            plane_z: 0.0,
            margin: 0.01,
            pgs_tolerance: 1e-12,
            pgs_max_sweeps: 2000,
            max_rounds: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ContactReport {
    pub constraints: usize,
    pub active: usize,
    pub pgs_sweeps: usize,
    pub lcp_residual: f64,
    /// Deepest committed penetration below the plane (non-negative).
    pub penetration: f64,
    pub rounds: usize,
}

/// Free motion that would be committed without contact.
pub fn free_motion(system: &mut System, state: &SimState, solver: &mut LinearSolver) -> Result<(FreeMotion, StepReport)> {
    system.free_motion(state, solver)
}

/// Applies `λ` through the stored responses: `a += u`, `v += h u`,
/// `x += h² u` with `u = A⁻¹ Jᵀ λ`.
pub fn correct_motion(free: &FreeMotion, w: &ComplianceMatrix, lambda: &[f64], h: f64, fixed: &[bool]) -> FreeMotion {
    let n = free.x.len();
    let u = w.response(lambda, n);
    let mut out = free.clone();
    for i in 0..n {
        if fixed[i] {
            continue;
        }
        out.a[i] += u[i];
        out.v[i] += h * u[i];
        out.x[i] += h * h * u[i];
    }
    out
}

/// Node-versus-ground-plane contact handler.
#[derive(Debug, Clone)]
pub struct PlaneContact {
    config: ContactConfig,
}

impl PlaneContact {
    pub fn new(config: ContactConfig) -> Result<Self> {
        if !config.plane_z.is_finite() || !(config.margin >= 0.0) || !(config.pgs_tolerance > 0.0) {
            return Err(Error::invalid("contact", "plane, margin and tolerance must be finite and non-negative"));
        }
        Ok(PlaneContact { config })
    }

    pub fn config(&self) -> &ContactConfig {
        &self.config
    }

    fn gap(&self, x: &[f64], node: usize) -> f64 {
        x[3 * node + 2] - self.config.plane_z
    }

    /// Applies `A⁻¹` with the current factors when they exist, otherwise with
    /// a converged PCG solve.
    fn inverse(system: &System, solver: &LinearSolver, r: &[f64]) -> Result<Vec<f64>> {
        let a = system.matrix().ok_or_else(|| Error::Lifecycle("contact: no assembled system".into()))?;
        if let Some(f) = solver.factors().filter(|f| f.dimension() == a.nrows()) {
            return apply_factors(f, r);
        }
        let cfg = SolverConfig {
            tolerance: solver.config().tolerance.min(1e-12),
            max_iterations: solver.config().max_iterations.max(10 * a.nrows()),
            ..*solver.config()
        };
        let (x, rep) = pcg(a, r, &JacobiPreconditioner::new(a)?, &cfg)?;
        if !rep.converged {
            return Err(Error::NotConverged {
                iterations: rep.iterations,
                residual: rep.final_residual,
            });
        }
        Ok(x)
    }

    /// One contact-aware step. Falls back to committing the free motion if
    /// the contact solve itself fails.
    pub fn step(
        &self,
        system: &mut System,
        state: &mut SimState,
        solver: &mut LinearSolver,
    ) -> Result<(StepReport, ContactReport)> {
        let (free, report) = system.free_motion(state, solver)?;
        if !self.config.enabled {
            system.commit(state, free);
            return Ok((report, ContactReport::default()));
        }
        let (motion, contact) = match self.resolve(system, state, solver, &free) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("contact: step {} aborted ({e}); committing free motion", state.step);
                let pen = self.max_penetration(&free.x, system.fixed_mask());
                (
                    free,
                    ContactReport {
                        penetration: pen,
                        ..ContactReport::default()
                    },
                )
            }
        };
        system.commit(state, motion);
        Ok((report, contact))
    }

    fn max_penetration(&self, x: &[f64], fixed: &[bool]) -> f64 {
        (0..x.len() / 3)
            .filter(|&i| !fixed[3 * i + 2])
            .fold(0.0f64, |m, i| m.max(-self.gap(x, i)))
    }

    fn resolve(
        &self,
        system: &System,
        state: &SimState,
        solver: &LinearSolver,
        free: &FreeMotion,
    ) -> Result<(FreeMotion, ContactReport)> {
        let fixed = system.fixed_mask();
        let h = system.config().h;
        let nodes = free.x.len() / 3;
        let mut selected: Vec<usize> = (0..nodes)
            .filter(|&i| !fixed[3 * i + 2])
            .filter(|&i| self.gap(&free.x, i) < self.config.margin || self.gap(&state.x, i) < self.config.margin)
            .collect();
        if selected.is_empty() {
            return Ok((free.clone(), ContactReport::default()));
        }
        let mut report = ContactReport::default();
        let mut motion = free.clone();
        for round in 1..=self.config.max_rounds.max(1) {
            report.rounds = round;
            let mut set = ConstraintSet::new();
            for &i in &selected {
                set.push(vec![(3 * i + 2, 1.0)], self.config.plane_z, ConstraintKind::Unilateral)?;
            }
            let w = build_compliance(&set, free.x.len(), |r| Self::inverse(system, solver, r))?;
            let jx = set.apply(&free.x);
            let rhs: Vec<f64> = jx.iter().zip(set.delta()).map(|(j, d)| (d - j) / (h * h)).collect();
            let pgs = projected_gauss_seidel(&w, &rhs, set.kinds(), self.config.pgs_tolerance, self.config.pgs_max_sweeps)?;
            let lambda = polish_active_set(&w, &rhs, set.kinds(), &pgs.lambda, 20);
            report.constraints = set.len();
            report.active = lambda.iter().filter(|&&l| l > 0.0).count();
            report.pgs_sweeps = pgs.sweeps;
            report.lcp_residual = lcp_residual(&w, &rhs, set.kinds(), &lambda);
            motion = correct_motion(free, &w, &lambda, h, fixed);
            // Nodes outside the set that the correction pushed under the plane.
            let in_set: std::collections::HashSet<usize> = selected.iter().copied().collect();
            let missed: Vec<usize> = (0..nodes)
                .filter(|&i| !fixed[3 * i + 2] && !in_set.contains(&i) && self.gap(&motion.x, i) < 0.0)
                .collect();
            if missed.is_empty() {
                break;
            }
            selected.extend(missed);
            selected.sort_unstable();
        }
        report.penetration = self.max_penetration(&motion.x, fixed);
        Ok((motion, report))
    }
}
