//! Linearized backward Euler on accelerations.
//!
//! Each step solves `A a = b` with `A = (1 + hα) M + h (h + β) K` and
//! `b = f_ext − f(x) − h K v`, then updates `v += h a`, `x += h v`.
//! `M` and `K` are collected in one pass (mass triplets first), so the
//! system matrix is a per-triplet weighted compression of that pass.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assembly::{Assembler, AssemblyMode, CsrMatrix};
use crate::error::{Error, Result};
use crate::krylov::{cg, pcg, JacobiPreconditioner, SolveReport, SolverConfig, SolverMode};
use crate::mesh::Mesh;
use crate::models::{lumped_mass, lumped_mass_vector, ForceModel, MaterialParams};
use crate::ndprecond::{AsyncConfig, AsyncPreconditioner, LdlFactors, PrecondStatus};

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
    pub f_int: Vec<f64>,
    pub f_ext: Vec<f64>,
    pub t: f64,
    pub step: usize,
}

impl SimState {
    pub fn at_rest(mesh: &Mesh) -> Self {
        let n = mesh.num_dofs();
        SimState {
            x: mesh.positions(),
            v: vec![0.0; n],
            a: vec![0.0; n],
            f_int: vec![0.0; n],
            f_ext: vec![0.0; n],
            t: 0.0,
            step: 0,
        }
    }

    pub fn max_speed(&self) -> f64 {
        self.v.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.x.len();
        for (name, len) in [("v", self.v.len()), ("a", self.a.len()), ("f_int", self.f_int.len()), ("f_ext", self.f_ext.len())] {
            if len != n {
                return Err(Error::invalid("integrator", format!("state vector {name} has length {len}, expected {n}")));
            }
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !(finite(&self.x) && finite(&self.v) && finite(&self.a)) || !self.t.is_finite() {
            return Err(Error::NonFinite {
                module: "integrator",
                msg: format!("state at step {}", self.step),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    /// Time step in seconds.
    pub h: f64,
    pub rayleigh_mass: f64,
    pub rayleigh_stiffness: f64,
    pub gravity: [f64; 3],
    /// Newton iterations per step; 1 is the plain linearized step.
    pub newton_iterations: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            h: 0.01,
            rayleigh_mass: 0.0,
            rayleigh_stiffness: 0.0,
            gravity: [0.0, 0.0, -9.81],
            newton_iterations: 1,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::invalid("integrator", format!("time step must be positive, got {}", self.h)));
        }
        if !(self.rayleigh_mass >= 0.0) || !(self.rayleigh_stiffness >= 0.0) {
            return Err(Error::invalid("integrator", "Rayleigh coefficients must be non-negative"));
        }
        if self.gravity.iter().any(|g| !g.is_finite()) {
            return Err(Error::invalid("integrator", "gravity must be finite"));
        }
        if self.newton_iterations == 0 {
            return Err(Error::invalid("integrator", "at least one Newton iteration is required"));
        }
        Ok(())
    }

    pub fn mass_coefficient(&self) -> f64 {
        1.0 + self.h * self.rayleigh_mass
    }

    pub fn stiffness_coefficient(&self) -> f64 {
        self.h * (self.h + self.rayleigh_stiffness)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointLoad {
    pub node: usize,
    pub force: [f64; 3],
}

/// Timing and bookkeeping of one assembly.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AssemblyReport {
    pub seconds: f64,
    pub pattern_rebuilt: bool,
}

/// Outcome of one linear solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSolveReport {
    pub krylov: SolveReport,
    pub seconds: f64,
    pub status: PrecondStatus,
    pub staleness: Option<usize>,
    /// Preconditioner actually used for the Krylov iterations.
    pub preconditioner: &'static str,
}

/// Krylov solver plus the optional background LDLᵀ preconditioner.
#[derive(Debug)]
pub struct LinearSolver {
    config: SolverConfig,
    precond: Option<AsyncPreconditioner>,
}

impl LinearSolver {
    pub fn new(config: SolverConfig, async_config: Option<AsyncConfig>) -> Result<Self> {
        config.validate()?;
        let precond = match (config.mode, async_config) {
            (SolverMode::PcgLdlt, Some(c)) => Some(AsyncPreconditioner::new(c)?),
            (SolverMode::PcgLdlt, None) => Some(AsyncPreconditioner::new(AsyncConfig::default())?),
            _ => None,
        };
        Ok(LinearSolver { config, precond })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn preconditioner(&self) -> Option<&AsyncPreconditioner> {
        self.precond.as_ref()
    }

    pub fn preconditioner_mut(&mut self) -> Option<&mut AsyncPreconditioner> {
        self.precond.as_mut()
    }

    pub fn status(&self) -> PrecondStatus {
        self.precond.as_ref().map_or(PrecondStatus::Empty, |p| p.status())
    }

    pub fn staleness(&self, step: usize) -> Option<usize> {
        self.precond.as_ref().and_then(|p| p.staleness(step))
    }

    /// Hands the new system matrix to the background preconditioner.
    pub fn observe(&mut self, a: &CsrMatrix, step: usize) -> Result<()> {
        if let Some(p) = &mut self.precond {
            p.update(a, step)?;
        }
        Ok(())
    }

    pub fn factors(&self) -> Option<&LdlFactors> {
        self.precond.as_ref().and_then(|p| p.factors()).map(|f| f.as_ref())
    }

    /// Solves `a x = b` with the configured method. Without ready factors the
    /// LDLᵀ mode runs Jacobi-preconditioned CG.
    pub fn solve(&self, a: &CsrMatrix, b: &[f64], step: usize) -> Result<(Vec<f64>, LinearSolveReport)> {
        let start = Instant::now();
        let (x, krylov, name) = match self.config.mode {
            SolverMode::Cg => {
                let (x, r) = cg(a, b, &self.config)?;
                (x, r, "none")
            }
            SolverMode::PcgJacobi => {
                let (x, r) = pcg(a, b, &JacobiPreconditioner::new(a)?, &self.config)?;
                (x, r, "jacobi")
            }
            SolverMode::PcgLdlt => match self.factors() {
                Some(f) if f.dimension() == a.nrows() => {
                    let (x, r) = pcg(a, b, f, &self.config)?;
                    (x, r, "ldlt")
                }
                _ => {
                    let (x, r) = pcg(a, b, &JacobiPreconditioner::new(a)?, &self.config)?;
                    (x, r, "jacobi")
                }
            },
        };
        Ok((
            x,
            LinearSolveReport {
                krylov,
                seconds: start.elapsed().as_secs_f64(),
                status: self.status(),
                staleness: self.staleness(step),
                preconditioner: name,
            },
        ))
    }
}

/// Per-step report of [`System::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub assembly: AssemblyReport,
    pub solve: LinearSolveReport,
    /// Relative residual of the last linear solve.
    pub residual: f64,
    /// Krylov iterations summed over Newton iterations.
    pub iterations: usize,
}

/// Uncommitted result of one unconstrained step.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeMotion {
    pub a: Vec<f64>,
    pub v: Vec<f64>,
    pub x: Vec<f64>,
    pub f_int: Vec<f64>,
}

/// A deformable body: mesh, element law, lumped mass, loads and the
/// assembler that owns the system matrix.
pub struct System {
    mesh: Mesh,
    model: Box<dyn ForceModel>,
    params: MaterialParams,
    config: IntegratorConfig,
    mass: Vec<f64>,
    f_ext: Vec<f64>,
    fixed: Vec<bool>,
    assembler: Assembler,
    coeffs: Vec<f64>,
    mass_triplets: usize,
    rhs: Vec<f64>,
}

impl std::fmt::Debug for System {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("System")
            .field("model", &self.model.name())
            .field("dofs", &self.mesh.num_dofs())
            .field("elements", &self.mesh.num_elements())
            .field("config", &self.config)
            .finish()
    }
}

impl System {
    pub fn new(
        mesh: Mesh,
        model: Box<dyn ForceModel>,
        params: MaterialParams,
        config: IntegratorConfig,
        loads: &[PointLoad],
    ) -> Result<Self> {
        config.validate()?;
        params.validate()?;
        let n = mesh.num_dofs();
        if model.num_dofs() != n {
            return Err(Error::DimensionMismatch {
                module: "integrator",
                expected: n,
                got: model.num_dofs(),
            });
        }
        let mass = lumped_mass_vector(&mesh, &params);
        let mut f_ext: Vec<f64> = mass.iter().enumerate().map(|(i, m)| m * config.gravity[i % 3]).collect();
        for load in loads {
            if load.node >= mesh.num_nodes() {
                return Err(Error::invalid("integrator", format!("point load on missing node {}", load.node)));
            }
            for d in 0..3 {
                f_ext[3 * load.node + d] += load.force[d];
            }
        }
        let fixed_dofs = mesh.fixed_dofs();
        let mut fixed = vec![false; n];
        for &d in &fixed_dofs {
            fixed[d] = true;
        }
        Ok(System {
            assembler: Assembler::new(n, fixed_dofs),
            mesh,
            model,
            params,
            config,
            mass,
            f_ext,
            fixed,
            coeffs: Vec::new(),
            mass_triplets: 0,
            rhs: vec![0.0; n],
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn model(&self) -> &dyn ForceModel {
        self.model.as_ref()
    }

    pub fn params(&self) -> &MaterialParams {
        &self.params
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.config
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn external_forces(&self) -> &[f64] {
        &self.f_ext
    }

    pub fn fixed_mask(&self) -> &[bool] {
        &self.fixed
    }

    pub fn assembler(&self) -> &Assembler {
        &self.assembler
    }

    pub fn set_assembly_mode(&mut self, mode: AssemblyMode) {
        self.assembler.set_mode(mode);
    }

    pub fn set_assembly_workers(&mut self, workers: usize) {
        let mode = self.assembler.mode();
        let fixed = self.assembler.fixed_dofs().to_vec();
        self.assembler = Assembler::new(self.mesh.num_dofs(), fixed).with_mode(mode).with_workers(workers);
    }

    pub fn rebuild_count(&self) -> usize {
        self.assembler.rebuild_count()
    }

    /// Last assembled system matrix.
    pub fn matrix(&self) -> Option<&CsrMatrix> {
        self.assembler.matrix()
    }

    /// Last assembled right-hand side.
    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn initial_state(&self) -> SimState {
        let mut s = SimState::at_rest(&self.mesh);
        s.f_ext = self.f_ext.clone();
        s
    }

    /// One fused collection pass at positions `x`. `w` is multiplied by the
    /// stiffness during the pass; the right-hand side becomes
    /// `f_ext − f(x) − K w_scale·w − extra` where the caller picks the terms.
    fn collect(&mut self, x: &[f64], w: &[f64]) -> Result<(Vec<f64>, Vec<f64>, AssemblyReport)> {
        let start = Instant::now();
        let sink = self.assembler.begin();
        lumped_mass(&self.mesh, &self.params, sink);
        let mass_triplets = sink.cursor();
        let out = self.model.forces_and_stiffness(x, Some(w), sink)?;
        let total = sink.cursor();
        if self.coeffs.len() != total || self.mass_triplets != mass_triplets {
            let (cm, ck) = (self.config.mass_coefficient(), self.config.stiffness_coefficient());
            self.coeffs = (0..total).map(|t| if t < mass_triplets { cm } else { ck }).collect();
            self.mass_triplets = mass_triplets;
        }
        self.assembler.finish(Some(&self.coeffs))?;
        Ok((
            out.forces,
            out.stiffness_times,
            AssemblyReport {
                seconds: start.elapsed().as_secs_f64(),
                pattern_rebuilt: self.assembler.last_pass_rebuilt(),
            },
        ))
    }

    /// Assembles `A` and `b` for the state. Returns the internal forces and
    /// the assembly report; `A` is available through [`Self::matrix`] and `b`
    /// through [`Self::rhs`].
    pub fn assemble_system(&mut self, state: &SimState) -> Result<(Vec<f64>, AssemblyReport)> {
        state.validate()?;
        let (f, kv, report) = self.collect(&state.x, &state.v)?;
        let h = self.config.h;
        for i in 0..self.rhs.len() {
            self.rhs[i] = if self.fixed[i] { 0.0 } else { self.f_ext[i] - f[i] - h * kv[i] };
        }
        Ok((f, report))
    }

    /// One unconstrained step without touching `state`.
    pub fn free_motion(&mut self, state: &SimState, solver: &mut LinearSolver) -> Result<(FreeMotion, StepReport)> {
        let step = state.step;
        let (mut f_int, assembly) = self.assemble_system(state)?;
        let a_mat = self.assembler.matrix().expect("assembled above");
        solver.observe(a_mat, step)?;
        let (mut acc, mut solve) = solver.solve(a_mat, &self.rhs, step)?;
        if !solve.krylov.converged {
            return Err(Error::NotConverged {
                iterations: solve.krylov.iterations,
                residual: solve.krylov.final_residual,
            });
        }
        let mut iterations = solve.krylov.iterations;
        let mut assembly_total = assembly;
        let h = self.config.h;
        for _ in 1..self.config.newton_iterations {
            // Residual of the implicit equations at the current iterate.
            let x_i: Vec<f64> = (0..acc.len()).map(|k| state.x[k] + h * state.v[k] + h * h * acc[k]).collect();
            let (f_i, ka, rep) = self.collect(&x_i, &acc)?;
            assembly_total.seconds += rep.seconds;
            assembly_total.pattern_rebuilt |= rep.pattern_rebuilt;
            let cm = self.config.mass_coefficient();
            let beta = self.config.rayleigh_stiffness;
            for k in 0..self.rhs.len() {
                self.rhs[k] = if self.fixed[k] {
                    0.0
                } else {
                    self.f_ext[k] - f_i[k] - cm * self.mass[k] * acc[k] - h * beta * ka[k]
                };
            }
            let a_mat = self.assembler.matrix().expect("assembled above");
            let (delta, rep) = solver.solve(a_mat, &self.rhs, step)?;
            if !rep.krylov.converged {
                return Err(Error::NotConverged {
                    iterations: rep.krylov.iterations,
                    residual: rep.krylov.final_residual,
                });
            }
            iterations += rep.krylov.iterations;
            for (ak, dk) in acc.iter_mut().zip(&delta) {
                *ak += dk;
            }
            f_int = f_i;
            solve = rep;
        }
        for (k, ak) in acc.iter_mut().enumerate() {
            if self.fixed[k] {
                *ak = 0.0;
            }
        }
        let v: Vec<f64> = (0..acc.len())
            .map(|k| if self.fixed[k] { state.v[k] } else { state.v[k] + h * acc[k] })
            .collect();
        let x: Vec<f64> = (0..acc.len())
            .map(|k| if self.fixed[k] { state.x[k] } else { state.x[k] + h * v[k] })
            .collect();
        let report = StepReport {
            step,
            assembly: assembly_total,
            residual: solve.krylov.final_residual,
            iterations,
            solve,
        };
        Ok((FreeMotion { a: acc, v, x, f_int }, report))
    }

    /// Moves `state` to the given kinematics and advances time.
    pub fn commit(&self, state: &mut SimState, motion: FreeMotion) {
        state.a = motion.a;
        state.v = motion.v;
        state.x = motion.x;
        state.f_int = motion.f_int;
        state.f_ext.clone_from(&self.f_ext);
        state.t += self.config.h;
        state.step += 1;
    }

    /// Advances `state` by one step.
    pub fn step(&mut self, state: &mut SimState, solver: &mut LinearSolver) -> Result<StepReport> {
        let (motion, report) = self.free_motion(state, solver)?;
        self.commit(state, motion);
        Ok(report)
    }
}
