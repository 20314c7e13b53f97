//! Scenario runner behind the `fastfem` binary: JSON config in, CSV metrics,
//! VTK snapshots and an optional MatrixMarket dump out.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::AssemblyMode;
use crate::contact::{ContactConfig, PlaneContact};
use crate::error::{Error, Result};
use crate::integrator::{IntegratorConfig, LinearSolver, PointLoad, SimState, StepReport, System};
use crate::krylov::{SolverConfig, SolverMode};
use crate::mesh::{generate_beam, load_tetgen, Mesh};
use crate::models::{build_model, MaterialLaw, MaterialParams};
use crate::ndprecond::{
    ldlt_factor, AsyncConfig, FactorizerConfig, RefactorPolicy, DEFAULT_LEAF_THRESHOLD, DEFAULT_TILE,
};

pub const WORKERS_ENV: &str = "FASTFEM_WORKERS";
pub const OUTPUT_DIR_ENV: &str = "FASTFEM_OUTPUT_DIR";

pub const METRICS_HEADER: &str =
    "step,assembly_ms,pattern_rebuilt,solve_ms,cg_iterations,residual,precond_status,staleness";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Fixes every node whose coordinate along `axis` is at most `value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClampRule {
    pub axis: Axis,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshSource {
    Beam {
        nx: usize,
        ny: usize,
        nz: usize,
        spacing: f64,
        #[serde(default)]
        offset: [f64; 3],
    },
    Tetgen {
        node: PathBuf,
        ele: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub source: MeshSource,
    #[serde(default)]
    pub clamp: Option<ClampRule>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub law: MaterialLaw,
    pub young_modulus: f64,
    pub poisson_ratio: f64,
    pub density: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrecondConfig {
    pub enabled: bool,
    pub leaf_threshold: usize,
    pub tile: usize,
    pub policy: RefactorPolicy,
    /// Steps between submitting a snapshot and swapping its factors in.
    /// `null` swaps whenever the background thread is done, which is faster
    /// but makes iteration counts depend on timing.
    pub swap_lag: Option<usize>,
}

impl Default for PrecondConfig {
    fn default() -> Self {
        PrecondConfig {
            enabled: true,
            leaf_threshold: DEFAULT_LEAF_THRESHOLD,
            tile: DEFAULT_TILE,
            policy: RefactorPolicy::OnCompletion,
            swap_lag: Some(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub steps: usize,
    pub seed: u64,
    pub workers: usize,
    pub assembly: AssemblyMode,
    /// Amplitude of the seeded random initial velocity.
    pub initial_velocity_noise: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            steps: 10,
            seed: 0,
            workers: 1,
            assembly: AssemblyMode::Fast,
            initial_velocity_noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub metrics_csv: Option<PathBuf>,
    /// Write a VTK snapshot every this many steps; 0 disables snapshots.
    pub snapshot_every: usize,
    pub snapshot_dir: PathBuf,
    /// MatrixMarket dump of the system matrix of the first step.
    pub matrix_market: Option<PathBuf>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            metrics_csv: Some(PathBuf::from("metrics.csv")),
            snapshot_every: 0,
            snapshot_dir: PathBuf::from("snapshots"),
            matrix_market: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub mesh: MeshConfig,
    pub material: MaterialConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub precond: PrecondConfig,
    #[serde(default)]
    pub contact: ContactConfig,
    #[serde(default)]
    pub loads: Vec<PointLoad>,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads the file and resolves relative input and output paths against
    /// its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.resolve_paths(&base);
        cfg.check_inputs()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if let MeshSource::Beam { nx, ny, nz, spacing, .. } = self.mesh.source {
            if nx < 2 || ny < 2 || nz < 2 {
                return bad(format!("mesh.source.beam: at least 2 nodes per axis, got ({nx}, {ny}, {nz})"));
            }
            if !(spacing > 0.0 && spacing.is_finite()) {
                return bad(format!("mesh.source.beam.spacing must be positive, got {spacing}"));
            }
        }
        let m = &self.material;
        MaterialParams::new(m.young_modulus, m.poisson_ratio, m.density)
            .map_err(|e| Error::Config(format!("material: {e}")))?;
        self.integrator.validate().map_err(|e| Error::Config(format!("integrator: {e}")))?;
        self.solver.validate().map_err(|e| Error::Config(format!("solver: {e}")))?;
        if self.precond.tile == 0 || self.precond.leaf_threshold == 0 {
            return bad("precond: tile and leaf_threshold must be positive".into());
        }
        if let RefactorPolicy::EveryK(0) = self.precond.policy {
            return bad("precond.policy.every_k must be at least 1".into());
        }
        if self.run.workers == 0 {
            return bad("run.workers must be at least 1".into());
        }
        if !(self.run.initial_velocity_noise >= 0.0) {
            return bad("run.initial_velocity_noise must be non-negative".into());
        }
        PlaneContact::new(self.contact).map_err(|e| Error::Config(format!("contact: {e}")))?;
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let MeshSource::Tetgen { node, ele } = &mut self.mesh.source {
            join(node);
            join(ele);
        }
        self.output.metrics_csv.as_mut().map(join);
        self.output.matrix_market.as_mut().map(join);
        join(&mut self.output.snapshot_dir);
    }

    fn check_inputs(&self) -> Result<()> {
        if let MeshSource::Tetgen { node, ele } = &self.mesh.source {
            for p in [node, ele] {
                if !p.is_file() {
                    return Err(Error::Config(format!("mesh.source.tetgen: {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    /// Applies `FASTFEM_WORKERS` and `FASTFEM_OUTPUT_DIR`. The output
    /// directory replaces the directory of every output path.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(w) = std::env::var(WORKERS_ENV) {
            self.run.workers = w
                .trim()
                .parse()
                .ok()
                .filter(|&n: &usize| n > 0)
                .ok_or_else(|| Error::Config(format!("{WORKERS_ENV} must be a positive integer, got {w:?}")))?;
        }
        if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
            self.redirect_output(Path::new(&dir));
        }
        Ok(())
    }

    pub fn redirect_output(&mut self, dir: &Path) {
        let rebase = |p: &mut PathBuf, fallback: &str| {
            let name = p.file_name().map(PathBuf::from).unwrap_or_else(|| PathBuf::from(fallback));
            *p = dir.join(name);
        };
        if let Some(p) = self.output.metrics_csv.as_mut() {
            rebase(p, "metrics.csv");
        }
        if let Some(p) = self.output.matrix_market.as_mut() {
            rebase(p, "system.mtx");
        }
        rebase(&mut self.output.snapshot_dir, "snapshots");
    }

    pub fn build_mesh(&self) -> Result<Mesh> {
        let mesh = match &self.mesh.source {
            MeshSource::Beam {
                nx,
                ny,
                nz,
                spacing,
                offset,
            } => generate_beam(*nx, *ny, *nz, *spacing)?.translated(*offset),
            MeshSource::Tetgen { node, ele } => load_tetgen(node, ele)?,
        };
        Ok(match self.mesh.clamp {
            Some(ClampRule { axis, value }) => {
                let tol = 1e-9 * mesh.bbox_diagonal().max(1.0);
                mesh.fix_nodes_where(|p| p[axis.index()] <= value + tol)
            }
            None => mesh,
        })
    }

    pub fn material_params(&self) -> Result<MaterialParams> {
        let m = &self.material;
        MaterialParams::new(m.young_modulus, m.poisson_ratio, m.density)
    }

    pub fn async_config(&self) -> AsyncConfig {
        AsyncConfig {
            factorizer: FactorizerConfig {
                leaf_threshold: self.precond.leaf_threshold,
                tile: self.precond.tile,
                workers: self.run.workers,
                ..FactorizerConfig::default()
            },
            policy: self.precond.policy,
            swap_lag: self.precond.swap_lag,
        }
    }

    /// Solver settings after folding in the preconditioner switch: a
    /// disabled preconditioner turns the LDLᵀ mode into Jacobi PCG.
    pub fn effective_solver(&self) -> SolverConfig {
        let mut s = self.solver;
        if s.mode == SolverMode::PcgLdlt && !self.precond.enabled {
            s.mode = SolverMode::PcgJacobi;
        }
        s
    }
}

/// One row of the metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics {
    pub step: usize,
    pub assembly_ms: f64,
    pub pattern_rebuilt: bool,
    pub solve_ms: f64,
    pub cg_iterations: usize,
    pub residual: f64,
    pub precond_status: String,
    pub staleness: Option<usize>,
}

impl StepMetrics {
    pub fn from_report(r: &StepReport) -> Self {
        StepMetrics {
            step: r.step + 1,
            assembly_ms: r.assembly.seconds * 1e3,
            pattern_rebuilt: r.assembly.pattern_rebuilt,
            solve_ms: r.solve.seconds * 1e3,
            cg_iterations: r.iterations,
            residual: r.residual,
            precond_status: r.solve.status.to_string(),
            staleness: r.solve.staleness,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{},{:.6},{},{:e},{},{}",
            self.step,
            self.assembly_ms,
            self.pattern_rebuilt,
            self.solve_ms,
            self.cg_iterations,
            self.residual,
            self.precond_status,
            self.staleness.map(|s| s.to_string()).unwrap_or_default()
        )
    }
}

/// Legacy ASCII VTK unstructured grid with a velocity field.
pub fn write_vtk(out: &mut impl Write, mesh: &Mesh, state: &SimState) -> std::io::Result<()> {
    let n = mesh.num_nodes();
    let m = mesh.num_elements();
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "fastfem step {}", state.step);
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {n} double");
    for p in state.x.chunks_exact(3) {
        let _ = writeln!(s, "{} {} {}", p[0], p[1], p[2]);
    }
    let _ = writeln!(s, "CELLS {m} {}", 5 * m);
    for e in mesh.elements() {
        let _ = writeln!(s, "4 {} {} {} {}", e[0], e[1], e[2], e[3]);
    }
    let _ = writeln!(s, "CELL_TYPES {m}");
    for _ in 0..m {
        let _ = writeln!(s, "10");
    }
    let _ = writeln!(s, "POINT_DATA {n}");
    let _ = writeln!(s, "VECTORS velocity double");
    for v in state.v.chunks_exact(3) {
        let _ = writeln!(s, "{} {} {}", v[0], v[1], v[2]);
    }
    out.write_all(s.as_bytes())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

/// Everything needed to step a configured scene.
pub struct Scene {
    pub system: System,
    pub state: SimState,
    pub solver: LinearSolver,
    pub contact: PlaneContact,
}

impl Scene {
    pub fn build(cfg: &ScenarioConfig) -> Result<Self> {
        let mesh = cfg.build_mesh()?;
        let params = cfg.material_params()?;
        let model = build_model(cfg.material.law, &mesh, &params)?;
        let mut system = System::new(mesh, model, params, cfg.integrator, &cfg.loads)?;
        system.set_assembly_mode(cfg.run.assembly);
        system.set_assembly_workers(cfg.run.workers);
        let mut state = system.initial_state();
        if cfg.run.initial_velocity_noise > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
            let amp = cfg.run.initial_velocity_noise;
            for (v, &fixed) in state.v.iter_mut().zip(system.fixed_mask()) {
                let dv = rng.gen_range(-amp..=amp);
                if !fixed {
                    *v = dv;
                }
            }
        }
        let solver = LinearSolver::new(cfg.effective_solver(), Some(cfg.async_config()))?;
        let contact = PlaneContact::new(cfg.contact)?;
        Ok(Scene {
            system,
            state,
            solver,
            contact,
        })
    }

    pub fn step(&mut self) -> Result<StepReport> {
        let (report, _) = self.contact.step(&mut self.system, &mut self.state, &mut self.solver)?;
        Ok(report)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub metrics: Vec<StepMetrics>,
    pub snapshots: Vec<PathBuf>,
    pub wall_seconds: f64,
}

/// Runs the scenario and writes every configured output.
pub fn run_scenario(cfg: &ScenarioConfig, quiet: bool) -> Result<RunSummary> {
    let start = Instant::now();
    let mut scene = Scene::build(cfg)?;
    let mut csv = match &cfg.output.metrics_csv {
        Some(p) => {
            let mut w = create(p)?;
            writeln!(w, "{METRICS_HEADER}").map_err(|e| Error::io(p, e))?;
            Some((w, p.clone()))
        }
        None => None,
    };
    let mut metrics = Vec::with_capacity(cfg.run.steps);
    let mut snapshots = Vec::new();
    for _ in 0..cfg.run.steps {
        let report = scene.step()?;
        let row = StepMetrics::from_report(&report);
        if let Some((w, p)) = csv.as_mut() {
            writeln!(w, "{}", row.csv_row()).map_err(|e| Error::io(&*p, e))?;
        }
        if row.step == 1 {
            if let (Some(p), Some(a)) = (&cfg.output.matrix_market, scene.system.matrix()) {
                let mut w = create(p)?;
                a.write_matrix_market(&mut w).map_err(|e| Error::io(p, e))?;
                w.flush().map_err(|e| Error::io(p, e))?;
            }
        }
        if cfg.output.snapshot_every > 0 && row.step % cfg.output.snapshot_every == 0 {
            let p = cfg.output.snapshot_dir.join(format!("step_{:05}.vtk", row.step));
            let mut w = create(&p)?;
            write_vtk(&mut w, scene.system.mesh(), &scene.state).map_err(|e| Error::io(&p, e))?;
            w.flush().map_err(|e| Error::io(&p, e))?;
            snapshots.push(p);
        }
        if !quiet {
            eprintln!(
                "step {:>5}  iters {:>4}  residual {:.3e}  precond {}",
                row.step, row.cg_iterations, row.residual, row.precond_status
            );
        }
        metrics.push(row);
    }
    if let Some((mut w, p)) = csv {
        w.flush().map_err(|e| Error::io(p, e))?;
    }
    Ok(RunSummary {
        metrics,
        snapshots,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Cached compression mapping.
    Fast,
    /// Pattern rebuilt on every step.
    Full,
    /// Unpreconditioned CG.
    Cg,
    /// CG with the background LDLᵀ preconditioner.
    Pcg,
    /// Jacobi-preconditioned CG.
    Jacobi,
    /// Sequential against level-parallel triangular solves on one factorization.
    Trisolve,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "fast" => Variant::Fast,
            "full" => Variant::Full,
            "cg" => Variant::Cg,
            "pcg" => Variant::Pcg,
            "jacobi" => Variant::Jacobi,
            "trisolve" => Variant::Trisolve,
            other => {
                return Err(Error::Config(format!(
                    "unknown bench variant {other:?} (expected fast, full, cg, pcg, jacobi, trisolve)"
                )))
            }
        })
    }
}

pub fn parse_variants(list: &str) -> Result<Vec<Variant>> {
    list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub variant: Variant,
    pub median_assembly_ms: f64,
    pub median_solve_ms: f64,
    pub median_step_ms: f64,
    pub median_iterations: f64,
    pub max_iterations: usize,
    /// Largest relative ∞-norm gap between parallel and sequential solves.
    pub trisolve_gap: Option<f64>,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

fn variant_config(base: &ScenarioConfig, v: Variant) -> ScenarioConfig {
    let mut cfg = base.clone();
    cfg.output = OutputConfig {
        metrics_csv: None,
        snapshot_every: 0,
        snapshot_dir: PathBuf::new(),
        matrix_market: None,
    };
    match v {
        Variant::Fast | Variant::Trisolve => cfg.run.assembly = AssemblyMode::Fast,
        Variant::Full => cfg.run.assembly = AssemblyMode::Full,
        Variant::Cg => cfg.solver.mode = SolverMode::Cg,
        Variant::Jacobi => cfg.solver.mode = SolverMode::PcgJacobi,
        Variant::Pcg => {
            cfg.solver.mode = SolverMode::PcgLdlt;
            cfg.precond.enabled = true;
        }
    }
    cfg
}

fn bench_trisolve(cfg: &ScenarioConfig) -> Result<BenchRow> {
    let mut scene = Scene::build(cfg)?;
    scene.system.assemble_system(&scene.state)?;
    let a = scene.system.matrix().expect("assembled").clone();
    let fcfg = cfg.async_config().factorizer;
    let seq = ldlt_factor(&a, FactorizerConfig { workers: 1, ..fcfg })?;
    let par = seq.with_workers(cfg.run.workers.max(2))?;
    let rhs = scene.system.rhs().to_vec();
    let reps = cfg.run.steps.max(1);
    let (mut t_seq, mut t_par) = (Vec::with_capacity(reps), Vec::with_capacity(reps));
    let mut gap = 0.0f64;
    for _ in 0..reps {
        let t = Instant::now();
        let zs = crate::ndprecond::apply(&seq, &rhs)?;
        t_seq.push(t.elapsed().as_secs_f64() * 1e3);
        let t = Instant::now();
        let zp = crate::ndprecond::apply(&par, &rhs)?;
        t_par.push(t.elapsed().as_secs_f64() * 1e3);
        let scale = zs.iter().fold(0.0f64, |m, z| m.max(z.abs())).max(f64::MIN_POSITIVE);
        let diff = zs.iter().zip(&zp).fold(0.0f64, |m, (s, p)| m.max((s - p).abs()));
        gap = gap.max(diff / scale);
    }
    Ok(BenchRow {
        variant: Variant::Trisolve,
        median_assembly_ms: median(&mut t_seq),
        median_solve_ms: median(&mut t_par),
        median_step_ms: f64::NAN,
        median_iterations: 0.0,
        max_iterations: 0,
        trisolve_gap: Some(gap),
    })
}

/// Runs the scenario once per variant without writing files.
pub fn bench(cfg: &ScenarioConfig, variants: &[Variant], quiet: bool) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::with_capacity(variants.len());
    for &v in variants {
        let vc = variant_config(cfg, v);
        if v == Variant::Trisolve {
            rows.push(bench_trisolve(&vc)?);
            continue;
        }
        let mut scene = Scene::build(&vc)?;
        let (mut asm, mut sol, mut step, mut its) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut max_it = 0;
        for _ in 0..vc.run.steps {
            let t = Instant::now();
            let r = scene.step()?;
            step.push(t.elapsed().as_secs_f64() * 1e3);
            asm.push(r.assembly.seconds * 1e3);
            sol.push(r.solve.seconds * 1e3);
            its.push(r.iterations as f64);
            max_it = max_it.max(r.iterations);
        }
        if !quiet {
            eprintln!("bench: {v:?} done ({} steps)", vc.run.steps);
        }
        rows.push(BenchRow {
            variant: v,
            median_assembly_ms: median(&mut asm),
            median_solve_ms: median(&mut sol),
            median_step_ms: median(&mut step),
            median_iterations: median(&mut its),
            max_iterations: max_it,
            trisolve_gap: None,
        });
    }
    Ok(rows)
}

pub fn format_bench(rows: &[BenchRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<10} {:>14} {:>12} {:>12} {:>11} {:>9} {:>12}",
        "variant", "assembly_ms", "solve_ms", "step_ms", "med_iters", "max_iters", "trisolve_gap"
    );
    for r in rows {
        if r.variant == Variant::Trisolve {
            let _ = writeln!(
                s,
                "{:<10} {:>14} {:>12} {:>12} {:>11} {:>9} {:>12.3e}",
                "trisolve",
                format!("seq {:.3}", r.median_assembly_ms),
                format!("par {:.3}", r.median_solve_ms),
                "-",
                "-",
                "-",
                r.trisolve_gap.unwrap_or(f64::NAN)
            );
            continue;
        }
        let _ = writeln!(
            s,
            "{:<10} {:>14.3} {:>12.3} {:>12.3} {:>11.1} {:>9} {:>12}",
            format!("{:?}", r.variant).to_lowercase(),
            r.median_assembly_ms,
            r.median_solve_ms,
            r.median_step_ms,
            r.median_iterations,
            r.max_iterations,
            "-"
        );
    }
    s
}

/// Process exit code for an error: 2 for configuration problems, 1 for
/// anything that failed while running.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        _ => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> ScenarioConfig {
        ScenarioConfig::from_json(
            r#"{
                "mesh": { "source": { "beam": { "nx": 3, "ny": 3, "nz": 6, "spacing": 0.02 } },
                          "clamp": { "axis": "z", "value": 0.0 } },
                "material": { "law": "corotational", "young_modulus": 1e5, "poisson_ratio": 0.3, "density": 1000 },
                "run": { "steps": 10 }
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn config_round_trip() {
        let cfg = minimal();
        let again = ScenarioConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn unknown_law_is_a_config_error() {
        let text = minimal().to_json().replace("\"corotational\"", "\"neo_hookean\"");
        let err = ScenarioConfig::from_json(&text).unwrap_err();
        assert_eq!(exit_code(&err), 2);
        assert!(err.to_string().contains("law") || err.to_string().contains("neo_hookean"), "{err}");
    }

    #[test]
    fn unknown_field_is_rejected() {
        let text = minimal().to_json().replacen("\"steps\"", "\"stepz\"", 1);
        assert!(ScenarioConfig::from_json(&text).is_err());
    }

    #[test]
    fn metrics_header_is_stable() {
        assert_eq!(
            METRICS_HEADER,
            "step,assembly_ms,pattern_rebuilt,solve_ms,cg_iterations,residual,precond_status,staleness"
        );
        let row = StepMetrics {
            step: 1,
            assembly_ms: 0.5,
            pattern_rebuilt: true,
            solve_ms: 1.25,
            cg_iterations: 3,
            residual: 1e-10,
            precond_status: "ready".into(),
            staleness: Some(1),
        };
        assert_eq!(row.csv_row(), "1,0.500000,true,1.250000,3,1e-10,ready,1");
        assert_eq!(row.csv_row().split(',').count(), METRICS_HEADER.split(',').count());
    }

    #[test]
    fn ten_steps_rebuild_once() {
        let mut cfg = minimal();
        cfg.output.metrics_csv = None;
        let run = run_scenario(&cfg, true).unwrap();
        assert_eq!(run.metrics.len(), 10);
        let rebuilt: Vec<bool> = run.metrics.iter().map(|m| m.pattern_rebuilt).collect();
        assert!(rebuilt[0]);
        assert!(rebuilt[1..].iter().all(|r| !r));
    }

    #[test]
    fn vtk_layout() {
        let cfg = minimal();
        let scene = Scene::build(&cfg).unwrap();
        let mut out = Vec::new();
        write_vtk(&mut out, scene.system.mesh(), &scene.state).unwrap();
        let text = String::from_utf8(out).unwrap();
        let n = scene.system.mesh().num_nodes();
        let m = scene.system.mesh().num_elements();
        assert!(text.starts_with("# vtk DataFile Version 3.0\n"));
        assert!(text.contains(&format!("POINTS {n} double\n")));
        assert!(text.contains(&format!("CELLS {m} {}\n", 5 * m)));
        let types: Vec<&str> = text.lines().skip_while(|l| !l.starts_with("CELL_TYPES")).skip(1).take(m).collect();
        assert!(types.len() == m && types.iter().all(|&t| t == "10"));
    }

    #[test]
    fn variants_parse() {
        assert_eq!(
            parse_variants("fast,full,cg,pcg").unwrap(),
            vec![Variant::Fast, Variant::Full, Variant::Cg, Variant::Pcg]
        );
        assert_eq!(exit_code(&parse_variants("fast,slow").unwrap_err()), 2);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn output_redirect_keeps_file_names() {
        let mut cfg = minimal();
        cfg.output.matrix_market = Some(PathBuf::from("a/b/system.mtx"));
        cfg.redirect_output(Path::new("/tmp/out"));
        assert_eq!(cfg.output.metrics_csv, Some(PathBuf::from("/tmp/out/metrics.csv")));
        assert_eq!(cfg.output.matrix_market, Some(PathBuf::from("/tmp/out/system.mtx")));
        assert_eq!(cfg.output.snapshot_dir, PathBuf::from("/tmp/out/snapshots"));
    }
}
