use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::assembly::{Assembler, CsrMatrix};
use crate::krylov::{pcg, SolverConfig, SolverMode};
use crate::mesh::{generate_beam, vertex_adjacency};
use crate::models::{lumped_mass, Corotational, ForceModel, MaterialParams};

/// `M + h² K` of a beam clamped at `z = 0`, with the projective filter.
fn beam_matrix(nx: usize, ny: usize, nz: usize) -> CsrMatrix {
    let mesh = generate_beam(nx, ny, nz, 0.1).unwrap().fix_nodes_where(|p| p[2] == 0.0);
    let params = MaterialParams::new(1.0e6, 0.3, 1000.0).unwrap();
    let model = Corotational::new(&mesh, &params).unwrap();
    let mut asm = Assembler::new(mesh.num_dofs(), mesh.fixed_dofs());
    let sink = asm.begin();
    lumped_mass(&mesh, &params, sink);
    let n_mass = sink.cursor();
    model.forces_and_stiffness(&mesh.positions(), None, sink).unwrap();
    let total = sink.cursor();
    let h = 0.01;
    let coeffs: Vec<f64> = (0..total).map(|t| if t < n_mass { 1.0 } else { h * h }).collect();
    asm.finish(Some(&coeffs)).unwrap().clone()
}

fn scalar_config(threshold: usize) -> FactorizerConfig {
    FactorizerConfig {
        leaf_threshold: threshold,
        dofs_per_vertex: 1,
        ..FactorizerConfig::default()
    }
}

fn dense_of(a: &CsrMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.nrows(), a.ncols(), &a.to_dense())
}

fn forward_oracle(l: &UnitLower, r: &[f64]) -> Vec<f64> {
    let mut y = r.to_vec();
    for j in 0..l.n {
        let (rows, vals) = l.column(j);
        for (&i, &v) in rows.iter().zip(vals) {
            y[i] -= v * y[j];
        }
    }
    y
}

fn backward_oracle(l: &UnitLower, y: &[f64]) -> Vec<f64> {
    let mut z = y.to_vec();
    for i in (0..l.n).rev() {
        let (rows, vals) = l.column(i);
        for (&k, &v) in rows.iter().zip(vals) {
            z[i] -= v * z[k];
        }
    }
    z
}

fn rel_inf(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = b.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    diff / scale
}

#[test]
fn diagonal_matrix_factors_trivially() {
    let a = CsrMatrix::from_dense(2, 2, &[4.0, 0.0, 0.0, 9.0]);
    let f = ldlt_factor(&a, scalar_config(8)).unwrap();
    assert_eq!(f.lower.nnz(), 0);
    assert_eq!(f.diag, vec![4.0, 9.0]);
}

#[test]
fn two_by_two_hand_elimination() {
    let a = CsrMatrix::from_dense(2, 2, &[4.0, 2.0, 2.0, 3.0]);
    let f = ldlt_factor(&a, scalar_config(8)).unwrap();
    assert_eq!(f.plan.perm, vec![0, 1]);
    assert_eq!(f.diag, vec![4.0, 2.0]);
    assert_eq!(f.lower.column(0), (&[1usize][..], &[0.5][..]));
    // Back substitution by hand: Lᵀ z = y.
    let z = f.solve_upper(&[1.0, 2.0]).unwrap();
    assert_eq!(z, vec![0.0, 2.0]);
    let y = f.solve_lower(&[1.0, 2.0]).unwrap();
    assert_eq!(y, vec![1.0, 1.5]);
}

#[test]
fn indefinite_matrix_is_reported() {
    let a = CsrMatrix::from_dense(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    let err = ldlt_factor(&a, scalar_config(8)).unwrap_err();
    assert!(matches!(err, crate::Error::Indefinite { pivot: 1, .. }), "{err}");
}

#[test]
fn beam_reconstruction_and_fill() {
    let a = beam_matrix(3, 3, 6);
    let f = ldlt_factor(&a, FactorizerConfig { leaf_threshold: 8, ..Default::default() }).unwrap();
    let n = a.nrows();
    let perm = &f.plan.perm;
    let dense = dense_of(&a);
    let permuted = DMatrix::from_fn(n, n, |i, j| dense[(perm[i], perm[j])]);
    let mut l = DMatrix::<f64>::identity(n, n);
    for j in 0..n {
        let (rows, vals) = f.lower.column(j);
        for (&i, &v) in rows.iter().zip(vals) {
            l[(i, j)] = v;
        }
    }
    let rebuilt = &l * DMatrix::from_diagonal(&DVector::from_vec(f.diag.clone())) * l.transpose();
    let err = (rebuilt - &permuted).norm() / permuted.norm();
    assert!(err < 1e-10, "{err:e}");
    f.plan.verify_independence(&a).unwrap();
    let lower = f.lower.to_csr();
    assert_eq!(lower.nnz(), f.lower.nnz());
    assert!((0..n).all(|r| lower.row(r).0.iter().all(|&c| c < r)));
}

#[test]
fn dissection_reduces_fill_on_compact_beam() {
    let a = beam_matrix(8, 8, 8);
    let f = ldlt_factor(&a, FactorizerConfig::default()).unwrap();
    let natural: Vec<usize> = (0..a.nrows()).collect();
    let (l_nat, _) = ldlt_with_ordering(&a, &natural).unwrap();
    assert!(
        f.lower.nnz() <= l_nat.nnz(),
        "dissection {} vs natural {}",
        f.lower.nnz(),
        l_nat.nnz()
    );
}

#[test]
fn identity_factor_solves_are_identity() {
    let a = CsrMatrix::identity(10);
    let f = ldlt_factor(&a, scalar_config(3)).unwrap();
    let r: Vec<f64> = (0..10).map(|i| i as f64 - 4.5).collect();
    assert_eq!(f.solve_lower(&r).unwrap(), r);
    assert_eq!(f.solve_upper(&r).unwrap(), r);
}

#[test]
fn path_graph_bidiagonal_forward_substitution() {
    // Tridiagonal SPD matrix; in any ordering its factor is sparse enough
    // to check against substitution directly.
    let n = 9;
    let mut dense = vec![0.0; n * n];
    for i in 0..n {
        dense[i * n + i] = 4.0;
        if i + 1 < n {
            dense[i * n + i + 1] = -1.0;
            dense[(i + 1) * n + i] = -1.0;
        }
    }
    let a = CsrMatrix::from_dense(n, n, &dense);
    for threshold in [1, 2, 100] {
        let f = ldlt_factor(&a, scalar_config(threshold)).unwrap();
        let r: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        assert!(rel_inf(&f.solve_lower(&r).unwrap(), &forward_oracle(&f.lower, &r)) < 1e-14);
        assert!(rel_inf(&f.solve_upper(&r).unwrap(), &backward_oracle(&f.lower, &r)) < 1e-14);
    }
    // Natural order gives a bidiagonal factor: y_i = r_i − l_i y_{i−1}.
    let f = ldlt_factor(&a, scalar_config(100)).unwrap();
    let r = vec![1.0; n];
    let y = f.solve_lower(&r).unwrap();
    let mut expect = r.clone();
    for i in 1..n {
        let (rows, vals) = f.lower.column(i - 1);
        assert_eq!(rows, &[i]);
        expect[i] -= vals[0] * expect[i - 1];
    }
    assert_eq!(y, expect);
}

#[test]
fn parallel_solves_match_sequential_substitution() {
    let a = beam_matrix(4, 4, 12);
    let base = ldlt_factor(&a, FactorizerConfig { leaf_threshold: 16, tile: 4, ..Default::default() }).unwrap();
    assert!(base.schedule.num_levels() >= 3);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let r: Vec<f64> = (0..a.nrows()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y_seq = forward_oracle(&base.lower, &r);
    let z_seq = backward_oracle(&base.lower, &r);
    let mut first: Option<(Vec<f64>, Vec<f64>)> = None;
    for workers in [1, 2, 4, 8] {
        let f = base.with_workers(workers).unwrap();
        let y = f.solve_lower(&r).unwrap();
        let z = f.solve_upper(&r).unwrap();
        assert!(rel_inf(&y, &y_seq) <= 1e-12);
        assert!(rel_inf(&z, &z_seq) <= 1e-12);
        match &first {
            None => first = Some((y, z)),
            Some((y1, z1)) => {
                assert_eq!(&y, y1);
                assert_eq!(&z, z1);
            }
        }
    }
}

#[test]
fn apply_inverts_the_factored_matrix() {
    let a = beam_matrix(3, 4, 7);
    let f = ldlt_factor(&a, FactorizerConfig { leaf_threshold: 12, ..Default::default() }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x: Vec<f64> = (0..a.nrows()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let r = a.spmv(&x).unwrap();
    let z = apply(&f, &r).unwrap();
    assert!(rel_inf(&z, &x) < 1e-9);
    assert_eq!(apply(&f, &vec![0.0; a.nrows()]).unwrap(), vec![0.0; a.nrows()]);
    for _ in 0..5 {
        let v: Vec<f64> = (0..a.nrows()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = apply(&f, &v).unwrap();
        assert!(v.iter().zip(&w).map(|(p, q)| p * q).sum::<f64>() > 0.0);
    }
    assert!(apply(&f, &x[1..]).is_err());
}

#[test]
fn apply_matches_dense_solve_on_random_spd() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let n = 30;
    let m = DMatrix::<f64>::from_fn(n, n, |_, _| if rng.gen_bool(0.2) { rng.gen_range(-1.0..1.0) } else { 0.0 });
    let dense = &m * m.transpose() + DMatrix::identity(n, n);
    let a = CsrMatrix::from_dense(n, n, dense.transpose().as_slice());
    let f = ldlt_factor(&a, scalar_config(4)).unwrap();
    let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let exact = dense.cholesky().unwrap().solve(&DVector::from_vec(r.clone()));
    let z = apply(&f, &r).unwrap();
    assert!(rel_inf(&z, exact.as_slice()) < 1e-10);
}

#[test]
fn exact_factors_give_two_iteration_pcg() {
    let a = beam_matrix(3, 3, 8);
    let f = ldlt_factor(&a, FactorizerConfig::default()).unwrap();
    let b: Vec<f64> = (0..a.nrows()).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
    let cfg = SolverConfig { mode: SolverMode::PcgLdlt, ..SolverConfig::default() };
    let (_, rep) = pcg(&a, &b, &f, &cfg).unwrap();
    assert!(rep.converged && rep.iterations <= 2, "{rep:?}");
}

#[test]
fn factorizer_reuses_analysis_until_pattern_changes() {
    let a = beam_matrix(3, 3, 5);
    let mut fz = Factorizer::new(FactorizerConfig::default()).unwrap();
    fz.factor(&a, 0).unwrap();
    let mut b = a.clone();
    for v in b.values_mut() {
        *v *= 2.0;
    }
    let f = fz.factor(&b, 1).unwrap();
    assert_eq!(fz.analysis_count(), 1);
    assert_eq!(f.source_step, 1);
    fz.factor(&CsrMatrix::identity(a.nrows()), 2).unwrap();
    assert_eq!(fz.analysis_count(), 2);
}

#[test]
fn beam_plan_matches_mesh_graph() {
    let mesh = generate_beam(5, 5, 9, 0.1).unwrap();
    let g = vertex_adjacency(&mesh);
    let plan = nested_dissection(&g, 16);
    plan.verify_graph_independence(&g).unwrap();
    let a = beam_matrix(5, 5, 9);
    let f = ldlt_factor(&a, FactorizerConfig { leaf_threshold: 16, ..Default::default() }).unwrap();
    f.plan.verify_independence(&a).unwrap();
}

#[test]
fn async_lifecycle_cold_start_to_ready() {
    let a = beam_matrix(3, 3, 6);
    let mut pre = AsyncPreconditioner::new(AsyncConfig::default()).unwrap();
    assert_eq!(pre.status(), PrecondStatus::Empty);
    assert!(matches!(pre.apply(&vec![1.0; a.nrows()]), Err(crate::Error::Lifecycle(_))));
    pre.update(&a, 0).unwrap();
    assert!(matches!(pre.status(), PrecondStatus::Factorizing | PrecondStatus::Ready));
    pre.wait_ready().unwrap();
    assert_eq!(pre.status(), PrecondStatus::Ready);
    assert_eq!(pre.staleness(3), Some(3));
    let b = vec![1.0; a.nrows()];
    let f = pre.factors().unwrap().clone();
    let (_, rep) = pcg(&a, &b, f.as_ref(), &SolverConfig::default()).unwrap();
    assert!(rep.iterations <= 2);
}

#[test]
fn fixed_lag_swaps_are_deterministic() {
    let a = beam_matrix(3, 3, 5);
    let run = || {
        let cfg = AsyncConfig { swap_lag: Some(2), ..AsyncConfig::default() };
        let mut pre = AsyncPreconditioner::new(cfg).unwrap();
        let mut trace = Vec::new();
        for step in 0..9 {
            pre.update(&a, step).unwrap();
            trace.push((pre.status(), pre.staleness(step)));
        }
        trace
    };
    let t = run();
    assert_eq!(t, run());
    assert_eq!(t[0].0, PrecondStatus::Factorizing);
    assert_eq!(t[2], (PrecondStatus::Ready, Some(2)));
    assert_eq!(t[3], (PrecondStatus::Ready, Some(3)));
    assert_eq!(t[4], (PrecondStatus::Ready, Some(2)));
}

#[test]
fn every_k_policy_spaces_submissions() {
    let a = beam_matrix(3, 3, 4);
    let cfg = AsyncConfig {
        policy: RefactorPolicy::EveryK(3),
        swap_lag: Some(1),
        ..AsyncConfig::default()
    };
    let mut pre = AsyncPreconditioner::new(cfg).unwrap();
    let mut sources = Vec::new();
    for step in 0..10 {
        pre.update(&a, step).unwrap();
        sources.push(pre.factors().map(|f| f.source_step));
    }
    assert_eq!(
        sources,
        vec![None, Some(0), Some(0), Some(0), Some(3), Some(3), Some(3), Some(6), Some(6), Some(6)]
    );
    assert!(AsyncPreconditioner::new(AsyncConfig { policy: RefactorPolicy::EveryK(0), ..AsyncConfig::default() }).is_err());
}

#[test]
fn failed_factorization_disables_the_preconditioner() {
    let bad = CsrMatrix::from_dense(3, 3, &[1.0, 2.0, 0.0, 2.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    let mut pre = AsyncPreconditioner::new(AsyncConfig {
        factorizer: scalar_config(8),
        swap_lag: Some(1),
        ..AsyncConfig::default()
    })
    .unwrap();
    pre.update(&bad, 0).unwrap();
    pre.update(&bad, 1).unwrap();
    assert!(pre.is_disabled());
    assert_eq!(pre.status(), PrecondStatus::Empty);
    pre.update(&bad, 2).unwrap();
    assert!(!pre.in_flight());
}
