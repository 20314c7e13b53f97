//! Level-scheduled triangular solves with the factor `L` of a nested
//! dissection ordering.
//!
//! Blocks of one level are independent and run concurrently. The lower solve
//! is column-oriented: once a block is solved, its contributions to ancestor
//! rows are summed into a private update buffer that its parent merges
//! (extend-add), so no two tasks ever write the same memory. The upper solve
//! is row-oriented and walks the levels from the top separator down.

use rayon::prelude::*;

use super::dissection::DissectionPlan;
use super::ldlt::{SymbolicLdlt, UnitLower};
use crate::error::{Error, Result};

/// Fixed-size rayon pool; one worker means plain sequential execution.
#[derive(Debug)]
pub struct WorkerPool {
    workers: usize,
    pool: Option<rayon::ThreadPool>,
}

impl WorkerPool {
    pub fn new(workers: usize) -> Result<Self> {
        let workers = workers.max(1);
        let pool = if workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .thread_name(|i| format!("trisolve-{i}"))
                    .build()
                    .map_err(|e| Error::Setup(format!("ndprecond: worker pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(WorkerPool { workers, pool })
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Maps `f` over `items`, concurrently when the pool has several workers.
    /// Output order always follows `items`.
    fn map<T: Send>(&self, items: &[usize], f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
        match &self.pool {
            Some(pool) if items.len() > 1 => pool.install(|| items.par_iter().map(|&b| f(b)).collect()),
            _ => items.iter().map(|&b| f(b)).collect(),
        }
    }
}

#[derive(Debug, Clone)]
struct BlockSchedule {
    start: usize,
    end: usize,
    children: Vec<usize>,
    /// Ancestor rows (ascending) this subtree contributes to.
    update_rows: Vec<usize>,
    /// Destination of each child update entry: `< len` is a row of this
    /// block, otherwise `len + k` is slot `k` of this block's update buffer.
    child_dest: Vec<Vec<usize>>,
    /// Destination of each stored entry of this block's columns, same code.
    entry_dest: Vec<usize>,
    /// Per column: first entry index whose row lies past the column's tile.
    tile_split: Vec<usize>,
}

impl BlockSchedule {
    fn len(&self) -> usize {
        self.end - self.start
    }
}

/// Precomputed per-block data for both solves; depends only on the ordering
/// and the structure of `L`.
#[derive(Debug, Clone)]
pub struct SolveSchedule {
    n: usize,
    tile: usize,
    levels: Vec<Vec<usize>>,
    blocks: Vec<BlockSchedule>,
}

impl SolveSchedule {
    pub fn new(plan: &DissectionPlan, sym: &SymbolicLdlt, tile: usize) -> Result<Self> {
        if tile == 0 {
            return Err(Error::invalid("ndprecond", "tile width must be positive"));
        }
        let n = plan.len();
        if sym.dimension() != n {
            return Err(Error::DimensionMismatch {
                module: "ndprecond",
                expected: n,
                got: sym.dimension(),
            });
        }
        let col_ptr = sym.col_ptr();
        let row_ind = sym.row_ind();
        let mut blocks: Vec<BlockSchedule> = Vec::with_capacity(plan.blocks.len());
        let violation =
            |b: usize, row: usize| Error::Setup(format!("ndprecond: block {b} couples to non-ancestor row {row}"));
        for (id, pb) in plan.blocks.iter().enumerate() {
            let (start, end) = (pb.start, pb.end);
            let len = end - start;
            let mut rows: Vec<usize> = Vec::new();
            for &c in &pb.children {
                rows.extend(blocks[c].update_rows.iter().copied().filter(|&r| r >= end));
            }
            rows.extend(row_ind[col_ptr[start]..col_ptr[end]].iter().copied().filter(|&r| r >= end));
            rows.sort_unstable();
            rows.dedup();
            let dest_of = |r: usize| -> Option<usize> {
                if (start..end).contains(&r) {
                    Some(r - start)
                } else {
                    rows.binary_search(&r).ok().map(|k| len + k)
                }
            };
            let mut child_dest = Vec::with_capacity(pb.children.len());
            for &c in &pb.children {
                let d: Option<Vec<usize>> = blocks[c].update_rows.iter().map(|&r| dest_of(r)).collect();
                let d = d.ok_or_else(|| violation(id, start))?;
                child_dest.push(d);
            }
            let mut entry_dest = Vec::with_capacity(col_ptr[end] - col_ptr[start]);
            let mut tile_split = Vec::with_capacity(len);
            for j in start..end {
                let tile_end = (start + ((j - start) / tile + 1) * tile).min(end);
                let col = &row_ind[col_ptr[j]..col_ptr[j + 1]];
                tile_split.push(col_ptr[j] + col.partition_point(|&r| r < tile_end));
                for &r in col {
                    if r < start {
                        return Err(violation(id, r));
                    }
                    entry_dest.push(dest_of(r).expect("collected above"));
                }
            }
            blocks.push(BlockSchedule {
                start,
                end,
                children: pb.children.clone(),
                update_rows: rows,
                child_dest,
                entry_dest,
                tile_split,
            });
        }
        // Roots must not push updates anywhere.
        if let Some(r) = plan.roots().into_iter().find(|&r| !blocks[r].update_rows.is_empty()) {
            return Err(violation(r, blocks[r].update_rows[0]));
        }
        Ok(SolveSchedule {
            n,
            tile,
            levels: plan.levels(),
            blocks,
        })
    }

    pub fn tile(&self) -> usize {
        self.tile
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn dimension(&self) -> usize {
        self.n
    }
}

/// Solves `L y = r` in the permuted numbering.
pub fn solve_lower(l: &UnitLower, sched: &SolveSchedule, pool: &WorkerPool, r: &[f64]) -> Result<Vec<f64>> {
    check_len(sched, l, r)?;
    let mut y = vec![0.0; sched.n];
    let mut buffers: Vec<Vec<f64>> = vec![Vec::new(); sched.blocks.len()];
    for level in &sched.levels {
        let results = pool.map(level, |b| lower_block(l, sched, b, r, &buffers));
        for (&b, (seg, upd)) in level.iter().zip(results) {
            let bs = &sched.blocks[b];
            y[bs.start..bs.end].copy_from_slice(&seg);
            for &c in &bs.children {
                buffers[c] = Vec::new();
            }
            buffers[b] = upd;
        }
    }
    Ok(y)
}

fn lower_block(
    l: &UnitLower,
    sched: &SolveSchedule,
    b: usize,
    r: &[f64],
    buffers: &[Vec<f64>],
) -> (Vec<f64>, Vec<f64>) {
    let bs = &sched.blocks[b];
    let len = bs.len();
    let mut seg = r[bs.start..bs.end].to_vec();
    let mut upd = vec![0.0; bs.update_rows.len()];
    // Merge descendant contributions, child by child.
    for (c, dest) in bs.children.iter().zip(&bs.child_dest) {
        for (&d, &v) in dest.iter().zip(&buffers[*c]) {
            if d < len {
                seg[d] += v;
            } else {
                upd[d - len] += v;
            }
        }
    }
    let base = l.col_ptr[bs.start];
    let mut t0 = bs.start;
    while t0 < bs.end {
        let t1 = (t0 + sched.tile).min(bs.end);
        // Triangular part inside the tile.
        for j in t0..t1 {
            let yj = seg[j - bs.start];
            for p in l.col_ptr[j]..bs.tile_split[j - bs.start] {
                seg[bs.entry_dest[p - base]] -= l.values[p] * yj;
            }
        }
        // Entries below the tile: later tiles of this block and ancestors.
        for j in t0..t1 {
            let yj = seg[j - bs.start];
            for p in bs.tile_split[j - bs.start]..l.col_ptr[j + 1] {
                let d = bs.entry_dest[p - base];
                if d < len {
                    seg[d] -= l.values[p] * yj;
                } else {
                    upd[d - len] -= l.values[p] * yj;
                }
            }
        }
        t0 = t1;
    }
    (seg, upd)
}

/// Solves `Lᵀ z = y` in the permuted numbering.
pub fn solve_upper(l: &UnitLower, sched: &SolveSchedule, pool: &WorkerPool, y: &[f64]) -> Result<Vec<f64>> {
    check_len(sched, l, y)?;
    let mut z = vec![0.0; sched.n];
    for level in sched.levels.iter().rev() {
        let results = pool.map(level, |b| upper_block(l, sched, b, y, &z));
        for (&b, seg) in level.iter().zip(results) {
            let bs = &sched.blocks[b];
            z[bs.start..bs.end].copy_from_slice(&seg);
        }
    }
    Ok(z)
}

fn upper_block(l: &UnitLower, sched: &SolveSchedule, b: usize, y: &[f64], z: &[f64]) -> Vec<f64> {
    let bs = &sched.blocks[b];
    let mut seg = y[bs.start..bs.end].to_vec();
    let ntiles = bs.len().div_ceil(sched.tile);
    for t in (0..ntiles).rev() {
        let t0 = bs.start + t * sched.tile;
        let t1 = (t0 + sched.tile).min(bs.end);
        // Pre-accumulate everything already known: rows past the tile.
        for i in t0..t1 {
            let mut acc = 0.0;
            for p in bs.tile_split[i - bs.start]..l.col_ptr[i + 1] {
                let k = l.row_ind[p];
                let zk = if k < bs.end { seg[k - bs.start] } else { z[k] };
                acc += l.values[p] * zk;
            }
            seg[i - bs.start] -= acc;
        }
        for i in (t0..t1).rev() {
            let mut acc = 0.0;
            for p in l.col_ptr[i]..bs.tile_split[i - bs.start] {
                acc += l.values[p] * seg[l.row_ind[p] - bs.start];
            }
            seg[i - bs.start] -= acc;
        }
    }
    seg
}

fn check_len(sched: &SolveSchedule, l: &UnitLower, v: &[f64]) -> Result<()> {
    if l.n != sched.n || v.len() != sched.n {
        return Err(Error::DimensionMismatch {
            module: "ndprecond",
            expected: sched.n,
            got: if l.n != sched.n { l.n } else { v.len() },
        });
    }
    Ok(())
}
