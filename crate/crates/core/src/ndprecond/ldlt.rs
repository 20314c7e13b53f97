//! Up-looking sparse LDLᵀ on a symmetrically permuted matrix.

use std::sync::Arc;

use super::dissection::{graph_from_pattern, nested_dissection, DissectionPlan};
use super::trisolve::{SolveSchedule, WorkerPool};
use crate::assembly::CsrMatrix;
use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

/// Unit lower-triangular factor stored by columns (strict lower part only).
/// Column `j` holds rows `row_ind[col_ptr[j]..col_ptr[j + 1]]`, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitLower {
    pub n: usize,
    pub col_ptr: Vec<usize>,
    pub row_ind: Vec<usize>,
    pub values: Vec<f64>,
}

impl UnitLower {
    pub fn nnz(&self) -> usize {
        self.row_ind.len()
    }

    pub fn column(&self, j: usize) -> (&[usize], &[f64]) {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        (&self.row_ind[r.clone()], &self.values[r])
    }

    /// Strict lower part as a CSR matrix.
    pub fn to_csr(&self) -> CsrMatrix {
        // Columns of L are the rows of Lᵀ.
        let lt = CsrMatrix::from_parts_unchecked(
            self.n,
            self.n,
            self.col_ptr.clone(),
            self.row_ind.clone(),
            self.values.clone(),
        );
        lt.transpose()
    }
}

/// Elimination tree, column counts and the row structure of `L`, plus the
/// gather map from the original matrix into the permuted lower triangle.
#[derive(Debug, Clone)]
pub struct SymbolicLdlt {
    n: usize,
    parent: Vec<usize>,
    col_ptr: Vec<usize>,
    row_ind: Vec<usize>,
    // Permuted lower triangle: for new row k, columns ≤ k and the value
    // index in the source matrix.
    a_ptr: Vec<usize>,
    a_col: Vec<usize>,
    a_src: Vec<usize>,
    // Source pattern this analysis belongs to.
    key_row_ptr: Vec<usize>,
    key_col_ind: Vec<usize>,
}

impl SymbolicLdlt {
    pub fn analyze(a: &CsrMatrix, iperm: &[usize]) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || iperm.len() != n {
            return Err(Error::DimensionMismatch {
                module: "ndprecond",
                expected: n,
                got: if a.ncols() != n { a.ncols() } else { iperm.len() },
            });
        }
        let (a_ptr, a_col, a_src) = permuted_lower(a, iperm);

        let mut parent = vec![NONE; n];
        let mut flag = vec![NONE; n];
        let mut counts = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for &c in &a_col[a_ptr[k]..a_ptr[k + 1]] {
                let mut i = c;
                while flag[i] != k {
                    if parent[i] == NONE {
                        parent[i] = k;
                    }
                    counts[i] += 1;
                    flag[i] = k;
                    i = parent[i];
                }
            }
        }
        let mut col_ptr = vec![0usize; n + 1];
        for j in 0..n {
            col_ptr[j + 1] = col_ptr[j] + counts[j];
        }

        // Row structure, in the same order the numeric phase appends it.
        let mut row_ind = vec![0usize; col_ptr[n]];
        let mut fill = col_ptr[..n].to_vec();
        flag.fill(NONE);
        for k in 0..n {
            flag[k] = k;
            for &c in &a_col[a_ptr[k]..a_ptr[k + 1]] {
                let mut i = c;
                while flag[i] != k {
                    row_ind[fill[i]] = k;
                    fill[i] += 1;
                    flag[i] = k;
                    i = parent[i];
                }
            }
        }
        Ok(SymbolicLdlt {
            n,
            parent,
            col_ptr,
            row_ind,
            a_ptr,
            a_col,
            a_src,
            key_row_ptr: a.row_ptr().to_vec(),
            key_col_ind: a.col_ind().to_vec(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn nnz_l(&self) -> usize {
        self.row_ind.len()
    }

    pub fn etree(&self) -> &[usize] {
        &self.parent
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_ind(&self) -> &[usize] {
        &self.row_ind
    }

    pub fn matches(&self, a: &CsrMatrix) -> bool {
        a.row_ptr() == self.key_row_ptr.as_slice() && a.col_ind() == self.key_col_ind.as_slice()
    }

    /// Numeric factorization of the source-pattern matrix `a`.
    pub fn factor(&self, a: &CsrMatrix) -> Result<(UnitLower, Vec<f64>)> {
        if !self.matches(a) {
            return Err(Error::StaleMapping("ndprecond: matrix pattern differs from the analysed one".into()));
        }
        let n = self.n;
        let ax = a.values();
        let mut values = vec![0.0; self.row_ind.len()];
        let mut d = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut flag = vec![NONE; n];
        let mut pattern = vec![0usize; n];
        let mut filled = vec![0usize; n];
        for k in 0..n {
            let mut top = n;
            flag[k] = k;
            for p in self.a_ptr[k]..self.a_ptr[k + 1] {
                let mut i = self.a_col[p];
                y[i] += ax[self.a_src[p]];
                let mut len = 0;
                while flag[i] != k {
                    pattern[len] = i;
                    len += 1;
                    flag[i] = k;
                    i = self.parent[i];
                }
                while len > 0 {
                    top -= 1;
                    len -= 1;
                    pattern[top] = pattern[len];
                }
            }
            let mut dk = y[k];
            y[k] = 0.0;
            for &i in &pattern[top..n] {
                let yi = y[i];
                y[i] = 0.0;
                let p0 = self.col_ptr[i];
                let p2 = p0 + filled[i];
                for p in p0..p2 {
                    y[self.row_ind[p]] -= values[p] * yi;
                }
                let lki = yi / d[i];
                dk -= lki * yi;
                debug_assert_eq!(self.row_ind[p2], k);
                values[p2] = lki;
                filled[i] += 1;
            }
            if !(dk > 0.0) {
                return Err(Error::Indefinite { pivot: k, value: dk });
            }
            d[k] = dk;
        }
        Ok((
            UnitLower {
                n,
                col_ptr: self.col_ptr.clone(),
                row_ind: self.row_ind.clone(),
                values,
            },
            d,
        ))
    }
}

fn permuted_lower(a: &CsrMatrix, iperm: &[usize]) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let n = a.nrows();
    let mut counts = vec![0usize; n + 1];
    for r in 0..n {
        let kr = iperm[r];
        for &c in a.row(r).0 {
            if iperm[c] <= kr {
                counts[kr + 1] += 1;
            }
        }
    }
    for k in 0..n {
        counts[k + 1] += counts[k];
    }
    let ptr = counts.clone();
    let mut next = counts;
    let mut col = vec![0usize; ptr[n]];
    let mut src = vec![0usize; ptr[n]];
    let row_ptr = a.row_ptr();
    for r in 0..n {
        let kr = iperm[r];
        for idx in row_ptr[r]..row_ptr[r + 1] {
            let kc = iperm[a.col_ind()[idx]];
            if kc <= kr {
                col[next[kr]] = kc;
                src[next[kr]] = idx;
                next[kr] += 1;
            }
        }
    }
    for k in 0..n {
        let r = ptr[k]..ptr[k + 1];
        let mut pairs: Vec<(usize, usize)> = col[r.clone()].iter().copied().zip(src[r.clone()].iter().copied()).collect();
        pairs.sort_unstable();
        for (o, (c, s)) in pairs.into_iter().enumerate() {
            col[ptr[k] + o] = c;
            src[ptr[k] + o] = s;
        }
    }
    (ptr, col, src)
}

/// Factors of a permuted matrix together with the ordering and the solve
/// schedule derived from it.
#[derive(Debug, Clone)]
pub struct LdlFactors {
    pub lower: UnitLower,
    pub diag: Vec<f64>,
    pub plan: Arc<DissectionPlan>,
    pub schedule: Arc<SolveSchedule>,
    /// Simulation step whose matrix was factored.
    pub source_step: usize,
    pub(crate) pool: Arc<WorkerPool>,
}

impl LdlFactors {
    pub fn dimension(&self) -> usize {
        self.diag.len()
    }

    pub fn workers(&self) -> usize {
        self.pool.workers()
    }

    /// Same factors, solved with a different number of workers.
    pub fn with_workers(&self, workers: usize) -> Result<Self> {
        Ok(LdlFactors {
            pool: Arc::new(WorkerPool::new(workers)?),
            ..self.clone()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FactorizerConfig {
    pub leaf_threshold: usize,
    pub tile: usize,
    pub workers: usize,
    /// Unknowns grouped per graph vertex when ordering.
    pub dofs_per_vertex: usize,
}

impl Default for FactorizerConfig {
    fn default() -> Self {
        FactorizerConfig {
            leaf_threshold: super::DEFAULT_LEAF_THRESHOLD,
            tile: super::DEFAULT_TILE,
            workers: 1,
            dofs_per_vertex: 3,
        }
    }
}

/// Produces factors, reusing the ordering, symbolic analysis and solve
/// schedule while the matrix pattern stays the same.
#[derive(Debug)]
pub struct Factorizer {
    config: FactorizerConfig,
    pool: Arc<WorkerPool>,
    cached: Option<(Arc<DissectionPlan>, Arc<SymbolicLdlt>, Arc<SolveSchedule>)>,
    analyses: usize,
}

impl Factorizer {
    pub fn new(config: FactorizerConfig) -> Result<Self> {
        if config.tile == 0 {
            return Err(Error::invalid("ndprecond", "tile width must be positive"));
        }
        Ok(Factorizer {
            pool: Arc::new(WorkerPool::new(config.workers)?),
            config,
            cached: None,
            analyses: 0,
        })
    }

    pub fn config(&self) -> &FactorizerConfig {
        &self.config
    }

    /// Number of times the ordering and symbolic analysis were computed.
    pub fn analysis_count(&self) -> usize {
        self.analyses
    }

    pub fn plan(&self) -> Option<&Arc<DissectionPlan>> {
        self.cached.as_ref().map(|c| &c.0)
    }

    pub fn symbolic(&self) -> Option<&Arc<SymbolicLdlt>> {
        self.cached.as_ref().map(|c| &c.1)
    }

    fn analyze(&mut self, a: &CsrMatrix) -> Result<()> {
        if let Some((_, sym, _)) = &self.cached {
            if sym.matches(a) {
                return Ok(());
            }
        }
        let dofs = if a.nrows() % self.config.dofs_per_vertex == 0 {
            self.config.dofs_per_vertex
        } else {
            1
        };
        let graph = graph_from_pattern(a, dofs)?;
        let plan = nested_dissection(&graph, self.config.leaf_threshold).expand(dofs);
        let sym = SymbolicLdlt::analyze(a, &plan.iperm)?;
        let schedule = SolveSchedule::new(&plan, &sym, self.config.tile)?;
        self.cached = Some((Arc::new(plan), Arc::new(sym), Arc::new(schedule)));
        self.analyses += 1;
        Ok(())
    }

    pub fn factor(&mut self, a: &CsrMatrix, source_step: usize) -> Result<LdlFactors> {
        self.analyze(a)?;
        let (plan, sym, schedule) = self.cached.as_ref().expect("analysed above");
        let (lower, diag) = sym.factor(a)?;
        Ok(LdlFactors {
            lower,
            diag,
            plan: Arc::clone(plan),
            schedule: Arc::clone(schedule),
            source_step,
            pool: Arc::clone(&self.pool),
        })
    }
}

/// One-shot factorization with a fresh ordering.
pub fn ldlt_factor(a: &CsrMatrix, config: FactorizerConfig) -> Result<LdlFactors> {
    Factorizer::new(config)?.factor(a, 0)
}

/// Factorization under an explicit ordering (`iperm[old] = new`), for
/// comparing orderings. Returns the factor and diagonal only.
pub fn ldlt_with_ordering(a: &CsrMatrix, iperm: &[usize]) -> Result<(UnitLower, Vec<f64>)> {
    SymbolicLdlt::analyze(a, iperm)?.factor(a)
}
