use std::io::{self, BufRead, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Compressed sparse row matrix with sorted, unique column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_ind: Vec<usize>,
    values: Vec<f64>,
}

// Row count above which spmv fans out over the rayon pool.
const PAR_SPMV_ROWS: usize = 2048;

impl CsrMatrix {
    /// Wraps raw CSR arrays after checking the structural invariants.
    pub fn new(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_ind: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let bad = |msg: String| Err(Error::invalid("assembly", msg));
        if row_ptr.len() != nrows + 1 || row_ptr[0] != 0 {
            return bad(format!("row_ptr must have {} entries starting at 0", nrows + 1));
        }
        if row_ptr[nrows] != col_ind.len() || col_ind.len() != values.len() {
            return bad("row_ptr[nrows], col_ind and values lengths disagree".into());
        }
        for r in 0..nrows {
            if row_ptr[r] > row_ptr[r + 1] {
                return bad(format!("row_ptr decreases at row {r}"));
            }
            let cols = &col_ind[row_ptr[r]..row_ptr[r + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("columns of row {r} are not strictly increasing"));
            }
            if cols.last().is_some_and(|&c| c >= ncols) {
                return bad(format!("column index out of range in row {r}"));
            }
        }
        Ok(CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_ind,
            values,
        })
    }

    pub(crate) fn from_parts_unchecked(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_ind: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(row_ptr.len(), nrows + 1);
        debug_assert_eq!(col_ind.len(), values.len());
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_ind,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_ind: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds a matrix from a dense row-major array, dropping exact zeros.
    pub fn from_dense(nrows: usize, ncols: usize, dense: &[f64]) -> Self {
        assert_eq!(dense.len(), nrows * ncols);
        let mut row_ptr = vec![0];
        let mut col_ind = Vec::new();
        let mut values = Vec::new();
        for r in 0..nrows {
            for c in 0..ncols {
                let v = dense[r * ncols + c];
                if v != 0.0 {
                    col_ind.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_ind.len());
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_ind,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_ind(&self) -> &[usize] {
        &self.col_ind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }


    /// `(columns, values)` of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_ind[span.clone()], &self.values[span])
    }

    /// Value at `(r, c)`, zero when the entry is not stored.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map(|k| vals[k]).unwrap_or(0.0)
    }

    pub fn same_pattern(&self, other: &CsrMatrix) -> bool {
        self.nrows == other.nrows
            && self.ncols == other.ncols
            && self.row_ptr == other.row_ptr
            && self.col_ind == other.col_ind
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|r| self.get(r, r)).collect()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.nrows * self.ncols];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                d[r * self.ncols + c] = v;
            }
        }
        d
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_ind {
            counts[c + 1] += 1;
        }
        for c in 0..self.ncols {
            counts[c + 1] += counts[c];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_ind = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let dst = next[c];
                next[c] += 1;
                col_ind[dst] = r;
                values[dst] = v;
            }
        }
        CsrMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            row_ptr,
            col_ind,
            values,
        }
    }

    /// Infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|r| self.row(r).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `max |A - Aᵀ|` over stored entries of either matrix.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        let mut worst: f64 = 0.0;
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - t.get(r, c)).abs());
            }
            let (cols, vals) = t.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(r, c)).abs());
            }
        }
        worst
    }

    /// `y = A x`. Each row is accumulated left to right, so the result does
    /// not depend on how rows are distributed over threads.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.nrows];
        self.spmv_into(x, &mut y)?;
        Ok(y)
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.ncols {
            return Err(Error::DimensionMismatch {
                module: "krylov",
                expected: self.ncols,
                got: x.len(),
            });
        }
        if y.len() != self.nrows {
            return Err(Error::DimensionMismatch {
                module: "krylov",
                expected: self.nrows,
                got: y.len(),
            });
        }
        let row_dot = |r: usize| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).fold(0.0, |acc, (&c, &v)| acc + v * x[c])
        };
        if self.nrows >= PAR_SPMV_ROWS {
            y.par_iter_mut().enumerate().for_each(|(r, yr)| *yr = row_dot(r));
        } else {
            for (r, yr) in y.iter_mut().enumerate() {
                *yr = row_dot(r);
            }
        }
        Ok(())
    }

    /// MatrixMarket coordinate dump (1-based indices, shortest round-trip
    /// floats).
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                writeln!(w, "{} {} {:?}", r + 1, c + 1, v)?;
            }
        }
        Ok(())
    }

    /// Reads a general real coordinate MatrixMarket file. Duplicate entries
    /// are summed.
    pub fn read_matrix_market<R: BufRead>(r: R) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Parse {
            path: "<matrix market>".into(),
            line,
            msg: msg.to_string(),
        };
        let mut lines = r.lines().enumerate();
        let mut dims: Option<(usize, usize, usize)> = None;
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (i, line) in lines.by_ref() {
            let line = line.map_err(|e| Error::io("<matrix market>", e))?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('%') {
                continue;
            }
            let f: Vec<&str> = t.split_whitespace().collect();
            if dims.is_none() {
                if f.len() != 3 {
                    return Err(bad(i + 1, "size line must have 3 fields"));
                }
                let p = |s: &str| s.parse::<usize>().map_err(|_| bad(i + 1, "bad size field"));
                dims = Some((p(f[0])?, p(f[1])?, p(f[2])?));
                continue;
            }
            if f.len() != 3 {
                return Err(bad(i + 1, "entry line must have 3 fields"));
            }
            let r: usize = f[0].parse().map_err(|_| bad(i + 1, "bad row"))?;
            let c: usize = f[1].parse().map_err(|_| bad(i + 1, "bad column"))?;
            let v: f64 = f[2].parse().map_err(|_| bad(i + 1, "bad value"))?;
            if r == 0 || c == 0 {
                return Err(bad(i + 1, "indices are 1-based"));
            }
            entries.push((r - 1, c - 1, v));
        }
        let (nrows, ncols, nnz) = dims.ok_or_else(|| bad(0, "missing size line"))?;
        if entries.len() != nnz {
            return Err(bad(0, "entry count does not match header"));
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_ind: Vec<usize> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if r >= nrows || c >= ncols {
                return Err(bad(0, "entry outside matrix"));
            }
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_ind.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix::new(nrows, ncols, row_ptr, col_ind, values)
    }
}
