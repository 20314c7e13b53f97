//! Pattern construction by double transpose and the triplet → value-slot
//! mapping used to compress later passes without sorting.

use rayon::prelude::*;

use super::csr::CsrMatrix;
use super::triplets::TripletStream;
use crate::error::{Error, Result};

/// Slot assigned to triplets that do not reach the assembled matrix.
pub const DISCARD: usize = usize::MAX;

/// Row-grouped storage whose rows are in order but whose column entries are
/// neither sorted nor merged. Each entry remembers the triplet it came from;
/// values are never copied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UncompressedStructure {
    pub row_ptr: Vec<usize>,
    pub col_ind: Vec<usize>,
    pub origin: Vec<usize>,
}

impl UncompressedStructure {
    /// Transpose of the raw triplet set: row `c` lists `(r, t)` for every
    /// triplet `t = (r, c)`, in ascending `t`. Rows flagged in `skip` are left
    /// empty.
    pub fn transpose_of_triplets(rows: &[usize], cols: &[usize], n: usize, skip: &[bool]) -> Self {
        let mut row_ptr = vec![0usize; n + 1];
        for &c in cols {
            if !skip[c] {
                row_ptr[c + 1] += 1;
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut next = row_ptr.clone();
        let len = row_ptr[n];
        let mut col_ind = vec![0; len];
        let mut origin = vec![0; len];
        for (t, (&r, &c)) in rows.iter().zip(cols).enumerate() {
            if skip[c] {
                continue;
            }
            let dst = next[c];
            next[c] += 1;
            col_ind[dst] = r;
            origin[dst] = t;
        }
        UncompressedStructure {
            row_ptr,
            col_ind,
            origin,
        }
    }

    /// Counting-sort transpose. Entries of each output row come out ordered by
    /// source row, and stably by source position within a source row.
    pub fn transpose(&self, n: usize, skip: &[bool]) -> Self {
        let mut row_ptr = vec![0usize; n + 1];
        for &c in &self.col_ind {
            if !skip[c] {
                row_ptr[c + 1] += 1;
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut next = row_ptr.clone();
        let len = row_ptr[n];
        let mut col_ind = vec![0; len];
        let mut origin = vec![0; len];
        for r in 0..self.row_ptr.len() - 1 {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_ind[k];
                if skip[c] {
                    continue;
                }
                let dst = next[c];
                next[c] += 1;
                col_ind[dst] = r;
                origin[dst] = self.origin[k];
            }
        }
        UncompressedStructure {
            row_ptr,
            col_ind,
            origin,
        }
    }
}

/// Map from triplet position to CSR value slot, valid for one fill order and
/// one set of fixed DOFs.
#[derive(Debug, Clone)]
pub struct CompressionMapping {
    n: usize,
    slot_of_triplet: Vec<usize>,
    // Inverse map: triplets of slot s are slot_triplets[slot_ptr[s]..slot_ptr[s + 1]],
    // ascending. Empty ranges are fixed-DOF diagonals.
    slot_ptr: Vec<usize>,
    slot_triplets: Vec<usize>,
    row_ptr: Vec<usize>,
    col_ind: Vec<usize>,
    fixed_dofs: Vec<usize>,
    fixed_diag_slots: Vec<usize>,
    structure_version: u64,
}

impl CompressionMapping {
    pub fn slot_of_triplet(&self) -> &[usize] {
        &self.slot_of_triplet
    }

    pub fn fixed_dofs(&self) -> &[usize] {
        &self.fixed_dofs
    }

    pub fn num_triplets(&self) -> usize {
        self.slot_of_triplet.len()
    }

    pub fn nnz(&self) -> usize {
        self.col_ind.len()
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn pattern(&self) -> (&[usize], &[usize]) {
        (&self.row_ptr, &self.col_ind)
    }

    /// Structure version of the stream this mapping was built from.
    pub fn structure_version(&self) -> u64 {
        self.structure_version
    }

    /// Zero-valued matrix with this pattern (fixed diagonals set to one).
    pub fn empty_matrix(&self) -> CsrMatrix {
        let mut values = vec![0.0; self.col_ind.len()];
        for &s in &self.fixed_diag_slots {
            values[s] = 1.0;
        }
        CsrMatrix::from_parts_unchecked(self.n, self.n, self.row_ptr.clone(), self.col_ind.clone(), values)
    }

    fn check(&self, stream: &TripletStream, coeffs: Option<&[f64]>, out: &CsrMatrix) -> Result<()> {
        if stream.in_pass() {
            return Err(Error::StaleMapping("collection pass still open".into()));
        }
        if stream.len() != self.num_triplets() {
            return Err(Error::StaleMapping(format!(
                "stream holds {} triplets, mapping expects {}",
                stream.len(),
                self.num_triplets()
            )));
        }
        if stream.structure_version() != self.structure_version {
            return Err(Error::StaleMapping("fill order changed since the mapping was built".into()));
        }
        if let Some(c) = coeffs {
            if c.len() != stream.len() {
                return Err(Error::DimensionMismatch {
                    module: "assembly",
                    expected: stream.len(),
                    got: c.len(),
                });
            }
        }
        if out.nnz() != self.nnz() || out.nrows() != self.n {
            return Err(Error::StaleMapping("output matrix has a different pattern".into()));
        }
        Ok(())
    }
}

/// Builds the CSR pattern of the summed triplets and the mapping from each
/// triplet to its value slot.
///
/// Rows and columns of `fixed_dofs` keep a single diagonal entry (value 1);
/// every triplet touching them maps to [`DISCARD`].
pub fn build_pattern(
    stream: &TripletStream,
    n: usize,
    fixed_dofs: &[usize],
) -> Result<(CsrMatrix, CompressionMapping)> {
    let rows = stream.rows();
    let cols = stream.cols();
    for (t, (&r, &c)) in rows.iter().zip(cols).enumerate() {
        if r >= n || c >= n {
            return Err(Error::IndexOutOfRange {
                position: t,
                row: r,
                col: c,
                n,
            });
        }
    }
    let mut fixed = vec![false; n];
    for &d in fixed_dofs {
        if d >= n {
            return Err(Error::invalid("assembly", format!("fixed DOF {d} outside a system of size {n}")));
        }
        fixed[d] = true;
    }
    let mut fixed_sorted = fixed_dofs.to_vec();
    fixed_sorted.sort_unstable();
    fixed_sorted.dedup();

    // Xᵀ drops fixed columns, (Xᵀ)ᵀ drops fixed rows.
    let xt = UncompressedStructure::transpose_of_triplets(rows, cols, n, &fixed);
    let x = xt.transpose(n, &fixed);

    let mut slot_of_triplet = vec![DISCARD; rows.len()];
    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0);
    let mut col_ind = Vec::with_capacity(x.col_ind.len() / 2 + fixed_sorted.len());
    let mut slot_ptr = Vec::with_capacity(col_ind.capacity() + 1);
    slot_ptr.push(0);
    let mut slot_triplets = Vec::with_capacity(x.origin.len());
    let mut fixed_diag_slots = Vec::with_capacity(fixed_sorted.len());
    for r in 0..n {
        if fixed[r] {
            fixed_diag_slots.push(col_ind.len());
            col_ind.push(r);
            slot_ptr.push(slot_triplets.len());
        } else {
            let row_start = col_ind.len();
            for k in x.row_ptr[r]..x.row_ptr[r + 1] {
                let c = x.col_ind[k];
                let t = x.origin[k];
                if col_ind.len() == row_start || *col_ind.last().unwrap() != c {
                    if col_ind.len() > row_start {
                        slot_ptr.push(slot_triplets.len());
                    }
                    col_ind.push(c);
                }
                slot_of_triplet[t] = col_ind.len() - 1;
                slot_triplets.push(t);
            }
            if col_ind.len() > row_start {
                slot_ptr.push(slot_triplets.len());
            }
        }
        row_ptr.push(col_ind.len());
    }
    debug_assert_eq!(slot_ptr.len(), col_ind.len() + 1);

    let mapping = CompressionMapping {
        n,
        slot_of_triplet,
        slot_ptr,
        slot_triplets,
        row_ptr,
        col_ind,
        fixed_dofs: fixed_sorted,
        fixed_diag_slots,
        structure_version: stream.structure_version(),
    };
    let pattern = mapping.empty_matrix();
    Ok((pattern, mapping))
}

/// Sums `coeff[t] * value[t]` into the mapped slots, in ascending triplet
/// order.
pub fn compress(
    stream: &TripletStream,
    mapping: &CompressionMapping,
    coeffs: Option<&[f64]>,
) -> Result<CsrMatrix> {
    let mut out = mapping.empty_matrix();
    compress_into(stream, mapping, coeffs, &mut out)?;
    Ok(out)
}

/// Same as [`compress`] but overwrites the values of an existing matrix that
/// carries the mapping's pattern.
pub fn compress_into(
    stream: &TripletStream,
    mapping: &CompressionMapping,
    coeffs: Option<&[f64]>,
    out: &mut CsrMatrix,
) -> Result<()> {
    mapping.check(stream, coeffs, out)?;
    let values = out.values_mut();
    values.fill(0.0);
    let vals = stream.values();
    match coeffs {
        Some(c) => {
            for (t, &s) in mapping.slot_of_triplet.iter().enumerate() {
                if s != DISCARD {
                    values[s] += c[t] * vals[t];
                }
            }
        }
        None => {
            for (t, &s) in mapping.slot_of_triplet.iter().enumerate() {
                if s != DISCARD {
                    values[s] += vals[t];
                }
            }
        }
    }
    for &s in &mapping.fixed_diag_slots {
        values[s] = 1.0;
    }
    Ok(())
}

/// Parallel compression over `workers` contiguous slot ranges. Each slot is
/// owned by one worker and summed in ascending triplet order, so the result
/// is bit-identical to [`compress`].
pub fn compress_parallel(
    stream: &TripletStream,
    mapping: &CompressionMapping,
    coeffs: Option<&[f64]>,
    workers: usize,
) -> Result<CsrMatrix> {
    let mut out = mapping.empty_matrix();
    compress_parallel_into(stream, mapping, coeffs, workers, &mut out)?;
    Ok(out)
}

pub fn compress_parallel_into(
    stream: &TripletStream,
    mapping: &CompressionMapping,
    coeffs: Option<&[f64]>,
    workers: usize,
    out: &mut CsrMatrix,
) -> Result<()> {
    mapping.check(stream, coeffs, out)?;
    let vals = stream.values();
    let nnz = mapping.nnz();
    let chunk = nnz.div_ceil(workers.max(1)).max(1);
    out.values_mut()
        .par_chunks_mut(chunk)
        .enumerate()
        .for_each(|(w, part)| {
            let base = w * chunk;
            for (k, slot_value) in part.iter_mut().enumerate() {
                let s = base + k;
                let members = &mapping.slot_triplets[mapping.slot_ptr[s]..mapping.slot_ptr[s + 1]];
                if members.is_empty() {
                    *slot_value = 1.0;
                    continue;
                }
                let mut acc = 0.0;
                match coeffs {
                    Some(c) => {
                        for &t in members {
                            acc += c[t] * vals[t];
                        }
                    }
                    None => {
                        for &t in members {
                            acc += vals[t];
                        }
                    }
                }
                *slot_value = acc;
            }
        });
    Ok(())
}
