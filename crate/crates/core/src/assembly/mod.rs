//! Fast matrix assembly.
//!
//! Models push their element contributions into a [`TripletStream`]. The
//! first pass (or any pass whose fill order changed) builds the CSR pattern
//! through two counting-sort transposes and records where each triplet lands.
//! Every later pass with the same fill order skips straight to compression.

mod csr;
mod pattern;
mod triplets;

pub use csr::CsrMatrix;
pub use pattern::{
    build_pattern, compress, compress_into, compress_parallel, compress_parallel_into, CompressionMapping,
    UncompressedStructure, DISCARD,
};
pub use triplets::TripletStream;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssemblyMode {
    /// Reuse the compression mapping while the fill order is unchanged.
    #[default]
    Fast,
    /// Rebuild the pattern on every pass.
    Full,
}

/// Owns the triplet stream, the cached mapping and the assembled matrix.
#[derive(Debug)]
pub struct Assembler {
    n: usize,
    fixed_dofs: Vec<usize>,
    stream: TripletStream,
    mapping: Option<CompressionMapping>,
    matrix: Option<CsrMatrix>,
    mode: AssemblyMode,
    workers: usize,
    rebuilds: usize,
    last_rebuilt: bool,
}

impl Assembler {
    pub fn new(n: usize, fixed_dofs: Vec<usize>) -> Self {
        let mut fixed_dofs = fixed_dofs;
        fixed_dofs.sort_unstable();
        fixed_dofs.dedup();
        Assembler {
            n,
            fixed_dofs,
            stream: TripletStream::new(),
            mapping: None,
            matrix: None,
            mode: AssemblyMode::Fast,
            workers: 1,
            rebuilds: 0,
            last_rebuilt: false,
        }
    }

    pub fn with_mode(mut self, mode: AssemblyMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn set_mode(&mut self, mode: AssemblyMode) {
        self.mode = mode;
    }

    pub fn mode(&self) -> AssemblyMode {
        self.mode
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn fixed_dofs(&self) -> &[usize] {
        &self.fixed_dofs
    }

    /// Changing the fixed set forces a rebuild on the next pass.
    pub fn set_fixed_dofs(&mut self, mut fixed: Vec<usize>) {
        fixed.sort_unstable();
        fixed.dedup();
        self.fixed_dofs = fixed;
    }

    /// Opens a collection pass and hands out the sink models write into.
    pub fn begin(&mut self) -> &mut TripletStream {
        self.stream.begin_pass();
        &mut self.stream
    }

    pub fn stream(&self) -> &TripletStream {
        &self.stream
    }

    /// Closes the pass and compresses it, rebuilding the pattern only when the
    /// fill order, its length, or the fixed set changed (or in full mode).
    pub fn finish(&mut self, coeffs: Option<&[f64]>) -> Result<&CsrMatrix> {
        self.stream.end_pass();
        let stale = match &self.mapping {
            None => true,
            Some(m) => {
                m.structure_version() != self.stream.structure_version()
                    || m.num_triplets() != self.stream.len()
                    || m.fixed_dofs() != self.fixed_dofs.as_slice()
            }
        };
        self.last_rebuilt = stale || self.mode == AssemblyMode::Full;
        if self.last_rebuilt {
            let (pattern, mapping) = build_pattern(&self.stream, self.n, &self.fixed_dofs)?;
            self.mapping = Some(mapping);
            self.matrix = Some(pattern);
            self.rebuilds += 1;
        }
        let mapping = self.mapping.as_ref().expect("mapping built above");
        let matrix = self.matrix.as_mut().expect("matrix built above");
        if self.workers > 1 {
            compress_parallel_into(&self.stream, mapping, coeffs, self.workers, matrix)?;
        } else {
            compress_into(&self.stream, mapping, coeffs, matrix)?;
        }
        Ok(matrix)
    }

    /// Number of pattern builds so far.
    pub fn rebuild_count(&self) -> usize {
        self.rebuilds
    }

    pub fn last_pass_rebuilt(&self) -> bool {
        self.last_rebuilt
    }

    pub fn matrix(&self) -> Option<&CsrMatrix> {
        self.matrix.as_ref()
    }

    pub fn mapping(&self) -> Option<&CompressionMapping> {
        self.mapping.as_ref()
    }
}
