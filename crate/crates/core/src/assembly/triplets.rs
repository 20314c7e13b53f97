/// Append-only log of `(row, col, value)` contributions, reused from one
/// collection pass to the next.
///
/// A pass is bracketed by [`begin_pass`](Self::begin_pass) and
/// [`end_pass`](Self::end_pass). While the `(row, col)` sequence of a pass
/// repeats the previous one, [`add`](Self::add) only overwrites values and
/// `keep_struct` stays `true`; the first mismatch clears it for the rest of
/// the pass.
#[derive(Debug, Clone, Default)]
pub struct TripletStream {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    cursor: usize,
    keep_struct: bool,
    completed_len: Option<usize>,
    structure_version: u64,
    in_pass: bool,
}

impl TripletStream {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn begin_pass(&mut self) {
        self.cursor = 0;
        self.keep_struct = self.completed_len.is_some();
        self.in_pass = true;
    }

    #[inline]
    pub fn add(&mut self, row: usize, col: usize, val: f64) {
        let id = self.cursor;
        if self.keep_struct && id < self.vals.len() && self.rows[id] == row && self.cols[id] == col {
            self.vals[id] = val;
        } else {
            self.keep_struct = false;
            if id < self.vals.len() {
                self.rows[id] = row;
                self.cols[id] = col;
                self.vals[id] = val;
            } else {
                self.rows.push(row);
                self.cols.push(col);
                self.vals.push(val);
            }
        }
        self.cursor += 1;
    }

    /// Closes the pass. A pass whose length differs from the previous one
    /// invalidates the structure even if every written entry matched.
    pub fn end_pass(&mut self) {
        if self.completed_len != Some(self.cursor) {
            self.keep_struct = false;
        }
        self.rows.truncate(self.cursor);
        self.cols.truncate(self.cursor);
        self.vals.truncate(self.cursor);
        if !self.keep_struct {
            self.structure_version += 1;
        }
        self.completed_len = Some(self.cursor);
        self.in_pass = false;
    }

    /// Forgets the previous pass so the next one is treated as new structure.
    pub fn invalidate(&mut self) {
        self.completed_len = None;
        self.keep_struct = false;
    }

    pub fn keep_struct(&self) -> bool {
        self.keep_struct
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    pub fn in_pass(&self) -> bool {
        self.in_pass
    }

    /// Incremented every time a pass ends with a changed structure.
    pub fn structure_version(&self) -> u64 {
        self.structure_version
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.vals
    }
}
