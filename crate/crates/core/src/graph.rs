//! Compact undirected adjacency graph used as input to the dissection ordering.

/// Undirected graph in compressed adjacency form. Neighbour lists are sorted
/// ascending and contain no self loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl Graph {
    /// Builds a graph from an edge list. Duplicates, reversed pairs and self
    /// loops are tolerated and normalised away.
    pub fn from_edges(num_vertices: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for (a, b) in edges {
            assert!(a < num_vertices && b < num_vertices, "edge ({a}, {b}) out of range");
            if a != b {
                pairs.push((a, b));
                pairs.push((b, a));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        let mut offsets = vec![0usize; num_vertices + 1];
        for &(a, _) in &pairs {
            offsets[a + 1] += 1;
        }
        for i in 0..num_vertices {
            offsets[i + 1] += offsets[i];
        }
        let neighbors = pairs.into_iter().map(|(_, b)| b).collect();
        Graph { offsets, neighbors }
    }

    /// Builds a graph from already-normalised adjacency arrays.
    ///
    /// Panics if the arrays are inconsistent, unsorted, asymmetric, or contain
    /// self loops.
    pub fn from_adjacency(offsets: Vec<usize>, neighbors: Vec<usize>) -> Self {
        let g = Graph { offsets, neighbors };
        assert!(g.is_well_formed(), "malformed adjacency arrays");
        g
    }

    pub fn num_vertices(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors(a).binary_search(&b).is_ok()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn adjacency(&self) -> &[usize] {
        &self.neighbors
    }

    fn is_well_formed(&self) -> bool {
        let n = match self.offsets.len().checked_sub(1) {
            Some(n) => n,
            None => return false,
        };
        if self.offsets[0] != 0 || self.offsets[n] != self.neighbors.len() {
            return false;
        }
        for v in 0..n {
            if self.offsets[v] > self.offsets[v + 1] {
                return false;
            }
            let adj = self.neighbors(v);
            if adj.windows(2).any(|w| w[0] >= w[1]) {
                return false;
            }
            for &w in adj {
                if w >= n || w == v || !self.has_edge(w, v) {
                    return false;
                }
            }
        }
        true
    }
}
