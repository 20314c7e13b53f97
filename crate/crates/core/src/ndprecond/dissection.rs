//! Recursive graph bisection with vertex separators.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use crate::assembly::CsrMatrix;
use crate::error::{Error, Result};
use crate::graph::Graph;

pub const DEFAULT_LEAF_THRESHOLD: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Diagonal,
    Separator,
}

/// One node of the dissection tree. Its unknowns occupy `start..end` in the
/// permuted order; the whole subtree occupies `subtree_start..end`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub start: usize,
    pub end: usize,
    pub subtree_start: usize,
    /// Leaves are level 0; a separator sits one above its highest child.
    pub level: usize,
    pub kind: BlockKind,
    pub children: Vec<usize>,
    pub parent: Option<usize>,
    /// Index of the first block of this subtree (blocks are in post-order).
    pub first_descendant: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// Ordering plus block tree. `perm[new] = old`, `iperm[old] = new`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DissectionPlan {
    pub perm: Vec<usize>,
    pub iperm: Vec<usize>,
    /// Post-order: children always precede their parent.
    pub blocks: Vec<Block>,
    pub leaf_threshold: usize,
}

impl DissectionPlan {
    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn num_levels(&self) -> usize {
        self.blocks.iter().map(|b| b.level + 1).max().unwrap_or(0)
    }

    /// Block indices grouped by level, lowest level first.
    pub fn levels(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_levels()];
        for (i, b) in self.blocks.iter().enumerate() {
            out[b.level].push(i);
        }
        out
    }

    /// Root blocks (one per independent component tree).
    pub fn roots(&self) -> Vec<usize> {
        (0..self.blocks.len()).filter(|&i| self.blocks[i].parent.is_none()).collect()
    }

    /// Block owning each permuted index.
    pub fn block_of(&self) -> Vec<usize> {
        let mut owner = vec![usize::MAX; self.len()];
        for (i, b) in self.blocks.iter().enumerate() {
            owner[b.start..b.end].fill(i);
        }
        owner
    }

    /// True when `a` is `b` or one of its ancestors.
    pub fn is_ancestor_or_self(&self, a: usize, b: usize) -> bool {
        self.blocks[a].first_descendant <= b && b <= a
    }

    /// Size of the separator closing the top split (largest separator root).
    pub fn top_separator_size(&self) -> usize {
        self.roots()
            .iter()
            .filter(|&&r| self.blocks[r].kind == BlockKind::Separator)
            .map(|&r| self.blocks[r].len())
            .max()
            .unwrap_or(0)
    }

    /// Replaces every vertex by `dofs` consecutive unknowns.
    pub fn expand(&self, dofs: usize) -> DissectionPlan {
        let mut perm = Vec::with_capacity(self.perm.len() * dofs);
        for &v in &self.perm {
            perm.extend((0..dofs).map(|d| v * dofs + d));
        }
        let iperm = invert(&perm);
        let blocks = self
            .blocks
            .iter()
            .map(|b| Block {
                start: b.start * dofs,
                end: b.end * dofs,
                subtree_start: b.subtree_start * dofs,
                ..b.clone()
            })
            .collect();
        DissectionPlan {
            perm,
            iperm,
            blocks,
            leaf_threshold: self.leaf_threshold,
        }
    }

    /// Checks that every entry of `a`, viewed in the permuted order, couples
    /// a block with itself or with one of its ancestors. Returns the first
    /// offending `(row, col)` in original numbering.
    pub fn verify_independence(&self, a: &CsrMatrix) -> std::result::Result<(), (usize, usize)> {
        let owner = self.block_of();
        for r in 0..a.nrows() {
            let (cols, _) = a.row(r);
            let br = owner[self.iperm[r]];
            for &c in cols {
                let bc = owner[self.iperm[c]];
                if !(self.is_ancestor_or_self(br, bc) || self.is_ancestor_or_self(bc, br)) {
                    return Err((r, c));
                }
            }
        }
        Ok(())
    }

    /// Graph version of [`Self::verify_independence`].
    pub fn verify_graph_independence(&self, g: &Graph) -> std::result::Result<(), (usize, usize)> {
        let owner = self.block_of();
        for u in 0..g.num_vertices() {
            let bu = owner[self.iperm[u]];
            for &v in g.neighbors(u) {
                let bv = owner[self.iperm[v]];
                if !(self.is_ancestor_or_self(bu, bv) || self.is_ancestor_or_self(bv, bu)) {
                    return Err((u, v));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    inv
}

/// Collapses a matrix pattern with `dofs` unknowns per vertex into a vertex
/// graph.
pub fn graph_from_pattern(a: &CsrMatrix, dofs: usize) -> Result<Graph> {
    if dofs == 0 || a.nrows() % dofs != 0 || a.nrows() != a.ncols() {
        return Err(Error::invalid(
            "ndprecond",
            format!("cannot group a {}x{} pattern into blocks of {dofs}", a.nrows(), a.ncols()),
        ));
    }
    let mut edges = Vec::new();
    for r in 0..a.nrows() {
        for &c in a.row(r).0 {
            if r / dofs != c / dofs {
                edges.push((r / dofs, c / dofs));
            }
        }
    }
    Ok(Graph::from_edges(a.nrows() / dofs, edges))
}

struct Builder<'g> {
    graph: &'g Graph,
    threshold: usize,
    perm: Vec<usize>,
    blocks: Vec<Block>,
    // Scratch per vertex: membership stamp, BFS level, bisection side.
    mark: Vec<u32>,
    stamp: u32,
    level: Vec<usize>,
    side: Vec<u8>,
}

/// Orders the vertices of `graph` by recursive bisection. Each split takes a
/// breadth-first level structure from a pseudo-peripheral vertex, cuts it
/// where half of the vertices are reached, and turns a greedy vertex cover of
/// the cut edges into the separator. Layout per split: `[A, B, separator]`.
pub fn nested_dissection(graph: &Graph, leaf_threshold: usize) -> DissectionPlan {
    let n = graph.num_vertices();
    let threshold = leaf_threshold.max(1);
    let mut b = Builder {
        graph,
        threshold,
        perm: Vec::with_capacity(n),
        blocks: Vec::new(),
        mark: vec![0; n],
        stamp: 0,
        level: vec![usize::MAX; n],
        side: vec![0; n],
    };
    if n > 0 {
        let all: Vec<usize> = (0..n).collect();
        b.dissect(all);
    }
    let iperm = invert(&b.perm);
    DissectionPlan {
        perm: b.perm,
        iperm,
        blocks: b.blocks,
        leaf_threshold: threshold,
    }
}

impl Builder<'_> {
    /// Orders `set` (sorted) and returns the index of its root block.
    fn dissect(&mut self, set: Vec<usize>) -> usize {
        let first_descendant = self.blocks.len();
        let subtree_start = self.perm.len();
        if set.len() <= self.threshold {
            return self.leaf(set, first_descendant, subtree_start);
        }
        let Some((a, b, sep)) = self.split(&set) else {
            return self.leaf(set, first_descendant, subtree_start);
        };
        let ca = self.dissect(a);
        let cb = self.dissect(b);
        let start = self.perm.len();
        self.perm.extend_from_slice(&sep);
        let level = 1 + self.blocks[ca].level.max(self.blocks[cb].level);
        let id = self.blocks.len();
        self.blocks.push(Block {
            start,
            end: self.perm.len(),
            subtree_start,
            level,
            kind: BlockKind::Separator,
            children: vec![ca, cb],
            parent: None,
            first_descendant,
        });
        self.blocks[ca].parent = Some(id);
        self.blocks[cb].parent = Some(id);
        id
    }

    fn leaf(&mut self, set: Vec<usize>, first_descendant: usize, subtree_start: usize) -> usize {
        let start = self.perm.len();
        self.perm.extend_from_slice(&set);
        self.blocks.push(Block {
            start,
            end: self.perm.len(),
            subtree_start,
            level: 0,
            kind: BlockKind::Diagonal,
            children: Vec::new(),
            parent: None,
            first_descendant,
        });
        self.blocks.len() - 1
    }

    fn enter(&mut self, set: &[usize]) -> u32 {
        self.stamp += 1;
        for &v in set {
            self.mark[v] = self.stamp;
            self.level[v] = usize::MAX;
        }
        self.stamp
    }

    /// Breadth-first levels inside the marked set. Returns vertices in visit
    /// order and the level boundaries.
    fn bfs(&mut self, root: usize, tag: u32) -> (Vec<usize>, Vec<usize>) {
        let mut order = vec![root];
        let mut bounds = vec![0];
        let mut queue = VecDeque::from([root]);
        self.level[root] = 0;
        while let Some(u) = queue.pop_front() {
            let lu = self.level[u];
            for &w in self.graph.neighbors(u) {
                if self.mark[w] == tag && self.level[w] == usize::MAX {
                    self.level[w] = lu + 1;
                    order.push(w);
                    queue.push_back(w);
                }
            }
        }
        for i in 1..order.len() {
            if self.level[order[i]] != self.level[order[i - 1]] {
                bounds.push(i);
            }
        }
        bounds.push(order.len());
        (order, bounds)
    }

    fn reset_levels(&mut self, vs: &[usize]) {
        for &v in vs {
            self.level[v] = usize::MAX;
        }
    }

    fn degree_in(&self, v: usize, tag: u32) -> usize {
        self.graph.neighbors(v).iter().filter(|&&w| self.mark[w] == tag).count()
    }

    fn split(&mut self, set: &[usize]) -> Option<(Vec<usize>, Vec<usize>, Vec<usize>)> {
        let tag = self.enter(set);
        // Pseudo-peripheral start: jump to a minimum-degree vertex of the last
        // level while the eccentricity grows.
        let mut root = set[0];
        let (mut order, mut bounds) = self.bfs(root, tag);
        for _ in 0..8 {
            let last = &order[bounds[bounds.len() - 2]..];
            let cand = *last
                .iter()
                .min_by_key(|&&v| (self.degree_in(v, tag), v))
                .expect("non-empty level");
            self.reset_levels(&order);
            let (o2, b2) = self.bfs(cand, tag);
            if b2.len() > bounds.len() {
                root = cand;
                order = o2;
                bounds = b2;
            } else {
                self.reset_levels(&o2);
                (order, bounds) = self.bfs(root, tag);
                break;
            }
        }
        self.reset_levels(&order);

        // Cut after the first level at which half of the set is reached.
        let half = set.len().div_ceil(2);
        let num_levels = bounds.len() - 1;
        let mut cut_level = 0;
        while cut_level + 1 < num_levels && bounds[cut_level + 1] < half {
            cut_level += 1;
        }
        let a_vertices = &order[..bounds[cut_level + 1]];
        // Side: 1 = A, 2 = B (including vertices the traversal missed), 0 = separator.
        for &v in set {
            self.side[v] = 2;
        }
        for &v in a_vertices {
            self.side[v] = 1;
        }

        // Cut edges, each stored once from its A endpoint.
        let mut cut_edges: Vec<(usize, usize)> = Vec::new();
        for &u in a_vertices {
            for &w in self.graph.neighbors(u) {
                if self.mark[w] == tag && self.side[w] == 2 {
                    cut_edges.push((u, w));
                }
            }
        }
        let mut incident: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (e, &(u, w)) in cut_edges.iter().enumerate() {
            incident.entry(u).or_default().push(e);
            incident.entry(w).or_default().push(e);
        }
        let mut cut_deg: BTreeMap<usize, usize> = incident.iter().map(|(&v, es)| (v, es.len())).collect();

        // Greedy cover: highest remaining cut degree first, lowest index on ties.
        let mut heap: BinaryHeap<(usize, Reverse<usize>)> = cut_deg.iter().map(|(&v, &d)| (d, Reverse(v))).collect();
        let mut covered = vec![false; cut_edges.len()];
        let mut remaining = cut_edges.len();
        let mut separator = Vec::new();
        while remaining > 0 {
            let (d, Reverse(v)) = heap.pop().expect("uncovered edges remain");
            let current = cut_deg[&v];
            if current != d {
                if current > 0 {
                    heap.push((current, Reverse(v)));
                }
                continue;
            }
            separator.push(v);
            for &e in &incident[&v] {
                if !covered[e] {
                    covered[e] = true;
                    remaining -= 1;
                    let (x, y) = cut_edges[e];
                    let other = if x == v { y } else { x };
                    *cut_deg.get_mut(&other).expect("endpoint tracked") -= 1;
                }
            }
            cut_deg.insert(v, 0);
        }
        separator.sort_unstable();
        for &v in &separator {
            self.side[v] = 0;
        }
        let a: Vec<usize> = set.iter().copied().filter(|&v| self.side[v] == 1).collect();
        let b: Vec<usize> = set.iter().copied().filter(|&v| self.side[v] == 2).collect();
        if a.is_empty() || b.is_empty() {
            return None;
        }
        Some((a, b, separator))
    }
}
