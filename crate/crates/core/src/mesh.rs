//! Tetrahedral mesh container, the structured beam generator and TetGen ASCII
//! ingestion.
//!
//! The element list order is fixed at construction. Every model visits
//! elements in this order, which is what makes the triplet fill order of the
//! assembled matrices identical from one time step to the next.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::graph::Graph;

pub type Point = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementKind {
    Tetra4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nodes: Vec<Point>,
    elements: Vec<[usize; 4]>,
    kind: ElementKind,
    fixed_nodes: Vec<usize>,
}

/// Signed volume of the tetrahedron `(p0, p1, p2, p3)`.
pub fn signed_volume(p: [Point; 4]) -> f64 {
    shape_matrix(p).determinant() / 6.0
}

/// Columns are the edge vectors `p1 - p0`, `p2 - p0`, `p3 - p0`.
pub(crate) fn shape_matrix(p: [Point; 4]) -> Matrix3<f64> {
    let o = Vector3::from(p[0]);
    Matrix3::from_columns(&[
        Vector3::from(p[1]) - o,
        Vector3::from(p[2]) - o,
        Vector3::from(p[3]) - o,
    ])
}

impl Mesh {
    /// Validates and wraps node and element arrays.
    pub fn new(nodes: Vec<Point>, elements: Vec<[usize; 4]>) -> Result<Self> {
        for (i, p) in nodes.iter().enumerate() {
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite {
                    module: "mesh",
                    msg: format!("node {i} has non-finite coordinates"),
                });
            }
        }
        let mesh = Mesh {
            nodes,
            elements,
            kind: ElementKind::Tetra4,
            fixed_nodes: Vec::new(),
        };
        for (e, tet) in mesh.elements.iter().enumerate() {
            if let Some(&bad) = tet.iter().find(|&&v| v >= mesh.nodes.len()) {
                return Err(Error::invalid(
                    "mesh",
                    format!("element {e} references node {bad} but the mesh has {} nodes", mesh.nodes.len()),
                ));
            }
            if mesh.element_volume(e) == 0.0 {
                return Err(Error::invalid("mesh", format!("element {e} is degenerate (zero volume)")));
            }
        }
        Ok(mesh)
    }

    /// Replaces the fixed node set. The list is sorted and deduplicated.
    pub fn with_fixed_nodes(mut self, mut fixed: Vec<usize>) -> Result<Self> {
        fixed.sort_unstable();
        fixed.dedup();
        if let Some(&bad) = fixed.last().filter(|&&v| v >= self.nodes.len()) {
            return Err(Error::invalid("mesh", format!("fixed node {bad} out of range")));
        }
        self.fixed_nodes = fixed;
        Ok(self)
    }

    /// Fixes every node whose position satisfies `pred`.
    pub fn fix_nodes_where(self, pred: impl Fn(&Point) -> bool) -> Self {
        let fixed = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, p)| pred(p))
            .map(|(i, _)| i)
            .collect();
        Mesh {
            fixed_nodes: fixed,
            ..self
        }
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn elements(&self) -> &[[usize; 4]] {
        &self.elements
    }

    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    pub fn fixed_nodes(&self) -> &[usize] {
        &self.fixed_nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    /// Number of degrees of freedom (three per node).
    pub fn num_dofs(&self) -> usize {
        3 * self.nodes.len()
    }

    /// Fixed degrees of freedom, sorted ascending.
    pub fn fixed_dofs(&self) -> Vec<usize> {
        self.fixed_nodes
            .iter()
            .flat_map(|&n| [3 * n, 3 * n + 1, 3 * n + 2])
            .collect()
    }

    pub fn element_points(&self, e: usize) -> [Point; 4] {
        self.elements[e].map(|v| self.nodes[v])
    }

    pub fn element_volume(&self, e: usize) -> f64 {
        signed_volume(self.element_points(e))
    }

    /// Flattened `[x0, y0, z0, x1, ...]` rest positions.
    pub fn positions(&self) -> Vec<f64> {
        self.nodes.iter().flat_map(|p| p.iter().copied()).collect()
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.nodes {
            for d in 0..3 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        (lo, hi)
    }

    /// Length of the bounding-box diagonal.
    pub fn bbox_diagonal(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        (0..3).map(|d| (hi[d] - lo[d]).powi(2)).sum::<f64>().sqrt()
    }

    pub fn translated(mut self, offset: Point) -> Self {
        for p in &mut self.nodes {
            for d in 0..3 {
                p[d] += offset[d];
            }
        }
        self
    }
}

// Kuhn subdivision of the unit cube: one tetrahedron per axis permutation,
// all sharing the main diagonal. Odd permutations swap the middle vertices so
// every tetrahedron is positively oriented.
const KUHN_PERMUTATIONS: [([usize; 3], bool); 6] = [
    ([0, 1, 2], true),
    ([0, 2, 1], false),
    ([1, 0, 2], false),
    ([1, 2, 0], true),
    ([2, 0, 1], true),
    ([2, 1, 0], false),
];

/// Regular `nx × ny × nz` grid of nodes with `spacing` between neighbours,
/// each hexahedral cell split into six tetrahedra.
///
/// Node `(i, j, k)` has index `i + nx * (j + ny * k)` and sits at
/// `(i, j, k) * spacing`.
pub fn generate_beam(nx: usize, ny: usize, nz: usize, spacing: f64) -> Result<Mesh> {
    if nx < 2 || ny < 2 || nz < 2 {
        return Err(Error::invalid(
            "mesh",
            format!("beam dimensions must be at least 2 nodes per axis, got ({nx}, {ny}, {nz})"),
        ));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::invalid("mesh", format!("spacing must be positive, got {spacing}")));
    }
    let index = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
    let mut nodes = Vec::with_capacity(nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                nodes.push([i as f64 * spacing, j as f64 * spacing, k as f64 * spacing]);
            }
        }
    }
    let mut elements = Vec::with_capacity(6 * (nx - 1) * (ny - 1) * (nz - 1));
    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let corner = |o: [usize; 3]| index(i + o[0], j + o[1], k + o[2]);
                for (perm, even) in KUHN_PERMUTATIONS {
                    let mut first = [0usize; 3];
                    first[perm[0]] = 1;
                    let mut second = first;
                    second[perm[1]] = 1;
                    let (v1, v2) = if even {
                        (corner(first), corner(second))
                    } else {
                        (corner(second), corner(first))
                    };
                    elements.push([corner([0, 0, 0]), v1, v2, corner([1, 1, 1])]);
                }
            }
        }
    }
    Mesh::new(nodes, elements)
}

/// Reads a TetGen `.node` / `.ele` pair.
///
/// Indexing is zero- or one-based depending on the first node index in the
/// `.node` file; element connectivity is shifted by the same base.
pub fn load_tetgen(node_path: impl AsRef<Path>, ele_path: impl AsRef<Path>) -> Result<Mesh> {
    let node_path = node_path.as_ref();
    let ele_path = ele_path.as_ref();
    let node_text = fs::read_to_string(node_path).map_err(|e| Error::io(node_path, e))?;
    let ele_text = fs::read_to_string(ele_path).map_err(|e| Error::io(ele_path, e))?;
    let (nodes, base) = parse_node_file(&node_text, node_path)?;
    let elements = parse_ele_file(&ele_text, ele_path, base, nodes.len())?;
    Mesh::new(nodes, elements).map_err(|e| match e {
        Error::InvalidArgument { msg, .. } => Error::Parse {
            path: ele_path.to_path_buf(),
            line: 0,
            msg,
        },
        other => other,
    })
}

/// Writes a mesh as a zero-based TetGen `.node` / `.ele` pair. Coordinates are
/// printed in shortest round-trip form, so reloading is bit exact.
pub fn write_tetgen(mesh: &Mesh, node_path: impl AsRef<Path>, ele_path: impl AsRef<Path>) -> Result<()> {
    let node_path = node_path.as_ref();
    let ele_path = ele_path.as_ref();
    let mut out = Vec::new();
    writeln!(out, "{} 3 0 0", mesh.num_nodes()).unwrap();
    for (i, p) in mesh.nodes.iter().enumerate() {
        writeln!(out, "{i} {:?} {:?} {:?}", p[0], p[1], p[2]).unwrap();
    }
    fs::write(node_path, &out).map_err(|e| Error::io(node_path, e))?;
    out.clear();
    writeln!(out, "{} 4 0", mesh.num_elements()).unwrap();
    for (i, t) in mesh.elements.iter().enumerate() {
        writeln!(out, "{i} {} {} {} {}", t[0], t[1], t[2], t[3]).unwrap();
    }
    fs::write(ele_path, &out).map_err(|e| Error::io(ele_path, e))
}

/// Non-empty, comment-stripped lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.split('#').next().unwrap_or("");
        let fields: Vec<&str> = line.split_whitespace().collect();
        (!fields.is_empty()).then_some((i + 1, fields))
    })
}

fn parse_field<T: std::str::FromStr>(field: &str, path: &Path, line: usize, what: &str) -> Result<T> {
    field.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("cannot parse {what} from '{field}'"),
    })
}

fn parse_node_file(text: &str, path: &Path) -> Result<(Vec<Point>, usize)> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
    if header.len() < 2 {
        return Err(err(hline, "header must contain point count and dimension".into()));
    }
    let count: usize = parse_field(header[0], path, hline, "point count")?;
    let dim: usize = parse_field(header[1], path, hline, "dimension")?;
    if dim != 3 {
        return Err(err(hline, format!("dimension must be 3, got {dim}")));
    }
    let mut nodes = Vec::with_capacity(count);
    let mut base = 0;
    for (lno, fields) in lines.by_ref().take(count) {
        if fields.len() < 4 {
            return Err(err(lno, format!("expected index and 3 coordinates, got {} fields", fields.len())));
        }
        let idx: usize = parse_field(fields[0], path, lno, "node index")?;
        if nodes.is_empty() {
            if idx > 1 {
                return Err(err(lno, format!("first node index must be 0 or 1, got {idx}")));
            }
            base = idx;
        }
        if idx != base + nodes.len() {
            return Err(err(lno, format!("expected node index {}, got {idx}", base + nodes.len())));
        }
        let mut p = [0.0; 3];
        for d in 0..3 {
            p[d] = parse_field(fields[1 + d], path, lno, "coordinate")?;
        }
        nodes.push(p);
    }
    if nodes.len() != count {
        return Err(err(0, format!("header announces {count} points, file has {}", nodes.len())));
    }
    Ok((nodes, base))
}

fn parse_ele_file(text: &str, path: &Path, base: usize, num_nodes: usize) -> Result<Vec<[usize; 4]>> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
    if header.len() < 2 {
        return Err(err(hline, "header must contain element count and nodes per element".into()));
    }
    let count: usize = parse_field(header[0], path, hline, "element count")?;
    let per: usize = parse_field(header[1], path, hline, "nodes per element")?;
    if per != 4 {
        return Err(err(hline, format!("only 4-node tetrahedra are supported, got {per}")));
    }
    let mut elements = Vec::with_capacity(count);
    for (lno, fields) in lines.by_ref().take(count) {
        if fields.len() < 5 {
            return Err(err(lno, format!("expected index and 4 node indices, got {} fields", fields.len())));
        }
        let mut tet = [0usize; 4];
        for k in 0..4 {
            let raw: usize = parse_field(fields[1 + k], path, lno, "node index")?;
            if raw < base || raw - base >= num_nodes {
                return Err(err(lno, format!("node index {raw} out of range")));
            }
            tet[k] = raw - base;
        }
        elements.push(tet);
    }
    if elements.len() != count {
        return Err(err(0, format!("header announces {count} elements, file has {}", elements.len())));
    }
    Ok(elements)
}

/// Node adjacency: `i` and `j` are connected iff they share an element.
pub fn vertex_adjacency(mesh: &Mesh) -> Graph {
    let edges = mesh.elements.iter().flat_map(|t| {
        (0..4).flat_map(move |a| ((a + 1)..4).map(move |b| (t[a], t[b])))
    });
    Graph::from_edges(mesh.num_nodes(), edges)
}
