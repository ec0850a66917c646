//! Quadrilateral quadtree forest with one-level hanging nodes.
//!
//! Every cell stores its corners in lexicographic order `[v0, v1, v2, v3]` with
//! `v0 = (0,0)`, `v1 = (1,0)`, `v2 = (0,1)`, `v3 = (1,1)` in reference coordinates.
//! Local sides follow the same numbering as the reference elements: side 0 is `x = 0`
//! (from `v0` to `v2`), side 1 is `x = 1` (`v1` to `v3`), side 2 is `y = 0` (`v0` to `v1`)
//! and side 3 is `y = 1` (`v2` to `v3`). Edge vertices are stored in the direction of the
//! side parameter, which all cells of a mesh share.

use crate::error::{Error, Result};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainSpec {
    /// `(0, 1)^2`
    UnitSquare,
    /// `(-1, 1)^2` minus the segment `(0, 1] x {0}`
    Slit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryMarker {
    Interior,
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub vertices: [usize; 4],
    pub edges: [usize; 4],
    pub level: u32,
    pub parent: Option<usize>,
    pub children: Option<[usize; 4]>,
    /// Index of the initial-grid cell this cell descends from.
    pub root: (usize, usize),
}

impl Cell {
    pub fn is_active(&self) -> bool {
        self.children.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub vertices: [usize; 2],
    pub marker: BoundaryMarker,
    pub parent: Option<usize>,
    pub children: Option<[usize; 2]>,
    pub midpoint: Option<usize>,
    /// Cells (active or not) having this edge as one of their sides.
    pub cells: Vec<usize>,
}

/// One side of a fine face as seen from an adjacent active cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceSide {
    pub cell: usize,
    pub local_side: usize,
    /// Sub-interval of the cell's side parameter covered by the face.
    pub range: (f64, f64),
}

/// A fine face: an edge not covered by smaller edges of active cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    pub edge: usize,
    pub vertices: [usize; 2],
    pub marker: BoundaryMarker,
    /// One entry for boundary faces, two for interior faces, lower cell id first.
    pub sides: Vec<FaceSide>,
    pub length: f64,
    /// Unit normal pointing out of `sides[0].cell`.
    pub normal: [f64; 2],
}

/// A vertex lying in the middle of a side of a coarser active cell.
#[derive(Debug, Clone, PartialEq)]
pub struct HangingVertex {
    pub coarse_edge: usize,
    pub masters: [usize; 2],
    /// Position of the vertex along the coarse edge parameter.
    pub position: f64,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub domain: DomainSpec,
    pub n_initial: usize,
    pub vertices: Vec<[f64; 2]>,
    pub cells: Vec<Cell>,
    pub edges: Vec<Edge>,
    /// Active cell ids in increasing order.
    pub active: Vec<usize>,
    pub faces: Vec<Face>,
    /// Fine face of every edge that is one.
    pub edge_face: Vec<Option<usize>>,
    /// For every cell id and local side, the fine faces covering the side in parameter
    /// order (empty for inactive cells).
    pub cell_faces: Vec<[Vec<usize>; 4]>,
    pub hanging: BTreeMap<usize, HangingVertex>,
    /// Hanging vertex values as combinations of non-hanging vertices (chains resolved).
    pub hanging_weights: BTreeMap<usize, Vec<(usize, f64)>>,
    /// Active cells having the vertex as a corner.
    pub vertex_cells: Vec<Vec<usize>>,
    /// Whether the vertex is an endpoint of a fine Dirichlet face.
    pub vertex_on_dirichlet: Vec<bool>,
}

/// Local sides as pairs of local corner indices, ordered along the side parameter.
pub const SIDE_CORNERS: [[usize; 2]; 4] = [[0, 2], [1, 3], [0, 1], [2, 3]];

/// The star of cells whose hat function of the center vertex does not vanish.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub center_vertex: usize,
    pub cells: Vec<usize>,
    /// Values of the center vertex's hat function at the corners of each patch cell.
    pub psi: Vec<[f64; 4]>,
    pub on_dirichlet: bool,
    /// Patch boundary faces on the Dirichlet boundary, free in the local problem.
    pub local_dirichlet: Vec<usize>,
    /// Remaining patch boundary faces, carrying prescribed (mostly zero) normal flux.
    pub local_neumann: Vec<usize>,
    /// Fine faces with both sides in the patch.
    pub interior_faces: Vec<usize>,
}

/// Affine geometry of a cell, `x = origin + jac * xi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellGeometry {
    pub origin: [f64; 2],
    pub jac: [[f64; 2]; 2],
    pub det: f64,
    pub inv: [[f64; 2]; 2],
}

impl CellGeometry {
    pub fn map(&self, xi: [f64; 2]) -> [f64; 2] {
        [
            self.origin[0] + self.jac[0][0] * xi[0] + self.jac[0][1] * xi[1],
            self.origin[1] + self.jac[1][0] * xi[0] + self.jac[1][1] * xi[1],
        ]
    }

    pub fn pull_back(&self, x: [f64; 2]) -> [f64; 2] {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        [
            self.inv[0][0] * d[0] + self.inv[0][1] * d[1],
            self.inv[1][0] * d[0] + self.inv[1][1] * d[1],
        ]
    }

    /// Physical gradient from a reference gradient: `J^{-T} g`.
    pub fn grad(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.inv[0][0] * g[0] + self.inv[1][0] * g[1],
            self.inv[0][1] * g[0] + self.inv[1][1] * g[1],
        ]
    }

    /// Contravariant map of a reference vector: `J v / det J`.
    pub fn piola(&self, v: [f64; 2]) -> [f64; 2] {
        [
            (self.jac[0][0] * v[0] + self.jac[0][1] * v[1]) / self.det,
            (self.jac[1][0] * v[0] + self.jac[1][1] * v[1]) / self.det,
        ]
    }

    pub fn diameter(&self) -> f64 {
        let d1 = [self.jac[0][0] + self.jac[0][1], self.jac[1][0] + self.jac[1][1]];
        let d2 = [self.jac[0][0] - self.jac[0][1], self.jac[1][0] - self.jac[1][1]];
        (d1[0] * d1[0] + d1[1] * d1[1]).sqrt().max((d2[0] * d2[0] + d2[1] * d2[1]).sqrt())
    }
}

impl Mesh {
    /// Uniform `n x n` grid. All boundary faces are marked Dirichlet.
    pub fn build_uniform(domain: DomainSpec, n: usize) -> Result<Mesh> {
        if n == 0 {
            return Err(Error::InvalidArgument("grid resolution must be positive".into()));
        }
        let (lo, width) = match domain {
            DomainSpec::UnitSquare => (0.0, 1.0),
            DomainSpec::Slit => {
                if n % 2 != 0 {
                    return Err(Error::InvalidArgument(
                        "the slit domain needs an even grid resolution".into(),
                    ));
                }
                (-1.0, 2.0)
            }
        };
        let h = width / n as f64;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                vertices.push([lo + i as f64 * h, lo + j as f64 * h]);
            }
        }
        let lattice = |i: usize, j: usize| i + (n + 1) * j;
        // duplicates of the slit vertices, used by the cells above the slit
        let mut upper_copy = HashMap::new();
        if domain == DomainSpec::Slit {
            let j = n / 2;
            for i in (n / 2 + 1)..=n {
                upper_copy.insert(lattice(i, j), vertices.len());
                vertices.push(vertices[lattice(i, j)]);
            }
        }

        let mut edges: Vec<Edge> = Vec::new();
        let mut edge_index: HashMap<[usize; 2], usize> = HashMap::new();
        let mut cells = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                let mut v = [lattice(i, j), lattice(i + 1, j), lattice(i, j + 1), lattice(i + 1, j + 1)];
                if domain == DomainSpec::Slit && j == n / 2 {
                    for c in v.iter_mut().take(2) {
                        if let Some(&d) = upper_copy.get(c) {
                            *c = d;
                        }
                    }
                }
                let id = cells.len();
                let mut cell_edges = [0; 4];
                for (s, corners) in SIDE_CORNERS.iter().enumerate() {
                    let key = [v[corners[0]], v[corners[1]]];
                    let e = *edge_index.entry(key).or_insert_with(|| {
                        edges.push(Edge {
                            vertices: key,
                            marker: BoundaryMarker::Interior,
                            parent: None,
                            children: None,
                            midpoint: None,
                            cells: Vec::new(),
                        });
                        edges.len() - 1
                    });
                    edges[e].cells.push(id);
                    cell_edges[s] = e;
                }
                cells.push(Cell {
                    vertices: v,
                    edges: cell_edges,
                    level: 0,
                    parent: None,
                    children: None,
                    root: (i, j),
                });
            }
        }
        for e in &mut edges {
            if e.cells.len() == 1 {
                e.marker = BoundaryMarker::Dirichlet;
            }
        }
        let mut mesh = Mesh::empty(domain, n, vertices, cells, edges);
        mesh.rebuild();
        Ok(mesh)
    }

    fn empty(domain: DomainSpec, n: usize, vertices: Vec<[f64; 2]>, cells: Vec<Cell>, edges: Vec<Edge>) -> Mesh {
        Mesh {
            domain,
            n_initial: n,
            vertices,
            cells,
            edges,
            active: Vec::new(),
            faces: Vec::new(),
            edge_face: Vec::new(),
            cell_faces: Vec::new(),
            hanging: BTreeMap::new(),
            hanging_weights: BTreeMap::new(),
            vertex_cells: Vec::new(),
            vertex_on_dirichlet: Vec::new(),
        }
    }

    /// Re-marks boundary edges. `marker_of` receives the edge midpoint and must return
    /// `Dirichlet` or `Neumann`.
    pub fn set_boundary_markers(&mut self, marker_of: impl Fn([f64; 2]) -> BoundaryMarker) {
        for e in 0..self.edges.len() {
            if self.edges[e].marker == BoundaryMarker::Interior {
                continue;
            }
            let [a, b] = self.edges[e].vertices;
            let m = midpoint(self.vertices[a], self.vertices[b]);
            let marker = marker_of(m);
            assert_ne!(marker, BoundaryMarker::Interior, "boundary edges need a boundary marker");
            self.edges[e].marker = marker;
        }
        self.rebuild();
    }

    pub fn n_active(&self) -> usize {
        self.active.len()
    }

    pub fn geometry(&self, cell: usize) -> CellGeometry {
        let v = self.cells[cell].vertices;
        let o = self.vertices[v[0]];
        let a = self.vertices[v[1]];
        let b = self.vertices[v[2]];
        let jac = [[a[0] - o[0], b[0] - o[0]], [a[1] - o[1], b[1] - o[1]]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let inv = [[jac[1][1] / det, -jac[0][1] / det], [-jac[1][0] / det, jac[0][0] / det]];
        CellGeometry { origin: o, jac, det, inv }
    }

    pub fn is_hanging(&self, v: usize) -> bool {
        self.hanging.contains_key(&v)
    }

    /// Non-hanging vertices that are corners of active cells, in increasing order.
    pub fn regular_vertices(&self) -> Vec<usize> {
        (0..self.vertices.len())
            .filter(|&v| !self.vertex_cells[v].is_empty() && !self.is_hanging(v))
            .collect()
    }

    /// Fine faces: edges of active cells not covered by smaller edges.
    pub fn fine_faces(&self) -> Vec<usize> {
        (0..self.faces.len()).collect()
    }

    /// Refines the marked active cells, followed by closure refinement restoring the
    /// one-level rule.
    pub fn refine(&self, marked: &BTreeSet<usize>) -> Result<Mesh> {
        for &c in marked {
            if c >= self.cells.len() || !self.cells[c].is_active() {
                return Err(Error::InvalidArgument(format!("cell {c} is not an active cell")));
            }
        }
        let mut mesh = self.clone();
        let mut work: Vec<usize> = marked.iter().copied().collect();
        while !work.is_empty() {
            for c in work.drain(..) {
                if mesh.cells[c].is_active() {
                    mesh.refine_cell(c);
                }
            }
            // closure: an active cell with a doubly refined neighbor must be refined
            for c in 0..mesh.cells.len() {
                if !mesh.cells[c].is_active() {
                    continue;
                }
                let violates = mesh.cells[c].edges.iter().any(|&e| {
                    mesh.edges[e]
                        .children
                        .is_some_and(|ch| ch.iter().any(|&x| mesh.edges[x].children.is_some()))
                });
                if violates {
                    work.push(c);
                }
            }
        }
        mesh.rebuild();
        Ok(mesh)
    }

    /// Refines every active cell once.
    pub fn refine_uniform(&self) -> Mesh {
        let all: BTreeSet<usize> = self.active.iter().copied().collect();
        self.refine(&all).expect("active cells are valid marks")
    }

    fn split_edge(&mut self, e: usize) -> ([usize; 2], usize) {
        if let (Some(ch), Some(m)) = (self.edges[e].children, self.edges[e].midpoint) {
            return (ch, m);
        }
        let [a, b] = self.edges[e].vertices;
        let m = self.vertices.len();
        self.vertices.push(midpoint(self.vertices[a], self.vertices[b]));
        let marker = self.edges[e].marker;
        let mut ch = [0; 2];
        for (i, key) in [[a, m], [m, b]].into_iter().enumerate() {
            ch[i] = self.edges.len();
            self.edges.push(Edge {
                vertices: key,
                marker,
                parent: Some(e),
                children: None,
                midpoint: None,
                cells: Vec::new(),
            });
        }
        self.edges[e].children = Some(ch);
        self.edges[e].midpoint = Some(m);
        (ch, m)
    }

    fn new_edge(&mut self, key: [usize; 2]) -> usize {
        self.edges.push(Edge {
            vertices: key,
            marker: BoundaryMarker::Interior,
            parent: None,
            children: None,
            midpoint: None,
            cells: Vec::new(),
        });
        self.edges.len() - 1
    }

    fn refine_cell(&mut self, c: usize) {
        let cell = self.cells[c].clone();
        let [v0, v1, v2, v3] = cell.vertices;
        let (e0, m0) = self.split_edge(cell.edges[0]);
        let (e1, m1) = self.split_edge(cell.edges[1]);
        let (e2, m2) = self.split_edge(cell.edges[2]);
        let (e3, m3) = self.split_edge(cell.edges[3]);
        let center = self.vertices.len();
        let g = self.geometry(c);
        self.vertices.push(g.map([0.5, 0.5]));
        let bottom = self.new_edge([m2, center]);
        let top = self.new_edge([center, m3]);
        let left = self.new_edge([m0, center]);
        let right = self.new_edge([center, m1]);
        let layout = [
            ([v0, m2, m0, center], [e0[0], bottom, e2[0], left]),
            ([m2, v1, center, m1], [bottom, e1[0], e2[1], right]),
            ([m0, center, v2, m3], [e0[1], top, left, e3[0]]),
            ([center, m1, m3, v3], [top, e1[1], right, e3[1]]),
        ];
        let mut children = [0; 4];
        for (q, (verts, edges)) in layout.into_iter().enumerate() {
            let id = self.cells.len();
            children[q] = id;
            for &e in &edges {
                self.edges[e].cells.push(id);
            }
            self.cells.push(Cell {
                vertices: verts,
                edges,
                level: cell.level + 1,
                parent: Some(c),
                children: None,
                root: cell.root,
            });
        }
        self.cells[c].children = Some(children);
    }

    /// Recomputes all derived topology.
    fn rebuild(&mut self) {
        let n_cells = self.cells.len();
        self.active = (0..n_cells).filter(|&c| self.cells[c].is_active()).collect();

        let local_side = |cells: &[Cell], c: usize, e: usize| -> usize {
            cells[c].edges.iter().position(|&x| x == e).expect("edge belongs to cell")
        };

        self.faces.clear();
        self.edge_face = vec![None; self.edges.len()];
        for e in 0..self.edges.len() {
            let edge = &self.edges[e];
            if edge.children.is_some() {
                continue;
            }
            let mut sides: Vec<FaceSide> = edge
                .cells
                .iter()
                .filter(|&&c| self.cells[c].is_active())
                .map(|&c| FaceSide { cell: c, local_side: local_side(&self.cells, c, e), range: (0.0, 1.0) })
                .collect();
            if sides.is_empty() {
                continue;
            }
            if let Some(parent) = edge.parent {
                let pe = &self.edges[parent];
                let half = pe.children.expect("parent is split").iter().position(|&x| x == e).unwrap();
                let range = if half == 0 { (0.0, 0.5) } else { (0.5, 1.0) };
                for &c in &pe.cells {
                    if self.cells[c].is_active() {
                        sides.push(FaceSide { cell: c, local_side: local_side(&self.cells, c, parent), range });
                    }
                }
            }
            sides.sort_by_key(|s| s.cell);
            let [a, b] = edge.vertices;
            let (pa, pb) = (self.vertices[a], self.vertices[b]);
            let t = [pb[0] - pa[0], pb[1] - pa[1]];
            let length = (t[0] * t[0] + t[1] * t[1]).sqrt();
            let mut normal = [t[1] / length, -t[0] / length];
            let centre = self.geometry(sides[0].cell).map([0.5, 0.5]);
            let m = midpoint(pa, pb);
            if normal[0] * (m[0] - centre[0]) + normal[1] * (m[1] - centre[1]) < 0.0 {
                normal = [-normal[0], -normal[1]];
            }
            self.edge_face[e] = Some(self.faces.len());
            self.faces.push(Face { edge: e, vertices: edge.vertices, marker: edge.marker, sides, length, normal });
        }

        self.cell_faces = vec![Default::default(); n_cells];
        self.hanging.clear();
        for &c in &self.active {
            for s in 0..4 {
                let e = self.cells[c].edges[s];
                let list = match self.edge_face[e] {
                    Some(f) => vec![f],
                    None => {
                        let ch = self.edges[e].children.expect("covered side is split");
                        let m = self.edges[e].midpoint.expect("split edge has a midpoint");
                        self.hanging.insert(
                            m,
                            HangingVertex { coarse_edge: e, masters: self.edges[e].vertices, position: 0.5 },
                        );
                        ch.iter()
                            .map(|&x| self.edge_face[x].expect("one-level rule: halves are fine faces"))
                            .collect()
                    }
                };
                self.cell_faces[c][s] = list;
            }
        }

        self.hanging_weights.clear();
        let keys: Vec<usize> = self.hanging.keys().copied().collect();
        for h in keys {
            let w = self.resolve_hanging(h);
            self.hanging_weights.insert(h, w);
        }

        self.vertex_cells = vec![Vec::new(); self.vertices.len()];
        for &c in &self.active {
            for &v in &self.cells[c].vertices {
                self.vertex_cells[v].push(c);
            }
        }
        self.vertex_on_dirichlet = vec![false; self.vertices.len()];
        for f in &self.faces {
            if f.marker == BoundaryMarker::Dirichlet {
                for &v in &f.vertices {
                    self.vertex_on_dirichlet[v] = true;
                }
            }
        }
    }

    fn resolve_hanging(&self, h: usize) -> Vec<(usize, f64)> {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        let mut stack = vec![(h, 1.0)];
        while let Some((v, w)) = stack.pop() {
            match self.hanging.get(&v) {
                Some(hv) => {
                    stack.push((hv.masters[0], w * (1.0 - hv.position)));
                    stack.push((hv.masters[1], w * hv.position));
                }
                None => *acc.entry(v).or_insert(0.0) += w,
            }
        }
        acc.into_iter().collect()
    }

    /// Values of the hat function of `v` at the corners of `cell`.
    pub fn hat_corner_values(&self, v: usize, cell: usize) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (i, &c) in self.cells[cell].vertices.iter().enumerate() {
            if c == v {
                out[i] = 1.0;
            } else if let Some(w) = self.hanging_weights.get(&c) {
                out[i] = w.iter().filter(|(m, _)| *m == v).map(|(_, x)| x).sum();
            }
        }
        out
    }

    /// The patch of a non-hanging vertex: all active cells on which its hat function is
    /// nonzero, with the patch boundary classified.
    pub fn vertex_patch(&self, v: usize) -> Result<Patch> {
        if v >= self.vertices.len() || self.vertex_cells[v].is_empty() {
            return Err(Error::InvalidArgument(format!("vertex {v} is not a mesh vertex")));
        }
        if self.is_hanging(v) {
            return Err(Error::InvalidArgument(format!("vertex {v} is hanging")));
        }
        let mut cells: BTreeSet<usize> = self.vertex_cells[v].iter().copied().collect();
        for (h, w) in &self.hanging_weights {
            if w.iter().any(|(m, _)| *m == v) {
                cells.extend(self.vertex_cells[*h].iter().copied());
            }
        }
        let cells: Vec<usize> = cells.into_iter().collect();
        let psi = cells.iter().map(|&c| self.hat_corner_values(v, c)).collect();
        let on_dirichlet = self.vertex_on_dirichlet[v];
        let in_patch: BTreeSet<usize> = cells.iter().copied().collect();
        let mut faces = BTreeSet::new();
        for &c in &cells {
            for s in 0..4 {
                faces.extend(self.cell_faces[c][s].iter().copied());
            }
        }
        let mut local_dirichlet = Vec::new();
        let mut local_neumann = Vec::new();
        let mut interior_faces = Vec::new();
        for f in faces {
            let face = &self.faces[f];
            let inside = face.sides.iter().filter(|s| in_patch.contains(&s.cell)).count();
            if face.sides.len() == 2 && inside == 2 {
                interior_faces.push(f);
            } else if face.marker == BoundaryMarker::Dirichlet && on_dirichlet {
                local_dirichlet.push(f);
            } else {
                local_neumann.push(f);
            }
        }
        Ok(Patch { center_vertex: v, cells, psi, on_dirichlet, local_dirichlet, local_neumann, interior_faces })
    }

    /// Active cell containing the point (the lowest such id when on a cell boundary).
    pub fn locate(&self, x: [f64; 2]) -> Result<usize> {
        let tol = 1e-12;
        let inside = |c: usize| {
            let xi = self.geometry(c).pull_back(x);
            xi.iter().all(|&t| (-tol..=1.0 + tol).contains(&t))
        };
        let n = self.n_initial;
        let mut candidates: Vec<usize> = (0..n * n).filter(|&c| inside(c)).collect();
        candidates.sort_unstable();
        let mut best: Option<usize> = None;
        while let Some(c) = candidates.pop() {
            match self.cells[c].children {
                Some(ch) => candidates.extend(ch.iter().copied().filter(|&q| inside(q))),
                None => best = Some(best.map_or(c, |b| b.min(c))),
            }
        }
        best.ok_or(Error::PointOutside(x[0], x[1]))
    }

    /// Checks the one-level rule across every fine face.
    pub fn satisfies_one_level_rule(&self) -> bool {
        self.faces.iter().all(|f| {
            f.sides.len() < 2 || {
                let a = self.cells[f.sides[0].cell].level as i64;
                let b = self.cells[f.sides[1].cell].level as i64;
                (a - b).abs() <= 1
            }
        }) && self.active.iter().all(|&c| {
            self.cells[c].edges.iter().all(|&e| {
                self.edges[e].children.is_none_or(|ch| ch.iter().all(|&x| self.edges[x].children.is_none()))
            })
        })
    }

    pub fn total_area(&self) -> f64 {
        self.active.iter().map(|&c| self.geometry(c).det).sum()
    }

    /// Minimum Jacobian determinant of the bilinear cell maps at their corners.
    pub fn min_corner_jacobian(&self) -> f64 {
        let mut min = f64::INFINITY;
        for &c in &self.active {
            let p: Vec<[f64; 2]> = self.cells[c].vertices.iter().map(|&v| self.vertices[v]).collect();
            for (xi, eta) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
                let dx = [
                    (1.0 - eta) * (p[1][0] - p[0][0]) + eta * (p[3][0] - p[2][0]),
                    (1.0 - eta) * (p[1][1] - p[0][1]) + eta * (p[3][1] - p[2][1]),
                ];
                let dy = [
                    (1.0 - xi) * (p[2][0] - p[0][0]) + xi * (p[3][0] - p[1][0]),
                    (1.0 - xi) * (p[2][1] - p[0][1]) + xi * (p[3][1] - p[1][1]),
                ];
                min = min.min(dx[0] * dy[1] - dx[1] * dy[0]);
            }
        }
        min
    }

    /// Active cells sharing a fine face with `cell`.
    pub fn face_neighbors(&self, cell: usize) -> Vec<usize> {
        let mut out = BTreeSet::new();
        for s in 0..4 {
            for &f in &self.cell_faces[cell][s] {
                for side in &self.faces[f].sides {
                    if side.cell != cell {
                        out.insert(side.cell);
                    }
                }
            }
        }
        out.into_iter().collect()
    }

    /// Plain-text export: vertices, active cells and fine faces.
    pub fn export_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# vertices: id x y");
        for (i, v) in self.vertices.iter().enumerate() {
            let _ = writeln!(s, "v {i} {:.17e} {:.17e}", v[0], v[1]);
        }
        let _ = writeln!(s, "# cells: id v0 v1 v2 v3 level active");
        for (i, c) in self.cells.iter().enumerate() {
            let [a, b, cc, d] = c.vertices;
            let _ = writeln!(s, "c {i} {a} {b} {cc} {d} {} {}", c.level, u8::from(c.is_active()));
        }
        let _ = writeln!(s, "# faces: id marker");
        for (i, f) in self.faces.iter().enumerate() {
            let m = match f.marker {
                BoundaryMarker::Interior => "interior",
                BoundaryMarker::Dirichlet => "dirichlet",
                BoundaryMarker::Neumann => "neumann",
            };
            let _ = writeln!(s, "f {i} {m}");
        }
        s
    }
}

fn midpoint(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(n: usize) -> Mesh {
        Mesh::build_uniform(DomainSpec::UnitSquare, n).unwrap()
    }

    #[test]
    fn uniform_counts() {
        let m = square(16);
        assert_eq!(m.vertices.len(), 289);
        assert_eq!(m.n_active(), 256);
        let m = square(1);
        assert_eq!(m.vertices.len(), 4);
        assert_eq!(m.faces.iter().filter(|f| f.sides.len() == 1).count(), 4);
        let s = Mesh::build_uniform(DomainSpec::Slit, 32).unwrap();
        assert_eq!(s.vertices.len(), 1105);
        assert!(Mesh::build_uniform(DomainSpec::UnitSquare, 0).is_err());
    }

    #[test]
    fn single_refinement_creates_two_hanging_vertices() {
        let m = square(2);
        let r = m.refine(&BTreeSet::from([0])).unwrap();
        assert_eq!(r.n_active(), 7);
        assert_eq!(r.hanging.len(), 2);
        // 4 faces inside the refined cell, 4 halves of the two covered coarse faces and the
        // 2 untouched coarse faces
        let interior = r.faces.iter().filter(|f| f.sides.len() == 2).count();
        assert_eq!(interior, 4 + 4 + 2);
        for &h in r.hanging.keys() {
            let p = r.vertices[h];
            assert!((p[0] - 0.5).abs() < 1e-15 || (p[1] - 0.5).abs() < 1e-15);
        }
        let unchanged = m.refine(&BTreeSet::new()).unwrap();
        assert_eq!(unchanged.n_active(), 4);
        let one = square(1).refine(&BTreeSet::from([0])).unwrap();
        assert_eq!(one.n_active(), 4);
        assert!(one.hanging.is_empty());
    }

    #[test]
    fn uniform_fine_faces() {
        let m = square(2);
        assert_eq!(m.faces.iter().filter(|f| f.sides.len() == 2).count(), 4);
        assert_eq!(m.faces.iter().filter(|f| f.sides.len() == 1).count(), 8);
    }

    #[test]
    fn closure_refinement_keeps_one_level() {
        let mut m = square(2);
        for _ in 0..4 {
            // always refine the active cell touching the origin
            let c = m.locate([1e-9, 1e-9]).unwrap();
            m = m.refine(&BTreeSet::from([c])).unwrap();
            assert!(m.satisfies_one_level_rule());
            assert!((m.total_area() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn patches() {
        let m = square(4);
        let v = 1 + 5;
        let p = m.vertex_patch(v).unwrap();
        assert_eq!(p.cells.len(), 4);
        assert!(p.local_dirichlet.is_empty());
        let p = m.vertex_patch(0).unwrap();
        assert_eq!(p.cells.len(), 1);
        assert_eq!(p.local_dirichlet.len(), 2);
        assert!(p.on_dirichlet);
    }

    #[test]
    fn coarse_fine_patch_includes_cells_touching_hanging_vertices() {
        // 2x2 grid with the lower-left cell refined; the vertex (0.5, 0.5) is a corner of
        // all four original positions
        let m = square(2).refine(&BTreeSet::from([0])).unwrap();
        let center = m.vertices.iter().position(|p| *p == [0.5, 0.5]).unwrap();
        let p = m.vertex_patch(center).unwrap();
        // 3 coarse cells + the fine child at the corner + 2 fine cells touching hanging
        // midpoints on the coarse/fine interface
        assert_eq!(p.cells.len(), 6);
        let half: usize = p.psi.iter().flatten().filter(|&&x| x == 0.5).count();
        assert_eq!(half, 4);
        let hanging = *m.hanging.keys().next().unwrap();
        assert!(m.vertex_patch(hanging).is_err());
    }

    #[test]
    fn slit_sides_are_disconnected() {
        let m = Mesh::build_uniform(DomainSpec::Slit, 8).unwrap();
        let above = m.locate([0.6, 0.1]).unwrap();
        let below = m.locate([0.6, -0.1]).unwrap();
        assert!(!m.face_neighbors(above).contains(&below));
        let left_above = m.locate([-0.1, 0.1]).unwrap();
        let left_below = m.locate([-0.1, -0.1]).unwrap();
        assert!(m.face_neighbors(left_above).contains(&left_below));
        let boundary = m.faces.iter().filter(|f| f.sides.len() == 1).count();
        assert_eq!(boundary, 4 * 8 + 2 * 4);
    }

    #[test]
    fn normals_point_out_of_first_side() {
        let m = square(2).refine(&BTreeSet::from([3])).unwrap();
        for f in &m.faces {
            let g = m.geometry(f.sides[0].cell);
            let c = g.map([0.5, 0.5]);
            let p = m.vertices[f.vertices[0]];
            assert!(f.normal[0] * (p[0] - c[0]) + f.normal[1] * (p[1] - c[1]) > 0.0);
        }
    }
}
