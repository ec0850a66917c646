//! Global degree-of-freedom numbering, hanging-node and Dirichlet constraints, and
//! evaluation of conforming scalar fields.

use crate::elements::lagrange::lagrange_1d;
use crate::elements::LagrangeElement;
use crate::error::Result;
use crate::mesh::{BoundaryMarker, Mesh};
use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofFamily {
    Lagrange(usize),
    /// Raviart–Thomas index `k` with nothing shared between cells.
    BrokenRt(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DofSupport {
    Vertex(usize),
    Edge(usize),
    Interior(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum NodeKey {
    Vertex(usize),
    Edge(usize, usize),
    Cell(usize, usize),
}

#[derive(Debug, Clone)]
pub struct DofMap {
    pub family: DofFamily,
    /// Global indices of the local degrees of freedom of every cell id (empty for
    /// inactive cells).
    pub cell_dofs: Vec<Vec<usize>>,
    pub n_dofs: usize,
    pub support: Vec<DofSupport>,
    /// Physical location of Lagrange nodes (empty for flux families).
    pub points: Vec<[f64; 2]>,
    keys: HashMap<NodeKey, usize>,
}

impl DofMap {
    pub fn degree(&self) -> usize {
        match self.family {
            DofFamily::Lagrange(p) | DofFamily::BrokenRt(p) => p,
        }
    }

    pub fn distribute(mesh: &Mesh, family: DofFamily) -> DofMap {
        match family {
            DofFamily::Lagrange(p) => Self::lagrange(mesh, p),
            DofFamily::BrokenRt(k) => {
                let dim = 2 * k * (k + 1);
                let mut cell_dofs = vec![Vec::new(); mesh.cells.len()];
                let mut support = Vec::new();
                for (i, &c) in mesh.active.iter().enumerate() {
                    cell_dofs[c] = (i * dim..(i + 1) * dim).collect();
                    support.extend(std::iter::repeat_n(DofSupport::Interior(c), dim));
                }
                DofMap {
                    family,
                    cell_dofs,
                    n_dofs: mesh.active.len() * dim,
                    support,
                    points: Vec::new(),
                    keys: HashMap::new(),
                }
            }
        }
    }

    fn lagrange(mesh: &Mesh, p: usize) -> DofMap {
        let element = LagrangeElement::new(p);
        let n = p + 1;
        let mut keys: HashMap<NodeKey, usize> = HashMap::new();
        let mut support = Vec::new();
        let mut points = Vec::new();
        let mut cell_dofs = vec![Vec::new(); mesh.cells.len()];
        for &c in &mesh.active {
            let cell = &mesh.cells[c];
            let geo = mesh.geometry(c);
            let mut local = Vec::with_capacity(n * n);
            for iy in 0..n {
                for ix in 0..n {
                    let bx = ix == 0 || ix == p;
                    let by = iy == 0 || iy == p;
                    let (key, sup) = if bx && by {
                        let v = cell.vertices[ix / p + 2 * (iy / p)];
                        (NodeKey::Vertex(v), DofSupport::Vertex(v))
                    } else if by {
                        let e = cell.edges[if iy == 0 { 2 } else { 3 }];
                        (NodeKey::Edge(e, ix - 1), DofSupport::Edge(e))
                    } else if bx {
                        let e = cell.edges[if ix == 0 { 0 } else { 1 }];
                        (NodeKey::Edge(e, iy - 1), DofSupport::Edge(e))
                    } else {
                        (NodeKey::Cell(c, ix + n * iy), DofSupport::Interior(c))
                    };
                    let next = support.len();
                    let g = *keys.entry(key).or_insert(next);
                    if g == next {
                        support.push(sup);
                        points.push(geo.map(element.nodes[ix + n * iy]));
                    }
                    local.push(g);
                }
            }
            cell_dofs[c] = local;
        }
        DofMap { family: DofFamily::Lagrange(p), cell_dofs, n_dofs: support.len(), support, points, keys }
    }

    /// Global indices of the `p + 1` nodes of an edge, ordered along its parameter.
    fn edge_dofs(&self, mesh: &Mesh, e: usize) -> Option<Vec<usize>> {
        let p = self.degree();
        let [a, b] = mesh.edges[e].vertices;
        let mut out = Vec::with_capacity(p + 1);
        out.push(*self.keys.get(&NodeKey::Vertex(a))?);
        for i in 0..p.saturating_sub(1) {
            out.push(*self.keys.get(&NodeKey::Edge(e, i))?);
        }
        out.push(*self.keys.get(&NodeKey::Vertex(b))?);
        Some(out)
    }
}

/// Affine relation `u_i = sum_m w_m u_m + g` for one constrained degree of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub masters: Vec<(usize, f64)>,
    pub inhomogeneity: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintSet {
    pub rows: BTreeMap<usize, Constraint>,
}

impl ConstraintSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_constrained(&self, i: usize) -> bool {
        self.rows.contains_key(&i)
    }

    /// Union of two sets; rows of `other` win on conflicts.
    pub fn merge(&mut self, other: &ConstraintSet) {
        for (&i, c) in &other.rows {
            self.rows.insert(i, c.clone());
        }
    }

    /// Substitutes constrained masters until no master is constrained.
    pub fn close(&mut self) {
        loop {
            let mut changed = false;
            let snapshot = self.rows.clone();
            for row in self.rows.values_mut() {
                if !row.masters.iter().any(|(m, _)| snapshot.contains_key(m)) {
                    continue;
                }
                changed = true;
                let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
                let mut g = row.inhomogeneity;
                for &(m, w) in &row.masters {
                    match snapshot.get(&m) {
                        Some(c) => {
                            g += w * c.inhomogeneity;
                            for &(mm, ww) in &c.masters {
                                *acc.entry(mm).or_insert(0.0) += w * ww;
                            }
                        }
                        None => *acc.entry(m).or_insert(0.0) += w,
                    }
                }
                row.masters = acc.into_iter().filter(|&(_, w)| w != 0.0).collect();
                row.inhomogeneity = g;
            }
            if !changed {
                break;
            }
        }
    }

    /// Overwrites constrained entries of `u` from their masters.
    pub fn distribute(&self, u: &mut [f64]) {
        for (&i, c) in &self.rows {
            u[i] = c.inhomogeneity + c.masters.iter().map(|&(m, w)| w * u[m]).sum::<f64>();
        }
    }

    /// Expansion of a global dof into unconstrained dofs: `(terms, inhomogeneity)`.
    pub fn expand(&self, i: usize) -> (Vec<(usize, f64)>, f64) {
        match self.rows.get(&i) {
            Some(c) => (c.masters.clone(), c.inhomogeneity),
            None => (vec![(i, 1.0)], 0.0),
        }
    }
}

/// Constraints making a Lagrange field continuous across hanging faces.
pub fn hanging_constraints(mesh: &Mesh, dofs: &DofMap) -> ConstraintSet {
    let p = dofs.degree();
    let mut set = ConstraintSet::new();
    for &c in &mesh.active {
        for s in 0..4 {
            let e = mesh.cells[c].edges[s];
            let Some(children) = mesh.edges[e].children else { continue };
            if mesh.edge_face[e].is_some() {
                continue;
            }
            let coarse = dofs.edge_dofs(mesh, e).expect("coarse side carries dofs");
            for (j, &ch) in children.iter().enumerate() {
                let fine = dofs.edge_dofs(mesh, ch).expect("fine half carries dofs");
                for (i, &dof) in fine.iter().enumerate() {
                    // skip the coarse endpoints shared with the fine edge
                    if (j == 0 && i == 0) || (j == 1 && i == p) {
                        continue;
                    }
                    let tau = (j as f64 + i as f64 / p as f64) * 0.5;
                    let (w, _, _) = lagrange_1d(p, tau);
                    let masters = coarse
                        .iter()
                        .enumerate()
                        .filter(|&(m, _)| w[m].abs() > 1e-15)
                        .map(|(m, &g)| (g, w[m]))
                        .collect();
                    set.rows.insert(dof, Constraint { masters, inhomogeneity: 0.0 });
                }
            }
        }
    }
    set.close();
    set
}

/// Nodal interpolation of `g` at all Lagrange nodes on Dirichlet faces.
pub fn dirichlet_constraints(mesh: &Mesh, dofs: &DofMap, g: impl Fn([f64; 2]) -> f64) -> ConstraintSet {
    let element = LagrangeElement::new(dofs.degree());
    let mut set = ConstraintSet::new();
    for f in &mesh.faces {
        if f.marker != BoundaryMarker::Dirichlet {
            continue;
        }
        let side = f.sides[0];
        for i in element.side_nodes(side.local_side) {
            let dof = dofs.cell_dofs[side.cell][i];
            set.rows.insert(dof, Constraint { masters: Vec::new(), inhomogeneity: g(dofs.points[dof]) });
        }
    }
    set
}

/// Hanging-node constraints combined with Dirichlet data `g`, chains resolved.
pub fn full_constraints(mesh: &Mesh, dofs: &DofMap, g: impl Fn([f64; 2]) -> f64) -> ConstraintSet {
    let mut set = hanging_constraints(mesh, dofs);
    set.merge(&dirichlet_constraints(mesh, dofs, g));
    set.close();
    set
}

/// A Lagrange finite element function with all constraints applied to its coefficients.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub dofs: Arc<DofMap>,
    pub coefficients: Vec<f64>,
}

impl ScalarField {
    /// Nodal interpolant of `f` made conforming by the hanging constraints.
    pub fn interpolate(mesh: &Mesh, dofs: Arc<DofMap>, f: impl Fn([f64; 2]) -> f64) -> ScalarField {
        let mut coefficients: Vec<f64> = dofs.points.iter().map(|&x| f(x)).collect();
        hanging_constraints(mesh, &dofs).distribute(&mut coefficients);
        ScalarField { dofs, coefficients }
    }

    pub fn local(&self, cell: usize) -> Vec<f64> {
        self.dofs.cell_dofs[cell].iter().map(|&g| self.coefficients[g]).collect()
    }

    /// Value and physical gradient at a reference point of a cell.
    pub fn eval_in_cell(&self, mesh: &Mesh, cell: usize, xi: [f64; 2]) -> (f64, [f64; 2]) {
        let element = LagrangeElement::new(self.dofs.degree());
        let (v, g) = element.eval(xi);
        let geo = mesh.geometry(cell);
        let mut val = 0.0;
        let mut grad = [0.0; 2];
        for (i, &d) in self.dofs.cell_dofs[cell].iter().enumerate() {
            let u = self.coefficients[d];
            val += u * v[i];
            grad[0] += u * g[i][0];
            grad[1] += u * g[i][1];
        }
        (val, geo.grad(grad))
    }

    /// Value and gradient at a physical point.
    pub fn evaluate(&self, mesh: &Mesh, x: [f64; 2]) -> Result<(f64, [f64; 2])> {
        let c = mesh.locate(x)?;
        let xi = mesh.geometry(c).pull_back(x);
        Ok(self.eval_in_cell(mesh, c, xi))
    }

    /// Plain-text export of the nodal values: one `x y value` line per degree of freedom.
    pub fn export_text(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::from("# x y value\n");
        for (p, v) in self.dofs.points.iter().zip(&self.coefficients) {
            let _ = writeln!(s, "{:.17e} {:.17e} {:.17e}", p[0], p[1], v);
        }
        s
    }
}
