//! Assembly and solution of the scalar Poisson problem `-div A grad u = F` in `Q^p` with
//! hanging-node and Dirichlet constraints, and the global minimum-norm flux problem in
//! broken Raviart–Thomas spaces coupled through face multipliers.

use crate::elements::{LagrangeElement, QuadratureRule, RtElement};
use crate::error::{Error, Result};
use crate::flux::{BrokenFluxField, Residual};
use crate::linalg::{solve_spd, CsrMatrix};
use crate::mesh::{BoundaryMarker, CellGeometry, Mesh};
use crate::space::{full_constraints, ConstraintSet, DofFamily, DofMap, ScalarField};
use nalgebra::{DMatrix, DVector};
use std::collections::HashMap;
use std::borrow::Cow;
use std::fmt;
use std::sync::Arc;

pub type Tensor = [[f64; 2]; 2];
type ScalarFn = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;

/// Relative residual used for every global CG solve.
pub const SOLVER_TOLERANCE: f64 = 1e-12;

/// Symmetric positive definite coefficient `A` of the operator.
#[derive(Clone)]
pub struct MetricTensor {
    eval: Arc<dyn Fn([f64; 2]) -> Tensor + Send + Sync>,
    pub is_identity: bool,
    pub is_cellwise_constant: bool,
}

impl fmt::Debug for MetricTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricTensor")
            .field("is_identity", &self.is_identity)
            .field("is_cellwise_constant", &self.is_cellwise_constant)
            .finish()
    }
}

fn check_spd(a: Tensor) -> Result<()> {
    let sym = (a[0][1] - a[1][0]).abs() <= 1e-12 * (a[0][0].abs() + a[1][1].abs());
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if !sym || a[0][0] <= 0.0 || det <= 0.0 {
        return Err(Error::InvalidArgument(format!("coefficient {a:?} is not symmetric positive definite")));
    }
    Ok(())
}

pub fn inverse(a: Tensor) -> Tensor {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    [[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]]
}

pub fn apply(a: Tensor, v: [f64; 2]) -> [f64; 2] {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

impl MetricTensor {
    pub fn identity() -> Self {
        MetricTensor { eval: Arc::new(|_| [[1.0, 0.0], [0.0, 1.0]]), is_identity: true, is_cellwise_constant: true }
    }

    pub fn constant(a: Tensor) -> Result<Self> {
        check_spd(a)?;
        Ok(MetricTensor { eval: Arc::new(move |_| a), is_identity: false, is_cellwise_constant: true })
    }

    /// A coefficient varying in space. `cellwise_constant` promises that it is constant on
    /// every cell of the meshes it will be used with.
    pub fn field(f: impl Fn([f64; 2]) -> Tensor + Send + Sync + 'static, cellwise_constant: bool) -> Self {
        MetricTensor { eval: Arc::new(f), is_identity: false, is_cellwise_constant: cellwise_constant }
    }

    pub fn at(&self, x: [f64; 2]) -> Tensor {
        (self.eval)(x)
    }

    /// Value at the cell center; exact for cellwise constant coefficients.
    pub fn on_cell(&self, geo: &CellGeometry) -> Tensor {
        self.at(geo.map([0.5, 0.5]))
    }

    /// Checks symmetry and positive definiteness at the given points.
    pub fn check_admissible(&self, points: &[[f64; 2]]) -> Result<()> {
        points.iter().try_for_each(|&x| check_spd(self.at(x)))
    }
}

/// Data of a Poisson problem: a volume density and optional Neumann data.
#[derive(Clone)]
pub struct RightHandSide {
    pub f: ScalarFn,
    pub g_neumann: Option<ScalarFn>,
    /// Circle `(center, radius)` across which `f` is not smooth; cells cut by it are
    /// integrated with a composite rule.
    pub kink: Option<([f64; 2], f64)>,
}

impl fmt::Debug for RightHandSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RightHandSide")
            .field("g_neumann", &self.g_neumann.is_some())
            .field("kink", &self.kink)
            .finish()
    }
}

impl RightHandSide {
    pub fn volume(f: impl Fn([f64; 2]) -> f64 + Send + Sync + 'static) -> Self {
        RightHandSide { f: Arc::new(f), g_neumann: None, kink: None }
    }

    pub fn zero() -> Self {
        Self::volume(|_| 0.0)
    }

    pub fn with_neumann(mut self, g: impl Fn([f64; 2]) -> f64 + Send + Sync + 'static) -> Self {
        self.g_neumann = Some(Arc::new(g));
        self
    }

    pub fn with_kink(mut self, center: [f64; 2], radius: f64) -> Self {
        self.kink = Some((center, radius));
        self
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        (self.f)(x)
    }

    pub fn neumann(&self, x: [f64; 2]) -> f64 {
        self.g_neumann.as_ref().map_or(0.0, |g| g(x))
    }

    fn is_cut(&self, mesh: &Mesh, cell: usize) -> bool {
        let Some((c, r)) = self.kink else { return false };
        let pts: Vec<[f64; 2]> = mesh.cells[cell].vertices.iter().map(|&v| mesh.vertices[v]).collect();
        let (lo, hi) = (pts[0], pts[3]);
        let nearest = [c[0].clamp(lo[0], hi[0]), c[1].clamp(lo[1], hi[1])];
        let dist = |p: [f64; 2]| ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt();
        let far = pts.iter().map(|&p| dist(p)).fold(0.0, f64::max);
        dist(nearest) < r && far > r
    }
}

/// Quadrature rules for data integrals, shared by load vectors and data projections so
/// that the projected data reproduces the load exactly.
#[derive(Debug, Clone)]
pub struct DataQuadrature {
    pub regular: QuadratureRule,
    /// Gauss points per slice direction on cells cut by a kink circle.
    pub cut_points: usize,
    /// Gauss points per face for Neumann data.
    pub face_points: usize,
}

impl DataQuadrature {
    pub fn for_degree(p: usize) -> Self {
        DataQuadrature {
            regular: QuadratureRule::tensor_gauss(p + 4),
            cut_points: p + 12,
            face_points: p + 3,
        }
    }

    /// The rule for `rhs` on `cell`; cells crossed by the kink circle get a rule sliced
    /// along the circle (meshes are axis aligned).
    pub fn rule<'a>(&'a self, rhs: &RightHandSide, mesh: &Mesh, cell: usize) -> Cow<'a, QuadratureRule> {
        match rhs.kink {
            Some((center, radius)) if rhs.is_cut(mesh, cell) => {
                let v = mesh.cells[cell].vertices;
                let (lo, hi) = (mesh.vertices[v[0]], mesh.vertices[v[3]]);
                Cow::Owned(QuadratureRule::circle_cut(lo, hi, center, radius, self.cut_points))
            }
            _ => Cow::Borrowed(&self.regular),
        }
    }
}

/// Reference stiffness blocks `int d_a phi_i d_b phi_j` of `Q^p`.
#[derive(Debug, Clone)]
pub struct StiffnessKernel {
    pub element: LagrangeElement,
    kxx: DMatrix<f64>,
    kxy: DMatrix<f64>,
    kyy: DMatrix<f64>,
    variable: QuadratureRule,
}

impl StiffnessKernel {
    pub fn new(p: usize) -> Self {
        let element = LagrangeElement::new(p);
        let n = element.n_dofs();
        let rule = QuadratureRule::tensor_gauss(p + 1);
        let mut kxx = DMatrix::zeros(n, n);
        let mut kxy = DMatrix::zeros(n, n);
        let mut kyy = DMatrix::zeros(n, n);
        for (&pt, &w) in rule.points.iter().zip(&rule.weights) {
            let (_, g) = element.eval(pt);
            for i in 0..n {
                for j in 0..n {
                    kxx[(i, j)] += w * g[i][0] * g[j][0];
                    kxy[(i, j)] += w * g[i][0] * g[j][1];
                    kyy[(i, j)] += w * g[i][1] * g[j][1];
                }
            }
        }
        StiffnessKernel { element, kxx, kxy, kyy, variable: QuadratureRule::tensor_gauss(p + 3) }
    }

    /// Local matrix `int A grad phi_j . grad phi_i` on one cell.
    pub fn local(&self, mesh: &Mesh, a: &MetricTensor, cell: usize) -> DMatrix<f64> {
        let geo = mesh.geometry(cell);
        if a.is_cellwise_constant {
            let g = reference_weight(&geo, a.on_cell(&geo));
            return &self.kxx * g[0][0] + &self.kxy * g[0][1] + self.kxy.transpose() * g[1][0] + &self.kyy * g[1][1];
        }
        let n = self.element.n_dofs();
        let mut k = DMatrix::zeros(n, n);
        for (&pt, &w) in self.variable.points.iter().zip(&self.variable.weights) {
            let g = reference_weight(&geo, a.at(geo.map(pt)));
            let (_, gr) = self.element.eval(pt);
            for i in 0..n {
                let gi = apply(g, gr[i]);
                for j in 0..n {
                    k[(i, j)] += w * (gi[0] * gr[j][0] + gi[1] * gr[j][1]);
                }
            }
        }
        k
    }
}

/// `det J * J^{-1} A J^{-T}`, the weight turning reference gradient products into physical
/// `A`-weighted integrals.
pub fn reference_weight(geo: &CellGeometry, a: Tensor) -> Tensor {
    let inv = geo.inv;
    let mut out = [[0.0; 2]; 2];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            let mut s = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    s += inv[r][i] * a[i][j] * inv[c][j];
                }
            }
            *v = s * geo.det;
        }
    }
    out
}

/// Load vector entries `F(phi_i)` of one cell, Neumann faces included.
pub fn local_load(
    mesh: &Mesh,
    element: &LagrangeElement,
    rhs: &RightHandSide,
    quad: &DataQuadrature,
    cell: usize,
) -> Vec<f64> {
    let geo = mesh.geometry(cell);
    let rule = quad.rule(rhs, mesh, cell);
    let mut out = vec![0.0; element.n_dofs()];
    for (&pt, &w) in rule.points.iter().zip(&rule.weights) {
        let f = rhs.eval(geo.map(pt)) * w * geo.det;
        if f == 0.0 {
            continue;
        }
        let (v, _) = element.eval(pt);
        for (o, vi) in out.iter_mut().zip(v) {
            *o += f * vi;
        }
    }
    if rhs.g_neumann.is_some() {
        let gauss = crate::elements::GaussRule1d::new(quad.face_points);
        for s in 0..4 {
            for &f in &mesh.cell_faces[cell][s] {
                let face = &mesh.faces[f];
                if face.marker != BoundaryMarker::Neumann {
                    continue;
                }
                for (&t, &w) in gauss.points.iter().zip(&gauss.weights) {
                    let xi = side_point(s, t);
                    let g = rhs.neumann(geo.map(xi)) * w * face.length;
                    let (v, _) = element.eval(xi);
                    for (o, vi) in out.iter_mut().zip(v) {
                        *o += g * vi;
                    }
                }
            }
        }
    }
    out
}

/// Reference point at parameter `t` of local side `s`.
pub fn side_point(s: usize, t: f64) -> [f64; 2] {
    match s {
        0 => [0.0, t],
        1 => [1.0, t],
        2 => [t, 0.0],
        _ => [t, 1.0],
    }
}

/// A Galerkin problem discretized on one mesh.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub dofs: Arc<DofMap>,
    pub constraints: ConstraintSet,
}

impl Discretization {
    pub fn new(mesh: &Mesh, p: usize, g_dirichlet: impl Fn([f64; 2]) -> f64) -> Self {
        let dofs = Arc::new(DofMap::distribute(mesh, DofFamily::Lagrange(p)));
        let constraints = full_constraints(mesh, &dofs, g_dirichlet);
        Discretization { dofs, constraints }
    }
}

/// Solves `<A grad u_h, grad v_h> = F(v_h)` over the constrained space.
pub fn solve_scalar(
    mesh: &Mesh,
    disc: &Discretization,
    a: &MetricTensor,
    rhs: &RightHandSide,
    quad: &DataQuadrature,
) -> Result<ScalarField> {
    let dofs = &disc.dofs;
    let cons = &disc.constraints;
    let kernel = StiffnessKernel::new(dofs.degree());
    let mut free_index = vec![usize::MAX; dofs.n_dofs];
    let mut n_free = 0;
    for (i, slot) in free_index.iter_mut().enumerate() {
        if !cons.is_constrained(i) {
            *slot = n_free;
            n_free += 1;
        }
    }
    let expansions: HashMap<usize, (Vec<(usize, f64)>, f64)> =
        cons.rows.iter().map(|(&i, c)| (i, (c.masters.clone(), c.inhomogeneity))).collect();
    let expand = |i: usize| -> (Vec<(usize, f64)>, f64) {
        match expansions.get(&i) {
            Some((m, g)) => (m.iter().map(|&(j, w)| (free_index[j], w)).collect(), *g),
            None => (vec![(free_index[i], 1.0)], 0.0),
        }
    };
    let mut triplets = Vec::new();
    let mut b = vec![0.0; n_free];
    for &c in &mesh.active {
        let k = kernel.local(mesh, a, c);
        let load = local_load(mesh, &kernel.element, rhs, quad, c);
        let local: Vec<(Vec<(usize, f64)>, f64)> = dofs.cell_dofs[c].iter().map(|&g| expand(g)).collect();
        for (i, (ti, _)) in local.iter().enumerate() {
            for &(fi, wi) in ti {
                b[fi] += wi * load[i];
                for (j, (tj, gj)) in local.iter().enumerate() {
                    let kij = k[(i, j)];
                    if *gj != 0.0 {
                        b[fi] -= wi * kij * gj;
                    }
                    for &(fj, wj) in tj {
                        triplets.push((fi, fj, wi * wj * kij));
                    }
                }
            }
        }
    }
    let matrix = CsrMatrix::from_triplets(n_free, triplets);
    let pure_neumann = !mesh.faces.iter().any(|f| f.marker == BoundaryMarker::Dirichlet);
    if pure_neumann {
        let total: f64 = b.iter().sum();
        let scale: f64 = b.iter().map(|x| x.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
        if total.abs() > 1e-10 * scale {
            return Err(Error::Incompatible(format!("pure Neumann data has nonzero mean {total:e}")));
        }
    }
    let sol = solve_spd(&matrix, &b, SOLVER_TOLERANCE)?;
    log::debug!("scalar solve: {} unknowns, {} iterations, residual {:e}", n_free, sol.iterations, sol.residual);
    let mut coefficients = vec![0.0; dofs.n_dofs];
    for (i, &fi) in free_index.iter().enumerate() {
        if fi != usize::MAX {
            coefficients[i] = sol.x[fi];
        }
    }
    cons.distribute(&mut coefficients);
    let mut field = ScalarField { dofs: dofs.clone(), coefficients };
    if pure_neumann {
        let mean = integrate_field(mesh, &field) / mesh.total_area();
        field.coefficients.iter_mut().for_each(|c| *c -= mean);
    }
    Ok(field)
}

/// `int u_h` over the domain.
pub fn integrate_field(mesh: &Mesh, u: &ScalarField) -> f64 {
    let element = LagrangeElement::new(u.dofs.degree());
    let rule = QuadratureRule::tensor_gauss(u.dofs.degree() + 1);
    let weights: Vec<f64> =
        (0..element.n_dofs()).map(|i| rule.integrate(|x| element.eval(x).0[i])).collect();
    mesh.active
        .iter()
        .map(|&c| {
            let det = mesh.geometry(c).det;
            u.local(c).iter().zip(&weights).map(|(a, w)| a * w).sum::<f64>() * det
        })
        .sum()
}

/// Primal Galerkin solution with Dirichlet data `g_dirichlet`.
pub fn solve_primal(
    mesh: &Mesh,
    p: usize,
    a: &MetricTensor,
    rhs: &RightHandSide,
    g_dirichlet: impl Fn([f64; 2]) -> f64,
) -> Result<ScalarField> {
    let disc = Discretization::new(mesh, p, g_dirichlet);
    solve_scalar(mesh, &disc, a, rhs, &DataQuadrature::for_degree(p))
}

/// Dual Galerkin solution for a goal functional given by its density, with homogeneous
/// Dirichlet data.
pub fn solve_dual(mesh: &Mesh, p: usize, a: &MetricTensor, goal: &RightHandSide) -> Result<ScalarField> {
    solve_primal(mesh, p, a, goal, |_| 0.0)
}

/// `<A grad u, grad v>` for two fields on the same mesh and space.
pub fn energy_product(mesh: &Mesh, a: &MetricTensor, u: &ScalarField, v: &ScalarField) -> f64 {
    let kernel = StiffnessKernel::new(u.dofs.degree());
    mesh.active
        .iter()
        .map(|&c| {
            let k = kernel.local(mesh, a, c);
            let (ul, vl) = (DVector::from_vec(u.local(c)), DVector::from_vec(v.local(c)));
            ul.dot(&(&k * vl))
        })
        .sum()
}

/// Per-cell condensation of the divergence constraint: the `A^{-1}`-mass matrix `M`,
/// `P = M^{-1} - M^{-1} B^T (B M^{-1} B^T)^{-1} B M^{-1}` and `Q = M^{-1} B^T (B M^{-1} B^T)^{-1}`.
struct CellCondensation {
    mass: DMatrix<f64>,
    p: DMatrix<f64>,
    q: DMatrix<f64>,
}

fn condense(rt: &RtElement, g: Tensor) -> Result<CellCondensation> {
    let mass = rt.mass(g);
    let chol = mass
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("flux mass matrix is not positive definite".into()))?;
    let minv = chol.inverse();
    let b = &rt.div_moments;
    let minv_bt = &minv * b.transpose();
    let s = b * &minv_bt;
    let s_inv = s
        .cholesky()
        .ok_or_else(|| Error::RankDeficient { nullity: 1, allowed: 0 })?
        .inverse();
    let q = &minv_bt * s_inv;
    let p = &minv - &q * minv_bt.transpose();
    Ok(CellCondensation { mass, p, q })
}

/// `J^T A^{-1} J / det J`: reference weight of the `A^{-1}`-mass of Piola-mapped fields.
pub fn flux_mass_weight(geo: &CellGeometry, a: Tensor) -> Tensor {
    let ai = inverse(a);
    let j = geo.jac;
    let mut out = [[0.0; 2]; 2];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            let mut s = 0.0;
            for i in 0..2 {
                for l in 0..2 {
                    s += j[i][r] * ai[i][l] * j[l][c];
                }
            }
            *v = s / geo.det;
        }
    }
    out
}

/// Outward sign of the positive-axis normal on reference side `s`.
pub fn outward_sign(s: usize) -> f64 {
    if s % 2 == 0 {
        -1.0
    } else {
        1.0
    }
}

/// Right-hand sides of the flux constraints of one cell: `-det J int R_K P_a P_b` for
/// `a, b < k`.
pub fn cell_divergence_data(residual: &Residual, mesh: &Mesh, cell: usize, k: usize) -> DVector<f64> {
    let det = mesh.geometry(cell).det;
    let n = residual.degree + 1;
    let coef = &residual.cell_part[cell];
    DVector::from_fn(k * k, |r, _| {
        let (a, b) = (r % k, r / k);
        if a < n && b < n {
            -det * coef[a + n * b] / ((2 * a + 1) * (2 * b + 1)) as f64
        } else {
            0.0
        }
    })
}

/// Minimum-`A`-norm broken flux `w` of index `k` with `-div w = R_K` on every cell and
/// `sum w . n_out = R_F` on every fine face not on the Dirichlet boundary.
pub fn solve_global_mixed_flux(
    mesh: &Mesh,
    k: usize,
    a: &MetricTensor,
    residual: &Residual,
) -> Result<BrokenFluxField> {
    if !a.is_cellwise_constant {
        return Err(Error::Incompatible("flux reconstruction needs a cellwise constant coefficient".into()));
    }
    if residual.degree + 1 > k {
        return Err(Error::Incompatible(format!(
            "residual of degree {} is not representable with flux index {k}",
            residual.degree
        )));
    }
    let rt = RtElement::new(k);
    let mut face_index = vec![usize::MAX; mesh.faces.len()];
    let mut n_mult = 0;
    for (f, face) in mesh.faces.iter().enumerate() {
        if face.marker != BoundaryMarker::Dirichlet {
            face_index[f] = n_mult;
            n_mult += 1;
        }
    }
    let n = n_mult * k;
    let mut cache: HashMap<[u64; 4], Arc<CellCondensation>> = HashMap::new();
    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; n];
    for (f, face) in mesh.faces.iter().enumerate() {
        if face_index[f] == usize::MAX {
            continue;
        }
        let data = residual.face_part[f].clone();
        for l in 0..k.min(data.len()) {
            rhs[face_index[f] * k + l] += face.length * data[l] / (2 * l + 1) as f64;
        }
    }
    struct CellData {
        cond: Arc<CellCondensation>,
        c: DMatrix<f64>,
        rows: Vec<usize>,
        w0: DVector<f64>,
    }
    let mut cells = Vec::with_capacity(mesh.active.len());
    for &cell in &mesh.active {
        let geo = mesh.geometry(cell);
        let g = flux_mass_weight(&geo, a.on_cell(&geo));
        let key = [g[0][0].to_bits(), g[0][1].to_bits(), g[1][0].to_bits(), g[1][1].to_bits()];
        let cond = match cache.get(&key) {
            Some(c) => c.clone(),
            None => {
                let c = Arc::new(condense(&rt, g)?);
                cache.insert(key, c.clone());
                c
            }
        };
        let mut rows = Vec::new();
        let mut blocks = Vec::new();
        for s in 0..4 {
            for &f in &mesh.cell_faces[cell][s] {
                if face_index[f] == usize::MAX {
                    continue;
                }
                let side = mesh.faces[f].sides.iter().find(|x| x.cell == cell).expect("face side of its cell");
                let t = rt.side_trace_moments(side.range.0, side.range.1) * outward_sign(s);
                for l in 0..k {
                    rows.push(face_index[f] * k + l);
                }
                blocks.push((s, t));
            }
        }
        let mut c = DMatrix::zeros(rows.len(), rt.dim);
        for (bi, (s, t)) in blocks.iter().enumerate() {
            for l in 0..k {
                for m in 0..k {
                    c[(bi * k + l, rt.side_dof(*s, m))] = t[(l, m)];
                }
            }
        }
        let d = cell_divergence_data(residual, mesh, cell, k);
        let w0 = &cond.q * d;
        let local_s = &c * &cond.p * c.transpose();
        let cw0 = &c * &w0;
        for (i, &ri) in rows.iter().enumerate() {
            rhs[ri] -= cw0[i];
            for (j, &rj) in rows.iter().enumerate() {
                triplets.push((ri, rj, local_s[(i, j)]));
            }
        }
        cells.push(CellData { cond, c, rows, w0 });
    }
    let matrix = CsrMatrix::from_triplets(n, triplets);
    let mu = if n == 0 {
        Vec::new()
    } else {
        let sol = solve_spd(&matrix, &rhs, SOLVER_TOLERANCE)?;
        log::debug!("hybridized flux solve: {} multipliers, {} iterations", n, sol.iterations);
        sol.x
    };
    let mut out = BrokenFluxField::zeros(mesh, k);
    for (&cell, data) in mesh.active.iter().zip(cells) {
        let local_mu = DVector::from_iterator(data.rows.len(), data.rows.iter().map(|&r| mu[r]));
        let w = &data.cond.p * (data.c.transpose() * local_mu) + &data.w0;
        debug_assert_eq!(data.cond.mass.nrows(), w.len());
        out.coefficients[cell] = w.as_slice().to_vec();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::DomainSpec;
    use std::collections::BTreeSet;

    #[test]
    fn linear_dirichlet_data_is_reproduced() {
        let m = Mesh::build_uniform(DomainSpec::UnitSquare, 2).unwrap();
        let m = m.refine(&BTreeSet::from([0])).unwrap();
        for p in 1..=3 {
            let u = solve_primal(&m, p, &MetricTensor::identity(), &RightHandSide::zero(), |x| x[0]).unwrap();
            for (pt, v) in u.dofs.points.iter().zip(&u.coefficients) {
                assert!((v - pt[0]).abs() < 1e-10, "p={p}");
            }
        }
    }

    #[test]
    fn q2_bubble_is_exact() {
        let m = Mesh::build_uniform(DomainSpec::UnitSquare, 4).unwrap();
        let exact = |x: [f64; 2]| x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]);
        let f = |x: [f64; 2]| 2.0 * (x[1] * (1.0 - x[1]) + x[0] * (1.0 - x[0]));
        let u = solve_primal(&m, 2, &MetricTensor::identity(), &RightHandSide::volume(f), |_| 0.0).unwrap();
        for &pt in &[[0.3, 0.4], [0.77, 0.12]] {
            assert!((u.evaluate(&m, pt).unwrap().0 - exact(pt)).abs() < 1e-10);
        }
    }

    #[test]
    fn discrete_duality() {
        let m = Mesh::build_uniform(DomainSpec::Slit, 4).unwrap();
        let m = m.refine(&BTreeSet::from([5, 6])).unwrap();
        let a = MetricTensor::identity();
        let f = RightHandSide::volume(|x| 1.0 + x[0]);
        let j = RightHandSide::volume(|x| (x[1] * 3.0).sin());
        let u = solve_primal(&m, 1, &a, &f, |_| 0.0).unwrap();
        let z = solve_dual(&m, 1, &a, &j).unwrap();
        let quad = DataQuadrature::for_degree(1);
        let apply = |data: &RightHandSide, v: &ScalarField| -> f64 {
            let e = LagrangeElement::new(1);
            m.active
                .iter()
                .map(|&c| {
                    let l = local_load(&m, &e, data, &quad, c);
                    l.iter().zip(v.local(c)).map(|(a, b)| a * b).sum::<f64>()
                })
                .sum()
        };
        let ju = apply(&j, &u);
        let fz = apply(&f, &z);
        assert!((ju - fz).abs() < 1e-10 * ju.abs());
        assert!((ju - energy_product(&m, &a, &u, &z)).abs() < 1e-10 * ju.abs());
    }

    #[test]
    fn anisotropic_constant_coefficient() {
        let m = Mesh::build_uniform(DomainSpec::UnitSquare, 4).unwrap();
        let a = MetricTensor::constant([[2.0, 0.5], [0.5, 1.0]]).unwrap();
        // u = x^2 has -div A grad u = -4
        let u = solve_primal(&m, 2, &a, &RightHandSide::volume(|_| -4.0), |x| x[0] * x[0]).unwrap();
        assert!((u.evaluate(&m, [0.3, 0.6]).unwrap().0 - 0.09).abs() < 1e-10);
        assert!(MetricTensor::constant([[1.0, 2.0], [2.0, 1.0]]).is_err());
    }

    #[test]
    fn pure_neumann_problem_has_zero_mean() {
        let mut m = Mesh::build_uniform(DomainSpec::UnitSquare, 4).unwrap();
        m.set_boundary_markers(|_| BoundaryMarker::Neumann);
        let pi = std::f64::consts::PI;
        let rhs = RightHandSide::volume(move |x| 2.0 * pi * pi * (pi * x[0]).cos() * (pi * x[1]).cos());
        let u = solve_primal(&m, 2, &MetricTensor::identity(), &rhs, |_| 0.0).unwrap();
        assert!(integrate_field(&m, &u).abs() < 1e-10);
        let v = u.evaluate(&m, [0.0, 0.0]).unwrap().0;
        assert!((v - 1.0).abs() < 0.02, "{v}");
        assert!(solve_primal(&m, 1, &MetricTensor::identity(), &RightHandSide::volume(|_| 1.0), |_| 0.0).is_err());
    }

    #[test]
    fn galerkin_orthogonality_on_nested_meshes() {
        let coarse = Mesh::build_uniform(DomainSpec::UnitSquare, 4).unwrap();
        let fine = coarse.refine_uniform();
        let a = MetricTensor::identity();
        let f = RightHandSide::volume(|x| (3.0 * x[0]).exp() * x[1]);
        let uc = solve_primal(&coarse, 1, &a, &f, |_| 0.0).unwrap();
        let uf = solve_primal(&fine, 1, &a, &f, |_| 0.0).unwrap();
        // prolongate the coarse solution and hat functions to the fine mesh
        let fd = uf.dofs.clone();
        let prolong = |v: &ScalarField| ScalarField::interpolate(&fine, fd.clone(), |x| v.evaluate(&coarse, x).unwrap().0);
        let diff = {
            let uc_f = prolong(&uc);
            let c: Vec<f64> = uf.coefficients.iter().zip(&uc_f.coefficients).map(|(a, b)| a - b).collect();
            ScalarField { dofs: fd.clone(), coefficients: c }
        };
        for i in 0..uc.dofs.n_dofs {
            let mut e = vec![0.0; uc.dofs.n_dofs];
            e[i] = 1.0;
            let hat = ScalarField { dofs: uc.dofs.clone(), coefficients: e };
            let pt = uc.dofs.points[i];
            if pt[0] == 0.0 || pt[1] == 0.0 || pt[0] == 1.0 || pt[1] == 1.0 {
                continue;
            }
            let hf = prolong(&hat);
            let val = energy_product(&fine, &a, &diff, &hf);
            assert!(val.abs() < 1e-9 * energy_product(&fine, &a, &hf, &hf).sqrt());
        }
    }
}
