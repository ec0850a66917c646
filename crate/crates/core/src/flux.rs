//! Distributional residual of a Galerkin solution and its equilibrated flux
//! reconstruction by vertex-patch problems.
//!
//! Flux fields are stored as broken Raviart–Thomas coefficients of `A` times the flux, so
//! divergence and normal-trace constraints are linear in the coefficients and the energy
//! norm is `int w . A^{-1} w`.

use crate::elements::poly::legendre;
use crate::elements::{GaussRule1d, LagrangeElement, QuadratureRule, RtElement};
use crate::error::{Error, Result};
use crate::galerkin::{
    apply, flux_mass_weight, outward_sign, reference_weight, side_point, DataQuadrature,
    MetricTensor, RightHandSide, Tensor,
};
use crate::linalg::SaddleOperator;
use crate::mesh::{BoundaryMarker, Mesh, Patch};
use crate::space::ScalarField;
use nalgebra::{DMatrix, DVector};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

/// Cellwise and facewise polynomial representation of `F_h + div A grad u_h`.
///
/// Cell parts are Legendre coefficients `a + (p + 1) b` of `P_a(x) P_b(y)` on the reference
/// cell. Face parts are Legendre coefficients in the face parameter of
/// `-sum_sides A grad u_h . n_out` on interior faces, `g_N - A grad u_h . n` on Neumann
/// faces and zero on Dirichlet faces.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub degree: usize,
    pub cell_part: Vec<Vec<f64>>,
    pub face_part: Vec<Vec<f64>>,
    /// Legendre coefficients of the projected data `F_h` alone.
    pub data_projection: Vec<Vec<f64>>,
}

fn legendre_2d(n: usize, coef: &[f64], xi: [f64; 2]) -> f64 {
    let px = legendre(n, xi[0]);
    let py = legendre(n, xi[1]);
    let mut s = 0.0;
    for b in 0..n {
        for a in 0..n {
            s += coef[a + n * b] * px[a] * py[b];
        }
    }
    s
}

fn legendre_1d(coef: &[f64], t: f64) -> f64 {
    legendre(coef.len(), t).iter().zip(coef).map(|(p, c)| p * c).sum()
}

fn outward_normal(geo: &crate::mesh::CellGeometry, s: usize) -> [f64; 2] {
    let sign = outward_sign(s);
    let nr = if s < 2 { [sign, 0.0] } else { [0.0, sign] };
    let n = [geo.inv[0][0] * nr[0] + geo.inv[1][0] * nr[1], geo.inv[0][1] * nr[0] + geo.inv[1][1] * nr[1]];
    let len = (n[0] * n[0] + n[1] * n[1]).sqrt();
    [n[0] / len, n[1] / len]
}

impl Residual {
    /// `r_h(v)` for a scalar field on the same mesh.
    pub fn apply(&self, mesh: &Mesh, v: &ScalarField) -> f64 {
        let pv = v.dofs.degree();
        let n = self.degree + 1;
        let rule = QuadratureRule::tensor_gauss(self.degree + pv + 1);
        let element = LagrangeElement::new(pv);
        let mut total = 0.0;
        for &c in &mesh.active {
            let det = mesh.geometry(c).det;
            let local = v.local(c);
            total += det
                * rule.integrate(|xi| {
                    let (phi, _) = element.eval(xi);
                    legendre_2d(n, &self.cell_part[c], xi) * phi.iter().zip(&local).map(|(a, b)| a * b).sum::<f64>()
                });
        }
        let gauss = GaussRule1d::new(self.degree + pv + 1);
        for (f, face) in mesh.faces.iter().enumerate() {
            let side = face.sides[0];
            total += face.length
                * gauss.integrate(|t| {
                    let tau = side.range.0 + (side.range.1 - side.range.0) * t;
                    let xi = side_point(side.local_side, tau);
                    legendre_1d(&self.face_part[f], t) * v.eval_in_cell(mesh, side.cell, xi).0
                });
        }
        total
    }
}

/// Residual of `u_h` for the data `rhs`, with `F_h` the cellwise `Q^p` projection of the
/// volume data under the load quadrature.
pub fn compute_residual(
    mesh: &Mesh,
    a: &MetricTensor,
    rhs: &RightHandSide,
    quad: &DataQuadrature,
    u: &ScalarField,
) -> Result<Residual> {
    if !a.is_cellwise_constant {
        return Err(Error::Incompatible("the residual needs a cellwise constant coefficient".into()));
    }
    if u.dofs.cell_dofs.len() != mesh.cells.len() {
        return Err(Error::Incompatible("field and mesh do not match".into()));
    }
    let p = u.dofs.degree();
    let n = p + 1;
    let element = LagrangeElement::new(p);
    let hess_rule = QuadratureRule::tensor_gauss(n);
    let hess_tab: Vec<(Vec<f64>, Vec<f64>, Vec<[f64; 3]>)> = hess_rule
        .points
        .iter()
        .map(|&pt| (legendre(n, pt[0]), legendre(n, pt[1]), element.hessians(pt)))
        .collect();
    let norm = |a: usize, b: usize| ((2 * a + 1) * (2 * b + 1)) as f64;
    let mut cell_part = vec![Vec::new(); mesh.cells.len()];
    let mut data_projection = vec![Vec::new(); mesh.cells.len()];
    for &c in &mesh.active {
        let geo = mesh.geometry(c);
        let at = a.on_cell(&geo);
        let rule = quad.rule(rhs, mesh, c);
        let mut fh = vec![0.0; n * n];
        for (&pt, &w) in rule.points.iter().zip(&rule.weights) {
            let f = rhs.eval(geo.map(pt)) * w;
            if f == 0.0 {
                continue;
            }
            let px = legendre(n, pt[0]);
            let py = legendre(n, pt[1]);
            for b in 0..n {
                for aa in 0..n {
                    fh[aa + n * b] += f * px[aa] * py[b] * norm(aa, b);
                }
            }
        }
        let local = u.local(c);
        let inv = geo.inv;
        let mut part = fh.clone();
        for ((px, py, hs), &w) in hess_tab.iter().zip(&hess_rule.weights) {
            let mut h = [[0.0; 2]; 2];
            for (ui, hr) in local.iter().zip(hs) {
                h[0][0] += ui * hr[0];
                h[0][1] += ui * hr[1];
                h[1][1] += ui * hr[2];
            }
            h[1][0] = h[0][1];
            let mut div = 0.0;
            for r in 0..2 {
                for s in 0..2 {
                    let mut phys = 0.0;
                    for i in 0..2 {
                        for j in 0..2 {
                            phys += inv[i][r] * h[i][j] * inv[j][s];
                        }
                    }
                    div += at[r][s] * phys;
                }
            }
            for b in 0..n {
                for aa in 0..n {
                    part[aa + n * b] += w * div * px[aa] * py[b] * norm(aa, b);
                }
            }
        }
        cell_part[c] = part;
        data_projection[c] = fh;
    }
    let gauss = GaussRule1d::new(quad.face_points);
    let mut face_part = Vec::with_capacity(mesh.faces.len());
    for face in &mesh.faces {
        let mut coef = vec![0.0; n];
        if face.marker != BoundaryMarker::Dirichlet {
            for (&t, &w) in gauss.points.iter().zip(&gauss.weights) {
                let mut r = 0.0;
                for side in &face.sides {
                    let geo = mesh.geometry(side.cell);
                    let tau = side.range.0 + (side.range.1 - side.range.0) * t;
                    let (_, grad) = u.eval_in_cell(mesh, side.cell, side_point(side.local_side, tau));
                    let flux = apply(a.on_cell(&geo), grad);
                    let nn = outward_normal(&geo, side.local_side);
                    r -= flux[0] * nn[0] + flux[1] * nn[1];
                }
                if face.marker == BoundaryMarker::Neumann {
                    let side = face.sides[0];
                    let x = mesh.geometry(side.cell).map(side_point(side.local_side, t));
                    r += rhs.neumann(x);
                }
                let pl = legendre(n, t);
                for l in 0..n {
                    coef[l] += w * r * pl[l] * (2 * l + 1) as f64;
                }
            }
        }
        face_part.push(coef);
    }
    Ok(Residual { degree: p, cell_part, face_part, data_projection })
}

/// Per-cell Raviart–Thomas coefficient blocks with no continuity implied.
#[derive(Debug, Clone, PartialEq)]
pub struct BrokenFluxField {
    pub k: usize,
    /// Indexed by cell id; empty for inactive cells.
    pub coefficients: Vec<Vec<f64>>,
}

impl BrokenFluxField {
    pub fn zeros(mesh: &Mesh, k: usize) -> Self {
        let dim = 2 * k * (k + 1);
        let mut coefficients = vec![Vec::new(); mesh.cells.len()];
        for &c in &mesh.active {
            coefficients[c] = vec![0.0; dim];
        }
        BrokenFluxField { k, coefficients }
    }

    /// Canonical interpolant of `A grad u`, exact when `u` is cellwise `Q^{k-2}` or better.
    pub fn interpolate_gradient(mesh: &Mesh, a: &MetricTensor, u: &ScalarField, k: usize) -> Self {
        let rt = RtElement::new(k);
        let element = LagrangeElement::new(u.dofs.degree());
        let mut out = Self::zeros(mesh, k);
        for &c in &mesh.active {
            let geo = mesh.geometry(c);
            let g = reference_weight(&geo, a.on_cell(&geo));
            let local = u.local(c);
            out.coefficients[c] = rt.dofs_of_field(k + u.dofs.degree() + 1, |xi| {
                let (_, gr) = element.eval(xi);
                let mut ref_grad = [0.0; 2];
                for (ui, gi) in local.iter().zip(&gr) {
                    ref_grad[0] += ui * gi[0];
                    ref_grad[1] += ui * gi[1];
                }
                apply(g, ref_grad)
            });
        }
        out
    }

    pub fn add(&self, other: &BrokenFluxField) -> Result<BrokenFluxField> {
        self.combine(other, 1.0)
    }

    pub fn sub(&self, other: &BrokenFluxField) -> Result<BrokenFluxField> {
        self.combine(other, -1.0)
    }

    fn combine(&self, other: &BrokenFluxField, s: f64) -> Result<BrokenFluxField> {
        if self.k != other.k || self.coefficients.len() != other.coefficients.len() {
            return Err(Error::Incompatible("flux fields live on different spaces".into()));
        }
        let coefficients = self
            .coefficients
            .iter()
            .zip(&other.coefficients)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + s * y).collect())
            .collect();
        Ok(BrokenFluxField { k: self.k, coefficients })
    }

    /// `int_K w . A^{-1} v` for every active cell, in the order of `mesh.active`.
    pub fn cell_products(&self, mesh: &Mesh, a: &MetricTensor, other: &BrokenFluxField) -> Result<Vec<f64>> {
        if self.k != other.k {
            return Err(Error::Incompatible("flux fields live on different spaces".into()));
        }
        let rt = RtElement::new(self.k);
        let mut cache: HashMap<[u64; 4], DMatrix<f64>> = HashMap::new();
        Ok(mesh
            .active
            .iter()
            .map(|&c| {
                let geo = mesh.geometry(c);
                let g = flux_mass_weight(&geo, a.on_cell(&geo));
                let key = [g[0][0].to_bits(), g[0][1].to_bits(), g[1][0].to_bits(), g[1][1].to_bits()];
                let m = cache.entry(key).or_insert_with(|| rt.mass(g));
                let w = DVector::from_column_slice(&self.coefficients[c]);
                let v = DVector::from_column_slice(&other.coefficients[c]);
                w.dot(&(&*m * v))
            })
            .collect())
    }

    /// `||w||^2` in the `A^{-1}`-weighted norm.
    pub fn norm_squared(&self, mesh: &Mesh, a: &MetricTensor) -> f64 {
        self.cell_products(mesh, a, self).map(|v| v.iter().sum()).unwrap_or(0.0)
    }

    /// Physical value and divergence at a reference point of a cell.
    pub fn eval(&self, mesh: &Mesh, rt: &RtElement, cell: usize, xi: [f64; 2]) -> ([f64; 2], f64) {
        let geo = mesh.geometry(cell);
        let (vals, divs) = rt.eval(xi);
        let mut v = [0.0; 2];
        let mut d = 0.0;
        for ((c, val), dv) in self.coefficients[cell].iter().zip(&vals).zip(&divs) {
            v[0] += c * val[0];
            v[1] += c * val[1];
            d += c * dv;
        }
        (geo.piola(v), d / geo.det)
    }

    /// Plain-text export of cell-center values: `x y w_x w_y` per active cell.
    pub fn export_text(&self, mesh: &Mesh) -> String {
        let rt = RtElement::new(self.k);
        let mut s = String::from("# x y wx wy\n");
        for &c in &mesh.active {
            let x = mesh.geometry(c).map([0.5, 0.5]);
            let (v, _) = self.eval(mesh, &rt, c, [0.5, 0.5]);
            let _ = writeln!(s, "{:.17e} {:.17e} {:.17e} {:.17e}", x[0], x[1], v[0], v[1]);
        }
        s
    }
}

/// One block of `k` flux constraints: the sum over `sides` of the outward normal flux
/// moments equals `data`. Each side is `(patch cell index, local side, parameter range)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxConstraint {
    pub sides: Vec<(usize, usize, (f64, f64))>,
    pub data: DVector<f64>,
}

/// The residual multiplied by the hat function of a patch center, as flux constraint data.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalResidual {
    /// Per patch cell: `-det J int psi R_K P_a P_b`, `a, b < k`.
    pub cell_data: Vec<DVector<f64>>,
    /// Interior and prescribed-flux constraints with data `int psi R_F P_l`, `l < k`.
    pub face_data: Vec<FluxConstraint>,
    /// Faces whose normal flux is left free.
    pub free_faces: Vec<usize>,
    /// `r_h(psi)`, zero for equilibrated residuals.
    pub total: f64,
}

fn bilinear(psi: [f64; 4], xi: [f64; 2]) -> f64 {
    let [x, y] = xi;
    psi[0] * (1.0 - x) * (1.0 - y) + psi[1] * x * (1.0 - y) + psi[2] * (1.0 - x) * y + psi[3] * x * y
}

/// `psi^V r_h` restricted to the patch, for flux index `k`.
///
/// A coarse side on the patch boundary whose fine neighbours all lie outside the patch
/// carries a single constraint for the whole side, since its normal trace has only `k`
/// degrees of freedom.
pub fn localize_residual(mesh: &Mesh, r: &Residual, patch: &Patch, k: usize) -> LocalResidual {
    let n = r.degree + 1;
    let rule = QuadratureRule::tensor_gauss(r.degree + 3);
    let gauss = GaussRule1d::new(r.degree + 3);
    let mut total = 0.0;
    let mut cell_data = Vec::with_capacity(patch.cells.len());
    for (&c, &psi) in patch.cells.iter().zip(&patch.psi) {
        let det = mesh.geometry(c).det;
        let mut d = DVector::zeros(k * k);
        for (&xi, &w) in rule.points.iter().zip(&rule.weights) {
            let v = w * bilinear(psi, xi) * legendre_2d(n, &r.cell_part[c], xi);
            let px = legendre(k, xi[0]);
            let py = legendre(k, xi[1]);
            for b in 0..k {
                for a in 0..k {
                    d[a + k * b] -= det * v * px[a] * py[b];
                }
            }
        }
        total -= d[0];
        cell_data.push(d);
    }
    let mut face_data: Vec<FluxConstraint> = Vec::new();
    let mut merged: HashMap<(usize, usize), usize> = HashMap::new();
    for &f in patch.interior_faces.iter().chain(&patch.local_neumann) {
        let face = &mesh.faces[f];
        let sides: Vec<(usize, usize, (f64, f64))> = face
            .sides
            .iter()
            .filter_map(|s| patch.cells.iter().position(|&c| c == s.cell).map(|i| (i, s.local_side, s.range)))
            .collect();
        let (ci, s0, range) = sides[0];
        // moments against P_l of the parameter of the constrained segment
        let whole_side = sides.len() == 1 && range != (0.0, 1.0);
        let mut e = DVector::zeros(k);
        for (&t, &w) in gauss.points.iter().zip(&gauss.weights) {
            let tau = range.0 + (range.1 - range.0) * t;
            let xi = side_point(s0, tau);
            let v = w * face.length * bilinear(patch.psi[ci], xi) * legendre_1d(&r.face_part[f], t);
            let pl = legendre(k, if whole_side { tau } else { t });
            for l in 0..k {
                e[l] += v * pl[l];
            }
        }
        total += e[0];
        if whole_side {
            match merged.get(&(ci, s0)) {
                Some(&idx) => face_data[idx].data += e,
                None => {
                    merged.insert((ci, s0), face_data.len());
                    face_data.push(FluxConstraint { sides: vec![(ci, s0, (0.0, 1.0))], data: e });
                }
            }
        } else {
            face_data.push(FluxConstraint { sides, data: e });
        }
    }
    LocalResidual { cell_data, face_data, free_faces: patch.local_dirichlet.clone(), total }
}

/// Solver for vertex-patch problems, caching factorizations by patch configuration.
#[derive(Debug)]
pub struct PatchSolver {
    pub rt: RtElement,
    cache: HashMap<Vec<u64>, Arc<SaddleOperator>>,
    pub cache_hits: usize,
    pub cache_misses: usize,
}

/// Constraint matrix of a patch problem: cell divergence rows then face flux rows.
pub fn patch_constraint_matrix(rt: &RtElement, patch: &Patch, local: &LocalResidual) -> DMatrix<f64> {
    let k = rt.k;
    let nc = patch.cells.len();
    let rows = nc * k * k + local.face_data.len() * k;
    let mut b = DMatrix::zeros(rows, nc * rt.dim);
    for i in 0..nc {
        b.view_mut((i * k * k, i * rt.dim), (k * k, rt.dim)).copy_from(&rt.div_moments);
    }
    for (fi, fc) in local.face_data.iter().enumerate() {
        let row0 = nc * k * k + fi * k;
        for &(ci, side, range) in &fc.sides {
            let t = rt.side_trace_moments(range.0, range.1) * outward_sign(side);
            for l in 0..k {
                for m in 0..k {
                    b[(row0 + l, ci * rt.dim + rt.side_dof(side, m))] = t[(l, m)];
                }
            }
        }
    }
    b
}

fn patch_mass(mesh: &Mesh, rt: &RtElement, a: &MetricTensor, patch: &Patch) -> DMatrix<f64> {
    let nc = patch.cells.len();
    let mut m = DMatrix::zeros(nc * rt.dim, nc * rt.dim);
    for (i, &c) in patch.cells.iter().enumerate() {
        let geo = mesh.geometry(c);
        let g = flux_mass_weight(&geo, a.on_cell(&geo));
        m.view_mut((i * rt.dim, i * rt.dim), (rt.dim, rt.dim)).copy_from(&rt.mass(g));
    }
    m
}

fn signature(mesh: &Mesh, a: &MetricTensor, patch: &Patch, local: &LocalResidual) -> Vec<u64> {
    let mut sig = vec![patch.cells.len() as u64, local.face_data.len() as u64, local.free_faces.is_empty() as u64];
    for &c in &patch.cells {
        let geo = mesh.geometry(c);
        let g: Tensor = flux_mass_weight(&geo, a.on_cell(&geo));
        sig.extend(g.iter().flatten().map(|x| x.to_bits()));
    }
    for fc in &local.face_data {
        for &(ci, side, range) in &fc.sides {
            sig.extend([ci as u64, side as u64, range.0.to_bits(), range.1.to_bits()]);
        }
        sig.push(u64::MAX);
    }
    sig
}

impl PatchSolver {
    pub fn new(k: usize) -> Self {
        PatchSolver { rt: RtElement::new(k), cache: HashMap::new(), cache_hits: 0, cache_misses: 0 }
    }

    /// Minimum-`A`-norm patch flux for a localized residual. Returns one coefficient block
    /// per patch cell.
    pub fn solve(
        &mut self,
        mesh: &Mesh,
        a: &MetricTensor,
        patch: &Patch,
        local: &LocalResidual,
    ) -> Result<Vec<Vec<f64>>> {
        let closed = local.free_faces.is_empty();
        if closed && local.total.abs() > 1e-8 {
            return Err(Error::NotEquilibrated { vertex: patch.center_vertex, value: local.total });
        }
        let sig = signature(mesh, a, patch, local);
        let op = match self.cache.get(&sig) {
            Some(op) => {
                self.cache_hits += 1;
                op.clone()
            }
            None => {
                self.cache_misses += 1;
                let b = patch_constraint_matrix(&self.rt, patch, local);
                let m = patch_mass(mesh, &self.rt, a, patch);
                let op = Arc::new(SaddleOperator::new(&m, &b, usize::from(closed))?);
                self.cache.insert(sig, op.clone());
                op
            }
        };
        let mut d = Vec::new();
        for c in &local.cell_data {
            d.extend(c.iter());
        }
        for fc in &local.face_data {
            d.extend(fc.data.iter());
        }
        let w = op.solve(&DVector::from_vec(d));
        Ok(w.as_slice().chunks(self.rt.dim).map(<[f64]>::to_vec).collect())
    }
}

/// Sum of all patch fluxes `rho^L` of index `k` for a residual.
pub fn reconstruct_residual_flux(
    mesh: &Mesh,
    a: &MetricTensor,
    r: &Residual,
    k: usize,
) -> Result<BrokenFluxField> {
    if !a.is_cellwise_constant {
        return Err(Error::Incompatible("flux reconstruction needs a cellwise constant coefficient".into()));
    }
    if r.degree + 2 > k {
        return Err(Error::Incompatible(format!(
            "localized residual of degree {} needs flux index at least {}",
            r.degree + 1,
            r.degree + 2
        )));
    }
    let mut solver = PatchSolver::new(k);
    let mut out = BrokenFluxField::zeros(mesh, k);
    for v in mesh.regular_vertices() {
        let patch = mesh.vertex_patch(v)?;
        let local = localize_residual(mesh, r, &patch, k);
        let blocks = solver.solve(mesh, a, &patch, &local)?;
        for (&c, blk) in patch.cells.iter().zip(blocks) {
            for (o, x) in out.coefficients[c].iter_mut().zip(blk) {
                *o += x;
            }
        }
    }
    log::debug!("patch solves: {} cached, {} factorized", solver.cache_hits, solver.cache_misses);
    Ok(out)
}

/// Localized reconstruction: `(rho^L, sigma^L)` with `sigma^L = rho^L + grad u_h`, both
/// stored as `A` times the flux, with flux index `p + 2`.
pub fn reconstruct_local(
    mesh: &Mesh,
    a: &MetricTensor,
    u: &ScalarField,
    r: &Residual,
) -> Result<(BrokenFluxField, BrokenFluxField)> {
    let k = u.dofs.degree() + 2;
    let rho = reconstruct_residual_flux(mesh, a, r, k)?;
    let sigma = rho.add(&BrokenFluxField::interpolate_gradient(mesh, a, u, k))?;
    Ok((rho, sigma))
}

/// Cellwise `h_K ||f - F_h||_{L^2(K)}` in the order of `mesh.active`, and their sum.
pub fn data_oscillation(mesh: &Mesh, rhs: &RightHandSide, quad: &DataQuadrature, r: &Residual) -> (Vec<f64>, f64) {
    let n = r.degree + 1;
    let per_cell: Vec<f64> = mesh
        .active
        .iter()
        .map(|&c| {
            let geo = mesh.geometry(c);
            let rule = quad.rule(rhs, mesh, c);
            let sq = rule.integrate(|xi| {
                let d = rhs.eval(geo.map(xi)) - legendre_2d(n, &r.data_projection[c], xi);
                d * d
            }) * geo.det;
            geo.diameter() * sq.sqrt()
        })
        .collect();
    let total = per_cell.iter().sum();
    (per_cell, total)
}
