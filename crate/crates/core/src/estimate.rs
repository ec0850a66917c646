//! Error estimators built from reconstructed fluxes: the equilibrated energy estimator,
//! goal-oriented estimators, Cauchy–Schwarz bounds, efficiency and oscillation indices, and
//! the higher-order dual reconstruction `z*`.

use crate::elements::poly::legendre;
use crate::elements::{GaussRule1d, LagrangeElement, QuadratureRule, RtElement};
use crate::error::{Error, Result};
use crate::flux::{BrokenFluxField, Residual};
use crate::galerkin::{side_point, MetricTensor};
use crate::mesh::{BoundaryMarker, CellGeometry, Mesh};
use crate::space::{hanging_constraints, DofFamily, DofMap, ScalarField};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    Energy,
    RhoVarpi,
    RhoTau,
    FirstStar,
    SecondStar,
    DwrStar,
    CsNaive,
    CsBetter,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Energy => "energy",
            EstimatorKind::RhoVarpi => "rho_varpi",
            EstimatorKind::RhoTau => "rho_tau",
            EstimatorKind::FirstStar => "first_star",
            EstimatorKind::SecondStar => "second_star",
            EstimatorKind::DwrStar => "dwr_star",
            EstimatorKind::CsNaive => "cs_naive",
            EstimatorKind::CsBetter => "cs_better",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            EstimatorKind::Energy,
            EstimatorKind::RhoVarpi,
            EstimatorKind::RhoTau,
            EstimatorKind::FirstStar,
            EstimatorKind::SecondStar,
            EstimatorKind::DwrStar,
            EstimatorKind::CsNaive,
            EstimatorKind::CsBetter,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

/// Global value and per-cell indicators of one estimator.
///
/// For `Energy` the global value is the norm and the indicators are squared local norms;
/// for goal estimators the global value is the signed sum of the indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorReport {
    pub kind: EstimatorKind,
    pub global_value: f64,
    /// In the order of `mesh.active`.
    pub per_cell: Vec<f64>,
    pub n_dofs: usize,
}

impl EstimatorReport {
    fn signed(kind: EstimatorKind, per_cell: Vec<f64>, n_dofs: usize) -> Self {
        EstimatorReport { kind, global_value: pairwise_sum(&per_cell), per_cell, n_dofs }
    }
}

/// Deterministic pairwise summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// `||rho||_A` with indicators `||rho||^2_{A,K}`, for `rho = sigma - grad u_h`.
pub fn energy_estimate(mesh: &Mesh, a: &MetricTensor, rho: &BrokenFluxField, n_dofs: usize) -> Result<EstimatorReport> {
    let per_cell = rho.cell_products(mesh, a, rho)?;
    let global_value = pairwise_sum(&per_cell).sqrt();
    Ok(EstimatorReport { kind: EstimatorKind::Energy, global_value, per_cell, n_dofs })
}

/// `I_eff,f`: squared estimator over squared error.
pub fn efficiency_energy(eta: f64, error_sq: f64) -> Result<f64> {
    if error_sq <= 0.0 {
        return Err(Error::ZeroDenominator("reference energy error"));
    }
    Ok(eta * eta / error_sq)
}

/// `(I_eff, I_osc)` of a signed estimator against the true error.
pub fn indices(report: &EstimatorReport, true_error: f64) -> Result<(f64, f64)> {
    if true_error == 0.0 {
        return Err(Error::ZeroDenominator("true error"));
    }
    if report.global_value == 0.0 {
        return Err(Error::ZeroDenominator("estimator value"));
    }
    let abs: Vec<f64> = report.per_cell.iter().map(|x| x.abs()).collect();
    Ok((report.global_value.abs() / true_error.abs(), pairwise_sum(&abs) / report.global_value.abs()))
}

/// Inputs of the goal-oriented estimators on one mesh.
#[derive(Debug, Clone, Copy)]
pub struct GoalInputs<'a> {
    pub mesh: &'a Mesh,
    pub a: &'a MetricTensor,
    /// Primal residual flux `rho`, stored as `A rho`.
    pub rho: &'a BrokenFluxField,
    /// Dual residual flux `varpi`, stored as `A varpi`.
    pub varpi: &'a BrokenFluxField,
    pub u_h: &'a ScalarField,
    pub z_h: &'a ScalarField,
    pub z_star: &'a ScalarField,
    /// Primal residual, built from the same projected data as `rho`.
    pub residual: &'a Residual,
}

/// All goal-oriented estimators plus the two Cauchy–Schwarz bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalEstimates {
    pub rho_varpi: EstimatorReport,
    pub rho_tau: EstimatorReport,
    pub first_star: EstimatorReport,
    pub second_star: EstimatorReport,
    pub dwr_star: EstimatorReport,
    pub cs_naive: f64,
    pub cs_better: f64,
}

impl GoalEstimates {
    pub fn get(&self, kind: EstimatorKind) -> Option<&EstimatorReport> {
        match kind {
            EstimatorKind::RhoVarpi => Some(&self.rho_varpi),
            EstimatorKind::RhoTau => Some(&self.rho_tau),
            EstimatorKind::FirstStar => Some(&self.first_star),
            EstimatorKind::SecondStar => Some(&self.second_star),
            EstimatorKind::DwrStar => Some(&self.dwr_star),
            _ => None,
        }
    }
}

/// `int_K w . grad v` per active cell for a flux `w` (stored as `A` times the flux).
fn flux_gradient_products(mesh: &Mesh, w: &BrokenFluxField, v: &ScalarField, minus: Option<&ScalarField>) -> Vec<f64> {
    let rt = RtElement::new(w.k);
    let rule = QuadratureRule::tensor_gauss(v.dofs.degree() + w.k + 1);
    let rt_tab: Vec<Vec<[f64; 2]>> = rule.points.iter().map(|&x| rt.eval(x).0).collect();
    let lag = LagrangeElement::new(v.dofs.degree());
    let lag_tab: Vec<Vec<[f64; 2]>> = rule.points.iter().map(|&x| lag.eval(x).1).collect();
    let sub = minus.map(|m| {
        let e = LagrangeElement::new(m.dofs.degree());
        rule.points.iter().map(|&x| e.eval(x).1).collect::<Vec<_>>()
    });
    mesh.active
        .iter()
        .map(|&c| {
            let geo = mesh.geometry(c);
            let wc = &w.coefficients[c];
            let vc = v.local(c);
            let mc = minus.map(|m| m.local(c));
            let mut s = 0.0;
            for (q, &wt) in rule.weights.iter().enumerate() {
                let mut wr = [0.0; 2];
                for (ci, val) in wc.iter().zip(&rt_tab[q]) {
                    wr[0] += ci * val[0];
                    wr[1] += ci * val[1];
                }
                let mut g = [0.0; 2];
                for (vi, gi) in vc.iter().zip(&lag_tab[q]) {
                    g[0] += vi * gi[0];
                    g[1] += vi * gi[1];
                }
                if let (Some(mc), Some(sub)) = (&mc, &sub) {
                    for (vi, gi) in mc.iter().zip(&sub[q]) {
                        g[0] -= vi * gi[0];
                        g[1] -= vi * gi[1];
                    }
                }
                // Piola value times physical gradient, times det J
                let wp = geo.piola(wr);
                let gp = geo.grad(g);
                s += wt * (wp[0] * gp[0] + wp[1] * gp[1]) * geo.det;
            }
            s
        })
        .collect()
}

/// Classical dual-weighted-residual indicators for the weight `e = z* - z_h`, with face
/// terms split evenly between the two sides.
pub fn dwr_estimate(mesh: &Mesh, residual: &Residual, z_h: &ScalarField, z_star: &ScalarField) -> EstimatorReport {
    let deg = z_star.dofs.degree().max(z_h.dofs.degree());
    let n = residual.degree + 1;
    let rule = QuadratureRule::tensor_gauss(deg + residual.degree + 1);
    let gauss = GaussRule1d::new(deg + residual.degree + 1);
    let weight = |c: usize, xi: [f64; 2]| z_star.eval_in_cell(mesh, c, xi).0 - z_h.eval_in_cell(mesh, c, xi).0;
    let mut index = vec![usize::MAX; mesh.cells.len()];
    for (i, &c) in mesh.active.iter().enumerate() {
        index[c] = i;
    }
    let mut per_cell: Vec<f64> = mesh
        .active
        .iter()
        .map(|&c| {
            let det = mesh.geometry(c).det;
            let coef = &residual.cell_part[c];
            det * rule.integrate(|xi| {
                let px = legendre(n, xi[0]);
                let py = legendre(n, xi[1]);
                let mut r = 0.0;
                for b in 0..n {
                    for a in 0..n {
                        r += coef[a + n * b] * px[a] * py[b];
                    }
                }
                r * weight(c, xi)
            })
        })
        .collect();
    for (f, face) in mesh.faces.iter().enumerate() {
        if face.marker == BoundaryMarker::Dirichlet {
            continue;
        }
        let side = face.sides[0];
        let val = face.length
            * gauss.integrate(|t| {
                let tau = side.range.0 + (side.range.1 - side.range.0) * t;
                let r: f64 = legendre(n, t).iter().zip(&residual.face_part[f]).map(|(p, c)| p * c).sum();
                r * weight(side.cell, side_point(side.local_side, tau))
            });
        let share = val / face.sides.len() as f64;
        for s in &face.sides {
            per_cell[index[s.cell]] += share;
        }
    }
    EstimatorReport::signed(EstimatorKind::DwrStar, per_cell, z_h.dofs.n_dofs)
}

/// Evaluates every goal-oriented estimator.
pub fn goal_estimates(inp: &GoalInputs<'_>) -> Result<GoalEstimates> {
    let GoalInputs { mesh, a, rho, varpi, u_h, z_h, z_star, residual } = *inp;
    let n_dofs = u_h.dofs.n_dofs;
    let rv = rho.cell_products(mesh, a, varpi)?;
    let grad_z = BrokenFluxField::interpolate_gradient(mesh, a, z_h, rho.k);
    let tau = varpi.add(&grad_z)?;
    let rt_per_cell = rho.cell_products(mesh, a, &tau)?;
    let first = flux_gradient_products(mesh, rho, z_star, None);
    let second = flux_gradient_products(mesh, rho, z_star, Some(z_h));
    let rho_norm = rho.norm_squared(mesh, a).sqrt();
    let cs_naive = rho_norm * tau.norm_squared(mesh, a).sqrt();
    let cs_better = rho_norm * varpi.norm_squared(mesh, a).sqrt();
    Ok(GoalEstimates {
        rho_varpi: EstimatorReport::signed(EstimatorKind::RhoVarpi, rv, n_dofs),
        rho_tau: EstimatorReport::signed(EstimatorKind::RhoTau, rt_per_cell, n_dofs),
        first_star: EstimatorReport::signed(EstimatorKind::FirstStar, first, n_dofs),
        second_star: EstimatorReport::signed(EstimatorKind::SecondStar, second, n_dofs),
        dwr_star: dwr_estimate(mesh, residual, z_h, z_star),
        cs_naive,
        cs_better,
    })
}

/// `(||rho|| ||tau||, ||rho|| ||varpi||)`.
pub fn cs_bounds(mesh: &Mesh, a: &MetricTensor, rho: &BrokenFluxField, varpi: &BrokenFluxField, tau: &BrokenFluxField) -> (f64, f64) {
    let r = rho.norm_squared(mesh, a).sqrt();
    (r * tau.norm_squared(mesh, a).sqrt(), r * varpi.norm_squared(mesh, a).sqrt())
}

/// A polynomial on a square region used as the local higher-order dual approximation.
enum LocalFit {
    /// Lagrange nodal values of degree `2p` on the block geometry.
    Interpolant { geo: CellGeometry, values: Vec<f64> },
    /// Legendre coefficients of degree `2p` in the reference coordinates of the cell.
    LeastSquares { geo: CellGeometry, coef: Vec<f64> },
}

fn root_block(mesh: &Mesh, cell: usize) -> Option<(CellGeometry, [usize; 4])> {
    let n = mesh.n_initial;
    let (i, j) = mesh.cells[cell].root;
    let (i0, j0) = (i - i % 2, j - j % 2);
    if i0 + 1 >= n || j0 + 1 >= n {
        return None;
    }
    let ids = [i0 + n * j0, i0 + 1 + n * j0, i0 + n * (j0 + 1), i0 + 1 + n * (j0 + 1)];
    if ids.iter().any(|&c| !mesh.cells[c].is_active()) {
        return None;
    }
    // the four roots must share their inner vertices, which fails across the slit
    let v = |c: usize, k: usize| mesh.cells[c].vertices[k];
    if v(ids[0], 3) != v(ids[3], 0) || v(ids[1], 2) != v(ids[2], 1) || v(ids[0], 1) != v(ids[1], 0) {
        return None;
    }
    if v(ids[0], 2) != v(ids[2], 0) || v(ids[1], 3) != v(ids[3], 1) {
        return None;
    }
    let g = mesh.geometry(ids[0]);
    let jac = [[2.0 * g.jac[0][0], 2.0 * g.jac[0][1]], [2.0 * g.jac[1][0], 2.0 * g.jac[1][1]]];
    let det = 4.0 * g.det;
    let inv = [[g.inv[0][0] / 2.0, g.inv[0][1] / 2.0], [g.inv[1][0] / 2.0, g.inv[1][1] / 2.0]];
    Some((CellGeometry { origin: g.origin, jac, det, inv }, ids))
}

fn sibling_block(mesh: &Mesh, cell: usize) -> Option<(CellGeometry, [usize; 4])> {
    match mesh.cells[cell].parent {
        Some(par) => {
            let ch = mesh.cells[par].children?;
            ch.iter().all(|&c| mesh.cells[c].is_active()).then(|| (mesh.geometry(par), ch))
        }
        None => root_block(mesh, cell),
    }
}

/// Evaluates `z_h` at a physical point known to lie in one of `cells`.
fn eval_in_block(mesh: &Mesh, z: &ScalarField, cells: &[usize], x: [f64; 2]) -> f64 {
    for &c in cells {
        let xi = mesh.geometry(c).pull_back(x);
        if xi.iter().all(|&t| (-1e-12..=1.0 + 1e-12).contains(&t)) {
            return z.eval_in_cell(mesh, c, [xi[0].clamp(0.0, 1.0), xi[1].clamp(0.0, 1.0)]).0;
        }
    }
    unreachable!("block point outside its cells")
}

fn local_fit(mesh: &Mesh, z: &ScalarField, cell: usize, high: &LagrangeElement) -> LocalFit {
    if let Some((geo, cells)) = sibling_block(mesh, cell) {
        let values = high.nodes.iter().map(|&xi| eval_in_block(mesh, z, &cells, geo.map(xi))).collect();
        return LocalFit::Interpolant { geo, values };
    }
    // least-squares fit over the cell and its face neighbours
    let q = high.degree;
    let n = q + 1;
    let geo = mesh.geometry(cell);
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut cells = vec![cell];
    cells.extend(mesh.face_neighbors(cell));
    for &c in &cells {
        let g = mesh.geometry(c);
        for &xi in &high.nodes {
            let x = g.map(xi);
            let local = geo.pull_back(x);
            let px = legendre(n, local[0]);
            let py = legendre(n, local[1]);
            let row = (0..n * n).map(|i| px[i % n] * py[i / n]).collect();
            rows.push((row, z.eval_in_cell(mesh, c, xi).0));
        }
    }
    let m = DMatrix::from_fn(rows.len(), n * n, |i, j| rows[i].0[j]);
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    let coef = m
        .svd(true, true)
        .solve(&b, 1e-12)
        .map(|c| c.as_slice().to_vec())
        .unwrap_or_else(|_| vec![0.0; n * n]);
    LocalFit::LeastSquares { geo, coef }
}

impl LocalFit {
    fn eval(&self, high: &LagrangeElement, x: [f64; 2]) -> f64 {
        match self {
            LocalFit::Interpolant { geo, values } => {
                let (phi, _) = high.eval(geo.pull_back(x));
                phi.iter().zip(values).map(|(a, b)| a * b).sum()
            }
            LocalFit::LeastSquares { geo, coef } => {
                let n = high.degree + 1;
                let xi = geo.pull_back(x);
                let px = legendre(n, xi[0]);
                let py = legendre(n, xi[1]);
                (0..n * n).map(|i| coef[i] * px[i % n] * py[i / n]).sum()
            }
        }
    }
}

/// Higher-order dual approximation: on every complete 2x2 sibling block the degree-`2p`
/// interpolant of `z_h` through its nodal values, elsewhere a degree-`2p` least-squares
/// fit over the cell and its neighbours; then made conforming by averaging shared nodes,
/// applying hanging constraints and zeroing Dirichlet nodes.
pub fn reconstruct_zstar(mesh: &Mesh, z: &ScalarField) -> ScalarField {
    let q = 2 * z.dofs.degree();
    let high = LagrangeElement::new(q);
    let dofs = Arc::new(DofMap::distribute(mesh, DofFamily::Lagrange(q)));
    let mut sum = vec![0.0; dofs.n_dofs];
    let mut count = vec![0usize; dofs.n_dofs];
    for &c in &mesh.active {
        let fit = local_fit(mesh, z, c, &high);
        let geo = mesh.geometry(c);
        for (i, &g) in dofs.cell_dofs[c].iter().enumerate() {
            sum[g] += fit.eval(&high, geo.map(high.nodes[i]));
            count[g] += 1;
        }
    }
    let mut coefficients: Vec<f64> = sum.iter().zip(&count).map(|(s, &n)| s / n as f64).collect();
    let dir = crate::space::dirichlet_constraints(mesh, &dofs, |_| 0.0);
    let mut cons = hanging_constraints(mesh, &dofs);
    cons.merge(&dir);
    cons.close();
    cons.distribute(&mut coefficients);
    ScalarField { dofs, coefficients }
}
