//! Fixed-fraction marking, uniform refinement studies and the adaptive
//! solve–estimate–mark–refine loop.

use crate::cases::{goal_solve, true_errors, ReferenceValues, TestCase};
use crate::error::{Error, Result};
use crate::estimate::{indices, pairwise_sum, EstimatorKind};
use crate::flux::{compute_residual, reconstruct_local, BrokenFluxField};
use crate::galerkin::{solve_global_mixed_flux, DataQuadrature};
use crate::mesh::Mesh;
use std::collections::BTreeSet;

/// Picks `ceil(fraction * N)` entries of largest `|value|`, ties broken by ascending id.
pub fn select_fixed_fraction(ids: &[usize], values: &[f64], fraction: f64) -> BTreeSet<usize> {
    assert_eq!(ids.len(), values.len(), "one indicator per cell");
    if ids.is_empty() {
        return BTreeSet::new();
    }
    let fraction = fraction.clamp(0.0, 1.0);
    let count = ((fraction * ids.len() as f64) - 1e-12).ceil().max(0.0) as usize;
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()).then(ids[a].cmp(&ids[b])));
    order[..count.min(ids.len())].iter().map(|&i| ids[i]).collect()
}

/// Fixed-fraction marking over the active cells; `indicators` follow `mesh.active`.
pub fn mark_fixed_fraction(mesh: &Mesh, indicators: &[f64], fraction: f64) -> BTreeSet<usize> {
    select_fixed_fraction(&mesh.active, indicators, fraction)
}

/// Bulk marking: the fewest cells, taken by decreasing `|value|`, whose indicators add up
/// to at least `theta` times the total. Ties go to the smaller id.
pub fn select_bulk(ids: &[usize], values: &[f64], theta: f64) -> BTreeSet<usize> {
    assert_eq!(ids.len(), values.len(), "one indicator per cell");
    let total: f64 = values.iter().map(|v| v.abs()).sum();
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()).then(ids[a].cmp(&ids[b])));
    let goal = theta.clamp(0.0, 1.0) * total;
    let mut out = BTreeSet::new();
    let mut acc = 0.0;
    for i in order {
        if !out.is_empty() && acc >= goal {
            break;
        }
        acc += values[i].abs();
        out.insert(ids[i]);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FluxMode {
    Local,
    GlobalMixed,
    Both,
}

impl FluxMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "local" => Some(FluxMode::Local),
            "global_mixed" | "mixed" => Some(FluxMode::GlobalMixed),
            "both" => Some(FluxMode::Both),
            _ => None,
        }
    }

    fn mixed(self) -> bool {
        self != FluxMode::Local
    }

    fn local(self) -> bool {
        self != FluxMode::GlobalMixed
    }
}

/// One row of an energy table. Estimator entries are squared norms; absent entries are
/// `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyRow {
    pub level: usize,
    pub dofs: usize,
    pub true_sq_err: f64,
    pub rate: Option<f64>,
    pub eta_mixed: Option<f64>,
    pub ieff_mixed: Option<f64>,
    pub eta_local: Option<f64>,
    pub ieff_local: Option<f64>,
}

/// Estimator columns of a goal table.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalColumn {
    pub kind: EstimatorKind,
    pub eta: f64,
    pub i_eff: f64,
    pub i_osc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoalRow {
    pub level: usize,
    pub dofs: usize,
    /// `|J(u) - J(u_h)|`.
    pub goal_err: f64,
    pub rate: Option<f64>,
    pub columns: Vec<GoalColumn>,
    pub cs_naive: f64,
    pub cs_better: f64,
}

impl GoalRow {
    pub fn column(&self, kind: EstimatorKind) -> Option<&GoalColumn> {
        self.columns.iter().find(|c| c.kind == kind)
    }
}

/// Grid of level `level` of a uniform study: level 1 is the case's initial grid.
pub fn uniform_grid(case: &TestCase, level: usize) -> usize {
    if level == 0 {
        case.n_uniform / 2
    } else {
        case.n_uniform << (level - 1)
    }
}

fn energy_row(
    case: &TestCase,
    mesh: &Mesh,
    p: usize,
    level: usize,
    mode: FluxMode,
    reference: Option<&ReferenceValues>,
) -> Result<EnergyRow> {
    let quad = DataQuadrature::for_degree(p);
    let u = case.solve(mesh, p)?;
    let err = true_errors(case, mesh, &u, reference, None)?.energy_sq;
    let r = compute_residual(mesh, &case.a, &case.rhs, &quad, &u)?;
    let (eta_local, ieff_local) = if mode.local() {
        let (rho, _) = reconstruct_local(mesh, &case.a, &u, &r)?;
        let e = rho.norm_squared(mesh, &case.a);
        (Some(e), Some(e / err))
    } else {
        (None, None)
    };
    let (eta_mixed, ieff_mixed) = if mode.mixed() {
        let w = solve_global_mixed_flux(mesh, p + 2, &case.a, &r)?;
        let e = w.norm_squared(mesh, &case.a);
        (Some(e), Some(e / err))
    } else {
        (None, None)
    };
    Ok(EnergyRow { level, dofs: u.dofs.n_dofs, true_sq_err: err, rate: None, eta_mixed, ieff_mixed, eta_local, ieff_local })
}

/// Uniform-refinement energy study over levels `1..=levels`. The rate of level `l` is
/// `log2(e_{l-1} / e_l)`, with an extra coarse solve for level 1.
pub fn uniform_energy_study(
    case: &TestCase,
    p: usize,
    levels: usize,
    mode: FluxMode,
    reference: Option<&ReferenceValues>,
) -> Result<Vec<EnergyRow>> {
    let mut rows = Vec::with_capacity(levels);
    if levels == 0 {
        return Ok(rows);
    }
    let coarse = Mesh::build_uniform(case.domain, uniform_grid(case, 0))?;
    let u0 = case.solve(&coarse, p)?;
    let mut prev = true_errors(case, &coarse, &u0, reference, None)?.energy_sq;
    for level in 1..=levels {
        let mesh = Mesh::build_uniform(case.domain, uniform_grid(case, level))?;
        let mut row = energy_row(case, &mesh, p, level, mode, reference)?;
        row.rate = Some((prev / row.true_sq_err).log2());
        prev = row.true_sq_err;
        log::info!("{} p={p} level {level}: {} dofs, err^2 {:e}", case.name, row.dofs, row.true_sq_err);
        rows.push(row);
    }
    Ok(rows)
}

const GOAL_KINDS: [EstimatorKind; 5] = [
    EstimatorKind::RhoVarpi,
    EstimatorKind::SecondStar,
    EstimatorKind::RhoTau,
    EstimatorKind::FirstStar,
    EstimatorKind::DwrStar,
];

fn goal_row(case: &TestCase, mesh: &Mesh, p: usize, level: usize, reference: Option<&ReferenceValues>) -> Result<(GoalRow, crate::estimate::GoalEstimates)> {
    let solve = goal_solve(case, mesh, p)?;
    let est = solve.estimates(case, mesh)?;
    let err = true_errors(case, mesh, &solve.u, reference, None)?.goal;
    let mut columns = Vec::new();
    for kind in GOAL_KINDS {
        let report = est.get(kind).expect("goal estimator");
        let (i_eff, i_osc) = indices(report, err).unwrap_or((f64::NAN, f64::NAN));
        columns.push(GoalColumn { kind, eta: report.global_value, i_eff, i_osc });
    }
    let row = GoalRow {
        level,
        dofs: solve.u.dofs.n_dofs,
        goal_err: err.abs(),
        rate: None,
        columns,
        cs_naive: est.cs_naive,
        cs_better: est.cs_better,
    };
    Ok((row, est))
}

/// Uniform-refinement goal study over levels `1..=levels`; also returns the raw
/// estimates of every level.
pub fn uniform_goal_study(
    case: &TestCase,
    p: usize,
    levels: usize,
    reference: Option<&ReferenceValues>,
) -> Result<Vec<GoalRow>> {
    let mut rows = Vec::with_capacity(levels);
    if levels == 0 {
        return Ok(rows);
    }
    let coarse = Mesh::build_uniform(case.domain, uniform_grid(case, 0))?;
    let u0 = case.solve(&coarse, p)?;
    let mut prev = true_errors(case, &coarse, &u0, reference, None)?.goal.abs();
    for level in 1..=levels {
        let mesh = Mesh::build_uniform(case.domain, uniform_grid(case, level))?;
        let (mut row, _) = goal_row(case, &mesh, p, level, reference)?;
        row.rate = Some((prev / row.goal_err).log2());
        prev = row.goal_err;
        log::info!("{} p={p} level {level}: {} dofs, goal error {:e}", case.name, row.dofs, row.goal_err);
        rows.push(row);
    }
    Ok(rows)
}

/// What drives the adaptive loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Driver {
    /// Energy indicators `||rho||^2_K` from the given flux (`Both` is not allowed).
    Energy(FluxMode),
    /// Signed goal indicators, marked by magnitude.
    Goal(EstimatorKind),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryStep {
    pub step: usize,
    pub dofs: usize,
    /// Energy error squared, or `|J(u) - J(u_h)|`.
    pub true_err: f64,
    /// Global value of the driving estimator (squared norm for energy drivers).
    pub eta: f64,
    pub i_eff: f64,
    pub i_osc: f64,
    /// `log(e_prev / e) / log(N / N_prev)`, absent on the first step.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceHistory {
    pub steps: Vec<HistoryStep>,
}

impl ConvergenceHistory {
    fn push(&mut self, mut s: HistoryStep) {
        if let Some(prev) = self.steps.last() {
            s.rate = Some((prev.true_err / s.true_err).ln() / (s.dofs as f64 / prev.dofs as f64).ln());
        }
        self.steps.push(s);
    }

    /// Least-squares slope of `log(true_err)` against `log(dofs)` over the last `n` steps.
    pub fn final_slope(&self, n: usize) -> Option<f64> {
        let tail = &self.steps[self.steps.len().saturating_sub(n)..];
        if tail.len() < 2 {
            return None;
        }
        let xs: Vec<f64> = tail.iter().map(|s| (s.dofs as f64).ln()).collect();
        let ys: Vec<f64> = tail.iter().map(|s| s.true_err.ln()).collect();
        let mx = xs.iter().sum::<f64>() / xs.len() as f64;
        let my = ys.iter().sum::<f64>() / ys.len() as f64;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        Some(sxy / sxx)
    }
}

/// Adaptive loop: `steps` solves on successively refined meshes, starting from the case's
/// initial grid.
pub fn afem_run(
    case: &TestCase,
    p: usize,
    driver: Driver,
    steps: usize,
    fraction: f64,
    reference: Option<&ReferenceValues>,
) -> Result<ConvergenceHistory> {
    afem_run_with_mesh(case, p, driver, steps, fraction, reference).map(|(h, _)| h)
}

/// [`afem_run`] that also returns the mesh of the last solve.
pub fn afem_run_with_mesh(
    case: &TestCase,
    p: usize,
    driver: Driver,
    steps: usize,
    fraction: f64,
    reference: Option<&ReferenceValues>,
) -> Result<(ConvergenceHistory, Mesh)> {
    if driver == Driver::Energy(FluxMode::Both) {
        return Err(Error::InvalidArgument("an energy driver needs a single flux mode".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("marking fraction {fraction} outside (0, 1]")));
    }
    let mut history = ConvergenceHistory::default();
    let mut mesh = case.initial_mesh()?;
    for step in 1..=steps {
        let (indicators, entry) = match driver {
            Driver::Energy(mode) => {
                let quad = DataQuadrature::for_degree(p);
                let u = case.solve(&mesh, p)?;
                let err = true_errors(case, &mesh, &u, reference, None)?.energy_sq;
                let r = compute_residual(&mesh, &case.a, &case.rhs, &quad, &u)?;
                let rho: BrokenFluxField = if mode == FluxMode::Local {
                    reconstruct_local(&mesh, &case.a, &u, &r)?.0
                } else {
                    solve_global_mixed_flux(&mesh, p + 2, &case.a, &r)?
                };
                let eta_k = rho.cell_products(&mesh, &case.a, &rho)?;
                let eta = pairwise_sum(&eta_k);
                let entry = HistoryStep { step, dofs: u.dofs.n_dofs, true_err: err, eta, i_eff: eta / err, i_osc: 1.0, rate: None };
                (eta_k, entry)
            }
            Driver::Goal(kind) => {
                let solve = goal_solve(case, &mesh, p)?;
                let est = solve.estimates(case, &mesh)?;
                let err = true_errors(case, &mesh, &solve.u, reference, None)?.goal;
                let report = est
                    .get(kind)
                    .ok_or_else(|| Error::InvalidArgument(format!("{} is not a goal estimator", kind.name())))?;
                let (i_eff, i_osc) = indices(report, err).unwrap_or((f64::NAN, f64::NAN));
                let entry = HistoryStep {
                    step,
                    dofs: solve.u.dofs.n_dofs,
                    true_err: err.abs(),
                    eta: report.global_value,
                    i_eff,
                    i_osc,
                    rate: None,
                };
                (report.per_cell.clone(), entry)
            }
        };
        log::info!("{} step {step}: {} dofs, error {:e}", case.name, entry.dofs, entry.true_err);
        history.push(entry);
        if step < steps {
            let marked = mark_fixed_fraction(&mesh, &indicators, fraction);
            mesh = mesh.refine(&marked)?;
        }
    }
    Ok((history, mesh))
}
