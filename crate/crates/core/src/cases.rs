//! Benchmark problems, goal functionals, analytic and reference solutions, and true-error
//! evaluation.

use crate::adapt::select_bulk;
use crate::elements::{GaussRule1d, QuadratureRule, RtElement};
use crate::error::{Error, Result};
use crate::estimate::{goal_estimates, pairwise_sum, reconstruct_zstar, GoalInputs};
use crate::flux::{compute_residual, reconstruct_local, BrokenFluxField};
use crate::galerkin::{
    energy_product, solve_dual, solve_global_mixed_flux, solve_primal, DataQuadrature,
    MetricTensor, RightHandSide,
};
use crate::mesh::{DomainSpec, Mesh};
use crate::space::ScalarField;
use sha2::{Digest, Sha256};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub type ScalarFn = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;

/// Default mollifier radius of the regularized point evaluations.
pub const DEFAULT_GOAL_RADIUS: f64 = 1.0 / 16.0;

#[derive(Clone)]
pub struct AnalyticSolution {
    pub u: ScalarFn,
    pub grad: VectorFn,
}

impl fmt::Debug for AnalyticSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("AnalyticSolution")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GoalKind {
    RegularizedPoint { center: [f64; 2], radius: f64 },
    VolumeAverage,
    Custom,
}

/// A linear functional `J(v) = int j v` given by its density `j`.
#[derive(Clone)]
pub struct GoalFunctional {
    pub kind: GoalKind,
    pub domain: DomainSpec,
    density: ScalarFn,
}

impl fmt::Debug for GoalFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GoalFunctional").field("kind", &self.kind).field("domain", &self.domain).finish()
    }
}

fn domain_box(domain: DomainSpec) -> ([f64; 2], [f64; 2]) {
    match domain {
        DomainSpec::UnitSquare => ([0.0, 0.0], [1.0, 1.0]),
        DomainSpec::Slit => ([-1.0, -1.0], [1.0, 1.0]),
    }
}

/// `(1 - r^2/eps^2)^2` scaled to unit mass.
pub fn mollifier(center: [f64; 2], radius: f64, x: [f64; 2]) -> f64 {
    let s = ((x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2)) / (radius * radius);
    if s >= 1.0 {
        0.0
    } else {
        3.0 / (std::f64::consts::PI * radius * radius) * (1.0 - s).powi(2)
    }
}

impl GoalFunctional {
    /// Mollified point evaluation; the support must stay strictly inside the domain.
    pub fn regularized_point(domain: DomainSpec, center: [f64; 2], radius: f64) -> Result<Self> {
        let (lo, hi) = domain_box(domain);
        let inside = radius > 0.0
            && (0..2).all(|i| center[i] - radius > lo[i] && center[i] + radius < hi[i]);
        let hits_slit = domain == DomainSpec::Slit && center[1].abs() < radius && center[0] + radius > 0.0;
        if !inside || hits_slit {
            return Err(Error::InvalidArgument(format!(
                "goal support of radius {radius} around ({}, {}) touches the boundary",
                center[0], center[1]
            )));
        }
        Ok(GoalFunctional {
            kind: GoalKind::RegularizedPoint { center, radius },
            domain,
            density: Arc::new(move |x| mollifier(center, radius, x)),
        })
    }

    pub fn volume_average(domain: DomainSpec) -> Self {
        let (lo, hi) = domain_box(domain);
        let area = (hi[0] - lo[0]) * (hi[1] - lo[1]);
        GoalFunctional { kind: GoalKind::VolumeAverage, domain, density: Arc::new(move |_| 1.0 / area) }
    }

    pub fn custom(domain: DomainSpec, density: impl Fn([f64; 2]) -> f64 + Send + Sync + 'static) -> Self {
        GoalFunctional { kind: GoalKind::Custom, domain, density: Arc::new(density) }
    }

    pub fn density(&self, x: [f64; 2]) -> f64 {
        (self.density)(x)
    }

    /// The functional as right-hand side of the dual problem.
    pub fn rhs(&self) -> RightHandSide {
        let d = self.density.clone();
        let rhs = RightHandSide::volume(move |x| d(x));
        match self.kind {
            GoalKind::RegularizedPoint { center, radius } => rhs.with_kink(center, radius),
            _ => rhs,
        }
    }

    /// `J(v_h)` with the quadrature of the dual load vector, so that `J(u_h)` equals the
    /// dual load applied to the coefficients of `u_h`.
    pub fn evaluate_discrete(&self, mesh: &Mesh, v: &ScalarField) -> f64 {
        let rhs = self.rhs();
        let quad = DataQuadrature::for_degree(v.dofs.degree());
        let per_cell: Vec<f64> = mesh
            .active
            .iter()
            .map(|&c| {
                let geo = mesh.geometry(c);
                let rule = quad.rule(&rhs, mesh, c);
                let mut s = 0.0;
                for (&xi, &w) in rule.points.iter().zip(&rule.weights) {
                    let d = self.density(geo.map(xi));
                    if d != 0.0 {
                        s += w * d * v.eval_in_cell(mesh, c, xi).0;
                    }
                }
                s * geo.det
            })
            .collect();
        pairwise_sum(&per_cell)
    }

    /// `J(f)` for an analytic function: polar Gauss–trapezoid quadrature for mollified
    /// points, a fine tensor rule over the domain box otherwise.
    pub fn evaluate_function(&self, f: impl Fn([f64; 2]) -> f64) -> f64 {
        match self.kind {
            GoalKind::RegularizedPoint { center, radius } => {
                let radial = GaussRule1d::new(24);
                let n_theta = 128;
                let mut s = 0.0;
                for (&t, &w) in radial.points.iter().zip(&radial.weights) {
                    let r = t * radius;
                    let mut ring = 0.0;
                    for j in 0..n_theta {
                        let th = 2.0 * std::f64::consts::PI * j as f64 / n_theta as f64;
                        ring += f([center[0] + r * th.cos(), center[1] + r * th.sin()]);
                    }
                    s += w * radius * r * mollifier(center, radius, [center[0] + r, center[1]]) * ring;
                }
                s * 2.0 * std::f64::consts::PI / n_theta as f64
            }
            _ => {
                let (lo, hi) = domain_box(self.domain);
                let m = 64;
                let rule = QuadratureRule::tensor_gauss(6);
                let h = [(hi[0] - lo[0]) / m as f64, (hi[1] - lo[1]) / m as f64];
                let mut s = 0.0;
                for j in 0..m {
                    for i in 0..m {
                        s += rule.integrate(|xi| {
                            let x = [lo[0] + (i as f64 + xi[0]) * h[0], lo[1] + (j as f64 + xi[1]) * h[1]];
                            self.density(x) * f(x)
                        });
                    }
                }
                s * h[0] * h[1]
            }
        }
    }
}

/// Settings of the adaptive high-order reference computation used when no analytic
/// solution is available.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceConfig {
    pub degree: usize,
    /// Refinement stops once the reference space has at least this many DOFs.
    pub target_dofs: usize,
    /// Bulk marking parameter of the reference refinement.
    pub bulk: f64,
    pub max_steps: usize,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig { degree: 2, target_dofs: 25_000, bulk: 0.5, max_steps: 80 }
    }
}

#[derive(Debug, Clone)]
pub struct TestCase {
    pub name: String,
    pub domain: DomainSpec,
    /// Starting grid of adaptive runs and of the reference refinement.
    pub n_initial: usize,
    /// Grid of level 1 in uniform studies.
    pub n_uniform: usize,
    pub a: MetricTensor,
    pub rhs: RightHandSide,
    pub g_dirichlet: ScalarFnDebug,
    pub exact: Option<AnalyticSolution>,
    pub goal: GoalFunctional,
    pub reference: ReferenceConfig,
}

/// A scalar function with a placeholder `Debug`.
#[derive(Clone)]
pub struct ScalarFnDebug(pub ScalarFn);

impl fmt::Debug for ScalarFnDebug {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<fn>")
    }
}

impl TestCase {
    pub fn dirichlet(&self, x: [f64; 2]) -> f64 {
        (self.g_dirichlet.0)(x)
    }

    pub fn initial_mesh(&self) -> Result<Mesh> {
        Mesh::build_uniform(self.domain, self.n_initial)
    }

    pub fn solve(&self, mesh: &Mesh, p: usize) -> Result<ScalarField> {
        let g = self.g_dirichlet.0.clone();
        solve_primal(mesh, p, &self.a, &self.rhs, move |x| g(x))
    }

    pub fn solve_dual(&self, mesh: &Mesh, p: usize) -> Result<ScalarField> {
        solve_dual(mesh, p, &self.a, &self.goal.rhs())
    }
}

pub const MANUFACTURED_CENTER: [f64; 2] = [0.5, 0.117];
pub const SLIT_GOAL_CENTER: [f64; 2] = [0.25, 0.75];

/// `u = exp(-100 |x - (1/2, 0.117)|^2)` on the unit square with matching Dirichlet data.
/// Runs start from a 16x16 grid for `p = 1` and 8x8 for `p >= 2`.
pub fn manufactured_case(p: usize) -> TestCase {
    let c = MANUFACTURED_CENTER;
    let u = move |x: [f64; 2]| (-100.0 * ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2))).exp();
    let grad = move |x: [f64; 2]| {
        let v = u(x);
        [-200.0 * (x[0] - c[0]) * v, -200.0 * (x[1] - c[1]) * v]
    };
    let f = move |x: [f64; 2]| -u(x) * (40000.0 * ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)) - 400.0);
    TestCase {
        name: "manufactured".into(),
        domain: DomainSpec::UnitSquare,
        n_initial: if p == 1 { 16 } else { 8 },
        n_uniform: if p == 1 { 16 } else { 8 },
        a: MetricTensor::identity(),
        rhs: RightHandSide::volume(f),
        g_dirichlet: ScalarFnDebug(Arc::new(u)),
        exact: Some(AnalyticSolution { u: Arc::new(u), grad: Arc::new(grad) }),
        goal: GoalFunctional::regularized_point(DomainSpec::UnitSquare, c, DEFAULT_GOAL_RADIUS)
            .expect("goal support inside the unit square"),
        reference: ReferenceConfig::default(),
    }
}

/// `-Δu = 1` on the slit domain with homogeneous Dirichlet data. Uniform studies start at
/// mesh size 1/16 (32x32 for `p = 1`, 16x16 for `p >= 2`), adaptive runs one level coarser.
pub fn slit_case(p: usize) -> TestCase {
    TestCase {
        name: "slit".into(),
        domain: DomainSpec::Slit,
        n_initial: if p == 1 { 16 } else { 8 },
        n_uniform: if p == 1 { 32 } else { 16 },
        a: MetricTensor::identity(),
        rhs: RightHandSide::volume(|_| 1.0),
        g_dirichlet: ScalarFnDebug(Arc::new(|_| 0.0)),
        exact: None,
        goal: GoalFunctional::regularized_point(DomainSpec::Slit, SLIT_GOAL_CENTER, DEFAULT_GOAL_RADIUS)
            .expect("goal support inside the slit domain"),
        reference: ReferenceConfig::default(),
    }
}

/// Looks a case up by name.
pub fn case_by_name(name: &str, p: usize) -> Option<TestCase> {
    match name {
        "manufactured" => Some(manufactured_case(p)),
        "slit" => Some(slit_case(p)),
        _ => None,
    }
}

/// `||grad u - grad u_h||^2_A` against an analytic gradient.
pub fn energy_error_analytic(mesh: &Mesh, a: &MetricTensor, u_h: &ScalarField, exact: &AnalyticSolution) -> f64 {
    let rule = QuadratureRule::tensor_gauss(u_h.dofs.degree() + 6);
    let per_cell: Vec<f64> = mesh
        .active
        .iter()
        .map(|&c| {
            let geo = mesh.geometry(c);
            let t = a.on_cell(&geo);
            geo.det
                * rule.integrate(|xi| {
                    let x = geo.map(xi);
                    let g = u_h.eval_in_cell(mesh, c, xi).1;
                    let ge = (exact.grad)(x);
                    let d = [g[0] - ge[0], g[1] - ge[1]];
                    d[0] * (t[0][0] * d[0] + t[0][1] * d[1]) + d[1] * (t[1][0] * d[0] + t[1][1] * d[1])
                })
        })
        .collect();
    pairwise_sum(&per_cell)
}

/// `||sigma - grad u||_A` for a reconstructed flux stored as `A sigma`.
pub fn theta_diagnostic(mesh: &Mesh, a: &MetricTensor, sigma: &BrokenFluxField, exact: &AnalyticSolution) -> f64 {
    let rt = RtElement::new(sigma.k);
    let rule = QuadratureRule::tensor_gauss(sigma.k + 5);
    let per_cell: Vec<f64> = mesh
        .active
        .iter()
        .map(|&c| {
            let geo = mesh.geometry(c);
            let t = a.on_cell(&geo);
            let ti = crate::galerkin::inverse(t);
            geo.det
                * rule.integrate(|xi| {
                    let w = sigma.eval(mesh, &rt, c, xi).0;
                    let g = (exact.grad)(geo.map(xi));
                    let ag = crate::galerkin::apply(t, g);
                    let d = [w[0] - ag[0], w[1] - ag[1]];
                    let e = crate::galerkin::apply(ti, d);
                    d[0] * e[0] + d[1] * e[1]
                })
        })
        .collect();
    pairwise_sum(&per_cell).sqrt()
}

/// Scalars of a reference computation.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceValues {
    /// Estimate of `||grad u||^2_A`.
    pub energy: f64,
    /// Estimate of `J(u)`.
    pub goal: f64,
    /// Estimated remaining energy error squared of the reference solution.
    pub energy_uncertainty: f64,
    /// Estimated remaining goal error of the reference solution.
    pub goal_uncertainty: f64,
    /// `(dofs, energy, goal)` after every reference step.
    pub history: Vec<(f64, f64, f64)>,
}

fn reference_key(case: &TestCase, cfg: &ReferenceConfig) -> [u8; 32] {
    let text = format!(
        "v2|{}|{:?}|{}|{}|{}|{:.17e}|{}|{:?}",
        case.name, case.domain, REFERENCE_GRID, cfg.degree, cfg.target_dofs, cfg.bulk, cfg.max_steps, case.goal.kind
    );
    Sha256::digest(text.as_bytes()).into()
}

/// Starting grid of the reference refinement, shared by all polynomial degrees of a case.
const REFERENCE_GRID: usize = 8;

/// Adaptive reference computation: degree `cfg.degree`, refinement driven jointly by
/// normalized energy indicators and goal indicators. Energy and goal values are corrected
/// by the mixed-flux energy estimate and the goal estimate of the finest reference mesh.
pub fn compute_reference(case: &TestCase, cfg: &ReferenceConfig) -> Result<ReferenceValues> {
    let p = cfg.degree;
    let mut mesh = Mesh::build_uniform(case.domain, REFERENCE_GRID)?;
    let quad = DataQuadrature::for_degree(p);
    let goal_rhs = case.goal.rhs();
    let mut history = Vec::new();
    for step in 0..=cfg.max_steps {
        let u = case.solve(&mesh, p)?;
        let z = case.solve_dual(&mesh, p)?;
        let r = compute_residual(&mesh, &case.a, &case.rhs, &quad, &u)?;
        let rz = compute_residual(&mesh, &case.a, &goal_rhs, &quad, &z)?;
        let (rho, _) = reconstruct_local(&mesh, &case.a, &u, &r)?;
        let (varpi, _) = reconstruct_local(&mesh, &case.a, &z, &rz)?;
        let eta_e = rho.cell_products(&mesh, &case.a, &rho)?;
        let eta_g = rho.cell_products(&mesh, &case.a, &varpi)?;
        let energy_u = energy_product(&mesh, &case.a, &u, &u);
        let goal_u = case.goal.evaluate_discrete(&mesh, &u);
        let goal_corr = pairwise_sum(&eta_g);
        let n_dofs = u.dofs.n_dofs;
        let done = n_dofs >= cfg.target_dofs || step == cfg.max_steps;
        if done {
            let w = solve_global_mixed_flux(&mesh, p + 2, &case.a, &r)?;
            let energy_corr = w.norm_squared(&mesh, &case.a);
            history.push((n_dofs as f64, energy_u + energy_corr, goal_u + goal_corr));
            log::info!("reference: {n_dofs} dofs, energy correction {energy_corr:e}, goal correction {goal_corr:e}");
            return Ok(ReferenceValues {
                energy: energy_u + energy_corr,
                goal: goal_u + goal_corr,
                energy_uncertainty: (pairwise_sum(&eta_e) - energy_corr).abs().max(energy_corr * 0.5),
                goal_uncertainty: goal_corr.abs(),
                history,
            });
        }
        history.push((n_dofs as f64, energy_u + pairwise_sum(&eta_e), goal_u + goal_corr));
        let se = pairwise_sum(&eta_e).max(f64::MIN_POSITIVE);
        let sg = eta_g.iter().map(|x| x.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
        let combined: Vec<f64> = eta_e.iter().zip(&eta_g).map(|(e, g)| e / se + g.abs() / sg).collect();
        let marked = select_bulk(&mesh.active, &combined, cfg.bulk);
        mesh = mesh.refine(&marked)?;
        log::debug!("reference step {step}: {n_dofs} dofs");
    }
    unreachable!("the loop returns on its last step")
}

const CACHE_MAGIC: &[u8; 8] = b"HCREF001";

fn encode(key: &[u8; 32], cfg: &ReferenceConfig, v: &ReferenceValues) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(key);
    out.extend_from_slice(&(v.history.len() as u64).to_le_bytes());
    out.extend_from_slice(&(cfg.degree as u64).to_le_bytes());
    let mut vals = vec![v.energy, v.goal, v.energy_uncertainty, v.goal_uncertainty];
    for h in &v.history {
        vals.extend_from_slice(&[h.0, h.1, h.2]);
    }
    for x in vals {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

fn decode(key: &[u8; 32], bytes: &[u8]) -> Option<ReferenceValues> {
    if bytes.len() < 56 || &bytes[..8] != CACHE_MAGIC || &bytes[8..40] != key {
        return None;
    }
    let steps = u64::from_le_bytes(bytes[40..48].try_into().ok()?) as usize;
    let vals: Vec<f64> = bytes[56..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    if vals.len() != 4 + 3 * steps || (bytes.len() - 56) % 8 != 0 {
        return None;
    }
    Some(ReferenceValues {
        energy: vals[0],
        goal: vals[1],
        energy_uncertainty: vals[2],
        goal_uncertainty: vals[3],
        history: vals[4..].chunks_exact(3).map(|c| (c[0], c[1], c[2])).collect(),
    })
}

/// Cache file of a reference computation inside `dir`.
pub fn reference_cache_path(case: &TestCase, cfg: &ReferenceConfig, dir: &Path) -> PathBuf {
    let key = reference_key(case, cfg);
    let hex: String = key[..8].iter().map(|b| format!("{b:02x}")).collect();
    dir.join(format!("reference-{}-{hex}.bin", case.name))
}

/// Reads the reference values from the cache in `dir`, computing and storing them if
/// absent or unreadable.
pub fn load_or_compute_reference(case: &TestCase, cfg: &ReferenceConfig, dir: &Path) -> Result<ReferenceValues> {
    let key = reference_key(case, cfg);
    let path = reference_cache_path(case, cfg, dir);
    if let Ok(bytes) = fs::read(&path) {
        if let Some(v) = decode(&key, &bytes) {
            return Ok(v);
        }
        log::warn!("ignoring unreadable reference cache {}", path.display());
    }
    let values = compute_reference(case, cfg)?;
    fs::create_dir_all(dir)?;
    let tmp = tempfile_in(dir, &path)?;
    fs::File::create(&tmp)?.write_all(&encode(&key, cfg, &values))?;
    fs::rename(&tmp, &path)?;
    Ok(values)
}

fn tempfile_in(dir: &Path, target: &Path) -> std::io::Result<PathBuf> {
    let stem = target.file_name().and_then(|s| s.to_str()).unwrap_or("reference");
    Ok(dir.join(format!(".{stem}.{}.tmp", std::process::id())))
}

/// True errors of a primal (and optionally dual) solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueErrors {
    /// `||grad u - grad u_h||^2_A`.
    pub energy_sq: f64,
    /// `J(u) - J(u_h)`.
    pub goal: f64,
    /// `||sigma_h - grad u||_A` when a flux and an analytic solution are available.
    pub theta: Option<f64>,
}

/// True errors against the analytic solution, or against reference values. The reference
/// energy error uses `||grad(u - u_h)||^2 = ||grad u||^2 - ||grad u_h||^2`, valid for
/// Galerkin solutions with exactly integrated data.
pub fn true_errors(
    case: &TestCase,
    mesh: &Mesh,
    u_h: &ScalarField,
    reference: Option<&ReferenceValues>,
    sigma: Option<&BrokenFluxField>,
) -> Result<TrueErrors> {
    let j_h = case.goal.evaluate_discrete(mesh, u_h);
    if let Some(exact) = &case.exact {
        let energy_sq = energy_error_analytic(mesh, &case.a, u_h, exact);
        let goal = case.goal.evaluate_function(|x| (exact.u)(x)) - j_h;
        let theta = sigma.map(|s| theta_diagnostic(mesh, &case.a, s, exact));
        return Ok(TrueErrors { energy_sq, goal, theta });
    }
    let r = reference.ok_or_else(|| Error::InvalidArgument(format!("case {} needs a reference solution", case.name)))?;
    let energy_sq = r.energy - energy_product(mesh, &case.a, u_h, u_h);
    Ok(TrueErrors { energy_sq, goal: r.goal - j_h, theta: None })
}

/// `F(v)` for volume data: `int f v` with the load quadrature.
pub fn load_functional(case: &TestCase, mesh: &Mesh, v: &ScalarField) -> f64 {
    GoalFunctional::custom(case.domain, {
        let rhs = case.rhs.clone();
        move |x| rhs.eval(x)
    })
    .evaluate_discrete(mesh, v)
}

/// Everything the goal-oriented estimators need on one mesh.
#[derive(Debug, Clone)]
pub struct GoalSolve {
    pub u: ScalarField,
    pub z: ScalarField,
    pub z_star: ScalarField,
    pub rho: BrokenFluxField,
    pub varpi: BrokenFluxField,
    pub residual: crate::flux::Residual,
}

/// Primal and dual solves plus both local reconstructions and `z*`.
pub fn goal_solve(case: &TestCase, mesh: &Mesh, p: usize) -> Result<GoalSolve> {
    let quad = DataQuadrature::for_degree(p);
    let u = case.solve(mesh, p)?;
    let z = case.solve_dual(mesh, p)?;
    let residual = compute_residual(mesh, &case.a, &case.rhs, &quad, &u)?;
    let rz = compute_residual(mesh, &case.a, &case.goal.rhs(), &quad, &z)?;
    let (rho, _) = reconstruct_local(mesh, &case.a, &u, &residual)?;
    let (varpi, _) = reconstruct_local(mesh, &case.a, &z, &rz)?;
    let z_star = reconstruct_zstar(mesh, &z);
    Ok(GoalSolve { u, z, z_star, rho, varpi, residual })
}

impl GoalSolve {
    pub fn estimates(&self, case: &TestCase, mesh: &Mesh) -> Result<crate::estimate::GoalEstimates> {
        goal_estimates(&GoalInputs {
            mesh,
            a: &case.a,
            rho: &self.rho,
            varpi: &self.varpi,
            u_h: &self.u,
            z_h: &self.z,
            z_star: &self.z_star,
            residual: &self.residual,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn manufactured_peak_and_laplacian() {
        let case = manufactured_case(1);
        let ex = case.exact.clone().unwrap();
        assert!(((ex.u)(MANUFACTURED_CENTER) - 1.0).abs() < 1e-15);
        assert!((case.rhs.eval(MANUFACTURED_CENTER) - 400.0).abs() < 1e-12);
        // finite differences of the analytic solution
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let h = 1e-4;
        for _ in 0..100 {
            let x = [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)];
            let u = |d: [f64; 2]| (ex.u)([x[0] + d[0], x[1] + d[1]]);
            let lap = (u([h, 0.0]) + u([-h, 0.0]) + u([0.0, h]) + u([0.0, -h]) - 4.0 * u([0.0, 0.0])) / (h * h);
            assert!((-lap - case.rhs.eval(x)).abs() < 1e-3 * (1.0 + case.rhs.eval(x).abs()));
            let g = (ex.grad)(x);
            let gx = (u([h, 0.0]) - u([-h, 0.0])) / (2.0 * h);
            assert!((g[0] - gx).abs() < 1e-5);
        }
    }

    #[test]
    fn mollifier_normalized_and_reproduces_linear() {
        let g = GoalFunctional::regularized_point(DomainSpec::Slit, SLIT_GOAL_CENTER, 1.0 / 16.0).unwrap();
        assert!((g.evaluate_function(|_| 1.0) - 1.0).abs() < 1e-10);
        let l = |x: [f64; 2]| 2.0 + 3.0 * x[0] - x[1];
        assert!((g.evaluate_function(l) - l(SLIT_GOAL_CENTER)).abs() < 1e-10);
        let m = Mesh::build_uniform(DomainSpec::Slit, 16).unwrap();
        let d = std::sync::Arc::new(crate::space::DofMap::distribute(&m, crate::space::DofFamily::Lagrange(1)));
        let one = ScalarField::interpolate(&m, d, |_| 1.0);
        let j1 = g.evaluate_discrete(&m, &one);
        assert!((j1 - 1.0).abs() < 1e-12, "{j1}");
    }

    #[test]
    fn goal_support_must_be_interior() {
        assert!(GoalFunctional::regularized_point(DomainSpec::UnitSquare, [0.03, 0.5], 0.0625).is_err());
        assert!(GoalFunctional::regularized_point(DomainSpec::Slit, [0.5, 0.02], 0.0625).is_err());
        assert!(GoalFunctional::regularized_point(DomainSpec::Slit, [-0.5, 0.02], 0.0625).is_ok());
        let avg = GoalFunctional::volume_average(DomainSpec::Slit);
        assert!((avg.evaluate_function(|_| 1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_interpolant_has_small_error() {
        let mut case = manufactured_case(1);
        let quad_u = |x: [f64; 2]| x[0] * x[0] - x[1] * x[1];
        case.exact = Some(AnalyticSolution { u: Arc::new(quad_u), grad: Arc::new(|x| [2.0 * x[0], -2.0 * x[1]]) });
        let m = Mesh::build_uniform(DomainSpec::UnitSquare, 4).unwrap();
        let d = std::sync::Arc::new(crate::space::DofMap::distribute(&m, crate::space::DofFamily::Lagrange(2)));
        let uh = ScalarField::interpolate(&m, d, quad_u);
        let e = true_errors(&case, &m, &uh, None, None).unwrap();
        assert!(e.energy_sq < 1e-20 && e.goal.abs() < 1e-10, "{e:?}");
    }

    #[test]
    fn cache_round_trip_and_rejection() {
        let case = slit_case(1);
        let cfg = ReferenceConfig::default();
        let key = reference_key(&case, &cfg);
        let v = ReferenceValues {
            energy: 0.3,
            goal: 0.1,
            energy_uncertainty: 1e-9,
            goal_uncertainty: 1e-12,
            history: vec![(10.0, 0.2, 0.05), (40.0, 0.29, 0.09)],
        };
        let bytes = encode(&key, &cfg, &v);
        assert_eq!(decode(&key, &bytes), Some(v.clone()));
        let other = reference_key(&case, &ReferenceConfig { target_dofs: 5, ..cfg });
        assert_eq!(decode(&other, &bytes), None);
        assert_eq!(decode(&key, &bytes[..bytes.len() - 3]), None);
        let dir = tempfile::tempdir().unwrap();
        let small = ReferenceConfig { target_dofs: 1, ..cfg };
        let a = load_or_compute_reference(&case, &small, dir.path()).unwrap();
        assert!(reference_cache_path(&case, &small, dir.path()).exists());
        let b = load_or_compute_reference(&case, &small, dir.path()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn slit_duality_and_symmetry() {
        let case = slit_case(1);
        let m = Mesh::build_uniform(DomainSpec::Slit, 8).unwrap();
        let u = case.solve(&m, 1).unwrap();
        let z = case.solve_dual(&m, 1).unwrap();
        let ju = case.goal.evaluate_discrete(&m, &u);
        let fz = load_functional(&case, &m, &z);
        assert!((ju - fz).abs() <= 1e-10 * ju.abs());
        for x in [[0.3, 0.4], [-0.6, 0.2], [0.9, 0.85]] {
            let a = u.evaluate(&m, x).unwrap().0;
            let b = u.evaluate(&m, [x[0], -x[1]]).unwrap().0;
            assert!((a - b).abs() < 1e-10 && a > 0.0);
        }
    }
}
