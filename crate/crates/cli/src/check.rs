//! Quick invariant self-test on small meshes, run by the `check` subcommand.

use hypercircle::cases::{goal_solve, load_functional, manufactured_case, slit_case, TestCase};
use hypercircle::mesh::Mesh;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Outcome of one self-test.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn result(name: impl Into<String>, pass: bool, detail: String) -> CheckResult {
    CheckResult { name: name.into(), pass, detail }
}

fn mollifier_mass(case: &TestCase) -> CheckResult {
    let mass = case.goal.evaluate_function(|_| 1.0);
    result(format!("{} goal J(1) = 1", case.name), (mass - 1.0).abs() <= 1e-10, format!("J(1) = {mass:.15}"))
}

fn forcing_consistency(seed: u64) -> CheckResult {
    let case = manufactured_case(1);
    let exact = case.exact.clone().expect("manufactured solution");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-4;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x = [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)];
        let u = |dx: f64, dy: f64| (exact.u)([x[0] + dx, x[1] + dy]);
        let lap = (u(h, 0.0) + u(-h, 0.0) + u(0.0, h) + u(0.0, -h) - 4.0 * u(0.0, 0.0)) / (h * h);
        worst = worst.max((-lap - case.rhs.eval(x)).abs());
    }
    result("manufactured forcing equals -laplace u", worst < 1e-2, format!("max finite-difference defect {worst:.2e}"))
}

fn identities(case: &TestCase, n: usize, p: usize) -> Vec<CheckResult> {
    let label = format!("{} {n}x{n} p={p}", case.name);
    let est = Mesh::build_uniform(case.domain, n)
        .and_then(|mesh| goal_solve(case, &mesh, p).and_then(|s| s.estimates(case, &mesh).map(|e| (mesh, s, e))));
    let (mesh, solve, est) = match est {
        Ok(v) => v,
        Err(e) => return vec![result(format!("{label} estimators"), false, e.to_string())],
    };
    let rv = est.rho_varpi.global_value;
    let rt = est.rho_tau.global_value;
    let s2 = est.second_star.global_value;
    let dwr = est.dwr_star.global_value;
    let mut out = vec![
        result(
            format!("{label} rho_tau = rho_varpi"),
            (rt - rv).abs() <= 1e-9 * rv.abs(),
            format!("{rt:.6e} vs {rv:.6e}"),
        ),
        result(
            format!("{label} second_star = dwr_star"),
            (s2 - dwr).abs() <= 1e-9 * s2.abs(),
            format!("{s2:.6e} vs {dwr:.6e}"),
        ),
    ];
    // With homogeneous Dirichlet data J(u_h) and F(z_h) are the same bilinear form value.
    if case.exact.is_none() {
        let j = case.goal.evaluate_discrete(&mesh, &solve.u);
        let f = load_functional(case, &mesh, &solve.z);
        out.push(result(format!("{label} J(u_h) = F(z_h)"), (j - f).abs() <= 1e-10 * j.abs(), format!("{j:.12e} vs {f:.12e}")));
    }
    out
}

/// Runs every self-test; `seed` drives the random sample points.
pub fn run_checks(seed: u64) -> Vec<CheckResult> {
    let mut out = vec![mollifier_mass(&manufactured_case(1)), mollifier_mass(&slit_case(1)), forcing_consistency(seed)];
    for p in 1..=2 {
        out.extend(identities(&manufactured_case(p), 4, p));
        out.extend(identities(&slit_case(p), 8, p));
    }
    out
}
