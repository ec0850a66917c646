//! Raviart–Thomas elements on the reference square.
//!
//! The element with index `k` has x-component in `Q^{k,k-1}` and y-component in
//! `Q^{k-1,k}`, so its divergence ranges over `Q^{k-1}` and its dimension is `2k(k+1)`.
//!
//! Degrees of freedom, in this order:
//! 1. per side `s` and `l < k`: the moment of the normal component (taken in the positive
//!    axis direction, i.e. `x` on sides 0 and 1, `y` on sides 2 and 3) against `P_l` along
//!    the side parameter;
//! 2. moments of the x-component against `P_a(x) P_b(y)`, `a <= k-2`, `b <= k-1`;
//! 3. moments of the y-component against `P_a(x) P_b(y)`, `a <= k-1`, `b <= k-2`.
//!
//! `P_j` are the Legendre polynomials shifted to `[0, 1]`. The shape functions are dual to
//! these functionals, so the normal trace of side function `(s, l)` on side `s` equals
//! `(2l + 1) P_l` and vanishes on the other sides.
//!
//! Physical fields are obtained by the contravariant Piola map `w = J w_hat / det J`.

use super::poly::{legendre, legendre_poly, Poly1, Poly2};
use nalgebra::DMatrix;

#[derive(Debug, Clone)]
pub struct RtElement {
    pub k: usize,
    pub dim: usize,
    /// Legendre coefficients of the x-components, `a + (k + 1) b` for `P_a(x) P_b(y)`.
    coef_x: Vec<Vec<f64>>,
    /// Legendre coefficients of the y-components, `a + k b` for `P_a(x) P_b(y)`.
    coef_y: Vec<Vec<f64>>,
    /// Legendre coefficients of the divergences, `a + k b`.
    coef_div: Vec<Vec<f64>>,
    mass_xx: DMatrix<f64>,
    mass_xy: DMatrix<f64>,
    mass_yy: DMatrix<f64>,
    /// Row `a + k b`: integral of `div w_j` against `P_a(x) P_b(y)`.
    pub div_moments: DMatrix<f64>,
}

fn norm2(a: usize) -> f64 {
    1.0 / (2 * a + 1) as f64
}

impl RtElement {
    pub fn new(k: usize) -> Self {
        assert!(k >= 1, "Raviart-Thomas index starts at 1");
        let dim = 2 * k * (k + 1);
        let nx = (k + 1) * k;
        let sign = |a: usize| if a % 2 == 0 { 1.0 } else { -1.0 };

        // Columns: primal Legendre products, x-component ones first.
        let mut dof_matrix = DMatrix::zeros(dim, dim);
        let int_x0 = 4 * k;
        let int_y0 = 4 * k + (k - 1) * k;
        for b in 0..k {
            for a in 0..=k {
                let col = a + (k + 1) * b;
                dof_matrix[(b, col)] = sign(a) * norm2(b);
                dof_matrix[(k + b, col)] = norm2(b);
                if a + 1 < k {
                    dof_matrix[(int_x0 + a + (k - 1) * b, col)] = norm2(a) * norm2(b);
                }
            }
        }
        for b in 0..=k {
            for a in 0..k {
                let col = nx + a + k * b;
                dof_matrix[(2 * k + a, col)] = sign(b) * norm2(a);
                dof_matrix[(3 * k + a, col)] = norm2(a);
                if b + 1 < k {
                    dof_matrix[(int_y0 + a + k * b, col)] = norm2(a) * norm2(b);
                }
            }
        }
        let inv = dof_matrix
            .try_inverse()
            .expect("Raviart-Thomas degrees of freedom are unisolvent");

        let coef_x: Vec<Vec<f64>> =
            (0..dim).map(|j| (0..nx).map(|m| inv[(m, j)]).collect()).collect();
        let coef_y: Vec<Vec<f64>> =
            (0..dim).map(|j| (0..nx).map(|m| inv[(nx + m, j)]).collect()).collect();

        // d/dt P_a = 2 sum_{m < a, a - m odd} (2m + 1) P_m on [0, 1]
        let dleg = |a: usize, m: usize| -> f64 {
            if m < a && (a - m) % 2 == 1 {
                2.0 * (2 * m + 1) as f64
            } else {
                0.0
            }
        };
        let coef_div: Vec<Vec<f64>> = (0..dim)
            .map(|j| {
                let mut d = vec![0.0; k * k];
                for b in 0..k {
                    for a in 0..=k {
                        let c = coef_x[j][a + (k + 1) * b];
                        for m in 0..a {
                            d[m + k * b] += c * dleg(a, m);
                        }
                    }
                }
                for b in 0..=k {
                    for a in 0..k {
                        let c = coef_y[j][a + k * b];
                        for m in 0..b {
                            d[a + k * m] += c * dleg(b, m);
                        }
                    }
                }
                d
            })
            .collect();

        let mass_xx = DMatrix::from_fn(dim, dim, |i, j| {
            let mut s = 0.0;
            for b in 0..k {
                for a in 0..=k {
                    let m = a + (k + 1) * b;
                    s += coef_x[i][m] * coef_x[j][m] * norm2(a) * norm2(b);
                }
            }
            s
        });
        let mass_yy = DMatrix::from_fn(dim, dim, |i, j| {
            let mut s = 0.0;
            for b in 0..=k {
                for a in 0..k {
                    let m = a + k * b;
                    s += coef_y[i][m] * coef_y[j][m] * norm2(a) * norm2(b);
                }
            }
            s
        });
        let mass_xy = DMatrix::from_fn(dim, dim, |i, j| {
            let mut s = 0.0;
            for b in 0..k {
                for a in 0..k {
                    s += coef_x[i][a + (k + 1) * b] * coef_y[j][a + k * b] * norm2(a) * norm2(b);
                }
            }
            s
        });
        let div_moments = DMatrix::from_fn(k * k, dim, |r, j| {
            let (a, b) = (r % k, r / k);
            coef_div[j][r] * norm2(a) * norm2(b)
        });

        RtElement { k, dim, coef_x, coef_y, coef_div, mass_xx, mass_xy, mass_yy, div_moments }
    }

    pub fn side_dof(&self, side: usize, l: usize) -> usize {
        side * self.k + l
    }

    /// Vector values and divergences of all shape functions at a reference point.
    pub fn eval(&self, point: [f64; 2]) -> (Vec<[f64; 2]>, Vec<f64>) {
        let k = self.k;
        let px = legendre(k, point[0]);
        let py = legendre(k, point[1]);
        let mut vals = Vec::with_capacity(self.dim);
        let mut divs = Vec::with_capacity(self.dim);
        for j in 0..self.dim {
            let mut vx = 0.0;
            for b in 0..k {
                for a in 0..=k {
                    vx += self.coef_x[j][a + (k + 1) * b] * px[a] * py[b];
                }
            }
            let mut vy = 0.0;
            for b in 0..=k {
                for a in 0..k {
                    vy += self.coef_y[j][a + k * b] * px[a] * py[b];
                }
            }
            let mut d = 0.0;
            for b in 0..k {
                for a in 0..k {
                    d += self.coef_div[j][a + k * b] * px[a] * py[b];
                }
            }
            vals.push([vx, vy]);
            divs.push(d);
        }
        (vals, divs)
    }

    /// Legendre coefficients (`a + k b`) of the divergence of shape function `j`.
    pub fn div_coefficients(&self, j: usize) -> &[f64] {
        &self.coef_div[j]
    }

    /// Mass matrix `int w_i . g w_j` over the reference square for a constant symmetric
    /// 2x2 weight `g`. With `g = J^T A^{-1} J / det J` this is the physical
    /// `A^{-1}`-weighted mass matrix of Piola-mapped fields on an affine cell.
    pub fn mass(&self, g: [[f64; 2]; 2]) -> DMatrix<f64> {
        let mut m = &self.mass_xx * g[0][0] + &self.mass_yy * g[1][1];
        if g[0][1] != 0.0 || g[1][0] != 0.0 {
            m += &self.mass_xy * g[0][1] + self.mass_xy.transpose() * g[1][0];
        }
        m
    }

    /// Degrees of freedom of a polynomial reference field, computed exactly.
    pub fn dofs_of_polys(&self, x: &Poly2, y: &Poly2) -> Vec<f64> {
        dofs_of_polys(self.k, x, y)
    }

    /// Degrees of freedom of an arbitrary reference field, by Gauss quadrature with `n`
    /// points per direction.
    pub fn dofs_of_field(&self, n: usize, f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
        let k = self.k;
        let rule = super::GaussRule1d::new(n);
        let mut out = vec![0.0; self.dim];
        for side in 0..4 {
            for (&t, &w) in rule.points.iter().zip(&rule.weights) {
                let (pt, comp) = match side {
                    0 => ([0.0, t], 0),
                    1 => ([1.0, t], 0),
                    2 => ([t, 0.0], 1),
                    _ => ([t, 1.0], 1),
                };
                let v = f(pt)[comp];
                let p = legendre(k, t);
                for l in 0..k {
                    out[side * k + l] += w * v * p[l];
                }
            }
        }
        let mut idx = 4 * k;
        let n_x = (k - 1) * k;
        for (&y, &wy) in rule.points.iter().zip(&rule.weights) {
            let py = legendre(k, y);
            for (&x, &wx) in rule.points.iter().zip(&rule.weights) {
                let px = legendre(k, x);
                let v = f([x, y]);
                let w = wx * wy;
                let mut i = 0;
                for b in 0..k {
                    for a in 0..k.saturating_sub(1) {
                        out[idx + i] += w * v[0] * px[a] * py[b];
                        i += 1;
                    }
                }
                let mut i = 0;
                for b in 0..k.saturating_sub(1) {
                    for a in 0..k {
                        out[idx + n_x + i] += w * v[1] * px[a] * py[b];
                        i += 1;
                    }
                }
            }
        }
        idx += 2 * n_x;
        debug_assert_eq!(idx, self.dim);
        out
    }

    /// Moments against `P_l(t)`, `l < k`, of the normal trace of the side functions of one
    /// side, restricted to the sub-interval `[s0, s1]` of the side parameter and measured in
    /// the sub-interval's own parameter `t`. Entry `(l, m)` belongs to side function `m`.
    /// The factor `s1 - s0` converts to physical flux moments.
    pub fn side_trace_moments(&self, s0: f64, s1: f64) -> DMatrix<f64> {
        let k = self.k;
        let map = Poly1 { coeffs: vec![s0, s1 - s0] };
        DMatrix::from_fn(k, k, |l, m| {
            let pm = compose(&legendre_poly(m), &map);
            let mut prod = pm.mul(&legendre_poly(l));
            prod.scale((2 * m + 1) as f64 * (s1 - s0));
            prod.integral()
        })
    }
}

/// `p(q(t))` for a linear `q`.
fn compose(p: &Poly1, q: &Poly1) -> Poly1 {
    let mut out = Poly1::zero();
    let mut pow = Poly1 { coeffs: vec![1.0] };
    for &c in &p.coeffs {
        let mut term = pow.clone();
        term.scale(c);
        out.add_assign(&term);
        pow = pow.mul(q);
    }
    out
}

fn dofs_of_polys(k: usize, x: &Poly2, y: &Poly2) -> Vec<f64> {
    let dim = 2 * k * (k + 1);
    let leg: Vec<Poly1> = (0..k).map(legendre_poly).collect();
    let mut out = Vec::with_capacity(dim);
    for side in 0..4 {
        let trace = match side {
            0 | 1 => x.restrict_to_side(side),
            _ => y.restrict_to_side(side),
        };
        for p in &leg {
            out.push(trace.mul(p).integral());
        }
    }
    for b in 0..k {
        for a in 0..k.saturating_sub(1) {
            out.push(x.mul(&Poly2::tensor(&leg[a], &leg[b])).integral());
        }
    }
    for b in 0..k.saturating_sub(1) {
        for a in 0..k {
            out.push(y.mul(&Poly2::tensor(&leg[a], &leg[b])).integral());
        }
    }
    debug_assert_eq!(out.len(), dim);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elements::poly::legendre;

    #[test]
    fn dimensions() {
        assert_eq!(RtElement::new(1).dim, 4);
        assert_eq!(RtElement::new(2).dim, 12);
        assert_eq!(RtElement::new(3).dim, 24);
    }

    #[test]
    fn shape_functions_are_dual_to_dofs() {
        for k in 1..=4 {
            let e = RtElement::new(k);
            for j in 0..e.dim {
                let d = e.dofs_of_field(k + 2, |p| e.eval(p).0[j]);
                for (i, v) in d.iter().enumerate() {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((v - expected).abs() < 1e-13, "k={k} i={i} j={j}: {v}");
                }
            }
        }
    }

    #[test]
    fn normal_traces_are_legendre() {
        let e = RtElement::new(3);
        for side in 0..4 {
            for l in 0..3 {
                let j = e.side_dof(side, l);
                for other in 0..4 {
                    let comp = if other < 2 { 0 } else { 1 };
                    for &t in &[0.1, 0.5, 0.8] {
                        let pt = match other {
                            0 => [0.0, t],
                            1 => [1.0, t],
                            2 => [t, 0.0],
                            _ => [t, 1.0],
                        };
                        let tr = e.eval(pt).0[j][comp];
                        let expected =
                            if other == side { (2 * l + 1) as f64 * legendre(2, t)[l] } else { 0.0 };
                        assert!((tr - expected).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn constant_field_is_divergence_free() {
        let e = RtElement::new(1);
        let c = e.dofs_of_field(3, |_| [1.0, 0.0]);
        for &pt in &[[0.2, 0.3], [0.9, 0.1]] {
            let (v, d) = e.eval(pt);
            let mut val = [0.0; 2];
            let mut div = 0.0;
            for j in 0..e.dim {
                val[0] += c[j] * v[j][0];
                val[1] += c[j] * v[j][1];
                div += c[j] * d[j];
            }
            assert!((val[0] - 1.0).abs() < 1e-12 && val[1].abs() < 1e-12);
            assert!(div.abs() < 1e-12);
        }
    }

    #[test]
    fn identity_field_reproduced_by_lowest_order() {
        let e = RtElement::new(1);
        let c = e.dofs_of_field(3, |p| p);
        let (v, _) = e.eval([0.3, 0.7]);
        let x: f64 = (0..4).map(|j| c[j] * v[j][0]).sum();
        let y: f64 = (0..4).map(|j| c[j] * v[j][1]).sum();
        assert!((x - 0.3).abs() < 1e-12 && (y - 0.7).abs() < 1e-12);
    }

    #[test]
    fn quadrature_and_exact_dofs_agree() {
        let e = RtElement::new(3);
        let fx = Poly2::interpolate(3, 2, |[x, y]| x * x * y + 0.3 * x - y);
        let fy = Poly2::interpolate(2, 3, |[x, y]| y * y * y - x * y);
        let exact = e.dofs_of_polys(&fx, &fy);
        let quad = e.dofs_of_field(6, |p| [fx.eval(p), fy.eval(p)]);
        for (a, b) in exact.iter().zip(&quad) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mass_matches_quadrature() {
        let e = RtElement::new(3);
        let g = [[1.3, 0.2], [0.2, 0.7]];
        let m = e.mass(g);
        let rule = crate::elements::QuadratureRule::tensor_gauss(5);
        for (i, j) in [(0, 0), (3, 17), (20, 5), (23, 23)] {
            let q = rule.integrate(|p| {
                let v = e.eval(p).0;
                let a = v[i];
                let b = v[j];
                a[0] * (g[0][0] * b[0] + g[0][1] * b[1]) + a[1] * (g[1][0] * b[0] + g[1][1] * b[1])
            });
            assert!((q - m[(i, j)]).abs() < 1e-13);
        }
    }

    #[test]
    fn divergence_matches_finite_differences() {
        let e = RtElement::new(2);
        let h = 1e-6;
        let pt = [0.4, 0.3];
        let (_, d) = e.eval(pt);
        let xp = e.eval([pt[0] + h, pt[1]]).0;
        let xm = e.eval([pt[0] - h, pt[1]]).0;
        let yp = e.eval([pt[0], pt[1] + h]).0;
        let ym = e.eval([pt[0], pt[1] - h]).0;
        for j in 0..e.dim {
            let fd = (xp[j][0] - xm[j][0] + yp[j][1] - ym[j][1]) / (2.0 * h);
            assert!((fd - d[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn half_side_moments_of_full_side_are_identity() {
        let e = RtElement::new(3);
        let full = e.side_trace_moments(0.0, 1.0);
        assert!((full - DMatrix::identity(3, 3)).abs().max() < 1e-12);
        let lo = e.side_trace_moments(0.0, 0.5);
        let hi = e.side_trace_moments(0.5, 1.0);
        // total flux through the two halves equals the flux through the side
        for m in 0..3 {
            let total = lo[(0, m)] + hi[(0, m)];
            let expected = if m == 0 { 1.0 } else { 0.0 };
            assert!((total - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn divergence_moments_match_quadrature() {
        let e = RtElement::new(2);
        let rule = crate::elements::QuadratureRule::tensor_gauss(4);
        for j in 0..e.dim {
            for b in 0..2 {
                for a in 0..2 {
                    let q = rule.integrate(|p| {
                        e.eval(p).1[j] * legendre(1, p[0])[a] * legendre(1, p[1])[b]
                    });
                    assert!((q - e.div_moments[(a + 2 * b, j)]).abs() < 1e-12);
                }
            }
        }
    }
}
