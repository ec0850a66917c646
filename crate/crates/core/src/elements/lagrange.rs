//! Tensor-product Lagrange elements `Q^p` with equispaced nodes.
//!
//! Local node `i = ix + (p + 1) * iy` sits at `(ix / p, iy / p)`, so the corners are
//! `0`, `p`, `(p + 1) p` and `(p + 1)^2 - 1`.

/// Values, first and second derivatives of the 1D equispaced Lagrange basis of degree `p`.
pub fn lagrange_1d(p: usize, t: f64) -> ([f64; 9], [f64; 9], [f64; 9]) {
    assert!((1..=8).contains(&p), "Lagrange degree must lie in 1..=8");
    let nodes: Vec<f64> = (0..=p).map(|m| m as f64 / p as f64).collect();
    let mut val = [0.0; 9];
    let mut der = [0.0; 9];
    let mut sec = [0.0; 9];
    for m in 0..=p {
        let mut denom = 1.0;
        for n in 0..=p {
            if n != m {
                denom *= nodes[m] - nodes[n];
            }
        }
        let factors: Vec<f64> =
            (0..=p).filter(|&n| n != m).map(|n| t - nodes[n]).collect();
        let prod_except = |skip: &[usize]| -> f64 {
            factors
                .iter()
                .enumerate()
                .filter(|(i, _)| !skip.contains(i))
                .map(|(_, f)| f)
                .product()
        };
        val[m] = prod_except(&[]) / denom;
        let mut d = 0.0;
        let mut s = 0.0;
        for a in 0..factors.len() {
            d += prod_except(&[a]);
            for b in 0..factors.len() {
                if b != a {
                    s += prod_except(&[a, b]);
                }
            }
        }
        der[m] = d / denom;
        sec[m] = s / denom;
    }
    (val, der, sec)
}

/// The scalar `Q^p` element on the reference square.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangeElement {
    pub degree: usize,
    pub nodes: Vec<[f64; 2]>,
}

impl LagrangeElement {
    pub fn new(degree: usize) -> Self {
        let h = 1.0 / degree as f64;
        let mut nodes = Vec::with_capacity((degree + 1) * (degree + 1));
        for iy in 0..=degree {
            for ix in 0..=degree {
                nodes.push([ix as f64 * h, iy as f64 * h]);
            }
        }
        LagrangeElement { degree, nodes }
    }

    pub fn n_dofs(&self) -> usize {
        self.nodes.len()
    }

    /// Values and reference gradients of all shape functions at `point`.
    pub fn eval(&self, point: [f64; 2]) -> (Vec<f64>, Vec<[f64; 2]>) {
        let p = self.degree;
        let (vx, dx, _) = lagrange_1d(p, point[0]);
        let (vy, dy, _) = lagrange_1d(p, point[1]);
        let mut values = Vec::with_capacity(self.n_dofs());
        let mut grads = Vec::with_capacity(self.n_dofs());
        for iy in 0..=p {
            for ix in 0..=p {
                values.push(vx[ix] * vy[iy]);
                grads.push([dx[ix] * vy[iy], vx[ix] * dy[iy]]);
            }
        }
        (values, grads)
    }

    /// Reference Hessians `[d_xx, d_xy, d_yy]` of all shape functions at `point`.
    pub fn hessians(&self, point: [f64; 2]) -> Vec<[f64; 3]> {
        let p = self.degree;
        let (vx, dx, sx) = lagrange_1d(p, point[0]);
        let (vy, dy, sy) = lagrange_1d(p, point[1]);
        let mut out = Vec::with_capacity(self.n_dofs());
        for iy in 0..=p {
            for ix in 0..=p {
                out.push([sx[ix] * vy[iy], dx[ix] * dy[iy], vx[ix] * sy[iy]]);
            }
        }
        out
    }

    /// Local indices of the `p + 1` nodes on reference side `side`, ordered along the side
    /// parameter (increasing `y` on sides 0 and 1, increasing `x` on sides 2 and 3).
    pub fn side_nodes(&self, side: usize) -> Vec<usize> {
        let p = self.degree;
        let n = p + 1;
        match side {
            0 => (0..n).map(|iy| n * iy).collect(),
            1 => (0..n).map(|iy| p + n * iy).collect(),
            2 => (0..n).collect(),
            3 => (0..n).map(|ix| ix + n * p).collect(),
            _ => panic!("reference square has four sides"),
        }
    }

    /// Values of all shape functions at the quadrature points of `rule`, row per point.
    pub fn tabulate(&self, points: &[[f64; 2]]) -> Tabulation {
        let mut values = Vec::with_capacity(points.len());
        let mut grads = Vec::with_capacity(points.len());
        for &pt in points {
            let (v, g) = self.eval(pt);
            values.push(v);
            grads.push(g);
        }
        Tabulation { values, grads }
    }
}

/// Shape values and reference gradients at a fixed list of points.
#[derive(Debug, Clone)]
pub struct Tabulation {
    pub values: Vec<Vec<f64>>,
    pub grads: Vec<Vec<[f64; 2]>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q1_corner_values() {
        let e = LagrangeElement::new(1);
        assert_eq!(e.eval([0.0, 0.0]).0, vec![1.0, 0.0, 0.0, 0.0]);
        for v in e.eval([0.5, 0.5]).0 {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn kronecker_property() {
        for p in 1..=4 {
            let e = LagrangeElement::new(p);
            for (j, &x) in e.nodes.iter().enumerate() {
                let (v, _) = e.eval(x);
                for (i, vi) in v.iter().enumerate() {
                    let d = if i == j { 1.0 } else { 0.0 };
                    assert!((vi - d).abs() < 1e-12, "p={p} i={i} j={j}");
                }
            }
        }
    }

    #[test]
    fn partition_of_unity_and_gradient_sum() {
        for p in 1..=4 {
            let e = LagrangeElement::new(p);
            let (v, g) = e.eval([0.31, 0.83]);
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-13);
            let gx: f64 = g.iter().map(|g| g[0]).sum();
            let gy: f64 = g.iter().map(|g| g[1]).sum();
            assert!(gx.abs() < 1e-12 && gy.abs() < 1e-12);
            let h = e.hessians([0.31, 0.83]);
            for c in 0..3 {
                assert!(h.iter().map(|h| h[c]).sum::<f64>().abs() < 1e-10);
            }
        }
    }

    #[test]
    fn second_derivatives_match_finite_differences() {
        let e = LagrangeElement::new(2);
        let pt = [0.3, 0.6];
        let h = 1e-5;
        let hs = e.hessians(pt);
        let (_, gp) = e.eval([pt[0] + h, pt[1]]);
        let (_, gm) = e.eval([pt[0] - h, pt[1]]);
        let (_, gpy) = e.eval([pt[0], pt[1] + h]);
        let (_, gmy) = e.eval([pt[0], pt[1] - h]);
        for i in 0..9 {
            assert!(((gp[i][0] - gm[i][0]) / (2.0 * h) - hs[i][0]).abs() < 1e-6);
            assert!(((gp[i][1] - gm[i][1]) / (2.0 * h) - hs[i][1]).abs() < 1e-6);
            assert!(((gpy[i][1] - gmy[i][1]) / (2.0 * h) - hs[i][2]).abs() < 1e-6);
        }
    }

    #[test]
    fn side_nodes_lie_on_sides() {
        let e = LagrangeElement::new(3);
        for s in 0..4 {
            let nodes = e.side_nodes(s);
            for (m, &i) in nodes.iter().enumerate() {
                let x = e.nodes[i];
                let t = m as f64 / 3.0;
                let expected = match s {
                    0 => [0.0, t],
                    1 => [1.0, t],
                    2 => [t, 0.0],
                    _ => [t, 1.0],
                };
                assert_eq!(x, expected);
            }
        }
    }
}
