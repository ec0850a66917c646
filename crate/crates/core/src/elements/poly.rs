//! Small dense polynomials on the unit interval and the unit square.
//!
//! Coefficients are stored in the monomial basis of the reference coordinates. Degrees in
//! this crate never exceed about eight, where the monomial basis on `[0, 1]` is adequate.

use nalgebra::DMatrix;

/// Shifted Legendre polynomials `P_j(2t - 1)`, `j = 0..=n`, evaluated at `t`.
pub fn legendre(n: usize, t: f64) -> Vec<f64> {
    let x = 2.0 * t - 1.0;
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n >= 1 {
        out.push(x);
    }
    for k in 2..=n {
        let kf = k as f64;
        let v = ((2.0 * kf - 1.0) * x * out[k - 1] - (kf - 1.0) * out[k - 2]) / kf;
        out.push(v);
    }
    out
}

/// Shifted Legendre polynomials and their derivatives with respect to `t`.
pub fn legendre_with_derivatives(n: usize, t: f64) -> (Vec<f64>, Vec<f64>) {
    let p = legendre(n, t);
    let mut d = vec![0.0; n + 1];
    // P_k' = P_{k-2}' + (2k - 1) P_{k-1} in x = 2t - 1, times 2 for the chain rule
    for k in 1..=n {
        let prev2 = if k >= 2 { d[k - 2] } else { 0.0 };
        d[k] = prev2 + 2.0 * (2 * k - 1) as f64 * p[k - 1];
    }
    (p, d)
}

/// Shifted Legendre polynomial `P_n(2t - 1)` in the monomial basis of `t`.
pub fn legendre_poly(n: usize) -> Poly1 {
    let x = Poly1 { coeffs: vec![-1.0, 2.0] };
    let mut prev = Poly1 { coeffs: vec![1.0] };
    if n == 0 {
        return prev;
    }
    let mut cur = x.clone();
    for k in 2..=n {
        let kf = k as f64;
        let mut next = x.mul(&cur);
        next.scale((2.0 * kf - 1.0) / kf);
        let mut tail = prev.clone();
        tail.scale(-(kf - 1.0) / kf);
        next.add_assign(&tail);
        prev = cur;
        cur = next;
    }
    cur
}

/// Univariate polynomial `sum_i c_i t^i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly1 {
    pub coeffs: Vec<f64>,
}

impl Poly1 {
    pub fn zero() -> Self {
        Poly1 { coeffs: vec![0.0] }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    /// Linear polynomial with `p(0) = a`, `p(1) = b`.
    pub fn linear(a: f64, b: f64) -> Self {
        Poly1 { coeffs: vec![a, b - a] }
    }

    pub fn mul(&self, other: &Poly1) -> Poly1 {
        let mut coeffs = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        Poly1 { coeffs }
    }

    pub fn add_assign(&mut self, other: &Poly1) {
        if other.coeffs.len() > self.coeffs.len() {
            self.coeffs.resize(other.coeffs.len(), 0.0);
        }
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for c in &mut self.coeffs {
            *c *= s;
        }
    }

    /// Interpolates `f` by a polynomial of the given degree.
    pub fn interpolate(degree: usize, f: impl Fn(f64) -> f64) -> Self {
        let nodes = interpolation_nodes(degree);
        let vals: Vec<f64> = nodes.iter().map(|&t| f(t)).collect();
        let inv = inverse_vandermonde(degree);
        let coeffs = (0..=degree)
            .map(|i| (0..=degree).map(|j| inv[(i, j)] * vals[j]).sum())
            .collect();
        Poly1 { coeffs }
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn derivative(&self) -> Poly1 {
        if self.coeffs.len() == 1 {
            return Poly1::zero();
        }
        let coeffs = self.coeffs.iter().enumerate().skip(1).map(|(i, c)| i as f64 * c).collect();
        Poly1 { coeffs }
    }

    /// Exact integral over `[0, 1]`.
    pub fn integral(&self) -> f64 {
        self.coeffs.iter().enumerate().map(|(i, c)| c / (i + 1) as f64).sum()
    }
}

/// Bivariate tensor polynomial `sum_{i,j} c_{ij} x^i y^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly2 {
    pub deg_x: usize,
    pub deg_y: usize,
    /// Row-major in `j`: `coeffs[i + (deg_x + 1) * j]` multiplies `x^i y^j`.
    pub coeffs: Vec<f64>,
}

impl Poly2 {
    pub fn zero() -> Self {
        Poly2 { deg_x: 0, deg_y: 0, coeffs: vec![0.0] }
    }

    /// The product `px(x) * py(y)`.
    pub fn tensor(px: &Poly1, py: &Poly1) -> Self {
        let deg_x = px.degree();
        let deg_y = py.degree();
        let mut coeffs = vec![0.0; (deg_x + 1) * (deg_y + 1)];
        for (j, b) in py.coeffs.iter().enumerate() {
            for (i, a) in px.coeffs.iter().enumerate() {
                coeffs[i + (deg_x + 1) * j] = a * b;
            }
        }
        Poly2 { deg_x, deg_y, coeffs }
    }

    pub fn dx(&self) -> Poly2 {
        if self.deg_x == 0 {
            return Poly2 { deg_x: 0, deg_y: self.deg_y, coeffs: vec![0.0; self.deg_y + 1] };
        }
        let dx = self.deg_x - 1;
        let mut coeffs = vec![0.0; (dx + 1) * (self.deg_y + 1)];
        for j in 0..=self.deg_y {
            for i in 1..=self.deg_x {
                coeffs[(i - 1) + (dx + 1) * j] = i as f64 * self.coeff(i, j);
            }
        }
        Poly2 { deg_x: dx, deg_y: self.deg_y, coeffs }
    }

    pub fn dy(&self) -> Poly2 {
        if self.deg_y == 0 {
            return Poly2 { deg_x: self.deg_x, deg_y: 0, coeffs: vec![0.0; self.deg_x + 1] };
        }
        let dy = self.deg_y - 1;
        let mut coeffs = vec![0.0; (self.deg_x + 1) * (dy + 1)];
        for j in 1..=self.deg_y {
            for i in 0..=self.deg_x {
                coeffs[i + (self.deg_x + 1) * (j - 1)] = j as f64 * self.coeff(i, j);
            }
        }
        Poly2 { deg_x: self.deg_x, deg_y: dy, coeffs }
    }

    /// Exact integral over the unit square.
    pub fn integral(&self) -> f64 {
        let mut s = 0.0;
        for j in 0..=self.deg_y {
            for i in 0..=self.deg_x {
                s += self.coeff(i, j) / ((i + 1) * (j + 1)) as f64;
            }
        }
        s
    }

    pub fn scale(&mut self, s: f64) {
        for c in &mut self.coeffs {
            *c *= s;
        }
    }

    pub fn coeff(&self, i: usize, j: usize) -> f64 {
        if i > self.deg_x || j > self.deg_y {
            return 0.0;
        }
        self.coeffs[i + (self.deg_x + 1) * j]
    }

    pub fn eval(&self, [x, y]: [f64; 2]) -> f64 {
        let nx = self.deg_x + 1;
        let mut acc = 0.0;
        for j in (0..=self.deg_y).rev() {
            let row = &self.coeffs[nx * j..nx * (j + 1)];
            let r = row.iter().rev().fold(0.0, |a, &c| a * x + c);
            acc = acc * y + r;
        }
        acc
    }

    /// Bilinear polynomial through the corner values in lexicographic order
    /// `(0,0), (1,0), (0,1), (1,1)`.
    pub fn bilinear(corners: [f64; 4]) -> Self {
        let [a, b, c, d] = corners;
        Poly2 { deg_x: 1, deg_y: 1, coeffs: vec![a, b - a, c - a, a - b - c + d] }
    }

    pub fn mul(&self, other: &Poly2) -> Poly2 {
        let dx = self.deg_x + other.deg_x;
        let dy = self.deg_y + other.deg_y;
        let mut coeffs = vec![0.0; (dx + 1) * (dy + 1)];
        for j1 in 0..=self.deg_y {
            for i1 in 0..=self.deg_x {
                let a = self.coeff(i1, j1);
                if a == 0.0 {
                    continue;
                }
                for j2 in 0..=other.deg_y {
                    for i2 in 0..=other.deg_x {
                        coeffs[(i1 + i2) + (dx + 1) * (j1 + j2)] += a * other.coeff(i2, j2);
                    }
                }
            }
        }
        Poly2 { deg_x: dx, deg_y: dy, coeffs }
    }

    pub fn add_assign(&mut self, other: &Poly2) {
        let dx = self.deg_x.max(other.deg_x);
        let dy = self.deg_y.max(other.deg_y);
        if dx != self.deg_x || dy != self.deg_y {
            let mut coeffs = vec![0.0; (dx + 1) * (dy + 1)];
            for j in 0..=self.deg_y {
                for i in 0..=self.deg_x {
                    coeffs[i + (dx + 1) * j] = self.coeff(i, j);
                }
            }
            self.deg_x = dx;
            self.deg_y = dy;
            self.coeffs = coeffs;
        }
        for j in 0..=other.deg_y {
            for i in 0..=other.deg_x {
                self.coeffs[i + (dx + 1) * j] += other.coeff(i, j);
            }
        }
    }

    /// Restriction to the reference side `side` (0: x=0, 1: x=1, 2: y=0, 3: y=1) as a
    /// polynomial in the side parameter.
    pub fn restrict_to_side(&self, side: usize) -> Poly1 {
        match side {
            0 | 1 => {
                let x: f64 = if side == 0 { 0.0 } else { 1.0 };
                let coeffs = (0..=self.deg_y)
                    .map(|j| (0..=self.deg_x).map(|i| self.coeff(i, j) * x.powi(i as i32)).sum())
                    .collect();
                Poly1 { coeffs }
            }
            _ => {
                let y: f64 = if side == 2 { 0.0 } else { 1.0 };
                let coeffs = (0..=self.deg_x)
                    .map(|i| (0..=self.deg_y).map(|j| self.coeff(i, j) * y.powi(j as i32)).sum())
                    .collect();
                Poly1 { coeffs }
            }
        }
    }

    /// Interpolates `f` in the tensor space of the given degrees.
    pub fn interpolate(deg_x: usize, deg_y: usize, f: impl Fn([f64; 2]) -> f64) -> Self {
        let nx = interpolation_nodes(deg_x);
        let ny = interpolation_nodes(deg_y);
        let ix = inverse_vandermonde(deg_x);
        let iy = inverse_vandermonde(deg_y);
        let mut vals = DMatrix::zeros(deg_x + 1, deg_y + 1);
        for (b, &y) in ny.iter().enumerate() {
            for (a, &x) in nx.iter().enumerate() {
                vals[(a, b)] = f([x, y]);
            }
        }
        let c = &ix * vals * iy.transpose();
        let mut coeffs = vec![0.0; (deg_x + 1) * (deg_y + 1)];
        for j in 0..=deg_y {
            for i in 0..=deg_x {
                coeffs[i + (deg_x + 1) * j] = c[(i, j)];
            }
        }
        Poly2 { deg_x, deg_y, coeffs }
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }
}

/// Chebyshev–Lobatto nodes on `[0, 1]` (a single midpoint for degree zero).
fn interpolation_nodes(degree: usize) -> Vec<f64> {
    if degree == 0 {
        return vec![0.5];
    }
    (0..=degree)
        .map(|i| 0.5 * (1.0 - (std::f64::consts::PI * i as f64 / degree as f64).cos()))
        .collect()
}

fn inverse_vandermonde(degree: usize) -> DMatrix<f64> {
    let nodes = interpolation_nodes(degree);
    let n = degree + 1;
    let v = DMatrix::from_fn(n, n, |r, c| nodes[r].powi(c as i32));
    v.try_inverse().expect("Vandermonde matrix on distinct nodes is invertible")
}
