//! Gauss–Legendre rules on the unit interval and their tensor products on the unit square.

use std::f64::consts::PI;

/// Gauss–Legendre rule on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule1d {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule1d {
    /// `n`-point rule, exact for polynomials of degree `2n - 1`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "a Gauss rule needs at least one point");
        let mut points = vec![0.0; n];
        let mut weights = vec![0.0; n];
        // Newton iteration on P_n over [-1, 1], mapped to [0, 1] afterwards.
        for i in 0..(n + 1) / 2 {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre_with_derivative(n, x);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            points[i] = 0.5 * (1.0 - x);
            points[n - 1 - i] = 0.5 * (1.0 + x);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        GaussRule1d { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Integrates `f` over `[0, 1]`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Tensor-product rule on the reference square `[0, 1]^2`.
///
/// Weights sum to one (the reference area).
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// `n` Gauss points per direction.
    pub fn tensor_gauss(n: usize) -> Self {
        let rule = GaussRule1d::new(n);
        Self::tensor(&rule)
    }

    pub fn tensor(rule: &GaussRule1d) -> Self {
        let n = rule.len();
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                points.push([rule.points[i], rule.points[j]]);
                weights.push(rule.weights[i] * rule.weights[j]);
            }
        }
        QuadratureRule { points, weights }
    }

    /// Composite rule: the square is split into `m x m` sub-squares, each carrying an
    /// `n`-point tensor Gauss rule.
    pub fn composite(n: usize, m: usize) -> Self {
        let base = GaussRule1d::new(n);
        let h = 1.0 / m as f64;
        let mut xs = Vec::with_capacity(n * m);
        let mut ws = Vec::with_capacity(n * m);
        for s in 0..m {
            for (x, w) in base.points.iter().zip(&base.weights) {
                xs.push((s as f64 + x) * h);
                ws.push(w * h);
            }
        }
        Self::tensor(&GaussRule1d { points: xs, weights: ws })
    }

    /// Rule on the box `[lo, hi]` for integrands that are smooth inside and outside the
    /// circle `|x - center| = radius` but not across it, returned in reference coordinates.
    ///
    /// The box is sliced in `x` at every abscissa where the circle meets the box edges or
    /// turns, and each `y` fibre is split at the circle.
    pub fn circle_cut(lo: [f64; 2], hi: [f64; 2], center: [f64; 2], radius: f64, n: usize) -> Self {
        let gauss = GaussRule1d::new(n);
        let (sx, sy) = (hi[0] - lo[0], hi[1] - lo[1]);
        let r2 = radius * radius;
        let turn = [center[0] - radius, center[0] + radius];
        let mut breaks = vec![lo[0], hi[0], turn[0], turn[1], center[0]];
        for y in [lo[1], hi[1]] {
            let d = r2 - (y - center[1]).powi(2);
            if d > 0.0 {
                breaks.extend([center[0] - d.sqrt(), center[0] + d.sqrt()]);
            }
        }
        breaks.retain(|&x| x >= lo[0] && x <= hi[0]);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * sx);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            // outer abscissae and weights on [a, b]; under the circle the angle
            // x = c + r cos(theta) turns the fibre ends into entire functions
            let outer: Vec<(f64, f64)> = if a >= turn[0] - 1e-14 * sx && b <= turn[1] + 1e-14 * sx {
                let ta = ((a - center[0]) / radius).clamp(-1.0, 1.0).acos();
                let tb = ((b - center[0]) / radius).clamp(-1.0, 1.0).acos();
                gauss
                    .points
                    .iter()
                    .zip(&gauss.weights)
                    .map(|(&u, &wu)| {
                        let t = tb + (ta - tb) * u;
                        (center[0] + radius * t.cos(), wu * (ta - tb) * radius * t.sin())
                    })
                    .collect()
            } else {
                gauss.points.iter().zip(&gauss.weights).map(|(&u, &wu)| (a + (b - a) * u, wu * (b - a))).collect()
            };
            for (x, wx) in outer {
                let d = r2 - (x - center[0]).powi(2);
                let mut cuts = vec![lo[1], hi[1]];
                if d > 0.0 {
                    cuts.extend([center[1] - d.sqrt(), center[1] + d.sqrt()]);
                }
                cuts.retain(|&y| y >= lo[1] && y <= hi[1]);
                cuts.sort_by(f64::total_cmp);
                for c in cuts.windows(2) {
                    let (ya, yb) = (c[0], c[1]);
                    if yb - ya <= 0.0 {
                        continue;
                    }
                    for (&v, &wv) in gauss.points.iter().zip(&gauss.weights) {
                        let y = ya + (yb - ya) * v;
                        points.push([(x - lo[0]) / sx, (y - lo[1]) / sy]);
                        weights.push(wx * wv * (yb - ya) / (sx * sy));
                    }
                }
            }
        }
        QuadratureRule { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn([f64; 2]) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_cut_rule_integrates_disc_pieces() {
        // area of the quarter disc inside a box with a corner at the centre
        let q = QuadratureRule::circle_cut([0.0, 0.0], [1.0, 1.0], [0.0, 0.0], 0.7, 8);
        let area = q.integrate(|x| if x[0] * x[0] + x[1] * x[1] < 0.49 { 1.0 } else { 0.0 });
        assert!((q.weights.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        assert!((area - PI * 0.49 / 4.0).abs() < 1e-13, "{area}");
        // a polynomial bump cut by the edges of an off-centre box
        let (lo, hi, c, r) = ([0.0, -0.3], [0.6, 0.0], [0.3, 0.0], 0.25);
        let q = QuadratureRule::circle_cut(lo, hi, c, r, 10);
        let bump = |x: [f64; 2]| {
            let p = [lo[0] + x[0] * (hi[0] - lo[0]), lo[1] + x[1] * (hi[1] - lo[1])];
            let s = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)) / (r * r);
            if s < 1.0 { (1.0 - s).powi(2) } else { 0.0 }
        };
        let got = q.integrate(bump) * (hi[0] - lo[0]) * (hi[1] - lo[1]);
        // the box covers exactly the lower half disc: pi r^2 / 6 over two
        assert!((got - PI * r * r / 6.0).abs() < 1e-12, "{got}");
    }

    #[test]
    fn weights_sum_to_one() {
        for n in 1..12 {
            let r = GaussRule1d::new(n);
            let s: f64 = r.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-14, "n={n}: {s}");
            assert!(r.weights.iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn tensor_rule_exact_for_top_degree_monomial() {
        for k in 1..10 {
            let q = QuadratureRule::tensor_gauss(k);
            let e = (2 * k - 1) as i32;
            let exact = 1.0 / ((e + 1) as f64).powi(2);
            let got = q.integrate(|[x, y]| x.powi(e) * y.powi(e));
            assert!(((got - exact) / exact).abs() < 1e-13, "k={k}: {got} vs {exact}");
        }
    }

    #[test]
    fn composite_rule_integrates_monomials() {
        let q = QuadratureRule::composite(3, 4);
        let got = q.integrate(|[x, y]| x.powi(5) * y.powi(2));
        assert!((got - 1.0 / 18.0).abs() < 1e-14);
    }
}
