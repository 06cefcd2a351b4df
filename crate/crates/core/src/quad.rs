//! Gauss–Legendre quadrature on panels.

use std::ops::{Add, Mul};
use std::sync::OnceLock;

/// Nodes and weights on [-1, 1].
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// Shared 32-point rule.
    pub fn standard() -> &'static GaussLegendre {
        static GL: OnceLock<GaussLegendre> = OnceLock::new();
        GL.get_or_init(|| GaussLegendre::new(32))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
        self.nodes.iter().zip(&self.weights).map(move |(x, w)| (c + r * x, r * w))
    }

    pub fn integrate<T, F>(&self, a: f64, b: f64, f: F) -> T
    where
        T: Default + Add<Output = T> + Mul<f64, Output = T>,
        F: Fn(f64) -> T,
    {
        self.mapped(a, b).fold(T::default(), |acc, (x, w)| acc + f(x) * w)
    }
}

/// (P_n(x), P_n'(x))
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Panel boundaries covering [a, b]: the given breakpoints inside (a, b),
/// with every panel further split to width at most `max_width`.
pub fn panels(a: f64, b: f64, breakpoints: &[f64], max_width: f64) -> Vec<(f64, f64)> {
    if b <= a {
        return Vec::new();
    }
    let mut cuts: Vec<f64> = breakpoints.iter().copied().filter(|&x| x > a && x < b).collect();
    cuts.push(a);
    cuts.push(b);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|x, y| (*x - *y).abs() < 1e-15);
    let mut out = Vec::new();
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let pieces = ((hi - lo) / max_width).ceil().max(1.0) as usize;
        let step = (hi - lo) / pieces as f64;
        for k in 0..pieces {
            let s = lo + k as f64 * step;
            let e = if k + 1 == pieces { hi } else { s + step };
            out.push((s, e));
        }
    }
    out
}

/// Composite Gauss–Legendre over the panels of [`panels`].
pub fn integrate_panels<T, F>(gl: &GaussLegendre, a: f64, b: f64, breakpoints: &[f64], max_width: f64, f: F) -> T
where
    T: Default + Add<Output = T> + Mul<f64, Output = T>,
    F: Fn(f64) -> T,
{
    panels(a, b, breakpoints, max_width)
        .into_iter()
        .fold(T::default(), |acc, (lo, hi)| acc + gl.integrate(lo, hi, &f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        for n in [1, 2, 5, 16, 32, 64] {
            let gl = GaussLegendre::new(n);
            let s: f64 = gl.weights.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "n = {n}: {s}");
        }
    }

    #[test]
    fn exact_for_polynomials() {
        let gl = GaussLegendre::new(8);
        // degree 15 is integrated exactly
        let v: f64 = gl.integrate(0.0, 1.0, |x| x.powi(15));
        assert!((v - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn smooth_integrand() {
        let v: f64 = integrate_panels(GaussLegendre::standard(), 0.0, 10.0, &[3.3], 1.0, f64::sin);
        assert!((v - (1.0 - 10f64.cos())).abs() < 1e-13);
    }
}
