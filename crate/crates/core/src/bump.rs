//! C^∞ bump calculus: the gate `h`, the ramp `ν`, the plateau profile `φ`,
//! tensor mollified indicators of box unions, and the smooth square root
//! combinator.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::GaussLegendre;
use crate::ratlat::{ratvec_serde, to_f64, Rational};

/// Shared real evaluator on R^n.
pub type Eval = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// `h(t) = exp(-1/t)` for `t > 0`, else 0.
pub fn h(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

fn h_prime(t: f64) -> f64 {
    if t > 0.0 {
        h(t) / (t * t)
    } else {
        0.0
    }
}

/// Smooth step `s(t) = h(t)/(h(t)+h(1-t))` and the ramp `ν = sin(π s / 2)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Ramp;

impl Ramp {
    pub fn s(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else if t >= 1.0 {
            1.0
        } else {
            let (a, b) = (h(t), h(1.0 - t));
            a / (a + b)
        }
    }

    fn s_prime(&self, t: f64) -> f64 {
        if t <= 0.0 || t >= 1.0 {
            return 0.0;
        }
        let (a, b) = (h(t), h(1.0 - t));
        let (da, db) = (h_prime(t), h_prime(1.0 - t));
        (da * b + a * db) / ((a + b) * (a + b))
    }

    pub fn nu(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else if t >= 1.0 {
            1.0
        } else {
            (std::f64::consts::FRAC_PI_2 * self.s(t)).sin()
        }
    }

    /// `ν^{(order)}(t)`: analytic for order <= 1, central differences with
    /// step 1e-5 above that.
    pub fn derivative(&self, order: usize, t: f64) -> f64 {
        match order {
            0 => self.nu(t),
            1 => {
                let c = std::f64::consts::FRAC_PI_2;
                c * (c * self.s(t)).cos() * self.s_prime(t)
            }
            _ => {
                const STEP: f64 = 1e-5;
                (self.derivative(order - 1, t + STEP) - self.derivative(order - 1, t - STEP)) / (2.0 * STEP)
            }
        }
    }
}

pub fn make_ramp() -> Ramp {
    Ramp
}

/// Window used by the symmetric frequency supported generators.
pub trait Profile: Send + Sync + fmt::Debug {
    fn delta(&self) -> f64;
    fn eval(&self, xi: f64) -> Complex64;
}

/// Real plateau profile: 1 on `[-1/4+δ, 1/4-δ]`, ramps on both sides,
/// zero outside `[-1/4-δ, 1/4+δ]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpProfile {
    delta: f64,
    #[serde(skip)]
    ramp: Ramp,
}

impl BumpProfile {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta <= 0.25) {
            return Err(Error::InvalidParameter(format!("delta = {delta} must lie in (0, 1/4]")));
        }
        Ok(BumpProfile { delta, ramp: Ramp })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn phi(&self, xi: f64) -> f64 {
        let d = self.delta;
        let a = xi.abs();
        if a >= 0.25 + d {
            0.0
        } else if a <= 0.25 - d {
            1.0
        } else {
            self.ramp.nu((0.25 + d - a) / (2.0 * d))
        }
    }

    pub fn phi_derivative(&self, order: usize, xi: f64) -> f64 {
        if order == 0 {
            return self.phi(xi);
        }
        let d = self.delta;
        let a = xi.abs();
        if a >= 0.25 + d || a <= 0.25 - d {
            return 0.0;
        }
        let scale = (2.0 * d).powi(-(order as i32));
        if xi < 0.0 {
            scale * self.ramp.derivative(order, (xi + 0.25 + d) / (2.0 * d))
        } else {
            let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
            sign * scale * self.ramp.derivative(order, (0.25 + d - xi) / (2.0 * d))
        }
    }
}

impl Profile for BumpProfile {
    fn delta(&self) -> f64 {
        self.delta
    }

    fn eval(&self, xi: f64) -> Complex64 {
        Complex64::new(self.phi(xi), 0.0)
    }
}

pub fn make_profile(delta: f64) -> Result<BumpProfile> {
    BumpProfile::new(delta)
}

/// `φ(ξ) e^{iθ(ξ)}` with `θ(ξ) = c ξ (1 - φ(ξ)^2)`; the phase vanishes on the
/// plateau, so all three profile conditions survive.
#[derive(Clone, Copy, Debug)]
pub struct PhasedProfile {
    pub base: BumpProfile,
    pub c: f64,
}

impl Profile for PhasedProfile {
    fn delta(&self) -> f64 {
        self.base.delta
    }

    fn eval(&self, xi: f64) -> Complex64 {
        let r = self.base.phi(xi);
        Complex64::from_polar(r, self.c * xi * (1.0 - r * r))
    }
}

/// `ξ ↦ sqrt(Σ h(f_i(ξ)))`.
pub fn smooth_sqrt_combine(fs: Vec<Eval>) -> Eval {
    Arc::new(move |x: &[f64]| fs.iter().map(|f| h(f(x))).sum::<f64>().sqrt())
}

/// Axis-aligned box `[lo, hi]` with rational corners.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatBox {
    #[serde(with = "ratvec_serde")]
    pub lo: Vec<Rational>,
    #[serde(with = "ratvec_serde")]
    pub hi: Vec<Rational>,
}

impl RatBox {
    pub fn new(lo: Vec<Rational>, hi: Vec<Rational>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::DimensionMismatch("box corners".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| a >= b) {
            return Err(Error::InvalidParameter("box must have lo < hi in every axis".into()));
        }
        Ok(RatBox { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo_f64(&self) -> Vec<f64> {
        self.lo.iter().map(to_f64).collect()
    }

    pub fn hi_f64(&self) -> Vec<f64> {
        self.hi.iter().map(to_f64).collect()
    }

    pub fn volume(&self) -> Rational {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }
}

/// Finite union of boxes with pairwise disjoint interiors.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxUnion {
    pub boxes: Vec<RatBox>,
}

impl BoxUnion {
    pub fn new(boxes: Vec<RatBox>) -> Result<Self> {
        let n = boxes.first().map(RatBox::dim).ok_or_else(|| Error::InvalidParameter("empty region".into()))?;
        if boxes.iter().any(|b| b.dim() != n) {
            return Err(Error::DimensionMismatch("boxes of different dimension".into()));
        }
        Ok(BoxUnion { boxes })
    }

    pub fn single(b: RatBox) -> Self {
        BoxUnion { boxes: vec![b] }
    }

    pub fn dim(&self) -> usize {
        self.boxes[0].dim()
    }

    pub fn volume(&self) -> Rational {
        self.boxes.iter().map(RatBox::volume).sum()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.boxes.iter().any(|b| {
            b.lo.iter().zip(&b.hi).zip(x).all(|((l, h), &v)| to_f64(l) <= v && v <= to_f64(h))
        })
    }

    /// Bounding box in floating point.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.dim();
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for b in &self.boxes {
            for i in 0..n {
                lo[i] = lo[i].min(to_f64(&b.lo[i]));
                hi[i] = hi[i].max(to_f64(&b.hi[i]));
            }
        }
        (lo, hi)
    }
}

/// Cumulative distribution of the 1-D mollifier `c·h(1-(t/ε)^2)` on
/// `[-ε, ε]`, tabulated with value and density for quintic Hermite lookup.
#[derive(Clone, Debug)]
pub struct MollifierCdf {
    eps: f64,
    step: f64,
    cdf: Vec<f64>,
    dens: Vec<f64>,
    ddens: Vec<f64>,
}

const CDF_CELLS: usize = 4096;

impl MollifierCdf {
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("eps = {eps} must be positive")));
        }
        let raw = |t: f64| h(1.0 - (t / eps).powi(2));
        let raw_d = |t: f64| h_prime(1.0 - (t / eps).powi(2)) * (-2.0 * t / (eps * eps));
        let gl = GaussLegendre::new(16);
        let step = 2.0 * eps / CDF_CELLS as f64;
        let mut cdf = Vec::with_capacity(CDF_CELLS + 1);
        let mut acc = 0.0;
        // Neumaier-compensated running sum keeps the table monotone and exact at the end
        let mut comp = 0.0;
        cdf.push(0.0);
        for k in 0..CDF_CELLS {
            let a = -eps + k as f64 * step;
            let piece: f64 = gl.integrate(a, a + step, raw);
            let t = acc + piece;
            if acc.abs() >= piece.abs() {
                comp += (acc - t) + piece;
            } else {
                comp += (piece - t) + acc;
            }
            acc = t;
            cdf.push(acc + comp);
        }
        let total = *cdf.last().expect("nonempty");
        let nodes = (0..=CDF_CELLS).map(|k| -eps + k as f64 * step);
        let dens = nodes.clone().map(|t| raw(t) / total).collect();
        let ddens = nodes.map(|t| raw_d(t) / total).collect();
        for v in cdf.iter_mut() {
            *v /= total;
        }
        cdf[CDF_CELLS] = 1.0;
        Ok(MollifierCdf { eps, step, cdf, dens, ddens })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Mollifier density at `t`.
    pub fn density(&self, t: f64) -> f64 {
        if t.abs() >= self.eps {
            return 0.0;
        }
        let u = (t - (-self.eps)) / self.step;
        let k = (u.floor() as usize).min(CDF_CELLS - 1);
        let s = u - k as f64;
        let (g0, g1) = (self.dens[k], self.dens[k + 1]);
        let (d0, d1) = (self.ddens[k] * self.step, self.ddens[k + 1] * self.step);
        // cubic Hermite on the density
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * g0 + (s3 - 2.0 * s2 + s) * d0 + (-2.0 * s3 + 3.0 * s2) * g1 + (s3 - s2) * d1
    }

    /// `G(t) = ∫_{-ε}^t g`, exactly 0 below `-ε` and 1 above `ε`.
    pub fn cdf(&self, t: f64) -> f64 {
        if t <= -self.eps {
            return 0.0;
        }
        if t >= self.eps {
            return 1.0;
        }
        let u = (t + self.eps) / self.step;
        let k = (u.floor() as usize).min(CDF_CELLS - 1);
        let s = u - k as f64;
        let hh = self.step;
        let (p0, p1) = (self.cdf[k], self.cdf[k + 1]);
        let (v0, v1) = (self.dens[k] * hh, self.dens[k + 1] * hh);
        let (a0, a1) = (self.ddens[k] * hh * hh, self.ddens[k + 1] * hh * hh);
        let s2 = s * s;
        let s3 = s2 * s;
        let s4 = s3 * s;
        let s5 = s4 * s;
        let h0 = 1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5;
        let h1 = s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5;
        let h2 = 0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5;
        let h3 = 0.5 * s3 - s4 + 0.5 * s5;
        let h4 = -4.0 * s3 + 7.0 * s4 - 3.0 * s5;
        let h5 = 10.0 * s3 - 15.0 * s4 + 6.0 * s5;
        (h0 * p0 + h1 * v0 + h2 * a0 + h3 * a1 + h4 * v1 + h5 * p1).clamp(0.0, 1.0)
    }

    /// Mollified indicator of `[a, b]`.
    pub fn interval(&self, x: f64, a: f64, b: f64) -> f64 {
        self.cdf(x - a) - self.cdf(x - b)
    }
}

/// Smoothing `1_K * g` of a box union with the tensor mollifier of radius
/// `eps` (ℓ∞ neighbourhoods: `f = 1` on `K^{-eps}`, `supp f ⊆ K^{+eps}`).
#[derive(Clone, Debug)]
pub struct MollifiedIndicator {
    region: BoxUnion,
    lo: Vec<Vec<f64>>,
    hi: Vec<Vec<f64>>,
    cdf: Arc<MollifierCdf>,
}

impl MollifiedIndicator {
    pub fn region(&self) -> &BoxUnion {
        &self.region
    }

    pub fn eps(&self) -> f64 {
        self.cdf.eps
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.eval_shifted(x, &vec![0.0; x.len()])
    }

    /// `f(x + s)`, with the shift folded into the box corners so that sums
    /// over lattice translates of a tile telescope exactly.
    pub fn eval_shifted(&self, x: &[f64], s: &[f64]) -> f64 {
        let e = self.cdf.eps;
        let mut total = 0.0;
        'boxes: for (lo, hi) in self.lo.iter().zip(&self.hi) {
            let mut prod = 1.0;
            for i in 0..x.len() {
                let (a, b) = (lo[i] - s[i], hi[i] - s[i]);
                if x[i] <= a - e || x[i] >= b + e {
                    continue 'boxes;
                }
                prod *= self.cdf.interval(x[i], a, b);
            }
            total += prod;
        }
        total
    }

    pub fn into_eval(self) -> Eval {
        Arc::new(move |x: &[f64]| self.eval(x))
    }
}

pub fn mollify_indicator(k: &BoxUnion, eps: f64) -> Result<MollifiedIndicator> {
    let cdf = Arc::new(MollifierCdf::new(eps)?);
    Ok(MollifiedIndicator {
        lo: k.boxes.iter().map(RatBox::lo_f64).collect(),
        hi: k.boxes.iter().map(RatBox::hi_f64).collect(),
        region: k.clone(),
        cdf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratlat::rint;
    use approx::assert_abs_diff_eq;

    fn interval(a: i64, b: i64) -> BoxUnion {
        BoxUnion::single(RatBox::new(vec![rint(a)], vec![rint(b)]).unwrap())
    }

    #[test]
    fn ramp_values() {
        let r = make_ramp();
        assert_eq!(r.nu(0.0), 0.0);
        assert_eq!(r.nu(1.0), 1.0);
        assert_abs_diff_eq!(r.nu(0.5), std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
        for t in [0.1, 0.3, 0.7] {
            assert_abs_diff_eq!(r.nu(t).powi(2) + r.nu(1.0 - t).powi(2), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn ramp_derivative_matches_difference_quotient() {
        let r = make_ramp();
        for t in [0.2, 0.5, 0.81] {
            let fd = (r.nu(t + 1e-6) - r.nu(t - 1e-6)) / 2e-6;
            assert_abs_diff_eq!(r.derivative(1, t), fd, epsilon = 1e-7);
        }
        assert_eq!(r.derivative(3, -0.5), 0.0);
    }

    #[test]
    fn profile_values() {
        let p = make_profile(0.1).unwrap();
        assert_eq!(p.phi(0.0), 1.0);
        assert_eq!(p.phi(0.35), 0.0);
        assert_eq!(p.phi(-0.35), 0.0);
        assert!(make_profile(0.0).is_err());
        assert!(make_profile(0.3).is_err());
        assert!(make_profile(0.25).is_ok());
    }

    #[test]
    fn profile_partition_of_unity() {
        for delta in [0.05, 0.125, 0.25] {
            let p = make_profile(delta).unwrap();
            let mut worst: f64 = 0.0;
            for i in 0..10_000 {
                let xi = -1.0 + 2.0 * i as f64 / 10_000.0;
                let s: f64 = (-6..=6).map(|k| p.phi(xi + k as f64 / 2.0).powi(2)).sum();
                worst = worst.max((s - 1.0).abs());
            }
            assert!(worst < 1e-12, "delta {delta}: {worst:e}");
        }
    }

    #[test]
    fn profile_derivatives_vanish_on_plateau() {
        let p = make_profile(0.1).unwrap();
        for m in 1..4 {
            assert_eq!(p.phi_derivative(m, 0.0), 0.0);
        }
        let fd = (p.phi(0.3 + 1e-6) - p.phi(0.3 - 1e-6)) / 2e-6;
        assert_abs_diff_eq!(p.phi_derivative(1, 0.3), fd, epsilon = 1e-6);
        let fd = (p.phi(-0.3 + 1e-6) - p.phi(-0.3 - 1e-6)) / 2e-6;
        assert_abs_diff_eq!(p.phi_derivative(1, -0.3), fd, epsilon = 1e-6);
    }

    #[test]
    fn sqrt_combine() {
        let one: Eval = Arc::new(|_| 1.0);
        let zero: Eval = Arc::new(|_| 0.0);
        assert_abs_diff_eq!(smooth_sqrt_combine(vec![one])(&[0.3]), (-0.5f64).exp(), epsilon = 1e-15);
        assert_eq!(smooth_sqrt_combine(vec![zero])(&[0.3]), 0.0);
        let even: Eval = Arc::new(|x| x[0] * x[0]);
        let f = smooth_sqrt_combine(vec![even]);
        assert_eq!(f(&[0.7]), f(&[-0.7]));
    }

    #[test]
    fn mollifier_examples() {
        let f = mollify_indicator(&interval(-1, 1), 0.1).unwrap();
        assert_eq!(f.eval(&[0.0]), 1.0);
        assert_eq!(f.eval(&[1.1]), 0.0);
        assert_eq!(f.eval(&[-1.1]), 0.0);
        let v = f.eval(&[1.0]);
        assert!(v > 0.0 && v < 1.0);
        assert_abs_diff_eq!(v, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn mollifier_tiles() {
        let f = mollify_indicator(&interval(-1, 1), 0.1).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..1000 {
            let x = -3.0 + 6.0 * i as f64 / 1000.0;
            let s: f64 = (-4..=4).map(|k| f.eval_shifted(&[x], &[2.0 * k as f64])).sum();
            worst = worst.max((s - 1.0).abs());
        }
        assert!(worst < 1e-12, "{worst:e}");
    }

    #[test]
    fn cdf_matches_direct_quadrature() {
        let m = MollifierCdf::new(0.3).unwrap();
        let gl = GaussLegendre::new(64);
        let raw = |t: f64| h(1.0 - (t / 0.3f64).powi(2));
        let total: f64 = crate::quad::integrate_panels(&gl, -0.3, 0.3, &[], 0.05, raw);
        for t in [-0.29, -0.1, 0.0, 0.123, 0.25] {
            let direct: f64 = crate::quad::integrate_panels(&gl, -0.3, t, &[], 0.05, raw) / total;
            assert_abs_diff_eq!(m.cdf(t), direct, epsilon = 1e-12);
            assert_abs_diff_eq!(m.density(t), raw(t) / total, epsilon = 1e-9);
        }
    }
}
