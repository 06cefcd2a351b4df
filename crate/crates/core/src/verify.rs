//! Independent numerical checks: truncated Gram matrices of the affine
//! wavelet system, Parseval capture of a probe, decay fits of band-limited
//! functions and the extra-invariance integer test.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_traits::Zero;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::completion::WaveletSystem;
use crate::error::{Error, Result};
use crate::mra::{dot, mat_vec, unflatten, CEval, FBox, LatticeWalker, ScalingVector};
use crate::quad::{panels, GaussLegendre};
use crate::ratlat::{to_f64, Lattice};

/// Tensor Gauss–Legendre nodes on a box.
#[derive(Clone, Debug)]
pub struct BoxRule {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl BoxRule {
    pub fn new(b: &FBox, width: f64, order: usize) -> Self {
        let gl = GaussLegendre::new(order);
        let axes: Vec<Vec<(f64, f64)>> = (0..b.dim())
            .map(|i| panels(b.lo[i], b.hi[i], &[], width).into_iter().flat_map(|(lo, hi)| gl.mapped(lo, hi).collect::<Vec<_>>()).collect())
            .collect();
        let shape: Vec<usize> = axes.iter().map(Vec::len).collect();
        let total: usize = shape.iter().product();
        let mut nodes = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        for i in 0..total {
            let m = unflatten(i, &shape);
            nodes.push(m.iter().enumerate().map(|(a, &v)| axes[a][v].0).collect());
            weights.push(m.iter().enumerate().map(|(a, &v)| axes[a][v].1).product());
        }
        BoxRule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GramOptions {
    pub j_min: i32,
    pub j_max: i32,
    /// Translations `k ∈ Z^n` with `|k_i| <= k_max`.
    pub k_max: i64,
    pub panel_width: f64,
    pub order: usize,
}

impl Default for GramOptions {
    fn default() -> Self {
        GramOptions { j_min: -1, j_max: 1, k_max: 8, panel_width: 1.0 / 64.0, order: 32 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrthoReport {
    pub max_offdiag: f64,
    pub max_diag_dev: f64,
    pub pairs_tested: usize,
    /// Pairs decided as exactly zero from disjoint Fourier supports.
    pub pairs_disjoint: usize,
    pub j_range: (i32, i32),
    pub k_max: i64,
    pub wavelets: usize,
}

impl OrthoReport {
    pub fn max_deviation(&self) -> f64 {
        self.max_offdiag.max(self.max_diag_dev)
    }
}

/// `Ψ̂` sampled on a quadrature rule over its support box, with the
/// dilated copies `Ψ̂(B^s η)` that the inner products need.
struct PsiCache {
    rule: BoxRule,
    /// `scaled[s - s_min][node][l]`
    scaled: Vec<Vec<Vec<Complex64>>>,
    s_min: i32,
    bs: Vec<DMatrix<f64>>,
}

fn matrix_power(b: &DMatrix<f64>, b_inv: &DMatrix<f64>, s: i32) -> DMatrix<f64> {
    let n = b.nrows();
    let base = if s >= 0 { b } else { b_inv };
    (0..s.unsigned_abs()).fold(DMatrix::identity(n, n), |acc, _| base * acc)
}

impl PsiCache {
    fn new(sys: &WaveletSystem, s_min: i32, s_max: i32, width: f64, order: usize) -> Result<Self> {
        let rule = BoxRule::new(sys.support(), width, order);
        let b = sys.data().b_matrix();
        let b_inv = sys.data().b_inverse();
        let bs: Vec<DMatrix<f64>> = (s_min..=s_max).map(|s| matrix_power(&b, &b_inv, s)).collect();
        let scaled = bs
            .iter()
            .map(|m| rule.nodes.par_iter().map(|eta| sys.psi(&mat_vec(m, eta))).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(PsiCache { rule, scaled, s_min, bs })
    }

    fn at(&self, s: i32) -> &[Vec<Complex64>] {
        &self.scaled[(s - self.s_min) as usize]
    }
}

fn integer_points(n: usize, k_max: i64) -> Vec<Vec<f64>> {
    let side = (2 * k_max + 1) as usize;
    (0..side.pow(n as u32))
        .map(|i| unflatten(i, &vec![side; n]).iter().map(|&v| v as f64 - k_max as f64).collect())
        .collect()
}

/// Inner products `⟨D_{A^j} T_k ψ^l, D_{A^j'} T_k' ψ^l'⟩` for the truncated
/// index set, computed after the substitution `η = B^{-j} ξ` as
/// `b^{s/2} ∫ e^{-2πi⟨k,η⟩} e^{2πi⟨k',B^s η⟩} ψ̂^l(η) conj ψ̂^l'(B^s η) dη`, `s = j - j'`.
pub fn wavelet_gram(sys: &WaveletSystem, opts: &GramOptions) -> Result<OrthoReport> {
    let matrix = wavelet_gram_entries(sys, opts)?;
    let mut rep = OrthoReport {
        max_offdiag: 0.0,
        max_diag_dev: 0.0,
        pairs_tested: 0,
        pairs_disjoint: 0,
        j_range: (opts.j_min, opts.j_max),
        k_max: opts.k_max,
        wavelets: sys.len(),
    };
    for e in &matrix {
        rep.pairs_tested += 1;
        if e.disjoint {
            rep.pairs_disjoint += 1;
        }
        if e.diagonal {
            rep.max_diag_dev = rep.max_diag_dev.max((e.value - Complex64::new(1.0, 0.0)).norm());
        } else {
            rep.max_offdiag = rep.max_offdiag.max(e.value.norm());
        }
    }
    Ok(rep)
}

/// One inner product of the truncated Gram matrix.
#[derive(Clone, Debug)]
pub struct GramEntry {
    pub left: (i32, Vec<i64>, usize),
    pub right: (i32, Vec<i64>, usize),
    pub value: Complex64,
    pub diagonal: bool,
    pub disjoint: bool,
}

pub fn wavelet_gram_entries(sys: &WaveletSystem, opts: &GramOptions) -> Result<Vec<GramEntry>> {
    if opts.j_min > opts.j_max || opts.k_max < 0 {
        return Err(Error::InvalidParameter("empty truncation".into()));
    }
    let span = opts.j_max - opts.j_min;
    let cache = PsiCache::new(sys, -span, span, opts.panel_width, opts.order)?;
    let n = sys.dim();
    let ks = integer_points(n, opts.k_max);
    let ell = sys.len();
    let b = sys.data().b;
    let support = sys.support().clone();
    let mut out = Vec::new();
    for j in opts.j_min..=opts.j_max {
        for jp in opts.j_min..=opts.j_max {
            let s = j - jp;
            // supp ψ̂ ∩ B^{-s} supp ψ̂
            let bs = &cache.bs[(s - cache.s_min) as usize];
            let inv = bs.clone().try_inverse().ok_or(Error::NotExpansive(0.0))?;
            let pulled = support.map(&inv);
            let disjoint = (0..n).any(|i| pulled.hi[i] <= support.lo[i] || pulled.lo[i] >= support.hi[i]);
            let base = cache.at(0);
            let dil = cache.at(s);
            let scale = b.powf(s as f64 / 2.0);
            for l in 0..ell {
                for lp in 0..ell {
                    // g(η) = w ψ̂^l(η) conj ψ̂^l'(B^s η), kept where nonzero
                    let g: Vec<(usize, Complex64)> = if disjoint {
                        Vec::new()
                    } else {
                        (0..cache.rule.len())
                            .map(|i| (i, base[i][l] * dil[i][lp].conj() * cache.rule.weights[i]))
                            .filter(|(_, v)| *v != Complex64::zero())
                            .collect()
                    };
                    let mapped: Vec<Vec<f64>> = g.iter().map(|(i, _)| mat_vec(bs, &cache.rule.nodes[*i])).collect();
                    let entries: Vec<GramEntry> = ks
                        .par_iter()
                        .flat_map_iter(|k| {
                            let g = &g;
                            let mapped = &mapped;
                            let nodes = &cache.rule.nodes;
                            ks.iter().map(move |kp| {
                                let mut acc = Complex64::zero();
                                for ((i, v), beta) in g.iter().zip(mapped) {
                                    let ph = -dot(k, &nodes[*i]) + dot(kp, beta);
                                    acc += v * Complex64::from_polar(1.0, 2.0 * PI * ph);
                                }
                                GramEntry {
                                    left: (j, k.iter().map(|&x| x as i64).collect(), l),
                                    right: (jp, kp.iter().map(|&x| x as i64).collect(), lp),
                                    value: acc * scale,
                                    diagonal: j == jp && l == lp && k == kp,
                                    disjoint,
                                }
                            })
                        })
                        .collect();
                    out.extend(entries);
                }
            }
        }
    }
    Ok(out)
}

/// Band-limited probe with a Gaussian spectrum truncated at 8σ per axis.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaussianProbe {
    pub centre: Vec<f64>,
    pub sigma: f64,
}

impl GaussianProbe {
    pub fn eval(&self, xi: &[f64]) -> f64 {
        let mut v = 1.0;
        for (x, c) in xi.iter().zip(&self.centre) {
            let t = (x - c) / self.sigma;
            if t.abs() > 8.0 {
                return 0.0;
            }
            v *= (-0.5 * t * t).exp();
        }
        v
    }

    pub fn support(&self) -> FBox {
        FBox::new(
            self.centre.iter().map(|c| c - 8.0 * self.sigma).collect(),
            self.centre.iter().map(|c| c + 8.0 * self.sigma).collect(),
        )
    }

    /// `‖g‖² = ∫ |ĝ|²` by the same quadrature family.
    pub fn norm_squared(&self) -> f64 {
        let rule = BoxRule::new(&self.support(), self.sigma / 4.0, 32);
        rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * self.eval(x).powi(2)).sum()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParsevalReport {
    pub captured: f64,
    pub total: f64,
    pub j_range: (i32, i32),
    pub k_max: i64,
}

impl ParsevalReport {
    pub fn ratio(&self) -> f64 {
        if self.total == 0.0 {
            0.0
        } else {
            self.captured / self.total
        }
    }
}

/// `Σ |⟨g, D_{A^j} T_k ψ^l⟩|²` over the truncation, with
/// `⟨g, D_{A^j}T_kψ⟩ = b^{j/2} ∫ ĝ(B^j η) e^{2πi⟨k,η⟩} conj ψ̂(η) dη`.
pub fn parseval_probe(
    sys: &WaveletSystem,
    g: &(dyn Fn(&[f64]) -> Complex64 + Sync),
    total: f64,
    j_range: (i32, i32),
    k_max: i64,
    width: f64,
) -> Result<ParsevalReport> {
    let mut rep = ParsevalReport { captured: 0.0, total, j_range, k_max };
    if j_range.0 > j_range.1 || k_max < 0 {
        return Ok(rep);
    }
    let cache = PsiCache::new(sys, 0, 0, width, 32)?;
    let b = sys.data().b_matrix();
    let b_inv = sys.data().b_inverse();
    let det = sys.data().b;
    let ks = integer_points(sys.dim(), k_max);
    let psi = cache.at(0);
    let mut captured = 0.0;
    for j in j_range.0..=j_range.1 {
        let bj = matrix_power(&b, &b_inv, j);
        for l in 0..sys.len() {
            let h: Vec<(usize, Complex64)> = (0..cache.rule.len())
                .filter(|&i| psi[i][l] != Complex64::zero())
                .map(|i| (i, g(&mat_vec(&bj, &cache.rule.nodes[i])) * psi[i][l].conj() * cache.rule.weights[i]))
                .filter(|(_, v)| *v != Complex64::zero())
                .collect();
            if h.is_empty() {
                continue;
            }
            let s: f64 = ks
                .par_iter()
                .map(|k| {
                    let mut acc = Complex64::zero();
                    for (i, v) in &h {
                        acc += v * Complex64::from_polar(1.0, 2.0 * PI * dot(k, &cache.rule.nodes[*i]));
                    }
                    (acc * det.powf(j as f64 / 2.0)).norm_sqr()
                })
                .sum();
            captured += s;
        }
    }
    rep.captured = captured;
    Ok(rep)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayReport {
    /// Fitted slope of `log envelope` against `log(1 + r)`; `-inf` when
    /// the function drops below the noise floor before the second radius.
    pub slope: f64,
    pub radii: Vec<f64>,
    pub envelope: Vec<f64>,
    pub points_used: usize,
}

/// Log-spaced radii from `lo` to `hi`.
pub fn log_radii(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| lo * (hi / lo).powf(i as f64 / (count.max(2) - 1) as f64)).collect()
}

/// Decay exponent of `f(x) = ∫ f̂(ξ) e^{2πixξ} dξ` for a 1-D band-limited `f̂`
/// supported in `[a, b]` (with interior breakpoints). The envelope at `r` is
/// the max of `|f|` over `[r, r + 1]`.
pub fn decay_diagnostic(
    fhat: &(dyn Fn(f64) -> Complex64 + Sync),
    support: (f64, f64),
    breakpoints: &[f64],
    radii: &[f64],
    nodes_per_unit: f64,
) -> Result<DecayReport> {
    let r_max = radii.iter().copied().fold(0.0, f64::max) + 1.0;
    if nodes_per_unit < 8.0 * r_max {
        return Err(Error::Nyquist(format!(
            "{nodes_per_unit} nodes per unit cannot resolve radius {r_max} (need {})",
            8.0 * r_max
        )));
    }
    let gl = GaussLegendre::standard();
    let width = gl.len() as f64 / nodes_per_unit;
    let quad: Vec<(f64, Complex64)> = panels(support.0, support.1, breakpoints, width)
        .into_iter()
        .flat_map(|(lo, hi)| gl.mapped(lo, hi).collect::<Vec<_>>())
        .map(|(x, w)| (x, fhat(x) * w))
        .filter(|(_, v)| *v != Complex64::zero())
        .collect();
    let f = |x: f64| -> f64 {
        let mut acc = Complex64::zero();
        for (xi, v) in &quad {
            acc += v * Complex64::from_polar(1.0, 2.0 * PI * x * xi);
        }
        acc.norm()
    };
    let l1: f64 = quad.iter().map(|(_, v)| v.norm()).sum();
    let floor = 1e-13 * l1.max(f64::MIN_POSITIVE);
    let envelope: Vec<f64> = radii
        .par_iter()
        .map(|&r| (0..=32).map(|i| f(r + i as f64 / 32.0)).fold(0.0, f64::max))
        .collect();
    let pts: Vec<(f64, f64)> =
        radii.iter().zip(&envelope).filter(|(_, e)| **e > floor).map(|(r, e)| ((1.0 + r).ln(), e.ln())).collect();
    let slope = if pts.len() < 2 {
        f64::NEG_INFINITY
    } else {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    };
    Ok(DecayReport { slope, radii: radii.to_vec(), envelope, points_used: pts.len() })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExtraInvarianceReport {
    pub values: Vec<f64>,
    pub max_distance_to_integer: f64,
}

/// `(1/vol Γ) Σ_l Σ_{k ∈ Γ* ∩ Λ^⊥} |φ̂^l(ξ+k)|²` on a grid of the `Γ*` cell,
/// where `Λ` is spanned by the columns of `subspace` (possibly empty).
pub fn extra_invariance_check(
    gens: &[CEval],
    support: &FBox,
    gamma: &Lattice,
    subspace: &DMatrix<f64>,
    per_axis: usize,
) -> Result<ExtraInvarianceReport> {
    let n = gamma.dim();
    if subspace.nrows() != n && subspace.ncols() != 0 {
        return Err(Error::DimensionMismatch("subspace basis".into()));
    }
    let dual = gamma.dual();
    let walker = LatticeWalker::new(&dual);
    let vol = to_f64(&gamma.volume());
    let basis = dual.basis().to_f64();
    let total = per_axis.pow(n as u32);
    let values: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let m = unflatten(idx, &vec![per_axis; n]);
            let c: Vec<f64> = m.iter().map(|&v| (v as f64 + 0.37) / per_axis as f64).collect();
            let xi = mat_vec(&basis, &c);
            let lo: Vec<f64> = support.lo.iter().zip(&xi).map(|(l, v)| l - v).collect();
            let hi: Vec<f64> = support.hi.iter().zip(&xi).map(|(h, v)| h - v).collect();
            let mut s = 0.0;
            for k in walker.points_in_box(&lo, &hi) {
                let perp = (0..subspace.ncols()).all(|c| {
                    let col: Vec<f64> = subspace.column(c).iter().copied().collect();
                    dot(&k, &col).abs() < 1e-9
                });
                if !perp {
                    continue;
                }
                let x: Vec<f64> = xi.iter().zip(&k).map(|(a, b)| a + b).collect();
                s += gens.iter().map(|g| g(&x).norm_sqr()).sum::<f64>();
            }
            s / vol
        })
        .collect();
    let max_distance_to_integer = values.iter().map(|v| (v - v.round()).abs()).fold(0.0, f64::max);
    Ok(ExtraInvarianceReport { values, max_distance_to_integer })
}

/// Same check for an instantiated scaling vector.
pub fn extra_invariance_sv(sv: &ScalingVector, subspace: &DMatrix<f64>, per_axis: usize) -> Result<ExtraInvarianceReport> {
    let gens: Vec<CEval> = sv.generators().iter().map(|g| g.evaluator()).collect();
    extra_invariance_check(&gens, sv.hull(), sv.lattice(), subspace, per_axis)
}
