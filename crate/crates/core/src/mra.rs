//! Multiresolution analyses: expanding ellipsoids with rational axes, the
//! SFS-based scaling vector, strictly expansive multiplicity-one scaling
//! functions, and the rescale/refine changes of lattice.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use num_traits::{Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bump::{h, mollify_indicator, BoxUnion, BumpProfile, MollifiedIndicator};
use crate::error::{Error, Result};
use crate::ratlat::{
    approx_rational, cayley_rationalize, check_expansive, dilation_lattices, min_eigen_modulus, rat, ratvec_serde,
    to_f64, transversal, Lattice, RatMatrix, Rational,
};
use crate::sfs;

/// Shared complex evaluator on R^n.
pub type CEval = Arc<dyn Fn(&[f64]) -> Complex64 + Send + Sync>;

/// Axis-aligned box with float corners.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl FBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        debug_assert_eq!(lo.len(), hi.len());
        FBox { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn corners(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..1usize << n)
            .map(|mask| (0..n).map(|i| if mask >> i & 1 == 1 { self.hi[i] } else { self.lo[i] }).collect())
            .collect()
    }

    /// Bounding box of `m · self`.
    pub fn map(&self, m: &DMatrix<f64>) -> FBox {
        FBox::hull_of_points(self.corners().iter().map(|c| mat_vec(m, c)))
    }

    pub fn hull_of_points(pts: impl IntoIterator<Item = Vec<f64>>) -> FBox {
        let mut it = pts.into_iter();
        let first = it.next().expect("at least one point");
        let (mut lo, mut hi) = (first.clone(), first);
        for p in it {
            for i in 0..p.len() {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        FBox { lo, hi }
    }

    pub fn hull(boxes: &[FBox]) -> FBox {
        FBox::hull_of_points(boxes.iter().flat_map(|b| [b.lo.clone(), b.hi.clone()]))
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.iter().zip(&self.lo).zip(&self.hi).all(|((v, l), h)| *v >= l - tol && *v <= h + tol)
    }

    pub fn expand(&self, r: f64) -> FBox {
        FBox { lo: self.lo.iter().map(|v| v - r).collect(), hi: self.hi.iter().map(|v| v + r).collect() }
    }
}

pub fn mat_vec(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)] * x[j]).sum()).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Points of a lattice `G Z^n` inside boxes.
#[derive(Clone, Debug)]
pub struct LatticeWalker {
    basis: DMatrix<f64>,
    inv: DMatrix<f64>,
}

impl LatticeWalker {
    pub fn new(l: &Lattice) -> Self {
        let basis = l.basis().to_f64();
        let inv = l.basis().inverse().expect("invertible").to_f64();
        LatticeWalker { basis, inv }
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn coords(&self, x: &[f64]) -> Vec<f64> {
        mat_vec(&self.inv, x)
    }

    pub fn point(&self, m: &[f64]) -> Vec<f64> {
        mat_vec(&self.basis, m)
    }

    /// Lattice points `k` with `lo <= k <= hi` (tolerance 1e-12).
    pub fn points_in_box(&self, lo: &[f64], hi: &[f64]) -> Vec<Vec<f64>> {
        let n = lo.len();
        let b = FBox::new(lo.to_vec(), hi.to_vec());
        let mb = b.map(&self.inv);
        let ranges: Vec<(i64, i64)> =
            (0..n).map(|i| ((mb.lo[i] - 1e-9).floor() as i64, (mb.hi[i] + 1e-9).ceil() as i64)).collect();
        let mut out = Vec::new();
        let mut m: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        if ranges.iter().any(|r| r.0 > r.1) {
            return out;
        }
        loop {
            let mf: Vec<f64> = m.iter().map(|&v| v as f64).collect();
            let k = self.point(&mf);
            if b.contains(&k, 1e-12) {
                out.push(k);
            }
            let mut axis = 0;
            loop {
                if axis == n {
                    return out;
                }
                m[axis] += 1;
                if m[axis] <= ranges[axis].1 {
                    break;
                }
                m[axis] = ranges[axis].0;
                axis += 1;
            }
        }
    }
}

/// Serializable description of a band-limited generator, enough to rebuild
/// its Fourier evaluator bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorDesc {
    /// Tensor SFS generator `w_j`.
    Sfs { delta: f64, index: Vec<usize> },
    /// `D_P g`, with `(D_P g)^(ξ) = |det P|^{-1/2} ĝ(P^{-T} ξ)`.
    Dilated { p: RatMatrix, inner: Box<GeneratorDesc> },
    /// `T_d g`, with `(T_d g)^(ξ) = e^{-2πi⟨d,ξ⟩} ĝ(ξ)`.
    Shifted {
        #[serde(with = "ratvec_serde")]
        d: Vec<Rational>,
        inner: Box<GeneratorDesc>,
    },
    /// `√vol(Γ) f (Σ_{k∈Γ*} f(·+k)^2)^{-1/2}` with `f` the mollified indicator of `region`.
    StrictlyExpansive { gamma: Lattice, region: BoxUnion, eps: f64 },
    /// `q^{(n-1)/2} ĝ(ξ_1) Π_{i>=2} ĝ(q ξ_i)` for a one-dimensional `g`.
    Lifted { base: Box<GeneratorDesc>, q: u64, n: usize },
}

impl GeneratorDesc {
    pub fn dim(&self) -> usize {
        match self {
            GeneratorDesc::Sfs { index, .. } => index.len(),
            GeneratorDesc::Dilated { p, .. } => p.rows(),
            GeneratorDesc::Shifted { d, .. } => d.len(),
            GeneratorDesc::StrictlyExpansive { gamma, .. } => gamma.dim(),
            GeneratorDesc::Lifted { n, .. } => *n,
        }
    }

    pub fn instantiate(&self) -> Result<Generator> {
        let (eval, support): (CEval, Vec<FBox>) = match self {
            GeneratorDesc::Sfs { delta, index } => {
                let profile = BumpProfile::new(*delta)?;
                let idx = index.clone();
                let eval: CEval = Arc::new(move |x: &[f64]| sfs::eval_tensor(&idx, &profile, x));
                let mut boxes = vec![FBox::new(Vec::new(), Vec::new())];
                for &j in index {
                    let ivs = sfs::support(j, *delta);
                    boxes = boxes
                        .into_iter()
                        .flat_map(|b| {
                            ivs.iter().map(move |&(a, c)| {
                                let mut nb = b.clone();
                                nb.lo.push(a);
                                nb.hi.push(c);
                                nb
                            })
                        })
                        .collect();
                }
                (eval, boxes)
            }
            GeneratorDesc::Dilated { p, inner } => {
                let g = inner.instantiate()?;
                let pinv = p.inverse().ok_or(Error::DegenerateLattice)?;
                let pt_inv = pinv.transpose().to_f64();
                let scale = to_f64(&p.det().abs()).powf(-0.5);
                let pt = p.transpose().to_f64();
                let support = g.support.iter().map(|b| b.map(&pt)).collect();
                let eval: CEval = Arc::new(move |x: &[f64]| g.eval(&mat_vec(&pt_inv, x)) * scale);
                (eval, support)
            }
            GeneratorDesc::Shifted { d, inner } => {
                let g = inner.instantiate()?;
                let df: Vec<f64> = d.iter().map(to_f64).collect();
                let support = g.support.clone();
                let eval: CEval = Arc::new(move |x: &[f64]| {
                    let v = g.eval(x);
                    if v == Complex64::zero() {
                        v
                    } else {
                        v * Complex64::from_polar(1.0, -2.0 * PI * dot(&df, x))
                    }
                });
                (eval, support)
            }
            GeneratorDesc::StrictlyExpansive { gamma, region, eps } => {
                let f = Arc::new(mollify_indicator(region, *eps)?);
                let (lo, hi) = region.bounds();
                let bbox = FBox::new(lo, hi).expand(*eps);
                let walker = LatticeWalker::new(&gamma.dual());
                let sv = to_f64(&gamma.volume()).sqrt();
                let bb = bbox.clone();
                let eval: CEval = Arc::new(move |x: &[f64]| {
                    let fx = f.eval(x);
                    if fx == 0.0 {
                        return Complex64::zero();
                    }
                    let lo: Vec<f64> = bb.lo.iter().zip(x).map(|(l, v)| l - v).collect();
                    let hi: Vec<f64> = bb.hi.iter().zip(x).map(|(l, v)| l - v).collect();
                    let s: f64 = walker.points_in_box(&lo, &hi).iter().map(|k| f.eval_shifted(x, k).powi(2)).sum();
                    Complex64::new(sv * fx / s.sqrt(), 0.0)
                });
                (eval, vec![bbox])
            }
            GeneratorDesc::Lifted { base, q, n } => {
                let g = base.instantiate()?;
                if g.dim() != 1 || *n < 2 {
                    return Err(Error::InvalidParameter("lifting needs a 1-D base and n >= 2".into()));
                }
                let qf = *q as f64;
                let scale = qf.powf((*n as f64 - 1.0) / 2.0);
                let b = FBox::hull(&g.support);
                let mut lo = vec![b.lo[0]];
                let mut hi = vec![b.hi[0]];
                for _ in 1..*n {
                    lo.push(b.lo[0] / qf);
                    hi.push(b.hi[0] / qf);
                }
                let eval: CEval = Arc::new(move |x: &[f64]| {
                    let mut v = g.eval(&x[..1]) * scale;
                    for xi in &x[1..] {
                        if v == Complex64::zero() {
                            break;
                        }
                        v *= g.eval(&[qf * xi]);
                    }
                    v
                });
                (eval, vec![FBox::new(lo, hi)])
            }
        };
        Ok(Generator { desc: self.clone(), eval, support })
    }
}

/// Instantiated generator: Fourier evaluator plus boxes covering its support.
#[derive(Clone)]
pub struct Generator {
    pub desc: GeneratorDesc,
    eval: CEval,
    support: Vec<FBox>,
}

impl fmt::Debug for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Generator").field("desc", &self.desc).field("support", &self.support).finish()
    }
}

impl Generator {
    pub fn eval(&self, xi: &[f64]) -> Complex64 {
        if !self.support.iter().any(|b| b.contains(xi, 1e-12)) {
            return Complex64::zero();
        }
        (self.eval)(xi)
    }

    pub fn support(&self) -> &[FBox] {
        &self.support
    }

    pub fn dim(&self) -> usize {
        self.support[0].dim()
    }

    pub fn evaluator(&self) -> CEval {
        let g = self.clone();
        Arc::new(move |x: &[f64]| g.eval(x))
    }
}

/// Instantiated scaling vector `Φ` with its translation lattice `Γ`.
#[derive(Clone, Debug)]
pub struct ScalingVector {
    lattice: Lattice,
    gens: Vec<Generator>,
    dual: LatticeWalkerHandle,
    hull: FBox,
    vol: f64,
}

#[derive(Clone, Debug)]
struct LatticeWalkerHandle(Arc<LatticeWalker>);

impl ScalingVector {
    pub fn new(lattice: Lattice, gens: Vec<Generator>) -> Result<Self> {
        if gens.is_empty() {
            return Err(Error::InvalidParameter("empty scaling vector".into()));
        }
        if gens.iter().any(|g| g.dim() != lattice.dim()) {
            return Err(Error::DimensionMismatch("generator and lattice dimension".into()));
        }
        let hull = FBox::hull(&gens.iter().flat_map(|g| g.support.clone()).collect::<Vec<_>>());
        Ok(ScalingVector {
            dual: LatticeWalkerHandle(Arc::new(LatticeWalker::new(&lattice.dual()))),
            vol: to_f64(&lattice.volume()),
            lattice,
            gens,
            hull,
        })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn generators(&self) -> &[Generator] {
        &self.gens
    }

    pub fn len(&self) -> usize {
        self.gens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gens.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.lattice.dim()
    }

    pub fn volume(&self) -> f64 {
        self.vol
    }

    /// Box containing every generator's support.
    pub fn hull(&self) -> &FBox {
        &self.hull
    }

    pub fn dual_walker(&self) -> &LatticeWalker {
        &self.dual.0
    }

    pub fn eval(&self, xi: &[f64]) -> Vec<Complex64> {
        if !self.hull.contains(xi, 1e-12) {
            return vec![Complex64::zero(); self.gens.len()];
        }
        self.gens.iter().map(|g| g.eval(xi)).collect()
    }

    /// `k ∈ Γ*` for which `ξ + k` meets the support hull of `region`.
    pub fn fiber_shifts_in(&self, xi: &[f64], region: &FBox) -> Vec<Vec<f64>> {
        let lo: Vec<f64> = region.lo.iter().zip(xi).map(|(l, v)| l - v).collect();
        let hi: Vec<f64> = region.hi.iter().zip(xi).map(|(l, v)| l - v).collect();
        self.dual.0.points_in_box(&lo, &hi)
    }

    pub fn fiber_shifts(&self, xi: &[f64]) -> Vec<Vec<f64>> {
        self.fiber_shifts_in(xi, &self.hull)
    }

    /// `Σ_{k∈Γ*} Φ̂(ξ+k) Φ̂(ξ+k)^*`.
    pub fn gramian(&self, xi: &[f64]) -> DMatrix<Complex64> {
        let n = self.gens.len();
        let mut g = DMatrix::<Complex64>::zeros(n, n);
        for k in self.fiber_shifts(xi) {
            let x: Vec<f64> = xi.iter().zip(&k).map(|(a, b)| a + b).collect();
            let v = DVector::from_vec(self.eval(&x));
            g += &v * v.adjoint();
        }
        g
    }

    /// Max over a grid of the Γ* cell of `|G(ξ) - vol(Γ) I|`.
    pub fn gramian_residual(&self, per_axis: usize) -> f64 {
        let n = self.dim();
        let total = per_axis.pow(n as u32);
        let basis = self.dual.0.basis().clone();
        let vol = self.vol;
        (0..total)
            .into_par_iter()
            .map(|idx| {
                let m = unflatten(idx, &vec![per_axis; n]);
                let c: Vec<f64> = m.iter().map(|&v| (v as f64 + 0.5) / per_axis as f64).collect();
                let xi = mat_vec(&basis, &c);
                let g = self.gramian(&xi);
                let mut r: f64 = 0.0;
                for i in 0..g.nrows() {
                    for j in 0..g.ncols() {
                        let t = if i == j { vol } else { 0.0 };
                        r = r.max((g[(i, j)] - t).norm());
                    }
                }
                r
            })
            .reduce(|| 0.0, f64::max)
    }
}

/// Row-major multi-index of a flat index (last axis fastest).
pub fn unflatten(mut idx: usize, shape: &[usize]) -> Vec<usize> {
    let mut m = vec![0; shape.len()];
    for i in (0..shape.len()).rev() {
        m[i] = idx % shape[i];
        idx /= shape[i];
    }
    m
}

pub fn flatten(m: &[usize], shape: &[usize]) -> usize {
    m.iter().zip(shape).fold(0, |acc, (&v, &s)| acc * s + v)
}

/// Expanding ellipsoid `E = U^T P U(B(0,1))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub u: RatMatrix,
    #[serde(with = "ratvec_serde")]
    pub p: Vec<Rational>,
}

impl Ellipsoid {
    pub fn new(u: RatMatrix, p: Vec<Rational>) -> Result<Self> {
        if !u.is_orthogonal() {
            return Err(Error::InvalidParameter("U must be exactly orthogonal".into()));
        }
        if p.len() != u.rows() || p.iter().any(|v| !v.is_positive()) {
            return Err(Error::InvalidParameter("P must be positive with one entry per axis".into()));
        }
        Ok(Ellipsoid { u, p })
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    pub fn axes_f64(&self) -> Vec<f64> {
        self.p.iter().map(to_f64).collect()
    }

    /// Quadratic form `Q = U^T P^{-2} U`, so `E = {x : x^T Q x <= 1}`.
    pub fn form(&self) -> DMatrix<f64> {
        let u = self.u.to_f64();
        let d = DMatrix::from_diagonal(&DVector::from_iterator(self.dim(), self.axes_f64().iter().map(|p| p.powi(-2))));
        u.transpose() * d * u
    }

    pub fn scaled(&self, c: &Rational) -> Ellipsoid {
        Ellipsoid { u: self.u.clone(), p: self.p.iter().map(|v| v * c).collect() }
    }

    /// `E ∩ U^T(I_j) ≠ ∅` for the closed cell `I_j`. In `U` coordinates `E`
    /// is the axis-aligned `P B(0,1)`, so the nearest point of each box
    /// factorizes over the axes.
    pub fn meets_cell(&self, index: &[usize], delta: f64) -> bool {
        let s: f64 = index
            .iter()
            .zip(self.axes_f64())
            .map(|(&j, p)| {
                let m = if j == 0 { 0.0 } else { (j as f64 / 2.0 - delta).max(0.0) };
                (m / p).powi(2)
            })
            .sum();
        s <= 1.0 + 1e-12
    }

    /// The `2^n` closed boxes of `I_j`, in `U` coordinates.
    pub fn cell_boxes(index: &[usize], delta: f64) -> Vec<FBox> {
        GeneratorDesc::Sfs { delta, index: index.to_vec() }.instantiate().map(|g| g.support).unwrap_or_default()
    }
}

/// `J = {j : E ∩ U^T(I_j) ≠ ∅}`, sorted lexicographically.
pub fn index_set(e: &Ellipsoid, delta: f64) -> Vec<Vec<usize>> {
    let n = e.dim();
    let bounds: Vec<usize> = e.axes_f64().iter().map(|p| (2.0 * (p + delta)).floor() as usize + 1).collect();
    let shape: Vec<usize> = bounds.iter().map(|b| b + 1).collect();
    let total: usize = shape.iter().product();
    let mut out: Vec<Vec<usize>> =
        (0..total).map(|i| unflatten(i, &shape)).filter(|j| e.meets_cell(j, delta)).collect();
    out.sort();
    debug_assert!(out.iter().all(|j| j.len() == n));
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpandingEllipsoid {
    pub ellipsoid: Ellipsoid,
    pub lambda: f64,
    /// Smallest eigenvalue of `Q - λ^2 B^{-T} Q B^{-1}` with `Q` normalized to unit norm.
    pub certificate: f64,
}

fn symmetric_min_eig(m: &DMatrix<f64>) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    s.symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Largest `λ` with `Q - λ^2 B^{-T} Q B^{-1} ⪰ 0`.
fn best_lambda(q: &DMatrix<f64>, b_inv: &DMatrix<f64>) -> Option<f64> {
    let qb = b_inv.transpose() * q * b_inv;
    let chol = q.clone().cholesky()?;
    let l_inv = chol.l().try_inverse()?;
    let m = &l_inv * qb * l_inv.transpose();
    let top = ((&m + m.transpose()) * 0.5).symmetric_eigen().eigenvalues.iter().copied().fold(0.0, f64::max);
    (top > 0.0).then(|| top.sqrt().recip())
}

fn certificate(q: &DMatrix<f64>, b_inv: &DMatrix<f64>, lambda: f64) -> f64 {
    let qn = q / q.norm();
    let c = &qn - (b_inv.transpose() * &qn * b_inv) * (lambda * lambda);
    symmetric_min_eig(&c)
}

/// Ellipsoid with rational axes and rational orthogonal frame satisfying
/// `λE ⊂ B(E)`, certified by `min eig(Q - λ^2 B^{-T} Q B^{-1}) >= margin`.
pub fn expanding_ellipsoid(b: &DMatrix<f64>, margin: f64) -> Result<ExpandingEllipsoid> {
    let n = b.nrows();
    check_expansive(b)?;
    let rho = min_eigen_modulus(b);
    let b_inv = b.clone().try_inverse().ok_or(Error::NotExpansive(0.0))?;
    const TERMS: i32 = 20;
    let mu = 1.0 + 0.5 * (rho - 1.0);
    let mut q = DMatrix::<f64>::zeros(n, n);
    let mut pw = DMatrix::<f64>::identity(n, n);
    for j in 0..=TERMS {
        q += (pw.transpose() * &pw) * mu.powi(2 * j);
        pw = &b_inv * pw;
    }
    q = (&q + q.transpose()) * 0.5;
    q /= q.norm();
    let offdiag = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| q[(i, j)].abs());
    let diagonal = offdiag.fold(0.0, f64::max) <= 1e-12 * q.diagonal().amax();
    let (u_float, sigma) = if diagonal {
        (DMatrix::identity(n, n), q.diagonal().iter().copied().collect::<Vec<_>>())
    } else {
        let eig = q.clone().symmetric_eigen();
        (eig.eigenvectors.transpose(), eig.eigenvalues.iter().copied().collect())
    };
    let mut tol = 1e-6;
    let mut max_den: u64 = 1_000_000;
    for _ in 0..6 {
        let u = if diagonal { RatMatrix::identity(n) } else { cayley_rationalize(&u_float, tol)? };
        // E = U^T P U B(0,1) has form U^T P^{-2} U, so p_i = σ_i^{-1/2}
        let p: Vec<Rational> = sigma
            .iter()
            .map(|s| {
                let v = approx_rational(s.powf(-0.5), max_den);
                if v.is_positive() {
                    v
                } else {
                    rat(1, max_den as i64)
                }
            })
            .collect();
        let e = Ellipsoid::new(u, p)?;
        let qr = e.form();
        if let Some(lb) = best_lambda(&qr, &b_inv) {
            if lb > 1.0 {
                let lambda = 1.0 + 0.5 * (lb - 1.0);
                let cert = certificate(&qr, &b_inv, lambda);
                if cert >= margin {
                    return Ok(ExpandingEllipsoid { ellipsoid: e, lambda, certificate: cert });
                }
            }
        }
        tol *= 1e-2;
        max_den = max_den.saturating_mul(100);
    }
    Err(Error::Certification("no rational ellipsoid passed the expansion certificate".into()))
}

/// Where an MRA came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "path", rename_all = "snake_case")]
pub enum Provenance {
    Ellipsoid { ellipsoid: Ellipsoid, lambda: f64, delta: f64, index_set: Vec<Vec<usize>> },
    StrictlyExpansive { region: BoxUnion, eps: f64 },
    Rescaled { p: RatMatrix, from: Box<Provenance> },
    Refined { target: Lattice, r: usize, from: Box<Provenance> },
    Lifted { p: u64, q: u64, n: usize, from: Box<Provenance> },
}

/// An `(A, Γ)` multiresolution analysis, stored by generator descriptors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MraSpec {
    pub dilation: RatMatrix,
    pub lattice: Lattice,
    pub generators: Vec<GeneratorDesc>,
    pub provenance: Provenance,
}

impl MraSpec {
    pub fn multiplicity(&self) -> usize {
        self.generators.len()
    }

    pub fn dim(&self) -> usize {
        self.dilation.rows()
    }

    pub fn scaling_vector(&self) -> Result<ScalingVector> {
        let gens = self.generators.iter().map(GeneratorDesc::instantiate).collect::<Result<Vec<_>>>()?;
        ScalingVector::new(self.lattice.clone(), gens)
    }
}

/// Smallest scale at which every cell of `J` sits inside `B(E)`.
#[derive(Clone, Debug)]
struct Sandwich {
    ellipsoid: Ellipsoid,
    index_set: Vec<Vec<usize>>,
}

/// Max over vertices of all `J` cells of the `B(E)` form; the cells are
/// inside `B(E)` when this is below 1 (convexity).
fn sandwich_value(e: &Ellipsoid, index_set: &[Vec<usize>], delta: f64, b_inv: &DMatrix<f64>) -> f64 {
    let q = e.form();
    let ut = e.u.transpose().to_f64();
    let m = b_inv * ut;
    let mut worst: f64 = 0.0;
    for j in index_set {
        for bx in Ellipsoid::cell_boxes(j, delta) {
            for c in bx.corners() {
                let y = DVector::from_vec(mat_vec(&m, &c));
                worst = worst.max((y.transpose() * &q * &y)[(0, 0)]);
            }
        }
    }
    worst
}

fn fit_sandwich(e: &Ellipsoid, delta: f64, b_inv: &DMatrix<f64>) -> Result<Sandwich> {
    let pmin = e.axes_f64().iter().copied().fold(f64::INFINITY, f64::min);
    let mut c = 0.25 / pmin;
    for _ in 0..800 {
        let cr = approx_rational(c, 64);
        let ec = e.scaled(&cr);
        let js = index_set(&ec, delta);
        if sandwich_value(&ec, &js, delta, b_inv) <= 1.0 - 1e-9 {
            return Ok(Sandwich { ellipsoid: ec, index_set: js });
        }
        c *= 1.03;
    }
    Err(Error::Certification("could not fit the generator cells inside B(E)".into()))
}

/// Certified sandwich check for an ellipsoid-path MRA: returns the max form
/// value of `B(E)` over the cell vertices (must be < 1).
pub fn sandwich_check(spec: &MraSpec) -> Option<f64> {
    let Provenance::Ellipsoid { ellipsoid, delta, index_set, .. } = &spec.provenance else {
        return None;
    };
    let b_inv = spec.dilation.transpose().inverse()?.to_f64();
    Some(sandwich_value(ellipsoid, index_set, *delta, &b_inv))
}

/// MRA from an expanding ellipsoid: `Γ = U^{-1} Z^n`, `Φ = {D_U w_j : j ∈ J}`.
pub fn build_mra_ellipsoid(a: &RatMatrix, delta: f64) -> Result<MraSpec> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch("dilation must be square".into()));
    }
    BumpProfile::new(delta)?;
    let b = a.transpose();
    let bf = b.to_f64();
    let ee = expanding_ellipsoid(&bf, 1e-9)?;
    let b_inv = b.inverse().ok_or(Error::NotExpansive(0.0))?.to_f64();
    let sw = fit_sandwich(&ee.ellipsoid, delta, &b_inv)?;
    from_ellipsoid(a, sw.ellipsoid, ee.lambda, delta, sw.index_set)
}

/// MRA for a given ellipsoid (no certification beyond the index set).
pub fn build_mra_from_ellipsoid(a: &RatMatrix, e: Ellipsoid, delta: f64) -> Result<MraSpec> {
    BumpProfile::new(delta)?;
    let js = index_set(&e, delta);
    from_ellipsoid(a, e, f64::NAN, delta, js)
}

fn from_ellipsoid(a: &RatMatrix, e: Ellipsoid, lambda: f64, delta: f64, js: Vec<Vec<usize>>) -> Result<MraSpec> {
    let n = a.rows();
    let rotated = e.u != RatMatrix::identity(n);
    let generators = js
        .iter()
        .map(|j| {
            let w = GeneratorDesc::Sfs { delta, index: j.clone() };
            if rotated {
                GeneratorDesc::Dilated { p: e.u.clone(), inner: Box::new(w) }
            } else {
                w
            }
        })
        .collect();
    Ok(MraSpec {
        dilation: a.clone(),
        lattice: Lattice::new(e.u.transpose())?,
        generators,
        provenance: Provenance::Ellipsoid { ellipsoid: e, lambda, delta, index_set: js },
    })
}

/// Change of variables: dilation `P^{-1} A P`, lattice `P^{-1} Γ`, generators `D_P φ`.
pub fn rescale_mra(spec: &MraSpec, p: &RatMatrix) -> Result<MraSpec> {
    let pinv = p.inverse().ok_or(Error::DegenerateLattice)?;
    if *p == RatMatrix::identity(p.rows()) {
        return Ok(spec.clone());
    }
    Ok(MraSpec {
        dilation: &(&pinv * &spec.dilation) * p,
        lattice: spec.lattice.image(&pinv)?,
        generators: spec
            .generators
            .iter()
            .map(|g| GeneratorDesc::Dilated { p: p.clone(), inner: Box::new(g.clone()) })
            .collect(),
        provenance: Provenance::Rescaled { p: p.clone(), from: Box::new(spec.provenance.clone()) },
    })
}

/// Same MRA seen over the sublattice `target`: generators `T_{d_i} φ` for a
/// transversal `{d_i}` of `Γ / target`.
pub fn refine_to_lattice(spec: &MraSpec, target: &Lattice) -> Result<MraSpec> {
    if !target.is_sublattice_of(&spec.lattice) {
        return Err(Error::NotSublattice);
    }
    let t = transversal(target, &spec.lattice)?;
    if t.len() == 1 {
        return Ok(MraSpec { lattice: target.clone(), ..spec.clone() });
    }
    let mut generators = Vec::with_capacity(t.len() * spec.generators.len());
    for d in &t.cosets {
        for g in &spec.generators {
            if d.iter().all(Zero::is_zero) {
                generators.push(g.clone());
            } else {
                generators.push(GeneratorDesc::Shifted { d: d.clone(), inner: Box::new(g.clone()) });
            }
        }
    }
    Ok(MraSpec {
        dilation: spec.dilation.clone(),
        lattice: target.clone(),
        generators,
        provenance: Provenance::Refined { target: target.clone(), r: t.len(), from: Box::new(spec.provenance.clone()) },
    })
}

/// Checks of the strict expansiveness hypotheses.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub tiling_samples: usize,
    pub tiling_ok: bool,
    pub inclusion_ok: bool,
}

fn tiling_check(gamma: &Lattice, region: &BoxUnion, per_axis: usize) -> Result<usize> {
    let dual = gamma.dual();
    if region.volume() != dual.volume() {
        return Err(Error::Hypothesis(format!(
            "K does not tile under the dual lattice: vol(K) = {}, vol = {}",
            crate::ratlat::format_rational(&region.volume()),
            crate::ratlat::format_rational(&dual.volume())
        )));
    }
    let walker = LatticeWalker::new(&dual);
    let (lo, hi) = region.bounds();
    let bbox = FBox::new(lo, hi);
    let boxes: Vec<FBox> = region.boxes.iter().map(|b| FBox::new(b.lo_f64(), b.hi_f64())).collect();
    let n = gamma.dim();
    let shape = vec![per_axis; n];
    let total = per_axis.pow(n as u32);
    const INSET: f64 = 1e-9;
    let mut used = 0;
    for idx in 0..total {
        let m = unflatten(idx, &shape);
        // irrational-ish offsets keep samples off the rational boundaries
        let c: Vec<f64> = m.iter().enumerate().map(|(i, &v)| (v as f64 + 0.5 + 0.1234567 * (i + 1) as f64 / 7.0) / per_axis as f64).collect();
        let xi = walker.point(&c);
        let mut count = 0;
        let mut on_boundary = false;
        let shifts = walker.points_in_box(
            &bbox.lo.iter().zip(&xi).map(|(l, v)| l - v - 1.0).collect::<Vec<_>>(),
            &bbox.hi.iter().zip(&xi).map(|(l, v)| l - v + 1.0).collect::<Vec<_>>(),
        );
        for k in shifts {
            let x: Vec<f64> = xi.iter().zip(&k).map(|(a, b)| a + b).collect();
            for b in &boxes {
                if b.contains(&x, -INSET) {
                    count += 1;
                } else if b.contains(&x, INSET) {
                    on_boundary = true;
                }
            }
        }
        if on_boundary {
            continue;
        }
        used += 1;
        if count != 1 {
            return Err(Error::Hypothesis(format!("K does not tile: point {xi:?} is covered {count} times")));
        }
    }
    Ok(used)
}

/// `K^{+ε} ⊆ B(K^{-ε})` with ℓ∞ neighbourhoods: the `B^{-1}` image of each
/// expanded box must have all its vertices inside one shrunk box (which
/// lies in `K^{-ε}`).
fn inclusion_check(b_inv: &DMatrix<f64>, region: &BoxUnion, eps: f64) -> bool {
    let shrunk: Vec<FBox> = region.boxes.iter().map(|b| FBox::new(b.lo_f64(), b.hi_f64()).expand(-eps)).collect();
    region.boxes.iter().all(|b| {
        let corners: Vec<Vec<f64>> =
            FBox::new(b.lo_f64(), b.hi_f64()).expand(eps).corners().iter().map(|c| mat_vec(b_inv, c)).collect();
        shrunk.iter().any(|s| s.lo.iter().zip(&s.hi).all(|(l, h)| l <= h) && corners.iter().all(|c| s.contains(c, -1e-12)))
    })
}

/// Multiplicity-one MRA from a tile `K` of `Γ*` with `K^{+ε} ⊆ B(K^{-ε})`.
pub fn strictly_expansive_scaling(a: &RatMatrix, gamma: &Lattice, k: &BoxUnion, eps: f64) -> Result<MraSpec> {
    check_strict_hypotheses(a, gamma, k, eps)?;
    strictly_expansive_unchecked(a, gamma, k, eps)
}

pub fn check_strict_hypotheses(a: &RatMatrix, gamma: &Lattice, k: &BoxUnion, eps: f64) -> Result<HypothesisReport> {
    if k.dim() != gamma.dim() || a.rows() != gamma.dim() {
        return Err(Error::DimensionMismatch("dilation, lattice and region".into()));
    }
    check_expansive(&a.to_f64())?;
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter("eps must be positive".into()));
    }
    let per_axis = match gamma.dim() {
        1 => 4096,
        2 => 64,
        _ => 16,
    };
    let used = tiling_check(gamma, k, per_axis)?;
    let b_inv = a.transpose().inverse().ok_or(Error::NotExpansive(0.0))?.to_f64();
    if !inclusion_check(&b_inv, k, eps) {
        return Err(Error::Hypothesis(format!("K^(+eps) is not inside B(K^(-eps)) for eps = {eps}")));
    }
    Ok(HypothesisReport { tiling_samples: used, tiling_ok: true, inclusion_ok: true })
}

/// Same construction without the hypothesis checks (used for negative controls).
pub fn strictly_expansive_unchecked(a: &RatMatrix, gamma: &Lattice, k: &BoxUnion, eps: f64) -> Result<MraSpec> {
    let desc = GeneratorDesc::StrictlyExpansive { gamma: gamma.clone(), region: k.clone(), eps };
    desc.instantiate()?;
    Ok(MraSpec {
        dilation: a.clone(),
        lattice: gamma.clone(),
        generators: vec![desc],
        provenance: Provenance::StrictlyExpansive { region: k.clone(), eps },
    })
}

/// The `Z^n`-periodic low-pass filter `m` for an integer dilation, built
/// from a `Z^n`-tiling smoothing `f` with the smooth square root trick.
#[derive(Clone, Debug)]
pub struct Se9Filter {
    bt: DMatrix<f64>,
    bt_walker: LatticeWalker,
    zn: LatticeWalker,
    f: Arc<MollifiedIndicator>,
    bbox: FBox,
}

pub fn integer_lowpass_se9(a: &RatMatrix, f: Arc<MollifiedIndicator>) -> Result<Se9Filter> {
    if !a.is_integer() {
        return Err(Error::InvalidParameter("the dilation must have integer entries".into()));
    }
    check_expansive(&a.to_f64())?;
    let n = a.rows();
    let (lo, hi) = f.region().bounds();
    let bbox = FBox::new(lo, hi).expand(f.eps());
    let bt = a.transpose();
    Ok(Se9Filter {
        bt: bt.to_f64(),
        bt_walker: LatticeWalker::new(&Lattice::new(bt)?),
        zn: LatticeWalker::new(&Lattice::integer(n)),
        f,
        bbox,
    })
}

impl Se9Filter {
    pub fn eval(&self, xi: &[f64]) -> Result<f64> {
        let y = mat_vec(&self.bt, xi);
        let lo: Vec<f64> = self.bbox.lo.iter().zip(&y).map(|(l, v)| l - v).collect();
        let hi: Vec<f64> = self.bbox.hi.iter().zip(&y).map(|(l, v)| l - v).collect();
        // numerator runs over B(ξ + Z^n) = Bξ + B Z^n, denominator over Bξ + Z^n
        let num: f64 = self.bt_walker.points_in_box(&lo, &hi).iter().map(|k| h(self.f.eval_shifted(&y, k))).sum();
        let den: f64 = self.zn.points_in_box(&lo, &hi).iter().map(|k| h(self.f.eval_shifted(&y, k))).sum();
        if den <= 0.0 {
            return Err(Error::Hypothesis(format!("vanishing denominator at {xi:?}")));
        }
        Ok((num / den).sqrt())
    }
}

/// Route from any rational expansive `A` to an `(A, AZ^n + Z^n)`-MRA:
/// conjugate to `Ã = G^{-1} A G` (`Γ = G Z^n`), build the ellipsoid MRA for `Ã`,
/// move its lattice `U^{-1} Z^n` onto `Z^n` when `U ≠ I`, then rescale by `G^{-1}`.
pub fn build_general(a: &RatMatrix, delta: f64) -> Result<MraSpec> {
    check_expansive(&a.to_f64())?;
    let (gamma, _) = dilation_lattices(a)?;
    let g = gamma.canonical_basis();
    let g_inv = g.inverse().ok_or(Error::DegenerateLattice)?;
    let a_tilde = &(&g_inv * a) * &g;
    let mut spec = build_mra_ellipsoid(&a_tilde, delta)?;
    let n = a.rows();
    let zn = Lattice::integer(n);
    if spec.lattice != zn {
        let q = spec.lattice.basis().inverse().expect("invertible").common_denominator();
        let q = Rational::from_integer(q);
        let qi = RatMatrix::scalar(n, q);
        spec = rescale_mra(&spec, &qi)?;
        spec = refine_to_lattice(&spec, &zn)?;
    }
    let out = rescale_mra(&spec, &g_inv)?;
    debug_assert!(out.lattice == gamma);
    Ok(MraSpec { lattice: gamma, ..out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bump::RatBox;
    use crate::ratlat::{rint, GroupIndices};
    use approx::assert_abs_diff_eq;

    fn m1(s: &str) -> RatMatrix {
        RatMatrix::from_strs(1, 1, &[s]).unwrap()
    }

    fn interval(lo: Rational, hi: Rational) -> BoxUnion {
        BoxUnion::single(RatBox::new(vec![lo], vec![hi]).unwrap())
    }

    #[test]
    fn walker_enumerates() {
        let w = LatticeWalker::new(&Lattice::new(m1("1/2")).unwrap());
        let pts = w.points_in_box(&[-1.0], &[1.0]);
        assert_eq!(pts.len(), 5);
    }

    #[test]
    fn index_set_examples() {
        let e = Ellipsoid::new(RatMatrix::identity(2), vec![rat(1, 10), rat(1, 10)]).unwrap();
        assert_eq!(index_set(&e, 0.1), vec![vec![0, 0]]);
        let e = Ellipsoid::new(RatMatrix::identity(1), vec![rint(1)]).unwrap();
        assert_eq!(index_set(&e, 0.1), vec![vec![0], vec![1], vec![2]]);
        let e = Ellipsoid::new(RatMatrix::identity(2), vec![rat(6, 5), rat(17, 10)]).unwrap();
        let expect: Vec<Vec<usize>> =
            vec![vec![0, 0], vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 0], vec![1, 1], vec![1, 2], vec![1, 3], vec![2, 0], vec![2, 1]];
        assert_eq!(index_set(&e, 0.01), expect);
    }

    #[test]
    fn ellipsoid_isotropic() {
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]);
        let ee = expanding_ellipsoid(&b, 1e-9).unwrap();
        assert!(ee.certificate > 0.0);
        assert_eq!(ee.ellipsoid.u, RatMatrix::identity(2));
        let lb = best_lambda(&ee.ellipsoid.form(), &b.clone().try_inverse().unwrap()).unwrap();
        assert_abs_diff_eq!(lb, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn ellipsoid_axis_aligned() {
        let b = DMatrix::from_row_slice(2, 2, &[1.5, 0.0, 0.0, 2.0]);
        let ee = expanding_ellipsoid(&b, 1e-9).unwrap();
        assert_eq!(ee.ellipsoid.u, RatMatrix::identity(2));
        assert!(ee.certificate >= 1e-9);
    }

    #[test]
    fn ellipsoid_rotated_scaling() {
        let (s, c) = (PI / 6.0).sin_cos();
        let b = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]) * 1.5;
        let ee = expanding_ellipsoid(&b, 1e-9).unwrap();
        assert!(ee.lambda > 1.0 && ee.lambda < 1.5);
        assert!(ee.certificate >= 1e-9);
    }

    #[test]
    fn ellipsoid_non_normal_needs_rotation() {
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 1.5, 0.0, 3.0]);
        let ee = expanding_ellipsoid(&b, 1e-9).unwrap();
        assert!(ee.ellipsoid.u.is_orthogonal());
        assert_ne!(ee.ellipsoid.u, RatMatrix::identity(2));
        assert!(ee.certificate >= 1e-9);
    }

    #[test]
    fn ellipsoid_mra_dyadic_1d() {
        let spec = build_mra_ellipsoid(&RatMatrix::from_i64(1, 1, &[2]), 0.1).unwrap();
        assert_eq!(spec.lattice, Lattice::integer(1));
        assert!(sandwich_check(&spec).unwrap() < 1.0);
        let sv = spec.scaling_vector().unwrap();
        assert!(sv.gramian_residual(64) < 1e-10);
    }

    #[test]
    fn ellipsoid_mra_dyadic_2d() {
        let spec = build_mra_ellipsoid(&RatMatrix::from_i64(2, 2, &[2, 0, 0, 2]), 0.1).unwrap();
        let Provenance::Ellipsoid { index_set, .. } = &spec.provenance else { panic!() };
        assert_eq!(spec.multiplicity(), index_set.len());
        let sv = spec.scaling_vector().unwrap();
        assert!(sv.gramian_residual(6) < 1e-10);
    }

    #[test]
    fn rotated_ellipsoid_mra_orthonormal() {
        let a = RatMatrix::from_strs(2, 2, &["2", "0", "3/2", "3"]).unwrap();
        let spec = build_mra_ellipsoid(&a, 0.2).unwrap();
        assert_ne!(spec.lattice, Lattice::integer(2));
        let sv = spec.scaling_vector().unwrap();
        assert!(sv.gramian_residual(3) < 1e-10);
        assert!(sandwich_check(&spec).unwrap() < 1.0);
    }

    #[test]
    fn rescale_identity_and_invariance() {
        let spec = build_mra_ellipsoid(&RatMatrix::from_i64(1, 1, &[2]), 0.1).unwrap();
        assert_eq!(rescale_mra(&spec, &RatMatrix::identity(1)).unwrap(), spec);
        let r = rescale_mra(&spec, &m1("3")).unwrap();
        assert_eq!(r.lattice, Lattice::new(m1("1/3")).unwrap());
        assert_eq!(r.dilation, spec.dilation);
        let before = spec.scaling_vector().unwrap().gramian_residual(50);
        let after = r.scaling_vector().unwrap();
        let after_res = after.gramian_residual(50);
        assert!((before - after_res).abs() < 1e-12, "{before:e} {after_res:e}");
    }

    #[test]
    fn refine_half_lattice() {
        let gamma = Lattice::new(m1("1/2")).unwrap();
        let k = interval(rint(-1), rint(1));
        let spec = strictly_expansive_scaling(&m1("3/2"), &gamma, &k, 0.1).unwrap();
        let same = refine_to_lattice(&spec, &gamma).unwrap();
        assert_eq!(same.generators, spec.generators);
        let r = refine_to_lattice(&spec, &Lattice::integer(1)).unwrap();
        assert_eq!(r.multiplicity(), 2);
        let sv = r.scaling_vector().unwrap();
        assert!(sv.gramian_residual(256) < 1e-10);
        assert!(matches!(refine_to_lattice(&r, &gamma), Err(Error::NotSublattice)));
    }

    #[test]
    fn strictly_expansive_three_halves() {
        let gamma = Lattice::new(m1("1/2")).unwrap();
        let k = interval(rint(-1), rint(1));
        let spec = strictly_expansive_scaling(&m1("3/2"), &gamma, &k, 0.1).unwrap();
        let sv = spec.scaling_vector().unwrap();
        assert_abs_diff_eq!(sv.eval(&[0.0])[0].re, 0.5f64.sqrt(), epsilon = 1e-15);
        assert!(sv.gramian_residual(4096) < 1e-12);
    }

    #[test]
    fn strictly_expansive_dyadic_and_failure() {
        let k = interval(rat(-1, 2), rat(1, 2));
        let z = Lattice::integer(1);
        let two = RatMatrix::from_i64(1, 1, &[2]);
        let spec = strictly_expansive_scaling(&two, &z, &k, 0.1).unwrap();
        assert!(spec.scaling_vector().unwrap().gramian_residual(1000) < 1e-12);
        assert!(matches!(strictly_expansive_scaling(&two, &z, &k, 0.2), Err(Error::Hypothesis(_))));
        let bad = interval(rint(-1), rint(1));
        assert!(matches!(strictly_expansive_scaling(&two, &z, &bad, 0.1), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn se9_filter() {
        let k = interval(rat(-1, 2), rat(1, 2));
        let f = Arc::new(mollify_indicator(&k, 0.1).unwrap());
        let m = integer_lowpass_se9(&RatMatrix::from_i64(1, 1, &[2]), f).unwrap();
        assert_abs_diff_eq!(m.eval(&[0.0]).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(m.eval(&[0.5]).unwrap(), 0.0);
        let mut worst: f64 = 0.0;
        for i in 0..10_000 {
            let x = i as f64 / 10_000.0;
            let s = m.eval(&[x]).unwrap().powi(2) + m.eval(&[x + 0.5]).unwrap().powi(2);
            worst = worst.max((s - 1.0).abs());
            assert_abs_diff_eq!(m.eval(&[x + 1.0]).unwrap(), m.eval(&[x]).unwrap(), epsilon = 1e-14);
        }
        assert!(worst < 1e-10, "{worst:e}");
        assert!(integer_lowpass_se9(&m1("3/2"), Arc::new(mollify_indicator(&k, 0.1).unwrap())).is_err());
    }

    #[test]
    fn general_route_lattices() {
        let a = RatMatrix::from_strs(2, 2, &["0", "1/2", "3", "0"]).unwrap();
        let spec = build_general(&a, 0.1).unwrap();
        assert_eq!(spec.dilation, a);
        let (gamma, _) = dilation_lattices(&a).unwrap();
        assert_eq!(spec.lattice, gamma);
        let gi: GroupIndices = crate::ratlat::group_indices(&a).unwrap();
        assert_eq!((gi.p, gi.q), (3, 2));
        let sv = spec.scaling_vector().unwrap();
        assert!(sv.gramian_residual(2) < 1e-10);
    }

    #[test]
    fn spec_json_round_trip() {
        let gamma = Lattice::new(m1("1/2")).unwrap();
        let spec = strictly_expansive_scaling(&m1("3/2"), &gamma, &interval(rint(-1), rint(1)), 0.1).unwrap();
        let spec = refine_to_lattice(&spec, &Lattice::integer(1)).unwrap();
        let s = serde_json::to_string(&spec).unwrap();
        let back: MraSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, spec);
        let (a, b) = (spec.scaling_vector().unwrap(), back.scaling_vector().unwrap());
        for x in [-0.7, 0.1, 0.93] {
            assert_eq!(a.eval(&[x]), b.eval(&[x]));
        }
    }
}
