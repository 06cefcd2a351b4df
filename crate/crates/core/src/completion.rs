//! Completion of the low-pass polyphase rows to a unitary matrix function,
//! high-pass assembly and wavelet synthesis, plus the one-dimensional `p/q`
//! pipeline and its lift to higher dimensions.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_traits::Zero;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::bump::{BoxUnion, RatBox};
use crate::error::{Error, Result};
use crate::filterbank::{
    extract_lowpass, hstack_components, max_abs, polyphase, polyphase_report, recombine, smith_barnwell_residual,
    split_components, unitarity_residual, CMat, DilationData, FilterBank, GridFn, LowpassEval, PolyphaseReport,
};
use crate::mra::{dot, mat_vec, strictly_expansive_scaling, FBox, GeneratorDesc, MraSpec, Provenance, ScalingVector};
use crate::ratlat::{rat, rint, to_f64, Lattice, RatMatrix};

/// `U V^*` from the thin SVD of `x`, with the smallest singular value.
pub fn lowdin(x: &CMat) -> Option<(CMat, f64)> {
    let svd = x.clone().svd(true, true);
    let smin = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    Some((svd.u? * svd.v_t?, smin))
}

/// Orbits of grid nodes under the index shifts realizing `Λ*/Γ*`.
#[derive(Clone, Debug)]
pub struct ClassMap {
    pub class_of: Vec<usize>,
    pub members: Vec<Vec<usize>>,
}

impl ClassMap {
    pub fn trivial(nodes: usize) -> Self {
        ClassMap { class_of: (0..nodes).collect(), members: (0..nodes).map(|i| vec![i]).collect() }
    }

    pub fn from_offsets(g: &GridFn, offsets: &[Vec<usize>]) -> Self {
        let mut class_of = vec![usize::MAX; g.len()];
        let mut members = Vec::new();
        for i in 0..g.len() {
            if class_of[i] != usize::MAX {
                continue;
            }
            let c = members.len();
            let mut orbit: Vec<usize> = offsets.iter().map(|o| g.shifted(i, o)).collect();
            orbit.push(i);
            orbit.sort_unstable();
            orbit.dedup();
            for &m in &orbit {
                class_of[m] = c;
            }
            members.push(orbit);
        }
        ClassMap { class_of, members }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    fn neighbours(&self, g: &GridFn, c: usize) -> Vec<usize> {
        let mut out: Vec<usize> =
            self.members[c].iter().flat_map(|&i| g.neighbours(i)).map(|j| self.class_of[j]).filter(|&d| d != c).collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[derive(Clone, Debug)]
pub struct CompletionOptions {
    pub seed: u64,
    pub max_retries: usize,
    pub smoothing_sweeps: usize,
}

impl Default for CompletionOptions {
    fn default() -> Self {
        CompletionOptions { seed: 0x5eed, max_retries: 4, smoothing_sweeps: 4 }
    }
}

#[derive(Clone, Debug)]
pub struct CompletionResult {
    /// Appended rows, `L × pN` per node.
    pub rows: GridFn,
    pub continuity_score: f64,
    /// Distance between the frame carried once around the circle and the start (1-D only, before correction).
    pub seam_residual: Option<f64>,
    pub method: String,
    pub retries: usize,
    pub warnings: Vec<String>,
}

impl CompletionResult {
    pub fn components(&self, p: usize) -> Result<Vec<GridFn>> {
        split_components(&self.rows, p)
    }
}

const RANK_TOL: f64 = 1e-6;

fn complement_projector(r: &CMat) -> CMat {
    CMat::identity(r.ncols(), r.ncols()) - r.adjoint() * r
}

/// Pivoted Gram–Schmidt on the projected coordinate rows: deterministic and
/// returns the missing coordinate rows when the given rows are coordinate rows.
fn pivoted_seed(proj: &CMat, l: usize) -> CMat {
    let n = proj.ncols();
    let mut chosen: Vec<nalgebra::RowDVector<Complex64>> = Vec::with_capacity(l);
    let mut cand: Vec<nalgebra::RowDVector<Complex64>> = (0..n).map(|i| proj.row(i).into_owned()).collect();
    for _ in 0..l {
        let (best, _) = cand
            .iter()
            .enumerate()
            .map(|(i, v)| (i, v.norm()))
            .fold((0, -1.0), |acc, x| if x.1 > acc.1 + 1e-12 { x } else { acc });
        let v = cand[best].clone() / Complex64::new(cand[best].norm(), 0.0);
        for c in cand.iter_mut() {
            let coef = (&*c * v.adjoint())[(0, 0)];
            *c -= &v * coef;
        }
        chosen.push(v);
    }
    let mut out = CMat::zeros(l, n);
    for (i, v) in chosen.iter().enumerate() {
        out.row_mut(i).copy_from(v);
    }
    out
}

fn random_seed(proj: &CMat, l: usize, rng: &mut ChaCha8Rng) -> Option<CMat> {
    let x = CMat::from_fn(l, proj.ncols(), |_, _| {
        let (re, im): (f64, f64) = (StandardNormal.sample(rng), StandardNormal.sample(rng));
        Complex64::new(re, im)
    });
    let (c, s) = lowdin(&(x * proj))?;
    (s > RANK_TOL).then_some(c)
}

/// Carry the frame `prev` into the complement described by `proj`. When the
/// projected frame loses rank, take the polar factor of its coordinates in
/// an explicit complement basis instead, which is always unitary.
fn transport(prev: &CMat, proj: &CMat) -> Option<CMat> {
    let x = prev * proj;
    if max_abs(&(&x - prev)) < 1e-14 {
        return Some(prev.clone());
    }
    if let Some((f, s)) = lowdin(&x) {
        if s >= RANK_TOL {
            return Some(f);
        }
    }
    let basis = pivoted_seed(proj, prev.nrows());
    let (u, _) = lowdin(&(x * basis.adjoint()))?;
    Some(u * basis)
}

/// Unitary `W^{-s}` for unitary `W` via its Schur form.
fn unitary_power(w: &CMat, s: f64) -> Option<CMat> {
    let (q, t) = w.clone().schur().unpack();
    let d = CMat::from_diagonal(&t.diagonal().map(|z| Complex64::from_polar(1.0, -s * z.arg())));
    Some(&q * d * q.adjoint())
}

/// Complete the orthonormal rows `given` (`K × M` per node) by `M - K` rows
/// so the stacked matrix is unitary at every node. Rows are taken constant
/// on each class of `classes`.
pub fn complete_unitary(given: &GridFn, classes: &ClassMap, opts: &CompletionOptions) -> Result<CompletionResult> {
    let (k, m) = (given.rows, given.cols);
    if k >= m {
        return Err(Error::Completion(format!("nothing to complete: {k} rows of width {m}")));
    }
    let l = m - k;
    let mut warnings = Vec::new();
    let reps: Vec<usize> = classes.members.iter().map(|v| v[0]).collect();
    // symmetric re-orthonormalization of the given rows
    let mut projs = Vec::with_capacity(reps.len());
    for &i in &reps {
        let r = &given.values[i];
        let dev = max_abs(&(r * r.adjoint() - CMat::identity(k, k)));
        if dev > 1e-6 {
            return Err(Error::Completion(format!("given rows are not orthonormal (deviation {dev:e})")));
        }
        let r = if dev > 0.0 { lowdin(r).map(|x| x.0).unwrap_or_else(|| r.clone()) } else { r.clone() };
        projs.push(complement_projector(&r));
    }
    let dim = given.dim();
    if dim > 2 * l {
        warnings.push(format!("dimension {dim} exceeds 2(p - q)N = {}: no continuity guarantee", 2 * l));
    }

    let linear_1d = dim == 1 && (0..classes.len()).all(|m| classes.class_of[m] == m);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut retries = 0;
    loop {
        let seed = if retries == 0 { Some(pivoted_seed(&projs[0], l)) } else { random_seed(&projs[0], l, &mut rng) };
        let attempt = seed.and_then(|s| {
            if linear_1d {
                propagate_circle(&projs, s)
            } else {
                propagate_bfs(given, classes, &projs, s, opts.smoothing_sweeps).map(|c| (c, None))
            }
        });
        if let Some((frames, seam)) = attempt {
            let mut values = vec![CMat::zeros(l, m); given.len()];
            for (c, mem) in classes.members.iter().enumerate() {
                for &i in mem {
                    values[i] = frames[c].clone();
                }
            }
            let rows = GridFn { rows: l, values, ..given.clone() };
            let continuity_score = continuity(&rows);
            return Ok(CompletionResult {
                rows,
                continuity_score,
                seam_residual: seam,
                method: if linear_1d { "propagate+holonomy".into() } else { "propagate+smooth".into() },
                retries,
                warnings,
            });
        }
        retries += 1;
        if retries > opts.max_retries {
            return Err(Error::Completion("complement degenerated during propagation".into()));
        }
    }
}

fn propagate_circle(projs: &[CMat], seed: CMat) -> Option<(Vec<CMat>, Option<f64>)> {
    let r = projs.len();
    let mut frames = Vec::with_capacity(r);
    frames.push(seed);
    for c in 1..r {
        let f = transport(&frames[c - 1], &projs[c])?;
        frames.push(f);
    }
    let closing = transport(&frames[r - 1], &projs[0])?;
    // closing = W frames[0]; spread W^{-1} evenly around the circle
    let w = &closing * frames[0].adjoint();
    let seam = max_abs(&(&w - CMat::identity(w.nrows(), w.ncols())));
    if seam > 1e-14 {
        for (c, f) in frames.iter_mut().enumerate() {
            let v = unitary_power(&w, c as f64 / r as f64)?;
            *f = v * &*f;
        }
    }
    Some((frames, Some(seam)))
}

fn propagate_bfs(g: &GridFn, classes: &ClassMap, projs: &[CMat], seed: CMat, sweeps: usize) -> Option<Vec<CMat>> {
    let nc = classes.len();
    let adj: Vec<Vec<usize>> = (0..nc).map(|c| classes.neighbours(g, c)).collect();
    let mut frames: Vec<Option<CMat>> = vec![None; nc];
    let mut order = Vec::with_capacity(nc);
    frames[0] = Some(seed);
    let mut queue = VecDeque::from([0usize]);
    while let Some(c) = queue.pop_front() {
        order.push(c);
        for &d in &adj[c] {
            if frames[d].is_none() {
                frames[d] = Some(transport(frames[c].as_ref()?, &projs[d])?);
                queue.push_back(d);
            }
        }
    }
    let mut frames: Vec<CMat> = frames.into_iter().collect::<Option<Vec<_>>>()?;
    for _ in 0..sweeps {
        for &c in &order {
            let mut s = frames[c].clone();
            for &d in &adj[c] {
                s += &frames[d];
            }
            if let Some((f, smin)) = lowdin(&(s * &projs[c])) {
                if smin > RANK_TOL {
                    frames[c] = f;
                }
            }
        }
    }
    Some(frames)
}

/// Largest Frobenius jump between grid neighbours.
pub fn continuity(g: &GridFn) -> f64 {
    (0..g.len())
        .flat_map(|i| g.neighbours(i).into_iter().map(move |j| (i, j)))
        .map(|(i, j)| (&g.values[i] - &g.values[j]).norm())
        .fold(0.0, f64::max)
}

/// Low-pass polyphase rows `[M^{↑d_1} … M^{↑d_p}]` and their class map.
pub fn lowpass_rows(bank: &FilterBank) -> Result<(GridFn, ClassMap)> {
    let rows = hstack_components(&polyphase(&bank.m, &bank.data)?)?;
    let offsets = bank.data.omega.cosets.iter().map(|w| rows.offset_of(w)).collect::<Result<Vec<_>>>()?;
    let classes = ClassMap::from_offsets(&rows, &offsets);
    Ok((rows, classes))
}

/// `H(ξ) = Σ_j e^{2πi⟨d_j,ξ⟩} H^{↑d_j}(ξ)`.
pub fn assemble_highpass(bank: &FilterBank, comp: &CompletionResult) -> Result<GridFn> {
    if bank.data.p == bank.data.q {
        return Err(Error::InvalidParameter("p = q leaves no room for high-pass filters".into()));
    }
    recombine(&comp.components(bank.data.p)?, &bank.data)
}

/// Complete a bank in place and return the completion record.
pub fn complete_bank(bank: &mut FilterBank, opts: &CompletionOptions) -> Result<CompletionResult> {
    let (rows, classes) = lowpass_rows(bank)?;
    let comp = complete_unitary(&rows, &classes, opts)?;
    bank.h = Some(assemble_highpass(bank, &comp)?);
    Ok(comp)
}

/// Serializable description of a wavelet system.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WaveletSystemDesc {
    pub mra: MraSpec,
    pub highpass: HighpassDesc,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HighpassDesc {
    /// Completed polyphase rows `L × pN` sampled on the `Γ*` grid.
    Completed { rows: GridFn },
    /// `H(ξ) = H_1(q ξ_n)` from a one-dimensional system.
    Lifted { base: Box<WaveletSystemDesc>, q: u64 },
}

/// Smooth interpolant of the completed rows between grid nodes.
#[derive(Clone, Debug)]
enum Interp {
    /// Trigonometric interpolation in the `Γ*` coordinate (1-D).
    Trig { freqs: Vec<i64>, coeffs: Vec<CMat>, inv: f64 },
    /// Multilinear interpolation in `Γ*` coordinates.
    Multilinear { grid: GridFn, inv: DMatrix<f64> },
}

impl Interp {
    fn new(rows: &GridFn) -> Self {
        let inv = rows.domain.basis().inverse().expect("invertible").to_f64();
        if rows.dim() == 1 {
            let r = rows.shape[0];
            let mut planner = FftPlanner::<f64>::new();
            let fft = planner.plan_fft_forward(r);
            let mut spectra = vec![CMat::zeros(rows.rows, rows.cols); r];
            for i in 0..rows.rows {
                for j in 0..rows.cols {
                    let mut buf: Vec<Complex64> = rows.values.iter().map(|m| m[(i, j)]).collect();
                    fft.process(&mut buf);
                    for (k, v) in buf.into_iter().enumerate() {
                        spectra[k][(i, j)] = v / r as f64;
                    }
                }
            }
            let scale = spectra.iter().map(max_abs).fold(0.0, f64::max);
            let mut freqs = Vec::new();
            let mut coeffs = Vec::new();
            for (k, c) in spectra.into_iter().enumerate() {
                if max_abs(&c) <= 1e-17 * scale {
                    continue;
                }
                let k = k as i64;
                let r = r as i64;
                if 2 * k == r {
                    freqs.push(k);
                    coeffs.push(&c * Complex64::new(0.5, 0.0));
                    freqs.push(-k);
                    coeffs.push(c * Complex64::new(0.5, 0.0));
                } else {
                    freqs.push(if 2 * k > r { k - r } else { k });
                    coeffs.push(c);
                }
            }
            Interp::Trig { freqs, coeffs, inv: inv[(0, 0)] }
        } else {
            Interp::Multilinear { grid: rows.clone(), inv }
        }
    }

    fn eval(&self, xi: &[f64]) -> CMat {
        match self {
            Interp::Trig { freqs, coeffs, inv } => {
                let t = xi[0] * inv;
                let mut acc = CMat::zeros(coeffs[0].nrows(), coeffs[0].ncols());
                for (k, c) in freqs.iter().zip(coeffs) {
                    acc += c * Complex64::from_polar(1.0, 2.0 * PI * (*k as f64) * t.rem_euclid(1.0));
                }
                acc
            }
            Interp::Multilinear { grid, inv } => {
                let c = mat_vec(inv, xi);
                let n = c.len();
                let mut base = vec![0usize; n];
                let mut frac = vec![0.0; n];
                for a in 0..n {
                    let s = grid.shape[a] as f64;
                    let u = (c[a] * s).rem_euclid(s);
                    let f = u.floor();
                    base[a] = (f as usize) % grid.shape[a];
                    frac[a] = u - f;
                }
                let mut acc = CMat::zeros(grid.rows, grid.cols);
                for mask in 0..1usize << n {
                    let mut w = 1.0;
                    let mut idx = vec![0usize; n];
                    for a in 0..n {
                        let up = mask >> a & 1 == 1;
                        w *= if up { frac[a] } else { 1.0 - frac[a] };
                        idx[a] = if up { (base[a] + 1) % grid.shape[a] } else { base[a] };
                    }
                    if w != 0.0 {
                        acc += &grid.values[crate::mra::flatten(&idx, &grid.shape)] * Complex64::new(w, 0.0);
                    }
                }
                acc
            }
        }
    }
}

#[derive(Clone, Debug)]
enum HighpassEval {
    Completed { interp: Arc<Interp>, l: usize },
    Lifted { base: Box<WaveletSystem>, q: f64 },
}

/// Instantiated wavelet system: pointwise `M`, `H`, `Φ̂` and `Ψ̂`.
#[derive(Clone, Debug)]
pub struct WaveletSystem {
    desc: WaveletSystemDesc,
    low: LowpassEval,
    high: HighpassEval,
    b_inv: DMatrix<f64>,
    support: FBox,
}

impl WaveletSystem {
    pub fn from_desc(desc: WaveletSystemDesc) -> Result<Self> {
        let data = DilationData::new(&desc.mra.dilation)?;
        let low = LowpassEval::new(desc.mra.scaling_vector()?, data.clone())?;
        let l = (data.p - data.q) * low.cols();
        let high = match &desc.highpass {
            HighpassDesc::Completed { rows } => {
                if rows.rows != l || rows.cols != data.p * low.cols() {
                    return Err(Error::DimensionMismatch(format!(
                        "completion is {}x{}, need {l}x{}",
                        rows.rows,
                        rows.cols,
                        data.p * low.cols()
                    )));
                }
                HighpassEval::Completed { interp: Arc::new(Interp::new(rows)), l }
            }
            HighpassDesc::Lifted { base, q } => {
                HighpassEval::Lifted { base: Box::new(WaveletSystem::from_desc((**base).clone())?), q: *q as f64 }
            }
        };
        let support = low.scaling_vector().hull().map(&data.b_matrix());
        Ok(WaveletSystem { b_inv: data.b_inverse(), desc, low, high, support })
    }

    pub fn desc(&self) -> &WaveletSystemDesc {
        &self.desc
    }

    pub fn data(&self) -> &DilationData {
        self.low.data()
    }

    pub fn scaling_vector(&self) -> &ScalingVector {
        self.low.scaling_vector()
    }

    pub fn multiplicity(&self) -> usize {
        self.low.cols()
    }

    /// Number of wavelets `L = (p - q) N`.
    pub fn len(&self) -> usize {
        (self.data().p - self.data().q) * self.multiplicity()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.data().dim()
    }

    /// Box containing the support of every `ψ̂`.
    pub fn support(&self) -> &FBox {
        &self.support
    }

    pub fn lowpass(&self, xi: &[f64]) -> CMat {
        self.low.eval(xi)
    }

    fn lowpass_polyphase_row(&self, xi: &[f64]) -> CMat {
        let data = self.data();
        let n = self.multiplicity();
        let ws = data.omega.cosets_f64();
        let ms: Vec<(Vec<f64>, CMat)> = ws
            .iter()
            .map(|w| {
                let x: Vec<f64> = xi.iter().zip(w).map(|(a, b)| a + b).collect();
                let m = self.low.eval(&x);
                (x, m)
            })
            .collect();
        let mut row = CMat::zeros(data.q * n, data.p * n);
        for (j, d) in data.d.cosets_f64().iter().enumerate() {
            let mut acc = CMat::zeros(data.q * n, n);
            for (x, m) in &ms {
                acc += m * Complex64::from_polar(1.0, -2.0 * PI * dot(d, x));
            }
            row.columns_mut(j * n, n).copy_from(&(acc / Complex64::new(data.p as f64, 0.0)));
        }
        row
    }

    /// Completed polyphase rows `[H^{↑d_1} … H^{↑d_p}]` at `ξ`.
    pub fn highpass_polyphase(&self, xi: &[f64]) -> Result<CMat> {
        match &self.high {
            HighpassEval::Completed { interp, l } => {
                let r = self.lowpass_polyphase_row(xi);
                let proj = complement_projector(&r);
                let c = transport(&interp.eval(xi), &proj).ok_or_else(|| Error::Completion("SVD failed".into()))?;
                debug_assert_eq!(c.nrows(), *l);
                Ok(c)
            }
            HighpassEval::Lifted { .. } => {
                let h = self.highpass(xi)?;
                let data = self.data();
                let n = self.multiplicity();
                let ws = data.omega.cosets_f64();
                let hs: Vec<(Vec<f64>, CMat)> = ws
                    .iter()
                    .map(|w| {
                        let x: Vec<f64> = xi.iter().zip(w).map(|(a, b)| a + b).collect();
                        let hv = self.highpass(&x);
                        hv.map(|m| (x, m))
                    })
                    .collect::<Result<_>>()?;
                let mut row = CMat::zeros(h.nrows(), data.p * n);
                for (j, d) in data.d.cosets_f64().iter().enumerate() {
                    let mut acc = CMat::zeros(h.nrows(), n);
                    for (x, m) in &hs {
                        acc += m * Complex64::from_polar(1.0, -2.0 * PI * dot(d, x));
                    }
                    row.columns_mut(j * n, n).copy_from(&(acc / Complex64::new(data.p as f64, 0.0)));
                }
                Ok(row)
            }
        }
    }

    pub fn highpass(&self, xi: &[f64]) -> Result<CMat> {
        match &self.high {
            HighpassEval::Completed { .. } => {
                let c = self.highpass_polyphase(xi)?;
                let data = self.data();
                let n = self.multiplicity();
                let mut h = CMat::zeros(c.nrows(), n);
                for (j, d) in data.d.cosets_f64().iter().enumerate() {
                    h += c.columns(j * n, n) * Complex64::from_polar(1.0, 2.0 * PI * dot(d, xi));
                }
                Ok(h)
            }
            HighpassEval::Lifted { base, q } => base.highpass(&[q * xi[xi.len() - 1]]),
        }
    }

    pub fn phi(&self, xi: &[f64]) -> Vec<Complex64> {
        self.scaling_vector().eval(xi)
    }

    /// `Ψ̂(ξ) = b^{-1/2} H(B^{-1}ξ) Φ̂(B^{-1}ξ)`.
    pub fn psi(&self, xi: &[f64]) -> Result<Vec<Complex64>> {
        if !self.support.contains(xi, 1e-12) {
            return Ok(vec![Complex64::zero(); self.len()]);
        }
        let y = mat_vec(&self.b_inv, xi);
        let phi = self.phi(&y);
        if phi.iter().all(|z| *z == Complex64::zero()) {
            return Ok(vec![Complex64::zero(); self.len()]);
        }
        let h = self.highpass(&y)?;
        let v = h * nalgebra::DVector::from_vec(phi) / Complex64::new(self.data().b.sqrt(), 0.0);
        Ok(v.iter().copied().collect())
    }
}

/// Everything produced by a bank build.
#[derive(Clone, Debug)]
pub struct BuiltBank {
    pub spec: MraSpec,
    pub bank: FilterBank,
    pub lowpass_residual: f64,
    pub polyphase: PolyphaseReport,
    pub smith_barnwell: f64,
    pub completion: CompletionResult,
    pub unitarity: f64,
    pub system: WaveletSystem,
}

/// Low-pass extraction, polyphase checks, completion and synthesis for an MRA.
pub fn build_bank(spec: &MraSpec, shape: &[usize], opts: &CompletionOptions) -> Result<BuiltBank> {
    let data = DilationData::new(&spec.dilation)?;
    let eval = LowpassEval::new(spec.scaling_vector()?, data.clone())?;
    let lp = extract_lowpass(&eval, shape)?;
    let comps = polyphase(&lp.m, &data)?;
    let polyphase = polyphase_report(&lp.m, &comps, &data)?;
    let smith_barnwell = smith_barnwell_residual(&lp.m, &data)?;
    let mut bank = FilterBank::new(data, lp.m)?;
    let completion = complete_bank(&mut bank, opts)?;
    let unitarity = unitarity_residual(&bank)?;
    let system = synthesize_wavelets(spec, &completion)?;
    Ok(BuiltBank {
        spec: spec.clone(),
        bank,
        lowpass_residual: lp.residual,
        polyphase,
        smith_barnwell,
        completion,
        unitarity,
        system,
    })
}

pub fn synthesize_wavelets(spec: &MraSpec, comp: &CompletionResult) -> Result<WaveletSystem> {
    WaveletSystem::from_desc(WaveletSystemDesc {
        mra: spec.clone(),
        highpass: HighpassDesc::Completed { rows: comp.rows.clone() },
    })
}

/// Largest `ε` allowed for the symmetric tile in the `p/q` case.
pub fn eps_bound(p: u64, q: u64) -> f64 {
    (q * (p - q)) as f64 / (2 * (p + q)) as f64
}

fn check_pq(p: u64, q: u64) -> Result<()> {
    if q < 1 || p <= q || num_integer::gcd(p, q) != 1 {
        return Err(Error::InvalidParameter(format!("need p > q >= 1 coprime, got p = {p}, q = {q}")));
    }
    Ok(())
}

/// Strictly expansive MRA for `A = p/q` with `Γ = Z/q`, `K = [-q/2, q/2]`.
pub fn mra_1d(p: u64, q: u64, eps: Option<f64>) -> Result<MraSpec> {
    check_pq(p, q)?;
    let (pi, qi) = (p as i64, q as i64);
    let a = RatMatrix::new(1, 1, vec![rat(pi, qi)])?;
    let gamma = Lattice::new(RatMatrix::new(1, 1, vec![rat(1, qi)])?)?;
    let k = BoxUnion::single(RatBox::new(vec![rat(-qi, 2)], vec![rat(qi, 2)])?);
    strictly_expansive_scaling(&a, &gamma, &k, eps.unwrap_or(0.5 * eps_bound(p, q)))
}

/// Default 1-D grid: `p · ceil(4096 / p)` nodes on the `Γ*` cell.
pub fn default_grid_1d(p: u64) -> usize {
    let p = p as usize;
    p * 4096usize.div_ceil(p)
}

pub fn pipeline_1d(p: u64, q: u64, eps: Option<f64>, grid: Option<usize>, opts: &CompletionOptions) -> Result<BuiltBank> {
    let spec = mra_1d(p, q, eps)?;
    let r = grid.unwrap_or_else(|| default_grid_1d(p));
    build_bank(&spec, &[r], opts)
}

/// `Ã` with `1/q` at (1,2), ones on the rest of the superdiagonal and `p` at (n,1).
pub fn lift_matrix(p: u64, q: u64, n: usize) -> Result<RatMatrix> {
    check_pq(p, q)?;
    if n < 2 {
        return Err(Error::InvalidParameter("lifting needs n >= 2".into()));
    }
    let mut a = RatMatrix::zeros(n, n);
    a.set(0, 1, rat(1, q as i64));
    for i in 1..n - 1 {
        a.set(i, i + 1, rint(1));
    }
    a.set(n - 1, 0, rint(p as i64));
    Ok(a)
}

#[derive(Clone, Debug)]
pub struct LiftResult {
    pub base: BuiltBank,
    pub spec: MraSpec,
    pub bank: FilterBank,
    pub gramian_residual: f64,
    pub lowpass_residual: f64,
    /// `max |M(ξ) - M_1(q ξ_n)|` over the grid.
    pub lowpass_match: f64,
    pub unitarity: f64,
    pub system: WaveletSystem,
}

/// Lift the `p/q` system to `R^n` with the companion-like dilation.
pub fn lift_to_nd(p: u64, q: u64, n: usize, per_axis: usize, opts: &CompletionOptions) -> Result<LiftResult> {
    let base = pipeline_1d(p, q, None, None, opts)?;
    let a = lift_matrix(p, q, n)?;
    let mut diag = vec![rint(1); n];
    diag[0] = rat(1, q as i64);
    let gamma = Lattice::new(RatMatrix::diag(&diag))?;
    let generators = base
        .spec
        .generators
        .iter()
        .map(|g| GeneratorDesc::Lifted { base: Box::new(g.clone()), q, n })
        .collect();
    let spec = MraSpec {
        dilation: a,
        lattice: gamma,
        generators,
        provenance: Provenance::Lifted { p, q, n, from: Box::new(base.spec.provenance.clone()) },
    };
    let data = DilationData::new(&spec.dilation)?;
    let sv = spec.scaling_vector()?;
    let shape = data.grid_shape(per_axis);
    let gramian_residual = sv.gramian_residual(per_axis);
    let eval = LowpassEval::new(sv, data.clone())?;
    let lp = extract_lowpass(&eval, &shape)?;
    let qf = q as f64;
    let lowpass_match = lp
        .m
        .nodes()
        .iter()
        .zip(&lp.m.values)
        .map(|(xi, m)| max_abs(&(m - base.system.lowpass(&[qf * xi[n - 1]]))))
        .fold(0.0, f64::max);
    let system = WaveletSystem::from_desc(WaveletSystemDesc {
        mra: spec.clone(),
        highpass: HighpassDesc::Lifted { base: Box::new(base.system.desc().clone()), q },
    })?;
    let nodes = lp.m.nodes();
    let h_values = nodes.iter().map(|xi| system.highpass(xi)).collect::<Result<Vec<_>>>()?;
    let h = GridFn { rows: system.len(), values: h_values, ..lp.m.clone() };
    let mut bank = FilterBank::new(data, lp.m)?;
    bank.h = Some(h);
    let unitarity = unitarity_residual(&bank)?;
    Ok(LiftResult {
        base,
        spec,
        bank,
        gramian_residual,
        lowpass_residual: lp.residual,
        lowpass_match,
        unitarity,
        system,
    })
}

/// Scalar `Γ*` coordinate helper for CSV export and tests.
pub fn gamma_dual_period(spec: &MraSpec) -> f64 {
    to_f64(&spec.lattice.dual().volume())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rot_rows(shape: usize, theta: impl Fn(f64) -> f64 + Sync) -> GridFn {
        let z = Lattice::integer(1);
        GridFn::from_fn(z.clone(), z, vec![shape], 1, 2, |x| {
            let t = theta(x[0]);
            CMat::from_row_slice(1, 2, &[Complex64::new(t.cos(), 0.0), Complex64::new(t.sin(), 0.0)])
        })
        .unwrap()
    }

    #[test]
    fn permutation_rows_complete_to_the_rest() {
        let z = Lattice::integer(1);
        let g = GridFn::from_fn(z.clone(), z, vec![16], 2, 4, |_| {
            let mut m = CMat::zeros(2, 4);
            m[(0, 2)] = Complex64::new(1.0, 0.0);
            m[(1, 0)] = Complex64::new(1.0, 0.0);
            m
        })
        .unwrap();
        let c = complete_unitary(&g, &ClassMap::trivial(16), &CompletionOptions::default()).unwrap();
        assert_eq!(c.continuity_score, 0.0);
        let v = &c.rows.values[5];
        let ones: Vec<(usize, usize)> =
            (0..2).flat_map(|i| (0..4).map(move |j| (i, j))).filter(|&(i, j)| v[(i, j)].norm() > 0.5).collect();
        assert_eq!(ones.iter().map(|x| x.1).collect::<Vec<_>>(), vec![1, 3]);
    }

    #[test]
    fn rotation_rows_complete_to_orthogonal_rotation() {
        let g = rot_rows(256, |x| 0.7 * (2.0 * PI * x).sin());
        let c = complete_unitary(&g, &ClassMap::trivial(256), &CompletionOptions::default()).unwrap();
        for (i, v) in c.rows.values.iter().enumerate() {
            let t = 0.7 * (2.0 * PI * (i as f64 / 256.0)).sin();
            let overlap = v[(0, 0)] * (-t.sin()) + v[(0, 1)] * t.cos();
            assert!((overlap.norm() - 1.0).abs() < 1e-12);
        }
        assert!(c.continuity_score < 0.05);
    }

    #[test]
    fn winding_rows_close_up() {
        // θ winds once: the frame picks up a sign around the circle
        let g = rot_rows(512, |x| PI * x);
        let c = complete_unitary(&g, &ClassMap::trivial(512), &CompletionOptions::default()).unwrap();
        assert!(c.seam_residual.unwrap() > 1.0);
        assert!(c.continuity_score < 0.05, "{}", c.continuity_score);
        for (r, v) in g.values.iter().zip(&c.rows.values) {
            let mut t = CMat::zeros(2, 2);
            t.rows_mut(0, 1).copy_from(r);
            t.rows_mut(1, 1).copy_from(v);
            assert!(max_abs(&(&t * t.adjoint() - CMat::identity(2, 2))) < 1e-12);
        }
    }

    #[test]
    fn three_halves_bank() {
        let built = pipeline_1d(3, 2, None, Some(258), &CompletionOptions::default()).unwrap();
        assert_eq!(built.system.len(), 1);
        assert!(built.unitarity < 1e-9, "{:e}", built.unitarity);
        let psi0 = built.system.psi(&[0.0]).unwrap();
        assert!(psi0[0].norm() < 1e-9);
        // polyphase of H returns the completed rows
        let h = built.bank.h.as_ref().unwrap();
        let back = hstack_components(&polyphase(h, &built.bank.data).unwrap()).unwrap();
        assert!(back.max_abs_diff(&built.completion.rows) < 1e-12);
        // pointwise high-pass agrees with the grid at the nodes
        for i in [0, 17, 100, 257] {
            let xi = h.node(i);
            assert!(max_abs(&(built.system.highpass(&xi).unwrap() - &h.values[i])) < 1e-9);
        }
    }

    #[test]
    fn continuity_improves_with_refinement() {
        let scores: Vec<f64> = [129, 258, 516]
            .iter()
            .map(|&r| pipeline_1d(3, 2, None, Some(r), &CompletionOptions::default()).unwrap().completion.continuity_score)
            .collect();
        assert!(scores[1] < scores[0] && scores[2] < scores[1], "{scores:?}");
    }

    #[test]
    fn descriptor_round_trip() {
        let built = pipeline_1d(2, 1, None, Some(64), &CompletionOptions::default()).unwrap();
        let s = serde_json::to_string(built.system.desc()).unwrap();
        let back = WaveletSystem::from_desc(serde_json::from_str(&s).unwrap()).unwrap();
        for x in [0.3, 0.77, 1.4] {
            assert_eq!(back.psi(&[x]).unwrap(), built.system.psi(&[x]).unwrap());
        }
    }

    #[test]
    fn lift_matrix_shape() {
        let a = lift_matrix(3, 2, 2).unwrap();
        assert_eq!(a, RatMatrix::from_strs(2, 2, &["0", "1/2", "3", "0"]).unwrap());
        let a3 = lift_matrix(3, 2, 3).unwrap();
        assert_eq!(a3.get(1, 2), &rint(1));
        assert_eq!(a3.get(2, 0), &rint(3));
    }
}
