//! Sampled periodic matrix functions and the filter bank machinery built on
//! them: low-pass extraction, polyphase components, Smith–Barnwell and
//! unitarity residuals.

use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mra::{dot, flatten, mat_vec, unflatten, FBox, LatticeWalker, MraSpec, ScalingVector};
use crate::ratlat::{dilation_lattices, to_f64, transversal, Lattice, RatMatrix, Rational, Transversal};

pub type CMat = DMatrix<Complex64>;

/// Matrix-valued function sampled on the grid `domain · (m / shape)` of the
/// fundamental cell of `domain`, periodic under `period ⊇ domain`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFn {
    pub domain: Lattice,
    pub period: Lattice,
    pub shape: Vec<usize>,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<CMat>,
}

impl GridFn {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    /// Sample `f` at every node (in parallel, order preserved).
    pub fn from_fn<F>(domain: Lattice, period: Lattice, shape: Vec<usize>, rows: usize, cols: usize, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> CMat + Sync,
    {
        if shape.len() != domain.dim() || shape.iter().any(|&s| s == 0) {
            return Err(Error::IncompatibleGrid(format!("shape {shape:?} for a {}-D lattice", domain.dim())));
        }
        let basis = domain.basis().to_f64();
        let total: usize = shape.iter().product();
        let values: Vec<CMat> = (0..total)
            .into_par_iter()
            .map(|i| {
                let xi = node_coords(&basis, &shape, i);
                let m = f(&xi);
                debug_assert_eq!((m.nrows(), m.ncols()), (rows, cols));
                m
            })
            .collect();
        Ok(GridFn { domain, period, shape, rows, cols, values })
    }

    pub fn node(&self, i: usize) -> Vec<f64> {
        node_coords(&self.domain.basis().to_f64(), &self.shape, i)
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        let basis = self.domain.basis().to_f64();
        (0..self.len()).map(|i| node_coords(&basis, &self.shape, i)).collect()
    }

    /// Index offset realizing the shift by `w` (in `domain` coordinates times shape).
    pub fn offset_of(&self, w: &[Rational]) -> Result<Vec<usize>> {
        let c = self.domain.coords(w);
        c.iter()
            .zip(&self.shape)
            .map(|(ci, &s)| {
                let v = ci * Rational::from_integer(s.into());
                if !v.is_integer() {
                    return Err(Error::IncompatibleGrid(format!("shift is not a grid offset for shape {:?}", self.shape)));
                }
                let s = s as i64;
                Ok(v.to_integer().mod_floor(&s.into()).to_i64().unwrap_or(0) as usize)
            })
            .collect()
    }

    pub fn shifted(&self, i: usize, offset: &[usize]) -> usize {
        let mut m = unflatten(i, &self.shape);
        for ((v, o), s) in m.iter_mut().zip(offset).zip(&self.shape) {
            *v = (*v + o) % s;
        }
        flatten(&m, &self.shape)
    }

    /// Node indices adjacent to `i` (one step along each axis, wrapped).
    pub fn neighbours(&self, i: usize) -> Vec<usize> {
        let m = unflatten(i, &self.shape);
        let mut out = Vec::with_capacity(2 * m.len());
        for ax in 0..m.len() {
            let s = self.shape[ax];
            if s == 1 {
                continue;
            }
            for step in [1, s - 1] {
                let mut n = m.clone();
                n[ax] = (n[ax] + step) % s;
                out.push(flatten(&n, &self.shape));
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn max_abs_diff(&self, other: &GridFn) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| max_abs(&(a - b))).fold(0.0, f64::max)
    }

    /// Vertical concatenation `[self; other]`.
    pub fn vstack(&self, other: &GridFn) -> Result<GridFn> {
        if self.shape != other.shape || self.cols != other.cols {
            return Err(Error::IncompatibleGrid("stacked grids must share shape and column count".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| {
                let mut m = CMat::zeros(a.nrows() + b.nrows(), a.ncols());
                m.rows_mut(0, a.nrows()).copy_from(a);
                m.rows_mut(a.nrows(), b.nrows()).copy_from(b);
                m
            })
            .collect();
        Ok(GridFn { rows: self.rows + other.rows, values, ..self.clone() })
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let header = GridHeader {
            format: "ratmeyer-grid".into(),
            version: 1,
            dtype: "complex128-le".into(),
            shape: self.shape.clone(),
            rows: self.rows,
            cols: self.cols,
            domain: self.domain.basis().clone(),
            period: self.period.basis().clone(),
        };
        let h = serde_json::to_vec(&header)?;
        w.write_all(MAGIC)?;
        w.write_all(&(h.len() as u32).to_le_bytes())?;
        w.write_all(&h)?;
        let mut buf = Vec::with_capacity(self.len() * self.rows * self.cols * 16);
        for m in &self.values {
            for i in 0..self.rows {
                for j in 0..self.cols {
                    buf.extend_from_slice(&m[(i, j)].re.to_le_bytes());
                    buf.extend_from_slice(&m[(i, j)].im.to_le_bytes());
                }
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<GridFn> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let mut h = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut h)?;
        let header: GridHeader = serde_json::from_slice(&h)?;
        if header.dtype != "complex128-le" {
            return Err(Error::Format(format!("unsupported dtype {}", header.dtype)));
        }
        let total: usize = header.shape.iter().product();
        let mut payload = Vec::new();
        r.read_to_end(&mut payload)?;
        if payload.len() != total * header.rows * header.cols * 16 {
            return Err(Error::Format("payload size does not match header".into()));
        }
        let nums: Vec<f64> = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let per = header.rows * header.cols;
        let values = (0..total)
            .map(|t| {
                let block = &nums[2 * per * t..2 * per * (t + 1)];
                CMat::from_row_iterator(header.rows, header.cols, block.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])))
            })
            .collect();
        Ok(GridFn {
            domain: Lattice::new(header.domain)?,
            period: Lattice::new(header.period)?,
            shape: header.shape,
            rows: header.rows,
            cols: header.cols,
            values,
        })
    }
}

const MAGIC: &[u8; 8] = b"RMGRID\0\x01";

#[derive(Serialize, Deserialize)]
struct GridHeader {
    format: String,
    version: u32,
    dtype: String,
    shape: Vec<usize>,
    rows: usize,
    cols: usize,
    domain: RatMatrix,
    period: RatMatrix,
}

/// Lossless JSON form: values as `[re, im]` pairs, node-major then row-major.
#[derive(Serialize, Deserialize)]
struct GridJson {
    domain: Lattice,
    period: Lattice,
    shape: Vec<usize>,
    rows: usize,
    cols: usize,
    values: Vec<[f64; 2]>,
}

impl Serialize for GridFn {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let values = self
            .values
            .iter()
            .flat_map(|m| (0..self.rows).flat_map(move |i| (0..self.cols).map(move |j| [m[(i, j)].re, m[(i, j)].im])))
            .collect();
        GridJson {
            domain: self.domain.clone(),
            period: self.period.clone(),
            shape: self.shape.clone(),
            rows: self.rows,
            cols: self.cols,
            values,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GridFn {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let g = GridJson::deserialize(d)?;
        let per = g.rows * g.cols;
        let total: usize = g.shape.iter().product();
        if g.values.len() != total * per {
            return Err(serde::de::Error::custom("value count does not match shape"));
        }
        let values = g
            .values
            .chunks(per.max(1))
            .take(total)
            .map(|c| CMat::from_row_iterator(g.rows, g.cols, c.iter().map(|v| Complex64::new(v[0], v[1]))))
            .collect();
        Ok(GridFn { domain: g.domain, period: g.period, shape: g.shape, rows: g.rows, cols: g.cols, values })
    }
}

fn node_coords(basis: &DMatrix<f64>, shape: &[usize], i: usize) -> Vec<f64> {
    let m = unflatten(i, shape);
    let c: Vec<f64> = m.iter().zip(shape).map(|(&v, &s)| v as f64 / s as f64).collect();
    mat_vec(basis, &c)
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn char_phase(d: &[f64], xi: &[f64], sign: f64) -> Complex64 {
    Complex64::from_polar(1.0, sign * 2.0 * PI * dot(d, xi))
}

/// Lattices, transversals and indices attached to a dilation `A`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DilationData {
    pub a: RatMatrix,
    /// `Γ = AZ^n + Z^n`
    pub gamma: Lattice,
    /// `Λ = AZ^n`
    pub lambda: Lattice,
    pub gamma_dual: Lattice,
    pub lambda_dual: Lattice,
    /// transversal of `Γ/Λ`
    pub d: Transversal,
    /// transversal of `Λ*/Γ*`
    pub omega: Transversal,
    /// transversal of `Γ/Z^n`
    pub k: Transversal,
    pub p: usize,
    pub q: usize,
    /// `|det A|`
    pub b: f64,
}

impl DilationData {
    pub fn new(a: &RatMatrix) -> Result<Self> {
        let (gamma, lambda) = dilation_lattices(a)?;
        let gamma_dual = gamma.dual();
        let lambda_dual = lambda.dual();
        let d = transversal(&lambda, &gamma)?;
        let omega = transversal(&gamma_dual, &lambda_dual)?;
        let k = transversal(&Lattice::integer(a.rows()), &gamma)?;
        let p = d.len();
        let q = k.len();
        if p != omega.len() {
            return Err(Error::Certification("index duality failed".into()));
        }
        Ok(DilationData {
            b: to_f64(&a.det()).abs(),
            a: a.clone(),
            gamma,
            lambda,
            gamma_dual,
            lambda_dual,
            d,
            omega,
            k,
            p,
            q,
        })
    }

    pub fn dim(&self) -> usize {
        self.a.rows()
    }

    /// `B = A^T` as floats.
    pub fn b_matrix(&self) -> DMatrix<f64> {
        self.a.transpose().to_f64()
    }

    pub fn b_inverse(&self) -> DMatrix<f64> {
        self.a.transpose().inverse().expect("expansive").to_f64()
    }

    /// Per-axis multiples a grid on the `Γ*` cell must respect so that every
    /// shift by `ω ∈ Λ*` lands on a node.
    pub fn grid_multiples(&self) -> Vec<usize> {
        let n = self.dim();
        let mut mult = vec![1usize; n];
        for w in &self.omega.cosets {
            for (i, c) in self.gamma_dual.coords(w).iter().enumerate() {
                let den = c.denom().to_usize().unwrap_or(1);
                mult[i] = mult[i].lcm(&den);
            }
        }
        mult
    }

    /// Smallest compatible shape with at least `target` nodes per axis.
    pub fn grid_shape(&self, target: usize) -> Vec<usize> {
        self.grid_multiples().iter().map(|&m| m * target.div_ceil(m).max(1)).collect()
    }

    pub fn check_shape(&self, shape: &[usize]) -> Result<()> {
        if shape.len() != self.dim() {
            return Err(Error::IncompatibleGrid(format!("shape {shape:?} in dimension {}", self.dim())));
        }
        for (s, m) in shape.iter().zip(self.grid_multiples()) {
            if s % m != 0 {
                return Err(Error::IncompatibleGrid(format!("shape {shape:?} is not a multiple of {:?}", self.grid_multiples())));
            }
        }
        Ok(())
    }
}

/// Pointwise evaluator of the low-pass filter `M(ξ)` from the explicit
/// fiber inner-product formula.
#[derive(Clone, Debug)]
pub struct LowpassEval {
    sv: ScalingVector,
    data: DilationData,
    bt: DMatrix<f64>,
    kt: Vec<Vec<f64>>,
    scale: f64,
    residual_region: FBox,
}

impl LowpassEval {
    pub fn new(sv: ScalingVector, data: DilationData) -> Result<Self> {
        if *sv.lattice() != data.gamma {
            return Err(Error::InvalidParameter("the scaling vector lattice must be AZ^n + Z^n".into()));
        }
        let bt = data.b_matrix();
        let b_inv = data.b_inverse();
        let residual_region = FBox::hull(&[sv.hull().clone(), sv.hull().map(&b_inv)]);
        Ok(LowpassEval {
            scale: data.b.sqrt() / sv.volume(),
            kt: data.k.cosets_f64(),
            bt,
            sv,
            data,
            residual_region,
        })
    }

    pub fn scaling_vector(&self) -> &ScalingVector {
        &self.sv
    }

    pub fn data(&self) -> &DilationData {
        &self.data
    }

    pub fn rows(&self) -> usize {
        self.data.q * self.sv.len()
    }

    pub fn cols(&self) -> usize {
        self.sv.len()
    }

    /// `b^{1/2} Φ̃̂(y)` for `y = Bx`, rows ordered `(j, l)` with `j` the coset.
    fn refined(&self, y: &[f64]) -> DVector<Complex64> {
        let phi = self.sv.eval(y);
        let n = phi.len();
        let mut v = DVector::zeros(self.rows());
        for (j, k) in self.kt.iter().enumerate() {
            let ph = char_phase(k, y, -1.0);
            for l in 0..n {
                v[j * n + l] = phi[l] * ph;
            }
        }
        v
    }

    pub fn eval(&self, xi: &[f64]) -> CMat {
        let mut m = CMat::zeros(self.rows(), self.cols());
        for k in self.sv.fiber_shifts(xi) {
            let x: Vec<f64> = xi.iter().zip(&k).map(|(a, b)| a + b).collect();
            let phi = DVector::from_vec(self.sv.eval(&x));
            if phi.iter().all(|z| *z == Complex64::zero()) {
                continue;
            }
            let t = self.refined(&mat_vec(&self.bt, &x));
            m += t * phi.adjoint();
        }
        m * Complex64::new(self.scale, 0.0)
    }

    /// `max_k |b^{1/2} Φ̃̂(B(ξ+k)) - M(ξ) Φ̂(ξ+k)|` over the whole fiber.
    pub fn residual_with(&self, xi: &[f64], m: &CMat) -> f64 {
        let sb = self.data.b.sqrt();
        let mut r: f64 = 0.0;
        for k in self.sv.fiber_shifts_in(xi, &self.residual_region) {
            let x: Vec<f64> = xi.iter().zip(&k).map(|(a, b)| a + b).collect();
            let phi = DVector::from_vec(self.sv.eval(&x));
            let lhs = self.refined(&mat_vec(&self.bt, &x)) * Complex64::new(sb, 0.0);
            r = r.max((lhs - m * phi).iter().map(|z| z.norm()).fold(0.0, f64::max));
        }
        r
    }
}

/// Low-pass filter sampled on the `Γ*` cell, with its refinability residual.
#[derive(Clone, Debug)]
pub struct Lowpass {
    pub m: GridFn,
    pub residual: f64,
}

pub const REFINABILITY_TOL: f64 = 1e-8;

/// Sample `M` on a `Γ*` grid and certify `b^{1/2} Φ̃̂(Bξ) = M(ξ) Φ̂(ξ)`.
pub fn extract_lowpass(eval: &LowpassEval, shape: &[usize]) -> Result<Lowpass> {
    let data = eval.data();
    data.check_shape(shape)?;
    let g = data.gamma_dual.clone();
    let pairs: Vec<(CMat, f64)> = {
        let basis = g.basis().to_f64();
        let total: usize = shape.iter().product();
        (0..total)
            .into_par_iter()
            .map(|i| {
                let xi = node_coords(&basis, shape, i);
                let m = eval.eval(&xi);
                let r = eval.residual_with(&xi, &m);
                (m, r)
            })
            .collect()
    };
    let residual = pairs.iter().map(|p| p.1).fold(0.0, f64::max);
    if !(residual <= REFINABILITY_TOL) {
        return Err(Error::NotRefinable { residual });
    }
    let m = GridFn {
        domain: g.clone(),
        period: g,
        shape: shape.to_vec(),
        rows: eval.rows(),
        cols: eval.cols(),
        values: pairs.into_iter().map(|p| p.0).collect(),
    };
    Ok(Lowpass { m, residual })
}

/// Convenience: instantiate, evaluate and certify in one go.
pub fn extract_lowpass_spec(spec: &MraSpec, shape: &[usize]) -> Result<(LowpassEval, Lowpass)> {
    let data = DilationData::new(&spec.dilation)?;
    let eval = LowpassEval::new(spec.scaling_vector()?, data)?;
    let lp = extract_lowpass(&eval, shape)?;
    Ok((eval, lp))
}

fn omega_offsets(g: &GridFn, data: &DilationData) -> Result<Vec<(Vec<usize>, Vec<f64>)>> {
    data.omega.cosets.iter().map(|w| Ok((g.offset_of(w)?, w.iter().map(to_f64).collect()))).collect()
}

/// Polyphase components `M^{↑d_j}` stored on the same `Γ*` grid (they are
/// `Λ*`-periodic, recorded in `period`).
pub fn polyphase(m: &GridFn, data: &DilationData) -> Result<Vec<GridFn>> {
    let offs = omega_offsets(m, data)?;
    let ds = data.d.cosets_f64();
    let p = data.p as f64;
    let nodes = m.nodes();
    let comps: Vec<Vec<CMat>> = ds
        .iter()
        .map(|d| {
            (0..m.len())
                .into_par_iter()
                .map(|i| {
                    let xi = &nodes[i];
                    let mut acc = CMat::zeros(m.rows, m.cols);
                    for (o, w) in &offs {
                        let x: Vec<f64> = xi.iter().zip(w).map(|(a, b)| a + b).collect();
                        acc += &m.values[m.shifted(i, o)] * char_phase(d, &x, -1.0);
                    }
                    acc / Complex64::new(p, 0.0)
                })
                .collect()
        })
        .collect();
    Ok(comps
        .into_iter()
        .map(|values| GridFn { period: data.lambda_dual.clone(), values, ..m.clone() })
        .collect())
}

/// `Σ_j e^{2πi⟨d_j,ξ⟩} C_j(ξ)`.
pub fn recombine(comps: &[GridFn], data: &DilationData) -> Result<GridFn> {
    let first = comps.first().ok_or_else(|| Error::InvalidParameter("no components".into()))?;
    let ds = data.d.cosets_f64();
    let nodes = first.nodes();
    let values = (0..first.len())
        .into_par_iter()
        .map(|i| {
            let mut acc = CMat::zeros(first.rows, first.cols);
            for (c, d) in comps.iter().zip(&ds) {
                acc += &c.values[i] * char_phase(d, &nodes[i], 1.0);
            }
            acc
        })
        .collect();
    Ok(GridFn { period: data.gamma_dual.clone(), values, ..first.clone() })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolyphaseReport {
    pub reconstruction: f64,
    pub plancherel_lhs: f64,
    pub plancherel_rhs: f64,
}

impl PolyphaseReport {
    pub fn plancherel_gap(&self) -> f64 {
        (self.plancherel_lhs - self.plancherel_rhs).abs()
    }
}

/// Round trip residual and both sides of the Plancherel balance
/// `(1/p)∫_{Γ* cell}‖M‖² = Σ_j ∫_{Λ* cell}‖M^{↑d_j}‖²` by grid quadrature.
pub fn polyphase_report(m: &GridFn, comps: &[GridFn], data: &DilationData) -> Result<PolyphaseReport> {
    let back = recombine(comps, data)?;
    let vol_g = to_f64(&data.gamma_dual.volume());
    let vol_l = to_f64(&data.lambda_dual.volume());
    let nodes = m.len() as f64;
    let frob = |g: &GridFn| -> f64 { kahan(g.values.iter().map(|v| v.norm_squared())) / nodes };
    let lhs = vol_g * frob(m) / data.p as f64;
    let rhs = kahan(comps.iter().map(|c| vol_l * frob(c)));
    Ok(PolyphaseReport { reconstruction: m.max_abs_diff(&back), plancherel_lhs: lhs, plancherel_rhs: rhs })
}

pub fn kahan(it: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in it {
        let y = x - c;
        let t = s + y;
        c = (t - s) - y;
        s = t;
    }
    s
}

/// `max_ξ |Σ_i G(ξ+ω_i) G(ξ+ω_i)^* - p I|`.
pub fn smith_barnwell_residual(g: &GridFn, data: &DilationData) -> Result<f64> {
    let offs = omega_offsets(g, data)?;
    let p = Complex64::new(data.p as f64, 0.0);
    Ok((0..g.len())
        .into_par_iter()
        .map(|i| {
            let mut acc = CMat::identity(g.rows, g.rows) * -p;
            for (o, _) in &offs {
                let v = &g.values[g.shifted(i, o)];
                acc += v * v.adjoint();
            }
            max_abs(&acc)
        })
        .reduce(|| 0.0, f64::max))
}

/// `[C_1 ... C_p]` row block from polyphase components.
pub fn hstack_components(comps: &[GridFn]) -> Result<GridFn> {
    let first = comps.first().ok_or_else(|| Error::InvalidParameter("no components".into()))?;
    let c = first.cols;
    let values = (0..first.len())
        .map(|i| {
            let mut m = CMat::zeros(first.rows, c * comps.len());
            for (j, comp) in comps.iter().enumerate() {
                m.columns_mut(j * c, c).copy_from(&comp.values[i]);
            }
            m
        })
        .collect();
    Ok(GridFn { cols: c * comps.len(), values, ..first.clone() })
}

/// Split a `rows × pN` block into its `p` components of width `N`.
pub fn split_components(block: &GridFn, p: usize) -> Result<Vec<GridFn>> {
    if block.cols % p != 0 {
        return Err(Error::DimensionMismatch(format!("{} columns do not split into {p} blocks", block.cols)));
    }
    let c = block.cols / p;
    Ok((0..p)
        .map(|j| GridFn {
            cols: c,
            values: block.values.iter().map(|m| m.columns(j * c, c).into_owned()).collect(),
            ..block.clone()
        })
        .collect())
}

/// Filter bank over the sampled `Γ*` cell.
#[derive(Clone, Debug)]
pub struct FilterBank {
    pub data: DilationData,
    pub multiplicity: usize,
    pub m: GridFn,
    pub h: Option<GridFn>,
}

impl FilterBank {
    pub fn new(data: DilationData, m: GridFn) -> Result<Self> {
        if m.rows % data.q != 0 || m.rows / data.q != m.cols {
            return Err(Error::DimensionMismatch(format!("M is {}x{}, expected qN x N", m.rows, m.cols)));
        }
        Ok(FilterBank { multiplicity: m.cols, data, m, h: None })
    }

    pub fn highpass_rows(&self) -> usize {
        (self.data.p - self.data.q) * self.multiplicity
    }

    /// Stacked polyphase matrix `T(ξ)` of size `(qN + L) × pN`.
    pub fn stacked_polyphase(&self) -> Result<GridFn> {
        let h = self.h.as_ref().ok_or_else(|| Error::InvalidParameter("high-pass filter not present".into()))?;
        if h.rows != self.highpass_rows() || h.cols != self.multiplicity {
            return Err(Error::DimensionMismatch(format!(
                "H is {}x{}, need L = (p - q) N = {}",
                h.rows,
                h.cols,
                self.highpass_rows()
            )));
        }
        let top = hstack_components(&polyphase(&self.m, &self.data)?)?;
        let bottom = hstack_components(&polyphase(h, &self.data)?)?;
        top.vstack(&bottom)
    }
}

pub fn unitarity_residual_grid(t: &GridFn) -> f64 {
    t.values
        .par_iter()
        .map(|m| max_abs(&(m * m.adjoint() - CMat::identity(m.nrows(), m.nrows()))))
        .reduce(|| 0.0, f64::max)
}

/// `max_ξ |T T^* - I|` for the completed bank.
pub fn unitarity_residual(bank: &FilterBank) -> Result<f64> {
    Ok(unitarity_residual_grid(&bank.stacked_polyphase()?))
}

/// `Σ_{k∈Γ*} Φ̂(ξ+k) Φ̂(ξ+k)^*` on a grid of the `Γ*` cell.
pub fn fiber_gramian(sv: &ScalingVector, shape: &[usize]) -> Result<GridFn> {
    let g = sv.lattice().dual();
    let n = sv.len();
    GridFn::from_fn(g.clone(), g, shape.to_vec(), n, n, |xi| sv.gramian(xi))
}

/// Lattice walker for external callers that need fiber enumeration.
pub fn dual_walker(l: &Lattice) -> LatticeWalker {
    LatticeWalker::new(&l.dual())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bump::{BoxUnion, RatBox};
    use crate::mra::strictly_expansive_scaling;
    use crate::ratlat::{rat, rint};

    fn three_halves() -> MraSpec {
        let a = RatMatrix::from_strs(1, 1, &["3/2"]).unwrap();
        let gamma = Lattice::new(RatMatrix::from_strs(1, 1, &["1/2"]).unwrap()).unwrap();
        let k = BoxUnion::single(RatBox::new(vec![rint(-1)], vec![rint(1)]).unwrap());
        strictly_expansive_scaling(&a, &gamma, &k, 0.1).unwrap()
    }

    #[test]
    fn lowpass_three_halves() {
        let spec = three_halves();
        let data = DilationData::new(&spec.dilation).unwrap();
        assert_eq!((data.p, data.q), (3, 2));
        let shape = data.grid_shape(256);
        assert_eq!(shape, vec![258]);
        let (_, lp) = extract_lowpass_spec(&spec, &shape).unwrap();
        assert!(lp.residual < 1e-12, "{:e}", lp.residual);
        assert_eq!((lp.m.rows, lp.m.cols), (2, 1));
        assert!(smith_barnwell_residual(&lp.m, &data).unwrap() < 1e-10);
        let comps = polyphase(&lp.m, &data).unwrap();
        assert_eq!(comps.len(), 3);
        let rep = polyphase_report(&lp.m, &comps, &data).unwrap();
        assert!(rep.reconstruction < 1e-12 && rep.plancherel_gap() < 1e-10, "{rep:?}");
        assert!(matches!(polyphase(&GridFn { shape: vec![256], ..lp.m.clone() }, &data), Err(Error::IncompatibleGrid(_))));
    }

    #[test]
    fn dyadic_dc_entry() {
        let a = RatMatrix::from_i64(1, 1, &[2]);
        let k = BoxUnion::single(RatBox::new(vec![rat(-1, 2)], vec![rat(1, 2)]).unwrap());
        let spec = strictly_expansive_scaling(&a, &Lattice::integer(1), &k, 0.1).unwrap();
        let (_, lp) = extract_lowpass_spec(&spec, &[64]).unwrap();
        // M(0) = b^{1/2} with this normalization, i.e. m(0) = 1 for m = b^{-1/2} M
        assert!((lp.m.values[0][(0, 0)].norm() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_filter_and_constant_polyphase() {
        let data = DilationData::new(&RatMatrix::from_i64(1, 1, &[3])).unwrap();
        let g = Lattice::integer(1);
        let z = GridFn::from_fn(g.clone(), g.clone(), vec![9], 1, 1, |_| CMat::zeros(1, 1)).unwrap();
        assert!((smith_barnwell_residual(&z, &data).unwrap() - 3.0).abs() < 1e-15);
        let c = GridFn::from_fn(g.clone(), g, vec![9], 1, 1, |_| CMat::from_element(1, 1, Complex64::new(2.0, 0.0))).unwrap();
        let comps = polyphase(&c, &data).unwrap();
        let rep = polyphase_report(&c, &comps, &data).unwrap();
        assert!(rep.reconstruction < 1e-14 && rep.plancherel_gap() < 1e-12);
        // d = 0 picks up the full constant
        assert!((comps[0].values[4][(0, 0)] - Complex64::new(2.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn binary_and_json_round_trip() {
        let g = Lattice::new(RatMatrix::from_strs(2, 2, &["2", "0", "1", "1"]).unwrap()).unwrap();
        let f = GridFn::from_fn(g.clone(), g, vec![3, 4], 2, 3, |x| {
            CMat::from_fn(2, 3, |i, j| Complex64::new(x[0] * i as f64 + 0.25, x[1] - j as f64))
        })
        .unwrap();
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        assert_eq!(GridFn::read_binary(&buf[..]).unwrap(), f);
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(serde_json::from_str::<GridFn>(&s).unwrap(), f);
        assert!(GridFn::read_binary(&buf[..buf.len() - 1]).is_err());
    }

    #[test]
    fn gramian_scaling() {
        let spec = three_halves();
        let sv = spec.scaling_vector().unwrap();
        let g = fiber_gramian(&sv, &[50]).unwrap();
        assert!(g.values.iter().all(|m| (m[(0, 0)].re - 0.5).abs() < 1e-12));
    }
}
