//! Exact rational matrices and lattice arithmetic.
//!
//! Everything here is computed over `BigRational`/`BigInt`; floats only
//! show up in the expansiveness test and in `cayley_rationalize`, which
//! takes a float matrix as input.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type Rational = BigRational;

pub fn rat(num: i64, den: i64) -> Rational {
    BigRational::new(num.into(), den.into())
}

pub fn rint(n: i64) -> Rational {
    BigRational::from_integer(n.into())
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

pub fn format_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::Parse(format!("not a rational: {s:?}"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().map_err(|_| bad())?;
            let d: BigInt = d.trim().parse().map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            Ok(BigRational::new(n, d))
        }
        None => Ok(BigRational::from_integer(s.parse().map_err(|_| bad())?)),
    }
}

/// Best rational approximation of `x` with denominator at most `max_den`
/// (continued fraction convergents and the last semiconvergent).
pub fn approx_rational(x: f64, max_den: u64) -> Rational {
    if !x.is_finite() {
        return Rational::zero();
    }
    let max_den = max_den.max(1) as i128;
    let (mut h0, mut h1): (i128, i128) = (0, 1);
    let (mut k0, mut k1): (i128, i128) = (1, 0);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        if a.abs() > 1e18 {
            break;
        }
        let ai = a as i128;
        let k2 = ai * k1 + k0;
        if k2 > max_den {
            // semiconvergent with the largest admissible coefficient
            let t = (max_den - k0) / k1.max(1);
            let (hs, ks) = (t * h1 + h0, t * k1 + k0);
            if ks > 0 && t > 0 {
                let cand = hs as f64 / ks as f64;
                let conv = h1 as f64 / k1 as f64;
                if (cand - x).abs() < (conv - x).abs() {
                    return BigRational::new(hs.into(), ks.into());
                }
            }
            break;
        }
        let h2 = ai * h1 + h0;
        h0 = h1;
        h1 = h2;
        k0 = k1;
        k1 = k2;
        let frac = r - a;
        if frac.abs() < 1e-300 {
            break;
        }
        r = 1.0 / frac;
        if !r.is_finite() {
            break;
        }
    }
    if k1 == 0 {
        return BigRational::from_integer(BigInt::from(x.round() as i128));
    }
    BigRational::new(h1.into(), k1.into())
}

fn lcm_denominators<'a>(it: impl Iterator<Item = &'a Rational>) -> BigInt {
    it.fold(BigInt::one(), |acc, r| acc.lcm(r.denom()))
}

/// Dense integer matrix, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntMatrix {
    rows: usize,
    cols: usize,
    data: Vec<BigInt>,
}

impl IntMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        IntMatrix { rows, cols, data: vec![BigInt::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = BigInt::one();
        }
        m
    }

    pub fn from_i64(rows: usize, cols: usize, vals: &[i64]) -> Self {
        assert_eq!(vals.len(), rows * cols);
        IntMatrix { rows, cols, data: vals.iter().map(|&v| BigInt::from(v)).collect() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &BigInt {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: BigInt) {
        self.data[i * self.cols + j] = v;
    }

    pub fn to_rat(&self) -> RatMatrix {
        RatMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().cloned().map(BigRational::from_integer).collect(),
        }
    }

    pub fn mul(&self, o: &IntMatrix) -> IntMatrix {
        assert_eq!(self.cols, o.rows);
        let mut out = IntMatrix::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..o.cols {
                    let v = &out.data[i * o.cols + j] + a * o.get(k, j);
                    out.data[i * o.cols + j] = v;
                }
            }
        }
        out
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        for i in 0..self.rows {
            self.data.swap(i * self.cols + a, i * self.cols + b);
        }
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    fn negate_col(&mut self, c: usize) {
        for i in 0..self.rows {
            let v = -self.get(i, c).clone();
            self.set(i, c, v);
        }
    }

    fn negate_row(&mut self, r: usize) {
        for j in 0..self.cols {
            let v = -self.get(r, j).clone();
            self.set(r, j, v);
        }
    }

    /// col_dst += f * col_src
    fn axpy_col(&mut self, dst: usize, f: &BigInt, src: usize) {
        if f.is_zero() {
            return;
        }
        for i in 0..self.rows {
            let v = self.get(i, dst) + f * self.get(i, src);
            self.set(i, dst, v);
        }
    }

    /// (col_a, col_b) <- (x col_a + y col_b, u col_a + v col_b)
    fn combine_cols(&mut self, a: usize, b: usize, x: &BigInt, y: &BigInt, u: &BigInt, v: &BigInt) {
        for i in 0..self.rows {
            let ca = self.get(i, a).clone();
            let cb = self.get(i, b).clone();
            self.set(i, a, x * &ca + y * &cb);
            self.set(i, b, u * &ca + v * &cb);
        }
    }

    fn combine_rows(&mut self, a: usize, b: usize, x: &BigInt, y: &BigInt, u: &BigInt, v: &BigInt) {
        for j in 0..self.cols {
            let ra = self.get(a, j).clone();
            let rb = self.get(b, j).clone();
            self.set(a, j, x * &ra + y * &rb);
            self.set(b, j, u * &ra + v * &rb);
        }
    }
}

/// Column Hermite normal form.
///
/// For an `n x m` integer matrix of full row rank returns `(H, U)` with
/// `U` unimodular (`m x m`) and `M U = [H | 0]`, where `H` is `n x n` lower
/// triangular, has a positive diagonal and satisfies `0 <= H[i][j] < H[i][i]`
/// for `j < i`.
pub fn hnf(m: &IntMatrix) -> Result<(IntMatrix, IntMatrix)> {
    let (n, cols) = (m.rows, m.cols);
    if cols < n || n == 0 {
        return Err(Error::DegenerateLattice);
    }
    let mut h = m.clone();
    let mut u = IntMatrix::identity(cols);
    for i in 0..n {
        // move a nonzero entry of row i into column i
        if h.get(i, i).is_zero() {
            if let Some(j) = (i + 1..cols).find(|&j| !h.get(i, j).is_zero()) {
                h.swap_cols(i, j);
                u.swap_cols(i, j);
            } else {
                return Err(Error::DegenerateLattice);
            }
        }
        for j in i + 1..cols {
            if h.get(i, j).is_zero() {
                continue;
            }
            let a = h.get(i, i).clone();
            let b = h.get(i, j).clone();
            let eg = a.extended_gcd(&b);
            let g = eg.gcd;
            let (x, y) = (eg.x, eg.y);
            let u2 = -(&b / &g);
            let v2 = &a / &g;
            h.combine_cols(i, j, &x, &y, &u2, &v2);
            u.combine_cols(i, j, &x, &y, &u2, &v2);
        }
        if h.get(i, i).is_negative() {
            h.negate_col(i);
            u.negate_col(i);
        }
        let d = h.get(i, i).clone();
        for j in 0..i {
            let f = -h.get(i, j).div_floor(&d);
            h.axpy_col(j, &f, i);
            u.axpy_col(j, &f, i);
        }
    }
    let mut hs = IntMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            hs.set(i, j, h.get(i, j).clone());
        }
    }
    Ok((hs, u))
}

/// Diagonalization `L C R = diag(d)` of a nonsingular square integer matrix
/// with unimodular `L`, `R`.  The divisibility chain is not enforced; coset
/// enumeration only needs a diagonal form.
pub fn snf(c: &IntMatrix) -> Result<(IntMatrix, Vec<BigInt>, IntMatrix)> {
    let n = c.rows;
    if c.cols != n {
        return Err(Error::DimensionMismatch("snf needs a square matrix".into()));
    }
    let mut a = c.clone();
    let mut l = IntMatrix::identity(n);
    let mut r = IntMatrix::identity(n);
    for t in 0..n {
        loop {
            // smallest nonzero pivot in the trailing block
            let mut best: Option<(usize, usize)> = None;
            for i in t..n {
                for j in t..n {
                    let v = a.get(i, j);
                    if !v.is_zero() && best.map_or(true, |(bi, bj)| v.abs() < a.get(bi, bj).abs()) {
                        best = Some((i, j));
                    }
                }
            }
            let (bi, bj) = best.ok_or(Error::DegenerateLattice)?;
            a.swap_rows(t, bi);
            l.swap_rows(t, bi);
            a.swap_cols(t, bj);
            r.swap_cols(t, bj);
            let mut clean = true;
            for i in t + 1..n {
                if a.get(i, t).is_zero() {
                    continue;
                }
                let (x, y, u2, v2) = bezout(a.get(t, t), a.get(i, t));
                a.combine_rows(t, i, &x, &y, &u2, &v2);
                l.combine_rows(t, i, &x, &y, &u2, &v2);
                clean = false;
            }
            for j in t + 1..n {
                if a.get(t, j).is_zero() {
                    continue;
                }
                let (x, y, u2, v2) = bezout(a.get(t, t), a.get(t, j));
                a.combine_cols(t, j, &x, &y, &u2, &v2);
                r.combine_cols(t, j, &x, &y, &u2, &v2);
                clean = false;
            }
            let row_done = (t + 1..n).all(|i| a.get(i, t).is_zero());
            let col_done = (t + 1..n).all(|j| a.get(t, j).is_zero());
            if clean || (row_done && col_done) {
                break;
            }
        }
        if a.get(t, t).is_negative() {
            a.negate_row(t);
            l.negate_row(t);
        }
    }
    let d = (0..n).map(|i| a.get(i, i).clone()).collect();
    Ok((l, d, r))
}

/// Unimodular 2x2 combination `(x, y; u, v)` sending `(a, b)` to `(gcd, 0)`.
fn bezout(a: &BigInt, b: &BigInt) -> (BigInt, BigInt, BigInt, BigInt) {
    // elementary step when a | b, so already cleared entries stay zero
    if !a.is_zero() && (b % a).is_zero() {
        return (BigInt::one(), BigInt::zero(), -(b / a), BigInt::one());
    }
    let eg = a.extended_gcd(b);
    let g = eg.gcd;
    (eg.x, eg.y, -(b / &g), a / &g)
}

/// Exact rational matrix, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RatMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Rational>,
}

impl RatMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Rational>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(RatMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        RatMatrix { rows, cols, data: vec![Rational::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::scalar(n, Rational::one())
    }

    pub fn scalar(n: usize, s: Rational) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = s.clone();
        }
        m
    }

    pub fn diag(d: &[Rational]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in d.iter().enumerate() {
            m.data[i * n + i] = v.clone();
        }
        m
    }

    pub fn from_i64(rows: usize, cols: usize, vals: &[i64]) -> Self {
        assert_eq!(vals.len(), rows * cols);
        RatMatrix { rows, cols, data: vals.iter().map(|&v| rint(v)).collect() }
    }

    /// Parse entries given as "num/den" strings, row-major.
    pub fn from_strs(rows: usize, cols: usize, vals: &[&str]) -> Result<Self> {
        let data = vals.iter().map(|s| parse_rational(s)).collect::<Result<Vec<_>>>()?;
        Self::new(rows, cols, data)
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> Rational) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        RatMatrix { rows, cols, data }
    }

    pub fn from_columns(cols: &[Vec<Rational>]) -> Result<Self> {
        let c = cols.len();
        let r = cols.first().map_or(0, |v| v.len());
        if cols.iter().any(|v| v.len() != r) {
            return Err(Error::DimensionMismatch("ragged columns".into()));
        }
        Self::new(r, c, (0..r * c).map(|k| cols[k % c][k / c].clone()).collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[Rational] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> &Rational {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Rational) {
        self.data[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<Rational> {
        (0..self.rows).map(|i| self.get(i, j).clone()).collect()
    }

    pub fn transpose(&self) -> RatMatrix {
        RatMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i).clone())
    }

    pub fn scale(&self, s: &Rational) -> RatMatrix {
        RatMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn mul_vec(&self, v: &[Rational]) -> Vec<Rational> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| (0..self.cols).fold(Rational::zero(), |acc, j| acc + self.get(i, j) * &v[j]))
            .collect()
    }

    pub fn hcat(&self, o: &RatMatrix) -> RatMatrix {
        assert_eq!(self.rows, o.rows);
        RatMatrix::from_fn(self.rows, self.cols + o.cols, |i, j| {
            if j < self.cols {
                self.get(i, j).clone()
            } else {
                o.get(i, j - self.cols).clone()
            }
        })
    }

    pub fn is_integer(&self) -> bool {
        self.data.iter().all(|v| v.is_integer())
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.rows).all(|i| (0..self.cols).all(|j| i == j || self.get(i, j).is_zero()))
    }

    /// Least common multiple of all denominators.
    pub fn common_denominator(&self) -> BigInt {
        lcm_denominators(self.data.iter())
    }

    /// Integer matrix `self * d`; panics unless `d` clears all denominators.
    pub fn scaled_to_int(&self, d: &BigInt) -> IntMatrix {
        let dr = BigRational::from_integer(d.clone());
        IntMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|v| {
                    let w = v * &dr;
                    assert!(w.is_integer(), "denominator not cleared");
                    w.to_integer()
                })
                .collect(),
        }
    }

    pub fn to_int(&self) -> Option<IntMatrix> {
        self.is_integer().then(|| self.scaled_to_int(&BigInt::one()))
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data.iter().map(to_f64).collect::<Vec<_>>())
    }

    /// Determinant by fraction-exact Gaussian elimination.
    pub fn det(&self) -> Rational {
        assert!(self.is_square());
        let n = self.rows;
        let mut a = self.data.clone();
        let mut det = Rational::one();
        for c in 0..n {
            let Some(p) = (c..n).find(|&r| !a[r * n + c].is_zero()) else {
                return Rational::zero();
            };
            if p != c {
                for j in 0..n {
                    a.swap(p * n + j, c * n + j);
                }
                det = -det;
            }
            let piv = a[c * n + c].clone();
            det *= &piv;
            for r in c + 1..n {
                if a[r * n + c].is_zero() {
                    continue;
                }
                let f = &a[r * n + c] / &piv;
                for j in c..n {
                    let v = &a[r * n + j] - &f * &a[c * n + j];
                    a[r * n + j] = v;
                }
            }
        }
        det
    }

    /// Exact inverse, `None` when singular.
    pub fn inverse(&self) -> Option<RatMatrix> {
        assert!(self.is_square());
        let n = self.rows;
        let w = 2 * n;
        let mut a: Vec<Rational> = Vec::with_capacity(n * w);
        for i in 0..n {
            for j in 0..n {
                a.push(self.get(i, j).clone());
            }
            for j in 0..n {
                a.push(if i == j { Rational::one() } else { Rational::zero() });
            }
        }
        for c in 0..n {
            let p = (c..n).find(|&r| !a[r * w + c].is_zero())?;
            if p != c {
                for j in 0..w {
                    a.swap(p * w + j, c * w + j);
                }
            }
            let piv = a[c * w + c].clone();
            for j in 0..w {
                let v = &a[c * w + j] / &piv;
                a[c * w + j] = v;
            }
            for r in 0..n {
                if r == c || a[r * w + c].is_zero() {
                    continue;
                }
                let f = a[r * w + c].clone();
                for j in 0..w {
                    let v = &a[r * w + j] - &f * &a[c * w + j];
                    a[r * w + j] = v;
                }
            }
        }
        Some(RatMatrix::from_fn(n, n, |i, j| a[i * w + n + j].clone()))
    }

    pub fn is_orthogonal(&self) -> bool {
        self.is_square() && &self.transpose() * self == RatMatrix::identity(self.rows)
    }
}

impl fmt::Display for RatMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.rows {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.cols {
                if j > 0 {
                    write!(f, " ")?;
                }
                write!(f, "{}", format_rational(self.get(i, j)))?;
            }
        }
        write!(f, "]")
    }
}

impl<'a> Mul<&'a RatMatrix> for &'a RatMatrix {
    type Output = RatMatrix;
    fn mul(self, o: &RatMatrix) -> RatMatrix {
        assert_eq!(self.cols, o.rows, "matrix product shape mismatch");
        let mut out = RatMatrix::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..o.cols {
                    let v = &out.data[i * o.cols + j] + a * o.get(k, j);
                    out.data[i * o.cols + j] = v;
                }
            }
        }
        out
    }
}

impl<'a> Add<&'a RatMatrix> for &'a RatMatrix {
    type Output = RatMatrix;
    fn add(self, o: &RatMatrix) -> RatMatrix {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        RatMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&o.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl<'a> Sub<&'a RatMatrix> for &'a RatMatrix {
    type Output = RatMatrix;
    fn sub(self, o: &RatMatrix) -> RatMatrix {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        RatMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&o.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &RatMatrix {
    type Output = RatMatrix;
    fn neg(self) -> RatMatrix {
        RatMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| -v).collect() }
    }
}

impl Serialize for RatMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<String>> = (0..self.rows)
            .map(|i| (0..self.cols).map(|j| format_rational(self.get(i, j))).collect())
            .collect();
        rows.serialize(s)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Entry {
    Str(String),
    Int(i64),
}

impl<'de> Deserialize<'de> for RatMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let rows: Vec<Vec<Entry>> = Vec::deserialize(d)?;
        let r = rows.len();
        let c = rows.first().map_or(0, |v| v.len());
        if r == 0 || c == 0 || rows.iter().any(|v| v.len() != c) {
            return Err(D::Error::custom("matrix must be a non-empty rectangular array"));
        }
        let mut data = Vec::with_capacity(r * c);
        for e in rows.into_iter().flatten() {
            data.push(match e {
                Entry::Str(s) => parse_rational(&s).map_err(D::Error::custom)?,
                Entry::Int(i) => rint(i),
            });
        }
        RatMatrix::new(r, c, data).map_err(D::Error::custom)
    }
}

/// Serde helper for exact rational vectors ("num/den" strings).
pub mod ratvec_serde {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> std::result::Result<S::Ok, S::Error> {
        v.iter().map(format_rational).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Rational>, D::Error> {
        use serde::de::Error as _;
        let v: Vec<String> = Vec::deserialize(d)?;
        v.iter().map(|s| parse_rational(s).map_err(D::Error::custom)).collect()
    }
}

/// Full-rank lattice `G Z^n`, columns of `G` are the generators.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RatMatrix", into = "RatMatrix")]
pub struct Lattice {
    basis: RatMatrix,
}

impl TryFrom<RatMatrix> for Lattice {
    type Error = Error;
    fn try_from(m: RatMatrix) -> Result<Self> {
        Lattice::new(m)
    }
}

impl From<Lattice> for RatMatrix {
    fn from(l: Lattice) -> RatMatrix {
        l.basis
    }
}

impl Lattice {
    pub fn new(basis: RatMatrix) -> Result<Self> {
        if !basis.is_square() || basis.det().is_zero() {
            return Err(Error::DegenerateLattice);
        }
        Ok(Lattice { basis })
    }

    pub fn integer(n: usize) -> Self {
        Lattice { basis: RatMatrix::identity(n) }
    }

    pub fn basis(&self) -> &RatMatrix {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.rows
    }

    pub fn volume(&self) -> Rational {
        self.basis.det().abs()
    }

    pub fn dual(&self) -> Lattice {
        let inv = self.basis.inverse().expect("lattice basis is invertible");
        Lattice { basis: inv.transpose() }
    }

    /// Image `M Γ` for an invertible `M`.
    pub fn image(&self, m: &RatMatrix) -> Result<Lattice> {
        Lattice::new(m * &self.basis)
    }

    /// Coordinates of `x` in the lattice basis.
    pub fn coords(&self, x: &[Rational]) -> Vec<Rational> {
        self.basis.inverse().expect("invertible").mul_vec(x)
    }

    pub fn contains(&self, x: &[Rational]) -> bool {
        self.coords(x).iter().all(|c| c.is_integer())
    }

    pub fn is_sublattice_of(&self, sup: &Lattice) -> bool {
        (0..self.dim()).all(|j| sup.contains(&self.basis.column(j)))
    }

    /// Canonical basis: Hermite form of the denominator-cleared basis,
    /// divided back. Two bases give the same output iff they span the same
    /// lattice.
    pub fn canonical_basis(&self) -> RatMatrix {
        let d = self.basis.common_denominator();
        let (h, _) = hnf(&self.basis.scaled_to_int(&d)).expect("full rank");
        h.to_rat().scale(&BigRational::new(BigInt::one(), d))
    }

    /// Reduce `x` into the half-open fundamental parallelepiped of this lattice.
    pub fn reduce(&self, x: &[Rational]) -> Vec<Rational> {
        let c: Vec<Rational> = self.coords(x).iter().map(|v| v - v.floor()).collect();
        self.basis.mul_vec(&c)
    }
}

impl PartialEq for Lattice {
    fn eq(&self, o: &Lattice) -> bool {
        self.dim() == o.dim() && self.canonical_basis() == o.canonical_basis()
    }
}

impl Eq for Lattice {}

/// `A L1 + L2`, computed from the Hermite form of the concatenated,
/// denominator-cleared generators.
pub fn lattice_sum(a: &RatMatrix, l1: &Lattice, l2: &Lattice) -> Result<Lattice> {
    if l1.dim() != l2.dim() || a.rows() != l1.dim() || !a.is_square() {
        return Err(Error::DimensionMismatch("lattice_sum operands".into()));
    }
    let gens = (a * l1.basis()).hcat(l2.basis());
    let d = gens.common_denominator();
    let (h, _) = hnf(&gens.scaled_to_int(&d))?;
    Lattice::new(h.to_rat().scale(&BigRational::new(BigInt::one(), d)))
}

pub fn dual(l: &Lattice) -> Lattice {
    l.dual()
}

/// Representatives of `sup / sub`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Transversal {
    #[serde(with = "cosets_serde")]
    pub cosets: Vec<Vec<Rational>>,
    pub sub: Lattice,
    pub sup: Lattice,
}

mod cosets_serde {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Vec<Rational>], s: S) -> std::result::Result<S::Ok, S::Error> {
        v.iter()
            .map(|c| c.iter().map(format_rational).collect::<Vec<_>>())
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Vec<Rational>>, D::Error> {
        use serde::de::Error as _;
        let v: Vec<Vec<String>> = Vec::deserialize(d)?;
        v.iter()
            .map(|c| c.iter().map(|s| parse_rational(s).map_err(D::Error::custom)).collect())
            .collect()
    }
}

impl Transversal {
    pub fn len(&self) -> usize {
        self.cosets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cosets.is_empty()
    }

    pub fn cosets_f64(&self) -> Vec<Vec<f64>> {
        self.cosets.iter().map(|c| c.iter().map(to_f64).collect()).collect()
    }
}

fn cmp_vec(a: &[Rational], b: &[Rational]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| x.cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

/// Coset representatives of `sup / sub`, canonicalized into the half-open
/// fundamental cell of `sub` and sorted.
pub fn transversal(sub: &Lattice, sup: &Lattice) -> Result<Transversal> {
    if sub.dim() != sup.dim() {
        return Err(Error::DimensionMismatch("transversal operands".into()));
    }
    let sup_inv = sup.basis().inverse().expect("invertible");
    let c = &sup_inv * sub.basis();
    let c = c.to_int().ok_or(Error::NotSublattice)?;
    let (l, d, _) = snf(&c)?;
    let l_inv = l.to_rat().inverse().expect("unimodular");
    let t = sup.basis() * &l_inv;
    let n = sub.dim();
    let dims: Vec<u64> = d.iter().map(|v| v.to_u64().expect("index fits in u64")).collect();
    let count: u64 = dims.iter().product();
    let mut cosets = Vec::with_capacity(count as usize);
    let mut y = vec![0u64; n];
    for _ in 0..count {
        let yr: Vec<Rational> = y.iter().map(|&v| rint(v as i64)).collect();
        cosets.push(sub.reduce(&t.mul_vec(&yr)));
        for (k, yk) in y.iter_mut().enumerate() {
            *yk += 1;
            if *yk < dims[k] {
                break;
            }
            *yk = 0;
        }
    }
    cosets.sort_by(|a, b| cmp_vec(a, b));
    Ok(Transversal { cosets, sub: sub.clone(), sup: sup.clone() })
}

/// The lattices attached to a rational dilation: `Γ = A Z^n + Z^n` and `Λ = A Z^n`.
pub fn dilation_lattices(a: &RatMatrix) -> Result<(Lattice, Lattice)> {
    let n = a.rows();
    let zn = Lattice::integer(n);
    let gamma = lattice_sum(a, &zn, &zn)?;
    let lambda = Lattice::new(a.clone())?;
    Ok((gamma, lambda))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupIndices {
    pub p: u64,
    pub q: u64,
    /// Smallest multiplicity `N` with `n <= 2 (p - q) N`.
    pub n_min: u64,
}

pub const TOL_EIG: f64 = 1e-9;

pub fn min_eigen_modulus(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(f64::INFINITY, f64::min)
}

pub fn check_expansive(a: &DMatrix<f64>) -> Result<()> {
    let m = min_eigen_modulus(a);
    if m > 1.0 + TOL_EIG {
        Ok(())
    } else {
        Err(Error::NotExpansive(m))
    }
}

/// `p = |Γ/AZ^n|`, `q = |Γ/Z^n|` for `Γ = AZ^n + Z^n`.
pub fn group_indices(a: &RatMatrix) -> Result<GroupIndices> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch("dilation must be square".into()));
    }
    check_expansive(&a.to_f64())?;
    let (gamma, lambda) = dilation_lattices(a)?;
    let vg = gamma.volume();
    let p = (lambda.volume() / &vg).to_integer().to_u64().expect("index fits in u64");
    let q = (vg.recip()).to_integer().to_u64().expect("index fits in u64");
    let n = a.rows() as u64;
    let step = 2 * (p - q);
    Ok(GroupIndices { p, q, n_min: n.div_ceil(step) })
}

fn frob_dist(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm()
}

/// Rational orthogonal matrix within `tol` (Frobenius) of the orthogonal `u`.
///
/// Uses the Cayley parametrization `Q = (I+S)(I-S)^{-1}` of a skew
/// rational `S`. When `u + I` is nearly singular, `u` is first multiplied by
/// the diagonal sign matrix `D` that maximizes `|det(D u + I)|`, and the
/// result is `D Q`, which is still exactly orthogonal.
pub fn cayley_rationalize(u: &DMatrix<f64>, tol: f64) -> Result<RatMatrix> {
    let n = u.nrows();
    if u.ncols() != n || n == 0 {
        return Err(Error::DimensionMismatch("cayley_rationalize needs a square matrix".into()));
    }
    let id = DMatrix::<f64>::identity(n, n);
    let dev = (u.transpose() * u - &id).amax();
    if dev > 1e-10 {
        return Err(Error::NotOrthogonal(dev));
    }
    const MARGIN: f64 = 1e-3;
    let signs = best_signs(u);
    let dmat = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(signs.clone()));
    let v = &dmat * u;
    if (&v + &id).determinant().abs() < MARGIN {
        return Err(Error::CayleySingular);
    }
    let s = (&v + &id).lu().solve(&(&v - &id)).ok_or(Error::CayleySingular)?;
    let d_rat = RatMatrix::diag(&signs.iter().map(|&x| rint(x as i64)).collect::<Vec<_>>());
    let mut max_den: u64 = 16;
    while max_den <= 1_000_000_000_000 {
        let mut st = RatMatrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                // average the two triangles so the float skewness defect cancels
                let r = approx_rational(0.5 * (s[(i, j)] - s[(j, i)]), max_den);
                st.set(j, i, -r.clone());
                st.set(i, j, r);
            }
        }
        let id_r = RatMatrix::identity(n);
        if let Some(inv) = (&id_r - &st).inverse() {
            let q = &d_rat * &(&(&id_r + &st) * &inv);
            if frob_dist(&q.to_f64(), u) <= tol {
                return Ok(q);
            }
        }
        max_den *= 4;
    }
    Err(Error::CayleySingular)
}

fn best_signs(u: &DMatrix<f64>) -> Vec<f64> {
    let n = u.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let score = |s: &[f64]| {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(s.to_vec()));
        (d * u + &id).determinant().abs()
    };
    let mut best = vec![1.0; n];
    if score(&best) > 0.5 {
        return best;
    }
    if n <= 12 {
        let mut best_score = -1.0;
        for mask in 0u32..(1 << n) {
            let s: Vec<f64> = (0..n).map(|k| if mask >> k & 1 == 1 { -1.0 } else { 1.0 }).collect();
            let sc = score(&s);
            if sc > best_score {
                best_score = sc;
                best = s;
            }
        }
    } else {
        // greedy single flips
        let mut cur = score(&best);
        loop {
            let mut improved = false;
            for k in 0..n {
                best[k] = -best[k];
                let sc = score(&best);
                if sc > cur {
                    cur = sc;
                    improved = true;
                } else {
                    best[k] = -best[k];
                }
            }
            if !improved {
                break;
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lat(rows: usize, vals: &[&str]) -> Lattice {
        Lattice::new(RatMatrix::from_strs(rows, rows, vals).unwrap()).unwrap()
    }

    #[test]
    fn hnf_identity() {
        let (h, u) = hnf(&IntMatrix::identity(2)).unwrap();
        assert_eq!(h, IntMatrix::identity(2));
        assert_eq!(u, IntMatrix::identity(2));
    }

    #[test]
    fn hnf_gcd_row() {
        let m = IntMatrix::from_i64(1, 2, &[4, 6]);
        let (h, u) = hnf(&m).unwrap();
        assert_eq!(h, IntMatrix::from_i64(1, 1, &[2]));
        let mu = m.mul(&u);
        assert_eq!(mu, IntMatrix::from_i64(1, 2, &[2, 0]));
    }

    #[test]
    fn hnf_block_matrix_generates_z2() {
        // span of the columns (3,0),(0,3),(2,0),(0,2) is Z^2: gcd(3,2) = 1
        let m = IntMatrix::from_i64(2, 4, &[3, 0, 2, 0, 0, 3, 0, 2]);
        let (h, u) = hnf(&m).unwrap();
        assert_eq!(h, IntMatrix::identity(2));
        let mu = m.mul(&u);
        for i in 0..2 {
            for j in 0..4 {
                let expect = if i == j { 1 } else { 0 };
                assert_eq!(mu.get(i, j), &BigInt::from(expect));
            }
        }
        assert_eq!(u.to_rat().det().abs(), Rational::one());
    }

    #[test]
    fn hnf_rank_deficient() {
        let m = IntMatrix::from_i64(2, 2, &[1, 2, 2, 4]);
        assert!(matches!(hnf(&m), Err(Error::DegenerateLattice)));
    }

    #[test]
    fn sum_three_halves() {
        let a = RatMatrix::from_strs(1, 1, &["3/2"]).unwrap();
        let z = Lattice::integer(1);
        let g = lattice_sum(&a, &z, &z).unwrap();
        assert_eq!(g, lat(1, &["1/2"]));
    }

    #[test]
    fn sum_identity() {
        let z = Lattice::integer(3);
        assert_eq!(lattice_sum(&RatMatrix::identity(3), &z, &z).unwrap(), z);
    }

    #[test]
    fn sum_lift_matrix() {
        let a = RatMatrix::from_strs(2, 2, &["0", "1/2", "3", "0"]).unwrap();
        let z = Lattice::integer(2);
        let g = lattice_sum(&a, &z, &z).unwrap();
        assert_eq!(g, lat(2, &["1/2", "0", "0", "1"]));
    }

    #[test]
    fn duals() {
        assert_eq!(Lattice::integer(2).dual(), Lattice::integer(2));
        assert_eq!(lat(1, &["1/2"]).dual(), lat(1, &["2"]));
        assert_eq!(lat(2, &["1/2", "0", "0", "1"]).dual(), lat(2, &["2", "0", "0", "1"]));
    }

    #[test]
    fn transversal_three_halves() {
        let t = transversal(&lat(1, &["3/2"]), &lat(1, &["1/2"])).unwrap();
        assert_eq!(t.cosets, vec![vec![rint(0)], vec![rat(1, 2)], vec![rint(1)]]);
    }

    #[test]
    fn transversal_small_cases() {
        let t = transversal(&Lattice::integer(1), &lat(1, &["1/2"])).unwrap();
        assert_eq!(t.cosets, vec![vec![rint(0)], vec![rat(1, 2)]]);
        let g = lat(2, &["1/3", "1", "0", "2"]);
        let t = transversal(&g, &g).unwrap();
        assert_eq!(t.cosets, vec![vec![rint(0), rint(0)]]);
    }

    #[test]
    fn transversal_rejects_non_sublattice() {
        let r = transversal(&lat(1, &["1/2"]), &Lattice::integer(1));
        assert!(matches!(r, Err(Error::NotSublattice)));
    }

    #[test]
    fn indices() {
        let gi = group_indices(&RatMatrix::from_strs(1, 1, &["3/2"]).unwrap()).unwrap();
        assert_eq!(gi, GroupIndices { p: 3, q: 2, n_min: 1 });
        let gi = group_indices(&RatMatrix::from_i64(2, 2, &[2, 0, 0, 2])).unwrap();
        assert_eq!((gi.p, gi.q, gi.n_min), (4, 1, 1));
        let gi = group_indices(&RatMatrix::from_strs(2, 2, &["0", "1/2", "3", "0"]).unwrap()).unwrap();
        assert_eq!((gi.p, gi.q), (3, 2));
        assert!(matches!(
            group_indices(&RatMatrix::from_i64(2, 2, &[1, 1, 0, 1])),
            Err(Error::NotExpansive(_))
        ));
    }

    #[test]
    fn cayley_identity() {
        let q = cayley_rationalize(&DMatrix::identity(3, 3), 1e-12).unwrap();
        assert_eq!(q, RatMatrix::identity(3));
    }

    #[test]
    fn cayley_quarter_turn() {
        let (s, c) = (std::f64::consts::FRAC_PI_4.sin(), std::f64::consts::FRAC_PI_4.cos());
        let u = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let q = cayley_rationalize(&u, 1e-3).unwrap();
        assert!(q.is_orthogonal());
        assert!((q.to_f64() - u).norm() <= 1e-3);
    }

    #[test]
    fn cayley_reflection_uses_sign_flip() {
        let t: f64 = 1e-4;
        let r = DMatrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()]);
        let u = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]) * r;
        let q = cayley_rationalize(&u, 1e-6).unwrap();
        assert!(q.is_orthogonal());
        assert!((q.to_f64() - u).norm() <= 1e-6);
        let q = cayley_rationalize(&(-DMatrix::<f64>::identity(3, 3)), 1e-9).unwrap();
        assert_eq!(q, -&RatMatrix::identity(3));
    }

    #[test]
    fn approx_rational_basics() {
        assert_eq!(approx_rational(0.5, 10), rat(1, 2));
        assert_eq!(approx_rational(std::f64::consts::PI, 1000), rat(355, 113));
        assert_eq!(approx_rational(-1.25, 8), rat(-5, 4));
        assert_eq!(approx_rational(3.0, 5), rint(3));
    }

    #[test]
    fn rational_json_round_trip() {
        let m = RatMatrix::from_strs(2, 2, &["3/2", "-7/3", "0", "12345678901234567890/7"]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: RatMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);
        let ints: RatMatrix = serde_json::from_str("[[1, 2], [\"1/2\", 0]]").unwrap();
        assert_eq!(ints.get(1, 0), &rat(1, 2));
    }
}
