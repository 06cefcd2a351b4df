//! Symmetric frequency supported generators `f_j` and their tensor products.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bump::Profile;
use crate::error::{Error, Result};
use crate::quad::{integrate_panels, GaussLegendre};

fn conj_if(z: Complex64, odd: bool) -> Complex64 {
    if odd {
        z.conj()
    } else {
        z
    }
}

/// `f̂_j(ξ)`.
pub fn eval_fj(j: usize, profile: &dyn Profile, xi: f64) -> Complex64 {
    if j == 0 {
        return if xi > 0.25 {
            profile.eval(xi - 0.25)
        } else if xi < -0.25 {
            profile.eval(xi + 0.25)
        } else {
            profile.eval(0.0)
        };
    }
    let c = j as f64 / 2.0 + 0.25;
    let odd = j % 2 == 1;
    let sign = if odd { -1.0 } else { 1.0 };
    conj_if(profile.eval(xi - c), odd) + conj_if(profile.eval(xi + c), odd) * sign
}

/// `ŵ_j(ξ) = Π f̂_{j_i}(ξ_i)`.
pub fn eval_tensor(js: &[usize], profile: &dyn Profile, xi: &[f64]) -> Complex64 {
    js.iter().zip(xi).map(|(&j, &x)| eval_fj(j, profile, x)).product()
}

/// Closed intervals whose union contains `supp f̂_j`.
pub fn support(j: usize, delta: f64) -> Vec<(f64, f64)> {
    if j == 0 {
        vec![(-0.5 - delta, 0.5 + delta)]
    } else {
        let (a, b) = (j as f64 / 2.0 - delta, (j + 1) as f64 / 2.0 + delta);
        vec![(-b, -a), (a, b)]
    }
}

/// Points where `f̂_j` switches between plateau, ramp and zero.
pub fn breakpoints(j: usize, delta: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let centres: Vec<f64> = if j == 0 {
        vec![-0.25, 0.25]
    } else {
        let c = j as f64 / 2.0 + 0.25;
        vec![-c, c]
    };
    for c in centres {
        for o in [0.25 + delta, 0.25 - delta] {
            out.push(c - o);
            out.push(c + o);
        }
    }
    out
}

/// Largest generator index whose support meets `[-r, r]`.
pub fn min_j_max(radius: f64, delta: f64) -> usize {
    (2.0 * (radius + delta)).floor().max(0.0) as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl SampleGrid {
    pub fn node(&self, i: usize) -> f64 {
        if self.points <= 1 {
            return self.lo;
        }
        self.lo + (self.hi - self.lo) * i as f64 / (self.points - 1) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GramianReport {
    pub delta: f64,
    pub j_max: usize,
    pub k_max: usize,
    pub points: usize,
    pub max_residual: f64,
    pub worst_xi: f64,
    pub worst_k: i64,
}

/// Max over the grid and `|k| <= k_max` of `|Σ_j f̂_j(ξ) conj f̂_j(ξ+k) - δ_{k0}|`.
///
/// `k_max` defaults to `2 j_max + 2`.
pub fn dual_gramian_residual(
    profile: &dyn Profile,
    j_max: usize,
    grid: SampleGrid,
    k_max: Option<usize>,
) -> Result<GramianReport> {
    let delta = profile.delta();
    let radius = grid.lo.abs().max(grid.hi.abs());
    let required = min_j_max(radius, delta);
    if j_max < required {
        return Err(Error::InsufficientJMax { required });
    }
    let k_max = k_max.unwrap_or(2 * j_max + 2);
    let (res, xi, k) = (0..grid.points)
        .into_par_iter()
        .map(|i| {
            let xi = grid.node(i);
            let here: Vec<Complex64> = (0..=j_max).map(|j| eval_fj(j, profile, xi)).collect();
            let mut best = (0.0f64, xi, 0i64);
            for k in -(k_max as i64)..=k_max as i64 {
                let s: Complex64 = here
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| v.norm_sqr() > 0.0)
                    .map(|(j, v)| v * eval_fj(j, profile, xi + k as f64).conj())
                    .sum();
                let r = (s - if k == 0 { 1.0 } else { 0.0 }).norm();
                if r > best.0 {
                    best = (r, xi, k);
                }
            }
            best
        })
        .reduce(|| (0.0, f64::NAN, 0), |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
    Ok(GramianReport {
        delta,
        j_max,
        k_max,
        points: grid.points,
        max_residual: res,
        worst_xi: xi,
        worst_k: k,
    })
}

/// Panel width for the generator integrals.
fn panel_width(delta: f64) -> f64 {
    (delta / 2.0).min(0.125)
}

/// `∫ f̂_j(ξ) conj f̂_{j'}(ξ) e^{-2πi m ξ} dξ`, i.e. `⟨T_k f_j, T_{k'} f_{j'}⟩`
/// with `m = k - k'`.
pub fn inner_1d(profile: &dyn Profile, j: usize, jp: usize, m: i64) -> Complex64 {
    let d = profile.delta();
    let mut total = Complex64::new(0.0, 0.0);
    let gl = GaussLegendre::standard();
    let mut bps = breakpoints(j, d);
    bps.extend(breakpoints(jp, d));
    for (a0, b0) in support(j, d) {
        for (a1, b1) in support(jp, d) {
            let (a, b) = (a0.max(a1), b0.min(b1));
            if b <= a {
                continue;
            }
            total += integrate_panels(gl, a, b, &bps, panel_width(d), |x| {
                eval_fj(j, profile, x)
                    * eval_fj(jp, profile, x).conj()
                    * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * m as f64 * x)
            });
        }
    }
    total
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SfsOrthoReport {
    pub dim: usize,
    pub pairs_tested: usize,
    pub max_diag_dev: f64,
    pub max_offdiag: f64,
}

impl SfsOrthoReport {
    pub fn max_deviation(&self) -> f64 {
        self.max_diag_dev.max(self.max_offdiag)
    }
}

/// Inner products `⟨T_k w_j, T_{k'} w_{j'}⟩` for `trials` random pairs
/// with `j_i <= j_max`, `|k_i| <= k_max`; about a third of the pairs are
/// identical so the diagonal is exercised.
pub fn orthonormality_check_sfs(
    profile: &dyn Profile,
    j_max: usize,
    n: usize,
    trials: usize,
    k_max: i64,
    seed: u64,
) -> SfsOrthoReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(trials);
    for t in 0..trials {
        let js: Vec<usize> = (0..n).map(|_| rng.gen_range(0..=j_max)).collect();
        let ks: Vec<i64> = (0..n).map(|_| rng.gen_range(-k_max..=k_max)).collect();
        let (jp, kp) = if t % 3 == 0 {
            (js.clone(), ks.clone())
        } else {
            // bias towards neighbouring indices, where supports overlap
            let jp: Vec<usize> = js
                .iter()
                .map(|&j| {
                    if rng.gen_bool(0.7) {
                        (j as i64 + rng.gen_range(-1..=1)).clamp(0, j_max as i64) as usize
                    } else {
                        rng.gen_range(0..=j_max)
                    }
                })
                .collect();
            let kp: Vec<i64> = (0..n).map(|_| rng.gen_range(-k_max..=k_max)).collect();
            (jp, kp)
        };
        pairs.push((js, ks, jp, kp));
    }
    let results: Vec<(bool, f64)> = pairs
        .par_iter()
        .map(|(js, ks, jp, kp)| {
            let v: Complex64 = (0..n).map(|i| inner_1d(profile, js[i], jp[i], ks[i] - kp[i])).product();
            let same = js == jp && ks == kp;
            let dev = (v - if same { 1.0 } else { 0.0 }).norm();
            (same, dev)
        })
        .collect();
    let mut rep = SfsOrthoReport { dim: n, pairs_tested: trials, max_diag_dev: 0.0, max_offdiag: 0.0 };
    for (same, dev) in results {
        if same {
            rep.max_diag_dev = rep.max_diag_dev.max(dev);
        } else {
            rep.max_offdiag = rep.max_offdiag.max(dev);
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bump::{make_profile, PhasedProfile};
    use approx::assert_abs_diff_eq;

    #[test]
    fn point_values() {
        let p = make_profile(0.1).unwrap();
        assert_eq!(eval_fj(0, &p, 0.0), Complex64::new(1.0, 0.0));
        assert_eq!(eval_fj(1, &p, 0.75), Complex64::new(1.0, 0.0));
        assert_eq!(eval_fj(2, &p, -1.25), Complex64::new(1.0, 0.0));
        assert_eq!(eval_fj(1, &p, -0.75), Complex64::new(-1.0, 0.0));
        assert_eq!(eval_tensor(&[0, 0], &p, &[0.0, 0.0]), Complex64::new(1.0, 0.0));
        assert_eq!(eval_tensor(&[1, 0], &p, &[0.75, 0.0]), Complex64::new(1.0, 0.0));
        assert_eq!(eval_tensor(&[3, 1], &p, &[0.2, 0.75]), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn support_containment() {
        for delta in [0.05, 0.125, 0.25] {
            let p = make_profile(delta).unwrap();
            for j in 0..=12 {
                let sup = support(j, delta);
                for i in 0..4000 {
                    let x = -8.0 + 16.0 * i as f64 / 4000.0;
                    if !sup.iter().any(|&(a, b)| a <= x && x <= b) {
                        assert_eq!(eval_fj(j, &p, x).norm(), 0.0, "j {j} x {x}");
                    }
                }
            }
        }
    }

    #[test]
    fn gramian_simple_points() {
        let p = make_profile(0.125).unwrap();
        let g = SampleGrid { lo: 0.0, hi: 0.0, points: 1 };
        let r = dual_gramian_residual(&p, 4, g, Some(0)).unwrap();
        assert!(r.max_residual < 1e-15);
        let g = SampleGrid { lo: -1.0, hi: 1.0, points: 801 };
        let r = dual_gramian_residual(&p, 4, g, Some(1)).unwrap();
        assert!(r.max_residual < 1e-12);
    }

    #[test]
    fn gramian_requires_enough_generators() {
        let p = make_profile(0.25).unwrap();
        let g = SampleGrid { lo: -2.0, hi: 2.0, points: 10 };
        match dual_gramian_residual(&p, 3, g, None) {
            Err(Error::InsufficientJMax { required }) => assert_eq!(required, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn telescoping_pairs_cancel() {
        let p = make_profile(0.2).unwrap();
        for k in 1..6usize {
            for i in 0..500 {
                let xi = -4.0 + 8.0 * i as f64 / 500.0;
                let kf = k as f64;
                let t = |j: usize| eval_fj(j, &p, xi) * eval_fj(j, &p, xi + kf).conj();
                let s = t(k - 1) + t(k);
                assert!(s.norm() < 1e-13, "k {k} xi {xi}: {s}");
                for j in (0..12).filter(|&j| j + 1 != k && j != k) {
                    assert_eq!(t(j).norm(), 0.0);
                }
            }
        }
    }

    #[test]
    fn complex_profile_gramian() {
        let p = PhasedProfile { base: make_profile(0.15).unwrap(), c: 3.0 };
        assert!(eval_fj(1, &p, 0.5).im.abs() > 1e-3);
        let g = SampleGrid { lo: -2.0, hi: 2.0, points: 1001 };
        let r = dual_gramian_residual(&p, 12, g, Some(6)).unwrap();
        assert!(r.max_residual < 1e-12, "{r:?}");
        let o = orthonormality_check_sfs(&p, 5, 1, 60, 4, 11);
        assert!(o.max_deviation() < 1e-8, "{o:?}");
    }

    #[test]
    fn norm_one() {
        for delta in [0.05, 0.25] {
            let p = make_profile(delta).unwrap();
            for j in 0..=12 {
                assert_abs_diff_eq!(inner_1d(&p, j, j, 0).re, 1.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn disjoint_and_adjacent() {
        let p = make_profile(0.1).unwrap();
        assert_eq!(inner_1d(&p, 0, 5, 3).norm(), 0.0);
        assert!(inner_1d(&p, 1, 2, 0).norm() < 1e-10);
    }

    #[test]
    fn overlap_shrinks_with_delta() {
        let measure = |delta: f64| {
            let p = make_profile(delta).unwrap();
            let n = 20_000;
            (0..n)
                .filter(|&i| {
                    let v = eval_fj(2, &p, -2.0 + 4.0 * i as f64 / n as f64).norm();
                    v > 0.0 && v < 1.0 - 1e-15
                })
                .count()
        };
        let m: Vec<usize> = [0.25, 0.125, 0.05, 0.01].iter().map(|&d| measure(d)).collect();
        assert!(m.windows(2).all(|w| w[1] < w[0]), "{m:?}");
    }
}
