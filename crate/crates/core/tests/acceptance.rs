//! Acceptance battery. Every check prints one `PASS`/`FAIL` line straight to
//! stdout so the lines survive libtest output capture.

use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, Rotation3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ratmeyer::bump::{BoxUnion, BumpProfile, RatBox};
use ratmeyer::completion::{build_bank, default_grid_1d, lift_matrix, lift_to_nd, mra_1d, pipeline_1d, BuiltBank, CompletionOptions};
use ratmeyer::filterbank::{extract_lowpass, DilationData, LowpassEval};
use ratmeyer::mra::{build_general, strictly_expansive_scaling, strictly_expansive_unchecked};
use ratmeyer::ratlat::{cayley_rationalize, group_indices, rat, transversal, Lattice, RatMatrix};
use ratmeyer::sfs::{dual_gramian_residual, min_j_max, orthonormality_check_sfs, SampleGrid};
use ratmeyer::verify::{parseval_probe, wavelet_gram, GaussianProbe, GramOptions};
use ratmeyer::Error;

const CASES: [(u64, u64); 4] = [(2, 1), (3, 2), (5, 3), (4, 3)];

fn line(name: &str, pass: bool, detail: &str) -> bool {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "acceptance {name:<28} {} {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn within(t: Instant, limit: Duration) -> (bool, String) {
    let e = t.elapsed();
    (e < limit, format!("{:.2}s/{}s", e.as_secs_f64(), limit.as_secs()))
}

fn bank(p: u64, q: u64) -> BuiltBank {
    pipeline_1d(p, q, None, None, &CompletionOptions::default()).unwrap()
}

#[test]
fn sfs_dual_gramian() {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for delta in [0.05, 0.125, 0.25] {
        let profile = BumpProfile::new(delta).unwrap();
        let grid = SampleGrid { lo: -2.0, hi: 2.0, points: 4096 };
        let rep = dual_gramian_residual(&profile, min_j_max(2.0, delta), grid, Some(6)).unwrap();
        worst = worst.max(rep.max_residual);
    }
    let (fast, time) = within(t, Duration::from_secs(10));
    let ok = line("sfs-dual-gramian", worst < 1e-12 && fast, &format!("residual={worst:.3e} tol=1e-12 time={time}"));
    assert!(ok);
}

#[test]
fn sfs_orthonormality() {
    let t = Instant::now();
    let profile = BumpProfile::new(0.125).unwrap();
    let one = orthonormality_check_sfs(&profile, 8, 1, 200, 8, 11);
    let two = orthonormality_check_sfs(&profile, 8, 2, 100, 8, 12);
    let dev = one.max_deviation().max(two.max_deviation());
    let (fast, time) = within(t, Duration::from_secs(60));
    let ok = line(
        "sfs-orthonormality",
        dev < 1e-8 && fast && one.pairs_tested == 200 && two.pairs_tested == 100,
        &format!("deviation={dev:.3e} tol=1e-8 pairs={}+{} time={time}", one.pairs_tested, two.pairs_tested),
    );
    assert!(ok);
}

#[test]
fn strictly_expansive_gramian() {
    let mut all = true;
    for (p, q) in CASES {
        let sv = mra_1d(p, q, None).unwrap().scaling_vector().unwrap();
        let r = sv.gramian_residual(4096);
        all &= line(&format!("gramian-identity {p}/{q}"), r < 1e-10, &format!("residual={r:.3e} tol=1e-10"));
    }
    assert!(all);
}

/// `m_j(ξ) = b^{1/2} e^{-2πi⟨k_j, Bξ⟩} φ̂(Bξ) / φ̂(ξ)` evaluated directly.
fn explicit_lowpass_gap(built: &BuiltBank) -> (f64, usize) {
    let sv = built.spec.scaling_vector().unwrap();
    let data = DilationData::new(&built.spec.dilation).unwrap();
    let ks = data.k.cosets_f64();
    let bmat = data.b_matrix();
    let m = &built.bank.m;
    let mut worst: f64 = 0.0;
    let mut used = 0;
    for (i, v) in m.values.iter().enumerate() {
        let xi = m.node(i);
        let phi = sv.eval(&xi)[0];
        if phi.norm() <= 1e-6 {
            continue;
        }
        used += 1;
        let bxi: Vec<f64> = (0..xi.len()).map(|r| (0..xi.len()).map(|c| bmat[(r, c)] * xi[c]).sum()).collect();
        let phib = sv.eval(&bxi)[0];
        for (j, k) in ks.iter().enumerate() {
            let phase: f64 = k.iter().zip(&bxi).map(|(a, b)| a * b).sum();
            let direct = Complex64::from_polar(data.b.sqrt(), -2.0 * std::f64::consts::PI * phase) * phib / phi;
            worst = worst.max((v[(j, 0)] - direct).norm());
        }
    }
    (worst, used)
}

#[test]
fn lowpass_extraction() {
    let mut all = true;
    for (p, q) in CASES {
        let b = bank(p, q);
        all &= line(
            &format!("lowpass-extraction {p}/{q}"),
            b.lowpass_residual < 1e-8,
            &format!("residual={:.3e} tol=1e-8", b.lowpass_residual),
        );
        if (p, q) == (3, 2) {
            let (gap, used) = explicit_lowpass_gap(&b);
            all &= line("lowpass-explicit 3/2", gap < 1e-10 && used > 0, &format!("gap={gap:.3e} tol=1e-10 nodes={used}"));
        }
    }
    assert!(all);
}

#[test]
fn polyphase_round_trip() {
    let mut all = true;
    for (p, q) in CASES {
        let b = bank(p, q);
        let rec = b.polyphase.reconstruction;
        let gap = b.polyphase.plancherel_gap();
        all &= line(
            &format!("polyphase {p}/{q}"),
            rec < 1e-12 && gap < 1e-10,
            &format!("round-trip={rec:.3e} tol=1e-12 plancherel={gap:.3e} tol=1e-10"),
        );
    }
    assert!(all);
}

#[test]
fn completion_unitarity() {
    let mut all = true;
    for (p, q) in CASES {
        let b = bank(p, q);
        let l = b.system.len();
        let expected = (p - q) as usize * b.spec.multiplicity();
        all &= line(
            &format!("unitarity {p}/{q}"),
            b.unitarity < 1e-9 && l == expected,
            &format!("residual={:.3e} tol=1e-9 L={l} (p-q)N={expected}", b.unitarity),
        );
    }
    let a = RatMatrix::diag(&[rat(2, 1), rat(2, 1)]);
    let k = BoxUnion::single(RatBox::new(vec![rat(-1, 2); 2], vec![rat(1, 2); 2]).unwrap());
    let spec = strictly_expansive_scaling(&a, &Lattice::integer(2), &k, 1.0 / 12.0).unwrap();
    let shape = DilationData::new(&a).unwrap().grid_shape(32);
    let b = build_bank(&spec, &shape, &CompletionOptions::default()).unwrap();
    let expected = 3 * spec.multiplicity();
    all &= line(
        "unitarity 2I2",
        b.unitarity < 1e-9 && b.system.len() == expected,
        &format!("residual={:.3e} tol=1e-9 L={} (p-q)N={expected}", b.unitarity, b.system.len()),
    );
    assert!(all);
}

#[test]
fn wavelet_orthonormality() {
    let t = Instant::now();
    let b = bank(3, 2);
    let rep = wavelet_gram(&b.system, &GramOptions::default()).unwrap();
    let dc = b.system.psi(&[0.0]).unwrap().iter().map(|v| v.norm()).fold(0.0, f64::max);
    let (fast, time) = within(t, Duration::from_secs(300));
    let ok = line(
        "wavelet-orthonormality 3/2",
        rep.max_deviation() < 1e-6 && dc < 1e-9 && fast,
        &format!(
            "deviation={:.3e} tol=1e-6 pairs={} dc={dc:.3e} tol=1e-9 time={time}",
            rep.max_deviation(),
            rep.pairs_tested
        ),
    );
    assert!(ok);
}

#[test]
fn parseval_capture() {
    let b = bank(3, 2);
    let probe = GaussianProbe { centre: vec![1.5], sigma: 0.3 };
    let total = probe.norm_squared();
    let g = |x: &[f64]| Complex64::new(probe.eval(x), 0.0);
    let rep = parseval_probe(&b.system, &g, total, (-6, 6), 64, 1.0 / 64.0).unwrap();
    let ratio = rep.ratio();
    let ok = line(
        "parseval-capture 3/2",
        ratio > 0.999 && ratio <= 1.0 + 1e-8,
        &format!("ratio={ratio:.10} bound=0.999"),
    );
    assert!(ok);
}

#[test]
fn lifting() {
    let lr = lift_to_nd(3, 2, 2, 16, &CompletionOptions::default()).unwrap();
    let idx = group_indices(&lift_matrix(3, 2, 2).unwrap()).unwrap();
    let ok = line(
        "lifting 3/2 n=2",
        lr.gramian_residual < 1e-10 && lr.lowpass_match < 1e-10 && (idx.p, idx.q) == (3, 2) && lr.system.len() == 1,
        &format!(
            "gramian={:.3e} match={:.3e} tol=1e-10 indices=({},{}) L={}",
            lr.gramian_residual,
            lr.lowpass_match,
            idx.p,
            idx.q,
            lr.system.len()
        ),
    );
    assert!(ok);
}

fn random_lattice(rng: &mut ChaCha8Rng, n: usize) -> Lattice {
    loop {
        let vals: Vec<_> = (0..n * n).map(|_| rat(rng.gen_range(-6..=6), rng.gen_range(1..=5))).collect();
        if let Ok(l) = Lattice::new(RatMatrix::new(n, n, vals).unwrap()) {
            return l;
        }
    }
}

fn random_integer_matrix(rng: &mut ChaCha8Rng, n: usize) -> RatMatrix {
    loop {
        let vals: Vec<_> = (0..n * n).map(|_| rat(rng.gen_range(-3..=3), 1)).collect();
        let m = RatMatrix::new(n, n, vals).unwrap();
        if !num_traits::Zero::is_zero(&m.det()) {
            return m;
        }
    }
}

#[test]
fn lattice_exactness() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut involution, mut index, mut worst_char) = (true, true, 0.0f64);
    for trial in 0..1000 {
        let n = 1 + trial % 3;
        let sup = random_lattice(&mut rng, n);
        let sub = Lattice::new(sup.basis() * &random_integer_matrix(&mut rng, n)).unwrap();
        involution &= sup.dual().dual().canonical_basis() == sup.canonical_basis();
        let direct = transversal(&sub, &sup).unwrap();
        let duals = transversal(&sup.dual(), &sub.dual()).unwrap();
        index &= direct.len() == duals.len();
        if direct.len() <= 64 {
            // (1/m) Σ_γ e^{2πi⟨γ, ω - ω'⟩} = δ_{ω ω'}
            let g = direct.cosets_f64();
            let w = duals.cosets_f64();
            let m = g.len() as f64;
            for (a, wa) in w.iter().enumerate() {
                for (b, wb) in w.iter().enumerate() {
                    let s: Complex64 = g
                        .iter()
                        .map(|x| {
                            let ph: f64 = x.iter().zip(wa.iter().zip(wb)).map(|(x, (u, v))| x * (u - v)).sum();
                            Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * ph)
                        })
                        .sum::<Complex64>()
                        / m;
                    let expect = if a == b { 1.0 } else { 0.0 };
                    worst_char = worst_char.max((s - expect).norm());
                }
            }
        }
    }
    let mut cayley_ok = true;
    let mut cayley_dist: f64 = 0.0;
    for i in 0..100 {
        let u: DMatrix<f64> = if i % 2 == 0 {
            let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()])
        } else {
            let r = Rotation3::from_euler_angles(rng.gen_range(-3.1..3.1), rng.gen_range(-1.5..1.5), rng.gen_range(-3.1..3.1));
            DMatrix::from_iterator(3, 3, r.matrix().iter().copied())
        };
        match cayley_rationalize(&u, 1e-3) {
            Ok(q) => {
                cayley_ok &= q.is_orthogonal();
                cayley_dist = cayley_dist.max((q.to_f64() - &u).amax());
            }
            Err(_) => cayley_ok = false,
        }
    }
    let (fast, time) = within(t, Duration::from_secs(30));
    let ok = line(
        "lattice-exactness",
        involution && index && worst_char < 1e-12 && cayley_ok && cayley_dist < 1e-3 && fast,
        &format!(
            "involution={involution} index={index} character={worst_char:.3e} tol=1e-12 cayley-orthogonal={cayley_ok} \
             cayley-dist={cayley_dist:.3e} tol=1e-3 time={time}"
        ),
    );
    assert!(ok);
}

#[test]
fn general_dilations() {
    let mut all = true;
    for (name, a) in [
        ("[[0,1/2],[3,0]]", RatMatrix::from_strs(2, 2, &["0", "1/2", "3", "0"]).unwrap()),
        ("[[1,1],[-1,1]]", RatMatrix::from_i64(2, 2, &[1, 1, -1, 1])),
    ] {
        let spec = build_general(&a, 0.1).unwrap();
        let shape = DilationData::new(&a).unwrap().grid_shape(6);
        let b = build_bank(&spec, &shape, &CompletionOptions::default()).unwrap();
        let idx = group_indices(&a).unwrap();
        let n = spec.multiplicity();
        let expected = (idx.p - idx.q) as usize * n;
        all &= line(
            &format!("general {name}"),
            b.unitarity < 1e-8 && b.system.len() == expected,
            &format!("residual={:.3e} tol=1e-8 N={n} L={} (p-q)N={expected}", b.unitarity, b.system.len()),
        );
    }
    assert!(all);
}

#[test]
fn negative_control() {
    let a = RatMatrix::from_i64(1, 1, &[2]);
    let k = BoxUnion::single(RatBox::new(vec![rat(-1, 2)], vec![rat(1, 2)]).unwrap());
    let spec = strictly_expansive_unchecked(&a, &Lattice::integer(1), &k, 0.4).unwrap();
    let data = DilationData::new(&a).unwrap();
    let eval = LowpassEval::new(spec.scaling_vector().unwrap(), data).unwrap();
    let outcome = extract_lowpass(&eval, &[default_grid_1d(2)]);
    let (ok, detail) = match outcome {
        Err(Error::NotRefinable { residual }) => (residual > 1e-3, format!("not refinable, residual={residual:.3e} bound=1e-3")),
        Err(e) => (false, format!("unexpected error {e}")),
        Ok(lp) => (false, format!("accepted with residual {:.3e}", lp.residual)),
    };
    assert!(line("negative-control", ok, &detail));
}
