//! Job specs, pipeline orchestration and file export behind the binary.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::bump::BumpProfile;
use crate::completion::{
    build_bank, lift_to_nd, pipeline_1d, CompletionOptions, WaveletSystem, WaveletSystemDesc,
};
use crate::error::{Error, Result};
use crate::filterbank::{DilationData, GridFn};
use crate::mra::build_general;
use crate::ratlat::{group_indices, RatMatrix};
use crate::sfs::{dual_gramian_residual, eval_fj, min_j_max, SampleGrid};
use crate::verify::{parseval_probe, wavelet_gram, GaussianProbe, GramOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    SfsCheck,
    #[serde(rename = "build-1d")]
    Build1d,
    BuildLift,
    BuildGeneral,
    Verify,
}

/// Everything a run needs. Unset knobs fall back to per-mode defaults.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobSpec {
    pub mode: Option<Mode>,
    pub dilation: Option<RatMatrix>,
    pub p: Option<u64>,
    pub q: Option<u64>,
    pub n: Option<usize>,
    pub delta: Option<f64>,
    pub eps: Option<f64>,
    /// Nodes per axis on the `Γ*` cell (rounded up to a compatible shape).
    pub grid: Option<usize>,
    pub tol: Option<f64>,
    pub j_range: Option<(i32, i32)>,
    pub k_max: Option<i64>,
    pub parseval: Option<bool>,
    pub system: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl JobSpec {
    /// Fill unset fields of `self` from `other`.
    pub fn merge(mut self, other: JobSpec) -> JobSpec {
        macro_rules! fill {
            ($($f:ident),*) => { $( if self.$f.is_none() { self.$f = other.$f; } )* };
        }
        fill!(mode, dilation, p, q, n, delta, eps, grid, tol, j_range, k_max, parseval, system, out, seed);
        self
    }

    fn completion_options(&self) -> CompletionOptions {
        let mut o = CompletionOptions::default();
        if let Some(s) = self.seed {
            o.seed = s;
        }
        o
    }

    fn pq(&self) -> Result<(u64, u64)> {
        if let (Some(p), Some(q)) = (self.p, self.q) {
            return Ok((p, q));
        }
        if let Some(a) = &self.dilation {
            if a.rows() == 1 && a.cols() == 1 {
                let v = a.get(0, 0);
                let (p, q) = (v.numer(), v.denom());
                return match (u64::try_from(p), u64::try_from(q)) {
                    (Ok(p), Ok(q)) => Ok((p, q)),
                    _ => Err(Error::InvalidParameter("dilation must be a positive p/q".into())),
                };
            }
        }
        Err(Error::InvalidParameter("need --p and --q".into()))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
}

impl Check {
    fn below(name: &str, value: f64, tol: f64) -> Check {
        Check { name: name.into(), value, tol, pass: value.is_finite() && value < tol }
    }

    fn above(name: &str, value: f64, tol: f64) -> Check {
        Check { name: name.into(), value, tol, pass: value > tol }
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub pass: bool,
    pub report: Value,
}

/// Usage errors exit with 2, anything else that fails with 1.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParameter(_) | Error::Parse(_) | Error::Json(_) | Error::DimensionMismatch(_) => 2,
        _ => 1,
    }
}

/// Round every float to 10 significant digits so reports diff cleanly;
/// non-finite values become strings.
pub fn fixed_precision(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or(f64::NAN);
            let r: f64 = format!("{x:.9e}").parse().unwrap_or(x);
            serde_json::Number::from_f64(r).map(Value::Number).unwrap_or_else(|| Value::String(format!("{x}")))
        }
        Value::Array(a) => Value::Array(a.into_iter().map(fixed_precision).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, fixed_precision(v))).collect::<Map<_, _>>()),
        other => other,
    }
}

fn finish(mode: Mode, checks: Vec<Check>, details: Value) -> Result<Outcome> {
    let pass = checks.iter().all(|c| c.pass);
    let report = json!({ "mode": mode, "pass": pass, "checks": checks, "details": details });
    Ok(Outcome { pass, report: fixed_precision(report) })
}

pub fn run(job: &JobSpec) -> Result<Outcome> {
    let mode = job.mode.ok_or_else(|| Error::InvalidParameter("no mode given".into()))?;
    if let Some(out) = &job.out {
        fs::create_dir_all(out)?;
    }
    let outcome = match mode {
        Mode::SfsCheck => run_sfs(job),
        Mode::Build1d => run_build_1d(job),
        Mode::BuildLift => run_build_lift(job),
        Mode::BuildGeneral => run_build_general(job),
        Mode::Verify => run_verify(job),
    }?;
    if let Some(out) = &job.out {
        write_json(&out.join("report.json"), &outcome.report)?;
    }
    Ok(outcome)
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, v)?;
    writeln!(w)?;
    Ok(())
}

fn run_sfs(job: &JobSpec) -> Result<Outcome> {
    let delta = job.delta.unwrap_or(0.125);
    let tol = job.tol.unwrap_or(1e-12);
    let profile = BumpProfile::new(delta)?;
    let grid = SampleGrid { lo: -2.0, hi: 2.0, points: job.grid.unwrap_or(4096) };
    let rep = dual_gramian_residual(&profile, min_j_max(2.0, delta), grid, job.k_max.map(|k| k.max(0) as usize))?;
    let checks = vec![Check::below("dual_gramian", rep.max_residual, tol)];
    finish(Mode::SfsCheck, checks, serde_json::to_value(&rep)?)
}

fn bank_tol(job: &JobSpec) -> f64 {
    job.tol.unwrap_or(1e-9)
}

fn run_build_1d(job: &JobSpec) -> Result<Outcome> {
    let (p, q) = job.pq()?;
    let tol = bank_tol(job);
    let built = pipeline_1d(p, q, job.eps, job.grid.map(|g| g.div_ceil(p as usize) * p as usize), &job.completion_options())?;
    let idx = group_indices(&RatMatrix::new(1, 1, vec![crate::ratlat::rat(p as i64, q as i64)])?)?;
    let checks = vec![
        Check::below("lowpass_reconstruction", built.lowpass_residual, 1e-8),
        Check::below("polyphase_round_trip", built.polyphase.reconstruction, 1e-12),
        Check::below("plancherel_gap", built.polyphase.plancherel_gap(), 1e-10),
        Check::below("unitarity", built.unitarity, tol),
        Check::below("dc_annihilation", dc_max(&built.system)?, 1e-9),
    ];
    let details = json!({
        "p": idx.p, "q": idx.q,
        "multiplicity": built.spec.multiplicity(),
        "wavelets": built.system.len(),
        "smith_barnwell": built.smith_barnwell,
        "continuity_score": built.completion.continuity_score,
        "seam_residual": built.completion.seam_residual,
        "method": built.completion.method,
        "warnings": built.completion.warnings,
        "grid": built.bank.m.shape,
    });
    if let Some(out) = &job.out {
        write_artifacts(out, &built.system, &built.bank.m, built.bank.h.as_ref())?;
    }
    finish(Mode::Build1d, checks, details)
}

fn run_build_lift(job: &JobSpec) -> Result<Outcome> {
    let (p, q) = job.pq()?;
    let n = job.n.unwrap_or(2);
    let tol = bank_tol(job);
    let lr = lift_to_nd(p, q, n, job.grid.unwrap_or(16), &job.completion_options())?;
    let checks = vec![
        Check::below("lifted_gramian", lr.gramian_residual, 1e-10),
        Check::below("lowpass_match", lr.lowpass_match, 1e-10),
        Check::below("unitarity", lr.unitarity, tol),
    ];
    let details = json!({
        "n": n,
        "lowpass_residual": lr.lowpass_residual,
        "wavelets": lr.system.len(),
        "grid": lr.bank.m.shape,
    });
    if let Some(out) = &job.out {
        write_artifacts(out, &lr.system, &lr.bank.m, lr.bank.h.as_ref())?;
    }
    finish(Mode::BuildLift, checks, details)
}

fn run_build_general(job: &JobSpec) -> Result<Outcome> {
    let a = job.dilation.as_ref().ok_or_else(|| Error::InvalidParameter("need a dilation matrix".into()))?;
    if a.rows() != a.cols() {
        return Err(Error::InvalidParameter("dilation must be square".into()));
    }
    let delta = job.delta.unwrap_or(0.1);
    let tol = job.tol.unwrap_or(1e-8);
    let spec = build_general(a, delta)?;
    let data = DilationData::new(a)?;
    let shape = data.grid_shape(job.grid.unwrap_or(6));
    let built = build_bank(&spec, &shape, &job.completion_options())?;
    let idx = group_indices(a)?;
    let n_gen = spec.multiplicity();
    let expected = (idx.p - idx.q) as usize * n_gen;
    let checks = vec![
        Check::below("lowpass_reconstruction", built.lowpass_residual, 1e-8),
        Check::below("unitarity", built.unitarity, tol),
        Check::below("dimension_identity", (built.system.len() as f64 - expected as f64).abs(), 0.5),
    ];
    let details = json!({
        "p": idx.p, "q": idx.q,
        "multiplicity": n_gen,
        "wavelets": built.system.len(),
        "continuity_score": built.completion.continuity_score,
        "warnings": built.completion.warnings,
        "grid": shape,
    });
    if let Some(out) = &job.out {
        write_artifacts(out, &built.system, &built.bank.m, built.bank.h.as_ref())?;
    }
    finish(Mode::BuildGeneral, checks, details)
}

fn run_verify(job: &JobSpec) -> Result<Outcome> {
    let path = job.system.as_ref().ok_or_else(|| Error::InvalidParameter("need --system <system.json>".into()))?;
    let desc: WaveletSystemDesc = serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?;
    let sys = WaveletSystem::from_desc(desc)?;
    let tol = job.tol.unwrap_or(1e-6);
    let (j_min, j_max) = job.j_range.unwrap_or((-1, 1));
    let mut opts = GramOptions { j_min, j_max, k_max: job.k_max.unwrap_or(8), ..GramOptions::default() };
    if sys.dim() > 1 {
        opts.panel_width = 1.0 / 16.0;
        opts.order = 12;
    }
    let rep = wavelet_gram(&sys, &opts)?;
    let mut checks = vec![
        Check::below("orthonormality", rep.max_deviation(), tol),
        Check::below("dc_annihilation", dc_max(&sys)?, 1e-9),
    ];
    let mut details = json!({ "gram": rep });
    if job.parseval.unwrap_or(false) {
        let probe = GaussianProbe { centre: vec![1.5; sys.dim()], sigma: 0.3 };
        let total = probe.norm_squared();
        let g = |x: &[f64]| Complex64::new(probe.eval(x), 0.0);
        let pr = parseval_probe(&sys, &g, total, (-6, 6), 64, 1.0 / 64.0)?;
        checks.push(Check::above("parseval_capture", pr.ratio(), 0.999));
        details["parseval"] = serde_json::to_value(&pr)?;
    }
    finish(Mode::Verify, checks, details)
}

fn dc_max(sys: &WaveletSystem) -> Result<f64> {
    Ok(sys.psi(&vec![0.0; sys.dim()])?.iter().map(|v| v.norm()).fold(0.0, f64::max))
}

/// System descriptor, `M` and `H` grids, and CSV samples of `φ̂`, `ψ̂` along the first axis.
pub fn write_artifacts(out: &Path, sys: &WaveletSystem, m: &GridFn, h: Option<&GridFn>) -> Result<()> {
    write_json(&out.join("system.json"), sys.desc())?;
    m.write_binary(BufWriter::new(File::create(out.join("lowpass.rmg"))?))?;
    if let Some(h) = h {
        h.write_binary(BufWriter::new(File::create(out.join("highpass.rmg"))?))?;
    }
    let hull = sys.support();
    let (lo, hi) = (hull.lo[0], hull.hi[0]);
    let axis = |t: f64| {
        let mut x = vec![0.0; sys.dim()];
        x[0] = t;
        x
    };
    let phi = |t: f64| sys.phi(&axis(t));
    let points = if sys.dim() == 1 { 2001 } else { 401 };
    write_samples(&out.join("phi.csv"), "phi", lo, hi, points, &phi)?;
    let psi = |t: f64| sys.psi(&axis(t)).unwrap_or_default();
    write_samples(&out.join("psi.csv"), "psi", lo, hi, points, &psi)?;
    write_grid_csv(&out.join("lowpass.csv"), m, 1)
}

fn write_samples(path: &Path, name: &str, lo: f64, hi: f64, points: usize, f: &(dyn Fn(f64) -> Vec<Complex64> + Sync)) -> Result<()> {
    let grid = SampleGrid { lo, hi, points };
    let samples: Vec<Vec<Complex64>> = (0..points).into_par_iter().map(|i| f(grid.node(i))).collect();
    let mut w = BufWriter::new(File::create(path)?);
    let mut header = vec!["xi".to_string()];
    for l in 0..samples.first().map_or(0, Vec::len) {
        header.push(format!("{name}{l}_re"));
        header.push(format!("{name}{l}_im"));
    }
    writeln!(w, "{}", header.join(","))?;
    for (i, row) in samples.iter().enumerate() {
        let x = grid.node(i);
        let vals: Vec<String> = row.iter().flat_map(|v| [format!("{:.12e}", v.re), format!("{:.12e}", v.im)]).collect();
        writeln!(w, "{x:.12e},{}", vals.join(","))?;
    }
    Ok(())
}

/// `f̂_j` for the listed `j` on `[lo, hi]`, one column per function.
pub fn export_fhat(path: &Path, js: &[usize], delta: f64, lo: f64, hi: f64, points: usize) -> Result<()> {
    if js.is_empty() || points < 2 || lo >= hi {
        return Err(Error::InvalidParameter("empty export range".into()));
    }
    let profile = BumpProfile::new(delta)?;
    let grid = SampleGrid { lo, hi, points };
    let mut w = BufWriter::new(File::create(path)?);
    let header: Vec<String> = std::iter::once("xi".into()).chain(js.iter().map(|j| format!("f{j}"))).collect();
    writeln!(w, "{}", header.join(","))?;
    for i in 0..points {
        let x = grid.node(i);
        let vals: Vec<String> = js.iter().map(|&j| format!("{:.12e}", eval_fj(j, &profile, x).re)).collect();
        writeln!(w, "{x:.12e},{}", vals.join(","))?;
    }
    Ok(())
}

/// Grid samples repeated over `periods` translates along the first domain
/// basis vector; node coordinates then `re`/`im` per matrix entry.
pub fn write_grid_csv(path: &Path, g: &GridFn, periods: usize) -> Result<()> {
    let n = g.dim();
    let basis: DMatrix<f64> = g.domain.basis().to_f64();
    let step: Vec<f64> = basis.column(0).iter().copied().collect();
    let mut w = BufWriter::new(File::create(path)?);
    let mut header: Vec<String> = (0..n).map(|i| format!("xi{i}")).collect();
    for r in 0..g.rows {
        for c in 0..g.cols {
            header.push(format!("m{r}_{c}_re"));
            header.push(format!("m{r}_{c}_im"));
        }
    }
    writeln!(w, "{}", header.join(","))?;
    for t in 0..periods.max(1) {
        for (i, v) in g.values.iter().enumerate() {
            let x = g.node(i);
            let mut fields: Vec<String> = x.iter().zip(&step).map(|(a, s)| format!("{:.12e}", a + t as f64 * s)).collect();
            for r in 0..g.rows {
                for c in 0..g.cols {
                    fields.push(format!("{:.12e}", v[(r, c)].re));
                    fields.push(format!("{:.12e}", v[(r, c)].im));
                }
            }
            writeln!(w, "{}", fields.join(","))?;
        }
    }
    Ok(())
}

pub fn read_grid(path: &Path) -> Result<GridFn> {
    GridFn::read_binary(std::io::BufReader::new(File::open(path)?))
}

/// Parse a dilation from JSON text such as `[["0","1/2"],["3","0"]]`.
pub fn parse_dilation(s: &str) -> Result<RatMatrix> {
    serde_json::from_str(s).map_err(|e| Error::Parse(format!("dilation: {e}")))
}

/// `lo:hi` pairs for ranges on the command line.
pub fn parse_range(s: &str) -> Result<(i32, i32)> {
    let (a, b) = s.split_once(':').ok_or_else(|| Error::Parse(format!("range {s:?} is not lo:hi")))?;
    let lo = a.trim().parse().map_err(|_| Error::Parse(format!("bad range start {a:?}")))?;
    let hi = b.trim().parse().map_err(|_| Error::Parse(format!("bad range end {b:?}")))?;
    if lo > hi {
        return Err(Error::Parse(format!("empty range {s:?}")));
    }
    Ok((lo, hi))
}

pub fn load_job(path: &Path) -> Result<JobSpec> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_precision_is_stable() {
        let v = json!({ "a": 0.1 + 0.2, "b": [1.0f64 / 3.0], "c": "x" });
        let f = fixed_precision(v);
        assert_eq!(f["a"], json!(0.3));
        assert_eq!(fixed_precision(f.clone()), f);
    }

    #[test]
    fn job_parsing() {
        let job: JobSpec = serde_json::from_str(r#"{"mode":"build-general","dilation":[["0","1/2"],[3,0]]}"#).unwrap();
        assert_eq!(job.mode, Some(Mode::BuildGeneral));
        assert!(serde_json::from_str::<JobSpec>(r#"{"mode":"nope"}"#).is_err());
        assert!(serde_json::from_str::<JobSpec>(r#"{"bogus":1}"#).is_err());
        assert_eq!(parse_range("-1:1").unwrap(), (-1, 1));
        assert!(parse_range("2:1").is_err());
        let pq = JobSpec { dilation: Some(parse_dilation(r#"[["3/2"]]"#).unwrap()), ..Default::default() }.pq().unwrap();
        assert_eq!(pq, (3, 2));
    }

    #[test]
    fn fhat_csv_peaks_at_origin() {
        let dir = std::env::temp_dir().join(format!("ratmeyer-csv-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("f0.csv");
        export_fhat(&path, &[0], 0.125, -1.0, 1.0, 1001).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let rows: Vec<(f64, f64)> = text
            .lines()
            .skip(1)
            .map(|l| {
                let mut it = l.split(',').map(|v| v.parse::<f64>().unwrap());
                (it.next().unwrap(), it.next().unwrap())
            })
            .collect();
        let best = rows.iter().cloned().fold((0.0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
        assert!((best.1 - 1.0).abs() < 1e-12);
        assert!(rows.iter().any(|r| r.0 == 0.0 && (r.1 - 1.0).abs() < 1e-12));
        fs::remove_dir_all(&dir).ok();
    }
}
