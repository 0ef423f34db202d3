//! Acceptance suite: one PASS/FAIL line per criterion, with the measured
//! quantities and the runtime against its budget. Runs as a plain binary
//! (`harness = false`) so the lines always reach the terminal.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use mattis::commands::{execute, gap_bound};
use mattis::config::{RunConfig, SourceFormat};
use mattis::output::Report;
use mattis::parallel;
use mattis_core::cascade::{CascadeConfig, CascadeEngine};
use mattis_core::ldp::standardize_model;
use mattis_core::oracle::{covariance_audit, Ball, OracleSpec};
use mattis_core::rbm::magnetization_sum;
use mattis_core::rs::{RsConfig, RsEngine};
use mattis_core::{ModelSpec, PiecewisePath, SymMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Outcome of one criterion: verdict plus a one-line account of the numbers.
struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Result<Verdict, String> {
    Ok(Verdict {
        pass,
        detail: detail.into(),
    })
}

type Check = fn() -> Result<Verdict, String>;

fn run_config(toml: &str) -> Result<Report, String> {
    let cfg = RunConfig::parse(toml, SourceFormat::Toml, Path::new("."), None).map_err(|e| e.to_string())?;
    execute(&cfg, None).map_err(|e| e.to_string())
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `A Aᵀ + floor·I` with entries of A uniform in `[−s, s]`.
fn random_psd(r: &mut ChaCha8Rng, d: usize, s: f64, floor: f64) -> SymMatrix {
    let a: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| r.random_range(-s..s)).collect()).collect();
    SymMatrix::from_fn(d, |i, j| {
        (0..d).map(|k| a[i][k] * a[j][k]).sum::<f64>() + if i == j { floor } else { 0.0 }
    })
}

fn random_diag(r: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64) -> SymMatrix {
    SymMatrix::diag(&(0..d).map(|_| r.random_range(lo..hi)).collect::<Vec<_>>())
}

fn random_vec(r: &mut ChaCha8Rng, d: usize, s: f64) -> Vec<f64> {
    (0..d).map(|_| r.random_range(-s..s)).collect()
}

/// Random `y` suited to the model: full PSD for vector mode, diagonal for
/// multitype.
fn random_y(r: &mut ChaCha8Rng, model: &ModelSpec, floor: f64) -> SymMatrix {
    match model.mode() {
        mattis_core::Mode::Vector => random_psd(r, model.spin_dim(), 0.6, floor),
        mattis_core::Mode::Multitype => random_diag(r, model.spin_dim(), floor, 0.6),
    }
}

fn models() -> [ModelSpec; 2] {
    [ModelSpec::rbm(), ModelSpec::rbm_multitype()]
}

/// `−2 log cosh 1`, written out independently of the library.
fn beta_zero_limit() -> f64 {
    -2.0 * 1f64.cosh().ln()
}

fn c01_t_star_bound() -> Result<Verdict, String> {
    let b = ModelSpec::rbm().t_star_lower_bound();
    let dt = (b.t_star - 0.0625).abs();
    let db = (b.beta() - 0.353553).abs();
    verdict(
        dt <= 1e-12 && db <= 5e-7,
        format!("t* bound {:.15} (|Δ| {dt:.1e}), β* bound {:.6}", b.t_star, b.beta()),
    )
}

fn c02_beta_zero_anchor() -> Result<Verdict, String> {
    let exact = beta_zero_limit();
    let frozen = -0.8675617;
    let r = run_config("[command]\nname = \"rbm\"\nbeta = 0.0\n")?;
    let lfe = r.get_f64("limit_free_energy").ok_or("missing limit_free_energy")?;
    let mut pass = (lfe - exact).abs() <= 1e-9 && (exact - frozen).abs() <= 5e-8;
    let std = standardize_model(&ModelSpec::rbm(), 0.0, magnetization_sum()).map_err(|e| e.to_string())?;
    let spec = OracleSpec::standard(&std).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let mut worst_se: f64 = 0.0;
    for n in [1, 4, 8] {
        let st = parallel::disorder_stats(&spec, n, 16, 3).map_err(|e| e.to_string())?;
        worst = worst.max((st.mean - exact).abs());
        worst_se = worst_se.max(st.stderr);
    }
    pass &= worst <= 1e-9 && worst_se <= 1e-12;
    verdict(
        pass,
        format!(
            "rbm {lfe:.10} vs {exact:.10} (|Δ| {:.1e}); oracle N=1,4,8 max|Δ| {worst:.1e}, max stderr {worst_se:.1e}",
            (lfe - exact).abs()
        ),
    )
}

fn c03_rs_cascade_consistency() -> Result<Verdict, String> {
    let mut r = rng(301);
    let mut worst: f64 = 0.0;
    for (k, model) in models().iter().enumerate() {
        let rs = RsEngine::new(model, RsConfig::default()).map_err(|e| e.to_string())?;
        let ce = CascadeEngine::new(model, CascadeConfig::default()).map_err(|e| e.to_string())?;
        for _ in 0..[14, 6][k] {
            let y = random_y(&mut r, model, 0.0);
            let x = random_vec(&mut r, model.mattis_dim(), 1.5);
            let a = ce.psi(&PiecewisePath::constant(y.clone()), &x).map_err(|e| e.to_string())?;
            let b = rs.phi(&y, &x).map_err(|e| e.to_string())?;
            worst = worst.max((a - b).abs());
        }
    }
    verdict(worst <= 1e-9, format!("20 points, max |ψ(ŷ;x) − φ(y;x)| = {worst:.2e}"))
}

fn c04_projection_consistency() -> Result<Verdict, String> {
    let mut r = rng(401);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (k, model) in models().iter().enumerate() {
        let rs = RsEngine::new(model, RsConfig { tol: 1e-10, ..RsConfig::default() }).map_err(|e| e.to_string())?;
        let ce = CascadeEngine::new(model, CascadeConfig { tol: 1e-10, ..CascadeConfig::default() })
            .map_err(|e| e.to_string())?;
        let t_star = model.t_star_lower_bound().t_star;
        for _ in 0..[6, 4][k] {
            let t = r.random_range(0.05..0.95) * t_star;
            let y = random_y(&mut r, model, 0.0);
            let x = random_vec(&mut r, model.mattis_dim(), 1.5);
            let f = ce.f_value(t, &PiecewisePath::constant(y.clone()), &x).map_err(|e| e.to_string())?;
            let g = rs.g_value(t, &y, &x).map_err(|e| e.to_string())?;
            if !(f.fixed_point.certified && g.fixed_point.certified) {
                return Err("uncertified draw".into());
            }
            worst = worst.max((f.f - g.g).abs());
            count += 1;
        }
    }
    verdict(worst <= 1e-6, format!("{count} certified points, max |f(t,ŷ;x) − g(t,y;x)| = {worst:.2e}"))
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
    let den = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    num / den
}

/// Central differences of φ in every upper-triangle entry of y and every x
/// coordinate. Off-diagonal entries move symmetrically, so the difference
/// quotient is halved to match the entrywise gradient.
fn fd_gradients(rs: &RsEngine<'_>, y: &SymMatrix, x: &[f64], h: f64, diag_only: bool) -> (Vec<f64>, Vec<f64>) {
    let d = y.dim();
    let phi = |yy: &SymMatrix, xx: &[f64]| rs.phi(yy, xx).expect("phi");
    let mut gy = Vec::new();
    for a in 0..d {
        for b in a..d {
            if diag_only && a != b {
                gy.push(0.0);
                continue;
            }
            let mut e = SymMatrix::zeros(d);
            e.set(a, b, h);
            let q = (phi(&(y + &e), x) - phi(&(y - &e), x)) / (2.0 * h);
            gy.push(if a == b { q } else { 0.5 * q });
        }
    }
    let gx = (0..x.len())
        .map(|i| {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[i] += h;
            m[i] -= h;
            (phi(y, &p) - phi(y, &m)) / (2.0 * h)
        })
        .collect();
    (gy, gx)
}

fn c05_gradient_suite() -> Result<Verdict, String> {
    let mut worst = [0.0f64; 2];
    let mut order_gap: f64 = 0.0;
    let mut r = rng(501);
    let mut points = Vec::new();
    for k in 0..30 {
        let model = &models()[usize::from(k >= 20)];
        let y = random_y(&mut r, model, 0.05);
        let x = random_vec(&mut r, model.mattis_dim(), 1.5);
        points.push((usize::from(k >= 20), y, x));
    }
    let all = models();
    for (slot, order) in [41usize, 81].into_iter().enumerate() {
        for (mi, y, x) in &points {
            let model = &all[*mi];
            let rs = RsEngine::new(model, RsConfig { quad_order: order, ..RsConfig::default() })
                .map_err(|e| e.to_string())?;
            let an = rs.grad_phi(y, x).map_err(|e| e.to_string())?;
            let (gy, gx) = fd_gradients(&rs, y, x, 1e-5, model.mode() == mattis_core::Mode::Multitype);
            worst[slot] = worst[slot].max(rel_err(an.grad_y.upper(), &gy)).max(rel_err(&an.grad_x, &gx));
            if order == 81 {
                let lo = RsEngine::new(model, RsConfig { quad_order: 41, ..RsConfig::default() })
                    .map_err(|e| e.to_string())?
                    .grad_phi(y, x)
                    .map_err(|e| e.to_string())?;
                order_gap = order_gap
                    .max(rel_err(lo.grad_y.upper(), an.grad_y.upper()))
                    .max(rel_err(&lo.grad_x, &an.grad_x));
            }
        }
    }
    verdict(
        worst[0] <= 1e-5 && worst[1] <= 1e-5,
        format!(
            "30 points, max rel err vs FD: order 41 {:.1e}, order 81 {:.1e}; order 41 vs 81 {order_gap:.1e}",
            worst[0], worst[1]
        ),
    )
}

fn c06_fixed_point_contract() -> Result<Verdict, String> {
    let mut r = rng(601);
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_gap: f64 = 0.0;
    let mut worst_ratio: f64 = 0.0;
    for (k, model) in models().iter().enumerate() {
        let rs = RsEngine::new(model, RsConfig { tol: 1e-12, ..RsConfig::default() }).map_err(|e| e.to_string())?;
        let t_star = rs.t_star_bound().t_star;
        for _ in 0..[12, 8][k] {
            let t = r.random_range(0.05..0.95) * t_star;
            let y = random_y(&mut r, model, 0.0);
            let x = random_vec(&mut r, model.mattis_dim(), 1.5);
            let other = random_y(&mut r, model, 0.0);
            let a = rs.solve_fixed_point(t, &y, &x, None).map_err(|e| e.to_string())?;
            let b = rs.solve_fixed_point(t, &y, &x, Some(&other)).map_err(|e| e.to_string())?;
            if !a.certified {
                return Err("uncertified draw".into());
            }
            let allowed = t / t_star + 0.05;
            let c = a.contraction_estimate.max(b.contraction_estimate);
            worst_excess = worst_excess.max(c - allowed);
            worst_ratio = worst_ratio.max(c / allowed);
            worst_gap = worst_gap.max((&a.z - &b.z).sup_norm());
        }
    }
    verdict(
        worst_excess <= 0.0 && worst_gap <= 1e-8,
        format!(
            "20 points, max contraction/(t/t*+0.05) = {worst_ratio:.3}, max start disagreement {worst_gap:.1e}"
        ),
    )
}

fn c07_jump_preservation() -> Result<Verdict, String> {
    let model = ModelSpec::rbm();
    let ce = CascadeEngine::new(&model, CascadeConfig { quad_order: 12, tol: 1e-10, ..CascadeConfig::default() })
        .map_err(|e| e.to_string())?;
    let t_star = model.t_star_lower_bound().t_star;
    let mut r = rng(701);
    let mut min_gap = f64::INFINITY;
    let mut breaks_ok = true;
    let mut max_zero_gap: f64 = 0.0;
    for _ in 0..10 {
        let q0 = random_psd(&mut r, 2, 0.4, 0.0);
        let inc = random_psd(&mut r, 2, 0.5, 0.02);
        let zeta = r.random_range(0.15..0.85);
        let x = random_vec(&mut r, 2, 1.5);
        let t = r.random_range(0.1..0.9) * t_star;
        let q = PiecewisePath::new(vec![0.0, zeta], vec![q0.clone(), &q0 + &inc]).map_err(|e| e.to_string())?;
        let flat = PiecewisePath::new(vec![0.0, zeta], vec![q0.clone(), q0]).map_err(|e| e.to_string())?;
        for (path, zero) in [(&q, false), (&flat, true)] {
            let grad = ce.grad_q_psi(path, &x).map_err(|e| e.to_string())?;
            let fp = ce.solve_path_fixed_point(t, path, &x, None).map_err(|e| e.to_string())?;
            for out in [&grad, &fp.p] {
                breaks_ok &= out.breaks() == path.breaks();
                let gap = (&out.levels()[1] - &out.levels()[0]).sup_norm();
                if zero {
                    max_zero_gap = max_zero_gap.max(gap);
                } else {
                    min_gap = min_gap.min(gap);
                }
            }
        }
    }
    verdict(
        breaks_ok && min_gap > 1e-6 && max_zero_gap <= 1e-8,
        format!(
            "10 paths: breakpoints kept {breaks_ok}, min jump {min_gap:.2e}; zero increments give level gap {max_zero_gap:.1e}"
        ),
    )
}

fn hj_config(spacing: f64, probes: usize) -> String {
    format!(
        "preset = \"rbm\"\n[command]\nname = \"hj-grid\"\nt_final = 0.045\nx = [0.5, 0.5]\nprobes = {probes}\n\
         [command.grid]\nlo = [0.0, 0.0]\nhi = [1.0, 1.0]\nspacing = {spacing:?}\n\
         [command.compare]\nlo = 0.1\nhi = 0.9\nstride = {}\n",
        ((1.0 / 32.0) / spacing).round() as usize
    )
}

fn c08_hj_grid() -> Result<Verdict, String> {
    let coarse = run_config(&hj_config(1.0 / 64.0, 0))?;
    let fine = run_config(&hj_config(1.0 / 128.0, 50))?;
    let dc = coarse.get_f64("max_abs_diff").ok_or("missing diff")?;
    let df = fine.get_f64("max_abs_diff").ok_or("missing diff")?;
    let residual = fine.get_f64("max_hj_residual").ok_or("missing residual")?;
    let probes = fine.table("probes").map_or(0, |t| t.rows.len());
    let ratio = dc / df;
    verdict(
        residual <= 1e-4 && probes == 50 && df <= 5e-3 && (1.6..=2.4).contains(&ratio),
        format!(
            "{probes} probes max |∂ₜg − ξ(∇g)| {residual:.1e}; grid vs characteristics {dc:.2e} (Δ=1/64), {df:.2e} (Δ=1/128), ratio {ratio:.2}"
        ),
    )
}

const ORACLE_CONFIG: &str = "preset = \"rbm\"
[command]
name = \"oracle-compare\"
beta = 0.25
g = \"m1 + m2\"
n = [4, 6, 8, 10]
samples = 200
tilts = [[0.3, 0.0], [0.2, 0.2]]
seed = 1
";

fn oracle_report() -> Result<&'static Report, String> {
    use std::sync::OnceLock;
    static REPORT: OnceLock<Result<Report, String>> = OnceLock::new();
    REPORT.get_or_init(|| run_config(ORACLE_CONFIG)).as_ref().map_err(Clone::clone)
}

fn c09_finite_n() -> Result<Verdict, String> {
    let r = oracle_report()?;
    let t = r.table("free_energy").ok_or("missing table")?;
    let last = t.rows.len() - 1;
    let (mean, se, pred) = (
        t.f64_at(last, "mean").ok_or("mean")?,
        t.f64_at(last, "stderr").ok_or("stderr")?,
        t.f64_at(last, "prediction").ok_or("prediction")?,
    );
    let n = t.f64_at(last, "n").ok_or("n")? as usize;
    let gap = mean - pred;
    let bound = gap_bound(se, n);
    let slope = r.get_f64("trend_slope").ok_or("slope")?;
    let slope_se = r.get_f64("trend_slope_stderr").ok_or("slope stderr")?;
    let gaps: Vec<String> = (0..t.rows.len())
        .map(|i| format!("{:+.1e}", t.f64_at(i, "gap").unwrap_or(f64::NAN)))
        .collect();
    verdict(
        n == 10 && gap.abs() <= bound && slope <= 2.0 * slope_se,
        format!(
            "prediction {pred:.7}; gaps N=4..10 [{}]; N=10 |gap| {:.1e} ≤ {bound:.1e}; |gap| trend slope {slope:.1e} ≤ 2·{slope_se:.1e}",
            gaps.join(", "),
            gap.abs()
        ),
    )
}

fn c10_cgf() -> Result<Verdict, String> {
    let r = oracle_report()?;
    let t = r.table("cgf").ok_or("missing table")?;
    let mut pass = true;
    let mut parts = Vec::new();
    for i in 0..t.rows.len() {
        if t.f64_at(i, "n") != Some(10.0) {
            continue;
        }
        let gap = t.f64_at(i, "gap").ok_or("gap")?;
        let bound = t.f64_at(i, "bound").ok_or("bound")?;
        pass &= gap.abs() <= bound;
        parts.push(format!(
            "y=({},{}) Λ {:.6} gap {gap:+.1e} ≤ {bound:.1e}",
            t.f64_at(i, "y_1").unwrap_or(f64::NAN),
            t.f64_at(i, "y_2").unwrap_or(f64::NAN),
            t.f64_at(i, "prediction").unwrap_or(f64::NAN),
        ));
    }
    verdict(pass && parts.len() == 2, format!("N=10: {}", parts.join("; ")))
}

fn c11_rate_function() -> Result<Verdict, String> {
    let grid = "[command.grid]\nlo = [-0.9, -0.9]\nhi = [0.9, 0.9]\nper_axis = 7\n";
    let general = run_config(&format!(
        "preset = \"rbm\"\n[command]\nname = \"rate-function\"\nbeta = 0.3\ng = \"m1 + m2\"\n{grid}"
    ))?;
    let closed = run_config(&format!("[command]\nname = \"rbm\"\nbeta = 0.3\n{grid}"))?;
    let rt = general.table("rate_table").ok_or("missing rate table")?;
    let jt = closed.table("j_table").ok_or("missing J table")?;
    let min_rate = general.get_f64("min_rate").ok_or("min_rate")?;
    let mut lowest = f64::INFINITY;
    let mut worst: f64 = 0.0;
    let mut k = 0;
    for i in 0..rt.rows.len() {
        let rate = rt.f64_at(i, "rate").ok_or("rate")?;
        lowest = lowest.min(rate);
        if rt.rows[i][rt.col("is_minimizer").ok_or("col")?] == mattis::output::Cell::B(true) {
            continue;
        }
        let same_m = rt.f64_at(i, "m_1") == jt.f64_at(k, "m_1") && rt.f64_at(i, "m_2") == jt.f64_at(k, "m_2");
        if !same_m {
            return Err("rate table and J table grids differ".into());
        }
        worst = worst.max((rate - jt.f64_at(k, "J").ok_or("J")?).abs());
        k += 1;
    }
    verdict(
        lowest >= -1e-9 && min_rate <= 1e-6 && worst <= 1e-8 && k == jt.rows.len(),
        format!("{k} grid points: min I^G {lowest:.1e}, max |J − I^G| {worst:.1e}"),
    )
}

/// Closed-form β = 0 rate: each coordinate of m averages independent ±1
/// variables tilted by `e^{u}`.
fn beta_zero_rate(m: &[f64]) -> f64 {
    m.iter()
        .map(|&v| v * v.atanh() + 0.5 * (1.0 - v * v).ln() - v + 1f64.cosh().ln())
        .sum()
}

/// Minimum of the closed-form rate over a disk, on a fine polar grid.
fn disk_inf(center: [f64; 2], radius: f64) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..=400 {
        let rho = radius * i as f64 / 400.0;
        for j in 0..720 {
            let th = std::f64::consts::TAU * j as f64 / 720.0;
            let m = [center[0] + rho * th.cos(), center[1] + rho * th.sin()];
            if m.iter().all(|v| v.abs() < 1.0) {
                best = best.min(beta_zero_rate(&m));
            }
        }
    }
    best
}

fn c12_empirical_ldp() -> Result<Verdict, String> {
    let std = standardize_model(&ModelSpec::rbm(), 0.0, magnetization_sum()).map_err(|e| e.to_string())?;
    let spec = OracleSpec::standard(&std).map_err(|e| e.to_string())?;
    let mut pass = true;
    let mut parts = Vec::new();
    for c in [[0.7, 0.7], [0.9, 0.7], [0.7, 0.9]] {
        let ball = Ball {
            center: c.to_vec(),
            radius: 0.15,
        };
        let st = parallel::empirical_ldp(&spec, 10, &ball, 4, 12).map_err(|e| e.to_string())?;
        let inf = disk_inf(c, 0.15);
        let diff = (st.mean - inf).abs();
        pass &= diff <= 0.15;
        parts.push(format!("({},{}) emp {:.3} inf {:.3} |Δ| {diff:.3}", c[0], c[1], st.mean, inf));
    }
    verdict(pass, parts.join("; "))
}

fn c13_rpc_monte_carlo() -> Result<Verdict, String> {
    let model = ModelSpec::rbm();
    let ce = CascadeEngine::new(&model, CascadeConfig::default()).map_err(|e| e.to_string())?;
    let off = |a: f64, b: f64, c: f64| SymMatrix::from_rows(&[vec![a, b], vec![b, c]]).expect("static");
    let paths = [
        PiecewisePath::new(vec![0.0, 0.3], vec![SymMatrix::diag(&[0.1, 0.05]), SymMatrix::diag(&[0.4, 0.3])]),
        PiecewisePath::new(vec![0.0, 0.5], vec![off(0.2, 0.05, 0.1), off(0.5, 0.1, 0.35)]),
    ];
    let x = [0.4, -0.2];
    let mut pass = true;
    let mut parts = Vec::new();
    for q in paths {
        let q = q.map_err(|e| e.to_string())?;
        let psi = ce.psi(&q, &x).map_err(|e| e.to_string())?;
        let mc = parallel::rpc_mc_estimate(&ce, &q, &x, 2024, 100_000).map_err(|e| e.to_string())?;
        let z = (psi - mc.value) / mc.stderr;
        pass &= z.abs() <= 3.0;
        parts.push(format!("ζ={} ψ {psi:.6} MC {:.6}±{:.1e} (z {z:+.2})", q.breaks()[1], mc.value, mc.stderr));
    }
    verdict(pass, parts.join("; "))
}

fn c14_covariance() -> Result<Verdict, String> {
    let audit = covariance_audit(&ModelSpec::rbm(), 6, 10_000, 14).map_err(|e| e.to_string())?;
    let z = audit.max_abs_z();
    let parts: Vec<String> = audit
        .entries
        .iter()
        .map(|e| format!("{} {:.3}/{:.3}", e.label, e.empirical, e.predicted))
        .collect();
    verdict(z <= 5.0, format!("N=6, 10^4 draws, max |z| {z:.2} ({})", parts.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [(&str, Check, Duration); 14] = [
        ("t* lower bound on the RBM", c01_t_star_bound, Duration::from_secs(1)),
        ("beta = 0 anchor", c02_beta_zero_anchor, Duration::from_secs(10)),
        ("RS/cascade consistency", c03_rs_cascade_consistency, Duration::from_secs(60)),
        ("projection consistency", c04_projection_consistency, Duration::from_secs(300)),
        ("gradient suite", c05_gradient_suite, Duration::from_secs(60)),
        ("fixed-point contract", c06_fixed_point_contract, Duration::from_secs(120)),
        ("jump preservation", c07_jump_preservation, Duration::from_secs(300)),
        ("HJ residual and grid cross-check", c08_hj_grid, Duration::from_secs(600)),
        ("finite-N convergence", c09_finite_n, Duration::from_secs(900)),
        ("CGF convergence", c10_cgf, Duration::from_secs(600)),
        ("rate-function properties", c11_rate_function, Duration::from_secs(300)),
        ("empirical LDP spot check", c12_empirical_ldp, Duration::from_secs(300)),
        ("RPC recursion vs Monte Carlo", c13_rpc_monte_carlo, Duration::from_secs(600)),
        ("covariance audit", c14_covariance, Duration::from_secs(120)),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let id = format!("{:02}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| *f == id || name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok(v) => (v.pass && elapsed < *budget, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} [{id}] {name}: {detail} [{:.2}s, budget {}s]",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {}/{ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
