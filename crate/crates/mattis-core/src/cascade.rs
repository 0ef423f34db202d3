//! Cascade functional ψ(q;x) for piecewise-constant paths, its path gradient,
//! the path fixed point and the enriched free energy f(t,q;x).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, log};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{SymMatrix, PSD_TOL};
use crate::model::{ModelSpec, SiteModel, Structure};
use crate::numeric::{jackknife_stderr, pairwise_sum, LogSumExp};
use crate::path::PiecewisePath;
use crate::quadrature::{GaussHermite, TensorRule, DEFAULT_ORDER};
use crate::site::SiteKernel;
use crate::xi::TStarBound;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeConfig {
    pub quad_order: usize,
    /// Largest number of jumps accepted by ψ.
    pub max_jumps: usize,
    /// Base finite-difference step for ∇_qψ.
    pub fd_eps: f64,
    /// Largest monotone-cone violation silently projected away.
    pub cone_tol: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub allow_uncertified: bool,
    /// Poisson–Dirichlet atoms kept per cascade level by the Monte Carlo estimator.
    pub mc_truncation: usize,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig {
            quad_order: DEFAULT_ORDER,
            max_jumps: 3,
            fd_eps: 1e-4,
            cone_tol: 1e-6,
            tol: 1e-8,
            max_iter: 1_000,
            allow_uncertified: false,
            mc_truncation: 2_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathFixedPointResult {
    pub p: PiecewisePath,
    pub iterations: usize,
    /// Levelwise sup-norm of the last Picard step.
    pub final_residual: f64,
    pub contraction_estimate: f64,
    pub certified: bool,
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RpcEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl RpcEstimate {
    /// Mean and jackknife standard error of per-sample values from
    /// [`CascadeEngine::rpc_samples`].
    pub fn from_samples(samples: &[f64], seed: u64) -> Self {
        let (value, _) = crate::numeric::mean_stderr(samples);
        RpcEstimate {
            value,
            stderr: jackknife_stderr(samples),
            n_samples: samples.len(),
            seed,
        }
    }
}

/// `f(t,q;x)` with the fixed point that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FValue {
    pub f: f64,
    pub fixed_point: PathFixedPointResult,
}

const RATIO_FLOOR: f64 = 1e-10;
const FEASIBLE_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct CascadeEngine<'a> {
    model: &'a ModelSpec,
    rule: TensorRule,
    cfg: CascadeConfig,
    bound: TStarBound,
}

impl<'a> CascadeEngine<'a> {
    pub fn new(model: &'a ModelSpec, cfg: CascadeConfig) -> Result<Self> {
        let gh = GaussHermite::new(cfg.quad_order)?;
        if !(cfg.fd_eps > 0.0) || !(cfg.tol > 0.0) || cfg.max_iter == 0 {
            return Err(Error::config("step size, tolerance and budget must be positive"));
        }
        let dim = match model.structure() {
            Structure::Vector(s) => s.spin_dim(),
            Structure::Multitype(_) => 1,
        };
        Ok(CascadeEngine {
            model,
            rule: TensorRule::new(&gh, dim),
            cfg,
            bound: model.t_star_lower_bound(),
        })
    }

    pub fn config(&self) -> &CascadeConfig {
        &self.cfg
    }

    pub fn model(&self) -> &ModelSpec {
        self.model
    }

    fn check_path(&self, q: &PiecewisePath) -> Result<()> {
        if q.dim() != self.model.spin_dim() {
            return Err(Error::validation("path dimension does not match the model"));
        }
        q.validate()?;
        if q.jumps() > self.cfg.max_jumps {
            return Err(Error::Capacity(format!(
                "path has {} jumps; at most {} are supported",
                q.jumps(),
                self.cfg.max_jumps
            )));
        }
        if let Structure::Multitype(_) = self.model.structure() {
            for m in q.levels() {
                for i in 0..m.dim() {
                    for j in i + 1..m.dim() {
                        if m.get(i, j) != 0.0 {
                            return Err(Error::validation(
                                "multitype mode uses diagonal paths only",
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn psi(&self, q: &PiecewisePath, x: &[f64]) -> Result<f64> {
        Ok(self.psi_impl(q, x, false)?.0)
    }

    /// ψ and its exact x-gradient (forward differentiation through the recursion).
    pub fn psi_with_grad_x(&self, q: &PiecewisePath, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.psi_impl(q, x, true)
    }

    fn psi_impl(&self, q: &PiecewisePath, x: &[f64], grad: bool) -> Result<(f64, Vec<f64>)> {
        self.check_path(q)?;
        self.model.check_x(x)?;
        match self.model.structure() {
            Structure::Vector(site) => site_psi(site, &self.rule, q, x, grad),
            Structure::Multitype(species) => {
                let offsets = self.model.species_offsets();
                let mut value = 0.0;
                let mut gx = vec![0.0; x.len()];
                for (s, sp) in species.iter().enumerate() {
                    let ds = sp.site.mattis_dim();
                    let qs = species_path(q, s)?;
                    let (v, g) =
                        site_psi(&sp.site, &self.rule, &qs, &x[offsets[s]..offsets[s] + ds], grad)?;
                    value += sp.weight * v;
                    for i in 0..ds {
                        gx[offsets[s] + i] = sp.weight * g[i];
                    }
                }
                Ok((value, gx))
            }
        }
    }

    /// Level values of ∇_qψ by finite differences on the increments.
    ///
    /// Levels joined by a zero increment share one Gibbs average, so they are
    /// merged before differencing and receive identical values.
    pub fn grad_q_psi(&self, q: &PiecewisePath, x: &[f64]) -> Result<PiecewisePath> {
        self.check_path(q)?;
        self.model.check_x(x)?;
        let keep: Vec<usize> = (0..q.levels().len())
            .filter(|&l| l == 0 || q.levels()[l] != q.levels()[l - 1])
            .collect();
        if keep.len() == q.levels().len() {
            return self.grad_q_psi_distinct(q, x);
        }
        let merged = PiecewisePath::new_unchecked(
            keep.iter().map(|&l| q.breaks()[l]).collect(),
            keep.iter().map(|&l| q.levels()[l].clone()).collect(),
        )?;
        let g = self.grad_q_psi_distinct(&merged, x)?;
        let mut levels = Vec::with_capacity(q.levels().len());
        let mut j = 0;
        for l in 0..q.levels().len() {
            if j + 1 < keep.len() && keep[j + 1] == l {
                j += 1;
            }
            levels.push(g.levels()[j].clone());
        }
        PiecewisePath::new_unchecked(q.breaks().to_vec(), levels)
    }

    fn grad_q_psi_distinct(&self, q: &PiecewisePath, x: &[f64]) -> Result<PiecewisePath> {
        let k = q.jumps();
        let d = q.dim();
        let diagonal_only = matches!(self.model.structure(), Structure::Multitype(_));
        let f0 = self.psi(q, x)?;
        let mut levels = Vec::with_capacity(k + 1);
        for l in 0..=k {
            let mut g = SymMatrix::zeros(d);
            for a in 0..d {
                let mut e = SymMatrix::zeros(d);
                e.set(a, a, 1.0);
                g.set(a, a, self.level_derivative(q, x, l, &e, true, f0)?);
            }
            if !diagonal_only {
                for a in 0..d {
                    for b in a + 1..d {
                        g.set(a, b, self.off_diagonal(q, x, l, a, b, f0)?);
                    }
                }
            }
            levels.push(g);
        }
        let raw = PiecewisePath::new_unchecked(q.breaks().to_vec(), levels)?;
        project_monotone(raw, self.cfg.cone_tol)
    }

    fn off_diagonal(
        &self,
        q: &PiecewisePath,
        x: &[f64],
        l: usize,
        a: usize,
        b: usize,
        f0: f64,
    ) -> Result<f64> {
        let d = q.dim();
        let mut sym = SymMatrix::zeros(d);
        sym.set(a, b, 1.0);
        // ∂/∂ along E_ab + E_ba equals 2 G_ab.
        if let Some(v) = self.central_if_feasible(q, x, l, &sym)? {
            return Ok(0.5 * v);
        }
        let mut plus = vec![0.0; d];
        plus[a] = 1.0;
        plus[b] = 1.0;
        let mut minus = plus.clone();
        minus[b] = -1.0;
        let dp = self.level_derivative(q, x, l, &SymMatrix::outer(&plus), true, f0)?;
        let dm = self.level_derivative(q, x, l, &SymMatrix::outer(&minus), true, f0)?;
        Ok(0.25 * (dp - dm))
    }

    fn central_if_feasible(
        &self,
        q: &PiecewisePath,
        x: &[f64],
        l: usize,
        dir: &SymMatrix,
    ) -> Result<Option<f64>> {
        let h = self.cfg.fd_eps;
        let incs = q.increments();
        if !(run_feasible(&incs, l, l, dir, h) && run_feasible(&incs, l, l, dir, -h)) {
            return Ok(None);
        }
        let f = |s: f64| self.psi(&shift_run(q, l, l, dir, s), x);
        let d1 = (f(h)? - f(-h)?) / (2.0 * h);
        let d2 = (f(0.5 * h)? - f(-0.5 * h)?) / h;
        Ok(Some((4.0 * d2 - d1) / (3.0 * q.width(l))))
    }

    /// `G_l · P` for a direction `P`; PSD directions may fall back to one-sided
    /// stencils or to a joint perturbation of a run of levels.
    fn level_derivative(
        &self,
        q: &PiecewisePath,
        x: &[f64],
        l: usize,
        dir: &SymMatrix,
        psd_dir: bool,
        f0: f64,
    ) -> Result<f64> {
        if let Some(v) = self.central_if_feasible(q, x, l, dir)? {
            return Ok(v);
        }
        if !psd_dir {
            return Err(Error::numerical("no admissible stencil for direction", Vec::new()));
        }
        let h = self.cfg.fd_eps;
        let incs = q.increments();
        let k = q.jumps();
        let (mut lo, mut hi) = (l, l);
        loop {
            for sign in [1.0, -1.0] {
                if run_feasible(&incs, lo, hi, dir, sign * h) {
                    let width: f64 = (lo..=hi).map(|i| q.width(i)).sum();
                    let f = |s: f64| self.psi(&shift_run(q, lo, hi, dir, s), x);
                    let fd = |hh: f64| -> Result<f64> { Ok(sign * (f(sign * hh)? - f0) / hh) };
                    let (a, b, c) = (fd(h)?, fd(0.5 * h)?, fd(0.25 * h)?);
                    let r1 = 2.0 * b - a;
                    let r2 = 2.0 * c - b;
                    return Ok((4.0 * r2 - r1) / (3.0 * width));
                }
            }
            let low_blocked = !psd_after(&incs[lo], dir, -h);
            let high_blocked = hi < k && !psd_after(&incs[hi + 1], dir, -h);
            let mut grown = false;
            if low_blocked && lo > 0 {
                lo -= 1;
                grown = true;
            }
            if high_blocked && hi < k {
                hi += 1;
                grown = true;
            }
            if !grown {
                return Err(Error::numerical(
                    format!("no admissible finite-difference stencil at level {l}"),
                    Vec::new(),
                ));
            }
        }
    }

    fn check_t(&self, t: f64) -> Result<bool> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::validation("t must be finite and non-negative"));
        }
        let certified = t < self.bound.t_star;
        if !certified && !self.cfg.allow_uncertified {
            return Err(Error::validation(format!(
                "t = {t} is not below the certified threshold bound {}",
                self.bound.t_star
            )));
        }
        Ok(certified)
    }

    /// `q + t ∇ξ(p)` levelwise.
    pub fn shifted(&self, t: f64, q: &PiecewisePath, p: &PiecewisePath) -> Result<PiecewisePath> {
        let xi = self.model.xi();
        let out = q.zip_levels(p, |a, b| a + &xi.grad_sym(b).scale(t))?;
        out.validate()?;
        Ok(out)
    }

    /// Picard iteration for `p = ∇_qψ(q + t∇ξ(p); x)` on q's breakpoints.
    pub fn solve_path_fixed_point(
        &self,
        t: f64,
        q: &PiecewisePath,
        x: &[f64],
        start: Option<&PiecewisePath>,
    ) -> Result<PathFixedPointResult> {
        let certified = self.check_t(t)?;
        self.check_path(q)?;
        let mut p = match start {
            Some(p0) => {
                if p0.breaks() != q.breaks() {
                    return Err(Error::validation("start path must share q's breakpoints"));
                }
                p0.clone()
            }
            None => self.grad_q_psi(q, x)?,
        };
        let mut trace = Vec::new();
        let mut contraction: f64 = 0.0;
        let mut prev = f64::NAN;
        for it in 1..=self.cfg.max_iter {
            let next = self.grad_q_psi(&self.shifted(t, q, &p)?, x)?;
            let res = next
                .levels()
                .iter()
                .zip(p.levels())
                .map(|(a, b)| (a - b).sup_norm())
                .fold(0.0, f64::max);
            trace.push(res);
            if prev > RATIO_FLOOR {
                contraction = f64::max(contraction, res / prev);
            }
            prev = res;
            p = next;
            if res <= self.cfg.tol {
                return Ok(PathFixedPointResult {
                    p,
                    iterations: it,
                    final_residual: res,
                    contraction_estimate: contraction,
                    certified,
                    trace,
                });
            }
        }
        Err(Error::NonConvergence {
            context: "path fixed point",
            iterations: self.cfg.max_iter,
            residual: prev,
            trace,
        })
    }

    /// `f(t,q;x) = ψ(q + t∇ξ(p);x) − t∫θ(p)`.
    pub fn f_value(&self, t: f64, q: &PiecewisePath, x: &[f64]) -> Result<FValue> {
        let fp = self.solve_path_fixed_point(t, q, x, None)?;
        let f = self.psi(&self.shifted(t, q, &fp.p)?, x)?
            - t * fp.p.integral_theta_unchecked(self.model.xi());
        Ok(FValue { f, fixed_point: fp })
    }

    /// f together with `∇_x f = ∇_xψ(q + t∇ξ(p^x); x)`.
    pub fn f_with_grad_x(&self, t: f64, q: &PiecewisePath, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let fp = self.solve_path_fixed_point(t, q, x, None)?;
        let (v, g) = self.psi_with_grad_x(&self.shifted(t, q, &fp.p)?, x)?;
        Ok((v - t * fp.p.integral_theta_unchecked(self.model.xi()), g))
    }

    /// Monte Carlo estimate of ψ from sampled truncated cascades.
    pub fn rpc_mc_estimate(
        &self,
        q: &PiecewisePath,
        x: &[f64],
        seed: u64,
        n_samples: usize,
    ) -> Result<RpcEstimate> {
        self.check_mc_request(q, x, n_samples)?;
        let samples = self.rpc_samples(q, x, seed, 0..n_samples)?;
        Ok(RpcEstimate::from_samples(&samples, seed))
    }

    /// Input checks of [`Self::rpc_mc_estimate`], for callers that split the
    /// sample range themselves.
    pub fn check_mc_request(&self, q: &PiecewisePath, x: &[f64], n_samples: usize) -> Result<()> {
        self.check_path(q)?;
        self.model.check_x(x)?;
        if q.jumps() == 0 {
            return Err(Error::validation("Monte Carlo estimate needs at least one jump"));
        }
        if n_samples < 100 {
            return Err(Error::validation("at least 100 samples are required"));
        }
        if self.cfg.mc_truncation == 0 {
            return Err(Error::config("cascade truncation must be positive"));
        }
        Ok(())
    }

    /// Per-sample values `−log Σ_α v_α A_α` for the given sample indices.
    /// Each index owns its own random stream, so any split of the index range
    /// reproduces the same values.
    pub fn rpc_samples(
        &self,
        q: &PiecewisePath,
        x: &[f64],
        seed: u64,
        range: core::ops::Range<usize>,
    ) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(range.len());
        match self.model.structure() {
            Structure::Vector(site) => {
                let plan = McPlan::new(site, q, x, self.cfg.mc_truncation)?;
                for i in range {
                    out.push(-plan.sample(seed, i as u64, 0));
                }
            }
            Structure::Multitype(species) => {
                let offsets = self.model.species_offsets();
                let mut plans = Vec::new();
                for (s, sp) in species.iter().enumerate() {
                    let ds = sp.site.mattis_dim();
                    let qs = species_path(q, s)?;
                    plans.push(McPlan::new(
                        &sp.site,
                        &qs,
                        &x[offsets[s]..offsets[s] + ds],
                        self.cfg.mc_truncation,
                    )?);
                }
                for i in range {
                    let mut v = 0.0;
                    for (s, plan) in plans.iter().enumerate() {
                        v -= species[s].weight * plan.sample(seed, i as u64, s as u64);
                    }
                    out.push(v);
                }
            }
        }
        Ok(out)
    }
}

fn species_path(q: &PiecewisePath, s: usize) -> Result<PiecewisePath> {
    PiecewisePath::new(
        q.breaks().to_vec(),
        q.levels().iter().map(|m| SymMatrix::diag(&[m.get(s, s)])).collect(),
    )
}

fn psd_after(inc: &SymMatrix, dir: &SymMatrix, s: f64) -> bool {
    (inc + &dir.scale(s)).min_eigenvalue() >= -FEASIBLE_TOL
}

/// Whether adding `s·dir` to levels `lo..=hi` keeps the path monotone.
fn run_feasible(incs: &[SymMatrix], lo: usize, hi: usize, dir: &SymMatrix, s: f64) -> bool {
    let first_ok = psd_after(&incs[lo], dir, s);
    let last_ok = hi + 1 >= incs.len() || psd_after(&incs[hi + 1], dir, -s);
    first_ok && last_ok
}

fn shift_run(q: &PiecewisePath, lo: usize, hi: usize, dir: &SymMatrix, s: f64) -> PiecewisePath {
    let mut p = q.clone();
    for l in lo..=hi {
        let v = &p.levels()[l] + &dir.scale(s);
        p.levels_mut()[l] = v;
    }
    p
}

/// Projects small monotone-cone violations; larger ones are errors.
fn project_monotone(p: PiecewisePath, tol: f64) -> Result<PiecewisePath> {
    let incs = p.increments();
    let worst = incs
        .iter()
        .map(|m| m.min_eigenvalue())
        .fold(f64::INFINITY, f64::min);
    if worst >= -PSD_TOL {
        return Ok(p);
    }
    if worst < -tol {
        return Err(Error::numerical(
            format!("gradient path leaves the monotone cone by {:e}", -worst),
            incs.iter().map(|m| m.min_eigenvalue()).collect(),
        ));
    }
    let mut acc = SymMatrix::zeros(p.dim());
    let mut levels = Vec::with_capacity(incs.len());
    for inc in &incs {
        acc = &acc + &inc.project_psd();
        levels.push(acc.clone());
    }
    PiecewisePath::new(p.breaks().to_vec(), levels)
}

/// Nested quadrature for one site model.
struct Nest<'k> {
    kernel: SiteKernel,
    rule: &'k TensorRule,
    /// `√2 · √δ_l`, row-major, per level.
    roots: Vec<Vec<f64>>,
    zero: Vec<bool>,
    zetas: Vec<f64>,
    want_grad: bool,
}

impl Nest<'_> {
    fn level(&self, l: usize, k: usize, u: &[f64], grad_out: &mut [f64]) -> f64 {
        let d = self.kernel.d;
        let dm = self.kernel.dm;
        let last = l + 1 == self.roots.len();
        let nn = if self.zero[l] { 1 } else { self.rule.len() };
        let mut u2 = vec![0.0; d];
        let mut child = vec![0.0; dm];
        let mut sc = self.kernel.scratch();
        let zeta = self.zetas[l];
        let mut terms = Vec::new();
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        grad_out.iter_mut().for_each(|v| *v = 0.0);
        if l == 0 {
            terms.reserve(nn);
        }
        for n in 0..nn {
            let w = if self.zero[l] {
                1.0
            } else {
                let eta = self.rule.point(n);
                let r = &self.roots[l];
                for a in 0..d {
                    let mut s = u[a];
                    for b in 0..d {
                        s += r[a * d + b] * eta[b];
                    }
                    u2[a] = s;
                }
                self.rule.weights[n]
            };
            if self.zero[l] {
                u2.copy_from_slice(u);
            }
            let y = if last {
                if self.want_grad {
                    let br = self.kernel.bracket(k, &u2, true, &mut sc);
                    child.copy_from_slice(br.h);
                    br.log_z
                } else {
                    self.kernel.log_z(k, &u2)
                }
            } else {
                self.level(l + 1, k, &u2, &mut child)
            };
            if l == 0 {
                terms.push(w * y);
                if self.want_grad {
                    for i in 0..dm {
                        grad_out[i] += w * child[i];
                    }
                }
            } else {
                let e = log(w) + zeta * y;
                if e > max {
                    let scale = exp(max - e);
                    sum = sum * scale + 1.0;
                    if self.want_grad {
                        for i in 0..dm {
                            grad_out[i] = grad_out[i] * scale + child[i];
                        }
                    }
                    max = e;
                } else {
                    let p = exp(e - max);
                    sum += p;
                    if self.want_grad {
                        for i in 0..dm {
                            grad_out[i] += p * child[i];
                        }
                    }
                }
            }
        }
        if l == 0 {
            return pairwise_sum(&terms);
        }
        if self.want_grad {
            grad_out.iter_mut().for_each(|v| *v /= sum);
        }
        (max + log(sum)) / zeta
    }
}

fn site_psi(
    site: &SiteModel,
    rule: &TensorRule,
    q: &PiecewisePath,
    x: &[f64],
    want_grad: bool,
) -> Result<(f64, Vec<f64>)> {
    let d = site.spin_dim();
    let dm = site.mattis_dim();
    let incs = q.increments();
    let mut roots = Vec::with_capacity(incs.len());
    let mut zero = Vec::with_capacity(incs.len());
    for inc in &incs {
        let r = inc.sqrt_psd()?.scale(core::f64::consts::SQRT_2);
        zero.push(r.sup_norm() == 0.0);
        roots.push(r.to_dense());
    }
    let mut zetas = vec![0.0];
    zetas.extend_from_slice(&q.breaks()[1..]);
    let nest = Nest {
        kernel: SiteKernel::new(site, q.terminal(), x),
        rule,
        roots,
        zero,
        zetas,
        want_grad,
    };
    let u0 = vec![0.0; d];
    let mut g = vec![0.0; dm];
    let mut vals = Vec::with_capacity(nest.kernel.nk);
    let mut grad = vec![0.0; dm];
    for k in 0..nest.kernel.nk {
        let vk = nest.kernel.pattern_w[k];
        vals.push(vk * nest.level(0, k, &u0, &mut g));
        for i in 0..dm {
            grad[i] -= vk * g[i];
        }
    }
    let value = -pairwise_sum(&vals);
    if !value.is_finite() {
        return Err(Error::numerical("psi evaluated to a non-finite value", Vec::new()));
    }
    Ok((value, grad))
}

/// Sampling plan for the truncated cascade of one site model.
struct McPlan {
    kernel: SiteKernel,
    /// Row-major `√2 √δ` for the root level and each active cascade level.
    root0: Vec<f64>,
    levels: Vec<(f64, Vec<f64>)>,
    pattern_cdf: Vec<f64>,
    truncation: usize,
}

impl McPlan {
    fn new(site: &SiteModel, q: &PiecewisePath, x: &[f64], truncation: usize) -> Result<Self> {
        let incs = q.increments();
        let root = |m: &SymMatrix| -> Result<Vec<f64>> {
            Ok(m.sqrt_psd()?.scale(core::f64::consts::SQRT_2).to_dense())
        };
        let mut levels = Vec::new();
        for l in 1..incs.len() {
            if incs[l].sup_norm() == 0.0 {
                continue;
            }
            levels.push((q.breaks()[l], root(&incs[l])?));
        }
        let mut acc = 0.0;
        let pattern_cdf = site
            .pattern
            .weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(McPlan {
            kernel: SiteKernel::new(site, q.terminal(), x),
            root0: root(&incs[0])?,
            levels,
            pattern_cdf,
            truncation,
        })
    }

    /// `log Σ_α v_α A_α` for one sample.
    fn sample(&self, seed: u64, index: u64, stream_hi: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stream_hi.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        rng.set_stream(index);
        let d = self.kernel.d;
        let uc: f64 = rng.random();
        let k = self
            .pattern_cdf
            .iter()
            .position(|&c| uc < c)
            .unwrap_or(self.pattern_cdf.len() - 1);
        let mut u = vec![0.0; d];
        add_gaussian(&mut rng, &self.root0, &mut u);
        let mut num = LogSumExp::new();
        let mut den = LogSumExp::new();
        self.descend(&mut rng, 0, k, &u, 0.0, &mut num, &mut den);
        num.value() - den.value()
    }

    #[allow(clippy::too_many_arguments)]
    fn descend(
        &self,
        rng: &mut ChaCha8Rng,
        l: usize,
        k: usize,
        u: &[f64],
        log_w: f64,
        num: &mut LogSumExp,
        den: &mut LogSumExp,
    ) {
        if l == self.levels.len() {
            num.push(log_w + self.kernel.log_z(k, u));
            den.push(log_w);
            return;
        }
        let (zeta, root) = &self.levels[l];
        let mut gamma = 0.0;
        let mut child = vec![0.0; u.len()];
        for _ in 0..self.truncation {
            let e: f64 = rng.sample(Exp1);
            gamma += e;
            child.copy_from_slice(u);
            add_gaussian(rng, root, &mut child);
            let lw = -log(gamma) / zeta;
            self.descend(rng, l + 1, k, &child, log_w + lw, num, den);
        }
    }
}

fn add_gaussian(rng: &mut ChaCha8Rng, root: &[f64], u: &mut [f64]) {
    let d = u.len();
    let mut eta = [0.0f64; 8];
    let mut heap;
    let buf: &mut [f64] = if d <= 8 {
        &mut eta[..d]
    } else {
        heap = vec![0.0; d];
        &mut heap
    };
    for v in buf.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    for a in 0..d {
        let mut s = 0.0;
        for b in 0..d {
            s += root[a * d + b] * buf[b];
        }
        u[a] += s;
    }
}

/// ψ at the default configuration.
pub fn psi(model: &ModelSpec, q: &PiecewisePath, x: &[f64]) -> Result<f64> {
    CascadeEngine::new(model, CascadeConfig::default())?.psi(q, x)
}

pub fn grad_q_psi(model: &ModelSpec, q: &PiecewisePath, x: &[f64]) -> Result<PiecewisePath> {
    CascadeEngine::new(model, CascadeConfig::default())?.grad_q_psi(q, x)
}

pub fn solve_path_fixed_point(
    model: &ModelSpec,
    t: f64,
    q: &PiecewisePath,
    x: &[f64],
) -> Result<PathFixedPointResult> {
    CascadeEngine::new(model, CascadeConfig::default())?.solve_path_fixed_point(t, q, x, None)
}

pub fn f_value(model: &ModelSpec, t: f64, q: &PiecewisePath, x: &[f64]) -> Result<f64> {
    Ok(CascadeEngine::new(model, CascadeConfig::default())?
        .f_value(t, q, x)?
        .f)
}

pub fn rpc_mc_estimate(
    model: &ModelSpec,
    q: &PiecewisePath,
    x: &[f64],
    seed: u64,
    n_samples: usize,
) -> Result<RpcEstimate> {
    CascadeEngine::new(model, CascadeConfig::default())?.rpc_mc_estimate(q, x, seed, n_samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rs::{RsConfig, RsEngine};

    fn small() -> CascadeConfig {
        CascadeConfig {
            quad_order: 16,
            ..CascadeConfig::default()
        }
    }

    #[test]
    fn constant_path_matches_phi() {
        let m = ModelSpec::rbm();
        let y = SymMatrix::from_rows(&[vec![0.3, 0.05], vec![0.05, 0.2]]).unwrap();
        let x = [0.4, -0.3];
        let rs = RsEngine::new(&m, RsConfig::default()).unwrap();
        let ce = CascadeEngine::new(&m, CascadeConfig::default()).unwrap();
        let a = rs.phi(&y, &x).unwrap();
        let b = ce.psi(&PiecewisePath::constant(y), &x).unwrap();
        assert!((a - b).abs() < 1e-12, "{a} {b}");
    }

    #[test]
    fn zero_path_zero_field() {
        let m = ModelSpec::rbm();
        assert_eq!(psi(&m, &PiecewisePath::zero(2), &[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn zero_increment_is_invisible() {
        let m = ModelSpec::rbm();
        let ce = CascadeEngine::new(&m, small()).unwrap();
        let y = SymMatrix::diag(&[0.2, 0.1]);
        let q = PiecewisePath::constant(y.clone());
        let q2 = q.refine(0.4);
        let x = [0.5, 0.2];
        let a = ce.psi(&q, &x).unwrap();
        let b = ce.psi(&q2, &x).unwrap();
        assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn capacity_limit() {
        let m = ModelSpec::rbm();
        let mut q = PiecewisePath::constant(SymMatrix::zeros(2));
        for s in [0.1, 0.2, 0.3, 0.4] {
            q = q.refine(s);
        }
        assert!(matches!(psi(&m, &q, &[0.0, 0.0]), Err(Error::Capacity(_))));
    }

    #[test]
    fn grad_x_matches_finite_differences() {
        let m = ModelSpec::rbm();
        let ce = CascadeEngine::new(&m, small()).unwrap();
        let q = PiecewisePath::new(
            vec![0.0, 0.5],
            vec![SymMatrix::diag(&[0.1, 0.1]), SymMatrix::diag(&[0.3, 0.25])],
        )
        .unwrap();
        let x = [0.5, 0.3];
        let (_, g) = ce.psi_with_grad_x(&q, &x).unwrap();
        let h = 1e-5;
        for i in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (ce.psi(&q, &xp).unwrap() - ce.psi(&q, &xm).unwrap()) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8, "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn mc_is_deterministic() {
        let m = ModelSpec::rbm();
        let ce = CascadeEngine::new(
            &m,
            CascadeConfig {
                mc_truncation: 50,
                ..small()
            },
        )
        .unwrap();
        let q = PiecewisePath::new(
            vec![0.0, 0.5],
            vec![SymMatrix::diag(&[0.1, 0.1]), SymMatrix::diag(&[0.3, 0.3])],
        )
        .unwrap();
        let a = ce.rpc_mc_estimate(&q, &[0.5, 0.5], 7, 200).unwrap();
        let b = ce.rpc_mc_estimate(&q, &[0.5, 0.5], 7, 200).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert!(ce.rpc_mc_estimate(&q, &[0.5, 0.5], 7, 99).is_err());
        let split = [
            ce.rpc_samples(&q, &[0.5, 0.5], 7, 0..120).unwrap(),
            ce.rpc_samples(&q, &[0.5, 0.5], 7, 120..200).unwrap(),
        ]
        .concat();
        let whole = ce.rpc_samples(&q, &[0.5, 0.5], 7, 0..200).unwrap();
        assert_eq!(split, whole);
    }

    #[test]
    fn multitype_matches_vector_rbm() {
        let v = ModelSpec::rbm();
        let mt = ModelSpec::rbm_multitype();
        let q = PiecewisePath::new(
            vec![0.0, 0.6],
            vec![SymMatrix::diag(&[0.1, 0.05]), SymMatrix::diag(&[0.2, 0.3])],
        )
        .unwrap();
        let x = [0.4, 0.7];
        let a = CascadeEngine::new(&v, small()).unwrap().psi(&q, &x).unwrap();
        let b = CascadeEngine::new(&mt, small()).unwrap().psi(&q, &x).unwrap();
        assert!((0.5 * a - b).abs() < 1e-12, "{a} {b}");
    }
}
