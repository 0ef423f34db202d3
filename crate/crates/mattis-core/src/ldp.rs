//! Legendre transform f*, the inf-sup limit free energy, rate functions, the
//! limiting cumulant generating function and the standard-model wrapper.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::cascade::{CascadeConfig, CascadeEngine};
use crate::error::{Error, Result};
use crate::expr::{Expr, GFunction};
use crate::linalg::SymMatrix;
use crate::model::{ModelSpec, SiteModel, Structure};
use crate::numeric::{dot, norm2};
use crate::optim::{bb_ascent, hull_distance, nelder_mead};
use crate::path::PiecewisePath;
use crate::rs::{RsConfig, RsEngine};

/// Candidate-vertex budget for the Minkowski-average domain.
pub const MAX_HULL_CANDIDATES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdpConfig {
    pub quad_order: usize,
    /// Tolerance of the inner fixed point behind f(t,q;x).
    pub inner_tol: f64,
    pub grad_tol: f64,
    pub max_ascent_iter: usize,
    /// Grid points per axis for the coarse scan over the m-domain.
    pub grid_per_axis: usize,
    pub simplex_tol: f64,
    pub max_simplex_iter: usize,
    pub hull_dilation: f64,
    pub allow_uncertified: bool,
}

impl Default for LdpConfig {
    fn default() -> Self {
        LdpConfig {
            quad_order: crate::quadrature::DEFAULT_ORDER,
            inner_tol: 1e-12,
            grad_tol: 1e-9,
            max_ascent_iter: 500,
            grid_per_axis: 21,
            simplex_tol: 1e-7,
            max_simplex_iter: 20_000,
            hull_dilation: 1e-6,
            allow_uncertified: false,
        }
    }
}

/// Concave objective `x ↦ f(t,q;x)` with its x-gradient.
pub trait ConcaveField: Sync {
    fn dim(&self) -> usize;
    /// `warm` carries solver state between nearby evaluations; implementations
    /// may ignore it.
    fn value_grad(&self, x: &[f64], warm: &mut Option<Vec<f64>>) -> Result<(f64, Vec<f64>)>;
}

/// `f(t,q;·)` of an enriched model.
#[derive(Debug, Clone)]
pub struct EnrichedField<'a> {
    model: &'a ModelSpec,
    t: f64,
    q: PiecewisePath,
    rs: RsEngine<'a>,
    cascade: CascadeEngine<'a>,
}

impl<'a> EnrichedField<'a> {
    pub fn new(model: &'a ModelSpec, t: f64, q: PiecewisePath, cfg: &LdpConfig) -> Result<Self> {
        if q.dim() != model.spin_dim() {
            return Err(Error::validation("path dimension does not match the model"));
        }
        q.validate()?;
        let rs = RsEngine::new(
            model,
            RsConfig {
                quad_order: cfg.quad_order,
                tol: cfg.inner_tol,
                allow_uncertified: cfg.allow_uncertified,
                ..RsConfig::default()
            },
        )?;
        let cascade = CascadeEngine::new(
            model,
            CascadeConfig {
                quad_order: cfg.quad_order,
                allow_uncertified: cfg.allow_uncertified,
                ..CascadeConfig::default()
            },
        )?;
        let bound = model.t_star_lower_bound().t_star;
        if !(t >= 0.0) || (!(t < bound) && !cfg.allow_uncertified) {
            return Err(Error::validation(format!(
                "t = {t} is not in [0, {bound}) where the fixed point is certified"
            )));
        }
        Ok(EnrichedField {
            model,
            t,
            q,
            rs,
            cascade,
        })
    }

    pub fn model(&self) -> &ModelSpec {
        self.model
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn q(&self) -> &PiecewisePath {
        &self.q
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.value_grad(x, &mut None)?.0)
    }
}

impl ConcaveField for EnrichedField<'_> {
    fn dim(&self) -> usize {
        self.model.mattis_dim()
    }

    fn value_grad(&self, x: &[f64], warm: &mut Option<Vec<f64>>) -> Result<(f64, Vec<f64>)> {
        if self.q.jumps() > 0 {
            return self.cascade.f_with_grad_x(self.t, &self.q, x);
        }
        let y = &self.q.levels()[0];
        let d = y.dim();
        let start = warm.as_ref().map(|z| SymMatrix::symmetrize(d, z));
        let fp = self.rs.solve_fixed_point(self.t, y, x, start.as_ref())?;
        let e = self.rs.grad_phi(&self.rs.shifted(self.t, y, &fp.z), x)?;
        *warm = Some(fp.z.to_dense());
        Ok((e.value - self.t * self.model.xi().theta(&fp.z), e.grad_x))
    }
}

/// Closed convex set on which f* is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct MDomain {
    pub vertices: Vec<Vec<f64>>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub dilation: f64,
    /// False when the candidate budget forced the coarser atom hull.
    pub minkowski: bool,
}

fn dedup_points(mut pts: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    pts.sort_by(|a, b| {
        for (x, y) in a.iter().zip(b) {
            let c = x.total_cmp(y);
            if c != core::cmp::Ordering::Equal {
                return c;
            }
        }
        core::cmp::Ordering::Equal
    });
    pts.dedup_by(|a, b| a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= 1e-12));
    pts
}

impl MDomain {
    /// Minkowski average of the per-pattern hulls of `h(τ, χ_k)` (per species
    /// and scaled by the species weight in multitype mode).
    pub fn from_model(model: &ModelSpec, dilation: f64) -> Result<Self> {
        let dm = model.mattis_dim();
        let mut components: Vec<Vec<Vec<f64>>> = Vec::new();
        let push_site = |site: &SiteModel, scale: f64, offset: usize, comps: &mut Vec<Vec<Vec<f64>>>| {
            for (k, &v) in site.pattern.weights.iter().enumerate() {
                let pts = (0..site.spin.len())
                    .map(|j| {
                        let mut p = vec![0.0; dm];
                        for (i, h) in site.mattis_map[j][k].iter().enumerate() {
                            p[offset + i] = scale * v * h;
                        }
                        p
                    })
                    .collect();
                comps.push(dedup_points(pts));
            }
        };
        match model.structure() {
            Structure::Vector(site) => push_site(site, 1.0, 0, &mut components),
            Structure::Multitype(species) => {
                let offs = model.species_offsets();
                for (s, sp) in species.iter().enumerate() {
                    push_site(&sp.site, sp.weight, offs[s], &mut components);
                }
            }
        }
        let mut acc = vec![vec![0.0; dm]];
        let mut minkowski = true;
        for comp in &components {
            if acc.len() * comp.len() > MAX_HULL_CANDIDATES {
                minkowski = false;
                break;
            }
            let mut next = Vec::with_capacity(acc.len() * comp.len());
            for a in &acc {
                for c in comp {
                    next.push(a.iter().zip(c).map(|(x, y)| x + y).collect());
                }
            }
            acc = dedup_points(next);
        }
        if !minkowski {
            match model.structure() {
                Structure::Vector(site) => {
                    acc = dedup_points(
                        site.mattis_map.iter().flat_map(|row| row.iter().cloned()).collect(),
                    );
                }
                Structure::Multitype(_) => {
                    return Err(Error::Capacity(
                        "m-domain vertex enumeration exceeds its budget".into(),
                    ))
                }
            }
        }
        if acc.is_empty() {
            return Err(Error::validation("empty m-domain"));
        }
        let mut lo = vec![f64::INFINITY; dm];
        let mut hi = vec![f64::NEG_INFINITY; dm];
        for p in &acc {
            for i in 0..dm {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        Ok(MDomain {
            vertices: acc,
            lo,
            hi,
            dilation,
            minkowski,
        })
    }

    /// Axis-aligned box `[lo, hi]`, used for closed-form models.
    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>, dilation: f64) -> Self {
        let d = lo.len();
        let mut vertices = Vec::with_capacity(1 << d);
        for mask in 0..(1usize << d) {
            vertices.push((0..d).map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] }).collect());
        }
        MDomain {
            vertices,
            lo,
            hi,
            dilation,
            minkowski: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn distance(&self, m: &[f64]) -> f64 {
        hull_distance(&self.vertices, m)
    }

    pub fn contains(&self, m: &[f64]) -> bool {
        m.len() == self.dim() && self.distance(m) <= self.dilation
    }

    /// Cell-centred grid over the bounding box restricted to the domain.
    /// Cell centres keep the scan off the boundary, where f* is finite but
    /// its supremum is only approached as |x| → ∞.
    pub fn grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        let n = per_axis.max(1);
        let total = n.pow(d as u32);
        let mut out = Vec::new();
        for mut k in 0..total {
            let mut p = vec![0.0; d];
            for i in 0..d {
                let frac = ((k % n) as f64 + 0.5) / n as f64;
                p[i] = self.lo[i] + frac * (self.hi[i] - self.lo[i]);
                k /= n;
            }
            if self.contains(&p) {
                out.push(p);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FStar {
    pub value: f64,
    pub argmax: Vec<f64>,
    /// `|m + ∇_x f|` at the returned point.
    pub grad_norm: f64,
    pub iterations: usize,
    /// False when m lies outside the domain (value = +∞).
    pub in_domain: bool,
    /// False when the ascent budget ran out, e.g. on the domain boundary.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LfeResult {
    pub value: f64,
    pub argmin: Vec<f64>,
    pub f_star: FStar,
    pub simplex_iterations: usize,
    pub simplex_diameter: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatePoint {
    pub m: Vec<f64>,
    pub f_star: f64,
    pub argmax: Vec<f64>,
    pub rate: f64,
    /// Marks the row holding the minimizer m*.
    pub is_minimizer: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub g: String,
    pub points: Vec<RatePoint>,
    pub m_star: Vec<f64>,
    pub limit_free_energy: f64,
    /// `sup_m' {G(m') − f*(m')}`, equal to minus the limit free energy.
    pub normalization: f64,
}

impl RateTable {
    /// Assembles the table from precomputed f* values.
    pub fn from_parts(g: &GFunction, lfe: &LfeResult, rows: Vec<(Vec<f64>, FStar)>) -> Self {
        let normalization = -lfe.value;
        let mut points: Vec<RatePoint> = rows
            .into_iter()
            .map(|(m, fs)| RatePoint {
                rate: fs.value - g.eval(&m) + normalization,
                f_star: fs.value,
                argmax: fs.argmax,
                m,
                is_minimizer: false,
            })
            .collect();
        points.push(RatePoint {
            m: lfe.argmin.clone(),
            f_star: lfe.f_star.value,
            argmax: lfe.f_star.argmax.clone(),
            rate: lfe.f_star.value - g.eval(&lfe.argmin) + normalization,
            is_minimizer: true,
        });
        RateTable {
            g: String::from(g.source()),
            points,
            m_star: lfe.argmin.clone(),
            limit_free_energy: lfe.value,
            normalization,
        }
    }

    pub fn min_rate(&self) -> f64 {
        self.points.iter().map(|p| p.rate).fold(f64::INFINITY, f64::min)
    }
}

/// Legendre-transform and inf-sup machinery over any concave field.
pub struct LdpEngine<F: ConcaveField> {
    field: F,
    domain: MDomain,
    cfg: LdpConfig,
}

impl<'a> LdpEngine<EnrichedField<'a>> {
    /// Engine for `f(t,q;·)` of `model`.
    pub fn enriched(model: &'a ModelSpec, t: f64, q: PiecewisePath, cfg: LdpConfig) -> Result<Self> {
        let field = EnrichedField::new(model, t, q, &cfg)?;
        let domain = MDomain::from_model(model, cfg.hull_dilation)?;
        Ok(LdpEngine { field, domain, cfg })
    }
}

impl<F: ConcaveField> LdpEngine<F> {
    pub fn new(field: F, domain: MDomain, cfg: LdpConfig) -> Result<Self> {
        if field.dim() != domain.dim() {
            return Err(Error::validation("domain and field dimensions differ"));
        }
        Ok(LdpEngine { field, domain, cfg })
    }

    pub fn field(&self) -> &F {
        &self.field
    }

    pub fn domain(&self) -> &MDomain {
        &self.domain
    }

    pub fn config(&self) -> &LdpConfig {
        &self.cfg
    }

    /// `f*(m) = sup_x {x·m + f(x)}`, starting the ascent at `x0` (0 if absent).
    pub fn f_star_from(&self, m: &[f64], x0: Option<&[f64]>) -> Result<FStar> {
        let d = self.field.dim();
        if m.len() != d {
            return Err(Error::validation("m has the wrong dimension"));
        }
        if !self.domain.contains(m) {
            return Ok(FStar {
                value: f64::INFINITY,
                argmax: Vec::new(),
                grad_norm: f64::NAN,
                iterations: 0,
                in_domain: false,
                converged: true,
            });
        }
        let zero = vec![0.0; d];
        let mut warm = None;
        let res = bb_ascent(
            |x| {
                let (v, g) = self.field.value_grad(x, &mut warm)?;
                Ok((dot(x, m) + v, g.iter().zip(m).map(|(a, b)| a + b).collect()))
            },
            x0.unwrap_or(&zero),
            self.cfg.grad_tol,
            self.cfg.max_ascent_iter,
        )?;
        Ok(FStar {
            value: res.value,
            argmax: res.x,
            grad_norm: res.grad_norm,
            iterations: res.iterations,
            in_domain: true,
            converged: res.converged,
        })
    }

    pub fn f_star(&self, m: &[f64]) -> Result<FStar> {
        self.f_star_from(m, None)
    }

    /// Grid points used by the coarse scan.
    pub fn scan_points(&self) -> Vec<Vec<f64>> {
        self.domain.grid(self.cfg.grid_per_axis)
    }

    fn grid_step(&self) -> f64 {
        let n = self.cfg.grid_per_axis.max(1) as f64;
        self.domain
            .lo
            .iter()
            .zip(&self.domain.hi)
            .map(|(a, b)| (b - a) / n)
            .fold(0.0, f64::max)
            .max(1e-3)
    }

    /// Nelder–Mead refinement of `inf_m {f*(m) − G(m)}` from a scan point.
    pub fn refine(&self, g: &GFunction, start: &[f64], start_x: Option<&[f64]>) -> Result<LfeResult> {
        g.check_dim(self.domain.dim())?;
        let mut warm: Option<Vec<f64>> = start_x.map(|x| x.to_vec());
        let res = nelder_mead(
            |m| {
                if !self.domain.contains(m) {
                    return Ok(f64::INFINITY);
                }
                let fs = self.f_star_from(m, warm.as_deref())?;
                if fs.converged {
                    warm = Some(fs.argmax.clone());
                }
                Ok(fs.value - g.eval(m))
            },
            start,
            0.5 * self.grid_step(),
            self.cfg.simplex_tol,
            self.cfg.max_simplex_iter,
        )?;
        let fs = self.f_star_from(&res.x, warm.as_deref())?;
        if !res.converged {
            return Err(Error::NonConvergence {
                context: "simplex refinement of the limit free energy",
                iterations: res.iterations,
                residual: res.diameter,
                trace: Vec::new(),
            });
        }
        Ok(LfeResult {
            value: fs.value - g.eval(&res.x),
            argmin: res.x,
            f_star: fs,
            simplex_iterations: res.iterations,
            simplex_diameter: res.diameter,
        })
    }

    /// Picks the best scan point from precomputed f* values and refines it.
    pub fn finish_scan(&self, g: &GFunction, scan: &[(Vec<f64>, FStar)]) -> Result<LfeResult> {
        let mut best: Option<(f64, usize)> = None;
        for (i, (m, fs)) in scan.iter().enumerate() {
            let v = fs.value - g.eval(m);
            if v.is_finite() && best.map_or(true, |(b, _)| v < b) {
                best = Some((v, i));
            }
        }
        let (_, i) = best.ok_or_else(|| Error::validation("no finite point in the m-domain scan"))?;
        self.refine(g, &scan[i].0, Some(&scan[i].1.argmax))
    }

    /// `inf_m sup_x {f(x) + m·x − G(m)} = inf_m {f*(m) − G(m)}`.
    pub fn limit_free_energy(&self, g: &GFunction) -> Result<LfeResult> {
        g.check_dim(self.domain.dim())?;
        let scan = self.scan_f_star(&self.scan_points())?;
        self.finish_scan(g, &scan)
    }

    fn scan_f_star(&self, pts: &[Vec<f64>]) -> Result<Vec<(Vec<f64>, FStar)>> {
        pts.iter()
            .map(|m| Ok((m.clone(), self.f_star(m)?)))
            .collect()
    }

    /// RateTable on `grid` with `I^G(m) = −G(m) + f*(m) + sup{G − f*}`.
    pub fn rate_function(&self, g: &GFunction, grid: &[Vec<f64>]) -> Result<RateTable> {
        let lfe = self.limit_free_energy(g)?;
        let rows = self.scan_f_star(grid)?;
        Ok(RateTable::from_parts(g, &lfe, rows))
    }

    /// `Λ(y) = lim (1/N) log⟨e^{N y·m}⟩` under the Gibbs measure with functional G:
    /// `LFE(G) − LFE(G + y·m)`. For affine G = c + x₀·m this is `f(x₀) − f(x₀ + y)`.
    pub fn cgf_lambda(&self, g: &GFunction, y: &[f64]) -> Result<f64> {
        let d = self.field.dim();
        if y.len() != d {
            return Err(Error::validation("tilt has the wrong dimension"));
        }
        if norm2(y) == 0.0 {
            return Ok(0.0);
        }
        if let Some((_, x0)) = g.affine(d) {
            let shifted: Vec<f64> = x0.iter().zip(y).map(|(a, b)| a + b).collect();
            let a = self.field.value_grad(&x0, &mut None)?.0;
            let b = self.field.value_grad(&shifted, &mut None)?.0;
            return Ok(a - b);
        }
        Ok(self.limit_free_energy(g)?.value - self.limit_free_energy(&g.tilted(y))?.value)
    }
}

/// The original Mattis model at inverse temperature β written as an enriched
/// model with `t = β²/2`, `q = 0̂` and the corrected functional G̃.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedModel {
    pub base: ModelSpec,
    pub beta: f64,
    pub g: GFunction,
    pub t: f64,
    pub q: PiecewisePath,
    pub g_tilde: GFunction,
    pub constant_self_overlap: bool,
    /// `t ξ(r̄)` when the self-overlap is constant, else 0.
    pub shift: f64,
    /// Model carrying the magnetization the G̃ descriptor is written in:
    /// the base model, or the base model with `ττᵀ` appended to `h`.
    pub working: ModelSpec,
}

impl StandardizedModel {
    pub fn extended_dim(&self) -> usize {
        self.working.mattis_dim()
    }

    /// Limit of the standard model's free energy.
    pub fn limit_free_energy(&self, cfg: LdpConfig) -> Result<LfeResult> {
        LdpEngine::enriched(&self.working, self.t, self.q.clone(), cfg)?.limit_free_energy(&self.g_tilde)
    }
}

/// Common self-overlap `diag(ττᵀ)` when it is the same for every spin atom.
fn common_self_overlap(model: &ModelSpec) -> Option<SymMatrix> {
    let same = |atoms: &[Vec<f64>]| -> Option<Vec<f64>> {
        let first: Vec<f64> = atoms.first()?.iter().map(|v| v * v).collect();
        atoms
            .iter()
            .all(|a| a.iter().zip(&first).all(|(v, f)| (v * v - f).abs() <= 1e-12))
            .then_some(first)
    };
    match model.structure() {
        Structure::Vector(site) => same(&site.spin.atoms).map(|d| SymMatrix::diag(&d)),
        Structure::Multitype(species) => {
            let mut d = Vec::new();
            for sp in species {
                d.push(same(&sp.site.spin.atoms)?[0]);
            }
            Some(SymMatrix::diag(&d))
        }
    }
}

pub fn standardize_model(base: &ModelSpec, beta: f64, g: GFunction) -> Result<StandardizedModel> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::validation("beta must be finite and non-negative"));
    }
    g.check_dim(base.mattis_dim())?;
    let t = 0.5 * beta * beta;
    let d = base.spin_dim();
    let q = PiecewisePath::zero(d);
    let xi = base.xi();
    if let (true, Some(r)) = (xi.depends_only_on_diagonal(), common_self_overlap(base)) {
        let shift = t * xi.value(&r);
        return Ok(StandardizedModel {
            base: base.clone(),
            beta,
            g_tilde: if shift == 0.0 { g.clone() } else { g.shifted(shift) },
            g,
            t,
            q,
            constant_self_overlap: true,
            shift,
            working: base.clone(),
        });
    }
    let site = match base.structure() {
        Structure::Vector(site) => site,
        Structure::Multitype(_) => {
            return Err(Error::Capability(
                "multitype models with varying self-overlap cannot be standardized".into(),
            ))
        }
    };
    let dm = site.mattis_dim();
    let mut ext = site.clone();
    for (j, row) in ext.mattis_map.iter_mut().enumerate() {
        let tau = &site.spin.atoms[j];
        for h in row.iter_mut() {
            for a in 0..d {
                for b in a..d {
                    h.push(tau[a] * tau[b]);
                }
            }
        }
    }
    let upper_index = |a: usize, b: usize| -> usize {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        dm + a * d - a * (a + 1) / 2 + b
    };
    let mut xi_r = Expr::Num(0.0);
    for (k, term) in xi.terms().iter().enumerate() {
        let mut e = Expr::Num(t * term.coeff);
        for (a, b, p) in xi.term_factors(k) {
            e = Expr::Mul(
                alloc::boxed::Box::new(e),
                alloc::boxed::Box::new(Expr::Pow(
                    alloc::boxed::Box::new(Expr::Var(upper_index(a, b))),
                    p as i32,
                )),
            );
        }
        xi_r = xi_r.plus(e);
    }
    let working = ModelSpec::vector(ext, xi.clone())?;
    Ok(StandardizedModel {
        base: base.clone(),
        beta,
        g_tilde: g.plus_expr(xi_r, "t*xi(r)"),
        g,
        t,
        q,
        constant_self_overlap: false,
        shift: 0.0,
        working,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use libm::{atanh, cosh, log, tanh};

    #[test]
    fn rbm_domain_is_square() {
        let m = ModelSpec::rbm();
        let d = MDomain::from_model(&m, 1e-6).unwrap();
        assert_eq!(d.lo, vec![-1.0, -1.0]);
        assert_eq!(d.hi, vec![1.0, 1.0]);
        assert!(d.contains(&[1.0, -1.0]));
        assert!(!d.contains(&[1.01, 0.0]));
    }

    #[test]
    fn f_star_at_time_zero() {
        let m = ModelSpec::rbm();
        let e = LdpEngine::enriched(&m, 0.0, PiecewisePath::zero(2), LdpConfig::default()).unwrap();
        let fs = e.f_star(&[0.0, 0.0]).unwrap();
        assert!(fs.value.abs() < 1e-15 && norm2(&fs.argmax) < 1e-12);
        let th = tanh(1.0);
        let fs = e.f_star(&[th, 0.0]).unwrap();
        let want = th * atanh(th) - log(cosh(1.0));
        assert!((fs.value - want).abs() < 1e-12, "{} {want}", fs.value);
        assert!(!e.f_star(&[1.5, 0.0]).unwrap().in_domain);
    }

    #[test]
    fn standardize_rbm() {
        let m = ModelSpec::rbm();
        let s = standardize_model(&m, 0.2, GFunction::parse("m1 + m2").unwrap()).unwrap();
        assert!((s.t - 0.02).abs() < 1e-16);
        assert!(s.constant_self_overlap);
        assert!((s.shift - 0.02).abs() < 1e-16);
        let id = standardize_model(&m, 0.0, GFunction::parse("m1 + m2").unwrap()).unwrap();
        assert_eq!(id.g_tilde, id.g);
    }
}
