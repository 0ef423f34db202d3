//! Exact finite-N enumeration for sampled disorder at constant paths.
//!
//! For a sample `(J, χ, η)` the enumerated weight of a configuration
//! `σ = (τ_{j_1}, …, τ_{j_N})` is
//!
//! ```text
//! N G(m) + √(2t) H_N(σ) − N t ξ(R) + Σ_i ( ln w_{j_i} + √2 (√y η_i)·τ_{j_i} − y·τ_{j_i}τ_{j_i}ᵀ )
//! ```
//!
//! with `m = N⁻¹ Σ_i h(τ_{j_i}, χ_i)` and `R = N⁻¹ Σ_i τ_{j_i}τ_{j_i}ᵀ`. Standard
//! specs drop the `−N t ξ(R)` correction (it cancels against G̃).

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use libm::{log, pow, sqrt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::expr::GFunction;
use crate::ldp::StandardizedModel;
use crate::linalg::SymMatrix;
use crate::model::{ModelSpec, SiteModel, Structure};
use crate::numeric::{mean_stderr, powi, LogSumExp};
use crate::xi::XiPoly;

/// Largest number of enumerated configurations.
pub const ENUMERATION_BUDGET: u64 = 1 << 24;
/// Full recomputation period of the incremental energy.
const REFRESH: u64 = 4096;
/// Slack on the closed ball in `empirical_ldp`.
pub const BALL_SLACK: f64 = 1e-12;

/// What the oracle enumerates.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSpec {
    pub model: ModelSpec,
    pub t: f64,
    pub g: GFunction,
    pub y: SymMatrix,
    /// Drop the `−N t ξ(R)` correction (standard model at q = 0̂).
    pub standard: bool,
}

impl OracleSpec {
    pub fn enriched(model: ModelSpec, t: f64, y: SymMatrix, g: GFunction) -> Result<Self> {
        let s = OracleSpec {
            model,
            t,
            g,
            y,
            standard: false,
        };
        s.check()?;
        Ok(s)
    }

    /// The original model `N G(m) + β H_N(σ)` behind a standardized model.
    pub fn standard(std: &StandardizedModel) -> Result<Self> {
        let s = OracleSpec {
            model: std.base.clone(),
            t: std.t,
            g: std.g.clone(),
            y: SymMatrix::zeros(std.base.spin_dim()),
            standard: true,
        };
        s.check()?;
        Ok(s)
    }

    fn site(&self) -> Result<&SiteModel> {
        match self.model.structure() {
            Structure::Vector(s) => Ok(s),
            Structure::Multitype(_) => Err(Error::Capability(
                "the enumeration oracle supports vector-mode models only".into(),
            )),
        }
    }

    fn check(&self) -> Result<()> {
        self.site()?;
        if !(self.t >= 0.0 && self.t.is_finite()) {
            return Err(Error::validation("t must be finite and non-negative"));
        }
        if self.y.dim() != self.model.spin_dim() || !self.y.is_psd() {
            return Err(Error::validation("y must be a PSD matrix of the spin dimension"));
        }
        self.g.check_dim(self.model.mattis_dim())?;
        realize(self.model.xi())?;
        Ok(())
    }
}

/// A ξ monomial realized as `scale · Σ_{i_1..i_p} J_{i_1..i_p} Π_r σ_{c_r, i_r}`.
#[derive(Debug, Clone, PartialEq)]
struct MonoPlan {
    sqrt_coeff: f64,
    coords: Vec<usize>,
}

fn realize(xi: &XiPoly) -> Result<Vec<MonoPlan>> {
    let mut plans = Vec::new();
    for (k, term) in xi.terms().iter().enumerate() {
        if term.coeff < 0.0 {
            return Err(Error::Capability(format!(
                "ξ monomial #{k} has negative coefficient {}; not realizable as a Gaussian field",
                term.coeff
            )));
        }
        let mut coords = Vec::new();
        for (a, b, p) in xi.term_factors(k) {
            if a != b {
                return Err(Error::Capability(format!(
                    "ξ monomial #{k} uses off-diagonal entry a{}{}; not realizable as a product form",
                    a + 1,
                    b + 1
                )));
            }
            coords.extend(core::iter::repeat(a).take(p as usize));
        }
        if coords.is_empty() {
            return Err(Error::Capability(format!(
                "ξ monomial #{k} is constant; a constant covariance has no product realization"
            )));
        }
        if term.coeff > 0.0 {
            plans.push(MonoPlan {
                sqrt_coeff: sqrt(term.coeff),
                coords,
            });
        }
    }
    Ok(plans)
}

/// One disorder realization.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderSample {
    pub seed: u64,
    pub index: u64,
    pub n: usize,
    /// Row-major `N^p` Gaussian tensor per realized ξ monomial.
    pub couplings: Vec<Vec<f64>>,
    /// Pattern atom index per site.
    pub patterns: Vec<usize>,
    /// Standard Gaussian field vector per site.
    pub eta: Vec<Vec<f64>>,
}

fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn draw_index(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Draws sample `index` of the stream family `seed`.
pub fn draw_sample(spec: &OracleSpec, n: usize, seed: u64, index: u64) -> Result<DisorderSample> {
    let site = spec.site()?;
    let plans = realize(spec.model.xi())?;
    let mut rng = sample_rng(seed, index);
    let couplings = plans
        .iter()
        .map(|p| {
            (0..n.pow(p.coords.len() as u32))
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let patterns = (0..n).map(|_| draw_index(&mut rng, &site.pattern.weights)).collect();
    let d = site.spin_dim();
    let eta = (0..n)
        .map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    Ok(DisorderSample {
        seed,
        index,
        n,
        couplings,
        patterns,
        eta,
    })
}

/// Observables accumulated in one enumeration pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Enumeration {
    /// `log E_{P₁^{⊗N}} exp(energy)`.
    pub log_z: f64,
    /// `log E exp(energy + N y·m)` per tilt.
    pub tilted: Vec<f64>,
    /// Log-weight of configurations with `|m − m₀| ≤ δ`; `−∞` when none.
    pub ball: Option<f64>,
    pub states: u64,
}

impl Enumeration {
    pub fn free_energy(&self, n: usize) -> f64 {
        -self.log_z / n as f64
    }
}

/// Ball `{m : |m − center| ≤ radius}` for probability estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

struct Plan<'a> {
    n: usize,
    site: &'a SiteModel,
    spec: &'a OracleSpec,
    monos: Vec<MonoPlan>,
    scales: Vec<f64>,
    /// `b[i][j]`: per-site single-spin log-weight.
    b: Vec<Vec<f64>>,
    /// `h[i][j]`: Mattis vector at site i for atom j.
    h: Vec<Vec<Vec<f64>>>,
    sqrt_2t: f64,
}

fn xi_dense(xi: &XiPoly, r: &[f64]) -> f64 {
    let d = xi.dim();
    let mut total = 0.0;
    for (k, term) in xi.terms().iter().enumerate() {
        let mut v = term.coeff;
        for (a, b, p) in xi.term_factors(k) {
            v *= powi(r[a * d + b], p);
        }
        total += v;
    }
    total
}

impl<'a> Plan<'a> {
    fn new(spec: &'a OracleSpec, sample: &DisorderSample) -> Result<Self> {
        let site = spec.site()?;
        let n = sample.n;
        if n == 0 {
            return Err(Error::validation("N must be positive"));
        }
        let nj = site.spin.len() as u64;
        let states = (nj as f64).powi(n as i32);
        if states > ENUMERATION_BUDGET as f64 {
            return Err(Error::Capacity(format!(
                "{nj}^{n} configurations exceed the enumeration budget 2^24"
            )));
        }
        let monos = realize(spec.model.xi())?;
        if sample.couplings.len() != monos.len() {
            return Err(Error::validation("sample does not match the model's ξ"));
        }
        let scales = monos
            .iter()
            .map(|m| m.sqrt_coeff * pow(n as f64, -0.5 * (m.coords.len() as f64 - 1.0)))
            .collect();
        let d = site.spin_dim();
        let root = spec.y.sqrt_psd()?;
        let mut b = Vec::with_capacity(n);
        let mut h = Vec::with_capacity(n);
        for i in 0..n {
            let field: Vec<f64> = root
                .mul_vec(&sample.eta[i])
                .iter()
                .map(|v| core::f64::consts::SQRT_2 * v)
                .collect();
            let k = sample.patterns[i];
            let mut bi = Vec::with_capacity(site.spin.len());
            let mut hi = Vec::with_capacity(site.spin.len());
            for (j, tau) in site.spin.atoms.iter().enumerate() {
                let lin: f64 = (0..d).map(|a| field[a] * tau[a]).sum();
                bi.push(log(site.spin.weights[j]) + lin - spec.y.quad_form(tau));
                hi.push(site.mattis_map[j][k].clone());
            }
            b.push(bi);
            h.push(hi);
        }
        Ok(Plan {
            n,
            site,
            spec,
            monos,
            scales,
            b,
            h,
            sqrt_2t: sqrt(2.0 * spec.t),
        })
    }

    /// `H_N` from scratch for spin values `s[c][i]`.
    fn hamiltonian(&self, sample: &DisorderSample, s: &[Vec<f64>]) -> f64 {
        let n = self.n;
        let mut total = 0.0;
        for (m, (mono, scale)) in self.monos.iter().zip(&self.scales).enumerate() {
            let p = mono.coords.len();
            let jt = &sample.couplings[m];
            let mut idx = vec![0usize; p];
            let mut acc = 0.0;
            for flat in 0..jt.len() {
                let mut rem = flat;
                for r in (0..p).rev() {
                    idx[r] = rem % n;
                    rem /= n;
                }
                let mut prod = jt[flat];
                for r in 0..p {
                    prod *= s[mono.coords[r]][idx[r]];
                }
                acc += prod;
            }
            total += scale * acc;
        }
        total
    }

    /// Change of `H_N` when site `i` moves to spin values `new` (per coordinate).
    fn delta_h(&self, sample: &DisorderSample, s: &[Vec<f64>], i: usize, new: &[f64]) -> f64 {
        let n = self.n;
        let mut total = 0.0;
        for (m, (mono, scale)) in self.monos.iter().zip(&self.scales).enumerate() {
            let p = mono.coords.len();
            let jt = &sample.couplings[m];
            let c = &mono.coords;
            let acc = match p {
                1 => jt[i] * (new[c[0]] - s[c[0]][i]),
                2 => {
                    let (d0, d1) = (new[c[0]] - s[c[0]][i], new[c[1]] - s[c[1]][i]);
                    let mut row = 0.0;
                    let mut col = 0.0;
                    for k in 0..n {
                        if k != i {
                            row += jt[i * n + k] * s[c[1]][k];
                            col += jt[k * n + i] * s[c[0]][k];
                        }
                    }
                    d0 * row
                        + d1 * col
                        + jt[i * n + i] * (new[c[0]] * new[c[1]] - s[c[0]][i] * s[c[1]][i])
                }
                _ => {
                    // Tuples containing i, indexed by the first position holding i.
                    let mut acc = 0.0;
                    let mut idx = vec![0usize; p];
                    for first in 0..p {
                        let free_before = first;
                        let free_after = p - first - 1;
                        let count = (n - 1).pow(free_before as u32) * n.pow(free_after as u32);
                        for mut code in 0..count {
                            for r in (first + 1..p).rev() {
                                idx[r] = code % n;
                                code /= n;
                            }
                            for r in (0..first).rev() {
                                let v = code % (n - 1);
                                code /= n - 1;
                                idx[r] = if v >= i { v + 1 } else { v };
                            }
                            idx[first] = i;
                            let mut flat = 0;
                            for &v in idx.iter() {
                                flat = flat * n + v;
                            }
                            let mut old = jt[flat];
                            let mut fresh = jt[flat];
                            for r in 0..p {
                                let cur = s[c[r]][idx[r]];
                                old *= cur;
                                fresh *= if idx[r] == i { new[c[r]] } else { cur };
                            }
                            acc += fresh - old;
                        }
                    }
                    acc
                }
            };
            total += scale * acc;
        }
        total
    }

    fn run(&self, sample: &DisorderSample, tilts: &[Vec<f64>], ball: Option<&Ball>) -> Enumeration {
        let n = self.n;
        let nf = n as f64;
        let site = self.site;
        let d = site.spin_dim();
        let dm = site.mattis_dim();
        let nj = site.spin.len();
        let xi = self.spec.model.xi();
        let correction = !self.spec.standard && self.spec.t > 0.0;
        let mut a = vec![0usize; n];
        let mut s: Vec<Vec<f64>> = (0..d)
            .map(|c| vec![site.spin.atoms[0][c]; n])
            .collect();
        let mut m_sum = vec![0.0; dm];
        let mut r_sum = vec![0.0; d * d];
        let mut b_sum = 0.0;
        let mut hval = 0.0;
        let refresh = |a: &[usize], s: &[Vec<f64>], m_sum: &mut Vec<f64>, r_sum: &mut Vec<f64>, b_sum: &mut f64, hval: &mut f64| {
            m_sum.iter_mut().for_each(|v| *v = 0.0);
            r_sum.iter_mut().for_each(|v| *v = 0.0);
            *b_sum = 0.0;
            for i in 0..n {
                let j = a[i];
                for (acc, v) in m_sum.iter_mut().zip(&self.h[i][j]) {
                    *acc += v;
                }
                let tau = &site.spin.atoms[j];
                for p in 0..d {
                    for q in 0..d {
                        r_sum[p * d + q] += tau[p] * tau[q];
                    }
                }
                *b_sum += self.b[i][j];
            }
            *hval = self.hamiltonian(sample, s);
        };
        refresh(&a, &s, &mut m_sum, &mut r_sum, &mut b_sum, &mut hval);

        let mut main = LogSumExp::new();
        let mut tilted: Vec<LogSumExp> = tilts.iter().map(|_| LogSumExp::new()).collect();
        let mut inside = LogSumExp::new();
        let mut any_inside = false;
        let mut m = vec![0.0; dm];
        let mut r = vec![0.0; d * d];
        let mut newv = vec![0.0; d];
        // Loopless reflected Gray code over radix-nj digits.
        let mut f: Vec<usize> = (0..=n).collect();
        let mut o = vec![1i64; n];
        let mut count: u64 = 0;
        loop {
            for k in 0..dm {
                m[k] = m_sum[k] / nf;
            }
            let mut energy = nf * self.spec.g.eval(&m) + self.sqrt_2t * hval + b_sum;
            if correction {
                for k in 0..d * d {
                    r[k] = r_sum[k] / nf;
                }
                energy -= nf * self.spec.t * xi_dense(xi, &r);
            }
            main.push(energy);
            for (acc, y) in tilted.iter_mut().zip(tilts) {
                let dotp: f64 = y.iter().zip(&m).map(|(u, v)| u * v).sum();
                acc.push(energy + nf * dotp);
            }
            if let Some(bl) = ball {
                let dist2: f64 = m.iter().zip(&bl.center).map(|(u, v)| (u - v) * (u - v)).sum();
                if sqrt(dist2) <= bl.radius + BALL_SLACK {
                    inside.push(energy);
                    any_inside = true;
                }
            }
            count += 1;
            if nj == 1 {
                break;
            }
            let j = f[0];
            f[0] = 0;
            if j == n {
                break;
            }
            let old = a[j];
            let new = (a[j] as i64 + o[j]) as usize;
            a[j] = new;
            if new == 0 || new == nj - 1 {
                o[j] = -o[j];
                f[j] = f[j + 1];
                f[j + 1] = j + 1;
            }
            let tau_new = &site.spin.atoms[new];
            newv.copy_from_slice(tau_new);
            if count % REFRESH == 0 {
                for c in 0..d {
                    s[c][j] = newv[c];
                }
                refresh(&a, &s, &mut m_sum, &mut r_sum, &mut b_sum, &mut hval);
                continue;
            }
            hval += self.delta_h(sample, &s, j, &newv);
            for c in 0..d {
                s[c][j] = newv[c];
            }
            for k in 0..dm {
                m_sum[k] += self.h[j][new][k] - self.h[j][old][k];
            }
            let tau_old = &site.spin.atoms[old];
            for p in 0..d {
                for q in 0..d {
                    r_sum[p * d + q] += tau_new[p] * tau_new[q] - tau_old[p] * tau_old[q];
                }
            }
            b_sum += self.b[j][new] - self.b[j][old];
        }
        let log_z = main.value();
        Enumeration {
            log_z,
            tilted: tilted.iter().map(|t| t.value()).collect(),
            ball: ball.map(|_| if any_inside { inside.value() } else { f64::NEG_INFINITY }),
            states: count,
        }
    }
}

/// Enumerates all configurations for one disorder sample.
pub fn enumerate(
    spec: &OracleSpec,
    sample: &DisorderSample,
    tilts: &[Vec<f64>],
    ball: Option<&Ball>,
) -> Result<Enumeration> {
    let dm = spec.model.mattis_dim();
    if tilts.iter().any(|y| y.len() != dm) {
        return Err(Error::validation("tilt has the wrong dimension"));
    }
    if let Some(b) = ball {
        if b.center.len() != dm || !(b.radius >= 0.0) {
            return Err(Error::validation("ball centre or radius is invalid"));
        }
    }
    Ok(Plan::new(spec, sample)?.run(sample, tilts, ball))
}

/// `F_N` for the sample with stream index 0.
pub fn finite_n_free_energy(spec: &OracleSpec, n: usize, seed: u64) -> Result<f64> {
    sample_free_energy(spec, n, seed, 0)
}

pub fn sample_free_energy(spec: &OracleSpec, n: usize, seed: u64, index: u64) -> Result<f64> {
    let s = draw_sample(spec, n, seed, index)?;
    Ok(enumerate(spec, &s, &[], None)?.free_energy(n))
}

/// `(1/N) log⟨e^{N y·m}⟩` per tilt for one sample.
pub fn sample_cgf(spec: &OracleSpec, n: usize, tilts: &[Vec<f64>], seed: u64, index: u64) -> Result<Vec<f64>> {
    let s = draw_sample(spec, n, seed, index)?;
    let e = enumerate(spec, &s, tilts, None)?;
    Ok(e.tilted.iter().map(|v| (v - e.log_z) / n as f64).collect())
}

/// `−(1/N) log⟨1{m ∈ ball}⟩` for one sample (`+∞` if the ball is empty).
pub fn sample_ldp(spec: &OracleSpec, n: usize, ball: &Ball, seed: u64, index: u64) -> Result<f64> {
    let s = draw_sample(spec, n, seed, index)?;
    let e = enumerate(spec, &s, &[], Some(ball))?;
    let inside = e.ball.unwrap_or(f64::NEG_INFINITY);
    Ok(if inside == f64::NEG_INFINITY {
        f64::INFINITY
    } else {
        -(inside - e.log_z) / n as f64
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleStats {
    pub mean: f64,
    /// Unbiased sample standard deviation over √n.
    pub stderr: f64,
    pub n_samples: usize,
    pub values: Vec<f64>,
    /// Samples with value `+∞` (excluded from mean and stderr).
    pub infinite: usize,
}

impl OracleStats {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::validation("at least two samples are required"));
        }
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        let infinite = values.len() - finite.len();
        let (mean, stderr) = if finite.len() >= 2 {
            mean_stderr(&finite)
        } else {
            (f64::INFINITY, f64::NAN)
        };
        Ok(OracleStats {
            mean,
            stderr,
            n_samples: values.len(),
            values,
            infinite,
        })
    }
}

pub fn disorder_stats(spec: &OracleSpec, n: usize, n_samples: usize, seed: u64) -> Result<OracleStats> {
    let values = (0..n_samples as u64)
        .map(|i| sample_free_energy(spec, n, seed, i))
        .collect::<Result<Vec<_>>>()?;
    OracleStats::from_values(values)
}

/// Empirical CGF for several tilts from one enumeration per sample.
pub fn empirical_cgf(
    spec: &OracleSpec,
    n: usize,
    tilts: &[Vec<f64>],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<OracleStats>> {
    let per: Vec<Vec<f64>> = (0..n_samples as u64)
        .map(|i| sample_cgf(spec, n, tilts, seed, i))
        .collect::<Result<_>>()?;
    (0..tilts.len())
        .map(|k| OracleStats::from_values(per.iter().map(|v| v[k]).collect()))
        .collect()
}

pub fn empirical_ldp(
    spec: &OracleSpec,
    n: usize,
    ball: &Ball,
    n_samples: usize,
    seed: u64,
) -> Result<OracleStats> {
    let values = (0..n_samples as u64)
        .map(|i| sample_ldp(spec, n, ball, seed, i))
        .collect::<Result<Vec<_>>>()?;
    OracleStats::from_values(values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEntry {
    pub label: String,
    pub empirical: f64,
    pub stderr: f64,
    pub predicted: f64,
}

impl CovarianceEntry {
    pub fn z_score(&self) -> f64 {
        (self.empirical - self.predicted) / self.stderr
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceAudit {
    pub n: usize,
    pub draws: usize,
    pub entries: Vec<CovarianceEntry>,
}

impl CovarianceAudit {
    pub fn max_abs_z(&self) -> f64 {
        self.entries.iter().map(|e| e.z_score().abs()).fold(0.0, f64::max)
    }
}

/// Empirical second moments of `H_N` at two fixed configurations over fresh
/// coupling draws, against `N ξ(σσ′ᵀ/N)`.
pub fn covariance_audit(model: &ModelSpec, n: usize, draws: usize, seed: u64) -> Result<CovarianceAudit> {
    let spec = OracleSpec::enriched(
        model.clone(),
        0.0,
        SymMatrix::zeros(model.spin_dim()),
        GFunction::zero(),
    )?;
    let site = spec.site()?;
    if draws < 2 {
        return Err(Error::validation("at least two draws are required"));
    }
    let d = site.spin_dim();
    let mut pick = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_C0DE_0000_0001);
    let configs: [Vec<usize>; 2] = [
        (0..n).map(|_| draw_index(&mut pick, &site.spin.weights)).collect(),
        (0..n).map(|_| draw_index(&mut pick, &site.spin.weights)).collect(),
    ];
    let spins: Vec<Vec<Vec<f64>>> = configs
        .iter()
        .map(|c| (0..d).map(|a| c.iter().map(|&j| site.spin.atoms[j][a]).collect()).collect())
        .collect();
    let mut products = [Vec::new(), Vec::new(), Vec::new()];
    for k in 0..draws as u64 {
        let sample = draw_sample(&spec, n, seed, k)?;
        let plan = Plan::new(&spec, &sample)?;
        let h0 = plan.hamiltonian(&sample, &spins[0]);
        let h1 = plan.hamiltonian(&sample, &spins[1]);
        products[0].push(h0 * h0);
        products[1].push(h0 * h1);
        products[2].push(h1 * h1);
    }
    let overlap = |u: usize, v: usize| -> Vec<f64> {
        let mut r = vec![0.0; d * d];
        for a in 0..d {
            for b in 0..d {
                r[a * d + b] = (0..n).map(|i| spins[u][a][i] * spins[v][b][i]).sum::<f64>() / n as f64;
            }
        }
        r
    };
    let labels = [("sigma,sigma", 0, 0), ("sigma,sigma'", 0, 1), ("sigma',sigma'", 1, 1)];
    let entries = labels
        .iter()
        .zip(products.iter())
        .map(|(&(label, u, v), p)| {
            let (mean, se) = mean_stderr(p);
            CovarianceEntry {
                label: String::from(label),
                empirical: mean,
                stderr: se,
                predicted: n as f64 * model.xi().eval_dense(&overlap(u, v)).value,
            }
        })
        .collect();
    Ok(CovarianceAudit { n, draws, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use libm::{cosh, exp};

    fn rbm_spec(t: f64) -> OracleSpec {
        OracleSpec::enriched(
            ModelSpec::rbm(),
            t,
            SymMatrix::zeros(2),
            GFunction::parse("m1 + m2").unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn beta_zero_is_closed_form() {
        let want = -2.0 * log(cosh(1.0));
        for n in [1, 3, 5] {
            let f = finite_n_free_energy(&rbm_spec(0.0), n, 11).unwrap();
            assert!((f - want).abs() < 1e-12, "{n}: {f}");
        }
    }

    #[test]
    fn n_one_matches_direct_sum() {
        let spec = rbm_spec(0.03);
        let s = draw_sample(&spec, 1, 5, 3).unwrap();
        let e = enumerate(&spec, &s, &[], None).unwrap();
        let w = s.couplings[0][0];
        let chi = [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]][s.patterns[0]];
        let mut terms = Vec::new();
        for s1 in [-1.0, 1.0] {
            for s2 in [-1.0, 1.0] {
                terms.push(0.25 * exp(sqrt(0.06) * w * s1 * s2 - 0.03 + chi[0] * s1 + chi[1] * s2));
            }
        }
        let direct = -log(terms.iter().sum::<f64>());
        assert!((e.free_energy(1) - direct).abs() < 1e-14);
    }

    #[test]
    fn rejects_unrealizable() {
        let xi = XiPoly::from_terms(2, &[(1.0, &[(0, 1, 2)])]).unwrap();
        let atoms: Vec<Vec<f64>> = [[0.5, 0.5], [0.5, -0.5], [-0.5, 0.5], [-0.5, -0.5]]
            .iter()
            .map(|a| a.to_vec())
            .collect();
        let site = SiteModel {
            spin: crate::model::DiscreteMeasure::uniform(atoms.clone()),
            pattern: crate::model::DiscreteMeasure::uniform(vec![vec![1.0]]),
            mattis_map: atoms.iter().map(|a| vec![a.clone()]).collect(),
        };
        let m = ModelSpec::vector(site, xi).unwrap();
        let r = OracleSpec::enriched(m, 0.01, SymMatrix::zeros(2), GFunction::zero());
        assert!(matches!(r, Err(Error::Capability(_))));
    }

    #[test]
    fn incremental_matches_scratch_for_cubic() {
        let xi = XiPoly::from_terms(2, &[(0.5, &[(0, 0, 2), (1, 1, 1)]), (0.25, &[(1, 1, 1)])]).unwrap();
        let site = match ModelSpec::rbm().structure() {
            Structure::Vector(s) => s.clone(),
            _ => unreachable!(),
        };
        let m = ModelSpec::vector(site, xi).unwrap();
        let spec = OracleSpec::enriched(m, 0.02, SymMatrix::diag(&[0.1, 0.2]), GFunction::parse("m1*m2").unwrap()).unwrap();
        let s = draw_sample(&spec, 4, 9, 0).unwrap();
        let plan = Plan::new(&spec, &s).unwrap();
        let e = plan.run(&s, &[], None);
        // Brute force over all 4^4 configurations.
        let atoms = [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]];
        let mut acc = LogSumExp::new();
        for code in 0..256usize {
            let js: Vec<usize> = (0..4).map(|i| (code >> (2 * i)) & 3).collect();
            let spins: Vec<Vec<f64>> = (0..2).map(|c| js.iter().map(|&j| atoms[j][c]).collect()).collect();
            let h = plan.hamiltonian(&s, &spins);
            let mut msum = [0.0; 2];
            let mut r = [0.0; 4];
            let mut b = 0.0;
            for (i, &j) in js.iter().enumerate() {
                msum[0] += plan.h[i][j][0];
                msum[1] += plan.h[i][j][1];
                for p in 0..2 {
                    for q in 0..2 {
                        r[p * 2 + q] += atoms[j][p] * atoms[j][q] / 4.0;
                    }
                }
                b += plan.b[i][j];
            }
            let m = [msum[0] / 4.0, msum[1] / 4.0];
            acc.push(4.0 * m[0] * m[1] + sqrt(0.04) * h - 4.0 * 0.02 * xi_dense(spec.model.xi(), &r) + b);
        }
        assert_eq!(e.states, 256);
        assert!((acc.value() - e.log_z).abs() < 1e-12, "{} {}", acc.value(), e.log_z);
    }
}
