//! Closed-form route for the bipartite ±1 model with ξ(a) = a₁₁a₂₂ and
//! Rademacher patterns: one-dimensional quadrature, the two-component fixed
//! point z = ∇_yφ(t(z₂,z₁);x), and the rate function J.

use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, fabs, log1p, sqrt, tanh};

use crate::error::{Error, Result};
use crate::expr::GFunction;
use crate::ldp::{ConcaveField, FStar, LdpConfig, LdpEngine, LfeResult, MDomain};
use crate::numeric::pairwise_sum;
use crate::quadrature::GaussHermite;

fn log_cosh(u: f64) -> f64 {
    let a = fabs(u);
    a + log1p(exp(-2.0 * a)) - core::f64::consts::LN_2
}

/// `g(t, 0; x)` for the bipartite model, computed without the general engine.
#[derive(Debug, Clone)]
pub struct RbmField {
    t: f64,
    gh: GaussHermite,
    tol: f64,
    max_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbmPhi {
    pub value: f64,
    pub grad_y: [f64; 2],
    pub grad_x: [f64; 2],
}

impl RbmField {
    pub fn new(t: f64, quad_order: usize, tol: f64) -> Result<Self> {
        if !(0.0..0.0625).contains(&t) {
            return Err(Error::validation("t must lie in [0, 1/16)"));
        }
        Ok(RbmField {
            t,
            gh: GaussHermite::new(quad_order)?,
            tol,
            max_iter: 10_000,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// `φ(y;x) = Σᵢ (−E log cosh(√(2yᵢ)η + xᵢχ) + yᵢ)` and its gradients
    /// `∂_{yᵢ}φ = E tanh²(·)`, `∂_{xᵢ}φ = −E tanh(·)` (χ symmetric).
    pub fn phi(&self, y: [f64; 2], x: &[f64]) -> RbmPhi {
        let mut out = RbmPhi {
            value: 0.0,
            grad_y: [0.0; 2],
            grad_x: [0.0; 2],
        };
        for i in 0..2 {
            let a = sqrt(2.0 * y[i].max(0.0));
            let (mut lc, mut t2, mut t1) = (Vec::new(), Vec::new(), Vec::new());
            for (n, w) in self.gh.nodes.iter().zip(&self.gh.weights) {
                let u = a * n + x[i];
                let th = tanh(u);
                lc.push(w * log_cosh(u));
                t2.push(w * th * th);
                t1.push(w * th);
            }
            out.value += y[i] - pairwise_sum(&lc);
            out.grad_y[i] = pairwise_sum(&t2);
            out.grad_x[i] = -pairwise_sum(&t1);
        }
        out
    }

    /// Fixed point `z = ∇_yφ(t(z₂,z₁);x)` from `z₀ = ∇_yφ(0;x)`.
    pub fn fixed_point(&self, x: &[f64], start: Option<[f64; 2]>) -> Result<([f64; 2], usize)> {
        let mut z = start.unwrap_or_else(|| self.phi([0.0, 0.0], x).grad_y);
        for it in 1..=self.max_iter {
            let next = self.phi([self.t * z[1], self.t * z[0]], x).grad_y;
            let res = fabs(next[0] - z[0]).max(fabs(next[1] - z[1]));
            z = next;
            if res <= self.tol {
                return Ok((z, it));
            }
        }
        Err(Error::NonConvergence {
            context: "bipartite fixed point",
            iterations: self.max_iter,
            residual: f64::NAN,
            trace: Vec::new(),
        })
    }

    /// `g(t,0;x) = φ(t(z₂,z₁);x) − t z₁z₂` and `∇_x g`.
    pub fn g(&self, x: &[f64], start: Option<[f64; 2]>) -> Result<(f64, [f64; 2], [f64; 2])> {
        let (z, _) = self.fixed_point(x, start)?;
        let p = self.phi([self.t * z[1], self.t * z[0]], x);
        Ok((p.value - self.t * z[0] * z[1], p.grad_x, z))
    }
}

impl ConcaveField for RbmField {
    fn dim(&self) -> usize {
        2
    }

    fn value_grad(&self, x: &[f64], warm: &mut Option<Vec<f64>>) -> Result<(f64, Vec<f64>)> {
        let start = warm.as_ref().map(|z| [z[0], z[1]]);
        let (v, gx, z) = self.g(x, start)?;
        *warm = Some(vec![z[0], z[1]]);
        Ok((v, gx.to_vec()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbmReport {
    pub beta: f64,
    pub t: f64,
    /// `inf_m sup_x {g(t,0;x) + m·x − (m₁+m₂)} − β²/2`.
    pub limit_free_energy: f64,
    pub argmin: Vec<f64>,
    /// `(m, J(m))` rows.
    pub j_table: Vec<(Vec<f64>, f64)>,
}

/// Engine over the closed-form field on the square `[−1,1]²`.
pub fn rbm_engine(beta: f64, cfg: LdpConfig) -> Result<LdpEngine<RbmField>> {
    let field = RbmField::new(0.5 * beta * beta, cfg.quad_order, cfg.inner_tol)?;
    LdpEngine::new(
        field,
        MDomain::boxed(vec![-1.0, -1.0], vec![1.0, 1.0], cfg.hull_dilation),
        cfg,
    )
}

pub fn magnetization_sum() -> GFunction {
    GFunction::parse("m1 + m2").expect("static expression")
}

/// Limit free energy and the J table on `grid`.
pub fn rbm_report(beta: f64, grid: &[Vec<f64>], cfg: LdpConfig) -> Result<RbmReport> {
    let engine = rbm_engine(beta, cfg)?;
    let g = magnetization_sum();
    let lfe = engine.limit_free_energy(&g)?;
    let rows = grid
        .iter()
        .map(|m| Ok((m.clone(), engine.f_star(m)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble_report(beta, &engine, &lfe, rows))
}

/// `J(m) = −(m₁+m₂) + g*(m) + sup_{m'} {m'₁+m'₂ − g*(m')}`.
pub fn assemble_report(
    beta: f64,
    engine: &LdpEngine<RbmField>,
    lfe: &LfeResult,
    rows: Vec<(Vec<f64>, FStar)>,
) -> RbmReport {
    let t = engine.field().t();
    let sup = -lfe.value;
    RbmReport {
        beta,
        t,
        limit_free_energy: lfe.value - t,
        argmin: lfe.argmin.clone(),
        j_table: rows
            .into_iter()
            .map(|(m, fs)| {
                let j = -(m[0] + m[1]) + fs.value + sup;
                (m, j)
            })
            .collect(),
    }
}

/// `−2 log cosh 1`, the β = 0 value.
pub fn beta_zero_free_energy() -> f64 {
    -2.0 * log_cosh(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_zero_anchor() {
        let r = rbm_report(0.0, &[vec![0.0, 0.0]], LdpConfig::default()).unwrap();
        assert!((r.limit_free_energy - beta_zero_free_energy()).abs() < 1e-9);
        // J(0) = 2 log cosh 1 at β = 0.
        assert!((r.j_table[0].1 + beta_zero_free_energy()).abs() < 1e-9);
    }

    #[test]
    fn matches_general_engine_phi() {
        let m = crate::model::ModelSpec::rbm();
        let f = RbmField::new(0.03, 41, 1e-12).unwrap();
        let y = [0.2, 0.05];
        let x = [0.3, -0.7];
        let a = f.phi(y, &x);
        let b = crate::rs::phi(&m, &crate::linalg::SymMatrix::diag(&y), &x).unwrap();
        assert!((a.value - b).abs() < 1e-12, "{} {b}", a.value);
    }
}
