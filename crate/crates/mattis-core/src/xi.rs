//! Polynomial interaction functions ξ on D×D matrices.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use libm::{fabs, sqrt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::numeric::powi;

const ROUND_GUARD: f64 = 1e-13;

/// `c · Π a_ij^{e_ij}` with a row-major exponent matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    pub exponents: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "XiRaw", into = "XiRaw")]
pub struct XiPoly {
    dim: usize,
    terms: Vec<Monomial>,
    /// Non-zero exponents per term as `(flat entry index, power)`.
    factors: Vec<Vec<(usize, u32)>>,
}

#[derive(Serialize, Deserialize)]
struct XiRaw {
    dim: usize,
    terms: Vec<Monomial>,
}

impl TryFrom<XiRaw> for XiPoly {
    type Error = Error;
    fn try_from(r: XiRaw) -> Result<Self> {
        XiPoly::new(r.dim, r.terms)
    }
}

impl From<XiPoly> for XiRaw {
    fn from(x: XiPoly) -> Self {
        XiRaw {
            dim: x.dim,
            terms: x.terms,
        }
    }
}

/// ξ(a), its gradient over all D² entries (row-major) and θ(a) = a·∇ξ(a) − ξ(a).
#[derive(Debug, Clone, PartialEq)]
pub struct XiEval {
    pub value: f64,
    pub grad: Vec<f64>,
    pub theta: f64,
}

/// Certified lower bound on the contraction threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TStarBound {
    /// `(16 K)^{-1}` (or the multitype analogue); `+inf` when unbounded.
    pub t_star: f64,
    /// Certified upper bound `K` on the Lipschitz constant of ∇ξ.
    pub lipschitz: f64,
    /// Largest Hessian operator norm actually observed on sample points (diagnostic only).
    pub sampled_lipschitz: f64,
    pub unbounded: bool,
}

impl TStarBound {
    /// `β = √(2 t)`.
    pub fn beta(&self) -> f64 {
        sqrt(2.0 * self.t_star)
    }
}

/// Region over which ∇ξ must be Lipschitz.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// Frobenius unit ball of D×D matrices.
    Ball,
    /// Cube `[-1, 1]` in every variable.
    Cube,
}

impl XiPoly {
    pub fn new(dim: usize, terms: Vec<Monomial>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::validation("xi dimension must be at least 1"));
        }
        let mut factors = Vec::with_capacity(terms.len());
        for (t, m) in terms.iter().enumerate() {
            if !m.coeff.is_finite() {
                return Err(Error::validation(format!("xi term {t} has non-finite coefficient")));
            }
            if m.exponents.len() != dim || m.exponents.iter().any(|r| r.len() != dim) {
                return Err(Error::validation(format!(
                    "xi term {t} exponent matrix must be {dim}x{dim}"
                )));
            }
            let mut f = Vec::new();
            for i in 0..dim {
                for j in 0..dim {
                    let e = m.exponents[i][j];
                    if e > 0 {
                        f.push((i * dim + j, e));
                    }
                }
            }
            factors.push(f);
        }
        Ok(XiPoly { dim, terms, factors })
    }

    /// Convenience constructor from `(coeff, [(i, j, power)])` lists.
    pub fn from_terms(dim: usize, terms: &[(f64, &[(usize, usize, u32)])]) -> Result<Self> {
        let mut out = Vec::new();
        for (c, fs) in terms {
            let mut e = vec![vec![0u32; dim]; dim];
            for &(i, j, p) in fs.iter() {
                if i >= dim || j >= dim {
                    return Err(Error::validation("xi factor index out of range"));
                }
                e[i][j] += p;
            }
            out.push(Monomial {
                coeff: *c,
                exponents: e,
            });
        }
        XiPoly::new(dim, out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    /// Non-zero exponents of term `t` as `(row, col, power)`.
    pub fn term_factors(&self, t: usize) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
        self.factors[t]
            .iter()
            .map(move |&(k, p)| (k / self.dim, k % self.dim, p))
    }

    pub fn degree(&self, t: usize) -> u32 {
        self.factors[t].iter().map(|f| f.1).sum()
    }

    /// True when no term involves an off-diagonal entry.
    pub fn depends_only_on_diagonal(&self) -> bool {
        self.factors
            .iter()
            .flatten()
            .all(|&(k, _)| k / self.dim == k % self.dim)
    }

    /// Flat indices of all entries appearing with non-zero coefficient.
    pub fn active_entries(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .factors
            .iter()
            .zip(&self.terms)
            .filter(|(_, m)| m.coeff != 0.0)
            .flat_map(|(f, _)| f.iter().map(|x| x.0))
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Evaluates on a dense row-major matrix.
    pub fn eval_dense(&self, a: &[f64]) -> XiEval {
        let d2 = self.dim * self.dim;
        assert_eq!(a.len(), d2, "matrix size mismatch");
        let mut value = 0.0;
        let mut grad = vec![0.0; d2];
        for (m, fs) in self.terms.iter().zip(&self.factors) {
            if m.coeff == 0.0 {
                continue;
            }
            let mut prod = m.coeff;
            for &(k, p) in fs {
                prod *= powi(a[k], p);
            }
            value += prod;
            for (r, &(k, p)) in fs.iter().enumerate() {
                let mut g = m.coeff * p as f64 * powi(a[k], p - 1);
                for (s, &(k2, p2)) in fs.iter().enumerate() {
                    if s != r {
                        g *= powi(a[k2], p2);
                    }
                }
                grad[k] += g;
            }
        }
        let theta = a.iter().zip(&grad).map(|(x, g)| x * g).sum::<f64>() - value;
        XiEval { value, grad, theta }
    }

    pub fn eval(&self, a: &SymMatrix) -> XiEval {
        self.eval_dense(&a.to_dense())
    }

    pub fn value(&self, a: &SymMatrix) -> f64 {
        self.eval(a).value
    }

    pub fn theta(&self, a: &SymMatrix) -> f64 {
        self.eval(a).theta
    }

    /// Gradient as an element of the symmetric matrices (symmetric part of ∇ξ).
    pub fn grad_sym(&self, a: &SymMatrix) -> SymMatrix {
        SymMatrix::symmetrize(self.dim, &self.eval(a).grad)
    }

    /// Hessian over the given flat entries, at the dense point `a`.
    pub fn hessian(&self, a: &[f64], vars: &[usize]) -> SymMatrix {
        let nv = vars.len();
        let mut h = SymMatrix::zeros(nv);
        for (m, fs) in self.terms.iter().zip(&self.factors) {
            if m.coeff == 0.0 {
                continue;
            }
            for (u, &ku) in vars.iter().enumerate() {
                for (v, &kv) in vars.iter().enumerate().skip(u) {
                    let d = second_partial(m.coeff, fs, a, ku, kv);
                    if d != 0.0 {
                        h.set(u, v, h.get(u, v) + d);
                    }
                }
            }
        }
        h
    }

    /// Certified upper bound on sup ‖∇²ξ‖_op over `domain`, plus the sampled
    /// maximum (diagnostic).
    pub fn hessian_bound(&self, domain: Domain) -> (f64, f64) {
        let vars = self.active_entries();
        if vars.is_empty() {
            return (0.0, 0.0);
        }
        let nv = vars.len();
        let d2 = self.dim * self.dim;
        // Degree-2 part has a constant Hessian; evaluate it exactly.
        let quad_only = XiPoly {
            dim: self.dim,
            terms: self.terms.clone(),
            factors: self.factors.clone(),
        }
        .restricted(|deg| deg == 2);
        let zero = vec![0.0; d2];
        // Inflate by a few ulps so rounding in the eigen solve cannot undercut K.
        let h2 = quad_only.hessian(&zero, &vars).op_norm() * (1.0 + ROUND_GUARD);
        let higher: Vec<usize> = (0..self.terms.len())
            .filter(|&t| self.degree(t) >= 3 && self.terms[t].coeff != 0.0)
            .collect();
        if higher.is_empty() {
            return (h2, h2);
        }
        let crude: f64 = h2
            + higher
                .iter()
                .map(|&t| {
                    let p = self.degree(t) as f64;
                    fabs(self.terms[t].coeff) * p * (p - 1.0)
                })
                .sum::<f64>();
        let third: f64 = higher
            .iter()
            .map(|&t| {
                let p = self.degree(t) as f64;
                fabs(self.terms[t].coeff) * p * (p - 1.0) * (p - 2.0)
            })
            .sum();
        if nv > 4 {
            return (crude, f64::NAN);
        }
        // Grid over the cube in the active variables; cell covering radius rho.
        let per_dim: usize = match nv {
            1 => 2001,
            2 => 401,
            3 => 61,
            _ => 21,
        };
        let step = 2.0 / (per_dim - 1) as f64;
        let rho = 0.5 * step * sqrt(nv as f64);
        let mut idx = vec![0usize; nv];
        let mut point = vec![0.0; d2];
        let mut sampled: f64 = 0.0;
        loop {
            let mut r2 = 0.0;
            for (u, &k) in vars.iter().enumerate() {
                let v = -1.0 + step * idx[u] as f64;
                point[k] = v;
                r2 += v * v;
            }
            let inside = match domain {
                Domain::Cube => true,
                Domain::Ball => sqrt(r2) <= 1.0 + rho,
            };
            if inside {
                sampled = f64::max(sampled, self.hessian(&point, &vars).op_norm());
            }
            let mut u = 0;
            loop {
                if u == nv {
                    let certified = f64::min(crude, (sampled + third * rho) * (1.0 + ROUND_GUARD));
                    return (certified, sampled);
                }
                idx[u] += 1;
                if idx[u] < per_dim {
                    break;
                }
                idx[u] = 0;
                u += 1;
            }
        }
    }

    fn restricted(mut self, keep: impl Fn(u32) -> bool) -> XiPoly {
        for t in 0..self.terms.len() {
            if !keep(self.degree(t)) {
                self.terms[t].coeff = 0.0;
            }
        }
        self
    }

    /// `sup |ξ(a)|` over the Frobenius unit ball, bounded by Σ|c|.
    pub fn sup_abs_on_ball(&self) -> f64 {
        self.terms.iter().map(|m| fabs(m.coeff)).sum()
    }
}

fn second_partial(c: f64, fs: &[(usize, u32)], a: &[f64], ku: usize, kv: usize) -> f64 {
    let mut exps: Vec<(usize, u32)> = fs.to_vec();
    let mut coef = c;
    for target in [ku, kv] {
        match exps.iter_mut().find(|f| f.0 == target) {
            Some(f) if f.1 > 0 => {
                coef *= f.1 as f64;
                f.1 -= 1;
            }
            _ => return 0.0,
        }
    }
    for (k, p) in exps {
        coef *= powi(a[k], p);
    }
    coef
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rbm_xi() -> XiPoly {
        XiPoly::from_terms(2, &[(1.0, &[(0, 0, 1), (1, 1, 1)])]).unwrap()
    }

    #[test]
    fn rbm_eval() {
        let xi = rbm_xi();
        let e = xi.eval(&SymMatrix::diag(&[0.3, 0.5]));
        assert!((e.value - 0.15).abs() < 1e-15);
        assert_eq!(e.grad, vec![0.5, 0.0, 0.0, 0.3]);
        assert!((e.theta - 0.15).abs() < 1e-15);
        let z = xi.eval(&SymMatrix::zeros(2));
        assert_eq!((z.value, z.theta), (0.0, 0.0));
        assert!(z.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn cubic_scalar() {
        let xi = XiPoly::from_terms(1, &[(1.0, &[(0, 0, 3)])]).unwrap();
        let e = xi.eval(&SymMatrix::diag(&[0.5]));
        assert!((e.value - 0.125).abs() < 1e-15);
        assert!((e.grad[0] - 0.75).abs() < 1e-15);
        assert!((e.theta - 0.25).abs() < 1e-15);
    }

    #[test]
    fn hessian_bounds() {
        let k = rbm_xi().hessian_bound(Domain::Ball).0;
        assert!(k >= 1.0 && k - 1.0 < 1e-12);
        let sq = XiPoly::from_terms(1, &[(1.0, &[(0, 0, 2)])]).unwrap();
        let k = sq.hessian_bound(Domain::Ball).0;
        assert!(k >= 2.0 && k - 2.0 < 1e-12);
        let lin = XiPoly::from_terms(1, &[(3.0, &[(0, 0, 1)])]).unwrap();
        assert_eq!(lin.hessian_bound(Domain::Ball).0, 0.0);
    }

    #[test]
    fn cubic_bound_is_certified_and_tight() {
        // ξ = a³: sup |6a| on [-1,1] is 6.
        let xi = XiPoly::from_terms(1, &[(1.0, &[(0, 0, 3)])]).unwrap();
        let (k, s) = xi.hessian_bound(Domain::Ball);
        assert!((6.0..6.01).contains(&k), "{k}");
        assert!((s - 6.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_shapes() {
        let bad = Monomial {
            coeff: 1.0,
            exponents: vec![vec![1]],
        };
        assert!(XiPoly::new(2, vec![bad]).is_err());
        let nan = Monomial {
            coeff: f64::NAN,
            exponents: vec![vec![1]],
        };
        assert!(XiPoly::new(1, vec![nan]).is_err());
    }
}
