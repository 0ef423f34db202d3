//! Per-site Gibbs computations shared by the RS and cascade functionals.

use alloc::vec;
use alloc::vec::Vec;

use libm::exp;

use crate::linalg::SymMatrix;
use crate::model::SiteModel;

/// Tables for `log Σ_j w_j exp(u·τ_j − M·τ_jτ_jᵀ + x·h(τ_j, χ_k))` at fixed `(M, x)`.
#[derive(Debug, Clone)]
pub(crate) struct SiteKernel {
    pub d: usize,
    pub dm: usize,
    pub nj: usize,
    pub nk: usize,
    tau: Vec<f64>,
    /// `base[k * nj + j]`.
    base: Vec<f64>,
    /// `h[(k * nj + j) * dm + i]`.
    h: Vec<f64>,
    pub pattern_w: Vec<f64>,
}

/// Gibbs averages at one field value.
pub(crate) struct Bracket<'a> {
    pub log_z: f64,
    pub tau: &'a [f64],
    pub h: &'a [f64],
}

/// Scratch space for [`SiteKernel::bracket`].
pub(crate) struct Scratch {
    tau: Vec<f64>,
    h: Vec<f64>,
}

impl SiteKernel {
    pub fn new(site: &SiteModel, m: &SymMatrix, x: &[f64]) -> Self {
        let d = site.spin_dim();
        let dm = site.mattis_dim();
        let nj = site.spin.len();
        let nk = site.pattern.len();
        let mut tau = Vec::with_capacity(nj * d);
        for a in &site.spin.atoms {
            tau.extend_from_slice(a);
        }
        let mut base = vec![0.0; nk * nj];
        let mut h = vec![0.0; nk * nj * dm];
        for k in 0..nk {
            for j in 0..nj {
                let t = &site.spin.atoms[j];
                let hv = &site.mattis_map[j][k];
                let xh: f64 = x.iter().zip(hv).map(|(a, b)| a * b).sum();
                base[k * nj + j] = libm::log(site.spin.weights[j]) - m.quad_form(t) + xh;
                h[(k * nj + j) * dm..(k * nj + j + 1) * dm].copy_from_slice(hv);
            }
        }
        SiteKernel {
            d,
            dm,
            nj,
            nk,
            tau,
            base,
            h,
            pattern_w: site.pattern.weights.clone(),
        }
    }

    pub fn scratch(&self) -> Scratch {
        Scratch {
            tau: vec![0.0; self.d],
            h: vec![0.0; self.dm],
        }
    }

    #[inline]
    fn exponent(&self, k: usize, j: usize, u: &[f64]) -> f64 {
        let t = &self.tau[j * self.d..(j + 1) * self.d];
        let mut e = self.base[k * self.nj + j];
        for a in 0..self.d {
            e += u[a] * t[a];
        }
        e
    }

    /// `log Z` for pattern atom `k` at field `u`.
    pub fn log_z(&self, k: usize, u: &[f64]) -> f64 {
        let mut max = f64::NEG_INFINITY;
        for j in 0..self.nj {
            max = f64::max(max, self.exponent(k, j, u));
        }
        let mut s = 0.0;
        for j in 0..self.nj {
            s += exp(self.exponent(k, j, u) - max);
        }
        max + libm::log(s)
    }

    /// `log Z` together with `⟨τ⟩` and (optionally) `⟨h⟩`.
    pub fn bracket<'s>(&self, k: usize, u: &[f64], want_h: bool, sc: &'s mut Scratch) -> Bracket<'s> {
        let mut max = f64::NEG_INFINITY;
        for j in 0..self.nj {
            max = f64::max(max, self.exponent(k, j, u));
        }
        sc.tau.iter_mut().for_each(|v| *v = 0.0);
        sc.h.iter_mut().for_each(|v| *v = 0.0);
        let mut s = 0.0;
        for j in 0..self.nj {
            let p = exp(self.exponent(k, j, u) - max);
            s += p;
            let t = &self.tau[j * self.d..(j + 1) * self.d];
            for a in 0..self.d {
                sc.tau[a] += p * t[a];
            }
            if want_h {
                let hv = &self.h[(k * self.nj + j) * self.dm..(k * self.nj + j + 1) * self.dm];
                for i in 0..self.dm {
                    sc.h[i] += p * hv[i];
                }
            }
        }
        let inv = 1.0 / s;
        sc.tau.iter_mut().for_each(|v| *v *= inv);
        sc.h.iter_mut().for_each(|v| *v *= inv);
        Bracket {
            log_z: max + libm::log(s),
            tau: &sc.tau,
            h: &sc.h,
        }
    }
}
