//! Replica-symmetric functional φ(y;x), its gradients and the fixed point z.

use alloc::vec;
use alloc::vec::Vec;

use libm::fabs;

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::model::{ModelSpec, SiteModel, Structure};
use crate::numeric::pairwise_sum;
use crate::quadrature::{GaussHermite, TensorRule, DEFAULT_ORDER};
use crate::site::SiteKernel;
use crate::xi::TStarBound;

/// Tuning for φ evaluation and the Picard solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsConfig {
    pub quad_order: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation weight in `(0, 1]`; 1 is plain Picard.
    pub damping: f64,
    /// Permit `t` at or above the certified bound.
    pub allow_uncertified: bool,
}

impl Default for RsConfig {
    fn default() -> Self {
        RsConfig {
            quad_order: DEFAULT_ORDER,
            tol: 1e-10,
            max_iter: 10_000,
            damping: 1.0,
            allow_uncertified: false,
        }
    }
}

/// φ together with both gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiEval {
    pub value: f64,
    pub grad_y: SymMatrix,
    pub grad_x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RsFixedPointResult {
    pub z: SymMatrix,
    pub iterations: usize,
    /// Sup-norm of the last Picard step `map(z) − z`.
    pub final_residual: f64,
    /// Largest ratio of successive step lengths.
    pub contraction_estimate: f64,
    /// False when `t` is not below the certified threshold bound.
    pub certified: bool,
    pub trace: Vec<f64>,
}

/// `g(t,y;x)` and `∇_y g = z`.
#[derive(Debug, Clone, PartialEq)]
pub struct GValue {
    pub g: f64,
    pub grad_y: SymMatrix,
    pub fixed_point: RsFixedPointResult,
}

/// Steps shorter than this are too noisy to enter the contraction estimate.
const RATIO_FLOOR: f64 = 1e-12;

/// Reusable evaluator bound to a model and a quadrature order.
#[derive(Debug, Clone)]
pub struct RsEngine<'a> {
    model: &'a ModelSpec,
    rule: TensorRule,
    cfg: RsConfig,
    bound: TStarBound,
}

impl<'a> RsEngine<'a> {
    pub fn new(model: &'a ModelSpec, cfg: RsConfig) -> Result<Self> {
        let gh = GaussHermite::new(cfg.quad_order)?;
        let dim = match model.structure() {
            Structure::Vector(s) => s.spin_dim(),
            Structure::Multitype(_) => 1,
        };
        if !(cfg.tol > 0.0) || cfg.max_iter == 0 {
            return Err(Error::config("fixed-point tolerance and budget must be positive"));
        }
        if !(cfg.damping > 0.0 && cfg.damping <= 1.0) {
            return Err(Error::config("damping must lie in (0, 1]"));
        }
        Ok(RsEngine {
            model,
            rule: TensorRule::new(&gh, dim),
            cfg,
            bound: model.t_star_lower_bound(),
        })
    }

    pub fn model(&self) -> &ModelSpec {
        self.model
    }

    pub fn config(&self) -> &RsConfig {
        &self.cfg
    }

    pub fn t_star_bound(&self) -> TStarBound {
        self.bound
    }

    pub fn phi(&self, y: &SymMatrix, x: &[f64]) -> Result<f64> {
        Ok(self.eval(y, x, false)?.value)
    }

    pub fn grad_phi(&self, y: &SymMatrix, x: &[f64]) -> Result<PhiEval> {
        self.eval(y, x, true)
    }

    fn eval(&self, y: &SymMatrix, x: &[f64], grads: bool) -> Result<PhiEval> {
        self.model.check_y(y)?;
        self.model.check_x(x)?;
        match self.model.structure() {
            Structure::Vector(site) => site_phi(site, &self.rule, y, x, grads),
            Structure::Multitype(species) => {
                let s_count = species.len();
                let offsets = self.model.species_offsets();
                let mut value = 0.0;
                let mut gy = vec![0.0; s_count];
                let mut gx = vec![0.0; x.len()];
                for (s, sp) in species.iter().enumerate() {
                    let ds = sp.site.mattis_dim();
                    let xs = &x[offsets[s]..offsets[s] + ds];
                    let ys = SymMatrix::diag(&[y.get(s, s)]);
                    let e = site_phi(&sp.site, &self.rule, &ys, xs, grads)?;
                    value += sp.weight * e.value;
                    gy[s] = sp.weight * e.grad_y.get(0, 0);
                    for i in 0..ds {
                        gx[offsets[s] + i] = sp.weight * e.grad_x[i];
                    }
                }
                Ok(PhiEval {
                    value,
                    grad_y: SymMatrix::diag(&gy),
                    grad_x: gx,
                })
            }
        }
    }

    /// `y + t ∇ξ(z)` as a symmetric matrix.
    pub fn shifted(&self, t: f64, y: &SymMatrix, z: &SymMatrix) -> SymMatrix {
        y + &self.model.xi().grad_sym(z).scale(t)
    }

    fn check_t(&self, t: f64) -> Result<bool> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::validation("t must be finite and non-negative"));
        }
        let certified = t < self.bound.t_star;
        if !certified && !self.cfg.allow_uncertified {
            return Err(Error::validation(alloc::format!(
                "t = {t} is not below the certified threshold bound {}",
                self.bound.t_star
            )));
        }
        Ok(certified)
    }

    /// Picard iteration for `z = ∇_yφ(y + t∇ξ(z); x)`; starts at `∇_yφ(y;x)`
    /// unless `start` is given.
    pub fn solve_fixed_point(
        &self,
        t: f64,
        y: &SymMatrix,
        x: &[f64],
        start: Option<&SymMatrix>,
    ) -> Result<RsFixedPointResult> {
        let certified = self.check_t(t)?;
        self.model.check_y(y)?;
        let mut z = match start {
            Some(z0) => {
                if z0.dim() != y.dim() {
                    return Err(Error::validation("start point has the wrong dimension"));
                }
                z0.clone()
            }
            None => self.grad_phi(y, x)?.grad_y,
        };
        let mut trace = Vec::new();
        let mut contraction: f64 = 0.0;
        let mut prev = f64::NAN;
        for it in 1..=self.cfg.max_iter {
            let arg = self.shifted(t, y, &z);
            let mut next = self.grad_phi(&arg, x)?.grad_y;
            if self.cfg.damping < 1.0 {
                next = &z.scale(1.0 - self.cfg.damping) + &next.scale(self.cfg.damping);
            }
            let res = (&next - &z).sup_norm();
            trace.push(res);
            if prev > RATIO_FLOOR {
                contraction = f64::max(contraction, res / prev);
            }
            prev = res;
            z = next;
            if res <= self.cfg.tol {
                return Ok(RsFixedPointResult {
                    z,
                    iterations: it,
                    final_residual: res,
                    contraction_estimate: contraction,
                    certified,
                    trace,
                });
            }
        }
        Err(Error::NonConvergence {
            context: "replica-symmetric fixed point",
            iterations: self.cfg.max_iter,
            residual: prev,
            trace,
        })
    }

    /// `g(t,y;x) = φ(y + t∇ξ(z);x) − tθ(z)`.
    pub fn g_value(&self, t: f64, y: &SymMatrix, x: &[f64]) -> Result<GValue> {
        let fp = self.solve_fixed_point(t, y, x, None)?;
        let g = self.phi(&self.shifted(t, y, &fp.z), x)? - t * self.model.xi().theta(&fp.z);
        Ok(GValue {
            g,
            grad_y: fp.z.clone(),
            fixed_point: fp,
        })
    }

    /// `∇_x g(t,y;x) = ∇_xφ(y + t∇ξ(z); x)` together with g.
    pub fn g_with_grad_x(&self, t: f64, y: &SymMatrix, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let fp = self.solve_fixed_point(t, y, x, None)?;
        let e = self.grad_phi(&self.shifted(t, y, &fp.z), x)?;
        Ok((e.value - t * self.model.xi().theta(&fp.z), e.grad_x))
    }
}

fn site_phi(
    site: &SiteModel,
    rule: &TensorRule,
    y: &SymMatrix,
    x: &[f64],
    grads: bool,
) -> Result<PhiEval> {
    let d = site.spin_dim();
    let dm = site.mattis_dim();
    let root = y.scale(2.0).sqrt_psd()?;
    let kernel = SiteKernel::new(site, y, x);
    let zero_field = root.sup_norm() == 0.0;
    let nodes = if zero_field { 1 } else { rule.len() };
    let mut terms = Vec::with_capacity(nodes * kernel.nk);
    let mut gy = SymMatrix::zeros(d);
    let mut gx = vec![0.0; dm];
    let mut sc = kernel.scratch();
    let mut u = vec![0.0; d];
    for k in 0..kernel.nk {
        let vk = kernel.pattern_w[k];
        for n in 0..nodes {
            let w = if zero_field { 1.0 } else { rule.weights[n] };
            if zero_field {
                u.iter_mut().for_each(|v| *v = 0.0);
            } else {
                let eta = rule.point(n);
                for a in 0..d {
                    u[a] = (0..d).map(|b| root.get(a, b) * eta[b]).sum();
                }
            }
            let wk = w * vk;
            if grads {
                let br = kernel.bracket(k, &u, true, &mut sc);
                terms.push(wk * br.log_z);
                for a in 0..d {
                    for b in a..d {
                        gy.set(a, b, gy.get(a, b) + wk * br.tau[a] * br.tau[b]);
                    }
                }
                for i in 0..dm {
                    gx[i] -= wk * br.h[i];
                }
            } else {
                terms.push(wk * kernel.log_z(k, &u));
            }
        }
    }
    let value = -pairwise_sum(&terms);
    if !value.is_finite() {
        return Err(Error::numerical("phi evaluated to a non-finite value", Vec::new()));
    }
    Ok(PhiEval {
        value,
        grad_y: gy,
        grad_x: gx,
    })
}

/// φ(y;x) at the default quadrature order.
pub fn phi(model: &ModelSpec, y: &SymMatrix, x: &[f64]) -> Result<f64> {
    RsEngine::new(model, RsConfig::default())?.phi(y, x)
}

/// `(∇_yφ, ∇_xφ)` at the default quadrature order.
pub fn grad_phi(model: &ModelSpec, y: &SymMatrix, x: &[f64]) -> Result<(SymMatrix, Vec<f64>)> {
    let e = RsEngine::new(model, RsConfig::default())?.grad_phi(y, x)?;
    Ok((e.grad_y, e.grad_x))
}

pub fn solve_rs_fixed_point(
    model: &ModelSpec,
    t: f64,
    y: &SymMatrix,
    x: &[f64],
) -> Result<RsFixedPointResult> {
    RsEngine::new(model, RsConfig::default())?.solve_fixed_point(t, y, x, None)
}

pub fn g_value(model: &ModelSpec, t: f64, y: &SymMatrix, x: &[f64]) -> Result<(f64, SymMatrix)> {
    let g = RsEngine::new(model, RsConfig::default())?.g_value(t, y, x)?;
    Ok((g.g, g.grad_y))
}

/// Relative difference helper used by tests and diagnostics.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    fabs(a - b) / f64::max(1.0, f64::max(fabs(a), fabs(b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use libm::{cosh, log, tanh};

    #[test]
    fn rbm_phi_at_zero_field() {
        let m = ModelSpec::rbm();
        let y0 = SymMatrix::zeros(2);
        assert_eq!(phi(&m, &y0, &[0.0, 0.0]).unwrap(), 0.0);
        let v = phi(&m, &y0, &[1.0, 0.0]).unwrap();
        assert!((v + log(cosh(1.0))).abs() < 1e-15);
        let (gy, gx) = grad_phi(&m, &y0, &[0.3, -0.7]).unwrap();
        assert!((gy.get(0, 0) - tanh(0.3) * tanh(0.3)).abs() < 1e-15);
        assert!((gy.get(1, 1) - tanh(0.7) * tanh(0.7)).abs() < 1e-15);
        assert!(gy.get(0, 1).abs() < 1e-15);
        assert!((gx[0] + tanh(0.3)).abs() < 1e-15);
        assert!((gx[1] - tanh(0.7)).abs() < 1e-15);
    }

    #[test]
    fn non_psd_rejected() {
        let m = ModelSpec::rbm();
        assert!(phi(&m, &SymMatrix::diag(&[0.1, -0.2]), &[0.0, 0.0]).is_err());
        assert!(RsEngine::new(
            &m,
            RsConfig {
                quad_order: 1,
                ..RsConfig::default()
            }
        )
        .is_err());
    }

    #[test]
    fn t_zero_is_one_step() {
        let m = ModelSpec::rbm();
        let y = SymMatrix::diag(&[0.2, 0.1]);
        let x = [0.4, 0.2];
        let r = solve_rs_fixed_point(&m, 0.0, &y, &x).unwrap();
        assert_eq!(r.iterations, 1);
        let (gy, _) = grad_phi(&m, &y, &x).unwrap();
        assert_eq!(r.z, gy);
    }

    #[test]
    fn negative_t_rejected() {
        let m = ModelSpec::rbm();
        assert!(solve_rs_fixed_point(&m, -0.1, &SymMatrix::zeros(2), &[0.0, 0.0]).is_err());
        assert!(solve_rs_fixed_point(&m, 0.07, &SymMatrix::zeros(2), &[0.0, 0.0]).is_err());
    }
}
