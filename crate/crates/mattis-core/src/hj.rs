//! Hamilton–Jacobi checks on the constant-path projection: characteristics,
//! the inverse flow, PDE residuals and a monotone Lax–Friedrichs grid solver.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use libm::{ceil, fabs, round};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::model::{ModelSpec, Structure};
use crate::rs::{RsConfig, RsEngine};

#[derive(Debug, Clone, PartialEq)]
pub struct CharProbe {
    pub t: f64,
    pub y: SymMatrix,
    pub x: Vec<f64>,
    /// `X(t,y) = y − t∇ξ(∇φ(y))`.
    pub x_val: SymMatrix,
    /// Inverse flow: `Z = y + t∇ξ(∇φ(Z))`.
    pub z_val: SymMatrix,
    /// `U(t,Z) = φ(Z) − tθ(∇φ(Z))`.
    pub u_val: f64,
    /// `|U(t,Z(t,y)) − g(t,y)|`.
    pub residual: f64,
    /// One minus the measured contraction factor of the inversion map.
    pub invertibility_gap: f64,
    pub iterations: usize,
}

/// Tolerance for the inverse-flow Picard iteration.
pub const INVERSION_TOL: f64 = 1e-12;

/// Evaluates the characteristic construction at `(t, y)` and compares it with
/// the fixed-point value `g(t,y;x)`.
pub fn characteristics_probe(
    engine: &RsEngine<'_>,
    t: f64,
    y: &SymMatrix,
    x: &[f64],
) -> Result<CharProbe> {
    let model = engine.model();
    let xi = model.xi();
    let d0 = engine.grad_phi(y, x)?;
    let x_val = y - &xi.grad_sym(&d0.grad_y).scale(t);

    let mut z = y.clone();
    let mut prev = f64::NAN;
    let mut contraction: f64 = 0.0;
    let mut trace = Vec::new();
    let budget = engine.config().max_iter;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < budget {
        iterations += 1;
        let w = engine.grad_phi(&z, x)?.grad_y;
        let next = y + &xi.grad_sym(&w).scale(t);
        let res = (&next - &z).sup_norm();
        trace.push(res);
        if prev > 1e-10 {
            contraction = f64::max(contraction, res / prev);
        }
        prev = res;
        z = next;
        if res <= INVERSION_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            context: "inverse characteristic flow",
            iterations,
            residual: prev,
            trace,
        });
    }
    let dz = engine.grad_phi(&z, x)?;
    let u_val = dz.value - t * xi.theta(&dz.grad_y);
    let g = engine.g_value(t, y, x)?.g;
    Ok(CharProbe {
        t,
        y: y.clone(),
        x: x.to_vec(),
        x_val,
        z_val: z,
        u_val,
        residual: fabs(u_val - g),
        invertibility_gap: 1.0 - contraction,
        iterations,
    })
}

/// Finite-difference PDE residual of the characteristic solution.
#[derive(Debug, Clone, PartialEq)]
pub struct HjResidual {
    pub dt: f64,
    pub grad_y: SymMatrix,
    /// `|∂ₜg − ξ(∇_y g)|`.
    pub residual: f64,
}

/// `|∂ₜg − ξ(∇_y g)|` from central differences of `g(t,y;x)` with step `h`.
/// Only matrix entries ξ depends on are differenced; `y ± h` must stay PSD.
pub fn hj_residual(
    engine: &RsEngine<'_>,
    t: f64,
    y: &SymMatrix,
    x: &[f64],
    h: f64,
) -> Result<HjResidual> {
    if !(h > 0.0) || t < h {
        return Err(Error::config("difference step must be positive and below t"));
    }
    let g = |tt: f64, yy: &SymMatrix| -> Result<f64> { Ok(engine.g_value(tt, yy, x)?.g) };
    let dt = (g(t + h, y)? - g(t - h, y)?) / (2.0 * h);
    let d = y.dim();
    let mut grad = SymMatrix::zeros(d);
    for idx in engine.model().xi().active_entries() {
        let (a, b) = (idx / d, idx % d);
        if b < a {
            continue;
        }
        let mut dir = SymMatrix::zeros(d);
        dir.set(a, b, 1.0);
        let plus = y + &dir.scale(h);
        let minus = y - &dir.scale(h);
        let mut v = (g(t, &plus)? - g(t, &minus)?) / (2.0 * h);
        if a != b {
            v *= 0.5;
        }
        grad.set(a, b, v);
    }
    let residual = fabs(dt - engine.model().xi().value(&grad));
    Ok(HjResidual {
        dt,
        grad_y: grad,
        residual,
    })
}

/// Box and resolution for the diagonal grid solver.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub spacing: f64,
    /// Explicit time step; chosen from the CFL bound when absent.
    #[serde(default)]
    pub dt: Option<f64>,
    /// Target Courant number when `dt` is absent.
    #[serde(default = "default_courant")]
    pub courant: f64,
}

fn default_courant() -> f64 {
    0.9
}

impl GridSpec {
    pub fn square(dim: usize, lo: f64, hi: f64, spacing: f64) -> Self {
        GridSpec {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
            spacing,
            dt: None,
            courant: default_courant(),
        }
    }
}

/// All time slices of the Lax–Friedrichs solution on a diagonal grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub lo: Vec<f64>,
    pub spacing: f64,
    /// Nodes per axis.
    pub shape: Vec<usize>,
    pub dt: f64,
    pub times: Vec<f64>,
    /// Artificial-viscosity coefficient per axis.
    pub alpha: Vec<f64>,
    /// `dt · Σα / spacing`; at most 1.
    pub courant: f64,
    /// Row-major node values per slice (last axis fastest).
    pub slices: Vec<Vec<f64>>,
}

impl GridField {
    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Multi-index of flat node `k`.
    pub fn index(&self, mut k: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            idx[a] = k % self.shape[a];
            k /= self.shape[a];
        }
        idx
    }

    pub fn coords(&self, k: usize) -> Vec<f64> {
        self.index(k)
            .iter()
            .zip(&self.lo)
            .map(|(&i, &lo)| lo + i as f64 * self.spacing)
            .collect()
    }

    pub fn final_slice(&self) -> &[f64] {
        self.slices.last().map(|s| s.as_slice()).unwrap_or(&[])
    }

    /// Nodes whose coordinates are multiples of `stride · spacing` inside
    /// `[lo, hi]` on every axis.
    pub fn sublattice(&self, lo: f64, hi: f64, stride: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&k| {
                self.coords(k).iter().all(|&c| {
                    let q = c / (stride as f64 * self.spacing);
                    fabs(q - round(q)) < 1e-9 && c >= lo - 1e-12 && c <= hi + 1e-12
                })
            })
            .collect()
    }
}

/// Model-side data the scheme needs: ξ on diagonal gradients and the
/// attainable gradient box.
fn diagonal_setup(model: &ModelSpec) -> Result<(usize, Vec<f64>)> {
    let xi = model.xi();
    if !xi.depends_only_on_diagonal() {
        return Err(Error::Capability(
            "grid solver needs ξ depending on diagonal entries only".into(),
        ));
    }
    let d = xi.dim();
    // ∂g/∂y_aa = E⟨τ_a⟩² ∈ [0, max τ_a²].
    let mut pmax = vec![0.0f64; d];
    match model.structure() {
        Structure::Vector(site) => {
            for atom in &site.spin.atoms {
                for a in 0..d {
                    pmax[a] = pmax[a].max(atom[a] * atom[a]);
                }
            }
        }
        Structure::Multitype(species) => {
            for (s, sp) in species.iter().enumerate() {
                for atom in &sp.site.spin.atoms {
                    pmax[s] = pmax[s].max(atom[0] * atom[0]);
                }
            }
        }
    }
    Ok((d, pmax))
}

fn xi_diag(model: &ModelSpec, p: &[f64]) -> f64 {
    model.xi().value(&SymMatrix::diag(p))
}

/// Lax–Friedrichs coefficients: `1.05 · max |∂ξ/∂a_dd|` sampled on the box.
fn viscosity(model: &ModelSpec, pmax: &[f64]) -> Vec<f64> {
    let d = pmax.len();
    let per = 21usize;
    let total = per.pow(d as u32);
    let mut alpha = vec![0.0f64; d];
    let mut p = vec![0.0; d];
    for mut k in 0..total {
        for a in 0..d {
            p[a] = pmax[a] * (k % per) as f64 / (per - 1) as f64;
            k /= per;
        }
        let g = model.xi().grad_sym(&SymMatrix::diag(&p));
        for a in 0..d {
            alpha[a] = alpha[a].max(fabs(g.get(a, a)));
        }
    }
    alpha.iter().map(|a| 1.05 * a).collect()
}

fn grid_shape(spec: &GridSpec, d: usize) -> Result<Vec<usize>> {
    if spec.lo.len() != d || spec.hi.len() != d {
        return Err(Error::config(format!("grid box must have {d} coordinates")));
    }
    if !(spec.spacing > 0.0) {
        return Err(Error::config("grid spacing must be positive"));
    }
    let mut shape = Vec::with_capacity(d);
    for a in 0..d {
        if spec.lo[a] < 0.0 || !(spec.hi[a] > spec.lo[a]) {
            return Err(Error::config("grid box must satisfy 0 ≤ lo < hi"));
        }
        let cells = (spec.hi[a] - spec.lo[a]) / spec.spacing;
        let n = round(cells);
        if fabs(cells - n) > 1e-9 {
            return Err(Error::config("box width must be a multiple of the spacing"));
        }
        shape.push(n as usize + 1);
    }
    Ok(shape)
}

/// Explicit monotone Lax–Friedrichs solve of `∂ₜg = ξ(∇g)` from `g(0,·) = φ(·;x)`
/// on the diagonal coordinates of S^D_+.
pub fn grid_viscosity_solve(
    engine: &RsEngine<'_>,
    spec: &GridSpec,
    t_final: f64,
    x: &[f64],
) -> Result<GridField> {
    let model = engine.model();
    let (d, _) = diagonal_setup(model)?;
    let shape = grid_shape(spec, d)?;
    if !(t_final >= 0.0) || t_final >= model.t_star_lower_bound().t_star {
        return Err(Error::validation("final time must lie in [0, t⋆ bound)"));
    }
    let n: usize = shape.iter().product();
    let mut init = Vec::with_capacity(n);
    for k in 0..n {
        let mut rem = k;
        let mut diag = vec![0.0; d];
        for a in (0..d).rev() {
            diag[a] = spec.lo[a] + (rem % shape[a]) as f64 * spec.spacing;
            rem /= shape[a];
        }
        init.push(engine.phi(&SymMatrix::diag(&diag), x)?);
    }
    evolve(model, spec, &shape, t_final, init)
}

/// Runs the scheme from arbitrary initial node values (row-major over `spec`).
pub fn evolve_from(
    model: &ModelSpec,
    spec: &GridSpec,
    t_final: f64,
    initial: Vec<f64>,
) -> Result<GridField> {
    let (d, _) = diagonal_setup(model)?;
    let shape = grid_shape(spec, d)?;
    if initial.len() != shape.iter().product::<usize>() {
        return Err(Error::validation("initial slice has the wrong number of nodes"));
    }
    evolve(model, spec, &shape, t_final, initial)
}

fn evolve(
    model: &ModelSpec,
    spec: &GridSpec,
    shape: &[usize],
    t_final: f64,
    init: Vec<f64>,
) -> Result<GridField> {
    let (d, pmax) = diagonal_setup(model)?;
    let alpha = viscosity(model, &pmax);
    let asum: f64 = alpha.iter().sum();
    let h = spec.spacing;
    let max_dt = if asum > 0.0 { h / asum } else { f64::INFINITY };
    let (steps, dt) = match spec.dt {
        Some(dt) => {
            if !(dt > 0.0) || dt > max_dt * (1.0 + 1e-12) {
                return Err(Error::config(format!(
                    "time step {dt} violates the CFL bound {max_dt}"
                )));
            }
            let steps = ceil(t_final / dt - 1e-9) as usize;
            (steps, if steps == 0 { 0.0 } else { t_final / steps as f64 })
        }
        None => {
            if !(spec.courant > 0.0 && spec.courant <= 1.0) {
                return Err(Error::config("Courant number must lie in (0, 1]"));
            }
            let target = spec.courant * max_dt;
            let steps = if t_final == 0.0 {
                0
            } else if target.is_finite() {
                ceil(t_final / target) as usize
            } else {
                1
            };
            (steps, if steps == 0 { 0.0 } else { t_final / steps as f64 })
        }
    };
    let mut strides = vec![1usize; d];
    for a in (0..d.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * shape[a + 1];
    }
    let n = init.len();
    let mut slices = vec![init];
    let mut times = vec![0.0];
    let mut p = vec![0.0; d];
    for s in 1..=steps {
        let cur = slices.last().unwrap();
        let mut next = vec![0.0; n];
        for k in 0..n {
            let mut visc = 0.0;
            for a in 0..d {
                let i = (k / strides[a]) % shape[a];
                let c = cur[k];
                let (lo, hi) = if shape[a] == 1 {
                    (c, c)
                } else if i == 0 {
                    let up = cur[k + strides[a]];
                    (2.0 * c - up, up)
                } else if i + 1 == shape[a] {
                    let dn = cur[k - strides[a]];
                    (dn, 2.0 * c - dn)
                } else {
                    (cur[k - strides[a]], cur[k + strides[a]])
                };
                p[a] = (hi - lo) / (2.0 * h);
                visc += alpha[a] * (hi - 2.0 * c + lo) / (2.0 * h);
            }
            next[k] = cur[k] + dt * (xi_diag(model, &p) + visc);
        }
        slices.push(next);
        times.push(s as f64 * dt);
    }
    Ok(GridField {
        lo: spec.lo.clone(),
        spacing: h,
        shape: shape.to_vec(),
        dt,
        times,
        courant: if asum > 0.0 { dt * asum / h } else { 0.0 },
        alpha,
        slices,
    })
}

/// Largest `|grid − g(T,·)|` over the given nodes of the final slice.
#[derive(Debug, Clone, PartialEq)]
pub struct GridComparison {
    pub max_abs_diff: f64,
    pub nodes: usize,
    pub worst_coords: Vec<f64>,
}

/// Compares the final slice with the characteristic solution. Errors when
/// characteristics through a compared node could leave the box by time T.
pub fn compare_with_characteristics(
    engine: &RsEngine<'_>,
    field: &GridField,
    nodes: &[usize],
    x: &[f64],
) -> Result<GridComparison> {
    let t = *field.times.last().unwrap_or(&0.0);
    let mut worst: f64 = 0.0;
    let mut worst_coords = Vec::new();
    let hi: Vec<f64> = field
        .lo
        .iter()
        .zip(&field.shape)
        .map(|(lo, &n)| lo + (n - 1) as f64 * field.spacing)
        .collect();
    for &k in nodes {
        let c = field.coords(k);
        for a in 0..field.dim() {
            let reach = t * field.alpha[a];
            if c[a] + reach > hi[a] + 1e-12 || (c[a] - reach < field.lo[a] - 1e-12 && field.lo[a] > 0.0) {
                return Err(Error::config(
                    "comparison node too close to the box boundary for the final time",
                ));
            }
        }
        let g = engine.g_value(t, &SymMatrix::diag(&c), x)?.g;
        let diff = fabs(field.final_slice()[k] - g);
        if diff > worst {
            worst = diff;
            worst_coords = c;
        }
    }
    Ok(GridComparison {
        max_abs_diff: worst,
        nodes: nodes.len(),
        worst_coords,
    })
}

/// Default engine used by the free functions in this module.
pub fn default_engine(model: &ModelSpec) -> Result<RsEngine<'_>> {
    RsEngine::new(
        model,
        RsConfig {
            tol: 1e-12,
            ..RsConfig::default()
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DiscreteMeasure, SiteModel};
    use crate::xi::XiPoly;

    #[test]
    fn probe_at_time_zero() {
        let m = ModelSpec::rbm();
        let e = default_engine(&m).unwrap();
        let y = SymMatrix::diag(&[0.2, 0.3]);
        let p = characteristics_probe(&e, 0.0, &y, &[0.3, 0.1]).unwrap();
        assert_eq!(p.x_val, y);
        assert_eq!(p.z_val, y);
        assert!(p.residual < 1e-14);
    }

    #[test]
    fn zero_xi_keeps_field_constant() {
        let site = SiteModel {
            spin: DiscreteMeasure::uniform(vec![vec![1.0], vec![-1.0]]),
            pattern: DiscreteMeasure::uniform(vec![vec![1.0]]),
            mattis_map: vec![vec![vec![1.0]], vec![vec![-1.0]]],
        };
        let m = ModelSpec::vector(site, XiPoly::new(1, vec![]).unwrap()).unwrap();
        let e = default_engine(&m).unwrap();
        let f = grid_viscosity_solve(&e, &GridSpec::square(1, 0.0, 1.0, 0.125), 0.5, &[0.2])
            .unwrap();
        assert_eq!(f.slices.first(), f.slices.last());
    }

    #[test]
    fn cfl_violation_is_config_error() {
        let m = ModelSpec::rbm();
        let e = default_engine(&m).unwrap();
        let mut spec = GridSpec::square(2, 0.0, 1.0, 0.125);
        spec.dt = Some(0.1);
        assert!(matches!(
            grid_viscosity_solve(&e, &spec, 0.04, &[0.5, 0.5]),
            Err(Error::Config(_))
        ));
    }
}
