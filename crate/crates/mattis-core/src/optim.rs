//! Small dense optimizers used by the large-deviation layer.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use libm::{fabs, sqrt};

use crate::error::{Error, Result};
use crate::numeric::{dot, norm2};

#[derive(Debug, Clone, PartialEq)]
pub struct AscentResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Gradient norm per iteration.
    pub trace: Vec<f64>,
}

/// Gradient norm below which a stalled line search is accepted as noise.
pub const NOISE_GRAD: f64 = 1e-6;

/// Maximizes a concave C¹ function with Barzilai–Borwein steps safeguarded by
/// Armijo backtracking. `f` returns `(value, gradient)`.
///
/// Returns `converged = false` when the budget runs out (e.g. the supremum is
/// approached only at infinity) and an error when the line search fails at a
/// point whose gradient is not yet small.
pub fn bb_ascent<F>(mut f: F, x0: &[f64], grad_tol: f64, max_iter: usize) -> Result<AscentResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x)?;
    let mut trace = vec![norm2(&g)];
    let mut step = 1.0;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut xn = vec![0.0; n];
    for it in 0..max_iter {
        let gn = norm2(&g);
        if gn <= grad_tol {
            return Ok(AscentResult {
                x,
                value: fx,
                grad: g,
                grad_norm: gn,
                iterations: it,
                converged: true,
                trace,
            });
        }
        if let Some((xp, gp)) = &prev {
            let s: Vec<f64> = x.iter().zip(xp).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g.iter().zip(gp).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            step = if sy < 0.0 { -dot(&s, &s) / sy } else { 2.0 * step };
            step = step.clamp(1e-8, 1e8);
        }
        let noise = 1e-13 * (1.0 + fabs(fx));
        let mut accepted = None;
        let mut a = step;
        for _ in 0..80 {
            for i in 0..n {
                xn[i] = x[i] + a * g[i];
            }
            match f(&xn) {
                Ok((v, gv)) if v.is_finite() && v >= fx + 1e-4 * a * gn * gn - noise => {
                    accepted = Some((v, gv));
                    break;
                }
                _ => a *= 0.5,
            }
        }
        match accepted {
            Some((v, gv)) => {
                prev = Some((core::mem::replace(&mut x, xn.clone()), core::mem::replace(&mut g, gv)));
                fx = v;
                step = a;
                trace.push(norm2(&g));
            }
            None => {
                if gn <= NOISE_GRAD {
                    return Ok(AscentResult {
                        x,
                        value: fx,
                        grad: g,
                        grad_norm: gn,
                        iterations: it,
                        converged: true,
                        trace,
                    });
                }
                return Err(Error::numerical(
                    format!("line search failed at gradient norm {gn:e}"),
                    trace,
                ));
            }
        }
    }
    let gn = norm2(&g);
    Ok(AscentResult {
        x,
        value: fx,
        grad: g,
        grad_norm: gn,
        iterations: max_iter,
        converged: gn <= grad_tol,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub diameter: f64,
    pub converged: bool,
}

fn diameter(simplex: &[Vec<f64>]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..simplex.len() {
        for j in i + 1..simplex.len() {
            let s: f64 = simplex[i]
                .iter()
                .zip(&simplex[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d = d.max(sqrt(s));
        }
    }
    d
}

/// Nelder–Mead minimization until the simplex diameter drops to `tol`.
/// `f` may return `+∞` outside its domain.
pub fn nelder_mead<F>(
    mut f: F,
    x0: &[f64],
    initial_step: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SimplexResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let n = x0.len();
    if n == 0 {
        let v = f(x0)?;
        return Ok(SimplexResult {
            x: Vec::new(),
            value: v,
            iterations: 0,
            diameter: 0.0,
            converged: true,
        });
    }
    let mut pts = vec![x0.to_vec()];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += initial_step;
        pts.push(p);
    }
    let mut vals = Vec::with_capacity(n + 1);
    for p in &pts {
        vals.push(f(p)?);
    }
    let mut it = 0;
    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        let diam = diameter(&pts);
        if diam <= tol || it >= max_iter {
            return Ok(SimplexResult {
                x: pts[0].clone(),
                value: vals[0],
                iterations: it,
                diameter: diam,
                converged: diam <= tol,
            });
        }
        it += 1;
        let mut c = vec![0.0; n];
        for p in &pts[..n] {
            for i in 0..n {
                c[i] += p[i] / n as f64;
            }
        }
        let along = |s: f64| -> Vec<f64> { (0..n).map(|i| c[i] + s * (pts[n][i] - c[i])).collect() };
        let xr = along(-1.0);
        let fr = f(&xr)?;
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(&xe)?;
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[n] {
            let xc = along(-0.5);
            let fc = f(&xc)?;
            (xc, if fc <= fr { fc } else { f64::INFINITY })
        } else {
            let xc = along(0.5);
            let fc = f(&xc)?;
            (xc, if fc < vals[n] { fc } else { f64::INFINITY })
        };
        if fc.is_finite() {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        for k in 1..=n {
            for i in 0..n {
                pts[k][i] = pts[0][i] + 0.5 * (pts[k][i] - pts[0][i]);
            }
            vals[k] = f(&pts[k])?;
        }
    }
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| fabs(a[i][col]).total_cmp(&fabs(a[j][col])))?;
        if fabs(a[piv][col]) < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let m = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= m * a[col][c];
            }
            b[r] -= m * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Affine minimum-norm combination of `pts[s]` for `s ∈ set`.
fn affine_min_norm(pts: &[Vec<f64>], set: &[usize]) -> Option<Vec<f64>> {
    let k = set.len();
    let mut a = vec![vec![0.0; k + 1]; k + 1];
    for i in 0..k {
        for j in 0..k {
            a[i][j] = dot(&pts[set[i]], &pts[set[j]]);
        }
        a[i][k] = 1.0;
        a[k][i] = 1.0;
    }
    let mut b = vec![0.0; k + 1];
    b[k] = 1.0;
    let sol = solve_dense(a, b)?;
    Some(sol[..k].to_vec())
}

/// Euclidean distance from `target` to the convex hull of `points`
/// (Wolfe's minimum-norm-point algorithm).
pub fn hull_distance(points: &[Vec<f64>], target: &[f64]) -> f64 {
    if points.is_empty() {
        return f64::INFINITY;
    }
    let pts: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.iter().zip(target).map(|(a, b)| a - b).collect())
        .collect();
    let scale = pts.iter().map(|p| dot(p, p)).fold(0.0, f64::max).max(1e-300);
    let comb = |set: &[usize], lam: &[f64]| -> Vec<f64> {
        let mut x = vec![0.0; target.len()];
        for (&s, &l) in set.iter().zip(lam) {
            for i in 0..x.len() {
                x[i] += l * pts[s][i];
            }
        }
        x
    };
    let start = (0..pts.len())
        .min_by(|&a, &b| dot(&pts[a], &pts[a]).total_cmp(&dot(&pts[b], &pts[b])))
        .unwrap();
    let mut set = vec![start];
    let mut lam = vec![1.0];
    let mut x = pts[start].clone();
    for _ in 0..10_000 {
        let xx = dot(&x, &x);
        if xx <= 1e-28 * scale {
            return 0.0;
        }
        let j = (0..pts.len())
            .min_by(|&a, &b| dot(&x, &pts[a]).total_cmp(&dot(&x, &pts[b])))
            .unwrap();
        if xx - dot(&x, &pts[j]) <= 1e-12 * scale || set.contains(&j) {
            return sqrt(xx);
        }
        set.push(j);
        lam.push(0.0);
        loop {
            let alpha = match affine_min_norm(&pts, &set) {
                Some(a) => a,
                None => return sqrt(dot(&x, &x)),
            };
            if alpha.iter().all(|&a| a > 1e-14) {
                lam = alpha;
                x = comb(&set, &lam);
                break;
            }
            let mut theta: f64 = 1.0;
            for (l, a) in lam.iter().zip(&alpha) {
                if *a <= 1e-14 && l - a > 0.0 {
                    theta = theta.min(l / (l - a));
                }
            }
            for (l, a) in lam.iter_mut().zip(&alpha) {
                *l = (1.0 - theta) * *l + theta * a;
            }
            let mut k = 0;
            while k < set.len() {
                if lam[k] <= 1e-14 {
                    set.remove(k);
                    lam.remove(k);
                } else {
                    k += 1;
                }
            }
            let total: f64 = lam.iter().sum();
            lam.iter_mut().for_each(|l| *l /= total);
            x = comb(&set, &lam);
        }
    }
    sqrt(dot(&x, &x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascent_on_quadratic() {
        let r = bb_ascent(
            |x| Ok((-(x[0] - 1.0).powi(2) - 3.0 * (x[1] + 2.0).powi(2), vec![-2.0 * (x[0] - 1.0), -6.0 * (x[1] + 2.0)])),
            &[0.0, 0.0],
            1e-10,
            500,
        )
        .unwrap();
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-9 && (r.x[1] + 2.0).abs() < 1e-9);
    }

    #[test]
    fn simplex_on_abs() {
        let r = nelder_mead(|x| Ok((x[0] - 0.3).abs() + (x[1] + 0.1).abs()), &[0.0, 0.0], 0.2, 1e-9, 10_000)
            .unwrap();
        assert!(r.converged);
        assert!((r.x[0] - 0.3).abs() < 1e-8 && (r.x[1] + 0.1).abs() < 1e-8);
    }

    #[test]
    fn distance_to_square() {
        let sq = vec![vec![-1.0, -1.0], vec![1.0, -1.0], vec![-1.0, 1.0], vec![1.0, 1.0]];
        assert_eq!(hull_distance(&sq, &[0.2, 0.3]), 0.0);
        assert!((hull_distance(&sq, &[2.0, 0.0]) - 1.0).abs() < 1e-12);
        assert!((hull_distance(&sq, &[2.0, 2.0]) - 2f64.sqrt()).abs() < 1e-12);
        assert!((hull_distance(&sq, &[1.0, 0.5])).abs() < 1e-12);
    }
}
