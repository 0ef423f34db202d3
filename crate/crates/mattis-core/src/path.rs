//! Monotone piecewise-constant paths `[0,1) → S^D_+`.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{SymMatrix, PSD_TOL};
use crate::xi::XiPoly;

/// Path equal to `levels[l]` on `[breaks[l], breaks[l+1])` with `breaks[0] = 0`
/// and an implicit final breakpoint 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PathPiece>", into = "Vec<PathPiece>")]
pub struct PiecewisePath {
    breaks: Vec<f64>,
    levels: Vec<SymMatrix>,
}

/// Serialized form of one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPiece {
    pub s: f64,
    pub value: SymMatrix,
}

impl TryFrom<Vec<PathPiece>> for PiecewisePath {
    type Error = Error;
    fn try_from(pieces: Vec<PathPiece>) -> Result<Self> {
        let (breaks, levels) = pieces.into_iter().map(|p| (p.s, p.value)).unzip();
        PiecewisePath::new(breaks, levels)
    }
}

impl From<PiecewisePath> for Vec<PathPiece> {
    fn from(p: PiecewisePath) -> Self {
        p.breaks
            .into_iter()
            .zip(p.levels)
            .map(|(s, value)| PathPiece { s, value })
            .collect()
    }
}

impl PiecewisePath {
    /// Validated constructor; `breaks` must start at 0 and increase strictly in `[0,1)`.
    pub fn new(breaks: Vec<f64>, levels: Vec<SymMatrix>) -> Result<Self> {
        let p = PiecewisePath::new_unchecked(breaks, levels)?;
        p.validate()?;
        Ok(p)
    }

    /// Shape checks only (monotonicity not enforced); used for intermediate objects.
    pub fn new_unchecked(breaks: Vec<f64>, levels: Vec<SymMatrix>) -> Result<Self> {
        if breaks.is_empty() || breaks.len() != levels.len() {
            return Err(Error::validation("path needs one level per breakpoint"));
        }
        if breaks[0] != 0.0 {
            return Err(Error::validation("first breakpoint must be 0"));
        }
        for w in breaks.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::validation("breakpoints must increase strictly"));
            }
        }
        if !(breaks[breaks.len() - 1] < 1.0) {
            return Err(Error::validation("breakpoints must lie in [0,1)"));
        }
        let n = levels[0].dim();
        if levels.iter().any(|m| m.dim() != n || !m.is_finite()) {
            return Err(Error::validation("path levels must be finite and equally sized"));
        }
        Ok(PiecewisePath { breaks, levels })
    }

    pub fn constant(y: SymMatrix) -> Self {
        PiecewisePath {
            breaks: alloc::vec![0.0],
            levels: alloc::vec![y],
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(SymMatrix::zeros(dim))
    }

    /// Monotone-cone check: `M_0` PSD and every increment PSD (tolerance 1e-10).
    pub fn validate(&self) -> Result<()> {
        if !self.levels[0].is_psd() {
            return Err(Error::validation("path value at 0 is not PSD"));
        }
        for l in 1..self.levels.len() {
            let inc = &self.levels[l] - &self.levels[l - 1];
            let min = inc.min_eigenvalue();
            if min < -PSD_TOL {
                return Err(Error::validation(format!(
                    "path is not monotone at s = {} (min eigenvalue of increment {min:e})",
                    self.breaks[l]
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.levels[0].dim()
    }

    /// Number of jumps k.
    pub fn jumps(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn levels(&self) -> &[SymMatrix] {
        &self.levels
    }

    pub fn levels_mut(&mut self) -> &mut [SymMatrix] {
        &mut self.levels
    }

    /// `q(1) = M_k`.
    pub fn terminal(&self) -> &SymMatrix {
        &self.levels[self.levels.len() - 1]
    }

    /// `s_{l+1} - s_l` with `s_{k+1} = 1`.
    pub fn width(&self, l: usize) -> f64 {
        let next = self.breaks.get(l + 1).copied().unwrap_or(1.0);
        next - self.breaks[l]
    }

    /// Increments `δ_0 = M_0`, `δ_l = M_l - M_{l-1}`.
    pub fn increments(&self) -> Vec<SymMatrix> {
        (0..self.levels.len())
            .map(|l| {
                if l == 0 {
                    self.levels[0].clone()
                } else {
                    &self.levels[l] - &self.levels[l - 1]
                }
            })
            .collect()
    }

    pub fn value_at(&self, s: f64) -> &SymMatrix {
        let l = self.breaks.iter().rposition(|&b| b <= s).unwrap_or(0);
        &self.levels[l]
    }

    /// Applies `f` to every level, keeping the breakpoints.
    pub fn map_levels(&self, f: impl Fn(&SymMatrix) -> SymMatrix) -> PiecewisePath {
        PiecewisePath {
            breaks: self.breaks.clone(),
            levels: self.levels.iter().map(f).collect(),
        }
    }

    /// Levelwise combination with a path on the same breakpoints.
    pub fn zip_levels(
        &self,
        other: &PiecewisePath,
        f: impl Fn(&SymMatrix, &SymMatrix) -> SymMatrix,
    ) -> Result<PiecewisePath> {
        if self.breaks != other.breaks {
            return Err(Error::validation("paths have different breakpoints"));
        }
        Ok(PiecewisePath {
            breaks: self.breaks.clone(),
            levels: self.levels.iter().zip(&other.levels).map(|(a, b)| f(a, b)).collect(),
        })
    }

    /// Largest matrix sup-norm over levels.
    pub fn sup_norm(&self) -> f64 {
        self.levels.iter().map(|m| m.sup_norm()).fold(0.0, f64::max)
    }

    /// `∫₀¹ |p(s) − p′(s)| ds` (Frobenius), on the merged breakpoints.
    pub fn l1_distance(&self, other: &PiecewisePath) -> f64 {
        let mut cuts: Vec<f64> = self.breaks.iter().chain(&other.breaks).copied().collect();
        cuts.sort_by(|a, b| a.total_cmp(b));
        cuts.dedup();
        let mut total = 0.0;
        for (i, &s) in cuts.iter().enumerate() {
            let next = cuts.get(i + 1).copied().unwrap_or(1.0);
            let diff = self.value_at(s) - other.value_at(s);
            total += (next - s) * diff.frobenius_norm();
        }
        total
    }

    /// Splits the interval containing `s` without changing values.
    pub fn refine(&self, s: f64) -> PiecewisePath {
        if s <= 0.0 || s >= 1.0 || self.breaks.contains(&s) {
            return self.clone();
        }
        let l = self.breaks.iter().rposition(|&b| b < s).unwrap_or(0);
        let mut p = self.clone();
        p.breaks.insert(l + 1, s);
        p.levels.insert(l + 1, self.levels[l].clone());
        p
    }

    /// `∫₀¹ θ(p(u)) du`, exact for piecewise-constant paths.
    pub fn integral_theta(&self, xi: &XiPoly) -> Result<f64> {
        self.validate()?;
        Ok(self.integral_theta_unchecked(xi))
    }

    pub(crate) fn integral_theta_unchecked(&self, xi: &XiPoly) -> f64 {
        (0..self.levels.len())
            .map(|l| self.width(l) * xi.theta(&self.levels[l]))
            .sum()
    }
}
