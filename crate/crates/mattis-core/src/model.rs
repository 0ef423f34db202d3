//! Model description: spin law, patterns, Mattis map, interaction ξ.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use libm::{fabs, sqrt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::numeric::norm2;
use crate::xi::{Domain, TStarBound, XiPoly};

const NORM_SLACK: f64 = 1e-12;

/// Finite discrete measure given by atoms and positive weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub atoms: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn uniform(atoms: Vec<Vec<f64>>) -> Self {
        let n = atoms.len();
        DiscreteMeasure {
            atoms,
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    fn check(&self, what: &str, dim: usize) -> Result<()> {
        if self.atoms.is_empty() {
            return Err(Error::validation(format!("{what} has no atoms")));
        }
        if self.atoms.len() != self.weights.len() {
            return Err(Error::validation(format!(
                "{what}: {} atoms but {} weights",
                self.atoms.len(),
                self.weights.len()
            )));
        }
        for (j, a) in self.atoms.iter().enumerate() {
            if a.len() != dim {
                return Err(Error::validation(format!(
                    "{what}: atom {j} has dimension {} (expected {dim})",
                    a.len()
                )));
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(format!("{what}: atom {j} is not finite")));
            }
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::validation(format!("{what}: weights must be positive")));
        }
        Ok(())
    }
}

/// One-site data: spin law P₁, pattern law and Mattis table `h(τ_j, χ_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteModel {
    pub spin: DiscreteMeasure,
    pub pattern: DiscreteMeasure,
    /// `mattis_map[j][k] = h(τ_j, χ_k)`.
    pub mattis_map: Vec<Vec<Vec<f64>>>,
}

impl SiteModel {
    pub fn spin_dim(&self) -> usize {
        self.spin.atoms[0].len()
    }

    pub fn pattern_dim(&self) -> usize {
        self.pattern.atoms[0].len()
    }

    pub fn mattis_dim(&self) -> usize {
        self.mattis_map[0][0].len()
    }

    /// `max |h|` over all atom pairs.
    pub fn h_inf(&self) -> f64 {
        self.mattis_map
            .iter()
            .flatten()
            .map(|h| norm2(h))
            .fold(0.0, f64::max)
    }

    /// Validates shapes; `coordinatewise` selects `|τ_a| ≤ 1` instead of `|τ|₂ ≤ 1`.
    fn validate(&self, coordinatewise: bool, warnings: &mut Vec<String>) -> Result<()> {
        if self.spin.atoms.is_empty() || self.pattern.atoms.is_empty() {
            return Err(Error::validation("spin and pattern measures need atoms"));
        }
        let dim = self.spin_dim();
        if dim == 0 {
            return Err(Error::validation("spin dimension must be at least 1"));
        }
        self.spin.check("spin measure", dim)?;
        self.pattern.check("pattern measure", self.pattern_dim())?;
        let total = self.pattern.total_mass();
        if fabs(total - 1.0) > 1e-12 {
            return Err(Error::validation(format!(
                "pattern weights sum to {total}, expected 1"
            )));
        }
        for (j, tau) in self.spin.atoms.iter().enumerate() {
            let ok = if coordinatewise {
                tau.iter().all(|v| fabs(*v) <= 1.0 + NORM_SLACK)
            } else {
                norm2(tau) <= 1.0 + NORM_SLACK
            };
            if !ok {
                return Err(Error::validation(format!(
                    "spin atom {j} lies outside the unit ball"
                )));
            }
        }
        if self.mattis_map.len() != self.spin.len() {
            return Err(Error::validation("mattis map needs one row per spin atom"));
        }
        let d = self
            .mattis_map
            .first()
            .and_then(|r| r.first())
            .map(|h| h.len())
            .unwrap_or(0);
        if d == 0 {
            return Err(Error::validation("mattis dimension must be at least 1"));
        }
        for row in &self.mattis_map {
            if row.len() != self.pattern.len() {
                return Err(Error::validation(
                    "mattis map needs one entry per pattern atom",
                ));
            }
            if row.iter().any(|h| h.len() != d || h.iter().any(|v| !v.is_finite())) {
                return Err(Error::validation("mattis values must be finite vectors of equal length"));
            }
        }
        let gram = self.spin.atoms.iter().fold(SymMatrix::zeros(dim), |acc, t| {
            &acc + &SymMatrix::outer(t)
        });
        if gram.min_eigenvalue() <= 1e-12 {
            warnings.push(String::from("spin atoms do not span the spin space"));
        }
        Ok(())
    }
}

/// One species of a multitype model: weight λ_s and a scalar site model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Species {
    pub weight: f64,
    #[serde(flatten)]
    pub site: SiteModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Vector,
    Multitype,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Structure {
    Vector(SiteModel),
    Multitype(Vec<Species>),
}

/// Full description of a model instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRaw", into = "ModelRaw")]
pub struct ModelSpec {
    xi: XiPoly,
    structure: Structure,
    warnings: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRaw {
    mode: Mode,
    xi: XiPoly,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spin: Option<DiscreteMeasure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pattern: Option<DiscreteMeasure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mattis_map: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    species: Option<Vec<Species>>,
}

impl TryFrom<ModelRaw> for ModelSpec {
    type Error = Error;
    fn try_from(r: ModelRaw) -> Result<Self> {
        match r.mode {
            Mode::Vector => {
                if r.species.is_some() {
                    return Err(Error::validation("vector mode does not take species"));
                }
                let (Some(spin), Some(pattern), Some(mattis_map)) = (r.spin, r.pattern, r.mattis_map)
                else {
                    return Err(Error::validation(
                        "vector mode needs spin, pattern and mattis_map",
                    ));
                };
                ModelSpec::vector(
                    SiteModel {
                        spin,
                        pattern,
                        mattis_map,
                    },
                    r.xi,
                )
            }
            Mode::Multitype => {
                if r.spin.is_some() || r.pattern.is_some() || r.mattis_map.is_some() {
                    return Err(Error::validation(
                        "multitype mode takes per-species data only",
                    ));
                }
                let species = r
                    .species
                    .ok_or_else(|| Error::validation("multitype mode needs species"))?;
                ModelSpec::multitype(species, r.xi)
            }
        }
    }
}

impl From<ModelSpec> for ModelRaw {
    fn from(m: ModelSpec) -> Self {
        match m.structure {
            Structure::Vector(site) => ModelRaw {
                mode: Mode::Vector,
                xi: m.xi,
                spin: Some(site.spin),
                pattern: Some(site.pattern),
                mattis_map: Some(site.mattis_map),
                species: None,
            },
            Structure::Multitype(species) => ModelRaw {
                mode: Mode::Multitype,
                xi: m.xi,
                spin: None,
                pattern: None,
                mattis_map: None,
                species: Some(species),
            },
        }
    }
}

impl ModelSpec {
    pub fn vector(site: SiteModel, xi: XiPoly) -> Result<Self> {
        let mut warnings = Vec::new();
        site.validate(xi.depends_only_on_diagonal(), &mut warnings)?;
        if xi.dim() != site.spin_dim() {
            return Err(Error::validation(format!(
                "xi acts on {}x{} matrices but spins have dimension {}",
                xi.dim(),
                xi.dim(),
                site.spin_dim()
            )));
        }
        Ok(ModelSpec {
            xi,
            structure: Structure::Vector(site),
            warnings,
        })
    }

    pub fn multitype(species: Vec<Species>, xi: XiPoly) -> Result<Self> {
        let mut warnings = Vec::new();
        if species.is_empty() {
            return Err(Error::validation("multitype model needs at least one species"));
        }
        if xi.dim() != species.len() {
            return Err(Error::validation("xi dimension must equal the number of species"));
        }
        if !xi.depends_only_on_diagonal() {
            return Err(Error::validation(
                "multitype xi may only involve per-species (diagonal) overlaps",
            ));
        }
        let mut total = 0.0;
        for (s, sp) in species.iter().enumerate() {
            if !(sp.weight.is_finite() && sp.weight >= 0.0) {
                return Err(Error::validation(format!("species {s} weight must be >= 0")));
            }
            total += sp.weight;
            sp.site.validate(true, &mut warnings)?;
            if sp.site.spin_dim() != 1 {
                return Err(Error::validation(format!("species {s} spins must be scalar")));
            }
        }
        if fabs(total - 1.0) > 1e-12 {
            return Err(Error::validation("species weights must sum to 1"));
        }
        Ok(ModelSpec {
            xi,
            structure: Structure::Multitype(species),
            warnings,
        })
    }

    /// The bipartite ±1 model: D=2, ξ = a₁₁a₂₂, h(τ,χ) = (τ₁χ₁, τ₂χ₂).
    pub fn rbm() -> Self {
        let pm = [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]];
        let atoms: Vec<Vec<f64>> = pm.iter().map(|a| a.to_vec()).collect();
        let mattis_map = atoms
            .iter()
            .map(|t| atoms.iter().map(|c| vec![t[0] * c[0], t[1] * c[1]]).collect())
            .collect();
        let site = SiteModel {
            spin: DiscreteMeasure::uniform(atoms.clone()),
            pattern: DiscreteMeasure::uniform(atoms),
            mattis_map,
        };
        let xi = XiPoly::from_terms(2, &[(1.0, &[(0, 0, 1), (1, 1, 1)])]).expect("static xi");
        ModelSpec::vector(site, xi).expect("static model")
    }

    /// The same model read as two species of equal weight with ξ = 2a₁a₂.
    pub fn rbm_multitype() -> Self {
        let pm = vec![vec![1.0], vec![-1.0]];
        let site = SiteModel {
            spin: DiscreteMeasure::uniform(pm.clone()),
            pattern: DiscreteMeasure::uniform(pm.clone()),
            mattis_map: pm
                .iter()
                .map(|t| pm.iter().map(|c| vec![t[0] * c[0]]).collect())
                .collect(),
        };
        let species = vec![
            Species {
                weight: 0.5,
                site: site.clone(),
            },
            Species { weight: 0.5, site },
        ];
        let xi = XiPoly::from_terms(2, &[(2.0, &[(0, 0, 1), (1, 1, 1)])]).expect("static xi");
        ModelSpec::multitype(species, xi).expect("static model")
    }

    pub fn xi(&self) -> &XiPoly {
        &self.xi
    }

    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    pub fn mode(&self) -> Mode {
        match self.structure {
            Structure::Vector(_) => Mode::Vector,
            Structure::Multitype(_) => Mode::Multitype,
        }
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// D (vector) or number of species (multitype).
    pub fn spin_dim(&self) -> usize {
        self.xi.dim()
    }

    /// Dimension of x and m.
    pub fn mattis_dim(&self) -> usize {
        match &self.structure {
            Structure::Vector(s) => s.mattis_dim(),
            Structure::Multitype(sp) => sp.iter().map(|s| s.site.mattis_dim()).sum(),
        }
    }

    pub fn pattern_dim(&self) -> usize {
        match &self.structure {
            Structure::Vector(s) => s.pattern_dim(),
            Structure::Multitype(sp) => sp.iter().map(|s| s.site.pattern_dim()).sum(),
        }
    }

    /// Lipschitz constant of x ↦ φ(y;x).
    pub fn h_inf(&self) -> f64 {
        match &self.structure {
            Structure::Vector(s) => s.h_inf(),
            Structure::Multitype(sp) => sqrt(
                sp.iter()
                    .map(|s| {
                        let h = s.weight * s.site.h_inf();
                        h * h
                    })
                    .sum(),
            ),
        }
    }

    /// Offsets of each species' block inside x (multitype only).
    pub fn species_offsets(&self) -> Vec<usize> {
        match &self.structure {
            Structure::Vector(_) => vec![0],
            Structure::Multitype(sp) => {
                let mut off = Vec::with_capacity(sp.len());
                let mut acc = 0;
                for s in sp {
                    off.push(acc);
                    acc += s.site.mattis_dim();
                }
                off
            }
        }
    }

    pub fn check_x(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.mattis_dim() {
            return Err(Error::validation(format!(
                "x has length {} but the magnetization has dimension {}",
                x.len(),
                self.mattis_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("x must be finite"));
        }
        Ok(())
    }

    /// Checks that `y` is a valid argument (PSD, right size, diagonal in multitype mode).
    pub(crate) fn check_y(&self, y: &SymMatrix) -> Result<()> {
        if y.dim() != self.spin_dim() {
            return Err(Error::validation("matrix dimension does not match the model"));
        }
        if !y.is_finite() {
            return Err(Error::validation("matrix entries must be finite"));
        }
        if !y.is_psd() {
            return Err(Error::validation("matrix is not positive semidefinite"));
        }
        if self.mode() == Mode::Multitype {
            for i in 0..y.dim() {
                for j in i + 1..y.dim() {
                    if y.get(i, j) != 0.0 {
                        return Err(Error::validation(
                            "multitype mode uses diagonal matrices only",
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Certified lower bound on the contraction threshold t⋆.
    pub fn t_star_lower_bound(&self) -> TStarBound {
        let (domain, factor) = match &self.structure {
            Structure::Vector(_) => (Domain::Ball, 16.0),
            Structure::Multitype(sp) => (
                Domain::Cube,
                16.0 * sp.iter().map(|s| s.weight).fold(0.0, f64::max),
            ),
        };
        let (k, sampled) = self.xi.hessian_bound(domain);
        if k == 0.0 || factor == 0.0 {
            return TStarBound {
                t_star: f64::INFINITY,
                lipschitz: 0.0,
                sampled_lipschitz: sampled,
                unbounded: true,
            };
        }
        TStarBound {
            t_star: 1.0 / (factor * k),
            lipschitz: k,
            sampled_lipschitz: sampled,
            unbounded: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rbm_shapes() {
        let m = ModelSpec::rbm();
        assert_eq!((m.spin_dim(), m.mattis_dim(), m.pattern_dim()), (2, 2, 2));
        assert!((m.h_inf() - core::f64::consts::SQRT_2).abs() < 1e-15);
        assert!(m.warnings().is_empty());
    }

    #[test]
    fn rbm_t_star() {
        let b = ModelSpec::rbm().t_star_lower_bound();
        assert!((b.t_star - 0.0625).abs() < 1e-12);
        assert!((b.beta() - 1.0 / (2.0 * core::f64::consts::SQRT_2)).abs() < 1e-12);
        let bm = ModelSpec::rbm_multitype().t_star_lower_bound();
        assert!((bm.t_star - 0.0625).abs() < 1e-12);
    }

    #[test]
    fn non_diagonal_xi_requires_euclidean_ball() {
        let m = ModelSpec::rbm();
        let site = match m.structure() {
            Structure::Vector(s) => s.clone(),
            _ => unreachable!(),
        };
        let xi = XiPoly::from_terms(2, &[(1.0, &[(0, 1, 2)])]).unwrap();
        assert!(ModelSpec::vector(site, xi).is_err());
    }

    #[test]
    fn pattern_weights_must_sum_to_one() {
        let site = SiteModel {
            spin: DiscreteMeasure::uniform(vec![vec![1.0], vec![-1.0]]),
            pattern: DiscreteMeasure {
                atoms: vec![vec![1.0]],
                weights: vec![0.9],
            },
            mattis_map: vec![vec![vec![1.0]], vec![vec![-1.0]]],
        };
        let xi = XiPoly::from_terms(1, &[(1.0, &[(0, 0, 2)])]).unwrap();
        assert!(ModelSpec::vector(site, xi).is_err());
    }

    #[test]
    fn degenerate_spins_warn() {
        let site = SiteModel {
            spin: DiscreteMeasure::uniform(vec![vec![0.5, 0.5]]),
            pattern: DiscreteMeasure::uniform(vec![vec![1.0]]),
            mattis_map: vec![vec![vec![1.0]]],
        };
        let xi = XiPoly::from_terms(2, &[(1.0, &[(0, 0, 1), (1, 1, 1)])]).unwrap();
        let m = ModelSpec::vector(site, xi).unwrap();
        assert_eq!(m.warnings().len(), 1);
    }

    #[test]
    fn json_round_trip() {
        for m in [ModelSpec::rbm(), ModelSpec::rbm_multitype()] {
            let s = serde_json::to_string(&m).unwrap();
            let back: ModelSpec = serde_json::from_str(&s).unwrap();
            assert_eq!(back, m);
            assert_eq!(serde_json::to_string(&back).unwrap(), s);
        }
    }
}
