//! Run configuration: a model description plus a `[command]` table.
//!
//! The model is given inline (the `ModelSpec` fields at top level), through
//! `model_file = "<path>"` relative to the config file, or as
//! `preset = "rbm" | "rbm-multitype"`. The command table carries `name` and
//! the command parameters.

use std::path::{Path, PathBuf};

use mattis_core::expr::GFunction;
use mattis_core::hj::GridSpec;
use mattis_core::{ModelSpec, PiecewisePath, SymMatrix};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const COMMANDS: [&str; 7] = [
    "rs-solve",
    "path-solve",
    "free-energy",
    "rate-function",
    "hj-grid",
    "oracle-compare",
    "rbm",
];

/// Largest accepted quadrature order.
const MAX_QUAD_ORDER: usize = 200;

/// One point or a list of points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Points {
    One(Vec<f64>),
    Many(Vec<Vec<f64>>),
}

impl Points {
    pub fn to_vec(&self) -> Vec<Vec<f64>> {
        match self {
            Points::One(p) => vec![p.clone()],
            Points::Many(ps) => ps.clone(),
        }
    }
}

/// m-points: a regular grid with both endpoints included, or an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MGrid {
    Regular {
        lo: Vec<f64>,
        hi: Vec<f64>,
        per_axis: usize,
    },
    Explicit {
        points: Vec<Vec<f64>>,
    },
}

impl MGrid {
    /// Points in row-major order, last axis fastest.
    pub fn points(&self) -> Vec<Vec<f64>> {
        match self {
            MGrid::Explicit { points } => points.clone(),
            MGrid::Regular { lo, hi, per_axis } => {
                let n = *per_axis;
                let axis = |d: usize, i: usize| -> f64 {
                    if n == 1 {
                        0.5 * (lo[d] + hi[d])
                    } else {
                        lo[d] + (hi[d] - lo[d]) * i as f64 / (n - 1) as f64
                    }
                };
                let total = n.pow(lo.len() as u32);
                (0..total)
                    .map(|mut k| {
                        let mut p = vec![0.0; lo.len()];
                        for d in (0..lo.len()).rev() {
                            p[d] = axis(d, k % n);
                            k /= n;
                        }
                        p
                    })
                    .collect()
            }
        }
    }

    fn validate(&self, dim: usize) -> CliResult<()> {
        match self {
            MGrid::Explicit { points } => {
                if points.is_empty() {
                    return Err(CliError::config("grid has no points"));
                }
                for p in points {
                    check_vec("grid point", p, dim)?;
                }
            }
            MGrid::Regular { lo, hi, per_axis } => {
                check_vec("grid lo", lo, dim)?;
                check_vec("grid hi", hi, dim)?;
                if lo.iter().zip(hi).any(|(a, b)| a > b) {
                    return Err(CliError::config("grid lo must not exceed hi"));
                }
                if *per_axis == 0 || per_axis.checked_pow(dim as u32).map_or(true, |n| n > 1_000_000) {
                    return Err(CliError::config("grid per_axis must be positive with at most 10^6 points in total"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RsSolveParams {
    pub t: f64,
    pub y: SymMatrix,
    pub x: Points,
    #[serde(default)]
    pub quad_order: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub damping: Option<f64>,
    #[serde(default)]
    pub allow_uncertified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSolveParams {
    #[serde(default)]
    pub t: f64,
    pub path: PiecewisePath,
    pub x: Points,
    #[serde(default)]
    pub quad_order: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub allow_uncertified: bool,
    /// Also estimate ψ by sampling truncated cascades.
    #[serde(default)]
    pub mc_samples: Option<usize>,
    #[serde(default)]
    pub mc_truncation: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Either `beta` (the original model, standardized internally) or `t` with an
/// optional enrichment `path` (default `0̂`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeEnergyParams {
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub t: Option<f64>,
    #[serde(default)]
    pub path: Option<PiecewisePath>,
    pub g: GFunction,
    #[serde(default)]
    pub quad_order: Option<usize>,
    #[serde(default)]
    pub grid_per_axis: Option<usize>,
    #[serde(default)]
    pub allow_uncertified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateFunctionParams {
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub t: Option<f64>,
    #[serde(default)]
    pub path: Option<PiecewisePath>,
    pub g: GFunction,
    pub grid: MGrid,
    #[serde(default)]
    pub quad_order: Option<usize>,
    #[serde(default)]
    pub grid_per_axis: Option<usize>,
    #[serde(default)]
    pub allow_uncertified: bool,
}

impl RateFunctionParams {
    pub fn problem(&self) -> FreeEnergyParams {
        FreeEnergyParams {
            beta: self.beta,
            t: self.t,
            path: self.path.clone(),
            g: self.g.clone(),
            quad_order: self.quad_order,
            grid_per_axis: self.grid_per_axis,
            allow_uncertified: self.allow_uncertified,
        }
    }
}

/// Nodes of the final slice compared against the characteristic solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareRegion {
    pub lo: f64,
    pub hi: f64,
    #[serde(default = "one")]
    pub stride: usize,
}

fn one() -> usize {
    1
}

fn default_residual_step() -> f64 {
    1e-4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HjGridParams {
    pub t_final: f64,
    pub x: Vec<f64>,
    pub grid: GridSpec,
    #[serde(default)]
    pub compare: Option<CompareRegion>,
    /// Number of interior points at which the PDE residual is probed.
    #[serde(default)]
    pub probes: usize,
    #[serde(default = "default_residual_step")]
    pub residual_step: f64,
    /// Export every time slice instead of the final one.
    #[serde(default)]
    pub all_slices: bool,
    #[serde(default)]
    pub quad_order: Option<usize>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleCompareParams {
    pub beta: f64,
    pub g: GFunction,
    pub n: Vec<usize>,
    pub samples: usize,
    /// CGF tilts compared with Λ(y) in addition to the free energy.
    #[serde(default)]
    pub tilts: Vec<Vec<f64>>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub quad_order: Option<usize>,
    #[serde(default)]
    pub grid_per_axis: Option<usize>,
    /// Evaluate the trend and final-gap checks and fail the run on a miss.
    #[serde(default = "yes")]
    pub check: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RbmParams {
    pub beta: f64,
    #[serde(default)]
    pub grid: Option<MGrid>,
    #[serde(default)]
    pub quad_order: Option<usize>,
    #[serde(default)]
    pub grid_per_axis: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    RsSolve(RsSolveParams),
    PathSolve(PathSolveParams),
    FreeEnergy(FreeEnergyParams),
    RateFunction(RateFunctionParams),
    HjGrid(HjGridParams),
    OracleCompare(OracleCompareParams),
    Rbm(RbmParams),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::RsSolve(_) => "rs-solve",
            Command::PathSolve(_) => "path-solve",
            Command::FreeEnergy(_) => "free-energy",
            Command::RateFunction(_) => "rate-function",
            Command::HjGrid(_) => "hj-grid",
            Command::OracleCompare(_) => "oracle-compare",
            Command::Rbm(_) => "rbm",
        }
    }

    pub fn quad_order(&self) -> Option<usize> {
        match self {
            Command::RsSolve(p) => p.quad_order,
            Command::PathSolve(p) => p.quad_order,
            Command::FreeEnergy(p) => p.quad_order,
            Command::RateFunction(p) => p.quad_order,
            Command::HjGrid(p) => p.quad_order,
            Command::OracleCompare(p) => p.quad_order,
            Command::Rbm(p) => p.quad_order,
        }
    }

    /// Seed written in the config, if the command draws random numbers.
    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::PathSolve(p) => p.seed,
            Command::OracleCompare(p) => p.seed,
            _ => None,
        }
    }

    pub fn uses_seed(&self) -> bool {
        matches!(self, Command::PathSolve(p) if p.mc_samples.is_some())
            || matches!(self, Command::OracleCompare(_))
    }

    fn needs_model(&self) -> bool {
        !matches!(self, Command::Rbm(_))
    }
}

/// A parsed and validated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: Option<ModelSpec>,
    pub model_path: Option<PathBuf>,
    pub command: Command,
    /// SHA-256 of the config bytes followed by the model file bytes.
    pub config_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFormat {
    Toml,
    Json,
}

impl SourceFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => SourceFormat::Json,
            _ => SourceFormat::Toml,
        }
    }
}

fn parse_value(text: &str, format: SourceFormat, what: &str) -> CliResult<Value> {
    match format {
        SourceFormat::Json => {
            serde_json::from_str(text).map_err(|e| CliError::config(format!("{what}: {e}")))
        }
        SourceFormat::Toml => toml::from_str(text).map_err(|e| CliError::config(format!("{what}: {e}"))),
    }
}

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

impl RunConfig {
    /// Reads and validates `path`. `command` is the name given on the command
    /// line, which must agree with the config when both are present.
    pub fn load(path: &Path, command: Option<&str>) -> CliResult<Self> {
        let text = read(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, SourceFormat::from_path(path), base, command)
    }

    pub fn parse(text: &str, format: SourceFormat, base_dir: &Path, command: Option<&str>) -> CliResult<Self> {
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        let Value::Object(mut root) = parse_value(text, format, "config")? else {
            return Err(CliError::config("config must be a table"));
        };
        let mut cmd = match root.remove("command") {
            Some(Value::Object(c)) => c,
            Some(_) => return Err(CliError::config("[command] must be a table")),
            None => serde_json::Map::new(),
        };
        match (cmd.get("name").and_then(Value::as_str), command) {
            (Some(a), Some(b)) if a != b => {
                return Err(CliError::config(format!(
                    "command line asks for `{b}` but the config describes `{a}`"
                )))
            }
            (None, Some(b)) => {
                cmd.insert("name".into(), Value::String(b.into()));
            }
            (None, None) => return Err(CliError::config("no command given")),
            _ => {}
        }
        let name = cmd["name"].as_str().unwrap_or_default().to_string();
        if !COMMANDS.contains(&name.as_str()) {
            return Err(CliError::config(format!(
                "unknown command `{name}`; expected one of {}",
                COMMANDS.join(", ")
            )));
        }
        let command: Command = serde_json::from_value(Value::Object(cmd))
            .map_err(|e| CliError::config(format!("[command] {name}: {e}")))?;

        let model_file = root.remove("model_file");
        let preset = root.remove("preset");
        let inline = !root.is_empty();
        let sources = usize::from(model_file.is_some()) + usize::from(preset.is_some()) + usize::from(inline);
        if sources > 1 {
            return Err(CliError::config(
                "give the model inline, as model_file or as preset, not several",
            ));
        }
        let mut model_path = None;
        let model = if let Some(f) = model_file {
            let rel = f
                .as_str()
                .ok_or_else(|| CliError::config("model_file must be a string"))?;
            let p = base_dir.join(rel);
            let body = read(&p).map_err(|e| match e {
                CliError::Io { path, source } => {
                    CliError::config(format!("model file {}: {source}", path.display()))
                }
                other => other,
            })?;
            hasher.update(body.as_bytes());
            let v = parse_value(&body, SourceFormat::from_path(&p), "model file")?;
            model_path = Some(p);
            Some(model_from_value(v)?)
        } else if let Some(p) = preset {
            Some(match p.as_str() {
                Some("rbm") => ModelSpec::rbm(),
                Some("rbm-multitype") => ModelSpec::rbm_multitype(),
                _ => return Err(CliError::config("preset must be \"rbm\" or \"rbm-multitype\"")),
            })
        } else if inline {
            Some(model_from_value(Value::Object(root))?)
        } else {
            None
        };
        let cfg = RunConfig {
            model,
            model_path,
            command,
            config_hash: format!("{:x}", hasher.finalize()),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The model, or a config error for commands that need one.
    pub fn model(&self) -> CliResult<&ModelSpec> {
        self.model
            .as_ref()
            .ok_or_else(|| CliError::config(format!("command {} needs a model", self.command.name())))
    }

    /// Range and shape checks that run before any computation.
    pub fn validate(&self) -> CliResult<()> {
        if self.command.needs_model() {
            self.model()?;
        }
        if let Some(q) = self.command.quad_order() {
            if q == 0 || q > MAX_QUAD_ORDER {
                return Err(CliError::config(format!("quad_order must be in 1..={MAX_QUAD_ORDER}")));
            }
        }
        match &self.command {
            Command::RsSolve(p) => {
                let m = self.model()?;
                check_time("t", p.t)?;
                if p.y.dim() != m.spin_dim() {
                    return Err(CliError::config("y must be a D×D matrix"));
                }
                check_points(&p.x, m.mattis_dim())?;
                if let Some(d) = p.damping {
                    if !(d > 0.0 && d <= 1.0) {
                        return Err(CliError::config("damping must be in (0, 1]"));
                    }
                }
                check_positive_opt("tol", p.tol)?;
            }
            Command::PathSolve(p) => {
                let m = self.model()?;
                check_time("t", p.t)?;
                if p.path.dim() != m.spin_dim() {
                    return Err(CliError::config("path levels must be D×D matrices"));
                }
                check_points(&p.x, m.mattis_dim())?;
                check_positive_opt("tol", p.tol)?;
                if let Some(n) = p.mc_samples {
                    if n < 100 {
                        return Err(CliError::config("mc_samples must be at least 100"));
                    }
                    if p.path.jumps() == 0 {
                        return Err(CliError::config("mc_samples needs a path with a jump"));
                    }
                }
                if p.mc_truncation == Some(0) {
                    return Err(CliError::config("mc_truncation must be positive"));
                }
            }
            Command::FreeEnergy(p) => self.check_problem(p)?,
            Command::RateFunction(p) => {
                let prob = p.problem();
                self.check_problem(&prob)?;
                p.grid.validate(self.problem_dim(&prob)?)?;
            }
            Command::HjGrid(p) => {
                let m = self.model()?;
                check_time("t_final", p.t_final)?;
                if p.t_final == 0.0 {
                    return Err(CliError::config("t_final must be positive"));
                }
                check_vec("x", &p.x, m.mattis_dim())?;
                check_vec("grid lo", &p.grid.lo, m.spin_dim())?;
                check_vec("grid hi", &p.grid.hi, m.spin_dim())?;
                if !(p.grid.spacing > 0.0) {
                    return Err(CliError::config("grid spacing must be positive"));
                }
                if !(p.residual_step > 0.0) || p.residual_step >= p.t_final {
                    return Err(CliError::config("residual_step must be in (0, t_final)"));
                }
                if p.probes > 10_000 {
                    return Err(CliError::config("at most 10000 probes"));
                }
                if let Some(c) = &p.compare {
                    if !(c.lo <= c.hi) || c.stride == 0 {
                        return Err(CliError::config("compare needs lo <= hi and a positive stride"));
                    }
                }
            }
            Command::OracleCompare(p) => {
                let m = self.model()?;
                check_time("beta", p.beta)?;
                p.g.check_dim(m.mattis_dim()).map_err(|e| CliError::config(e.to_string()))?;
                if p.n.is_empty() || p.n.contains(&0) {
                    return Err(CliError::config("n must list positive system sizes"));
                }
                if p.samples < 2 {
                    return Err(CliError::config("samples must be at least 2"));
                }
                for y in &p.tilts {
                    check_vec("tilt", y, m.mattis_dim())?;
                }
                check_scan(p.grid_per_axis)?;
            }
            Command::Rbm(p) => {
                check_time("beta", p.beta)?;
                if let Some(g) = &p.grid {
                    g.validate(2)?;
                }
                check_scan(p.grid_per_axis)?;
            }
        }
        Ok(())
    }

    fn check_problem(&self, p: &FreeEnergyParams) -> CliResult<()> {
        let m = self.model()?;
        match (p.beta, p.t) {
            (Some(b), None) => {
                check_time("beta", b)?;
                if p.path.is_some() {
                    return Err(CliError::config("beta describes the original model; drop path or use t"));
                }
            }
            (None, Some(t)) => {
                check_time("t", t)?;
                if let Some(q) = &p.path {
                    if q.dim() != m.spin_dim() {
                        return Err(CliError::config("path levels must be D×D matrices"));
                    }
                }
            }
            _ => return Err(CliError::config("give exactly one of beta and t")),
        }
        check_scan(p.grid_per_axis)?;
        self.problem_dim(p)?;
        Ok(())
    }

    /// Dimension the G descriptor is written in.
    fn problem_dim(&self, p: &FreeEnergyParams) -> CliResult<usize> {
        let m = self.model()?;
        let dim = match p.beta {
            Some(b) => mattis_core::ldp::standardize_model(m, b, p.g.clone())?.extended_dim(),
            None => m.mattis_dim(),
        };
        p.g.check_dim(dim).map_err(|e| CliError::config(e.to_string()))?;
        Ok(dim)
    }
}

fn model_from_value(v: Value) -> CliResult<ModelSpec> {
    serde_json::from_value(v).map_err(|e| CliError::config(format!("model: {e}")))
}

fn check_time(what: &str, v: f64) -> CliResult<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(CliError::config(format!("{what} must be finite and non-negative")));
    }
    Ok(())
}

fn check_positive_opt(what: &str, v: Option<f64>) -> CliResult<()> {
    match v {
        Some(v) if !(v > 0.0 && v.is_finite()) => {
            Err(CliError::config(format!("{what} must be positive")))
        }
        _ => Ok(()),
    }
}

fn check_vec(what: &str, v: &[f64], dim: usize) -> CliResult<()> {
    if v.len() != dim {
        return Err(CliError::config(format!("{what} must have length {dim}, got {}", v.len())));
    }
    if v.iter().any(|a| !a.is_finite()) {
        return Err(CliError::config(format!("{what} must be finite")));
    }
    Ok(())
}

fn check_points(p: &Points, dim: usize) -> CliResult<()> {
    let pts = p.to_vec();
    if pts.is_empty() {
        return Err(CliError::config("x lists no points"));
    }
    pts.iter().try_for_each(|x| check_vec("x", x, dim))
}

fn check_scan(n: Option<usize>) -> CliResult<()> {
    match n {
        Some(n) if !(1..=201).contains(&n) => Err(CliError::config("grid_per_axis must be in 1..=201")),
        _ => Ok(()),
    }
}
