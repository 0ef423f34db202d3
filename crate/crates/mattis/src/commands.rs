//! One function per command, each turning a validated config into a
//! [`Report`].

use mattis_core::cascade::{CascadeConfig, CascadeEngine};
use mattis_core::expr::GFunction;
use mattis_core::hj::{self, GridField};
use mattis_core::ldp::{standardize_model, LdpConfig, LdpEngine};
use mattis_core::oracle::OracleSpec;
use mattis_core::quadrature::DEFAULT_ORDER;
use mattis_core::rbm::{assemble_report, magnetization_sum, rbm_engine};
use mattis_core::rs::{RsConfig, RsEngine};
use mattis_core::{ModelSpec, PiecewisePath, SymMatrix};

use crate::config::{
    Command, FreeEnergyParams, HjGridParams, MGrid, OracleCompareParams, PathSolveParams, RateFunctionParams,
    RbmParams, RsSolveParams, RunConfig,
};
use crate::error::CliResult;
use crate::output::{cells, matrix_columns, vector_columns, Cell, Report, Table};
use crate::parallel;

pub const DEFAULT_SEED: u64 = 1;

/// Seed actually used: the command-line override, else the config, else
/// [`DEFAULT_SEED`].
pub fn effective_seed(cfg: &RunConfig, override_seed: Option<u64>) -> u64 {
    override_seed.or(cfg.command.seed()).unwrap_or(DEFAULT_SEED)
}

pub fn execute(cfg: &RunConfig, override_seed: Option<u64>) -> CliResult<Report> {
    let seed = effective_seed(cfg, override_seed);
    match &cfg.command {
        Command::RsSolve(p) => rs_solve(cfg.model()?, p),
        Command::PathSolve(p) => path_solve(cfg.model()?, p, seed),
        Command::FreeEnergy(p) => free_energy(cfg.model()?, p),
        Command::RateFunction(p) => rate_function(cfg.model()?, p),
        Command::HjGrid(p) => hj_grid(cfg.model()?, p),
        Command::OracleCompare(p) => oracle_compare(cfg.model()?, p, seed),
        Command::Rbm(p) => rbm(p),
    }
}

fn rs_solve(model: &ModelSpec, p: &RsSolveParams) -> CliResult<Report> {
    let defaults = RsConfig::default();
    let engine = RsEngine::new(
        model,
        RsConfig {
            quad_order: p.quad_order.unwrap_or(DEFAULT_ORDER),
            tol: p.tol.unwrap_or(defaults.tol),
            max_iter: p.max_iter.unwrap_or(defaults.max_iter),
            damping: p.damping.unwrap_or(defaults.damping),
            allow_uncertified: p.allow_uncertified,
        },
    )?;
    let xs = p.x.to_vec();
    let results = parallel::par_map(xs.len(), |i| {
        Ok((engine.g_value(p.t, &p.y, &xs[i])?, engine.grad_phi(&p.y, &xs[i])?))
    })?;

    let d = model.spin_dim();
    let mut columns = vector_columns("x", model.mattis_dim());
    columns.push("g".into());
    columns.extend(matrix_columns("z", d));
    columns.extend(matrix_columns("grad_phi", d));
    columns.extend(["iterations", "residual", "contraction", "certified"].map(String::from));
    let mut table = Table::new("fixed_points", columns);
    let mut worst: f64 = 0.0;
    for (x, (gv, pe)) in xs.iter().zip(&results) {
        let fp = &gv.fixed_point;
        worst = worst.max(fp.final_residual);
        let mut row: Vec<Cell> = cells(x).collect();
        row.push(gv.g.into());
        row.extend(cells(fp.z.upper()));
        row.extend(cells(pe.grad_y.upper()));
        row.extend([
            fp.iterations.into(),
            fp.final_residual.into(),
            fp.contraction_estimate.into(),
            fp.certified.into(),
        ]);
        table.push(row);
    }
    let bound = engine.t_star_bound();
    let mut r = Report::new("rs-solve");
    r.note("t", p.t);
    r.note("t_star_bound", bound.t_star);
    r.note("beta_star_bound", bound.beta());
    r.note("points", xs.len());
    r.note("max_residual", worst);
    r.tables.push(table);
    Ok(r)
}

fn path_solve(model: &ModelSpec, p: &PathSolveParams, seed: u64) -> CliResult<Report> {
    let defaults = CascadeConfig::default();
    let engine = CascadeEngine::new(
        model,
        CascadeConfig {
            quad_order: p.quad_order.unwrap_or(DEFAULT_ORDER),
            tol: p.tol.unwrap_or(defaults.tol),
            allow_uncertified: p.allow_uncertified,
            mc_truncation: p.mc_truncation.unwrap_or(defaults.mc_truncation),
            ..defaults
        },
    )?;
    let xs = p.x.to_vec();
    let q = &p.path;
    let results = parallel::par_map(xs.len(), |i| {
        let fv = engine.f_value(p.t, q, &xs[i])?;
        let psi = engine.psi(q, &xs[i])?;
        Ok((psi, fv))
    })?;
    let mc = match p.mc_samples {
        Some(n) => Some(
            xs.iter()
                .map(|x| parallel::rpc_mc_estimate(&engine, q, x, seed, n))
                .collect::<mattis_core::Result<Vec<_>>>()?,
        ),
        None => None,
    };

    let d = model.spin_dim();
    let mut columns = vector_columns("x", model.mattis_dim());
    columns.extend(["psi", "f", "iterations", "residual", "contraction", "certified"].map(String::from));
    if mc.is_some() {
        columns.extend(["mc_psi", "mc_stderr", "mc_z"].map(String::from));
    }
    let mut points = Table::new("points", columns);
    let mut level_cols: Vec<String> = ["point", "level", "s"].map(String::from).into();
    level_cols.extend(matrix_columns("q", d));
    level_cols.extend(matrix_columns("p", d));
    let mut levels = Table::new("levels", level_cols);
    for (i, (x, (psi, fv))) in xs.iter().zip(&results).enumerate() {
        let fp = &fv.fixed_point;
        let mut row: Vec<Cell> = cells(x).collect();
        row.extend([
            (*psi).into(),
            fv.f.into(),
            fp.iterations.into(),
            fp.final_residual.into(),
            fp.contraction_estimate.into(),
            fp.certified.into(),
        ]);
        if let Some(est) = &mc {
            let e = est[i];
            row.extend([e.value.into(), e.stderr.into(), ((psi - e.value) / e.stderr).into()]);
        }
        points.push(row);
        for l in 0..q.levels().len() {
            let mut row: Vec<Cell> = vec![i.into(), l.into(), q.breaks()[l].into()];
            row.extend(cells(q.levels()[l].upper()));
            row.extend(cells(fp.p.levels()[l].upper()));
            levels.push(row);
        }
    }
    let mut r = Report::new("path-solve");
    r.note("t", p.t);
    r.note("jumps", q.jumps());
    r.note("points", xs.len());
    if let Some(n) = p.mc_samples {
        r.note("mc_samples", n);
        r.note("seed", seed);
    }
    r.tables.push(points);
    r.tables.push(levels);
    Ok(r)
}

/// Owned inputs of an inf-sup problem; engines borrow from it.
struct Problem {
    working: ModelSpec,
    t: f64,
    q: PiecewisePath,
    g: GFunction,
    beta: Option<f64>,
    cfg: LdpConfig,
}

impl Problem {
    fn new(model: &ModelSpec, p: &FreeEnergyParams) -> CliResult<Self> {
        let defaults = LdpConfig::default();
        let cfg = LdpConfig {
            quad_order: p.quad_order.unwrap_or(defaults.quad_order),
            grid_per_axis: p.grid_per_axis.unwrap_or(defaults.grid_per_axis),
            allow_uncertified: p.allow_uncertified,
            ..defaults
        };
        Ok(match (p.beta, p.t) {
            (Some(beta), _) => {
                let std = standardize_model(model, beta, p.g.clone())?;
                Problem {
                    working: std.working,
                    t: std.t,
                    q: std.q,
                    g: std.g_tilde,
                    beta: Some(beta),
                    cfg,
                }
            }
            (None, t) => {
                let t = t.unwrap_or(0.0);
                Problem {
                    q: p.path.clone().unwrap_or_else(|| PiecewisePath::zero(model.spin_dim())),
                    working: model.clone(),
                    t,
                    g: p.g.clone(),
                    beta: None,
                    cfg,
                }
            }
        })
    }

    fn engine(&self) -> CliResult<LdpEngine<mattis_core::ldp::EnrichedField<'_>>> {
        Ok(LdpEngine::enriched(&self.working, self.t, self.q.clone(), self.cfg)?)
    }

    fn describe(&self, r: &mut Report) {
        if let Some(b) = self.beta {
            r.note("beta", b);
        }
        r.note("t", self.t);
        r.note("jumps", self.q.jumps());
        r.note("g", self.g.source());
    }
}

fn free_energy(model: &ModelSpec, p: &FreeEnergyParams) -> CliResult<Report> {
    let prob = Problem::new(model, p)?;
    let engine = prob.engine()?;
    let lfe = parallel::limit_free_energy(&engine, &prob.g)?;
    let dim = lfe.argmin.len();
    let mut columns = vector_columns("m", dim);
    columns.extend(vector_columns("x", dim));
    columns.extend(["f_star", "grad_norm"].map(String::from));
    let mut table = Table::new("minimizer", columns);
    let mut row: Vec<Cell> = cells(&lfe.argmin).collect();
    row.extend(cells(&lfe.f_star.argmax));
    row.extend([lfe.f_star.value.into(), lfe.f_star.grad_norm.into()]);
    table.push(row);

    let mut r = Report::new("free-energy");
    prob.describe(&mut r);
    r.note("limit_free_energy", lfe.value);
    for (i, v) in lfe.argmin.iter().enumerate() {
        r.note(&format!("argmin_{}", i + 1), *v);
    }
    r.note("simplex_iterations", lfe.simplex_iterations);
    r.note("simplex_diameter", lfe.simplex_diameter);
    r.tables.push(table);
    Ok(r)
}

fn rate_function(model: &ModelSpec, p: &RateFunctionParams) -> CliResult<Report> {
    let prob = Problem::new(model, &p.problem())?;
    let engine = prob.engine()?;
    let grid = p.grid.points();
    let rt = parallel::rate_function(&engine, &prob.g, &grid)?;
    let dim = rt.m_star.len();
    let mut columns = vector_columns("m", dim);
    columns.extend(["f_star", "rate", "is_minimizer"].map(String::from));
    columns.extend(vector_columns("x", dim));
    let mut table = Table::new("rate_table", columns);
    for pt in &rt.points {
        let mut row: Vec<Cell> = cells(&pt.m).collect();
        row.extend([pt.f_star.into(), pt.rate.into(), pt.is_minimizer.into()]);
        row.extend(cells(&pt.argmax));
        table.push(row);
    }
    let mut r = Report::new("rate-function");
    prob.describe(&mut r);
    r.note("limit_free_energy", rt.limit_free_energy);
    r.note("normalization", rt.normalization);
    r.note("min_rate", rt.min_rate());
    for (i, v) in rt.m_star.iter().enumerate() {
        r.note(&format!("m_star_{}", i + 1), *v);
    }
    r.tables.push(table);
    Ok(r)
}

/// Radical inverse of `i` in base `b`, the Halton sequence coordinate.
fn halton(mut i: usize, b: usize) -> f64 {
    let (mut f, mut r) = (1.0, 0.0);
    while i > 0 {
        f /= b as f64;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

const PRIMES: [usize; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

fn field_table(field: &GridField, all: bool) -> Table {
    let mut columns = vec!["t".to_string()];
    columns.extend(vector_columns("y", field.dim()));
    columns.push("value".into());
    let mut table = Table::new("field", columns);
    let first = if all { 0 } else { field.slices.len() - 1 };
    for s in first..field.slices.len() {
        for (k, v) in field.slices[s].iter().enumerate() {
            let mut row: Vec<Cell> = vec![field.times[s].into()];
            row.extend(cells(&field.coords(k)));
            row.push((*v).into());
            table.push(row);
        }
    }
    table
}

fn hj_grid(model: &ModelSpec, p: &HjGridParams) -> CliResult<Report> {
    let engine = RsEngine::new(
        model,
        RsConfig {
            quad_order: p.quad_order.unwrap_or(DEFAULT_ORDER),
            tol: 1e-12,
            ..RsConfig::default()
        },
    )?;
    let d = model.spin_dim();
    if p.probes > 0 && d + 1 > PRIMES.len() {
        return Err(crate::error::CliError::config("probes support at most 7 spin dimensions"));
    }
    let field = hj::grid_viscosity_solve(&engine, &p.grid, p.t_final, &p.x)?;
    let mut r = Report::new("hj-grid");
    r.note("t_final", p.t_final);
    r.note("spacing", field.spacing);
    r.note("dt", field.dt);
    r.note("steps", field.times.len() - 1);
    r.note("courant", field.courant);
    r.note("nodes", field.len());

    if let Some(c) = &p.compare {
        let nodes = field.sublattice(c.lo, c.hi, c.stride);
        let cmp = hj::compare_with_characteristics(&engine, &field, &nodes, &p.x)?;
        r.note("compared_nodes", cmp.nodes);
        r.note("max_abs_diff", cmp.max_abs_diff);
        for (i, v) in cmp.worst_coords.iter().enumerate() {
            r.note(&format!("worst_y_{}", i + 1), *v);
        }
    }

    if p.probes > 0 {
        let h = p.residual_step;
        let lo: Vec<f64> = p.grid.lo.iter().map(|v| v.max(0.0) + 2.0 * h).collect();
        let probes = parallel::par_map(p.probes, |i| {
            let k = i + 1;
            let t = h + halton(k, PRIMES[0]) * (p.t_final - 2.0 * h);
            let y: Vec<f64> = (0..d)
                .map(|a| lo[a] + halton(k, PRIMES[a + 1]) * (p.grid.hi[a] - lo[a]).max(0.0))
                .collect();
            let ym = SymMatrix::diag(&y);
            let cp = hj::characteristics_probe(&engine, t, &ym, &p.x)?;
            let res = hj::hj_residual(&engine, t, &ym, &p.x, h)?;
            Ok((t, y, cp, res))
        })?;
        let mut columns = vec!["t".to_string()];
        columns.extend(vector_columns("y", d));
        columns.extend(["char_residual", "hj_residual", "invertibility_gap"].map(String::from));
        let mut table = Table::new("probes", columns);
        let (mut worst_char, mut worst_hj): (f64, f64) = (0.0, 0.0);
        for (t, y, cp, res) in &probes {
            worst_char = worst_char.max(cp.residual);
            worst_hj = worst_hj.max(res.residual);
            let mut row: Vec<Cell> = vec![(*t).into()];
            row.extend(cells(y));
            row.extend([cp.residual.into(), res.residual.into(), cp.invertibility_gap.into()]);
            table.push(row);
        }
        r.note("probes", p.probes);
        r.note("max_char_residual", worst_char);
        r.note("max_hj_residual", worst_hj);
        r.tables.push(table);
    }
    r.tables.insert(0, field_table(&field, p.all_slices));
    Ok(r)
}

/// Least-squares slope of `ys` against `xs` and its standard error when each
/// `ys[i]` carries independent noise `se[i]`.
pub fn trend_slope(xs: &[f64], ys: &[f64], se: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = xs.iter().zip(ys).map(|(x, y)| (x - mx) * y).sum::<f64>() / sxx;
    let var: f64 = xs.iter().zip(se).map(|(x, s)| (x - mx).powi(2) * s * s).sum();
    (slope, var.sqrt() / sxx)
}

/// Bound on `|mean − prediction|` at size N: three standard errors plus 0.5/N.
pub fn gap_bound(stderr: f64, n: usize) -> f64 {
    3.0 * stderr + 0.5 / n as f64
}

fn oracle_compare(model: &ModelSpec, p: &OracleCompareParams, seed: u64) -> CliResult<Report> {
    let std = standardize_model(model, p.beta, p.g.clone())?;
    let spec = OracleSpec::standard(&std)?;
    let defaults = LdpConfig::default();
    let cfg = LdpConfig {
        quad_order: p.quad_order.unwrap_or(defaults.quad_order),
        grid_per_axis: p.grid_per_axis.unwrap_or(defaults.grid_per_axis),
        ..defaults
    };
    let engine = LdpEngine::enriched(&std.working, std.t, std.q.clone(), cfg)?;
    let prediction = parallel::limit_free_energy(&engine, &std.g_tilde)?.value;
    let extended = std.extended_dim();
    let lambdas = p
        .tilts
        .iter()
        .map(|y| {
            let mut padded = y.clone();
            padded.resize(extended, 0.0);
            engine.cgf_lambda(&std.g_tilde, &padded)
        })
        .collect::<mattis_core::Result<Vec<_>>>()?;

    let mut ns = p.n.clone();
    ns.sort_unstable();
    ns.dedup();
    let mut fe = Table::new(
        "free_energy",
        ["n", "samples", "mean", "stderr", "prediction", "gap", "bound", "within_bound"]
            .map(String::from)
            .into(),
    );
    let mut cgf_cols: Vec<String> = ["n", "tilt"].map(String::from).into();
    cgf_cols.extend(vector_columns("y", model.mattis_dim()));
    cgf_cols.extend(["mean", "stderr", "prediction", "gap", "bound", "within_bound"].map(String::from));
    let mut cgf = Table::new("cgf", cgf_cols);
    let (mut gaps, mut ses, mut xs) = (Vec::new(), Vec::new(), Vec::new());
    let mut last_fe_ok = true;
    let mut last_cgf_ok = true;
    for &n in &ns {
        let st = parallel::disorder_stats(&spec, n, p.samples, seed)?;
        let gap = st.mean - prediction;
        let bound = gap_bound(st.stderr, n);
        let ok = gap.abs() <= bound;
        fe.push(vec![
            n.into(),
            p.samples.into(),
            st.mean.into(),
            st.stderr.into(),
            prediction.into(),
            gap.into(),
            bound.into(),
            ok.into(),
        ]);
        xs.push(n as f64);
        gaps.push(gap.abs());
        ses.push(st.stderr);
        last_fe_ok = ok;
        if !p.tilts.is_empty() {
            let stats = parallel::empirical_cgf(&spec, n, &p.tilts, p.samples, seed)?;
            last_cgf_ok = true;
            for (k, (st, lam)) in stats.iter().zip(&lambdas).enumerate() {
                let gap = st.mean - lam;
                let bound = gap_bound(st.stderr, n);
                let ok = gap.abs() <= bound;
                last_cgf_ok &= ok;
                let mut row: Vec<Cell> = vec![n.into(), k.into()];
                row.extend(cells(&p.tilts[k]));
                row.extend([st.mean.into(), st.stderr.into(), (*lam).into(), gap.into(), bound.into(), ok.into()]);
                cgf.push(row);
            }
        }
    }

    let mut r = Report::new("oracle-compare");
    r.note("beta", p.beta);
    r.note("g", p.g.source());
    r.note("samples", p.samples);
    r.note("seed", seed);
    r.note("prediction", prediction);
    let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" };
    let mut trend_ok = true;
    if xs.len() >= 2 {
        let (slope, se) = trend_slope(&xs, &gaps, &ses);
        trend_ok = slope <= 2.0 * se;
        r.note("trend_slope", slope);
        r.note("trend_slope_stderr", se);
        r.note("trend", verdict(trend_ok));
    }
    r.note("final_gap", verdict(last_fe_ok));
    if !p.tilts.is_empty() {
        r.note("cgf", verdict(last_cgf_ok));
    }
    if p.check {
        let pass = trend_ok && last_fe_ok && last_cgf_ok;
        r.note("verdict", verdict(pass));
        r.passed = Some(pass);
    }
    r.tables.push(fe);
    if !p.tilts.is_empty() {
        r.tables.push(cgf);
    }
    Ok(r)
}

fn default_rbm_grid() -> MGrid {
    MGrid::Regular {
        lo: vec![-0.9, -0.9],
        hi: vec![0.9, 0.9],
        per_axis: 7,
    }
}

fn rbm(p: &RbmParams) -> CliResult<Report> {
    let defaults = LdpConfig::default();
    let cfg = LdpConfig {
        quad_order: p.quad_order.unwrap_or(defaults.quad_order),
        grid_per_axis: p.grid_per_axis.unwrap_or(defaults.grid_per_axis),
        ..defaults
    };
    let engine = rbm_engine(p.beta, cfg)?;
    let lfe = parallel::limit_free_energy(&engine, &magnetization_sum())?;
    let grid = p.grid.clone().unwrap_or_else(default_rbm_grid).points();
    let rows = parallel::f_star_rows(&engine, &grid)?;
    let report = assemble_report(p.beta, &engine, &lfe, rows);
    let bound = ModelSpec::rbm().t_star_lower_bound();

    let mut table = Table::new("j_table", ["m_1", "m_2", "J"].map(String::from).into());
    for (m, j) in &report.j_table {
        table.push(vec![m[0].into(), m[1].into(), (*j).into()]);
    }
    let mut r = Report::new("rbm");
    r.note("beta", p.beta);
    r.note("t", report.t);
    r.note("t_star_bound", bound.t_star);
    r.note("beta_star_bound", bound.beta());
    r.note("limit_free_energy", report.limit_free_energy);
    r.note("argmin_1", report.argmin[0]);
    r.note("argmin_2", report.argmin[1]);
    r.tables.push(table);
    Ok(r)
}
