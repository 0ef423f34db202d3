//! Data-parallel versions of the sampling and scanning loops.
//!
//! Each loop maps an index range through a pure function and collects in
//! index order, and every sample index owns its random stream. Results are
//! therefore identical for any thread count.

use mattis_core::cascade::{CascadeEngine, RpcEstimate};
use mattis_core::expr::GFunction;
use mattis_core::ldp::{ConcaveField, FStar, LdpEngine, LfeResult, RateTable};
use mattis_core::oracle::{self, Ball, OracleSpec, OracleStats};
use mattis_core::{PiecewisePath, Result};
use rayon::prelude::*;

/// Cascade samples per parallel task.
const MC_CHUNK: usize = 1_000;

/// `(0..n).map(f)` evaluated in parallel, in index order.
pub fn par_map<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

pub fn disorder_stats(spec: &OracleSpec, n: usize, samples: usize, seed: u64) -> Result<OracleStats> {
    let values = par_map(samples, |i| oracle::sample_free_energy(spec, n, seed, i as u64))?;
    OracleStats::from_values(values)
}

pub fn empirical_cgf(
    spec: &OracleSpec,
    n: usize,
    tilts: &[Vec<f64>],
    samples: usize,
    seed: u64,
) -> Result<Vec<OracleStats>> {
    let per = par_map(samples, |i| oracle::sample_cgf(spec, n, tilts, seed, i as u64))?;
    (0..tilts.len())
        .map(|k| OracleStats::from_values(per.iter().map(|v| v[k]).collect()))
        .collect()
}

pub fn empirical_ldp(spec: &OracleSpec, n: usize, ball: &Ball, samples: usize, seed: u64) -> Result<OracleStats> {
    let values = par_map(samples, |i| oracle::sample_ldp(spec, n, ball, seed, i as u64))?;
    OracleStats::from_values(values)
}

pub fn rpc_mc_estimate(
    engine: &CascadeEngine<'_>,
    q: &PiecewisePath,
    x: &[f64],
    seed: u64,
    samples: usize,
) -> Result<RpcEstimate> {
    engine.check_mc_request(q, x, samples)?;
    let chunks = par_map(samples.div_ceil(MC_CHUNK), |c| {
        let lo = c * MC_CHUNK;
        engine.rpc_samples(q, x, seed, lo..(lo + MC_CHUNK).min(samples))
    })?;
    Ok(RpcEstimate::from_samples(&chunks.concat(), seed))
}

pub fn f_star_rows<F: ConcaveField>(engine: &LdpEngine<F>, points: &[Vec<f64>]) -> Result<Vec<(Vec<f64>, FStar)>> {
    par_map(points.len(), |i| Ok((points[i].clone(), engine.f_star(&points[i])?)))
}

/// Same result as [`LdpEngine::limit_free_energy`] with the scan in parallel.
pub fn limit_free_energy<F: ConcaveField>(engine: &LdpEngine<F>, g: &GFunction) -> Result<LfeResult> {
    g.check_dim(engine.domain().dim())?;
    let scan = f_star_rows(engine, &engine.scan_points())?;
    engine.finish_scan(g, &scan)
}

/// Same result as [`LdpEngine::rate_function`] with both scans in parallel.
pub fn rate_function<F: ConcaveField>(engine: &LdpEngine<F>, g: &GFunction, grid: &[Vec<f64>]) -> Result<RateTable> {
    let lfe = limit_free_energy(engine, g)?;
    Ok(RateTable::from_parts(g, &lfe, f_star_rows(engine, grid)?))
}
