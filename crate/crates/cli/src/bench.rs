//! Method x dimension x accuracy sweeps with log-log slope fits.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{BenchSpec, ExperimentConfig, Method, SolverSpec};
use crate::error::{CliError, CliResult};
use crate::output::{num, ArtifactDir};
use crate::run::{build_instance, solve, Outcome, RunReport};

pub const BENCH_COLUMNS: [&str; 8] = ["method", "d", "eps", "seed", "depth", "work", "gap", "status"];
pub const SLOPE_COLUMNS: [&str; 4] = ["method", "d", "slope", "points"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub method: Method,
    pub d: usize,
    pub eps: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub cell: Cell,
    pub depth: Option<u64>,
    pub work: Option<u64>,
    pub gap: Option<f64>,
    /// `ok`, `budget`, or `error: <message>`.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Slope {
    pub method: Method,
    pub d: usize,
    /// Least-squares slope of `ln depth` against `ln(1/eps)`.
    pub slope: f64,
    pub points: usize,
}

/// Grid cells in order of first appearance, deduplicated by `(method, d, eps, seed)`.
pub fn cells(spec: &BenchSpec, default_seed: u64) -> Vec<Cell> {
    let seeds = spec.seeds.clone().unwrap_or_else(|| vec![default_seed]);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for &method in &spec.methods {
        for &d in &spec.d {
            for &eps in &spec.eps {
                for &seed in &seeds {
                    if seen.insert((method, d, eps.to_bits(), seed)) {
                        out.push(Cell { method, d, eps, seed });
                    }
                }
            }
        }
    }
    out
}

fn run_cell(spec: &BenchSpec, cell: Cell) -> CellResult {
    let solver = SolverSpec {
        method: cell.method,
        eps: cell.eps,
        lipschitz: spec.lipschitz,
        radius: spec.radius,
        nu: spec.nu,
        stop_at_gap: true,
        overrides: spec.overrides.clone(),
    };
    let attempt = || -> CliResult<CellResult> {
        let inst = build_instance(spec.instance, cell.d, None, None, spec.radius, cell.seed)?;
        let r = solve(inst, cell.d, &solver, cell.seed)?;
        Ok(CellResult {
            cell,
            depth: Some(r.trace.depth),
            work: Some(r.trace.work),
            gap: Some(r.gap()),
            status: if r.budget_exhausted() { "budget".into() } else { "ok".into() },
        })
    };
    attempt().unwrap_or_else(|e| CellResult {
        cell,
        depth: None,
        work: None,
        gap: None,
        status: format!("error: {e}"),
    })
}

/// Runs every cell, `jobs` at a time; failures are recorded and the sweep continues.
pub fn bench_sweep(spec: &BenchSpec, default_seed: u64, jobs: usize) -> CliResult<Vec<CellResult>> {
    let grid = cells(spec, default_seed);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;
    Ok(pool.install(|| grid.par_iter().map(|&c| run_cell(spec, c)).collect()))
}

/// Least-squares slope of `ys` against `xs`; `None` with fewer than two distinct `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

/// Depth-vs-`1/eps` slopes per `(method, d)` over the cells that finished normally.
pub fn slopes(results: &[CellResult]) -> Vec<Slope> {
    let mut groups: BTreeMap<(Method, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in results.iter().filter(|r| r.status == "ok") {
        if let Some(depth) = r.depth {
            let g = groups.entry((r.cell.method, r.cell.d)).or_default();
            g.0.push((1.0 / r.cell.eps).ln());
            g.1.push((depth as f64).ln());
        }
    }
    groups
        .into_iter()
        .filter_map(|((method, d), (xs, ys))| {
            fit_slope(&xs, &ys).map(|slope| Slope {
                method,
                d,
                slope,
                points: xs.len(),
            })
        })
        .collect()
}

pub fn run_bench(config: &ExperimentConfig, out: &Path, jobs: usize) -> CliResult<RunReport> {
    let started = Instant::now();
    let spec = config.bench.as_ref().expect("validated");
    let results = bench_sweep(spec, config.seed, jobs)?;
    let fits = slopes(&results);
    let mut dir = ArtifactDir::create(out)?;
    let rows: Vec<_> = results
        .iter()
        .map(|r| {
            vec![
                Some(r.cell.method.name().to_string()),
                Some(r.cell.d.to_string()),
                Some(num(r.cell.eps)),
                Some(r.cell.seed.to_string()),
                r.depth.map(|v| v.to_string()),
                r.work.map(|v| v.to_string()),
                r.gap.map(num),
                Some(r.status.clone()),
            ]
        })
        .collect();
    dir.write_csv("bench.csv", &BENCH_COLUMNS, &rows)?;
    let slope_rows: Vec<_> = fits
        .iter()
        .map(|s| {
            vec![
                Some(s.method.name().to_string()),
                Some(s.d.to_string()),
                Some(num(s.slope)),
                Some(s.points.to_string()),
            ]
        })
        .collect();
    dir.write_csv("slopes.csv", &SLOPE_COLUMNS, &slope_rows)?;
    let mut metrics = BTreeMap::new();
    metrics.insert("cells".into(), json!(results.len()));
    metrics.insert(
        "failed_cells".into(),
        json!(results.iter().filter(|r| r.status != "ok").count()),
    );
    for s in &fits {
        metrics.insert(format!("slope.{}.d{}", s.method.name(), s.d), json!(s.slope));
    }
    let depth = results.iter().filter_map(|r| r.depth).sum();
    let work = results.iter().filter_map(|r| r.work).sum();
    let resolved = serde_json::to_value(config).expect("config serializes");
    crate::run::finish_report("bench", config.seed, resolved, dir, Outcome::Ok, depth, work, metrics, started)
}
