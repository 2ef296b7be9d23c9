use std::cell::RefCell;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::accel::{framework_run, FrameworkParams};
use crate::error::{invalid, Error, Result};
use crate::oracle::{Objective, ParallelOracle, Point, RngStream};

use super::prox::{FieldGradient, FieldProx, ProxStats};
use super::SmoothingPlan;

/// Run controls shared by the solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    /// Known optimal value; enables gap reporting.
    #[serde(default)]
    pub f_star: Option<f64>,
    /// Stop once the gap is at most `eps` (needs `f_star`; ignored by the subgradient baseline).
    #[serde(default)]
    pub stop_at_gap: bool,
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
    /// Oracle rounds the run may spend; an exhausted budget ends the run early and is
    /// reported as the termination reason.
    #[serde(default)]
    pub max_depth: Option<u64>,
}

fn default_max_outer() -> usize {
    10_000
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            f_star: None,
            stop_at_gap: false,
            max_outer: default_max_outer(),
            max_depth: None,
        }
    }
}

/// One row of a solver trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverRecord {
    pub outer_k: usize,
    /// Inner iterations spent since the previous row.
    pub inner_iters: u64,
    pub depth: u64,
    pub work: u64,
    pub gap_estimate: Option<f64>,
    pub residual_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub method: String,
    pub records: Vec<SolverRecord>,
    pub depth: u64,
    pub work: u64,
    pub termination: String,
    pub final_gap: Option<f64>,
}

impl SolverTrace {
    pub fn is_monotone(&self) -> bool {
        self.records
            .windows(2)
            .all(|w| w[0].depth <= w[1].depth && w[0].work <= w[1].work)
    }
}

fn gap_of<F: Objective>(oracle: &ParallelOracle<F>, opts: &SolverOptions, x: &Point) -> Option<f64> {
    opts.f_star.map(|s| oracle.objective().eval(x).value - s)
}

/// Accelerated proximal-point method on the Gaussian smoothing of `f`, with sampled-field
/// proximal steps and field gradients. The oracle must accept batches of
/// `plan.sample_count` points anywhere in space.
pub fn highly_parallel_minimize<F: Objective>(
    oracle: &ParallelOracle<F>,
    plan: &SmoothingPlan,
    seed: u64,
    opts: &SolverOptions,
) -> Result<(Point, SolverTrace)> {
    if oracle.dim() != plan.dim {
        return Err(invalid("plan", "dimension differs from the oracle"));
    }
    let stats = ProxStats::default();
    let mut prox = FieldProx::new(oracle, *plan, seed, &stats).with_depth_budget(opts.max_depth);
    let mut grad = FieldGradient::new(oracle, *plan, seed).with_depth_budget(opts.max_depth);
    let params = FrameworkParams {
        radius: plan.radius,
        epsilon: plan.epsilon,
        c: Some(plan.c),
        max_iters: opts.max_outer,
        stop_at_gap: opts.stop_at_gap && opts.f_star.is_some(),
    };
    let records = RefCell::new(Vec::new());
    let last_y = RefCell::new(Point::zeros(plan.dim));
    let last_inner = std::cell::Cell::new(0u64);
    let monitor = |y: &Point| {
        last_y.borrow_mut().clone_from(y);
        let gap = gap_of(oracle, opts, y);
        let ledger = oracle.ledger();
        let inner = stats.inner_iterations.get();
        let mut rows = records.borrow_mut();
        let k = rows.len() + 1;
        rows.push(SolverRecord {
            outer_k: k,
            inner_iters: inner - last_inner.replace(inner),
            depth: ledger.depth,
            work: ledger.work,
            gap_estimate: gap,
            residual_norm: Some(stats.last_residual.get()),
        });
        gap.unwrap_or(f64::INFINITY)
    };
    let (output, termination) = match framework_run(&mut prox, &mut grad, plan.dim, &params, Some(&monitor)) {
        Ok(run) => (run.output, format!("{:?}", run.termination)),
        // the latest completed iterate stands in for the output
        Err(Error::DepthBudgetExceeded { .. }) => (last_y.into_inner(), "DepthBudget".to_string()),
        Err(e) => return Err(e),
    };
    let ledger = oracle.ledger();
    let final_gap = gap_of(oracle, opts, &output);
    Ok((
        output,
        SolverTrace {
            method: "highly-parallel".into(),
            records: records.into_inner(),
            depth: ledger.depth,
            work: ledger.work,
            termination,
            final_gap,
        },
    ))
}

fn project(x: &mut Point, radius: f64) {
    let n = x.norm();
    if n > radius {
        *x *= radius / n;
    }
}

/// Projected subgradient method on the ball of radius `R` from the origin:
/// `T = ceil((L R / eps)^2)` single-point rounds with step `R / (L sqrt T)`, returning
/// the average of the queried points.
pub fn baseline_subgradient<F: Objective>(
    oracle: &ParallelOracle<F>,
    radius: f64,
    lipschitz: f64,
    eps: f64,
    opts: &SolverOptions,
) -> Result<(Point, SolverTrace)> {
    if !(radius > 0.0 && lipschitz > 0.0 && eps > 0.0) {
        return Err(invalid("subgradient", "R, L and eps must be positive"));
    }
    let rounds = ((lipschitz * radius / eps).powi(2)).ceil() as usize;
    let step = radius / (lipschitz * (rounds as f64).sqrt());
    let d = oracle.dim();
    let mut x = Point::zeros(d);
    let mut sum = Point::zeros(d);
    let mut records = Vec::with_capacity(rounds);
    let mut termination = "RoundLimit";
    let mut done = 0;
    for t in 1..=rounds {
        if opts.max_depth.is_some_and(|b| oracle.ledger().depth >= b) {
            termination = "DepthBudget";
            break;
        }
        done = t;
        let g = oracle.submit_batch(std::slice::from_ref(&x))?.remove(0).gradient;
        sum += &x;
        x.axpy(-step, &g, 1.0);
        project(&mut x, radius);
        let ledger = oracle.ledger();
        let avg = &sum / t as f64;
        records.push(SolverRecord {
            outer_k: t,
            inner_iters: 0,
            depth: ledger.depth,
            work: ledger.work,
            gap_estimate: gap_of(oracle, opts, &avg),
            residual_norm: Some(g.norm()),
        });
    }
    let out = sum / done.max(1) as f64;
    let ledger = oracle.ledger();
    Ok((
        out.clone(),
        SolverTrace {
            method: "subgradient".into(),
            records,
            depth: ledger.depth,
            work: ledger.work,
            termination: termination.into(),
            final_gap: gap_of(oracle, opts, &out),
        },
    ))
}

/// Batch size of the smoothing baseline: `ceil((8 R L / eps)^2)`, so the mini-batch
/// gradient noise is at most `eps / (8 R)`.
pub fn drs_batch(radius: f64, lipschitz: f64, eps: f64) -> usize {
    ((8.0 * radius * lipschitz / eps).powi(2)).ceil() as usize
}

/// Accelerated gradient descent on the Gaussian smoothing with `r = eps / (3 sqrt(d) L)`
/// and smoothness `L / r`, one mini-batch of Monte-Carlo gradients per round, for
/// `ceil(2 R sqrt((L / r) / eps))` rounds.
pub fn baseline_drs<F: Objective>(
    oracle: &ParallelOracle<F>,
    lipschitz: f64,
    radius: f64,
    eps: f64,
    seed: u64,
    opts: &SolverOptions,
) -> Result<(Point, SolverTrace)> {
    if !(radius > 0.0 && lipschitz > 0.0 && eps > 0.0) {
        return Err(invalid("drs", "R, L and eps must be positive"));
    }
    let d = oracle.dim();
    let r = eps / (3.0 * (d as f64).sqrt() * lipschitz);
    let beta = lipschitz / r;
    let batch = drs_batch(radius, lipschitz, eps);
    let rounds = (2.0 * radius * (beta / eps).sqrt()).ceil() as usize;
    let rounds = rounds.min(opts.max_outer);
    let mut x = Point::zeros(d);
    let mut x_prev = x.clone();
    let mut records = Vec::with_capacity(rounds);
    let mut termination = "RoundLimit";
    for k in 1..=rounds {
        if opts.max_depth.is_some_and(|b| oracle.ledger().depth >= b) {
            termination = "DepthBudget";
            break;
        }
        let momentum = (k as f64 - 1.0) / (k as f64 + 2.0);
        let y = &x + (&x - &x_prev) * momentum;
        let mut rng = RngStream::new(seed, k as u64);
        let mut points = DMatrix::zeros(d, batch);
        rng.fill_gaussian(points.as_mut_slice());
        for mut col in points.column_iter_mut() {
            for (p, c) in col.iter_mut().zip(y.iter()) {
                *p = c + r * *p;
            }
        }
        let answers = oracle.submit_columns(&points)?;
        let g = answers.gradients.column_mean();
        x_prev = std::mem::replace(&mut x, &y - &g / beta);
        let ledger = oracle.ledger();
        let gap = gap_of(oracle, opts, &x);
        records.push(SolverRecord {
            outer_k: k,
            inner_iters: 0,
            depth: ledger.depth,
            work: ledger.work,
            gap_estimate: gap,
            residual_norm: Some(g.norm()),
        });
        if opts.stop_at_gap && gap.is_some_and(|g| g <= eps) {
            termination = "GapReached";
            break;
        }
    }
    let ledger = oracle.ledger();
    Ok((
        x.clone(),
        SolverTrace {
            method: "drs".into(),
            records,
            depth: ledger.depth,
            work: ledger.work,
            termination: termination.into(),
            final_gap: gap_of(oracle, opts, &x),
        },
    ))
}
