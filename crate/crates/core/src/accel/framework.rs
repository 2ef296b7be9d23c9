use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::oracle::Point;

use super::line_search::{line_search, LineSearchKind, LineSearchParams};
use super::{compute_step_coefficients, GradOracle, OmegaSpec, ProxOracle};

/// Knobs of the accelerated outer loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameworkParams {
    /// Bound `R` on the norm of a minimizer.
    pub radius: f64,
    /// Target accuracy; also caps the accumulated weight at `R^2 / epsilon`.
    pub epsilon: f64,
    /// Line-search slack constant; defaults to `150 gamma^2` for the oracle's growth exponent.
    #[serde(default)]
    pub c: Option<f64>,
    /// Outer iteration limit.
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Stop as soon as the monitored gap falls below `epsilon`.
    #[serde(default)]
    pub stop_at_gap: bool,
}

fn default_max_iters() -> usize {
    10_000
}

impl FrameworkParams {
    pub fn new(radius: f64, epsilon: f64) -> Self {
        Self {
            radius,
            epsilon,
            c: None,
            max_iters: default_max_iters(),
            stop_at_gap: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    ApproxMinimizer,
    GapReached,
    IterationLimit,
}

/// State after outer iteration `k` (the seed step is `k = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct FrameworkIterate {
    pub k: usize,
    pub acc: f64,
    pub lambda: f64,
    pub a: f64,
    /// Extrapolated point the prox step was taken from.
    pub x_tilde: Point,
    pub y: Point,
    pub x: Point,
    /// `|y_k - x~_{k-1}|`.
    pub step_norm: f64,
    pub gap: Option<f64>,
    pub prox_queries: usize,
    pub line_search_queries: usize,
    pub line_search_budget: Option<f64>,
    pub zeta: f64,
    pub depth: Option<u64>,
    pub work: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameworkTrace {
    pub iterates: Vec<FrameworkIterate>,
    pub termination: Termination,
    pub output: Point,
    pub sigma: f64,
    pub c: f64,
    /// Larger of the prox and gradient oracle accuracies.
    pub delta: f64,
    pub alpha: f64,
    pub omega: OmegaSpec,
}

/// Runs the accelerated proximal-point method from `x_0 = y_0 = 0`.
///
/// The first iteration queries the prox oracle at `x_0` directly and sets
/// `lambda_1 = 1 / omega(|y_1 - x_0|)`, `A_1 = a_1 = lambda_1`. Later iterations pick
/// `lambda_{k+1}` with the line search between `x_k` and `y_k`, then move
/// `x_{k+1} = x_k - a_{k+1} grad(y_{k+1})`. `monitor` reports `g(y) - g*` when known.
pub fn framework_run(
    prox: &mut dyn ProxOracle,
    grad: &mut dyn GradOracle,
    dim: usize,
    params: &FrameworkParams,
    monitor: Option<&dyn Fn(&Point) -> f64>,
) -> Result<FrameworkTrace> {
    let alpha = prox.alpha();
    let omega = prox.omega();
    omega.validate()?;
    if !(params.radius > 0.0 && params.epsilon > 0.0) {
        return Err(invalid("framework", "radius and epsilon must be positive"));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(invalid("alpha", format!("must lie in [0, 1), got {alpha}")));
    }
    let gamma = omega.growth_gamma();
    let c = params.c.unwrap_or(150.0 * gamma * gamma);
    if 64.0 * (alpha + 1.0 / c) * gamma * gamma > 1.0 {
        return Err(Error::ContractViolation(format!(
            "64 (alpha + 1/c) gamma^2 = {} exceeds 1",
            64.0 * (alpha + 1.0 / c) * gamma * gamma
        )));
    }
    let delta = prox.delta().max(grad.delta());
    let mu = 8.0 / (1.0 - alpha).sqrt();
    let r = params.radius;
    let eps_bound = params.epsilon / (mu * r * 9.0 * c * ((1.0 + alpha) * c + 1.0));
    let omega_bound = 8.0 * mu * r * omega.eval(8.0 * mu * r);
    if delta > eps_bound && delta > omega_bound {
        return Err(Error::ContractViolation(format!(
            "oracle accuracy {delta} exceeds both {eps_bound} and {omega_bound}"
        )));
    }
    let sigma = (1.0 + alpha) / 2.0;

    let gap_of = |y: &Point| monitor.map(|m| m(y));
    let ledger = |p: &dyn ProxOracle| p.ledger();
    let mut iterates = Vec::new();
    let x0 = Point::zeros(dim);

    // seed step
    let y1 = prox.prox(&x0)?;
    let d1 = (&y1 - &x0).norm();
    let mut prox_queries = 1;
    let l0 = ledger(prox);
    if omega.eval(d1) * d1 <= c * prox.delta() {
        return Ok(FrameworkTrace {
            iterates,
            termination: Termination::ApproxMinimizer,
            output: y1,
            sigma,
            c,
            delta,
            alpha,
            omega,
        });
    }
    let lambda1 = 1.0 / omega.eval(d1);
    let (a1, acc1) = compute_step_coefficients(lambda1, 0.0)?;
    let g1 = grad.grad(&y1)?;
    let x1 = &x0 - &g1 * a1;
    let gap1 = gap_of(&y1);
    let l1 = ledger(prox).or(l0);
    iterates.push(FrameworkIterate {
        k: 1,
        acc: acc1,
        lambda: lambda1,
        a: a1,
        x_tilde: x0.clone(),
        y: y1,
        x: x1,
        step_norm: d1,
        gap: gap1,
        prox_queries,
        line_search_queries: 1,
        line_search_budget: None,
        zeta: 1.0,
        depth: l1.map(|l| l.depth),
        work: l1.map(|l| l.work),
    });
    if params.stop_at_gap && gap1.is_some_and(|g| g <= params.epsilon) {
        let last = iterates.last().unwrap().y.clone();
        return Ok(FrameworkTrace {
            iterates,
            termination: Termination::GapReached,
            output: last,
            sigma,
            c,
            delta,
            alpha,
            omega,
        });
    }

    let mut termination = Termination::IterationLimit;
    let mut output = iterates[0].y.clone();
    for k in 2..=params.max_iters {
        let prev = iterates.last().unwrap();
        let ls_params = LineSearchParams {
            acc: prev.acc,
            radius: r,
            epsilon: params.epsilon,
            c,
        };
        let outcome = line_search(&prev.x, &prev.y, &ls_params, prox)?;
        prox_queries += outcome.queries;
        if outcome.kind == LineSearchKind::ApproxMinimizer {
            termination = Termination::ApproxMinimizer;
            output = outcome.point;
            break;
        }
        let (a, acc) = compute_step_coefficients(outcome.lambda, prev.acc)?;
        let g = grad.grad(&outcome.point)?;
        let x = &prev.x - &g * a;
        let gap = gap_of(&outcome.point);
        let l = ledger(prox);
        iterates.push(FrameworkIterate {
            k,
            acc,
            lambda: outcome.lambda,
            a,
            step_norm: (&outcome.point - &outcome.x_tilde).norm(),
            x_tilde: outcome.x_tilde,
            y: outcome.point.clone(),
            x,
            gap,
            prox_queries,
            line_search_queries: outcome.queries,
            line_search_budget: Some(outcome.budget),
            zeta: outcome.zeta,
            depth: l.map(|l| l.depth),
            work: l.map(|l| l.work),
        });
        output = outcome.point;
        if params.stop_at_gap && gap.is_some_and(|g| g <= params.epsilon) {
            termination = Termination::GapReached;
            break;
        }
    }
    Ok(FrameworkTrace {
        iterates,
        termination,
        output,
        sigma,
        c,
        delta,
        alpha,
        omega,
    })
}

/// `32 omega(40 |x*| / k^(3/2)) |x*|^2 / k^2`.
pub fn rate_bound(omega: &OmegaSpec, x_star_norm: f64, k: usize) -> f64 {
    let k = k as f64;
    32.0 * omega.eval(40.0 * x_star_norm / k.powf(1.5)) * x_star_norm * x_star_norm / (k * k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    pub holds: bool,
    /// Smallest `rhs - lhs` across iterations (negative when violated).
    pub worst_slack: f64,
    pub first_violation: Option<usize>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
}

/// Checks the potential inequality at every iterate:
/// `A_k [g(y_k) - g*] + |x_k - x*|^2 / 2 + sum_i (1-sigma) A_i / (2 lambda_i) |y_i - x~_{i-1}|^2
///  <= |x*|^2 / 2 + delta sum_i a_i |x_i - x*| + delta^2 / (2 (1-sigma)) sum_i a_i^2`,
/// with slack `1e-8`.
pub fn convergence_certificate(
    trace: &FrameworkTrace,
    g: &dyn Fn(&Point) -> f64,
    g_star: f64,
    x_star: &Point,
    delta: f64,
) -> CertificateReport {
    let sigma = trace.sigma;
    let base = 0.5 * x_star.norm_squared();
    let (mut path, mut err_lin, mut err_sq) = (0.0, 0.0, 0.0);
    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    let mut worst = f64::INFINITY;
    let mut first = None;
    for it in &trace.iterates {
        path += (1.0 - sigma) * it.acc / (2.0 * it.lambda) * it.step_norm.powi(2);
        err_lin += it.a * (&it.x - x_star).norm();
        err_sq += it.a * it.a;
        let l = it.acc * (g(&it.y) - g_star) + 0.5 * (&it.x - x_star).norm_squared() + path;
        let r = base + delta * err_lin + delta * delta / (2.0 * (1.0 - sigma)) * err_sq;
        let slack = r - l;
        worst = worst.min(slack);
        if slack < -1e-8 && first.is_none() {
            first = Some(it.k);
        }
        lhs.push(l);
        rhs.push(r);
    }
    CertificateReport {
        holds: first.is_none(),
        worst_slack: worst,
        first_violation: first,
        lhs,
        rhs,
    }
}
