use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::oracle::Point;

use super::{OmegaSpec, ProxOracle};

/// Scalars the line search needs besides the two anchor points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearchParams {
    /// Accumulated weight `A` of the outer method.
    pub acc: f64,
    /// Bound on the distance to a minimizer.
    pub radius: f64,
    /// Target accuracy of the outer method.
    pub epsilon: f64,
    /// Slack constant `c`.
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LineSearchKind {
    /// `lambda * omega(|y - x~|)` lies in `[3/4, 1]` up to the search resolution.
    Bracketed,
    /// The prox step barely moved, so `y` is already an approximate minimizer.
    ApproxMinimizer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub theta: f64,
    pub zeta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchOutcome {
    pub kind: LineSearchKind,
    pub theta: f64,
    /// `(1-theta)^2 A / theta`; infinite at `theta = 0`.
    pub lambda: f64,
    /// `lambda * omega(|y - x~|)`.
    pub zeta: f64,
    pub point: Point,
    pub x_tilde: Point,
    pub queries: usize,
    pub budget: f64,
    pub tau: f64,
    /// Midpoints probed by the bisection, in order.
    pub probes: Vec<Probe>,
    pub lower: f64,
    pub upper: f64,
}

/// One prox answer per probed `theta`.
struct StepCache<'a> {
    x1: &'a Point,
    x2: &'a Point,
    cache: HashMap<u64, (Point, Point)>,
    queries: usize,
}

impl StepCache<'_> {
    fn at(&mut self, theta: f64, prox: &mut dyn ProxOracle) -> Result<(Point, Point)> {
        if let Some(hit) = self.cache.get(&theta.to_bits()) {
            return Ok(hit.clone());
        }
        let x_tilde = self.x1 * (1.0 - theta) + self.x2 * theta;
        let y = prox.prox(&x_tilde)?;
        self.queries += 1;
        self.cache.insert(theta.to_bits(), (y.clone(), x_tilde.clone()));
        Ok((y, x_tilde))
    }
}

fn mu(alpha: f64) -> f64 {
    8.0 / (1.0 - alpha).sqrt()
}

/// Resolution at which the bisection stops.
pub fn line_search_tau(p: &LineSearchParams, alpha: f64, delta: f64, omega: &OmegaSpec) -> f64 {
    let mu = mu(alpha);
    let r = p.radius;
    let a = p.acc;
    let w8 = omega.eval(8.0 * p.c * mu * r);
    let gamma = omega.growth_gamma();
    let terms = [
        0.25,
        0.5 * (1.0 / (4.0 * a * w8)).sqrt(),
        a * delta / (64.0 * mu * r),
        p.c * delta / (360.0 * mu * gamma * r * w8),
        1.0 / (200.0 * (1.0 + a * w8 + 4.0 * mu * r / (a * delta) + mu * r / delta * w8)),
    ];
    terms.into_iter().fold(f64::INFINITY, f64::min)
}

/// Upper bound on prox queries per call: `6 + log2[(160 mu R c / delta + 9 R^2 / eps) omega(8 c mu R)]`.
pub fn line_search_budget(p: &LineSearchParams, alpha: f64, delta: f64, omega: &OmegaSpec) -> f64 {
    let mu = mu(alpha);
    let r = p.radius;
    let w8 = omega.eval(8.0 * p.c * mu * r);
    6.0 + ((160.0 * mu * r * p.c / delta + 9.0 * r * r / p.epsilon) * w8).log2()
}

/// Finds `theta` so that the prox step from `x~ = (1-theta) x1 + theta x2` satisfies
/// `lambda omega(|y - x~|) in [3/4, 1]` with `lambda = (1-theta)^2 A / theta`, or detects
/// that a probed step already lands on an approximate minimizer.
///
/// With the accelerated method, `x1` is the dual iterate `x_k` and `x2` the primal
/// iterate `y_k`. Each probed `theta` costs one prox query; repeats are served from cache.
pub fn line_search(
    x1: &Point,
    x2: &Point,
    params: &LineSearchParams,
    prox: &mut dyn ProxOracle,
) -> Result<LineSearchOutcome> {
    let alpha = prox.alpha();
    let delta = prox.delta();
    let omega = prox.omega();
    omega.validate()?;
    if !(0.0..1.0).contains(&alpha) {
        return Err(invalid("alpha", format!("must lie in [0, 1), got {alpha}")));
    }
    if !(delta > 0.0) {
        return Err(invalid("delta", format!("line search needs delta > 0, got {delta}")));
    }
    if !(params.radius > 0.0 && params.epsilon > 0.0 && params.c > 0.0) {
        return Err(invalid("line search", "radius, epsilon and c must be positive"));
    }
    let mu = mu(alpha);
    let lower = 1.0 / (2.0 * omega.eval(2.0 * mu * params.radius));
    let upper = params.radius * params.radius / params.epsilon;
    if !(params.acc >= lower && params.acc <= upper) {
        return Err(Error::WeightOutOfBracket {
            value: params.acc,
            lower,
            upper,
        });
    }
    let tau = line_search_tau(params, alpha, delta, &omega);
    let budget = line_search_budget(params, alpha, delta, &omega);

    let mut steps = StepCache {
        x1,
        x2,
        cache: HashMap::new(),
        queries: 0,
    };
    let lambda_of = |theta: f64| (1.0 - theta).powi(2) * params.acc / theta;

    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut probes = Vec::new();
    while hi >= lo + tau {
        let mid = 0.5 * (lo + hi);
        // tau can fall below the float spacing near theta; stop once halving no longer splits
        if mid <= lo || mid >= hi {
            break;
        }
        let (y, xt) = steps.at(mid, prox)?;
        let zeta = lambda_of(mid) * omega.eval((&y - &xt).norm());
        probes.push(Probe { theta: mid, zeta });
        if zeta >= 0.75 {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let near_minimizer = |y: &Point, xt: &Point| {
        let d = (y - xt).norm();
        omega.eval(d) * d <= params.c * delta
    };
    let finish = |kind, theta: f64, y: Point, xt: Point, queries: usize, probes: Vec<Probe>| {
        let lambda = if theta > 0.0 { lambda_of(theta) } else { f64::INFINITY };
        let d = (&y - &xt).norm();
        let zeta = if theta > 0.0 { lambda * omega.eval(d) } else { f64::INFINITY };
        if queries as f64 > budget {
            return Err(Error::QueryBudgetExceeded { used: queries, budget });
        }
        Ok(LineSearchOutcome {
            kind,
            theta,
            lambda,
            zeta,
            point: y,
            x_tilde: xt,
            queries,
            budget,
            tau,
            probes,
            lower,
            upper,
        })
    };

    let (y_lo, xt_lo) = steps.at(lo, prox)?;
    if near_minimizer(&y_lo, &xt_lo) {
        return finish(LineSearchKind::ApproxMinimizer, lo, y_lo, xt_lo, steps.queries, probes);
    }
    let (y_hi, xt_hi) = steps.at(hi, prox)?;
    if near_minimizer(&y_hi, &xt_hi) {
        return finish(LineSearchKind::ApproxMinimizer, hi, y_hi, xt_hi, steps.queries, probes);
    }
    if lo == 0.0 {
        return Err(Error::NoBracket(format!(
            "every probe had zeta < 3/4 down to theta = {hi:e} and neither end is an approximate minimizer"
        )));
    }
    finish(LineSearchKind::Bracketed, lo, y_lo, xt_lo, steps.queries, probes)
}
