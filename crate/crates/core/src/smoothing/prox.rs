use std::cell::Cell;

use crate::accel::{GradOracle, OmegaSpec, ProxOracle};
use crate::error::{Error, Result};
use crate::oracle::{DepthWorkLedger, Objective, ParallelOracle, Point, RngStream};

use super::{SmoothingPlan, VectorField};

const PROX_STREAM: u64 = 1 << 32;
const GRAD_STREAM: u64 = 2 << 32;

#[derive(Debug, Clone, PartialEq)]
pub struct ProxStep {
    pub y: Point,
    /// Gradient steps taken.
    pub iterations: usize,
    /// `|v(y) + omega(|y - c|)(y - c)|` at the returned point.
    pub residual: f64,
    /// Largest `|y - c|` over all iterates.
    pub max_distance: f64,
}

/// Approximate proximal step at `center`: one sampled field (one oracle round), then
/// gradient descent `y <- y - h (v(y) + omega(|y - c|)(y - c))` from `y = c` until the
/// residual drops to `(5/6) L eps_oracle`.
pub fn prox_step_gd<F: Objective>(
    oracle: &ParallelOracle<F>,
    center: &Point,
    plan: &SmoothingPlan,
    rng: &mut RngStream,
) -> Result<ProxStep> {
    let field = VectorField::sample(oracle, center, plan.r, plan.eta, plan.sample_count, rng)?;
    let h = plan.step_size();
    let tol = 5.0 / 6.0 * plan.lipschitz * plan.eps_oracle;
    let cap = plan.iteration_cap();
    let mut y = center.clone();
    let mut max_distance = 0.0_f64;
    for iterations in 0..=cap {
        let s = &y - center;
        let v = field.eval(&y)?;
        let step = v + &s * plan.omega.eval(s.norm());
        let residual = step.norm();
        if residual <= tol {
            return Ok(ProxStep {
                y,
                iterations,
                residual,
                max_distance,
            });
        }
        y.axpy(-h, &step, 1.0);
        max_distance = max_distance.max((&y - center).norm());
    }
    Err(Error::NoConvergence {
        what: "sampled proximal step",
        iterations: cap,
    })
}

/// Running counters shared between the step oracle and whoever monitors the run.
#[derive(Debug, Default)]
pub struct ProxStats {
    pub calls: Cell<u64>,
    pub inner_iterations: Cell<u64>,
    pub last_residual: Cell<f64>,
}

/// [`prox_step_gd`] as a proximal step oracle with `alpha = 0`, `delta = L eps_oracle`.
/// Call `k` draws its samples from stream `2^32 + k` of `seed`.
pub struct FieldProx<'a, F> {
    oracle: &'a ParallelOracle<F>,
    plan: SmoothingPlan,
    seed: u64,
    stats: &'a ProxStats,
    depth_budget: Option<u64>,
}

fn check_budget<F: Objective>(oracle: &ParallelOracle<F>, budget: Option<u64>) -> Result<()> {
    match budget {
        Some(budget) if oracle.ledger().depth >= budget => Err(Error::DepthBudgetExceeded { budget }),
        _ => Ok(()),
    }
}

impl<'a, F: Objective> FieldProx<'a, F> {
    pub fn new(oracle: &'a ParallelOracle<F>, plan: SmoothingPlan, seed: u64, stats: &'a ProxStats) -> Self {
        Self {
            oracle,
            plan,
            seed,
            stats,
            depth_budget: None,
        }
    }

    /// Refuses further steps once the oracle has spent `budget` rounds.
    pub fn with_depth_budget(mut self, budget: Option<u64>) -> Self {
        self.depth_budget = budget;
        self
    }
}

impl<F: Objective> ProxOracle for FieldProx<'_, F> {
    fn alpha(&self) -> f64 {
        0.0
    }

    fn delta(&self) -> f64 {
        self.plan.lipschitz * self.plan.eps_oracle
    }

    fn omega(&self) -> OmegaSpec {
        self.plan.omega
    }

    fn prox(&mut self, x: &Point) -> Result<Point> {
        check_budget(self.oracle, self.depth_budget)?;
        let k = self.stats.calls.get();
        self.stats.calls.set(k + 1);
        let mut rng = RngStream::new(self.seed, PROX_STREAM + k);
        let step = prox_step_gd(self.oracle, x, &self.plan, &mut rng)?;
        self.stats
            .inner_iterations
            .set(self.stats.inner_iterations.get() + step.iterations as u64);
        self.stats.last_residual.set(step.residual);
        Ok(step.y)
    }

    fn ledger(&self) -> Option<DepthWorkLedger> {
        Some(self.oracle.ledger())
    }
}

/// Gradient oracle that samples a fresh field centered at the query and evaluates it
/// there; `delta = L eps_oracle / 6`. Call `k` uses stream `2^33 + k`.
pub struct FieldGradient<'a, F> {
    oracle: &'a ParallelOracle<F>,
    plan: SmoothingPlan,
    seed: u64,
    pub calls: u64,
    depth_budget: Option<u64>,
}

impl<'a, F: Objective> FieldGradient<'a, F> {
    pub fn new(oracle: &'a ParallelOracle<F>, plan: SmoothingPlan, seed: u64) -> Self {
        Self {
            oracle,
            plan,
            seed,
            calls: 0,
            depth_budget: None,
        }
    }

    pub fn with_depth_budget(mut self, budget: Option<u64>) -> Self {
        self.depth_budget = budget;
        self
    }
}

impl<F: Objective> GradOracle for FieldGradient<'_, F> {
    fn delta(&self) -> f64 {
        self.plan.lipschitz * self.plan.eps_oracle / 6.0
    }

    fn grad(&mut self, x: &Point) -> Result<Point> {
        check_budget(self.oracle, self.depth_budget)?;
        let mut rng = RngStream::new(self.seed, GRAD_STREAM + self.calls);
        self.calls += 1;
        let field = VectorField::sample(self.oracle, x, self.plan.r, self.plan.eta, self.plan.sample_count, &mut rng)?;
        field.eval(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::Linear;
    use crate::oracle::OracleConfig;

    #[test]
    fn linear_objective_step_meets_stationarity() {
        let d = 10;
        let coef = Point::from_fn(d, |i, _| if i == 0 { 0.6 } else if i == 1 { -0.8 } else { 0.0 });
        let plan = SmoothingPlan::new(d, 1.0, 1.0, 0.2, 0.1)
            .unwrap()
            .with_eps_oracle(0.05)
            .unwrap()
            .with_sample_count(2000)
            .unwrap();
        let oracle = ParallelOracle::new(Linear::new(coef.clone()), OracleConfig::unrestricted(2000)).unwrap();
        let c = Point::from_element(d, 0.1);
        let mut rng = RngStream::new(1, 0);
        let step = prox_step_gd(&oracle, &c, &plan, &mut rng).unwrap();
        assert!(step.max_distance <= plan.r_tilde);
        let s = &step.y - &c;
        let exact = (&coef + &s * plan.omega.eval(s.norm())).norm();
        assert!(exact <= plan.eps_oracle, "{exact}");
        assert_eq!(oracle.ledger().depth, 1);
    }
}
