//! Accelerated proximal-point framework driven by an approximate proximal step oracle,
//! with a binary line search over the extrapolation weight.

mod framework;
mod line_search;
mod omega;
mod oracles;

pub use framework::{
    convergence_certificate, framework_run, rate_bound, CertificateReport, FrameworkIterate,
    FrameworkParams, FrameworkTrace, Termination,
};
pub use line_search::{
    line_search, line_search_budget, line_search_tau, LineSearchKind, LineSearchOutcome,
    LineSearchParams, Probe,
};
pub use omega::OmegaSpec;
pub use oracles::{ApproxProxOracle, ExactGradient, TaylorOracle};

use crate::error::{Error, Result};
use crate::oracle::{DepthWorkLedger, Point};

/// An `(alpha, delta)`-approximate `omega`-proximal step oracle: for a query `x` it returns
/// `y` with `|grad g(y) + omega(|y-x|)(y-x)| <= alpha omega(|y-x|) |y-x| + delta`.
pub trait ProxOracle {
    fn alpha(&self) -> f64;
    fn delta(&self) -> f64;
    fn omega(&self) -> OmegaSpec;
    fn prox(&mut self, x: &Point) -> Result<Point>;

    /// Oracle rounds spent so far by the underlying first-order oracle, if any.
    fn ledger(&self) -> Option<DepthWorkLedger> {
        None
    }
}

/// A `delta`-approximate gradient oracle.
pub trait GradOracle {
    fn delta(&self) -> f64;
    fn grad(&mut self, x: &Point) -> Result<Point>;
}

/// `a = (lambda + sqrt(lambda^2 + 4 lambda A)) / 2` and `A' = A + a`, so that `lambda A' = a^2`.
pub fn compute_step_coefficients(lambda: f64, acc: f64) -> Result<(f64, f64)> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::NonPositiveLambda(lambda));
    }
    let a = 0.5 * (lambda + (lambda * lambda + 4.0 * lambda * acc).sqrt());
    Ok((a, acc + a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_step_from_zero_weight() {
        assert_eq!(compute_step_coefficients(1.0, 0.0).unwrap(), (1.0, 1.0));
        assert!(matches!(
            compute_step_coefficients(0.0, 1.0),
            Err(Error::NonPositiveLambda(_))
        ));
    }

    #[test]
    fn tiny_lambda_stays_accurate() {
        let (a, next) = compute_step_coefficients(1e-8, 1.0).unwrap();
        assert!((a - (1e-4 + 0.5e-8)).abs() < 1e-12);
        assert!((1e-8 * next - a * a).abs() <= 1e-12 * a * a);
    }

    proptest! {
        #[test]
        fn identity_lambda_a_next_equals_a_squared(lambda in 1e-6f64..1e3, acc in 0.0f64..1e4) {
            let (a, next) = compute_step_coefficients(lambda, acc).unwrap();
            prop_assert!((lambda * next - a * a).abs() <= 1e-12 * (a * a).max(1.0));
            prop_assert!(next >= acc);
        }
    }
}
