//! Gaussian smoothing of a non-smooth objective, the sampled vector field that
//! approximates the smoothed gradient on a small ball, the gradient-descent proximal step
//! built on it, and the end-to-end parallel minimizer with its baselines.

mod field;
mod prox;
mod solvers;

pub use field::{mc_gradient_oracle, McGradient, VectorField};
pub use prox::{prox_step_gd, FieldGradient, FieldProx, ProxStats, ProxStep};
pub use solvers::{
    baseline_drs, baseline_subgradient, drs_batch, highly_parallel_minimize, SolverOptions, SolverRecord,
    SolverTrace,
};

use serde::{Deserialize, Serialize};

use crate::accel::OmegaSpec;
use crate::error::{invalid, Result};

/// Outer iteration allowance used to split the failure probability across oracle calls.
pub const FAILURE_SPLIT_ITERATIONS: f64 = 1e4;

/// Cutoff weight of the sampled field: 1 for `|t| <= r^2/2`, 0 for `|t| >= r^2`, linear between.
pub fn chi(t: f64, r: f64) -> f64 {
    let r2 = r * r;
    let a = t.abs();
    if a >= r2 {
        0.0
    } else if a <= 0.5 * r2 {
        1.0
    } else {
        2.0 - 2.0 * a / r2
    }
}

/// Field sharpness for a target accuracy: `1 / (2 sqrt(ln(10 / eps)))`.
pub fn field_eta(eps_apx: f64) -> f64 {
    1.0 / (2.0 * (10.0 / eps_apx).ln().sqrt())
}

/// `64 [d ln d ln(1/eps) + ln(1/failure)] / eps^2`, rounded up (saturating).
pub fn field_sample_count(dim: usize, eps_apx: f64, failure: f64) -> usize {
    let d = dim as f64;
    let n = 64.0 * (d * d.ln() * (1.0 / eps_apx).ln() + (1.0 / failure).ln()) / (eps_apx * eps_apx);
    n.ceil() as usize
}

/// Every constant the smoothing pipeline derives from `(d, L, R, eps, nu)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingPlan {
    pub dim: usize,
    pub lipschitz: f64,
    pub radius: f64,
    pub epsilon: f64,
    pub nu: f64,
    /// Gaussian radius `eps / (3 sqrt(d) L)`.
    pub r: f64,
    /// Regularization order, at least 1.
    pub p: u32,
    /// Line-search constant `150 p^2`.
    pub c: f64,
    /// `eps / (9 c (c + 1))`.
    pub eps_prime: f64,
    /// Relative accuracy of the proximal step; the step oracle error is `L * eps_oracle`.
    pub eps_oracle: f64,
    /// Field accuracy `eps_oracle / 6`.
    pub eps_apx: f64,
    pub eta: f64,
    /// Inner radius `r / (8 sqrt(ln(60 / eps_oracle)))`, equal to the field trust radius.
    pub r_tilde: f64,
    /// Failure probability allotted to one field construction.
    pub per_call_failure: f64,
    pub sample_count: usize,
    pub omega: OmegaSpec,
}

impl SmoothingPlan {
    pub fn new(dim: usize, lipschitz: f64, radius: f64, epsilon: f64, nu: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("d", "must be positive"));
        }
        if !(lipschitz > 0.0 && radius > 0.0) {
            return Err(invalid("L, R", "must be positive"));
        }
        if !(epsilon > 0.0 && epsilon < lipschitz * radius) {
            return Err(invalid(
                "eps",
                format!("need 0 < eps < L R = {}, got {epsilon}", lipschitz * radius),
            ));
        }
        if !(nu > 0.0 && nu < 1.0) {
            return Err(invalid("nu", format!("must lie in (0, 1), got {nu}")));
        }
        let d = dim as f64;
        let r = epsilon / (3.0 * d.sqrt() * lipschitz);
        let p_raw = ((d / (epsilon * epsilon)).ln() / 3.0 - 4.0) / 3.0;
        let p = p_raw.round().max(1.0) as u32;
        let c = 150.0 * (p as f64).powi(2);
        let eps_prime = epsilon / (9.0 * c * (c + 1.0));
        // meets the accuracy bound of the outer method at alpha = 0, where mu = 8
        let eps_oracle = eps_prime / (8.0 * radius * lipschitz);
        let mut plan = Self {
            dim,
            lipschitz,
            radius,
            epsilon,
            nu,
            r,
            p,
            c,
            eps_prime,
            eps_oracle,
            eps_apx: 0.0,
            eta: 0.0,
            r_tilde: 0.0,
            per_call_failure: nu / (2.0 * FAILURE_SPLIT_ITERATIONS),
            sample_count: 0,
            omega: OmegaSpec::Constant { level: 1.0 },
        };
        plan.derive_oracle_terms();
        Ok(plan)
    }

    fn derive_oracle_terms(&mut self) {
        self.eps_apx = self.eps_oracle / 6.0;
        self.eta = field_eta(self.eps_apx);
        self.r_tilde = self.r / (8.0 * (60.0 / self.eps_oracle).ln().sqrt());
        self.sample_count = field_sample_count(self.dim, self.eps_apx, self.per_call_failure);
        self.omega = OmegaSpec::Power {
            coef: 4.0 * self.lipschitz / self.r_tilde.powi(self.p as i32 + 1),
            exponent: self.p as f64,
        };
    }

    /// Replaces the proximal accuracy and re-derives `eps_apx`, `eta`, `r_tilde`, the
    /// sample count and `omega`.
    pub fn with_eps_oracle(mut self, eps_oracle: f64) -> Result<Self> {
        if !(eps_oracle > 0.0 && eps_oracle < 1.0) {
            return Err(invalid("eps_oracle", format!("must lie in (0, 1), got {eps_oracle}")));
        }
        self.eps_oracle = eps_oracle;
        self.derive_oracle_terms();
        Ok(self)
    }

    /// Overrides the per-field sample count (the derived count is often far beyond desk scale).
    pub fn with_sample_count(mut self, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(invalid("sample_count", "must be positive"));
        }
        self.sample_count = count;
        Ok(self)
    }

    /// Gradient-descent step `r_tilde / (48 p sqrt(d) L)`.
    pub fn step_size(&self) -> f64 {
        self.r_tilde / (48.0 * self.p as f64 * (self.dim as f64).sqrt() * self.lipschitz)
    }

    /// `10 ceil(p sqrt(d) / eps_oracle^2)`.
    pub fn iteration_cap(&self) -> usize {
        let bound = self.p as f64 * (self.dim as f64).sqrt() / (self.eps_oracle * self.eps_oracle);
        (10.0 * bound.ceil()) as usize
    }

    /// Field cutoff `(sqrt(d) + 1/eta) r`.
    pub fn cutoff(&self) -> f64 {
        ((self.dim as f64).sqrt() + 1.0 / self.eta) * self.r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn chi_values() {
        let r = 0.7;
        assert_eq!(chi(r * r / 2.0, r), 1.0);
        assert_eq!(chi(r * r, r), 0.0);
        assert!((chi(0.75 * r * r, r) - 0.5).abs() < 1e-15);
        assert_eq!(chi(-0.75 * r * r, r), chi(0.75 * r * r, r));
    }

    #[test]
    fn plan_radius_and_order() {
        let plan = SmoothingPlan::new(100, 1.0, 1.0, 0.3, 0.1).unwrap();
        assert!((plan.r - 0.01).abs() < 1e-15);
        let plan = SmoothingPlan::new(10_000, 1.0, 1.0, 0.01, 0.1).unwrap();
        assert_eq!(plan.p, 1);
        // ln(10^8)/3 - 4 = 2.14..., so p rounds to 1 only after dividing by 3
        assert!(((1e8f64.ln() / 3.0 - 4.0) / 3.0 - 0.7134).abs() < 1e-3);
    }

    #[test]
    fn plan_rejects_trivial_accuracy() {
        assert!(SmoothingPlan::new(10, 1.0, 1.0, 1.0, 0.1).is_err());
        assert!(SmoothingPlan::new(10, 2.0, 1.0, 2.5, 0.1).is_err());
    }

    #[test]
    fn inner_radius_is_trust_radius() {
        let plan = SmoothingPlan::new(20, 1.0, 1.0, 0.1, 0.1)
            .unwrap()
            .with_eps_oracle(1e-3)
            .unwrap();
        assert!((plan.eta * plan.r / 4.0 - plan.r_tilde).abs() <= 1e-15 * plan.r);
        match plan.omega {
            OmegaSpec::Power { coef, exponent } => {
                assert_eq!(exponent, 1.0);
                assert!((coef - 4.0 / plan.r_tilde.powi(2)).abs() <= 1e-9 * coef);
            }
            _ => panic!("power omega expected"),
        }
    }

    #[test]
    fn sample_count_formula() {
        // d = 50, eps = 0.1, failure = 0.05
        let n = field_sample_count(50, 0.1, 0.05);
        let expect = 64.0 * (50.0 * 50f64.ln() * 10f64.ln() + 20f64.ln()) / 0.01;
        assert_eq!(n, expect.ceil() as usize);
    }

    proptest! {
        #[test]
        fn chi_is_lipschitz(r in 0.01f64..2.0, a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let (t1, t2) = (a * r * r, b * r * r);
            prop_assert!((chi(t1, r) - chi(t2, r)).abs() <= 2.0 / (r * r) * (t1 - t2).abs() * (1.0 + 1e-12) + 1e-15);
        }
    }
}
