use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::objectives::TwiceDifferentiable;
use crate::oracle::{Objective, Point};

use super::{GradOracle, OmegaSpec, ProxOracle};

/// Proximal point oracle for an `L`-smooth `g`: gradient descent on
/// `G_x(y) = g(y) + kappa/2 |y - x|^2` until `G_x(y) - min G_x <= rho`.
///
/// Advertises `alpha = 0`, `delta = rho (L + kappa)` and constant `omega = kappa`.
/// Descent stops once `|grad G_x(y)| <= min(rho (L + kappa), sqrt(2 kappa rho))`, which
/// guarantees both the suboptimality and the advertised gradient residual.
pub struct ApproxProxOracle<F> {
    pub objective: F,
    pub smoothness: f64,
    pub kappa: f64,
    pub rho: f64,
    pub max_inner: usize,
    pub inner_iterations: usize,
    pub calls: usize,
}

impl<F: Objective> ApproxProxOracle<F> {
    pub fn new(objective: F, smoothness: f64, kappa: f64, rho: f64) -> Result<Self> {
        if !(smoothness >= 0.0 && kappa > 0.0 && rho > 0.0) {
            return Err(invalid("prox oracle", "need L >= 0, kappa > 0, rho > 0"));
        }
        Ok(Self {
            objective,
            smoothness,
            kappa,
            rho,
            max_inner: 1_000_000,
            inner_iterations: 0,
            calls: 0,
        })
    }

    pub fn residual(&self, x: &Point, y: &Point) -> f64 {
        let g = self.objective.eval(y).gradient;
        (g + (y - x) * self.kappa).norm()
    }
}

impl<F: Objective> ProxOracle for ApproxProxOracle<F> {
    fn alpha(&self) -> f64 {
        0.0
    }

    fn delta(&self) -> f64 {
        self.rho * (self.smoothness + self.kappa)
    }

    fn omega(&self) -> OmegaSpec {
        OmegaSpec::Constant { level: self.kappa }
    }

    fn prox(&mut self, x: &Point) -> Result<Point> {
        self.calls += 1;
        let total = self.smoothness + self.kappa;
        let tol = (self.rho * total).min((2.0 * self.kappa * self.rho).sqrt());
        let mut y = x.clone();
        for _ in 0..self.max_inner {
            let step = self.objective.eval(&y).gradient + (&y - x) * self.kappa;
            if step.norm() <= tol {
                return Ok(y);
            }
            y -= step / total;
            self.inner_iterations += 1;
        }
        Err(Error::NoConvergence {
            what: "proximal subproblem",
            iterations: self.max_inner,
        })
    }
}

/// Exact gradient of a differentiable objective; `delta = 0`.
pub struct ExactGradient<F> {
    pub objective: F,
    pub calls: usize,
}

impl<F: Objective> ExactGradient<F> {
    pub fn new(objective: F) -> Self {
        Self { objective, calls: 0 }
    }
}

impl<F: Objective> GradOracle for ExactGradient<F> {
    fn delta(&self) -> f64 {
        0.0
    }

    fn grad(&mut self, x: &Point) -> Result<Point> {
        self.calls += 1;
        Ok(self.objective.eval(x).gradient)
    }
}

/// Regularized Taylor step of order `p in {1, 2}`:
/// `argmin_y g_p(y; x) + (L_p + L) / p! |y - x|^(p+1)`.
///
/// `alpha = 1 / ((1+p)(1 + L/L_p))` and `omega(s) = (L_p + L)(p+1)/p! s^(p-1)`. The
/// order-2 step is a cubic-regularized Newton step, solved through its secular equation
/// to stationarity `tolerance`, which is also the advertised `delta`.
pub struct TaylorOracle<F> {
    pub objective: F,
    pub order: u32,
    /// Lipschitz constant of the `p`-th derivative.
    pub lp: f64,
    /// Extra regularization `L`.
    pub extra: f64,
    pub tolerance: f64,
}

impl<F: TwiceDifferentiable> TaylorOracle<F> {
    pub fn new(objective: F, order: u32, lp: f64, extra: f64) -> Result<Self> {
        if !(order == 1 || order == 2) {
            return Err(invalid("p", format!("order must be 1 or 2, got {order}")));
        }
        if !(lp > 0.0 && extra >= 0.0) {
            return Err(invalid("L_p", "need L_p > 0 and L >= 0"));
        }
        Ok(Self {
            objective,
            order,
            lp,
            extra,
            tolerance: 1e-10,
        })
    }

    fn strength(&self) -> f64 {
        self.lp + self.extra
    }

    fn cubic_step(&self, g: &Point, h: &DMatrix<f64>) -> Result<Point> {
        let d = g.len();
        let gn = g.norm();
        if gn == 0.0 {
            return Ok(Point::zeros(d));
        }
        // stationarity: g + H s + (3 M / 2) |s| s = 0
        let m = 1.5 * self.strength();
        let eig = h.clone().symmetric_eigen();
        let lam_min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if lam_min < -1e-12 {
            return Err(invalid("hessian", format!("must be PSD, min eigenvalue {lam_min}")));
        }
        let gh = eig.eigenvectors.transpose() * g;
        let norm_at = |r: f64| -> f64 {
            gh.iter()
                .zip(eig.eigenvalues.iter())
                .map(|(gi, li)| (gi / (li.max(0.0) + m * r)).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let (mut lo, mut hi) = (0.0_f64, (gn / m).sqrt());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if norm_at(mid) > mid {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-16 * hi {
                break;
            }
        }
        let r = 0.5 * (lo + hi);
        let coeffs = Point::from_iterator(
            d,
            gh.iter()
                .zip(eig.eigenvalues.iter())
                .map(|(gi, li)| -gi / (li.max(0.0) + m * r)),
        );
        Ok(&eig.eigenvectors * coeffs)
    }
}

impl<F: TwiceDifferentiable> ProxOracle for TaylorOracle<F> {
    fn alpha(&self) -> f64 {
        let p = self.order as f64;
        1.0 / ((1.0 + p) * (1.0 + self.extra / self.lp))
    }

    fn delta(&self) -> f64 {
        self.tolerance
    }

    fn omega(&self) -> OmegaSpec {
        match self.order {
            1 => OmegaSpec::Constant {
                level: 2.0 * self.strength(),
            },
            _ => OmegaSpec::Power {
                coef: 1.5 * self.strength(),
                exponent: 1.0,
            },
        }
    }

    fn prox(&mut self, x: &Point) -> Result<Point> {
        let g = self.objective.eval(x).gradient;
        let s = match self.order {
            1 => -&g / (2.0 * self.strength()),
            _ => {
                let h = self.objective.hessian(x);
                let s = self.cubic_step(&g, &h)?;
                let res = &g + &h * &s + &s * (1.5 * self.strength() * s.norm());
                if res.norm() > self.tolerance.max(1e-12 * g.norm()) * 10.0 {
                    return Err(Error::ContractViolation(format!(
                        "cubic step stationarity residual {}",
                        res.norm()
                    )));
                }
                s
            }
        };
        Ok(x + s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::Quadratic;
    use crate::oracle::RngStream;

    #[test]
    fn prox_of_half_norm_squared() {
        // g = |y|^2 / 2, kappa = 1: exact prox of x is x / 2
        let q = Quadratic::new(DMatrix::identity(3, 3), Point::zeros(3));
        let mut o = ApproxProxOracle::new(q, 1.0, 1.0, 1e-10).unwrap();
        let x = Point::from_vec(vec![0.4, -0.2, 0.8]);
        let y = o.prox(&x).unwrap();
        assert!((&y - &x / 2.0).norm() <= (2.0f64 * 1e-10).sqrt());
        assert!(o.residual(&x, &y) <= o.delta());
    }

    #[test]
    fn prox_contract_on_random_quadratics() {
        let mut rng = RngStream::new(2, 0);
        for _ in 0..10 {
            let q = Quadratic::random(8, 0.0, 2.0, 1.0, &mut rng);
            let l = q.smoothness();
            let mut o = ApproxProxOracle::new(q, l, 0.5, 1e-9).unwrap();
            let x = rng.uniform_in_ball(8, 1.0);
            let y = o.prox(&x).unwrap();
            assert!(o.residual(&x, &y) <= o.delta());
        }
    }

    #[test]
    fn first_order_taylor_is_gradient_step() {
        let q = Quadratic::new(DMatrix::identity(2, 2) * 2.0, Point::zeros(2));
        let mut o = TaylorOracle::new(q, 1, 2.0, 2.0).unwrap();
        assert!((o.alpha() - 0.25).abs() < 1e-15);
        let x = Point::from_vec(vec![1.0, -1.0]);
        let y = o.prox(&x).unwrap();
        // gradient 2x, step 1/(2 (L1 + L)) = 1/8
        assert!((&y - &x * 0.75).norm() < 1e-15);
    }

    #[test]
    fn second_order_taylor_on_quadratic_meets_contract() {
        let mut rng = RngStream::new(4, 0);
        let q = Quadratic::random(5, 0.1, 1.0, 1.0, &mut rng);
        let mut o = TaylorOracle::new(q.clone(), 2, 1.0, 3.0).unwrap();
        let omega = o.omega();
        for _ in 0..10 {
            let x = rng.uniform_in_ball(5, 1.0);
            let y = o.prox(&x).unwrap();
            let d = (&y - &x).norm();
            let lhs = (q.eval(&y).gradient + (&y - &x) * omega.eval(d)).norm();
            assert!(lhs <= o.alpha() * omega.eval(d) * d + 1e-9, "{lhs}");
        }
    }
}
