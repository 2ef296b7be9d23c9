//! Concrete test functions used by the solvers, benchmarks and acceptance checks.

use nalgebra::DMatrix;

use crate::oracle::{orthonormal_complement_sample, Objective, Point, RngStream};

/// `x -> c . x`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub coef: Point,
}

impl Linear {
    pub fn new(coef: Point) -> Self {
        Self { coef }
    }
}

impl Objective for Linear {
    fn dim(&self) -> usize {
        self.coef.len()
    }

    fn eval_into(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.copy_from_slice(self.coef.as_slice());
        self.coef.as_slice().iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

/// `x -> |x - center|`, 1-Lipschitz, minimized at `center`.
#[derive(Debug, Clone)]
pub struct ShiftedNorm {
    pub center: Point,
}

impl ShiftedNorm {
    pub fn new(center: Point) -> Self {
        Self { center }
    }
}

impl Objective for ShiftedNorm {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn eval_into(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let mut sq = 0.0;
        for ((g, xi), ci) in grad.iter_mut().zip(x).zip(self.center.as_slice()) {
            *g = xi - ci;
            sq += *g * *g;
        }
        let n = sq.sqrt();
        if n > 0.0 {
            grad.iter_mut().for_each(|g| *g /= n);
        }
        n
    }
}

/// Objectives that also expose a Hessian.
pub trait TwiceDifferentiable: Objective {
    fn hessian(&self, x: &Point) -> DMatrix<f64>;
}

/// `x -> 1/2 (x - m)^T H (x - m)` with `H` symmetric positive semidefinite.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub hessian: DMatrix<f64>,
    pub minimizer: Point,
}

impl Quadratic {
    pub fn new(hessian: DMatrix<f64>, minimizer: Point) -> Self {
        Self { hessian, minimizer }
    }

    /// Random rotation of a diagonal spectrum drawn uniformly from `[lo, hi]`,
    /// with the minimizer drawn uniformly from the ball of radius `radius`.
    pub fn random(dim: usize, lo: f64, hi: f64, radius: f64, rng: &mut RngStream) -> Self {
        let q = orthonormal_complement_sample(&[], dim, dim, rng).expect("full frame");
        let mut h = DMatrix::zeros(dim, dim);
        for v in &q {
            let lam = lo + (hi - lo) * rng.uniform();
            h += v * v.transpose() * lam;
        }
        let h = (&h + h.transpose()) * 0.5;
        let m = rng.uniform_in_ball(dim, radius);
        Self::new(h, m)
    }

    /// Largest eigenvalue, i.e. the gradient Lipschitz constant.
    pub fn smoothness(&self) -> f64 {
        self.hessian
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(0.0, f64::max)
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.minimizer.len()
    }

    fn eval_into(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let diff = Point::from_column_slice(x) - &self.minimizer;
        let hd = &self.hessian * &diff;
        grad.copy_from_slice(hd.as_slice());
        0.5 * diff.dot(&hd)
    }
}

impl TwiceDifferentiable for Quadratic {
    fn hessian(&self, _x: &Point) -> DMatrix<f64> {
        self.hessian.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shifted_norm_gradient_is_unit() {
        let f = ShiftedNorm::new(Point::from_vec(vec![1.0, 1.0]));
        let a = f.eval(&Point::from_vec(vec![4.0, 5.0]));
        assert_eq!(a.value, 5.0);
        assert!((a.gradient.norm() - 1.0).abs() < 1e-15);
        let at_center = f.eval(&Point::from_vec(vec![1.0, 1.0]));
        assert_eq!(at_center.value, 0.0);
        assert_eq!(at_center.gradient.norm(), 0.0);
    }

    #[test]
    fn random_quadratic_has_requested_spectrum() {
        let mut rng = RngStream::new(11, 0);
        let q = Quadratic::random(6, 0.2, 1.0, 1.0, &mut rng);
        let eig = q.hessian.clone().symmetric_eigenvalues();
        assert!(eig.iter().all(|&e| e >= 0.2 - 1e-12 && e <= 1.0 + 1e-12), "{eig}");
        assert!(q.minimizer.norm() <= 1.0);
        assert!(q.eval(&q.minimizer).value.abs() < 1e-15);
    }
}
