use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::oracle::{Objective, ParallelOracle, Point, RngStream};

use super::chi;

/// Samples processed per block in batched field evaluation.
const EVAL_BLOCK: usize = 1 << 14;

/// Importance-weighted average of sampled subgradients approximating the smoothed
/// gradient on the ball of radius `eta r / 4` around `center`:
/// `v(y) = (1/N) sum_i exp((2 u_i.s - |s|^2) / (2 r^2)) chi(u_i.s) grad f(x_i)` over samples
/// with `|u_i| <= (sqrt(d) + 1/eta) r`, where `u_i = x_i - c` and `s = y - c`.
#[derive(Debug, Clone)]
pub struct VectorField {
    center: Point,
    /// Offsets `x_i - c` of the samples inside the cutoff, one per column.
    offsets: DMatrix<f64>,
    gradients: DMatrix<f64>,
    /// Total number of samples drawn, including those beyond the cutoff.
    count: usize,
    r: f64,
    eta: f64,
}

impl VectorField {
    /// Draws `count` points from the Gaussian of radius `r` around `center` and queries
    /// all of them in one oracle round.
    pub fn sample<F: Objective>(
        oracle: &ParallelOracle<F>,
        center: &Point,
        r: f64,
        eta: f64,
        count: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if !(r > 0.0) || !(eta > 0.0 && eta < 1.0) {
            return Err(invalid("field", format!("need r > 0 and eta in (0, 1), got r = {r}, eta = {eta}")));
        }
        let d = center.len();
        let mut points = DMatrix::zeros(d, count);
        rng.fill_gaussian(points.as_mut_slice());
        for mut col in points.column_iter_mut() {
            for (x, c) in col.iter_mut().zip(center.iter()) {
                *x = c + r * *x;
            }
        }
        let answers = oracle.submit_columns(&points)?;
        for mut col in points.column_iter_mut() {
            col -= center;
        }
        Ok(Self::from_offsets(center.clone(), points, answers.gradients, r, eta))
    }

    /// Builds the field from sample offsets `x_i - c` and their subgradients.
    pub fn from_offsets(center: Point, mut offsets: DMatrix<f64>, mut gradients: DMatrix<f64>, r: f64, eta: f64) -> Self {
        let d = center.len();
        let count = offsets.ncols();
        let cutoff = ((d as f64).sqrt() + 1.0 / eta) * r;
        let keep: Vec<usize> = (0..count)
            .filter(|&i| offsets.column(i).norm() <= cutoff)
            .collect();
        if keep.len() < count {
            for (dst, &src) in keep.iter().enumerate() {
                if dst != src {
                    offsets.swap_columns(dst, src);
                    gradients.swap_columns(dst, src);
                }
            }
            offsets = offsets.columns(0, keep.len()).into_owned();
            gradients = gradients.columns(0, keep.len()).into_owned();
        }
        Self {
            center,
            offsets,
            gradients,
            count,
            r,
            eta,
        }
    }

    pub fn center(&self) -> &Point {
        &self.center
    }

    /// Samples drawn, including those dropped by the cutoff.
    pub fn sample_count(&self) -> usize {
        self.count
    }

    /// Samples inside the cutoff.
    pub fn active_count(&self) -> usize {
        self.offsets.ncols()
    }

    pub fn trust_radius(&self) -> f64 {
        self.eta * self.r / 4.0
    }

    fn check(&self, y: &Point) -> Result<Point> {
        if y.len() != self.center.len() {
            return Err(Error::DimensionMismatch {
                index: 0,
                got: y.len(),
                expected: self.center.len(),
            });
        }
        let s = y - &self.center;
        let dist = s.norm();
        let radius = self.trust_radius();
        if dist > radius * (1.0 + 1e-12) {
            return Err(Error::OutsideTrustRegion { distance: dist, radius });
        }
        Ok(s)
    }

    fn weight(&self, t: f64, ss: f64) -> f64 {
        let c = chi(t, self.r);
        if c == 0.0 {
            0.0
        } else {
            ((2.0 * t - ss) / (2.0 * self.r * self.r)).exp() * c / self.count as f64
        }
    }

    /// Field value at `y`; fails outside the trust region.
    pub fn eval(&self, y: &Point) -> Result<Point> {
        let s = self.check(y)?;
        let ss = s.norm_squared();
        let mut w = self.offsets.tr_mul(&s);
        w.apply(|t| *t = self.weight(*t, ss));
        Ok(&self.gradients * w)
    }

    /// Field values at many points, evaluated block-wise with matrix products.
    pub fn eval_many(&self, ys: &[Point]) -> Result<Vec<Point>> {
        let d = self.center.len();
        let m = ys.len();
        let mut shifts = DMatrix::zeros(d, m);
        let mut norms = Vec::with_capacity(m);
        for (j, y) in ys.iter().enumerate() {
            let s = self.check(y)?;
            norms.push(s.norm_squared());
            shifts.set_column(j, &s);
        }
        let mut out = DMatrix::zeros(d, m);
        let n = self.offsets.ncols();
        let mut start = 0;
        while start < n {
            let len = EVAL_BLOCK.min(n - start);
            // an explicit transpose lets gemm take its blocked path
            let block_t = self.offsets.columns(start, len).transpose();
            let mut w = DMatrix::zeros(len, m);
            w.gemm(1.0, &block_t, &shifts, 0.0);
            for (j, mut col) in w.column_iter_mut().enumerate() {
                let ss = norms[j];
                col.apply(|t| *t = self.weight(*t, ss));
            }
            out.gemm(1.0, &self.gradients.columns(start, len), &w, 1.0);
            start += len;
        }
        Ok(out.column_iter().map(|c| c.into_owned()).collect())
    }
}

/// Monte-Carlo estimate of the smoothed gradient with its standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct McGradient {
    pub estimate: Point,
    /// `sqrt(trace(cov) / n)` from the empirical covariance.
    pub standard_error: f64,
    pub samples: usize,
}

/// Averages `grad f(x + r xi)` over `samples` standard Gaussians `xi`, in oracle rounds
/// of at most the oracle's batch limit.
pub fn mc_gradient_oracle<F: Objective>(
    oracle: &ParallelOracle<F>,
    x: &Point,
    r: f64,
    samples: usize,
    rng: &mut RngStream,
) -> Result<McGradient> {
    if samples < 1000 {
        return Err(invalid("sample_count", format!("need at least 1000 samples, got {samples}")));
    }
    if !(r > 0.0) {
        return Err(invalid("r", "must be positive"));
    }
    let d = x.len();
    let block = oracle.config().max_batch.min(1 << 16);
    let mut sum = Point::zeros(d);
    let mut sum_sq = 0.0;
    let mut done = 0;
    while done < samples {
        let len = block.min(samples - done);
        let mut points = DMatrix::zeros(d, len);
        rng.fill_gaussian(points.as_mut_slice());
        for mut col in points.column_iter_mut() {
            for (p, c) in col.iter_mut().zip(x.iter()) {
                *p = c + r * *p;
            }
        }
        let answers = oracle.submit_columns(&points)?;
        for g in answers.gradients.column_iter() {
            sum += g;
            sum_sq += g.norm_squared();
        }
        done += len;
    }
    let n = samples as f64;
    let estimate = sum / n;
    let trace = (sum_sq - n * estimate.norm_squared()).max(0.0) / (n - 1.0);
    Ok(McGradient {
        estimate,
        standard_error: (trace / n).sqrt(),
        samples,
    })
}
