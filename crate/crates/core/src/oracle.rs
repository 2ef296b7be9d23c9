//! Batched first-order oracle with depth/work accounting, seeded random streams,
//! and the orthonormal-frame primitives shared by the hard instances and the game.

use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = DVector<f64>;

/// Slack allowed on the unit-ball query constraint.
pub const BALL_TOLERANCE: f64 = 1e-9;
/// Maximum Gram-matrix deviation accepted for an orthonormal basis.
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-10;
/// Residual norm below which a Gram-Schmidt draw is discarded and redrawn.
pub const REDRAW_THRESHOLD: f64 = 1e-8;

/// A convex function exposing its value and one subgradient.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    /// Returns the value at `x` and writes a subgradient into `grad`.
    fn eval_into(&self, x: &[f64], grad: &mut [f64]) -> f64;

    fn eval(&self, x: &Point) -> OracleAnswer {
        let mut gradient = Point::zeros(self.dim());
        let value = self.eval_into(x.as_slice(), gradient.as_mut_slice());
        OracleAnswer { value, gradient }
    }
}

impl<T: Objective + ?Sized> Objective for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval_into(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (**self).eval_into(x, grad)
    }
}

impl<T: Objective + ?Sized + Send> Objective for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval_into(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (**self).eval_into(x, grad)
    }
}

impl<T: Objective + ?Sized + Send> Objective for std::sync::Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval_into(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (**self).eval_into(x, grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleAnswer {
    pub value: f64,
    pub gradient: Point,
}

/// Answers for a batch stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnAnswers {
    pub values: Vec<f64>,
    pub gradients: DMatrix<f64>,
}

/// Running totals of oracle rounds (depth) and points evaluated (work).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthWorkLedger {
    pub depth: u64,
    pub work: u64,
    pub max_batch: usize,
}

impl DepthWorkLedger {
    pub fn new(max_batch: usize) -> Self {
        Self {
            depth: 0,
            work: 0,
            max_batch,
        }
    }

    /// `depth <= work <= max_batch * depth`.
    pub fn is_consistent(&self) -> bool {
        self.depth <= self.work && self.work <= self.max_batch as u64 * self.depth
    }

    pub(crate) fn record(&mut self, size: usize) {
        self.depth += 1;
        self.work += size as u64;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Largest batch accepted per round.
    pub max_batch: usize,
    /// Queries must satisfy `|x| <= radius + BALL_TOLERANCE`; `None` leaves the domain unrestricted.
    pub domain_radius: Option<f64>,
}

impl OracleConfig {
    pub fn unit_ball(max_batch: usize) -> Self {
        Self {
            max_batch,
            domain_radius: Some(1.0),
        }
    }

    pub fn unrestricted(max_batch: usize) -> Self {
        Self {
            max_batch,
            domain_radius: None,
        }
    }
}

/// Checks batch size, dimensions and the domain constraint, naming the first offender.
pub fn validate_batch<'a>(
    points: impl Iterator<Item = &'a [f64]>,
    size: usize,
    config: &OracleConfig,
    dim: usize,
) -> Result<()> {
    if size == 0 {
        return Err(Error::EmptyBatch);
    }
    if size > config.max_batch {
        return Err(Error::BatchTooLarge {
            size,
            limit: config.max_batch,
        });
    }
    for (index, x) in points.enumerate() {
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                index,
                got: x.len(),
                expected: dim,
            });
        }
        if let Some(radius) = config.domain_radius {
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm <= radius + BALL_TOLERANCE) {
                return Err(Error::OutsideDomain { index, norm, radius });
            }
        }
    }
    Ok(())
}

/// Wraps an objective so that every access goes through counted batches.
pub struct ParallelOracle<F> {
    objective: F,
    config: OracleConfig,
    ledger: Mutex<DepthWorkLedger>,
}

impl<F: Objective> ParallelOracle<F> {
    pub fn new(objective: F, config: OracleConfig) -> Result<Self> {
        if config.max_batch == 0 {
            return Err(crate::error::invalid("max_batch", "must be at least 1"));
        }
        Ok(Self {
            objective,
            ledger: Mutex::new(DepthWorkLedger::new(config.max_batch)),
            config,
        })
    }

    pub fn objective(&self) -> &F {
        &self.objective
    }

    pub fn config(&self) -> OracleConfig {
        self.config
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn ledger(&self) -> DepthWorkLedger {
        *self.ledger.lock().expect("ledger lock poisoned")
    }

    /// One round of queries. Either every point is answered and the ledger grows by
    /// one round, or nothing is recorded.
    pub fn submit_batch(&self, points: &[Point]) -> Result<Vec<OracleAnswer>> {
        validate_batch(points.iter().map(|p| p.as_slice()), points.len(), &self.config, self.dim())?;
        self.ledger
            .lock()
            .expect("ledger lock poisoned")
            .record(points.len());
        Ok(points.par_iter().map(|x| self.objective.eval(x)).collect())
    }

    /// Same contract as [`submit_batch`](Self::submit_batch) for points stored as matrix columns.
    pub fn submit_columns(&self, points: &DMatrix<f64>) -> Result<ColumnAnswers> {
        let d = self.objective.dim();
        let n = points.ncols();
        if points.nrows() != d {
            return Err(Error::DimensionMismatch {
                index: 0,
                got: points.nrows(),
                expected: d,
            });
        }
        validate_batch(points.as_slice().chunks(d.max(1)), n, &self.config, d)?;
        self.ledger.lock().expect("ledger lock poisoned").record(n);
        let mut gradients = DMatrix::zeros(d, n);
        let mut values = vec![0.0; n];
        gradients
            .as_mut_slice()
            .par_chunks_mut(d)
            .zip(values.par_iter_mut())
            .zip(points.as_slice().par_chunks(d))
            .for_each(|((g, v), x)| *v = self.objective.eval_into(x, g));
        Ok(ColumnAnswers { values, gradients })
    }
}

/// A ChaCha20 stream selected by `(seed, stream_id)`; distinct ids never overlap.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha20Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn gaussian(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn gaussian_vector(&mut self, dim: usize) -> Point {
        Point::from_fn(dim, |_, _| self.gaussian())
    }

    pub fn fill_gaussian(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.gaussian();
        }
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn unit_vector(&mut self, dim: usize) -> Point {
        loop {
            let g = self.gaussian_vector(dim);
            let n = g.norm();
            if n > 0.0 {
                return g / n;
            }
        }
    }

    /// Uniform sample from the ball of the given radius.
    pub fn uniform_in_ball(&mut self, dim: usize, radius: f64) -> Point {
        let u = self.unit_vector(dim);
        let r = radius * self.uniform().powf(1.0 / dim as f64);
        u * r
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Largest absolute entry of `B^T B - I`.
pub fn gram_deviation(basis: &[Point]) -> f64 {
    let mut worst = 0.0_f64;
    for (i, u) in basis.iter().enumerate() {
        for (j, v) in basis.iter().enumerate().skip(i) {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((u.dot(v) - target).abs());
        }
    }
    worst
}

pub fn check_orthonormal(basis: &[Point]) -> Result<()> {
    let deviation = gram_deviation(basis);
    if deviation > ORTHONORMAL_TOLERANCE || deviation.is_nan() {
        return Err(Error::NotOrthonormal { deviation });
    }
    Ok(())
}

/// Orthogonal projection of `x` onto the span of an orthonormal basis.
pub fn project_span(basis: &[Point], x: &Point) -> Result<Point> {
    check_orthonormal(basis)?;
    for (i, v) in basis.iter().enumerate() {
        if v.len() != x.len() {
            return Err(Error::DimensionMismatch {
                index: i,
                got: v.len(),
                expected: x.len(),
            });
        }
    }
    Ok(project_span_unchecked(basis, x))
}

pub(crate) fn project_span_unchecked(basis: &[Point], x: &Point) -> Point {
    let mut out = Point::zeros(x.len());
    for v in basis {
        out.axpy(v.dot(x), v, 1.0);
    }
    out
}

/// Removes the components of `x` along each (orthonormal) vector, in place.
pub(crate) fn remove_components(x: &mut Point, vectors: &[Point]) {
    for v in vectors {
        let c = v.dot(x);
        x.axpy(-c, v, 1.0);
    }
}

/// Draws `count` orthonormal vectors in the orthogonal complement of `basis` inside R^dim.
///
/// Gaussian draws are projected against the basis and the vectors accepted so far
/// (two Gram-Schmidt passes); draws whose residual falls under [`REDRAW_THRESHOLD`]
/// are discarded.
pub fn orthonormal_complement_sample(
    basis: &[Point],
    count: usize,
    dim: usize,
    rng: &mut RngStream,
) -> Result<Vec<Point>> {
    if basis.len() + count > dim {
        return Err(Error::SpanExhausted {
            basis: basis.len(),
            count,
            dim,
        });
    }
    check_orthonormal(basis)?;
    if let Some((index, v)) = basis.iter().enumerate().find(|(_, v)| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            index,
            got: v.len(),
            expected: dim,
        });
    }
    let mut out: Vec<Point> = Vec::with_capacity(count);
    while out.len() < count {
        let mut g = rng.gaussian_vector(dim);
        for _ in 0..2 {
            remove_components(&mut g, basis);
            remove_components(&mut g, &out);
        }
        let n = g.norm();
        if n < REDRAW_THRESHOLD {
            continue;
        }
        out.push(g / n);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::Linear;

    fn basis_of(v: &[Point]) -> Vec<Point> {
        v.to_vec()
    }

    #[test]
    fn batch_updates_ledger_once() {
        let oracle = ParallelOracle::new(
            Linear::new(Point::from_vec(vec![1.0, 2.0, 3.0])),
            OracleConfig::unit_ball(4),
        )
        .unwrap();
        let pts = vec![Point::zeros(3); 3];
        let answers = oracle.submit_batch(&pts).unwrap();
        assert_eq!(answers.len(), 3);
        let l = oracle.ledger();
        assert_eq!((l.depth, l.work), (1, 3));
        assert!(l.is_consistent());
    }

    #[test]
    fn oversize_batch_names_limit_and_leaves_ledger() {
        let oracle = ParallelOracle::new(
            Linear::new(Point::from_vec(vec![1.0, 0.0])),
            OracleConfig::unit_ball(2),
        )
        .unwrap();
        let err = oracle.submit_batch(&vec![Point::zeros(2); 3]).unwrap_err();
        assert_eq!(err, Error::BatchTooLarge { size: 3, limit: 2 });
        assert!(err.to_string().contains('2'));
        assert_eq!(oracle.ledger().depth, 0);
    }

    #[test]
    fn point_outside_ball_names_index() {
        let oracle = ParallelOracle::new(
            Linear::new(Point::from_vec(vec![1.0, 0.0])),
            OracleConfig::unit_ball(4),
        )
        .unwrap();
        let pts = vec![
            Point::from_vec(vec![0.5, 0.0]),
            Point::from_vec(vec![1.0 + 1e-6, 0.0]),
        ];
        match oracle.submit_batch(&pts).unwrap_err() {
            Error::OutsideDomain { index, .. } => assert_eq!(index, 1),
            e => panic!("unexpected error {e:?}"),
        }
        assert_eq!(oracle.ledger().work, 0);
        let edge = vec![Point::from_vec(vec![1.0 + 5e-10, 0.0])];
        assert!(oracle.submit_batch(&edge).is_ok());
    }

    #[test]
    fn column_batch_matches_point_batch() {
        let c = Point::from_vec(vec![0.3, -0.2, 0.1]);
        let oracle = ParallelOracle::new(Linear::new(c.clone()), OracleConfig::unrestricted(8)).unwrap();
        let mut rng = RngStream::new(5, 0);
        let pts: Vec<Point> = (0..5).map(|_| rng.gaussian_vector(3)).collect();
        let cols = DMatrix::from_columns(&pts);
        let a = oracle.submit_batch(&pts).unwrap();
        let b = oracle.submit_columns(&cols).unwrap();
        for (i, ans) in a.iter().enumerate() {
            assert_eq!(ans.value, b.values[i]);
            assert_eq!(ans.gradient, b.gradients.column(i).into_owned());
        }
        assert_eq!(oracle.ledger().depth, 2);
    }

    #[test]
    fn project_span_rejects_non_orthonormal() {
        let b = basis_of(&[Point::from_vec(vec![1.0, 0.0]), Point::from_vec(vec![1.0, 1e-3])]);
        assert!(matches!(
            project_span(&b, &Point::zeros(2)),
            Err(Error::NotOrthonormal { .. })
        ));
    }

    #[test]
    fn complement_sample_rejects_overfull_request() {
        let mut rng = RngStream::new(1, 0);
        let basis = orthonormal_complement_sample(&[], 3, 4, &mut rng).unwrap();
        let err = orthonormal_complement_sample(&basis, 2, 4, &mut rng).unwrap_err();
        assert_eq!(err, Error::SpanExhausted { basis: 3, count: 2, dim: 4 });
    }

    #[test]
    fn complement_sample_fills_space() {
        let mut rng = RngStream::new(9, 3);
        let all = orthonormal_complement_sample(&[], 6, 6, &mut rng).unwrap();
        assert!(gram_deviation(&all) <= 1e-12);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = RngStream::new(42, 1);
        let mut b = RngStream::new(42, 1);
        let mut c = RngStream::new(42, 2);
        let xa: Vec<u64> = (0..4).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..4).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..4).map(|_| c.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn uniform_ball_stays_inside() {
        let mut rng = RngStream::new(3, 0);
        for _ in 0..200 {
            assert!(rng.uniform_in_ball(7, 1.0).norm() <= 1.0);
        }
    }
}
