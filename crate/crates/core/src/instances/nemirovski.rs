use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::oracle::{check_orthonormal, Objective, Point};

/// `x -> max_i (v_i . x - i * gamma)` over orthonormal `v_1..v_N` (1-indexed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NemirovskiParams {
    pub vectors: Vec<Point>,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NemirovskiValue {
    pub value: f64,
    /// 1-based index of the active piece; the smallest one on ties.
    pub argmax: usize,
    pub gradient: Point,
}

impl NemirovskiParams {
    pub fn new(vectors: Vec<Point>, gamma: f64) -> Result<Self> {
        if vectors.is_empty() {
            return Err(invalid("vectors", "need at least one vector"));
        }
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(invalid("gamma", format!("must be finite and >= 0, got {gamma}")));
        }
        let d = vectors[0].len();
        if let Some((index, v)) = vectors.iter().enumerate().find(|(_, v)| v.len() != d) {
            return Err(Error::DimensionMismatch {
                index,
                got: v.len(),
                expected: d,
            });
        }
        check_orthonormal(&vectors)?;
        Ok(Self { vectors, gamma })
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn eval(&self, x: &Point) -> NemirovskiValue {
        nemirovski_eval(&self.vectors, self.gamma, x)
    }
}

pub(crate) fn nemirovski_eval(vectors: &[Point], gamma: f64, x: &Point) -> NemirovskiValue {
    let mut best = f64::NEG_INFINITY;
    let mut argmax = 1;
    for (k, v) in vectors.iter().enumerate() {
        let val = v.dot(x) - (k + 1) as f64 * gamma;
        if val > best {
            best = val;
            argmax = k + 1;
        }
    }
    NemirovskiValue {
        value: best,
        argmax,
        gradient: vectors[argmax - 1].clone(),
    }
}

impl Objective for NemirovskiParams {
    fn dim(&self) -> usize {
        NemirovskiParams::dim(self)
    }

    fn eval_into(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let r = self.eval(&Point::from_column_slice(x));
        grad.copy_from_slice(r.gradient.as_slice());
        r.value
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(d: usize, i: usize) -> Point {
        let mut v = Point::zeros(d);
        v[i] = 1.0;
        v
    }

    #[test]
    fn ties_go_to_smallest_index() {
        let p = NemirovskiParams::new(vec![e(3, 0), e(3, 1)], 0.0).unwrap();
        let r = p.eval(&Point::zeros(3));
        assert_eq!((r.value, r.argmax), (0.0, 1));
        assert_eq!(r.gradient, e(3, 0));
    }

    #[test]
    fn offsets_shift_the_argmax() {
        let p = NemirovskiParams::new(vec![e(3, 0), e(3, 1), e(3, 2)], 0.1).unwrap();
        let r = p.eval(&Point::from_vec(vec![0.0, 0.5, 0.0]));
        assert_eq!(r.argmax, 2);
        assert!((r.value - 0.3).abs() < 1e-15);
    }

    #[test]
    fn optimum_of_negative_sum_point() {
        let n = 4;
        let vs: Vec<Point> = (0..n).map(|i| e(6, i)).collect();
        let p = NemirovskiParams::new(vs.clone(), 0.0).unwrap();
        let x = vs.iter().fold(Point::zeros(6), |acc, v| acc - v) / (n as f64).sqrt();
        let r = p.eval(&x);
        assert!((r.value + 1.0 / (n as f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_orthonormal_vectors() {
        let bad = vec![e(2, 0), Point::from_vec(vec![0.6, 0.8])];
        assert!(NemirovskiParams::new(bad, 0.0).is_err());
    }
}
