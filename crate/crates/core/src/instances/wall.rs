//! The wall function: the upper envelope of tangent planes of `h(y) = 2|y|^(1+alpha)`
//! taken over points of the annulus `delta <= |y| <= 1` lying outside every cone around
//! the hidden vectors.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::oracle::{Point, RngStream};

use super::ShieldedInstance;

/// Shape of the wall: inner radius, curvature exponent and cone aperture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallParams {
    pub delta: f64,
    pub alpha: f64,
    pub cone_threshold: f64,
}

impl WallParams {
    /// Sets `alpha = 1 / log2(1/delta)`, so `delta in (0, 1/2]` gives `alpha in (0, 1]`.
    pub fn new(delta: f64, cone_threshold: f64) -> Result<Self> {
        if !(delta > 0.0 && delta <= 0.5) {
            return Err(invalid("delta_wall", format!("must lie in (0, 1/2], got {delta}")));
        }
        if !(cone_threshold > 0.0) || !cone_threshold.is_finite() {
            return Err(invalid(
                "cone_threshold",
                format!("must be positive, got {cone_threshold}"),
            ));
        }
        Ok(Self {
            delta,
            alpha: 1.0 / (1.0 / delta).log2(),
            cone_threshold,
        })
    }
}

/// `h(y) = 2 |y|^(1+alpha)`.
pub fn wall_h(y: &Point, alpha: f64) -> f64 {
    2.0 * y.norm().powf(1.0 + alpha)
}

/// `grad h(y) = 2 (1+alpha) y / |y|^(1-alpha)`.
pub fn wall_h_gradient(y: &Point, alpha: f64) -> Point {
    let n = y.norm();
    if n == 0.0 {
        return Point::zeros(y.len());
    }
    y * (2.0 * (1.0 + alpha) * n.powf(alpha - 1.0))
}

/// Value at `x` of the tangent plane of `h` taken at `y`.
pub fn wall_tangent(y: &Point, x: &Point, alpha: f64) -> f64 {
    let n = y.norm();
    -2.0 * alpha * n.powf(1.0 + alpha) + 2.0 * (1.0 + alpha) * y.dot(x) * n.powf(alpha - 1.0)
}

/// `|v . x| >= threshold |x|`; the origin belongs to no cone.
pub fn cone_member(v: &Point, x: &Point, threshold: f64) -> bool {
    let n = x.norm();
    n > 0.0 && v.dot(x).abs() >= threshold * n
}

#[derive(Debug, Clone, PartialEq)]
pub struct SphereBoxMax {
    pub value: f64,
    pub coords: Vec<f64>,
}

/// Maximizes `sum_j w_j c_j` subject to `sum_j c_j^2 = radius^2` and `|c_j| <= cap`.
///
/// Returns `-inf` (with empty coordinates) when the constraints are infeasible.
/// Coordinates are produced by exact water-filling: the largest `|w_j|` are clipped at
/// `cap` and the rest are set to `|w_j| / nu`, with `nu` chosen to meet the radius.
pub fn sphere_box_max(w: &[f64], radius: f64, cap: f64) -> Result<SphereBoxMax> {
    if !(radius >= 0.0) || !radius.is_finite() {
        return Err(invalid("radius", format!("must be finite and >= 0, got {radius}")));
    }
    if !(cap >= 0.0) || !cap.is_finite() {
        return Err(invalid("cap", format!("must be finite and >= 0, got {cap}")));
    }
    let n = w.len();
    if radius == 0.0 {
        return Ok(SphereBoxMax {
            value: 0.0,
            coords: vec![0.0; n],
        });
    }
    let sq = radius * radius;
    let capacity = n as f64 * cap * cap;
    if n == 0 || sq > capacity * (1.0 + 1e-12) {
        return Ok(SphereBoxMax {
            value: f64::NEG_INFINITY,
            coords: Vec::new(),
        });
    }
    let sign = |x: f64| if x < 0.0 { -1.0 } else { 1.0 };
    let mut coords = vec![0.0; n];
    if sq >= capacity {
        for (c, &wj) in coords.iter_mut().zip(w) {
            *c = sign(wj) * cap;
        }
    } else {
        let mut order: Vec<usize> = (0..n).filter(|&j| w[j] != 0.0).collect();
        order.sort_by(|&p, &q| w[q].abs().total_cmp(&w[p].abs()));
        // suffix sums of w^2, accumulated from the small end; subtracting from the total
        // cancels badly when the tail is tiny
        let mut tails = vec![0.0; order.len() + 1];
        for m in (0..order.len()).rev() {
            tails[m] = tails[m + 1] + w[order[m]] * w[order[m]];
        }
        let mut filled = false;
        for (m, &j) in order.iter().enumerate() {
            let rest = sq - m as f64 * cap * cap;
            let nu = (tails[m] / rest).sqrt();
            if w[j].abs() / nu <= cap {
                for &k in &order[..m] {
                    coords[k] = sign(w[k]) * cap;
                }
                for &k in &order[m..] {
                    coords[k] = w[k] / nu;
                }
                filled = true;
                break;
            }
        }
        if !filled {
            // Every nonzero weight sits at the cap; spread the remaining mass over the
            // zero-weight coordinates, which leaves the objective unchanged.
            for &k in &order {
                coords[k] = sign(w[k]) * cap;
            }
            let zeros: Vec<usize> = (0..n).filter(|&j| w[j] == 0.0).collect();
            let rest = (sq - order.len() as f64 * cap * cap).max(0.0);
            let each = (rest / zeros.len() as f64).sqrt();
            for k in zeros {
                coords[k] = each;
            }
        }
    }
    let value = coords.iter().zip(w).map(|(c, wj)| c * wj).sum();
    Ok(SphereBoxMax { value, coords })
}

/// Output of the reduced wall evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct WallEvaluation {
    pub value: f64,
    pub gradient: Point,
    /// Maximizing point of the annulus (its in-span part only when `x` lies in the span).
    pub y_star: Point,
    /// Norm of the in-span part of the maximizer.
    pub a: f64,
    /// Norm of the out-of-span part of the maximizer.
    pub b: f64,
}

impl WallEvaluation {
    pub fn radius(&self) -> f64 {
        self.a.hypot(self.b)
    }
}

/// Whether `x` satisfies the cone condition needed for evaluating with `known` leading
/// vectors: the part of `x` orthogonal to `v_1..v_known` must avoid the cones of the
/// remaining vectors.
pub fn wall_precondition_holds(inst: &ShieldedInstance, known: usize, x: &Point) -> bool {
    let (_, z) = split(inst, known, x);
    let zn = z.norm();
    inst.vectors[known..]
        .iter()
        .all(|v| v.dot(&z).abs() <= inst.wall.cone_threshold * zn)
}

fn split(inst: &ShieldedInstance, known: usize, x: &Point) -> (Vec<f64>, Point) {
    let basis = &inst.vectors[..known];
    let w: Vec<f64> = basis.iter().map(|v| v.dot(x)).collect();
    let mut z = x.clone();
    for (v, &c) in basis.iter().zip(&w) {
        z.axpy(-c, v, 1.0);
    }
    (w, z)
}

const ANGLE_GRID: usize = 200;
const REFINE_POINTS: usize = 21;

/// Wall value and subgradient at `x` using only the first `known` vectors.
///
/// The annulus radius enters in closed form: for a fixed in-span fraction
/// `rho = a / |y|` the tangent value is `-2 alpha s^(1+alpha) + 2 (1+alpha) s^alpha K(rho)`
/// with `K(rho) = M(rho) + sqrt(1 - rho^2) |z|`, maximized at `s = clamp(K, delta, 1)`.
/// The fraction is found by a grid over its admissible range, two local refinements
/// and a golden-section polish (`K` is concave).
pub fn wall_eval_reduced(inst: &ShieldedInstance, known: usize, x: &Point) -> Result<WallEvaluation> {
    let wall = inst.wall;
    if wall.delta > 1.0 {
        return Err(invalid("delta_wall", format!("must not exceed 1, got {}", wall.delta)));
    }
    if known > inst.vectors.len() {
        return Err(invalid(
            "known",
            format!("{known} exceeds the {} hidden vectors", inst.vectors.len()),
        ));
    }
    if x.len() != inst.dim {
        return Err(Error::DimensionMismatch {
            index: 0,
            got: x.len(),
            expected: inst.dim,
        });
    }
    let thr = wall.cone_threshold;
    let (w, z) = split(inst, known, x);
    let zn = z.norm();
    let rho_max = ((known as f64).sqrt() * thr).min(1.0);

    let score = |rho: f64| -> f64 {
        let m = sphere_box_max(&w, rho, thr).map(|r| r.value).unwrap_or(f64::NEG_INFINITY);
        m + (1.0 - rho * rho).max(0.0).sqrt() * zn
    };

    let (mut best_rho, mut best) = (0.0, score(0.0));
    let consider = |rho: f64, best_rho: &mut f64, best: &mut f64| {
        let v = score(rho);
        if v > *best {
            *best = v;
            *best_rho = rho;
        }
    };
    if rho_max > 0.0 {
        let step = rho_max / ANGLE_GRID as f64;
        for k in 1..=ANGLE_GRID {
            consider(k as f64 * step, &mut best_rho, &mut best);
        }
        let mut half = step;
        for _ in 0..2 {
            let lo = (best_rho - half).max(0.0);
            let hi = (best_rho + half).min(rho_max);
            let h = (hi - lo) / (REFINE_POINTS - 1) as f64;
            for k in 0..REFINE_POINTS {
                consider(lo + k as f64 * h, &mut best_rho, &mut best);
            }
            half /= 10.0;
        }
        let (mut lo, mut hi) = ((best_rho - half).max(0.0), (best_rho + half).min(rho_max));
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut p = hi - g * (hi - lo);
        let mut q = lo + g * (hi - lo);
        let (mut fp, mut fq) = (score(p), score(q));
        for _ in 0..80 {
            if fp >= fq {
                hi = q;
                q = p;
                fq = fp;
                p = hi - g * (hi - lo);
                fp = score(p);
            } else {
                lo = p;
                p = q;
                fp = fq;
                q = lo + g * (hi - lo);
                fq = score(q);
            }
        }
        consider(p, &mut best_rho, &mut best);
        consider(q, &mut best_rho, &mut best);
    }

    let k_star = best.max(0.0);
    let alpha = wall.alpha;
    let s = k_star.clamp(wall.delta, 1.0);
    let value = -2.0 * alpha * s.powf(1.0 + alpha) + 2.0 * (1.0 + alpha) * s.powf(alpha) * k_star;

    let a = s * best_rho;
    let b = s * (1.0 - best_rho * best_rho).max(0.0).sqrt();
    let unit = sphere_box_max(&w, best_rho, thr)?;
    let mut y_star = Point::zeros(inst.dim);
    for (v, c) in inst.vectors[..known].iter().zip(&unit.coords) {
        y_star.axpy(s * c, v, 1.0);
    }
    if zn > 1e-12 * x.norm().max(1.0) {
        y_star.axpy(b / zn, &z, 1.0);
    }
    // With x in the span the out-of-span direction is free; averaging over it leaves
    // only the in-span part, which is still a subgradient.
    let gradient = &y_star * (2.0 * (1.0 + alpha) * s.powf(alpha - 1.0));
    Ok(WallEvaluation {
        value,
        gradient,
        y_star,
        a,
        b,
    })
}

/// Monte Carlo lower estimate of the wall at `x`: the best tangent value over uniform
/// samples of the annulus that avoid every cone. Returns `-inf` if no sample survives.
pub fn wall_eval_bruteforce(inst: &ShieldedInstance, x: &Point, samples: usize, rng: &mut RngStream) -> f64 {
    let d = inst.dim;
    let wall = inst.wall;
    let inner = wall.delta.powi(d as i32);
    let mut best = f64::NEG_INFINITY;
    for _ in 0..samples {
        let u = rng.unit_vector(d);
        let r = (inner + rng.uniform() * (1.0 - inner)).powf(1.0 / d as f64);
        let y = u * r;
        if inst.vectors.iter().any(|v| cone_member(v, &y, wall.cone_threshold)) {
            continue;
        }
        best = best.max(wall_tangent(&y, x, wall.alpha));
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sphere_box_unconstrained_aligns_with_weights() {
        let r = sphere_box_max(&[3.0, 4.0], 1.0, 1.0).unwrap();
        assert!((r.value - 5.0).abs() < 1e-15);
        assert!((r.coords[0] - 0.6).abs() < 1e-15 && (r.coords[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn sphere_box_clips_largest_weight() {
        // cap 0.9 on the second coordinate forces the first up to sqrt(0.19)
        let r = sphere_box_max(&[1.0, 10.0], 1.0, 0.9).unwrap();
        assert!((r.coords[1] - 0.9).abs() < 1e-15);
        assert!((r.coords[0] - 0.19f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn sphere_box_infeasible_is_neg_inf() {
        assert_eq!(sphere_box_max(&[1.0, 1.0], 1.0, 0.5).unwrap().value, f64::NEG_INFINITY);
        assert_eq!(sphere_box_max(&[], 0.1, 0.5).unwrap().value, f64::NEG_INFINITY);
        assert_eq!(sphere_box_max(&[], 0.0, 0.5).unwrap().value, 0.0);
        assert!(sphere_box_max(&[1.0], -1.0, 0.5).is_err());
        assert!(sphere_box_max(&[1.0], 1.0, -0.5).is_err());
    }

    #[test]
    fn sphere_box_zero_weights_absorb_mass() {
        let r = sphere_box_max(&[1.0, 0.0, 0.0], 1.0, 0.6).unwrap();
        assert!((r.value - 0.6).abs() < 1e-15);
        let sq: f64 = r.coords.iter().map(|c| c * c).sum();
        assert!((sq - 1.0).abs() < 1e-12);
        assert!(r.coords.iter().all(|c| c.abs() <= 0.6 + 1e-15));
    }

    #[test]
    fn cone_boundary_is_member_and_origin_is_not() {
        let v = Point::from_vec(vec![1.0, 0.0]);
        assert!(cone_member(&v, &Point::from_vec(vec![0.6, 0.8]), 0.6));
        assert!(!cone_member(&v, &Point::from_vec(vec![0.6, 0.8]), 0.6 + 1e-12));
        assert!(!cone_member(&v, &Point::zeros(2), 0.1));
    }

    #[test]
    fn h_gradient_matches_finite_differences() {
        let mut rng = RngStream::new(17, 0);
        for _ in 0..20 {
            let alpha = 0.2 + 0.8 * rng.uniform();
            let delta = 0.25;
            let u = rng.unit_vector(5);
            let y = u * (delta + (1.0 - delta) * rng.uniform());
            let g = wall_h_gradient(&y, alpha);
            for i in 0..5 {
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[i] += 1e-6;
                ym[i] -= 1e-6;
                let fd = (wall_h(&yp, alpha) - wall_h(&ym, alpha)) / 2e-6;
                assert!((fd - g[i]).abs() <= 1e-4, "coord {i}: fd {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn tangent_touches_h_at_its_base_point() {
        let y = Point::from_vec(vec![0.3, -0.4, 0.5]);
        assert!((wall_tangent(&y, &y, 0.7) - wall_h(&y, 0.7)).abs() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn sphere_box_is_feasible_and_beats_random_feasible_points(
            w in proptest::collection::vec(-2.0f64..2.0, 1..6),
            frac in 0.0f64..1.0,
            cap in 0.05f64..1.0,
            seed in any::<u64>(),
        ) {
            let n = w.len() as f64;
            let radius = frac * n.sqrt() * cap;
            let r = sphere_box_max(&w, radius, cap).unwrap();
            let sq: f64 = r.coords.iter().map(|c| c * c).sum();
            prop_assert!((sq - radius * radius).abs() <= 1e-10 * (1.0 + radius * radius));
            prop_assert!(r.coords.iter().all(|c| c.abs() <= cap * (1.0 + 1e-12)));
            // random feasible competitors: project onto box, rescale when possible
            let mut rng = RngStream::new(seed, 0);
            for _ in 0..50 {
                let g = rng.gaussian_vector(w.len());
                let mut c: Vec<f64> = g.iter().map(|x| x.clamp(-cap, cap)).collect();
                let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm == 0.0 { continue; }
                c.iter_mut().for_each(|x| *x *= radius / norm);
                if c.iter().any(|x| x.abs() > cap) { continue; }
                let v: f64 = c.iter().zip(&w).map(|(a, b)| a * b).sum();
                prop_assert!(v <= r.value + 1e-10, "competitor {} beats {}", v, r.value);
            }
        }
    }
}
