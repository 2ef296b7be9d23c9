use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// `delta -> delta / log2(1/delta)`, strictly increasing on (0, 1/2) with supremum 1/2.
pub fn wall_radius_map(delta: f64) -> f64 {
    delta / (1.0 / delta).log2()
}

/// Solves `delta / log2(1/delta) = target` for `delta in (0, 1/2)` by bisection.
pub fn solve_wall_radius(target: f64) -> Result<f64> {
    if !(target > 0.0) || !(target < 0.5) {
        return Err(Error::NoWallRadius { target });
    }
    let (mut lo, mut hi) = (0.0_f64, 0.5_f64);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if wall_radius_map(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `sqrt(C ln d / d)`: aperture of the cones and scale of the win-event test.
pub fn cone_threshold(dim: usize, c_const: f64) -> f64 {
    let d = dim as f64;
    (c_const * d.ln() / d).sqrt()
}

/// Right-hand side of the wall-radius equation for `N` hidden vectors.
pub fn wall_radius_target(dim: usize, rounds: usize, c_const: f64) -> f64 {
    let d = dim as f64;
    let n = rounds as f64;
    4.0 * (c_const * n * d.ln() / d).sqrt() + 1.0 / n.sqrt()
}

/// Hard-instance parameters for dimension `d`, `N` rounds, `Q` queries per round and
/// failure probability `rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundParams {
    pub dim: usize,
    pub rounds: usize,
    pub max_batch: usize,
    pub rho: f64,
    /// `12 + 4 log_d(Q / rho)`.
    pub c_const: f64,
    pub cone_threshold: f64,
    /// Target of the wall-radius equation.
    pub wall_target: f64,
    pub delta: f64,
    pub alpha: f64,
    /// `2 delta * cone_threshold`.
    pub gamma: f64,
    /// False when the wall-radius equation had no root and `delta` was saturated at 1/2.
    pub wall_radius_solved: bool,
    /// `ln(N) N sqrt(C ln d / d) <= 1/4`.
    pub theorem_condition_holds: bool,
}

impl LowerBoundParams {
    /// Strict derivation: fails when the wall-radius equation has no root in (0, 1/2).
    pub fn derive(dim: usize, rounds: usize, max_batch: usize, rho: f64) -> Result<Self> {
        let p = Self::derive_saturating(dim, rounds, max_batch, rho)?;
        if !p.wall_radius_solved {
            return Err(Error::NoWallRadius { target: p.wall_target });
        }
        Ok(p)
    }

    /// Like [`derive`](Self::derive), but saturates `delta` at 1/2 (so `alpha = 1`) when the
    /// wall-radius equation has no root, and reports it through `wall_radius_solved`.
    /// Small-dimension experiments live in this regime.
    pub fn derive_saturating(dim: usize, rounds: usize, max_batch: usize, rho: f64) -> Result<Self> {
        if dim < 2 {
            return Err(invalid("d", format!("need d >= 2, got {dim}")));
        }
        if rounds < 1 || 2 * rounds > dim {
            return Err(invalid("N", format!("need 1 <= N <= d/2, got N = {rounds}, d = {dim}")));
        }
        if max_batch < 1 {
            return Err(invalid("Q", "need Q >= 1"));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(invalid("rho", format!("need rho in (0, 1), got {rho}")));
        }
        let d = dim as f64;
        let c_const = 12.0 + 4.0 * (max_batch as f64 / rho).ln() / d.ln();
        let thr = cone_threshold(dim, c_const);
        let wall_target = wall_radius_target(dim, rounds, c_const);
        let (delta, solved) = match solve_wall_radius(wall_target) {
            Ok(delta) => (delta, true),
            Err(_) => (0.5, false),
        };
        let n = rounds as f64;
        Ok(Self {
            dim,
            rounds,
            max_batch,
            rho,
            c_const,
            cone_threshold: thr,
            wall_target,
            delta,
            alpha: 1.0 / (1.0 / delta).log2(),
            gamma: 2.0 * delta * thr,
            wall_radius_solved: solved,
            theorem_condition_holds: n.ln() * n * thr <= 0.25,
        })
    }
}
