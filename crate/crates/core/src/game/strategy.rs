use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::oracle::{Point, RngStream};

use super::RoundRecord;

/// Stream id reserved for player randomness; frame draws use ids `1..=N`.
const PLAYER_STREAM: u64 = 1 << 40;

/// Chooses the queries for round `t` from the answers seen so far.
pub trait PlayerStrategy {
    fn queries(
        &mut self,
        t: usize,
        history: &[RoundRecord],
        dim: usize,
        max_batch: usize,
    ) -> Result<Vec<Point>>;
}

/// Serializable choice of strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrategySpec {
    SubgradientDescent {
        #[serde(default = "default_step")]
        step: f64,
    },
    RandomBall,
    CoordinateProbe,
    /// Queries supplied verbatim, one list of points per round.
    External { rounds: Vec<Vec<Vec<f64>>> },
}

fn default_step() -> f64 {
    1.0
}

impl StrategySpec {
    pub fn build(&self, seed: u64) -> Result<Box<dyn PlayerStrategy>> {
        Ok(match self {
            Self::SubgradientDescent { step } => Box::new(SubgradientSweep::new(*step)?),
            Self::RandomBall => Box::new(RandomBall::new(seed)),
            Self::CoordinateProbe => Box::new(CoordinateProbe),
            Self::External { rounds } => Box::new(ExternalQueries {
                rounds: rounds
                    .iter()
                    .map(|r| r.iter().map(|p| Point::from_vec(p.clone())).collect())
                    .collect(),
            }),
        })
    }
}

/// `Q` points uniform in the unit ball each round.
pub struct RandomBall {
    rng: RngStream,
}

impl RandomBall {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: RngStream::new(seed, PLAYER_STREAM),
        }
    }
}

impl PlayerStrategy for RandomBall {
    fn queries(&mut self, _: usize, _: &[RoundRecord], dim: usize, max_batch: usize) -> Result<Vec<Point>> {
        Ok((0..max_batch).map(|_| self.rng.uniform_in_ball(dim, 1.0)).collect())
    }
}

/// Signed unit coordinate vectors `+e_k, -e_k`, continuing where the last round stopped.
pub struct CoordinateProbe;

impl PlayerStrategy for CoordinateProbe {
    fn queries(&mut self, t: usize, _: &[RoundRecord], dim: usize, max_batch: usize) -> Result<Vec<Point>> {
        Ok((0..max_batch)
            .map(|j| {
                let idx = (t - 1) * max_batch + j;
                let mut x = Point::zeros(dim);
                x[(idx / 2) % dim] = if idx % 2 == 0 { 1.0 } else { -1.0 };
                x
            })
            .collect())
    }
}

/// Projected subgradient steps from the best point seen so far, one step size per slot:
/// `step * 2^-j` for `j = 0..Q`. The first round queries the origin.
pub struct SubgradientSweep {
    pub step: f64,
}

impl SubgradientSweep {
    pub fn new(step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(invalid("step", format!("must be positive, got {step}")));
        }
        Ok(Self { step })
    }
}

impl PlayerStrategy for SubgradientSweep {
    fn queries(&mut self, _: usize, history: &[RoundRecord], dim: usize, max_batch: usize) -> Result<Vec<Point>> {
        let best = history
            .iter()
            .flat_map(|r| r.values.iter().zip(r.queries.iter().zip(&r.gradients)))
            .min_by(|a, b| a.0.total_cmp(b.0));
        let Some((_, (x, g))) = best else {
            return Ok(vec![Point::zeros(dim)]);
        };
        Ok((0..max_batch)
            .map(|j| {
                let mut y = x - g * (self.step * 0.5f64.powi(j as i32));
                let n = y.norm();
                if n > 1.0 {
                    y /= n;
                }
                y
            })
            .collect())
    }
}

/// Replays fixed query lists; missing rounds query the origin.
pub struct ExternalQueries {
    pub rounds: Vec<Vec<Point>>,
}

impl PlayerStrategy for ExternalQueries {
    fn queries(&mut self, t: usize, _: &[RoundRecord], dim: usize, _: usize) -> Result<Vec<Point>> {
        Ok(self
            .rounds
            .get(t - 1)
            .cloned()
            .unwrap_or_else(|| vec![Point::zeros(dim)]))
    }
}
