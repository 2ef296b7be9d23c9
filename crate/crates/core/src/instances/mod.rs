//! Hard instances: the Nemirovski max-of-linear function shielded by a wall that hides
//! the directions not yet revealed.

mod nemirovski;
mod params;
mod wall;

pub use nemirovski::{NemirovskiParams, NemirovskiValue};
pub use params::{
    cone_threshold, solve_wall_radius, wall_radius_map, wall_radius_target, LowerBoundParams,
};
pub use wall::{
    cone_member, sphere_box_max, wall_eval_bruteforce, wall_eval_reduced, wall_h, wall_h_gradient,
    wall_precondition_holds, wall_tangent, SphereBoxMax, WallEvaluation, WallParams,
};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hexfloat;
use crate::oracle::{check_orthonormal, orthonormal_complement_sample, Objective, Point, RngStream};

/// `f(x) = max(N(x), W(x))` for hidden orthonormal vectors `v_1..v_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShieldedInstance {
    pub dim: usize,
    pub vectors: Vec<Point>,
    pub gamma: f64,
    pub wall: WallParams,
    pub c_const: f64,
    pub seed: Option<u64>,
}

/// Which piece produced a shielded answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Wall,
    /// 1-based index of the active linear piece.
    Piece(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShieldedAnswer {
    pub value: f64,
    pub gradient: Point,
    pub branch: Branch,
}

impl ShieldedInstance {
    /// Builds an instance with `gamma = 2 delta * sqrt(C ln d / d)`.
    pub fn new(dim: usize, vectors: Vec<Point>, c_const: f64, delta: f64) -> Result<Self> {
        if vectors.is_empty() || vectors.len() > dim {
            return Err(invalid(
                "vectors",
                format!("need between 1 and {dim} vectors, got {}", vectors.len()),
            ));
        }
        if let Some((index, v)) = vectors.iter().enumerate().find(|(_, v)| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                index,
                got: v.len(),
                expected: dim,
            });
        }
        check_orthonormal(&vectors)?;
        if !(c_const > 0.0) || !c_const.is_finite() {
            return Err(invalid("C", format!("must be positive, got {c_const}")));
        }
        let wall = WallParams::new(delta, cone_threshold(dim, c_const))?;
        Ok(Self {
            dim,
            vectors,
            gamma: 2.0 * wall.delta * wall.cone_threshold,
            wall,
            c_const,
            seed: None,
        })
    }

    pub fn from_params(params: &LowerBoundParams, vectors: Vec<Point>) -> Result<Self> {
        Self::new(params.dim, vectors, params.c_const, params.delta)
    }

    /// Instance whose vectors are drawn from stream 0 of `seed`.
    pub fn random(dim: usize, rounds: usize, c_const: f64, delta: f64, seed: u64) -> Result<Self> {
        let mut rng = RngStream::new(seed, 0);
        let vectors = orthonormal_complement_sample(&[], rounds, dim, &mut rng)?;
        let mut inst = Self::new(dim, vectors, c_const, delta)?;
        inst.seed = Some(seed);
        Ok(inst)
    }

    pub fn rounds(&self) -> usize {
        self.vectors.len()
    }

    /// Whether `delta` satisfies the wall-radius equation within 1e-8, which is what makes
    /// the wall sit below `-1/sqrt(N)` at the Nemirovski optimum.
    pub fn wall_radius_consistent(&self) -> bool {
        let target = wall_radius_target(self.dim, self.rounds(), self.c_const);
        (wall_radius_map(self.wall.delta) - target).abs() <= 1e-8
    }

    /// `x* = -(1/sqrt N) sum_i v_i`.
    pub fn optimum_point(&self) -> Point {
        let scale = -1.0 / (self.rounds() as f64).sqrt();
        self.vectors
            .iter()
            .fold(Point::zeros(self.dim), |acc, v| acc + v * scale)
    }

    pub fn nemirovski(&self) -> NemirovskiParams {
        NemirovskiParams {
            vectors: self.vectors.clone(),
            gamma: self.gamma,
        }
    }

    pub fn to_json(&self) -> String {
        let file = InstanceFile {
            d: self.dim,
            n: self.rounds(),
            gamma: hexfloat::encode(self.gamma),
            delta_wall: hexfloat::encode(self.wall.delta),
            alpha_wall: hexfloat::encode(self.wall.alpha),
            c: hexfloat::encode(self.c_const),
            seed: self.seed,
            vectors: self
                .vectors
                .iter()
                .map(|v| v.iter().map(|&x| hexfloat::encode(x)).collect())
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile =
            serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if file.vectors.len() != file.n {
            return Err(Error::Format(format!(
                "N = {} but {} vectors stored",
                file.n,
                file.vectors.len()
            )));
        }
        let vectors = file
            .vectors
            .iter()
            .map(|row| {
                row.iter()
                    .map(|s| hexfloat::decode(s))
                    .collect::<Result<Vec<f64>>>()
                    .map(Point::from_vec)
            })
            .collect::<Result<Vec<Point>>>()?;
        let c_const = hexfloat::decode(&file.c)?;
        let delta = hexfloat::decode(&file.delta_wall)?;
        let mut inst = Self::new(file.d, vectors, c_const, delta)?;
        let alpha = hexfloat::decode(&file.alpha_wall)?;
        let gamma = hexfloat::decode(&file.gamma)?;
        if (alpha - inst.wall.alpha).abs() > 1e-12 || (gamma - inst.gamma).abs() > 1e-12 {
            return Err(Error::Format("alpha/gamma inconsistent with delta and C".into()));
        }
        inst.wall.alpha = alpha;
        inst.gamma = gamma;
        inst.seed = file.seed;
        Ok(inst)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    d: usize,
    #[serde(rename = "N")]
    n: usize,
    gamma: String,
    delta_wall: String,
    alpha_wall: String,
    #[serde(rename = "C")]
    c: String,
    seed: Option<u64>,
    vectors: Vec<Vec<String>>,
}

/// `max(N(x), W(x))`, evaluating the wall with the first `known` vectors; ties go to the wall.
pub fn shielded_eval(inst: &ShieldedInstance, known: usize, x: &Point) -> Result<ShieldedAnswer> {
    let wall = wall_eval_reduced(inst, known, x)?;
    let piece = nemirovski::nemirovski_eval(&inst.vectors, inst.gamma, x);
    Ok(if wall.value >= piece.value {
        ShieldedAnswer {
            value: wall.value,
            gradient: wall.gradient,
            branch: Branch::Wall,
        }
    } else {
        ShieldedAnswer {
            value: piece.value,
            gradient: piece.gradient,
            branch: Branch::Piece(piece.argmax),
        }
    })
}

impl Objective for ShieldedInstance {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let a = shielded_eval(self, self.rounds(), &Point::from_column_slice(x))
            .expect("dimension checked by the oracle");
        grad.copy_from_slice(a.gradient.as_slice());
        a.value
    }
}
