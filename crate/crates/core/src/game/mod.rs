//! The resampling game: a player submits batches of queries, the adversary answers with
//! a shielded-Nemirovski function whose undiscovered directions are redrawn every round.

mod strategy;
mod transcript;

pub use strategy::{
    CoordinateProbe, ExternalQueries, PlayerStrategy, RandomBall, StrategySpec, SubgradientSweep,
};
pub use transcript::frame_digest;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{shielded_eval, wall_precondition_holds, Branch, LowerBoundParams, ShieldedInstance};
use crate::oracle::{
    orthonormal_complement_sample, validate_batch, DepthWorkLedger, OracleConfig, Point, RngStream,
};

/// Everything that happened in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// 1-based round number.
    pub t: usize,
    pub queries: Vec<Point>,
    pub values: Vec<f64>,
    pub gradients: Vec<Point>,
    pub branches: Vec<Branch>,
    /// Frame drawn this round, `v_t^(t) .. v_t^(N)`; its first vector is committed.
    pub frame: Vec<Point>,
    /// Queries whose cone precondition failed; they were answered with the full frame.
    pub violations: Vec<usize>,
}

/// Live game between a player and the resampling adversary.
#[derive(Debug, Clone)]
pub struct GameState {
    params: LowerBoundParams,
    seed: u64,
    committed: Vec<Point>,
    rounds: Vec<RoundRecord>,
    ledger: DepthWorkLedger,
}

impl GameState {
    pub fn new(params: LowerBoundParams, seed: u64) -> Self {
        Self {
            ledger: DepthWorkLedger::new(params.max_batch),
            params,
            seed,
            committed: Vec::new(),
            rounds: Vec::new(),
        }
    }

    pub fn params(&self) -> &LowerBoundParams {
        &self.params
    }

    /// Number of the next round to be played (1-based).
    pub fn next_round(&self) -> usize {
        self.rounds.len() + 1
    }

    pub fn is_finished(&self) -> bool {
        self.rounds.len() == self.params.rounds
    }

    pub fn history(&self) -> &[RoundRecord] {
        &self.rounds
    }

    pub fn committed(&self) -> &[Point] {
        &self.committed
    }

    pub fn ledger(&self) -> DepthWorkLedger {
        self.ledger
    }

    /// Plays one round: validates the batch, draws the frame for this round from the
    /// complement of the committed vectors (stream `t` of the game seed), commits its
    /// first vector, and answers every query with `t - 1` known vectors.
    pub fn play_round(&mut self, queries: Vec<Point>) -> Result<&RoundRecord> {
        let n = self.params.rounds;
        let t = self.next_round();
        if t > n {
            return Err(Error::GameFinished { rounds: n });
        }
        let config = OracleConfig::unit_ball(self.params.max_batch);
        validate_batch(queries.iter().map(|q| q.as_slice()), queries.len(), &config, self.params.dim)?;

        let frame = draw_frame(&self.params, self.seed, &self.committed, t)?;
        let mut vectors = self.committed.clone();
        vectors.extend(frame.iter().cloned());
        let inst = ShieldedInstance::from_params(&self.params, vectors)?;
        let answers: Vec<(ShieldedAnswerParts, bool)> = queries
            .par_iter()
            .map(|x| answer(&inst, t, x))
            .collect::<Result<_>>()?;

        self.committed.push(frame[0].clone());
        self.ledger.record(queries.len());
        let mut record = RoundRecord {
            t,
            queries,
            values: Vec::with_capacity(answers.len()),
            gradients: Vec::with_capacity(answers.len()),
            branches: Vec::with_capacity(answers.len()),
            frame,
            violations: Vec::new(),
        };
        for (i, (a, ok)) in answers.into_iter().enumerate() {
            record.values.push(a.value);
            record.gradients.push(a.gradient);
            record.branches.push(a.branch);
            if !ok {
                record.violations.push(i);
            }
        }
        self.rounds.push(record);
        Ok(self.rounds.last().unwrap())
    }

    pub fn into_transcript(self) -> Result<GameTranscript> {
        if !self.is_finished() {
            return Err(Error::IncompleteTranscript(format!(
                "{} of {} rounds played",
                self.rounds.len(),
                self.params.rounds
            )));
        }
        Ok(GameTranscript {
            params: self.params,
            seed: self.seed,
            rounds: self.rounds,
            committed: self.committed,
            ledger: self.ledger,
        })
    }
}

struct ShieldedAnswerParts {
    value: f64,
    gradient: Point,
    branch: Branch,
}

/// Answer at round `t`: `t - 1` known vectors when the cone precondition holds, the full
/// frame otherwise. The flag reports whether the precondition held.
fn answer(inst: &ShieldedInstance, t: usize, x: &Point) -> Result<(ShieldedAnswerParts, bool)> {
    let ok = wall_precondition_holds(inst, t - 1, x);
    let known = if ok { t - 1 } else { inst.rounds() };
    let a = shielded_eval(inst, known, x)?;
    Ok((
        ShieldedAnswerParts {
            value: a.value,
            gradient: a.gradient,
            branch: a.branch,
        },
        ok,
    ))
}

pub(crate) fn draw_frame(
    params: &LowerBoundParams,
    seed: u64,
    committed: &[Point],
    t: usize,
) -> Result<Vec<Point>> {
    let mut rng = RngStream::new(seed, t as u64);
    orthonormal_complement_sample(committed, params.rounds - t + 1, params.dim, &mut rng)
}

/// A completed game.
#[derive(Debug, Clone, PartialEq)]
pub struct GameTranscript {
    pub params: LowerBoundParams,
    pub seed: u64,
    pub rounds: Vec<RoundRecord>,
    /// Final `v_1 .. v_N`.
    pub committed: Vec<Point>,
    pub ledger: DepthWorkLedger,
}

impl GameTranscript {
    /// The function the adversary is finally committed to.
    pub fn final_instance(&self) -> Result<ShieldedInstance> {
        if self.committed.len() != self.params.rounds {
            return Err(Error::IncompleteTranscript(format!(
                "{} committed vectors for {} rounds",
                self.committed.len(),
                self.params.rounds
            )));
        }
        ShieldedInstance::from_params(&self.params, self.committed.clone())
    }

    pub fn work(&self) -> usize {
        self.rounds.iter().map(|r| r.queries.len()).sum()
    }
}

/// First tuple `(t, query, s1, s2)` at which the win condition fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinViolation {
    pub t: usize,
    pub query: usize,
    pub s1: usize,
    pub s2: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WinReport {
    pub won: bool,
    pub first_violation: Option<WinViolation>,
}

/// Checks `|<x, v_s1^(s2)>| < threshold * |P x|` for every round `t`, query `x` of that
/// round and frame vector with `t <= s1 <= s2`, where `P` removes `v_1 .. v_(t-1)`.
/// Queries with `|P x| <= 1e-12 |x|` (including zero) reveal nothing new and are exempt.
pub fn win_event_check(transcript: &GameTranscript) -> WinReport {
    let thr = transcript.params.cone_threshold;
    for record in &transcript.rounds {
        let t = record.t;
        let known = &transcript.committed[..(t - 1).min(transcript.committed.len())];
        for (qi, x) in record.queries.iter().enumerate() {
            let mut px = x.clone();
            for v in known {
                px.axpy(-v.dot(x), v, 1.0);
            }
            let pn = px.norm();
            if pn <= 1e-12 * x.norm() || x.norm() == 0.0 {
                continue;
            }
            for later in &transcript.rounds[t - 1..] {
                let s1 = later.t;
                for (k, v) in later.frame.iter().enumerate() {
                    if !(v.dot(x).abs() < thr * pn) {
                        return WinReport {
                            won: false,
                            first_violation: Some(WinViolation {
                                t,
                                query: qi,
                                s1,
                                s2: s1 + k,
                            }),
                        };
                    }
                }
            }
        }
    }
    WinReport {
        won: true,
        first_violation: None,
    }
}

fn require_won(transcript: &GameTranscript) -> Result<()> {
    let report = win_event_check(transcript);
    match report.first_violation {
        None => Ok(()),
        Some(v) => Err(Error::WinEventFailed {
            round: v.t,
            query: v.query,
            s1: v.s1,
            s2: v.s2,
        }),
    }
}

/// Re-answers every query of a won game against the final function and returns the
/// largest absolute deviation over values and gradient coordinates.
pub fn consistency_replay(transcript: &GameTranscript) -> Result<f64> {
    require_won(transcript)?;
    let inst = transcript.final_instance()?;
    let mut worst = 0.0_f64;
    for record in &transcript.rounds {
        let devs: Vec<f64> = record
            .queries
            .par_iter()
            .zip(record.values.par_iter().zip(record.gradients.par_iter()))
            .map(|(x, (v, g))| {
                let (a, _) = answer(&inst, record.t, x)?;
                let dg = (&a.gradient - g).amax();
                Ok((a.value - v).abs().max(dg))
            })
            .collect::<Result<_>>()?;
        worst = devs.into_iter().fold(worst, f64::max);
    }
    Ok(worst)
}

/// `min_x f(x) + 1/sqrt(N)` over all queried points, with `f` the final function. Since
/// `f* <= -1/sqrt(N)`, this lower-bounds the suboptimality of every query.
pub fn gap_certificate(transcript: &GameTranscript) -> Result<f64> {
    require_won(transcript)?;
    let inst = transcript.final_instance()?;
    let offset = 1.0 / (transcript.params.rounds as f64).sqrt();
    let mut best = f64::INFINITY;
    for record in &transcript.rounds {
        for x in &record.queries {
            let (a, _) = answer(&inst, record.t, x)?;
            best = best.min(a.value + offset);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameReport {
    pub params: LowerBoundParams,
    pub seed: u64,
    pub won: bool,
    pub first_violation: Option<WinViolation>,
    /// Present only for won games.
    pub replay_deviation: Option<f64>,
    pub certificate: Option<f64>,
    pub precondition_violations: usize,
    pub depth: u64,
    pub work: u64,
}

/// Plays a full game with `strategy` and evaluates the win event, replay and certificate.
pub fn run_game_with(
    strategy: &mut dyn PlayerStrategy,
    params: LowerBoundParams,
    seed: u64,
) -> Result<(GameTranscript, GameReport)> {
    let mut state = GameState::new(params, seed);
    while !state.is_finished() {
        let queries = strategy.queries(state.next_round(), state.history(), params.dim, params.max_batch)?;
        state.play_round(queries)?;
    }
    let transcript = state.into_transcript()?;
    let win = win_event_check(&transcript);
    let (replay_deviation, certificate) = if win.won {
        (
            Some(consistency_replay(&transcript)?),
            Some(gap_certificate(&transcript)?),
        )
    } else {
        (None, None)
    };
    let report = GameReport {
        params,
        seed,
        won: win.won,
        first_violation: win.first_violation,
        replay_deviation,
        certificate,
        precondition_violations: transcript.rounds.iter().map(|r| r.violations.len()).sum(),
        depth: transcript.ledger.depth,
        work: transcript.ledger.work,
    };
    Ok((transcript, report))
}

/// [`run_game_with`] on parameters derived (saturating the wall radius) from `d, N, Q, rho`.
pub fn run_game(
    strategy: &mut dyn PlayerStrategy,
    dim: usize,
    rounds: usize,
    max_batch: usize,
    rho: f64,
    seed: u64,
) -> Result<(GameTranscript, GameReport)> {
    let params = LowerBoundParams::derive_saturating(dim, rounds, max_batch, rho)?;
    run_game_with(strategy, params, seed)
}
