//! JSONL transcripts: one line per round, then a final line with the committed vectors.
//! Floats are written as hexadecimal literals so files round-trip bit-exactly. Frames are
//! not stored; they are regenerated from the seed and checked against the digest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hexfloat;
use crate::instances::{Branch, LowerBoundParams};
use crate::oracle::{DepthWorkLedger, Point};

use super::{draw_frame, GameTranscript, RoundRecord};

/// FNV-1a over the bit patterns of the frame vectors.
pub fn frame_digest(frame: &[Point]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in frame {
        for x in v.iter() {
            for b in x.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
    }
    format!("{h:016x}")
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RoundLine {
    t: usize,
    queries: Vec<Vec<String>>,
    values: Vec<String>,
    gradients: Vec<Vec<String>>,
    branches: Vec<Branch>,
    violations: Vec<usize>,
    frame_digest: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FinalLine {
    #[serde(rename = "final")]
    is_final: bool,
    seed: u64,
    d: usize,
    #[serde(rename = "N")]
    rounds: usize,
    #[serde(rename = "Q")]
    max_batch: usize,
    rho: String,
    committed: Vec<Vec<String>>,
}

fn hex_vec(v: &Point) -> Vec<String> {
    v.iter().map(|&x| hexfloat::encode(x)).collect()
}

fn parse_vec(v: &[String]) -> Result<Point> {
    v.iter()
        .map(|s| hexfloat::decode(s))
        .collect::<Result<Vec<_>>>()
        .map(Point::from_vec)
}

fn json_err(line: usize, e: serde_json::Error) -> Error {
    Error::Format(format!("transcript line {line}: {e}"))
}

impl GameTranscript {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.rounds {
            let line = RoundLine {
                t: r.t,
                queries: r.queries.iter().map(hex_vec).collect(),
                values: r.values.iter().map(|&x| hexfloat::encode(x)).collect(),
                gradients: r.gradients.iter().map(hex_vec).collect(),
                branches: r.branches.clone(),
                violations: r.violations.clone(),
                frame_digest: frame_digest(&r.frame),
            };
            out.push_str(&serde_json::to_string(&line).expect("serializable"));
            out.push('\n');
        }
        let fin = FinalLine {
            is_final: true,
            seed: self.seed,
            d: self.params.dim,
            rounds: self.params.rounds,
            max_batch: self.params.max_batch,
            rho: hexfloat::encode(self.params.rho),
            committed: self.committed.iter().map(hex_vec).collect(),
        };
        out.push_str(&serde_json::to_string(&fin).expect("serializable"));
        out.push('\n');
        out
    }

    /// Parses a transcript, re-deriving the parameters and regenerating every frame from
    /// the seed. Fails if a digest or committed vector does not match the regenerated frame.
    pub fn from_jsonl(text: &str) -> Result<Self> {
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        let Some((&(last_no, last), round_lines)) = lines.split_last() else {
            return Err(Error::IncompleteTranscript("empty transcript".into()));
        };
        let fin: FinalLine = serde_json::from_str(last).map_err(|e| json_err(last_no, e))?;
        if !fin.is_final {
            return Err(Error::Format(format!("transcript line {last_no}: `final` must be true")));
        }
        let params = LowerBoundParams::derive_saturating(fin.d, fin.rounds, fin.max_batch, hexfloat::decode(&fin.rho)?)?;
        let committed = fin
            .committed
            .iter()
            .map(|v| parse_vec(v))
            .collect::<Result<Vec<_>>>()?;
        if committed.len() != params.rounds || round_lines.len() != params.rounds {
            return Err(Error::IncompleteTranscript(format!(
                "{} rounds and {} committed vectors for N = {}",
                round_lines.len(),
                committed.len(),
                params.rounds
            )));
        }
        let mut ledger = DepthWorkLedger::new(params.max_batch);
        let mut rounds = Vec::with_capacity(params.rounds);
        for (k, &(no, text)) in round_lines.iter().enumerate() {
            let line: RoundLine = serde_json::from_str(text).map_err(|e| json_err(no, e))?;
            if line.t != k + 1 {
                return Err(Error::Format(format!("transcript line {no}: expected t = {}, got {}", k + 1, line.t)));
            }
            let frame = draw_frame(&params, fin.seed, &committed[..k], line.t)?;
            if frame_digest(&frame) != line.frame_digest {
                return Err(Error::Format(format!("transcript line {no}: frame digest mismatch")));
            }
            if frame[0] != committed[k] {
                return Err(Error::Format(format!(
                    "committed vector {} differs from the regenerated frame",
                    k + 1
                )));
            }
            let queries = line.queries.iter().map(|v| parse_vec(v)).collect::<Result<Vec<_>>>()?;
            let values = line.values.iter().map(|s| hexfloat::decode(s)).collect::<Result<Vec<_>>>()?;
            let gradients = line.gradients.iter().map(|v| parse_vec(v)).collect::<Result<Vec<_>>>()?;
            if values.len() != queries.len() || gradients.len() != queries.len() || line.branches.len() != queries.len() {
                return Err(Error::Format(format!("transcript line {no}: answer count differs from query count")));
            }
            ledger.record(queries.len());
            rounds.push(RoundRecord {
                t: line.t,
                queries,
                values,
                gradients,
                branches: line.branches,
                frame,
                violations: line.violations,
            });
        }
        Ok(Self {
            params,
            seed: fin.seed,
            rounds,
            committed,
            ledger,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::{run_game, RandomBall};
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let mut s = RandomBall::new(3);
        let (tr, _) = run_game(&mut s, 30, 3, 4, 0.1, 3).unwrap();
        let text = tr.to_jsonl();
        assert_eq!(text.lines().count(), 4);
        let back = GameTranscript::from_jsonl(&text).unwrap();
        assert_eq!(back, tr);
    }

    #[test]
    fn tampered_commitment_is_detected() {
        let mut s = RandomBall::new(3);
        let (tr, _) = run_game(&mut s, 30, 3, 4, 0.1, 9).unwrap();
        let text = tr.to_jsonl().replace("\"seed\":9", "\"seed\":10");
        assert!(GameTranscript::from_jsonl(&text).is_err());
    }
}
