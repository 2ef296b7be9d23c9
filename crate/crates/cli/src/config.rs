//! Experiment configuration: a JSON document with a mandatory seed, one section per
//! mode, and unknown keys rejected everywhere.

use serde::{Deserialize, Serialize};

use paraccel::game::StrategySpec;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Solve,
    Game,
    Bench,
    Verify,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Solve => "solve",
            Self::Game => "game",
            Self::Bench => "bench",
            Self::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<InstanceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub game: Option<GameSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bench: Option<BenchSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    /// `|x - x0|` with `x0` uniform in the ball of radius `R`; optimum 0.
    Distance,
    /// `max_i v_i.x - i gamma` over `N` random orthonormal vectors; reference value is
    /// the value at `-(v_1 + ... + v_N) / sqrt(N)`.
    Nemirovski,
    /// `1/2 (x - m)^T H (x - m)` with spectrum in `[0, 1]` and `|m| <= R`; optimum 0.
    Quadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub kind: InstanceKind,
    pub d: usize,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Seed of the instance draw; the run seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    HighlyParallel,
    Subgradient,
    Drs,
    /// Accelerated proximal-point framework with an inexact proximal oracle (quadratics).
    ProximalPoint,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::HighlyParallel => "highly-parallel",
            Self::Subgradient => "subgradient",
            Self::Drs => "drs",
            Self::ProximalPoint => "proximal-point",
        }
    }
}

/// Constant overrides; every field is optional and falls back to the derived value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_oracle: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_outer: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<u64>,
    /// Proximal weight of the proximal-point method.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    /// Subproblem accuracy of the proximal-point method.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

fn default_nu() -> f64 {
    0.1
}

fn default_true() -> bool {
    true
}

fn default_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub method: Method,
    pub eps: f64,
    #[serde(rename = "L", default = "default_one")]
    pub lipschitz: f64,
    #[serde(rename = "R", default = "default_one")]
    pub radius: f64,
    #[serde(default = "default_nu")]
    pub nu: f64,
    /// Stop once the gap to the known optimum is at most `eps`.
    #[serde(default = "default_true")]
    pub stop_at_gap: bool,
    #[serde(default)]
    pub overrides: Overrides,
}

fn default_games() -> usize {
    1
}

fn default_strategy() -> StrategySpec {
    StrategySpec::RandomBall
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSpec {
    pub d: usize,
    #[serde(rename = "N")]
    pub rounds: usize,
    #[serde(rename = "Q")]
    pub max_batch: usize,
    pub rho: f64,
    #[serde(default = "default_strategy")]
    pub strategy: StrategySpec,
    /// Games to play; game `i` uses seed `seed + i`.
    #[serde(default = "default_games")]
    pub games: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    pub methods: Vec<Method>,
    pub d: Vec<usize>,
    pub eps: Vec<f64>,
    /// Instance seeds per cell; the run seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default = "default_kind")]
    pub instance: InstanceKind,
    #[serde(rename = "L", default = "default_one")]
    pub lipschitz: f64,
    #[serde(rename = "R", default = "default_one")]
    pub radius: f64,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default)]
    pub overrides: Overrides,
}

fn default_kind() -> InstanceKind {
    InstanceKind::Distance
}

fn default_scope() -> String {
    "all".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    #[serde(default = "default_scope")]
    pub scope: String,
    /// Deliberately broken component, for checking that the suite catches it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inject_fault: Option<Fault>,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            scope: default_scope(),
            inject_fault: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Replaces the field cutoff weight by a hard step at `r^2 / 2`.
    Chi,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

/// Parses a config, reporting the key path of the first schema error.
pub fn parse_config(text: &str) -> CliResult<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::schema(path, e.into_inner().to_string())
    })?;
    config.validate()?;
    Ok(config)
}

fn require<'a, T>(section: &'a Option<T>, name: &str, mode: Mode) -> CliResult<&'a T> {
    section
        .as_ref()
        .ok_or_else(|| CliError::schema(name, format!("section required for mode `{}`", mode.name())))
}

fn positive(path: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::schema(path, format!("must be positive and finite, got {v}")))
    }
}

impl ExperimentConfig {
    /// Checks the cross-field constraints serde cannot express.
    pub fn validate(&self) -> CliResult<()> {
        match self.mode {
            Mode::Solve => {
                let inst = require(&self.instance, "instance", self.mode)?;
                let solver = require(&self.solver, "solver", self.mode)?;
                if inst.d == 0 {
                    return Err(CliError::schema("instance.d", "must be positive"));
                }
                if inst.kind == InstanceKind::Nemirovski && inst.rounds.is_none() {
                    return Err(CliError::schema("instance.N", "required for the nemirovski kind"));
                }
                positive("solver.eps", solver.eps)?;
                positive("solver.L", solver.lipschitz)?;
                positive("solver.R", solver.radius)?;
                if (solver.method == Method::ProximalPoint) != (inst.kind == InstanceKind::Quadratic) {
                    return Err(CliError::schema(
                        "solver.method",
                        "proximal-point runs exactly on the quadratic instance kind",
                    ));
                }
            }
            Mode::Game => {
                let g = require(&self.game, "game", self.mode)?;
                if g.games == 0 {
                    return Err(CliError::schema("game.games", "must be positive"));
                }
            }
            Mode::Bench => {
                let b = require(&self.bench, "bench", self.mode)?;
                if b.methods.is_empty() {
                    return Err(CliError::schema("bench.methods", "grid must be nonempty"));
                }
                if b.d.is_empty() || b.d.contains(&0) {
                    return Err(CliError::schema("bench.d", "grid must be nonempty and positive"));
                }
                if b.eps.is_empty() {
                    return Err(CliError::schema("bench.eps", "grid must be nonempty"));
                }
                for (i, &e) in b.eps.iter().enumerate() {
                    positive(&format!("bench.eps[{i}]"), e)?;
                }
                if b.methods.contains(&Method::ProximalPoint) != (b.instance == InstanceKind::Quadratic) {
                    return Err(CliError::schema(
                        "bench.methods",
                        "proximal-point runs exactly on the quadratic instance kind",
                    ));
                }
                if b.instance == InstanceKind::Nemirovski {
                    return Err(CliError::schema("bench.instance", "sweeps support distance and quadratic"));
                }
            }
            Mode::Verify => {}
        }
        Ok(())
    }

    pub fn output_dir(&self) -> Option<&str> {
        self.output.as_ref().and_then(|o| o.dir.as_deref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_mandatory() {
        let err = parse_config(r#"{"mode": "verify"}"#).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn unknown_key_reports_its_path() {
        let text = r#"{"mode": "solve", "seed": 1,
            "instance": {"kind": "distance", "d": 4},
            "solver": {"method": "drs", "eps": 0.1, "overrides": {"bogus": 3}}}"#;
        match parse_config(text).unwrap_err() {
            CliError::Schema { path, message } => {
                assert_eq!(path, "solver.overrides.bogus");
                assert!(message.contains("bogus"));
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn missing_section_is_named() {
        let err = parse_config(r#"{"mode": "game", "seed": 1}"#).unwrap_err();
        assert!(matches!(err, CliError::Schema { ref path, .. } if path == "game"));
    }

    #[test]
    fn defaults_fill_in() {
        let c = parse_config(
            r#"{"mode": "solve", "seed": 3, "instance": {"kind": "distance", "d": 5},
                "solver": {"method": "subgradient", "eps": 0.2}}"#,
        )
        .unwrap();
        let s = c.solver.unwrap();
        assert_eq!((s.lipschitz, s.radius, s.nu, s.stop_at_gap), (1.0, 1.0, 0.1, true));
    }
}
