//! Execution of the solve, game and replay modes.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use paraccel::accel::{framework_run, ApproxProxOracle, ExactGradient, FrameworkParams, FrameworkTrace, Termination};
use paraccel::game::{consistency_replay, gap_certificate, run_game, win_event_check, GameReport, GameTranscript};
use paraccel::instances::{LowerBoundParams, NemirovskiParams};
use paraccel::objectives::{Quadratic, ShiftedNorm};
use paraccel::oracle::{orthonormal_complement_sample, Objective, OracleConfig, ParallelOracle, Point, RngStream};
use paraccel::smoothing::{
    baseline_drs, baseline_subgradient, drs_batch, highly_parallel_minimize, SmoothingPlan, SolverOptions,
    SolverRecord, SolverTrace,
};

use crate::config::{ExperimentConfig, GameSpec, InstanceKind, Method, Overrides, SolverSpec};
use crate::error::{CliError, CliResult};
use crate::output::{num, ArtifactDir};

/// How a run ended; decides the process exit status.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", content = "detail", rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    BudgetExceeded(String),
    ContractViolation(String),
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Ok => 0,
            Self::ContractViolation(_) => 3,
            Self::BudgetExceeded(_) => 4,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub mode: String,
    pub seed: u64,
    /// The configuration after overrides and defaults; re-running it reproduces `metrics`.
    pub resolved_config: Value,
    pub outcome: Outcome,
    pub depth: u64,
    pub work: u64,
    pub metrics: BTreeMap<String, Value>,
    pub artifacts: Vec<String>,
    pub wall_clock_s: f64,
}

/// Stream of the instance draw, kept apart from every solver stream.
const INSTANCE_STREAM: u64 = 0;

/// A generated objective with its reference optimum.
pub struct BuiltInstance {
    pub objective: Box<dyn Objective + Send>,
    /// `f*` for distance and quadratic; the value at the certified point for nemirovski.
    pub reference: f64,
    pub quadratic: Option<Quadratic>,
}

pub fn build_instance(
    kind: InstanceKind,
    dim: usize,
    rounds: Option<usize>,
    gamma: Option<f64>,
    radius: f64,
    seed: u64,
) -> CliResult<BuiltInstance> {
    let mut rng = RngStream::new(seed, INSTANCE_STREAM);
    Ok(match kind {
        InstanceKind::Distance => BuiltInstance {
            objective: Box::new(ShiftedNorm::new(rng.uniform_in_ball(dim, radius))),
            reference: 0.0,
            quadratic: None,
        },
        InstanceKind::Quadratic => {
            let q = Quadratic::random(dim, 0.0, 1.0, radius, &mut rng);
            BuiltInstance {
                objective: Box::new(q.clone()),
                reference: 0.0,
                quadratic: Some(q),
            }
        }
        InstanceKind::Nemirovski => {
            let n = rounds.ok_or_else(|| CliError::schema("instance.N", "required"))?;
            let vectors = orthonormal_complement_sample(&[], n, dim, &mut rng)?;
            let mut star = Point::zeros(dim);
            for v in &vectors {
                star -= v;
            }
            star /= (n as f64).sqrt();
            let params = NemirovskiParams::new(vectors, gamma.unwrap_or(0.0))?;
            let reference = params.eval(&star).value;
            BuiltInstance {
                objective: Box::new(params),
                reference,
                quadratic: None,
            }
        }
    })
}

/// Everything a solver run produced.
pub struct SolveOutcome {
    pub x: Point,
    pub trace: SolverTrace,
    pub framework: Option<FrameworkTrace>,
    pub plan: Option<SmoothingPlan>,
    pub value: f64,
    pub reference: f64,
}

impl SolveOutcome {
    pub fn gap(&self) -> f64 {
        self.value - self.reference
    }

    pub fn budget_exhausted(&self) -> bool {
        self.trace.termination == "DepthBudget"
    }
}

/// Builds the smoothing plan with any overrides applied.
pub fn smoothing_plan(dim: usize, spec: &SolverSpec) -> CliResult<SmoothingPlan> {
    let mut plan = SmoothingPlan::new(dim, spec.lipschitz, spec.radius, spec.eps, spec.nu)?;
    if let Some(e) = spec.overrides.eps_oracle {
        plan = plan.with_eps_oracle(e)?;
    }
    if let Some(n) = spec.overrides.sample_count {
        plan = plan.with_sample_count(n)?;
    }
    Ok(plan)
}

fn solver_options(reference: f64, stop_at_gap: bool, overrides: &Overrides) -> SolverOptions {
    let mut opts = SolverOptions {
        f_star: Some(reference),
        stop_at_gap,
        max_depth: overrides.max_depth,
        ..Default::default()
    };
    if let Some(m) = overrides.max_outer {
        opts.max_outer = m;
    }
    opts
}

/// Runs one solver on one instance; `seed` drives the solver's own randomness.
pub fn solve(inst: BuiltInstance, dim: usize, spec: &SolverSpec, seed: u64) -> CliResult<SolveOutcome> {
    let opts = solver_options(inst.reference, spec.stop_at_gap, &spec.overrides);
    let reference = inst.reference;
    let (x, trace, framework, plan) = match spec.method {
        Method::HighlyParallel => {
            let plan = smoothing_plan(dim, spec)?;
            let oracle = ParallelOracle::new(inst.objective, OracleConfig::unrestricted(plan.sample_count))?;
            let (x, trace) = highly_parallel_minimize(&oracle, &plan, seed, &opts)?;
            (x, trace, None, Some(plan))
        }
        Method::Subgradient => {
            let config = OracleConfig {
                max_batch: 1,
                domain_radius: Some(spec.radius),
            };
            let oracle = ParallelOracle::new(inst.objective, config)?;
            let (x, trace) = baseline_subgradient(&oracle, spec.radius, spec.lipschitz, spec.eps, &opts)?;
            (x, trace, None, None)
        }
        Method::Drs => {
            let batch = drs_batch(spec.radius, spec.lipschitz, spec.eps);
            let oracle = ParallelOracle::new(inst.objective, OracleConfig::unrestricted(batch))?;
            let (x, trace) = baseline_drs(&oracle, spec.lipschitz, spec.radius, spec.eps, seed, &opts)?;
            (x, trace, None, None)
        }
        Method::ProximalPoint => {
            let q = inst
                .quadratic
                .clone()
                .ok_or_else(|| CliError::schema("solver.method", "proximal-point needs a quadratic instance"))?;
            let (x, trace, fw) = proximal_point(q, spec, &opts)?;
            (x, trace, Some(fw), None)
        }
    };
    let value = trace.final_gap.unwrap_or(f64::NAN) + reference;
    Ok(SolveOutcome {
        x,
        trace,
        framework,
        plan,
        value,
        reference,
    })
}

fn proximal_point(q: Quadratic, spec: &SolverSpec, opts: &SolverOptions) -> CliResult<(Point, SolverTrace, FrameworkTrace)> {
    let dim = q.minimizer.len();
    let kappa = spec.overrides.kappa.unwrap_or(1.0);
    let rho = spec.overrides.rho.unwrap_or(1e-10);
    let mut prox = ApproxProxOracle::new(q.clone(), q.smoothness(), kappa, rho)?;
    let mut grad = ExactGradient::new(q.clone());
    let params = FrameworkParams {
        radius: spec.radius,
        epsilon: spec.eps,
        c: None,
        max_iters: opts.max_outer,
        stop_at_gap: opts.stop_at_gap,
    };
    let monitor = |y: &Point| q.eval(y).value;
    let fw = framework_run(&mut prox, &mut grad, dim, &params, Some(&monitor))?;
    let records = fw
        .iterates
        .iter()
        .map(|it| SolverRecord {
            outer_k: it.k,
            inner_iters: 0,
            depth: it.prox_queries as u64,
            work: it.prox_queries as u64,
            gap_estimate: it.gap,
            residual_norm: None,
        })
        .collect();
    let calls = prox.calls as u64;
    let trace = SolverTrace {
        method: Method::ProximalPoint.name().into(),
        records,
        depth: calls,
        work: calls,
        termination: format!("{:?}", fw.termination),
        final_gap: Some(q.eval(&fw.output).value),
    };
    Ok((fw.output.clone(), trace, fw))
}

fn resolved(config: &ExperimentConfig) -> Value {
    serde_json::to_value(config).expect("config serializes")
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn finish_report(
    mode: &str,
    seed: u64,
    resolved_config: Value,
    mut dir: ArtifactDir,
    outcome: Outcome,
    depth: u64,
    work: u64,
    metrics: BTreeMap<String, Value>,
    started: Instant,
) -> CliResult<RunReport> {
    let mut artifacts = dir.written().to_vec();
    artifacts.push("report.json".into());
    let report = RunReport {
        mode: mode.into(),
        seed,
        resolved_config,
        outcome,
        depth,
        work,
        metrics,
        artifacts,
        wall_clock_s: started.elapsed().as_secs_f64(),
    };
    dir.write_json("report.json", &report)?;
    Ok(report)
}

pub fn run_solve(config: &ExperimentConfig, out: &Path) -> CliResult<RunReport> {
    let started = Instant::now();
    let inst_spec = config.instance.as_ref().expect("validated");
    let spec = config.solver.as_ref().expect("validated");
    let inst = build_instance(
        inst_spec.kind,
        inst_spec.d,
        inst_spec.rounds,
        inst_spec.gamma,
        spec.radius,
        inst_spec.seed.unwrap_or(config.seed),
    )?;
    let result = solve(inst, inst_spec.d, spec, config.seed)?;
    let mut dir = ArtifactDir::create(out)?;
    dir.write_solver_trace("trace.csv", &result.trace)?;
    if let Some(fw) = &result.framework {
        dir.write_framework_trace("framework.csv", fw)?;
    }
    if let Some(plan) = &result.plan {
        dir.write_json("plan.json", plan)?;
    }
    let mut metrics = BTreeMap::new();
    metrics.insert("method".into(), json!(spec.method.name()));
    metrics.insert("termination".into(), json!(result.trace.termination));
    metrics.insert("final_value".into(), json!(result.value));
    metrics.insert("reference_value".into(), json!(result.reference));
    metrics.insert("final_gap".into(), json!(result.gap()));
    metrics.insert("target_met".into(), json!(result.gap() <= spec.eps));
    metrics.insert("outer_iterations".into(), json!(result.trace.records.len()));
    metrics.insert(
        "solution".into(),
        json!(result.x.iter().map(|v| num(*v)).collect::<Vec<_>>()),
    );
    let outcome = if result.budget_exhausted() {
        Outcome::BudgetExceeded(format!(
            "depth budget {} reached before the target accuracy",
            spec.overrides.max_depth.unwrap_or_default()
        ))
    } else {
        Outcome::Ok
    };
    if let Some(fw) = &result.framework {
        metrics.insert(
            "framework_termination".into(),
            json!(format!("{:?}", fw.termination)),
        );
        metrics.insert("approx_minimizer_exit".into(), json!(fw.termination == Termination::ApproxMinimizer));
    }
    finish_report(config.mode.name(), config.seed, resolved(config), dir, outcome, result.trace.depth, result.trace.work, metrics, started)
}

/// Game outcome summary row.
fn game_row(r: &GameReport) -> Vec<Option<String>> {
    vec![
        Some(r.seed.to_string()),
        Some(r.won.to_string()),
        r.replay_deviation.map(num),
        r.certificate.map(num),
        Some(r.precondition_violations.to_string()),
        Some(r.depth.to_string()),
        Some(r.work.to_string()),
        r.first_violation.as_ref().map(|v| v.t.to_string()),
    ]
}

pub const GAME_COLUMNS: [&str; 8] = [
    "seed",
    "won",
    "replay_deviation",
    "certificate",
    "precondition_violations",
    "depth",
    "work",
    "first_violation_round",
];

/// Plays `spec.games` games with seeds `seed, seed + 1, ...`.
pub fn play_games(spec: &GameSpec, seed: u64) -> CliResult<Vec<(GameTranscript, GameReport)>> {
    (0..spec.games as u64)
        .map(|i| {
            let s = seed + i;
            let mut strategy = spec.strategy.build(s)?;
            Ok(run_game(strategy.as_mut(), spec.d, spec.rounds, spec.max_batch, spec.rho, s)?)
        })
        .collect()
}

pub fn run_game_mode(config: &ExperimentConfig, out: &Path) -> CliResult<RunReport> {
    let started = Instant::now();
    let spec = config.game.as_ref().expect("validated");
    let params = LowerBoundParams::derive_saturating(spec.d, spec.rounds, spec.max_batch, spec.rho)?;
    let games = play_games(spec, config.seed)?;
    let mut dir = ArtifactDir::create(out)?;
    let mut rows = Vec::new();
    for (transcript, report) in &games {
        dir.write_text(&format!("transcripts/game_{}.jsonl", report.seed), &transcript.to_jsonl())?;
        rows.push(game_row(report));
    }
    dir.write_csv("games.csv", &GAME_COLUMNS, &rows)?;
    let wins = games.iter().filter(|(_, r)| r.won).count();
    let max_dev = games
        .iter()
        .filter_map(|(_, r)| r.replay_deviation)
        .fold(0.0, f64::max);
    let min_cert = games
        .iter()
        .filter_map(|(_, r)| r.certificate)
        .fold(f64::INFINITY, f64::min);
    let depth: u64 = games.iter().map(|(_, r)| r.depth).sum();
    let work: u64 = games.iter().map(|(_, r)| r.work).sum();
    let mut metrics = BTreeMap::new();
    metrics.insert("games".into(), json!(games.len()));
    metrics.insert("wins".into(), json!(wins));
    metrics.insert("win_rate".into(), json!(wins as f64 / games.len() as f64));
    metrics.insert("max_replay_deviation".into(), json!(max_dev));
    metrics.insert(
        "min_certificate".into(),
        if min_cert.is_finite() { json!(min_cert) } else { Value::Null },
    );
    metrics.insert("theorem_condition_holds".into(), json!(params.theorem_condition_holds));
    metrics.insert("wall_radius_solved".into(), json!(params.wall_radius_solved));
    metrics.insert("C".into(), json!(params.c_const));
    metrics.insert("cone_threshold".into(), json!(params.cone_threshold));
    metrics.insert("delta_wall".into(), json!(params.delta));
    finish_report(config.mode.name(), config.seed, resolved(config), dir, Outcome::Ok, depth, work, metrics, started)
}

/// Re-checks a recorded game: win event, replay deviation and certificate.
pub fn run_replay(transcript_path: &Path, out: &Path) -> CliResult<RunReport> {
    let started = Instant::now();
    let text = std::fs::read_to_string(transcript_path)?;
    let transcript = GameTranscript::from_jsonl(&text).map_err(|e| CliError::schema("transcript", e.to_string()))?;
    let win = win_event_check(&transcript);
    let mut metrics = BTreeMap::new();
    metrics.insert("won".into(), json!(win.won));
    let outcome = if win.won {
        metrics.insert("replay_deviation".into(), json!(consistency_replay(&transcript)?));
        metrics.insert("certificate".into(), json!(gap_certificate(&transcript)?));
        Outcome::Ok
    } else {
        let v = win.first_violation.expect("lost games name a violation");
        metrics.insert("first_violation_round".into(), json!(v.t));
        Outcome::ContractViolation(format!(
            "win event failed at round {}, query {}, vectors ({}, {})",
            v.t, v.query, v.s1, v.s2
        ))
    };
    let dir = ArtifactDir::create(out)?;
    finish_report(
        "replay",
        transcript.seed,
        json!({ "transcript": transcript_path.display().to_string() }),
        dir,
        outcome,
        transcript.ledger.depth,
        transcript.ledger.work,
        metrics,
        started,
    )
}
