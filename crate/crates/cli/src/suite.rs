//! Runtime property suite: every module invariant as a named check that can be run from
//! the command line, optionally against a deliberately broken component.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use paraccel::accel::{
    compute_step_coefficients, framework_run, line_search, ApproxProxOracle, ExactGradient, FrameworkParams, FrameworkTrace,
    LineSearchKind, LineSearchParams,
};
use paraccel::game::{consistency_replay, gap_certificate, run_game, win_event_check, GameTranscript, RandomBall};
use paraccel::instances::{
    shielded_eval, sphere_box_max, wall_eval_bruteforce, wall_eval_reduced, wall_h, wall_h_gradient,
    wall_precondition_holds, ShieldedInstance,
};
use paraccel::objectives::{Linear, Quadratic, ShiftedNorm};
use paraccel::oracle::{
    gram_deviation, orthonormal_complement_sample, project_span, Objective, OracleConfig, ParallelOracle, Point,
    RngStream,
};
use paraccel::smoothing::{chi, field_eta, field_sample_count, prox_step_gd, SmoothingPlan, VectorField};

use crate::config::{ExperimentConfig, Fault, Method, Mode, SolverSpec};
use crate::error::{CliError, CliResult};
use crate::output::{ArtifactDir, SOLVER_TRACE_COLUMNS};
use crate::run::{Outcome, RunReport};

pub const MODULES: [&str; 6] = [
    "oracle-core",
    "hard-instances",
    "adversary-game",
    "accel-framework",
    "smoothing",
    "bench-cli",
];

/// Timings stay out of the table so that re-runs write identical files.
pub const VERIFY_COLUMNS: [&str; 4] = ["module", "invariant", "passed", "detail"];

/// Inputs shared by every check.
#[derive(Debug, Clone, Copy)]
pub struct SuiteContext {
    pub seed: u64,
    pub fault: Option<Fault>,
}

type CheckFn = fn(&SuiteContext) -> Result<String, String>;

struct Check {
    module: &'static str,
    name: &'static str,
    run: CheckFn,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub module: String,
    pub invariant: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn lib<T>(r: paraccel::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

// ---- oracle-core

fn ledger_bounds(ctx: &SuiteContext) -> Result<String, String> {
    let q = 16;
    let oracle = lib(ParallelOracle::new(
        ShiftedNorm::new(Point::zeros(4)),
        OracleConfig::unit_ball(q),
    ))?;
    let mut rng = RngStream::new(ctx.seed, 1);
    for _ in 0..200 {
        let size = 1 + (rng.uniform() * q as f64) as usize % q;
        let pts: Vec<Point> = (0..size).map(|_| rng.uniform_in_ball(4, 1.0)).collect();
        lib(oracle.submit_batch(&pts))?;
        let l = oracle.ledger();
        ensure(l.work >= l.depth && l.work <= q as u64 * l.depth, || {
            format!("depth {} work {} Q {q}", l.depth, l.work)
        })?;
    }
    Ok("200 batches".into())
}

fn projection_idempotence(ctx: &SuiteContext) -> Result<String, String> {
    let mut rng = RngStream::new(ctx.seed, 2);
    let mut worst = 0.0_f64;
    for k in 1..=5 {
        let basis = lib(orthonormal_complement_sample(&[], k, 12, &mut rng))?;
        for _ in 0..20 {
            let x = rng.gaussian_vector(12);
            let p = lib(project_span(&basis, &x))?;
            let pp = lib(project_span(&basis, &p))?;
            worst = worst.max((&pp - &p).norm());
        }
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    Ok(format!("max deviation {worst:e}"))
}

fn pythagoras(ctx: &SuiteContext) -> Result<String, String> {
    let mut rng = RngStream::new(ctx.seed, 3);
    let mut worst = 0.0_f64;
    for k in 1..=5 {
        let basis = lib(orthonormal_complement_sample(&[], k, 12, &mut rng))?;
        for _ in 0..20 {
            let x = rng.gaussian_vector(12);
            let w = lib(project_span(&basis, &x))?;
            let lhs = x.norm_squared();
            let rhs = w.norm_squared() + (&x - &w).norm_squared();
            worst = worst.max((lhs - rhs).abs() / lhs);
        }
    }
    ensure(worst <= 1e-9, || format!("relative error {worst:e}"))?;
    Ok(format!("relative error {worst:e}"))
}

fn frames_orthonormal(ctx: &SuiteContext) -> Result<String, String> {
    let mut rng = RngStream::new(ctx.seed, 4);
    let base = lib(orthonormal_complement_sample(&[], 3, 30, &mut rng))?;
    let a = lib(orthonormal_complement_sample(&base, 5, 30, &mut RngStream::new(ctx.seed, 5)))?;
    let b = lib(orthonormal_complement_sample(&base, 5, 30, &mut RngStream::new(ctx.seed, 5)))?;
    ensure(a == b, || "same seed gave different frames".into())?;
    let mut all = base.clone();
    all.extend(a);
    let dev = gram_deviation(&all);
    ensure(dev <= 1e-10, || format!("Gram deviation {dev:e}"))?;
    Ok(format!("Gram deviation {dev:e}"))
}

// ---- hard-instances

fn small_instance(seed: u64) -> Result<ShieldedInstance, String> {
    lib(ShieldedInstance::random(6, 3, 0.837, 0.25, seed))
}

fn convexity(ctx: &SuiteContext) -> Result<String, String> {
    let inst = small_instance(ctx.seed)?;
    let mut rng = RngStream::new(ctx.seed, 10);
    let f = |x: &Point| shielded_eval(&inst, 3, x).map(|a| a.value);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let x1 = rng.uniform_in_ball(6, 1.0);
        let x2 = rng.uniform_in_ball(6, 1.0);
        let t = rng.uniform();
        let mid = &x1 * t + &x2 * (1.0 - t);
        let excess = lib(f(&mid))? - (t * lib(f(&x1))? + (1.0 - t) * lib(f(&x2))?);
        worst = worst.max(excess);
    }
    ensure(worst <= 1e-7, || format!("chord excess {worst:e}"))?;
    Ok(format!("max chord excess {worst:e}"))
}

fn subgradient_inequality(ctx: &SuiteContext) -> Result<String, String> {
    let inst = small_instance(ctx.seed)?;
    let mut rng = RngStream::new(ctx.seed, 11);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let x1 = rng.uniform_in_ball(6, 1.0);
        let x2 = rng.uniform_in_ball(6, 1.0);
        let a1 = lib(shielded_eval(&inst, 3, &x1))?;
        let a2 = lib(shielded_eval(&inst, 3, &x2))?;
        worst = worst.max(a1.value + a1.gradient.dot(&(&x2 - &x1)) - a2.value);
    }
    ensure(worst <= 1e-7, || format!("violation {worst:e}"))?;
    Ok(format!("max violation {worst:e}"))
}

fn wall_gradient_fd(ctx: &SuiteContext) -> Result<String, String> {
    let inst = small_instance(ctx.seed)?;
    let (delta, alpha) = (inst.wall.delta, inst.wall.alpha);
    let mut rng = RngStream::new(ctx.seed, 12);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let radius = delta + (1.0 - delta) * rng.uniform();
        let y = rng.unit_vector(6) * radius;
        let g = wall_h_gradient(&y, alpha);
        for j in 0..6 {
            let mut up = y.clone();
            let mut down = y.clone();
            up[j] += 1e-6;
            down[j] -= 1e-6;
            let fd = (wall_h(&up, alpha) - wall_h(&down, alpha)) / 2e-6;
            worst = worst.max((fd - g[j]).abs());
        }
    }
    ensure(worst <= 1e-4, || format!("max difference {worst:e}"))?;
    Ok(format!("max difference {worst:e}"))
}

fn wall_independence(ctx: &SuiteContext) -> Result<String, String> {
    let d = 40;
    let mut rng = RngStream::new(ctx.seed, 13);
    let first = lib(orthonormal_complement_sample(&[], 1, d, &mut rng))?;
    let make = |rng: &mut RngStream| -> Result<ShieldedInstance, String> {
        let mut v = first.clone();
        v.extend(lib(orthonormal_complement_sample(&first, 2, d, rng))?);
        lib(ShieldedInstance::new(d, v, 0.837, 0.25))
    };
    let a = make(&mut rng)?;
    let mut worst = 0.0_f64;
    let mut tested = 0;
    for _ in 0..20 {
        let b = make(&mut rng)?;
        let x = rng.uniform_in_ball(d, 1.0);
        if !(wall_precondition_holds(&a, 1, &x) && wall_precondition_holds(&b, 1, &x)) {
            continue;
        }
        let wa = lib(wall_eval_reduced(&a, 1, &x))?;
        let wb = lib(wall_eval_reduced(&b, 1, &x))?;
        worst = worst.max((wa.value - wb.value).abs()).max((&wa.gradient - &wb.gradient).norm());
        tested += 1;
    }
    ensure(tested > 0, || "no point met the precondition".into())?;
    ensure(worst < 1e-9, || format!("change {worst:e}"))?;
    Ok(format!("{tested} points, max change {worst:e}"))
}

fn sphere_box_bruteforce(ctx: &SuiteContext) -> Result<String, String> {
    let mut rng = RngStream::new(ctx.seed, 14);
    let steps = 200_000;
    let spacing = std::f64::consts::TAU / steps as f64;
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let w = [rng.gaussian(), rng.gaussian()];
        let radius = 0.2 + rng.uniform();
        let cap = 0.1 + rng.uniform();
        let fast = lib(sphere_box_max(&w, radius, cap))?.value;
        let mut brute = f64::NEG_INFINITY;
        for s in 0..steps {
            let th = spacing * s as f64;
            let c = [radius * th.cos(), radius * th.sin()];
            if c[0].abs() <= cap && c[1].abs() <= cap {
                brute = brute.max(w[0] * c[0] + w[1] * c[1]);
            }
        }
        // the grid can only undershoot, by at most |w| r times the angular spacing
        let norm = (w[0] * w[0] + w[1] * w[1]).sqrt();
        if fast.is_finite() || brute.is_finite() {
            let under = fast - brute;
            ensure(under >= -1e-12 && under <= norm * radius * spacing, || {
                format!("w = {w:?}, r = {radius}, cap = {cap}: closed form {fast}, grid {brute}")
            })?;
            worst = worst.max(under);
        }
        // one coordinate: +-r when it fits under the cap
        let one = lib(sphere_box_max(&w[..1], radius, cap))?.value;
        let expect = if radius <= cap { w[0].abs() * radius } else { f64::NEG_INFINITY };
        ensure(one == expect || (one - expect).abs() <= 1e-12, || format!("1-d case {one} vs {expect}"))?;
    }
    Ok(format!("max grid shortfall {worst:e}"))
}

/// Reduced wall against a Monte-Carlo lower estimate at `points` admissible points.
pub fn reduced_vs_bruteforce(seed: u64, points: usize, samples: usize) -> Result<(f64, f64), String> {
    let inst = small_instance(seed)?;
    let mut rng = RngStream::new(seed, 15);
    let (mut worst_rel, mut worst_under) = (0.0_f64, f64::NEG_INFINITY);
    let mut done = 0;
    while done < points {
        let x = rng.uniform_in_ball(6, 1.0);
        if !wall_precondition_holds(&inst, 2, &x) {
            continue;
        }
        let reduced = lib(wall_eval_reduced(&inst, 2, &x))?.value;
        let brute = wall_eval_bruteforce(&inst, &x, samples, &mut rng);
        worst_rel = worst_rel.max((reduced - brute).abs() / (1.0 + reduced.abs()));
        worst_under = worst_under.max(brute - reduced);
        done += 1;
    }
    Ok((worst_rel, worst_under))
}

fn wall_reduction_bruteforce(ctx: &SuiteContext) -> Result<String, String> {
    let (rel, under) = reduced_vs_bruteforce(ctx.seed, 5, 1_000_000)?;
    ensure(rel <= 0.05, || format!("relative gap {rel:e}"))?;
    ensure(under <= 1e-7, || format!("brute force exceeds reduced by {under:e}"))?;
    Ok(format!("relative gap {rel:e}, brute excess {under:e}"))
}

// ---- adversary-game

fn small_game(seed: u64) -> Result<GameTranscript, String> {
    let mut player = RandomBall::new(seed);
    lib(run_game(&mut player, 200, 4, 8, 0.1, seed)).map(|(t, _)| t)
}

fn frame_history(ctx: &SuiteContext) -> Result<String, String> {
    let tr = small_game(ctx.seed)?;
    let mut worst = 0.0_f64;
    for rec in &tr.rounds {
        worst = worst.max(gram_deviation(&rec.frame));
        for v in &tr.committed[..rec.t - 1] {
            for u in &rec.frame {
                worst = worst.max(u.dot(v).abs());
            }
        }
    }
    ensure(worst <= 1e-10, || format!("deviation {worst:e}"))?;
    Ok(format!("max deviation {worst:e}"))
}

fn replay_under_win(ctx: &SuiteContext) -> Result<String, String> {
    let mut worst = 0.0_f64;
    let mut won = 0;
    for s in 0..5 {
        let tr = small_game(ctx.seed + s)?;
        if win_event_check(&tr).won {
            worst = worst.max(lib(consistency_replay(&tr))?);
            won += 1;
        }
    }
    ensure(won > 0, || "no game was won".into())?;
    ensure(worst <= 1e-7, || format!("deviation {worst:e}"))?;
    Ok(format!("{won} won games, max deviation {worst:e}"))
}

fn certificate_monotone(ctx: &SuiteContext) -> Result<String, String> {
    let tr = small_game(ctx.seed)?;
    let full = lib(gap_certificate(&tr))?;
    let mut fewer = tr.clone();
    for rec in &mut fewer.rounds {
        rec.queries.truncate(rec.queries.len() / 2);
    }
    let partial = lib(gap_certificate(&fewer))?;
    ensure(full <= partial, || format!("{full} > {partial} after adding queries"))?;
    Ok(format!("{full} <= {partial}"))
}

fn depth_and_work(ctx: &SuiteContext) -> Result<String, String> {
    let tr = small_game(ctx.seed)?;
    let queries: usize = tr.rounds.iter().map(|r| r.queries.len()).sum();
    ensure(tr.ledger.depth == tr.params.rounds as u64, || format!("depth {}", tr.ledger.depth))?;
    ensure(tr.ledger.work == queries as u64, || format!("work {} vs {queries}", tr.ledger.work))?;
    Ok(format!("depth {}, work {}", tr.ledger.depth, tr.ledger.work))
}

// ---- accel-framework

fn quadratic_run(seed: u64, rho: f64) -> Result<(Quadratic, FrameworkTrace), String> {
    let mut rng = RngStream::new(seed, 20);
    let q = Quadratic::random(10, 0.0, 1.0, 1.0, &mut rng);
    let mut prox = lib(ApproxProxOracle::new(q.clone(), 1.0, 1.0, rho))?;
    let mut grad = ExactGradient::new(q.clone());
    let mut params = FrameworkParams::new(1.0, 1e-6);
    params.max_iters = 100;
    let monitor = |y: &Point| q.eval(y).value;
    let trace = lib(framework_run(&mut prox, &mut grad, 10, &params, Some(&monitor)))?;
    Ok((q, trace))
}

fn remark_identity(ctx: &SuiteContext) -> Result<String, String> {
    let (_, trace) = quadratic_run(ctx.seed, 1e-10)?;
    let mut worst = 0.0_f64;
    for it in &trace.iterates {
        worst = worst.max((it.lambda * it.acc - it.a * it.a).abs() / (it.a * it.a));
    }
    ensure(worst <= 1e-10, || format!("relative error {worst:e}"))?;
    Ok(format!("{} iterates, relative error {worst:e}", trace.iterates.len()))
}

/// Line searches on random quadratics, as `(outcome, budget)` pairs.
fn line_searches(seed: u64) -> Result<Vec<paraccel::accel::LineSearchOutcome>, String> {
    let mut rng = RngStream::new(seed, 21);
    let mut out = Vec::new();
    for _ in 0..20 {
        let q = Quadratic::random(6, 0.0, 1.0, 1.0, &mut rng);
        let kappa = 0.1 + 10.0 * rng.uniform();
        let mut prox = lib(ApproxProxOracle::new(q, 1.0, kappa, 1e-10))?;
        let x1 = rng.uniform_in_ball(6, 1.0);
        let x2 = rng.uniform_in_ball(6, 1.0);
        let params = LineSearchParams {
            acc: 1.0 / (2.0 * kappa) * (1.0 + 100.0 * rng.uniform()),
            radius: 1.0,
            epsilon: 1e-6,
            c: 150.0,
        };
        out.push(lib(line_search(&x1, &x2, &params, &mut prox))?);
    }
    Ok(out)
}

fn bisection_invariant(ctx: &SuiteContext) -> Result<String, String> {
    let mut probes = 0;
    for out in line_searches(ctx.seed)? {
        // zeta(0) = +inf and zeta(1) = 0 bracket the start
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for p in &out.probes {
            ensure(p.theta == 0.5 * (lo + hi), || format!("probe {} is not the midpoint of [{lo}, {hi}]", p.theta))?;
            if p.zeta >= 0.75 {
                lo = p.theta;
            } else {
                hi = p.theta;
            }
            probes += 1;
        }
        ensure(out.kind != LineSearchKind::Bracketed || out.theta == lo, || "returned theta is not the lower end".into())?;
    }
    Ok(format!("{probes} probes"))
}

fn bracketed_zeta(ctx: &SuiteContext) -> Result<String, String> {
    let mut n = 0;
    for out in line_searches(ctx.seed)? {
        if out.kind == LineSearchKind::Bracketed {
            ensure((0.5..=1.0).contains(&out.zeta), || format!("zeta {}", out.zeta))?;
            n += 1;
        }
    }
    Ok(format!("{n} bracketed outcomes"))
}

fn query_budget(ctx: &SuiteContext) -> Result<String, String> {
    let mut most = 0.0_f64;
    for out in line_searches(ctx.seed)? {
        ensure(out.queries as f64 <= out.budget, || format!("{} queries, budget {}", out.queries, out.budget))?;
        most = most.max(out.queries as f64 / out.budget);
    }
    Ok(format!("largest budget fraction {most:.3}"))
}

fn diameter(ctx: &SuiteContext) -> Result<String, String> {
    let (q, trace) = quadratic_run(ctx.seed, 1e-12)?;
    let star = q.minimizer.norm();
    let mut worst = 0.0_f64;
    for it in &trace.iterates {
        worst = worst.max((&it.y - &q.minimizer).norm() / star);
    }
    ensure(worst <= 8.0, || format!("|y - x*| / |x*| = {worst}"))?;
    Ok(format!("max |y - x*| / |x*| = {worst:.3}"))
}

fn extrapolation_identity(ctx: &SuiteContext) -> Result<String, String> {
    // at theta = A / (A + a) the line-search weight is a^2 / (A + a), which steps back to a
    let mut rng = RngStream::new(ctx.seed, 22);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let acc = 10f64.powf(4.0 * rng.uniform() - 2.0);
        let a = 10f64.powf(4.0 * rng.uniform() - 2.0);
        let theta = acc / (acc + a);
        let lambda = (1.0 - theta).powi(2) * acc / theta;
        let expect = a * a / (acc + a);
        let (back, _) = lib(compute_step_coefficients(lambda, acc))?;
        worst = worst.max((lambda - expect).abs() / expect).max((back - a).abs() / a);
    }
    ensure(worst <= 1e-9, || format!("relative error {worst:e}"))?;
    Ok(format!("relative error {worst:e}"))
}

// ---- smoothing

/// The cutoff as wired into the check; the fault replaces it with a hard step.
fn cutoff_under_test(fault: Option<Fault>) -> fn(f64, f64) -> f64 {
    fn step(t: f64, r: f64) -> f64 {
        if t.abs() < 0.5 * r * r {
            1.0
        } else {
            0.0
        }
    }
    match fault {
        Some(Fault::Chi) => step,
        None => chi,
    }
}

fn chi_continuity(ctx: &SuiteContext) -> Result<String, String> {
    let weight = cutoff_under_test(ctx.fault);
    let mut rng = RngStream::new(ctx.seed, 30);
    let mut pairs = 0;
    for _ in 0..2000 {
        let r = 0.01 + 2.0 * rng.uniform();
        let t1 = (2.0 * rng.uniform() - 1.0) * 1.5 * r * r;
        // half the pairs are close, to probe the kinks
        let t2 = if rng.uniform() < 0.5 {
            t1 + (2.0 * rng.uniform() - 1.0) * 1e-3 * r * r
        } else {
            (2.0 * rng.uniform() - 1.0) * 1.5 * r * r
        };
        let lhs = (weight(t1, r) - weight(t2, r)).abs();
        let rhs = 2.0 / (r * r) * (t1 - t2).abs();
        ensure(lhs <= rhs * (1.0 + 1e-12) + 1e-15, || format!("|chi(t) - chi(t')| = {lhs} > {rhs} at t = {t1}, t' = {t2}, r = {r}"))?;
        pairs += 1;
    }
    Ok(format!("{pairs} pairs"))
}

fn smoothing_sandwich(ctx: &SuiteContext) -> Result<String, String> {
    let (d, r, samples) = (8, 0.05, 1000);
    let oracle = lib(ParallelOracle::new(
        ShiftedNorm::new(Point::zeros(d)),
        OracleConfig::unrestricted(samples),
    ))?;
    let mut rng = RngStream::new(ctx.seed, 31);
    let bias = (d as f64).sqrt() * r;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let y = rng.uniform_in_ball(d, 0.3);
        let pts: Vec<Point> = (0..samples).map(|_| &y + rng.gaussian_vector(d) * r).collect();
        let vals: Vec<f64> = lib(oracle.submit_batch(&pts))?.iter().map(|a| a.value).collect();
        let n = samples as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let slack = bias + 3.0 * (var / n).sqrt() - (mean - oracle.objective().eval(&y).value).abs();
        worst = worst.max(-slack);
    }
    ensure(worst <= 0.0, || format!("bound exceeded by {worst:e}"))?;
    Ok("1000 points".into())
}

/// Trials out of `trials` whose worst error over 100 trust-region points stays within
/// `eps_apx`, for a field sized for failure probability `failure` on a random linear function.
pub fn uniform_field_trials(
    dim: usize,
    eps_apx: f64,
    failure: f64,
    r: f64,
    trials: u64,
    seed: u64,
) -> Result<(u64, f64), String> {
    let n = field_sample_count(dim, eps_apx, failure);
    let eta = field_eta(eps_apx);
    let mut good = 0;
    let mut worst_all = 0.0_f64;
    for trial in 0..trials {
        let mut rng = RngStream::new(seed, 1000 + trial);
        let coef = rng.unit_vector(dim);
        let oracle = lib(ParallelOracle::new(Linear::new(coef.clone()), OracleConfig::unrestricted(n)))?;
        let c = rng.uniform_in_ball(dim, 1.0);
        let field = lib(VectorField::sample(&oracle, &c, r, eta, n, &mut rng))?;
        let ys: Vec<Point> = (0..100).map(|_| &c + rng.uniform_in_ball(dim, field.trust_radius())).collect();
        let worst = lib(field.eval_many(&ys))?
            .iter()
            .map(|v| (v - &coef).norm())
            .fold(0.0, f64::max);
        worst_all = worst_all.max(worst);
        if worst <= eps_apx {
            good += 1;
        }
    }
    Ok((good, worst_all))
}

fn uniform_field_accuracy(ctx: &SuiteContext) -> Result<String, String> {
    let (good, worst) = uniform_field_trials(10, 0.2, 0.05, 0.05, 100, ctx.seed)?;
    ensure(good >= 95, || format!("{good} of 100 trials within 0.2 (worst {worst})"))?;
    Ok(format!("{good} of 100 trials, worst error {worst:.4}"))
}

fn prox_fixture(seed: u64) -> Result<(ParallelOracle<ShiftedNorm>, SmoothingPlan, Point), String> {
    let d = 10;
    let mut rng = RngStream::new(seed, 32);
    let x0 = rng.uniform_in_ball(d, 1.0);
    let plan = lib(SmoothingPlan::new(d, 1.0, 1.0, 0.1, 0.1))?;
    let plan = lib(plan.with_eps_oracle(0.1).and_then(|p| p.with_sample_count(20_000)))?;
    let oracle = lib(ParallelOracle::new(ShiftedNorm::new(x0.clone()), OracleConfig::unrestricted(20_000)))?;
    let c = &x0 + rng.unit_vector(d) * (3.0 * plan.r);
    Ok((oracle, plan, c))
}

fn gd_trust_region(ctx: &SuiteContext) -> Result<String, String> {
    let (oracle, plan, c) = prox_fixture(ctx.seed)?;
    let step = lib(prox_step_gd(&oracle, &c, &plan, &mut RngStream::new(ctx.seed, 33)))?;
    ensure(step.max_distance <= plan.r_tilde, || format!("{} > {}", step.max_distance, plan.r_tilde))?;
    Ok(format!("max distance {:.3e} <= {:.3e}", step.max_distance, plan.r_tilde))
}

fn stopping_rule(ctx: &SuiteContext) -> Result<String, String> {
    let (oracle, plan, c) = prox_fixture(ctx.seed)?;
    let rng = RngStream::new(ctx.seed, 34);
    let step = lib(prox_step_gd(&oracle, &c, &plan, &mut rng.clone()))?;
    // rebuild the same field from the same stream and recompute the residual
    let field = lib(VectorField::sample(&oracle, &c, plan.r, plan.eta, plan.sample_count, &mut rng.clone()))?;
    let s = &step.y - &c;
    let residual = (lib(field.eval(&step.y))? + &s * plan.omega.eval(s.norm())).norm();
    let tol = 5.0 / 6.0 * plan.lipschitz * plan.eps_oracle;
    ensure(residual == step.residual, || format!("recomputed {residual} vs reported {}", step.residual))?;
    ensure(residual <= tol, || format!("residual {residual} > {tol}"))?;
    Ok(format!("residual {residual:.3e} <= {tol:.3e}"))
}

fn prox_depth(ctx: &SuiteContext) -> Result<String, String> {
    let (oracle, plan, c) = prox_fixture(ctx.seed)?;
    let before = oracle.ledger().depth;
    lib(prox_step_gd(&oracle, &c, &plan, &mut RngStream::new(ctx.seed, 35)))?;
    let used = oracle.ledger().depth - before;
    ensure(used == 1, || format!("{used} rounds"))?;
    Ok("1 round per step".into())
}

// ---- bench-cli

fn scratch_dir(tag: &str, seed: u64) -> std::path::PathBuf {
    std::env::temp_dir().join(format!("paraccel-verify-{}-{tag}-{seed}", std::process::id()))
}

fn small_solve_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        mode: Mode::Solve,
        seed,
        instance: Some(crate::config::InstanceSpec {
            kind: crate::config::InstanceKind::Distance,
            d: 5,
            rounds: None,
            gamma: None,
            seed: None,
        }),
        solver: Some(SolverSpec {
            method: Method::Drs,
            eps: 0.3,
            lipschitz: 1.0,
            radius: 1.0,
            nu: 0.1,
            stop_at_gap: true,
            overrides: Default::default(),
        }),
        game: None,
        bench: None,
        verify: None,
        output: None,
    }
}

fn report_reproducible(ctx: &SuiteContext) -> Result<String, String> {
    let config = small_solve_config(ctx.seed);
    let dirs = [scratch_dir("a", ctx.seed), scratch_dir("b", ctx.seed)];
    let mut reports = Vec::new();
    for dir in &dirs {
        reports.push(crate::run_config(&config, dir, 1).map_err(|e| e.to_string())?);
    }
    // re-run from the echoed configuration
    let echoed: ExperimentConfig =
        serde_json::from_value(reports[0].resolved_config.clone()).map_err(|e| e.to_string())?;
    let third = scratch_dir("c", ctx.seed);
    reports.push(crate::run_config(&echoed, &third, 1).map_err(|e| e.to_string())?);
    let read = |d: &Path| std::fs::read(d.join("trace.csv")).map_err(|e| e.to_string());
    let traces = [read(&dirs[0])?, read(&dirs[1])?, read(&third)?];
    for d in dirs.iter().chain([&third]) {
        let _ = std::fs::remove_dir_all(d);
    }
    ensure(
        reports.iter().all(|r| r.metrics == reports[0].metrics),
        || "metrics differ between runs".into(),
    )?;
    ensure(traces.iter().all(|t| t == &traces[0]), || "trace files differ".into())?;
    Ok("3 runs identical".into())
}

fn csv_headers(ctx: &SuiteContext) -> Result<String, String> {
    let dir = scratch_dir("csv", ctx.seed);
    crate::run_config(&small_solve_config(ctx.seed), &dir, 1).map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(dir.join("trace.csv")).map_err(|e| e.to_string())?;
    let _ = std::fs::remove_dir_all(&dir);
    let header = text.lines().next().unwrap_or_default();
    ensure(header == SOLVER_TRACE_COLUMNS.join(","), || format!("header `{header}`"))?;
    Ok(header.to_string())
}

fn registry() -> Vec<Check> {
    macro_rules! checks {
        ($($module:literal, $name:literal => $f:ident;)*) => {
            vec![$(Check { module: $module, name: $name, run: $f }),*]
        };
    }
    checks! {
        "oracle-core", "ledger bounds" => ledger_bounds;
        "oracle-core", "projection idempotence" => projection_idempotence;
        "oracle-core", "pythagoras" => pythagoras;
        "oracle-core", "frame orthonormality and determinism" => frames_orthonormal;
        "hard-instances", "convexity spot-check" => convexity;
        "hard-instances", "subgradient inequality" => subgradient_inequality;
        "hard-instances", "wall gradient matches finite differences" => wall_gradient_fd;
        "hard-instances", "reduced wall ignores undiscovered vectors" => wall_independence;
        "hard-instances", "sphere-box maximum matches brute force" => sphere_box_bruteforce;
        "hard-instances", "reduced wall matches brute force" => wall_reduction_bruteforce;
        "adversary-game", "frame history orthonormal" => frame_history;
        "adversary-game", "replay deviation under win" => replay_under_win;
        "adversary-game", "certificate monotonicity" => certificate_monotone;
        "adversary-game", "depth and work of a game" => depth_and_work;
        "accel-framework", "step coefficient identity" => remark_identity;
        "accel-framework", "bisection loop invariant" => bisection_invariant;
        "accel-framework", "bracketed outcomes in [1/2, 1]" => bracketed_zeta;
        "accel-framework", "line-search query budget" => query_budget;
        "accel-framework", "iterate diameter" => diameter;
        "accel-framework", "extrapolation coefficient identity" => extrapolation_identity;
        "smoothing", "chi continuity" => chi_continuity;
        "smoothing", "smoothing sandwich" => smoothing_sandwich;
        "smoothing", "uniform field accuracy" => uniform_field_accuracy;
        "smoothing", "proximal step trust region" => gd_trust_region;
        "smoothing", "stopping rule soundness" => stopping_rule;
        "smoothing", "one round per proximal step" => prox_depth;
        "bench-cli", "reports reproduce from the echoed config" => report_reproducible;
        "bench-cli", "csv header rows" => csv_headers;
    }
}

/// Runs every check in `scope` (`all` or a module name).
pub fn verify_suite(scope: &str, ctx: &SuiteContext) -> CliResult<Vec<CheckResult>> {
    if scope != "all" && !MODULES.contains(&scope) {
        return Err(CliError::schema(
            "verify.scope",
            format!("unknown scope `{scope}`; expected all or one of {}", MODULES.join(", ")),
        ));
    }
    Ok(registry()
        .into_iter()
        .filter(|c| scope == "all" || c.module == scope)
        .map(|c| {
            let started = Instant::now();
            let result = (c.run)(ctx);
            let seconds = started.elapsed().as_secs_f64();
            let (passed, detail) = match result {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            CheckResult {
                module: c.module.into(),
                invariant: c.name.into(),
                passed,
                detail,
                seconds,
            }
        })
        .collect())
}

pub fn run_verify(config: &ExperimentConfig, out: &Path) -> CliResult<RunReport> {
    let started = Instant::now();
    let spec = config.verify.clone().unwrap_or_default();
    let ctx = SuiteContext {
        seed: config.seed,
        fault: spec.inject_fault,
    };
    let results = verify_suite(&spec.scope, &ctx)?;
    let mut dir = ArtifactDir::create(out)?;
    let rows: Vec<_> = results
        .iter()
        .map(|r| {
            vec![
                Some(r.module.clone()),
                Some(r.invariant.clone()),
                Some(r.passed.to_string()),
                Some(r.detail.clone()),
            ]
        })
        .collect();
    dir.write_csv("verify.csv", &VERIFY_COLUMNS, &rows)?;
    let failed: Vec<&CheckResult> = results.iter().filter(|r| !r.passed).collect();
    let mut metrics = BTreeMap::new();
    metrics.insert("checks".into(), json!(results.len()));
    metrics.insert("failed".into(), json!(failed.len()));
    let outcome = match failed.first() {
        None => Outcome::Ok,
        Some(f) => Outcome::ContractViolation(format!("{} / {}: {}", f.module, f.invariant, f.detail)),
    };
    let mut resolved = config.clone();
    resolved.verify = Some(spec);
    let resolved = serde_json::to_value(&resolved).expect("config serializes");
    crate::run::finish_report("verify", config.seed, resolved, dir, outcome, 0, 0, metrics, started)
}
