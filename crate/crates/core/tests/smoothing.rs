use paraccel::objectives::{Linear, ShiftedNorm};
use paraccel::oracle::{Objective, OracleConfig, ParallelOracle, Point, RngStream};
use paraccel::smoothing::{
    baseline_drs, field_eta, field_sample_count, mc_gradient_oracle, prox_step_gd, SmoothingPlan,
    SolverOptions, VectorField,
};

#[test]
fn field_tracks_linear_gradient_uniformly() {
    let d = 10;
    let eps_apx = 0.2;
    let n = field_sample_count(d, eps_apx, 0.05);
    let eta = field_eta(eps_apx);
    let mut rng = RngStream::new(1, 0);
    let coef = rng.unit_vector(d);
    let oracle = ParallelOracle::new(Linear::new(coef.clone()), OracleConfig::unrestricted(n)).unwrap();
    let c = rng.uniform_in_ball(d, 1.0);
    let field = VectorField::sample(&oracle, &c, 0.05, eta, n, &mut rng).unwrap();
    let ys: Vec<Point> = (0..100)
        .map(|_| &c + rng.uniform_in_ball(d, field.trust_radius()))
        .collect();
    let worst = field
        .eval_many(&ys)
        .unwrap()
        .iter()
        .map(|v| (v - &coef).norm())
        .fold(0.0, f64::max);
    assert!(worst <= eps_apx, "{worst}");
    assert_eq!(oracle.ledger().depth, 1);
}

#[test]
fn symmetric_field_at_kink_is_small() {
    let d = 10;
    let eps_apx = 0.2;
    let n = field_sample_count(d, eps_apx, 0.05);
    let oracle = ParallelOracle::new(ShiftedNorm::new(Point::zeros(d)), OracleConfig::unrestricted(n)).unwrap();
    let mut rng = RngStream::new(2, 0);
    let field = VectorField::sample(&oracle, &Point::zeros(d), 0.05, field_eta(eps_apx), n, &mut rng).unwrap();
    assert!(field.eval(&Point::zeros(d)).unwrap().norm() <= eps_apx);
}

#[test]
fn smoothing_stays_within_bias_bound() {
    // |g(y) - f(y)| <= sqrt(d) L r, with g estimated by Monte Carlo at each y
    let d = 8;
    let r = 0.05;
    let samples = 1000;
    let oracle = ParallelOracle::new(ShiftedNorm::new(Point::zeros(d)), OracleConfig::unrestricted(samples)).unwrap();
    let mut rng = RngStream::new(3, 0);
    let bias = (d as f64).sqrt() * r;
    for _ in 0..1000 {
        let y = rng.uniform_in_ball(d, 0.3);
        let pts: Vec<Point> = (0..samples).map(|_| &y + rng.gaussian_vector(d) * r).collect();
        let vals: Vec<f64> = oracle.submit_batch(&pts).unwrap().iter().map(|a| a.value).collect();
        let mean = vals.iter().sum::<f64>() / samples as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (samples as f64 - 1.0);
        let se = (var / samples as f64).sqrt();
        let fy = oracle.objective().eval(&y).value;
        assert!((mean - fy).abs() <= bias + 3.0 * se, "y = {y}");
    }
}

#[test]
fn mc_standard_error_shrinks_by_root_two_when_doubling_samples() {
    let d = 6;
    let oracle = ParallelOracle::new(ShiftedNorm::new(Point::zeros(d)), OracleConfig::unrestricted(1 << 16)).unwrap();
    let x = Point::from_element(d, 0.01);
    let mut rng = RngStream::new(4, 0);
    let a = mc_gradient_oracle(&oracle, &x, 0.1, 20_000, &mut rng).unwrap();
    let b = mc_gradient_oracle(&oracle, &x, 0.1, 40_000, &mut rng).unwrap();
    let ratio = a.standard_error / b.standard_error;
    assert!((ratio / 2f64.sqrt() - 1.0).abs() <= 0.2, "{ratio}");
}

#[test]
fn mc_error_is_within_three_standard_errors() {
    // f = |x - x0| with x0 far away: grad g(0) is -x0/|x0| up to a bias of order (r/|x0|)^2
    let d = 5;
    let x0 = Point::from_element(d, 3.0);
    let oracle = ParallelOracle::new(ShiftedNorm::new(x0.clone()), OracleConfig::unrestricted(1 << 16)).unwrap();
    let mut hits = 0;
    for seed in 0..100 {
        let mut rng = RngStream::new(seed, 9);
        let g = mc_gradient_oracle(&oracle, &Point::zeros(d), 0.01, 1000, &mut rng).unwrap();
        let exact = -&x0 / x0.norm();
        if (g.estimate - exact).norm() <= 3.0 * g.standard_error {
            hits += 1;
        }
    }
    assert!(hits >= 99, "{hits}");
}

#[test]
fn prox_step_on_norm_meets_stationarity_against_reference() {
    let d = 10;
    let mut rng = RngStream::new(5, 0);
    let x0 = rng.uniform_in_ball(d, 1.0);
    let oracle = ParallelOracle::new(ShiftedNorm::new(x0.clone()), OracleConfig::unrestricted(1 << 18)).unwrap();
    let plan = SmoothingPlan::new(d, 1.0, 1.0, 0.1, 0.1)
        .unwrap()
        .with_eps_oracle(0.1)
        .unwrap()
        .with_sample_count(20_000)
        .unwrap();
    // center at distance 3 r from the kink
    let c = &x0 + rng.unit_vector(d) * (3.0 * plan.r);
    let step = prox_step_gd(&oracle, &c, &plan, &mut rng).unwrap();
    assert!(step.max_distance <= plan.r_tilde);
    assert!(step.residual <= 5.0 / 6.0 * plan.eps_oracle);
    let reference = mc_gradient_oracle(&oracle, &step.y, plan.r, 200_000, &mut rng).unwrap();
    let s = &step.y - &c;
    let lhs = (&reference.estimate + &s * plan.omega.eval(s.norm())).norm();
    assert!(lhs <= plan.eps_oracle + 3.0 * reference.standard_error, "{lhs}");
}

#[test]
fn drs_reaches_target_on_distance_function() {
    let d = 20;
    let mut rng = RngStream::new(6, 0);
    let x0 = rng.uniform_in_ball(d, 1.0);
    let oracle = ParallelOracle::new(ShiftedNorm::new(x0), OracleConfig::unrestricted(1 << 16)).unwrap();
    let opts = SolverOptions {
        f_star: Some(0.0),
        ..Default::default()
    };
    let (x, trace) = baseline_drs(&oracle, 1.0, 1.0, 0.1, 6, &opts).unwrap();
    assert!(oracle.objective().eval(&x).value <= 0.1, "{:?}", trace.final_gap);
    assert!(trace.is_monotone());
}
