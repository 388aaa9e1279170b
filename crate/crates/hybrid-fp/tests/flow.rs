//! Event-detected integration of the hybrid flow.

use hybrid_fp::flow::locate_crossing;
use hybrid_fp::models::{gl2_reduced, Ball, Chaplygin3d, SleighParams};
use hybrid_fp::{advance, integrate, integrate_backward, DomainBox, Error, HybridSystem, IntegratorConfig, Preimages, Termination};
use rand::RngCore;

const SQRT2: f64 = std::f64::consts::SQRT_2;

fn fine() -> IntegratorConfig {
    IntegratorConfig { dt_max: 1e-4, ..Default::default() }
}

#[test]
fn elastic_ball_impact_times_and_states() {
    let ball = Ball::elastic(1.0, 1.0);
    let tr = integrate(&ball, &[1.0, 0.0], 0.0, 8.0, &fine()).unwrap();
    let times = tr.impact_times();
    assert_eq!(times.len(), 3);
    for (t, k) in times.iter().zip([1.0, 3.0, 5.0]) {
        assert!((t - k * SQRT2).abs() < 1e-8, "{t}");
    }
    let e = &tr.events[0];
    assert!(e.x_pre[0].abs() < 1e-9 && (e.x_pre[1] + SQRT2).abs() < 1e-8);
    assert!((e.x_post[1] - SQRT2).abs() < 1e-8);
}

#[test]
fn elastic_ball_conserves_energy_across_ten_impacts() {
    let ball = Ball::elastic(1.0, 1.0);
    let tr = integrate(&ball, &[1.0, 0.0], 0.0, 30.0, &fine()).unwrap();
    assert!(tr.events.len() >= 10);
    let h0 = ball.energy(&[1.0, 0.0]);
    let drift = tr.samples.iter().map(|(_, x)| (ball.energy(x) - h0).abs()).fold(0.0, f64::max);
    assert!(drift < 1e-8, "{drift}");
    for e in &tr.events {
        assert_eq!(e.x_post[1], -e.x_pre[1]);
    }
}

#[test]
fn inelastic_ball_stops_with_zeno_before_t5() {
    let ball = Ball::new(1.0, 1.0, 0.5).unwrap();
    let cfg = IntegratorConfig { dt_max: 1e-4, max_impacts: 50, ..Default::default() };
    let tr = integrate(&ball, &[1.0, 0.0], 0.0, 5.0, &cfg).unwrap();
    assert_eq!(tr.terminated, Termination::ZenoLimit);
    let (t_end, _) = tr.last();
    assert!(t_end < 5.0);
    // Successive flight times shrink by the momentum ratio c².
    let t = tr.impact_times();
    for w in t.windows(3).take(5) {
        let r = (w[2] - w[1]) / (w[1] - w[0]);
        assert!((r - 0.25).abs() < 1e-6, "{r}");
    }
}

#[test]
fn inelastic_apex_heights_shrink_by_c_to_the_fourth() {
    let ball = Ball::new(1.0, 1.0, 0.5).unwrap();
    let tr = integrate(&ball, &[1.0, 0.0], 0.0, 2.2, &fine()).unwrap();
    let apex: Vec<f64> = tr.events.iter().map(|e| 0.5 * e.x_post[1] * e.x_post[1]).collect();
    assert!((apex[0] - 0.0625).abs() < 1e-8);
    assert!((apex[1] / apex[0] - 0.0625).abs() < 1e-8);
}

#[test]
fn zero_duration_gives_single_sample() {
    let ball = Ball::elastic(1.0, 1.0);
    let tr = integrate(&ball, &[1.0, 0.0], 2.0, 2.0, &IntegratorConfig::default()).unwrap();
    assert_eq!(tr.samples, vec![(2.0, vec![1.0, 0.0])]);
    assert!(tr.events.is_empty());
    assert_eq!(tr.terminated, Termination::TimeReached);
}

#[test]
fn locate_crossing_on_ball_bracket() {
    let ball = Ball::elastic(1.0, 1.0);
    let at = |t: f64| vec![1.0 - 0.5 * t * t, -t];
    let (t, x) = locate_crossing(&ball, &at(1.40), &at(1.42), 1.40, 1.42, 1e-10).unwrap();
    assert!((t - SQRT2).abs() < 1e-10 / SQRT2 + 1e-12);
    assert!(x[0].abs() < 1e-10);
}

/// `ẋ = 1` with guard `x = 1`.
struct Line {
    domain: DomainBox,
}

impl HybridSystem for Line {
    fn name(&self) -> &str {
        "line"
    }
    fn dim(&self) -> usize {
        1
    }
    fn domain(&self) -> &DomainBox {
        &self.domain
    }
    fn vector_field(&self, _x: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
    }
    fn guard_level(&self, x: &[f64]) -> f64 {
        x[0] - 1.0
    }
    fn guard_armed(&self, _x: &[f64]) -> bool {
        true
    }
    fn reset(&self, x: &[f64]) -> Vec<f64> {
        vec![x[0] + 1.0]
    }
    fn image_level(&self, x: &[f64]) -> f64 {
        x[0] - 2.0
    }
    fn preimages(&self, y: &[f64]) -> Preimages {
        Preimages::Finite(vec![vec![y[0] - 1.0]])
    }
    fn sample_guard(&self, _rng: &mut dyn RngCore) -> Vec<f64> {
        vec![1.0]
    }
}

#[test]
fn locate_crossing_on_linear_guard() {
    let line = Line { domain: DomainBox::aperiodic(vec![-10.0], vec![10.0]).unwrap() };
    let (t, x) = locate_crossing(&line, &[0.9], &[1.1], 0.0, 0.2, 1e-12).unwrap();
    assert!((t - 0.1).abs() < 1e-12 && (x[0] - 1.0).abs() < 1e-12);
}

#[test]
fn locate_crossing_requires_a_bracket() {
    let line = Line { domain: DomainBox::aperiodic(vec![-10.0], vec![10.0]).unwrap() };
    assert!(matches!(locate_crossing(&line, &[0.5], &[0.7], 0.0, 0.2, 1e-12), Err(Error::NoBracket)));
}

#[test]
fn locate_crossing_on_chaplygin_wall_matches_dense_reference() {
    let sys = Chaplygin3d::new(SleighParams::default()).unwrap();
    let theta0 = SleighParams::default().theta0;
    let x0 = [0.3, 1.2, 0.7];
    let ref_cfg = IntegratorConfig { dt_max: 1e-6, max_impacts: 1, ..Default::default() };
    let t_ref = integrate(&sys, &x0, 0.0, 0.1, &ref_cfg).unwrap().events[0].t;
    // The same flow without walls supplies the far end of the bracket.
    let free = Chaplygin3d::new(SleighParams { theta0: 3.0, ..SleighParams::default() }).unwrap();
    let after = advance(&free, &x0, 0.0, 0.1, &ref_cfg).unwrap().x;
    let (t_hit, x_hit) = locate_crossing(&sys, &x0, &after, 0.0, 0.1, 1e-10).unwrap();
    let s = (x_hit[2] - theta0) * (x_hit[2] + theta0);
    assert!(s.abs() < 1e-10);
    assert!((t_hit - t_ref).abs() < 1e-8, "{t_hit} vs {t_ref}");
}

#[test]
fn reversed_interval_is_rejected() {
    let ball = Ball::elastic(1.0, 1.0);
    assert!(integrate(&ball, &[1.0, 0.0], 1.0, 0.0, &IntegratorConfig::default()).is_err());
}

#[test]
fn leaving_the_chart_is_reported() {
    let ball = Ball::elastic(1.0, 1.0);
    let end = advance(&ball, &[1.0, 99.0], 0.0, 5.0, &IntegratorConfig::default()).unwrap();
    assert_eq!(end.terminated, Termination::LeftDomain);
}

#[test]
fn trajectories_are_bit_identical_on_repeat() {
    let ball = Ball::new(1.0, 1.0, 0.8).unwrap();
    let a = integrate(&ball, &[1.3, 0.4], 0.0, 4.0, &IntegratorConfig::default()).unwrap();
    let b = integrate(&ball, &[1.3, 0.4], 0.0, 4.0, &IntegratorConfig::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn backward_flow_recovers_the_start() {
    let ball = Ball::elastic(1.0, 1.0);
    let fwd = advance(&ball, &[1.0, 0.0], 0.0, 3.0, &fine()).unwrap();
    let back = integrate_backward(&ball, &fwd.x, 3.0, 0.0, &fine()).unwrap();
    let x = back.last().1;
    assert_eq!(back.events.len(), 1);
    assert!((x[0] - 1.0).abs() < 1e-7 && x[1].abs() < 1e-7, "{x:?}");
}

#[test]
fn rk4_error_drops_at_least_eightfold_per_halving() {
    let sys = gl2_reduced();
    let x0 = [0.3, 0.5, -0.2, 0.1, 0.5];
    let reference = advance(&sys, &x0, 0.0, 1.0, &IntegratorConfig { dt_max: 1e-4, ..Default::default() }).unwrap();
    assert_eq!(reference.impacts, 0);
    let err = |dt: f64| {
        let e = advance(&sys, &x0, 0.0, 1.0, &IntegratorConfig { dt_max: dt, ..Default::default() }).unwrap();
        e.x.iter().zip(&reference.x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    for dt in [0.1, 0.05, 0.025] {
        let ratio = err(dt) / err(dt / 2.0);
        assert!(ratio >= 8.0, "dt={dt} ratio={ratio}");
    }
}
