//! Closed-form properties of the reference models.

use std::f64::consts::PI;

use approx::assert_abs_diff_eq;

use hybrid_fp::models::{
    build, default_grid, Chaplygin2d, Chaplygin3d, Filippov, InitialDensity, ModelParams, SleighParams, MODEL_IDS,
};
use hybrid_fp::{hybrid_jacobian, integrate, HybridSystem, IntegratorConfig, Termination};

#[test]
fn sleigh_at_rest_in_rotation_is_an_equilibrium() {
    let s = Chaplygin3d::new(SleighParams::default()).unwrap();
    let traj = integrate(&s, &[0.8, 0.0, 0.2], 0.0, 10.0, &IntegratorConfig::default()).unwrap();
    assert!(traj.events.is_empty());
    let (_, x) = traj.last();
    assert_eq!(&x[..2], &[0.8, 0.0]);
    assert_abs_diff_eq!(x[2], 0.2, epsilon = 1e-12);
}

#[test]
fn sleigh_energy_is_conserved_through_impacts() {
    let p = SleighParams::default();
    let s = Chaplygin3d::new(p.clone()).unwrap();
    let x0 = [0.1, 1.2, 0.0];
    let e0 = p.energy(x0[0], x0[1]);
    let traj = integrate(&s, &x0, 0.0, 10.0, &IntegratorConfig::default()).unwrap();
    assert!(traj.events.len() >= 2);
    for (_, x) in &traj.samples {
        assert!((p.energy(x[0], x[1]) - e0).abs() < 1e-8);
    }
    for e in &traj.events {
        assert_eq!(e.x_post[1], -e.x_pre[1]);
    }
}

#[test]
fn fast_sleigh_with_small_spin_never_reaches_the_wall() {
    let s = Chaplygin3d::new(SleighParams::default()).unwrap();
    let traj = integrate(&s, &[3.0, 0.05, 0.0], 0.0, 20.0, &IntegratorConfig::default()).unwrap();
    assert_eq!(traj.terminated, Termination::TimeReached);
    assert!(traj.events.is_empty());
}

#[test]
fn energy_reduced_sleigh_has_stable_velocity() {
    let s = Chaplygin2d::new(SleighParams::default(), 1.0).unwrap();
    let vs = s.v_star();
    assert_abs_diff_eq!(vs, (s.c1() / s.c2()).sqrt(), epsilon = 1e-15);
    let mut f = [0.0; 3];
    s.vector_field(&[vs, 0.0, 1.0], &mut f);
    assert!(f[0].abs() < 1e-12);
    assert!(s.state(2.0 * vs, 0.0, 1.0).is_err());
}

#[test]
fn filippov_density_jumps_by_the_hybrid_jacobian() {
    let f = Filippov::new(PI.exp()).unwrap();
    let eps = 1e-9;
    for (on, outside, inside) in [
        ([0.4, 0.0], [0.4, -eps], [0.4, eps]),
        ([0.0, 0.4], [eps, 0.4], [-eps, 0.4]),
        ([-0.4, 0.0], [-0.4, eps], [-0.4, -eps]),
        ([0.0, -0.4], [-eps, -0.4], [eps, -0.4]),
    ] {
        // Counter-clockwise flow: `outside` is upstream of the axis, and
        // density arriving through the reset is divided by the Jacobian.
        let jac = hybrid_jacobian(&f, &on).unwrap().jac;
        assert_abs_diff_eq!(jac, (2.0 * PI).exp(), epsilon = 1e-6 * jac);
        let ratio = f.invariant_density(&outside) / f.invariant_density(&inside);
        assert!((ratio - jac).abs() < 1e-5 * jac, "{on:?}: {ratio} vs {jac}");
    }
}

#[test]
fn filippov_jacobian_is_alpha_squared() {
    for alpha in [0.5, 2.0, PI.exp()] {
        let f = Filippov::new(alpha).unwrap();
        for x in [[0.3, 0.0], [0.0, -0.7], [-1.1, 0.0]] {
            assert_abs_diff_eq!(hybrid_jacobian(&f, &x).unwrap().jac, alpha * alpha, epsilon = 1e-6 * alpha * alpha);
        }
    }
}

#[test]
fn registry_defaults_are_consistent() {
    for id in MODEL_IDS {
        let sys = build(id, &ModelParams::default()).unwrap();
        let (grid, _) = default_grid(id, sys.as_ref()).unwrap();
        let init = InitialDensity::default_for(id, sys.as_ref());
        let f0 = init.build(sys.as_ref()).unwrap();
        let bound = init.bound(sys.as_ref());
        for i in (0..grid.len()).step_by(97) {
            let x = grid.node_state(sys.as_ref(), i);
            let v = f0(&x) * sys.ref_density(&x);
            assert!(v.is_finite() && v >= 0.0 && v <= bound * (1.0 + 1e-12), "{id}");
        }
    }
}
