//! Property-based checks of invariants that must hold for any input.

use proptest::prelude::*;

use hybrid_fp::io::{snapshot_from_str, snapshot_to_string, Manifest};
use hybrid_fp::models::{gl2_casimirs, gl2_energy, gl2_reset_rule, Ball, Filippov};
use hybrid_fp::oracle::compare;
use hybrid_fp::reduction::{gl_jump, ReducedModel};
use hybrid_fp::system::decompose_tangent;
use hybrid_fp::{hybrid_jacobian, DensityField, DomainBox, GridSpec};

fn grid() -> GridSpec {
    GridSpec::new(DomainBox::new(vec![-1.0, 0.0], vec![2.0, 3.0], vec![false, true]).unwrap(), vec![5, 4], 1).unwrap()
}

proptest! {
    #[test]
    fn multilinear_weights_form_a_partition_of_unity(x in -1.0f64..2.0, y in -5.0f64..5.0) {
        let w = grid().multilinear(&[x, y], 0);
        let total: f64 = w.iter().map(|t| t.1).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|t| t.1 >= -1e-15 && t.0 < 20));
    }

    #[test]
    fn snapshots_round_trip(vals in prop::collection::vec(-1e6f64..1e6, 20), t in 0.0f64..100.0) {
        let f = DensityField::with_unit_density(grid(), t, vals).unwrap();
        let (back, _) = snapshot_from_str(&snapshot_to_string(&f, None)).unwrap();
        prop_assert_eq!(back, f);
    }

    #[test]
    fn distance_is_symmetric_and_bounded(
        a in prop::collection::vec(0.0f64..5.0, 20),
        b in prop::collection::vec(0.0f64..5.0, 20),
    ) {
        let fa = DensityField::with_unit_density(grid(), 0.0, a).unwrap();
        let fb = DensityField::with_unit_density(grid(), 0.0, b).unwrap();
        let (ab, ba) = (compare(&fa, &fb).unwrap(), compare(&fb, &fa).unwrap());
        prop_assert!((ab.l1 - ba.l1).abs() < 1e-12 && ab.linf == ba.linf);
        prop_assert!(ab.l1 >= 0.0 && ab.l1 <= 2.0 + 1e-12);
    }

    #[test]
    fn gl2_jump_flips_trace_and_keeps_energy(z in prop::array::uniform4(-10.0f64..10.0)) {
        let after = ReducedModel::gl2().reset_zeta(&z);
        prop_assert_eq!(gl2_casimirs(&after).0, -gl2_casimirs(&z).0);
        prop_assert!((gl2_casimirs(&after).1 - gl2_casimirs(&z).1).abs() < 1e-12);
        prop_assert!((gl2_energy(&after) - gl2_energy(&z)).abs() < 1e-10 * gl2_energy(&z).max(1.0));
        let printed = gl2_reset_rule(&z);
        let generic: Vec<f64> = z.iter().zip(gl_jump(2, &z)).map(|(a, b)| a + b).collect();
        prop_assert!(printed.iter().zip(&generic).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn ball_jacobian_is_fourth_power_of_restitution(c in 0.05f64..=1.0, p in -5.0f64..-0.01) {
        let ball = Ball::new(1.0, 1.0, c).unwrap();
        let jac = hybrid_jacobian(&ball, &[0.0, p]).unwrap().jac;
        prop_assert!((jac - c.powi(4)).abs() < 1e-6);
    }

    #[test]
    fn filippov_jacobian_is_alpha_squared(alpha in 0.1f64..30.0, r in 0.01f64..5.0, axis in 0usize..4) {
        let f = Filippov::new(alpha).unwrap();
        let x = match axis { 0 => [r, 0.0], 1 => [0.0, r], 2 => [-r, 0.0], _ => [0.0, -r] };
        let jac = hybrid_jacobian(&f, &x).unwrap().jac;
        prop_assert!((jac - alpha * alpha).abs() < 1e-6 * alpha * alpha);
    }

    #[test]
    fn tangent_decomposition_reconstructs_the_vector(v0 in -5.0f64..5.0, v1 in -5.0f64..5.0, p in -4.0f64..-0.1) {
        let ball = Ball::elastic(1.0, 1.0);
        let (tan, c) = decompose_tangent(&ball, &[0.0, p], &[v0, v1]).unwrap();
        // X(0, p) = (p, −1) for m = g = 1.
        prop_assert!(tan[0].abs() < 1e-12);
        prop_assert!((tan[0] + c * p - v0).abs() < 1e-12 && (tan[1] - c - v1).abs() < 1e-12);
    }

    #[test]
    fn manifests_round_trip(entries in prop::collection::vec(("[a-z]{1,6}", "[a-z]{1,6}", "[a-z0-9.]{1,8}"), 1..10)) {
        let mut m = Manifest::default();
        for (s, k, v) in &entries {
            m.set(s, k, v);
        }
        prop_assert_eq!(Manifest::parse(&m.render()).unwrap(), m);
    }
}
