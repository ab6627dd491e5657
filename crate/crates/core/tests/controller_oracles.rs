//! Controller outputs against literal re-transcriptions of the control laws.

use proptest::prelude::*;

use ringsim::controllers::*;

mod common;

#[test]
fn idm_matches_oracle() {
    common::idm_matches_oracle().unwrap();
}

#[test]
fn follower_stopper_matches_oracle() {
    common::fs_matches_oracle().unwrap();
}

#[test]
fn piws_matches_oracle() {
    common::piws_matches_oracle().unwrap();
}

#[test]
fn bcm_matches_oracle() {
    common::bcm_matches_oracle().unwrap();
}

#[test]
fn lacc_matches_oracle() {
    common::lacc_matches_oracle().unwrap();
}

#[test]
fn fs_command_continuous_and_monotone_on_dense_grid() {
    common::fs_command_continuous_and_monotone().unwrap();
}

proptest! {
    #[test]
    fn idm_never_exceeds_a_max(v in 0.0..30.0f64, s in 0.01..200.0f64, vl in 0.0..30.0f64) {
        prop_assert!(idm_accel(v, s, vl, &IdmParams::default()) <= 1.0);
    }

    #[test]
    fn bcm_raw_is_linear(dd in -10.0..10.0f64, dvl in -5.0..5.0f64, dvf in -5.0..5.0f64, v in 0.0..15.0f64, k in -3.0..3.0f64) {
        // with v_des = 0 every term is homogeneous of degree one
        let p = BcmParams { v_des: 0.0, ..Default::default() };
        let a = bcm_accel_raw(dd, dvl, dvf, v, &p);
        let b = bcm_accel_raw(k * dd, k * dvl, k * dvf, k * v, &p);
        prop_assert!((b - k * a).abs() < 1e-9);
    }

    #[test]
    fn piws_target_within_band(dx in -10.0..100.0f64, u in 0.0..20.0f64) {
        let p = PiwsParams::default();
        let t = piws_target_velocity(dx, u, &p);
        prop_assert!(t >= u && t <= u + p.v_catch);
    }

    #[test]
    fn fs_thresholds_ordered(dv in -10.0..0.0f64) {
        let th = fs_thresholds(&FsParams::default(), dv);
        prop_assert!(th[0] < th[1] && th[1] < th[2]);
    }

    #[test]
    fn clamped_outputs_in_bounds(a in -100.0..100.0f64) {
        let c = clamp_controller_output(a);
        prop_assert!((-EMERGENCY_DECEL..=3.0).contains(&c));
    }
}
