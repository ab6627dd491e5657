use proptest::prelude::*;

use ringsim::controllers::ControllerKind;
use ringsim::human::{BcModel, HvModel, HvParams, BC_LAYERS};
use ringsim::nn::{Mlp, OutputActivation, Standardizer};
use ringsim::sim::*;
use ringsim::ACCEL_BOUND;

/// Distance travelled since start for each vehicle, unwrapped across the seam.
fn unwrap(prev: &[f64], before: &World, after: &World) -> Vec<f64> {
    let l = after.ring_length;
    prev.iter()
        .zip(before.vehicles.iter().zip(&after.vehicles))
        .map(|(p, (a, b))| p + (b.position - a.position).rem_euclid(l))
        .collect()
}

fn world(n: usize, density: f64, v0: f64) -> World {
    let cfg = RolloutConfig { n_vehicles: n, density, initial_displacement: 0.0, ..Default::default() };
    let mut w = init_ring(&cfg).unwrap();
    for v in &mut w.vehicles {
        v.velocity = v0;
    }
    w
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn step_preserves_ring_invariants(
        n in 2usize..25,
        density in 20.0..150.0f64,
        v0 in 0.0..15.0f64,
        cmds in prop::collection::vec(prop::collection::vec(-10.0..10.0f64, 25), 1..80),
    ) {
        let mut w = world(n, density, v0);
        let l = w.ring_length;
        let mut odo: Vec<f64> = w.vehicles.iter().map(|v| v.position).collect();
        for c in &cmds {
            let before = w.clone();
            step(&mut w, &c[..n]).unwrap();
            odo = unwrap(&odo, &before, &w);
            for (i, v) in w.vehicles.iter().enumerate() {
                prop_assert!((0.0..l).contains(&v.position));
                prop_assert!((0.0..=w.speed_limit).contains(&v.velocity));
                prop_assert!(v.acceleration.abs() <= ACCEL_BOUND);
                prop_assert_eq!(v.acceleration, c[i].clamp(-ACCEL_BOUND, ACCEL_BOUND));
                prop_assert!(w.headway(i) >= -1e-6, "headway {}", w.headway(i));
            }
            // nobody passes its leader: unwrapped order stays fixed
            for i in 0..n - 1 {
                prop_assert!(odo[i] < odo[i + 1] + 1e-9);
            }
            prop_assert!(odo[n - 1] < odo[0] + l + 1e-9);
        }
    }

    #[test]
    fn collision_flag_is_sticky(seed in 0u64..50) {
        let mut w = world(4, 150.0, 10.0);
        // everyone brakes except vehicle 0, which floors it into its leader
        let mut cmds = vec![-3.0; 4];
        cmds[0] = 3.0 + seed as f64;
        let mut seen = false;
        for _ in 0..40 {
            step(&mut w, &cmds).unwrap();
            seen |= w.collision;
            prop_assert_eq!(w.collision, seen);
        }
        prop_assert!(w.collision);
    }
}

#[test]
fn rejects_bad_commands() {
    let mut w = world(3, 50.0, 1.0);
    assert!(step(&mut w, &[0.0, 0.0]).is_err());
    assert!(step(&mut w, &[0.0, f64::NAN, 0.0]).is_err());
    assert_eq!(w.step_count, 0);
}

fn short_protocol(seed: u64, pen: f64) -> RolloutConfig {
    RolloutConfig {
        seed,
        horizon_steps: 1200,
        warmup_steps: 300,
        rv_penetration: pen,
        perturbation_window: Some([300, 1200]),
        ..Default::default()
    }
}

/// Perturbing drivers whose close-headway imitation always predicts zero.
fn hv() -> HvModel {
    let bc = BcModel::new(Mlp::zeros(&BC_LAYERS, OutputActivation::Identity).unwrap(), Standardizer::identity(3)).unwrap();
    HvModel::new(HvParams::default(), Some(bc)).unwrap()
}

#[test]
fn rollouts_are_deterministic_per_seed() {
    let hv = hv();
    let setup = RolloutSetup { rv_controller: Some(ControllerKind::Piws), ..Default::default() };
    let a = run_rollout(&short_protocol(3, 0.1), &setup, Some(&hv), None).unwrap();
    let b = run_rollout(&short_protocol(3, 0.1), &setup, Some(&hv), None).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.events, b.events);
    let c = run_rollout(&short_protocol(4, 0.1), &setup, Some(&hv), None).unwrap();
    assert_ne!(a.log, c.log);
}

#[test]
fn log_shape_and_rv_block() {
    let setup = RolloutSetup { rv_controller: Some(ControllerKind::Bcm), ..Default::default() };
    let out = run_rollout(&short_protocol(0, 0.1), &setup, Some(&hv()), None).unwrap();
    let log = out.log.unwrap();
    assert_eq!(log.n_steps(), 1200);
    assert_eq!(log.rows.len(), 1200 * 22);
    // 10 % of 22 rounds to a contiguous block starting at 0
    assert_eq!(log.rv_ids, (0..log.rv_ids.len()).collect::<Vec<_>>());
    assert!(!log.rv_ids.is_empty());
    for k in [0, 599, 1199] {
        let rows = log.step_rows(k);
        assert!(rows.iter().enumerate().all(|(i, r)| r.id == i && r.step == k as u64));
    }
}

#[test]
fn unperturbed_idm_ring_stays_collision_free() {
    let cfg = RolloutConfig { horizon_steps: 3000, ..Default::default() };
    let out = run_rollout(&cfg, &RolloutSetup::default(), None, None).unwrap();
    assert!(!out.collision);
    assert!(out.final_world.mean_speed() > 0.5);
}

#[test]
fn external_controller_needs_policy() {
    let setup = RolloutSetup { rv_controller: Some(ControllerKind::External), ..Default::default() };
    assert!(run_rollout(&short_protocol(0, 0.05), &setup, Some(&hv()), None).is_err());
    assert!(run_rollout(&short_protocol(0, 0.0), &RolloutSetup::default(), None, None).is_err());
}
