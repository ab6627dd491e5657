//! Ring-road world, fixed-step integration and rollout orchestration.
//!
//! Vehicles are stored in spatial order: the leader of vehicle `i` is
//! `i + 1 (mod n)`. Robot vehicles occupy a contiguous block starting at
//! index 0, so the front of that block (`n_rv - 1`) is the platoon leader.

use std::collections::VecDeque;
use std::io::Write;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::congestion::{label_snapshot, CongestionLabel, LabelRules, SensingSnapshot};
use crate::controllers::{Controller, ControllerKind, ControllerParams, Neighborhood};
use crate::human::{fire_event, sample_schedule, vehicle_rng, HvModel, PerturbationEvent};
use crate::rl::platoon_assign;
use crate::{Error, Result, ACCEL_BOUND};

pub const VEHICLE_LENGTH: f64 = 5.0;

/// Steps in six minutes at the default time step.
pub const SIX_MINUTES_STEPS: u64 = 3600;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Human,
    Robot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: usize,
    pub position: f64,
    pub velocity: f64,
    /// Last applied (clamped) acceleration.
    pub acceleration: f64,
    pub length: f64,
    pub role: Role,
    pub controller: ControllerKind,
    pub active_perturbation: Option<PerturbationEvent>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub ring_length: f64,
    pub vehicles: Vec<VehicleState>,
    pub step_count: u64,
    pub dt: f64,
    pub speed_limit: f64,
    /// Sticky: set once any step had to clip a vehicle to contact.
    pub collision: bool,
    pub collision_events: u64,
}

impl World {
    pub fn n(&self) -> usize {
        self.vehicles.len()
    }

    pub fn leader_of(&self, i: usize) -> usize {
        (i + 1) % self.vehicles.len()
    }

    pub fn follower_of(&self, i: usize) -> usize {
        (i + self.vehicles.len() - 1) % self.vehicles.len()
    }

    /// Centre-to-centre distance from `i` forward to its leader, in `[0, L)`.
    pub fn center_gap(&self, i: usize) -> f64 {
        let j = self.leader_of(i);
        (self.vehicles[j].position - self.vehicles[i].position).rem_euclid(self.ring_length)
    }

    /// Bumper-to-bumper gap to the leader; clipped at zero.
    pub fn headway(&self, i: usize) -> f64 {
        let j = self.leader_of(i);
        (self.center_gap(i) - self.vehicles[j].length).max(0.0)
    }

    pub fn mean_speed(&self) -> f64 {
        self.vehicles.iter().map(|v| v.velocity).sum::<f64>() / self.n() as f64
    }

    /// Population standard deviation of velocities across vehicles.
    pub fn velocity_std(&self) -> f64 {
        let m = self.mean_speed();
        (self.vehicles.iter().map(|v| (v.velocity - m).powi(2)).sum::<f64>() / self.n() as f64).sqrt()
    }

    pub fn neighborhood(&self, i: usize) -> Neighborhood {
        let lead = self.leader_of(i);
        let follow = self.follower_of(i);
        Neighborhood {
            v: self.vehicles[i].velocity,
            gap: self.headway(i),
            v_lead: self.vehicles[lead].velocity,
            follower_gap: self.headway(follow),
            v_follow: self.vehicles[follow].velocity,
            dt: self.dt,
        }
    }

    pub fn rv_ids(&self) -> Vec<usize> {
        self.vehicles.iter().filter(|v| v.role == Role::Robot).map(|v| v.id).collect()
    }
}

pub fn headway(world: &World, id: usize) -> f64 {
    world.headway(id)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutConfig {
    pub horizon_steps: u64,
    pub warmup_steps: u64,
    pub seed: u64,
    /// veh/km
    pub density: f64,
    pub n_vehicles: usize,
    pub rv_penetration: f64,
    /// `[start, end)` steps during which human perturbations fire.
    pub perturbation_window: Option<[u64; 2]>,
    pub dt: f64,
    pub speed_limit: f64,
    pub vehicle_length: f64,
    /// Forward displacement of vehicle 0 at start, m.
    pub initial_displacement: f64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            horizon_steps: 4500,
            warmup_steps: 2500,
            seed: 0,
            density: 85.0,
            n_vehicles: 22,
            rv_penetration: 0.0,
            perturbation_window: None,
            dt: 0.1,
            speed_limit: 30.0,
            vehicle_length: VEHICLE_LENGTH,
            initial_displacement: 1.0,
        }
    }
}

impl RolloutConfig {
    pub fn ring_length(&self) -> f64 {
        self.n_vehicles as f64 / self.density * 1000.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_vehicles < 2 {
            return Err(Error::config("a ring needs at least two vehicles"));
        }
        if !(self.density > 0.0) || !self.density.is_finite() {
            return Err(Error::config("density must be positive"));
        }
        if !(self.dt > 0.0) || !(self.speed_limit > 0.0) || !(self.vehicle_length > 0.0) {
            return Err(Error::config("dt, speed limit and vehicle length must be positive"));
        }
        if self.ring_length() <= self.n_vehicles as f64 * self.vehicle_length {
            return Err(Error::config(format!(
                "ring of {:.2} m cannot hold {} vehicles of {} m",
                self.ring_length(),
                self.n_vehicles,
                self.vehicle_length
            )));
        }
        if self.warmup_steps >= self.horizon_steps {
            return Err(Error::config("warmup_steps must be below horizon_steps"));
        }
        if !(0.0..=1.0).contains(&self.rv_penetration) {
            return Err(Error::config("rv_penetration must lie in [0, 1]"));
        }
        if let Some([a, b]) = self.perturbation_window {
            if a >= b || b > self.horizon_steps {
                return Err(Error::config("perturbation window must be a non-empty range inside the horizon"));
            }
        }
        Ok(())
    }

    /// Warmup, stabilisation until the default horizon, then six minutes of perturbations.
    pub fn evaluation_protocol(mut self) -> Self {
        let start = self.horizon_steps;
        let len = (360.0 / self.dt).round() as u64;
        self.perturbation_window = Some([start, start + len]);
        self.horizon_steps = start + len;
        self
    }

    /// Number of robot vehicles implied by the penetration rate.
    pub fn n_rv(&self) -> usize {
        (self.n_vehicles as f64 * self.rv_penetration).round() as usize
    }
}

/// Equally spaced vehicles at rest, vehicle 0 nudged forward to break symmetry.
pub fn init_ring(config: &RolloutConfig) -> Result<World> {
    config.validate()?;
    let n = config.n_vehicles;
    let ring_length = config.ring_length();
    let spacing = ring_length / n as f64;
    if config.initial_displacement.abs() >= spacing - config.vehicle_length {
        return Err(Error::config("initial displacement would overlap vehicles"));
    }
    let n_rv = if config.rv_penetration > 0.0 {
        let p = platoon_assign(n, config.rv_penetration)?;
        p.n_rv
    } else {
        0
    };
    let vehicles = (0..n)
        .map(|i| {
            let mut position = i as f64 * spacing;
            if i == 0 {
                position = (position + config.initial_displacement).rem_euclid(ring_length);
            }
            VehicleState {
                id: i,
                position,
                velocity: 0.0,
                acceleration: 0.0,
                length: config.vehicle_length,
                role: if i < n_rv { Role::Robot } else { Role::Human },
                controller: ControllerKind::Idm,
                active_perturbation: None,
            }
        })
        .collect();
    Ok(World {
        ring_length,
        vehicles,
        step_count: 0,
        dt: config.dt,
        speed_limit: config.speed_limit,
        collision: false,
        collision_events: 0,
    })
}

/// Advance the world one Euler step.
///
/// Commands are clamped to the action bound. A follower that would end up
/// closer than contact is clipped back to contact and the collision flag is
/// raised. Returns whether this step clipped anything.
pub fn step(world: &mut World, accel_commands: &[f64]) -> Result<bool> {
    let n = world.n();
    if accel_commands.len() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: accel_commands.len(),
        });
    }
    if accel_commands.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite("acceleration command"));
    }
    let dt = world.dt;
    let old_gap: Vec<f64> = (0..n).map(|i| world.center_gap(i)).collect();
    let mut new_v = Vec::with_capacity(n);
    let mut travel = Vec::with_capacity(n);
    for (veh, &cmd) in world.vehicles.iter_mut().zip(accel_commands) {
        let a = cmd.clamp(-ACCEL_BOUND, ACCEL_BOUND);
        veh.acceleration = a;
        let v = (veh.velocity + a * dt).clamp(0.0, world.speed_limit);
        new_v.push(v);
        travel.push(v * dt);
    }

    let mut clipped = false;
    for _ in 0..=n {
        let mut changed = false;
        for i in (0..n).rev() {
            let j = (i + 1) % n;
            let len = world.vehicles[j].length;
            let gap_after = old_gap[i] + travel[j] - travel[i];
            if gap_after < len - 1e-9 {
                travel[i] = (old_gap[i] + travel[j] - len).max(0.0);
                new_v[i] = new_v[i].min(new_v[j]).min(travel[i] / dt);
                changed = true;
                clipped = true;
            }
        }
        if !changed {
            break;
        }
    }

    let l = world.ring_length;
    for (i, veh) in world.vehicles.iter_mut().enumerate() {
        veh.velocity = new_v[i];
        let mut x = (veh.position + travel[i]).rem_euclid(l);
        if x >= l {
            x -= l;
        }
        veh.position = x;
    }
    world.step_count += 1;
    if clipped {
        world.collision = true;
        world.collision_events += 1;
    }
    Ok(clipped)
}

// ---------------------------------------------------------------------------
// Logging

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: u64,
    pub id: usize,
    pub pos_m: f64,
    pub vel_mps: f64,
    pub acc_mps2: f64,
    pub headway_m: f64,
    pub label: CongestionLabel,
    pub perturbed: bool,
}

pub const LOG_HEADER: [&str; 8] = ["step", "id", "pos_m", "vel_mps", "acc_mps2", "headway_m", "label", "perturbed"];

/// Per-vehicle, per-step record of a rollout. Rows are step-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub ring_length: f64,
    pub dt: f64,
    pub speed_limit: f64,
    pub n_vehicles: usize,
    pub rv_ids: Vec<usize>,
    pub perturbation_window: Option<[u64; 2]>,
    pub rows: Vec<LogRow>,
}

impl TrajectoryLog {
    pub fn new(world: &World, rv_ids: Vec<usize>, perturbation_window: Option<[u64; 2]>) -> Self {
        Self {
            ring_length: world.ring_length,
            dt: world.dt,
            speed_limit: world.speed_limit,
            n_vehicles: world.n(),
            rv_ids,
            perturbation_window,
            rows: Vec::new(),
        }
    }

    pub fn n_steps(&self) -> usize {
        self.rows.len() / self.n_vehicles.max(1)
    }

    /// Rows of the `k`-th recorded step, ordered by vehicle id.
    pub fn step_rows(&self, k: usize) -> &[LogRow] {
        &self.rows[k * self.n_vehicles..(k + 1) * self.n_vehicles]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(LOG_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.step.to_string(),
                r.id.to_string(),
                r.pos_m.to_string(),
                r.vel_mps.to_string(),
                r.acc_mps2.to_string(),
                r.headway_m.to_string(),
                r.label.as_str().to_string(),
                u8::from(r.perturbed).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Rollouts

/// Everything besides geometry that decides how a rollout behaves.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutSetup {
    pub controllers: ControllerParams,
    /// Controller bound to robot vehicles once warmup ends.
    pub rv_controller: Option<ControllerKind>,
    pub label_rules: LabelRules,
    /// Skip per-row congestion labels (they are then all `Undefined`).
    pub skip_labels: bool,
}

/// Source of accelerations for robot vehicles driven from outside (learned policies).
pub trait RvPolicy {
    /// One acceleration per id in `rv_ids`.
    fn act(&mut self, world: &World, rv_ids: &[usize]) -> Result<Vec<f64>>;
}

struct VehiclePerturbations {
    rng: ChaCha8Rng,
    pending: VecDeque<u64>,
}

#[derive(Clone, Debug)]
pub struct RolloutOutput {
    pub log: Option<TrajectoryLog>,
    pub events: Vec<PerturbationEvent>,
    pub warnings: Vec<String>,
    pub collision: bool,
    pub collision_events: u64,
    pub final_world: World,
}

#[derive(Clone, Copy, Debug)]
pub struct StepInfo {
    pub step: u64,
    pub clipped: bool,
}

/// A rollout in progress. Exposes single-step control for environments.
pub struct Simulation<'a> {
    world: World,
    config: RolloutConfig,
    setup: RolloutSetup,
    controllers: Vec<Controller>,
    hv: Option<&'a HvModel>,
    perturb: Vec<Option<VehiclePerturbations>>,
    events: Vec<PerturbationEvent>,
    warnings: Vec<String>,
    rv_ids: Vec<usize>,
    log: Option<TrajectoryLog>,
}

impl<'a> Simulation<'a> {
    pub fn new(config: &RolloutConfig, setup: &RolloutSetup, hv: Option<&'a HvModel>, record: bool) -> Result<Self> {
        setup.controllers.validate()?;
        let mut world = init_ring(config)?;
        let rv_ids = world.rv_ids();
        let rv_kind = match (rv_ids.is_empty(), setup.rv_controller) {
            (true, _) => ControllerKind::Idm,
            (false, Some(k)) => k,
            (false, None) => {
                return Err(Error::config("robot vehicles present but no rv controller bound"));
            }
        };
        let controllers = world
            .vehicles
            .iter_mut()
            .map(|v| {
                let kind = if v.role == Role::Robot { rv_kind } else { ControllerKind::Idm };
                v.controller = kind;
                Controller::new(kind)
            })
            .collect();

        let mut warnings = Vec::new();
        let mut perturb = Vec::with_capacity(world.n());
        if let Some([start, end]) = config.perturbation_window {
            let model = hv.ok_or_else(|| Error::config("perturbation window set but no human-driver model"))?;
            for v in &world.vehicles {
                if v.role == Role::Robot {
                    perturb.push(None);
                    continue;
                }
                let mut rng = vehicle_rng(config.seed, v.id);
                let schedule = sample_schedule(&mut rng, v.id, end - start, config.dt, &model.params);
                if let Some(w) = schedule.warning {
                    warnings.push(w);
                }
                perturb.push(Some(VehiclePerturbations {
                    rng,
                    pending: schedule.start_steps.iter().map(|s| start + s).collect(),
                }));
            }
        } else {
            perturb.resize_with(world.n(), || None);
        }

        let log = record.then(|| TrajectoryLog::new(&world, rv_ids.clone(), config.perturbation_window));
        Ok(Self {
            world,
            config: config.clone(),
            setup: setup.clone(),
            controllers,
            hv,
            perturb,
            events: Vec::new(),
            warnings,
            rv_ids,
            log,
        })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn config(&self) -> &RolloutConfig {
        &self.config
    }

    pub fn rv_ids(&self) -> &[usize] {
        &self.rv_ids
    }

    pub fn controls_active(&self) -> bool {
        self.world.step_count >= self.config.warmup_steps
    }

    pub fn done(&self) -> bool {
        self.world.step_count >= self.config.horizon_steps
    }

    pub fn rv_controller(&self) -> Option<ControllerKind> {
        self.rv_ids.first().map(|&i| self.controllers[i].kind())
    }

    /// Advance one step. `external` supplies one acceleration per robot vehicle
    /// when those are externally driven and control is active.
    pub fn advance(&mut self, external: Option<&[f64]>) -> Result<StepInfo> {
        let k = self.world.step_count;
        let n = self.world.n();
        let active = self.controls_active();
        let mean_speed = self.world.mean_speed();
        let params = &self.setup.controllers;

        let mut accel = vec![0.0; n];
        for i in 0..n {
            let nb = self.world.neighborhood(i);
            let ctl = &mut self.controllers[i];
            ctl.observe_network_speed(mean_speed, params);
            let is_rv = self.world.vehicles[i].role == Role::Robot;
            accel[i] = if is_rv && active {
                match ctl.accel(&nb, params) {
                    Some(a) => a,
                    None => {
                        let ext = external.ok_or_else(|| Error::config("externally driven robot vehicles need actions"))?;
                        if ext.len() != self.rv_ids.len() {
                            return Err(Error::Dimension {
                                expected: self.rv_ids.len(),
                                actual: ext.len(),
                            });
                        }
                        let slot = self.rv_ids.iter().position(|&r| r == i).unwrap_or(0);
                        ext[slot]
                    }
                }
            } else {
                Controller::Idm.accel(&nb, params).unwrap_or(0.0)
            };
        }

        let mut perturbed = vec![false; n];
        if let (Some([start, end]), Some(model)) = (self.config.perturbation_window, self.hv) {
            for i in 0..n {
                let Some(state) = self.perturb[i].as_mut() else { continue };
                if k >= start && k < end && state.pending.front() == Some(&k) {
                    state.pending.pop_front();
                    let lead = self.world.leader_of(i);
                    let ev = fire_event(
                        &mut state.rng,
                        model,
                        i,
                        k,
                        self.world.headway(i),
                        self.world.vehicles[i].velocity,
                        self.world.vehicles[lead].velocity,
                        self.config.dt,
                    )?;
                    self.events.push(ev.clone());
                    self.world.vehicles[i].active_perturbation = Some(ev);
                }
                let veh = &mut self.world.vehicles[i];
                match &veh.active_perturbation {
                    Some(ev) if ev.is_active(k) && k < end => {
                        accel[i] = ev.intensity;
                        perturbed[i] = true;
                    }
                    Some(_) => veh.active_perturbation = None,
                    None => {}
                }
            }
        }

        if let Some(log) = self.log.as_mut() {
            for i in 0..n {
                let label = if self.setup.skip_labels {
                    CongestionLabel::Undefined
                } else {
                    let snap = SensingSnapshot::from_world(&self.world, i, &self.setup.label_rules);
                    label_snapshot(&snap, self.world.speed_limit, &self.setup.label_rules)
                };
                let v = &self.world.vehicles[i];
                log.rows.push(LogRow {
                    step: k,
                    id: i,
                    pos_m: v.position,
                    vel_mps: v.velocity,
                    acc_mps2: accel[i].clamp(-ACCEL_BOUND, ACCEL_BOUND),
                    headway_m: self.world.headway(i),
                    label,
                    perturbed: perturbed[i],
                });
            }
        }

        let clipped = step(&mut self.world, &accel)?;
        Ok(StepInfo { step: k, clipped })
    }

    pub fn finish(self) -> RolloutOutput {
        RolloutOutput {
            log: self.log,
            events: self.events,
            warnings: self.warnings,
            collision: self.world.collision,
            collision_events: self.world.collision_events,
            final_world: self.world,
        }
    }
}

/// Run a full rollout from a fresh ring. `policy` drives externally controlled RVs.
pub fn run_rollout(
    config: &RolloutConfig,
    setup: &RolloutSetup,
    hv: Option<&HvModel>,
    mut policy: Option<&mut dyn RvPolicy>,
) -> Result<RolloutOutput> {
    let mut sim = Simulation::new(config, setup, hv, true)?;
    while !sim.done() {
        let actions = if sim.controls_active() && sim.rv_controller() == Some(ControllerKind::External) {
            let p = policy
                .as_deref_mut()
                .ok_or_else(|| Error::config("external rv controller requires a policy"))?;
            Some(p.act(sim.world(), sim.rv_ids())?)
        } else {
            None
        };
        sim.advance(actions.as_deref())?;
    }
    Ok(sim.finish())
}
