//! Ring-road environment for robot-vehicle policies.

use serde::{Deserialize, Serialize};

use super::platoon::{platoon_assign, PlatoonAssignment, MAX_PLATOON};
use super::policy::GaussianPolicy;
use super::ppo::{Env, Transition};
use super::reward::{reward_efficiency, reward_follower, reward_safety, RewardKind, RewardParams};
use crate::congestion::{CongestionLabel, Labeler, N_CLASSES};
use crate::controllers::{ControllerKind, ControllerParams};
use crate::human::HvModel;
use crate::nn::Standardizer;
use crate::sim::{RolloutConfig, RolloutSetup, RvPolicy, Simulation, World};
use crate::{Error, Result, ACCEL_BOUND};

pub const LEADER_OBS_DIM: usize = 3 + N_CLASSES;
pub const FOLLOWER_OBS_DIM: usize = 3 + 2 * MAX_PLATOON;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub v: f64,
    /// Bumper gap to the immediate leader, m.
    pub dp: f64,
    /// Leader speed minus own speed, m/s.
    pub dv: f64,
    pub label: CongestionLabel,
}

impl Observation {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut o = vec![self.v, self.dp, self.dv];
        o.extend_from_slice(&self.label.one_hot());
        o
    }
}

pub fn observe(world: &World, rv_id: usize, labeler: &Labeler) -> Observation {
    let lead = world.leader_of(rv_id);
    Observation {
        v: world.vehicles[rv_id].velocity,
        dp: world.headway(rv_id),
        dv: world.vehicles[lead].velocity - world.vehicles[rv_id].velocity,
        label: labeler.label(world, rv_id),
    }
}

/// Own `(v, gap, Δv)` followed by signed offset and speed of every platoon member, zero padded.
pub fn follower_observation(world: &World, rv_id: usize, platoon: &PlatoonAssignment) -> Vec<f64> {
    let me = &world.vehicles[rv_id];
    let lead = world.leader_of(rv_id);
    let mut o = vec![me.velocity, world.headway(rv_id), world.vehicles[lead].velocity - me.velocity];
    let l = world.ring_length;
    for &k in std::iter::once(&platoon.leader).chain(&platoon.followers).take(MAX_PLATOON) {
        let other = &world.vehicles[k];
        let offset = (other.position - me.position + l / 2.0).rem_euclid(l) - l / 2.0;
        o.push(offset);
        o.push(other.velocity);
    }
    o.resize(FOLLOWER_OBS_DIM, 0.0);
    o
}

fn leader_scale() -> Standardizer {
    let mut std = vec![10.0, 20.0, 5.0];
    std.extend([1.0; N_CLASSES]);
    Standardizer {
        mean: vec![0.0; LEADER_OBS_DIM],
        std,
    }
}

fn follower_scale() -> Standardizer {
    let mut std = vec![10.0, 20.0, 5.0];
    for _ in 0..MAX_PLATOON {
        std.extend([50.0, 10.0]);
    }
    Standardizer {
        mean: vec![0.0; FOLLOWER_OBS_DIM],
        std,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainRole {
    /// The single robot vehicle of a low-penetration ring.
    Leader,
    /// Platoon followers behind a frozen leader policy.
    Followers,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RingEnvConfig {
    pub rollout: RolloutConfig,
    pub reward: RewardKind,
    pub role: TrainRole,
    /// Controlled steps per episode after warmup.
    pub episode_steps: u64,
    pub rewards: RewardParams,
    /// End the episode when a step clips a vehicle to contact.
    pub terminate_on_collision: bool,
    pub controllers: ControllerParams,
}

impl Default for RingEnvConfig {
    fn default() -> Self {
        Self {
            rollout: RolloutConfig {
                rv_penetration: 0.05,
                ..Default::default()
            },
            reward: RewardKind::Efficiency,
            role: TrainRole::Leader,
            episode_steps: 1500,
            rewards: RewardParams::default(),
            terminate_on_collision: false,
            controllers: ControllerParams::default(),
        }
    }
}

pub struct RingEnv<'a> {
    cfg: RingEnvConfig,
    labeler: Labeler,
    hv: Option<&'a HvModel>,
    frozen_leader: Option<GaussianPolicy>,
    platoon: PlatoonAssignment,
    sim: Option<Simulation<'a>>,
    steps: u64,
    labels: Vec<CongestionLabel>,
}

impl<'a> RingEnv<'a> {
    pub fn new(cfg: RingEnvConfig, labeler: Labeler, hv: Option<&'a HvModel>, frozen_leader: Option<GaussianPolicy>) -> Result<Self> {
        cfg.rollout.validate()?;
        if cfg.episode_steps == 0 {
            return Err(Error::config("episode_steps must be positive"));
        }
        let platoon = platoon_assign(cfg.rollout.n_vehicles, cfg.rollout.rv_penetration)?;
        match cfg.role {
            TrainRole::Leader if !platoon.followers.is_empty() => {
                return Err(Error::config("leader training expects a single robot vehicle"));
            }
            TrainRole::Followers if platoon.followers.is_empty() => {
                return Err(Error::config("follower training needs at least two robot vehicles"));
            }
            TrainRole::Followers if frozen_leader.is_none() => {
                return Err(Error::config("follower training needs a frozen leader policy"));
            }
            _ => {}
        }
        if platoon.n_rv > MAX_PLATOON + 1 {
            return Err(Error::config(format!("platoons above {} vehicles are not supported", MAX_PLATOON + 1)));
        }
        Ok(Self {
            cfg,
            labeler,
            hv,
            frozen_leader,
            platoon,
            sim: None,
            steps: 0,
            labels: Vec::new(),
        })
    }

    pub fn platoon(&self) -> &PlatoonAssignment {
        &self.platoon
    }

    fn agents(&self) -> Vec<usize> {
        match self.cfg.role {
            TrainRole::Leader => vec![self.platoon.leader],
            TrainRole::Followers => self.platoon.followers.clone(),
        }
    }

    fn observations(&mut self) -> Vec<Vec<f64>> {
        let sim = self.sim.as_ref().expect("reset before stepping");
        let world = sim.world();
        match self.cfg.role {
            TrainRole::Leader => {
                let o = observe(world, self.platoon.leader, &self.labeler);
                self.labels = vec![o.label];
                vec![o.to_vec()]
            }
            TrainRole::Followers => self
                .platoon
                .followers
                .iter()
                .map(|&f| follower_observation(world, f, &self.platoon))
                .collect(),
        }
    }
}

impl Env for RingEnv<'_> {
    fn obs_dim(&self) -> usize {
        match self.cfg.role {
            TrainRole::Leader => LEADER_OBS_DIM,
            TrainRole::Followers => FOLLOWER_OBS_DIM,
        }
    }

    fn obs_scale(&self) -> Standardizer {
        match self.cfg.role {
            TrainRole::Leader => leader_scale(),
            TrainRole::Followers => follower_scale(),
        }
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<Vec<f64>>> {
        let mut rollout = self.cfg.rollout.clone();
        rollout.seed = seed;
        rollout.horizon_steps = rollout.warmup_steps + self.cfg.episode_steps;
        if let Some([a, b]) = rollout.perturbation_window {
            rollout.perturbation_window = Some([a.min(rollout.horizon_steps - 1), b.min(rollout.horizon_steps)]);
        }
        let setup = RolloutSetup {
            controllers: self.cfg.controllers.clone(),
            rv_controller: Some(ControllerKind::External),
            skip_labels: true,
            ..Default::default()
        };
        let mut sim = Simulation::new(&rollout, &setup, self.hv, false)?;
        while !sim.controls_active() {
            sim.advance(None)?;
        }
        self.sim = Some(sim);
        self.steps = 0;
        Ok(self.observations())
    }

    fn step(&mut self, actions: &[f64]) -> Result<Transition> {
        let agents = self.agents();
        if actions.len() != agents.len() {
            return Err(Error::Dimension {
                expected: agents.len(),
                actual: actions.len(),
            });
        }
        let sim = self.sim.as_mut().ok_or_else(|| Error::config("step called before reset"))?;
        let world = sim.world();
        let mut applied = vec![0.0; world.n()];
        let leader_action = match self.cfg.role {
            TrainRole::Leader => actions[0],
            TrainRole::Followers => {
                let policy = self.frozen_leader.as_ref().expect("checked in new");
                policy.act(&observe(world, self.platoon.leader, &self.labeler).to_vec())?
            }
        };
        applied[self.platoon.leader] = leader_action.clamp(-ACCEL_BOUND, ACCEL_BOUND);
        if self.cfg.role == TrainRole::Followers {
            for (&f, &a) in self.platoon.followers.iter().zip(actions) {
                applied[f] = a.clamp(-ACCEL_BOUND, ACCEL_BOUND);
            }
        }
        let external: Vec<f64> = sim.rv_ids().iter().map(|&i| applied[i]).collect();
        let info = sim.advance(Some(&external))?;
        self.steps += 1;

        let world = sim.world();
        let rewards: Vec<f64> = match self.cfg.role {
            TrainRole::Leader => {
                let id = self.platoon.leader;
                let a = applied[id];
                let label = self.labels.first().copied().unwrap_or(CongestionLabel::Undefined);
                vec![match self.cfg.reward {
                    RewardKind::Efficiency => {
                        reward_efficiency(world.vehicles[id].velocity, a, label, &self.cfg.rewards.efficiency)
                    }
                    RewardKind::Safety => reward_safety(world.mean_speed(), a, label, &self.cfg.rewards.safety),
                }]
            }
            TrainRole::Followers => self
                .platoon
                .followers
                .iter()
                .map(|&f| {
                    let lead = world.leader_of(f);
                    let dv = world.vehicles[f].velocity - world.vehicles[lead].velocity;
                    reward_follower(world.headway(f), dv, applied[f], &self.cfg.rewards.follower)
                })
                .collect(),
        };
        let terminated = info.clipped && self.cfg.terminate_on_collision;
        let done = terminated || sim.done() || self.steps >= self.cfg.episode_steps;
        Ok(Transition {
            obs: self.observations(),
            rewards,
            done,
            terminated,
        })
    }
}

/// Deployed learned controllers for the robot vehicles of a rollout.
#[derive(Clone, Debug)]
pub struct LearnedRvPolicy {
    pub leader: GaussianPolicy,
    pub follower: Option<GaussianPolicy>,
    pub labeler: Labeler,
    pub platoon: PlatoonAssignment,
}

impl RvPolicy for LearnedRvPolicy {
    fn act(&mut self, world: &World, rv_ids: &[usize]) -> Result<Vec<f64>> {
        rv_ids
            .iter()
            .map(|&id| {
                if id == self.platoon.leader {
                    self.leader.act(&observe(world, id, &self.labeler).to_vec())
                } else {
                    let f = self
                        .follower
                        .as_ref()
                        .ok_or_else(|| Error::config("platoon followers need a follower policy"))?;
                    f.act(&follower_observation(world, id, &self.platoon))
                }
            })
            .collect()
    }
}
