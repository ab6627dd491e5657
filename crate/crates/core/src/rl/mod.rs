//! Robot-vehicle learning: observations, rewards, platoons, GAE and PPO.

mod env;
mod gae;
mod platoon;
mod policy;
mod ppo;
mod reward;

pub use env::{
    follower_observation, observe, LearnedRvPolicy, Observation, RingEnv, RingEnvConfig, TrainRole, FOLLOWER_OBS_DIM,
    LEADER_OBS_DIM,
};
pub use gae::gae;
pub use platoon::{platoon_assign, PlatoonAssignment, MAX_PLATOON};
pub use policy::{gaussian_entropy, gaussian_kl, gaussian_log_prob, GaussianPolicy};
pub use ppo::{ppo_train, ppo_train_from, write_curve_csv, Env, IterationStats, PpoConfig, PpoOutcome, ToyEnv, Transition, CURVE_HEADER};
pub use reward::{
    reward_efficiency, reward_follower, reward_safety, EfficiencyParams, FollowerParams, RewardKind, RewardParams,
    SafetyParams,
};
