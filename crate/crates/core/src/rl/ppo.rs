//! Clipped-surrogate PPO for a scalar Gaussian action shared by all agents of an environment.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gae::gae;
use super::policy::{gaussian_entropy, gaussian_kl, gaussian_log_prob, GaussianPolicy};
use crate::nn::{Adam, Gradients, Mlp, OutputActivation, Standardizer};
use crate::{Error, Result, ACCEL_BOUND};

/// One transition of a (possibly multi-agent) environment.
#[derive(Clone, Debug)]
pub struct Transition {
    /// Next observation per agent.
    pub obs: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    /// The episode is over.
    pub done: bool,
    /// It ended in a terminal state (no bootstrapping), rather than by truncation.
    pub terminated: bool,
}

pub trait Env {
    fn obs_dim(&self) -> usize;
    /// Fixed input scaling baked into the policy.
    fn obs_scale(&self) -> Standardizer;
    /// Start an episode; returns one observation per agent.
    fn reset(&mut self, seed: u64) -> Result<Vec<Vec<f64>>>;
    /// One action per agent; environments clamp to the action bound.
    fn step(&mut self, actions: &[f64]) -> Result<Transition>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub learning_rate: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub clip_ratio: f64,
    pub kl_target: f64,
    pub entropy_coef_start: f64,
    pub entropy_coef_end: f64,
    pub value_clip: f64,
    pub value_coef: f64,
    pub sgd_iterations: usize,
    pub minibatch_size: usize,
    pub episodes_per_iteration: usize,
    pub iterations: usize,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    pub normalize_advantages: bool,
    /// Multiplies rewards before advantage estimation; reported rewards are unscaled.
    pub reward_scale: f64,
    pub max_grad_norm: Option<f64>,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-5,
            gamma: 0.999,
            lambda: 0.97,
            clip_ratio: 0.2,
            kl_target: 0.02,
            entropy_coef_start: 0.1,
            entropy_coef_end: 0.01,
            value_clip: 20.0,
            value_coef: 1.0,
            sgd_iterations: 2,
            minibatch_size: 128,
            episodes_per_iteration: 4,
            iterations: 200,
            hidden: vec![64, 32, 16],
            init_log_std: 0.0,
            normalize_advantages: true,
            reward_scale: 1.0,
            max_grad_norm: None,
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::config("gamma and lambda must lie in (0, 1]"));
        }
        if !(self.learning_rate > 0.0) || !(self.clip_ratio > 0.0) || !(self.reward_scale > 0.0) {
            return Err(Error::config("learning_rate, clip_ratio and reward_scale must be positive"));
        }
        if self.sgd_iterations == 0 || self.minibatch_size == 0 || self.episodes_per_iteration == 0 || self.iterations == 0 {
            return Err(Error::config("PPO counts must be positive"));
        }
        Ok(())
    }

    /// Linear anneal from start to end across the run.
    pub fn entropy_coef(&self, iteration: usize) -> f64 {
        if self.iterations <= 1 {
            return self.entropy_coef_start;
        }
        let f = iteration as f64 / (self.iterations - 1) as f64;
        self.entropy_coef_start + (self.entropy_coef_end - self.entropy_coef_start) * f.min(1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    /// Mean over episodes of the per-agent undiscounted return.
    pub mean_reward: f64,
    pub kl: f64,
    pub entropy_coef: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub log_std: f64,
    pub epochs_run: usize,
    pub samples: usize,
}

pub const CURVE_HEADER: [&str; 4] = ["iteration", "mean_reward", "kl", "entropy_coef"];

pub fn write_curve_csv<W: Write>(out: W, curve: &[IterationStats]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CURVE_HEADER)?;
    for s in curve {
        w.write_record([
            s.iteration.to_string(),
            s.mean_reward.to_string(),
            s.kl.to_string(),
            s.entropy_coef.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub struct PpoOutcome {
    pub policy: GaussianPolicy,
    pub value: Mlp,
    pub curve: Vec<IterationStats>,
}

struct Sample {
    x: Vec<f64>,
    action: f64,
    logp: f64,
    mu: f64,
    value: f64,
    adv: f64,
    ret: f64,
}

fn value_of(v: &Mlp, x: &[f64]) -> Result<f64> {
    Ok(v.forward(x)?[0])
}

/// Gather `episodes` episodes with the stochastic policy. Returns samples and episode returns.
fn collect<E: Env>(
    env: &mut E,
    policy: &GaussianPolicy,
    value: &Mlp,
    cfg: &PpoConfig,
    seed_base: u64,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Sample>, Vec<f64>)> {
    let mut samples = Vec::new();
    let mut returns = Vec::new();
    let sigma = policy.log_std.exp();
    for ep in 0..cfg.episodes_per_iteration {
        let mut obs = env.reset(seed_base + ep as u64)?;
        let n_agents = obs.len();
        if n_agents == 0 {
            return Err(Error::config("environment exposes no agents"));
        }
        let mut traj: Vec<Vec<Sample>> = (0..n_agents).map(|_| Vec::new()).collect();
        let mut rewards: Vec<Vec<f64>> = vec![Vec::new(); n_agents];
        let (bootstrap, last_obs) = loop {
            let mut actions = Vec::with_capacity(n_agents);
            for (agent, o) in obs.iter().enumerate() {
                let x = policy.normalize(o);
                let mu = policy.mean.forward(&x)?[0];
                let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
                let a = mu + sigma * z;
                let v = value_of(value, &x)?;
                if !mu.is_finite() || !v.is_finite() {
                    return Err(Error::NonFinite("policy or value output during collection"));
                }
                traj[agent].push(Sample {
                    x,
                    action: a,
                    logp: gaussian_log_prob(a, mu, policy.log_std),
                    mu,
                    value: v,
                    adv: 0.0,
                    ret: 0.0,
                });
                actions.push(a.clamp(-ACCEL_BOUND, ACCEL_BOUND));
            }
            let tr = env.step(&actions)?;
            if tr.rewards.len() != n_agents || (!tr.done && tr.obs.len() != n_agents) {
                return Err(Error::config("environment changed its agent count mid-episode"));
            }
            for (r, &x) in rewards.iter_mut().zip(&tr.rewards) {
                r.push(x);
            }
            if tr.done {
                break (!tr.terminated, tr.obs);
            }
            obs = tr.obs;
        };
        let mut total = 0.0;
        for (agent, (mut t, r)) in traj.into_iter().zip(rewards).enumerate() {
            total += r.iter().sum::<f64>();
            let boot = match (bootstrap, last_obs.get(agent)) {
                (true, Some(o)) => value_of(value, &policy.normalize(o))?,
                _ => 0.0,
            };
            let scaled: Vec<f64> = r.iter().map(|x| x * cfg.reward_scale).collect();
            let values: Vec<f64> = t.iter().map(|s| s.value).collect();
            let (adv, ret) = gae(&scaled, &values, boot, cfg.gamma, cfg.lambda);
            for ((s, a), g) in t.iter_mut().zip(adv).zip(ret) {
                s.adv = a;
                s.ret = g;
            }
            samples.extend(t);
        }
        returns.push(total / n_agents as f64);
    }
    Ok((samples, returns))
}

/// Losses and gradients of one minibatch. Returns (policy loss, value loss).
#[allow(clippy::too_many_arguments)]
fn minibatch_grads(
    batch: &[&Sample],
    policy: &GaussianPolicy,
    value: &Mlp,
    cfg: &PpoConfig,
    entropy_coef: f64,
    gp: &mut Gradients,
    g_log_std: &mut f64,
    gv: &mut Gradients,
) -> Result<(f64, f64)> {
    let n = batch.len() as f64;
    let var = (2.0 * policy.log_std).exp();
    let eps = cfg.clip_ratio;
    let mut p_loss = 0.0;
    let mut v_loss = 0.0;
    for s in batch {
        let trace = policy.mean.forward_trace(&s.x)?;
        let mu = trace.logits()[0];
        let logp = gaussian_log_prob(s.action, mu, policy.log_std);
        let ratio = (logp - s.logp).exp();
        let unclipped = ratio * s.adv;
        let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * s.adv;
        p_loss -= unclipped.min(clipped) / n;
        // the clipped branch is flat in the parameters
        if unclipped <= clipped {
            let k = -s.adv * ratio / n;
            let d = s.action - mu;
            policy.mean.backward(&trace, &[k * d / var], gp);
            *g_log_std += k * (d * d / var - 1.0);
        }

        let vt = value.forward_trace(&s.x)?;
        let v = vt.logits()[0];
        let dv = (v - s.value).clamp(-cfg.value_clip, cfg.value_clip);
        let v_clipped = s.value + dv;
        let l1 = (v - s.ret).powi(2);
        let l2 = (v_clipped - s.ret).powi(2);
        let grad_v = if l1 >= l2 {
            v - s.ret
        } else if (v - s.value).abs() < cfg.value_clip {
            v_clipped - s.ret
        } else {
            0.0
        };
        v_loss += 0.5 * l1.max(l2) / n;
        value.backward(&vt, &[cfg.value_coef * grad_v / n], gv);
    }
    p_loss -= entropy_coef * gaussian_entropy(policy.log_std);
    *g_log_std -= entropy_coef;
    if !p_loss.is_finite() || !v_loss.is_finite() {
        return Err(Error::NonFinite("PPO loss"));
    }
    Ok((p_loss, v_loss))
}

/// Train a policy and value network with PPO. `on_iteration` sees each iteration's stats.
pub fn ppo_train<E, F>(env: &mut E, cfg: &PpoConfig, on_iteration: F) -> Result<PpoOutcome>
where
    E: Env,
    F: FnMut(&IterationStats),
{
    ppo_train_from(env, cfg, None, on_iteration)
}

/// As [`ppo_train`], optionally continuing from an existing policy.
pub fn ppo_train_from<E, F>(env: &mut E, cfg: &PpoConfig, initial: Option<GaussianPolicy>, mut on_iteration: F) -> Result<PpoOutcome>
where
    E: Env,
    F: FnMut(&IterationStats),
{
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let norm = env.obs_scale();
    if norm.mean.len() != env.obs_dim() {
        return Err(Error::Dimension {
            expected: env.obs_dim(),
            actual: norm.mean.len(),
        });
    }
    let fresh = GaussianPolicy::new(&cfg.hidden, norm, cfg.init_log_std, &mut rng)?;
    let mut policy = match initial {
        Some(p) if p.obs_dim() != env.obs_dim() => {
            return Err(Error::Dimension {
                expected: env.obs_dim(),
                actual: p.obs_dim(),
            });
        }
        Some(p) => p,
        None => fresh,
    };
    let mut vsizes = vec![env.obs_dim()];
    vsizes.extend_from_slice(&cfg.hidden);
    vsizes.push(1);
    let mut value = Mlp::new(&vsizes, OutputActivation::Identity, &mut rng)?;

    let mut adam_p = Adam::new(policy.mean.param_count(), cfg.learning_rate);
    let mut adam_s = Adam::new(1, cfg.learning_rate);
    let mut adam_v = Adam::new(value.param_count(), cfg.learning_rate);
    let mut curve = Vec::with_capacity(cfg.iterations);

    for it in 0..cfg.iterations {
        let seed_base = cfg
            .seed
            .wrapping_mul(1_000_003)
            .wrapping_add((it * cfg.episodes_per_iteration) as u64);
        let (mut samples, returns) = collect(env, &policy, &value, cfg, seed_base, &mut rng)?;
        if samples.is_empty() {
            return Err(Error::Dataset("PPO collected no samples".into()));
        }
        if cfg.normalize_advantages && samples.len() > 1 {
            let n = samples.len() as f64;
            let m = samples.iter().map(|s| s.adv).sum::<f64>() / n;
            let sd = (samples.iter().map(|s| (s.adv - m).powi(2)).sum::<f64>() / n).sqrt();
            for s in &mut samples {
                s.adv = (s.adv - m) / (sd + 1e-8);
            }
        }

        let old_log_std = policy.log_std;
        let entropy_coef = cfg.entropy_coef(it);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let (mut p_loss, mut v_loss, mut kl) = (0.0, 0.0, 0.0);
        let mut epochs_run = 0;
        for _ in 0..cfg.sgd_iterations {
            order.shuffle(&mut rng);
            let (mut pl, mut vl, mut nb) = (0.0, 0.0, 0);
            for chunk in order.chunks(cfg.minibatch_size) {
                let batch: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
                let mut gp = Gradients::zeros_like(&policy.mean);
                let mut gv = Gradients::zeros_like(&value);
                let mut g_log_std = 0.0;
                let (a, b) = minibatch_grads(&batch, &policy, &value, cfg, entropy_coef, &mut gp, &mut g_log_std, &mut gv)
                    .map_err(|e| {
                        log::error!(
                            "PPO iteration {it}: {e}; log_std {:.4}, samples {}",
                            policy.log_std,
                            samples.len()
                        );
                        e
                    })?;
                if let Some(max) = cfg.max_grad_norm {
                    gp.clip_norm(max);
                    gv.clip_norm(max);
                }
                adam_p.step(policy.mean.params_mut(), &gp.0)?;
                let mut ls = [policy.log_std];
                adam_s.step(&mut ls, &[g_log_std])?;
                policy.log_std = ls[0];
                adam_v.step(value.params_mut(), &gv.0)?;
                pl += a;
                vl += b;
                nb += 1;
            }
            epochs_run += 1;
            p_loss = pl / nb as f64;
            v_loss = vl / nb as f64;
            kl = 0.0;
            for s in &samples {
                let mu = policy.mean.forward(&s.x)?[0];
                kl += gaussian_kl(s.mu, old_log_std, mu, policy.log_std);
            }
            kl /= samples.len() as f64;
            if !kl.is_finite() {
                return Err(Error::NonFinite("approximate KL"));
            }
            if kl > cfg.kl_target {
                break;
            }
        }

        let stats = IterationStats {
            iteration: it,
            mean_reward: returns.iter().sum::<f64>() / returns.len() as f64,
            kl,
            entropy_coef,
            policy_loss: p_loss,
            value_loss: v_loss,
            log_std: policy.log_std,
            epochs_run,
            samples: samples.len(),
        };
        log::debug!(
            "iteration {it}: reward {:.3} kl {:.5} log_std {:.3}",
            stats.mean_reward,
            stats.kl,
            stats.log_std
        );
        on_iteration(&stats);
        curve.push(stats);
    }
    Ok(PpoOutcome { policy, value, curve })
}

/// Single-agent bandit-like task: uniform random observations, reward `-a²`.
pub struct ToyEnv {
    pub obs_dim: usize,
    pub episode_len: usize,
    rng: ChaCha8Rng,
    t: usize,
}

impl ToyEnv {
    pub fn new(obs_dim: usize, episode_len: usize) -> Self {
        Self {
            obs_dim,
            episode_len,
            rng: ChaCha8Rng::seed_from_u64(0),
            t: 0,
        }
    }

    fn draw(&mut self) -> Vec<f64> {
        (0..self.obs_dim).map(|_| self.rng.random_range(-1.0..1.0)).collect()
    }
}

impl Env for ToyEnv {
    fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    fn obs_scale(&self) -> Standardizer {
        Standardizer::identity(self.obs_dim)
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<Vec<f64>>> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.t = 0;
        Ok(vec![self.draw()])
    }

    fn step(&mut self, actions: &[f64]) -> Result<Transition> {
        let a = actions
            .first()
            .copied()
            .ok_or(Error::Dimension { expected: 1, actual: 0 })?
            .clamp(-ACCEL_BOUND, ACCEL_BOUND);
        self.t += 1;
        let done = self.t >= self.episode_len;
        Ok(Transition {
            obs: vec![self.draw()],
            rewards: vec![-a * a],
            done,
            terminated: done,
        })
    }
}
