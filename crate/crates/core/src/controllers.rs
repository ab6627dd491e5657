//! Longitudinal control laws.
//!
//! Every law here is a pure function of local kinematics except PIwS and
//! LACC, whose per-vehicle memory lives in [`PiwsState`] and [`LaccState`].
//! Velocity-commanding laws (FollowerStopper, PIwS) are turned into an
//! acceleration by [`velocity_tracking_accel`].

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, ACCEL_BOUND};

/// Braking floor for degenerate (zero or negative) gaps, m/s².
pub const EMERGENCY_DECEL: f64 = 5.0;

/// Clamp a raw controller output into `[-EMERGENCY_DECEL, ACCEL_BOUND]`.
#[inline]
pub fn clamp_controller_output(a: f64) -> f64 {
    a.clamp(-EMERGENCY_DECEL, ACCEL_BOUND)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Idm,
    FollowerStopper,
    Piws,
    Bcm,
    Lacc,
    /// Acceleration supplied from outside the controller layer (a learned policy).
    External,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Idm => "idm",
            ControllerKind::FollowerStopper => "follower_stopper",
            ControllerKind::Piws => "piws",
            ControllerKind::Bcm => "bcm",
            ControllerKind::Lacc => "lacc",
            ControllerKind::External => "external",
        }
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "idm" => ControllerKind::Idm,
            "follower_stopper" | "fs" => ControllerKind::FollowerStopper,
            "piws" => ControllerKind::Piws,
            "bcm" => ControllerKind::Bcm,
            "lacc" => ControllerKind::Lacc,
            "external" | "rl" => ControllerKind::External,
            other => return Err(Error::config(format!("unknown controller `{other}`"))),
        })
    }
}

// ---------------------------------------------------------------------------
// IDM

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdmParams {
    pub a_max: f64,
    pub b_comf: f64,
    pub time_headway: f64,
    pub delta: f64,
    pub s0: f64,
    pub v_des: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            a_max: 1.0,
            b_comf: 1.5,
            time_headway: 1.0,
            delta: 4.0,
            s0: 2.0,
            v_des: 30.0,
        }
    }
}

impl IdmParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.a_max, self.b_comf, self.time_headway, self.delta, self.s0, self.v_des];
        if positive.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(Error::config("IDM parameters must be positive and finite"));
        }
        if self.delta < 1.0 {
            return Err(Error::config("IDM delta must be >= 1"));
        }
        Ok(())
    }

    /// Desired dynamic gap `s*`.
    pub fn desired_gap(&self, v: f64, v_lead: f64) -> f64 {
        let dv = v - v_lead;
        let dynamic = v * self.time_headway + v * dv / (2.0 * (self.a_max * self.b_comf).sqrt());
        self.s0 + dynamic.max(0.0)
    }
}

/// Intelligent Driver Model acceleration for bumper gap `gap`.
pub fn idm_accel(v: f64, gap: f64, v_lead: f64, p: &IdmParams) -> f64 {
    if gap <= 0.0 {
        return -EMERGENCY_DECEL;
    }
    let free = (v / p.v_des).powf(p.delta);
    let interaction = (p.desired_gap(v, v_lead) / gap).powi(2);
    clamp_controller_output(p.a_max * (1.0 - free - interaction))
}

// ---------------------------------------------------------------------------
// Velocity command to acceleration

/// Proportional velocity tracking `K (v_cmd - v)`, clamped to the action bound.
pub fn velocity_tracking_accel(v: f64, v_cmd: f64, gain: f64) -> f64 {
    (gain * (v_cmd - v)).clamp(-ACCEL_BOUND, ACCEL_BOUND)
}

pub const DEFAULT_TRACKING_GAIN: f64 = 2.0;

// ---------------------------------------------------------------------------
// FollowerStopper

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FsParams {
    /// Desired velocity `U`.
    pub desired_velocity: f64,
    /// Base offsets for the three switching thresholds, m.
    pub dx0: [f64; 3],
    /// Deceleration rates shaping the quadratic threshold growth, m/s².
    pub decel: [f64; 3],
}

impl Default for FsParams {
    fn default() -> Self {
        Self {
            desired_velocity: 4.0,
            dx0: [4.5, 5.25, 6.0],
            decel: [1.5, 1.0, 0.5],
        }
    }
}

impl FsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dx0[0] < self.dx0[1] && self.dx0[1] < self.dx0[2]) {
            return Err(Error::config("FollowerStopper dx0 must be strictly increasing"));
        }
        if self.decel.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::config("FollowerStopper decelerations must be positive"));
        }
        if !(self.desired_velocity > 0.0) {
            return Err(Error::config("FollowerStopper desired velocity must be positive"));
        }
        Ok(())
    }
}

/// Switching thresholds `dx_k = dx_k^0 + dv_minus^2 / (2 d_k)`.
///
/// `dv_minus` is the negative part of the leader-minus-ego velocity; any sign
/// is accepted since only its square enters.
pub fn fs_thresholds(p: &FsParams, dv_minus: f64) -> [f64; 3] {
    let q = dv_minus * dv_minus;
    std::array::from_fn(|k| p.dx0[k] + q / (2.0 * p.decel[k]))
}

/// Piecewise FollowerStopper command velocity.
pub fn fs_command_velocity(dx: f64, v_lead: f64, thresholds: &[f64; 3], u: f64) -> f64 {
    let v = v_lead.max(0.0).min(u);
    let [x1, x2, x3] = *thresholds;
    if dx <= x1 {
        0.0
    } else if dx <= x2 {
        v * (dx - x1) / (x2 - x1)
    } else if dx <= x3 {
        v + (u - v) * (dx - x2) / (x3 - x2)
    } else {
        u
    }
}

pub fn follower_stopper_accel(v: f64, gap: f64, v_lead: f64, p: &FsParams, gain: f64) -> f64 {
    let dv_minus = (v_lead - v).min(0.0);
    let th = fs_thresholds(p, dv_minus);
    let v_cmd = fs_command_velocity(gap, v_lead, &th, p.desired_velocity);
    velocity_tracking_accel(v, v_cmd, gain)
}

// ---------------------------------------------------------------------------
// PI with saturation

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PiwsParams {
    pub v_catch: f64,
    pub g_l: f64,
    pub g_u: f64,
    /// Steps of network-mean velocity history used to estimate `U`.
    pub history_window: usize,
    /// Weight of the fresh command against the previous one.
    pub beta: f64,
    /// Fixed target/leader blend weight; `None` uses the clamped gap ratio.
    pub alpha: Option<f64>,
}

impl Default for PiwsParams {
    fn default() -> Self {
        Self {
            v_catch: 1.0,
            g_l: 7.0,
            g_u: 30.0,
            history_window: 380,
            beta: 0.9,
            alpha: None,
        }
    }
}

impl PiwsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.g_l < self.g_u) {
            return Err(Error::config("PIwS requires g_l < g_u"));
        }
        if !(self.v_catch > 0.0) {
            return Err(Error::config("PIwS v_catch must be positive"));
        }
        if self.history_window == 0 {
            return Err(Error::config("PIwS history window must be at least one step"));
        }
        if !(0.0..=1.0).contains(&self.beta) || self.alpha.is_some_and(|a| !(0.0..=1.0).contains(&a)) {
            return Err(Error::config("PIwS blend weights must lie in [0, 1]"));
        }
        Ok(())
    }

    fn gap_ratio(&self, dx: f64) -> f64 {
        ((dx - self.g_l) / (self.g_u - self.g_l)).clamp(0.0, 1.0)
    }

    pub fn alpha_for(&self, dx: f64) -> f64 {
        self.alpha.unwrap_or_else(|| self.gap_ratio(dx))
    }
}

pub fn piws_target_velocity(dx: f64, u: f64, p: &PiwsParams) -> f64 {
    u + p.v_catch * p.gap_ratio(dx)
}

/// Next command velocity of the PIwS controller.
#[allow(clippy::too_many_arguments)]
pub fn piws_update(dx: f64, v_lead: f64, u_hist: f64, prev_cmd: f64, alpha: f64, beta: f64, p: &PiwsParams) -> f64 {
    let target = piws_target_velocity(dx, u_hist, p);
    beta * (alpha * target + (1.0 - alpha) * v_lead) + (1.0 - beta) * prev_cmd
}

/// Per-vehicle PIwS memory: trailing network-velocity history and last command.
#[derive(Clone, Debug, Default)]
pub struct PiwsState {
    history: VecDeque<f64>,
    sum: f64,
    v_cmd: Option<f64>,
}

impl PiwsState {
    pub fn observe_network_speed(&mut self, mean_speed: f64, window: usize) {
        self.history.push_back(mean_speed);
        self.sum += mean_speed;
        while self.history.len() > window {
            self.sum -= self.history.pop_front().unwrap_or(0.0);
        }
    }

    pub fn estimated_u(&self) -> f64 {
        if self.history.is_empty() {
            0.0
        } else {
            self.sum / self.history.len() as f64
        }
    }

    pub fn command(&self) -> Option<f64> {
        self.v_cmd
    }

    pub fn accel(&mut self, v: f64, gap: f64, v_lead: f64, p: &PiwsParams, gain: f64) -> f64 {
        let prev = self.v_cmd.unwrap_or(v);
        let alpha = p.alpha_for(gap);
        let cmd = piws_update(gap, v_lead, self.estimated_u(), prev, alpha, p.beta, p);
        self.v_cmd = Some(cmd);
        velocity_tracking_accel(v, cmd, gain)
    }
}

// ---------------------------------------------------------------------------
// Bilateral control

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcmParams {
    pub k_d: f64,
    pub k_v: f64,
    pub k_c: f64,
    pub v_des: f64,
}

impl Default for BcmParams {
    fn default() -> Self {
        Self {
            k_d: 1.0,
            k_v: 1.0,
            k_c: 1.0,
            v_des: 8.0,
        }
    }
}

impl BcmParams {
    pub fn validate(&self) -> Result<()> {
        if [self.k_d, self.k_v, self.k_c].iter().any(|k| !(*k > 0.0)) {
            return Err(Error::config("BCM gains must be positive"));
        }
        Ok(())
    }
}

/// Unclamped bilateral law.
///
/// `dd` is leader gap minus follower gap, `dv_l = v_lead - v`, `dv_f = v - v_follow`.
pub fn bcm_accel_raw(dd: f64, dv_l: f64, dv_f: f64, v: f64, p: &BcmParams) -> f64 {
    p.k_d * dd + p.k_v * (dv_l - dv_f) + p.k_c * (p.v_des - v)
}

pub fn bcm_accel(dd: f64, dv_l: f64, dv_f: f64, v: f64, p: &BcmParams) -> f64 {
    clamp_controller_output(bcm_accel_raw(dd, dv_l, dv_f, v, p))
}

// ---------------------------------------------------------------------------
// Linear ACC with first-order actuation lag

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaccParams {
    pub k1: f64,
    pub k2: f64,
    /// Desired time gap, s.
    pub h: f64,
    /// Actuation lag, s.
    pub tau: f64,
}

impl Default for LaccParams {
    fn default() -> Self {
        Self {
            k1: 0.3,
            k2: 0.4,
            h: 1.0,
            tau: 0.1,
        }
    }
}

impl LaccParams {
    pub fn validate(&self) -> Result<()> {
        if [self.k1, self.k2, self.h, self.tau].iter().any(|k| !(*k > 0.0)) {
            return Err(Error::config("LACC parameters must be positive"));
        }
        Ok(())
    }
}

/// `a_cmd = k1 (s - h v) + k2 dv_l`.
pub fn lacc_command(s: f64, v: f64, dv_l: f64, p: &LaccParams) -> f64 {
    p.k1 * (s - p.h * v) + p.k2 * dv_l
}

/// First-order lag `a_t = (1 - dt/tau) a_{t-1} + dt/tau a_cmd_{t-1}`.
pub fn lacc_accel(prev_a: f64, prev_cmd_a: f64, dt: f64, p: &LaccParams) -> f64 {
    let r = dt / p.tau;
    (1.0 - r) * prev_a + r * prev_cmd_a
}

#[derive(Clone, Debug, Default)]
pub struct LaccState {
    prev_accel: f64,
    prev_cmd: f64,
}

impl LaccState {
    pub fn accel(&mut self, s: f64, v: f64, dv_l: f64, dt: f64, p: &LaccParams) -> f64 {
        let a = clamp_controller_output(lacc_accel(self.prev_accel, self.prev_cmd, dt, p));
        self.prev_accel = a;
        self.prev_cmd = lacc_command(s, v, dv_l, p);
        a
    }
}

// ---------------------------------------------------------------------------
// Binding

/// Parameters for every controller family plus the tracking gain.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerParams {
    pub idm: IdmParams,
    pub fs: FsParams,
    pub piws: PiwsParams,
    pub bcm: BcmParams,
    pub lacc: LaccParams,
    pub tracking_gain: Option<f64>,
}

impl ControllerParams {
    pub fn validate(&self) -> Result<()> {
        self.idm.validate()?;
        self.fs.validate()?;
        self.piws.validate()?;
        self.bcm.validate()?;
        self.lacc.validate()?;
        if self.tracking_gain.is_some_and(|k| !(k > 0.0)) {
            return Err(Error::config("tracking gain must be positive"));
        }
        Ok(())
    }

    pub fn gain(&self) -> f64 {
        self.tracking_gain.unwrap_or(DEFAULT_TRACKING_GAIN)
    }
}

/// Kinematics a controller sees for one vehicle at one step.
#[derive(Clone, Copy, Debug)]
pub struct Neighborhood {
    pub v: f64,
    pub gap: f64,
    pub v_lead: f64,
    pub follower_gap: f64,
    pub v_follow: f64,
    pub dt: f64,
}

/// A controller together with whatever memory it carries.
#[derive(Clone, Debug)]
pub enum Controller {
    Idm,
    FollowerStopper,
    Piws(PiwsState),
    Bcm,
    Lacc(LaccState),
    External,
}

impl Controller {
    pub fn new(kind: ControllerKind) -> Self {
        match kind {
            ControllerKind::Idm => Controller::Idm,
            ControllerKind::FollowerStopper => Controller::FollowerStopper,
            ControllerKind::Piws => Controller::Piws(PiwsState::default()),
            ControllerKind::Bcm => Controller::Bcm,
            ControllerKind::Lacc => Controller::Lacc(LaccState::default()),
            ControllerKind::External => Controller::External,
        }
    }

    pub fn kind(&self) -> ControllerKind {
        match self {
            Controller::Idm => ControllerKind::Idm,
            Controller::FollowerStopper => ControllerKind::FollowerStopper,
            Controller::Piws(_) => ControllerKind::Piws,
            Controller::Bcm => ControllerKind::Bcm,
            Controller::Lacc(_) => ControllerKind::Lacc,
            Controller::External => ControllerKind::External,
        }
    }

    /// Acceleration for this step. `External` controllers return `None`.
    pub fn accel(&mut self, n: &Neighborhood, p: &ControllerParams) -> Option<f64> {
        let a = match self {
            Controller::Idm => idm_accel(n.v, n.gap, n.v_lead, &p.idm),
            Controller::FollowerStopper => follower_stopper_accel(n.v, n.gap, n.v_lead, &p.fs, p.gain()),
            Controller::Piws(state) => state.accel(n.v, n.gap, n.v_lead, &p.piws, p.gain()),
            Controller::Bcm => bcm_accel(n.gap - n.follower_gap, n.v_lead - n.v, n.v - n.v_follow, n.v, &p.bcm),
            Controller::Lacc(state) => state.accel(n.gap, n.v, n.v_lead - n.v, n.dt, &p.lacc),
            Controller::External => return None,
        };
        Some(a)
    }

    /// Feed the network mean speed to controllers that keep a history.
    pub fn observe_network_speed(&mut self, mean_speed: f64, p: &ControllerParams) {
        if let Controller::Piws(state) = self {
            state.observe_network_speed(mean_speed, p.piws.history_window);
        }
    }
}
