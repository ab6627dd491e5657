//! Per-step rewards for leader and follower robot vehicles.

use serde::{Deserialize, Serialize};

use crate::congestion::CongestionLabel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EfficiencyParams {
    pub speed_weight: f64,
    pub accel_weight: f64,
    /// Shaping for accelerating while congested.
    pub lambda1: f64,
    /// Shaping for braking while the jam is leaving.
    pub lambda2: f64,
}

impl Default for EfficiencyParams {
    fn default() -> Self {
        Self {
            speed_weight: 0.75,
            accel_weight: -2.0,
            lambda1: -10.0,
            lambda2: -10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetyParams {
    pub speed_weight: f64,
    pub accel_weight: f64,
    /// Shaping for any acceleration while a jam is forming.
    pub lambda3: f64,
}

impl Default for SafetyParams {
    fn default() -> Self {
        Self {
            speed_weight: 0.15,
            accel_weight: -4.0,
            lambda3: -5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FollowerParams {
    pub lambda4: f64,
    pub lambda5: f64,
    pub lambda6: f64,
    pub lambda7: f64,
}

impl Default for FollowerParams {
    fn default() -> Self {
        Self {
            lambda4: -2.0,
            lambda5: 4.0,
            lambda6: -4.0,
            lambda7: 10.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardParams {
    pub efficiency: EfficiencyParams,
    pub safety: SafetyParams,
    pub follower: FollowerParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    Efficiency,
    Safety,
}

impl RewardKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RewardKind::Efficiency => "efficiency",
            RewardKind::Safety => "safety",
        }
    }
}

/// Own speed `v`, applied acceleration `a`, congestion stage `c`.
pub fn reward_efficiency(v: f64, a: f64, c: CongestionLabel, p: &EfficiencyParams) -> f64 {
    let mut r = p.speed_weight * v + p.accel_weight * a.abs();
    if c == CongestionLabel::Congested && a > 0.0 {
        r += (p.lambda1 * a.abs()).min(-1.0);
    }
    if c == CongestionLabel::Leaving && a < 0.0 {
        r += p.lambda2 * a.abs();
    }
    r
}

/// Network mean speed `v_mean`, applied acceleration `a`, congestion stage `c`.
pub fn reward_safety(v_mean: f64, a: f64, c: CongestionLabel, p: &SafetyParams) -> f64 {
    let mut r = p.speed_weight * v_mean + p.accel_weight * a.abs();
    if c == CongestionLabel::Forming {
        r += (p.lambda3 * a.abs()).min(-1.0);
    }
    r
}

/// Gap `dp` and closing speed `dv` to the vehicle ahead, applied acceleration `a`.
pub fn reward_follower(dp: f64, dv: f64, a: f64, p: &FollowerParams) -> f64 {
    p.lambda4 * dp + p.lambda5 * dv + p.lambda6 * a.abs() + p.lambda7
}
