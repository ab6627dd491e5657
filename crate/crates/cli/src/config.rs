//! Experiment configuration: one TOML file, every section optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ringsim::congestion::{DatasetConfig, LabelRules};
use ringsim::controllers::{ControllerKind, ControllerParams};
use ringsim::data::FilterCriteria;
use ringsim::human::HvParams;
use ringsim::metrics::MetricsConfig;
use ringsim::nn::TrainConfig;
use ringsim::rl::{PpoConfig, RingEnvConfig};
use ringsim::sim::RolloutConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub rollouts: usize,
    pub out: PathBuf,
    /// Robot-vehicle controller: idm, fs, piws, bcm, lacc or rl.
    pub rv_type: Option<String>,
    /// Replace the rollout horizon and window with warmup, stabilisation and six minutes of perturbations.
    pub protocol: bool,
    pub rollout: RolloutConfig,
    pub controllers: ControllerParams,
    pub label_rules: LabelRules,
    pub hv: HvParams,
    pub models: ModelPaths,
    pub metrics: MetricsConfig,
    pub classifier: ClassifierSection,
    pub bc: BcSection,
    pub rl: RlSection,
    pub filter: FilterCriteria,
    pub evaluate: EvaluateSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            rollouts: 10,
            out: PathBuf::from("out"),
            rv_type: None,
            protocol: false,
            rollout: RolloutConfig::default(),
            controllers: ControllerParams::default(),
            label_rules: LabelRules::default(),
            hv: HvParams::default(),
            models: ModelPaths::default(),
            metrics: MetricsConfig::default(),
            classifier: ClassifierSection::default(),
            bc: BcSection::default(),
            rl: RlSection::default(),
            filter: FilterCriteria::default(),
            evaluate: EvaluateSection::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelPaths {
    pub bc: Option<PathBuf>,
    pub classifier: Option<PathBuf>,
    pub leader_policy: Option<PathBuf>,
    pub follower_policy: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    /// Rule-labelled rollouts generated for training.
    pub n_rollouts: usize,
    /// Densities are evenly spaced over this range, veh/km; rollout i uses seed + i.
    pub density_range: [f64; 2],
    pub horizon_steps: u64,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub val_fraction: f64,
    pub kmeans_k: usize,
    /// Rows sampled for the K-means/silhouette report.
    pub kmeans_rows: usize,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        Self {
            n_rollouts: 6,
            density_range: [70.0, 133.0],
            horizon_steps: 4500,
            dataset: DatasetConfig::default(),
            train: TrainConfig::default(),
            val_fraction: 0.2,
            kmeans_k: 6,
            kmeans_rows: 1500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcSection {
    /// Trajectory CSV or a prepared `ego_v,headway,leader_v,accel` dataset; synthetic corpus when unset.
    pub input: Option<PathBuf>,
    pub layers: Vec<usize>,
    pub train: TrainConfig,
    pub synthetic_vehicles: usize,
    pub synthetic_duration_s: f64,
}

impl Default for BcSection {
    fn default() -> Self {
        Self {
            input: None,
            layers: ringsim::human::BC_LAYERS.to_vec(),
            train: TrainConfig::default(),
            synthetic_vehicles: 6,
            synthetic_duration_s: 300.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlSection {
    pub env: RingEnvConfig,
    pub ppo: PpoConfig,
    /// Feed rule labels instead of the classifier (ablation).
    pub oracle_labels: bool,
}

impl Default for RlSection {
    fn default() -> Self {
        Self {
            env: RingEnvConfig::default(),
            // Ring returns run to thousands; unscaled they swamp the value fit.
            ppo: PpoConfig {
                reward_scale: 0.01,
                ..Default::default()
            },
            oracle_labels: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    /// `(rv_type, penetration)` rows of the results table.
    pub cases: Vec<(String, f64)>,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            cases: vec![
                ("idm".into(), 0.0),
                ("fs".into(), 0.05),
                ("piws".into(), 0.05),
                ("bcm".into(), 0.05),
                ("lacc".into(), 0.05),
            ],
        }
    }
}

pub fn load(path: Option<&Path>) -> anyhow::Result<ExperimentConfig> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| anyhow::anyhow!("reading config {}: {e}", p.display()))?;
            toml::from_str(&text).map_err(|e| anyhow::anyhow!("config {}: {e}", p.display()))
        }
    }
}

pub fn parse_rv_type(s: &str) -> ringsim::Result<ControllerKind> {
    s.parse()
}
