//! Gaussian policy with a state-independent log standard deviation.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::nn::{Mlp, ModelFile, OutputActivation, Standardizer};
use crate::{Error, Result, ACCEL_BOUND};

pub const LOG_STD_KEY: &str = "log_std";

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPolicy {
    pub mean: Mlp,
    pub log_std: f64,
    pub norm: Standardizer,
}

pub fn gaussian_log_prob(a: f64, mu: f64, log_std: f64) -> f64 {
    let s = log_std.exp();
    -(a - mu) * (a - mu) / (2.0 * s * s) - log_std - 0.5 * (2.0 * PI).ln()
}

pub fn gaussian_entropy(log_std: f64) -> f64 {
    log_std + 0.5 * (2.0 * PI * std::f64::consts::E).ln()
}

/// KL(old || new) between two univariate Gaussians.
pub fn gaussian_kl(mu_old: f64, log_std_old: f64, mu_new: f64, log_std_new: f64) -> f64 {
    let var_old = (2.0 * log_std_old).exp();
    let var_new = (2.0 * log_std_new).exp();
    log_std_new - log_std_old + (var_old + (mu_old - mu_new).powi(2)) / (2.0 * var_new) - 0.5
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(hidden: &[usize], norm: Standardizer, log_std: f64, rng: &mut R) -> Result<Self> {
        let mut sizes = vec![norm.mean.len()];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Ok(Self {
            mean: Mlp::new(&sizes, OutputActivation::Identity, rng)?,
            log_std,
            norm,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.mean.input_dim()
    }

    pub fn normalize(&self, obs: &[f64]) -> Vec<f64> {
        self.norm.apply(obs)
    }

    /// Unclamped mean action.
    pub fn mean_action(&self, obs: &[f64]) -> Result<f64> {
        if obs.len() != self.obs_dim() {
            return Err(Error::Dimension {
                expected: self.obs_dim(),
                actual: obs.len(),
            });
        }
        Ok(self.mean.forward(&self.normalize(obs))?[0])
    }

    /// Deployment action: the mean, clamped to the action bound.
    pub fn act(&self, obs: &[f64]) -> Result<f64> {
        let a = self.mean_action(obs)?;
        if !a.is_finite() {
            return Err(Error::NonFinite("policy action"));
        }
        Ok(a.clamp(-ACCEL_BOUND, ACCEL_BOUND))
    }

    /// Draw an unclamped action; returns `(action, mean)`.
    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<(f64, f64)> {
        let mu = self.mean_action(obs)?;
        let z: f64 = StandardNormal.sample(rng);
        Ok((mu + self.log_std.exp() * z, mu))
    }

    pub fn save(&self, path: &Path, mut metadata: BTreeMap<String, String>) -> Result<()> {
        metadata.insert(LOG_STD_KEY.into(), format!("{:e}", self.log_std));
        self.mean.save(path, Some(&self.norm), metadata)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = ModelFile::load(path)?;
        let log_std = file
            .metadata
            .get(LOG_STD_KEY)
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| Error::config(format!("{}: policy file lacks {LOG_STD_KEY}", path.display())))?;
        let mean = file.to_mlp()?;
        if mean.output_dim() != 1 {
            return Err(Error::config("policy network must have one output"));
        }
        let norm = file.input_norm.clone().unwrap_or_else(|| Standardizer::identity(mean.input_dim()));
        Ok(Self { mean, log_std, norm })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_prob_matches_density() {
        let lp = gaussian_log_prob(0.3, -0.2, 0.1_f64.ln());
        let s: f64 = 0.1;
        let pdf = (-(0.5_f64).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt());
        assert!((lp - pdf.ln()).abs() < 1e-12);
    }

    #[test]
    fn kl_of_identical_is_zero() {
        assert!(gaussian_kl(0.4, -0.3, 0.4, -0.3).abs() < 1e-15);
        assert!(gaussian_kl(0.0, 0.0, 1.0, 0.0) > 0.0);
    }
}
