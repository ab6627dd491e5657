//! Human-driver behaviour on top of IDM car-following.
//!
//! A human vehicle occasionally executes a discrete acceleration manoeuvre.
//! How many manoeuvres a vehicle performs is drawn per vehicle; when one fires
//! its intensity comes from a behavioural-cloning network if the vehicle is
//! close to its leader, otherwise from a uniform draw, and its duration from a
//! triangular law whose mode shrinks as the intensity grows.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::BcDataset;
use crate::nn::{self, Batch, Mlp, ModelFile, OutputActivation, Standardizer, TrainConfig};
use crate::{Error, Result, ACCEL_BOUND};

/// Default behavioural-cloning layout: (ego v, headway, leader v) → 24 → 24 → accel.
pub const BC_LAYERS: [usize; 4] = [3, 24, 24, 1];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensitySource {
    Imitation,
    Sampled,
}

impl IntensitySource {
    pub fn as_str(self) -> &'static str {
        match self {
            IntensitySource::Imitation => "imitation",
            IntensitySource::Sampled => "sampled",
        }
    }
}

/// An acceleration override applied to one vehicle for a number of steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationEvent {
    pub vehicle_id: usize,
    pub start_step: u64,
    pub duration_steps: u64,
    pub intensity: f64,
    pub source: IntensitySource,
}

impl PerturbationEvent {
    pub fn is_active(&self, step: u64) -> bool {
        step >= self.start_step && step < self.start_step + self.duration_steps
    }
}

/// Bounds of observed manoeuvre durations, seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DurationModel {
    pub tau_min: f64,
    pub tau_max: f64,
}

impl Default for DurationModel {
    fn default() -> Self {
        Self {
            tau_min: 0.5,
            tau_max: 4.0,
        }
    }
}

impl DurationModel {
    pub fn new(tau_min: f64, tau_max: f64) -> Result<Self> {
        let dm = Self { tau_min, tau_max };
        dm.validate()?;
        Ok(dm)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.tau_min && self.tau_min < self.tau_max) || !self.tau_max.is_finite() {
            return Err(Error::config("duration bounds must satisfy 0 < tau_min < tau_max"));
        }
        Ok(())
    }

    pub fn range(&self) -> f64 {
        self.tau_max - self.tau_min
    }

    /// Most likely duration for a manoeuvre of the given intensity.
    ///
    /// Linear in `|intensity|`: zero maps to `tau_max`, the action bound to `tau_min`.
    pub fn mode(&self, intensity: f64) -> f64 {
        let frac = (intensity.abs() / ACCEL_BOUND).min(1.0);
        self.tau_max - frac * self.range()
    }

    /// Conditional density of a duration given the mode.
    pub fn pdf(&self, tau: f64, mode: f64) -> f64 {
        let (lo, hi, r) = (self.tau_min, self.tau_max, self.range());
        if tau < lo || tau > hi {
            0.0
        } else if tau < mode {
            2.0 * (tau - lo) / (r * (mode - lo))
        } else if mode < hi {
            2.0 * (hi - tau) / (r * (hi - mode))
        } else {
            // mode == tau_max: only the rising branch exists
            2.0 / r
        }
    }

    pub fn cdf(&self, tau: f64, mode: f64) -> f64 {
        let (lo, hi, r) = (self.tau_min, self.tau_max, self.range());
        if tau <= lo {
            0.0
        } else if tau >= hi {
            1.0
        } else if tau < mode {
            (tau - lo).powi(2) / (r * (mode - lo))
        } else {
            1.0 - (hi - tau).powi(2) / (r * (hi - mode))
        }
    }

    /// Inverse-transform draw from the triangular law with the given mode.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, mode: f64) -> f64 {
        let mode = mode.clamp(self.tau_min, self.tau_max);
        let u: f64 = rng.random();
        let r = self.range();
        let split = (mode - self.tau_min) / r;
        let tau = if u < split {
            self.tau_min + (u * r * (mode - self.tau_min)).sqrt()
        } else {
            self.tau_max - ((1.0 - u) * r * (self.tau_max - mode)).sqrt()
        };
        tau.clamp(self.tau_min, self.tau_max)
    }
}

pub fn duration_mode(intensity: f64, dm: &DurationModel) -> f64 {
    dm.mode(intensity)
}

pub fn sample_duration<R: Rng + ?Sized>(rng: &mut R, mode: f64, dm: &DurationModel) -> f64 {
    dm.sample(rng, mode)
}

/// Behavioural-cloning acceleration model with its input normalisation.
#[derive(Clone, Debug, PartialEq)]
pub struct BcModel {
    mlp: Mlp,
    norm: Standardizer,
}

impl BcModel {
    pub fn new(mlp: Mlp, norm: Standardizer) -> Result<Self> {
        if mlp.input_dim() != 3 || mlp.output_dim() != 1 {
            return Err(Error::config("behavioural-cloning model must map 3 inputs to 1 output"));
        }
        if norm.mean.len() != 3 {
            return Err(Error::Dimension {
                expected: 3,
                actual: norm.mean.len(),
            });
        }
        Ok(Self { mlp, norm })
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    /// Predicted acceleration, clamped to the action bound.
    pub fn predict(&self, ego_v: f64, headway: f64, leader_v: f64) -> f64 {
        let x = self.norm.apply(&[ego_v, headway, leader_v]);
        // input length is validated in `new`
        let a = self.mlp.forward(&x).map(|o| o[0]).unwrap_or(0.0);
        if a.is_finite() {
            a.clamp(-ACCEL_BOUND, ACCEL_BOUND)
        } else {
            0.0
        }
    }

    pub fn save(&self, path: &Path, metadata: BTreeMap<String, String>) -> Result<()> {
        self.mlp.save(path, Some(&self.norm), metadata)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = ModelFile::load(path)?;
        let norm = file
            .input_norm
            .clone()
            .ok_or_else(|| Error::config("behavioural-cloning model file lacks normalisation stats"))?;
        Self::new(file.to_mlp()?, norm)
    }
}

pub fn bc_predict(model: &BcModel, ego_v: f64, headway: f64, leader_v: f64) -> f64 {
    model.predict(ego_v, headway, leader_v)
}

/// Fit a behavioural-cloning network on `(ego v, headway, leader v) → accel` rows.
///
/// Returns the model and the per-epoch mean-squared training loss.
pub fn train_bc(data: &BcDataset, layers: &[usize], cfg: &TrainConfig) -> Result<(BcModel, Vec<f64>)> {
    if data.rows.is_empty() {
        return Err(Error::Dataset("behavioural-cloning dataset is empty".into()));
    }
    if layers.first() != Some(&3) || layers.last() != Some(&1) {
        return Err(Error::config("behavioural-cloning layers must start at 3 and end at 1"));
    }
    let inputs: Vec<Vec<f64>> = data.rows.iter().map(|r| data.norm.apply(&r.features())).collect();
    let targets: Vec<Vec<f64>> = data.rows.iter().map(|r| vec![r.accel]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mlp = Mlp::new(layers, OutputActivation::Identity, &mut rng)?;
    log::info!("behavioural-cloning network has {} parameters", mlp.param_count());
    let losses = nn::fit(&mut mlp, &Batch::Regression { inputs: &inputs, targets: &targets }, cfg, |_, _, _| {})?;
    Ok((BcModel::new(mlp, data.norm.clone())?, losses))
}

/// Tunables of the perturbation model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HvParams {
    pub tau_min: f64,
    pub tau_max: f64,
    /// Below this headway (m) intensities come from the cloning model.
    pub imitation_headway: f64,
    /// Events per vehicle per `frequency_period_s` of driving.
    pub frequency_min: f64,
    pub frequency_max: f64,
    pub frequency_period_s: f64,
}

impl Default for HvParams {
    fn default() -> Self {
        Self {
            tau_min: 0.5,
            tau_max: 4.0,
            imitation_headway: 5.0,
            frequency_min: 10.0,
            frequency_max: 30.0,
            frequency_period_s: 360.0,
        }
    }
}

impl HvParams {
    pub fn duration_model(&self) -> Result<DurationModel> {
        DurationModel::new(self.tau_min, self.tau_max)
    }

    pub fn validate(&self) -> Result<()> {
        self.duration_model()?;
        if !(0.0 <= self.frequency_min && self.frequency_min <= self.frequency_max) {
            return Err(Error::config("frequency range must satisfy 0 <= min <= max"));
        }
        if !(self.frequency_period_s > 0.0) || !(self.imitation_headway >= 0.0) {
            return Err(Error::config("frequency period and imitation headway must be positive"));
        }
        Ok(())
    }
}

/// Full human-driver model used inside a rollout.
#[derive(Clone, Debug)]
pub struct HvModel {
    pub params: HvParams,
    pub bc: Option<BcModel>,
}

impl HvModel {
    pub fn new(params: HvParams, bc: Option<BcModel>) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, bc })
    }
}

/// Draw a manoeuvre intensity conditioned on the live headway.
pub fn sample_intensity<R: Rng + ?Sized>(
    rng: &mut R,
    headway: f64,
    bc: Option<&BcModel>,
    ego_v: f64,
    leader_v: f64,
    imitation_headway: f64,
) -> Result<(f64, IntensitySource)> {
    if headway < imitation_headway {
        let model = bc.ok_or_else(|| Error::config("headway below imitation threshold but no cloning model loaded"))?;
        Ok((model.predict(ego_v, headway, leader_v), IntensitySource::Imitation))
    } else {
        Ok((rng.random_range(-ACCEL_BOUND..=ACCEL_BOUND), IntensitySource::Sampled))
    }
}

/// Planned start steps (relative to the window start) for one vehicle.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationSchedule {
    pub vehicle_id: usize,
    pub start_steps: Vec<u64>,
    pub requested: usize,
    pub warning: Option<String>,
}

/// Number of steps reserved per event so that events of one vehicle never overlap.
pub fn event_slot_steps(params: &HvParams, dt: f64) -> u64 {
    ((params.tau_max / dt).round() as u64).max(1)
}

/// Per-vehicle random stream derived from a rollout seed.
pub fn vehicle_rng(seed: u64, vehicle_id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(vehicle_id as u64 + 1);
    rng
}

/// Draw how many events a vehicle performs in a window and when each starts.
pub fn sample_schedule<R: Rng + ?Sized>(
    rng: &mut R,
    vehicle_id: usize,
    window_steps: u64,
    dt: f64,
    params: &HvParams,
) -> PerturbationSchedule {
    let window_s = window_steps as f64 * dt;
    let rate: f64 = if params.frequency_max > params.frequency_min {
        rng.random_range(params.frequency_min..=params.frequency_max)
    } else {
        params.frequency_min
    };
    let requested = (rate * window_s / params.frequency_period_s).round() as usize;
    let slot = event_slot_steps(params, dt);
    let fit = (window_steps / slot) as usize;
    let (count, warning) = if requested > fit {
        (
            fit,
            Some(format!(
                "vehicle {vehicle_id}: window of {window_steps} steps fits {fit} of {requested} events"
            )),
        )
    } else {
        (requested, None)
    };
    let free = window_steps - count as u64 * slot;
    let mut offsets: Vec<u64> = (0..count).map(|_| rng.random_range(0..=free)).collect();
    offsets.sort_unstable();
    let start_steps = offsets.into_iter().enumerate().map(|(i, o)| o + i as u64 * slot).collect();
    PerturbationSchedule {
        vehicle_id,
        start_steps,
        requested,
        warning,
    }
}

/// Materialise an event at its start step using the live kinematics.
#[allow(clippy::too_many_arguments)]
pub fn fire_event<R: Rng + ?Sized>(
    rng: &mut R,
    model: &HvModel,
    vehicle_id: usize,
    step: u64,
    headway: f64,
    ego_v: f64,
    leader_v: f64,
    dt: f64,
) -> Result<PerturbationEvent> {
    let p = &model.params;
    let dm = p.duration_model()?;
    let (intensity, source) = sample_intensity(rng, headway, model.bc.as_ref(), ego_v, leader_v, p.imitation_headway)?;
    let tau = dm.sample(rng, dm.mode(intensity));
    let lo = ((dm.tau_min / dt).round() as u64).max(1);
    let hi = event_slot_steps(p, dt);
    let duration_steps = ((tau / dt).round() as u64).clamp(lo, hi);
    Ok(PerturbationEvent {
        vehicle_id,
        start_step: step,
        duration_steps,
        intensity,
        source,
    })
}

pub fn write_events_csv<W: Write>(out: W, events: &[PerturbationEvent]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["vehicle_id", "start_step", "duration_steps", "intensity", "source"])?;
    for e in events {
        w.write_record([
            e.vehicle_id.to_string(),
            e.start_step.to_string(),
            e.duration_steps.to_string(),
            e.intensity.to_string(),
            e.source.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_endpoints_and_midpoint() {
        let dm = DurationModel::default();
        assert_eq!(dm.mode(0.0), 4.0);
        assert_eq!(dm.mode(3.0), 0.5);
        assert_eq!(dm.mode(-3.0), 0.5);
        assert!((dm.mode(1.5) - 2.25).abs() < 1e-12);
        assert!((dm.mode(-1.5) - 2.25).abs() < 1e-12);
    }

    #[test]
    fn pdf_peak_is_two_over_range() {
        let dm = DurationModel::default();
        for mode in [1.0, 2.25, 3.9] {
            assert!((dm.pdf(mode, mode) - 2.0 / dm.range()).abs() < 1e-12);
            let just_below = dm.pdf(mode - 1e-9, mode);
            assert!((just_below - 2.0 / dm.range()).abs() < 1e-6);
        }
    }

    #[test]
    fn degenerate_mode_at_minimum() {
        let dm = DurationModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let t = dm.sample(&mut rng, dm.tau_min);
            assert!(t >= dm.tau_min && t <= dm.tau_max);
        }
        assert_eq!(dm.pdf(0.4, dm.tau_min), 0.0);
    }

    #[test]
    fn invalid_bounds_rejected() {
        assert!(DurationModel::new(2.0, 1.0).is_err());
        assert!(DurationModel::new(0.0, 1.0).is_err());
    }

    #[test]
    fn intensity_switches_at_five_metres() {
        let mlp = Mlp::zeros(&BC_LAYERS, OutputActivation::Identity).unwrap();
        let bc = BcModel::new(mlp, Standardizer::identity(3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (_, s) = sample_intensity(&mut rng, 4.9, Some(&bc), 5.0, 5.0, 5.0).unwrap();
        assert_eq!(s, IntensitySource::Imitation);
        let (_, s) = sample_intensity(&mut rng, 5.0, Some(&bc), 5.0, 5.0, 5.0).unwrap();
        assert_eq!(s, IntensitySource::Sampled);
    }

    #[test]
    fn imitation_branch_requires_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_intensity(&mut rng, 1.0, None, 5.0, 5.0, 5.0).is_err());
        assert!(sample_intensity(&mut rng, 10.0, None, 5.0, 5.0, 5.0).is_ok());
    }

    #[test]
    fn schedule_counts_scale_with_window() {
        let p = HvParams::default();
        for seed in 0..200 {
            let mut rng = vehicle_rng(seed, 3);
            let s = sample_schedule(&mut rng, 3, 3600, 0.1, &p);
            assert!((10..=30).contains(&s.start_steps.len()), "{}", s.start_steps.len());
            let s = sample_schedule(&mut rng, 3, 1800, 0.1, &p);
            assert!((5..=15).contains(&s.start_steps.len()));
        }
    }

    #[test]
    fn schedule_events_never_overlap() {
        let p = HvParams::default();
        let slot = event_slot_steps(&p, 0.1);
        let mut rng = vehicle_rng(11, 0);
        let s = sample_schedule(&mut rng, 0, 3600, 0.1, &p);
        for w in s.start_steps.windows(2) {
            assert!(w[1] - w[0] >= slot);
        }
        assert!(*s.start_steps.last().unwrap() + slot <= 3600);
    }

    #[test]
    fn short_window_truncates_with_warning() {
        let p = HvParams::default();
        let mut rng = vehicle_rng(0, 0);
        let s = sample_schedule(&mut rng, 0, 100, 0.1, &p);
        assert!(s.start_steps.len() <= 2);
        // 100 steps of 6-minute-normalised rate requests at most one event
        assert!(s.requested <= 1 || s.warning.is_some());
    }

    #[test]
    fn vehicle_streams_differ() {
        let p = HvParams::default();
        let a = sample_schedule(&mut vehicle_rng(7, 0), 0, 3600, 0.1, &p);
        let b = sample_schedule(&mut vehicle_rng(7, 1), 1, 3600, 0.1, &p);
        assert_ne!(a.start_steps, b.start_steps);
    }

    #[test]
    fn fired_event_respects_bounds() {
        let model = HvModel::new(HvParams::default(), None).unwrap();
        let mut rng = vehicle_rng(2, 0);
        for _ in 0..1000 {
            let e = fire_event(&mut rng, &model, 0, 10, 8.0, 5.0, 5.0, 0.1).unwrap();
            assert!((-3.0..=3.0).contains(&e.intensity));
            assert!((5..=40).contains(&e.duration_steps));
            assert_eq!(e.source, IntensitySource::Sampled);
        }
    }
}
