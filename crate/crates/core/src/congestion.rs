//! Congestion-stage labels over the sensing zone ahead of a vehicle,
//! classifier datasets built from rollout logs, and a K-means clusterability check.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{self, Batch, Mlp, ModelFile, OutputActivation, Standardizer, TrainConfig};
use crate::sim::{TrajectoryLog, World, VEHICLE_LENGTH};
use crate::{Error, Result};

pub const N_CLASSES: usize = 6;
pub const MAX_SLOTS: usize = 8;
pub const N_FEATURES: usize = 3 * MAX_SLOTS;
pub const CLASSIFIER_LAYERS: [usize; 5] = [N_FEATURES, 32, 16, 16, N_CLASSES];
pub const SENTINEL: f64 = -1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CongestionLabel {
    Forming,
    Leaving,
    Congested,
    FreeFlow,
    Undefined,
    NoVehicle,
}

impl CongestionLabel {
    pub const ALL: [CongestionLabel; N_CLASSES] = [
        CongestionLabel::Forming,
        CongestionLabel::Leaving,
        CongestionLabel::Congested,
        CongestionLabel::FreeFlow,
        CongestionLabel::Undefined,
        CongestionLabel::NoVehicle,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CongestionLabel::Forming => "forming",
            CongestionLabel::Leaving => "leaving",
            CongestionLabel::Congested => "congested",
            CongestionLabel::FreeFlow => "free_flow",
            CongestionLabel::Undefined => "undefined",
            CongestionLabel::NoVehicle => "no_vehicle",
        }
    }

    pub fn one_hot(self) -> [f64; N_CLASSES] {
        let mut v = [0.0; N_CLASSES];
        v[self.index()] = 1.0;
        v
    }
}

impl fmt::Display for CongestionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CongestionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown congestion label '{s}'")))
    }
}

/// Thresholds of the rule-based labeller.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelRules {
    pub sensing_range: f64,
    /// Minimum step between successive headways to count as monotone, m.
    pub monotone_tolerance: f64,
    pub congested_gap: f64,
    pub free_gap: f64,
    pub congested_speed_fraction: f64,
    pub free_speed_fraction: f64,
    pub vehicle_length: f64,
}

impl Default for LabelRules {
    fn default() -> Self {
        Self {
            sensing_range: 55.0,
            monotone_tolerance: 0.2,
            congested_gap: 7.0,
            free_gap: 20.0,
            congested_speed_fraction: 0.2,
            free_speed_fraction: 0.7,
            vehicle_length: VEHICLE_LENGTH,
        }
    }
}

/// Vehicles inside the sensing zone, nearest first.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct SensingSnapshot {
    /// `(relative position, velocity)`; positions centre to centre.
    entries: Vec<(f64, f64)>,
}

impl SensingSnapshot {
    pub fn new(entries: Vec<(f64, f64)>, sensing_range: f64) -> Result<Self> {
        let mut prev = 0.0;
        for &(rel, vel) in &entries {
            if !rel.is_finite() || !vel.is_finite() {
                return Err(Error::NonFinite("snapshot entry"));
            }
            if rel <= prev || rel > sensing_range {
                return Err(Error::config(format!(
                    "snapshot positions must increase strictly within (0, {sensing_range}]"
                )));
            }
            prev = rel;
        }
        if entries.len() > MAX_SLOTS {
            return Err(Error::config(format!("snapshot holds at most {MAX_SLOTS} vehicles")));
        }
        Ok(Self { entries })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Snapshot seen by vehicle `ego` given ring positions and velocities.
    pub fn from_positions(positions: &[f64], velocities: &[f64], ring_length: f64, ego: usize, rules: &LabelRules) -> Self {
        let n = positions.len();
        let mut entries = Vec::new();
        for k in 1..n {
            if entries.len() == MAX_SLOTS {
                break;
            }
            let j = (ego + k) % n;
            let rel = (positions[j] - positions[ego]).rem_euclid(ring_length);
            if rel > rules.sensing_range {
                break;
            }
            // coincident centres only occur after a collision clip; skip them
            if rel > entries.last().map_or(0.0, |e: &(f64, f64)| e.0) {
                entries.push((rel, velocities[j]));
            }
        }
        Self { entries }
    }

    pub fn from_world(world: &World, ego: usize, rules: &LabelRules) -> Self {
        let pos: Vec<f64> = world.vehicles.iter().map(|v| v.position).collect();
        let vel: Vec<f64> = world.vehicles.iter().map(|v| v.velocity).collect();
        Self::from_positions(&pos, &vel, world.ring_length, ego, rules)
    }

    /// Bumper gaps: ego to first entry, then between successive entries.
    pub fn headways(&self, vehicle_length: f64) -> Vec<f64> {
        let mut prev = 0.0;
        self.entries
            .iter()
            .map(|&(rel, _)| {
                let h = rel - prev - vehicle_length;
                prev = rel;
                h
            })
            .collect()
    }

    /// Fixed-width classifier input: `(rel, vel)` per slot, then the presence mask.
    pub fn features(&self) -> [f64; N_FEATURES] {
        let mut f = [0.0; N_FEATURES];
        for slot in 0..MAX_SLOTS {
            let (rel, vel, present) = match self.entries.get(slot) {
                Some(&(r, v)) => (r, v, 1.0),
                None => (SENTINEL, SENTINEL, 0.0),
            };
            f[2 * slot] = rel;
            f[2 * slot + 1] = vel;
            f[2 * MAX_SLOTS + slot] = present;
        }
        f
    }
}

/// Rule-based stage of a snapshot.
pub fn label_snapshot(s: &SensingSnapshot, speed_limit: f64, rules: &LabelRules) -> CongestionLabel {
    if s.is_empty() {
        return CongestionLabel::NoVehicle;
    }
    let h = s.headways(rules.vehicle_length);
    if h.len() >= 2 {
        let eps = rules.monotone_tolerance;
        if h.windows(2).all(|w| w[1] < w[0] - eps) {
            return CongestionLabel::Forming;
        }
        if h.windows(2).all(|w| w[1] > w[0] + eps) {
            return CongestionLabel::Leaving;
        }
    }
    let mean_v = s.entries.iter().map(|e| e.1).sum::<f64>() / s.entries.len() as f64;
    if h.iter().all(|&x| x < rules.congested_gap) && mean_v < rules.congested_speed_fraction * speed_limit {
        return CongestionLabel::Congested;
    }
    if h.iter().all(|&x| x > rules.free_gap) && mean_v > rules.free_speed_fraction * speed_limit {
        return CongestionLabel::FreeFlow;
    }
    CongestionLabel::Undefined
}

// ---------------------------------------------------------------------------
// Classifier

#[derive(Clone, Debug, PartialEq)]
pub struct CongestionClassifier {
    mlp: Mlp,
    norm: Standardizer,
}

impl CongestionClassifier {
    pub fn new(mlp: Mlp, norm: Standardizer) -> Result<Self> {
        if mlp.input_dim() != N_FEATURES || mlp.output_dim() != N_CLASSES || mlp.output() != OutputActivation::Softmax {
            return Err(Error::config(format!(
                "classifier must map {N_FEATURES} features to a {N_CLASSES}-way softmax"
            )));
        }
        if norm.mean.len() != N_FEATURES {
            return Err(Error::Dimension {
                expected: N_FEATURES,
                actual: norm.mean.len(),
            });
        }
        Ok(Self { mlp, norm })
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn norm(&self) -> &Standardizer {
        &self.norm
    }

    pub fn probabilities(&self, features: &[f64; N_FEATURES]) -> [f64; N_CLASSES] {
        let x = self.norm.apply(features);
        let p = self.mlp.forward(&x).unwrap_or_else(|_| vec![0.0; N_CLASSES]);
        let mut out = [0.0; N_CLASSES];
        out.copy_from_slice(&p);
        out
    }

    pub fn predict_features(&self, features: &[f64; N_FEATURES]) -> CongestionLabel {
        let p = self.probabilities(features);
        let mut best = 0;
        for i in 1..N_CLASSES {
            if p[i] > p[best] {
                best = i;
            }
        }
        CongestionLabel::ALL[best]
    }

    pub fn predict(&self, s: &SensingSnapshot) -> CongestionLabel {
        self.predict_features(&s.features())
    }

    pub fn save(&self, path: &Path, metadata: BTreeMap<String, String>) -> Result<()> {
        self.mlp.save(path, Some(&self.norm), metadata)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = ModelFile::load(path)?;
        let norm = file
            .input_norm
            .clone()
            .ok_or_else(|| Error::config("classifier model file lacks normalisation stats"))?;
        Self::new(file.to_mlp()?, norm)
    }
}

pub fn predict(c: &CongestionClassifier, s: &SensingSnapshot) -> CongestionLabel {
    c.predict(s)
}

/// Source of the congestion channel: a trained classifier or the rules themselves.
#[derive(Clone, Debug)]
pub enum Labeler {
    Classifier(CongestionClassifier),
    Rules(LabelRules),
}

impl Labeler {
    pub fn label(&self, world: &World, ego: usize) -> CongestionLabel {
        match self {
            Labeler::Classifier(c) => c.predict(&SensingSnapshot::from_world(world, ego, &LabelRules::default())),
            Labeler::Rules(r) => label_snapshot(&SensingSnapshot::from_world(world, ego, r), world.speed_limit, r),
        }
    }
}

// ---------------------------------------------------------------------------
// Dataset

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Steps between the observed snapshot and its target label.
    pub offset: usize,
    /// Share of transition rows aimed for within each class.
    pub transition_fraction: f64,
    /// Cap on rows per class after balancing.
    pub max_per_class: usize,
    /// Classes with fewer candidate rows than this are treated as absent.
    pub min_rows: usize,
    /// Use every `stride`-th step as a candidate.
    pub stride: usize,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            offset: 10,
            transition_fraction: 0.5,
            max_per_class: 3000,
            min_rows: 20,
            stride: 1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub features: Vec<f64>,
    pub label: CongestionLabel,
    pub transition: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassifierDataset {
    pub rows: Vec<DatasetRow>,
    /// Inverse-frequency weights; zero for absent classes.
    pub class_weights: [f64; N_CLASSES],
    pub warnings: Vec<String>,
    /// Candidate rows per class before balancing.
    pub candidates: [usize; N_CLASSES],
    pub dropped_no_vehicle_transitions: usize,
}

/// Windowed `(features(t), label(t + offset))` pairs of one log, before balancing.
pub fn candidate_rows(log: &TrajectoryLog, cfg: &DatasetConfig, rules: &LabelRules) -> Result<(Vec<DatasetRow>, usize)> {
    let steps = log.n_steps();
    if steps <= cfg.offset {
        return Err(Error::Dataset(format!(
            "log of {steps} steps is too short for an offset of {}",
            cfg.offset
        )));
    }
    let stride = cfg.stride.max(1);
    let mut rows = Vec::new();
    let mut dropped = 0;
    for t in (0..steps - cfg.offset).step_by(stride) {
        let now = log.step_rows(t);
        let later = log.step_rows(t + cfg.offset);
        let pos: Vec<f64> = now.iter().map(|r| r.pos_m).collect();
        let vel: Vec<f64> = now.iter().map(|r| r.vel_mps).collect();
        for (ego, (a, b)) in now.iter().zip(later).enumerate() {
            if a.label == CongestionLabel::NoVehicle && b.label != CongestionLabel::NoVehicle {
                dropped += 1;
                continue;
            }
            let snap = SensingSnapshot::from_positions(&pos, &vel, log.ring_length, ego, rules);
            rows.push(DatasetRow {
                features: snap.features().to_vec(),
                label: b.label,
                transition: a.label != b.label,
            });
        }
    }
    Ok((rows, dropped))
}

/// Window, balance and pad the logs into a classifier dataset.
pub fn build_dataset(logs: &[TrajectoryLog], cfg: &DatasetConfig, rules: &LabelRules) -> Result<ClassifierDataset> {
    if !(0.0..=1.0).contains(&cfg.transition_fraction) {
        return Err(Error::config("transition_fraction must lie in [0, 1]"));
    }
    let mut pool: [[Vec<DatasetRow>; 2]; N_CLASSES] = Default::default();
    let mut dropped = 0;
    for log in logs {
        let (rows, d) = candidate_rows(log, cfg, rules)?;
        dropped += d;
        for r in rows {
            pool[r.label.index()][usize::from(r.transition)].push(r);
        }
    }

    let mut ds = ClassifierDataset {
        dropped_no_vehicle_transitions: dropped,
        ..Default::default()
    };
    for c in 0..N_CLASSES {
        ds.candidates[c] = pool[c][0].len() + pool[c][1].len();
    }
    let present: Vec<usize> = (0..N_CLASSES)
        .filter(|&c| c != CongestionLabel::NoVehicle.index() && ds.candidates[c] >= cfg.min_rows.max(1))
        .collect();
    if present.is_empty() {
        return Err(Error::Dataset("no class has enough candidate rows".into()));
    }
    let target = present
        .iter()
        .map(|&c| ds.candidates[c])
        .min()
        .unwrap_or(0)
        .min(cfg.max_per_class);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for &c in &present {
        let [mut stable, mut trans] = std::mem::take(&mut pool[c]);
        stable.shuffle(&mut rng);
        trans.shuffle(&mut rng);
        let want_t = ((target as f64) * cfg.transition_fraction).round() as usize;
        let take_t = want_t.min(trans.len());
        let take_s = (target - take_t).min(stable.len());
        let take_t = (target - take_s).min(trans.len());
        ds.rows.extend(trans.into_iter().take(take_t));
        ds.rows.extend(stable.into_iter().take(take_s));
    }
    // the empty zone gets synthetic rows so the classifier still learns it
    let empty = SensingSnapshot::empty().features().to_vec();
    for _ in 0..target {
        ds.rows.push(DatasetRow {
            features: empty.clone(),
            label: CongestionLabel::NoVehicle,
            transition: false,
        });
    }

    for label in CongestionLabel::ALL {
        let c = label.index();
        if label != CongestionLabel::NoVehicle && !present.contains(&c) {
            let msg = format!(
                "class '{label}' has {} candidate rows (< {}); left out of the dataset",
                ds.candidates[c], cfg.min_rows
            );
            log::warn!("{msg}");
            ds.warnings.push(msg);
        }
    }
    let mut counts = [0usize; N_CLASSES];
    for r in &ds.rows {
        counts[r.label.index()] += 1;
    }
    let total = ds.rows.len() as f64;
    let k = counts.iter().filter(|&&n| n > 0).count() as f64;
    for c in 0..N_CLASSES {
        ds.class_weights[c] = if counts[c] > 0 { total / (k * counts[c] as f64) } else { 0.0 };
    }
    ds.rows.shuffle(&mut rng);
    Ok(ds)
}

impl ClassifierDataset {
    pub fn class_counts(&self) -> [usize; N_CLASSES] {
        let mut counts = [0; N_CLASSES];
        for r in &self.rows {
            counts[r.label.index()] += 1;
        }
        counts
    }

    pub fn transition_count(&self) -> usize {
        self.rows.iter().filter(|r| r.transition).count()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..2 * MAX_SLOTS).map(|i| format!("f{i}")).collect();
        header.extend((0..MAX_SLOTS).map(|i| format!("mask{i}")));
        header.push("label".into());
        header.push("transition".into());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec: Vec<String> = r.features.iter().map(|x| x.to_string()).collect();
            rec.push(r.label.as_str().into());
            rec.push(u8::from(r.transition).to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let mut rows = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let bad = |message: String| Error::Parse {
                path: "classifier dataset".into(),
                line,
                message,
            };
            if rec.len() < N_FEATURES + 1 {
                return Err(bad(format!("expected {} columns, found {}", N_FEATURES + 1, rec.len())));
            }
            let features = (0..N_FEATURES)
                .map(|k| rec[k].trim().parse::<f64>().map_err(|e| bad(e.to_string())))
                .collect::<Result<Vec<f64>>>()?;
            let label = rec[N_FEATURES].trim().parse().map_err(|e: Error| bad(e.to_string()))?;
            let transition = rec.get(N_FEATURES + 1).map(|s| s.trim() == "1").unwrap_or(false);
            rows.push(DatasetRow {
                features,
                label,
                transition,
            });
        }
        Ok(Self {
            rows,
            ..Default::default()
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct TrainedClassifier {
    pub model: CongestionClassifier,
    pub history: Vec<EpochStats>,
    /// `confusion[true][predicted]` on the validation split.
    pub confusion: [[usize; N_CLASSES]; N_CLASSES],
}

pub fn accuracy(m: &Mlp, inputs: &[Vec<f64>], labels: &[usize]) -> f64 {
    if inputs.is_empty() {
        return 0.0;
    }
    let hits = inputs
        .iter()
        .zip(labels)
        .filter(|(x, &y)| m.forward(x).map(|p| argmax(&p) == y).unwrap_or(false))
        .count();
    hits as f64 / inputs.len() as f64
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Train the stage classifier with a shuffled `1 - val_fraction` / `val_fraction` split.
pub fn train_classifier(d: &ClassifierDataset, cfg: &TrainConfig, val_fraction: f64) -> Result<TrainedClassifier> {
    if d.rows.is_empty() {
        return Err(Error::Dataset("classifier dataset is empty".into()));
    }
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::config("val_fraction must lie in [0, 1)"));
    }
    let first = d.rows[0].label;
    if d.rows.iter().all(|r| r.label == first) {
        return Err(Error::Dataset(format!("dataset holds the single class '{first}'")));
    }
    if let Some(r) = d.rows.iter().find(|r| r.features.len() != N_FEATURES) {
        return Err(Error::Dimension {
            expected: N_FEATURES,
            actual: r.features.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut order: Vec<usize> = (0..d.rows.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((d.rows.len() as f64) * val_fraction).round() as usize;
    let (val_idx, train_idx) = order.split_at(n_val);

    let raw: Vec<Vec<f64>> = train_idx.iter().map(|&i| d.rows[i].features.clone()).collect();
    let norm = Standardizer::fit(&raw)?;
    let prep = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<usize>) {
        idx.iter()
            .map(|&i| (norm.apply(&d.rows[i].features), d.rows[i].label.index()))
            .unzip()
    };
    let (xt, yt) = prep(train_idx);
    let (xv, yv) = prep(val_idx);

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mlp = Mlp::new(&CLASSIFIER_LAYERS, OutputActivation::Softmax, &mut init_rng)?;
    let mut history = Vec::with_capacity(cfg.epochs);
    nn::fit(&mut mlp, &Batch::Classification { inputs: &xt, labels: &yt }, cfg, |epoch, m, loss| {
        history.push(EpochStats {
            epoch,
            train_loss: loss,
            train_accuracy: accuracy(m, &xt, &yt),
            val_accuracy: accuracy(m, &xv, &yv),
        });
    })?;

    let mut confusion = [[0usize; N_CLASSES]; N_CLASSES];
    let (cx, cy) = if xv.is_empty() { (&xt, &yt) } else { (&xv, &yv) };
    for (x, &y) in cx.iter().zip(cy) {
        confusion[y][argmax(&mlp.forward(x)?)] += 1;
    }
    Ok(TrainedClassifier {
        model: CongestionClassifier::new(mlp, norm)?,
        history,
        confusion,
    })
}

pub fn write_confusion_csv<W: Write>(out: W, confusion: &[[usize; N_CLASSES]; N_CLASSES]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["true\\predicted".to_string()];
    header.extend(CongestionLabel::ALL.iter().map(|l| l.as_str().to_string()));
    w.write_record(&header)?;
    for (label, row) in CongestionLabel::ALL.iter().zip(confusion) {
        let mut rec = vec![label.as_str().to_string()];
        rec.extend(row.iter().map(|c| c.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// K-means

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Inertia after each assignment step.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl KMeansResult {
    pub fn inertia(&self) -> f64 {
        self.inertia_history.last().copied().unwrap_or(0.0)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, mu) in centroids.iter().enumerate() {
        let d = sq_dist(x, mu);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd iteration with k-means++ seeding.
pub fn kmeans(data: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<KMeansResult> {
    if k == 0 || data.len() < k {
        return Err(Error::Dataset(format!("k-means needs at least k = {k} points, got {}", data.len())));
    }
    let dim = data[0].len();
    if data.iter().any(|r| r.len() != dim) {
        return Err(Error::config("k-means rows differ in length"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = vec![data[rng.random_range(0..data.len())].clone()];
    while centroids.len() < k {
        let d2: Vec<f64> = data.iter().map(|x| nearest(x, &centroids).1).collect();
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = data.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            rng.random_range(0..data.len())
        };
        centroids.push(data[pick].clone());
    }

    let mut assignments = vec![usize::MAX; data.len()];
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut changed = false;
        let mut inertia = 0.0;
        for (i, x) in data.iter().enumerate() {
            let (c, d) = nearest(x, &centroids);
            inertia += d;
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
        }
        history.push(inertia);
        if !changed {
            converged = true;
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (x, &c) in data.iter().zip(&assignments) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(x) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        // empty clusters restart at the point farthest from its centroid
        for c in 0..k {
            if counts[c] == 0 {
                let far = data
                    .iter()
                    .enumerate()
                    .map(|(i, x)| (i, sq_dist(x, &centroids[assignments[i]])))
                    .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a })
                    .0;
                centroids[c] = data[far].clone();
                assignments[far] = c;
            }
        }
    }
    Ok(KMeansResult {
        assignments,
        centroids,
        inertia_history: history,
        iterations,
        converged,
    })
}

/// Mean silhouette coefficient; points in singleton clusters score zero.
pub fn silhouette(data: &[Vec<f64>], assignments: &[usize], k: usize) -> f64 {
    if data.len() < 2 {
        return 0.0;
    }
    let mut sizes = vec![0usize; k];
    for &c in assignments {
        sizes[c] += 1;
    }
    let mut total = 0.0;
    for (i, x) in data.iter().enumerate() {
        let own = assignments[i];
        if sizes[own] <= 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for (j, y) in data.iter().enumerate() {
            if i != j {
                sums[assignments[j]] += sq_dist(x, y).sqrt();
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if b.is_finite() && a.max(b) > 0.0 {
            total += (b - a) / a.max(b);
        }
    }
    total / data.len() as f64
}
