//! Trajectory ingestion and car-following extraction.
//!
//! Input CSV schema (header required, optional columns may be omitted or left
//! empty):
//!
//! ```text
//! time,vehicle_id,lane_id,position,velocity[,leader_id][,space_headway][,acceleration]
//! ```
//!
//! Times are seconds, positions metres along the road, velocities m/s.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controllers::{idm_accel, IdmParams};
use crate::nn::Standardizer;
use crate::sim::VEHICLE_LENGTH;
use crate::{Error, Result, ACCEL_BOUND};

const TIME_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub time: f64,
    pub vehicle_id: u64,
    pub lane_id: i64,
    pub position: f64,
    pub velocity: f64,
    pub leader_id: Option<u64>,
    pub space_headway: Option<f64>,
    /// Given in the file or derived by finite differences on load.
    pub accel: f64,
}

const REQUIRED: [&str; 5] = ["time", "vehicle_id", "lane_id", "position", "velocity"];

pub fn load_trajectories(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let file = std::fs::File::open(path)?;
    read_trajectories(file, path)
}

pub fn read_trajectories<R: Read>(reader: R, origin: &Path) -> Result<Vec<TrajectoryRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut idx = [0usize; 5];
    for (slot, name) in idx.iter_mut().zip(REQUIRED) {
        *slot = col(name).ok_or_else(|| Error::MissingColumn(name.to_string()))?;
    }
    let leader_col = col("leader_id");
    let headway_col = col("space_headway");
    let accel_col = col("acceleration");

    let parse_err = |line: usize, message: String| Error::Parse {
        path: PathBuf::from(origin),
        line,
        message,
    };

    let mut records = Vec::new();
    let mut given_accel = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |i: usize| row.get(i).unwrap_or("");
        fn num<T: std::str::FromStr>(s: &str) -> Option<T> {
            s.parse().ok()
        }
        let req = |k: usize| -> Result<&str> {
            let s = field(idx[k]);
            if s.is_empty() {
                Err(parse_err(line, format!("empty `{}`", REQUIRED[k])))
            } else {
                Ok(s)
            }
        };
        let bad = |k: usize, s: &str| parse_err(line, format!("cannot parse `{}` from {s:?}", REQUIRED[k]));
        let time: f64 = num(req(0)?).ok_or_else(|| bad(0, field(idx[0])))?;
        let vehicle_id: u64 = num(req(1)?).ok_or_else(|| bad(1, field(idx[1])))?;
        let lane_id: i64 = num(req(2)?).ok_or_else(|| bad(2, field(idx[2])))?;
        let position: f64 = num(req(3)?).ok_or_else(|| bad(3, field(idx[3])))?;
        let velocity: f64 = num(req(4)?).ok_or_else(|| bad(4, field(idx[4])))?;
        if !(velocity >= 0.0) || !time.is_finite() || !position.is_finite() {
            return Err(parse_err(line, "time/position must be finite and velocity >= 0".into()));
        }
        let optional = |c: Option<usize>| c.map(field).filter(|s| !s.is_empty()).map(str::to_string);
        let leader_id = match optional(leader_col) {
            Some(s) => Some(num::<u64>(&s).ok_or_else(|| parse_err(line, format!("bad leader_id {s:?}")))?),
            None => None,
        };
        let space_headway = match optional(headway_col) {
            Some(s) => Some(num::<f64>(&s).ok_or_else(|| parse_err(line, format!("bad space_headway {s:?}")))?),
            None => None,
        };
        let accel = match optional(accel_col) {
            Some(s) => Some(num::<f64>(&s).ok_or_else(|| parse_err(line, format!("bad acceleration {s:?}")))?),
            None => None,
        };
        given_accel.push(accel);
        records.push(TrajectoryRecord {
            time,
            vehicle_id,
            lane_id,
            position,
            velocity,
            leader_id,
            space_headway,
            accel: accel.unwrap_or(f64::NAN),
        });
    }

    records.sort_by(|a, b| a.vehicle_id.cmp(&b.vehicle_id).then(a.time.total_cmp(&b.time)));
    for w in records.windows(2) {
        if w[0].vehicle_id == w[1].vehicle_id && w[1].time - w[0].time <= TIME_EPS {
            return Err(Error::Dataset(format!(
                "vehicle {} has non-increasing time at t = {}",
                w[1].vehicle_id, w[1].time
            )));
        }
    }
    derive_accelerations(&mut records);
    fill_headways(&mut records);
    Ok(records)
}

/// Central differences inside each vehicle's track, one-sided at the ends.
/// Only entries that are still NaN are filled.
fn derive_accelerations(records: &mut [TrajectoryRecord]) {
    let mut start = 0;
    while start < records.len() {
        let id = records[start].vehicle_id;
        let end = records[start..].iter().position(|r| r.vehicle_id != id).map_or(records.len(), |k| start + k);
        let track = &mut records[start..end];
        let n = track.len();
        for i in 0..n {
            if !track[i].accel.is_nan() {
                continue;
            }
            track[i].accel = if n < 2 {
                0.0
            } else {
                let (a, b) = if i == 0 {
                    (0, 1)
                } else if i == n - 1 {
                    (n - 2, n - 1)
                } else {
                    (i - 1, i + 1)
                };
                (track[b].velocity - track[a].velocity) / (track[b].time - track[a].time)
            };
        }
        start = end;
    }
}

fn time_key(t: f64) -> i64 {
    (t * 1e6).round() as i64
}

fn fill_headways(records: &mut [TrajectoryRecord]) {
    let index: HashMap<(u64, i64), f64> =
        records.iter().map(|r| ((r.vehicle_id, time_key(r.time)), r.position)).collect();
    for r in records.iter_mut() {
        if r.space_headway.is_none() {
            if let Some(leader) = r.leader_id {
                if let Some(lp) = index.get(&(leader, time_key(r.time))) {
                    r.space_headway = Some(lp - r.position - VEHICLE_LENGTH);
                }
            }
        }
    }
}

pub fn write_trajectories_csv<W: Write>(out: W, records: &[TrajectoryRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "vehicle_id", "lane_id", "position", "velocity", "leader_id", "space_headway", "acceleration"])?;
    for r in records {
        w.write_record([
            r.time.to_string(),
            r.vehicle_id.to_string(),
            r.lane_id.to_string(),
            r.position.to_string(),
            r.velocity.to_string(),
            r.leader_id.map(|v| v.to_string()).unwrap_or_default(),
            r.space_headway.map(|v| v.to_string()).unwrap_or_default(),
            r.accel.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Car-following filter

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterCriteria {
    pub speed_limit: f64,
    /// Ego speed must be strictly above this fraction of the limit.
    pub min_speed_fraction: f64,
    /// Headway must be strictly below this, m.
    pub max_headway: f64,
    /// Minimum same-lane following duration, inclusive, s.
    pub min_duration_s: f64,
    /// Samples further apart than this factor times the nominal interval break a run.
    pub max_gap_factor: f64,
    /// Peak |a| threshold for discrete manoeuvres, m/s².
    pub maneuver_threshold: f64,
}

impl Default for FilterCriteria {
    fn default() -> Self {
        Self {
            speed_limit: 30.0,
            min_speed_fraction: 0.1,
            max_headway: 124.0,
            min_duration_s: 5.0,
            max_gap_factor: 1.5,
            maneuver_threshold: 0.3,
        }
    }
}

impl FilterCriteria {
    pub fn with_speed_limit(speed_limit: f64) -> Self {
        Self {
            speed_limit,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FollowingSample {
    pub time: f64,
    pub ego_v: f64,
    pub headway: f64,
    pub leader_v: f64,
    pub ego_accel: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarFollowingSegment {
    pub ego_id: u64,
    pub leader_id: u64,
    pub lane_id: i64,
    pub start_time: f64,
    pub end_time: f64,
    pub samples: Vec<FollowingSample>,
}

impl CarFollowingSegment {
    pub fn duration(&self) -> f64 {
        self.end_time - self.start_time
    }

    /// Nominal sample interval (median spacing).
    pub fn sample_interval(&self) -> f64 {
        median_interval(self.samples.iter().map(|s| s.time))
    }
}

fn median_interval(times: impl Iterator<Item = f64>) -> f64 {
    let t: Vec<f64> = times.collect();
    let mut d: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).filter(|x| *x > 0.0).collect();
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(f64::total_cmp);
    d[d.len() / 2]
}

/// Check the per-sample criteria (leader present in the same lane, speed, headway).
fn qualifying_sample(
    r: &TrajectoryRecord,
    by_time: &HashMap<(u64, i64), usize>,
    records: &[TrajectoryRecord],
    c: &FilterCriteria,
) -> Option<FollowingSample> {
    let leader = r.leader_id?;
    let l = &records[*by_time.get(&(leader, time_key(r.time)))?];
    if l.lane_id != r.lane_id {
        return None;
    }
    if !(r.velocity > c.min_speed_fraction * c.speed_limit) {
        return None;
    }
    let headway = r.space_headway?;
    if !(headway < c.max_headway) {
        return None;
    }
    Some(FollowingSample {
        time: r.time,
        ego_v: r.velocity,
        headway,
        leader_v: l.velocity,
        ego_accel: r.accel,
    })
}

/// Maximal runs of qualifying samples lasting at least the minimum duration.
///
/// `records` must be grouped by vehicle and time-sorted, as produced by
/// [`load_trajectories`].
pub fn car_following_filter(records: &[TrajectoryRecord], c: &FilterCriteria) -> Vec<CarFollowingSegment> {
    let by_time: HashMap<(u64, i64), usize> =
        records.iter().enumerate().map(|(i, r)| ((r.vehicle_id, time_key(r.time)), i)).collect();
    let mut segments = Vec::new();
    let mut start = 0;
    while start < records.len() {
        let id = records[start].vehicle_id;
        let end = records[start..].iter().position(|r| r.vehicle_id != id).map_or(records.len(), |k| start + k);
        let track = &records[start..end];
        let nominal = median_interval(track.iter().map(|r| r.time));
        let max_gap = if nominal > 0.0 { nominal * c.max_gap_factor } else { f64::INFINITY };

        let mut current: Option<CarFollowingSegment> = None;
        let flush = |seg: Option<CarFollowingSegment>, out: &mut Vec<CarFollowingSegment>| {
            if let Some(seg) = seg {
                if seg.duration() >= c.min_duration_s - TIME_EPS {
                    out.push(seg);
                }
            }
        };
        for r in track {
            let sample = qualifying_sample(r, &by_time, records, c);
            match (sample, current.as_mut()) {
                (Some(s), Some(seg))
                    if Some(seg.leader_id) == r.leader_id
                        && seg.lane_id == r.lane_id
                        && s.time - seg.end_time <= max_gap + TIME_EPS =>
                {
                    seg.end_time = s.time;
                    seg.samples.push(s);
                }
                (Some(s), _) => {
                    flush(current.take(), &mut segments);
                    current = Some(CarFollowingSegment {
                        ego_id: id,
                        leader_id: r.leader_id.unwrap_or_default(),
                        lane_id: r.lane_id,
                        start_time: s.time,
                        end_time: s.time,
                        samples: vec![s],
                    });
                }
                (None, _) => flush(current.take(), &mut segments),
            }
        }
        flush(current.take(), &mut segments);
        start = end;
    }
    segments
}

/// Records that survive filtering: every ego sample inside a segment plus the
/// leader records those samples reference.
pub fn retain_car_following(records: &[TrajectoryRecord], c: &FilterCriteria) -> Vec<TrajectoryRecord> {
    let segments = car_following_filter(records, c);
    let mut keep = std::collections::HashSet::new();
    for seg in &segments {
        for s in &seg.samples {
            keep.insert((seg.ego_id, time_key(s.time)));
            keep.insert((seg.leader_id, time_key(s.time)));
        }
    }
    records
        .iter()
        .filter(|r| keep.contains(&(r.vehicle_id, time_key(r.time))))
        .cloned()
        .collect()
}

// ---------------------------------------------------------------------------
// Behavioural-cloning rows

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BcRow {
    pub ego_v: f64,
    pub headway: f64,
    pub leader_v: f64,
    pub accel: f64,
}

impl BcRow {
    pub fn features(&self) -> [f64; 3] {
        [self.ego_v, self.headway, self.leader_v]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BcDataset {
    pub rows: Vec<BcRow>,
    pub norm: Standardizer,
}

impl BcDataset {
    pub fn from_rows(rows: Vec<BcRow>) -> Result<Self> {
        let feats: Vec<Vec<f64>> = rows.iter().map(|r| r.features().to_vec()).collect();
        let norm = Standardizer::fit(&feats)?;
        Ok(Self { rows, norm })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["ego_v", "headway", "leader_v", "accel"])?;
        for r in &self.rows {
            w.write_record([r.ego_v, r.headway, r.leader_v, r.accel].map(|x| x.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut rows = Vec::new();
        for rec in rdr.deserialize() {
            rows.push(rec?);
        }
        if rows.is_empty() {
            return Err(Error::Dataset("behavioural-cloning CSV has no rows".into()));
        }
        Self::from_rows(rows)
    }
}

pub fn extract_bc_dataset(segments: &[CarFollowingSegment]) -> Result<BcDataset> {
    let rows: Vec<BcRow> = segments
        .iter()
        .flat_map(|s| s.samples.iter())
        .map(|s| BcRow {
            ego_v: s.ego_v,
            headway: s.headway,
            leader_v: s.leader_v,
            accel: s.ego_accel,
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::Dataset("no car-following samples to extract".into()));
    }
    BcDataset::from_rows(rows)
}

// ---------------------------------------------------------------------------
// Manoeuvre statistics

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Maneuver {
    /// Signed acceleration of largest magnitude within the run.
    pub intensity: f64,
    pub duration_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationStats {
    pub threshold: f64,
    pub maneuvers: Vec<Maneuver>,
    pub following_time_s: f64,
    /// Manoeuvres per six minutes of car-following.
    pub frequency_per_6min: f64,
    pub mean_abs_intensity: f64,
    pub mean_duration_s: f64,
    /// Pearson correlation of |intensity| with duration; `None` if undefined.
    pub intensity_duration_correlation: Option<f64>,
}

pub fn characterize_perturbations(segments: &[CarFollowingSegment], threshold: f64) -> PerturbationStats {
    let mut maneuvers = Vec::new();
    let mut following_time = 0.0;
    for seg in segments {
        let dt = seg.sample_interval();
        following_time += seg.duration() + dt;
        let mut run: Option<(f64, usize, f64)> = None; // (peak, samples, sign)
        let close = |run: Option<(f64, usize, f64)>, out: &mut Vec<Maneuver>| {
            if let Some((peak, n, _)) = run {
                out.push(Maneuver {
                    intensity: peak,
                    duration_s: n as f64 * dt,
                });
            }
        };
        for s in &seg.samples {
            let a = s.ego_accel;
            if a.abs() > threshold {
                let sign = a.signum();
                match run.as_mut() {
                    Some((peak, n, sg)) if *sg == sign => {
                        *n += 1;
                        if a.abs() > peak.abs() {
                            *peak = a;
                        }
                    }
                    _ => {
                        close(run.take(), &mut maneuvers);
                        run = Some((a, 1, sign));
                    }
                }
            } else {
                close(run.take(), &mut maneuvers);
            }
        }
        close(run.take(), &mut maneuvers);
    }
    let n = maneuvers.len() as f64;
    let mean_abs_intensity = if n > 0.0 { maneuvers.iter().map(|m| m.intensity.abs()).sum::<f64>() / n } else { 0.0 };
    let mean_duration_s = if n > 0.0 { maneuvers.iter().map(|m| m.duration_s).sum::<f64>() / n } else { 0.0 };
    let frequency_per_6min = if following_time > 0.0 { n / following_time * 360.0 } else { 0.0 };
    let xs: Vec<f64> = maneuvers.iter().map(|m| m.intensity.abs()).collect();
    let ys: Vec<f64> = maneuvers.iter().map(|m| m.duration_s).collect();
    PerturbationStats {
        threshold,
        maneuvers,
        following_time_s: following_time,
        frequency_per_6min,
        mean_abs_intensity,
        mean_duration_s,
        intensity_duration_correlation: pearson(&xs, &ys),
    }
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        None
    } else {
        Some(sxy / (sxx * syy).sqrt())
    }
}

// ---------------------------------------------------------------------------
// Synthetic corpora

/// A single-lane platoon behind a head vehicle with a random speed profile.
/// Followers drive IDM plus uniform acceleration noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticCorpus {
    pub n_vehicles: usize,
    pub duration_s: f64,
    pub dt: f64,
    pub seed: u64,
    pub noise: f64,
    pub lane_id: i64,
    pub head_speed: (f64, f64),
}

impl Default for SyntheticCorpus {
    fn default() -> Self {
        Self {
            n_vehicles: 6,
            duration_s: 120.0,
            dt: 0.1,
            seed: 0,
            noise: 0.3,
            lane_id: 1,
            head_speed: (8.0, 20.0),
        }
    }
}

impl SyntheticCorpus {
    pub fn generate(&self) -> Vec<TrajectoryRecord> {
        let idm = IdmParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n = self.n_vehicles.max(1);
        let steps = (self.duration_s / self.dt).round() as usize + 1;
        let v0 = 0.5 * (self.head_speed.0 + self.head_speed.1);
        // equilibrium-ish spacing at v0 with headway s0 + v T
        let gap0 = idm.s0 + v0 * idm.time_headway;
        let mut pos: Vec<f64> = (0..n).map(|i| (n - 1 - i) as f64 * (gap0 + VEHICLE_LENGTH)).collect();
        let mut vel = vec![v0; n];
        let mut head_accel: f64 = 0.0;
        let mut head_hold = 0usize;
        let mut records = Vec::with_capacity(steps * n);
        for k in 0..steps {
            let t = k as f64 * self.dt;
            let mut acc = vec![0.0; n];
            if head_hold == 0 {
                head_accel = rng.random_range(-1.0..=1.0);
                head_hold = rng.random_range(20..80);
            }
            head_hold -= 1;
            acc[0] = if vel[0] < self.head_speed.0 {
                head_accel.abs()
            } else if vel[0] > self.head_speed.1 {
                -head_accel.abs()
            } else {
                head_accel
            };
            for i in 1..n {
                let gap = pos[i - 1] - pos[i] - VEHICLE_LENGTH;
                let noise = if self.noise > 0.0 { rng.random_range(-self.noise..=self.noise) } else { 0.0 };
                acc[i] = (idm_accel(vel[i], gap, vel[i - 1], &idm) + noise).clamp(-ACCEL_BOUND, ACCEL_BOUND);
            }
            for i in 0..n {
                records.push(TrajectoryRecord {
                    time: t,
                    vehicle_id: i as u64,
                    lane_id: self.lane_id,
                    position: pos[i],
                    velocity: vel[i],
                    leader_id: if i == 0 { None } else { Some(i as u64 - 1) },
                    space_headway: if i == 0 { None } else { Some(pos[i - 1] - pos[i] - VEHICLE_LENGTH) },
                    accel: acc[i],
                });
            }
            for i in 0..n {
                let v_new = (vel[i] + acc[i] * self.dt).max(0.0);
                pos[i] += v_new * self.dt;
                vel[i] = v_new;
            }
        }
        records.sort_by(|a, b| a.vehicle_id.cmp(&b.vehicle_id).then(a.time.total_cmp(&b.time)));
        records
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<TrajectoryRecord>> {
        read_trajectories(text.as_bytes(), Path::new("inline.csv"))
    }

    #[test]
    fn empty_file_with_header() {
        let r = parse("time,vehicle_id,lane_id,position,velocity\n").unwrap();
        assert!(r.is_empty());
    }

    #[test]
    fn missing_column_is_hard_error() {
        let err = parse("time,vehicle_id,position,velocity\n0,1,0,1\n").unwrap_err();
        assert!(matches!(err, Error::MissingColumn(c) if c == "lane_id"));
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = parse("time,vehicle_id,lane_id,position,velocity\n0,1,1,0,1\n0.1,1,1,abc,1\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn constant_velocity_gives_zero_accel() {
        let mut text = String::from("time,vehicle_id,lane_id,position,velocity\n");
        for k in 0..50 {
            let t = k as f64 * 0.1;
            text.push_str(&format!("{t},7,1,{},12.5\n", 12.5 * t));
        }
        let r = parse(&text).unwrap();
        assert!(r.iter().all(|x| x.accel.abs() < 1e-9));
    }

    #[test]
    fn headway_recomputed_from_leader() {
        let text = "time,vehicle_id,lane_id,position,velocity,leader_id\n0,1,1,100,10,\n0,2,1,80,10,1\n";
        let r = parse(text).unwrap();
        let ego = r.iter().find(|x| x.vehicle_id == 2).unwrap();
        assert_eq!(ego.space_headway, Some(15.0));
    }

    #[test]
    fn duplicate_time_rejected() {
        assert!(parse("time,vehicle_id,lane_id,position,velocity\n0,1,1,0,1\n0,1,1,0,1\n").is_err());
    }

    #[test]
    fn maneuvers_of_constant_accel_segment() {
        let samples = (0..20)
            .map(|k| FollowingSample {
                time: k as f64 * 0.1,
                ego_v: 10.0,
                headway: 20.0,
                leader_v: 10.0,
                ego_accel: 1.0,
            })
            .collect();
        let seg = CarFollowingSegment {
            ego_id: 1,
            leader_id: 0,
            lane_id: 1,
            start_time: 0.0,
            end_time: 1.9,
            samples,
        };
        let st = characterize_perturbations(std::slice::from_ref(&seg), 0.3);
        assert_eq!(st.maneuvers.len(), 1);
        assert!((st.maneuvers[0].duration_s - 2.0).abs() < 1e-9);
        let st = characterize_perturbations(&[seg], 5.0);
        assert!(st.maneuvers.is_empty());
    }

    #[test]
    fn synthetic_corpus_shape() {
        let c = SyntheticCorpus {
            n_vehicles: 3,
            duration_s: 9.9,
            ..Default::default()
        };
        let r = c.generate();
        assert_eq!(r.len(), 300);
    }
}
