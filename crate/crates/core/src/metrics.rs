//! Surrogate safety measures, fuel economy and throughput over rollout logs.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::sim::TrajectoryLog;
use crate::{Error, Result};

const METERS_PER_MILE: f64 = 1609.344;

/// Time to collision, s. Infinite when the gap is not closing.
pub fn ttc(gap: f64, closing: f64) -> f64 {
    if closing <= 0.0 {
        f64::INFINITY
    } else {
        gap.max(0.0) / closing
    }
}

/// Deceleration needed to avoid contact, m/s². Returns `(value, contact)`;
/// a closing pair already at zero gap yields `(inf, true)`.
pub fn drac(gap: f64, closing: f64) -> (f64, bool) {
    if closing <= 0.0 {
        (0.0, false)
    } else if gap <= 0.0 {
        (f64::INFINITY, true)
    } else {
        (closing * closing / (2.0 * gap), false)
    }
}

/// Fuel-rate polynomial in speed and positive acceleration, gallons per hour.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuelCoefficients {
    pub idle: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
}

pub const DEFAULT_FUEL_TABLE: &str = include_str!("../data/fuel_surrogate.toml");

impl Default for FuelCoefficients {
    fn default() -> Self {
        Self::from_toml(DEFAULT_FUEL_TABLE).expect("bundled fuel table parses")
    }
}

impl FuelCoefficients {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: FuelCoefficients = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("fuel coefficient table {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.idle, self.c0, self.c1, self.c2, self.c3, self.c4, self.c5];
        if all.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("fuel coefficient"));
        }
        if self.idle <= 0.0 {
            return Err(Error::config("idle fuel rate must be positive"));
        }
        if self.c4 < 0.0 || self.c5 < 0.0 {
            return Err(Error::config("acceleration fuel terms must be non-negative"));
        }
        Ok(())
    }
}

pub fn fuel_rate(v: f64, a: f64, c: &FuelCoefficients) -> f64 {
    let ap = a.max(0.0);
    let rate = c.c0 + c.c1 * v + c.c2 * v * v + c.c3 * v * v * v + c.c4 * v * ap + c.c5 * v * ap * ap;
    rate.max(c.idle)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum Aggregation {
    /// Minimum TTC / maximum DRAC over the window.
    Worst,
    /// The given lower percentile of TTC and the mirrored upper percentile of DRAC.
    Percentile(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub aggregation: Aggregation,
    /// Probe line for throughput, m along the ring.
    pub probe_position: f64,
    /// Overrides the log's perturbation window as the measurement window.
    pub window: Option<[u64; 2]>,
    /// Alternative fuel table; the bundled one is used when unset.
    pub fuel_table: Option<std::path::PathBuf>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            aggregation: Aggregation::Worst,
            probe_position: 0.0,
            window: None,
            fuel_table: None,
        }
    }
}

impl MetricsConfig {
    pub fn fuel(&self) -> Result<FuelCoefficients> {
        match &self.fuel_table {
            Some(p) => FuelCoefficients::load(p),
            None => Ok(FuelCoefficients::default()),
        }
    }
}

/// Recorded-step range `[a, b)` to measure over.
fn window_range(log: &TrajectoryLog, window: Option<[u64; 2]>) -> Result<(usize, usize)> {
    let steps = log.n_steps();
    if steps == 0 {
        return Err(Error::Dataset("empty trajectory log".into()));
    }
    let first = log.rows[0].step;
    let (a, b) = match window.or(log.perturbation_window) {
        Some([a, b]) => {
            if a < first || b > first + steps as u64 || a >= b {
                return Err(Error::config(format!("window [{a}, {b}) lies outside the log")));
            }
            ((a - first) as usize, (b - first) as usize)
        }
        None => (0, steps),
    };
    Ok((a, b))
}

/// Vehicles-per-hour crossing `probe_position` in the window.
pub fn throughput(log: &TrajectoryLog, probe_position: f64, window: Option<[u64; 2]>) -> Result<f64> {
    let (a, b) = window_range(log, window)?;
    let l = log.ring_length;
    let probe = probe_position.rem_euclid(l);
    let mut crossings = 0usize;
    // the last recorded step has no successor, so its motion is not counted
    let end = b.min(log.n_steps() - 1);
    for k in a..end {
        for (now, next) in log.step_rows(k).iter().zip(log.step_rows(k + 1)) {
            let travel = (next.pos_m - now.pos_m).rem_euclid(l);
            let d = (probe - now.pos_m).rem_euclid(l);
            if d > 0.0 && d <= travel {
                crossings += 1;
            }
        }
    }
    let seconds = (end.saturating_sub(a)) as f64 * log.dt;
    Ok(if seconds > 0.0 { crossings as f64 / seconds * 3600.0 } else { 0.0 })
}

/// Fleet miles per gallon over the window.
pub fn fuel_economy(log: &TrajectoryLog, coeffs: &FuelCoefficients, window: Option<[u64; 2]>) -> Result<f64> {
    let (a, b) = window_range(log, window)?;
    let mut meters = 0.0;
    let mut gallons = 0.0;
    for k in a..b {
        for r in log.step_rows(k) {
            meters += r.vel_mps * log.dt;
            gallons += fuel_rate(r.vel_mps, r.acc_mps2, coeffs) * log.dt / 3600.0;
        }
    }
    Ok(meters / METERS_PER_MILE / gallons)
}

fn percentile(values: &mut [f64], p: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let rank = (p / 100.0).clamp(0.0, 1.0) * (values.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi || !values[hi].is_finite() {
        values[lo]
    } else {
        values[lo] + (values[hi] - values[lo]) * (rank - lo as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutMetrics {
    pub ttc: f64,
    pub drac: f64,
    pub fuel_economy: f64,
    pub throughput: f64,
    /// A closing pair was observed at zero gap.
    pub contact: bool,
}

/// TTC/DRAC over `vehicles` (all vehicles when empty), FE and throughput over everyone.
pub fn rollout_metrics(log: &TrajectoryLog, vehicles: &[usize], cfg: &MetricsConfig, coeffs: &FuelCoefficients) -> Result<RolloutMetrics> {
    let (a, b) = window_range(log, cfg.window)?;
    let n = log.n_vehicles;
    let watch: Vec<usize> = if vehicles.is_empty() { (0..n).collect() } else { vehicles.to_vec() };
    if let Some(&bad) = watch.iter().find(|&&i| i >= n) {
        return Err(Error::config(format!("vehicle {bad} not in log")));
    }
    let mut ttcs = Vec::with_capacity((b - a) * watch.len());
    let mut dracs = Vec::with_capacity((b - a) * watch.len());
    let mut contact = false;
    for k in a..b {
        let rows = log.step_rows(k);
        for &i in &watch {
            let me = &rows[i];
            let lead = &rows[(i + 1) % n];
            let closing = me.vel_mps - lead.vel_mps;
            ttcs.push(ttc(me.headway_m, closing));
            let (d, c) = drac(me.headway_m, closing);
            contact |= c;
            dracs.push(d);
        }
    }
    let (ttc_v, drac_v) = match cfg.aggregation {
        Aggregation::Worst => (
            ttcs.iter().copied().fold(f64::INFINITY, f64::min),
            dracs.iter().copied().fold(0.0, f64::max),
        ),
        Aggregation::Percentile(p) => (percentile(&mut ttcs, p), percentile(&mut dracs, 100.0 - p)),
    };
    Ok(RolloutMetrics {
        ttc: ttc_v,
        drac: drac_v,
        fuel_economy: fuel_economy(log, coeffs, cfg.window)?,
        throughput: throughput(log, cfg.probe_position, cfg.window)?,
        contact,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Mean and population standard deviation; order independent.
pub fn mean_std(values: &[f64]) -> MeanStd {
    if values.is_empty() {
        return MeanStd { mean: f64::NAN, std: f64::NAN };
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.iter().any(|x| x.is_infinite()) {
        let mean = v.iter().sum::<f64>();
        return MeanStd {
            mean: mean.signum() * f64::INFINITY,
            std: if v.iter().all(|&x| x == v[0]) { 0.0 } else { f64::NAN },
        };
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let mut dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    dev.sort_by(f64::total_cmp);
    MeanStd {
        mean,
        std: (dev.iter().sum::<f64>() / n).sqrt(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rv_type: String,
    pub penetration: f64,
    pub n_rollouts: usize,
    /// Worst-case TTC among the watched vehicles, s.
    pub ttc: MeanStd,
    pub drac: MeanStd,
    /// miles per gallon
    pub fuel_economy: MeanStd,
    /// veh/h
    pub throughput: MeanStd,
    pub rollouts: Vec<RolloutMetrics>,
}

pub const REPORT_CSV_HEADER: [&str; 10] = [
    "rv_type",
    "penetration",
    "ttc_mean",
    "ttc_std",
    "drac_mean",
    "drac_std",
    "fe_mean",
    "fe_std",
    "tput_mean",
    "tput_std",
];

/// Aggregate per-rollout metrics. RVs are taken from each log; logs without RVs
/// are measured over all vehicles.
pub fn report(logs: &[TrajectoryLog], rv_type: &str, penetration: f64, cfg: &MetricsConfig) -> Result<MetricsReport> {
    if logs.is_empty() {
        return Err(Error::Dataset("report needs at least one rollout".into()));
    }
    let coeffs = cfg.fuel()?;
    let rollouts = logs
        .iter()
        .map(|l| rollout_metrics(l, &l.rv_ids, cfg, &coeffs))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(rollouts, rv_type, penetration))
}

pub fn summarize(rollouts: Vec<RolloutMetrics>, rv_type: &str, penetration: f64) -> MetricsReport {
    let col = |f: fn(&RolloutMetrics) -> f64| mean_std(&rollouts.iter().map(f).collect::<Vec<_>>());
    MetricsReport {
        rv_type: rv_type.to_string(),
        penetration,
        n_rollouts: rollouts.len(),
        ttc: col(|r| r.ttc),
        drac: col(|r| r.drac),
        fuel_economy: col(|r| r.fuel_economy),
        throughput: col(|r| r.throughput),
        rollouts,
    }
}

impl MetricsReport {
    pub fn csv_record(&self) -> Vec<String> {
        let f = |x: f64| x.to_string();
        vec![
            self.rv_type.clone(),
            f(self.penetration),
            f(self.ttc.mean),
            f(self.ttc.std),
            f(self.drac.mean),
            f(self.drac.std),
            f(self.fuel_economy.mean),
            f(self.fuel_economy.std),
            f(self.throughput.mean),
            f(self.throughput.std),
        ]
    }
}

pub fn write_report_csv<W: Write>(out: W, reports: &[MetricsReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_CSV_HEADER)?;
    for r in reports {
        w.write_record(r.csv_record())?;
    }
    w.flush()?;
    Ok(())
}
