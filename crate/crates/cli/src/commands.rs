use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use ringsim::congestion::{
    build_dataset, kmeans, silhouette, train_classifier, write_confusion_csv, CongestionClassifier, CongestionLabel, Labeler,
    N_CLASSES,
};
use ringsim::controllers::ControllerKind;
use ringsim::data::{
    car_following_filter, characterize_perturbations, extract_bc_dataset, load_trajectories, BcDataset, SyntheticCorpus,
};
use ringsim::human::{train_bc, write_events_csv, BcModel, HvModel};
use ringsim::metrics::{rollout_metrics, summarize, write_report_csv, MetricsReport, RolloutMetrics};
use ringsim::nn::Standardizer;
use ringsim::rl::{platoon_assign, ppo_train, write_curve_csv, Env, GaussianPolicy, LearnedRvPolicy, RingEnv, TrainRole};
use ringsim::sim::{run_rollout, RolloutConfig, RolloutOutput, RolloutSetup, RvPolicy};

use crate::config::{parse_rv_type, ExperimentConfig};
use crate::manifest::Outputs;
use crate::Invalid;

// ---------------------------------------------------------------------------
// Shared helpers

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

fn require_file(p: &Path, what: &str) -> anyhow::Result<()> {
    if !p.is_file() {
        return Err(invalid(format!("{what} {} does not exist", p.display())));
    }
    Ok(())
}

/// The perturbation model: a cloning network from `models.bc`, or one fitted
/// on a seeded synthetic car-following corpus.
fn hv_model(cfg: &ExperimentConfig, out: &mut Outputs) -> anyhow::Result<HvModel> {
    let bc = match &cfg.models.bc {
        Some(p) => {
            require_file(p, "behavioural-cloning model")?;
            out.input(p);
            BcModel::load(p).with_context(|| format!("loading {}", p.display()))?
        }
        None => {
            let corpus = SyntheticCorpus {
                n_vehicles: cfg.bc.synthetic_vehicles,
                duration_s: cfg.bc.synthetic_duration_s,
                seed: cfg.seed,
                ..Default::default()
            };
            let segments = car_following_filter(&corpus.generate(), &cfg.filter);
            let data = extract_bc_dataset(&segments)?;
            let (model, _) = train_bc(&data, &cfg.bc.layers, &cfg.bc.train)?;
            out.notes.push(format!("cloning model fitted on a synthetic corpus of {} rows", data.rows.len()));
            model
        }
    };
    Ok(HvModel::new(cfg.hv.clone(), Some(bc))?)
}

fn labeler(cfg: &ExperimentConfig, out: &mut Outputs) -> anyhow::Result<Labeler> {
    match &cfg.models.classifier {
        Some(p) => {
            require_file(p, "classifier model")?;
            out.input(p);
            Ok(Labeler::Classifier(CongestionClassifier::load(p)?))
        }
        None if cfg.rl.oracle_labels => Ok(Labeler::Rules(cfg.label_rules.clone())),
        None => Err(invalid("learned policies need models.classifier (or rl.oracle_labels = true)")),
    }
}

fn load_policy(p: &Option<PathBuf>, what: &str, out: &mut Outputs) -> anyhow::Result<GaussianPolicy> {
    let p = p.as_ref().ok_or_else(|| invalid(format!("models.{what} is required")))?;
    require_file(p, what)?;
    out.input(p);
    Ok(GaussianPolicy::load(p)?)
}

struct CaseRun {
    metrics: Vec<RolloutMetrics>,
    outputs: Vec<RolloutOutput>,
}

/// Run `cfg.rollouts` rollouts with seeds `seed..seed+n` in parallel.
fn run_case(
    cfg: &ExperimentConfig,
    rollout: &RolloutConfig,
    rv_type: Option<&str>,
    hv: Option<&HvModel>,
    keep_logs: bool,
    out: &mut Outputs,
) -> anyhow::Result<CaseRun> {
    rollout.validate().map_err(|e| invalid(e.to_string()))?;
    let kind = rv_type.map(parse_rv_type).transpose().map_err(|e| invalid(e.to_string()))?;
    let n_rv = rollout.n_rv();
    match kind {
        Some(k) if n_rv == 0 => {
            return Err(invalid(format!(
                "rv_type `{}` needs robot vehicles but penetration {} of {} vehicles gives none",
                k.name(),
                rollout.rv_penetration,
                rollout.n_vehicles
            )))
        }
        None if n_rv > 0 => return Err(invalid("rv_penetration > 0 requires rv_type")),
        _ => {}
    }
    if cfg.rollouts == 0 {
        return Err(invalid("rollouts must be at least 1"));
    }
    let policy = if kind == Some(ControllerKind::External) {
        let platoon = platoon_assign(rollout.n_vehicles, rollout.rv_penetration)?;
        let leader = load_policy(&cfg.models.leader_policy, "leader_policy", out)?;
        let follower = if platoon.followers.is_empty() {
            None
        } else {
            Some(load_policy(&cfg.models.follower_policy, "follower_policy", out)?)
        };
        Some(LearnedRvPolicy {
            leader,
            follower,
            labeler: labeler(cfg, out)?,
            platoon,
        })
    } else {
        None
    };
    let setup = RolloutSetup {
        controllers: cfg.controllers.clone(),
        rv_controller: kind,
        label_rules: cfg.label_rules.clone(),
        skip_labels: !keep_logs,
    };
    let coeffs = cfg.metrics.fuel()?;
    let results: Vec<(RolloutMetrics, Option<RolloutOutput>)> = (0..cfg.rollouts as u64)
        .into_par_iter()
        .map(|i| -> anyhow::Result<_> {
            let mut rc = rollout.clone();
            rc.seed = cfg.seed + i;
            let mut p = policy.clone();
            let o = run_rollout(&rc, &setup, hv, p.as_mut().map(|p| p as &mut dyn RvPolicy))?;
            let log = o.log.as_ref().expect("recorded rollout");
            let m = rollout_metrics(log, &log.rv_ids, &cfg.metrics, &coeffs)?;
            Ok((m, keep_logs.then_some(o)))
        })
        .collect::<anyhow::Result<_>>()?;
    let mut run = CaseRun {
        metrics: Vec::new(),
        outputs: Vec::new(),
    };
    for (i, (m, o)) in results.into_iter().enumerate() {
        if m.contact {
            let msg = format!("rollout {} (seed {}) reached bumper contact", i, cfg.seed + i as u64);
            warn!("{msg}");
            out.notes.push(msg);
        }
        run.metrics.push(m);
        run.outputs.extend(o);
    }
    Ok(run)
}

fn report_label(rv_type: Option<&str>) -> String {
    rv_type.unwrap_or("idm").to_string()
}

// ---------------------------------------------------------------------------
// simulate / evaluate

pub fn simulate(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let mut out = Outputs::new(&cfg.out)?;
    let mut rollout = cfg.rollout.clone();
    if cfg.protocol {
        rollout = rollout.evaluation_protocol();
    }
    let hv = match rollout.perturbation_window {
        Some(_) => Some(hv_model(cfg, &mut out)?),
        None => None,
    };
    let rv_type = cfg.rv_type.as_deref();
    let run = run_case(cfg, &rollout, rv_type, hv.as_ref(), true, &mut out)?;
    for (i, o) in run.outputs.iter().enumerate() {
        let log = o.log.as_ref().expect("recorded rollout");
        log.write_csv(out.create(&format!("rollout_{i:03}.csv"))?)?;
        if rollout.perturbation_window.is_some() {
            write_events_csv(out.create(&format!("events_{i:03}.csv"))?, &o.events)?;
        }
        for w in &o.warnings {
            warn!("rollout {i}: {w}");
        }
    }
    let report = summarize(run.metrics, &report_label(rv_type), rollout.rv_penetration);
    out.write_json("report.json", &report)?;
    write_report_csv(out.create("report.csv")?, std::slice::from_ref(&report))?;
    print_report(&report);
    let m = out.finish("simulate", cfg)?;
    println!("wrote {} rollouts and {}", cfg.rollouts, m.display());
    Ok(())
}

fn print_report(r: &MetricsReport) {
    println!(
        "{} @ {:.2}: ttc {:.2}±{:.2} s, drac {:.3}±{:.3} m/s², fe {:.2}±{:.2} mpg, throughput {:.0}±{:.0} veh/h",
        r.rv_type,
        r.penetration,
        r.ttc.mean,
        r.ttc.std,
        r.drac.mean,
        r.drac.std,
        r.fuel_economy.mean,
        r.fuel_economy.std,
        r.throughput.mean,
        r.throughput.std
    );
}

pub fn evaluate(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let mut out = Outputs::new(&cfg.out)?;
    if cfg.evaluate.cases.is_empty() {
        return Err(invalid("evaluate.cases is empty"));
    }
    let hv = hv_model(cfg, &mut out)?;
    let mut reports = Vec::new();
    for (rv, pen) in &cfg.evaluate.cases {
        let rollout = RolloutConfig {
            rv_penetration: *pen,
            ..cfg.rollout.clone()
        }
        .evaluation_protocol();
        // Zero penetration is the all-human baseline whatever the label.
        let rv_type = (rollout.n_rv() > 0).then_some(rv.as_str());
        info!("evaluating {rv} at penetration {pen}");
        let run = run_case(cfg, &rollout, rv_type, Some(&hv), false, &mut out)?;
        let r = summarize(run.metrics, rv, *pen);
        print_report(&r);
        reports.push(r);
    }
    out.write_json("results.json", &reports)?;
    write_report_csv(out.create("results.csv")?, &reports)?;
    out.finish("evaluate", cfg)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Data and behavioural cloning

pub fn filter_data(cfg: &ExperimentConfig, input: &Path) -> anyhow::Result<()> {
    require_file(input, "input")?;
    let mut out = Outputs::new(&cfg.out)?;
    out.input(input);
    let records = load_trajectories(input)?;
    let segments = car_following_filter(&records, &cfg.filter);
    let mut w = csv::Writer::from_writer(out.create("segments.csv")?);
    w.write_record(["ego_id", "leader_id", "lane_id", "start_time", "end_time", "samples"])?;
    for s in &segments {
        w.write_record([
            s.ego_id.to_string(),
            s.leader_id.to_string(),
            s.lane_id.to_string(),
            s.start_time.to_string(),
            s.end_time.to_string(),
            s.samples.len().to_string(),
        ])?;
    }
    w.flush()?;
    drop(w);
    let n_rows = if segments.is_empty() {
        warn!("no car-following segments in {}", input.display());
        let mut w = csv::Writer::from_writer(out.create("bc_dataset.csv")?);
        w.write_record(["ego_v", "headway", "leader_v", "accel"])?;
        w.flush()?;
        0
    } else {
        let d = extract_bc_dataset(&segments)?;
        d.write_csv(out.create("bc_dataset.csv")?)?;
        d.rows.len()
    };
    let stats = characterize_perturbations(&segments, cfg.filter.maneuver_threshold);
    out.write_json("perturbation_stats.json", &stats)?;
    out.finish("filter-data", cfg)?;
    println!(
        "records {}, segments {}, bc rows {}, manoeuvres {}",
        records.len(),
        segments.len(),
        n_rows,
        stats.maneuvers.len()
    );
    Ok(())
}

fn is_bc_table(p: &Path) -> anyhow::Result<bool> {
    let f = std::fs::File::open(p)?;
    let mut header = String::new();
    BufReader::new(f).read_line(&mut header)?;
    Ok(header.trim_start().starts_with("ego_v"))
}

pub fn train_bc_cmd(cfg: &ExperimentConfig, input: Option<&Path>) -> anyhow::Result<()> {
    let mut out = Outputs::new(&cfg.out)?;
    let data = match input.or(cfg.bc.input.as_deref()) {
        Some(p) => {
            require_file(p, "input")?;
            out.input(p);
            if is_bc_table(p)? {
                BcDataset::read_csv(std::fs::File::open(p)?)?
            } else {
                let segments = car_following_filter(&load_trajectories(p)?, &cfg.filter);
                if segments.is_empty() {
                    return Err(invalid(format!("no car-following segments in {}", p.display())));
                }
                extract_bc_dataset(&segments)?
            }
        }
        None => {
            let corpus = SyntheticCorpus {
                n_vehicles: cfg.bc.synthetic_vehicles,
                duration_s: cfg.bc.synthetic_duration_s,
                seed: cfg.seed,
                ..Default::default()
            };
            out.notes.push("trained on the synthetic corpus".into());
            extract_bc_dataset(&car_following_filter(&corpus.generate(), &cfg.filter))?
        }
    };
    let (model, losses) = train_bc(&data, &cfg.bc.layers, &cfg.bc.train)?;
    let mut meta = BTreeMap::new();
    meta.insert("kind".into(), "behavioural_cloning".into());
    meta.insert("rows".into(), data.rows.len().to_string());
    meta.insert("seed".into(), cfg.seed.to_string());
    model.save(&out.path("bc_model.json"), meta)?;
    let mut w = csv::Writer::from_writer(out.create("loss.csv")?);
    w.write_record(["epoch", "loss"])?;
    for (e, l) in losses.iter().enumerate() {
        w.write_record([e.to_string(), l.to_string()])?;
    }
    w.flush()?;
    drop(w);
    out.finish("train-bc", cfg)?;
    println!(
        "{} rows, {} parameters, loss {:.4} -> {:.4}",
        data.rows.len(),
        model.mlp().param_count(),
        losses.first().copied().unwrap_or(f64::NAN),
        losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// Congestion classifier

#[derive(Serialize)]
struct KMeansSummary {
    k: usize,
    n_points: usize,
    iterations: usize,
    converged: bool,
    inertia: f64,
    silhouette: f64,
    cluster_sizes: Vec<usize>,
    /// `composition[cluster][label]` using label order forming..no_vehicle.
    composition: Vec<[usize; N_CLASSES]>,
    labels: Vec<&'static str>,
    centroids: Vec<Vec<f64>>,
}

pub fn train_classifier_cmd(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let c = &cfg.classifier;
    if c.n_rollouts == 0 {
        return Err(invalid("classifier.n_rollouts must be at least 1"));
    }
    let [lo, hi] = c.density_range;
    if !(lo > 0.0 && lo <= hi) {
        return Err(invalid("classifier.density_range must satisfy 0 < lo <= hi"));
    }
    let mut out = Outputs::new(&cfg.out)?;
    let setup = RolloutSetup {
        controllers: cfg.controllers.clone(),
        label_rules: cfg.label_rules.clone(),
        ..Default::default()
    };
    let n = c.n_rollouts;
    let configs: Vec<RolloutConfig> = (0..n)
        .map(|i| {
            let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
            RolloutConfig {
                density: lo + t * (hi - lo),
                seed: cfg.seed + i as u64,
                horizon_steps: c.horizon_steps,
                rv_penetration: 0.0,
                perturbation_window: None,
                ..cfg.rollout.clone()
            }
        })
        .collect();
    for rc in &configs {
        rc.validate().map_err(|e| invalid(e.to_string()))?;
    }
    let logs = configs
        .par_iter()
        .map(|rc| Ok(run_rollout(rc, &setup, None, None)?.log.expect("recorded rollout")))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let dataset = build_dataset(&logs, &c.dataset, &cfg.label_rules)?;
    drop(logs);
    out.notes.extend(dataset.warnings.iter().cloned());
    dataset.write_csv(out.create("dataset.csv")?)?;
    let trained = train_classifier(&dataset, &c.train, c.val_fraction)?;

    let mut meta = BTreeMap::new();
    meta.insert("kind".into(), "congestion_classifier".into());
    meta.insert("offset".into(), c.dataset.offset.to_string());
    meta.insert("seed".into(), cfg.seed.to_string());
    trained.model.save(&out.path("classifier.json"), meta)?;

    let mut w = csv::Writer::from_writer(out.create("epochs.csv")?);
    w.write_record(["epoch", "train_loss", "train_accuracy", "val_accuracy"])?;
    for e in &trained.history {
        w.write_record([
            e.epoch.to_string(),
            e.train_loss.to_string(),
            e.train_accuracy.to_string(),
            e.val_accuracy.to_string(),
        ])?;
    }
    w.flush()?;
    drop(w);
    write_confusion_csv(out.create("confusion.csv")?, &trained.confusion)?;

    let stride = (dataset.rows.len() / c.kmeans_rows.max(1)).max(1);
    let picked: Vec<_> = dataset.rows.iter().step_by(stride).take(c.kmeans_rows).collect();
    let norm: &Standardizer = trained.model.norm();
    let points: Vec<Vec<f64>> = picked.iter().map(|r| norm.apply(&r.features)).collect();
    if points.len() >= c.kmeans_k && c.kmeans_k > 0 {
        let km = kmeans(&points, c.kmeans_k, cfg.seed, 300)?;
        let mut sizes = vec![0; c.kmeans_k];
        let mut composition = vec![[0usize; N_CLASSES]; c.kmeans_k];
        for (a, r) in km.assignments.iter().zip(&picked) {
            sizes[*a] += 1;
            composition[*a][r.label.index()] += 1;
        }
        let summary = KMeansSummary {
            k: c.kmeans_k,
            n_points: points.len(),
            iterations: km.iterations,
            converged: km.converged,
            inertia: km.inertia(),
            silhouette: silhouette(&points, &km.assignments, c.kmeans_k),
            cluster_sizes: sizes,
            composition,
            labels: CongestionLabel::ALL.iter().map(|l| l.as_str()).collect(),
            centroids: km.centroids.clone(),
        };
        println!("k-means k={} silhouette {:.3}", summary.k, summary.silhouette);
        out.write_json("kmeans.json", &summary)?;
    } else {
        warn!("too few rows for k-means with k = {}", c.kmeans_k);
    }

    out.finish("train-classifier", cfg)?;
    let last = trained.history.last();
    println!(
        "dataset {} rows (class counts {:?}), {} epochs, validation accuracy {:.3}",
        dataset.rows.len(),
        dataset.class_counts(),
        trained.history.len(),
        last.map(|e| e.val_accuracy).unwrap_or(f64::NAN)
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// Reinforcement learning

pub fn train_rl(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let mut out = Outputs::new(&cfg.out)?;
    let env_cfg = cfg.rl.env.clone();
    env_cfg.rollout.validate().map_err(|e| invalid(e.to_string()))?;
    cfg.rl.ppo.validate().map_err(|e| invalid(e.to_string()))?;
    let labeler = labeler(cfg, &mut out)?;
    let hv = match env_cfg.rollout.perturbation_window {
        Some(_) => Some(hv_model(cfg, &mut out)?),
        None => None,
    };
    let frozen = match env_cfg.role {
        TrainRole::Followers => Some(load_policy(&cfg.models.leader_policy, "leader_policy", &mut out)?),
        TrainRole::Leader => None,
    };
    let mut env = RingEnv::new(env_cfg.clone(), labeler, hv.as_ref(), frozen).map_err(|e| invalid(e.to_string()))?;
    let outcome = ppo_train(&mut env, &cfg.rl.ppo, |s| {
        if s.iteration % 10 == 0 {
            info!(
                "iteration {} mean reward {:.2} kl {:.4} log_std {:.3}",
                s.iteration, s.mean_reward, s.kl, s.log_std
            );
        }
    })?;
    let mut meta = BTreeMap::new();
    meta.insert("reward".into(), format!("{:?}", env_cfg.reward).to_lowercase());
    meta.insert("role".into(), format!("{:?}", env_cfg.role).to_lowercase());
    meta.insert("penetration".into(), env_cfg.rollout.rv_penetration.to_string());
    meta.insert("seed".into(), cfg.rl.ppo.seed.to_string());
    outcome.policy.save(&out.path("policy.json"), meta.clone())?;
    outcome.value.save(&out.path("value.json"), Some(&env.obs_scale()), meta)?;
    write_curve_csv(out.create("curve.csv")?, &outcome.curve)?;
    out.finish("train-rl", cfg)?;
    let r: Vec<f64> = outcome.curve.iter().map(|s| s.mean_reward).collect();
    if let (Some(first), Some(last)) = (r.first(), r.last()) {
        println!("{} iterations, mean reward {:.2} -> {:.2}", r.len(), first, last);
    }
    if r.iter().any(|x| !x.is_finite()) {
        bail!("training produced non-finite rewards");
    }
    Ok(())
}
