//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion, then fails
//! if any criterion failed. Run with `--nocapture` to see the table.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

use ringsim::congestion::{LabelRules, Labeler};
use ringsim::controllers::ControllerKind;
use ringsim::rl::{ppo_train, ppo_train_from, GaussianPolicy, PpoConfig, RingEnv, RingEnvConfig, ToyEnv};
use ringsim::sim::{run_rollout, RolloutConfig, RolloutSetup, TrajectoryLog};

#[path = "../../core/tests/common/mod.rs"]
mod common;

type Check = Result<String, String>;

fn ringsim(dir: &Path, args: &[&str]) -> Result<std::process::Output, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ringsim"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("RINGSIM_CONFIG")
        .env_remove("RINGSIM_SEED")
        .env_remove("RINGSIM_ROLLOUTS")
        .env_remove("RINGSIM_OUT")
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("ringsim {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out)
}

fn timed<T>(f: impl FnOnce() -> Result<T, String>) -> Result<(T, Duration), String> {
    let t = Instant::now();
    let v = f()?;
    Ok((v, t.elapsed()))
}

/// Population std of speeds across vehicles at each recorded step.
fn speed_std(log: &TrajectoryLog) -> Vec<f64> {
    (0..log.n_steps())
        .map(|k| {
            let v: Vec<f64> = log.step_rows(k).iter().map(|r| r.vel_mps).collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
        })
        .collect()
}

fn determinism() -> Check {
    let a = TempDir::new().map_err(|e| e.to_string())?;
    let b = TempDir::new().map_err(|e| e.to_string())?;
    let args = ["simulate", "--seed", "11", "--rollouts", "1"];
    let (_, ta) = timed(|| ringsim(a.path(), &args))?;
    let (_, tb) = timed(|| ringsim(b.path(), &args))?;
    let x = std::fs::read(a.path().join("rollout_000.csv")).map_err(|e| e.to_string())?;
    let y = std::fs::read(b.path().join("rollout_000.csv")).map_err(|e| e.to_string())?;
    let rows = x.iter().filter(|&&c| c == b'\n').count() - 1;
    if rows != 4500 * 22 {
        return Err(format!("expected {} rows, got {rows}", 4500 * 22));
    }
    if x != y {
        return Err("trajectory CSVs differ".into());
    }
    let worst = ta.max(tb);
    if worst >= Duration::from_secs(30) {
        return Err(format!("rollout took {worst:.1?}"));
    }
    Ok(format!("byte-identical {} bytes, slowest run {worst:.2?}", x.len()))
}

fn stop_and_go() -> Check {
    let cfg = RolloutConfig { horizon_steps: 4500, ..Default::default() };
    let out = run_rollout(&cfg, &RolloutSetup::default(), None, None).map_err(|e| e.to_string())?;
    let std = speed_std(out.log.as_ref().unwrap());
    let first = std.iter().position(|&s| s > 0.5).ok_or_else(|| {
        format!("velocity std peaked at {:.3}", std.iter().copied().fold(0.0, f64::max))
    })?;
    let peak = std.iter().copied().fold(0.0, f64::max);
    Ok(format!("std > 0.5 first at step {first}, peak {peak:.2} m/s"))
}

fn fs_stabilises() -> Check {
    let cfg = RolloutConfig { rv_penetration: 0.05, horizon_steps: 4500, ..Default::default() };
    let setup = RolloutSetup { rv_controller: Some(ControllerKind::FollowerStopper), ..Default::default() };
    let out = run_rollout(&cfg, &setup, None, None).map_err(|e| e.to_string())?;
    let log = out.log.unwrap();
    if log.rv_ids.len() != 1 {
        return Err(format!("expected one RV, got {:?}", log.rv_ids));
    }
    let std = speed_std(&log);
    let w = cfg.warmup_steps as usize;
    let at_warmup = std[w];
    let after = std[w..w + 2000].iter().position(|&s| s < 0.1).ok_or_else(|| {
        format!("std still {:.3} after 2000 steps (was {at_warmup:.3} at warmup)", std[w + 1999])
    })?;
    Ok(format!("std {at_warmup:.2} at warmup, < 0.1 after {after} steps"))
}

fn classifier() -> Check {
    let d = TempDir::new().map_err(|e| e.to_string())?;
    let (_, t) = timed(|| ringsim(d.path(), &["train-classifier", "--seed", "0"]))?;
    let mut r = csv::Reader::from_path(d.path().join("epochs.csv")).map_err(|e| e.to_string())?;
    let last = r.records().last().ok_or("no epochs logged")?.map_err(|e| e.to_string())?;
    let acc: f64 = last[3].parse().map_err(|_| "bad accuracy column".to_string())?;
    if !d.path().join("confusion.csv").exists() {
        return Err("confusion.csv missing".into());
    }
    if acc < 0.90 {
        return Err(format!("validation accuracy {acc:.3} < 0.90"));
    }
    if t >= Duration::from_secs(300) {
        return Err(format!("training took {t:.1?}"));
    }
    Ok(format!("validation accuracy {acc:.3} in {t:.1?}, confusion.csv written"))
}

/// Starts the toy policy at mean action near 1 so that passing needs learning.
fn toy_ppo() -> Check {
    let mut env = ToyEnv::new(2, 1);
    let cfg = PpoConfig {
        learning_rate: 3e-3,
        iterations: 50,
        episodes_per_iteration: 256,
        seed: 0,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut init = GaussianPolicy::new(&cfg.hidden, ringsim::nn::Standardizer::identity(2), cfg.init_log_std, &mut rng)
        .map_err(|e| e.to_string())?;
    *init.mean.params_mut().last_mut().unwrap() += 1.0;
    let mean_abs = |p: &GaussianPolicy| -> Result<f64, String> {
        let mut r = ChaCha8Rng::seed_from_u64(99);
        let mut s = 0.0;
        for _ in 0..1000 {
            let o = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
            s += p.mean_action(&o).map_err(|e| e.to_string())?.abs();
        }
        Ok(s / 1000.0)
    };
    let before = mean_abs(&init)?;
    let out = ppo_train_from(&mut env, &cfg, Some(init), |_| {}).map_err(|e| e.to_string())?;
    let after = mean_abs(&out.policy)?;
    if after >= 0.1 {
        return Err(format!("mean |a| {before:.3} -> {after:.3}"));
    }
    Ok(format!("mean |a| {before:.3} -> {after:.3}"))
}

fn ring_ppo() -> Check {
    let mut env = RingEnv::new(RingEnvConfig::default(), Labeler::Rules(LabelRules::default()), None, None)
        .map_err(|e| e.to_string())?;
    let cfg = PpoConfig { reward_scale: 0.01, seed: 0, ..Default::default() };
    let (out, t) = timed(|| ppo_train(&mut env, &cfg, |_| {}).map_err(|e| e.to_string()))?;
    let r: Vec<f64> = out.curve.iter().map(|s| s.mean_reward).collect();
    let q = r.len() / 4;
    let first = r[..q].iter().sum::<f64>() / q as f64;
    let last = r[r.len() - q..].iter().sum::<f64>() / q as f64;
    if t >= Duration::from_secs(3600) {
        return Err(format!("training took {t:.0?}"));
    }
    if last <= first {
        return Err(format!("quartile mean reward {first:.1} -> {last:.1}"));
    }
    Ok(format!("{} iterations, quartile mean reward {first:.1} -> {last:.1} in {t:.0?}", r.len()))
}

fn ppo() -> Check {
    let toy = toy_ppo().map_err(|e| format!("toy: {e}"))?;
    let ring = ring_ppo().map_err(|e| format!("ring: {e}"))?;
    Ok(format!("toy {toy}; ring {ring}"))
}

/// Reports the all-IDM baseline under the perturbation protocol without gating it.
fn throughput() -> Check {
    let anchor = common::steady_throughput()?;
    let d = TempDir::new().map_err(|e| e.to_string())?;
    std::fs::write(d.path().join("c.toml"), "protocol = true\n").map_err(|e| e.to_string())?;
    let cfg = d.path().join("c.toml");
    ringsim(d.path(), &["simulate", "--config", cfg.to_str().unwrap(), "--rollouts", "1"])?;
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("report.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let q = report["throughput"]["mean"].as_f64().unwrap_or(f64::NAN);
    Ok(format!("{anchor}; IDM baseline under perturbations {q:.0} veh/h (reported only)"))
}

#[test]
fn acceptance() {
    let criteria: Vec<(&str, fn() -> Check)> = vec![
        ("determinism and rollout runtime", determinism),
        ("controller formula oracles", common::all_controller_oracles),
        ("stop-and-go emergence", stop_and_go),
        ("follower-stopper stabilisation", fs_stabilises),
        ("triangular duration sampler", common::triangular_goodness_of_fit),
        ("perturbation frequency", || common::schedule_counts(200)),
        ("reward transcription", common::reward_grids),
        ("classifier self-consistency", classifier),
        ("gradient correctness", || common::gradient_suite(100)),
        ("PPO sanity", ppo),
        ("throughput anchor", throughput),
        ("TTC/DRAC anchors", common::ttc_drac_anchors),
        ("filter boundary suite", common::filter_boundaries),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let result = check();
        let secs = t.elapsed().as_secs_f64();
        match &result {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.1} s): {detail}", i + 1),
            Err(why) => {
                println!("FAIL {:>2} {name} ({secs:.1} s): {why}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
