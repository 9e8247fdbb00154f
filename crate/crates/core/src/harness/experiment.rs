//! Experiments: pretraining and threshold calibration, sequential episode
//! runs, learner comparisons, velocity sweeps and log re-summarization.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::{Scenario, ScenarioConfig};
use super::episode::{run_episode, EpisodeOptions, EpisodeRecord, World};
use super::log::{
    ensure_dir, read_log, write_csv, write_json, JsonlWriter, LogHeader, LogLine, PretrainSummary, CURVE_FILE,
    EPISODES_FILE, LOG_FORMAT, LOG_VERSION, SUMMARY_FILE,
};
use super::metrics::{summarize, MetricsSummary};
use crate::learner::{reset_success_head, supervised_pretrain_with_history, Learner, LearnerKind};
use crate::pose::GraspPose;
use crate::predictor::{init_params, FeatureVector, ModelParams};
use crate::rng;
use crate::world::{actuate, execute_grasp, oracle_grasp_pose, Tolerances};
use crate::{Error, Result};

/// Learner-independent state shared by every learner run on one seed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub seed: u64,
    pub params: ModelParams,
    pub tau_threshold: f64,
    pub pretrain: PretrainSummary,
}

/// Oracle-labelled observations from the static scenario.
pub fn pretrain_dataset(config: &ScenarioConfig, seed: u64) -> Result<Vec<(FeatureVector, GraspPose)>> {
    let world = World::new(Scenario::Static, config.world, f64::INFINITY)?;
    Ok((0..config.pretrain_samples)
        .map(|i| {
            let object = world.spawn(seed, "pretrain-spawn", i);
            let mut sense = rng::stream(seed, "pretrain-sense", i as u64);
            let wrench = world.idle_wrench(&mut sense);
            let obs = world.observe(&object, wrench, &mut sense);
            (
                obs.features,
                oracle_grasp_pose(&object, config.world.gripper.approach_offset),
            )
        })
        .collect())
}

/// `factor × median S_F` over oracle grasps with actuation noise on static spawns.
pub fn calibrate_tau(config: &ScenarioConfig, seed: u64) -> Result<f64> {
    let w = &config.world;
    let world = World::new(Scenario::Static, *w, f64::INFINITY)?;
    let tol = Tolerances {
        r_pos: w.r_pos,
        r_ang: w.r_ang,
        tau_threshold: f64::INFINITY,
    };
    let mut values: Vec<f64> = (0..w.calibration_grasps)
        .map(|i| {
            let object = world.spawn(seed, "calibration-spawn", i);
            let mut r = rng::stream(seed, "calibration", i as u64);
            let oracle = oracle_grasp_pose(&object, w.gripper.approach_offset);
            let executed = actuate(&oracle, w.actuation_position_sigma, w.actuation_angle_sigma, &mut r);
            execute_grasp(&executed, &object, &tol, &w.gripper, &world.noise, &mut r).stability
        })
        .collect();
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let median = if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    };
    Ok(w.tau_calibration_factor * median)
}

pub fn prepare(config: &ScenarioConfig, seed: u64) -> Result<Prepared> {
    config.validate()?;
    let arch = config.architecture()?;
    let init = init_params(&arch, &mut rng::stream(seed, "init", 0))?;
    let dataset = pretrain_dataset(config, seed)?;
    let (mut params, history) = supervised_pretrain_with_history(&init, &dataset, &config.hyperparams)?;
    if config.hyperparams.reset_success_head {
        reset_success_head(&mut params);
    }
    let tau_threshold = match config.world.tau_threshold {
        Some(t) => t,
        None => calibrate_tau(config, seed)?,
    };
    Ok(Prepared {
        seed,
        params,
        tau_threshold,
        pretrain: PretrainSummary {
            samples: dataset.len(),
            epochs: config.hyperparams.pretrain_epochs,
            initial_loss: history[0],
            final_loss: *history.last().expect("history has the initial entry"),
        },
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub header: LogHeader,
    pub records: Vec<EpisodeRecord>,
    pub summary: MetricsSummary,
    pub final_params: ModelParams,
}

fn fmt_f(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<usize>) -> String {
    v.map(|e| e.to_string()).unwrap_or_default()
}

pub fn write_outputs(dir: &Path, result: &ExperimentResult) -> Result<()> {
    ensure_dir(dir)?;
    let mut log = JsonlWriter::create(&dir.join(EPISODES_FILE))?;
    log.write(&LogLine::Header(result.header.clone()))?;
    for r in &result.records {
        log.write(&LogLine::Episode(r.clone()))?;
    }
    log.finish()?;
    let rows: Vec<Vec<String>> = result
        .records
        .iter()
        .zip(&result.summary.rolling_curve)
        .map(|(r, c)| {
            vec![
                r.index.to_string(),
                (r.success as u8).to_string(),
                r.retries.to_string(),
                fmt_f(*c),
            ]
        })
        .collect();
    write_csv(
        &dir.join(CURVE_FILE),
        &["episode", "success", "retries", "rolling_success"],
        &rows,
    )?;
    write_json(&dir.join(SUMMARY_FILE), &result.summary)
}

/// Run `config.episodes` episodes sequentially from prepared state.
pub fn run_prepared(config: &ScenarioConfig, prepared: &Prepared) -> Result<ExperimentResult> {
    let world = World::new(config.scenario, config.world, prepared.tau_threshold)?;
    let mut learner = Learner::new(config.learner, prepared.params.clone(), config.hyperparams);
    let options = EpisodeOptions {
        log_observations: config.log_observations,
        log_wall_time: config.log_wall_time,
    };
    let records = (0..config.episodes)
        .map(|e| run_episode(&mut learner, &world, prepared.seed, e, options))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&records, &config.metrics);
    let mut logged = config.clone();
    logged.seed = prepared.seed;
    Ok(ExperimentResult {
        header: LogHeader {
            format: LOG_FORMAT.into(),
            version: LOG_VERSION,
            seed: prepared.seed,
            tolerances: world.tolerances,
            pretrain: prepared.pretrain.clone(),
            config: logged,
        },
        records,
        summary,
        final_params: learner.params,
    })
}

/// Prepare, run, and write outputs to `out` when given.
pub fn run_experiment(config: &ScenarioConfig, out: Option<&Path>) -> Result<ExperimentResult> {
    if let Some(dir) = out {
        ensure_dir(dir)?;
    }
    let prepared = prepare(config, config.seed)?;
    let result = run_prepared(config, &prepared)?;
    if let Some(dir) = out {
        write_outputs(dir, &result)?;
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub learner: LearnerKind,
    pub seed: u64,
    pub first_window_success_rate: f64,
    pub final_window_success_rate: f64,
    pub success_rate: f64,
    pub adaptation_episode: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonMean {
    pub learner: LearnerKind,
    pub first_window_success_rate: f64,
    pub final_window_success_rate: f64,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub scenario: Scenario,
    pub episodes: usize,
    pub rows: Vec<ComparisonRow>,
    pub means: Vec<ComparisonMean>,
}

/// Reference success rates (percent) reported for the original system.
pub const REFERENCE_RATES: [(&str, f64); 4] = [
    ("ssl static", 85.0),
    ("ssl dynamic", 78.0),
    ("reward-driven", 65.0),
    ("supervised", 60.0),
];

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn dedup_learners(learners: &[LearnerKind]) -> Vec<LearnerKind> {
    let mut out: Vec<LearnerKind> = Vec::new();
    for l in learners {
        if !out.contains(l) {
            out.push(*l);
        }
    }
    out
}

/// Every listed learner on every seed with identical scenarios. Seeds run in
/// parallel; each seed's pretrained parameters are shared by its learners.
pub fn compare_learners(config: &ScenarioConfig, out: Option<&Path>) -> Result<Comparison> {
    config.validate()?;
    let learners = dedup_learners(&config.learners);
    if let Some(dir) = out {
        ensure_dir(dir)?;
    }
    let per_seed: Vec<Vec<ComparisonRow>> = config
        .seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<ComparisonRow>> {
            let prepared = prepare(config, seed)?;
            learners
                .iter()
                .map(|&learner| {
                    let run_config = ScenarioConfig {
                        learner,
                        seed,
                        ..config.clone()
                    };
                    let result = run_prepared(&run_config, &prepared)?;
                    if let Some(dir) = out {
                        write_outputs(&run_dir(dir, learner, seed), &result)?;
                    }
                    let s = &result.summary;
                    Ok(ComparisonRow {
                        learner,
                        seed,
                        first_window_success_rate: s.first_window_success_rate,
                        final_window_success_rate: s.final_window_success_rate,
                        success_rate: s.success_rate,
                        adaptation_episode: s.adaptation.episode,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for learner in &learners {
        rows.extend(per_seed.iter().flatten().filter(|r| r.learner == *learner).cloned());
    }
    let means = learners
        .iter()
        .map(|&learner| {
            let mine = || rows.iter().filter(move |r| r.learner == learner);
            ComparisonMean {
                learner,
                first_window_success_rate: mean(mine().map(|r| r.first_window_success_rate)),
                final_window_success_rate: mean(mine().map(|r| r.final_window_success_rate)),
                success_rate: mean(mine().map(|r| r.success_rate)),
            }
        })
        .collect();
    let comparison = Comparison {
        scenario: config.scenario,
        episodes: config.episodes,
        rows,
        means,
    };
    if let Some(dir) = out {
        write_comparison_csv(&dir.join("compare.csv"), &comparison)?;
    }
    Ok(comparison)
}

pub fn run_dir(root: &Path, learner: LearnerKind, seed: u64) -> PathBuf {
    root.join("runs").join(format!("{learner}-seed{seed}"))
}

fn write_comparison_csv(path: &Path, c: &Comparison) -> Result<()> {
    let mut rows: Vec<Vec<String>> = c
        .rows
        .iter()
        .map(|r| {
            vec![
                r.learner.to_string(),
                r.seed.to_string(),
                fmt_f(r.first_window_success_rate),
                fmt_f(r.final_window_success_rate),
                fmt_f(r.success_rate),
                fmt_opt(r.adaptation_episode),
            ]
        })
        .collect();
    rows.extend(c.means.iter().map(|m| {
        vec![
            m.learner.to_string(),
            "mean".into(),
            fmt_f(m.first_window_success_rate),
            fmt_f(m.final_window_success_rate),
            fmt_f(m.success_rate),
            String::new(),
        ]
    }));
    write_csv(
        path,
        &[
            "learner",
            "seed",
            "first_window_success",
            "final_window_success",
            "overall_success",
            "adaptation_episode",
        ],
        &rows,
    )
}

/// Console table of mean rates with the reference values alongside.
pub fn format_comparison(c: &Comparison) -> String {
    let mut s = format!(
        "scenario {} | {} episodes | {} seeds\n",
        c.scenario,
        c.episodes,
        c.rows
            .iter()
            .filter(|r| Some(r.learner) == c.means.first().map(|m| m.learner))
            .count()
    );
    s.push_str(&format!(
        "{:<30} {:>12} {:>12} {:>12}\n",
        "learner", "first-window", "final-window", "overall"
    ));
    for m in &c.means {
        s.push_str(&format!(
            "{:<30} {:>11.1}% {:>11.1}% {:>11.1}%\n",
            m.learner.display_name(),
            100.0 * m.first_window_success_rate,
            100.0 * m.final_window_success_rate,
            100.0 * m.success_rate
        ));
    }
    s.push_str("reference rates (context only, not targets):\n");
    for (name, rate) in REFERENCE_RATES {
        s.push_str(&format!("  {name:<16} {rate:.0}%\n"));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub speed: f64,
    pub learner: LearnerKind,
    pub seeds: Vec<u64>,
    pub final_window_success_rate: f64,
    pub success_rate: f64,
}

/// One experiment per speed, learner and base seed; speed index `i` runs on
/// seed `base + i`. A static base scenario is swept as `dynamic_linear`.
pub fn velocity_sweep(config: &ScenarioConfig, out: Option<&Path>) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let learners = dedup_learners(&config.learners);
    let scenario = match config.scenario {
        Scenario::Static => Scenario::DynamicLinear,
        s => s,
    };
    let jobs: Vec<(usize, u64)> = (0..config.speeds.len())
        .flat_map(|i| config.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let results: Vec<(usize, Vec<(LearnerKind, u64, MetricsSummary)>)> = jobs
        .par_iter()
        .map(|&(i, base)| -> Result<_> {
            let seed = base.wrapping_add(i as u64);
            let mut run_config = config.clone();
            run_config.scenario = scenario;
            run_config.seed = seed;
            run_config.world.speed = Some(config.speeds[i]);
            let prepared = prepare(&run_config, seed)?;
            let per_learner = learners
                .iter()
                .map(|&learner| {
                    run_config.learner = learner;
                    run_prepared(&run_config, &prepared).map(|r| (learner, seed, r.summary))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((i, per_learner))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (i, &speed) in config.speeds.iter().enumerate() {
        for &learner in &learners {
            let mine: Vec<&(LearnerKind, u64, MetricsSummary)> = results
                .iter()
                .filter(|(j, _)| *j == i)
                .flat_map(|(_, v)| v.iter())
                .filter(|(l, _, _)| *l == learner)
                .collect();
            rows.push(SweepRow {
                speed,
                learner,
                seeds: mine.iter().map(|(_, s, _)| *s).collect(),
                final_window_success_rate: mean(mine.iter().map(|(_, _, m)| m.final_window_success_rate)),
                success_rate: mean(mine.iter().map(|(_, _, m)| m.success_rate)),
            });
        }
    }
    if let Some(dir) = out {
        ensure_dir(dir)?;
        let table: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                vec![
                    fmt_f(r.speed),
                    r.learner.to_string(),
                    r.seeds.len().to_string(),
                    fmt_f(r.final_window_success_rate),
                    fmt_f(r.success_rate),
                ]
            })
            .collect();
        write_csv(
            &dir.join("sweep.csv"),
            &["speed", "learner", "seeds", "final_window_success", "overall_success"],
            &table,
        )?;
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct Report {
    pub header: LogHeader,
    pub summary: MetricsSummary,
    /// Episodes whose logged success flag disagrees with the criterion.
    pub inconsistent: Vec<usize>,
    /// Whether a stored summary exists and equals the recomputed one.
    pub stored_summary_matches: Option<bool>,
}

/// Recompute the summary from a log file (or a directory holding one).
pub fn report(path: &Path) -> Result<Report> {
    let (dir, log_path) = if path.is_dir() {
        (path.to_path_buf(), path.join(EPISODES_FILE))
    } else {
        (
            path.parent().map(Path::to_path_buf).unwrap_or_default(),
            path.to_path_buf(),
        )
    };
    let (header, records) = read_log(&log_path)?;
    let inconsistent = records
        .iter()
        .filter(|r| {
            r.success
                != crate::world::success_criterion(
                    r.position_error,
                    r.orientation_error,
                    r.stability,
                    &header.tolerances,
                )
        })
        .map(|r| r.index)
        .collect();
    let summary = summarize(&records, &header.config.metrics);
    let stored_path = dir.join(SUMMARY_FILE);
    let stored_summary_matches = if stored_path.exists() {
        let text = std::fs::read_to_string(&stored_path).map_err(|e| Error::io(&stored_path, e))?;
        let stored: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Log {
            path: stored_path.clone(),
            message: e.to_string(),
        })?;
        let fresh = serde_json::to_value(&summary).map_err(|e| Error::Log {
            path: stored_path.clone(),
            message: e.to_string(),
        })?;
        Some(stored == fresh)
    } else {
        None
    };
    Ok(Report {
        header,
        summary,
        inconsistent,
        stored_summary_matches,
    })
}
