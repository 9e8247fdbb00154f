//! Summary statistics derived from episode records.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::MetricsConfig;
use super::episode::EpisodeRecord;

/// Fraction of `true` entries; 0 for an empty slice.
pub fn success_rate(flags: &[bool]) -> f64 {
    if flags.is_empty() {
        return 0.0;
    }
    flags.iter().filter(|s| **s).count() as f64 / flags.len() as f64
}

/// Trailing-window success rate at every episode. Early entries average over
/// the episodes seen so far.
pub fn rolling_curve(flags: &[bool], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(flags.len());
    let mut count = 0usize;
    for (i, &s) in flags.iter().enumerate() {
        count += s as usize;
        if i >= window {
            count -= flags[i - window] as usize;
        }
        out.push(count as f64 / (i + 1).min(window) as f64);
    }
    out
}

/// Smallest episode count `e ≥ window` whose trailing window `(e − w, e]`
/// reaches `target_rate`.
pub fn adaptation_time(flags: &[bool], target_rate: f64, window: usize) -> Option<usize> {
    if window == 0 || flags.len() < window {
        return None;
    }
    let mut count = flags[..window].iter().filter(|s| **s).count();
    for e in window..=flags.len() {
        if e > window {
            count += flags[e - 1] as usize;
            count -= flags[e - 1 - window] as usize;
        }
        if count as f64 / window as f64 >= target_rate {
            return Some(e);
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adaptation {
    pub target_rate: f64,
    pub window: usize,
    /// `None` means the target was not reached.
    pub episode: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityRow {
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub first_window: usize,
    pub first_window_success_rate: f64,
    pub final_window: usize,
    pub final_window_success_rate: f64,
    pub retries: usize,
    pub pseudo_labels: usize,
    pub mean_quality: f64,
    pub adaptation: Adaptation,
    /// Keyed by object speed in m/s, three decimals.
    pub per_velocity: BTreeMap<String, VelocityRow>,
    pub rolling_window: usize,
    pub rolling_curve: Vec<f64>,
}

pub fn velocity_key(speed: f64) -> String {
    format!("{speed:.3}")
}

pub fn summarize(records: &[EpisodeRecord], config: &MetricsConfig) -> MetricsSummary {
    let flags: Vec<bool> = records.iter().map(|r| r.success).collect();
    let n = flags.len();
    let first = &flags[..config.first_window.min(n)];
    let last = &flags[n - config.final_window.min(n)..];

    let mut per_velocity: BTreeMap<String, VelocityRow> = BTreeMap::new();
    for r in records {
        let row = per_velocity.entry(velocity_key(r.object.speed)).or_insert(VelocityRow {
            episodes: 0,
            successes: 0,
            success_rate: 0.0,
        });
        row.episodes += 1;
        row.successes += r.success as usize;
    }
    for row in per_velocity.values_mut() {
        row.success_rate = row.successes as f64 / row.episodes as f64;
    }

    MetricsSummary {
        episodes: n,
        successes: flags.iter().filter(|s| **s).count(),
        success_rate: success_rate(&flags),
        first_window: first.len(),
        first_window_success_rate: success_rate(first),
        final_window: last.len(),
        final_window_success_rate: success_rate(last),
        retries: records.iter().map(|r| r.retries as usize).sum(),
        pseudo_labels: records.iter().filter(|r| r.pseudo_label).count(),
        mean_quality: if n == 0 {
            0.0
        } else {
            records.iter().map(|r| r.quality).sum::<f64>() / n as f64
        },
        adaptation: Adaptation {
            target_rate: config.adaptation_rate,
            window: config.adaptation_window,
            episode: adaptation_time(&flags, config.adaptation_rate, config.adaptation_window),
        },
        per_velocity,
        rolling_window: config.rolling_window,
        rolling_curve: rolling_curve(&flags, config.rolling_window),
    }
}
