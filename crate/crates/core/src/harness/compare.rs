//! Runs several configs over several seeds and summarizes them side by side.
//!
//! Per run, "avg" is the mean target accuracy over the last quarter of
//! epoch-end evaluations and "best" is the maximum over all of them.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DomainDataset;
use crate::error::{Error, Result};

use super::config::{TrainConfig, Variant};
use super::train::{train_on, TrainOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub variant: Variant,
    pub seed: u64,
    pub avg_target_accuracy: f64,
    pub best_target_accuracy: f64,
    pub final_source_accuracy: f64,
    /// Mean recorded hardness of each training epoch.
    pub epoch_hardness: Vec<f64>,
    /// Mean recorded hardness over the first and last quarter of training iterations.
    pub first_quarter_hardness: f64,
    pub last_quarter_hardness: f64,
    /// Confusion degree after each training epoch.
    pub confusion: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRow {
    pub label: String,
    pub variant: Variant,
    pub runs: usize,
    pub mean_target_accuracy: f64,
    pub best_target_accuracy: f64,
    pub mean_source_accuracy: f64,
    /// Least-squares slope of per-epoch hardness, averaged over seeds.
    pub hardness_slope: f64,
    pub first_quarter_hardness: f64,
    pub last_quarter_hardness: f64,
    /// Per-epoch confusion degree, averaged over seeds.
    pub confusion_curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<VariantRow>,
    pub runs: Vec<RunSummary>,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Least-squares slope of `ys` against `0, 1, 2, ...`.
pub fn slope(ys: &[f64]) -> f64 {
    let n = ys.len();
    if n < 2 {
        return 0.0;
    }
    let mx = (n - 1) as f64 / 2.0;
    let my = mean(ys);
    let (mut num, mut den) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - mx;
        num += dx * (y - my);
        den += dx * dx;
    }
    num / den
}

/// Mean of the first and of the last quarter of `xs` (at least one element each).
pub fn quarter_means(xs: &[f64]) -> (f64, f64) {
    let q = (xs.len() / 4).max(1).min(xs.len());
    (mean(&xs[..q]), mean(&xs[xs.len() - q..]))
}

/// Summarizes one finished run.
pub fn summarize(config: &TrainConfig, outcome: &TrainOutcome) -> Result<RunSummary> {
    let evals: Vec<_> = outcome.epochs.iter().filter_map(|e| e.eval.as_ref()).collect();
    if evals.is_empty() {
        return Err(Error::Config("run has no epoch evaluations to summarize".into()));
    }
    let target: Vec<f64> = evals
        .iter()
        .map(|e| {
            e.target_accuracy
                .ok_or_else(|| Error::Config("comparison needs held-out target labels".into()))
        })
        .collect::<Result<_>>()?;
    let tail = target.len().div_ceil(4);
    let hardness: Vec<f64> = outcome.train_records().map(|r| r.avg_gamma).collect();
    let (first_q, last_q) = quarter_means(&hardness);
    Ok(RunSummary {
        label: config.label(),
        variant: config.variant,
        seed: config.seed,
        avg_target_accuracy: mean(&target[target.len() - tail..]),
        best_target_accuracy: target.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        final_source_accuracy: evals.last().expect("non-empty").source_accuracy,
        epoch_hardness: outcome
            .epochs
            .iter()
            .filter(|e| e.eval.is_some())
            .map(|e| e.recorded_hardness)
            .collect(),
        first_quarter_hardness: first_q,
        last_quarter_hardness: last_q,
        confusion: evals.iter().map(|e| e.confusion_degree).collect(),
    })
}

/// Trains every config under every seed (in parallel) and aggregates per config.
pub fn compare_variants(configs: &[TrainConfig], seeds: &[u64]) -> Result<Comparison> {
    if configs.len() < 2 {
        return Err(Error::Config("compare needs at least two configs".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Config("compare needs at least one seed".into()));
    }
    for c in configs {
        c.validate()?;
    }
    let dataset: DomainDataset = configs[0].data.resolve()?;
    for c in &configs[1..] {
        if c.data != configs[0].data && c.data.resolve()? != dataset {
            return Err(Error::Config(format!(
                "config `{}` uses a different dataset than `{}`",
                c.label(),
                configs[0].label()
            )));
        }
    }

    let jobs: Vec<TrainConfig> = configs
        .iter()
        .flat_map(|c| {
            seeds.iter().map(move |&seed| TrainConfig {
                seed,
                evaluate_each_epoch: true,
                ..c.clone()
            })
        })
        .collect();
    let runs = jobs
        .par_iter()
        .map(|cfg| {
            let outcome = train_on(cfg, &dataset, None)?;
            summarize(cfg, &outcome)
        })
        .collect::<Result<Vec<_>>>()?;

    let rows = runs
        .chunks(seeds.len())
        .map(|group| {
            let epochs = group.iter().map(|r| r.confusion.len()).min().unwrap_or(0);
            VariantRow {
                label: group[0].label.clone(),
                variant: group[0].variant,
                runs: group.len(),
                mean_target_accuracy: mean(&group.iter().map(|r| r.avg_target_accuracy).collect::<Vec<_>>()),
                best_target_accuracy: group
                    .iter()
                    .map(|r| r.best_target_accuracy)
                    .fold(f64::NEG_INFINITY, f64::max),
                mean_source_accuracy: mean(
                    &group.iter().map(|r| r.final_source_accuracy).collect::<Vec<_>>(),
                ),
                hardness_slope: mean(&group.iter().map(|r| slope(&r.epoch_hardness)).collect::<Vec<_>>()),
                first_quarter_hardness: mean(
                    &group.iter().map(|r| r.first_quarter_hardness).collect::<Vec<_>>(),
                ),
                last_quarter_hardness: mean(
                    &group.iter().map(|r| r.last_quarter_hardness).collect::<Vec<_>>(),
                ),
                confusion_curve: (0..epochs)
                    .map(|e| mean(&group.iter().map(|r| r.confusion[e]).collect::<Vec<_>>()))
                    .collect(),
            }
        })
        .collect();
    Ok(Comparison { rows, runs })
}

impl Comparison {
    pub fn row(&self, label: &str) -> Option<&VariantRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "label,variant,runs,mean_target_accuracy,best_target_accuracy,mean_source_accuracy,\
             hardness_slope,first_quarter_hardness,last_quarter_hardness,confusion_curve\n",
        );
        for r in &self.rows {
            let curve: Vec<String> = r.confusion_curve.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.label,
                r.variant,
                r.runs,
                r.mean_target_accuracy,
                r.best_target_accuracy,
                r.mean_source_accuracy,
                r.hardness_slope,
                r.first_quarter_hardness,
                r.last_quarter_hardness,
                curve.join(";")
            );
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<14} {:>5} {:>9} {:>9} {:>9} {:>11} {:>9} {:>9} {:>9} {:>9}\n",
            "variant",
            "runs",
            "tgt avg",
            "tgt best",
            "src acc",
            "h slope",
            "h first",
            "h last",
            "conf 1",
            "conf end"
        );
        for r in &self.rows {
            let first = r.confusion_curve.first().copied().unwrap_or(f64::NAN);
            let last = r.confusion_curve.last().copied().unwrap_or(f64::NAN);
            let _ = writeln!(
                out,
                "{:<14} {:>5} {:>8.2}% {:>8.2}% {:>8.2}% {:>11.2e} {:>9.4} {:>9.4} {:>9.3} {:>9.3}",
                r.label,
                r.runs,
                100.0 * r.mean_target_accuracy,
                100.0 * r.best_target_accuracy,
                100.0 * r.mean_source_accuracy,
                r.hardness_slope,
                r.first_quarter_hardness,
                r.last_quarter_hardness,
                first,
                last
            );
        }
        out
    }
}
