//! Strategy matrix: baselines, ablations, summary tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::dataio::{gen_two_task, GeneratorConfig, TaskData};
use crate::distribution::{cluster_to_mean_distance, distribution_weights, ClusterModel, DistanceKind, DistributionWeights};
use crate::error::{Error, Result};
use crate::nn::Task;
use crate::textio::{fmt_f64, parse_f64, read_to_string, write_file_atomically};
use crate::trainer::{train, History, Strategy, TrainConfig};
use crate::weighting::WeightMode;

/// A named training recipe.
#[derive(Debug, Clone, PartialEq)]
pub struct RosterEntry {
    pub id: String,
    pub strategy: Strategy,
    pub weight_mode: WeightMode,
    pub distance: DistanceKind,
}

impl RosterEntry {
    fn new(id: &str, strategy: Strategy, weight_mode: WeightMode, distance: DistanceKind) -> Self {
        RosterEntry {
            id: id.to_string(),
            strategy,
            weight_mode,
            distance,
        }
    }

    /// `base` with this entry's strategy, weight mode, distance and `seed`.
    pub fn config(&self, base: &TrainConfig, seed: u64) -> TrainConfig {
        TrainConfig {
            strategy: self.strategy,
            weight_mode: self.weight_mode,
            distance: self.distance,
            seed,
            ..base.clone()
        }
    }
}

/// The eleven baselines and ablations, in report order.
pub fn default_roster() -> Vec<RosterEntry> {
    use DistanceKind::{Emd, Mmd};
    use Strategy::*;
    use WeightMode::*;
    vec![
        RosterEntry::new("stl", Stl, Full, Emd),
        RosterEntry::new("joint", Joint, Full, Emd),
        RosterEntry::new("mtl-wf", MtlWf, Full, Emd),
        RosterEntry::new("mtl-sa", MtlSa, Full, Emd),
        RosterEntry::new("mtl-sa-w0", MtlSa, Constant(0.0), Emd),
        RosterEntry::new("mtl-sa-w1", MtlSa, Constant(1.0), Emd),
        RosterEntry::new("mtl-sa-w0.5", MtlSa, Constant(0.5), Emd),
        RosterEntry::new("mtl-sa-only-wc", MtlSa, OnlyConfidence, Emd),
        RosterEntry::new("mtl-sa-only-wd", MtlSa, OnlyDensity, Emd),
        RosterEntry::new("mtl-sa-only-wg-emd", MtlSa, OnlyDistribution, Emd),
        RosterEntry::new("mtl-sa-only-wg-mmd", MtlSa, OnlyDistribution, Mmd),
    ]
}

/// Looks up roster ids; an unknown id lists the valid ones.
pub fn select_roster(ids: &[&str]) -> Result<Vec<RosterEntry>> {
    let roster = default_roster();
    ids.iter()
        .map(|id| {
            roster.iter().find(|e| e.id == *id).cloned().ok_or_else(|| {
                let valid: Vec<&str> = roster.iter().map(|e| e.id.as_str()).collect();
                Error::InvalidConfig(format!("unknown strategy '{id}' (valid: {})", valid.join(", ")))
            })
        })
        .collect()
}

/// Data for the cells of a matrix.
#[derive(Debug, Clone)]
pub enum MatrixData<'a> {
    /// One fixed pair shared by every seed; the seed only changes training.
    Fixed(&'a TaskData),
    /// A fresh pair per seed, generated with that seed and split with it.
    Generated {
        generator: GeneratorConfig,
        train_fraction: f64,
    },
}

impl MatrixData<'_> {
    fn for_seed(&self, seed: u64) -> Result<std::borrow::Cow<'_, TaskData>> {
        match self {
            MatrixData::Fixed(d) => Ok(std::borrow::Cow::Borrowed(*d)),
            MatrixData::Generated {
                generator,
                train_fraction,
            } => {
                let pair = gen_two_task(&GeneratorConfig {
                    seed,
                    ..generator.clone()
                })?;
                Ok(std::borrow::Cow::Owned(pair.split(*train_fraction, seed)?.data))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub strategy: String,
    pub seed: u64,
    pub test_acc_a: f64,
    pub test_acc_b: f64,
    pub history: History,
    pub seconds: f64,
}

impl RunResult {
    pub fn accuracy(&self, task: Task) -> f64 {
        match task {
            Task::A => self.test_acc_a,
            Task::B => self.test_acc_b,
        }
    }

    /// Average of the two task accuracies.
    pub fn mean_accuracy(&self) -> f64 {
        0.5 * (self.test_acc_a + self.test_acc_b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailedCell {
    pub strategy: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixOutcome {
    /// Sorted by roster position, then seed.
    pub results: Vec<RunResult>,
    pub failures: Vec<FailedCell>,
}

fn run_cell(entry: &RosterEntry, base: &TrainConfig, data: &MatrixData<'_>, seed: u64) -> Result<RunResult> {
    let start = Instant::now();
    let data = data.for_seed(seed)?;
    let out = train(&entry.config(base, seed), &data)?;
    let acc = |task: Task| {
        out.test_accuracy(&data, task)?
            .ok_or_else(|| Error::InvalidArgument(format!("no test set for task {}", task.name())))
    };
    Ok(RunResult {
        strategy: entry.id.clone(),
        seed,
        test_acc_a: acc(Task::A)?,
        test_acc_b: acc(Task::B)?,
        history: out.history,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Trains and evaluates every `(entry, seed)` cell in parallel. A failing cell
/// is recorded in `failures` and does not stop the others.
pub fn run_matrix(roster: &[RosterEntry], base: &TrainConfig, data: &MatrixData<'_>, seeds: &[u64]) -> Result<MatrixOutcome> {
    if roster.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument("matrix needs at least one strategy and one seed".into()));
    }
    let cells: Vec<(usize, u64)> = (0..roster.len())
        .flat_map(|e| seeds.iter().map(move |&s| (e, s)))
        .collect();
    let mut done: Vec<(usize, u64, Result<RunResult>)> = cells
        .into_par_iter()
        .map(|(e, s)| {
            let r = run_cell(&roster[e], base, data, s);
            if let Err(err) = &r {
                log::warn!("cell {} seed {s} failed: {err}", roster[e].id);
            }
            (e, s, r)
        })
        .collect();
    done.sort_by_key(|(e, s, _)| (*e, *s));
    let mut outcome = MatrixOutcome {
        results: Vec::new(),
        failures: Vec::new(),
    };
    for (e, seed, r) in done {
        match r {
            Ok(r) => outcome.results.push(r),
            Err(err) => outcome.failures.push(FailedCell {
                strategy: roster[e].id.clone(),
                seed,
                error: err.to_string(),
            }),
        }
    }
    Ok(outcome)
}

/// Distribution weights with each cluster's distance replaced by the squared
/// distance from its mean to the mean of the labeled domain's features.
pub fn only_wg_mmd_variant(model_unlabeled: &ClusterModel, features_labeled: &[Vec<f64>], lambda: f64) -> Result<DistributionWeights> {
    let d = cluster_to_mean_distance(model_unlabeled, features_labeled)?;
    distribution_weights(model_unlabeled, &d, lambda)
}

pub const RESULTS_HEADER: &str = "strategy,seed,test_acc_a,test_acc_b";

/// Per-cell accuracies, one row per result. Timing is left out so reruns
/// produce identical bytes.
pub fn results_csv(results: &[RunResult]) -> String {
    let mut out = format!("{RESULTS_HEADER}\n");
    for r in results {
        let _ = writeln!(out, "{},{},{},{}", r.strategy, r.seed, fmt_f64(r.test_acc_a), fmt_f64(r.test_acc_b));
    }
    out
}

/// Parses [`results_csv`] output. Histories come back empty and timings zero.
pub fn parse_results(text: &str, origin: &Path) -> Result<Vec<RunResult>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == RESULTS_HEADER => {}
        _ => return Err(Error::parse(origin, 1, "missing results header")),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let at = |m: String| Error::parse(origin, i + 1, m);
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(at(format!("expected 4 fields, found {}", f.len())));
            }
            let acc = |s: &str| {
                parse_f64(s)
                    .filter(|v| (0.0..=1.0).contains(v))
                    .ok_or_else(|| at(format!("bad accuracy '{s}'")))
            };
            Ok(RunResult {
                strategy: f[0].to_string(),
                seed: f[1].parse().map_err(|_| at(format!("bad seed '{}'", f[1])))?,
                test_acc_a: acc(f[2])?,
                test_acc_b: acc(f[3])?,
                history: History::default(),
                seconds: 0.0,
            })
        })
        .collect()
}

pub fn read_results(path: &Path) -> Result<Vec<RunResult>> {
    parse_results(&read_to_string(path)?, path)
}

/// Mean and sample standard deviation of one strategy on one task.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub strategy: String,
    pub task: Task,
    pub mean_acc: f64,
    pub std_acc: f64,
    pub n_seeds: usize,
}

/// Mean and sample (n - 1) standard deviation; the deviation of a single
/// value is 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One row per strategy and task, strategies in order of first appearance.
pub fn summarize(results: &[RunResult]) -> Vec<SummaryRow> {
    let mut order: Vec<&str> = Vec::new();
    let mut by: BTreeMap<&str, Vec<&RunResult>> = BTreeMap::new();
    for r in results {
        if !by.contains_key(r.strategy.as_str()) {
            order.push(&r.strategy);
        }
        by.entry(&r.strategy).or_default().push(r);
    }
    let mut rows = Vec::with_capacity(order.len() * 2);
    for s in order {
        for task in [Task::A, Task::B] {
            let accs: Vec<f64> = by[s].iter().map(|r| r.accuracy(task)).collect();
            let (mean_acc, std_acc) = mean_std(&accs);
            rows.push(SummaryRow {
                strategy: s.to_string(),
                task,
                mean_acc,
                std_acc,
                n_seeds: accs.len(),
            });
        }
    }
    rows
}

pub const REPORT_HEADER: &str = "strategy,task,mean_acc,std_acc,n_seeds";

pub fn report_csv(rows: &[SummaryRow]) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.strategy,
            r.task.name(),
            fmt_f64(r.mean_acc),
            fmt_f64(r.std_acc),
            r.n_seeds
        );
    }
    out
}

/// Whitespace-separated columns `index strategy task mean std`, with a
/// commented header, for plotting tools.
pub fn plot_data(rows: &[SummaryRow]) -> String {
    let mut out = String::from("# index strategy task mean std\n");
    for (i, r) in rows.iter().enumerate() {
        let _ = writeln!(out, "{i} {} {} {:.6} {:.6}", r.strategy, r.task.name(), r.mean_acc, r.std_acc);
    }
    out
}

/// Writes `report.csv` and `report.dat` into `dir`.
pub fn write_report(rows: &[SummaryRow], dir: &Path) -> Result<()> {
    write_file_atomically(&dir.join("report.csv"), &report_csv(rows))?;
    write_file_atomically(&dir.join("report.dat"), &plot_data(rows))
}

/// Seed-paired comparison of two strategies on the task-averaged accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedDifference {
    /// Mean of `x - y` over shared seeds.
    pub mean: f64,
    /// Standard error of that mean.
    pub standard_error: f64,
    pub n_seeds: usize,
}

pub fn paired_difference(results: &[RunResult], x: &str, y: &str) -> Result<PairedDifference> {
    let of = |id: &str| -> BTreeMap<u64, f64> {
        results
            .iter()
            .filter(|r| r.strategy == id)
            .map(|r| (r.seed, r.mean_accuracy()))
            .collect()
    };
    let (xs, ys) = (of(x), of(y));
    let diffs: Vec<f64> = xs
        .iter()
        .filter_map(|(s, vx)| ys.get(s).map(|vy| vx - vy))
        .collect();
    if diffs.is_empty() {
        return Err(Error::InvalidArgument(format!("no shared seeds between {x} and {y}")));
    }
    let (mean, std) = mean_std(&diffs);
    Ok(PairedDifference {
        mean,
        standard_error: std / (diffs.len() as f64).sqrt(),
        n_seeds: diffs.len(),
    })
}
