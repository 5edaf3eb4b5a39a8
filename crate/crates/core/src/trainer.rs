//! Alternating training on two disjoint datasets.
//!
//! After a joint warm start, epoch `t` (1-based) trains on dataset B when `t`
//! is even and on dataset A when it is odd. The active dataset supervises its
//! own head with its labels. The other head is supervised with targets built
//! from a snapshot taken at the start of the epoch: the snapshot's soft
//! prediction, its one-hot pseudo label and its temperature-sharpened form,
//! blended per sample by a weight in `[0, 1]`. Targets and weights are
//! computed once over the whole active dataset before the first update.
//!
//! Seeds derive from `TrainConfig::seed` by fixed offsets: network init uses
//! `seed`, the batch shuffle stream `seed + 1`, mixture fitting `seed + 2`,
//! and the second network of the single-task baseline `seed + 3`.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::confidence::confidence_weights;
use crate::dataio::{DisjointDataset, TaskData};
use crate::distribution::{domain_weights, DistanceKind, DomainWeightConfig};
use crate::error::{Error, Result};
use crate::labels::{interpolate, sharpen, to_pseudo, LabelVector};
use crate::nn::{Activation, AdamState, HeadTargets, MultiTaskNet, NetShape, Task};
use crate::textio::{fmt_f64, parse_f64, read_to_string, write_file_atomically};
use crate::weighting::{combine, SampleWeightRecord, WeightComponents, WeightMode};

pub const SHUFFLE_SEED_OFFSET: u64 = 1;
pub const CLUSTER_SEED_OFFSET: u64 = 2;
pub const SECOND_NET_SEED_OFFSET: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// One network per task, each trained only on its own dataset.
    Stl,
    /// One shared network on mixed batches; each sample supervises only its own head.
    Joint,
    /// Alternating training with sharpened soft labels as auxiliary targets.
    MtlWf,
    /// Alternating training with weighted pseudo/soft interpolation.
    MtlSa,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Stl, Strategy::Joint, Strategy::MtlWf, Strategy::MtlSa];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Stl => "stl",
            Strategy::Joint => "joint",
            Strategy::MtlWf => "mtl-wf",
            Strategy::MtlSa => "mtl-sa",
        }
    }

    pub fn is_alternating(self) -> bool {
        matches!(self, Strategy::MtlWf | Strategy::MtlSa)
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                let valid: Vec<&str> = Strategy::ALL.iter().map(|s| s.name()).collect();
                Error::InvalidConfig(format!("unknown strategy '{s}' (valid: {})", valid.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub strategy: Strategy,
    /// Only read by [`Strategy::MtlSa`].
    pub weight_mode: WeightMode,
    pub distance: DistanceKind,
    /// Alternating epochs after the warm start.
    pub epochs: usize,
    /// Joint-training passes before the first alternating epoch.
    pub init_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub temperature: f64,
    pub kappa: f64,
    pub lambda: f64,
    pub clusters_a: usize,
    pub clusters_b: usize,
    pub trunk_hidden: Vec<usize>,
    pub head_hidden: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            strategy: Strategy::MtlSa,
            weight_mode: WeightMode::Full,
            distance: DistanceKind::Emd,
            epochs: 20,
            init_epochs: 5,
            batch_size: 32,
            learning_rate: 1e-4,
            temperature: 2.0,
            kappa: 0.6,
            lambda: 0.1,
            clusters_a: 4,
            clusters_b: 4,
            trunk_hidden: vec![16],
            head_hidden: vec![8],
            activation: Activation::Tanh,
            seed: 0,
        }
    }
}

/// Keys accepted by [`TrainConfig::set`], in documentation order.
pub const TRAIN_KEYS: [&str; 16] = [
    "strategy",
    "weight_mode",
    "distance",
    "epochs",
    "init_epochs",
    "batch_size",
    "learning_rate",
    "temperature",
    "kappa",
    "lambda",
    "clusters_a",
    "clusters_b",
    "trunk_hidden",
    "head_hidden",
    "activation",
    "seed",
];

fn parse_sizes(value: &str) -> Result<Vec<usize>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad layer size '{s}'")))
        })
        .collect()
}

fn join_sizes(sizes: &[usize]) -> String {
    sizes.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.temperature >= 1.0 && self.temperature.is_finite()) {
            return fail(format!("temperature must be >= 1, got {}", self.temperature));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return fail(format!("kappa must lie in (0, 1), got {}", self.kappa));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return fail(format!("lambda must be positive, got {}", self.lambda));
        }
        if self.clusters_a == 0 || self.clusters_b == 0 {
            return fail("cluster counts must be positive".into());
        }
        if self.trunk_hidden.iter().chain(&self.head_hidden).any(|&s| s == 0) {
            return fail("hidden layer sizes must be positive".into());
        }
        self.weight_mode.validate()
    }

    /// Sets one key from its text form. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let bad = |what: &str| Error::InvalidConfig(format!("bad value '{value}' for {what}"));
        match key {
            "strategy" => self.strategy = value.parse()?,
            "weight_mode" => self.weight_mode = value.parse()?,
            "distance" => self.distance = value.parse()?,
            "epochs" => self.epochs = value.parse().map_err(|_| bad(key))?,
            "init_epochs" => self.init_epochs = value.parse().map_err(|_| bad(key))?,
            "batch_size" => self.batch_size = value.parse().map_err(|_| bad(key))?,
            "learning_rate" => self.learning_rate = value.parse().map_err(|_| bad(key))?,
            "temperature" => self.temperature = value.parse().map_err(|_| bad(key))?,
            "kappa" => self.kappa = value.parse().map_err(|_| bad(key))?,
            "lambda" => self.lambda = value.parse().map_err(|_| bad(key))?,
            "clusters_a" => self.clusters_a = value.parse().map_err(|_| bad(key))?,
            "clusters_b" => self.clusters_b = value.parse().map_err(|_| bad(key))?,
            "trunk_hidden" => self.trunk_hidden = parse_sizes(value)?,
            "head_hidden" => self.head_hidden = parse_sizes(value)?,
            "activation" => self.activation = value.parse()?,
            "seed" => self.seed = value.parse().map_err(|_| bad(key))?,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown training key '{other}' (valid: {})",
                    TRAIN_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Text form of one key, the inverse of [`set`](Self::set).
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "strategy" => self.strategy.name().to_string(),
            "weight_mode" => self.weight_mode.name(),
            "distance" => self.distance.name().to_string(),
            "epochs" => self.epochs.to_string(),
            "init_epochs" => self.init_epochs.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "learning_rate" => self.learning_rate.to_string(),
            "temperature" => self.temperature.to_string(),
            "kappa" => self.kappa.to_string(),
            "lambda" => self.lambda.to_string(),
            "clusters_a" => self.clusters_a.to_string(),
            "clusters_b" => self.clusters_b.to_string(),
            "trunk_hidden" => join_sizes(&self.trunk_hidden),
            "head_hidden" => join_sizes(&self.head_hidden),
            "activation" => self.activation.name().to_string(),
            "seed" => self.seed.to_string(),
            _ => return None,
        })
    }

    pub fn net_shape(&self, input_dim: usize, classes_a: usize, classes_b: usize) -> NetShape {
        let mut layer_sizes = vec![input_dim];
        layer_sizes.extend(&self.trunk_hidden);
        NetShape {
            layer_sizes,
            head_hidden: self.head_hidden.clone(),
            classes_a,
            classes_b,
            activation: self.activation,
        }
    }

    fn cluster_count(&self, task: Task) -> usize {
        match task {
            Task::A => self.clusters_a,
            Task::B => self.clusters_b,
        }
    }
}

/// Dataset trained on in alternating epoch `t`: B for even `t`, A for odd.
pub fn active_dataset(epoch: usize) -> Task {
    if epoch.is_multiple_of(2) {
        Task::B
    } else {
        Task::A
    }
}

/// One alternating epoch: its index, active dataset and frozen predictor.
#[derive(Debug, Clone)]
pub struct EpochPhase {
    pub epoch: usize,
    pub active: Task,
    pub snapshot: MultiTaskNet,
}

impl EpochPhase {
    /// Freezes `net` as the predictor for epoch `epoch` (1-based).
    pub fn begin(epoch: usize, net: &MultiTaskNet) -> Result<Self> {
        if epoch == 0 {
            return Err(Error::InvalidArgument("alternating epochs are numbered from 1".into()));
        }
        Ok(EpochPhase {
            epoch,
            active: active_dataset(epoch),
            snapshot: net.snapshot(),
        })
    }

    /// Task whose head is trained without ground truth in this epoch.
    pub fn augmented_task(&self) -> Task {
        self.active.other()
    }
}

/// Per-sample soft label, pseudo label and sharpened soft label.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxLabels {
    pub soft: Vec<LabelVector>,
    pub pseudo: Vec<LabelVector>,
    pub sharpened: Vec<LabelVector>,
}

/// Predictions of the frozen net's `augment_task` head on every input.
pub fn make_targets(frozen: &MultiTaskNet, augment_task: Task, inputs: &[Vec<f64>], temperature: f64) -> Result<AuxLabels> {
    let soft = inputs
        .par_iter()
        .map(|x| frozen.predict(augment_task, x))
        .collect::<Result<Vec<_>>>()?;
    let pseudo = soft.iter().map(to_pseudo).collect();
    let sharpened = soft
        .iter()
        .map(|s| sharpen(s, temperature))
        .collect::<Result<Vec<_>>>()?;
    Ok(AuxLabels {
        soft,
        pseudo,
        sharpened,
    })
}

fn features(net: &MultiTaskNet, task: Task, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    inputs.par_iter().map(|x| net.extract_features(task, x)).collect()
}

/// Interpolation weights for the samples of `unlabeled` whose `augment_task`
/// labels are missing, with every component kept for auditing.
///
/// Features come from the frozen net's `augment_task` extractor for both
/// datasets. The unlabeled dataset is clustered with its own task's cluster
/// count and `labeled` with the other.
pub fn sample_weights(
    frozen: &MultiTaskNet,
    augment_task: Task,
    unlabeled: &DisjointDataset,
    labeled: &DisjointDataset,
    soft: &[LabelVector],
    config: &TrainConfig,
    mode: WeightMode,
) -> Result<(Vec<f64>, Vec<SampleWeightRecord>)> {
    let feats_u = features(frozen, augment_task, &unlabeled.features)?;
    let feats_l = features(frozen, augment_task, &labeled.features)?;
    let conf = confidence_weights(soft, &feats_u, config.kappa)?;
    let dist = domain_weights(
        &feats_u,
        &feats_l,
        &DomainWeightConfig {
            clusters_unlabeled: config.cluster_count(unlabeled.task),
            clusters_labeled: config.cluster_count(labeled.task),
            lambda: config.lambda,
            kind: config.distance,
            seed: config.seed.wrapping_add(CLUSTER_SEED_OFFSET),
        },
    )?;
    let w = combine(
        &WeightComponents {
            w_c: &conf.w_c,
            w_d: &conf.w_d,
            w_s: &conf.w_s,
            w_g: &dist.w_g,
        },
        mode,
    )?;
    let records = (0..soft.len())
        .map(|i| SampleWeightRecord {
            sample_index: i,
            pseudo_class: conf.pseudo_class[i],
            w_c: conf.w_c[i],
            w_d: conf.w_d[i],
            w_s: conf.w_s[i],
            h_hat: dist.h_hat[i],
            w_g: dist.w_g[i],
            w_combined: w[i],
        })
        .collect();
    Ok((w, records))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Joint warm start before alternating training.
    Init,
    /// A pass of the joint baseline.
    Joint,
    /// A pass of the single-task baseline.
    Stl,
    /// Alternating epoch with the given dataset active.
    Active(Task),
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Init => "init",
            Phase::Joint => "joint",
            Phase::Stl => "stl",
            Phase::Active(Task::A) => "A",
            Phase::Active(Task::B) => "B",
        }
    }

    fn parse(s: &str) -> Option<Phase> {
        Some(match s {
            "init" => Phase::Init,
            "joint" => Phase::Joint,
            "stl" => Phase::Stl,
            "A" => Phase::Active(Task::A),
            "B" => Phase::Active(Task::B),
            _ => return None,
        })
    }
}

/// One row of the training history.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// Pass number within its phase kind (1-based).
    pub epoch: usize,
    pub phase: Phase,
    /// Mean supervised loss on the samples' own labels.
    pub loss_own_task: f64,
    /// Mean loss of the auxiliary head (0 outside alternating epochs).
    pub loss_aux_task: f64,
    pub train_acc_a: f64,
    pub train_acc_b: f64,
    pub test_acc_a: Option<f64>,
    pub test_acc_b: Option<f64>,
    pub mean_w: f64,
    pub fraction_w_above_half: f64,
}

pub const HISTORY_HEADER: &str =
    "epoch,phase,loss_own_task,loss_aux_task,train_acc_a,train_acc_b,test_acc_a,test_acc_b,mean_w,fraction_w_above_0.5";

/// Append-only list of epoch records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    records: Vec<EpochRecord>,
}

impl History {
    pub fn push(&mut self, record: EpochRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[EpochRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        let mut out = format!("{HISTORY_HEADER}\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.epoch,
                r.phase.name(),
                fmt_f64(r.loss_own_task),
                fmt_f64(r.loss_aux_task),
                fmt_f64(r.train_acc_a),
                fmt_f64(r.train_acc_b),
                opt(r.test_acc_a),
                opt(r.test_acc_b),
                fmt_f64(r.mean_w),
                fmt_f64(r.fraction_w_above_half)
            );
        }
        out
    }

    pub fn from_csv(text: &str, origin: &Path) -> Result<History> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == HISTORY_HEADER => {}
            _ => return Err(Error::parse(origin, 1, "missing history header")),
        }
        let mut history = History::default();
        for (i, line) in lines.filter(|(_, l)| !l.trim().is_empty()) {
            let at = |m: String| Error::parse(origin, i + 1, m);
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 10 {
                return Err(at(format!("expected 10 fields, found {}", f.len())));
            }
            let num = |s: &str| parse_f64(s).ok_or_else(|| at(format!("bad number '{s}'")));
            let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
            history.push(EpochRecord {
                epoch: f[0].parse().map_err(|_| at(format!("bad epoch '{}'", f[0])))?,
                phase: Phase::parse(f[1]).ok_or_else(|| at(format!("bad phase '{}'", f[1])))?,
                loss_own_task: num(f[2])?,
                loss_aux_task: num(f[3])?,
                train_acc_a: num(f[4])?,
                train_acc_b: num(f[5])?,
                test_acc_a: opt(f[6])?,
                test_acc_b: opt(f[7])?,
                mean_w: num(f[8])?,
                fraction_w_above_half: num(f[9])?,
            });
        }
        Ok(history)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file_atomically(path, &self.to_csv())
    }

    pub fn read(path: &Path) -> Result<History> {
        History::from_csv(&read_to_string(path)?, path)
    }
}

/// Result of training: one shared net, or one net per task for the
/// single-task baseline.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Shared(MultiTaskNet),
    Separate { a: MultiTaskNet, b: MultiTaskNet },
}

impl TrainedModel {
    /// Net whose `task` head is used for that task.
    pub fn net_for(&self, task: Task) -> &MultiTaskNet {
        match (self, task) {
            (TrainedModel::Shared(n), _) => n,
            (TrainedModel::Separate { a, .. }, Task::A) => a,
            (TrainedModel::Separate { b, .. }, Task::B) => b,
        }
    }

    pub fn predict(&self, task: Task, x: &[f64]) -> Result<LabelVector> {
        self.net_for(task).predict(task, x)
    }

    pub fn accuracy(&self, task: Task, dataset: &DisjointDataset) -> Result<f64> {
        accuracy(self.net_for(task), task, dataset)
    }
}

/// Fraction of samples whose argmax prediction equals the dataset label.
pub fn accuracy(net: &MultiTaskNet, task: Task, dataset: &DisjointDataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("accuracy of an empty dataset".into()));
    }
    let correct = dataset
        .features
        .par_iter()
        .zip(&dataset.labels)
        .map(|(x, &y)| Ok(usize::from(net.predict(task, x)?.argmax() == y)))
        .collect::<Result<Vec<usize>>>()?;
    Ok(correct.iter().sum::<usize>() as f64 / dataset.len() as f64)
}

/// Output of [`train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub model: TrainedModel,
    pub history: History,
    /// Latest weight records for dataset-B samples augmented for task A.
    pub audit_task_a: Vec<SampleWeightRecord>,
    /// Latest weight records for dataset-A samples augmented for task B.
    pub audit_task_b: Vec<SampleWeightRecord>,
}

impl TrainOutput {
    pub fn test_accuracy(&self, data: &TaskData, task: Task) -> Result<Option<f64>> {
        data.test(task).map(|t| self.model.accuracy(task, t)).transpose()
    }
}

/// What one alternating epoch produced.
#[derive(Debug, Clone)]
pub struct EpochOutcome {
    pub record: EpochRecord,
    pub phase: EpochPhase,
    /// Auxiliary-head targets used, indexed like the active dataset.
    pub targets: Vec<LabelVector>,
    pub weights: Vec<f64>,
    pub audit: Vec<SampleWeightRecord>,
}

/// Sample-weighted mean losses of one pass.
#[derive(Debug, Default, Clone, Copy)]
struct PassLoss {
    own: f64,
    aux: f64,
}

/// Shuffles, batches and steps over samples that each target only the head
/// named by `own_task[i]`. Returns the mean supervised loss.
fn run_pass(
    net: &mut MultiTaskNet,
    adam: &mut AdamState,
    inputs: &[&[f64]],
    targets: &[HeadTargets],
    own_task: &[Task],
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    order.shuffle(rng);
    let mut sum = 0.0;
    for chunk in order.chunks(batch_size) {
        let xs: Vec<&[f64]> = chunk.iter().map(|&i| inputs[i]).collect();
        let ts: Vec<HeadTargets> = chunk.iter().map(|&i| targets[i].clone()).collect();
        let (loss, grads) = net.loss_and_gradients(&xs, &ts)?;
        adam.apply(&mut net.params_mut(), &grads)?;
        let na = chunk.iter().filter(|&&i| own_task[i] == Task::A).count() as f64;
        sum += loss.task_a * na + loss.task_b * (chunk.len() as f64 - na);
    }
    Ok(sum / inputs.len() as f64)
}

fn one_hot_targets(dataset: &DisjointDataset) -> Result<Vec<HeadTargets>> {
    dataset
        .labels
        .iter()
        .map(|&y| Ok(HeadTargets::only(dataset.task, LabelVector::one_hot(y, dataset.num_classes)?)))
        .collect()
}

fn require_nonempty(data: &TaskData) -> Result<()> {
    if data.train_a.is_empty() || data.train_b.is_empty() {
        return Err(Error::InvalidArgument("both training sets must be nonempty".into()));
    }
    Ok(())
}

/// Mixed supervised passes over both datasets, each sample supervising only
/// its own head. Returns one mean own-task loss per pass.
pub fn joint_init(
    net: &mut MultiTaskNet,
    adam: &mut AdamState,
    data: &TaskData,
    passes: usize,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    require_nonempty(data)?;
    let inputs: Vec<&[f64]> = data
        .train_a
        .features
        .iter()
        .chain(&data.train_b.features)
        .map(Vec::as_slice)
        .collect();
    let mut targets = one_hot_targets(&data.train_a)?;
    targets.extend(one_hot_targets(&data.train_b)?);
    let own: Vec<Task> = std::iter::repeat_n(Task::A, data.train_a.len())
        .chain(std::iter::repeat_n(Task::B, data.train_b.len()))
        .collect();
    (0..passes)
        .map(|_| run_pass(net, adam, &inputs, &targets, &own, batch_size, rng))
        .collect()
}

/// Stateful alternating trainer, exposed so callers can inspect the network
/// between epochs.
pub struct Trainer<'d> {
    config: TrainConfig,
    data: &'d TaskData,
    net: MultiTaskNet,
    adam: AdamState,
    rng: ChaCha8Rng,
    history: History,
    epoch: usize,
    audit_task_a: Vec<SampleWeightRecord>,
    audit_task_b: Vec<SampleWeightRecord>,
}

impl<'d> Trainer<'d> {
    /// Builds the network and optimizer. Does not train.
    pub fn new(config: &TrainConfig, data: &'d TaskData) -> Result<Self> {
        config.validate()?;
        data.validate()?;
        let shape = config.net_shape(data.train_a.dim(), data.train_a.num_classes, data.train_b.num_classes);
        let net = MultiTaskNet::new(shape, config.seed)?;
        let adam = AdamState::for_net(&net, config.learning_rate);
        Ok(Trainer {
            config: config.clone(),
            data,
            net,
            adam,
            rng: ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(SHUFFLE_SEED_OFFSET)),
            history: History::default(),
            epoch: 0,
            audit_task_a: Vec::new(),
            audit_task_b: Vec::new(),
        })
    }

    pub fn net(&self) -> &MultiTaskNet {
        &self.net
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    /// Index of the last completed alternating epoch (0 before the first).
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    fn evaluate(&self, net_a: &MultiTaskNet, net_b: &MultiTaskNet) -> Result<[Option<f64>; 4]> {
        let d = self.data;
        Ok([
            Some(accuracy(net_a, Task::A, &d.train_a)?),
            Some(accuracy(net_b, Task::B, &d.train_b)?),
            d.test_a.as_ref().map(|t| accuracy(net_a, Task::A, t)).transpose()?,
            d.test_b.as_ref().map(|t| accuracy(net_b, Task::B, t)).transpose()?,
        ])
    }

    fn plain_record(&self, epoch: usize, phase: Phase, loss: f64, acc: [Option<f64>; 4]) -> EpochRecord {
        EpochRecord {
            epoch,
            phase,
            loss_own_task: loss,
            loss_aux_task: 0.0,
            train_acc_a: acc[0].unwrap_or_default(),
            train_acc_b: acc[1].unwrap_or_default(),
            test_acc_a: acc[2],
            test_acc_b: acc[3],
            mean_w: 0.0,
            fraction_w_above_half: 0.0,
        }
    }

    /// Joint warm start of `passes` passes, one history row per pass.
    pub fn joint_init(&mut self, passes: usize, phase: Phase) -> Result<()> {
        for k in 1..=passes {
            let losses = joint_init(
                &mut self.net,
                &mut self.adam,
                self.data,
                1,
                self.config.batch_size,
                &mut self.rng,
            )?;
            let acc = self.evaluate(&self.net, &self.net)?;
            let record = self.plain_record(k, phase, losses[0], acc);
            self.history.push(record);
        }
        Ok(())
    }

    /// Runs the next alternating epoch.
    pub fn run_next_epoch(&mut self) -> Result<EpochOutcome> {
        if !self.config.strategy.is_alternating() {
            return Err(Error::InvalidConfig(format!(
                "strategy {} has no alternating epochs",
                self.config.strategy.name()
            )));
        }
        let phase = EpochPhase::begin(self.epoch + 1, &self.net)?;
        let outcome = self.run_epoch(phase)?;
        self.epoch += 1;
        Ok(outcome)
    }

    fn run_epoch(&mut self, phase: EpochPhase) -> Result<EpochOutcome> {
        let cfg = &self.config;
        let active = self.data.train(phase.active);
        let labeled_aux = self.data.train(phase.augmented_task());
        let aux_task = phase.augmented_task();
        let aux = make_targets(&phase.snapshot, aux_task, &active.features, cfg.temperature)?;

        let (weights, audit) = match cfg.strategy {
            Strategy::MtlSa => sample_weights(
                &phase.snapshot,
                aux_task,
                active,
                labeled_aux,
                &aux.soft,
                cfg,
                cfg.weight_mode,
            )?,
            _ => (vec![0.0; active.len()], Vec::new()),
        };
        let targets: Vec<LabelVector> = match cfg.strategy {
            Strategy::MtlSa => aux
                .pseudo
                .iter()
                .zip(&aux.sharpened)
                .zip(&weights)
                .map(|((p, s), &w)| interpolate(p, s, w))
                .collect::<Result<_>>()?,
            _ => aux.sharpened.clone(),
        };

        let inputs: Vec<&[f64]> = active.features.iter().map(Vec::as_slice).collect();
        let head_targets: Vec<HeadTargets> = active
            .labels
            .iter()
            .zip(&targets)
            .map(|(&y, t)| {
                let own = LabelVector::one_hot(y, active.num_classes)?;
                Ok(match phase.active {
                    Task::A => HeadTargets {
                        a: Some(own),
                        b: Some(t.clone()),
                    },
                    Task::B => HeadTargets {
                        a: Some(t.clone()),
                        b: Some(own),
                    },
                })
            })
            .collect::<Result<_>>()?;
        let loss = self.alternating_pass(&inputs, &head_targets, phase.active)?;

        let acc = self.evaluate(&self.net, &self.net)?;
        let n = weights.len() as f64;
        let record = EpochRecord {
            epoch: phase.epoch,
            phase: Phase::Active(phase.active),
            loss_own_task: loss.own,
            loss_aux_task: loss.aux,
            train_acc_a: acc[0].unwrap_or_default(),
            train_acc_b: acc[1].unwrap_or_default(),
            test_acc_a: acc[2],
            test_acc_b: acc[3],
            mean_w: weights.iter().sum::<f64>() / n,
            fraction_w_above_half: weights.iter().filter(|&&w| w > 0.5).count() as f64 / n,
        };
        self.history.push(record.clone());
        match aux_task {
            Task::A => self.audit_task_a = audit.clone(),
            Task::B => self.audit_task_b = audit.clone(),
        }
        Ok(EpochOutcome {
            record,
            phase,
            targets,
            weights,
            audit,
        })
    }

    /// One pass where every sample carries both an own and an auxiliary target.
    fn alternating_pass(&mut self, inputs: &[&[f64]], targets: &[HeadTargets], own_task: Task) -> Result<PassLoss> {
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        order.shuffle(&mut self.rng);
        let (mut own_sum, mut aux_sum) = (0.0, 0.0);
        for chunk in order.chunks(self.config.batch_size) {
            let xs: Vec<&[f64]> = chunk.iter().map(|&i| inputs[i]).collect();
            let ts: Vec<HeadTargets> = chunk.iter().map(|&i| targets[i].clone()).collect();
            let (loss, grads) = self.net.loss_and_gradients(&xs, &ts)?;
            self.adam.apply(&mut self.net.params_mut(), &grads)?;
            let (own, aux) = match own_task {
                Task::A => (loss.task_a, loss.task_b),
                Task::B => (loss.task_b, loss.task_a),
            };
            own_sum += own * chunk.len() as f64;
            aux_sum += aux * chunk.len() as f64;
        }
        let n = inputs.len() as f64;
        Ok(PassLoss {
            own: own_sum / n,
            aux: aux_sum / n,
        })
    }

    pub fn into_output(self) -> TrainOutput {
        TrainOutput {
            model: TrainedModel::Shared(self.net),
            history: self.history,
            audit_task_a: self.audit_task_a,
            audit_task_b: self.audit_task_b,
        }
    }
}

/// Number of supervised passes given to the baselines: the warm start plus
/// one pass per dataset visit of the alternating schedule.
pub fn baseline_passes(config: &TrainConfig) -> usize {
    config.init_epochs + config.epochs.div_ceil(2)
}

/// Trains with the configured strategy.
///
/// Alternating strategies warm-start for `init_epochs` joint passes and then
/// run `epochs` alternating epochs; with `epochs = 0` the warm-started net is
/// returned. The baselines run [`baseline_passes`] supervised passes.
pub fn train(config: &TrainConfig, data: &TaskData) -> Result<TrainOutput> {
    require_nonempty(data)?;
    match config.strategy {
        Strategy::MtlWf | Strategy::MtlSa => {
            let mut trainer = Trainer::new(config, data)?;
            trainer.joint_init(config.init_epochs, Phase::Init)?;
            for _ in 0..config.epochs {
                trainer.run_next_epoch()?;
            }
            Ok(trainer.into_output())
        }
        Strategy::Joint => {
            let mut trainer = Trainer::new(config, data)?;
            trainer.joint_init(baseline_passes(config), Phase::Joint)?;
            Ok(trainer.into_output())
        }
        Strategy::Stl => train_single_task(config, data),
    }
}

fn train_single_task(config: &TrainConfig, data: &TaskData) -> Result<TrainOutput> {
    config.validate()?;
    data.validate()?;
    let shape = config.net_shape(data.train_a.dim(), data.train_a.num_classes, data.train_b.num_classes);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(SHUFFLE_SEED_OFFSET));
    let mut nets = [
        MultiTaskNet::new(shape.clone(), config.seed)?,
        MultiTaskNet::new(shape, config.seed.wrapping_add(SECOND_NET_SEED_OFFSET))?,
    ];
    let mut adams = [
        AdamState::for_net(&nets[0], config.learning_rate),
        AdamState::for_net(&nets[1], config.learning_rate),
    ];
    let sets = [&data.train_a, &data.train_b];
    let inputs: Vec<Vec<&[f64]>> = sets
        .iter()
        .map(|d| d.features.iter().map(Vec::as_slice).collect())
        .collect();
    let targets = [one_hot_targets(sets[0])?, one_hot_targets(sets[1])?];
    let owners = [vec![Task::A; sets[0].len()], vec![Task::B; sets[1].len()]];

    let mut history = History::default();
    let helper = Trainer::new(config, data)?;
    for k in 1..=baseline_passes(config) {
        let mut total = 0.0;
        for t in 0..2 {
            let loss = run_pass(
                &mut nets[t],
                &mut adams[t],
                &inputs[t],
                &targets[t],
                &owners[t],
                config.batch_size,
                &mut rng,
            )?;
            total += loss * sets[t].len() as f64;
        }
        let acc = helper.evaluate(&nets[0], &nets[1])?;
        let loss = total / (sets[0].len() + sets[1].len()) as f64;
        history.push(helper.plain_record(k, Phase::Stl, loss, acc));
    }
    let [a, b] = nets;
    Ok(TrainOutput {
        model: TrainedModel::Separate { a, b },
        history,
        audit_task_a: Vec::new(),
        audit_task_b: Vec::new(),
    })
}
