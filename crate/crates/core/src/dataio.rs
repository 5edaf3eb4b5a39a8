//! Disjoint datasets: synthetic generation, CSV storage and splits.
//!
//! The generator places one Gaussian blob per `(class_a, class_b)` pair on a
//! shared latent plane. Blob centers are laid out along two non-parallel
//! directions, so each task's label is a thresholded linear projection of the
//! latent point and the two tasks share structure without being the same
//! task. Every sample therefore has a true label for both tasks; dataset A
//! exposes only task A labels and dataset B only task B labels. Dataset B can
//! be moved by a [`ShiftSpec`] to create a distribution mismatch.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::nn::Task;
use crate::textio::{fmt_f64, parse_f64, parse_key_values, read_to_string, write_file_atomically};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
    Full,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Full => "full",
        }
    }
}

/// Features plus labels for exactly one task.
#[derive(Debug, Clone, PartialEq)]
pub struct DisjointDataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub task: Task,
    pub split: Split,
    pub provenance: String,
}

impl DisjointDataset {
    pub fn new(
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        num_classes: usize,
        task: Task,
        split: Split,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let ds = DisjointDataset {
            features,
            labels,
            num_classes,
            task,
            split,
            provenance: provenance.into(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Validation("dataset has no samples".into()));
        }
        if self.features.len() != self.labels.len() {
            return Err(Error::Validation(format!(
                "{} feature rows but {} labels",
                self.features.len(),
                self.labels.len()
            )));
        }
        let d = self.dim();
        if d == 0 || self.features.iter().any(|f| f.len() != d) {
            return Err(Error::Validation("feature rows must share a nonzero dimension".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Validation(format!("need at least 2 classes, got {}", self.num_classes)));
        }
        if let Some((i, l)) = self.labels.iter().enumerate().find(|(_, l)| **l >= self.num_classes) {
            return Err(Error::Validation(format!(
                "label {l} of sample {i} outside [0, {})",
                self.num_classes
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn subset(&self, indices: &[usize], split: Split) -> DisjointDataset {
        DisjointDataset {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            task: self.task,
            split,
            provenance: self.provenance.clone(),
        }
    }

    /// CSV text: header `feature_0,...,feature_{d-1},label`, one row per sample.
    pub fn to_csv_string(&self) -> String {
        let mut out = (0..self.dim()).map(|k| format!("feature_{k},")).collect::<String>();
        out.push_str("label\n");
        for (f, l) in self.features.iter().zip(&self.labels) {
            for v in f {
                out.push_str(&fmt_f64(*v));
                out.push(',');
            }
            let _ = writeln!(out, "{l}");
        }
        out
    }

    pub fn from_csv_str(text: &str, origin: &Path, task: Task, num_classes: Option<usize>) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let Some((_, header)) = lines.next() else {
            return Err(Error::parse(origin, 1, "missing header row"));
        };
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let d = cols.len().saturating_sub(1);
        let header_ok = cols.last() == Some(&"label")
            && cols[..d].iter().enumerate().all(|(k, c)| *c == format!("feature_{k}"));
        if !header_ok || d == 0 {
            return Err(Error::parse(origin, 1, format!("bad header '{header}'")));
        }
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != d + 1 {
                return Err(Error::parse(
                    origin,
                    i + 1,
                    format!("expected {} fields, found {}", d + 1, fields.len()),
                ));
            }
            let row = fields[..d]
                .iter()
                .map(|s| parse_f64(s).ok_or_else(|| Error::parse(origin, i + 1, format!("bad number '{s}'"))))
                .collect::<Result<Vec<f64>>>()?;
            let label = fields[d]
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::parse(origin, i + 1, format!("bad label '{}'", fields[d])))?;
            features.push(row);
            labels.push(label);
        }
        let num_classes = num_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1).max(2));
        DisjointDataset::new(
            features,
            labels,
            num_classes,
            task,
            Split::Full,
            origin.display().to_string(),
        )
    }
}

pub fn save_csv(dataset: &DisjointDataset, path: &Path) -> Result<()> {
    write_file_atomically(path, &dataset.to_csv_string())
}

/// Loads a dataset. Class count and task come from the sidecar next to the
/// file when present; otherwise the given task is used and the class count is
/// inferred from the largest label.
pub fn load_csv(path: &Path, task: Task) -> Result<DisjointDataset> {
    let meta_path = metadata_path(path);
    let meta = if meta_path.exists() {
        Some(DatasetMetadata::read(&meta_path)?)
    } else {
        None
    };
    let text = read_to_string(path)?;
    let task = meta.as_ref().map_or(task, |m| m.task);
    let mut ds = DisjointDataset::from_csv_str(&text, path, task, meta.as_ref().map(|m| m.classes))?;
    if let Some(m) = &meta {
        ds.split = m.split;
        if m.n != ds.len() || m.d != ds.dim() {
            return Err(Error::Validation(format!(
                "{}: sidecar says n={} d={}, file has n={} d={}",
                path.display(),
                m.n,
                m.d,
                ds.len(),
                ds.dim()
            )));
        }
    }
    Ok(ds)
}

/// Sidecar path: the CSV path with its extension replaced by `.meta`.
pub fn metadata_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta")
}

/// Controllable distribution shift applied to dataset B.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSpec {
    /// Added after scaling and rotation; shorter than the feature dimension
    /// means zero in the remaining coordinates.
    pub mean_offset: Vec<f64>,
    pub scale: f64,
    /// Radians, applied in the first two coordinates.
    pub rotation: f64,
    /// Probability that an exposed label is replaced by a uniformly drawn class.
    pub label_noise_rate: f64,
    /// Probability that a dataset-B sample receives the geometric shift.
    pub shifted_fraction: f64,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        ShiftSpec {
            mean_offset: Vec::new(),
            scale: 1.0,
            rotation: 0.0,
            label_noise_rate: 0.0,
            shifted_fraction: 1.0,
        }
    }
}

impl ShiftSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0) {
            return Err(Error::InvalidConfig(format!("shift scale must be positive, got {}", self.scale)));
        }
        if !(0.0..1.0).contains(&self.label_noise_rate) {
            return Err(Error::InvalidConfig(format!(
                "label noise rate must lie in [0, 1), got {}",
                self.label_noise_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.shifted_fraction) {
            return Err(Error::InvalidConfig(format!(
                "shifted fraction must lie in [0, 1], got {}",
                self.shifted_fraction
            )));
        }
        Ok(())
    }

    fn apply(&self, x: &mut [f64]) {
        x.iter_mut().for_each(|v| *v *= self.scale);
        if x.len() >= 2 && self.rotation != 0.0 {
            let (s, c) = self.rotation.sin_cos();
            let (x0, x1) = (x[0], x[1]);
            x[0] = c * x0 - s * x1;
            x[1] = s * x0 + c * x1;
        }
        x.iter_mut().zip(&self.mean_offset).for_each(|(v, o)| *v += o);
    }
}

/// Parameters of [`gen_two_task`].
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_a: usize,
    pub n_b: usize,
    pub classes_a: usize,
    pub classes_b: usize,
    pub dim: usize,
    /// Distance between neighbouring blob centers along each task direction.
    pub separation: f64,
    /// Standard deviation of each blob in every coordinate.
    pub cluster_std: f64,
    /// Angle between the task-A and task-B directions, radians.
    pub task_angle: f64,
    pub shift: ShiftSpec,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 0,
            n_a: 200,
            n_b: 200,
            classes_a: 3,
            classes_b: 2,
            dim: 2,
            separation: 3.0,
            cluster_std: 1.0,
            task_angle: std::f64::consts::FRAC_PI_2,
            shift: ShiftSpec::default(),
        }
    }
}

/// True labels of every sample for both tasks, never shown to training.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenTruth {
    pub a_task_a: Vec<usize>,
    pub a_task_b: Vec<usize>,
    pub b_task_a: Vec<usize>,
    pub b_task_b: Vec<usize>,
    /// Which dataset-B samples received the geometric shift.
    pub b_shifted: Vec<bool>,
    /// Which exposed labels were redrawn by label noise (possibly to the same class).
    pub a_resampled: Vec<bool>,
    pub b_resampled: Vec<bool>,
}

impl HiddenTruth {
    fn subset(&self, a_idx: &[usize], b_idx: &[usize]) -> HiddenTruth {
        let pick = |v: &[usize], idx: &[usize]| idx.iter().map(|&i| v[i]).collect();
        HiddenTruth {
            a_task_a: pick(&self.a_task_a, a_idx),
            a_task_b: pick(&self.a_task_b, a_idx),
            b_task_a: pick(&self.b_task_a, b_idx),
            b_task_b: pick(&self.b_task_b, b_idx),
            b_shifted: b_idx.iter().map(|&i| self.b_shifted[i]).collect(),
            a_resampled: a_idx.iter().map(|&i| self.a_resampled[i]).collect(),
            b_resampled: b_idx.iter().map(|&i| self.b_resampled[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPair {
    pub a: DisjointDataset,
    pub b: DisjointDataset,
    pub truth: HiddenTruth,
    pub config: GeneratorConfig,
}

/// Train and test sets for both tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub train_a: DisjointDataset,
    pub train_b: DisjointDataset,
    pub test_a: Option<DisjointDataset>,
    pub test_b: Option<DisjointDataset>,
}

impl TaskData {
    pub fn train(&self, task: Task) -> &DisjointDataset {
        match task {
            Task::A => &self.train_a,
            Task::B => &self.train_b,
        }
    }

    pub fn test(&self, task: Task) -> Option<&DisjointDataset> {
        match task {
            Task::A => self.test_a.as_ref(),
            Task::B => self.test_b.as_ref(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_a.task != Task::A || self.train_b.task != Task::B {
            return Err(Error::Validation("train sets must be tagged A and B".into()));
        }
        let d = self.train_a.dim();
        let all = [Some(&self.train_a), Some(&self.train_b), self.test_a.as_ref(), self.test_b.as_ref()];
        for ds in all.into_iter().flatten() {
            ds.validate()?;
            if ds.dim() != d {
                return Err(Error::Validation("all datasets must share one feature dimension".into()));
            }
        }
        for (train, test) in [(&self.train_a, &self.test_a), (&self.train_b, &self.test_b)] {
            if let Some(t) = test {
                if t.num_classes != train.num_classes {
                    return Err(Error::Validation("train and test class counts differ".into()));
                }
            }
        }
        Ok(())
    }
}

/// Split of a synthetic pair, with the hidden truth of the training portion.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSplit {
    pub data: TaskData,
    pub train_truth: HiddenTruth,
}

/// Draws both datasets.
pub fn gen_two_task(config: &GeneratorConfig) -> Result<SyntheticPair> {
    config.shift.validate()?;
    if config.classes_a < 2 || config.classes_b < 2 {
        return Err(Error::InvalidConfig("each task needs at least 2 classes".into()));
    }
    if config.n_a < config.classes_a || config.n_b < config.classes_b {
        return Err(Error::InvalidConfig(format!(
            "need at least as many samples as classes (n_a={}, n_b={})",
            config.n_a, config.n_b
        )));
    }
    if config.dim < 2 {
        return Err(Error::InvalidConfig("feature dimension must be at least 2".into()));
    }
    if !(config.cluster_std > 0.0) {
        return Err(Error::InvalidConfig("cluster_std must be positive".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.cluster_std).expect("positive std");
    let dir_a = [1.0, 0.0];
    let dir_b = [config.task_angle.cos(), config.task_angle.sin()];
    let centre = |ca: usize, cb: usize| -> [f64; 2] {
        let pa = (ca as f64 - (config.classes_a - 1) as f64 / 2.0) * config.separation;
        let pb = (cb as f64 - (config.classes_b - 1) as f64 / 2.0) * config.separation;
        [pa * dir_a[0] + pb * dir_b[0], pa * dir_a[1] + pb * dir_b[1]]
    };

    let draw = |n: usize, rng: &mut ChaCha8Rng| -> (Vec<Vec<f64>>, Vec<usize>, Vec<usize>) {
        let mut feats = Vec::with_capacity(n);
        let mut la = Vec::with_capacity(n);
        let mut lb = Vec::with_capacity(n);
        for _ in 0..n {
            let ca = rng.random_range(0..config.classes_a);
            let cb = rng.random_range(0..config.classes_b);
            let c = centre(ca, cb);
            let x: Vec<f64> = (0..config.dim)
                .map(|k| c.get(k).copied().unwrap_or(0.0) + noise.sample(rng))
                .collect();
            feats.push(x);
            la.push(ca);
            lb.push(cb);
        }
        (feats, la, lb)
    };

    let (feats_a, a_task_a, a_task_b) = draw(config.n_a, &mut rng);
    let (mut feats_b, b_task_a, b_task_b) = draw(config.n_b, &mut rng);
    let mut b_shifted = Vec::with_capacity(config.n_b);
    for x in &mut feats_b {
        let shifted = rng.random::<f64>() < config.shift.shifted_fraction;
        if shifted {
            config.shift.apply(x);
        }
        b_shifted.push(shifted);
    }

    let rate = config.shift.label_noise_rate;
    let corrupt = |truth: &[usize], classes: usize, rng: &mut ChaCha8Rng| -> (Vec<usize>, Vec<bool>) {
        truth
            .iter()
            .map(|&t| {
                if rng.random::<f64>() < rate {
                    (rng.random_range(0..classes), true)
                } else {
                    (t, false)
                }
            })
            .unzip()
    };
    let (exposed_a, a_resampled) = corrupt(&a_task_a, config.classes_a, &mut rng);
    let (exposed_b, b_resampled) = corrupt(&b_task_b, config.classes_b, &mut rng);

    let provenance = format!("synthetic seed={}", config.seed);
    Ok(SyntheticPair {
        a: DisjointDataset::new(feats_a, exposed_a, config.classes_a, Task::A, Split::Full, provenance.clone())?,
        b: DisjointDataset::new(feats_b, exposed_b, config.classes_b, Task::B, Split::Full, provenance)?,
        truth: HiddenTruth {
            a_task_a,
            a_task_b,
            b_task_a,
            b_task_b,
            b_shifted,
            a_resampled,
            b_resampled,
        },
        config: config.clone(),
    })
}

impl SyntheticPair {
    /// Splits both datasets. Test sets carry the hidden true labels so they
    /// measure accuracy against the truth, not against label noise.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<PairSplit> {
        let (tr_a, te_a) = split_indices(self.a.len(), train_fraction, seed)?;
        let (tr_b, te_b) = split_indices(self.b.len(), train_fraction, seed.wrapping_add(1))?;
        let clean = |ds: &DisjointDataset, truth: &[usize], idx: &[usize]| {
            let mut t = ds.subset(idx, Split::Test);
            t.labels = idx.iter().map(|&i| truth[i]).collect();
            t
        };
        Ok(PairSplit {
            data: TaskData {
                train_a: self.a.subset(&tr_a, Split::Train),
                train_b: self.b.subset(&tr_b, Split::Train),
                test_a: Some(clean(&self.a, &self.truth.a_task_a, &te_a)),
                test_b: Some(clean(&self.b, &self.truth.b_task_b, &te_b)),
            },
            train_truth: self.truth.subset(&tr_a, &tr_b),
        })
    }
}

/// Seeded permutation split into `round(fraction * n)` train indices and the rest.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples to split".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let test = order.split_off(n_train);
    Ok((order, test))
}

pub fn split(dataset: &DisjointDataset, train_fraction: f64, seed: u64) -> Result<(DisjointDataset, DisjointDataset)> {
    let (tr, te) = split_indices(dataset.len(), train_fraction, seed)?;
    Ok((dataset.subset(&tr, Split::Train), dataset.subset(&te, Split::Test)))
}

/// Sidecar contents (`key = value` lines).
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMetadata {
    pub task: Task,
    pub classes: usize,
    pub n: usize,
    pub d: usize,
    pub split: Split,
    pub seed: Option<u64>,
    pub shift: Option<ShiftSpec>,
}

impl DatasetMetadata {
    pub fn describe(ds: &DisjointDataset, seed: Option<u64>, shift: Option<&ShiftSpec>) -> Self {
        DatasetMetadata {
            task: ds.task,
            classes: ds.num_classes,
            n: ds.len(),
            d: ds.dim(),
            split: ds.split,
            seed,
            shift: shift.cloned(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "task_tag = {}", self.task.name());
        let _ = writeln!(out, "classes = {}", self.classes);
        let _ = writeln!(out, "n = {}", self.n);
        let _ = writeln!(out, "d = {}", self.d);
        let _ = writeln!(out, "split = {}", self.split.name());
        if let Some(seed) = self.seed {
            let _ = writeln!(out, "seed = {seed}");
        }
        if let Some(s) = &self.shift {
            let offset: Vec<String> = s.mean_offset.iter().map(|v| fmt_f64(*v)).collect();
            let _ = writeln!(out, "shift_offset = {}", offset.join(","));
            let _ = writeln!(out, "shift_scale = {}", fmt_f64(s.scale));
            let _ = writeln!(out, "shift_rotation = {}", fmt_f64(s.rotation));
            let _ = writeln!(out, "label_noise_rate = {}", fmt_f64(s.label_noise_rate));
            let _ = writeln!(out, "shifted_fraction = {}", fmt_f64(s.shifted_fraction));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file_atomically(path, &self.to_text())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        let mut task = None;
        let mut classes = None;
        let mut n = None;
        let mut d = None;
        let mut split = Split::Full;
        let mut seed = None;
        let mut shift = ShiftSpec::default();
        let mut has_shift = false;
        for (line, key, value) in parse_key_values(&text, path)? {
            let bad = |what: &str| Error::parse(path, line, format!("bad {what} '{value}'"));
            let float = |v: &str| parse_f64(v).ok_or_else(|| bad(&key));
            match key.as_str() {
                "task_tag" => {
                    task = Some(match value.as_str() {
                        "A" => Task::A,
                        "B" => Task::B,
                        _ => return Err(bad("task_tag")),
                    })
                }
                "classes" => classes = Some(value.parse().map_err(|_| bad("classes"))?),
                "n" => n = Some(value.parse().map_err(|_| bad("n"))?),
                "d" => d = Some(value.parse().map_err(|_| bad("d"))?),
                "split" => {
                    split = match value.as_str() {
                        "train" => Split::Train,
                        "test" => Split::Test,
                        "full" => Split::Full,
                        _ => return Err(bad("split")),
                    }
                }
                "seed" => seed = Some(value.parse().map_err(|_| bad("seed"))?),
                "shift_offset" => {
                    has_shift = true;
                    shift.mean_offset = if value.is_empty() {
                        Vec::new()
                    } else {
                        value.split(',').map(float).collect::<Result<_>>()?
                    };
                }
                "shift_scale" => shift.scale = float(&value)?,
                "shift_rotation" => shift.rotation = float(&value)?,
                "label_noise_rate" => shift.label_noise_rate = float(&value)?,
                "shifted_fraction" => shift.shifted_fraction = float(&value)?,
                _ => return Err(Error::parse(path, line, format!("unknown key '{key}'"))),
            }
        }
        let missing = |k: &str| Error::Validation(format!("{}: missing key '{k}'", path.display()));
        Ok(DatasetMetadata {
            task: task.ok_or_else(|| missing("task_tag"))?,
            classes: classes.ok_or_else(|| missing("classes"))?,
            n: n.ok_or_else(|| missing("n"))?,
            d: d.ok_or_else(|| missing("d"))?,
            split,
            seed,
            shift: has_shift.then_some(shift),
        })
    }
}
