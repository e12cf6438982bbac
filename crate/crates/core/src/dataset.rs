//! Fixed-length labelled windows, channel normalisation, stratified folds
//! and per-user partitions.

use std::collections::BTreeMap;
use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mechanisms::MechanismId;
use crate::stream::{ActivityLabel, LabelledSample, SensorFrame, StreamBundle};

pub const CHANNELS: usize = SensorFrame::CHANNELS;

/// Floor applied to a channel's standard deviation before dividing.
pub const NORM_EPSILON: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("invalid window config: {0}")]
    Config(String),
    #[error("class {label} has {count} windows, fewer than the {k} folds")]
    SparseClass { label: ActivityLabel, count: usize, k: usize },
    #[error("need at least 2 folds, got {0}")]
    FoldCount(usize),
    #[error("no windows for user `{0}`")]
    UnknownUser(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overlap {
    /// Samples shared by consecutive windows.
    Samples(usize),
    /// Share of the window length, in percent.
    Percent(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub length: usize,
    pub overlap: Overlap,
    pub purity_min: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            length: 100,
            overlap: Overlap::Samples(20),
            purity_min: 0.6,
        }
    }
}

impl WindowConfig {
    pub fn overlap_samples(&self) -> usize {
        match self.overlap {
            Overlap::Samples(n) => n,
            Overlap::Percent(p) => (self.length as f64 * p / 100.0).round() as usize,
        }
    }

    pub fn step(&self) -> Result<usize, DatasetError> {
        let overlap = self.overlap_samples();
        if self.length == 0 {
            return Err(DatasetError::Config("window length must be positive".into()));
        }
        if overlap >= self.length {
            return Err(DatasetError::Config(format!(
                "overlap {overlap} must be below the window length {}",
                self.length
            )));
        }
        if !(0.0..=1.0).contains(&self.purity_min) {
            return Err(DatasetError::Config("purity_min must lie in [0, 1]".into()));
        }
        Ok(self.length - overlap)
    }

    /// Windows that fit in `n` samples before any filtering.
    pub fn window_count(&self, n: usize) -> Result<usize, DatasetError> {
        let step = self.step()?;
        Ok(if n < self.length { 0 } else { (n - self.length) / step + 1 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub user_id: String,
    pub mechanism: MechanismId,
    pub start_ms: u64,
    pub label: ActivityLabel,
    /// One row of channel values per time step.
    pub values: Vec<[f64; CHANNELS]>,
}

impl Window {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Modal label of a run of labels; ties go to whichever tied label occurs
/// last. Returns the label and its share.
fn modal_label(labels: &[ActivityLabel]) -> (ActivityLabel, f64) {
    let mut counts = [0usize; ActivityLabel::COUNT];
    for l in labels {
        counts[l.index()] += 1;
    }
    let best = *counts.iter().max().unwrap();
    let label = *labels
        .iter()
        .rev()
        .find(|l| counts[l.index()] == best)
        .expect("non-empty window");
    (label, best as f64 / labels.len() as f64)
}

/// Slides a window over time-ordered samples. A window is kept when every
/// sample is labelled and its modal label reaches `purity_min`.
pub fn make_windows(
    samples: &[LabelledSample],
    config: &WindowConfig,
    user_id: &str,
    mechanism: MechanismId,
) -> Result<Vec<Window>, DatasetError> {
    let step = config.step()?;
    let len = config.length;
    let mut out = Vec::new();
    let mut start = 0;
    while start + len <= samples.len() {
        let chunk = &samples[start..start + len];
        let labels: Option<Vec<ActivityLabel>> = chunk.iter().map(|s| s.label).collect();
        if let Some(labels) = labels {
            let (label, purity) = modal_label(&labels);
            if purity >= config.purity_min {
                out.push(Window {
                    user_id: user_id.to_string(),
                    mechanism,
                    start_ms: chunk[0].frame.t_ms,
                    label,
                    values: chunk.iter().map(|s| s.frame.values()).collect(),
                });
            }
        }
        start += step;
    }
    Ok(out)
}

pub fn windows_from_bundle(bundle: &StreamBundle, config: &WindowConfig) -> Result<Vec<Window>, DatasetError> {
    make_windows(&bundle.fused(), config, &bundle.meta.user_id, bundle.meta.mechanism)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: [f64; CHANNELS],
    /// Already floored at [`NORM_EPSILON`].
    pub std: [f64; CHANNELS],
}

impl NormStats {
    pub fn identity() -> Self {
        Self {
            mean: [0.0; CHANNELS],
            std: [1.0; CHANNELS],
        }
    }

    /// FNV-1a over the raw bits; identifies which data the stats came from.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for x in self.mean.iter().chain(&self.std) {
            for b in x.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }

    pub fn apply_row(&self, row: &[f64; CHANNELS]) -> [f64; CHANNELS] {
        std::array::from_fn(|c| (row[c] - self.mean[c]) / self.std[c])
    }
}

/// Per-channel mean and standard deviation over every time step.
pub fn fit_norm<'a>(windows: impl IntoIterator<Item = &'a Window>) -> NormStats {
    let windows: Vec<&Window> = windows.into_iter().collect();
    let n: usize = windows.iter().map(|w| w.len()).sum();
    if n == 0 {
        return NormStats::identity();
    }
    let mut mean = [0.0; CHANNELS];
    for row in windows.iter().flat_map(|w| &w.values) {
        for c in 0..CHANNELS {
            mean[c] += row[c];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = [0.0; CHANNELS];
    for row in windows.iter().flat_map(|w| &w.values) {
        for c in 0..CHANNELS {
            let d = row[c] - mean[c];
            var[c] += d * d;
        }
    }
    let std = var.map(|v| (v / n as f64).sqrt().max(NORM_EPSILON));
    NormStats { mean, std }
}

pub fn apply_norm(windows: &[Window], stats: &NormStats) -> Vec<Window> {
    windows
        .iter()
        .map(|w| Window {
            values: w.values.iter().map(|r| stats.apply_row(r)).collect(),
            ..w.clone()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// Fold of each window, by window index.
    pub assignment: Vec<usize>,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Seeded shuffle within each class, then one round-robin pass over the
/// classes in code order, so both per-class and total fold sizes differ by
/// at most one.
pub fn stratified_kfold_labels(labels: &[ActivityLabel], k: usize, seed: u64) -> Result<FoldPlan, DatasetError> {
    if k < 2 {
        return Err(DatasetError::FoldCount(k));
    }
    let mut by_class: BTreeMap<ActivityLabel, Vec<usize>> = ActivityLabel::ALL.iter().map(|l| (*l, Vec::new())).collect();
    for (i, l) in labels.iter().enumerate() {
        by_class.get_mut(l).unwrap().push(i);
    }
    for (label, idx) in &by_class {
        if idx.len() < k {
            return Err(DatasetError::SparseClass {
                label: *label,
                count: idx.len(),
                k,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for idx in by_class.values_mut() {
        idx.shuffle(&mut rng);
        for &i in idx.iter() {
            assignment[i] = next % k;
            next += 1;
        }
    }
    Ok(FoldPlan { k, seed, assignment })
}

pub fn stratified_kfold(windows: &[Window], k: usize, seed: u64) -> Result<FoldPlan, DatasetError> {
    let labels: Vec<_> = windows.iter().map(|w| w.label).collect();
    stratified_kfold_labels(&labels, k, seed)
}

/// Splits off one user's windows; the rest keep their order.
pub fn split_by_user(windows: &[Window], user_id: &str) -> Result<(Vec<Window>, Vec<Window>), DatasetError> {
    let (mine, rest): (Vec<_>, Vec<_>) = windows.iter().cloned().partition(|w| w.user_id == user_id);
    if mine.is_empty() {
        return Err(DatasetError::UnknownUser(user_id.to_string()));
    }
    Ok((mine, rest))
}

/// Distinct user ids in first-seen order.
pub fn user_ids(windows: &[Window]) -> Vec<String> {
    let mut seen = Vec::<String>::new();
    for w in windows {
        if !seen.contains(&w.user_id) {
            seen.push(w.user_id.clone());
        }
    }
    seen
}

/// One JSON object per window, as serialised by [`Window`].
pub fn dump_windows_jsonl(windows: &[Window], mut out: impl Write) -> io::Result<()> {
    for w in windows {
        serde_json::to_writer(&mut out, w)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
