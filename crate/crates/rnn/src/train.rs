use std::time::Instant;

use insitu_core::dataset::{fit_norm, FoldPlan, NormStats, Window, CHANNELS};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{Batch, Model, ModelSpec};
use crate::optim::{clip_global_norm, Optimizer, OptimizerState};
use crate::RnnError;

const EVAL_BATCH: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub folds: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Global gradient-norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Multiplies the learning rate after every epoch; `None` keeps it fixed.
    pub lr_decay: Option<f64>,
    /// After the last epoch, replaces the batch-norm running averages with
    /// statistics of the final weights over the whole training set.
    pub recalibrate_norm: bool,
    pub parallel_folds: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.0025,
            batch_size: 32,
            epochs: 10,
            folds: 10,
            seed: 0,
            optimizer: Optimizer::default(),
            clip_norm: Some(5.0),
            lr_decay: None,
            recalibrate_norm: true,
            parallel_folds: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), RnnError> {
        let ok = self.learning_rate > 0.0
            && self.batch_size > 0
            && self.epochs > 0
            && self.folds >= 2
            && self.clip_norm.map_or(true, |c| c > 0.0)
            && self.lr_decay.map_or(true, |d| d > 0.0);
        if ok {
            Ok(())
        } else {
            Err(RnnError::Config(format!("{self:?}")))
        }
    }

    /// FNV-1a over the canonical JSON form.
    pub fn fingerprint(&self) -> u64 {
        let text = serde_json::to_string(self).expect("config serialises");
        text.bytes().fold(0xcbf29ce484222325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3))
    }
}

/// Independent seed for fold `fold` of a run seeded with `master`.
pub fn fold_seed(master: u64, fold: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(fold as u64 + 1);
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// Mean training loss over the epoch's mini-batches, weighted by size.
    pub loss: f64,
    /// Training accuracy from the same train-mode forward passes.
    pub accuracy: f64,
    /// Wall time; not deterministic.
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldHistory {
    pub fold: usize,
    pub epochs: Vec<EpochStats>,
    pub test_accuracy: f64,
    pub test_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub spec: String,
    pub folds: Vec<FoldHistory>,
    /// Out-of-fold prediction for every window, by window index.
    pub predictions: Vec<usize>,
}

impl TrainHistory {
    pub fn fold_accuracies(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.test_accuracy).collect()
    }

    pub fn mean_accuracy(&self) -> f64 {
        let a = self.fold_accuracies();
        a.iter().sum::<f64>() / a.len() as f64
    }

    /// Sample standard deviation of the fold accuracies.
    pub fn std_accuracy(&self) -> f64 {
        let a = self.fold_accuracies();
        if a.len() < 2 {
            return 0.0;
        }
        let m = self.mean_accuracy();
        (a.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (a.len() - 1) as f64).sqrt()
    }

    /// Per-epoch (loss, accuracy) averaged over folds.
    pub fn mean_curve(&self) -> Vec<(f64, f64)> {
        let epochs = self.folds.iter().map(|f| f.epochs.len()).min().unwrap_or(0);
        let n = self.folds.len() as f64;
        (0..epochs)
            .map(|e| {
                let loss = self.folds.iter().map(|f| f.epochs[e].loss).sum::<f64>() / n;
                let acc = self.folds.iter().map(|f| f.epochs[e].accuracy).sum::<f64>() / n;
                (loss, acc)
            })
            .collect()
    }

    pub fn mean_epoch_seconds(&self) -> f64 {
        let all: Vec<f64> = self.folds.iter().flat_map(|f| f.epochs.iter().map(|e| e.seconds)).collect();
        all.iter().sum::<f64>() / all.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldModel {
    pub model: Model,
    pub norm: NormStats,
}

impl FoldModel {
    pub fn evaluate(&self, windows: &[Window]) -> Result<(f64, Vec<usize>), RnnError> {
        evaluate(&self.model, windows, &self.norm)
    }
}

fn normalised(w: &Window, norm: &NormStats) -> Vec<[f64; CHANNELS]> {
    w.values.iter().map(|r| norm.apply_row(r)).collect()
}

fn check_lengths(windows: &[&Window]) -> Result<(), RnnError> {
    let Some(first) = windows.first() else {
        return Err(RnnError::Config("no training windows".into()));
    };
    if windows.iter().any(|w| w.len() != first.len() || w.is_empty()) {
        return Err(RnnError::Shape("windows must share a non-zero length".into()));
    }
    Ok(())
}

/// Trains one model from scratch on `train`; norm stats come from `train`.
/// Divergence reports `fold`.
pub fn fit(
    train: &[&Window],
    spec: &ModelSpec,
    config: &TrainConfig,
    seed: u64,
    fold: usize,
) -> Result<(FoldModel, Vec<EpochStats>), RnnError> {
    config.validate()?;
    check_lengths(train)?;
    let norm = fit_norm(train.iter().copied());
    let data: Vec<Vec<[f64; CHANNELS]>> = train.iter().map(|w| normalised(w, &norm)).collect();
    let labels: Vec<usize> = train.iter().map(|w| w.label.index()).collect();

    let mut init = ChaCha8Rng::seed_from_u64(seed);
    init.set_stream(1);
    let mut model = Model::new(spec, init.next_u64())?;
    let mut shuffle = ChaCha8Rng::seed_from_u64(seed);
    shuffle.set_stream(2);
    let mut opt = OptimizerState::new(config.optimizer, &model.params);
    let mut lr = config.learning_rate;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut batch_id = 0;

    for epoch in 0..config.epochs {
        let start = Instant::now();
        order.shuffle(&mut shuffle);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let seqs: Vec<&[[f64; CHANNELS]]> = chunk.iter().map(|&i| data[i].as_slice()).collect();
            let ys: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let batch = Batch::from_sequences(&seqs)?;
            let mut step = model.loss_and_grads(&batch, &ys, batch_id).map_err(|e| match e {
                RnnError::NonFinite { batch_id } => RnnError::Diverged { fold, epoch, batch_id },
                other => other,
            })?;
            loss_sum += step.loss * chunk.len() as f64;
            for (row, &y) in step.logits.rows().into_iter().zip(&ys) {
                let best = (0..row.len()).fold(0, |b, i| if row[i] > row[b] { i } else { b });
                correct += (best == y) as usize;
            }
            model.norm_state.update(&step.batch_stats);
            if let Some(max) = config.clip_norm {
                clip_global_norm(&mut step.grads, max);
            }
            opt.apply(&mut model.params, &step.grads, lr);
            if !model.params.is_finite() {
                return Err(RnnError::Diverged { fold, epoch, batch_id });
            }
            batch_id += 1;
        }
        history.push(EpochStats {
            loss: loss_sum / data.len() as f64,
            accuracy: correct as f64 / data.len() as f64,
            seconds: start.elapsed().as_secs_f64(),
        });
        if let Some(d) = config.lr_decay {
            lr *= d;
        }
    }
    if config.recalibrate_norm {
        let mut parts = Vec::new();
        for chunk in data.chunks(config.batch_size) {
            let seqs: Vec<&[[f64; CHANNELS]]> = chunk.iter().map(|d| d.as_slice()).collect();
            parts.push((model.batch_stats(&Batch::from_sequences(&seqs)?)?, chunk.len()));
        }
        model.norm_state.set_population(&parts);
    }
    Ok((FoldModel { model, norm }, history))
}

/// Infer-mode accuracy and argmax predictions.
pub fn evaluate(model: &Model, windows: &[Window], norm: &NormStats) -> Result<(f64, Vec<usize>), RnnError> {
    let mut preds = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(EVAL_BATCH) {
        let data: Vec<Vec<[f64; CHANNELS]>> = chunk.iter().map(|w| normalised(w, norm)).collect();
        let seqs: Vec<&[[f64; CHANNELS]]> = data.iter().map(|d| d.as_slice()).collect();
        preds.extend(model.predict(&Batch::from_sequences(&seqs)?)?);
    }
    let correct = preds.iter().zip(windows).filter(|(p, w)| **p == w.label.index()).count();
    let acc = if windows.is_empty() { 0.0 } else { correct as f64 / windows.len() as f64 };
    Ok((acc, preds))
}

/// k-fold cross-validation over `plan`: one fresh model per fold, folds
/// optionally trained in parallel, results in fold order.
pub fn train(
    windows: &[Window],
    spec: &ModelSpec,
    config: &TrainConfig,
    plan: &FoldPlan,
) -> Result<(Vec<FoldModel>, TrainHistory), RnnError> {
    config.validate()?;
    spec.validate()?;
    if plan.assignment.len() != windows.len() {
        return Err(RnnError::Config(format!(
            "fold plan covers {} windows, dataset has {}",
            plan.assignment.len(),
            windows.len()
        )));
    }
    let run_fold = |fold: usize| -> Result<(FoldModel, FoldHistory, Vec<usize>), RnnError> {
        let train_idx = plan.train_indices(fold);
        let test_idx = plan.test_indices(fold);
        let train_set: Vec<&Window> = train_idx.iter().map(|&i| &windows[i]).collect();
        let (fm, epochs) = fit(&train_set, spec, config, fold_seed(config.seed, fold), fold)?;
        let test_set: Vec<Window> = test_idx.iter().map(|&i| windows[i].clone()).collect();
        let (acc, preds) = fm.evaluate(&test_set)?;
        let hist = FoldHistory {
            fold,
            epochs,
            test_accuracy: acc,
            test_indices: test_idx,
        };
        Ok((fm, hist, preds))
    };
    let results: Vec<Result<(FoldModel, FoldHistory, Vec<usize>), RnnError>> = if config.parallel_folds {
        (0..plan.k).into_par_iter().map(run_fold).collect()
    } else {
        (0..plan.k).map(run_fold).collect()
    };
    let mut models = Vec::with_capacity(plan.k);
    let mut folds = Vec::with_capacity(plan.k);
    let mut predictions = vec![usize::MAX; windows.len()];
    for r in results {
        let (fm, hist, preds) = r?;
        for (&i, p) in hist.test_indices.iter().zip(preds) {
            assert_eq!(predictions[i], usize::MAX, "window {i} predicted twice");
            predictions[i] = p;
        }
        models.push(fm);
        folds.push(hist);
    }
    assert!(predictions.iter().all(|&p| p != usize::MAX), "every window predicted once");
    Ok((
        models,
        TrainHistory {
            spec: spec.name.clone(),
            folds,
            predictions,
        },
    ))
}
