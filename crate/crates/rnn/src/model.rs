use insitu_core::dataset::{Window, CHANNELS};
use insitu_core::stream::ActivityLabel;
use ndarray::{s, Array1, Array2, ArrayViewD, ArrayViewMutD, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::batchnorm::{BatchNorm, BatchStats, BnCache, Mode, RunningStats};
use crate::cell::{backward_seq, forward_seq, CellKind, CellParams, SeqCache};
use crate::RnnError;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    /// One cell per recurrent layer, bottom first.
    pub cells: Vec<CellKind>,
    pub hidden: usize,
    pub input_dim: usize,
    pub classes: usize,
    /// Batch norm on each recurrent layer's inputs.
    pub input_norm: bool,
    /// Batch norm on the final hidden state before the dense head.
    pub head_norm: bool,
}

impl ModelSpec {
    pub const DEFAULT_HIDDEN: usize = 64;

    pub fn uniform(name: &str, kind: CellKind, layers: usize, hidden: usize) -> Self {
        Self {
            name: name.into(),
            cells: vec![kind; layers],
            hidden,
            input_dim: CHANNELS,
            classes: ActivityLabel::COUNT,
            input_norm: true,
            head_norm: true,
        }
    }

    pub fn gru() -> Self {
        Self::uniform("gru", CellKind::Gru, 2, Self::DEFAULT_HIDDEN)
    }

    pub fn lstm() -> Self {
        Self::uniform("lstm", CellKind::Lstm, 2, Self::DEFAULT_HIDDEN)
    }

    /// An LSTM layer followed by a GRU layer.
    pub fn stacked() -> Self {
        Self {
            cells: vec![CellKind::Lstm, CellKind::Gru],
            ..Self::uniform("stacked", CellKind::Lstm, 2, Self::DEFAULT_HIDDEN)
        }
    }

    pub fn preset(name: &str) -> Result<Self, RnnError> {
        match name {
            "gru" => Ok(Self::gru()),
            "lstm" => Ok(Self::lstm()),
            "stacked" => Ok(Self::stacked()),
            _ => Err(RnnError::Spec(format!("unknown model preset {name:?}"))),
        }
    }

    pub fn with_hidden(mut self, hidden: usize) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn validate(&self) -> Result<(), RnnError> {
        if self.cells.is_empty() {
            return Err(RnnError::Spec("at least one recurrent layer".into()));
        }
        if self.hidden == 0 || self.input_dim == 0 || self.classes < 2 {
            return Err(RnnError::Spec(format!(
                "hidden {}, input {}, classes {}",
                self.hidden, self.input_dim, self.classes
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub norm: Option<BatchNorm>,
    pub cell: CellParams,
}

/// Every trainable tensor. Gradients and optimiser moments share this shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub layers: Vec<LayerParams>,
    pub head_norm: Option<BatchNorm>,
    /// hidden × classes
    pub head_w: Array2<f64>,
    pub head_b: Array1<f64>,
}

impl Params {
    pub fn tensors(&self) -> Vec<ArrayViewD<'_, f64>> {
        let mut out = Vec::new();
        for l in &self.layers {
            if let Some(bn) = &l.norm {
                out.push(bn.gamma.view().into_dyn());
                out.push(bn.beta.view().into_dyn());
            }
            out.push(l.cell.w.view().into_dyn());
            out.push(l.cell.u.view().into_dyn());
            out.push(l.cell.b.view().into_dyn());
        }
        if let Some(bn) = &self.head_norm {
            out.push(bn.gamma.view().into_dyn());
            out.push(bn.beta.view().into_dyn());
        }
        out.push(self.head_w.view().into_dyn());
        out.push(self.head_b.view().into_dyn());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            if let Some(bn) = &mut l.norm {
                out.push(bn.gamma.view_mut().into_dyn());
                out.push(bn.beta.view_mut().into_dyn());
            }
            out.push(l.cell.w.view_mut().into_dyn());
            out.push(l.cell.u.view_mut().into_dyn());
            out.push(l.cell.b.view_mut().into_dyn());
        }
        if let Some(bn) = &mut self.head_norm {
            out.push(bn.gamma.view_mut().into_dyn());
            out.push(bn.beta.view_mut().into_dyn());
        }
        out.push(self.head_w.view_mut().into_dyn());
        out.push(self.head_b.view_mut().into_dyn());
        out
    }

    /// Names in the same order as [`Params::tensors`].
    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            if l.norm.is_some() {
                out.push(format!("layer{i}.bn.gamma"));
                out.push(format!("layer{i}.bn.beta"));
            }
            for t in ["w", "u", "b"] {
                out.push(format!("layer{i}.{}.{t}", l.cell.kind));
            }
        }
        if self.head_norm.is_some() {
            out.push("head.bn.gamma".into());
            out.push("head.bn.beta".into());
        }
        out.push("head.w".into());
        out.push("head.b".into());
        out
    }

    pub fn zeros_like(&self) -> Params {
        let mut p = self.clone();
        for mut t in p.tensors_mut() {
            t.fill(0.0);
        }
        p
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.iter()).map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for mut t in self.tensors_mut() {
            t.mapv_inplace(|v| v * factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Batch-norm running statistics, one slot per normalised site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormState {
    pub layers: Vec<Option<RunningStats>>,
    pub head: Option<RunningStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchStatsSet {
    pub layers: Vec<Option<BatchStats>>,
    pub head: Option<BatchStats>,
}

impl NormState {
    /// Size-weighted average of per-batch statistics, replacing the running
    /// estimates. `batches` pairs each batch's statistics with its size.
    pub fn set_population(&mut self, batches: &[(BatchStatsSet, usize)]) {
        let average = |pick: &dyn Fn(&BatchStatsSet) -> Option<&BatchStats>| -> Option<RunningStats> {
            let parts: Vec<(&BatchStats, f64)> =
                batches.iter().filter_map(|(b, n)| pick(b).map(|s| (s, *n as f64))).collect();
            let total: f64 = parts.iter().map(|p| p.1).sum();
            let (first, _) = parts.first()?;
            let mut out = RunningStats {
                mean: Array1::zeros(first.mean.len()),
                var: Array1::zeros(first.var.len()),
            };
            for (s, n) in &parts {
                out.mean.scaled_add(n / total, &s.mean);
                out.var.scaled_add(n / total, &s.var);
            }
            Some(out)
        };
        for (i, slot) in self.layers.iter_mut().enumerate() {
            if slot.is_some() {
                *slot = average(&|b| b.layers[i].as_ref());
            }
        }
        if self.head.is_some() {
            self.head = average(&|b| b.head.as_ref());
        }
    }

    pub fn update(&mut self, stats: &BatchStatsSet) {
        for (r, s) in self.layers.iter_mut().zip(&stats.layers) {
            if let (Some(r), Some(s)) = (r, s) {
                r.update(s);
            }
        }
        if let (Some(r), Some(s)) = (&mut self.head, &stats.head) {
            r.update(s);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub spec: ModelSpec,
    pub params: Params,
    pub norm_state: NormState,
}

/// Time-major input: rows `t·batch .. (t+1)·batch` hold step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Array2<f64>,
    pub steps: usize,
    pub size: usize,
}

impl Batch {
    pub fn from_sequences(seqs: &[&[[f64; CHANNELS]]]) -> Result<Self, RnnError> {
        let size = seqs.len();
        if size == 0 {
            return Err(RnnError::Shape("empty batch".into()));
        }
        let steps = seqs[0].len();
        if steps == 0 || seqs.iter().any(|s| s.len() != steps) {
            return Err(RnnError::Shape("sequences must share a non-zero length".into()));
        }
        let mut x = Array2::zeros((steps * size, CHANNELS));
        for (b, seq) in seqs.iter().enumerate() {
            for (t, row) in seq.iter().enumerate() {
                x.row_mut(t * size + b).assign(&ndarray::ArrayView1::from(row));
            }
        }
        Ok(Self { x, steps, size })
    }

    pub fn from_windows(windows: &[&Window]) -> Result<Self, RnnError> {
        let seqs: Vec<&[[f64; CHANNELS]]> = windows.iter().map(|w| w.values.as_slice()).collect();
        Self::from_sequences(&seqs)
    }

    pub fn from_array(x: Array2<f64>, steps: usize, size: usize) -> Result<Self, RnnError> {
        if x.nrows() != steps * size || steps == 0 || size == 0 {
            return Err(RnnError::Shape(format!("{:?} is not {steps}×{size} rows", x.shape())));
        }
        Ok(Self { x, steps, size })
    }
}

struct LayerCache {
    bn: Option<BnCache>,
    cell_input: Array2<f64>,
    seq: SeqCache,
}

struct ForwardCache {
    layers: Vec<LayerCache>,
    head_bn: Option<BnCache>,
    head_input: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct LossAndGrads {
    pub loss: f64,
    pub grads: Params,
    pub logits: Array2<f64>,
    pub batch_stats: BatchStatsSet,
}

pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
    p
}

/// Mean softmax cross-entropy.
pub fn cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (row, &y) in logits.rows().into_iter().zip(labels) {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    total / labels.len() as f64
}

impl Model {
    /// All weights zero, batch-norm scales one: every input maps to
    /// uniform class posteriors.
    pub fn zeros(spec: &ModelSpec) -> Result<Self, RnnError> {
        spec.validate()?;
        let mut input = spec.input_dim;
        let mut layers = Vec::new();
        for &kind in &spec.cells {
            layers.push(LayerParams {
                norm: spec.input_norm.then(|| BatchNorm::new(input)),
                cell: CellParams::zeros(kind, input, spec.hidden),
            });
            input = spec.hidden;
        }
        let params = Params {
            head_norm: spec.head_norm.then(|| BatchNorm::new(spec.hidden)),
            head_w: Array2::zeros((spec.hidden, spec.classes)),
            head_b: Array1::zeros(spec.classes),
            layers,
        };
        let norm_state = NormState {
            layers: params.layers.iter().map(|l| l.norm.as_ref().map(|bn| RunningStats::new(bn.features()))).collect(),
            head: params.head_norm.as_ref().map(|bn| RunningStats::new(bn.features())),
        };
        Ok(Self {
            spec: spec.clone(),
            params,
            norm_state,
        })
    }

    /// Uniform ±1/√hidden initialisation from `seed`.
    pub fn new(spec: &ModelSpec, seed: u64) -> Result<Self, RnnError> {
        let mut model = Self::zeros(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in &mut model.params.layers {
            l.cell = CellParams::random(l.cell.kind, l.cell.input_dim(), spec.hidden, &mut rng);
        }
        let k = 1.0 / (spec.hidden as f64).sqrt();
        for v in model.params.head_w.iter_mut().chain(model.params.head_b.iter_mut()) {
            *v = rand::Rng::gen_range(&mut rng, -k..k);
        }
        Ok(model)
    }

    fn check_batch(&self, batch: &Batch) -> Result<(), RnnError> {
        if batch.x.ncols() != self.spec.input_dim {
            return Err(RnnError::Shape(format!(
                "batch has {} features, model expects {}",
                batch.x.ncols(),
                self.spec.input_dim
            )));
        }
        Ok(())
    }

    /// Logits (batch × classes). Train mode normalises with batch
    /// statistics and leaves the running statistics untouched.
    pub fn forward(&self, batch: &Batch, mode: Mode) -> Result<Array2<f64>, RnnError> {
        Ok(self.forward_with_stats(batch, mode)?.0)
    }

    /// Train-mode statistics at every normalised site for one batch.
    pub fn batch_stats(&self, batch: &Batch) -> Result<BatchStatsSet, RnnError> {
        Ok(self.forward_with_stats(batch, Mode::Train)?.1)
    }

    fn forward_with_stats(&self, batch: &Batch, mode: Mode) -> Result<(Array2<f64>, BatchStatsSet), RnnError> {
        self.check_batch(batch)?;
        let mut stats = BatchStatsSet {
            layers: Vec::with_capacity(self.params.layers.len()),
            head: None,
        };
        let mut x = batch.x.clone();
        for (l, running) in self.params.layers.iter().zip(&self.norm_state.layers) {
            let mut site = None;
            if let Some(bn) = &l.norm {
                x = match mode {
                    Mode::Train => {
                        let (y, _, st) = bn.forward_train(&x);
                        site = Some(st);
                        y
                    }
                    Mode::Infer => bn.forward_infer(&x, running.as_ref().expect("running stats per norm")),
                };
            }
            stats.layers.push(site);
            x = forward_seq(&l.cell, &x, batch.steps, batch.size, false).0;
        }
        let mut last = x.slice(s![(batch.steps - 1) * batch.size.., ..]).to_owned();
        if let Some(bn) = &self.params.head_norm {
            last = match mode {
                Mode::Train => {
                    let (y, _, st) = bn.forward_train(&last);
                    stats.head = Some(st);
                    y
                }
                Mode::Infer => bn.forward_infer(&last, self.norm_state.head.as_ref().expect("head running stats")),
            };
        }
        Ok((last.dot(&self.params.head_w) + &self.params.head_b, stats))
    }

    pub fn predict(&self, batch: &Batch) -> Result<Vec<usize>, RnnError> {
        let logits = self.forward(batch, Mode::Infer)?;
        Ok(logits
            .rows()
            .into_iter()
            .map(|r| {
                let mut best = 0;
                for (i, &v) in r.iter().enumerate() {
                    if v > r[best] {
                        best = i;
                    }
                }
                best
            })
            .collect())
    }

    /// Train-mode loss and full BPTT gradients. Does not touch the running
    /// statistics; the batch statistics are returned for the caller.
    pub fn loss_and_grads(&self, batch: &Batch, labels: &[usize], batch_id: usize) -> Result<LossAndGrads, RnnError> {
        self.check_batch(batch)?;
        if labels.len() != batch.size {
            return Err(RnnError::Shape(format!("{} labels for {} sequences", labels.len(), batch.size)));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= self.spec.classes) {
            return Err(RnnError::Shape(format!("label {bad} out of range")));
        }
        let (steps, size) = (batch.steps, batch.size);
        let mut caches = Vec::with_capacity(self.params.layers.len());
        let mut layer_stats = Vec::with_capacity(self.params.layers.len());
        let mut x = batch.x.clone();
        for l in &self.params.layers {
            let (cell_input, bn, stats) = match &l.norm {
                Some(bn) => {
                    let (y, cache, stats) = bn.forward_train(&x);
                    (y, Some(cache), Some(stats))
                }
                None => (x, None, None),
            };
            let (out, seq) = forward_seq(&l.cell, &cell_input, steps, size, true);
            caches.push(LayerCache {
                bn,
                cell_input,
                seq: seq.expect("cache requested"),
            });
            layer_stats.push(stats);
            x = out;
        }
        let last = x.slice(s![(steps - 1) * size.., ..]).to_owned();
        let (head_input, head_bn, head_stats) = match &self.params.head_norm {
            Some(bn) => {
                let (y, cache, stats) = bn.forward_train(&last);
                (y, Some(cache), Some(stats))
            }
            None => (last, None, None),
        };
        let cache = ForwardCache {
            layers: caches,
            head_bn,
            head_input,
        };
        let logits = cache.head_input.dot(&self.params.head_w) + &self.params.head_b;
        let loss = cross_entropy(&logits, labels);
        if !loss.is_finite() {
            return Err(RnnError::NonFinite { batch_id });
        }

        let mut grads = self.params.zeros_like();
        let mut dlogits = softmax_rows(&logits);
        for (mut row, &y) in dlogits.rows_mut().into_iter().zip(labels) {
            row[y] -= 1.0;
        }
        dlogits /= size as f64;
        grads.head_w = cache.head_input.t().dot(&dlogits);
        grads.head_b = dlogits.sum_axis(Axis(0));
        let mut dlast = dlogits.dot(&self.params.head_w.t());
        if let (Some(bn), Some(bc)) = (&self.params.head_norm, &cache.head_bn) {
            dlast = bn.backward(&dlast, bc, grads.head_norm.as_mut().expect("same shape"));
        }
        let mut d_out = Array2::zeros((steps * size, self.spec.hidden));
        d_out.slice_mut(s![(steps - 1) * size.., ..]).assign(&dlast);
        for (i, (l, lc)) in self.params.layers.iter().zip(&cache.layers).enumerate().rev() {
            let g = &mut grads.layers[i];
            let mut dx = backward_seq(&l.cell, &lc.cell_input, &lc.seq, &d_out, steps, size, &mut g.cell);
            if let (Some(bn), Some(bc)) = (&l.norm, &lc.bn) {
                dx = bn.backward(&dx, bc, g.norm.as_mut().expect("same shape"));
            }
            d_out = dx;
        }
        Ok(LossAndGrads {
            loss,
            grads,
            logits,
            batch_stats: BatchStatsSet {
                layers: layer_stats,
                head: head_stats,
            },
        })
    }
}
