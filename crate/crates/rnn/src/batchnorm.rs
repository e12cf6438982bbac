use ndarray::{Array1, Array2, Axis, Zip};
use serde::{Deserialize, Serialize};

pub const BN_EPSILON: f64 = 1e-5;
/// Share of the old running statistic kept on each update.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Learned scale and shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct BnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl RunningStats {
    pub fn new(features: usize) -> Self {
        Self {
            mean: Array1::zeros(features),
            var: Array1::ones(features),
        }
    }

    pub fn update(&mut self, batch: &BatchStats) {
        Zip::from(&mut self.mean)
            .and(&batch.mean)
            .for_each(|r, &b| *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b);
        Zip::from(&mut self.var)
            .and(&batch.var)
            .for_each(|r, &b| *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b);
    }
}

impl BatchNorm {
    pub fn new(features: usize) -> Self {
        Self {
            gamma: Array1::ones(features),
            beta: Array1::zeros(features),
        }
    }

    pub fn zeros(features: usize) -> Self {
        Self {
            gamma: Array1::zeros(features),
            beta: Array1::zeros(features),
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    /// Normalises with the statistics of `x` itself (rows are samples).
    pub fn forward_train(&self, x: &Array2<f64>) -> (Array2<f64>, BnCache, BatchStats) {
        let n = x.nrows() as f64;
        let mean = x.sum_axis(Axis(0)) / n;
        let centred = x - &mean;
        let var = centred.mapv(|v| v * v).sum_axis(Axis(0)) / n;
        let inv_std = var.mapv(|v| 1.0 / (v + BN_EPSILON).sqrt());
        let xhat = centred * &inv_std;
        let y = &xhat * &self.gamma + &self.beta;
        (y, BnCache { xhat, inv_std }, BatchStats { mean, var })
    }

    pub fn forward_infer(&self, x: &Array2<f64>, running: &RunningStats) -> Array2<f64> {
        let scale = Zip::from(&self.gamma)
            .and(&running.var)
            .map_collect(|g, v| g / (v + BN_EPSILON).sqrt());
        let shift = &self.beta - &(&running.mean * &scale);
        x * &scale + &shift
    }

    /// Returns dL/dx and accumulates dL/dγ, dL/dβ into `grads`.
    pub fn backward(&self, dy: &Array2<f64>, cache: &BnCache, grads: &mut BatchNorm) -> Array2<f64> {
        let n = dy.nrows() as f64;
        grads.beta += &dy.sum_axis(Axis(0));
        grads.gamma += &(dy * &cache.xhat).sum_axis(Axis(0));
        let dxhat = dy * &self.gamma;
        let sum_d = dxhat.sum_axis(Axis(0));
        let sum_dx = (&dxhat * &cache.xhat).sum_axis(Axis(0));
        let mut dx = dxhat * n - &sum_d - &(&cache.xhat * &sum_dx);
        dx *= &(&cache.inv_std / n);
        dx
    }
}

/// Train mode normalises with batch statistics and folds them into
/// `running`; infer mode uses `running` unchanged.
pub fn batchnorm(x: &Array2<f64>, bn: &BatchNorm, running: &mut RunningStats, mode: Mode) -> Array2<f64> {
    match mode {
        Mode::Train => {
            let (y, _, stats) = bn.forward_train(x);
            running.update(&stats);
            y
        }
        Mode::Infer => bn.forward_infer(x, running),
    }
}
