use crate::StatsError;

/// Square confusion matrix, rows = truth, columns = prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub classes: usize,
    pub counts: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ConfusionMatrix {
    pub fn zeros(classes: usize) -> Self {
        Self { classes, counts: vec![vec![0; classes]; classes] }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|i| self.counts[i][i]).sum()
    }

    /// trace / total, 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.trace() as f64 / total as f64
        }
    }

    pub fn tp(&self, class: usize) -> u64 {
        self.counts[class][class]
    }

    pub fn fp(&self, class: usize) -> u64 {
        (0..self.classes).filter(|&t| t != class).map(|t| self.counts[t][class]).sum()
    }

    pub fn fn_(&self, class: usize) -> u64 {
        (0..self.classes).filter(|&p| p != class).map(|p| self.counts[class][p]).sum()
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        for (row, o) in self.counts.iter_mut().zip(&other.counts) {
            for (c, v) in row.iter_mut().zip(o) {
                *c += v;
            }
        }
    }

    pub fn macro_f1(&self) -> f64 {
        (0..self.classes).map(|c| precision_recall_f1(self, c).f1).sum::<f64>() / self.classes as f64
    }
}

pub fn confusion(preds: &[usize], truth: &[usize], classes: usize) -> Result<ConfusionMatrix, StatsError> {
    if preds.len() != truth.len() {
        return Err(StatsError::LengthMismatch(preds.len(), truth.len()));
    }
    let mut cm = ConfusionMatrix::zeros(classes);
    for (&p, &t) in preds.iter().zip(truth) {
        for label in [p, t] {
            if label >= classes {
                return Err(StatsError::LabelRange { label, classes });
            }
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Per-class precision, recall and F1; each is 0 when its denominator is 0.
pub fn precision_recall_f1(cm: &ConfusionMatrix, class: usize) -> Prf {
    let tp = cm.tp(class) as f64;
    let precision = ratio(tp, tp + cm.fp(class) as f64);
    let recall = ratio(tp, tp + cm.fn_(class) as f64);
    let f1 = ratio(2.0 * precision * recall, precision + recall);
    Prf { precision, recall, f1 }
}
