//! Classification metrics and classifier-comparison tests over binary
//! correctness matrices.

pub mod comparison;
pub mod metrics;
pub mod report;
pub mod special;

pub use comparison::{bonferroni, cochran_q, mcnemar, rm_anova_f, CorrectnessMatrix, Df, StatTestResult};
pub use metrics::{confusion, precision_recall_f1, ConfusionMatrix, Prf};
pub use special::{chi2_sf, f_sf};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("need at least {need} {what}, got {got}")]
    TooSmall { what: &'static str, need: usize, got: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelRange { label: usize, classes: usize },
    #[error("degrees of freedom must be positive, got {0}")]
    DegreesOfFreedom(f64),
    #[error("statistic is not a number")]
    NonFinite,
    #[error("ragged correctness matrix: row {row} has {got} entries, expected {expected}")]
    Ragged { row: usize, got: usize, expected: usize },
}
