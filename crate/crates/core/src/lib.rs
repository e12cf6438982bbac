//! Data model and non-learning stages of the in-situ labelling pipeline.
//!
//! - [`stream`]: timestamped 9-DOF frames, label events, CSV, resampling and fusion.
//! - [`mechanisms`]: event-driven state machines for the physical and virtual
//!   labelling interfaces, plus labelling-rate analytics.
//! - [`golden`]: line-delimited JSON test vectors shared with UI clients.
//! - [`simulator`]: synthetic gait signals and a model of a human labeller.
//! - [`dataset`]: windowing, normalisation, stratified folds, per-user splits.

pub mod dataset;
pub mod golden;
pub mod mechanisms;
pub mod simulator;
pub mod stream;

pub use mechanisms::{InputEvent, InputKind, Led, Machine, MechanismId};
pub use stream::{ActivityLabel, LabelEvent, LabelledSample, SensorFrame, StreamBundle, StreamMeta};
