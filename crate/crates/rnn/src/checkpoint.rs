//! Model checkpoint file.
//!
//! ```text
//! INSITU-RNN <version>\n
//! <one JSON object: {"config_fingerprint", "norm", "model"}>\n
//! ```
//!
//! `model` carries the spec, every parameter tensor and the batch-norm
//! running statistics. Floats round-trip exactly.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use insitu_core::dataset::NormStats;
use serde::{Deserialize, Serialize};

use crate::model::Model;
use crate::train::FoldModel;
use crate::RnnError;

pub const CHECKPOINT_MAGIC: &str = "INSITU-RNN";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config_fingerprint: u64,
    pub norm: NormStats,
    pub model: Model,
}

impl Checkpoint {
    pub fn new(fold_model: &FoldModel, config_fingerprint: u64) -> Self {
        Self {
            config_fingerprint,
            norm: fold_model.norm,
            model: fold_model.model.clone(),
        }
    }

    pub fn into_fold_model(self) -> FoldModel {
        FoldModel {
            model: self.model,
            norm: self.norm,
        }
    }

    pub fn write_to(&self, mut out: impl Write) -> Result<(), RnnError> {
        writeln!(out, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}")?;
        serde_json::to_writer(&mut out, self).map_err(|e| RnnError::Checkpoint(e.to_string()))?;
        writeln!(out)?;
        Ok(())
    }

    pub fn read_from(input: impl Read) -> Result<Self, RnnError> {
        let mut reader = BufReader::new(input);
        let mut header = String::new();
        reader.read_line(&mut header)?;
        let mut parts = header.trim_end().split(' ');
        if parts.next() != Some(CHECKPOINT_MAGIC) {
            return Err(RnnError::Checkpoint("not a checkpoint file".into()));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| RnnError::Checkpoint(format!("bad header {:?}", header.trim_end())))?;
        if version != CHECKPOINT_VERSION {
            return Err(RnnError::Checkpoint(format!("unsupported version {version}")));
        }
        let ck: Checkpoint = serde_json::from_reader(reader).map_err(|e| RnnError::Checkpoint(e.to_string()))?;
        ck.model.spec.validate()?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<(), RnnError> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RnnError> {
        Self::read_from(std::fs::File::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;

    #[test]
    fn round_trip_is_exact() {
        let model = Model::new(&ModelSpec::stacked().with_hidden(5), 11).unwrap();
        let mut norm = NormStats::identity();
        norm.mean[3] = 0.1 + 0.2;
        let ck = Checkpoint { config_fingerprint: 42, norm, model };
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        assert!(buf.starts_with(b"INSITU-RNN 1\n"));
        assert_eq!(Checkpoint::read_from(buf.as_slice()).unwrap(), ck);
    }

    #[test]
    fn rejects_foreign_or_future_files() {
        assert!(Checkpoint::read_from(&b"{}\n"[..]).is_err());
        assert!(Checkpoint::read_from(&b"INSITU-RNN 2\n{}\n"[..]).is_err());
        assert!(Checkpoint::read_from(&b"INSITU-RNN 1\n{\n"[..]).is_err());
    }
}
