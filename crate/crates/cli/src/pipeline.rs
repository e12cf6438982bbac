//! Batch stages shared by the subcommands.
//!
//! A dataset directory holds one sub-directory per mechanism, each with one
//! `<user>.csv` per session and, for simulated data, a `<user>.truth.csv`
//! sidecar:
//!
//! ```text
//! data/three_button/u01.csv
//! data/three_button/u01.truth.csv
//! data/touch/u01.csv
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use insitu_core::dataset::{make_windows, stratified_kfold, FoldPlan, Window, WindowConfig};
use insitu_core::mechanisms::MechanismId;
use insitu_core::simulator::{population, simulate_session, GaitParams, LabellerModel, SimulatedSession};
use insitu_core::stream::{emit_csv, parse_csv, ActivityLabel, StreamBundle, StreamMeta};
use insitu_rnn::{train, FoldModel, ModelSpec, TrainConfig, TrainHistory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::PipelineConfig;

const TRUTH_SUFFIX: &str = ".truth.csv";

/// Windows of every session recorded with one mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub mechanism: MechanismId,
    pub windows: Vec<Window>,
}

pub fn simulate(config: &PipelineConfig, mechanism: MechanismId) -> anyhow::Result<Vec<SimulatedSession>> {
    population(mechanism, config.users, config.session_s, config.seed)
        .into_iter()
        .map(|mut spec| {
            if config.noise_free {
                spec.gait = GaitParams::noise_free();
                spec.labeller = LabellerModel::perfect();
            }
            simulate_session(&spec).with_context(|| format!("simulating {} for {}", mechanism, spec.user_id))
        })
        .collect()
}

pub fn session_windows<'a>(
    bundles: impl IntoIterator<Item = &'a StreamBundle>,
    config: &WindowConfig,
) -> anyhow::Result<Vec<Window>> {
    let mut out = Vec::new();
    for b in bundles {
        out.extend(make_windows(&b.fused(), config, &b.meta.user_id, b.meta.mechanism)?);
    }
    Ok(out)
}

/// Simulates every configured mechanism and windows the sessions.
pub fn simulated_datasets(config: &PipelineConfig) -> anyhow::Result<Vec<Dataset>> {
    let window = effective_window(config);
    config
        .mechanisms
        .iter()
        .map(|&mechanism| {
            let sessions = simulate(config, mechanism)?;
            let windows = session_windows(sessions.iter().map(|s| &s.bundle), &window)?;
            Ok(Dataset { mechanism, windows })
        })
        .collect()
}

/// Noise-free runs keep only windows of a single label.
pub fn effective_window(config: &PipelineConfig) -> WindowConfig {
    if config.noise_free {
        WindowConfig {
            purity_min: 1.0,
            ..config.window
        }
    } else {
        config.window
    }
}

/// Writes `dir/<mechanism>/<user>.csv` and the truth sidecar per session.
pub fn write_sessions(dir: &Path, sessions: &[SimulatedSession]) -> anyhow::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for s in sessions {
        let sub = dir.join(s.bundle.meta.mechanism.name());
        fs::create_dir_all(&sub).with_context(|| format!("creating {}", sub.display()))?;
        let csv = sub.join(format!("{}.csv", s.bundle.meta.user_id));
        fs::write(&csv, emit_csv(&s.bundle)).with_context(|| format!("writing {}", csv.display()))?;
        let truth = sub.join(format!("{}{TRUTH_SUFFIX}", s.bundle.meta.user_id));
        fs::write(&truth, s.truth_csv()).with_context(|| format!("writing {}", truth.display()))?;
        written.push(csv);
    }
    Ok(written)
}

pub fn read_csv(path: &Path, meta: StreamMeta) -> anyhow::Result<StreamBundle> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_csv(&text, meta).with_context(|| format!("parsing {}", path.display()))
}

/// Sessions in a dataset directory grouped by mechanism, both sorted by name.
pub fn read_dataset_dir(dir: &Path, sample_rate_hz: f64) -> anyhow::Result<Vec<(MechanismId, Vec<StreamBundle>)>> {
    let mut out = Vec::new();
    for sub in sorted_entries(dir)? {
        if !sub.is_dir() {
            continue;
        }
        let name = sub.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let Ok(mechanism) = name.parse::<MechanismId>() else {
            continue;
        };
        let mut bundles = Vec::new();
        for file in sorted_entries(&sub)? {
            let fname = file.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            if !fname.ends_with(".csv") || fname.ends_with(TRUTH_SUFFIX) {
                continue;
            }
            let meta = StreamMeta {
                user_id: fname.trim_end_matches(".csv").to_string(),
                mechanism,
                sample_rate_hz,
            };
            bundles.push(read_csv(&file, meta)?);
        }
        out.push((mechanism, bundles));
    }
    if out.is_empty() {
        bail!("no mechanism directories under {}", dir.display());
    }
    Ok(out)
}

fn sorted_entries(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    entries.sort();
    Ok(entries)
}

/// Windows of a dataset directory, one [`Dataset`] per mechanism.
pub fn datasets_from_dir(dir: &Path, config: &PipelineConfig) -> anyhow::Result<Vec<Dataset>> {
    let window = effective_window(config);
    read_dataset_dir(dir, insitu_core::stream::DEFAULT_SAMPLE_RATE_HZ)?
        .into_iter()
        .filter(|(m, _)| config.mechanisms.contains(m))
        .map(|(mechanism, bundles)| {
            Ok(Dataset {
                mechanism,
                windows: session_windows(&bundles, &window)?,
            })
        })
        .collect()
}

/// Replaces every window label with an independent uniform draw.
pub fn randomise_labels(windows: &[Window], seed: u64) -> Vec<Window> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from_le_bytes(*b"relabel\0"));
    windows
        .iter()
        .map(|w| Window {
            label: ActivityLabel::ALL[rng.gen_range(0..ActivityLabel::COUNT)],
            ..w.clone()
        })
        .collect()
}

pub fn fold_plan(windows: &[Window], train: &TrainConfig) -> anyhow::Result<FoldPlan> {
    Ok(stratified_kfold(windows, train.folds, train.seed)?)
}

/// k-fold cross-validation of one spec.
pub fn cross_validate(
    windows: &[Window],
    spec: &ModelSpec,
    train_config: &TrainConfig,
    plan: &FoldPlan,
) -> anyhow::Result<(Vec<FoldModel>, TrainHistory)> {
    Ok(train(windows, spec, train_config, plan)?)
}
