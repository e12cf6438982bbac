//! Model comparison across labelling techniques and the report built from it.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use insitu_core::mechanisms::MechanismId;
use insitu_core::stream::ActivityLabel;
use insitu_rnn::{ModelSpec, TrainConfig, TrainHistory};
use insitu_stats::report::{accuracy_table, f1_table, mcnemar_grid, omnibus_table, AccuracyRow, F1Row, OmnibusRow, Table};
use insitu_stats::{cochran_q, confusion, mcnemar, precision_recall_f1, rm_anova_f, CorrectnessMatrix, StatTestResult};
use serde::{Deserialize, Serialize};

use crate::pipeline::{cross_validate, fold_plan, Dataset};

/// Out-of-fold results of every model on one technique's windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechniqueRun {
    pub mechanism: MechanismId,
    pub truth: Vec<usize>,
    pub models: Vec<TrainHistory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareResults {
    pub alpha: f64,
    pub techniques: Vec<TechniqueRun>,
}

/// Trains every spec on every dataset with one shared fold plan per dataset.
pub fn cmd_compare(
    datasets: &[Dataset],
    specs: &[ModelSpec],
    train: &TrainConfig,
    alpha: f64,
) -> anyhow::Result<CompareResults> {
    if specs.len() < 2 {
        bail!("comparison needs at least two models, got {}", specs.len());
    }
    if datasets.is_empty() {
        bail!("comparison needs at least one dataset");
    }
    let mut techniques = Vec::with_capacity(datasets.len());
    for d in datasets {
        let plan = fold_plan(&d.windows, train).with_context(|| format!("folds for {}", d.mechanism))?;
        let mut models = Vec::with_capacity(specs.len());
        for spec in specs {
            let (_, history) =
                cross_validate(&d.windows, spec, train, &plan).with_context(|| format!("{} on {}", spec.name, d.mechanism))?;
            models.push(history);
        }
        for h in &models[1..] {
            let same = h.folds.iter().zip(&models[0].folds).all(|(a, b)| a.test_indices == b.test_indices);
            assert!(same, "fold assignment differs between models");
        }
        techniques.push(TechniqueRun {
            mechanism: d.mechanism,
            truth: d.windows.iter().map(|w| w.label.index()).collect(),
            models,
        });
    }
    Ok(CompareResults { alpha, techniques })
}

/// Omnibus and pairwise tests for one technique.
#[derive(Debug, Clone)]
pub struct TechniqueTests {
    pub cochran: StatTestResult,
    pub anova: StatTestResult,
    /// `(i, j, result)` for every model pair `i < j`.
    pub pairs: Vec<(usize, usize, StatTestResult)>,
}

impl TechniqueRun {
    pub fn names(&self) -> Vec<String> {
        self.models.iter().map(|h| h.spec.clone()).collect()
    }

    pub fn correctness(&self) -> anyhow::Result<CorrectnessMatrix> {
        let preds: Vec<Vec<usize>> = self.models.iter().map(|h| h.predictions.clone()).collect();
        Ok(CorrectnessMatrix::from_predictions(self.names(), &self.truth, &preds)?)
    }

    /// `omnibus_m` is the Bonferroni family size for Q and F.
    pub fn tests(&self, omnibus_m: usize, alpha: f64) -> anyhow::Result<TechniqueTests> {
        let m = self.correctness()?;
        let l = m.l();
        let pair_count = l * (l - 1) / 2;
        let mut pairs = Vec::with_capacity(pair_count);
        for i in 0..l {
            for j in i + 1..l {
                pairs.push((i, j, mcnemar(&m.column(i), &m.column(j))?.adjusted(pair_count, alpha)));
            }
        }
        Ok(TechniqueTests {
            cochran: cochran_q(&m)?.adjusted(omnibus_m, alpha),
            anova: rm_anova_f(&m)?.adjusted(omnibus_m, alpha),
            pairs,
        })
    }
}

/// The paper-shaped artifacts of a comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub accuracy: Table,
    pub curves: Table,
    pub f1: Table,
    pub omnibus: Table,
    /// One grid per technique, in technique order.
    pub mcnemar: Vec<(MechanismId, Table)>,
}

impl CompareResults {
    pub fn report(&self) -> anyhow::Result<CompareReport> {
        let mut acc_rows = Vec::new();
        let mut f1_rows = Vec::new();
        let mut curves = Table::new("Training curves", &["technique", "model", "epoch", "loss", "accuracy"]);
        let mut omni = Vec::new();
        let mut grids = Vec::new();
        let omnibus_m = self.techniques.len();
        let tests: Vec<TechniqueTests> = self
            .techniques
            .iter()
            .map(|t| t.tests(omnibus_m, self.alpha))
            .collect::<anyhow::Result<_>>()?;
        for (t, tests) in self.techniques.iter().zip(&tests) {
            let technique = t.mechanism.name();
            for h in &t.models {
                acc_rows.push(AccuracyRow {
                    technique,
                    model: &h.spec,
                    mean: h.mean_accuracy(),
                    std: h.std_accuracy(),
                });
                let cm = confusion(&h.predictions, &t.truth, ActivityLabel::COUNT)?;
                f1_rows.push(F1Row {
                    technique,
                    model: &h.spec,
                    f1: (0..ActivityLabel::COUNT).map(|c| precision_recall_f1(&cm, c).f1).collect(),
                });
                for (e, (loss, acc)) in h.mean_curve().iter().enumerate() {
                    curves.push(vec![
                        technique.into(),
                        h.spec.clone(),
                        (e + 1).to_string(),
                        format!("{loss:.6}"),
                        format!("{acc:.6}"),
                    ]);
                }
            }
            omni.push(OmnibusRow {
                technique,
                q: tests.cochran.statistic,
                q_p: tests.cochran.p_adjusted,
                f: tests.anova.statistic,
                f_p: tests.anova.p_adjusted,
            });
            let names = t.names();
            let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
            let pair_count = tests.pairs.len();
            let title = format!("McNemar p values, {technique} (Bonferroni m = {pair_count})");
            let grid = mcnemar_grid(&title, &refs, |i, j| {
                tests
                    .pairs
                    .iter()
                    .find(|(a, b, _)| (*a, *b) == (i, j))
                    .map(|p| p.2.p_adjusted)
                    .expect("every pair tested")
            });
            grids.push((t.mechanism, grid));
        }
        let labels: Vec<&str> = ActivityLabel::ALL.iter().map(|l| l.name()).collect();
        Ok(CompareReport {
            accuracy: accuracy_table(&acc_rows),
            curves,
            f1: f1_table(&labels, &f1_rows),
            omnibus: omnibus_table(&omni, omnibus_m),
            mcnemar: grids,
        })
    }
}

impl CompareReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in [&self.accuracy, &self.f1, &self.omnibus] {
            let _ = writeln!(out, "{}", t.to_text());
        }
        for (_, g) in &self.mcnemar {
            let _ = writeln!(out, "{}", g.to_text());
        }
        out.push_str("F is a one-way repeated-measures ANOVA on the 0/1 correctness matrix.\n");
        out
    }

    /// Writes `report.txt` and one CSV per artifact; returns the paths.
    pub fn write(&self, dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut files: Vec<(String, String)> = vec![
            ("report.txt".into(), self.to_text()),
            ("accuracy.csv".into(), self.accuracy.to_csv()),
            ("curves.csv".into(), self.curves.to_csv()),
            ("f1.csv".into(), self.f1.to_csv()),
            ("omnibus.csv".into(), self.omnibus.to_csv()),
        ];
        for (m, g) in &self.mcnemar {
            files.push((format!("mcnemar_{}.csv", m.name()), g.to_csv()));
        }
        files
            .into_iter()
            .map(|(name, text)| {
                let path = dir.join(name);
                fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
                Ok(path)
            })
            .collect()
    }
}

pub const RESULTS_FILE: &str = "results.json";

impl CompareResults {
    pub fn save(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(RESULTS_FILE);
        fs::write(&path, serde_json::to_string(self)?).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let path = if path.is_dir() { path.join(RESULTS_FILE) } else { path.to_path_buf() };
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}
